//! f-divergences, the importance-sampled volume estimate, and the per-sample
//! weights of the score-function actor gradient.
//!
//! The actor gradient for the density-ratio losses is
//! `(1/M) sum_j w_j grad log q(a*_j)` where `a*_j` are drawn from the wide
//! proposal KDE `q'`. The weights below already include the Lagrangian
//! constant of each loss (JS 0, FKL 0, RKL -1).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivergenceKind {
    Js,
    Fkl,
    Rkl,
    Gan,
    Me,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 5] = [Self::Js, Self::Fkl, Self::Rkl, Self::Gan, Self::Me];

    /// Lagrangian constant folded into the weights; `None` for GAN and ME.
    pub fn lambda(self) -> Option<f64> {
        match self {
            Self::Js | Self::Fkl => Some(0.0),
            Self::Rkl => Some(-1.0),
            Self::Gan | Self::Me => None,
        }
    }

    /// True for the kinds trained through density ratios.
    pub fn is_f_divergence(self) -> bool {
        self.lambda().is_some()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Js => "js",
            Self::Fkl => "fkl",
            Self::Rkl => "rkl",
            Self::Gan => "gan",
            Self::Me => "me",
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "js" => Ok(Self::Js),
            "fkl" => Ok(Self::Fkl),
            "rkl" => Ok(Self::Rkl),
            "gan" => Ok(Self::Gan),
            "me" => Ok(Self::Me),
            other => Err(Error::Config(format!("unknown divergence '{other}'"))),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("f-divergence argument must be > 0, got {t}")))
    }
}

/// The convex generator `f(t)` with `t = q / p`.
pub fn f_value(kind: DivergenceKind, t: f64) -> Result<f64> {
    check_t(t)?;
    match kind {
        DivergenceKind::Js => Ok(0.5 * ((t + 1.0) * (2.0 / (t + 1.0)).ln() + t * t.ln())),
        DivergenceKind::Fkl => Ok(-t.ln()),
        DivergenceKind::Rkl => Ok(t * t.ln()),
        k => Err(Error::UnsupportedKind(k.to_string())),
    }
}

pub fn f_prime(kind: DivergenceKind, t: f64) -> Result<f64> {
    check_t(t)?;
    match kind {
        DivergenceKind::Js => Ok(0.5 * (2.0 * t / (t + 1.0)).ln()),
        DivergenceKind::Fkl => Ok(-1.0 / t),
        DivergenceKind::Rkl => Ok(t.ln() + 1.0),
        k => Err(Error::UnsupportedKind(k.to_string())),
    }
}

/// Lower clamps for the volume and the target density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamps {
    pub eps_v: f64,
    pub eps_p: f64,
}

impl Default for Clamps {
    fn default() -> Self {
        Self {
            eps_v: 1e-8,
            eps_p: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    pub degenerate: bool,
}

/// `V = (1/M) sum_j score_j / q'_j`, floored at `eps_v`.
pub fn estimate_volume(scores: &[f64], q_prop: &[f64], eps_v: f64) -> Result<VolumeEstimate> {
    if scores.is_empty() {
        return Err(Error::Empty("volume batch"));
    }
    if scores.len() != q_prop.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: q_prop.len(),
        });
    }
    let mut acc = 0.0;
    for (&s, &q) in scores.iter().zip(q_prop) {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("proposal density must be > 0, got {q}")));
        }
        acc += s / q;
    }
    let value = acc / scores.len() as f64;
    if value < eps_v || !value.is_finite() {
        Ok(VolumeEstimate {
            value: eps_v,
            degenerate: true,
        })
    } else {
        Ok(VolumeEstimate {
            value,
            degenerate: false,
        })
    }
}

/// `p = score / V`, clamped below by `eps_p`.
pub fn target_density(score: f64, volume: f64, eps_p: f64) -> f64 {
    (score / volume).max(eps_p)
}

/// One state's resampled batch: densities and scores at the `M` resampled
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// Resampled points, flat row-major `M x dim`.
    pub points: Vec<f64>,
    pub dim: usize,
    /// Density under the narrow KDE.
    pub q_hat: Vec<f64>,
    /// Density under the proposal KDE the points were drawn from.
    pub q_prop: Vec<f64>,
    /// Feasibility score in [0, 1] (already radius-weighted).
    pub score: Vec<f64>,
    /// Normalized, clamped target density.
    pub p_hat: Vec<f64>,
    pub volume: VolumeEstimate,
}

impl SampleBatch {
    /// Estimates the volume and the target density from raw scores.
    pub fn from_scores(
        points: Vec<f64>,
        dim: usize,
        q_hat: Vec<f64>,
        q_prop: Vec<f64>,
        score: Vec<f64>,
        clamps: Clamps,
    ) -> Result<Self> {
        let m = score.len();
        if q_hat.len() != m || q_prop.len() != m || points.len() != m * dim {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: q_hat.len().min(q_prop.len()),
            });
        }
        let volume = estimate_volume(&score, &q_prop, clamps.eps_v)?;
        let p_hat = score
            .iter()
            .map(|&s| target_density(s, volume.value, clamps.eps_p))
            .collect();
        Ok(Self {
            points,
            dim,
            q_hat,
            q_prop,
            score,
            p_hat,
            volume,
        })
    }

    pub fn len(&self) -> usize {
        self.q_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_hat.is_empty()
    }

    fn check(&self) -> Result<()> {
        let m = self.q_hat.len();
        if m == 0 {
            return Err(Error::Empty("sample batch"));
        }
        if self.q_prop.len() != m || self.p_hat.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.q_prop.len().min(self.p_hat.len()),
            });
        }
        for (&q, &qp) in self.q_hat.iter().zip(&self.q_prop) {
            if !(q > 0.0) || !(qp > 0.0) {
                return Err(Error::Domain(format!(
                    "densities must be > 0 (q_hat {q}, q_prop {qp})"
                )));
            }
        }
        Ok(())
    }
}

/// Per-sample weights `w_j` of the actor gradient
/// `(1/M) sum_j w_j grad log q(a*_j)`.
pub fn grad_weights(kind: DivergenceKind, batch: &SampleBatch) -> Result<Vec<f64>> {
    batch.check()?;
    let rows = batch.q_hat.iter().zip(&batch.q_prop).zip(&batch.p_hat);
    match kind {
        DivergenceKind::Js => Ok(rows
            .map(|((&q, &qp), &p)| (q / qp) * 0.5 * (2.0 * q / (p + q)).ln())
            .collect()),
        DivergenceKind::Fkl => Ok(rows.map(|((_, &qp), &p)| -p / qp).collect()),
        DivergenceKind::Rkl => Ok(rows.map(|((&q, &qp), &p)| (q / qp) * (q / p).ln()).collect()),
        k => Err(Error::UnsupportedKind(k.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Importance-sampled `(1/M) sum_j (p_j / q'_j) f(q_j / p_j)`, for logging.
/// Degenerate batches report `0.0` with the flag set.
pub fn estimate_divergence(kind: DivergenceKind, batch: &SampleBatch) -> Result<DivergenceEstimate> {
    batch.check()?;
    if batch.volume.degenerate {
        f_value(kind, 1.0)?;
        return Ok(DivergenceEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let mut acc = 0.0;
    for ((&q, &qp), &p) in batch.q_hat.iter().zip(&batch.q_prop).zip(&batch.p_hat) {
        acc += p / qp * f_value(kind, q / p)?;
    }
    Ok(DivergenceEstimate {
        value: acc / batch.len() as f64,
        degenerate: false,
    })
}
