//! Gaussian kernel density estimation with a diagonal bandwidth.
//!
//! Points are stored flat and row-major: point `i` occupies
//! `[i * dim, (i + 1) * dim)`. Kernels are never truncated, and every
//! log-density goes through log-sum-exp so far-away queries stay finite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// A Gaussian KDE: `q(a) = (1/N) sum_i k_sigma(a - a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    supports: Vec<f64>,
    dim: usize,
    bandwidth: Vec<f64>,
    inv_var: Vec<f64>,
    // log of the kernel normalizer plus log(1/N)
    log_scale: f64,
}

impl Kde {
    pub fn new(supports: Vec<f64>, dim: usize, bandwidth: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("kde dimension"));
        }
        if bandwidth.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bandwidth.len(),
            });
        }
        if bandwidth.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidBandwidth);
        }
        if supports.is_empty() {
            return Err(Error::Empty("kde supports"));
        }
        if supports.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: supports.len() % dim,
            });
        }
        let n = supports.len() / dim;
        let inv_var = bandwidth.iter().map(|s| 1.0 / (s * s)).collect();
        let log_det: f64 = bandwidth.iter().map(|s| s.ln()).sum();
        let log_scale = -0.5 * dim as f64 * LOG_2PI - log_det - (n as f64).ln();
        Ok(Self {
            supports,
            dim,
            bandwidth,
            inv_var,
            log_scale,
        })
    }

    /// Builds a KDE from a slice of equally sized points.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P], bandwidth: Vec<f64>) -> Result<Self> {
        let dim = bandwidth.len();
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        Self::new(flat, dim, bandwidth)
    }

    /// Same supports, different bandwidth (used for the proposal density).
    pub fn with_bandwidth(&self, bandwidth: Vec<f64>) -> Result<Self> {
        Self::new(self.supports.clone(), self.dim, bandwidth)
    }

    pub fn len(&self) -> usize {
        self.supports.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn supports(&self) -> &[f64] {
        &self.supports
    }

    pub fn support(&self, i: usize) -> &[f64] {
        &self.supports[i * self.dim..(i + 1) * self.dim]
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    /// Per-support exponent `-0.5 * sum_d (q_d - a_id)^2 / s_d^2` into `out`,
    /// returning the maximum.
    fn exponents(&self, query: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (e, a) in out.iter_mut().zip(self.supports.chunks_exact(self.dim)) {
            let mut acc = 0.0;
            for d in 0..self.dim {
                let diff = query[d] - a[d];
                acc += diff * diff * self.inv_var[d];
            }
            *e = -0.5 * acc;
            if *e > max {
                max = *e;
            }
        }
        max
    }

    fn log_eval_with(&self, query: &[f64], scratch: &mut [f64]) -> f64 {
        let max = self.exponents(query, scratch);
        let sum: f64 = scratch.iter().map(|e| (e - max).exp()).sum();
        self.log_scale + max + sum.ln()
    }

    pub fn log_eval(&self, query: &[f64]) -> Result<f64> {
        self.check_query(query)?;
        let mut scratch = vec![0.0; self.len()];
        Ok(self.log_eval_with(query, &mut scratch))
    }

    pub fn eval(&self, query: &[f64]) -> Result<f64> {
        Ok(self.log_eval(query)?.exp())
    }

    /// Log-density at each of the flat, row-major `queries`.
    pub fn log_eval_many(&self, queries: &[f64]) -> Result<Vec<f64>> {
        if queries.len() % self.dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: queries.len() % self.dim,
            });
        }
        let mut scratch = vec![0.0; self.len()];
        Ok(queries
            .chunks_exact(self.dim)
            .map(|q| self.log_eval_with(q, &mut scratch))
            .collect())
    }

    /// Draws `m` perturbed copies of every support: support `i` owns the
    /// output rows `[m * i, m * (i + 1))`. Noise uses this model's bandwidth
    /// and is drawn support by support, copy by copy, axis by axis.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::Empty("samples per support"));
        }
        let mut out = Vec::with_capacity(self.supports.len() * m);
        for a in self.supports.chunks_exact(self.dim) {
            for _ in 0..m {
                for d in 0..self.dim {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(a[d] + self.bandwidth[d] * z);
                }
            }
        }
        Ok(out)
    }

    /// `d log q(query) / d a_i` for every support, flat `N x D`.
    /// The query is held constant.
    pub fn grad_supports(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.check_query(query)?;
        let mut out = vec![0.0; self.supports.len()];
        let mut scratch = vec![0.0; self.len()];
        self.accumulate_support_grad(query, 1.0, &mut scratch, &mut out);
        Ok(out)
    }

    /// `d log q(query) / d query`, holding the supports constant.
    pub fn grad_query(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.check_query(query)?;
        let mut out = vec![0.0; self.dim];
        let mut support_grad = vec![0.0; self.supports.len()];
        let mut scratch = vec![0.0; self.len()];
        self.accumulate_support_grad(query, 1.0, &mut scratch, &mut support_grad);
        // The kernel depends on (query - a_i) only, so the query gradient is
        // minus the sum of the support gradients.
        for g in support_grad.chunks_exact(self.dim) {
            for d in 0..self.dim {
                out[d] -= g[d];
            }
        }
        Ok(out)
    }

    /// Adds `coeff * d log q(query) / d a_i` to `out` for every support.
    fn accumulate_support_grad(
        &self,
        query: &[f64],
        coeff: f64,
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        let max = self.exponents(query, scratch);
        let mut total = 0.0;
        for e in scratch.iter_mut() {
            *e = (*e - max).exp();
            total += *e;
        }
        let scale = coeff / total;
        for ((resp, a), g) in scratch
            .iter()
            .zip(self.supports.chunks_exact(self.dim))
            .zip(out.chunks_exact_mut(self.dim))
        {
            let r = resp * scale;
            for d in 0..self.dim {
                g[d] += r * (query[d] - a[d]) * self.inv_var[d];
            }
        }
    }

    /// `sum_j coeffs[j] * d log q(queries[j]) / d a_i`, flat `N x D`.
    pub fn weighted_support_grads(&self, queries: &[f64], coeffs: &[f64]) -> Result<Vec<f64>> {
        if queries.len() != coeffs.len() * self.dim {
            return Err(Error::DimensionMismatch {
                expected: coeffs.len() * self.dim,
                got: queries.len(),
            });
        }
        let mut out = vec![0.0; self.supports.len()];
        let mut scratch = vec![0.0; self.len()];
        for (q, &c) in queries.chunks_exact(self.dim).zip(coeffs) {
            if c != 0.0 {
                self.accumulate_support_grad(q, c, &mut scratch, &mut out);
            }
        }
        Ok(out)
    }
}

/// Densities of a KDE and of its widened copy (every bandwidth entry
/// multiplied by `scale`) at the same queries, computed from one
/// squared-distance pass. Keeps the narrow model's responsibilities so the
/// support gradient needs no second pass.
#[derive(Debug, Clone)]
pub struct PairedEval {
    pub log_narrow: Vec<f64>,
    pub log_wide: Vec<f64>,
    // row j: normalized responsibilities of every support for query j
    resp: Vec<f64>,
    n: usize,
}

impl Kde {
    pub fn paired_eval(&self, queries: &[f64], scale: f64) -> Result<PairedEval> {
        if queries.len() % self.dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: queries.len() % self.dim,
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidBandwidth);
        }
        let n = self.len();
        let m = queries.len() / self.dim;
        let inv_s2 = 1.0 / (scale * scale);
        let wide_log_scale = self.log_scale - self.dim as f64 * scale.ln();
        // For an integral scale^2 the narrow kernel is a power of the wide one,
        // which saves one exp per (query, support) pair.
        let s2 = scale * scale;
        let int_power = (s2.round() == s2 && (1.0..=64.0).contains(&s2)).then_some(s2 as u32);
        let mut resp = vec![0.0; m * n];
        let mut log_narrow = Vec::with_capacity(m);
        let mut log_wide = Vec::with_capacity(m);
        for (q, row) in queries.chunks_exact(self.dim).zip(resp.chunks_exact_mut(n)) {
            let max = self.exponents(q, row);
            let (mut sn, mut sw) = (0.0, 0.0);
            let max_w = max * inv_s2;
            match int_power {
                Some(k) => {
                    for e in row.iter_mut() {
                        let w = ((*e - max) * inv_s2).exp();
                        sw += w;
                        *e = int_pow(w, k);
                        sn += *e;
                    }
                }
                None => {
                    for e in row.iter_mut() {
                        sw += (*e * inv_s2 - max_w).exp();
                        *e = (*e - max).exp();
                        sn += *e;
                    }
                }
            }
            let inv = 1.0 / sn;
            row.iter_mut().for_each(|e| *e *= inv);
            log_narrow.push(self.log_scale + max + sn.ln());
            log_wide.push(wide_log_scale + max_w + sw.ln());
        }
        Ok(PairedEval {
            log_narrow,
            log_wide,
            resp,
            n,
        })
    }
}

/// `x^k` by square-and-multiply; bit-reproducible unlike `powi`.
#[inline]
fn int_pow(mut x: f64, mut k: u32) -> f64 {
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= x;
        }
        x *= x;
        k >>= 1;
    }
    acc
}

impl PairedEval {
    /// `sum_j coeffs[j] * d log q(queries[j]) / d a_i` under the narrow
    /// model, flat `N x D`. `kde` and `queries` must be the ones passed to
    /// `paired_eval`.
    pub fn weighted_support_grads(&self, kde: &Kde, queries: &[f64], coeffs: &[f64]) -> Result<Vec<f64>> {
        let dim = kde.dim;
        if kde.len() != self.n || queries.len() != coeffs.len() * dim || coeffs.len() != self.log_narrow.len() {
            return Err(Error::DimensionMismatch {
                expected: self.log_narrow.len() * dim,
                got: queries.len(),
            });
        }
        let mut out = vec![0.0; self.n * dim];
        for ((q, &c), row) in queries.chunks_exact(dim).zip(coeffs).zip(self.resp.chunks_exact(self.n)) {
            if c == 0.0 {
                continue;
            }
            for ((r, a), g) in row.iter().zip(kde.supports.chunks_exact(dim)).zip(out.chunks_exact_mut(dim)) {
                let r = r * c;
                for d in 0..dim {
                    g[d] += r * (q[d] - a[d]) * kde.inv_var[d];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PEAK: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn single_support_peak() {
        let kde = Kde::new(vec![0.0], 1, vec![1.0]).unwrap();
        assert!((kde.eval(&[0.0]).unwrap() - PEAK).abs() < 1e-15);
        assert!((kde.log_eval(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-14);
    }

    #[test]
    fn symmetric_mixture_midpoint() {
        let kde = Kde::new(vec![-1.0, 1.0], 1, vec![1.0]).unwrap();
        let expected = PEAK * (-0.5f64).exp();
        assert!((kde.eval(&[0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.24197).abs() < 1e-5);
    }

    #[test]
    fn far_tail_is_finite() {
        let kde = Kde::new(vec![0.0], 1, vec![1.0]).unwrap();
        let lp = kde.log_eval(&[40.0]).unwrap();
        assert!(lp.is_finite());
        assert!((lp - (-0.918_938_533_204_672_7 - 800.0)).abs() < 1e-9);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Kde::new(vec![0.0], 1, vec![0.0]),
            Err(Error::InvalidBandwidth)
        ));
        assert!(matches!(
            Kde::new(vec![0.0], 1, vec![-1.0]),
            Err(Error::InvalidBandwidth)
        ));
        assert!(Kde::new(vec![], 1, vec![1.0]).is_err());
        let kde = Kde::new(vec![0.0, 0.0], 2, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            kde.eval(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(kde.sample(0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn sample_layout() {
        let kde = Kde::new(vec![0.0, 10.0, 20.0], 1, vec![1e-12]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = kde.sample(2, &mut rng).unwrap();
        assert_eq!(s.len(), 6);
        for (j, x) in s.iter().enumerate() {
            assert!((x - kde.support(j / 2)[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn grad_zero_at_single_support() {
        let kde = Kde::new(vec![0.3, -0.2], 2, vec![0.5, 0.1]).unwrap();
        let g = kde.grad_supports(&[0.3, -0.2]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn grad_midway_opposite() {
        let kde = Kde::new(vec![-1.0, 1.0], 1, vec![0.7]).unwrap();
        let g = kde.grad_supports(&[0.0]).unwrap();
        assert!((g[0] + g[1]).abs() < 1e-15);
        assert!(g[0] != 0.0);
    }

    #[test]
    fn query_grad_is_negative_support_sum() {
        let kde = Kde::new(vec![0.1, 0.5, -0.4, 0.2], 2, vec![0.3, 0.2]).unwrap();
        let q = [0.05, 0.3];
        let h = 1e-6;
        let g = kde.grad_query(&q).unwrap();
        for d in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[d] += h;
            qm[d] -= h;
            let fd = (kde.log_eval(&qp).unwrap() - kde.log_eval(&qm).unwrap()) / (2.0 * h);
            assert!((fd - g[d]).abs() < 1e-7);
        }
    }

    #[test]
    fn paired_eval_matches_separate_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sup: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let kde = Kde::new(sup, 3, vec![0.05, 0.1, 0.2]).unwrap();
        let wide = kde.with_bandwidth(vec![0.15, 0.3, 0.6]).unwrap();
        let q: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        let coeffs: Vec<f64> = (0..20).map(|i| (i as f64 - 7.0) * 0.1).collect();
        let p = kde.paired_eval(&q, 3.0).unwrap();
        let ln = kde.log_eval_many(&q).unwrap();
        let lw = wide.log_eval_many(&q).unwrap();
        for j in 0..20 {
            assert!((p.log_narrow[j] - ln[j]).abs() < 1e-10);
            assert!((p.log_wide[j] - lw[j]).abs() < 1e-10);
        }
        let g1 = p.weighted_support_grads(&kde, &q, &coeffs).unwrap();
        let g2 = kde.weighted_support_grads(&q, &coeffs).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        // non-integral squared scale takes the two-exp path
        let p = kde.paired_eval(&q, 2.5).unwrap();
        let wide = kde.with_bandwidth(vec![0.125, 0.25, 0.5]).unwrap();
        let lw = wide.log_eval_many(&q).unwrap();
        for j in 0..20 {
            assert!((p.log_narrow[j] - ln[j]).abs() < 1e-10);
            assert!((p.log_wide[j] - lw[j]).abs() < 1e-10);
        }
    }
}
