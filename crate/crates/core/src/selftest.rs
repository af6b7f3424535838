//! Fast oracle and finite-difference checks runnable from the command line.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::divergence::{estimate_volume, f_prime, f_value, DivergenceKind};
use crate::env::{label_modes, Env, EnvKind, ShapeKind};
use crate::kde::Kde;
use crate::models::{AdamState, Checkpoint, Mlp, NetRecord, RngState};
use crate::replay::{BalancedMemory, Experience};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Suite = fn() -> Result<String, String>;

const SUITES: [(&str, Suite); 8] = [
    ("divergence-exactness", divergence_exactness),
    ("kde-normalization", kde_normalization),
    ("kde-support-gradients", kde_support_gradients),
    ("mlp-gradients", mlp_gradients),
    ("volume-estimator", volume_estimator),
    ("replay-balance", replay_balance),
    ("grid-oracle", grid_oracle),
    ("checkpoint-round-trip", checkpoint_round_trip),
];

pub fn run_all() -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let r = f();
            SuiteResult {
                name,
                passed: r.is_ok(),
                detail: r.unwrap_or_else(|e| e),
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn divergence_exactness() -> Result<String, String> {
    for (kind, d1) in [(DivergenceKind::Js, 0.0), (DivergenceKind::Fkl, -1.0), (DivergenceKind::Rkl, 1.0)] {
        let f1 = f_value(kind, 1.0).map_err(|e| e.to_string())?;
        let fp = f_prime(kind, 1.0).map_err(|e| e.to_string())?;
        check(f1.abs() <= f64::EPSILON, || format!("{kind}: f(1) = {f1}"))?;
        check((fp - d1).abs() <= f64::EPSILON, || format!("{kind}: f'(1) = {fp}"))?;
    }
    Ok("f(1) = 0 and f'(1) in {0, -1, 1}".into())
}

fn kde_normalization() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sup: Vec<f64> = (0..16).map(|_| rng.random_range(-0.5..0.5)).collect();
    let kde = Kde::new(sup, 2, vec![0.1, 0.15]).map_err(|e| e.to_string())?;
    let (lo, hi, n) = (-1.5, 1.5, 300);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let q = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
            total += kde.eval(&q).map_err(|e| e.to_string())? * h * h;
        }
    }
    check((total - 1.0).abs() <= 0.01, || format!("integral {total}"))?;
    Ok(format!("2-D integral {total:.5}"))
}

fn kde_support_gradients() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(2..8);
        let sup: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.3..0.8)).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kde = Kde::new(sup.clone(), dim, bw.clone()).map_err(|e| e.to_string())?;
        let g = kde.grad_supports(&q).map_err(|e| e.to_string())?;
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        for k in 0..sup.len() {
            let h = 1e-6;
            let eval = |delta: f64| {
                let mut s = sup.clone();
                s[k] += delta;
                Kde::new(s, dim, bw.clone()).and_then(|k| k.log_eval(&q))
            };
            let fd = (eval(h).map_err(|e| e.to_string())? - eval(-h).map_err(|e| e.to_string())?) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / scale);
        }
    }
    check(worst <= 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn mlp_gradients() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Mlp::new(&[3, 6, 5, 2], &mut rng);
    let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
    let up = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
    let loss = |net: &Mlp| (net.forward(x.view()) * &up).sum();
    let (_, tape) = net.forward_tape(x.clone());
    let (grads, _) = net.backward(&tape, up.view());
    let flat = grads.flat();
    let mut worst: f64 = 0.0;
    for (i, &g) in flat.iter().enumerate() {
        let h = 1e-6;
        let orig = *net.param_mut(i);
        *net.param_mut(i) = orig + h;
        let lp = loss(&net);
        *net.param_mut(i) = orig - h;
        let lm = loss(&net);
        *net.param_mut(i) = orig;
        worst = worst.max(((lp - lm) / (2.0 * h) - g).abs() / (1.0 + g.abs()));
    }
    check(worst <= 1e-6, || format!("max error {worst:e}"))?;
    Ok(format!("{} parameters, max error {worst:.2e}", flat.len()))
}

fn volume_estimator() -> Result<String, String> {
    // Uniform proposal over [-1, 1] with exact indicator scores.
    let env = Env::new(EnvKind::Bimodal1d);
    let truth = 2.0 * env.analytic_feasible_fraction().ok_or("no analytic volume")?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let state = env.canonical_state(ShapeKind::H);
    let m = 200_000;
    let mut scores = Vec::with_capacity(m);
    for _ in 0..m {
        let a = rng.random_range(-1.0..1.0);
        scores.push(if env.evaluate(&state, &[a]) { 1.0 } else { 0.0 });
    }
    let v = estimate_volume(&scores, &vec![0.5; m], 1e-8).map_err(|e| e.to_string())?;
    check((v.value - truth).abs() <= 0.01 * truth, || format!("volume {} vs {truth}", v.value))?;
    Ok(format!("volume {:.4} vs {truth:.4}", v.value))
}

fn replay_balance() -> Result<String, String> {
    let env = Env::new(EnvKind::Bimodal1d);
    let mut mem = BalancedMemory::new(500, 500);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    mem.prefill(&env, 400, 10_000, &mut rng).map_err(|e| e.to_string())?;
    for _ in 0..10_000 {
        let b = mem.sample_balanced(32, &mut rng).map_err(|e| e.to_string())?;
        let pos = b.iter().filter(|e: &&&Experience| e.outcome).count();
        check(pos == 16, || format!("batch with {pos} positives"))?;
    }
    Ok("10000 batches of 16/16".into())
}

fn grid_oracle() -> Result<String, String> {
    let env = Env::new(EnvKind::Grasp2d);
    let grid = env.feasible_grid(&env.canonical_state(ShapeKind::H), [64, 64, 32]);
    let modes = label_modes(&grid).count;
    check(modes == 5, || format!("canonical H has {modes} modes"))?;
    Ok(format!("canonical H: {modes} modes"))
}

fn checkpoint_round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = Mlp::new(&[4, 8, 3], &mut rng);
    let adam = AdamState::new(&net);
    let ck = Checkpoint {
        config_text: "seed = 6\n".into(),
        step: 9,
        rng: RngState {
            seed: [6; 32],
            stream: 0,
            word_pos: 12,
        },
        nets: vec![NetRecord {
            name: "actor".into(),
            net,
            adam,
        }],
    };
    let bytes = ck.encode();
    let back = Checkpoint::decode(&bytes).map_err(|e| e.to_string())?;
    check(back == ck, || "decoded checkpoint differs".into())?;
    let mut bad = bytes.clone();
    bad[bytes.len() / 3] ^= 0x40;
    check(Checkpoint::decode(&bad).is_err(), || "corruption not detected".into())?;
    Ok(format!("{} bytes", bytes.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
