use super::mlp::{Mlp, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. `t` is the step
/// number starting at 1.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}

/// First and second moments for every parameter of an `Mlp`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpGrads,
    pub v: MlpGrads,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads, cfg: &AdamConfig) {
        self.t += 1;
        let t = self.t;
        let layers = net.layers_mut();
        for (l, layer) in layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.m.layers[l];
            let v = &mut self.v.layers[l];
            adam_step(
                layer.w.as_slice_mut().expect("contiguous weights"),
                g.w.as_slice().expect("contiguous grads"),
                m.w.as_slice_mut().expect("contiguous moments"),
                v.w.as_slice_mut().expect("contiguous moments"),
                t,
                cfg,
            );
            adam_step(
                layer.b.as_slice_mut().expect("contiguous biases"),
                g.b.as_slice().expect("contiguous grads"),
                m.b.as_slice_mut().expect("contiguous moments"),
                v.b.as_slice_mut().expect("contiguous moments"),
                t,
                cfg,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let cfg = AdamConfig::with_lr(0.01);
        let mut p = [1.0, -2.0, 0.5];
        let g = [3.0, -0.2, 0.0];
        let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
        adam_step(&mut p, &g, &mut m, &mut v, 1, &cfg);
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-8);
        assert!((p[1] - (-2.0 + 0.01)).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let cfg = AdamConfig::with_lr(0.1);
        let mut p = [0.3; 4];
        let (mut m, mut v) = ([0.0; 4], [0.0; 4]);
        for t in 1..10 {
            adam_step(&mut p, &[0.0; 4], &mut m, &mut v, t, &cfg);
        }
        assert_eq!(p, [0.3; 4]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // minimize (x - 3)^2 + 2 (y + 1)^2
        let cfg = AdamConfig::with_lr(0.05);
        let mut p = [0.0, 0.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        let mut steps = 0;
        for t in 1..=5000u64 {
            let g = [2.0 * (p[0] - 3.0), 4.0 * (p[1] + 1.0)];
            adam_step(&mut p, &g, &mut m, &mut v, t, &cfg);
            steps = t;
            if (p[0] - 3.0).abs() < 1e-6 && (p[1] + 1.0).abs() < 1e-6 {
                break;
            }
        }
        assert!(steps < 5000, "did not converge: {p:?}");
    }
}
