//! Training configuration, profiles, and the flat `key = value` format.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::divergence::{Clamps, DivergenceKind};
use crate::env::{Env, EnvKind, ShapeKind};
use crate::error::{Error, Result};
use crate::models::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Reduced sizes that fit a single desktop core.
    Desk,
    /// Full-size hyperparameters.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Paper => "paper",
        }
    }
}

/// Every hyperparameter of a training run. Field names in the text format
/// are listed in `KEYS`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub profile: Profile,
    pub env: EnvKind,
    pub divergence: DivergenceKind,
    /// KDE supports per state.
    pub n: usize,
    /// Resampled points per state, `m * n`.
    pub big_m: usize,
    /// Resampled points per support.
    pub m: usize,
    /// Proposals per interaction.
    pub u: usize,
    /// States per actor step.
    pub k: usize,
    /// Critic batch size.
    pub l: usize,
    pub sigma: Vec<f64>,
    /// Proposal bandwidth multiplier, `sigma' = sigma_scale * sigma`.
    pub sigma_scale: f64,
    pub memory_positive: usize,
    pub memory_negative: usize,
    pub interaction_steps: usize,
    pub critic_steps: usize,
    pub actor_steps: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub eps_v: f64,
    pub eps_p: f64,
    pub eps_c: f64,
    pub eps_r: f64,
    pub prefill: usize,
    /// Extra prefill draws allowed when a store is still empty.
    pub prefill_budget: usize,
    pub action_opt: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub shapes: Vec<ShapeKind>,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

pub const KEYS: [&str; 35] = [
    "profile",
    "env",
    "divergence",
    "N",
    "M",
    "m",
    "U",
    "K",
    "L",
    "sigma",
    "sigma_scale",
    "memory_positive",
    "memory_negative",
    "interaction_steps",
    "critic_steps",
    "actor_steps",
    "total_steps",
    "seed",
    "actor_lr",
    "critic_lr",
    "beta1",
    "beta2",
    "adam_eps",
    "eps_v",
    "eps_p",
    "eps_c",
    "eps_r",
    "prefill",
    "prefill_budget",
    "action_opt",
    "latent_dim",
    "hidden",
    "shapes",
    "checkpoint_every",
    "sigma_prime",
];

impl TrainConfig {
    pub fn new(profile: Profile, env: EnvKind, divergence: DivergenceKind) -> Self {
        let sigma = Env::new(env).default_bandwidth();
        let base = Self {
            profile,
            env,
            divergence,
            n: 128,
            big_m: 256,
            m: 2,
            u: 64,
            k: 16,
            l: 32,
            sigma,
            sigma_scale: 3.0,
            memory_positive: 160_000,
            memory_negative: 160_000,
            interaction_steps: 1,
            critic_steps: 2,
            actor_steps: 1,
            total_steps: 1_000_000,
            seed: 0,
            actor_lr: 5e-5,
            critic_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            eps_v: 1e-8,
            eps_p: 1e-12,
            eps_c: 1e-6,
            eps_r: 1e-6,
            prefill: 80_000,
            prefill_budget: 1_000_000,
            action_opt: 0.1,
            latent_dim: 8,
            hidden: vec![128, 128, 128],
            shapes: ShapeKind::TRAINING.to_vec(),
            checkpoint_every: 0,
        };
        match profile {
            Profile::Paper => base,
            Profile::Desk => Self {
                n: 64,
                big_m: 128,
                u: 16,
                k: 8,
                memory_positive: 20_000,
                memory_negative: 20_000,
                total_steps: 20_000,
                prefill: 4_000,
                // Shorter runs need faster learning and a narrower net to fit
                // the desk time budget.
                actor_lr: 5e-4,
                critic_lr: 1e-3,
                hidden: vec![64; 3],
                ..base
            },
        }
    }

    /// Builds a config from layered `key = value` overrides applied in order
    /// (later layers win). `profile`, `env` and `divergence` are resolved
    /// first so that their defaults sit underneath every layer.
    pub fn from_layers(layers: &[Vec<(String, String)>]) -> Result<Self> {
        let lookup = |key: &str| {
            layers
                .iter()
                .rev()
                .find_map(|l| l.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.clone()))
        };
        let profile = lookup("profile").map(|v| v.parse()).transpose()?.unwrap_or(Profile::Desk);
        let env = lookup("env").map(|v| v.parse()).transpose()?.unwrap_or(EnvKind::Bimodal1d);
        let divergence = lookup("divergence")
            .map(|v| v.parse())
            .transpose()?
            .unwrap_or(DivergenceKind::Js);
        let mut cfg = Self::new(profile, env, divergence);
        for layer in layers {
            for (k, v) in layer {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_layers(&[Self::parse_text(text)?])
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "profile" => self.profile = value.parse()?,
            "env" => self.env = value.parse()?,
            "divergence" => self.divergence = value.parse()?,
            "N" => self.n = num(key, value)?,
            "M" => self.big_m = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "U" => self.u = num(key, value)?,
            "K" => self.k = num(key, value)?,
            "L" => self.l = num(key, value)?,
            "sigma" => self.sigma = list(key, value)?,
            "sigma_scale" => self.sigma_scale = num(key, value)?,
            "sigma_prime" => {
                let sp: Vec<f64> = list(key, value)?;
                if sp.len() != self.sigma.len() {
                    return Err(Error::Config("sigma_prime must have one entry per sigma entry".into()));
                }
                let c = sp[0] / self.sigma[0];
                if sp.iter().zip(&self.sigma).any(|(p, s)| (p / s - c).abs() > 1e-9 * c) {
                    return Err(Error::Config("sigma_prime must be a uniform multiple of sigma".into()));
                }
                self.sigma_scale = c;
            }
            "memory_positive" => self.memory_positive = num(key, value)?,
            "memory_negative" => self.memory_negative = num(key, value)?,
            "interaction_steps" => self.interaction_steps = num(key, value)?,
            "critic_steps" => self.critic_steps = num(key, value)?,
            "actor_steps" => self.actor_steps = num(key, value)?,
            "total_steps" => self.total_steps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "actor_lr" => self.actor_lr = num(key, value)?,
            "critic_lr" => self.critic_lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "eps_v" => self.eps_v = num(key, value)?,
            "eps_p" => self.eps_p = num(key, value)?,
            "eps_c" => self.eps_c = num(key, value)?,
            "eps_r" => self.eps_r = num(key, value)?,
            "prefill" => self.prefill = num(key, value)?,
            "prefill_budget" => self.prefill_budget = num(key, value)?,
            "action_opt" => self.action_opt = num(key, value)?,
            "latent_dim" => self.latent_dim = num(key, value)?,
            "hidden" => self.hidden = list(key, value)?,
            "shapes" => {
                self.shapes = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        for (name, v) in [
            ("N", self.n),
            ("M", self.big_m),
            ("m", self.m),
            ("U", self.u),
            ("K", self.k),
            ("L", self.l),
            ("memory_positive", self.memory_positive),
            ("memory_negative", self.memory_negative),
            ("interaction_steps", self.interaction_steps),
            ("critic_steps", self.critic_steps),
            ("actor_steps", self.actor_steps),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.big_m != self.m * self.n {
            return Err(Error::Config(format!(
                "M must equal m * N ({} != {} * {})",
                self.big_m, self.m, self.n
            )));
        }
        let env = Env::new(self.env);
        if self.sigma.len() != env.action_space().raw_dim() {
            return Err(Error::Config(format!(
                "sigma needs {} entries for {}",
                env.action_space().raw_dim(),
                self.env
            )));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("sigma entries must be finite and > 0");
        }
        if !(self.sigma_scale > 1.0 && self.sigma_scale.is_finite()) {
            return bad("sigma_scale must be > 1 so that sigma' > sigma");
        }
        if !(0.0..1.0).contains(&self.action_opt) {
            return bad("action_opt must be in [0, 1)");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list at least one positive width");
        }
        if self.shapes.is_empty() {
            return bad("shapes must not be empty");
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("adam_eps", self.adam_eps),
            ("eps_v", self.eps_v),
            ("eps_p", self.eps_p),
            ("eps_c", self.eps_c),
            ("eps_r", self.eps_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must be in [0, 1)");
        }
        if self.eps_c >= 0.5 {
            return bad("eps_c must be < 0.5");
        }
        Ok(())
    }

    pub fn sigma_prime(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * self.sigma_scale).collect()
    }

    pub fn clamps(&self) -> Clamps {
        Clamps {
            eps_v: self.eps_v,
            eps_p: self.eps_p,
        }
    }

    pub fn actor_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.actor_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn critic_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.critic_lr,
            ..self.actor_adam()
        }
    }

    pub fn make_env(&self) -> Env {
        Env::new(self.env).with_shapes(self.shapes.clone())
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("profile", self.profile.as_str().into());
        kv("env", self.env.to_string());
        kv("divergence", self.divergence.to_string());
        kv("N", self.n.to_string());
        kv("M", self.big_m.to_string());
        kv("m", self.m.to_string());
        kv("U", self.u.to_string());
        kv("K", self.k.to_string());
        kv("L", self.l.to_string());
        kv("sigma", join(&self.sigma));
        kv("sigma_scale", self.sigma_scale.to_string());
        kv("memory_positive", self.memory_positive.to_string());
        kv("memory_negative", self.memory_negative.to_string());
        kv("interaction_steps", self.interaction_steps.to_string());
        kv("critic_steps", self.critic_steps.to_string());
        kv("actor_steps", self.actor_steps.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("seed", self.seed.to_string());
        kv("actor_lr", self.actor_lr.to_string());
        kv("critic_lr", self.critic_lr.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("adam_eps", self.adam_eps.to_string());
        kv("eps_v", self.eps_v.to_string());
        kv("eps_p", self.eps_p.to_string());
        kv("eps_c", self.eps_c.to_string());
        kv("eps_r", self.eps_r.to_string());
        kv("prefill", self.prefill.to_string());
        kv("prefill_budget", self.prefill_budget.to_string());
        kv("action_opt", self.action_opt.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("hidden", join(&self.hidden));
        kv(
            "shapes",
            self.shapes.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        );
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_profile_values() {
        let c = TrainConfig::new(Profile::Paper, EnvKind::Grasp2d, DivergenceKind::Js);
        assert_eq!((c.n, c.big_m, c.m, c.u, c.k, c.l), (128, 256, 2, 64, 16, 32));
        assert_eq!(c.sigma, vec![0.025, 0.025, 0.4, 0.4]);
        let sp = c.sigma_prime();
        for (a, b) in sp.iter().zip([0.075, 0.075, 1.2, 1.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!((c.memory_positive, c.memory_negative), (160_000, 160_000));
        assert_eq!((c.interaction_steps, c.critic_steps, c.actor_steps), (1, 2, 1));
        assert_eq!(c.prefill, 80_000);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::new(Profile::Desk, EnvKind::Grasp2d, DivergenceKind::Rkl);
        c.seed = 17;
        c.shapes = vec![ShapeKind::H];
        c.actor_lr = 3.3e-5;
        let back = TrainConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn layering_and_validation() {
        let file = TrainConfig::parse_text("env = rings2d\nseed = 5\n# comment\nN = 10\nM = 20\n").unwrap();
        let cli = vec![("seed".to_string(), "6".to_string())];
        let c = TrainConfig::from_layers(&[file.clone(), cli]).unwrap();
        assert_eq!(c.seed, 6);
        assert_eq!(c.env, EnvKind::Rings2d);
        assert_eq!(c.sigma.len(), 2);

        let bad_m = TrainConfig::parse_text("N = 10\nM = 25").unwrap();
        assert!(TrainConfig::from_layers(&[bad_m]).is_err());
        assert!(TrainConfig::from_text("bogus = 1").is_err());
        assert!(TrainConfig::from_text("sigma_scale = 0.5").is_err());
    }
}
