use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    /// Autoencoder with attribute and independence losses.
    Baseline,
    /// Baseline plus an adversarial latent-style discriminator.
    Disc,
    /// Baseline plus cosine losses on the re-encoded soft output (shifted autoencoder).
    Sae,
    /// Both extensions.
    Combo,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::Baseline, ArchKind::Disc, ArchKind::Sae, ArchKind::Combo];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Baseline => "baseline",
            ArchKind::Disc => "disc",
            ArchKind::Sae => "sae",
            ArchKind::Combo => "combo",
        }
    }

    pub fn uses_latent_discriminator(self) -> bool {
        matches!(self, ArchKind::Disc | ArchKind::Combo)
    }

    pub fn uses_cosine(self) -> bool {
        matches!(self, ArchKind::Sae | ArchKind::Combo)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(ArchKind::Baseline),
            "disc" => Ok(ArchKind::Disc),
            "sae" => Ok(ArchKind::Sae),
            "combo" => Ok(ArchKind::Combo),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (expected baseline, disc, sae or combo)"
            ))),
        }
    }
}

/// Training hyperparameters. All defaults are desk-scale choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchKind,
    pub lambda_c: f64,
    pub lambda_z: f64,
    pub lambda_dz: f64,
    pub lambda_cos: f64,
    pub lambda_cosneg: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub z_dim: usize,
    pub max_len: usize,
    pub vocab_max: usize,
    /// Adam learning rate of the encoder/generator.
    pub lr: f64,
    /// Adam learning rate of both discriminators.
    pub disc_lr: f64,
    /// Standard deviation of the encoder's training-time latent noise.
    pub sigma_z: f64,
    /// Passes over real data before adversarial training starts.
    pub d_pretrain_epochs: usize,
}

impl TrainConfig {
    /// Defaults for `arch` with every relevant balancing weight at 1.
    pub fn new(arch: ArchKind) -> Self {
        TrainConfig {
            arch,
            lambda_c: 1.0,
            lambda_z: 1.0,
            lambda_dz: if arch.uses_latent_discriminator() { 1.0 } else { 0.0 },
            lambda_cos: if arch.uses_cosine() { 1.0 } else { 0.0 },
            lambda_cosneg: if arch.uses_cosine() { 1.0 } else { 0.0 },
            tau0: 1.0,
            tau_min: 0.1,
            tau_decay: 0.05,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            embed_dim: 32,
            hidden_dim: 64,
            z_dim: 16,
            max_len: 16,
            vocab_max: 1000,
            lr: 5e-3,
            disc_lr: 5e-3,
            sigma_z: 0.1,
            d_pretrain_epochs: 3,
        }
    }

    /// Smaller network tuned for the synthetic corpus.
    ///
    /// Balancing weights are lowered to 0.1 (0.01 for the adversarial term):
    /// at weight 1 the auxiliary losses collapse the latent code to a
    /// constant before the autoencoder learns to use it.
    pub fn desk(arch: ArchKind) -> Self {
        let base = TrainConfig::new(arch);
        TrainConfig {
            lambda_c: 0.1,
            lambda_z: 0.1,
            lambda_dz: base.lambda_dz * 0.01,
            lambda_cos: base.lambda_cos * 0.1,
            lambda_cosneg: base.lambda_cosneg * 0.1,
            batch_size: 4,
            lr: 1e-2,
            embed_dim: 16,
            hidden_dim: 32,
            z_dim: 8,
            max_len: 12,
            ..base
        }
    }

    /// `max(τ_min, τ_0 · exp(−τ_decay · epoch))`.
    pub fn tau_at(&self, epoch: usize) -> f64 {
        (self.tau0 * (-self.tau_decay * epoch as f64).exp()).max(self.tau_min)
    }

    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("lambda_c", self.lambda_c, true),
            ("lambda_z", self.lambda_z, true),
            ("lambda_dz", self.lambda_dz, self.arch.uses_latent_discriminator()),
            ("lambda_cos", self.lambda_cos, self.arch.uses_cosine()),
            ("lambda_cosneg", self.lambda_cosneg, self.arch.uses_cosine()),
        ];
        for (name, value, relevant) in lambdas {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Config(format!("{name} must be a finite value >= 0")));
            }
            if relevant && value == 0.0 {
                return Err(Error::Config(format!("{name} must be > 0 for arch {}", self.arch)));
            }
            if !relevant && value != 0.0 {
                return Err(Error::Config(format!("{name} must be 0 for arch {}", self.arch)));
            }
        }
        if !(self.tau_min > 0.0 && self.tau0 >= self.tau_min) {
            return Err(Error::Config("require tau0 >= tau_min > 0".into()));
        }
        if !(self.tau_decay >= 0.0) {
            return Err(Error::Config("tau_decay must be >= 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.z_dim == 0 {
            return Err(Error::Config("dimensions must be >= 1".into()));
        }
        if self.max_len < 3 {
            return Err(Error::Config("max_len must be >= 3".into()));
        }
        if self.vocab_max < 5 {
            return Err(Error::Config("vocab_max must be >= 5".into()));
        }
        if !(self.lr > 0.0 && self.disc_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if !(self.sigma_z >= 0.0) {
            return Err(Error::Config("sigma_z must be >= 0".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        let v = value.trim();
        match key.trim() {
            "arch" => self.arch = v.parse()?,
            "lambda_c" => self.lambda_c = num(key, v)?,
            "lambda_z" => self.lambda_z = num(key, v)?,
            "lambda_dz" => self.lambda_dz = num(key, v)?,
            "lambda_cos" => self.lambda_cos = num(key, v)?,
            "lambda_cosneg" => self.lambda_cosneg = num(key, v)?,
            "tau0" => self.tau0 = num(key, v)?,
            "tau_min" => self.tau_min = num(key, v)?,
            "tau_decay" => self.tau_decay = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "embed_dim" => self.embed_dim = num(key, v)?,
            "hidden_dim" => self.hidden_dim = num(key, v)?,
            "z_dim" => self.z_dim = num(key, v)?,
            "max_len" => self.max_len = num(key, v)?,
            "vocab_max" => self.vocab_max = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "disc_lr" => self.disc_lr = num(key, v)?,
            "sigma_z" => self.sigma_z = num(key, v)?,
            "d_pretrain_epochs" => self.d_pretrain_epochs = num(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text file; `#` starts a comment.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_arch() {
        for arch in ArchKind::ALL {
            TrainConfig::new(arch).validate().unwrap();
            TrainConfig::desk(arch).validate().unwrap();
            assert_eq!(arch.name().parse::<ArchKind>().unwrap(), arch);
        }
        assert!("transformer".parse::<ArchKind>().is_err());
    }

    #[test]
    fn lambda_relevance_rules() {
        let mut c = TrainConfig::new(ArchKind::Baseline);
        c.lambda_dz = 0.5;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(ArchKind::Sae);
        c.lambda_cosneg = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(ArchKind::Disc);
        c.tau_min = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn tau_schedule() {
        let c = TrainConfig::new(ArchKind::Baseline);
        let taus: Vec<f64> = (0..200).map(|t| c.tau_at(t)).collect();
        assert_eq!(taus[0], 1.0);
        for w in taus.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(taus.iter().all(|&t| t >= c.tau_min));
        assert_eq!(*taus.last().unwrap(), c.tau_min);
    }

    #[test]
    fn overrides_file() {
        let mut c = TrainConfig::new(ArchKind::Baseline);
        c.apply_overrides("# comment\nepochs = 3\n\nlr=0.01 # inline\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.lr, 0.01);
        assert!(c.apply_overrides("bogus = 1").is_err());
        assert!(c.apply_overrides("epochs 3").is_err());
        assert!(c.apply_overrides("epochs = x").is_err());
    }
}
