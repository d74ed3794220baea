//! Training configuration: presets, TOML loading, validation and hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::poisoning::TriggerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Poisoned,
}

/// When the perturbation network is updated during a poisoned run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonerSchedule {
    /// With probability `poison_rate` per sample.
    Probabilistic,
    EveryEpoch,
}

/// Size presets: `desk` is small enough for CI, `paper` uses the full scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::config("profile", format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub lr_halving_period: usize,
    pub poison_rate: f64,
    pub eps: f64,
    pub lambda_stealth: f64,
    pub lambda_tv: f64,
    pub lambda_hf: f64,
    /// +1 rewards perturbed samples that the discriminator calls real;
    /// -1 flips the adversarial term.
    pub poison_adv_sign: i8,
    pub poisoner_schedule: PoisonerSchedule,
    pub image_side: usize,
    pub seed: u64,
    /// Write a checkpoint every N epochs (0: only after the last epoch).
    pub checkpoint_every: usize,
    pub trigger: TriggerConfig,
}

impl TrainingConfig {
    pub fn preset(mode: Mode, profile: Profile) -> Self {
        let (epochs, image_side) = match (profile, mode) {
            (Profile::Desk, _) => (300, 64),
            (Profile::Paper, Mode::Baseline) => (10_000, 128),
            (Profile::Paper, Mode::Poisoned) => (1500, 128),
        };
        Self {
            mode,
            epochs,
            lr: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            lr_halving_period: 3000,
            poison_rate: 0.3,
            eps: 0.08,
            lambda_stealth: 1.0,
            lambda_tv: 1e-3,
            lambda_hf: 1e-2,
            poison_adv_sign: 1,
            poisoner_schedule: PoisonerSchedule::Probabilistic,
            image_side,
            seed: 0,
            checkpoint_every: 0,
            trigger: TriggerConfig::default(),
        }
    }

    /// Injection probability actually used; baseline runs never poison.
    pub fn effective_poison_rate(&self) -> f64 {
        match self.mode {
            Mode::Baseline => 0.0,
            Mode::Poisoned => self.poison_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.poison_rate) {
            return Err(Error::config(
                "poison_rate",
                format!("{} is outside [0, 1]", self.poison_rate),
            ));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::config("eps", "must be a finite value >= 0"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", "must be > 0"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::config("adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam_beta2", "must lie in [0, 1)"));
        }
        if self.lr_halving_period < 1 {
            return Err(Error::config("lr_halving_period", "must be >= 1"));
        }
        if self.poison_adv_sign != 1 && self.poison_adv_sign != -1 {
            return Err(Error::config("poison_adv_sign", "must be +1 or -1"));
        }
        for (name, v) in [
            ("lambda_stealth", self.lambda_stealth),
            ("lambda_tv", self.lambda_tv),
            ("lambda_hf", self.lambda_hf),
        ] {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        if self.image_side == 0 {
            return Err(Error::config("image_side", "must be positive"));
        }
        self.trigger.validate(self.image_side)
    }

    /// Parse a TOML document; unspecified fields come from the preset for
    /// the document's `mode` (default poisoned) and the given profile.
    pub fn from_toml_str(text: &str, profile: Profile) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_string();
            Error::config(field, e.message().to_string())
        })?;
        let cfg = raw.resolve(profile);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrigger {
    patch_side: Option<usize>,
    value: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    epochs: Option<usize>,
    lr: Option<f64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    lr_halving_period: Option<usize>,
    poison_rate: Option<f64>,
    eps: Option<f64>,
    lambda_stealth: Option<f64>,
    lambda_tv: Option<f64>,
    lambda_hf: Option<f64>,
    poison_adv_sign: Option<i8>,
    poisoner_schedule: Option<PoisonerSchedule>,
    image_side: Option<usize>,
    seed: Option<u64>,
    checkpoint_every: Option<usize>,
    trigger: Option<RawTrigger>,
}

impl RawConfig {
    fn resolve(self, profile: Profile) -> TrainingConfig {
        let mut c = TrainingConfig::preset(self.mode.unwrap_or(Mode::Poisoned), profile);
        macro_rules! overlay {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        overlay!(
            epochs,
            lr,
            adam_beta1,
            adam_beta2,
            lr_halving_period,
            poison_rate,
            eps,
            lambda_stealth,
            lambda_tv,
            lambda_hf,
            poison_adv_sign,
            poisoner_schedule,
            image_side,
            seed,
            checkpoint_every
        );
        if let Some(t) = self.trigger {
            if let Some(v) = t.patch_side {
                c.trigger.patch_side = v;
            }
            if let Some(v) = t.value {
                c.trigger.value = v;
            }
        }
        c
    }
}
