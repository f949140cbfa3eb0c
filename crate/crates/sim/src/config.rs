//! Experiment configuration: a flat TOML document with one key per field.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use scrible_core::{sample_unit_sphere, Domain, EtaPreset, PerturbationKind, PerturbationSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreContext, Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Shrunk-domain learner.
    #[serde(rename = "algorithm1")]
    Shrunk,
    /// The same learner on the unshrunk domain.
    ScribleBaseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Shrunk => "algorithm1",
            Algorithm::ScribleBaseline => "scrible_baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSetting {
    Ball,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSetting {
    Value(f64),
    Keyword(Auto),
}

impl Default for BudgetSetting {
    fn default() -> Self {
        BudgetSetting::Keyword(Auto::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSetting {
    Value(f64),
    Keyword(Auto),
}

impl Default for DeltaSetting {
    fn default() -> Self {
        DeltaSetting::Keyword(Auto::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaName {
    #[serde(rename = "theorem1")]
    ShrinkLog,
    #[serde(rename = "paper_sec7")]
    ShrinkLogQuarter,
    #[serde(rename = "theorem2_proof")]
    HorizonLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Value(f64),
    Preset(EtaName),
}

impl Default for EtaSetting {
    fn default() -> Self {
        EtaSetting::Preset(EtaName::ShrinkLogQuarter)
    }
}

impl EtaSetting {
    pub fn preset(self) -> EtaPreset {
        match self {
            EtaSetting::Value(v) => EtaPreset::Fixed(v),
            EtaSetting::Preset(EtaName::ShrinkLog) => EtaPreset::ShrinkLog,
            EtaSetting::Preset(EtaName::ShrinkLogQuarter) => EtaPreset::ShrinkLogQuarter,
            EtaSetting::Preset(EtaName::HorizonLog) => EtaPreset::HorizonLog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSetting {
    #[default]
    None,
    Sinusoidal,
    Spikes,
}

fn default_reps() -> usize {
    1
}

fn default_threshold() -> f64 {
    scrible_core::adversary::DEFAULT_BOUNDARY_THRESHOLD
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Shrunk, Algorithm::ScribleBaseline]
}

fn default_gamma() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub d: usize,
    pub domain: DomainSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Common half-width of a box; `halfwidths` overrides it per coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfwidths: Option<Vec<f64>>,
    #[serde(rename = "G")]
    pub loss_bound: f64,
    #[serde(default)]
    pub budget: BudgetSetting,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub delta: DeltaSetting,
    #[serde(default)]
    pub eta: EtaSetting,
    #[serde(default)]
    pub perturbation: PerturbationSetting,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_threshold")]
    pub boundary_threshold: f64,
    /// `[round, magnitude]` pairs for spike schedules.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spikes: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_cap: Option<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Run the shrunk learner with `δ = 2/3` when `C/T` exceeds 2/3 instead of
    /// rejecting the configuration.
    #[serde(default)]
    pub budget_regime_override: bool,
}

fn bad(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl ExperimentConfig {
    /// The setting of the published experiment at perturbation level `epsilon`.
    pub fn published(epsilon: f64) -> Self {
        Self {
            horizon: 2000,
            d: 5,
            domain: DomainSetting::Ball,
            radius: Some(5.0),
            halfwidth: None,
            halfwidths: None,
            loss_bound: 3.0,
            budget: BudgetSetting::default(),
            epsilon,
            delta: DeltaSetting::default(),
            eta: EtaSetting::Preset(EtaName::ShrinkLogQuarter),
            perturbation: PerturbationSetting::Sinusoidal,
            offset: 2.0,
            boundary_threshold: default_threshold(),
            spikes: Vec::new(),
            sigma_cap: None,
            reps: 10,
            master_seed: 20240501,
            algorithms: default_algorithms(),
            gamma: default_gamma(),
            out_dir: None,
            budget_regime_override: true,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    /// SHA-256 of the serialized configuration without its output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = None;
        Ok(hex::encode(Sha256::digest(c.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.d == 0 || self.reps == 0 {
            return Err(bad("T, d and reps must all be at least 1"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(bad("master_seed must fit in a signed 64-bit TOML integer"));
        }
        if !(self.loss_bound >= 0.0 && self.loss_bound.is_finite()) {
            return Err(bad("G must be finite and non-negative"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(bad("epsilon must be finite and non-negative"));
        }
        if let BudgetSetting::Value(c) = self.budget {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(bad("budget must be finite and non-negative"));
            }
        }
        if let DeltaSetting::Value(delta) = self.delta {
            if !(delta > 0.0 && delta <= scrible_core::geometry::MAX_DELTA) {
                return Err(bad(format!("delta must lie in (0, 2/3], got {delta}")));
            }
        }
        if let EtaSetting::Value(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(bad("a numeric eta must be finite and non-negative"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma must lie in (0, 1)"));
        }
        if !self.offset.is_finite() || !(self.boundary_threshold > 0.0) {
            return Err(bad("offset must be finite and boundary_threshold positive"));
        }
        if let Some(cap) = self.sigma_cap {
            if !(cap >= 0.0) {
                return Err(bad("sigma_cap must be non-negative"));
            }
        }
        if self.algorithms.is_empty() {
            return Err(bad("algorithms must name at least one learner"));
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(bad("algorithms contains duplicates"));
        }
        if !self.spikes.is_empty() && self.perturbation != PerturbationSetting::Spikes {
            return Err(bad("spikes given but perturbation is not \"spikes\""));
        }
        if self
            .spikes
            .iter()
            .any(|(t, m)| *t == 0 || *t > self.horizon || !m.is_finite())
        {
            return Err(bad("spike rounds must lie in 1..=T with finite magnitudes"));
        }
        self.build_domain()?;
        Ok(())
    }

    fn build_domain(&self) -> Result<Domain> {
        let domain = match self.domain {
            DomainSetting::Ball => {
                if self.halfwidth.is_some() || self.halfwidths.is_some() {
                    return Err(bad("ball domains take `radius` only"));
                }
                let radius = self.radius.ok_or_else(|| bad("ball domain needs `radius`"))?;
                Domain::ball(self.d, radius)
            }
            DomainSetting::Box => {
                if self.radius.is_some() {
                    return Err(bad("box domains take `halfwidth` or `halfwidths`"));
                }
                match (&self.halfwidths, self.halfwidth) {
                    (Some(_), Some(_)) => return Err(bad("give either `halfwidth` or `halfwidths`")),
                    (Some(h), None) => {
                        if h.len() != self.d {
                            return Err(bad(format!("halfwidths has {} entries for d = {}", h.len(), self.d)));
                        }
                        Domain::boxed(h.clone())
                    }
                    (None, Some(h)) => Domain::cube(self.d, h),
                    (None, None) => return Err(bad("box domain needs `halfwidth` or `halfwidths`")),
                }
            }
        };
        domain.context(|| "domain".into())
    }

    pub fn domain(&self) -> Result<Domain> {
        self.build_domain()
    }

    /// Total perturbation budget. `auto` is the most the schedule can spend:
    /// `T (ε + |offset|)` for a sinusoid with `ε > 0`, zero when `ε = 0`, and
    /// the summed magnitudes of a spike list.
    pub fn budget(&self) -> f64 {
        match self.budget {
            BudgetSetting::Value(c) => c,
            BudgetSetting::Keyword(Auto::Auto) => match self.perturbation {
                PerturbationSetting::None => 0.0,
                PerturbationSetting::Sinusoidal if self.epsilon > 0.0 => {
                    self.horizon as f64 * (self.epsilon + self.offset.abs())
                }
                PerturbationSetting::Sinusoidal => 0.0,
                PerturbationSetting::Spikes => self.spikes.iter().map(|(_, m)| m.abs()).sum(),
            },
        }
    }

    /// Perturbation schedule; the sinusoid direction is drawn from `rng`.
    pub fn schedule<R: RngCore>(&self, rng: &mut R) -> Result<PerturbationSchedule> {
        let kind = match self.perturbation {
            PerturbationSetting::None => PerturbationKind::None,
            PerturbationSetting::Sinusoidal => PerturbationKind::Sinusoidal {
                epsilon: self.epsilon,
                direction: sample_unit_sphere(rng, self.d).context(|| "perturbation direction".into())?,
                offset: self.offset,
                boundary_threshold: self.boundary_threshold,
            },
            PerturbationSetting::Spikes => {
                let map: BTreeMap<usize, f64> = self.spikes.iter().copied().collect();
                PerturbationKind::Spikes(map)
            }
        };
        let schedule = PerturbationSchedule::new(kind, self.budget()).context(|| "perturbation schedule".into())?;
        Ok(match self.sigma_cap {
            Some(cap) => schedule.with_cap(Some(cap)),
            None => schedule,
        })
    }
}
