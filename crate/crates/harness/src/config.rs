//! The TOML configuration shared by every subcommand.
//!
//! Every section is optional; missing keys take the defaults below.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! preset = "desk"        # desk | toy | full
//!
//! [train]
//! learning_rate = 0.02
//! epochs = 10
//!
//! [ntcca]
//! rank = 2
//! subset_fraction = 0.3333333333333333
//!
//! [head]
//! gamma = 0.001
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tenscorr_core::CpOptions;
use tenscorr_mtcn::{ArchitectureSpec, InitScheme, TrainConfig};
use tenscorr_ntcca::{Grouping, HeadConfig, NtccaOptions};

use crate::error::{Error, Result};
use crate::synth::SynthSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Base seed of CP initialization and gradient-check inputs. When set in
    /// a file, or by `--seed`, it also seeds data generation, training and
    /// the subset draw; see [`Config::reseed`].
    pub seed: u64,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub ntcca: NtccaSection,
    pub head: HeadConfig,
    pub predict: PredictSection,
    pub cp: CpSection,
}

/// Network training settings. Missing keys take the desk defaults of
/// [`desk_training`], not the published-scale defaults of [`TrainConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_interval: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init: InitScheme,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = desk_training();
        TrainSection {
            learning_rate: t.learning_rate,
            decay_factor: t.decay_factor,
            decay_interval: t.decay_interval,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            init: t.init,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            decay_factor: self.decay_factor,
            decay_interval: self.decay_interval,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            init: self.init,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub samples: usize,
    pub spec: SynthSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    /// Full architecture; overrides `preset` when present.
    pub spec: Option<ArchitectureSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NtccaSection {
    pub rank: usize,
    pub epsilon: f64,
    pub center: bool,
    /// Explicit views as lists of 0-based map indices; one view per
    /// subnetwork when absent.
    pub groups: Option<Vec<Vec<usize>>>,
    /// Fraction of the training split used to fit the basis and head.
    pub subset_fraction: f64,
    /// Seed of the subset draw, independent of every other seed.
    pub subset_seed: u64,
    pub cp_max_sweeps: usize,
    pub cp_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpSection {
    pub rank: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub greedy_deflation: bool,
    pub epsilon: f64,
    pub center: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            synth: SynthSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            ntcca: NtccaSection::default(),
            head: HeadConfig::default(),
            predict: PredictSection::default(),
            cp: CpSection::default(),
        }
    }
}

/// SGD settings that make desk-scale runs of a few epochs converge. The
/// published rate of 1e-4 at batch 100 assumes hundreds of thousands of
/// iterations.
pub fn desk_training() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        decay_factor: 0.5,
        decay_interval: 300,
        batch_size: 16,
        epochs: 10,
        seed: 0,
        init: InitScheme::He,
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            samples: 2000,
            spec: SynthSpec::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "desk".into(),
            spec: None,
        }
    }
}

impl Default for NtccaSection {
    fn default() -> Self {
        let d = NtccaOptions::default();
        NtccaSection {
            rank: d.rank,
            epsilon: d.epsilon,
            center: d.center,
            groups: None,
            subset_fraction: 1.0 / 3.0,
            subset_seed: 0x5eed_0003,
            cp_max_sweeps: d.cp.max_sweeps,
            cp_tol: d.cp.tol,
        }
    }
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection { threshold: 0.5 }
    }
}

impl Default for CpSection {
    fn default() -> Self {
        let d = CpOptions::default();
        CpSection {
            rank: 1,
            tol: d.tol,
            max_sweeps: d.max_sweeps,
            greedy_deflation: false,
            epsilon: 1e-4,
            center: false,
        }
    }
}

impl Config {
    /// Parses a config. A top-level `seed` also seeds every stage whose
    /// own seed key is absent.
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = |e: toml::de::Error| Error::Invalid(format!("config: {e}"));
        let table: toml::Table = toml::from_str(text).map_err(bad)?;
        let mut cfg: Config = toml::from_str(text).map_err(bad)?;
        if table.contains_key("seed") {
            let has = |path: &[&str]| {
                let mut t = &table;
                for (i, k) in path.iter().enumerate() {
                    match t.get(*k) {
                        Some(toml::Value::Table(sub)) if i + 1 < path.len() => t = sub,
                        Some(_) if i + 1 == path.len() => return true,
                        _ => return false,
                    }
                }
                false
            };
            let explicit = (
                has(&["synth", "spec", "seed"]).then_some(cfg.synth.spec.seed),
                has(&["train", "seed"]).then_some(cfg.train.seed),
                has(&["ntcca", "subset_seed"]).then_some(cfg.ntcca.subset_seed),
            );
            cfg.reseed(cfg.seed);
            if let Some(s) = explicit.0 {
                cfg.synth.spec.seed = s;
            }
            if let Some(s) = explicit.1 {
                cfg.train.seed = s;
            }
            if let Some(s) = explicit.2 {
                cfg.ntcca.subset_seed = s;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets the base seed and every stage seed derived from it. The subset
    /// seed is offset so that it never coincides with the training seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.spec.seed = seed;
        self.train.seed = seed;
        self.ntcca.subset_seed = seed ^ 0x5eed_0003;
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        if let Some(spec) = &self.model.spec {
            spec.shapes()?;
            return Ok(spec.clone());
        }
        match self.model.preset.as_str() {
            "desk" => Ok(ArchitectureSpec::desk()),
            "toy" => Ok(ArchitectureSpec::toy()),
            "full" => Ok(ArchitectureSpec::full_scale(40)),
            other => Err(Error::Invalid(format!(
                "unknown model preset `{other}` (expected desk, toy or full)"
            ))),
        }
    }

    pub fn ntcca_options(&self) -> NtccaOptions {
        let mut cp = CpOptions::default();
        cp.max_sweeps = self.ntcca.cp_max_sweeps;
        cp.tol = self.ntcca.cp_tol;
        cp.seed = self.seed;
        NtccaOptions {
            rank: self.ntcca.rank,
            epsilon: self.ntcca.epsilon,
            center: self.ntcca.center,
            cp,
        }
    }

    pub fn grouping(&self, subnetworks: usize, maps: usize) -> Grouping {
        match &self.ntcca.groups {
            Some(g) => Grouping { groups: g.clone() },
            None => Grouping::by_subnetwork(subnetworks, maps),
        }
    }

    pub fn cp_options(&self) -> CpOptions {
        CpOptions {
            rank: self.cp.rank,
            tol: self.cp.tol,
            max_sweeps: self.cp.max_sweeps,
            seed: self.seed,
            greedy_deflation: self.cp.greedy_deflation,
            ..CpOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        self.train.to_train_config().validate()?;
        self.synth.spec.validate()?;
        let s = &self.ntcca;
        if !(s.subset_fraction > 0.0 && s.subset_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "ntcca.subset_fraction {} must lie in (0, 1]",
                s.subset_fraction
            )));
        }
        if s.rank == 0 || !(s.epsilon >= 0.0) {
            return Err(Error::Invalid(
                "ntcca.rank must be ≥ 1 and ntcca.epsilon ≥ 0".into(),
            ));
        }
        let t = self.predict.threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Invalid(format!(
                "predict.threshold {t} must lie in (0, 1)"
            )));
        }
        if self.cp.rank == 0 {
            return Err(Error::Invalid("cp.rank must be ≥ 1".into()));
        }
        Ok(())
    }
}
