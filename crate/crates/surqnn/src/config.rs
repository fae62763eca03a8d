//! TOML run configuration. Every field has a default, unknown keys are
//! rejected, and `[runtime]` is left out of the config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use surqnn_core::ansatz::CircuitSpec;
use surqnn_core::data::SyntheticKind;
use surqnn_core::pipeline::{AdamConfig, Architecture, SurrogateSettings, TrainConfig, TrainPath};
use surqnn_core::surrogate::FitConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub circuit: CircuitSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub surrogate: SurrogateSection,
    pub verify: VerifySection,
    pub gradcheck: GradcheckSection,
    pub runtime: RuntimeSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            circuit: CircuitSection::default(),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            surrogate: SurrogateSection::default(),
            verify: VerifySection::default(),
            gradcheck: GradcheckSection::default(),
            runtime: RuntimeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitSection {
    pub qubits: usize,
    pub ancillas: Vec<usize>,
    pub layers: usize,
}

impl Default for CircuitSection {
    fn default() -> Self {
        CircuitSection {
            qubits: 6,
            ancillas: vec![1, 5],
            layers: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    #[default]
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticName {
    #[default]
    TwoGaussians,
    XorBlobs,
    Rings,
}

impl From<SyntheticName> for SyntheticKind {
    fn from(s: SyntheticName) -> Self {
        match s {
            SyntheticName::TwoGaussians => SyntheticKind::TwoGaussians,
            SyntheticName::XorBlobs => SyntheticKind::XorBlobs,
            SyntheticName::Rings => SyntheticKind::Rings,
        }
    }
}

/// Where samples come from. IDX paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKind,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Original labels to keep; empty keeps all.
    pub classes: Vec<usize>,
    pub side: usize,
    pub synthetic: SyntheticName,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            kind: DataKind::Mnist,
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            classes: vec![0, 1],
            side: 8,
            synthetic: SyntheticName::TwoGaussians,
            train_count: 256,
            test_count: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub conv1: usize,
    pub conv2: usize,
    pub projector_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = Architecture::default();
        ModelSection {
            conv1: a.conv1,
            conv2: a.conv2,
            projector_hidden: a.projector_hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Surrogate,
    Direct,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Surrogate => "surrogate",
            Backend::Direct => "direct",
        }
    }
}

impl From<Backend> for TrainPath {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Surrogate => TrainPath::Surrogate,
            Backend::Direct => TrainPath::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CircuitBackend {
    #[default]
    Exact,
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub eta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub backend: Backend,
    pub circuit_backend: CircuitBackend,
    pub shots: usize,
    pub augment_crop: bool,
    pub augment_flip: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            eta0: t.eta0,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            weight_decay: t.adam.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            backend: Backend::Surrogate,
            circuit_backend: CircuitBackend::Exact,
            shots: 1000,
            augment_crop: false,
            augment_flip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub hidden: Vec<usize>,
    pub jitter: usize,
    pub sigma: f64,
    pub fit_epochs: usize,
    pub fit_lr: f64,
    pub momentum: f64,
    pub input_spread: f64,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        let s = SurrogateSettings::default();
        SurrogateSection {
            hidden: s.hidden,
            jitter: s.jitter,
            sigma: s.sigma,
            fit_epochs: s.fit.epochs,
            fit_lr: s.fit.lr,
            momentum: s.fit.momentum,
            input_spread: s.fit.input_spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub trials: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { trials: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub h: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            h: surqnn_core::gradcheck::DEFAULT_FD_STEP,
            tolerance: 1e-6,
        }
    }
}

/// Machine-local knobs that do not change results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    /// Worker threads for batched circuit evaluation; 0 picks the core count.
    pub workers: usize,
}

impl Default for RuntimeSection {
    fn default() -> Self {
        RuntimeSection { workers: 0 }
    }
}

/// A parsed config plus the directory relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
}

impl Config {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = Config::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON form, `[runtime]` excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.runtime = RuntimeSection::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn circuit_spec(&self) -> CliResult<CircuitSpec> {
        let c = &self.circuit;
        CircuitSpec::new(c.qubits, c.ancillas.clone(), c.layers).map_err(|e| CliError::Config(format!("circuit: {e}")))
    }

    pub fn class_count(&self) -> usize {
        match self.data.kind {
            DataKind::Synthetic => 2,
            DataKind::Mnist if self.data.classes.is_empty() => 10,
            DataKind::Mnist => self.data.classes.len(),
        }
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let t = &self.train;
        let s = &self.surrogate;
        let cfg = TrainConfig {
            eta0: t.eta0,
            adam: AdamConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                weight_decay: t.weight_decay,
            },
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seed,
            arch: Architecture {
                image_side: self.data.side,
                channels: 1,
                conv1: self.model.conv1,
                conv2: self.model.conv2,
                projector_hidden: self.model.projector_hidden,
                classes: self.class_count(),
            },
            circuit: self.circuit_spec()?,
            surrogate: SurrogateSettings {
                hidden: s.hidden.clone(),
                jitter: s.jitter,
                sigma: s.sigma,
                fit: FitConfig {
                    epochs: s.fit_epochs,
                    lr: s.fit_lr,
                    momentum: s.momentum,
                    normalize: true,
                    input_spread: s.input_spread,
                },
            },
            augment_crop: t.augment_crop,
            augment_flip: t.augment_flip,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything checkable without touching data or running a circuit.
    pub fn validate(&self) -> CliResult<()> {
        self.train_config()?;
        if self.train.circuit_backend == CircuitBackend::Trajectory && self.train.shots == 0 {
            return Err(CliError::Config("trajectory backend needs shots > 0".into()));
        }
        if !(self.gradcheck.h > 0.0) || !(self.gradcheck.tolerance > 0.0) {
            return Err(CliError::Config("gradcheck h and tolerance must be positive".into()));
        }
        if self.data.kind == DataKind::Synthetic && self.data.side != surqnn_core::data::SYNTHETIC_SIDE {
            return Err(CliError::Config(format!(
                "synthetic images are {0}x{0}; set data.side = {0}",
                surqnn_core::data::SYNTHETIC_SIDE
            )));
        }
        Ok(())
    }
}

impl LoadedConfig {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let e = Config::from_toml("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_runtime() {
        let a = Config::default();
        let mut b = a.clone();
        b.runtime.workers = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = Config::from_toml("[train]\nbatch_size = 0\n").unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let c = Config::from_toml("[circuit]\nqubits = 3\nancillas = [5]\n").unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
