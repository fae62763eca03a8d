//! JSON checkpoints. Floats round-trip exactly, so a resumed run continues
//! bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use surqnn_core::pipeline::{AdamState, PipelineState, TrainConfig};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::metrics::MetricsRow;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateBlob {
    pub tensors: Vec<Vec<f64>>,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_shift: Vec<f64>,
    pub output_scale: Vec<f64>,
    pub fitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamBlob {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: Config,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub model: Vec<Vec<f64>>,
    pub adam: AdamBlob,
    pub surrogate: SurrogateBlob,
    /// Metric rows written so far, replayed on resume.
    pub history: Vec<MetricsRow>,
}

fn copy_into(dst: Vec<&mut [f64]>, src: &[Vec<f64>], what: &str) -> CliResult<()> {
    if dst.len() != src.len() {
        return Err(CliError::Consistency(format!(
            "{what}: checkpoint has {} tensors, model has {}",
            src.len(),
            dst.len()
        )));
    }
    for (i, (d, s)) in dst.into_iter().zip(src).enumerate() {
        if d.len() != s.len() {
            return Err(CliError::Consistency(format!(
                "{what}: tensor {i} has {} values, expected {}",
                s.len(),
                d.len()
            )));
        }
        d.copy_from_slice(s);
    }
    Ok(())
}

impl Checkpoint {
    pub fn capture(config: &Config, state: &PipelineState, history: &[MetricsRow]) -> Self {
        let net = &state.surrogate;
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config.hash(),
            config: config.clone(),
            epoch: state.epoch,
            step: state.step,
            model: state.model.tensors().iter().map(|t| t.to_vec()).collect(),
            adam: AdamBlob {
                m: state.adam.m.clone(),
                v: state.adam.v.clone(),
                t: state.adam.t,
            },
            surrogate: SurrogateBlob {
                tensors: net.mlp.tensors().iter().map(|t| t.to_vec()).collect(),
                input_shift: net.input_shift.clone(),
                input_scale: net.input_scale.clone(),
                output_shift: net.output_shift.clone(),
                output_scale: net.output_scale.clone(),
                fitted: net.fitted,
            },
            history: history.to_vec(),
        }
    }

    /// Rebuilds the training state. Shapes come from `cfg`; values from the
    /// checkpoint.
    pub fn restore(&self, cfg: &TrainConfig) -> CliResult<PipelineState> {
        let mut state = PipelineState::new(cfg)?;
        copy_into(state.model.tensors_mut(), &self.model, "model")?;
        let lens: Vec<usize> = state.model.tensors().iter().map(|t| t.len()).collect();
        let shapes_ok = |v: &[Vec<f64>]| v.len() == lens.len() && v.iter().zip(&lens).all(|(a, &n)| a.len() == n);
        if !shapes_ok(&self.adam.m) || !shapes_ok(&self.adam.v) {
            return Err(CliError::Consistency("optimizer moments do not match the model".into()));
        }
        state.adam = AdamState {
            m: self.adam.m.clone(),
            v: self.adam.v.clone(),
            t: self.adam.t,
        };
        let s = &self.surrogate;
        let net = &mut state.surrogate;
        copy_into(net.mlp.tensors_mut(), &s.tensors, "surrogate")?;
        if s.input_shift.len() != net.input_shift.len()
            || s.input_scale.len() != net.input_scale.len()
            || s.output_shift.len() != net.output_shift.len()
            || s.output_scale.len() != net.output_scale.len()
        {
            return Err(CliError::Consistency("surrogate normalization does not match".into()));
        }
        net.input_shift.clone_from(&s.input_shift);
        net.input_scale.clone_from(&s.input_scale);
        net.output_shift.clone_from(&s.output_shift);
        net.output_scale.clone_from(&s.output_scale);
        net.fitted = s.fitted;
        state.step = self.step;
        state.epoch = self.epoch;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_vec(self).map_err(|e| CliError::Format(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        crate::idx::write_file(&tmp, &json)?;
        std::fs::rename(&tmp, path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ck: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CliError::Format(format!(
                "{}: checkpoint version {} unsupported",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Refuses a checkpoint produced under a different configuration.
    pub fn check_hash(&self, config: &Config) -> CliResult<()> {
        let expected = config.hash();
        if self.config_hash != expected {
            return Err(CliError::Consistency(format!(
                "config hash mismatch: checkpoint was written with {}, current config hashes to {expected}; refusing to continue",
                self.config_hash
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        let mut c = Config::default();
        c.circuit.qubits = 2;
        c.circuit.ancillas = vec![1];
        c.circuit.layers = 1;
        c.surrogate.hidden = vec![4];
        c.model.conv1 = 2;
        c.model.conv2 = 2;
        c.model.projector_hidden = 4;
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = small();
        let cfg = c.train_config().unwrap();
        let mut state = PipelineState::new(&cfg).unwrap();
        state.model.head.bias[0] = 0.1 + 0.2;
        state.step = 9;
        let ck = Checkpoint::capture(&c, &state, &[]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.restore(&cfg).unwrap(), state);
    }

    #[test]
    fn hash_mismatch_refused() {
        let c = small();
        let state = PipelineState::new(&c.train_config().unwrap()).unwrap();
        let ck = Checkpoint::capture(&c, &state, &[]);
        let mut other = c.clone();
        other.seed = 3;
        let msg = ck.check_hash(&other).unwrap_err().to_string();
        assert!(msg.contains("hash mismatch"));
    }
}
