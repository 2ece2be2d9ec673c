//! Run configuration: a JSON document with every section optional. Unknown
//! keys are rejected, and errors carry the dotted path of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use spikegrad::arch::{parse_architecture, NetworkSpec};
use spikegrad::data::SyntheticParams;
use spikegrad::init::InitConfig;
use spikegrad::kernels::DEFAULT_CUTOFF;
use spikegrad::loss::LossConfig;
use spikegrad::network::{NetworkOptions, DEFAULT_POOL_SCALE};
use spikegrad::neuron::NeuronParams;
use spikegrad::optim::OptimizerConfig;

use crate::CliError;

/// Where training and test samples come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_manifest: Option<PathBuf>,
    /// Generates the synthetic task into `<output_dir>/data` instead of
    /// reading manifests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticParams>,
    /// Seed for the synthetic task; defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: String,
    pub neuron: NeuronParams,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub init: InitConfig,
    pub data: DataConfig,
    /// Simulation step in ms.
    pub dt: f64,
    pub pool_scale: f64,
    pub kernel_cutoff: f64,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop once test accuracy reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_at_accuracy: Option<f64>,
    /// Also keep `epoch_NNN.spk` every this many epochs (0: initial and final only).
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            architecture: String::new(),
            neuron: NeuronParams::default(),
            loss: LossConfig::spikemax(30),
            optimizer: OptimizerConfig::default(),
            init: InitConfig::default(),
            data: DataConfig::default(),
            dt: 1.0,
            pool_scale: DEFAULT_POOL_SCALE,
            kernel_cutoff: DEFAULT_CUTOFF,
            seed: 0,
            epochs: 10,
            batch_size: 16,
            stop_at_accuracy: None,
            checkpoint_every: 0,
            output_dir: PathBuf::from("run"),
        }
    }
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    /// Deserializes, reporting the path of the first bad key.
    pub fn from_value(value: Value) -> Result<Self, CliError> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                "(root)".to_string()
            } else {
                path
            };
            config_err(&path, e.into_inner())
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(spikegrad::Error::io(path, e)))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn spec(&self) -> Result<NetworkSpec, CliError> {
        Ok(parse_architecture(&self.architecture)
            .map_err(|e| config_err("architecture", e))?
            .with_neuron_params(self.neuron))
    }

    pub fn network_options(&self) -> NetworkOptions {
        NetworkOptions {
            pool_scale: self.pool_scale,
            kernel_cutoff: self.kernel_cutoff,
        }
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<(), CliError> {
        let spec = self.spec()?;
        self.neuron
            .validate()
            .map_err(|e| config_err("neuron", e))?;
        self.loss.validate().map_err(|e| config_err("loss", e))?;
        self.optimizer
            .validate()
            .map_err(|e| config_err("optimizer", e))?;
        self.init.validate().map_err(|e| config_err("init", e))?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config_err("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.pool_scale > 0.0) {
            return Err(config_err(
                "pool_scale",
                format!("must be > 0, got {}", self.pool_scale),
            ));
        }
        if !(self.kernel_cutoff > 0.0 && self.kernel_cutoff < 1.0) {
            return Err(config_err(
                "kernel_cutoff",
                format!("must be in (0, 1), got {}", self.kernel_cutoff),
            ));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be >= 1"));
        }
        if let Some(a) = self.stop_at_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(config_err(
                    "stop_at_accuracy",
                    format!("must be in [0, 1], got {a}"),
                ));
            }
            if self.data.test_manifest.is_none() && self.data.synthetic.is_none() {
                return Err(config_err("stop_at_accuracy", "needs a test set"));
            }
        }
        match (&self.data.synthetic, &self.data.train_manifest) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "data",
                    "give either synthetic or train_manifest, not both",
                ))
            }
            (None, None) => return Err(config_err("data", "needs synthetic or train_manifest")),
            (Some(p), None) => {
                p.validate().map_err(|e| config_err("data.synthetic", e))?;
                if self.data.test_manifest.is_some() {
                    return Err(config_err(
                        "data.test_manifest",
                        "not used with synthetic data",
                    ));
                }
                if p.units != spec.input_shape().units() {
                    return Err(config_err(
                        "data.synthetic.units",
                        format!(
                            "{} units but the network input has {}",
                            p.units,
                            spec.input_shape().units()
                        ),
                    ));
                }
                if p.classes != spec.num_outputs() {
                    return Err(config_err(
                        "data.synthetic.classes",
                        format!(
                            "{} classes but the network has {} outputs",
                            p.classes,
                            spec.num_outputs()
                        ),
                    ));
                }
            }
            (None, Some(_)) => {}
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, anything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spikegrad::loss::LossKind;

    fn synthetic() -> RunConfig {
        RunConfig {
            architecture: "20-64-3".into(),
            data: DataConfig {
                synthetic: Some(SyntheticParams::default()),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn json_round_trip() {
        let c = synthetic();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_key() {
        let err = RunConfig::from_json(r#"{"loss": {"kind": "hinge"}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("loss.kind"), "{err}");
        let err = RunConfig::from_json(r#"{"optimizer": {"lr": "fast"}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("optimizer.lr"), "{err}");
        let err = RunConfig::from_json(r#"{"bogus": 1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        let err =
            RunConfig::from_json(r#"{"neuron": {"theta": 1, "tau_s": 1, "tau_r": 1, "x": 2}}"#)
                .unwrap_err()
                .to_string();
        assert!(err.contains("neuron"), "{err}");
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = synthetic();
        c.architecture = "20-6q-3".into();
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("architecture"));
        let mut c = synthetic();
        c.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
        let mut c = synthetic();
        c.loss = LossConfig::new(LossKind::Spikemax);
        assert!(c.validate().unwrap_err().to_string().contains("loss"));
        let mut c = synthetic();
        c.data.synthetic.as_mut().unwrap().classes = 4;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("data.synthetic.classes"));
        let mut c = synthetic();
        c.data.synthetic = None;
        assert!(c.validate().unwrap_err().to_string().contains("data"));
    }

    #[test]
    fn merge_overlays_nested_keys() {
        let mut base = serde_json::json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, serde_json::json!({"b": {"d": 4}, "e": 5}));
        assert_eq!(
            base,
            serde_json::json!({"a": 1, "b": {"c": 2, "d": 4}, "e": 5})
        );
    }
}
