//! Named starting configurations. The benchmark presets carry the published
//! per-dataset neuron and loss constants; epochs, batch size and learning
//! rate there are guesses, since no values were published for them.

use std::path::PathBuf;

use spikegrad::data::SyntheticParams;
use spikegrad::loss::{LossConfig, LossKind};
use spikegrad::neuron::NeuronParams;
use spikegrad::optim::OptimizerConfig;

use crate::config::{DataConfig, RunConfig};

pub const PRESET_NAMES: [&str; 4] = ["synthetic-smoke", "nmnist", "dvs-gesture", "ntidigits"];

/// Per-dataset constants shared by every loss choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetConstants {
    pub theta: f64,
    pub dt: f64,
    pub tau_s: f64,
    pub tau_r: f64,
    /// spikemax window in bins.
    pub window: usize,
    pub rate_true: f64,
    pub rate_false: f64,
}

pub const NMNIST: DatasetConstants = DatasetConstants {
    theta: 10.0,
    dt: 1.0,
    tau_s: 1.0,
    tau_r: 1.0,
    window: 30,
    rate_true: 0.2,
    rate_false: 0.04,
};

pub const DVS_GESTURE: DatasetConstants = DatasetConstants {
    theta: 10.0,
    dt: 1.0,
    tau_s: 5.0,
    tau_r: 5.0,
    window: 35,
    rate_true: 0.35,
    rate_false: 0.07,
};

pub const NTIDIGITS: DatasetConstants = DatasetConstants {
    theta: 10.0,
    dt: 1.0,
    tau_s: 5.0,
    tau_r: 5.0,
    window: 40,
    rate_true: 0.2,
    rate_false: 0.02,
};

/// The synthetic task reuses the N-MNIST neuron and loss constants.
pub const SYNTHETIC: DatasetConstants = NMNIST;

/// spikemax stabilizer for the synthetic preset. With the default 1e-9 the
/// windows where the true class is silent dominate the gradient on this task.
pub const SYNTHETIC_EPS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub constants: DatasetConstants,
    pub default_loss: LossKind,
    base: RunConfig,
    eps: Option<f64>,
}

impl Preset {
    /// The preset's configuration with its default loss.
    pub fn config(&self) -> RunConfig {
        self.with_loss(self.default_loss)
    }

    /// The preset's configuration with `kind` filled in from the dataset constants.
    pub fn with_loss(&self, kind: LossKind) -> RunConfig {
        let c = &self.constants;
        let mut loss = match kind {
            LossKind::Spikemax => LossConfig::spikemax(c.window),
            LossKind::SpikeRate => LossConfig::spike_rate(c.rate_true, c.rate_false),
            LossKind::VanRossum => LossConfig {
                rate_true: Some(c.rate_true),
                rate_false: Some(c.rate_false),
                ..LossConfig::van_rossum(c.tau_s)
            },
            k => LossConfig::new(k),
        };
        if let (Some(eps), true) = (self.eps, kind == LossKind::Spikemax) {
            loss.eps = eps;
        }
        RunConfig {
            loss,
            ..self.base.clone()
        }
    }
}

fn neuron(c: &DatasetConstants) -> NeuronParams {
    NeuronParams::new(c.theta, c.tau_s, c.tau_r)
}

fn manifests(dir: &str) -> DataConfig {
    DataConfig {
        train_manifest: Some(PathBuf::from(format!("data/{dir}/train.json"))),
        test_manifest: Some(PathBuf::from(format!("data/{dir}/test.json"))),
        ..Default::default()
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let (constants, default_loss, eps, base) = match name {
        "synthetic-smoke" => (
            SYNTHETIC,
            LossKind::Spikemax,
            Some(SYNTHETIC_EPS),
            RunConfig {
                architecture: "20-64-3".into(),
                data: DataConfig {
                    synthetic: Some(SyntheticParams::default()),
                    ..Default::default()
                },
                optimizer: OptimizerConfig::adam(0.03),
                epochs: 50,
                batch_size: 10,
                stop_at_accuracy: Some(0.95),
                output_dir: "runs/synthetic-smoke".into(),
                ..Default::default()
            },
        ),
        "nmnist" => (
            NMNIST,
            LossKind::Spikemax,
            None,
            RunConfig {
                architecture: "34x34x2-16c5-2a-32c3-2a-64c3-512-10".into(),
                data: manifests("nmnist"),
                epochs: 50,
                batch_size: 32,
                output_dir: "runs/nmnist".into(),
                ..Default::default()
            },
        ),
        "dvs-gesture" => (
            DVS_GESTURE,
            LossKind::Spikemax,
            None,
            RunConfig {
                architecture: "128x128x2-4a-16c5-2a-32c3-2a-512-11".into(),
                data: manifests("dvs-gesture"),
                epochs: 100,
                batch_size: 16,
                output_dir: "runs/dvs-gesture".into(),
                ..Default::default()
            },
        ),
        "ntidigits" => (
            NTIDIGITS,
            LossKind::Spikemax,
            None,
            RunConfig {
                architecture: "64-256-256-11".into(),
                data: manifests("ntidigits"),
                epochs: 100,
                batch_size: 32,
                output_dir: "runs/ntidigits".into(),
                ..Default::default()
            },
        ),
        _ => return None,
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name).copied()?;
    let base = RunConfig {
        neuron: neuron(&constants),
        dt: constants.dt,
        ..base
    };
    Some(Preset {
        name,
        constants,
        default_loss,
        base,
        eps,
    })
}
