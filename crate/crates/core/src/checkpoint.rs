//! Checkpoint files: the 8-byte magic `SPKM0001`, a little-endian `u32`
//! header length, a UTF-8 JSON header, then one little-endian `f32` blob per
//! weight layer in declared order (input and pooling layers contribute none).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::parse_architecture;
use crate::arch::NetworkSpec;
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::network::Weights;
use crate::neuron::NeuronParams;
use crate::train::EpochRecord;

pub const MAGIC: &[u8; 8] = b"SPKM0001";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub architecture: String,
    pub neuron: NeuronParams,
    pub loss: LossConfig,
    pub dt: f64,
    pub num_steps: usize,
    pub pool_scale: f64,
    pub kernel_cutoff: f64,
    pub epoch: usize,
    pub seed: u64,
    pub metrics: Vec<EpochRecord>,
    /// Number of `f32` values stored for each layer.
    pub layer_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub weights: Weights,
}

impl Checkpoint {
    /// Builds a checkpoint, filling in `layer_sizes` from the weights.
    pub fn new(mut header: CheckpointHeader, weights: Weights) -> Self {
        header.layer_sizes = weights.layers.iter().map(Vec::len).collect();
        Checkpoint { header, weights }
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        Ok(parse_architecture(&self.header.architecture)?.with_neuron_params(self.header.neuron))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let n: usize = self.weights.num_parameters();
        let mut out = Vec::with_capacity(12 + header.len() + 4 * n);
        out.extend_from_slice(MAGIC);
        let len = u32::try_from(header.len())
            .map_err(|_| Error::Checkpoint("header larger than 4 GiB".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&header);
        for w in self.weights.iter() {
            out.extend_from_slice(&(*w as f32).to_le_bytes());
        }
        Ok(out)
    }

    /// Parses and validates: the header's architecture must parse and its
    /// per-layer sizes must match the architecture's parameter counts.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("missing SPKM0001 magic".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < len {
            return Err(Error::Checkpoint(format!(
                "header claims {len} bytes, only {} present",
                body.len()
            )));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..len])
            .map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
        let spec = parse_architecture(&header.architecture)?;
        let expected = spec.layer_parameter_counts();
        if expected != header.layer_sizes {
            return Err(Error::Checkpoint(format!(
                "layer sizes {:?} do not match architecture {} ({:?})",
                header.layer_sizes, header.architecture, expected
            )));
        }
        let mut rest = &body[len..];
        let mut layers = Vec::with_capacity(expected.len());
        for (l, &n) in expected.iter().enumerate() {
            if rest.len() < 4 * n {
                return Err(Error::Checkpoint(format!(
                    "truncated blob for layer {l} ({}): need {} bytes, {} left",
                    spec.layers[l].kind_token(),
                    4 * n,
                    rest.len()
                )));
            }
            let (blob, tail) = rest.split_at(4 * n);
            layers.push(
                blob.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                    .collect(),
            );
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last layer",
                rest.len()
            )));
        }
        Ok(Checkpoint {
            header,
            weights: Weights { layers },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the stored architecture is `expected`.
    pub fn load_for(path: &Path, expected: &NetworkSpec) -> Result<Self> {
        let ckpt = Self::load(path)?;
        let stored = parse_architecture(&ckpt.header.architecture)?;
        if stored.to_string() != expected.to_string() {
            return Err(Error::Checkpoint(format!(
                "checkpoint architecture {stored} does not match {expected}"
            )));
        }
        Ok(ckpt)
    }
}
