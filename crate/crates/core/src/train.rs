//! Mini-batch training. Per-sample work runs in parallel against a read-only
//! weight snapshot; gradients are summed in sample-index order so results do
//! not depend on the worker count.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Labeled;
use crate::error::{Error, Result};
use crate::loss::{classification_loss, LossConfig};
use crate::metrics::predict;
use crate::network::{Network, Weights};
use crate::optim::OptimizerState;
use crate::rng::{stream, Purpose};

/// Loss, weight gradient and prediction for one sample.
#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub loss: f64,
    pub grads: Weights,
    pub prediction: usize,
}

pub fn sample_gradient(
    net: &Network,
    weights: &Weights,
    sample: &Labeled,
    loss_cfg: &LossConfig,
) -> Result<SampleOutcome> {
    let acts = net.forward(weights, &sample.spikes)?;
    let output = &acts.last().unwrap().spikes;
    let loss = classification_loss(output, sample.label, loss_cfg, net.grid())?;
    let grads = net.backward(weights, &acts, &loss.grad_spikes)?;
    Ok(SampleOutcome {
        loss: loss.value,
        grads,
        prediction: predict(output),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// One pass over `data` in an order drawn from `(seed, epoch)`. Each batch
/// sums its per-sample gradients and takes one optimizer step; weights are
/// rounded to `f32` after every step.
pub fn train_epoch(
    net: &Network,
    weights: &mut Weights,
    data: &[Labeled],
    loss_cfg: &LossConfig,
    opt: &mut OptimizerState,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::InvalidParam("training set is empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidParam("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream(seed, Purpose::Shuffle, epoch as u64));

    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for batch in order.chunks(batch_size) {
        let snapshot = &*weights;
        let outcomes = batch
            .par_iter()
            .map(|&i| sample_gradient(net, snapshot, &data[i], loss_cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut grads = weights.zeros_like();
        for (&i, out) in batch.iter().zip(&outcomes) {
            if !out.loss.is_finite() {
                return Err(Error::NonFinite {
                    sample: i,
                    detail: format!("loss = {}", out.loss),
                });
            }
            if let Some((l, _)) = out
                .grads
                .layers
                .iter()
                .enumerate()
                .find(|(_, g)| g.iter().any(|x| !x.is_finite()))
            {
                return Err(Error::NonFinite {
                    sample: i,
                    detail: format!("gradient of layer {l} is not finite"),
                });
            }
            grads.accumulate(&out.grads);
            total_loss += out.loss;
            correct += usize::from(out.prediction == data[i].label);
        }
        opt.step(weights, &grads)?;
        weights.quantize_f32();
    }
    Ok(EpochStats {
        mean_loss: total_loss / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_accuracy,test_accuracy";

/// Training log as CSV; a missing test accuracy is an empty field.
pub fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in history {
        let test = r.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.epoch, r.train_loss, r.train_accuracy, test
        );
    }
    out
}
