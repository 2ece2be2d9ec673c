//! Accuracy versus inference time and per-layer spike counts.

use std::fmt::Write;

use rayon::prelude::*;

use crate::data::Labeled;
use crate::error::{Error, Result};
use crate::network::{Network, Weights};
use crate::tensor::{SpikeTensor, TimeGrid};

/// Argmax of spike counts over the first `bins` time bins. Ties go to the
/// lowest index, so an all-silent output predicts class 0.
pub fn classify_bins(output: &SpikeTensor, bins: usize) -> usize {
    let bins = bins.min(output.steps());
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..output.num_units() {
        let c: f64 = output.row(i)[..bins].iter().sum();
        if c > best.1 {
            best = (i, c);
        }
    }
    best.0
}

/// Class predicted from the spikes in `[0, t_ms)`.
pub fn classify_at(output: &SpikeTensor, t_ms: f64, grid: &TimeGrid) -> usize {
    classify_bins(output, bins_before(t_ms, grid))
}

/// Class predicted from the whole output record.
pub fn predict(output: &SpikeTensor) -> usize {
    classify_bins(output, output.steps())
}

/// Number of bins lying entirely before `t_ms`.
fn bins_before(t_ms: f64, grid: &TimeGrid) -> usize {
    // the epsilon absorbs round-off in t_ms / dt for t on a bin edge
    ((t_ms / grid.dt + 1e-9).floor().max(0.0) as usize).min(grid.num_steps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub accuracy: f64,
}

impl Evaluation {
    /// `index,label,prediction` rows.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("index,label,prediction\n");
        for (i, (l, p)) in self.labels.iter().zip(&self.predictions).enumerate() {
            let _ = writeln!(out, "{i},{l},{p}");
        }
        out
    }
}

fn require_data(data: &[Labeled]) -> Result<()> {
    if data.is_empty() {
        Err(Error::InvalidParam("no samples to evaluate".into()))
    } else {
        Ok(())
    }
}

pub fn evaluate(net: &Network, weights: &Weights, data: &[Labeled]) -> Result<Evaluation> {
    require_data(data)?;
    let predictions = data
        .par_iter()
        .map(|s| {
            let acts = net.forward(weights, &s.spikes)?;
            Ok(predict(&acts.last().unwrap().spikes))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let accuracy = accuracy(&predictions, &labels);
    Ok(Evaluation {
        predictions,
        labels,
        accuracy,
    })
}

fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    correct as f64 / labels.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyCurve {
    pub eval_times: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl LatencyCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ms,accuracy\n");
        for (t, a) in self.eval_times.iter().zip(&self.accuracy) {
            let _ = writeln!(out, "{t},{a}");
        }
        out
    }
}

/// Every `step_ms` up to the end of the grid, always including the end.
pub fn default_eval_times(grid: &TimeGrid, step_ms: f64) -> Vec<f64> {
    let end = grid.duration();
    let mut times: Vec<f64> = (1..)
        .map(|k| k as f64 * step_ms)
        .take_while(|&t| t < end - 1e-9)
        .collect();
    times.push(end);
    times
}

/// Accuracy when the decision is taken at each of `eval_times`, from one
/// full forward pass per sample. Causality makes the prefix of the full run
/// identical to a run on the truncated input.
pub fn latency_curve(
    net: &Network,
    weights: &Weights,
    data: &[Labeled],
    eval_times: &[f64],
) -> Result<LatencyCurve> {
    require_data(data)?;
    let grid = net.grid();
    if eval_times.is_empty() {
        return Err(Error::InvalidParam("no evaluation times".into()));
    }
    for (k, &t) in eval_times.iter().enumerate() {
        if !(t > 0.0 && t <= grid.duration() + 1e-9) {
            return Err(Error::OutOfRange(format!(
                "evaluation time {t} ms outside (0, {}]",
                grid.duration()
            )));
        }
        if k > 0 && t <= eval_times[k - 1] {
            return Err(Error::InvalidParam(
                "evaluation times must be strictly increasing".into(),
            ));
        }
    }
    let bins: Vec<usize> = eval_times.iter().map(|&t| bins_before(t, grid)).collect();
    let per_sample = data
        .par_iter()
        .map(|s| {
            let acts = net.forward(weights, &s.spikes)?;
            let out = &acts.last().unwrap().spikes;
            Ok(bins
                .iter()
                .map(|&b| classify_bins(out, b))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let accuracy = (0..bins.len())
        .map(|k| {
            let preds: Vec<usize> = per_sample.iter().map(|p| p[k]).collect();
            accuracy(&preds, &labels)
        })
        .collect();
    Ok(LatencyCurve {
        eval_times: eval_times.to_vec(),
        accuracy,
    })
}

/// Mean total spikes per sample for every layer, input first.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeCountReport {
    pub mean_spikes: Vec<f64>,
}

impl SpikeCountReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,mean_spikes\n");
        for (l, m) in self.mean_spikes.iter().enumerate() {
            let _ = writeln!(out, "{l},{m}");
        }
        out
    }
}

pub fn spike_report(
    net: &Network,
    weights: &Weights,
    data: &[Labeled],
) -> Result<SpikeCountReport> {
    require_data(data)?;
    let per_sample = data
        .par_iter()
        .map(|s| {
            let acts = net.forward(weights, &s.spikes)?;
            let mut totals = vec![s.spikes.total()];
            totals.extend(acts.iter().map(|a| a.spikes.total()));
            Ok(totals)
        })
        .collect::<Result<Vec<_>>>()?;
    let layers = net.depth() + 1;
    let n = data.len() as f64;
    let mean_spikes = (0..layers)
        .map(|l| per_sample.iter().map(|t| t[l]).sum::<f64>() / n)
        .collect();
    Ok(SpikeCountReport { mean_spikes })
}

/// Gnuplot script plotting a two-column CSV written by this module.
pub fn gnuplot_script(
    csv_file: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    boxes: bool,
) -> String {
    let style = if boxes {
        "with boxes"
    } else {
        "with linespoints"
    };
    let mut out = String::new();
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(out, "set key off");
    let _ = writeln!(out, "set title '{title}'");
    let _ = writeln!(out, "set xlabel '{xlabel}'");
    let _ = writeln!(out, "set ylabel '{ylabel}'");
    if boxes {
        let _ = writeln!(out, "set style fill solid 0.5");
        let _ = writeln!(out, "set logscale y");
    }
    let _ = writeln!(out, "plot '{csv_file}' every ::1 using 1:2 {style}");
    let _ = writeln!(out, "pause mouse close");
    out
}
