//! Output losses and their gradients with respect to the output spike tensor.
//!
//! All counts are in spikes (one unit per bin), so a record of `T` bins has
//! rates `c / T` spikes per bin.
//!
//! The count-probability losses:
//!
//! * **spikemax**: trailing-window counts `c_i(t)` over `W` bins, probability
//!   `p_i(t) = (c_i(t) + eps) / sum_k (c_k(t) + eps)`, loss averaged over bins.
//! * **spikemax_g**: the same with a single global count over the record.
//! * **spikemax_s**: softmax of global counts.
//!
//! The closed-form gradients of spikemax and spikemax_g carry a `W` (resp.
//! `T`) factor and treat each bin's count as depending on that bin alone.
//! [`GradientForm::Exact`] gives the true derivative of the loss value instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{build_response_kernel, correlate_row, temporal_convolve, DEFAULT_CUTOFF};
use crate::tensor::{DenseTensor, SpikeTensor, TimeGrid};

pub const DEFAULT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    VanRossum,
    SpikeRate,
    Spikemax,
    SpikemaxG,
    SpikemaxS,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::VanRossum,
        LossKind::SpikeRate,
        LossKind::Spikemax,
        LossKind::SpikemaxG,
        LossKind::SpikemaxS,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::VanRossum => "van_rossum",
            LossKind::SpikeRate => "spike_rate",
            LossKind::Spikemax => "spikemax",
            LossKind::SpikemaxG => "spikemax_g",
            LossKind::SpikemaxS => "spikemax_s",
        }
    }

    fn is_spikemax(&self) -> bool {
        matches!(
            self,
            LossKind::Spikemax | LossKind::SpikemaxG | LossKind::SpikemaxS
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientForm {
    /// The printed closed forms (per-bin window, `W`/`T` scaling).
    #[default]
    Closed,
    /// Exact derivative of the loss value.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Count window in bins (spikemax only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Target rate of the true class, spikes per bin (spike_rate / van_rossum).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_false: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Filter time constant for van Rossum, ms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(default)]
    pub gradient: GradientForm,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            window: None,
            rate_true: None,
            rate_false: None,
            eps: DEFAULT_EPS,
            tau_s: None,
            gradient: GradientForm::Closed,
        }
    }

    pub fn spikemax(window: usize) -> Self {
        Self {
            window: Some(window),
            ..Self::new(LossKind::Spikemax)
        }
    }

    pub fn spike_rate(rate_true: f64, rate_false: f64) -> Self {
        Self {
            rate_true: Some(rate_true),
            rate_false: Some(rate_false),
            ..Self::new(LossKind::SpikeRate)
        }
    }

    pub fn van_rossum(tau_s: f64) -> Self {
        Self {
            tau_s: Some(tau_s),
            ..Self::new(LossKind::VanRossum)
        }
    }

    pub fn with_gradient(mut self, form: GradientForm) -> Self {
        self.gradient = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParam(format!(
                "loss.eps must be > 0, got {}",
                self.eps
            )));
        }
        if self.kind.is_spikemax() && (self.rate_true.is_some() || self.rate_false.is_some()) {
            return Err(Error::InvalidParam(format!(
                "{} takes no target rates",
                self.kind.name()
            )));
        }
        match self.kind {
            LossKind::Spikemax => match self.window {
                Some(w) if w >= 1 => {}
                Some(_) => return Err(Error::InvalidParam("loss.window must be >= 1".into())),
                None => return Err(Error::InvalidParam("spikemax needs loss.window".into())),
            },
            _ if self.window.is_some() => {
                return Err(Error::InvalidParam(format!(
                    "loss.window only applies to spikemax, not {}",
                    self.kind.name()
                )))
            }
            _ => {}
        }
        if self.kind == LossKind::SpikeRate
            && (self.rate_true.is_none() || self.rate_false.is_none())
        {
            return Err(Error::InvalidParam(
                "spike_rate needs loss.rate_true and loss.rate_false".into(),
            ));
        }
        for (name, rate) in [
            ("rate_true", self.rate_true),
            ("rate_false", self.rate_false),
        ] {
            if let Some(r) = rate {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InvalidParam(format!(
                        "loss.{name} must lie in [0, 1], got {r}"
                    )));
                }
            }
        }
        if self.kind == LossKind::VanRossum {
            match self.tau_s {
                Some(t) if t > 0.0 => {}
                _ => {
                    return Err(Error::InvalidParam(
                        "van_rossum needs loss.tau_s > 0".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `dL/ds(t)`, shaped `[units, steps]`.
    pub grad_spikes: DenseTensor,
}

/// Trailing-window counts `c_i(t) = sum_{max(0, t-W+1) <= tau <= t} s_i(tau)`.
pub fn windowed_counts(spikes: &SpikeTensor, window: usize) -> DenseTensor {
    let steps = spikes.steps();
    let n = spikes.num_units();
    let mut out = vec![0.0; n * steps];
    for i in 0..n {
        let s = spikes.row(i);
        let c = &mut out[i * steps..(i + 1) * steps];
        // recomputed per bin so values are exact sums of the window contents
        for t in 0..steps {
            let start = (t + 1).saturating_sub(window);
            c[t] = s[start..=t].iter().sum();
        }
    }
    DenseTensor::from_vec(&[n, steps], out).expect("consistent")
}

/// Normalizes counts over the class axis. A 1-D tensor is one column; a
/// `[classes, steps]` tensor is normalized independently at every step.
pub fn probability_estimate(counts: &DenseTensor, eps: f64) -> DenseTensor {
    let (classes, cols) = match counts.shape() {
        [n] => (*n, 1),
        shape => (shape[0], counts.len() / shape[0]),
    };
    let mut p = counts.clone();
    let data = p.data_mut();
    for t in 0..cols {
        let total: f64 = (0..classes).map(|i| data[i * cols + t] + eps).sum();
        for i in 0..classes {
            data[i * cols + t] = (data[i * cols + t] + eps) / total;
        }
    }
    p
}

fn check_class(output: &SpikeTensor, target: usize) -> Result<()> {
    if target >= output.num_units() {
        return Err(Error::OutOfRange(format!(
            "target class {target} with {} output units",
            output.num_units()
        )));
    }
    Ok(())
}

fn total_counts(output: &SpikeTensor) -> Vec<f64> {
    (0..output.num_units())
        .map(|i| output.row(i).iter().sum())
        .collect()
}

fn grad_tensor(output: &SpikeTensor, data: Vec<f64>) -> DenseTensor {
    DenseTensor::from_vec(&[output.num_units(), output.steps()], data).expect("consistent")
}

/// Sliding-window negative log-likelihood, averaged over bins.
pub fn spikemax_loss(output: &SpikeTensor, target: usize, cfg: &LossConfig) -> Result<LossResult> {
    check_class(output, target)?;
    let window = cfg
        .window
        .filter(|&w| w >= 1)
        .ok_or_else(|| Error::InvalidParam("spikemax needs a window >= 1".into()))?;
    let steps = output.steps();
    let n = output.num_units();
    let scale = 1.0 / steps as f64;
    let counts = windowed_counts(output, window);
    let p = probability_estimate(&counts, cfg.eps);
    let (c, p) = (counts.data(), p.data());
    let value = scale * (0..steps).map(|t| -p[target * steps + t].ln()).sum::<f64>();

    // dL/dc_i(t), exact
    let dc = |i: usize, t: usize| {
        let y = if i == target { 1.0 } else { 0.0 };
        scale * (p[i * steps + t] - y) / (c[i * steps + t] + cfg.eps)
    };
    let mut grad = vec![0.0; n * steps];
    for i in 0..n {
        for tau in 0..steps {
            grad[i * steps + tau] = match cfg.gradient {
                GradientForm::Closed => window as f64 * dc(i, tau),
                GradientForm::Exact => (tau..steps.min(tau + window)).map(|t| dc(i, t)).sum(),
            };
        }
    }
    Ok(LossResult {
        value,
        grad_spikes: grad_tensor(output, grad),
    })
}

/// Negative log-likelihood of the global count probability.
pub fn spikemax_g_loss(
    output: &SpikeTensor,
    target: usize,
    cfg: &LossConfig,
) -> Result<LossResult> {
    check_class(output, target)?;
    let steps = output.steps();
    let counts = total_counts(output);
    let p = probability_estimate(
        &DenseTensor::from_vec(&[counts.len()], counts.clone())?,
        cfg.eps,
    );
    let p = p.data();
    let value = -p[target].ln();
    let factor = match cfg.gradient {
        GradientForm::Closed => steps as f64,
        GradientForm::Exact => 1.0,
    };
    let mut grad = Vec::with_capacity(counts.len() * steps);
    for (i, c) in counts.iter().enumerate() {
        let y = if i == target { 1.0 } else { 0.0 };
        let g = (p[i] - y) * factor / (c + cfg.eps);
        grad.extend(std::iter::repeat(g).take(steps));
    }
    Ok(LossResult {
        value,
        grad_spikes: grad_tensor(output, grad),
    })
}

/// Softmax of global counts (max-subtracted).
pub fn softmax_counts(counts: &[f64]) -> Vec<f64> {
    let max = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = counts.iter().map(|c| (c - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Negative log-likelihood of the softmax over global counts.
pub fn spikemax_s_loss(
    output: &SpikeTensor,
    target: usize,
    _cfg: &LossConfig,
) -> Result<LossResult> {
    check_class(output, target)?;
    let steps = output.steps();
    let counts = total_counts(output);
    let max = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_total = counts.iter().map(|c| (c - max).exp()).sum::<f64>().ln();
    let value = log_total - (counts[target] - max);
    let ps = softmax_counts(&counts);
    let mut grad = Vec::with_capacity(counts.len() * steps);
    for (i, p) in ps.iter().enumerate() {
        let y = if i == target { 1.0 } else { 0.0 };
        grad.extend(std::iter::repeat(p - y).take(steps));
    }
    Ok(LossResult {
        value,
        grad_spikes: grad_tensor(output, grad),
    })
}

/// Squared error between per-neuron rates (spikes per bin) and class targets.
pub fn spike_rate_loss(
    output: &SpikeTensor,
    target: usize,
    cfg: &LossConfig,
) -> Result<LossResult> {
    check_class(output, target)?;
    let (rate_true, rate_false) = match (cfg.rate_true, cfg.rate_false) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidParam("spike_rate needs target rates".into())),
    };
    let steps = output.steps() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(output.data().len());
    for (i, c) in total_counts(output).into_iter().enumerate() {
        let goal = if i == target { rate_true } else { rate_false };
        let diff = c / steps - goal;
        value += diff * diff;
        grad.extend(std::iter::repeat(2.0 * diff / steps).take(output.steps()));
    }
    Ok(LossResult {
        value,
        grad_spikes: grad_tensor(output, grad),
    })
}

/// `L = sum_t (eps * (s - s_hat))(t)^2 dt`.
pub fn van_rossum_loss(
    output: &SpikeTensor,
    target: &SpikeTensor,
    cfg: &LossConfig,
    grid: &TimeGrid,
) -> Result<LossResult> {
    if output.units() != target.units() || output.steps() != target.steps() {
        return Err(Error::Shape(format!(
            "output {:?}x{} vs target {:?}x{}",
            output.units(),
            output.steps(),
            target.units(),
            target.steps()
        )));
    }
    let tau = cfg
        .tau_s
        .ok_or_else(|| Error::InvalidParam("van_rossum needs tau_s".into()))?;
    let kernel = build_response_kernel(tau, grid, DEFAULT_CUTOFF)?;
    let diff: Vec<f64> = output
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| a - b)
        .collect();
    let diff = SpikeTensor::from_vec(output.units(), output.steps(), diff)?;
    let e = temporal_convolve(&kernel, &diff);
    let dt = grid.dt;
    let value = e.data().iter().map(|v| v * v).sum::<f64>() * dt;
    let steps = output.steps();
    let mut grad = vec![0.0; e.len()];
    for r in 0..output.num_units() {
        correlate_row(
            kernel.samples(),
            e.row(r),
            &mut grad[r * steps..(r + 1) * steps],
        );
    }
    grad.iter_mut().for_each(|g| *g *= 2.0 * dt);
    Ok(LossResult {
        value,
        grad_spikes: grad_tensor(output, grad),
    })
}

/// Regular target train for van Rossum classification: the true class fires
/// every `1 / rate_true` bins, the others every `1 / rate_false` bins.
pub fn class_target_train(
    classes: usize,
    steps: usize,
    target: usize,
    rate_true: f64,
    rate_false: f64,
) -> SpikeTensor {
    let mut out = SpikeTensor::from_vec(&[classes], steps, vec![0.0; classes * steps])
        .expect("nonzero sizes");
    for i in 0..classes {
        let rate = if i == target { rate_true } else { rate_false };
        if rate <= 0.0 {
            continue;
        }
        let period = (1.0 / rate).round().max(1.0) as usize;
        for t in (period - 1..steps).step_by(period) {
            out.set(i, t, 1.0);
        }
    }
    out
}

/// Classification loss for any configured kind.
pub fn classification_loss(
    output: &SpikeTensor,
    target: usize,
    cfg: &LossConfig,
    grid: &TimeGrid,
) -> Result<LossResult> {
    match cfg.kind {
        LossKind::Spikemax => spikemax_loss(output, target, cfg),
        LossKind::SpikemaxG => spikemax_g_loss(output, target, cfg),
        LossKind::SpikemaxS => spikemax_s_loss(output, target, cfg),
        LossKind::SpikeRate => spike_rate_loss(output, target, cfg),
        LossKind::VanRossum => {
            check_class(output, target)?;
            let goal = class_target_train(
                output.num_units(),
                output.steps(),
                target,
                cfg.rate_true.unwrap_or(0.2),
                cfg.rate_false.unwrap_or(0.0),
            )
            .reshaped(output.units())?;
            van_rossum_loss(output, &goal, cfg, grid)
        }
    }
}
