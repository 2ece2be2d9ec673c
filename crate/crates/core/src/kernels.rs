//! Spike-response and refractory kernels, plus the causal temporal
//! convolution and its adjoint (anti-causal correlation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, SpikeTensor, TimeGrid};

/// Relative magnitude below which a kernel tail is dropped.
pub const DEFAULT_CUTOFF: f64 = 0.01;

/// Kernels never exceed `MAX_SPAN_TAUS * tau / dt + 1` samples.
pub const MAX_SPAN_TAUS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Response,
    Refractory,
    Custom,
}

/// Causal kernel sampled at `t = k * dt`, `k = 0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelVector {
    samples: Vec<f64>,
    tau: f64,
    kind: KernelKind,
}

impl KernelVector {
    /// Kernel from raw samples; mostly useful in tests.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParam(
                "kernel needs at least one sample".into(),
            ));
        }
        Ok(Self {
            samples,
            tau: f64::NAN,
            kind: KernelKind::Custom,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }
}

/// `eps(t) = (t / tau_s) * exp(1 - t / tau_s)` for `t >= 0`.
pub fn build_response_kernel(tau_s: f64, grid: &TimeGrid, cutoff: f64) -> Result<KernelVector> {
    if !(tau_s > 0.0) {
        return Err(Error::InvalidParam(format!(
            "tau_s must be > 0, got {tau_s}"
        )));
    }
    let samples = sample_alpha(tau_s, 1.0, grid.dt, cutoff)?;
    Ok(KernelVector {
        samples,
        tau: tau_s,
        kind: KernelKind::Response,
    })
}

/// `nu(t) = -2 theta (t / tau_r) exp(1 - t / tau_r)` for `t >= 0`.
pub fn build_refractory_kernel(
    tau_r: f64,
    theta: f64,
    grid: &TimeGrid,
    cutoff: f64,
) -> Result<KernelVector> {
    if !(tau_r > 0.0) {
        return Err(Error::InvalidParam(format!(
            "tau_r must be > 0, got {tau_r}"
        )));
    }
    if !(theta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "theta must be > 0, got {theta}"
        )));
    }
    let samples = sample_alpha(tau_r, -2.0 * theta, grid.dt, cutoff)?;
    Ok(KernelVector {
        samples,
        tau: tau_r,
        kind: KernelKind::Refractory,
    })
}

/// Samples `amplitude * x * exp(1 - x)`, `x = k dt / tau`, truncated at the
/// first post-peak sample whose magnitude drops under `cutoff * |amplitude|`.
fn sample_alpha(tau: f64, amplitude: f64, dt: f64, cutoff: f64) -> Result<Vec<f64>> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidParam(format!(
            "kernel cutoff must lie in (0, 1), got {cutoff}"
        )));
    }
    let cap = (MAX_SPAN_TAUS * tau / dt).floor() as usize + 1;
    let threshold = cutoff * amplitude.abs();
    let mut samples = Vec::with_capacity(cap);
    for k in 0..cap {
        let x = k as f64 * dt / tau;
        let v = amplitude * x * (1.0 - x).exp();
        // the analytic peak sits at x = 1
        if x > 1.0 && v.abs() < threshold {
            break;
        }
        samples.push(v);
    }
    Ok(samples)
}

/// Causal convolution of one row: `out[t] = sum_k kernel[k] * x[t - k]`.
pub fn convolve_row(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    for t in 0..x.len() {
        let kmax = kernel.len().min(t + 1);
        let mut acc = 0.0;
        for (k, &w) in kernel[..kmax].iter().enumerate() {
            acc += w * x[t - k];
        }
        out[t] = acc;
    }
}

/// Anti-causal correlation of one row: `out[t] = sum_k kernel[k] * g[t + k]`.
pub fn correlate_row(kernel: &[f64], g: &[f64], out: &mut [f64]) {
    debug_assert_eq!(g.len(), out.len());
    let n = g.len();
    for t in 0..n {
        let kmax = kernel.len().min(n - t);
        let mut acc = 0.0;
        for (k, &w) in kernel[..kmax].iter().enumerate() {
            acc += w * g[t + k];
        }
        out[t] = acc;
    }
}

/// `(kernel * x)(t)`, independently per unit. Output shape is `[units..., steps]`.
pub fn temporal_convolve(kernel: &KernelVector, x: &SpikeTensor) -> DenseTensor {
    let steps = x.steps();
    let mut out = x.to_dense();
    for u in 0..x.num_units() {
        convolve_row(
            &kernel.samples,
            x.row(u),
            &mut out.data_mut()[u * steps..(u + 1) * steps],
        );
    }
    out
}

/// `(kernel ⊙ g)(t)`: the adjoint of [`temporal_convolve`] along the innermost axis.
pub fn temporal_correlate(kernel: &KernelVector, g: &DenseTensor) -> DenseTensor {
    let mut out = g.clone();
    for r in 0..g.num_rows() {
        correlate_row(&kernel.samples, g.row(r), out.row_mut(r));
    }
    out
}
