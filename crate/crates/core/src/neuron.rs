//! Spike Response Model layer: forward simulation with refractory feedback
//! and the surrogate-gradient backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    build_refractory_kernel, build_response_kernel, correlate_row, temporal_convolve, KernelVector,
    DEFAULT_CUTOFF,
};
use crate::tensor::{DenseTensor, SpikeTensor, TimeGrid};

/// Neuron constants. Voltages in mV, times in ms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronParams {
    pub theta: f64,
    pub tau_s: f64,
    pub tau_r: f64,
    /// Surrogate peak scale (gamma).
    #[serde(default = "default_surrogate_scale")]
    pub surrogate_scale: f64,
    /// Surrogate width (alpha). `None` means `theta / 2`.
    #[serde(default)]
    pub surrogate_width: Option<f64>,
}

fn default_surrogate_scale() -> f64 {
    1.0
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            theta: 10.0,
            tau_s: 1.0,
            tau_r: 1.0,
            surrogate_scale: 1.0,
            surrogate_width: None,
        }
    }
}

impl NeuronParams {
    pub fn new(theta: f64, tau_s: f64, tau_r: f64) -> Self {
        Self {
            theta,
            tau_s,
            tau_r,
            ..Self::default()
        }
    }

    pub fn width(&self) -> f64 {
        self.surrogate_width.unwrap_or(self.theta / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("theta", self.theta),
            ("tau_s", self.tau_s),
            ("tau_r", self.tau_r),
            ("surrogate_scale", self.surrogate_scale),
            ("surrogate_width", self.width()),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// How membrane potential becomes spikes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpikeFunction {
    /// Hard threshold `u >= theta` with refractory feedback; backward uses the
    /// exponential surrogate.
    Threshold,
    /// `s = sigmoid((u - theta) / width)` with no refractory feedback. The
    /// layer is then a smooth feed-forward map whose exact gradient is what
    /// [`backward`] computes, which makes it usable for finite-difference checks.
    Sigmoid { width: f64 },
}

/// Neuron constants together with their sampled kernels.
#[derive(Clone, Debug)]
pub struct SrmDynamics {
    pub params: NeuronParams,
    pub response: KernelVector,
    pub refractory: KernelVector,
    pub spike_fn: SpikeFunction,
}

impl SrmDynamics {
    pub fn new(params: NeuronParams, grid: &TimeGrid) -> Result<Self> {
        Self::with_cutoff(params, grid, DEFAULT_CUTOFF)
    }

    pub fn with_cutoff(params: NeuronParams, grid: &TimeGrid, cutoff: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            response: build_response_kernel(params.tau_s, grid, cutoff)?,
            refractory: build_refractory_kernel(params.tau_r, params.theta, grid, cutoff)?,
            params,
            spike_fn: SpikeFunction::Threshold,
        })
    }

    pub fn relaxed(mut self, width: f64) -> Self {
        self.spike_fn = SpikeFunction::Sigmoid { width };
        self
    }

    /// `(eps * s)(t)` for every input unit.
    pub fn psp(&self, input: &SpikeTensor) -> DenseTensor {
        temporal_convolve(&self.response, input)
    }

    /// Runs the membrane/threshold recurrence over a precomputed feed-forward
    /// drive `[units..., steps]`.
    pub fn fire(&self, drive: &DenseTensor) -> (DenseTensor, SpikeTensor) {
        let steps = drive.inner_len();
        let mut membrane = drive.clone();
        let mut spikes = vec![0.0; drive.len()];
        match self.spike_fn {
            SpikeFunction::Threshold => {
                let theta = self.params.theta;
                let nu = self.refractory.samples();
                let mut feedback = vec![0.0; steps];
                for n in 0..drive.num_rows() {
                    feedback.iter_mut().for_each(|v| *v = 0.0);
                    let u = membrane.row_mut(n);
                    let s = &mut spikes[n * steps..(n + 1) * steps];
                    for t in 0..steps {
                        u[t] += feedback[t];
                        if u[t] >= theta {
                            s[t] = 1.0;
                            for (k, &w) in nu.iter().enumerate().skip(1) {
                                if t + k >= steps {
                                    break;
                                }
                                feedback[t + k] += w;
                            }
                        }
                    }
                }
            }
            SpikeFunction::Sigmoid { width } => {
                let theta = self.params.theta;
                for (s, &u) in spikes.iter_mut().zip(membrane.data()) {
                    *s = sigmoid((u - theta) / width);
                }
            }
        }
        let spikes = SpikeTensor::from_dense(
            DenseTensor::from_vec(drive.shape(), spikes).expect("same shape as drive"),
        )
        .expect("drive has a time axis");
        (membrane, spikes)
    }

    /// `d s / d u` as used by the backward pass.
    pub fn spike_derivative(&self, membrane: &DenseTensor) -> DenseTensor {
        match self.spike_fn {
            SpikeFunction::Threshold => surrogate_derivative(membrane, &self.params),
            SpikeFunction::Sigmoid { width } => {
                let theta = self.params.theta;
                let data = membrane
                    .data()
                    .iter()
                    .map(|&u| {
                        let s = sigmoid((u - theta) / width);
                        s * (1.0 - s) / width
                    })
                    .collect();
                DenseTensor::from_vec(membrane.shape(), data).expect("same shape")
            }
        }
    }

    /// `e(t) = rho(u(t)) * dL/ds(t)`.
    pub fn local_error(
        &self,
        grad_spikes: &DenseTensor,
        membrane: &DenseTensor,
    ) -> Result<DenseTensor> {
        if grad_spikes.shape() != membrane.shape() {
            return Err(Error::Shape(format!(
                "spike gradient {:?} vs membrane {:?}",
                grad_spikes.shape(),
                membrane.shape()
            )));
        }
        let mut e = self.spike_derivative(membrane);
        for (ei, gi) in e.data_mut().iter_mut().zip(grad_spikes.data()) {
            *ei *= gi;
        }
        Ok(e)
    }

    /// Temporal credit assignment of a gradient on the synaptic drive back onto
    /// the spikes that produced it.
    pub fn correlate_response(&self, grad_psp: &DenseTensor) -> DenseTensor {
        let mut out = grad_psp.clone();
        for r in 0..grad_psp.num_rows() {
            correlate_row(self.response.samples(), grad_psp.row(r), out.row_mut(r));
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `rho(u) = (gamma / alpha) exp(-|u - theta| / alpha)`, elementwise.
pub fn surrogate_derivative(membrane: &DenseTensor, params: &NeuronParams) -> DenseTensor {
    let alpha = params.width();
    let peak = params.surrogate_scale / alpha;
    let data = membrane
        .data()
        .iter()
        .map(|&u| peak * (-(u - params.theta).abs() / alpha).exp())
        .collect();
    DenseTensor::from_vec(membrane.shape(), data).expect("same shape")
}

/// Result of simulating one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivation {
    /// `u(t)` including refractory contributions, `[units..., steps]`.
    pub membrane: DenseTensor,
    pub spikes: SpikeTensor,
    /// `(eps * s_in)(t)` of the layer input, kept for the weight gradient.
    pub synaptic_drive: DenseTensor,
}

/// `drive[i, t] = sum_j w[i, j] * psp[j, t]` for row-major `w` of shape `[n_out, n_in]`.
pub(crate) fn dense_drive(w: &[f64], n_out: usize, psp: &DenseTensor) -> DenseTensor {
    let steps = psp.inner_len();
    let n_in = psp.num_rows();
    let mut out = vec![0.0; n_out * steps];
    for i in 0..n_out {
        let row = &mut out[i * steps..(i + 1) * steps];
        for j in 0..n_in {
            let wij = w[i * n_in + j];
            for (o, &p) in row.iter_mut().zip(psp.row(j)) {
                *o += wij * p;
            }
        }
    }
    DenseTensor::from_vec(&[n_out, steps], out).expect("consistent sizes")
}

/// Returns `(grad_w, grad_psp)` for the dense map given local error `e`.
pub(crate) fn dense_backward(
    w: &[f64],
    e: &DenseTensor,
    psp: &DenseTensor,
) -> (Vec<f64>, DenseTensor) {
    let steps = psp.inner_len();
    let n_in = psp.num_rows();
    let n_out = e.num_rows();
    let mut grad_w = vec![0.0; n_out * n_in];
    let mut grad_psp = vec![0.0; n_in * steps];
    for i in 0..n_out {
        let ei = e.row(i);
        if ei.iter().all(|&v| v == 0.0) {
            continue;
        }
        for j in 0..n_in {
            grad_w[i * n_in + j] = ei.iter().zip(psp.row(j)).map(|(a, b)| a * b).sum();
            let wij = w[i * n_in + j];
            for (g, &v) in grad_psp[j * steps..(j + 1) * steps].iter_mut().zip(ei) {
                *g += wij * v;
            }
        }
    }
    (
        grad_w,
        DenseTensor::from_vec(&[n_in, steps], grad_psp).expect("consistent sizes"),
    )
}

fn check_weights(weights: &DenseTensor, n_in: usize) -> Result<usize> {
    match weights.shape() {
        [n_out, cols] if *cols == n_in => Ok(*n_out),
        other => Err(Error::Shape(format!(
            "weights {other:?} do not accept {n_in} input units"
        ))),
    }
}

/// Simulates a fully connected SRM layer.
pub fn forward(
    weights: &DenseTensor,
    input_spikes: &SpikeTensor,
    dynamics: &SrmDynamics,
) -> Result<LayerActivation> {
    let n_out = check_weights(weights, input_spikes.num_units())?;
    let psp = dynamics.psp(input_spikes);
    let psp = DenseTensor::from_vec(
        &[input_spikes.num_units(), input_spikes.steps()],
        psp.into_vec(),
    )?;
    let drive = dense_drive(weights.data(), n_out, &psp);
    let (membrane, spikes) = dynamics.fire(&drive);
    Ok(LayerActivation {
        membrane,
        spikes,
        synaptic_drive: psp,
    })
}

/// Backward pass of [`forward`]: `(dL/dW, dL/ds_in)`.
///
/// The refractory path carries no gradient.
pub fn backward(
    grad_spikes: &DenseTensor,
    activation: &LayerActivation,
    weights: &DenseTensor,
    dynamics: &SrmDynamics,
) -> Result<(DenseTensor, DenseTensor)> {
    let n_in = activation.synaptic_drive.num_rows();
    let n_out = check_weights(weights, n_in)?;
    if grad_spikes.num_rows() != n_out || grad_spikes.len() != activation.membrane.len() {
        return Err(Error::Shape(format!(
            "spike gradient {:?} does not match layer output {:?}",
            grad_spikes.shape(),
            activation.membrane.shape()
        )));
    }
    let e = dynamics.local_error(grad_spikes, &activation.membrane)?;
    let (grad_w, grad_psp) = dense_backward(weights.data(), &e, &activation.synaptic_drive);
    Ok((
        DenseTensor::from_vec(weights.shape(), grad_w)?,
        dynamics.correlate_response(&grad_psp),
    ))
}
