//! Layer composition and whole-network forward/backward passes.

use crate::arch::{LayerKind, NetworkSpec, Shape3};
use crate::error::{Error, Result};
use crate::kernels::DEFAULT_CUTOFF;
use crate::neuron::{dense_backward, dense_drive, LayerActivation, SrmDynamics};
use crate::tensor::{DenseTensor, SpikeTensor, TimeGrid};

/// Default aggregate-pool weight, in units of the pooling layer's threshold.
pub const DEFAULT_POOL_SCALE: f64 = 1.1;

/// Trainable weights, one flat row-major buffer per layer (empty for input
/// and pooling layers). Dense: `[out, in]`. Conv: `[K, C_in, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub layers: Vec<Vec<f64>>,
}

impl Weights {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layer_parameter_counts()
                .into_iter()
                .map(|n| vec![0.0; n])
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flatten()
    }

    /// `self += other`, layer by layer in index order.
    pub fn accumulate(&mut self, other: &Weights) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|w| *w *= factor);
    }

    /// Rounds every weight to the nearest `f32`, the checkpoint storage precision.
    pub fn quantize_f32(&mut self) {
        self.iter_mut().for_each(|w| *w = *w as f32 as f64);
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.layer_parameter_counts();
        if expected.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} weight layers for a {}-layer network",
                self.layers.len(),
                expected.len()
            )));
        }
        for (i, (n, w)) in expected.iter().zip(&self.layers).enumerate() {
            if *n != w.len() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {n} weights, got {}",
                    w.len()
                )));
            }
        }
        Ok(())
    }
}

/// Construction options that are not part of the architecture string.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkOptions {
    pub pool_scale: f64,
    pub kernel_cutoff: f64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            pool_scale: DEFAULT_POOL_SCALE,
            kernel_cutoff: DEFAULT_CUTOFF,
        }
    }
}

#[derive(Clone, Debug)]
struct LayerPlan {
    kind: LayerKind,
    input: Shape3,
    output: Shape3,
    dynamics: SrmDynamics,
    pool_weight: f64,
}

/// A network specification bound to a time grid, ready to simulate.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    grid: TimeGrid,
    plans: Vec<LayerPlan>,
}

impl Network {
    pub fn new(spec: NetworkSpec, grid: TimeGrid) -> Result<Self> {
        Self::with_options(spec, grid, NetworkOptions::default())
    }

    pub fn with_options(spec: NetworkSpec, grid: TimeGrid, opts: NetworkOptions) -> Result<Self> {
        if !(opts.pool_scale > 0.0) {
            return Err(Error::InvalidParam(format!(
                "pool scale must be > 0, got {}",
                opts.pool_scale
            )));
        }
        let shapes = spec.shapes();
        let mut plans = Vec::with_capacity(spec.layers.len() - 1);
        for (i, layer) in spec.layers.iter().enumerate().skip(1) {
            let dynamics = SrmDynamics::with_cutoff(layer.params, &grid, opts.kernel_cutoff)?;
            plans.push(LayerPlan {
                kind: layer.kind,
                input: shapes[i - 1],
                output: shapes[i],
                pool_weight: opts.pool_scale * layer.params.theta,
                dynamics,
            });
        }
        Ok(Self { spec, grid, plans })
    }

    /// Swaps every layer's spike function for a sigmoid of the given width.
    pub fn relaxed(mut self, width: f64) -> Self {
        for plan in &mut self.plans {
            plan.dynamics = plan.dynamics.clone().relaxed(width);
        }
        self
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn num_outputs(&self) -> usize {
        self.plans.last().unwrap().output.units()
    }

    pub fn input_units(&self) -> usize {
        self.plans[0].input.units()
    }

    /// Number of spiking layers (everything after the input).
    pub fn depth(&self) -> usize {
        self.plans.len()
    }

    pub fn dynamics(&self, layer: usize) -> &SrmDynamics {
        &self.plans[layer - 1].dynamics
    }

    /// Pool weight (zero for non-pool layers) of spec layer `layer`.
    pub fn pool_weight(&self, layer: usize) -> f64 {
        match self.plans[layer - 1].kind {
            LayerKind::Pool(_) => self.plans[layer - 1].pool_weight,
            _ => 0.0,
        }
    }

    pub fn zero_weights(&self) -> Weights {
        Weights::zeros(&self.spec)
    }

    /// Simulates the whole network. Returns one activation per spiking layer;
    /// the last one holds the output spikes.
    pub fn forward(&self, weights: &Weights, input: &SpikeTensor) -> Result<Vec<LayerActivation>> {
        self.forward_partial(weights, input, self.plans.len())
    }

    /// Simulates the first `depth` spiking layers.
    pub fn forward_partial(
        &self,
        weights: &Weights,
        input: &SpikeTensor,
        depth: usize,
    ) -> Result<Vec<LayerActivation>> {
        weights.check(&self.spec)?;
        if input.num_units() != self.input_units() {
            return Err(Error::Shape(format!(
                "input has {} units, network expects {}",
                input.num_units(),
                self.input_units()
            )));
        }
        if input.steps() != self.grid.num_steps {
            return Err(Error::Shape(format!(
                "input has {} steps, grid has {}",
                input.steps(),
                self.grid.num_steps
            )));
        }
        let mut acts: Vec<LayerActivation> = Vec::with_capacity(depth);
        for (l, plan) in self.plans.iter().enumerate().take(depth) {
            let source = match acts.last() {
                Some(a) => &a.spikes,
                None => input,
            };
            acts.push(layer_forward(plan, &weights.layers[l + 1], source));
        }
        Ok(acts)
    }

    /// Backpropagates `grad_output = dL/ds_out` through every layer.
    pub fn backward(
        &self,
        weights: &Weights,
        activations: &[LayerActivation],
        grad_output: &DenseTensor,
    ) -> Result<Weights> {
        Ok(self
            .backward_impl(weights, activations, grad_output, false)?
            .0)
    }

    /// Like [`Network::backward`], additionally returning `dL/ds_in` for the
    /// network input.
    pub fn backward_with_input(
        &self,
        weights: &Weights,
        activations: &[LayerActivation],
        grad_output: &DenseTensor,
    ) -> Result<(Weights, DenseTensor)> {
        let (grads, input) = self.backward_impl(weights, activations, grad_output, true)?;
        Ok((grads, input.expect("requested")))
    }

    fn backward_impl(
        &self,
        weights: &Weights,
        activations: &[LayerActivation],
        grad_output: &DenseTensor,
        want_input: bool,
    ) -> Result<(Weights, Option<DenseTensor>)> {
        weights.check(&self.spec)?;
        if activations.len() != self.plans.len() {
            return Err(Error::Shape(format!(
                "{} activations for {} layers",
                activations.len(),
                self.plans.len()
            )));
        }
        let out = &activations.last().unwrap().membrane;
        if grad_output.len() != out.len() || grad_output.inner_len() != out.inner_len() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                grad_output.shape(),
                out.shape()
            )));
        }
        let mut grads = weights.zeros_like();
        let mut grad = grad_output.clone();
        for (l, plan) in self.plans.iter().enumerate().rev() {
            let act = &activations[l];
            let grad_s = DenseTensor::from_vec(act.membrane.shape(), grad.into_vec())?;
            let e = plan.dynamics.local_error(&grad_s, &act.membrane)?;
            let (gw, grad_psp) =
                layer_backward(plan, &weights.layers[l + 1], &e, &act.synaptic_drive);
            grads.layers[l + 1] = gw;
            if l == 0 && !want_input {
                return Ok((grads, None));
            }
            grad = plan.dynamics.correlate_response(&grad_psp);
        }
        Ok((grads, Some(grad)))
    }
}

fn layer_forward(plan: &LayerPlan, weights: &[f64], input: &SpikeTensor) -> LayerActivation {
    let steps = input.steps();
    let psp = plan.dynamics.psp(input);
    let psp = DenseTensor::from_vec(&[plan.input.units(), steps], psp.into_vec())
        .expect("input unit count checked");
    let drive = match plan.kind {
        LayerKind::Dense(n) => dense_drive(weights, n, &psp),
        LayerKind::Conv { channels, kernel } => {
            conv_drive(weights, &psp, plan.input, channels, kernel)
        }
        LayerKind::Pool(n) => pool_drive(plan.pool_weight, &psp, plan.input, n),
        LayerKind::Input { .. } => unreachable!(),
    };
    let drive = DenseTensor::from_vec(&with_time(plan.output, steps), drive.into_vec())
        .expect("output shape");
    let (membrane, spikes) = plan.dynamics.fire(&drive);
    LayerActivation {
        membrane,
        spikes,
        synaptic_drive: psp,
    }
}

fn layer_backward(
    plan: &LayerPlan,
    weights: &[f64],
    e: &DenseTensor,
    psp: &DenseTensor,
) -> (Vec<f64>, DenseTensor) {
    match plan.kind {
        LayerKind::Dense(_) => {
            let e = DenseTensor::from_vec(&[e.num_rows(), e.inner_len()], e.data().to_vec())
                .expect("consistent");
            dense_backward(weights, &e, psp)
        }
        LayerKind::Conv { channels, kernel } => {
            conv_backward(weights, e, psp, plan.input, channels, kernel)
        }
        LayerKind::Pool(n) => (
            Vec::new(),
            pool_backward(plan.pool_weight, e, plan.input, n),
        ),
        LayerKind::Input { .. } => unreachable!(),
    }
}

/// `[c, h, w, steps]`, collapsed to `[c, steps]` for a single pixel.
fn with_time(shape: Shape3, steps: usize) -> Vec<usize> {
    if shape.h == 1 && shape.w == 1 {
        vec![shape.c, steps]
    } else {
        vec![shape.c, shape.h, shape.w, steps]
    }
}

/// Same-padded, stride-1 convolution over space; time is carried along.
fn conv_drive(
    w: &[f64],
    psp: &DenseTensor,
    input: Shape3,
    channels: usize,
    kernel: usize,
) -> DenseTensor {
    let steps = psp.inner_len();
    let Shape3 {
        c: cin,
        h,
        w: width,
    } = input;
    let pad = (kernel / 2) as isize;
    let mut out = vec![0.0; channels * h * width * steps];
    for o in 0..channels {
        for y in 0..h {
            for x in 0..width {
                let base = ((o * h + y) * width + x) * steps;
                let row = &mut out[base..base + steps];
                for c in 0..cin {
                    for dy in 0..kernel {
                        let yy = y as isize + dy as isize - pad;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for dx in 0..kernel {
                            let xx = x as isize + dx as isize - pad;
                            if xx < 0 || xx >= width as isize {
                                continue;
                            }
                            let wv = w[((o * cin + c) * kernel + dy) * kernel + dx];
                            let src = psp.row((c * h + yy as usize) * width + xx as usize);
                            for (r, &p) in row.iter_mut().zip(src) {
                                *r += wv * p;
                            }
                        }
                    }
                }
            }
        }
    }
    DenseTensor::from_vec(&[channels * h * width, steps], out).expect("consistent")
}

fn conv_backward(
    w: &[f64],
    e: &DenseTensor,
    psp: &DenseTensor,
    input: Shape3,
    channels: usize,
    kernel: usize,
) -> (Vec<f64>, DenseTensor) {
    let steps = psp.inner_len();
    let Shape3 {
        c: cin,
        h,
        w: width,
    } = input;
    let pad = (kernel / 2) as isize;
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_psp = vec![0.0; cin * h * width * steps];
    for o in 0..channels {
        for y in 0..h {
            for x in 0..width {
                let er = e.row((o * h + y) * width + x);
                if er.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for c in 0..cin {
                    for dy in 0..kernel {
                        let yy = y as isize + dy as isize - pad;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for dx in 0..kernel {
                            let xx = x as isize + dx as isize - pad;
                            if xx < 0 || xx >= width as isize {
                                continue;
                            }
                            let wi = ((o * cin + c) * kernel + dy) * kernel + dx;
                            let src = (c * h + yy as usize) * width + xx as usize;
                            grad_w[wi] +=
                                er.iter().zip(psp.row(src)).map(|(a, b)| a * b).sum::<f64>();
                            let wv = w[wi];
                            for (g, &v) in
                                grad_psp[src * steps..(src + 1) * steps].iter_mut().zip(er)
                            {
                                *g += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    (
        grad_w,
        DenseTensor::from_vec(&[cin * h * width, steps], grad_psp).expect("consistent"),
    )
}

/// Fixed-weight `n x n` sum per channel; trailing rows/columns that do not
/// fill a whole window are dropped.
fn pool_drive(weight: f64, psp: &DenseTensor, input: Shape3, n: usize) -> DenseTensor {
    let steps = psp.inner_len();
    let Shape3 { c: ch, h, w: width } = input;
    let (oh, ow) = (h / n, width / n);
    let mut out = vec![0.0; ch * oh * ow * steps];
    for c in 0..ch {
        for y in 0..oh {
            for x in 0..ow {
                let base = ((c * oh + y) * ow + x) * steps;
                let row = &mut out[base..base + steps];
                for dy in 0..n {
                    for dx in 0..n {
                        let src = psp.row((c * h + y * n + dy) * width + x * n + dx);
                        for (r, &p) in row.iter_mut().zip(src) {
                            *r += p;
                        }
                    }
                }
                row.iter_mut().for_each(|r| *r *= weight);
            }
        }
    }
    DenseTensor::from_vec(&[ch * oh * ow, steps], out).expect("consistent")
}

fn pool_backward(weight: f64, e: &DenseTensor, input: Shape3, n: usize) -> DenseTensor {
    let steps = e.inner_len();
    let Shape3 { c: ch, h, w: width } = input;
    let (oh, ow) = (h / n, width / n);
    let mut grad = vec![0.0; ch * h * width * steps];
    for c in 0..ch {
        for y in 0..oh {
            for x in 0..ow {
                let er = e.row((c * oh + y) * ow + x);
                for dy in 0..n {
                    for dx in 0..n {
                        let dst = (c * h + y * n + dy) * width + x * n + dx;
                        for (g, &v) in grad[dst * steps..(dst + 1) * steps].iter_mut().zip(er) {
                            *g = weight * v;
                        }
                    }
                }
            }
        }
    }
    DenseTensor::from_vec(&[ch * h * width, steps], grad).expect("consistent")
}

/// Free-function form of [`Network::forward`].
pub fn network_forward(
    net: &Network,
    weights: &Weights,
    input: &SpikeTensor,
) -> Result<Vec<LayerActivation>> {
    net.forward(weights, input)
}

/// Free-function form of [`Network::backward`].
pub fn network_backward(
    net: &Network,
    weights: &Weights,
    activations: &[LayerActivation],
    grad_output: &DenseTensor,
) -> Result<Weights> {
    net.backward(weights, activations, grad_output)
}
