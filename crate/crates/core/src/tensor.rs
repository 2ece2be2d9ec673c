//! Dense arrays on a discrete time grid.
//!
//! Every time-indexed tensor stores time as the innermost (fastest-varying)
//! axis, so `data[unit * steps + t]` addresses unit `unit` at bin `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation time grid. `dt` is in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub num_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, num_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        if num_steps == 0 {
            return Err(Error::InvalidParam("num_steps must be >= 1".into()));
        }
        Ok(Self { dt, num_steps })
    }

    /// Grid covering `duration_ms` at resolution `dt` (rounded to the nearest bin).
    pub fn from_duration(dt: f64, duration_ms: f64) -> Result<Self> {
        let steps = (duration_ms / dt).round();
        if !(steps >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "duration {duration_ms} ms is shorter than one {dt} ms bin"
            )));
        }
        Self::new(dt, steps as usize)
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.num_steps as f64
    }
}

/// Real-valued array of arbitrary shape.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Length of the innermost axis (time, for time series).
    pub fn inner_len(&self) -> usize {
        *self.shape.last().expect("shape is nonempty")
    }

    /// Slice of the innermost axis for outer index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.inner_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.inner_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.inner_len()
    }

    pub fn dot(&self, other: &DenseTensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(shape_mismatch(&self.shape, &other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

/// Returns `a * x + y`.
pub fn elementwise_axpy(a: f64, x: &DenseTensor, y: &DenseTensor) -> Result<DenseTensor> {
    if x.shape != y.shape {
        return Err(shape_mismatch(&x.shape, &y.shape));
    }
    let data = x
        .data
        .iter()
        .zip(&y.data)
        .map(|(xi, yi)| a * xi + yi)
        .collect();
    Ok(DenseTensor {
        shape: x.shape.clone(),
        data,
    })
}

/// Time-rasterized spike data: one real value per (unit, bin).
///
/// Outputs of the spike function only ever hold 0 or 1; relaxed real values are
/// allowed so that losses can be evaluated (and finite-differenced) on
/// continuous inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTensor {
    units: Vec<usize>,
    steps: usize,
    data: Vec<f64>,
}

impl SpikeTensor {
    pub fn zeros(units: &[usize], grid: &TimeGrid) -> Result<Self> {
        check_shape(units)?;
        Ok(Self {
            units: units.to_vec(),
            steps: grid.num_steps,
            data: vec![0.0; units.iter().product::<usize>() * grid.num_steps],
        })
    }

    pub fn from_vec(units: &[usize], steps: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(units)?;
        if steps == 0 {
            return Err(Error::Shape(
                "spike tensor needs at least one time step".into(),
            ));
        }
        let n = units.iter().product::<usize>() * steps;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "units {units:?} x {steps} steps holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            units: units.to_vec(),
            steps,
            data,
        })
    }

    /// Builds a tensor from per-unit rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let steps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != steps) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        Self::from_vec(&[rows.len()], steps, rows.concat())
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn num_units(&self) -> usize {
        self.units.iter().product()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        &self.data[unit * self.steps..(unit + 1) * self.steps]
    }

    pub fn row_mut(&mut self, unit: usize) -> &mut [f64] {
        &mut self.data[unit * self.steps..(unit + 1) * self.steps]
    }

    pub fn get(&self, unit: usize, t: usize) -> f64 {
        self.data[unit * self.steps + t]
    }

    pub fn set(&mut self, unit: usize, t: usize, value: f64) {
        self.data[unit * self.steps + t] = value;
    }

    /// Sum of every value in the tensor.
    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Same data with a different unit shape (element count must agree).
    pub fn reshaped(mut self, units: &[usize]) -> Result<Self> {
        check_shape(units)?;
        if units.iter().product::<usize>() != self.num_units() {
            return Err(Error::Shape(format!(
                "cannot view {:?} as {units:?}",
                self.units
            )));
        }
        self.units = units.to_vec();
        Ok(self)
    }

    /// Copy of the first `steps` bins, or the record zero-padded to `steps`.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let mut out = Self::from_vec(&self.units, steps, vec![0.0; self.num_units() * steps])?;
        let keep = steps.min(self.steps);
        for u in 0..self.num_units() {
            out.row_mut(u)[..keep].copy_from_slice(&self.row(u)[..keep]);
        }
        Ok(out)
    }

    /// Time series view with shape `[units..., steps]`.
    pub fn to_dense(&self) -> DenseTensor {
        let mut shape = self.units.clone();
        shape.push(self.steps);
        DenseTensor {
            shape,
            data: self.data.clone(),
        }
    }

    /// Interprets a `[units..., steps]` time series as a spike tensor.
    pub fn from_dense(dense: DenseTensor) -> Result<Self> {
        let (steps, units) = dense
            .shape
            .split_last()
            .ok_or_else(|| Error::Shape("empty shape".into()))?;
        if units.is_empty() {
            return Self::from_vec(&[1], *steps, dense.data);
        }
        Self::from_vec(units, *steps, dense.data)
    }
}

/// Per-unit sum of the bins in `[t_start, t_end)`, in spike-count units.
pub fn reduce_time_sum(x: &SpikeTensor, t_start: usize, t_end: usize) -> Result<DenseTensor> {
    if t_start > t_end || t_end > x.steps {
        return Err(Error::OutOfRange(format!(
            "time range [{t_start}, {t_end}) outside [0, {})",
            x.steps
        )));
    }
    let data = (0..x.num_units())
        .map(|u| x.row(u)[t_start..t_end].iter().sum())
        .collect();
    DenseTensor::from_vec(&x.units, data)
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape(
            "shape must have at least one dimension".into(),
        ));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(())
}

fn shape_mismatch(a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{a:?} vs {b:?}"))
}
