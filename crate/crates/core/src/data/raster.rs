use super::{EventRecord, SensorDims};
use crate::error::{Error, Result};
use crate::tensor::{SpikeTensor, TimeGrid};

/// Bins events onto `grid`: bin `floor(t / 1000 / dt)`, one spike at most per
/// unit and bin, events at or past `duration_cap_ms` dropped.
pub fn rasterize(
    events: &[EventRecord],
    grid: &TimeGrid,
    dims: &SensorDims,
    duration_cap_ms: f64,
) -> Result<SpikeTensor> {
    rasterize_window(events, grid, dims, 0, duration_cap_ms)
}

/// Rasterizes the events in `[start_us, start_us + length_ms)`, shifted to start at 0.
pub fn rasterize_window(
    events: &[EventRecord],
    grid: &TimeGrid,
    dims: &SensorDims,
    start_us: u64,
    length_ms: f64,
) -> Result<SpikeTensor> {
    let mut out = SpikeTensor::zeros(&dims.shape(), grid)?;
    let cap_us = length_ms * 1000.0;
    let bin_us = grid.dt * 1000.0;
    for ev in events {
        if !dims.contains(ev) {
            return Err(Error::OutOfRange(format!(
                "event ({}, {}, p={}) outside sensor {}x{}x{}",
                ev.x, ev.y, ev.p, dims.width, dims.height, dims.polarities
            )));
        }
        if ev.t_us < start_us {
            continue;
        }
        let rel = (ev.t_us - start_us) as f64;
        if rel >= cap_us {
            continue;
        }
        let bin = (rel / bin_us).floor() as usize;
        if bin < grid.num_steps {
            out.set(dims.index(ev), bin, 1.0);
        }
    }
    Ok(out)
}
