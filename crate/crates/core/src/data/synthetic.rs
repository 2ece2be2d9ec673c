//! Spike-pattern classification task: each class is a fixed random template
//! of spike times, samples are jittered copies with a few spikes deleted.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EventRecord, Labeled};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, Rng};
use crate::tensor::SpikeTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub classes: usize,
    pub units: usize,
    pub steps: usize,
    /// Maximum shift in bins, applied uniformly in `[-jitter, jitter]`.
    pub jitter: usize,
    pub deletion: f64,
    /// Template spikes per unit are drawn uniformly from `0..=max_spikes_per_unit`.
    pub max_spikes_per_unit: usize,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            classes: 3,
            units: 20,
            steps: 100,
            jitter: 2,
            deletion: 0.05,
            max_spikes_per_unit: 3,
            train_samples: 200,
            test_samples: 100,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidParam(format!(
                "classes must be >= 2, got {}",
                self.classes
            )));
        }
        if self.units < self.classes {
            return Err(Error::InvalidParam(format!(
                "units ({}) must be >= classes ({})",
                self.units, self.classes
            )));
        }
        if self.steps == 0 || self.max_spikes_per_unit == 0 {
            return Err(Error::InvalidParam(
                "steps and max_spikes_per_unit must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.deletion) {
            return Err(Error::InvalidParam(format!(
                "deletion must be in [0, 1), got {}",
                self.deletion
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub params: SyntheticParams,
    pub templates: Vec<SpikeTensor>,
    pub train: Vec<Labeled>,
    pub test: Vec<Labeled>,
}

pub fn gen_synthetic(params: &SyntheticParams, seed: u64) -> Result<SyntheticDataset> {
    params.validate()?;
    let mut rng = stream(seed, Purpose::Synthetic, 0);
    let mut seen = HashSet::new();
    let mut templates = Vec::with_capacity(params.classes);
    while templates.len() < params.classes {
        let t = random_template(params, &mut rng);
        if seen.insert(t.data().iter().map(|&v| v != 0.0).collect::<Vec<bool>>()) {
            templates.push(t);
        }
    }
    let draw = |split: u64, n: usize| -> Vec<Labeled> {
        (0..n)
            .map(|i| {
                let label = i % params.classes;
                let mut rng = stream(seed, Purpose::Synthetic, (split << 32) | i as u64);
                Labeled {
                    spikes: perturb(&templates[label], params, &mut rng),
                    label,
                }
            })
            .collect()
    };
    let train = draw(1, params.train_samples);
    let test = draw(2, params.test_samples);
    Ok(SyntheticDataset {
        params: params.clone(),
        templates,
        train,
        test,
    })
}

fn random_template(params: &SyntheticParams, rng: &mut Rng) -> SpikeTensor {
    let mut data = vec![0.0; params.units * params.steps];
    for row in data.chunks_mut(params.steps) {
        let count = rng.gen_range(0..=params.max_spikes_per_unit);
        for _ in 0..count {
            row[rng.gen_range(0..params.steps)] = 1.0;
        }
    }
    SpikeTensor::from_vec(&[params.units], params.steps, data).expect("sizes agree")
}

fn perturb(template: &SpikeTensor, params: &SyntheticParams, rng: &mut Rng) -> SpikeTensor {
    let steps = params.steps;
    let mut out = vec![0.0; template.data().len()];
    let j = params.jitter as i64;
    for (u, row) in template.data().chunks(steps).enumerate() {
        for (t, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let deleted = params.deletion > 0.0 && rng.gen_bool(params.deletion);
            let shift = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
            if !deleted {
                let t = (t as i64 + shift).clamp(0, steps as i64 - 1) as usize;
                out[u * steps + t] = 1.0;
            }
        }
    }
    SpikeTensor::from_vec(template.units(), steps, out).expect("sizes agree")
}

/// Events for a 1-D raster: `x` = unit, `y = p = 0`, one event at the start of each active bin.
pub fn raster_to_events(spikes: &SpikeTensor, dt: f64) -> Vec<EventRecord> {
    let mut events = Vec::new();
    for u in 0..spikes.num_units() {
        for (t, &v) in spikes.row(u).iter().enumerate() {
            if v != 0.0 {
                events.push(EventRecord {
                    t_us: (t as f64 * dt * 1000.0).round() as u64,
                    x: u as u32,
                    y: 0,
                    p: 0,
                });
            }
        }
    }
    events.sort_by_key(|e| (e.t_us, e.x));
    events
}
