//! Weight initialization. Each trainable layer draws `U[-1, 1]` weights once
//! and is then scaled, front to back, until its mean firing rate on a few
//! calibration samples lands in the target band.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Labeled;
use crate::error::{Error, Result};
use crate::network::{Network, Weights};
use crate::rng::{stream, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Acceptable mean rate in spikes per neuron per bin.
    pub rate_low: f64,
    pub rate_high: f64,
    pub calibration_samples: usize,
    pub max_iterations: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            rate_low: 0.05,
            rate_high: 0.3,
            calibration_samples: 32,
            max_iterations: 40,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rate_low && self.rate_low < self.rate_high && self.rate_high <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "init rate band [{}, {}] must satisfy 0 < low < high <= 1",
                self.rate_low, self.rate_high
            )));
        }
        if self.calibration_samples == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidParam(
                "init calibration_samples and max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-layer uniform weights in `[-a_l, a_l]`, drawn from the seed's init stream.
pub fn init_uniform(net: &Network, bounds: &[f64], seed: u64) -> Weights {
    let mut w = net.zero_weights();
    for (l, layer) in w.layers.iter_mut().enumerate() {
        let a = bounds.get(l).copied().unwrap_or(0.0);
        let mut rng = stream(seed, Purpose::Init, l as u64);
        layer
            .iter_mut()
            .for_each(|x| *x = a * rng.gen_range(-1.0..=1.0));
    }
    w
}

/// Result of [`calibrate`]: the weights, the bound `a_l` chosen per layer
/// (0 for layers without weights) and the rate measured at that bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub weights: Weights,
    pub bounds: Vec<f64>,
    pub rates: Vec<f64>,
}

/// Mean spikes per neuron per bin of spiking layer `layer` (spec index).
fn layer_rate(net: &Network, w: &Weights, data: &[Labeled], layer: usize) -> Result<f64> {
    let totals = data
        .par_iter()
        .map(|s| {
            let acts = net.forward_partial(w, &s.spikes, layer)?;
            Ok(acts[layer - 1].spikes.total())
        })
        .collect::<Result<Vec<f64>>>()?;
    let units = net.spec().shapes()[layer].units() as f64;
    let steps = net.grid().num_steps as f64;
    Ok(totals.iter().sum::<f64>() / (data.len() as f64 * units * steps))
}

/// Stop once the rate is within this log-distance of the target (about 15%).
const TOLERANCE: f64 = 0.15;

/// Deterministic init: bisection on `log a_l`, layer by layer, aiming at the
/// geometric middle of the rate band. If the band is unreachable (e.g. a
/// silent input) the closest bound found is kept.
pub fn calibrate(
    net: &Network,
    data: &[Labeled],
    seed: u64,
    cfg: &InitConfig,
) -> Result<Calibration> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParam(
            "calibration needs at least one sample".into(),
        ));
    }
    let data = &data[..data.len().min(cfg.calibration_samples)];
    let unit = init_uniform(net, &vec![1.0; net.spec().layers.len()], seed);
    let mut weights = net.zero_weights();
    let mut bounds = vec![0.0; weights.layers.len()];
    let mut rates = vec![0.0; weights.layers.len()];
    let target = (cfg.rate_low * cfg.rate_high).sqrt();
    for l in 1..weights.layers.len() {
        if unit.layers[l].is_empty() {
            rates[l] = layer_rate(net, &weights, data, l)?;
            continue;
        }
        let theta = net.spec().layers[l].params.theta;
        let (mut lo, mut hi) = ((theta * 1e-4).ln(), (theta * 1e3).ln());
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for _ in 0..cfg.max_iterations {
            let mid = 0.5 * (lo + hi);
            let a = mid.exp();
            weights.layers[l] = unit.layers[l].iter().map(|x| x * a).collect();
            let rate = layer_rate(net, &weights, data, l)?;
            let miss = (rate.max(1e-12).ln() - target.ln()).abs();
            if miss < best.0 {
                best = (miss, a, rate);
            }
            if miss < TOLERANCE {
                break;
            }
            if rate < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (_, a, rate) = best;
        weights.layers[l] = unit.layers[l].iter().map(|x| x * a).collect();
        bounds[l] = a;
        rates[l] = rate;
    }
    weights.quantize_f32();
    Ok(Calibration {
        weights,
        bounds,
        rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse_architecture;
    use crate::data::{gen_synthetic, SyntheticParams};
    use crate::tensor::TimeGrid;

    #[test]
    fn uniform_draws_respect_bounds() {
        let net = Network::new(
            parse_architecture("5-4-3").unwrap(),
            TimeGrid::new(1.0, 5).unwrap(),
        )
        .unwrap();
        let w = init_uniform(&net, &[0.0, 2.0, 0.5], 9);
        assert!(w.layers[1].iter().all(|x| x.abs() <= 2.0));
        assert!(w.layers[2].iter().all(|x| x.abs() <= 0.5));
        assert!(w.layers[1].iter().any(|x| x.abs() > 0.5));
        assert_eq!(w, init_uniform(&net, &[0.0, 2.0, 0.5], 9));
        assert_ne!(w, init_uniform(&net, &[0.0, 2.0, 0.5], 10));
    }

    #[test]
    fn calibration_hits_band_and_is_deterministic() {
        let ds = gen_synthetic(&SyntheticParams::default(), 1).unwrap();
        let net = Network::new(
            parse_architecture("20-64-3").unwrap(),
            TimeGrid::new(1.0, 100).unwrap(),
        )
        .unwrap();
        let cfg = InitConfig::default();
        let cal = calibrate(&net, &ds.train, 4, &cfg).unwrap();
        for l in 1..3 {
            assert!(
                (cfg.rate_low..=cfg.rate_high).contains(&cal.rates[l]),
                "layer {l} rate {}",
                cal.rates[l]
            );
        }
        assert_eq!(cal, calibrate(&net, &ds.train, 4, &cfg).unwrap());
        assert!(cal.weights.iter().all(|&w| w == w as f32 as f64));
    }

    #[test]
    fn silent_input_keeps_closest_bound() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let net = Network::new(parse_architecture("3-2").unwrap(), grid).unwrap();
        let silent = Labeled {
            spikes: crate::tensor::SpikeTensor::zeros(&[3], &grid).unwrap(),
            label: 0,
        };
        let cal = calibrate(&net, &[silent], 0, &InitConfig::default()).unwrap();
        assert_eq!(cal.rates[1], 0.0);
        assert!(cal.bounds[1] > 0.0);
    }
}
