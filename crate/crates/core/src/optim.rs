//! First-order optimizers. State is kept in `f64`; callers quantize weights
//! afterwards if they need checkpoint-exact values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            lr,
            momentum,
            ..Default::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            lr,
            ..Default::default()
        }
    }

    /// `lr = 0` is accepted and freezes the weights.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!(
                    "optimizer.{name} must be in [0, 1), got {v}"
                )))
            }
        };
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "optimizer.lr must be >= 0, got {}",
                self.lr
            )));
        }
        unit("momentum", self.momentum)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParam(format!(
                "optimizer.adam_eps must be > 0, got {}",
                self.adam_eps
            )));
        }
        Ok(())
    }
}

/// Optimizer with its per-weight slots: velocity for SGD, first and second
/// moments for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Weights,
    pub v: Weights,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, like: &Weights) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        })
    }

    pub fn step(&mut self, weights: &mut Weights, grads: &Weights) -> Result<()> {
        check_shapes(weights, grads)?;
        check_shapes(weights, &self.m)?;
        match self.config.kind {
            OptimizerKind::SgdMomentum => sgd_step(self, weights, grads),
            OptimizerKind::Adam => adam_step(self, weights, grads),
        }
        Ok(())
    }
}

fn check_shapes(a: &Weights, b: &Weights) -> Result<()> {
    let same = a.layers.len() == b.layers.len()
        && a.layers
            .iter()
            .zip(&b.layers)
            .all(|(x, y)| x.len() == y.len());
    if same {
        Ok(())
    } else {
        Err(Error::Shape(
            "optimizer: weight and gradient layouts differ".into(),
        ))
    }
}

/// `v <- mu v + g; w <- w - lr v`.
pub fn sgd_step(state: &mut OptimizerState, weights: &mut Weights, grads: &Weights) {
    let OptimizerConfig { lr, momentum, .. } = state.config;
    state.step += 1;
    for ((w, v), g) in weights.iter_mut().zip(state.m.iter_mut()).zip(grads.iter()) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
}

/// Adam with bias-corrected moments.
pub fn adam_step(state: &mut OptimizerState, weights: &mut Weights, grads: &Weights) {
    let OptimizerConfig {
        lr,
        beta1,
        beta2,
        adam_eps,
        ..
    } = state.config;
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (((w, m), v), g) in weights
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
        .zip(grads.iter())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + adam_eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: Vec<f64>) -> Weights {
        Weights {
            layers: vec![vec![], v],
        }
    }

    #[test]
    fn zero_gradient_sgd_is_identity() {
        let mut weights = w(vec![0.5, -1.0, 2.0]);
        let before = weights.clone();
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), &weights).unwrap();
        opt.step(&mut weights, &before.zeros_like()).unwrap();
        assert_eq!(weights, before);
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let mut weights = w(vec![1.0, 2.0]);
        let g = w(vec![0.5, -4.0]);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), &weights).unwrap();
        opt.step(&mut weights, &g).unwrap();
        opt.step(&mut weights, &g).unwrap();
        let mut expected = vec![1.0, 2.0];
        for _ in 0..2 {
            expected[0] -= 0.1 * 0.5;
            expected[1] -= 0.1 * -4.0;
        }
        assert_eq!(weights.layers[1], expected);
    }

    #[test]
    fn momentum_accumulates() {
        let mut weights = w(vec![0.0]);
        let g = w(vec![1.0]);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(1.0, 0.5), &weights).unwrap();
        opt.step(&mut weights, &g).unwrap();
        opt.step(&mut weights, &g).unwrap();
        // v1 = 1, v2 = 1.5
        assert_eq!(weights.layers[1][0], -2.5);
    }

    #[test]
    fn first_adam_step_is_lr_times_sign() {
        let mut weights = w(vec![0.0, 0.0, 0.0, 3.0]);
        let g = w(vec![0.3, -7.0, 1e-3, 0.0]);
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.01), &weights).unwrap();
        opt.step(&mut weights, &g).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for (got, gi) in weights.layers[1][..3].iter().zip(&g.layers[1]) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
            assert!((got.abs() - 0.01).abs() < 1e-7);
        }
        assert_eq!(weights.layers[1][3], 3.0);
    }

    #[test]
    fn zero_lr_freezes() {
        for cfg in [OptimizerConfig::adam(0.0), OptimizerConfig::sgd(0.0, 0.9)] {
            let mut weights = w(vec![0.25, -0.75]);
            let before = weights.clone();
            let mut opt = OptimizerState::new(cfg, &weights).unwrap();
            for _ in 0..3 {
                opt.step(&mut weights, &w(vec![1.0, -2.0])).unwrap();
            }
            assert_eq!(weights, before);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(OptimizerConfig::adam(-1.0).validate().is_err());
        assert!(OptimizerConfig::sgd(0.1, 1.0).validate().is_err());
        let cfg = OptimizerConfig {
            beta2: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let mut weights = w(vec![0.0]);
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &weights).unwrap();
        assert!(opt.step(&mut weights, &w(vec![1.0, 2.0])).is_err());
    }
}
