//! AdamW with decoupled weight decay.
//!
//! For parameters `theta`, gradients `g` and step `t = step + 1`:
//!
//! ```text
//! m     = b1 * m + (1 - b1) * g
//! v     = b2 * v + (1 - b2) * g^2
//! m_hat = m / (1 - b1^t)
//! v_hat = v / (1 - b2^t)
//! theta = theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
//! ```
//!
//! Decay applies only to the leading `decayed` parameters; for a linear
//! head that is every weight but not the trailing bias.

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of leading parameters subject to weight decay.
    pub decayed: usize,
}

impl OptimizerState {
    /// Fresh state where every parameter is decayed.
    pub fn new(n_params: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            decayed: n_params,
        }
    }

    /// State for `weights ∥ bias` with the bias exempt from decay.
    pub fn for_linear_head(feature_dim: usize) -> Self {
        Self {
            decayed: feature_dim,
            ..Self::new(feature_dim + 1)
        }
    }
}

/// One AdamW update in place. Nothing is modified when an error is returned.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            found: grads.len(),
        });
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            found: state.m.len(),
        });
    }
    if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numeric { index, value });
    }

    let t = state.step + 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bias1 = 1.0 - b1.powf(t as f64);
    let bias2 = 1.0 - b2.powf(t as f64);
    for (i, ((p, &g), (m, v))) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .enumerate()
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        let decay = if i < state.decayed {
            cfg.weight_decay * *p
        } else {
            0.0
        };
        *p -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + decay);
    }
    state.step = t;
    Ok(())
}
