use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::train::TrainConfig;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    config: &TrainConfig,
) {
    assert!(
        params.same_shape(grads) && params.same_shape(&state.first_moment),
        "parameter, gradient and moment shapes differ"
    );
    state.step_count += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let t = state.step_count as i32;
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;

    let AdamState {
        first_moment,
        second_moment,
        ..
    } = state;
    for (((theta, g), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(first_moment.blocks_mut())
        .zip(second_moment.blocks_mut())
    {
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
