use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::labeler::Label;

/// Probabilities are clamped to `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-12;

/// One labelled (user, subreddit) pair in index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub user: usize,
    pub subreddit: usize,
    pub label: Label,
}

/// Factor matrices (row-major, one row of `dim` values per entity) and the
/// two shared bias vectors. The same shape doubles as a gradient and as an
/// Adam moment buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_users: usize,
    pub n_subreddits: usize,
    pub dim: usize,
    pub user_factors: Vec<f64>,
    pub sub_factors: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub sub_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_users: usize, n_subreddits: usize, dim: usize) -> Self {
        ModelParams {
            n_users,
            n_subreddits,
            dim,
            user_factors: vec![0.0; n_users * dim],
            sub_factors: vec![0.0; n_subreddits * dim],
            user_bias: vec![0.0; dim],
            sub_bias: vec![0.0; dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_users, self.n_subreddits, self.dim)
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn sub_row(&self, s: usize) -> &[f64] {
        &self.sub_factors[s * self.dim..(s + 1) * self.dim]
    }

    pub fn user_row_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn sub_row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.sub_factors[s * self.dim..(s + 1) * self.dim]
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [
            &self.user_factors,
            &self.sub_factors,
            &self.user_bias,
            &self.sub_bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.user_factors,
            &mut self.sub_factors,
            &mut self.user_bias,
            &mut self.sub_bias,
        ]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_users == other.n_users
            && self.n_subreddits == other.n_subreddits
            && self.dim == other.dim
            && self
                .blocks()
                .iter()
                .zip(other.blocks())
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `U[u] + b_users`
    pub fn user_embedding(&self, u: usize) -> Vec<f64> {
        self.user_row(u)
            .iter()
            .zip(&self.user_bias)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// `V[s] + b_subs`
    pub fn sub_embedding(&self, s: usize) -> Vec<f64> {
        self.sub_row(s)
            .iter()
            .zip(&self.sub_bias)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn logit(&self, u: usize, s: usize) -> f64 {
        let (ur, sr) = (self.user_row(u), self.sub_row(s));
        let mut z = 0.0;
        for k in 0..self.dim {
            z += (ur[k] + self.user_bias[k]) * (sr[k] + self.sub_bias[k]);
        }
        z
    }
}

/// Factors i.i.d. N(0, (0.1/sqrt(d))^2), biases zero.
pub fn init_params(n_users: usize, n_subreddits: usize, dim: usize, seed: u64) -> ModelParams {
    let mut params = ModelParams::zeros(n_users, n_subreddits, dim);
    if dim == 0 {
        return params;
    }
    let normal = Normal::new(0.0, 0.1 / (dim as f64).sqrt()).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in params
        .user_factors
        .iter_mut()
        .chain(params.sub_factors.iter_mut())
    {
        *x = normal.sample(&mut rng);
    }
    params
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict(params: &ModelParams, u: usize, s: usize) -> f64 {
    sigmoid(params.logit(u, s))
}

/// Mean binary cross-entropy without the penalty term. Empty batches give 0.
pub fn bce_loss(params: &ModelParams, batch: &[Example]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|ex| {
            let p = predict(params, ex.user, ex.subreddit).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            match ex.label {
                Label::Toxic => -p.ln(),
                Label::NonToxic => -(1.0 - p).ln(),
            }
        })
        .sum();
    total / batch.len() as f64
}

/// Mean BCE plus `l2_lambda` times the squared norm of every parameter.
pub fn batch_loss(params: &ModelParams, batch: &[Example], l2_lambda: f64) -> f64 {
    let penalty = if l2_lambda == 0.0 {
        0.0
    } else {
        l2_lambda * params.squared_norm()
    };
    bce_loss(params, batch) + penalty
}

/// Analytic gradient of [`batch_loss`].
pub fn batch_gradients(params: &ModelParams, batch: &[Example], l2_lambda: f64) -> ModelParams {
    let mut grads = params.zeros_like();
    accumulate_gradients(params, batch, l2_lambda, &mut grads);
    grads
}

/// Writes the gradient into `grads`, reusing its buffers.
pub(crate) fn accumulate_gradients(
    params: &ModelParams,
    batch: &[Example],
    l2_lambda: f64,
    grads: &mut ModelParams,
) {
    let decay = 2.0 * l2_lambda;
    for (g, p) in grads.blocks_mut().into_iter().zip(params.blocks()) {
        for (gi, &pi) in g.iter_mut().zip(p) {
            *gi = decay * pi;
        }
    }
    if batch.is_empty() {
        return;
    }
    let d = params.dim;
    let scale = 1.0 / batch.len() as f64;
    let mut ue = vec![0.0; d];
    let mut se = vec![0.0; d];
    for ex in batch {
        let (ur, sr) = (params.user_row(ex.user), params.sub_row(ex.subreddit));
        let mut z = 0.0;
        for k in 0..d {
            ue[k] = ur[k] + params.user_bias[k];
            se[k] = sr[k] + params.sub_bias[k];
            z += ue[k] * se[k];
        }
        let r = (sigmoid(z) - ex.label.as_f64()) * scale;
        {
            let gu = grads.user_row_mut(ex.user);
            for k in 0..d {
                gu[k] += r * se[k];
            }
        }
        {
            let gs = grads.sub_row_mut(ex.subreddit);
            for k in 0..d {
                gs[k] += r * ue[k];
            }
        }
        for k in 0..d {
            grads.user_bias[k] += r * se[k];
            grads.sub_bias[k] += r * ue[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(user: usize, subreddit: usize, toxic: bool) -> Example {
        Example {
            user,
            subreddit,
            label: toxic.into(),
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = init_params(2, 3, 4, 9);
        assert_eq!(p.user_factors.len(), 8);
        assert_eq!(p.sub_factors.len(), 12);
        assert_eq!(p.user_bias, vec![0.0; 4]);
        assert_eq!(p.sub_bias, vec![0.0; 4]);
        assert_eq!(p, init_params(2, 3, 4, 9));
        assert_ne!(p, init_params(2, 3, 4, 10));
        assert!(p.is_finite());
    }

    #[test]
    fn init_scale_follows_dimension() {
        let p = init_params(400, 400, 64, 1);
        let n = (p.user_factors.len() + p.sub_factors.len()) as f64;
        let var = p.squared_norm() / n;
        let expected = 0.01 / 64.0;
        assert!((var / expected - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn prediction_examples() {
        let zero = ModelParams::zeros(2, 2, 3);
        assert_eq!(predict(&zero, 1, 0), 0.5);

        let mut p = ModelParams::zeros(1, 1, 2);
        p.user_factors = vec![1.0, 0.0];
        p.sub_factors = vec![0.0, 1.0];
        assert_eq!(predict(&p, 0, 0), 0.5);

        let mut p = ModelParams::zeros(1, 1, 1);
        p.user_factors = vec![2.0];
        p.sub_factors = vec![1.0];
        assert!((predict(&p, 0, 0) - 0.8807970779778823).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(-3.0) + sigmoid(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let zero = ModelParams::zeros(1, 1, 2);
        let l = batch_loss(&zero, &[ex(0, 0, true)], 0.0);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(batch_loss(&zero, &[ex(0, 0, true)], 0.3), l);

        let mut sure = ModelParams::zeros(1, 1, 1);
        sure.user_factors = vec![100.0];
        sure.sub_factors = vec![100.0];
        assert!(batch_loss(&sure, &[ex(0, 0, true)], 0.0) < 1e-9);
        // clamped rather than infinite
        let wrong = batch_loss(&sure, &[ex(0, 0, false)], 0.0);
        assert!((wrong + PROB_CLIP.ln()).abs() < 1e-3);
    }

    #[test]
    fn gradient_examples() {
        let mut sure = ModelParams::zeros(1, 1, 1);
        sure.user_factors = vec![100.0];
        sure.sub_factors = vec![100.0];
        let g = batch_gradients(&sure, &[ex(0, 0, true)], 0.0);
        assert!(g.blocks().iter().all(|b| b.iter().all(|&x| x == 0.0)));

        let zero = ModelParams::zeros(1, 1, 3);
        let g = batch_gradients(&zero, &[ex(0, 0, false)], 0.0);
        assert_eq!(g.user_bias, vec![0.0; 3]);
    }

    #[test]
    fn bias_shift_leaves_predictions_unchanged() {
        let mut p = init_params(4, 3, 5, 2);
        for (i, b) in p.user_bias.iter_mut().enumerate() {
            *b = 0.05 * i as f64;
        }
        let before: Vec<f64> = (0..4)
            .flat_map(|u| (0..3).map(move |s| (u, s)))
            .map(|(u, s)| predict(&p, u, s))
            .collect();
        let c = [0.3, -0.2, 0.7, 0.0, 1.1];
        for (b, ck) in p.user_bias.iter_mut().zip(c) {
            *b += ck;
        }
        for u in 0..4 {
            for (x, ck) in p.user_row_mut(u).iter_mut().zip(c) {
                *x -= ck;
            }
        }
        let after: Vec<f64> = (0..4)
            .flat_map(|u| (0..3).map(move |s| (u, s)))
            .map(|(u, s)| predict(&p, u, s))
            .collect();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
