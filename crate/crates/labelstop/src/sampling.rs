//! Pool management and query strategies.
//!
//! A run splits its unlabelled pool into an active part (queried by
//! smallest margin, feeding only the classifier) and a random part (queried
//! uniformly without replacement, feeding both the classifier and the
//! belief — the posterior needs i.i.d. observations). Random-only runs
//! leave the active part empty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::Dataset;
use crate::learners::{LearnerError, TrainedModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Uniform draws only; the active pool stays empty.
    RandomOnly,
    /// Disjoint active and random pools, one draw from each per step.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("pool needs at least 2 examples, got {got}")]
    PoolTooSmall { got: usize },
    #[error("active share must be in [0, 1], got {got}")]
    BadActiveShare { got: f64 },
    #[error("the {pool} pool is exhausted")]
    PoolExhausted { pool: &'static str },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// Index pools of one run. Draws are without replacement and fully
/// deterministic given the seed and the call sequence.
#[derive(Debug, Clone)]
pub struct PoolState {
    d_a: Vec<usize>,
    d_r: Vec<usize>,
    d_t: Vec<usize>,
    seed: u64,
    rng: ChaCha8Rng,
}

/// Splits the index range `0..dataset_size` into pools with the default
/// half-and-half active share.
pub fn split_pool(
    dataset_size: usize,
    strategy: SamplingStrategy,
    seed: u64,
) -> Result<PoolState, SamplingError> {
    let indices: Vec<usize> = (0..dataset_size).collect();
    PoolState::split_indices(&indices, strategy, 0.5, seed)
}

impl PoolState {
    /// Splits an explicit index set. `active_share` is the fraction routed
    /// to the active pool under the mixed strategy (0.5 reproduces equal
    /// halves, the remainder stays random so the two sizes differ by at
    /// most one when the pool size is odd).
    pub fn split_indices(
        indices: &[usize],
        strategy: SamplingStrategy,
        active_share: f64,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        if indices.len() < 2 {
            return Err(SamplingError::PoolTooSmall { got: indices.len() });
        }
        if !(0.0..=1.0).contains(&active_share) || active_share.is_nan() {
            return Err(SamplingError::BadActiveShare { got: active_share });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d_a, d_r) = match strategy {
            SamplingStrategy::RandomOnly => (Vec::new(), indices.to_vec()),
            SamplingStrategy::Mixed => {
                let mut shuffled = indices.to_vec();
                use rand::seq::SliceRandom;
                shuffled.shuffle(&mut rng);
                let n_active = (indices.len() as f64 * active_share).floor() as usize;
                let d_r = shuffled.split_off(n_active);
                (shuffled, d_r)
            }
        };
        Ok(Self {
            d_a,
            d_r,
            d_t: Vec::new(),
            seed,
            rng,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn active_remaining(&self) -> usize {
        self.d_a.len()
    }

    pub fn random_remaining(&self) -> usize {
        self.d_r.len()
    }

    /// Indices queried so far, in query order.
    pub fn queried(&self) -> &[usize] {
        &self.d_t
    }

    /// Uniform draw from the random pool, without replacement.
    pub fn next_random(&mut self) -> Result<usize, SamplingError> {
        if self.d_r.is_empty() {
            return Err(SamplingError::PoolExhausted { pool: "random" });
        }
        let pos = self.rng.random_range(0..self.d_r.len());
        let idx = self.d_r.swap_remove(pos);
        self.d_t.push(idx);
        Ok(idx)
    }

    /// Smallest-margin draw from the active pool, without replacement.
    /// Margin ties break to the lowest index. `None` for the model (nothing
    /// trained yet) treats all margins as equal, so the lowest index wins.
    pub fn next_active<F: Scalar>(
        &mut self,
        model: Option<&TrainedModel<F>>,
        dataset: &Dataset<F>,
    ) -> Result<usize, SamplingError> {
        if self.d_a.is_empty() {
            return Err(SamplingError::PoolExhausted { pool: "active" });
        }
        let mut best_pos = 0usize;
        let mut best: Option<(F, usize)> = None;
        for (pos, &idx) in self.d_a.iter().enumerate() {
            let margin = match model {
                Some(m) => m.margin(&dataset.examples()[idx].features)?,
                None => F::zero(),
            };
            let better = match best {
                None => true,
                Some((bm, bi)) => margin < bm || (margin == bm && idx < bi),
            };
            if better {
                best = Some((margin, idx));
                best_pos = pos;
            }
        }
        let idx = self.d_a.remove(best_pos);
        self.d_t.push(idx);
        Ok(idx)
    }
}
