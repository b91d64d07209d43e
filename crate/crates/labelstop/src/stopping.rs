//! Stopping rules.
//!
//! Four rules live here:
//! - the one-step test used by the sequential loop (stop when the predicted
//!   error reduction from `k` more labels no longer repays their cost),
//! - the bounded-horizon Bayes-risk recursion, which looks up to `K`
//!   observations ahead by branching on the two possible outcomes,
//! - the retrospective oracle, the per-trajectory cost minimizer used as an
//!   evaluation baseline,
//! - the subjective one-step rule for probabilistic classifiers, which
//!   scores every candidate label acquisition by expected error reduction
//!   under the model's own class posterior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Belief, BeliefError, ErrorObservation};
use crate::learners::{fit, LabelledExample, LearnerConfig, LearnerError};
use crate::scalar::{cast_usize, Scalar};

/// Hard cap on the lookahead horizon; the branch tree is O(2^K).
pub const MAX_HORIZON: usize = 20;

/// Errors from stopping-rule evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoppingError {
    #[error("gamma must be finite and >= 0, got {got}")]
    BadGamma { got: f64 },
    #[error("horizon {got} outside [1, {MAX_HORIZON}]")]
    HorizonTooLarge { got: usize },
    #[error("samples_per_step must be 1 or 2, got {got}")]
    BadSamplesPerStep { got: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("learner does not expose class posteriors: {0}")]
    UnsupportedLearner(LearnerError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Cost and lookahead parameters for a stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig<F> {
    gamma: F,
    horizon: usize,
    samples_per_step: usize,
}

impl<F: Scalar> StoppingConfig<F> {
    pub fn new(gamma: F, horizon: usize, samples_per_step: usize) -> Result<Self, StoppingError> {
        if !gamma.is_finite() || gamma < F::zero() {
            return Err(StoppingError::BadGamma {
                got: gamma.to_f64().unwrap_or(f64::NAN),
            });
        }
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(StoppingError::HorizonTooLarge { got: horizon });
        }
        if samples_per_step != 1 && samples_per_step != 2 {
            return Err(StoppingError::BadSamplesPerStep {
                got: samples_per_step,
            });
        }
        Ok(Self {
            gamma,
            horizon,
            samples_per_step,
        })
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn samples_per_step(&self) -> usize {
        self.samples_per_step
    }

    /// Same parameters with a different per-step label count; the loop
    /// flips between 2 and 1 when the active pool drains.
    pub fn with_samples_per_step(&self, k: usize) -> Result<Self, StoppingError> {
        Self::new(self.gamma, self.horizon, k)
    }
}

/// Outcome of the one-step test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopDecision<F> {
    /// True exactly when `expected_gain <= k * gamma`.
    pub stop: bool,
    /// Expected error under the current belief at the current step.
    pub current_risk: F,
    /// Expected error after `k` more labels, plus their cost.
    pub continuation_value: F,
    /// Predicted error reduction from buying `k` more labels.
    pub expected_gain: F,
}

/// Bayes risk of stopping now: the posterior-expected error at `t_now`.
pub fn rho0<F: Scalar>(belief: &Belief<F>, t_now: usize) -> F {
    belief.expected_error(t_now)
}

/// Bounded-horizon Bayes risk: the value of the optimal policy that may buy
/// up to `config.horizon()` more observations at `gamma` each.
///
/// Each lookahead level branches on the next indicator (error / no error)
/// weighted by the predictive probability, absorbs it into the belief, and
/// advances the query count by one. Always `<= rho0`.
pub fn rho_k<F: Scalar>(
    belief: &Belief<F>,
    t_now: usize,
    config: &StoppingConfig<F>,
) -> Result<F, StoppingError> {
    if config.horizon() > MAX_HORIZON {
        return Err(StoppingError::HorizonTooLarge {
            got: config.horizon(),
        });
    }
    rho_rec(belief, t_now, config.horizon(), config.gamma())
}

fn rho_rec<F: Scalar>(
    belief: &Belief<F>,
    t: usize,
    levels: usize,
    gamma: F,
) -> Result<F, StoppingError> {
    let immediate = belief.expected_error(t);
    if levels == 0 {
        return Ok(immediate);
    }
    let p_err = belief.predictive_prob_error(t);
    let with_err = belief.update(&ErrorObservation::single(true), t)?;
    let without_err = belief.update(&ErrorObservation::single(false), t)?;
    let v_err = rho_rec(&with_err, t + 1, levels - 1, gamma)?;
    let v_ok = rho_rec(&without_err, t + 1, levels - 1, gamma)?;
    let continuation = p_err * v_err + (F::one() - p_err) * v_ok + gamma;
    Ok(immediate.min(continuation))
}

/// The sequential loop's one-step test: stop when the expected error
/// reduction from the next `k` labels is no larger than their cost.
pub fn obsv_should_stop<F: Scalar>(
    belief: &Belief<F>,
    t_now: usize,
    config: &StoppingConfig<F>,
) -> StopDecision<F> {
    let k = config.samples_per_step();
    let current_risk = belief.expected_error(t_now);
    let future_risk = belief.expected_error(t_now + k);
    let cost = cast_usize::<F>(k) * config.gamma();
    let expected_gain = current_risk - future_risk;
    StopDecision {
        stop: expected_gain <= cost,
        current_risk,
        continuation_value: future_risk + cost,
        expected_gain,
    }
}

/// Retrospective cost minimizer over a dense error trajectory:
/// `t* = argmin_t (R_t + gamma * t)`, earliest index on ties.
pub fn oracle_stop<F: Scalar>(trajectory: &[F], gamma: F) -> Result<(usize, F), StoppingError> {
    let points: Vec<(usize, F)> = trajectory.iter().copied().enumerate().collect();
    oracle_stop_points(&points, gamma)
}

/// Oracle over a sparse `(t, R_t)` trajectory. The measured points must be
/// ascending in `t`; the cost curve between points is piecewise linear, so
/// its minimum over all integer stopping times is attained at a point.
pub fn oracle_stop_points<F: Scalar>(
    points: &[(usize, F)],
    gamma: F,
) -> Result<(usize, F), StoppingError> {
    if points.is_empty() {
        return Err(StoppingError::EmptyTrajectory);
    }
    let mut best_t = points[0].0;
    let mut best_cost = points[0].1 + gamma * cast_usize(points[0].0);
    for &(t, err) in &points[1..] {
        let cost = err + gamma * cast_usize(t);
        if cost < best_cost {
            best_t = t;
            best_cost = cost;
        }
    }
    Ok((best_t, best_cost))
}

/// Outcome of the subjective one-step rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveDecision<F> {
    /// True when the best candidate's expected-error reduction is below
    /// `gamma` (strictly).
    pub stop: bool,
    /// Expected error over the pool under the current model.
    pub current_estimate: F,
    /// Pool index of the candidate whose hypothetical acquisition
    /// minimizes the expected error.
    pub best_candidate: usize,
    /// Expected pool error after retraining with the best candidate,
    /// averaged over its label posterior.
    pub best_estimate: F,
    /// `current_estimate - best_estimate`.
    pub expected_gain: F,
}

/// One-step stopping for probabilistic classifiers: scores each unlabelled
/// candidate by the label-posterior-weighted expected error of the model
/// retrained with that candidate, and stops when even the best candidate
/// is not worth one label.
pub fn subjective_one_step_stop<F: Scalar>(
    learner: &LearnerConfig<F>,
    training: &[LabelledExample<F>],
    pool: &[Vec<F>],
    num_classes: usize,
    gamma: F,
) -> Result<SubjectiveDecision<F>, StoppingError> {
    if pool.is_empty() {
        return Err(StoppingError::EmptyPool);
    }
    let model = fit(learner, training, num_classes).map_err(StoppingError::UnsupportedLearner)?;
    if !model.supports_posterior() {
        return Err(StoppingError::UnsupportedLearner(LearnerError::Unsupported {
            kind: model.kind(),
            operation: "class_posterior",
        }));
    }
    let pool_error = |m: &crate::learners::TrainedModel<F>| -> Result<F, StoppingError> {
        let mut acc = F::zero();
        for x in pool {
            let probs = m.class_posterior(x).map_err(StoppingError::UnsupportedLearner)?;
            let max = probs.iter().copied().fold(F::zero(), F::max);
            acc = acc + (F::one() - max);
        }
        Ok(acc / cast_usize(pool.len()))
    };
    let current_estimate = pool_error(&model)?;

    let mut best: Option<(usize, F)> = None;
    let mut extended = training.to_vec();
    for (i, x) in pool.iter().enumerate() {
        let label_probs = model
            .class_posterior(x)
            .map_err(StoppingError::UnsupportedLearner)?;
        let mut expected = F::zero();
        for (y, &p) in label_probs.iter().enumerate() {
            if p == F::zero() {
                continue;
            }
            extended.push(LabelledExample::new(x.clone(), y));
            let retrained =
                fit(learner, &extended, num_classes).map_err(StoppingError::UnsupportedLearner)?;
            extended.pop();
            expected = expected + p * pool_error(&retrained)?;
        }
        match best {
            Some((_, e)) if e <= expected => {}
            _ => best = Some((i, expected)),
        }
    }
    let (best_candidate, best_estimate) = best.expect("pool is nonempty");
    let expected_gain = current_estimate - best_estimate;
    Ok(SubjectiveDecision {
        stop: expected_gain < gamma,
        current_estimate,
        best_candidate,
        best_estimate,
        expected_gain,
    })
}
