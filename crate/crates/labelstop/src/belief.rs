//! Grid posterior over convergence hypotheses.
//!
//! The belief is a joint weight matrix over (curve model, asymptotic error)
//! cells, updated from binary error indicators through the Bernoulli
//! likelihood of the predicted error `g(t)`. Updates run in log space with a
//! max-subtraction renormalization each step so weights cannot underflow
//! over long observation streams.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{predicted_error_unchecked, CurveError, CurveFamily, CurveModel};
use crate::scalar::{cast, cast_usize, Scalar};

/// Predicted errors are clamped to this band before entering the
/// likelihood, so one surprising observation cannot zero the whole grid.
pub const LIKELIHOOD_CLAMP: f64 = 1e-9;

/// Tolerance for the prior normalization check.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

/// Errors from belief construction and updates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("grid needs at least one model and one r_inf value")]
    EmptyGrid,
    #[error("prior has {got} entries, grid has {expected}")]
    PriorLengthMismatch { expected: usize, got: usize },
    #[error("prior entry {index} is negative or non-finite ({value})")]
    BadPriorEntry { index: usize, value: f64 },
    #[error("prior sums to {sum}, expected 1 within {PRIOR_SUM_TOLERANCE:e}")]
    PriorNotNormalized { sum: f64 },
    #[error("r_inf grid must be sorted ascending within [0, 1]")]
    BadRInfGrid,
    #[error("r_inf grid value {value} exceeds r0 = {r0}")]
    RInfExceedsR0 { value: f64, r0: f64 },
    #[error("need at least 2 classes, got {got}")]
    TooFewClasses { got: usize },
    #[error("every grid cell has zero likelihood for the observation batch")]
    TotalLikelihoodZero,
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// A batch of binary error indicators collected at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorObservation {
    indicators: Vec<bool>,
}

impl ErrorObservation {
    pub fn new(indicators: Vec<bool>) -> Self {
        Self { indicators }
    }

    /// Single-indicator batch, the shape the sequential loop produces.
    pub fn single(error: bool) -> Self {
        Self {
            indicators: vec![error],
        }
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    /// Batch size `m`.
    pub fn count(&self) -> usize {
        self.indicators.len()
    }

    /// Number of misclassification flags in the batch.
    pub fn successes(&self) -> usize {
        self.indicators.iter().filter(|&&z| z).count()
    }

    /// Empirical error mean `v`; zero for an empty batch.
    pub fn mean<F: Scalar>(&self) -> F {
        if self.indicators.is_empty() {
            F::zero()
        } else {
            cast_usize::<F>(self.successes()) / cast_usize::<F>(self.count())
        }
    }
}

/// The grid and prior the posterior lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefGridSpec<F> {
    models: Vec<CurveModel<F>>,
    r_inf_grid: Vec<F>,
    /// Row-major `|models| x |r_inf_grid|` joint prior.
    prior: Vec<F>,
}

fn validate_grid<F: Scalar>(
    models: &[CurveModel<F>],
    r_inf_grid: &[F],
) -> Result<(), BeliefError> {
    if models.is_empty() || r_inf_grid.is_empty() {
        return Err(BeliefError::EmptyGrid);
    }
    if !r_inf_grid.windows(2).all(|w| w[0] <= w[1])
        || r_inf_grid[0] < F::zero()
        || *r_inf_grid.last().unwrap() > F::one()
    {
        return Err(BeliefError::BadRInfGrid);
    }
    Ok(())
}

impl<F: Scalar> BeliefGridSpec<F> {
    pub fn new(
        models: Vec<CurveModel<F>>,
        r_inf_grid: Vec<F>,
        prior: Vec<F>,
    ) -> Result<Self, BeliefError> {
        validate_grid(&models, &r_inf_grid)?;
        let expected = models.len() * r_inf_grid.len();
        if prior.len() != expected {
            return Err(BeliefError::PriorLengthMismatch {
                expected,
                got: prior.len(),
            });
        }
        let mut sum = F::zero();
        for (i, &w) in prior.iter().enumerate() {
            if !(w >= F::zero()) || !w.is_finite() {
                return Err(BeliefError::BadPriorEntry {
                    index: i,
                    value: w.to_f64().unwrap_or(f64::NAN),
                });
            }
            sum = sum + w;
        }
        if (sum - F::one()).abs() > cast(PRIOR_SUM_TOLERANCE) {
            return Err(BeliefError::PriorNotNormalized {
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            models,
            r_inf_grid,
            prior,
        })
    }

    /// Uniform prior over all grid cells. Normalized by construction, so
    /// the sum tolerance check is skipped (it matters for f32 grids with
    /// thousands of cells).
    pub fn uniform(models: Vec<CurveModel<F>>, r_inf_grid: Vec<F>) -> Result<Self, BeliefError> {
        validate_grid(&models, &r_inf_grid)?;
        let n = models.len() * r_inf_grid.len();
        let w = F::one() / cast_usize(n);
        Ok(Self {
            models,
            r_inf_grid,
            prior: vec![w; n],
        })
    }

    /// Default grid: constants of the two rational families on the geometric
    /// ladder 1, 2, 4, ..., 2^14, nine exponential bases spanning half-lives
    /// from one step to ~7000 steps, and a uniform 51-point grid on
    /// `[0, r0]` for the asymptotic error.
    pub fn default_grid(r0: F) -> Self {
        GridConfig::default()
            .build_spec(r0)
            .expect("default grid is valid")
    }

    pub fn models(&self) -> &[CurveModel<F>] {
        &self.models
    }

    pub fn r_inf_grid(&self) -> &[F] {
        &self.r_inf_grid
    }

    pub fn prior(&self) -> &[F] {
        &self.prior
    }

    pub fn num_cells(&self) -> usize {
        self.prior.len()
    }
}

/// Configurable grid layout, instantiated once `r0` is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig<F> {
    pub kappa: Vec<F>,
    pub lambda: Vec<F>,
    pub beta: Vec<F>,
    pub r_inf_points: usize,
}

impl<F: Scalar> Default for GridConfig<F> {
    fn default() -> Self {
        let ladder: Vec<F> = (0..15).map(|e| cast((1u32 << e) as f64)).collect();
        Self {
            kappa: ladder.clone(),
            lambda: ladder,
            beta: [0.5, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999, 0.9995, 0.9999]
                .iter()
                .map(|&b| cast(b))
                .collect(),
            r_inf_points: 51,
        }
    }
}

impl<F: Scalar> GridConfig<F> {
    /// Builds the model list and the uniform prior for a given `r0`.
    pub fn build_spec(&self, r0: F) -> Result<BeliefGridSpec<F>, BeliefError> {
        let mut models = Vec::new();
        for &c in &self.kappa {
            models.push(CurveModel::new(CurveFamily::InverseSqrt, c)?);
        }
        for &c in &self.lambda {
            models.push(CurveModel::new(CurveFamily::Inverse, c)?);
        }
        for &c in &self.beta {
            models.push(CurveModel::new(CurveFamily::Exponential, c)?);
        }
        if self.r_inf_points == 0 {
            return Err(BeliefError::EmptyGrid);
        }
        let r_inf_grid = if self.r_inf_points == 1 {
            vec![F::zero()]
        } else {
            let denom = cast_usize::<F>(self.r_inf_points - 1);
            (0..self.r_inf_points)
                .map(|i| r0 * cast_usize::<F>(i) / denom)
                .collect()
        };
        BeliefGridSpec::uniform(models, r_inf_grid)
    }
}

/// Posterior marginals of the joint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals<F> {
    pub model_weights: Vec<F>,
    pub r_inf_weights: Vec<F>,
    pub r_inf_mean: F,
}

/// Serializable state of a belief at one step: grid plus weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot<F> {
    pub t: usize,
    pub models: Vec<CurveModel<F>>,
    pub r_inf_grid: Vec<F>,
    pub weights: Vec<F>,
}

/// The posterior state: grid, weights, step counter and accumulated
/// log evidence. Values are immutable; `update` returns a new belief.
#[derive(Debug, Clone)]
pub struct Belief<F> {
    spec: Arc<BeliefGridSpec<F>>,
    r0: F,
    log_weights: Vec<F>,
    weights: Vec<F>,
    t: usize,
    log_evidence: F,
}

/// Builds the initial belief for a task with `num_classes` classes, taking
/// the chance error `r0 = 1 - 1/num_classes` as the curve start point.
pub fn init_belief<F: Scalar>(
    spec: BeliefGridSpec<F>,
    num_classes: usize,
) -> Result<Belief<F>, BeliefError> {
    if num_classes < 2 {
        return Err(BeliefError::TooFewClasses { got: num_classes });
    }
    let r0 = F::one() - F::one() / cast_usize(num_classes);
    Belief::with_r0(spec, r0)
}

impl<F: Scalar> Belief<F> {
    /// Initial belief with an explicit `r0`. Rejects any grid value above it.
    pub fn with_r0(spec: BeliefGridSpec<F>, r0: F) -> Result<Self, BeliefError> {
        for &v in spec.r_inf_grid() {
            if v > r0 {
                return Err(BeliefError::RInfExceedsR0 {
                    value: v.to_f64().unwrap_or(f64::NAN),
                    r0: r0.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        // normalize exactly so the accumulated evidence starts clean
        let sum: F = spec.prior().iter().copied().sum();
        let weights: Vec<F> = spec.prior().iter().map(|&w| w / sum).collect();
        let log_weights = weights.iter().map(|&w| w.ln()).collect();
        Ok(Self {
            spec: Arc::new(spec),
            r0,
            log_weights,
            weights,
            t: 0,
            log_evidence: F::zero(),
        })
    }

    pub fn spec(&self) -> &BeliefGridSpec<F> {
        &self.spec
    }

    pub fn r0(&self) -> F {
        self.r0
    }

    /// Number of observation batches absorbed.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Accumulated log marginal likelihood of everything observed so far.
    pub fn log_evidence(&self) -> F {
        self.log_evidence
    }

    /// Joint posterior weights, row-major over (model, r_inf).
    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Predicted error of cell `(model_idx, r_inf_idx)` at query count `t`.
    #[inline]
    fn cell_g(&self, model_idx: usize, r_inf_idx: usize, t: usize) -> F {
        predicted_error_unchecked(
            &self.spec.models()[model_idx],
            self.r0,
            self.spec.r_inf_grid()[r_inf_idx],
            t,
        )
    }

    /// Absorbs one observation batch taken at query count `t_query` (the
    /// number of labels the observed classifier was trained on; supplied by
    /// the caller because a step may buy one or two labels).
    ///
    /// Each cell weight is multiplied by `g^s * (1-g)^(m-s)` with `g`
    /// clamped to the likelihood band, then the matrix is renormalized and
    /// the normalizer accumulates into the log evidence. An empty batch
    /// leaves the weights unchanged and only advances the step counter.
    pub fn update(&self, obs: &ErrorObservation, t_query: usize) -> Result<Self, BeliefError> {
        let mut next = self.clone();
        next.t += 1;
        if obs.count() == 0 {
            return Ok(next);
        }
        let s = cast_usize::<F>(obs.successes());
        let f = cast_usize::<F>(obs.count() - obs.successes());
        let lo = cast::<F>(LIKELIHOOD_CLAMP);
        let hi = F::one() - lo;
        let n_rinf = self.spec.r_inf_grid().len();
        for (idx, lw) in next.log_weights.iter_mut().enumerate() {
            let g = self.cell_g(idx / n_rinf, idx % n_rinf, t_query).max(lo).min(hi);
            *lw = *lw + s * g.ln() + f * (F::one() - g).ln();
        }
        let max = next
            .log_weights
            .iter()
            .copied()
            .fold(F::neg_infinity(), F::max);
        if !max.is_finite() {
            return Err(BeliefError::TotalLikelihoodZero);
        }
        let sum_shifted: F = next.log_weights.iter().map(|&lw| (lw - max).exp()).sum();
        let norm = max + sum_shifted.ln();
        let mut linear_sum = F::zero();
        for (lw, w) in next.log_weights.iter_mut().zip(next.weights.iter_mut()) {
            *lw = *lw - norm;
            *w = lw.exp();
            linear_sum = linear_sum + *w;
        }
        for w in next.weights.iter_mut() {
            *w = *w / linear_sum;
        }
        next.log_evidence = next.log_evidence + norm;
        Ok(next)
    }

    /// Posterior-expected error at query count `t_future`.
    pub fn expected_error(&self, t_future: usize) -> F {
        let n_rinf = self.spec.r_inf_grid().len();
        let mut acc = F::zero();
        for (idx, &w) in self.weights.iter().enumerate() {
            if w > F::zero() {
                acc = acc + w * self.cell_g(idx / n_rinf, idx % n_rinf, t_future);
            }
        }
        acc
    }

    /// Probability that the next indicator observed at `t_future` is an
    /// error. Numerically identical to [`expected_error`]; kept separate
    /// because the risk recursion branches on it as a Bernoulli mean.
    pub fn predictive_prob_error(&self, t_future: usize) -> F {
        self.expected_error(t_future)
    }

    /// Row/column sums of the joint matrix plus the posterior mean of the
    /// asymptotic error.
    pub fn marginals(&self) -> Marginals<F> {
        let n_models = self.spec.models().len();
        let n_rinf = self.spec.r_inf_grid().len();
        let mut model_weights = vec![F::zero(); n_models];
        let mut r_inf_weights = vec![F::zero(); n_rinf];
        for (idx, &w) in self.weights.iter().enumerate() {
            model_weights[idx / n_rinf] = model_weights[idx / n_rinf] + w;
            r_inf_weights[idx % n_rinf] = r_inf_weights[idx % n_rinf] + w;
        }
        let r_inf_mean = r_inf_weights
            .iter()
            .zip(self.spec.r_inf_grid())
            .map(|(&w, &v)| w * v)
            .sum();
        Marginals {
            model_weights,
            r_inf_weights,
            r_inf_mean,
        }
    }

    pub fn snapshot(&self) -> BeliefSnapshot<F> {
        BeliefSnapshot {
            t: self.t,
            models: self.spec.models().to_vec(),
            r_inf_grid: self.spec.r_inf_grid().to_vec(),
            weights: self.weights.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inv(c: f64) -> CurveModel<f64> {
        CurveModel::new(CurveFamily::Inverse, c).unwrap()
    }

    /// Brute-force single-pass posterior: per-cell likelihood products in
    /// the linear domain, normalized once at the end.
    fn brute_force_posterior(
        spec: &BeliefGridSpec<f64>,
        r0: f64,
        batches: &[(ErrorObservation, usize)],
    ) -> Vec<f64> {
        let n_rinf = spec.r_inf_grid().len();
        let mut w: Vec<f64> = spec.prior().to_vec();
        let sum: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= sum;
        }
        for (idx, cell) in w.iter_mut().enumerate() {
            let model = &spec.models()[idx / n_rinf];
            let r_inf = spec.r_inf_grid()[idx % n_rinf];
            for (obs, t) in batches {
                let g = predicted_error_unchecked(model, r0, r_inf, *t)
                    .clamp(LIKELIHOOD_CLAMP, 1.0 - LIKELIHOOD_CLAMP);
                let s = obs.successes() as f64;
                let f = (obs.count() - obs.successes()) as f64;
                *cell *= g.powf(s) * (1.0 - g).powf(f);
            }
        }
        let total: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= total;
        }
        w
    }

    #[test]
    fn init_uses_chance_error() {
        let spec = BeliefGridSpec::uniform(vec![inv(1.0)], vec![0.0, 0.1]).unwrap();
        let b = init_belief(spec.clone(), 10).unwrap();
        assert_eq!(b.r0(), 1.0 - 0.1);
        let b = init_belief(spec, 2).unwrap();
        assert_eq!(b.r0(), 0.5);
        assert!(matches!(
            init_belief(
                BeliefGridSpec::uniform(vec![inv(1.0)], vec![0.0]).unwrap(),
                1
            ),
            Err(BeliefError::TooFewClasses { .. })
        ));
    }

    #[test]
    fn uniform_prior_spreads_mass() {
        let spec = BeliefGridSpec::uniform(vec![inv(1.0), inv(2.0)], vec![0.0, 0.2]).unwrap();
        let b = init_belief(spec, 2).unwrap();
        assert_eq!(b.weights(), &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(b.t(), 0);
    }

    #[test]
    fn init_rejects_r_inf_above_r0() {
        let spec = BeliefGridSpec::uniform(vec![inv(1.0)], vec![0.0, 0.6]).unwrap();
        assert!(matches!(
            init_belief(spec, 2),
            Err(BeliefError::RInfExceedsR0 { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            BeliefGridSpec::<f64>::new(vec![], vec![0.0], vec![]),
            Err(BeliefError::EmptyGrid)
        ));
        assert!(matches!(
            BeliefGridSpec::new(vec![inv(1.0)], vec![0.2, 0.1], vec![0.5, 0.5]),
            Err(BeliefError::BadRInfGrid)
        ));
        assert!(matches!(
            BeliefGridSpec::new(vec![inv(1.0)], vec![0.1], vec![0.5, 0.5]),
            Err(BeliefError::PriorLengthMismatch { .. })
        ));
        assert!(matches!(
            BeliefGridSpec::new(vec![inv(1.0)], vec![0.0, 0.1], vec![0.7, 0.2]),
            Err(BeliefError::PriorNotNormalized { .. })
        ));
        assert!(matches!(
            BeliefGridSpec::new(vec![inv(1.0)], vec![0.0, 0.1], vec![-0.1, 1.1]),
            Err(BeliefError::BadPriorEntry { .. })
        ));
    }

    #[test]
    fn single_observation_is_bayes_rule() {
        // One model, two r_inf cells; at t=1 the Inverse(1) curve has
        // h = 1/2, so g = (r0 + r_inf) / 2.
        let spec = BeliefGridSpec::uniform(vec![inv(1.0)], vec![0.1, 0.5]).unwrap();
        let b = Belief::with_r0(spec, 0.9).unwrap();
        let post = b.update(&ErrorObservation::single(true), 1).unwrap();
        let (g0, g1) = (0.5, 0.7);
        let expect0 = 0.5 * g0 / (0.5 * g0 + 0.5 * g1);
        assert!((post.weights()[0] - expect0).abs() < 1e-12);
        assert!((post.weights()[1] - (1.0 - expect0)).abs() < 1e-12);
        assert_eq!(post.t(), 1);
        // evidence is the mixture likelihood
        assert!((post.log_evidence() - (0.5 * g0 + 0.5 * g1).ln()).abs() < 1e-12);
    }

    #[test]
    fn near_constant_cells_recover_the_textbook_ratio() {
        // An exponential model at the clamp floor makes g(t >= 1) hug
        // r_inf, giving two almost-constant curves at 0.2 and 0.8.
        let m = CurveModel::new(CurveFamily::Exponential, 1e-9).unwrap();
        let spec = BeliefGridSpec::uniform(vec![m], vec![0.2, 0.8]).unwrap();
        let b = Belief::with_r0(spec, 0.8).unwrap();
        let post = b.update(&ErrorObservation::single(true), 1).unwrap();
        assert!((post.weights()[1] - 0.8).abs() < 1e-5);
        assert!((post.weights()[0] - 0.2).abs() < 1e-5);
    }

    #[test]
    fn empty_batch_only_advances_the_counter() {
        let spec = BeliefGridSpec::uniform(vec![inv(1.0)], vec![0.1, 0.5]).unwrap();
        let b = Belief::with_r0(spec, 0.9).unwrap();
        let post = b.update(&ErrorObservation::new(vec![]), 5).unwrap();
        assert_eq!(post.weights(), b.weights());
        assert_eq!(post.t(), 1);
        assert_eq!(post.log_evidence(), 0.0);
    }

    #[test]
    fn updates_commute() {
        let spec = BeliefGridSpec::uniform(vec![inv(1.0), inv(4.0)], vec![0.0, 0.3]).unwrap();
        let b = Belief::with_r0(spec, 0.9).unwrap();
        let ab = b
            .update(&ErrorObservation::single(true), 1)
            .unwrap()
            .update(&ErrorObservation::single(false), 2)
            .unwrap();
        let ba = b
            .update(&ErrorObservation::single(false), 2)
            .unwrap()
            .update(&ErrorObservation::single(true), 1)
            .unwrap();
        for (x, y) in ab.weights().iter().zip(ba.weights()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_error_degenerate_and_mixture() {
        // single cell: the mixture collapses to that curve
        let spec = BeliefGridSpec::uniform(vec![inv(1.0)], vec![0.1]).unwrap();
        let b = Belief::with_r0(spec, 0.9).unwrap();
        assert!((b.expected_error(1) - 0.5).abs() < 1e-15);
        assert_eq!(b.predictive_prob_error(1), b.expected_error(1));

        // near-constant 0.2 / 0.8 cells, uniform: mean 0.5
        let m = CurveModel::new(CurveFamily::Exponential, 1e-9).unwrap();
        let spec = BeliefGridSpec::uniform(vec![m], vec![0.2, 0.8]).unwrap();
        let b = Belief::with_r0(spec, 0.8).unwrap();
        assert!((b.expected_error(3) - 0.5).abs() < 1e-5);

        // weights (0.2 on g=0.2, 0.8 on g=0.8): 0.8*0.8 + 0.2*0.2 = 0.68
        let spec =
            BeliefGridSpec::new(vec![m], vec![0.2, 0.8], vec![0.2, 0.8]).unwrap();
        let b = Belief::with_r0(spec, 0.8).unwrap();
        assert!((b.expected_error(3) - 0.68).abs() < 1e-5);
        assert_eq!(b.predictive_prob_error(3), b.expected_error(3));
    }

    #[test]
    fn marginals_are_row_and_column_sums() {
        let models = vec![inv(1.0), inv(2.0)];
        let spec = BeliefGridSpec::uniform(models.clone(), vec![0.0, 0.2]).unwrap();
        let b = Belief::with_r0(spec, 0.9).unwrap();
        let m = b.marginals();
        assert_eq!(m.model_weights, vec![0.5, 0.5]);
        assert_eq!(m.r_inf_weights, vec![0.5, 0.5]);

        let spec = BeliefGridSpec::new(
            models,
            vec![0.0, 0.2],
            vec![0.4, 0.1, 0.3, 0.2],
        )
        .unwrap();
        let b = Belief::with_r0(spec, 0.9).unwrap();
        let m = b.marginals();
        assert!((m.model_weights[0] - 0.5).abs() < 1e-15);
        assert!((m.model_weights[1] - 0.5).abs() < 1e-15);
        assert!((m.r_inf_weights[0] - 0.7).abs() < 1e-15);
        assert!((m.r_inf_weights[1] - 0.3).abs() < 1e-15);
        // posterior mean of r_inf: 0.7 * 0.0 + 0.3 * 0.2 = 0.06
        assert!((m.r_inf_mean - 0.06).abs() < 1e-15);
    }

    #[test]
    fn sequential_matches_brute_force_on_a_small_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let models = vec![
            inv(1.0),
            inv(8.0),
            CurveModel::new(CurveFamily::InverseSqrt, 4.0).unwrap(),
            CurveModel::new(CurveFamily::Exponential, 0.9).unwrap(),
        ];
        let r_inf = vec![0.0, 0.1, 0.25, 0.4];
        let spec = BeliefGridSpec::uniform(models, r_inf).unwrap();
        let mut b = Belief::with_r0(spec.clone(), 0.9).unwrap();
        let mut batches = Vec::new();
        for t in 0..20 {
            let obs = ErrorObservation::single(rng.random::<f64>() < 0.5);
            b = b.update(&obs, t).unwrap();
            batches.push((obs, t));
        }
        let brute = brute_force_posterior(&spec, 0.9, &batches);
        for (x, y) in b.weights().iter().zip(&brute) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn posterior_concentrates_on_the_generating_cell() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let models = vec![
            CurveModel::new(CurveFamily::InverseSqrt, 16.0).unwrap(),
            inv(16.0),
            CurveModel::new(CurveFamily::Exponential, 0.99).unwrap(),
        ];
        let r_inf: Vec<f64> = (0..11).map(|i| i as f64 * 0.045).collect();
        let true_model = inv(16.0);
        let true_r_inf = r_inf[4]; // 0.18, in-grid
        let spec = BeliefGridSpec::uniform(models, r_inf).unwrap();
        let mut b = Belief::with_r0(spec, 0.9).unwrap();
        for t in 0..2000 {
            let g = predicted_error_unchecked(&true_model, 0.9, true_r_inf, t);
            let obs = ErrorObservation::single(rng.random::<f64>() < g);
            b = b.update(&obs, t).unwrap();
        }
        let m = b.marginals();
        assert!(
            (m.r_inf_mean - true_r_inf).abs() < 0.05,
            "posterior r_inf mean {} vs true {}",
            m.r_inf_mean,
            true_r_inf
        );
    }

    #[test]
    fn f32_belief_updates() {
        let m = CurveModel::<f32>::new(CurveFamily::Inverse, 1.0).unwrap();
        let spec = BeliefGridSpec::uniform(vec![m], vec![0.1f32, 0.5]).unwrap();
        let b = Belief::with_r0(spec, 0.9f32).unwrap();
        let post = b.update(&ErrorObservation::single(true), 1).unwrap();
        let sum: f32 = post.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    fn arb_obs_stream() -> impl Strategy<Value = Vec<(bool, usize)>> {
        prop::collection::vec((any::<bool>(), 0usize..40), 1..15)
    }

    proptest! {
        #[test]
        fn weights_stay_normalized(stream in arb_obs_stream()) {
            let models = vec![inv(1.0), inv(32.0)];
            let spec = BeliefGridSpec::uniform(models, vec![0.0, 0.2, 0.4]).unwrap();
            let mut b = Belief::with_r0(spec, 0.9).unwrap();
            for (z, t) in stream {
                b = b.update(&ErrorObservation::single(z), t).unwrap();
                let sum: f64 = b.weights().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn posterior_is_order_invariant(stream in arb_obs_stream()) {
            let models = vec![inv(2.0), CurveModel::new(CurveFamily::Exponential, 0.8).unwrap()];
            let spec = BeliefGridSpec::uniform(models, vec![0.05, 0.3]).unwrap();
            let b0 = Belief::with_r0(spec, 0.9).unwrap();
            let mut fwd = b0.clone();
            for (z, t) in &stream {
                fwd = fwd.update(&ErrorObservation::single(*z), *t).unwrap();
            }
            let mut rev = b0;
            for (z, t) in stream.iter().rev() {
                rev = rev.update(&ErrorObservation::single(*z), *t).unwrap();
            }
            for (x, y) in fwd.weights().iter().zip(rev.weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
