//! End-to-end runs, realized-cost records and the cost sweep.
//!
//! A run drives the sequential loop: test the stopping rule, buy a random
//! label and observe the current classifier's error on it, absorb the
//! indicator into the belief, optionally buy an active label, retrain, and
//! measure the held-out error. The cost of a label only enters the stop
//! flag, so one full trajectory per seed serves every cost value; records
//! for a specific cost are derived from it and are identical to what a
//! direct run at that cost produces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{init_belief, Belief, BeliefError, BeliefSnapshot, ErrorObservation, GridConfig};
use crate::datasets::{Dataset, DatasetError};
use crate::learners::{
    classification_error, fit, LabelledExample, LearnerConfig, LearnerError, LearnerKind,
    TrainedModel,
};
use crate::sampling::{PoolState, SamplingError, SamplingStrategy};
use crate::scalar::{cast_usize, Scalar};
use crate::stopping::{obsv_should_stop, oracle_stop_points, StoppingConfig, StoppingError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("train and test index sets overlap (index {index})")]
    Overlap { index: usize },
    #[error("index {index} out of bounds for dataset of {size}")]
    IndexOutOfBounds { index: usize, size: usize },
    #[error("no records to aggregate")]
    EmptyRecordSet,
    #[error("record gamma {record} does not match requested gamma {requested}")]
    GammaMismatch { record: f64, requested: f64 },
    #[error("record has no usable trajectory (truncated or empty)")]
    TrajectoryMissing,
    #[error("gamma grid is empty")]
    EmptyGammaGrid,
    #[error("gamma grid must be sorted descending with nonnegative entries")]
    BadGammaGrid,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

/// Cost setting: the single value used by plain runs plus the grid used by
/// sweeps. The grid is kept sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig<F> {
    pub gamma: F,
    pub gamma_grid: Vec<F>,
}

impl<F: Scalar> CostConfig<F> {
    pub fn new(gamma: F, gamma_grid: Vec<F>) -> Result<Self, EvalError> {
        if gamma_grid.is_empty() {
            return Err(EvalError::EmptyGammaGrid);
        }
        let sorted = gamma_grid.windows(2).all(|w| w[0] >= w[1]);
        let nonneg = gamma_grid.iter().all(|&g| g >= F::zero() && g.is_finite());
        if !sorted || !nonneg {
            return Err(EvalError::BadGammaGrid);
        }
        Ok(Self { gamma, gamma_grid })
    }
}

/// The standard sweep grid: mantissas 9 down to 1 across seven decades,
/// then zero. 64 values, descending.
pub fn default_gamma_grid<F: Scalar>() -> Vec<F> {
    let mut grid = Vec::with_capacity(64);
    for k in 1..=7 {
        for m in (1..=9).rev() {
            grid.push(crate::scalar::cast::<F>(m as f64 * 10f64.powi(-k)));
        }
    }
    grid.push(F::zero());
    grid
}

/// Why a run stopped buying labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The stopping rule fired.
    Rule,
    /// The pool (or the configured label cap) ran out first.
    BudgetExhausted,
}

/// Per-iteration log entry, written at stop-test time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog<F> {
    /// Labels bought before this iteration.
    pub t: usize,
    /// Labels this iteration would buy (2 while the active pool has items).
    pub k: usize,
    /// Expected error at `t` under the pre-update belief.
    pub predicted: F,
    /// Predicted error reduction from the next `k` labels.
    pub gain: F,
    /// Whether the rule fired here at the record's gamma.
    pub stop_flag: bool,
    /// Mean of the indicator batch observed this iteration; absent on the
    /// terminal row (nothing was bought).
    pub v: Option<F>,
}

/// A measured point of the held-out error curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint<F> {
    pub t: usize,
    pub error: F,
}

/// Identity and configuration snapshot of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub dataset: String,
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub learner: LearnerKind,
    pub strategy: SamplingStrategy,
    pub seed: u64,
    pub horizon: usize,
    pub test_stride: usize,
    pub max_labels: Option<usize>,
    /// False when the run broke at the first rule fire instead of mapping
    /// the full error curve.
    pub full_trajectory: bool,
    pub trim_order: usize,
}

/// Everything one run produced at one cost value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord<F> {
    pub meta: RunMeta,
    pub gamma: F,
    pub query_order: Vec<usize>,
    pub steps: Vec<StepLog<F>>,
    pub trajectory: Vec<TrajectoryPoint<F>>,
    /// True when trajectory points are strided, so errors between points
    /// are linear interpolants rather than measurements.
    pub interpolated: bool,
    pub belief_snapshots: Vec<BeliefSnapshot<F>>,
    pub stopping_time: usize,
    pub stop_reason: StopReason,
    /// Held-out error at the stopping time.
    pub realized_error: F,
    /// `realized_error + gamma * stopping_time`.
    pub realized_cost: F,
}

/// Run options that do not depend on the cost value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Keep buying labels after the rule fires so the full error curve is
    /// available for oracle comparison.
    pub continue_after_stop: bool,
    /// Measure the held-out error every this-many retrains.
    pub test_stride: usize,
    /// Hard cap on labels bought; `None` runs to pool exhaustion.
    pub max_labels: Option<usize>,
    /// Record a belief snapshot every this-many updates; 0 disables.
    pub belief_snapshot_every: usize,
    /// Extreme-trimming order used when summarizing sweeps.
    pub trim_order: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            continue_after_stop: true,
            test_stride: 1,
            max_labels: None,
            belief_snapshot_every: 0,
            trim_order: 0,
        }
    }
}

/// Inputs of a single run.
#[derive(Debug, Clone)]
pub struct RunParams<'a, F: Scalar> {
    pub dataset: &'a Dataset<F>,
    pub train_indices: &'a [usize],
    pub test_indices: &'a [usize],
    pub learner: &'a LearnerConfig<F>,
    pub strategy: SamplingStrategy,
    pub active_share: f64,
    pub grid: &'a GridConfig<F>,
    pub horizon: usize,
    pub seed: u64,
    pub run_id: String,
    pub options: &'a RunOptions,
}

/// The cost-independent outcome of one trajectory.
struct TrajectoryRun<F> {
    query_order: Vec<usize>,
    steps: Vec<StepLog<F>>, // stop_flag unset (false) here
    trajectory: Vec<TrajectoryPoint<F>>,
    belief_snapshots: Vec<BeliefSnapshot<F>>,
    full: bool,
}

/// Executes the sequential loop.
///
/// With `stop_gamma = Some(g)` the loop breaks at the first rule fire for
/// that cost; with `None` it maps the whole curve to exhaustion (or the
/// label cap) and leaves stop flags to be derived per cost.
fn run_trajectory<F: Scalar>(
    params: &RunParams<'_, F>,
    stop_gamma: Option<F>,
) -> Result<TrajectoryRun<F>, EvalError> {
    let dataset = params.dataset;
    let n = dataset.len();
    for &i in params.train_indices.iter().chain(params.test_indices) {
        if i >= n {
            return Err(EvalError::IndexOutOfBounds { index: i, size: n });
        }
    }
    let test_set: std::collections::HashSet<usize> = params.test_indices.iter().copied().collect();
    if let Some(&overlap) = params.train_indices.iter().find(|i| test_set.contains(i)) {
        return Err(EvalError::Overlap { index: overlap });
    }

    let num_classes = dataset.num_classes();
    let r0 = F::one() - F::one() / cast_usize(num_classes);
    let spec = params.grid.build_spec(r0)?;
    let mut belief: Belief<F> = init_belief(spec, num_classes)?;
    let mut pool = PoolState::split_indices(
        params.train_indices,
        params.strategy,
        params.active_share,
        params.seed,
    )?;
    let test_examples: Vec<LabelledExample<F>> = params
        .test_indices
        .iter()
        .map(|&i| dataset.examples()[i].clone())
        .collect();

    let mut model: Option<TrainedModel<F>> = None;
    let mut training: Vec<LabelledExample<F>> = Vec::new();
    let mut labels = 0usize;
    let mut steps: Vec<StepLog<F>> = Vec::new();
    // the untrained classifier is scored at the chance error
    let mut trajectory = vec![TrajectoryPoint { t: 0, error: r0 }];
    let mut snapshots = Vec::new();
    let mut retrains = 0usize;
    let full;

    loop {
        let k = if params.strategy == SamplingStrategy::Mixed && pool.active_remaining() > 0 {
            2
        } else {
            1
        };
        let stop_cfg = StoppingConfig::new(
            stop_gamma.unwrap_or_else(F::zero),
            params.horizon,
            k,
        )?;
        let decision = obsv_should_stop(&belief, labels, &stop_cfg);
        let fired = stop_gamma.is_some() && decision.stop;
        let capped = params.options.max_labels.is_some_and(|cap| labels >= cap);
        let exhausted = pool.random_remaining() == 0;
        if (fired && !params.options.continue_after_stop) || capped || exhausted {
            steps.push(StepLog {
                t: labels,
                k,
                predicted: decision.current_risk,
                gain: decision.expected_gain,
                stop_flag: fired,
                v: None,
            });
            full = !(fired && !params.options.continue_after_stop) || exhausted || capped;
            break;
        }

        // one uniform draw: observe the current classifier's error on it
        let i = pool.next_random()?;
        let example = &dataset.examples()[i];
        let wrong = match &model {
            Some(m) => m.predict(&example.features)? != example.label,
            // nothing trained yet: a constant class-0 guess, whose error
            // rate is the chance error the curves start from
            None => example.label != 0,
        };
        let obs = ErrorObservation::single(wrong);
        belief = belief.update(&obs, labels)?;
        steps.push(StepLog {
            t: labels,
            k,
            predicted: decision.current_risk,
            gain: decision.expected_gain,
            stop_flag: fired,
            v: Some(obs.mean()),
        });
        training.push(example.clone());
        labels += 1;

        if k == 2 {
            let j = pool.next_active(model.as_ref(), dataset)?;
            training.push(dataset.examples()[j].clone());
            labels += 1;
        }

        model = Some(fit(params.learner, &training, num_classes)?);
        retrains += 1;
        if retrains % params.options.test_stride == 0 {
            let error = classification_error(model.as_ref().unwrap(), &test_examples)?;
            trajectory.push(TrajectoryPoint { t: labels, error });
        }
        if params.options.belief_snapshot_every > 0
            && belief.t() % params.options.belief_snapshot_every == 0
        {
            snapshots.push(belief.snapshot());
        }
    }

    // make sure the curve reaches the last retrain even under a stride
    if let Some(m) = &model {
        if trajectory.last().map(|p| p.t) != Some(labels) {
            let error = classification_error(m, &test_examples)?;
            trajectory.push(TrajectoryPoint { t: labels, error });
        }
    }

    Ok(TrajectoryRun {
        query_order: pool.queried().to_vec(),
        steps,
        trajectory,
        belief_snapshots: snapshots,
        full,
    })
}

/// Held-out error at an arbitrary label count, linearly interpolated
/// between measured points (exact at measured points).
pub(crate) fn error_at<F: Scalar>(trajectory: &[TrajectoryPoint<F>], t: usize) -> F {
    debug_assert!(!trajectory.is_empty());
    if t <= trajectory[0].t {
        return trajectory[0].error;
    }
    for pair in trajectory.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if t == a.t {
            return a.error;
        }
        if t < b.t {
            let span = cast_usize::<F>(b.t - a.t);
            let frac = cast_usize::<F>(t - a.t) / span;
            return a.error + (b.error - a.error) * frac;
        }
    }
    trajectory.last().unwrap().error
}

fn meta_for<F: Scalar>(params: &RunParams<'_, F>, full: bool) -> RunMeta {
    RunMeta {
        run_id: params.run_id.clone(),
        dataset: params.dataset.name().to_string(),
        num_classes: params.dataset.num_classes(),
        n_train: params.train_indices.len(),
        n_test: params.test_indices.len(),
        learner: params.learner.kind,
        strategy: params.strategy,
        seed: params.seed,
        horizon: params.horizon,
        test_stride: params.options.test_stride,
        max_labels: params.options.max_labels,
        full_trajectory: full,
        trim_order: params.options.trim_order,
    }
}

/// Derives the record for one cost value from a full trajectory: the
/// stopping time is the first step whose gain fails to repay `k` labels.
fn record_for_gamma<F: Scalar>(
    run: &TrajectoryRun<F>,
    meta: RunMeta,
    gamma: F,
) -> RunRecord<F> {
    let mut steps = run.steps.clone();
    let mut stopping_time = None;
    for step in steps.iter_mut() {
        step.stop_flag = step.gain <= cast_usize::<F>(step.k) * gamma;
        if step.stop_flag && stopping_time.is_none() {
            stopping_time = Some(step.t);
        }
    }
    let (stopping_time, stop_reason) = match stopping_time {
        Some(t) => (t, StopReason::Rule),
        None => (
            steps.last().map(|s| s.t).unwrap_or(0),
            StopReason::BudgetExhausted,
        ),
    };
    let realized_error = error_at(&run.trajectory, stopping_time);
    let interpolated = meta.test_stride > 1;
    RunRecord {
        meta,
        gamma,
        query_order: run.query_order.clone(),
        steps,
        trajectory: run.trajectory.clone(),
        interpolated,
        belief_snapshots: run.belief_snapshots.clone(),
        stopping_time,
        stop_reason,
        realized_error,
        realized_cost: realized_error + gamma * cast_usize(stopping_time),
    }
}

/// Runs the sequential loop at one cost value.
///
/// When `continue_after_stop` is on (the default), the loop keeps buying
/// labels after the rule fires so the record carries the full error curve;
/// the stopping time and realized cost still refer to the first fire.
pub fn run_obsv<F: Scalar>(
    params: &RunParams<'_, F>,
    gamma: F,
) -> Result<RunRecord<F>, EvalError> {
    if params.options.continue_after_stop {
        let run = run_trajectory(params, None)?;
        Ok(record_for_gamma(&run, meta_for(params, run.full), gamma))
    } else {
        let run = run_trajectory(params, Some(gamma))?;
        let meta = meta_for(params, run.full);
        // flags are already final for this gamma; recompute T and cost
        Ok(record_for_gamma(&run, meta, gamma))
    }
}

/// Empirical expected cost of a set of runs at their shared cost value:
/// the mean of `R_T + gamma * T`.
pub fn compute_ve<F: Scalar>(records: &[&RunRecord<F>], gamma: F) -> Result<F, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecordSet);
    }
    let mut acc = F::zero();
    for r in records {
        if r.gamma != gamma {
            return Err(EvalError::GammaMismatch {
                record: r.gamma.to_f64().unwrap_or(f64::NAN),
                requested: gamma.to_f64().unwrap_or(f64::NAN),
            });
        }
        acc = acc + r.realized_error + gamma * cast_usize(r.stopping_time);
    }
    Ok(acc / cast_usize(records.len()))
}

/// Retrospective optimum over a record's stored error curve.
pub fn oracle_from_record<F: Scalar>(
    record: &RunRecord<F>,
    gamma: F,
) -> Result<(usize, F), EvalError> {
    if record.trajectory.is_empty() || !record.meta.full_trajectory {
        return Err(EvalError::TrajectoryMissing);
    }
    let points: Vec<(usize, F)> = record.trajectory.iter().map(|p| (p.t, p.error)).collect();
    Ok(oracle_stop_points(&points, gamma)?)
}

/// Mean plus raw and trimmed extremes of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatBand<F> {
    pub mean: F,
    pub min: F,
    pub max: F,
    /// `trim_order`-th smallest / largest values (equal to min/max at
    /// order 0 or when the sample is too small to trim).
    pub low_trimmed: F,
    pub high_trimmed: F,
}

fn stat_band<F: Scalar>(values: &[F], trim_order: usize) -> StatBand<F> {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len();
    let sum: F = sorted.iter().copied().sum();
    let trim = trim_order.min(n.saturating_sub(1) / 2);
    StatBand {
        mean: sum / cast_usize(n),
        min: sorted[0],
        max: sorted[n - 1],
        low_trimmed: sorted[trim],
        high_trimmed: sorted[n - 1 - trim],
    }
}

/// Aggregates for one cost value across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary<F> {
    pub gamma: F,
    pub runs: usize,
    pub obsv_stop: StatBand<F>,
    pub oracle_stop: StatBand<F>,
    pub obsv_cost: StatBand<F>,
    pub oracle_cost: StatBand<F>,
    pub ve_obsv: F,
    pub ve_oracle: F,
    /// Per-run realized-cost ratios (rule over oracle); absent when every
    /// oracle cost is zero.
    pub cost_ratio: Option<StatBand<F>>,
    /// Runs whose oracle cost is exactly zero, which are excluded from the
    /// ratio band instead of producing infinities.
    pub zero_denominator_runs: usize,
}

/// Sweep output: one aggregate row per cost value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary<F> {
    pub trim_order: usize,
    pub rows: Vec<GammaSummary<F>>,
}

/// Builds the per-cost aggregates from records grouped by gamma. Records
/// must all carry full trajectories. Groups follow the order of
/// `gamma_grid`; records inside a group follow their order in `records`.
pub fn summarize_records<F: Scalar>(
    records: &[RunRecord<F>],
    gamma_grid: &[F],
    trim_order: usize,
) -> Result<SweepSummary<F>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecordSet);
    }
    let mut rows = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        let group: Vec<&RunRecord<F>> = records.iter().filter(|r| r.gamma == gamma).collect();
        if group.is_empty() {
            continue;
        }
        let mut obsv_stop = Vec::new();
        let mut oracle_stop = Vec::new();
        let mut obsv_cost = Vec::new();
        let mut oracle_cost = Vec::new();
        let mut ratios = Vec::new();
        let mut zero_denominator_runs = 0usize;
        for r in &group {
            let (t_star, c_star) = oracle_from_record(r, gamma)?;
            obsv_stop.push(cast_usize::<F>(r.stopping_time));
            oracle_stop.push(cast_usize::<F>(t_star));
            obsv_cost.push(r.realized_cost);
            oracle_cost.push(c_star);
            if c_star > F::zero() {
                ratios.push(r.realized_cost / c_star);
            } else {
                zero_denominator_runs += 1;
            }
        }
        let ve_obsv = compute_ve(&group, gamma)?;
        let n = cast_usize::<F>(group.len());
        let ve_oracle = oracle_cost.iter().copied().sum::<F>() / n;
        rows.push(GammaSummary {
            gamma,
            runs: group.len(),
            obsv_stop: stat_band(&obsv_stop, trim_order),
            oracle_stop: stat_band(&oracle_stop, trim_order),
            obsv_cost: stat_band(&obsv_cost, trim_order),
            oracle_cost: stat_band(&oracle_cost, trim_order),
            ve_obsv,
            ve_oracle,
            cost_ratio: if ratios.is_empty() {
                None
            } else {
                Some(stat_band(&ratios, trim_order))
            },
            zero_denominator_runs,
        });
    }
    if rows.is_empty() {
        return Err(EvalError::EmptyRecordSet);
    }
    Ok(SweepSummary { trim_order, rows })
}

/// Flat plot-ready table: one `(gamma, metric, mean, low, high)` row per
/// aggregate, extremes at the configured trim order, `na` marking ratio
/// cells with no nonzero-denominator run.
pub fn summary_table<F: Scalar>(summary: &SweepSummary<F>) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("gamma,metric,mean,low,high\n");
    for row in &summary.rows {
        let mut push = |metric: &str, band: &StatBand<F>| {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.gamma, metric, band.mean, band.low_trimmed, band.high_trimmed
            );
        };
        push("obsv_stop_time", &row.obsv_stop);
        push("oracle_stop_time", &row.oracle_stop);
        push("obsv_cost", &row.obsv_cost);
        push("oracle_cost", &row.oracle_cost);
        match &row.cost_ratio {
            Some(band) => {
                let _ = writeln!(
                    out,
                    "{},cost_ratio,{},{},{}",
                    row.gamma, band.mean, band.low_trimmed, band.high_trimmed
                );
            }
            None => {
                let _ = writeln!(out, "{},cost_ratio,na,na,na", row.gamma);
            }
        }
        let ve_ratio = if row.ve_oracle > F::zero() {
            format!("{}", row.ve_obsv / row.ve_oracle)
        } else {
            "na".to_string()
        };
        let _ = writeln!(out, "{},ve_ratio,{ve_ratio},{ve_ratio},{ve_ratio}", row.gamma);
        let zd = row.zero_denominator_runs;
        let _ = writeln!(out, "{},zero_denominator_runs,{zd},{zd},{zd}", row.gamma);
    }
    out
}

/// One cross-validation cell of an experiment.
#[derive(Debug, Clone)]
pub struct SweepRunSpec {
    pub repetition: usize,
    pub fold: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Experiment-level inputs shared by every run of a sweep.
#[derive(Debug, Clone)]
pub struct Experiment<'a, F: Scalar> {
    pub dataset: &'a Dataset<F>,
    pub learner: LearnerConfig<F>,
    pub strategy: SamplingStrategy,
    pub active_share: f64,
    pub grid: GridConfig<F>,
    pub horizon: usize,
    pub options: RunOptions,
}

/// Executes every (run, gamma) cell: one trajectory per run, one derived
/// record per grid value, and the aggregate summary. Runs execute in
/// parallel; record order is deterministic (gamma-major in grid order,
/// then run order).
pub fn gamma_sweep<F: Scalar>(
    experiment: &Experiment<'_, F>,
    runs: &[SweepRunSpec],
    gamma_grid: &[F],
) -> Result<(Vec<RunRecord<F>>, SweepSummary<F>), EvalError> {
    if gamma_grid.is_empty() {
        return Err(EvalError::EmptyGammaGrid);
    }
    if runs.is_empty() {
        return Err(EvalError::EmptyRecordSet);
    }
    let trajectories: Vec<Result<(TrajectoryRun<F>, RunMeta), EvalError>> = runs
        .par_iter()
        .map(|spec| {
            let params = RunParams {
                dataset: experiment.dataset,
                train_indices: &spec.train_indices,
                test_indices: &spec.test_indices,
                learner: &experiment.learner,
                strategy: experiment.strategy,
                active_share: experiment.active_share,
                grid: &experiment.grid,
                horizon: experiment.horizon,
                seed: spec.seed,
                run_id: format!("r{:03}f{:02}", spec.repetition, spec.fold),
                options: &experiment.options,
            };
            let run = run_trajectory(&params, None)?;
            let meta = meta_for(&params, run.full);
            Ok((run, meta))
        })
        .collect();
    let mut executed = Vec::with_capacity(trajectories.len());
    for r in trajectories {
        executed.push(r?);
    }
    let mut records = Vec::with_capacity(executed.len() * gamma_grid.len());
    for &gamma in gamma_grid {
        for (run, meta) in &executed {
            records.push(record_for_gamma(run, meta.clone(), gamma));
        }
    }
    let summary = summarize_records(&records, gamma_grid, experiment.options.trim_order)?;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_gaussian_mixture;

    fn quick_dataset(seed: u64) -> Dataset<f64> {
        gen_gaussian_mixture(4, 3, 3.0, 30, seed).unwrap()
    }

    fn split_half(ds: &Dataset<f64>) -> (Vec<usize>, Vec<usize>) {
        let plan = crate::datasets::stratified_kfold(ds, 2, 1).unwrap();
        let (train, test) = plan.split(0);
        (train, test)
    }

    fn params<'a>(
        ds: &'a Dataset<f64>,
        train: &'a [usize],
        test: &'a [usize],
        learner: &'a LearnerConfig<f64>,
        grid: &'a GridConfig<f64>,
        options: &'a RunOptions,
        seed: u64,
    ) -> RunParams<'a, f64> {
        RunParams {
            dataset: ds,
            train_indices: train,
            test_indices: test,
            learner,
            strategy: SamplingStrategy::RandomOnly,
            active_share: 0.5,
            grid,
            horizon: 1,
            seed,
            run_id: "r000f00".to_string(),
            options,
        }
    }

    #[test]
    fn large_gamma_stops_before_any_query() {
        let ds = quick_dataset(1);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions {
            continue_after_stop: false,
            ..RunOptions::default()
        };
        let p = params(&ds, &train, &test, &learner, &grid, &options, 3);
        let record = run_obsv(&p, 0.1).unwrap();
        assert_eq!(record.stopping_time, 0);
        assert_eq!(record.stop_reason, StopReason::Rule);
        assert_eq!(record.steps.len(), 1);
        assert!(record.steps[0].stop_flag);
        assert_eq!(record.query_order.len(), 0);
        // realized cost is the chance error, nothing was bought
        assert!((record.realized_cost - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_gamma_runs_to_exhaustion() {
        let ds = quick_dataset(2);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let p = params(&ds, &train, &test, &learner, &grid, &options, 5);
        let record = run_obsv(&p, 0.0).unwrap();
        assert_eq!(record.stop_reason, StopReason::BudgetExhausted);
        assert_eq!(record.stopping_time, train.len());
        assert_eq!(record.query_order.len(), train.len());
        // every iteration consumed exactly one label under random sampling
        for (i, step) in record.steps.iter().enumerate() {
            assert_eq!(step.k, 1);
            assert_eq!(step.t, i);
        }
    }

    #[test]
    fn mixed_strategy_buys_two_labels_per_step() {
        let ds = quick_dataset(3);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let mut p = params(&ds, &train, &test, &learner, &grid, &options, 9);
        p.strategy = SamplingStrategy::Mixed;
        let record = run_obsv(&p, 0.0).unwrap();
        assert!(record.steps.iter().take(10).all(|s| s.k == 2));
        // label counts advance by 2 while the active pool lasts
        assert_eq!(record.steps[1].t, 2);
        assert_eq!(record.query_order.len(), train.len());
    }

    #[test]
    fn max_labels_cap_reports_budget_exhausted() {
        let ds = quick_dataset(4);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions {
            max_labels: Some(7),
            ..RunOptions::default()
        };
        let p = params(&ds, &train, &test, &learner, &grid, &options, 2);
        let record = run_obsv(&p, 0.0).unwrap();
        assert_eq!(record.stopping_time, 7);
        assert_eq!(record.stop_reason, StopReason::BudgetExhausted);
    }

    #[test]
    fn overlapping_folds_are_rejected() {
        let ds = quick_dataset(5);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let train: Vec<usize> = (0..40).collect();
        let test: Vec<usize> = (39..60).collect();
        let p = params(&ds, &train, &test, &learner, &grid, &options, 2);
        assert!(matches!(
            run_obsv(&p, 0.01),
            Err(EvalError::Overlap { index: 39 })
        ));
    }

    #[test]
    fn compute_ve_examples() {
        let ds = quick_dataset(6);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let p = params(&ds, &train, &test, &learner, &grid, &options, 7);
        let mut a = run_obsv(&p, 0.01).unwrap();
        // single record: cost is R_T + gamma T
        a.stopping_time = 10;
        a.realized_error = 0.2;
        let v = compute_ve(&[&a], 0.01).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        // two records: the mean
        let mut b = a.clone();
        b.stopping_time = 30;
        b.realized_error = 0.2;
        let v = compute_ve(&[&a, &b], 0.01).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
        // gamma zero: mean error at stop
        let mut c = a.clone();
        c.gamma = 0.0;
        let v = compute_ve(&[&c], 0.0).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
        assert!(matches!(
            compute_ve(&[&a], 0.5),
            Err(EvalError::GammaMismatch { .. })
        ));
        assert!(matches!(
            compute_ve::<f64>(&[], 0.1),
            Err(EvalError::EmptyRecordSet)
        ));
    }

    #[test]
    fn oracle_from_record_matches_enumeration() {
        let ds = quick_dataset(7);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let p = params(&ds, &train, &test, &learner, &grid, &options, 8);
        let mut record = run_obsv(&p, 0.02).unwrap();
        record.trajectory = vec![
            TrajectoryPoint { t: 0, error: 0.5 },
            TrajectoryPoint { t: 1, error: 0.3 },
            TrajectoryPoint { t: 2, error: 0.25 },
            TrajectoryPoint { t: 3, error: 0.24 },
        ];
        let (t, c) = oracle_from_record(&record, 0.02).unwrap();
        assert_eq!(t, 2);
        assert!((c - 0.29).abs() < 1e-12);
        let (t, _) = oracle_from_record(&record, 0.0).unwrap();
        assert_eq!(t, 3);
        // falling costs only push the optimal stop later
        let mut prev = 0usize;
        for gamma in [0.5, 0.05, 0.01, 0.0] {
            let (t, _) = oracle_from_record(&record, gamma).unwrap();
            assert!(t >= prev);
            prev = t;
        }
        record.meta.full_trajectory = false;
        assert!(matches!(
            oracle_from_record(&record, 0.1),
            Err(EvalError::TrajectoryMissing)
        ));
    }

    #[test]
    fn oracle_cost_lower_bounds_realized_cost() {
        // the oracle minimizes over the same trajectory, so its cost is a
        // lower bound on the realized cost at every gamma
        let ds = quick_dataset(8);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let p = params(&ds, &train, &test, &learner, &grid, &options, 21);
        for gamma in [0.0, 1e-4, 1e-3, 1e-2, 0.1] {
            let record = run_obsv(&p, gamma).unwrap();
            let (_, oracle_cost) = oracle_from_record(&record, gamma).unwrap();
            assert!(oracle_cost <= record.realized_cost + 1e-12);
        }
    }

    #[test]
    fn derived_records_match_direct_runs() {
        let ds = quick_dataset(9);
        let (train, test) = split_half(&ds);
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let experiment = Experiment {
            dataset: &ds,
            learner: learner.clone(),
            strategy: SamplingStrategy::RandomOnly,
            active_share: 0.5,
            grid: grid.clone(),
            horizon: 1,
            options: options.clone(),
        };
        let runs = vec![SweepRunSpec {
            repetition: 0,
            fold: 0,
            train_indices: train.clone(),
            test_indices: test.clone(),
            seed: 13,
        }];
        let gammas = [0.05, 0.001, 0.0];
        let (records, _) = gamma_sweep(&experiment, &runs, &gammas).unwrap();
        for (i, &gamma) in gammas.iter().enumerate() {
            let p = params(&ds, &train, &test, &learner, &grid, &options, 13);
            let direct = run_obsv(&p, gamma).unwrap();
            assert_eq!(records[i], direct, "gamma {gamma}");
        }
    }

    #[test]
    fn sweep_summary_is_consistent() {
        let ds = quick_dataset(10);
        let plan = crate::datasets::stratified_kfold(&ds, 3, 2).unwrap();
        let learner = LearnerConfig::new(LearnerKind::NearestCentroid);
        let experiment = Experiment {
            dataset: &ds,
            learner,
            strategy: SamplingStrategy::RandomOnly,
            active_share: 0.5,
            grid: GridConfig::default(),
            horizon: 1,
            options: RunOptions::default(),
        };
        let runs: Vec<SweepRunSpec> = (0..3)
            .map(|fold| {
                let (train, test) = plan.split(fold);
                SweepRunSpec {
                    repetition: 0,
                    fold,
                    train_indices: train,
                    test_indices: test,
                    seed: 100 + fold as u64,
                }
            })
            .collect();
        let gammas = [0.01, 0.001, 0.0];
        let (records, summary) = gamma_sweep(&experiment, &runs, &gammas).unwrap();
        assert_eq!(records.len(), 9);
        assert_eq!(summary.rows.len(), 3);
        for row in &summary.rows {
            assert_eq!(row.runs, 3);
            // extremes bracket the mean
            for band in [&row.obsv_stop, &row.oracle_stop, &row.obsv_cost, &row.oracle_cost] {
                assert!(band.min <= band.mean + 1e-12 && band.mean <= band.max + 1e-12);
                assert!(band.low_trimmed >= band.min && band.high_trimmed <= band.max);
            }
            // per-trajectory oracle lower-bounds the realized cost
            assert!(row.ve_oracle <= row.ve_obsv + 1e-12);
            if let Some(ratio) = &row.cost_ratio {
                assert!(ratio.min >= 1.0 - 1e-12);
            }
        }
        // a method's cost ratio against itself is one
        let identity: Vec<f64> = records
            .iter()
            .filter(|r| r.gamma == 0.01)
            .map(|r| r.realized_cost / r.realized_cost)
            .collect();
        assert!(identity.iter().all(|&x| x == 1.0));
        // the table renders one block per gamma
        let table = summary_table(&summary);
        assert_eq!(table.lines().count(), 1 + 3 * 7);
        assert!(table.starts_with("gamma,metric,mean,low,high"));
    }

    #[test]
    fn records_are_bit_identical_across_reruns() {
        let learner = LearnerConfig::new(LearnerKind::AdaBoost);
        let grid = GridConfig::default();
        let options = RunOptions::default();
        let ds = gen_gaussian_mixture::<f64>(2, 3, 2.5, 40, 12).unwrap();
        let plan = crate::datasets::stratified_kfold(&ds, 2, 3).unwrap();
        let (train, test) = plan.split(0);
        let mut p = params(&ds, &train, &test, &learner, &grid, &options, 19);
        p.run_id = "r001f01".into();
        let a = run_obsv(&p, 0.003).unwrap();
        let b = run_obsv(&p, 0.003).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn interpolation_between_strided_points() {
        let traj = vec![
            TrajectoryPoint { t: 0, error: 0.9 },
            TrajectoryPoint { t: 4, error: 0.5 },
            TrajectoryPoint { t: 8, error: 0.3 },
        ];
        assert_eq!(error_at(&traj, 0), 0.9);
        assert!((error_at(&traj, 2) - 0.7).abs() < 1e-12);
        assert_eq!(error_at(&traj, 4), 0.5);
        assert!((error_at(&traj, 6) - 0.4).abs() < 1e-12);
        assert_eq!(error_at(&traj, 20), 0.3);
    }

    #[test]
    fn cost_config_checks_the_grid() {
        assert!(CostConfig::new(0.1, vec![0.1, 0.01, 0.0]).is_ok());
        assert!(matches!(
            CostConfig::new(0.1, vec![]),
            Err(EvalError::EmptyGammaGrid)
        ));
        assert!(matches!(
            CostConfig::new(0.1, vec![0.01, 0.1]),
            Err(EvalError::BadGammaGrid)
        ));
        assert!(matches!(
            CostConfig::new(0.1, vec![0.1, -0.2]),
            Err(EvalError::BadGammaGrid)
        ));
        let grid = default_gamma_grid::<f64>();
        assert_eq!(grid.len(), 64);
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(grid[0], 0.9);
        assert_eq!(*grid.last().unwrap(), 0.0);
    }
}
