//! Command implementations behind the binary: simulate, run, sweep and
//! report. Everything here is a plain function over a validated config so
//! the commands are testable without spawning processes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, DatasetSource, ExperimentConfig};
use crate::datasets::{gen_gaussian_mixture, load_csv, stratified_kfold, Dataset, DatasetError};
use crate::eval::{
    error_at, gamma_sweep, run_obsv, summarize_records, summary_table, Experiment, EvalError,
    RunOptions, RunParams, RunRecord, StopReason, SweepRunSpec, SweepSummary,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("no readable records in {dir}")]
    NoRecords { dir: String },
}

impl CliError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn config_invalid(path: &str, message: &str) -> CliError {
    CliError::Config(ConfigError::Invalid {
        path: path.to_string(),
        message: message.to_string(),
    })
}

/// splitmix64; the standard 64-bit mixer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives independent sub-seeds from the master seed.
fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ a) ^ b)
}

const SEED_TAG_DATASET: u64 = 1;
const SEED_TAG_FOLDS: u64 = 2;
const SEED_TAG_RUN: u64 = 3;

/// Builds the configured dataset (applying normalization if requested).
pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset<f64>, CliError> {
    let section = &config.dataset;
    let dataset = match section.source {
        DatasetSource::Synthetic => gen_gaussian_mixture::<f64>(
            section.num_classes.unwrap(),
            section.feature_dim.unwrap(),
            section.class_separation.unwrap(),
            section.count_per_class.unwrap(),
            mix_seed(config.cv.seed, SEED_TAG_DATASET, 0),
        )?,
        DatasetSource::Csv => {
            let path = section.path.as_ref().unwrap();
            load_csv::<f64>(path, &section.csv_schema())?
        }
    };
    let dataset = if section.normalize {
        dataset.min_max_scaled()
    } else {
        dataset
    };
    Ok(match &section.name {
        Some(name) => Dataset::new(dataset.examples().to_vec(), dataset.num_classes(), name)?,
        None => dataset,
    })
}

/// Shell-friendly cost tag used in record file names: mantissa-exponent
/// form, e.g. `1e-3`, `9e-2`, `0e0`.
pub fn gamma_tag(gamma: f64) -> String {
    format!("{gamma:e}")
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_record(dir: &Path, record: &RunRecord<f64>) -> Result<PathBuf, CliError> {
    let name = format!("{}_g{}.json", record.meta.run_id, gamma_tag(record.gamma));
    let path = dir.join(name);
    let mut line = serde_json::to_string(record).expect("records serialize");
    line.push('\n');
    write_text(&path, &line)?;
    Ok(path)
}

/// Builds the cross-validation cells: `repetitions` independent stratified
/// fold plans, each fold serving as the test side once.
fn cv_runs(
    config: &ExperimentConfig,
    dataset: &Dataset<f64>,
) -> Result<Vec<SweepRunSpec>, CliError> {
    let mut runs = Vec::new();
    for rep in 0..config.cv.repetitions {
        let plan = stratified_kfold(
            dataset,
            config.cv.folds,
            mix_seed(config.cv.seed, SEED_TAG_FOLDS, rep as u64),
        )?;
        for fold in 0..config.cv.folds {
            let (train, test) = plan.split(fold);
            runs.push(SweepRunSpec {
                repetition: rep,
                fold,
                train_indices: train,
                test_indices: test,
                seed: mix_seed(config.cv.seed, SEED_TAG_RUN, (rep * 1000 + fold) as u64),
            });
        }
    }
    Ok(runs)
}

fn build_experiment<'a>(
    config: &ExperimentConfig,
    dataset: &'a Dataset<f64>,
    options: RunOptions,
) -> Experiment<'a, f64> {
    Experiment {
        dataset,
        learner: config.learner.to_learner_config(),
        strategy: config.sampling.strategy,
        active_share: config.sampling.active_share,
        grid: config.belief.to_grid_config(),
        horizon: config.stopping.horizon,
        options,
    }
}

fn in_thread_pool<T: Send>(
    parallel: usize,
    job: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| CliError::Io {
            path: "<thread pool>".to_string(),
            message: e.to_string(),
        })?;
    Ok(pool.install(job))
}

/// Output of `simulate`.
#[derive(Debug)]
pub struct SimulateOutput {
    pub record_path: PathBuf,
    pub table_path: PathBuf,
    pub stopping_time: usize,
    pub stop_reason: StopReason,
    pub realized_cost: f64,
}

/// Runs one synthetic trace and writes the record plus a plot-ready table
/// of the per-step series (step, observation, predicted error, measured
/// error, realized cost, stop flag).
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<SimulateOutput, CliError> {
    if config.dataset.source != DatasetSource::Synthetic {
        return Err(config_invalid(
            "dataset.source",
            "simulate needs a synthetic dataset",
        ));
    }
    let gamma = config
        .stopping
        .gamma
        .ok_or_else(|| config_invalid("stopping.gamma", "simulate needs a cost value"))?;
    let dataset = build_dataset(config)?;
    let plan = stratified_kfold(
        &dataset,
        config.cv.folds,
        mix_seed(config.cv.seed, SEED_TAG_FOLDS, 0),
    )?;
    let (train, test) = plan.split(0);
    let options = config.run.to_run_options(false);
    let params = RunParams {
        dataset: &dataset,
        train_indices: &train,
        test_indices: &test,
        learner: &config.learner.to_learner_config(),
        strategy: config.sampling.strategy,
        active_share: config.sampling.active_share,
        grid: &config.belief.to_grid_config(),
        horizon: config.stopping.horizon,
        seed: mix_seed(config.cv.seed, SEED_TAG_RUN, 0),
        run_id: "r000f00".to_string(),
        options: &options,
    };
    let record = run_obsv(&params, gamma)?;

    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let record_path = write_record(out_dir, &record)?;
    let mut table = String::from("t\tv\tpredicted\ttest_error\tcost\tstop\n");
    for step in &record.steps {
        let measured = error_at(&record.trajectory, step.t);
        let v = step.v.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}",
            step.t,
            v,
            step.predicted,
            measured,
            measured + gamma * step.t as f64,
            u8::from(step.stop_flag),
        );
    }
    let table_path = out_dir.join("trajectory.tsv");
    write_text(&table_path, &table)?;
    Ok(SimulateOutput {
        record_path,
        table_path,
        stopping_time: record.stopping_time,
        stop_reason: record.stop_reason,
        realized_cost: record.realized_cost,
    })
}

/// Output of `run` and `sweep`.
#[derive(Debug)]
pub struct BatchOutput {
    pub record_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub runs: usize,
    pub gammas: usize,
}

fn execute_batch(
    config: &ExperimentConfig,
    out_dir: &Path,
    gamma_grid: &[f64],
) -> Result<BatchOutput, CliError> {
    let dataset = build_dataset(config)?;
    let runs = cv_runs(config, &dataset)?;
    // evaluation needs the full error curve of every run
    let mut options = config.run.to_run_options(true);
    options.continue_after_stop = true;
    let experiment = build_experiment(config, &dataset, options);
    let (records, summary) = in_thread_pool(config.run.parallel, || {
        gamma_sweep(&experiment, &runs, gamma_grid)
    })??;

    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut record_paths = Vec::with_capacity(records.len());
    for record in &records {
        record_paths.push(write_record(out_dir, record)?);
    }
    let summary_path = out_dir.join("summary.csv");
    write_text(&summary_path, &summary_table(&summary))?;
    Ok(BatchOutput {
        record_paths,
        summary_path,
        runs: runs.len(),
        gammas: gamma_grid.len(),
    })
}

/// Executes the cross-validation runs at the single configured cost.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<BatchOutput, CliError> {
    let gamma = config
        .stopping
        .gamma
        .ok_or_else(|| config_invalid("stopping.gamma", "run needs a cost value"))?;
    execute_batch(config, out_dir, &[gamma])
}

/// Executes the cross-validation runs over the whole cost grid.
pub fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<BatchOutput, CliError> {
    let grid = config.stopping.grid_or_default();
    execute_batch(config, out_dir, &grid)
}

/// Output of `report`.
#[derive(Debug)]
pub struct ReportOutput {
    pub summary: SweepSummary<f64>,
    pub table: String,
    pub summary_path: Option<PathBuf>,
    pub records_used: usize,
    /// Files that could not be parsed, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Rebuilds the sweep summary from a directory of record files. Corrupt
/// records are skipped and listed; recomputing over a sweep's own output
/// reproduces its summary byte for byte.
pub fn cmd_report(records_dir: &Path, out_dir: Option<&Path>) -> Result<ReportOutput, CliError> {
    let entries = std::fs::read_dir(records_dir).map_err(|e| io_err(records_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    let mut records: Vec<RunRecord<f64>> = Vec::new();
    let mut skipped = Vec::new();
    for path in files {
        match std::fs::read_to_string(&path) {
            Ok(text) => match serde_json::from_str::<RunRecord<f64>>(&text) {
                Ok(record) => records.push(record),
                Err(e) => skipped.push((path, e.to_string())),
            },
            Err(e) => skipped.push((path, e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(CliError::NoRecords {
            dir: records_dir.display().to_string(),
        });
    }
    // deterministic aggregation order: cost-major (descending), then run id
    records.sort_by(|a, b| {
        b.gamma
            .partial_cmp(&a.gamma)
            .expect("finite gammas")
            .then_with(|| a.meta.run_id.cmp(&b.meta.run_id))
    });
    let mut gammas: Vec<f64> = Vec::new();
    for r in &records {
        if gammas.last() != Some(&r.gamma) {
            gammas.push(r.gamma);
        }
    }
    let trim_order = records[0].meta.trim_order;
    let summary = summarize_records(&records, &gammas, trim_order)?;
    let table = summary_table(&summary);
    let summary_path = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let path = dir.join("summary.csv");
            write_text(&path, &table)?;
            Some(path)
        }
        None => None,
    };
    Ok(ReportOutput {
        summary,
        table,
        summary_path,
        records_used: records.len(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn synth_config(gamma: &str) -> ExperimentConfig {
        parse_config(&format!(
            r#"
            [dataset]
            source = "synthetic"
            num_classes = 4
            feature_dim = 3
            class_separation = 3.0
            count_per_class = 24

            [stopping]
            {gamma}

            [cv]
            folds = 3
            repetitions = 2
            seed = 11
        "#
        ))
        .unwrap()
    }

    #[test]
    fn gamma_tags_are_shell_friendly() {
        assert_eq!(gamma_tag(0.001), "1e-3");
        assert_eq!(gamma_tag(0.09), "9e-2");
        assert_eq!(gamma_tag(0.9), "9e-1");
        assert_eq!(gamma_tag(0.0), "0e0");
    }

    #[test]
    fn simulate_large_gamma_emits_a_single_row() {
        let config = synth_config("gamma = 0.1");
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_simulate(&config, dir.path()).unwrap();
        assert_eq!(out.stopping_time, 0);
        let table = std::fs::read_to_string(&out.table_path).unwrap();
        // header plus exactly one data row
        assert_eq!(table.lines().count(), 2);
        let row = table.lines().nth(1).unwrap();
        assert!(row.starts_with("0\t"));
        assert!(row.ends_with("\t1"));
    }

    #[test]
    fn simulate_is_byte_deterministic() {
        let config = synth_config("gamma = 0.002");
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = cmd_simulate(&config, d1.path()).unwrap();
        let o2 = cmd_simulate(&config, d2.path()).unwrap();
        assert_eq!(
            std::fs::read(&o1.record_path).unwrap(),
            std::fs::read(&o2.record_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&o1.table_path).unwrap(),
            std::fs::read(&o2.table_path).unwrap()
        );
    }

    #[test]
    fn simulate_rejects_csv_sources() {
        let mut config = synth_config("gamma = 0.1");
        config.dataset.source = DatasetSource::Csv;
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_simulate(&config, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn run_writes_one_record_per_cv_cell() {
        let config = synth_config("gamma = 0.01");
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_run(&config, dir.path()).unwrap();
        // 2 repetitions x 3 folds
        assert_eq!(out.runs, 6);
        assert_eq!(out.record_paths.len(), 6);
        assert!(out.summary_path.exists());
        for p in &out.record_paths {
            assert!(p.file_name().unwrap().to_string_lossy().ends_with("_g1e-2.json"));
        }
    }

    #[test]
    fn sweep_report_round_trip_is_identical() {
        let mut config = synth_config("gamma_grid = [0.05, 0.002, 0.0]");
        config.run.parallel = 2;
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_sweep(&config, dir.path()).unwrap();
        assert_eq!(out.record_paths.len(), 18);
        let sweep_summary = std::fs::read_to_string(&out.summary_path).unwrap();

        let report_dir = tempfile::tempdir().unwrap();
        let report = cmd_report(dir.path(), Some(report_dir.path())).unwrap();
        assert_eq!(report.records_used, 18);
        assert!(report.skipped.is_empty());
        let report_summary = std::fs::read_to_string(report.summary_path.unwrap()).unwrap();
        assert_eq!(sweep_summary, report_summary);
    }

    #[test]
    fn report_skips_corrupt_records_and_lists_them() {
        let config = synth_config("gamma = 0.01");
        let dir = tempfile::tempdir().unwrap();
        cmd_run(&config, dir.path()).unwrap();
        std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
        let report = cmd_report(dir.path(), None).unwrap();
        assert_eq!(report.records_used, 6);
        assert_eq!(report.skipped.len(), 1);
        assert!(report.skipped[0].0.ends_with("broken.json"));
    }

    #[test]
    fn report_on_an_empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_report(dir.path(), None).unwrap_err();
        assert!(matches!(err, CliError::NoRecords { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sweep_rerun_is_byte_identical() {
        let config = synth_config("gamma_grid = [0.01, 0.0]");
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = cmd_sweep(&config, d1.path()).unwrap();
        let o2 = cmd_sweep(&config, d2.path()).unwrap();
        for (a, b) in o1.record_paths.iter().zip(&o2.record_paths) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
        assert_eq!(
            std::fs::read(&o1.summary_path).unwrap(),
            std::fs::read(&o2.summary_path).unwrap()
        );
    }
}
