//! The four commands: `run`, `evaluate`, `summarize`, `convergence`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use gggp::data::{Dataset, GenderFilter, SplitSpec};
use gggp::engine::{self, ExecOptions};
use gggp::expr::parse_model_file;
use gggp::metrics::MetricReport;
use gggp::report::{
    convergence_to_csv, parse_run_log_csv, pool_convergence, run_log_to_csv, summarize,
    summary_to_aligned, summary_to_csv, write_run_result, ParsedResult,
};

use crate::spec::ExperimentSpec;
use crate::CliError;

/// Writes through a temporary sibling and renames, so concurrent readers
/// never observe a partial file.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let tmp = PathBuf::from(format!("{}.tmp", path.display()));
    std::fs::write(&tmp, content)
        .and_then(|()| std::fs::rename(&tmp, path))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Runtime)
}

fn run_in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    #[cfg(feature = "parallel")]
    if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Runtime(anyhow!(e)))?;
        return Ok(pool.install(f));
    }
    let _ = workers;
    Ok(f())
}

/// Executes every configured run, writing one `.result` document and one
/// `.log.csv` per (config, replicate) into the spec's output directory.
/// All references are resolved before the first run starts.
pub fn cmd_run(spec_path: &Path) -> Result<(), CliError> {
    let spec = ExperimentSpec::load(spec_path)?;

    let extra_columns: Vec<String> = spec.pregnancy_column.iter().cloned().collect();
    let data = Dataset::load_csv(&spec.dataset, &spec.target, &spec.features, &extra_columns)
        .map_err(|e| CliError::spec(e.to_string()))?;
    let filtered = data
        .nhanes_filter(spec.min_age, spec.pregnancy_column.as_deref())
        .map_err(|e| CliError::spec(e.to_string()))?;
    let (train, test) = filtered
        .split(&SplitSpec {
            train_fraction: spec.train_fraction,
            seed: spec.seed,
            gender_filter: spec.gender,
        })
        .map_err(|e| CliError::spec(e.to_string()))?;
    for cfg in &spec.configs {
        engine::load_run_grammar(cfg, &train)
            .map_err(|e| CliError::spec(format!("config {}: {e}", cfg.name)))?;
    }

    std::fs::create_dir_all(&spec.output_dir)
        .with_context(|| format!("creating {}", spec.output_dir.display()))
        .map_err(CliError::Runtime)?;

    println!(
        "running {} config(s) x {} replicate(s) on {} ({} train / {} test rows)",
        spec.configs.len(),
        spec.replicates,
        spec.dataset.display(),
        train.n_rows(),
        test.n_rows()
    );

    let opts = ExecOptions::default();
    let batch = run_in_pool(spec.workers, || {
        engine::run_batch(&spec.configs, spec.replicates, spec.seed, &train, &test, &opts)
    })?;

    let extras: Vec<(String, String)> = vec![
        ("dataset".to_string(), spec.dataset.display().to_string()),
        ("gender".to_string(), spec.gender.label().to_string()),
        (
            "train_fraction".to_string(),
            spec.train_fraction.to_string(),
        ),
        ("split_seed".to_string(), spec.seed.to_string()),
    ];

    let mut failures = 0usize;
    for entry in &batch {
        let stem = format!("{}_r{:02}", entry.config_name, entry.replicate);
        match &entry.result {
            Ok(result) => {
                write_atomic(
                    &spec.output_dir.join(format!("{stem}.result")),
                    &write_run_result(result, &extras),
                )?;
                write_atomic(
                    &spec.output_dir.join(format!("{stem}.log.csv")),
                    &run_log_to_csv(&result.log),
                )?;
                let line = match (&result.train_metrics, &result.test_metrics) {
                    (Some(train_m), Some(test_m)) => format!(
                        "train RMSE {:.4} | test R2 {:.4}",
                        train_m.rmse, test_m.r2
                    ),
                    _ => "no valid model".to_string(),
                };
                println!(
                    "{stem} | {} depth {} seed {} | {line}",
                    result.config.variant.label(),
                    result.config.max_tree_depth,
                    entry.seed
                );
            }
            Err(e) => {
                failures += 1;
                eprintln!("{stem} | FAILED: {e}");
            }
        }
    }

    if failures > 0 {
        return Err(CliError::Runtime(anyhow!(
            "{failures} run(s) failed; partial results preserved in {}",
            spec.output_dir.display()
        )));
    }
    Ok(())
}

pub struct EvaluateArgs {
    pub model: PathBuf,
    pub csv: PathBuf,
    pub target: String,
    pub split: Option<f64>,
    pub seed: u64,
    pub gender: GenderFilter,
    pub min_age: Option<f64>,
    pub pregnancy_column: Option<String>,
}

/// Evaluates a stored canonical-expression model against a CSV, either on
/// the whole (filtered) dataset or on each side of a seeded split.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| CliError::spec(format!("cannot read model {}: {e}", args.model.display())))?;
    let model = parse_model_file(&text).map_err(|e| CliError::spec(e.to_string()))?;
    let variables: Vec<String> = model.variables().into_iter().map(String::from).collect();
    if variables.contains(&args.target) {
        return Err(CliError::spec(format!(
            "model references the target column {}",
            args.target
        )));
    }

    let extra_columns: Vec<String> = args.pregnancy_column.iter().cloned().collect();
    let data = Dataset::load_csv(&args.csv, &args.target, &variables, &extra_columns)
        .map_err(|e| CliError::spec(e.to_string()))?;
    let filtered = data
        .nhanes_filter(args.min_age, args.pregnancy_column.as_deref())
        .map_err(|e| CliError::spec(e.to_string()))?;

    println!("model   = {}", args.model.display());
    println!("dataset = {} ({} usable rows)", args.csv.display(), filtered.n_rows());
    println!("expr    = {}", model.to_text());

    let report = |label: &str, side: &Dataset| -> Result<(), CliError> {
        let (rows, target) = side.to_matrix().map_err(|e| CliError::Runtime(anyhow!(e)))?;
        let compiled = model
            .compile(side.feature_columns())
            .map_err(|e| CliError::spec(e.to_string()))?;
        let pred: Vec<f64> = rows.iter().map(|r| compiled.eval(r)).collect();
        let m = MetricReport::compute(&pred, &target).map_err(|e| CliError::Runtime(anyhow!(e)))?;
        println!(
            "{label:<5} | rmse = {:.6} | r2 = {:.6} | avg_error = {:.6} | n = {}",
            m.rmse, m.r2, m.avg_error, m.n
        );
        Ok(())
    };

    match args.split {
        None => report("all", &filtered),
        Some(fraction) => {
            let (train, test) = filtered
                .split(&SplitSpec {
                    train_fraction: fraction,
                    seed: args.seed,
                    gender_filter: args.gender,
                })
                .map_err(|e| CliError::spec(e.to_string()))?;
            report("train", &train)?;
            report("test", &test)
        }
    }
}

fn result_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::spec(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(suffix)))
        .collect();
    files.sort();
    Ok(files)
}

/// Per configuration, reports the replicate with the lowest training RMSE
/// as paired train/test rows sorted by training RMSE; prints an aligned
/// table and writes `summary.csv` next to the results.
pub fn cmd_summarize(dir: &Path) -> Result<(), CliError> {
    let files = result_files(dir, ".result")?;
    if files.is_empty() {
        return Err(CliError::spec(format!(
            "no .result files in {}",
            dir.display()
        )));
    }
    let mut parsed = Vec::with_capacity(files.len());
    for file in &files {
        let text = std::fs::read_to_string(file)
            .with_context(|| format!("reading {}", file.display()))
            .map_err(CliError::Runtime)?;
        parsed.push(
            ParsedResult::parse(&text)
                .with_context(|| format!("parsing {}", file.display()))
                .map_err(CliError::Runtime)?,
        );
    }
    let rows = summarize(&parsed).map_err(|e| CliError::Runtime(anyhow!(e)))?;
    print!("{}", summary_to_aligned(&rows));
    write_atomic(&dir.join("summary.csv"), &summary_to_csv(&rows))?;
    Ok(())
}

/// Pools best-of-run trajectories per configuration across replicates and
/// emits the long-format convergence CSV (stdout plus `convergence.csv`).
pub fn cmd_convergence(dir: &Path) -> Result<(), CliError> {
    let files = result_files(dir, ".log.csv")?;
    if files.is_empty() {
        return Err(CliError::spec(format!(
            "no .log.csv files in {}",
            dir.display()
        )));
    }
    let mut groups: BTreeMap<String, Vec<gggp::RunLog>> = BTreeMap::new();
    for file in &files {
        let name = file
            .file_name()
            .expect("filtered on file name")
            .to_string_lossy()
            .trim_end_matches(".log.csv")
            .to_string();
        // {config}_rNN.log.csv groups by config; odd names form their own group
        let config = match name.rsplit_once("_r") {
            Some((config, digits)) if digits.chars().all(|c| c.is_ascii_digit()) => {
                config.to_string()
            }
            _ => name,
        };
        let text = std::fs::read_to_string(file)
            .with_context(|| format!("reading {}", file.display()))
            .map_err(CliError::Runtime)?;
        let log = parse_run_log_csv(&text)
            .with_context(|| format!("parsing {}", file.display()))
            .map_err(CliError::Runtime)?;
        groups.entry(config).or_default().push(log);
    }
    let groups: Vec<(String, Vec<gggp::RunLog>)> = groups.into_iter().collect();
    let points = pool_convergence(&groups).map_err(|e| CliError::Runtime(anyhow!(e)))?;
    let csv = convergence_to_csv(&points);
    print!("{csv}");
    write_atomic(&dir.join("convergence.csv"), &csv)?;
    Ok(())
}
