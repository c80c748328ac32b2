//! Result-file and log serialization plus the aggregation behind the
//! `summarize` and `convergence` commands.
//!
//! A run result is a flat `key = value` text document with a fixed key
//! order; a run log is a four-column CSV. Both round-trip, and neither
//! contains wall-clock data, so re-running an identical `(config, seed)`
//! reproduces the files byte for byte.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{RunLog, RunResult, Snapshot};

pub const RESULT_FORMAT: &str = "gggp-result-v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed result file: {detail}")]
    Malformed { detail: String },
    #[error("result file lacks key {key}")]
    MissingKey { key: String },
    #[error("key {key} holds {value:?}, expected {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("no results to aggregate")]
    Empty,
    #[error("runs of config {config} disagree on their snapshot schedule")]
    InconsistentSchedule { config: String },
}

/// Serializes a run result. `extras` (already ordered by the caller) are
/// appended verbatim, letting the CLI record dataset context.
pub fn write_run_result(result: &RunResult, extras: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut push = |key: &str, value: String| {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    };
    let cfg = &result.config;
    push("format", RESULT_FORMAT.to_string());
    push("config", cfg.name.clone());
    push("variant", cfg.variant.label().to_string());
    push("grammar", cfg.grammar_path.display().to_string());
    push("population_size", cfg.population_size.to_string());
    push("generations", cfg.generations.to_string());
    push("p_crossover", cfg.p_crossover.to_string());
    push("p_mutation", cfg.p_mutation.to_string());
    push("max_tree_depth", cfg.max_tree_depth.to_string());
    push("max_wraps", cfg.max_wraps.to_string());
    push("tournament_size", cfg.tournament_size.to_string());
    push("elitism_count", cfg.elitism_count.to_string());
    push("log_points", cfg.log_points.to_string());
    push("codon_max", cfg.codon_max.to_string());
    push("initial_codons", cfg.initial_codons.to_string());
    push("seed", cfg.seed.to_string());
    push("replicate", result.replicate.to_string());
    push(
        "status",
        if result.no_valid_model() {
            "no_valid_model".to_string()
        } else {
            "ok".to_string()
        },
    );
    push(
        "best_fitness",
        match result.best_fitness.rmse() {
            Some(v) => v.to_string(),
            None => "worst".to_string(),
        },
    );
    if let Some(expr) = &result.best_expression {
        push("best_expression", expr.clone());
    }
    if let Some(expr) = &result.best_expression_simplified {
        push("best_expression_simplified", expr.clone());
    }
    push("best_individual", result.best_summary.clone());
    if let Some(m) = &result.train_metrics {
        push("train_rmse", m.rmse.to_string());
        push("train_r2", m.r2.to_string());
        push("train_avg_error", m.avg_error.to_string());
        push("train_n", m.n.to_string());
    }
    if let Some(m) = &result.test_metrics {
        push("test_rmse", m.rmse.to_string());
        push("test_r2", m.r2.to_string());
        push("test_avg_error", m.avg_error.to_string());
        push("test_n", m.n.to_string());
    }
    for (key, value) in extras {
        push(key, value.clone());
    }
    out
}

/// A result file read back as a key/value map with typed accessors.
#[derive(Clone, Debug)]
pub struct ParsedResult {
    map: BTreeMap<String, String>,
}

impl ParsedResult {
    pub fn parse(text: &str) -> Result<ParsedResult, ReportError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once(" = ") else {
                return Err(ReportError::Malformed {
                    detail: format!("line {} has no ` = ` separator: {:?}", i + 1, line),
                });
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let parsed = ParsedResult { map };
        parsed.require("format")?;
        parsed.require("config")?;
        Ok(parsed)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str, ReportError> {
        self.get(key).ok_or_else(|| ReportError::MissingKey {
            key: key.to_string(),
        })
    }

    fn number(&self, key: &str) -> Result<f64, ReportError> {
        let value = self.require(key)?;
        value.parse::<f64>().map_err(|_| ReportError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "a number",
        })
    }

    pub fn config_name(&self) -> &str {
        self.get("config").expect("validated at parse")
    }

    pub fn variant(&self) -> Result<&str, ReportError> {
        self.require("variant")
    }

    pub fn max_tree_depth(&self) -> Result<u64, ReportError> {
        Ok(self.number("max_tree_depth")? as u64)
    }

    pub fn is_ok_run(&self) -> bool {
        self.get("status") == Some("ok")
    }

    pub fn metric(&self, side: &str, name: &str) -> Result<f64, ReportError> {
        self.number(&format!("{side}_{name}"))
    }
}

/// One line of the summary table, shaped like the best-per-configuration
/// reporting: paired train/test rows per configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub rmse: f64,
    pub r2: f64,
    pub avg_error: f64,
    pub algorithm: String,
    pub max_tree_depth: u64,
    pub dataset: &'static str,
}

/// Selects, per configuration, the replicate with the lowest training RMSE
/// and emits its train and test rows, sorted by training RMSE. Runs that
/// produced no valid model are skipped.
pub fn summarize(results: &[ParsedResult]) -> Result<Vec<SummaryRow>, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut by_config: BTreeMap<&str, Vec<&ParsedResult>> = BTreeMap::new();
    for r in results {
        by_config.entry(r.config_name()).or_default().push(r);
    }

    let mut winners: Vec<(&str, &ParsedResult, f64)> = Vec::new();
    for (name, runs) in &by_config {
        let mut best: Option<(&ParsedResult, f64)> = None;
        for run in runs.iter().filter(|r| r.is_ok_run()) {
            let rmse = run.metric("train", "rmse")?;
            if best.is_none_or(|(_, current)| rmse < current) {
                best = Some((run, rmse));
            }
        }
        if let Some((run, rmse)) = best {
            winners.push((name, run, rmse));
        }
    }
    winners.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(b.0)));

    let mut rows = Vec::with_capacity(winners.len() * 2);
    for (name, run, _) in winners {
        for side in ["train", "test"] {
            rows.push(SummaryRow {
                config: name.to_string(),
                rmse: run.metric(side, "rmse")?,
                r2: run.metric(side, "r2")?,
                avg_error: run.metric(side, "avg_error")?,
                algorithm: run.variant()?.to_string(),
                max_tree_depth: run.max_tree_depth()?,
                dataset: if side == "train" { "train" } else { "test" },
            });
        }
    }
    Ok(rows)
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("config,rmse,r2,avg_error,algorithm,max_tree_depth,dataset\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.config, row.rmse, row.r2, row.avg_error, row.algorithm, row.max_tree_depth, row.dataset
        ));
    }
    out
}

pub fn summary_to_aligned(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>9} {:>8} {:>10} {:<9} {:>5} {:<7}\n",
        "Config", "RMSE", "R2", "Avg.Error", "Algorithm", "Depth", "Dataset"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<24} {:>9.4} {:>8.4} {:>10.4} {:<9} {:>5} {:<7}\n",
            row.config, row.rmse, row.r2, row.avg_error, row.algorithm, row.max_tree_depth, row.dataset
        ));
    }
    out
}

/// Run-log CSV: `generation,best_rmse,mean_rmse,std_rmse`.
pub fn run_log_to_csv(log: &RunLog) -> String {
    let mut out = String::from("generation,best_rmse,mean_rmse,std_rmse\n");
    for s in &log.snapshots {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.generation, s.best_rmse, s.mean_rmse, s.std_rmse
        ));
    }
    out
}

pub fn parse_run_log_csv(text: &str) -> Result<RunLog, ReportError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("generation,best_rmse,mean_rmse,std_rmse") => {}
        other => {
            return Err(ReportError::Malformed {
                detail: format!("unexpected run-log header {:?}", other),
            });
        }
    }
    let mut snapshots = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(ReportError::Malformed {
                detail: format!("run-log line {} has {} fields", i + 2, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, ReportError> {
            s.parse::<f64>().map_err(|_| ReportError::Malformed {
                detail: format!("bad number {:?} in run log", s),
            })
        };
        snapshots.push(Snapshot {
            generation: parse(fields[0])? as usize,
            best_rmse: parse(fields[1])?,
            mean_rmse: parse(fields[2])?,
            std_rmse: parse(fields[3])?,
        });
    }
    Ok(RunLog { snapshots })
}

/// One pooled convergence point across the replicates of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledPoint {
    pub config: String,
    pub generation: usize,
    pub mean_best_rmse: f64,
    pub std_best_rmse: f64,
    pub n_runs: usize,
}

/// Pools best-of-run trajectories replicate-wise: mean and population
/// standard deviation of `best_rmse` at every snapshot generation. All
/// replicates of a configuration must share one snapshot schedule.
pub fn pool_convergence(groups: &[(String, Vec<RunLog>)]) -> Result<Vec<PooledPoint>, ReportError> {
    if groups.iter().all(|(_, logs)| logs.is_empty()) {
        return Err(ReportError::Empty);
    }
    let mut out = Vec::new();
    for (config, logs) in groups {
        if logs.is_empty() {
            continue;
        }
        let schedule: Vec<usize> = logs[0].snapshots.iter().map(|s| s.generation).collect();
        for log in logs {
            let this: Vec<usize> = log.snapshots.iter().map(|s| s.generation).collect();
            if this != schedule {
                return Err(ReportError::InconsistentSchedule {
                    config: config.clone(),
                });
            }
        }
        for (i, &generation) in schedule.iter().enumerate() {
            let values: Vec<f64> = logs.iter().map(|log| log.snapshots[i].best_rmse).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var =
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
            out.push(PooledPoint {
                config: config.clone(),
                generation,
                mean_best_rmse: mean,
                std_best_rmse: var.sqrt(),
                n_runs: values.len(),
            });
        }
    }
    Ok(out)
}

pub fn convergence_to_csv(points: &[PooledPoint]) -> String {
    let mut out = String::from("config,generation,mean_best_rmse,std_best_rmse,n_runs\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.config, p.generation, p.mean_best_rmse, p.std_best_rmse, p.n_runs
        ));
    }
    out
}
