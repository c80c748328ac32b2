//! End-to-end checks of the `gggp` binary: spec runs and their output
//! files, idempotent re-runs, model evaluation, summaries, convergence
//! export and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gggp::engine::{EvolutionConfig, RunLog, RunResult, Snapshot, Variant};
use gggp::genotype::Fitness;
use gggp::metrics::MetricReport;
use gggp::report::write_run_result;
use gggp_cli::spec::ExperimentSpec;

fn gggp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gggp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// A self-contained experiment directory: dataset, grammar and spec.
fn write_experiment(dir: &Path, replicates: u32, configs: &[(&str, &str)]) -> PathBuf {
    let mut csv = String::from("x0,x1,x2,y\n");
    let mut state = 1234567891011u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..60 {
        let (a, b, c) = (next(), next(), next());
        csv.push_str(&format!("{a},{b},{c},{}\n", a + b * c));
    }
    fs::write(dir.join("data.csv"), csv).unwrap();
    fs::copy(
        repo_root().join("grammars/base.bnf"),
        dir.join("base.bnf"),
    )
    .unwrap();

    let mut spec = format!(
        "dataset = data.csv\ntarget = y\nfeatures = x0, x1, x2\nseed = 9\n\
         replicates = {replicates}\noutput_dir = out\nworkers = 2\n\n"
    );
    for (name, variant) in configs {
        spec.push_str(&format!(
            "[config {name}]\nvariant = {variant}\ngrammar = base.bnf\n\
             population = 30\ngenerations = 6\nmax_depth = 6\n\n"
        ));
    }
    let path = dir.join("exp.spec");
    fs::write(&path, spec).unwrap();
    path
}

fn sorted_files(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    files.sort();
    files
}

#[test]
fn run_writes_expected_files_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_experiment(tmp.path(), 2, &[("alpha", "DSGE"), ("beta", "GE")]);

    let out = gggp(&["run", spec.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    // one line per run
    assert_eq!(text.lines().filter(|l| l.contains("seed")).count(), 4);

    let results = sorted_files(&tmp.path().join("out"), ".result");
    let logs = sorted_files(&tmp.path().join("out"), ".log.csv");
    assert_eq!(results.len(), 4);
    assert_eq!(logs.len(), 4);
    assert!(results[0].to_string_lossy().ends_with("alpha_r00.result"));

    let before: Vec<String> = results
        .iter()
        .chain(&logs)
        .map(|p| fs::read_to_string(p).unwrap())
        .collect();
    let rerun = gggp(&["run", spec.to_str().unwrap()]);
    assert!(rerun.status.success());
    let after: Vec<String> = results
        .iter()
        .chain(&logs)
        .map(|p| fs::read_to_string(p).unwrap())
        .collect();
    assert_eq!(before, after, "re-running a spec must be byte-identical");

    // result files carry the dataset context
    let body = fs::read_to_string(&results[0]).unwrap();
    assert!(body.contains("format = gggp-result-v1"));
    assert!(body.contains("dataset = "));
    assert!(body.contains("split_seed = 9"));
}

#[test]
fn run_with_missing_grammar_fails_fast_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = write_experiment(tmp.path(), 1, &[("alpha", "DSGE")]);
    let text = fs::read_to_string(&spec_path)
        .unwrap()
        .replace("grammar = base.bnf", "grammar = missing.bnf");
    fs::write(&spec_path, text).unwrap();

    let out = gggp(&["run", spec_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("missing.bnf"));
    assert!(!tmp.path().join("out").exists(), "no output files on spec errors");
}

#[test]
fn run_rejects_unknown_dataset_column() {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = write_experiment(tmp.path(), 1, &[("alpha", "DSGE")]);
    let text = fs::read_to_string(&spec_path)
        .unwrap()
        .replace("features = x0, x1, x2", "features = x0, x9");
    fs::write(&spec_path, text).unwrap();
    let out = gggp(&["run", spec_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("x9"));
}

#[test]
fn evaluate_perfect_model_reports_zero_rmse() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("x0,x1,y\n");
    for i in 0..20 {
        let v = i as f64 * 0.5;
        csv.push_str(&format!("{v},{},{v}\n", v * 2.0));
    }
    let data = tmp.path().join("d.csv");
    fs::write(&data, csv).unwrap();
    let model = tmp.path().join("m.expr");
    fs::write(&model, "# identity model\nx0\n").unwrap();

    let out = gggp(&[
        "evaluate",
        model.to_str().unwrap(),
        data.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rmse = 0.000000"), "{text}");
    assert!(text.contains("r2 = 1.000000"), "{text}");
    assert!(text.contains("n = 20"), "{text}");

    // split mode reports both sides
    let out = gggp(&[
        "evaluate",
        model.to_str().unwrap(),
        data.to_str().unwrap(),
        "--target",
        "y",
        "--split",
        "0.8",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("train"));
    assert!(text.contains("test"));
}

#[test]
fn evaluate_names_missing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.csv");
    fs::write(&data, "x0,y\n1,2\n3,4\n").unwrap();
    let model = tmp.path().join("m.expr");
    fs::write(&model, "(x0 + BMXTHIGH)\n").unwrap();
    let out = gggp(&[
        "evaluate",
        model.to_str().unwrap(),
        data.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("BMXTHIGH"));
}

fn fabricated_result(name: &str, replicate: u32, train_rmse: f64) -> String {
    let mut cfg = EvolutionConfig::new(name, Variant::Dsge, "g.bnf");
    cfg.max_tree_depth = 10;
    cfg.seed = 1;
    let result = RunResult {
        config: cfg,
        replicate,
        best_fitness: Fitness::Rmse(train_rmse),
        best_summary: "DSGE | start:[0] | x0 | f".to_string(),
        best_expression: Some("x0".to_string()),
        best_expression_simplified: Some("x0".to_string()),
        train_metrics: Some(MetricReport {
            rmse: train_rmse,
            r2: 0.9,
            avg_error: train_rmse * 0.8,
            n: 100,
        }),
        test_metrics: Some(MetricReport {
            rmse: train_rmse + 0.05,
            r2: 0.85,
            avg_error: train_rmse,
            n: 25,
        }),
        log: RunLog {
            snapshots: vec![
                Snapshot {
                    generation: 0,
                    best_rmse: train_rmse + 2.0,
                    mean_rmse: 5.0,
                    std_rmse: 1.0,
                },
                Snapshot {
                    generation: 10,
                    best_rmse: train_rmse,
                    mean_rmse: 3.0,
                    std_rmse: 0.6,
                },
            ],
        },
        wall_time: std::time::Duration::ZERO,
    };
    write_run_result(&result, &[])
}

#[test]
fn summarize_selects_known_minima_in_sorted_order() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // slow: replicates 0.9 / 0.7; fast: replicates 0.45 / 0.52
    for (name, rep, rmse) in [
        ("slow", 0u32, 0.9),
        ("slow", 1, 0.7),
        ("fast", 0, 0.45),
        ("fast", 1, 0.52),
    ] {
        fs::write(
            dir.join(format!("{name}_r{rep:02}.result")),
            fabricated_result(name, rep, rmse),
        )
        .unwrap();
    }
    let out = gggp(&["summarize", dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5, "{text}");
    assert!(lines[1].starts_with("fast"), "{text}");
    assert!(lines[1].contains("train"));
    assert!(lines[2].contains("test"));
    assert!(lines[3].starts_with("slow"));

    let csv = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "config,rmse,r2,avg_error,algorithm,max_tree_depth,dataset");
    assert!(rows[1].starts_with("fast,0.45,"));
    assert!(rows[3].starts_with("slow,0.7,"));
    // never below the minimum present in the files
    assert!(!csv.contains("0.44"));
}

#[test]
fn summarize_empty_directory_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gggp(&["summarize", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convergence_pools_replicates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let log = |best: [f64; 3]| {
        format!(
            "generation,best_rmse,mean_rmse,std_rmse\n0,{},9,1\n5,{},8,1\n10,{},7,1\n",
            best[0], best[1], best[2]
        )
    };
    fs::write(dir.join("cfg_r00.log.csv"), log([6.0, 5.0, 4.0])).unwrap();
    fs::write(dir.join("cfg_r01.log.csv"), log([8.0, 6.0, 5.0])).unwrap();
    fs::write(dir.join("cfg_r02.log.csv"), log([7.0, 5.5, 4.5])).unwrap();
    fs::write(dir.join("solo_r00.log.csv"), log([3.0, 2.0, 1.0])).unwrap();

    let out = gggp(&["convergence", dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "config,generation,mean_best_rmse,std_best_rmse,n_runs");
    assert_eq!(lines.len(), 7, "{text}");
    // generation-0 pooled mean of cfg = (6 + 8 + 7) / 3
    assert_eq!(lines[1], "cfg,0,7,0.816496580927726,3");
    // single replicate pools to std 0
    assert!(lines[4].starts_with("solo,0,3,0,1"));
    assert!(dir.join("convergence.csv").exists());
}

#[test]
fn convergence_rejects_inconsistent_schedules() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("cfg_r00.log.csv"),
        "generation,best_rmse,mean_rmse,std_rmse\n0,5,5,1\n10,4,4,1\n",
    )
    .unwrap();
    fs::write(
        dir.join("cfg_r01.log.csv"),
        "generation,best_rmse,mean_rmse,std_rmse\n0,5,5,1\n7,4,4,1\n",
    )
    .unwrap();
    let out = gggp(&["convergence", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("schedule"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let out = gggp(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = gggp(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("run"));
}

#[test]
fn shipped_pilot_spec_defines_twelve_single_replicate_configs() {
    let spec = ExperimentSpec::load(&repo_root().join("specs/pilot.spec")).unwrap();
    assert_eq!(spec.configs.len(), 12);
    assert_eq!(spec.replicates, 1);
    assert!(spec.dataset.exists(), "fixture dataset path resolves");
    for cfg in &spec.configs {
        assert!(cfg.grammar_path.exists(), "grammar path resolves");
    }
    // 3 variants x 2 grammars x 2 depths
    let ge = spec.configs.iter().filter(|c| c.variant == Variant::Ge).count();
    assert_eq!(ge, 4);
}

#[test]
fn shipped_exploit_spec_parses() {
    let spec = ExperimentSpec::load(&repo_root().join("specs/exploit.spec")).unwrap();
    assert_eq!(spec.configs.len(), 8);
    assert_eq!(spec.replicates, 30);
    assert_eq!(spec.min_age, Some(18.0));
    assert_eq!(spec.pregnancy_column.as_deref(), Some("RIDEXPRG"));
}

/// The pilot layout at miniature scale: 12 configurations, one replicate,
/// so `run` must leave exactly 12 result files.
#[test]
fn pilot_shaped_run_yields_twelve_result_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::copy(repo_root().join("data/synthetic_nhanes.csv"), dir.join("synthetic.csv")).unwrap();
    fs::copy(repo_root().join("grammars/base.bnf"), dir.join("base.bnf")).unwrap();
    fs::copy(repo_root().join("grammars/nodiv.bnf"), dir.join("nodiv.bnf")).unwrap();

    let mut spec = String::from(
        "dataset = synthetic.csv\ntarget = DXDTOPF\n\
         features = RIAGENDR, RIDAGEYR, BMXWT, BMXHT, BMXLEG, BMXARML, BMXARMC, BMXWAIST, BMXHIP\n\
         seed = 42\nreplicates = 1\noutput_dir = out\n\n",
    );
    for variant in ["GE", "CFG-GP", "DSGE"] {
        for grammar in ["base", "nodiv"] {
            for depth in [4, 17] {
                spec.push_str(&format!(
                    "[config {}_{}_d{}]\nvariant = {variant}\ngrammar = {grammar}.bnf\n\
                     population = 20\ngenerations = 4\nmax_depth = {depth}\n\n",
                    variant.to_lowercase().replace('-', ""),
                    grammar,
                    depth
                ));
            }
        }
    }
    let spec_path = dir.join("pilot_mini.spec");
    fs::write(&spec_path, spec).unwrap();

    let out = gggp(&["run", spec_path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(sorted_files(&dir.join("out"), ".result").len(), 12);
    assert_eq!(sorted_files(&dir.join("out"), ".log.csv").len(), 12);

    // the batch output feeds straight into summarize and convergence
    let out = gggp(&["summarize", dir.join("out").to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 1 + 24);
    let out = gggp(&["convergence", dir.join("out").to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
}
