//! Acceptance suite. One test per criterion, each printing a PASS/SKIP
//! line (visible with `--nocapture`). Criteria 7 and 8 need the real
//! NHANES 2017-18 extract (see docs/nhanes-data.md) and skip cleanly
//! without it; criterion 8 is long-running and additionally `#[ignore]`d.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gggp::data::{Dataset, GenderFilter, SplitSpec};
use gggp::engine::{self, EvolutionConfig, ExecOptions, Variant};
use gggp::expr::parse_model_file;
use gggp::genotype::{
    cfg_crossover, cfg_subtree_mutate, dsge_crossover, dsge_decode, dsge_decode_traced, dsge_init,
    dsge_mutate, ge_crossover, ge_decode, ge_init, ge_mutate, random_tree, DsgeGenotype, Genome,
    InitMethod,
};
use gggp::grammar::Grammar;
use gggp::metrics;
use gggp::report::write_run_result;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn grammar_file(name: &str) -> PathBuf {
    root().join("grammars").join(name)
}

fn load_grammar(name: &str) -> Grammar {
    let text = std::fs::read_to_string(grammar_file(name)).unwrap();
    Grammar::parse(&text).unwrap()
}

fn nhanes_extract() -> Option<PathBuf> {
    let path = match std::env::var("GGGP_NHANES_CSV") {
        Ok(p) => PathBuf::from(p),
        Err(_) => root().join("data/nhanes_2017_2018.csv"),
    };
    path.exists().then_some(path)
}

const NHANES_FEATURES: [&str; 9] = [
    "RIAGENDR", "RIDAGEYR", "BMXWT", "BMXHT", "BMXLEG", "BMXARML", "BMXARMC", "BMXWAIST", "BMXHIP",
];

#[test]
fn criterion_1_golden_dsge_decode_with_trace() {
    let g = load_grammar("base.bnf");
    let mut geno = DsgeGenotype::from_named(
        &g,
        &[
            ("start", vec![0]),
            ("expr", vec![0, 2, 3]),
            ("op", vec![1]),
            ("var", vec![2]),
            ("const", vec![0]),
        ],
    )
    .unwrap();

    let started = Instant::now();
    let (tree, steps) = dsge_decode_traced(&g, &mut geno, 17, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let elapsed = started.elapsed();

    assert_eq!(tree.phenotype_string(&g), "x2 - 1.0");
    let rendered: Vec<String> = steps.iter().map(|s| s.render()).collect();
    let expected = [
        "<start> | {[0], [0, 2, 3], [1], [2], [0]}",
        "<expr> | {[], [0, 2, 3], [1], [2], [0]}",
        "<expr> <op> <expr> | {[], [2, 3], [1], [2], [0]}",
        "<var> <op> <expr> | {[], [3], [1], [2], [0]}",
        "x2 <op> <expr> | {[], [3], [1], [], [0]}",
        "x2 - <expr> | {[], [3], [], [], [0]}",
        "x2 - <const> | {[], [], [], [], [0]}",
        "x2 - 1.0 | {[], [], [], [], []}",
    ];
    assert_eq!(rendered, expected);
    assert!(
        elapsed.as_micros() < 1000,
        "decode took {elapsed:?}, expected under 1 ms"
    );
    println!("PASS criterion 1: golden DSGE decode reproduces the 8-step trace in {elapsed:?}");
}

#[test]
fn criterion_2_shipped_grammar_fidelity() {
    let started = Instant::now();

    let base = load_grammar("base.bnf");
    assert_eq!(
        base.nonterminals().collect::<Vec<_>>(),
        ["start", "expr", "op", "var", "const"]
    );
    let counts = |g: &Grammar| -> Vec<usize> {
        g.nt_ids().map(|nt| g.alternatives(nt).len()).collect()
    };
    assert_eq!(counts(&base), [1, 4, 4, 3, 3]);

    let nodiv = load_grammar("nodiv.bnf");
    assert_eq!(nodiv.alternatives(nodiv.lookup("op").unwrap()).len(), 3);

    let nobias = load_grammar("nobias.bnf");
    let expr = nobias.lookup("expr").unwrap();
    let alts = nobias.alternatives(expr);
    assert_eq!(alts.len(), 13);
    assert_eq!(
        alts.iter().map(|p| p.index()).collect::<Vec<_>>(),
        (0..13).collect::<Vec<_>>()
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1);
    println!("PASS criterion 2: shipped grammars match the published shapes ({elapsed:?})");
}

#[test]
fn criterion_3_validity_property_suite() {
    let per_combo = 10_000usize;
    let mut ge_report = Vec::new();
    for grammar_name in ["base.bnf", "nobias.bnf"] {
        let g = load_grammar(grammar_name);
        for depth in [4usize, 8, 17] {
            for variant in [Variant::CfgGp, Variant::Dsge, Variant::Ge] {
                let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97 + depth as u64);
                let mut produced = 0usize;
                let mut ge_invalid = 0usize;
                while produced < per_combo {
                    let offspring: Vec<Genome> = match variant {
                        Variant::CfgGp => {
                            let a = random_tree(&g, depth, InitMethod::Grow, &mut rng).unwrap();
                            let b = random_tree(&g, depth, InitMethod::Grow, &mut rng).unwrap();
                            let (mut c, mut d) = if rng.random::<f64>() < 0.9 {
                                cfg_crossover(&a, &b, depth, &mut rng)
                            } else {
                                (a, b)
                            };
                            if rng.random::<f64>() < 0.05 {
                                c = cfg_subtree_mutate(&c, &g, depth, &mut rng);
                            }
                            if rng.random::<f64>() < 0.05 {
                                d = cfg_subtree_mutate(&d, &g, depth, &mut rng);
                            }
                            vec![Genome::Tree(c), Genome::Tree(d)]
                        }
                        Variant::Dsge => {
                            let a = dsge_init(&g, depth, &mut rng).unwrap();
                            let b = dsge_init(&g, depth, &mut rng).unwrap();
                            let (mut c, mut d) = if rng.random::<f64>() < 0.9 {
                                dsge_crossover(&a, &b, &mut rng)
                            } else {
                                (a, b)
                            };
                            dsge_mutate(&mut c, &g, 0.05, &mut rng);
                            dsge_mutate(&mut d, &g, 0.05, &mut rng);
                            vec![Genome::Dsge(c), Genome::Dsge(d)]
                        }
                        Variant::Ge => {
                            let a = ge_init(64, 256, &mut rng);
                            let b = ge_init(64, 256, &mut rng);
                            let (mut c, mut d) = if rng.random::<f64>() < 0.9 {
                                ge_crossover(&a, &b, &mut rng)
                            } else {
                                (a, b)
                            };
                            ge_mutate(&mut c, 0.05, 256, &mut rng);
                            ge_mutate(&mut d, 0.05, 256, &mut rng);
                            vec![Genome::Ge(c), Genome::Ge(d)]
                        }
                    };
                    for genome in offspring {
                        if produced == per_combo {
                            break;
                        }
                        produced += 1;
                        match genome {
                            Genome::Tree(tree) => {
                                assert!(tree.depth() <= depth);
                                assert!(g.validate_phenotype(&tree.tokens(&g)));
                            }
                            Genome::Dsge(mut geno) => {
                                let tree = dsge_decode(&g, &mut geno, depth, &mut rng).unwrap();
                                assert!(tree.depth() <= depth);
                                assert!(g.validate_phenotype(&tree.tokens(&g)));
                            }
                            Genome::Ge(geno) => match ge_decode(&g, &geno, 3, depth) {
                                None => ge_invalid += 1,
                                Some(decoded) => {
                                    assert!(decoded.tree.depth() <= depth);
                                    assert!(g.validate_phenotype(&decoded.tree.tokens(&g)));
                                }
                            },
                        }
                    }
                }
                if variant == Variant::Ge {
                    ge_report.push(format!(
                        "  GE invalid rate {} depth {:>2}: {:.2}%",
                        grammar_name,
                        depth,
                        100.0 * ge_invalid as f64 / per_combo as f64
                    ));
                }
            }
        }
    }
    println!("PASS criterion 3: 10,000 individuals per variant/grammar/depth all valid");
    for line in ge_report {
        println!("{line}");
    }
}

#[test]
fn criterion_4_metric_oracles() {
    assert!((metrics::rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 0.0).abs() <= 1e-12);
    assert!((metrics::rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() <= 1e-12);
    assert!((metrics::r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() <= 1e-12);
    assert!((metrics::r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap() - 0.0).abs() <= 1e-12);
    assert!((metrics::mean_abs_error(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5).abs() <= 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let n = rng.random_range(1..50);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let mae = metrics::mean_abs_error(&pred, &target).unwrap();
        let rmse = metrics::rmse(&pred, &target).unwrap();
        assert!(mae <= rmse * (1.0 + 1e-12));
    }
    println!("PASS criterion 4: metric oracles match hand values; MAE <= RMSE on 10^4 vectors");
}

fn uniform_product_dataset() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut cells = Vec::new();
    for _ in 0..200 {
        let (x0, x1, x2) = (
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        );
        cells.push(vec![Some(x0), Some(x1), Some(x2), Some(x0 * x1 + x2)]);
    }
    Dataset::new(
        ["x0", "x1", "x2", "y"].map(String::from).to_vec(),
        cells,
        "y",
        ["x0", "x1", "x2"].map(String::from).to_vec(),
    )
    .unwrap()
}

#[test]
fn criterion_5_synthetic_recovery() {
    let data = uniform_product_dataset();
    let (train, test) = data
        .split(&SplitSpec {
            train_fraction: 0.8,
            seed: 2024,
            gender_filter: GenderFilter::All,
        })
        .unwrap();

    let mut cfg = EvolutionConfig::new("recovery", Variant::Dsge, grammar_file("nobias.bnf"));
    cfg.population_size = 500;
    cfg.generations = 300;
    cfg.max_tree_depth = 10;

    let mut best: Vec<f64> = (0..10u64)
        .map(|seed| {
            let mut cfg = cfg.clone();
            cfg.seed = seed;
            engine::run(&cfg, &train, &test)
                .unwrap()
                .best_fitness
                .rmse()
                .unwrap()
        })
        .collect();
    best.sort_by(f64::total_cmp);
    let median = (best[4] + best[5]) / 2.0;
    assert!(
        median < 0.05,
        "median best training RMSE {median} >= 0.05 (all: {best:?})"
    );
    println!("PASS criterion 5: DSGE recovers x0*x1 + x2, median best train RMSE {median:.2e}");
}

#[test]
fn criterion_6_monotone_logs_and_worker_independent_bytes() {
    let data = uniform_product_dataset();
    let (train, test) = data
        .split(&SplitSpec {
            train_fraction: 0.8,
            seed: 7,
            gender_filter: GenderFilter::All,
        })
        .unwrap();

    for variant in [Variant::Ge, Variant::CfgGp, Variant::Dsge] {
        let mut cfg = EvolutionConfig::new("determinism", variant, grammar_file("base.bnf"));
        cfg.population_size = 60;
        cfg.generations = 30;
        cfg.max_tree_depth = 8;
        cfg.seed = 91;

        let reference = engine::run_with(&cfg, &train, &test, &ExecOptions { parallel: false }).unwrap();
        let reference_text = write_run_result(&reference, &[]);

        let best: Vec<f64> = reference.log.snapshots.iter().map(|s| s.best_rmse).collect();
        for pair in best.windows(2) {
            assert!(pair[1] <= pair[0] || pair[0].is_nan());
        }

        // identical (config, seed) reruns are byte-identical
        let again = engine::run_with(&cfg, &train, &test, &ExecOptions { parallel: false }).unwrap();
        assert_eq!(write_run_result(&again, &[]), reference_text);

        // and the worker count never leaks into the bytes
        #[cfg(feature = "parallel")]
        for workers in [1usize, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let result = pool.install(|| {
                engine::run_with(&cfg, &train, &test, &ExecOptions { parallel: true }).unwrap()
            });
            assert_eq!(
                write_run_result(&result, &[]),
                reference_text,
                "outputs changed under {workers} workers"
            );
        }
    }
    println!("PASS criterion 6: logs are monotone; result bytes are worker-count independent");
}

#[test]
fn criterion_7_paper_formula_on_real_extract() {
    let Some(path) = nhanes_extract() else {
        println!("SKIP criterion 7: NHANES extract not present (see docs/nhanes-data.md)");
        return;
    };
    let features: Vec<String> = NHANES_FEATURES.map(String::from).to_vec();
    let data = Dataset::load_csv(&path, "DXDTOPF", &features, &["RIDEXPRG".to_string()])
        .or_else(|_| Dataset::load_csv(&path, "DXDTOPF", &features, &[]))
        .unwrap();
    let has_pregnancy = data.column_index("RIDEXPRG").is_some();
    let filtered = data
        .nhanes_filter(Some(18.0), has_pregnancy.then_some("RIDEXPRG"))
        .unwrap();

    assert_eq!(filtered.n_rows(), 2403, "filtered row count");
    let gender = filtered.column_index("RIAGENDR").unwrap();
    let males = (0..filtered.n_rows())
        .filter(|&r| filtered.value(r, gender) == Some(1.0))
        .count();
    assert_eq!(males, 1158, "male count");
    assert_eq!(filtered.n_rows() - males, 1245, "female count");

    let model = parse_model_file(
        &std::fs::read_to_string(root().join("models/paper_dsge_depth12.expr")).unwrap(),
    )
    .unwrap();
    let (_, test) = filtered
        .split(&SplitSpec {
            train_fraction: 0.8,
            seed: 42,
            gender_filter: GenderFilter::All,
        })
        .unwrap();
    let (rows, target) = test.to_matrix().unwrap();
    let compiled = model.compile(test.feature_columns()).unwrap();
    let pred: Vec<f64> = rows.iter().map(|r| compiled.eval(r)).collect();
    let r2 = metrics::r2(&pred, &target).unwrap();
    let rmse = metrics::rmse(&pred, &target).unwrap();
    assert!(
        (r2 - 0.8373).abs() <= 0.03,
        "test R² {r2} outside 0.8373 ± 0.03"
    );
    assert!(
        (rmse - 3.42).abs() <= 0.15,
        "test RMSE {rmse} outside 3.42 ± 0.15"
    );
    println!("PASS criterion 7: filter 2403/1158/1245; bundled model test R² {r2:.4}, RMSE {rmse:.4}");
}

/// Long-running, informational: a reduced-scale reproduction of the
/// best-model experiment on the real extract. Run with
/// `cargo test -p gggp --test acceptance -- --ignored --nocapture`.
#[test]
#[ignore]
fn criterion_8_scaled_experiment_reproduction() {
    let Some(path) = nhanes_extract() else {
        println!("SKIP criterion 8: NHANES extract not present (see docs/nhanes-data.md)");
        return;
    };
    let features: Vec<String> = NHANES_FEATURES.map(String::from).to_vec();
    let data = Dataset::load_csv(&path, "DXDTOPF", &features, &["RIDEXPRG".to_string()])
        .or_else(|_| Dataset::load_csv(&path, "DXDTOPF", &features, &[]))
        .unwrap();
    let has_pregnancy = data.column_index("RIDEXPRG").is_some();
    let filtered = data
        .nhanes_filter(Some(18.0), has_pregnancy.then_some("RIDEXPRG"))
        .unwrap();
    let (train, test) = filtered
        .split(&SplitSpec {
            train_fraction: 0.8,
            seed: 42,
            gender_filter: GenderFilter::All,
        })
        .unwrap();

    let mut cfg = EvolutionConfig::new("scaled_dsge_d12", Variant::Dsge, grammar_file("nobias.bnf"));
    cfg.population_size = 512;
    cfg.generations = 1000;
    cfg.p_crossover = 0.75;
    cfg.p_mutation = 0.05;
    cfg.max_tree_depth = 12;

    let batch = engine::run_batch(&[cfg], 10, 42, &train, &test, &ExecOptions::default());
    let best = batch
        .iter()
        .filter_map(|b| b.result.as_ref().ok())
        .filter_map(|r| r.best_fitness.rmse())
        .fold(f64::INFINITY, f64::min);
    let verdict = if best <= 3.7 { "PASS" } else { "INFO" };
    println!("{verdict} criterion 8: best training RMSE over 10 runs = {best:.4} (target <= 3.7, informational)");
}
