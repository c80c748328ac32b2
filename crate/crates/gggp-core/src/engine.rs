//! The generational evolutionary loop: initialization, fitness evaluation,
//! tournament selection, variation, elitism, convergence logging and
//! run-level results.
//!
//! Determinism contract: a result depends only on `(config, seed)`. The
//! coordinator owns the single random stream; fitness evaluations are pure
//! per individual (DSGE repair randomness is pinned by a per-individual
//! decode seed assigned at creation), so the `parallel` feature and the
//! worker count never change any output.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::expr::{Expr, ExprError};
use crate::genotype::{
    self, dsge_init, ge_init, random_tree, Fitness, Genome, GenotypeError, Individual, InitMethod,
    VariationParams,
};
use crate::grammar::{Grammar, GrammarError};
use crate::metrics::{self, MetricReport, MetricsError};

/// The non-terminal rewritten to one alternative per dataset feature.
pub const VARIABLE_NONTERMINAL: &str = "var";

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Variant {
    Ge,
    CfgGp,
    Dsge,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Ge => "GE",
            Variant::CfgGp => "CFG-GP",
            Variant::Dsge => "DSGE",
        }
    }

    pub fn parse(text: &str) -> Option<Variant> {
        match text.to_ascii_uppercase().as_str() {
            "GE" => Some(Variant::Ge),
            "CFG-GP" | "CFGGP" | "CFG" => Some(Variant::CfgGp),
            "DSGE" => Some(Variant::Dsge),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One evolutionary run's parameters.
#[derive(Clone, Debug)]
pub struct EvolutionConfig {
    pub name: String,
    pub variant: Variant,
    pub grammar_path: PathBuf,
    pub population_size: usize,
    pub generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub max_tree_depth: usize,
    /// GE only: wraps allowed when the codon string runs out.
    pub max_wraps: u32,
    pub tournament_size: usize,
    pub elitism_count: usize,
    pub seed: u64,
    /// Number of log intervals; snapshots land at generation 0 and every
    /// `ceil(generations / log_points)` generations.
    pub log_points: usize,
    /// GE only: exclusive codon bound.
    pub codon_max: u32,
    /// GE only: initial codon string length.
    pub initial_codons: usize,
}

impl EvolutionConfig {
    pub fn new(name: impl Into<String>, variant: Variant, grammar_path: impl Into<PathBuf>) -> Self {
        EvolutionConfig {
            name: name.into(),
            variant,
            grammar_path: grammar_path.into(),
            population_size: 1000,
            generations: 1000,
            p_crossover: 0.9,
            p_mutation: 0.05,
            max_tree_depth: 17,
            max_wraps: 3,
            tournament_size: 3,
            elitism_count: 1,
            seed: 0,
            log_points: 10,
            codon_max: 256,
            initial_codons: 64,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |detail: String| Err(EngineError::InvalidConfig { detail });
        if self.population_size < 2 {
            return fail(format!("population_size {} < 2", self.population_size));
        }
        if self.elitism_count >= self.population_size {
            return fail(format!(
                "elitism_count {} must be below population_size {}",
                self.elitism_count, self.population_size
            ));
        }
        if self.tournament_size < 1 {
            return fail("tournament_size must be at least 1".to_string());
        }
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{} {} is outside [0, 1]", name, p));
            }
        }
        if self.log_points < 1 {
            return fail("log_points must be at least 1".to_string());
        }
        if self.codon_max < 1 || self.initial_codons < 1 {
            return fail("codon_max and initial_codons must be at least 1".to_string());
        }
        Ok(())
    }

    /// Stable content hash over everything except the seed; the basis for
    /// replicate seed derivation, so it must not depend on process state.
    pub fn stable_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(self.name.as_bytes());
        h.write(self.variant.label().as_bytes());
        h.write(self.grammar_path.to_string_lossy().as_bytes());
        for v in [
            self.population_size as u64,
            self.generations as u64,
            self.p_crossover.to_bits(),
            self.p_mutation.to_bits(),
            self.max_tree_depth as u64,
            self.max_wraps as u64,
            self.tournament_size as u64,
            self.elitism_count as u64,
            self.log_points as u64,
            self.codon_max as u64,
            self.initial_codons as u64,
        ] {
            h.write(&v.to_le_bytes());
        }
        h.finish()
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
        // field separator so adjacent fields cannot alias
        self.0 ^= 0xff;
        self.0 = self.0.wrapping_mul(0x100000001b3);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// One convergence snapshot: best-of-run fitness plus the finite-fitness
/// population statistics (population standard deviation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub generation: usize,
    pub best_rmse: f64,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub snapshots: Vec<Snapshot>,
}

/// Everything one run produces. `wall_time` is informational and excluded
/// from the serialized result so identical `(config, seed)` runs stay
/// byte-identical.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: EvolutionConfig,
    pub replicate: u32,
    pub best_fitness: Fitness,
    pub best_summary: String,
    pub best_expression: Option<String>,
    pub best_expression_simplified: Option<String>,
    pub train_metrics: Option<MetricReport>,
    pub test_metrics: Option<MetricReport>,
    pub log: RunLog,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn no_valid_model(&self) -> bool {
        !self.best_fitness.is_finite()
    }
}

/// Execution knobs orthogonal to the result.
#[derive(Clone, Copy, Debug)]
pub struct ExecOptions {
    /// Evaluate individuals (and batch runs) on the rayon pool. Ignored
    /// when the `parallel` feature is off.
    pub parallel: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            parallel: cfg!(feature = "parallel"),
        }
    }
}

/// Loads the configured grammar, injects the training feature columns into
/// `<var>` (when present) and runs the evolutionary loop.
pub fn run(cfg: &EvolutionConfig, train: &Dataset, test: &Dataset) -> Result<RunResult, EngineError> {
    run_with(cfg, train, test, &ExecOptions::default())
}

pub fn run_with(
    cfg: &EvolutionConfig,
    train: &Dataset,
    test: &Dataset,
    opts: &ExecOptions,
) -> Result<RunResult, EngineError> {
    let grammar = load_run_grammar(cfg, train)?;
    run_with_grammar(cfg, &grammar, train, test, opts)
}

/// Grammar preparation shared by the engine and the fail-fast CLI checks.
pub fn load_run_grammar(cfg: &EvolutionConfig, train: &Dataset) -> Result<Grammar, EngineError> {
    let text = std::fs::read_to_string(&cfg.grammar_path).map_err(|source| EngineError::Io {
        path: cfg.grammar_path.display().to_string(),
        source,
    })?;
    let grammar = Grammar::parse(&text)?;
    if grammar.lookup(VARIABLE_NONTERMINAL).is_some() {
        Ok(grammar.inject_variables(VARIABLE_NONTERMINAL, train.feature_columns())?)
    } else {
        Ok(grammar)
    }
}

pub fn run_with_grammar(
    cfg: &EvolutionConfig,
    grammar: &Grammar,
    train: &Dataset,
    test: &Dataset,
    opts: &ExecOptions,
) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    if train.feature_columns() != test.feature_columns() || train.target_column() != test.target_column()
    {
        return Err(EngineError::InvalidConfig {
            detail: "train and test datasets disagree on schema".to_string(),
        });
    }
    let min = grammar.min_depth(grammar.start());
    if cfg.variant != Variant::Ge && cfg.max_tree_depth < min {
        return Err(GenotypeError::DepthTooSmall {
            max_depth: cfg.max_tree_depth,
            min,
        }
        .into());
    }

    let started = Instant::now();
    let (train_rows, train_target) = train.to_matrix()?;
    let ctx = EvalContext {
        grammar,
        columns: train.feature_columns(),
        rows: &train_rows,
        target: &train_target,
        max_depth: cfg.max_tree_depth,
        max_wraps: cfg.max_wraps,
    };

    let (best, log) = evolve(cfg, grammar, &ctx, opts)?;

    let (train_metrics, test_metrics, expression, simplified) = match &best.phenotype {
        None => (None, None, None, None),
        Some(expr) => {
            let train_pred = predict(expr, train)?;
            let train_metrics = MetricReport::compute(&train_pred, &train_target)?;
            // fitness-cache coherence: the stored fitness is the training RMSE
            debug_assert!(
                (train_metrics.rmse - best.fitness.rmse().unwrap()).abs()
                    <= 1e-12 * train_metrics.rmse.max(1.0)
            );
            let (_, test_target) = test.to_matrix()?;
            let test_pred = predict(expr, test)?;
            let test_metrics = MetricReport::compute(&test_pred, &test_target)?;
            (
                Some(train_metrics),
                Some(test_metrics),
                Some(expr.to_text()),
                Some(expr.simplify().to_text()),
            )
        }
    };

    Ok(RunResult {
        config: cfg.clone(),
        replicate: 0,
        best_fitness: best.fitness,
        best_summary: best.summary_line(grammar),
        best_expression: expression,
        best_expression_simplified: simplified,
        train_metrics,
        test_metrics,
        log,
        wall_time: started.elapsed(),
    })
}

fn predict(expr: &Expr, data: &Dataset) -> Result<Vec<f64>, EngineError> {
    let (rows, _) = data.to_matrix()?;
    let compiled = expr.compile(data.feature_columns())?;
    Ok(rows.iter().map(|row| compiled.eval(row)).collect())
}

struct EvalContext<'a> {
    grammar: &'a Grammar,
    columns: &'a [String],
    rows: &'a [Vec<f64>],
    target: &'a [f64],
    max_depth: usize,
    max_wraps: u32,
}

fn evaluate_individual(ind: &mut Individual, ctx: &EvalContext<'_>) -> Result<(), EngineError> {
    let tree = genotype::decode(
        &mut ind.genome,
        ctx.grammar,
        ctx.max_depth,
        ctx.max_wraps,
        ind.decode_seed,
    )?;
    match tree {
        None => {
            ind.phenotype = None;
            ind.fitness = Fitness::Worst;
            ind.nodes = usize::MAX;
        }
        Some(tree) => {
            let expr = Expr::from_derivation(&tree, ctx.grammar)?;
            let compiled = expr.compile(ctx.columns)?;
            let pred: Vec<f64> = ctx.rows.iter().map(|row| compiled.eval(row)).collect();
            let rmse = metrics::rmse(&pred, ctx.target)?;
            ind.nodes = expr.node_count();
            ind.phenotype = Some(expr);
            ind.fitness = Fitness::Rmse(rmse);
        }
    }
    Ok(())
}

fn evaluate_population(
    pop: &mut [Individual],
    ctx: &EvalContext<'_>,
    parallel: bool,
) -> Result<(), EngineError> {
    #[cfg(feature = "parallel")]
    if parallel {
        return pop
            .par_iter_mut()
            .map(|ind| evaluate_individual(ind, ctx))
            .collect::<Result<(), EngineError>>();
    }
    let _ = parallel;
    pop.iter_mut().try_for_each(|ind| evaluate_individual(ind, ctx))
}

fn tournament(pop: &[Individual], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut winner = rng.random_range(0..pop.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..pop.len());
        if pop[challenger].rank_key() < pop[winner].rank_key() {
            winner = challenger;
        }
    }
    winner
}

fn evolve(
    cfg: &EvolutionConfig,
    grammar: &Grammar,
    ctx: &EvalContext<'_>,
    opts: &ExecOptions,
) -> Result<(Individual, RunLog), EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut births = 0u64;
    let params = VariationParams {
        p_mutation: cfg.p_mutation,
        codon_max: cfg.codon_max,
        max_depth: cfg.max_tree_depth,
    };

    let spawn = |genome: Genome, rng: &mut ChaCha8Rng, births: &mut u64| {
        let ind = Individual::new(genome, rng.random(), *births);
        *births += 1;
        ind
    };

    let mut pop = Vec::with_capacity(cfg.population_size);
    for _ in 0..cfg.population_size {
        let genome = match cfg.variant {
            Variant::Ge => Genome::Ge(ge_init(cfg.initial_codons, cfg.codon_max, &mut rng)),
            Variant::Dsge => Genome::Dsge(dsge_init(grammar, cfg.max_tree_depth, &mut rng)?),
            Variant::CfgGp => Genome::Tree(random_tree(
                grammar,
                cfg.max_tree_depth,
                InitMethod::Grow,
                &mut rng,
            )?),
        };
        let ind = spawn(genome, &mut rng, &mut births);
        pop.push(ind);
    }
    evaluate_population(&mut pop, ctx, opts.parallel)?;

    let mut best = pop
        .iter()
        .min_by_key(|ind| ind.rank_key())
        .expect("population is non-empty")
        .clone();

    let interval = cfg.generations.div_ceil(cfg.log_points).max(1);
    let mut log = RunLog::default();
    log.snapshots.push(snapshot(0, &best, &pop));

    for generation in 1..=cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by_key(|&i| pop[i].rank_key());
        let mut next: Vec<Individual> = order[..cfg.elitism_count]
            .iter()
            .map(|&i| pop[i].clone())
            .collect();

        while next.len() < cfg.population_size {
            let first = tournament(&pop, cfg.tournament_size, &mut rng);
            let second = tournament(&pop, cfg.tournament_size, &mut rng);
            let (child_a, child_b) = if rng.random::<f64>() < cfg.p_crossover {
                genotype::crossover(
                    &pop[first].genome,
                    &pop[second].genome,
                    cfg.max_tree_depth,
                    &mut rng,
                )
            } else {
                (pop[first].genome.clone(), pop[second].genome.clone())
            };
            for mut genome in [child_a, child_b] {
                genotype::mutate(&mut genome, grammar, &params, &mut rng);
                let ind = spawn(genome, &mut rng, &mut births);
                if next.len() < cfg.population_size {
                    next.push(ind);
                }
            }
        }

        evaluate_population(&mut next[cfg.elitism_count..], ctx, opts.parallel)?;
        pop = next;
        debug_assert_eq!(pop.len(), cfg.population_size);

        let gen_best = pop
            .iter()
            .min_by_key(|ind| ind.rank_key())
            .expect("population is non-empty");
        if gen_best.rank_key() < best.rank_key() {
            best = gen_best.clone();
        }
        if generation % interval == 0 || generation == cfg.generations {
            log.snapshots.push(snapshot(generation, &best, &pop));
        }
    }

    Ok((best, log))
}

fn snapshot(generation: usize, best: &Individual, pop: &[Individual]) -> Snapshot {
    let finite: Vec<f64> = pop.iter().filter_map(|ind| ind.fitness.rmse()).collect();
    let (mean, std) = if finite.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / finite.len() as f64;
        (mean, var.sqrt())
    };
    Snapshot {
        generation,
        best_rmse: best.fitness.rmse().unwrap_or(f64::NAN),
        mean_rmse: mean,
        std_rmse: std,
    }
}

/// One entry of a batch: which config and replicate, the derived seed, and
/// the run outcome. Failed runs do not abort the batch.
#[derive(Debug)]
pub struct BatchRun {
    pub config_name: String,
    pub replicate: u32,
    pub seed: u64,
    pub result: Result<RunResult, EngineError>,
}

/// Seed for replicate `r` of `cfg`: the base seed folded with a stable
/// content hash, so replicates are pairwise distinct and reproducible.
pub fn replicate_seed(base_seed: u64, cfg: &EvolutionConfig, replicate: u32) -> u64 {
    let mut h = Fnv1a::new();
    h.write(&cfg.stable_hash().to_le_bytes());
    h.write(&replicate.to_le_bytes());
    base_seed ^ h.finish()
}

/// Runs `replicates` seeded repetitions of every config, in order, with
/// results ordered by `(config, replicate)`. Independent runs may execute
/// concurrently; outputs are identical to sequential execution.
pub fn run_batch(
    cfgs: &[EvolutionConfig],
    replicates: u32,
    base_seed: u64,
    train: &Dataset,
    test: &Dataset,
    opts: &ExecOptions,
) -> Vec<BatchRun> {
    let jobs: Vec<(usize, u32)> = (0..cfgs.len())
        .flat_map(|c| (0..replicates).map(move |r| (c, r)))
        .collect();
    let run_one = |&(c, r): &(usize, u32)| -> BatchRun {
        let mut cfg = cfgs[c].clone();
        cfg.seed = replicate_seed(base_seed, &cfgs[c], r);
        let result = run_with(&cfg, train, test, opts).map(|mut res| {
            res.replicate = r;
            res
        });
        BatchRun {
            config_name: cfg.name.clone(),
            replicate: r,
            seed: cfg.seed,
            result,
        }
    };

    #[cfg(feature = "parallel")]
    if opts.parallel {
        return jobs.par_iter().map(run_one).collect();
    }
    jobs.iter().map(run_one).collect()
}
