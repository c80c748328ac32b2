//! Grammar-guided genetic programming for symbolic regression.
//!
//! Three genotype representations evolve arithmetic expressions under a
//! BNF grammar:
//!
//! * **GE** — integer codon strings mapped to grammar choices by modulo
//!   arithmetic, wrapping when the codons run out;
//! * **CFG-GP** — derivation trees varied directly by grammar-respecting
//!   subtree operators;
//! * **DSGE** — one gene list per non-terminal, repaired and extended
//!   dynamically while decoding.
//!
//! Fitness is training RMSE of the decoded expression over a tabular
//! dataset; the engine is a generational GA with tournament selection and
//! elitism. Everything randomized flows from explicit seeds, and results
//! depend only on `(config, seed)` — never on the worker count, so the
//! default `parallel` feature (rayon) is purely a throughput knob.

pub mod data;
pub mod engine;
pub mod expr;
pub mod genotype;
pub mod grammar;
pub mod metrics;
pub mod report;

/// The grammar files shipped at the repository root, embedded for tests and
/// library callers that do not want to touch the filesystem.
pub mod grammars {
    pub const BASE: &str = include_str!("../../../grammars/base.bnf");
    pub const NODIV: &str = include_str!("../../../grammars/nodiv.bnf");
    pub const NOBIAS: &str = include_str!("../../../grammars/nobias.bnf");
}

pub use data::{Dataset, GenderFilter, SplitSpec};
pub use engine::{
    run, run_batch, run_with, BatchRun, EngineError, EvolutionConfig, ExecOptions, RunLog,
    RunResult, Variant,
};
pub use expr::{BinOp, Expr};
pub use genotype::{DerivationTree, Fitness, Genome, Individual};
pub use grammar::Grammar;
pub use metrics::MetricReport;
