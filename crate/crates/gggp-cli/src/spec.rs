//! The experiment spec format: a flat `key = value` text file with one
//! `[config NAME]` section per evolutionary configuration. `#` starts a
//! comment; keys mirror the engine and split parameter names; relative
//! paths resolve against the spec file's directory.

use std::path::{Path, PathBuf};

use gggp::data::GenderFilter;
use gggp::engine::{EvolutionConfig, Variant};

use crate::CliError;

/// `(line, key, value)` triples of one spec section.
type Entries = Vec<(usize, String, String)>;

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub target: String,
    pub features: Vec<String>,
    pub train_fraction: f64,
    pub seed: u64,
    pub replicates: u32,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub min_age: Option<f64>,
    pub pregnancy_column: Option<String>,
    pub gender: GenderFilter,
    pub configs: Vec<EvolutionConfig>,
}

impl ExperimentSpec {
    /// Parses spec text; `base_dir` anchors relative paths.
    pub fn parse(text: &str, base_dir: &Path) -> Result<ExperimentSpec, CliError> {
        let mut globals: Entries = Vec::new();
        let mut sections: Vec<(String, Entries)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            if let Some(header) = line.strip_prefix('[') {
                let header = header.strip_suffix(']').ok_or_else(|| {
                    CliError::spec(format!("line {lineno}: unterminated section header"))
                })?;
                let name = header
                    .strip_prefix("config")
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| {
                        CliError::spec(format!(
                            "line {lineno}: expected [config NAME], got [{header}]"
                        ))
                    })?;
                if sections.iter().any(|(n, _)| n == name) {
                    return Err(CliError::spec(format!(
                        "line {lineno}: duplicate config name {name:?}"
                    )));
                }
                sections.push((name.to_string(), Vec::new()));
            } else {
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::spec(format!("line {lineno}: expected `key = value`, got {line:?}"))
                })?;
                let entry = (lineno, key.trim().to_string(), value.trim().to_string());
                match sections.last_mut() {
                    Some((_, entries)) => entries.push(entry),
                    None => globals.push(entry),
                }
            }
        }

        let mut g = KeySet::new("global", globals);
        let dataset = base_dir.join(g.require("dataset")?);
        let target = g.require("target")?;
        let features: Vec<String> = g
            .require("features")?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if features.is_empty() {
            return Err(CliError::spec("global key `features` lists no columns"));
        }
        let train_fraction = g.parse_or("train_fraction", 0.8)?;
        let seed = g.parse_or("seed", 0u64)?;
        let replicates = g.parse_or("replicates", 1u32)?;
        let output_dir = base_dir.join(g.require("output_dir")?);
        let workers = g.parse_or("workers", 0usize)?;
        let min_age = g.parse_opt::<f64>("min_age")?;
        let pregnancy_column = g.take("pregnancy_column");
        let gender = match g.take("gender") {
            None => GenderFilter::All,
            Some(text) => GenderFilter::parse(&text).ok_or_else(|| {
                CliError::spec(format!("gender must be all, male or female, got {text:?}"))
            })?,
        };
        g.finish()?;

        if sections.is_empty() {
            return Err(CliError::spec("spec defines no [config NAME] sections"));
        }
        let mut configs = Vec::with_capacity(sections.len());
        for (name, entries) in sections {
            let mut k = KeySet::new(&name, entries);
            let variant_text = k.require("variant")?;
            let variant = Variant::parse(&variant_text).ok_or_else(|| {
                CliError::spec(format!(
                    "config {name}: variant must be GE, CFG-GP or DSGE, got {variant_text:?}"
                ))
            })?;
            let grammar = base_dir.join(k.require("grammar")?);
            let mut cfg = EvolutionConfig::new(name.clone(), variant, grammar);
            cfg.population_size = k.parse_or("population", cfg.population_size)?;
            cfg.generations = k.parse_or("generations", cfg.generations)?;
            cfg.p_crossover = k.parse_or("p_crossover", cfg.p_crossover)?;
            cfg.p_mutation = k.parse_or("p_mutation", cfg.p_mutation)?;
            cfg.max_tree_depth = k.parse_or("max_depth", cfg.max_tree_depth)?;
            cfg.max_wraps = k.parse_or("max_wraps", cfg.max_wraps)?;
            cfg.tournament_size = k.parse_or("tournament", cfg.tournament_size)?;
            cfg.elitism_count = k.parse_or("elitism", cfg.elitism_count)?;
            cfg.log_points = k.parse_or("log_points", cfg.log_points)?;
            cfg.codon_max = k.parse_or("codon_max", cfg.codon_max)?;
            cfg.initial_codons = k.parse_or("initial_codons", cfg.initial_codons)?;
            k.finish()?;
            cfg.validate()
                .map_err(|e| CliError::spec(format!("config {name}: {e}")))?;
            configs.push(cfg);
        }

        Ok(ExperimentSpec {
            dataset,
            target,
            features,
            train_fraction,
            seed,
            replicates,
            output_dir,
            workers,
            min_age,
            pregnancy_column,
            gender,
            configs,
        })
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::spec(format!("cannot read spec {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentSpec::parse(&text, base)
    }
}

/// Key/value pile with typo detection: every key must be consumed.
struct KeySet {
    scope: String,
    entries: Entries,
}

impl KeySet {
    fn new(scope: &str, entries: Entries) -> KeySet {
        KeySet {
            scope: scope.to_string(),
            entries,
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().position(|(_, k, _)| k == key)?;
        Some(self.entries.remove(pos).2)
    }

    fn require(&mut self, key: &str) -> Result<String, CliError> {
        self.take(key)
            .ok_or_else(|| CliError::spec(format!("{} section lacks required key `{key}`", self.scope)))
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(text) => text.parse::<T>().map_err(|_| {
                CliError::spec(format!(
                    "{}: key `{key}` holds unparsable value {text:?}",
                    self.scope
                ))
            }),
        }
    }

    fn parse_opt<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(text) if text.is_empty() => Ok(None),
            Some(text) => text.parse::<T>().map(Some).map_err(|_| {
                CliError::spec(format!(
                    "{}: key `{key}` holds unparsable value {text:?}",
                    self.scope
                ))
            }),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.entries.first() {
            None => Ok(()),
            Some((lineno, key, _)) => Err(CliError::spec(format!(
                "line {lineno}: unknown key `{key}` in {} section",
                self.scope
            ))),
        }
    }
}
