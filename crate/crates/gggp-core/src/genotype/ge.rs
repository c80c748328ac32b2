//! Grammatical evolution: integer codon strings mapped to grammar choices
//! by modulo arithmetic, with wrapping on exhaustion.

use rand::Rng;

use crate::grammar::{Grammar, NtId};

use super::tree::{derive_from, ChoicePolicy, DerivationTree};

/// A GE genome: a non-empty list of codons, each below the configured
/// codon bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeGenotype {
    codons: Vec<u32>,
}

impl GeGenotype {
    /// Panics on an empty codon list; emptiness is never meaningful.
    pub fn new(codons: Vec<u32>) -> GeGenotype {
        assert!(!codons.is_empty(), "GE genotype must hold at least one codon");
        GeGenotype { codons }
    }

    pub fn codons(&self) -> &[u32] {
        &self.codons
    }

    pub fn len(&self) -> usize {
        self.codons.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A successful GE decode, with the consumption statistics the redundancy
/// properties are stated over.
#[derive(Clone, Debug)]
pub struct GeDecoded {
    pub tree: DerivationTree,
    /// Number of codon reads, wrapped reads included.
    pub codons_used: usize,
    pub wraps_used: u32,
}

struct GePolicy<'c> {
    codons: &'c [u32],
    pos: usize,
    max_wraps: u32,
    wraps_used: u32,
    used: usize,
}

impl GePolicy<'_> {
    fn next_codon(&mut self) -> Option<u32> {
        if self.pos == self.codons.len() {
            if self.wraps_used == self.max_wraps {
                return None;
            }
            self.wraps_used += 1;
            self.pos = 0;
        }
        let codon = self.codons[self.pos];
        self.pos += 1;
        self.used += 1;
        Some(codon)
    }
}

impl ChoicePolicy for GePolicy<'_> {
    fn choose(&mut self, g: &Grammar, nt: NtId, feasible: &[usize]) -> Option<usize> {
        let total = g.alternatives(nt).len();
        // single-alternative non-terminals consume nothing
        let alt = if total > 1 {
            (self.next_codon()? as usize) % total
        } else {
            0
        };
        // an alternative whose minimum completion cannot fit the remaining
        // depth makes the whole derivation exceed the limit
        feasible.contains(&alt).then_some(alt)
    }
}

/// Leftmost decode of a codon string. `None` is the Invalid outcome: the
/// codons ran out after `max_wraps` wraps, or the derivation cannot stay
/// within `max_depth`.
pub fn ge_decode(
    g: &Grammar,
    geno: &GeGenotype,
    max_wraps: u32,
    max_depth: usize,
) -> Option<GeDecoded> {
    if max_depth < g.min_depth(g.start()) {
        return None;
    }
    let mut policy = GePolicy {
        codons: &geno.codons,
        pos: 0,
        max_wraps,
        wraps_used: 0,
        used: 0,
    };
    let tree = derive_from(g, g.start(), max_depth, &mut policy)?;
    Some(GeDecoded {
        tree,
        codons_used: policy.used,
        wraps_used: policy.wraps_used,
    })
}

/// Uniform random codon string of the configured initial length.
pub fn ge_init(length: usize, codon_max: u32, rng: &mut impl Rng) -> GeGenotype {
    assert!(length > 0 && codon_max > 0);
    GeGenotype::new((0..length).map(|_| rng.random_range(0..codon_max)).collect())
}

/// One-point crossover with independent cut points; cut pairs that would
/// produce an empty offspring are re-drawn.
pub fn ge_crossover(a: &GeGenotype, b: &GeGenotype, rng: &mut impl Rng) -> (GeGenotype, GeGenotype) {
    loop {
        let cut_a = rng.random_range(0..=a.len());
        let cut_b = rng.random_range(0..=b.len());
        if cut_a + (b.len() - cut_b) == 0 || cut_b + (a.len() - cut_a) == 0 {
            continue;
        }
        return ge_crossover_at(a, b, cut_a, cut_b);
    }
}

pub(crate) fn ge_crossover_at(
    a: &GeGenotype,
    b: &GeGenotype,
    cut_a: usize,
    cut_b: usize,
) -> (GeGenotype, GeGenotype) {
    let mut first = a.codons[..cut_a].to_vec();
    first.extend_from_slice(&b.codons[cut_b..]);
    let mut second = b.codons[..cut_b].to_vec();
    second.extend_from_slice(&a.codons[cut_a..]);
    (GeGenotype::new(first), GeGenotype::new(second))
}

/// Re-randomizes each codon independently with probability `pm`.
pub fn ge_mutate(geno: &mut GeGenotype, pm: f64, codon_max: u32, rng: &mut impl Rng) {
    for codon in &mut geno.codons {
        if rng.random::<f64>() < pm {
            *codon = rng.random_range(0..codon_max);
        }
    }
}
