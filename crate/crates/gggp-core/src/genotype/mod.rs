//! The three genotype representations with their grammar-driven,
//! depth-bounded mappings and variation operators.

mod dsge;
mod ge;
mod individual;
mod tree;

pub use dsge::{
    dsge_crossover, dsge_decode, dsge_decode_traced, dsge_init, dsge_mutate, record_choices,
    DsgeGenotype, TraceStep,
};
pub use ge::{ge_crossover, ge_decode, ge_init, ge_mutate, GeDecoded, GeGenotype};
pub use individual::{Fitness, Genome, Individual};
pub use tree::{
    cfg_crossover, cfg_subtree_mutate, random_tree, DerivationTree, GenotypeError, InitMethod,
};

#[cfg(test)]
pub(crate) use tree::cfg_subtree_mutate_at;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grammar::Grammar;

/// Knobs shared by the variation operators.
#[derive(Clone, Copy, Debug)]
pub struct VariationParams {
    pub p_mutation: f64,
    pub codon_max: u32,
    pub max_depth: usize,
}

/// Variant-matched crossover. Mixed-variant pairs never occur in a run;
/// falling back to clones keeps the operator total anyway.
pub fn crossover(
    a: &Genome,
    b: &Genome,
    max_depth: usize,
    rng: &mut impl Rng,
) -> (Genome, Genome) {
    match (a, b) {
        (Genome::Ge(x), Genome::Ge(y)) => {
            let (c, d) = ge_crossover(x, y, rng);
            (Genome::Ge(c), Genome::Ge(d))
        }
        (Genome::Dsge(x), Genome::Dsge(y)) => {
            let (c, d) = dsge_crossover(x, y, rng);
            (Genome::Dsge(c), Genome::Dsge(d))
        }
        (Genome::Tree(x), Genome::Tree(y)) => {
            let (c, d) = cfg_crossover(x, y, max_depth, rng);
            (Genome::Tree(c), Genome::Tree(d))
        }
        _ => {
            debug_assert!(false, "crossover across variants");
            (a.clone(), b.clone())
        }
    }
}

/// Variant-specific mutation: per-codon for GE, per-gene-integer for DSGE,
/// one whole-subtree regrowth per individual for CFG-GP.
pub fn mutate(genome: &mut Genome, g: &Grammar, params: &VariationParams, rng: &mut impl Rng) {
    match genome {
        Genome::Ge(geno) => ge_mutate(geno, params.p_mutation, params.codon_max, rng),
        Genome::Dsge(geno) => dsge_mutate(geno, g, params.p_mutation, rng),
        Genome::Tree(tree) => {
            if rng.random::<f64>() < params.p_mutation {
                *tree = cfg_subtree_mutate(tree, g, params.max_depth, rng);
            }
        }
    }
}

/// Genotype-to-phenotype mapping for any variant. `Ok(None)` is the GE
/// Invalid outcome; DSGE repair randomness comes from `decode_seed` only,
/// so decoding is pure and safe to run concurrently.
pub fn decode(
    genome: &mut Genome,
    g: &Grammar,
    max_depth: usize,
    max_wraps: u32,
    decode_seed: u64,
) -> Result<Option<DerivationTree>, GenotypeError> {
    match genome {
        Genome::Ge(geno) => Ok(ge_decode(g, geno, max_wraps, max_depth).map(|d| d.tree)),
        Genome::Dsge(geno) => {
            let mut rng = ChaCha8Rng::seed_from_u64(decode_seed);
            dsge_decode(g, geno, max_depth, &mut rng).map(Some)
        }
        Genome::Tree(tree) => Ok(Some(tree.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammars;

    fn base() -> Grammar {
        Grammar::parse(grammars::BASE).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn grow_at_minimum_depth_forces_leaf_shape() {
        let g = base();
        for seed in 0..200u64 {
            let tree = random_tree(&g, 3, InitMethod::Grow, &mut rng(seed)).unwrap();
            assert_eq!(tree.depth(), 3);
            let tokens = tree.tokens(&g);
            assert_eq!(tokens.len(), 1, "expected a single leaf, got {:?}", tokens);
            assert!(["x0", "x1", "x2", "1.0", "0.1", "10"].contains(&tokens[0]));
        }
    }

    #[test]
    fn grow_and_full_coincide_without_slack() {
        let g = base();
        for seed in 0..100u64 {
            let grown = random_tree(&g, 3, InitMethod::Grow, &mut rng(seed)).unwrap();
            let full = random_tree(&g, 3, InitMethod::Full, &mut rng(seed)).unwrap();
            assert_eq!(grown, full);
        }
    }

    #[test]
    fn full_prefers_growth_when_possible() {
        let g = base();
        // at depth 4 the full method must open <expr><op><expr> at level 2
        for seed in 0..50u64 {
            let tree = random_tree(&g, 4, InitMethod::Full, &mut rng(seed)).unwrap();
            assert_eq!(tree.depth(), 4);
            assert!(tree.tokens(&g).len() >= 3);
        }
    }

    #[test]
    fn random_trees_validate_and_respect_depth() {
        let g = base();
        let mut r = rng(42);
        for _ in 0..2000 {
            let tree = random_tree(&g, 8, InitMethod::Grow, &mut r).unwrap();
            assert!(tree.depth() <= 8);
            assert!(tree.validate(&g));
            assert!(g.validate_phenotype(&tree.tokens(&g)));
        }
    }

    #[test]
    fn random_tree_rejects_small_depth() {
        let g = base();
        assert!(matches!(
            random_tree(&g, 2, InitMethod::Grow, &mut rng(0)),
            Err(GenotypeError::DepthTooSmall { .. })
        ));
    }

    #[test]
    fn cfg_crossover_swaps_same_nonterminal_subtrees() {
        let g = base();
        let mut r = rng(9);
        for _ in 0..500 {
            let a = random_tree(&g, 8, InitMethod::Grow, &mut r).unwrap();
            let b = random_tree(&g, 8, InitMethod::Grow, &mut r).unwrap();
            let (c, d) = cfg_crossover(&a, &b, 8, &mut r);
            for child in [&c, &d] {
                assert!(child.depth() <= 8);
                assert!(child.validate(&g));
                assert!(g.validate_phenotype(&child.tokens(&g)));
            }
        }
    }

    #[test]
    fn cfg_crossover_falls_back_to_clones_without_matching_nonterminal() {
        let text = "<s> ::= <x> | <y>\n<x> ::= a\n<y> ::= b\n";
        let g = Grammar::parse(text).unwrap();
        let a = DerivationTree::new(g.start(), 0, vec![DerivationTree::new(g.lookup("x").unwrap(), 0, vec![])]);
        let b = DerivationTree::new(g.start(), 1, vec![DerivationTree::new(g.lookup("y").unwrap(), 0, vec![])]);
        let mut clone_outcomes = 0;
        for seed in 0..40u64 {
            let (c, d) = cfg_crossover(&a, &b, 4, &mut rng(seed));
            // either the <x>/<y> pick found no partner (clones) or the
            // roots were swapped wholesale
            if c == a && d == b {
                clone_outcomes += 1;
            } else {
                assert_eq!((c, d), (b.clone(), a.clone()));
            }
        }
        assert!(clone_outcomes > 0);
    }

    #[test]
    fn cfg_mutation_at_const_node_changes_only_that_literal() {
        let g = base();
        // build (x0 + 1.0) explicitly: expr:0 -> expr op expr, x0, +, const
        let expr = g.lookup("expr").unwrap();
        let var = g.lookup("var").unwrap();
        let op = g.lookup("op").unwrap();
        let konst = g.lookup("const").unwrap();
        let tree = DerivationTree::new(
            g.start(),
            0,
            vec![DerivationTree::new(
                expr,
                0,
                vec![
                    DerivationTree::new(expr, 2, vec![DerivationTree::new(var, 0, vec![])]),
                    DerivationTree::new(op, 0, vec![]),
                    DerivationTree::new(expr, 3, vec![DerivationTree::new(konst, 0, vec![])]),
                ],
            )],
        );
        assert!(tree.validate(&g));
        assert_eq!(tree.phenotype_string(&g), "x0 + 1.0");
        // preorder: 0 start, 1 expr, 2 expr, 3 var, 4 op, 5 expr, 6 const
        let mutated = cfg_subtree_mutate_at(&tree, &g, 17, 6, &mut rng(3));
        let tokens = mutated.tokens(&g);
        assert_eq!(tokens[0], "x0");
        assert_eq!(tokens[1], "+");
        assert_eq!(tokens.len(), 3);
        assert!(["1.0", "0.1", "10"].contains(&tokens[2]));
    }

    #[test]
    fn mutate_with_zero_probability_is_identity_for_all_variants() {
        let g = base();
        let params = VariationParams {
            p_mutation: 0.0,
            codon_max: 256,
            max_depth: 8,
        };
        let mut r = rng(21);
        let mut ge = Genome::Ge(ge_init(16, 256, &mut r));
        let mut ds = Genome::Dsge(dsge_init(&g, 8, &mut r).unwrap());
        let mut tr = Genome::Tree(random_tree(&g, 8, InitMethod::Grow, &mut r).unwrap());
        for genome in [&mut ge, &mut ds, &mut tr] {
            let before = format!("{:?}", genome);
            mutate(genome, &g, &params, &mut r);
            assert_eq!(format!("{:?}", genome), before);
        }
    }

    #[test]
    fn decode_is_deterministic_given_seed() {
        let g = base();
        let mut r = rng(33);
        for _ in 0..100 {
            let seed: u64 = r.random();
            let mut a = Genome::Dsge(dsge_init(&g, 6, &mut r).unwrap());
            let mut b = a.clone();
            let ta = decode(&mut a, &g, 6, 3, seed).unwrap().unwrap();
            let tb = decode(&mut b, &g, 6, 3, seed).unwrap().unwrap();
            assert_eq!(ta, tb);

            let mut ge = Genome::Ge(ge_init(8, 256, &mut r));
            let mut ge2 = ge.clone();
            let da = decode(&mut ge, &g, 17, 3, seed).unwrap();
            let db = decode(&mut ge2, &g, 17, 3, seed).unwrap();
            assert_eq!(da, db);
        }
    }
}
