//! Properties of the enumeration oracle and of the CNF encoding, checked
//! against brute force on small random models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xpval::cnf::lit_value;
use xpval::encoding::build_encoding;
use xpval::model::{generate_random_model, random_point, Domain, FeatureSet, GeneratorConfig, Instance, ModelKind, TreeEnsembleModel};
use xpval::oracle::{Cell, CellOracle};
use xpval::rational::Rational;
use xpval::sat::{solve, SolveResult, SolverConfig};

fn small_model(rng: &mut ChaCha8Rng, kind: ModelKind) -> TreeEnsembleModel {
    let config = GeneratorConfig {
        num_features: rng.random_range(1..=4),
        num_trees: rng.random_range(1..=5),
        max_depth: rng.random_range(1..=3),
        thresholds_per_feature: rng.random_range(1..=3),
        kind,
        num_classes: 2,
    };
    generate_random_model(rng.random(), config).unwrap()
}

fn instance(model: &TreeEnsembleModel, rng: &mut ChaCha8Rng) -> Instance {
    Instance::predicted(model, random_point(model, rng)).unwrap()
}

/// A few points of `cell`: closed endpoints, the representative, interior
/// points; integers only for integer domains.
fn points_in(cell: &Cell, domain: Domain) -> Vec<Rational> {
    let (lo, hi) = (cell.lower.value, cell.upper.value);
    let mut out = vec![cell.representative];
    if cell.lower.closed {
        out.push(lo);
    }
    if cell.upper.closed {
        out.push(hi);
    }
    if lo < hi {
        for k in 1..7 {
            let frac = Rational::new(k, 7).unwrap();
            out.push(lo + (hi - lo) * frac);
        }
    }
    if matches!(domain, Domain::Int { .. }) {
        let mut ints: Vec<Rational> = Vec::new();
        let mut v = lo.ceil();
        while v <= hi {
            if cell.contains(&v) {
                ints.push(v);
            }
            v = v + Rational::ONE;
        }
        return ints;
    }
    out.retain(|v| cell.contains(v));
    out
}

#[test]
fn predictions_are_constant_on_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for round in 0..150 {
        let kind = if round % 3 == 0 { ModelKind::BtBinary } else { ModelKind::RfMajority };
        let model = small_model(&mut rng, kind);
        let oracle = CellOracle::new(&model).unwrap();
        for _ in 0..5 {
            let choice: Vec<&Cell> = oracle
                .cells()
                .iter()
                .map(|cells| &cells[rng.random_range(0..cells.len())])
                .collect();
            let reference: Vec<Rational> = choice.iter().map(|c| c.representative).collect();
            let expected = model.per_tree_outputs(&reference).unwrap();
            for _ in 0..3 {
                let point: Vec<Rational> = choice
                    .iter()
                    .zip(model.features())
                    .map(|(cell, spec)| {
                        let options = points_in(cell, spec.domain);
                        assert!(!options.is_empty(), "empty cell {cell}");
                        options[rng.random_range(0..options.len())]
                    })
                    .collect();
                assert_eq!(model.per_tree_outputs(&point).unwrap(), expected);
            }
        }
    }
}

#[test]
fn cells_partition_each_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let model = small_model(&mut rng, ModelKind::RfMajority);
        let oracle = CellOracle::new(&model).unwrap();
        for _ in 0..20 {
            let point = random_point(&model, &mut rng);
            for (cells, v) in oracle.cells().iter().zip(&point) {
                assert_eq!(cells.iter().filter(|c| c.contains(v)).count(), 1);
            }
        }
    }
}

#[test]
fn complement_law_and_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for round in 0..200 {
        let kind = if round % 4 == 0 { ModelKind::BtBinary } else { ModelKind::RfMajority };
        let model = small_model(&mut rng, kind);
        let inst = instance(&model, &mut rng);
        let oracle = CellOracle::new(&model).unwrap();
        let m = model.num_features();
        let small = FeatureSet::from_mask(rng.random_range(0..1u64 << m), m);
        let large: FeatureSet = small.iter().chain((1..=m).filter(|_| rng.random_bool(0.5))).collect();
        let waxp_small = oracle.is_waxp(&small, &inst).unwrap().holds;
        let waxp_large = oracle.is_waxp(&large, &inst).unwrap().holds;
        assert!(!waxp_small || waxp_large);
        let wcxp_small = oracle.is_wcxp(&small, &inst).unwrap().holds;
        let wcxp_large = oracle.is_wcxp(&large, &inst).unwrap().holds;
        assert!(!wcxp_small || wcxp_large);
        assert_eq!(waxp_small, !oracle.is_wcxp(&small.complement(m), &inst).unwrap().holds);
        assert!(oracle.is_waxp(&model.all_features(), &inst).unwrap().holds);
        assert!(!oracle.is_wcxp(&FeatureSet::empty(), &inst).unwrap().holds);
    }
}

#[test]
fn counterexamples_flip_and_respect_pins() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let model = small_model(&mut rng, ModelKind::BtBinary);
        let inst = instance(&model, &mut rng);
        let oracle = CellOracle::new(&model).unwrap();
        let m = model.num_features();
        let fixed = FeatureSet::from_mask(rng.random_range(0..1u64 << m), m);
        let answer = oracle.is_waxp(&fixed, &inst).unwrap();
        match answer.point {
            Some(p) => {
                assert!(!answer.holds);
                assert_ne!(model.predict(&p).unwrap(), inst.klass);
                assert!(fixed.iter().all(|i| p[i - 1] == inst.point[i - 1]));
            }
            None => {
                // sampled points agreeing on `fixed` never flip
                for _ in 0..30 {
                    let mut p = random_point(&model, &mut rng);
                    for i in fixed.iter() {
                        p[i - 1] = inst.point[i - 1];
                    }
                    assert_eq!(model.predict(&p).unwrap(), inst.klass);
                }
            }
        }
    }
}

/// Every cell combination of the encoding: satisfiable with those cells
/// pinned iff the combination is predicted as the other class.
#[test]
fn encoding_matches_model_on_every_cell_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut checked = 0;
    for _ in 0..60 {
        let model = small_model(&mut rng, ModelKind::RfMajority);
        for target in 0..2u32 {
            let enc = build_encoding(&model, target).unwrap();
            let sizes: Vec<usize> = enc.abstraction.features().iter().map(|f| f.cells.len()).collect();
            let total: usize = sizes.iter().product();
            if total > 400 {
                continue;
            }
            for mut code in 0..total {
                let mut units = Vec::new();
                let mut point = Vec::new();
                for (fc, &n) in enc.abstraction.features().iter().zip(&sizes) {
                    let k = code % n;
                    code /= n;
                    units.push(fc.vars[k].positive());
                    point.push(fc.cells[k].representative);
                }
                let flips = model.predict(&point).unwrap() != target;
                match solve(&enc.formula, &units, SolverConfig::default()).unwrap() {
                    SolveResult::Sat { assignment } => {
                        assert!(flips, "spurious model for {point:?}");
                        assert_eq!(enc.abstraction.decode(&assignment).unwrap(), point);
                        for (j, _) in model.trees().iter().enumerate() {
                            let var = enc.tree_vote_var(j);
                            let vote = match model.trees()[j].evaluate(&point) {
                                xpval::model::Leaf::Class(k) => k,
                                xpval::model::Leaf::Score(_) => unreachable!(),
                            };
                            assert_eq!(lit_value(&assignment, var.positive()), vote == 1);
                        }
                    }
                    SolveResult::Unsat { .. } => assert!(!flips, "missed flip at {point:?}"),
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} combinations checked");
}

#[test]
fn encoding_cells_agree_with_oracle_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..100 {
        let model = small_model(&mut rng, ModelKind::RfMajority);
        let enc = build_encoding(&model, 0).unwrap();
        let oracle = CellOracle::new(&model).unwrap();
        for (fc, cells) in enc.abstraction.features().iter().zip(oracle.cells()) {
            let ours: Vec<String> = fc.cells.iter().map(|c| c.to_string()).collect();
            let theirs: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
            // The oracle merges pieces that no split separates, so it may be coarser.
            assert!(ours.len() >= theirs.len(), "{ours:?} vs {theirs:?}");
            let reps: Vec<Rational> = fc.cells.iter().map(|c| c.representative).collect();
            for cell in cells {
                assert!(reps.iter().any(|r| cell.contains(r)), "oracle cell {cell} has no encoding cell");
            }
        }
    }
}
