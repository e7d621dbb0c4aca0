use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Domain, FeatureSpec, Leaf, ModelError, ModelKind, SplitOp, Tree, TreeEnsembleModel};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub num_features: usize,
    pub num_trees: usize,
    pub max_depth: usize,
    pub thresholds_per_feature: usize,
    pub kind: ModelKind,
    pub num_classes: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_features: 4,
            num_trees: 3,
            max_depth: 2,
            thresholds_per_feature: 3,
            kind: ModelKind::RfMajority,
            num_classes: 2,
        }
    }
}

const SPLIT_PROBABILITY: f64 = 0.85;

/// Deterministic random ensemble. Features are a mix of real `[0,10]`,
/// integer `[0,8]` and boolean domains; each feature draws its split
/// thresholds from a fixed per-feature pool.
pub fn generate_random_model(seed: u64, config: GeneratorConfig) -> Result<TreeEnsembleModel, ModelError> {
    if config.num_features == 0 || config.num_trees == 0 || config.thresholds_per_feature == 0 {
        return Err(ModelError::Config(
            "num_features, num_trees and thresholds_per_feature must be at least 1".into(),
        ));
    }
    if config.num_classes < 2 {
        return Err(ModelError::Config("at least two classes required".into()));
    }
    if config.kind == ModelKind::BtBinary && config.num_classes != 2 {
        return Err(ModelError::Config("bt-binary models have two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = Vec::with_capacity(config.num_features);
    let mut pools = Vec::with_capacity(config.num_features);
    for id in 1..=config.num_features {
        let roll: f64 = rng.random();
        let (domain, pool) = if roll < 0.6 {
            // quarter steps strictly inside [0, 10]
            let mut steps: Vec<i64> = (1..40).collect();
            let chosen = pick_distinct(&mut rng, &mut steps, config.thresholds_per_feature);
            let pool = chosen.into_iter().map(|s| Rational::new(s as i128, 4).unwrap()).collect();
            (
                Domain::Real {
                    lo: Rational::ZERO,
                    hi: Rational::from_integer(10),
                },
                pool,
            )
        } else if roll < 0.8 {
            // integers and half-integers inside [0, 8]
            let mut halves: Vec<i64> = (1..16).collect();
            let chosen = pick_distinct(&mut rng, &mut halves, config.thresholds_per_feature);
            let pool = chosen.into_iter().map(|s| Rational::new(s as i128, 2).unwrap()).collect();
            (
                Domain::Int {
                    lo: Rational::ZERO,
                    hi: Rational::from_integer(8),
                },
                pool,
            )
        } else {
            (Domain::Bool, vec![Rational::new(1, 2).unwrap()])
        };
        features.push(FeatureSpec {
            id,
            name: format!("f{id}"),
            domain,
        });
        pools.push(pool);
    }

    let trees = (0..config.num_trees)
        .map(|_| grow(&mut rng, &config, &pools, 0))
        .collect();
    TreeEnsembleModel::new(config.kind, features, trees, config.num_classes, Rational::ZERO)
}

fn pick_distinct(rng: &mut ChaCha8Rng, candidates: &mut [i64], n: usize) -> Vec<i64> {
    let n = n.min(candidates.len());
    let mut out: Vec<i64> = candidates.choose_multiple(rng, n).copied().collect();
    out.sort_unstable();
    out
}

fn grow(rng: &mut ChaCha8Rng, config: &GeneratorConfig, pools: &[Vec<Rational>], depth: usize) -> Tree {
    let split = depth < config.max_depth && (depth == 0 || rng.random_bool(SPLIT_PROBABILITY));
    if !split {
        return Tree::leaf(random_leaf(rng, config));
    }
    let feature = rng.random_range(1..=pools.len());
    let threshold = *pools[feature - 1].choose(rng).expect("pools are nonempty");
    let op = if rng.random_bool(0.5) { SplitOp::Lt } else { SplitOp::Le };
    let left = grow(rng, config, pools, depth + 1);
    let right = grow(rng, config, pools, depth + 1);
    Tree::split(feature, op, threshold, left, right)
}

fn random_leaf(rng: &mut ChaCha8Rng, config: &GeneratorConfig) -> Leaf {
    match config.kind {
        ModelKind::RfMajority => Leaf::Class(rng.random_range(0..config.num_classes)),
        ModelKind::BtBinary => {
            let mut milli = rng.random_range(-1000i64..=1000);
            if milli == 0 {
                milli = 1;
            }
            Leaf::Score(Rational::new(milli as i128, 1000).unwrap())
        }
    }
}

/// A point inside the model's domains. About a third of the coordinates land
/// exactly on one of the feature's thresholds to exercise boundary handling.
pub fn random_point<R: Rng>(model: &TreeEnsembleModel, rng: &mut R) -> Vec<Rational> {
    model
        .features()
        .iter()
        .map(|spec| {
            let thresholds: Vec<Rational> = model
                .thresholds(spec.id)
                .into_iter()
                .filter(|t| spec.domain.contains(t))
                .collect();
            if !thresholds.is_empty() && rng.random_bool(0.3) {
                return *thresholds.choose(rng).unwrap();
            }
            match spec.domain {
                Domain::Bool => Rational::from_integer(rng.random_range(0..=1)),
                Domain::Int { lo, hi } => {
                    let lo = lo.ceil().numer();
                    let hi = hi.floor().numer();
                    Rational::from_integer(rng.random_range(lo..=hi))
                }
                Domain::Real { lo, hi } => {
                    // multiples of 1/8 across the interval, clipped
                    let steps = hi.checked_sub(&lo).unwrap().to_f64() * 8.0;
                    let k = rng.random_range(0..=steps.floor() as i64);
                    let v = lo + Rational::new(k as i128, 8).unwrap();
                    if v > hi {
                        hi
                    } else {
                        v
                    }
                }
            }
        })
        .collect()
}
