use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xpval::explain::{ExplainerConfig, ExplainerR};
use xpval::model::{generate_random_model, random_point, GeneratorConfig, Instance, ModelKind};
use xpval::oracle::CellOracle;
use xpval::par::{is_parallel_available, Execution};

fn waxp_enumeration(c: &mut Criterion) {
    let config = GeneratorConfig {
        num_features: 10,
        num_trees: 15,
        max_depth: 3,
        thresholds_per_feature: 2,
        kind: ModelKind::RfMajority,
        num_classes: 2,
    };
    let model = generate_random_model(11, config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = Instance::predicted(&model, random_point(&model, &mut rng)).unwrap();
    // a holding query forces a full scan of the free cells
    let (axp, _) = ExplainerR::new(&model, &inst, ExplainerConfig::default())
        .unwrap()
        .find_axp()
        .unwrap();

    let mut group = c.benchmark_group("oracle_waxp");
    group.sample_size(20);
    let mut modes = vec![("sequential", Execution::Sequential)];
    if is_parallel_available() {
        modes.push(("parallel", Execution::Parallel));
    }
    for (name, execution) in modes {
        let oracle = CellOracle::new(&model).unwrap().with_execution(execution);
        group.bench_with_input(BenchmarkId::new(name, axp.features.len()), &axp.features, |b, set| {
            b.iter(|| oracle.is_waxp(set, &inst).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, waxp_enumeration);
criterion_main!(benches);
