use cge_bench::selection_objective;
use cge_core::solvers;
use cge_core::SolverSpec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const SOLVERS: [&str; 8] = ["sgre", "sgre-lc", "dgre", "dgre-order", "dgre-order-lc", "dusm", "dusm-order", "dusm-order-lc"];

fn selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("selection");
    group.sample_size(10);
    for side in [60.0, 80.0] {
        let objective = selection_objective(side, 0.3, 1).expect("fixture instance");
        for label in SOLVERS {
            let spec: SolverSpec = label.parse().unwrap();
            group.bench_with_input(BenchmarkId::new(label, side), &objective, |b, obj| {
                b.iter(|| solvers::run(spec, obj, 0).unwrap())
            });
        }
    }
    group.finish();
}

fn marginal_gains(c: &mut Criterion) {
    let objective = selection_objective(80.0, 0.3, 1).expect("fixture instance");
    let state = objective.empty_state();
    c.bench_function("empty_set_marginals", |b| {
        b.iter(|| (0..objective.len()).map(|k| state.marginal(k)).sum::<f64>())
    });
}

criterion_group!(benches, selection, marginal_gains);
criterion_main!(benches);
