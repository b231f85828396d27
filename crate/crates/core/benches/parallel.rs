use belnet_core::autodiff::DenseArray;
use belnet_core::data::{build_dataset, ProblemConfig, SamplingMode};
use belnet_core::operators::{burgers_belnet_spec, Model, ModelSpec};
use belnet_core::training::predict_all;
use belnet_core::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn filled(rows: usize, cols: usize) -> DenseArray {
    let data = (0..rows * cols).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
    DenseArray::new(vec![rows, cols], data).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64, 256] {
        let (a, b) = (filled(n, n), filled(n, n));
        for (name, exec) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |bench, _| {
                bench.iter(|| a.matmul_with(&b, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn batch_predict(c: &mut Criterion) {
    let problem = ProblemConfig::by_name("burgers").unwrap();
    let (_, test) = build_dataset(&problem, SamplingMode::Fix, 0, 20, 0, Exec::default()).unwrap();
    let model = Model::init(&ModelSpec::BelNet(burgers_belnet_spec()), 0).unwrap();
    let mut group = c.benchmark_group("predict_burgers_belnet");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        group.bench_function(name, |bench| bench.iter(|| predict_all(&model, test.samples(), 5, exec).unwrap()));
    }
    group.finish();
}

fn generate(c: &mut Criterion) {
    let problem = ProblemConfig::by_name("burgers").unwrap();
    let mut group = c.benchmark_group("generate_burgers");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(name, |bench| {
            bench.iter(|| build_dataset(&problem, SamplingMode::Fix, 8, 4, 0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, batch_predict, generate);
criterion_main!(benches);
