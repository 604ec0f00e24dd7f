use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use specflow::complexity::CostModel;
use specflow::flowopt::{optimize, SearchSpace};
use specflow::netmodel::{gen_sparse_kernels, vgg16_k8, Pattern};
use specflow::scheduler::SchedulerKind;
use specflow::spectralsim::KernelSchedules;
use specflow::Exec;

fn optimizer(c: &mut Criterion) {
    let model = vgg16_k8();
    let space = SearchSpace::default();
    let cost = CostModel::default();
    let mut g = c.benchmark_group("optimize_vgg16");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| optimize(&model, &space, &cost, exec).unwrap())
        });
    }
    g.finish();
}

fn scheduling(c: &mut Criterion) {
    let model = vgg16_k8();
    let kernels = gen_sparse_kernels(0, Pattern::Clustered, 128, 16, &model.spectral);
    let mut g = c.benchmark_group("greedy_schedule_128x16");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| KernelSchedules::build(&kernels, 64, 10, SchedulerKind::Greedy, 0, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, optimizer, scheduling);
criterion_main!(benches);
