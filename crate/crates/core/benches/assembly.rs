use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use varibc_core::config::RunConfig;
use varibc_core::par::with_threads;
use varibc_core::problems::Family;
use varibc_core::run::build_instance;

fn bench_assembly(c: &mut Criterion) {
    let mut config = RunConfig::for_family(Family::Gripper);
    config.element_size = Some(0.003);
    let inst = build_instance(&config).expect("gripper instance");
    let design = inst.initial_design();
    let fields = inst.field.evaluate(&design);
    let u = vec![1e-5; inst.mesh.num_dofs()];
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());

    let mut group = c.benchmark_group("gripper_2400");
    for t in [1, threads] {
        group.bench_with_input(BenchmarkId::new("assemble", t), &t, |b, &t| {
            with_threads(t, || b.iter(|| inst.assembler.assemble(&u, &fields, inst.springs()).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("evaluate_with_gradients", t), &t, |b, &t| {
            with_threads(t, || b.iter(|| inst.evaluate(&design, true).unwrap()))
        });
        if threads == 1 {
            break;
        }
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_assembly
}
criterion_main!(benches);
