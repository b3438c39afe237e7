use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tiersim::engines::EngineKind;
use tiersim::harness::{run, RunConfig};
use tiersim::par::Execution;
use tiersim::workload::{builtin_scenario, AccessBatch, BatchGenerator};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn batch_generation(c: &mut Criterion) {
    let scenario = builtin_scenario("multi_phase_5tb").unwrap();
    let mut group = c.benchmark_group("fill_200ms_window");
    for exec in MODES {
        let generator = BatchGenerator::new(&scenario).unwrap().with_execution(exec);
        let mut batch = AccessBatch::default();
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| generator.fill(0, 200, &mut batch).unwrap())
        });
    }
    group.finish();
}

fn multi_engine_run(c: &mut Criterion) {
    let scenario = builtin_scenario("subtb_10g").unwrap();
    let mut group = c.benchmark_group("run_1s_all_engines");
    group.sample_size(10);
    for exec in MODES {
        let cfg = RunConfig {
            duration_ms: Some(1_000),
            execution: exec,
            ..RunConfig::new(scenario.clone(), EngineKind::ALL.to_vec())
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| b.iter(|| run(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, batch_generation, multi_engine_run);
criterion_main!(benches);
