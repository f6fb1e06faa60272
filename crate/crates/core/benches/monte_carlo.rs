//! Sequential versus parallel execution of the two data-parallel hot paths:
//! an experiment's independent trials and the exhaustive mask search.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use d2dcc::channel::{self, ScenarioConfig};
use d2dcc::mode_select::exhaustive_select;
use d2dcc::simrunner::{run_experiment, Scheme, TrialOptions};
use d2dcc::{Execution, SolverOptions};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn experiment(c: &mut Criterion) {
    let cfg = ScenarioConfig::default();
    let schemes = [Scheme::MulticastOnly, Scheme::HybridHeuristic, Scheme::HybridExhaustive];
    let mut group = c.benchmark_group("experiment_k3_16_trials");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = TrialOptions { solver: SolverOptions::default(), exec };
        group.bench_function(name, |b| {
            b.iter(|| run_experiment(black_box(&cfg), None, &schemes, 16, 0, &opts).unwrap())
        });
    }
    group.finish();
}

fn exhaustive(c: &mut Criterion) {
    let cfg = ScenarioConfig::new(4, 4, 2.0, 2);
    let chans = channel::sample(&cfg, 0).unwrap();
    let placement = cfg.placement().unwrap();
    let demands = cfg.default_demands();
    let mut group = c.benchmark_group("exhaustive_k4");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                exhaustive_select(&demands, &placement, black_box(&chans), &cfg, &SolverOptions::default(), exec)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, experiment, exhaustive);
criterion_main!(benches);
