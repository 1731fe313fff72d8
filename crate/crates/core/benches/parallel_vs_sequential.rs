//! Sequential vs rayon execution for the two data-parallel hot spots:
//! minibatch oracle averaging and independent (policy, seed) runs.
//! Built without the `parallel` feature, both arms run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use opex::geometry::Point;
use opex::harness::{run_prepared, ExperimentConfig, MetricSelection, PolicyConfig, Prepared, ProblemConfig, StartRule};
use opex::par::Execution;
use opex::problems::{glm_generate, GlmParams, Link};
use opex::rng::{RngStream, StreamTag};
use opex::schedules::PolicyName;

fn hinge(n: usize) -> GlmParams {
    GlmParams { n, link: Link::Hinge, d_minus: 1e-2, radius: 10.0, sigma_y: 1.0, seed: 1 }
}

fn minibatch(c: &mut Criterion) {
    let problem = glm_generate(&hinge(100)).unwrap();
    let x = Point::from_element(100, 0.1);
    let stream = RngStream::new(7, StreamTag::Oracle);
    let mut group = c.benchmark_group("minibatch_n100");
    for m in [100, 1000] {
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, m), &m, |b, &m| {
                b.iter(|| black_box(problem.minibatch(&x, m, &stream, 3, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn multi_seed(c: &mut Criterion) {
    let params = hinge(50);
    let prep = Prepared::from_problem(glm_generate(&params).unwrap(), &StartRule::default(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(
        ProblemConfig::Glm {
            link: params.link,
            n: params.n,
            d_minus: params.d_minus,
            radius: params.radius,
            sigma_y: params.sigma_y,
            seed: params.seed,
        },
        [PolicyName::SaClassic, PolicyName::SoeDecreasing].into_iter().map(PolicyConfig::new).collect(),
        200,
        (1..=8).collect(),
    );
    cfg.batch = Some(10);
    cfg.cadence = 50;
    cfg.metrics = MetricSelection::distance_only();
    cfg.output = dir.path().to_path_buf();

    let mut group = c.benchmark_group("experiment_16_runs");
    group.sample_size(10);
    for (name, workers) in [("sequential", Some(1)), ("parallel", None)] {
        cfg.workers = workers;
        group.bench_function(name, |b| b.iter(|| black_box(run_prepared(&cfg, &prep).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, minibatch, multi_seed);
criterion_main!(benches);
