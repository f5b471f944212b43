use criterion::{black_box, criterion_group, criterion_main, Criterion};
use v2v_bench::scenario;
use v2v_core::{run_sim, SimParams};

fn bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, beta, lambda) in [("low_load", 0.06, 10.0), ("high_load", 0.12, 25.0)] {
        let sc = scenario(beta, lambda);
        let params = SimParams { duration_s: 3.0, ..Default::default() };
        g.bench_function(name, |b| b.iter(|| run_sim(black_box(&sc), &params, 1).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
