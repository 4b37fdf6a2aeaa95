use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use quadisrk::lyapunov::solve_lyapunov_q;
use quadisrk::quadrature::approx_gramian_q;
use quadisrk::reduction::{isrk, quad_isrk, ReductionConfig};
use quadisrk::{assemble_rom, build_data_block, caching_oracle, state_space_oracle, FrequencyResponseOracle};
use quadisrk_bench::{default_rule, modal, shifts};

fn data_block(c: &mut Criterion) {
    let model = modal(20);
    let rule = default_rule();
    let oracle = caching_oracle(state_space_oracle(&model));
    for s in rule.nodes() {
        oracle.sample(s).unwrap();
    }
    let mut group = c.benchmark_group("data_block");
    for r in [2, 6, 10] {
        let sh = shifts(r);
        group.bench_with_input(BenchmarkId::new("build", r), &sh, |b, sh| {
            b.iter(|| build_data_block(&oracle, &rule, black_box(sh)).unwrap())
        });
        let block = build_data_block(&oracle, &rule, &sh).unwrap();
        group.bench_with_input(BenchmarkId::new("assemble", r), &block, |b, block| {
            b.iter(|| assemble_rom(black_box(block)).unwrap())
        });
    }
    group.finish();
}

fn gramians(c: &mut Criterion) {
    let mut group = c.benchmark_group("gramian");
    for n in [20, 60] {
        let model = modal(n);
        group.bench_with_input(BenchmarkId::new("lyapunov_q", n), &model, |b, m| b.iter(|| solve_lyapunov_q(m).unwrap()));
    }
    let model = modal(20);
    let rule = default_rule();
    group.bench_function("quadrature_q/20", |b| b.iter(|| approx_gramian_q(&model, &rule).unwrap()));
    group.finish();
}

fn reductions(c: &mut Criterion) {
    let model = modal(20);
    let rule = default_rule();
    let config = ReductionConfig::new(6);
    let mut group = c.benchmark_group("reduce");
    group.sample_size(20);
    group.bench_function("isrk/r6", |b| b.iter(|| isrk(&model, &config).unwrap()));
    group.bench_function("quad_isrk/r6", |b| {
        b.iter(|| {
            let oracle = caching_oracle(state_space_oracle(&model));
            quad_isrk(&oracle, &rule, &config).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, data_block, gramians, reductions);
criterion_main!(benches);
