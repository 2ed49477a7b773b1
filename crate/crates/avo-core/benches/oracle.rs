//! Benchmarks for the data-parallel hot paths: the brute-force enumeration
//! oracle (parallel vs sequential scan) and single-candidate evaluation.
//!
//! Build with default features to compare the rayon scan against the
//! sequential one; with `--no-default-features` only the sequential scan
//! runs.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use avo_core::minivm::oracle::{brute_force_optimal, brute_force_optimal_seq, OracleParams};
use avo_core::minivm::task::fixtures;
use avo_core::scoring::Scorer;

fn bench_oracle(c: &mut Criterion) {
    let task = fixtures::times3();
    let mut group = c.benchmark_group("oracle_times3");
    for len in [2usize, 3] {
        let params = OracleParams::with_max_len(len);
        #[cfg(feature = "parallel")]
        group.bench_function(format!("parallel_len{len}"), |b| {
            b.iter(|| brute_force_optimal(black_box(&task), black_box(&params)).unwrap())
        });
        group.bench_function(format!("sequential_len{len}"), |b| {
            b.iter(|| brute_force_optimal_seq(black_box(&task), black_box(&params)).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let scorer = Scorer::with_defaults(fixtures::times3()).unwrap();
    let optimal = "shl r1, r0, 1\nadd r0, r1, r0\n";
    c.bench_function("evaluate_times3_candidate", |b| {
        b.iter(|| scorer.evaluate(black_box(optimal)))
    });
}

criterion_group!(benches, bench_oracle, bench_evaluate);
criterion_main!(benches);
