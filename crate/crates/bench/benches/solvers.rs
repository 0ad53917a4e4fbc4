use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rwre_bench::{ball, desk_field, tilted};
use rwre_core::analysis::metrics::{d_metrics_with, srw_green};
use rwre_core::kernels::coarse::coarse_grain_env;
use rwre_core::kernels::rwre_kernel;
use rwre_core::reference::clt::local_clt_scan;
use rwre_core::solver::{exit_measure, mean_exit_times};
use rwre_core::{green, SmoothingField};

fn exact_solves(c: &mut Criterion) {
    let env = tilted(0.05, 1);
    let mut g = c.benchmark_group("green");
    g.sample_size(20);
    for l in [6.0, 10.0, 14.0] {
        let dom = ball(l);
        let k = rwre_kernel(&env.materialize(&dom), &dom).unwrap();
        g.bench_with_input(BenchmarkId::new("mean_exit_times", l), &k, |b, k| {
            b.iter(|| mean_exit_times(&green(k).unwrap(), None).unwrap())
        });
        let op = green(&k).unwrap();
        g.bench_with_input(BenchmarkId::new("exit_measure", l), &op, |b, op| b.iter(|| exit_measure(op, &[1, 0, 0]).unwrap()));
    }
    g.finish();
}

fn coarse_graining(c: &mut Criterion) {
    let env = tilted(0.05, 2);
    let mut g = c.benchmark_group("coarse_grain_env");
    g.sample_size(10);
    for l in [8.0, 12.0] {
        let dom = ball(l);
        let field = desk_field(l);
        g.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, _| {
            b.iter(|| coarse_grain_env(&env, &field, &dom).unwrap())
        });
    }
    g.finish();
}

fn distances(c: &mut Criterion) {
    let env = tilted(0.03, 3);
    let l = 8.0;
    let gs = srw_green(l, 3).unwrap();
    let psi = SmoothingField::Constant(2.0);
    let mut g = c.benchmark_group("d_metrics");
    g.sample_size(10);
    g.bench_function("L8", |b| b.iter(|| d_metrics_with(&env, l, &psi, l / 5.0, Some(&gs)).unwrap()));
    g.finish();
}

fn clt(c: &mut Criterion) {
    let mut g = c.benchmark_group("local_clt_scan");
    g.sample_size(10);
    let ns: Vec<usize> = (2..=8).collect();
    g.bench_function("m2", |b| b.iter(|| local_clt_scan(2.0, &ns, 3).unwrap()));
    g.finish();
}

criterion_group!(benches, exact_solves, coarse_graining, distances, clt);
criterion_main!(benches);
