use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flexhost::hosting::{solve_hosting, solve_hosting_with, HostingOptions, SolveMethod};
use flexhost::risk::empirical_cvar;
use flexhost::study::{synthetic_study, SyntheticStudyParams};
use flexhost_bench::random_spec;

fn hosting(c: &mut Criterion) {
    let mut group = c.benchmark_group("hosting");
    group.sample_size(20);
    for &t in &[96, 672, 2688] {
        let spec = random_spec(3, t, 0.99, 0.1, 0.5);
        group.bench_with_input(BenchmarkId::new("working_set", t), &spec, |b, s| b.iter(|| solve_hosting(s).unwrap()));
    }
    let spec = random_spec(3, 192, 0.95, 0.1, 0.5);
    let full = HostingOptions { method: SolveMethod::Full, ..Default::default() };
    group.bench_function("full_lp/192", |b| b.iter(|| solve_hosting_with(&spec, &full).unwrap()));
    group.finish();
}

fn cvar(c: &mut Criterion) {
    let spec = random_spec(5, 2688, 0.99, 0.0, 0.0);
    c.bench_function("empirical_cvar/2688", |b| b.iter(|| empirical_cvar(&spec.residual.values, 0.99).unwrap()));
}

fn study(c: &mut Criterion) {
    let mut group = c.benchmark_group("study");
    group.sample_size(10);
    group.bench_function("synthetic_study/2688", |b| b.iter(|| synthetic_study(&SyntheticStudyParams::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, hosting, cvar, study);
criterion_main!(benches);
