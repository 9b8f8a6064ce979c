use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ddpmlab::metrics::{empirical_tv, Binning};
use ddpmlab::{ddpm_terminal, reverse_sde, MixtureTarget, Retention, ReverseOptions, ScoreMode, ScoreModel};
use ddpmlab_bench::{mixture_1d, schedule};

fn mixture_score(c: &mut Criterion) {
    let mut g = c.benchmark_group("mixture_score");
    for (name, t) in [("1d", mixture_1d()), ("2d_pair", MixtureTarget::symmetric_pair(2.0))] {
        let m = t.mixture().clone();
        let x = vec![0.3; m.dim()];
        let mut out = vec![0.0; m.dim()];
        g.bench_function(name, |b| b.iter(|| m.score_into(black_box(&x), &mut out)));
    }
    g.finish();
}

fn reverse(c: &mut Criterion) {
    let target = mixture_1d();
    let s = schedule(100);
    let mut g = c.benchmark_group("reverse_sde_1000_paths");
    g.sample_size(10);
    for sub in [1usize, 4] {
        g.bench_with_input(BenchmarkId::new("exact", sub), &sub, |b, &sub| {
            b.iter(|| {
                let opts = ReverseOptions::new(sub, 1000, 7).retain(Retention::Terminal);
                reverse_sde(ScoreMode::Exact(&target), &s, opts).unwrap()
            })
        });
    }
    g.finish();
}

fn ddpm(c: &mut Criterion) {
    let model = ScoreModel::Exact(mixture_1d());
    let mut g = c.benchmark_group("ddpm_terminal_1000_paths");
    g.sample_size(10);
    for n in [50usize, 200] {
        let s = schedule(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ddpm_terminal(&model, &s, 1000, 7, true))
        });
    }
    g.finish();
}

fn histogram_tv(c: &mut Criterion) {
    let target = mixture_1d();
    let samples = 100_000;
    let binning = Binning::for_target(target.mixture(), target.default_half_width(), samples);
    let reference = binning.reference_probs(target.mixture());
    let batch = ddpm_terminal(&ScoreModel::Exact(target), &schedule(50), samples, 7, true);
    let xs = batch.terminal_samples();
    c.bench_function("empirical_tv_1e5", |b| b.iter(|| empirical_tv(&binning, &reference, black_box(&xs))));
}

criterion_group!(benches, mixture_score, reverse, ddpm, histogram_tv);
criterion_main!(benches);
