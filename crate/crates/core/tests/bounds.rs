use ddpmlab::bounds::{
    girsanov_bound, girsanov_bounds, girsanov_energy, schrodinger_bound, schrodinger_rhs, ExactTerminal,
};
use ddpmlab::simulate::{reverse_sde, Retention, ReverseOptions, ScoreMode, ScoreModel};
use ddpmlab::target::normal_cdf;
use ddpmlab::{MixtureTarget, NoiseSchedule, Verdict};

fn mixture() -> MixtureTarget {
    MixtureTarget::new(vec![0.3, 0.7], vec![-2.0, 1.0], vec![1.5]).unwrap()
}

/// TV between `N(0, 1)` and `N(0, v)` with `v > 1`.
fn gaussian_scale_tv(v: f64) -> f64 {
    let c = (v * v.ln() / (v - 1.0)).sqrt();
    2.0 * (normal_cdf(c) - normal_cdf(c / v.sqrt()))
}

#[test]
fn zero_score_on_standard_target() {
    let t = MixtureTarget::standard(1);
    let s = NoiseSchedule::constant_total(10, 1.0).unwrap();
    let model = ScoreModel::Zero { dim: 1 };
    let (sub, paths) = (8, 20_000);
    let r = girsanov_bound(&t, &s, &model, paths, sub, 13).unwrap();

    // kappa = -X along stationary Euler-Maruyama paths, whose variance obeys
    // V <- (1 - beta dt / 2)^2 V + beta dt
    let dt = 1.0 / (s.n() * sub) as f64;
    let (mut v, mut energy) = (1.0, 0.0);
    for k in 0..s.n() * sub {
        let beta = s.beta_on(s.n() - k / sub);
        energy += beta * dt * v;
        v = (1.0 - 0.5 * beta * dt).powi(2) * v + beta * dt;
    }
    let e = r.term("kappa_energy").unwrap();
    assert!((e.value - energy).abs() < 4.0 * e.std_err.unwrap(), "{} vs {energy}", e.value);

    // the zero-score sampler is exact OU growth: Var X_1 = 2 e^{G} - 1
    let lhs = gaussian_scale_tv(2.0 * 1f64.exp() - 1.0);
    let tv = r.term("tv").unwrap();
    let bias = r.value("bias_budget").unwrap();
    assert!((tv.empirical.unwrap() - lhs).abs() < 4.0 * tv.std_err.unwrap() + bias, "{tv:?} vs {lhs}");
    assert!(r.verdict().holds());
    assert!(tv.value >= lhs);
}

#[test]
fn exact_score_energy_scales_like_inverse_sqrt_n() {
    let t = mixture();
    let model = ScoreModel::Exact(t.clone());
    let ns = [10usize, 50, 100, 500];
    let rhs: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let s = NoiseSchedule::constant_total(n, 4.0).unwrap();
            let (e, _) = girsanov_energy(&t, &s, &[&model], 2_000, 4, 3).unwrap();
            0.5 * e[0].0.sqrt()
        })
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = rhs.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.2, "slope {slope}, rhs {rhs:?}");
}

#[test]
fn biased_scores_respect_the_girsanov_bound() {
    let t = mixture();
    let s = NoiseSchedule::ho_scaled(100).unwrap();
    let models: Vec<ScoreModel> = [0.1, 0.5, 1.0].iter().map(|&b| ScoreModel::biased(t.clone(), vec![b])).collect();
    let refs: Vec<&ScoreModel> = models.iter().collect();
    let small = girsanov_bounds(&t, &s, &refs, 5_000, 2, 8).unwrap();
    let large = girsanov_bounds(&t, &s, &refs, 20_000, 2, 8).unwrap();
    let mut last = 0.0;
    for (a, b) in small.iter().zip(&large) {
        assert!(a.verdict().holds() && b.verdict().holds(), "{a:?}\n{b:?}");
        let tv = b.term("tv").unwrap();
        assert!(tv.empirical.unwrap() > last);
        last = tv.empirical.unwrap();
    }
}

#[test]
fn schrodinger_bound_on_standard_target_has_margin() {
    let t = MixtureTarget::standard(1);
    let s = NoiseSchedule::constant_total(20, 3.0).unwrap();
    let b =
        reverse_sde(ScoreMode::Exact(&t), &s, ReverseOptions::new(4, 20_000, 4).retain(Retention::Terminal)).unwrap();
    let r = schrodinger_bound(&t, &s, &b).unwrap();
    assert!(matches!(r.verdict(), Verdict::HoldsWithMargin(m) if m > 0.0), "{r:?}");
    assert!(r.value("tv_exact_binned").unwrap() < 1e-9);
}

#[test]
fn schrodinger_bound_on_two_dimensional_mixture() {
    let t = MixtureTarget::new(vec![0.5, 0.5], vec![-1.0, 0.5, 1.0, -0.5], vec![1.0, 0.2, 0.2, 0.8]).unwrap();
    let s = NoiseSchedule::ho_scaled(50).unwrap();
    let b =
        reverse_sde(ScoreMode::Exact(&t), &s, ReverseOptions::new(4, 20_000, 4).retain(Retention::Terminal)).unwrap();
    let r = schrodinger_bound(&t, &s, &b).unwrap();
    assert!(r.verdict().holds(), "{r:?}");
    assert!(r.term("tv_exact_binned").is_none());
}

#[test]
fn schrodinger_sweep_decreases() {
    let t = mixture();
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for total in [1.0, 3.0, 6.0] {
        let s = NoiseSchedule::constant_total(20, total).unwrap();
        let rhs = schrodinger_rhs(&t, &s).unwrap().0;
        let grid = t.default_grid(2001).unwrap();
        let exact = ExactTerminal::new(&t, &s).unwrap();
        let lhs = ddpmlab::metrics::tv(&grid, |x| exact.density(x[0]), |x| t.density(x));
        assert!(lhs <= rhs, "total {total}: {lhs} > {rhs}");
        assert!(rhs < prev.0 && lhs < prev.1);
        prev = (rhs, lhs);
    }
}
