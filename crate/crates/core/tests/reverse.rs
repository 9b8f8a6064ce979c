use ddpmlab::bounds::{moment_report, shifted_gaussian_second_moment};
use ddpmlab::simulate::{ddpm_sample, forward_chain, reverse_sde, Retention, ReverseOptions, ScoreMode, ScoreModel};
use ddpmlab::{MixtureTarget, NoiseSchedule};

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn forward_chain_matches_marginals() {
    let t = MixtureTarget::new(vec![0.3, 0.7], vec![-2.0, 1.0], vec![1.5]).unwrap();
    let s = NoiseSchedule::from_linear_variance(20, 1e-3, 0.2).unwrap();
    let paths = 20_000;
    let b = forward_chain(&t, &s, paths, 3);
    for i in [0, 5, 20] {
        let (m, v) = mean_var(&b.samples_at(i));
        let law = t.marginal_at(&s, s.knot(i)).unwrap();
        let mu = law.mean_vector()[0];
        let var = law.second_moment() - mu * mu;
        assert!((m - mu).abs() < 4.0 * (var / paths as f64).sqrt(), "i={i} mean {m} vs {mu}");
        assert!((v / var - 1.0).abs() < 4.0 * (2.0 / paths as f64).sqrt() * 1.5, "i={i} var {v} vs {var}");
    }
}

#[test]
fn zero_score_ddpm_variance_follows_recursion() {
    let s = NoiseSchedule::from_linear_variance(30, 1e-3, 0.1).unwrap();
    let model = ScoreModel::Zero { dim: 1 };
    let paths = 20_000;
    let b = ddpm_sample(&model, &s, paths, 9, true);
    let mut v = 1.0;
    for i in (1..=s.n()).rev() {
        v = v / s.alpha(i) + s.sigma(i).powi(2);
    }
    let (_, emp) = mean_var(&b.terminal_samples());
    assert!((emp / v - 1.0).abs() < 4.0 * (2.0 / paths as f64).sqrt(), "{emp} vs {v}");
}

/// `E|X*_t|^2` for the target `N(mu0, 1)` from the mean ODE
/// `M' = -beta/2 M + beta e^{-G(1-t)/2} mu0`, integrated by RK4 inside each
/// schedule interval.
fn rk4_second_moment(s: &NoiseSchedule, mu0: f64, t_end: f64) -> f64 {
    let n = s.n();
    let level = |t: f64| s.integrated_beta(1.0 - t).unwrap();
    let mut m = 0.0;
    let mut t = 0.0;
    let sub = 400;
    while t < t_end - 1e-12 {
        let j = (t * n as f64).round() as usize;
        let beta = s.beta_on(n - j);
        let h = 1.0 / (n * sub) as f64;
        let f = |t: f64, m: f64| -0.5 * beta * m + beta * (-0.5 * level(t.min(1.0))).exp() * mu0;
        for _ in 0..sub {
            let k1 = f(t, m);
            let k2 = f(t + 0.5 * h, m + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, m + 0.5 * h * k2);
            let k4 = f(t + h, m + h * k3);
            m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
    }
    1.0 + m * m
}

#[test]
fn shifted_gaussian_moments_follow_the_ode() {
    let mu0 = 1.5;
    let t = MixtureTarget::shifted(vec![mu0]);
    let s = NoiseSchedule::from_linear_variance(10, 0.05, 0.4).unwrap();
    let b =
        reverse_sde(ScoreMode::Exact(&t), &s, ReverseOptions::new(32, 20_000, 21).retain(Retention::Knots)).unwrap();
    let r = moment_report(&s, &b, &t.h1_constants());
    assert!(r.all_finite());
    assert_eq!(r.rows.len(), 11);
    for row in &r.rows {
        let ode = rk4_second_moment(&s, mu0, row.t);
        let closed = shifted_gaussian_second_moment(&s, &[mu0], row.t).unwrap();
        assert!((ode - closed).abs() < 1e-8, "t={} ode {ode} closed {closed}", row.t);
        assert!((row.m2 - ode).abs() < 3.0 * row.m2_se + 1e-3, "t={} {} vs {ode}", row.t, row.m2);
    }
}

#[test]
fn standard_target_moments_are_stationary() {
    let t = MixtureTarget::standard(2);
    let s = NoiseSchedule::ho_scaled(50).unwrap();
    let b = reverse_sde(ScoreMode::Exact(&t), &s, ReverseOptions::new(4, 20_000, 2).retain(Retention::Knots)).unwrap();
    let r = moment_report(&s, &b, &t.h1_constants());
    // Euler-Maruyama keeps the law Gaussian with per-axis variance
    // V <- (1 - beta dt / 2)^2 V + beta dt
    let (sub, dt) = (4, 1.0 / 200.0);
    let mut v = 1.0;
    for (j, row) in r.rows.iter().enumerate() {
        if j > 0 {
            let beta = s.beta_on(s.n() + 1 - j);
            for _ in 0..sub {
                v = (1.0 - 0.5 * beta * dt).powi(2) * v + beta * dt;
            }
        }
        assert!((row.m2 - 2.0 * v).abs() < 4.0 * row.m2_se, "t={} m2={} v={v}", row.t, row.m2);
        // E|X|^4 = d (d + 2) V^2 for a centred Gaussian
        assert!((row.m4 - 8.0 * v * v).abs() < 4.0 * row.m4_se, "t={} m4={}", row.t, row.m4);
    }
    assert!(r.ln_shape.is_finite());
}

#[test]
fn substep_paths_share_the_first_step_noise() {
    let t = MixtureTarget::symmetric_pair(1.0);
    let s = NoiseSchedule::constant_total(8, 3.0).unwrap();
    let a = reverse_sde(ScoreMode::Exact(&t), &s, ReverseOptions::new(1, 10, 5)).unwrap();
    let b = reverse_sde(ScoreMode::Exact(&t), &s, ReverseOptions::new(3, 10, 5)).unwrap();
    for p in 0..10 {
        assert_eq!(a.state(p, 0), b.state(p, 0));
    }
}
