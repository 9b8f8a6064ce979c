//! Score-matching loss, the denoising identity and the score growth audit.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::GridSpec;
use crate::rng::PathStream;
use crate::schedule::NoiseSchedule;
use crate::simulate::ScoreModel;
use crate::target::{norm, norm_sq, H1Constants, MixtureTarget};

/// Paths per deterministic reduction chunk.
const CHUNK: usize = 1024;

/// Sums and sums of squares of `m` per-path quantities, reduced in a fixed
/// order so results do not depend on the thread count.
pub(crate) fn path_moments(paths: usize, m: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<(f64, f64)> {
    let chunks: Vec<Vec<(f64, f64)>> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![(0.0, 0.0); m];
            let mut v = vec![0.0; m];
            for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                f(p, &mut v);
                for (a, x) in acc.iter_mut().zip(&v) {
                    a.0 += x;
                    a.1 += x * x;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![(0.0, 0.0); m];
    for c in chunks {
        for (t, x) in total.iter_mut().zip(c) {
            t.0 += x.0;
            t.1 += x.1;
        }
    }
    total
}

/// Mean and standard error from a sum and sum of squares.
pub(crate) fn stat((s, sq): (f64, f64), n: usize) -> StepStat {
    let nf = n as f64;
    let mean = s / nf;
    let var = if n > 1 { ((sq - s * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    StepStat { value: mean, std_err: (var / nf).sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStat {
    pub value: f64,
    pub std_err: f64,
}

/// `L = (1/n) sum_i E|s_i(x_i) - grad log p_i(x_i)|^2`.
#[derive(Clone, Debug)]
pub struct ScoreLoss {
    pub total: StepStat,
    /// Entry `i - 1` is the `i`-th term.
    pub per_step: Vec<StepStat>,
    pub samples: usize,
}

/// Draws `x_0` and then `x_i = sqrt(abar_i) x_0 + sqrt(1 - abar_i) Z_i` for
/// every `i`, calling `visit(i, x_0, Z_i, x_i)`.
fn forward_marginals(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    seed: u64,
    p: usize,
    mut visit: impl FnMut(usize, &[f64], &[f64], &[f64]),
) {
    let d = target.dim();
    let mut rng = PathStream::new(seed, p);
    let mut x0 = vec![0.0; d];
    target.sample_into(&mut rng, &mut x0);
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    for i in 1..=schedule.n() {
        rng.fill_normal(&mut z);
        let g = schedule.neg_log_alpha_bar(i);
        let (m, s) = ((-0.5 * g).exp(), (-(-g).exp_m1()).sqrt());
        for j in 0..d {
            x[j] = m * x0[j] + s * z[j];
        }
        visit(i, &x0, &z, &x);
    }
}

/// Monte Carlo score-matching loss over exact forward marginals.
pub fn score_loss(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    model: &ScoreModel,
    samples: usize,
    seed: u64,
) -> ScoreLoss {
    let n = schedule.n();
    let d = target.dim();
    let bound = model.bind(schedule);
    let truth = ScoreModel::Exact(target.clone());
    let exact = truth.bind(schedule);
    let sums = path_moments(samples, n + 1, |p, out| {
        let (mut s, mut u) = (vec![0.0; d], vec![0.0; d]);
        let mut avg = 0.0;
        forward_marginals(target, schedule, seed, p, |i, _, _, x| {
            bound.s_i(i, x, &mut s);
            exact.s_i(i, x, &mut u);
            let e: f64 = s.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            out[i - 1] = e;
            avg += e;
        });
        out[n] = avg / n as f64;
    });
    ScoreLoss {
        total: stat(sums[n], samples),
        per_step: sums[..n].iter().map(|&s| stat(s, samples)).collect(),
        samples,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityStep {
    /// `E|s_i(x_i) - grad log p_i(x_i)|^2`.
    pub lhs: f64,
    /// `E|z_i(x_i) - Z|^2 / (1 - abar_i) - E[|grad log p_i(x_i|x_0)|^2 - |grad log p_i(x_i)|^2]`.
    pub rhs: f64,
    /// The same with `+` in front of the second expectation. It exceeds the
    /// left side by `2 E[|grad log p_i(x_i|x_0)|^2 - |grad log p_i(x_i)|^2]`.
    pub rhs_plus: f64,
    /// Mean of the per-sample difference `lhs - rhs`.
    pub gap: f64,
    pub gap_se: f64,
}

/// Both sides of the denoising score-matching identity on shared draws.
#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub steps: Vec<IdentityStep>,
    /// `(1/n) sum_i lhs_i`.
    pub pooled_lhs: f64,
    pub pooled_gap: f64,
    pub pooled_gap_se: f64,
    pub samples: usize,
}

impl IdentityReport {
    /// `|pooled gap| / pooled lhs`.
    pub fn relative_gap(&self) -> f64 {
        self.pooled_gap.abs() / self.pooled_lhs
    }

    /// Steps whose gap exceeds `k` standard errors.
    pub fn steps_outside(&self, k: f64) -> Vec<usize> {
        self.steps.iter().enumerate().filter(|(_, s)| s.gap.abs() > k * s.gap_se).map(|(i, _)| i + 1).collect()
    }
}

/// Evaluates both sides of the identity with the same `(x_0, Z)` pairs.
///
/// Since `grad log p_i(x)` is the conditional mean of
/// `grad log p_i(x | x_0)` given `x_i = x`, the conditional score term enters
/// with a minus sign: `E|s - u|^2 = E|s - c|^2 - E|c|^2 + E|u|^2`.
pub fn denoise_identity_check(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    model: &ScoreModel,
    samples: usize,
    seed: u64,
) -> IdentityReport {
    let n = schedule.n();
    let d = target.dim();
    let bound = model.bind(schedule);
    let truth = ScoreModel::Exact(target.clone());
    let exact = truth.bind(schedule);
    // layout: lhs_i, rhs_i, gap_i, rhs_plus_i for each i, then pooled lhs and pooled gap
    let sums = path_moments(samples, 4 * n + 2, |p, out| {
        let (mut s, mut u, mut z, mut c) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let (mut lhs_avg, mut gap_avg) = (0.0, 0.0);
        forward_marginals(target, schedule, seed, p, |i, x0, noise, x| {
            bound.s_i(i, x, &mut s);
            bound.z_i(i, x, &mut z);
            exact.s_i(i, x, &mut u);
            let one_minus = -(-schedule.neg_log_alpha_bar(i)).exp_m1();
            let m = schedule.alpha_bar(i).sqrt();
            for j in 0..d {
                c[j] = -(x[j] - m * x0[j]) / one_minus;
            }
            let lhs: f64 = s.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            let denoise: f64 = z.iter().zip(noise).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / one_minus;
            let excess = norm_sq(&c) - norm_sq(&u);
            let rhs = denoise - excess;
            let k = 4 * (i - 1);
            out[k] = lhs;
            out[k + 1] = rhs;
            out[k + 2] = lhs - rhs;
            out[k + 3] = denoise + excess;
            lhs_avg += lhs;
            gap_avg += lhs - rhs;
        });
        out[4 * n] = lhs_avg / n as f64;
        out[4 * n + 1] = gap_avg / n as f64;
    });
    let steps = (0..n)
        .map(|i| {
            let gap = stat(sums[4 * i + 2], samples);
            IdentityStep {
                lhs: sums[4 * i].0 / samples as f64,
                rhs: sums[4 * i + 1].0 / samples as f64,
                rhs_plus: sums[4 * i + 3].0 / samples as f64,
                gap: gap.value,
                gap_se: gap.std_err,
            }
        })
        .collect();
    let pooled = stat(sums[4 * n + 1], samples);
    IdentityReport {
        steps,
        pooled_lhs: sums[4 * n].0 / samples as f64,
        pooled_gap: pooled.value,
        pooled_gap_se: pooled.std_err,
        samples,
    }
}

/// Worst margin of `c0/m + c1/m^2 |x| - |grad log p_t(x)|` over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthAudit {
    pub margin: f64,
    pub worst_t: f64,
    pub worst_x: Vec<f64>,
    pub points: usize,
}

impl GrowthAudit {
    pub fn pass(&self) -> bool {
        self.margin >= 0.0
    }
}

pub fn score_growth_audit(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    constants: &H1Constants,
    grid: &GridSpec,
    times: &[f64],
) -> Result<GrowthAudit> {
    let mut audit = GrowthAudit { margin: f64::INFINITY, worst_t: f64::NAN, worst_x: vec![], points: 0 };
    let mut score = vec![0.0; target.dim()];
    for &t in times {
        let law = target.marginal_at(schedule, t)?;
        let m = law.coeffs.m;
        grid.for_each_point(|_, x| {
            law.score_into(x, &mut score);
            let margin = constants.c0 / m + constants.c1 / (m * m) * norm(x) - norm(&score);
            audit.points += 1;
            if margin < audit.margin {
                audit.margin = margin;
                audit.worst_t = t;
                audit.worst_x = x.to_vec();
            }
        });
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{h2_clip, ClipVariant};

    fn mixture() -> MixtureTarget {
        MixtureTarget::new(vec![0.4, 0.6], vec![-1.5, 1.5], vec![1.0]).unwrap()
    }

    #[test]
    fn exact_model_has_zero_loss() {
        let t = mixture();
        let s = NoiseSchedule::constant_total(10, 3.0).unwrap();
        let l = score_loss(&t, &s, &ScoreModel::Exact(t.clone()), 2000, 1);
        assert!(l.total.value <= 1e-20);
        let clipped = h2_clip(&ScoreModel::Exact(t.clone()), t.h1_constants(), ClipVariant::TrueScore).unwrap();
        assert!(score_loss(&t, &s, &clipped, 2000, 1).total.value <= 1e-20);
    }

    #[test]
    fn constant_bias_loss_is_bias_squared() {
        let t = mixture();
        let s = NoiseSchedule::constant_total(10, 3.0).unwrap();
        let l = score_loss(&t, &s, &ScoreModel::biased(t.clone(), vec![0.7]), 1000, 2);
        assert!((l.total.value - 0.49).abs() < 1e-12);
        let noisy = ScoreModel::Perturbed { target: t.clone(), bias: vec![0.2], noise: 0.5 };
        let l = score_loss(&t, &s, &noisy, 20_000, 2);
        // E(0.2 + 0.5 sin(.))^2 lies between 0.04 and (0.2 + 0.5)^2
        assert!(l.total.value > 0.04 && l.total.value < 0.49);
        let clipped = h2_clip(&noisy, t.h1_constants(), ClipVariant::Projection).unwrap();
        assert!(score_loss(&t, &s, &clipped, 20_000, 2).total.value <= l.total.value);
    }

    #[test]
    fn identity_holds_on_shared_draws() {
        let t = mixture();
        let s = NoiseSchedule::constant_total(20, 4.0).unwrap();
        let model = ScoreModel::Perturbed { target: t.clone(), bias: vec![1.0], noise: 0.5 };
        let r = denoise_identity_check(&t, &s, &model, 20_000, 3);
        assert!(r.pooled_gap.abs() <= 3.0 * r.pooled_gap_se, "{r:?}");
        assert!(r.steps_outside(4.0).is_empty());
        let exact = denoise_identity_check(&t, &s, &ScoreModel::Exact(t.clone()), 5000, 3);
        for st in &exact.steps {
            assert_eq!(st.lhs, 0.0);
            assert!((st.gap + st.rhs).abs() < 1e-12);
            assert!(st.gap.abs() <= 4.0 * st.gap_se);
            assert!(st.rhs_plus > 0.1);
        }
    }

    #[test]
    fn identity_at_a_point_mass_matches_quadrature() {
        // Q = 1e12 makes x_0 = 0 up to 1e-6; with alpha = 1/2, x_1 ~ N(0, 1/2).
        let t = MixtureTarget::new(vec![1.0], vec![0.0], vec![1e12]).unwrap();
        let s = NoiseSchedule::constant(1, 0.5).unwrap();
        let model = ScoreModel::Perturbed { target: t.clone(), bias: vec![0.3], noise: 0.4 };
        let r = denoise_identity_check(&t, &s, &model, 200_000, 9);
        let g = GridSpec::centered(1, 8.0, 4001).unwrap();
        let phi = |x: f64| (-x * x).exp() / std::f64::consts::PI.sqrt();
        let expected = g.integrate(|x| {
            let e = 0.3 + 0.4 * (2.7 * x[0] + 1.3).sin();
            e * e * phi(x[0])
        });
        let st = r.steps[0];
        assert!((st.lhs - expected).abs() < 5e-3, "{} vs {expected}", st.lhs);
        assert!((st.rhs - expected).abs() < 5e-3, "{} vs {expected}", st.rhs);
    }

    #[test]
    fn growth_audit_cases() {
        let s = NoiseSchedule::ho_scaled(200).unwrap();
        let times: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
        for t in [MixtureTarget::standard(1), MixtureTarget::symmetric_pair(2.0)] {
            let g = t.default_grid(401).unwrap();
            let a = score_growth_audit(&t, &s, &t.h1_constants(), &g, &times).unwrap();
            assert!(a.pass(), "{a:?}");
            assert_eq!(a.points, 401 * 20);
        }
        let t = MixtureTarget::new(vec![0.3, 0.7], vec![-2.0, 2.0], vec![1.0]).unwrap();
        let mut c = t.h1_constants();
        c.c0 = 0.0;
        let g = GridSpec::centered(1, 8.0, 401).unwrap();
        let a = score_growth_audit(&t, &s, &c, &g, &times).unwrap();
        assert!(!a.pass());
        assert!(a.worst_x[0].abs() < 0.5);
    }
}
