//! Denoiser families with a controllable score-matching error.

use crate::error::{LabError, Result};
use crate::schedule::NoiseSchedule;
use crate::target::{norm, H1Constants, MarginalLaw, MixtureTarget};

/// What replaces a clipped score value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipVariant {
    /// The analytic score at that point; needs an attached target.
    TrueScore,
    /// Radial projection onto the growth bound.
    Projection,
}

/// Per-step score estimates `s_i`, with `z_i = -sqrt(1 - abar_i) s_i`.
#[derive(Clone, Debug)]
pub enum ScoreModel {
    /// `s_i` is the score of the exact time-`t_i` marginal.
    Exact(MixtureTarget),
    /// `s_i = 0` in dimension `dim`.
    Zero { dim: usize },
    /// `s_i(x) = grad log p_i(x) + bias + noise * sin(2.7 x_j + 1.3 i + j)`
    /// coordinatewise; the sine term is a deterministic rough error field.
    Perturbed { target: MixtureTarget, bias: Vec<f64>, noise: f64 },
    /// `inner` with values exceeding `c0/sqrt(abar_i) + c1/abar_i |x|` replaced.
    Clipped { inner: Box<ScoreModel>, constants: H1Constants, variant: ClipVariant },
}

impl ScoreModel {
    pub fn biased(target: MixtureTarget, bias: Vec<f64>) -> Self {
        ScoreModel::Perturbed { target, bias, noise: 0.0 }
    }

    /// Analytic target attached to the model, if any.
    pub fn target(&self) -> Option<&MixtureTarget> {
        match self {
            ScoreModel::Exact(t) | ScoreModel::Perturbed { target: t, .. } => Some(t),
            ScoreModel::Zero { .. } => None,
            ScoreModel::Clipped { inner, .. } => inner.target(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Zero { dim } => *dim,
            ScoreModel::Clipped { inner, .. } => inner.dim(),
            _ => self.target().expect("target-backed model").dim(),
        }
    }

    /// Precomputes the marginals needed to evaluate the model on `schedule`.
    pub fn bind<'a>(&'a self, schedule: &'a NoiseSchedule) -> BoundScores<'a> {
        let marginals = self.target().map(|t| {
            (1..=schedule.n()).map(|i| t.marginal_for_level(schedule.knot(i), schedule.neg_log_alpha_bar(i))).collect()
        });
        BoundScores { model: self, schedule, marginals }
    }
}

/// Wraps `model` so that its scores obey the growth bound. The
/// [`ClipVariant::TrueScore`] variant needs a model with an analytic target.
pub fn h2_clip(model: &ScoreModel, constants: H1Constants, variant: ClipVariant) -> Result<ScoreModel> {
    if variant == ClipVariant::TrueScore && model.target().is_none() {
        return Err(LabError::NoTargetForClip);
    }
    Ok(ScoreModel::Clipped { inner: Box::new(model.clone()), constants, variant })
}

/// A [`ScoreModel`] evaluated against a particular schedule.
#[derive(Clone, Debug)]
pub struct BoundScores<'a> {
    model: &'a ScoreModel,
    schedule: &'a NoiseSchedule,
    marginals: Option<Vec<MarginalLaw>>,
}

impl BoundScores<'_> {
    pub fn schedule(&self) -> &NoiseSchedule {
        self.schedule
    }

    /// Exact marginal `p_{t_i}`, when a target is attached.
    pub fn marginal(&self, i: usize) -> Option<&MarginalLaw> {
        self.marginals.as_ref().map(|m| &m[i - 1])
    }

    /// Writes `grad log p_{t_i}(x)` into `out`.
    pub fn true_score(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.marginal(i).ok_or(LabError::MissingData("analytic target"))?;
        m.score_into(x, out);
        Ok(())
    }

    /// Writes `s_i(x)` into `out`.
    pub fn s_i(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.eval(self.model, i, x, out);
    }

    fn eval(&self, model: &ScoreModel, i: usize, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match model {
            ScoreModel::Exact(_) => self.marginals.as_ref().expect("bound target")[i - 1].score_into(x, out),
            ScoreModel::Zero { .. } => out[..d].iter_mut().for_each(|v| *v = 0.0),
            ScoreModel::Perturbed { bias, noise, .. } => {
                self.marginals.as_ref().expect("bound target")[i - 1].score_into(x, out);
                for j in 0..d {
                    out[j] += bias[j];
                    if *noise != 0.0 {
                        out[j] += noise * (2.7 * x[j] + 1.3 * i as f64 + j as f64).sin();
                    }
                }
            }
            ScoreModel::Clipped { inner, constants, variant } => {
                self.eval(inner, i, x, out);
                let bound = growth_bound(constants, self.schedule.alpha_bar(i), norm(x));
                let size = norm(&out[..d]);
                if size > bound {
                    match variant {
                        ClipVariant::TrueScore => {
                            self.marginals.as_ref().expect("bound target")[i - 1].score_into(x, out)
                        }
                        ClipVariant::Projection => out[..d].iter_mut().for_each(|v| *v *= bound / size),
                    }
                }
            }
        }
    }

    /// Writes `z_i(x) = -sqrt(1 - abar_i) s_i(x)` into `out`.
    pub fn z_i(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.s_i(i, x, out);
        let c = -(-(-self.schedule.neg_log_alpha_bar(i)).exp_m1()).sqrt();
        out[..x.len()].iter_mut().for_each(|v| *v *= c);
    }

    /// Writes the interpolated `s(t, x) = (1 + sqrt(alpha_i))/2 s_i(x)` for
    /// `t` in `(t_{i-1}, t_i]`; `s(0, x) = 0`.
    pub fn s_at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if t <= 0.0 {
            out[..x.len()].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let i = self.schedule.interval_of(t);
        self.s_knot_scaled(i, x, out);
    }

    /// `s(t_i, x)`, the interpolated score at the right end of interval `i`.
    pub(crate) fn s_knot_scaled(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.s_i(i, x, out);
        let c = 0.5 * (1.0 + self.schedule.alpha(i).sqrt());
        out[..x.len()].iter_mut().for_each(|v| *v *= c);
    }
}

/// `B_i(x) = c0 / sqrt(abar_i) + c1 / abar_i |x|`.
pub fn growth_bound(constants: &H1Constants, alpha_bar: f64, x_norm: f64) -> f64 {
    constants.c0 / alpha_bar.sqrt() + constants.c1 / alpha_bar * x_norm
}
