//! Shared-precision Gaussian mixture targets and their closed-form marginals.
//!
//! A target `sum_k w_k N(mu_k, Q^{-1})` has the Gibbs form
//! `exp(-x'Qx/2 - U(x))` with `U` smooth and bounded in its derivatives. Under
//! the forward Ornstein-Uhlenbeck kernel the time-`t` law stays a mixture with
//! means `m mu_k` and shared covariance `m^2 Q^{-1} + sigma^2 I`, so density,
//! score, Hessian and third derivatives of `log p_t` are all available in
//! closed form.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LabError, Result};
use crate::grid::GridSpec;
use crate::io::fmt17;
use crate::rng::PathStream;
use crate::schedule::{BridgeCoefficients, NoiseSchedule};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Time step of the centered differences used by residual checks.
pub const RESIDUAL_DT: f64 = 1e-6;

/// Gaussian mixture with one covariance shared by all components.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    d: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    /// Component means, `K x d` row-major.
    means: Vec<f64>,
    /// Eigenvalues of the shared covariance.
    cov_eigvals: Vec<f64>,
    /// Shared precision, `d x d` row-major.
    precision: Vec<f64>,
    /// Symmetric square root of the covariance.
    sqrt_cov: Vec<f64>,
    /// `-(d log 2pi + log det cov) / 2`.
    log_norm: f64,
    /// `P mu_k`, `K x d`.
    pm: Vec<f64>,
    /// `mu_k' P mu_k / 2`.
    half_mpm: Vec<f64>,
}

/// Derivatives of `log p` at a point, up to third order.
#[derive(Clone, Debug)]
pub struct LogDerivatives {
    pub score: Vec<f64>,
    /// `d x d` row-major Hessian.
    pub hessian: Vec<f64>,
    /// `d x d x d` third derivatives, index `(i * d + j) * d + l`.
    pub third: Vec<f64>,
}

impl GaussianMixture {
    /// Builds the mixture from a covariance given by eigenvalues and
    /// column-major orthonormal eigenvectors.
    fn from_eigen(weights: Vec<f64>, means: Vec<f64>, cov_eigvals: Vec<f64>, eigvecs: &[f64]) -> Self {
        let d = cov_eigvals.len();
        let k = weights.len();
        let compose = |f: &dyn Fn(f64) -> f64| {
            let mut m = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for (e, &c) in cov_eigvals.iter().enumerate() {
                        acc += eigvecs[e * d + i] * f(c) * eigvecs[e * d + j];
                    }
                    m[i * d + j] = acc;
                }
            }
            m
        };
        let precision = compose(&|c| 1.0 / c);
        let sqrt_cov = compose(&|c: f64| c.sqrt());
        let log_norm = -0.5 * (d as f64 * LN_2PI + cov_eigvals.iter().map(|c| c.ln()).sum::<f64>());
        let mut pm = vec![0.0; k * d];
        let mut half_mpm = vec![0.0; k];
        for c in 0..k {
            let mu = &means[c * d..(c + 1) * d];
            for i in 0..d {
                pm[c * d + i] = (0..d).map(|j| precision[i * d + j] * mu[j]).sum();
            }
            half_mpm[c] = 0.5 * (0..d).map(|i| mu[i] * pm[c * d + i]).sum::<f64>();
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Self { d, weights, log_weights, means, cov_eigvals, precision, sqrt_cov, log_norm, pm, half_mpm }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.d..(k + 1) * self.d]
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    /// Largest eigenvalue of the shared covariance.
    pub fn max_variance(&self) -> f64 {
        self.cov_eigvals.iter().copied().fold(0.0, f64::max)
    }

    /// Largest Euclidean norm of a component mean.
    pub fn max_mean_norm(&self) -> f64 {
        (0..self.components()).map(|k| norm(self.mean(k))).fold(0.0, f64::max)
    }

    #[inline]
    fn logit(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.d;
        let mut dot = 0.0;
        for i in 0..d {
            dot += x[i] * self.pm[k * d + i];
        }
        self.log_weights[k] + dot - self.half_mpm[k]
    }

    #[inline]
    fn quad(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision[i * d + j] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    fn max_logit(&self, x: &[f64]) -> f64 {
        (0..self.components()).map(|k| self.logit(k, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mx = self.max_logit(x);
        let s: f64 = (0..self.components()).map(|k| (self.logit(k, x) - mx).exp()).sum();
        self.log_norm - 0.5 * self.quad(x) + mx + s.ln()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Posterior component weights `pi_k(x)`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mx = self.max_logit(x);
        let mut p: Vec<f64> = (0..self.components()).map(|k| (self.logit(k, x) - mx).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    /// Writes `grad log p(x) = sum_k pi_k(x) P (mu_k - x)` into `out`.
    #[inline]
    pub fn score_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mx = self.max_logit(x);
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for k in 0..self.components() {
            let w = (self.logit(k, x) - mx).exp();
            total += w;
            for i in 0..d {
                out[i] += w * self.pm[k * d + i];
            }
        }
        for i in 0..d {
            let mut px = 0.0;
            for j in 0..d {
                px += self.precision[i * d + j] * x[j];
            }
            out[i] = out[i] / total - px;
        }
    }

    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.score_into(x, &mut out);
        out
    }

    /// `grad^2 log p(x) = -P + Cov_pi(P mu_k)`.
    pub fn hessian_log(&self, x: &[f64]) -> Vec<f64> {
        self.log_derivatives_to(x, 2).hessian
    }

    /// Score and Hessian only; `third` is left empty.
    pub fn score_and_hessian(&self, x: &[f64]) -> LogDerivatives {
        self.log_derivatives_to(x, 2)
    }

    /// Score, Hessian and third derivatives of `log p`. The third derivative
    /// of a shared-covariance mixture is the third central moment of
    /// `P mu_k` under the posterior weights.
    pub fn log_derivatives(&self, x: &[f64]) -> LogDerivatives {
        self.log_derivatives_to(x, 3)
    }

    fn log_derivatives_to(&self, x: &[f64], order: usize) -> LogDerivatives {
        let d = self.d;
        let post = self.posterior(x);
        let mut mean_a = vec![0.0; d];
        for (k, &p) in post.iter().enumerate() {
            for i in 0..d {
                mean_a[i] += p * self.pm[k * d + i];
            }
        }
        let mut score = mean_a.clone();
        for i in 0..d {
            for j in 0..d {
                score[i] -= self.precision[i * d + j] * x[j];
            }
        }
        let mut hessian: Vec<f64> = self.precision.iter().map(|v| -v).collect();
        let mut third = vec![0.0; if order >= 3 { d * d * d } else { 0 }];
        let mut c = vec![0.0; d];
        for (k, &p) in post.iter().enumerate() {
            for i in 0..d {
                c[i] = self.pm[k * d + i] - mean_a[i];
            }
            for i in 0..d {
                for j in 0..d {
                    hessian[i * d + j] += p * c[i] * c[j];
                    if order >= 3 {
                        for l in 0..d {
                            third[(i * d + j) * d + l] += p * c[i] * c[j] * c[l];
                        }
                    }
                }
            }
        }
        LogDerivatives { score, hessian, third }
    }

    /// `E|X|^2 = sum_k w_k |mu_k|^2 + tr(Sigma)`.
    pub fn second_moment(&self) -> f64 {
        let means: f64 = (0..self.components()).map(|k| self.weights[k] * norm_sq(self.mean(k))).sum();
        means + self.cov_eigvals.iter().sum::<f64>()
    }

    /// Mean vector `sum_k w_k mu_k`.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for k in 0..self.components() {
            for i in 0..self.d {
                m[i] += self.weights[k] * self.means[k * self.d + i];
            }
        }
        m
    }

    /// Draws one sample: a uniform for the component, then `d` normals.
    pub fn sample_into(&self, stream: &mut PathStream, out: &mut [f64]) {
        let d = self.d;
        let u = stream.uniform();
        let mut acc = 0.0;
        let mut comp = self.components() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = k;
                break;
            }
        }
        let mut z = [0.0; 8];
        let mut zv;
        let z: &mut [f64] = if d <= 8 {
            &mut z[..d]
        } else {
            zv = vec![0.0; d];
            &mut zv
        };
        stream.fill_normal(z);
        for i in 0..d {
            let mut v = self.means[comp * d + i];
            for j in 0..d {
                v += self.sqrt_cov[i * d + j] * z[j];
            }
            out[i] = v;
        }
    }

    /// 1-D cumulative distribution function.
    pub fn cdf_1d(&self, x: f64) -> f64 {
        assert_eq!(self.d, 1, "cdf_1d needs a one-dimensional mixture");
        let sd = self.cov_eigvals[0].sqrt();
        (0..self.components()).map(|k| self.weights[k] * normal_cdf((x - self.means[k]) / sd)).sum()
    }

    /// Marginal law of coordinate `axis` as `(weights, means, sd)`.
    pub fn axis_marginal(&self, axis: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let d = self.d;
        // covariance entry (axis, axis) = sum_e v_e[axis]^2 c_e
        let var: f64 = (0..d).map(|j| self.sqrt_cov[axis * d + j] * self.sqrt_cov[j * d + axis]).sum();
        let means = (0..self.components()).map(|k| self.means[k * d + axis]).collect();
        (self.weights.clone(), means, var.sqrt())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

/// Constants of the growth condition on the data score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H1Constants {
    pub c0: f64,
    pub c1: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Data distribution `sum_k w_k N(mu_k, Q^{-1})`.
#[derive(Clone, Debug)]
pub struct MixtureTarget {
    q: Vec<f64>,
    q_eigvals: Vec<f64>,
    /// Column-major eigenvectors of `Q`.
    q_eigvecs: Vec<f64>,
    weights: Vec<f64>,
    means: Vec<f64>,
    data: GaussianMixture,
}

/// Time-`t` law of the forward process started from a [`MixtureTarget`].
#[derive(Clone, Debug)]
pub struct MarginalLaw {
    pub t: f64,
    pub coeffs: BridgeCoefficients,
    mixture: GaussianMixture,
}

impl Deref for MarginalLaw {
    type Target = GaussianMixture;
    fn deref(&self) -> &GaussianMixture {
        &self.mixture
    }
}

impl Deref for MixtureTarget {
    type Target = GaussianMixture;
    fn deref(&self) -> &GaussianMixture {
        &self.data
    }
}

/// Max and root-mean-square of a residual field over a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualStats {
    pub max: f64,
    pub rms: f64,
    /// Magnitude used to scale tolerances (max density or max |u|).
    pub scale: f64,
}

impl MixtureTarget {
    /// `weights` sum to one, `means` is `K x d` row-major, `q` is `d x d`
    /// row-major symmetric positive definite.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(LabError::InvalidTarget("no components".into()));
        }
        let d2 = q.len();
        let d = (d2 as f64).sqrt().round() as usize;
        if d == 0 || d * d != d2 {
            return Err(LabError::InvalidTarget(format!("Q has {d2} entries, not a square")));
        }
        if means.len() != k * d {
            return Err(LabError::DimensionMismatch { expected: k * d, got: means.len() });
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(LabError::InvalidTarget("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LabError::InvalidTarget(format!("weights sum to {total}")));
        }
        if means.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(LabError::InvalidTarget("non-finite entries".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (q[i * d + j] - q[j * d + i]).abs() > 1e-12 {
                    return Err(LabError::InvalidTarget("Q is not symmetric".into()));
                }
            }
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &q));
        let q_eigvals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if q_eigvals.iter().any(|&l| !(l > 0.0)) {
            return Err(LabError::InvalidTarget("Q is not positive definite".into()));
        }
        let q_eigvecs: Vec<f64> = eig.eigenvectors.as_slice().to_vec();
        let cov: Vec<f64> = q_eigvals.iter().map(|l| 1.0 / l).collect();
        let data = GaussianMixture::from_eigen(weights.clone(), means.clone(), cov, &q_eigvecs);
        Ok(Self { q, q_eigvals, q_eigvecs, weights, means, data })
    }

    /// `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        Self::shifted(vec![0.0; d])
    }

    /// `N(mu0, I)`.
    pub fn shifted(mu0: Vec<f64>) -> Self {
        let d = mu0.len();
        Self::new(vec![1.0], mu0, identity(d)).expect("valid Gaussian")
    }

    /// `1/2 N(-a, 1) + 1/2 N(a, 1)`.
    pub fn symmetric_pair(a: f64) -> Self {
        Self::new(vec![0.5, 0.5], vec![-a, a], vec![1.0]).expect("valid mixture")
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn component_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component_means(&self) -> &[f64] {
        &self.means
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.data
    }

    /// Law of `m x_0 + s Z` for the given kernel coefficients.
    pub fn marginal(&self, t: f64, coeffs: BridgeCoefficients) -> MarginalLaw {
        let BridgeCoefficients { m, s } = coeffs;
        let cov: Vec<f64> = self.q_eigvals.iter().map(|l| m * m / l + s * s).collect();
        let means = self.means.iter().map(|v| m * v).collect();
        let mixture = GaussianMixture::from_eigen(self.weights.clone(), means, cov, &self.q_eigvecs);
        MarginalLaw { t, coeffs, mixture }
    }

    /// Exact law `p_t` of the forward process at time `t`.
    pub fn marginal_at(&self, schedule: &NoiseSchedule, t: f64) -> Result<MarginalLaw> {
        let coeffs = schedule.bridge(0.0, t)?;
        Ok(self.marginal(t, coeffs))
    }

    /// Marginal for a cumulative noise level `g = int_0^t beta`.
    pub(crate) fn marginal_for_level(&self, t: f64, g: f64) -> MarginalLaw {
        self.marginal(t, NoiseSchedule::coefficients(g))
    }

    /// Conservative constants for the growth condition:
    /// `|grad log p + Qx| <= |Q| max_k |mu_k|` and
    /// `|grad^2 log p| <= |Q| + |Q|^2 spread^2`, where `spread` is the largest
    /// pairwise distance between means. `c0` bounds their sum; `c1` is
    /// `1.1 lambda_max(Q)`.
    pub fn h1_constants(&self) -> H1Constants {
        let qf = norm(&self.q);
        let d = self.data.dim();
        let k = self.weights.len();
        let max_mean = self.data.max_mean_norm();
        let mut spread: f64 = 0.0;
        for a in 0..k {
            for b in 0..a {
                let diff: Vec<f64> = (0..d).map(|i| self.means[a * d + i] - self.means[b * d + i]).collect();
                spread = spread.max(norm(&diff));
            }
        }
        let shift_bound = qf * max_mean;
        let hess_bound = qf + qf * qf * spread * spread;
        let lambda_max = self.q_eigvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lambda_min = self.q_eigvals.iter().copied().fold(f64::INFINITY, f64::min);
        H1Constants { c0: shift_bound + hess_bound, c1: 1.1 * lambda_max, lambda_min, lambda_max }
    }

    /// Default evaluation box half-width `max_k |mu_k| + 6 sigma_max`, where
    /// `sigma_max` covers both the data and the unit-variance terminal law.
    pub fn default_half_width(&self) -> f64 {
        let sd = self.data.max_variance().max(1.0).sqrt();
        self.data.max_mean_norm() + 6.0 * sd
    }

    /// Uniform grid with `n` nodes per axis over the default box.
    pub fn default_grid(&self, n: usize) -> Result<GridSpec> {
        GridSpec::centered(self.data.dim(), self.default_half_width(), n)
    }

    /// Residual of the forward Kolmogorov equation
    /// `d_t p = beta/2 sum_j d_j(y_j p) + beta/2 Lap p` at an interior time.
    pub fn fokker_planck_residual(&self, schedule: &NoiseSchedule, t: f64, grid: &GridSpec) -> Result<ResidualStats> {
        let d = self.data.dim();
        if grid.dim() != d {
            return Err(LabError::DimensionMismatch { expected: d, got: grid.dim() });
        }
        let dt = RESIDUAL_DT;
        interior_check(schedule, t, dt)?;
        let beta = schedule.beta(t)?;
        let here = self.marginal_at(schedule, t)?;
        let plus = self.marginal_at(schedule, t + dt)?;
        let minus = self.marginal_at(schedule, t - dt)?;
        let (mut max, mut sq, mut scale) = (0.0f64, 0.0, 0.0f64);
        grid.for_each_point(|_, y| {
            let p = here.density(y);
            let dp_dt = (plus.density(y) - minus.density(y)) / (2.0 * dt);
            let der = here.log_derivatives_to(y, 2);
            let y_grad: f64 = (0..d).map(|j| y[j] * der.score[j]).sum::<f64>() * p;
            let lap = p * ((0..d).map(|j| der.hessian[j * d + j]).sum::<f64>() + norm_sq(&der.score));
            let r = dp_dt - 0.5 * beta * (d as f64 * p + y_grad) - 0.5 * beta * lap;
            max = max.max(r.abs());
            sq += r * r;
            scale = scale.max(p);
        });
        Ok(ResidualStats { max, rms: (sq / grid.len() as f64).sqrt(), scale })
    }

    /// Plain-text block: `d=`, `K=`, one `w,mu_1,...,mu_d` line per
    /// component, then `d` row-major lines of `Q`.
    pub fn to_text(&self) -> String {
        let d = self.data.dim();
        let mut s = format!("d={d}\nK={}\n", self.weights.len());
        for k in 0..self.weights.len() {
            let mut fields = vec![fmt17(self.weights[k])];
            fields.extend(self.means[k * d..(k + 1) * d].iter().map(|&v| fmt17(v)));
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        for i in 0..d {
            let row: Vec<String> = self.q[i * d..(i + 1) * d].iter().map(|&v| fmt17(v)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| LabError::Parse(format!("missing `{key}=`")))?;
            line.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| LabError::Parse(format!("expected `{key}=<int>`, got `{line}`")))
        };
        let d = header("d")?;
        let k = header("K")?;
        let parse_row = |line: Option<&str>, len: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| LabError::Parse("truncated target block".into()))?;
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|_| LabError::Parse(format!("bad number in `{line}`"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != len {
                return Err(LabError::Parse(format!("expected {len} fields in `{line}`")));
            }
            Ok(row)
        };
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k * d);
        for _ in 0..k {
            let row = parse_row(lines.next(), d + 1)?;
            weights.push(row[0]);
            means.extend_from_slice(&row[1..]);
        }
        let mut q = Vec::with_capacity(d * d);
        for _ in 0..d {
            q.extend(parse_row(lines.next(), d)?);
        }
        if lines.next().is_some() {
            return Err(LabError::Parse("trailing lines after Q".into()));
        }
        Self::new(weights, means, q)
    }
}

/// Rejects `t` when `[t - dt, t + dt]` touches a schedule knot or leaves `[0, 1]`.
pub(crate) fn interior_check(schedule: &NoiseSchedule, t: f64, dt: f64) -> Result<()> {
    if !(t - dt > 0.0 && t + dt < 1.0) {
        return Err(LabError::KnotTime { t, dt });
    }
    let n = schedule.n() as f64;
    let lo = ((t - dt) * n).floor();
    let hi = ((t + dt) * n).floor();
    if lo != hi || schedule.knot_index(t - dt).is_some() || schedule.knot_index(t + dt).is_some() {
        return Err(LabError::KnotTime { t, dt });
    }
    Ok(())
}

pub(crate) fn identity(d: usize) -> Vec<f64> {
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        q[i * d + i] = 1.0;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd_score(m: &GaussianMixture, x: &[f64], h: f64) -> Vec<f64> {
        let d = x.len();
        (0..d)
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (m.log_density(&a) - m.log_density(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn two_d_target() -> MixtureTarget {
        MixtureTarget::new(vec![0.3, 0.5, 0.2], vec![-1.5, 0.5, 2.0, 1.0, 0.0, -2.0], vec![1.3, 0.4, 0.4, 0.8]).unwrap()
    }

    #[test]
    fn standard_gaussian_score_and_hessian() {
        let t = MixtureTarget::standard(2);
        let x = [0.7, -1.2];
        let s = t.score(&x);
        assert!((s[0] + 0.7).abs() < 1e-15 && (s[1] - 1.2).abs() < 1e-15);
        let h = t.hessian_log(&x);
        assert_eq!(h, vec![-1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn symmetric_pair_values() {
        let t = MixtureTarget::symmetric_pair(2.0);
        assert!(t.score(&[0.0])[0].abs() < 1e-15);
        assert!((t.hessian_log(&[0.0])[0] - 3.0).abs() < 1e-12);
        let fd = fd_score(&t, &[1.0], 1e-5)[0];
        let s = t.score(&[1.0])[0];
        assert!(((s - fd) / s).abs() < 1e-6, "{s} vs {fd}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let t = two_d_target();
        let m = t.marginal(0.4, NoiseSchedule::coefficients(0.7));
        for mix in [&*t, &*m] {
            for x in [[0.3, -0.2], [2.0, 1.5], [-3.0, 0.4]] {
                let s = mix.score(&x);
                let fd = fd_score(mix, &x, 1e-5);
                for i in 0..2 {
                    assert!((s[i] - fd[i]).abs() < 1e-5 * (1.0 + s[i].abs()));
                }
                let der = mix.log_derivatives(&x);
                let h = 1e-5;
                for l in 0..2 {
                    let mut a = x;
                    let mut b = x;
                    a[l] += h;
                    b[l] -= h;
                    let sa = mix.log_derivatives(&a);
                    let sb = mix.log_derivatives(&b);
                    for i in 0..2 {
                        let fd_h = (sa.score[i] - sb.score[i]) / (2.0 * h);
                        assert!((der.hessian[i * 2 + l] - fd_h).abs() < 1e-5);
                        for j in 0..2 {
                            let fd_t = (sa.hessian[i * 2 + j] - sb.hessian[i * 2 + j]) / (2.0 * h);
                            assert!((der.third[(i * 2 + j) * 2 + l] - fd_t).abs() < 1e-5);
                        }
                    }
                }
                let h = der.hessian;
                assert!((h[1] - h[2]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn density_normalizes() {
        let t = two_d_target();
        let g = GridSpec::centered(2, 12.0, 401).unwrap();
        assert!((g.integrate(|x| t.density(x)) - 1.0).abs() < 1e-8);
        let t1 = MixtureTarget::new(vec![0.25, 0.75], vec![-1.0, 3.0], vec![2.0]).unwrap();
        let g1 = t1.default_grid(2001).unwrap();
        assert!((g1.integrate(|x| t1.density(x)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn marginal_gaussian_cases() {
        let s = NoiseSchedule::from_linear_variance(20, 0.01, 0.3).unwrap();
        let std = MixtureTarget::standard(1);
        let shifted = MixtureTarget::shifted(vec![1.5]);
        for t in [0.1, 0.55, 1.0] {
            let p = std.marginal_at(&s, t).unwrap();
            assert!((p.density(&[0.3]) - (-0.045f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
            let m = s.bridge(0.0, t).unwrap().m;
            let q = shifted.marginal_at(&s, t).unwrap();
            assert!((q.mean(0)[0] - 1.5 * m).abs() < 1e-15);
            assert!((q.max_variance() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn marginal_matches_quadrature_convolution() {
        let s = NoiseSchedule::from_linear_variance(50, 1e-3, 0.05).unwrap();
        let t = MixtureTarget::new(vec![0.4, 0.6], vec![-2.0, 1.5], vec![1.7]).unwrap();
        let b = s.bridge(0.0, 1.0).unwrap();
        let p1 = t.marginal_at(&s, 1.0).unwrap();
        let xs = GridSpec::centered(1, 14.0, 8001).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=60 {
            let y = -9.0 + 0.3 * k as f64;
            let conv = xs.integrate(|x| {
                let z = (y - b.m * x[0]) / b.s;
                t.density(x) * (-0.5 * z * z).exp() / (b.s * (2.0 * std::f64::consts::PI).sqrt())
            });
            worst = worst.max((conv - p1.density(&[y])).abs());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn posterior_sums_to_one() {
        let t = two_d_target();
        for x in [[0.0, 0.0], [10.0, -10.0], [-40.0, 3.0]] {
            let p = t.posterior(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn h1_constant_values() {
        let g = MixtureTarget::standard(1).h1_constants();
        assert_eq!(g.c0, 1.0);
        assert!((g.c1 - 1.1).abs() < 1e-15);
        let diag = MixtureTarget::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 4.0]).unwrap();
        assert!((diag.h1_constants().c1 - 4.4).abs() < 1e-12);
        let pair = MixtureTarget::symmetric_pair(2.0).h1_constants();
        assert_eq!(pair.c0, 19.0);
    }

    #[test]
    fn h1_constants_dominate_grid_suprema() {
        let targets = [
            MixtureTarget::symmetric_pair(2.0),
            MixtureTarget::shifted(vec![2.0]),
            MixtureTarget::new(vec![0.4, 0.6], vec![-2.0, 1.5], vec![1.7]).unwrap(),
        ];
        for t in &targets {
            let c = t.h1_constants();
            let grid = GridSpec::centered(1, 10.0, 4001).unwrap();
            let q = t.q()[0];
            let mut sup: f64 = 0.0;
            grid.for_each_point(|_, x| {
                let der = t.log_derivatives(x);
                sup = sup.max(der.hessian[0].abs() + (der.score[0] + q * x[0]).abs());
            });
            assert!(sup <= c.c0 * (1.0 + 1e-12), "sup {sup} > c0 {}", c.c0);
        }
    }

    #[test]
    fn fokker_planck_residuals() {
        let s = NoiseSchedule::from_linear_variance(10, 0.02, 0.2).unwrap();
        let t = 0.43;
        let std = MixtureTarget::standard(1);
        let g = std.default_grid(801).unwrap();
        let r = std.fokker_planck_residual(&s, t, &g).unwrap();
        assert!(r.max <= 1e-6 * r.scale, "{r:?}");
        let sh = MixtureTarget::shifted(vec![1.2]);
        let r = sh.fokker_planck_residual(&s, t, &g).unwrap();
        assert!(r.max <= 1e-6 * r.scale, "{r:?}");
        let mix = MixtureTarget::symmetric_pair(2.0);
        let r = mix.fokker_planck_residual(&s, t, &mix.default_grid(2001).unwrap()).unwrap();
        assert!(r.max <= 1e-5 * r.scale, "{r:?}");
        let two = two_d_target();
        let r = two.fokker_planck_residual(&s, 0.77, &two.default_grid(121).unwrap()).unwrap();
        assert!(r.max <= 1e-5 * r.scale, "{r:?}");
        assert!(mix.fokker_planck_residual(&s, 0.3, &g).is_err());
        assert!(mix.fokker_planck_residual(&s, 0.3 + 5e-7, &g).is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = two_d_target();
        let back = MixtureTarget::from_text(&t.to_text()).unwrap();
        assert_eq!(back.q(), t.q());
        assert_eq!(back.component_means(), t.component_means());
        assert!(MixtureTarget::from_text("d=1\nK=1\n1,0\n").is_err());
        assert!(MixtureTarget::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![-1.0]).is_err());
        assert!(MixtureTarget::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 0.5, 0.2, 1.0]).is_err());
    }

    #[test]
    fn sampling_moments() {
        let t = two_d_target();
        let n = 100_000;
        let mut m = [0.0; 2];
        let mut sq = 0.0;
        let mut x = [0.0; 2];
        for p in 0..n {
            let mut s = PathStream::new(3, p);
            t.sample_into(&mut s, &mut x);
            m[0] += x[0];
            m[1] += x[1];
            sq += norm_sq(&x);
        }
        let mean = t.mean_vector();
        for i in 0..2 {
            assert!((m[i] / n as f64 - mean[i]).abs() < 0.03);
        }
        assert!((sq / n as f64 - t.second_moment()).abs() / t.second_moment() < 0.02);
    }

    proptest! {
        #[test]
        fn score_growth_bound_holds(a in 0.0f64..3.0, x in -15.0f64..15.0, g in 0.0f64..6.0) {
            let t = MixtureTarget::symmetric_pair(a);
            let c = t.h1_constants();
            let coeffs = NoiseSchedule::coefficients(g);
            let p = t.marginal(0.5, coeffs);
            let bound = c.c0 / coeffs.m + c.c1 / (coeffs.m * coeffs.m) * x.abs();
            prop_assert!(p.score(&[x])[0].abs() <= bound);
        }
    }
}
