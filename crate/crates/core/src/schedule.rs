//! Finite noise schedules and their continuous-time embedding.
//!
//! A schedule `{alpha_i}` on the grid `t_i = i / n` induces the piecewise linear
//! cumulative noise `G(t)` with knots `G(t_i) = -sum_{k<=i} log alpha_k` and the
//! piecewise constant rate `beta = G'`. All decay factors are computed from the
//! cached prefix sums of `-log alpha_i`; nothing here uses quadrature.

use crate::error::{LabError, Result};
use crate::io::fmt17;

/// Relative slack accepted when comparing a step against a band edge, so that
/// a schedule built to sit exactly on an edge passes with zero margin.
const BAND_REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    /// `cum[i] = -sum_{k<=i} log alpha_k`, with `cum[0] = 0`.
    cum: Vec<f64>,
}

/// Mean decay `m_{t,r}` and noise scale `sigma_{t,r}` of the forward kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeCoefficients {
    pub m: f64,
    pub s: f64,
}

impl BridgeCoefficients {
    pub fn variance(&self) -> f64 {
        self.s * self.s
    }
}

/// Outcome of [`NoiseSchedule::band_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct BandCheck {
    pub pass: bool,
    /// `log log log n` with natural logarithms.
    pub l3: f64,
    pub lower_edge: f64,
    pub upper_edge: f64,
    /// Per step: `(-log alpha_i - lower_edge, upper_edge - (-log alpha_i))`.
    pub margins: Vec<(f64, f64)>,
    /// Smallest margin over all steps and both edges.
    pub slack: f64,
    /// 1-based step attaining `slack`.
    pub worst_step: usize,
}

impl NoiseSchedule {
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(LabError::InvalidSchedule("n must be at least 1".into()));
        }
        if let Some((i, a)) = alphas.iter().enumerate().find(|(_, &a)| !(a > 0.0 && a < 1.0)) {
            return Err(LabError::InvalidSchedule(format!("alpha_{} = {a} is not in (0, 1)", i + 1)));
        }
        let mut cum = Vec::with_capacity(alphas.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &a in &alphas {
            acc += -a.ln();
            cum.push(acc);
        }
        Ok(Self { alphas, cum })
    }

    /// Variances `1 - alpha_i` spaced linearly from `v_start` to `v_end`.
    pub fn from_linear_variance(n: usize, v_start: f64, v_end: f64) -> Result<Self> {
        if n == 0 {
            return Err(LabError::InvalidSchedule("n must be at least 1".into()));
        }
        if !(v_start > 0.0 && v_start <= v_end && v_end < 1.0) {
            return Err(LabError::InvalidSchedule(format!("need 0 < v_start <= v_end < 1, got {v_start}, {v_end}")));
        }
        let alphas = (0..n)
            .map(|k| {
                let v = if n == 1 { v_start } else { v_start + (v_end - v_start) * k as f64 / (n - 1) as f64 };
                1.0 - v
            })
            .collect();
        Self::from_alphas(alphas)
    }

    /// The linear-variance schedule of Ho et al. (n = 1000, 1e-4 to 0.02).
    pub fn ho() -> Self {
        Self::from_linear_variance(1000, 1e-4, 0.02).expect("valid constants")
    }

    /// Ho-style linear variances rescaled by `1000 / n`, which keeps the total
    /// noise level of the 1000-step schedule at any step count.
    pub fn ho_scaled(n: usize) -> Result<Self> {
        let scale = 1000.0 / n as f64;
        Self::from_linear_variance(n, 1e-4 * scale, 0.02 * scale)
    }

    pub fn constant(n: usize, alpha: f64) -> Result<Self> {
        Self::from_alphas(vec![alpha; n])
    }

    /// Constant schedule with `-log alpha_bar_n = total`.
    pub fn constant_total(n: usize, total: f64) -> Result<Self> {
        if n == 0 || !(total > 0.0) {
            return Err(LabError::InvalidSchedule(format!("need n >= 1 and total > 0, got n = {n}, total = {total}")));
        }
        Self::constant(n, (-total / n as f64).exp())
    }

    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `alpha_i` for 1-based `i`.
    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i - 1]
    }

    /// `alpha_bar_i = prod_{k<=i} alpha_k` for `i` in `0..=n`.
    pub fn alpha_bar(&self, i: usize) -> f64 {
        (-self.cum[i]).exp()
    }

    /// `-log alpha_bar_i`.
    pub fn neg_log_alpha_bar(&self, i: usize) -> f64 {
        self.cum[i]
    }

    /// DDPM noise scale `sigma_i = sqrt((1 - alpha_i) / alpha_i)`.
    pub fn sigma(&self, i: usize) -> f64 {
        let a = self.alpha(i);
        ((1.0 - a) / a).sqrt()
    }

    pub fn alpha_min(&self) -> f64 {
        self.alphas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn knot(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    /// Knot index when `t` is a grid point (up to rounding of `t * n`).
    pub fn knot_index(&self, t: f64) -> Option<usize> {
        let x = t * self.n() as f64;
        let r = x.round();
        ((x - r).abs() <= 1e-9 * (1.0 + x.abs())).then_some(r as usize)
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(LabError::TimeOutOfRange { t })
        }
    }

    /// 1-based index `i` with `t` in `(t_{i-1}, t_i]`; `t = 0` maps to 1.
    pub fn interval_of(&self, t: f64) -> usize {
        let n = self.n();
        let i = match self.knot_index(t) {
            Some(k) => k,
            None => (t * n as f64).ceil() as usize,
        };
        i.clamp(1, n)
    }

    /// Rate `beta(t) = -n log alpha_i` on `(t_{i-1}, t_i]`, right-continuous at 0.
    pub fn beta(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.beta_on(self.interval_of(t)))
    }

    /// Rate on the `i`-th interval.
    pub fn beta_on(&self, i: usize) -> f64 {
        -(self.n() as f64) * self.alpha(i).ln()
    }

    /// Cumulative noise `G(t) = int_0^t beta`.
    pub fn integrated_beta(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.cum_unchecked(t))
    }

    pub(crate) fn cum_unchecked(&self, t: f64) -> f64 {
        if let Some(k) = self.knot_index(t) {
            return self.cum[k.min(self.n())];
        }
        let n = self.n();
        let x = t * n as f64;
        let j = (x.floor() as usize).min(n - 1);
        self.cum[j] + (x - j as f64) * (-self.alphas[j].ln())
    }

    /// `int_t^r beta`.
    pub fn beta_integral(&self, t: f64, r: f64) -> Result<f64> {
        Self::check_time(t)?;
        Self::check_time(r)?;
        if t > r {
            return Err(LabError::ReversedInterval { t, r });
        }
        Ok((self.cum_unchecked(r) - self.cum_unchecked(t)).max(0.0))
    }

    /// Forward kernel coefficients `m_{t,r} = exp(-1/2 int_t^r beta)` and
    /// `sigma_{t,r} = sqrt(1 - m^2)`.
    pub fn bridge(&self, t: f64, r: f64) -> Result<BridgeCoefficients> {
        let g = self.beta_integral(t, r)?;
        Ok(Self::coefficients(g))
    }

    /// Coefficients for an already integrated rate `g = int beta`.
    pub fn coefficients(g: f64) -> BridgeCoefficients {
        let m = (-0.5 * g).exp();
        let s = (-(-g).exp_m1()).max(0.0).sqrt();
        BridgeCoefficients { m, s }
    }

    /// Checks `g1 L3 / n <= -log alpha_i <= g2 L3 / n` for every step, with
    /// `L3 = log log log n`.
    pub fn band_check(&self, gamma1: f64, gamma2: f64) -> Result<BandCheck> {
        let n = self.n();
        if n < 16 {
            return Err(LabError::ScheduleTooShort(n));
        }
        if gamma1 > gamma2 {
            return Err(LabError::InvalidArgument(format!("gamma1 = {gamma1} exceeds gamma2 = {gamma2}")));
        }
        let l3 = (n as f64).ln().ln().ln();
        let lower_edge = gamma1 * l3 / n as f64;
        let upper_edge = gamma2 * l3 / n as f64;
        let margins: Vec<(f64, f64)> = self
            .alphas
            .iter()
            .map(|a| {
                let step = -a.ln();
                (step - lower_edge, upper_edge - step)
            })
            .collect();
        let mut slack = f64::INFINITY;
        let mut worst_step = 1;
        for (i, &(lo, hi)) in margins.iter().enumerate() {
            let m = lo.min(hi);
            if m < slack {
                slack = m;
                worst_step = i + 1;
            }
        }
        let pass = margins.iter().zip(&self.alphas).all(|(&(lo, hi), a)| {
            let tol = BAND_REL_TOL * (-a.ln());
            lo >= -tol && hi >= -tol
        });
        Ok(BandCheck { pass, l3, lower_edge, upper_edge, margins, slack, worst_step })
    }

    /// Plain-text form: `n=<count>` followed by one alpha per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("n={}\n", self.n());
        for &a in &self.alphas {
            s.push_str(&fmt17(a));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let head = lines.next().ok_or_else(|| LabError::Parse("empty schedule file".into()))?;
        let n: usize = head
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| LabError::Parse(format!("expected `n=<count>`, got `{head}`")))?;
        let alphas = lines
            .map(|l| l.parse::<f64>().map_err(|_| LabError::Parse(format!("bad alpha `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        if alphas.len() != n {
            return Err(LabError::Parse(format!("header declares {n} alphas, found {}", alphas.len())));
        }
        Self::from_alphas(alphas)
    }
}
