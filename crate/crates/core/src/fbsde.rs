//! Backward representation of the score along the reverse process.
//!
//! Along an exact-score reverse path, `Y_t = grad log p_{1-t}(X_t)` and
//! `Z_t = sqrt(beta_{1-t}) grad^2 log p_{1-t}(X_t)`. The backward equation is
//! checked through its integrated residual
//!
//! `R = Y_1 - Y_t - sign * 1/2 int_t^1 beta_{1-r} Y_r dr - int_t^1 Z_r dW_r`
//!
//! with left-point sums on the simulation grid. Both signs of the drift term
//! are evaluated; which one vanishes as the grid is refined is an output.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::grid::GridSpec;
use crate::io::CsvTable;
use crate::rng::PathStream;
use crate::schedule::NoiseSchedule;
use crate::simulate::{ReverseKernel, ScoreMode, StepVisitor, TrajectoryBatch};
use crate::target::{interior_check, norm, norm_sq, MarginalLaw, MixtureTarget, ResidualStats, RESIDUAL_DT};

/// Fewest paths accepted by the regression mode of [`yast_check`].
pub const MIN_REGRESSION_PATHS: usize = 10_000;

/// `A(s) = int_0^{1-s} beta`.
pub fn a_weight(schedule: &NoiseSchedule, s: f64) -> f64 {
    schedule.cum_unchecked(1.0 - s)
}

/// `f(t) = e^{A(t)/2} / (e^{A(t)} - 1)`.
pub fn f_weight(schedule: &NoiseSchedule, t: f64) -> f64 {
    let a = a_weight(schedule, t);
    (0.5 * a).exp() / a.exp_m1()
}

/// `g(r) = beta_{1-r} e^{A(r)/2}` with `beta_{1-r}` supplied by the caller
/// (it is piecewise constant on the simulation grid).
pub fn g_weight(schedule: &NoiseSchedule, beta: f64, r: f64) -> f64 {
    beta * (0.5 * a_weight(schedule, r)).exp()
}

/// One row of a residual report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRow {
    pub t_index: usize,
    pub t: f64,
    pub sign: i32,
    pub rms: f64,
    pub max: f64,
    pub paths: usize,
    pub substeps: usize,
}

/// Residual CSV with header `t_index,t,sign,rms,max,paths,substeps`.
pub fn residual_table(rows: &[ResidualRow]) -> CsvTable {
    let mut t = CsvTable::new(&["t_index", "t", "sign", "rms", "max", "paths", "substeps"]);
    for r in rows {
        t.push(vec![
            r.t_index.into(),
            r.t.into(),
            r.sign.into(),
            r.rms.into(),
            r.max.into(),
            r.paths.into(),
            r.substeps.into(),
        ]);
    }
    t
}

/// Per-path pieces of the residual at a set of start indices.
struct BsdeVisitor<'a> {
    kernel: &'a ReverseKernel<'a>,
    target: &'a MixtureTarget,
    /// Sorted start indices.
    starts: &'a [usize],
    d: usize,
}

#[derive(Clone, Debug)]
struct BsdePath {
    /// `Y`, drift prefix and martingale prefix at each start index.
    y: Vec<f64>,
    drift: Vec<f64>,
    mart: Vec<f64>,
    next: usize,
    drift_sum: Vec<f64>,
    mart_sum: Vec<f64>,
    /// `int |Z|_F^2 dt`.
    energy: f64,
    y_end: Vec<f64>,
}

impl BsdeVisitor<'_> {
    fn record(&self, st: &mut BsdePath, k: usize, y: &[f64]) {
        while st.next < self.starts.len() && self.starts[st.next] == k {
            st.y.extend_from_slice(y);
            st.drift.extend_from_slice(&st.drift_sum);
            st.mart.extend_from_slice(&st.mart_sum);
            st.next += 1;
        }
    }
}

impl StepVisitor for BsdeVisitor<'_> {
    type State = BsdePath;

    fn start(&self, _: &[f64]) -> BsdePath {
        let n = self.starts.len() * self.d;
        BsdePath {
            y: Vec::with_capacity(n),
            drift: Vec::with_capacity(n),
            mart: Vec::with_capacity(n),
            next: 0,
            drift_sum: vec![0.0; self.d],
            mart_sum: vec![0.0; self.d],
            energy: 0.0,
            y_end: vec![],
        }
    }

    fn step(&self, st: &mut BsdePath, k: usize, x: &[f64], dw: &[f64], x_next: &[f64]) {
        let d = self.d;
        let law = self.kernel.marginal(k).expect("exact-score kernel");
        let der = law.score_and_hessian(x);
        self.record(st, k, &der.score);
        let beta = self.kernel.beta(k);
        let dt = self.kernel.dt();
        let sb = beta.sqrt();
        for i in 0..d {
            st.drift_sum[i] += 0.5 * beta * der.score[i] * dt;
            let mut zdw = 0.0;
            for j in 0..d {
                zdw += der.hessian[i * d + j] * dw[j];
            }
            st.mart_sum[i] += sb * zdw;
        }
        st.energy += beta * norm_sq(&der.hessian) * dt;
        if k + 1 == self.kernel.steps() {
            let y1 = self.target.score(x_next);
            self.record(st, k + 1, &y1);
            st.y_end = y1;
        }
    }
}

/// Residual curves of the backward equation for both drift signs.
#[derive(Clone, Debug)]
pub struct BsdeCurve {
    /// Rows for sign `-1` and `+1` at every start index.
    pub rows: Vec<ResidualRow>,
    /// RMS of `1/2 int_t^1 beta Y dr` at each start index.
    pub drift_rms: Vec<f64>,
    /// Mean and standard error of `int_0^1 |Z|_F^2 dt`.
    pub energy: (f64, f64),
    pub diverged: usize,
}

impl BsdeCurve {
    pub fn row(&self, t_index: usize, sign: i32) -> Option<&ResidualRow> {
        self.rows.iter().find(|r| r.t_index == t_index && r.sign == sign)
    }
}

fn summarize(
    kernel: &ReverseKernel<'_>,
    starts: &[usize],
    d: usize,
    substeps: usize,
    paths: &[BsdePath],
    diverged: usize,
) -> BsdeCurve {
    let n = paths.len();
    let mut rows = Vec::new();
    let mut drift_rms = Vec::new();
    for (s, &k0) in starts.iter().enumerate() {
        let t = kernel.time(k0.min(kernel.steps())).min(1.0);
        for sign in [-1i32, 1] {
            let (mut sq, mut max) = (0.0f64, 0.0f64);
            for p in paths {
                let mut r2 = 0.0;
                for i in 0..d {
                    let drift = p.drift_sum[i] - p.drift[s * d + i];
                    let mart = p.mart_sum[i] - p.mart[s * d + i];
                    let r = p.y_end[i] - p.y[s * d + i] - sign as f64 * drift - mart;
                    r2 += r * r;
                }
                sq += r2;
                max = max.max(r2.sqrt());
            }
            rows.push(ResidualRow { t_index: k0, t, sign, rms: (sq / n as f64).sqrt(), max, paths: n, substeps });
        }
        let dsq: f64 =
            paths.iter().map(|p| (0..d).map(|i| (p.drift_sum[i] - p.drift[s * d + i]).powi(2)).sum::<f64>()).sum();
        drift_rms.push((dsq / n as f64).sqrt());
    }
    let e: Vec<f64> = paths.iter().map(|p| p.energy).collect();
    let mean = e.iter().sum::<f64>() / n as f64;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    BsdeCurve { rows, drift_rms, energy: (mean, (var / n as f64).sqrt()), diverged }
}

fn check_starts(starts: &[usize], steps: usize) -> Result<Vec<usize>> {
    let mut s = starts.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.last().is_some_and(|&k| k > steps) {
        return Err(LabError::InvalidArgument(format!("t_index beyond {steps} steps")));
    }
    Ok(s)
}

/// Streams fresh exact-score reverse paths and evaluates the residual at
/// every index in `starts`, for both signs.
pub fn bsde_residual_curve(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    substeps: usize,
    paths: usize,
    seed: u64,
    starts: &[usize],
) -> Result<BsdeCurve> {
    let kernel = ReverseKernel::new(ScoreMode::Exact(target), schedule, substeps)?;
    let starts = check_starts(starts, kernel.steps())?;
    let visitor = BsdeVisitor { kernel: &kernel, target, starts: &starts, d: target.dim() };
    let out = kernel.visit(paths, seed, &visitor);
    let states: Vec<BsdePath> = out.states.into_iter().map(|(_, s)| s).collect();
    Ok(summarize(&kernel, &starts, target.dim(), substeps, &states, out.diverged.len()))
}

/// Residual at one start index of a stored exact-score batch.
pub fn bsde_residual(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    batch: &TrajectoryBatch,
    t_index: usize,
    sign: i32,
) -> Result<ResidualRow> {
    let kernel = ReverseKernel::new(ScoreMode::Exact(target), schedule, batch.substeps())?;
    let starts = check_starts(&[t_index], kernel.steps())?;
    let visitor = BsdeVisitor { kernel: &kernel, target, starts: &starts, d: target.dim() };
    let states = batch.replay(&visitor)?;
    let curve = summarize(&kernel, &starts, target.dim(), batch.substeps(), &states, batch.diverged().len());
    Ok(*curve.row(t_index, sign.signum()).expect("row for each sign"))
}

/// Outcome of a martingale-identity check at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct YastReport {
    pub t_index: usize,
    pub t: f64,
    pub f: f64,
    /// RMS of `Y_t - f(t) E[int_t^1 g Y | F_t]` over paths.
    pub rms: f64,
    /// The same divided by the RMS of `Y_t`.
    pub relative_rms: f64,
    pub paths: usize,
    /// Regression mode only: coefficient count and residual standard error
    /// of the fit.
    pub basis: usize,
    pub fit_se: f64,
}

/// How the conditional expectation in the identity is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum YastMode {
    /// Target `N(mu0, I)`: `E[Y_r | F_t] = Y_t e^{-(A(t) - A(r))/2}`, summed
    /// on the grid.
    Gaussian,
    /// Least squares of the realized `int_t^1 g Y dr` on a polynomial in
    /// `X_t` of the given degree.
    Regression { degree: usize },
}

struct YastVisitor<'a> {
    kernel: &'a ReverseKernel<'a>,
    schedule: &'a NoiseSchedule,
    start: usize,
    d: usize,
}

#[derive(Clone, Debug, Default)]
struct YastPath {
    x: Vec<f64>,
    y: Vec<f64>,
    integral: Vec<f64>,
}

impl StepVisitor for YastVisitor<'_> {
    type State = YastPath;

    fn start(&self, _: &[f64]) -> YastPath {
        YastPath { integral: vec![0.0; self.d], ..Default::default() }
    }

    fn step(&self, st: &mut YastPath, k: usize, x: &[f64], _: &[f64], _: &[f64]) {
        if k < self.start {
            return;
        }
        let law = self.kernel.marginal(k).expect("exact-score kernel");
        let y = law.score(x);
        if k == self.start {
            st.x = x.to_vec();
            st.y = y.clone();
        }
        let beta = self.kernel.beta(k);
        let w = g_weight(self.schedule, beta, self.kernel.time(k)) * self.kernel.dt();
        for i in 0..self.d {
            st.integral[i] += w * y[i];
        }
    }
}

/// Monomials of total degree `<= degree` in `d <= 2` variables.
fn monomials(x: &[f64], degree: usize, out: &mut Vec<f64>) {
    out.clear();
    match x.len() {
        1 => (0..=degree).for_each(|p| out.push(x[0].powi(p as i32))),
        _ => {
            for total in 0..=degree {
                for a in 0..=total {
                    out.push(x[0].powi(a as i32) * x[1].powi((total - a) as i32));
                }
            }
        }
    }
}

/// Checks `Y_t = f(t) E[int_t^1 g(r) Y_r dr | F_t]` at grid index `t_index`.
pub fn yast_check(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    substeps: usize,
    paths: usize,
    seed: u64,
    t_index: usize,
    mode: YastMode,
) -> Result<YastReport> {
    let kernel = ReverseKernel::new(ScoreMode::Exact(target), schedule, substeps)?;
    if t_index >= kernel.steps() {
        return Err(LabError::InvalidArgument("t_index must precede the terminal step".into()));
    }
    let d = target.dim();
    let t = kernel.time(t_index);
    let f = f_weight(schedule, t);
    match mode {
        YastMode::Gaussian => {
            let single =
                target.components() == 1 && target.q().iter().zip(crate::target::identity(d)).all(|(a, b)| *a == b);
            if !single {
                return Err(LabError::InvalidTarget("Gaussian mode needs a target N(mu0, I)".into()));
            }
        }
        YastMode::Regression { .. } if paths < MIN_REGRESSION_PATHS => {
            return Err(LabError::InsufficientPaths { needed: MIN_REGRESSION_PATHS, got: paths });
        }
        YastMode::Regression { .. } => {}
    }
    let visitor = YastVisitor { kernel: &kernel, schedule, start: t_index, d };
    let out = kernel.visit(paths, seed, &visitor);
    let states: Vec<YastPath> = out.states.into_iter().map(|(_, s)| s).collect();
    let n = states.len();
    let y_sq: f64 = states.iter().map(|s| norm_sq(&s.y)).sum();
    let (rms_sq, basis, fit_se) = match mode {
        YastMode::Gaussian => {
            let a_t = a_weight(schedule, t);
            let mut factor = 0.0;
            for k in t_index..kernel.steps() {
                let r = kernel.time(k);
                let a_r = a_weight(schedule, r);
                factor += g_weight(schedule, kernel.beta(k), r) * (-0.5 * (a_t - a_r)).exp() * kernel.dt();
            }
            let sq: f64 = states.iter().map(|s| norm_sq(&s.y) * (1.0 - f * factor).powi(2)).sum();
            (sq, 0, 0.0)
        }
        YastMode::Regression { degree } => {
            // standardize X_t for conditioning
            let mut mean = vec![0.0; d];
            let mut sd = vec![0.0; d];
            for s in &states {
                for i in 0..d {
                    mean[i] += s.x[i] / n as f64;
                }
            }
            for s in &states {
                for i in 0..d {
                    sd[i] += (s.x[i] - mean[i]).powi(2) / n as f64;
                }
            }
            sd.iter_mut().for_each(|v| *v = v.sqrt().max(1e-300));
            let mut row = Vec::new();
            let mut z = vec![0.0; d];
            let feature = |x: &[f64], z: &mut [f64], row: &mut Vec<f64>| {
                for i in 0..d {
                    z[i] = (x[i] - mean[i]) / sd[i];
                }
                monomials(z, degree, row);
            };
            feature(&states[0].x, &mut z, &mut row);
            let m = row.len();
            let mut gram = DMatrix::<f64>::zeros(m, m);
            let mut rhs = DMatrix::<f64>::zeros(m, d);
            for s in &states {
                feature(&s.x, &mut z, &mut row);
                for a in 0..m {
                    for b in 0..m {
                        gram[(a, b)] += row[a] * row[b];
                    }
                    for i in 0..d {
                        rhs[(a, i)] += row[a] * s.integral[i];
                    }
                }
            }
            let coef = gram
                .cholesky()
                .ok_or_else(|| LabError::InvalidArgument("singular regression design".into()))?
                .solve(&rhs);
            let mut sq = 0.0;
            let mut fit = 0.0;
            for s in &states {
                feature(&s.x, &mut z, &mut row);
                let phi = DVector::from_column_slice(&row);
                for i in 0..d {
                    let pred = phi.dot(&coef.column(i));
                    sq += (s.y[i] - f * pred).powi(2);
                    fit += (s.integral[i] - pred).powi(2);
                }
            }
            let dof = (n * d).saturating_sub(m * d).max(1) as f64;
            (sq, m, (fit / dof).sqrt() / (n as f64).sqrt())
        }
    };
    let rms = (rms_sq / n as f64).sqrt();
    Ok(YastReport { t_index, t, f, rms, relative_rms: rms / (y_sq / n as f64).sqrt(), paths: n, basis, fit_se })
}

/// Marginals and rate needed to evaluate the backward PDE at one time.
pub struct PdeProbe {
    here: MarginalLaw,
    later: MarginalLaw,
    earlier: MarginalLaw,
    beta: f64,
}

impl PdeProbe {
    /// Rejects `t` when `1 - t` is within the difference step of a knot.
    pub fn new(target: &MixtureTarget, schedule: &NoiseSchedule, t: f64) -> Result<Self> {
        let dt = RESIDUAL_DT;
        interior_check(schedule, 1.0 - t, dt)?;
        Ok(Self {
            here: target.marginal_at(schedule, 1.0 - t)?,
            later: target.marginal_at(schedule, 1.0 - t - dt)?,
            earlier: target.marginal_at(schedule, 1.0 - t + dt)?,
            beta: schedule.beta(1.0 - t)?,
        })
    }

    /// Writes the residual vector at `x` into `out` and returns `u(t, x)`.
    pub fn residual_at(&self, x: &[f64], rhs_sign: i32, out: &mut [f64]) -> Vec<f64> {
        let d = x.len();
        let beta = self.beta;
        let sign = rhs_sign.signum() as f64;
        let der = self.here.log_derivatives(x);
        let (up, down) = (self.later.score(x), self.earlier.score(x));
        let u = der.score;
        for k in 0..d {
            let dtu = (up[k] - down[k]) / (2.0 * RESIDUAL_DT);
            let mut transport = 0.0;
            let mut lap = 0.0;
            for j in 0..d {
                transport += der.hessian[k * d + j] * (0.5 * beta * x[j] + beta * u[j]);
                lap += der.third[(k * d + j) * d + j];
            }
            out[k] = dtu + transport + 0.5 * beta * lap - sign * 0.5 * beta * u[k];
        }
        u
    }
}

/// Residual of the backward PDE for `u(t, x) = grad log p_{1-t}(x)`:
/// `d_t u_k + grad u_k . (beta/2 x + beta u) + beta/2 Lap u_k - sign beta/2 u_k`,
/// with the time derivative by centered differences. `scale` is `max |u|`.
pub fn pde_residual(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    t: f64,
    grid: &GridSpec,
    rhs_sign: i32,
) -> Result<ResidualStats> {
    let d = target.dim();
    if grid.dim() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: grid.dim() });
    }
    let probe = PdeProbe::new(target, schedule, t)?;
    let (mut max, mut sq, mut scale) = (0.0f64, 0.0, 0.0f64);
    let mut r = vec![0.0; d];
    grid.for_each_point(|_, x| {
        let u = probe.residual_at(x, rhs_sign, &mut r);
        let size = norm(&r);
        max = max.max(size);
        sq += size * size;
        scale = scale.max(norm(&u));
    });
    Ok(ResidualStats { max, rms: (sq / grid.len() as f64).sqrt(), scale })
}

/// Mean of `h(t, Y_t)` at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HCheckpoint {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HMartingaleReport {
    pub checkpoints: Vec<HCheckpoint>,
    /// `E h(0, Y_0) = int phi p_1` by quadrature.
    pub reference: f64,
    pub paths: usize,
}

impl HMartingaleReport {
    /// Largest `|mean - reference| / std_err` over checkpoints (zero-error
    /// checkpoints compare exactly).
    pub fn worst_z(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| {
                let dev = (c.mean - self.reference).abs();
                if c.std_err > 0.0 {
                    dev / c.std_err
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Simulates `dY = beta_{1-t}/2 Y dt + sqrt(beta_{1-t}) dW`, `Y_0 ~ N(0, I)`,
/// with exact Gaussian transitions and averages
/// `h(t, y) = e^{(d/2) int_0^t beta_{1-u} du} p_{1-t}(y)` at each time.
pub fn h_martingale_check(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    paths: usize,
    seed: u64,
    times: &[f64],
    grid: &GridSpec,
) -> Result<HMartingaleReport> {
    let d = target.dim();
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(LabError::InvalidArgument("checkpoint outside [0, 1]".into()));
    }
    let total = schedule.cum_unchecked(1.0);
    let laws = times.iter().map(|&t| target.marginal_at(schedule, 1.0 - t)).collect::<Result<Vec<_>>>()?;
    // int_0^t beta_{1-u} du = G(1) - G(1 - t)
    let levels: Vec<f64> = times.iter().map(|&t| total - schedule.cum_unchecked(1.0 - t)).collect();
    let values: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathStream::new(seed, p);
            let mut y = vec![0.0; d];
            rng.fill_normal(&mut y);
            let mut z = vec![0.0; d];
            let mut prev = 0.0;
            levels
                .iter()
                .zip(&laws)
                .map(|(&lv, law)| {
                    let inc = lv - prev;
                    if inc > 0.0 {
                        rng.fill_normal(&mut z);
                        let (grow, sd) = ((0.5 * inc).exp(), inc.exp_m1().sqrt());
                        for j in 0..d {
                            y[j] = grow * y[j] + sd * z[j];
                        }
                    }
                    prev = lv;
                    (0.5 * d as f64 * lv + law.log_density(&y)).exp()
                })
                .collect()
        })
        .collect();
    let n = values.len() as f64;
    let checkpoints = times
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let mean = values.iter().map(|v| v[c]).sum::<f64>() / n;
            let var = values.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let min = values.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
            HCheckpoint { t, mean, std_err: (var / n).sqrt(), min }
        })
        .collect();
    let p1 = target.marginal_at(schedule, 1.0)?;
    let phi = MixtureTarget::standard(d);
    let reference = grid.integrate(|x| phi.density(x) * p1.density(x));
    Ok(HMartingaleReport { checkpoints, reference, paths })
}
