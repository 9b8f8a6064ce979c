//! Forward chain, reverse-time SDE, DDPM sampler and the reverse transition
//! density.
//!
//! Reverse-type batches run on the reverse clock: row `k` of a reverse or
//! DDPM batch sits at reverse time `t = k / N` and forward time `1 - t`.

mod model;

pub use model::{growth_bound, h2_clip, BoundScores, ClipVariant, ScoreModel};

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::io::{Cell, CsvTable};
use crate::rng::PathStream;
use crate::schedule::NoiseSchedule;
use crate::target::{MarginalLaw, MixtureTarget};

/// A path is abandoned once any coordinate exceeds this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
    Ddpm,
}

/// Which states a simulation keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Retention {
    /// Every step, plus the driving increments.
    Full,
    /// States at the schedule knots only.
    Knots,
    /// Initial and terminal states only.
    Terminal,
}

/// Simulated paths on a common time grid.
#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    pub direction: Direction,
    d: usize,
    /// Retained times.
    times: Vec<f64>,
    /// Position of each retained time on the full step grid.
    time_index: Vec<usize>,
    /// Original path index of each retained row.
    path_ids: Vec<usize>,
    /// Paths abandoned by the divergence guard.
    diverged: Vec<usize>,
    /// `rows x times x d`.
    states: Vec<f64>,
    /// `rows x steps x d` driving increments (`Retention::Full` only).
    noises: Option<Vec<f64>>,
    steps: usize,
    substeps: usize,
}

impl TrajectoryBatch {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of retained (non-diverged) paths.
    pub fn paths(&self) -> usize {
        self.path_ids.len()
    }

    pub fn path_ids(&self) -> &[usize] {
        &self.path_ids
    }

    pub fn diverged(&self) -> &[usize] {
        &self.diverged
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time_indices(&self) -> &[usize] {
        &self.time_index
    }

    /// Steps of the underlying integration grid.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn has_noises(&self) -> bool {
        self.noises.is_some()
    }

    pub fn state(&self, row: usize, ti: usize) -> &[f64] {
        let nt = self.times.len();
        let o = (row * nt + ti) * self.d;
        &self.states[o..o + self.d]
    }

    pub fn terminal(&self, row: usize) -> &[f64] {
        self.state(row, self.times.len() - 1)
    }

    /// Increment driving step `k` of path `row`.
    pub fn noise(&self, row: usize, k: usize) -> Option<&[f64]> {
        self.noises.as_ref().map(|n| {
            let o = (row * self.steps + k) * self.d;
            &n[o..o + self.d]
        })
    }

    /// Terminal states of all retained paths, `rows x d`.
    pub fn terminal_samples(&self) -> Vec<f64> {
        (0..self.paths()).flat_map(|r| self.terminal(r).to_vec()).collect()
    }

    /// Samples at retained time `ti`, `rows x d`.
    pub fn samples_at(&self, ti: usize) -> Vec<f64> {
        (0..self.paths()).flat_map(|r| self.state(r, ti).to_vec()).collect()
    }

    /// Empirical per-coordinate mean and variance of the increments of step
    /// `k`, normalized to unit variance.
    pub fn noise_moments(&self, k: usize) -> Option<(f64, f64)> {
        let scale = match self.direction {
            Direction::Reverse => (self.steps as f64).sqrt(),
            _ => 1.0,
        };
        self.noises.as_ref()?;
        let count = (self.paths() * self.d) as f64;
        let vals: Vec<f64> = (0..self.paths())
            .flat_map(|r| self.noise(r, k).unwrap().iter().map(|v| v * scale).collect::<Vec<_>>())
            .collect();
        let mean = vals.iter().sum::<f64>() / count;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
        Some((mean, var))
    }

    /// Replays the stored steps through a visitor, in path order.
    pub fn replay<V: StepVisitor>(&self, visitor: &V) -> Result<Vec<V::State>> {
        if self.noises.is_none() || self.time_index.len() != self.steps + 1 {
            return Err(LabError::MissingData("batch with retained noises"));
        }
        Ok((0..self.paths())
            .into_par_iter()
            .map(|r| {
                let mut st = visitor.start(self.state(r, 0));
                for k in 0..self.steps {
                    visitor.step(&mut st, k, self.state(r, k), self.noise(r, k).unwrap(), self.state(r, k + 1));
                }
                st
            })
            .collect())
    }

    /// Trajectory dump with header `path,time_index,t,dim_0..`.
    pub fn to_csv(&self) -> CsvTable {
        let mut header = vec!["path".to_string(), "time_index".into(), "t".into()];
        header.extend((0..self.d).map(|j| format!("dim_{j}")));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = CsvTable::new(&refs);
        for (r, &p) in self.path_ids.iter().enumerate() {
            for (ti, (&t, &k)) in self.times.iter().zip(&self.time_index).enumerate() {
                let mut row: Vec<Cell> = vec![p.into(), k.into(), t.into()];
                row.extend(self.state(r, ti).iter().map(|&v| Cell::Float(v)));
                table.push(row);
            }
        }
        table
    }
}

/// Per-path accumulator driven step by step by a simulation or a replay.
pub trait StepVisitor: Sync {
    type State: Send;
    fn start(&self, x0: &[f64]) -> Self::State;
    /// Step `k` moves `x` to `x_next` with increment `dw`.
    fn step(&self, state: &mut Self::State, k: usize, x: &[f64], dw: &[f64], x_next: &[f64]);
}

fn diverged(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

/// Forward DDPM chain `x_i = sqrt(alpha_i) x_{i-1} + sqrt(1 - alpha_i) Z_i`
/// with `x_0` drawn from the target. Keeps every state and every `Z_i`.
pub fn forward_chain(target: &MixtureTarget, schedule: &NoiseSchedule, paths: usize, seed: u64) -> TrajectoryBatch {
    let d = target.dim();
    let n = schedule.n();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathStream::new(seed, p);
            let mut states = vec![0.0; (n + 1) * d];
            let mut noises = vec![0.0; n * d];
            target.sample_into(&mut rng, &mut states[..d]);
            for i in 1..=n {
                let a = schedule.alpha(i);
                let (ra, rb) = (a.sqrt(), (1.0 - a).sqrt());
                let z = &mut noises[(i - 1) * d..i * d];
                rng.fill_normal(z);
                for j in 0..d {
                    states[i * d + j] = ra * states[(i - 1) * d + j] + rb * z[j];
                }
            }
            (states, noises)
        })
        .collect();
    let times = (0..=n).map(|i| schedule.knot(i)).collect();
    assemble(Direction::Forward, d, times, (0..=n).collect(), n, 1, rows, Vec::new(), true)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    direction: Direction,
    d: usize,
    times: Vec<f64>,
    time_index: Vec<usize>,
    steps: usize,
    substeps: usize,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    diverged: Vec<usize>,
    keep_noise: bool,
) -> TrajectoryBatch {
    let path_ids = (0..rows.len()).collect();
    assemble_with_ids(direction, d, times, time_index, steps, substeps, rows, path_ids, diverged, keep_noise)
}

#[allow(clippy::too_many_arguments)]
fn assemble_with_ids(
    direction: Direction,
    d: usize,
    times: Vec<f64>,
    time_index: Vec<usize>,
    steps: usize,
    substeps: usize,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    path_ids: Vec<usize>,
    diverged: Vec<usize>,
    keep_noise: bool,
) -> TrajectoryBatch {
    let mut states = Vec::with_capacity(rows.len() * times.len() * d);
    let mut noises = keep_noise.then(|| Vec::with_capacity(rows.len() * steps * d));
    for (s, n) in rows {
        states.extend(s);
        if let Some(buf) = noises.as_mut() {
            buf.extend(n);
        }
    }
    TrajectoryBatch { direction, d, times, time_index, path_ids, diverged, states, noises, steps, substeps }
}

/// Drift of the reverse-time SDE.
#[derive(Clone, Copy, Debug)]
pub enum ScoreMode<'a> {
    /// Exact score of `p_{1-t}`, Euler-Maruyama steps.
    Exact(&'a MixtureTarget),
    /// Model score frozen at the last knot, `s(1 - tau_n(t), X_{tau_n(t)})`,
    /// integrated exactly over each step.
    Model(&'a ScoreModel),
}

#[derive(Clone, Copy, Debug)]
pub struct ReverseOptions {
    pub substeps: usize,
    pub paths: usize,
    pub seed: u64,
    pub retain: Retention,
}

impl ReverseOptions {
    pub fn new(substeps: usize, paths: usize, seed: u64) -> Self {
        Self { substeps, paths, seed, retain: Retention::Full }
    }

    pub fn retain(mut self, retain: Retention) -> Self {
        self.retain = retain;
        self
    }
}

/// Precomputed coefficients of a reverse-time integration.
pub struct ReverseKernel<'a> {
    schedule: &'a NoiseSchedule,
    d: usize,
    substeps: usize,
    steps: usize,
    dt: f64,
    drift: KernelDrift<'a>,
}

enum KernelDrift<'a> {
    /// Marginal `p_{1 - k/N}` for every step start.
    Exact(Vec<MarginalLaw>),
    Model(BoundScores<'a>),
}

/// Outcome of a streamed simulation.
#[derive(Debug)]
pub struct VisitOutcome<S> {
    /// `(path, state)` for every path that stayed finite, in path order.
    pub states: Vec<(usize, S)>,
    pub diverged: Vec<usize>,
}

impl<'a> ReverseKernel<'a> {
    pub fn new(mode: ScoreMode<'a>, schedule: &'a NoiseSchedule, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(LabError::InvalidArgument("substeps must be at least 1".into()));
        }
        let steps = schedule.n() * substeps;
        let dt = 1.0 / steps as f64;
        let (d, drift) = match mode {
            ScoreMode::Exact(target) => {
                let marginals = (0..steps)
                    .map(|k| {
                        let t = 1.0 - k as f64 * dt;
                        target.marginal_for_level(t, schedule.cum_unchecked(t))
                    })
                    .collect();
                (target.dim(), KernelDrift::Exact(marginals))
            }
            ScoreMode::Model(model) => (model.dim(), KernelDrift::Model(model.bind(schedule))),
        };
        Ok(Self { schedule, d, substeps, steps, dt, drift })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Reverse time at the start of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Forward interval index `i` that step `k` traverses.
    pub fn interval(&self, k: usize) -> usize {
        self.schedule.n() - k / self.substeps
    }

    /// `beta_{1-t}` on step `k`.
    pub fn beta(&self, k: usize) -> f64 {
        self.schedule.beta_on(self.interval(k))
    }

    /// Exact marginal `p_{1 - t_k}` used by step `k` (exact mode only).
    pub fn marginal(&self, k: usize) -> Option<&MarginalLaw> {
        match &self.drift {
            KernelDrift::Exact(m) => Some(&m[k]),
            KernelDrift::Model(_) => None,
        }
    }

    /// Simulates path `p`, calling `on_step(k, x, dw, x_next)` after every
    /// step. Returns the initial state, or `None` if the path diverged.
    pub fn run_path(
        &self,
        seed: u64,
        p: usize,
        mut on_step: impl FnMut(usize, &[f64], &[f64], &[f64]),
    ) -> Option<Vec<f64>> {
        let d = self.d;
        let mut rng = PathStream::new(seed, p);
        let mut x = vec![0.0; d];
        rng.fill_normal(&mut x);
        let x0 = x.clone();
        let mut next = vec![0.0; d];
        let mut dw = vec![0.0; d];
        let mut drift = vec![0.0; d];
        let sqrt_dt = self.dt.sqrt();
        for k in 0..self.steps {
            rng.fill_normal(&mut dw);
            dw.iter_mut().for_each(|v| *v *= sqrt_dt);
            let beta = self.beta(k);
            match &self.drift {
                KernelDrift::Exact(marginals) => {
                    marginals[k].score_into(&x, &mut drift);
                    let sb = beta.sqrt();
                    for j in 0..d {
                        next[j] = x[j] + (0.5 * beta * x[j] + beta * drift[j]) * self.dt + sb * dw[j];
                    }
                }
                KernelDrift::Model(scores) => {
                    if k % self.substeps == 0 {
                        scores.s_knot_scaled(self.interval(k), &x, &mut drift);
                    }
                    // exact solution of dX = (beta/2 X + beta S) dt + sqrt(beta) dW
                    let h = beta * self.dt;
                    let e = (0.5 * h).exp();
                    let em1 = (0.5 * h).exp_m1();
                    let sd = h.exp_m1().sqrt() / sqrt_dt;
                    for j in 0..d {
                        next[j] = e * x[j] + 2.0 * drift[j] * em1 + sd * dw[j];
                    }
                }
            }
            if diverged(&next) {
                return None;
            }
            on_step(k, &x, &dw, &next);
            std::mem::swap(&mut x, &mut next);
        }
        Some(x0)
    }

    /// Streams every path through `visitor` without storing trajectories.
    pub fn visit<V: StepVisitor>(&self, paths: usize, seed: u64, visitor: &V) -> VisitOutcome<V::State> {
        let results: Vec<(usize, Option<V::State>)> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let mut st = None;
                let ok = self.run_path(seed, p, |k, x, dw, xn| {
                    let s = st.get_or_insert_with(|| visitor.start(x));
                    visitor.step(s, k, x, dw, xn);
                });
                (p, ok.map(|x0| st.unwrap_or_else(|| visitor.start(&x0))))
            })
            .collect();
        let mut out = VisitOutcome { states: Vec::with_capacity(paths), diverged: Vec::new() };
        for (p, s) in results {
            match s {
                Some(s) => out.states.push((p, s)),
                None => out.diverged.push(p),
            }
        }
        out
    }
}

/// Integrates the reverse-time SDE
/// `dX = [beta_{1-t}/2 X + beta_{1-t} score] dt + sqrt(beta_{1-t}) dW` from
/// `X_0 ~ N(0, I)` on `n * substeps` uniform steps.
pub fn reverse_sde(mode: ScoreMode<'_>, schedule: &NoiseSchedule, opts: ReverseOptions) -> Result<TrajectoryBatch> {
    let kernel = ReverseKernel::new(mode, schedule, opts.substeps)?;
    let d = kernel.d;
    let steps = kernel.steps;
    let keep: Vec<usize> = match opts.retain {
        Retention::Full => (0..=steps).collect(),
        Retention::Knots => (0..=schedule.n()).map(|j| j * opts.substeps).collect(),
        Retention::Terminal => vec![0, steps],
    };
    let full = opts.retain == Retention::Full;
    let rows: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..opts.paths)
        .into_par_iter()
        .map(|p| {
            let mut states = Vec::with_capacity(keep.len() * d);
            let mut noises = Vec::with_capacity(if full { steps * d } else { 0 });
            let mut cursor = 1;
            let x0 = kernel.run_path(opts.seed, p, |k, _, dw, xn| {
                if full {
                    noises.extend_from_slice(dw);
                }
                if cursor < keep.len() && keep[cursor] == k + 1 {
                    states.extend_from_slice(xn);
                    cursor += 1;
                }
            })?;
            let mut all = x0;
            all.extend(states);
            Some((all, noises))
        })
        .collect();
    let mut kept = Vec::new();
    let mut ids = Vec::new();
    let mut lost = Vec::new();
    for (p, r) in rows.into_iter().enumerate() {
        match r {
            Some(r) => {
                kept.push(r);
                ids.push(p);
            }
            None => lost.push(p),
        }
    }
    let times = keep.iter().map(|&k| kernel.time(k)).collect();
    Ok(assemble_with_ids(Direction::Reverse, d, times, keep, steps, opts.substeps, kept, ids, lost, full))
}

/// DDPM sampler: `x*_n ~ N(0, I)` and
/// `x*_{i-1} = (x*_i - (1-alpha_i)/sqrt(1-abar_i) z_i(x*_i)) / sqrt(alpha_i) + sigma_i xi_i`.
///
/// Row `j` holds `x*_{n-j}` at reverse time `j/n`. Each path draws its
/// initial state and then one `xi` per step, so it shares noise with
/// [`reverse_sde`] in model mode with one substep. With `final_noise` off
/// the draw for `i = 1` is still consumed but not added.
pub fn ddpm_sample(
    model: &ScoreModel,
    schedule: &NoiseSchedule,
    paths: usize,
    seed: u64,
    final_noise: bool,
) -> TrajectoryBatch {
    ddpm_run(model, schedule, paths, seed, final_noise, false)
}

/// [`ddpm_sample`] keeping only `x*_n` and `x*_0`; the noise stream is the
/// same, so terminal states agree bit for bit.
pub fn ddpm_terminal(
    model: &ScoreModel,
    schedule: &NoiseSchedule,
    paths: usize,
    seed: u64,
    final_noise: bool,
) -> TrajectoryBatch {
    ddpm_run(model, schedule, paths, seed, final_noise, true)
}

fn ddpm_run(
    model: &ScoreModel,
    schedule: &NoiseSchedule,
    paths: usize,
    seed: u64,
    final_noise: bool,
    terminal_only: bool,
) -> TrajectoryBatch {
    let d = model.dim();
    let n = schedule.n();
    let scores = model.bind(schedule);
    let rows: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathStream::new(seed, p);
            let mut x = vec![0.0; d];
            rng.fill_normal(&mut x);
            let mut states = Vec::with_capacity(if terminal_only { 2 * d } else { (n + 1) * d });
            states.extend_from_slice(&x);
            let mut noises = Vec::with_capacity(if terminal_only { 0 } else { n * d });
            let mut next = vec![0.0; d];
            let mut xi = vec![0.0; d];
            let mut z = vec![0.0; d];
            for j in 0..n {
                let i = n - j;
                rng.fill_normal(&mut xi);
                let a = schedule.alpha(i);
                let coef = (1.0 - a) / (-(-schedule.neg_log_alpha_bar(i)).exp_m1()).sqrt();
                let sigma = if i == 1 && !final_noise { 0.0 } else { schedule.sigma(i) };
                scores.z_i(i, &x, &mut z);
                let ra = a.sqrt();
                for c in 0..d {
                    next[c] = (x[c] - coef * z[c]) / ra + sigma * xi[c];
                }
                if diverged(&next) {
                    return None;
                }
                std::mem::swap(&mut x, &mut next);
                if !terminal_only {
                    states.extend_from_slice(&x);
                    noises.extend_from_slice(&xi);
                }
            }
            if terminal_only {
                states.extend_from_slice(&x);
            }
            Some((states, noises))
        })
        .collect();
    let mut kept = Vec::new();
    let mut ids = Vec::new();
    let mut lost = Vec::new();
    for (p, r) in rows.into_iter().enumerate() {
        match r {
            Some(r) => {
                kept.push(r);
                ids.push(p);
            }
            None => lost.push(p),
        }
    }
    let index: Vec<usize> = if terminal_only { vec![0, n] } else { (0..=n).collect() };
    let times = index.iter().map(|&j| schedule.knot(j)).collect();
    assemble_with_ids(Direction::Ddpm, d, times, index, n, 1, kept, ids, lost, !terminal_only)
}

/// Transition density `p*(t, x, r, y)` of the reverse process,
/// `p_{1-r}(y) N(x; m y, s^2 I) / p_{1-t}(x)` with `(m, s)` the forward
/// kernel from `1-r` to `1-t`.
pub fn reverse_transition_density(
    target: &MixtureTarget,
    schedule: &NoiseSchedule,
    t: f64,
    x: &[f64],
    r: f64,
    y: &[f64],
) -> Result<f64> {
    if !(0.0 < t && t < r && r < 1.0) {
        return Err(LabError::InvalidArgument(format!("need 0 < t < r < 1, got t = {t}, r = {r}")));
    }
    let d = target.dim();
    if x.len() != d || y.len() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: x.len().min(y.len()) });
    }
    let k = schedule.bridge(1.0 - r, 1.0 - t)?;
    let p_from = target.marginal_at(schedule, 1.0 - t)?;
    let p_to = target.marginal_at(schedule, 1.0 - r)?;
    let var = k.variance();
    let sq: f64 = (0..d).map(|j| (x[j] - k.m * y[j]).powi(2)).sum();
    let log_kernel = -0.5 * d as f64 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * sq / var;
    Ok((p_to.log_density(y) + log_kernel - p_from.log_density(x)).exp())
}
