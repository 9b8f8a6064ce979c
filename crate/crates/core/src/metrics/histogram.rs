//! Histogram estimates of total variation on fixed, target-adapted bins.

use crate::target::{normal_cdf, GaussianMixture};

/// Smallest number of interior bins per axis.
pub const MIN_BINS: usize = 64;

/// Eight-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

#[derive(Clone, Copy, Debug, PartialEq)]
struct BinAxis {
    lo: f64,
    width: f64,
    n: usize,
}

impl BinAxis {
    fn edge(&self, k: usize) -> f64 {
        self.lo + self.width * k as f64
    }

    /// Interior bin of `x`, if any.
    fn locate(&self, x: f64) -> Option<usize> {
        let k = ((x - self.lo) / self.width).floor();
        (k >= 0.0 && k < self.n as f64).then_some(k as usize)
    }
}

/// Fixed bins over `+-(max |mu_k| + 6 sigma_max)` with Freedman-Diaconis
/// width from the analytic target.
///
/// In 1-D the layout is `[below, interior..., above]`; in 2-D the interior
/// cells (row-major) are followed by a single overflow bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Binning {
    axes: Vec<BinAxis>,
}

/// Total-variation estimate with its uncertainty budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    /// Delta-method standard error.
    pub std_err: f64,
    /// Expected upward bias of the plug-in estimate when the true bin
    /// probabilities coincide: `1/2 sum_b sqrt(2 P_b (1 - P_b) / (pi N))`.
    pub bias_budget: f64,
    pub bins: usize,
    pub samples: usize,
}

fn mixture_cdf(weights: &[f64], means: &[f64], sd: f64, x: f64) -> f64 {
    weights.iter().zip(means).map(|(w, m)| w * normal_cdf((x - m) / sd)).sum()
}

fn mixture_quantile(weights: &[f64], means: &[f64], sd: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture_cdf(weights, means, sd, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Binning {
    /// Bins for `samples` draws compared against `target` over the box
    /// `[-half_width, half_width]^d`. The width is `2 IQR N^{-1/3}` in 1-D
    /// and `2 IQR N^{-1/4}` per axis in 2-D.
    pub fn for_target(target: &GaussianMixture, half_width: f64, samples: usize) -> Self {
        let d = target.dim();
        assert!(d == 1 || d == 2, "histogram bins need d <= 2");
        let exponent = if d == 1 { 1.0 / 3.0 } else { 0.25 };
        let axes = (0..d)
            .map(|a| {
                let (w, m, sd) = target.axis_marginal(a);
                let iqr = mixture_quantile(&w, &m, sd, 0.75) - mixture_quantile(&w, &m, sd, 0.25);
                let fd = 2.0 * iqr / (samples.max(1) as f64).powf(exponent);
                let span = 2.0 * half_width;
                let n = ((span / fd).ceil() as usize).max(MIN_BINS);
                BinAxis { lo: -half_width, width: span / n as f64, n }
            })
            .collect();
        Self { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Interior bins per axis.
    pub fn interior(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    /// Total bin count including overflow bins.
    pub fn len(&self) -> usize {
        match self.axes.len() {
            1 => self.axes[0].n + 2,
            _ => self.axes.iter().map(|a| a.n).product::<usize>() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interior bin edges of a 1-D binning.
    pub fn edges_1d(&self) -> Option<Vec<f64>> {
        match self.axes.as_slice() {
            [a] => Some((0..=a.n).map(|k| a.edge(k)).collect()),
            _ => None,
        }
    }

    /// Bin probabilities of a 1-D density by eight-point Gauss-Legendre
    /// quadrature per interior bin; the two tails share the remainder in
    /// proportion to `tail_split` (mass below the box).
    pub fn probs_from_density_1d(&self, density: impl Fn(f64) -> f64, tail_split: (f64, f64)) -> Option<Vec<f64>> {
        let edges = self.edges_1d()?;
        let mut p = Vec::with_capacity(edges.len() + 1);
        p.push(0.0);
        for e in edges.windows(2) {
            let (lo, w) = (e[0], e[1] - e[0]);
            let acc: f64 = GL_NODES.iter().zip(&GL_WEIGHTS).map(|(u, wu)| wu * density(lo + 0.5 * w * (1.0 + u))).sum();
            p.push(0.5 * w * acc);
        }
        p.push(0.0);
        let rest = (1.0 - p.iter().sum::<f64>()).max(0.0);
        let total = tail_split.0 + tail_split.1;
        let below = if total > 0.0 { tail_split.0 / total } else { 0.5 };
        p[0] = rest * below;
        let last = p.len() - 1;
        p[last] = rest * (1.0 - below);
        Some(p)
    }

    pub fn index(&self, x: &[f64]) -> usize {
        if self.axes.len() == 1 {
            let a = &self.axes[0];
            return match a.locate(x[0]) {
                Some(k) => k + 1,
                None if x[0] < a.lo => 0,
                None => a.n + 1,
            };
        }
        match (self.axes[0].locate(x[0]), self.axes[1].locate(x[1])) {
            (Some(i), Some(j)) => i * self.axes[1].n + j,
            _ => self.len() - 1,
        }
    }

    /// Bin counts of `rows x d` samples.
    pub fn counts(&self, samples: &[f64]) -> Vec<u64> {
        let d = self.dim();
        let mut c = vec![0u64; self.len()];
        for x in samples.chunks_exact(d) {
            c[self.index(x)] += 1;
        }
        c
    }

    /// Exact bin probabilities of `target`: normal CDFs in 1-D, per-cell
    /// Gauss-Legendre quadrature in 2-D.
    pub fn reference_probs(&self, target: &GaussianMixture) -> Vec<f64> {
        if self.axes.len() == 1 {
            let a = &self.axes[0];
            let (w, m, sd) = target.axis_marginal(0);
            let cdf: Vec<f64> = (0..=a.n).map(|k| mixture_cdf(&w, &m, sd, a.edge(k))).collect();
            let mut p = Vec::with_capacity(a.n + 2);
            p.push(cdf[0]);
            p.extend(cdf.windows(2).map(|c| (c[1] - c[0]).max(0.0)));
            p.push((1.0 - cdf[a.n]).max(0.0));
            return p;
        }
        let (ax, ay) = (self.axes[0], self.axes[1]);
        let mut p = Vec::with_capacity(self.len());
        let mut x = [0.0; 2];
        for i in 0..ax.n {
            for j in 0..ay.n {
                let mut acc = 0.0;
                for (u, wu) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                    x[0] = ax.edge(i) + 0.5 * ax.width * (1.0 + u);
                    for (v, wv) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                        x[1] = ay.edge(j) + 0.5 * ay.width * (1.0 + v);
                        acc += wu * wv * target.density(&x);
                    }
                }
                p.push(acc * 0.25 * ax.width * ay.width);
            }
        }
        let inside: f64 = p.iter().sum();
        p.push((1.0 - inside).max(0.0));
        p
    }
}

/// Plug-in TV between the histogram of `samples` (`rows x d`) and exact
/// bin probabilities `reference`.
pub fn empirical_tv(binning: &Binning, reference: &[f64], samples: &[f64]) -> TvEstimate {
    let n = samples.len() / binning.dim();
    let counts = binning.counts(samples);
    let nf = n.max(1) as f64;
    let mut value = 0.0;
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut bias = 0.0;
    for (c, &p) in counts.iter().zip(reference) {
        let ph = *c as f64 / nf;
        value += (ph - p).abs();
        let sign = (ph - p).signum() * if ph == p { 0.0 } else { 1.0 };
        s1 += sign * ph;
        s2 += sign * sign * ph;
        bias += (2.0 * p * (1.0 - p) / (std::f64::consts::PI * nf)).sqrt();
    }
    TvEstimate {
        value: 0.5 * value,
        std_err: 0.5 * ((s2 - s1 * s1).max(0.0) / nf).sqrt(),
        bias_budget: 0.5 * bias,
        bins: binning.len(),
        samples: n,
    }
}

/// Plug-in TV between the histograms of two sample sets on shared bins.
pub fn two_sample_tv(binning: &Binning, a: &[f64], b: &[f64]) -> TvEstimate {
    let d = binning.dim();
    let (na, nb) = ((a.len() / d).max(1) as f64, (b.len() / d).max(1) as f64);
    let (ca, cb) = (binning.counts(a), binning.counts(b));
    let mut value = 0.0;
    let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
    let mut bias = 0.0;
    for (x, y) in ca.iter().zip(&cb) {
        let (pa, pb) = (*x as f64 / na, *y as f64 / nb);
        value += (pa - pb).abs();
        let sign = if pa == pb { 0.0 } else { (pa - pb).signum() };
        a1 += sign * pa;
        a2 += sign * sign * pa;
        b1 += sign * pb;
        b2 += sign * sign * pb;
        let pooled = (x + y) as f64 / (na + nb);
        bias += (2.0 * pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb) / std::f64::consts::PI).sqrt();
    }
    let var = (a2 - a1 * a1).max(0.0) / na + (b2 - b1 * b1).max(0.0) / nb;
    TvEstimate {
        value: 0.5 * value,
        std_err: 0.5 * var.sqrt(),
        bias_budget: 0.5 * bias,
        bins: binning.len(),
        samples: (a.len() / d).min(b.len() / d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PathStream;
    use crate::target::MixtureTarget;

    fn draw(t: &MixtureTarget, n: usize, seed: u64) -> Vec<f64> {
        let d = t.dim();
        let mut out = vec![0.0; n * d];
        for (p, x) in out.chunks_exact_mut(d).enumerate() {
            t.sample_into(&mut PathStream::new(seed, p), x);
        }
        out
    }

    #[test]
    fn reference_probabilities_sum_to_one() {
        let t = MixtureTarget::symmetric_pair(2.0);
        let b = Binning::for_target(&t, t.default_half_width(), 10_000);
        assert!(b.interior()[0] >= MIN_BINS);
        assert!((b.reference_probs(&t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let t2 = MixtureTarget::new(vec![0.5, 0.5], vec![-1.0, 0.0, 1.0, 0.5], vec![1.0, 0.3, 0.3, 2.0]).unwrap();
        let b2 = Binning::for_target(&t2, t2.default_half_width(), 10_000);
        let p = b2.reference_probs(&t2);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(*p.last().unwrap() < 1e-8);
    }

    #[test]
    fn same_law_tv_is_within_bias_budget() {
        let t = MixtureTarget::new(vec![0.3, 0.7], vec![-2.0, 1.0], vec![1.5]).unwrap();
        let n = 50_000;
        let b = Binning::for_target(&t, t.default_half_width(), n);
        let est = empirical_tv(&b, &b.reference_probs(&t), &draw(&t, n, 4));
        assert!(est.value <= est.bias_budget + 3.0 * est.std_err, "{est:?}");
        let two = two_sample_tv(&b, &draw(&t, n, 5), &draw(&t, n, 6));
        assert!(two.value <= two.bias_budget + 3.0 * two.std_err, "{two:?}");
    }

    #[test]
    fn shifted_law_tv_matches_binned_truth() {
        let p = MixtureTarget::standard(1);
        let q = MixtureTarget::shifted(vec![1.0]);
        let n = 200_000;
        let b = Binning::for_target(&p, p.default_half_width(), n);
        let (rp, rq) = (b.reference_probs(&p), b.reference_probs(&q));
        let truth = 0.5 * rp.iter().zip(&rq).map(|(a, c)| (a - c).abs()).sum::<f64>();
        assert!((truth - 0.382_924_922_548_026).abs() < 1e-3);
        let est = empirical_tv(&b, &rp, &draw(&q, n, 8));
        assert!((est.value - truth).abs() <= est.bias_budget + 4.0 * est.std_err, "{est:?} vs {truth}");
    }
}
