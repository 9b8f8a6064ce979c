//! Distribution distances on grids and from samples, score-matching losses.
//!
//! Total variation is reported as `1/2 int |p - q|`, which lies in `[0, 1]`
//! and is half of the supremum form over test functions bounded by one.

mod histogram;
mod score;

pub use histogram::{empirical_tv, two_sample_tv, Binning, TvEstimate};
pub use score::{
    denoise_identity_check, score_growth_audit, score_loss, GrowthAudit, IdentityReport, IdentityStep, ScoreLoss,
    StepStat,
};

use crate::error::{LabError, Result};
use crate::grid::GridSpec;
use crate::io::CsvTable;

/// Densities below this are floored inside KL integrands.
pub const KL_FLOOR: f64 = 1e-300;

/// Density values on the nodes of a grid.
#[derive(Clone, Debug)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

/// KL value and the number of nodes whose reference density was floored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlValue {
    pub value: f64,
    pub floored: usize,
}

impl DensityGrid {
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        spec.for_each_point(|_, x| values.push(f(x)));
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoid mass.
    pub fn mass(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| self.spec.weight(i) * v).sum()
    }

    fn check(&self, other: &DensityGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(LabError::GridMismatch);
        }
        Ok(())
    }

    /// `1/2 int |p - q|`.
    pub fn tv(&self, other: &DensityGrid) -> Result<f64> {
        self.check(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (p, q))| self.spec.weight(i) * (p - q).abs())
            .sum();
        Ok(0.5 * s)
    }

    /// `int p log(p / q)`, with `q` floored at [`KL_FLOOR`].
    pub fn kl(&self, other: &DensityGrid) -> Result<KlValue> {
        self.check(other)?;
        let mut value = 0.0;
        let mut floored = 0;
        for (i, (&p, &q)) in self.values.iter().zip(&other.values).enumerate() {
            if p <= 0.0 {
                continue;
            }
            let q = if q < KL_FLOOR {
                floored += 1;
                KL_FLOOR
            } else {
                q
            };
            value += self.spec.weight(i) * p * (p / q).ln();
        }
        Ok(KlValue { value: value.max(0.0), floored })
    }
}

/// `1/2 int |p - q|` of two densities on a grid.
pub fn tv(spec: &GridSpec, p: impl Fn(&[f64]) -> f64, q: impl Fn(&[f64]) -> f64) -> f64 {
    0.5 * spec.integrate(|x| (p(x) - q(x)).abs())
}

/// `int p log(p / q)` of two densities on a grid.
pub fn kl(spec: &GridSpec, p: impl Fn(&[f64]) -> f64, q: impl Fn(&[f64]) -> f64) -> f64 {
    let a = DensityGrid::from_fn(spec.clone(), p);
    let b = DensityGrid::from_fn(spec.clone(), q);
    a.kl(&b).expect("same grid").value
}

/// One row of a metric report.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub i_or_t: f64,
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl MetricRow {
    pub fn new(name: &str, i_or_t: f64, value: f64, std_err: f64, samples: usize) -> Self {
        Self { name: name.into(), i_or_t, value, std_err, samples }
    }
}

/// Metric CSV with header `name,i_or_t,value,std_err,samples`.
pub fn metrics_table(rows: &[MetricRow]) -> CsvTable {
    let mut t = CsvTable::new(&["name", "i_or_t", "value", "std_err", "samples"]);
    for r in rows {
        t.push(vec![(&r.name).into(), r.i_or_t.into(), r.value.into(), r.std_err.into(), r.samples.into()]);
    }
    t
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::NoiseSchedule;
    use crate::target::{normal_cdf, MixtureTarget};
    use proptest::prelude::*;

    fn gauss(mu: f64) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| (-(x[0] - mu) * (x[0] - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn gaussian_tv_and_kl() {
        let g = GridSpec::centered(1, 14.0, 8001).unwrap();
        let exact = 2.0 * normal_cdf(0.5) - 1.0;
        assert!((exact - 0.38292).abs() < 1e-5);
        assert!((tv(&g, gauss(0.0), gauss(1.0)) - exact).abs() < 1e-6);
        assert_eq!(tv(&g, gauss(0.3), gauss(0.3)), 0.0);
        for mu in [0.5, 1.0, 2.0] {
            assert!((kl(&g, gauss(0.0), gauss(mu)) - mu * mu / 2.0).abs() < 1e-6);
        }
        assert_eq!(kl(&g, gauss(0.0), gauss(0.0)), 0.0);
    }

    #[test]
    fn kl_floor_is_counted() {
        let g = GridSpec::centered(1, 60.0, 1201).unwrap();
        let p = DensityGrid::from_fn(g.clone(), gauss(0.0));
        let q = DensityGrid::from_fn(g.clone(), gauss(30.0));
        let k = p.kl(&q).unwrap();
        assert!(k.floored > 0 && k.value.is_finite());
        let other = DensityGrid::from_fn(GridSpec::centered(1, 5.0, 11).unwrap(), gauss(0.0));
        assert!(p.tv(&other).is_err());
    }

    #[test]
    fn kl_to_terminal_law_shrinks_with_noise() {
        let target = MixtureTarget::symmetric_pair(2.0);
        let g = target.default_grid(2001).unwrap();
        let phi = DensityGrid::from_fn(g.clone(), |x| MixtureTarget::standard(1).density(x));
        let mut last = f64::INFINITY;
        for total in [1.0, 2.0, 4.0, 8.0] {
            let s = NoiseSchedule::constant_total(50, total).unwrap();
            let p1 = target.marginal_at(&s, 1.0).unwrap();
            let k = phi.kl(&DensityGrid::from_fn(g.clone(), |x| p1.density(x))).unwrap().value;
            assert!(k < last);
            last = k;
        }
    }

    fn mixture_from(params: &[f64]) -> MixtureTarget {
        let w = 0.1 + 0.8 * params[0];
        MixtureTarget::new(vec![w, 1.0 - w], vec![params[1], params[2]], vec![0.5 + params[3]]).unwrap()
    }

    proptest! {
        #[test]
        fn tv_axioms_and_pinsker(
            a in prop::collection::vec(0.0f64..1.0, 4),
            b in prop::collection::vec(0.0f64..1.0, 4),
            c in prop::collection::vec(0.0f64..1.0, 4),
        ) {
            let g = GridSpec::centered(1, 12.0, 1201).unwrap();
            let (p, q, r) = (mixture_from(&a), mixture_from(&b), mixture_from(&c));
            let [dp, dq, dr] = [&p, &q, &r].map(|m| DensityGrid::from_fn(g.clone(), |x| m.density(x)));
            let pq = dp.tv(&dq).unwrap();
            prop_assert!((pq - dq.tv(&dp).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!(pq <= dp.tv(&dr).unwrap() + dr.tv(&dq).unwrap() + 1e-12);
            prop_assert!(pq * pq <= 0.5 * dp.kl(&dq).unwrap().value + 1e-12);
        }
    }
}
