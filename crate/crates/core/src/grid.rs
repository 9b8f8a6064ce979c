//! Uniform tensor grids (d <= 2) with trapezoid weights.

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    /// Number of nodes, at least 2.
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo, "axis needs n >= 2 and hi > lo");
        Self { lo, hi, n }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
        }
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(LabError::GridDimension(axes.len()));
        }
        Ok(Self { axes })
    }

    /// Symmetric box `[-half_width, half_width]^d` with `n` nodes per axis.
    pub fn centered(d: usize, half_width: f64, n: usize) -> Result<Self> {
        Self::new(vec![Axis::new(-half_width, half_width, n); d])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes node `idx` (row-major, last axis fastest) into `out`.
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for (k, axis) in self.axes.iter().enumerate().rev() {
            out[k] = axis.node(rem % axis.n);
            rem /= axis.n;
        }
    }

    /// Trapezoid quadrature weight of node `idx`.
    pub fn weight(&self, idx: usize) -> f64 {
        let mut rem = idx;
        let mut w = 1.0;
        for axis in self.axes.iter().rev() {
            w *= axis.weight(rem % axis.n);
            rem /= axis.n;
        }
        w
    }

    /// Full node cell volume `prod h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Visits every node in order.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let mut x = vec![0.0; self.dim()];
        for idx in 0..self.len() {
            self.point(idx, &mut x);
            f(idx, &x);
        }
    }

    /// Trapezoid integral of `f` over the box.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_point(|idx, x| acc += self.weight(idx) * f(x));
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_gaussian() {
        let g = GridSpec::centered(1, 10.0, 2001).unwrap();
        let v = g.integrate(|x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt());
        assert!((v - 1.0).abs() < 1e-12);
        let g2 = GridSpec::centered(2, 8.0, 201).unwrap();
        let v2 = g2.integrate(|x| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp() / (2.0 * std::f64::consts::PI));
        assert!((v2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn odd_grids_contain_origin() {
        let g = GridSpec::centered(1, 3.0, 2001).unwrap();
        let mut x = [1.0];
        g.point(1000, &mut x);
        assert_eq!(x[0], 0.0);
        assert!(GridSpec::new(vec![]).is_err());
    }
}
