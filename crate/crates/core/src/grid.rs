//! Staggered radial grids and quadrature for integrals over R^3.
//!
//! Nodes sit at cell midpoints r_i = (i - 1/2) h with h = r_max / n, so the
//! coordinate singularity at r = 0 never appears in a stencil. The quadrature
//! weight of node i is the exact mass of r^2 dr over its cell,
//! w_i = ((ih)^3 - ((i-1)h)^3) / 3, which makes the rule exact for constants
//! and keeps it consistent with the finite-volume Laplacian in
//! [`crate::operator`].

use std::sync::Arc;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

/// Discretization of [0, r_max] with weights for `int_0^rmax f(r) r^2 dr`.
#[derive(Debug)]
pub struct RadialGrid {
    r_max: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.r_max.to_bits() == other.r_max.to_bits()
    }
}

impl RadialGrid {
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Radius of the cell edge between node i and node i+1 (0-based i).
    pub fn edge(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.h
    }
}

/// Build a staggered grid with `n` interior nodes on (0, r_max).
pub fn make_grid(r_max: f64, n: usize) -> Result<Arc<RadialGrid>> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Parameter(format!("r_max must be positive, got {r_max}")));
    }
    if n < MIN_NODES {
        return Err(Error::Parameter(format!("need at least {MIN_NODES} nodes, got {n}")));
    }
    let h = r_max / n as f64;
    let nodes: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) * h).collect();
    let weights: Vec<f64> = (1..=n)
        .map(|i| {
            let a = (i as f64 - 1.0) * h;
            let b = i as f64 * h;
            (b * b * b - a * a * a) / 3.0
        })
        .collect();
    Ok(Arc::new(RadialGrid { r_max, n, h, nodes, weights }))
}

/// A scalar radial function sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    /// Wrap sampled values, checking length and finiteness.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite field value at node {bad}"
            )));
        }
        Ok(RadialField { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        RadialField { grid, values }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField::new(grid, values)
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        RadialField { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

fn check_same_grid(a: &RadialField, b: &RadialField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::Parameter("fields live on different grids".into()));
    }
    Ok(())
}

/// 4*pi-weighted quadrature of `f` over R^3: `4 pi sum_i w_i f_i`.
pub fn integrate(f: &RadialField) -> f64 {
    let w = f.grid.weights();
    let mut s = 0.0;
    for (wi, fi) in w.iter().zip(f.values.iter()) {
        s += wi * fi;
    }
    4.0 * std::f64::consts::PI * s
}

/// L^2 norm over R^3: sqrt(4 pi int f^2 r^2 dr).
pub fn l2_norm(f: &RadialField) -> f64 {
    let w = f.grid.weights();
    let mut s = 0.0;
    for (wi, fi) in w.iter().zip(f.values.iter()) {
        s += wi * fi * fi;
    }
    (4.0 * std::f64::consts::PI * s).sqrt()
}

/// Fourth power of the L^4 norm: 4 pi int f^4 r^2 dr.
pub fn l4_norm4(f: &RadialField) -> f64 {
    let w = f.grid.weights();
    let mut s = 0.0;
    for (wi, fi) in w.iter().zip(f.values.iter()) {
        let f2 = fi * fi;
        s += wi * f2 * f2;
    }
    4.0 * std::f64::consts::PI * s
}

/// Weighted inner product 4 pi int f g w r^2 dr.
pub fn weighted_inner(f: &RadialField, g: &RadialField, w: &RadialField) -> Result<f64> {
    check_same_grid(f, g)?;
    check_same_grid(f, w)?;
    let wq = f.grid.weights();
    let mut s = 0.0;
    for i in 0..f.values.len() {
        s += wq[i] * f.values[i] * g.values[i] * w.values[i];
    }
    Ok(4.0 * std::f64::consts::PI * s)
}

/// Plain L^2 pairing 4 pi int f g r^2 dr.
pub fn inner(f: &RadialField, g: &RadialField) -> Result<f64> {
    check_same_grid(f, g)?;
    let wq = f.grid.weights();
    let mut s = 0.0;
    for i in 0..f.values.len() {
        s += wq[i] * f.values[i] * g.values[i];
    }
    Ok(4.0 * std::f64::consts::PI * s)
}

/// Squared gradient norm 4 pi int |f'|^2 r^2 dr, by the edge-flux rule that
/// matches the finite-volume Laplacian (summation by parts is exact).
///
/// The symmetry condition at r = 0 contributes nothing; the Dirichlet edge at
/// r_max is approached over the half cell.
pub fn grad_norm2(f: &RadialField) -> f64 {
    let g = &f.grid;
    let h = g.spacing();
    let v = &f.values;
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n - 1 {
        let a = g.edge(i);
        let d = (v[i + 1] - v[i]) / h;
        s += a * a * d * d * h;
    }
    // boundary edge: linear drop from v[n-1] to 0 over h/2
    let a = g.r_max();
    let d = v[n - 1] / (0.5 * h);
    s += a * a * d * d * (0.5 * h);
    4.0 * std::f64::consts::PI * s
}

/// L^2 distance between two field pairs, relative to their joint size.
/// Used for solution deduplication and branch comparisons.
pub fn joint_l2_distance(
    (u1, v1): (&RadialField, &RadialField),
    (u2, v2): (&RadialField, &RadialField),
) -> Result<f64> {
    check_same_grid(u1, u2)?;
    check_same_grid(v1, v2)?;
    let wq = u1.grid.weights();
    let (mut d, mut s) = (0.0, 0.0);
    for i in 0..u1.values.len() {
        let du = u1.values[i] - u2.values[i];
        let dv = v1.values[i] - v2.values[i];
        d += wq[i] * (du * du + dv * dv);
        let su = u1.values[i] + u2.values[i];
        let sv = v1.values[i] + v2.values[i];
        s += wq[i] * 0.25 * (su * su + sv * sv);
    }
    Ok((d / s.max(f64::MIN_POSITIVE)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn weights_integrate_constants_exactly() {
        let g = make_grid(20.0, 2000).unwrap();
        let total: f64 = g.weights().iter().sum();
        let exact = 20.0f64.powi(3) / 3.0;
        assert!((total - exact).abs() <= 1e-10 * exact, "total {total} vs {exact}");
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(nodes[0] > 0.0 && *nodes.last().unwrap() < 20.0);
    }

    #[test]
    fn gaussian_quadrature_matches_closed_form() {
        // 4 pi int e^{-r^2} r^2 dr = pi^{3/2}
        let g = make_grid(20.0, 2000).unwrap();
        let f = RadialField::from_fn(g, |r| (-r * r).exp()).unwrap();
        let got = integrate(&f);
        let exact = PI.powf(1.5);
        assert!((got - exact).abs() <= 1e-4 * exact, "got {got} exact {exact}");
    }

    #[test]
    fn minimal_grid_is_valid() {
        let g = make_grid(20.0, 16).unwrap();
        assert_eq!(g.len(), 16);
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(make_grid(0.0, 100).is_err());
        assert!(make_grid(-1.0, 100).is_err());
        assert!(make_grid(20.0, 15).is_err());
    }

    #[test]
    fn l2_norm_examples() {
        let g = make_grid(20.0, 2000).unwrap();
        let zero = RadialField::zeros(g.clone());
        assert_eq!(l2_norm(&zero), 0.0);
        // |e^{-r^2/2}|_2 = pi^{3/4}
        let f = RadialField::from_fn(g, |r| (-0.5 * r * r).exp()).unwrap();
        let exact = PI.powf(0.75);
        assert!((l2_norm(&f) - exact).abs() <= 1e-4 * exact);
    }

    #[test]
    fn grad_norm_gaussian() {
        // |grad e^{-r^2/2}|_2^2 = (3/2) pi^{3/2}
        let g = make_grid(20.0, 2000).unwrap();
        let f = RadialField::from_fn(g, |r| (-0.5 * r * r).exp()).unwrap();
        let exact = 1.5 * PI.powf(1.5);
        assert!((grad_norm2(&f) - exact).abs() <= 1e-3 * exact);
    }

    #[test]
    fn weighted_inner_consistency() {
        let g = make_grid(20.0, 500).unwrap();
        let f = RadialField::from_fn(g.clone(), |r| (-r).exp()).unwrap();
        let ones = RadialField::from_fn(g, |_| 1.0).unwrap();
        let a = weighted_inner(&f, &f, &ones).unwrap();
        let b = l2_norm(&f).powi(2);
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn mismatched_grids_error() {
        let g1 = make_grid(20.0, 500).unwrap();
        let g2 = make_grid(20.0, 501).unwrap();
        let f = RadialField::zeros(g1);
        let h = RadialField::zeros(g2);
        assert!(weighted_inner(&f, &f, &h).is_err());
    }

    #[test]
    fn quadrature_refines_at_second_order() {
        // Richardson consistency: doubling n shrinks the error by ~4
        let exact = PI.powf(1.5);
        let mut errs = Vec::new();
        for n in [500usize, 1000, 2000] {
            let g = make_grid(20.0, n).unwrap();
            let f = RadialField::from_fn(g, |r| (-r * r).exp()).unwrap();
            errs.push((integrate(&f) - exact).abs());
        }
        assert!(errs[1] < errs[0] / 3.0, "errors {errs:?}");
        assert!(errs[2] < errs[1] / 3.0, "errors {errs:?}");
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = make_grid(20.0, 16).unwrap();
        let mut vals = vec![0.0; 16];
        vals[3] = f64::NAN;
        assert!(RadialField::new(g, vals).is_err());
    }
}
