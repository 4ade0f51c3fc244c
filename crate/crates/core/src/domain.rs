//! Input domain, tensor-product quadrature grids and grid-sampled functional inputs.
//!
//! Every functional input is stored as its values on the nodes of a shared
//! [`QuadratureGrid`]; the L2 inner product and norm then reduce to weighted sums.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Hyperrectangle `[a_1, b_1] x ... x [a_d, b_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        for (i, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!(
                    "interval {} is [{a}, {b}]; need finite a < b",
                    i + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[0, 1]^d`
    pub fn unit_cube(d: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); d])
    }

    /// `[0, 2π]`, the domain of the `sin(αx)` sample-path family.
    pub fn periodic_interval() -> Self {
        Self {
            bounds: vec![(0.0, 2.0 * PI)],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(a, b)| b - a).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        x.len() == self.dim()
            && x.iter().zip(&self.bounds).all(|(&v, &(a, b))| {
                let tol = SLACK * (b - a);
                v >= a - tol && v <= b + tol
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    GaussLegendre,
    UniformMidpoint,
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadratureRule::GaussLegendre => "gauss-legendre",
            QuadratureRule::UniformMidpoint => "uniform-midpoint",
        })
    }
}

/// Default points per dimension: 64 in one dimension, 20 otherwise.
pub fn default_resolution(d: usize) -> usize {
    if d == 1 {
        64
    } else {
        20
    }
}

/// Tensor-product quadrature nodes and weights over a [`Domain`].
///
/// Nodes are stored row-major (`n_q x d`), with the last coordinate varying fastest.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    domain: Domain,
    nodes: Vec<f64>,
    weights: DVector<f64>,
    rule: QuadratureRule,
    resolution: usize,
}

impl PartialEq for QuadratureGrid {
    fn eq(&self, other: &Self) -> bool {
        // nodes and weights are a deterministic function of these three
        self.rule == other.rule
            && self.resolution == other.resolution
            && self.domain == other.domain
    }
}

impl QuadratureGrid {
    pub fn new(domain: Domain, resolution: usize, rule: QuadratureRule) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Resolution(resolution));
        }
        let d = domain.dim();
        let (ref_nodes, ref_weights) = match rule {
            QuadratureRule::GaussLegendre => gauss_legendre(resolution),
            QuadratureRule::UniformMidpoint => midpoint(resolution),
        };
        let per_dim: Vec<(Vec<f64>, Vec<f64>)> = domain
            .bounds()
            .iter()
            .map(|&(a, b)| {
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                (
                    ref_nodes.iter().map(|t| mid + half * t).collect(),
                    ref_weights.iter().map(|w| half * w).collect(),
                )
            })
            .collect();

        let n_q = resolution.pow(d as u32);
        let mut nodes = Vec::with_capacity(n_q * d);
        let mut weights = Vec::with_capacity(n_q);
        let mut index = vec![0usize; d];
        for _ in 0..n_q {
            let mut w = 1.0;
            for (k, &i) in index.iter().enumerate() {
                nodes.push(per_dim[k].0[i]);
                w *= per_dim[k].1[i];
            }
            weights.push(w);
            for k in (0..d).rev() {
                index[k] += 1;
                if index[k] < resolution {
                    break;
                }
                index[k] = 0;
            }
        }
        Ok(Self {
            domain,
            nodes,
            weights: DVector::from_vec(weights),
            rule,
            resolution,
        })
    }

    /// Gauss–Legendre grid at the default resolution for the domain's dimension.
    pub fn gauss_legendre(domain: Domain) -> Result<Self> {
        let res = default_resolution(domain.dim());
        Self::new(domain, res, QuadratureRule::GaussLegendre)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim())
    }

    /// Quadrature of values given at the nodes.
    pub fn integrate(&self, values: &DVector<f64>) -> f64 {
        self.weights.dot(values)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending, by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn midpoint(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / n as f64;
    let nodes = (0..n).map(|i| -1.0 + h * (i as f64 + 0.5)).collect();
    (nodes, vec![h; n])
}

/// A function `g: Ω → ℝ` represented by its values on a quadrature grid.
#[derive(Debug, Clone)]
pub struct FunctionalInput {
    grid: Arc<QuadratureGrid>,
    values: DVector<f64>,
    label: Option<String>,
}

impl FunctionalInput {
    pub fn from_values(grid: Arc<QuadratureGrid>, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self {
            grid,
            values,
            label: None,
        })
    }

    /// Evaluates `f` at every node.
    pub fn from_fn(grid: Arc<QuadratureGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = DVector::from_iterator(grid.len(), grid.nodes().map(f));
        Self::from_values(grid, values)
    }

    pub fn constant(grid: Arc<QuadratureGrid>, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::from_values(grid, DVector::from_element(n, c))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn same_grid(&self, other: &FunctionalInput) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn ensure_same_grid(&self, other: &FunctionalInput) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `a·self + b·other`
    pub fn linear_combination(&self, a: f64, other: &FunctionalInput, b: f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Self::from_values(self.grid.clone(), &self.values * a + &other.values * b)
    }

    pub fn scale(&self, a: f64) -> Result<Self> {
        Self::from_values(self.grid.clone(), &self.values * a)
    }

    pub fn sub(&self, other: &FunctionalInput) -> Result<Self> {
        self.linear_combination(1.0, other, -1.0)
    }
}

fn check_finite(values: &DVector<f64>) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Verifies that all inputs share one grid and returns it.
pub fn common_grid(inputs: &[FunctionalInput]) -> Result<&Arc<QuadratureGrid>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InsufficientData("no functional inputs".into()))?;
    for g in &inputs[1..] {
        first.ensure_same_grid(g)?;
    }
    Ok(first.grid())
}

/// Samples an analytic expression at the grid nodes.
pub fn sample_function(expr: &Expr, grid: &Arc<QuadratureGrid>) -> Result<FunctionalInput> {
    let d = grid.dim();
    if expr.arity() > d {
        return Err(Error::UndefinedVariable {
            name: format!("x{}", expr.arity()),
            dim: d,
        });
    }
    let g = FunctionalInput::from_fn(grid.clone(), |x| expr.eval(x))?;
    Ok(g.with_label(expr.to_string()))
}

/// Parses and samples an expression in one step.
pub fn sample_expression(text: &str, grid: &Arc<QuadratureGrid>) -> Result<FunctionalInput> {
    let expr = Expr::parse(text)?;
    Ok(sample_function(&expr, grid)?.with_label(text))
}

/// `Σ_i w_i g1_i g2_i ≈ ∫_Ω g1 g2`
pub fn l2_inner(g1: &FunctionalInput, g2: &FunctionalInput) -> Result<f64> {
    g1.ensure_same_grid(g2)?;
    Ok(weighted_dot(g1.grid.weights(), &g1.values, &g2.values))
}

pub fn l2_norm(g: &FunctionalInput) -> f64 {
    weighted_dot(g.grid.weights(), &g.values, &g.values)
        .max(0.0)
        .sqrt()
}

/// `‖g1 − g2‖_{L2}` without materializing the difference.
pub fn l2_distance(g1: &FunctionalInput, g2: &FunctionalInput) -> Result<f64> {
    g1.ensure_same_grid(g2)?;
    let w = g1.grid.weights();
    let s: f64 = (0..w.len())
        .map(|i| {
            let d = g1.values[i] - g2.values[i];
            w[i] * d * d
        })
        .sum();
    Ok(s.max(0.0).sqrt())
}

fn weighted_dot(w: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    // fixed summation order keeps ⟨a,b⟩ == ⟨b,a⟩ bit-for-bit
    (0..w.len()).map(|i| w[i] * (a[i] * b[i])).sum()
}

/// Named pointwise maps `M` applied to input values before a linear kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointwiseMap {
    Identity,
    Square,
    Cube,
    Sin,
    Cos,
    Exp,
    Abs,
}

impl PointwiseMap {
    pub const ALL: [PointwiseMap; 7] = [
        PointwiseMap::Identity,
        PointwiseMap::Square,
        PointwiseMap::Cube,
        PointwiseMap::Sin,
        PointwiseMap::Cos,
        PointwiseMap::Exp,
        PointwiseMap::Abs,
    ];

    pub fn apply(self, v: f64) -> f64 {
        match self {
            PointwiseMap::Identity => v,
            PointwiseMap::Square => v * v,
            PointwiseMap::Cube => v * v * v,
            PointwiseMap::Sin => v.sin(),
            PointwiseMap::Cos => v.cos(),
            PointwiseMap::Exp => v.exp(),
            PointwiseMap::Abs => v.abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PointwiseMap::Identity => "identity",
            PointwiseMap::Square => "square",
            PointwiseMap::Cube => "cube",
            PointwiseMap::Sin => "sin",
            PointwiseMap::Cos => "cos",
            PointwiseMap::Exp => "exp",
            PointwiseMap::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// `(M∘g)(x_i) = M(g(x_i))` on the same grid.
pub fn apply_pointwise_map(
    g: &FunctionalInput,
    map: impl Fn(f64) -> f64,
) -> Result<FunctionalInput> {
    let values = g.values.map(map);
    let mut out = FunctionalInput::from_values(g.grid.clone(), values)?;
    out.label = g.label.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_square(res: usize) -> Arc<QuadratureGrid> {
        Arc::new(
            QuadratureGrid::new(
                Domain::unit_cube(2).unwrap(),
                res,
                QuadratureRule::GaussLegendre,
            )
            .unwrap(),
        )
    }

    fn input(text: &str, grid: &Arc<QuadratureGrid>) -> FunctionalInput {
        sample_expression(text, grid).unwrap()
    }

    #[test]
    fn rejects_bad_domains_and_resolution() {
        assert!(Domain::new(vec![]).is_err());
        assert!(Domain::new(vec![(1.0, 1.0)]).is_err());
        assert!(Domain::new(vec![(0.0, f64::INFINITY)]).is_err());
        let d = Domain::unit_cube(1).unwrap();
        assert_eq!(
            QuadratureGrid::new(d, 1, QuadratureRule::GaussLegendre),
            Err(Error::Resolution(1))
        );
    }

    #[test]
    fn unit_square_grid_has_unit_volume() {
        let g = unit_square(20);
        assert_eq!(g.len(), 400);
        assert_relative_eq!(g.weights().sum(), 1.0, max_relative = 1e-12);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!(g.nodes().all(|x| g.domain().contains(x)));
    }

    #[test]
    fn periodic_interval_weights_sum_to_two_pi() {
        for rule in [QuadratureRule::GaussLegendre, QuadratureRule::UniformMidpoint] {
            let g = QuadratureGrid::new(Domain::periodic_interval(), 64, rule).unwrap();
            assert_relative_eq!(g.weights().sum(), 2.0 * PI, max_relative = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_small_rules_match_known_values() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[2], (0.6f64).sqrt(), epsilon = 1e-15);
        assert_eq!(x[1], 0.0);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w[0], 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_legendre_is_exact_up_to_degree_2n_minus_1() {
        for n in [2usize, 5, 12, 20, 64] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) as i32 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!(
                    (q - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "n={n} deg={deg}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn sampled_expressions_match_pointwise_evaluation() {
        let g = unit_square(20);
        let one = input("1", &g);
        assert!(one.values().iter().all(|&v| v == 1.0));
        let sum = input("x1+x2", &g);
        for (i, x) in g.nodes().enumerate() {
            assert_eq!(sum.values()[i], x[0] + x[1]);
        }

        let line = Arc::new(QuadratureGrid::gauss_legendre(Domain::periodic_interval()).unwrap());
        let s = input("sin(0.5*x1)", &line);
        for (i, x) in line.nodes().enumerate() {
            assert!((s.values()[i] - (0.5 * x[0]).sin()).abs() <= 1e-14);
        }
    }

    #[test]
    fn sample_function_rejects_undefined_variables_and_non_finite_values() {
        let line = Arc::new(QuadratureGrid::gauss_legendre(Domain::unit_cube(1).unwrap()).unwrap());
        assert!(matches!(
            sample_expression("x1 + x2", &line),
            Err(Error::UndefinedVariable { .. })
        ));
        assert!(matches!(
            sample_expression("1/(x1 - x1)", &line),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn inner_products_on_unit_square() {
        let g = unit_square(20);
        let one = input("1", &g);
        assert_relative_eq!(l2_inner(&one, &one).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            l2_inner(&input("x1+x2", &g), &one).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let x1 = input("x1", &g);
        assert_relative_eq!(l2_inner(&x1, &x1).unwrap(), 1.0 / 3.0, epsilon = 1e-10);
        assert_eq!(l2_norm(&input("0", &g)), 0.0);
        assert_relative_eq!(l2_norm(&one), 1.0, epsilon = 1e-12);
        assert_relative_eq!(l2_norm(&x1), 1.0 / 3f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn mixed_grids_are_rejected() {
        let a = input("x1", &unit_square(20));
        let b = input("x1", &unit_square(10));
        assert_eq!(l2_inner(&a, &b), Err(Error::GridMismatch));
        // structurally equal grids built separately are compatible
        let c = input("x1", &unit_square(20));
        assert!(l2_inner(&a, &c).is_ok());
    }

    #[test]
    fn pointwise_maps_reproduce_table_integrals() {
        let g = unit_square(20);
        let one = input("1", &g);
        let s = input("x1+x2", &g);
        let same = apply_pointwise_map(&s, |v| v).unwrap();
        assert_eq!(same.values(), s.values());
        let sq = apply_pointwise_map(&s, |v| PointwiseMap::Square.apply(v)).unwrap();
        assert_relative_eq!(l2_inner(&sq, &one).unwrap(), 7.0 / 6.0, epsilon = 1e-12);
        let sn = apply_pointwise_map(&s, f64::sin).unwrap();
        let exact = 2.0 * 1f64.sin() - 2f64.sin();
        assert_relative_eq!(l2_inner(&sn, &one).unwrap(), exact, epsilon = 1e-12);
        assert!(apply_pointwise_map(&s, |v| 1.0 / (v - v)).is_err());
    }

    #[test]
    fn doubling_resolution_leaves_table_integrals_unchanged() {
        let coarse = unit_square(20);
        let fine = unit_square(40);
        for text in [
            "x1+x2",
            "x1^2",
            "1+x1*x2",
            "sin(x1)",
            "cos(x1+x2)",
        ] {
            for map in [PointwiseMap::Identity, PointwiseMap::Square, PointwiseMap::Sin] {
                let integral = |grid: &Arc<QuadratureGrid>| {
                    let g = apply_pointwise_map(&input(text, grid), |v| map.apply(v)).unwrap();
                    grid.integrate(g.values())
                };
                assert!((integral(&coarse) - integral(&fine)).abs() < 1e-10, "{text}");
            }
        }
    }

    fn poly(grid: &Arc<QuadratureGrid>, c: &[f64]) -> FunctionalInput {
        FunctionalInput::from_fn(grid.clone(), |x| {
            c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[1] + c[4] * x[0] * x[0]
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn inner_product_is_symmetric_bilinear_and_bounded(
            c1 in prop::collection::vec(-2.0f64..2.0, 5),
            c2 in prop::collection::vec(-2.0f64..2.0, 5),
            c3 in prop::collection::vec(-2.0f64..2.0, 5),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let grid = unit_square(8);
            let (g1, g2, h) = (poly(&grid, &c1), poly(&grid, &c2), poly(&grid, &c3));
            prop_assert_eq!(l2_inner(&g1, &g2).unwrap(), l2_inner(&g2, &g1).unwrap());

            let combo = g1.linear_combination(a, &g2, b).unwrap();
            let lhs = l2_inner(&combo, &h).unwrap();
            let rhs = a * l2_inner(&g1, &h).unwrap() + b * l2_inner(&g2, &h).unwrap();
            let scale = (a.abs() * l2_norm(&g1) + b.abs() * l2_norm(&g2)) * l2_norm(&h);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));

            let cs = l2_inner(&g1, &g2).unwrap().abs();
            prop_assert!(cs <= l2_norm(&g1) * l2_norm(&g2) + 1e-12);
        }
    }
}
