//! Reference-element machinery: Gauss-Legendre quadrature rules and nodal
//! Lagrange bases on Gauss-Lobatto points, with evaluation tables.
//!
//! Everything here lives on the reference interval [-1, 1]; meshes map these
//! entities affinely onto physical elements.

use crate::{Error, Result};
use std::f64::consts::PI;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAXIT: usize = 100;

/// Legendre polynomial P_n(t) and its derivative via the three-term recurrence.
///
/// The derivative uses P'_n = n (t P_n - P_{n-1}) / (t^2 - 1), which is only
/// evaluated at strictly interior points.
fn legendre_with_deriv(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = t;
    for k in 1..n {
        let p_next = ((2 * k + 1) as f64 * t * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (t * p - p_prev) / (t * t - 1.0);
    (p, dp)
}

/// A Gauss-Legendre quadrature rule on [-1, 1].
///
/// An n-point rule integrates polynomials up to degree 2n-1 exactly, and its
/// points are strictly interior, so integrands with 1/r or 1/r^2 factors are
/// never evaluated at an element endpoint.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate a function given by its values at the quadrature points.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} quadrature values, got {}",
                self.points.len(),
                values.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum())
    }
}

/// The n-point Gauss-Legendre rule on [-1, 1].
///
/// Nodes are found by Newton iteration on P_n starting from the Chebyshev
/// estimates, so any order works without tables.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n < 1 {
        return Err(Error::InvalidArgument(format!(
            "quadrature rule needs at least one point, got {n}"
        )));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // i-th root from the right
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAXIT {
            let (p, dp) = legendre_with_deriv(n, t);
            let step = p / dp;
            t -= step;
            if step.abs() < NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        points[n - 1 - i] = t;
        points[i] = -t;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(QuadratureRule { points, weights })
}

/// The p+1 Gauss-Lobatto points on [-1, 1]: the endpoints plus the roots of
/// P'_p, found by Newton iteration with P'' from the Legendre ODE.
pub fn gauss_lobatto_points(p: usize) -> Result<Vec<f64>> {
    if p < 1 {
        return Err(Error::InvalidArgument(format!(
            "Lobatto point set needs order >= 1, got {p}"
        )));
    }
    let mut nodes = vec![0.0; p + 1];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    for i in 1..p {
        // Chebyshev-Lobatto estimate, ascending in i
        let mut t = (PI * (p - i) as f64 / p as f64).cos();
        for _ in 0..NEWTON_MAXIT {
            let (pn, dpn) = legendre_with_deriv(p, t);
            let ddpn = (2.0 * t * dpn - (p * (p + 1)) as f64 * pn) / (1.0 - t * t);
            let step = dpn / ddpn;
            t -= step;
            if step.abs() < NEWTON_TOL {
                break;
            }
        }
        nodes[i] = t;
    }
    // enforce exact symmetry
    for i in 0..(p + 1) / 2 {
        let a = 0.5 * (nodes[p - i] - nodes[i]);
        nodes[i] = -a;
        nodes[p - i] = a;
    }
    if p % 2 == 0 {
        nodes[p / 2] = 0.0;
    }
    Ok(nodes)
}

/// Nodal Lagrange basis of order p on the Gauss-Lobatto points, together with
/// its evaluation tables at the quadrature points of an attached rule.
///
/// Basis function j is the cardinal polynomial that is 1 at node j and 0 at
/// the others. Point evaluation uses the barycentric form; exact node hits
/// fall back to the differentiation matrix.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    order: usize,
    nodes: Vec<f64>,
    bary_weights: Vec<f64>,
    /// diff_matrix[i][j] = phi_j'(node_i)
    diff_matrix: Vec<Vec<f64>>,
    quad: QuadratureRule,
    /// shape_values[q][j] = phi_j(t_q)
    shape_values: Vec<Vec<f64>>,
    /// shape_derivs[q][j] = phi_j'(t_q)
    shape_derivs: Vec<Vec<f64>>,
}

/// Tolerance under which an evaluation point is treated as a basis node.
const NODE_SNAP: f64 = 1e-13;

impl ElementBasis {
    /// Basis of order p with an n_q-point Gauss-Legendre rule attached.
    pub fn with_quadrature(p: usize, n_q: usize) -> Result<Self> {
        if p < 1 {
            return Err(Error::InvalidArgument(format!(
                "basis order must be >= 1, got {p}"
            )));
        }
        let nodes = gauss_lobatto_points(p)?;
        let quad = gauss_legendre(n_q)?;

        let mut bary_weights = vec![0.0; p + 1];
        for j in 0..=p {
            let mut w = 1.0;
            for k in 0..=p {
                if k != j {
                    w *= nodes[j] - nodes[k];
                }
            }
            bary_weights[j] = 1.0 / w;
        }

        let mut diff_matrix = vec![vec![0.0; p + 1]; p + 1];
        for i in 0..=p {
            let mut row_sum = 0.0;
            for j in 0..=p {
                if i != j {
                    let d = (bary_weights[j] / bary_weights[i]) / (nodes[i] - nodes[j]);
                    diff_matrix[i][j] = d;
                    row_sum += d;
                }
            }
            diff_matrix[i][i] = -row_sum;
        }

        let mut basis = ElementBasis {
            order: p,
            nodes,
            bary_weights,
            diff_matrix,
            quad,
            shape_values: Vec::new(),
            shape_derivs: Vec::new(),
        };
        basis.shape_values = basis
            .quad
            .points()
            .iter()
            .map(|&t| basis.eval_shapes(t))
            .collect::<Result<_>>()?;
        basis.shape_derivs = basis
            .quad
            .points()
            .iter()
            .map(|&t| basis.eval_shape_derivs(t))
            .collect::<Result<_>>()?;
        Ok(basis)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_nodes(&self) -> usize {
        self.order + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    /// phi_j(t_q) table, indexed [q][j].
    pub fn shape_values(&self) -> &[Vec<f64>] {
        &self.shape_values
    }

    /// phi_j'(t_q) table, indexed [q][j].
    pub fn shape_derivs(&self) -> &[Vec<f64>] {
        &self.shape_derivs
    }

    fn check_point(&self, t: f64) -> Result<()> {
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "evaluation point {t} outside [-1, 1]"
            )));
        }
        Ok(())
    }

    fn node_index_at(&self, t: f64) -> Option<usize> {
        self.nodes.iter().position(|&x| (t - x).abs() < NODE_SNAP)
    }

    /// All shape functions at t.
    pub fn eval_shapes(&self, t: f64) -> Result<Vec<f64>> {
        self.check_point(t)?;
        let m = self.num_nodes();
        if let Some(i) = self.node_index_at(t) {
            let mut vals = vec![0.0; m];
            vals[i] = 1.0;
            return Ok(vals);
        }
        let mut terms = vec![0.0; m];
        let mut sum = 0.0;
        for j in 0..m {
            terms[j] = self.bary_weights[j] / (t - self.nodes[j]);
            sum += terms[j];
        }
        Ok(terms.into_iter().map(|v| v / sum).collect())
    }

    /// All shape-function derivatives (d/dt) at t.
    pub fn eval_shape_derivs(&self, t: f64) -> Result<Vec<f64>> {
        self.check_point(t)?;
        let m = self.num_nodes();
        if let Some(i) = self.node_index_at(t) {
            return Ok(self.diff_matrix[i].clone());
        }
        let shapes = self.eval_shapes(t)?;
        let mut derivs = vec![0.0; m];
        for j in 0..m {
            // l_j'/l_j = sum_{k != j} 1/(t - x_k), exact off the nodes
            let mut s = 0.0;
            for k in 0..m {
                if k != j {
                    s += 1.0 / (t - self.nodes[k]);
                }
            }
            derivs[j] = shapes[j] * s;
        }
        Ok(derivs)
    }

    /// Value of the finite element function with the given nodal coefficients.
    pub fn eval_fe_function(&self, coeffs: &[f64], t: f64) -> Result<f64> {
        self.check_coeffs(coeffs)?;
        let shapes = self.eval_shapes(t)?;
        Ok(shapes.iter().zip(coeffs).map(|(s, c)| s * c).sum())
    }

    /// Derivative (d/dt) of the finite element function at t.
    pub fn eval_fe_derivative(&self, coeffs: &[f64], t: f64) -> Result<f64> {
        self.check_coeffs(coeffs)?;
        let derivs = self.eval_shape_derivs(t)?;
        Ok(derivs.iter().zip(coeffs).map(|(d, c)| d * c).sum())
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                self.num_nodes(),
                coeffs.len()
            )));
        }
        Ok(())
    }
}

/// Order-p nodal basis on Gauss-Lobatto points with the default p+2 point
/// quadrature, which absorbs the non-polynomial potential factors.
pub fn lobatto_basis(p: usize) -> Result<ElementBasis> {
    ElementBasis::with_quadrature(p, p + 2)
}
