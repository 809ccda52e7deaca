//! The radial mesh on [0, R] and the moving-mesh machinery: monitor function,
//! equidistribution solve, Thomas algorithm, and solution transfer.
//!
//! Only element boundaries move during redistribution; the nodes inside each
//! element stay at affinely mapped Gauss-Lobatto positions so the finite
//! element space remains conforming.

use crate::quadrature::ElementBasis;
use crate::{Error, Result};

/// High-order finite element mesh on [0, R].
///
/// Global degrees of freedom are the per-element Lobatto nodes, shared at
/// element interfaces: `n_ele * p + 1` of them, with node 0 at r = 0 and the
/// last node at r = R.
#[derive(Debug, Clone)]
pub struct RadialMesh {
    r_max: f64,
    boundaries: Vec<f64>,
    nodes: Vec<f64>,
    basis: ElementBasis,
    /// physical radii of all quadrature points, element-major
    quad_radii: Vec<f64>,
}

impl RadialMesh {
    /// Uniform mesh with the default quadrature (p+2 points per element).
    pub fn uniform(r_max: f64, n_ele: usize, p: usize) -> Result<Self> {
        Self::uniform_with_quadrature(r_max, n_ele, p, p + 2)
    }

    pub fn uniform_with_quadrature(
        r_max: f64,
        n_ele: usize,
        p: usize,
        n_q: usize,
    ) -> Result<Self> {
        if r_max <= 0.0 || !r_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "domain radius must be positive, got {r_max}"
            )));
        }
        if n_ele < 1 {
            return Err(Error::InvalidArgument("need at least one element".into()));
        }
        let h = r_max / n_ele as f64;
        let mut boundaries: Vec<f64> = (0..=n_ele).map(|i| i as f64 * h).collect();
        boundaries[n_ele] = r_max;
        let basis = ElementBasis::with_quadrature(p, n_q)?;
        Self::from_parts(boundaries, basis)
    }

    /// Mesh over explicit element boundaries, reusing a reference basis.
    pub fn from_boundaries(boundaries: Vec<f64>, basis: ElementBasis) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidArgument(
                "mesh needs at least two boundaries".into(),
            ));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first boundary must be 0, got {}",
                boundaries[0]
            )));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "boundaries must be strictly increasing".into(),
            ));
        }
        Self::from_parts(boundaries, basis)
    }

    fn from_parts(boundaries: Vec<f64>, basis: ElementBasis) -> Result<Self> {
        let n_ele = boundaries.len() - 1;
        let p = basis.order();
        let r_max = boundaries[n_ele];
        let mut nodes = vec![0.0; n_ele * p + 1];
        let mut quad_radii = Vec::with_capacity(n_ele * basis.quadrature().len());
        for k in 0..n_ele {
            let (a, b) = (boundaries[k], boundaries[k + 1]);
            let half = 0.5 * (b - a);
            nodes[k * p] = a;
            for j in 1..p {
                nodes[k * p + j] = a + (basis.nodes()[j] + 1.0) * half;
            }
            for &t in basis.quadrature().points() {
                quad_radii.push(a + (t + 1.0) * half);
            }
        }
        nodes[n_ele * p] = r_max;
        Ok(RadialMesh {
            r_max,
            boundaries,
            nodes,
            basis,
            quad_radii,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn num_elements(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Global node coordinates, n_ele * p + 1 of them.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn basis(&self) -> &ElementBasis {
        &self.basis
    }

    pub fn element_extent(&self, k: usize) -> (f64, f64) {
        (self.boundaries[k], self.boundaries[k + 1])
    }

    /// Quadrature points per element.
    pub fn quad_per_element(&self) -> usize {
        self.basis.quadrature().len()
    }

    /// Physical radii of all quadrature points, element-major.
    pub fn quad_radii(&self) -> &[f64] {
        &self.quad_radii
    }

    pub fn num_quad_points(&self) -> usize {
        self.quad_radii.len()
    }

    /// Index of the element containing r (boundary points resolve to the
    /// element on their right, except r = R).
    pub fn element_of(&self, r: f64) -> Result<usize> {
        if !(0.0..=self.r_max * (1.0 + 1e-12)).contains(&r) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside [0, {}]",
                self.r_max
            )));
        }
        let n_ele = self.num_elements();
        let k = match self
            .boundaries
            .binary_search_by(|b| b.partial_cmp(&r).unwrap())
        {
            Ok(i) => i.min(n_ele - 1),
            Err(i) => i - 1,
        };
        Ok(k.min(n_ele - 1))
    }

    /// Map a physical radius inside element k to the reference coordinate.
    pub fn to_reference(&self, k: usize, r: f64) -> f64 {
        let (a, b) = self.element_extent(k);
        let t = 2.0 * (r - a) / (b - a) - 1.0;
        t.clamp(-1.0, 1.0)
    }

    /// Nodal coefficients of element k out of a global FE vector.
    pub fn element_coeffs<'a>(&self, global: &'a [f64], k: usize) -> &'a [f64] {
        let p = self.order();
        &global[k * p..=k * p + p]
    }

    /// Evaluate a global FE function at an arbitrary radius.
    pub fn eval_function(&self, coeffs: &[f64], r: f64) -> Result<f64> {
        self.check_global(coeffs)?;
        let k = self.element_of(r)?;
        let t = self.to_reference(k, r);
        self.basis.eval_fe_function(self.element_coeffs(coeffs, k), t)
    }

    /// Evaluate d/dr of a global FE function at an arbitrary radius.
    pub fn eval_derivative(&self, coeffs: &[f64], r: f64) -> Result<f64> {
        self.check_global(coeffs)?;
        let k = self.element_of(r)?;
        let (a, b) = self.element_extent(k);
        let t = self.to_reference(k, r);
        let dt = self
            .basis
            .eval_fe_derivative(self.element_coeffs(coeffs, k), t)?;
        Ok(dt * 2.0 / (b - a))
    }

    /// Interpolate a global FE vector to all quadrature points, element-major.
    pub fn eval_at_quad(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_global(coeffs)?;
        let n_q = self.quad_per_element();
        let mut out = Vec::with_capacity(self.num_quad_points());
        for k in 0..self.num_elements() {
            let local = self.element_coeffs(coeffs, k);
            for q in 0..n_q {
                let row = &self.basis.shape_values()[q];
                out.push(row.iter().zip(local).map(|(s, c)| s * c).sum());
            }
        }
        Ok(out)
    }

    /// d/dr of a global FE vector at all quadrature points, element-major.
    pub fn eval_derivative_at_quad(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_global(coeffs)?;
        let n_q = self.quad_per_element();
        let mut out = Vec::with_capacity(self.num_quad_points());
        for k in 0..self.num_elements() {
            let (a, b) = self.element_extent(k);
            let scale = 2.0 / (b - a);
            let local = self.element_coeffs(coeffs, k);
            for q in 0..n_q {
                let row = &self.basis.shape_derivs()[q];
                let d: f64 = row.iter().zip(local).map(|(s, c)| s * c).sum();
                out.push(d * scale);
            }
        }
        Ok(out)
    }

    fn check_global(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "expected {} global coefficients, got {}",
                self.num_nodes(),
                coeffs.len()
            )));
        }
        Ok(())
    }
}

/// Monitor function samples at element midpoints, all >= sqrt(alpha) > 0.
#[derive(Debug, Clone)]
pub struct MonitorSamples {
    values: Vec<f64>,
    alpha: f64,
}

impl MonitorSamples {
    pub fn new(values: Vec<f64>, alpha: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "monitor regularization must be positive, got {alpha}"
            )));
        }
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(
                "monitor samples must be positive".into(),
            ));
        }
        Ok(MonitorSamples { values, alpha })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Arc-length style monitor: sqrt(alpha + sum over orbitals of (dP/dx)^2),
/// sampled at every element midpoint. The sum runs over the supplied
/// (occupied) wavefunctions.
pub fn monitor_from_orbitals(
    mesh: &RadialMesh,
    orbital_coeffs: &[Vec<f64>],
    alpha: f64,
) -> Result<MonitorSamples> {
    monitor_on_mesh(mesh, orbital_coeffs, alpha, mesh)
}

/// Same monitor, sampled at the element midpoints of `target` while the
/// orbitals stay finite element functions on `orbital_mesh`.
pub fn monitor_on_mesh(
    orbital_mesh: &RadialMesh,
    orbital_coeffs: &[Vec<f64>],
    alpha: f64,
    target: &RadialMesh,
) -> Result<MonitorSamples> {
    if orbital_coeffs.is_empty() {
        return Err(Error::InvalidArgument(
            "monitor needs at least one orbital".into(),
        ));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "monitor regularization must be positive, got {alpha}"
        )));
    }
    let mut values = Vec::with_capacity(target.num_elements());
    for k in 0..target.num_elements() {
        let (a, b) = target.element_extent(k);
        let midpoint = 0.5 * (a + b);
        let mut sum = alpha;
        for coeffs in orbital_coeffs {
            let d = orbital_mesh.eval_derivative(coeffs, midpoint)?;
            sum += d * d;
        }
        values.push(sum.sqrt());
    }
    MonitorSamples::new(values, alpha)
}

/// Drive the semi-implicit equidistribution update to its fixed point for a
/// frozen set of orbitals: each sweep re-samples the monitor at the current
/// midpoints and performs one tridiagonal solve. The wavefunctions themselves
/// are not updated here; that is the outer loop's job.
pub fn equidistribute_to_fixed_point(
    mesh: &RadialMesh,
    orbital_coeffs: &[Vec<f64>],
    alpha: f64,
) -> Result<RadialMesh> {
    const MAX_SWEEPS: usize = 400;
    let shift_tol = 1e-12 * mesh.r_max();
    let mut current = mesh.clone();
    for _ in 0..MAX_SWEEPS {
        let monitor = monitor_on_mesh(mesh, orbital_coeffs, alpha, &current)?;
        let next = equidistribute_step(&current, &monitor)?;
        let shift = current
            .boundaries()
            .iter()
            .zip(next.boundaries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = next;
        if shift < shift_tol {
            break;
        }
    }
    Ok(current)
}

/// One semi-implicit equidistribution update: solve the tridiagonal system
/// M_{i+1/2} (x_{i+1} - x_i) - M_{i-1/2} (x_i - x_{i-1}) = 0 for the interior
/// boundaries, with x_0 = 0 and x_N = R held fixed.
pub fn equidistribute_step(mesh: &RadialMesh, monitor: &MonitorSamples) -> Result<RadialMesh> {
    let n_ele = mesh.num_elements();
    if monitor.values().len() != n_ele {
        return Err(Error::InvalidArgument(format!(
            "monitor has {} samples for {} elements",
            monitor.values().len(),
            n_ele
        )));
    }
    if monitor.values().iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument(
            "monitor samples must be positive".into(),
        ));
    }
    if n_ele == 1 {
        return Ok(mesh.clone());
    }
    let m = monitor.values();
    let n = n_ele - 1; // interior boundaries
    let mut sub = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n - 1];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        diag[i] = m[i] + m[i + 1];
        if i > 0 {
            sub[i - 1] = -m[i];
        }
        if i + 1 < n {
            sup[i] = -m[i + 1];
        }
    }
    rhs[0] = m[0] * mesh.boundaries()[0];
    rhs[n - 1] += m[n_ele - 1] * mesh.r_max();
    let interior = thomas_solve(&sub, &diag, &sup, &rhs)?;

    let mut boundaries = Vec::with_capacity(n_ele + 1);
    boundaries.push(0.0);
    boundaries.extend_from_slice(&interior);
    boundaries.push(mesh.r_max());
    if boundaries.windows(2).any(|w| w[1] <= w[0]) {
        // cannot happen for a positive monitor
        return Err(Error::Internal(
            "equidistribution produced a non-monotone mesh".into(),
        ));
    }
    RadialMesh::from_parts(boundaries, mesh.basis.clone())
}

/// Thomas algorithm for a tridiagonal system; O(N).
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || rhs.len() != n || sub.len() + 1 != n || sup.len() + 1 != n {
        return Err(Error::InvalidArgument(format!(
            "inconsistent tridiagonal system: sub {}, diag {}, sup {}, rhs {}",
            sub.len(),
            n,
            sup.len(),
            rhs.len()
        )));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(Error::SingularMatrix("zero pivot in row 0".into()));
    }
    if n > 1 {
        c[0] = sup[0] / piv;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv == 0.0 {
            return Err(Error::SingularMatrix(format!("zero pivot in row {i}")));
        }
        if i + 1 < n {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Transfer a global FE vector from one mesh to another by point evaluation
/// at the new global nodes. Values at r = 0 and r = R carry over exactly.
pub fn interpolate_solution(
    old: &RadialMesh,
    coeffs: &[f64],
    new: &RadialMesh,
) -> Result<Vec<f64>> {
    if (old.r_max() - new.r_max()).abs() > 1e-12 * old.r_max() {
        return Err(Error::InvalidArgument(format!(
            "meshes cover different domains: {} vs {}",
            old.r_max(),
            new.r_max()
        )));
    }
    if old.order() != new.order() {
        return Err(Error::InvalidArgument(format!(
            "meshes have different orders: {} vs {}",
            old.order(),
            new.order()
        )));
    }
    old.check_global(coeffs)?;
    let mut out = Vec::with_capacity(new.num_nodes());
    out.push(coeffs[0]);
    for &r in &new.nodes()[1..new.num_nodes() - 1] {
        out.push(old.eval_function(coeffs, r)?);
    }
    out.push(coeffs[coeffs.len() - 1]);
    Ok(out)
}
