//! Assembly of the discrete generalized eigenproblem (H, M) per angular
//! momentum and of the Hartree Poisson linear system, plus the shared
//! quadrature-integral kernel.
//!
//! Element-local coupling only: all matrices are banded with half-bandwidth
//! equal to the polynomial order.

use crate::mesh::RadialMesh;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Banded square matrix with half-bandwidth `hb`; entry (i, j) is stored iff
/// |i - j| <= hb.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    dim: usize,
    half_bandwidth: usize,
    symmetric: bool,
    /// row-major band storage: data[i * (2 hb + 1) + (j - i + hb)]
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(dim: usize, half_bandwidth: usize, symmetric: bool) -> Self {
        BandedMatrix {
            dim,
            half_bandwidth,
            symmetric,
            data: vec![0.0; dim * (2 * half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let hb = self.half_bandwidth as isize;
        let d = j as isize - i as isize;
        if d.abs() > hb || i >= self.dim || j >= self.dim {
            None
        } else {
            Some(i * (2 * self.half_bandwidth + 1) + (d + hb) as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| self.data[o])
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j).expect("entry outside band");
        self.data[o] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j).expect("entry outside band");
        self.data[o] += v;
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let hb = self.half_bandwidth;
        let width = 2 * hb + 1;
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let j_lo = i.saturating_sub(hb);
            let j_hi = (i + hb).min(self.dim - 1);
            let row = &self.data[i * width..(i + 1) * width];
            let mut acc = 0.0;
            for j in j_lo..=j_hi {
                acc += row[j + hb - i] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let hb = self.half_bandwidth;
        let width = 2 * hb + 1;
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let j_lo = i.saturating_sub(hb);
            let j_hi = (i + hb).min(self.dim - 1);
            let row = &self.data[i * width..(i + 1) * width];
            for j in j_lo..=j_hi {
                y[j] += row[j + hb - i] * x[i];
            }
        }
        y
    }

    /// Apply to every column of a block.
    pub fn matmul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim);
        let mut out = DMatrix::zeros(self.dim, x.ncols());
        let mut col = vec![0.0; self.dim];
        for c in 0..x.ncols() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = x[(i, c)];
            }
            let y = self.matvec(&col);
            for (i, v) in y.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        out
    }

    pub fn apply_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.matvec(x.as_slice()))
    }

    /// c1 * self + c2 * other, requiring identical layout.
    pub fn linear_combination(&self, c1: f64, other: &BandedMatrix, c2: f64) -> BandedMatrix {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.half_bandwidth, other.half_bandwidth);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| c1 * a + c2 * b)
            .collect();
        BandedMatrix {
            dim: self.dim,
            half_bandwidth: self.half_bandwidth,
            symmetric: self.symmetric && other.symmetric,
            data,
        }
    }

    /// Submatrix over the contiguous index range `lo..hi`.
    pub fn submatrix(&self, lo: usize, hi: usize) -> BandedMatrix {
        assert!(lo < hi && hi <= self.dim);
        let mut out = BandedMatrix::zeros(hi - lo, self.half_bandwidth, self.symmetric);
        for i in lo..hi {
            let j_lo = i.saturating_sub(self.half_bandwidth).max(lo);
            let j_hi = (i + self.half_bandwidth + 1).min(hi);
            for j in j_lo..j_hi {
                out.set(i - lo, j - lo, self.get(i, j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let j_lo = i.saturating_sub(self.half_bandwidth);
            let j_hi = (i + self.half_bandwidth).min(self.dim - 1);
            for j in j_lo..=j_hi {
                out[(i, j)] = self.get(i, j);
            }
        }
        out
    }

    /// Max-norm of A - A^T; zero for exactly symmetric assembly.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            let j_hi = (i + self.half_bandwidth).min(self.dim - 1);
            for j in i + 1..=j_hi {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Weight applied inside [`quadrature_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralWeight {
    One,
    R,
    RSquared,
}

/// Integral over [0, R] of f(r) * weight(r), with f sampled at all quadrature
/// points (element-major). The shared kernel behind every energy integral.
pub fn quadrature_integral(mesh: &RadialMesh, f: &[f64], weight: IntegralWeight) -> Result<f64> {
    if f.len() != mesh.num_quad_points() {
        return Err(Error::InvalidArgument(format!(
            "expected {} quadrature values, got {}",
            mesh.num_quad_points(),
            f.len()
        )));
    }
    let n_q = mesh.quad_per_element();
    let weights = mesh.basis().quadrature().weights();
    let mut total = 0.0;
    for k in 0..mesh.num_elements() {
        let (a, b) = mesh.element_extent(k);
        let jac = 0.5 * (b - a);
        let mut acc = 0.0;
        for q in 0..n_q {
            let idx = k * n_q + q;
            let r = mesh.quad_radii()[idx];
            let w = match weight {
                IntegralWeight::One => 1.0,
                IntegralWeight::R => r,
                IntegralWeight::RSquared => r * r,
            };
            acc += weights[q] * f[idx] * w;
        }
        total += acc * jac;
    }
    Ok(total)
}

/// Assemble H and M over all degrees of freedom, before boundary conditions.
///
/// H_ij = 1/2 int phi_i' phi_j' + int (l(l+1)/(2 r^2) + V_eff) phi_i phi_j,
/// M_ij = int phi_i phi_j, with V_eff given at the quadrature points.
pub fn assemble_eigensystem_full(
    mesh: &RadialMesh,
    veff: &[f64],
    l: usize,
) -> Result<(BandedMatrix, BandedMatrix)> {
    if veff.len() != mesh.num_quad_points() {
        return Err(Error::InvalidArgument(format!(
            "expected {} effective-potential values, got {}",
            mesh.num_quad_points(),
            veff.len()
        )));
    }
    let p = mesh.order();
    let n_dof = mesh.num_nodes();
    let n_q = mesh.quad_per_element();
    let weights = mesh.basis().quadrature().weights();
    let centrifugal = (l * (l + 1)) as f64 / 2.0;

    let mut h = BandedMatrix::zeros(n_dof, p, true);
    let mut m = BandedMatrix::zeros(n_dof, p, true);
    for k in 0..mesh.num_elements() {
        let (a, b) = mesh.element_extent(k);
        let half = 0.5 * (b - a);
        let kin_scale = 0.5 * 2.0 / (b - a); // 1/2 * (dphi/dr)^2 jacobians combined
        for i in 0..=p {
            for j in i..=p {
                let mut kin = 0.0;
                let mut pot = 0.0;
                let mut mass = 0.0;
                for q in 0..n_q {
                    let sv = &mesh.basis().shape_values()[q];
                    let sd = &mesh.basis().shape_derivs()[q];
                    let r = mesh.quad_radii()[k * n_q + q];
                    let v = veff[k * n_q + q] + centrifugal / (r * r);
                    kin += weights[q] * sd[i] * sd[j];
                    let pp = weights[q] * sv[i] * sv[j];
                    pot += pp * v;
                    mass += pp;
                }
                let h_val = kin_scale * kin + half * pot;
                let m_val = half * mass;
                let (gi, gj) = (k * p + i, k * p + j);
                h.add(gi, gj, h_val);
                m.add(gi, gj, m_val);
                if i != j {
                    h.add(gj, gi, h_val);
                    m.add(gj, gi, m_val);
                }
            }
        }
    }
    Ok((h, m))
}

/// Eigensystem over interior degrees of freedom, with the zero Dirichlet
/// conditions P(0) = P(R) = 0 imposed by row/column elimination.
pub fn assemble_eigensystem(
    mesh: &RadialMesh,
    veff: &[f64],
    l: usize,
) -> Result<(BandedMatrix, BandedMatrix)> {
    let (h, m) = assemble_eigensystem_full(mesh, veff, l)?;
    let n = mesh.num_nodes();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "mesh too small for an interior eigenproblem".into(),
        ));
    }
    Ok((h.submatrix(1, n - 1), m.submatrix(1, n - 1)))
}

/// Discrete Hartree problem A V = b with the Dirichlet value V(R) = Q/R
/// eliminated; the unknowns are the remaining n_dof - 1 coefficients
/// (the r = 0 value stays free, its V'(0) = 0 condition being natural).
#[derive(Debug, Clone)]
pub struct HartreeSystem {
    matrix: BandedMatrix,
    rhs: Vec<f64>,
    dirichlet_value: f64,
}

impl HartreeSystem {
    pub fn matrix(&self) -> &BandedMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Boundary value Q/R pinned at the last degree of freedom.
    pub fn dirichlet_value(&self) -> f64 {
        self.dirichlet_value
    }

    /// Extend a reduced solution with the eliminated boundary value.
    pub fn expand_solution(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(reduced.len() + 1);
        full.extend_from_slice(reduced);
        full.push(self.dirichlet_value);
        full
    }
}

/// Assemble the Hartree system for a density given at the quadrature points.
///
/// A_ij = int phi_j' phi_i' - (2/r) phi_i phi_j' dr, b_i = 4 pi int rho phi_i dr.
/// The total charge Q = 4 pi int rho r^2 dr sets the outer boundary value Q/R.
pub fn assemble_hartree(mesh: &RadialMesh, rho: &[f64]) -> Result<HartreeSystem> {
    if rho.len() != mesh.num_quad_points() {
        return Err(Error::InvalidArgument(format!(
            "expected {} density values, got {}",
            mesh.num_quad_points(),
            rho.len()
        )));
    }
    if rho.iter().any(|&v| v < -1e-12) {
        return Err(Error::InvalidArgument(
            "density has negative values".into(),
        ));
    }
    let p = mesh.order();
    let n_dof = mesh.num_nodes();
    let n_q = mesh.quad_per_element();
    let weights = mesh.basis().quadrature().weights();

    let mut a = BandedMatrix::zeros(n_dof, p, false);
    let mut b = vec![0.0; n_dof];
    for k in 0..mesh.num_elements() {
        let (x0, x1) = mesh.element_extent(k);
        let half = 0.5 * (x1 - x0);
        let stiff_scale = 2.0 / (x1 - x0);
        for i in 0..=p {
            let gi = k * p + i;
            let mut rhs_acc = 0.0;
            for q in 0..n_q {
                rhs_acc += weights[q] * rho[k * n_q + q] * mesh.basis().shape_values()[q][i];
            }
            b[gi] += 4.0 * std::f64::consts::PI * half * rhs_acc;
            for j in 0..=p {
                let mut stiff = 0.0;
                let mut conv = 0.0;
                for q in 0..n_q {
                    let sv = &mesh.basis().shape_values()[q];
                    let sd = &mesh.basis().shape_derivs()[q];
                    let r = mesh.quad_radii()[k * n_q + q];
                    stiff += weights[q] * sd[i] * sd[j];
                    // jacobian cancels against dphi_j/dr in the first-order term
                    conv += weights[q] * (2.0 / r) * sv[i] * sd[j];
                }
                a.add(gi, k * p + j, stiff_scale * stiff - conv);
            }
        }
    }

    let charge = quadrature_integral(mesh, rho, IntegralWeight::RSquared)?
        * 4.0
        * std::f64::consts::PI;
    let dirichlet_value = charge / mesh.r_max();

    // move the known boundary column to the right-hand side, then drop it
    let last = n_dof - 1;
    for i in last.saturating_sub(p)..last {
        b[i] -= a.get(i, last) * dirichlet_value;
    }
    let matrix = a.submatrix(0, last);
    b.truncate(last);
    Ok(HartreeSystem {
        matrix,
        rhs: b,
        dirichlet_value,
    })
}
