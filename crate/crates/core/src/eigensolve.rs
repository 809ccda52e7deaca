//! Iterative solvers: LOBPCG for the generalized eigenproblem with a
//! per-eigenpair shifted-kinetic preconditioner, BiCG for nonsymmetric banded
//! systems, and dense reference solvers used as test oracles.

use crate::assembly::BandedMatrix;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of a block eigensolve. Eigenvalues ascend and the eigenvector block
/// is M-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// first iteration at which each column's residual dropped below tolerance
    pub converged_at: Vec<Option<usize>>,
    /// Ritz values per iteration
    pub ritz_history: Vec<Vec<f64>>,
    /// residual 2-norms per iteration
    pub residual_history: Vec<Vec<f64>>,
}

/// Per-eigenpair preconditioner: T = L/2 - lambda M for negative shifts,
/// identity otherwise. Applied approximately by a few capped BiCG sweeps;
/// never fails, the best iterate is always returned.
#[derive(Debug, Clone)]
pub enum Preconditioner<'a> {
    Identity,
    ShiftedKinetic {
        /// the kinetic block L/2 of the Hamiltonian
        half_stiffness: &'a BandedMatrix,
        mass: &'a BandedMatrix,
        inner_maxit: usize,
        inner_rtol: f64,
    },
}

impl<'a> Preconditioner<'a> {
    /// Shifted-kinetic preconditioner with the default inner caps.
    pub fn shifted_kinetic(half_stiffness: &'a BandedMatrix, mass: &'a BandedMatrix) -> Self {
        Preconditioner::ShiftedKinetic {
            half_stiffness,
            mass,
            inner_maxit: 30,
            inner_rtol: 1e-2,
        }
    }

    /// Apply the (approximate) inverse to each residual column, using the
    /// current Ritz value of that column as the shift.
    pub fn apply(&self, residuals: &DMatrix<f64>, shifts: &[f64]) -> DMatrix<f64> {
        match self {
            Preconditioner::Identity => residuals.clone(),
            Preconditioner::ShiftedKinetic {
                half_stiffness,
                mass,
                inner_maxit,
                inner_rtol,
            } => {
                let mut out = residuals.clone();
                for c in 0..residuals.ncols() {
                    let shift = shifts.get(c).copied().unwrap_or(0.0);
                    if shift >= 0.0 {
                        continue;
                    }
                    let t = half_stiffness.linear_combination(1.0, mass, -shift);
                    let rhs: Vec<f64> = residuals.column(c).iter().copied().collect();
                    // best-effort by contract: keep whatever BiCG produced
                    if let Ok(sol) = bicg(&t, &rhs, None, *inner_rtol, *inner_maxit) {
                        for (i, v) in sol.x.iter().enumerate() {
                            out[(i, c)] = *v;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Free-function form of [`Preconditioner::apply`].
pub fn apply_preconditioner(
    precond: &Preconditioner,
    residuals: &DMatrix<f64>,
    shifts: &[f64],
) -> DMatrix<f64> {
    precond.apply(residuals, shifts)
}

#[derive(Debug, Clone)]
pub struct LobpcgOptions {
    /// residual 2-norm stopping tolerance
    pub tol: f64,
    pub maxit: usize,
    /// scale each column's tolerance by max(1, |ritz value|)
    pub scale_tol_by_ritz: bool,
    /// seed for any random fallback block
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        LobpcgOptions {
            tol: 1e-9,
            maxit: 2000,
            scale_tol_by_ritz: false,
            seed: 0,
        }
    }
}

const ORTHO_DROP_TOL: f64 = 1e-13;

/// Append candidate columns to an M-orthonormal basis with modified
/// Gram-Schmidt (two passes); near-dependent columns are dropped.
fn append_m_orthonormal(
    m: &BandedMatrix,
    basis: &mut Vec<DVector<f64>>,
    m_basis: &mut Vec<DVector<f64>>,
    candidates: &DMatrix<f64>,
) {
    for c in 0..candidates.ncols() {
        let mut v = candidates.column(c).clone_owned();
        let mut mv = m.apply_vector(&v);
        let norm0_sq = v.dot(&mv);
        if !(norm0_sq > 0.0) {
            continue;
        }
        for _ in 0..2 {
            for (q, mq) in basis.iter().zip(m_basis.iter()) {
                let coeff = mq.dot(&v);
                v.axpy(-coeff, q, 1.0);
            }
            mv = m.apply_vector(&v);
        }
        let norm_sq = v.dot(&mv);
        if !(norm_sq > norm0_sq * ORTHO_DROP_TOL * ORTHO_DROP_TOL) {
            continue;
        }
        let s = norm_sq.sqrt();
        basis.push(v / s);
        m_basis.push(mv / s);
    }
}

/// Dense symmetric eigendecomposition sorted ascending.
fn sorted_sym_eig(mat: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = nalgebra::SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

fn random_block(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0))
}

/// Make the first significant coefficient of every column positive.
fn fix_column_signs(x: &mut DMatrix<f64>) {
    for c in 0..x.ncols() {
        let col = x.column(c);
        let scale = col.amax();
        if scale == 0.0 {
            continue;
        }
        let lead = col.iter().find(|v| v.abs() > 1e-8 * scale);
        if let Some(&v) = lead {
            if v < 0.0 {
                for i in 0..x.nrows() {
                    x[(i, c)] = -x[(i, c)];
                }
            }
        }
    }
}

/// Locally optimal block preconditioned conjugate gradient for the k lowest
/// eigenpairs of the symmetric-definite pencil (H, M).
///
/// The search space per iteration is span[X, precond(residual), P] with P the
/// previous update direction; the basis is kept M-orthonormal so the
/// Rayleigh-Ritz step reduces to a small dense symmetric problem. Stops when
/// every column residual 2-norm is below tolerance or `maxit` is reached; the
/// `converged` flag reports which.
pub fn lobpcg(
    h: &BandedMatrix,
    m: &BandedMatrix,
    k: usize,
    x0: Option<&DMatrix<f64>>,
    precond: &Preconditioner,
    opts: &LobpcgOptions,
) -> Result<EigenSolution> {
    let n = h.dim();
    if m.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "pencil dimension mismatch: {} vs {}",
            n,
            m.dim()
        )));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs from a dimension-{n} pencil"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // initial block: supplied guess topped up with random columns
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut m_basis: Vec<DVector<f64>> = Vec::new();
    if let Some(guess) = x0 {
        if guess.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "initial block has {} rows, expected {n}",
                guess.nrows()
            )));
        }
        append_m_orthonormal(m, &mut basis, &mut m_basis, guess);
        basis.truncate(k);
        m_basis.truncate(k);
    }
    while basis.len() < k {
        let missing = k - basis.len();
        let extra = random_block(n, missing, &mut rng);
        append_m_orthonormal(m, &mut basis, &mut m_basis, &extra);
    }

    let mut x = DMatrix::from_columns(&basis[..k]);
    let mut mx = DMatrix::from_columns(&m_basis[..k]);

    // Rayleigh-Ritz within the initial block
    let mut hx = h.matmul(&x);
    let gram = {
        let g = x.transpose() * &hx;
        (&g + g.transpose()) * 0.5
    };
    let (mut theta, rot) = sorted_sym_eig(gram);
    x *= &rot;
    hx *= &rot;
    mx *= &rot;

    let mut p: Option<DMatrix<f64>> = None;
    let mut ritz_history: Vec<Vec<f64>> = vec![theta.clone()];
    let mut residual_history: Vec<Vec<f64>> = Vec::new();
    let mut converged_at: Vec<Option<usize>> = vec![None; k];
    let mut restarted = false;
    let mut iterations = 0;
    let mut converged = false;
    let mut resnorms = vec![f64::INFINITY; k];

    for it in 0..opts.maxit {
        iterations = it + 1;
        let residual = &hx - &mx * DMatrix::from_diagonal(&DVector::from_vec(theta.clone()));
        for (i, rn) in resnorms.iter_mut().enumerate() {
            *rn = residual.column(i).norm();
        }
        residual_history.push(resnorms.clone());
        let mut all_ok = true;
        for i in 0..k {
            let tol_i = if opts.scale_tol_by_ritz {
                opts.tol * theta[i].abs().max(1.0)
            } else {
                opts.tol
            };
            if resnorms[i] < tol_i {
                if converged_at[i].is_none() {
                    converged_at[i] = Some(it);
                }
            } else {
                all_ok = false;
            }
        }
        if all_ok {
            converged = true;
            break;
        }

        let w = precond.apply(&residual, &theta);

        // M-orthonormal subspace basis [X | W | P]
        basis.clear();
        m_basis.clear();
        for c in 0..k {
            basis.push(x.column(c).clone_owned());
            m_basis.push(mx.column(c).clone_owned());
        }
        append_m_orthonormal(m, &mut basis, &mut m_basis, &w);
        if let Some(p_block) = &p {
            append_m_orthonormal(m, &mut basis, &mut m_basis, p_block);
        }
        if basis.len() == k {
            // no usable new direction; one random restart, then give up
            if restarted {
                return Err(Error::ConvergenceFailure(
                    "LOBPCG subspace collapsed twice".into(),
                ));
            }
            restarted = true;
            let extra = random_block(n, k, &mut rng);
            append_m_orthonormal(m, &mut basis, &mut m_basis, &extra);
            if basis.len() == k {
                return Err(Error::ConvergenceFailure(
                    "LOBPCG could not enlarge its subspace".into(),
                ));
            }
        }

        let s = DMatrix::from_columns(&basis);
        let hs = h.matmul(&s);
        let gram_a = {
            let g = s.transpose() * &hs;
            (&g + g.transpose()) * 0.5
        };
        let (vals, vecs) = sorted_sym_eig(gram_a);
        let c_full = vecs.columns(0, k).clone_owned();
        let theta_new: Vec<f64> = vals[..k].to_vec();

        let x_new = &s * &c_full;
        let ns = basis.len();
        let p_new = if ns > k {
            let s_tail = s.columns(k, ns - k);
            let c_tail = c_full.rows(k, ns - k).clone_owned();
            Some(s_tail * c_tail)
        } else {
            None
        };

        debug_assert!(
            theta_new
                .iter()
                .zip(&theta)
                .all(|(new, old)| *new <= old + 1e-8 * (1.0 + old.abs())),
            "Ritz values must not increase"
        );

        x = x_new;
        hx = h.matmul(&x);
        mx = m.matmul(&x);
        theta = theta_new;
        p = p_new;
        ritz_history.push(theta.clone());
    }

    fix_column_signs(&mut x);
    Ok(EigenSolution {
        eigenvalues: theta,
        eigenvectors: x,
        residual_norms: resnorms,
        iterations,
        converged,
        converged_at,
        ritz_history,
        residual_history,
    })
}

/// Solution of one BiCG run.
#[derive(Debug, Clone)]
pub struct BicgSolution {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Biconjugate gradients for a general (possibly nonsymmetric) banded system.
///
/// Stops at relative residual `tol`; after `maxit` the best iterate seen is
/// returned with `converged = false`. A breakdown (vanishing inner product)
/// triggers one restart from the current iterate before failing.
pub fn bicg(
    a: &BandedMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    maxit: usize,
) -> Result<BicgSolution> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rhs has length {}, expected {n}",
            b.len()
        )));
    }
    if let Some(guess) = x0 {
        if guess.len() != n {
            return Err(Error::InvalidArgument(format!(
                "initial guess has length {}, expected {n}",
                guess.len()
            )));
        }
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(BicgSolution {
            x: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let mut rt = r.clone();
    let mut p = r.clone();
    let mut pt = rt.clone();
    let mut rho = dot(&rt, &r);

    let mut best_x = x.clone();
    let mut best_res = norm(&r) / b_norm;
    let mut restarted = false;
    let mut iterations = 0;

    for it in 0..maxit {
        iterations = it;
        let res = norm(&r) / b_norm;
        if res < best_res {
            best_res = res;
            best_x.clone_from(&x);
        }
        if res <= tol {
            return Ok(BicgSolution {
                x,
                relative_residual: res,
                iterations: it,
                converged: true,
            });
        }

        let q = a.matvec(&p);
        let qt = a.matvec_transpose(&pt);
        let denom = dot(&pt, &q);
        let breakdown =
            denom.abs() <= f64::EPSILON * norm(&pt) * norm(&q) || rho.abs() <= f64::MIN_POSITIVE;
        if breakdown {
            if restarted {
                return Err(Error::ConvergenceFailure(
                    "BiCG breakdown recurred after restart".into(),
                ));
            }
            restarted = true;
            let ax = a.matvec(&x);
            r = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
            rt.clone_from(&r);
            p.clone_from(&r);
            pt.clone_from(&rt);
            rho = dot(&rt, &r);
            continue;
        }

        let alpha = rho / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rt[i] -= alpha * qt[i];
        }
        let rho_new = dot(&rt, &r);
        let beta = rho_new / rho;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            pt[i] = rt[i] + beta * pt[i];
        }
        rho = rho_new;
    }

    let res = norm(&r) / b_norm;
    if res < best_res {
        best_res = res;
        best_x.clone_from(&x);
    }
    Ok(BicgSolution {
        x: best_x,
        relative_residual: best_res,
        iterations,
        converged: false,
    })
}

/// Full-accuracy reference spectrum of the pencil (H, M) by dense reduction
/// through the Cholesky factor of M. Test oracle; not a production path.
pub fn dense_eig_oracle(h: &BandedMatrix, m: &BandedMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = h.dim();
    if m.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "pencil dimension mismatch: {n} vs {}",
            m.dim()
        )));
    }
    let h_dense = h.to_dense();
    let m_dense = m.to_dense();
    let chol = nalgebra::Cholesky::new(m_dense).ok_or_else(|| {
        Error::InvalidArgument("mass matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let b = l
        .solve_lower_triangular(&h_dense)
        .ok_or_else(|| Error::SingularMatrix("Cholesky factor not invertible".into()))?;
    let a = l
        .solve_lower_triangular(&b.transpose())
        .ok_or_else(|| Error::SingularMatrix("Cholesky factor not invertible".into()))?
        .transpose();
    let a_sym = (&a + a.transpose()) * 0.5;
    let (values, y) = sorted_sym_eig(a_sym);
    let lt = l.transpose();
    let mut vectors = lt
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::SingularMatrix("Cholesky factor not invertible".into()))?;
    fix_column_signs(&mut vectors);
    Ok((values, vectors))
}

/// Dense LU solve of a banded system; test oracle.
pub fn dense_solve_oracle(a: &BandedMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::InvalidArgument(format!(
            "rhs has length {}, expected {}",
            b.len(),
            a.dim()
        )));
    }
    let lu = a.to_dense().lu();
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::SingularMatrix("dense LU solve failed".into()))?;
    Ok(x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_eigensystem, assemble_hartree};
    use crate::mesh::RadialMesh;
    use crate::quadrature::ElementBasis;
    use approx::assert_abs_diff_eq;

    fn identity(n: usize) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(n, 0, true);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    fn random_spd_pencil(n: usize, hb: usize, seed: u64) -> (BandedMatrix, BandedMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = BandedMatrix::zeros(n, hb, true);
        let mut m = BandedMatrix::zeros(n, hb, true);
        for i in 0..n {
            for j in i..(i + hb + 1).min(n) {
                let vh = rng.random_range(-1.0..1.0);
                let vm = rng.random_range(-0.2..0.2);
                h.set(i, j, vh);
                h.set(j, i, vh);
                if i != j {
                    m.set(i, j, vm);
                    m.set(j, i, vm);
                }
            }
            m.set(i, i, 1.0 + rng.random_range(0.0..1.0));
        }
        (h, m)
    }

    #[test]
    fn lobpcg_diagonal_case() {
        let n = 12;
        let mut h = BandedMatrix::zeros(n, 0, true);
        for i in 0..n {
            h.set(i, i, (i + 1) as f64);
        }
        let m = identity(n);
        let sol = lobpcg(
            &h,
            &m,
            2,
            None,
            &Preconditioner::Identity,
            &LobpcgOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.eigenvalues[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.eigenvalues[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn lobpcg_matches_dense_oracle_on_random_pencil() {
        let (h, m) = random_spd_pencil(50, 3, 99);
        let (reference, _) = dense_eig_oracle(&h, &m).unwrap();
        let opts = LobpcgOptions {
            tol: 1e-10,
            maxit: 5000,
            ..Default::default()
        };
        let sol = lobpcg(&h, &m, 5, None, &Preconditioner::Identity, &opts).unwrap();
        assert!(sol.converged);
        for i in 0..5 {
            assert_abs_diff_eq!(sol.eigenvalues[i], reference[i], epsilon = 1e-8);
        }
        // block must be M-orthonormal regardless of the initial guess
        let gram = sol.eigenvectors.transpose() * m.matmul(&sol.eigenvectors);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], expect, epsilon = 1e-10);
            }
        }
        // Rayleigh-Ritz property: Ritz values never increase
        for w in sol.ritz_history.windows(2) {
            for i in 0..5 {
                assert!(w[1][i] <= w[0][i] + 1e-9 * (1.0 + w[0][i].abs()));
            }
        }
    }

    #[test]
    fn lobpcg_rejects_bad_block_size() {
        let (h, m) = random_spd_pencil(10, 2, 1);
        assert!(lobpcg(&h, &m, 0, None, &Preconditioner::Identity, &LobpcgOptions::default()).is_err());
        assert!(lobpcg(&h, &m, 11, None, &Preconditioner::Identity, &LobpcgOptions::default()).is_err());
    }

    #[test]
    fn preconditioner_identity_branches() {
        let (h, m) = random_spd_pencil(8, 2, 3);
        let precond = Preconditioner::shifted_kinetic(&h, &m);
        let block = DMatrix::from_fn(8, 2, |i, j| (i + j) as f64 + 1.0);
        // nonnegative shifts leave the block untouched
        let out = apply_preconditioner(&precond, &block, &[0.0, 2.5]);
        assert_eq!(out, block);
    }

    #[test]
    fn preconditioner_matches_dense_solve_with_generous_caps() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = BandedMatrix::zeros(n, 2, true);
        for i in 0..n {
            for j in i..(i + 3).min(n) {
                let v = rng.random_range(-0.5..0.5);
                a.set(i, j, v);
                a.set(j, i, v);
            }
            a.add(i, i, 3.0);
        }
        let mut m = BandedMatrix::zeros(n, 2, true);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        let precond = Preconditioner::ShiftedKinetic {
            half_stiffness: &a,
            mass: &m,
            inner_maxit: 200,
            inner_rtol: 1e-10,
        };
        let r = DMatrix::from_fn(n, 1, |i, _| ((i * 7 % 5) as f64) - 2.0);
        let out = precond.apply(&r, &[-1.0]);
        // dense oracle for (A + 1.0 M) x = r
        let t = a.linear_combination(1.0, &m, 1.0);
        let rhs: Vec<f64> = r.column(0).iter().copied().collect();
        let x_ref = dense_solve_oracle(&t, &rhs).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(out[(i, 0)], x_ref[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn bicg_identity_is_immediate() {
        let a = identity(6);
        let b = vec![1.0, -2.0, 3.0, 0.0, 5.0, -1.0];
        let sol = bicg(&a, &b, None, 1e-12, 50).unwrap();
        assert!(sol.converged);
        for (x, e) in sol.x.iter().zip(&b) {
            assert_abs_diff_eq!(x, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn bicg_hand_solved_two_by_two() {
        // [[2, 1], [0, 1]] x = (3, 1) => x = (1, 1)
        let mut a = BandedMatrix::zeros(2, 1, false);
        a.set(0, 0, 2.0);
        a.set(0, 1, 1.0);
        a.set(1, 1, 1.0);
        let sol = bicg(&a, &[3.0, 1.0], None, 1e-13, 50).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn bicg_solves_hydrogen_hartree_system() {
        let mesh = RadialMesh::from_boundaries(
            vec![0.0, 0.1, 0.3, 0.7, 1.5, 3.0, 6.0, 12.0, 25.0],
            ElementBasis::with_quadrature(8, 10).unwrap(),
        )
        .unwrap();
        let rho: Vec<f64> = mesh
            .quad_radii()
            .iter()
            .map(|&r| (-2.0 * r).exp() / std::f64::consts::PI)
            .collect();
        let sys = assemble_hartree(&mesh, &rho).unwrap();
        let sol = bicg(sys.matrix(), sys.rhs(), None, 1e-14, 10_000).unwrap();
        let reference = dense_solve_oracle(sys.matrix(), sys.rhs()).unwrap();
        for (a, b) in sol.x.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-10, "bicg {a} vs dense {b}");
        }
    }

    #[test]
    fn dense_oracle_simple_and_error_cases() {
        let mut h = BandedMatrix::zeros(2, 0, true);
        h.set(0, 0, 2.0);
        h.set(1, 1, 3.0);
        let m = identity(2);
        let (vals, _) = dense_eig_oracle(&h, &m).unwrap();
        assert_abs_diff_eq!(vals[0], 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-13);

        let mut bad = BandedMatrix::zeros(2, 0, true);
        bad.set(0, 0, -1.0);
        bad.set(1, 1, 1.0);
        assert!(matches!(
            dense_eig_oracle(&h, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn coulomb_p_channel_ground_state() {
        // V = -2/r, l = 1: lowest state is n = 2 with -Z^2/8 = -0.5
        let bounds: Vec<f64> = {
            let mut b = vec![0.0];
            let mut x: f64 = 0.02;
            while x < 20.0 {
                b.push(x);
                x *= 1.8;
            }
            b.push(20.0);
            b
        };
        let mesh =
            RadialMesh::from_boundaries(bounds, ElementBasis::with_quadrature(8, 10).unwrap())
                .unwrap();
        let veff: Vec<f64> = mesh.quad_radii().iter().map(|&r| -2.0 / r).collect();
        let (h, m) = assemble_eigensystem(&mesh, &veff, 1).unwrap();
        let (vals, _) = dense_eig_oracle(&h, &m).unwrap();
        assert_abs_diff_eq!(vals[0], -0.5, epsilon = 1e-7);
    }
}
