//! Self-consistent field driver with linear mixing and Thomas-Fermi
//! initialization, plus the outer moving-mesh loop that alternates SCF solves
//! with equidistribution of an orbital arc-length monitor.

use crate::assembly::{
    assemble_eigensystem, assemble_hartree, quadrature_integral, BandedMatrix, IntegralWeight,
};
use crate::atom_data::AtomConfig;
use crate::eigensolve::{bicg, lobpcg, LobpcgOptions, Preconditioner};
use crate::mesh::{equidistribute_to_fixed_point, interpolate_solution, RadialMesh};
use crate::xc::{xc_combine_with, VwnParams};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// One occupied Kohn-Sham shell: quantum numbers, occupation, eigenvalue and
/// the FE coefficients of P(r) = r R(r) over all global nodes (zero at both
/// boundaries).
#[derive(Debug, Clone, Serialize)]
pub struct Orbital {
    pub n: u32,
    pub l: u32,
    pub occupation: f64,
    pub eigenvalue: f64,
    #[serde(skip)]
    pub coeffs: Vec<f64>,
}

/// Radial electron density, kept both at the global nodes (for dumps and
/// transfer) and at the quadrature points (the representation every integral
/// and potential build actually consumes).
#[derive(Debug, Clone)]
pub struct DensityField {
    nodal: Vec<f64>,
    quad: Vec<f64>,
}

impl DensityField {
    pub fn new(mut nodal: Vec<f64>, mut quad: Vec<f64>) -> Result<Self> {
        for v in nodal.iter_mut().chain(quad.iter_mut()) {
            if *v < -1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "density value {v} is negative"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(DensityField { nodal, quad })
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    /// Electron count 4 pi int rho r^2 dr.
    pub fn normalization(&self, mesh: &RadialMesh) -> Result<f64> {
        Ok(4.0 * PI * quadrature_integral(mesh, &self.quad, IntegralWeight::RSquared)?)
    }

    fn scale(&mut self, factor: f64) {
        for v in self.nodal.iter_mut().chain(self.quad.iter_mut()) {
            *v *= factor;
        }
    }
}

/// Effective potential and its parts, sampled at the quadrature points.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    pub v_ext: Vec<f64>,
    pub v_har: Vec<f64>,
    pub v_xc: Vec<f64>,
    pub v_eff: Vec<f64>,
    pub eps_xc: Vec<f64>,
    /// Hartree potential as an FE function over all global nodes
    pub v_har_nodal: Vec<f64>,
}

/// Energy terms in Hartree; `total` is their plain sum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub hartree: f64,
    pub exchange_correlation: f64,
    pub external: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScfIterationRecord {
    pub iteration: usize,
    pub total_energy: f64,
    pub energy_change: f64,
}

/// Residual trace of one eigensolve, for iteration-count diagnostics.
#[derive(Debug, Clone)]
pub struct EigChannelTrace {
    pub scf_iteration: usize,
    pub l: u32,
    pub iterations: usize,
    /// residual 2-norms per LOBPCG iteration per column
    pub residual_history: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ScfResult {
    pub energy: EnergyBreakdown,
    /// |total energy - independent eigenvalue-sum route|
    pub energy_identity_error: f64,
    pub density: DensityField,
    pub orbitals: Vec<Orbital>,
    pub history: Vec<ScfIterationRecord>,
    pub iterations: usize,
    pub eig_traces: Vec<EigChannelTrace>,
}

#[derive(Debug, Clone)]
pub struct MovingMeshResult {
    pub mesh: RadialMesh,
    pub scf: ScfResult,
    /// element boundaries per outer step, starting with the uniform mesh
    pub mesh_history: Vec<Vec<f64>>,
    /// total energy after the initial solve and after each redistribution
    pub energy_history: Vec<f64>,
    /// number of redistribution steps taken
    pub outer_steps: usize,
}

/// Solver configuration; the defaults reproduce the production setup
/// (p = 10 spectral elements, tolerance 1e-8 Hartree, mixing 0.618).
#[derive(Debug, Clone)]
pub struct ScfParams {
    pub tol: f64,
    pub max_iterations: usize,
    pub mixing: f64,
    pub eig_tol: f64,
    pub eig_maxit: usize,
    /// extra eigenpairs per channel beyond the occupied count
    pub guard_states: usize,
    pub include_hartree: bool,
    pub include_xc: bool,
    pub vwn: VwnParams,
    pub precondition: bool,
    pub hartree_tol: f64,
    pub monitor_alpha: f64,
    pub max_mesh_steps: usize,
    /// quadrature points per element; None means p + 2
    pub quad_points: Option<usize>,
    pub seed: u64,
}

impl Default for ScfParams {
    fn default() -> Self {
        ScfParams {
            tol: 1e-8,
            max_iterations: 200,
            mixing: 0.618,
            eig_tol: 1e-9,
            eig_maxit: 2000,
            guard_states: 0,
            include_hartree: true,
            include_xc: true,
            vwn: VwnParams::default(),
            precondition: true,
            hartree_tol: 1e-12,
            monitor_alpha: 0.01,
            max_mesh_steps: 10,
            quad_points: None,
            seed: 0,
        }
    }
}

/// Thomas-Fermi screened-nucleus density, the closed form before any
/// normalization. Diverges like r^(-3/2) toward the origin.
pub fn thomas_fermi_raw(z: u32, r: f64) -> f64 {
    const ALPHA: f64 = 0.7280642371;
    const BETA: f64 = -0.5430794693;
    const GAMMA: f64 = 0.3612163121;
    let zf = f64::from(z);
    let x = r * (128.0 * zf / (9.0 * PI * PI)).cbrt();
    let sx = x.sqrt();
    let z_eff = zf * (1.0 + ALPHA * sx + BETA * x * (-GAMMA * sx).exp()).powi(2)
        * (-2.0 * ALPHA * sx).exp();
    let v = -z_eff / r;
    let radicand = (-2.0 * v).max(0.0);
    radicand.powf(1.5) / (3.0 * PI * PI)
}

/// Thomas-Fermi initial density, scaled so 4 pi int rho r^2 dr = Z.
///
/// The closed form blows up at r = 0, so the r = 0 nodal dump value is
/// evaluated at a small offset inside the first element; the integrals only
/// ever see the interior quadrature points.
pub fn thomas_fermi_density(z: u32, mesh: &RadialMesh) -> Result<DensityField> {
    if z < 1 {
        return Err(Error::InvalidArgument("nuclear charge must be >= 1".into()));
    }
    let r_floor = 1e-3 * (mesh.boundaries()[1] - mesh.boundaries()[0]);
    let nodal: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|&r| thomas_fermi_raw(z, r.max(r_floor)))
        .collect();
    let quad: Vec<f64> = mesh
        .quad_radii()
        .iter()
        .map(|&r| thomas_fermi_raw(z, r))
        .collect();
    let mut density = DensityField::new(nodal, quad)?;
    let norm = density.normalization(mesh)?;
    if norm <= 0.0 {
        return Err(Error::Internal("Thomas-Fermi density has no charge".into()));
    }
    density.scale(f64::from(z) / norm);
    Ok(density)
}

/// Electron density from occupied orbitals: rho = (1/4pi) sum f P^2 / r^2.
///
/// Quadrature values come straight from the polynomial P at interior points;
/// the r = 0 nodal value uses the one-sided limit P'(0)^2 of the l = 0
/// contributions (l >= 1 shells vanish there).
pub fn density_update(orbitals: &[Orbital], mesh: &RadialMesh) -> Result<DensityField> {
    if orbitals.is_empty() {
        return Err(Error::InvalidArgument(
            "density needs at least one orbital".into(),
        ));
    }
    let n_quad = mesh.num_quad_points();
    let mut quad = vec![0.0; n_quad];
    let mut nodal = vec![0.0; mesh.num_nodes()];
    for orbital in orbitals {
        let p_quad = mesh.eval_at_quad(&orbital.coeffs)?;
        let norm: f64 = quadrature_integral(
            mesh,
            &p_quad.iter().map(|v| v * v).collect::<Vec<_>>(),
            IntegralWeight::One,
        )?;
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidState(format!(
                "orbital ({}, {}) has norm {norm}, expected 1",
                orbital.n, orbital.l
            )));
        }
        let f = orbital.occupation / (4.0 * PI);
        for (i, &r) in mesh.quad_radii().iter().enumerate() {
            let v = p_quad[i] / r;
            quad[i] += f * v * v;
        }
        for (i, &r) in mesh.nodes().iter().enumerate() {
            if i == 0 {
                if orbital.l == 0 {
                    let d = mesh.eval_derivative(&orbital.coeffs, 0.0)?;
                    nodal[0] += f * d * d;
                }
            } else {
                let v = orbital.coeffs[i] / r;
                nodal[i] += f * v * v;
            }
        }
    }
    DensityField::new(nodal, quad)
}

/// Linear mixing rho_new = alpha rho_out + (1 - alpha) rho_in.
pub fn mix_density(rho_in: &DensityField, rho_out: &DensityField, alpha: f64) -> Result<DensityField> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mixing parameter must lie in (0, 1], got {alpha}"
        )));
    }
    if rho_in.nodal.len() != rho_out.nodal.len() || rho_in.quad.len() != rho_out.quad.len() {
        return Err(Error::InvalidArgument(
            "densities live on different meshes".into(),
        ));
    }
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(i, o)| alpha * o + (1.0 - alpha) * i)
            .collect()
    };
    DensityField::new(
        mix(&rho_in.nodal, &rho_out.nodal),
        mix(&rho_in.quad, &rho_out.quad),
    )
}

fn hartree_maxit(dim: usize) -> usize {
    (40 * dim).max(2000)
}

fn build_effective_potential_warm(
    rho: &DensityField,
    z: f64,
    mesh: &RadialMesh,
    params: &ScfParams,
    warm_start: Option<&[f64]>,
) -> Result<EffectivePotential> {
    let n_quad = mesh.num_quad_points();
    let v_ext: Vec<f64> = mesh.quad_radii().iter().map(|&r| -z / r).collect();

    let (v_har_nodal, v_har) = if params.include_hartree {
        let system = assemble_hartree(mesh, rho.quad())?;
        let solution = bicg(
            system.matrix(),
            system.rhs(),
            warm_start,
            params.hartree_tol,
            hartree_maxit(system.matrix().dim()),
        )?;
        if !solution.converged && solution.relative_residual > 1e-9 {
            return Err(Error::ConvergenceFailure(format!(
                "Hartree solve stalled at relative residual {:.3e}",
                solution.relative_residual
            )));
        }
        let nodal = system.expand_solution(&solution.x);
        let quad = mesh.eval_at_quad(&nodal)?;
        (nodal, quad)
    } else {
        (vec![0.0; mesh.num_nodes()], vec![0.0; n_quad])
    };

    let (v_xc, eps_xc) = if params.include_xc {
        let mut v = Vec::with_capacity(n_quad);
        let mut e = Vec::with_capacity(n_quad);
        for &rho_q in rho.quad() {
            let eval = xc_combine_with(&params.vwn, rho_q)?;
            v.push(eval.v_xc());
            e.push(eval.eps_xc());
        }
        (v, e)
    } else {
        (vec![0.0; n_quad], vec![0.0; n_quad])
    };

    let v_eff: Vec<f64> = (0..n_quad)
        .map(|i| v_ext[i] + v_har[i] + v_xc[i])
        .collect();
    Ok(EffectivePotential {
        v_ext,
        v_har,
        v_xc,
        v_eff,
        eps_xc,
        v_har_nodal,
    })
}

/// Assemble the effective potential V_ext + V_Har + V_xc at the quadrature
/// points, solving the Hartree system with BiCG.
pub fn build_effective_potential(
    rho: &DensityField,
    z: f64,
    mesh: &RadialMesh,
    params: &ScfParams,
) -> Result<EffectivePotential> {
    build_effective_potential_warm(rho, z, mesh, params, None)
}

/// Total energy from the eigenvalue sum:
/// E_k = sum f eps - 4 pi int V_eff rho r^2, plus Hartree, xc and external
/// terms evaluated from the output density.
pub fn total_energy(
    orbitals: &[Orbital],
    rho_out: &DensityField,
    pot_in: &EffectivePotential,
    pot_out: &EffectivePotential,
    z: f64,
    mesh: &RadialMesh,
) -> Result<EnergyBreakdown> {
    let eig_sum: f64 = orbitals.iter().map(|o| o.occupation * o.eigenvalue).sum();
    let weighted = |values: &[f64], weight| -> Result<f64> {
        let integrand: Vec<f64> = values.iter().zip(rho_out.quad()).map(|(v, r)| v * r).collect();
        quadrature_integral(mesh, &integrand, weight)
    };
    let kinetic = eig_sum - 4.0 * PI * weighted(&pot_in.v_eff, IntegralWeight::RSquared)?;
    let hartree = 2.0 * PI * weighted(&pot_out.v_har, IntegralWeight::RSquared)?;
    let exchange_correlation = 4.0 * PI * weighted(&pot_out.eps_xc, IntegralWeight::RSquared)?;
    let external =
        -4.0 * PI * z * quadrature_integral(mesh, rho_out.quad(), IntegralWeight::R)?;
    Ok(EnergyBreakdown {
        kinetic,
        hartree,
        exchange_correlation,
        external,
        total: kinetic + hartree + exchange_correlation + external,
    })
}

/// Independent route to the same total: the external terms cancel
/// algebraically against the eigenvalue sum, leaving
/// E = sum f eps - int (V_Har_in + V_xc_in) rho + E_Har + E_xc.
fn total_energy_identity(
    orbitals: &[Orbital],
    rho_out: &DensityField,
    pot_in: &EffectivePotential,
    pot_out: &EffectivePotential,
    mesh: &RadialMesh,
) -> Result<f64> {
    let eig_sum: f64 = orbitals.iter().map(|o| o.occupation * o.eigenvalue).sum();
    let weighted = |values: &[f64]| -> Result<f64> {
        let integrand: Vec<f64> = values.iter().zip(rho_out.quad()).map(|(v, r)| v * r).collect();
        quadrature_integral(mesh, &integrand, IntegralWeight::RSquared)
    };
    Ok(eig_sum - 4.0 * PI * weighted(&pot_in.v_har)? - 4.0 * PI * weighted(&pot_in.v_xc)?
        + 2.0 * PI * weighted(&pot_out.v_har)?
        + 4.0 * PI * weighted(&pot_out.eps_xc)?)
}

/// Warm-start data carried between meshes.
#[derive(Debug, Clone)]
pub struct ScfGuess {
    pub density: DensityField,
    pub orbitals: Vec<Orbital>,
}

fn m_norm(mass: &BandedMatrix, x: &DVector<f64>) -> f64 {
    let mx = mass.apply_vector(x);
    x.dot(&mx).max(0.0).sqrt()
}

/// Kohn-Sham SCF loop (linear mixing) on a fixed mesh.
pub fn scf_solve(config: &AtomConfig, mesh: &RadialMesh, params: &ScfParams) -> Result<ScfResult> {
    scf_solve_with_guess(config, mesh, params, None)
}

pub fn scf_solve_with_guess(
    config: &AtomConfig,
    mesh: &RadialMesh,
    params: &ScfParams,
    guess: Option<ScfGuess>,
) -> Result<ScfResult> {
    if params.tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let z = f64::from(config.z);
    let channels = config.orbitals_per_l();
    let occupation_of: BTreeMap<(u32, u32), f64> = config
        .shells
        .iter()
        .map(|s| ((s.n, s.l), s.occupation))
        .collect();

    // kinetic block L/2 and mass matrix over interior DOFs; shared by every
    // channel and by the preconditioner
    let zero_potential = vec![0.0; mesh.num_quad_points()];
    let (half_kinetic, mass) = assemble_eigensystem(mesh, &zero_potential, 0)?;
    let dim = mass.dim();

    let mut prev_blocks: BTreeMap<u32, DMatrix<f64>> = BTreeMap::new();
    let mut rho_new = match &guess {
        Some(g) => g.density.clone(),
        None => thomas_fermi_density(config.z, mesh)?,
    };
    if let Some(g) = &guess {
        for (l, count) in &channels {
            let cols: Vec<DVector<f64>> = g
                .orbitals
                .iter()
                .filter(|o| o.l == *l)
                .map(|o| DVector::from_column_slice(&o.coeffs[1..o.coeffs.len() - 1]))
                .collect();
            if cols.len() == *count {
                prev_blocks.insert(*l, DMatrix::from_columns(&cols));
            }
        }
    }

    let mut history: Vec<ScfIterationRecord> = Vec::new();
    let mut eig_traces: Vec<EigChannelTrace> = Vec::new();
    let mut warm_hartree: Option<Vec<f64>> = None;
    let mut mixing = params.mixing;
    let mut prev_de = f64::INFINITY;
    let mut worsening_streak = 0usize;
    let mut e_new = 0.0;

    for iteration in 0..params.max_iterations {
        let e_old = e_new;
        let rho_in = rho_new.clone();
        let pot_in =
            build_effective_potential_warm(&rho_in, z, mesh, params, warm_hartree.as_deref())?;
        warm_hartree = Some(pot_in.v_har_nodal[..mesh.num_nodes() - 1].to_vec());

        let mut orbitals: Vec<Orbital> = Vec::new();
        for (&l, &count) in &channels {
            let k = (count + params.guard_states).min(dim);
            let (h, m) = assemble_eigensystem(mesh, &pot_in.v_eff, l as usize)?;
            let precond = if params.precondition {
                Preconditioner::shifted_kinetic(&half_kinetic, &mass)
            } else {
                Preconditioner::Identity
            };
            let opts = LobpcgOptions {
                tol: params.eig_tol,
                maxit: params.eig_maxit,
                scale_tol_by_ritz: true,
                seed: params.seed.wrapping_add(u64::from(l)),
            };
            let solution = lobpcg(&h, &m, k, prev_blocks.get(&l), &precond, &opts)?;
            if !solution.converged {
                return Err(Error::ConvergenceFailure(format!(
                    "eigensolver for l={l} stalled after {} iterations (worst residual {:.3e})",
                    solution.iterations,
                    solution
                        .residual_norms
                        .iter()
                        .cloned()
                        .fold(0.0, f64::max)
                )));
            }
            eig_traces.push(EigChannelTrace {
                scf_iteration: iteration,
                l,
                iterations: solution.iterations,
                residual_history: solution.residual_history.clone(),
            });
            prev_blocks.insert(l, solution.eigenvectors.clone());

            for i in 0..count {
                let n = l + 1 + i as u32;
                let occupation = *occupation_of.get(&(n, l)).ok_or_else(|| {
                    Error::Internal(format!("configuration misses shell ({n}, {l})"))
                })?;
                let mut column = solution.eigenvectors.column(i).clone_owned();
                let norm = m_norm(&m, &column);
                if norm == 0.0 {
                    return Err(Error::Internal("eigenvector with zero mass norm".into()));
                }
                column /= norm;
                let mut coeffs = vec![0.0; mesh.num_nodes()];
                coeffs[1..=dim].copy_from_slice(column.as_slice());
                orbitals.push(Orbital {
                    n,
                    l,
                    occupation,
                    eigenvalue: solution.eigenvalues[i],
                    coeffs,
                });
            }
        }

        let rho_out = density_update(&orbitals, mesh)?;
        let pot_out =
            build_effective_potential_warm(&rho_out, z, mesh, params, warm_hartree.as_deref())?;
        let energy = total_energy(&orbitals, &rho_out, &pot_in, &pot_out, z, mesh)?;
        e_new = energy.total;
        let de = e_new - e_old;
        history.push(ScfIterationRecord {
            iteration,
            total_energy: e_new,
            energy_change: de,
        });

        if de.abs() < params.tol {
            let identity = total_energy_identity(&orbitals, &rho_out, &pot_in, &pot_out, mesh)?;
            let energy_identity_error = (energy.total - identity).abs();
            debug_assert!(
                energy_identity_error < 1e-9,
                "energy routes disagree by {energy_identity_error}"
            );
            return Ok(ScfResult {
                energy,
                energy_identity_error,
                density: rho_out,
                orbitals,
                history,
                iterations: iteration + 1,
                eig_traces,
            });
        }

        // stagnation safeguard: damp the mixing after five straight increases
        if de.abs() > prev_de {
            worsening_streak += 1;
            if worsening_streak >= 5 {
                mixing = (0.5 * mixing).max(0.05);
                worsening_streak = 0;
            }
        } else {
            worsening_streak = 0;
        }
        prev_de = de.abs();
        rho_new = mix_density(&rho_in, &rho_out, mixing)?;
    }

    let tail: Vec<String> = history
        .iter()
        .rev()
        .take(3)
        .map(|r| format!("dE={:.3e}", r.energy_change))
        .collect();
    Err(Error::ConvergenceFailure(format!(
        "SCF did not reach {:.1e} within {} iterations ({})",
        params.tol,
        params.max_iterations,
        tail.join(", ")
    )))
}

/// Interpolate orbitals onto a new mesh and renormalize them, producing the
/// next SCF warm start.
fn transfer_guess(
    orbitals: &[Orbital],
    old_mesh: &RadialMesh,
    new_mesh: &RadialMesh,
) -> Result<ScfGuess> {
    let zero_potential = vec![0.0; new_mesh.num_quad_points()];
    let (_, mass) = assemble_eigensystem(new_mesh, &zero_potential, 0)?;
    let mut transferred = Vec::with_capacity(orbitals.len());
    for orbital in orbitals {
        let coeffs = interpolate_solution(old_mesh, &orbital.coeffs, new_mesh)?;
        let interior = DVector::from_column_slice(&coeffs[1..coeffs.len() - 1]);
        let norm = m_norm(&mass, &interior);
        if norm == 0.0 {
            return Err(Error::Internal(
                "interpolated orbital vanished on the new mesh".into(),
            ));
        }
        let mut scaled = vec![0.0; coeffs.len()];
        for (dst, src) in scaled[1..coeffs.len() - 1].iter_mut().zip(interior.iter()) {
            *dst = src / norm;
        }
        transferred.push(Orbital {
            coeffs: scaled,
            ..orbital.clone()
        });
    }
    let density = density_update(&transferred, new_mesh)?;
    Ok(ScfGuess {
        density,
        orbitals: transferred,
    })
}

/// Full solver: uniform mesh, SCF, then redistribute-interpolate-resolve
/// until the total energy stops moving. Converges in a few redistribution
/// steps in practice.
pub fn moving_mesh_solve(
    config: &AtomConfig,
    r_max: f64,
    n_ele: usize,
    p: usize,
    params: &ScfParams,
) -> Result<MovingMeshResult> {
    let n_q = params.quad_points.unwrap_or(p + 2);
    let mut mesh = RadialMesh::uniform_with_quadrature(r_max, n_ele, p, n_q)?;
    let mut scf = scf_solve(config, &mesh, params)?;
    let mut mesh_history = vec![mesh.boundaries().to_vec()];
    let mut energy_history = vec![scf.energy.total];
    let mut outer_steps = 0;

    for _ in 0..params.max_mesh_steps {
        let e_old = scf.energy.total;
        let occupied: Vec<Vec<f64>> = scf.orbitals.iter().map(|o| o.coeffs.clone()).collect();
        let new_mesh = equidistribute_to_fixed_point(&mesh, &occupied, params.monitor_alpha)?;
        let guess = transfer_guess(&scf.orbitals, &mesh, &new_mesh)?;
        scf = scf_solve_with_guess(config, &new_mesh, params, Some(guess))?;
        mesh = new_mesh;
        outer_steps += 1;
        mesh_history.push(mesh.boundaries().to_vec());
        energy_history.push(scf.energy.total);
        if (scf.energy.total - e_old).abs() < params.tol {
            return Ok(MovingMeshResult {
                mesh,
                scf,
                mesh_history,
                energy_history,
                outer_steps,
            });
        }
    }
    Err(Error::ConvergenceFailure(format!(
        "moving mesh did not settle within {} redistribution steps",
        params.max_mesh_steps
    )))
}

/// Eigenvalue request for one angular momentum channel of a fixed potential.
#[derive(Debug, Clone, Copy)]
pub struct ChannelSpec {
    pub l: u32,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct FixedPotentialResult {
    pub mesh: RadialMesh,
    /// eigenvalues per channel, ascending
    pub eigenvalues: BTreeMap<u32, Vec<f64>>,
    pub outer_steps: usize,
}

/// Mesh-adaptive eigensolve for a fixed external potential (no SCF): used to
/// study pure Coulomb-like problems whose spectra are known analytically.
pub fn adaptive_fixed_potential(
    potential: impl Fn(f64) -> f64,
    channels: &[ChannelSpec],
    r_max: f64,
    n_ele: usize,
    p: usize,
    params: &ScfParams,
) -> Result<FixedPotentialResult> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels requested".into()));
    }
    let n_q = params.quad_points.unwrap_or(p + 2);
    let mut mesh = RadialMesh::uniform_with_quadrature(r_max, n_ele, p, n_q)?;
    let mut prev: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
    let mut eig_sum_old = f64::INFINITY;
    let mut eigenvalues = BTreeMap::new();

    for step in 0..=params.max_mesh_steps {
        let zero_potential = vec![0.0; mesh.num_quad_points()];
        let (half_kinetic, mass) = assemble_eigensystem(&mesh, &zero_potential, 0)?;
        let veff: Vec<f64> = mesh.quad_radii().iter().map(|&r| potential(r)).collect();

        eigenvalues.clear();
        let mut all_vectors: Vec<Vec<f64>> = Vec::new();
        let mut eig_sum = 0.0;
        for spec in channels {
            let (h, m) = assemble_eigensystem(&mesh, &veff, spec.l as usize)?;
            let precond = if params.precondition {
                Preconditioner::shifted_kinetic(&half_kinetic, &mass)
            } else {
                Preconditioner::Identity
            };
            let opts = LobpcgOptions {
                tol: params.eig_tol,
                maxit: params.eig_maxit,
                scale_tol_by_ritz: true,
                seed: params.seed.wrapping_add(u64::from(spec.l)),
            };
            let x0 = prev.get(&spec.l).map(|cols| {
                let v: Vec<DVector<f64>> = cols
                    .iter()
                    .map(|c| DVector::from_column_slice(&c[1..c.len() - 1]))
                    .collect();
                DMatrix::from_columns(&v)
            });
            let solution = lobpcg(&h, &m, spec.count, x0.as_ref(), &precond, &opts)?;
            if !solution.converged {
                return Err(Error::ConvergenceFailure(format!(
                    "eigensolver for l={} stalled on mesh step {step}",
                    spec.l
                )));
            }
            eig_sum += solution.eigenvalues.iter().sum::<f64>();
            eigenvalues.insert(spec.l, solution.eigenvalues.clone());
            let mut full_cols = Vec::with_capacity(spec.count);
            for c in 0..spec.count {
                let mut column = solution.eigenvectors.column(c).clone_owned();
                let norm = m_norm(&m, &column);
                column /= norm;
                let mut coeffs = vec![0.0; mesh.num_nodes()];
                coeffs[1..=m.dim()].copy_from_slice(column.as_slice());
                full_cols.push(coeffs);
            }
            all_vectors.extend(full_cols.iter().cloned());
            prev.insert(spec.l, full_cols);
        }

        if (eig_sum - eig_sum_old).abs() < params.tol {
            return Ok(FixedPotentialResult {
                mesh,
                eigenvalues,
                outer_steps: step,
            });
        }
        eig_sum_old = eig_sum;
        if step == params.max_mesh_steps {
            break;
        }

        let new_mesh = equidistribute_to_fixed_point(&mesh, &all_vectors, params.monitor_alpha)?;
        for cols in prev.values_mut() {
            for coeffs in cols.iter_mut() {
                *coeffs = interpolate_solution(&mesh, coeffs, &new_mesh)?;
            }
        }
        mesh = new_mesh;
    }
    Err(Error::ConvergenceFailure(format!(
        "fixed-potential eigenvalues did not settle within {} mesh steps",
        params.max_mesh_steps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom_data::configuration;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thomas_fermi_raw_pinned_value() {
        // closed form at Z=1, r=1, evaluated independently at high precision
        assert_abs_diff_eq!(thomas_fermi_raw(1, 1.0), 0.0233713791267386, epsilon = 1e-15);
        // screened charge approaches the bare nucleus at the origin:
        // rho ~ (2Z/r)^(3/2) / (3 pi^2)
        let r: f64 = 1e-9;
        let expected = (2.0 / r).powf(1.5) / (3.0 * PI * PI);
        assert_abs_diff_eq!(thomas_fermi_raw(1, r) / expected, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn thomas_fermi_density_normalized() {
        for z in [1, 26, 92] {
            let mesh = RadialMesh::uniform(20.0, 12, 6).unwrap();
            let rho = thomas_fermi_density(z, &mesh).unwrap();
            assert_abs_diff_eq!(
                rho.normalization(&mesh).unwrap(),
                f64::from(z),
                epsilon = 1e-10
            );
        }
        let mesh = RadialMesh::uniform(20.0, 4, 2).unwrap();
        assert!(thomas_fermi_density(0, &mesh).is_err());
    }

    #[test]
    fn mix_density_conventions() {
        let mesh = RadialMesh::uniform(5.0, 3, 2).unwrap();
        let zeros = DensityField::new(
            vec![0.0; mesh.num_nodes()],
            vec![0.0; mesh.num_quad_points()],
        )
        .unwrap();
        let ones = DensityField::new(
            vec![1.0; mesh.num_nodes()],
            vec![1.0; mesh.num_quad_points()],
        )
        .unwrap();
        // alpha weights the output density
        let mixed = mix_density(&zeros, &ones, 0.618).unwrap();
        assert!(mixed.nodal().iter().all(|&v| (v - 0.618).abs() < 1e-15));
        let same = mix_density(&ones, &ones, 0.3).unwrap();
        assert!(same.quad().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let out = mix_density(&zeros, &ones, 1.0).unwrap();
        assert!(out.quad().iter().all(|&v| v == 1.0));
        assert!(mix_density(&zeros, &ones, 0.0).is_err());
    }

    /// A normalized FE orbital must integrate to its occupation.
    #[test]
    fn density_update_single_orbital_charge() {
        let mesh = RadialMesh::uniform(18.0, 24, 6).unwrap();
        // hydrogen 1s: P(r) = 2 r exp(-r)
        let mut coeffs: Vec<f64> = mesh.nodes().iter().map(|&r| 2.0 * r * (-r).exp()).collect();
        let n = coeffs.len();
        coeffs[n - 1] = 0.0;
        let orbital = Orbital {
            n: 1,
            l: 0,
            occupation: 1.0,
            eigenvalue: -0.5,
            coeffs,
        };
        let rho = density_update(&[orbital], &mesh).unwrap();
        assert_abs_diff_eq!(rho.normalization(&mesh).unwrap(), 1.0, epsilon = 1e-7);
        // analytic density e^(-2r)/pi, checked away from the far tail
        for (i, &r) in mesh.nodes().iter().enumerate().take(3 * mesh.order()) {
            let expected = (-2.0 * r).exp() / PI;
            assert_abs_diff_eq!(rho.nodal()[i], expected, epsilon = 1e-6);
        }
        // l = 0 origin limit: rho(0) = P'(0)^2 / 4pi with P'(0) = 2
        assert_abs_diff_eq!(rho.nodal()[0], 1.0 / PI, epsilon = 1e-5);
    }

    #[test]
    fn density_update_rejects_unnormalized_orbitals() {
        let mesh = RadialMesh::uniform(10.0, 8, 4).unwrap();
        let orbital = Orbital {
            n: 1,
            l: 0,
            occupation: 1.0,
            eigenvalue: -0.5,
            coeffs: vec![0.1; mesh.num_nodes()],
        };
        assert!(matches!(
            density_update(&[orbital], &mesh),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn effective_potential_reduces_to_bare_nucleus_without_charge() {
        let mesh = RadialMesh::uniform(10.0, 6, 4).unwrap();
        let rho = DensityField::new(
            vec![0.0; mesh.num_nodes()],
            vec![0.0; mesh.num_quad_points()],
        )
        .unwrap();
        let params = ScfParams::default();
        let pot = build_effective_potential(&rho, 3.0, &mesh, &params).unwrap();
        for (i, &r) in mesh.quad_radii().iter().enumerate() {
            assert_abs_diff_eq!(pot.v_eff[i], -3.0 / r, epsilon = 1e-10);
            assert_abs_diff_eq!(pot.v_har[i], 0.0, epsilon = 1e-10);
            assert_eq!(pot.v_xc[i], 0.0);
        }
    }

    /// Hartree potential of the analytic hydrogen 1s density: far-field Z/r
    /// and the Coulomb-law value at the origin.
    #[test]
    fn effective_potential_hartree_boundary_behavior() {
        let boundaries = vec![0.0, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 14.0, 22.0, 30.0];
        let basis = crate::quadrature::ElementBasis::with_quadrature(10, 12).unwrap();
        let mesh = RadialMesh::from_boundaries(boundaries, basis).unwrap();
        let quad: Vec<f64> = mesh
            .quad_radii()
            .iter()
            .map(|&r| (-2.0 * r).exp() / PI)
            .collect();
        let nodal: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|&r| (-2.0 * r).exp() / PI)
            .collect();
        let rho = DensityField::new(nodal, quad).unwrap();
        let params = ScfParams {
            include_xc: false,
            ..Default::default()
        };
        let pot = build_effective_potential(&rho, 1.0, &mesh, &params).unwrap();
        // V_Har -> Q/r in the tail
        for (i, &r) in mesh.quad_radii().iter().enumerate() {
            if r > 20.0 {
                assert_abs_diff_eq!(pot.v_har[i], 1.0 / r, epsilon = 1e-8);
            }
        }
        // V_Har(0) = 4 pi int r rho dr = 1
        assert_abs_diff_eq!(pot.v_har_nodal[0], 1.0, epsilon = 1e-7);
    }

    /// With Hartree and xc switched off the total energy must equal the
    /// occupied eigenvalue sum (single hydrogenic electron).
    #[test]
    fn non_interacting_energy_equals_eigenvalue() {
        let config = configuration(1).unwrap();
        let params = ScfParams {
            include_hartree: false,
            include_xc: false,
            ..Default::default()
        };
        let result = moving_mesh_solve(&config, 25.0, 8, 8, &params).unwrap();
        let eps = result.scf.orbitals[0].eigenvalue;
        assert_abs_diff_eq!(result.scf.energy.total, eps, epsilon = 1e-12);
        assert_abs_diff_eq!(eps, -0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(
            result.scf.energy.total,
            result.scf.energy.kinetic
                + result.scf.energy.hartree
                + result.scf.energy.exchange_correlation
                + result.scf.energy.external,
            epsilon = 0.0
        );
    }

    /// Hydrogen LDA ground state: sanity envelope plus density and identity
    /// invariants.
    #[test]
    fn hydrogen_scf_sanity() {
        let config = configuration(1).unwrap();
        let params = ScfParams::default();
        let result = moving_mesh_solve(&config, 20.0, 8, 8, &params).unwrap();
        assert!(result.scf.orbitals[0].eigenvalue < 0.0);
        assert_abs_diff_eq!(
            result.scf.density.normalization(&result.mesh).unwrap(),
            1.0,
            epsilon = 1e-8
        );
        assert!(result.scf.energy_identity_error < 1e-9);
        assert!(result.outer_steps <= 6);
        // orbital normalization: int P^2 dr = 1
        let p_quad = result
            .mesh
            .eval_at_quad(&result.scf.orbitals[0].coeffs)
            .unwrap();
        let sq: Vec<f64> = p_quad.iter().map(|v| v * v).collect();
        let norm = quadrature_integral(&result.mesh, &sq, IntegralWeight::One).unwrap();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-10);
    }

    /// Broad, smooth states in a shallow quadratic well: the monitor is
    /// nearly constant, so redistribution barely moves the boundaries.
    #[test]
    fn smooth_states_leave_mesh_nearly_uniform() {
        let w: f64 = 15.0; // oscillator length; P'^2 ~ w^-3 << alpha
        let r_max = 60.0;
        let params = ScfParams::default();
        let well = move |r: f64| 0.5 * r * r / w.powi(4);
        let channels = [ChannelSpec { l: 0, count: 2 }];
        let result =
            adaptive_fixed_potential(well, &channels, r_max, 10, 8, &params).unwrap();
        let uniform = RadialMesh::uniform(r_max, 10, 8).unwrap();
        let max_shift = result
            .mesh
            .boundaries()
            .iter()
            .zip(uniform.boundaries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            max_shift < 0.01 * r_max,
            "smooth states moved the mesh by {max_shift}"
        );
    }

    /// M-orthonormality of occupied orbitals within each channel.
    #[test]
    fn scf_orbitals_mass_orthonormal() {
        let config = configuration(4).unwrap(); // beryllium: two s shells
        let params = ScfParams::default();
        let result = moving_mesh_solve(&config, 20.0, 8, 8, &params).unwrap();
        let mesh = &result.mesh;
        let zero_potential = vec![0.0; mesh.num_quad_points()];
        let (_, mass) = assemble_eigensystem(mesh, &zero_potential, 0).unwrap();
        let s_orbitals: Vec<&Orbital> =
            result.scf.orbitals.iter().filter(|o| o.l == 0).collect();
        assert_eq!(s_orbitals.len(), 2);
        for a in &s_orbitals {
            for b in &s_orbitals {
                let xa = DVector::from_column_slice(&a.coeffs[1..a.coeffs.len() - 1]);
                let xb = DVector::from_column_slice(&b.coeffs[1..b.coeffs.len() - 1]);
                let dot = xa.dot(&mass.apply_vector(&xb));
                let expected = if a.n == b.n { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expected, epsilon = 1e-10);
            }
        }
    }
}
