use atomfem::assembly::assemble_eigensystem;
use atomfem::eigensolve::{dense_eig_oracle, lobpcg, LobpcgOptions, Preconditioner};
use atomfem::mesh::RadialMesh;
use atomfem::scf::{build_effective_potential, thomas_fermi_density, ScfParams};

fn main() {
    let mesh = RadialMesh::uniform(20.0, 10, 8).unwrap();
    let rho = thomas_fermi_density(26, &mesh).unwrap();
    let params = ScfParams::default();
    let pot = build_effective_potential(&rho, 26.0, &mesh, &params).unwrap();
    let zero = vec![0.0; mesh.num_quad_points()];
    let (half_kin, mass) = assemble_eigensystem(&mesh, &zero, 0).unwrap();

    for l in [0usize, 1, 2] {
        let (h, m) = assemble_eigensystem(&mesh, &pot.v_eff, l).unwrap();
        let (dense_vals, _) = dense_eig_oracle(&h, &m).unwrap();
        let k = [4usize, 2, 1][l];
        println!("l={l}: dense lowest {:?}", &dense_vals[..(k + 3).min(dense_vals.len())]);
        let precond = Preconditioner::shifted_kinetic(&half_kin, &mass);
        let opts = LobpcgOptions { tol: 1e-9, maxit: 2000, scale_tol_by_ritz: true, seed: l as u64 };
        match lobpcg(&h, &m, k, None, &precond, &opts) {
            Ok(sol) => {
                println!("   lobpcg: converged={} iters={} vals={:?} res={:?}",
                    sol.converged, sol.iterations, sol.eigenvalues, sol.residual_norms);
                if !sol.converged {
                    let hist = &sol.residual_history;
                    for snap in hist.iter().step_by(hist.len().div_ceil(20)) {
                        println!("      res {:?}", snap);
                    }
                }
            }
            Err(e) => println!("   lobpcg error: {e}"),
        }
    }
}
