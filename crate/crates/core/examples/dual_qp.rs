//! Solves the nonnegative dual QP `min 0.5 v'Hv + q'v, v >= 0` directly.

use gem_core::linalg::Matrix;
use gem_core::projection::{kkt_residual, solve_dual, DualSolverOptions};

fn main() -> gem_core::Result<()> {
    let h = Matrix::from_rows(&[[2.0, 0.5, 0.1], [0.5, 1.0, 0.3], [0.1, 0.3, 1.5]])?;
    let q = [-1.0, 0.4, -2.0];

    let sol = solve_dual(&h, &q, &DualSolverOptions::default())?;
    println!("v*          = {:?}", sol.v);
    println!("sweeps      = {}", sol.sweeps);
    println!("KKT residual= {:.3e}", kkt_residual(&h, &q, &sol.v));

    // a singular H (two identical rows of G) is handled by the ridge and refinement
    let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]])?;
    let sol = solve_dual(&singular, &[-1.0, -1.0], &DualSolverOptions::default())?;
    println!("singular H: v* = {:?}, residual {:.3e}", sol.v, sol.kkt_residual);
    Ok(())
}
