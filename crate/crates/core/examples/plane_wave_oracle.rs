//! A single plane wave stays a plane wave: compare the full solver with the reduced ODE
//! for its amplitude, the mean density and the mean velocity.

use num_complex::Complex64 as C64;
use pitaevskii::verify::compare_plane_wave;
use pitaevskii::{Grid, Params};

fn main() -> pitaevskii::Result<()> {
    let params = Params::default();
    let g = Grid::new(3, 8)?;
    for dt in [1e-3, 5e-4, 2.5e-4] {
        let c = compare_plane_wave(&g, &params, C64::new(0.3, 0.1), [1, 0, 0], 1.0, dt, 2.0, 100)?;
        println!(
            "dt {dt:.1e}: relative errors S {:.2e}, mean rho {:.2e}, mean u {:.2e} ({} samples)",
            c.mass_error, c.rho_error, c.u_error, c.samples
        );
    }
    Ok(())
}
