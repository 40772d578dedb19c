//! Manufactured solutions: temporal order of the integrator and spectral accuracy in space.

use pitaevskii::diagnostics::mms::{advection_initial, spatial_convergence, temporal_convergence, CoupledCase};
use pitaevskii::{Grid, Params};

fn main() -> pitaevskii::Result<()> {
    let params = Params::default();
    let g = Grid::new(2, 16)?;
    let t = temporal_convergence(&CoupledCase, &params, &g, &[0.01, 0.005, 0.0025, 0.00125], 0.2)?;
    for (dt, e) in t.resolutions.iter().zip(&t.errors) {
        println!("dt {dt:.5}: error {e:.3e}");
    }
    println!("observed orders {:.3?}", t.orders());

    let s = spatial_convergence(&advection_initial, &params, 2, &[8, 16, 32], 64, 0.01, 0.1)?;
    for (h, e) in s.resolutions.iter().zip(&s.errors) {
        println!("n = {:>2}: error {e:.3e}", (1.0 / h).round());
    }
    Ok(())
}
