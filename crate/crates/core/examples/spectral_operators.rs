//! Spectral calculus on the periodic box: transforms, derivatives, projection, norms.

use std::f64::consts::PI;

use pitaevskii::oracles::random_vector;
use pitaevskii::spectral::{
    continuous_minimum, dealias, divergence, gradient, laplacian, leray_project, norm_hs, norm_l2, norm_linf,
};
use pitaevskii::{Grid, ScalarField};

fn main() -> pitaevskii::Result<()> {
    let g = Grid::new(3, 32)?;

    let f = ScalarField::from_real_fn(&g, |x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos());
    let lap = laplacian(&f);
    // sin(2πx)cos(4πy) is an eigenfunction with eigenvalue -(2π)²(1 + 4).
    let expected = f.to_spectral().scaled((-20.0 * PI * PI).into());
    let err = norm_linf(&lap.add_scaled((-1.0).into(), &expected)?);
    println!("laplacian eigen-check: max error {err:.2e}");

    let grad = gradient(&f);
    let grad_l2: f64 = grad.components().iter().map(|c| norm_l2(c).powi(2)).sum::<f64>().sqrt();
    println!("|grad f|_L2 = {grad_l2:.12} (exact {:.12})", 5f64.sqrt() * PI);

    let v = random_vector(&g, 7);
    let pv = leray_project(&v);
    println!(
        "Leray projection: |div v| = {:.2e} -> |div Pv| = {:.2e}",
        norm_linf(&divergence(&v)),
        norm_linf(&divergence(&pv))
    );

    let d = dealias(&f.to_spectral());
    let change = norm_l2(&d.add_scaled((-1.0).into(), &f.to_spectral())?);
    println!("dealiasing a low mode changes it by {change:.1e} (round-off in the high modes)");
    println!("H^2 norm of f: {:.6}", norm_hs(&f, 2.0)?);

    let rho = ScalarField::from_real_fn(&g, |x| 1.0 - 0.1 * (2.0 * PI * (x[0] - 0.013)).cos());
    let (m, at) = continuous_minimum(&rho)?;
    println!("continuous minimum {m:.12} at x = {:.6}", at[0]);
    Ok(())
}
