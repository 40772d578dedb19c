//! Initial data: plane waves, seeded random smooth fields, or a stored checkpoint.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::checkpoint::Checkpoint;
use super::config::{InitialMode, InitialSpec};
use crate::error::{Error, Result};
use crate::model::{Params, State};
use crate::spectral::{leray_project, norm_l2, norm_linf, norm_lp, Grid, Repr, ScalarField, VectorField};

#[derive(Clone, Debug)]
pub struct InitialData {
    pub state: State,
    /// `‖ψ₀‖²_{H²} + ‖u₀‖²_{H¹} + ‖ψ₀‖^{p+2}_{L^{p+2}}`.
    pub smallness: f64,
}

/// `‖ψ‖²_{H²} + ‖u‖²_{H¹} + ‖ψ‖^{p+2}_{L^{p+2}}`, with `‖f‖²_{Hˢ}` summing
/// `‖f‖² + ‖∇f‖² (+ ‖Δf‖²)`.
pub fn smallness(state: &State, params: &Params) -> Result<f64> {
    let g = state.grid();
    let weighted = |f: &ScalarField, w: &dyn Fn(f64) -> f64| -> f64 {
        f.to_spectral()
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| w(g.k_sq(i)) * v.norm_sqr())
            .sum()
    };
    let psi_h2 = weighted(&state.psi, &|k2| 1.0 + k2 + k2 * k2);
    let u_h1: f64 = state
        .u
        .components()
        .iter()
        .map(|c| weighted(c, &|k2| 1.0 + k2))
        .sum();
    let q = params.p + 2.0;
    Ok(psi_h2 + u_h1 + norm_lp(&state.psi, q)?.powf(q))
}

/// Complex Gaussian coefficients on `0 < max|f_a| ≤ cutoff`, weighted by
/// `exp(-|f|²/cutoff)`. Modes are visited in storage order, so a seed fixes the field.
fn gaussian_modes(g: &Arc<Grid>, rng: &mut ChaCha8Rng, cutoff: i64) -> ScalarField {
    let dim = g.dim();
    let data = (0..g.len())
        .map(|i| {
            let f = g.frequency_vector(i);
            if i == 0 || f[..dim].iter().any(|x| x.abs() > cutoff) {
                return C64::new(0.0, 0.0);
            }
            let f2: i64 = f[..dim].iter().map(|x| x * x).sum();
            let w = (-(f2 as f64) / cutoff as f64).exp();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            w * C64::new(re, im)
        })
        .collect();
    ScalarField::from_data(g, data, Repr::Spectral).expect("length matches grid")
}

fn normalized(f: ScalarField, target: f64) -> ScalarField {
    let norm = norm_l2(&f);
    if target == 0.0 || norm == 0.0 {
        return ScalarField::zeros(f.grid(), Repr::Spectral);
    }
    f.scaled(C64::new(target / norm, 0.0))
}

fn check_density(rho: &ScalarField, params: &Params) -> Result<()> {
    let phys = rho.to_physical();
    let (lo, hi) = phys
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v.re), b.max(v.re)));
    if lo < params.m_i || hi > params.big_m_i {
        return Err(Error::Config(format!(
            "initial.rho0: initial density spans [{lo}, {hi}], outside [m_i, M_i] = [{}, {}]",
            params.m_i, params.big_m_i
        )));
    }
    Ok(())
}

fn plane_wave(spec: &InitialSpec, g: &Arc<Grid>) -> State {
    let m = spec.wavevector;
    let mut s = State::quiescent(g, spec.rho0);
    s.psi = ScalarField::from_fn(g, |x| {
        let ph = 2.0 * PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2]);
        C64::from_polar(spec.amplitude, ph)
    })
    .into_spectral();
    s
}

fn random_smooth(spec: &InitialSpec, g: &Arc<Grid>) -> Result<State> {
    if !(spec.cutoff >= 1 && 4 * spec.cutoff <= g.n() as i64) {
        return Err(Error::Config(format!(
            "initial.cutoff: {} must lie in [1, n/4]",
            spec.cutoff
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let psi = normalized(gaussian_modes(g, &mut rng, spec.cutoff), spec.amplitude);
    let raw: Vec<ScalarField> = (0..g.dim())
        .map(|_| gaussian_modes(g, &mut rng, spec.cutoff).real_part())
        .collect();
    let u = leray_project(&VectorField::from_components(raw)?);
    let u_norm = u.components().iter().map(|c| norm_l2(c).powi(2)).sum::<f64>().sqrt();
    let u = if u_norm > 0.0 {
        u.scaled(spec.velocity_amplitude / u_norm)
    } else {
        u
    };
    let eta = gaussian_modes(g, &mut rng, spec.cutoff).real_part();
    let sup = norm_linf(&eta);
    let scale = if sup > 0.0 { spec.rho0 * spec.rho_fluctuation / sup } else { 0.0 };
    let rho = eta
        .scaled(C64::new(scale, 0.0))
        .map_modes(|i, v| if i == 0 { C64::new(spec.rho0, 0.0) } else { v });
    State::new(0.0, psi, u, rho)
}

/// Build the initial state and its smallness functional. `from_checkpoint` loads
/// the stored state as is (its time included) after checking the grid.
pub fn generate_initial(spec: &InitialSpec, grid: &Arc<Grid>, params: &Params) -> Result<InitialData> {
    let state = match spec.mode {
        InitialMode::PlaneWave => plane_wave(spec, grid),
        InitialMode::RandomSmooth => random_smooth(spec, grid)?,
        InitialMode::FromCheckpoint => {
            let path = spec
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("initial.checkpoint: required for mode from_checkpoint".into()))?;
            let c = Checkpoint::load(path)?;
            if (c.header.dim, c.header.n) != (grid.dim(), grid.n()) {
                return Err(Error::Config(format!(
                    "initial.checkpoint: grid {}^{} does not match the configured {}^{}",
                    c.header.n,
                    c.header.dim,
                    grid.n(),
                    grid.dim()
                )));
            }
            c.to_state()?
        }
    };
    check_density(&state.rho, params)?;
    Ok(InitialData {
        smallness: smallness(&state, params)?,
        state,
    })
}
