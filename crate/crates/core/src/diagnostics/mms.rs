//! Manufactured-solution and grid-refinement convergence studies.
//!
//! Temporal order: an analytic trajectory `q_e(t)` is made an exact solution of the
//! semi-discrete system by adding `f = ∂t q_e − RHS(q_e)`, so the remaining error
//! is purely the time discretisation. Spatial accuracy: the same initial data is
//! integrated on grids `n` and `n_ref` with the same steps, and values are compared
//! at the coarse collocation points.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::model::{EvalOptions, Params, State};
use crate::spectral::{norm_l2_sq, vector_l2_sq, Grid, ScalarField, VectorField};
use crate::timestepper::{full_tendency, Forcing, IntegratorConfig, Stepper, Tendency};

/// An analytic trajectory with its exact time derivative.
pub trait ManufacturedCase {
    fn exact(&self, grid: &Arc<Grid>, t: f64) -> State;
    fn time_derivative(&self, grid: &Arc<Grid>, t: f64) -> Tendency;
}

/// Source term turning a [`ManufacturedCase`] into an exact discrete solution.
pub struct MmsForcing<'a> {
    pub case: &'a dyn ManufacturedCase,
    pub params: Params,
    pub opts: EvalOptions,
}

impl Forcing for MmsForcing<'_> {
    fn at(&self, t: f64, grid: &Arc<Grid>) -> Result<Tendency> {
        let exact = self.case.exact(grid, t);
        let rhs = full_tendency(&exact, &self.params, self.opts)?;
        let dt = self.case.time_derivative(grid, t);
        let m1 = C64::new(-1.0, 0.0);
        Ok(Tendency {
            psi: dt.psi.to_spectral().add_scaled(m1, &rhs.psi)?,
            u: dt.u.to_spectral().add_scaled(-1.0, &rhs.u)?,
            rho: dt.rho.to_spectral().add_scaled(m1, &rhs.rho)?,
        })
    }
}

/// Band-limited coupled trajectory exercising every term:
/// `ψ = 0.1 e^{-t/2} (e^{2πi x₀} + ½ i e^{2πi(x₁ - x₂)})`,
/// `u = 0.1 cos t · (sin 2πx₁, sin 2πx₂, sin 2πx₀)` (2D: `(sin 2πx₁, sin 2πx₀)`),
/// `ρ = 1 + 0.05 cos t · cos 2π(x₀ + x₁)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct CoupledCase;

impl CoupledCase {
    fn psi_shape(x: [f64; 3]) -> C64 {
        C64::from_polar(0.1, 2.0 * PI * x[0])
            + C64::new(0.0, 0.05) * C64::from_polar(1.0, 2.0 * PI * (x[1] - x[2]))
    }

    fn u_shape(dim: usize, x: [f64; 3]) -> [f64; 3] {
        let s = |y: f64| (2.0 * PI * y).sin();
        if dim == 2 {
            [0.1 * s(x[1]), 0.1 * s(x[0]), 0.0]
        } else {
            [0.1 * s(x[1]), 0.1 * s(x[2]), 0.1 * s(x[0])]
        }
    }

    fn rho_shape(x: [f64; 3]) -> f64 {
        0.05 * (2.0 * PI * (x[0] + x[1])).cos()
    }
}

impl ManufacturedCase for CoupledCase {
    fn exact(&self, grid: &Arc<Grid>, t: f64) -> State {
        let dim = grid.dim();
        let a = (-0.5 * t).exp();
        let psi = ScalarField::from_fn(grid, |x| a * Self::psi_shape(x));
        let u = VectorField::from_fn(grid, |x| Self::u_shape(dim, x).map(|v| t.cos() * v));
        let rho = ScalarField::from_real_fn(grid, |x| 1.0 + t.cos() * Self::rho_shape(x));
        let mut s = State::new(t, psi, u, rho).expect("same grid");
        s.u = s.u.real_part();
        s.rho = s.rho.real_part();
        s
    }

    fn time_derivative(&self, grid: &Arc<Grid>, t: f64) -> Tendency {
        let dim = grid.dim();
        let a = -0.5 * (-0.5 * t).exp();
        Tendency {
            psi: ScalarField::from_fn(grid, |x| a * Self::psi_shape(x)).into_spectral(),
            u: VectorField::from_fn(grid, |x| Self::u_shape(dim, x).map(|v| -t.sin() * v))
                .into_spectral()
                .real_part(),
            rho: ScalarField::from_real_fn(grid, |x| -t.sin() * Self::rho_shape(x))
                .into_spectral()
                .real_part(),
        }
    }
}

/// Errors at a sequence of resolutions, coarsest first.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    /// Step sizes or grid spacings.
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
}

impl ConvergenceStudy {
    /// Observed orders `log(e_i/e_{i+1}) / log(h_i/h_{i+1})`.
    pub fn orders(&self) -> Vec<f64> {
        self.errors
            .windows(2)
            .zip(self.resolutions.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect()
    }
}

/// Relative L² distance between two states on the same grid.
pub fn state_distance(a: &State, b: &State) -> Result<f64> {
    let m1 = C64::new(-1.0, 0.0);
    let num = norm_l2_sq(&a.psi.add_scaled(m1, &b.psi)?)
        + vector_l2_sq(&a.u.add_scaled(-1.0, &b.u)?)
        + norm_l2_sq(&a.rho.add_scaled(m1, &b.rho)?);
    let den = norm_l2_sq(&b.psi) + vector_l2_sq(&b.u) + norm_l2_sq(&b.rho);
    Ok((num / den.max(1e-300)).sqrt())
}

fn integrate(
    initial: &State,
    params: &Params,
    dt: f64,
    t_end: f64,
    forcing: Option<&dyn Forcing>,
) -> Result<State> {
    let cfg = IntegratorConfig::new(dt, params);
    let mut stepper = Stepper::new(initial.grid(), params, &cfg)?;
    let steps = ((t_end - initial.t) / dt).round() as usize;
    let mut s = initial.clone();
    for _ in 0..steps {
        let t = s.t;
        s = stepper.step_with(&s, dt, forcing).map_err(|e| e.at_time(t))?;
    }
    Ok(s)
}

/// Forced runs with each `dt` from `t = 0` to `t_end` (a multiple of every `dt`).
pub fn temporal_convergence(
    case: &dyn ManufacturedCase,
    params: &Params,
    grid: &Arc<Grid>,
    dts: &[f64],
    t_end: f64,
) -> Result<ConvergenceStudy> {
    let forcing = MmsForcing {
        case,
        params: *params,
        opts: EvalOptions::for_params(params),
    };
    let exact_end = case.exact(grid, t_end);
    let errors = dts
        .iter()
        .map(|&dt| {
            let end = integrate(&case.exact(grid, 0.0), params, dt, t_end, Some(&forcing))?;
            state_distance(&end, &exact_end)
        })
        .collect::<Result<_>>()?;
    Ok(ConvergenceStudy {
        resolutions: dts.to_vec(),
        errors,
    })
}

/// Max pointwise difference over all fields between a coarse state and a reference
/// state on a grid refined by an integer factor.
pub fn shared_point_difference(coarse: &State, fine: &State) -> f64 {
    let gc = coarse.grid();
    let gf = fine.grid();
    let factor = gf.n() / gc.n();
    let dim = gc.dim();
    let map = |i: usize| {
        let m = gc.mode(i);
        let mut f = [0i64; 3];
        for a in 0..dim {
            f[a] = (m[a] * factor) as i64;
        }
        let mut idx = 0usize;
        for a in 0..dim {
            idx = idx * gf.n() + f[a] as usize;
        }
        idx
    };
    let pairs = |c: &ScalarField, f: &ScalarField| -> f64 {
        let (cp, fp) = (c.to_physical(), f.to_physical());
        (0..gc.len())
            .map(|i| (cp.values()[i] - fp.values()[map(i)]).norm())
            .fold(0.0, f64::max)
    };
    let mut err = pairs(&coarse.psi, &fine.psi).max(pairs(&coarse.rho, &fine.rho));
    for a in 0..dim {
        err = err.max(pairs(coarse.u.component(a), fine.u.component(a)));
    }
    err
}

/// Unforced runs of the same initial data on each grid in `ns` and on `n_ref`;
/// errors are shared-point differences against the reference.
pub fn spatial_convergence(
    initial: &dyn Fn(&Arc<Grid>) -> State,
    params: &Params,
    dim: usize,
    ns: &[usize],
    n_ref: usize,
    dt: f64,
    t_end: f64,
) -> Result<ConvergenceStudy> {
    let g_ref = Grid::new(dim, n_ref)?;
    let reference = integrate(&initial(&g_ref), params, dt, t_end, None)?;
    let mut errors = Vec::with_capacity(ns.len());
    for &n in ns {
        let g = Grid::new(dim, n)?;
        let end = integrate(&initial(&g), params, dt, t_end, None)?;
        errors.push(shared_point_difference(&end, &reference));
    }
    Ok(ConvergenceStudy {
        resolutions: ns.iter().map(|&n| 1.0 / n as f64).collect(),
        errors,
    })
}

/// ψ = 0, uniform ρ, one shear mode of u: a linear heat-type problem.
pub fn heat_initial(grid: &Arc<Grid>) -> State {
    let mut s = State::quiescent(grid, 1.0);
    s.u = VectorField::from_fn(grid, |x| [0.2 * (2.0 * PI * x[1]).sin(), 0.0, 0.0]).into_spectral();
    s
}

/// ψ = 0, uniform velocity, smooth non-band-limited ρ: pure transport of ρ.
pub fn advection_initial(grid: &Arc<Grid>) -> State {
    let dim = grid.dim();
    let mut s = State::quiescent(grid, 1.0);
    s.u = VectorField::from_fn(grid, |_| [0.3, -0.2, 0.1]).into_spectral();
    s.rho = ScalarField::from_real_fn(grid, move |x| {
        let z = if dim == 3 { x[2] } else { 0.0 };
        1.0 + 0.1 * (0.5 * (2.0 * PI * (x[0] + z)).sin()).exp() * (2.0 * PI * x[1]).cos()
    })
    .into_spectral();
    s
}

/// Coupled smooth data with infinitely many active modes.
pub fn coupled_initial(grid: &Arc<Grid>) -> State {
    crate::oracles::analytic_state(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_state_is_a_fixed_point_of_the_forced_rhs() {
        let g = Grid::new(2, 16).unwrap();
        let params = Params::default();
        let case = CoupledCase;
        let f = MmsForcing {
            case: &case,
            params,
            opts: EvalOptions::for_params(&params),
        };
        let t = 0.3;
        let rhs = full_tendency(&case.exact(&g, t), &params, f.opts).unwrap();
        let src = f.at(t, &g).unwrap();
        let dt = case.time_derivative(&g, t);
        let back = rhs.psi.add_scaled(C64::new(1.0, 0.0), &src.psi).unwrap();
        let d = back.add_scaled(C64::new(-1.0, 0.0), &dt.psi).unwrap();
        assert!(norm_l2_sq(&d).sqrt() < 1e-14);
    }

    #[test]
    fn temporal_order_two_in_2d() {
        let g = Grid::new(2, 16).unwrap();
        let params = Params::default();
        let study = temporal_convergence(&CoupledCase, &params, &g, &[0.005, 0.0025, 0.00125], 0.2).unwrap();
        for o in study.orders() {
            assert!((o - 2.0).abs() <= 0.2, "{study:?}");
        }
    }

    #[test]
    fn heat_case_spatial_error_is_round_off() {
        let params = Params::default();
        let s = spatial_convergence(&heat_initial, &params, 2, &[16, 32], 64, 0.01, 0.05).unwrap();
        assert!(s.errors.iter().all(|&e| e < 1e-14), "{s:?}");
    }

    #[test]
    fn advection_case_is_spectrally_accurate() {
        let params = Params::default();
        let s = spatial_convergence(&advection_initial, &params, 2, &[8, 16, 32], 64, 0.01, 0.1).unwrap();
        assert!(s.errors[0] > s.errors[1] && s.errors[1] > s.errors[2], "{s:?}");
        assert!(s.errors[2] < 1e-10, "{s:?}");
    }
}
