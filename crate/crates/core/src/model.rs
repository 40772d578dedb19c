//! Physical state, parameters, the coupling operator `B`, and the right-hand sides
//! of the wavefunction, momentum, and continuity equations.
//!
//! `B = ½(-i∇ - u)² + μ|ψ|^p = -½Δ + ½|u|² + i u·∇ + μ|ψ|^p` for divergence-free `u`.
//! Nonlinear products are formed at the collocation points and truncated once by
//! the two-thirds rule; linear terms are applied exactly in Fourier space.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    dealias_in_place, gradient, inner, laplacian, leray_project_in_place, Grid, Repr,
    ScalarField, VectorField,
};

/// Physical constants and the density bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Coupling strength λ.
    pub lambda: f64,
    /// Self-interaction strength μ.
    pub mu: f64,
    /// Viscosity ν.
    pub nu: f64,
    /// Drag α.
    pub alpha: f64,
    /// Nonlinearity exponent p ≥ 1.
    pub p: f64,
    /// Lower bound m_i of the initial density.
    pub m_i: f64,
    /// Upper bound M_i of the initial density.
    #[serde(rename = "M_i")]
    pub big_m_i: f64,
    /// Target density floor m_f, strictly below m_i.
    pub m_f: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            lambda: 0.2,
            mu: 1.0,
            nu: 0.05,
            alpha: 0.5,
            p: 2.0,
            m_i: 0.9,
            big_m_i: 1.1,
            m_f: 0.5,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("nu", self.nu),
            ("alpha", self.alpha),
            ("m_i", self.m_i),
            ("m_f", self.m_f),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidParams(format!("p = {} must be at least 1", self.p)));
        }
        if !(self.m_i <= self.big_m_i && self.big_m_i.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need m_i <= M_i, got {} > {}",
                self.m_i, self.big_m_i
            )));
        }
        if self.m_f >= self.m_i {
            return Err(Error::InvalidParams(format!(
                "need m_f < m_i, got {} >= {}",
                self.m_f, self.m_i
            )));
        }
        Ok(())
    }

    /// Upper density bound `M_f = M_i + m_i - m_f` carried by the existence theory.
    pub fn big_m_f(&self) -> f64 {
        self.big_m_i + self.m_i - self.m_f
    }

    /// Default density floor at which the solver stops.
    pub fn default_density_floor(&self) -> f64 {
        0.5 * self.m_f
    }

    /// `|ψ|^p` from `|ψ|²`, clamped at zero before exponentiation.
    #[inline]
    pub(crate) fn abs_pow(&self, abs_sq: f64) -> f64 {
        let a = abs_sq.max(0.0);
        if self.p == 2.0 {
            a
        } else if self.p == 1.0 {
            a.sqrt()
        } else if self.p == 4.0 {
            a * a
        } else {
            a.powf(0.5 * self.p)
        }
    }
}

/// Snapshot `(t, ψ, u, ρ)`; fields are held as Fourier coefficients.
#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub psi: ScalarField,
    pub u: VectorField,
    pub rho: ScalarField,
}

impl State {
    pub fn new(t: f64, psi: ScalarField, u: VectorField, rho: ScalarField) -> Result<Self> {
        if !psi.same_grid(u.component(0)) || !psi.same_grid(&rho) {
            return Err(Error::GridMismatch);
        }
        Ok(State {
            t,
            psi: psi.into_spectral(),
            u: u.into_spectral(),
            rho: rho.into_spectral(),
        })
    }

    /// ψ = 0, u = 0 and a uniform density.
    pub fn quiescent(grid: &Arc<Grid>, rho0: f64) -> Self {
        let mut rho = ScalarField::zeros(grid, Repr::Spectral);
        rho.values_mut()[0] = C64::new(rho0, 0.0);
        State {
            t: 0.0,
            psi: ScalarField::zeros(grid, Repr::Spectral),
            u: VectorField::zeros(grid, Repr::Spectral),
            rho,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.psi.grid()
    }

    pub fn rho_mean(&self) -> f64 {
        self.rho.to_spectral().values()[0].re
    }

    /// Minimum and maximum of ρ over the collocation points.
    pub fn rho_bounds(&self) -> (f64, f64) {
        let phys = self.rho.to_physical();
        phys.values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.re), hi.max(v.re))
            })
    }

    pub fn is_finite(&self) -> bool {
        self.psi.is_finite() && self.u.is_finite() && self.rho.is_finite()
    }
}

/// Numerical switches shared by all tendency evaluations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub dealias: bool,
    pub density_floor: f64,
}

impl EvalOptions {
    pub fn for_params(params: &Params) -> Self {
        EvalOptions {
            dealias: true,
            density_floor: params.default_density_floor(),
        }
    }
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn physical(values: Vec<C64>, grid: &Arc<Grid>) -> ScalarField {
    ScalarField::from_data(grid, values, Repr::Physical).expect("length matches grid")
}

/// Forward transform followed by the optional two-thirds truncation.
fn to_truncated_spectral(values: Vec<C64>, grid: &Arc<Grid>, dealias: bool) -> ScalarField {
    let mut s = physical(values, grid).into_spectral();
    if dealias {
        dealias_in_place(&mut s);
    }
    s
}

/// The collocation-point ingredients of `Bψ`, evaluated once and shared by all
/// three tendencies.
#[derive(Clone, Debug)]
pub struct Coupling {
    grid: Arc<Grid>,
    params: Params,
    opts: EvalOptions,
    state: State,
    psi: Vec<C64>,
    grad_psi: Vec<Vec<C64>>,
    u: Vec<Vec<f64>>,
    /// `½|u|²ψ + i u·∇ψ + μ|ψ|^p ψ`
    nl_b: Vec<C64>,
    /// `|ψ|^p ψ`
    pow_psi: Vec<C64>,
    b_psi_hat: ScalarField,
    b_psi: Vec<C64>,
}

impl Coupling {
    pub fn new(state: &State, params: &Params, opts: EvalOptions) -> Result<Self> {
        let grid = state.grid().clone();
        if !state.psi.same_grid(&state.rho) || !state.psi.same_grid(state.u.component(0)) {
            return Err(Error::GridMismatch);
        }
        let dim = grid.dim();
        let psi_hat = state.psi.to_spectral();
        let psi = psi_hat.to_physical().into_values();
        let grad_psi: Vec<Vec<C64>> = gradient(&psi_hat)
            .into_physical()
            .into_components()
            .into_iter()
            .map(|c| c.into_values())
            .collect();
        let u: Vec<Vec<f64>> = state
            .u
            .to_physical()
            .into_components()
            .into_iter()
            .map(|c| c.into_values().into_iter().map(|v| v.re).collect())
            .collect();

        let len = grid.len();
        let mut nl_b = vec![zero(); len];
        let mut pow_psi = vec![zero(); len];
        for i in 0..len {
            let mut u_sq = 0.0;
            let mut u_grad = zero();
            for a in 0..dim {
                u_sq += u[a][i] * u[a][i];
                u_grad += u[a][i] * grad_psi[a][i];
            }
            let pw = params.abs_pow(psi[i].norm_sqr()) * psi[i];
            pow_psi[i] = pw;
            nl_b[i] = 0.5 * u_sq * psi[i] + C64::new(0.0, 1.0) * u_grad + params.mu * pw;
        }
        let nl_hat = to_truncated_spectral(nl_b.clone(), &grid, opts.dealias);
        let g = grid.clone();
        let b_psi_hat = psi_hat.map_modes(|i, v| 0.5 * g.k_sq(i) * v + nl_hat.values()[i]);
        let b_psi = b_psi_hat.to_physical().into_values();
        Ok(Coupling {
            grid,
            params: *params,
            opts,
            state: state.clone(),
            psi,
            grad_psi,
            u,
            nl_b,
            pow_psi,
            b_psi_hat,
            b_psi,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// `Bψ` as Fourier coefficients.
    pub fn b_psi(&self) -> &ScalarField {
        &self.b_psi_hat
    }

    /// `Bψ` at the collocation points.
    pub fn b_psi_values(&self) -> &[C64] {
        &self.b_psi
    }

    /// ψ at the collocation points.
    pub fn psi_values(&self) -> &[C64] {
        &self.psi
    }

    /// `ψ̄ Bψ` at the collocation points.
    pub fn psi_bar_b_psi(&self) -> Vec<C64> {
        self.psi
            .iter()
            .zip(&self.b_psi)
            .map(|(p, b)| p.conj() * b)
            .collect()
    }

    /// Explicit part of the parabolic form of the wavefunction equation:
    /// `-(λ/2)|u|²ψ - iλ u·∇ψ - μ(λ+i)|ψ|^p ψ`.
    pub fn nls_explicit(&self) -> ScalarField {
        let lam = self.params.lambda;
        let mu = self.params.mu;
        let vals: Vec<C64> = self
            .nl_b
            .iter()
            .zip(&self.pow_psi)
            .map(|(nb, pw)| -lam * nb - C64::new(0.0, mu) * pw)
            .collect();
        to_truncated_spectral(vals, &self.grid, self.opts.dealias)
    }

    /// `-u·∇ρ + 2λ Re(ψ̄ Bψ)`, real and dealiased.
    pub fn continuity(&self) -> ScalarField {
        let dim = self.grid.dim();
        let grad_rho: Vec<Vec<C64>> = gradient(&self.state.rho)
            .into_physical()
            .into_components()
            .into_iter()
            .map(|c| c.into_values())
            .collect();
        let two_lam = 2.0 * self.params.lambda;
        let vals: Vec<C64> = (0..self.grid.len())
            .map(|i| {
                let adv: f64 = (0..dim).map(|a| self.u[a][i] * grad_rho[a][i].re).sum();
                let src = (self.psi[i].conj() * self.b_psi[i]).re;
                C64::new(two_lam * src - adv, 0.0)
            })
            .collect();
        to_truncated_spectral(vals, &self.grid, self.opts.dealias).real_part()
    }

    /// Leray-projected `∂t u`:
    /// `P[(1/ρ)(νΔu - 2λ Im(∇ψ̄ Bψ) - 2λ u Re(ψ̄Bψ)) - u·∇u - αu]`.
    ///
    /// The advective term enters as `-ω×u`; the two differ by a pure gradient
    /// that the projection removes.
    pub fn momentum(&self) -> Result<VectorField> {
        let grid = &self.grid;
        let dim = grid.dim();
        let rho: Vec<f64> = self
            .state
            .rho
            .to_physical()
            .into_values()
            .into_iter()
            .map(|v| v.re)
            .collect();
        let min_rho = rho.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_rho >= self.opts.density_floor) {
            return Err(Error::DensityFloorViolation {
                min_rho,
                floor: self.opts.density_floor,
            });
        }
        let u_hat = self.state.u.to_spectral();
        let lap_u: Vec<Vec<f64>> = u_hat
            .components()
            .iter()
            .map(|c| {
                laplacian(c)
                    .into_physical()
                    .into_values()
                    .into_iter()
                    .map(|v| v.re)
                    .collect()
            })
            .collect();
        let vort = vorticity(&u_hat);

        let Params {
            lambda, nu, alpha, ..
        } = self.params;
        let len = grid.len();
        let mut out: Vec<Vec<C64>> = vec![vec![zero(); len]; dim];
        for i in 0..len {
            let src = (self.psi[i].conj() * self.b_psi[i]).re;
            let inv_rho = 1.0 / rho[i];
            let lamb = lamb_vector(dim, &self.u, &vort, i);
            for a in 0..dim {
                let stress = (self.grad_psi[a][i].conj() * self.b_psi[i]).im;
                let force = nu * lap_u[a][i]
                    - 2.0 * lambda * stress
                    - 2.0 * lambda * self.u[a][i] * src;
                let v = inv_rho * force - lamb[a] - alpha * self.u[a][i];
                out[a][i] = C64::new(v, 0.0);
            }
        }
        let comps = out
            .into_iter()
            .map(|vals| to_truncated_spectral(vals, grid, self.opts.dealias))
            .collect();
        let mut v = VectorField::from_components(comps)?;
        leray_project_in_place(&mut v);
        Ok(v.real_part())
    }
}

/// Vorticity at the collocation points: three components in 3D, one in 2D.
fn vorticity(u_hat: &VectorField) -> Vec<Vec<f64>> {
    let dim = u_hat.dim();
    let grads: Vec<Vec<ScalarField>> = u_hat
        .components()
        .iter()
        .map(|c| gradient(c).into_components())
        .collect();
    // grads[a][b] = ∂_b u_a
    let curl = |a: usize, b: usize| -> Vec<f64> {
        grads[b][a]
            .add_scaled(C64::new(-1.0, 0.0), &grads[a][b])
            .expect("same grid")
            .into_physical()
            .into_values()
            .into_iter()
            .map(|v| v.re)
            .collect()
    };
    if dim == 2 {
        vec![curl(0, 1)]
    } else {
        vec![curl(1, 2), curl(2, 0), curl(0, 1)]
    }
}

/// `ω × u` at point `i`.
#[inline]
fn lamb_vector(dim: usize, u: &[Vec<f64>], w: &[Vec<f64>], i: usize) -> [f64; 3] {
    if dim == 2 {
        let om = w[0][i];
        [-om * u[1][i], om * u[0][i], 0.0]
    } else {
        let (u0, u1, u2) = (u[0][i], u[1][i], u[2][i]);
        let (w0, w1, w2) = (w[0][i], w[1][i], w[2][i]);
        [w1 * u2 - w2 * u1, w2 * u0 - w0 * u2, w0 * u1 - w1 * u0]
    }
}

/// `Bψ = -½Δψ + ½|u|²ψ + i u·∇ψ + μ|ψ|^p ψ`, returned as Fourier coefficients.
pub fn apply_b(psi: &ScalarField, u: &VectorField, params: &Params) -> Result<ScalarField> {
    if !psi.same_grid(u.component(0)) {
        return Err(Error::GridMismatch);
    }
    let grid = psi.grid().clone();
    let mut rho = ScalarField::zeros(&grid, Repr::Spectral);
    rho.values_mut()[0] = C64::new(1.0, 0.0);
    let state = State::new(0.0, psi.clone(), u.clone(), rho)?;
    Ok(Coupling::new(&state, params, EvalOptions::for_params(params))?
        .b_psi()
        .clone())
}

/// Both sides of `Re⟨ψ, Bψ⟩ = ½‖(-i∇ - u)ψ‖² + μ‖ψ‖^{p+2}_{L^{p+2}}`.
///
/// The left side goes through [`apply_b`] and Parseval; the right side is a
/// separate collocation quadrature.
pub fn b_positivity_decomposition(
    psi: &ScalarField,
    u: &VectorField,
    params: &Params,
) -> Result<(f64, f64)> {
    let b = apply_b(psi, u, params)?;
    let lhs = inner(psi, &b)?.re;

    let grid = psi.grid();
    let dim = grid.dim();
    let psi_p = psi.to_physical();
    let grad = gradient(psi).into_physical();
    let u_p = u.to_physical();
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for i in 0..grid.len() {
        let p = psi_p.values()[i];
        for a in 0..dim {
            let w = C64::new(0.0, -1.0) * grad.component(a).values()[i] - u_p.component(a).values()[i].re * p;
            kinetic += w.norm_sqr();
        }
        potential += p.norm().powf(params.p + 2.0);
    }
    let n = grid.len() as f64;
    let rhs = 0.5 * kinetic / n + params.mu * potential / n;
    Ok((lhs, rhs))
}

/// Linear/explicit split of the wavefunction tendency.
#[derive(Clone, Debug)]
pub struct NlsSplit {
    /// Per-mode multiplier `-(λ+i)|k|²/2`.
    pub stiff_symbol: Vec<C64>,
    pub explicit_part: ScalarField,
}

impl NlsSplit {
    /// Full tendency `stiff_symbol ⊙ ψ̂ + explicit_part`.
    pub fn assemble(&self, psi: &ScalarField) -> ScalarField {
        let e = self.explicit_part.values();
        psi.map_modes(|i, v| self.stiff_symbol[i] * v + e[i])
    }
}

pub fn stiff_symbol(grid: &Grid, params: &Params) -> Vec<C64> {
    let c = -0.5 * C64::new(params.lambda, 1.0);
    (0..grid.len()).map(|i| c * grid.k_sq(i)).collect()
}

pub fn nls_tendency(state: &State, params: &Params) -> Result<NlsSplit> {
    let c = Coupling::new(state, params, EvalOptions::for_params(params))?;
    Ok(NlsSplit {
        stiff_symbol: stiff_symbol(state.grid(), params),
        explicit_part: c.nls_explicit(),
    })
}

/// `∂t u` with the default density floor `m_f/2`.
pub fn momentum_tendency(state: &State, params: &Params) -> Result<VectorField> {
    Coupling::new(state, params, EvalOptions::for_params(params))?.momentum()
}

pub fn continuity_tendency(state: &State, params: &Params) -> Result<ScalarField> {
    Ok(Coupling::new(state, params, EvalOptions::for_params(params))?.continuity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use crate::spectral::{leray_project, norm_l2, norm_l2_sq, norm_linf, vector_l2_sq};
    use std::f64::consts::PI;

    fn plane_wave(grid: &Arc<Grid>, amp: C64, m: [i64; 3]) -> ScalarField {
        ScalarField::from_fn(grid, |x| {
            let phase = 2.0 * PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2]);
            amp * C64::from_polar(1.0, phase)
        })
    }

    fn k_sq(m: [i64; 3]) -> f64 {
        m.iter().map(|&f| (2.0 * PI * f as f64).powi(2)).sum()
    }

    #[test]
    fn params_validation() {
        assert!(Params::default().validate().is_ok());
        let bad = Params {
            m_f: 0.95,
            ..Params::default()
        };
        assert!(bad.validate().is_err());
        let bad = Params {
            p: 0.5,
            ..Params::default()
        };
        assert!(bad.validate().is_err());
        let bad = Params {
            big_m_i: 0.8,
            ..Params::default()
        };
        assert!(bad.validate().is_err());
        let bad = Params {
            nu: 0.0,
            ..Params::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn b_of_zero_is_zero() {
        let g = Grid::new(3, 8).unwrap();
        let psi = ScalarField::zeros(&g, Repr::Spectral);
        let u = oracles::random_vector(&g, 1);
        let b = apply_b(&psi, &leray_project(&u), &Params::default()).unwrap();
        assert!(norm_l2(&b) < 1e-15);
        let (l, r) =
            b_positivity_decomposition(&psi, &VectorField::zeros(&g, Repr::Spectral), &Params::default())
                .unwrap();
        assert_eq!((l, r), (0.0, 0.0));
    }

    #[test]
    fn b_on_plane_wave() {
        let g = Grid::new(3, 16).unwrap();
        for p in [1.0, 2.0, 2.5] {
            let params = Params { p, ..Params::default() };
            let amp = C64::new(0.3, -0.2);
            let m = [1, -2, 1];
            let psi = plane_wave(&g, amp, m);
            let u = VectorField::zeros(&g, Repr::Spectral);
            let b = apply_b(&psi, &u, &params).unwrap().to_physical();
            let factor = 0.5 * k_sq(m) + params.mu * amp.norm().powf(p);
            let err = b
                .values()
                .iter()
                .zip(psi.values())
                .map(|(x, y)| (x - factor * y).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12 * factor, "p = {p}: {err}");

            let (l, r) = b_positivity_decomposition(&psi, &u, &params).unwrap();
            let expect = amp.norm_sqr() * 0.5 * k_sq(m) + params.mu * amp.norm().powf(p + 2.0);
            assert!((l - expect).abs() < 1e-12 * expect);
            assert!((r - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn b_matches_finite_difference_assembly() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        // Band 1 keeps every cubic product below n/3, so no truncation is involved.
        for seed in 0..3 {
            let (psi, u) = oracles::band_limited_pair(&g, seed, 1);
            let b = apply_b(&psi, &u, &params).unwrap();
            let fd = oracles::fd_apply_b(&psi, &u, &params).into_spectral();
            let diff = b.add_scaled(C64::new(-1.0, 0.0), &fd).unwrap();
            let rel = norm_l2(&diff) / norm_l2(&b);
            assert!(rel <= 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn b_positivity_on_random_states() {
        let g = Grid::new(3, 16).unwrap();
        for seed in 0..5 {
            for p in [1.0, 2.0, 3.3] {
                let params = Params { p, ..Params::default() };
                let (psi, u) = oracles::band_limited_pair(&g, seed, 3);
                let (l, r) = b_positivity_decomposition(&psi, &u, &params).unwrap();
                assert!((l - r).abs() <= 1e-8 * r.max(1.0), "{l} vs {r}");
                assert!(l >= -1e-10 && r >= -1e-10);
            }
        }
    }

    #[test]
    fn nls_split_on_plane_wave_matches_reduced_ode() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        let amp = C64::new(0.1, 0.05);
        let m = [1, 0, 2];
        let psi = plane_wave(&g, amp, m);
        let state = State::new(
            0.0,
            psi.clone(),
            VectorField::zeros(&g, Repr::Spectral),
            ScalarField::from_real_fn(&g, |_| 1.0),
        )
        .unwrap();
        let split = nls_tendency(&state, &params).unwrap();
        let full = split.assemble(&state.psi);
        let rate = -C64::new(params.lambda, 1.0) * (0.5 * k_sq(m) + params.mu * amp.norm_sqr());
        let expect = rate * amp;
        let coeff = full.values()[g.index_of_frequency(m)];
        assert!((coeff - expect).norm() <= 1e-12 * expect.norm());
        let rest: f64 = full.values().iter().map(|v| v.norm_sqr()).sum::<f64>() - coeff.norm_sqr();
        assert!(rest.sqrt() <= 1e-12 * expect.norm());
    }

    #[test]
    fn nls_split_reassembles_original_equation() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        for seed in 0..3 {
            let state = oracles::random_state(&g, seed, 1e-1);
            let split = nls_tendency(&state, &params).unwrap();
            let parabolic = split.assemble(&state.psi);
            // ∂tψ = -λBψ - (1/2i)Δψ + (μ/i)|ψ|^p ψ
            let b = apply_b(&state.psi, &state.u, &params).unwrap();
            let lap = laplacian(&state.psi);
            let pw = state
                .psi
                .to_physical()
                .map(|v| params.abs_pow(v.norm_sqr()) * v);
            let pw = crate::spectral::dealias(&pw);
            let original = b
                .scaled(C64::new(-params.lambda, 0.0))
                .add_scaled(C64::new(0.0, 0.5), &lap)
                .unwrap()
                .add_scaled(C64::new(0.0, -params.mu), &pw)
                .unwrap();
            let diff = parabolic.add_scaled(C64::new(-1.0, 0.0), &original).unwrap();
            assert!(norm_l2(&diff) <= 1e-10 * norm_l2(&original).max(1e-300));
        }
    }

    #[test]
    fn mass_exchange_is_antisymmetric() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        for seed in 0..4 {
            let state = oracles::random_state(&g, seed, 1e-1);
            let c = Coupling::new(&state, &params, EvalOptions::for_params(&params)).unwrap();
            let split = nls_tendency(&state, &params).unwrap();
            let dpsi = split.assemble(&state.psi);
            let ds = 2.0 * inner(&state.psi, &dpsi).unwrap().re;
            let drho = c.continuity().values()[0].re;
            let b_lhs = inner(&state.psi, c.b_psi()).unwrap().re;
            assert!((ds + drho).abs() <= 1e-9 * drho.abs().max(1e-300), "{ds} + {drho}");
            assert!((ds + 2.0 * params.lambda * b_lhs).abs() <= 1e-9 * ds.abs());
        }
    }

    #[test]
    fn continuity_examples() {
        let g = Grid::new(3, 8).unwrap();
        let params = Params::default();
        let s = State::quiescent(&g, 1.3);
        assert!(norm_l2(&continuity_tendency(&s, &params).unwrap()) < 1e-15);

        let amp = C64::new(0.2, 0.0);
        let m = [0, 1, 0];
        let mut s = State::quiescent(&g, 1.0);
        s.psi = plane_wave(&g, amp, m).into_spectral();
        let src = continuity_tendency(&s, &params).unwrap();
        let expect = 2.0 * params.lambda * (0.5 * k_sq(m) + params.mu * amp.norm().powf(params.p)) * amp.norm_sqr();
        assert!((src.values()[0].re - expect).abs() < 1e-13 * expect);
        assert!(norm_l2_sq(&src) - src.values()[0].norm_sqr() < 1e-26);
    }

    #[test]
    fn continuity_mean_equals_exchange_rate() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        let state = oracles::random_state(&g, 9, 1e-1);
        let tend = continuity_tendency(&state, &params).unwrap();
        let b = apply_b(&state.psi, &state.u, &params).unwrap();
        let rate = 2.0 * params.lambda * inner(&state.psi, &b).unwrap().re;
        assert!((tend.mean().re - rate).abs() <= 1e-10 * rate.abs().max(1e-12));
        assert!(tend.max_imag() <= 1e-10 * norm_linf(&tend));
    }

    #[test]
    fn momentum_examples() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        let s = State::quiescent(&g, 1.0);
        assert!(vector_l2_sq(&momentum_tendency(&s, &params).unwrap()) < 1e-30);

        let rho0 = 1.2;
        let mut s = State::quiescent(&g, rho0);
        s.u = VectorField::from_fn(&g, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0]).into_spectral();
        let t = momentum_tendency(&s, &params).unwrap().to_physical();
        let rate = -(params.nu * (2.0 * PI).powi(2) / rho0 + params.alpha);
        for i in 0..g.len() {
            let x = g.point(i);
            let expect = rate * (2.0 * PI * x[1]).sin();
            assert!((t.component(0).values()[i].re - expect).abs() < 1e-12);
            assert!(t.component(1).values()[i].norm() < 1e-12);
            assert!(t.component(2).values()[i].norm() < 1e-12);
        }
    }

    #[test]
    fn momentum_matches_finite_difference_projection_oracle() {
        let g = Grid::new(3, 16).unwrap();
        let params = Params::default();
        let state = oracles::random_state_on_band(&g, 4, 5e-2, 1);
        let t = momentum_tendency(&state, &params).unwrap();
        let oracle = oracles::fd_momentum_tendency(&state, &params);
        let diff = t.add_scaled(-1.0, &oracle).unwrap();
        let rel = (vector_l2_sq(&diff) / vector_l2_sq(&oracle)).sqrt();
        assert!(rel <= 1e-4, "relative error {rel}");
        let div = norm_linf(&crate::spectral::divergence(&t));
        assert!(div <= 1e-10 * crate::spectral::vector_hs_dot_sq(&t, 1.0).unwrap().sqrt());
    }

    #[test]
    fn momentum_refuses_low_density() {
        let g = Grid::new(3, 8).unwrap();
        let params = Params::default();
        let s = State::quiescent(&g, 0.1);
        match momentum_tendency(&s, &params) {
            Err(Error::DensityFloorViolation { min_rho, floor }) => {
                assert!((min_rho - 0.1).abs() < 1e-14);
                assert_eq!(floor, 0.25);
            }
            other => panic!("expected floor violation, got {other:?}"),
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = Grid::new(3, 8).unwrap();
        let b = Grid::new(3, 16).unwrap();
        let psi = ScalarField::zeros(&a, Repr::Spectral);
        let u = VectorField::zeros(&b, Repr::Spectral);
        assert!(matches!(apply_b(&psi, &u, &Params::default()), Err(Error::GridMismatch)));
    }

    #[test]
    fn tendencies_are_refinement_consistent() {
        let params = Params::default();
        let coarse = Grid::new(3, 32).unwrap();
        let fine = Grid::new(3, 64).unwrap();
        let a = oracles::analytic_state(&coarse);
        let b = oracles::analytic_state(&fine);
        let ta = continuity_tendency(&a, &params).unwrap().to_physical();
        let tb = continuity_tendency(&b, &params).unwrap().to_physical();
        let mut err: f64 = 0.0;
        let scale = norm_linf(&tb);
        for i in 0..coarse.len() {
            let m = coarse.mode(i);
            let j = fine.index_of_frequency([2 * m[0] as i64, 2 * m[1] as i64, 2 * m[2] as i64]);
            err = err.max((ta.values()[i] - tb.values()[j]).norm());
        }
        assert!(err < 1e-6 * scale, "continuity refinement error {err} against {scale}");
    }
}
