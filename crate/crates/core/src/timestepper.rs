//! Exponential time differencing (Cox–Matthews ETD-RK2) for the coupled system.
//!
//! Each field is split into a diagonal linear part `L` and a remainder `N`:
//! - ψ: `L = -(λ+i)|k|²/2`, `N` = explicit part of the parabolic form;
//! - u: `L = -ν|k|²/ρ̄` with ρ̄ the mean density at the start of the step,
//!   `N` = projected momentum tendency minus `Lû`;
//! - ρ: `L = 0`, so the update reduces to Heun's method.
//!
//! One step of size `h`:
//! `a = e^{Lh} q + h φ₁(Lh) N(q, t)`, `q⁺ = a + h φ₂(Lh) (N(a, t+h) − N(q, t))`.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{stiff_symbol, Coupling, EvalOptions, Params, State};
use crate::spectral::{Grid, ScalarField, VectorField};

/// Identifier of the integrator, stored in checkpoints.
pub const SCHEME_ID: &str = "etdrk2-cm-v1";

/// Integrator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Base (and maximal) step.
    pub dt: f64,
    pub cfl_safety: f64,
    pub density_floor: f64,
    pub dealias: bool,
}

impl IntegratorConfig {
    /// Defaults: safety 0.5, floor `m_f/2`, dealiasing on.
    pub fn new(dt: f64, params: &Params) -> Self {
        IntegratorConfig {
            dt,
            cfl_safety: 0.5,
            density_floor: params.default_density_floor(),
            dealias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.density_floor > 0.0 && self.density_floor.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "density_floor = {} must be positive",
                self.density_floor
            )));
        }
        Ok(())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            dealias: self.dealias,
            density_floor: self.density_floor,
        }
    }
}

/// Time derivatives (or additive sources) for all three fields, as Fourier coefficients.
#[derive(Clone, Debug)]
pub struct Tendency {
    pub psi: ScalarField,
    pub u: VectorField,
    pub rho: ScalarField,
}

impl Tendency {
    fn add(&mut self, other: &Tendency) -> Result<()> {
        let one = C64::new(1.0, 0.0);
        self.psi = self.psi.add_scaled(one, &other.psi.to_spectral())?;
        self.u = self.u.add_scaled(1.0, &other.u.to_spectral())?;
        self.rho = self.rho.add_scaled(one, &other.rho.to_spectral())?;
        Ok(())
    }
}

/// Additive source terms `f(t)`, used by manufactured-solution tests.
pub trait Forcing {
    fn at(&self, t: f64, grid: &Arc<Grid>) -> Result<Tendency>;
}

/// Full right-hand side of the system at `state`.
pub fn full_tendency(state: &State, params: &Params, opts: EvalOptions) -> Result<Tendency> {
    let c = Coupling::new(state, params, opts)?;
    let sym = stiff_symbol(state.grid(), params);
    let e = c.nls_explicit();
    let psi = state.psi.map_modes(|i, v| sym[i] * v + e.values()[i]);
    Ok(Tendency {
        psi,
        u: c.momentum()?,
        rho: c.continuity(),
    })
}

/// `(φ₁(z), φ₂(z))` with `φ₁ = (e^z − 1)/z` and `φ₂ = (e^z − 1 − z)/z²`.
pub fn phi_functions(z: C64) -> (C64, C64) {
    if z.norm() < 0.5 {
        // Taylor series: φ_j(z) = Σ z^m / (m + j)!
        let mut p1 = C64::new(0.0, 0.0);
        let mut p2 = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for m in 0..20 {
            let mf = m as f64;
            p1 += term / (mf + 1.0);
            p2 += term / ((mf + 1.0) * (mf + 2.0));
            term = term * z / (mf + 1.0);
        }
        (p1, p2)
    } else {
        let ez = z.exp();
        let p1 = (ez - 1.0) / z;
        (p1, (ez - 1.0 - z) / (z * z))
    }
}

/// Per-mode factors `(e^{Lh}, hφ₁(Lh), hφ₂(Lh))`.
#[derive(Clone, Debug)]
struct EtdFactors {
    key: (f64, f64),
    exp: Vec<C64>,
    phi1: Vec<C64>,
    phi2: Vec<C64>,
}

impl EtdFactors {
    fn new(symbol: &[C64], h: f64, key: (f64, f64)) -> Self {
        let mut exp = Vec::with_capacity(symbol.len());
        let mut phi1 = Vec::with_capacity(symbol.len());
        let mut phi2 = Vec::with_capacity(symbol.len());
        for &l in symbol {
            let z = l * h;
            let (p1, p2) = phi_functions(z);
            exp.push(z.exp());
            phi1.push(h * p1);
            phi2.push(h * p2);
        }
        EtdFactors {
            key,
            exp,
            phi1,
            phi2,
        }
    }
}

/// Stateful stepper that caches the exponential factors between steps of equal size.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: Params,
    config: IntegratorConfig,
    psi_symbol: Vec<C64>,
    k_sq: Vec<f64>,
    psi_cache: Option<EtdFactors>,
    u_cache: Option<EtdFactors>,
}

impl Stepper {
    pub fn new(grid: &Arc<Grid>, params: &Params, config: &IntegratorConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        Ok(Stepper {
            params: *params,
            config: *config,
            psi_symbol: stiff_symbol(grid, params),
            k_sq: (0..grid.len()).map(|i| grid.k_sq(i)).collect(),
            psi_cache: None,
            u_cache: None,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    fn factors(&mut self, h: f64, rho_bar: f64) {
        if self.psi_cache.as_ref().map(|f| f.key.0) != Some(h) {
            self.psi_cache = Some(EtdFactors::new(&self.psi_symbol, h, (h, 0.0)));
        }
        if self.u_cache.as_ref().map(|f| f.key) != Some((h, rho_bar)) {
            let nu = self.params.nu;
            let sym: Vec<C64> = self
                .k_sq
                .iter()
                .map(|&k| C64::new(-nu * k / rho_bar, 0.0))
                .collect();
            self.u_cache = Some(EtdFactors::new(&sym, h, (h, rho_bar)));
        }
    }

    /// Explicit remainders `N` for (ψ, u, ρ) at `state`, forcing included.
    fn remainders(
        &self,
        state: &State,
        rho_bar: f64,
        forcing: Option<&dyn Forcing>,
    ) -> Result<Tendency> {
        let c = Coupling::new(state, &self.params, self.config.eval_options())?;
        let nu = self.params.nu;
        let k_sq = &self.k_sq;
        let momentum = c.momentum()?;
        let u_rem = VectorField::from_components(
            momentum
                .components()
                .iter()
                .zip(state.u.components())
                .map(|(m, u)| {
                    let uv = u.values();
                    m.map_modes(|i, v| v + nu * k_sq[i] / rho_bar * uv[i])
                })
                .collect(),
        )?;
        let mut n = Tendency {
            psi: c.nls_explicit(),
            u: u_rem,
            rho: c.continuity(),
        };
        if let Some(f) = forcing {
            n.add(&f.at(state.t, state.grid())?)?;
        }
        Ok(n)
    }

    pub fn step(&mut self, state: &State, h: f64) -> Result<State> {
        self.step_with(state, h, None)
    }

    /// One ETD-RK2 step of size `h`, with an optional additive source.
    pub fn step_with(
        &mut self,
        state: &State,
        h: f64,
        forcing: Option<&dyn Forcing>,
    ) -> Result<State> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParams(format!("step size {h} must be positive")));
        }
        let rho_bar = state.rho_mean();
        if !(rho_bar > 0.0) {
            return Err(Error::DensityFloorViolation {
                min_rho: state.rho_bounds().0,
                floor: self.config.density_floor,
            });
        }
        self.factors(h, rho_bar);
        let n0 = self.remainders(state, rho_bar, forcing)?;

        let pf = self.psi_cache.as_ref().expect("factors set");
        let uf = self.u_cache.as_ref().expect("factors set");
        let psi_a = etd_predict(&state.psi, &n0.psi, pf);
        let u_a = VectorField::from_components(
            state
                .u
                .components()
                .iter()
                .zip(n0.u.components())
                .map(|(q, n)| etd_predict(q, n, uf))
                .collect(),
        )?;
        let rho_a = state.rho.add_scaled(C64::new(h, 0.0), &n0.rho)?;
        let stage = State {
            t: state.t + h,
            psi: psi_a,
            u: u_a,
            rho: rho_a,
        };

        let n1 = self.remainders(&stage, rho_bar, forcing)?;
        let pf = self.psi_cache.as_ref().expect("factors set");
        let uf = self.u_cache.as_ref().expect("factors set");
        let psi = etd_correct(&stage.psi, &n1.psi, &n0.psi, pf);
        let u = VectorField::from_components(
            stage
                .u
                .components()
                .iter()
                .zip(n1.u.components().iter().zip(n0.u.components()))
                .map(|(a, (n1, n0))| etd_correct(a, n1, n0, uf))
                .collect(),
        )?;
        let rho = stage
            .rho
            .add_scaled(C64::new(0.5 * h, 0.0), &n1.rho)?
            .add_scaled(C64::new(-0.5 * h, 0.0), &n0.rho)?;

        let u = crate::spectral::leray_project(&u).real_part();
        let next = State {
            t: state.t + h,
            psi,
            u,
            rho: rho.real_part(),
        };
        if !next.psi.is_finite() {
            return Err(Error::NonFinite { field: "psi" });
        }
        if !next.u.is_finite() {
            return Err(Error::NonFinite { field: "u" });
        }
        if !next.rho.is_finite() {
            return Err(Error::NonFinite { field: "rho" });
        }
        let min_rho = next.rho_bounds().0;
        if min_rho < self.config.density_floor {
            return Err(Error::DensityFloorViolation {
                min_rho,
                floor: self.config.density_floor,
            });
        }
        Ok(next)
    }
}

fn etd_predict(q: &ScalarField, n: &ScalarField, f: &EtdFactors) -> ScalarField {
    let nv = n.values();
    q.map_modes(|i, v| f.exp[i] * v + f.phi1[i] * nv[i])
}

fn etd_correct(a: &ScalarField, n1: &ScalarField, n0: &ScalarField, f: &EtdFactors) -> ScalarField {
    let (v1, v0) = (n1.values(), n0.values());
    a.map_modes(|i, v| v + f.phi2[i] * (v1[i] - v0[i]))
}

/// One step with a fresh [`Stepper`].
pub fn step(state: &State, params: &Params, config: &IntegratorConfig) -> Result<State> {
    Stepper::new(state.grid(), params, config)?.step(state, config.dt)
}

/// Largest admissible step: the minimum of `safety·Δx/max|u|`,
/// `safety/(λ·max(½|u|² + μ|ψ|^p + |u|·k_max))`, and `config.dt`.
pub fn cfl_dt(state: &State, params: &Params, config: &IntegratorConfig) -> f64 {
    let g = state.grid();
    let (adv, react) = cfl_limits(state, params);
    let s = config.cfl_safety;
    let mut dt = config.dt;
    if adv.is_finite() {
        dt = dt.min(s * adv);
    }
    if react.is_finite() {
        dt = dt.min(s * react);
    }
    debug_assert!(dt > 0.0, "grid {:?}", g);
    dt
}

/// Unscaled advective and reaction limits (infinite when the corresponding rate vanishes).
pub fn cfl_limits(state: &State, params: &Params) -> (f64, f64) {
    let g = state.grid();
    let dim = g.dim();
    let k_max = std::f64::consts::PI * g.n() as f64;
    let u = state.u.to_physical();
    let psi = state.psi.to_physical();
    let mut u_max: f64 = 0.0;
    let mut rate: f64 = 0.0;
    for i in 0..g.len() {
        let u_sq: f64 = (0..dim)
            .map(|a| u.component(a).values()[i].re.powi(2))
            .sum();
        let speed = u_sq.sqrt();
        u_max = u_max.max(speed);
        let r = 0.5 * u_sq + params.mu * params.abs_pow(psi.values()[i].norm_sqr()) + speed * k_max;
        rate = rate.max(params.lambda * r);
    }
    let adv = if u_max > 0.0 { g.dx() / u_max } else { f64::INFINITY };
    let react = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    (adv, react)
}

/// Integrate from `initial.t` to `t_end`, calling `observer` on the initial state,
/// after every `every`-th step, and on the final state.
///
/// Each step uses `min(cfl_dt, t_end − t)`; the last step lands exactly on `t_end`.
/// Errors carry the time at which they occurred.
pub fn run<F>(
    initial: &State,
    params: &Params,
    config: &IntegratorConfig,
    t_end: f64,
    every: usize,
    mut observer: F,
) -> Result<State>
where
    F: FnMut(&State) -> Result<()>,
{
    if !(t_end >= initial.t) {
        return Err(Error::InvalidParams(format!(
            "t_end = {t_end} precedes the initial time {}",
            initial.t
        )));
    }
    let every = every.max(1);
    let mut stepper = Stepper::new(initial.grid(), params, config)?;
    let mut state = initial.clone();
    observer(&state).map_err(|e| e.at_time(state.t))?;
    let mut count = 0usize;
    while state.t < t_end {
        let h = cfl_dt(&state, params, config);
        let remaining = t_end - state.t;
        let last = h >= remaining * (1.0 - 1e-12);
        let h = if last { remaining } else { h };
        let t = state.t;
        let mut next = stepper.step(&state, h).map_err(|e| e.at_time(t))?;
        if last {
            next.t = t_end;
        }
        state = next;
        count += 1;
        if count % every == 0 || last {
            observer(&state).map_err(|e| e.at_time(state.t))?;
        }
    }
    Ok(state)
}
