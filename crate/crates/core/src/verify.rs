//! Self-checks runnable from the command line: spectral operators against direct
//! sums and finite differences, the plane-wave reduced ODE, manufactured-solution
//! convergence, conservation, and restart equivalence.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::diagnostics::mms::{self, CoupledCase};
use crate::diagnostics::{check_energy_equality, check_mass_exchange, record};
use crate::error::Result;
use crate::io::checkpoint::Checkpoint;
use crate::model::{apply_b, b_positivity_decomposition, Params, State};
use crate::oracles::{self, PlaneWaveOde, PlaneWaveSample};
use crate::spectral::{gradient, norm_l2_sq, Grid, ScalarField};
use crate::timestepper::{run, IntegratorConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Largest coefficient difference between the FFT and a direct O(N²) DFT,
/// relative to the largest coefficient.
pub fn dft_oracle_error(g: &Arc<Grid>, seed: u64) -> f64 {
    let f = oracles::random_field(g, seed, None);
    let fast = f.to_spectral();
    let slow = oracles::direct_dft(&f);
    let scale = slow.iter().map(|v| v.norm()).fold(0.0, f64::max);
    fast.values()
        .iter()
        .zip(&slow)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Spectral gradient of a smooth non-band-limited field against Richardson-extrapolated
/// fourth-order differences, relative to the largest derivative value.
pub fn gradient_oracle_error(g: &Arc<Grid>) -> f64 {
    let f = oracles::smooth_real_field(g);
    let spec = gradient(&f.to_spectral()).into_physical();
    let fd = oracles::fd4_extrapolated_gradient(&f);
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (a, col) in fd.iter().enumerate() {
        for (v, w) in spec.component(a).values().iter().zip(col) {
            err = err.max((v.re - w).abs());
            scale = scale.max(w.abs());
        }
    }
    err / scale
}

/// `apply_b` against eighth-order differences on band-1 data (max relative difference).
pub fn apply_b_oracle_error(g: &Arc<Grid>, seed: u64, params: &Params) -> Result<f64> {
    let s = oracles::random_state_on_band(g, seed, 0.3, 1);
    let b = apply_b(&s.psi, &s.u, params)?.into_physical();
    let fd = oracles::fd_apply_b(&s.psi, &s.u, params).into_physical();
    let scale = fd.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(b.values()
        .iter()
        .zip(fd.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale)
}

/// Over `count` random states: worst `|lhs − rhs| / max(1, rhs)` and the smallest `lhs`.
pub fn b_positivity_survey(g: &Arc<Grid>, count: usize, seed0: u64, params: &Params) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    for j in 0..count as u64 {
        let amp = 0.05 + 0.5 * ((j % 7) as f64 / 6.0);
        let s = oracles::random_state(g, seed0 + j, amp);
        let (lhs, rhs) = b_positivity_decomposition(&s.psi, &s.u, params)?;
        worst = worst.max((lhs - rhs).abs() / rhs.max(1.0));
        min_value = min_value.min(lhs);
    }
    Ok((worst, min_value))
}

/// Largest sup-normalized deviation of the full solver from the reduced ODE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneWaveComparison {
    pub mass_error: f64,
    pub rho_error: f64,
    pub u_error: f64,
    pub samples: usize,
}

impl PlaneWaveComparison {
    pub fn worst(&self) -> f64 {
        self.mass_error.max(self.rho_error).max(self.u_error)
    }
}

pub fn plane_wave_state(g: &Arc<Grid>, amp: C64, m: [i64; 3], rho0: f64) -> State {
    let mut s = State::quiescent(g, rho0);
    s.psi = ScalarField::from_fn(g, |x| {
        let ph = 2.0 * std::f64::consts::PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2]);
        amp * C64::from_polar(1.0, ph)
    })
    .into_spectral();
    s
}

/// Run a plane wave with the full solver and compare `S`, mean ρ and mean u with the
/// reduced ODE every `every` steps. Each error is normalized by the sup of the oracle
/// quantity over the run.
pub fn compare_plane_wave(
    g: &Arc<Grid>,
    params: &Params,
    amp: C64,
    m: [i64; 3],
    rho0: f64,
    dt: f64,
    t_end: f64,
    every: usize,
) -> Result<PlaneWaveComparison> {
    let s0 = plane_wave_state(g, amp, m, rho0);
    let cfg = IntegratorConfig::new(dt, params);
    let mut solver = Vec::new();
    run(&s0, params, &cfg, t_end, every, |s| {
        let u = s.u.to_spectral();
        let mut mean_u = [0.0; 3];
        for (a, c) in u.components().iter().enumerate() {
            mean_u[a] = c.values()[0].re;
        }
        solver.push((s.t, norm_l2_sq(&s.psi), s.rho_mean(), mean_u));
        Ok(())
    })?;
    let times: Vec<f64> = solver.iter().map(|r| r.0).collect();
    let init = PlaneWaveSample {
        t: 0.0,
        amplitude: amp,
        rho: rho0,
        u: [0.0; 3],
    };
    let exact = PlaneWaveOde::new(*params, m).solve(init, &times);
    let sup = |f: &dyn Fn(&PlaneWaveSample) -> f64| exact.iter().map(f).fold(0.0, f64::max).max(1e-300);
    let s_sup = sup(&|e| e.superfluid_mass());
    let r_sup = sup(&|e| e.rho.abs());
    let u_sup = sup(&|e| e.u.iter().map(|x| x * x).sum::<f64>().sqrt());
    let mut out = PlaneWaveComparison {
        mass_error: 0.0,
        rho_error: 0.0,
        u_error: 0.0,
        samples: times.len(),
    };
    for (num, ex) in solver.iter().zip(&exact) {
        out.mass_error = out.mass_error.max((num.1 - ex.superfluid_mass()).abs() / s_sup);
        out.rho_error = out.rho_error.max((num.2 - ex.rho).abs() / r_sup);
        let du: f64 = (0..3).map(|a| (num.3[a] - ex.u[a]).powi(2)).sum::<f64>().sqrt();
        // A flow that stays identically zero in both has nothing to normalize.
        let du = if u_sup <= 1e-300 { du } else { du / u_sup };
        out.u_error = out.u_error.max(du);
    }
    Ok(out)
}

/// Relative distance between one continuous run and a run interrupted at `t_mid`,
/// written to a checkpoint in `dir`, reloaded, and continued.
pub fn restart_difference(
    initial: &State,
    params: &Params,
    cfg: &IntegratorConfig,
    t_mid: f64,
    t_end: f64,
    dir: &Path,
) -> Result<f64> {
    let full = run(initial, params, cfg, t_end, usize::MAX, |_| Ok(()))?;
    let half = run(initial, params, cfg, t_mid, usize::MAX, |_| Ok(()))?;
    let path = dir.join("restart-check.ckpt");
    Checkpoint::from_state(&half, params, 0).save(&path)?;
    let reloaded = Checkpoint::load(&path)?.to_state()?;
    let resumed = run(&reloaded, params, cfg, t_end, usize::MAX, |_| Ok(()))?;
    mms::state_distance(&resumed, &full)
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn guarded(name: &'static str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| check(name, false, format!("error: {e}")))
}

/// The full self-check suite, on grids small enough to finish in well under a minute.
pub fn run_suite() -> Vec<CheckResult> {
    let params = Params::default();
    let mut out = Vec::new();

    let g3 = Grid::new(3, 8).expect("valid grid");
    let e = dft_oracle_error(&g3, 5);
    out.push(check("fft_vs_direct_dft", e <= 1e-12, format!("max relative difference {e:.2e}")));

    let g64 = Grid::new(2, 64).expect("valid grid");
    let e = gradient_oracle_error(&g64);
    out.push(check("gradient_vs_finite_differences", e <= 1e-6, format!("max relative difference {e:.2e}")));

    out.push(guarded("apply_b_vs_finite_differences", || {
        let e = apply_b_oracle_error(&Grid::new(3, 16)?, 3, &params)?;
        Ok(check("apply_b_vs_finite_differences", e <= 1e-6, format!("max relative difference {e:.2e}")))
    }));

    out.push(guarded("b_positivity", || {
        let (worst, min) = b_positivity_survey(&Grid::new(3, 8)?, 50, 100, &params)?;
        Ok(check(
            "b_positivity",
            worst <= 1e-8 && min >= -1e-10,
            format!("worst mismatch {worst:.2e}, smallest value {min:.3e}"),
        ))
    }));

    out.push(guarded("plane_wave_oracle", || {
        let c = compare_plane_wave(&Grid::new(3, 8)?, &params, C64::new(0.3, 0.1), [1, 0, 0], 1.0, 5e-4, 1.0, 100)?;
        Ok(check(
            "plane_wave_oracle",
            c.worst() <= 1e-6,
            format!(
                "S {:.2e}, mean rho {:.2e}, mean u {:.2e} over {} samples",
                c.mass_error, c.rho_error, c.u_error, c.samples
            ),
        ))
    }));

    out.push(guarded("mms_temporal_order", || {
        let s = mms::temporal_convergence(&CoupledCase, &params, &Grid::new(2, 16)?, &[0.005, 0.0025, 0.00125], 0.2)?;
        let orders = s.orders();
        Ok(check(
            "mms_temporal_order",
            orders.iter().all(|o| (o - 2.0).abs() <= 0.2),
            format!("orders {orders:.3?}"),
        ))
    }));

    out.push(guarded("spectral_spatial_accuracy", || {
        let s = mms::spatial_convergence(&mms::advection_initial, &params, 2, &[16, 32], 64, 0.01, 0.1)?;
        let last = *s.errors.last().expect("two grids");
        Ok(check(
            "spectral_spatial_accuracy",
            last < 1e-10 && s.errors[0] > last,
            format!("errors {:.2e} (n = 16), {last:.2e} (n = 32)", s.errors[0]),
        ))
    }));

    out.push(guarded("conservation", || {
        let g = Grid::new(3, 16)?;
        let s0 = oracles::random_state_on_band(&g, 6, 0.02, 1);
        let cfg = IntegratorConfig::new(1e-3, &params);
        let mut recs = Vec::new();
        run(&s0, &params, &cfg, 0.1, 1, |s| {
            recs.push(record(s, &params)?);
            Ok(())
        })?;
        let m = check_mass_exchange(&recs, 1e-9);
        let res = check_energy_equality(&mut recs, &params)?;
        let worst = res.iter().cloned().fold(0.0, f64::max);
        Ok(check(
            "conservation",
            m.total_drift <= 1e-7 && m.monotonicity_ok && worst <= 1e-4,
            format!(
                "mass drift {:.2e}, monotone {}, energy residual {worst:.2e}",
                m.total_drift, m.monotonicity_ok
            ),
        ))
    }));

    out.push(guarded("restart_equivalence", || {
        let g = Grid::new(3, 16)?;
        let s0 = oracles::random_state(&g, 8, 0.05);
        let cfg = IntegratorConfig::new(1e-2, &params);
        let dir = tempfile::tempdir()?;
        let d = restart_difference(&s0, &params, &cfg, 0.1, 0.2, dir.path())?;
        Ok(check("restart_equivalence", d <= 1e-10, format!("relative difference {d:.2e}")))
    }));

    out
}
