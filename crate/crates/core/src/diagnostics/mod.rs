//! Monitored functionals, balance checks over trajectories, and decay-envelope fits.

mod decay;
pub mod mms;
mod windows;

pub use decay::{fit_decay, fit_two_term, DecayFit, TwoTermFit};
pub use windows::{dissipation_windows, DissipationSample, DissipationTracker};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Coupling, EvalOptions, Params, State};
use crate::spectral::{
    divergence, norm_hs, norm_hs_dot_sq, norm_l2_sq, norm_linf, vector_hs_dot_sq, ScalarField,
};

/// One time sample of every monitored functional.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagRecord {
    pub t: f64,
    /// Superfluid mass `‖ψ‖²`.
    pub s: f64,
    /// `∫(ρ + |ψ|²)`.
    pub total_mass: f64,
    /// `∫ρ`.
    pub normal_mass: f64,
    pub e: f64,
    /// `‖Δψ‖² + ν‖∇u‖²`.
    pub x: f64,
    pub z: f64,
    pub grad_u_l2sq: f64,
    pub sqrt_rho_u_l2sq: f64,
    pub b_psi_l2sq: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub div_u_linf: f64,
    pub psi_h2: f64,
    /// Filled in by [`check_energy_equality`].
    pub energy_residual: Option<f64>,
    /// `Re⟨ψ, Bψ⟩`.
    pub re_psi_b_psi: f64,
    /// `‖ψ‖_{Ḣ³}²`.
    pub psi_d3_l2sq: f64,
    pub lap_u_l2sq: f64,
    pub psi_linf: f64,
    pub b_psi_linf: f64,
}

/// Column names of the CSV serialisation, in order.
pub const CSV_COLUMNS: [&str; 14] = [
    "t",
    "S",
    "total_mass",
    "E",
    "X",
    "Z",
    "grad_u_l2sq",
    "sqrt_rho_u_l2sq",
    "B_psi_l2sq",
    "rho_min",
    "rho_max",
    "div_u_linf",
    "psi_h2",
    "energy_residual",
];

impl DiagRecord {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Values in [`CSV_COLUMNS`] order; an unset residual is written as `nan`.
    pub fn csv_row(&self) -> String {
        let vals = [
            self.t,
            self.s,
            self.total_mass,
            self.e,
            self.x,
            self.z,
            self.grad_u_l2sq,
            self.sqrt_rho_u_l2sq,
            self.b_psi_l2sq,
            self.rho_min,
            self.rho_max,
            self.div_u_linf,
            self.psi_h2,
            self.energy_residual.unwrap_or(f64::NAN),
        ];
        let mut out = String::new();
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if v.is_nan() {
                out.push_str("nan");
            } else {
                write!(out, "{v:.17e}").expect("write to string");
            }
        }
        out
    }

    /// Parse one row written by [`DiagRecord::csv_row`]; quantities not stored
    /// in the CSV are set to NaN.
    pub fn from_csv_row(line: &str) -> Result<Self> {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad CSV value {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != CSV_COLUMNS.len() {
            return Err(Error::Config(format!(
                "expected {} CSV columns, found {}",
                CSV_COLUMNS.len(),
                vals.len()
            )));
        }
        Ok(DiagRecord {
            t: vals[0],
            s: vals[1],
            total_mass: vals[2],
            normal_mass: vals[2] - vals[1],
            e: vals[3],
            x: vals[4],
            z: vals[5],
            grad_u_l2sq: vals[6],
            sqrt_rho_u_l2sq: vals[7],
            b_psi_l2sq: vals[8],
            rho_min: vals[9],
            rho_max: vals[10],
            div_u_linf: vals[11],
            psi_h2: vals[12],
            energy_residual: if vals[13].is_nan() { None } else { Some(vals[13]) },
            re_psi_b_psi: f64::NAN,
            psi_d3_l2sq: f64::NAN,
            lap_u_l2sq: f64::NAN,
            psi_linf: f64::NAN,
            b_psi_linf: f64::NAN,
        })
    }
}

/// Evaluate every functional at `state`.
pub fn record(state: &State, params: &Params) -> Result<DiagRecord> {
    let c = Coupling::new(state, params, EvalOptions::for_params(params))?;
    Ok(record_with(state, params, &c))
}

/// As [`record`], reusing an existing evaluation of `Bψ`.
pub fn record_with(state: &State, params: &Params, coupling: &Coupling) -> DiagRecord {
    let g = state.grid();
    let dim = g.dim();
    let n = g.len() as f64;
    let psi = &state.psi;
    let s = norm_l2_sq(psi);
    let rho_phys = state.rho.to_physical();
    let u_phys = state.u.to_physical();
    let mut rho_min = f64::INFINITY;
    let mut rho_max = f64::NEG_INFINITY;
    let mut kinetic = 0.0;
    for i in 0..g.len() {
        let r = rho_phys.values()[i].re;
        rho_min = rho_min.min(r);
        rho_max = rho_max.max(r);
        let u_sq: f64 = (0..dim)
            .map(|a| u_phys.component(a).values()[i].re.powi(2))
            .sum();
        kinetic += r * u_sq;
    }
    let sqrt_rho_u_l2sq = kinetic / n;
    let psi_vals = coupling.psi_values();
    let potential: f64 = psi_vals
        .iter()
        .map(|v| v.norm().powf(params.p + 2.0))
        .sum::<f64>()
        / n;
    let grad_psi_sq = norm_hs_dot_sq(psi, 1.0).expect("s >= 0");
    let e = 0.5 * sqrt_rho_u_l2sq + 0.5 * grad_psi_sq + 2.0 * params.mu / (params.p + 2.0) * potential;
    let grad_u_l2sq = vector_hs_dot_sq(&state.u, 1.0).expect("s >= 0");
    let x = norm_hs_dot_sq(psi, 2.0).expect("s >= 0") + params.nu * grad_u_l2sq;
    let b = coupling.b_psi();
    let normal_mass = state.rho_mean();
    DiagRecord {
        t: state.t,
        s,
        total_mass: normal_mass + s,
        normal_mass,
        e,
        x,
        z: x + e,
        grad_u_l2sq,
        sqrt_rho_u_l2sq,
        b_psi_l2sq: norm_l2_sq(b),
        rho_min,
        rho_max,
        div_u_linf: norm_linf(&divergence(&state.u)),
        psi_h2: norm_hs(psi, 2.0).expect("s >= 0"),
        energy_residual: None,
        re_psi_b_psi: crate::spectral::inner(psi, b).expect("same grid").re,
        psi_d3_l2sq: norm_hs_dot_sq(psi, 3.0).expect("s >= 0"),
        lap_u_l2sq: vector_hs_dot_sq(&state.u, 2.0).expect("s >= 0"),
        psi_linf: psi_vals.iter().fold(0.0, |m, v| m.max(v.norm())),
        b_psi_linf: coupling
            .b_psi_values()
            .iter()
            .fold(0.0, |m, v| m.max(v.norm())),
    }
}

fn check_uniform(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Ok(0.0);
    }
    let h = times[1] - times[0];
    for (i, w) in times.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) || (d - h).abs() > 1e-6 * h {
            return Err(Error::NonUniformSampling { index: i + 1 });
        }
    }
    Ok(h)
}

/// Running energy-equality residual
/// `|E(t) + ∫₀ᵗ (ν‖∇u‖² + α‖√ρu‖² + 2λ‖Bψ‖²) − E(0)| / max(E(0), ε)`,
/// with the time integral taken by the trapezoid rule over the records.
///
/// Fills `energy_residual` on every record and returns the residuals.
pub fn check_energy_equality(records: &mut [DiagRecord], params: &Params) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    check_uniform(&times)?;
    let e0 = records[0].e;
    let scale = e0.max(1e-300);
    let rate = |r: &DiagRecord| {
        params.nu * r.grad_u_l2sq + params.alpha * r.sqrt_rho_u_l2sq + 2.0 * params.lambda * r.b_psi_l2sq
    };
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(records.len());
    for j in 0..records.len() {
        if j > 0 {
            let h = records[j].t - records[j - 1].t;
            integral += 0.5 * h * (rate(&records[j - 1]) + rate(&records[j]));
        }
        let res = (records[j].e + integral - e0).abs() / scale;
        records[j].energy_residual = Some(res);
        out.push(res);
    }
    Ok(out)
}

/// Outcome of [`check_mass_exchange`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassExchange {
    /// Max relative deviation of the total mass from its initial value.
    pub total_drift: f64,
    /// S non-increasing and ∫ρ non-decreasing, up to `tol·S₀` per interval.
    pub monotonicity_ok: bool,
    /// Largest increase of S between consecutive records.
    pub max_s_increase: f64,
    /// Largest decrease of ∫ρ between consecutive records.
    pub max_normal_mass_decrease: f64,
}

pub fn check_mass_exchange(records: &[DiagRecord], tol: f64) -> MassExchange {
    let Some(first) = records.first() else {
        return MassExchange {
            total_drift: 0.0,
            monotonicity_ok: true,
            max_s_increase: 0.0,
            max_normal_mass_decrease: 0.0,
        };
    };
    let m0 = first.total_mass;
    let total_drift = records
        .iter()
        .map(|r| (r.total_mass - m0).abs() / m0.abs().max(1e-300))
        .fold(0.0, f64::max);
    let mut max_s_increase: f64 = 0.0;
    let mut max_normal_mass_decrease: f64 = 0.0;
    for w in records.windows(2) {
        max_s_increase = max_s_increase.max(w[1].s - w[0].s);
        max_normal_mass_decrease = max_normal_mass_decrease.max(w[0].normal_mass - w[1].normal_mass);
    }
    let allowance = tol * first.s;
    MassExchange {
        total_drift,
        monotonicity_ok: max_s_increase <= allowance && max_normal_mass_decrease <= allowance,
        max_s_increase,
        max_normal_mass_decrease,
    }
}

/// Write records as CSV (header plus one row per record).
pub fn write_csv<W: std::io::Write>(mut w: W, records: &[DiagRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", DiagRecord::csv_header())?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Energy by a separate real-space route: gradients sampled on the grid and all
/// three terms integrated by quadrature.
pub fn energy_by_quadrature(state: &State, params: &Params) -> f64 {
    let g = state.grid();
    let dim = g.dim();
    let n = g.len() as f64;
    let grad = crate::spectral::gradient(&state.psi).into_physical();
    let psi = state.psi.to_physical();
    let rho = state.rho.to_physical();
    let u = state.u.to_physical();
    let mut total = 0.0;
    for i in 0..g.len() {
        let mut gsq = 0.0;
        let mut usq = 0.0;
        for a in 0..dim {
            gsq += grad.component(a).values()[i].norm_sqr();
            usq += u.component(a).values()[i].re.powi(2);
        }
        let p = psi.values()[i].norm();
        total += 0.5 * rho.values()[i].re * usq
            + 0.5 * gsq
            + 2.0 * params.mu / (params.p + 2.0) * p.powf(params.p + 2.0);
    }
    total / n
}

/// `(S, ∫ρ)` directly from fields; used by tests needing no other functional.
pub fn masses(psi: &ScalarField, rho: &ScalarField) -> (f64, f64) {
    (norm_l2_sq(psi), rho.to_spectral().values()[0].re)
}
