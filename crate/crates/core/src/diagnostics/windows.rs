//! Windowed dissipation integrals over `[t, 2t]`.
//!
//! `∂t u` is reconstructed from the stored trajectory by second-order differences:
//! central in the interior, one-sided at the two ends.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::State;

use super::DiagRecord;

/// Integrand terms at one sample time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationSample {
    pub t: f64,
    pub psi_d3_l2sq: f64,
    pub rho_dtu_l2sq: f64,
    pub lap_u_l2sq: f64,
    pub grad_u_l2sq: f64,
    pub sqrt_rho_u_l2sq: f64,
    pub b_psi_l2sq: f64,
}

impl DissipationSample {
    pub fn total(&self) -> f64 {
        self.psi_d3_l2sq
            + self.rho_dtu_l2sq
            + self.lap_u_l2sq
            + self.grad_u_l2sq
            + self.sqrt_rho_u_l2sq
            + self.b_psi_l2sq
    }
}

struct Snapshot {
    t: f64,
    u: Vec<Vec<f64>>,
    rho: Vec<f64>,
    rec: DiagRecord,
}

/// Consumes a uniformly sampled trajectory one state at a time.
#[derive(Default)]
pub struct DissipationTracker {
    buf: VecDeque<Snapshot>,
    first_done: bool,
    out: Vec<DissipationSample>,
}

impl DissipationTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: &State, rec: &DiagRecord) {
        let u = state
            .u
            .to_physical()
            .components()
            .iter()
            .map(|c| c.values().iter().map(|v| v.re).collect())
            .collect();
        let rho = state.rho.to_physical().values().iter().map(|v| v.re).collect();
        self.buf.push_back(Snapshot {
            t: state.t,
            u,
            rho,
            rec: rec.clone(),
        });
        if self.buf.len() > 3 {
            self.buf.pop_front();
        }
        if self.buf.len() == 3 {
            if !self.first_done {
                self.emit(0, [-1.5, 2.0, -0.5]);
                self.first_done = true;
            }
            self.emit(1, [-0.5, 0.0, 0.5]);
        }
    }

    /// `∂t u` at `buf[at]` from weights on the three buffered snapshots (divided by h).
    fn emit(&mut self, at: usize, w: [f64; 3]) {
        let h = if self.buf.len() >= 2 {
            (self.buf[self.buf.len() - 1].t - self.buf[0].t) / (self.buf.len() - 1) as f64
        } else {
            1.0
        };
        let s = &self.buf[at];
        let len = s.rho.len();
        let mut acc = 0.0;
        for i in 0..len {
            let mut dtu_sq = 0.0;
            for a in 0..s.u.len() {
                let d: f64 = (0..self.buf.len()).map(|j| w[j] * self.buf[j].u[a][i]).sum();
                dtu_sq += (d / h).powi(2);
            }
            acc += s.rho[i] * dtu_sq;
        }
        self.out.push(sample(s, acc / len as f64));
    }

    pub fn finish(mut self) -> Vec<DissipationSample> {
        match self.buf.len() {
            3 => self.emit(2, [0.5, -2.0, 1.5]),
            2 => {
                self.emit(0, [-1.0, 1.0, 0.0]);
                self.emit(1, [-1.0, 1.0, 0.0]);
            }
            1 => {
                let s = &self.buf[0];
                let d = sample(s, 0.0);
                self.out.push(d);
            }
            _ => {}
        }
        self.out
    }
}

fn sample(s: &Snapshot, rho_dtu_l2sq: f64) -> DissipationSample {
    DissipationSample {
        t: s.t,
        psi_d3_l2sq: s.rec.psi_d3_l2sq,
        rho_dtu_l2sq,
        lap_u_l2sq: s.rec.lap_u_l2sq,
        grad_u_l2sq: s.rec.grad_u_l2sq,
        sqrt_rho_u_l2sq: s.rec.sqrt_rho_u_l2sq,
        b_psi_l2sq: s.rec.b_psi_l2sq,
    }
}

fn interpolate(samples: &[DissipationSample], t: f64) -> f64 {
    let j = samples.partition_point(|s| s.t <= t).clamp(1, samples.len() - 1);
    let (a, b) = (&samples[j - 1], &samples[j]);
    let w = (t - a.t) / (b.t - a.t);
    (1.0 - w) * a.total() + w * b.total()
}

/// `∫_t^{2t}` of the summed integrand, by the trapezoid rule on the samples
/// (linearly interpolated at the window ends). Returns `(t, integral)` pairs.
pub fn dissipation_windows(samples: &[DissipationSample], starts: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 2 {
        return Err(Error::InvalidParams("need at least two samples".into()));
    }
    let (t_first, t_last) = (samples[0].t, samples[samples.len() - 1].t);
    starts
        .iter()
        .map(|&t| {
            let (a, b) = (t, 2.0 * t);
            if a < t_first - 1e-12 || b > t_last + 1e-9 * t_last.abs().max(1.0) {
                return Err(Error::InvalidParams(format!(
                    "window [{a}, {b}] outside the sampled range [{t_first}, {t_last}]"
                )));
            }
            let b = b.min(t_last);
            let mut pts: Vec<(f64, f64)> = vec![(a, interpolate(samples, a))];
            pts.extend(
                samples
                    .iter()
                    .filter(|s| s.t > a && s.t < b)
                    .map(|s| (s.t, s.total())),
            );
            pts.push((b, interpolate(samples, b)));
            let integral = pts
                .windows(2)
                .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
                .sum();
            Ok((t, integral))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::record;
    use crate::model::Params;
    use crate::spectral::{Grid, VectorField};
    use std::f64::consts::PI;

    #[test]
    fn zero_trajectory_gives_zero_windows() {
        let g = Grid::new(2, 8).unwrap();
        let params = Params::default();
        let mut tr = DissipationTracker::new();
        for j in 0..=40 {
            let mut s = State::quiescent(&g, 1.0);
            s.t = 0.1 * j as f64;
            tr.push(&s, &record(&s, &params).unwrap());
        }
        let samples = tr.finish();
        assert_eq!(samples.len(), 41);
        let w = dissipation_windows(&samples, &[1.0, 2.0]).unwrap();
        assert!(w.iter().all(|&(_, v)| v == 0.0));
        assert!(dissipation_windows(&samples, &[3.0]).is_err());
    }

    #[test]
    fn stokes_window_matches_closed_form() {
        // u = A e^{-rt} sin(2πy) x̂, ρ ≡ ρ₀, ψ = 0: every term is c·e^{-2rt}.
        let g = Grid::new(2, 8).unwrap();
        let params = Params::default();
        let (rho0, amp) = (1.2, 0.3);
        let k = 2.0 * PI;
        let r = params.nu * k * k / rho0 + params.alpha;
        let h = 2e-3;
        let mut tr = DissipationTracker::new();
        let steps = (4.0 / h) as usize;
        for j in 0..=steps {
            let t = j as f64 * h;
            let mut s = State::quiescent(&g, rho0);
            let a = amp * (-r * t).exp();
            s.u = VectorField::from_fn(&g, |x| [a * (k * x[1]).sin(), 0.0, 0.0]).into_spectral();
            s.t = t;
            tr.push(&s, &record(&s, &params).unwrap());
        }
        let samples = tr.finish();
        let c = 0.5 * amp * amp * (rho0 * r * r + k.powi(4) + k * k + rho0);
        for (t, v) in dissipation_windows(&samples, &[0.5, 1.0, 2.0]).unwrap() {
            let exact = c * ((-2.0 * r * t).exp() - (-4.0 * r * t).exp()) / (2.0 * r);
            assert!((v - exact).abs() <= 1e-4 * exact, "t = {t}: {v} vs {exact}");
        }
    }
}
