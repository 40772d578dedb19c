//! Reference computations that share no code path with the solver's FFT kernels:
//! direct DFT sums, high-order finite differences, the plane-wave reduced ODE,
//! an adaptive Dormand–Prince integrator, and reproducible random test states.
//!
//! Everything here is deliberately slow and straightforward.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Params, State};
use crate::spectral::{Grid, Repr, ScalarField, VectorField};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Forward DFT by the O(N²) double sum, normalised like the solver (mode 0 is the mean).
pub fn direct_dft(f: &ScalarField) -> Vec<C64> {
    let g = f.grid();
    let phys = f.to_physical();
    let vals = phys.values();
    let n = g.n() as f64;
    let len = g.len();
    let mut out = vec![zero(); len];
    for (j, o) in out.iter_mut().enumerate() {
        let fj = g.frequency_vector(j);
        let mut acc = zero();
        for (i, v) in vals.iter().enumerate() {
            let m = g.mode(i);
            let phase: f64 = (0..g.dim()).map(|a| fj[a] as f64 * m[a] as f64).sum::<f64>();
            acc += v * C64::from_polar(1.0, -2.0 * PI * phase / n);
        }
        *o = acc / len as f64;
    }
    out
}

/// Forward DFT by naive per-axis sums, O(N·n·dim). Same normalisation as [`direct_dft`].
pub fn naive_dft(f: &ScalarField) -> Vec<C64> {
    let g = f.grid();
    let n = g.n();
    let dim = g.dim();
    let mut data = f.to_physical().into_values();
    let twiddle: Vec<C64> = (0..n)
        .map(|j| C64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64))
        .collect();
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let mut next = vec![zero(); data.len()];
        for (i, o) in next.iter_mut().enumerate() {
            let kk = (i / stride) % n;
            let base = i - kk * stride;
            let mut acc = zero();
            for x in 0..n {
                acc += data[base + x * stride] * twiddle[(kk * x) % n];
            }
            *o = acc / n as f64;
        }
        data = next;
    }
    data
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_c(r: &mut ChaCha8Rng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn in_band(g: &Grid, i: usize, cutoff: i64) -> bool {
    g.frequency_vector(i)[..g.dim()]
        .iter()
        .all(|f| f.abs() <= cutoff)
}

fn wave_vector(g: &Grid, i: usize) -> [f64; 3] {
    let f = g.frequency_vector(i);
    let mut k = [0.0; 3];
    for a in 0..g.dim() {
        k[a] = 2.0 * PI * f[a] as f64;
    }
    k
}

/// Random complex field in physical representation.
///
/// With `cutoff = None` the samples are independent uniforms; otherwise only
/// frequencies with `|f_j| ≤ cutoff` on every axis are populated.
pub fn random_field(g: &Arc<Grid>, seed: u64, cutoff: Option<i64>) -> ScalarField {
    let mut r = rng(seed);
    match cutoff {
        None => {
            let vals = (0..g.len()).map(|_| uniform_c(&mut r)).collect();
            ScalarField::from_data(g, vals, Repr::Physical).expect("length")
        }
        Some(c) => {
            let vals = (0..g.len())
                .map(|i| if in_band(g, i, c) { uniform_c(&mut r) } else { zero() })
                .collect();
            ScalarField::from_data(g, vals, Repr::Spectral)
                .expect("length")
                .into_physical()
        }
    }
}

/// Random real vector field with independent uniform samples.
pub fn random_vector(g: &Arc<Grid>, seed: u64) -> VectorField {
    let mut r = rng(seed);
    let comps = (0..g.dim())
        .map(|_| {
            let vals = (0..g.len())
                .map(|_| C64::new(r.random_range(-1.0..1.0), 0.0))
                .collect();
            ScalarField::from_data(g, vals, Repr::Physical).expect("length")
        })
        .collect();
    VectorField::from_components(comps).expect("same grid")
}

/// Real band-limited divergence-free vector field, built mode by mode.
pub fn random_solenoidal(g: &Arc<Grid>, seed: u64, cutoff: i64, amp: f64) -> VectorField {
    let mut r = rng(seed);
    let dim = g.dim();
    let mut comps = vec![vec![zero(); g.len()]; dim];
    for i in 0..g.len() {
        if !in_band(g, i, cutoff) || i == 0 {
            continue;
        }
        let k = wave_vector(g, i);
        let mut c = [zero(); 3];
        for ca in c.iter_mut().take(dim) {
            *ca = uniform_c(&mut r);
        }
        let kk: f64 = k[..dim].iter().map(|x| x * x).sum();
        let kc: C64 = (0..dim).map(|a| k[a] * c[a]).sum();
        for a in 0..dim {
            comps[a][i] = amp * (c[a] - k[a] * kc / kk);
        }
    }
    let comps = comps
        .into_iter()
        .map(|v| {
            ScalarField::from_data(g, v, Repr::Spectral)
                .expect("length")
                .real_part()
        })
        .collect();
    VectorField::from_components(comps).expect("same grid")
}

/// A smooth, non-band-limited real field built from analytic functions.
pub fn smooth_real_field(g: &Arc<Grid>) -> ScalarField {
    let dim = g.dim();
    ScalarField::from_real_fn(g, move |x| {
        let a = (0.5 * (2.0 * PI * x[0]).sin()).exp();
        let b = (2.0 * PI * (x[1] + 0.25)).cos();
        let c = if dim == 3 {
            1.0 + 0.3 * (2.0 * PI * 2.0 * x[2]).sin()
        } else {
            1.0
        };
        a * b * c + 0.2 * (2.0 * PI * (x[0] - x[1])).sin()
    })
}

/// Centred finite-difference weights for the first derivative, one side of the stencil.
fn first_derivative_weights(order: usize) -> &'static [f64] {
    match order {
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        8 => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => panic!("unsupported order {order}"),
    }
}

/// Centre weight and one side of the eighth-order second-derivative stencil.
const SECOND_DERIVATIVE_8: (f64, [f64; 4]) = (
    -205.0 / 72.0,
    [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
);

fn shifted(g: &Grid, i: usize, axis: usize, s: isize) -> usize {
    let n = g.n();
    let dim = g.dim();
    let stride = n.pow((dim - 1 - axis) as u32);
    let m = (i / stride) % n;
    let mm = (m as isize + s).rem_euclid(n as isize) as usize;
    i - m * stride + mm * stride
}

fn fd_first(vals: &[C64], g: &Grid, axis: usize, order: usize) -> Vec<C64> {
    let w = first_derivative_weights(order);
    let h = g.dx();
    (0..vals.len())
        .map(|i| {
            let mut acc = zero();
            for (s, wi) in w.iter().enumerate() {
                let s = s as isize + 1;
                acc += *wi * (vals[shifted(g, i, axis, s)] - vals[shifted(g, i, axis, -s)]);
            }
            acc / h
        })
        .collect()
}

fn fd_second(vals: &[C64], g: &Grid, axis: usize) -> Vec<C64> {
    let (c0, w) = SECOND_DERIVATIVE_8;
    let h2 = g.dx() * g.dx();
    (0..vals.len())
        .map(|i| {
            let mut acc = c0 * vals[i];
            for (s, wi) in w.iter().enumerate() {
                let s = s as isize + 1;
                acc += *wi * (vals[shifted(g, i, axis, s)] + vals[shifted(g, i, axis, -s)]);
            }
            acc / h2
        })
        .collect()
}

/// Fourth-order centred differences of the real part, one vector per axis.
pub fn fd4_gradient(f: &ScalarField) -> Vec<Vec<f64>> {
    let g = f.grid();
    let vals = f.to_physical().into_values();
    (0..g.dim())
        .map(|a| fd_first(&vals, g, a, 4).into_iter().map(|v| v.re).collect())
        .collect()
}

/// Richardson combination `(16·D_h − D_{2h})/15` of fourth-order centred differences
/// of the real part; sixth-order accurate.
pub fn fd4_extrapolated_gradient(f: &ScalarField) -> Vec<Vec<f64>> {
    let g = f.grid();
    let vals = f.to_physical().into_values();
    let w = first_derivative_weights(4);
    let h = g.dx();
    (0..g.dim())
        .map(|a| {
            (0..vals.len())
                .map(|i| {
                    let d = |stride: isize, hh: f64| -> f64 {
                        let mut acc = 0.0;
                        for (s, wi) in w.iter().enumerate() {
                            let s = (s as isize + 1) * stride;
                            acc += wi * (vals[shifted(g, i, a, s)].re - vals[shifted(g, i, a, -s)].re);
                        }
                        acc / hh
                    };
                    (16.0 * d(1, h) - d(2, 2.0 * h)) / 15.0
                })
                .collect()
        })
        .collect()
}

fn fd8_gradient(vals: &[C64], g: &Grid) -> Vec<Vec<C64>> {
    (0..g.dim()).map(|a| fd_first(vals, g, a, 8)).collect()
}

fn fd8_laplacian(vals: &[C64], g: &Grid) -> Vec<C64> {
    let mut out = vec![zero(); vals.len()];
    for a in 0..g.dim() {
        for (o, d) in out.iter_mut().zip(fd_second(vals, g, a)) {
            *o += d;
        }
    }
    out
}

fn real_components(u: &VectorField) -> Vec<Vec<f64>> {
    u.to_physical()
        .components()
        .iter()
        .map(|c| c.values().iter().map(|v| v.re).collect())
        .collect()
}

/// Pointwise `Bψ` assembled term by term from eighth-order finite differences,
/// without any truncation. Physical representation.
pub fn fd_apply_b(psi: &ScalarField, u: &VectorField, params: &Params) -> ScalarField {
    let g = psi.grid();
    let vals = fd_b_values(psi, u, params);
    ScalarField::from_data(g, vals, Repr::Physical).expect("length")
}

fn fd_b_values(psi: &ScalarField, u: &VectorField, params: &Params) -> Vec<C64> {
    let g = psi.grid();
    let dim = g.dim();
    let p = psi.to_physical().into_values();
    let grad = fd8_gradient(&p, g);
    let lap = fd8_laplacian(&p, g);
    let uv = real_components(u);
    (0..g.len())
        .map(|i| {
            let u_sq: f64 = (0..dim).map(|a| uv[a][i] * uv[a][i]).sum();
            let u_grad: C64 = (0..dim).map(|a| uv[a][i] * grad[a][i]).sum();
            let modulus = p[i].norm();
            -0.5 * lap[i]
                + 0.5 * u_sq * p[i]
                + C64::new(0.0, 1.0) * u_grad
                + params.mu * modulus.powf(params.p) * p[i]
        })
        .collect()
}

/// `∂t u` assembled with finite-difference derivatives, the advective form `u·∇u`,
/// and a projection applied to naive-DFT coefficients with the continuous wave
/// vectors. Resolved modes only (two-thirds mask), spectral representation.
pub fn fd_momentum_tendency(state: &State, params: &Params) -> VectorField {
    let g = state.grid();
    let dim = g.dim();
    let psi = state.psi.to_physical().into_values();
    let grad_psi = fd8_gradient(&psi, g);
    let b = fd_b_values(&state.psi, &state.u, params);
    let uv = real_components(&state.u);
    let uc: Vec<Vec<C64>> = uv
        .iter()
        .map(|c| c.iter().map(|&x| C64::new(x, 0.0)).collect())
        .collect();
    let grad_u: Vec<Vec<Vec<C64>>> = uc.iter().map(|c| fd8_gradient(c, g)).collect();
    let lap_u: Vec<Vec<C64>> = uc.iter().map(|c| fd8_laplacian(c, g)).collect();
    let rho: Vec<f64> = state
        .rho
        .to_physical()
        .values()
        .iter()
        .map(|v| v.re)
        .collect();

    let mut forcing = vec![vec![zero(); g.len()]; dim];
    for i in 0..g.len() {
        let src = (psi[i].conj() * b[i]).re;
        for a in 0..dim {
            let stress = (grad_psi[a][i].conj() * b[i]).im;
            let adv: f64 = (0..dim).map(|c| uv[c][i] * grad_u[a][c][i].re).sum();
            let v = (params.nu * lap_u[a][i].re
                - 2.0 * params.lambda * stress
                - 2.0 * params.lambda * uv[a][i] * src)
                / rho[i]
                - adv
                - params.alpha * uv[a][i];
            forcing[a][i] = C64::new(v, 0.0);
        }
    }
    let mut hats: Vec<Vec<C64>> = forcing
        .into_iter()
        .map(|v| {
            naive_dft(&ScalarField::from_data(g, v, Repr::Physical).expect("length"))
        })
        .collect();
    let limit = g.n() as i64;
    for i in 0..g.len() {
        let f = g.frequency_vector(i);
        let resolved = f[..dim].iter().all(|x| 3 * x.abs() <= limit);
        if !resolved {
            for h in hats.iter_mut() {
                h[i] = zero();
            }
            continue;
        }
        let k = wave_vector(g, i);
        let kk: f64 = k[..dim].iter().map(|x| x * x).sum();
        if kk > 0.0 {
            let kv: C64 = (0..dim).map(|a| k[a] * hats[a][i]).sum();
            for a in 0..dim {
                hats[a][i] -= k[a] * kv / kk;
            }
        }
    }
    let comps = hats
        .into_iter()
        .map(|h| ScalarField::from_data(g, h, Repr::Spectral).expect("length"))
        .collect();
    VectorField::from_components(comps).expect("same grid")
}

/// Band-limited random `(ψ, u)`: ψ complex with modes `|f_j| ≤ cutoff`, u real and
/// solenoidal on the same band. Amplitudes are O(0.1).
pub fn band_limited_pair(g: &Arc<Grid>, seed: u64, cutoff: i64) -> (ScalarField, VectorField) {
    let psi = random_field(g, seed.wrapping_mul(2654435761).wrapping_add(1), Some(cutoff));
    let scale = 0.3 / crate::spectral::norm_linf(&psi).max(1e-300);
    let psi = psi.scaled(C64::new(scale, 0.0)).into_spectral();
    let u = random_solenoidal(g, seed.wrapping_add(77), cutoff, 1.0);
    let su = 0.3 / u.magnitude_max().max(1e-300);
    (psi, u.scaled(su).into_spectral())
}

/// Random state with ψ and u of L∞ size `amp` on the band `n/4`, and
/// `ρ = 1 + 0.05·g` with a normalised random `g`.
pub fn random_state(g: &Arc<Grid>, seed: u64, amp: f64) -> State {
    random_state_on_band(g, seed, amp, g.n() as i64 / 4)
}

pub fn random_state_on_band(g: &Arc<Grid>, seed: u64, amp: f64, cutoff: i64) -> State {
    let (psi, u) = band_limited_pair(g, seed, cutoff);
    let psi = psi.scaled(C64::new(amp / 0.3, 0.0));
    let u = u.scaled(amp / 0.3);
    let fluct = random_field(g, seed.wrapping_add(1001), Some(cutoff))
        .into_spectral()
        .real_part()
        .into_physical();
    let m = crate::spectral::norm_linf(&fluct).max(1e-300);
    let rho = fluct.map(|v| C64::new(1.0 + 0.05 * v.re / m, 0.0));
    State::new(0.0, psi, u, rho).expect("same grid")
}

/// Smooth analytic state with infinitely many active modes, for refinement checks.
pub fn analytic_state(g: &Arc<Grid>) -> State {
    let dim = g.dim();
    let psi = ScalarField::from_fn(g, |x| {
        let env = (0.5 * (2.0 * PI * x[0]).sin()).exp();
        0.1 * env * C64::from_polar(1.0, 2.0 * PI * (x[1] + 0.3 * (2.0 * PI * x[0]).cos()))
    });
    // u = (∂₁φ, -∂₀φ, 0) for a stream function φ depending on (x₀, x₁) only.
    let u = VectorField::from_fn(g, |x| {
        let s = (0.5 * (2.0 * PI * x[0]).cos()).exp();
        let c = (2.0 * PI * x[1]).cos();
        let sn = (2.0 * PI * x[1]).sin();
        let ds0 = -0.5 * 2.0 * PI * (2.0 * PI * x[0]).sin() * s;
        let u0 = 0.05 * s * 2.0 * PI * c;
        let u1 = -0.05 * ds0 * sn;
        [u0, u1, 0.0]
    });
    let rho = ScalarField::from_real_fn(g, move |x| {
        let z = if dim == 3 { x[2] } else { 0.0 };
        1.0 + 0.03 * (0.7 * (2.0 * PI * (x[0] + z)).sin()).exp()
    });
    State::new(0.0, psi, u, rho).expect("same grid")
}

/// Result of one adaptive integration.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub y: Vec<f64>,
    pub steps: usize,
}

/// Dormand–Prince 5(4) with standard step-size control, integrating `y' = f(t, y)`
/// from `t0` to `t1`.
pub fn dopri45<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, rtol: f64, atol: f64) -> OdeSolution
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let span = t1 - t0;
    if span == 0.0 {
        return OdeSolution { y, steps: 0 };
    }
    let mut h = span.abs().min(1e-3) * span.signum();
    let mut steps = 0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    while (t1 - t) * span.signum() > 0.0 {
        if (t + h - t1) * span.signum() > 0.0 {
            h = t1 - t;
        }
        k[0] = f(t, &y);
        for s in 1..7 {
            let ys: Vec<f64> = (0..dim)
                .map(|j| y[j] + h * (0..s).map(|r| A[s][r] * k[r][j]).sum::<f64>())
                .collect();
            k[s] = f(t + C[s] * h, &ys);
        }
        let y5: Vec<f64> = (0..dim)
            .map(|j| y[j] + h * (0..7).map(|s| B5[s] * k[s][j]).sum::<f64>())
            .collect();
        let err = (0..dim)
            .map(|j| {
                let e = h * (0..7).map(|s| (B5[s] - B4[s]) * k[s][j]).sum::<f64>();
                let sc = atol + rtol * y[j].abs().max(y5[j].abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / dim as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
            steps += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        assert!(h.abs() > 1e-14 * span.abs(), "step size underflow in dopri45");
    }
    OdeSolution { y, steps }
}

/// The exact reduction of the full system for `ψ = A(t) e^{ik·x}`, `u = U(t)`, `ρ = R(t)`.
///
/// With `β = ½|k − U|² + μ|A|^p`:
/// `A' = -λβA - i(|k|²/2 + μ|A|^p)A`, `R' = 2λβ|A|²`, `R U' = 2λβ|A|²(k − U) − αRU`.
#[derive(Clone, Copy, Debug)]
pub struct PlaneWaveOde {
    pub params: Params,
    pub k: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneWaveSample {
    pub t: f64,
    pub amplitude: C64,
    pub rho: f64,
    pub u: [f64; 3],
}

impl PlaneWaveSample {
    pub fn superfluid_mass(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

impl PlaneWaveOde {
    /// Wave vector `2π·m` for integer frequencies `m`.
    pub fn new(params: Params, m: [i64; 3]) -> Self {
        PlaneWaveOde {
            params,
            k: [
                2.0 * PI * m[0] as f64,
                2.0 * PI * m[1] as f64,
                2.0 * PI * m[2] as f64,
            ],
        }
    }

    fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let Params {
            lambda,
            mu,
            alpha,
            p,
            ..
        } = self.params;
        let a = C64::new(y[0], y[1]);
        let rho = y[2];
        let u = [y[3], y[4], y[5]];
        let s = a.norm_sqr();
        let ap = s.powf(0.5 * p);
        let rel: f64 = (0..3).map(|j| (self.k[j] - u[j]).powi(2)).sum();
        let beta = 0.5 * rel + mu * ap;
        let k_sq: f64 = self.k.iter().map(|x| x * x).sum();
        let da = -lambda * beta * a - C64::new(0.0, 0.5 * k_sq + mu * ap) * a;
        let exchange = 2.0 * lambda * beta * s;
        let mut out = vec![da.re, da.im, exchange, 0.0, 0.0, 0.0];
        for j in 0..3 {
            out[3 + j] = exchange * (self.k[j] - u[j]) / rho - alpha * u[j];
        }
        out
    }

    /// Samples at each requested time (increasing, starting at or after `initial.t`).
    pub fn solve(&self, initial: PlaneWaveSample, times: &[f64]) -> Vec<PlaneWaveSample> {
        let mut y = vec![
            initial.amplitude.re,
            initial.amplitude.im,
            initial.rho,
            initial.u[0],
            initial.u[1],
            initial.u[2],
        ];
        let mut t = initial.t;
        times
            .iter()
            .map(|&tn| {
                y = dopri45(|_, y| self.rhs(y), t, &y, tn, 1e-13, 1e-16).y;
                t = tn;
                PlaneWaveSample {
                    t,
                    amplitude: C64::new(y[0], y[1]),
                    rho: y[2],
                    u: [y[3], y[4], y[5]],
                }
            })
            .collect()
    }
}
