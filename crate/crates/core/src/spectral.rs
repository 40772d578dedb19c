//! Periodic-box fields on the unit torus and the spectral calculus built on them.
//!
//! Every field is stored as complex samples on an `n^dim` uniform grid (row-major,
//! last axis fastest) together with a flag saying whether the samples are
//! collocation values or Fourier coefficients. The forward transform is normalized
//! so that a constant field `c` maps to a single mode-zero coefficient `c`, hence
//! `∫|f|² dx = Σ|f̂_k|²` on the unit box.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[0,1)^dim`.
pub struct Grid {
    dim: usize,
    n: usize,
    len: usize,
    freqs: Vec<i64>,
    k: Vec<f64>,
    k_odd: Vec<f64>,
    modes: Vec<[u32; 3]>,
    k_sq: Vec<f64>,
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Arc<Grid>> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedGrid(format!("dimension {dim} (must be 2 or 3)")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::UnsupportedGrid(format!(
                "{n} points per axis (must be a power of two, at least 8)"
            )));
        }
        let half = n as i64 / 2;
        let freqs: Vec<i64> = (0..n as i64)
            .map(|m| if m <= half { m } else { m - n as i64 })
            .collect();
        let k: Vec<f64> = freqs.iter().map(|&f| 2.0 * PI * f as f64).collect();
        let k_odd: Vec<f64> = freqs
            .iter()
            .map(|&f| if f == half { 0.0 } else { 2.0 * PI * f as f64 })
            .collect();
        let len = n.pow(dim as u32);
        let mut modes = Vec::with_capacity(len);
        for idx in 0..len {
            let mut m = [0u32; 3];
            let mut r = idx;
            for a in (0..dim).rev() {
                m[a] = (r % n) as u32;
                r /= n;
            }
            modes.push(m);
        }
        let k_sq = modes
            .iter()
            .map(|m| (0..dim).map(|a| k[m[a] as usize].powi(2)).sum())
            .collect();
        let keep = modes
            .iter()
            .map(|m| (0..dim).all(|a| 3 * freqs[m[a] as usize].unsigned_abs() as usize <= n))
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            dim,
            n,
            len,
            freqs,
            k,
            k_odd,
            modes,
            k_sq,
            keep,
            fwd,
            inv,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of collocation points, `n^dim`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Integer frequencies per axis; the Nyquist entry sits at index `n/2`.
    pub fn frequencies(&self) -> &[i64] {
        &self.freqs
    }

    /// Per-axis wavenumbers `2π·frequency`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Per-axis index triple of a flat index (unused axes are zero).
    pub fn mode(&self, idx: usize) -> [usize; 3] {
        let m = self.modes[idx];
        [m[0] as usize, m[1] as usize, m[2] as usize]
    }

    /// Integer frequency vector of a flat spectral index.
    pub fn frequency_vector(&self, idx: usize) -> [i64; 3] {
        let m = self.modes[idx];
        let mut f = [0i64; 3];
        for a in 0..self.dim {
            f[a] = self.freqs[m[a] as usize];
        }
        f
    }

    /// Flat index of an integer frequency vector (wrapped modulo `n`).
    pub fn index_of_frequency(&self, f: [i64; 3]) -> usize {
        let n = self.n as i64;
        (0..self.dim).fold(0usize, |acc, a| acc * self.n + f[a].rem_euclid(n) as usize)
    }

    /// Wavenumber vector used for first derivatives (Nyquist entries zeroed).
    #[inline]
    pub fn k_odd(&self, idx: usize) -> [f64; 3] {
        let m = self.modes[idx];
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            out[a] = self.k_odd[m[a] as usize];
        }
        out
    }

    /// `|k|²` of a flat spectral index.
    #[inline]
    pub fn k_sq(&self, idx: usize) -> f64 {
        self.k_sq[idx]
    }

    /// Whether a mode survives the two-thirds truncation.
    #[inline]
    pub fn is_resolved(&self, idx: usize) -> bool {
        self.keep[idx]
    }

    /// Collocation coordinates of a flat index.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.modes[idx];
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = m[a] as f64 / self.n as f64;
        }
        x
    }

    /// Index of the spectral mode `-k`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let m = self.modes[idx];
        (0..self.dim).fold(0usize, |acc, a| {
            acc * self.n + (self.n - m[a] as usize) % self.n
        })
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let n = self.n;
        let scratch_len = plan.get_inplace_scratch_len();
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                data.par_chunks_mut(n * n).for_each_init(
                    || vec![C64::new(0.0, 0.0); scratch_len],
                    |scratch, rows| plan.process_with_scratch(rows, scratch),
                );
                continue;
            }
            let block = n * stride;
            // Lines along this axis are gathered into contiguous rows, transformed, and scattered back.
            let transpose_block = |chunk: &mut [C64], buf: &mut Vec<C64>, scratch: &mut Vec<C64>| {
                for i in 0..n {
                    let row = &chunk[i * stride..(i + 1) * stride];
                    for (j, v) in row.iter().enumerate() {
                        buf[j * n + i] = *v;
                    }
                }
                plan.process_with_scratch(&mut buf[..block], scratch);
                for i in 0..n {
                    let row = &mut chunk[i * stride..(i + 1) * stride];
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = buf[j * n + i];
                    }
                }
            };
            data.par_chunks_mut(block).for_each_init(
                || {
                    (
                        vec![C64::new(0.0, 0.0); block],
                        vec![C64::new(0.0, 0.0); scratch_len],
                    )
                },
                |(buf, scratch), chunk| transpose_block(chunk, buf, scratch),
            );
        }
        if !inverse {
            let s = 1.0 / self.len as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Repr {
    Physical,
    Spectral,
}

impl Repr {
    fn name(self) -> &'static str {
        match self {
            Repr::Physical => "physical",
            Repr::Spectral => "spectral",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    data: Vec<C64>,
    repr: Repr,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>, repr: Repr) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![C64::new(0.0, 0.0); grid.len()],
            repr,
        }
    }

    pub fn from_data(grid: &Arc<Grid>, data: Vec<C64>, repr: Repr) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::UnsupportedGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            data,
            repr,
        })
    }

    /// Sample a complex function at the collocation points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> C64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        ScalarField {
            grid: grid.clone(),
            data,
            repr: Repr::Physical,
        }
    }

    pub fn from_real_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn values(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn values_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<C64> {
        self.data
    }

    fn expect(&self, repr: Repr) -> Result<()> {
        if self.repr == repr {
            Ok(())
        } else {
            Err(Error::Representation {
                expected: repr.name(),
                found: self.repr.name(),
            })
        }
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Physical samples to Fourier coefficients.
    pub fn forward_transform(&self) -> Result<ScalarField> {
        self.expect(Repr::Physical)?;
        Ok(self.clone().into_spectral())
    }

    /// Fourier coefficients to physical samples.
    pub fn inverse_transform(&self) -> Result<ScalarField> {
        self.expect(Repr::Spectral)?;
        Ok(self.clone().into_physical())
    }

    pub fn into_spectral(mut self) -> ScalarField {
        if self.repr == Repr::Physical {
            self.grid.transform(&mut self.data, false);
            self.repr = Repr::Spectral;
        }
        self
    }

    pub fn into_physical(mut self) -> ScalarField {
        if self.repr == Repr::Spectral {
            self.grid.transform(&mut self.data, true);
            self.repr = Repr::Physical;
        }
        self
    }

    pub fn to_spectral(&self) -> ScalarField {
        self.clone().into_spectral()
    }

    pub fn to_physical(&self) -> ScalarField {
        self.clone().into_physical()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            repr: self.repr,
        }
    }

    /// Multiply each spectral coefficient by a factor depending on its flat index.
    pub fn map_modes(&self, f: impl Fn(usize, C64) -> C64) -> ScalarField {
        let s = self.to_spectral();
        ScalarField {
            data: s.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
            ..s
        }
    }

    pub fn scaled(&self, c: C64) -> ScalarField {
        self.map(|v| v * c)
    }

    /// `self + c·other`; representations must agree.
    pub fn add_scaled(&self, c: C64, other: &ScalarField) -> Result<ScalarField> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        other.expect(self.repr)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + c * b)
                .collect(),
            repr: self.repr,
        })
    }

    /// Largest |imaginary part| of the physical samples.
    pub fn max_imag(&self) -> f64 {
        self.to_physical()
            .data
            .iter()
            .fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Drop the imaginary part of the physical samples.
    ///
    /// On spectral data this is the Hermitian symmetrization
    /// `f̂(k) ← (f̂(k) + conj f̂(-k))/2`, which avoids a transform pair.
    pub fn real_part(&self) -> ScalarField {
        match self.repr {
            Repr::Physical => self.map(|v| C64::new(v.re, 0.0)),
            Repr::Spectral => {
                let g = &self.grid;
                let data = (0..g.len())
                    .map(|i| 0.5 * (self.data[i] + self.data[g.conjugate_index(i)].conj()))
                    .collect();
                ScalarField {
                    grid: g.clone(),
                    data,
                    repr: Repr::Spectral,
                }
            }
        }
    }

    /// Spatial mean over the unit box.
    pub fn mean(&self) -> C64 {
        match self.repr {
            Repr::Spectral => self.data[0],
            Repr::Physical => self.data.iter().sum::<C64>() / self.data.len() as f64,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Real vector field with one scalar component per axis.
#[derive(Clone, Debug)]
pub struct VectorField {
    comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>, repr: Repr) -> Self {
        VectorField {
            comps: (0..grid.dim()).map(|_| ScalarField::zeros(grid, repr)).collect(),
        }
    }

    pub fn from_components(comps: Vec<ScalarField>) -> Result<Self> {
        let first = comps.first().ok_or(Error::GridMismatch)?;
        if comps.len() != first.grid().dim() || comps.iter().any(|c| !c.same_grid(first)) {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField { comps })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        VectorField {
            comps: (0..grid.dim())
                .map(|a| ScalarField::from_real_fn(grid, |x| f(x)[a]))
                .collect(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.comps[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn component(&self, a: usize) -> &ScalarField {
        &self.comps[a]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.comps
    }

    pub fn to_spectral(&self) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|c| c.to_spectral()).collect(),
        }
    }

    pub fn to_physical(&self) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|c| c.to_physical()).collect(),
        }
    }

    pub fn into_spectral(self) -> VectorField {
        VectorField {
            comps: self.comps.into_iter().map(|c| c.into_spectral()).collect(),
        }
    }

    pub fn into_physical(self) -> VectorField {
        VectorField {
            comps: self.comps.into_iter().map(|c| c.into_physical()).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|f| f.scaled(C64::new(c, 0.0))).collect(),
        }
    }

    pub fn add_scaled(&self, c: f64, other: &VectorField) -> Result<VectorField> {
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.add_scaled(C64::new(c, 0.0), b))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { comps })
    }

    pub fn real_part(&self) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|c| c.real_part()).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_finite())
    }

    /// Pointwise Euclidean magnitude at the collocation points.
    pub fn magnitude_max(&self) -> f64 {
        let phys = self.to_physical();
        let len = phys.grid().len();
        (0..len)
            .map(|i| {
                phys.comps
                    .iter()
                    .map(|c| c.values()[i].norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Spectral gradient `i k f̂` (Nyquist entries of odd derivatives zeroed).
pub fn gradient(f: &ScalarField) -> VectorField {
    let s = f.to_spectral();
    let g = s.grid().clone();
    let comps = (0..g.dim())
        .map(|a| s.map_modes(|i, v| C64::new(0.0, g.k_odd(i)[a]) * v))
        .collect();
    VectorField { comps }
}

/// Spectral Laplacian `-|k|² f̂`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid().clone();
    f.map_modes(|i, v| -g.k_sq(i) * v)
}

/// Spectral divergence, consistent with [`gradient`] and [`leray_project`].
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid().clone();
    let spec = v.to_spectral();
    let mut out = ScalarField::zeros(&g, Repr::Spectral);
    for (a, c) in spec.components().iter().enumerate() {
        for (i, (o, x)) in out.data.iter_mut().zip(c.values()).enumerate() {
            *o += C64::new(0.0, g.k_odd(i)[a]) * x;
        }
    }
    out
}

/// Two-thirds rule: zero every coefficient whose frequency index exceeds `n/3` on any axis.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let g = f.grid().clone();
    f.map_modes(|i, v| if g.is_resolved(i) { v } else { C64::new(0.0, 0.0) })
}

pub fn dealias_vector(v: &VectorField) -> VectorField {
    VectorField {
        comps: v.components().iter().map(dealias).collect(),
    }
}

pub(crate) fn dealias_in_place(f: &mut ScalarField) {
    debug_assert_eq!(f.repr(), Repr::Spectral);
    let g = f.grid().clone();
    for (i, v) in f.data.iter_mut().enumerate() {
        if !g.is_resolved(i) {
            *v = C64::new(0.0, 0.0);
        }
    }
}

/// Leray projection onto divergence-free fields: `v̂ ← v̂ - k (k·v̂)/|k|²`.
///
/// The mean (k = 0) mode is left untouched. The projection uses the same
/// wavenumbers as [`divergence`], so the result has zero spectral divergence.
pub fn leray_project(v: &VectorField) -> VectorField {
    let mut out = v.to_spectral();
    leray_project_in_place(&mut out);
    out
}

pub(crate) fn leray_project_in_place(v: &mut VectorField) {
    let g = v.grid().clone();
    let dim = g.dim();
    for i in 0..g.len() {
        let k = g.k_odd(i);
        let kk: f64 = k[..dim].iter().map(|x| x * x).sum();
        if kk == 0.0 {
            continue;
        }
        let mut kv = C64::new(0.0, 0.0);
        for a in 0..dim {
            kv += k[a] * v.comps[a].data[i];
        }
        let s = kv / kk;
        for a in 0..dim {
            v.comps[a].data[i] -= k[a] * s;
        }
    }
}

/// Sesquilinear L² inner product `∫ conj(a) b dx` via Parseval.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<C64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    let (a, b) = (a.to_spectral(), b.to_spectral());
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum())
}

pub fn norm_l2(f: &ScalarField) -> f64 {
    norm_l2_sq(f).sqrt()
}

pub fn norm_l2_sq(f: &ScalarField) -> f64 {
    match f.repr() {
        Repr::Spectral => f.data.iter().map(|v| v.norm_sqr()).sum(),
        Repr::Physical => f.to_spectral().data.iter().map(|v| v.norm_sqr()).sum(),
    }
}

/// `(∫|f|^q dx)^{1/q}` by collocation quadrature.
pub fn norm_lp(f: &ScalarField, q: f64) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidNorm(format!("L^q exponent {q} outside [1, ∞)")));
    }
    let phys = f.to_physical();
    let sum: f64 = phys.data.iter().map(|v| v.norm().powf(q)).sum();
    Ok((sum / phys.data.len() as f64).powf(1.0 / q))
}

pub fn norm_linf(f: &ScalarField) -> f64 {
    f.to_physical().data.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Homogeneous Sobolev seminorm with weights `|k|^{2s}`.
pub fn norm_hs_dot(f: &ScalarField, s: f64) -> Result<f64> {
    Ok(norm_hs_dot_sq(f, s)?.sqrt())
}

pub fn norm_hs_dot_sq(f: &ScalarField, s: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidNorm(format!("Sobolev index {s} must be non-negative")));
    }
    let spec = f.to_spectral();
    let g = spec.grid();
    Ok(spec
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if s == 0.0 { 1.0 } else { g.k_sq(i).powf(s) };
            w * v.norm_sqr()
        })
        .sum())
}

/// `(‖f‖²_{L²} + ‖f‖²_{Ḣˢ})^{1/2}`.
pub fn norm_hs(f: &ScalarField, s: f64) -> Result<f64> {
    Ok((norm_l2_sq(f) + norm_hs_dot_sq(f, s)?).sqrt())
}

/// Sum of component L² norms squared.
pub fn vector_l2_sq(v: &VectorField) -> f64 {
    v.components().iter().map(norm_l2_sq).sum()
}

/// Sum of component Ḣˢ seminorms squared.
pub fn vector_hs_dot_sq(v: &VectorField, s: f64) -> Result<f64> {
    v.components().iter().map(|c| norm_hs_dot_sq(c, s)).sum()
}

/// Exact trigonometric interpolation of one or more spectral fields at off-grid points.
///
/// Only the band of frequencies actually present is retained, so dealiased fields
/// evaluate roughly `(3/2)^dim` times faster than a full sum.
#[derive(Clone, Debug)]
pub struct Interpolant {
    dim: usize,
    n: usize,
    band: i64,
    width: usize,
    nfields: usize,
    coeffs: Vec<C64>,
}

impl Interpolant {
    pub fn new(fields: &[&ScalarField]) -> Result<Self> {
        let first = fields.first().ok_or(Error::GridMismatch)?;
        let g = first.grid().clone();
        if fields.iter().any(|f| !f.same_grid(first)) {
            return Err(Error::GridMismatch);
        }
        let specs: Vec<ScalarField> = fields.iter().map(|f| f.to_spectral()).collect();
        let dim = g.dim();
        let mut band = 0i64;
        for s in &specs {
            for (i, v) in s.values().iter().enumerate() {
                if v.norm_sqr() > 0.0 {
                    let f = g.frequency_vector(i);
                    band = band.max(f[..dim].iter().map(|x| x.abs()).max().unwrap_or(0));
                }
            }
        }
        let width = 2 * band as usize + 1;
        let block = width.pow(dim as u32);
        let nfields = specs.len();
        let mut coeffs = vec![C64::new(0.0, 0.0); block * nfields];
        for (fi, s) in specs.iter().enumerate() {
            for (i, v) in s.values().iter().enumerate() {
                let f = g.frequency_vector(i);
                if f[..dim].iter().any(|x| x.abs() > band) {
                    continue;
                }
                let local = (0..dim).fold(0usize, |acc, a| acc * width + (f[a] + band) as usize);
                coeffs[local * nfields + fi] = *v;
            }
        }
        Ok(Interpolant {
            dim,
            n: g.n(),
            band,
            width,
            nfields,
            coeffs,
        })
    }

    pub fn num_fields(&self) -> usize {
        self.nfields
    }

    fn axis_basis(&self, x: f64) -> Vec<C64> {
        let nyq = self.n as i64 / 2;
        (-self.band..=self.band)
            .map(|f| {
                if f == nyq {
                    C64::new((2.0 * PI * f as f64 * x).cos(), 0.0)
                } else {
                    C64::from_polar(1.0, 2.0 * PI * f as f64 * x)
                }
            })
            .collect()
    }

    /// Values of every field at `x`.
    pub fn eval(&self, x: [f64; 3]) -> Vec<C64> {
        let nf = self.nfields;
        let w = self.width;
        let e: Vec<Vec<C64>> = (0..self.dim).map(|a| self.axis_basis(x[a])).collect();
        let mut out = vec![C64::new(0.0, 0.0); nf];
        if self.dim == 2 {
            for j0 in 0..w {
                let mut acc = vec![C64::new(0.0, 0.0); nf];
                for j1 in 0..w {
                    let base = (j0 * w + j1) * nf;
                    let b = e[1][j1];
                    for (fi, a) in acc.iter_mut().enumerate() {
                        *a += b * self.coeffs[base + fi];
                    }
                }
                for (o, a) in out.iter_mut().zip(&acc) {
                    *o += e[0][j0] * a;
                }
            }
        } else {
            let mut inner = vec![C64::new(0.0, 0.0); nf];
            let mut mid = vec![C64::new(0.0, 0.0); nf];
            for j0 in 0..w {
                mid.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for j1 in 0..w {
                    inner.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                    let base = (j0 * w + j1) * w * nf;
                    for j2 in 0..w {
                        let b = e[2][j2];
                        let row = &self.coeffs[base + j2 * nf..base + (j2 + 1) * nf];
                        for (a, c) in inner.iter_mut().zip(row) {
                            *a += b * c;
                        }
                    }
                    for (m, a) in mid.iter_mut().zip(&inner) {
                        *m += e[1][j1] * a;
                    }
                }
                for (o, m) in out.iter_mut().zip(&mid) {
                    *o += e[0][j0] * m;
                }
            }
        }
        out
    }
}

/// Minimum of a real field over the continuous torus and where it is attained.
///
/// The lowest grid-local minima seed Newton iterations on the trigonometric
/// interpolant; a candidate that fails to converge within one grid spacing keeps its
/// grid value.
pub fn continuous_minimum(f: &ScalarField) -> Result<(f64, [f64; 3])> {
    const CANDIDATES: usize = 8;
    let g = f.grid().clone();
    let dim = g.dim();
    let n = g.n();
    let phys = f.to_physical();
    let vals: Vec<f64> = phys.values().iter().map(|v| v.re).collect();
    let mut local: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let m = g.mode(i);
            let offsets = 3usize.pow(dim as u32);
            (0..offsets).all(|o| {
                let mut idx = 0usize;
                let mut r = o;
                for a in 0..dim {
                    let d = r % 3;
                    r /= 3;
                    let c = (m[a] + n + d - 1) % n;
                    idx = idx * n + c;
                }
                vals[idx] >= vals[i]
            })
        })
        .collect();
    local.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    local.truncate(CANDIDATES);

    let spec = f.to_spectral();
    let grad = gradient(&spec);
    let mut fields = vec![spec.clone()];
    fields.extend(grad.components().iter().cloned());
    for a in 0..dim {
        let second = gradient(grad.component(a));
        for b in a..dim {
            fields.push(second.component(b).clone());
        }
    }
    let refs: Vec<&ScalarField> = fields.iter().collect();
    let interp = Interpolant::new(&refs)?;

    let hess_index = |a: usize, b: usize| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        1 + dim + (0..a).map(|r| dim - r).sum::<usize>() + (b - a)
    };
    let mut best = (f64::INFINITY, [0.0; 3]);
    for &i in &local {
        let start = g.point(i);
        let mut x = start;
        let mut value = vals[i];
        let mut converged = false;
        for _ in 0..30 {
            let e = interp.eval(x);
            let gvec: Vec<f64> = (0..dim).map(|a| e[1 + a].re).collect();
            let mut h = [[0.0; 3]; 3];
            for a in 0..dim {
                for b in 0..dim {
                    h[a][b] = e[hess_index(a, b)].re;
                }
            }
            // Flat directions (a field constant along an axis) make `h` singular; a
            // small diagonal shift gives them a zero step instead of stopping Newton.
            let scale = (0..dim).map(|a| h[a][a].abs()).fold(0.0, f64::max).max(1e-300);
            let mut step = solve_small(&h, &gvec, dim);
            let mut shift = 1e-12 * scale;
            while step.is_none() && shift <= 1e-2 * scale {
                let mut hs = h;
                for (a, row) in hs.iter_mut().enumerate().take(dim) {
                    row[a] += shift;
                }
                step = solve_small(&hs, &gvec, dim);
                shift *= 100.0;
            }
            let Some(step) = step else { break };
            let norm: f64 = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            for a in 0..dim {
                x[a] -= step[a];
            }
            if norm < 1e-14 {
                converged = true;
                break;
            }
        }
        let inside = (0..dim).all(|a| {
            let d = x[a] - start[a];
            (d - d.round()).abs() <= g.dx()
        });
        if converged && inside {
            let v = interp.eval(x)[0].re;
            if v <= value {
                value = v;
            } else {
                x = start;
            }
        } else {
            x = start;
        }
        if value < best.0 {
            for c in x.iter_mut().take(dim) {
                *c -= c.floor();
            }
            best = (value, x);
        }
    }
    Ok(best)
}

/// Solve `h s = r` for `dim ≤ 3` by Cramer's rule; `None` when `h` is singular or not
/// positive definite (a Newton step toward a minimum needs positive curvature).
fn solve_small(h: &[[f64; 3]; 3], r: &[f64], dim: usize) -> Option<Vec<f64>> {
    let det2 = |a: f64, b: f64, c: f64, d: f64| a * d - b * c;
    if dim == 2 {
        let det = det2(h[0][0], h[0][1], h[1][0], h[1][1]);
        if !(det > 0.0 && h[0][0] > 0.0) {
            return None;
        }
        return Some(vec![
            det2(r[0], h[0][1], r[1], h[1][1]) / det,
            det2(h[0][0], r[0], h[1][0], r[1]) / det,
        ]);
    }
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * det2(m[1][1], m[1][2], m[2][1], m[2][2]) - m[0][1] * det2(m[1][0], m[1][2], m[2][0], m[2][2])
            + m[0][2] * det2(m[1][0], m[1][1], m[2][0], m[2][1])
    };
    let det = det3(*h);
    if !(det > 0.0 && h[0][0] > 0.0 && det2(h[0][0], h[0][1], h[1][0], h[1][1]) > 0.0) {
        return None;
    }
    Some(
        (0..3)
            .map(|c| {
                let mut m = *h;
                for row in 0..3 {
                    m[row][c] = r[row];
                }
                det3(m) / det
            })
            .collect(),
    )
}
