//! Single-file checkpoints: a fixed 160-byte header followed by raw arrays.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | content                                             |
//! |-------:|-----:|-----------------------------------------------------|
//! |      0 |    8 | magic `PTVSKCKP`                                    |
//! |      8 |    4 | format version (u32, currently 1)                   |
//! |     12 |    4 | dimension (u32)                                     |
//! |     16 |    8 | points per axis `n` (u64)                           |
//! |     24 |    8 | time `t` (f64)                                      |
//! |     32 |    8 | random seed of the initial data (u64)               |
//! |     40 |   16 | scheme id, ASCII, zero-padded                       |
//! |     56 |   64 | λ, μ, ν, α, p, m_i, M_i, m_f (8 × f64)              |
//! |    120 |    8 | payload length in bytes (u64)                       |
//! |    128 |   32 | SHA-256 of the payload                              |
//! |    160 |    … | payload                                             |
//!
//! The payload holds physical-space samples in row-major order (last axis fastest):
//! ψ as interleaved `(re, im)` pairs, then each velocity component, then ρ, all f64.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Params, State};
use crate::spectral::{Grid, Repr, ScalarField, VectorField};
use crate::timestepper::SCHEME_ID;

pub const MAGIC: &[u8; 8] = b"PTVSKCKP";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 160;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dim: usize,
    pub n: usize,
    pub t: f64,
    pub seed: u64,
    pub scheme_id: String,
    pub params: Params,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub psi: Vec<C64>,
    pub u: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

fn param_array(p: &Params) -> [f64; 8] {
    [p.lambda, p.mu, p.nu, p.alpha, p.p, p.m_i, p.big_m_i, p.m_f]
}

fn fail(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Resume refusals are configuration errors: the files are intact but disagree.
fn incompatible(path: &Path, reason: String) -> Error {
    Error::Config(format!("{}: {reason}", path.display()))
}

impl Checkpoint {
    pub fn from_state(state: &State, params: &Params, seed: u64) -> Self {
        let g = state.grid();
        let real = |f: &ScalarField| f.to_physical().values().iter().map(|v| v.re).collect();
        Checkpoint {
            header: CheckpointHeader {
                version: FORMAT_VERSION,
                dim: g.dim(),
                n: g.n(),
                t: state.t,
                seed,
                scheme_id: SCHEME_ID.to_string(),
                params: *params,
            },
            psi: state.psi.to_physical().values().to_vec(),
            u: state.u.components().iter().map(real).collect(),
            rho: real(&state.rho),
        }
    }

    pub fn to_state(&self) -> Result<State> {
        let g = Grid::new(self.header.dim, self.header.n)?;
        let real = |v: &[f64]| {
            ScalarField::from_data(&g, v.iter().map(|&x| C64::new(x, 0.0)).collect(), Repr::Physical)
        };
        let psi = ScalarField::from_data(&g, self.psi.clone(), Repr::Physical)?;
        let u = VectorField::from_components(self.u.iter().map(|c| real(c)).collect::<Result<_>>()?)?;
        State::new(self.header.t, psi, u, real(&self.rho)?)
    }

    fn payload(&self) -> Vec<u8> {
        let len = self.rho.len();
        let mut out = Vec::with_capacity(8 * len * (3 + self.u.len()));
        for v in &self.psi {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        for c in &self.u {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.rho {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&(h.dim as u32).to_le_bytes());
        out.extend_from_slice(&(h.n as u64).to_le_bytes());
        out.extend_from_slice(&h.t.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        let mut id = [0u8; 16];
        let src = h.scheme_id.as_bytes();
        id[..src.len().min(16)].copy_from_slice(&src[..src.len().min(16)]);
        out.extend_from_slice(&id);
        for v in param_array(&h.params) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&payload));
        debug_assert_eq!(out.len(), HEADER_LEN);
        out.extend_from_slice(&payload);
        out
    }

    /// Parse and verify a checkpoint image; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(fail(path, format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(fail(path, "not a checkpoint (bad magic)"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(fail(path, format!("unsupported format version {version}")));
        }
        let dim = u32_at(12) as usize;
        let n = u64_at(16) as usize;
        let grid = Grid::new(dim, n).map_err(|e| fail(path, e.to_string()))?;
        let id_raw = &bytes[40..56];
        let id_end = id_raw.iter().position(|&b| b == 0).unwrap_or(16);
        let scheme_id = String::from_utf8_lossy(&id_raw[..id_end]).into_owned();
        let pv: Vec<f64> = (0..8).map(|j| f64_at(56 + 8 * j)).collect();
        let params = Params {
            lambda: pv[0],
            mu: pv[1],
            nu: pv[2],
            alpha: pv[3],
            p: pv[4],
            m_i: pv[5],
            big_m_i: pv[6],
            m_f: pv[7],
        };
        let payload_len = u64_at(120) as usize;
        let len = grid.len();
        let expected = 8 * len * (3 + dim);
        if payload_len != expected {
            return Err(fail(path, format!("payload length {payload_len}, expected {expected}")));
        }
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != payload_len {
            return Err(fail(
                path,
                format!("payload has {} bytes, header declares {payload_len}", payload.len()),
            ));
        }
        if Sha256::digest(payload).as_slice() != &bytes[128..160] {
            return Err(fail(path, "checksum mismatch"));
        }
        let vals: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let psi = vals[..2 * len].chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        let u = (0..dim)
            .map(|a| vals[(2 + a) * len..(3 + a) * len].to_vec())
            .collect();
        let rho = vals[(2 + dim) * len..].to_vec();
        Ok(Checkpoint {
            header: CheckpointHeader {
                version,
                dim,
                n,
                t: f64_at(24),
                seed: u64_at(32),
                scheme_id,
                params,
            },
            psi,
            u,
            rho,
        })
    }

    /// Write to a temporary file beside `path`, then rename over it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }

    /// Refuse to continue a run whose grid, parameters or scheme differ from the
    /// checkpoint's, unless `force` is set.
    pub fn check_compatible(&self, dim: usize, n: usize, params: &Params, force: bool, path: &Path) -> Result<()> {
        if force {
            return Ok(());
        }
        let h = &self.header;
        if (h.dim, h.n) != (dim, n) {
            return Err(incompatible(
                path,
                format!("grid {}^{} does not match the configured {n}^{dim} (use --force to override)", h.n, h.dim),
            ));
        }
        if param_array(&h.params) != param_array(params) {
            return Err(incompatible(
                path,
                format!("parameters {:?} differ from the configured {params:?} (use --force to override)", h.params),
            ));
        }
        if h.scheme_id != SCHEME_ID {
            return Err(incompatible(
                path,
                format!("written by scheme {:?}, this build runs {SCHEME_ID:?} (use --force to override)", h.scheme_id),
            ));
        }
        Ok(())
    }
}

pub fn save_checkpoint(state: &State, params: &Params, seed: u64, path: &Path) -> Result<()> {
    Checkpoint::from_state(state, params, seed).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(State, CheckpointHeader)> {
    let c = Checkpoint::load(path)?;
    Ok((c.to_state()?, c.header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    fn sample() -> (State, Params) {
        let g = Grid::new(3, 8).unwrap();
        let mut s = oracles::random_state(&g, 4, 0.1);
        s.t = 1.25;
        (s, Params::default())
    }

    #[test]
    fn file_roundtrip_is_bitwise() {
        let (s, params) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let c = Checkpoint::from_state(&s, &params, 42);
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());
        assert_eq!(back.header.scheme_id, SCHEME_ID);
        let bytes = back.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 512 * 6);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.25);
    }

    #[test]
    fn state_roundtrip_to_round_off() {
        let (s, params) = sample();
        let r = Checkpoint::from_state(&s, &params, 0).to_state().unwrap();
        assert_eq!(r.t, s.t);
        let d = crate::spectral::norm_linf(&r.psi.add_scaled(C64::new(-1.0, 0.0), &s.psi).unwrap());
        assert!(d < 1e-15, "{d}");
        let d = crate::spectral::norm_linf(&r.rho.add_scaled(C64::new(-1.0, 0.0), &s.rho).unwrap());
        assert!(d < 1e-14, "{d}");
    }

    #[test]
    fn corruption_is_detected() {
        let (s, params) = sample();
        let mut bytes = Checkpoint::from_state(&s, &params, 0).to_bytes();
        let p = Path::new("x.ckpt");
        let last = bytes.len() - 3;
        bytes[last] ^= 0x10;
        let e = Checkpoint::from_bytes(&bytes, p).unwrap_err();
        assert!(e.to_string().contains("checksum"), "{e}");
        assert!(Checkpoint::from_bytes(&bytes[..100], p).is_err());
        let mut wrong_version = Checkpoint::from_state(&s, &params, 0).to_bytes();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version, p).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn mismatched_resume_refused_unless_forced() {
        let (s, params) = sample();
        let c = Checkpoint::from_state(&s, &params, 0);
        let p = Path::new("x.ckpt");
        c.check_compatible(3, 8, &params, false, p).unwrap();
        assert!(c.check_compatible(3, 16, &params, false, p).is_err());
        let other = Params { nu: 0.1, ..params };
        assert!(c.check_compatible(3, 8, &other, false, p).is_err());
        c.check_compatible(3, 16, &other, true, p).unwrap();
    }
}
