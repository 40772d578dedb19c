//! Run configuration: a TOML file with `[grid]`, `[params]`, `[integrator]`,
//! `[initial]` and `[output]` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Params;
use crate::timestepper::IntegratorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: f64,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Time between diagnostic records; a whole number of base steps.
    pub output_every: f64,
    /// Defaults to `m_f/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_floor: Option<f64>,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_cfl_safety() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    PlaneWave,
    RandomSmooth,
    FromCheckpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub mode: InitialMode,
    /// Plane wave: `|A|`. Random: `‖ψ₀‖_{L²}`.
    #[serde(default)]
    pub amplitude: f64,
    /// Random: `‖u₀‖_{L²}`.
    #[serde(default)]
    pub velocity_amplitude: f64,
    /// Largest frequency (per axis) carried by random data; at most `n/4`.
    #[serde(default = "default_cutoff")]
    pub cutoff: i64,
    #[serde(default)]
    pub seed: u64,
    /// Mean initial density.
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    /// Random: relative amplitude of the density fluctuation about `rho0`.
    #[serde(default)]
    pub rho_fluctuation: f64,
    /// Plane wave: integer frequency vector.
    #[serde(default)]
    pub wavevector: [i64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

fn default_cutoff() -> i64 {
    4
}

fn default_rho0() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for all outputs; relative paths below are resolved against it.
    pub directory: PathBuf,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: PathBuf,
    #[serde(default = "default_checkpoint")]
    pub checkpoint: PathBuf,
    /// Particle report; omitted means no particles are tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<PathBuf>,
    #[serde(default = "default_lattice")]
    pub particle_lattice: usize,
    /// Base steps between particle updates.
    #[serde(default = "default_particle_stride")]
    pub particle_stride: usize,
}

fn default_diagnostics() -> PathBuf {
    "diagnostics.csv".into()
}

fn default_checkpoint() -> PathBuf {
    "final.ckpt".into()
}

fn default_lattice() -> usize {
    8
}

fn default_particle_stride() -> usize {
    10
}

impl OutputSpec {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.directory.join(p)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: Params,
    pub integrator: IntegratorSpec,
    pub initial: InitialSpec,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec { dim: 3, n: 32 },
            params: Params::default(),
            integrator: IntegratorSpec {
                dt: 1e-3,
                cfl_safety: default_cfl_safety(),
                t_end: 5.0,
                output_every: 0.01,
                density_floor: None,
                dealias: true,
            },
            initial: InitialSpec {
                mode: InitialMode::RandomSmooth,
                amplitude: 4e-4,
                velocity_amplitude: 4e-3,
                cutoff: default_cutoff(),
                seed: 1,
                rho0: default_rho0(),
                rho_fluctuation: 0.05,
                wavevector: [0; 3],
                checkpoint: None,
            },
            output: OutputSpec {
                directory: "out".into(),
                diagnostics: default_diagnostics(),
                checkpoint: default_checkpoint(),
                particles: Some("particles.csv".into()),
                particle_lattice: default_lattice(),
                particle_stride: default_particle_stride(),
            },
        }
    }
}

/// Line (1-based) of `key` inside `[section]`, for pointing at a bad value.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') && l.ends_with(']') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        } else if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn field_error(src: Option<&str>, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    let at = src
        .and_then(|s| locate(s, section, key))
        .map(|l| format!("line {l}: "))
        .unwrap_or_default();
    Error::Config(format!("{at}{section}.{key}: {msg}"))
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check(Some(src))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.check(None)
    }

    fn check(&self, src: Option<&str>) -> Result<()> {
        let err = |section: &str, key: &str, msg: String| field_error(src, section, key, msg);
        let g = &self.grid;
        if !(2..=3).contains(&g.dim) {
            return Err(err("grid", "dim", format!("{} must be 2 or 3", g.dim)));
        }
        if g.n < 8 || !g.n.is_power_of_two() {
            return Err(err("grid", "n", format!("{} must be a power of two, at least 8", g.n)));
        }
        if let Err(Error::InvalidParams(m)) = self.params.validate() {
            let key = if m.starts_with("need m_f") {
                "m_f".to_string()
            } else if m.starts_with("need m_i") {
                "M_i".to_string()
            } else {
                m.split(" =").next().unwrap_or_default().to_string()
            };
            return Err(err("params", &key, m));
        }
        let it = &self.integrator;
        let positive = [("dt", it.dt), ("t_end", it.t_end), ("output_every", it.output_every)];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err("integrator", k, format!("{v} must be positive")));
            }
        }
        if !(it.cfl_safety > 0.0 && it.cfl_safety <= 1.0) {
            return Err(err("integrator", "cfl_safety", format!("{} must lie in (0, 1]", it.cfl_safety)));
        }
        let ratio = it.output_every / it.dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(err(
                "integrator",
                "output_every",
                format!("{} must be a positive multiple of dt = {}", it.output_every, it.dt),
            ));
        }
        if let Some(f) = it.density_floor {
            if !(f > 0.0 && f < self.params.m_f) {
                return Err(err("integrator", "density_floor", format!("{f} must lie in (0, m_f)")));
            }
        }
        let ini = &self.initial;
        for (k, v) in [
            ("amplitude", ini.amplitude),
            ("velocity_amplitude", ini.velocity_amplitude),
            ("rho_fluctuation", ini.rho_fluctuation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(err("initial", k, format!("{v} must be non-negative")));
            }
        }
        if ini.mode == InitialMode::RandomSmooth && !(ini.cutoff >= 1 && 4 * ini.cutoff <= g.n as i64) {
            return Err(err("initial", "cutoff", format!("{} must lie in [1, n/4]", ini.cutoff)));
        }
        if ini.mode == InitialMode::FromCheckpoint && ini.checkpoint.is_none() {
            return Err(err("initial", "checkpoint", "required for mode from_checkpoint".into()));
        }
        if ini.mode == InitialMode::PlaneWave {
            let half = g.n as i64 / 2;
            if ini.wavevector[..g.dim].iter().any(|f| f.abs() >= half) || ini.wavevector[g.dim..].iter().any(|&f| f != 0) {
                return Err(err("initial", "wavevector", format!("{:?} is not resolved on the grid", ini.wavevector)));
            }
        }
        let o = &self.output;
        if o.particles.is_some() && (o.particle_lattice == 0 || g.n % o.particle_lattice != 0) {
            return Err(err("output", "particle_lattice", format!("{} must divide n", o.particle_lattice)));
        }
        if o.particle_stride == 0 {
            return Err(err("output", "particle_stride", "must be positive".into()));
        }
        Ok(())
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let mut c = IntegratorConfig::new(self.integrator.dt, &self.params);
        c.cfl_safety = self.integrator.cfl_safety;
        c.dealias = self.integrator.dealias;
        if let Some(f) = self.integrator.density_floor {
            c.density_floor = f;
        }
        c
    }

    /// Base steps between diagnostic records.
    pub fn output_stride(&self) -> usize {
        (self.integrator.output_every / self.integrator.dt).round().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        assert!(text.contains("M_i = 1.1"));
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(cfg.output_stride(), 10);
    }

    #[test]
    fn floor_above_initial_bound_points_at_the_field() {
        let text = RunConfig::default().to_toml_string().replace("m_f = 0.5", "m_f = 0.95");
        let e = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        let line = text.lines().position(|l| l.starts_with("m_f")).unwrap() + 1;
        assert!(e.contains(&format!("line {line}")) && e.contains("params.m_f"), "{e}");
    }

    #[test]
    fn syntax_and_unknown_keys_are_config_errors() {
        let text = RunConfig::default().to_toml_string();
        let bad = text.replace("dt = 0.001", "dt = ");
        assert!(matches!(RunConfig::from_toml_str(&bad), Err(Error::Config(m)) if m.contains("line")));
        let unknown = text.replace("[grid]", "[grid]\nsize = 3");
        assert!(matches!(RunConfig::from_toml_str(&unknown), Err(Error::Config(m)) if m.contains("size")));
    }

    #[test]
    fn output_every_must_be_a_multiple_of_dt() {
        let text = RunConfig::default()
            .to_toml_string()
            .replace("output_every = 0.01", "output_every = 0.0125");
        let e = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("integrator.output_every"), "{e}");
    }

    #[test]
    fn cutoff_limited_to_quarter_grid() {
        let mut cfg = RunConfig::default();
        cfg.initial.cutoff = 9;
        assert!(cfg.validate().is_err());
        cfg.initial.cutoff = 8;
        cfg.validate().unwrap();
    }
}
