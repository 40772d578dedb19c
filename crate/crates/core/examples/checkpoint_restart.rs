//! Save a state mid-run, reload it, continue, and compare with the uninterrupted run.

use pitaevskii::io::{Checkpoint, InitialSpec, RunConfig};
use pitaevskii::io::generate_initial;
use pitaevskii::timestepper::IntegratorConfig;
use pitaevskii::verify::restart_difference;
use pitaevskii::Grid;

fn main() -> pitaevskii::Result<()> {
    let cfg = RunConfig::default();
    let params = cfg.params;
    let g = Grid::new(3, 16)?;
    let spec = InitialSpec { seed: 42, ..cfg.initial };
    let init = generate_initial(&spec, &g, &params)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("state.ckpt");
    Checkpoint::from_state(&init.state, &params, spec.seed).save(&path)?;
    let back = Checkpoint::load(&path)?;
    println!(
        "checkpoint: {} bytes, scheme {}, t = {}, seed {}",
        std::fs::metadata(&path)?.len(),
        back.header.scheme_id,
        back.header.t,
        back.header.seed
    );

    let d = restart_difference(&init.state, &params, &IntegratorConfig::new(1e-3, &params), 0.05, 0.1, dir.path())?;
    println!("restart vs continuous run: relative difference {d:.2e}");
    Ok(())
}
