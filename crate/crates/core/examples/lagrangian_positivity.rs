//! Particles along the normal-fluid flow: the density they carry, and the chain of
//! bounds that keeps ρ above the floor.

use pitaevskii::io::{generate_initial, RunConfig};
use pitaevskii::lagrangian::{positivity_criteria, ParticleSet};
use pitaevskii::timestepper::{run, IntegratorConfig};
use pitaevskii::Grid;

fn main() -> pitaevskii::Result<()> {
    let cfg = RunConfig::default();
    let params = cfg.params;
    let g = Grid::new(3, 16)?;
    let init = generate_initial(&cfg.initial, &g, &params)?;
    let icfg = IntegratorConfig::new(1e-3, &params);

    let mut particles = ParticleSet::seeded(&init.state, 4)?;
    let end = run(&init.state, &params, &icfg, 0.5, 10, |s| {
        particles.observe(s, &params, icfg.eval_options())
    })?;

    let gap = particles
        .reconstruct_density(&end)?
        .iter()
        .map(|(p, s)| (p - s).abs())
        .fold(0.0, f64::max);
    println!("{} particles; max |rho along path - rho on grid| = {gap:.2e}", particles.len());
    println!("cell-volume statistic {:.6}", particles.volume_statistic()?);

    let r = positivity_criteria(&particles, &params, 1e-8);
    println!("global criterion  {:.3e}  (margin m_i - m_f = {})", r.global_criterion, r.margin);
    println!("worst particle    {:.3e}", r.per_particle_worst);
    println!("observed drop     {:.3e}", r.observed_drop);
    println!("min rho {:.6} > m_f = {}: {}", r.min_rho, r.m_f, r.above_floor);
    Ok(())
}
