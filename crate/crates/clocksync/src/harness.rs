//! Parallel Monte-Carlo driver.
//!
//! Run `r` draws its topology from ChaCha8 stream `2r` and everything else
//! from stream `2r + 1` of the generator seeded with the experiment seed
//! (stream 0 for every topology when `new_topology_per_run` is off). Each
//! sweep point reuses the same streams, so points differ only in the swept
//! parameter. Results are collected in run order, which makes the output
//! independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use clocksync_core::experiment::{run_once, ExperimentConfig, RunOutput};

use crate::HarnessError;

pub fn run_rngs(seed: u64, run: usize, new_topology: bool) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut topo = ChaCha8Rng::seed_from_u64(seed);
    topo.set_stream(if new_topology { 2 * run as u64 } else { 0 });
    let mut rest = ChaCha8Rng::seed_from_u64(seed);
    rest.set_stream(2 * run as u64 + 1);
    (topo, rest)
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub sweep_value: Option<f64>,
    pub config: ExperimentConfig,
    /// One entry per run, in run order.
    pub runs: Vec<RunOutput>,
}

pub fn run_point(cfg: &ExperimentConfig) -> Vec<RunOutput> {
    (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let (mut topo, mut rng) = run_rngs(cfg.seed, run, cfg.new_topology_per_run);
            run_once(cfg, run, &mut topo, &mut rng)
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PointResult>, HarnessError> {
    Ok(cfg
        .points()?
        .into_iter()
        .map(|(sweep_value, config)| PointResult {
            sweep_value,
            runs: run_point(&config),
            config,
        })
        .collect())
}
