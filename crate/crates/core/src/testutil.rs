use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clock::ClockParams;
use crate::measurement::{network_schedule, sample_clocks, simulate_network, ClockDistribution, LinkDelayModel};
use crate::network::{EpochPolicy, NetworkModel};
use crate::prior::PriorConfig;
use crate::topology::{random_geometric, Topology};

pub const PRIOR: PriorConfig = PriorConfig {
    sigma_lambda_sq: 1e-8,
    sigma_nu_sq: 33.64,
};

pub fn simulate(
    topo: &Topology,
    sigma: f64,
    packets: usize,
    rng: &mut ChaCha8Rng,
) -> (NetworkModel, Vec<ClockParams>) {
    let dist = ClockDistribution {
        sigma_alpha_sq: 1e-8,
        phase_min: -10.0,
        phase_max: 10.0,
    };
    let clocks = sample_clocks(topo, &dist, rng);
    let delay = LinkDelayModel {
        t_c: 7.6e-6,
        speed: 299_792_458.0,
        sigma_w: sigma,
    };
    let sched = network_schedule(topo, packets, 0.01, 0.0, crate::measurement::LinkOrder::default());
    let meas = simulate_network(topo, &clocks, &delay, &sched, rng);
    let noise = if sigma > 0.0 { sigma } else { 93e-9 };
    let model = NetworkModel::build(topo, &meas, noise, &PRIOR, EpochPolicy::PerNode).unwrap();
    (model, clocks)
}

pub fn random_network(seed: u64) -> (Topology, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = random_geometric(26, 1000.0, 300.0, &[0], 10_000, &mut rng).unwrap();
    (topo, rng)
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}
