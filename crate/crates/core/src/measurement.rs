//! Two-way timestamp exchange: delay model, packet schedules and the
//! noisy measurement simulator.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::clock::ClockParams;
use crate::topology::{NodeId, Topology};
use crate::Error;

/// Deterministic link delay `t_c + distance / speed` plus Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDelayModel {
    pub t_c: f64,
    pub speed: f64,
    pub sigma_w: f64,
}

impl LinkDelayModel {
    pub fn delay(&self, distance: f64) -> f64 {
        self.t_c + distance / self.speed
    }
}

/// Deterministic delay of edge `edge` of `topology`.
pub fn propagation_delay(topology: &Topology, model: &LinkDelayModel, edge: usize) -> f64 {
    let (i, j) = topology.edges()[edge];
    model.delay(topology.distance(i, j))
}

/// All stamps exchanged over one link.
///
/// `fwd_tx` is read on the clock of `node_i`, `fwd_rx` on the clock of
/// `node_j`; the reverse direction is the mirror image.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkMeasurements {
    pub node_i: NodeId,
    pub node_j: NodeId,
    pub fwd_tx: Vec<f64>,
    pub fwd_rx: Vec<f64>,
    pub rev_tx: Vec<f64>,
    pub rev_rx: Vec<f64>,
}

impl LinkMeasurements {
    pub fn k_ij(&self) -> usize {
        self.fwd_tx.len()
    }

    pub fn k_ji(&self) -> usize {
        self.rev_tx.len()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let fail = |reason| Error::InvalidMeasurement {
            node_i: self.node_i,
            node_j: self.node_j,
            reason,
        };
        if self.fwd_tx.is_empty() || self.rev_tx.is_empty() {
            return Err(fail("each direction needs at least one packet"));
        }
        if self.fwd_tx.len() != self.fwd_rx.len() || self.rev_tx.len() != self.rev_rx.len() {
            return Err(fail("transmit and receive stamp counts differ"));
        }
        let all = [&self.fwd_tx, &self.fwd_rx, &self.rev_tx, &self.rev_rx];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(fail("non-finite stamp"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.fwd_tx) || !increasing(&self.rev_tx) {
            return Err(fail("transmit stamps must be strictly increasing"));
        }
        Ok(())
    }

    /// The same exchange seen from `node_j`.
    pub fn reversed(&self) -> Self {
        Self {
            node_i: self.node_j,
            node_j: self.node_i,
            fwd_tx: self.rev_tx.clone(),
            fwd_rx: self.rev_rx.clone(),
            rev_tx: self.fwd_tx.clone(),
            rev_rx: self.fwd_rx.clone(),
        }
    }

    /// Stamps re-expressed against per-clock epochs: readings of `node_i`
    /// lose `epoch_i`, readings of `node_j` lose `epoch_j`.
    pub fn shifted(&self, epoch_i: f64, epoch_j: f64) -> Self {
        let sub = |v: &[f64], e: f64| v.iter().map(|x| x - e).collect();
        Self {
            node_i: self.node_i,
            node_j: self.node_j,
            fwd_tx: sub(&self.fwd_tx, epoch_i),
            fwd_rx: sub(&self.fwd_rx, epoch_j),
            rev_tx: sub(&self.rev_tx, epoch_j),
            rev_rx: sub(&self.rev_rx, epoch_i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Reference transmit times of the packets of one link, in send order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeSchedule {
    pub packets: Vec<(Direction, f64)>,
}

impl ExchangeSchedule {
    /// Forward and reverse packets alternate, `spacing` seconds apart,
    /// starting with a forward packet at `start`. When one direction runs
    /// out the other continues alone.
    pub fn alternating(start: f64, spacing: f64, k_ij: usize, k_ji: usize) -> Self {
        let mut packets = Vec::with_capacity(k_ij + k_ji);
        let (mut f, mut r) = (0, 0);
        while f < k_ij || r < k_ji {
            let t = start + packets.len() as f64 * spacing;
            if f < k_ij && (f <= r || r >= k_ji) {
                packets.push((Direction::Forward, t));
                f += 1;
            } else {
                packets.push((Direction::Reverse, t));
                r += 1;
            }
        }
        Self { packets }
    }

    pub fn duration(&self, spacing: f64) -> f64 {
        self.packets.len() as f64 * spacing
    }

    pub fn times(&self, dir: Direction) -> impl Iterator<Item = f64> + '_ {
        self.packets
            .iter()
            .filter(move |(d, _)| *d == dir)
            .map(|&(_, t)| t)
    }
}

/// Simulates one link. A noise sample is drawn for every packet in send
/// order, so identical rng states give identical stamps.
pub fn simulate_link_exchange<R: Rng + ?Sized>(
    (node_i, theta_i): (NodeId, &ClockParams),
    (node_j, theta_j): (NodeId, &ClockParams),
    delta: f64,
    schedule: &ExchangeSchedule,
    sigma_w: f64,
    rng: &mut R,
) -> LinkMeasurements {
    let mut m = LinkMeasurements {
        node_i,
        node_j,
        fwd_tx: Vec::new(),
        fwd_rx: Vec::new(),
        rev_tx: Vec::new(),
        rev_rx: Vec::new(),
    };
    for &(dir, t0) in &schedule.packets {
        let z: f64 = rng.sample(StandardNormal);
        let t1 = t0 + delta + sigma_w * z;
        match dir {
            Direction::Forward => {
                m.fwd_tx.push(theta_i.local_time(t0));
                m.fwd_rx.push(theta_j.local_time(t1));
            }
            Direction::Reverse => {
                m.rev_tx.push(theta_j.local_time(t0));
                m.rev_rx.push(theta_i.local_time(t1));
            }
        }
    }
    m
}

/// Distribution of the true clocks of agent nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockDistribution {
    pub sigma_alpha_sq: f64,
    pub phase_min: f64,
    pub phase_max: f64,
}

/// Skew draws at or below this value are rejected.
pub const MIN_SKEW: f64 = 0.5;

/// Masters get the ideal clock; agents get `alpha ~ N(1, sigma_alpha^2)`
/// truncated to `alpha > 0.5` and `beta` uniform on the phase interval.
pub fn sample_clocks<R: Rng + ?Sized>(
    topology: &Topology,
    dist: &ClockDistribution,
    rng: &mut R,
) -> Vec<ClockParams> {
    let sd = libm::sqrt(dist.sigma_alpha_sq);
    (0..topology.num_nodes())
        .map(|i| {
            if topology.is_master(i) {
                return ClockParams::MASTER;
            }
            let alpha = loop {
                let z: f64 = rng.sample(StandardNormal);
                let a = 1.0 + sd * z;
                if a > MIN_SKEW {
                    break a;
                }
            };
            let u: f64 = rng.random();
            let beta = dist.phase_min + (dist.phase_max - dist.phase_min) * u;
            ClockParams { alpha, beta }
        })
        .collect()
}

/// Order in which the links of a network take turns on the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LinkOrder {
    /// Each link completes all its packets before the next link starts.
    Sequential,
    /// Round robin: every round, each link in edge-id order exchanges one
    /// forward and one reverse packet, so all links span the same interval.
    #[default]
    Interleaved,
}

/// Per-edge schedules on one reference timeline starting at `start`, with
/// consecutive packets on the channel `spacing` seconds apart.
pub fn network_schedule(
    topology: &Topology,
    packets: usize,
    spacing: f64,
    start: f64,
    order: LinkOrder,
) -> Vec<ExchangeSchedule> {
    let n_edges = topology.edges().len();
    match order {
        LinkOrder::Sequential => {
            let mut t = start;
            (0..n_edges)
                .map(|_| {
                    let s = ExchangeSchedule::alternating(t, spacing, packets, packets);
                    t += s.duration(spacing);
                    s
                })
                .collect()
        }
        LinkOrder::Interleaved => (0..n_edges)
            .map(|e| {
                let mut packets_e = Vec::with_capacity(2 * packets);
                for k in 0..packets {
                    let slot = (k * n_edges + e) * 2;
                    packets_e.push((Direction::Forward, start + slot as f64 * spacing));
                    packets_e.push((Direction::Reverse, start + (slot + 1) as f64 * spacing));
                }
                ExchangeSchedule { packets: packets_e }
            })
            .collect(),
    }
}

/// Simulates every link of the network. Returned measurements are oriented
/// like the topology edges (`node_i < node_j`).
pub fn simulate_network<R: Rng + ?Sized>(
    topology: &Topology,
    clocks: &[ClockParams],
    model: &LinkDelayModel,
    schedules: &[ExchangeSchedule],
    rng: &mut R,
) -> Vec<LinkMeasurements> {
    topology
        .edges()
        .iter()
        .zip(schedules)
        .enumerate()
        .map(|(e, (&(i, j), sched))| {
            let delta = propagation_delay(topology, model, e);
            simulate_link_exchange(
                (i, &clocks[i]),
                (j, &clocks[j]),
                delta,
                sched,
                model.sigma_w,
                rng,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_nodes(d: f64) -> Topology {
        Topology::new(vec![[0.0, 0.0], [d, 0.0]], &[0], [(0, 1)]).unwrap()
    }

    #[test]
    fn delay_examples() {
        let light = 299_792_458.0;
        let m = LinkDelayModel { t_c: 7.6e-6, speed: light, sigma_w: 1e-9 };
        let d = propagation_delay(&two_nodes(299.792458), &m, 0);
        assert!((d - 8.6e-6).abs() < 1e-18);
        let m0 = LinkDelayModel { t_c: 0.0, speed: light, sigma_w: 1e-9 };
        assert_eq!(propagation_delay(&two_nodes(0.0), &m0, 0), 0.0);
        assert_eq!(m.delay(123.0), m.delay(123.0));
    }

    #[test]
    fn exchange_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ideal = ClockParams::MASTER;
        let s = ExchangeSchedule { packets: vec![(Direction::Forward, 1.0)] };
        let m = simulate_link_exchange((0, &ideal), (1, &ideal), 0.0, &s, 0.0, &mut rng);
        assert_eq!(m.fwd_tx, vec![1.0]);
        assert_eq!(m.fwd_rx, vec![1.0]);

        let cj = ClockParams::new(2.0, 1.0).unwrap();
        let s = ExchangeSchedule { packets: vec![(Direction::Forward, 3.0)] };
        let m = simulate_link_exchange((0, &ideal), (1, &cj), 0.5, &s, 0.0, &mut rng);
        assert_eq!(m.fwd_rx, vec![8.0]);
    }

    #[test]
    fn exchange_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ci = ClockParams::new(1.00007, 3.2).unwrap();
        let cj = ClockParams::new(0.99991, -1.4).unwrap();
        let delta = 8.6e-6;
        let sigma = 93e-9;
        let s = ExchangeSchedule::alternating(0.0, 0.01, 5000, 5000);
        let m = simulate_link_exchange((0, &ci), (1, &cj), delta, &s, sigma, &mut rng);
        let mut w = Vec::new();
        for (tx, rx) in m.fwd_tx.iter().zip(&m.fwd_rx) {
            w.push(cj.reference_time(*rx) - ci.reference_time(*tx) - delta);
        }
        for (tx, rx) in m.rev_tx.iter().zip(&m.rev_rx) {
            w.push(ci.reference_time(*rx) - cj.reference_time(*tx) - delta);
        }
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = libm::sqrt(w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0));
        assert!((sd / sigma - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn network_orders_share_the_channel() {
        let topo = Topology::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], &[0], [(0, 1), (1, 2), (2, 3)]).unwrap();
        for order in [LinkOrder::Sequential, LinkOrder::Interleaved] {
            let sched = network_schedule(&topo, 4, 0.01, 1.0, order);
            let mut all: alloc::vec::Vec<f64> = sched.iter().flat_map(|s| s.packets.iter().map(|p| p.1)).collect();
            assert_eq!(all.len(), 24);
            all.sort_by(f64::total_cmp);
            assert!((all[0] - 1.0).abs() < 1e-12);
            for w in all.windows(2) {
                assert!((w[1] - w[0] - 0.01).abs() < 1e-9);
            }
            for s in &sched {
                let dirs: alloc::vec::Vec<Direction> = s.packets.iter().map(|p| p.0).collect();
                assert!(dirs.chunks(2).all(|c| c == [Direction::Forward, Direction::Reverse]));
            }
        }
        let inter = network_schedule(&topo, 4, 0.01, 0.0, LinkOrder::Interleaved);
        assert!((inter[2].packets[0].1 - 0.04).abs() < 1e-12);
        assert!((inter[0].packets[2].1 - 0.06).abs() < 1e-12);
    }

    #[test]
    fn schedule_alternates() {
        let s = ExchangeSchedule::alternating(2.0, 0.01, 3, 1);
        let dirs: Vec<_> = s.packets.iter().map(|p| p.0).collect();
        use Direction::*;
        assert_eq!(dirs, vec![Forward, Reverse, Forward, Forward]);
        assert!((s.packets[3].1 - 2.03).abs() < 1e-12);
        let s = ExchangeSchedule::alternating(0.0, 0.01, 2, 2);
        let dirs: Vec<_> = s.packets.iter().map(|p| p.0).collect();
        assert_eq!(dirs, vec![Forward, Reverse, Forward, Reverse]);
    }

    #[test]
    fn clocks_follow_distribution() {
        let n = 100_001;
        let pos = vec![[0.0, 0.0]; n];
        let topo = Topology::new(pos, &[0], (1..n).map(|i| (0, i))).unwrap();
        let dist = ClockDistribution { sigma_alpha_sq: 1e-8, phase_min: -10.0, phase_max: 10.0 };
        let clocks = sample_clocks(&topo, &dist, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(clocks[0], ClockParams::MASTER);
        let agents = &clocks[1..];
        let m = agents.len() as f64;
        let sd = |f: &dyn Fn(&ClockParams) -> f64| {
            let mean = agents.iter().map(f).sum::<f64>() / m;
            libm::sqrt(agents.iter().map(|c| (f(c) - mean) * (f(c) - mean)).sum::<f64>() / m)
        };
        assert!((sd(&|c| c.alpha) / 1e-4 - 1.0).abs() < 0.03);
        assert!(agents.iter().all(|c| (-10.0..=10.0).contains(&c.beta)));
        assert!((sd(&|c| c.beta) - 20.0 / libm::sqrt(12.0)).abs() < 0.05);
    }

    #[test]
    fn network_simulation_is_reproducible() {
        let topo = Topology::new(
            vec![[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]],
            &[0],
            [(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        let model = LinkDelayModel { t_c: 7.6e-6, speed: 3e8, sigma_w: 93e-9 };
        let dist = ClockDistribution { sigma_alpha_sq: 1e-8, phase_min: -10.0, phase_max: 10.0 };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let clocks = sample_clocks(&topo, &dist, &mut rng);
            let sched = network_schedule(&topo, 20, 0.01, 0.0, LinkOrder::Sequential);
            simulate_network(&topo, &clocks, &model, &sched, &mut rng)
        };
        let a = run();
        assert_eq!(a, run());
        for m in &a {
            m.validate().unwrap();
            assert_eq!((m.k_ij(), m.k_ji()), (20, 20));
        }
        let sched = network_schedule(&topo, 20, 0.01, 0.0, LinkOrder::Sequential);
        assert!((sched[2].packets[0].1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn noise_free_residual_vanishes() {
        let ci = ClockParams::new(1.0001, 4.0).unwrap();
        let cj = ClockParams::new(0.9998, -2.5).unwrap();
        let delta = 1.3e-6;
        let s = ExchangeSchedule::alternating(10.0, 0.01, 4, 4);
        let m = simulate_link_exchange((0, &ci), (1, &cj), delta, &s, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        for (tx, rx) in m.fwd_tx.iter().zip(&m.fwd_rx) {
            let psi = cj.alpha * ((tx - ci.beta) / ci.alpha + delta) + cj.beta;
            assert!((rx - psi).abs() < 1e-13 * rx.abs());
        }
    }

    #[test]
    fn validation() {
        let ok = LinkMeasurements {
            node_i: 0,
            node_j: 1,
            fwd_tx: vec![0.0, 1.0],
            fwd_rx: vec![0.1, 1.1],
            rev_tx: vec![0.5],
            rev_rx: vec![0.6],
        };
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.rev_tx.clear();
        bad.rev_rx.clear();
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.fwd_tx = vec![1.0, 0.0];
        assert!(bad.validate().is_err());
        assert_eq!(ok.reversed().reversed(), ok);
    }
}
