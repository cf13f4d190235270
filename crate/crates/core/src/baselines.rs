//! Competing distributed synchronizers used for comparison: average
//! consensus time sync (ATS), ADMM skew consensus, and loop-constrained
//! least squares (LC).
//!
//! ATS and ADMM steer virtual clocks `t_hat = hat_alpha * c + hat_beta` of
//! every node towards a common time scale and run their own broadcast
//! rounds. Both ignore the link delay. LC solves for absolute log-skews
//! and phases from pairwise estimates obtained from the same two-way
//! exchanges that the message passing algorithms use.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::clock::ClockParams;
use crate::measurement::LinkMeasurements;
use crate::topology::{NodeId, Topology};

/// Affine correction of a local clock reading into a common time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualClock {
    pub hat_alpha: f64,
    pub hat_beta: f64,
}

impl VirtualClock {
    pub const IDENTITY: Self = Self {
        hat_alpha: 1.0,
        hat_beta: 0.0,
    };

    pub fn time(&self, local: f64) -> f64 {
        self.hat_alpha * local + self.hat_beta
    }

    /// The clock estimate implied by treating virtual time as reference
    /// time.
    pub fn to_estimate(&self) -> ClockParams {
        ClockParams {
            alpha: 1.0 / self.hat_alpha,
            beta: -self.hat_beta / self.hat_alpha,
        }
    }
}

/// Relative clock parameters of node `i` with respect to node `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeObservation {
    /// `alpha_i / alpha_j`.
    pub alpha_ij: f64,
    /// `beta_i - beta_j`, seconds.
    pub beta_ij: f64,
}

impl RelativeObservation {
    pub fn reversed(&self) -> Self {
        Self {
            alpha_ij: 1.0 / self.alpha_ij,
            beta_ij: -self.beta_ij,
        }
    }
}

/// Relative skew accuracy of a PLL-grade observation.
pub const PLL_SKEW_ACCURACY: f64 = 0.5e-6;

/// True relative clock parameters with multiplicative skew noise of
/// standard deviation `accuracy`.
pub fn relative_skew_oracle<R: Rng + ?Sized>(
    theta_i: &ClockParams,
    theta_j: &ClockParams,
    accuracy: f64,
    rng: &mut R,
) -> RelativeObservation {
    let z: f64 = rng.sample(StandardNormal);
    RelativeObservation {
        alpha_ij: theta_i.alpha / theta_j.alpha * (1.0 + accuracy * z),
        beta_ij: theta_i.beta - theta_j.beta,
    }
}

/// Estimates of every node after some number of broadcasts.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    /// Packets sent so far, averaged over the nodes.
    pub broadcasts: f64,
    /// Reference time at which the snapshot was taken.
    pub time: f64,
    pub estimates: Vec<ClockParams>,
}

/// Environment shared by the broadcast-based baselines.
#[derive(Debug, Clone, Copy)]
pub struct BroadcastChannel<'a> {
    pub topology: &'a Topology,
    pub clocks: &'a [ClockParams],
    /// Deterministic delay of every edge.
    pub delays: &'a [f64],
    pub sigma_w: f64,
    /// Reference time of the first broadcast.
    pub start: f64,
    /// Time between two consecutive broadcasts on the channel.
    pub spacing: f64,
}

/// A broadcast as seen by one neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heard {
    pub from: NodeId,
    /// Sender's clock at transmission.
    pub tx_local: f64,
    /// Receiver's clock at reception.
    pub rx_local: f64,
}

impl BroadcastChannel<'_> {
    /// Reference send time of node `i` in round `round`; nodes take turns
    /// in id order.
    pub fn send_time(&self, round: usize, i: NodeId) -> f64 {
        self.start + (round * self.topology.num_nodes() + i) as f64 * self.spacing
    }

    /// Receptions of one broadcast of `i` at reference time `t`, one noise
    /// draw per neighbor in neighbor order.
    pub fn broadcast<R: Rng + ?Sized>(&self, i: NodeId, t: f64, rng: &mut R) -> Vec<(NodeId, Heard)> {
        let tx_local = self.clocks[i].local_time(t);
        self.topology
            .neighbors(i)
            .iter()
            .map(|&(j, e)| {
                let z: f64 = rng.sample(StandardNormal);
                let rx = t + self.delays[e] + self.sigma_w * z;
                (
                    j,
                    Heard {
                        from: i,
                        tx_local,
                        rx_local: self.clocks[j].local_time(rx),
                    },
                )
            })
            .collect()
    }

    fn end_of_round(&self, round: usize) -> f64 {
        self.send_time(round + 1, 0)
    }
}

// ---------------------------------------------------------------- ATS

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtsConfig {
    pub rho_eta: f64,
    pub rho_alpha: f64,
    pub rho_o: f64,
    pub rounds: usize,
}

impl Default for AtsConfig {
    fn default() -> Self {
        Self {
            rho_eta: 0.6,
            rho_alpha: 0.6,
            rho_o: 0.6,
            rounds: 600,
        }
    }
}

/// Per-node ATS state.
#[derive(Debug, Clone, PartialEq)]
pub struct AtsNode {
    pub clock: VirtualClock,
    /// Relative skew estimates `alpha_j / alpha_i`, per neighbor slot.
    pub eta: Vec<f64>,
    /// Last `(tx_local, rx_local)` pair heard from each neighbor.
    pub last: Vec<Option<(f64, f64)>>,
}

impl AtsNode {
    pub fn new(degree: usize) -> Self {
        Self {
            clock: VirtualClock::IDENTITY,
            eta: vec![1.0; degree],
            last: vec![None; degree],
        }
    }
}

/// Update of node state `me` on a packet from neighbor slot `k` whose
/// sender had virtual clock `sender` when transmitting.
pub fn ats_step(me: &mut AtsNode, k: usize, heard: &Heard, sender: &VirtualClock, cfg: &AtsConfig) {
    if let Some((tx0, rx0)) = me.last[k] {
        let (dtx, drx) = (heard.tx_local - tx0, heard.rx_local - rx0);
        if drx != 0.0 {
            me.eta[k] = cfg.rho_eta * me.eta[k] + (1.0 - cfg.rho_eta) * dtx / drx;
        }
        me.clock.hat_alpha = cfg.rho_alpha * me.clock.hat_alpha + (1.0 - cfg.rho_alpha) * me.eta[k] * sender.hat_alpha;
    }
    me.last[k] = Some((heard.tx_local, heard.rx_local));
    let gap = sender.time(heard.tx_local) - me.clock.time(heard.rx_local);
    me.clock.hat_beta += (1.0 - cfg.rho_o) * gap;
}

/// Runs ATS for `cfg.rounds` rounds. Every node broadcasts once per
/// round and receivers update immediately.
pub fn run_ats<R: Rng + ?Sized>(ch: &BroadcastChannel<'_>, cfg: &AtsConfig, rng: &mut R) -> Vec<Snapshot> {
    let topo = ch.topology;
    let n = topo.num_nodes();
    let mut nodes: Vec<AtsNode> = (0..n).map(|i| AtsNode::new(topo.degree(i))).collect();
    let mut out = Vec::with_capacity(cfg.rounds + 1);
    let snap = |nodes: &[AtsNode], it: usize, time: f64| Snapshot {
        iteration: it,
        broadcasts: it as f64,
        time,
        estimates: nodes.iter().map(|s| s.clock.to_estimate()).collect(),
    };
    out.push(snap(&nodes, 0, ch.start));
    for round in 0..cfg.rounds {
        for i in 0..n {
            let t = ch.send_time(round, i);
            let sender = nodes[i].clock;
            for (j, heard) in ch.broadcast(i, t, rng) {
                let k = slot_of(topo, j, i);
                ats_step(&mut nodes[j], k, &heard, &sender, cfg);
            }
        }
        out.push(snap(&nodes, round + 1, ch.end_of_round(round)));
    }
    out
}

fn slot_of(topo: &Topology, at: NodeId, other: NodeId) -> usize {
    topo.neighbors(at)
        .iter()
        .position(|&(j, _)| j == other)
        .expect("neighbors")
}

// ---------------------------------------------------------------- ADMM

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Penalty parameter of the skew consensus.
    pub step: f64,
    /// Broadcast rounds per iteration for offset measurements.
    pub inner: usize,
    pub iterations: usize,
    /// Accuracy of the relative skews, see [`relative_skew_oracle`].
    pub skew_accuracy: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            inner: 1,
            iterations: 300,
            skew_accuracy: PLL_SKEW_ACCURACY,
        }
    }
}

/// Per-node ADMM state. The virtual skew is `exp(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmNode {
    pub z: f64,
    pub dual: f64,
    pub hat_beta: f64,
}

impl AdmmNode {
    pub fn clock(&self) -> VirtualClock {
        VirtualClock {
            hat_alpha: libm::exp(self.z),
            hat_beta: self.hat_beta,
        }
    }
}

/// Primal update of the decentralized ADMM for
/// `min sum (w_i - log alpha_i)^2 / 2` subject to `w_i = w_j` on every
/// edge, with `w_i = z_i + log alpha_i`. Only differences `w_j - w_i` are
/// needed, which follow from the neighbors' `z_j` and the relative log
/// skews `r_ij = log(alpha_i / alpha_j)`. Returns the new `z_i`.
pub fn admm_step(me: &AdmmNode, neighbors: &[(f64, f64)], step: f64) -> f64 {
    let d = neighbors.len() as f64;
    let pull: f64 = neighbors.iter().map(|&(zj, r)| zj - me.z - r).sum();
    me.z + (-me.z - me.dual + step * pull) / (1.0 + 2.0 * step * d)
}

/// Dual update with the new primal values.
pub fn admm_dual(me: &AdmmNode, neighbors: &[(f64, f64)], step: f64) -> f64 {
    me.dual + step * neighbors.iter().map(|&(zj, r)| me.z - zj + r).sum::<f64>()
}

/// Runs ADMM skew consensus with average consensus on virtual time.
/// Relative skews are drawn once per directed pair before the first
/// iteration. Every iteration has `inner` broadcast rounds for offset
/// measurements and costs `2 * inner` packets per node.
pub fn run_admm<R: Rng + ?Sized>(ch: &BroadcastChannel<'_>, cfg: &AdmmConfig, rng: &mut R) -> Vec<Snapshot> {
    let topo = ch.topology;
    let n = topo.num_nodes();
    // r[i][k]: log(alpha_i / alpha_j) for the k-th neighbor j of i.
    let r: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            topo.neighbors(i)
                .iter()
                .map(|&(j, _)| libm::log(relative_skew_oracle(&ch.clocks[i], &ch.clocks[j], cfg.skew_accuracy, rng).alpha_ij))
                .collect()
        })
        .collect();
    let mut nodes = vec![AdmmNode { z: 0.0, dual: 0.0, hat_beta: 0.0 }; n];
    let mut out = Vec::with_capacity(cfg.iterations + 1);
    let per_iter = 2 * cfg.inner.max(1);
    let snap = |nodes: &[AdmmNode], it: usize, time: f64| Snapshot {
        iteration: it,
        broadcasts: (it * per_iter) as f64,
        time,
        estimates: nodes.iter().map(|s| s.clock().to_estimate()).collect(),
    };
    out.push(snap(&nodes, 0, ch.start));
    let mut round = 0;
    for it in 0..cfg.iterations {
        // Offset measurements: mean virtual time gap to every neighbor.
        let mut gap = vec![0.0; n];
        for _ in 0..cfg.inner.max(1) {
            let clocks: Vec<VirtualClock> = nodes.iter().map(|s| s.clock()).collect();
            let mut sums = vec![0.0; n];
            for i in 0..n {
                let t = ch.send_time(round, i);
                for (j, h) in ch.broadcast(i, t, rng) {
                    let w = 1.0 / (1.0 + topo.degree(i).max(topo.degree(j)) as f64);
                    sums[j] += w * (clocks[i].time(h.tx_local) - clocks[j].time(h.rx_local));
                }
            }
            for (g, s) in gap.iter_mut().zip(&sums) {
                *g += s / cfg.inner.max(1) as f64;
            }
            round += 1;
        }
        let view = |nodes: &[AdmmNode], i: NodeId| -> Vec<(f64, f64)> {
            topo.neighbors(i)
                .iter()
                .zip(&r[i])
                .map(|(&(j, _), &rij)| (nodes[j].z, rij))
                .collect()
        };
        let z_new: Vec<f64> = (0..n).map(|i| admm_step(&nodes[i], &view(&nodes, i), cfg.step)).collect();
        for (s, z) in nodes.iter_mut().zip(&z_new) {
            s.z = *z;
        }
        let duals: Vec<f64> = (0..n).map(|i| admm_dual(&nodes[i], &view(&nodes, i), cfg.step)).collect();
        for (i, s) in nodes.iter_mut().enumerate() {
            s.dual = duals[i];
            s.hat_beta += gap[i];
        }
        out.push(snap(&nodes, it + 1, ch.send_time(round, 0)));
    }
    out
}

// ---------------------------------------------------------------- LC

/// Pairwise clock relation `c_j = slope * c_i + offset` of a link,
/// estimated from two-way exchanges with a symmetric delay term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseRelation {
    pub slope: f64,
    pub offset: f64,
    /// Delay in units of the clock of `j`.
    pub delay: f64,
}

impl PairwiseRelation {
    /// `log(alpha_i / alpha_j)`.
    pub fn log_skew_ij(&self) -> f64 {
        -libm::log(self.slope)
    }

    /// Phase of `j` implied by the phase of `i`.
    pub fn phase_j(&self, beta_i: f64) -> f64 {
        self.slope * beta_i + self.offset
    }

    /// Phase of `i` implied by the phase of `j`.
    pub fn phase_i(&self, beta_j: f64) -> f64 {
        (beta_j - self.offset) / self.slope
    }
}

/// Least-squares fit of `c_j - c_i = (s - 1) c_i + o +- d` over forward
/// (`+`) and reverse (`-`) packets. `None` with fewer than three packets
/// or without two distinct times.
pub fn pairwise_relation(m: &LinkMeasurements) -> Option<PairwiseRelation> {
    let rows: Vec<(f64, f64, f64)> = m
        .fwd_tx
        .iter()
        .zip(&m.fwd_rx)
        .map(|(&x, &y)| (x, y, 1.0))
        .chain(m.rev_rx.iter().zip(&m.rev_tx).map(|(&x, &y)| (x, y, -1.0)))
        .collect();
    if rows.len() < 3 {
        return None;
    }
    let xm = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for &(x, y, sgn) in &rows {
        let a = Vector3::new(x - xm, 1.0, sgn);
        ata += a * a.transpose();
        aty += a * (y - x);
    }
    let p = ata.try_inverse()? * aty;
    let slope = 1.0 + p[0];
    Some(PairwiseRelation {
        slope,
        offset: p[1] - p[0] * xm,
        delay: p[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcConfig {
    /// Weight of the previous estimate in every update.
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for LcConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            iterations: 300,
        }
    }
}

/// Absolute estimate of one node: log-skew and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcEstimate {
    pub log_skew: f64,
    pub phase: f64,
}

/// One coordinate descent update of node `i`. `proposals` are the
/// `(log_skew, phase)` values implied by every initialized neighbor.
/// Returns `None` while no neighbor is initialized.
pub fn lc_step(current: Option<LcEstimate>, proposals: &[LcEstimate], lambda: f64) -> Option<LcEstimate> {
    if proposals.is_empty() {
        return current;
    }
    let k = proposals.len() as f64;
    let target = LcEstimate {
        log_skew: proposals.iter().map(|p| p.log_skew).sum::<f64>() / k,
        phase: proposals.iter().map(|p| p.phase).sum::<f64>() / k,
    };
    Some(match current {
        None => target,
        Some(c) => LcEstimate {
            log_skew: lambda * c.log_skew + (1.0 - lambda) * target.log_skew,
            phase: lambda * c.phase + (1.0 - lambda) * target.phase,
        },
    })
}

/// Runs LC from the pairwise relations of every edge (indexed by edge
/// id, oriented lower to higher id). Masters keep the reference clock; a
/// network without masters uses its lowest node id as the reference.
/// Nodes start without an estimate and adopt the first one their
/// neighbors imply. `measurement_packets` is the per-node count of the
/// exchanges the relations were estimated from; every iteration adds two
/// packets per node.
pub fn run_lc(
    topology: &Topology,
    relations: &[PairwiseRelation],
    measurement_packets: &[usize],
    cfg: &LcConfig,
) -> Vec<Snapshot> {
    let n = topology.num_nodes();
    let mut anchors = topology.masters();
    if anchors.is_empty() {
        anchors.push(0);
    }
    let mut est: Vec<Option<LcEstimate>> = vec![None; n];
    for &a in &anchors {
        est[a] = Some(LcEstimate { log_skew: 0.0, phase: 0.0 });
    }
    let base = measurement_packets.iter().sum::<usize>() as f64 / n as f64;
    let to_clock = |e: &Option<LcEstimate>| match e {
        Some(e) => ClockParams {
            alpha: libm::exp(e.log_skew),
            beta: e.phase,
        },
        None => ClockParams::MASTER,
    };
    let snap = |est: &[Option<LcEstimate>], it: usize| Snapshot {
        iteration: it,
        broadcasts: base + 2.0 * it as f64,
        time: 0.0,
        estimates: est.iter().map(to_clock).collect(),
    };
    let mut out = vec![snap(&est, 0)];
    for it in 0..cfg.iterations {
        let prev = est.clone();
        for i in 0..n {
            if anchors.contains(&i) {
                continue;
            }
            let proposals: Vec<LcEstimate> = topology
                .neighbors(i)
                .iter()
                .filter_map(|&(j, e)| {
                    let pj = prev[j]?;
                    let rel = &relations[e];
                    Some(if i < j {
                        // relation maps i to j
                        LcEstimate {
                            log_skew: pj.log_skew + rel.log_skew_ij(),
                            phase: rel.phase_i(pj.phase),
                        }
                    } else {
                        LcEstimate {
                            log_skew: pj.log_skew - rel.log_skew_ij(),
                            phase: rel.phase_j(pj.phase),
                        }
                    })
                })
                .collect();
            est[i] = lc_step(prev[i], &proposals, cfg.lambda);
        }
        out.push(snap(&est, it + 1));
    }
    out
}
