//! The assembled estimation problem: one factor per edge and one prior per
//! node, all in per-node shifted time coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::clock::ClockParams;
use crate::gauss::Vec2;
use crate::link::LinkMatrices;
use crate::measurement::LinkMeasurements;
use crate::prior::{prior_for, NodePrior, PriorConfig};
use crate::topology::{NodeId, Topology};
use crate::Error;

/// Time origin used for the readings of each clock.
///
/// Timestamps of several seconds carry nanosecond noise, so the normal
/// equations lose digits when built from raw readings. Subtracting a
/// per-node epoch is an exact reparameterization `nu' = nu - e * lambda`
/// that keeps every factor consistent across the links a node shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EpochPolicy {
    /// Raw readings.
    None,
    /// Earliest reading of each clock becomes its origin.
    #[default]
    PerNode,
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub topology: Topology,
    /// One factor per edge, oriented from the lower node id.
    pub links: Vec<LinkMatrices>,
    /// The same factors oriented from the higher node id.
    pub links_rev: Vec<LinkMatrices>,
    /// Priors in shifted coordinates.
    pub priors: Vec<NodePrior>,
    pub epochs: Vec<f64>,
    /// Measurement packets transmitted by each node.
    pub packets_sent: Vec<usize>,
}

impl NetworkModel {
    /// `measurements[e]` must describe edge `e`, in either orientation.
    pub fn build(
        topology: &Topology,
        measurements: &[LinkMeasurements],
        sigma_w: f64,
        prior: &PriorConfig,
        policy: EpochPolicy,
    ) -> Result<Self, Error> {
        if measurements.len() != topology.edges().len() {
            return Err(Error::InvalidConfig("one measurement set per edge required"));
        }
        let n = topology.num_nodes();
        let mut oriented = Vec::with_capacity(measurements.len());
        for (m, &(i, j)) in measurements.iter().zip(topology.edges()) {
            if (m.node_i, m.node_j) == (i, j) {
                oriented.push(m.clone());
            } else if (m.node_j, m.node_i) == (i, j) {
                oriented.push(m.reversed());
            } else {
                return Err(Error::InvalidConfig("measurement does not match its edge"));
            }
        }
        let mut epochs = vec![0.0; n];
        if policy == EpochPolicy::PerNode {
            let mut first = vec![f64::INFINITY; n];
            for m in &oriented {
                let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
                first[m.node_i] = first[m.node_i].min(lo(&m.fwd_tx)).min(lo(&m.rev_rx));
                first[m.node_j] = first[m.node_j].min(lo(&m.fwd_rx)).min(lo(&m.rev_tx));
            }
            for (e, f) in epochs.iter_mut().zip(first) {
                if f.is_finite() {
                    *e = f;
                }
            }
        }
        let mut packets_sent = vec![0; n];
        let mut links = Vec::with_capacity(oriented.len());
        for m in &oriented {
            packets_sent[m.node_i] += m.k_ij();
            packets_sent[m.node_j] += m.k_ji();
            let shifted = m.shifted(epochs[m.node_i], epochs[m.node_j]);
            links.push(LinkMatrices::build(&shifted, sigma_w)?);
        }
        let links_rev = links.iter().map(LinkMatrices::reversed).collect();
        let priors = (0..n)
            .map(|i| prior_for(i, topology, prior).shifted(epochs[i]))
            .collect();
        Ok(Self {
            topology: topology.clone(),
            links,
            links_rev,
            priors,
            epochs,
            packets_sent,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    /// Factor of `edge` oriented from node `i`.
    pub fn oriented(&self, i: NodeId, edge: usize) -> &LinkMatrices {
        if self.topology.edges()[edge].0 == i {
            &self.links[edge]
        } else {
            &self.links_rev[edge]
        }
    }

    /// Known shifted parameters of a master node.
    pub fn master_value(&self, i: NodeId) -> Option<Vec2> {
        match self.priors[i] {
            NodePrior::Master(v) => Some(v.to_vector()),
            NodePrior::Agent(_) => None,
        }
    }

    /// Clock parameters from a shifted `[lambda, nu']` estimate of node `i`.
    pub fn clock_estimate(&self, i: NodeId, mean: &Vec2) -> Result<ClockParams, Error> {
        extract_clock_estimate(mean, self.epochs[i])
    }
}

/// `alpha = 1/lambda`, `beta = nu/lambda` after undoing the epoch shift.
pub fn extract_clock_estimate(mean: &Vec2, epoch: f64) -> Result<ClockParams, Error> {
    let (lambda, nu) = (mean[0], mean[1]);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidSkew(lambda));
    }
    ClockParams::new(1.0 / lambda, nu / lambda + epoch)
}
