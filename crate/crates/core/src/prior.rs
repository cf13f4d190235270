//! Node priors: Gaussian for agents, a known value for masters.

use crate::clock::TransformedParams;
use crate::gauss::{GaussianNat, Mat2, Vec2};
use crate::topology::{NodeId, Topology};

/// Precision of the Gaussian stand-in for a master used by the dense solver
/// when masters are not conditioned on exactly.
pub const MASTER_SURROGATE_PRECISION: f64 = 1e12;

/// Variances of the agent prior around `[1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorConfig {
    /// Variance of `lambda`, taken equal to the skew variance.
    pub sigma_lambda_sq: f64,
    /// Variance of `nu`, in s^2.
    pub sigma_nu_sq: f64,
}

impl PriorConfig {
    pub fn agent(&self) -> GaussianNat {
        let p = Mat2::new(1.0 / self.sigma_lambda_sq, 0.0, 0.0, 1.0 / self.sigma_nu_sq);
        GaussianNat::new(p, p * Vec2::new(1.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodePrior {
    Agent(GaussianNat),
    Master(TransformedParams),
}

impl NodePrior {
    pub fn is_master(&self) -> bool {
        matches!(self, NodePrior::Master(_))
    }

    /// Prior expressed for the clock readings shifted by `-epoch`.
    pub fn shifted(&self, epoch: f64) -> Self {
        match self {
            NodePrior::Master(v) => NodePrior::Master(v.shifted(epoch)),
            NodePrior::Agent(g) => {
                let t = Mat2::new(1.0, 0.0, -epoch, 1.0);
                NodePrior::Agent(g.linear_transform(&t).expect("shear is invertible"))
            }
        }
    }

    /// Proper Gaussian version: agents unchanged, masters replaced by a
    /// Gaussian of the given precision centered on their value.
    pub fn surrogate(&self, precision: f64) -> GaussianNat {
        match self {
            NodePrior::Agent(g) => *g,
            NodePrior::Master(v) => {
                let p = Mat2::identity() * precision;
                GaussianNat::new(p, p * v.to_vector())
            }
        }
    }
}

pub fn prior_for(node: NodeId, topology: &Topology, cfg: &PriorConfig) -> NodePrior {
    if topology.is_master(node) {
        NodePrior::Master(TransformedParams::MASTER)
    } else {
        NodePrior::Agent(cfg.agent())
    }
}
