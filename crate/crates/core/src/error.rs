use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("clock skew must be positive and finite, got {0}")]
    InvalidSkew(f64),
    #[error("invalid link measurements between {node_i} and {node_j}: {reason}")]
    InvalidMeasurement {
        node_i: NodeId,
        node_j: NodeId,
        reason: &'static str,
    },
    #[error("link {node_i}-{node_j} carries no skew information")]
    DegenerateLink { node_i: NodeId, node_j: NodeId },
    #[error("factor message on link {node_i}-{node_j} is undefined")]
    DegenerateMessage { node_i: NodeId, node_j: NodeId },
    #[error("belief of node {0} has a singular precision matrix")]
    SingularBelief(NodeId),
    #[error("global posterior precision is not positive definite")]
    SingularPosterior,
    #[error("Fisher information matrix is not positive definite")]
    SingularFisher,
    #[error("invalid topology: {0}")]
    InvalidTopology(&'static str),
    #[error("no connected topology found after {0} attempts")]
    TopologyGenerationFailed(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
