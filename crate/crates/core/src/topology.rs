//! Network graphs: masters, agents, undirected edges and node positions.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::Error;

pub type NodeId = usize;

/// Connected communication graph without master-master links.
///
/// Edges are stored once as `(i, j)` with `i < j`; the edge id is the
/// position in [`Topology::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<[f64; 2]>,
    is_master: Vec<bool>,
    edges: Vec<(NodeId, NodeId)>,
    neighbors: Vec<Vec<(NodeId, usize)>>,
}

impl Topology {
    /// Validates and builds a topology. Duplicate edges are merged and the
    /// edge list is sorted.
    pub fn new(
        positions: Vec<[f64; 2]>,
        masters: &[NodeId],
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, Error> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::InvalidTopology("need at least two nodes"));
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTopology("non-finite position"));
        }
        let mut is_master = vec![false; n];
        for &m in masters {
            if m >= n {
                return Err(Error::InvalidTopology("master id out of range"));
            }
            is_master[m] = true;
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidTopology("edge endpoint out of range"));
            }
            if a == b {
                return Err(Error::InvalidTopology("self-loop"));
            }
            if is_master[a] && is_master[b] {
                return Err(Error::InvalidTopology("master-master edge"));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        let mut neighbors = vec![Vec::new(); n];
        for (e, &(a, b)) in list.iter().enumerate() {
            neighbors[a].push((b, e));
            neighbors[b].push((a, e));
        }
        let topo = Self {
            positions,
            is_master,
            edges: list,
            neighbors,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidTopology("graph is not connected"));
        }
        Ok(topo)
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn is_master(&self, i: NodeId) -> bool {
        self.is_master[i]
    }

    pub fn masters(&self) -> Vec<NodeId> {
        (0..self.num_nodes()).filter(|&i| self.is_master[i]).collect()
    }

    pub fn agents(&self) -> Vec<NodeId> {
        (0..self.num_nodes()).filter(|&i| !self.is_master[i]).collect()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Neighbors of `i` as `(neighbor, edge id)`, in increasing neighbor order.
    pub fn neighbors(&self, i: NodeId) -> &[(NodeId, usize)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.neighbors[i].len()
    }

    pub fn position(&self, i: NodeId) -> [f64; 2] {
        self.positions[i]
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn distance(&self, i: NodeId, j: NodeId) -> f64 {
        let [xi, yi] = self.positions[i];
        let [xj, yj] = self.positions[j];
        libm::hypot(xi - xj, yi - yj)
    }

    pub fn edge_id(&self, i: NodeId, j: NodeId) -> Option<usize> {
        self.neighbors[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(_, e)| e)
    }

    /// Breadth-first hop counts from a set of sources.
    /// Unreachable nodes get `usize::MAX`.
    pub fn hop_distances(&self, sources: &[NodeId]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nodes()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.neighbors[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop distance of every node to its nearest master.
    pub fn hops_to_master(&self) -> Vec<usize> {
        self.hop_distances(&self.masters())
    }

    pub fn max_hops_to_master(&self) -> Option<usize> {
        if self.masters().is_empty() {
            return None;
        }
        self.hops_to_master().into_iter().max()
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.num_nodes()
    }

    fn is_connected(&self) -> bool {
        self.hop_distances(&[0]).iter().all(|&d| d != usize::MAX)
    }
}

/// Random geometric graph: nodes uniform on `[0, area]^2`, an edge whenever
/// two nodes are at most `radius` apart, master-master edges dropped.
/// Disconnected draws are discarded and resampled up to `max_attempts` times.
pub fn random_geometric<R: Rng + ?Sized>(
    n: usize,
    area: f64,
    radius: f64,
    masters: &[NodeId],
    max_attempts: usize,
    rng: &mut R,
) -> Result<Topology, Error> {
    if n < 2 {
        return Err(Error::InvalidTopology("need at least two nodes"));
    }
    if !(area > 0.0 && radius > 0.0) {
        return Err(Error::InvalidTopology("area and radius must be positive"));
    }
    if masters.iter().any(|&m| m >= n) {
        return Err(Error::InvalidTopology("master id out of range"));
    }
    for _ in 0..max_attempts {
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random::<f64>() * area, rng.random::<f64>() * area])
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = libm::hypot(
                    positions[i][0] - positions[j][0],
                    positions[i][1] - positions[j][1],
                );
                if d <= radius && !(masters.contains(&i) && masters.contains(&j)) {
                    edges.push((i, j));
                }
            }
        }
        match Topology::new(positions, masters, edges) {
            Ok(t) => return Ok(t),
            Err(Error::InvalidTopology("graph is not connected")) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::TopologyGenerationFailed(max_attempts))
}

/// `rows x cols` lattice with 4-neighbor connectivity and `spacing` meters
/// between adjacent nodes. Node `r * cols + c` sits at `(c, r) * spacing`;
/// the master is node 0 in the corner.
pub fn grid(rows: usize, cols: usize, spacing: f64) -> Result<Topology, Error> {
    if rows * cols < 2 {
        return Err(Error::InvalidTopology("grid needs at least two nodes"));
    }
    let mut positions = Vec::with_capacity(rows * cols);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            positions.push([c as f64 * spacing, r as f64 * spacing]);
            if c + 1 < cols {
                edges.push((id, id + 1));
            }
            if r + 1 < rows {
                edges.push((id, id + cols));
            }
        }
    }
    Topology::new(positions, &[0], edges)
}
