//! Gaussian belief propagation and mean-field message passing on the
//! per-edge factor graph.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::clock::ClockParams;
use nalgebra::DMatrix;

use crate::gauss::{sqrt_psd, symmetrize, GaussianNat, Mat2, Vec2};
use crate::link::LinkMatrices;
use crate::network::NetworkModel;
use crate::posterior::Marginal;
use crate::prior::NodePrior;
use crate::topology::NodeId;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Algorithm {
    #[default]
    Bp,
    Mf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Schedule {
    /// Every agent updates in every iteration from the previous snapshot.
    #[default]
    Parallel,
    /// Agents join one iteration after the first of their neighbors did,
    /// starting from the masters (or the initiator).
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncConfig {
    pub algorithm: Algorithm,
    pub schedule: Schedule,
    pub max_iter: usize,
    /// Stop when no belief mean moves more than this (max norm).
    pub tol: f64,
    /// Weight of the freshly computed update; 1 disables damping.
    pub damping: f64,
    /// Starting agent of the serial schedule in networks without masters;
    /// the lowest id when unset.
    pub initiator: Option<NodeId>,
    /// Record per-iteration trace rows.
    pub trace: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Bp,
            schedule: Schedule::Parallel,
            max_iter: 100,
            tol: 1e-9,
            damping: 1.0,
            initiator: None,
            trace: false,
        }
    }
}

/// Messages and beliefs between iterations. Directed slot `2e` belongs to
/// the lower-id end of edge `e`, slot `2e + 1` to the higher-id end:
/// extrinsic messages are stored at the sender's slot, intrinsic messages
/// at the receiver's slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub bp_extrinsic: Vec<GaussianNat>,
    pub bp_intrinsic: Vec<GaussianNat>,
    pub mf_beliefs: Vec<GaussianNat>,
    pub iteration: usize,
}

/// One node in one iteration, in unshifted transformed coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub node: NodeId,
    pub mean_lambda: f64,
    pub mean_nu: f64,
    pub var_lambda: f64,
    pub var_nu: f64,
    pub mean_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    /// Final beliefs in the model's shifted coordinates; `None` for masters.
    pub beliefs: Vec<Option<GaussianNat>>,
    /// Final beliefs in moment form, shifted coordinates; `None` for masters.
    pub marginals: Vec<Option<Marginal>>,
    /// Clock estimates of every node; masters report their known clock.
    pub estimates: Vec<ClockParams>,
    pub trace: Vec<TraceRow>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Packets sent per node: measurement packets plus one per iteration
    /// in which the node emitted a message.
    pub broadcasts: Vec<usize>,
    /// Network-wide packet total before the first iteration and after each
    /// iteration.
    pub broadcast_history: Vec<usize>,
    /// Largest belief-mean change of each iteration, starting at iteration 1.
    pub changes: Vec<f64>,
    pub state: MessageState,
}

#[derive(Clone, PartialEq, thiserror::Error)]
pub enum SyncError {
    #[error("no convergence within {} iterations", .0.iterations_run)]
    NotConverged(Box<SyncResult>),
    #[error(transparent)]
    Model(#[from] Error),
}

impl core::fmt::Debug for SyncError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SyncError::NotConverged(r) => write!(
                f,
                "NotConverged {{ iterations_run: {}, last_change: {:?} }}",
                r.iterations_run,
                r.changes.last()
            ),
            SyncError::Model(e) => write!(f, "Model({e:?})"),
        }
    }
}

impl SyncError {
    /// The partial result of a run that hit the iteration limit.
    pub fn partial(&self) -> Option<&SyncResult> {
        match self {
            SyncError::NotConverged(r) => Some(r),
            SyncError::Model(_) => None,
        }
    }
}

/// Message from the factor of `lm` (oriented from the receiving node) given
/// the extrinsic message of the other end.
///
/// Equivalent to the Schur complement
/// `(A^T A - A^T B (B^T B + sigma^2 Λ_ext)^-1 B^T A) / sigma^2` with
/// information `-A^T B (B^T B + sigma^2 Λ_ext)^-1 h_ext`, but evaluated by an
/// orthogonal factorization of the stacked system
/// `[B A 0; L 0 y]` (`L^T L = sigma^2 Λ_ext`, `L^T y = sigma^2 h_ext`).
/// Forming the normal equations instead cancels almost all digits: the
/// columns of `A` and `B` nearly coincide up to sign, so the complement is
/// many orders of magnitude below `A^T A`. Rank-deficient inputs (a single
/// packet per direction, an uninformative `Λ_ext`) need no special case.
pub fn bp_factor_to_variable(lm: &LinkMatrices, ext_j: &GaussianNat) -> Result<GaussianNat, Error> {
    let sigma = lm.sigma_w;
    let a = lm.a_mat();
    let b = lm.b_mat();
    let rows = a.nrows();
    let r = sqrt_psd(&symmetrize(&ext_j.precision));
    // Pseudo-observation rows of the extrinsic message: R^T y = sigma h.
    let mut prior_rows: [(Vec2, f64); 2] = [(Vec2::zeros(), 0.0); 2];
    let mut n_prior = 0;
    let g = ext_j.info * sigma;
    let y1 = if r[(0, 0)] > 0.0 { g[0] / r[(0, 0)] } else { 0.0 };
    if r[(0, 0)] > 0.0 {
        prior_rows[n_prior] = (Vec2::new(r[(0, 0)], r[(0, 1)]) * sigma, y1);
        n_prior += 1;
    }
    if r[(1, 1)] > 0.0 {
        let y2 = (g[1] - r[(0, 1)] * y1) / r[(1, 1)];
        prior_rows[n_prior] = (Vec2::new(0.0, r[(1, 1)]) * sigma, y2);
        n_prior += 1;
    }
    let total = rows + n_prior;
    if total == 0 || (b.norm() == 0.0 && n_prior == 0) {
        return Err(Error::DegenerateMessage {
            node_i: lm.node_i,
            node_j: lm.node_j,
        });
    }
    let mut m = DMatrix::<f64>::zeros(total.max(5), 5);
    for k in 0..rows {
        m[(k, 0)] = b[(k, 0)];
        m[(k, 1)] = b[(k, 1)];
        m[(k, 2)] = a[(k, 0)];
        m[(k, 3)] = a[(k, 1)];
    }
    for (k, (row, y)) in prior_rows.iter().take(n_prior).enumerate() {
        m[(rows + k, 0)] = row[0];
        m[(rows + k, 1)] = row[1];
        m[(rows + k, 4)] = *y;
    }
    let rr = m.qr().r();
    let r22 = Mat2::new(rr[(2, 2)], rr[(2, 3)], rr[(3, 2)], rr[(3, 3)]);
    let z2 = Vec2::new(rr[(2, 4)], rr[(3, 4)]);
    let s2 = sigma * sigma;
    Ok(GaussianNat::new(
        symmetrize(&(r22.transpose() * r22)) / s2,
        r22.transpose() * z2 / s2,
    ))
}

/// Message from a factor whose other end is a master with known value.
pub fn bp_factor_from_master(lm: &LinkMatrices, master_value: &Vec2) -> GaussianNat {
    mf_factor_to_variable(lm, master_value)
}

/// Product of the prior with every incoming message except the target's.
pub fn bp_variable_to_factor<'a>(
    prior: &GaussianNat,
    incoming: impl IntoIterator<Item = &'a GaussianNat>,
) -> GaussianNat {
    incoming.into_iter().fold(*prior, |acc, m| acc + *m)
}

/// Product of the prior with all incoming messages.
pub fn bp_belief<'a>(
    node: NodeId,
    prior: &GaussianNat,
    incoming: impl IntoIterator<Item = &'a GaussianNat>,
) -> Result<GaussianNat, Error> {
    let b = bp_variable_to_factor(prior, incoming);
    match b.mean() {
        Some(_) => Ok(b),
        None => Err(Error::SingularBelief(node)),
    }
}

/// Mean-field message given the current belief mean of the other end.
pub fn mf_factor_to_variable(lm: &LinkMatrices, neighbor_mean: &Vec2) -> GaussianNat {
    let s2 = lm.sigma_w * lm.sigma_w;
    GaussianNat::new(lm.ata() / s2, -(lm.atb() * neighbor_mean) / s2)
}

/// Same additive rule as [`bp_belief`].
pub fn mf_belief<'a>(
    node: NodeId,
    prior: &GaussianNat,
    incoming: impl IntoIterator<Item = &'a GaussianNat>,
) -> Result<GaussianNat, Error> {
    bp_belief(node, prior, incoming)
}

fn slot(model: &NetworkModel, edge: usize, node: NodeId) -> usize {
    if model.topology.edges()[edge].0 == node {
        2 * edge
    } else {
        2 * edge + 1
    }
}

/// Moments of a shifted belief mapped back to `[lambda, nu]`.
fn unshift(mean: &Vec2, cov: &Mat2, epoch: f64) -> (Vec2, Mat2) {
    let t = Mat2::new(1.0, 0.0, epoch, 1.0);
    (t * mean, t * cov * t.transpose())
}

pub fn run_sync(model: &NetworkModel, cfg: &SyncConfig) -> Result<SyncResult, SyncError> {
    let topo = &model.topology;
    let n = topo.num_nodes();
    let n_slots = 2 * topo.edges().len();
    let agents = topo.agents();
    if agents.is_empty() {
        return Err(Error::InvalidConfig("network has no agents").into());
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::InvalidConfig("damping must lie in (0, 1]").into());
    }

    // Iteration from which each node's payload is available to neighbors,
    // and the first iteration in which each agent updates.
    let masters = topo.masters();
    let initiator = if masters.is_empty() {
        Some(cfg.initiator.unwrap_or(agents[0]))
    } else {
        None
    };
    let (emits_from, active_from): (Vec<usize>, Vec<usize>) = match cfg.schedule {
        Schedule::Parallel => (vec![0; n], vec![1; n]),
        Schedule::Serial => {
            let sources = match initiator {
                Some(s) => vec![s],
                None => masters.clone(),
            };
            let hop = topo.hop_distances(&sources);
            (hop.clone(), hop.iter().map(|&h| h.max(1)).collect())
        }
    };
    let last_activation = agents.iter().map(|&i| active_from[i]).max().unwrap_or(1);

    let prior_of = |i: NodeId| match model.priors[i] {
        NodePrior::Agent(g) => g,
        NodePrior::Master(_) => unreachable!("masters have no density"),
    };

    let mut state = MessageState {
        bp_extrinsic: vec![GaussianNat::uninformative(); n_slots],
        bp_intrinsic: vec![GaussianNat::uninformative(); n_slots],
        mf_beliefs: vec![GaussianNat::uninformative(); n],
        iteration: 0,
    };
    // Iteration 0: nodes that already emit send their prior.
    for &i in &agents {
        if emits_from[i] == 0 {
            let p = prior_of(i);
            state.mf_beliefs[i] = p;
            for &(_, e) in topo.neighbors(i) {
                state.bp_extrinsic[slot(model, e, i)] = p;
            }
        } else {
            state.mf_beliefs[i] = prior_of(i);
        }
    }

    let mut beliefs: Vec<Option<GaussianNat>> = (0..n)
        .map(|i| (!topo.is_master(i)).then(|| prior_of(i)))
        .collect();
    let mut means: Vec<Vec2> = (0..n)
        .map(|i| match model.master_value(i) {
            Some(v) => v,
            None => prior_of(i).mean().expect("proper prior"),
        })
        .collect();
    let mut broadcasts: Vec<usize> = model
        .packets_sent
        .iter()
        .enumerate()
        .map(|(i, &p)| p + usize::from(topo.is_master(i)))
        .collect();
    let mut broadcast_history = vec![broadcasts.iter().sum::<usize>()];
    let mut trace = Vec::new();
    let mut changes = Vec::new();
    let record = |trace: &mut Vec<TraceRow>, it: usize, i: NodeId, b: &GaussianNat, change: f64| {
        let (m, c) = match (b.mean(), b.covariance()) {
            (Some(m), Some(c)) => unshift(&m, &c, model.epochs[i]),
            _ => (Vec2::repeat(f64::NAN), Mat2::repeat(f64::NAN)),
        };
        trace.push(TraceRow {
            iteration: it,
            node: i,
            mean_lambda: m[0],
            mean_nu: m[1],
            var_lambda: c[(0, 0)],
            var_nu: c[(1, 1)],
            mean_change: change,
        });
    };
    if cfg.trace {
        for &i in &agents {
            record(&mut trace, 0, i, beliefs[i].as_ref().expect("agent"), 0.0);
        }
    }

    let mut converged = false;
    let mut it = 0;
    while it < cfg.max_iter {
        it += 1;
        let available = |j: NodeId| topo.is_master(j) || emits_from[j] < it;
        let active: Vec<NodeId> = agents
            .iter()
            .copied()
            .filter(|&i| active_from[i] <= it)
            .collect();

        let mut new_beliefs = beliefs.clone();
        match cfg.algorithm {
            Algorithm::Bp => {
                let mut intrinsic = state.bp_intrinsic.clone();
                for &i in &active {
                    for &(j, e) in topo.neighbors(i) {
                        if !available(j) {
                            continue;
                        }
                        let lm = model.oriented(i, e);
                        let fresh = match model.master_value(j) {
                            Some(v) => bp_factor_from_master(lm, &v),
                            None => bp_factor_to_variable(lm, &state.bp_extrinsic[slot(model, e, j)])?,
                        };
                        let s = slot(model, e, i);
                        intrinsic[s] = fresh.damped(&state.bp_intrinsic[s], cfg.damping);
                    }
                }
                let mut extrinsic = state.bp_extrinsic.clone();
                for &i in &active {
                    let prior = prior_of(i);
                    let nbrs = topo.neighbors(i);
                    for &(_, e) in nbrs {
                        let others = nbrs
                            .iter()
                            .filter(|&&(_, f)| f != e)
                            .map(|&(_, f)| &intrinsic[slot(model, f, i)]);
                        extrinsic[slot(model, e, i)] = bp_variable_to_factor(&prior, others);
                    }
                    let all = nbrs.iter().map(|&(_, f)| &intrinsic[slot(model, f, i)]);
                    new_beliefs[i] = Some(bp_belief(i, &prior, all)?);
                }
                state.bp_intrinsic = intrinsic;
                state.bp_extrinsic = extrinsic;
            }
            Algorithm::Mf => {
                let mut mf = state.mf_beliefs.clone();
                for &i in &active {
                    let prior = prior_of(i);
                    let msgs: Vec<GaussianNat> = topo
                        .neighbors(i)
                        .iter()
                        .filter(|&&(j, _)| available(j))
                        .map(|&(j, e)| mf_factor_to_variable(model.oriented(i, e), &means[j]))
                        .collect();
                    let fresh = mf_belief(i, &prior, &msgs)?;
                    let b = fresh.damped(&state.mf_beliefs[i], cfg.damping);
                    if b.mean().is_none() {
                        return Err(Error::SingularBelief(i).into());
                    }
                    mf[i] = b;
                    new_beliefs[i] = Some(b);
                }
                state.mf_beliefs = mf;
            }
        }
        state.iteration = it;

        let mut change = 0.0f64;
        for &i in &active {
            let b = new_beliefs[i].as_ref().expect("agent");
            let m = b.mean().ok_or(Error::SingularBelief(i))?;
            let e = model.epochs[i];
            let (old_u, new_u) = (means[i][1] + e * means[i][0], m[1] + e * m[0]);
            let c = (m[0] - means[i][0]).abs().max((new_u - old_u).abs());
            change = change.max(c);
            means[i] = m;
            broadcasts[i] += 1;
            if cfg.trace {
                record(&mut trace, it, i, b, c);
            }
        }
        if cfg.trace {
            for &i in &agents {
                if active_from[i] > it {
                    record(&mut trace, it, i, new_beliefs[i].as_ref().expect("agent"), 0.0);
                }
            }
        }
        beliefs = new_beliefs;
        changes.push(change);
        broadcast_history.push(broadcasts.iter().sum());
        if it >= last_activation && change < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut marginals = vec![None; n];
    let mut estimates = vec![ClockParams::MASTER; n];
    for i in 0..n {
        match (&beliefs[i], model.master_value(i)) {
            (Some(b), _) => {
                let mean = b.mean().ok_or(Error::SingularBelief(i))?;
                let covariance = b.covariance().ok_or(Error::SingularBelief(i))?;
                marginals[i] = Some(Marginal {
                    node: i,
                    mean,
                    covariance,
                });
                estimates[i] = model.clock_estimate(i, &mean)?;
            }
            (None, Some(v)) => estimates[i] = model.clock_estimate(i, &v)?,
            (None, None) => unreachable!(),
        }
    }
    let result = SyncResult {
        beliefs,
        marginals,
        estimates,
        trace,
        iterations_run: it,
        converged,
        broadcasts,
        broadcast_history,
        changes,
        state,
    };
    if converged {
        Ok(result)
    } else {
        Err(SyncError::NotConverged(Box::new(result)))
    }
}
