//! Bayesian Cramér-Rao bound on the untransformed clock parameters
//! `(alpha, beta)` of every agent, assuming the link delays are known.
//!
//! The likelihood of a receive stamp given its transmit stamp is Gaussian
//! with mean `alpha_r * ((c_tx - beta_s) / alpha_s + delta) + beta_r` and
//! variance `alpha_r^2 sigma_w^2`. Its Fisher information has a mean part
//! and a variance part. The variance part only touches the skew of the
//! receiver and contributes `2 / alpha_r^2` per packet.
//!
//! The expectation over the clocks treats each transmit stamp `s` as a
//! nominal local clock reading, so the reference send time is
//! `tau = (s - beta) / alpha`. The inverse skew moments and the phase
//! moments enter separately, which assumes skew and phase are independent.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::clock::ClockParams;
use crate::error::Error;
use crate::gauss::Mat2;
use crate::measurement::{Direction, ExchangeSchedule};
use crate::topology::{NodeId, Topology};

/// `E[1/alpha^n]` for `n = 1..=4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvSkewMoments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl InvSkewMoments {
    /// Second-order approximation for a Gaussian skew close to one.
    pub fn approx(mu_alpha: f64, sigma_alpha_sq: f64) -> Self {
        let (a, v) = inv_skew_moments(mu_alpha, sigma_alpha_sq);
        Self { m1: a, m2: v.0, m3: v.1, m4: v.2 }
    }

    /// Moments of a known skew.
    pub fn point(alpha: f64) -> Self {
        let r = 1.0 / alpha;
        Self {
            m1: r,
            m2: r * r,
            m3: r * r * r,
            m4: r * r * r * r,
        }
    }
}

/// `(E[1/α], (E[1/α²], E[1/α³], E[1/α⁴]))` under the usual approximation
/// for a skew `N(mu_alpha, sigma_alpha_sq)` near one.
pub fn inv_skew_moments(mu_alpha: f64, sigma_alpha_sq: f64) -> (f64, (f64, f64, f64)) {
    let e1 = 2.0 - mu_alpha;
    let v = sigma_alpha_sq;
    let e2 = v + e1 * e1;
    let e3 = e1 * e1 * e1 + 3.0 * e1 * v;
    let e4 = e1 * e1 * e1 * e1 + 6.0 * e1 * e1 * v + 3.0 * v * v;
    (e1, (e2, e3, e4))
}

/// First two moments of a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMoments {
    pub mean: f64,
    pub second: f64,
}

impl PhaseMoments {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            mean: 0.5 * (lo + hi),
            second: (lo * lo + lo * hi + hi * hi) / 3.0,
        }
    }

    pub fn point(beta: f64) -> Self {
        Self {
            mean: beta,
            second: beta * beta,
        }
    }

    /// `E[s - beta]` and `E[(s - beta)^2]`.
    fn offset(&self, s: f64) -> (f64, f64) {
        (s - self.mean, s * s - 2.0 * s * self.mean + self.second)
    }
}

/// Distribution summary of one clock as seen by the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockMoments {
    pub inv_skew: InvSkewMoments,
    pub phase: PhaseMoments,
}

impl ClockMoments {
    pub fn point(theta: &ClockParams) -> Self {
        Self {
            inv_skew: InvSkewMoments::point(theta.alpha),
            phase: PhaseMoments::point(theta.beta),
        }
    }

    pub fn master() -> Self {
        Self::point(&ClockParams::MASTER)
    }
}

/// Expected Fisher information of one link in `(alpha, beta)` coordinates.
/// `ij` has the parameters of `i` along its rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFisher {
    pub ii: Mat2,
    pub jj: Mat2,
    pub ij: Mat2,
}

/// Blocks of one packet from `s` to `r` sent at nominal stamp `stamp`:
/// (sender diagonal, receiver diagonal, sender-receiver coupling).
fn packet_blocks(stamp: f64, delta: f64, sigma_w: f64, s: &ClockMoments, r: &ClockMoments) -> (Mat2, Mat2, Mat2) {
    let w = 1.0 / (sigma_w * sigma_w);
    let (o1, o2) = s.phase.offset(stamp);
    let (ks, kr) = (&s.inv_skew, &r.inv_skew);

    let ss = Mat2::new(o2 * ks.m4, o1 * ks.m3, o1 * ks.m3, ks.m2) * w;

    // tau = (stamp - beta_s) / alpha_s
    let e_tau = o1 * ks.m1;
    let e_tau2 = o2 * ks.m2;
    let e_rx = e_tau + delta;
    let e_rx2 = e_tau2 + 2.0 * delta * e_tau + delta * delta;
    let mut rr = Mat2::new(e_rx2, e_rx, e_rx, 1.0) * (kr.m2 * w);
    rr[(0, 0)] += 2.0 * kr.m2;

    // E[tau (tau + delta) / alpha_s], E[tau / alpha_s], E[1 / alpha_s]
    let a = o2 * ks.m3 + delta * o1 * ks.m2;
    let b = o1 * ks.m2;
    let sr = -Mat2::new(a, b, b + delta * ks.m1, ks.m1) * (kr.m1 * w);
    (ss, rr, sr)
}

/// Expected Fisher blocks of a link with known delay. `schedule` holds the
/// nominal stamps of forward packets (sent by `i`) and reverse packets
/// (sent by `j`).
pub fn fisher_likelihood_blocks(
    schedule: &ExchangeSchedule,
    delta: f64,
    sigma_w: f64,
    mi: &ClockMoments,
    mj: &ClockMoments,
) -> LinkFisher {
    let mut f = LinkFisher {
        ii: Mat2::zeros(),
        jj: Mat2::zeros(),
        ij: Mat2::zeros(),
    };
    for &(dir, stamp) in &schedule.packets {
        match dir {
            Direction::Forward => {
                let (ss, rr, sr) = packet_blocks(stamp, delta, sigma_w, mi, mj);
                f.ii += ss;
                f.jj += rr;
                f.ij += sr;
            }
            Direction::Reverse => {
                let (ss, rr, sr) = packet_blocks(stamp, delta, sigma_w, mj, mi);
                f.jj += ss;
                f.ii += rr;
                f.ij += sr.transpose();
            }
        }
    }
    f
}

/// Gaussian prior on an agent's `(alpha, beta)`, as variances. An infinite
/// variance means no prior information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPrior {
    pub skew_var: f64,
    pub phase_var: f64,
}

impl ThetaPrior {
    fn information(&self) -> Mat2 {
        Mat2::new(1.0 / self.skew_var, 0.0, 0.0, 1.0 / self.phase_var)
    }
}

/// Assembled Fisher matrix over the agents, two rows per agent in the
/// order of `agents`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub agents: Vec<NodeId>,
    pub j: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn block(&self, a: usize, b: usize) -> Mat2 {
        let m = self.j.view((2 * a, 2 * b), (2, 2));
        Mat2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }
}

/// `E[J_l] + J_p` over the agents of `topology`. `schedules` and `delays`
/// are indexed by edge id, each edge oriented from its lower to its higher
/// node id. Masters are known and only add to the diagonal of their agent
/// neighbors.
pub fn fisher_matrix(
    topology: &Topology,
    schedules: &[ExchangeSchedule],
    delays: &[f64],
    sigma_w: f64,
    agent_moments: &ClockMoments,
    prior: &ThetaPrior,
) -> FisherMatrix {
    let agents = topology.agents();
    let mut index = vec![None; topology.num_nodes()];
    for (k, &i) in agents.iter().enumerate() {
        index[i] = Some(k);
    }
    let n = 2 * agents.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    let moments = |i: NodeId| if topology.is_master(i) { ClockMoments::master() } else { *agent_moments };
    let mut add = |a: usize, b: usize, m: &Mat2| {
        let mut v = j.view_mut((2 * a, 2 * b), (2, 2));
        v += m;
    };
    for (e, &(i, k)) in topology.edges().iter().enumerate() {
        let f = fisher_likelihood_blocks(&schedules[e], delays[e], sigma_w, &moments(i), &moments(k));
        match (index[i], index[k]) {
            (Some(a), Some(b)) => {
                add(a, a, &f.ii);
                add(b, b, &f.jj);
                add(a, b, &f.ij);
                add(b, a, &f.ij.transpose());
            }
            (Some(a), None) => add(a, a, &f.ii),
            (None, Some(b)) => add(b, b, &f.jj),
            (None, None) => {}
        }
    }
    let jp = prior.information();
    for a in 0..agents.len() {
        add(a, a, &jp);
    }
    FisherMatrix { agents, j }
}

/// Lower bounds on the RMSE of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeBound {
    pub node: NodeId,
    /// Skew bound, dimensionless.
    pub skew: f64,
    /// Phase bound in seconds.
    pub phase: f64,
}

/// Square roots of the diagonal of `J^-1`. The matrix is equilibrated
/// before the Cholesky factorization because skew and phase rows differ by
/// many orders of magnitude.
pub fn bounds_from_fisher(f: &FisherMatrix) -> Result<Vec<NodeBound>, Error> {
    let n = f.j.nrows();
    let d: Vec<f64> = (0..n).map(|k| f.j[(k, k)]).collect();
    if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::SingularFisher);
    }
    let s = DVector::from_iterator(n, d.iter().map(|x| 1.0 / libm::sqrt(*x)));
    let mut m = f.j.clone();
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] *= s[r] * s[c];
        }
    }
    let chol = m.cholesky().ok_or(Error::SingularFisher)?;
    let inv = chol.inverse();
    Ok(f
        .agents
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let vs = inv[(2 * k, 2 * k)] * s[2 * k] * s[2 * k];
            let vp = inv[(2 * k + 1, 2 * k + 1)] * s[2 * k + 1] * s[2 * k + 1];
            NodeBound {
                node,
                skew: libm::sqrt(vs),
                phase: libm::sqrt(vp),
            }
        })
        .collect())
}

/// Per-agent skew and phase bounds.
pub fn bcrb(
    topology: &Topology,
    schedules: &[ExchangeSchedule],
    delays: &[f64],
    sigma_w: f64,
    agent_moments: &ClockMoments,
    prior: &ThetaPrior,
) -> Result<Vec<NodeBound>, Error> {
    bounds_from_fisher(&fisher_matrix(topology, schedules, delays, sigma_w, agent_moments, prior))
}
