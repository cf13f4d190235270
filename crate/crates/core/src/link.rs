//! Per-link statistics: the delay estimate and the matrices of the
//! Gaussian likelihood in transformed parameters.

use alloc::vec::Vec;

use nalgebra::MatrixXx2;

use crate::clock::{ClockParams, TransformedParams};
use crate::gauss::{sym_condition, Mat2, Vec2, MAX_CONDITION};
use crate::measurement::LinkMeasurements;
use crate::topology::NodeId;
use crate::Error;

/// Averaged-stamp statistics that make the delay estimate linear in the
/// transformed parameters of both nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub a_i: f64,
    pub a_j: f64,
    pub b_ij: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl DelayStats {
    pub fn from_measurements(m: &LinkMeasurements) -> Self {
        let kij = m.k_ij() as f64;
        let kji = m.k_ji() as f64;
        let k = kij + kji;
        Self {
            a_i: (kij * mean(&m.fwd_tx) - kji * mean(&m.rev_rx)) / k,
            a_j: (-kij * mean(&m.fwd_rx) + kji * mean(&m.rev_tx)) / k,
            b_ij: (kji - kij) / k,
        }
    }

    /// Statistics of the same link built from the other end.
    pub fn swapped(&self) -> Self {
        Self {
            a_i: self.a_j,
            a_j: self.a_i,
            b_ij: -self.b_ij,
        }
    }

    /// Delay maximizing the exact likelihood for fixed clock parameters.
    pub fn ml_delay(&self, vi: &TransformedParams, vj: &TransformedParams) -> f64 {
        -(self.a_i * vi.lambda + self.a_j * vj.lambda + self.b_ij * vi.nu - self.b_ij * vj.nu)
    }
}

/// Free-function form of [`DelayStats::from_measurements`].
pub fn delay_stats(m: &LinkMeasurements) -> DelayStats {
    DelayStats::from_measurements(m)
}

/// Free-function form of [`DelayStats::ml_delay`].
pub fn ml_delay_estimate(stats: &DelayStats, vi: &TransformedParams, vj: &TransformedParams) -> f64 {
    stats.ml_delay(vi, vj)
}

/// Matrices `A`, `B` of one link, oriented from `node_i`: the likelihood
/// with the delay profiled out is `exp(-|A v_i + B v_j|^2 / (2 sigma_w^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrices {
    pub node_i: NodeId,
    pub node_j: NodeId,
    pub sigma_w: f64,
    pub stats: DelayStats,
    k_ij: usize,
    a: MatrixXx2<f64>,
    b: MatrixXx2<f64>,
    ata: Mat2,
    atb: Mat2,
    btb: Mat2,
}

impl LinkMatrices {
    /// Builds the matrices from (already epoch-shifted) stamps.
    ///
    /// A link with at least three packets whose `A^T A` is numerically
    /// singular carries no skew information and is rejected. With one packet
    /// per direction the matrices are rank one by construction and are
    /// accepted; message passing handles them through pseudo-inverses.
    pub fn build(m: &LinkMeasurements, sigma_w: f64) -> Result<Self, Error> {
        m.validate()?;
        if !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return Err(Error::InvalidConfig("sigma_w must be positive"));
        }
        let stats = DelayStats::from_measurements(m);
        let (kij, kji) = (m.k_ij(), m.k_ji());
        let b_ij = stats.b_ij;
        let mut a = MatrixXx2::zeros(kij + kji);
        let mut b = MatrixXx2::zeros(kij + kji);
        for k in 0..kij {
            a[(k, 0)] = -m.fwd_tx[k] + stats.a_i;
            a[(k, 1)] = 1.0 + b_ij;
            b[(k, 0)] = m.fwd_rx[k] + stats.a_j;
            b[(k, 1)] = -1.0 - b_ij;
        }
        for k in 0..kji {
            let r = kij + k;
            a[(r, 0)] = m.rev_rx[k] + stats.a_i;
            a[(r, 1)] = -1.0 + b_ij;
            b[(r, 0)] = -m.rev_tx[k] + stats.a_j;
            b[(r, 1)] = 1.0 - b_ij;
        }
        let ata = a.transpose() * &a;
        let atb = a.transpose() * &b;
        let btb = b.transpose() * &b;
        if kij + kji >= 3
            && (sym_condition(&ata) > MAX_CONDITION || sym_condition(&btb) > MAX_CONDITION)
        {
            return Err(Error::DegenerateLink {
                node_i: m.node_i,
                node_j: m.node_j,
            });
        }
        Ok(Self {
            node_i: m.node_i,
            node_j: m.node_j,
            sigma_w,
            stats,
            k_ij: kij,
            a,
            b,
            ata,
            atb,
            btb,
        })
    }

    pub fn a_mat(&self) -> &MatrixXx2<f64> {
        &self.a
    }

    pub fn b_mat(&self) -> &MatrixXx2<f64> {
        &self.b
    }

    pub fn ata(&self) -> &Mat2 {
        &self.ata
    }

    pub fn atb(&self) -> &Mat2 {
        &self.atb
    }

    pub fn btb(&self) -> &Mat2 {
        &self.btb
    }

    /// The same factor oriented from `node_j`. Uses the row permutation
    /// that maps `A_ji` onto `B_ij` and `B_ji` onto `A_ij`.
    pub fn reversed(&self) -> Self {
        let kij = self.k_ij;
        let n = self.a.nrows();
        let perm = |src: &MatrixXx2<f64>| {
            let kji = n - kij;
            let mut out = MatrixXx2::zeros(n);
            for r in 0..kji {
                out.set_row(r, &src.row(kij + r));
            }
            for r in 0..kij {
                out.set_row(kji + r, &src.row(r));
            }
            out
        };
        Self {
            node_i: self.node_j,
            node_j: self.node_i,
            sigma_w: self.sigma_w,
            stats: self.stats.swapped(),
            k_ij: n - kij,
            a: perm(&self.b),
            b: perm(&self.a),
            ata: self.btb,
            atb: self.atb.transpose(),
            btb: self.ata,
        }
    }

    /// Residual vector `A v_i + B v_j`, in seconds of reference time.
    pub fn residual(&self, vi: &Vec2, vj: &Vec2) -> nalgebra::DVector<f64> {
        &self.a * vi + &self.b * vj
    }

    /// `|A v_i + B v_j|^2 / (2 sigma_w^2)`. The rows cancel from seconds
    /// down to the noise level, so each one is a compensated dot product.
    pub fn neg_log_likelihood(&self, vi: &TransformedParams, vj: &TransformedParams) -> f64 {
        let x = [vi.lambda, vi.nu, vj.lambda, vj.nu];
        let mut s = 0.0;
        for k in 0..self.a.nrows() {
            let row = [self.a[(k, 0)], self.a[(k, 1)], self.b[(k, 0)], self.b[(k, 1)]];
            let r = dot2(&row, &x);
            s += r * r;
        }
        s / (2.0 * self.sigma_w * self.sigma_w)
    }
}

/// Dot product in twice the working precision, rounded once at the end.
fn dot2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let (mut hi, mut lo) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = libm::fma(*x, *y, -p);
        let s = hi + p;
        let bb = s - hi;
        lo += (hi - (s - bb)) + (p - bb) + pe;
        hi = s;
    }
    hi + lo
}

/// Free-function form of [`LinkMatrices::build`].
pub fn build_link_matrices(m: &LinkMeasurements, sigma_w: f64) -> Result<LinkMatrices, Error> {
    LinkMatrices::build(m, sigma_w)
}

/// Free-function form of [`LinkMatrices::neg_log_likelihood`].
pub fn approx_neg_log_likelihood(
    lm: &LinkMatrices,
    vi: &TransformedParams,
    vj: &TransformedParams,
) -> f64 {
    lm.neg_log_likelihood(vi, vj)
}

/// Reference-time noise samples implied by clocks `theta_i`, `theta_j`
/// and delay `delta`: forward packets first, then reverse.
pub fn exact_residuals(
    m: &LinkMeasurements,
    theta_i: &ClockParams,
    theta_j: &ClockParams,
    delta: f64,
) -> Vec<f64> {
    let fwd = m
        .fwd_tx
        .iter()
        .zip(&m.fwd_rx)
        .map(|(tx, rx)| theta_j.reference_time(*rx) - theta_i.reference_time(*tx) - delta);
    let rev = m
        .rev_tx
        .iter()
        .zip(&m.rev_rx)
        .map(|(tx, rx)| theta_i.reference_time(*rx) - theta_j.reference_time(*tx) - delta);
    fwd.chain(rev).collect()
}

/// Negative exponent of the exact Gaussian likelihood of the receive
/// stamps, without the normalization terms.
pub fn exact_neg_exponent(
    m: &LinkMeasurements,
    theta_i: &ClockParams,
    theta_j: &ClockParams,
    delta: f64,
    sigma_w: f64,
) -> f64 {
    let s: f64 = exact_residuals(m, theta_i, theta_j, delta)
        .iter()
        .map(|w| w * w)
        .sum();
    s / (2.0 * sigma_w * sigma_w)
}

/// Full negative log-density of the receive stamps, including the
/// `log(alpha * sigma_w)` normalization of every packet.
pub fn exact_neg_log_likelihood(
    m: &LinkMeasurements,
    theta_i: &ClockParams,
    theta_j: &ClockParams,
    delta: f64,
    sigma_w: f64,
) -> f64 {
    let norm = m.k_ij() as f64 * libm::log(theta_j.alpha * sigma_w)
        + m.k_ji() as f64 * libm::log(theta_i.alpha * sigma_w);
    exact_neg_exponent(m, theta_i, theta_j, delta, sigma_w) + norm
}
