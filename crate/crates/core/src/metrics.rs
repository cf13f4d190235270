//! Error metrics and small statistics helpers.

use alloc::vec;
use alloc::vec::Vec;

use crate::clock::ClockParams;
use crate::topology::NodeId;

/// Reference for the errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ErrorMode {
    /// Errors against the true clocks.
    #[default]
    VsTruth,
    /// Errors with the network-wide mean error removed. Algorithms without
    /// a master only fix the time scale up to a common shift.
    VsNetworkMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeError {
    pub node: NodeId,
    /// `alpha_hat - alpha`.
    pub skew: f64,
    /// Error of the node's estimate of reference time, in seconds.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseMetrics {
    pub rmse_phase: f64,
    /// Dimensionless; see [`RmseMetrics::rmse_skew_ppm`].
    pub rmse_skew: f64,
    pub per_node: Vec<NodeError>,
}

impl RmseMetrics {
    pub fn rmse_skew_ppm(&self) -> f64 {
        self.rmse_skew * 1e6
    }
}

/// Phase error of one node at reference instant `probe`: how far the
/// node's estimate of reference time, computed from its own clock reading,
/// is from `probe`. At `probe = 0` this is `(beta - beta_hat) / alpha_hat`.
pub fn phase_error(estimate: &ClockParams, truth: &ClockParams, probe: f64) -> f64 {
    estimate.reference_time(truth.local_time(probe)) - probe
}

/// RMS errors over `nodes`. `estimates` and `truth` are indexed by node id.
pub fn rmse_metrics(
    estimates: &[ClockParams],
    truth: &[ClockParams],
    nodes: &[NodeId],
    mode: ErrorMode,
    probe: f64,
) -> RmseMetrics {
    let mut per_node: Vec<NodeError> = nodes
        .iter()
        .map(|&i| NodeError {
            node: i,
            skew: estimates[i].alpha - truth[i].alpha,
            phase: phase_error(&estimates[i], &truth[i], probe),
        })
        .collect();
    if mode == ErrorMode::VsNetworkMean && !per_node.is_empty() {
        let n = per_node.len() as f64;
        let ms = per_node.iter().map(|e| e.skew).sum::<f64>() / n;
        let mp = per_node.iter().map(|e| e.phase).sum::<f64>() / n;
        for e in &mut per_node {
            e.skew -= ms;
            e.phase -= mp;
        }
    }
    RmseMetrics {
        rmse_phase: rms(per_node.iter().map(|e| e.phase)),
        rmse_skew: rms(per_node.iter().map(|e| e.skew)),
        per_node,
    }
}

/// Root mean square; zero for an empty input.
pub fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        libm::sqrt(s / n as f64)
    }
}

/// Ranks starting at 1, ties get their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k + 1;
        while end < idx.len() && x[idx[end]] == x[idx[k]] {
            end += 1;
        }
        let avg = (k + end + 1) as f64 / 2.0;
        for &i in &idx[k..end] {
            r[i] = avg;
        }
        k = end;
    }
    r
}

/// Pearson correlation; `NaN` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / libm::sqrt(sxx * syy)
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| libm::log10(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| libm::log10(*v)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Number of broadcasts after which `error` stays within `factor` times
/// its final value. `broadcasts` and `error` are parallel series.
pub fn broadcasts_to_floor(broadcasts: &[f64], error: &[f64], factor: f64) -> Option<f64> {
    let last = *error.last()?;
    let limit = last * factor;
    let mut first = broadcasts.len() - 1;
    for k in (0..error.len()).rev() {
        if error[k] <= limit {
            first = k;
        } else {
            break;
        }
    }
    Some(broadcasts[first])
}
