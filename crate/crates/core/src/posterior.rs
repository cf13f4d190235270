//! Centralized Gaussian posterior over all agents and its exact marginals.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::gauss::{GaussianNat, Mat2, Vec2};
use crate::network::NetworkModel;
use crate::prior::NodePrior;
use crate::topology::NodeId;
use crate::Error;

/// How master nodes enter the joint Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MasterHandling {
    /// Condition on the known master values; masters are not variables.
    Condition,
    /// Keep masters as variables with an isotropic prior of this precision.
    Surrogate(f64),
}

/// Joint posterior in information form. Variable `k` is node `nodes[k]`;
/// its two coordinates occupy rows `2k` and `2k + 1`.
#[derive(Debug, Clone)]
pub struct GlobalPosterior {
    pub nodes: Vec<NodeId>,
    pub index: Vec<Option<usize>>,
    pub precision: DMatrix<f64>,
    pub info: DVector<f64>,
}

impl GlobalPosterior {
    pub fn block(&self, a: usize, b: usize) -> Mat2 {
        self.precision.fixed_view::<2, 2>(2 * a, 2 * b).into_owned()
    }
}

/// Marginal of one node in moment form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub node: NodeId,
    pub mean: Vec2,
    pub covariance: Mat2,
}

impl Marginal {
    pub fn to_natural(&self) -> Option<GaussianNat> {
        GaussianNat::from_moments(&self.mean, &self.covariance).ok()
    }
}

/// Assembles the joint precision: prior plus `A^T A / sigma^2` on each
/// diagonal block and `A^T B / sigma^2` on the block of every edge.
pub fn global_posterior_precision(model: &NetworkModel, handling: MasterHandling) -> GlobalPosterior {
    let n = model.num_nodes();
    let is_var = |i: usize| match handling {
        MasterHandling::Condition => !model.priors[i].is_master(),
        MasterHandling::Surrogate(_) => true,
    };
    let nodes: Vec<NodeId> = (0..n).filter(|&i| is_var(i)).collect();
    let mut index = vec![None; n];
    for (k, &i) in nodes.iter().enumerate() {
        index[i] = Some(k);
    }
    let dim = 2 * nodes.len();
    let mut precision = DMatrix::zeros(dim, dim);
    let mut info = DVector::zeros(dim);

    let add_block = |p: &mut DMatrix<f64>, a: usize, b: usize, m: &Mat2| {
        let mut v = p.fixed_view_mut::<2, 2>(2 * a, 2 * b);
        v += m;
    };
    for (k, &i) in nodes.iter().enumerate() {
        let prior = match (handling, &model.priors[i]) {
            (MasterHandling::Surrogate(s), p) => p.surrogate(s),
            (MasterHandling::Condition, NodePrior::Agent(g)) => *g,
            (MasterHandling::Condition, NodePrior::Master(_)) => unreachable!(),
        };
        add_block(&mut precision, k, k, &prior.precision);
        let mut v = info.fixed_rows_mut::<2>(2 * k);
        v += prior.info;
    }
    for (e, &(i, j)) in model.topology.edges().iter().enumerate() {
        let lm = &model.links[e];
        let s2 = lm.sigma_w * lm.sigma_w;
        let ata = lm.ata() / s2;
        let atb = lm.atb() / s2;
        let btb = lm.btb() / s2;
        match (index[i], index[j]) {
            (Some(a), Some(b)) => {
                add_block(&mut precision, a, a, &ata);
                add_block(&mut precision, b, b, &btb);
                add_block(&mut precision, a, b, &atb);
                add_block(&mut precision, b, a, &atb.transpose());
            }
            (Some(a), None) => {
                let v = model.master_value(j).expect("conditioned node is a master");
                add_block(&mut precision, a, a, &ata);
                let mut h = info.fixed_rows_mut::<2>(2 * a);
                h -= atb * v;
            }
            (None, Some(b)) => {
                let v = model.master_value(i).expect("conditioned node is a master");
                add_block(&mut precision, b, b, &btb);
                let mut h = info.fixed_rows_mut::<2>(2 * b);
                h -= atb.transpose() * v;
            }
            (None, None) => {}
        }
    }
    GlobalPosterior {
        nodes,
        index,
        precision,
        info,
    }
}

/// Dense solution of the joint Gaussian: means and 2x2 marginal
/// covariances of every variable. The system is equilibrated by its
/// diagonal before the Cholesky factorization.
pub fn exact_marginals(post: &GlobalPosterior) -> Result<Vec<Marginal>, Error> {
    let dim = post.precision.nrows();
    let mut d = DVector::zeros(dim);
    for k in 0..dim {
        let p = post.precision[(k, k)];
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::SingularPosterior);
        }
        d[k] = 1.0 / libm::sqrt(p);
    }
    let scaled = DMatrix::from_fn(dim, dim, |r, c| post.precision[(r, c)] * d[r] * d[c]);
    let chol = scaled.cholesky().ok_or(Error::SingularPosterior)?;
    let g = post.info.component_mul(&d);
    let y = chol.solve(&g);
    let inv = chol.inverse();
    Ok(post
        .nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let (r0, r1) = (2 * k, 2 * k + 1);
            let mean = Vec2::new(y[r0] * d[r0], y[r1] * d[r1]);
            let c = |a: usize, b: usize| inv[(a, b)] * d[a] * d[b];
            let covariance = Mat2::new(c(r0, r0), c(r0, r1), c(r1, r0), c(r1, r1));
            Marginal {
                node,
                mean,
                covariance,
            }
        })
        .collect())
}

/// Exact marginals by orthogonal factorization of the whitened
/// least-squares system (one row per packet, two per prior) rather than of
/// the normal equations. The condition number of the triangular factor is
/// the square root of that of the precision matrix, which keeps networks
/// without masters and weak phase priors solvable in double precision.
pub fn exact_marginals_qr(model: &NetworkModel, handling: MasterHandling) -> Result<Vec<Marginal>, Error> {
    let n = model.num_nodes();
    let is_var = |i: usize| match handling {
        MasterHandling::Condition => !model.priors[i].is_master(),
        MasterHandling::Surrogate(_) => true,
    };
    let nodes: Vec<NodeId> = (0..n).filter(|&i| is_var(i)).collect();
    let mut index = vec![None; n];
    for (k, &i) in nodes.iter().enumerate() {
        index[i] = Some(k);
    }
    let cols = 2 * nodes.len();
    let packet_rows: usize = model.links.iter().map(|l| l.a_mat().nrows()).sum();
    let rows = packet_rows + cols;
    let mut m = DMatrix::<f64>::zeros(rows.max(cols + 1), cols + 1);
    let mut r = 0;
    for (e, &(i, j)) in model.topology.edges().iter().enumerate() {
        let lm = &model.links[e];
        let (a, b) = (lm.a_mat(), lm.b_mat());
        let s = 1.0 / lm.sigma_w;
        for k in 0..a.nrows() {
            for (node, mat) in [(i, a), (j, b)] {
                match index[node] {
                    Some(v) => {
                        m[(r, 2 * v)] = mat[(k, 0)] * s;
                        m[(r, 2 * v + 1)] = mat[(k, 1)] * s;
                    }
                    None => {
                        let val = model.master_value(node).expect("master");
                        m[(r, cols)] -= (mat[(k, 0)] * val[0] + mat[(k, 1)] * val[1]) * s;
                    }
                }
            }
            r += 1;
        }
    }
    for (k, &i) in nodes.iter().enumerate() {
        let g = match (handling, &model.priors[i]) {
            (MasterHandling::Surrogate(p), prior) => prior.surrogate(p),
            (MasterHandling::Condition, NodePrior::Agent(g)) => *g,
            (MasterHandling::Condition, NodePrior::Master(_)) => unreachable!(),
        };
        let root = crate::gauss::sqrt_psd(&g.precision);
        let mean = g.mean().ok_or(Error::SingularPosterior)?;
        let rhs = root * mean;
        for row in 0..2 {
            m[(r, 2 * k)] = root[(row, 0)];
            m[(r, 2 * k + 1)] = root[(row, 1)];
            m[(r, cols)] = rhs[row];
            r += 1;
        }
    }
    let full = m.qr().r();
    let rt = full.view((0, 0), (cols, cols)).into_owned();
    let z = full.view((0, cols), (cols, 1)).into_owned();
    if (0..cols).any(|k| !(rt[(k, k)].abs() > 0.0)) {
        return Err(Error::SingularPosterior);
    }
    let x = rt.solve_upper_triangular(&z).ok_or(Error::SingularPosterior)?;
    let rinv = rt
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(Error::SingularPosterior)?;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let rows_k = rinv.rows(2 * k, 2);
            let cov = rows_k * rows_k.transpose();
            Marginal {
                node,
                mean: Vec2::new(x[(2 * k, 0)], x[(2 * k + 1, 0)]),
                covariance: Mat2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]),
            }
        })
        .collect())
}
