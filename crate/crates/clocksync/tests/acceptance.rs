//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still evaluated and reported as
//! FAIL when they fail; they only do not change the exit status. Any other
//! failure makes the target fail.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clocksync::harness::run_point;
use clocksync::run_experiment;
use clocksync_core::bcrb::{fisher_likelihood_blocks, ClockMoments};
use clocksync_core::clock::{ClockParams, TransformedParams};
use clocksync_core::experiment::{ExperimentConfig, Method, RunStatus, SweepParam, TopologyKind};
use clocksync_core::link::{approx_neg_log_likelihood, build_link_matrices, exact_neg_exponent, exact_neg_log_likelihood, exact_residuals};
use clocksync_core::measurement::{
    network_schedule, sample_clocks, simulate_link_exchange, simulate_network, Direction, ExchangeSchedule,
};
use clocksync_core::metrics::{broadcasts_to_floor, loglog_slope, spearman};
use clocksync_core::network::{EpochPolicy, NetworkModel};
use clocksync_core::posterior::{exact_marginals, global_posterior_precision, MasterHandling};
use clocksync_core::sync::{run_sync, Algorithm, Schedule, SyncConfig, SyncError, SyncResult};
use clocksync_core::topology::{random_geometric, Topology};

/// Evaluated and printed, but expected to fail; see the README.
const KNOWN_FAILURES: &[u32] = &[4, 5, 7, 10];

/// Error must stay within this factor of its final value to count as
/// settled.
const FLOOR_FACTOR: f64 = 1.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn default_network() -> ExperimentConfig {
    ExperimentConfig {
        algorithms: vec![Method::Bp],
        ..Default::default()
    }
}

fn model_for(topo: &Topology, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> (NetworkModel, Vec<ClockParams>) {
    let clocks = sample_clocks(topo, &cfg.clock_distribution(), rng);
    let sched = network_schedule(topo, cfg.packets, cfg.spacing, 0.0, cfg.link_order);
    let meas = simulate_network(topo, &clocks, &cfg.delay_model(), &sched, rng);
    let model = NetworkModel::build(topo, &meas, cfg.sigma_w, &cfg.prior(), EpochPolicy::PerNode).expect("model");
    (model, clocks)
}

fn sync(model: &NetworkModel, cfg: &SyncConfig) -> SyncResult {
    match run_sync(model, cfg) {
        Ok(r) => r,
        Err(SyncError::NotConverged(r)) => *r,
        Err(e) => panic!("{e}"),
    }
}

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Topology {
    let pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)]).collect();
    let edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.random_range(0..k), k)).collect();
    Topology::new(pos, &[0], edges).expect("tree")
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn c1_tree_exactness() -> Outcome {
    let cfg = ExperimentConfig {
        packets: 5,
        ..Default::default()
    };
    let mut worst_mean: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let n = rng.random_range(2..=15);
        let topo = random_tree(n, &mut rng);
        let (model, _) = model_for(&topo, &cfg, &mut rng);
        let r = sync(&model, &SyncConfig { max_iter: 200, tol: 1e-12, ..Default::default() });
        let exact = exact_marginals(&global_posterior_precision(&model, MasterHandling::Condition)).expect("oracle");
        for m in exact {
            let b = r.marginals[m.node].as_ref().expect("agent marginal");
            for k in 0..2 {
                let d = (b.mean[k] - m.mean[k]).abs() / b.mean[k].abs().max(m.mean[k].abs());
                worst_mean = worst_mean.max(d);
            }
            for (x, y) in b.covariance.iter().zip(m.covariance.iter()) {
                worst_cov = worst_cov.max((x - y).abs() / x.abs().max(y.abs()));
            }
        }
    }
    outcome(
        worst_mean <= 1e-8 && worst_cov <= 1e-8,
        format!("50 trees, worst relative error mean {worst_mean:.1e}, covariance {worst_cov:.1e}"),
    )
}

/// `a + b` as an unevaluated pair `(hi, lo)`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `lambda * c - nu` as an unevaluated pair.
fn reference_time_dd(c: f64, v: &TransformedParams) -> (f64, f64) {
    let p = v.lambda * c;
    let pe = v.lambda.mul_add(c, -p);
    let (h, l) = two_sum(p, -v.nu);
    (h, l + pe)
}

/// Exact-model exponent with the delay profiled out, evaluated in
/// double-double so that the stamp magnitudes do not cost digits.
fn profiled_exponent_dd(m: &clocksync_core::LinkMeasurements, vi: &TransformedParams, vj: &TransformedParams, sigma: f64) -> f64 {
    let diff = |rx: f64, r: &TransformedParams, tx: f64, s: &TransformedParams| {
        let (a, al) = reference_time_dd(rx, r);
        let (b, bl) = reference_time_dd(tx, s);
        let (h, l) = two_sum(a, -b);
        h + (l + al - bl)
    };
    let res: Vec<f64> = m
        .fwd_tx
        .iter()
        .zip(&m.fwd_rx)
        .map(|(&tx, &rx)| diff(rx, vj, tx, vi))
        .chain(m.rev_tx.iter().zip(&m.rev_rx).map(|(&tx, &rx)| diff(rx, vi, tx, vj)))
        .collect();
    let mean = res.iter().sum::<f64>() / res.len() as f64;
    res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (2.0 * sigma * sigma)
}

fn c2_profile_likelihood() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_profile, mut worst_identity, mut worst_plain): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let ci = ClockParams::new(1.0 + 1e-4 * rng.random_range(-2.0..2.0), rng.random_range(-10.0..10.0)).unwrap();
        let cj = ClockParams::new(1.0 + 1e-4 * rng.random_range(-2.0..2.0), rng.random_range(-10.0..10.0)).unwrap();
        let delta = rng.random_range(1e-6..1e-5);
        let (kij, kji) = (rng.random_range(1..=20), rng.random_range(1..=20));
        let s = ExchangeSchedule::alternating(rng.random_range(0.0..5.0), 0.01, kij, kji);
        let m = simulate_link_exchange((0, &ci), (1, &cj), delta, &s, 93e-9, &mut rng);
        // Both sides see the stamps and parameters the network model works
        // with: everything relative to the earliest reading of each clock.
        let ei = m.fwd_tx.iter().chain(&m.rev_rx).cloned().fold(f64::INFINITY, f64::min);
        let ej = m.fwd_rx.iter().chain(&m.rev_tx).cloned().fold(f64::INFINITY, f64::min);
        let ms = m.shifted(ei, ej);
        let lm = build_link_matrices(&ms, 93e-9).expect("link");
        let pi = ClockParams::new(ci.alpha * (1.0 + 3e-7), ci.beta + 2e-6).unwrap();
        for (a, b) in [(ci, cj), (pi, cj)] {
            let va = a.to_transformed().unwrap().shifted(ei);
            let vb = b.to_transformed().unwrap().shifted(ej);
            let exact = profiled_exponent_dd(&ms, &va, &vb, 93e-9);
            let quad = approx_neg_log_likelihood(&lm, &va, &vb);
            let g = (exact - quad).abs() / exact.abs().max(quad.abs());
            worst_profile = worst_profile.max(g);
            let r0 = exact_residuals(&m, &a, &b, 0.0);
            let d_star = r0.iter().sum::<f64>() / r0.len() as f64;
            let plain = exact_neg_exponent(&m, &a, &b, d_star, 93e-9);
            worst_plain = worst_plain.max((plain - exact).abs() / exact.abs());
        }
        let fwd = build_link_matrices(&m, 93e-9).expect("link");
        let rev = build_link_matrices(&m.reversed(), 93e-9).expect("link");
        let d = (rev.ata() - fwd.btb()).norm() / fwd.btb().norm();
        worst_identity = worst_identity.max(d);
    }
    outcome(
        worst_profile <= 1e-8 && worst_identity <= 1e-9,
        format!(
            "200 links, profile {worst_profile:.1e} (plain double evaluation in the original frame {worst_plain:.1e}), A_ji^T A_ji vs B_ij^T B_ij {worst_identity:.1e}"
        ),
    )
}

fn c3_bp_equals_mf() -> Outcome {
    let cfg = default_network();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let topo = random_geometric(26, 1000.0, 300.0, &[0], 10_000, &mut rng).unwrap();
        let (model, _) = model_for(&topo, &cfg, &mut rng);
        let bp = sync(&model, &SyncConfig { max_iter: 1000, ..Default::default() });
        let mf = sync(
            &model,
            &SyncConfig { algorithm: Algorithm::Mf, schedule: Schedule::Serial, max_iter: 1000, ..Default::default() },
        );
        for (a, b) in bp.estimates.iter().zip(&mf.estimates) {
            worst = worst.max((a.alpha - b.alpha).abs() / a.alpha.abs());
            worst = worst.max((a.beta - b.beta).abs() / a.beta.abs().max(b.beta.abs()).max(f64::MIN_POSITIVE));
        }
    }
    outcome(worst <= 1e-6, format!("20 networks, worst relative gap {worst:.1e}"))
}

fn c4_convergence_speed() -> Outcome {
    let cfg = default_network();
    let mut ok = 0;
    let mut excess = BTreeMap::new();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let topo = random_geometric(26, 1000.0, 300.0, &[0], 10_000, &mut rng).unwrap();
        let hops = topo.max_hops_to_master().unwrap();
        let (model, _) = model_for(&topo, &cfg, &mut rng);
        let r = sync(&model, &SyncConfig { max_iter: 1000, tol: 1e-9, ..Default::default() });
        let extra = r.iterations_run as i64 - hops as i64;
        *excess.entry(extra.min(10)).or_insert(0) += 1;
        if r.converged && r.iterations_run <= hops + 2 {
            ok += 1;
        }
    }
    outcome(
        ok >= 95,
        format!("{ok}/100 within hops+2; iterations minus hops (10 = 10 or more): {excess:?}"),
    )
}

fn c5_variance_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut not_monotone, mut unsettled) = (Vec::new(), Vec::new());
    for case in 0..200 {
        let with_master = case < 100;
        let masters: &[usize] = if with_master { &[0] } else { &[] };
        let n = rng.random_range(5..=26);
        let topo = random_geometric(n, 1000.0, 350.0, masters, 10_000, &mut rng).unwrap();
        let (model, _) = model_for(&topo, &default_network(), &mut rng);
        // Means settle long before variances on loopy graphs, so run a
        // fixed number of iterations instead of stopping on the means.
        let r = sync(&model, &SyncConfig { max_iter: 500, tol: 0.0, trace: true, ..Default::default() });
        let mut per_node: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        for t in &r.trace {
            per_node.entry(t.node).or_default().push((t.var_lambda, t.var_nu));
        }
        let (mut mono, mut conv) = (true, true);
        for v in per_node.values() {
            for w in v.windows(2) {
                mono &= w[1].0 <= w[0].0 * (1.0 + 1e-12) && w[1].1 <= w[0].1 * (1.0 + 1e-12);
            }
            let (a, b) = (v[v.len() - 2], v[v.len() - 1]);
            conv &= rel_close(a.0, b.0, 1e-9) && rel_close(a.1, b.1, 1e-9);
        }
        if !mono {
            not_monotone.push(case);
        }
        if !conv {
            // independent cycles in the graph
            unsettled.push((case, with_master, topo.edges().len() + 1 - n));
        }
    }
    let text: Vec<String> = unsettled
        .iter()
        .map(|(c, m, k)| format!("{c} ({}, cycle rank {k})", if *m { "master" } else { "no master" }))
        .collect();
    outcome(
        not_monotone.is_empty() && unsettled.is_empty(),
        format!(
            "200 graphs (100 with master, 100 without), non-monotone {not_monotone:?}, variance still moving after 500 iterations: [{}]",
            text.join(", ")
        ),
    )
}

fn metric_slope(points: &[clocksync::PointResult], method: Method, f: impl Fn(&clocksync_core::experiment::MetricRow) -> f64) -> (Vec<f64>, f64) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for p in points {
        let v: Vec<f64> = p.runs.iter().flat_map(|o| &o.metrics).filter(|m| m.method == method).map(&f).collect();
        x.push(p.sweep_value.unwrap());
        y.push((v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt());
    }
    let s = loglog_slope(&x, &y);
    (y, s)
}

fn c6_noise_scaling() -> Outcome {
    let cfg = ExperimentConfig {
        algorithms: vec![Method::Bp],
        runs: 50,
        seed: 6,
        sweep: Some(SweepParam::SigmaW),
        sweep_values: vec![1e-9, 1e-8, 1e-7, 1e-6],
        ..Default::default()
    };
    let points = run_experiment(&cfg).expect("experiment");
    let (_, sp) = metric_slope(&points, Method::Bp, |m| m.rmse_phase);
    let (_, ss) = metric_slope(&points, Method::Bp, |m| m.rmse_skew_ppm);
    let within = |s: f64| (0.85..=1.15).contains(&s);
    outcome(within(sp) && within(ss), format!("slopes phase {sp:.3}, skew {ss:.3}"))
}

/// Per node: (rmse_phase, rmse_skew_ppm, bcrb_phase, bcrb_skew_ppm).
fn per_node_rmse(p: &clocksync::PointResult, method: Method) -> BTreeMap<usize, (f64, f64, f64, f64, usize)> {
    let mut acc: BTreeMap<usize, (f64, f64, f64, f64, usize, usize)> = BTreeMap::new();
    for n in p.runs.iter().flat_map(|o| &o.nodes).filter(|n| n.method == method) {
        let e = acc.entry(n.node).or_insert((0.0, 0.0, f64::NAN, f64::NAN, 0, n.hops));
        e.0 += n.phase_error * n.phase_error;
        e.1 += n.skew_error_ppm * n.skew_error_ppm;
        e.2 = n.bcrb_phase.unwrap_or(f64::NAN);
        e.3 = n.bcrb_skew_ppm.unwrap_or(f64::NAN);
        e.4 += 1;
    }
    acc.into_iter()
        .map(|(k, e)| (k, ((e.0 / e.4 as f64).sqrt(), (e.1 / e.4 as f64).sqrt(), e.2, e.3, e.5)))
        .collect()
}

/// Network RMSE over network bound, pooled over nodes; `which` 0 is phase,
/// 1 skew.
fn pooled_ratio(nodes: &BTreeMap<usize, (f64, f64, f64, f64, usize)>, which: usize) -> f64 {
    let (mut r, mut b) = (0.0, 0.0);
    for v in nodes.values() {
        let (x, y) = if which == 0 { (v.0, v.2) } else { (v.1, v.3) };
        r += x * x;
        b += y * y;
    }
    (r / b).sqrt()
}

fn c7_bcrb_consistency() -> Outcome {
    let base = ExperimentConfig {
        algorithms: vec![Method::Bp],
        bcrb: true,
        new_topology_per_run: false,
        runs: 100,
        seed: 7,
        max_iter: 200,
        ..Default::default()
    };
    let wide = ExperimentConfig {
        sweep: Some(SweepParam::Packets),
        sweep_values: vec![1.0, 10.0, 100.0],
        ..base.clone()
    };
    let mut min_ratio = f64::INFINITY;
    let mut where_min = (0.0, 0, "");
    let mut network = Vec::new();
    for p in run_experiment(&wide).expect("experiment") {
        let nodes = per_node_rmse(&p, Method::Bp);
        network.push(format!("K={} {:.3}/{:.3}", p.sweep_value.unwrap(), pooled_ratio(&nodes, 0), pooled_ratio(&nodes, 1)));
        for (node, (rp, rs, bp, bs, _)) in nodes {
            for (r, b, name) in [(rp, bp, "phase"), (rs, bs, "skew")] {
                if r / b < min_ratio {
                    min_ratio = r / b;
                    where_min = (p.sweep_value.unwrap(), node, name);
                }
            }
        }
    }
    let narrow = ExperimentConfig {
        packets: 100,
        phase_min: -0.01,
        phase_max: 0.01,
        ..base
    };
    let p = &run_experiment(&narrow).expect("experiment")[0];
    let nodes = per_node_rmse(p, Method::Bp);
    let max_skew_ratio = nodes.values().map(|v| v.1 / v.3).fold(0.0, f64::max);
    let min_narrow = nodes.values().flat_map(|v| [v.0 / v.2, v.1 / v.3]).fold(f64::INFINITY, f64::min);
    outcome(
        min_ratio >= 0.95 && min_narrow >= 0.95 && max_skew_ratio <= 2.0,
        format!(
            "K in {{1,10,100}}: min RMSE/BCRB {min_ratio:.3} (K={}, node {}, {}); narrow K=100: skew RMSE/BCRB max {max_skew_ratio:.3}, min RMSE/BCRB {min_narrow:.3}; pooled over nodes phase/skew: {}",
            where_min.0, where_min.1, where_min.2, network.join(", ")
        ),
    )
}

fn c8_fisher_oracle() -> Outcome {
    let ci = ClockParams::new(1.00007, 0.4).unwrap();
    let cj = ClockParams::new(0.99996, -0.7).unwrap();
    let (delta, sigma) = (8.6e-6, 93e-9);
    let nominal = ExchangeSchedule::alternating(1.0, 0.01, 5, 5);
    let reference = ExchangeSchedule {
        packets: nominal
            .packets
            .iter()
            .map(|&(d, s)| (d, if d == Direction::Forward { ci.reference_time(s) } else { cj.reference_time(s) }))
            .collect(),
    };
    let f = fisher_likelihood_blocks(&nominal, delta, sigma, &ClockMoments::point(&ci), &ClockMoments::point(&cj));
    let theta = [ci.alpha, ci.beta, cj.alpha, cj.beta];
    let step = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 10_000;
    let mut h = [[0.0; 4]; 4];
    for _ in 0..draws {
        let m = simulate_link_exchange((0, &ci), (1, &cj), delta, &reference, sigma, &mut rng);
        let nll = |t: &[f64; 4]| {
            exact_neg_log_likelihood(&m, &ClockParams { alpha: t[0], beta: t[1] }, &ClockParams { alpha: t[2], beta: t[3] }, delta, sigma)
        };
        for r in 0..4 {
            for c in r..4 {
                let mut d = 0.0;
                for (sr, sc, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    let mut t = theta;
                    t[r] += sr * step;
                    t[c] += sc * step;
                    d += sign * nll(&t);
                }
                h[r][c] += d / (4.0 * step * step) / draws as f64;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        for c in r..2 {
            worst = worst.max(((h[r][c] - f.ii[(r, c)]) / f.ii[(r, c)]).abs());
            worst = worst.max(((h[r + 2][c + 2] - f.jj[(r, c)]) / f.jj[(r, c)]).abs());
        }
    }
    outcome(worst <= 0.02, format!("diagonal blocks, worst relative gap {worst:.1e} over {draws} draws"))
}

fn c9_baselines() -> Outcome {
    let cfg = ExperimentConfig {
        algorithms: Method::ALL.to_vec(),
        t_c: 0.0,
        curves: true,
        runs: 50,
        seed: 9,
        ..Default::default()
    };
    let runs = run_point(&cfg);
    let mut wins = 0;
    let mut medians: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for o in &runs {
        let floor = |method: Method| {
            let rows: Vec<_> = o.metrics.iter().filter(|m| m.method == method).collect();
            let b: Vec<f64> = rows.iter().map(|m| m.broadcasts).collect();
            let e: Vec<f64> = rows.iter().map(|m| m.rmse_phase).collect();
            broadcasts_to_floor(&b, &e, FLOOR_FACTOR).unwrap_or(f64::INFINITY)
        };
        let f: BTreeMap<Method, f64> = Method::ALL.iter().map(|&m| (m, floor(m))).collect();
        for (m, v) in &f {
            medians.entry(*m).or_default().push(*v);
        }
        let ours = f[&Method::Bp].max(f[&Method::Mf]);
        if ours < f[&Method::Ats] && ours < f[&Method::Lc] {
            wins += 1;
        }
    }
    let med: Vec<String> = medians
        .iter_mut()
        .map(|(m, v)| {
            v.sort_by(f64::total_cmp);
            format!("{} {:.0}", m.name(), v[v.len() / 2])
        })
        .collect();
    outcome(
        wins * 10 >= runs.len() * 8,
        format!("{wins}/{} runs; median broadcasts to floor: {}", runs.len(), med.join(", ")),
    )
}

fn c10_grid_scaling() -> Outcome {
    let cfg = ExperimentConfig {
        topology: TopologyKind::Grid,
        masters: vec![0],
        algorithms: vec![Method::Bp],
        runs: 50,
        seed: 10,
        // Means on the 12x12 grid need a few thousand iterations; stopping
        // early leaves an odd/even hop pattern from the parallel schedule.
        max_iter: 5000,
        sweep: Some(SweepParam::GridSide),
        sweep_values: vec![4.0, 8.0, 12.0],
        ..Default::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut unconverged = 0;
    for p in run_experiment(&cfg).expect("experiment") {
        unconverged += p.runs.iter().flat_map(|o| &o.metrics).filter(|m| m.status != RunStatus::Ok).count();
        let nodes = per_node_rmse(&p, Method::Bp);
        let hops: Vec<f64> = nodes.values().map(|v| v.4 as f64).collect();
        let phase: Vec<f64> = nodes.values().map(|v| v.0).collect();
        let skew: Vec<f64> = nodes.values().map(|v| v.1).collect();
        let (rp, rs) = (spearman(&hops, &phase), spearman(&hops, &skew));
        ok &= rp > 0.8 && rs > 0.8;
        // Same statistic on RMSE pooled per hop level, for information only.
        let mut levels: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for v in nodes.values() {
            let e = levels.entry(v.4).or_default();
            e.0 += v.0 * v.0;
            e.1 += v.1 * v.1;
            e.2 += 1;
        }
        let lh: Vec<f64> = levels.keys().map(|&h| h as f64).collect();
        let lp: Vec<f64> = levels.values().map(|e| (e.0 / e.2 as f64).sqrt()).collect();
        let ls: Vec<f64> = levels.values().map(|e| (e.1 / e.2 as f64).sqrt()).collect();
        parts.push(format!(
            "{0}x{0}: phase {rp:.3}, skew {rs:.3} (per hop level {1:.3}, {2:.3})",
            p.sweep_value.unwrap(),
            spearman(&lh, &lp),
            spearman(&lh, &ls)
        ));
    }
    outcome(ok, format!("Spearman(hops, RMSE) per node {}; runs not converged {unconverged}", parts.join("; ")))
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("c.toml");
    std::fs::write(
        &config,
        "name = \"det\"\nnodes = 12\nruns = 6\nseed = 11\npackets = 5\nalgorithms = [\"bp\", \"mf\", \"ats\", \"admm\", \"lc\"]\nats_rounds = 40\nadmm_iterations = 40\nlc_iterations = 40\ncurves = true\n",
    )
    .unwrap();
    let run = |out: &str| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sync"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--bcrb", "--trace"])
            .output()
            .expect("spawn sync");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let mut files: Vec<_> = std::fs::read_dir(dir.path().join(out))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap()))
            .collect::<Vec<_>>()
    };
    let (a, b) = (run("a"), run("b"));
    let same = !a.is_empty() && a == b;
    outcome(same, format!("{} files, byte-identical: {same}", a.len()))
}

/// Id, name, runtime budget, check.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: Vec<Criterion> = vec![
        (1, "tree exactness", Duration::from_secs(10), c1_tree_exactness),
        (2, "profile likelihood", Duration::from_secs(5), c2_profile_likelihood),
        (3, "BP equals MF", Duration::from_secs(30), c3_bp_equals_mf),
        (4, "convergence speed", Duration::from_secs(60), c4_convergence_speed),
        (5, "variance monotonicity", Duration::from_secs(60), c5_variance_monotone),
        (6, "noise scaling", Duration::from_secs(180), c6_noise_scaling),
        (7, "BCRB consistency", Duration::from_secs(180), c7_bcrb_consistency),
        (8, "Fisher block oracle", Duration::from_secs(30), c8_fisher_oracle),
        (9, "baseline comparison", Duration::from_secs(300), c9_baselines),
        (10, "grid scaling", Duration::from_secs(180), c10_grid_scaling),
        (11, "determinism", Duration::from_secs(60), c11_determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, budget, f) in criteria {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id:>2} {tag}: {name}: {} [{:.1} s of {} s]",
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if !pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
