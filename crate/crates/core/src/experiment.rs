//! One Monte-Carlo run of an experiment: draw a network and its clocks,
//! simulate the exchanges, run the requested synchronizers and score them.
//!
//! The configuration is flat so that it maps onto a one-key-per-line file.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::baselines::{
    pairwise_relation, run_admm, run_ats, run_lc, AdmmConfig, AtsConfig, BroadcastChannel, LcConfig, Snapshot,
    PLL_SKEW_ACCURACY,
};
use crate::bcrb::{bcrb, ClockMoments, InvSkewMoments, NodeBound, PhaseMoments, ThetaPrior};
use crate::clock::{ClockParams, TransformedParams};
use crate::measurement::{
    network_schedule, propagation_delay, sample_clocks, simulate_network, ClockDistribution, LinkDelayModel,
    LinkOrder,
};
use crate::metrics::{rmse_metrics, ErrorMode};
use crate::network::{EpochPolicy, NetworkModel};
use crate::prior::PriorConfig;
use crate::sync::{run_sync, Algorithm, Schedule, SyncConfig, SyncError, SyncResult, TraceRow};
use crate::topology::{grid, random_geometric, NodeId, Topology};
use crate::Error;

/// Resampling budget for connected random topologies.
pub const TOPOLOGY_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    Bp,
    Mf,
    Ats,
    Admm,
    Lc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Bp, Method::Mf, Method::Ats, Method::Admm, Method::Lc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bp => "bp",
            Method::Mf => "mf",
            Method::Ats => "ats",
            Method::Admm => "admm",
            Method::Lc => "lc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TopologyKind {
    #[default]
    RandomGeometric,
    Grid,
    Explicit,
}

/// Parameter varied across the points of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SweepParam {
    Packets,
    SigmaW,
    /// Square grid side length.
    GridSide,
    /// Half width of the symmetric phase interval.
    PhaseHalfWidth,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ExperimentConfig {
    pub name: String,

    pub topology: TopologyKind,
    /// Random geometric graphs: node count, square side and connection
    /// radius in meters.
    pub nodes: usize,
    pub area: f64,
    pub radius: f64,
    pub rows: usize,
    pub cols: usize,
    pub grid_spacing: f64,
    /// Explicit topologies.
    pub positions: Vec<[f64; 2]>,
    pub edges: Vec<[NodeId; 2]>,
    /// Draw a fresh random topology in every run; otherwise run 0's
    /// topology stream is reused.
    pub new_topology_per_run: bool,
    pub masters: Vec<NodeId>,

    /// Packets per direction and link.
    pub packets: usize,
    pub sigma_w: f64,
    pub t_c: f64,
    pub speed: f64,
    /// Time between consecutive packets on the channel.
    pub spacing: f64,
    pub link_order: LinkOrder,

    pub sigma_alpha_sq: f64,
    pub phase_min: f64,
    pub phase_max: f64,
    pub prior_phase_std: f64,

    pub algorithms: Vec<Method>,
    pub bp_schedule: Schedule,
    pub mf_schedule: Schedule,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,

    pub ats_rounds: usize,
    pub ats_rho: f64,
    pub admm_iterations: usize,
    pub admm_step: f64,
    pub admm_inner: usize,
    pub admm_skew_accuracy: f64,
    pub lc_iterations: usize,
    pub lc_lambda: f64,

    pub bcrb: bool,
    /// Emit a metric row after every iteration instead of only the last.
    pub curves: bool,
    pub runs: usize,
    pub seed: u64,

    pub sweep: Option<SweepParam>,
    pub sweep_values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::from("experiment"),
            topology: TopologyKind::RandomGeometric,
            nodes: 26,
            area: 1000.0,
            radius: 300.0,
            rows: 4,
            cols: 4,
            grid_spacing: 100.0,
            positions: Vec::new(),
            edges: Vec::new(),
            new_topology_per_run: true,
            masters: vec![0],
            packets: 20,
            sigma_w: 93e-9,
            t_c: 7.6e-6,
            speed: 299_792_458.0,
            spacing: 0.01,
            link_order: LinkOrder::Interleaved,
            sigma_alpha_sq: 1e-8,
            phase_min: -10.0,
            phase_max: 10.0,
            prior_phase_std: 5.8,
            algorithms: vec![Method::Bp, Method::Mf],
            bp_schedule: Schedule::Parallel,
            mf_schedule: Schedule::Serial,
            tol: 1e-9,
            max_iter: 100,
            damping: 1.0,
            ats_rounds: 600,
            ats_rho: 0.6,
            admm_iterations: 300,
            admm_step: AdmmConfig::default().step,
            admm_inner: 1,
            admm_skew_accuracy: PLL_SKEW_ACCURACY,
            lc_iterations: 300,
            lc_lambda: 0.9,
            bcrb: false,
            curves: false,
            runs: 100,
            seed: 1,
            sweep: None,
            sweep_values: Vec::new(),
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m| Err(Error::InvalidConfig(m));
        if !(positive(self.sigma_w) && positive(self.spacing) && positive(self.speed)) {
            return bad("sigma_w, spacing and speed must be positive");
        }
        if !(self.t_c >= 0.0 && self.t_c.is_finite()) {
            return bad("t_c must be non-negative");
        }
        if !(positive(self.sigma_alpha_sq) && positive(self.prior_phase_std)) {
            return bad("prior variances must be positive");
        }
        if !(self.phase_min <= self.phase_max) {
            return bad("phase_min must not exceed phase_max");
        }
        if self.packets == 0 || self.runs == 0 {
            return bad("packets and runs must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        // tol = 0 runs every iteration up to max_iter
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol must be finite and non-negative");
        }
        if !positive(self.admm_step) {
            return bad("admm_step must be positive");
        }
        if !(0.0..1.0).contains(&self.ats_rho) || !(0.0..1.0).contains(&self.lc_lambda) {
            return bad("filter constants must lie in [0, 1)");
        }
        if self.algorithms.is_empty() && !self.bcrb {
            return bad("nothing to run");
        }
        if self.sweep.is_some() && self.sweep_values.is_empty() {
            return bad("sweep without sweep_values");
        }
        match self.topology {
            TopologyKind::RandomGeometric if !(self.nodes >= 2 && positive(self.area) && positive(self.radius)) => {
                bad("random topology needs nodes >= 2 and positive area and radius")
            }
            TopologyKind::Grid if self.rows * self.cols < 2 || !positive(self.grid_spacing) => {
                bad("grid needs at least two nodes and positive spacing")
            }
            TopologyKind::Explicit if self.positions.len() < 2 => bad("explicit topology needs positions"),
            _ => Ok(()),
        }
    }

    /// Copy with the sweep parameter set to `value`.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self, Error> {
        let mut c = self.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig("sweep value must be a positive integer"))
            }
        };
        match param {
            SweepParam::Packets => c.packets = count()?,
            SweepParam::SigmaW => c.sigma_w = value,
            SweepParam::GridSide => {
                c.rows = count()?;
                c.cols = c.rows;
            }
            SweepParam::PhaseHalfWidth => {
                c.phase_min = -value;
                c.phase_max = value;
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// The configurations of every sweep point, or just this one.
    pub fn points(&self) -> Result<Vec<(Option<f64>, Self)>, Error> {
        self.validate()?;
        match self.sweep {
            None => Ok(vec![(None, self.clone())]),
            Some(p) => self
                .sweep_values
                .iter()
                .map(|&v| Ok((Some(v), self.with_param(p, v)?)))
                .collect(),
        }
    }

    pub fn build_topology<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Topology, Error> {
        match self.topology {
            TopologyKind::RandomGeometric => {
                random_geometric(self.nodes, self.area, self.radius, &self.masters, TOPOLOGY_ATTEMPTS, rng)
            }
            TopologyKind::Grid => {
                let g = grid(self.rows, self.cols, self.grid_spacing)?;
                Topology::new(g.positions().to_vec(), &self.masters, g.edges().iter().copied())
            }
            TopologyKind::Explicit => Topology::new(
                self.positions.clone(),
                &self.masters,
                self.edges.iter().map(|e| (e[0], e[1])),
            ),
        }
    }

    pub fn delay_model(&self) -> LinkDelayModel {
        LinkDelayModel {
            t_c: self.t_c,
            speed: self.speed,
            sigma_w: self.sigma_w,
        }
    }

    pub fn clock_distribution(&self) -> ClockDistribution {
        ClockDistribution {
            sigma_alpha_sq: self.sigma_alpha_sq,
            phase_min: self.phase_min,
            phase_max: self.phase_max,
        }
    }

    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            sigma_lambda_sq: self.sigma_alpha_sq,
            sigma_nu_sq: self.prior_phase_std * self.prior_phase_std,
        }
    }

    pub fn sync_config(&self, method: Method) -> SyncConfig {
        let (algorithm, schedule) = match method {
            Method::Mf => (Algorithm::Mf, self.mf_schedule),
            _ => (Algorithm::Bp, self.bp_schedule),
        };
        SyncConfig {
            algorithm,
            schedule,
            max_iter: self.max_iter,
            tol: self.tol,
            damping: self.damping,
            initiator: None,
            trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    NotConverged,
    Failed(String),
}

impl RunStatus {
    pub fn label(&self) -> String {
        match self {
            RunStatus::Ok => String::from("ok"),
            RunStatus::NotConverged => String::from("not_converged"),
            RunStatus::Failed(m) => format!("failed: {m}"),
        }
    }
}

/// Network-wide errors of one method after some iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run: usize,
    pub method: Method,
    pub iteration: usize,
    /// Packets sent per node, averaged over the nodes.
    pub broadcasts: f64,
    pub rmse_phase: f64,
    pub rmse_skew_ppm: f64,
    pub status: RunStatus,
    /// RMS of the agents' bounds, when requested.
    pub bcrb_phase: Option<f64>,
    pub bcrb_skew_ppm: Option<f64>,
}

/// Final error of one node under one method.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub run: usize,
    pub method: Method,
    pub node: NodeId,
    pub hops: usize,
    pub phase_error: f64,
    pub skew_error_ppm: f64,
    pub bcrb_phase: Option<f64>,
    pub bcrb_skew_ppm: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub metrics: Vec<MetricRow>,
    pub nodes: Vec<NodeRow>,
    /// Message passing traces.
    pub traces: Vec<(Method, Vec<TraceRow>)>,
    pub bounds: Vec<NodeBound>,
}

/// Everything a run draws before any synchronizer starts.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub clocks: Vec<ClockParams>,
    pub delays: Vec<f64>,
    pub schedules: Vec<crate::measurement::ExchangeSchedule>,
    pub measurements: Vec<crate::measurement::LinkMeasurements>,
}

impl Scenario {
    /// Draws the topology from `topo_rng` and everything else from `rng`.
    pub fn draw<R: Rng + ?Sized, T: Rng + ?Sized>(
        cfg: &ExperimentConfig,
        topo_rng: &mut T,
        rng: &mut R,
    ) -> Result<Self, Error> {
        let topology = cfg.build_topology(topo_rng)?;
        let clocks = sample_clocks(&topology, &cfg.clock_distribution(), rng);
        let model = cfg.delay_model();
        let delays = (0..topology.edges().len())
            .map(|e| propagation_delay(&topology, &model, e))
            .collect();
        let schedules = network_schedule(&topology, cfg.packets, cfg.spacing, 0.0, cfg.link_order);
        let measurements = simulate_network(&topology, &clocks, &model, &schedules, rng);
        Ok(Self {
            topology,
            clocks,
            delays,
            schedules,
            measurements,
        })
    }

    pub fn model(&self, cfg: &ExperimentConfig) -> Result<NetworkModel, Error> {
        NetworkModel::build(
            &self.topology,
            &self.measurements,
            cfg.sigma_w,
            &cfg.prior(),
            EpochPolicy::PerNode,
        )
    }

    /// Measurement packets sent by each node.
    pub fn packets_sent(&self) -> Vec<usize> {
        let mut p = vec![0; self.topology.num_nodes()];
        for (m, &(i, j)) in self.measurements.iter().zip(self.topology.edges()) {
            p[i] += m.k_ij();
            p[j] += m.k_ji();
        }
        p
    }
}

/// Agents are scored; with no master, errors are taken relative to the
/// network mean since the time scale is only fixed up to a common shift.
fn error_mode(topology: &Topology, method: Method) -> ErrorMode {
    match method {
        Method::Bp | Method::Mf if !topology.masters().is_empty() => ErrorMode::VsTruth,
        Method::Lc if !topology.masters().is_empty() => ErrorMode::VsTruth,
        _ => ErrorMode::VsNetworkMean,
    }
}

/// Per-iteration estimates of a message passing run from its trace.
pub fn sync_snapshots(model: &NetworkModel, result: &SyncResult) -> Vec<Snapshot> {
    let n = model.num_nodes();
    let iterations = result.broadcast_history.len();
    let fixed: Vec<ClockParams> = (0..n)
        .map(|i| {
            model
                .master_value(i)
                .map(|_| result.estimates[i])
                .unwrap_or(ClockParams::MASTER)
        })
        .collect();
    let mut snaps: Vec<Snapshot> = (0..iterations)
        .map(|k| Snapshot {
            iteration: k,
            broadcasts: result.broadcast_history[k] as f64 / n as f64,
            time: 0.0,
            estimates: fixed.clone(),
        })
        .collect();
    for row in &result.trace {
        if let Some(s) = snaps.get_mut(row.iteration) {
            let t = TransformedParams {
                lambda: row.mean_lambda,
                nu: row.mean_nu,
            };
            s.estimates[row.node] = t.to_clock().unwrap_or(ClockParams {
                alpha: f64::NAN,
                beta: f64::NAN,
            });
        }
    }
    snaps
}

/// Runs `cfg` once on `scenario`.
pub fn run_scenario<R: Rng + ?Sized>(cfg: &ExperimentConfig, scenario: &Scenario, run: usize, rng: &mut R) -> RunOutput {
    let topo = &scenario.topology;
    let agents = topo.agents();
    let hops = topo.hops_to_master();
    let mut out = RunOutput::default();

    let bounds: Option<Vec<NodeBound>> = if cfg.bcrb {
        let moments = ClockMoments {
            inv_skew: InvSkewMoments::approx(1.0, cfg.sigma_alpha_sq),
            phase: PhaseMoments::uniform(cfg.phase_min, cfg.phase_max),
        };
        let prior = ThetaPrior {
            skew_var: cfg.sigma_alpha_sq,
            phase_var: cfg.prior_phase_std * cfg.prior_phase_std,
        };
        bcrb(topo, &scenario.schedules, &scenario.delays, cfg.sigma_w, &moments, &prior).ok()
    } else {
        None
    };
    let bound_of = |i: NodeId| bounds.as_ref().and_then(|b| b.iter().find(|x| x.node == i));
    let (bcrb_phase, bcrb_skew) = match &bounds {
        Some(b) if !b.is_empty() => {
            let k = b.len() as f64;
            (
                Some(libm::sqrt(b.iter().map(|x| x.phase * x.phase).sum::<f64>() / k)),
                Some(libm::sqrt(b.iter().map(|x| x.skew * x.skew).sum::<f64>() / k) * 1e6),
            )
        }
        _ => (None, None),
    };

    let mut model: Option<Result<NetworkModel, Error>> = None;
    for &method in &cfg.algorithms {
        let mode = error_mode(topo, method);
        let outcome: Result<(Vec<Snapshot>, RunStatus), Error> = match method {
            Method::Bp | Method::Mf => match model.get_or_insert_with(|| scenario.model(cfg)) {
                Err(e) => Err(e.clone()),
                Ok(m) => match run_sync(m, &cfg.sync_config(method)) {
                    Ok(r) => {
                        out.traces.push((method, r.trace.clone()));
                        Ok((sync_snapshots(m, &r), RunStatus::Ok))
                    }
                    Err(SyncError::NotConverged(r)) => {
                        out.traces.push((method, r.trace.clone()));
                        Ok((sync_snapshots(m, &r), RunStatus::NotConverged))
                    }
                    Err(SyncError::Model(e)) => Err(e),
                },
            },
            Method::Ats | Method::Admm => {
                let ch = BroadcastChannel {
                    topology: topo,
                    clocks: &scenario.clocks,
                    delays: &scenario.delays,
                    sigma_w: cfg.sigma_w,
                    start: 0.0,
                    spacing: cfg.spacing,
                };
                let snaps = if method == Method::Ats {
                    let ac = AtsConfig {
                        rho_eta: cfg.ats_rho,
                        rho_alpha: cfg.ats_rho,
                        rho_o: cfg.ats_rho,
                        rounds: cfg.ats_rounds,
                    };
                    run_ats(&ch, &ac, rng)
                } else {
                    let ac = AdmmConfig {
                        step: cfg.admm_step,
                        inner: cfg.admm_inner,
                        iterations: cfg.admm_iterations,
                        skew_accuracy: cfg.admm_skew_accuracy,
                    };
                    run_admm(&ch, &ac, rng)
                };
                Ok((snaps, RunStatus::Ok))
            }
            Method::Lc => {
                let rel: Option<Vec<_>> = scenario.measurements.iter().map(pairwise_relation).collect();
                match rel {
                    None => Err(Error::InvalidConfig("LC needs at least three packets per link")),
                    Some(rel) => {
                        let lc = LcConfig {
                            lambda: cfg.lc_lambda,
                            iterations: cfg.lc_iterations,
                        };
                        Ok((run_lc(topo, &rel, &scenario.packets_sent(), &lc), RunStatus::Ok))
                    }
                }
            }
        };
        match outcome {
            Err(e) => out.metrics.push(MetricRow {
                run,
                method,
                iteration: 0,
                broadcasts: f64::NAN,
                rmse_phase: f64::NAN,
                rmse_skew_ppm: f64::NAN,
                status: RunStatus::Failed(format!("{e}")),
                bcrb_phase,
                bcrb_skew_ppm: bcrb_skew,
            }),
            Ok((snaps, status)) => {
                let last = snaps.len() - 1;
                let keep = |k: usize| cfg.curves || k == last;
                for (k, s) in snaps.iter().enumerate().filter(|(k, _)| keep(*k)) {
                    let m = rmse_metrics(&s.estimates, &scenario.clocks, &agents, mode, s.time);
                    out.metrics.push(MetricRow {
                        run,
                        method,
                        iteration: s.iteration,
                        broadcasts: s.broadcasts,
                        rmse_phase: m.rmse_phase,
                        rmse_skew_ppm: m.rmse_skew_ppm(),
                        status: if k == last { status.clone() } else { RunStatus::Ok },
                        bcrb_phase,
                        bcrb_skew_ppm: bcrb_skew,
                    });
                    if k == last {
                        for e in &m.per_node {
                            let b = bound_of(e.node);
                            out.nodes.push(NodeRow {
                                run,
                                method,
                                node: e.node,
                                hops: hops[e.node],
                                phase_error: e.phase,
                                skew_error_ppm: e.skew * 1e6,
                                bcrb_phase: b.map(|b| b.phase),
                                bcrb_skew_ppm: b.map(|b| b.skew * 1e6),
                            });
                        }
                    }
                }
            }
        }
    }
    if cfg.algorithms.is_empty() {
        for &i in &agents {
            let b = bound_of(i);
            out.nodes.push(NodeRow {
                run,
                method: Method::Bp,
                node: i,
                hops: hops[i],
                phase_error: f64::NAN,
                skew_error_ppm: f64::NAN,
                bcrb_phase: b.map(|b| b.phase),
                bcrb_skew_ppm: b.map(|b| b.skew * 1e6),
            });
        }
    }
    out.bounds = bounds.unwrap_or_default();
    out
}

/// Draws a scenario and runs `cfg` on it. A scenario that cannot be drawn
/// yields one failed row per method.
pub fn run_once<R: Rng + ?Sized, T: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    run: usize,
    topo_rng: &mut T,
    rng: &mut R,
) -> RunOutput {
    match Scenario::draw(cfg, topo_rng, rng) {
        Ok(s) => run_scenario(cfg, &s, run, rng),
        Err(e) => RunOutput {
            metrics: cfg
                .algorithms
                .iter()
                .map(|&method| MetricRow {
                    run,
                    method,
                    iteration: 0,
                    broadcasts: f64::NAN,
                    rmse_phase: f64::NAN,
                    rmse_skew_ppm: f64::NAN,
                    status: RunStatus::Failed(format!("{e}")),
                    bcrb_phase: None,
                    bcrb_skew_ppm: None,
                })
                .collect(),
            ..Default::default()
        },
    }
}
