//! Closed-loop simulation of a leader/follower swarm under sampled sensing,
//! with followers joining and leaving mid-run.

mod analysis;
mod maneuver;
mod output;
mod reference;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    self, autotune, build_integrator, check_gain_conditions, control_input, find_diagonal_q, lyapunov_derivative,
    lyapunov_value, schedule_jump, wsre_step, ControllerError, ErrorSample, GainParams, GainReport, JumpCase,
    PhiSchedule, ScheduleState,
};
use crate::framework::{
    build_laplacian, compute_layers, verify_affine_localizability, FrameworkDoc, FrameworkError, NodeId,
    NominalFramework,
};
use crate::geometry::Tolerances;
use crate::lcc::{DeliveryOrder, LccError, LccEvent, LccNetwork, MessageLog};
use crate::linalg;
use crate::reconfig::{fia_add, foa_remove, AttachmentSpec, ReconfigError, TieBreak};

pub use analysis::{interval_fits, max_error_series, IntervalFit, DECAY_FLOOR};
pub use maneuver::{identity_rows, rotation_scale_shear, Keyframe, ManeuverSchedule};
pub use output::{render_svg, write_outputs};
pub use reference::{reference_framework, reference_scenario};

/// Relative size of `s_i` below which the flow inequality is treated as
/// numerically unresolvable.
pub const WSRE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error(transparent)]
    Reconfig(#[from] ReconfigError),
    #[error(transparent)]
    Lcc(#[from] LccError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("framework at t = {t} fails verification: {notes}")]
    Verification { t: f64, notes: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventAction {
    Remove {
        node: NodeId,
        #[serde(default)]
        tie_break: TieBreak,
    },
    Add {
        node: NodeId,
        position: Vec<f64>,
        in_neighbors: Vec<NodeId>,
        /// Added to the spawn position; the new agent otherwise starts on
        /// its desired trajectory.
        #[serde(default)]
        spawn_offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub t: f64,
    #[serde(flatten)]
    pub action: EventAction,
}

fn default_order() -> usize {
    2
}
fn default_dt() -> f64 {
    0.01
}
fn default_sample_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub framework: FrameworkDoc,
    #[serde(default = "default_order")]
    pub order: usize,
    /// Explicit gains; tuned automatically when absent.
    #[serde(default)]
    pub gains: Option<GainParams>,
    #[serde(default)]
    pub maneuver: ManeuverSchedule,
    /// Sampling period; defaults to `T*`.
    #[serde(default)]
    pub smsi: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    /// Initial position offsets from the desired formation.
    #[serde(default)]
    pub initial_offsets: BTreeMap<NodeId, Vec<f64>>,
    /// Shuffled packet delivery for the reconfiguration protocol.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateRow {
    pub t: f64,
    pub values: Vec<(NodeId, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovRow {
    pub t: f64,
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord {
    pub t: f64,
    pub case: JumpCase,
    pub v_before: f64,
    pub v_after: f64,
}

impl JumpRecord {
    pub fn non_increasing(&self, tol: f64) -> bool {
        self.v_after - self.v_before <= tol * self.v_before.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub cause: Option<String>,
    pub inheritance_path: Option<Vec<NodeId>>,
    pub followers: Vec<NodeId>,
    pub layers: Vec<Vec<NodeId>>,
    pub q: BTreeMap<NodeId, f64>,
    pub lambda_min_sym: f64,
    pub verification_pass: bool,
    pub framework: FrameworkDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventMessages {
    pub t: f64,
    pub event: EventAction,
    pub log: MessageLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FlowStats {
    pub checked: usize,
    pub satisfied: usize,
    pub decay_rate: f64,
}

impl FlowStats {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.checked as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub dim: usize,
    pub order: usize,
    pub dt: f64,
    pub smsi: f64,
    pub horizon: f64,
    pub gains: GainParams,
    pub gain_report: GainReport,
    pub states: Vec<StateRow>,
    pub errors: Vec<StateRow>,
    pub lyapunov: Vec<LyapunovRow>,
    pub jumps: Vec<JumpRecord>,
    pub epochs: Vec<EpochRecord>,
    pub messages: Vec<EventMessages>,
    pub flow: FlowStats,
    /// Largest deviation from `s_f = (Omega_ff ⊗ I) e_f` over all samples.
    pub identity_deviation: f64,
    pub maneuver_windows: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// `s_i = sum_j w_ij (x_i - x_j)` for every follower of `fw`.
pub fn true_wsre(fw: &NominalFramework, states: &BTreeMap<NodeId, Vec<f64>>) -> BTreeMap<NodeId, Vec<f64>> {
    fw.followers()
        .iter()
        .map(|&i| {
            let xi = &states[&i];
            let mut s = vec![0.0; xi.len()];
            for &(j, w) in fw.in_table(i) {
                for (k, xj) in states[&j].iter().enumerate() {
                    s[k] += w * (xi[k] - xj);
                }
            }
            (i, s)
        })
        .collect()
}

struct EpochData {
    fw: NominalFramework,
    omega_ff: DMatrix<f64>,
    q: Vec<f64>,
    layers: Vec<Vec<NodeId>>,
    path: Option<Vec<NodeId>>,
}

impl EpochData {
    fn new(fw: NominalFramework, path: Option<Vec<NodeId>>) -> Result<Self, SimError> {
        let omega_ff = build_laplacian(&fw).ff;
        let layering = compute_layers(&fw).map_err(|e| SimError::Verification {
            t: f64::NAN,
            notes: format!("not layerable: {e}"),
        })?;
        let index: BTreeMap<NodeId, usize> = fw.followers().iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let order: Vec<usize> = layering.order().iter().filter_map(|id| index.get(id).copied()).collect();
        let q = find_diagonal_q(&omega_ff, &order)?;
        Ok(EpochData { fw, omega_ff, q, layers: layering.layers, path })
    }

    fn q_map(&self) -> BTreeMap<NodeId, f64> {
        self.fw.followers().iter().copied().zip(self.q.iter().copied()).collect()
    }
}

fn plan_epochs(fw0: NominalFramework, events: &[EventSpec], tol: &Tolerances) -> Result<Vec<EpochData>, SimError> {
    let mut out = vec![EpochData::new(fw0, None)?];
    for ev in events {
        let cur = &out.last().unwrap().fw;
        let (next, path) = match &ev.action {
            EventAction::Remove { node, tie_break } => {
                let (fw, path) = foa_remove(cur, *node, *tie_break)?;
                (fw, Some(path.chain))
            }
            EventAction::Add { node, position, in_neighbors, .. } => {
                let spec = AttachmentSpec { node: *node, position: position.clone(), in_neighbors: in_neighbors.clone() };
                (fia_add(cur, &spec, tol)?, None)
            }
        };
        let report = verify_affine_localizability(&next, tol);
        if !report.pass {
            return Err(SimError::Verification { t: ev.t, notes: report.notes.join("; ") });
        }
        out.push(EpochData::new(next, path)?);
    }
    Ok(out)
}

/// Everything that changes at switching instants.
struct Loop<'a> {
    sc: &'a Scenario,
    dim: usize,
    order: usize,
    p: DMatrix<f64>,
    gamma: Vec<f64>,
    gains: GainParams,
    phi: PhiSchedule,
    lambda_max_p: f64,
    fw: NominalFramework,
    q: BTreeMap<NodeId, f64>,
    x: BTreeMap<NodeId, Vec<f64>>,
    anchor: BTreeMap<NodeId, Vec<f64>>,
    anchor_t: f64,
    sched: ScheduleState,
}

impl Loop<'_> {
    fn all_states(&self, t: f64) -> BTreeMap<NodeId, Vec<f64>> {
        let mut out = self.x.clone();
        for &l in self.fw.leaders() {
            out.insert(l, self.sc.maneuver.stacked_state(self.fw.position(l).unwrap(), t, self.order));
        }
        out
    }

    fn s_hat(&self, id: NodeId, t: f64) -> Vec<f64> {
        wsre_step(&self.anchor[&id], t - self.anchor_t, self.order, self.dim)
    }

    fn input(&self, id: NodeId, t: f64) -> Vec<f64> {
        control_input(self.gains.beta, self.q[&id], &self.gamma, &self.s_hat(id, t), self.dim)
    }

    /// `x' = (x_2, ..., x_n, u)`.
    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = controller::shift(x, self.order, self.dim);
        let top = (self.order - 1) * self.dim;
        out[top..].copy_from_slice(u);
        out
    }

    fn state_derivatives(&self, t: f64) -> BTreeMap<NodeId, Vec<f64>> {
        let mut out = BTreeMap::new();
        for (&id, x) in &self.x {
            out.insert(id, self.derivative(x, &self.input(id, t)));
        }
        for &l in self.fw.leaders() {
            let chi = self.fw.position(l).unwrap();
            let mut v = Vec::with_capacity(self.order * self.dim);
            for k in 1..=self.order {
                v.extend(self.sc.maneuver.point_derivative(chi, t, k));
            }
            out.insert(l, v);
        }
        out
    }

    fn samples(&self, t: f64) -> BTreeMap<NodeId, ErrorSample> {
        let s = true_wsre(&self.fw, &self.all_states(t));
        let s_dot = true_wsre(&self.fw, &self.state_derivatives(t));
        s.into_iter()
            .map(|(id, s)| {
                let s_hat = self.s_hat(id, t);
                let delta: Vec<f64> = s.iter().zip(&s_hat).map(|(a, b)| a - b).collect();
                let cs_hat = controller::shift(&s_hat, self.order, self.dim);
                let sd = s_dot[&id].clone();
                let delta_dot = sd.iter().zip(&cs_hat).map(|(a, b)| a - b).collect();
                (id, ErrorSample { s, s_dot: sd, delta, delta_dot })
            })
            .collect()
    }

    fn lyapunov(&self, t: f64) -> (LyapunovRow, bool) {
        let samples = self.samples(t);
        let tau = t - self.anchor_t;
        let (phi, phi_dot) = (self.phi.phi(tau), self.phi.phi_dot(tau));
        let terms = lyapunov_value(&samples, &self.sched, phi, &self.p, self.dim, t);
        let dv = lyapunov_derivative(&samples, &self.sched, phi, phi_dot, &self.p, self.dim, t);
        let v = terms.total();
        let c = self.gains.decay_rate();
        let theta_sum: f64 = self.sched.thetas(t).values().sum();
        let scale = self.sc.maneuver_scale();
        let floor = WSRE_FLOOR * scale;
        let tol = 2.0 * (self.sched.theta_rate + c + 1.0) * (1.0 + phi) * theta_sum * self.lambda_max_p * floor * floor;
        let ok = dv <= -c * v + tol;
        (LyapunovRow { t, v, v1: terms.v1, v2: terms.v2, v3: terms.v3, dv }, ok)
    }

    fn errors(&self, t: f64) -> BTreeMap<NodeId, Vec<f64>> {
        self.x
            .iter()
            .map(|(&id, x)| {
                let want = self.sc.maneuver.stacked_state(self.fw.position(id).unwrap(), t, self.order);
                (id, x.iter().zip(&want).map(|(a, b)| a - b).collect())
            })
            .collect()
    }

    fn identity_deviation(&self, t: f64, omega_ff: &DMatrix<f64>) -> f64 {
        let s = true_wsre(&self.fw, &self.all_states(t));
        let e = self.errors(t);
        let ids = self.fw.followers();
        let mut worst: f64 = 0.0;
        for (r, i) in ids.iter().enumerate() {
            for k in 0..self.order * self.dim {
                let pred: f64 = ids.iter().enumerate().map(|(c, j)| omega_ff[(r, c)] * e[j][k]).sum();
                worst = worst.max((pred - s[i][k]).abs());
            }
        }
        worst
    }

    fn resample(&mut self, t: f64) {
        self.anchor = true_wsre(&self.fw, &self.all_states(t));
        self.anchor_t = t;
    }

    fn rk4(&mut self, t: f64, dt: f64) {
        let ids: Vec<NodeId> = self.x.keys().copied().collect();
        for id in ids {
            let x0 = self.x[&id].clone();
            let f = |tt: f64, xx: &[f64]| self.derivative(xx, &self.input(id, tt));
            let add = |a: &[f64], b: &[f64], h: f64| a.iter().zip(b).map(|(x, y)| x + h * y).collect::<Vec<_>>();
            let k1 = f(t, &x0);
            let k2 = f(t + dt / 2.0, &add(&x0, &k1, dt / 2.0));
            let k3 = f(t + dt / 2.0, &add(&x0, &k2, dt / 2.0));
            let k4 = f(t + dt, &add(&x0, &k3, dt));
            let next = (0..x0.len()).map(|k| x0[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])).collect();
            self.x.insert(id, next);
        }
    }
}

impl Scenario {
    /// Typical magnitude of positions, used to scale numerical floors.
    fn maneuver_scale(&self) -> f64 {
        let chi = self.framework.nodes.iter().flat_map(|n| n.position.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.maneuver.keyframes.iter().flat_map(|k| k.b.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let drift = self.maneuver.drift.iter().fold(0.0f64, |m, v| m.max(v.abs())) * self.horizon;
        1.0 + chi + b + drift
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if self.order == 0 {
            return bad("order must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be non-negative, got {}", self.horizon));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be positive".into());
        }
        self.maneuver.validate(self.framework.dim).map_err(SimError::Scenario)?;
        for (id, off) in &self.initial_offsets {
            if off.len() != self.framework.dim {
                return bad(format!("initial offset of node {id} has the wrong dimension"));
            }
        }
        for w in self.events.windows(2) {
            if !(w[1].t > w[0].t) {
                return bad("events must be in strictly increasing time order".into());
            }
        }
        for ev in &self.events {
            if !(ev.t > 0.0 && ev.t < self.horizon) {
                return bad(format!("event time {} lies outside (0, horizon)", ev.t));
            }
            if let EventAction::Add { spawn_offset, .. } = &ev.action {
                if !spawn_offset.is_empty() && spawn_offset.len() != self.framework.dim {
                    return bad("spawn offset has the wrong dimension".into());
                }
            }
        }
        Ok(())
    }
}

/// Base constants used when tuning gains automatically.
pub fn default_gain_base() -> GainParams {
    GainParams::with(1.0, 1.0, 1.0)
}

/// Gains a run of `sc` would use, checked against every planned epoch.
pub fn scenario_gains(sc: &Scenario, tol: &Tolerances) -> Result<GainReport, SimError> {
    sc.validate()?;
    let fw0 = NominalFramework::try_from(sc.framework.clone())?;
    let report = verify_affine_localizability(&fw0, tol);
    if !report.pass {
        return Err(SimError::Verification { t: 0.0, notes: report.notes.join("; ") });
    }
    let model = build_integrator(sc.order, fw0.dim())?;
    let plan = plan_epochs(fw0, &sc.events, tol)?;
    let pairs: Vec<(DMatrix<f64>, Vec<f64>)> = plan.iter().map(|e| (e.omega_ff.clone(), e.q.clone())).collect();
    let gains = match sc.gains {
        Some(g) => g,
        None => autotune(&model, &pairs, sc.dt, &default_gain_base())?,
    };
    Ok(check_gain_conditions(&model, &gains, &pairs)?)
}

pub fn run(sc: &Scenario, tol: &Tolerances) -> Result<SimResult, SimError> {
    sc.validate()?;
    let fw0 = NominalFramework::try_from(sc.framework.clone())?;
    let report0 = verify_affine_localizability(&fw0, tol);
    if !report0.pass {
        return Err(SimError::Verification { t: 0.0, notes: report0.notes.join("; ") });
    }
    for id in sc.initial_offsets.keys() {
        if !fw0.followers().contains(id) {
            return Err(SimError::Scenario(format!("initial offset for {id}, which is not a follower")));
        }
    }
    let (dim, order) = (fw0.dim(), sc.order);
    let model = build_integrator(order, dim)?;
    let plan = plan_epochs(fw0.clone(), &sc.events, tol)?;
    let epoch_pairs: Vec<(DMatrix<f64>, Vec<f64>)> = plan.iter().map(|e| (e.omega_ff.clone(), e.q.clone())).collect();

    let mut warnings = Vec::new();
    let gains = match sc.gains {
        Some(g) => g,
        None => autotune(&model, &epoch_pairs, sc.dt, &default_gain_base())?,
    };
    let gain_report = check_gain_conditions(&model, &gains, &epoch_pairs)?;
    if !gain_report.pass {
        warnings.push("gain conditions are violated on at least one epoch".to_string());
    }
    let smsi_req = sc.smsi.unwrap_or(gains.t_star);
    let ks = (smsi_req / sc.dt).round().max(1.0) as usize;
    if ((ks as f64) * sc.dt - smsi_req).abs() > 1e-9 * smsi_req.max(1.0) {
        return Err(SimError::Scenario(format!("sampling period {smsi_req} is not a multiple of dt = {}", sc.dt)));
    }
    let smsi = ks as f64 * sc.dt;
    if smsi > gains.t_star * (1.0 + 1e-12) {
        warnings.push(format!("sampling period {smsi} exceeds T* = {}", gains.t_star));
    }
    let total = (sc.horizon / sc.dt).round() as usize;
    let event_steps: Vec<usize> =
        sc.events.iter().map(|e| ((e.t / (ks as f64 * sc.dt) - 1e-9).ceil() as usize) * ks).collect();
    if event_steps.windows(2).any(|w| w[0] == w[1]) || event_steps.iter().any(|&k| k >= total) {
        return Err(SimError::Scenario("events collide after snapping to sampling instants".into()));
    }

    let p = controller::solve_riccati(&model, gains.xi)?;
    let gamma = controller::gamma_from_p(&model, &p);
    let lambda_max_p = linalg::sym_eig_extremes(&p).1;
    let mut x = BTreeMap::new();
    for &id in fw0.followers() {
        let mut s = sc.maneuver.stacked_state(fw0.position(id).unwrap(), 0.0, order);
        if let Some(off) = sc.initial_offsets.get(&id) {
            for c in 0..dim {
                s[c] += off[c];
            }
        }
        x.insert(id, s);
    }
    let mut lp = Loop {
        sc,
        dim,
        order,
        p,
        gamma,
        gains,
        phi: PhiSchedule::from_params(&gains),
        lambda_max_p,
        q: plan[0].q_map(),
        fw: fw0.clone(),
        x,
        anchor: BTreeMap::new(),
        anchor_t: 0.0,
        sched: ScheduleState::initial(fw0.followers().iter().copied(), &gains, 0.0),
    };
    lp.resample(0.0);

    let delivery = match sc.shuffle_seed {
        Some(seed) => DeliveryOrder::Shuffled { seed },
        None => DeliveryOrder::Synchronous,
    };
    let mut net = LccNetwork::from_framework(&fw0);
    let epoch_record = |k: usize, start: f64, cause: Option<String>| {
        let e: &EpochData = &plan[k];
        EpochRecord {
            index: k,
            start,
            end: sc.horizon,
            cause,
            inheritance_path: e.path.clone(),
            followers: e.fw.followers().to_vec(),
            layers: e.layers.clone(),
            q: e.q_map(),
            lambda_min_sym: gain_report.epochs[k].spectrum.lambda_min_sym,
            verification_pass: verify_affine_localizability(&e.fw, tol).pass,
            framework: FrameworkDoc::from(&e.fw),
        }
    };
    let mut epochs = vec![epoch_record(0, 0.0, None)];
    let mut messages = Vec::new();
    let mut jumps = Vec::new();
    let mut states = Vec::new();
    let mut errors = Vec::new();
    let mut lyap = Vec::new();
    let mut flow = FlowStats { decay_rate: gains.decay_rate(), ..FlowStats::default() };
    let mut identity_deviation: f64 = 0.0;
    let mut epoch = 0;

    for k in 0..=total {
        if total == 0 {
            break;
        }
        let t = k as f64 * sc.dt;
        if k > 0 && k % ks == 0 {
            if let Some(ev_idx) = event_steps.iter().position(|&s| s == k) {
                let ev = &sc.events[ev_idx];
                let (before, _) = lp.lyapunov(t);
                let next = &plan[epoch + 1];
                let (lcc_event, case) = match &ev.action {
                    EventAction::Remove { node, tie_break } => {
                        (LccEvent::Remove { node: *node, tie_break: *tie_break }, JumpCase::Removed(*node))
                    }
                    EventAction::Add { node, .. } => (
                        LccEvent::Add { node: *node, in_table: next.fw.in_table(*node).to_vec() },
                        JumpCase::Added(*node),
                    ),
                };
                let log = net.run_lcc(&lcc_event, delivery)?;
                net.check_consistency()?;
                net.matches(&next.fw)?;
                match &ev.action {
                    EventAction::Remove { node, .. } => {
                        lp.x.remove(node);
                    }
                    EventAction::Add { node, position, spawn_offset, .. } => {
                        let mut s = sc.maneuver.stacked_state(position, t, order);
                        for (c, off) in spawn_offset.iter().enumerate() {
                            s[c] += off;
                        }
                        lp.x.insert(*node, s);
                    }
                }
                lp.fw = next.fw.clone();
                lp.q = next.q_map();
                epoch += 1;
                lp.resample(t);
                lp.sched = schedule_jump(case, &lp.sched, t, &lp.anchor, &lp.q, &lp.p, &gains, dim);
                let (after, _) = lp.lyapunov(t);
                jumps.push(JumpRecord { t, case, v_before: before.v, v_after: after.v });
                let cause = match &ev.action {
                    EventAction::Remove { node, .. } => format!("remove {node}"),
                    EventAction::Add { node, .. } => format!("add {node}"),
                };
                epochs.last_mut().unwrap().end = t;
                epochs.push(epoch_record(epoch, t, Some(cause)));
                messages.push(EventMessages { t, event: ev.action.clone(), log });
            } else {
                let sched = schedule_jump(JumpCase::Sample, &lp.sched, t, &lp.anchor, &lp.q, &lp.p, &gains, dim);
                lp.sched = sched;
                lp.resample(t);
            }
        }

        let (row, ok) = lp.lyapunov(t);
        flow.checked += 1;
        flow.satisfied += ok as usize;
        if k % sc.sample_every == 0 || k == total {
            let all = lp.all_states(t);
            states.push(StateRow { t, values: all.into_iter().collect() });
            errors.push(StateRow { t, values: lp.errors(t).into_iter().collect() });
            lyap.push(row);
            identity_deviation = identity_deviation.max(lp.identity_deviation(t, &plan[epoch].omega_ff));
        }
        if k < total {
            lp.rk4(t, sc.dt);
        }
    }

    Ok(SimResult {
        dim,
        order,
        dt: sc.dt,
        smsi,
        horizon: sc.horizon,
        gains,
        gain_report,
        states,
        errors,
        lyapunov: lyap,
        jumps,
        epochs,
        messages,
        flow,
        identity_deviation,
        maneuver_windows: sc.maneuver.transitions(),
        warnings,
    })
}
