use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{quad_p, GainParams};
use crate::framework::NodeId;

/// `Gamma_bar` such that `phi` runs from `1/eps` down to `eps` in `t_star`.
pub fn gamma_bar(t_star: f64, eps: f64, mu: f64) -> f64 {
    let r = (4.0 * mu + mu * mu).sqrt();
    let h = (2.0 + mu) / 2.0;
    let g1 = h + r / 2.0 + eps;
    let g2 = h - r / 2.0 + eps;
    let g3 = 1.0 + (h + r / 2.0) * eps;
    let g4 = 1.0 + (h - r / 2.0) * eps;
    (g1 * g4 / (g3 * g2)).ln() / (t_star * r)
}

/// Solution of `phi' = -Gamma_bar (phi^2 + (2 + mu) phi + 1)`, `phi(0) = 1/eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSchedule {
    pub gamma_bar: f64,
    r: f64,
    g3: f64,
    g4: f64,
    mu: f64,
}

impl PhiSchedule {
    pub fn new(t_star: f64, eps: f64, mu: f64) -> Self {
        let r = (4.0 * mu + mu * mu).sqrt();
        let h = (2.0 + mu) / 2.0;
        PhiSchedule {
            gamma_bar: gamma_bar(t_star, eps, mu),
            r,
            g3: 1.0 + (h + r / 2.0) * eps,
            g4: 1.0 + (h - r / 2.0) * eps,
            mu,
        }
    }

    pub fn from_params(p: &GainParams) -> Self {
        Self::new(p.t_star, p.eps, p.mu)
    }

    pub fn phi(&self, t: f64) -> f64 {
        let e = (-self.gamma_bar * self.r * t).exp();
        self.r / 2.0 * (self.g3 + self.g4 * e) / (self.g3 - self.g4 * e) - (2.0 + self.mu) / 2.0
    }

    pub fn phi_dot(&self, t: f64) -> f64 {
        let e = (-self.gamma_bar * self.r * t).exp();
        let den = self.g3 - self.g4 * e;
        -self.gamma_bar * self.r * self.r * self.g3 * self.g4 * e / (den * den)
    }
}

/// What happened at a switching instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpCase {
    /// Plain resampling, the framework is unchanged.
    Sample,
    Added(NodeId),
    Removed(NodeId),
}

/// Exponential weights `theta_i(t) = T_i e^{(xi - eta)(t - start)}` and
/// `g_i(t) = S_i e^{-sigma (t - start)}` of the current sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleState {
    pub start: f64,
    pub theta_coef: BTreeMap<NodeId, f64>,
    pub g_coef: BTreeMap<NodeId, f64>,
    pub theta_rate: f64,
    pub g_rate: f64,
}

impl ScheduleState {
    pub fn initial(followers: impl IntoIterator<Item = NodeId>, params: &GainParams, start: f64) -> Self {
        let ids: Vec<NodeId> = followers.into_iter().collect();
        ScheduleState {
            start,
            theta_coef: ids.iter().map(|&i| (i, params.theta0)).collect(),
            g_coef: ids.iter().map(|&i| (i, params.s0)).collect(),
            theta_rate: params.xi - params.eta,
            g_rate: params.sigma,
        }
    }

    pub fn theta(&self, id: NodeId, t: f64) -> f64 {
        self.theta_coef[&id] * (self.theta_rate * (t - self.start)).exp()
    }

    pub fn g(&self, id: NodeId, t: f64) -> f64 {
        self.g_coef[&id] * (-self.g_rate * (t - self.start)).exp()
    }

    pub fn thetas(&self, t: f64) -> BTreeMap<NodeId, f64> {
        self.theta_coef.keys().map(|&i| (i, self.theta(i, t))).collect()
    }

    pub fn gs(&self, t: f64) -> BTreeMap<NodeId, f64> {
        self.g_coef.keys().map(|&i| (i, self.g(i, t))).collect()
    }
}

/// Coefficients for the interval starting at `t`.
///
/// `s_new` holds the post-event relative states of the new follower set and
/// `q_new` the matching diagonal of `Q`.
#[allow(clippy::too_many_arguments)]
pub fn schedule_jump(
    case: JumpCase,
    state: &ScheduleState,
    t: f64,
    s_new: &BTreeMap<NodeId, Vec<f64>>,
    q_new: &BTreeMap<NodeId, f64>,
    p: &DMatrix<f64>,
    params: &GainParams,
    dim: usize,
) -> ScheduleState {
    let theta_minus = state.thetas(t);
    let g_minus = state.gs(t);
    let (h1, h2) = (params.hbar1, params.hbar2);
    let refreshed = |id: NodeId, budget: f64| budget / (q_new[&id] * quad_p(p, &s_new[&id], dim) + h1);
    let (theta_coef, g_coef) = match case {
        JumpCase::Sample => (theta_minus, g_minus),
        JumpCase::Added(k) => {
            let total: f64 = g_minus.values().sum();
            let mut theta = BTreeMap::new();
            let mut g = BTreeMap::new();
            for &id in s_new.keys() {
                if id == k {
                    theta.insert(id, refreshed(id, total / (2.0 * h2)));
                    g.insert(id, total / (2.0 * h2));
                } else {
                    theta.insert(id, theta_minus[&id]);
                    g.insert(id, g_minus[&id] - g_minus[&id] / h2);
                }
            }
            (theta, g)
        }
        JumpCase::Removed(_) => {
            let mut theta = BTreeMap::new();
            let mut g = BTreeMap::new();
            for &id in s_new.keys() {
                theta.insert(id, refreshed(id, g_minus[&id] / h2));
                g.insert(id, g_minus[&id] - g_minus[&id] / h2);
            }
            (theta, g)
        }
    };
    ScheduleState { start: t, theta_coef, g_coef, theta_rate: state.theta_rate, g_rate: state.g_rate }
}
