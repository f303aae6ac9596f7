use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::ScheduleState;
use crate::framework::NodeId;

/// `a^T (P ⊗ I_d) b`.
pub fn bilinear_p(p: &DMatrix<f64>, a: &[f64], b: &[f64], dim: usize) -> f64 {
    let n = p.nrows();
    let mut acc = 0.0;
    for k in 0..n {
        for l in 0..n {
            let pkl = p[(k, l)];
            if pkl == 0.0 {
                continue;
            }
            for c in 0..dim {
                acc += pkl * a[k * dim + c] * b[l * dim + c];
            }
        }
    }
    acc
}

pub fn quad_p(p: &DMatrix<f64>, v: &[f64], dim: usize) -> f64 {
    bilinear_p(p, v, v, dim)
}

/// Relative state of one follower and its sampling error, with derivatives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSample {
    pub s: Vec<f64>,
    pub s_dot: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_dot: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovTerms {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl LyapunovTerms {
    pub fn total(&self) -> f64 {
        self.v1 + self.v2 + self.v3
    }
}

/// `V1 = sum theta_i s_i^T P s_i`, `V2 = phi sum theta_i delta_i^T P delta_i`,
/// `V3 = sum g_i`, all at time `t` with `phi` evaluated at `t - start`.
pub fn lyapunov_value(
    samples: &BTreeMap<NodeId, ErrorSample>,
    sched: &ScheduleState,
    phi: f64,
    p: &DMatrix<f64>,
    dim: usize,
    t: f64,
) -> LyapunovTerms {
    let mut out = LyapunovTerms { v1: 0.0, v2: 0.0, v3: 0.0 };
    for (&id, e) in samples {
        let th = sched.theta(id, t);
        out.v1 += th * quad_p(p, &e.s, dim);
        out.v2 += phi * th * quad_p(p, &e.delta, dim);
        out.v3 += sched.g(id, t);
    }
    out
}

/// Time derivative of `V` along the supplied state derivatives.
pub fn lyapunov_derivative(
    samples: &BTreeMap<NodeId, ErrorSample>,
    sched: &ScheduleState,
    phi: f64,
    phi_dot: f64,
    p: &DMatrix<f64>,
    dim: usize,
    t: f64,
) -> f64 {
    let mut acc = 0.0;
    for (&id, e) in samples {
        let th = sched.theta(id, t);
        let ss = quad_p(p, &e.s, dim);
        let dd = quad_p(p, &e.delta, dim);
        acc += th * (sched.theta_rate * ss + 2.0 * bilinear_p(p, &e.s, &e.s_dot, dim));
        acc += phi_dot * th * dd + phi * th * (sched.theta_rate * dd + 2.0 * bilinear_p(p, &e.delta, &e.delta_dot, dim));
        acc -= sched.g_rate * sched.g(id, t);
    }
    acc
}
