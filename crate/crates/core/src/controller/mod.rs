//! Gain synthesis and the sampled-sensing formation control law.
//!
//! Every follower is an `n`-th order integrator in `R^d`. It only measures a
//! weighted sum of relative states `s_i` at switching instants `Delta_m`,
//! propagates that sample open loop in between (`s_hat`) and applies
//! `u_i = -beta q_i (gamma^T ⊗ I_d) s_hat_i`.

mod lyapunov;
mod schedule;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

pub use lyapunov::{bilinear_p, lyapunov_derivative, lyapunov_value, quad_p, ErrorSample, LyapunovTerms};
pub use schedule::{gamma_bar, schedule_jump, JumpCase, PhiSchedule, ScheduleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("integrator order must be at least 1")]
    ZeroOrder,
    #[error("Riccati solve failed (residual {0:e})")]
    Riccati(f64),
    #[error("Omega_ff is singular or not triangularizable: {0}")]
    QInfeasible(String),
    #[error("no sampling period is feasible: T* would be {t_star:e} < dt = {dt}")]
    Infeasible { t_star: f64, dt: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// `C` (upper shift) and `D = e_n` for an `n`-th order integrator in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorModel {
    pub order: usize,
    pub dim: usize,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

pub fn build_integrator(order: usize, dim: usize) -> Result<IntegratorModel, ControllerError> {
    if order == 0 {
        return Err(ControllerError::ZeroOrder);
    }
    let c = DMatrix::from_fn(order, order, |r, k| if k == r + 1 { 1.0 } else { 0.0 });
    let mut d = DVector::zeros(order);
    d[order - 1] = 1.0;
    Ok(IntegratorModel { order, dim, c, d })
}

impl IntegratorModel {
    /// `[D, CD, ..., C^{n-1} D]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.order;
        let mut m = DMatrix::zeros(n, n);
        let mut col = self.d.clone();
        for k in 0..n {
            m.set_column(k, &col);
            col = &self.c * col;
        }
        m
    }

    pub fn is_controllable(&self) -> bool {
        linalg::rank(&self.controllability_matrix(), 1e-12) == self.order
    }
}

/// `C^T P + P C - P D D^T P + xi P`.
pub fn riccati_residual(model: &IntegratorModel, p: &DMatrix<f64>, xi: f64) -> f64 {
    let pd = p * &model.d;
    (model.c.transpose() * p + p * &model.c - &pd * pd.transpose() + p * xi).norm()
}

/// Positive-definite solution of `C^T P + P C - P D D^T P = -xi P`.
///
/// With `A = C + xi/2 I` the equation reads `A^T P + P A = P D D^T P`; for
/// `X = P^{-1}` this is the Lyapunov equation `A X + X A^T = D D^T`, which
/// is linear and solved through its Kronecker form.
pub fn solve_riccati(model: &IntegratorModel, xi: f64) -> Result<DMatrix<f64>, ControllerError> {
    if !(xi > 0.0) {
        return Err(ControllerError::Parameter(format!("xi must be positive, got {xi}")));
    }
    let n = model.order;
    let a = &model.c + DMatrix::identity(n, n) * (xi / 2.0);
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = linalg::kron(&eye, &a) + linalg::kron(&a, &eye);
    let rhs_m = &model.d * model.d.transpose();
    let rhs = DVector::from_column_slice(rhs_m.as_slice());
    let vec_x = lhs.lu().solve(&rhs).ok_or(ControllerError::Riccati(f64::NAN))?;
    let x = DMatrix::from_column_slice(n, n, vec_x.as_slice());
    let x = (&x + x.transpose()) * 0.5;
    let p = x.try_inverse().ok_or(ControllerError::Riccati(f64::NAN))?;
    let p = (&p + p.transpose()) * 0.5;
    let res = riccati_residual(model, &p, xi);
    let (lo, _) = linalg::sym_eig_extremes(&p);
    if !(res <= 1e-8 * p.norm().max(1.0)) || lo <= 0.0 {
        return Err(ControllerError::Riccati(res));
    }
    Ok(p)
}

/// `gamma^T = D^T P`, i.e. the last row of `P`.
pub fn gamma_from_p(model: &IntegratorModel, p: &DMatrix<f64>) -> Vec<f64> {
    (model.d.transpose() * p).iter().copied().collect()
}

/// `lambda_max(P D D^T P) / lambda_min(P)`.
pub fn epsilon_of(model: &IntegratorModel, p: &DMatrix<f64>) -> f64 {
    let pd = p * &model.d;
    let (lo, _) = linalg::sym_eig_extremes(p);
    pd.norm_squared() / lo
}

/// Diagonal `Q` with `Q Omega_ff + Omega_ff^T Q` positive definite.
///
/// `order` lists the rows of `Omega_ff` layer by layer, so the permuted
/// matrix is lower triangular. Rows are appended one at a time; since the
/// new off-diagonal column scales with `q_k`, the Schur complement gives the
/// explicit bound `q_k < 2 m_k / (w^T S^{-1} w)`. We take half of it, capped
/// at 1, and finally rescale so that the smallest entry is 1.
pub fn find_diagonal_q(omega_ff: &DMatrix<f64>, order: &[usize]) -> Result<Vec<f64>, ControllerError> {
    let nf = omega_ff.nrows();
    if order.len() != nf {
        return Err(ControllerError::QInfeasible("layer order does not cover Omega_ff".into()));
    }
    let perm = DMatrix::from_fn(nf, nf, |r, c| omega_ff[(order[r], order[c])]);
    for r in 0..nf {
        for c in r + 1..nf {
            if perm[(r, c)] != 0.0 {
                return Err(ControllerError::QInfeasible("layer order is not lower triangular".into()));
            }
        }
        if !(perm[(r, r)] > 0.0) {
            return Err(ControllerError::QInfeasible(format!("non-positive diagonal in row {r}")));
        }
    }
    let mut q = vec![0.0; nf];
    for k in 0..nf {
        let m = perm[(k, k)];
        if k == 0 {
            q[k] = 1.0;
            continue;
        }
        let s = DMatrix::from_fn(k, k, |r, c| q[r] * perm[(r, c)] + perm[(c, r)] * q[c]);
        let w = DVector::from_fn(k, |j, _| perm[(k, j)]);
        let sol = s.cholesky().ok_or_else(|| ControllerError::QInfeasible("leading block lost definiteness".into()))?;
        let quad = w.dot(&sol.solve(&w));
        q[k] = if quad <= 0.0 { 1.0 } else { (m / quad).min(1.0) };
        if !(q[k] > 0.0) || !q[k].is_finite() {
            return Err(ControllerError::QInfeasible(format!("bound for row {k} is {}", q[k])));
        }
    }
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = vec![0.0; nf];
    for (r, &row) in order.iter().enumerate() {
        out[row] = q[r] / min;
    }
    let sym = q_symmetric(omega_ff, &out);
    let (lo, _) = linalg::sym_eig_extremes(&sym);
    if !(lo > 0.0) {
        return Err(ControllerError::QInfeasible(format!("lambda_min = {lo:e}")));
    }
    Ok(out)
}

/// `Q Omega + Omega^T Q`.
pub fn q_symmetric(omega_ff: &DMatrix<f64>, q: &[f64]) -> DMatrix<f64> {
    let qm = DMatrix::from_diagonal(&DVector::from_column_slice(q));
    &qm * omega_ff + omega_ff.transpose() * &qm
}

/// Constants shared by all epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub xi: f64,
    pub beta: f64,
    /// `phi` starts at `1/eps` and reaches `eps` at `t_star`.
    pub eps: f64,
    pub mu: f64,
    pub t_star: f64,
    pub eta: f64,
    pub sigma: f64,
    pub l1: f64,
    pub l2: f64,
    pub hbar1: f64,
    pub hbar2: f64,
    pub theta0: f64,
    pub s0: f64,
}

impl GainParams {
    /// Defaults for everything except `xi`, `beta` and `t_star`.
    pub fn with(xi: f64, beta: f64, t_star: f64) -> Self {
        GainParams {
            xi,
            beta,
            eps: 0.1,
            mu: 1.0,
            t_star,
            eta: xi / 2.0,
            sigma: xi / 2.0,
            l1: 1.0,
            l2: 1.0,
            hbar1: 1.0,
            hbar2: 2.0,
            theta0: 1.0,
            s0: 1.0,
        }
    }

    pub fn gamma_bar(&self) -> f64 {
        gamma_bar(self.t_star, self.eps, self.mu)
    }

    /// `min{eta, mu Gamma_bar, sigma}`.
    pub fn decay_rate(&self) -> f64 {
        self.eta.min(self.mu * self.gamma_bar()).min(self.sigma)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |what: &str| Err(ControllerError::Parameter(what.to_string()));
        if !(self.xi > 0.0) {
            return bad("xi must be positive");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps must lie in (0, 1)");
        }
        if !(self.mu > 0.0 && self.t_star > 0.0 && self.beta > 0.0) {
            return bad("mu, t_star and beta must be positive");
        }
        if !(self.eta > 0.0 && self.eta < self.xi) {
            return bad("eta must lie in (0, xi)");
        }
        if !(self.sigma > 0.0 && self.l1 > 0.0 && self.l2 > 0.0 && self.hbar1 > 0.0) {
            return bad("sigma, l1, l2 and hbar1 must be positive");
        }
        if !(self.hbar2 > 1.0) {
            return bad("hbar2 must exceed 1");
        }
        if !(self.theta0 > 0.0 && self.s0 > 0.0) {
            return bad("initial schedule coefficients must be positive");
        }
        Ok(())
    }
}

/// Spectral quantities of one framework epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochSpectrum {
    /// `lambda_max(Q Omega_ff)`, taken as the spectral norm.
    pub norm_q_omega: f64,
    pub lambda_min_sym: f64,
    pub lambda_max_sym: f64,
}

pub fn epoch_spectrum(omega_ff: &DMatrix<f64>, q: &[f64]) -> EpochSpectrum {
    let qm = DMatrix::from_diagonal(&DVector::from_column_slice(q));
    let (lo, hi) = linalg::sym_eig_extremes(&q_symmetric(omega_ff, q));
    EpochSpectrum { norm_q_omega: linalg::spectral_norm(&(qm * omega_ff)), lambda_min_sym: lo, lambda_max_sym: hi }
}

impl EpochSpectrum {
    pub fn beta_bound(&self, l1: f64, l2: f64) -> f64 {
        (1.0 + 1.0 / l1 + self.norm_q_omega.powi(2) / l2) / self.lambda_min_sym
    }

    /// `(Z1, Z2, Z3)` for a given `Gamma_bar`.
    pub fn z_values(&self, gb: f64, beta: f64, l1: f64, l2: f64) -> (f64, f64, f64) {
        (
            gb / (l1 * beta * beta * self.norm_q_omega.powi(2)),
            gb / (l2 * beta * beta),
            2.0 * gb / (1.0 + beta * self.lambda_max_sym),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochCheck {
    pub spectrum: EpochSpectrum,
    pub beta_bound: f64,
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub beta_ok: bool,
    pub epsilon_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub params: GainParams,
    pub p: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub riccati_residual: f64,
    pub epsilon: f64,
    pub gamma_bar: f64,
    pub epochs: Vec<EpochCheck>,
    pub pass: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Evaluates every inequality the gains must satisfy, per epoch.
pub fn check_gain_conditions(
    model: &IntegratorModel,
    params: &GainParams,
    epochs: &[(DMatrix<f64>, Vec<f64>)],
) -> Result<GainReport, ControllerError> {
    params.validate()?;
    let p = solve_riccati(model, params.xi)?;
    let eps = epsilon_of(model, &p);
    let gb = params.gamma_bar();
    let checks: Vec<EpochCheck> = epochs
        .iter()
        .map(|(omega, q)| {
            let spectrum = epoch_spectrum(omega, q);
            let beta_bound = spectrum.beta_bound(params.l1, params.l2);
            let (z1, z2, z3) = spectrum.z_values(gb, params.beta, params.l1, params.l2);
            EpochCheck {
                spectrum,
                beta_bound,
                z1,
                z2,
                z3,
                beta_ok: spectrum.lambda_min_sym > 0.0 && params.beta >= beta_bound,
                epsilon_ok: eps <= z1.min(z2).min(z3),
            }
        })
        .collect();
    let pass = checks.iter().all(|c| c.beta_ok && c.epsilon_ok);
    Ok(GainReport {
        params: *params,
        riccati_residual: riccati_residual(model, &p, params.xi),
        gamma: gamma_from_p(model, &p),
        p: rows(&p),
        epsilon: eps,
        gamma_bar: gb,
        epochs: checks,
        pass,
    })
}

/// `xi` minimizing `epsilon(xi)` on `[lo, hi]` (golden section in `ln xi`).
pub fn best_xi(model: &IntegratorModel, lo: f64, hi: f64) -> Result<f64, ControllerError> {
    let f = |x: f64| solve_riccati(model, x.exp()).map(|p| epsilon_of(model, &p));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(((a + b) / 2.0).exp())
}

/// Largest admissible `T*` for given `beta`, `l1`, `l2` over all epochs.
fn t_star_limit(spectra: &[EpochSpectrum], eps: f64, beta: f64, l1: f64, l2: f64, base: &GainParams) -> f64 {
    // Every Z is proportional to Gamma_bar, which is proportional to 1/T*.
    let gb1 = gamma_bar(1.0, base.eps, base.mu);
    spectra
        .iter()
        .map(|s| {
            let (z1, z2, z3) = s.z_values(gb1, beta, l1, l2);
            z1.min(z2).min(z3) / eps
        })
        .fold(f64::INFINITY, f64::min)
}

/// Picks `xi`, `l1`, `l2`, `beta` and the largest `T*` (a multiple of `dt`)
/// for which all epochs satisfy the gain conditions. `base` supplies the
/// remaining constants.
///
/// `xi` minimizes `epsilon`. `l1` and `l2` come from a log-spaced grid on
/// `[0.1, 10]`, keeping the pair that admits the longest `T*`; `beta` sits
/// at its lower bound.
pub fn autotune(
    model: &IntegratorModel,
    epochs: &[(DMatrix<f64>, Vec<f64>)],
    dt: f64,
    base: &GainParams,
) -> Result<GainParams, ControllerError> {
    let xi = best_xi(model, 0.5, 20.0)?;
    let p = solve_riccati(model, xi)?;
    let eps = epsilon_of(model, &p);
    let spectra: Vec<EpochSpectrum> = epochs.iter().map(|(o, q)| epoch_spectrum(o, q)).collect();
    if let Some(s) = spectra.iter().find(|s| !(s.lambda_min_sym > 0.0)) {
        return Err(ControllerError::QInfeasible(format!("lambda_min = {:e}", s.lambda_min_sym)));
    }
    let beta_for = |l1: f64, l2: f64| spectra.iter().map(|s| s.beta_bound(l1, l2)).fold(0.0, f64::max) * (1.0 + 1e-9);
    let grid: Vec<f64> = (0..=40).map(|k| 10f64.powf(-1.0 + k as f64 / 20.0)).collect();
    let (mut best, mut l1, mut l2) = (t_star_limit(&spectra, eps, beta_for(base.l1, base.l2), base.l1, base.l2, base), base.l1, base.l2);
    for &a in &grid {
        for &b in &grid {
            let t = t_star_limit(&spectra, eps, beta_for(a, b), a, b, base);
            if t > best {
                (best, l1, l2) = (t, a, b);
            }
        }
    }
    let steps = (best / dt * (1.0 - 1e-12)).floor();
    if steps < 1.0 {
        return Err(ControllerError::Infeasible { t_star: best, dt });
    }
    Ok(GainParams { xi, beta: beta_for(l1, l2), t_star: steps * dt, eta: xi / 2.0, sigma: xi / 2.0, l1, l2, ..*base })
}

/// `u_i = -beta q_i (gamma^T ⊗ I_d) s_hat_i`.
pub fn control_input(beta: f64, q_i: f64, gamma: &[f64], s_hat: &[f64], dim: usize) -> Vec<f64> {
    let mut u = vec![0.0; dim];
    for (k, g) in gamma.iter().enumerate() {
        for c in 0..dim {
            u[c] -= beta * q_i * g * s_hat[k * dim + c];
        }
    }
    u
}

/// `exp((C ⊗ I_d) dt) s_hat`; `C` is nilpotent so the series is finite.
pub fn wsre_step(s_hat: &[f64], dt: f64, order: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; s_hat.len()];
    for k in 0..order {
        let mut coef = 1.0;
        for j in k..order {
            if j > k {
                coef *= dt / (j - k) as f64;
            }
            for c in 0..dim {
                out[k * dim + c] += coef * s_hat[j * dim + c];
            }
        }
    }
    out
}

/// `(C ⊗ I_d) v`.
pub fn shift(v: &[f64], order: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for k in 0..order.saturating_sub(1) {
        out[k * dim..(k + 1) * dim].copy_from_slice(&v[(k + 1) * dim..(k + 2) * dim]);
    }
    out
}
