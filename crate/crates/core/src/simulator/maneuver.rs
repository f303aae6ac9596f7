use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Formation pose `(A, b)` reached at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Piecewise smooth affine maneuver `p*(t) = A(t) chi + b(t)`.
///
/// Between consecutive keyframes every entry of `A` and `b` follows a
/// quintic smoothstep, so velocity and acceleration vanish at keyframes.
/// Outside the keyframe range the nearest pose is held. `drift` adds a
/// constant velocity to `b` for the whole run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManeuverSchedule {
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub drift: Vec<f64>,
}

fn smoothstep(tau: f64, k: usize) -> f64 {
    if tau <= 0.0 || tau >= 1.0 {
        return match k {
            0 => tau.clamp(0.0, 1.0),
            _ => 0.0,
        };
    }
    let t = tau;
    match k {
        0 => t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
        1 => 30.0 * t * t * (1.0 - t) * (1.0 - t),
        2 => 60.0 * t - 180.0 * t * t + 120.0 * t * t * t,
        3 => 60.0 - 360.0 * t + 360.0 * t * t,
        4 => -360.0 + 720.0 * t,
        5 => 720.0,
        _ => 0.0,
    }
}

impl ManeuverSchedule {
    pub fn stationary() -> Self {
        Self::default()
    }

    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if !self.drift.is_empty() && self.drift.len() != dim {
            return Err(format!("drift has {} components, expected {dim}", self.drift.len()));
        }
        for (k, kf) in self.keyframes.iter().enumerate() {
            if kf.a.len() != dim || kf.a.iter().any(|r| r.len() != dim) || kf.b.len() != dim {
                return Err(format!("keyframe {k} does not match dimension {dim}"));
            }
            if !kf.t.is_finite() || kf.a.iter().flatten().chain(&kf.b).any(|v| !v.is_finite()) {
                return Err(format!("keyframe {k} has non-finite entries"));
            }
            if k > 0 && !(kf.t > self.keyframes[k - 1].t) {
                return Err(format!("keyframe {k} is not strictly after keyframe {}", k - 1));
            }
        }
        Ok(())
    }

    /// `k`-th time derivatives of `A` and `b` at `t`.
    pub fn eval(&self, t: f64, k: usize, dim: usize) -> (DMatrix<f64>, Vec<f64>) {
        let (a, mut b) = self.pose_derivative(t, k, dim);
        if !self.drift.is_empty() {
            for c in 0..dim {
                b[c] += match k {
                    0 => self.drift[c] * t,
                    1 => self.drift[c],
                    _ => 0.0,
                };
            }
        }
        (a, b)
    }

    fn pose_derivative(&self, t: f64, k: usize, dim: usize) -> (DMatrix<f64>, Vec<f64>) {
        let to_mat = |kf: &Keyframe| DMatrix::from_fn(dim, dim, |r, c| kf.a[r][c]);
        let kfs = &self.keyframes;
        let held = |kf: &Keyframe| {
            if k == 0 {
                (to_mat(kf), kf.b.clone())
            } else {
                (DMatrix::zeros(dim, dim), vec![0.0; dim])
            }
        };
        match kfs.iter().position(|kf| kf.t > t) {
            None if kfs.is_empty() => held(&Keyframe { t: 0.0, a: identity_rows(dim), b: vec![0.0; dim] }),
            None => held(kfs.last().unwrap()),
            Some(0) => held(&kfs[0]),
            Some(j) => {
                let (k0, k1) = (&kfs[j - 1], &kfs[j]);
                let span = k1.t - k0.t;
                let w = smoothstep((t - k0.t) / span, k) / span.powi(k as i32);
                let base = if k == 0 { 1.0 } else { 0.0 };
                let a = to_mat(k0) * base + (to_mat(k1) - to_mat(k0)) * w;
                let b = (0..dim).map(|c| k0.b[c] * base + (k1.b[c] - k0.b[c]) * w).collect();
                (a, b)
            }
        }
    }

    /// Intervals over which the pose actually changes.
    pub fn transitions(&self) -> Vec<(f64, f64)> {
        self.keyframes
            .windows(2)
            .filter(|w| w[0].a != w[1].a || w[0].b != w[1].b)
            .map(|w| (w[0].t, w[1].t))
            .collect()
    }

    /// Position and its first `order - 1` derivatives of a point with
    /// nominal coordinates `chi`, stacked derivative-major.
    pub fn stacked_state(&self, chi: &[f64], t: f64, order: usize) -> Vec<f64> {
        let dim = chi.len();
        let mut out = Vec::with_capacity(order * dim);
        for k in 0..order {
            out.extend(self.point_derivative(chi, t, k));
        }
        out
    }

    pub fn point_derivative(&self, chi: &[f64], t: f64, k: usize) -> Vec<f64> {
        let dim = chi.len();
        let (a, b) = self.eval(t, k, dim);
        (0..dim).map(|r| (0..dim).map(|c| a[(r, c)] * chi[c]).sum::<f64>() + b[r]).collect()
    }
}

pub fn identity_rows(dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|r| (0..dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn rotation_scale_shear(angle: f64, sx: f64, sy: f64, shear: f64) -> Vec<Vec<f64>> {
    let (s, c) = angle.sin_cos();
    // R * [[sx, shear], [0, sy]]
    vec![vec![c * sx, c * shear - s * sy], vec![s * sx, s * shear + c * sy]]
}
