use serde::Serialize;

use super::SimResult;
use crate::linalg;

/// Error level treated as converged when fitting exponential decay.
pub const DECAY_FLOOR: f64 = 1e-8;

/// Log-linear fit of the largest follower error over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalFit {
    pub start: f64,
    pub end: f64,
    pub window_end: f64,
    pub points: usize,
    pub slope: f64,
    pub r_squared: f64,
    pub initial_max: f64,
    pub terminal_max: f64,
}

impl IntervalFit {
    pub fn decays(&self) -> bool {
        self.points >= 3 && self.slope < 0.0 && self.r_squared >= 0.9
    }
}

/// `(t, max_i ||e_i||)` at every stored sample.
pub fn max_error_series(res: &SimResult) -> Vec<(f64, f64)> {
    res.errors
        .iter()
        .map(|row| (row.t, row.values.iter().map(|(_, e)| linalg::norm(e)).fold(0.0, f64::max)))
        .collect()
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

/// One fit per epoch. The window runs from the epoch start until the error
/// reaches [`DECAY_FLOOR`] or a maneuver begins, whichever is first.
pub fn interval_fits(res: &SimResult) -> Vec<IntervalFit> {
    let series = max_error_series(res);
    let last = res.epochs.len().saturating_sub(1);
    res.epochs
        .iter()
        .enumerate()
        .map(|(k, ep)| {
            let inside: Vec<(f64, f64)> = series
                .iter()
                .copied()
                .filter(|&(t, _)| t >= ep.start && (t < ep.end || (k == last && t <= ep.end)))
                .collect();
            let maneuver = res
                .maneuver_windows
                .iter()
                .map(|w| w.0)
                .filter(|&s| s > ep.start && s < ep.end)
                .fold(ep.end, f64::min);
            let floor_hit = inside.iter().find(|p| p.1 <= DECAY_FLOOR).map_or(ep.end, |p| p.0);
            let window_end = maneuver.min(floor_hit);
            let pts: Vec<(f64, f64)> = inside
                .iter()
                .filter(|p| p.0 <= window_end && p.1 > 0.0)
                .map(|&(t, e)| (t, e.ln()))
                .collect();
            let (slope, r_squared) = if pts.len() >= 3 { least_squares(&pts) } else { (0.0, 0.0) };
            IntervalFit {
                start: ep.start,
                end: ep.end,
                window_end,
                points: pts.len(),
                slope,
                r_squared,
                initial_max: inside.first().map_or(0.0, |p| p.1),
                terminal_max: inside.last().map_or(0.0, |p| p.1),
            }
        })
        .collect()
}
