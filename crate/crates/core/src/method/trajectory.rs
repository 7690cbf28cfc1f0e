use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::stack::norm;

use super::{IterateState, RunRecord};

pub const TRAJECTORY_HEADER: &str =
    "k,err_max,mean_err,disagreement,tracker_err,d_min_used,d_max_used,comm_vectors";

/// One recorded iteration. The step columns describe the transition out of
/// iteration `k` and are NaN on the final row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub err_max: f64,
    /// `‖q̄‖`
    pub mean_err: f64,
    /// `‖x̃‖`
    pub disagreement: f64,
    /// `‖ũ‖`
    pub tracker_err: f64,
    /// `‖ū‖`
    pub tracker_mean: f64,
    pub d_min_used: f64,
    pub d_max_used: f64,
    pub comm_vectors: u64,
}

impl TrajectoryRow {
    pub(crate) fn from_state(state: &IterateState, steps: Option<&[f64]>, comm: u64) -> Self {
        let diag = &state.diagnostics;
        let (lo, hi) = match steps {
            Some(s) => (s.iter().copied().fold(f64::INFINITY, f64::min), s.iter().copied().fold(0.0, f64::max)),
            None => (f64::NAN, f64::NAN),
        };
        Self {
            k: state.k,
            err_max: diag.err_max,
            mean_err: norm(&diag.q_bar),
            disagreement: diag.x_tilde.norm(),
            tracker_err: diag.u_tilde.norm(),
            tracker_mean: norm(&diag.u_bar),
            d_min_used: lo,
            d_max_used: hi,
            comm_vectors: comm,
        }
    }
}

impl RunRecord {
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.k, r.err_max, r.mean_err, r.disagreement, r.tracker_err, r.d_min_used, r.d_max_used, r.comm_vectors
            );
        }
        out
    }

    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.trajectory_csv().as_bytes())?;
        Ok(())
    }

    pub fn err_max_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_max).collect()
    }
}

/// Least-squares slope of `ln(err)` against the iteration index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    /// `exp(slope)`.
    pub rho: f64,
}

/// Fits `ln(err_k)` over the last half of the series, skipping zeros.
pub fn rlinear_fit(errors: &[f64]) -> Option<RateFit> {
    let start = errors.len() / 2;
    let pts: Vec<(f64, f64)> = errors[start..]
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(i, e)| ((start + i) as f64, e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(RateFit { slope, rho: slope.exp() })
}

/// `max_k (err_{k+w} / err_k)^{1/w}` over the series.
pub fn worst_window_ratio(errors: &[f64], window: usize) -> Option<f64> {
    if window == 0 || errors.len() <= window {
        return None;
    }
    errors
        .windows(window + 1)
        .filter(|w| w[0] > 0.0)
        .map(|w| (w[window] / w[0]).powf(1.0 / window as f64))
        .reduce(f64::max)
}
