//! Discrete-time helpers over irregularly sampled, normalized series.

use crate::ingest::EngagementSnapshot;
use crate::labeling::{normalize_metric, NormalizationCaps};

/// Per-snapshot normalized volumes for one post.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizedSeries {
    pub t: Vec<f64>,
    pub score: Vec<f64>,
    pub comments: Vec<f64>,
    pub crossposts: Vec<f64>,
}

impl NormalizedSeries {
    /// Negative net scores count as zero volume.
    pub fn from_snapshots(snaps: &[EngagementSnapshot], subscribers: u64, caps: &NormalizationCaps) -> Self {
        let norm = |raw: f64, cap: f64| {
            normalize_metric(raw.max(0.0), subscribers, cap).expect("subscribers validated at ingest")
        };
        Self {
            t: snaps.iter().map(|s| s.t_minutes).collect(),
            score: snaps.iter().map(|s| norm(s.score as f64, caps.score)).collect(),
            comments: snaps.iter().map(|s| norm(s.comments as f64, caps.comments)).collect(),
            crossposts: snaps.iter().map(|s| norm(s.crossposts as f64, caps.crossposts)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// First differences `(Δm/Δt)` attributed to the end of each interval.
/// Returns `(t_i, v_i)` for `i ≥ 1`.
pub fn velocity(t: &[f64], m: &[f64]) -> Vec<(f64, f64)> {
    t.windows(2)
        .zip(m.windows(2))
        .map(|(tw, mw)| (tw[1], (mw[1] - mw[0]) / (tw[1] - tw[0])))
        .collect()
}

/// Differences of a velocity series, attributed like [`velocity`].
pub fn acceleration(v: &[(f64, f64)]) -> Vec<(f64, f64)> {
    v.windows(2).map(|w| (w[1].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0))).collect()
}

/// Value of the piecewise-linear interpolant at `x`, held constant outside
/// the sampled range.
fn value_at(t: &[f64], m: &[f64], x: f64) -> f64 {
    if x <= t[0] {
        return m[0];
    }
    let last = t.len() - 1;
    if x >= t[last] {
        return m[last];
    }
    let i = t.partition_point(|&ti| ti <= x);
    let (t0, t1, m0, m1) = (t[i - 1], t[i], m[i - 1], m[i]);
    m0 + (m1 - m0) * (x - t0) / (t1 - t0)
}

/// Trapezoidal integral of the piecewise-linear interpolant over `[a, b]`.
/// Empty input integrates to zero.
pub fn integrate(t: &[f64], m: &[f64], a: f64, b: f64) -> f64 {
    if t.is_empty() || b <= a {
        return 0.0;
    }
    let mut knots = vec![a];
    knots.extend(t.iter().copied().filter(|&x| x > a && x < b));
    knots.push(b);
    knots
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (value_at(t, m, w[0]) + value_at(t, m, w[1])))
        .sum()
}

/// Ordinary least-squares slope; `None` for fewer than two points.
pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Shannon entropy (bits) of a non-negative mass vector; zero mass gives 0.
pub fn entropy_bits(mass: &[f64]) -> f64 {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -mass
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| {
            let p = x / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Dynamic summary used both as window features and as labeling inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dynamics {
    pub peak_velocity: Option<f64>,
    pub peak_acceleration: Option<f64>,
    pub min_acceleration: Option<f64>,
    pub time_to_takeoff: Option<f64>,
    pub takeoff_velocity: Option<f64>,
}

/// Relative trigger: takeoff needs velocity ≥ this share of the peak.
pub const TAKEOFF_PEAK_SHARE: f64 = 0.1;
/// Absolute trigger: takeoff needs at least this normalized score.
pub const TAKEOFF_MIN_SCORE: f64 = 1.0;

pub fn dynamics(t: &[f64], m: &[f64]) -> Dynamics {
    let v = velocity(t, m);
    let a = acceleration(&v);
    let peak_velocity = v.iter().map(|p| p.1).reduce(f64::max);
    let peak_acceleration = a.iter().map(|p| p.1).reduce(f64::max);
    let min_acceleration = a.iter().map(|p| p.1).reduce(f64::min);
    let mut out = Dynamics { peak_velocity, peak_acceleration, min_acceleration, ..Dynamics::default() };
    if let Some(peak) = peak_velocity.filter(|&p| p > 0.0) {
        // v[k] ends at snapshot k + 1
        if let Some((_, &(tt, vv))) = v
            .iter()
            .enumerate()
            .find(|&(k, &(_, vv))| vv >= TAKEOFF_PEAK_SHARE * peak && m[k + 1] >= TAKEOFF_MIN_SCORE)
        {
            out.time_to_takeoff = Some(tt);
            out.takeoff_velocity = Some(vv);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_of_identity() {
        let t: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect();
        assert!((integrate(&t, &t, 0.0, 30.0) - 450.0).abs() < 1e-12);
        assert!((integrate(&t, &t, 0.0, 12.5) - 78.125).abs() < 1e-12);
    }

    #[test]
    fn integral_holds_last_value() {
        assert!((integrate(&[0.0, 10.0], &[0.0, 10.0], 0.0, 20.0) - 150.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_uniform_and_point_mass() {
        assert!((entropy_bits(&[1.0; 6]) - 6f64.log2()).abs() < 1e-12);
        assert_eq!(entropy_bits(&[0.0, 3.0, 0.0]), 0.0);
        assert_eq!(entropy_bits(&[0.0; 6]), 0.0);
    }

    #[test]
    fn slope_of_line() {
        assert_eq!(ls_slope(&[(0.0, 1.0), (5.0, 11.0)]), Some(2.0));
        assert_eq!(ls_slope(&[(0.0, 1.0)]), None);
    }

    #[test]
    fn takeoff_on_step() {
        let t = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
        let m = [0.0, 0.0, 0.0, 0.0, 0.0, 100.0, 100.0];
        let d = dynamics(&t, &m);
        assert_eq!(d.peak_velocity, Some(20.0));
        assert_eq!(d.time_to_takeoff, Some(25.0));
        assert_eq!(d.takeoff_velocity, Some(20.0));
    }
}
