use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::GpioEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub n_events: usize,
    pub mean_period_ns: f64,
    /// (measured − nominal) / nominal × 10⁶.
    pub ppm_error: f64,
    /// Largest deviation of a single period from the mean.
    pub jitter_ns: f64,
    /// Slope of edge-time residuals against the nominal grid.
    pub drift_ns_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least two same-direction edges, got {0} events")]
    TooFewEvents(usize),
    #[error("nominal period must be positive")]
    BadNominal,
}

/// Least-squares line through `(xs, ys)`: returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Period statistics of a single-pin edge trace. Periods are measured
/// between consecutive edges of the same direction.
pub fn compute_timing_stats(events: &[GpioEvent], nominal_period_ns: f64) -> Result<TimingStats, StatsError> {
    if nominal_period_ns.is_nan() || nominal_period_ns <= 0.0 {
        return Err(StatsError::BadNominal);
    }
    let mut periods = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for level in [0u8, 1] {
        let times: Vec<f64> = events
            .iter()
            .filter(|e| e.level == level)
            .map(|e| e.timestamp_ns as f64)
            .collect();
        periods.extend(times.windows(2).map(|w| w[1] - w[0]));
        if let Some(&t0) = times.first() {
            for (k, &t) in times.iter().enumerate() {
                xs.push((t - t0) * 1e-9);
                ys.push(t - t0 - k as f64 * nominal_period_ns);
            }
        }
    }
    if periods.is_empty() {
        return Err(StatsError::TooFewEvents(events.len()));
    }
    let mean = periods.iter().sum::<f64>() / periods.len() as f64;
    let jitter = periods.iter().map(|p| (p - mean).abs()).fold(0.0, f64::max);
    let drift = linear_fit(&xs, &ys).map_or(0.0, |(slope, _)| slope);
    Ok(TimingStats {
        n_events: events.len(),
        mean_period_ns: mean,
        ppm_error: (mean - nominal_period_ns) / nominal_period_ns * 1e6,
        jitter_ns: jitter,
        drift_ns_per_s: drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, half: u64) -> Vec<GpioEvent> {
        (0..n)
            .map(|i| GpioEvent {
                pin: 0,
                level: (i % 2 == 0) as u8,
                timestamp_ns: i as u64 * half,
            })
            .collect()
    }

    #[test]
    fn exact_periods() {
        let s = compute_timing_stats(&square(128, 500_000), 1e6).unwrap();
        assert_eq!(s.ppm_error, 0.0);
        assert_eq!(s.jitter_ns, 0.0);
        assert_eq!(s.drift_ns_per_s, 0.0);
    }

    #[test]
    fn too_few() {
        assert_eq!(
            compute_timing_stats(&square(2, 10), 20.0),
            Err(StatsError::TooFewEvents(2))
        );
    }

    #[test]
    fn fit() {
        let (m, b) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }
}
