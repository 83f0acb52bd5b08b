//! Rolling-window changepoint detection on the friction regression residual.

use serde::{Deserialize, Serialize};

use super::regression::{fit_slices, sse_slices};
use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::telemetry::TimeSeries;

/// Half-open sample range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Smallest segment on either side of a candidate split.
const SPLIT_MARGIN: usize = 3;

/// Best single split of `[lo, hi)` by total two-segment SSE.
fn best_split(series: &TimeSeries, lo: usize, hi: usize, deadband: f64) -> Option<usize> {
    let omega = series.omega();
    let fric = series.friction();
    let mut best: Option<(usize, f64)> = None;
    for c in (lo + SPLIT_MARGIN)..=(hi.saturating_sub(SPLIT_MARGIN)) {
        let left = sse_slices(&omega[lo..c], &fric[lo..c], deadband);
        let right = sse_slices(&omega[c..hi], &fric[c..hi], deadband);
        if let (Some(l), Some(r)) = (left, right) {
            let total = l + r;
            if best.map_or(true, |(_, b)| total < b) {
                best = Some((c, total));
            }
        }
    }
    best.map(|(c, _)| c)
}

/// Partition the series into intervals of constant dry friction.
///
/// A window of `window_size` samples slides forward from the start of the
/// current interval. When its residual RMS exceeds `residual_threshold`, the
/// change is located by the best two-segment split of the next
/// `2·window_size` samples and a new interval opens there. Boundaries that
/// would leave a segment shorter than `min_interval` move the previous
/// boundary instead (or are dropped at the series ends).
pub fn detect_changepoints(series: &TimeSeries, cfg: &PipelineConfig) -> Result<Vec<Interval>> {
    cfg.validate()?;
    let n = series.len();
    let w = cfg.window_size;
    if n < cfg.min_series_len() {
        return Err(Error::SeriesTooShort {
            len: n,
            min: cfg.min_series_len(),
        });
    }
    let omega = series.omega();
    let fric = series.friction();
    let mut bounds: Vec<usize> = vec![0];
    let mut p = 0usize;
    while p + w <= n {
        let fit = fit_slices(&omega[p..p + w], &fric[p..p + w], cfg.omega_deadband).ok_or(
            Error::DegenerateDesign {
                start: p,
                end: p + w,
            },
        )?;
        if fit.residual_rms <= cfg.residual_threshold {
            p += 1;
            continue;
        }
        let hi = (p + 2 * w).min(n);
        let Some(c) = best_split(series, p, hi, cfg.omega_deadband) else {
            p += 1;
            continue;
        };
        let start = *bounds.last().expect("non-empty");
        if c - start >= cfg.min_interval {
            bounds.push(c);
        } else if bounds.len() > 1 {
            // previous boundary was misplaced; the change is really at c
            *bounds.last_mut().expect("non-empty") = c;
        }
        p = c;
    }
    // last interval must be long enough
    while bounds.len() > 1 && n - *bounds.last().expect("non-empty") < cfg.min_interval {
        bounds.pop();
    }
    bounds.push(n);
    Ok(bounds
        .windows(2)
        .map(|b| Interval {
            start: b[0],
            end: b[1],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::sign;

    fn series_with_jump(jump_at: Option<usize>, delta: f64) -> TimeSeries {
        let n = 1200;
        let omega: Vec<f64> = (0..n)
            .map(|k| 50.0 + 250.0 * (std::f64::consts::TAU * k as f64 / 1200.0).sin())
            .collect();
        let f = omega
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let d = if jump_at.is_some_and(|j| k >= j) { 1.0 + delta } else { 1.0 };
                d * sign(w) + 0.001 * w
            })
            .collect();
        TimeSeries::new(omega, f).unwrap()
    }

    #[test]
    fn single_clean_jump() {
        let cfg = PipelineConfig {
            residual_threshold: 0.01,
            ..PipelineConfig::default()
        };
        let iv = detect_changepoints(&series_with_jump(Some(500), 0.5), &cfg).unwrap();
        assert_eq!(iv.len(), 2);
        assert!(iv[0].end.abs_diff(500) <= cfg.window_size);
        assert_eq!(iv[0].start, 0);
        assert_eq!(iv[1].end, 1200);
    }

    #[test]
    fn no_change_single_interval() {
        let iv = detect_changepoints(&series_with_jump(None, 0.0), &PipelineConfig::default()).unwrap();
        assert_eq!(iv, vec![Interval { start: 0, end: 1200 }]);
    }

    #[test]
    fn rejects_short_series() {
        let s = TimeSeries::new(vec![1.0; 10], vec![1.0; 10]).unwrap();
        assert!(matches!(
            detect_changepoints(&s, &PipelineConfig::default()),
            Err(Error::SeriesTooShort { .. })
        ));
    }
}
