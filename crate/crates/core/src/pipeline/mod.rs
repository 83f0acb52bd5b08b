//! Data processing: friction regression, changepoints, coefficient summary
//! and the anomaly C / D histograms fed to the networks.

mod changepoint;
mod histogram;
mod regression;

use serde::{Deserialize, Serialize};

pub use changepoint::{detect_changepoints, Interval};
pub use histogram::{bin_index, edges, pair_deltas, Histogram, Pairing};
pub use regression::{design_is_regular, fit_slices, fit_window, Fit, SINGULAR_TOL};

use crate::error::{Error, Result};
use crate::telemetry::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window_size: usize,
    /// Rolling residual RMS above which a change is declared [mNm].
    pub residual_threshold: f64,
    pub min_interval: usize,
    /// Relative tolerance for "roughly equal" increase/decrease pairs.
    pub pair_match_tolerance: f64,
    /// Maximum index distance between a matched increase and decrease.
    pub pair_match_max_gap: usize,
    /// Number of histogram bins M.
    pub bins: usize,
    pub bin_range_c: (f64, f64),
    pub bin_range_d: (f64, f64),
    /// Samples with |ω| below this are left out of every fit [rad/s].
    pub omega_deadband: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_size: 30,
            residual_threshold: 0.02,
            min_interval: 20,
            pair_match_tolerance: 0.15,
            pair_match_max_gap: 1,
            bins: 20,
            bin_range_c: (0.1, 0.7),
            bin_range_d: (0.05, 0.65),
            omega_deadband: 5.0,
        }
    }
}

impl PipelineConfig {
    pub fn min_series_len(&self) -> usize {
        2 * self.window_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.window_size < 4 {
            return bad(format!("window_size {} < 4", self.window_size));
        }
        if !(self.pair_match_tolerance > 0.0 && self.pair_match_tolerance < 1.0) {
            return bad("pair_match_tolerance must be in (0, 1)".into());
        }
        if self.bins < 2 {
            return bad(format!("bins {} < 2", self.bins));
        }
        if !(self.residual_threshold > 0.0) {
            return bad("residual_threshold must be > 0".into());
        }
        if self.min_interval < 1 || self.pair_match_max_gap < 1 {
            return bad("min_interval and pair_match_max_gap must be >= 1".into());
        }
        if !(self.omega_deadband >= 0.0) {
            return bad("omega_deadband must be >= 0".into());
        }
        histogram::validate_range("bin_range_c", self.bin_range_c)?;
        histogram::validate_range("bin_range_d", self.bin_range_d)
    }
}

/// Which network a histogram feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HistKind {
    C,
    D,
}

impl HistKind {
    pub fn name(self) -> &'static str {
        match self {
            HistKind::C => "C",
            HistKind::D => "D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub interval: Interval,
    pub dry_hat: f64,
    pub visc_hat: f64,
    pub residual_rms: f64,
}

/// One OLS fit per interval.
pub fn estimate_coefficients(
    series: &TimeSeries,
    intervals: &[Interval],
    cfg: &PipelineConfig,
) -> Result<Vec<CoefficientEstimate>> {
    let mut expected = 0;
    for iv in intervals {
        if iv.start != expected || iv.is_empty() {
            return Err(Error::InvalidConfig(
                "intervals do not partition the series".into(),
            ));
        }
        expected = iv.end;
    }
    if expected != series.len() {
        return Err(Error::InvalidConfig(
            "intervals do not cover the series".into(),
        ));
    }
    intervals
        .iter()
        .map(|&iv| {
            let fit = fit_window(series, iv.start, iv.len(), cfg.omega_deadband)?;
            Ok(CoefficientEstimate {
                interval: iv,
                dry_hat: fit.dry,
                visc_hat: fit.visc,
                residual_rms: fit.residual_rms,
            })
        })
        .collect()
}

/// Raw deltas, their pairing, and the two normalised histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub deltas: Vec<f64>,
    pub pairing: Pairing,
    pub hist_c: Histogram,
    pub hist_d: Histogram,
}

pub fn build_histograms(
    estimates: &[CoefficientEstimate],
    cfg: &PipelineConfig,
) -> Result<HistogramPair> {
    if estimates.is_empty() {
        return Err(Error::InvalidConfig("no coefficient estimates".into()));
    }
    let deltas: Vec<f64> = estimates
        .windows(2)
        .map(|w| w[1].dry_hat - w[0].dry_hat)
        .collect();
    let pairing = pair_deltas(&deltas, cfg.pair_match_tolerance, cfg.pair_match_max_gap);
    let hist_c = Histogram::from_values(&pairing.matched_increases, cfg.bins, cfg.bin_range_c);
    let hist_d = Histogram::from_values(&pairing.unmatched, cfg.bins, cfg.bin_range_d);
    Ok(HistogramPair {
        deltas,
        pairing,
        hist_c,
        hist_d,
    })
}

/// Everything the classifier consumes from one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub estimates: Vec<CoefficientEstimate>,
    pub mean_dry: f64,
    pub mean_visc: f64,
    pub deltas: Vec<f64>,
    pub pairing: Pairing,
    pub hist_c: Histogram,
    pub hist_d: Histogram,
}

impl PipelineSummary {
    pub fn histogram(&self, kind: HistKind) -> &Histogram {
        match kind {
            HistKind::C => &self.hist_c,
            HistKind::D => &self.hist_d,
        }
    }
}

pub fn run_pipeline(series: &TimeSeries, cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let intervals = detect_changepoints(series, cfg)?;
    let estimates = estimate_coefficients(series, &intervals, cfg)?;
    let n = estimates.len() as f64;
    let mean_dry = estimates.iter().map(|e| e.dry_hat).sum::<f64>() / n;
    let mean_visc = estimates.iter().map(|e| e.visc_hat).sum::<f64>() / n;
    let HistogramPair {
        deltas,
        pairing,
        hist_c,
        hist_d,
    } = build_histograms(&estimates, cfg)?;
    Ok(PipelineSummary {
        estimates,
        mean_dry,
        mean_visc,
        deltas,
        pairing,
        hist_c,
        hist_d,
    })
}
