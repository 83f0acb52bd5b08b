//! Anomaly C / D histograms from dry-friction deltas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative-frequency histogram over fixed bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<f64>,
    pub edges: Vec<f64>,
    /// Number of values binned before normalisation.
    pub count: usize,
}

impl Histogram {
    pub fn empty(m: usize, range: (f64, f64)) -> Self {
        Self {
            bins: vec![0.0; m],
            edges: edges(m, range),
            count: 0,
        }
    }

    /// Bin `values` (clamping to the end bins) and normalise to sum 1.
    pub fn from_values(values: &[f64], m: usize, range: (f64, f64)) -> Self {
        let mut h = Self::empty(m, range);
        for &v in values {
            h.bins[bin_index(v, m, range)] += 1.0;
        }
        h.count = values.len();
        if h.count > 0 {
            let total = h.count as f64;
            h.bins.iter_mut().for_each(|b| *b /= total);
        }
        h
    }

    pub fn m(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }
}

pub fn edges(m: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    (0..=m)
        .map(|i| lo + (hi - lo) * i as f64 / m as f64)
        .collect()
}

pub fn bin_index(v: f64, m: usize, (lo, hi): (f64, f64)) -> usize {
    let t = (v - lo) / (hi - lo) * m as f64;
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t.floor() as usize).min(m - 1)
    }
}

/// Matched increase/decrease pairs and the leftover deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    /// `(i, j)` delta indices of each matched increase `i` and decrease `j`.
    pub pairs: Vec<(usize, usize)>,
    /// Magnitudes of the matched increases (C values).
    pub matched_increases: Vec<f64>,
    /// Magnitudes of all unmatched deltas (D values).
    pub unmatched: Vec<f64>,
}

/// Greedy left-to-right matching: each unmatched increase `δ_i > 0` takes the
/// first unmatched decrease `δ_j < 0` with `j − i ≤ max_gap` and
/// `|δ_i + δ_j| ≤ tolerance·δ_i`.
pub fn pair_deltas(deltas: &[f64], tolerance: f64, max_gap: usize) -> Pairing {
    let mut used = vec![false; deltas.len()];
    let mut pairs = Vec::new();
    for i in 0..deltas.len() {
        let di = deltas[i];
        if used[i] || di <= 0.0 {
            continue;
        }
        let last = (i + max_gap).min(deltas.len() - 1);
        for j in (i + 1)..=last {
            let dj = deltas[j];
            if !used[j] && dj < 0.0 && (di + dj).abs() <= tolerance * di {
                used[i] = true;
                used[j] = true;
                pairs.push((i, j));
                break;
            }
        }
    }
    Pairing {
        matched_increases: pairs.iter().map(|&(i, _)| deltas[i]).collect(),
        unmatched: deltas
            .iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|(d, _)| d.abs())
            .collect(),
        pairs,
    }
}

pub(crate) fn validate_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "{name} must be a finite increasing range, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_to_end_bins() {
        let h = Histogram::from_values(&[-5.0, 0.05, 99.0], 4, (0.0, 1.0));
        assert_eq!(h.bins, vec![2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]);
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn empty_is_all_zero() {
        let h = Histogram::from_values(&[], 5, (0.0, 1.0));
        assert_eq!(h.total(), 0.0);
        assert_eq!(h.count, 0);
    }

    #[test]
    fn pairs_respect_gap_and_tolerance() {
        let p = pair_deltas(&[0.3, 0.1, -0.3], 0.1, 1);
        assert!(p.pairs.is_empty());
        let p = pair_deltas(&[0.3, 0.1, -0.3], 0.1, 2);
        assert_eq!(p.pairs, vec![(0, 2)]);
        assert_eq!(p.unmatched, vec![0.1]);
        let p = pair_deltas(&[0.3, -0.2], 0.1, 1);
        assert!(p.pairs.is_empty());
    }
}
