//! Labelled corpora of synthetic series, manifests and train/test splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::telemetry::{generate_series, AnomalyKind, AnomalyProfile, GenConfig, Generated, Severity, Status, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    /// Series per status, in status order N, A1..D3.
    pub counts: Vec<(Status, usize)>,
    pub gen: GenConfig,
    pub severity: Severity,
    /// Relative per-series jitter on the base dry / viscous coefficients.
    pub base_jitter: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            counts: kind_counts(1000, 342, 435, 396, 438),
            gen: GenConfig::default(),
            severity: Severity::default(),
            base_jitter: 0.03,
            seed: 0,
        }
    }
}

/// Per-status counts from per-kind totals, split evenly over urgencies
/// (remainders go to the lower urgencies).
pub fn kind_counts(n: usize, a: usize, b: usize, c: usize, d: usize) -> Vec<(Status, usize)> {
    let mut out = vec![(Status::NOMINAL, n)];
    for (kind, total) in [
        (AnomalyKind::A, a),
        (AnomalyKind::B, b),
        (AnomalyKind::C, c),
        (AnomalyKind::D, d),
    ] {
        for u in 1..=3u8 {
            let share = total / 3 + usize::from((u as usize) <= total % 3);
            out.push((Status::new(kind, u).expect("valid"), share));
        }
    }
    out
}

/// `per_status` series of every one of the 13 statuses.
pub fn uniform_counts(per_status: usize) -> Vec<(Status, usize)> {
    Status::all().iter().map(|&s| (s, per_status)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    pub status: Status,
    pub seed: u64,
    /// Series CSV path relative to the manifest.
    pub file: String,
    /// Ground-truth CSV path relative to the manifest.
    pub truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// Read every series, paths resolved against `dir`.
    pub fn read_series(&self, dir: &Path) -> Result<Vec<TimeSeries>> {
        self.entries
            .par_iter()
            .map(|e| TimeSeries::read_csv(&dir.join(&e.file)))
            .collect()
    }
}

/// Generator configuration of one corpus member.
pub fn member_config(spec: &CorpusSpec, series_seed: u64) -> GenConfig {
    let mut rng = seed::rng(seed::derive(series_seed, "jitter", 0));
    let mut g = spec.gen.clone();
    let j = spec.base_jitter;
    g.dry_base *= 1.0 + j * (2.0 * rng.random::<f64>() - 1.0);
    g.visc_base *= 1.0 + j * (2.0 * rng.random::<f64>() - 1.0);
    g.seed = series_seed;
    g
}

/// Generate the corpus in memory. Entry order follows `spec.counts`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<(Entry, Generated)>> {
    if !(spec.base_jitter >= 0.0 && spec.base_jitter < 1.0) {
        return Err(Error::InvalidConfig("base_jitter must be in [0, 1)".into()));
    }
    let mut jobs = Vec::new();
    for &(status, count) in &spec.counts {
        for i in 0..count {
            let idx = jobs.len() as u64;
            let id = format!("{status}-{i:04}");
            jobs.push(Entry {
                file: format!("series/{id}.csv"),
                truth: format!("truth/{id}.csv"),
                id,
                status,
                seed: seed::derive(spec.seed, "series", idx),
            });
        }
    }
    jobs.into_par_iter()
        .map(|e| {
            let profile = AnomalyProfile::for_status(e.status, &spec.severity);
            let g = generate_series(&profile, &member_config(spec, e.seed))?;
            Ok((e, g))
        })
        .collect()
}

/// Generate and write series, ground truth and `manifest.json` under `dir`.
pub fn write_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Manifest> {
    let corpus = generate_corpus(spec)?;
    corpus.par_iter().try_for_each(|(e, g)| {
        crate::io::write_atomic(&dir.join(&e.file), g.series.to_csv_string().as_bytes())?;
        crate::io::write_atomic(&dir.join(&e.truth), g.truth.to_csv_string().as_bytes())
    })?;
    let manifest = Manifest {
        spec: spec.clone(),
        entries: corpus.into_iter().map(|(e, _)| e).collect(),
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Stratified split: within each status, a seeded shuffle puts
/// `round(fraction·count)` members in the training set. Indices ascend.
pub fn split_train_test(statuses: &[Status], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig("train fraction must be in (0, 1)".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in Status::all() {
        let mut idx: Vec<usize> = (0..statuses.len()).filter(|&i| statuses[i] == s).collect();
        let mut rng = seed::rng(seed::derive(seed, "split", s.index() as u64));
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_size() {
        let total: usize = CorpusSpec::default().counts.iter().map(|c| c.1).sum();
        assert_eq!(total, 2611);
        let c = kind_counts(0, 4, 0, 0, 0);
        assert_eq!(c[1].1 + c[2].1 + c[3].1, 4);
        assert_eq!(c[1].1, 2);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let statuses: Vec<Status> = (0..130).map(|i| Status::from_index(i % 13).unwrap()).collect();
        let (tr, te) = split_train_test(&statuses, 0.4, 1).unwrap();
        assert_eq!(tr.len(), 52);
        assert_eq!(tr.len() + te.len(), 130);
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_eq!(split_train_test(&statuses, 0.4, 1).unwrap(), (tr, te));
    }

    #[test]
    fn corpus_is_deterministic() {
        let spec = CorpusSpec {
            counts: uniform_counts(1),
            seed: 4,
            ..CorpusSpec::default()
        };
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a.len(), 13);
        for ((ea, ga), (eb, gb)) in a.iter().zip(&b) {
            assert_eq!(ea, eb);
            assert_eq!(ga.series, gb.series);
        }
    }
}
