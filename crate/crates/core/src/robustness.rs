//! Local-robustness sweeps over perturbation ladders, and global
//! certification of hand-shaped histogram constraint sets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Bundle;
use crate::error::{Error, Result};
use crate::mlp::{MlpModel, NUM_CLASSES};
use crate::perturb::{apply_with_min, build_envelope, snr, Perturbation, PerturbationKind};
use crate::pipeline::HistKind;
use crate::seed;
use crate::telemetry::{AnomalyKind, Status, TimeSeries};
use crate::verifier::{
    verify_local_robustness, verify_query, Constraint, InputRegion, Outcome, Relation, Robustness, Stats,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub id: String,
    pub status: Status,
    pub series: TimeSeries,
}

// ---------------------------------------------------------------------------
// Evaluation set
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingProtocol {
    /// Series drawn for each of C1..C3 and D1..D3.
    pub per_class: usize,
    /// Series drawn from each of D1, D2, D3, A1, A2, N for "no C".
    pub no_c_per_class: usize,
    /// Series drawn from each of A1, A2, N for "no D".
    pub no_d_per_class: usize,
}

impl Default for SamplingProtocol {
    fn default() -> Self {
        Self {
            per_class: 60,
            no_c_per_class: 10,
            no_d_per_class: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalEntry {
    /// Index into the dataset.
    pub index: usize,
    pub id: String,
    pub status: Status,
    pub net: HistKind,
    /// Class the relevant network assigns to the unperturbed series.
    pub expected: usize,
    pub stratum: String,
}

fn st(kind: AnomalyKind, u: u8) -> Status {
    Status::new(kind, u).expect("valid")
}

/// `(stratum name, status, count, network, expected class)` per protocol line.
pub fn strata(p: &SamplingProtocol) -> Vec<(String, Status, usize, HistKind, usize)> {
    let mut out = Vec::new();
    for u in 1..=3u8 {
        let s = st(AnomalyKind::C, u);
        out.push((s.to_string(), s, p.per_class, HistKind::C, u as usize));
    }
    let no_c = [
        st(AnomalyKind::D, 1),
        st(AnomalyKind::D, 2),
        st(AnomalyKind::D, 3),
        st(AnomalyKind::A, 1),
        st(AnomalyKind::A, 2),
        Status::NOMINAL,
    ];
    for s in no_c {
        out.push((format!("no C/{s}"), s, p.no_c_per_class, HistKind::C, 0));
    }
    for u in 1..=3u8 {
        let s = st(AnomalyKind::D, u);
        out.push((s.to_string(), s, p.per_class, HistKind::D, u as usize));
    }
    for s in [st(AnomalyKind::A, 1), st(AnomalyKind::A, 2), Status::NOMINAL] {
        out.push((format!("no D/{s}"), s, p.no_d_per_class, HistKind::D, 0));
    }
    out
}

/// Stratified sample of correctly classified series.
pub fn sample_evaluation_set(
    dataset: &[LabeledSeries],
    bundle: &Bundle,
    protocol: &SamplingProtocol,
    seed: u64,
) -> Result<Vec<EvalEntry>> {
    let decisions = dataset
        .par_iter()
        .map(|d| bundle.decide(&d.series))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (name, status, need, net, expected) in strata(protocol) {
        let mut eligible: Vec<usize> = (0..dataset.len())
            .filter(|&i| {
                let dec = &decisions[i];
                dataset[i].status == status
                    && dec.status == status
                    && bundle
                        .model(net)
                        .classify(&dec.summary.histogram(net).bins)
                        .is_ok_and(|c| c == expected)
            })
            .collect();
        if eligible.len() < need {
            return Err(Error::Stratum {
                name,
                have: eligible.len(),
                need,
            });
        }
        let mut rng = seed::rng(seed::derive(seed, &format!("stratum:{name}"), 0));
        eligible.shuffle(&mut rng);
        let mut chosen = eligible[..need].to_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| EvalEntry {
            index: i,
            id: dataset[i].id.clone(),
            status,
            net,
            expected,
            stratum: name.clone(),
        }));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Strength ladders
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    pub start: f64,
    pub rungs_per_decade: usize,
    pub max_rungs: usize,
    /// Median-SNR floor [dB] for amplitude scaling.
    pub floor_amplitude_db: f64,
    /// Median-SNR floor [dB] for every other SNR-bounded kind.
    pub floor_other_db: f64,
    /// Largest missing-data fraction.
    pub missing_max: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            start: 0.001,
            rungs_per_decade: 4,
            max_rungs: 40,
            floor_amplitude_db: 20.0,
            floor_other_db: 35.0,
            missing_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub kind: PerturbationKind,
    pub epsilons: Vec<f64>,
    /// Median friction-channel SNR per rung (absent for missing data).
    pub median_snr_db: Vec<Option<f64>>,
    /// The first rejected rung and its median SNR, when one was reached.
    pub rejected: Option<(f64, f64)>,
}

fn rung(cfg: &LadderConfig, k: usize) -> f64 {
    10f64.powf(cfg.start.log10() + k as f64 / cfg.rungs_per_decade as f64)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median friction SNR of `kind` at `eps` over the calibration series.
pub fn median_snr(kind: PerturbationKind, eps: f64, calibration: &[TimeSeries], seed: u64) -> Result<f64> {
    let vals = calibration
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = Perturbation::new(kind, eps, seed::derive(seed, "ladder", i as u64))?;
            Ok(snr(s, &apply_with_min(s, &p, 1)?)?.friction)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(median(vals))
}

/// Log-spaced strengths from `cfg.start`. SNR-bounded kinds stop before the
/// first rung whose median SNR falls below the floor (the first rung is
/// always kept); missing data runs to `cfg.missing_max`.
pub fn strength_ladder(
    kind: PerturbationKind,
    calibration: &[TimeSeries],
    cfg: &LadderConfig,
    seed: u64,
) -> Result<Ladder> {
    if !(cfg.start > 0.0) || cfg.rungs_per_decade == 0 || cfg.max_rungs == 0 {
        return Err(Error::InvalidConfig("bad ladder configuration".into()));
    }
    let mut lad = Ladder {
        kind,
        epsilons: Vec::new(),
        median_snr_db: Vec::new(),
        rejected: None,
    };
    if kind == PerturbationKind::MissingData {
        let mut k = 0;
        while lad.epsilons.len() < cfg.max_rungs {
            let e = rung(cfg, k);
            if e >= cfg.missing_max * (1.0 - 1e-12) {
                break;
            }
            lad.epsilons.push(e);
            lad.median_snr_db.push(None);
            k += 1;
        }
        lad.epsilons.push(cfg.missing_max);
        lad.median_snr_db.push(None);
        return Ok(lad);
    }
    if calibration.is_empty() {
        return Err(Error::InvalidConfig("ladder calibration needs series".into()));
    }
    let floor = if kind == PerturbationKind::AmplitudeScaling {
        cfg.floor_amplitude_db
    } else {
        cfg.floor_other_db
    };
    for k in 0..cfg.max_rungs {
        let e = rung(cfg, k);
        let m = median_snr(kind, e, calibration, seed)?;
        if k > 0 && m < floor - 1e-9 {
            lad.rejected = Some((e, m));
            break;
        }
        lad.epsilons.push(e);
        lad.median_snr_db.push(Some(m));
    }
    Ok(lad)
}

// ---------------------------------------------------------------------------
// Local robustness sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterexampleSummary {
    pub id: String,
    /// Every class reached in the envelope other than the expected one.
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub net: HistKind,
    pub class: usize,
    pub class_name: String,
    pub kind: PerturbationKind,
    pub epsilon: f64,
    /// Series evaluated (failures excluded).
    pub n_correct: usize,
    pub n_robust: usize,
    pub n_binary_robust: usize,
    pub n_failed: usize,
    pub counterexamples: Vec<CounterexampleSummary>,
}

impl Cell {
    pub fn rate(&self) -> Option<f64> {
        (self.n_correct > 0).then(|| self.n_robust as f64 / self.n_correct as f64)
    }

    pub fn binary_rate(&self) -> Option<f64> {
        (self.n_correct > 0).then(|| self.n_binary_robust as f64 / self.n_correct as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub n_iters: usize,
    pub seed: u64,
    pub ladders: Vec<Ladder>,
    /// Sorted by network, class, kind, ε.
    pub cells: Vec<Cell>,
    /// `id kind ε: error` for every excluded evaluation.
    pub failures: Vec<String>,
    pub lp_calls: usize,
    pub branches: usize,
    pub near_misses: usize,
}

impl RobustnessReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "net,class,class_name,kind,epsilon,n_correct,n_robust,rate,n_binary_robust,binary_rate,n_failed\n",
        );
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.net.name(),
                c.class,
                c.class_name,
                c.kind,
                c.epsilon,
                c.n_correct,
                c.n_robust,
                f(c.rate()),
                c.n_binary_robust,
                f(c.binary_rate()),
                c.n_failed
            ));
        }
        s
    }
}

/// Whether a counterexample set keeps the anomaly / no-anomaly verdict.
pub fn binary_robust(expected: usize, counterexample_classes: &[usize]) -> bool {
    if expected == 0 {
        counterexample_classes.is_empty()
    } else {
        !counterexample_classes.contains(&0)
    }
}

struct JobResult {
    robust: bool,
    binary: bool,
    classes: Vec<usize>,
    stats: Stats,
    failure: Option<String>,
}

/// Seed of the perturbations applied to one evaluation entry for one kind;
/// shared by every rung so noise realisations scale with ε.
pub fn sweep_seed(root: u64, entry_index: usize, kind: PerturbationKind) -> u64 {
    seed::derive(seed::derive(root, "sweep", entry_index as u64), kind.name(), 0)
}

fn run_job(
    entry: &EvalEntry,
    series: &TimeSeries,
    bundle: &Bundle,
    p: &Perturbation,
    n_iters: usize,
) -> JobResult {
    let attempt = || -> Result<JobResult> {
        let env = build_envelope(series, p, n_iters, &bundle.pipeline)?;
        let e = env.get(entry.net);
        let region = InputRegion::new(e.lower.clone(), e.upper.clone())?;
        let rep = verify_local_robustness(bundle.model(entry.net), &region, entry.expected)?;
        Ok(JobResult {
            robust: rep.result == Robustness::Robust,
            binary: binary_robust(entry.expected, &rep.counterexample_classes),
            classes: rep.counterexample_classes,
            stats: rep.stats,
            failure: None,
        })
    };
    attempt().unwrap_or_else(|e| JobResult {
        robust: false,
        binary: false,
        classes: Vec::new(),
        stats: Stats::default(),
        failure: Some(format!("{} {} {}: {e}", entry.id, p.kind, p.epsilon)),
    })
}

/// Verify every entry against every rung of every ladder.
pub fn local_robustness_sweep(
    dataset: &[LabeledSeries],
    entries: &[EvalEntry],
    bundle: &Bundle,
    ladders: &[Ladder],
    n_iters: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    if n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be >= 1".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|e| (0..ladders.len()).map(move |l| (e, l)))
        .collect();
    let results: Vec<Vec<JobResult>> = jobs
        .par_iter()
        .map(|&(ei, li)| {
            let entry = &entries[ei];
            let lad = &ladders[li];
            let s = sweep_seed(seed, entry.index, lad.kind);
            lad.epsilons
                .iter()
                .map(|&eps| {
                    let p = Perturbation {
                        kind: lad.kind,
                        epsilon: eps,
                        seed: s,
                    };
                    run_job(entry, &dataset[entry.index].series, bundle, &p, n_iters)
                })
                .collect()
        })
        .collect();

    type Key = (HistKind, usize, PerturbationKind, usize);
    let mut cells: BTreeMap<Key, Cell> = BTreeMap::new();
    let mut failures = Vec::new();
    let (mut lp_calls, mut branches, mut near_misses) = (0, 0, 0);
    for (&(ei, li), res) in jobs.iter().zip(results) {
        let entry = &entries[ei];
        let lad = &ladders[li];
        for (ri, r) in res.into_iter().enumerate() {
            let cell = cells
                .entry((entry.net, entry.expected, lad.kind, ri))
                .or_insert_with(|| Cell {
                    net: entry.net,
                    class: entry.expected,
                    class_name: bundle.model(entry.net).class_names[entry.expected].clone(),
                    kind: lad.kind,
                    epsilon: lad.epsilons[ri],
                    n_correct: 0,
                    n_robust: 0,
                    n_binary_robust: 0,
                    n_failed: 0,
                    counterexamples: Vec::new(),
                });
            lp_calls += r.stats.lp_calls;
            branches += r.stats.branches;
            near_misses += r.stats.near_misses.len();
            if let Some(f) = r.failure {
                cell.n_failed += 1;
                failures.push(f);
                continue;
            }
            cell.n_correct += 1;
            cell.n_robust += usize::from(r.robust);
            cell.n_binary_robust += usize::from(r.binary);
            if !r.classes.is_empty() {
                cell.counterexamples.push(CounterexampleSummary {
                    id: entry.id.clone(),
                    classes: r.classes,
                });
            }
        }
    }
    for c in cells.values_mut() {
        c.counterexamples.sort_by(|a, b| a.id.cmp(&b.id));
    }
    failures.sort();
    Ok(RobustnessReport {
        n_iters,
        seed,
        ladders: ladders.to_vec(),
        cells: cells.into_values().collect(),
        failures,
        lp_calls,
        branches,
        near_misses,
    })
}

// ---------------------------------------------------------------------------
// Global robustness
// ---------------------------------------------------------------------------

/// `Σ_{i=1..M} i·h_i`.
pub fn weighted_sum(h: &[f64]) -> f64 {
    h.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()
}

/// Means over every window of `k` consecutive bins (length `M − k + 1`).
pub fn window_means(h: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > h.len() {
        return Err(Error::InvalidConfig(format!(
            "window size {k} not in 1..={}",
            h.len()
        )));
    }
    Ok(h.windows(k).map(|w| w.iter().sum::<f64>() / k as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeanBounds {
    pub k: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConstraintSet {
    pub class: usize,
    /// Box upper bound; the lower bound is 0.
    pub envelope_upper: Vec<f64>,
    pub weighted_sum_interval: (f64, f64),
    pub window_means: Vec<WindowMeanBounds>,
}

impl GlobalConstraintSet {
    /// Direct membership test with absolute `slack`.
    pub fn contains(&self, h: &[f64], slack: f64) -> bool {
        if h.len() != self.envelope_upper.len() {
            return false;
        }
        if !h.iter().zip(&self.envelope_upper).all(|(v, u)| *v >= -slack && *v <= u + slack) {
            return false;
        }
        let ws = weighted_sum(h);
        let (lo, hi) = self.weighted_sum_interval;
        if ws < lo - slack || ws > hi + slack {
            return false;
        }
        self.window_means.iter().all(|w| {
            window_means(h, w.k).is_ok_and(|m| {
                m.iter()
                    .zip(w.lower.iter().zip(&w.upper))
                    .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack)
            })
        })
    }

    pub fn to_region(&self) -> Result<InputRegion> {
        let m = self.envelope_upper.len();
        let mut cons = Vec::new();
        let ws: Vec<f64> = (1..=m).map(|i| i as f64).collect();
        cons.push(Constraint::new(ws.clone(), Relation::Ge, self.weighted_sum_interval.0));
        cons.push(Constraint::new(ws, Relation::Le, self.weighted_sum_interval.1));
        for w in &self.window_means {
            for (i, (l, u)) in w.lower.iter().zip(&w.upper).enumerate() {
                let mut a = vec![0.0; m];
                a[i..i + w.k].iter_mut().for_each(|x| *x = 1.0 / w.k as f64);
                cons.push(Constraint::new(a.clone(), Relation::Ge, *l));
                cons.push(Constraint::new(a, Relation::Le, *u));
            }
        }
        InputRegion::with_constraints(vec![0.0; m], self.envelope_upper.clone(), cons)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    /// Fraction trimmed from a weighted-sum tail when that reduces overlap.
    pub trim_quantile: f64,
    pub window_sizes: Vec<usize>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            trim_quantile: 0.01,
            window_sizes: vec![3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub class: usize,
    /// Corpus members labelled `class`.
    pub members: usize,
    /// Corpus indices of members outside the final set.
    pub excluded: Vec<usize>,
    pub excluded_percent: f64,
    /// Corpus members of other classes inside the final set.
    pub others_inside: usize,
}

/// Interpolated quantile of sorted values.
fn sorted_quantile(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + f * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

/// Build the constraint set of `class` from labelled histograms.
pub fn synthesize_constraints(
    corpus: &[(Vec<f64>, usize)],
    class: usize,
    opts: &SynthesisOptions,
) -> Result<(GlobalConstraintSet, ExclusionReport)> {
    let members: Vec<&Vec<f64>> = corpus.iter().filter(|(_, c)| *c == class).map(|(h, _)| h).collect();
    let Some(first) = members.first() else {
        return Err(Error::InvalidConfig(format!("class {class} has no histograms")));
    };
    let m = first.len();
    if corpus.iter().any(|(h, _)| h.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: corpus.iter().map(|(h, _)| h.len()).find(|&l| l != m).unwrap_or(m),
        });
    }
    if !(0.0..0.5).contains(&opts.trim_quantile) {
        return Err(Error::InvalidConfig("trim_quantile must be in [0, 0.5)".into()));
    }
    if let Some(k) = opts.window_sizes.iter().find(|&&k| k < 2 || k > m) {
        return Err(Error::InvalidConfig(format!("window size {k} not in 2..={m}")));
    }

    let mut upper = vec![0.0f64; m];
    for h in &members {
        for (u, v) in upper.iter_mut().zip(h.iter()) {
            *u = u.max(*v);
        }
    }
    let window_means_b = opts
        .window_sizes
        .iter()
        .map(|&k| {
            let mut lo = vec![f64::INFINITY; m - k + 1];
            let mut hi = vec![f64::NEG_INFINITY; m - k + 1];
            for h in &members {
                for (i, v) in window_means(h, k).expect("checked").into_iter().enumerate() {
                    lo[i] = lo[i].min(v);
                    hi[i] = hi[i].max(v);
                }
            }
            WindowMeanBounds { k, lower: lo, upper: hi }
        })
        .collect();

    let mut ws: Vec<f64> = members.iter().map(|h| weighted_sum(h)).collect();
    ws.sort_by(f64::total_cmp);
    let q = opts.trim_quantile;
    let others: Vec<f64> = corpus
        .iter()
        .filter(|(_, c)| *c != class)
        .map(|(h, _)| weighted_sum(h))
        .collect();
    let mut best: Option<((f64, f64), (usize, usize))> = None;
    for (a, b) in [(0.0, 0.0), (q, 0.0), (0.0, q), (q, q)] {
        let iv = (sorted_quantile(&ws, a), sorted_quantile(&ws, 1.0 - b));
        let overlap = others.iter().filter(|w| **w >= iv.0 && **w <= iv.1).count();
        let dropped = ws.iter().filter(|w| **w < iv.0 || **w > iv.1).count();
        if best.is_none_or(|(_, s)| (overlap, dropped) < s) {
            best = Some((iv, (overlap, dropped)));
        }
    }
    let set = GlobalConstraintSet {
        class,
        envelope_upper: upper,
        weighted_sum_interval: best.expect("four candidates").0,
        window_means: window_means_b,
    };
    let mut excluded = Vec::new();
    let mut others_inside = 0;
    for (i, (h, c)) in corpus.iter().enumerate() {
        let inside = set.contains(h, 0.0);
        if *c == class && !inside {
            excluded.push(i);
        }
        if *c != class && inside {
            others_inside += 1;
        }
    }
    let report = ExclusionReport {
        class,
        members: members.len(),
        excluded_percent: 100.0 * excluded.len() as f64 / members.len() as f64,
        excluded,
        others_inside,
    };
    Ok((set, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certification {
    Certified,
    Counterexample { witness: Vec<f64>, class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalVerdict {
    pub class: usize,
    pub result: Certification,
    pub stats: Stats,
}

/// Certified iff no other class is reachable inside the constraint set.
pub fn certify_global(model: &MlpModel, set: &GlobalConstraintSet) -> Result<GlobalVerdict> {
    let region = set.to_region()?;
    let mut stats = Stats::default();
    for c in (0..NUM_CLASSES).filter(|&c| c != set.class) {
        let v = verify_query(model, &region, c)?;
        stats.lp_calls += v.stats.lp_calls;
        stats.branches += v.stats.branches;
        stats.near_misses.extend(v.stats.near_misses);
        stats.wall_time += v.stats.wall_time;
        if let Outcome::Sat { witness, class } = v.outcome {
            return Ok(GlobalVerdict {
                class: set.class,
                result: Certification::Counterexample { witness, class },
                stats,
            });
        }
    }
    Ok(GlobalVerdict {
        class: set.class,
        result: Certification::Certified,
        stats,
    })
}
