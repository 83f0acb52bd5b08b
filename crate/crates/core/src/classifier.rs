//! Hybrid status classifier: thresholds for A3 / B, network C, network D,
//! thresholds for A1 / A2 / nominal, in that order.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{self, MlpModel, Sample, TrainConfig};
use crate::pipeline::{edges, run_pipeline, HistKind, Histogram, PipelineConfig, PipelineSummary};
use crate::seed;
use crate::telemetry::{AnomalyKind, Status, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dry_a1: f64,
    pub dry_a2: f64,
    pub dry_a3: f64,
    pub visc_b1: f64,
    pub visc_b2: f64,
    pub visc_b3: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dry_a1 < self.dry_a2
            && self.dry_a2 < self.dry_a3
            && self.visc_b1 < self.visc_b2
            && self.visc_b2 < self.visc_b3;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "thresholds not strictly increasing: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which stage of the tree produced the status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    DryA3,
    ViscB,
    NetC,
    NetD,
    DryTail,
}

fn status(kind: AnomalyKind, urgency: usize) -> Status {
    Status::new(kind, urgency as u8).expect("urgency in 1..=3")
}

fn check_dims(nn_c: &MlpModel, nn_d: &MlpModel, m: usize) -> Result<()> {
    for nn in [nn_c, nn_d] {
        if nn.input_dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: nn.input_dim(),
            });
        }
    }
    Ok(())
}

/// Walk the tree on an already processed series.
pub fn classify_summary(
    summary: &PipelineSummary,
    t: &Thresholds,
    nn_c: &MlpModel,
    nn_d: &MlpModel,
) -> Result<(Status, Stage)> {
    check_dims(nn_c, nn_d, summary.hist_c.m())?;
    let (d, v) = (summary.mean_dry, summary.mean_visc);
    if d >= t.dry_a3 {
        return Ok((status(AnomalyKind::A, 3), Stage::DryA3));
    }
    if v >= t.visc_b1 {
        let u = if v >= t.visc_b3 {
            3
        } else if v >= t.visc_b2 {
            2
        } else {
            1
        };
        return Ok((status(AnomalyKind::B, u), Stage::ViscB));
    }
    let c = nn_c.classify(&summary.hist_c.bins)?;
    if c > 0 {
        return Ok((status(AnomalyKind::C, c), Stage::NetC));
    }
    let k = nn_d.classify(&summary.hist_d.bins)?;
    if k > 0 {
        return Ok((status(AnomalyKind::D, k), Stage::NetD));
    }
    let s = if d >= t.dry_a2 {
        status(AnomalyKind::A, 2)
    } else if d >= t.dry_a1 {
        status(AnomalyKind::A, 1)
    } else {
        Status::NOMINAL
    };
    Ok((s, Stage::DryTail))
}

pub fn classify_series(
    series: &TimeSeries,
    thresholds: &Thresholds,
    nn_c: &MlpModel,
    nn_d: &MlpModel,
    cfg: &PipelineConfig,
) -> Result<Status> {
    check_dims(nn_c, nn_d, cfg.bins)?;
    let summary = run_pipeline(series, cfg)?;
    Ok(classify_summary(&summary, thresholds, nn_c, nn_d)?.0)
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Quantile used on each side when two classes overlap.
pub const OVERLAP_QUANTILE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub thresholds: Thresholds,
    /// Names of cuts that fell back to the quantile midpoint.
    pub overlaps: Vec<String>,
}

/// Linear-interpolated quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

/// Midpoint between `max(lower)` and `min(upper)`; quantile midpoint on
/// overlap. Returns the cut and whether the fallback fired.
pub fn separating_cut(name: &str, lower: &[f64], upper: &[f64]) -> Result<(f64, bool)> {
    if lower.is_empty() || upper.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "cannot calibrate {name}: a side has no training series"
        )));
    }
    let hi = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = upper.iter().copied().fold(f64::INFINITY, f64::min);
    if hi < lo {
        return Ok((0.5 * (hi + lo), false));
    }
    let a = quantile(lower, 1.0 - OVERLAP_QUANTILE);
    let b = quantile(upper, OVERLAP_QUANTILE);
    Ok((0.5 * (a + b), true))
}

/// Calibrate all cuts from `(actual status, mean dry, mean viscous)` triples.
pub fn calibrate_thresholds(samples: &[(Status, f64, f64)]) -> Result<Calibration> {
    let pick = |pred: &dyn Fn(Status) -> bool, dry: bool| -> Vec<f64> {
        samples
            .iter()
            .filter(|(s, _, _)| pred(*s))
            .map(|&(_, d, v)| if dry { d } else { v })
            .collect()
    };
    let is = |k: AnomalyKind, u: u8| move |s: Status| s.kind() == k && s.urgency() == u;
    let a3 = is(AnomalyKind::A, 3);
    let b1 = is(AnomalyKind::B, 1);
    let b2 = is(AnomalyKind::B, 2);
    let b3 = is(AnomalyKind::B, 3);
    let a1 = is(AnomalyKind::A, 1);
    let a2 = is(AnomalyKind::A, 2);

    let mut overlaps = Vec::new();
    let mut cut = |name: &str, lower: Vec<f64>, upper: Vec<f64>| -> Result<f64> {
        let (c, fell_back) = separating_cut(name, &lower, &upper)?;
        if fell_back {
            overlaps.push(name.to_string());
        }
        Ok(c)
    };
    let dry_a3 = cut("dry_a3", pick(&|s| !a3(s), true), pick(&a3, true))?;
    let visc_b1 = cut(
        "visc_b1",
        pick(&|s| s.kind() != AnomalyKind::B && !a3(s), false),
        pick(&b1, false),
    )?;
    let visc_b2 = cut("visc_b2", pick(&b1, false), pick(&b2, false))?;
    let visc_b3 = cut("visc_b3", pick(&b2, false), pick(&b3, false))?;
    let dry_a1 = cut("dry_a1", pick(&|s| s == Status::NOMINAL, true), pick(&a1, true))?;
    let dry_a2 = cut("dry_a2", pick(&a1, true), pick(&a2, true))?;
    let thresholds = Thresholds {
        dry_a1,
        dry_a2,
        dry_a3,
        visc_b1,
        visc_b2,
        visc_b3,
    };
    thresholds.validate()?;
    Ok(Calibration {
        thresholds,
        overlaps,
    })
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// Thresholds, both networks and the pipeline geometry they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub thresholds: Thresholds,
    pub nn_c: MlpModel,
    pub nn_d: MlpModel,
    pub pipeline: PipelineConfig,
    pub overlaps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub status: Status,
    pub stage: Stage,
    pub summary: PipelineSummary,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    thresholds: Thresholds,
    pipeline: PipelineConfig,
    overlaps: Vec<String>,
    nn_c: String,
    nn_d: String,
}

impl Bundle {
    pub fn model(&self, kind: HistKind) -> &MlpModel {
        match kind {
            HistKind::C => &self.nn_c,
            HistKind::D => &self.nn_d,
        }
    }

    pub fn decide(&self, series: &TimeSeries) -> Result<Decision> {
        let summary = run_pipeline(series, &self.pipeline)?;
        let (status, stage) = classify_summary(&summary, &self.thresholds, &self.nn_c, &self.nn_d)?;
        Ok(Decision {
            status,
            stage,
            summary,
        })
    }

    pub fn classify(&self, series: &TimeSeries) -> Result<Status> {
        Ok(self.decide(series)?.status)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.nn_c.save(&dir.join("nn_c.json"))?;
        self.nn_d.save(&dir.join("nn_d.json"))?;
        crate::io::write_json(
            &dir.join("bundle.json"),
            &BundleFile {
                thresholds: self.thresholds,
                pipeline: self.pipeline.clone(),
                overlaps: self.overlaps.clone(),
                nn_c: "nn_c.json".into(),
                nn_d: "nn_d.json".into(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let f: BundleFile = crate::io::read_json(&dir.join("bundle.json"))?;
        f.thresholds.validate()?;
        f.pipeline.validate()?;
        let nn_c = MlpModel::load(&dir.join(&f.nn_c))?;
        let nn_d = MlpModel::load(&dir.join(&f.nn_d))?;
        check_dims(&nn_c, &nn_d, f.pipeline.bins)?;
        Ok(Self {
            thresholds: f.thresholds,
            nn_c,
            nn_d,
            pipeline: f.pipeline,
            overlaps: f.overlaps,
        })
    }
}

/// Series that reach the network for `kind`, with their training label.
pub fn network_label(kind: HistKind, s: Status) -> Option<usize> {
    let u = s.urgency() as usize;
    match (kind, s.kind()) {
        (_, AnomalyKind::B) => None,
        (_, AnomalyKind::A) if u == 3 => None,
        (HistKind::C, AnomalyKind::C) => Some(u),
        (HistKind::D, AnomalyKind::C) => None,
        (HistKind::D, AnomalyKind::D) => Some(u),
        _ => Some(0),
    }
}

/// Quantiles of pairing values that fix each histogram's bin range.
pub const BIN_RANGE_QUANTILES: (f64, f64) = (0.01, 0.99);

fn calibrated_range(values: &[f64], fallback: (f64, f64)) -> (f64, f64) {
    if values.len() < 2 {
        return fallback;
    }
    let lo = quantile(values, BIN_RANGE_QUANTILES.0);
    let hi = quantile(values, BIN_RANGE_QUANTILES.1);
    if hi > lo {
        (lo, hi)
    } else {
        fallback
    }
}

fn rebin(summary: &PipelineSummary, cfg: &PipelineConfig) -> (Histogram, Histogram) {
    (
        Histogram::from_values(&summary.pairing.matched_increases, cfg.bins, cfg.bin_range_c),
        Histogram::from_values(&summary.pairing.unmatched, cfg.bins, cfg.bin_range_d),
    )
}

/// Calibrate thresholds and bin ranges and train both networks from labelled
/// pipeline summaries. The returned bundle's pipeline carries the ranges.
pub fn fit_bundle(
    training: &[(Status, PipelineSummary)],
    pipeline: &PipelineConfig,
    train_cfg: &TrainConfig,
) -> Result<Bundle> {
    pipeline.validate()?;
    let triples: Vec<(Status, f64, f64)> = training
        .iter()
        .map(|(s, p)| (*s, p.mean_dry, p.mean_visc))
        .collect();
    let cal = calibrate_thresholds(&triples)?;

    let mut cfg = pipeline.clone();
    let gather = |kind: AnomalyKind, pick: fn(&PipelineSummary) -> &Vec<f64>| -> Vec<f64> {
        training
            .iter()
            .filter(|(s, _)| s.kind() == kind)
            .flat_map(|(_, p)| pick(p).iter().copied())
            .collect()
    };
    cfg.bin_range_c = calibrated_range(
        &gather(AnomalyKind::C, |p| &p.pairing.matched_increases),
        pipeline.bin_range_c,
    );
    cfg.bin_range_d = calibrated_range(
        &gather(AnomalyKind::D, |p| &p.pairing.unmatched),
        pipeline.bin_range_d,
    );

    let rebinned: Vec<(Status, Histogram, Histogram)> = training
        .iter()
        .map(|(s, p)| {
            let (c, d) = rebin(p, &cfg);
            (*s, c, d)
        })
        .collect();
    let samples = |kind: HistKind| -> Vec<Sample> {
        rebinned
            .iter()
            .filter_map(|(s, c, d)| {
                network_label(kind, *s).map(|label| Sample {
                    input: match kind {
                        HistKind::C => c.bins.clone(),
                        HistKind::D => d.bins.clone(),
                    },
                    label,
                })
            })
            .collect()
    };
    let (sc, sd) = (samples(HistKind::C), samples(HistKind::D));
    let cfg_c = TrainConfig {
        seed: seed::derive(train_cfg.seed, "nn", 0),
        ..train_cfg.clone()
    };
    let cfg_d = TrainConfig {
        seed: seed::derive(train_cfg.seed, "nn", 1),
        ..train_cfg.clone()
    };
    let (nn_c, nn_d) = rayon::join(|| mlp::train(&sc, &cfg_c), || mlp::train(&sd, &cfg_d));
    let (mut nn_c, mut nn_d) = (nn_c?, nn_d?);
    nn_c.class_names = mlp::default_class_names("C");
    nn_d.class_names = mlp::default_class_names("D");
    nn_c.bin_edges = edges(cfg.bins, cfg.bin_range_c);
    nn_d.bin_edges = edges(cfg.bins, cfg.bin_range_d);
    Ok(Bundle {
        thresholds: cal.thresholds,
        nn_c,
        nn_d,
        pipeline: cfg,
        overlaps: cal.overlaps,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetric {
    pub name: String,
    /// Members of the grouping, as status indices.
    pub members: Vec<usize>,
    /// Series whose actual status is in the grouping.
    pub n: u64,
    /// Series predicted into the grouping.
    pub n_all: u64,
    /// Series with both actual and predicted status in the grouping.
    pub n_correct: u64,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[predicted][actual]`, order N, A1..D3.
    pub confusion: Vec<Vec<u64>>,
    pub groupings: Vec<GroupMetric>,
}

/// The eight groupings: all anomalies, each urgency level, each anomaly.
pub fn groupings() -> Vec<(String, Vec<usize>)> {
    let kinds = [AnomalyKind::A, AnomalyKind::B, AnomalyKind::C, AnomalyKind::D];
    let idx = |k: AnomalyKind, u: u8| status(k, u as usize).index();
    let mut out = vec![("A+B+C+D".to_string(), (1..13).collect())];
    for u in 1..=3u8 {
        out.push((
            format!("A{u}+B{u}+C{u}+D{u}"),
            kinds.iter().map(|&k| idx(k, u)).collect(),
        ));
    }
    for (k, name) in kinds.into_iter().zip(["A", "B", "C", "D"]) {
        out.push((name.to_string(), (1..=3).map(|u| idx(k, u)).collect()));
    }
    out
}

impl EvalReport {
    /// Build from `(predicted, actual)` pairs.
    pub fn from_pairs(pairs: &[(Status, Status)]) -> Self {
        let mut confusion = vec![vec![0u64; 13]; 13];
        for (p, a) in pairs {
            confusion[p.index()][a.index()] += 1;
        }
        let groupings = groupings()
            .into_iter()
            .map(|(name, members)| {
                let mut n = 0;
                let mut n_all = 0;
                let mut n_correct = 0;
                for (p, row) in confusion.iter().enumerate() {
                    for (a, &c) in row.iter().enumerate() {
                        let (pi, ai) = (members.contains(&p), members.contains(&a));
                        if ai {
                            n += c;
                        }
                        if pi {
                            n_all += c;
                        }
                        if pi && ai {
                            n_correct += c;
                        }
                    }
                }
                let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
                GroupMetric {
                    name,
                    members,
                    n,
                    n_all,
                    n_correct,
                    sensitivity: ratio(n_correct, n),
                    ppv: ratio(n_correct, n_all),
                }
            })
            .collect();
        Self {
            confusion,
            groupings,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# confusion: rows predicted, columns actual\n");
        let names: Vec<String> = Status::all().iter().map(Status::to_string).collect();
        s.push_str(&format!("pred\\act,{}\n", names.join(",")));
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&format!("{},{}\n", names[i], cells.join(",")));
        }
        s.push_str("\n# grouping,n,n_all,n_correct,sensitivity,ppv\n");
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{:.4}", x));
        for g in &self.groupings {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                g.name,
                g.n,
                g.n_all,
                g.n_correct,
                fmt(g.sensitivity),
                fmt(g.ppv)
            ));
        }
        s
    }
}

/// Classify every `(series, actual)` pair (in parallel) and tabulate.
pub fn evaluate(dataset: &[(TimeSeries, Status)], bundle: &Bundle) -> Result<EvalReport> {
    let pairs = dataset
        .par_iter()
        .map(|(s, actual)| Ok((bundle.classify(s)?, *actual)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_pairs(&pairs))
}
