//! The whole methodology from one root seed: corpus, training, evaluation,
//! local robustness sweep and global certification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, fit_bundle, network_label, Bundle, EvalReport};
use crate::dataset::{generate_corpus, split_train_test, CorpusSpec, Entry};
use crate::error::Result;
use crate::mlp::{TrainConfig, NUM_CLASSES};
use crate::perturb::PerturbationKind;
use crate::pipeline::{run_pipeline, HistKind, PipelineConfig, PipelineSummary};
use crate::robustness::{
    certify_global, local_robustness_sweep, sample_evaluation_set, strength_ladder, synthesize_constraints,
    EvalEntry, ExclusionReport, GlobalConstraintSet, GlobalVerdict, LabeledSeries, LadderConfig,
    RobustnessReport, SamplingProtocol, SynthesisOptions,
};
use crate::seed;
use crate::telemetry::{Generated, Status, TimeSeries};

/// Child seeds of every random stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub corpus: u64,
    pub split: u64,
    pub train: u64,
    pub sampling: u64,
    pub ladder: u64,
    pub sweep: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        let d = |tag| seed::derive(root, tag, 0);
        Self {
            corpus: d("corpus"),
            split: d("split"),
            train: d("train"),
            sampling: d("sampling"),
            ladder: d("ladder"),
            sweep: d("sweep"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed. The seeds inside `corpus` and `train` are ignored.
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub protocol: SamplingProtocol,
    pub ladder: LadderConfig,
    /// Every `calibration_stride`-th test series calibrates the ε ladders.
    pub calibration_stride: usize,
    pub kinds: Vec<PerturbationKind>,
    pub n_iters: usize,
    pub synthesis: SynthesisOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSpec::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            train_fraction: 0.4,
            protocol: SamplingProtocol::default(),
            ladder: LadderConfig::default(),
            calibration_stride: 20,
            kinds: PerturbationKind::ALL.to_vec(),
            n_iters: 10,
            synthesis: SynthesisOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Seeds {
        Seeds::from_root(self.seed)
    }

    /// Corpus spec with its seed replaced by the derived one.
    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.seeds().corpus,
            ..self.corpus.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }
}

/// Constraint set, exclusion report and verdict of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalResult {
    pub net: HistKind,
    pub set: GlobalConstraintSet,
    pub exclusion: ExclusionReport,
    pub verdict: GlobalVerdict,
}

/// Labelled input histograms of network `net`: every summary whose status
/// reaches the network, labelled with its ground-truth class.
pub fn labelled_histograms(net: HistKind, data: &[(Status, PipelineSummary)]) -> Vec<(Vec<f64>, usize)> {
    data.iter()
        .filter_map(|(s, p)| network_label(net, *s).map(|l| (p.histogram(net).bins.clone(), l)))
        .collect()
}

/// Synthesize and certify a constraint set for every class of both networks.
/// Classes without members are skipped.
pub fn global_certification(
    bundle: &Bundle,
    data: &[(Status, PipelineSummary)],
    opts: &SynthesisOptions,
) -> Result<Vec<GlobalResult>> {
    let mut out = Vec::new();
    for net in [HistKind::C, HistKind::D] {
        let corpus = labelled_histograms(net, data);
        for class in 0..NUM_CLASSES {
            if !corpus.iter().any(|(_, c)| *c == class) {
                continue;
            }
            let (set, exclusion) = synthesize_constraints(&corpus, class, opts)?;
            let verdict = certify_global(bundle.model(net), &set)?;
            out.push(GlobalResult {
                net,
                set,
                exclusion,
                verdict,
            });
        }
    }
    Ok(out)
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub bundle_thresholds: crate::classifier::Thresholds,
    pub evaluation: EvalReport,
    pub entries: Vec<EvalEntry>,
    pub robustness: RobustnessReport,
    pub global: Vec<GlobalResult>,
    #[serde(skip)]
    pub bundle: Option<Bundle>,
}

/// Generate the corpus and run the default pipeline on every member.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(Vec<(Entry, Generated)>, Vec<PipelineSummary>)> {
    let corpus = generate_corpus(&cfg.corpus_spec())?;
    let summaries = corpus
        .par_iter()
        .map(|(_, g)| run_pipeline(&g.series, &cfg.pipeline))
        .collect::<Result<Vec<_>>>()?;
    Ok((corpus, summaries))
}

/// Sample the evaluation set from `test`, calibrate the ε ladders on every
/// `calibration_stride`-th test series and run the local robustness sweep.
pub fn robustness_stage(
    cfg: &ExperimentConfig,
    bundle: &Bundle,
    test: &[LabeledSeries],
) -> Result<(Vec<EvalEntry>, RobustnessReport)> {
    let seeds = cfg.seeds();
    let entries = sample_evaluation_set(test, bundle, &cfg.protocol, seeds.sampling)?;
    let calibration: Vec<TimeSeries> = test
        .iter()
        .step_by(cfg.calibration_stride.max(1))
        .map(|d| d.series.clone())
        .collect();
    let ladders = cfg
        .kinds
        .iter()
        .map(|&k| strength_ladder(k, &calibration, &cfg.ladder, seeds.ladder))
        .collect::<Result<Vec<_>>>()?;
    let report = local_robustness_sweep(test, &entries, bundle, &ladders, cfg.n_iters, seeds.sweep)?;
    Ok((entries, report))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let seeds = cfg.seeds();
    let (corpus, summaries) = prepare(cfg)?;
    let statuses: Vec<Status> = corpus.iter().map(|(e, _)| e.status).collect();
    let (train, test) = split_train_test(&statuses, cfg.train_fraction, seeds.split)?;

    let training: Vec<(Status, PipelineSummary)> = train.iter().map(|&i| (statuses[i], summaries[i].clone())).collect();
    let bundle = fit_bundle(&training, &cfg.pipeline, &cfg.train_config())?;

    let test_pairs: Vec<(TimeSeries, Status)> = test.iter().map(|&i| (corpus[i].1.series.clone(), statuses[i])).collect();
    let evaluation = evaluate(&test_pairs, &bundle)?;

    let data: Vec<LabeledSeries> = test
        .iter()
        .map(|&i| LabeledSeries {
            id: corpus[i].0.id.clone(),
            status: statuses[i],
            series: corpus[i].1.series.clone(),
        })
        .collect();
    let (entries, robustness) = robustness_stage(cfg, &bundle, &data)?;

    let rebinned = corpus
        .par_iter()
        .map(|(e, g)| Ok((e.status, run_pipeline(&g.series, &bundle.pipeline)?)))
        .collect::<Result<Vec<_>>>()?;
    let global = global_certification(&bundle, &rebinned, &cfg.synthesis)?;

    Ok(Experiment {
        config: cfg.clone(),
        seeds,
        train_ids: train.iter().map(|&i| corpus[i].0.id.clone()).collect(),
        test_ids: test.iter().map(|&i| corpus[i].0.id.clone()).collect(),
        bundle_thresholds: bundle.thresholds.clone(),
        evaluation,
        entries,
        robustness,
        global,
        bundle: Some(bundle),
    })
}
