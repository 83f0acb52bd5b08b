//! The `wheelcheck` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (one line on stderr of the
//! form `error[<kind>]: <message>`), 2 on a usage error.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use wheelcheck::classifier::{evaluate, fit_bundle, Bundle};
use wheelcheck::dataset::{split_train_test, uniform_counts, write_corpus, Manifest};
use wheelcheck::experiment::{global_certification, robustness_stage, run_experiment};
use wheelcheck::io::{write_atomic, write_json};
use wheelcheck::perturb::{apply, build_envelope, instances, snr, Perturbation, PerturbationKind, DETERMINISTIC_LOWER_FRACTION};
use wheelcheck::pipeline::{run_pipeline, PipelineConfig};
use wheelcheck::report::{envelope_csv, envelope_svg, write_evaluation, write_experiment, write_global, write_robustness};
use wheelcheck::robustness::LabeledSeries;
use wheelcheck::telemetry::{Status, TimeSeries};
use wheelcheck::verifier::{read_query, verify_local_robustness, verify_query, Goal, Outcome, Robustness};
use wheelcheck::{mlp::MlpModel, seed};

use config::RunConfig;

/// A domain error with its machine-readable kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    /// `error[<kind>]: <message>` on a single line.
    pub fn line(&self) -> String {
        format!("error[{}]: {}", self.kind, self.message.replace('\n', " "))
    }
}

impl From<wheelcheck::Error> for Failure {
    fn from(e: wheelcheck::Error) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "wheelcheck", version, about = "Reaction-wheel friction anomaly classifier and ReLU verifier")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus directory holding manifest.json.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// Model bundle directory.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic corpus.
    Gen {
        /// Output directory (default: paths.data).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Series per status, or in total with --status.
        #[arg(long)]
        count: Option<usize>,
        /// Only this status, e.g. C2.
        #[arg(long)]
        status: Option<Status>,
    },
    /// Run the processing pipeline on series and write summaries.
    Process {
        /// A series CSV or a corpus manifest.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the bin ranges of this bundle instead of the configured ones.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Calibrate thresholds and train both networks.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Bundle output directory (default: paths.bundle).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a bundle on the held-out split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturb one series and build its histogram envelopes.
    Perturb {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        kind: PerturbationKind,
        #[arg(long)]
        epsilon: f64,
        /// Perturbation seed (default: derived from the root seed).
        #[arg(long)]
        perturb_seed: Option<u64>,
        #[arg(long)]
        n_iters: Option<usize>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide a query file.
    Verify {
        #[arg(long)]
        query: PathBuf,
        /// Write the verdict as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local robustness sweep over the held-out split.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long)]
        n_iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize and certify global constraint sets.
    Certify {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole experiment in memory and write every report.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(lines) => {
            // a closed pipe downstream is not an error of ours
            let mut out = std::io::stdout().lock();
            for l in lines {
                if writeln!(out, "{l}").is_err() {
                    break;
                }
            }
            0
        }
        Err(f) => {
            eprintln!("{}", f.line());
            1
        }
    }
}

fn load_config(cli: &Cli) -> Res<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    Ok(cfg)
}

/// Split of a trained bundle, kept beside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

struct Corpus {
    manifest: Manifest,
    series: Vec<TimeSeries>,
}

impl Corpus {
    fn load(dir: &Path) -> Res<Self> {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let series = manifest.read_series(dir)?;
        Ok(Self { manifest, series })
    }

    fn statuses(&self) -> Vec<Status> {
        self.manifest.entries.iter().map(|e| e.status).collect()
    }

    fn labelled(&self, ids: &[String]) -> Res<Vec<LabeledSeries>> {
        ids.iter()
            .map(|id| {
                let i = self
                    .manifest
                    .entries
                    .iter()
                    .position(|e| &e.id == id)
                    .ok_or_else(|| Failure::new("split", format!("series {id} not in the corpus")))?;
                Ok(LabeledSeries {
                    id: id.clone(),
                    status: self.manifest.entries[i].status,
                    series: self.series[i].clone(),
                })
            })
            .collect()
    }
}

fn load_split(bundle_dir: &Path) -> Res<Split> {
    Ok(wheelcheck::io::read_json(&bundle_dir.join("split.json"))?)
}

fn execute(cli: Cli) -> Res<Vec<String>> {
    let cfg = load_config(&cli)?;
    let exp = &cfg.experiment;
    let pick = |flag: &Option<PathBuf>, default: &Path| flag.clone().unwrap_or_else(|| default.to_path_buf());
    match &cli.command {
        Command::Gen { out, count, status } => {
            let out = pick(out, &cfg.paths.data);
            let mut spec = exp.corpus_spec();
            match (count, status) {
                (Some(n), Some(s)) => spec.counts = vec![(*s, *n)],
                (None, Some(s)) => spec.counts = vec![(*s, 1)],
                (Some(n), None) => spec.counts = uniform_counts(*n),
                (None, None) => {}
            }
            let m = write_corpus(&spec, &out)?;
            Ok(vec![format!("wrote {} series to {}", m.entries.len(), out.display())])
        }
        Command::Process { input, out, bundle } => {
            let pipeline = match bundle {
                Some(b) => Bundle::load(b)?.pipeline,
                None => exp.pipeline.clone(),
            };
            let jobs: Vec<(String, TimeSeries)> = if input.extension().is_some_and(|e| e == "json") {
                let dir = input.parent().unwrap_or(Path::new("."));
                let m = Manifest::load(input)?;
                let series = m.read_series(dir)?;
                m.entries.into_iter().map(|e| e.id).zip(series).collect()
            } else {
                let stem = input.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned());
                vec![(stem, TimeSeries::read_csv(input)?)]
            };
            for (id, s) in &jobs {
                write_json(&out.join(format!("{id}.json")), &run_pipeline(s, &pipeline)?)?;
            }
            Ok(vec![format!("processed {} series into {}", jobs.len(), out.display())])
        }
        Command::Train { data, out } => {
            let corpus = Corpus::load(&pick(&data.data, &cfg.paths.data))?;
            let out = pick(out, &cfg.paths.bundle);
            let statuses = corpus.statuses();
            let (train, test) = split_train_test(&statuses, exp.train_fraction, exp.seeds().split)?;
            let training = train
                .iter()
                .map(|&i| Ok((statuses[i], run_pipeline(&corpus.series[i], &exp.pipeline)?)))
                .collect::<Res<Vec<_>>>()?;
            let bundle = fit_bundle(&training, &exp.pipeline, &exp.train_config())?;
            bundle.save(&out)?;
            let ids = |v: &[usize]| v.iter().map(|&i| corpus.manifest.entries[i].id.clone()).collect();
            let split = Split {
                seed: exp.seed,
                train_ids: ids(&train),
                test_ids: ids(&test),
            };
            write_json(&out.join("split.json"), &split)?;
            let mut lines = vec![format!(
                "trained on {} series, {} held out; bundle in {}",
                train.len(),
                test.len(),
                out.display()
            )];
            lines.extend(bundle.overlaps.iter().map(|o| format!("overlap: {o}")));
            Ok(lines)
        }
        Command::Eval { data, bundle, out } => {
            let corpus = Corpus::load(&pick(&data.data, &cfg.paths.data))?;
            let bdir = pick(&bundle.bundle, &cfg.paths.bundle);
            let b = Bundle::load(&bdir)?;
            let test = corpus.labelled(&load_split(&bdir)?.test_ids)?;
            let pairs: Vec<(TimeSeries, Status)> = test.into_iter().map(|l| (l.series, l.status)).collect();
            let report = evaluate(&pairs, &b)?;
            let out = pick(out, &cfg.paths.reports);
            write_evaluation(&out, &report)?;
            write_json(&out.join("evaluation.json"), &report)?;
            Ok(report.to_text().lines().map(str::to_string).collect())
        }
        Command::Perturb {
            series,
            kind,
            epsilon,
            perturb_seed,
            n_iters,
            bundle,
            out,
        } => {
            let pipeline: PipelineConfig = match bundle {
                Some(b) => Bundle::load(b)?.pipeline,
                None => exp.pipeline.clone(),
            };
            let s = TimeSeries::read_csv(series)?;
            let n = n_iters.unwrap_or(exp.n_iters);
            if n == 0 {
                return Err(Failure::new("config", "n_iters must be >= 1"));
            }
            let p = Perturbation::new(*kind, *epsilon, perturb_seed.unwrap_or(seed::derive(exp.seed, "perturb", 0)))?;
            write_atomic(&out.join("perturbed.csv"), apply(&s, &p)?.to_csv_string().as_bytes())?;
            let mut table = String::from("instance,kind,epsilon,seed,snr_friction_db,snr_omega_db\n");
            for (i, q) in instances(&p, n, DETERMINISTIC_LOWER_FRACTION).iter().enumerate() {
                let r = snr(&s, &apply(&s, q)?)?;
                table.push_str(&format!("{i},{},{},{},{},{}\n", q.kind, q.epsilon, q.seed, r.friction, r.omega));
            }
            write_atomic(&out.join("snr.csv"), table.as_bytes())?;
            let env = build_envelope(&s, &p, n, &pipeline)?;
            write_json(
                &out.join("envelope.json"),
                &serde_json::json!({
                    "perturbation": p,
                    "n_iters": n,
                    "lower_fraction": DETERMINISTIC_LOWER_FRACTION,
                    "envelopes": env,
                }),
            )?;
            let base = run_pipeline(&s, &pipeline)?;
            for (name, e, h) in [("C", &env.c, &base.hist_c.bins), ("D", &env.d, &base.hist_d.bins)] {
                let title = format!("{name} histogram envelope, {} ε = {}", p.kind, p.epsilon);
                let overlay: [(&str, &[f64]); 1] = [("unperturbed", h)];
                write_atomic(&out.join(format!("envelope_{name}.svg")), envelope_svg(&title, e, &overlay).as_bytes())?;
                write_atomic(&out.join(format!("envelope_{name}.csv")), envelope_csv(e, &overlay).as_bytes())?;
            }
            Ok(vec![format!("wrote perturbation, SNR table and envelopes to {}", out.display())])
        }
        Command::Verify { query, out } => {
            let q = read_query(query)?;
            let model = MlpModel::load(&q.model)?;
            let (line, json) = match q.goal {
                Goal::Expected(k) => {
                    let r = verify_local_robustness(&model, &q.region, k)?;
                    let line = match &r.result {
                        Robustness::Robust => "ROBUST".to_string(),
                        Robustness::Counterexample { class, .. } => format!("NOT ROBUST class={class}"),
                    };
                    (line, serde_json::to_value(&r).expect("serializable"))
                }
                Goal::Target(k) => {
                    let v = verify_query(&model, &q.region, k)?;
                    let line = match &v.outcome {
                        Outcome::Sat { class, .. } => format!("SAT class={class}"),
                        Outcome::Unsat => "UNSAT".to_string(),
                    };
                    (line, serde_json::json!({ "outcome": v.outcome, "stats": v.stats }))
                }
            };
            if let Some(o) = out {
                write_json(o, &json)?;
            }
            Ok(vec![line])
        }
        Command::Sweep {
            data,
            bundle,
            n_iters,
            out,
        } => {
            let corpus = Corpus::load(&pick(&data.data, &cfg.paths.data))?;
            let bdir = pick(&bundle.bundle, &cfg.paths.bundle);
            let b = Bundle::load(&bdir)?;
            let test = corpus.labelled(&load_split(&bdir)?.test_ids)?;
            let mut e = exp.clone();
            if let Some(n) = n_iters {
                e.n_iters = *n;
            }
            if e.n_iters == 0 {
                return Err(Failure::new("config", "n_iters must be >= 1"));
            }
            let (entries, report) = robustness_stage(&e, &b, &test)?;
            let out = pick(out, &cfg.paths.reports);
            write_robustness(&out, &report)?;
            write_json(&out.join("entries.json"), &entries)?;
            Ok(wheelcheck::report::robustness_summary(&report).lines().map(str::to_string).collect())
        }
        Command::Certify { data, bundle, out } => {
            let corpus = Corpus::load(&pick(&data.data, &cfg.paths.data))?;
            let b = Bundle::load(&pick(&bundle.bundle, &cfg.paths.bundle))?;
            let rebinned = corpus
                .series
                .iter()
                .zip(corpus.statuses())
                .map(|(s, st)| Ok((st, run_pipeline(s, &b.pipeline)?)))
                .collect::<Res<Vec<_>>>()?;
            let results = global_certification(&b, &rebinned, &exp.synthesis)?;
            let out = pick(out, &cfg.paths.reports);
            write_global(&out, &results)?;
            Ok(wheelcheck::report::global_csv(&results).lines().map(str::to_string).collect())
        }
        Command::Report { out } => {
            let e = run_experiment(exp)?;
            let out = pick(out, &cfg.paths.reports);
            let files = write_experiment(&out, &e)?;
            let mut lines: Vec<String> = wheelcheck::report::experiment_summary(&e).lines().map(str::to_string).collect();
            lines.push(format!("wrote {} files to {}", files.len(), out.display()));
            Ok(lines)
        }
    }
}
