//! Time-series perturbations, SNR, and histogram envelopes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, HistKind, PipelineConfig};
use crate::seed;
use crate::telemetry::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Gaussian,
    Uniform,
    Poisson,
    LinearTrend,
    AmplitudeScaling,
    MissingData,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 6] = [
        PerturbationKind::Gaussian,
        PerturbationKind::Uniform,
        PerturbationKind::Poisson,
        PerturbationKind::LinearTrend,
        PerturbationKind::AmplitudeScaling,
        PerturbationKind::MissingData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Gaussian => "gaussian",
            PerturbationKind::Uniform => "uniform",
            PerturbationKind::Poisson => "poisson",
            PerturbationKind::LinearTrend => "linear_trend",
            PerturbationKind::AmplitudeScaling => "amplitude_scaling",
            PerturbationKind::MissingData => "missing_data",
        }
    }

    /// Kinds whose output depends on the seed.
    pub fn is_random(self) -> bool {
        !matches!(
            self,
            PerturbationKind::LinearTrend | PerturbationKind::AmplitudeScaling
        )
    }

    pub fn is_additive_noise(self) -> bool {
        matches!(
            self,
            PerturbationKind::Gaussian | PerturbationKind::Uniform | PerturbationKind::Poisson
        )
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown perturbation kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub epsilon: f64,
    pub seed: u64,
}

impl Perturbation {
    pub fn new(kind: PerturbationKind, epsilon: f64, seed: u64) -> Result<Self> {
        let p = Self { kind, epsilon, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.kind == PerturbationKind::MissingData && self.epsilon >= 1.0 {
            return Err(Error::InvalidConfig("missing-data epsilon must be < 1".into()));
        }
        Ok(())
    }
}

fn amplitude(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    hi - lo
}

/// Number of samples removed by missing data at strength `eps`.
pub fn missing_count(eps: f64, n: usize) -> usize {
    ((eps * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Apply `p`, refusing to drop below the default pipeline minimum length.
pub fn apply(series: &TimeSeries, p: &Perturbation) -> Result<TimeSeries> {
    apply_with_min(series, p, PipelineConfig::default().min_series_len())
}

pub fn apply_with_min(series: &TimeSeries, p: &Perturbation, min_len: usize) -> Result<TimeSeries> {
    p.validate()?;
    let n = series.len();
    let (omega, fric) = (series.omega(), series.friction());
    let eps = p.epsilon;
    let (w, f): (Vec<f64>, Vec<f64>) = match p.kind {
        PerturbationKind::Gaussian | PerturbationKind::Uniform | PerturbationKind::Poisson => {
            let mut rng = seed::rng(p.seed);
            let poisson = Poisson::new(1.0).expect("valid rate");
            let (aw, af) = (eps * amplitude(omega), eps * amplitude(fric));
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
                match p.kind {
                    PerturbationKind::Gaussian => rng.sample(StandardNormal),
                    PerturbationKind::Uniform => rng.random_range(-1.0..=1.0),
                    _ => poisson.sample(rng) - 1.0,
                }
            };
            let mut w = Vec::with_capacity(n);
            let mut f = Vec::with_capacity(n);
            for k in 0..n {
                let nw = draw(&mut rng);
                let nf = draw(&mut rng);
                w.push(omega[k] + aw * nw);
                f.push(fric[k] + af * nf);
            }
            (w, f)
        }
        PerturbationKind::LinearTrend => (
            omega.to_vec(),
            fric.iter()
                .enumerate()
                .map(|(k, &v)| v + eps * k as f64 / n as f64)
                .collect(),
        ),
        PerturbationKind::AmplitudeScaling => {
            let g = 1.0 + eps;
            (
                omega.iter().map(|v| v * g).collect(),
                fric.iter().map(|v| v * g).collect(),
            )
        }
        PerturbationKind::MissingData => {
            let drop = missing_count(eps, n);
            if n - drop.min(n) < min_len {
                return Err(Error::SeriesTooShort {
                    len: n - drop.min(n),
                    min: min_len,
                });
            }
            let mut rng = seed::rng(p.seed);
            let mut keep = vec![true; n];
            for i in rand::seq::index::sample(&mut rng, n, drop) {
                keep[i] = false;
            }
            let pick = |x: &[f64]| -> Vec<f64> {
                x.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect()
            };
            (pick(omega), pick(fric))
        }
    };
    TimeSeries::new(w, f)
}

/// Signal-to-noise ratios [dB] of a perturbed series, per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snr {
    pub friction: f64,
    pub omega: f64,
}

fn power(x: impl Iterator<Item = f64>, n: usize) -> f64 {
    x.map(|v| v * v).sum::<f64>() / n as f64
}

/// `10·log10(P(s) / P(s − p))`, `+∞` when the series are identical.
pub fn snr_channel(s: &[f64], p: &[f64]) -> Result<f64> {
    if s.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: p.len(),
        });
    }
    let n = s.len();
    let noise = power(s.iter().zip(p).map(|(a, b)| a - b), n);
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (power(s.iter().copied(), n) / noise).log10())
}

pub fn snr(original: &TimeSeries, perturbed: &TimeSeries) -> Result<Snr> {
    Ok(Snr {
        friction: snr_channel(original.friction(), perturbed.friction())?,
        omega: snr_channel(original.omega(), perturbed.omega())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sample_count: usize,
}

impl Envelope {
    /// Componentwise min / max of `members` (all of the same length).
    pub fn from_members<'a>(members: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut it = members.into_iter();
        let first = it.next()?;
        let mut e = Envelope {
            lower: first.to_vec(),
            upper: first.to_vec(),
            sample_count: 1,
        };
        for h in it {
            for (i, &v) in h.iter().enumerate() {
                e.lower[i] = e.lower[i].min(v);
                e.upper[i] = e.upper[i].max(v);
            }
            e.sample_count += 1;
        }
        Some(e)
    }

    pub fn width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).sum()
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        h.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }
}

/// Envelopes of both histograms over the same perturbed instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub c: Envelope,
    pub d: Envelope,
}

impl EnvelopePair {
    pub fn get(&self, kind: HistKind) -> &Envelope {
        match kind {
            HistKind::C => &self.c,
            HistKind::D => &self.d,
        }
    }
}

/// Lower end of the strength sweep for deterministic kinds, as a fraction
/// of ε.
pub const DETERMINISTIC_LOWER_FRACTION: f64 = 0.5;

/// The `n_iters` perturbation instances behind an envelope.
///
/// Random kinds use child seeds `derive(p.seed, "envelope", i)`, so the
/// first `n` instances never depend on `n_iters`. Deterministic kinds use
/// strengths linearly spaced over `[lower_fraction·ε, ε]`.
pub fn instances(p: &Perturbation, n_iters: usize, lower_fraction: f64) -> Vec<Perturbation> {
    (0..n_iters)
        .map(|i| {
            if p.kind.is_random() {
                Perturbation {
                    seed: seed::derive(p.seed, "envelope", i as u64),
                    ..*p
                }
            } else {
                let t = if n_iters == 1 {
                    1.0
                } else {
                    // reduced fraction, so nested grids share exact values
                    let g = gcd(i, n_iters - 1);
                    (i / g) as f64 / ((n_iters - 1) / g) as f64
                };
                let lo = lower_fraction * p.epsilon;
                Perturbation {
                    epsilon: lo + t * (p.epsilon - lo),
                    ..*p
                }
            }
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Histograms `(C, D)` of every perturbed instance, in instance order.
pub fn perturbed_histograms(
    series: &TimeSeries,
    p: &Perturbation,
    n_iters: usize,
    cfg: &PipelineConfig,
    lower_fraction: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be >= 1".into()));
    }
    instances(p, n_iters, lower_fraction)
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let wrap = |e: Error| Error::Instance {
                instance: i,
                source: Box::new(e),
            };
            let s = apply_with_min(series, q, cfg.min_series_len()).map_err(wrap)?;
            let sum = run_pipeline(&s, cfg).map_err(wrap)?;
            Ok((sum.hist_c.bins, sum.hist_d.bins))
        })
        .collect()
}

pub fn build_envelope(
    series: &TimeSeries,
    p: &Perturbation,
    n_iters: usize,
    cfg: &PipelineConfig,
) -> Result<EnvelopePair> {
    build_envelope_with(series, p, n_iters, cfg, DETERMINISTIC_LOWER_FRACTION)
}

pub fn build_envelope_with(
    series: &TimeSeries,
    p: &Perturbation,
    n_iters: usize,
    cfg: &PipelineConfig,
    lower_fraction: f64,
) -> Result<EnvelopePair> {
    let hs = perturbed_histograms(series, p, n_iters, cfg, lower_fraction)?;
    Ok(EnvelopePair {
        c: Envelope::from_members(hs.iter().map(|(c, _)| c.as_slice())).expect("n_iters >= 1"),
        d: Envelope::from_members(hs.iter().map(|(_, d)| d.as_slice())).expect("n_iters >= 1"),
    })
}
