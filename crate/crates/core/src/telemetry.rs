//! Synthetic reaction-wheel telemetry.
//!
//! Friction torque follows the dry + viscous model
//! `f_k = d_k·sign(ω_k) + v·ω_k + noise_k` with a piece-wise constant dry
//! level `d_k`. Anomalies act on that model:
//!
//! * A raises the dry level for the whole series,
//! * B raises the viscous coefficient,
//! * C injects matched pairs (a rise of `+δ`, then `−δ` after a dwell),
//! * D injects unmatched jumps.
//!
//! Urgency scales the effect. Every generated series carries a ground-truth
//! sidecar (latent dry trajectory and jump log) that the classifier never sees.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Paired spin-rate [rad/s] and friction-torque [mNm] samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    omega: Vec<f64>,
    friction: Vec<f64>,
}

impl TimeSeries {
    pub fn new(omega: Vec<f64>, friction: Vec<f64>) -> Result<Self> {
        if omega.len() != friction.len() {
            return Err(Error::LengthMismatch {
                left: omega.len(),
                right: friction.len(),
            });
        }
        if omega.is_empty() {
            return Err(Error::SeriesTooShort { len: 0, min: 1 });
        }
        if let Some(k) = omega
            .iter()
            .zip(&friction)
            .position(|(w, f)| !w.is_finite() || !f.is_finite())
        {
            return Err(Error::InvalidConfig(format!("non-finite sample at k={k}")));
        }
        Ok(Self { omega, friction })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn friction(&self) -> &[f64] {
        &self.friction
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.omega, self.friction)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "k,omega_rad_s,friction_mNm")?;
        for (k, (o, f)) in self.omega.iter().zip(&self.friction).enumerate() {
            writeln!(w, "{k},{o},{f}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut omega = Vec::new();
        let mut friction = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if i == 0 {
                if line != "k,omega_rad_s,friction_mNm" {
                    return Err(parse_err(&name, 1, "unexpected header"));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (_, o, f) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
                (Some(k), Some(o), Some(f), None) => (k, o, f),
                _ => return Err(parse_err(&name, i + 1, "expected 3 columns")),
            };
            omega.push(
                o.parse::<f64>()
                    .map_err(|e| parse_err(&name, i + 1, &e.to_string()))?,
            );
            friction.push(
                f.parse::<f64>()
                    .map_err(|e| parse_err(&name, i + 1, &e.to_string()))?,
            );
        }
        TimeSeries::new(omega, friction)
    }
}

fn parse_err(path: &str, line: usize, msg: &str) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    }
}

/// Mathematical sign with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnomalyKind {
    Nominal,
    A,
    B,
    C,
    D,
}

/// Wheel status: nominal, or anomaly A–D at urgency 1–3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Status {
    kind: AnomalyKind,
    urgency: u8,
}

impl Status {
    pub const NOMINAL: Status = Status {
        kind: AnomalyKind::Nominal,
        urgency: 0,
    };

    pub fn new(kind: AnomalyKind, urgency: u8) -> Result<Self> {
        let ok = match kind {
            AnomalyKind::Nominal => urgency == 0,
            _ => (1..=3).contains(&urgency),
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "urgency {urgency} invalid for {kind:?}"
            )));
        }
        Ok(Self { kind, urgency })
    }

    pub fn kind(self) -> AnomalyKind {
        self.kind
    }

    pub fn urgency(self) -> u8 {
        self.urgency
    }

    pub fn is_anomaly(self) -> bool {
        self.kind != AnomalyKind::Nominal
    }

    /// Position in the 13-class order N, A1..A3, B1..B3, C1..C3, D1..D3.
    pub fn index(self) -> usize {
        match self.kind {
            AnomalyKind::Nominal => 0,
            AnomalyKind::A => self.urgency as usize,
            AnomalyKind::B => 3 + self.urgency as usize,
            AnomalyKind::C => 6 + self.urgency as usize,
            AnomalyKind::D => 9 + self.urgency as usize,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::all().get(i).copied()
    }

    pub fn all() -> [Status; 13] {
        let mut out = [Status::NOMINAL; 13];
        let kinds = [AnomalyKind::A, AnomalyKind::B, AnomalyKind::C, AnomalyKind::D];
        for (ki, kind) in kinds.into_iter().enumerate() {
            for u in 1..=3u8 {
                out[1 + ki * 3 + (u as usize - 1)] = Status { kind, urgency: u };
            }
        }
        out
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AnomalyKind::Nominal => write!(f, "N"),
            k => write!(f, "{k:?}{}", self.urgency),
        }
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("n") || s.eq_ignore_ascii_case("nominal") {
            return Ok(Status::NOMINAL);
        }
        let bad = || Error::InvalidConfig(format!("unknown status label {s:?}"));
        let mut chars = s.chars();
        let kind = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('A') => AnomalyKind::A,
            Some('B') => AnomalyKind::B,
            Some('C') => AnomalyKind::C,
            Some('D') => AnomalyKind::D,
            _ => return Err(bad()),
        };
        let urgency: u8 = chars.as_str().parse().map_err(|_| bad())?;
        Status::new(kind, urgency)
    }
}

impl TryFrom<String> for Status {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Status> for String {
    fn from(s: Status) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpinProfile {
    Constant { omega: f64 },
    Ramp { omega0: f64, slope: f64 },
    Sinusoid { omega0: f64, amplitude: f64, period: f64 },
}

impl SpinProfile {
    pub fn at(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            SpinProfile::Constant { omega } => omega,
            SpinProfile::Ramp { omega0, slope } => omega0 + slope * k,
            SpinProfile::Sinusoid {
                omega0,
                amplitude,
                period,
            } => omega0 + amplitude * (std::f64::consts::TAU * k / period).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_samples: usize,
    /// Nominal dry friction level [mNm].
    pub dry_base: f64,
    /// Nominal viscous coefficient [mNm·s/rad].
    pub visc_base: f64,
    /// Standard deviation of the additive Gaussian noise [mNm].
    pub noise_sigma: f64,
    pub spin_profile: SpinProfile,
    /// Expected spontaneous dry-level jumps per series.
    pub nominal_jump_rate: f64,
    pub nominal_jump_magnitude: f64,
    /// Minimum spacing between injected jumps and from the series ends [samples].
    pub min_event_gap: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_samples: 1200,
            dry_base: 1.0,
            visc_base: 0.001,
            noise_sigma: 0.005,
            spin_profile: SpinProfile::Sinusoid {
                omega0: 50.0,
                amplitude: 250.0,
                period: 200.0,
            },
            nominal_jump_rate: 0.0,
            nominal_jump_magnitude: 0.05,
            min_event_gap: 60,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if !(self.dry_base > 0.0) {
            return Err(Error::InvalidConfig("dry_base must be > 0".into()));
        }
        if !(self.nominal_jump_rate >= 0.0) || !(self.nominal_jump_magnitude >= 0.0) {
            return Err(Error::InvalidConfig(
                "nominal jump parameters must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Severity scale turning an urgency level into anomaly parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Severity {
    /// A: dry factor = 1 + urgency·dry_step.
    pub dry_step: f64,
    /// B: viscous factor = 1 + urgency·visc_step.
    pub visc_step: f64,
    /// C: pair magnitude = urgency·pair_step [mNm].
    pub pair_step: f64,
    pub pair_rate: f64,
    pub pair_dwell: usize,
    /// Relative per-event jitter on the pair magnitude.
    pub pair_jitter: f64,
    /// D: mean jump magnitude = urgency·jump_step [mNm].
    pub jump_step: f64,
    /// D: relative half-width of the jump magnitude distribution.
    pub jump_spread: f64,
    pub jump_rate: f64,
}

impl Default for Severity {
    fn default() -> Self {
        Self {
            dry_step: 0.2,
            visc_step: 0.5,
            pair_step: 0.2,
            pair_rate: 5.0,
            pair_dwell: 80,
            pair_jitter: 0.03,
            jump_step: 0.15,
            jump_spread: 0.3,
            jump_rate: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyProfile {
    pub status: Status,
    pub dry_increase_factor: f64,
    pub visc_increase_factor: f64,
    pub pair_jump_magnitude: f64,
    pub pair_rate: f64,
    pub pair_dwell: usize,
    pub pair_jitter: f64,
    /// (mean, spread) of D jump magnitudes [mNm].
    pub random_jump_magnitude: (f64, f64),
    pub jump_rate: f64,
}

impl AnomalyProfile {
    pub fn nominal() -> Self {
        Self {
            status: Status::NOMINAL,
            dry_increase_factor: 1.0,
            visc_increase_factor: 1.0,
            pair_jump_magnitude: 0.0,
            pair_rate: 0.0,
            pair_dwell: 0,
            pair_jitter: 0.0,
            random_jump_magnitude: (0.0, 0.0),
            jump_rate: 0.0,
        }
    }

    pub fn for_status(status: Status, sev: &Severity) -> Self {
        let u = f64::from(status.urgency());
        let mut p = Self::nominal();
        p.status = status;
        match status.kind() {
            AnomalyKind::Nominal => {}
            AnomalyKind::A => p.dry_increase_factor = 1.0 + u * sev.dry_step,
            AnomalyKind::B => p.visc_increase_factor = 1.0 + u * sev.visc_step,
            AnomalyKind::C => {
                p.pair_jump_magnitude = u * sev.pair_step;
                p.pair_rate = sev.pair_rate;
                p.pair_dwell = sev.pair_dwell;
                p.pair_jitter = sev.pair_jitter;
            }
            AnomalyKind::D => {
                let mean = u * sev.jump_step;
                p.random_jump_magnitude = (mean, sev.jump_spread * mean);
                p.jump_rate = sev.jump_rate;
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("{}: {m}", self.status)));
        if !(self.dry_increase_factor >= 1.0) || !(self.visc_increase_factor >= 1.0) {
            return bad("increase factors must be >= 1");
        }
        if !(self.pair_rate >= 0.0) || !(self.jump_rate >= 0.0) {
            return bad("rates must be >= 0");
        }
        match self.status.kind() {
            AnomalyKind::C => {
                if !(self.pair_jump_magnitude > 0.0) {
                    return bad("pair_jump_magnitude must be > 0");
                }
                if !(0.0..1.0).contains(&self.pair_jitter) {
                    return bad("pair_jitter must be in [0, 1)");
                }
            }
            AnomalyKind::D => {
                let (mean, spread) = self.random_jump_magnitude;
                if !(mean > 0.0) || !(spread >= 0.0) || spread >= mean {
                    return bad("jump magnitude needs mean > spread >= 0");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSource {
    Nominal,
    PairUp,
    PairDown,
    Random,
}

/// One discontinuity of the latent dry level: `dry[k]` changes by `delta`
/// starting at sample `index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub index: usize,
    pub delta: f64,
    pub source: JumpSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub dry: Vec<f64>,
    pub visc: f64,
    pub events: Vec<JumpEvent>,
}

impl GroundTruth {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("k,dry_true_mNm\n");
        for (k, d) in self.dry.iter().enumerate() {
            s.push_str(&format!("{k},{d}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub series: TimeSeries,
    pub status: Status,
    pub truth: GroundTruth,
}

/// floor(rate) events plus one more with probability frac(rate).
fn event_count(rate: f64, rng: &mut ChaCha8Rng) -> usize {
    let whole = rate.floor();
    let frac = rate - whole;
    let extra = frac > 0.0 && rng.random::<f64>() < frac;
    whole as usize + usize::from(extra)
}

/// Sample uniformly from `[lo, hi]` minus the open interval `(ex_lo, ex_hi)`.
fn sample_excluding(rng: &mut ChaCha8Rng, lo: f64, hi: f64, ex_lo: f64, ex_hi: f64) -> f64 {
    let left = (ex_lo.min(hi) - lo).max(0.0);
    let right = (hi - ex_hi.max(lo)).max(0.0);
    let total = left + right;
    if total <= 0.0 {
        // whole range excluded: take the endpoint farthest from the excluded centre
        let centre = 0.5 * (ex_lo + ex_hi);
        return if (hi - centre).abs() >= (centre - lo).abs() {
            hi
        } else {
            lo
        };
    }
    let r = rng.random::<f64>() * total;
    if r < left {
        lo + r
    } else {
        ex_hi.max(lo) + (r - left)
    }
}

/// Consecutive up→down D jumps closer than this relative margin are redrawn.
const D_PAIR_EXCLUSION: f64 = 0.25;

/// Generate one labelled series plus its ground-truth sidecar.
pub fn generate_series(profile: &AnomalyProfile, config: &GenConfig) -> Result<Generated> {
    config.validate()?;
    profile.validate()?;
    let n = config.n_samples;
    let min_len = crate::pipeline::PipelineConfig::default().min_series_len();
    if n < min_len {
        return Err(Error::SeriesTooShort { len: n, min: min_len });
    }
    let omega: Vec<f64> = (0..n).map(|k| config.spin_profile.at(k)).collect();
    check_spin_design(&omega)?;

    let mut ev_rng = seed::rng(seed::derive(config.seed, "events", 0));
    let gap = config.min_event_gap.max(1);
    let usable_start = gap;
    let usable_end = n.saturating_sub(gap);
    let usable = usable_end.saturating_sub(usable_start);
    let mut events: Vec<JumpEvent> = Vec::new();

    match profile.status.kind() {
        AnomalyKind::C => {
            let dwell = profile.pair_dwell.max(gap);
            let want = event_count(profile.pair_rate, &mut ev_rng);
            let count = want.min(usable / (dwell + gap));
            if count > 0 {
                let slot = usable / count;
                for j in 0..count {
                    let start = usable_start + j * slot;
                    let slack = slot - dwell - gap;
                    let t = start + ev_rng.random_range(0..=slack);
                    let jitter = profile.pair_jitter * (2.0 * ev_rng.random::<f64>() - 1.0);
                    let delta = profile.pair_jump_magnitude * (1.0 + jitter);
                    events.push(JumpEvent {
                        index: t,
                        delta,
                        source: JumpSource::PairUp,
                    });
                    events.push(JumpEvent {
                        index: t + dwell,
                        delta: -delta,
                        source: JumpSource::PairDown,
                    });
                }
            }
        }
        AnomalyKind::D => {
            let (mean, spread) = profile.random_jump_magnitude;
            let (lo, hi) = (mean - spread, mean + spread);
            let want = event_count(profile.jump_rate, &mut ev_rng);
            let count = want.min(usable / gap);
            if count > 0 {
                let slot = usable / count;
                // offset from the baseline dry level
                let mut level = 0.0f64;
                let mut prev_up: Option<f64> = None;
                for j in 0..count {
                    let start = usable_start + j * slot;
                    let t = start + ev_rng.random_range(0..=(slot - gap));
                    let down = level > 0.0;
                    let mag = match (down, prev_up) {
                        (true, Some(up)) => sample_excluding(
                            &mut ev_rng,
                            lo,
                            hi,
                            up * (1.0 - D_PAIR_EXCLUSION),
                            up * (1.0 + D_PAIR_EXCLUSION),
                        ),
                        _ => lo + (hi - lo) * ev_rng.random::<f64>(),
                    };
                    let delta = if down { -mag } else { mag };
                    prev_up = if down { None } else { Some(mag) };
                    level += delta;
                    events.push(JumpEvent {
                        index: t,
                        delta,
                        source: JumpSource::Random,
                    });
                }
            }
        }
        _ => {}
    }

    let nominal_count = event_count(config.nominal_jump_rate, &mut ev_rng).min(usable / gap);
    if nominal_count > 0 && config.nominal_jump_magnitude > 0.0 {
        let slot = usable / nominal_count;
        for j in 0..nominal_count {
            let t = usable_start + j * slot + ev_rng.random_range(0..=(slot - gap));
            let mag = config.nominal_jump_magnitude * (0.5 + ev_rng.random::<f64>());
            let delta = if ev_rng.random::<bool>() { mag } else { -mag };
            let clear = events.iter().all(|e| e.index.abs_diff(t) >= gap);
            if clear {
                events.push(JumpEvent {
                    index: t,
                    delta,
                    source: JumpSource::Nominal,
                });
            }
        }
    }
    events.sort_by_key(|e| e.index);

    let base_dry = config.dry_base * profile.dry_increase_factor;
    let visc = config.visc_base * profile.visc_increase_factor;
    let mut dry = vec![base_dry; n];
    for e in &events {
        for d in &mut dry[e.index..] {
            *d += e.delta;
        }
    }
    if dry.iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidConfig(
            "injected jumps drive the dry friction level non-positive".into(),
        ));
    }

    let mut noise_rng = seed::rng(seed::derive(config.seed, "noise", 0));
    let friction: Vec<f64> = omega
        .iter()
        .zip(&dry)
        .map(|(&w, &d)| {
            let v: f64 = if config.noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                config.noise_sigma * z
            } else {
                0.0
            };
            d * sign(w) + visc * w + v
        })
        .collect();

    Ok(Generated {
        series: TimeSeries::new(omega, friction)?,
        status: profile.status,
        truth: GroundTruth { dry, visc, events },
    })
}

/// Rejects spin profiles for which no pipeline window has a usable design.
fn check_spin_design(omega: &[f64]) -> Result<()> {
    let cfg = crate::pipeline::PipelineConfig::default();
    let w = cfg.window_size;
    let usable = (0..=omega.len().saturating_sub(w))
        .step_by((w / 2).max(1))
        .any(|s| crate::pipeline::design_is_regular(&omega[s..s + w], cfg.omega_deadband));
    if usable {
        Ok(())
    } else {
        Err(Error::DegenerateDesign {
            start: 0,
            end: omega.len(),
        })
    }
}
