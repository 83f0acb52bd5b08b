//! Independent oracles shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wheelcheck::mlp::{default_class_names, loss_and_grad, MlpModel, Sample, NUM_CLASSES};
use wheelcheck::verifier::{solve, Constraint, InputRegion, Lp, LpOutcome, Relation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_model(rng: &mut ChaCha8Rng, m: usize, h: usize) -> MlpModel {
    let mut u = |s: f64| rng.random_range(-s..s);
    let w1 = (0..h).map(|_| (0..m).map(|_| u(1.0)).collect()).collect();
    let b1 = (0..h).map(|_| u(0.5)).collect();
    let w2 = (0..NUM_CLASSES).map(|_| (0..h).map(|_| u(1.0)).collect()).collect();
    let b2 = (0..NUM_CLASSES).map(|_| u(0.5)).collect();
    MlpModel::from_parts(w1, b1, w2, b2, default_class_names("C")).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, m: usize) -> InputRegion {
    let lower: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0.02..1.5)).collect();
    InputRegion::new(lower, upper).unwrap()
}

/// A box plus, with probability one half, one random half-space through a
/// random point of the box (so the region stays non-empty).
pub fn random_region(rng: &mut ChaCha8Rng, m: usize) -> InputRegion {
    let b = random_box(rng, m);
    if rng.random::<bool>() {
        return b;
    }
    let a: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p: Vec<f64> = b.lower.iter().zip(&b.upper).map(|(l, u)| rng.random_range(*l..=*u)).collect();
    let rhs: f64 = a.iter().zip(&p).map(|(x, y)| x * y).sum();
    InputRegion::with_constraints(b.lower, b.upper, vec![Constraint::new(a, Relation::Le, rhs)]).unwrap()
}

/// Logit `c` as an affine map of the input under a full activation pattern.
fn pattern_logit(model: &MlpModel, pattern: u32, c: usize) -> (Vec<f64>, f64) {
    let m = model.input_dim();
    let mut a = vec![0.0; m];
    let mut k = model.b2()[c];
    for j in 0..model.hidden_dim() {
        if pattern >> j & 1 == 1 {
            let w = model.w2_row(c)[j];
            for i in 0..m {
                a[i] += w * model.w1_row(j)[i];
            }
            k += w * model.b1()[j];
        }
    }
    (a, k)
}

/// Exhaustive oracle: one LP per activation pattern (all `2^hidden`), each
/// maximising the worst logit margin of `target`. A candidate counts only
/// once forward evaluation confirms it.
pub fn pattern_oracle(model: &MlpModel, region: &InputRegion, target: usize) -> Option<Vec<f64>> {
    let (m, h) = (model.input_dim(), model.hidden_dim());
    for pattern in 0..(1u32 << h) {
        let ext = |a: &[f64], s: f64| {
            let mut v = a.to_vec();
            v.push(s);
            v
        };
        let mut cons: Vec<Constraint> = region
            .linear_constraints
            .iter()
            .map(|c| Constraint::new(ext(&c.coeffs, 0.0), c.rel, c.rhs))
            .collect();
        for j in 0..h {
            let rel = if pattern >> j & 1 == 1 { Relation::Ge } else { Relation::Le };
            cons.push(Constraint::new(ext(model.w1_row(j), 0.0), rel, -model.b1()[j]));
        }
        let (at, kt) = pattern_logit(model, pattern, target);
        for c in (0..NUM_CLASSES).filter(|&c| c != target) {
            let (ac, kc) = pattern_logit(model, pattern, c);
            let diff: Vec<f64> = at.iter().zip(&ac).map(|(x, y)| x - y).collect();
            cons.push(Constraint::new(ext(&diff, -1.0), Relation::Ge, kc - kt));
        }
        let mut lower = region.lower.clone();
        let mut upper = region.upper.clone();
        lower.push(0.0);
        upper.push(1.0);
        let mut objective = vec![0.0; m + 1];
        objective[m] = 1.0;
        let lp = Lp {
            lower,
            upper,
            constraints: cons,
            objective: Some(objective),
        };
        if let LpOutcome::Feasible(x) = solve(&lp).unwrap() {
            let x = x[..m].to_vec();
            if region.contains(&x, 1e-9) && model.classify(&x).unwrap() == target {
                return Some(x);
            }
        }
    }
    None
}

/// Classes hit on an `n^M` grid (endpoints included) that satisfies the
/// region's linear constraints.
pub fn grid_classes(model: &MlpModel, region: &InputRegion, n: usize) -> [bool; NUM_CLASSES] {
    let m = region.dim();
    let mut hit = [false; NUM_CLASSES];
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    loop {
        for i in 0..m {
            let t = idx[i] as f64 / (n - 1) as f64;
            x[i] = region.lower[i] + t * (region.upper[i] - region.lower[i]);
        }
        if region.linear_constraints.iter().all(|c| c.holds(&x, 0.0)) {
            hit[model.classify(&x).unwrap()] = true;
        }
        let mut d = 0;
        loop {
            if d == m {
                return hit;
            }
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Worst violation of the finite-difference gradient check, as the ratio
/// `|analytic − numeric| / max(1e-6, 1e-4·|numeric|)` (pass iff ≤ 1).
pub fn gradient_check(model: &MlpModel, batch: &[Sample], wd: f64) -> f64 {
    let step = 1e-5;
    let (_, g) = loss_and_grad(model, batch, wd).unwrap();
    let loss_at = |m: &MlpModel| loss_and_grad(m, batch, wd).unwrap().0;
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * step);
        let tol = f64::max(1e-6, 1e-4 * numeric.abs());
        worst = worst.max((analytic - numeric).abs() / tol);
    };
    macro_rules! sweep {
        ($mut:ident, $grad:expr) => {
            for i in 0..$grad.len() {
                let mut p = model.clone();
                p.$mut()[i] += step;
                let mut q = model.clone();
                q.$mut()[i] -= step;
                check($grad[i], loss_at(&p), loss_at(&q));
            }
        };
    }
    sweep!(w1_mut, g.w1);
    sweep!(b1_mut, g.b1);
    sweep!(w2_mut, g.w2);
    sweep!(b2_mut, g.b2);
    worst
}

/// A random model and batch whose hidden pre-activations stay clear of the
/// ReLU kink by more than the finite-difference step can move them.
pub fn gradient_case(seed: u64) -> (MlpModel, Vec<Sample>) {
    let mut r = rng(seed);
    let m = r.random_range(2..8);
    let h = r.random_range(2..12);
    loop {
        let model = random_model(&mut r, m, h);
        let n = r.random_range(1..9);
        let batch: Vec<Sample> = (0..n)
            .map(|_| Sample {
                input: (0..m).map(|_| r.random_range(0.0..1.0)).collect(),
                label: r.random_range(0..NUM_CLASSES),
            })
            .collect();
        let clear = batch.iter().all(|s| {
            let reach = 1e-5 * (1.0 + s.input.iter().map(|v| v.abs()).sum::<f64>());
            model.pre_activations(&s.input).unwrap().iter().all(|z| z.abs() > 10.0 * reach)
        });
        if clear {
            return (model, batch);
        }
    }
}

/// Piecewise-constant dry friction with known jumps on the default spin
/// profile, plus Gaussian noise of `sigma`.
pub struct JumpSeries {
    pub series: wheelcheck::telemetry::TimeSeries,
    pub jumps: Vec<usize>,
}

pub fn jump_series(seed: u64, n: usize, jumps: &[(usize, f64)], sigma: f64) -> JumpSeries {
    use rand_distr::{Distribution, Normal};
    use wheelcheck::telemetry::{sign, GenConfig, TimeSeries};
    let profile = GenConfig::default().spin_profile;
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut r = rng(seed);
    let (mut omega, mut friction) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let w = profile.at(k);
        let dry = 1.0 + jumps.iter().filter(|(at, _)| k >= *at).map(|(_, d)| d).sum::<f64>();
        let e = if sigma > 0.0 { noise.sample(&mut r) } else { 0.0 };
        omega.push(w);
        friction.push(dry * sign(w) + 0.001 * w + e);
    }
    JumpSeries {
        series: TimeSeries::new(omega, friction).unwrap(),
        jumps: jumps.iter().map(|(at, _)| *at).collect(),
    }
}

/// Smallest jump magnitude on a geometric grid that the default detector
/// finds in at least 90% of 40 single-jump series at the default noise level.
pub fn detection_floor() -> f64 {
    use wheelcheck::pipeline::{detect_changepoints, PipelineConfig};
    use wheelcheck::telemetry::GenConfig;
    let cfg = PipelineConfig::default();
    let sigma = GenConfig::default().noise_sigma;
    let mut delta = 1e-3;
    loop {
        let found = (0..40)
            .filter(|&s| {
                let mut r = rng(1000 + s);
                let at = r.random_range(200..1000);
                let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
                let js = jump_series(2000 + s, 1200, &[(at, sign * delta)], sigma);
                let iv = detect_changepoints(&js.series, &cfg).unwrap();
                iv.len() == 2 && iv[0].end.abs_diff(at) <= cfg.window_size
            })
            .count();
        if found >= 36 {
            return delta;
        }
        delta *= 1.25;
    }
}

/// Random jump layout: `1..=max_jumps` jumps at least `spacing` apart and away
/// from the ends, magnitudes in `[lo, 2·lo]` with random sign.
pub fn random_jumps(r: &mut ChaCha8Rng, n: usize, max_jumps: usize, spacing: usize, lo: f64) -> Vec<(usize, f64)> {
    let j = r.random_range(1..=max_jumps);
    let slots = (n - 2 * spacing) / spacing;
    let mut picks: Vec<usize> = (0..slots).collect();
    rand::seq::SliceRandom::shuffle(picks.as_mut_slice(), r);
    let mut at: Vec<usize> = picks[..j.min(slots)]
        .iter()
        .map(|s| spacing + s * spacing + r.random_range(0..spacing / 4))
        .collect();
    at.sort_unstable();
    at.into_iter()
        .map(|a| {
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            (a, sign * r.random_range(lo..=2.0 * lo))
        })
        .collect()
}

/// A reduced experiment that still exercises every stage.
pub fn small_config(seed: u64) -> wheelcheck::experiment::ExperimentConfig {
    use wheelcheck::dataset::{uniform_counts, CorpusSpec};
    use wheelcheck::experiment::ExperimentConfig;
    use wheelcheck::mlp::TrainConfig;
    use wheelcheck::perturb::PerturbationKind;
    use wheelcheck::robustness::{LadderConfig, SamplingProtocol};
    ExperimentConfig {
        seed,
        corpus: CorpusSpec {
            counts: uniform_counts(30),
            ..CorpusSpec::default()
        },
        train: TrainConfig {
            epochs: 150,
            ..TrainConfig::default()
        },
        protocol: SamplingProtocol {
            per_class: 4,
            no_c_per_class: 1,
            no_d_per_class: 2,
        },
        ladder: LadderConfig {
            max_rungs: 3,
            ..LadderConfig::default()
        },
        calibration_stride: 10,
        kinds: vec![
            PerturbationKind::Gaussian,
            PerturbationKind::AmplitudeScaling,
            PerturbationKind::MissingData,
        ],
        n_iters: 4,
        ..ExperimentConfig::default()
    }
}
