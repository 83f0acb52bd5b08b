//! Acceptance suite: one PASS / FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    detection_floor, grid_classes, gradient_case, gradient_check, jump_series, pattern_oracle, random_jumps,
    random_model, random_region, rng,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wheelcheck::experiment::{labelled_histograms, prepare, run_experiment, Experiment, ExperimentConfig};
use wheelcheck::mlp::{MlpModel, NUM_CLASSES};
use wheelcheck::perturb::{apply, snr, Perturbation, PerturbationKind};
use wheelcheck::pipeline::{detect_changepoints, fit_window, run_pipeline, PipelineConfig};
use wheelcheck::report::write_experiment;
use wheelcheck::robustness::{Certification, GlobalConstraintSet};
use wheelcheck::telemetry::{generate_series, AnomalyProfile, GenConfig, Severity, Status};
use wheelcheck::verifier::{verify_query, Outcome};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn ac1() -> Verdict {
    let started = Instant::now();
    let mut r = rng(1001);
    let (mut sat, mut unsat, mut mismatches, mut bad_witness) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let m = r.random_range(1..=6);
        let model = random_model(&mut r, m, 10);
        let region = random_region(&mut r, m);
        let target = r.random_range(0..NUM_CLASSES);
        let got = verify_query(&model, &region, target).unwrap().outcome;
        if let Outcome::Sat { witness, .. } = &got {
            if !region.contains(witness, 1e-9) || model.classify(witness).unwrap() != target {
                bad_witness += 1;
            }
        }
        let want = pattern_oracle(&model, &region, target).is_some();
        if got.is_sat() != want {
            mismatches += 1;
        }
        if want {
            sat += 1;
        } else {
            unsat += 1;
        }
    }
    let t = started.elapsed();
    verdict(
        mismatches == 0 && bad_witness == 0 && t < Duration::from_secs(600),
        format!(
            "1000 instances ({sat} sat, {unsat} unsat), {mismatches} oracle mismatches, \
             {bad_witness} invalid witnesses, {:.1} s",
            t.as_secs_f64()
        ),
    )
}

fn ac2() -> Verdict {
    let mut r = rng(1002);
    let (mut hits, mut missed) = (0, 0);
    for _ in 0..100 {
        let m = r.random_range(1..=4);
        let model = random_model(&mut r, m, 10);
        let region = random_region(&mut r, m);
        for (c, hit) in grid_classes(&model, &region, 40).into_iter().enumerate() {
            if hit {
                hits += 1;
                if !verify_query(&model, &region, c).unwrap().outcome.is_sat() {
                    missed += 1;
                }
            }
        }
    }
    verdict(missed == 0, format!("{hits} grid-reached classes, {missed} reported Unsat"))
}

fn ac3() -> Verdict {
    let sev = Severity::default();
    let mut worst = 0.0f64;
    for (i, status) in Status::all().into_iter().enumerate() {
        for s in 0..8 {
            let cfg = GenConfig {
                noise_sigma: 0.0,
                seed: 10 * i as u64 + s,
                ..GenConfig::default()
            };
            let g = generate_series(&AnomalyProfile::for_status(status, &sev), &cfg).unwrap();
            let mut bounds = vec![0];
            bounds.extend(g.truth.events.iter().map(|e| e.index));
            bounds.push(g.series.len());
            bounds.dedup();
            for w in bounds.windows(2) {
                let fit = fit_window(&g.series, w[0], w[1] - w[0], 5.0).unwrap();
                let d = g.truth.dry[w[0]];
                worst = worst.max((fit.dry - d).abs() / d).max((fit.visc - g.truth.visc).abs() / g.truth.visc);
            }
        }
    }
    let floor = detection_floor();
    let cfg = PipelineConfig::default();
    let mut r = rng(1003);
    let (mut count_ok, mut bound_ok) = (0, 0);
    for s in 0..100 {
        let jumps = random_jumps(&mut r, 1200, 6, 120, 10.0 * floor);
        let js = jump_series(5000 + s, 1200, &jumps, GenConfig::default().noise_sigma);
        let iv = detect_changepoints(&js.series, &cfg).unwrap();
        if iv.len() == js.jumps.len() + 1 {
            count_ok += 1;
            if iv.iter().skip(1).zip(&js.jumps).all(|(b, t)| b.start.abs_diff(*t) <= cfg.window_size) {
                bound_ok += 1;
            }
        }
    }
    verdict(
        worst < 1e-9 && count_ok == 100 && bound_ok == 100,
        format!(
            "worst relative coefficient error {worst:.2e}; detection floor {floor:.4} mNm; \
             {count_ok}/100 counts and {bound_ok}/100 boundary sets correct"
        ),
    )
}

fn ac4() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let (model, batch) = gradient_case(10_000 + seed);
        worst = worst.max(gradient_check(&model, &batch, 1e-4));
    }
    verdict(worst <= 1.0, format!("50 model/batch pairs, worst error / tolerance = {worst:.2e}"))
}

/// Rates along each (net, class, kind) curve, in rung order.
fn curves(e: &Experiment) -> BTreeMap<(String, usize, String), Vec<(f64, f64)>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for c in &e.robustness.cells {
        if let (Some(r), Some(b)) = (c.rate(), c.binary_rate()) {
            out.entry((c.net.name().to_string(), c.class, c.kind.to_string())).or_default().push((r, b));
        }
    }
    out
}

fn ac5(e: &Experiment, took: Duration) -> Verdict {
    let curves = curves(e);
    let mut problems = Vec::new();
    for ((net, class, kind), pts) in &curves {
        if pts[0].0 < 0.95 {
            problems.push(format!("{net}{class} {kind}: first rung {:.3}", pts[0].0));
        }
        for w in pts.windows(2) {
            if w[1].0 - w[0].0 > 0.10 + 1e-12 {
                problems.push(format!("{net}{class} {kind}: rises {:.3} -> {:.3}", w[0].0, w[1].0));
            }
        }
        if pts.iter().any(|(r, b)| b < r) {
            problems.push(format!("{net}{class} {kind}: binary rate below class rate"));
        }
    }
    let cells = e.robustness.cells.len();
    verdict(
        problems.is_empty() && took < Duration::from_secs(1800) && e.robustness.failures.is_empty(),
        format!(
            "{:.0} s, {} entries, {cells} cells over {} curves, {} failed evaluations{}",
            took.as_secs_f64(),
            e.entries.len(),
            curves.len(),
            e.robustness.failures.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn ac6() -> Verdict {
    let want = 20.0 * 2f64.log10();
    let mut worst = 0.0f64;
    for s in 0..20 {
        let cfg = GenConfig {
            seed: 600 + s,
            ..GenConfig::default()
        };
        let x = generate_series(&AnomalyProfile::nominal(), &cfg).unwrap().series;
        let p = |e| apply(&x, &Perturbation::new(PerturbationKind::Gaussian, e, 700 + s).unwrap()).unwrap();
        let drop = snr(&x, &p(0.005)).unwrap().friction - snr(&x, &p(0.01)).unwrap().friction;
        worst = worst.max((drop - want).abs());
    }
    let x = generate_series(&AnomalyProfile::nominal(), &GenConfig::default()).unwrap().series;
    let clean = snr(&x, &x).unwrap().friction;
    verdict(
        worst <= 0.1 && clean == f64::INFINITY,
        format!("20 series, worst |ΔSNR − 6.02| = {worst:.2e} dB, unperturbed SNR = {clean}"),
    )
}

/// Draw from a mixture of uniform points in the bounding box, convex
/// combinations of member histograms and jittered combinations.
fn propose(r: &mut ChaCha8Rng, set: &GlobalConstraintSet, members: &[&Vec<f64>]) -> Vec<f64> {
    let m = set.envelope_upper.len();
    let mode = r.random_range(0..3);
    if mode == 0 || members.is_empty() {
        return set.envelope_upper.iter().map(|u| if *u > 0.0 { r.random_range(0.0..=*u) } else { 0.0 }).collect();
    }
    let k = r.random_range(1..=4.min(members.len()));
    let w: Vec<f64> = (0..k).map(|_| -r.random::<f64>().max(1e-300).ln()).collect();
    let t: f64 = w.iter().sum();
    let mut h = vec![0.0; m];
    for wi in &w {
        let src = members[r.random_range(0..members.len())];
        for (a, b) in h.iter_mut().zip(src) {
            *a += wi / t * b;
        }
    }
    if mode == 2 {
        for (v, u) in h.iter_mut().zip(&set.envelope_upper) {
            *v = (*v + 0.05 * u * r.random_range(-1.0..1.0)).clamp(0.0, *u);
        }
    }
    h
}

fn ac7(e: &Experiment, cfg: &ExperimentConfig) -> Verdict {
    let bundle = e.bundle.as_ref().expect("bundle kept");
    let (corpus, _) = prepare(cfg).unwrap();
    let rebinned: Vec<_> = corpus
        .iter()
        .map(|(en, g)| (en.status, run_pipeline(&g.series, &bundle.pipeline).unwrap()))
        .collect();
    let mut certified = 0;
    let mut lines = Vec::new();
    let mut pass = true;
    let mut r = rng(1007);
    for g in &e.global {
        let model: &MlpModel = bundle.model(g.net);
        let data = labelled_histograms(g.net, &rebinned);
        let class = g.set.class;
        let tag = format!("{}{class}", g.net.name());

        // exclusion recount
        let excluded: Vec<usize> = (0..data.len())
            .filter(|&i| data[i].1 == class && !g.set.contains(&data[i].0, 0.0))
            .collect();
        let others = data.iter().filter(|(h, c)| *c != class && g.set.contains(h, 0.0)).count();
        if excluded != g.exclusion.excluded || others != g.exclusion.others_inside {
            pass = false;
            lines.push(format!("{tag}: exclusion recount differs"));
        }

        match &g.verdict.result {
            Certification::Certified => {
                certified += 1;
                let members: Vec<&Vec<f64>> = data
                    .iter()
                    .filter(|(h, c)| *c == class && g.set.contains(h, 0.0))
                    .map(|(h, _)| h)
                    .collect();
                let (mut accepted, mut tries, mut wrong) = (0usize, 0usize, 0usize);
                while accepted < 100_000 && tries < 50_000_000 {
                    tries += 1;
                    let h = propose(&mut r, &g.set, &members);
                    if g.set.contains(&h, 1e-12) {
                        accepted += 1;
                        if model.classify(&h).unwrap() != class {
                            wrong += 1;
                        }
                    }
                }
                if accepted < 100_000 || wrong > 0 {
                    pass = false;
                }
                lines.push(format!("{tag} certified, {accepted} samples ({tries} proposals), {wrong} misclassified"));
            }
            Certification::Counterexample { witness, class: c } => {
                let fwd = model.classify(witness).unwrap();
                let ok = fwd == *c && *c != class && g.set.contains(witness, 1e-9);
                if !ok {
                    pass = false;
                }
                lines.push(format!(
                    "{tag} counterexample -> class {c} ({})",
                    if ok { "validated" } else { "INVALID" }
                ));
            }
        }
    }
    verdict(pass && certified >= 1, format!("{certified} certified; {}", lines.join("; ")))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn ac8(first: &Experiment, cfg: &ExperimentConfig) -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_experiment(a.path(), first).unwrap();
    write_experiment(b.path(), &run_experiment(cfg).unwrap()).unwrap();
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<&String> = sa.keys().filter(|k| sb.get(*k) != sa.get(*k)).collect();
    let same_names = sa.keys().eq(sb.keys());
    verdict(
        same_names && differing.is_empty(),
        format!("{} report files, {} differ", sa.len(), differing.len()),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; only a name filter
    // restricts the run
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| f == &format!("ac{n}"));

    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut run = |n: usize, f: &mut dyn FnMut() -> Verdict| {
        if wanted(n) {
            let v = f();
            println!("AC{n} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            results.push((n, v));
        }
    };
    run(1, &mut ac1);
    run(2, &mut ac2);
    run(3, &mut ac3);
    run(4, &mut ac4);
    if wanted(5) || wanted(7) || wanted(8) {
        let cfg = ExperimentConfig::default();
        let started = Instant::now();
        let e = run_experiment(&cfg).unwrap();
        let took = started.elapsed();
        run(5, &mut || ac5(&e, took));
        run(6, &mut ac6);
        run(7, &mut || ac7(&e, &cfg));
        run(8, &mut || ac8(&e, &cfg));
    } else {
        run(6, &mut ac6);
    }
    if results.iter().any(|(_, v)| !v.pass) {
        std::process::exit(1);
    }
}
