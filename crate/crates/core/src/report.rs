//! Report files: structured text, CSV tables and self-contained SVG charts.
//!
//! Every chart has a CSV twin holding the plotted numbers. Output is a pure
//! function of its inputs, so two runs from one seed give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::classifier::EvalReport;
use crate::experiment::{Experiment, GlobalResult};
use crate::io::write_atomic;
use crate::perturb::{Envelope, PerturbationKind};
use crate::pipeline::HistKind;
use crate::robustness::{Cell, Certification, RobustnessReport};
use crate::telemetry::Status;
use crate::Result;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Svg {
    w: f64,
    h: f64,
    body: String,
}

impl Svg {
    fn new(w: f64, h: f64) -> Self {
        Self {
            w,
            h,
            body: String::new(),
        }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{fill}" {extra}/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.w,
            h = self.h
        )
    }
}

/// Plot frame: maps data coordinates into a margin-padded box.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.xr.1 - self.xr.0).max(1e-12);
        self.x0 + (v - self.xr.0) / span * self.w
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.yr.1 - self.yr.0).max(1e-12);
        self.y0 + self.h - (v - self.yr.0) / span * self.h
    }

    fn axes(&self, svg: &mut Svg) {
        svg.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "black");
        svg.line(self.x0, self.y0, self.x0, self.y0 + self.h, "black");
    }

    fn y_ticks(&self, svg: &mut Svg, ticks: &[f64]) {
        for &t in ticks {
            let y = self.y(t);
            svg.line(self.x0 - 4.0, y, self.x0, y, "black");
            svg.line(self.x0, y, self.x0 + self.w, y, "#e0e0e0");
            svg.text(self.x0 - 6.0, y + 4.0, 11.0, "end", &format!("{t}"));
        }
    }
}

/// Confusion matrix heatmap, shaded by column share.
pub fn confusion_svg(r: &EvalReport) -> String {
    let names: Vec<String> = Status::all().iter().map(Status::to_string).collect();
    let n = names.len();
    let cell = 38.0;
    let (ox, oy) = (70.0, 70.0);
    let mut svg = Svg::new(ox + cell * n as f64 + 20.0, oy + cell * n as f64 + 20.0);
    svg.text(ox + cell * n as f64 / 2.0, 20.0, 14.0, "middle", "Confusion matrix (rows predicted, columns actual)");
    let col_tot: Vec<u64> = (0..n).map(|j| r.confusion.iter().map(|row| row[j]).sum()).collect();
    for (j, name) in names.iter().enumerate() {
        svg.text(ox + cell * (j as f64 + 0.5), oy - 8.0, 11.0, "middle", name);
        svg.text(ox - 8.0, oy + cell * (j as f64 + 0.5) + 4.0, 11.0, "end", name);
    }
    for (i, row) in r.confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let share = if col_tot[j] > 0 { v as f64 / col_tot[j] as f64 } else { 0.0 };
            let shade = (255.0 - 200.0 * share).round() as u8;
            let fill = format!("rgb({shade},{shade},255)");
            let (x, y) = (ox + cell * j as f64, oy + cell * i as f64);
            svg.rect(x, y, cell, cell, &fill, r##"stroke="#999""##);
            if v > 0 {
                svg.text(x + cell / 2.0, y + cell / 2.0 + 4.0, 10.0, "middle", &v.to_string());
            }
        }
    }
    svg.finish()
}

fn cells_of<'a>(r: &'a RobustnessReport, net: HistKind, kind: PerturbationKind) -> Vec<&'a Cell> {
    r.cells.iter().filter(|c| c.net == net && c.kind == kind).collect()
}

/// Rate-vs-ε series per class: `(class name, [(ε, rate)])`.
fn rate_series(cells: &[&Cell], binary: bool) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(usize, String, Vec<(f64, f64)>)> = Vec::new();
    for c in cells {
        let rate = if binary { c.binary_rate() } else { c.rate() };
        let Some(rate) = rate else { continue };
        match out.iter_mut().find(|(k, _, _)| *k == c.class) {
            Some((_, _, pts)) => pts.push((c.epsilon, rate)),
            None => out.push((c.class, c.class_name.clone(), vec![(c.epsilon, rate)])),
        }
    }
    out.sort_by_key(|(k, _, _)| *k);
    out.into_iter().map(|(_, n, p)| (n, p)).collect()
}

/// Line chart of robustness rate against ε (log axis) for one network and
/// perturbation kind.
pub fn rate_chart_svg(r: &RobustnessReport, net: HistKind, kind: PerturbationKind, binary: bool) -> String {
    let series = rate_series(&cells_of(r, net, kind), binary);
    let eps: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let lo = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo.log10(), hi.log10()) } else { (-3.0, 0.0) };
    let (lo, hi) = if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let f = Frame {
        x0: 60.0,
        y0: 40.0,
        w: 420.0,
        h: 260.0,
        xr: (lo, hi),
        yr: (0.0, 1.0),
    };
    let mut svg = Svg::new(620.0, 350.0);
    let what = if binary { "binary (anomaly / no anomaly)" } else { "class" };
    svg.text(270.0, 22.0, 14.0, "middle", &format!("{} network, {}: {} robustness rate", net.name(), kind, what));
    f.axes(&mut svg);
    f.y_ticks(&mut svg, &[0.0, 0.25, 0.5, 0.75, 1.0]);
    let mut d = lo.floor() as i32;
    while (d as f64) <= hi + 1e-9 {
        if (d as f64) >= lo - 1e-9 {
            let x = f.x(d as f64);
            svg.line(x, f.y0 + f.h, x, f.y0 + f.h + 4.0, "black");
            svg.text(x, f.y0 + f.h + 18.0, 11.0, "middle", &format!("1e{d}"));
        }
        d += 1;
    }
    svg.text(f.x0 + f.w / 2.0, f.y0 + f.h + 36.0, 12.0, "middle", "strength ε (log scale)");
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(e, v)| format!("{:.1},{:.1}", f.x(e.log10()), f.y(*v)))
            .collect();
        let _ = writeln!(
            svg.body,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (e, v) in pts {
            let _ = writeln!(
                svg.body,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#,
                f.x(e.log10()),
                f.y(*v)
            );
        }
        let ly = 50.0 + 18.0 * i as f64;
        svg.line(500.0, ly, 520.0, ly, colour);
        svg.text(526.0, ly + 4.0, 12.0, "start", name);
    }
    svg.finish()
}

/// CSV twin of [`rate_chart_svg`].
pub fn rate_chart_csv(r: &RobustnessReport, net: HistKind, kind: PerturbationKind, binary: bool) -> String {
    let mut s = String::from("class_name,epsilon,rate\n");
    for (name, pts) in rate_series(&cells_of(r, net, kind), binary) {
        for (e, v) in pts {
            let _ = writeln!(s, "{name},{e},{v:.6}");
        }
    }
    s
}

/// Per-bin envelope bars with optional histogram overlays (for example the
/// unperturbed histogram and a counterexample).
pub fn envelope_svg(title: &str, env: &Envelope, overlays: &[(&str, &[f64])]) -> String {
    let m = env.upper.len();
    let top = env
        .upper
        .iter()
        .chain(overlays.iter().flat_map(|(_, h)| h.iter()))
        .copied()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let f = Frame {
        x0: 60.0,
        y0: 40.0,
        w: 440.0,
        h: 240.0,
        xr: (0.0, m as f64),
        yr: (0.0, top * 1.05),
    };
    let mut svg = Svg::new(640.0, 330.0);
    svg.text(280.0, 22.0, 14.0, "middle", title);
    f.axes(&mut svg);
    f.y_ticks(&mut svg, &[0.0, (top / 2.0 * 100.0).round() / 100.0, (top * 100.0).round() / 100.0]);
    let bw = f.w / m as f64;
    for i in 0..m {
        let (l, u) = (env.lower[i], env.upper[i]);
        let x = f.x(i as f64) + 0.15 * bw;
        svg.rect(x, f.y(u), 0.7 * bw, f.y(l) - f.y(u), "#9ecae1", r##"stroke="#3182bd""##);
        if i % 5 == 0 {
            svg.text(f.x(i as f64 + 0.5), f.y0 + f.h + 16.0, 11.0, "middle", &format!("{}", i + 1));
        }
    }
    svg.text(f.x0 + f.w / 2.0, f.y0 + f.h + 32.0, 12.0, "middle", "bin");
    svg.rect(512.0, 44.0, 14.0, 10.0, "#9ecae1", r##"stroke="#3182bd""##);
    svg.text(532.0, 53.0, 12.0, "start", "envelope");
    for (k, (name, h)) in overlays.iter().enumerate() {
        let colour = PALETTE[(k + 1) % PALETTE.len()];
        for (i, v) in h.iter().enumerate() {
            let y = f.y(*v);
            svg.line(f.x(i as f64) + 0.1 * bw, y, f.x(i as f64) + 0.9 * bw, y, colour);
            let _ = writeln!(
                svg.body,
                r#"<circle cx="{:.1}" cy="{y:.1}" r="2.5" fill="{colour}"/>"#,
                f.x(i as f64 + 0.5)
            );
        }
        let ly = 68.0 + 16.0 * k as f64;
        svg.line(512.0, ly, 526.0, ly, colour);
        svg.text(532.0, ly + 4.0, 12.0, "start", name);
    }
    svg.finish()
}

/// CSV twin of [`envelope_svg`].
pub fn envelope_csv(env: &Envelope, overlays: &[(&str, &[f64])]) -> String {
    let mut s = String::from("bin,lower,upper");
    for (name, _) in overlays {
        s.push(',');
        s.push_str(&name.replace([',', ' '], "_"));
    }
    s.push('\n');
    for i in 0..env.upper.len() {
        let _ = write!(s, "{},{},{}", i + 1, env.lower[i], env.upper[i]);
        for (_, h) in overlays {
            let _ = write!(s, ",{}", h.get(i).copied().unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    s
}

pub fn ladders_csv(r: &RobustnessReport) -> String {
    let mut s = String::from("kind,rung,epsilon,median_snr_db\n");
    for l in &r.ladders {
        for (i, (e, snr)) in l.epsilons.iter().zip(&l.median_snr_db).enumerate() {
            let snr = snr.map_or(String::new(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "{},{i},{e},{snr}", l.kind);
        }
    }
    s
}

fn certification_name(r: &GlobalResult) -> String {
    match &r.verdict.result {
        Certification::Certified => "certified".into(),
        Certification::Counterexample { class, .. } => format!("counterexample:{class}"),
    }
}

pub fn global_csv(results: &[GlobalResult]) -> String {
    let mut s = String::from(
        "net,class,members,excluded,excluded_percent,others_inside,weighted_sum_lo,weighted_sum_hi,verdict,lp_calls\n",
    );
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.4},{},{},{},{},{}",
            r.net.name(),
            r.set.class,
            r.exclusion.members,
            r.exclusion.excluded.len(),
            r.exclusion.excluded_percent,
            r.exclusion.others_inside,
            r.set.weighted_sum_interval.0,
            r.set.weighted_sum_interval.1,
            certification_name(r),
            r.verdict.stats.lp_calls
        );
    }
    s
}

/// Box part of a global constraint set as an envelope (lower bound 0), with
/// the counterexample overlaid when there is one.
pub fn global_envelope(r: &GlobalResult) -> (Envelope, Option<Vec<f64>>) {
    let env = Envelope {
        lower: vec![0.0; r.set.envelope_upper.len()],
        upper: r.set.envelope_upper.clone(),
        sample_count: r.exclusion.members,
    };
    let cex = match &r.verdict.result {
        Certification::Counterexample { witness, .. } => Some(witness.clone()),
        Certification::Certified => None,
    };
    (env, cex)
}

pub fn robustness_summary(r: &RobustnessReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_iters: {}", r.n_iters);
    let _ = writeln!(s, "seed: {}", r.seed);
    let _ = writeln!(s, "cells: {}", r.cells.len());
    let _ = writeln!(s, "failures: {}", r.failures.len());
    let _ = writeln!(s, "lp_calls: {}", r.lp_calls);
    let _ = writeln!(s, "branches: {}", r.branches);
    let _ = writeln!(s, "near_misses: {}", r.near_misses);
    for f in &r.failures {
        let _ = writeln!(s, "failure: {f}");
    }
    s
}

fn put(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    write_atomic(&p, body.as_bytes())?;
    written.push(p);
    Ok(())
}

fn put_json<T: serde::Serialize + ?Sized>(dir: &Path, name: &str, value: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    crate::io::write_json(&p, value)?;
    written.push(p);
    Ok(())
}

/// Evaluation table and heatmap.
pub fn write_evaluation(dir: &Path, r: &EvalReport) -> Result<Vec<PathBuf>> {
    let mut w = Vec::new();
    put(dir, "evaluation.csv", &r.to_text(), &mut w)?;
    put(dir, "confusion.svg", &confusion_svg(r), &mut w)?;
    Ok(w)
}

/// Sweep tables and one class-rate and one binary-rate chart per network
/// and perturbation kind.
pub fn write_robustness(dir: &Path, r: &RobustnessReport) -> Result<Vec<PathBuf>> {
    let mut w = Vec::new();
    put(dir, "robustness.csv", &r.to_csv(), &mut w)?;
    put_json(dir, "robustness.json", r, &mut w)?;
    put(dir, "ladders.csv", &ladders_csv(r), &mut w)?;
    put(dir, "robustness.txt", &robustness_summary(r), &mut w)?;
    for net in [HistKind::C, HistKind::D] {
        for l in &r.ladders {
            for (binary, tag) in [(false, "rate"), (true, "binary_rate")] {
                let stem = format!("{tag}_{}_{}", net.name(), l.kind);
                put(dir, &format!("{stem}.svg"), &rate_chart_svg(r, net, l.kind, binary), &mut w)?;
                put(dir, &format!("{stem}.csv"), &rate_chart_csv(r, net, l.kind, binary), &mut w)?;
            }
        }
    }
    Ok(w)
}

pub fn write_global(dir: &Path, results: &[GlobalResult]) -> Result<Vec<PathBuf>> {
    let mut w = Vec::new();
    put(dir, "global.csv", &global_csv(results), &mut w)?;
    put_json(dir, "global.json", results, &mut w)?;
    for r in results {
        let (env, cex) = global_envelope(r);
        let overlays: Vec<(&str, &[f64])> = cex.as_deref().map(|c| ("counterexample", c)).into_iter().collect();
        let title = format!(
            "{} network, class {}: envelope, weighted sum in [{:.3}, {:.3}], {}",
            r.net.name(),
            r.set.class,
            r.set.weighted_sum_interval.0,
            r.set.weighted_sum_interval.1,
            certification_name(r)
        );
        let stem = format!("global_{}_{}", r.net.name(), r.set.class);
        put(dir, &format!("{stem}.svg"), &envelope_svg(&title, &env, &overlays), &mut w)?;
        put(dir, &format!("{stem}.csv"), &envelope_csv(&env, &overlays), &mut w)?;
    }
    Ok(w)
}

/// Headline numbers of an experiment as `key: value` lines.
pub fn experiment_summary(e: &Experiment) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed: {}", e.config.seed);
    let _ = writeln!(s, "train_series: {}", e.train_ids.len());
    let _ = writeln!(s, "test_series: {}", e.test_ids.len());
    for g in &e.evaluation.groupings {
        let f = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(s, "sensitivity[{}]: {}", g.name, f(g.sensitivity));
        let _ = writeln!(s, "ppv[{}]: {}", g.name, f(g.ppv));
    }
    let _ = writeln!(s, "evaluation_entries: {}", e.entries.len());
    s.push_str(&robustness_summary(&e.robustness));
    for r in &e.global {
        let _ = writeln!(
            s,
            "global[{}:{}]: {} (excluded {}/{}, weighted sum in [{:.4}, {:.4}])",
            r.net.name(),
            r.set.class,
            certification_name(r),
            r.exclusion.excluded.len(),
            r.exclusion.members,
            r.set.weighted_sum_interval.0,
            r.set.weighted_sum_interval.1
        );
    }
    s
}

/// Every report file of an experiment under `dir`.
pub fn write_experiment(dir: &Path, e: &Experiment) -> Result<Vec<PathBuf>> {
    let mut w = Vec::new();
    put(dir, "summary.txt", &experiment_summary(e), &mut w)?;
    put_json(dir, "experiment.json", e, &mut w)?;
    w.extend(write_evaluation(dir, &e.evaluation)?);
    w.extend(write_robustness(dir, &e.robustness)?);
    w.extend(write_global(dir, &e.global)?);
    Ok(w)
}
