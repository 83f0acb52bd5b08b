//! Complete verification of classification queries over box + linear input
//! regions by branch-and-bound on ReLU phases.

mod query;
mod simplex;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use query::{parse_query, read_query, write_query, Goal, Query};
pub use simplex::{lp_feasible, solve, Constraint, Lp, LpOutcome, Relation, FEAS_TOL};

use crate::error::{Error, Result};
use crate::mlp::{MlpModel, NUM_CLASSES};

/// Slack allowed when checking that a witness lies in its region.
pub const REGION_SLACK: f64 = 1e-9;
/// Logit margin used when a non-strict witness fails validation.
pub const NEAR_MISS_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear_constraints: Vec<Constraint>,
}

impl InputRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::with_constraints(lower, upper, Vec::new())
    }

    pub fn with_constraints(
        lower: Vec<f64>,
        upper: Vec<f64>,
        linear_constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let r = Self {
            lower,
            upper,
            linear_constraints,
        };
        r.validate()?;
        Ok(r)
    }

    /// The zero-width region `{h}`.
    pub fn point(h: &[f64]) -> Result<Self> {
        Self::new(h.to_vec(), h.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::LengthMismatch {
                left: self.lower.len(),
                right: self.upper.len(),
            });
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidRegion(format!(
                    "bound {i}: [{l}, {u}] is not a finite interval"
                )));
            }
        }
        for c in &self.linear_constraints {
            if c.coeffs.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: c.coeffs.len(),
                });
            }
            if !(c.coeffs.iter().all(|v| v.is_finite()) && c.rhs.is_finite()) {
                return Err(Error::InvalidRegion("non-finite linear constraint".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, h: &[f64], slack: f64) -> bool {
        h.len() == self.dim()
            && h.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack)
            && self.linear_constraints.iter().all(|c| c.holds(h, slack))
    }
}

/// Interval bounds on hidden pre-activations and output logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub hidden: Vec<(f64, f64)>,
    pub output: Vec<(f64, f64)>,
}

/// Interval bound propagation over the region's box (linear constraints are
/// ignored, which is still sound).
pub fn interval_bounds(model: &MlpModel, region: &InputRegion) -> Result<Bounds> {
    region.validate()?;
    if region.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: region.dim(),
        });
    }
    let hidden: Vec<(f64, f64)> = (0..model.hidden_dim())
        .map(|j| {
            let mut lo = model.b1()[j];
            let mut hi = lo;
            for (i, &w) in model.w1_row(j).iter().enumerate() {
                let (a, b) = (w * region.lower[i], w * region.upper[i]);
                lo += a.min(b);
                hi += a.max(b);
            }
            (lo, hi)
        })
        .collect();
    let act: Vec<(f64, f64)> = hidden.iter().map(|&(l, h)| (l.max(0.0), h.max(0.0))).collect();
    let output = (0..NUM_CLASSES)
        .map(|c| affine_interval(model.w2_row(c), model.b2()[c], &act))
        .collect();
    Ok(Bounds { hidden, output })
}

fn affine_interval(w: &[f64], b: f64, act: &[(f64, f64)]) -> (f64, f64) {
    let mut lo = b;
    let mut hi = b;
    for (&wj, &(l, h)) in w.iter().zip(act) {
        let (a, bb) = (wj * l, wj * h);
        lo += a.min(bb);
        hi += a.max(bb);
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Unsat,
    Sat { witness: Vec<f64>, class: usize },
}

impl Outcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, Outcome::Sat { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub lp_calls: usize,
    pub branches: usize,
    /// Leaves whose LP was feasible but no validated witness was found.
    pub near_misses: Vec<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl Stats {
    fn absorb(&mut self, other: &Stats) {
        self.lp_calls += other.lp_calls;
        self.branches += other.branches;
        self.near_misses.extend(other.near_misses.iter().cloned());
        self.wall_time += other.wall_time;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub stats: Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Prune nodes whose logit-difference interval excludes the target.
    pub use_ibp_pruning: bool,
    /// Prune nodes whose phase constraints are infeasible over the region.
    pub node_feasibility: bool,
    /// Try the region's box centre before branching.
    pub probe_centre: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            use_ibp_pruning: true,
            node_feasibility: true,
            probe_centre: true,
        }
    }
}

/// Phase of one hidden neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Active,
    Inactive,
    Open,
}

struct Search<'a> {
    model: &'a MlpModel,
    region: &'a InputRegion,
    target: usize,
    bounds: Bounds,
    opts: VerifyOptions,
    stats: Stats,
}

impl Search<'_> {
    fn m(&self) -> usize {
        self.model.input_dim()
    }

    fn validate_witness(&self, x: &[f64]) -> Result<bool> {
        Ok(self.region.contains(x, REGION_SLACK) && self.model.classify(x)? == self.target)
    }

    /// Region and split-phase constraints, over `x` plus one trailing slack
    /// variable `s` (coefficient 0 here).
    fn base_constraints(&self, phases: &[Phase], split: &[bool]) -> Vec<Constraint> {
        let m = self.m();
        let mut out = Vec::new();
        for c in &self.region.linear_constraints {
            let mut a = c.coeffs.clone();
            a.push(0.0);
            out.push(Constraint::new(a, c.rel, c.rhs));
        }
        for (j, (&p, &was_split)) in phases.iter().zip(split).enumerate() {
            if !was_split {
                continue;
            }
            let mut a = self.model.w1_row(j).to_vec();
            a.push(0.0);
            let rhs = -self.model.b1()[j];
            let rel = match p {
                Phase::Active => Relation::Ge,
                Phase::Inactive => Relation::Le,
                Phase::Open => continue,
            };
            out.push(Constraint::new(a, rel, rhs));
        }
        debug_assert!(out.iter().all(|c| c.coeffs.len() == m + 1));
        out
    }

    /// Logit `c` as an affine function `(coeffs over x, constant)` under a
    /// fully determined pattern.
    fn affine_logit(&self, phases: &[Phase], c: usize) -> (Vec<f64>, f64) {
        let mut a = vec![0.0; self.m()];
        let mut k = self.model.b2()[c];
        for (j, &p) in phases.iter().enumerate() {
            if p != Phase::Active {
                continue;
            }
            let w = self.model.w2_row(c)[j];
            for (ai, wi) in a.iter_mut().zip(self.model.w1_row(j)) {
                *ai += w * wi;
            }
            k += w * self.model.b1()[j];
        }
        (a, k)
    }

    fn lp(&self, constraints: Vec<Constraint>, s_range: (f64, f64), maximise_s: bool) -> Lp {
        let mut lower = self.region.lower.clone();
        let mut upper = self.region.upper.clone();
        lower.push(s_range.0);
        upper.push(s_range.1);
        let objective = maximise_s.then(|| {
            let mut o = vec![0.0; self.m() + 1];
            o[self.m()] = 1.0;
            o
        });
        Lp {
            lower,
            upper,
            constraints,
            objective,
        }
    }

    fn solve(&mut self, lp: &Lp) -> Result<LpOutcome> {
        self.stats.lp_calls += 1;
        solve(lp)
    }

    /// Logit-difference interval `y_target − y_c` under the node's phases.
    fn diff_interval(&self, phases: &[Phase], c: usize) -> (f64, f64) {
        let act: Vec<(f64, f64)> = phases
            .iter()
            .zip(&self.bounds.hidden)
            .map(|(&p, &(l, h))| match p {
                Phase::Active => (l.max(0.0), h.max(0.0)),
                Phase::Inactive => (0.0, 0.0),
                Phase::Open => (0.0, h.max(0.0)),
            })
            .collect();
        let w: Vec<f64> = self
            .model
            .w2_row(self.target)
            .iter()
            .zip(self.model.w2_row(c))
            .map(|(a, b)| a - b)
            .collect();
        affine_interval(&w, self.model.b2()[self.target] - self.model.b2()[c], &act)
    }

    fn leaf(&mut self, phases: &[Phase], split: &[bool]) -> Result<Option<Vec<f64>>> {
        let (at, kt) = self.affine_logit(phases, self.target);
        let mut cons = self.base_constraints(phases, split);
        for c in (0..NUM_CLASSES).filter(|&c| c != self.target) {
            let (ac, kc) = self.affine_logit(phases, c);
            // (at − ac)·x − s ≥ kc − kt
            let mut a: Vec<f64> = at.iter().zip(&ac).map(|(p, q)| p - q).collect();
            a.push(-1.0);
            cons.push(Constraint::new(a, Relation::Ge, kc - kt));
        }
        let lp = self.lp(cons.clone(), (0.0, 1.0), true);
        let LpOutcome::Feasible(x) = self.solve(&lp)? else {
            return Ok(None);
        };
        let x = x[..self.m()].to_vec();
        if self.validate_witness(&x)? {
            return Ok(Some(x));
        }
        let lp = self.lp(cons, (NEAR_MISS_MARGIN, 1.0), true);
        if let LpOutcome::Feasible(x2) = self.solve(&lp)? {
            let x2 = x2[..self.m()].to_vec();
            if self.validate_witness(&x2)? {
                return Ok(Some(x2));
            }
        }
        self.stats.near_misses.push(format!(
            "target {} pattern {}: witness {:?} failed validation",
            self.target,
            pattern_string(phases),
            x
        ));
        Ok(None)
    }

    fn node(&mut self, phases: &mut Vec<Phase>, split: &mut Vec<bool>) -> Result<Option<Vec<f64>>> {
        self.stats.branches += 1;
        if self.opts.use_ibp_pruning {
            for c in (0..NUM_CLASSES).filter(|&c| c != self.target) {
                if self.diff_interval(phases, c).1 < 0.0 {
                    return Ok(None);
                }
            }
        }
        let open = phases
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == Phase::Open)
            .map(|(j, _)| (j, self.bounds.hidden[j].1 - self.bounds.hidden[j].0))
            .fold(None, |best: Option<(usize, f64)>, (j, w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((j, w)),
            });
        let Some((j, _)) = open else {
            return self.leaf(phases, split);
        };
        if self.opts.node_feasibility && split.iter().any(|s| *s) {
            let cons = self.base_constraints(phases, split);
            let lp = self.lp(cons, (0.0, 0.0), false);
            if self.solve(&lp)? == LpOutcome::Infeasible {
                return Ok(None);
            }
        }
        for p in [Phase::Active, Phase::Inactive] {
            phases[j] = p;
            split[j] = true;
            let found = self.node(phases, split)?;
            phases[j] = Phase::Open;
            split[j] = false;
            if found.is_some() {
                return Ok(found);
            }
        }
        Ok(None)
    }
}

fn pattern_string(phases: &[Phase]) -> String {
    phases
        .iter()
        .map(|p| match p {
            Phase::Active => '1',
            Phase::Inactive => '0',
            Phase::Open => '?',
        })
        .collect()
}

/// Decide whether some `h` in `region` has `classify(model, h) == target`.
pub fn verify_query(model: &MlpModel, region: &InputRegion, target: usize) -> Result<Verdict> {
    verify_query_with(model, region, target, VerifyOptions::default())
}

pub fn verify_query_with(
    model: &MlpModel,
    region: &InputRegion,
    target: usize,
    opts: VerifyOptions,
) -> Result<Verdict> {
    let started = Instant::now();
    if target >= NUM_CLASSES {
        return Err(Error::InvalidConfig(format!("target class {target} out of range")));
    }
    let bounds = interval_bounds(model, region)?;
    let phases: Vec<Phase> = bounds
        .hidden
        .iter()
        .map(|&(lo, hi)| {
            if lo >= 0.0 {
                Phase::Active
            } else if hi <= 0.0 {
                Phase::Inactive
            } else {
                Phase::Open
            }
        })
        .collect();
    let mut search = Search {
        model,
        region,
        target,
        bounds,
        opts,
        stats: Stats::default(),
    };
    let mut found = None;
    if opts.probe_centre {
        let centre: Vec<f64> = region
            .lower
            .iter()
            .zip(&region.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect();
        if search.validate_witness(&centre)? {
            found = Some(centre);
        }
    }
    if found.is_none() {
        let mut phases = phases;
        let mut split = vec![false; phases.len()];
        found = search.node(&mut phases, &mut split)?;
    }
    let mut stats = search.stats;
    stats.wall_time = started.elapsed();
    let outcome = match found {
        Some(witness) => Outcome::Sat {
            witness,
            class: target,
        },
        None => Outcome::Unsat,
    };
    Ok(Verdict { outcome, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Robustness {
    Robust,
    Counterexample { witness: Vec<f64>, class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub result: Robustness,
    /// Every target class reachable in the region other than `expected`,
    /// ascending.
    pub counterexample_classes: Vec<usize>,
    pub stats: Stats,
}

/// One query per class other than `expected`, in ascending class order.
/// Robust iff all are Unsat; the lowest counterexample class is reported.
pub fn verify_local_robustness(
    model: &MlpModel,
    region: &InputRegion,
    expected: usize,
) -> Result<LocalReport> {
    if expected >= NUM_CLASSES {
        return Err(Error::InvalidConfig(format!("expected class {expected} out of range")));
    }
    let mut stats = Stats::default();
    let mut result = Robustness::Robust;
    let mut classes = Vec::new();
    for target in (0..NUM_CLASSES).filter(|&c| c != expected) {
        let v = verify_query(model, region, target)?;
        stats.absorb(&v.stats);
        if let Outcome::Sat { witness, class } = v.outcome {
            classes.push(class);
            if result == Robustness::Robust {
                result = Robustness::Counterexample { witness, class };
            }
        }
    }
    Ok(LocalReport {
        result,
        counterexample_classes: classes,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MlpModel {
        // logit_1 = relu(x0 - x1), logit_2 = relu(x1 - x0), logit_0 = 0.1
        MlpModel::from_parts(
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            vec![0.0, 0.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]],
            vec![0.1, 0.0, 0.0, -1.0],
            crate::mlp::default_class_names("X"),
        )
        .unwrap()
    }

    #[test]
    fn point_region_matches_classify() {
        let m = toy();
        for h in [[0.5, 0.1], [0.1, 0.5], [0.3, 0.3]] {
            let r = InputRegion::point(&h).unwrap();
            let k = m.classify(&h).unwrap();
            for t in 0..NUM_CLASSES {
                let v = verify_query(&m, &r, t).unwrap();
                assert_eq!(v.outcome.is_sat(), t == k, "h={h:?} t={t}");
            }
        }
    }

    #[test]
    fn box_reaches_both_sides() {
        let m = toy();
        let r = InputRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        for t in 0..3 {
            let v = verify_query(&m, &r, t).unwrap();
            let Outcome::Sat { witness, class } = v.outcome else {
                panic!("class {t} should be reachable")
            };
            assert_eq!(m.classify(&witness).unwrap(), class);
        }
        assert!(!verify_query(&m, &r, 3).unwrap().outcome.is_sat());
    }

    #[test]
    fn linear_constraint_restricts() {
        let m = toy();
        let c = Constraint::new(vec![1.0, -1.0], Relation::Le, 0.0);
        let r = InputRegion::with_constraints(vec![0.0, 0.0], vec![1.0, 1.0], vec![c]).unwrap();
        assert!(!verify_query(&m, &r, 1).unwrap().outcome.is_sat());
        assert!(verify_query(&m, &r, 2).unwrap().outcome.is_sat());
    }

    #[test]
    fn robust_point() {
        let m = toy();
        let r = InputRegion::point(&[0.9, 0.1]).unwrap();
        let rep = verify_local_robustness(&m, &r, 1).unwrap();
        assert_eq!(rep.result, Robustness::Robust);
    }

    #[test]
    fn ibp_contains_zero_width() {
        let m = toy();
        let r = InputRegion::point(&[0.7, 0.2]).unwrap();
        let b = interval_bounds(&m, &r).unwrap();
        let pre = m.pre_activations(&[0.7, 0.2]).unwrap();
        for (p, (l, h)) in pre.iter().zip(&b.hidden) {
            assert_eq!(p, l);
            assert_eq!(p, h);
        }
    }

    #[test]
    fn invalid_region() {
        assert!(InputRegion::new(vec![1.0], vec![0.0]).is_err());
        assert!(InputRegion::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }
}
