mod common;

use common::{grid_classes, pattern_oracle, random_box, random_model, random_region, rng};
use proptest::prelude::*;
use rand::Rng;
use wheelcheck::mlp::{MlpModel, NUM_CLASSES};
use wheelcheck::verifier::{
    interval_bounds, solve, verify_local_robustness, verify_query, verify_query_with, Constraint, InputRegion,
    Lp, LpOutcome, Outcome, Relation, Robustness, VerifyOptions,
};

fn sat_witness(model: &MlpModel, region: &InputRegion, target: usize) -> Option<Vec<f64>> {
    match verify_query(model, region, target).unwrap().outcome {
        Outcome::Sat { witness, class } => {
            assert_eq!(class, target);
            assert!(region.contains(&witness, 1e-9), "witness outside region");
            assert_eq!(model.classify(&witness).unwrap(), target, "witness misclassified");
            Some(witness)
        }
        Outcome::Unsat => None,
    }
}

#[test]
fn agrees_with_exhaustive_pattern_oracle() {
    let mut r = rng(11);
    let (mut sat, mut unsat) = (0, 0);
    for _ in 0..150 {
        let m = r.random_range(1..=6);
        let model = random_model(&mut r, m, 8);
        let region = random_region(&mut r, m);
        let target = r.random_range(0..NUM_CLASSES);
        let got = sat_witness(&model, &region, target).is_some();
        let want = pattern_oracle(&model, &region, target).is_some();
        assert_eq!(got, want, "model {model:?} region {region:?} target {target}");
        if got {
            sat += 1;
        } else {
            unsat += 1;
        }
    }
    assert!(sat > 20 && unsat > 20, "degenerate instance mix: {sat} sat, {unsat} unsat");
}

#[test]
fn every_grid_hit_is_sat() {
    let mut r = rng(12);
    for _ in 0..25 {
        let m = r.random_range(1..=3);
        let model = random_model(&mut r, m, 10);
        let region = random_region(&mut r, m);
        let hit = grid_classes(&model, &region, 30);
        for (c, &h) in hit.iter().enumerate() {
            if h {
                assert!(sat_witness(&model, &region, c).is_some(), "grid reached class {c}, verifier missed it");
            }
        }
    }
}

#[test]
fn pruning_does_not_change_verdicts() {
    let mut r = rng(13);
    let off = VerifyOptions {
        use_ibp_pruning: false,
        node_feasibility: false,
        probe_centre: false,
    };
    for _ in 0..60 {
        let m = r.random_range(1..=4);
        let model = random_model(&mut r, m, 7);
        let region = random_region(&mut r, m);
        let target = r.random_range(0..NUM_CLASSES);
        let a = verify_query(&model, &region, target).unwrap();
        let b = verify_query_with(&model, &region, target, off).unwrap();
        assert_eq!(a.outcome.is_sat(), b.outcome.is_sat());
    }
}

#[test]
fn nested_regions_are_monotone() {
    let mut r = rng(14);
    for _ in 0..60 {
        let m = r.random_range(1..=4);
        let model = random_model(&mut r, m, 8);
        let outer = random_box(&mut r, m);
        let (lo, hi): (Vec<f64>, Vec<f64>) = outer
            .lower
            .iter()
            .zip(&outer.upper)
            .map(|(l, u)| {
                let a = r.random_range(*l..=*u);
                let b = r.random_range(*l..=*u);
                (a.min(b), a.max(b))
            })
            .unzip();
        let inner = InputRegion::new(lo, hi).unwrap();
        for t in 0..NUM_CLASSES {
            let i = verify_query(&model, &inner, t).unwrap().outcome.is_sat();
            let o = verify_query(&model, &outer, t).unwrap().outcome.is_sat();
            assert!(!i || o, "class {t} reachable in the inner box only");
        }
    }
}

#[test]
fn interval_bounds_contain_samples() {
    let mut r = rng(15);
    for _ in 0..50 {
        let m = r.random_range(1..=6);
        let model = random_model(&mut r, m, 10);
        let region = random_box(&mut r, m);
        let b = interval_bounds(&model, &region).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = region
                .lower
                .iter()
                .zip(&region.upper)
                .map(|(l, u)| r.random_range(*l..=*u))
                .collect();
            for (z, (l, h)) in model.pre_activations(&x).unwrap().iter().zip(&b.hidden) {
                assert!(*z >= l - 1e-12 && *z <= h + 1e-12);
            }
            for (z, (l, h)) in model.forward(&x).unwrap().iter().zip(&b.output) {
                assert!(*z >= l - 1e-12 && *z <= h + 1e-12);
            }
        }
    }
}

#[test]
fn local_robustness_matches_per_class_queries() {
    let mut r = rng(16);
    for _ in 0..40 {
        let m = r.random_range(1..=4);
        let model = random_model(&mut r, m, 6);
        let region = random_box(&mut r, m);
        let centre: Vec<f64> = region.lower.iter().zip(&region.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let expected = model.classify(&centre).unwrap();
        let rep = verify_local_robustness(&model, &region, expected).unwrap();
        let reachable: Vec<usize> = (0..NUM_CLASSES)
            .filter(|&c| c != expected && pattern_oracle(&model, &region, c).is_some())
            .collect();
        assert_eq!(rep.counterexample_classes, reachable);
        match rep.result {
            Robustness::Robust => assert!(reachable.is_empty()),
            Robustness::Counterexample { witness, class } => {
                assert_eq!(class, reachable[0]);
                assert_eq!(model.classify(&witness).unwrap(), class);
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Optimum of a bounded LP by enumerating every vertex (intersection of `n`
/// tight constraints or bounds); `None` when infeasible.
fn vertex_oracle(lp: &Lp) -> Option<f64> {
    let n = lp.n();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push((e.clone(), lp.lower[i]));
        rows.push((e, lp.upper[i]));
    }
    for c in &lp.constraints {
        rows.push((c.coeffs.clone(), c.rhs));
    }
    let feasible = |x: &[f64]| {
        x.iter().zip(&lp.lower).all(|(v, l)| *v >= l - 1e-9)
            && x.iter().zip(&lp.upper).all(|(v, u)| *v <= u + 1e-9)
            && lp.constraints.iter().all(|c| c.holds(x, 1e-9))
    };
    let obj = lp.objective.clone().unwrap_or(vec![0.0; n]);
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn rec(
        k: usize,
        start: usize,
        pick: &mut Vec<usize>,
        rows: &[(Vec<f64>, f64)],
        f: &mut dyn FnMut(&[usize]),
    ) {
        if k == pick.len() {
            f(pick);
            return;
        }
        for i in start..rows.len() {
            pick[k] = i;
            rec(k + 1, i + 1, pick, rows, f);
        }
    }
    rec(0, 0, &mut pick, &rows, &mut |sel: &[usize]| {
        let a = sel.iter().map(|&i| rows[i].0.clone()).collect();
        let b = sel.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = obj.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    });
    best
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut r = rng(17);
    let (mut feasible, mut infeasible) = (0, 0);
    for _ in 0..400 {
        let n = r.random_range(1..=3);
        let lower: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..1.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + r.random_range(0.1..2.0)).collect();
        let constraints = (0..r.random_range(0..=4))
            .map(|_| {
                let a = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
                let rel = if r.random::<bool>() { Relation::Le } else { Relation::Ge };
                Constraint::new(a, rel, r.random_range(-1.0..1.0))
            })
            .collect();
        let objective = Some((0..n).map(|_| r.random_range(-1.0..1.0)).collect());
        let lp = Lp {
            lower,
            upper,
            constraints,
            objective,
        };
        let want = vertex_oracle(&lp);
        match (solve(&lp).unwrap(), want) {
            (LpOutcome::Infeasible, None) => infeasible += 1,
            (LpOutcome::Feasible(x), Some(v)) => {
                feasible += 1;
                let got: f64 = lp.objective.as_ref().unwrap().iter().zip(&x).map(|(c, x)| c * x).sum();
                assert!((got - v).abs() < 1e-7, "optimum {got} vs vertex optimum {v}");
                assert!(lp.constraints.iter().all(|c| c.holds(&x, 1e-7)));
            }
            (got, want) => panic!("simplex {got:?} vs vertex oracle {want:?} on {lp:?}"),
        }
    }
    assert!(feasible > 50 && infeasible > 20, "{feasible} feasible, {infeasible} infeasible");
}

fn model_strategy(m: usize, h: usize) -> impl Strategy<Value = MlpModel> {
    (
        prop::collection::vec(prop::collection::vec(-1.0..1.0f64, m), h),
        prop::collection::vec(-0.5..0.5f64, h),
        prop::collection::vec(prop::collection::vec(-1.0..1.0f64, h), NUM_CLASSES),
        prop::collection::vec(-0.5..0.5f64, NUM_CLASSES),
    )
        .prop_map(|(w1, b1, w2, b2)| {
            MlpModel::from_parts(w1, b1, w2, b2, wheelcheck::mlp::default_class_names("C")).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_is_affine_within_a_pattern(
        model in model_strategy(3, 5),
        x in prop::collection::vec(-1.0..1.0f64, 3),
        d in prop::collection::vec(-1.0..1.0f64, 3),
        t in 0.0..1.0f64,
    ) {
        let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + 1e-3 * b).collect();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + t * (b - a)).collect();
        let on = |p: &[f64]| -> Vec<bool> { model.pre_activations(p).unwrap().iter().map(|z| *z > 0.0).collect() };
        prop_assume!(on(&x) == on(&y));
        let (fx, fy, fm) = (model.forward(&x).unwrap(), model.forward(&y).unwrap(), model.forward(&mid).unwrap());
        for c in 0..NUM_CLASSES {
            let lin = fx[c] + t * (fy[c] - fx[c]);
            prop_assert!((fm[c] - lin).abs() < 1e-9);
        }
    }

    #[test]
    fn classes_invariant_under_output_shift_and_scale(
        model in model_strategy(2, 4),
        lo in prop::collection::vec(-1.0..0.0f64, 2),
        w in prop::collection::vec(0.05..1.0f64, 2),
        shift in -3.0..3.0f64,
        scale in 0.1..10.0f64,
        target in 0..NUM_CLASSES,
    ) {
        let mut other = model.clone();
        other.w2_mut().iter_mut().for_each(|v| *v *= scale);
        other.b2_mut().iter_mut().for_each(|v| *v = *v * scale + shift);
        let x: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + 0.5 * w).collect();
        prop_assert_eq!(model.classify(&x).unwrap(), other.classify(&x).unwrap());
        let region = InputRegion::new(lo.clone(), lo.iter().zip(&w).map(|(l, w)| l + w).collect()).unwrap();
        let a = verify_query(&model, &region, target).unwrap().outcome.is_sat();
        let b = verify_query(&other, &region, target).unwrap().outcome.is_sat();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn point_regions_reach_exactly_the_forward_class(
        model in model_strategy(4, 6),
        x in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let region = InputRegion::point(&x).unwrap();
        let c = model.classify(&x).unwrap();
        for t in 0..NUM_CLASSES {
            prop_assert_eq!(verify_query(&model, &region, t).unwrap().outcome.is_sat(), t == c);
        }
    }
}
