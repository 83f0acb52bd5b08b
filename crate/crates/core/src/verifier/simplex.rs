//! Dense two-phase simplex over box-bounded variables, Bland's rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility tolerance on normalised rows.
pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
}

impl Relation {
    pub fn flip(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }
}

/// `coeffs · x  rel  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Self { coeffs, rel, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    /// True when `x` satisfies the constraint up to `slack`, scaled by the
    /// largest coefficient magnitude.
    pub fn holds(&self, x: &[f64], slack: f64) -> bool {
        let scale = self
            .coeffs
            .iter()
            .fold(1.0f64, |m, a| m.max(a.abs()))
            .max(self.rhs.abs());
        let v = self.lhs(x) - self.rhs;
        match self.rel {
            Relation::Le => v <= slack * scale,
            Relation::Ge => v >= -slack * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Feasible(Vec<f64>),
}

/// Box-bounded linear program. `objective`, when present, is maximised.
#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub objective: Option<Vec<f64>>,
}

impl Lp {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            constraints: Vec::new(),
            objective: None,
        }
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }
}

/// Feasibility of `constraints` within the box `[lower, upper]`.
pub fn lp_feasible(constraints: &[Constraint], lower: &[f64], upper: &[f64]) -> Result<LpOutcome> {
    solve(&Lp {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        constraints: constraints.to_vec(),
        objective: None,
    })
}

struct Tableau {
    /// m rows of `cols + 1` entries, last column is the right-hand side.
    a: Vec<f64>,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
    iterations: usize,
    cap: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.a[i * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        self.a[r * w + c] = 1.0;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                self.a[i * w + j] -= f * self.a[r * w + j];
            }
            self.a[i * w + c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimise `cost · vars` over columns allowed by `usable`, Bland's rule.
    fn minimise(&mut self, cost: &[f64], usable: &dyn Fn(usize) -> bool) -> Result<bool> {
        loop {
            if self.iterations >= self.cap {
                return Err(Error::SolverStall {
                    iterations: self.iterations,
                });
            }
            // entering column: lowest index with negative reduced cost
            let mut enter = None;
            for j in 0..self.cols {
                if !usable(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.m {
                    d -= cost[self.basis[i]] * self.at(i, j);
                }
                if d < -FEAS_TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };
            // leaving row: minimum ratio, ties to the lowest basic index
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let aij = self.at(i, c);
                if aij <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / aij;
                let better = match leave {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && self.basis[i] < self.basis[r])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(r, c);
            self.iterations += 1;
        }
    }
}

/// Solve a box-bounded LP: phase 1 for feasibility, phase 2 for the objective.
pub fn solve(lp: &Lp) -> Result<LpOutcome> {
    let n = lp.n();
    if lp.upper.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lp.upper.len(),
        });
    }
    for (l, u) in lp.lower.iter().zip(&lp.upper) {
        if !(l.is_finite() && u.is_finite()) {
            return Err(Error::InvalidRegion("LP variables must be bounded".into()));
        }
        if l > u {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // shift x = lower + y, y in [0, upper - lower]; normalise rows, rhs >= 0
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        if c.coeffs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.coeffs.len(),
            });
        }
        let scale = c.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let shifted = c.rhs - c.lhs(&lp.lower);
        if scale == 0.0 {
            let ok = match c.rel {
                Relation::Le => shifted >= -FEAS_TOL,
                Relation::Ge => shifted <= FEAS_TOL,
            };
            if !ok {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        let mut a: Vec<f64> = c.coeffs.iter().map(|v| v / scale).collect();
        let mut b = shifted / scale;
        let mut rel = c.rel;
        if b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            b = -b;
            rel = rel.flip();
        }
        rows.push((a, rel, b));
    }
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        rows.push((a, Relation::Le, lp.upper[i] - lp.lower[i]));
    }

    let m = rows.len();
    let n_art = rows.iter().filter(|r| r.1 == Relation::Ge).count();
    let cols = n + m + n_art;
    let art_start = n + m;
    let mut t = Tableau {
        a: vec![0.0; m * (cols + 1)],
        m,
        cols,
        basis: vec![0; m],
        iterations: 0,
        cap: 20_000 + 100 * (m + cols),
    };
    let mut next_art = art_start;
    for (i, (a, rel, b)) in rows.iter().enumerate() {
        let w = cols + 1;
        t.a[i * w..i * w + n].copy_from_slice(a);
        t.a[i * w + cols] = *b;
        match rel {
            Relation::Le => {
                t.a[i * w + n + i] = 1.0;
                t.basis[i] = n + i;
            }
            Relation::Ge => {
                t.a[i * w + n + i] = -1.0;
                t.a[i * w + next_art] = 1.0;
                t.basis[i] = next_art;
                next_art += 1;
            }
        }
    }

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        cost[art_start..].iter_mut().for_each(|c| *c = 1.0);
        t.minimise(&cost, &|_| true)?;
        let infeas: f64 = (0..m)
            .filter(|&i| t.basis[i] >= art_start)
            .map(|i| t.rhs(i))
            .sum();
        if infeas > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // drive remaining zero-level artificials out of the basis
        for i in 0..m {
            if t.basis[i] < art_start {
                continue;
            }
            if let Some(j) = (0..art_start).find(|&j| !t.basis.contains(&j) && t.at(i, j).abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    if let Some(obj) = &lp.objective {
        if obj.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: obj.len(),
            });
        }
        let mut cost = vec![0.0; cols];
        for (c, o) in cost.iter_mut().zip(obj) {
            *c = -o;
        }
        t.minimise(&cost, &|j| j < art_start)?;
    }

    let mut y = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            y[t.basis[i]] = t.rhs(i);
        }
    }
    let x = (0..n)
        .map(|i| (lp.lower[i] + y[i]).clamp(lp.lower[i], lp.upper[i]))
        .collect();
    Ok(LpOutcome::Feasible(x))
}
