//! Query files.
//!
//! One statement per line, `#` starts a comment:
//!
//! ```text
//! model nn_c.json            # path, relative to the query file
//! expected 1                 # local robustness: all other classes
//! target 2                   # or: a single existential query
//! x_0 >= 0.1                 # per-input bounds (every input needs both)
//! x_0 <= 0.3
//! x_4 = 0.25                 # shorthand for both bounds
//! lower 0.1 0.0 0.2 ...      # or whole vectors
//! upper 0.3 0.1 0.4 ...
//! +2.0 x_0 -1 x_3 <= 4.5     # linear constraint over inputs
//! ```

use std::path::{Path, PathBuf};

use super::simplex::{Constraint, Relation};
use super::InputRegion;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    /// Local robustness around a series classified as this class.
    Expected(usize),
    /// Reachability of this class.
    Target(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub model: PathBuf,
    pub region: InputRegion,
    pub goal: Goal,
}

pub fn read_query(path: &Path) -> Result<Query> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut q = parse_query(&text, &path.display().to_string())?;
    if q.model.is_relative() {
        if let Some(dir) = path.parent() {
            q.model = dir.join(&q.model);
        }
    }
    Ok(q)
}

fn var_index(tok: &str) -> Option<usize> {
    tok.strip_prefix("x_")?.parse().ok()
}

fn number(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn relation(tok: &str) -> Option<Relation> {
    match tok {
        "<=" => Some(Relation::Le),
        ">=" => Some(Relation::Ge),
        _ => None,
    }
}

pub fn parse_query(text: &str, origin: &str) -> Result<Query> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut model = None;
    let mut goal = None;
    let mut lower: Vec<Option<f64>> = Vec::new();
    let mut upper: Vec<Option<f64>> = Vec::new();
    let mut linear: Vec<(Vec<(usize, f64)>, Relation, f64, usize)> = Vec::new();

    let set = |v: &mut Vec<Option<f64>>, i: usize, x: f64| {
        if v.len() <= i {
            v.resize(i + 1, None);
        }
        v[i] = Some(x);
    };

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "model" => {
                let rest = line["model".len()..].trim();
                if rest.is_empty() {
                    return Err(err(ln, "model needs a path".into()));
                }
                model = Some(PathBuf::from(rest));
            }
            "expected" | "target" => {
                let k = toks
                    .get(1)
                    .and_then(|t| t.parse::<usize>().ok())
                    .filter(|_| toks.len() == 2)
                    .ok_or_else(|| err(ln, format!("{} needs one class index", toks[0])))?;
                if goal.is_some() {
                    return Err(err(ln, "more than one expected/target line".into()));
                }
                goal = Some(if toks[0] == "expected" {
                    Goal::Expected(k)
                } else {
                    Goal::Target(k)
                });
            }
            "lower" | "upper" => {
                let vals = toks[1..]
                    .iter()
                    .map(|t| number(t))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| err(ln, "bad number in vector".into()))?;
                let v = if toks[0] == "lower" { &mut lower } else { &mut upper };
                for (i, x) in vals.into_iter().enumerate() {
                    set(v, i, x);
                }
            }
            _ if toks.len() == 3 && var_index(toks[0]).is_some() => {
                let i = var_index(toks[0]).expect("checked");
                let c = number(toks[2]).ok_or_else(|| err(ln, format!("bad number {:?}", toks[2])))?;
                match toks[1] {
                    ">=" => set(&mut lower, i, c),
                    "<=" => set(&mut upper, i, c),
                    "=" | "==" => {
                        set(&mut lower, i, c);
                        set(&mut upper, i, c);
                    }
                    other => return Err(err(ln, format!("unknown relation {other:?}"))),
                }
            }
            _ => {
                // coefficient/variable pairs, then relation and rhs
                if toks.len() < 4 || toks.len() % 2 != 0 {
                    return Err(err(ln, format!("cannot parse {line:?}")));
                }
                let n = toks.len() - 2;
                let rel = relation(toks[n])
                    .ok_or_else(|| err(ln, format!("expected <= or >=, got {:?}", toks[n])))?;
                let rhs = number(toks[n + 1]).ok_or_else(|| err(ln, "bad right-hand side".into()))?;
                let mut terms = Vec::new();
                for pair in toks[..n].chunks(2) {
                    let a = number(pair[0]).ok_or_else(|| err(ln, format!("bad coefficient {:?}", pair[0])))?;
                    let i = var_index(pair[1]).ok_or_else(|| err(ln, format!("bad variable {:?}", pair[1])))?;
                    terms.push((i, a));
                }
                linear.push((terms, rel, rhs, ln));
            }
        }
    }

    let model = model.ok_or_else(|| err(0, "missing model line".into()))?;
    let goal = goal.ok_or_else(|| err(0, "missing expected/target line".into()))?;
    let m = lower.len().max(upper.len());
    if m == 0 {
        return Err(err(0, "no input bounds".into()));
    }
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    for i in 0..m {
        match (lower.get(i).copied().flatten(), upper.get(i).copied().flatten()) {
            (Some(l), Some(u)) => {
                lo.push(l);
                hi.push(u);
            }
            _ => return Err(err(0, format!("x_{i} needs both a lower and an upper bound"))),
        }
    }
    let mut constraints = Vec::new();
    for (terms, rel, rhs, ln) in linear {
        let mut coeffs = vec![0.0; m];
        for (i, a) in terms {
            if i >= m {
                return Err(err(ln, format!("x_{i} is not bounded")));
            }
            coeffs[i] += a;
        }
        constraints.push(Constraint::new(coeffs, rel, rhs));
    }
    let region = InputRegion::with_constraints(lo, hi, constraints).map_err(|e| err(0, e.to_string()))?;
    Ok(Query {
        model,
        region,
        goal,
    })
}

/// Render a query in the grammar above.
pub fn write_query(q: &Query) -> String {
    let mut s = format!("model {}\n", q.model.display());
    match q.goal {
        Goal::Expected(k) => s.push_str(&format!("expected {k}\n")),
        Goal::Target(k) => s.push_str(&format!("target {k}\n")),
    }
    for (i, (l, u)) in q.region.lower.iter().zip(&q.region.upper).enumerate() {
        s.push_str(&format!("x_{i} >= {l:?}\nx_{i} <= {u:?}\n"));
    }
    for c in &q.region.linear_constraints {
        let terms: Vec<String> = c
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, a)| format!("{a:?} x_{i}"))
            .collect();
        s.push_str(&format!("{} {} {:?}\n", terms.join(" "), c.rel.symbol(), c.rhs));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        let text = "# demo\nmodel m.json\nexpected 1\nlower 0 0 0\nupper 1 1 1\nx_1 <= 0.5\nx_2 = 0.25\n+2.0 x_0 -1 x_2 <= 4.5\n";
        let q = parse_query(text, "q").unwrap();
        assert_eq!(q.goal, Goal::Expected(1));
        assert_eq!(q.region.upper, vec![1.0, 0.5, 0.25]);
        assert_eq!(q.region.lower, vec![0.0, 0.0, 0.25]);
        assert_eq!(q.region.linear_constraints[0].coeffs, vec![2.0, 0.0, -1.0]);
        let back = parse_query(&write_query(&q), "q").unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn missing_bound_is_an_error() {
        let e = parse_query("model m\ntarget 0\nx_0 >= 0\nx_1 >= 0\nx_1 <= 1\n", "q").unwrap_err();
        assert!(e.to_string().contains("x_0"));
        assert!(parse_query("model m\nx_0 = 1\n", "q").is_err());
        assert!(parse_query("model m\ntarget 0\nx_0 = 1\nfoo bar\n", "q").is_err());
    }
}
