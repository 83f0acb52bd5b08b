//! Least-squares fit of `f = d·sign(ω) + v·ω` over a window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{sign, TimeSeries};

/// Relative singularity tolerance on the 2×2 normal matrix.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub dry: f64,
    pub visc: f64,
    pub residual_rms: f64,
}

#[inline]
fn used(w: f64, deadband: f64) -> bool {
    w.abs() >= deadband && w != 0.0
}

/// True when the regression design over `omega` (after the deadband) is
/// non-singular.
pub fn design_is_regular(omega: &[f64], deadband: f64) -> bool {
    gram(omega, deadband).is_some()
}

struct Gram {
    n: usize,
    r11: f64,
    r12: f64,
}

/// First QR pass. `None` when the normal matrix is singular within
/// `SINGULAR_TOL` of its largest entry.
fn gram(omega: &[f64], deadband: f64) -> Option<Gram> {
    let mut n = 0usize;
    let (mut ss, mut sw, mut ww) = (0.0f64, 0.0f64, 0.0f64);
    for &w in omega.iter().filter(|w| used(**w, deadband)) {
        let s = sign(w);
        n += 1;
        ss += s * s;
        sw += s * w;
        ww += w * w;
    }
    if n < 2 {
        return None;
    }
    let r11 = ss.sqrt();
    let r12 = sw / r11;
    // r22² computed directly to avoid the cancellation in ss·ww − sw²
    let mut r22sq = 0.0;
    for &w in omega.iter().filter(|w| used(**w, deadband)) {
        let q = w - r12 * sign(w) / r11;
        r22sq += q * q;
    }
    let det = ss * r22sq;
    let largest = ss.max(ww).max(sw.abs());
    if !(det > SINGULAR_TOL * largest * largest) {
        return None;
    }
    Some(Gram { n, r11, r12 })
}

/// Fit over parallel slices. Samples with `|ω| < deadband` are ignored.
pub fn fit_slices(omega: &[f64], friction: &[f64], deadband: f64) -> Option<Fit> {
    let g = gram(omega, deadband)?;
    let mut sf = 0.0;
    let mut qf = 0.0;
    let mut qq = 0.0;
    for (&w, &f) in omega.iter().zip(friction) {
        if !used(w, deadband) {
            continue;
        }
        let s = sign(w);
        let q = w - g.r12 * s / g.r11;
        sf += s * f;
        qf += q * f;
        qq += q * q;
    }
    let visc = qf / qq;
    let dry = (sf / g.r11 - g.r12 * visc) / g.r11;
    let mut sse = 0.0;
    for (&w, &f) in omega.iter().zip(friction) {
        if !used(w, deadband) {
            continue;
        }
        let r = f - dry * sign(w) - visc * w;
        sse += r * r;
    }
    Some(Fit {
        dry,
        visc,
        residual_rms: (sse / g.n as f64).sqrt(),
    })
}

/// Sum of squared residuals, or `None` for a singular design.
pub(crate) fn sse_slices(omega: &[f64], friction: &[f64], deadband: f64) -> Option<f64> {
    let n = omega.iter().filter(|w| used(**w, deadband)).count();
    fit_slices(omega, friction, deadband).map(|f| f.residual_rms * f.residual_rms * n as f64)
}

/// OLS over samples `[start, start + len)`.
pub fn fit_window(series: &TimeSeries, start: usize, len: usize, deadband: f64) -> Result<Fit> {
    let end = start + len;
    if end > series.len() || len < 2 {
        return Err(Error::InvalidConfig(format!(
            "window [{start}, {end}) outside series of length {}",
            series.len()
        )));
    }
    fit_slices(
        &series.omega()[start..end],
        &series.friction()[start..end],
        deadband,
    )
    .ok_or(Error::DegenerateDesign { start, end })
}
