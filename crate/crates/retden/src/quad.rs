//! Composite Gauss-Legendre quadrature over piecewise-smooth integrands.
//!
//! The integrands in this crate (densities times score functions) are smooth
//! except at a known, finite set of kinks, so panels are always split at the
//! kink locations and the panel count is doubled until two successive
//! estimates agree.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (pn, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = pn / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

const PANEL_ORDER: usize = 32;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

/// Integrate `f` over [lo, hi] with panels split at `breaks`, using
/// `panels_per_segment` equal panels between consecutive break points.
pub fn integrate_segmented<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    panels_per_segment: usize,
) -> f64 {
    let (nodes, weights) = panel_rule();
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    pts.push(lo);
    for &b in breaks {
        if b > lo && b < hi {
            pts.push(b);
        }
    }
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();

    let mut total = 0.0;
    for seg in pts.windows(2) {
        let width = (seg[1] - seg[0]) / panels_per_segment as f64;
        for p in 0..panels_per_segment {
            let a = seg[0] + p as f64 * width;
            let mid = a + 0.5 * width;
            let half = 0.5 * width;
            let mut acc = 0.0;
            for (x, w) in nodes.iter().zip(weights.iter()) {
                acc += w * f(mid + half * x);
            }
            total += acc * half;
        }
    }
    total
}

/// Adaptive wrapper: doubles the panel count until two successive estimates
/// agree within `tol` (absolute plus relative), erroring out otherwise.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: f64,
    max_refinements: usize,
) -> Result<f64> {
    let mut panels = 2;
    let mut prev = integrate_segmented(f, lo, hi, breaks, panels);
    for _ in 0..max_refinements {
        panels *= 2;
        let next = integrate_segmented(f, lo, hi, breaks, panels);
        let residual = (next - prev).abs();
        if residual <= tol * (1.0 + next.abs()) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        residual: f64::NAN,
        refinements: max_refinements,
    })
}
