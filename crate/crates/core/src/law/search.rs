//! Boundary location by bisection, with isotonic smoothing for noisy
//! empirical accuracy.
//!
//! [`search_boundary`] finds the largest axis value whose accuracy still
//! reaches a level `K`, assuming accuracy declines along the axis (a coarse
//! pre-scan enforces this). Raw empirical accuracy is rarely exactly
//! monotone; [`isotonic_decreasing`] (pool-adjacent-violators) plus
//! [`smoothed_axis_fn`] turn noisy per-point estimates into a monotone
//! interpolant that the search accepts.

use crate::law::LawError;
use crate::types::{BoundaryEstimate, DifficultyVector};

/// How many evenly spaced points the monotonicity pre-scan samples.
const PRESCAN_POINTS: usize = 33;
/// Slack for the pre-scan: tiny upticks from float noise are not violations.
const MONOTONE_SLACK: f64 = 1e-9;

/// Locate the accuracy boundary at level `k_level` along one axis.
///
/// `acc_fn` maps an axis value to accuracy, with all other coordinates
/// already pinned inside the closure; `fixed` records those pinned
/// coordinates in the returned estimate. The semantics are "largest value
/// with acc >= K": bisection keeps the invariant `acc(lo) >= K > acc(hi)`
/// and returns the bracket midpoint once the width is within `tol`.
pub fn search_boundary<F: Fn(f64) -> f64>(
    acc_fn: F,
    k_level: f64,
    axis: &str,
    fixed: &DifficultyVector,
    bracket: (f64, f64),
    tol: f64,
) -> Result<BoundaryEstimate, LawError> {
    let (mut lo, mut hi) = bracket;
    assert!(lo < hi, "bracket must be ordered");
    assert!(tol > 0.0, "tolerance must be positive");

    // Coarse pre-scan: accuracy must not increase along the axis.
    let mut prev = f64::INFINITY;
    let mut acc_lo = 0.0;
    let mut acc_hi = 0.0;
    for i in 0..PRESCAN_POINTS {
        let x = lo + (hi - lo) * i as f64 / (PRESCAN_POINTS - 1) as f64;
        let a = acc_fn(x);
        if a > prev + MONOTONE_SLACK {
            return Err(LawError::NonMonotone {
                axis: axis.to_string(),
                at: x,
            });
        }
        prev = a;
        if i == 0 {
            acc_lo = a;
        }
        if i == PRESCAN_POINTS - 1 {
            acc_hi = a;
        }
    }

    if !(acc_lo >= k_level && k_level > acc_hi) {
        return Err(LawError::BracketMiss {
            level: k_level,
            lo,
            hi,
            acc_lo,
            acc_hi,
        });
    }

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if acc_fn(mid) >= k_level {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    Ok(BoundaryEstimate {
        level_k: k_level,
        axis: axis.to_string(),
        fixed: fixed.clone(),
        value: 0.5 * (lo + hi),
        tol,
    })
}

/// Weighted isotonic regression onto non-increasing sequences
/// (pool-adjacent-violators). Returns the fitted values; input order is
/// positional. Weights must be positive.
pub fn isotonic_decreasing(ys: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(ys.len(), weights.len(), "one weight per value");
    // Blocks of pooled values: (weight sum, weighted value sum, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(weights) {
        assert!(w > 0.0, "weights must be positive");
        blocks.push((w, w * y, 1));
        // A non-increasing fit is violated when an earlier block's mean is
        // below a later one's; merge until restored.
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.1 / prev.0 >= last.1 / last.0 {
                break;
            }
            blocks.pop();
            let top = blocks.last_mut().unwrap();
            top.0 += last.0;
            top.1 += last.1;
            top.2 += last.2;
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for (w, wy, len) in blocks {
        let mean = wy / w;
        out.extend(std::iter::repeat_n(mean, len));
    }
    out
}

/// Build a monotone non-increasing interpolant from noisy per-point accuracy
/// estimates `(x, acc, weight)`. Points are sorted by `x`, duplicates pooled
/// by weight, the values isotonized, and queries answered by linear
/// interpolation (clamped at the ends). The result is suitable as the
/// `acc_fn` of [`search_boundary`].
pub fn smoothed_axis_fn(points: &[(f64, f64, f64)]) -> impl Fn(f64) -> f64 {
    let mut pts: Vec<(f64, f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
    // Pool duplicate x positions into weighted means.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (x, y, w) in pts {
        if xs.last().is_some_and(|&lx| lx == x) {
            let i = xs.len() - 1;
            let total = ws[i] + w;
            ys[i] = (ys[i] * ws[i] + y * w) / total;
            ws[i] = total;
        } else {
            xs.push(x);
            ys.push(y);
            ws.push(w);
        }
    }
    let fitted = isotonic_decreasing(&ys, &ws);
    move |x: f64| -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        if x <= xs[0] {
            return fitted[0];
        }
        if x >= *xs.last().unwrap() {
            return *fitted.last().unwrap();
        }
        let i = xs.partition_point(|&p| p <= x);
        let (x0, x1) = (xs[i - 1], xs[i]);
        let t = (x - x0) / (x1 - x0);
        fitted[i - 1] * (1.0 - t) + fitted[i] * t
    }
}
