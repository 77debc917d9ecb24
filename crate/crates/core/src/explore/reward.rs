//! Trace-similarity reward and the blend of behavior and experience terms.

use super::ExploreError;

/// Target value at window `i`, held at the last value past the end.
pub fn target_at(target: &[f64], i: usize) -> f64 {
    target[i.min(target.len() - 1)]
}

/// Per-window similarity term `(1 - |h - t|)^2`.
#[inline]
pub fn similarity_term(h: f64, t: f64) -> f64 {
    let s = 1.0 - (h - t).abs();
    s * s
}

fn check_unit(values: &[f64], what: &str) -> Result<(), ExploreError> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(ExploreError::OutOfRange(format!("{what}[{i}] = {}", values[i]))),
        None => Ok(()),
    }
}

/// Mean of `(1 - |h(i) - t(i)|)^2` over the windows of `h`. Terms are summed
/// left to right, matching [`super::Trajectory`]'s running sums bit for bit.
pub fn reward_similarity(h: &[f64], t: &[f64]) -> Result<f64, ExploreError> {
    if h.is_empty() {
        return Err(ExploreError::EmptyTrace("agent trace"));
    }
    if t.is_empty() {
        return Err(ExploreError::EmptyTrace("target trace"));
    }
    check_unit(h, "h")?;
    check_unit(t, "t")?;
    let mut sum = 0.0;
    for (i, &v) in h.iter().enumerate() {
        sum += similarity_term(v, target_at(t, i));
    }
    Ok(sum / h.len() as f64)
}

/// `lambda * r_e + (1 - lambda) * r_b`.
pub fn blend(r_e: f64, r_b: f64, lambda: f64) -> f64 {
    lambda * r_e + (1.0 - lambda) * r_b
}
