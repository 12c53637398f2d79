//! Test-only oracles. Nothing here calls into the autodiff engine: finite
//! differences only evaluate forward passes.
#![allow(dead_code)]

/// Central differences of `f` at `x`, step `h`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate-wise relative error; coordinates where both values are
/// below `floor` in magnitude are compared against `floor` instead.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

/// Split a flat parameter vector back into tensors of the given lengths.
pub fn unflatten(flat: &[f64], lens: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut at = 0;
    for &l in lens {
        out.push(flat[at..at + l].to_vec());
        at += l;
    }
    out
}
