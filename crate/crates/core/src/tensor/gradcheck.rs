//! Central finite-difference oracle for gradient checks.
//!
//! Only re-runs forward evaluations, so it stays independent of the backward
//! implementation it is used to verify. Run these checks with `f64` tensors;
//! at 32 bits the difference quotients drown in rounding noise.

/// Central-difference gradient of `f` at `x0`, step `h` per coordinate.
pub fn numeric_grad<F: FnMut(&[f64]) -> f64>(x0: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Agreement rule shared by all gradient suites: relative error where the
/// reference magnitude is above `abs_floor`, absolute error below it.
pub fn worst_error(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> (f64, f64) {
    assert_eq!(analytic.len(), numeric.len());
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs());
        if denom > abs_floor {
            max_rel = max_rel.max((a - n).abs() / denom);
        } else {
            max_abs = max_abs.max((a - n).abs());
        }
    }
    (max_rel, max_abs)
}

/// Panics when analytic and numeric gradients disagree beyond the tolerances.
pub fn assert_grads_close(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) {
    let (rel, abs) = worst_error(analytic, numeric, 1e-6);
    assert!(
        rel < rel_tol && abs < abs_tol,
        "gradient mismatch: max rel err {rel:.3e} (tol {rel_tol:.1e}), max abs err {abs:.3e} (tol {abs_tol:.1e})"
    );
}
