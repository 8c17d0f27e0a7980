/// Inverse-square-root schedule with linear warmup, normalized so the rate
/// is exactly `peak` at `step == warmup`:
/// `lr(step) = peak * min(step/warmup, sqrt(warmup/step))`.
pub fn lr_schedule(step: usize, warmup: usize, peak: f64) -> f64 {
    assert!(step >= 1, "schedule is defined for step >= 1");
    let s = step as f64;
    let w = warmup.max(1) as f64;
    peak * (s / w).min((w / s).sqrt())
}

#[cfg(test)]
mod tests {
    use super::lr_schedule;

    #[test]
    fn pinned_points() {
        let (w, peak) = (500, 0.002);
        assert!((lr_schedule(w, w, peak) - peak).abs() < 1e-15);
        assert!((lr_schedule(w / 2, w, peak) - peak / 2.0).abs() < 1e-15);
        // sqrt(w / 4w) = 1/2
        assert!((lr_schedule(4 * w, w, peak) - peak / 2.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_at_warmup_and_monotone_phases() {
        let (w, peak) = (100, 0.01);
        let before = lr_schedule(w - 1, w, peak);
        let at = lr_schedule(w, w, peak);
        let after = lr_schedule(w + 1, w, peak);
        assert!(before < at && after < at);
        assert!((at - peak).abs() < 1e-15);
        for s in 1..w {
            assert!(lr_schedule(s, w, peak) < lr_schedule(s + 1, w, peak));
        }
        for s in w..3 * w {
            assert!(lr_schedule(s, w, peak) >= lr_schedule(s + 1, w, peak));
        }
    }
}
