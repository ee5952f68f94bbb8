//! Central finite-difference gradient checks in double precision.

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate with the largest error, if any was checked.
    pub worst_index: Option<usize>,
    pub checked: usize,
}

/// Denominator floor so that vanishing gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `point`,
/// with per-coordinate step `epsilon · max(1, |x|)`.
pub fn finite_diff_check<F>(f: F, point: &[f64], analytic: &[f64], epsilon: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_check_masked(f, point, analytic, epsilon, |_| false)
}

/// As [`finite_diff_check`], skipping coordinates for which `skip` returns
/// true (points next to a kink of a piecewise-linear op).
pub fn finite_diff_check_masked<F, S>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    epsilon: f64,
    skip: S,
) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
    S: Fn(usize) -> bool,
{
    assert_eq!(point.len(), analytic.len(), "gradient length mismatch");
    let mut x = point.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
    };
    for i in 0..x.len() {
        if skip(i) {
            continue;
        }
        let h = epsilon * point[i].abs().max(1.0);
        x[i] = point[i] + h;
        let up = f(&x);
        x[i] = point[i] - h;
        let down = f(&x);
        x[i] = point[i];
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_index = Some(i);
        }
    }
    report
}
