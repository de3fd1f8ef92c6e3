use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error used throughout: `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central-difference check of `gradient` against `f` at `theta`.
///
/// `f` returns the scalar value at a parameter vector; `gradient` is the
/// analytic gradient at `theta` computed by the caller.
pub fn grad_check<F>(mut f: F, theta: &[f64], gradient: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config("grad_check eps must be positive".into()));
    }
    if theta.len() != gradient.len() {
        return Err(Error::Input(alloc::format!(
            "gradient has {} entries for {} parameters",
            gradient.len(),
            theta.len()
        )));
    }
    let mut point: Vec<f64> = theta.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for i in 0..theta.len() {
        point[i] = theta[i] + eps;
        let plus = f(&point)?;
        point[i] = theta[i] - eps;
        let minus = f(&point)?;
        point[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(alloc::format!("f is not finite around coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(gradient[i], numeric);
        if err > report.max_rel_error || i == 0 {
            report = GradCheckReport { max_rel_error: err, worst_index: i, analytic: gradient[i], numeric };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{softmax, Matrix, Tape};

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let r = grad_check(|x| Ok(x[0] * x[0]), &[2.0], &[4.0], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn linear_sum() {
        let theta = [0.3, -1.7, 12.0, 5.5];
        let r = grad_check(|x| Ok(x.iter().sum()), &theta, &[1.0; 4], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let first = |w: &[f64]| Ok(softmax(w)?[0]);
        let eps = 1e-6;
        let numeric: Vec<f64> = (0..2)
            .map(|i| {
                let mut p = [0.0, 0.0];
                let mut m = [0.0, 0.0];
                p[i] = eps;
                m[i] = -eps;
                (first(&p).unwrap() - first(&m).unwrap()) / (2.0 * eps)
            })
            .collect();
        assert!((numeric[0] - 0.25).abs() < 1e-9);
        assert!((numeric[1] + 0.25).abs() < 1e-9);

        let mut t = Tape::new();
        let w = t.leaf(Matrix::row_vector(&[0.0, 0.0]).unwrap());
        let p = t.softmax_rows(w);
        let head = t.slice_cols(p, 0, 1).unwrap();
        t.backward(head).unwrap();
        let r = grad_check(first, &[0.0, 0.0], t.grad(w).data(), eps).unwrap();
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn non_finite_evaluation_is_reported() {
        let r = grad_check(|x| Ok(1.0 / x[0]), &[0.0], &[0.0], 1e-5);
        assert!(r.is_ok());
        let r = grad_check(|x| Ok(libm::log(x[0])), &[0.0], &[0.0], 1e-5);
        assert!(matches!(r, Err(Error::Evaluation(_))));
        assert!(grad_check(|_| Ok(0.0), &[0.0], &[0.0], 0.0).is_err());
    }
}
