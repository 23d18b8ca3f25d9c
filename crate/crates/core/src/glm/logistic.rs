use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{DesignMatrix, GlmError, ModelFit};

/// Convergence settings for [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop once the largest absolute gradient component is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// |eta| beyond this means fitted probabilities within ~1e-13 of 0 or 1.
const SATURATED_ETA: f64 = 30.0;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn linear_predictor(design: &DesignMatrix, coefs: &[f64]) -> Vec<f64> {
    design.rows().map(|r| dot(r, coefs)).collect()
}

/// Bernoulli log-likelihood `sum y log p + (1 - y) log(1 - p)`.
pub fn log_likelihood(design: &DesignMatrix, coefs: &[f64]) -> f64 {
    design
        .rows()
        .zip(design.labels())
        .map(|(r, &y)| {
            let eta = dot(r, coefs);
            if y {
                eta - softplus(eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Analytic gradient of [`log_likelihood`]: `X^T (y - p)`.
pub fn log_likelihood_gradient(design: &DesignMatrix, coefs: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; design.n_cols()];
    for (r, &y) in design.rows().zip(design.labels()) {
        let resid = f64::from(u8::from(y)) - sigmoid(dot(r, coefs));
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += resid * xj;
        }
    }
    g
}

/// Observed information `X^T W X`, W = diag(p (1 - p)).
fn information(design: &DesignMatrix, coefs: &[f64]) -> DMatrix<f64> {
    let p = design.n_cols();
    let mut h = vec![0.0; p * p];
    for r in design.rows() {
        let mu = sigmoid(dot(r, coefs));
        let w = mu * (1.0 - mu);
        if w == 0.0 {
            continue;
        }
        for i in 0..p {
            let wi = w * r[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut h[i * p..(i + 1) * p];
            for j in 0..=i {
                row[j] += wi * r[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            h[j * p + i] = h[i * p + j];
        }
    }
    DMatrix::from_row_slice(p, p, &h)
}

/// Solves `info * d = grad` after symmetric diagonal scaling, which keeps
/// the factorization accurate when columns differ in scale.
/// Cholesky factor of `D^-1/2 I D^-1/2` with `D = diag(I)`, plus the
/// scale vector `D^-1/2`.
fn scaled_cholesky(info: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, Vec<f64>)> {
    let p = info.nrows();
    let scale: Vec<f64> = (0..p)
        .map(|i| {
            let d = info[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| info[(i, j)] * scale[i] * scale[j]);
    Some((scaled.cholesky()?, scale))
}

fn newton_direction(info: DMatrix<f64>, grad: &[f64]) -> Option<Vec<f64>> {
    let (chol, scale) = scaled_cholesky(&info)?;
    let rhs = DVector::from_iterator(grad.len(), grad.iter().zip(&scale).map(|(g, s)| g * s));
    let z = chol.solve(&rhs);
    Some(z.iter().zip(&scale).map(|(z, s)| z * s).collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn standard_errors(info: DMatrix<f64>) -> Vec<f64> {
    match scaled_cholesky(&info) {
        Some((chol, scale)) => {
            let inv = chol.inverse();
            scale
                .iter()
                .enumerate()
                .map(|(i, s)| s * inv[(i, i)].max(0.0).sqrt())
                .collect()
        }
        None => vec![f64::NAN; info.nrows()],
    }
}

fn check_fittable(design: &DesignMatrix) -> Result<(), GlmError> {
    if !design.has_both_classes() {
        return Err(GlmError::SingleClass);
    }
    Ok(())
}

/// Complete separation (the linear predictor orders every positive above
/// every negative), or saturated fitted probabilities without a vanishing
/// gradient.
fn separated(design: &DesignMatrix, coefs: &[f64], gradient_converged: bool) -> bool {
    let eta = linear_predictor(design, coefs);
    let mut min_pos = f64::INFINITY;
    let mut max_neg = f64::NEG_INFINITY;
    let mut saturated = false;
    for (&e, &y) in eta.iter().zip(design.labels()) {
        if y {
            min_pos = min_pos.min(e);
        } else {
            max_neg = max_neg.max(e);
        }
        saturated |= e.abs() > SATURATED_ETA;
    }
    min_pos > max_neg || (saturated && !gradient_converged)
}

const LL_RESOLUTION: f64 = 1e-13;

/// Fits an unregularized logistic regression by damped Newton iterations
/// starting from zero.
pub fn fit_logistic(design: &DesignMatrix, opts: FitOptions) -> Result<ModelFit, GlmError> {
    fit_logistic_from(design, &vec![0.0; design.n_cols()], opts)
}

/// Damped Newton from `init`: each step is halved until the log-likelihood
/// does not decrease, so the objective is monotone along the path up to
/// rounding. Once the Newton decrement is below what the log-likelihood can
/// resolve, full steps are taken until the gradient falls below `opts.tol`. When the
/// information matrix is not positive definite a scaled gradient step is
/// used instead.
pub fn fit_logistic_from(design: &DesignMatrix, init: &[f64], opts: FitOptions) -> Result<ModelFit, GlmError> {
    check_fittable(design)?;
    if init.len() != design.n_cols() {
        return Err(GlmError::ColumnMismatch);
    }
    let mut coefs = init.to_vec();
    let mut ll = log_likelihood(design, &coefs);
    if !ll.is_finite() {
        return Err(GlmError::NonFiniteLikelihood);
    }
    // 1/L for gradient ascent, L >= lambda_max(X^T W X) since w <= 1/4
    let lipschitz = 0.25 * design.rows().map(|r| dot(r, r)).sum::<f64>();
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let grad = log_likelihood_gradient(design, &coefs);
        if max_abs(&grad) < opts.tol {
            converged = true;
            break;
        }
        let newton = newton_direction(information(design, &coefs), &grad);
        if let Some(d) = &newton {
            // The objective cannot resolve the remaining improvement, so
            // the line search is meaningless: take the full Newton step.
            if 0.5 * dot(&grad, d) <= LL_RESOLUTION * ll.abs().max(1.0) {
                let candidate: Vec<f64> = coefs.iter().zip(d).map(|(c, d)| c + d).collect();
                let cand_ll = log_likelihood(design, &candidate);
                if !cand_ll.is_finite() {
                    break;
                }
                coefs = candidate;
                ll = cand_ll;
                iterations += 1;
                history.push(ll);
                continue;
            }
        }
        let direction = newton.unwrap_or_else(|| grad.iter().map(|x| x / lipschitz).collect());

        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let candidate: Vec<f64> = coefs.iter().zip(&direction).map(|(c, d)| c + step * d).collect();
            let cand_ll = log_likelihood(design, &candidate);
            if cand_ll.is_finite() && cand_ll >= ll {
                coefs = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        history.push(ll);
    }
    if !converged {
        converged = max_abs(&log_likelihood_gradient(design, &coefs)) < opts.tol;
    }
    if !ll.is_finite() {
        return Err(GlmError::NonFiniteLikelihood);
    }

    let standard_errors = standard_errors(information(design, &coefs));
    // a singular information matrix at the optimum means quasi-complete separation
    let separation = separated(design, &coefs, converged) || standard_errors.iter().any(|s| s.is_nan());
    Ok(ModelFit {
        names: design.names().to_vec(),
        coefficients: coefs,
        standard_errors,
        converged: converged && !separation,
        separation,
        iterations,
        log_likelihood: ll,
        history,
    })
}

/// Ordinary least squares on the 0/1 outcome, for comparison runs only.
/// `log_likelihood` holds `-RSS / 2`.
pub fn fit_least_squares(design: &DesignMatrix) -> Result<ModelFit, GlmError> {
    check_fittable(design)?;
    let (n, p) = (design.n_rows(), design.n_cols());
    let x = DMatrix::from_row_slice(n, p, &design.rows().flatten().copied().collect::<Vec<_>>());
    let y = DVector::from_iterator(n, design.labels().iter().map(|&b| f64::from(u8::from(b))));
    let xtx = x.transpose() * &x;
    let chol = xtx.cholesky().ok_or(GlmError::Singular)?;
    let coefs = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &coefs;
    let rss = resid.dot(&resid);
    let sigma2 = if n > p { rss / (n - p) as f64 } else { f64::NAN };
    let inv = chol.inverse();
    let standard_errors = (0..p).map(|i| (sigma2 * inv[(i, i)]).max(0.0).sqrt()).collect();
    Ok(ModelFit {
        names: design.names().to_vec(),
        coefficients: coefs.iter().copied().collect(),
        standard_errors,
        converged: true,
        separation: false,
        iterations: 1,
        log_likelihood: -0.5 * rss,
        history: vec![-0.5 * rss],
    })
}

/// Fitted probabilities `1 / (1 + exp(-A x))` for every row.
pub fn predict_scores(fit: &ModelFit, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
    if fit.names != design.names() {
        return Err(GlmError::ColumnMismatch);
    }
    Ok(linear_predictor(design, &fit.coefficients)
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences with step `h`. Relative error is measured against
/// `max(1, |analytic|, |numeric|)`.
pub fn gradient_check(design: &DesignMatrix, coefs: &[f64], h: f64) -> f64 {
    let analytic = log_likelihood_gradient(design, coefs);
    let mut worst: f64 = 0.0;
    let mut probe = coefs.to_vec();
    for j in 0..coefs.len() {
        probe[j] = coefs[j] + h;
        let up = log_likelihood(design, &probe);
        probe[j] = coefs[j] - h;
        let down = log_likelihood(design, &probe);
        probe[j] = coefs[j];
        let numeric = (up - down) / (2.0 * h);
        let scale = 1f64.max(analytic[j].abs()).max(numeric.abs());
        worst = worst.max((analytic[j] - numeric).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_only(y: &[bool]) -> DesignMatrix {
        DesignMatrix::new(vec!["intercept".into()], vec![1.0; y.len()], y.to_vec()).unwrap()
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DesignMatrix {
        let names = (0..d).map(|j| format!("x{j}")).collect::<Vec<_>>();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y = (0..n).map(|i| i % 3 != 0 || rng.random_bool(0.3)).collect();
        DesignMatrix::with_intercept(&names, &rows, y).unwrap()
    }

    #[test]
    fn intercept_matches_logit_of_rate() {
        let fit = fit_logistic(&intercept_only(&[true, true, true, false]), FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn independent_balanced_feature_has_zero_coefficient() {
        // every x value appears once with each label
        let names = vec!["x".to_string()];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for x in [-1.0, 0.5, 2.0] {
            for label in [true, false] {
                rows.push(vec![x]);
                y.push(label);
            }
        }
        let d = DesignMatrix::with_intercept(&names, &rows, y).unwrap();
        let fit = fit_logistic(&d, FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            fit.coefficients.iter().all(|c| c.abs() < 1e-8),
            "{:?}",
            fit.coefficients
        );
    }

    #[test]
    fn separable_data_flagged() {
        let names = vec!["x".to_string()];
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = (0..10).map(|i| i >= 5).collect();
        let d = DesignMatrix::with_intercept(&names, &rows, y).unwrap();
        let fit = fit_logistic(&d, FitOptions::default()).unwrap();
        assert!(fit.separation);
        assert!(!fit.converged);
    }

    #[test]
    fn history_is_monotone_and_gradient_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let d = random_design(&mut rng, 60, 4);
            let fit = fit_logistic(&d, FitOptions::default()).unwrap();
            assert!(fit.history.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
            if fit.converged {
                assert!(max_abs(&log_likelihood_gradient(&d, &fit.coefficients)) < 1e-8);
                assert!(fit.standard_errors.iter().all(|s| *s > 0.0));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random_design(&mut rng, 40, 5);
        let coefs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(gradient_check(&d, &coefs, 1e-5) < 1e-6);
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_design(&mut rng, 30, 2);
        let coefs = vec![0.7, -1.3, 2.1];
        let e1 = gradient_check(&d, &coefs, 0.02);
        let e2 = gradient_check(&d, &coefs, 0.04);
        let ratio = e2 / e1;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gradient_is_zero_at_the_mle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_design(&mut rng, 80, 3);
        let fit = fit_logistic(&d, FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(max_abs(&log_likelihood_gradient(&d, &fit.coefficients)) < 1e-8);
    }

    #[test]
    fn flipping_labels_negates_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_design(&mut rng, 80, 3);
        let flipped = DesignMatrix::new(
            d.names().to_vec(),
            d.rows().flatten().copied().collect(),
            d.labels().iter().map(|b| !b).collect(),
        )
        .unwrap();
        let a = fit_logistic(&d, FitOptions::default()).unwrap();
        let b = fit_logistic(&flipped, FitOptions::default()).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x + y).abs() < 1e-8);
        }
        let sa = predict_scores(&a, &d).unwrap();
        let sb = predict_scores(&b, &flipped).unwrap();
        let auc_a = crate::glm::auc(&sa, d.labels()).unwrap();
        let auc_b = crate::glm::auc(&sb, flipped.labels()).unwrap();
        assert!((auc_a - auc_b).abs() < 1e-12);
        let auc_cross = crate::glm::auc(&sa, flipped.labels()).unwrap();
        assert!((auc_cross - (1.0 - auc_a)).abs() < 1e-12);
    }

    #[test]
    fn predict_checks_columns_and_is_half_at_zero() {
        let d = intercept_only(&[true, false]);
        let fit = ModelFit {
            names: vec!["intercept".into()],
            coefficients: vec![0.0],
            standard_errors: vec![1.0],
            converged: true,
            separation: false,
            iterations: 0,
            log_likelihood: 0.0,
            history: vec![],
        };
        assert_eq!(predict_scores(&fit, &d).unwrap(), vec![0.5, 0.5]);
        let other = DesignMatrix::new(vec!["x".into()], vec![1.0, 2.0], vec![true, false]).unwrap();
        assert_eq!(predict_scores(&fit, &other), Err(GlmError::ColumnMismatch));
        assert!(sigmoid(1.0) < sigmoid(1.0 + 1e-9));
    }

    #[test]
    fn least_squares_matches_class_rate() {
        let fit = fit_least_squares(&intercept_only(&[true, true, true, false])).unwrap();
        assert!((fit.coefficients[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(
            fit_logistic(&intercept_only(&[true, true]), FitOptions::default()),
            Err(GlmError::SingleClass)
        );
    }
}
