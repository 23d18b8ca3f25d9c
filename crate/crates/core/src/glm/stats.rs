use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use super::{GlmError, ModelFit};

/// Two-sided tail probability of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Wald tests: `coefficient / std_err` against the standard normal.
pub fn coef_t_test(fit: &ModelFit) -> Result<Vec<f64>, GlmError> {
    if !fit.converged {
        return Err(GlmError::NotConverged);
    }
    fit.coefficients
        .iter()
        .zip(&fit.standard_errors)
        .zip(&fit.names)
        .map(|((&c, &se), name)| {
            if se.is_nan() || se <= 0.0 {
                return Err(GlmError::ZeroStdErr(name.clone()));
            }
            Ok(normal_two_sided_p(c / se))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    /// mean(a) - mean(b)
    pub effect: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test with Welch–Satterthwaite
/// degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, GlmError> {
    if a.len() < 2 || b.len() < 2 || a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(GlmError::DegenerateVariance);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if !(va > 0.0 && vb > 0.0) {
        return Err(GlmError::DegenerateVariance);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| GlmError::DegenerateVariance)?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult {
        t,
        df,
        p_value,
        effect: ma - mb,
    })
}
