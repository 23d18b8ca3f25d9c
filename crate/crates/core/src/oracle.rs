//! Built-in oracle suite: each fast implementation is compared with a slow,
//! independently written reference on random instances.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binarize::compute_cutoff;
use crate::data::{Broadcast, SECONDS_PER_DAY, SECONDS_PER_MONTH};
use crate::features::sched_regularity;
use crate::glm::{auc, fit_logistic, log_likelihood, log_likelihood_gradient, welch_t_test, DesignMatrix, FitOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl OracleCheck {
    pub fn line(&self) -> String {
        format!(
            "{} {} {} ({:.3}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> OracleCheck {
    let start = Instant::now();
    let (passed, detail) = f();
    OracleCheck {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// All-pairs AUC: a positive ranked above a negative scores 1, a tie 1/2.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    y[0] = true;
    y[1] = false;
    y
}

pub fn check_auc(seed: u64, instances: usize) -> OracleCheck {
    timed("auc_pair_count", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let n = rng.random_range(2..=200);
            let y = random_labels(&mut rng, n);
            // coarse scores so that ties are common
            let levels = rng.random_range(2..=50);
            let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 7.0).collect();
            let fast = auc(&s, &y).expect("both classes");
            worst = worst.max((fast - brute_force_auc(&s, &y)).abs());
        }
        (worst < 1e-12, format!("max_abs_diff={worst:e} instances={instances}"))
    })
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DesignMatrix {
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    DesignMatrix::new(names, data, random_labels(rng, n)).expect("valid shape")
}

/// Central differences of the log-likelihood against the analytic gradient.
pub fn check_gradient(seed: u64, instances: usize, h: f64) -> OracleCheck {
    timed("gradient_finite_difference", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let n = rng.random_range(2..=50);
            let d = rng.random_range(1..=10);
            let design = random_design(&mut rng, n, d);
            let coefs: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let analytic = log_likelihood_gradient(&design, &coefs);
            for j in 0..d {
                let mut up = coefs.clone();
                let mut down = coefs.clone();
                up[j] += h;
                down[j] -= h;
                let numeric = (log_likelihood(&design, &up) - log_likelihood(&design, &down)) / (2.0 * h);
                let scale = analytic[j].abs().max(numeric.abs()).max(1.0);
                worst = worst.max((analytic[j] - numeric).abs() / scale);
            }
        }
        (
            worst < 1e-6,
            format!("max_rel_err={worst:e} h={h} instances={instances}"),
        )
    })
}

/// Intercept-only fits against the closed form `ln(r / (1 - r))`.
pub fn check_intercept() -> OracleCheck {
    timed("intercept_closed_form", || {
        let mut worst: f64 = 0.0;
        for r in [0.25, 0.5, 0.75] {
            let n = 200;
            let positives = (r * n as f64) as usize;
            let y: Vec<bool> = (0..n).map(|i| i < positives).collect();
            let design = DesignMatrix::new(vec!["intercept".into()], vec![1.0; n], y).expect("valid shape");
            let fit = fit_logistic(&design, FitOptions::default()).expect("fittable");
            let err = (fit.coefficients[0] - (r / (1.0 - r)).ln()).abs();
            worst = worst.max(if fit.converged { err } else { f64::INFINITY });
        }
        (worst < 1e-6, format!("max_abs_err={worst:e}"))
    })
}

/// Exhaustive 101-point scan with integer ranks and direct counting.
pub fn exhaustive_cutoff(values: &[f64], popular: &[bool]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let n_pop = popular.iter().filter(|&&p| p).count();
    let n_unpop = n - n_pop;
    let mut best_score = 0;
    let mut best_i = 0;
    for i in 0..=100usize {
        let rank = (i * n).div_ceil(100).max(1);
        let c = sorted[rank - 1];
        let pop = values.iter().zip(popular).filter(|(v, p)| **p && **v > c).count();
        let unpop = values.iter().zip(popular).filter(|(v, p)| !**p && **v > c).count();
        // |pop/n_pop - unpop/n_unpop| scaled by n_pop * n_unpop
        let score = (pop * n_unpop).abs_diff(unpop * n_pop);
        if i == 0 || score > best_score {
            best_score = score;
            best_i = i;
        }
    }
    let k = best_i as f64 / 100.0;
    (k, sorted[(best_i * n).div_ceil(100).max(1) - 1])
}

fn random_feature(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=300);
    let levels = rng.random_range(1..=40);
    let shift = rng.random_range(0.0..1.0);
    let values: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect();
    let mut popular: Vec<bool> = values
        .iter()
        .map(|v| rng.random_bool((0.1 + shift * v / f64::from(levels)).min(1.0)))
        .collect();
    popular[0] = true;
    popular[1] = false;
    (values, popular)
}

/// The fast search against the exhaustive scan, plus invariance of the
/// resulting bits under strictly increasing transforms.
pub fn check_cutoffs(seed: u64, instances: usize) -> OracleCheck {
    timed("cutoff_exhaustive_scan", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transforms: [fn(f64) -> f64; 3] = [|x| 3.0 * x + 7.0, |x| x * x * x, |x| (x / 8.0).exp()];
        let mut mismatches = 0;
        let mut bit_changes = 0;
        for _ in 0..instances {
            let (values, popular) = random_feature(&mut rng);
            let fast = compute_cutoff(&values, &popular).expect("both classes");
            if (fast.k_star, fast.c_f) != exhaustive_cutoff(&values, &popular) {
                mismatches += 1;
            }
            let bits: Vec<bool> = values.iter().map(|&v| v > fast.c_f).collect();
            for f in transforms {
                let moved: Vec<f64> = values.iter().map(|&v| f(v)).collect();
                let c = compute_cutoff(&moved, &popular).expect("both classes");
                let moved_bits: Vec<bool> = moved.iter().map(|&v| v > c.c_f).collect();
                if moved_bits != bits || c.k_star != fast.k_star {
                    bit_changes += 1;
                }
            }
        }
        (
            mismatches == 0 && bit_changes == 0,
            format!("scan_mismatches={mismatches} transform_changes={bit_changes} instances={instances}"),
        )
    })
}

/// Week-by-weekday grid of the window, filled cell by cell.
pub fn tabulated_regularity(window_start: i64, window_days: i64, broadcasts: &[Broadcast]) -> f64 {
    let weeks = ((window_days + 6) / 7).max(1) as usize;
    let mut grid = vec![[false; 7]; weeks];
    for b in broadcasts {
        let day = (b.start - window_start) / SECONDS_PER_DAY;
        grid[(day / 7) as usize][(day % 7) as usize] = true;
    }
    let mut total = 0;
    for weekday in 0..7 {
        let n = grid.iter().filter(|week| week[weekday]).count();
        total += n.saturating_sub(1);
    }
    total as f64
}

pub fn check_regularity(seed: u64, instances: usize) -> OracleCheck {
    timed("schedule_regularity_tabulation", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mismatches = 0;
        for _ in 0..instances {
            let months = rng.random_range(1..=6);
            let window_start = 1_451_606_400 + rng.random_range(0..1_000) * SECONDS_PER_DAY;
            let span = months * SECONDS_PER_MONTH;
            let n = rng.random_range(0..=60);
            let weekly = rng.random_bool(0.5);
            let mut broadcasts: Vec<Broadcast> = (0..n)
                .map(|_| {
                    let offset = if weekly {
                        // a few fixed weekdays with random skipped weeks
                        let week = rng.random_range(0..span / (7 * SECONDS_PER_DAY));
                        let weekday = [1, 3, 5][rng.random_range(0..3)];
                        (week * 7 + weekday) * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY)
                    } else {
                        rng.random_range(0..span)
                    };
                    Broadcast {
                        start: window_start + offset,
                        duration_min: 60.0,
                        games: Vec::new(),
                        avg_concurrent_viewers: 1.0,
                        had_zero_viewers: false,
                    }
                })
                .collect();
            broadcasts.sort_by_key(|b| b.start);
            let fast = sched_regularity(window_start, &broadcasts);
            if fast != tabulated_regularity(window_start, span / SECONDS_PER_DAY, &broadcasts) {
                mismatches += 1;
            }
        }
        (
            mismatches == 0,
            format!("mismatches={mismatches} instances={instances}"),
        )
    })
}

/// Welch's test on a hand-derived example and on identical samples.
pub fn check_welch() -> OracleCheck {
    timed("welch_hand_example", || {
        let r = welch_t_test(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).expect("valid samples");
        let t = 2.0 / (5.0f64 / 3.0).sqrt();
        let df = (25.0 / 9.0) / (17.0 / 18.0);
        let same = welch_t_test(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).expect("valid samples");
        let passed = (r.t - t).abs() < 1e-3
            && (r.df - df).abs() < 1e-3
            && same.t.abs() < 1e-9
            && (same.p_value - 1.0).abs() < 1e-9;
        (
            passed,
            format!(
                "t={:.4} df={:.4} identical_t={} identical_p={}",
                r.t, r.df, same.t, same.p_value
            ),
        )
    })
}

/// Every oracle with its default instance counts.
pub fn run_all(seed: u64) -> Vec<OracleCheck> {
    vec![
        check_auc(seed, 200),
        check_gradient(seed, 50, 1e-5),
        check_intercept(),
        check_cutoffs(seed, 100),
        check_regularity(seed, 100),
        check_welch(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_counts_ties_as_half() {
        assert_eq!(brute_force_auc(&[1.0, 1.0], &[true, false]), 0.5);
        assert_eq!(brute_force_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]), 1.0);
    }

    #[test]
    fn exhaustive_scan_on_separated_values() {
        let values = [0.0, 0.0, 10.0, 10.0];
        let popular = [false, false, true, true];
        let (k, c) = exhaustive_cutoff(&values, &popular);
        assert_eq!(c, 0.0);
        assert_eq!(k, 0.0);
    }

    #[test]
    fn tabulation_matches_worked_example() {
        // Mondays and Wednesdays for three weeks
        let start = 0;
        let bs: Vec<Broadcast> = [0, 2, 7, 9, 14, 16]
            .iter()
            .map(|d| Broadcast {
                start: start + d * SECONDS_PER_DAY,
                duration_min: 60.0,
                games: vec![],
                avg_concurrent_viewers: 0.0,
                had_zero_viewers: true,
            })
            .collect();
        assert_eq!(tabulated_regularity(start, 21, &bs), 4.0);
    }

    #[test]
    fn suite_passes() {
        for check in run_all(11) {
            assert!(check.passed, "{}", check.line());
        }
    }
}
