use rayon::prelude::*;

use super::{Analysis, ExperimentError};
use crate::binarize::{binarize, RuleBits};
use crate::data::{Measure, Platform};
use crate::features::{Feature, N_FEATURES};
use crate::glm::DesignMatrix;
use crate::labels::{labels_for, Task, TaskSpec};

const MEASURE_SUMMARIES: [&str; 4] = ["current", "initial", "last_change", "mean_change"];
const N_MEASURE_COLUMNS: usize = 4 * MEASURE_SUMMARIES.len();
const AGE_COLUMN: usize = N_MEASURE_COLUMNS;
const FIRST_FLAG: usize = AGE_COLUMN + 1;
const FIRST_PAST: usize = FIRST_FLAG + 3;
pub(crate) const N_BASELINE: usize = FIRST_PAST + N_FEATURES;

/// Column names of the baseline row. Per measure: log1p of the value at t
/// and at month 0, the last monthly log change and the mean monthly log
/// change; then account age, third-party account flags, and per feature the
/// fraction of past one-month windows in which the rule bit was set.
pub fn baseline_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_BASELINE);
    for m in Measure::ALL {
        for s in MEASURE_SUMMARIES {
            names.push(format!("{}_{s}", m.name()));
        }
    }
    names.push("account_age".to_string());
    for p in Platform::ALL {
        names.push(format!("has_{}", p.name()));
    }
    for f in Feature::ALL {
        names.push(format!("past_{}", f.name()));
    }
    names
}

/// The 24 rule bits appended by the behavior model, named by feature.
pub fn behavior_names() -> Vec<String> {
    Feature::ALL.iter().map(|f| f.name().to_string()).collect()
}

fn is_flag(baseline_col: usize) -> bool {
    (FIRST_FLAG..FIRST_PAST).contains(&baseline_col)
}

/// One (streamer, window) row before standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub streamer: usize,
    pub t: u32,
    pub label: bool,
    pub test: bool,
    pub baseline: Vec<f64>,
    pub bits: RuleBits,
}

/// Standardization of one continuous baseline column, fit on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

impl ZScore {
    fn apply(&self, x: f64) -> f64 {
        if self.sd > 0.0 {
            (x - self.mean) / self.sd
        } else {
            x - self.mean
        }
    }
}

/// Mean and population standard deviation of every continuous baseline
/// column over `rows`, in row order.
pub(crate) fn fit_zscores<'r>(rows: impl Iterator<Item = &'r [f64]> + Clone) -> Vec<ZScore> {
    let names = baseline_names();
    (0..N_BASELINE)
        .filter(|&c| !is_flag(c))
        .map(|c| {
            let n = rows.clone().count() as f64;
            let mean = rows.clone().map(|r| r[c]).sum::<f64>() / n;
            let var = rows.clone().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            ZScore {
                column: names[c].clone(),
                mean,
                sd: var.sqrt(),
            }
        })
        .collect()
}

impl Analysis<'_> {
    /// Everything known about a streamer at the start of month `t`, with
    /// past rule bits binarized by the cutoffs of `measure`.
    pub fn baseline_row(&self, idx: usize, measure: Measure, t: u32) -> Result<Vec<f64>, ExperimentError> {
        let s = self.streamers[idx];
        let history = || ExperimentError::InsufficientHistory {
            streamer: s.id.to_string(),
            t,
        };
        if t == 0 || s.months() <= t {
            return Err(history());
        }
        let mut row = Vec::with_capacity(N_BASELINE);
        for m in Measure::ALL {
            let at = |month: u32| s.measure_at(m, month).expect("month in range").ln_1p();
            let (current, initial, previous) = (at(t), at(0), at(t - 1));
            row.extend([current, initial, current - previous, (current - initial) / f64::from(t)]);
        }
        row.push(f64::from(t));
        let start = s.month_start(t);
        for p in Platform::ALL {
            let has = s.accounts.created(p).is_some_and(|c| c <= start);
            row.push(f64::from(u8::from(has)));
        }
        let mut counts = [0u32; N_FEATURES];
        for month in 0..t {
            let raw = self.window_features(month, 1)[idx].ok_or_else(history)?;
            let cutoffs = self
                .cutoffs(measure, month, 1)
                .ok_or(ExperimentError::NoTrainingStreamers(month + 1))?;
            for (c, bit) in counts.iter_mut().zip(binarize(&raw, &cutoffs.table).0) {
                *c += u32::from(bit);
            }
        }
        row.extend(counts.iter().map(|&c| f64::from(c) / f64::from(t)));
        Ok(row)
    }

    /// Rule bits over `[t, t + delta)` under the training cutoffs.
    pub fn behavior_bits(&self, idx: usize, measure: Measure, t: u32, delta: u32) -> Result<RuleBits, ExperimentError> {
        let raw = self.window_features(t, delta)[idx].ok_or_else(|| ExperimentError::InsufficientHistory {
            streamer: self.streamers[idx].id.to_string(),
            t: t + delta,
        })?;
        let cutoffs = self
            .cutoffs(measure, t, delta)
            .ok_or(ExperimentError::NoTrainingStreamers(t + delta))?;
        Ok(binarize(&raw, &cutoffs.table))
    }

    /// Labeled rows for every streamer observed through `t + delta`, in
    /// streamer order.
    pub fn instances(
        &self,
        task: Task,
        measure: Measure,
        t: u32,
        delta: u32,
    ) -> Result<Vec<Instance>, ExperimentError> {
        let spec = TaskSpec::new(task, measure, t, delta)?;
        let labels = labels_for(self.dataset, spec, self.config.growth_mode)?;
        let rows: Vec<Option<Instance>> = self
            .streamers
            .par_iter()
            .enumerate()
            .map(|(idx, s)| {
                let Some(label) = labels.get(&s.id) else {
                    return Ok(None);
                };
                Ok(Some(Instance {
                    streamer: idx,
                    t,
                    label,
                    test: self.test[idx],
                    baseline: self.baseline_row(idx, measure, t)?,
                    bits: self.behavior_bits(idx, measure, t, delta)?,
                }))
            })
            .collect::<Result<_, ExperimentError>>()?;
        Ok(rows.into_iter().flatten().collect())
    }

    /// Baseline rows of training streamers observed through `t + delta`,
    /// for each t in order. Used to refit standardization independently.
    pub(crate) fn train_baseline_rows(
        &self,
        measure: Measure,
        delta: u32,
        ts: &[u32],
    ) -> Result<Vec<Vec<f64>>, ExperimentError> {
        let mut rows = Vec::new();
        for &t in ts {
            for (idx, s) in self.streamers.iter().enumerate() {
                if !self.test[idx] && s.months() > t + delta {
                    rows.push(self.baseline_row(idx, measure, t)?);
                }
            }
        }
        Ok(rows)
    }
}

/// Standardized train/test designs for one cell. Columns are the intercept,
/// the surviving baseline columns and then the surviving behavior bits, so
/// the leading `n_cur` columns are exactly the baseline model.
pub(crate) struct Prepared {
    pub train: DesignMatrix,
    pub test: DesignMatrix,
    pub n_cur: usize,
    pub dropped: Vec<(String, String)>,
    pub zscores: Vec<ZScore>,
}

fn full_row(inst: &Instance, zscores: &[ZScore]) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + N_BASELINE + N_FEATURES);
    row.push(1.0);
    let mut z = zscores.iter();
    for (c, &x) in inst.baseline.iter().enumerate() {
        row.push(if is_flag(c) {
            x
        } else {
            z.next().expect("one per column").apply(x)
        });
    }
    row.extend(inst.bits.0.iter().map(|&b| f64::from(u8::from(b))));
    row
}

fn is_binary_column(c: usize) -> bool {
    c > N_BASELINE || is_flag(c.wrapping_sub(1))
}

/// Relative Schur-complement threshold below which a column counts as a
/// linear combination of earlier ones.
const DEPENDENT_TOL: f64 = 1e-9;

pub(crate) fn prepare(instances: &[Instance]) -> Result<Prepared, String> {
    let train: Vec<&Instance> = instances.iter().filter(|i| !i.test).collect();
    let test: Vec<&Instance> = instances.iter().filter(|i| i.test).collect();
    if train.is_empty() || test.is_empty() {
        return Err(format!("{} training and {} test rows", train.len(), test.len()));
    }
    let zscores = fit_zscores(train.iter().map(|i| i.baseline.as_slice()));

    let mut names = vec!["intercept".to_string()];
    names.extend(baseline_names());
    names.extend(behavior_names());
    let p = names.len();
    let x_train: Vec<Vec<f64>> = train.iter().map(|i| full_row(i, &zscores)).collect();
    let y_train: Vec<bool> = train.iter().map(|i| i.label).collect();

    let mut dropped = Vec::new();
    let mut candidates = vec![0];
    for c in 1..p {
        let first = x_train[0][c];
        if x_train.iter().all(|r| r[c] == first) {
            dropped.push((names[c].clone(), "zero variance".to_string()));
            continue;
        }
        if is_binary_column(c) {
            let one_class = |value: f64| {
                let mut labels = x_train
                    .iter()
                    .zip(&y_train)
                    .filter(|(r, _)| r[c] == value)
                    .map(|(_, &y)| y);
                let first = labels.next();
                first.is_some() && labels.all(|y| Some(y) == first)
            };
            if one_class(0.0) || one_class(1.0) {
                dropped.push((names[c].clone(), "one-class support".to_string()));
                continue;
            }
        }
        candidates.push(c);
    }

    // Gram matrix over candidates, then greedy independent subset in column order
    let k = candidates.len();
    let mut gram = vec![0.0; k * k];
    for r in &x_train {
        for (a, &ca) in candidates.iter().enumerate() {
            let xa = r[ca];
            if xa == 0.0 {
                continue;
            }
            for (b, &cb) in candidates.iter().enumerate().take(a + 1) {
                gram[a * k + b] += xa * r[cb];
            }
        }
    }
    let g = |a: usize, b: usize| if b <= a { gram[a * k + b] } else { gram[b * k + a] };
    let mut kept: Vec<usize> = Vec::new();
    let mut chol: Vec<Vec<f64>> = Vec::new();
    for a in 0..k {
        let mut z = Vec::with_capacity(kept.len());
        for (i, &b) in kept.iter().enumerate() {
            let dot: f64 = (0..i).map(|j| chol[i][j] * z[j]).sum();
            z.push((g(a, b) - dot) / chol[i][i]);
        }
        let residual = g(a, a) - z.iter().map(|v| v * v).sum::<f64>();
        if residual > DEPENDENT_TOL * g(a, a) {
            z.push(residual.sqrt());
            chol.push(z);
            kept.push(a);
        } else {
            dropped.push((names[candidates[a]].clone(), "linearly dependent".to_string()));
        }
    }
    let columns: Vec<usize> = kept.iter().map(|&a| candidates[a]).collect();
    let n_cur = columns.iter().filter(|&&c| c <= N_BASELINE).count();

    let matrix = |rows: &[&Instance]| -> Result<DesignMatrix, String> {
        let mut data = Vec::with_capacity(rows.len() * columns.len());
        for inst in rows {
            let full = full_row(inst, &zscores);
            data.extend(columns.iter().map(|&c| full[c]));
        }
        let kept_names = columns.iter().map(|&c| names[c].clone()).collect();
        DesignMatrix::new(kept_names, data, rows.iter().map(|i| i.label).collect()).map_err(|e| e.to_string())
    };
    Ok(Prepared {
        train: matrix(&train)?,
        test: matrix(&test)?,
        n_cur,
        dropped,
        zscores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(baseline: Vec<f64>, bits: [bool; N_FEATURES], label: bool, test: bool) -> Instance {
        Instance {
            streamer: 0,
            t: 1,
            label,
            test,
            baseline,
            bits: RuleBits(bits),
        }
    }

    #[test]
    fn names_have_fixed_width() {
        assert_eq!(baseline_names().len(), N_BASELINE);
        assert_eq!(behavior_names().len(), N_FEATURES);
        assert!(baseline_names().iter().all(|n| !behavior_names().contains(n)));
    }

    #[test]
    fn prepare_drops_constant_duplicate_and_separating_columns() {
        let mut rows = Vec::new();
        for i in 0..40 {
            let mut base = vec![0.0; N_BASELINE];
            base[0] = (i % 7) as f64;
            base[1] = 2.0 * base[0] + 1.0; // affine copy of column 0
            base[2] = ((i * 3) % 5) as f64;
            let mut bits = [false; N_FEATURES];
            bits[0] = i % 2 == 0;
            bits[1] = i == 3; // single positive row
            let label = i % 3 == 0 || i % 5 == 1;
            rows.push(instance(base, bits, label, i % 5 == 0));
        }
        let prepared = prepare(&rows).unwrap();
        let names = prepared.train.names();
        assert_eq!(names[0], "intercept");
        assert!(names.contains(&baseline_names()[0]));
        assert!(!names.contains(&baseline_names()[1]));
        assert!(names.contains(&"broadcast_gap".to_string()));
        assert!(!names.contains(&"n_broadcast".to_string()));
        assert_eq!(prepared.n_cur, 3);
        assert_eq!(prepared.train.n_cols(), 4);
        // training columns are standardized
        let col: Vec<f64> = prepared.train.rows().map(|r| r[1]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12);
    }
}
