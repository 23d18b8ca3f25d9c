use std::io::Write;

use rayon::prelude::*;

use super::sweeps::CellStatus;
use super::{Analysis, ExperimentError};
use crate::data::Measure;
use crate::features::Feature;
use crate::glm::{coef_t_test, fit_logistic_from, ModelFit};
use crate::labels::Task;

/// Absolute pairwise correlation above which two behavior bits count as
/// collinear.
pub const COLLINEAR_CORRELATION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefRow {
    pub feature: Feature,
    /// NaN when the column was dropped before fitting.
    pub coefficient: f64,
    pub std_err: f64,
    pub p_value: f64,
}

impl CoefRow {
    /// `**` below 0.05, `*` below 0.1.
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

fn stars(p: f64) -> &'static str {
    if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollinearityCheck {
    pub pairs: Vec<(Feature, Feature, f64)>,
    /// Second member of each collinear pair, removed for the refit.
    pub removed: Vec<Feature>,
    /// Features whose significance stars differ after the refit.
    pub changed: Vec<Feature>,
}

impl CollinearityCheck {
    pub fn stable(&self) -> bool {
        self.changed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureCoefficients {
    pub measure: Measure,
    pub status: CellStatus,
    pub n_train: usize,
    /// One row per feature in canonical order; empty when skipped.
    pub rows: Vec<CoefRow>,
    pub collinearity: Option<CollinearityCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub delta: u32,
    pub measures: Vec<MeasureCoefficients>,
}

fn rows_of(fit: &ModelFit) -> Vec<CoefRow> {
    let p_values = coef_t_test(fit).unwrap_or_else(|_| vec![f64::NAN; fit.coefficients.len()]);
    Feature::ALL
        .iter()
        .map(|&f| match fit.names.iter().position(|n| n == f.name()) {
            Some(i) => CoefRow {
                feature: f,
                coefficient: fit.coefficients[i],
                std_err: fit.standard_errors[i],
                p_value: p_values[i],
            },
            None => CoefRow {
                feature: f,
                coefficient: f64::NAN,
                std_err: f64::NAN,
                p_value: f64::NAN,
            },
        })
        .collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

impl Analysis<'_> {
    fn measure_coefficients(&self, measure: Measure, delta: u32) -> MeasureCoefficients {
        let ts: Vec<u32> = (1..=self.horizon() - delta).collect();
        let skipped = |status: CellStatus| MeasureCoefficients {
            measure,
            status,
            n_train: 0,
            rows: Vec::new(),
            collinearity: None,
        };
        let cell = match self.fit_cell(Task::RelativeGrowth, measure, delta, &ts) {
            Ok(c) => c,
            Err(status) => return skipped(status),
        };
        if !cell.fit_b.converged {
            let why = if cell.fit_b.separation {
                "separation"
            } else {
                "no convergence"
            };
            return skipped(CellStatus::NotConverged(format!("F_cur+b: {why}")));
        }
        let rows = rows_of(&cell.fit_b);

        let train = &cell.prepared.train;
        let bit_cols: Vec<(Feature, usize)> = Feature::ALL
            .iter()
            .filter_map(|&f| train.names().iter().position(|n| n == f.name()).map(|i| (f, i)))
            .collect();
        let columns: Vec<Vec<f64>> = bit_cols
            .iter()
            .map(|&(_, i)| train.rows().map(|r| r[i]).collect())
            .collect();
        let mut pairs = Vec::new();
        let mut removed = Vec::new();
        for a in 0..bit_cols.len() {
            for b in a + 1..bit_cols.len() {
                let r = correlation(&columns[a], &columns[b]);
                if r.abs() > COLLINEAR_CORRELATION {
                    pairs.push((bit_cols[a].0, bit_cols[b].0, r));
                    if !removed.contains(&bit_cols[b].0) && !removed.contains(&bit_cols[a].0) {
                        removed.push(bit_cols[b].0);
                    }
                }
            }
        }
        let mut changed = Vec::new();
        if !removed.is_empty() {
            let keep: Vec<usize> = (0..train.n_cols())
                .filter(|&i| !removed.iter().any(|f| f.name() == train.names()[i]))
                .collect();
            let reduced = train.select(&keep);
            let init: Vec<f64> = keep.iter().map(|&i| cell.fit_b.coefficients[i]).collect();
            match fit_logistic_from(&reduced, &init, self.config.fit) {
                Ok(refit) if refit.converged => {
                    for (before, after) in rows.iter().zip(rows_of(&refit)) {
                        if removed.contains(&before.feature) {
                            continue;
                        }
                        if before.stars() != after.stars() {
                            changed.push(before.feature);
                        }
                    }
                }
                _ => changed = Feature::ALL.iter().copied().filter(|f| !removed.contains(f)).collect(),
            }
        }
        MeasureCoefficients {
            measure,
            status: CellStatus::Ok,
            n_train: train.n_rows(),
            rows,
            collinearity: Some(CollinearityCheck {
                pairs,
                removed,
                changed,
            }),
        }
    }
}

/// F_cur+b behavior coefficients for relative growth over `delta`-month
/// intervals pooled over start ages, one column group per measure. Bits
/// enter unscaled; baseline inputs are standardized.
pub fn coefficient_table(
    analysis: &Analysis<'_>,
    measures: &[Measure],
    delta: u32,
) -> Result<CoefficientTable, ExperimentError> {
    if delta == 0 || delta >= analysis.horizon() {
        return Err(ExperimentError::Config(format!("delta {delta} out of range")));
    }
    let measures = measures
        .par_iter()
        .map(|&m| analysis.measure_coefficients(m, delta))
        .collect();
    Ok(CoefficientTable { delta, measures })
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

impl CoefficientTable {
    pub fn row(&self, measure: Measure, feature: Feature) -> Option<&CoefRow> {
        self.measures
            .iter()
            .find(|m| m.measure == measure)
            .and_then(|m| m.rows.get(feature.index()))
    }

    /// 24 feature rows; per measure the coefficient, standard error, p-value
    /// and stars. Skipped measures leave their cells empty.
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        for m in &self.measures {
            for col in ["coefficient", "std_err", "p_value", "stars"] {
                header.push(format!("{}_{col}", m.measure.name()));
            }
        }
        w.write_record(&header)?;
        for f in Feature::ALL {
            let mut record = vec![f.name().to_string()];
            for m in &self.measures {
                match m.rows.get(f.index()) {
                    Some(r) => record.extend([
                        fmt(r.coefficient),
                        fmt(r.std_err),
                        fmt(r.p_value),
                        r.stars().to_string(),
                    ]),
                    None => record.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per measure: status, training rows and the collinearity re-check.
    pub fn write_status_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "measure",
            "status",
            "note",
            "n_train",
            "collinear_pairs",
            "removed",
            "stars_stable",
            "changed",
        ])?;
        for m in &self.measures {
            let (pairs, removed, stable, changed) = match &m.collinearity {
                Some(c) => (
                    c.pairs
                        .iter()
                        .map(|(a, b, r)| format!("{a}~{b}:{r:.3}"))
                        .collect::<Vec<_>>()
                        .join(";"),
                    c.removed.iter().map(|f| f.name()).collect::<Vec<_>>().join(";"),
                    c.stable().to_string(),
                    c.changed.iter().map(|f| f.name()).collect::<Vec<_>>().join(";"),
                ),
                None => Default::default(),
            };
            w.write_record([
                m.measure.name(),
                m.status.name(),
                m.status.note(),
                &m.n_train.to_string(),
                &pairs,
                &removed,
                &stable,
                &changed,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
