use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::design::{prepare, Prepared, ZScore};
use super::{Analysis, ExperimentError};
use crate::data::Measure;
use crate::glm::{auc, fit_least_squares, fit_logistic, fit_logistic_from, predict_scores, ModelFit};
use crate::labels::Task;
use crate::synth::mix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SweepKind {
    /// Pooled over start ages, one point per interval size.
    Interval,
    /// Fixed interval size, one point per start age.
    Age,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Interval => "interval",
            SweepKind::Age => "age",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Skipped(String),
    NotConverged(String),
}

impl CellStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped(_) => "skipped",
            CellStatus::NotConverged(_) => "not_converged",
        }
    }

    pub fn note(&self) -> &str {
        match self {
            CellStatus::Ok => "",
            CellStatus::Skipped(s) | CellStatus::NotConverged(s) => s,
        }
    }
}

/// Outcome of fitting both models on one cell. AUC fields are NaN unless
/// the status is `Ok`; log-likelihoods are set whenever both fits ran.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub sweep: SweepKind,
    pub task: Task,
    pub measure: Measure,
    pub delta: u32,
    /// Start ages pooled into this cell.
    pub ts: Vec<u32>,
    pub n_train: usize,
    pub n_test: usize,
    pub status: CellStatus,
    pub auc_cur: f64,
    pub auc_b: f64,
    pub se_cur: f64,
    pub se_b: f64,
    pub se_gain: f64,
    pub ll_cur: f64,
    pub ll_b: f64,
    pub dropped: Vec<(String, String)>,
    pub zscores: Vec<ZScore>,
    pub fit_cur: Option<ModelFit>,
    pub fit_b: Option<ModelFit>,
}

impl CellResult {
    fn empty(sweep: SweepKind, task: Task, measure: Measure, delta: u32, ts: Vec<u32>) -> Self {
        Self {
            sweep,
            task,
            measure,
            delta,
            ts,
            n_train: 0,
            n_test: 0,
            status: CellStatus::Ok,
            auc_cur: f64::NAN,
            auc_b: f64::NAN,
            se_cur: f64::NAN,
            se_b: f64::NAN,
            se_gain: f64::NAN,
            ll_cur: f64::NAN,
            ll_b: f64::NAN,
            dropped: Vec::new(),
            zscores: Vec::new(),
            fit_cur: None,
            fit_b: None,
        }
    }

    /// AUC(F_cur+b) - AUC(F_cur).
    pub fn gain(&self) -> f64 {
        self.auc_b - self.auc_cur
    }

    /// The x coordinate: interval size for interval sweeps, start age otherwise.
    pub fn x(&self) -> u32 {
        match self.sweep {
            SweepKind::Interval => self.delta,
            SweepKind::Age => self.ts[0],
        }
    }

    /// Stable label used for file names.
    pub fn key(&self) -> String {
        let mut key = format!(
            "{}_{}_{}_d{}",
            self.sweep.name(),
            self.task.name(),
            self.measure.name(),
            self.delta
        );
        if self.sweep == SweepKind::Age {
            key.push_str(&format!("_t{}", self.ts[0]));
        }
        key
    }

    fn seed_key(&self) -> u64 {
        let task = self.task as u64;
        let measure = self.measure as u64;
        ((self.sweep as u64) << 48)
            | (task << 40)
            | (measure << 32)
            | (u64::from(self.ts[0]) << 16)
            | u64::from(self.delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucCurve {
    pub sweep: SweepKind,
    pub task: Task,
    pub measure: Measure,
    pub cells: Vec<CellResult>,
}

pub(crate) struct FittedCell {
    pub prepared: Prepared,
    pub fit_cur: ModelFit,
    pub fit_b: ModelFit,
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl Analysis<'_> {
    /// Fits F_cur and F_cur+b on the pooled training rows of the given start
    /// ages. F_cur+b starts from the F_cur optimum so its training
    /// log-likelihood can only be higher.
    pub(crate) fn fit_cell(
        &self,
        task: Task,
        measure: Measure,
        delta: u32,
        ts: &[u32],
    ) -> Result<FittedCell, CellStatus> {
        let skip = |e: ExperimentError| CellStatus::Skipped(e.to_string());
        let mut instances = Vec::new();
        for &t in ts {
            instances.extend(self.instances(task, measure, t, delta).map_err(skip)?);
        }
        let prepared = prepare(&instances).map_err(CellStatus::Skipped)?;
        if !prepared.train.has_both_classes() {
            return Err(CellStatus::Skipped("training labels have a single class".into()));
        }
        if !prepared.test.has_both_classes() {
            return Err(CellStatus::Skipped("test labels have a single class".into()));
        }
        let cur_design = prepared.train.select(&(0..prepared.n_cur).collect::<Vec<_>>());
        let (fit_cur, fit_b) = if self.config.least_squares {
            let cur = fit_least_squares(&cur_design).map_err(|e| CellStatus::Skipped(e.to_string()))?;
            let b = fit_least_squares(&prepared.train).map_err(|e| CellStatus::Skipped(e.to_string()))?;
            (cur, b)
        } else {
            let cur = fit_logistic(&cur_design, self.config.fit).map_err(|e| CellStatus::Skipped(e.to_string()))?;
            let mut init = cur.coefficients.clone();
            init.resize(prepared.train.n_cols(), 0.0);
            let b = fit_logistic_from(&prepared.train, &init, self.config.fit)
                .map_err(|e| CellStatus::Skipped(e.to_string()))?;
            (cur, b)
        };
        Ok(FittedCell {
            prepared,
            fit_cur,
            fit_b,
        })
    }

    fn evaluate(&self, sweep: SweepKind, task: Task, measure: Measure, delta: u32, ts: Vec<u32>) -> CellResult {
        let mut cell = CellResult::empty(sweep, task, measure, delta, ts);
        let fitted = match self.fit_cell(task, measure, delta, &cell.ts) {
            Ok(f) => f,
            Err(status) => {
                cell.status = status;
                return cell;
            }
        };
        let FittedCell {
            prepared,
            fit_cur,
            fit_b,
        } = fitted;
        cell.n_train = prepared.train.n_rows();
        cell.n_test = prepared.test.n_rows();
        cell.ll_cur = fit_cur.log_likelihood;
        cell.ll_b = fit_b.log_likelihood;
        cell.dropped = prepared.dropped.clone();
        cell.zscores = prepared.zscores.clone();

        let mut problems = Vec::new();
        for (name, fit) in [("F_cur", &fit_cur), ("F_cur+b", &fit_b)] {
            if fit.separation {
                problems.push(format!("{name}: separation"));
            } else if !fit.converged {
                problems.push(format!("{name}: no convergence in {} iterations", fit.iterations));
            }
        }
        if !problems.is_empty() {
            cell.status = CellStatus::NotConverged(problems.join("; "));
            cell.fit_cur = Some(fit_cur);
            cell.fit_b = Some(fit_b);
            return cell;
        }

        let test_cur = prepared.test.select(&(0..prepared.n_cur).collect::<Vec<_>>());
        let scores_cur = predict_scores(&fit_cur, &test_cur).expect("same columns");
        let scores_b = predict_scores(&fit_b, &prepared.test).expect("same columns");
        let labels = prepared.test.labels();
        cell.auc_cur = auc(&scores_cur, labels).expect("both classes");
        cell.auc_b = auc(&scores_b, labels).expect("both classes");

        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.split_seed ^ mix(cell.seed_key())));
        let n = labels.len();
        let (mut a_cur, mut a_b, mut gains) = (Vec::new(), Vec::new(), Vec::new());
        let (mut s_cur, mut s_b, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..self.config.bootstrap_resamples {
            s_cur.clear();
            s_b.clear();
            y.clear();
            for _ in 0..n {
                let i = rng.random_range(0..n);
                s_cur.push(scores_cur[i]);
                s_b.push(scores_b[i]);
                y.push(labels[i]);
            }
            if let (Ok(c), Ok(b)) = (auc(&s_cur, &y), auc(&s_b, &y)) {
                a_cur.push(c);
                a_b.push(b);
                gains.push(b - c);
            }
        }
        cell.se_cur = sample_sd(&a_cur);
        cell.se_b = sample_sd(&a_b);
        cell.se_gain = sample_sd(&gains);
        cell.fit_cur = Some(fit_cur);
        cell.fit_b = Some(fit_b);
        cell
    }

    /// For each interval size, pools all start ages `1 ..= horizon - delta`
    /// into one cell and reports test AUC of both models.
    pub fn run_interval_sweep(
        &self,
        task: Task,
        measure: Measure,
        deltas: &[u32],
    ) -> Result<AucCurve, ExperimentError> {
        let mut deltas = deltas.to_vec();
        deltas.sort_unstable();
        deltas.dedup();
        let horizon = self.horizon();
        if let Some(&bad) = deltas.iter().find(|&&d| d == 0 || d >= horizon) {
            return Err(ExperimentError::Config(format!(
                "delta {bad} outside [1, {}]",
                horizon - 1
            )));
        }
        let cells = deltas
            .par_iter()
            .map(|&d| self.evaluate(SweepKind::Interval, task, measure, d, (1..=horizon - d).collect()))
            .collect();
        Ok(AucCurve {
            sweep: SweepKind::Interval,
            task,
            measure,
            cells,
        })
    }

    /// One unpooled cell per start age with a fixed interval size.
    pub fn run_age_sweep(
        &self,
        task: Task,
        measure: Measure,
        delta: u32,
        ages: &[u32],
    ) -> Result<AucCurve, ExperimentError> {
        let mut ages = ages.to_vec();
        ages.sort_unstable();
        ages.dedup();
        if let Some(&bad) = ages.iter().find(|&&t| t == 0 || t + delta > self.horizon()) {
            return Err(ExperimentError::Config(format!(
                "age {bad} with delta {delta} outside [1, {}]",
                self.horizon() - delta
            )));
        }
        let cells = ages
            .par_iter()
            .map(|&t| self.evaluate(SweepKind::Age, task, measure, delta, vec![t]))
            .collect();
        Ok(AucCurve {
            sweep: SweepKind::Age,
            task,
            measure,
            cells,
        })
    }
}
