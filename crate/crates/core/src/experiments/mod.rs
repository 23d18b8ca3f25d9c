//! Analyses built on the feature, label and model layers: AUC sweeps,
//! coefficient tables, effort and social-timing studies and population
//! statistics.

mod audit;
mod coefficients;
mod descriptive;
mod design;
mod sweeps;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binarize::{median_cutoff, CutoffError, CutoffMethod, CutoffTable};
use crate::data::{DataError, Dataset, Measure, Streamer, StreamerId};
use crate::features::{features_of_window, PopularGames, RawFeatureVector};
use crate::glm::{FitOptions, GlmError};
use crate::labels::{top_decile_mask, GrowthMode, LabelError, HORIZON_MONTHS};

pub use audit::{leakage_audit, AuditReport};
pub use coefficients::{coefficient_table, CoefRow, CoefficientTable, CollinearityCheck, MeasureCoefficients};
pub use descriptive::{
    creation_offset_months, effort_analysis, population_stats, social_timing_analysis, write_tests_csv, EffortReport,
    EffortRow, GroupStats, MeasureShare, PopulationReport, TestRow, TimingReport, AFFILIATE_MINUTES, FULLTIME_HOURS,
};
pub use design::{baseline_names, behavior_names, Instance, ZScore};
pub use sweeps::{AucCurve, CellResult, CellStatus, SweepKind};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid analysis config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Cutoff(#[from] CutoffError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error("no training streamers observed through month {0}")]
    NoTrainingStreamers(u32),
    #[error("streamer {streamer} has no history at month {t}")]
    InsufficientHistory { streamer: String, t: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub split_seed: u64,
    pub test_fraction: f64,
    pub cutoff_method: CutoffMethod,
    pub growth_mode: GrowthMode,
    pub bootstrap_resamples: usize,
    pub fit: FitOptions,
    /// Fit ordinary least squares instead of logistic regression.
    pub least_squares: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            split_seed: 0,
            test_fraction: 0.2,
            cutoff_method: CutoffMethod::Argmax,
            growth_mode: GrowthMode::Fractional,
            bootstrap_resamples: 200,
            fit: FitOptions::default(),
            least_squares: false,
        }
    }
}

/// Cutoffs for one (measure, window). `degenerate` marks windows where the
/// training streamers were all in one popularity class, so the median
/// fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCutoffs {
    pub table: CutoffTable,
    pub degenerate: bool,
    pub n_train: usize,
}

type Slot<T> = Arc<OnceLock<T>>;

fn slot<K: std::hash::Hash + Eq, T>(map: &Mutex<HashMap<K, Slot<T>>>, key: K) -> Slot<T> {
    map.lock().expect("cache lock").entry(key).or_default().clone()
}

/// Marks `round(n * test_fraction)` of the (sorted) streamers as test after a
/// seeded shuffle. At least one streamer lands on each side when n >= 2.
pub fn split_streamers(ids: &[StreamerId], seed: u64, test_fraction: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(usize::from(n >= 2), n.saturating_sub(1));
    let mut test = vec![false; n];
    for &i in &order[..n_test] {
        test[i] = true;
    }
    test
}

type WindowFeatures = Arc<Vec<Option<RawFeatureVector>>>;
type CutoffKey = (Measure, u32, u32);

/// Shared state for all analyses of one dataset under one split. Window
/// features and cutoff tables are computed once and cached.
pub struct Analysis<'a> {
    dataset: &'a Dataset,
    config: AnalysisConfig,
    streamers: Vec<&'a Streamer>,
    test: Vec<bool>,
    popular: PopularGames,
    features: Mutex<HashMap<(u32, u32), Slot<WindowFeatures>>>,
    cutoffs: Mutex<HashMap<CutoffKey, Slot<Option<Arc<FittedCutoffs>>>>>,
}

impl<'a> Analysis<'a> {
    pub fn new(dataset: &'a Dataset, config: AnalysisConfig) -> Result<Self, ExperimentError> {
        if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
            return Err(ExperimentError::Config(format!(
                "test_fraction must be in (0, 1), got {}",
                config.test_fraction
            )));
        }
        let streamers: Vec<&Streamer> = dataset.streamers().collect();
        let ids: Vec<StreamerId> = streamers.iter().map(|s| s.id.clone()).collect();
        let test = split_streamers(&ids, config.split_seed, config.test_fraction);
        Ok(Self {
            dataset,
            config,
            streamers,
            test,
            popular: PopularGames::from_table(&dataset.game_table),
            features: Mutex::default(),
            cutoffs: Mutex::default(),
        })
    }

    /// Same caches, but every streamer is a training streamer.
    fn all_train(dataset: &'a Dataset, config: AnalysisConfig) -> Self {
        let streamers: Vec<&Streamer> = dataset.streamers().collect();
        Self {
            dataset,
            config,
            test: vec![false; streamers.len()],
            streamers,
            popular: PopularGames::from_table(&dataset.game_table),
            features: Mutex::default(),
            cutoffs: Mutex::default(),
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn is_test(&self, id: &StreamerId) -> Option<bool> {
        self.streamers.iter().position(|s| &s.id == id).map(|i| self.test[i])
    }

    pub fn train_ids(&self) -> Vec<StreamerId> {
        self.streamers
            .iter()
            .zip(&self.test)
            .filter(|(_, &t)| !t)
            .map(|(s, _)| s.id.clone())
            .collect()
    }

    /// Last window end covered by the analyses.
    pub fn horizon(&self) -> u32 {
        HORIZON_MONTHS
    }

    /// Raw features of every streamer over `[t, t + delta)`; `None` for
    /// streamers whose record ends before the window does. Cache
    /// initializers stay sequential: a rayon worker blocked on a slot it is
    /// itself filling would deadlock.
    pub fn window_features(&self, t: u32, delta: u32) -> Arc<Vec<Option<RawFeatureVector>>> {
        slot(&self.features, (t, delta))
            .get_or_init(|| {
                Arc::new(
                    self.streamers
                        .iter()
                        .map(|s| {
                            s.window_events(t, delta)
                                .ok()
                                .map(|w| features_of_window(s, &self.popular, &w))
                        })
                        .collect(),
                )
            })
            .clone()
    }

    /// Cutoffs for `measure` over `[t, t + delta)`, fit on training streamers
    /// observed through month `t + delta`. "Popular" means top decile of the
    /// measure at `t + delta` among those streamers.
    pub fn cutoffs(&self, measure: Measure, t: u32, delta: u32) -> Option<Arc<FittedCutoffs>> {
        slot(&self.cutoffs, (measure, t, delta))
            .get_or_init(|| self.fit_cutoffs(measure, t, delta).map(Arc::new))
            .clone()
    }

    /// Window features of the training streamers observed through `t +
    /// delta`, with their popular/unpopular mask. These are exactly the
    /// inputs of the cutoff search.
    pub fn cutoff_inputs(&self, measure: Measure, t: u32, delta: u32) -> (Vec<RawFeatureVector>, Vec<bool>) {
        let features = self.window_features(t, delta);
        let mut values = Vec::new();
        let mut outcome = Vec::new();
        for (i, s) in self.streamers.iter().enumerate() {
            if self.test[i] {
                continue;
            }
            if let (Some(f), Some(v)) = (&features[i], s.measure_at(measure, t + delta)) {
                values.push(*f);
                outcome.push(v);
            }
        }
        let popular = top_decile_mask(&outcome);
        (values, popular)
    }

    fn fit_cutoffs(&self, measure: Measure, t: u32, delta: u32) -> Option<FittedCutoffs> {
        let (values, popular) = self.cutoff_inputs(measure, t, delta);
        if values.is_empty() {
            return None;
        }
        let method = self.config.cutoff_method;
        match CutoffTable::fit(measure, t, delta, method, &values, &popular) {
            Ok(table) => Some(FittedCutoffs {
                table,
                degenerate: false,
                n_train: values.len(),
            }),
            Err(CutoffError::SingleClass { .. }) => {
                let entries = crate::features::Feature::ALL.into_iter().map(|f| {
                    let column: Vec<f64> = values.iter().map(|v| v.get(f)).collect();
                    (f, median_cutoff(&column).expect("non-empty"))
                });
                let table = CutoffTable::from_entries(measure, t, delta, method, entries).expect("all features");
                Some(FittedCutoffs {
                    table,
                    degenerate: true,
                    n_train: values.len(),
                })
            }
            Err(e) => unreachable!("cutoff fit on validated features: {e}"),
        }
    }

    /// Every cutoff table computed so far, ordered by (measure, t, delta).
    pub fn cached_cutoffs(&self) -> Vec<Arc<FittedCutoffs>> {
        let map = self.cutoffs.lock().expect("cache lock");
        let mut keys: Vec<_> = map.keys().copied().collect();
        keys.sort();
        keys.into_iter()
            .filter_map(|k| map[&k].get().cloned().flatten())
            .collect()
    }
}
