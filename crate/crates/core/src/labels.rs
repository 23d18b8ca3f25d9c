//! Binary outcomes for the prediction tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::data::{Dataset, Measure, StreamerId};

/// Analysis horizon in months (first year of streaming).
pub const HORIZON_MONTHS: u32 = 12;
/// Concurrent-viewer gain per month needed to reach partner level in two years.
pub const SELF_GROWTH_RATE: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("self-growth is only defined for concurrent_viewers (got {0})")]
    WrongMeasure(Measure),
    #[error("invalid window t={t} delta={delta}: need t >= 1, delta >= 1, t + delta <= {HORIZON_MONTHS}")]
    BadWindow { t: u32, delta: u32 },
    #[error("no streamer has snapshots through month {0}")]
    MissingSnapshot(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Absolute,
    RelativeGrowth,
    SelfGrowth,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Absolute, Task::RelativeGrowth, Task::SelfGrowth];

    pub fn name(self) -> &'static str {
        match self {
            Task::Absolute => "absolute",
            Task::RelativeGrowth => "relative_growth",
            Task::SelfGrowth => "self_growth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Measures this task is defined for.
    pub fn measures(self) -> &'static [Measure] {
        match self {
            Task::SelfGrowth => &[Measure::ConcurrentViewers],
            _ => &Measure::ALL,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How relative growth is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowthMode {
    /// (end - start) / max(start, 1)
    #[default]
    Fractional,
    /// end - start
    AbsoluteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskSpec {
    pub task: Task,
    pub measure: Measure,
    pub t: u32,
    pub delta: u32,
}

impl TaskSpec {
    pub fn new(task: Task, measure: Measure, t: u32, delta: u32) -> Result<Self, LabelError> {
        if task == Task::SelfGrowth && measure != Measure::ConcurrentViewers {
            return Err(LabelError::WrongMeasure(measure));
        }
        if t < 1 || delta < 1 || t + delta > HORIZON_MONTHS {
            return Err(LabelError::BadWindow { t, delta });
        }
        Ok(Self {
            task,
            measure,
            t,
            delta,
        })
    }

    pub fn end(&self) -> u32 {
        self.t + self.delta
    }
}

/// Labels for every streamer alive through the end of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub spec: TaskSpec,
    pub labels: BTreeMap<StreamerId, bool>,
}

impl LabelSet {
    pub fn positive_rate(&self) -> f64 {
        self.labels.values().filter(|&&b| b).count() as f64 / self.labels.len() as f64
    }

    pub fn get(&self, id: &StreamerId) -> Option<bool> {
        self.labels.get(id).copied()
    }
}

/// Smallest value still in the top 10%: the `ceil(n / 10)`-th largest.
pub fn top_decile_threshold(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Some(sorted[values.len().div_ceil(10) - 1])
}

/// Marks the top 10% (boundary ties included).
pub fn top_decile_mask(values: &[f64]) -> Vec<bool> {
    match top_decile_threshold(values) {
        Some(threshold) => values.iter().map(|&v| v >= threshold).collect(),
        None => Vec::new(),
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

pub fn growth(start: f64, end: f64, mode: GrowthMode) -> f64 {
    match mode {
        GrowthMode::Fractional => (end - start) / start.max(1.0),
        GrowthMode::AbsoluteDifference => end - start,
    }
}

/// (id, value at t, value at t + delta) for streamers alive through t + delta.
fn endpoints(dataset: &Dataset, spec: &TaskSpec) -> Result<Vec<(StreamerId, f64, f64)>, LabelError> {
    let rows: Vec<_> = dataset
        .streamers()
        .filter_map(|s| {
            let start = s.measure_at(spec.measure, spec.t)?;
            let end = s.measure_at(spec.measure, spec.end())?;
            Some((s.id.clone(), start, end))
        })
        .collect();
    if rows.is_empty() {
        return Err(LabelError::MissingSnapshot(spec.end()));
    }
    Ok(rows)
}

fn collect(spec: TaskSpec, ids: impl Iterator<Item = StreamerId>, bits: impl Iterator<Item = bool>) -> LabelSet {
    LabelSet {
        spec,
        labels: ids.zip(bits).collect(),
    }
}

/// 1 iff the measure at t + delta is in the population's top 10%.
pub fn absolute_label(dataset: &Dataset, spec: TaskSpec) -> Result<LabelSet, LabelError> {
    let rows = endpoints(dataset, &spec)?;
    let values: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mask = top_decile_mask(&values);
    Ok(collect(spec, rows.into_iter().map(|r| r.0), mask.into_iter()))
}

/// 1 iff the streamer's growth over the window beats the median growth.
pub fn relative_growth_label(dataset: &Dataset, spec: TaskSpec, mode: GrowthMode) -> Result<LabelSet, LabelError> {
    let rows = endpoints(dataset, &spec)?;
    let growths: Vec<f64> = rows.iter().map(|r| growth(r.1, r.2, mode)).collect();
    let med = median(&growths).expect("non-empty");
    Ok(collect(
        spec,
        rows.into_iter().map(|r| r.0),
        growths.into_iter().map(|g| g > med),
    ))
}

/// 1 iff average concurrent viewers grew by at least 4 per month.
pub fn self_growth_label(dataset: &Dataset, spec: TaskSpec) -> Result<LabelSet, LabelError> {
    if spec.measure != Measure::ConcurrentViewers {
        return Err(LabelError::WrongMeasure(spec.measure));
    }
    let rows = endpoints(dataset, &spec)?;
    let needed = SELF_GROWTH_RATE * f64::from(spec.delta);
    Ok(collect(
        spec,
        rows.iter().map(|r| r.0.clone()),
        rows.iter().map(|r| r.2 - r.1 >= needed),
    ))
}

pub fn labels_for(dataset: &Dataset, spec: TaskSpec, mode: GrowthMode) -> Result<LabelSet, LabelError> {
    match spec.task {
        Task::Absolute => absolute_label(dataset, spec),
        Task::RelativeGrowth => relative_growth_label(dataset, spec, mode),
        Task::SelfGrowth => self_growth_label(dataset, spec),
    }
}

/// Writes `streamer,task,measure,t,delta,label` rows.
pub fn write_labels_csv<'a>(sets: impl IntoIterator<Item = &'a LabelSet>, out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["streamer", "task", "measure", "t", "delta", "label"])?;
    for set in sets {
        for (id, &bit) in &set.labels {
            w.write_record([
                id.as_str(),
                set.spec.task.name(),
                set.spec.measure.name(),
                &set.spec.t.to_string(),
                &set.spec.delta.to_string(),
                if bit { "1" } else { "0" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AccountInfo, GamePopularityTable, PopularitySnapshot, Streamer};

    /// One streamer per (followers at month 1, followers at month 3, ccv at 1, ccv at 3).
    fn dataset(rows: &[(u64, u64, f64, f64)]) -> Dataset {
        let streamers = rows.iter().enumerate().map(|(i, &(f1, f3, c1, c3))| {
            let snap = |m: u32, f: u64, c: f64| PopularitySnapshot {
                month_index: m,
                followers: f,
                avg_concurrent_viewers: c,
                cumulative_views: f,
                cheers: 0,
            };
            Streamer {
                id: StreamerId::new(format!("s{i:03}")),
                accounts: AccountInfo {
                    twitch_created: 0,
                    twitter_created: None,
                    youtube_created: None,
                    instagram_created: None,
                },
                broadcasts: vec![],
                posts: vec![],
                snapshots: vec![snap(0, 0, 0.0), snap(1, f1, c1), snap(2, f1, c1), snap(3, f3, c3)],
            }
        });
        Dataset::new(streamers, GamePopularityTable::new()).unwrap()
    }

    fn spec(task: Task, measure: Measure) -> TaskSpec {
        TaskSpec::new(task, measure, 1, 2).unwrap()
    }

    #[test]
    fn absolute_top_decile_of_ten() {
        let rows: Vec<_> = (0..10).map(|i| (1, 10 + i, 0.0, 0.0)).collect();
        let ls = absolute_label(&dataset(&rows), spec(Task::Absolute, Measure::Followers)).unwrap();
        let positives: Vec<_> = ls
            .labels
            .iter()
            .filter(|(_, &b)| b)
            .map(|(id, _)| id.as_str())
            .collect();
        assert_eq!(positives, vec!["s009"]);
    }

    #[test]
    fn absolute_ties_all_positive() {
        let rows = vec![(1, 5, 0.0, 0.0); 7];
        let ls = absolute_label(&dataset(&rows), spec(Task::Absolute, Measure::Followers)).unwrap();
        assert!(ls.labels.values().all(|&b| b));
    }

    #[test]
    fn absolute_rank_eleven_of_hundred_is_negative() {
        let rows: Vec<_> = (0..100).map(|i| (1, 1000 - i, 0.0, 0.0)).collect();
        let ls = absolute_label(&dataset(&rows), spec(Task::Absolute, Measure::Followers)).unwrap();
        assert_eq!(ls.get(&StreamerId::new("s009")), Some(true));
        assert_eq!(ls.get(&StreamerId::new("s010")), Some(false));
        assert_eq!(ls.positive_rate(), 0.1);
    }

    #[test]
    fn relative_growth_against_median() {
        // growths: 10%, 5%, 5%, 0%, 20% -> median 5%
        let rows = vec![
            (100, 110, 0.0, 0.0),
            (100, 105, 0.0, 0.0),
            (100, 105, 0.0, 0.0),
            (100, 100, 0.0, 0.0),
            (100, 120, 0.0, 0.0),
        ];
        let ls = relative_growth_label(
            &dataset(&rows),
            spec(Task::RelativeGrowth, Measure::Followers),
            GrowthMode::Fractional,
        )
        .unwrap();
        let bits: Vec<bool> = ls.labels.values().copied().collect();
        assert_eq!(bits, vec![true, false, false, false, true]);
    }

    #[test]
    fn zero_start_growth_uses_floor() {
        assert_eq!(growth(0.0, 7.0, GrowthMode::Fractional), 7.0);
        assert_eq!(growth(0.5, 7.0, GrowthMode::Fractional), 6.5);
        assert_eq!(growth(10.0, 7.0, GrowthMode::AbsoluteDifference), -3.0);
    }

    #[test]
    fn self_growth_threshold_inclusive() {
        let rows = vec![(0, 0, 10.0, 18.0), (0, 0, 10.0, 17.9), (0, 0, 10.0, 2.0)];
        let ls = self_growth_label(&dataset(&rows), spec(Task::SelfGrowth, Measure::ConcurrentViewers)).unwrap();
        let bits: Vec<bool> = ls.labels.values().copied().collect();
        assert_eq!(bits, vec![true, false, false]);

        let d3 = TaskSpec::new(Task::SelfGrowth, Measure::ConcurrentViewers, 1, 3).unwrap();
        assert_eq!(f64::from(d3.delta) * SELF_GROWTH_RATE, 12.0);
    }

    #[test]
    fn task_spec_validation() {
        assert_eq!(
            TaskSpec::new(Task::SelfGrowth, Measure::Followers, 1, 2),
            Err(LabelError::WrongMeasure(Measure::Followers))
        );
        assert!(TaskSpec::new(Task::Absolute, Measure::Followers, 0, 2).is_err());
        assert!(TaskSpec::new(Task::Absolute, Measure::Followers, 10, 3).is_err());
        assert!(TaskSpec::new(Task::Absolute, Measure::Followers, 1, 11).is_ok());
    }

    #[test]
    fn missing_snapshots_error() {
        let rows = vec![(1, 2, 0.0, 0.0)];
        let ds = dataset(&rows);
        let far = TaskSpec::new(Task::Absolute, Measure::Followers, 2, 3).unwrap();
        assert_eq!(absolute_label(&ds, far), Err(LabelError::MissingSnapshot(5)));
    }
}
