//! Rule-following bits: a streamer follows rule `f` in a window when its
//! feature value is strictly above a cutoff chosen where popular and
//! unpopular streamers differ most.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::data::Measure;
use crate::features::{Feature, RawFeatureVector, N_FEATURES};

/// Number of grid steps for the percentile sweep (k = i / GRID_STEPS).
pub const GRID_STEPS: u32 = 100;

#[derive(Debug, Error)]
pub enum CutoffError {
    #[error("percentile of an empty sample")]
    Empty,
    #[error("percentile fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("non-finite feature value")]
    NonFinite,
    #[error("cutoff fitting needs both popular and unpopular streamers (popular {popular}, unpopular {unpopular})")]
    SingleClass { popular: usize, unpopular: usize },
    #[error("values and mask lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cutoff table for {measure} lacks feature {feature}")]
    MissingFeature { measure: String, feature: String },
    #[error("cutoff csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CutoffMethod {
    /// Maximize |pop_k - unpop_k| over the percentile grid.
    #[default]
    Argmax,
    /// The population median, ignoring who is popular.
    Median,
}

impl CutoffMethod {
    pub fn name(self) -> &'static str {
        match self {
            CutoffMethod::Argmax => "argmax",
            CutoffMethod::Median => "median",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "argmax" => Some(CutoffMethod::Argmax),
            "median" => Some(CutoffMethod::Median),
            _ => None,
        }
    }
}

/// Zero-based nearest-rank index for fraction `k` of `n` sorted values.
pub fn percentile_index(n: usize, k: f64) -> usize {
    let x = k * n as f64;
    let r = x.round();
    // k = i/100 is inexact in binary; snap products that are integers up to rounding
    let rank = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (rank as usize).clamp(1, n) - 1
}

/// Nearest-rank percentile: the value at index `ceil(k * n) - 1` of the
/// ascending sort (index 0 for k = 0).
pub fn percentile(values: &[f64], k: f64) -> Result<f64, CutoffError> {
    if values.is_empty() {
        return Err(CutoffError::Empty);
    }
    if !(0.0..=1.0).contains(&k) {
        return Err(CutoffError::BadFraction(k));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CutoffError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[percentile_index(sorted.len(), k)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub k_star: f64,
    pub c_f: f64,
}

/// Finds the grid percentile `k` maximizing `|pop_k - unpop_k|`, where
/// `pop_k` is the fraction of popular streamers strictly above the k-th
/// percentile of all values. Ties go to the smallest `k`.
pub fn compute_cutoff(values: &[f64], popular: &[bool]) -> Result<Cutoff, CutoffError> {
    if values.len() != popular.len() {
        return Err(CutoffError::LengthMismatch(values.len(), popular.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CutoffError::NonFinite);
    }
    let n_pop = popular.iter().filter(|&&p| p).count();
    let n_unpop = values.len() - n_pop;
    if n_pop == 0 || n_unpop == 0 {
        return Err(CutoffError::SingleClass {
            popular: n_pop,
            unpopular: n_unpop,
        });
    }
    let mut pairs: Vec<(f64, bool)> = values.iter().copied().zip(popular.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    // popular_above[i] = popular streamers at sorted positions >= i
    let mut popular_above = vec![0usize; n + 1];
    for i in (0..n).rev() {
        popular_above[i] = popular_above[i + 1] + usize::from(pairs[i].1);
    }

    let mut best: Option<(u128, u32)> = None;
    for i in 0..=GRID_STEPS {
        let c = pairs[percentile_index(n, f64::from(i) / f64::from(GRID_STEPS))].0;
        let first_above = pairs.partition_point(|p| p.0 <= c);
        let pop = popular_above[first_above] as u128;
        let unpop = (n - first_above) as u128 - pop;
        // |pop/n_pop - unpop/n_unpop| scaled by n_pop * n_unpop, exact in integers
        let score = (pop * n_unpop as u128).abs_diff(unpop * n_pop as u128);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    let (_, i) = best.expect("grid is non-empty");
    let k_star = f64::from(i) / f64::from(GRID_STEPS);
    Ok(Cutoff {
        k_star,
        c_f: pairs[percentile_index(n, k_star)].0,
    })
}

/// `(k, pop_k, unpop_k)` at every grid point, for plotting the search.
pub fn cutoff_curve(values: &[f64], popular: &[bool]) -> Result<Vec<(f64, f64, f64)>, CutoffError> {
    compute_cutoff(values, popular)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n_pop = popular.iter().filter(|&&p| p).count() as f64;
    let n_unpop = values.len() as f64 - n_pop;
    Ok((0..=GRID_STEPS)
        .map(|i| {
            let k = f64::from(i) / f64::from(GRID_STEPS);
            let c = sorted[percentile_index(sorted.len(), k)];
            let above = |want: bool| {
                values
                    .iter()
                    .zip(popular)
                    .filter(|&(&v, &p)| p == want && v > c)
                    .count() as f64
            };
            (k, above(true) / n_pop, above(false) / n_unpop)
        })
        .collect())
}

/// Median cutoff, the popularity-agnostic alternative.
pub fn median_cutoff(values: &[f64]) -> Result<Cutoff, CutoffError> {
    Ok(Cutoff {
        k_star: 0.5,
        c_f: percentile(values, 0.5)?,
    })
}

/// Cutoffs for all features, fitted for one measure over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffTable {
    pub measure: Measure,
    pub t: u32,
    pub delta: u32,
    pub method: CutoffMethod,
    cutoffs: [Cutoff; N_FEATURES],
}

impl CutoffTable {
    /// Builds a table; every feature must be present exactly once.
    pub fn from_entries(
        measure: Measure,
        t: u32,
        delta: u32,
        method: CutoffMethod,
        entries: impl IntoIterator<Item = (Feature, Cutoff)>,
    ) -> Result<Self, CutoffError> {
        let mut slots: [Option<Cutoff>; N_FEATURES] = [None; N_FEATURES];
        for (f, c) in entries {
            slots[f.index()] = Some(c);
        }
        let mut cutoffs = [Cutoff { k_star: 0.0, c_f: 0.0 }; N_FEATURES];
        for f in Feature::ALL {
            cutoffs[f.index()] = slots[f.index()].ok_or_else(|| CutoffError::MissingFeature {
                measure: measure.name().to_string(),
                feature: f.name().to_string(),
            })?;
        }
        Ok(Self {
            measure,
            t,
            delta,
            method,
            cutoffs,
        })
    }

    /// Fits every feature's cutoff from per-streamer feature vectors.
    pub fn fit(
        measure: Measure,
        t: u32,
        delta: u32,
        method: CutoffMethod,
        features: &[RawFeatureVector],
        popular: &[bool],
    ) -> Result<Self, CutoffError> {
        let entries = Feature::ALL
            .into_iter()
            .map(|f| {
                let values: Vec<f64> = features.iter().map(|v| v.get(f)).collect();
                let cutoff = match method {
                    CutoffMethod::Argmax => compute_cutoff(&values, popular)?,
                    CutoffMethod::Median => median_cutoff(&values)?,
                };
                Ok((f, cutoff))
            })
            .collect::<Result<Vec<_>, CutoffError>>()?;
        Self::from_entries(measure, t, delta, method, entries)
    }

    pub fn get(&self, f: Feature) -> Cutoff {
        self.cutoffs[f.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, Cutoff)> + '_ {
        Feature::ALL.into_iter().zip(self.cutoffs.iter().copied())
    }
}

/// One bit per feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleBits(pub [bool; N_FEATURES]);

impl RuleBits {
    pub fn get(&self, f: Feature) -> bool {
        self.0[f.index()]
    }
}

/// bit = 1 iff raw value > c_f (strict).
pub fn binarize(raw: &RawFeatureVector, table: &CutoffTable) -> RuleBits {
    let mut bits = [false; N_FEATURES];
    for (f, cutoff) in table.iter() {
        bits[f.index()] = raw.get(f) > cutoff.c_f;
    }
    RuleBits(bits)
}

/// Writes tables as `measure,feature,k_star,c_f` rows.
pub fn write_cutoffs_csv<'a>(
    tables: impl IntoIterator<Item = &'a CutoffTable>,
    out: impl Write,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["measure", "feature", "k_star", "c_f"])?;
    for table in tables {
        for (f, c) in table.iter() {
            w.write_record([
                table.measure.name().to_string(),
                f.name().to_string(),
                c.k_star.to_string(),
                c.c_f.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads tables written by [`write_cutoffs_csv`] for one window.
pub fn read_cutoffs_csv(
    input: impl Read,
    t: u32,
    delta: u32,
    method: CutoffMethod,
) -> Result<Vec<CutoffTable>, CutoffError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut by_measure: BTreeMap<Measure, Vec<(Feature, Cutoff)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let err = |message: String| CutoffError::Csv { line, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", rec.len())));
        }
        let measure = Measure::parse(&rec[0]).ok_or_else(|| err(format!("unknown measure {:?}", &rec[0])))?;
        let feature = Feature::parse(&rec[1]).ok_or_else(|| err(format!("unknown feature {:?}", &rec[1])))?;
        let k_star: f64 = rec[2].parse().map_err(|_| err(format!("bad k_star {:?}", &rec[2])))?;
        let c_f: f64 = rec[3].parse().map_err(|_| err(format!("bad c_f {:?}", &rec[3])))?;
        by_measure
            .entry(measure)
            .or_default()
            .push((feature, Cutoff { k_star, c_f }));
    }
    by_measure
        .into_iter()
        .map(|(m, entries)| CutoffTable::from_entries(m, t, delta, method, entries))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert!(matches!(percentile(&[], 0.5), Err(CutoffError::Empty)));
        assert!(percentile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn percentile_index_snaps_grid_products() {
        for n in 1..=300usize {
            for i in 0..=100usize {
                let expected = ((i * n).div_ceil(100)).max(1) - 1;
                assert_eq!(percentile_index(n, i as f64 / 100.0), expected, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn separated_classes_pick_smallest_separating_k() {
        let mut values = vec![0.0; 9];
        values.push(10.0);
        let mut mask = vec![false; 9];
        mask.push(true);
        let c = compute_cutoff(&values, &mask).unwrap();
        assert_eq!(c.k_star, 0.0);
        assert_eq!(c.c_f, 0.0);

        // more mass below: the smallest k whose percentile is a 0 value
        let values: Vec<f64> = (0..20).map(|i| if i < 15 { 0.0 } else { 10.0 }).collect();
        let mask: Vec<bool> = (0..20).map(|i| i >= 15).collect();
        let c = compute_cutoff(&values, &mask).unwrap();
        assert_eq!(c.k_star, 0.0);
    }

    #[test]
    fn identical_distributions_fall_back_to_zero() {
        let values = vec![1.0, 1.0, 2.0, 2.0];
        let mask = vec![true, false, true, false];
        let c = compute_cutoff(&values, &mask).unwrap();
        assert_eq!(c.k_star, 0.0);
    }

    #[test]
    fn skewed_feature_picks_cutoff_above_median() {
        // 70% of streamers never tweet; popular ones tweet a lot
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for i in 0..100 {
            let popular = i < 10;
            let v = if popular {
                20.0 + i as f64
            } else if i < 80 {
                0.0
            } else {
                (i - 79) as f64
            };
            values.push(v);
            mask.push(popular);
        }
        let c = compute_cutoff(&values, &mask).unwrap();
        assert!(c.k_star > 0.5, "{c:?}");
        assert_eq!(percentile(&values, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            compute_cutoff(&[1.0, 2.0], &[true, true]),
            Err(CutoffError::SingleClass { .. })
        ));
    }

    #[test]
    fn strict_inequality_at_cutoff() {
        let table = CutoffTable::from_entries(
            Measure::Followers,
            1,
            1,
            CutoffMethod::Argmax,
            Feature::ALL.map(|f| (f, Cutoff { k_star: 0.5, c_f: 2.0 })),
        )
        .unwrap();
        let mut raw = RawFeatureVector::default();
        raw.0[0] = 2.0;
        raw.0[1] = 2.0 + 1e-12;
        let bits = binarize(&raw, &table);
        assert!(!bits.0[0]);
        assert!(bits.0[1]);
        assert!(bits.0[2..].iter().all(|b| !b));
    }

    #[test]
    fn missing_feature_rejected() {
        let err = CutoffTable::from_entries(
            Measure::Followers,
            1,
            1,
            CutoffMethod::Argmax,
            [(Feature::NTweet, Cutoff { k_star: 0.1, c_f: 1.0 })],
        )
        .unwrap_err();
        assert!(matches!(err, CutoffError::MissingFeature { .. }));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let table = CutoffTable::from_entries(
            Measure::Cheers,
            2,
            3,
            CutoffMethod::Argmax,
            Feature::ALL.map(|f| {
                (
                    f,
                    Cutoff {
                        k_star: 0.37,
                        c_f: 1.0 / (f.index() as f64 + 3.0),
                    },
                )
            }),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_cutoffs_csv([&table], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("measure,feature,k_star,c_f\n"));
        let back = read_cutoffs_csv(buf.as_slice(), 2, 3, CutoffMethod::Argmax).unwrap();
        assert_eq!(back, vec![table]);
    }
}
