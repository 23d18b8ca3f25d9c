use std::collections::BTreeMap;
use std::io::Write;

use crate::data::{Dataset, Measure, Platform, Streamer, StreamerId, SECONDS_PER_MONTH};
use crate::glm::{welch_t_test, WelchResult};
use crate::labels::HORIZON_MONTHS;

/// Monthly broadcast minutes required for affiliate status.
pub const AFFILIATE_MINUTES: f64 = 500.0;
/// Monthly broadcast hours of a full-time streamer (40 h/week).
pub const FULLTIME_HOURS: f64 = 160.0;
/// Share of empty broadcasts highlighted in the effort report.
pub const EMPTY_SHARE_OF_NOTE: f64 = 0.25;

const EFFORT_MEASURES: [Measure; 3] = [Measure::Followers, Measure::ConcurrentViewers, Measure::Cheers];
const CCDF_AGES: [u32; 4] = [1, 3, 6, 12];

/// Months 0 .. n counted by the first-year analyses.
fn first_year(s: &Streamer) -> u32 {
    s.months().min(HORIZON_MONTHS)
}

/// Last first-year snapshot of a streamer.
fn year_end(s: &Streamer) -> u32 {
    s.months().saturating_sub(1).min(HORIZON_MONTHS)
}

/// One Welch comparison; `result` holds the reason when it was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub group: String,
    pub measure: Measure,
    pub n_a: usize,
    pub n_b: usize,
    pub result: Result<WelchResult, String>,
}

fn welch_row(group: &str, measure: Measure, a: &[f64], b: &[f64]) -> TestRow {
    let result = if a.len() < 2 || b.len() < 2 {
        Err(format!(
            "skipped: {} vs {} streamers, need 2 per side",
            a.len(),
            b.len()
        ))
    } else {
        welch_t_test(a, b).map_err(|e| format!("skipped: {e}"))
    };
    TestRow {
        group: group.to_string(),
        measure,
        n_a: a.len(),
        n_b: b.len(),
        result,
    }
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Writes `group,measure,n_a,n_b,t,df,p_value,effect,status` rows.
pub fn write_tests_csv(tests: &[TestRow], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group", "measure", "n_a", "n_b", "t", "df", "p_value", "effect", "status",
    ])?;
    for row in tests {
        let (stats, status) = match &row.result {
            Ok(r) => ([fmt(r.t), fmt(r.df), fmt(r.p_value), fmt(r.effect)], "ok".to_string()),
            Err(why) => (Default::default(), why.clone()),
        };
        let mut record = vec![
            row.group.clone(),
            row.measure.name().to_string(),
            row.n_a.to_string(),
            row.n_b.to_string(),
        ];
        record.extend(stats);
        record.push(status);
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffortRow {
    pub streamer: StreamerId,
    /// Broadcast hours in each first-year month.
    pub monthly_hours: Vec<f64>,
    pub mean_monthly_hours: f64,
    pub affiliate: bool,
    pub fulltime: bool,
    /// Fraction of first-year broadcasts without viewers; `None` without
    /// broadcasts.
    pub empty_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffortReport {
    pub rows: Vec<EffortRow>,
    pub affiliate_fraction: f64,
    pub fulltime_fraction: f64,
    /// Streamers with more than a quarter of broadcasts empty.
    pub mostly_empty_fraction: f64,
    pub tests: Vec<TestRow>,
    /// (empty-broadcast fraction, share of streamers at or below it).
    pub empty_cdf: Vec<(f64, f64)>,
}

fn effort_row(s: &Streamer) -> EffortRow {
    let months = first_year(s);
    let mut monthly_hours = vec![0.0; months as usize];
    let (mut total, mut empty) = (0usize, 0usize);
    for b in &s.broadcasts {
        let month = ((b.start - s.accounts.twitch_created) / SECONDS_PER_MONTH) as usize;
        if month < monthly_hours.len() {
            monthly_hours[month] += b.duration_min / 60.0;
            total += 1;
            empty += usize::from(b.had_zero_viewers);
        }
    }
    let mean = if months == 0 {
        0.0
    } else {
        monthly_hours.iter().sum::<f64>() / f64::from(months)
    };
    EffortRow {
        streamer: s.id.clone(),
        monthly_hours,
        mean_monthly_hours: mean,
        affiliate: mean * 60.0 >= AFFILIATE_MINUTES,
        fulltime: mean >= FULLTIME_HOURS,
        empty_fraction: (total > 0).then(|| empty as f64 / total as f64),
    }
}

/// Empirical CDF at each distinct value.
fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let share = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == v => last.1 = share,
            _ => points.push((v, share)),
        }
    }
    points
}

/// Broadcast effort over the first year: mean monthly hours, affiliate and
/// full-time shares, Welch tests of full-time against the rest, and the
/// distribution of empty broadcasts.
pub fn effort_analysis(dataset: &Dataset) -> EffortReport {
    let rows: Vec<EffortRow> = dataset.streamers().map(effort_row).collect();
    let n = rows.len() as f64;
    let share = |pred: &dyn Fn(&EffortRow) -> bool| rows.iter().filter(|r| pred(r)).count() as f64 / n;
    let affiliate_fraction = share(&|r| r.affiliate);
    let fulltime_fraction = share(&|r| r.fulltime);
    let empties: Vec<f64> = rows.iter().filter_map(|r| r.empty_fraction).collect();
    let mostly_empty_fraction = if empties.is_empty() {
        0.0
    } else {
        empties.iter().filter(|&&e| e > EMPTY_SHARE_OF_NOTE).count() as f64 / empties.len() as f64
    };
    let tests = EFFORT_MEASURES
        .iter()
        .map(|&m| {
            let (mut full, mut rest) = (Vec::new(), Vec::new());
            for (s, r) in dataset.streamers().zip(&rows) {
                let v = s.measure_at(m, year_end(s)).expect("in range");
                if r.fulltime {
                    full.push(v);
                } else {
                    rest.push(v);
                }
            }
            welch_row("fulltime_vs_rest", m, &full, &rest)
        })
        .collect();
    EffortReport {
        affiliate_fraction,
        fulltime_fraction,
        mostly_empty_fraction,
        tests,
        empty_cdf: cdf(&empties),
        rows,
    }
}

impl EffortReport {
    /// Per streamer: `streamer,mean_monthly_hours,max_monthly_hours,affiliate,fulltime,empty_fraction`.
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "streamer",
            "mean_monthly_hours",
            "max_monthly_hours",
            "affiliate",
            "fulltime",
            "empty_fraction",
        ])?;
        for r in &self.rows {
            let max = r.monthly_hours.iter().copied().fold(0.0, f64::max);
            w.write_record([
                r.streamer.to_string(),
                r.mean_monthly_hours.to_string(),
                max.to_string(),
                u8::from(r.affiliate).to_string(),
                u8::from(r.fulltime).to_string(),
                r.empty_fraction.map(|e| e.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cdf_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["empty_fraction", "cdf"])?;
        for (v, c) in &self.empty_cdf {
            w.write_record([v.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean and standard error of first-year peaks for the streamers whose
/// platform account was created `offset` months after their Twitch account.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub platform: Platform,
    pub offset: i64,
    pub n: usize,
    pub followers_mean: f64,
    pub followers_se: f64,
    pub ccv_mean: f64,
    pub ccv_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub groups: Vec<GroupStats>,
    pub tests: Vec<TestRow>,
}

fn peak(s: &Streamer, m: Measure) -> f64 {
    (0..=year_end(s))
        .map(|month| s.measure_at(m, month).expect("in range"))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Whole 30-day months from Twitch creation to platform creation, rounded
/// down (negative when the platform account is older).
pub fn creation_offset_months(s: &Streamer, platform: Platform) -> Option<i64> {
    s.accounts
        .created(platform)
        .map(|c| (c - s.accounts.twitch_created).div_euclid(SECONDS_PER_MONTH))
}

/// Peak first-year followers and concurrent viewers grouped by when each
/// third-party account was created, with before/after Welch tests.
pub fn social_timing_analysis(dataset: &Dataset) -> TimingReport {
    let mut groups = Vec::new();
    let mut tests = Vec::new();
    for platform in Platform::ALL {
        let mut by_offset: BTreeMap<i64, Vec<&Streamer>> = BTreeMap::new();
        for s in dataset.streamers() {
            if let Some(offset) = creation_offset_months(s, platform) {
                by_offset.entry(offset).or_default().push(s);
            }
        }
        for (&offset, members) in &by_offset {
            let followers: Vec<f64> = members.iter().map(|s| peak(s, Measure::Followers)).collect();
            let ccv: Vec<f64> = members.iter().map(|s| peak(s, Measure::ConcurrentViewers)).collect();
            let (followers_mean, followers_se) = mean_se(&followers);
            let (ccv_mean, ccv_se) = mean_se(&ccv);
            groups.push(GroupStats {
                platform,
                offset,
                n: members.len(),
                followers_mean,
                followers_se,
                ccv_mean,
                ccv_se,
            });
        }
        for m in [Measure::Followers, Measure::ConcurrentViewers] {
            let (mut before, mut after) = (Vec::new(), Vec::new());
            for s in dataset.streamers() {
                if let Some(created) = s.accounts.created(platform) {
                    if created < s.accounts.twitch_created {
                        before.push(peak(s, m));
                    } else {
                        after.push(peak(s, m));
                    }
                }
            }
            tests.push(welch_row(
                &format!("{}_before_vs_after", platform.name()),
                m,
                &before,
                &after,
            ));
        }
    }
    TimingReport { groups, tests }
}

impl TimingReport {
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "platform",
            "offset_month",
            "n",
            "peak_followers_mean",
            "peak_followers_se",
            "peak_ccv_mean",
            "peak_ccv_se",
        ])?;
        for g in &self.groups {
            w.write_record([
                g.platform.name().to_string(),
                g.offset.to_string(),
                g.n.to_string(),
                fmt(g.followers_mean),
                fmt(g.followers_se),
                fmt(g.ccv_mean),
                fmt(g.ccv_se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureShare {
    pub measure: Measure,
    pub month: u32,
    pub n: usize,
    /// Share of the total held by the top `ceil(n / 10)` streamers; NaN
    /// when the total is zero.
    pub top_decile_share: f64,
    /// (top fraction of streamers, share held) for 1%, 2%, ..., 100%.
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationReport {
    pub shares: Vec<MeasureShare>,
    /// (measure, account age, value, share of streamers with at least that value).
    pub ccdf: Vec<(Measure, u32, f64, f64)>,
}

fn top_share(desc: &[f64], total: f64, k: usize) -> f64 {
    if total > 0.0 {
        desc[..k].iter().sum::<f64>() / total
    } else {
        f64::NAN
    }
}

/// Skew of each popularity measure at the end of the first year and CCDFs
/// at several account ages.
pub fn population_stats(dataset: &Dataset) -> PopulationReport {
    let last = dataset
        .streamers()
        .map(|s| s.months().saturating_sub(1))
        .max()
        .unwrap_or(0)
        .min(HORIZON_MONTHS);
    let mut shares = Vec::new();
    let mut ccdf = Vec::new();
    for measure in Measure::ALL {
        let mut values: Vec<f64> = dataset
            .streamers()
            .filter_map(|s| s.measure_at(measure, last))
            .collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let n = values.len();
        let total: f64 = values.iter().sum();
        let curve = (1..=100)
            .map(|pct| {
                let k = ((pct as f64 / 100.0) * n as f64).ceil() as usize;
                (pct as f64 / 100.0, top_share(&values, total, k.clamp(1, n)))
            })
            .collect();
        shares.push(MeasureShare {
            measure,
            month: last,
            n,
            top_decile_share: top_share(&values, total, n.div_ceil(10)),
            curve,
        });

        for age in CCDF_AGES.into_iter().filter(|&a| a <= last) {
            let mut at_age: Vec<f64> = dataset.streamers().filter_map(|s| s.measure_at(measure, age)).collect();
            at_age.sort_by(f64::total_cmp);
            let n = at_age.len() as f64;
            for (i, &v) in at_age.iter().enumerate() {
                if i > 0 && at_age[i - 1] == v {
                    continue;
                }
                ccdf.push((measure, age, v, (at_age.len() - i) as f64 / n));
            }
        }
    }
    PopulationReport { shares, ccdf }
}

impl PopulationReport {
    pub fn share(&self, measure: Measure) -> Option<&MeasureShare> {
        self.shares.iter().find(|s| s.measure == measure)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["measure", "month", "n", "top_fraction", "share"])?;
        for s in &self.shares {
            for (frac, share) in &s.curve {
                w.write_record([
                    s.measure.name().to_string(),
                    s.month.to_string(),
                    s.n.to_string(),
                    frac.to_string(),
                    fmt(*share),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_ccdf_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["measure", "age_month", "value", "ccdf"])?;
        for (m, age, v, c) in &self.ccdf {
            w.write_record([m.name().to_string(), age.to_string(), v.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
