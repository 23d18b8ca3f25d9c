//! Streamer activity and popularity data model.
//!
//! Everything is indexed by account age: month `m` of a streamer spans
//! `[created + m * 30 days, created + (m + 1) * 30 days)`. Snapshot `m`
//! records the popularity measures as of the start of month `m`, so the
//! growth caused by events in window `[t, t + delta)` is
//! `snapshot[t + delta] - snapshot[t]`.

mod io;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{format_timestamp, load_dataset, parse_timestamp, save_dataset};

/// Seconds per account-age month (fixed 30-day months).
pub const SECONDS_PER_MONTH: i64 = 30 * SECONDS_PER_DAY;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required file {0}")]
    MissingFile(String),
    #[error("{file}:{line}: {message}")]
    Malformed { file: String, line: usize, message: String },
    #[error("streamer {streamer}: invalid {field}: {message}")]
    Invariant {
        streamer: String,
        field: String,
        message: String,
    },
    #[error("no streamers")]
    NoStreamers,
    #[error("streamer {streamer}: window [{t}, {end}) outside recorded lifespan of {months} months")]
    WindowOutOfRange {
        streamer: String,
        t: u32,
        end: u32,
        months: u32,
    },
    #[error("streamer {streamer}: timestamp precedes account creation")]
    BeforeCreation { streamer: String },
}

fn invariant(streamer: &StreamerId, field: &str, message: impl Into<String>) -> DataError {
    DataError::Invariant {
        streamer: streamer.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StreamerId(String);

impl StreamerId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StreamerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub start: Timestamp,
    pub duration_min: f64,
    pub games: Vec<String>,
    pub avg_concurrent_viewers: f64,
    pub had_zero_viewers: bool,
}

impl Broadcast {
    pub fn end(&self) -> f64 {
        self.start as f64 + self.duration_min * 60.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Twitter,
    Youtube,
    Instagram,
}

impl Platform {
    pub const ALL: [Platform; 3] = [Platform::Twitter, Platform::Youtube, Platform::Instagram];

    pub fn name(self) -> &'static str {
        match self {
            Platform::Twitter => "twitter",
            Platform::Youtube => "youtube",
            Platform::Instagram => "instagram",
        }
    }
}

/// One post on a third-party platform. Raw text is never stored, only
/// lengths and precomputed flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialPost {
    pub platform: Platform,
    pub time: Timestamp,
    pub text_length: u32,
    pub has_twitch_url: bool,
    pub contains_live_keyword: bool,
    pub is_reply: bool,
    pub tag_count: u32,
    pub video_length: f64,
    pub title_length: u32,
    pub description_length: u32,
}

impl SocialPost {
    /// A post with every optional field zeroed.
    pub fn new(platform: Platform, time: Timestamp) -> Self {
        Self {
            platform,
            time,
            text_length: 0,
            has_twitch_url: false,
            contains_live_keyword: false,
            is_reply: false,
            tag_count: 0,
            video_length: 0.0,
            title_length: 0,
            description_length: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountInfo {
    pub twitch_created: Timestamp,
    pub twitter_created: Option<Timestamp>,
    pub youtube_created: Option<Timestamp>,
    pub instagram_created: Option<Timestamp>,
}

impl AccountInfo {
    pub fn created(&self, platform: Platform) -> Option<Timestamp> {
        match platform {
            Platform::Twitter => self.twitter_created,
            Platform::Youtube => self.youtube_created,
            Platform::Instagram => self.instagram_created,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopularitySnapshot {
    #[serde(rename = "month")]
    pub month_index: u32,
    pub followers: u64,
    #[serde(rename = "avg_ccv")]
    pub avg_concurrent_viewers: f64,
    pub cumulative_views: u64,
    pub cheers: u64,
}

/// The four popularity measures tracked per month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Followers,
    ConcurrentViewers,
    CumulativeViews,
    Cheers,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::Followers,
        Measure::ConcurrentViewers,
        Measure::CumulativeViews,
        Measure::Cheers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Followers => "followers",
            Measure::ConcurrentViewers => "concurrent_viewers",
            Measure::CumulativeViews => "cumulative_views",
            Measure::Cheers => "cheers",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Cumulative measures never decrease from one month to the next.
    pub fn is_cumulative(self) -> bool {
        !matches!(self, Measure::ConcurrentViewers)
    }

    pub fn of(self, snapshot: &PopularitySnapshot) -> f64 {
        match self {
            Measure::Followers => snapshot.followers as f64,
            Measure::ConcurrentViewers => snapshot.avg_concurrent_viewers,
            Measure::CumulativeViews => snapshot.cumulative_views as f64,
            Measure::Cheers => snapshot.cheers as f64,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Total monthly views per game, keyed by month index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GamePopularityTable {
    views: BTreeMap<u32, BTreeMap<String, u64>>,
}

impl GamePopularityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, month: u32, game: impl Into<String>, views: u64) {
        self.views.entry(month).or_default().insert(game.into(), views);
    }

    pub fn month(&self, month: u32) -> Option<&BTreeMap<String, u64>> {
        self.views.get(&month)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str, u64)> {
        self.views
            .iter()
            .flat_map(|(&m, games)| games.iter().map(move |(g, &v)| (m, g.as_str(), v)))
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// All recorded data for one streamer. Broadcasts and posts are kept
/// sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamer {
    pub id: StreamerId,
    pub accounts: AccountInfo,
    pub broadcasts: Vec<Broadcast>,
    pub posts: Vec<SocialPost>,
    pub snapshots: Vec<PopularitySnapshot>,
}

/// Events falling inside one account-age window.
#[derive(Debug, Clone, Copy)]
pub struct WindowEvents<'a> {
    pub start: Timestamp,
    pub end: Timestamp,
    pub broadcasts: &'a [Broadcast],
    pub posts: &'a [SocialPost],
}

impl Streamer {
    /// Number of monthly snapshots, i.e. the recorded lifespan in months.
    pub fn months(&self) -> u32 {
        self.snapshots.len() as u32
    }

    pub fn snapshot(&self, month: u32) -> Option<&PopularitySnapshot> {
        self.snapshots.get(month as usize)
    }

    pub fn measure_at(&self, measure: Measure, month: u32) -> Option<f64> {
        self.snapshot(month).map(|s| measure.of(s))
    }

    pub fn month_start(&self, month: u32) -> Timestamp {
        self.accounts.twitch_created + i64::from(month) * SECONDS_PER_MONTH
    }

    /// Whole 30-day months elapsed since the Twitch account was created.
    pub fn account_age_months(&self, at: Timestamp) -> Result<u32, DataError> {
        let elapsed = at - self.accounts.twitch_created;
        if elapsed < 0 {
            return Err(DataError::BeforeCreation {
                streamer: self.id.to_string(),
            });
        }
        Ok((elapsed / SECONDS_PER_MONTH) as u32)
    }

    /// Broadcasts and posts with timestamps in `[month t, month t + delta)`.
    pub fn window_events(&self, t: u32, delta: u32) -> Result<WindowEvents<'_>, DataError> {
        if delta == 0 || t + delta > self.months() {
            return Err(DataError::WindowOutOfRange {
                streamer: self.id.to_string(),
                t,
                end: t + delta,
                months: self.months(),
            });
        }
        let start = self.month_start(t);
        let end = self.month_start(t + delta);
        let b_lo = self.broadcasts.partition_point(|b| b.start < start);
        let b_hi = self.broadcasts.partition_point(|b| b.start < end);
        let p_lo = self.posts.partition_point(|p| p.time < start);
        let p_hi = self.posts.partition_point(|p| p.time < end);
        Ok(WindowEvents {
            start,
            end,
            broadcasts: &self.broadcasts[b_lo..b_hi],
            posts: &self.posts[p_lo..p_hi],
        })
    }

    pub fn has_account(&self, platform: Platform) -> bool {
        self.accounts.created(platform).is_some()
    }

    /// Sorts events by time, breaking ties on every other field so the
    /// result does not depend on input order.
    pub fn sort_events(&mut self) {
        self.broadcasts.sort_by(|a, b| {
            a.start
                .cmp(&b.start)
                .then(a.duration_min.total_cmp(&b.duration_min))
                .then_with(|| a.games.cmp(&b.games))
                .then(a.avg_concurrent_viewers.total_cmp(&b.avg_concurrent_viewers))
                .then(a.had_zero_viewers.cmp(&b.had_zero_viewers))
        });
        self.posts.sort_by(|a, b| {
            a.time
                .cmp(&b.time)
                .then(a.platform.cmp(&b.platform))
                .then(a.text_length.cmp(&b.text_length))
                .then(a.has_twitch_url.cmp(&b.has_twitch_url))
                .then(a.contains_live_keyword.cmp(&b.contains_live_keyword))
                .then(a.is_reply.cmp(&b.is_reply))
                .then(a.tag_count.cmp(&b.tag_count))
                .then(a.video_length.total_cmp(&b.video_length))
                .then(a.title_length.cmp(&b.title_length))
                .then(a.description_length.cmp(&b.description_length))
        });
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let id = &self.id;
        if id.as_str().is_empty() {
            return Err(invariant(id, "id", "empty identifier"));
        }
        if self.snapshots.is_empty() {
            return Err(invariant(id, "snapshots", "no snapshots"));
        }
        for (i, s) in self.snapshots.iter().enumerate() {
            if s.month_index as usize != i {
                return Err(invariant(
                    id,
                    "snapshots",
                    format!(
                        "month indices not contiguous from 0 (found {} at position {i})",
                        s.month_index
                    ),
                ));
            }
            if !(s.avg_concurrent_viewers.is_finite() && s.avg_concurrent_viewers >= 0.0) {
                return Err(invariant(id, "avg_ccv", format!("month {i}: must be finite and >= 0")));
            }
        }
        for pair in self.snapshots.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let checks = [
                ("followers", a.followers, b.followers),
                ("cumulative_views", a.cumulative_views, b.cumulative_views),
                ("cheers", a.cheers, b.cheers),
            ];
            for (field, before, after) in checks {
                if after < before {
                    return Err(invariant(
                        id,
                        field,
                        format!(
                            "decreases from {before} to {after} between months {} and {}",
                            a.month_index, b.month_index
                        ),
                    ));
                }
            }
        }
        let created = self.accounts.twitch_created;
        for b in &self.broadcasts {
            if b.start < created {
                return Err(invariant(id, "broadcast.start", "before account creation"));
            }
            if !(b.duration_min.is_finite() && b.duration_min > 0.0) {
                return Err(invariant(id, "broadcast.duration_min", "must be > 0"));
            }
            if !(b.avg_concurrent_viewers.is_finite() && b.avg_concurrent_viewers >= 0.0) {
                return Err(invariant(id, "broadcast.avg_ccv", "must be finite and >= 0"));
            }
        }
        for p in &self.posts {
            if p.time < created {
                return Err(invariant(id, "post.time", "before account creation"));
            }
            if !self.has_account(p.platform) {
                return Err(invariant(
                    id,
                    "post.platform",
                    format!("{} post without a {} account", p.platform.name(), p.platform.name()),
                ));
            }
            if !(p.video_length.is_finite() && p.video_length >= 0.0) {
                return Err(invariant(id, "post.video_length", "must be finite and >= 0"));
            }
            let youtube_only = p.video_length != 0.0 || p.title_length != 0 || p.description_length != 0;
            if p.platform != Platform::Youtube && youtube_only {
                return Err(invariant(id, "post", "youtube fields set on a non-youtube post"));
            }
            if p.platform != Platform::Instagram && p.tag_count != 0 {
                return Err(invariant(id, "post.tag_count", "tags set on a non-instagram post"));
            }
        }
        Ok(())
    }
}

/// A validated collection of streamers plus the platform game table.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    streamers: BTreeMap<StreamerId, Streamer>,
    pub game_table: GamePopularityTable,
}

impl Dataset {
    /// Validates every streamer; events are sorted by time first.
    pub fn new(
        streamers: impl IntoIterator<Item = Streamer>,
        game_table: GamePopularityTable,
    ) -> Result<Self, DataError> {
        let mut map = BTreeMap::new();
        for mut s in streamers {
            s.sort_events();
            s.validate()?;
            if map.contains_key(&s.id) {
                return Err(invariant(&s.id, "id", "duplicate streamer id"));
            }
            map.insert(s.id.clone(), s);
        }
        if map.is_empty() {
            return Err(DataError::NoStreamers);
        }
        Ok(Self {
            streamers: map,
            game_table,
        })
    }

    pub fn len(&self) -> usize {
        self.streamers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamers.is_empty()
    }

    pub fn get(&self, id: &StreamerId) -> Option<&Streamer> {
        self.streamers.get(id)
    }

    /// Streamers in ascending id order.
    pub fn streamers(&self) -> impl ExactSizeIterator<Item = &Streamer> {
        self.streamers.values()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &StreamerId> {
        self.streamers.keys()
    }

    /// Shortest recorded lifespan across all streamers.
    pub fn min_months(&self) -> u32 {
        self.streamers().map(Streamer::months).min().unwrap_or(0)
    }

    /// A dataset restricted to the given streamers (same game table).
    pub fn subset<'a>(&self, keep: impl IntoIterator<Item = &'a StreamerId>) -> Result<Self, DataError> {
        let picked: Vec<Streamer> = keep
            .into_iter()
            .filter_map(|id| self.streamers.get(id).cloned())
            .collect();
        Self::new(picked, self.game_table.clone())
    }
}
