//! The 24 windowed behavioral features.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::data::{
    Broadcast, DataError, GamePopularityTable, Platform, SocialPost, Streamer, WindowEvents, SECONDS_PER_DAY,
    SECONDS_PER_MONTH,
};

pub const N_FEATURES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    BroadcastGap,
    NBroadcast,
    NGames,
    BroadcastLen,
    NPopularGame,
    NDays,
    SchedRegularity,
    UniqueGames,
    NTweet,
    TwitterLive,
    TweetBeforeGap,
    TweetAfterGap,
    TwitterAdv,
    TweetLen,
    NTwitterReplies,
    NYoutube,
    YoutubeDescLen,
    YoutubeTitleLen,
    YoutubeVideoLen,
    YoutubeAdv,
    NInstagram,
    NTagsPerPost,
    InstagramAdv,
    InstagramPostLen,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::BroadcastGap,
        Feature::NBroadcast,
        Feature::NGames,
        Feature::BroadcastLen,
        Feature::NPopularGame,
        Feature::NDays,
        Feature::SchedRegularity,
        Feature::UniqueGames,
        Feature::NTweet,
        Feature::TwitterLive,
        Feature::TweetBeforeGap,
        Feature::TweetAfterGap,
        Feature::TwitterAdv,
        Feature::TweetLen,
        Feature::NTwitterReplies,
        Feature::NYoutube,
        Feature::YoutubeDescLen,
        Feature::YoutubeTitleLen,
        Feature::YoutubeVideoLen,
        Feature::YoutubeAdv,
        Feature::NInstagram,
        Feature::NTagsPerPost,
        Feature::InstagramAdv,
        Feature::InstagramPostLen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::BroadcastGap => "broadcast_gap",
            Feature::NBroadcast => "n_broadcast",
            Feature::NGames => "n_games",
            Feature::BroadcastLen => "broadcast_len",
            Feature::NPopularGame => "n_popular_game",
            Feature::NDays => "n_days",
            Feature::SchedRegularity => "sched_regularity",
            Feature::UniqueGames => "unique_games",
            Feature::NTweet => "n_tweet",
            Feature::TwitterLive => "twitter_live",
            Feature::TweetBeforeGap => "tweet_before_gap",
            Feature::TweetAfterGap => "tweet_after_gap",
            Feature::TwitterAdv => "twitter_adv",
            Feature::TweetLen => "tweet_len",
            Feature::NTwitterReplies => "n_twitter_replies",
            Feature::NYoutube => "n_youtube",
            Feature::YoutubeDescLen => "youtube_desc_len",
            Feature::YoutubeTitleLen => "youtube_title_len",
            Feature::YoutubeVideoLen => "youtube_video_len",
            Feature::YoutubeAdv => "youtube_adv",
            Feature::NInstagram => "n_instagram",
            Feature::NTagsPerPost => "n_tags_per_post",
            Feature::InstagramAdv => "instagram_adv",
            Feature::InstagramPostLen => "instagram_post_len",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Platform whose account gates this feature, if any.
    pub fn platform(self) -> Option<Platform> {
        match self.index() {
            8..=14 => Some(Platform::Twitter),
            15..=19 => Some(Platform::Youtube),
            20..=23 => Some(Platform::Instagram),
            _ => None,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per [`Feature`], in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawFeatureVector(pub [f64; N_FEATURES]);

impl RawFeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    fn set(&mut self, f: Feature, v: f64) {
        self.0[f.index()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, f64)> + '_ {
        Feature::ALL.into_iter().zip(self.0.iter().copied())
    }
}

/// Per-month set of platform-popular games (top 10% by views among games
/// with nonzero views that month; ties at the boundary count as popular).
#[derive(Debug, Clone, Default)]
pub struct PopularGames {
    by_month: BTreeMap<u32, HashSet<String>>,
}

impl PopularGames {
    pub fn from_table(table: &GamePopularityTable) -> Self {
        let mut by_month = BTreeMap::new();
        let months: BTreeSet<u32> = table.iter().map(|(m, _, _)| m).collect();
        for m in months {
            let games = table.month(m).expect("month listed");
            let mut views: Vec<u64> = games.values().copied().filter(|&v| v > 0).collect();
            if views.is_empty() {
                by_month.insert(m, HashSet::new());
                continue;
            }
            views.sort_unstable_by(|a, b| b.cmp(a));
            let k = views.len().div_ceil(10);
            let threshold = views[k - 1];
            let popular = games
                .iter()
                .filter(|(_, &v)| v > 0 && v >= threshold)
                .map(|(g, _)| g.clone())
                .collect();
            by_month.insert(m, popular);
        }
        Self { by_month }
    }

    pub fn is_popular(&self, month: u32, game: &str) -> bool {
        self.by_month.get(&month).is_some_and(|s| s.contains(game))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn hours(seconds: f64) -> f64 {
    seconds / 3600.0
}

fn weeks_in(window: &WindowEvents<'_>) -> u64 {
    let days = ((window.end - window.start) / SECONDS_PER_DAY) as u64;
    days.div_ceil(7).max(1)
}

fn day_of_window(window_start: i64, ts: i64) -> u64 {
    ((ts - window_start) / SECONDS_PER_DAY) as u64
}

/// For each weekday (relative to the window start) counts the weeks that
/// contain a broadcast on it, then sums `max(N_d - 1, 0)`.
pub fn sched_regularity(window_start: i64, broadcasts: &[Broadcast]) -> f64 {
    let mut weeks_by_weekday: [BTreeSet<u64>; 7] = Default::default();
    for b in broadcasts {
        let day = day_of_window(window_start, b.start);
        weeks_by_weekday[(day % 7) as usize].insert(day / 7);
    }
    weeks_by_weekday
        .iter()
        .map(|weeks| weeks.len().saturating_sub(1) as f64)
        .sum()
}

/// Mean number of distinct popular games per broadcast. A broadcast's month
/// is its account-age month.
pub fn popular_game_count(streamer: &Streamer, broadcasts: &[Broadcast], popular: &PopularGames) -> f64 {
    mean(broadcasts.iter().map(|b| {
        let month = ((b.start - streamer.accounts.twitch_created) / SECONDS_PER_MONTH) as u32;
        let distinct: BTreeSet<&str> = b.games.iter().map(String::as_str).collect();
        distinct.into_iter().filter(|g| popular.is_popular(month, g)).count() as f64
    }))
}

/// Mean hours from each broadcast's start back to the latest tweet at or
/// before it, and from its end forward to the earliest tweet at or after
/// it. Broadcasts without such a tweet are left out; no pairs gives 0.
pub fn tweet_gap_features(broadcasts: &[Broadcast], tweet_times: &[i64]) -> (f64, f64) {
    let mut sorted = tweet_times.to_vec();
    sorted.sort_unstable();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for b in broadcasts {
        let start = b.start as f64;
        let end = b.end();
        let n_at_or_before = sorted.partition_point(|&t| (t as f64) <= start);
        if n_at_or_before > 0 {
            before.push(hours(start - sorted[n_at_or_before - 1] as f64));
        }
        let first_after = sorted.partition_point(|&t| (t as f64) < end);
        if first_after < sorted.len() {
            after.push(hours(sorted[first_after] as f64 - end));
        }
    }
    (mean(before.into_iter()), mean(after.into_iter()))
}

/// Mean hours of inactivity between the end of one broadcast and the start
/// of the next. With fewer than two broadcasts the whole window counts as
/// inactive.
fn broadcast_gap(window: &WindowEvents<'_>, broadcasts: &[Broadcast]) -> f64 {
    if broadcasts.len() < 2 {
        return hours((window.end - window.start) as f64);
    }
    let mut ordered: Vec<&Broadcast> = broadcasts.iter().collect();
    ordered.sort_by(|a, b| a.start.cmp(&b.start).then(a.duration_min.total_cmp(&b.duration_min)));
    mean(
        ordered
            .windows(2)
            .map(|w| hours((w[1].start as f64 - w[0].end()).max(0.0))),
    )
}

fn count(posts: &[&SocialPost], pred: impl Fn(&SocialPost) -> bool) -> f64 {
    posts.iter().filter(|p| pred(p)).count() as f64
}

/// Computes the behavioral features of one streamer over `[t, t + delta)`.
pub fn compute_features(
    streamer: &Streamer,
    popular: &PopularGames,
    t: u32,
    delta: u32,
) -> Result<RawFeatureVector, DataError> {
    let window = streamer.window_events(t, delta)?;
    Ok(features_of_window(streamer, popular, &window))
}

/// One row per streamer observed through `t + delta`: `streamer` followed
/// by the 24 features. Streamers whose record ends earlier are skipped.
pub fn write_features_csv(
    dataset: &crate::data::Dataset,
    t: u32,
    delta: u32,
    out: impl std::io::Write,
) -> Result<usize, csv::Error> {
    let popular = PopularGames::from_table(&dataset.game_table);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["streamer"];
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    w.write_record(&header)?;
    let mut rows = 0;
    for s in dataset.streamers() {
        let Ok(v) = compute_features(s, &popular, t, delta) else {
            continue;
        };
        let mut record = vec![s.id.to_string()];
        record.extend(v.iter().map(|(_, x)| x.to_string()));
        w.write_record(&record)?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}

pub fn features_of_window(streamer: &Streamer, popular: &PopularGames, window: &WindowEvents<'_>) -> RawFeatureVector {
    use Feature::*;
    let mut v = RawFeatureVector::default();
    let bs = window.broadcasts;

    v.set(BroadcastGap, broadcast_gap(window, bs));
    v.set(NBroadcast, bs.len() as f64);
    v.set(
        NGames,
        mean(bs.iter().map(|b| b.games.iter().collect::<BTreeSet<_>>().len() as f64)),
    );
    v.set(BroadcastLen, mean(bs.iter().map(|b| b.duration_min / 60.0)));
    v.set(NPopularGame, popular_game_count(streamer, bs, popular));
    let days: BTreeSet<u64> = bs.iter().map(|b| day_of_window(window.start, b.start)).collect();
    v.set(NDays, (days.len() as f64 / weeks_in(window) as f64).min(7.0));
    v.set(SchedRegularity, sched_regularity(window.start, bs));
    let games: BTreeSet<&str> = bs.iter().flat_map(|b| b.games.iter().map(String::as_str)).collect();
    v.set(UniqueGames, games.len() as f64);

    let on = |platform: Platform| -> Vec<&SocialPost> {
        if !streamer.has_account(platform) {
            return Vec::new();
        }
        window.posts.iter().filter(|p| p.platform == platform).collect()
    };

    let tweets = on(Platform::Twitter);
    v.set(NTweet, tweets.len() as f64);
    v.set(TwitterLive, count(&tweets, |p| p.contains_live_keyword));
    let tweet_times: Vec<i64> = tweets.iter().map(|p| p.time).collect();
    let (before, after) = if tweets.is_empty() {
        (0.0, 0.0)
    } else {
        tweet_gap_features(bs, &tweet_times)
    };
    v.set(TweetBeforeGap, before);
    v.set(TweetAfterGap, after);
    v.set(TwitterAdv, count(&tweets, |p| p.has_twitch_url));
    v.set(TweetLen, mean(tweets.iter().map(|p| f64::from(p.text_length))));
    v.set(NTwitterReplies, count(&tweets, |p| p.is_reply));

    let videos = on(Platform::Youtube);
    v.set(NYoutube, videos.len() as f64);
    v.set(
        YoutubeDescLen,
        mean(videos.iter().map(|p| f64::from(p.description_length))),
    );
    v.set(YoutubeTitleLen, mean(videos.iter().map(|p| f64::from(p.title_length))));
    v.set(YoutubeVideoLen, mean(videos.iter().map(|p| p.video_length)));
    v.set(YoutubeAdv, count(&videos, |p| p.has_twitch_url));

    let grams = on(Platform::Instagram);
    v.set(NInstagram, grams.len() as f64);
    v.set(NTagsPerPost, mean(grams.iter().map(|p| f64::from(p.tag_count))));
    v.set(InstagramAdv, count(&grams, |p| p.has_twitch_url));
    v.set(InstagramPostLen, mean(grams.iter().map(|p| f64::from(p.text_length))));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AccountInfo, PopularitySnapshot, StreamerId};

    const T0: i64 = 1_451_606_400;
    const H: i64 = 3600;
    const D: i64 = SECONDS_PER_DAY;

    fn bc(start: i64, minutes: f64, games: &[&str]) -> Broadcast {
        Broadcast {
            start,
            duration_min: minutes,
            games: games.iter().map(|s| s.to_string()).collect(),
            avg_concurrent_viewers: 1.0,
            had_zero_viewers: false,
        }
    }

    fn streamer(broadcasts: Vec<Broadcast>, posts: Vec<SocialPost>, twitter: bool, youtube: bool) -> Streamer {
        Streamer {
            id: StreamerId::new("s"),
            accounts: AccountInfo {
                twitch_created: T0,
                twitter_created: twitter.then_some(T0),
                youtube_created: youtube.then_some(T0),
                instagram_created: None,
            },
            broadcasts,
            posts,
            snapshots: (0..4)
                .map(|m| PopularitySnapshot {
                    month_index: m,
                    followers: 0,
                    avg_concurrent_viewers: 0.0,
                    cumulative_views: 0,
                    cheers: 0,
                })
                .collect(),
        }
    }

    fn tweet(time: i64) -> SocialPost {
        SocialPost::new(Platform::Twitter, time)
    }

    #[test]
    fn counts_tweets_in_window() {
        let s = streamer(
            vec![],
            vec![tweet(T0 + H), tweet(T0 + 2 * H), tweet(T0 + 3 * H)],
            true,
            false,
        );
        let v = compute_features(&s, &PopularGames::default(), 0, 1).unwrap();
        assert_eq!(v.get(Feature::NTweet), 3.0);
    }

    #[test]
    fn absent_youtube_account_zeroes_youtube_features() {
        let s = streamer(vec![bc(T0 + H, 60.0, &["g"])], vec![], true, false);
        let v = compute_features(&s, &PopularGames::default(), 0, 1).unwrap();
        for f in Feature::ALL
            .into_iter()
            .filter(|f| f.platform() == Some(Platform::Youtube))
        {
            assert_eq!(v.get(f), 0.0, "{f}");
        }
    }

    #[test]
    fn gap_between_two_broadcasts() {
        // first ends at 1h, second starts 10h later
        let s = streamer(
            vec![bc(T0, 60.0, &["g"]), bc(T0 + 11 * H, 60.0, &["g"])],
            vec![],
            false,
            false,
        );
        let v = compute_features(&s, &PopularGames::default(), 0, 1).unwrap();
        assert_eq!(v.get(Feature::BroadcastGap), 10.0);
    }

    #[test]
    fn single_broadcast_gap_is_window_length() {
        let s = streamer(vec![bc(T0, 60.0, &["g"])], vec![], false, false);
        let v = compute_features(&s, &PopularGames::default(), 0, 2).unwrap();
        assert_eq!(v.get(Feature::BroadcastGap), 60.0 * 24.0);
    }

    #[test]
    fn regularity_mondays_and_wednesdays() {
        let bs: Vec<Broadcast> = (0..3)
            .flat_map(|w| [bc(T0 + (7 * w) * D, 60.0, &[]), bc(T0 + (7 * w + 2) * D, 60.0, &[])])
            .collect();
        assert_eq!(sched_regularity(T0, &bs), 4.0);
        assert_eq!(sched_regularity(T0, &bs[..1]), 0.0);
        assert_eq!(sched_regularity(T0, &[]), 0.0);
    }

    #[test]
    fn popular_game_top_decile() {
        let mut table = GamePopularityTable::new();
        for i in 1..=10u64 {
            table.insert(0, format!("g{i}"), 1000 - i * 10);
        }
        let popular = PopularGames::from_table(&table);
        let s = streamer(vec![bc(T0, 60.0, &["g1"])], vec![], false, false);
        assert_eq!(popular_game_count(&s, &s.broadcasts, &popular), 1.0);
        let s = streamer(vec![bc(T0, 60.0, &["g5"])], vec![], false, false);
        assert_eq!(popular_game_count(&s, &s.broadcasts, &popular), 0.0);
        assert_eq!(popular_game_count(&s, &[], &popular), 0.0);
        // month missing from the table
        let s = streamer(vec![bc(T0 + SECONDS_PER_MONTH, 60.0, &["g1"])], vec![], false, false);
        assert_eq!(popular_game_count(&s, &s.broadcasts, &popular), 0.0);
    }

    #[test]
    fn tweet_gaps() {
        let b = [bc(T0 + 10 * H, 60.0, &[])];
        assert_eq!(tweet_gap_features(&b, &[T0 + 9 * H]), (1.0, 0.0));
        assert_eq!(tweet_gap_features(&b, &[]), (0.0, 0.0));
        assert_eq!(tweet_gap_features(&b, &[T0 + 14 * H]), (0.0, 3.0));
    }

    #[test]
    fn n_days_rounds_weeks_up_and_caps() {
        // 30-day window is 5 weeks; 10 distinct days -> 2 per week
        let bs: Vec<Broadcast> = (0..10).map(|d| bc(T0 + d * D, 30.0, &[])).collect();
        let s = streamer(bs, vec![], false, false);
        let v = compute_features(&s, &PopularGames::default(), 0, 1).unwrap();
        assert_eq!(v.get(Feature::NDays), 2.0);
    }
}
