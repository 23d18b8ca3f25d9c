//! Seeded synthetic population generator with a tunable link between
//! behavior and popularity growth.
//!
//! Each streamer gets a lognormal latent quality and three behavior traits
//! correlated with it. Every month each trait either carries over its
//! previous state or fires afresh (long sessions, a fixed weekly schedule,
//! self-promotion on Twitter), and the share of active states multiplies
//! follower growth by `1 + beta * score`. Everything else the
//! streamer does is drawn independently of quality and traits.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    AccountInfo, Broadcast, DataError, Dataset, GamePopularityTable, Platform, PopularitySnapshot, SocialPost,
    Streamer, StreamerId, Timestamp, SECONDS_PER_DAY, SECONDS_PER_MONTH,
};
use crate::features::Feature;

/// Features whose generator-side behavior enters the planted growth score.
pub const DRIVING_FEATURES: [Feature; 3] = [Feature::BroadcastLen, Feature::SchedRegularity, Feature::TwitterAdv];

/// 2016-01-01T00:00:00Z
const EPOCH: Timestamp = 1_451_606_400;
const DAYS_PER_MONTH: i64 = SECONDS_PER_MONTH / SECONDS_PER_DAY;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_streamers: usize,
    /// Monthly snapshots per streamer (months 0 ..= n_months - 1).
    pub n_months: u32,
    pub seed: u64,
    /// Strength of the planted behavior effect on growth.
    pub beta: f64,
    /// Log-scale standard deviation of latent quality; larger is more skewed.
    pub tail_sigma: f64,
    /// Streamers who arrive with an existing audience.
    pub imported_fraction: f64,
    /// Mean initial followers of an imported streamer.
    pub imported_followers: f64,
    /// Expected followers gained per month at quality 1.
    pub base_growth: f64,
    /// Log-scale standard deviation of the monthly growth noise.
    pub growth_noise: f64,
    /// Typical broadcast days per month.
    pub broadcast_days: u32,
    pub fulltime_fraction: f64,
    /// Range of the per-month firing probability of each behavior trait.
    pub trait_min: f64,
    pub trait_max: f64,
    /// Gaussian-copula correlation between log quality and each trait.
    pub trait_quality_corr: f64,
    /// Chance a behavior state carries over from the previous month instead
    /// of being redrawn.
    pub state_persistence: f64,
    pub tweets_per_month: f64,
    /// Chance a tweet links the channel in a promotion month, and otherwise.
    pub promo_link_prob: f64,
    pub base_link_prob: f64,
    pub twitter_adoption: f64,
    pub youtube_adoption: f64,
    pub instagram_adoption: f64,
    /// Third-party account creation month relative to Twitch, drawn
    /// uniformly from this range.
    pub adoption_offset_min: i32,
    pub adoption_offset_max: i32,
    /// Streamers who never enable cheering.
    pub cheer_zero_rate: f64,
    pub n_games: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_streamers: 2000,
            n_months: 14,
            seed: 1,
            beta: 0.5,
            tail_sigma: 2.0,
            imported_fraction: 0.05,
            imported_followers: 3000.0,
            base_growth: 100.0,
            growth_noise: 0.15,
            broadcast_days: 8,
            fulltime_fraction: 0.03,
            trait_min: 0.1,
            trait_max: 0.9,
            trait_quality_corr: 0.6,
            state_persistence: 0.7,
            tweets_per_month: 16.0,
            promo_link_prob: 0.7,
            base_link_prob: 0.05,
            twitter_adoption: 0.8,
            youtube_adoption: 0.35,
            instagram_adoption: 0.3,
            adoption_offset_min: -12,
            adoption_offset_max: 6,
            cheer_zero_rate: 0.4,
            n_games: 300,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        if self.n_streamers < 10 {
            return bad(format!("n_streamers must be >= 10, got {}", self.n_streamers));
        }
        if self.n_months < 3 {
            return bad(format!("n_months must be >= 3, got {}", self.n_months));
        }
        let probabilities = [
            ("beta", self.beta),
            ("imported_fraction", self.imported_fraction),
            ("fulltime_fraction", self.fulltime_fraction),
            ("trait_min", self.trait_min),
            ("trait_max", self.trait_max),
            ("state_persistence", self.state_persistence),
            ("promo_link_prob", self.promo_link_prob),
            ("base_link_prob", self.base_link_prob),
            ("twitter_adoption", self.twitter_adoption),
            ("youtube_adoption", self.youtube_adoption),
            ("instagram_adoption", self.instagram_adoption),
            ("cheer_zero_rate", self.cheer_zero_rate),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(-1.0..=1.0).contains(&self.trait_quality_corr) {
            return bad(format!(
                "trait_quality_corr must be in [-1, 1], got {}",
                self.trait_quality_corr
            ));
        }
        if self.trait_min > self.trait_max {
            return bad("trait_min exceeds trait_max".into());
        }
        let positive = [
            ("tail_sigma", self.tail_sigma),
            ("imported_followers", self.imported_followers),
            ("base_growth", self.base_growth),
            ("tweets_per_month", self.tweets_per_month),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(self.growth_noise.is_finite() && self.growth_noise >= 0.0) {
            return bad(format!("growth_noise must be >= 0, got {}", self.growth_noise));
        }
        if !(3..=20).contains(&self.broadcast_days) {
            return bad(format!(
                "broadcast_days must be in [3, 20], got {}",
                self.broadcast_days
            ));
        }
        if self.adoption_offset_min > self.adoption_offset_max {
            return bad("adoption_offset_min exceeds adoption_offset_max".into());
        }
        if self.n_games < 10 {
            return bad(format!("n_games must be >= 10, got {}", self.n_games));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed) ^ stream))
}

fn game_name(i: usize) -> String {
    format!("game{i:04}")
}

fn zipf_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-1.1)).collect()
}

fn game_table(config: &SynthConfig) -> GamePopularityTable {
    let mut rng = sub_rng(config.seed, u64::MAX);
    let noise = LogNormal::new(0.0, 0.3).expect("valid");
    let mut table = GamePopularityTable::new();
    for month in 0..=config.n_months {
        for (i, w) in zipf_weights(config.n_games).into_iter().enumerate() {
            let views = (1e7 * w * noise.sample(&mut rng)).round() as u64;
            table.insert(month, game_name(i), views);
        }
    }
    table
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Latent per-streamer parameters.
struct Profile {
    quality: f64,
    initial_followers: f64,
    fulltime: bool,
    p_long: f64,
    p_regular: f64,
    p_promo: f64,
    days_per_month: u32,
    weekdays: [u8; 7],
    start_hour: f64,
    duration_scale: f64,
    favorite_games: Vec<usize>,
    tweet_rate: f64,
    youtube_rate: f64,
    instagram_rate: f64,
    cheer_rate: Option<f64>,
}

fn draw_profile(config: &SynthConfig, rng: &mut ChaCha8Rng, game_weights: &WeightedIndex<f64>) -> Profile {
    let unit: Normal<f64> = Normal::new(0.0, 1.0).expect("valid");
    let z_quality = unit.sample(rng);
    let quality = (config.tail_sigma * z_quality).exp();
    let initial_followers = if rng.random_bool(config.imported_fraction) {
        LogNormal::new(config.imported_followers.ln() - 0.5, 1.0)
            .expect("valid")
            .sample(rng)
    } else {
        0.0
    };
    let fulltime = rng.random_bool(config.fulltime_fraction);
    let rho = config.trait_quality_corr;
    let mut trait_p = || {
        let z = rho * z_quality + (1.0 - rho * rho).sqrt() * unit.sample(rng);
        config.trait_min + (config.trait_max - config.trait_min) * standard_normal_cdf(z)
    };
    let (p_long, p_regular, p_promo) = (trait_p(), trait_p(), trait_p());
    let days_per_month = if fulltime {
        rng.random_range(22..=26)
    } else {
        (config.broadcast_days as i64 + rng.random_range(-1..=1)).max(1) as u32
    };
    let mut weekdays = [0, 1, 2, 3, 4, 5, 6];
    weekdays.shuffle(rng);
    let n_favorites = rng.random_range(3..=8);
    let mut favorite_games = Vec::new();
    while favorite_games.len() < n_favorites {
        let g = game_weights.sample(rng);
        if !favorite_games.contains(&g) {
            favorite_games.push(g);
        }
    }
    Profile {
        quality,
        initial_followers,
        fulltime,
        p_long,
        p_regular,
        p_promo,
        days_per_month,
        weekdays,
        start_hour: rng.random_range(10.0..18.0),
        duration_scale: LogNormal::new(0.0, 0.1).expect("valid").sample(rng),
        favorite_games,
        tweet_rate: config.tweets_per_month * rng.random_range(0.75..1.25),
        youtube_rate: rng.random_range(1.0..5.0),
        instagram_rate: rng.random_range(2.0..8.0),
        cheer_rate: (!rng.random_bool(config.cheer_zero_rate))
            .then(|| 0.002 * LogNormal::new(0.0, 1.0).expect("valid").sample(rng)),
    }
}

/// Day indices (0..30) within month `m` on which the streamer broadcasts.
fn broadcast_days(profile: &Profile, month: u32, regular: bool, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let jitter: i64 = if profile.fulltime { 0 } else { rng.random_range(-1..=1) };
    let n = (profile.days_per_month as i64 + jitter).clamp(1, DAYS_PER_MONTH) as usize;
    let weekday = |d: i64| ((i64::from(month) * DAYS_PER_MONTH + d) % 7) as u8;
    let mut days: Vec<i64> = Vec::with_capacity(n);
    if regular {
        // fixed weekly slots: as few weekdays as can hold n days
        let k = n.div_ceil(4).min(7);
        let slots = &profile.weekdays[..k];
        let mut candidates: Vec<i64> = (0..DAYS_PER_MONTH).filter(|&d| slots.contains(&weekday(d))).collect();
        candidates.shuffle(rng);
        days.extend(candidates.into_iter().take(n));
    } else {
        // spread over as many weekdays as possible
        let mut order = [0u8, 1, 2, 3, 4, 5, 6];
        order.shuffle(rng);
        let mut by_weekday: Vec<Vec<i64>> = order
            .iter()
            .map(|&w| {
                let mut ds: Vec<i64> = (0..DAYS_PER_MONTH).filter(|&d| weekday(d) == w).collect();
                ds.shuffle(rng);
                ds
            })
            .collect();
        let mut i = 0;
        while days.len() < n {
            if let Some(d) = by_weekday[i % 7].pop() {
                days.push(d);
            }
            i += 1;
        }
    }
    days.sort_unstable();
    days
}

struct MonthState {
    long: bool,
    regular: bool,
    promo: bool,
}

fn generate_streamer(
    config: &SynthConfig,
    index: usize,
    id: StreamerId,
    game_weights: &WeightedIndex<f64>,
) -> Streamer {
    let mut rng = sub_rng(config.seed, index as u64);
    let p = draw_profile(config, &mut rng, game_weights);
    let twitch_created = EPOCH + rng.random_range(0..180 * SECONDS_PER_DAY);
    let adopt = |prob: f64, rng: &mut ChaCha8Rng| -> Option<Timestamp> {
        rng.random_bool(prob).then(|| {
            let offset = rng.random_range(config.adoption_offset_min..=config.adoption_offset_max);
            twitch_created + i64::from(offset) * SECONDS_PER_MONTH + rng.random_range(0..SECONDS_PER_MONTH)
        })
    };
    let accounts = AccountInfo {
        twitch_created,
        twitter_created: adopt(config.twitter_adoption, &mut rng),
        youtube_created: adopt(config.youtube_adoption, &mut rng),
        instagram_created: adopt(config.instagram_adoption, &mut rng),
    };

    let growth_noise = LogNormal::new(-0.5 * config.growth_noise.powi(2), config.growth_noise).expect("valid");
    let unit: Normal<f64> = Normal::new(0.0, 1.0).expect("valid");
    let mut followers = p.initial_followers;
    let mut views = 10.0 * p.initial_followers;
    let mut cheers = 0.0;
    let mut broadcasts = Vec::new();
    let mut posts = Vec::new();
    let mut snapshots = Vec::with_capacity(config.n_months as usize);
    let mut prev_state: Option<MonthState> = None;

    for month in 0..config.n_months {
        let month_start = twitch_created + i64::from(month) * SECONDS_PER_MONTH;
        let ccv = 0.02 * followers.powf(0.75) * (0.15 * unit.sample(&mut rng)).exp();
        snapshots.push(PopularitySnapshot {
            month_index: month,
            followers: followers.floor() as u64,
            avg_concurrent_viewers: ccv,
            cumulative_views: views.floor() as u64,
            cheers: cheers as u64,
        });

        let next = |prev: Option<bool>, prob: f64, rng: &mut ChaCha8Rng| match prev {
            Some(b) if rng.random_bool(config.state_persistence) => b,
            _ => rng.random_bool(prob),
        };
        let state = MonthState {
            long: next(prev_state.as_ref().map(|s| s.long), p.p_long, &mut rng),
            regular: next(prev_state.as_ref().map(|s| s.regular), p.p_regular, &mut rng),
            promo: next(prev_state.as_ref().map(|s| s.promo), p.p_promo, &mut rng),
        };

        let mut hours = 0.0;
        for day in broadcast_days(&p, month, state.regular, &mut rng) {
            let mean_hours = match (p.fulltime, state.long) {
                (true, true) => 8.5,
                (true, false) => 6.5,
                (false, true) => 5.0,
                (false, false) => 2.0,
            };
            let duration_h = (mean_hours * p.duration_scale * (0.2 * unit.sample(&mut rng)).exp()).clamp(0.25, 14.0);
            let start_h = (p.start_hour + rng.random_range(-2.0..2.0)).clamp(0.0, 23.5);
            let start = month_start + day * SECONDS_PER_DAY + (start_h * 3600.0) as i64;
            let n_games = rng.random_range(1..=2.min(p.favorite_games.len()));
            let games: Vec<String> = p
                .favorite_games
                .choose_multiple(&mut rng, n_games)
                .map(|&g| game_name(g))
                .collect();
            let empty = rng.random_bool((-ccv).exp().min(1.0));
            broadcasts.push(Broadcast {
                start,
                duration_min: (duration_h * 60.0).round().max(1.0),
                games,
                avg_concurrent_viewers: if empty {
                    0.0
                } else {
                    ccv * (0.3 * unit.sample(&mut rng)).exp()
                },
                had_zero_viewers: empty,
            });
            hours += duration_h;
        }

        let twitter_active = accounts.twitter_created.is_some_and(|c| c <= month_start);
        let month_end = month_start + SECONDS_PER_MONTH;
        let post_times = |created: Option<Timestamp>, rate: f64, rng: &mut ChaCha8Rng| -> Vec<Timestamp> {
            let Some(created) = created else {
                return Vec::new();
            };
            let mut times: Vec<Timestamp> = (0..poisson(rng, rate))
                .map(|_| rng.random_range(month_start..month_end))
                .filter(|&t| t >= created)
                .collect();
            times.sort_unstable();
            times
        };
        for time in post_times(accounts.twitter_created, p.tweet_rate, &mut rng) {
            let link_prob = if state.promo {
                config.promo_link_prob
            } else {
                config.base_link_prob
            };
            let mut post = SocialPost::new(Platform::Twitter, time);
            post.text_length = rng.random_range(10..=280);
            post.has_twitch_url = rng.random_bool(link_prob);
            post.contains_live_keyword = rng.random_bool(0.1);
            post.is_reply = rng.random_bool(0.3);
            posts.push(post);
        }
        for time in post_times(accounts.youtube_created, p.youtube_rate, &mut rng) {
            let mut post = SocialPost::new(Platform::Youtube, time);
            post.title_length = rng.random_range(20..=100);
            post.description_length = rng.random_range(0..=2000);
            post.video_length =
                (LogNormal::new(15f64.ln(), 0.8).expect("valid").sample(&mut rng) * 10.0).round() / 10.0;
            post.has_twitch_url = rng.random_bool(0.5);
            posts.push(post);
        }
        for time in post_times(accounts.instagram_created, p.instagram_rate, &mut rng) {
            let mut post = SocialPost::new(Platform::Instagram, time);
            post.text_length = rng.random_range(0..=500);
            post.tag_count = rng.random_range(0..=15);
            post.has_twitch_url = rng.random_bool(0.2);
            posts.push(post);
        }

        let score = (f64::from(u8::from(state.long))
            + f64::from(u8::from(state.regular))
            + f64::from(u8::from(state.promo && twitter_active)))
            / 3.0;
        let gained = config.base_growth * p.quality * (1.0 + config.beta * score) * growth_noise.sample(&mut rng);
        if let Some(rate) = p.cheer_rate {
            cheers += 100.0 * poisson(&mut rng, rate * followers) as f64;
        }
        views += (1.5 * hours * ccv + 2.0 * gained) * (0.2 * unit.sample(&mut rng)).exp();
        followers += gained;
        prev_state = Some(state);
    }

    let mut streamer = Streamer {
        id,
        accounts,
        broadcasts,
        posts,
        snapshots,
    };
    streamer.sort_events();
    streamer
}

/// Generates a dataset; identical configs give identical datasets
/// regardless of the rayon pool size.
pub fn generate(config: &SynthConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    let game_weights = WeightedIndex::new(zipf_weights(config.n_games)).expect("positive weights");
    let width = config.n_streamers.to_string().len();
    let streamers: Vec<Streamer> = (0..config.n_streamers)
        .into_par_iter()
        .map(|i| generate_streamer(config, i, StreamerId::new(format!("s{i:0width$}")), &game_weights))
        .collect();
    Ok(Dataset::new(streamers, game_table(config))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_streamers: 50,
            n_months: 6,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 2, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        for bad in [
            SynthConfig {
                n_streamers: 5,
                ..small()
            },
            SynthConfig { n_months: 2, ..small() },
            SynthConfig { beta: 1.5, ..small() },
            SynthConfig {
                cheer_zero_rate: -0.1,
                ..small()
            },
        ] {
            assert!(matches!(generate(&bad), Err(SynthError::Config(_))));
        }
    }

    #[test]
    fn regular_months_use_few_weekdays() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = draw_profile(&small(), &mut rng, &WeightedIndex::new(zipf_weights(20)).unwrap());
        let weekdays = |days: &[i64]| {
            days.iter()
                .map(|d| d % 7)
                .collect::<std::collections::BTreeSet<_>>()
                .len()
        };
        let regular = broadcast_days(&p, 0, true, &mut rng);
        let irregular = broadcast_days(&p, 0, false, &mut rng);
        assert!(weekdays(&regular) <= 3);
        assert_eq!(weekdays(&irregular), irregular.len().min(7));
    }
}
