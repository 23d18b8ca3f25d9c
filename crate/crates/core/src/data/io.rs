//! On-disk dataset layout: `streamers.jsonl`, `broadcasts.jsonl`,
//! `posts.jsonl` and `games.csv` in one directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    AccountInfo, Broadcast, DataError, Dataset, GamePopularityTable, Platform, PopularitySnapshot, SocialPost,
    Streamer, StreamerId, Timestamp,
};

pub const STREAMERS_FILE: &str = "streamers.jsonl";
pub const BROADCASTS_FILE: &str = "broadcasts.jsonl";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const GAMES_FILE: &str = "games.csv";

#[derive(Serialize, Deserialize)]
struct StreamerRecord {
    id: String,
    twitch_created: String,
    #[serde(default)]
    twitter_created: Option<String>,
    #[serde(default)]
    youtube_created: Option<String>,
    #[serde(default)]
    instagram_created: Option<String>,
    snapshots: Vec<PopularitySnapshot>,
}

#[derive(Serialize, Deserialize)]
struct BroadcastRecord {
    streamer: String,
    start: String,
    duration_min: f64,
    #[serde(default)]
    games: Vec<String>,
    #[serde(default)]
    avg_ccv: f64,
    #[serde(default)]
    zero_viewers: bool,
}

#[derive(Serialize, Deserialize)]
struct PostRecord {
    streamer: String,
    platform: Platform,
    time: String,
    #[serde(default)]
    text_length: u32,
    #[serde(default)]
    has_twitch_url: bool,
    #[serde(default)]
    contains_live_keyword: bool,
    #[serde(default)]
    is_reply: bool,
    #[serde(default)]
    tag_count: u32,
    #[serde(default)]
    video_length: f64,
    #[serde(default)]
    title_length: u32,
    #[serde(default)]
    description_length: u32,
}

#[derive(Serialize, Deserialize)]
struct GameRecord {
    month_index: u32,
    game_id: String,
    total_views: u64,
}

/// Parses an ISO-8601 UTC timestamp with a `Z` suffix and whole seconds.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    if !s.ends_with('Z') {
        return Err(format!("timestamp {s:?} must end with 'Z'"));
    }
    let dt = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
    if dt.timestamp_subsec_nanos() != 0 {
        return Err(format!("timestamp {s:?} has fractional seconds"));
    }
    Ok(dt.timestamp())
}

pub fn format_timestamp(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp in chrono range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>, DataError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    File::open(&path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Calls `f` with (1-based line number, parsed record) for every non-blank line.
fn read_jsonl<T: for<'de> Deserialize<'de>>(
    dir: &Path,
    name: &str,
    mut f: impl FnMut(usize, T) -> Result<(), DataError>,
) -> Result<(), DataError> {
    let reader = open(dir, name)?;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io {
            path: dir.join(name).display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| malformed(name, line_no, e.to_string()))?;
        f(line_no, record)?;
    }
    Ok(())
}

fn malformed(file: &str, line: usize, message: impl Into<String>) -> DataError {
    DataError::Malformed {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn ts(file: &str, line: usize, s: &str) -> Result<Timestamp, DataError> {
    parse_timestamp(s).map_err(|m| malformed(file, line, m))
}

fn opt_ts(file: &str, line: usize, s: &Option<String>) -> Result<Option<Timestamp>, DataError> {
    s.as_deref().map(|s| ts(file, line, s)).transpose()
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let mut streamers: BTreeMap<StreamerId, Streamer> = BTreeMap::new();

    read_jsonl(dir, STREAMERS_FILE, |line, r: StreamerRecord| {
        if r.id.is_empty() {
            return Err(malformed(STREAMERS_FILE, line, "empty streamer id"));
        }
        let id = StreamerId::new(r.id);
        let accounts = AccountInfo {
            twitch_created: ts(STREAMERS_FILE, line, &r.twitch_created)?,
            twitter_created: opt_ts(STREAMERS_FILE, line, &r.twitter_created)?,
            youtube_created: opt_ts(STREAMERS_FILE, line, &r.youtube_created)?,
            instagram_created: opt_ts(STREAMERS_FILE, line, &r.instagram_created)?,
        };
        if streamers.contains_key(&id) {
            return Err(malformed(STREAMERS_FILE, line, format!("duplicate streamer id {id}")));
        }
        streamers.insert(
            id.clone(),
            Streamer {
                id,
                accounts,
                broadcasts: Vec::new(),
                posts: Vec::new(),
                snapshots: r.snapshots,
            },
        );
        Ok(())
    })?;
    if streamers.is_empty() {
        return Err(DataError::NoStreamers);
    }

    read_jsonl(dir, BROADCASTS_FILE, |line, r: BroadcastRecord| {
        let start = ts(BROADCASTS_FILE, line, &r.start)?;
        let s = streamers
            .get_mut(&StreamerId::new(r.streamer.clone()))
            .ok_or_else(|| malformed(BROADCASTS_FILE, line, format!("unknown streamer {}", r.streamer)))?;
        s.broadcasts.push(Broadcast {
            start,
            duration_min: r.duration_min,
            games: r.games,
            avg_concurrent_viewers: r.avg_ccv,
            had_zero_viewers: r.zero_viewers,
        });
        Ok(())
    })?;

    read_jsonl(dir, POSTS_FILE, |line, r: PostRecord| {
        let time = ts(POSTS_FILE, line, &r.time)?;
        let s = streamers
            .get_mut(&StreamerId::new(r.streamer.clone()))
            .ok_or_else(|| malformed(POSTS_FILE, line, format!("unknown streamer {}", r.streamer)))?;
        s.posts.push(SocialPost {
            platform: r.platform,
            time,
            text_length: r.text_length,
            has_twitch_url: r.has_twitch_url,
            contains_live_keyword: r.contains_live_keyword,
            is_reply: r.is_reply,
            tag_count: r.tag_count,
            video_length: r.video_length,
            title_length: r.title_length,
            description_length: r.description_length,
        });
        Ok(())
    })?;

    let mut game_table = GamePopularityTable::new();
    let mut reader = csv::Reader::from_reader(open(dir, GAMES_FILE)?);
    for (i, rec) in reader.deserialize::<GameRecord>().enumerate() {
        // header is line 1
        let rec = rec.map_err(|e| malformed(GAMES_FILE, i + 2, e.to_string()))?;
        game_table.insert(rec.month_index, rec.game_id, rec.total_views);
    }

    Dataset::new(streamers.into_values(), game_table)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, DataError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(dir: &Path, name: &str) -> impl Fn(std::io::Error) -> DataError {
    let path = dir.join(name).display().to_string();
    move |source| DataError::Io {
        path: path.clone(),
        source,
    }
}

fn write_line<T: Serialize>(w: &mut impl Write, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")
}

/// Writes a dataset in the on-disk layout; the output is deterministic.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir, ""))?;

    let mut w = create(dir, STREAMERS_FILE)?;
    for s in dataset.streamers() {
        let rec = StreamerRecord {
            id: s.id.to_string(),
            twitch_created: format_timestamp(s.accounts.twitch_created),
            twitter_created: s.accounts.twitter_created.map(format_timestamp),
            youtube_created: s.accounts.youtube_created.map(format_timestamp),
            instagram_created: s.accounts.instagram_created.map(format_timestamp),
            snapshots: s.snapshots.clone(),
        };
        write_line(&mut w, &rec).map_err(io_err(dir, STREAMERS_FILE))?;
    }
    w.flush().map_err(io_err(dir, STREAMERS_FILE))?;

    let mut w = create(dir, BROADCASTS_FILE)?;
    for s in dataset.streamers() {
        for b in &s.broadcasts {
            let rec = BroadcastRecord {
                streamer: s.id.to_string(),
                start: format_timestamp(b.start),
                duration_min: b.duration_min,
                games: b.games.clone(),
                avg_ccv: b.avg_concurrent_viewers,
                zero_viewers: b.had_zero_viewers,
            };
            write_line(&mut w, &rec).map_err(io_err(dir, BROADCASTS_FILE))?;
        }
    }
    w.flush().map_err(io_err(dir, BROADCASTS_FILE))?;

    let mut w = create(dir, POSTS_FILE)?;
    for s in dataset.streamers() {
        for p in &s.posts {
            let rec = PostRecord {
                streamer: s.id.to_string(),
                platform: p.platform,
                time: format_timestamp(p.time),
                text_length: p.text_length,
                has_twitch_url: p.has_twitch_url,
                contains_live_keyword: p.contains_live_keyword,
                is_reply: p.is_reply,
                tag_count: p.tag_count,
                video_length: p.video_length,
                title_length: p.title_length,
                description_length: p.description_length,
            };
            write_line(&mut w, &rec).map_err(io_err(dir, POSTS_FILE))?;
        }
    }
    w.flush().map_err(io_err(dir, POSTS_FILE))?;

    let mut w = csv::Writer::from_writer(create(dir, GAMES_FILE)?);
    w.write_record(["month_index", "game_id", "total_views"])
        .map_err(|e| malformed(GAMES_FILE, 1, e.to_string()))?;
    for (month, game, views) in dataset.game_table.iter() {
        w.write_record([month.to_string(), game.to_string(), views.to_string()])
            .map_err(|e| malformed(GAMES_FILE, 0, e.to_string()))?;
    }
    w.flush().map_err(io_err(dir, GAMES_FILE))?;
    Ok(())
}
