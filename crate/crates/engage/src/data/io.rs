//! Text formats for logs, follower sets, and token embeddings.
//!
//! Log files are UTF-8, tab-separated, one record per line with a
//! `#engage-log v1` header and a `#count N` footer for truncation
//! detection. Sequences are comma-separated, booleans `0`/`1`, absent
//! reaction timestamps are empty fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::record::{
    Embeddings, FollowerSets, InteractionRecord, MediaFlags, TweetType,
};
use crate::error::{EngageError, Result};

pub const LOG_HEADER: &str = "#engage-log v1";
pub const FOLLOWERS_HEADER: &str = "#followers v1";
const LOG_FIELDS: usize = 22;

/// Streaming reader over a log file. Yields records in file order;
/// malformed rows are reported with their line number.
pub struct LogReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    records_seen: u64,
    footer: Option<u64>,
    done: bool,
}

impl LogReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| EngageError::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut line_no = 0;
        // First non-empty line must be the header; a fully empty file is an
        // empty stream.
        loop {
            match lines.next() {
                None => {
                    return Ok(LogReader {
                        path: path.to_path_buf(),
                        lines,
                        line_no,
                        records_seen: 0,
                        footer: None,
                        done: true,
                    })
                }
                Some(Ok(l)) => {
                    line_no += 1;
                    if l.trim().is_empty() {
                        continue;
                    }
                    if l != LOG_HEADER {
                        return Err(EngageError::parse(
                            path,
                            line_no,
                            format!("expected `{LOG_HEADER}` header, got `{l}`"),
                        ));
                    }
                    break;
                }
                Some(Err(e)) => return Err(EngageError::io(path, e)),
            }
        }
        Ok(LogReader {
            path: path.to_path_buf(),
            lines,
            line_no,
            records_seen: 0,
            footer: None,
            done: false,
        })
    }

    fn parse_record(&self, line: &str) -> std::result::Result<InteractionRecord, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != LOG_FIELDS {
            return Err(format!(
                "expected {LOG_FIELDS} tab-separated fields, got {}",
                fields.len()
            ));
        }
        let rec = InteractionRecord {
            tweet_id: parse_num(fields[0], "tweet_id")?,
            engaged_user: parse_num(fields[1], "engaged_user")?,
            engaging_user: parse_num(fields[2], "engaging_user")?,
            tweet_tokens: parse_seq(fields[3], "tweet_tokens")?,
            hashtags: parse_seq(fields[4], "hashtags")?,
            language: parse_num(fields[5], "language")?,
            media_flags: parse_media(fields[6])?,
            tweet_type: {
                let code: u8 = parse_num(fields[7], "tweet_type")?;
                TweetType::from_code(code)
                    .ok_or_else(|| format!("tweet_type {code} out of range"))?
            },
            tweet_timestamp: parse_num(fields[8], "tweet_timestamp")?,
            reaction_timestamps: [
                parse_opt(fields[9], "like_timestamp")?,
                parse_opt(fields[10], "reply_timestamp")?,
                parse_opt(fields[11], "retweet_timestamp")?,
                parse_opt(fields[12], "quote_timestamp")?,
            ],
            engaged_follower_count: parse_num(fields[13], "engaged_follower_count")?,
            engaged_following_count: parse_num(fields[14], "engaged_following_count")?,
            engaging_follower_count: parse_num(fields[15], "engaging_follower_count")?,
            engaging_following_count: parse_num(fields[16], "engaging_following_count")?,
            engaged_verified: parse_bool(fields[17], "engaged_verified")?,
            engaging_verified: parse_bool(fields[18], "engaging_verified")?,
            engaging_follows_engaged: parse_bool(fields[19], "engaging_follows_engaged")?,
            engaged_account_created: parse_num(fields[20], "engaged_account_created")?,
            engaging_account_created: parse_num(fields[21], "engaging_account_created")?,
        };
        rec.validate()?;
        Ok(rec)
    }
}

impl Iterator for LogReader {
    type Item = Result<InteractionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let line = match self.lines.next() {
                None => {
                    self.done = true;
                    if let Some(n) = self.footer {
                        if n != self.records_seen {
                            return Some(Err(EngageError::parse(
                                &self.path,
                                self.line_no,
                                format!(
                                    "footer declares {n} records, file has {}",
                                    self.records_seen
                                ),
                            )));
                        }
                    }
                    return None;
                }
                Some(Ok(l)) => l,
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(EngageError::io(&self.path, e)));
                }
            };
            self.line_no += 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#count ") {
                match rest.trim().parse::<u64>() {
                    Ok(n) => {
                        self.footer = Some(n);
                        continue;
                    }
                    Err(_) => {
                        self.done = true;
                        return Some(Err(EngageError::parse(
                            &self.path,
                            self.line_no,
                            "malformed #count footer",
                        )));
                    }
                }
            }
            if line.starts_with('#') {
                // config echo and other annotations
                continue;
            }
            match self.parse_record(&line) {
                Ok(rec) => {
                    self.records_seen += 1;
                    return Some(Ok(rec));
                }
                Err(msg) => {
                    self.done = true;
                    return Some(Err(EngageError::parse(&self.path, self.line_no, msg)));
                }
            }
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("bad {name}: `{s}`"))
}

fn parse_seq(s: &str, name: &str) -> std::result::Result<Vec<u32>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.parse().map_err(|_| format!("bad {name} entry: `{t}`")))
        .collect()
}

fn parse_opt(s: &str, name: &str) -> std::result::Result<Option<i64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_num(s, name).map(Some)
    }
}

fn parse_bool(s: &str, name: &str) -> std::result::Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("bad {name}: `{s}` (want 0/1)")),
    }
}

fn parse_media(s: &str) -> std::result::Result<MediaFlags, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("media_flags wants 4 comma-separated booleans, got `{s}`"));
    }
    Ok(MediaFlags {
        photo: parse_bool(parts[0], "media photo")?,
        video: parse_bool(parts[1], "media video")?,
        gif: parse_bool(parts[2], "media gif")?,
        link: parse_bool(parts[3], "media link")?,
    })
}

/// Read a whole log into memory.
pub fn read_log(path: &Path) -> Result<Vec<InteractionRecord>> {
    LogReader::open(path)?.collect()
}

fn fmt_seq(xs: &[u32]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn fmt_opt(t: Option<i64>) -> String {
    t.map(|v| v.to_string()).unwrap_or_default()
}

pub fn format_record(r: &InteractionRecord) -> String {
    let m = &r.media_flags;
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{},{},{},{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.tweet_id,
        r.engaged_user,
        r.engaging_user,
        fmt_seq(&r.tweet_tokens),
        fmt_seq(&r.hashtags),
        r.language,
        fmt_bool(m.photo),
        fmt_bool(m.video),
        fmt_bool(m.gif),
        fmt_bool(m.link),
        r.tweet_type.code(),
        r.tweet_timestamp,
        fmt_opt(r.reaction_timestamps[0]),
        fmt_opt(r.reaction_timestamps[1]),
        fmt_opt(r.reaction_timestamps[2]),
        fmt_opt(r.reaction_timestamps[3]),
        r.engaged_follower_count,
        r.engaged_following_count,
        r.engaging_follower_count,
        r.engaging_following_count,
        fmt_bool(r.engaged_verified),
        fmt_bool(r.engaging_verified),
        fmt_bool(r.engaging_follows_engaged),
        r.engaged_account_created,
        r.engaging_account_created,
    )
}

/// Write a log file. `config_echo` lines, when given, are emitted as `#`
/// comments right after the header.
pub fn write_log(
    path: &Path,
    records: &[InteractionRecord],
    config_echo: Option<&str>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| EngageError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "{LOG_HEADER}")?;
        if let Some(echo) = config_echo {
            for line in echo.lines() {
                writeln!(w, "#{line}")?;
            }
        }
        for r in records {
            writeln!(w, "{}", format_record(r))?;
        }
        writeln!(w, "#count {}", records.len())?;
        w.flush()
    })();
    res.map_err(|e| EngageError::io(path, e))
}

pub fn write_followers(path: &Path, followers: &FollowerSets) -> Result<()> {
    let file = File::create(path).map_err(|e| EngageError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "{FOLLOWERS_HEADER}")?;
        for (user, fs) in &followers.followers {
            let list = fs
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(w, "{user}\t{list}")?;
        }
        w.flush()
    })();
    res.map_err(|e| EngageError::io(path, e))
}

pub fn read_followers(path: &Path) -> Result<FollowerSets> {
    let file = File::open(path).map_err(|e| EngageError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = FollowerSets::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EngageError::io(path, e))?;
        if i == 0 {
            if line != FOLLOWERS_HEADER {
                return Err(EngageError::parse(path, 1, "bad followers header"));
            }
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (user, list) = line
            .split_once('\t')
            .ok_or_else(|| EngageError::parse(path, i + 1, "expected user<TAB>followers"))?;
        let user: u64 = user
            .parse()
            .map_err(|_| EngageError::parse(path, i + 1, "bad user id"))?;
        let entry = out.followers.entry(user).or_default();
        if !list.is_empty() {
            for f in list.split(',') {
                let f: u64 = f
                    .parse()
                    .map_err(|_| EngageError::parse(path, i + 1, "bad follower id"))?;
                if f == user {
                    return Err(EngageError::parse(path, i + 1, "user follows itself"));
                }
                entry.insert(f);
            }
        }
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, emb: &Embeddings) -> Result<()> {
    let file = File::create(path).map_err(|e| EngageError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "#emb v1 {} {}", emb.vocab, emb.dim)?;
        for i in 0..emb.vocab {
            let row = emb
                .row(i)
                .iter()
                .map(|v| format!("{v:.9}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{row}")?;
        }
        w.flush()
    })();
    res.map_err(|e| EngageError::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Embeddings> {
    let file = File::open(path).map_err(|e| EngageError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| EngageError::parse(path, 1, "empty embedding file"))?
        .map_err(|e| EngageError::io(path, e))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "#emb" || parts[1] != "v1" {
        return Err(EngageError::parse(path, 1, "bad embedding header"));
    }
    let vocab: usize = parts[2]
        .parse()
        .map_err(|_| EngageError::parse(path, 1, "bad vocab size"))?;
    let dim: usize = parts[3]
        .parse()
        .map_err(|_| EngageError::parse(path, 1, "bad dim"))?;
    let mut emb = Embeddings::zeros(vocab, dim);
    let mut row = 0;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| EngageError::io(path, e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if row >= vocab {
            return Err(EngageError::parse(path, i + 2, "more rows than declared"));
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| EngageError::parse(path, i + 2, "bad embedding value"))?;
        if vals.len() != dim {
            return Err(EngageError::parse(path, i + 2, "wrong embedding width"));
        }
        emb.row_mut(row).copy_from_slice(&vals);
        row += 1;
    }
    if row != vocab {
        return Err(EngageError::parse(path, 0, "fewer rows than declared"));
    }
    Ok(emb)
}
