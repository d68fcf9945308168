use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{is_jsonl, RowError};

const MIND_TIME_FORMAT: &str = "%m/%d/%Y %I:%M:%S %p";

/// One behaviors-log row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    pub impression_id: String,
    pub user_id: String,
    /// Epoch seconds, UTC.
    pub time: i64,
    /// Previously clicked news ids, oldest first.
    pub history: Vec<String>,
    /// Displayed candidates with click label 0 or 1.
    pub shown: Vec<(String, u8)>,
}

impl ImpressionRecord {
    pub fn clicked(&self) -> impl Iterator<Item = &str> {
        self.shown
            .iter()
            .filter(|(_, l)| *l == 1)
            .map(|(n, _)| n.as_str())
    }

    pub fn not_clicked(&self) -> impl Iterator<Item = &str> {
        self.shown
            .iter()
            .filter(|(_, l)| *l == 0)
            .map(|(n, _)| n.as_str())
    }

    /// MIND TSV line (without trailing newline).
    pub fn to_tsv_line(&self) -> String {
        let shown: Vec<String> = self
            .shown
            .iter()
            .map(|(n, l)| format!("{n}-{l}"))
            .collect();
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.impression_id,
            self.user_id,
            format_mind_time(self.time),
            self.history.join(" "),
            shown.join(" ")
        )
    }
}

/// Parses the MIND time layout ("11/11/2019 9:05:58 AM") as UTC.
pub fn parse_mind_time(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s.trim(), MIND_TIME_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_mind_time(epoch: i64) -> String {
    DateTime::from_timestamp(epoch, 0)
        .map(|t| t.format("%-m/%-d/%Y %-I:%M:%S %p").to_string())
        .unwrap_or_default()
}

fn parse_candidate(tok: &str) -> std::result::Result<(String, u8), String> {
    let (id, label) = tok
        .rsplit_once('-')
        .ok_or_else(|| format!("candidate `{tok}` has no label"))?;
    match label {
        "0" => Ok((id.to_owned(), 0)),
        "1" => Ok((id.to_owned(), 1)),
        _ => Err(format!("candidate `{tok}` has invalid label `{label}`")),
    }
}

fn parse_tsv_row(line: &str) -> std::result::Result<ImpressionRecord, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 5 {
        return Err(format!("expected 5 tab-separated columns, got {}", cols.len()));
    }
    let time = parse_mind_time(cols[2]).ok_or_else(|| format!("unparseable time `{}`", cols[2]))?;
    let history = cols[3].split_whitespace().map(str::to_owned).collect();
    let shown = cols[4]
        .split_whitespace()
        .map(parse_candidate)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if shown.is_empty() {
        return Err("impression shows no candidates".into());
    }
    Ok(ImpressionRecord {
        impression_id: cols[0].to_owned(),
        user_id: cols[1].to_owned(),
        time,
        history,
        shown,
    })
}

fn parse_json_row(line: &str) -> std::result::Result<ImpressionRecord, String> {
    let r: ImpressionRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if let Some((n, l)) = r.shown.iter().find(|(_, l)| *l > 1) {
        return Err(format!("candidate `{n}` has invalid label `{l}`"));
    }
    if r.shown.is_empty() {
        return Err("impression shows no candidates".into());
    }
    Ok(r)
}

/// Parsed impression log, sorted ascending by time.
#[derive(Clone, Debug, Default)]
pub struct BehaviorsLog {
    pub records: Vec<ImpressionRecord>,
    pub skipped: Vec<RowError>,
}

/// Parses a MIND `behaviors.tsv` (or JSONL interchange when the path ends
/// in `.jsonl`). Bad rows are skipped and counted; records come back
/// stably sorted by time.
pub fn parse_behaviors_file(path: impl AsRef<Path>) -> Result<BehaviorsLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_behaviors_str(&text, is_jsonl(path)))
}

pub fn parse_behaviors_str(text: &str, jsonl: bool) -> BehaviorsLog {
    let mut log = BehaviorsLog::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = if jsonl {
            parse_json_row(line)
        } else {
            parse_tsv_row(line)
        };
        match row {
            Ok(r) => log.records.push(r),
            Err(message) => log.skipped.push(RowError {
                line: i + 1,
                message,
            }),
        }
    }
    log.records.sort_by_key(|r| r.time);
    log
}

pub fn write_behaviors_tsv(records: &[ImpressionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_tsv_line());
        out.push('\n');
    }
    out
}

pub fn write_behaviors_jsonl(records: &[ImpressionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
