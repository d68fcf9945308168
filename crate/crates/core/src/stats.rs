//! Cumulative exposure, impression and click counters frozen at fixed
//! bucket boundaries, and the EPI / avoidance ratios derived from them.
//!
//! A snapshot at boundary `b` aggregates exactly the records with
//! `time < b`. Features for an impression at time `t` come from
//! [`BucketTimeline::snapshot_at`], the latest boundary `<= t`, so an
//! impression never sees itself or anything after it.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use crate::corpus::ImpressionRecord;
use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA: &str = "awrs.snapshot.v1";

/// Counters for one article up to a boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArticleCounters {
    pub exposures: u64,
    pub clicks: u64,
    /// Time of the first record that showed the article.
    pub first_seen: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatsSnapshot {
    /// Boundary time; the snapshot covers records with `time < t`.
    pub t: i64,
    pub impressions: u64,
    articles: BTreeMap<Arc<str>, ArticleCounters>,
}

impl StatsSnapshot {
    pub fn empty(t: i64) -> Self {
        Self {
            t,
            impressions: 0,
            articles: BTreeMap::new(),
        }
    }

    pub fn counters(&self, news_id: &str) -> Option<&ArticleCounters> {
        self.articles.get(news_id)
    }

    pub fn exposures(&self, news_id: &str) -> u64 {
        self.counters(news_id).map_or(0, |c| c.exposures)
    }

    pub fn clicks(&self, news_id: &str) -> u64 {
        self.counters(news_id).map_or(0, |c| c.clicks)
    }

    pub fn first_seen(&self, news_id: &str) -> Option<i64> {
        self.counters(news_id).map(|c| c.first_seen)
    }

    /// Exposures per impression, `n_E / n_I`; 0 when there are no
    /// impressions yet.
    pub fn epi(&self, news_id: &str) -> f64 {
        epi(self.exposures(news_id), self.impressions)
    }

    /// `1 - n_clk / n_E`; 1 for an article that has never been shown.
    pub fn avoidance(&self, news_id: &str) -> f64 {
        let c = self.counters(news_id);
        avoidance(c.map_or(0, |c| c.clicks), c.map_or(0, |c| c.exposures))
    }

    pub fn articles(&self) -> impl Iterator<Item = (&str, &ArticleCounters)> {
        self.articles.iter().map(|(k, v)| (&**k, v))
    }

    pub fn num_articles(&self) -> usize {
        self.articles.len()
    }

    pub fn max_clicks(&self) -> u64 {
        self.articles.values().map(|c| c.clicks).max().unwrap_or(0)
    }

    pub fn total_exposures(&self) -> u64 {
        self.articles.values().map(|c| c.exposures).sum()
    }

    pub fn total_clicks(&self) -> u64 {
        self.articles.values().map(|c| c.clicks).sum()
    }

    /// Adds one record's contribution.
    pub fn apply(&mut self, record: &ImpressionRecord) {
        self.impressions += 1;
        for (id, label) in &record.shown {
            let slot = match self.articles.get_mut(id.as_str()) {
                Some(s) => s,
                None => self
                    .articles
                    .entry(Arc::from(id.as_str()))
                    .or_insert(ArticleCounters {
                        exposures: 0,
                        clicks: 0,
                        first_seen: record.time,
                    }),
            };
            slot.exposures += 1;
            slot.clicks += u64::from(*label == 1);
        }
    }
}

pub fn epi(exposures: u64, impressions: u64) -> f64 {
    if impressions == 0 {
        0.0
    } else {
        exposures as f64 / impressions as f64
    }
}

pub fn avoidance(clicks: u64, exposures: u64) -> f64 {
    if exposures == 0 {
        1.0
    } else {
        1.0 - clicks as f64 / exposures as f64
    }
}

/// Snapshots at `origin + k * bucket_width` for `k = 1..=K`, where the last
/// boundary is the first one strictly after the final record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BucketTimeline {
    pub bucket_width: i64,
    pub origin: i64,
    snapshots: Vec<StatsSnapshot>,
    zero: StatsSnapshot,
}

impl BucketTimeline {
    pub fn snapshots(&self) -> &[StatsSnapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn boundary(&self, k: usize) -> i64 {
        self.origin + (k as i64 + 1) * self.bucket_width
    }

    /// Snapshot with the largest boundary `<= t`, or the all-zero snapshot
    /// when `t` precedes the first boundary.
    pub fn snapshot_at(&self, t: i64) -> &StatsSnapshot {
        if self.snapshots.is_empty() || t < self.boundary(0) {
            return &self.zero;
        }
        let k = ((t - self.origin) / self.bucket_width) as usize;
        &self.snapshots[k.min(self.snapshots.len()) - 1]
    }

    /// Writes every snapshot as CSV (see [`write_snapshot_csv`]).
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = snapshot_csv_writer(out)?;
        for s in &self.snapshots {
            write_snapshot_rows(&mut w, s)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Incremental, record-by-record timeline construction.
#[derive(Debug)]
pub struct TimelineBuilder {
    bucket_width: i64,
    origin: Option<i64>,
    last_time: Option<i64>,
    running: StatsSnapshot,
    snapshots: Vec<StatsSnapshot>,
    seen: usize,
}

impl TimelineBuilder {
    pub fn new(bucket_width: i64) -> Result<Self> {
        if bucket_width <= 0 {
            return Err(Error::Config(format!("bucket width must be positive, got {bucket_width}")));
        }
        Ok(Self {
            bucket_width,
            origin: None,
            last_time: None,
            running: StatsSnapshot::empty(0),
            snapshots: Vec::new(),
            seen: 0,
        })
    }

    fn next_boundary(&self, origin: i64) -> i64 {
        origin + (self.snapshots.len() as i64 + 1) * self.bucket_width
    }

    pub fn push(&mut self, record: &ImpressionRecord) -> Result<()> {
        if let Some(prev) = self.last_time {
            if record.time < prev {
                return Err(Error::UnsortedLog {
                    index: self.seen,
                    time: record.time,
                    previous: prev,
                });
            }
        }
        let origin = *self.origin.get_or_insert(record.time);
        while record.time >= self.next_boundary(origin) {
            let mut snap = self.running.clone();
            snap.t = self.next_boundary(origin);
            self.snapshots.push(snap);
        }
        self.running.apply(record);
        self.last_time = Some(record.time);
        self.seen += 1;
        Ok(())
    }

    pub fn finish(mut self) -> BucketTimeline {
        let origin = self.origin.unwrap_or(0);
        if let Some(last) = self.last_time {
            loop {
                let b = self.next_boundary(origin);
                let mut snap = self.running.clone();
                snap.t = b;
                self.snapshots.push(snap);
                if b > last {
                    break;
                }
            }
        }
        BucketTimeline {
            bucket_width: self.bucket_width,
            origin,
            snapshots: self.snapshots,
            zero: StatsSnapshot::empty(origin),
        }
    }
}

/// Builds the timeline over a time-sorted log.
pub fn build_timeline(log: &[ImpressionRecord], bucket_width: i64) -> Result<BucketTimeline> {
    let mut b = TimelineBuilder::new(bucket_width)?;
    for r in log {
        b.push(r)?;
    }
    Ok(b.finish())
}

/// Snapshot at `boundary` recomputed from scratch over the prefix of the
/// log with `time < boundary`.
pub fn snapshot_from_prefix(log: &[ImpressionRecord], boundary: i64) -> StatsSnapshot {
    let mut s = StatsSnapshot::empty(boundary);
    for r in log.iter().filter(|r| r.time < boundary) {
        s.apply(r);
    }
    s
}

const GLOBAL_ROW: &str = "*";

pub(crate) fn snapshot_csv_writer<W: Write>(mut out: W) -> Result<csv::Writer<W>> {
    writeln!(out, "# schema={SNAPSHOT_SCHEMA}").map_err(|e| Error::io("<csv>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "news_id", "n_I", "n_E", "n_clk", "epi", "avoidance", "norm_clicks"])?;
    Ok(w)
}

/// One global row (`news_id = *`, carrying `n_I` and totals) followed by
/// one row per article, sorted by news id.
pub(crate) fn write_snapshot_rows<W: Write>(w: &mut csv::Writer<W>, s: &StatsSnapshot) -> Result<()> {
    let t = s.t.to_string();
    w.write_record([
        t.as_str(),
        GLOBAL_ROW,
        &s.impressions.to_string(),
        &s.total_exposures().to_string(),
        &s.total_clicks().to_string(),
        "",
        "",
        "",
    ])?;
    let max = s.max_clicks();
    for (id, c) in s.articles() {
        let norm = if max == 0 {
            0.0
        } else {
            c.clicks as f64 / max as f64
        };
        w.write_record([
            t.as_str(),
            id,
            "",
            &c.exposures.to_string(),
            &c.clicks.to_string(),
            &epi(c.exposures, s.impressions).to_string(),
            &avoidance(c.clicks, c.exposures).to_string(),
            &norm.to_string(),
        ])?;
    }
    Ok(())
}

/// Single-snapshot CSV in the export schema.
pub fn write_snapshot_csv(out: impl Write, s: &StatsSnapshot) -> Result<()> {
    let mut w = snapshot_csv_writer(out)?;
    write_snapshot_rows(&mut w, s)?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: i64, shown: &[(&str, u8)]) -> ImpressionRecord {
        ImpressionRecord {
            impression_id: format!("i{time}"),
            user_id: "U".into(),
            time,
            history: vec![],
            shown: shown.iter().map(|(n, l)| (n.to_string(), *l)).collect(),
        }
    }

    #[test]
    fn single_record() {
        let tl = build_timeline(&[rec(0, &[("A", 1), ("B", 0)])], 3600).unwrap();
        assert_eq!(tl.len(), 1);
        let s = &tl.snapshots()[0];
        assert_eq!(s.t, 3600);
        assert_eq!(s.impressions, 1);
        assert_eq!((s.exposures("A"), s.exposures("B")), (1, 1));
        assert_eq!((s.clicks("A"), s.clicks("B")), (1, 0));
    }

    #[test]
    fn empty_log_has_no_buckets() {
        assert!(build_timeline(&[], 3600).unwrap().is_empty());
    }

    #[test]
    fn later_record_excluded_from_earlier_boundary() {
        let log = [rec(0, &[("A", 1)]), rec(7200, &[("A", 0)])];
        let tl = build_timeline(&log, 3600).unwrap();
        assert_eq!(tl.snapshots().iter().map(|s| s.t).collect::<Vec<_>>(), [3600, 7200, 10800]);
        assert_eq!(tl.snapshot_at(3600).impressions, 1);
        assert_eq!(tl.snapshot_at(7200).impressions, 1);
        assert_eq!(tl.snapshot_at(10800).impressions, 2);
    }

    #[test]
    fn record_on_boundary_lands_in_next_bucket() {
        let log = [rec(0, &[("A", 1)]), rec(3600, &[("A", 0)])];
        let tl = build_timeline(&log, 3600).unwrap();
        assert_eq!(tl.len(), 2);
        assert_eq!(tl.snapshots()[0].impressions, 1);
        assert_eq!(tl.snapshots()[1].impressions, 2);
    }

    #[test]
    fn unsorted_is_rejected() {
        let log = [rec(10, &[("A", 1)]), rec(5, &[("A", 0)])];
        assert!(matches!(build_timeline(&log, 60), Err(Error::UnsortedLog { index: 1, .. })));
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(build_timeline(&[], 0).is_err());
    }

    #[test]
    fn epi_worked_example() {
        assert_eq!(epi(50, 100), 0.5);
        assert_eq!(epi(7, 0), 0.0);
        assert_eq!(epi(100, 100), 1.0);
    }

    #[test]
    fn avoidance_worked_example() {
        assert!((avoidance(20, 50) - 0.6).abs() < 1e-15);
        assert_eq!(avoidance(50, 50), 0.0);
        assert_eq!(avoidance(0, 0), 1.0);
    }

    #[test]
    fn unseen_article() {
        let tl = build_timeline(&[rec(0, &[("A", 1)])], 10).unwrap();
        let s = tl.snapshot_at(10);
        assert_eq!(s.epi("Z"), 0.0);
        assert_eq!(s.avoidance("Z"), 1.0);
    }

    #[test]
    fn snapshot_lookup() {
        let log = [rec(0, &[("A", 1)]), rec(15, &[("A", 1)]), rec(25, &[("B", 0)])];
        let tl = build_timeline(&log, 10).unwrap();
        assert_eq!(tl.snapshot_at(20).t, 20);
        assert_eq!(tl.snapshot_at(25).t, 20);
        assert_eq!(tl.snapshot_at(5).impressions, 0);
        assert_eq!(tl.snapshot_at(5).num_articles(), 0);
        assert_eq!(tl.snapshot_at(1000).impressions, 3);
    }

    #[test]
    fn first_seen_tracks_first_exposure() {
        let log = [rec(3, &[("A", 0)]), rec(15, &[("A", 1), ("B", 0)])];
        let tl = build_timeline(&log, 10).unwrap();
        assert_eq!(tl.snapshot_at(20).first_seen("B"), None);
        let s = tl.snapshot_at(23);
        assert_eq!(s.first_seen("A"), Some(3));
        assert_eq!(s.first_seen("B"), Some(15));
    }

    #[test]
    fn csv_has_global_and_article_rows() {
        let tl = build_timeline(&[rec(0, &[("A", 1), ("B", 0)])], 3600).unwrap();
        let mut buf = Vec::new();
        tl.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# schema=awrs.snapshot.v1");
        assert_eq!(lines[1], "t,news_id,n_I,n_E,n_clk,epi,avoidance,norm_clicks");
        assert_eq!(lines[2], "3600,*,1,2,1,,,");
        assert_eq!(lines[3], "3600,A,,1,1,1,0,1");
        assert_eq!(lines[4], "3600,B,,1,0,1,1,0");
    }
}
