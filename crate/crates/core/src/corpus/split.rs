use serde::{Deserialize, Serialize};

use super::ImpressionRecord;

const DAY: i64 = 86_400;

/// Chronological train / validation / test partition of an impression log.
/// Records with `time < train_end` train, `train_end <= time < valid_end`
/// validate, the rest test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub train_end: i64,
    pub valid_end: i64,
}

impl TimeSplit {
    /// Day-aligned split: `train_days` whole UTC days starting at the day
    /// of the first record, then `valid_days`, then everything after.
    pub fn by_days(records: &[ImpressionRecord], train_days: i64, valid_days: i64) -> Self {
        let start = records
            .iter()
            .map(|r| r.time)
            .min()
            .map_or(0, |t| t.div_euclid(DAY) * DAY);
        Self {
            train_end: start + train_days * DAY,
            valid_end: start + (train_days + valid_days) * DAY,
        }
    }

    /// Splits at record-count fractions of a time-sorted log.
    pub fn by_fraction(records: &[ImpressionRecord], train: f64, valid: f64) -> Self {
        if records.is_empty() {
            return Self {
                train_end: 0,
                valid_end: 0,
            };
        }
        let n = records.len();
        let at = |frac: f64| -> i64 {
            let i = ((n as f64) * frac).round() as usize;
            if i >= n {
                records[n - 1].time + 1
            } else {
                records[i].time
            }
        };
        Self {
            train_end: at(train),
            valid_end: at(train + valid),
        }
    }

    pub fn partition<'a>(
        &self,
        records: &'a [ImpressionRecord],
    ) -> (Vec<&'a ImpressionRecord>, Vec<&'a ImpressionRecord>, Vec<&'a ImpressionRecord>) {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for r in records {
            if r.time < self.train_end {
                out.0.push(r);
            } else if r.time < self.valid_end {
                out.1.push(r);
            } else {
                out.2.push(r);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: i64) -> ImpressionRecord {
        ImpressionRecord {
            impression_id: time.to_string(),
            user_id: "U".into(),
            time,
            history: vec![],
            shown: vec![("N".into(), 0)],
        }
    }

    #[test]
    fn five_one_one_days() {
        let base = 1_573_257_600; // 2019-11-09 00:00 UTC
        let rs: Vec<_> = (0..7).map(|d| rec(base + d * DAY + 3600)).collect();
        let split = TimeSplit::by_days(&rs, 5, 1);
        let (tr, va, te) = split.partition(&rs);
        assert_eq!((tr.len(), va.len(), te.len()), (5, 1, 1));
    }

    #[test]
    fn fractions() {
        let rs: Vec<_> = (0..10).map(rec).collect();
        let (tr, va, te) = TimeSplit::by_fraction(&rs, 0.6, 0.2).partition(&rs);
        assert_eq!((tr.len(), va.len(), te.len()), (6, 2, 2));
    }
}
