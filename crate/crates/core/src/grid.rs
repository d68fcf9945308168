//! Quantization of (avoidance, EPI) onto a D x D grid and the trainable
//! per-cell engagement embedding table.

use std::io::Write;

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::stats::StatsSnapshot;

pub const GRID_SCHEMA: &str = "awrs.grid.v1";

/// Grid resolutions swept in the D experiment.
pub const D_SWEEP: [usize; 5] = [5, 7, 10, 15, 20];

/// Equal-width bin of `value` (clamped to `[0, 1]`) among `d` bins; 1.0
/// falls in the last bin.
pub fn quantize(value: f64, d: usize) -> usize {
    debug_assert!(d > 0);
    let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
    ((v * d as f64).floor() as usize).min(d - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EngagementIndex {
    pub av_idx: usize,
    pub epi_idx: usize,
    /// Flat cell index, `d * epi_idx + av_idx`.
    pub i_ue: usize,
}

impl EngagementIndex {
    pub fn from_cell(av_idx: usize, epi_idx: usize, d: usize) -> Self {
        Self {
            av_idx,
            epi_idx,
            i_ue: d * epi_idx + av_idx,
        }
    }

    pub fn from_flat(i_ue: usize, d: usize) -> Self {
        Self {
            av_idx: i_ue % d,
            epi_idx: i_ue / d,
            i_ue,
        }
    }
}

pub fn engagement_index(av: f64, epi: f64, d: usize) -> EngagementIndex {
    EngagementIndex::from_cell(quantize(av, d), quantize(epi, d), d)
}

/// Engagement cell of `news_id` in `snapshot`.
pub fn article_cell(snapshot: &StatsSnapshot, news_id: &str, d: usize) -> EngagementIndex {
    engagement_index(snapshot.avoidance(news_id), snapshot.epi(news_id), d)
}

/// The `d^2 x dim_ue` table of engagement embeddings, registered in a
/// [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngagementEmbeddingTable {
    pub d: usize,
    pub dim_ue: usize,
    pub table: ParamId,
}

impl EngagementEmbeddingTable {
    pub fn new<F: Real>(store: &mut ParamStore<F>, d: usize, dim_ue: usize, rng: &mut impl Rng) -> Self {
        let table = store.add_uniform("engagement.table", d * d, dim_ue, 0.1, rng);
        Self { d, dim_ue, table }
    }

    pub fn cells(&self) -> usize {
        self.d * self.d
    }

    fn check(&self, i_ue: usize) -> Result<()> {
        if i_ue >= self.cells() {
            return Err(Error::OutOfRange {
                what: "engagement table",
                index: i_ue,
                len: self.cells(),
            });
        }
        Ok(())
    }

    /// Row `i_ue` as a plain slice.
    pub fn lookup<'s, F: Real>(&self, store: &'s ParamStore<F>, i_ue: usize) -> Result<&'s [F]> {
        self.check(i_ue)?;
        Ok(store.get(self.table).row_slice(i_ue))
    }

    /// Rows for `indices` as a differentiable `n x dim_ue` node.
    pub fn embed<F: Real>(&self, tape: &mut Tape<'_, F>, indices: &[usize]) -> Result<Var> {
        for &i in indices {
            self.check(i)?;
        }
        tape.embedding(self.table, indices)
    }
}

/// Number of articles per grid cell in one snapshot.
pub fn cell_counts(snapshot: &StatsSnapshot, d: usize) -> Vec<usize> {
    let mut counts = vec![0; d * d];
    for (id, _) in snapshot.articles() {
        counts[article_cell(snapshot, id, d).i_ue] += 1;
    }
    counts
}

/// Writes `t, i_ue, av_idx, epi_idx, article_count` rows for each snapshot.
pub fn write_grid_csv<'a>(
    mut out: impl Write,
    snapshots: impl IntoIterator<Item = &'a StatsSnapshot>,
    d: usize,
) -> Result<()> {
    writeln!(out, "# schema={GRID_SCHEMA}").map_err(|e| Error::io("<csv>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "i_ue", "av_idx", "epi_idx", "article_count"])?;
    for s in snapshots {
        for (i, count) in cell_counts(s, d).into_iter().enumerate() {
            let idx = EngagementIndex::from_flat(i, d);
            w.write_record([
                s.t.to_string(),
                i.to_string(),
                idx.av_idx.to_string(),
                idx.epi_idx.to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Adam;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_edges() {
        assert_eq!(quantize(0.0, 5), 0);
        assert_eq!(quantize(1.0, 5), 4);
        assert_eq!(quantize(-0.3, 5), 0);
        assert_eq!(quantize(7.0, 5), 4);
    }

    #[test]
    fn quantize_matches_bin_edges() {
        // Oracle: find the bin whose [lo, hi) contains the value.
        let d = 5;
        for &v in &[0.6, 0.19999, 0.2, 0.39, 0.8, 0.99] {
            let oracle = (0..d)
                .find(|&k| v >= k as f64 / d as f64 && v < (k + 1) as f64 / d as f64)
                .unwrap();
            assert_eq!(quantize(v, d), oracle, "value {v}");
        }
        assert_eq!(quantize(0.6, 5), 3);
    }

    #[test]
    fn flat_index() {
        assert_eq!(engagement_index(0.0, 0.0, 5).i_ue, 0);
        assert_eq!(EngagementIndex::from_cell(3, 2, 5).i_ue, 13);
    }

    #[test]
    fn d5_has_25_cells() {
        let mut seen = std::collections::HashSet::new();
        for a in 0..=100 {
            for e in 0..=100 {
                seen.insert(engagement_index(a as f64 / 100.0, e as f64 / 100.0, 5).i_ue);
            }
        }
        assert_eq!(seen.len(), 25);
        assert!(seen.iter().all(|&i| i < 25));
    }

    #[test]
    fn lookup_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let table = EngagementEmbeddingTable::new(&mut store, 5, 4, &mut rng);
        assert_eq!(store.get(table.table).rows(), 25);
        assert_eq!(table.lookup(&store, 7).unwrap(), table.lookup(&store, 7).unwrap());
        assert!(matches!(table.lookup(&store, 25), Err(Error::OutOfRange { index: 25, .. })));
        let mut tape = Tape::new(&store);
        assert!(table.embed(&mut tape, &[25]).is_err());
    }

    #[test]
    fn update_touching_one_cell_leaves_others() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let table = EngagementEmbeddingTable::new(&mut store, 5, 3, &mut rng);
        let before = store.get(table.table).clone();
        let grads = {
            let mut tape = Tape::new(&store);
            let e = table.embed(&mut tape, &[7]).unwrap();
            let sq = tape.mul(e, e).unwrap();
            let l = tape.sum(sq);
            tape.backward(l).unwrap().into_params()
        };
        let mut adam = Adam::new(&store, 0.01);
        adam.step(&mut store, &grads);
        let after = store.get(table.table);
        for r in 0..25 {
            if r == 7 {
                assert_ne!(after.row_slice(r), before.row_slice(r));
            } else {
                assert_eq!(after.row_slice(r), before.row_slice(r), "row {r}");
            }
        }
    }

    proptest! {
        #[test]
        fn same_cell_same_vector(a1 in 0.0..1.0f64, e1 in 0.0..1.0f64, a2 in 0.0..1.0f64, e2 in 0.0..1.0f64) {
            let d = 5;
            let i1 = engagement_index(a1, e1, d);
            let i2 = engagement_index(a2, e2, d);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut store = ParamStore::<f32>::new();
            let t = EngagementEmbeddingTable::new(&mut store, d, 2, &mut rng);
            if i1 == i2 {
                prop_assert_eq!(t.lookup(&store, i1.i_ue).unwrap(), t.lookup(&store, i2.i_ue).unwrap());
            }
        }

        #[test]
        fn full_bin_step_in_epi_adds_d(av in 0.0..1.0f64, epi in 0.0..0.75f64, d in 2usize..21) {
            let w = 1.0 / d as f64;
            let lo = engagement_index(av, epi, d);
            // Snap epi to the middle of its bin so a full-width step stays exact.
            let mid = (lo.epi_idx as f64 + 0.5) * w;
            if lo.epi_idx + 1 < d {
                let a = engagement_index(av, mid, d);
                let b = engagement_index(av, mid + w, d);
                prop_assert_eq!(b.i_ue, a.i_ue + d);
            }
        }
    }
}
