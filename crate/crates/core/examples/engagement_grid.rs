//! Places every article of a synthetic log on the D x D (EPI, avoidance)
//! grid and prints cell occupancy after the third bucket.

use awrs::grid::{cell_counts, engagement_index, EngagementIndex};
use awrs::stats::build_timeline;
use awrs::synth::{generate, SyntheticSpec};

fn main() -> awrs::Result<()> {
    let d = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5usize);
    let spec = SyntheticSpec {
        n_articles: 40,
        n_buckets: 12,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec)?;
    let timeline = build_timeline(&corpus.records, spec.bucket_width)?;
    let snap = &timeline.snapshots()[2.min(timeline.len() - 1)];

    let counts = cell_counts(snap, d);
    println!("articles per cell, rows = EPI index, columns = avoidance index (D = {d})");
    print!("{:>8}", "");
    for a in 0..d {
        print!("{:>6}", format!("av{a}"));
    }
    println!();
    for e in 0..d {
        print!("{:>8}", format!("epi{e}"));
        for a in 0..d {
            print!("{:>6}", counts[EngagementIndex::from_cell(a, e, d).i_ue]);
        }
        println!();
    }

    for (av, epi) in [(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)] {
        let ix = engagement_index(av, epi, d);
        println!("av {av:.2}, epi {epi:.2} -> epi_idx {}, av_idx {}, i_ue {}", ix.epi_idx, ix.av_idx, ix.i_ue);
    }
    Ok(())
}
