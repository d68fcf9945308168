//! Bucketed exposure statistics for a small synthetic log: how EPI and
//! avoidance of the most exposed articles evolve bucket by bucket.

use awrs::stats::build_timeline;
use awrs::synth::{generate, SyntheticSpec};

fn main() -> awrs::Result<()> {
    let spec = SyntheticSpec {
        n_users: 60,
        n_articles: 30,
        n_buckets: 8,
        impressions_per_bucket: 25,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec)?;
    let timeline = build_timeline(&corpus.records, spec.bucket_width)?;
    let last = timeline.snapshots().last().expect("non-empty log");

    let mut top: Vec<(&str, u64)> = last.articles().map(|(id, c)| (id, c.exposures)).collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    top.truncate(3);

    println!("{} snapshots, {} impressions in total", timeline.len(), last.impressions);
    for (id, _) in &top {
        println!("\n{id}");
        println!("{:>12} {:>6} {:>6} {:>7} {:>7}", "boundary", "n_E", "n_clk", "EPI", "Av");
        for s in timeline.snapshots() {
            println!(
                "{:>12} {:>6} {:>6} {:>7.3} {:>7.3}",
                s.t,
                s.exposures(id),
                s.clicks(id),
                s.epi(id),
                s.avoidance(id)
            );
        }
    }

    let mid = timeline.boundary(timeline.len() / 2) + spec.bucket_width / 2;
    let s = timeline.snapshot_at(mid);
    println!("\nsnapshot_at({mid}) uses boundary {} with {} articles", s.t, s.num_articles());
    Ok(())
}
