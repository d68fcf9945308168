//! Synthetic avoidance experiment: generate the corpus described by
//! `configs/synth_ablation.toml`, then train `full`, `only_rel` and
//! `only_avoid` with `configs/ablation.toml` over several seeds.
//!
//! ```text
//! cargo run --release --example ablation -- 1,2,3
//! ```

use std::path::Path;
use std::time::Instant;

use awrs::pipeline::{ablate, format_ablation_table, Dataset};
use awrs::synth::{generate, SyntheticSpec};
use awrs::RunConfig;

fn main() -> awrs::Result<()> {
    env_logger::init();
    let seeds: Vec<u64> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![1, 2, 3]);
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");

    let spec = SyntheticSpec::load(configs.join("synth_ablation.toml"))?;
    let corpus = generate(&spec)?;
    let dir = std::env::temp_dir().join(format!("awrs-ablation-{}", std::process::id()));
    corpus.write_to_dir(&dir)?;

    let mut cfg = RunConfig::load(configs.join("ablation.toml"))?;
    cfg.data.news = dir.join("news.tsv");
    cfg.data.behaviors = vec![dir.join("behaviors.tsv")];
    let data = Dataset::load(&cfg)?;
    println!(
        "{} train / {} valid / {} test impressions, seeds {seeds:?}",
        data.train.len(),
        data.valid.len(),
        data.test.len()
    );

    let start = Instant::now();
    let rows = ablate(&cfg, &data, &seeds)?;
    print!("{}", format_ablation_table(&rows));
    println!("{:.1}s", start.elapsed().as_secs_f64());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
