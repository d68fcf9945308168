//! Loads a MIND-format corpus and reports what the parsers kept.
//!
//! ```text
//! cargo run --example load_mind -- news.tsv behaviors.tsv [vectors.txt dim]
//! ```
//!
//! Without arguments a small synthetic corpus is written and loaded.

use std::path::PathBuf;

use awrs::corpus::{load_word_vectors, DEFAULT_INIT_RANGE, parse_behaviors_file, parse_news_file};
use awrs::synth::{generate, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> awrs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (news, behaviors) = if args.len() >= 2 {
        (PathBuf::from(&args[0]), PathBuf::from(&args[1]))
    } else {
        let dir = std::env::temp_dir().join(format!("awrs-mind-{}", std::process::id()));
        generate(&SyntheticSpec { n_buckets: 4, ..SyntheticSpec::default() })?.write_to_dir(&dir)?;
        (dir.join("news.tsv"), dir.join("behaviors.tsv"))
    };

    let catalog = parse_news_file(&news, 30)?;
    println!(
        "{}: {} articles, {} skipped rows, vocabulary {}, {} categories, {} entities",
        news.display(),
        catalog.len(),
        catalog.skipped.len(),
        catalog.vocab.len(),
        catalog.categories.len(),
        catalog.entities.len()
    );
    let log = parse_behaviors_file(&behaviors)?;
    let candidates: usize = log.records.iter().map(|r| r.shown.len()).sum();
    let missing = log
        .records
        .iter()
        .flat_map(|r| r.shown.iter())
        .filter(|c| catalog.index_of(&c.0).is_none())
        .count();
    println!(
        "{}: {} impressions, {} skipped rows, {} candidates ({} not in the catalog)",
        behaviors.display(),
        log.records.len(),
        log.skipped.len(),
        candidates,
        missing
    );
    for e in log.skipped.iter().take(5) {
        println!("  skipped {e:?}");
    }

    if let [_, _, vectors, dim, ..] = args.as_slice() {
        let dim: usize = dim.parse().expect("dim must be an integer");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let wv = load_word_vectors::<f32>(vectors, &catalog.vocab, dim, DEFAULT_INIT_RANGE, &mut rng)?;
        println!("{}: {} of {} tokens found", vectors, wv.found, catalog.vocab.len());
    }
    Ok(())
}
