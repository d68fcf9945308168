//! End to end on a synthetic corpus: write MIND-format files, load them
//! through the normal pipeline, train with early stopping, evaluate on test
//! and save a checkpoint.

use awrs::checkpoint;
use awrs::pipeline::{train_and_evaluate, Dataset};
use awrs::synth::{generate, SyntheticSpec};
use awrs::RunConfig;

const CONFIG: &str = r#"
seed = 7

[data]
news = "news.tsv"
behaviors = ["behaviors.tsv"]

[split]
mode = "fraction"
train = 0.7
valid = 0.15

[model]
max_title_len = 6
word_dim = 16
d_news = 16
use_entities = false
dim_ue = 8
history_len = 10

[train]
lr = 3e-3
max_epochs = 4
patience = 1
batch_size = 16
"#;

fn main() -> awrs::Result<()> {
    env_logger::init();
    let dir = std::env::temp_dir().join(format!("awrs-synth-{}", std::process::id()));
    let spec = SyntheticSpec {
        n_buckets: 24,
        base_rate: 0.3,
        ..SyntheticSpec::default()
    };
    generate(&spec)?.write_to_dir(&dir)?;

    let mut cfg = RunConfig::from_toml_str(CONFIG)?;
    cfg.data.news = dir.join("news.tsv");
    cfg.data.behaviors = vec![dir.join("behaviors.tsv")];
    let data = Dataset::load(&cfg)?;
    let out = train_and_evaluate(&cfg, &data)?;

    for e in &out.history.epochs {
        println!("epoch {}: train loss {:.4}, val auc {:.4}", e.epoch, e.train_loss, e.val_auc);
    }
    let r = &out.test_report;
    println!(
        "test: {} impressions, auc {:.4}, mrr {:.4}, ndcg@5 {:.4}, ndcg@10 {:.4}",
        r.impressions, r.auc, r.mrr, r.ndcg5, r.ndcg10
    );
    let path = dir.join("model.ckpt");
    checkpoint::save(&out.model, &path)?;
    println!("checkpoint: {} ({} bytes)", path.display(), std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));
    Ok(())
}
