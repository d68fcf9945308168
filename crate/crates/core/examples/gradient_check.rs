//! Finite-difference check of every model gradient on one real impression,
//! in `f64`, for each ablation mode.

use awrs::autodiff::grad_check;
use awrs::config::SplitConfig;
use awrs::corpus::parse_news_str;
use awrs::model::ModelSizes;
use awrs::pipeline::Dataset;
use awrs::synth::{generate, SyntheticSpec};
use awrs::{AblationMode, AwrsModel, ModelConfig, RunConfig};

fn main() -> awrs::Result<()> {
    let spec = SyntheticSpec {
        n_users: 20,
        n_articles: 30,
        n_buckets: 6,
        impressions_per_bucket: 10,
        base_rate: 0.4,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec)?;
    let mut cfg = RunConfig::from_toml_str("[data]\nnews = 'n'\nbehaviors = []\n")?;
    cfg.model = ModelConfig {
        max_title_len: spec.title_len,
        word_dim: 6,
        d_news: 6,
        title_heads: 2,
        additive_hidden: 4,
        category_dim: 3,
        use_entities: false,
        dim_ue: 4,
        d_time: 3,
        history_len: 4,
        user_heads: 2,
        ..ModelConfig::default()
    };
    cfg.split = SplitConfig::Fraction { train: 0.8, valid: 0.1 };
    let catalog = parse_news_str(&corpus.news_tsv(), false, spec.title_len)?;
    let data = Dataset::from_parts(catalog, corpus.records, &cfg)?;
    let features = data
        .train
        .iter()
        .find(|f| !f.history.is_empty() && f.candidates.iter().any(|c| c.label == 1))
        .expect("a warm impression with a click");
    let positive = features.candidates.iter().position(|c| c.label == 1).unwrap();

    for mode in [AblationMode::Full, AblationMode::OnlyRel, AblationMode::OnlyAvoid] {
        let mc = ModelConfig { mode, ..cfg.model.clone() };
        let mut model = AwrsModel::<f64>::new(mc, ModelSizes::of(&data.catalog), None, 11)?;
        let mut store = std::mem::take(&mut model.store);
        let report = grad_check(&mut store, 1e-5, 20, 3, |tape| {
            let out = model.score(tape, &data.catalog, &features.history, &features.candidates, None)?;
            tape.neg_log_softmax(out.scores, positive)
        })?;
        println!(
            "{mode:?}: {} coordinates, max relative error {:.2e} ({})",
            report.coords_checked, report.max_rel_error, report.worst_param
        );
    }
    Ok(())
}
