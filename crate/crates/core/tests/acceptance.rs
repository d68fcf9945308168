//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line with
//! its measurement, tolerance and runtime budget; the process exits
//! non-zero when any criterion fails.
//!
//! ```text
//! cargo test --release --test acceptance            # all nine
//! cargo test --release --test acceptance -- grid    # name filter
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use awrs::autodiff::{grad_check, ParamStore, Tape, Tensor, GRAD_CHECK_FLOOR};
use awrs::checkpoint;
use awrs::config::{SplitConfig, TrainConfig};
use awrs::corpus::{parse_news_str, ImpressionRecord, NewsCatalog, PAD};
use awrs::eval::{auc, mrr, ndcg_at_k};
use awrs::grid::{engagement_index, quantize, EngagementIndex, D_SWEEP};
use awrs::model::{CandidateFeatures, HistoryItem, ModelSizes};
use awrs::pipeline::{ablate, train_and_evaluate, Dataset};
use awrs::stats::{build_timeline, StatsSnapshot};
use awrs::synth::{generate, SyntheticSpec};
use awrs::train::{instance_probability, sample_feature_instances, train};
use awrs::{AblationMode, AwrsModel, ModelConfig, RunConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    pass: bool,
    detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, Option<u64>, fn() -> Check);

const CRITERIA: [Criterion; 9] = [
    ("statistics_oracle", Some(5), statistics_oracle),
    ("causality_fuzz", Some(10), causality_fuzz),
    ("grid_bijection", None, grid_bijection),
    ("end_to_end_grad_check", Some(30), end_to_end_grad_check),
    ("structural_invariants", None, structural_invariants),
    ("overfit_sanity", Some(120), overfit_sanity),
    ("ablation_experiment", Some(600), ablation_experiment),
    ("metric_oracles", None, metric_oracles),
    ("determinism", None, determinism),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, run)) in CRITERIA.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let check = run();
        let elapsed = start.elapsed();
        let in_time = budget.map_or(true, |b| elapsed <= Duration::from_secs(b));
        let pass = check.pass && in_time;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" (limit {b}s)"));
        println!(
            "{} {}. {name}: {} [{:.2}s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            check.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn random_log(rng: &mut ChaCha8Rng, n: usize, n_articles: usize, span: i64) -> Vec<ImpressionRecord> {
    let mut times: Vec<i64> = (0..n).map(|_| rng.gen_range(0..span)).collect();
    times.sort_unstable();
    let pool: Vec<String> = (0..n_articles).map(|i| format!("N{i}")).collect();
    times
        .into_iter()
        .enumerate()
        .map(|(i, time)| {
            let k = rng.gen_range(1..=8.min(n_articles));
            ImpressionRecord {
                impression_id: i.to_string(),
                user_id: format!("U{}", rng.gen_range(0..20)),
                time,
                history: Vec::new(),
                shown: pool
                    .choose_multiple(rng, k)
                    .map(|id| (id.clone(), rng.gen_bool(0.3) as u8))
                    .collect(),
            }
        })
        .collect()
}

#[derive(Default)]
struct Brute {
    impressions: u64,
    articles: BTreeMap<String, (u64, u64, i64)>,
}

/// Counts over every record strictly before `boundary`, by direct scan.
fn brute_prefix(log: &[ImpressionRecord], boundary: i64) -> Brute {
    let mut b = Brute::default();
    for r in log {
        if r.time >= boundary {
            continue;
        }
        b.impressions += 1;
        for (id, label) in &r.shown {
            let e = b.articles.entry(id.clone()).or_insert((0, 0, r.time));
            e.0 += 1;
            e.1 += u64::from(*label);
            e.2 = e.2.min(r.time);
        }
    }
    b
}

fn matches_brute(s: &StatsSnapshot, b: &Brute) -> bool {
    if s.impressions != b.impressions || s.num_articles() != b.articles.len() {
        return false;
    }
    b.articles.iter().all(|(id, &(exp, clk, first))| {
        let epi = exp as f64 / b.impressions as f64;
        let av = 1.0 - clk as f64 / exp as f64;
        s.exposures(id) == exp
            && s.clicks(id) == clk
            && s.first_seen(id) == Some(first)
            && s.epi(id) == epi
            && s.avoidance(id) == av
    })
}

fn statistics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let log = random_log(&mut rng, 1000, 40, 200_000);
    let width = 1800;
    let tl = build_timeline(&log, width).unwrap();
    let mut mismatched = 0;
    for (k, s) in tl.snapshots().iter().enumerate() {
        let b = tl.boundary(k);
        if s.t != b || !matches_brute(s, &brute_prefix(&log, b)) {
            mismatched += 1;
        }
    }
    let mut lookup_bad = 0;
    for _ in 0..500 {
        let t = rng.gen_range(-5_000..210_000);
        let expected = (0..tl.len()).map(|k| tl.boundary(k)).filter(|&b| b <= t).max();
        let got = tl.snapshot_at(t);
        let ok = match expected {
            Some(b) => got.t == b && matches_brute(got, &brute_prefix(&log, b)),
            None => got.impressions == 0 && got.num_articles() == 0,
        };
        lookup_bad += usize::from(!ok);
    }
    let never = tl.snapshots().last().unwrap();
    let unseen_ok = never.epi("missing") == 0.0 && never.avoidance("missing") == 1.0;

    // 50 of 100 impression lists contain the article; 20 of its 50
    // exposures are clicked.
    let example: Vec<ImpressionRecord> = (0..100)
        .map(|i| ImpressionRecord {
            impression_id: i.to_string(),
            user_id: "U".into(),
            time: i,
            history: Vec::new(),
            shown: if i < 50 {
                vec![("N174".into(), u8::from(i < 20)), ("X".into(), 0)]
            } else {
                vec![("X".into(), 0)]
            },
        })
        .collect();
    let ex = build_timeline(&example, 1000).unwrap();
    let s = ex.snapshot_at(1000);
    let (epi, av) = (s.epi("N174"), s.avoidance("N174"));
    Check::new(
        mismatched == 0 && lookup_bad == 0 && unseen_ok && (epi - 0.5).abs() < 1e-12 && (av - 0.6).abs() < 1e-12,
        format!(
            "{} snapshots, {mismatched} mismatched; 500 lookups, {lookup_bad} wrong; unseen defaults {}; \
             worked example epi={epi} av={av} (want 0.5, 0.6, tol 1e-12)",
            tl.len(),
            if unseen_ok { "ok" } else { "wrong" }
        ),
    )
}

fn causality_fuzz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let base = random_log(&mut rng, 400, 30, 100_000);
    let width = 2000;
    let reference = build_timeline(&base, width).unwrap();
    let mut violations = 0;
    let mut kinds = [0usize; 5];
    for _ in 0..500 {
        let k = rng.gen_range(0..reference.len() - 1);
        let b = reference.boundary(k);
        let later: Vec<usize> = (0..base.len()).filter(|&i| base[i].time >= b).collect();
        let mut log = base.clone();
        let kind = rng.gen_range(0..5);
        kinds[kind] += 1;
        let victim = *later.choose(&mut rng).unwrap();
        match kind {
            0 => {
                let slot = rng.gen_range(0..log[victim].shown.len());
                log[victim].shown[slot].1 ^= 1;
            }
            1 => {
                log[victim].shown = vec![(format!("NEW{}", rng.gen::<u32>()), 1), ("N0".into(), 0)];
            }
            2 => {
                log[victim].time = rng.gen_range(b..b + 10 * width);
                log.sort_by_key(|r| r.time);
            }
            3 => {
                let mut extra = log[victim].clone();
                extra.impression_id = "extra".into();
                extra.shown.push(("N1".into(), 1));
                log.insert(victim, extra);
            }
            _ => {
                log.remove(victim);
            }
        }
        let tl = build_timeline(&log, width).unwrap();
        let same = (0..=k).all(|j| tl.snapshots().get(j) == Some(&reference.snapshots()[j]))
            && tl.snapshot_at(b) == reference.snapshot_at(b)
            && tl.snapshot_at(b - 1) == reference.snapshot_at(b - 1);
        violations += usize::from(!same);
    }
    Check::new(
        violations == 0,
        format!("500 mutations (labels/shown/time/insert/delete = {kinds:?}), {violations} changed an earlier snapshot"),
    )
}

fn grid_bijection() -> Check {
    let mut bad_cells = 0;
    for d in D_SWEEP {
        let mut seen = vec![false; d * d];
        for epi_idx in 0..d {
            for av_idx in 0..d {
                let mid = |i: usize| (i as f64 + 0.5) / d as f64;
                let e = engagement_index(mid(av_idx), mid(epi_idx), d);
                let back = EngagementIndex::from_flat(e.i_ue, d);
                let ok = e.av_idx == av_idx
                    && e.epi_idx == epi_idx
                    && e.i_ue < d * d
                    && !seen[e.i_ue]
                    && back == e
                    && EngagementIndex::from_cell(av_idx, epi_idx, d) == e;
                if e.i_ue < d * d {
                    seen[e.i_ue] = true;
                }
                bad_cells += usize::from(!ok);
            }
        }
        bad_cells += seen.iter().filter(|s| !**s).count();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut bad_pairs = 0;
    for _ in 0..10_000 {
        let d = *D_SWEEP.choose(&mut rng).unwrap();
        let av: f64 = rng.gen_range(-0.1..1.1);
        let epi: f64 = rng.gen_range(-0.1..1.1);
        // Bin index by counting the lower edges at or below the value.
        let bin = |v: f64| (1..d).filter(|&k| v.clamp(0.0, 1.0) * d as f64 >= k as f64).count();
        let e = engagement_index(av, epi, d);
        let ok = e.av_idx == bin(av)
            && e.epi_idx == bin(epi)
            && e.i_ue == d * e.epi_idx + e.av_idx
            && quantize(av, d) == e.av_idx;
        bad_pairs += usize::from(!ok);
    }
    Check::new(
        bad_cells == 0 && bad_pairs == 0,
        format!("D in {D_SWEEP:?}: {bad_cells} cell round-trip failures; 10000 random pairs, {bad_pairs} off the flat-index identity"),
    )
}

const NEWS: &str = "N1\tsports\tsoccer\tlate goal wins derby\t\t\t\n\
                    N2\tnews\tpolitics\tvotes counted overnight\t\t\t\n\
                    N3\tsports\ttennis\tfinal set drama unfolds\t\t\t\n\
                    N4\tnews\tworld\tsummit opens today\t\t\t\n\
                    N5\tfinance\tmarkets\tshares fall sharply\t\t\t\n\
                    N6\tfinance\tbanks\trates held steady again\t\t\t\n";

fn toy_cfg(mode: AblationMode) -> ModelConfig {
    ModelConfig {
        max_title_len: 5,
        word_dim: 6,
        train_word_embeddings: true,
        d_news: 8,
        title_heads: 2,
        additive_hidden: 4,
        category_dim: 3,
        use_entities: false,
        entity_dim: 2,
        d: 5,
        dim_ue: 4,
        d_time: 3,
        history_len: 3,
        user_heads: 2,
        cnn_half_window: 1,
        mode,
    }
}

fn toy_model(mode: AblationMode, seed: u64) -> (NewsCatalog, AwrsModel<f64>) {
    let catalog = parse_news_str(NEWS, false, 5).unwrap();
    let model = AwrsModel::new(toy_cfg(mode), ModelSizes::of(&catalog), None, seed).unwrap();
    (catalog, model)
}

fn toy_history() -> Vec<HistoryItem> {
    [(0, 3), (4, 17), (1, 9)]
        .iter()
        .map(|&(article, i_ue)| HistoryItem { article, i_ue })
        .collect()
}

fn toy_candidates() -> Vec<CandidateFeatures> {
    [(2, 24, 0.4, 1.5), (3, 4, 0.0, 0.0), (5, 12, 1.0, 7.0)]
        .iter()
        .map(|&(article, i_ue, clicks_norm, elapsed_hours)| CandidateFeatures {
            article,
            i_ue,
            clicks_norm,
            elapsed_hours,
            label: 0,
        })
        .collect()
}

fn end_to_end_grad_check() -> Check {
    let (catalog, mut model) = toy_model(AblationMode::Full, 7);
    let mut store = std::mem::take(&mut model.store);
    let (history, candidates) = (toy_history(), toy_candidates());
    let report = grad_check(&mut store, 1e-5, 1_000_000, 5, |tape| {
        let out = model.score(tape, &catalog, &history, &candidates, None)?;
        tape.neg_log_softmax(out.scores, 1)
    })
    .unwrap();
    Check::new(
        report.max_rel_error < 1e-3,
        format!(
            "d_news=8 dim_ue=4 M=3 K=2, f64, eps 1e-5, {} coordinates: max relative error {:.3e} at {} \
             (tol 1e-3, denominator floor {GRAD_CHECK_FLOOR:e})",
            report.coords_checked, report.max_rel_error, report.worst_param
        ),
    )
}

fn row_sums_ok(t: &Tensor<f64>, tol: f64, worst: &mut f64) -> bool {
    (0..t.rows()).all(|r| {
        let dev = (t.row_slice(r).iter().sum::<f64>() - 1.0).abs();
        *worst = worst.max(dev);
        dev < tol
    })
}

fn structural_invariants() -> Check {
    let (catalog, model) = toy_model(AblationMode::Full, 8);
    let mut worst = 0.0f64;
    let mut softmax_ok = true;

    let mut tape = Tape::new(&model.store);
    let title = model.news.encode_title_detailed(&mut tape, &[3, 5, 7, PAD, PAD]).unwrap();
    for a in title.self_attention.iter().chain(title.pooling.iter()) {
        softmax_ok &= row_sums_ok(tape.value(*a), 1e-6, &mut worst);
    }

    let (history, candidates) = (toy_history(), toy_candidates());
    let out = model.score(&mut tape, &catalog, &history, &candidates, None).unwrap();
    for (alpha, gammas) in out.alpha.iter().zip(&out.gammas) {
        softmax_ok &= row_sums_ok(tape.value(*alpha), 1e-6, &mut worst);
        for g in gammas {
            softmax_ok &= row_sums_ok(tape.value(*g), 1e-6, &mut worst);
        }
    }
    let p = tape.softmax_rows(out.scores, None).unwrap();
    softmax_ok &= row_sums_ok(tape.value(p), 1e-6, &mut worst);

    let r_aw = tape.value(out.r_aw.unwrap()).clone();
    let mut convex_ok = true;
    for j in 0..candidates.len() {
        let eta = tape.value(out.eta[j]).item();
        let ip = tape.value(out.int_prime[j]).item();
        let r = r_aw.get(j, 0);
        let s = tape.value(out.scores).get(0, j);
        convex_ok &= (0.0..=1.0).contains(&eta)
            && (s - ((1.0 - eta) * r + eta * ip)).abs() < 1e-12
            && s >= r.min(ip) - 1e-12
            && s <= r.max(ip) + 1e-12;
    }

    // Masked history rows and PAD title positions must not reach the output.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let enc = &model.user;
    let d_news = model.cfg.d_news;
    let dim_ue = model.cfg.dim_ue;
    let mask = [true, false, true, false];
    let run_masked = |noise: f64, rng: &mut ChaCha8Rng| {
        let mut tape = Tape::new(&model.store);
        let mut news = Tensor::<f64>::zeros(4, d_news);
        let mut ue = Tensor::<f64>::zeros(4, dim_ue);
        for r in 0..4 {
            for c in 0..d_news {
                let v = if mask[r] { ((r * 7 + c) as f64).sin() } else { noise * rng.gen_range(-5.0..5.0) };
                news.set(r, c, v);
            }
            for c in 0..dim_ue {
                let v = if mask[r] { ((r + c) as f64).cos() } else { noise * rng.gen_range(-5.0..5.0) };
                ue.set(r, c, v);
            }
        }
        let n = tape.constant(news);
        let u = tape.constant(ue);
        let h = enc.augment(&mut tape, n, u, &mask).unwrap();
        let prep = enc.prepare(&mut tape, h).unwrap();
        let cand = tape.constant(Tensor::row((0..d_news + dim_ue).map(|i| (i as f64 * 0.3).sin()).collect()));
        let e = enc.encode(&mut tape, &prep, cand).unwrap();
        let r = tape.constant(Tensor::scalar(0.2));
        let i = enc.interest(&mut tape, cand, e.u, r).unwrap();
        let mut v = tape.value(i.score).data().to_vec();
        v.extend_from_slice(tape.value(e.u).data());
        v.extend_from_slice(tape.value(e.alpha).data());
        v
    };
    let reference = run_masked(0.0, &mut rng);
    let mut masked_ok = (0..20).all(|_| run_masked(1.0, &mut rng) == reference);
    let masked_alpha_zero = {
        let v = run_masked(1.0, &mut rng);
        let alpha = &v[v.len() - 4..];
        alpha[1] == 0.0 && alpha[3] == 0.0
    };
    masked_ok &= masked_alpha_zero;

    let tokens = [3, 5, PAD, PAD, PAD];
    let encode = |store: &ParamStore<f64>| {
        let mut tape = Tape::new(store);
        let v = model.news.encode_title(&mut tape, &tokens).unwrap();
        tape.value(v).data().to_vec()
    };
    let before = encode(&model.store);
    let mut perturbed = model.store.clone();
    let table = model.news.word_table();
    for v in perturbed.get_mut(table).row_slice_mut(PAD) {
        *v += 3.0;
    }
    let pad_ok = encode(&perturbed) == before;

    Check::new(
        softmax_ok && convex_ok && masked_ok && pad_ok,
        format!(
            "softmax rows (title, gamma, alpha, loss p) max |sum-1| = {worst:.2e} (tol 1e-6); \
             Int convex in (r_aw, Int') {}; masked history rows invisible {}; PAD title slots invisible {}",
            if convex_ok { "yes" } else { "no" },
            if masked_ok { "yes" } else { "no" },
            if pad_ok { "yes" } else { "no" }
        ),
    )
}

fn small_run_config(model: ModelConfig, train: TrainConfig, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_toml_str("[data]\nnews = 'news.tsv'\nbehaviors = ['behaviors.tsv']\n").unwrap();
    cfg.seed = seed;
    cfg.model = model;
    cfg.train = train;
    cfg
}

fn dataset_from_spec(spec: &SyntheticSpec, cfg: &RunConfig) -> Dataset {
    let corpus = generate(spec).unwrap();
    let catalog = parse_news_str(&corpus.news_tsv(), false, cfg.model.max_title_len).unwrap();
    Dataset::from_parts(catalog, corpus.records, cfg).unwrap()
}

fn overfit_sanity() -> Check {
    // Statistics come from the whole generated log; the 50 training
    // impressions are the first ones whose user already has clicks.
    let spec = SyntheticSpec {
        n_users: 12,
        n_articles: 40,
        n_buckets: 10,
        impressions_per_bucket: 10,
        candidates_per_impression: 6,
        base_rate: 0.4,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let model_cfg = ModelConfig {
        max_title_len: spec.title_len,
        word_dim: 32,
        d_news: 32,
        title_heads: 2,
        additive_hidden: 8,
        category_dim: 4,
        use_entities: false,
        dim_ue: 8,
        d_time: 4,
        history_len: 10,
        user_heads: 2,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        lr: 1e-2,
        negatives: 2,
        max_epochs: 10_000,
        patience: 1,
        batch_size: 32,
        max_steps: Some(300),
        threads: 1,
    };
    let mut cfg = small_run_config(model_cfg, train_cfg, 4);
    cfg.split = SplitConfig::Cutoffs {
        train_end: i64::MAX,
        valid_end: i64::MAX,
    };
    let data = dataset_from_spec(&spec, &cfg);
    let set: Vec<_> = data.train.iter().filter(|f| !f.history.is_empty()).take(50).cloned().collect();
    let mut model = AwrsModel::<f64>::new(cfg.model.clone(), ModelSizes::of(&data.catalog), None, cfg.seed).unwrap();
    let hist = train(&mut model, &data.catalog, &set, &[], &cfg.train, cfg.seed).unwrap();

    let (instances, _) = sample_feature_instances(&set, cfg.train.negatives, &mut ChaCha8Rng::seed_from_u64(99));
    let probs: Vec<f64> = instances
        .iter()
        .map(|inst| instance_probability(&model, &data.catalog, &set, inst).unwrap())
        .collect();
    let min_p = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let aucs: Vec<f64> = set
        .iter()
        .filter_map(|f| {
            let s = model.score_impression(&data.catalog, f, None).unwrap();
            let l: Vec<u8> = f.candidates.iter().map(|c| c.label).collect();
            auc(&s, &l)
        })
        .collect();
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    Check::new(
        set.len() == 50 && hist.steps == 300 && min_p > 0.9 && mean_auc >= 0.95,
        format!(
            "{} impressions, {} steps: min training p = {min_p:.4} over {} instances (need > 0.9), \
             training AUC = {mean_auc:.4} (need >= 0.95)",
            set.len(),
            hist.steps,
            probs.len()
        ),
    )
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn ablation_experiment() -> Check {
    let spec = SyntheticSpec::load(configs_dir().join("synth_ablation.toml")).unwrap();
    let corpus = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to_dir(dir.path()).unwrap();
    let mut cfg = RunConfig::load(configs_dir().join("ablation.toml")).unwrap();
    cfg.data.news = dir.path().join("news.tsv");
    cfg.data.behaviors = vec![dir.path().join("behaviors.tsv")];
    let data = Dataset::load(&cfg).unwrap();
    let seeds = [1, 2, 3];
    let rows = ablate(&cfg, &data, &seeds).unwrap();
    let mean_of = |mode: AblationMode| rows.iter().find(|r| r.mode == mode).unwrap().summary.auc.mean * 100.0;
    let full = mean_of(AblationMode::Full);
    let rel = mean_of(AblationMode::OnlyRel);
    let avoid = mean_of(AblationMode::OnlyAvoid);
    Check::new(
        full - rel >= 2.0 && full - avoid >= 2.0,
        format!(
            "held-out AUC over seeds {seeds:?}: full {full:.2}, only_rel {rel:.2} (margin {:+.2}), \
             only_avoid {avoid:.2} (margin {:+.2}); need both margins >= 2.00",
            full - rel,
            full - avoid
        ),
    )
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// 1-based position of candidate `i` after a stable descending sort.
fn brute_rank(scores: &[f64], i: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

fn brute_mrr(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let ranks: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == 1).map(|i| brute_rank(scores, i)).collect();
    (!ranks.is_empty()).then(|| ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

fn brute_ndcg(scores: &[f64], labels: &[u8], k: usize) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let dcg: f64 = (0..scores.len())
        .filter(|&i| labels[i] == 1)
        .map(|i| brute_rank(scores, i))
        .filter(|&r| r <= k)
        .map(|r| 1.0 / ((r + 1) as f64).log2())
        .sum();
    let ideal: f64 = (1..=positives.min(k)).map(|r| 1.0 / ((r + 1) as f64).log2()).sum();
    Some(dcg / ideal)
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    let mut presence_mismatch = 0;
    let mut compare = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
        (None, None) => {}
        _ => presence_mismatch += 1,
    };
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let tied = rng.gen_bool(0.3);
        let scores: Vec<f64> = (0..n)
            .map(|_| if tied { rng.gen_range(0..4) as f64 / 4.0 } else { rng.gen_range(-3.0..3.0) })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        compare(auc(&scores, &labels), brute_auc(&scores, &labels));
        compare(mrr(&scores, &labels), brute_mrr(&scores, &labels));
        for k in [5, 10] {
            compare(ndcg_at_k(&scores, &labels, k), brute_ndcg(&scores, &labels, k));
        }
    }
    Check::new(
        worst <= 1e-9 && presence_mismatch == 0,
        format!(
            "1000 impressions of <= 20 candidates: max |metric - brute force| = {worst:.2e} (tol 1e-9), \
             {presence_mismatch} defined/undefined disagreements"
        ),
    )
}

fn determinism() -> Check {
    let spec = SyntheticSpec {
        n_users: 40,
        n_articles: 50,
        n_buckets: 12,
        impressions_per_bucket: 15,
        seed: 6,
        ..SyntheticSpec::default()
    };
    let model_cfg = ModelConfig {
        max_title_len: spec.title_len,
        word_dim: 8,
        d_news: 8,
        title_heads: 2,
        additive_hidden: 4,
        category_dim: 3,
        use_entities: false,
        dim_ue: 4,
        d_time: 3,
        history_len: 5,
        user_heads: 2,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        lr: 3e-3,
        negatives: 3,
        max_epochs: 3,
        patience: 2,
        batch_size: 8,
        max_steps: None,
        threads: 1,
    };
    let mut cfg = small_run_config(model_cfg, train_cfg, 12);
    cfg.split = SplitConfig::Fraction { train: 0.7, valid: 0.15 };
    let run = || {
        let data = dataset_from_spec(&spec, &cfg);
        let out = train_and_evaluate(&cfg, &data).unwrap();
        let mut log = Vec::new();
        out.history.write_csv(&mut log, false).unwrap();
        (
            checkpoint::to_bytes(&out.model).unwrap(),
            serde_json::to_string(&out.test_report).unwrap(),
            log,
        )
    };
    let (a, b) = (run(), run());
    let ckpt_same = a.0 == b.0;
    let report_same = a.1 == b.1;
    let log_same = a.2 == b.2;
    Check::new(
        ckpt_same && report_same && log_same,
        format!(
            "two single-threaded runs, seed {}: checkpoint ({} bytes) {}, metric report {}, training log {}",
            cfg.seed,
            a.0.len(),
            if ckpt_same { "identical" } else { "differs" },
            if report_same { "identical" } else { "differs" },
            if log_same { "identical" } else { "differs" }
        ),
    )
}
