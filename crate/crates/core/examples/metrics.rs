//! Ranking metrics on a few hand-made impressions.

use awrs::eval::{auc, mrr, ndcg_at_k};

fn main() {
    let impressions: [(&[f64], &[u8]); 4] = [
        (&[0.9, 0.1, 0.4, 0.3], &[1, 0, 0, 0]),
        (&[0.2, 0.8, 0.5, 0.1], &[1, 0, 1, 0]),
        (&[0.5, 0.5, 0.5], &[0, 1, 0]),
        (&[0.3, 0.6], &[0, 0]),
    ];
    println!("{:>3} {:>8} {:>8} {:>8} {:>8}", "#", "AUC", "MRR", "nDCG@5", "nDCG@10");
    let show = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
    for (i, (scores, labels)) in impressions.iter().enumerate() {
        println!(
            "{:>3} {:>8} {:>8} {:>8} {:>8}",
            i + 1,
            show(auc(scores, labels)),
            show(mrr(scores, labels)),
            show(ndcg_at_k(scores, labels, 5)),
            show(ndcg_at_k(scores, labels, 10))
        );
    }
}
