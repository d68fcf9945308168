use std::collections::BTreeMap;

use awrs::synth::{generate, SyntheticSpec};

/// Per-cell observed clicks against the generator's own propensities:
/// every cell's standardized deviation and the pooled chi-square stay
/// within sampling error.
#[test]
fn click_frequencies_match_generator_propensities() {
    let spec = SyntheticSpec {
        base_rate: 0.4,
        seed: 21,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let mut cells: BTreeMap<(usize, bool), (f64, f64, f64)> = BTreeMap::new();
    for t in &corpus.trace {
        let e = cells.entry((t.i_ue, t.contrarian)).or_default();
        e.0 += f64::from(t.label);
        e.1 += t.p;
        e.2 += t.p * (1.0 - t.p);
    }
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for (&(cell, contrarian), &(observed, expected, var)) in &cells {
        if var < 5.0 {
            continue;
        }
        let z = (observed - expected) / var.sqrt();
        assert!(z.abs() < 4.5, "cell {cell} contrarian={contrarian}: z = {z}");
        chi2 += z * z;
        dof += 1;
    }
    assert!(dof >= 5);
    // Chi-square upper tail at roughly p = 0.001.
    let bound = dof as f64 + 3.1 * (2.0 * dof as f64).sqrt() + 6.0;
    assert!(chi2 < bound, "chi2 {chi2} over {dof} cells");
}

/// With a flat affinity the cell cannot matter: mainstream and contrarian
/// users see identical propensities for the same article at the same time.
#[test]
fn mirrored_users_diverge_only_through_affinity() {
    let flat = SyntheticSpec {
        affinity: vec![vec![1.0; 5]; 5],
        seed: 4,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&flat).unwrap();
    let rate = |contrarian: bool| {
        let rows: Vec<_> = corpus.trace.iter().filter(|t| t.contrarian == contrarian).collect();
        rows.iter().map(|t| t.p).sum::<f64>() / rows.len() as f64
    };
    assert!((rate(true) - rate(false)).abs() < 0.02);

    let skewed = generate(&SyntheticSpec { seed: 4, ..SyntheticSpec::default() }).unwrap();
    let mean_p = |contrarian: bool, engaging: bool| {
        let rows: Vec<_> = skewed
            .trace
            .iter()
            .filter(|t| t.contrarian == contrarian && (t.i_ue % 5 < 2) == engaging)
            .collect();
        rows.iter().map(|t| t.p).sum::<f64>() / rows.len() as f64
    };
    assert!(mean_p(false, true) > mean_p(false, false));
    assert!(mean_p(true, false) > mean_p(true, true));
}
