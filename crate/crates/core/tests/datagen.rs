use std::collections::HashSet;
use std::path::PathBuf;

use fmesvm::datagen::{
    fraction_split, generate, ingest_adult, split, split_rows, AdultOptions, Scenario, SplitSpec,
    SynthSpec,
};

fn positive_rate(y: &[i8], s: &[u8], group: u8) -> f64 {
    let (mut pos, mut tot) = (0usize, 0usize);
    for (&yi, &si) in y.iter().zip(s) {
        if si == group {
            tot += 1;
            pos += usize::from(yi > 0);
        }
    }
    pos as f64 / tot as f64
}

/// E[1 / (1 + e^{-m})] for m ~ N(mean, var), by composite Simpson over ±12 sd.
fn logistic_normal_mean(mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    let steps = 4000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / steps as f64;
    let f = |t: f64| {
        let m = mean + sd * t;
        let density = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        density / (1.0 + (-m).exp())
    };
    let mut acc = f(a) + f(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn unfair_preset_favours_the_sensitive_group() {
    let data = generate(&SynthSpec::preset(Scenario::UnfairRe, 40_000, 100, 2024)).unwrap();
    let ds = &data.dataset;
    let gap = positive_rate(ds.y(), ds.s(), 1) - positive_rate(ds.y(), ds.s(), 0);
    assert!(gap > 0.2, "gap {gap}");
}

#[test]
fn label_marginal_matches_logistic_normal_quadrature() {
    let beta = Scenario::FAIR_BETA;
    let var = beta[1] * beta[1] + beta[2] * beta[2] + beta[3] * beta[3];
    let expected = 0.5 * logistic_normal_mean(beta[0], var) + 0.5 * logistic_normal_mean(beta[0] + beta[4], var);

    let data = generate(&SynthSpec::preset(Scenario::FairNoRe, 40_000, 100, 99)).unwrap();
    let n = data.dataset.n() as f64;
    let mean_m = data.probability.iter().sum::<f64>() / n;
    let mean_y = data.dataset.y().iter().filter(|&&y| y > 0).count() as f64 / n;
    assert!((mean_m - expected).abs() < 0.02, "{mean_m} vs {expected}");
    assert!((mean_y - expected).abs() < 0.02, "{mean_y} vs {expected}");
}

#[test]
fn sensitive_share_is_about_half() {
    let data = generate(&SynthSpec::preset(Scenario::FairRe, 20_000, 100, 5)).unwrap();
    let share = data.dataset.s().iter().map(|&s| f64::from(s)).sum::<f64>() / 20_000.0;
    assert!((share - 0.5).abs() < 0.02, "{share}");
    // The covariate column mirrors s.
    let x = data.dataset.x();
    assert!((0..x.nrows()).all(|i| x[(i, 4)] == f64::from(data.dataset.s()[i])));
}

#[test]
fn generation_is_deterministic() {
    let spec = SynthSpec::preset(Scenario::UnfairRe, 2_000, 20, 42);
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.g_true, b.g_true);
    let c = generate(&SynthSpec { seed: 43, ..spec }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn per_cluster_split_sizes_and_partition() {
    let ds = generate(&SynthSpec::preset(Scenario::FairRe, 5_000, 100, 1)).unwrap().dataset;
    for seed in 0..10 {
        let rows = split_rows(&ds, &SplitSpec::new(seed)).unwrap();
        assert!((300..=500).contains(&rows.train.len()), "{}", rows.train.len());
        let train: HashSet<usize> = rows.train.iter().copied().collect();
        assert!(rows.test.iter().all(|i| !train.contains(i)));
        assert_eq!(rows.train.len() + rows.test.len(), ds.n());

        let (tr, te) = rows.apply(&ds);
        let sizes = tr.cluster_sizes();
        assert!(sizes.iter().all(|&c| (3..=5).contains(&c)), "{sizes:?}");
        assert!(te.cluster_sizes().iter().all(|&c| c > 0));
    }
    let exact = SplitSpec { per_cluster_min: 3, per_cluster_max: 3, seed: 0 };
    let (tr, _) = split(&ds, &exact).unwrap();
    assert_eq!(tr.n(), 300);
    assert_eq!(split_rows(&ds, &SplitSpec::new(4)).unwrap(), split_rows(&ds, &SplitSpec::new(4)).unwrap());
}

#[test]
fn split_rejects_small_clusters() {
    let ds = generate(&SynthSpec::preset(Scenario::FairRe, 40, 10, 1)).unwrap().dataset;
    assert!(split_rows(&ds, &SplitSpec::new(0)).is_err());
}

#[test]
fn fraction_split_partitions_rows() {
    let rows = fraction_split(32_561, 0.005, 3).unwrap();
    assert_eq!(rows.train.len(), 163);
    assert_eq!(rows.train.len() + rows.test.len(), 32_561);
    assert!(fraction_split(10, 1.0, 0).is_err());
}

fn adult_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/adult.data")
}

#[test]
fn bundled_adult_file_ingests() {
    let data = ingest_adult(adult_path(), &AdultOptions::default()).unwrap();
    let ds = &data.dataset;
    assert_eq!(ds.n(), 32_561);
    assert!(ds.validate().is_empty());
    assert!((40..=80).contains(&ds.k()), "K = {}", ds.k());
    let positives = ds.y().iter().filter(|&&y| y > 0).count();
    assert_eq!(positives, 7_841);
    let male = ds.s().iter().filter(|&&s| s == 1).count();
    assert_eq!(male, 21_790);
}
