use std::path::PathBuf;

use lombard_core::corpus::Style;
use lombard_core::evaluation::{
    aggregate_ccr, aggregate_similarity, ccr_observations, included_ratings, read_ratings, screen_listeners,
    similarity_cells, similarity_observations, CcrConfig, ScreeningConfig, SimilarityCategory, TestManifest,
};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixtures").join(name)
}

fn load(kind: &str) -> (TestManifest, Vec<lombard_core::evaluation::RatingRecord>, Value) {
    let m = TestManifest::load(&fixture(&format!("{kind}_manifest.json"))).unwrap();
    let r = read_ratings(&fixture(&format!("{kind}_ratings.csv"))).unwrap();
    let oracle = if kind == "ccr" { "ccr_oracle.json" } else { "similarity_expected.json" };
    let v: Value = serde_json::from_slice(&std::fs::read(fixture(oracle)).unwrap()).unwrap();
    (m, r, v)
}

fn screened(m: &TestManifest, r: &[lombard_core::evaluation::RatingRecord], expected_excluded: &Value) -> Vec<lombard_core::evaluation::RatingRecord> {
    let results = screen_listeners(m, r, &ScreeningConfig::default());
    let excluded: Vec<&str> = results.iter().filter(|x| !x.included).map(|x| x.listener_id.as_str()).collect();
    let want: Vec<&str> = expected_excluded.as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(excluded, want);
    included_ratings(r, &results)
}

#[test]
fn similarity_fixture_reproduces_every_cell() {
    let (m, r, expected) = load("similarity");
    let kept = screened(&m, &r, &expected["excluded"]);
    let aggs = aggregate_similarity(&similarity_observations(&m, &kept), &similarity_cells(&m)).unwrap();
    assert_eq!(aggs.len(), 10);
    for a in &aggs {
        let cell = &expected["cells"][format!("{}/{}", a.system, a.reference)];
        assert_eq!(a.n as u64, cell["n"].as_u64().unwrap());
        for (got, want) in a.counts.iter().zip(cell["counts"].as_array().unwrap()) {
            assert_eq!(*got as u64, want.as_u64().unwrap(), "{} vs {}", a.system, a.reference);
        }
        assert!((a.percentages.iter().sum::<f64>() - 100.0).abs() < 0.01);
    }
    let s5 = aggs.iter().find(|a| a.system == "S5" && a.reference == Style::Lombard).unwrap();
    assert!((s5.percentage(SimilarityCategory::DiffSure) - 22.0).abs() < 0.1);
    assert!((s5.percentage(SimilarityCategory::DiffUnsure) - 15.9).abs() < 0.1);
    assert!((s5.percentage(SimilarityCategory::SameUnsure) - 27.7).abs() < 0.1);
    assert!((s5.percentage(SimilarityCategory::SameSure) - 34.4).abs() < 0.1);
    assert!((s5.same_percentage() - 62.13).abs() < 0.1);
}

#[test]
fn unscreened_cheaters_would_shift_the_fixture() {
    let (m, r, _) = load("similarity");
    let aggs = aggregate_similarity(&similarity_observations(&m, &r), &similarity_cells(&m)).unwrap();
    let s5 = aggs.iter().find(|a| a.system == "S5" && a.reference == Style::Lombard).unwrap();
    assert!((s5.percentage(SimilarityCategory::DiffSure) - 22.0).abs() > 0.1);
}

#[test]
fn ccr_fixture_ordering_significance_and_intervals() {
    let (m, r, oracle) = load("ccr");
    let kept = screened(&m, &r, &oracle["excluded"]);
    let agg = aggregate_ccr(&ccr_observations(&m, &kept), &CcrConfig::default()).unwrap();
    assert_eq!(agg.order(), ["ref_lombard", "S5", "S3", "S1"]);
    assert!(agg.comparison("ref_lombard", "S1").unwrap().significant);
    assert!(agg.comparison("S5", "S1").unwrap().significant);
    assert!(agg.comparison("S5", "S3").unwrap().significant);
    assert!((agg.interval_confidence - oracle["interval_confidence"].as_f64().unwrap()).abs() < 1e-12);
    for s in &agg.scores {
        let o = &oracle["scores"][&s.label];
        assert_eq!(s.n as u64, o["n"].as_u64().unwrap());
        for (got, key) in [(s.mean, "mean"), (s.sd, "sd"), (s.t_critical, "t_critical"), (s.ci_low, "ci_low"), (s.ci_high, "ci_high")] {
            let want = o[key].as_f64().unwrap();
            assert!((got - want).abs() < 1e-9, "{} {key}: {got} vs {want}", s.label);
        }
    }
    for (key, o) in oracle["welch"].as_object().unwrap() {
        let (a, b) = key.split_once('|').unwrap();
        let c = agg.comparison(a, b).unwrap();
        let want = o["p"].as_f64().unwrap();
        // relative agreement; tiny p-values underflow differently
        assert!((c.p - want).abs() <= 1e-6 * want.max(1e-300) || (c.p < 1e-200 && want < 1e-200), "{key}: {} vs {want}", c.p);
    }
}
