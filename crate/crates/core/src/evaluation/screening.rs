//! Listener screening with null pairs and corrupted anchors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::listening::{ProbeKind, RatingRecord, SimilarityCategory, TestKind, TestManifest};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    /// Minimum share of null pairs answered "same" (or within ±1 of 0 on CCR).
    pub null_pass_rate: f64,
    /// Minimum share of corrupted anchors answered "different" (or negative on CCR).
    pub anchor_pass_rate: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig { null_pass_rate: 0.7, anchor_pass_rate: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerScreenResult {
    pub listener_id: String,
    pub null_pair_pass: bool,
    pub anchor_pass: bool,
    pub included: bool,
    pub null_pairs_rated: usize,
    pub anchors_rated: usize,
    /// Rated no probe at all and was included by default.
    pub no_probe_exposure: bool,
}

fn probe_correct(kind: TestKind, probe: ProbeKind, value: i32) -> Option<bool> {
    match (kind, probe) {
        (_, ProbeKind::System) => None,
        (TestKind::Similarity, ProbeKind::NullPair) => Some(SimilarityCategory::from_code(value).is_some_and(|c| c.is_same())),
        (TestKind::Similarity, ProbeKind::CorruptedAnchor) => {
            Some(SimilarityCategory::from_code(value).is_some_and(|c| !c.is_same()))
        }
        (TestKind::Ccr, ProbeKind::NullPair) => Some(value.abs() <= 1),
        // the corrupted sample is always played second
        (TestKind::Ccr, ProbeKind::CorruptedAnchor) => Some(value < 0),
    }
}

/// One rating per (listener, pair): the earliest timestamp wins, ties go to
/// the lower value, so the result does not depend on input order.
pub fn deduplicate(ratings: &[RatingRecord]) -> Vec<RatingRecord> {
    let mut best: BTreeMap<(&str, &str), &RatingRecord> = BTreeMap::new();
    for r in ratings {
        best.entry((r.listener_id.as_str(), r.pair_id.as_str()))
            .and_modify(|cur| {
                if (r.timestamp.as_str(), r.value) < (cur.timestamp.as_str(), cur.value) {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    best.into_values().cloned().collect()
}

/// Screening verdict per listener, sorted by listener id.
pub fn screen_listeners(
    manifest: &TestManifest,
    ratings: &[RatingRecord],
    config: &ScreeningConfig,
) -> Vec<ListenerScreenResult> {
    let pairs = manifest.pair_index();
    // (null correct, null total, anchor correct, anchor total)
    let mut tallies: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    for r in deduplicate(ratings) {
        let t = tallies.entry(r.listener_id.clone()).or_default();
        let Some(p) = pairs.get(r.pair_id.as_str()) else { continue };
        let Some(ok) = probe_correct(p.test_kind, p.probe_kind, r.value) else { continue };
        let base = if p.probe_kind == ProbeKind::NullPair { 0 } else { 2 };
        t[base] += ok as usize;
        t[base + 1] += 1;
    }
    let pass = |correct: usize, total: usize, rate: f64| total == 0 || correct as f64 >= rate * total as f64 - 1e-9;
    tallies
        .into_iter()
        .map(|(listener_id, [nc, nt, ac, at])| {
            let null_pair_pass = pass(nc, nt, config.null_pass_rate);
            let anchor_pass = pass(ac, at, config.anchor_pass_rate);
            let no_probe_exposure = nt + at == 0;
            if no_probe_exposure {
                tracing::warn!(listener = %listener_id, "listener rated no screening probes; included by default");
            }
            ListenerScreenResult {
                listener_id,
                null_pair_pass,
                anchor_pass,
                included: null_pair_pass && anchor_pass,
                null_pairs_rated: nt,
                anchors_rated: at,
                no_probe_exposure,
            }
        })
        .collect()
}

/// Deduplicated ratings of the included listeners.
pub fn included_ratings(ratings: &[RatingRecord], results: &[ListenerScreenResult]) -> Vec<RatingRecord> {
    let keep: BTreeSet<&str> = results.iter().filter(|r| r.included).map(|r| r.listener_id.as_str()).collect();
    deduplicate(ratings).into_iter().filter(|r| keep.contains(r.listener_id.as_str())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Style;
    use crate::evaluation::listening::StimulusPair;
    use proptest::prelude::*;

    fn pair(id: &str, kind: TestKind, probe: ProbeKind) -> StimulusPair {
        StimulusPair {
            id: id.into(),
            test_kind: kind,
            probe_kind: probe,
            first_audio: "a.wav".into(),
            second_audio: "b.wav".into(),
            stitched_audio: format!("{id}.wav").into(),
            gap_s: 0.5,
            first_label: "ref_lombard".into(),
            second_label: if probe == ProbeKind::System { "S1".into() } else { "anchor".into() },
            system: (probe == ProbeKind::System).then(|| "S1".into()),
            reference_style: Style::Lombard,
            utterance_id: "u".into(),
            swapped: false,
        }
    }

    fn manifest() -> TestManifest {
        let mut pairs = Vec::new();
        for i in 0..5 {
            pairs.push(pair(&format!("n{i}"), TestKind::Similarity, ProbeKind::NullPair));
            pairs.push(pair(&format!("a{i}"), TestKind::Similarity, ProbeKind::CorruptedAnchor));
            pairs.push(pair(&format!("s{i}"), TestKind::Similarity, ProbeKind::System));
        }
        pairs.push(pair("cn", TestKind::Ccr, ProbeKind::NullPair));
        pairs.push(pair("ca", TestKind::Ccr, ProbeKind::CorruptedAnchor));
        TestManifest { seed: 0, gap_s: 0.5, sample_rate: 16000, pairs, base_dir: Default::default() }
    }

    fn rating(listener: &str, pair: &str, kind: TestKind, value: i32) -> RatingRecord {
        RatingRecord {
            pair_id: pair.into(),
            listener_id: listener.into(),
            test_kind: kind,
            value,
            timestamp: "2026-01-01T00:00:00Z".into(),
        }
    }

    /// A listener answering null pairs with `null_value` and anchors with `anchor_value`.
    fn listener(id: &str, null_value: i32, anchor_value: i32) -> Vec<RatingRecord> {
        let mut out = Vec::new();
        for i in 0..5 {
            out.push(rating(id, &format!("n{i}"), TestKind::Similarity, null_value));
            out.push(rating(id, &format!("a{i}"), TestKind::Similarity, anchor_value));
            out.push(rating(id, &format!("s{i}"), TestKind::Similarity, 1));
        }
        out.push(rating(id, "cn", TestKind::Ccr, 0));
        out.push(rating(id, "ca", TestKind::Ccr, -3));
        out
    }

    #[test]
    fn all_null_pairs_different_is_excluded() {
        let r = screen_listeners(&manifest(), &listener("x", 3, 3), &ScreeningConfig::default());
        assert!(!r[0].null_pair_pass && r[0].anchor_pass && !r[0].included);
    }

    #[test]
    fn perfect_listener_is_included() {
        let r = screen_listeners(&manifest(), &listener("x", 0, 3), &ScreeningConfig::default());
        assert!(r[0].included);
        assert_eq!((r[0].null_pairs_rated, r[0].anchors_rated), (6, 6));
    }

    #[test]
    fn planted_cheaters_are_exactly_the_excluded() {
        let mut all = Vec::new();
        for i in 0..10 {
            let id = format!("L{i:02}");
            all.extend(match i {
                3 => listener(&id, 3, 3), // answers "different" to everything
                7 => listener(&id, 0, 0), // answers "same" to everything
                _ => listener(&id, i % 2, 2 + i % 2),
            });
        }
        let r = screen_listeners(&manifest(), &all, &ScreeningConfig::default());
        let excluded: Vec<_> = r.iter().filter(|x| !x.included).map(|x| x.listener_id.as_str()).collect();
        assert_eq!(excluded, ["L03", "L07"]);
        let kept = included_ratings(&all, &r);
        assert!(kept.iter().all(|k| k.listener_id != "L03" && k.listener_id != "L07"));
        assert_eq!(kept.len(), 8 * 17);
    }

    #[test]
    fn no_probes_means_included_and_flagged() {
        let r = screen_listeners(&manifest(), &[rating("q", "s0", TestKind::Similarity, 3)], &ScreeningConfig::default());
        assert!(r[0].included && r[0].no_probe_exposure);
    }

    #[test]
    fn boundary_of_seventy_percent() {
        // 7 of 10 correct passes, 6 of 10 does not
        let m = {
            let pairs = (0..10).map(|i| pair(&format!("n{i}"), TestKind::Similarity, ProbeKind::NullPair)).collect();
            TestManifest { seed: 0, gap_s: 0.5, sample_rate: 16000, pairs, base_dir: Default::default() }
        };
        let run = |good: usize| {
            let rs: Vec<_> = (0..10).map(|i| rating("x", &format!("n{i}"), TestKind::Similarity, if i < good { 0 } else { 3 })).collect();
            screen_listeners(&m, &rs, &ScreeningConfig::default())[0].null_pair_pass
        };
        assert!(run(7));
        assert!(!run(6));
    }

    proptest! {
        #[test]
        fn screening_is_order_independent_and_idempotent(
            picks in proptest::collection::vec((0usize..4, 0usize..17, 0i32..4), 1..80),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = manifest();
            let ids: Vec<String> = m.pairs.iter().map(|p| p.id.clone()).collect();
            let rs: Vec<_> = picks.iter().map(|&(l, p, v)| {
                let kind = m.pairs[p].test_kind;
                rating(&format!("L{l}"), &ids[p], kind, if kind == TestKind::Ccr { v - 2 } else { v })
            }).collect();
            let cfg = ScreeningConfig::default();
            let a = screen_listeners(&m, &rs, &cfg);
            let mut shuffled = rs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&a, &screen_listeners(&m, &shuffled, &cfg));
            let kept = included_ratings(&rs, &a);
            let again = screen_listeners(&m, &kept, &cfg);
            prop_assert!(again.iter().all(|r| r.included));
            prop_assert_eq!(included_ratings(&kept, &again), kept);
        }
    }
}
