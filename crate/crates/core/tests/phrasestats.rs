use std::collections::{BTreeMap, BTreeSet};

use phrasebias::phrasestats::{
    apply_purge_rules, build_count_matrix, extract_ngrams, information_scores, mutual_information_bits, purge_subsumed, PurgeRules,
};
use phrasebias::textprep::PERIOD;
use phrasebias::{CleanArticle, CountMatrix, Counts, PhraseKey};
use proptest::prelude::*;

fn counts_strategy() -> impl Strategy<Value = Counts> {
    (1usize..7, 2usize..7).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop_oneof![1 => Just(0u64), 3 => 1u64..60], m * n)
            .prop_filter("non-zero total", |d| d.iter().any(|&c| c > 0))
            .prop_map(move |d| Counts::from_row_major(m, n, d))
    })
}

fn scores_by_label(cm: &CountMatrix) -> BTreeMap<String, f64> {
    information_scores::<f64>(cm).unwrap().into_iter().map(|s| (s.phrase.to_string(), s.info_bits)).collect()
}

fn articles_strategy() -> impl Strategy<Value = Vec<CleanArticle>> {
    let token = prop::sample::select(vec!["tax", "cut", "the", "war", "plan", "vote", PERIOD]);
    let article = (0usize..3, prop::collection::vec(token, 0..25)).prop_map(|(s, toks)| CleanArticle {
        source_id: format!("s{s}"),
        topic_id: "t".into(),
        tokens: toks.into_iter().map(str::to_string).collect(),
    });
    prop::collection::vec(article, 1..8)
}

/// Counts every n-gram (n ≤ 3) by scanning positions, without splitting into
/// sentences first.
fn naive_recount(corpus: &[CleanArticle]) -> BTreeMap<(String, String), u64> {
    let mut out = BTreeMap::new();
    for a in corpus {
        let t = &a.tokens;
        for start in 0..t.len() {
            for len in 1..=3 {
                if start + len > t.len() {
                    break;
                }
                let window = &t[start..start + len];
                if window.iter().any(|w| w == PERIOD) {
                    break;
                }
                *out.entry((window.join(" "), a.source_id.clone())).or_insert(0) += 1;
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn phrase_scores_sum_to_mutual_information(counts in counts_strategy()) {
        let cm = CountMatrix::from_counts("t", counts.clone());
        let sum: f64 = information_scores::<f64>(&cm).unwrap().iter().map(|s| s.info_bits).sum();
        let mi: f64 = mutual_information_bits(&counts).unwrap();
        prop_assert!((sum - mi).abs() <= 1e-10 * mi.abs().max(1.0), "{sum} vs {mi}");
    }

    #[test]
    fn scores_follow_row_and_column_permutations(counts in counts_strategy(), seed in any::<u64>()) {
        let (m, n) = counts.shape();
        let rot_r = (seed as usize) % m;
        let rot_c = (seed as usize / 7) % n;
        let rows: Vec<usize> = (0..m).map(|i| (i + rot_r) % m).collect();
        let cols: Vec<usize> = (0..n).map(|j| (j + rot_c) % n).collect();
        let cm = CountMatrix::from_counts("t", counts.clone());
        let permuted = CountMatrix::new(
            "t",
            rows.iter().map(|&i| cm.phrases()[i].clone()).collect(),
            cols.iter().map(|&j| cm.sources()[j].clone()).collect(),
            counts.select(&rows, &cols),
            vec![1; n],
        ).unwrap();
        let a = scores_by_label(&cm);
        let b = scores_by_label(&permuted);
        prop_assert_eq!(a.len(), b.len());
        for (k, v) in &a {
            prop_assert!((v - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_counts_keeps_scores(counts in counts_strategy(), factor in 2u64..6) {
        let a = information_scores::<f64>(&CountMatrix::from_counts("t", counts.clone())).unwrap();
        let b = information_scores::<f64>(&CountMatrix::from_counts("t", counts.scaled(factor))).unwrap();
        let order = |s: &[phrasebias::PhraseScore<f64>]| s.iter().map(|x| x.phrase.to_string()).collect::<Vec<_>>();
        prop_assert_eq!(order(&a), order(&b));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.info_bits - y.info_bits).abs() <= 1e-12 * x.info_bits.abs().max(1.0));
        }
    }

    #[test]
    fn purge_keeps_a_subset_in_score_order(counts in counts_strategy(), cap in 1usize..8) {
        let scores = information_scores::<f64>(&CountMatrix::from_counts("t", counts)).unwrap();
        let rules = PurgeRules { candidates: cap, ..PurgeRules::default() };
        let kept = apply_purge_rules(&scores, &BTreeSet::new(), &rules);
        prop_assert!(kept.len() <= cap);
        let mut last = 0;
        for k in &kept {
            prop_assert!(k.dominant_source_share <= rules.max_dominant_share);
            let pos = scores.iter().position(|s| s.phrase == k.phrase).unwrap();
            prop_assert!(pos >= last);
            last = pos;
        }
    }

    #[test]
    fn count_matrix_matches_naive_recount(corpus in articles_strategy()) {
        let oracle = naive_recount(&corpus);
        prop_assume!(!oracle.is_empty());
        let cm = build_count_matrix(&corpus, "t", usize::MAX).unwrap();
        let mut seen = 0;
        for (i, p) in cm.phrases().iter().enumerate() {
            for (j, s) in cm.sources().iter().enumerate() {
                let c = cm.counts().get(i, j);
                prop_assert_eq!(c, oracle.get(&(p.to_string(), s.clone())).copied().unwrap_or(0));
                seen += u64::from(c > 0);
            }
        }
        prop_assert_eq!(seen as usize, oracle.len());
        let per_article: u64 = corpus.iter().map(|a| extract_ngrams(a).values().sum::<u64>()).sum();
        prop_assert_eq!(per_article, cm.counts().total());
    }

    #[test]
    fn subsumption_purge_only_removes_rows(corpus in articles_strategy(), threshold in 0.0f64..1.0) {
        prop_assume!(!naive_recount(&corpus).is_empty());
        let cm = build_count_matrix(&corpus, "t", usize::MAX).unwrap();
        let purged = purge_subsumed(&cm, threshold);
        prop_assert_eq!(purged.sources(), cm.sources());
        for p in purged.phrases() {
            let (a, b) = (purged.row_of(p).unwrap(), cm.row_of(p).unwrap());
            prop_assert_eq!(purged.counts().row(a), cm.counts().row(b));
        }
    }
}

#[test]
fn pool_keeps_most_common_phrases() {
    let tokens = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let corpus = vec![
        CleanArticle { source_id: "a".into(), topic_id: "t".into(), tokens: tokens("tax tax tax cut") },
        CleanArticle { source_id: "b".into(), topic_id: "t".into(), tokens: tokens("tax cut vote") },
    ];
    let cm = build_count_matrix(&corpus, "t", 2).unwrap();
    let labels: Vec<&str> = cm.phrases().iter().map(PhraseKey::as_str).collect();
    // "cut" and "tax cut" tie at 2; ties go to the lexicographically smaller.
    assert_eq!(labels, ["tax", "cut"]);
    assert_eq!(cm.article_counts(), &[1, 1]);
}
