use chatrank_core::cdssm::{cosine, softmax_posterior, CdssmConfig, CdssmModel, TrigramVocab};
use chatrank_core::corpus::{filter_pair, tokenize, FilterConfig, MrPair, Utterance};
use chatrank_core::index::{FetchParams, InvertedIndex};
use chatrank_core::ranker::{ndcg_at_k, MartEnsemble};
use chatrank_core::cmm_counts;
use chatrank_oracles::rank::separable_fixture;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_tokens() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "hey", "yo"]), 0..10)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn pair_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["hi", "there", "@bob", "#tag", "http://x.co", "ok", "?", "Foo", "café"]),
        1..6,
    )
    .prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn tokenize_ignores_case(s in "\\PC{0,40}") {
        prop_assert_eq!(tokenize(&s), tokenize(&s.to_lowercase()));
    }

    #[test]
    fn tokens_are_nonempty_and_unspaced(s in "\\PC{0,40}") {
        for t in tokenize(&s) {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(char::is_whitespace));
        }
    }

    #[test]
    fn filtering_is_idempotent(texts in prop::collection::vec((pair_text(), pair_text()), 1..20)) {
        let cfg = FilterConfig::default();
        let pairs: Vec<MrPair> = texts
            .into_iter()
            .enumerate()
            .map(|(i, (m, r))| MrPair { id: i as u32, message: Utterance::new(m), response: Utterance::new(r) })
            .collect();
        let kept: Vec<&MrPair> = pairs.iter().filter(|p| filter_pair(p, &cfg).is_keep()).collect();
        for p in kept {
            prop_assert!(filter_pair(p, &cfg).is_keep());
            for t in p.message.tokens.iter().chain(&p.response.tokens) {
                prop_assert!(!t.starts_with("http") && !t.contains("://"));
                prop_assert!(!t.contains('@') && !t.contains('#'));
            }
        }
    }

    #[test]
    fn cmm_is_symmetric_and_bounded(a in small_tokens(), b in small_tokens()) {
        let ab = cmm_counts(&a, &b);
        prop_assert_eq!(ab, cmm_counts(&b, &a));
        for n in 1..=4usize {
            let bound = a.len().saturating_sub(n - 1).min(b.len().saturating_sub(n - 1));
            prop_assert!(ab[n - 1] as usize <= bound);
        }
        prop_assert!(ab.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ndcg_is_a_fraction(labels in prop::collection::vec(0u8..3, 1..12), k in 1usize..12) {
        let v = ndcg_at_k(&labels, k);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn softmax_sums_to_one(cos in prop::collection::vec(-1.0f64..1.0, 1..8), gamma in 0.0f64..50.0) {
        let p = softmax_posterior(gamma, &cos);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn cosine_is_scale_invariant(
        v in prop::collection::vec(-1.0f64..1.0, 4),
        w in prop::collection::vec(-1.0f64..1.0, 4),
        s in 0.01f64..100.0,
    ) {
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert!((cosine(&v, &w) - cosine(&scaled, &w)).abs() < 1e-9);
        prop_assert!(cosine(&v, &w).abs() <= 1.0);
    }

    #[test]
    fn base_score_does_not_change_order(shift in -100.0f64..100.0) {
        let samples = separable_fixture(5, 3);
        let mut ens = MartEnsemble::from_text(&chatrank_core::train_mart(&samples, &chatrank_core::MartConfig {
            num_trees: 5,
            ..Default::default()
        }).unwrap().0.to_text()).unwrap();
        let before: Vec<f64> = samples.iter().map(|s| ens.score(&s.features)).collect();
        ens.base_score += shift;
        let after: Vec<f64> = samples.iter().map(|s| ens.score(&s.features)).collect();
        for i in 0..before.len() {
            for j in 0..before.len() {
                if before[i] < before[j] {
                    prop_assert!(after[i] <= after[j]);
                }
            }
        }
    }

    #[test]
    fn embeddings_are_in_open_unit_interval(words in prop::collection::vec("[a-z]{1,6}", 1..8)) {
        let vocab = TrigramVocab::build([words.as_slice()], 100).unwrap();
        let cfg = CdssmConfig { conv_dim: 12, sem_dim: 8, ..CdssmConfig::default() };
        let model = CdssmModel::new(vocab, cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let e = model.embed_message(&Utterance::new(words.join(" "))).unwrap();
        prop_assert_eq!(e.len(), 8);
        prop_assert!(e.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn short_messages_use_context(msg in small_tokens(), ctx in small_tokens()) {
        let m = Utterance::new(msg.join(" "));
        let c = Utterance::new(ctx.join(" "));
        let q = InvertedIndex::expand_query(&m, &c, FetchParams::default().short_query_len);
        if m.len() <= 3 {
            prop_assert_eq!(q.len(), m.len() + c.len());
        } else {
            prop_assert_eq!(q, m.tokens.clone());
        }
    }

    #[test]
    fn adding_a_query_term_never_lowers_scores(
        docs in prop::collection::vec(small_tokens().prop_filter("nonempty", |t| !t.is_empty()), 2..15),
        q in small_tokens().prop_filter("nonempty", |t| !t.is_empty()),
        extra in prop::sample::select(vec!["a", "b", "c", "hey", "yo"]),
    ) {
        let pairs: Vec<MrPair> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| MrPair { id: i as u32, message: Utterance::new(d.join(" ")), response: Utterance::new("r") })
            .collect();
        let index = InvertedIndex::build(pairs).unwrap();
        let base: std::collections::HashMap<usize, f64> = index.score_query(&q).into_iter().collect();
        let mut q2 = q.clone();
        if !q2.contains(&extra.to_string()) {
            q2.push(extra.to_string());
            let more: std::collections::HashMap<usize, f64> = index.score_query(&q2).into_iter().collect();
            for (d, s) in base {
                prop_assert!(more.get(&d).copied().unwrap_or(0.0) >= s - 1e-12);
            }
        }
    }
}


fn pairs_from(docs: &[Vec<String>]) -> Vec<MrPair> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| MrPair {
            id: i as u32,
            message: Utterance::new(d.join(" ")),
            response: Utterance::new(format!("r{i}")),
        })
        .collect()
}

fn fetch_ids(index: &InvertedIndex, m: &Utterance, c: &Utterance) -> Vec<(u32, u64)> {
    index
        .fetch_candidates(m, c, &FetchParams::default())
        .unwrap()
        .into_iter()
        .map(|x| (x.pair.id, x.fetch_score.to_bits()))
        .collect()
}

proptest! {
    #[test]
    fn short_query_rule_at_fetch_level(
        docs in prop::collection::vec(small_tokens().prop_filter("nonempty", |t| !t.is_empty()), 2..15),
        msg in small_tokens().prop_filter("nonempty", |t| !t.is_empty()),
        ctx in small_tokens().prop_filter("nonempty", |t| !t.is_empty()),
    ) {
        let index = InvertedIndex::build(pairs_from(&docs)).unwrap();
        let (m, c) = (Utterance::new(msg.join(" ")), Utterance::new(ctx.join(" ")));
        let with_context = fetch_ids(&index, &m, &c);
        if m.len() <= 3 {
            let joined = Utterance::new(format!("{} {}", ctx.join(" "), msg.join(" ")));
            prop_assert_eq!(with_context, fetch_ids(&index, &joined, &Utterance::empty()));
        } else {
            prop_assert_eq!(with_context, fetch_ids(&index, &m, &Utterance::empty()));
        }
    }

    #[test]
    fn unrelated_document_never_displaces_candidates(
        docs in prop::collection::vec(small_tokens().prop_filter("nonempty", |t| !t.is_empty()), 2..15),
        msg in small_tokens().prop_filter("nonempty", |t| !t.is_empty()),
    ) {
        let mut pairs = pairs_from(&docs);
        let before = InvertedIndex::build(pairs.clone()).unwrap();
        pairs.push(MrPair { id: 999, message: Utterance::new("zzz qqq"), response: Utterance::new("r") });
        let after = InvertedIndex::build(pairs).unwrap();
        let m = Utterance::new(msg.join(" "));
        let a: Vec<u32> = fetch_ids(&before, &m, &Utterance::empty()).into_iter().map(|x| x.0).collect();
        let b: Vec<u32> = fetch_ids(&after, &m, &Utterance::empty()).into_iter().map(|x| x.0).collect();
        // idf only grows with N, so nothing drops out; the new document shares
        // no query term and never enters.
        prop_assert!(a.iter().all(|id| b.contains(id)));
        prop_assert!(!b.contains(&999));
    }

    #[test]
    fn sharing_a_token_never_lowers_unigram_count(a in small_tokens(), b in small_tokens(), pick in 0usize..10) {
        prop_assume!(!a.is_empty());
        let mut b2 = b.clone();
        b2.push(a[pick % a.len()].clone());
        prop_assert!(cmm_counts(&a, &b2)[0] >= cmm_counts(&a, &b)[0]);
    }

    #[test]
    fn perfect_ndcg_iff_positives_lead(labels in prop::collection::vec(0u8..2, 1..10), k in 1usize..10) {
        let positives = labels.iter().filter(|&&l| l == 1).count();
        prop_assume!(positives > 0);
        let need = positives.min(k);
        let leads = labels.iter().take(need).all(|&l| l == 1);
        prop_assert_eq!(ndcg_at_k(&labels, k) == 1.0, leads);
    }
}
