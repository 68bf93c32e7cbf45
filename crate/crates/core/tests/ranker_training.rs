use chatrank_core::ranker::{ndcg_at_k, train_mart, MartConfig, MartEnsemble};
use chatrank_oracles::rank::{brute_ndcg, separable_fixture, walk_score};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ndcg_hand_cases() {
    assert!((ndcg_at_k(&[1, 0, 0], 1) - 1.0).abs() < 1e-4);
    assert!((ndcg_at_k(&[0, 1, 0], 2) - 0.6309).abs() < 1e-4);
    assert_eq!(ndcg_at_k(&[0, 0, 0], 3), 0.0);
}

#[test]
fn ndcg_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let n = rng.gen_range(1..=6);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
        let k = rng.gen_range(1..=n + 1);
        let a = ndcg_at_k(&labels, k);
        let b = brute_ndcg(&labels, k);
        assert!((a - b).abs() < 1e-12, "{labels:?}@{k}: {a} vs {b}");
        assert!((0.0..=1.0 + 1e-12).contains(&a));
    }
}

#[test]
fn separable_fixture_is_solved() {
    let samples = separable_fixture(60, 1);
    let cfg = MartConfig {
        num_trees: 50,
        ..MartConfig::default()
    };
    let (_, report) = train_mart(&samples, &cfg).unwrap();
    assert_eq!(report.train_ndcg1.last().copied(), Some(1.0));
    let mut run = 0;
    for w in report.train_ndcg1.windows(2) {
        run = if w[1] < w[0] { run + 1 } else { 0 };
        assert!(run <= 5, "{:?}", report.train_ndcg1);
    }
}

#[test]
fn score_equals_tree_walk() {
    let samples = separable_fixture(40, 2);
    let (ens, _) = train_mart(&samples, &MartConfig::default()).unwrap();
    assert_eq!(ens.trees.len(), 100);
    assert!(ens.trees.iter().all(|t| t.depth() <= 3));
    for s in separable_fixture(40, 3) {
        assert_eq!(ens.score(&s.features).to_bits(), walk_score(&ens, &s.features).to_bits());
    }
}

#[test]
fn fixed_seed_gives_identical_file() {
    let samples = separable_fixture(40, 5);
    let cfg = MartConfig {
        seed: 9,
        ..MartConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    train_mart(&samples, &cfg).unwrap().0.save(&a).unwrap();
    train_mart(&samples, &cfg).unwrap().0.save(&b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let loaded = MartEnsemble::load(&a).unwrap();
    for s in &samples {
        assert_eq!(loaded.score(&s.features).to_bits(), walk_score(&loaded, &s.features).to_bits());
    }
    assert_eq!(loaded.to_text().into_bytes(), bytes);
}

#[test]
fn restricted_features_are_respected() {
    let samples = separable_fixture(30, 6);
    let cfg = MartConfig {
        features: vec![3, 4],
        num_trees: 10,
        ..MartConfig::default()
    };
    let (ens, _) = train_mart(&samples, &cfg).unwrap();
    for t in &ens.trees {
        for n in &t.nodes {
            if let chatrank_core::ranker::Node::Split { feature, .. } = n {
                assert!([3, 4].contains(feature));
            }
        }
    }
}
