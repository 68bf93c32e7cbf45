use chatrank_core::cdssm::{train_cdssm, CdssmConfig, CdssmModel, Encoded};
use chatrank_core::corpus::Utterance;
use chatrank_core::features::extract_features;
use chatrank_core::index::{Candidate, InvertedIndex};
use chatrank_core::ranker::rank_candidates;
use chatrank_core::synth::{correspondence_pairs, DeskGenerator};
use chatrank_core::{train_mart, MartConfig};
use chatrank_oracles::rank::separable_fixture;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_model() -> CdssmModel {
    let (train, _) = correspondence_pairs(80, 0, 30, 3, 1);
    let cfg = CdssmConfig {
        conv_dim: 16,
        sem_dim: 8,
        epochs: 2,
        ..CdssmConfig::default()
    };
    train_cdssm(&train, &cfg).unwrap().0
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let model = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.cdssm");
    model.save(&path).unwrap();
    let loaded = CdssmModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    let (_, held) = correspondence_pairs(0, 20, 30, 3, 1);
    for p in &held {
        assert_eq!(
            model.sem_rel(&p.message, &p.response).unwrap().to_bits(),
            loaded.sem_rel(&p.message, &p.response).unwrap().to_bits()
        );
    }
    let bytes = std::fs::read(&path).unwrap();
    assert!(CdssmModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn per_example_loss_ignores_order() {
    let model = small_model();
    let (pairs, _) = correspondence_pairs(30, 0, 30, 3, 9);
    let enc = |u: &Utterance| model.encode(u).unwrap();
    let msgs: Vec<Encoded> = pairs.iter().map(|p| enc(&p.message)).collect();
    let resps: Vec<Encoded> = pairs.iter().map(|p| enc(&p.response)).collect();
    let example = |i: usize| {
        let negs: Vec<&Encoded> = std::iter::once(&resps[i])
            .chain((1..=4).map(|d| &resps[(i + d) % resps.len()]))
            .collect();
        model.example_loss(&msgs[i], &negs).to_bits()
    };
    let forward: Vec<u64> = (0..pairs.len()).map(example).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    for &i in &order {
        assert_eq!(example(i), forward[i]);
    }
}

#[test]
fn ranking_ignores_candidate_order() {
    let mut g = DeskGenerator::new(21);
    let pairs = g.pairs(200);
    let cfg = CdssmConfig {
        conv_dim: 16,
        sem_dim: 8,
        epochs: 1,
        ..CdssmConfig::default()
    };
    let model = train_cdssm(&pairs, &cfg).unwrap().0;
    let ens = train_mart(&separable_fixture(20, 1), &MartConfig::default()).unwrap().0;
    let index = InvertedIndex::build(pairs.clone()).unwrap();
    let m = pairs[5].message.clone();
    let c = Utterance::new("we went out yesterday");
    let cands: Vec<Candidate> = index.fetch_candidates(&m, &c, &Default::default()).unwrap();
    assert!(cands.len() > 3);
    let a = rank_candidates(&ens, &model, &c, &m, cands.clone()).unwrap();
    let mut shuffled = cands;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let b = rank_candidates(&ens, &model, &c, &m, shuffled).unwrap();
    let ids = |v: &[chatrank_core::ranker::RankedCandidate]| -> Vec<(u32, u64)> {
        v.iter().map(|r| (r.candidate.pair.id, r.score.to_bits())).collect()
    };
    assert_eq!(ids(&a), ids(&b));
    for r in &a {
        let f = extract_features(&model, &c, &m, &r.candidate.pair.response).unwrap();
        assert_eq!(f, r.features);
    }
}
