use chatrank_core::cdssm::{softmax_posterior, train_cdssm, CdssmConfig};
use chatrank_core::synth::correspondence_pairs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sanity_config() -> CdssmConfig {
    CdssmConfig {
        conv_dim: 64,
        sem_dim: 32,
        epochs: 8,
        minibatch: 8,
        seed: 11,
        ..CdssmConfig::default()
    }
}

#[test]
fn separable_corpus_is_learned() {
    let (train, heldout) = correspondence_pairs(200, 200, 40, 4, 5);
    let (model, report) = train_cdssm(&train, &sanity_config()).unwrap();
    let l = &report.epoch_losses;
    eprintln!("losses {l:?}");
    assert!(l[0] > l[1] && l[1] > l[2], "loss not decreasing: {l:?}");
    assert!(report.max_prob_sum_error <= 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut wins = 0;
    for (i, p) in heldout.iter().enumerate() {
        let mut j = rng.gen_range(0..heldout.len() - 1);
        if j >= i {
            j += 1;
        }
        let pos = model.sem_rel(&p.message, &p.response).unwrap();
        let neg = model.sem_rel(&p.message, &heldout[j].response).unwrap();
        if pos > neg {
            wins += 1;
        }
    }
    let rate = wins as f64 / heldout.len() as f64;
    eprintln!("held-out win rate {rate}");
    assert!(rate >= 0.9, "win rate {rate}");
}

#[test]
fn zero_gamma_is_uniform() {
    let p = softmax_posterior(0.0, &[0.3, -0.9, 0.1, 1.0, 0.0]);
    assert!(p.iter().all(|&x| x == 0.2));
}

#[test]
fn training_is_deterministic() {
    let (train, _) = correspondence_pairs(60, 0, 20, 3, 2);
    let cfg = CdssmConfig {
        conv_dim: 8,
        sem_dim: 4,
        epochs: 2,
        ..CdssmConfig::default()
    };
    let (a, ra) = train_cdssm(&train, &cfg).unwrap();
    let (b, rb) = train_cdssm(&train, &cfg).unwrap();
    assert_eq!(ra.epoch_losses, rb.epoch_losses);
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
}
