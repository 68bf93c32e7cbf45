use chatrank_core::{cmm_counts, tokenize};
use chatrank_oracles::ngram::brute_cmm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(0..12);
    (0..n).map(|_| ["a", "b", "c", "d"][rng.gen_range(0..4)].to_string()).collect()
}

#[test]
fn cmm_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let a = random_tokens(&mut rng);
        let b = random_tokens(&mut rng);
        assert_eq!(cmm_counts(&a, &b), brute_cmm(&a, &b), "{a:?} vs {b:?}");
    }
}

#[test]
fn love_you_case() {
    let c = tokenize("i love you");
    let r = tokenize("i love you too!");
    assert_eq!(cmm_counts(&c, &r), [3, 2, 1, 0]);
    assert_eq!(brute_cmm(&c, &r), [3, 2, 1, 0]);
}
