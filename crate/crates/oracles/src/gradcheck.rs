//! Central finite differences against the analytic cDSSM gradient.

use chatrank_core::cdssm::{CdssmConfig, CdssmModel, Encoded, TowerParams, TrigramVocab};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

const WORDS: [&str; 8] = ["ab", "ba", "abc", "cab", "b", "ca", "bcb", "a"];

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Dense forward pass of one tower over `tokens`. Returns the semantic vector
/// and the smallest gap, over conv units, between the pooled maximum and the
/// runner-up position (infinite for one-token inputs).
pub fn reference_embed(model: &CdssmModel, tower: &TowerParams, tokens: &[String]) -> (Vec<f64>, f64) {
    let v = model.vocab.len();
    let w = model.config.conv_window;
    let half = (w / 2) as isize;
    let hashed: Vec<Vec<f64>> = tokens
        .iter()
        .map(|t| {
            let marked: Vec<char> = format!("#{t}#").chars().collect();
            let mut x = vec![0.0; v];
            for tri in marked.windows(3) {
                let tri: String = tri.iter().collect();
                if let Some(i) = model.vocab.get(&tri) {
                    x[i as usize] += 1.0;
                }
            }
            x
        })
        .collect();
    let mut hidden: Vec<Vec<f64>> = Vec::new();
    for pos in 0..tokens.len() as isize {
        let mut x = vec![0.0; w * v];
        for off in 0..w as isize {
            let src = pos + off - half;
            if src >= 0 && (src as usize) < tokens.len() {
                x[off as usize * v..(off as usize + 1) * v].copy_from_slice(&hashed[src as usize]);
            }
        }
        let h: Vec<f64> = (0..tower.conv_dim)
            .map(|k| {
                let a: f64 = (0..w * v).map(|col| tower.conv_weight(k, col) * x[col]).sum();
                (a + tower.conv_b[k]).tanh()
            })
            .collect();
        hidden.push(h);
    }
    let mut gap = f64::INFINITY;
    let pooled: Vec<f64> = (0..tower.conv_dim)
        .map(|k| {
            let mut col: Vec<f64> = hidden.iter().map(|h| h[k]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            if col.len() > 1 && col[0] != col[1] {
                gap = gap.min(col[0] - col[1]);
            }
            col[0]
        })
        .collect();
    let out = (0..tower.sem_dim)
        .map(|j| {
            let z: f64 = (0..tower.conv_dim)
                .map(|k| tower.proj_w[j * tower.conv_dim + k] * pooled[k])
                .sum();
            (z + tower.proj_b[j]).tanh()
        })
        .collect();
    (out, gap)
}

#[derive(Debug, Clone, Copy)]
pub struct DrawResult {
    /// False when some max-pool decision is within the stencil's reach, where
    /// the loss is not differentiable; such draws are not comparable.
    pub smooth: bool,
    /// Largest difference between the library and reference embeddings.
    pub embed_error: f64,
    pub max_rel_error: f64,
    pub params_checked: usize,
    pub vocab_size: usize,
}

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(1..=5);
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

fn perturb(model: &mut CdssmModel, tower: usize, i: usize, delta: f64) {
    let t: &mut TowerParams = if tower == 0 { &mut model.m_tower } else { &mut model.r_tower };
    *t.params_mut().nth(i).unwrap() += delta;
}

/// One random draw: a tiny model with random parameters, one message and
/// `1 + negatives` responses. Every parameter of both towers is checked.
pub fn check_draw(seed: u64) -> DrawResult {
    check_draw_with_step(seed, STEP)
}

pub fn check_draw_with_step(seed: u64, step: f64) -> DrawResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Vec<String>> = WORDS.iter().map(|w| vec![w.to_string()]).collect();
    let vocab = TrigramVocab::build(corpus.iter().map(Vec::as_slice), 20).unwrap();
    let config = CdssmConfig {
        conv_dim: rng.gen_range(2..=5),
        sem_dim: rng.gen_range(2..=4),
        neg_per_pos: 4,
        ..CdssmConfig::default()
    };
    let mut model = CdssmModel::new(vocab, config, &mut rng).unwrap();
    for t in [&mut model.m_tower, &mut model.r_tower] {
        for w in t.params_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    let msg_tokens = random_tokens(&mut rng);
    let resp_tokens: Vec<Vec<String>> = (0..5).map(|_| random_tokens(&mut rng)).collect();
    let message = model.encode_tokens(&msg_tokens);
    let responses: Vec<Encoded> = resp_tokens.iter().map(|t| model.encode_tokens(t)).collect();

    let mut min_gap = f64::INFINITY;
    let mut embed_error: f64 = 0.0;
    let inputs = std::iter::once((&model.m_tower, &msg_tokens, &message))
        .chain(resp_tokens.iter().zip(&responses).map(|(t, e)| (&model.r_tower, t, e)));
    for (tower, tokens, enc) in inputs {
        let (reference, gap) = reference_embed(&model, tower, tokens);
        let fast = CdssmModel::embed_encoded(tower, enc);
        for (a, b) in reference.iter().zip(&fast) {
            embed_error = embed_error.max((a - b).abs());
        }
        min_gap = min_gap.min(gap);
    }
    let refs: Vec<&Encoded> = responses.iter().collect();

    let outcome = model.example_grad(&message, &refs);
    let analytic = [
        outcome.grad.m.dense(&model.m_tower),
        outcome.grad.r.dense(&model.r_tower),
    ];
    let mut max_rel_error: f64 = 0.0;
    let mut params_checked = 0;
    for (tower, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let mut at = |delta: f64| {
                perturb(&mut model, tower, i, delta);
                let loss = model.example_loss(&message, &refs);
                perturb(&mut model, tower, i, -delta);
                loss
            };
            // Fourth-order central stencil.
            let numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
            max_rel_error = max_rel_error.max(relative_error(a, numeric));
            params_checked += 1;
        }
    }
    DrawResult {
        // A weight moves by at most 2 * step and inputs hold small counts.
        smooth: min_gap > 20.0 * step,
        embed_error,
        max_rel_error,
        params_checked,
        vocab_size: model.vocab.len(),
    }
}
