//! Twin-tower convolutional semantic model over character trigrams.
//!
//! Each word `w` is hashed to counts of the trigrams of `#w#` over a vocabulary
//! of the most frequent corpus trigrams. A tower concatenates the hashed words in
//! a sliding window around every position, applies a tanh convolution, max-pools
//! over positions and projects through a tanh layer to the semantic vector.
//! The message tower (M-Model) and the response tower (R-Model) share the
//! vocabulary and shapes but not parameters.
//!
//! Training maximizes the softmax likelihood of the observed response against
//! sampled negatives, with logits `gamma * cos(M_msg, R_resp)`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::corpus::{MrPair, Utterance};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"CDSM";
pub const MODEL_VERSION: u32 = 1;

/// Cosines of vectors with a norm below this are defined as 0.
pub const MIN_NORM: f64 = 1e-12;

/// Boundary-marked character trigrams of `word`, in order of occurrence.
pub fn word_trigrams(word: &str) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('#')
        .chain(word.chars())
        .chain(std::iter::once('#'))
        .collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrigramVocab {
    trigrams: Vec<String>,
    index: HashMap<String, u32>,
}

impl TrigramVocab {
    /// Keeps the `max_size` most frequent trigrams, breaking frequency ties
    /// lexicographically. Indices follow that order.
    pub fn build<'a, I>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for tokens in corpus {
            for tok in tokens {
                for tri in word_trigrams(tok) {
                    *counts.entry(tri).or_insert(0) += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size);
        Ok(Self::from_trigrams(ranked.into_iter().map(|(t, _)| t).collect()))
    }

    pub fn from_trigrams(trigrams: Vec<String>) -> Self {
        let index = trigrams
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TrigramVocab { trigrams, index }
    }

    pub fn len(&self) -> usize {
        self.trigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trigrams.is_empty()
    }

    pub fn get(&self, trigram: &str) -> Option<u32> {
        self.index.get(trigram).copied()
    }

    pub fn trigrams(&self) -> &[String] {
        &self.trigrams
    }

    /// Sparse trigram counts of `word`, sorted by vocabulary index. OOV
    /// trigrams are dropped, so the result may be empty.
    pub fn hash_word(&self, word: &str) -> Vec<(u32, f64)> {
        let mut counts: Vec<(u32, f64)> = Vec::new();
        for tri in word_trigrams(word) {
            if let Some(i) = self.get(&tri) {
                match counts.iter_mut().find(|(j, _)| *j == i) {
                    Some((_, c)) => *c += 1.0,
                    None => counts.push((i, 1.0)),
                }
            }
        }
        counts.sort_by_key(|&(i, _)| i);
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdssmConfig {
    pub vocab_max: usize,
    pub conv_window: usize,
    pub conv_dim: usize,
    pub sem_dim: usize,
    /// Softmax smoothing factor applied to cosines.
    pub gamma: f64,
    pub neg_per_pos: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for CdssmConfig {
    fn default() -> Self {
        CdssmConfig {
            vocab_max: 5000,
            conv_window: 3,
            conv_dim: 300,
            sem_dim: 128,
            gamma: 10.0,
            neg_per_pos: 4,
            learning_rate: 0.5,
            epochs: 10,
            minibatch: 16,
            seed: 0,
        }
    }
}

impl CdssmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.vocab_max == 0 || self.conv_dim == 0 || self.sem_dim == 0 {
            return bad("model dimensions must be at least 1");
        }
        if self.conv_window == 0 || self.conv_window % 2 == 0 {
            return bad("conv_window must be odd");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if self.neg_per_pos == 0 || self.minibatch == 0 {
            return bad("neg_per_pos and minibatch must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Parameters of one tower.
///
/// `conv_w` is stored column-major (`col * conv_dim + k`) so that a sparse
/// input touches contiguous memory; the file format is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerParams {
    pub input_dim: usize,
    pub conv_dim: usize,
    pub sem_dim: usize,
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// Row-major `[sem_dim x conv_dim]`.
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
}

impl TowerParams {
    pub fn zeros(input_dim: usize, conv_dim: usize, sem_dim: usize) -> Self {
        TowerParams {
            input_dim,
            conv_dim,
            sem_dim,
            conv_w: vec![0.0; input_dim * conv_dim],
            conv_b: vec![0.0; conv_dim],
            proj_w: vec![0.0; sem_dim * conv_dim],
            proj_b: vec![0.0; sem_dim],
        }
    }

    pub fn random(input_dim: usize, conv_dim: usize, sem_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, conv_dim, sem_dim);
        // Inputs are sparse: roughly a dozen active trigram columns per window.
        let conv_r = (6.0 / (12.0 + conv_dim as f64)).sqrt();
        let proj_r = (6.0 / (conv_dim + sem_dim) as f64).sqrt();
        p.conv_w.iter_mut().for_each(|w| *w = rng.gen_range(-conv_r..conv_r));
        p.proj_w.iter_mut().for_each(|w| *w = rng.gen_range(-proj_r..proj_r));
        p
    }

    pub fn conv_weight(&self, k: usize, col: usize) -> f64 {
        self.conv_w[col * self.conv_dim + k]
    }

    pub fn param_count(&self) -> usize {
        self.conv_w.len() + self.conv_b.len() + self.proj_w.len() + self.proj_b.len()
    }

    /// All parameters in a fixed order: conv_w, conv_b, proj_w, proj_b.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.conv_w
            .iter()
            .chain(&self.conv_b)
            .chain(&self.proj_w)
            .chain(&self.proj_b)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.conv_w
            .iter_mut()
            .chain(self.conv_b.iter_mut())
            .chain(self.proj_w.iter_mut())
            .chain(self.proj_b.iter_mut())
    }

    fn round_to_f32(&mut self) {
        self.params_mut().for_each(|w| *w = *w as f32 as f64);
    }

    fn all_finite(&self) -> bool {
        self.params().all(|w| w.is_finite())
    }
}

/// Sparse per-position convolution inputs of an utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub windows: Vec<Vec<(u32, f64)>>,
}

struct Activation {
    /// `[positions x conv_dim]` tanh outputs.
    hidden: Vec<f64>,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
    out: Vec<f64>,
}

/// Gradient of one tower, kept in factored form.
#[derive(Debug, Clone, Default)]
pub struct TowerGrad {
    /// `(input window, [(k, d pre-activation)])`: outer product contributions to conv_w.
    pub conv: Vec<(Vec<(u32, f64)>, Vec<(usize, f64)>)>,
    pub conv_b: Vec<f64>,
    /// `(d pre-projection, pooled)`: outer product contributions to proj_w.
    pub proj: Vec<(Vec<f64>, Vec<f64>)>,
    pub proj_b: Vec<f64>,
}

impl TowerGrad {
    fn new(tower: &TowerParams) -> Self {
        TowerGrad {
            conv: Vec::new(),
            conv_b: vec![0.0; tower.conv_dim],
            proj: Vec::new(),
            proj_b: vec![0.0; tower.sem_dim],
        }
    }

    /// Dense gradient in [`TowerParams::params`] order.
    pub fn dense(&self, tower: &TowerParams) -> Vec<f64> {
        let mut g = TowerParams::zeros(tower.input_dim, tower.conv_dim, tower.sem_dim);
        self.apply(&mut g, -1.0);
        g.params().copied().collect()
    }

    /// `params -= scale * grad`.
    fn apply(&self, params: &mut TowerParams, scale: f64) {
        let cd = params.conv_dim;
        for (window, deltas) in &self.conv {
            for &(col, val) in window {
                let base = col as usize * cd;
                for &(k, d) in deltas {
                    params.conv_w[base + k] -= scale * val * d;
                }
            }
        }
        for (w, g) in params.conv_b.iter_mut().zip(&self.conv_b) {
            *w -= scale * g;
        }
        for (dz, pooled) in &self.proj {
            for (j, &dzj) in dz.iter().enumerate() {
                if dzj == 0.0 {
                    continue;
                }
                let row = &mut params.proj_w[j * cd..(j + 1) * cd];
                for (w, &v) in row.iter_mut().zip(pooled) {
                    *w -= scale * dzj * v;
                }
            }
        }
        for (w, g) in params.proj_b.iter_mut().zip(&self.proj_b) {
            *w -= scale * g;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModelGrad {
    pub m: TowerGrad,
    pub r: TowerGrad,
}

/// Loss, softmax posterior and gradient for one training example.
#[derive(Debug, Clone)]
pub struct ExampleOutcome {
    pub loss: f64,
    /// Posterior over `[positive, negatives...]`.
    pub probs: Vec<f64>,
    pub grad: ModelGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdssmModel {
    pub vocab: TrigramVocab,
    pub m_tower: TowerParams,
    pub r_tower: TowerParams,
    pub config: CdssmConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-example loss of each epoch, accumulated while training.
    pub epoch_losses: Vec<f64>,
    /// Largest `|sum(probs) - 1|` seen over every softmax evaluated.
    pub max_prob_sum_error: f64,
    pub steps: usize,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, 0 when either vector has norm below [`MIN_NORM`].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < MIN_NORM || nb < MIN_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Softmax of `gamma * cosines`, computed stably.
pub fn softmax_posterior(gamma: f64, cosines: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = cosines.iter().map(|c| gamma * c).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln softmax(gamma * cosines)[0]` as `ln(1 + sum_j exp(gamma (c_j - c_0)))`,
/// which stays accurate when the positive dominates.
pub fn positive_nll(gamma: f64, cosines: &[f64]) -> f64 {
    let c0 = cosines[0];
    let rest = &cosines[1..];
    let max = rest.iter().map(|&c| gamma * (c - c0)).fold(0.0f64, f64::max);
    if max > 0.0 {
        // Positive is not the argmax; no cancellation to avoid.
        let total: f64 = cosines.iter().map(|&c| (gamma * (c - c0) - max).exp()).sum();
        return max + total.ln();
    }
    rest.iter().map(|&c| (gamma * (c - c0)).exp()).sum::<f64>().ln_1p()
}

/// Gradient of `cos(a, b)` with respect to `a`.
fn cosine_grad(a: &[f64], b: &[f64], na: f64, nb: f64, cos: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| bi / (na * nb) - cos * ai / (na * na))
        .collect()
}

impl CdssmModel {
    pub fn new(vocab: TrigramVocab, config: CdssmConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let input_dim = config.conv_window * vocab.len();
        let m_tower = TowerParams::random(input_dim, config.conv_dim, config.sem_dim, rng);
        let r_tower = TowerParams::random(input_dim, config.conv_dim, config.sem_dim, rng);
        Ok(CdssmModel {
            vocab,
            m_tower,
            r_tower,
            config,
        })
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Encoded {
        let v = self.vocab.len();
        let w = self.config.conv_window;
        let half = w / 2;
        let hashed: Vec<Vec<(u32, f64)>> = tokens.iter().map(|t| self.vocab.hash_word(t)).collect();
        let windows = (0..tokens.len())
            .map(|i| {
                let mut x = Vec::new();
                for off in 0..w {
                    let pos = i + off;
                    if pos < half || pos - half >= tokens.len() {
                        continue;
                    }
                    let base = (off * v) as u32;
                    x.extend(hashed[pos - half].iter().map(|&(j, c)| (base + j, c)));
                }
                x
            })
            .collect();
        Encoded { windows }
    }

    pub fn encode(&self, utt: &Utterance) -> Result<Encoded> {
        if utt.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        Ok(self.encode_tokens(&utt.tokens))
    }

    fn forward(tower: &TowerParams, enc: &Encoded) -> Activation {
        let cd = tower.conv_dim;
        let n = enc.windows.len();
        let mut hidden = vec![0.0; n * cd];
        for (i, window) in enc.windows.iter().enumerate() {
            let h = &mut hidden[i * cd..(i + 1) * cd];
            h.copy_from_slice(&tower.conv_b);
            for &(col, val) in window {
                let wcol = &tower.conv_w[col as usize * cd..(col as usize + 1) * cd];
                for (hk, &wk) in h.iter_mut().zip(wcol) {
                    *hk += val * wk;
                }
            }
            h.iter_mut().for_each(|x| *x = x.tanh());
        }
        let mut argmax = vec![0usize; cd];
        let mut pooled = vec![f64::NEG_INFINITY; cd];
        for i in 0..n {
            for k in 0..cd {
                let x = hidden[i * cd + k];
                if x > pooled[k] {
                    pooled[k] = x;
                    argmax[k] = i;
                }
            }
        }
        let out = (0..tower.sem_dim)
            .map(|j| {
                let row = &tower.proj_w[j * cd..(j + 1) * cd];
                (tower.proj_b[j] + dot(row, &pooled)).tanh()
            })
            .collect();
        Activation {
            hidden,
            argmax,
            pooled,
            out,
        }
    }

    fn backward(
        tower: &TowerParams,
        enc: &Encoded,
        act: &Activation,
        d_out: &[f64],
        grad: &mut TowerGrad,
    ) {
        let cd = tower.conv_dim;
        let dz: Vec<f64> = d_out
            .iter()
            .zip(&act.out)
            .map(|(d, y)| d * (1.0 - y * y))
            .collect();
        let mut d_pooled = vec![0.0; cd];
        for (j, &dzj) in dz.iter().enumerate() {
            grad.proj_b[j] += dzj;
            if dzj != 0.0 {
                let row = &tower.proj_w[j * cd..(j + 1) * cd];
                for (dp, &w) in d_pooled.iter_mut().zip(row) {
                    *dp += dzj * w;
                }
            }
        }
        grad.proj.push((dz, act.pooled.clone()));

        let mut per_pos: Vec<Vec<(usize, f64)>> = vec![Vec::new(); enc.windows.len()];
        for k in 0..cd {
            let pos = act.argmax[k];
            let h = act.hidden[pos * cd + k];
            let da = d_pooled[k] * (1.0 - h * h);
            grad.conv_b[k] += da;
            per_pos[pos].push((k, da));
        }
        for (pos, deltas) in per_pos.into_iter().enumerate() {
            if !deltas.is_empty() && !enc.windows[pos].is_empty() {
                grad.conv.push((enc.windows[pos].clone(), deltas));
            }
        }
    }

    pub fn embed_encoded(tower: &TowerParams, enc: &Encoded) -> Vec<f64> {
        Self::forward(tower, enc).out
    }

    /// Semantic vector of `utt` under the message tower.
    pub fn embed_message(&self, utt: &Utterance) -> Result<Vec<f64>> {
        Ok(Self::embed_encoded(&self.m_tower, &self.encode(utt)?))
    }

    /// Semantic vector of `utt` under the response tower.
    pub fn embed_response(&self, utt: &Utterance) -> Result<Vec<f64>> {
        Ok(Self::embed_encoded(&self.r_tower, &self.encode(utt)?))
    }

    /// Relevance of `y` as a response to `x`: cos(M(x), R(y)).
    pub fn sem_rel(&self, x: &Utterance, y: &Utterance) -> Result<f64> {
        Ok(cosine(&self.embed_message(x)?, &self.embed_response(y)?))
    }

    /// Similarity of `x` and `y` in response space: cos(R(x), R(y)).
    pub fn sem_sim(&self, x: &Utterance, y: &Utterance) -> Result<f64> {
        Ok(cosine(&self.embed_response(x)?, &self.embed_response(y)?))
    }

    /// Negative log posterior of the positive (index 0 of `responses`).
    pub fn example_loss(&self, message: &Encoded, responses: &[&Encoded]) -> f64 {
        let q = Self::embed_encoded(&self.m_tower, message);
        let cosines: Vec<f64> = responses
            .iter()
            .map(|r| raw_cosine(&q, &Self::embed_encoded(&self.r_tower, r)))
            .collect();
        positive_nll(self.config.gamma, &cosines)
    }

    /// Loss, posterior and analytic gradient for one example. `responses[0]` is
    /// the observed response; the rest are negatives.
    pub fn example_grad(&self, message: &Encoded, responses: &[&Encoded]) -> ExampleOutcome {
        let gamma = self.config.gamma;
        let q_act = Self::forward(&self.m_tower, message);
        let r_acts: Vec<Activation> = responses
            .iter()
            .map(|r| Self::forward(&self.r_tower, r))
            .collect();
        let q = &q_act.out;
        let nq = norm(q);
        let norms: Vec<f64> = r_acts.iter().map(|a| norm(&a.out)).collect();
        let cosines: Vec<f64> = r_acts
            .iter()
            .zip(&norms)
            .map(|(a, &nr)| {
                if nq < MIN_NORM || nr < MIN_NORM {
                    0.0
                } else {
                    dot(q, &a.out) / (nq * nr)
                }
            })
            .collect();
        let probs = softmax_posterior(gamma, &cosines);
        let loss = positive_nll(gamma, &cosines);

        let mut grad = ModelGrad {
            m: TowerGrad::new(&self.m_tower),
            r: TowerGrad::new(&self.r_tower),
        };
        let mut d_q = vec![0.0; q.len()];
        for (j, act) in r_acts.iter().enumerate() {
            let nr = norms[j];
            let d_cos = gamma * (probs[j] - if j == 0 { 1.0 } else { 0.0 });
            if nq < MIN_NORM || nr < MIN_NORM || d_cos == 0.0 {
                continue;
            }
            let gq = cosine_grad(q, &act.out, nq, nr, cosines[j]);
            d_q.iter_mut().zip(&gq).for_each(|(d, g)| *d += d_cos * g);
            let gr: Vec<f64> = cosine_grad(&act.out, q, nr, nq, cosines[j])
                .into_iter()
                .map(|g| d_cos * g)
                .collect();
            Self::backward(&self.r_tower, responses[j], act, &gr, &mut grad.r);
        }
        Self::backward(&self.m_tower, message, &q_act, &d_q, &mut grad.m);
        ExampleOutcome { loss, probs, grad }
    }

    fn apply(&mut self, grads: &[ModelGrad], scale: f64) {
        for g in grads {
            g.m.apply(&mut self.m_tower, scale);
            g.r.apply(&mut self.r_tower, scale);
        }
    }

    /// Rounds every parameter to single precision, the stored precision.
    pub fn round_to_f32(&mut self) {
        self.m_tower.round_to_f32();
        self.r_tower.round_to_f32();
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut w = Writer::default();
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.len_u32(c.vocab_max)?;
        w.len_u32(c.conv_window)?;
        w.len_u32(c.conv_dim)?;
        w.len_u32(c.sem_dim)?;
        w.f64(c.gamma);
        w.len_u32(c.neg_per_pos)?;
        w.f64(c.learning_rate);
        w.len_u32(c.epochs)?;
        w.len_u32(c.minibatch)?;
        w.u64(c.seed);
        w.len_u32(self.vocab.len())?;
        for t in self.vocab.trigrams() {
            w.str(t)?;
        }
        for tower in [&self.m_tower, &self.r_tower] {
            for k in 0..tower.conv_dim {
                for col in 0..tower.input_dim {
                    w.f32(tower.conv_weight(k, col) as f32);
                }
            }
            tower.conv_b.iter().for_each(|&x| w.f32(x as f32));
            tower.proj_w.iter().for_each(|&x| w.f32(x as f32));
            tower.proj_b.iter().for_each(|&x| w.f32(x as f32));
        }
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.expect_magic(MODEL_MAGIC)?;
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let config = CdssmConfig {
            vocab_max: r.u32()? as usize,
            conv_window: r.u32()? as usize,
            conv_dim: r.u32()? as usize,
            sem_dim: r.u32()? as usize,
            gamma: r.f64()?,
            neg_per_pos: r.u32()? as usize,
            learning_rate: r.f64()?,
            epochs: r.u32()? as usize,
            minibatch: r.u32()? as usize,
            seed: r.u64()?,
        };
        config.validate()?;
        let n = r.u32()? as usize;
        let mut trigrams = Vec::with_capacity(n);
        for _ in 0..n {
            trigrams.push(r.str()?);
        }
        let vocab = TrigramVocab::from_trigrams(trigrams);
        if vocab.len() != n {
            return Err(Error::Format("duplicate trigram in vocabulary".into()));
        }
        let input_dim = config.conv_window * n;
        let mut read_tower = || -> Result<TowerParams> {
            let mut t = TowerParams::zeros(input_dim, config.conv_dim, config.sem_dim);
            for k in 0..t.conv_dim {
                for col in 0..input_dim {
                    t.conv_w[col * t.conv_dim + k] = r.f32()? as f64;
                }
            }
            for x in t.conv_b.iter_mut().chain(t.proj_w.iter_mut()).chain(t.proj_b.iter_mut()) {
                *x = r.f32()? as f64;
            }
            if !t.all_finite() {
                return Err(Error::Format("non-finite parameter".into()));
            }
            Ok(t)
        };
        let m_tower = read_tower()?;
        let r_tower = read_tower()?;
        r.finish()?;
        Ok(CdssmModel {
            vocab,
            m_tower,
            r_tower,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// Unclamped cosine, used inside the loss so that it matches its gradient.
fn raw_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < MIN_NORM || nb < MIN_NORM {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Draws `count` distinct indices from `0..n` excluding `skip`.
pub(crate) fn sample_excluding(rng: &mut impl Rng, n: usize, skip: usize, count: usize) -> Vec<usize> {
    let count = count.min(n.saturating_sub(1));
    sample(rng, n - 1, count)
        .into_iter()
        .map(|i| if i >= skip { i + 1 } else { i })
        .collect()
}

/// Trains both towers on M-R pairs. Negatives for each example are drawn
/// uniformly without replacement from the other pairs' responses, afresh every
/// epoch. Returns the model, rounded to stored precision, and the loss trace.
pub fn train_cdssm(pairs: &[MrPair], config: &CdssmConfig) -> Result<(CdssmModel, TrainReport)> {
    config.validate()?;
    let pairs: Vec<&MrPair> = pairs
        .iter()
        .filter(|p| !p.message.is_empty() && !p.response.is_empty())
        .collect();
    if pairs.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: pairs.len(),
        });
    }
    let vocab = TrigramVocab::build(
        pairs
            .iter()
            .flat_map(|p| [p.message.tokens.as_slice(), p.response.tokens.as_slice()]),
        config.vocab_max,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CdssmModel::new(vocab, config.clone(), &mut rng)?;

    let messages: Vec<Encoded> = pairs
        .iter()
        .map(|p| model.encode_tokens(&p.message.tokens))
        .collect();
    let responses: Vec<Encoded> = pairs
        .iter()
        .map(|p| model.encode_tokens(&p.response.tokens))
        .collect();

    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        max_prob_sum_error: 0.0,
        steps: 0,
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.minibatch).enumerate() {
            let jobs: Vec<(usize, Vec<usize>)> = batch
                .iter()
                .map(|&i| (i, sample_excluding(&mut rng, pairs.len(), i, config.neg_per_pos)))
                .collect();
            let outcomes: Vec<ExampleOutcome> = jobs
                .par_iter()
                .map(|(i, negs)| {
                    let resp: Vec<&Encoded> = std::iter::once(&responses[*i])
                        .chain(negs.iter().map(|&j| &responses[j]))
                        .collect();
                    model.example_grad(&messages[*i], &resp)
                })
                .collect();
            let mut batch_loss = 0.0;
            for o in &outcomes {
                let sum: f64 = o.probs.iter().sum();
                report.max_prob_sum_error = report.max_prob_sum_error.max((sum - 1.0).abs());
                batch_loss += o.loss;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            let grads: Vec<ModelGrad> = outcomes.into_iter().map(|o| o.grad).collect();
            model.apply(&grads, config.learning_rate / batch.len() as f64);
            report.steps += 1;
        }
        let mean = epoch_loss / pairs.len() as f64;
        log::info!("cdssm epoch {epoch}: loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    if !(model.m_tower.all_finite() && model.r_tower.all_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            batch: 0,
            loss: f64::NAN,
        });
    }
    model.round_to_f32();
    Ok((model, report))
}
