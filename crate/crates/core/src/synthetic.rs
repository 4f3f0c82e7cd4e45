//! Seeded synthetic tuples with known structure.
//!
//! These are used for gradient self-checks and for sanity experiments where
//! the right answer is planted by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Example, Label};
use crate::model::{Architecture, Model, ModelConfig, ModelInput};

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn example(i: usize, input: ModelInput, label: Label) -> Example {
    Example { id: i.to_string(), split: "synthetic".into(), input, label }
}

/// A small initialized model (`d = 3`, `H = 2`, two pairwise features) and
/// `n` random tuples with random labels.
pub fn gradcheck_instance(seed: u64, architecture: Architecture, n: usize) -> (Model, Vec<Example>) {
    let config = ModelConfig {
        sentence_dim: 3,
        pairwise_dim: 2,
        hidden_per_block: 2,
        architecture,
        hidden_activation: Default::default(),
        seed,
    };
    let mut model = Model::init(config).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    // non-zero biases so every parameter carries gradient
    for b in [&mut model.params.b12, &mut model.params.b1r, &mut model.params.b2r] {
        b.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
    model.params.b_out = rng.gen_range(-0.5..0.5);
    let data = (0..n)
        .map(|i| {
            let input = ModelInput {
                psi_t1: uniform_vec(&mut rng, 3),
                psi_t2: uniform_vec(&mut rng, 3),
                psi_r: uniform_vec(&mut rng, 3),
                phi_t1r: uniform_vec(&mut rng, 2),
                phi_t2r: uniform_vec(&mut rng, 2),
            };
            let label = if rng.gen_bool(0.5) { Label::T1Better } else { Label::T2Better };
            example(i, input, label)
        })
        .collect();
    (model, data)
}

/// Tuples labelled by a planted linear rule on the pairwise features:
/// `y = 1` iff `w* · (φ(t1,r) − φ(t2,r)) > 0`. No sentence vectors.
pub fn planted_linear(n: usize, pairwise_dim: usize, seed: u64) -> (Vec<Example>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = normal_vec(&mut rng, pairwise_dim);
    let data = (0..n)
        .map(|i| {
            let phi_t1r = uniform_vec(&mut rng, pairwise_dim);
            let phi_t2r = uniform_vec(&mut rng, pairwise_dim);
            let margin: f64 = w.iter().zip(phi_t1r.iter().zip(&phi_t2r)).map(|(w, (a, b))| w * (a - b)).sum();
            let label = if margin > 0.0 { Label::T1Better } else { Label::T2Better };
            let input = ModelInput { psi_t1: vec![], psi_t2: vec![], psi_r: vec![], phi_t1r, phi_t2r };
            example(i, input, label)
        })
        .collect();
    (data, w)
}

/// Tuples whose label depends on how each hypothesis vector interacts with
/// the reference vector: `y = 1` iff `ψ(t1)·ψ(r) > ψ(t2)·ψ(r)`.
///
/// Vectors are standard normal, so no linear function of the concatenated
/// inputs separates the classes better than chance. `pairwise_dim` columns of
/// uninformative noise are attached as pairwise features.
pub fn reference_interaction(n: usize, sentence_dim: usize, pairwise_dim: usize, seed: u64) -> Vec<Example> {
    InteractionData { sentence_dim, pairwise_dim, ..Default::default() }.generate(n, seed)
}

/// Generator for [`reference_interaction`]-style tuples, optionally with
/// near-duplicate hypothesis pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionData {
    pub sentence_dim: usize,
    pub pairwise_dim: usize,
    /// Share of tuples whose second hypothesis is the first one plus a
    /// uniform perturbation of size `near_duplicate_scale`, with identical
    /// pairwise features. These are the pairs a model is likely to tie on.
    pub near_duplicate_fraction: f64,
    pub near_duplicate_scale: f64,
}

impl Default for InteractionData {
    fn default() -> Self {
        InteractionData { sentence_dim: 2, pairwise_dim: 0, near_duplicate_fraction: 0.0, near_duplicate_scale: 1e-4 }
    }
}

impl InteractionData {
    pub fn generate(&self, n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.sentence_dim;
        (0..n)
            .map(|i| {
                let psi_t1 = normal_vec(&mut rng, d);
                let mut psi_t2 = normal_vec(&mut rng, d);
                let psi_r = normal_vec(&mut rng, d);
                let phi_t1r = uniform_vec(&mut rng, self.pairwise_dim);
                let mut phi_t2r = uniform_vec(&mut rng, self.pairwise_dim);
                if self.near_duplicate_fraction > 0.0 && rng.gen_bool(self.near_duplicate_fraction) {
                    psi_t2 = psi_t1.iter().map(|x| x + self.near_duplicate_scale * rng.gen_range(-1.0..1.0)).collect();
                    phi_t2r = phi_t1r.clone();
                }
                let s1: f64 = psi_t1.iter().zip(&psi_r).map(|(a, b)| a * b).sum();
                let s2: f64 = psi_t2.iter().zip(&psi_r).map(|(a, b)| a * b).sum();
                let label = if s1 > s2 { Label::T1Better } else { Label::T2Better };
                example(i, ModelInput { psi_t1, psi_t2, psi_r, phi_t1r, phi_t2r }, label)
            })
            .collect()
    }
}

/// Flips each label independently with probability `rate`.
pub fn with_label_noise(mut examples: Vec<Example>, rate: f64, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ex in &mut examples {
        if rng.gen_bool(rate) {
            ex.label = ex.label.flipped();
        }
    }
    examples
}
