//! The pairwise ranking network.
//!
//! For a tuple `(t1, t2, r)` with sentence vectors `ψ(·)` and pairwise
//! features `φ(t, r)`, the multi-layer network computes three interaction
//! blocks
//!
//! ```text
//! h12 = tanh(W12 [ψ(t1); ψ(t2)] + b12)
//! h1r = tanh(W1r [ψ(t1); ψ(r)]  + b1r)
//! h2r = tanh(W2r [ψ(t2); ψ(r)]  + b2r)
//! σ   = logistic(w_out · [h12; h1r; h2r; φ(t1,r); φ(t2,r)] + b_out)
//! ```
//!
//! The single-layer variant drops the hidden blocks and feeds
//! `[ψ(t1); ψ(t2); ψ(r); φ(t1,r); φ(t2,r)]` straight into the logistic
//! output, i.e. logistic regression on the raw inputs.
//!
//! `σ` estimates the probability that `t1` is the better hypothesis. The
//! network is not symmetric, so [`Model::predict_delta`] also evaluates the
//! tuple with the hypotheses swapped and reports `Δ = σ − σ'`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{axpy, dot, logistic, Matrix};

/// Default width of each interaction block.
pub const DEFAULT_HIDDEN: usize = 4;

/// Default `|Δ|` at or below which a decision is a tie.
pub const DEFAULT_TIE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch for {field}: expected {expected}, found {found}")]
    ShapeMismatch { field: &'static str, expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    #[default]
    MultiLayer,
    SingleLayer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Dimension of each sentence vector; 0 disables the embedding inputs.
    pub sentence_dim: usize,
    /// Length of each pairwise feature vector.
    pub pairwise_dim: usize,
    /// Units per interaction block (ignored by the single-layer network).
    pub hidden_per_block: usize,
    pub architecture: Architecture,
    #[serde(default)]
    pub hidden_activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(sentence_dim: usize, pairwise_dim: usize) -> Self {
        ModelConfig {
            sentence_dim,
            pairwise_dim,
            hidden_per_block: DEFAULT_HIDDEN,
            architecture: Architecture::MultiLayer,
            hidden_activation: Activation::Tanh,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sentence_dim + self.pairwise_dim == 0 {
            return Err(ModelError::InvalidConfig(
                "sentence_dim + pairwise_dim must be at least 1".into(),
            ));
        }
        if self.architecture == Architecture::MultiLayer && self.hidden_per_block == 0 {
            return Err(ModelError::InvalidConfig("hidden_per_block must be positive".into()));
        }
        Ok(())
    }

    /// Effective hidden width: 0 for the single-layer network.
    pub fn hidden(&self) -> usize {
        match self.architecture {
            Architecture::MultiLayer => self.hidden_per_block,
            Architecture::SingleLayer => 0,
        }
    }

    /// Length of the vector the output layer sees.
    pub fn output_inputs(&self) -> usize {
        match self.architecture {
            Architecture::MultiLayer => 3 * self.hidden_per_block + 2 * self.pairwise_dim,
            Architecture::SingleLayer => 3 * self.sentence_dim + 2 * self.pairwise_dim,
        }
    }
}

/// All trainable parameters. Gradients share this layout.
///
/// The declared order (used for flattening and checkpoints) is
/// `w12, b12, w1r, b1r, w2r, b2r, w_out, b_out`. Hidden matrices are
/// `H × 2d`; for the single-layer network they are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub w12: Matrix,
    pub b12: Vec<f64>,
    pub w1r: Matrix,
    pub b1r: Vec<f64>,
    pub w2r: Matrix,
    pub b2r: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl Parameters {
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden();
        let cols = if h == 0 { 0 } else { 2 * config.sentence_dim };
        Parameters {
            w12: Matrix::zeros(h, cols),
            b12: vec![0.0; h],
            w1r: Matrix::zeros(h, cols),
            b1r: vec![0.0; h],
            w2r: Matrix::zeros(h, cols),
            b2r: vec![0.0; h],
            w_out: vec![0.0; config.output_inputs()],
            b_out: 0.0,
        }
    }

    /// Parameter groups in declared order.
    pub fn groups(&self) -> [&[f64]; 8] {
        [
            &self.w12.data,
            &self.b12,
            &self.w1r.data,
            &self.b1r,
            &self.w2r.data,
            &self.b2r,
            &self.w_out,
            std::slice::from_ref(&self.b_out),
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w12.data,
            &mut self.b12,
            &mut self.w1r.data,
            &mut self.b1r,
            &mut self.w2r.data,
            &mut self.b2r,
            &mut self.w_out,
            std::slice::from_mut(&mut self.b_out),
        ]
    }

    /// Names of the groups returned by [`Parameters::groups`].
    pub const GROUP_NAMES: [&'static str; 8] =
        ["w12", "b12", "w1r", "b1r", "w2r", "b2r", "w_out", "b_out"];

    pub fn len(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.groups().concat()
    }

    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        for g in self.groups() {
            if i < g.len() {
                return g[i];
            }
            i -= g.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let mut i = index;
        for g in self.groups_mut() {
            if i < g.len() {
                g[i] = value;
                return;
            }
            i -= g.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Parameters) {
        for (dst, src) in self.groups_mut().into_iter().zip(other.groups()) {
            axpy(alpha, src, dst);
        }
    }

    /// Adds `alpha * weights` of `other` to `self`, skipping bias groups.
    pub fn add_scaled_weights(&mut self, alpha: f64, other: &Parameters) {
        axpy(alpha, &other.w12.data, &mut self.w12.data);
        axpy(alpha, &other.w1r.data, &mut self.w1r.data);
        axpy(alpha, &other.w2r.data, &mut self.w2r.data);
        axpy(alpha, &other.w_out, &mut self.w_out);
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|x| x.is_finite()))
    }

    pub fn sum_squared_weights(&self) -> f64 {
        [&self.w12.data, &self.w1r.data, &self.w2r.data, &self.w_out]
            .iter()
            .map(|g| dot(g, g))
            .sum()
    }
}

/// The inputs describing one tuple `(t1, t2, r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub psi_t1: Vec<f64>,
    pub psi_t2: Vec<f64>,
    pub psi_r: Vec<f64>,
    pub phi_t1r: Vec<f64>,
    pub phi_t2r: Vec<f64>,
}

impl ModelInput {
    /// The same tuple with the two hypotheses exchanged.
    pub fn swapped(&self) -> ModelInput {
        ModelInput {
            psi_t1: self.psi_t2.clone(),
            psi_t2: self.psi_t1.clone(),
            psi_r: self.psi_r.clone(),
            phi_t1r: self.phi_t2r.clone(),
            phi_t2r: self.phi_t1r.clone(),
        }
    }

    pub(crate) fn view(&self) -> InputView<'_> {
        InputView {
            t1: &self.psi_t1,
            t2: &self.psi_t2,
            r: &self.psi_r,
            p1: &self.phi_t1r,
            p2: &self.phi_t2r,
        }
    }
}

/// Borrowed input, possibly in swapped orientation.
#[derive(Clone, Copy)]
pub(crate) struct InputView<'a> {
    pub t1: &'a [f64],
    pub t2: &'a [f64],
    pub r: &'a [f64],
    pub p1: &'a [f64],
    pub p2: &'a [f64],
}

impl<'a> InputView<'a> {
    pub fn swapped(self) -> InputView<'a> {
        InputView { t1: self.t2, t2: self.t1, p1: self.p2, p2: self.p1, ..self }
    }
}

/// Activations recorded by a forward pass, reused by backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct Trace {
    pub h12: Vec<f64>,
    pub h1r: Vec<f64>,
    pub h2r: Vec<f64>,
    pub z: f64,
    pub sigma: f64,
}

/// `σ`, `σ'` and their difference for one tuple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionDelta {
    pub sigma: f64,
    pub sigma_rev: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preference {
    T1Better,
    T2Better,
    Tie,
}

/// Turns a margin into a decision; `|delta| <= tie_epsilon` is a tie.
pub fn decide(delta: f64, tie_epsilon: f64) -> Preference {
    if delta.abs() <= tie_epsilon {
        Preference::Tie
    } else if delta > 0.0 {
        Preference::T1Better
    } else {
        Preference::T2Better
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

fn hidden_block(w: &Matrix, b: &[f64], a: &[f64], c: &[f64]) -> Vec<f64> {
    let d = a.len();
    (0..w.rows)
        .map(|i| {
            let row = w.row(i);
            (dot(&row[..d], a) + dot(&row[d..], c) + b[i]).tanh()
        })
        .collect()
}

/// Backpropagates `dh` (gradient w.r.t. block output) into `gw`/`gb`.
fn hidden_block_grad(h: &[f64], dh: &[f64], a: &[f64], c: &[f64], gw: &mut Matrix, gb: &mut [f64]) {
    let d = a.len();
    for i in 0..h.len() {
        let da = dh[i] * (1.0 - h[i] * h[i]);
        gb[i] += da;
        let row = gw.row_mut(i);
        axpy(da, a, &mut row[..d]);
        axpy(da, c, &mut row[d..]);
    }
}

impl Model {
    /// A model with every parameter set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Parameters::zeros(&config);
        Ok(Model { config, params })
    }

    /// Glorot-uniform weights, zero biases, seeded by `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        let mut model = Model::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        let h = model.config.hidden();
        let fan_in = 2 * model.config.sentence_dim;
        let p = &mut model.params;
        for w in [&mut p.w12.data, &mut p.w1r.data, &mut p.w2r.data] {
            fill_uniform(w, fan_in, h, &mut rng);
        }
        let n_out = p.w_out.len();
        fill_uniform(&mut p.w_out, n_out, 1, &mut rng);
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        let d = self.config.sentence_dim;
        let p = self.config.pairwise_dim;
        for (field, v, expected) in [
            ("psi_t1", &input.psi_t1, d),
            ("psi_t2", &input.psi_t2, d),
            ("psi_r", &input.psi_r, d),
            ("phi_t1r", &input.phi_t1r, p),
            ("phi_t2r", &input.phi_t2r, p),
        ] {
            if v.len() != expected {
                return Err(ModelError::ShapeMismatch { field, expected, found: v.len() });
            }
        }
        Ok(())
    }

    /// `σ = f(t1, t2, r)`.
    pub fn forward(&self, input: &ModelInput) -> Result<f64, ModelError> {
        self.check_input(input)?;
        Ok(self.trace(input.view()).sigma)
    }

    /// Scores the tuple in both orientations.
    pub fn predict_delta(&self, input: &ModelInput) -> Result<PredictionDelta, ModelError> {
        self.check_input(input)?;
        let view = input.view();
        let fwd = self.trace(view);
        let rev = self.trace(view.swapped());
        Ok(PredictionDelta { sigma: fwd.sigma, sigma_rev: rev.sigma, delta: self.delta(view, &fwd, &rev) })
    }

    /// `σ − σ'` from the two traces of a tuple.
    ///
    /// Subtracting the outputs directly loses the low bits of Δ to rounding
    /// at the scale of σ. Instead the logit gap `z − z'` is formed from
    /// differences of the output-layer inputs (so anything shared by both
    /// orientations, such as `ψ(r)` in the single-layer net, cancels exactly)
    /// and then `σ(a) − σ(b) = sinh((a−b)/2) / (2 cosh(a/2) cosh(b/2))`.
    /// The result is exactly antisymmetric under swapping the hypotheses.
    pub(crate) fn delta(&self, x: InputView<'_>, fwd: &Trace, rev: &Trace) -> f64 {
        let w = &self.params.w_out;
        let xr = x.swapped();
        let gap = match self.config.architecture {
            Architecture::MultiLayer => dot_chunk_diff(
                w,
                &[&fwd.h12, &fwd.h1r, &fwd.h2r, x.p1, x.p2],
                &[&rev.h12, &rev.h1r, &rev.h2r, xr.p1, xr.p2],
            ),
            Architecture::SingleLayer => {
                dot_chunk_diff(w, &[x.t1, x.t2, x.r, x.p1, x.p2], &[xr.t1, xr.t2, xr.r, xr.p1, xr.p2])
            }
        };
        let delta = (gap / 2.0).sinh() / (2.0 * (fwd.z / 2.0).cosh() * (rev.z / 2.0).cosh());
        if delta.is_finite() {
            delta
        } else {
            fwd.sigma - rev.sigma
        }
    }

    pub(crate) fn trace(&self, x: InputView<'_>) -> Trace {
        let p = &self.params;
        match self.config.architecture {
            Architecture::MultiLayer => {
                let h12 = hidden_block(&p.w12, &p.b12, x.t1, x.t2);
                let h1r = hidden_block(&p.w1r, &p.b1r, x.t1, x.r);
                let h2r = hidden_block(&p.w2r, &p.b2r, x.t2, x.r);
                let z = dot_chunks(&p.w_out, &[&h12, &h1r, &h2r, x.p1, x.p2]) + p.b_out;
                Trace { h12, h1r, h2r, z, sigma: logistic(z) }
            }
            Architecture::SingleLayer => {
                let z = dot_chunks(&p.w_out, &[x.t1, x.t2, x.r, x.p1, x.p2]) + p.b_out;
                Trace { h12: vec![], h1r: vec![], h2r: vec![], z, sigma: logistic(z) }
            }
        }
    }

    /// Accumulates into `grad` the gradient of a cost whose derivative with
    /// respect to the output pre-activation is `dz`.
    pub(crate) fn backprop(&self, x: InputView<'_>, trace: &Trace, dz: f64, grad: &mut Parameters) {
        let p = &self.params;
        grad.b_out += dz;
        match self.config.architecture {
            Architecture::MultiLayer => {
                let h = self.config.hidden_per_block;
                let chunks: [&[f64]; 5] = [&trace.h12, &trace.h1r, &trace.h2r, x.p1, x.p2];
                axpy_chunks(dz, &chunks, &mut grad.w_out);
                let dh = |k: usize| -> Vec<f64> { p.w_out[k * h..(k + 1) * h].iter().map(|w| dz * w).collect() };
                hidden_block_grad(&trace.h12, &dh(0), x.t1, x.t2, &mut grad.w12, &mut grad.b12);
                hidden_block_grad(&trace.h1r, &dh(1), x.t1, x.r, &mut grad.w1r, &mut grad.b1r);
                hidden_block_grad(&trace.h2r, &dh(2), x.t2, x.r, &mut grad.w2r, &mut grad.b2r);
            }
            Architecture::SingleLayer => {
                axpy_chunks(dz, &[x.t1, x.t2, x.r, x.p1, x.p2], &mut grad.w_out);
            }
        }
    }
}

fn dot_chunks(w: &[f64], chunks: &[&[f64]]) -> f64 {
    let mut offset = 0;
    let mut z = 0.0;
    for c in chunks {
        z += dot(&w[offset..offset + c.len()], c);
        offset += c.len();
    }
    z
}

/// `w · (a − b)` where `a` and `b` are split into matching chunks.
fn dot_chunk_diff(w: &[f64], a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let mut offset = 0;
    let mut z = 0.0;
    for (ca, cb) in a.iter().zip(b) {
        for (k, (x, y)) in ca.iter().zip(cb.iter()).enumerate() {
            z += w[offset + k] * (x - y);
        }
        offset += ca.len();
    }
    z
}

fn axpy_chunks(alpha: f64, chunks: &[&[f64]], out: &mut [f64]) {
    let mut offset = 0;
    for c in chunks {
        axpy(alpha, c, &mut out[offset..offset + c.len()]);
        offset += c.len();
    }
}

fn fill_uniform(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    if w.is_empty() {
        return;
    }
    let eps = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in w.iter_mut() {
        *x = rng.gen_range(-eps..=eps);
    }
}

/// On-disk model: config plus one flat array per parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub parameters: CheckpointParameters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParameters {
    pub w12: Vec<f64>,
    pub b12: Vec<f64>,
    pub w1r: Vec<f64>,
    pub b1r: Vec<f64>,
    pub w2r: Vec<f64>,
    pub b2r: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl From<&Model> for Checkpoint {
    fn from(model: &Model) -> Self {
        let p = &model.params;
        Checkpoint {
            config: model.config.clone(),
            parameters: CheckpointParameters {
                w12: p.w12.data.clone(),
                b12: p.b12.clone(),
                w1r: p.w1r.data.clone(),
                b1r: p.b1r.clone(),
                w2r: p.w2r.data.clone(),
                b2r: p.b2r.clone(),
                w_out: p.w_out.clone(),
                b_out: p.b_out,
            },
        }
    }
}

impl TryFrom<Checkpoint> for Model {
    type Error = ModelError;

    fn try_from(ck: Checkpoint) -> Result<Self, ModelError> {
        let mut model = Model::zeros(ck.config)?;
        let src = ck.parameters;
        let srcs: [&[f64]; 8] = [
            &src.w12,
            &src.b12,
            &src.w1r,
            &src.b1r,
            &src.w2r,
            &src.b2r,
            &src.w_out,
            std::slice::from_ref(&src.b_out),
        ];
        for ((dst, s), field) in model.params.groups_mut().into_iter().zip(srcs).zip(Parameters::GROUP_NAMES) {
            if dst.len() != s.len() {
                return Err(ModelError::ShapeMismatch { field, expected: dst.len(), found: s.len() });
            }
            dst.copy_from_slice(s);
        }
        if !model.params.all_finite() {
            return Err(ModelError::InvalidConfig("checkpoint contains non-finite parameters".into()));
        }
        Ok(model)
    }
}

impl Model {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&Checkpoint::from(self)).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Model, CheckpointError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        Ok(Model::try_from(ck)?)
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}
