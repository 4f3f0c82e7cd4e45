//! Costs, exact gradients and the mini-batch training loop.
//!
//! Two per-example costs are available. The logistic cost treats `σ` as a
//! Bernoulli parameter for `y`:
//!
//! ```text
//! J = −[y ln σ + (1 − y) ln(1 − σ)]
//! ```
//!
//! The Kendall cost looks at both orientations of the tuple through
//! `Δ = σ − σ'`. A steep sigmoid stands in for the step function that counts
//! disagreements, and a Gaussian bump around `Δ = 0` discourages ties:
//!
//! ```text
//! J = y·logistic(−γΔ) + (1 − y)·logistic(γΔ) + λ·exp(−βΔ²/2)
//! ```
//!
//! Its gradient flows through both forward passes, with opposite signs.
//! Batch costs are sums over examples.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Example, Label};
use crate::eval::{evaluate, EvalError};
use crate::linalg::logistic;
use crate::model::{Model, ModelError, ModelInput, Parameters, DEFAULT_TIE_EPSILON};

pub const DEFAULT_TIE_WEIGHT: f64 = 0.03;

/// Bound applied to `σ` before taking logarithms.
pub const SIGMA_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("finite-difference step must be in (0, 1e-3], got {0}")]
    InvalidStep(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("training diverged at epoch {epoch}, batch {batch}: {what}")]
    Diverged { epoch: usize, batch: usize, what: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    #[default]
    Logistic,
    Kendall,
    /// Logistic for the first `pretrain_epochs`, Kendall afterwards.
    LogisticThenKendall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub kind: CostKind,
    /// Steepness of the sigmoid step approximation.
    pub gamma: f64,
    /// Precision of the anti-tie Gaussian.
    pub beta: f64,
    /// Weight of the anti-tie term. With γ = β = 100 the Gaussian outweighs
    /// the disagreement term for 0.03 ≲ |Δ| ≲ 0.3; weights near 1 lock in
    /// whatever sign Δ has early in training.
    pub tie_weight: f64,
    /// Logistic epochs before switching to Kendall; `None` means half.
    pub pretrain_epochs: Option<usize>,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            kind: CostKind::Logistic,
            gamma: 100.0,
            beta: 100.0,
            tie_weight: DEFAULT_TIE_WEIGHT,
            pretrain_epochs: None,
        }
    }
}

impl CostConfig {
    pub fn with_kind(kind: CostKind) -> Self {
        CostConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.gamma > 0.0
            && self.beta > 0.0
            && self.tie_weight >= 0.0
            && self.gamma.is_finite()
            && self.beta.is_finite()
            && self.tie_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig("gamma, beta must be positive and tie_weight non-negative".into()))
        }
    }

    fn kendall(&self) -> Objective {
        Objective::Kendall { gamma: self.gamma, beta: self.beta, tie_weight: self.tie_weight }
    }

    /// The objective in force during `epoch` (0-based) of `total_epochs`.
    pub fn objective_at(&self, epoch: usize, total_epochs: usize) -> Objective {
        match self.kind {
            CostKind::Logistic => Objective::Logistic,
            CostKind::Kendall => self.kendall(),
            CostKind::LogisticThenKendall => {
                if epoch < self.pretrain_epochs.unwrap_or(total_epochs / 2) {
                    Objective::Logistic
                } else {
                    self.kendall()
                }
            }
        }
    }

    /// Every objective this configuration can use.
    pub fn objectives(&self) -> Vec<Objective> {
        match self.kind {
            CostKind::Logistic => vec![Objective::Logistic],
            CostKind::Kendall => vec![self.kendall()],
            CostKind::LogisticThenKendall => vec![Objective::Logistic, self.kendall()],
        }
    }
}

/// A concrete per-example cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    Logistic,
    Kendall { gamma: f64, beta: f64, tie_weight: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Logistic,
    Kendall,
}

impl Objective {
    pub fn phase(&self) -> Phase {
        match self {
            Objective::Logistic => Phase::Logistic,
            Objective::Kendall { .. } => Phase::Kendall,
        }
    }
}

/// Negative log-likelihood of `y` under a Bernoulli with parameter `sigma`.
pub fn logistic_cost(sigma: f64, y: Label) -> f64 {
    let s = sigma.clamp(SIGMA_CLAMP, 1.0 - SIGMA_CLAMP);
    -(y.y() * s.ln() + (1.0 - y.y()) * (1.0 - s).ln())
}

/// The disagreement term alone: a sigmoid step on the wrong sign of `delta`.
pub fn kendall_disagreement(delta: f64, y: Label, gamma: f64) -> f64 {
    match y {
        Label::T1Better => logistic(-gamma * delta),
        Label::T2Better => logistic(gamma * delta),
    }
}

/// The anti-tie Gaussian `exp(−βΔ²/2)`.
pub fn anti_tie(delta: f64, beta: f64) -> f64 {
    (-beta * delta * delta / 2.0).exp()
}

pub fn kendall_cost(delta: f64, y: Label, cfg: &CostConfig) -> f64 {
    kendall_disagreement(delta, y, cfg.gamma) + cfg.tie_weight * anti_tie(delta, cfg.beta)
}

fn kendall_parts(delta: f64, y: Label, gamma: f64, beta: f64, tie_weight: f64) -> (f64, f64) {
    let disagreement = kendall_disagreement(delta, y, gamma);
    let gauss = anti_tie(delta, beta);
    // d/dΔ logistic(±γΔ) = ±γ s (1 − s)
    let sign = match y {
        Label::T1Better => -1.0,
        Label::T2Better => 1.0,
    };
    let d = sign * gamma * disagreement * (1.0 - disagreement) - tie_weight * beta * delta * gauss;
    (disagreement + tie_weight * gauss, d)
}

/// Cost of one example without gradients.
pub fn example_cost(model: &Model, input: &ModelInput, y: Label, objective: Objective) -> Result<f64, ModelError> {
    Ok(match objective {
        Objective::Logistic => logistic_cost(model.forward(input)?, y),
        Objective::Kendall { gamma, beta, tie_weight } => {
            let delta = model.predict_delta(input)?.delta;
            kendall_parts(delta, y, gamma, beta, tie_weight).0
        }
    })
}

/// Adds the gradient of one example's cost to `grad` and returns the cost.
pub fn accumulate_gradient(
    model: &Model,
    input: &ModelInput,
    y: Label,
    objective: Objective,
    grad: &mut Parameters,
) -> Result<f64, ModelError> {
    model.check_input(input)?;
    let view = input.view();
    match objective {
        Objective::Logistic => {
            let trace = model.trace(view);
            let cost = logistic_cost(trace.sigma, y);
            model.backprop(view, &trace, trace.sigma - y.y(), grad);
            Ok(cost)
        }
        Objective::Kendall { gamma, beta, tie_weight } => {
            let rev = view.swapped();
            let fwd_trace = model.trace(view);
            let rev_trace = model.trace(rev);
            let delta = model.delta(view, &fwd_trace, &rev_trace);
            let (cost, dcost) = kendall_parts(delta, y, gamma, beta, tie_weight);
            let s = fwd_trace.sigma;
            let r = rev_trace.sigma;
            model.backprop(view, &fwd_trace, dcost * s * (1.0 - s), grad);
            model.backprop(rev, &rev_trace, -dcost * r * (1.0 - r), grad);
            Ok(cost)
        }
    }
}

/// Gradient of one example's cost with respect to every parameter.
pub fn backward(model: &Model, input: &ModelInput, y: Label, objective: Objective) -> Result<Parameters, ModelError> {
    let mut grad = Parameters::zeros(&model.config);
    accumulate_gradient(model, input, y, objective, &mut grad)?;
    Ok(grad)
}

/// Summed cost and gradient over a batch, in slice order.
pub fn batch_gradient(
    model: &Model,
    batch: &[&Example],
    objective: Objective,
) -> Result<(f64, Parameters), ModelError> {
    let mut grad = Parameters::zeros(&model.config);
    let mut cost = 0.0;
    for ex in batch {
        cost += accumulate_gradient(model, &ex.input, ex.label, objective, &mut grad)?;
    }
    Ok((cost, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter group and offset with the largest error.
    pub worst_group: &'static str,
    pub worst_index: usize,
    pub parameters_checked: usize,
}

/// Compares backpropagated gradients of the summed batch cost with central
/// differences, for every objective the cost configuration uses.
///
/// The relative error per parameter is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn grad_check(
    model: &Model,
    batch: &[Example],
    cfg: &CostConfig,
    step: f64,
) -> Result<GradCheckReport, TrainError> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(TrainError::InvalidStep(step));
    }
    cfg.validate()?;
    let refs: Vec<&Example> = batch.iter().collect();
    let mut report =
        GradCheckReport { max_relative_error: 0.0, worst_group: "", worst_index: 0, parameters_checked: 0 };
    for objective in cfg.objectives() {
        let (_, analytic) = batch_gradient(model, &refs, objective)?;
        let analytic = analytic.to_flat();
        let costs = |m: &Model| -> Result<Vec<CostParts>, ModelError> {
            refs.iter().map(|ex| cost_parts(m, &ex.input, ex.label, objective)).collect()
        };
        let mut probe = model.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let original = probe.params.get(i);
            probe.params.set(i, original + step);
            let plus = costs(&probe)?;
            probe.params.set(i, original - step);
            let minus = costs(&probe)?;
            probe.params.set(i, original);
            let numeric = plus.iter().zip(&minus).map(|(p, m)| p.minus(m)).sum::<f64>() / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            report.parameters_checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                let (group, offset) = locate(&model.params, i);
                report.worst_group = group;
                report.worst_index = offset;
            }
        }
    }
    Ok(report)
}

/// One example's cost, kept in pieces so that the difference between two
/// nearby evaluations does not cancel against constant parts.
///
/// At step 1e-6 a cost near 1 carries rounding noise of ~1e-10 in the
/// numeric derivative, which swamps gradient components of order 1e-5. A
/// saturated disagreement term is therefore differenced through its
/// complement `1 − s`, and the anti-tie term through `exp(·) − 1`.
enum CostParts {
    Logistic(f64),
    Kendall { disagreement: f64, complement: f64, tie: f64 },
}

impl CostParts {
    /// `self − other`.
    fn minus(&self, other: &CostParts) -> f64 {
        match (self, other) {
            (CostParts::Logistic(a), CostParts::Logistic(b)) => a - b,
            (
                CostParts::Kendall { disagreement: d1, complement: c1, tie: t1 },
                CostParts::Kendall { disagreement: d2, complement: c2, tie: t2 },
            ) => {
                let dis = if *d1 > 0.5 { c2 - c1 } else { d1 - d2 };
                dis + (t1 - t2)
            }
            _ => unreachable!("both evaluations use the same objective"),
        }
    }
}

fn cost_parts(model: &Model, input: &ModelInput, y: Label, objective: Objective) -> Result<CostParts, ModelError> {
    Ok(match objective {
        Objective::Logistic => CostParts::Logistic(example_cost(model, input, y, objective)?),
        Objective::Kendall { gamma, beta, tie_weight } => {
            let delta = model.predict_delta(input)?.delta;
            CostParts::Kendall {
                disagreement: kendall_disagreement(delta, y, gamma),
                complement: kendall_disagreement(-delta, y, gamma),
                tie: tie_weight * (-beta * delta * delta / 2.0).exp_m1(),
            }
        }
    })
}

fn locate(params: &Parameters, mut index: usize) -> (&'static str, usize) {
    for (g, name) in params.groups().iter().zip(Parameters::GROUP_NAMES) {
        if index < g.len() {
            return (name, index);
        }
        index -= g.len();
    }
    ("?", index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// L2 penalty on weights (biases excluded).
    pub l2: f64,
    /// Stop after this many epochs without a validation-τ improvement and
    /// return the best checkpoint; 0 trains every epoch and returns the last.
    pub early_stop_patience: usize,
    pub tie_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            shuffle_seed: 0,
            l2: 0.0,
            early_stop_patience: 0,
            tie_epsilon: DEFAULT_TIE_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0 && self.tie_epsilon >= 0.0) {
            return Err(TrainError::InvalidConfig("l2 and tie_epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub phase: Phase,
    /// Summed cost over the epoch's batches, measured before each update.
    pub train_cost: f64,
    pub valid_tau: f64,
    pub valid_ties: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epochs (1-based) at which the objective switched.
    pub phase_transitions: Vec<usize>,
    /// Epoch whose parameters were returned; 0 means the initial model.
    pub returned_epoch: usize,
    pub stopped_early: bool,
    /// Wall-clock time per epoch. Not serialized, so reports stay reproducible.
    #[serde(skip)]
    pub wall_clock: Vec<Duration>,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for record in &self.epochs {
            serde_json::to_writer(&mut writer, record)?;
            writeln!(writer)?;
        }
        Ok(())
    }
}

fn check_dims(model: &Model, set: &[Example]) -> Result<(), ModelError> {
    set.iter().try_for_each(|ex| model.check_input(&ex.input))
}

/// Mini-batch gradient descent with seeded per-epoch shuffling.
pub fn train(
    model: &Model,
    train_set: &[Example],
    valid_set: &[Example],
    tcfg: &TrainConfig,
    ccfg: &CostConfig,
) -> Result<(Model, TrainReport), TrainError> {
    tcfg.validate()?;
    ccfg.validate()?;
    let mut report = TrainReport::default();
    if tcfg.epochs == 0 {
        return Ok((model.clone(), report));
    }
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    check_dims(model, train_set)?;
    check_dims(model, valid_set)?;

    let mut current = model.clone();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut since_best = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut previous_phase = None;

    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        let objective = ccfg.objective_at(epoch, tcfg.epochs);
        if previous_phase.is_some_and(|p| p != objective.phase()) {
            report.phase_transitions.push(epoch + 1);
        }
        previous_phase = Some(objective.phase());

        order.shuffle(&mut rng);
        let mut epoch_cost = 0.0;
        for (b, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (mut cost, mut grad) = batch_gradient(&current, &batch, objective)?;
            if tcfg.l2 > 0.0 {
                cost += 0.5 * tcfg.l2 * current.params.sum_squared_weights();
                grad.add_scaled_weights(tcfg.l2, &current.params);
            }
            if !cost.is_finite() {
                return Err(TrainError::Diverged { epoch: epoch + 1, batch: b, what: format!("cost {cost}") });
            }
            current.params.add_scaled(-tcfg.learning_rate, &grad);
            if !current.params.all_finite() {
                return Err(TrainError::Diverged { epoch: epoch + 1, batch: b, what: "non-finite parameters".into() });
            }
            epoch_cost += cost;
        }

        let eval = evaluate(&current, valid_set, tcfg.tie_epsilon)?;
        report.epochs.push(EpochRecord {
            epoch: epoch + 1,
            phase: objective.phase(),
            train_cost: epoch_cost,
            valid_tau: eval.tau,
            valid_ties: eval.counts.ties,
        });
        report.wall_clock.push(started.elapsed());

        if tcfg.early_stop_patience > 0 {
            if best.as_ref().is_none_or(|(tau, _, _)| eval.tau > *tau) {
                best = Some((eval.tau, current.clone(), epoch + 1));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= tcfg.early_stop_patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }

    let result = match best {
        Some((_, m, epoch)) => {
            report.returned_epoch = epoch;
            m
        }
        None => {
            report.returned_epoch = report.epochs.len();
            current
        }
    };
    Ok((result, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig};
    use crate::synthetic;

    #[test]
    fn logistic_cost_values() {
        assert!((logistic_cost(0.5, Label::T1Better) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((logistic_cost(0.9, Label::T2Better) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(logistic_cost(1.0, Label::T1Better) < 1e-11);
        assert!(logistic_cost(1.0, Label::T2Better).is_finite());
        assert!(logistic_cost(0.0, Label::T1Better).is_finite());
    }

    #[test]
    fn kendall_cost_values() {
        let no_tie = CostConfig { tie_weight: 0.0, ..Default::default() };
        // logistic(-10) = 1 / (1 + e^10) = 4.5397868702434395e-5
        assert!((kendall_cost(0.1, Label::T1Better, &no_tie) - 4.539_786_870_243_439_5e-5).abs() < 1e-17);
        assert!((kendall_cost(-0.1, Label::T1Better, &no_tie) - (1.0 - 4.539_786_870_243_439_5e-5)).abs() < 1e-15);
        let cfg = CostConfig { tie_weight: 1.0, ..Default::default() };
        assert_eq!(kendall_cost(0.0, Label::T1Better, &cfg), 1.5);
        assert_eq!(kendall_cost(0.0, Label::T2Better, &cfg), 1.5);
    }

    #[test]
    fn anti_tie_shape() {
        for beta in [0.1, 1.0, 100.0] {
            assert_eq!(anti_tie(0.0, beta), 1.0);
        }
        let mut last = 1.0;
        for i in 1..100 {
            let v = anti_tie(i as f64 * 0.01, 100.0);
            assert!(v < last);
            assert_eq!(v, anti_tie(-(i as f64) * 0.01, 100.0));
            last = v;
        }
    }

    #[test]
    fn zero_model_logistic_bias_gradient() {
        let m = Model::zeros(ModelConfig::new(3, 2)).unwrap();
        let (_, data) = synthetic::gradcheck_instance(1, Architecture::MultiLayer, 1);
        let g = backward(&m, &data[0].input, Label::T1Better, Objective::Logistic).unwrap();
        assert_eq!(g.b_out, -0.5);
    }

    #[test]
    fn anti_tie_gradient_vanishes_at_tie() {
        let (m, data) = synthetic::gradcheck_instance(4, Architecture::MultiLayer, 1);
        let mut x = data[0].input.clone();
        x.psi_t2 = x.psi_t1.clone();
        x.phi_t2r = x.phi_t1r.clone();
        let only_tie = Objective::Kendall { gamma: 100.0, beta: 100.0, tie_weight: 1.0 };
        let no_tie = Objective::Kendall { gamma: 100.0, beta: 100.0, tie_weight: 0.0 };
        let a = backward(&m, &x, Label::T1Better, only_tie).unwrap();
        let b = backward(&m, &x, Label::T1Better, no_tie).unwrap();
        assert_eq!(a, b);
        // Δ ≡ 0 for identical hypotheses, so both passes cancel exactly.
        assert!(a.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn grad_check_small_models() {
        for arch in [Architecture::MultiLayer, Architecture::SingleLayer] {
            for kind in [CostKind::Logistic, CostKind::Kendall, CostKind::LogisticThenKendall] {
                let (m, data) = synthetic::gradcheck_instance(7, arch, 4);
                let cfg = CostConfig { tie_weight: 1.0, ..CostConfig::with_kind(kind) };
                let r = grad_check(&m, &data, &cfg, 1e-6).unwrap();
                assert!(r.max_relative_error <= 1e-5, "{arch:?} {kind:?}: {r:?}");
            }
        }
    }

    #[test]
    fn grad_check_rejects_bad_step() {
        let (m, data) = synthetic::gradcheck_instance(1, Architecture::MultiLayer, 1);
        for step in [0.0, -1e-6, 1e-2, f64::NAN] {
            assert!(matches!(grad_check(&m, &data, &CostConfig::default(), step), Err(TrainError::InvalidStep(_))));
        }
    }

    #[test]
    fn schedule_objectives() {
        let cfg = CostConfig { pretrain_epochs: None, ..CostConfig::with_kind(CostKind::LogisticThenKendall) };
        let phases: Vec<Phase> = (0..5).map(|e| cfg.objective_at(e, 5).phase()).collect();
        assert_eq!(phases, [Phase::Logistic, Phase::Logistic, Phase::Kendall, Phase::Kendall, Phase::Kendall]);
        let cfg = CostConfig { pretrain_epochs: Some(4), ..cfg };
        assert_eq!(cfg.objective_at(3, 5).phase(), Phase::Logistic);
        assert_eq!(cfg.objective_at(4, 5).phase(), Phase::Kendall);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (m, data) = synthetic::gradcheck_instance(2, Architecture::MultiLayer, 8);
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (out, report) = train(&m, &data, &data, &cfg, &CostConfig::default()).unwrap();
        assert_eq!(out, m);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_records_phases() {
        let (m, data) = synthetic::gradcheck_instance(3, Architecture::MultiLayer, 40);
        let tcfg = TrainConfig { epochs: 6, batch_size: 7, shuffle_seed: 5, ..Default::default() };
        let ccfg = CostConfig::with_kind(CostKind::LogisticThenKendall);
        let (a, ra) = train(&m, &data, &data, &tcfg, &ccfg).unwrap();
        let (b, rb) = train(&m, &data, &data, &tcfg, &ccfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epochs, rb.epochs);
        assert_eq!(ra.epochs.len(), 6);
        assert_eq!(ra.phase_transitions, vec![4]);
        assert_eq!(ra.wall_clock.len(), 6);

        let mut lines = Vec::new();
        ra.write_jsonl(&mut lines).unwrap();
        assert_eq!(String::from_utf8(lines).unwrap().lines().count(), 6);
    }

    #[test]
    fn divergence_is_reported() {
        let (m, data) = synthetic::gradcheck_instance(3, Architecture::SingleLayer, 10);
        let tcfg = TrainConfig { epochs: 3, learning_rate: 1e308, ..Default::default() };
        let err = train(&m, &data, &data, &tcfg, &CostConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { .. }), "{err}");
    }

    #[test]
    fn early_stopping_returns_best() {
        let (m, data) = synthetic::gradcheck_instance(3, Architecture::MultiLayer, 30);
        let tcfg = TrainConfig { epochs: 40, early_stop_patience: 2, learning_rate: 0.05, ..Default::default() };
        let (out, report) = train(&m, &data, &data, &tcfg, &CostConfig::default()).unwrap();
        let best = report.epochs.iter().map(|r| r.valid_tau).fold(f64::NEG_INFINITY, f64::max);
        let returned = &report.epochs[report.returned_epoch - 1];
        assert_eq!(returned.valid_tau, best);
        assert_eq!(evaluate(&out, &data, tcfg.tie_epsilon).unwrap().tau, best);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let (m, mut data) = synthetic::gradcheck_instance(3, Architecture::MultiLayer, 3);
        data[1].input.psi_r.push(0.0);
        let err = train(&m, &data, &data, &TrainConfig::default(), &CostConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Model(ModelError::ShapeMismatch { .. })));
    }
}
