//! ERM and IRMv1 objectives for a linear representation followed by a fixed
//! scalar classifier, together with their analytic gradients and a
//! deterministic full-batch gradient-descent trainer.
//!
//! The predictor is `logit(x) = w0 · (θᵀx + b)`. For each environment the
//! IRMv1 penalty is the squared derivative of that environment's risk with
//! respect to the classifier scale `w`, taken at `w = w0`.
//!
//! Every per-environment mean is accumulated in ascending sample order and
//! environments are summed in dataset order, so results are bit-reproducible.

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Environment, MultiEnvDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Logistic,
    Squared,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "squared" => Ok(LossKind::Squared),
            other => Err(Error::Invalid(format!("unknown loss kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub theta: Vec<f64>,
    pub bias: f64,
    /// Fixed classifier scale.
    #[serde(default = "default_w0")]
    pub w0: f64,
}

fn default_w0() -> f64 {
    1.0
}

impl LinearModel {
    pub fn new(theta: Vec<f64>, bias: f64, w0: f64) -> Result<Self> {
        let model = Self { theta, bias, w0 };
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(n_features: usize) -> Self {
        Self {
            theta: vec![0.0; n_features],
            bias: 0.0,
            w0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w0 == 0.0 || !self.w0.is_finite() {
            return Err(Error::Invalid(format!(
                "w0 must be finite and non-zero, got {}",
                self.w0
            )));
        }
        if !self.bias.is_finite() || self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("model parameters must be finite".into()));
        }
        Ok(())
    }

    fn check_dims(&self, n_features: usize) -> Result<()> {
        if n_features != self.theta.len() {
            return Err(Error::DimensionMismatch(format!(
                "features have {n_features} columns, model has {} coefficients",
                self.theta.len()
            )));
        }
        Ok(())
    }

    /// `θᵀx + b`, summed in ascending feature order.
    fn raw_logit(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut acc = 0.0;
        for (t, x) in self.theta.iter().zip(row.iter()) {
            acc += t * x;
        }
        acc + self.bias
    }
}

pub fn predict_logits(model: &LinearModel, features: &Array2<f64>) -> Result<Vec<f64>> {
    model.check_dims(features.ncols())?;
    Ok(features
        .rows()
        .into_iter()
        .map(|row| model.w0 * model.raw_logit(row))
        .collect())
}

/// Fraction of samples whose predicted probability `σ(logit) ≥ 0.5` agrees
/// with a label thresholded at 0.5.
pub fn accuracy(model: &LinearModel, env: &Environment) -> Result<f64> {
    let logits = predict_logits(model, &env.features)?;
    let hits = logits
        .iter()
        .zip(&env.labels)
        .filter(|(z, y)| (**z >= 0.0) == (**y >= 0.5))
        .count();
    Ok(hits as f64 / env.n_samples() as f64)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn pointwise_loss(loss: LossKind, z: f64, y: f64) -> f64 {
    match loss {
        LossKind::Logistic => softplus(z) - y * z,
        LossKind::Squared => (z - y) * (z - y),
    }
}

fn non_empty(env: &Environment) -> Result<()> {
    if env.n_samples() == 0 {
        return Err(Error::EmptyEnvironment(env.id.clone()));
    }
    Ok(())
}

/// Mean loss of `w · (θᵀx + b)` over the environment.
pub fn environment_risk(model: &LinearModel, env: &Environment, w: f64, loss: LossKind) -> Result<f64> {
    non_empty(env)?;
    model.check_dims(env.n_features())?;
    if !w.is_finite() {
        return Err(Error::Invalid(format!("classifier scale must be finite, got {w}")));
    }
    let mut sum = 0.0;
    for (row, &y) in env.features.rows().into_iter().zip(&env.labels) {
        sum += pointwise_loss(loss, w * model.raw_logit(row), y);
    }
    Ok(sum / env.n_samples() as f64)
}

/// Squared derivative of the environment risk with respect to the classifier
/// scale, evaluated at `w0`.
pub fn irm_penalty(model: &LinearModel, env: &Environment, loss: LossKind) -> Result<f64> {
    let terms = EnvTerms::compute(model, env, loss, false)?;
    Ok(terms.slope * terms.slope)
}

/// Penalty weight after the stabilizing rescale: objectives with `λ > 1` are
/// divided by `λ`.
fn objective_scale(lambda: f64) -> f64 {
    if lambda > 1.0 {
        lambda
    } else {
        1.0
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    Ok(())
}

/// `Σₑ [Rᵉ(w0) + λ · penaltyₑ]`, divided by `λ` when `λ > 1`.
pub fn total_objective(model: &LinearModel, data: &MultiEnvDataset, lambda: f64, loss: LossKind) -> Result<f64> {
    Ok(evaluate(model, data, lambda, loss, 0.0, false)?.objective)
}

/// [`total_objective`] plus `l2_weight · ‖θ‖²` (not rescaled, bias excluded).
pub fn training_objective(
    model: &LinearModel,
    data: &MultiEnvDataset,
    lambda: f64,
    loss: LossKind,
    l2_weight: f64,
) -> Result<f64> {
    Ok(evaluate(model, data, lambda, loss, l2_weight, false)?.objective)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub theta: Vec<f64>,
    pub bias: f64,
}

/// Analytic gradient of [`training_objective`] with respect to θ and b.
pub fn objective_gradient(
    model: &LinearModel,
    data: &MultiEnvDataset,
    lambda: f64,
    loss: LossKind,
    l2_weight: f64,
) -> Result<Gradient> {
    let eval = evaluate(model, data, lambda, loss, l2_weight, true)?;
    Ok(eval.gradient.expect("gradient requested"))
}

/// Per-environment sufficient statistics: the risk, the scale derivative
/// `D = dR/dw|w0`, and (optionally) the gradients of both with respect to
/// θ and b.
struct EnvTerms {
    risk: f64,
    slope: f64,
    grad_risk: Vec<f64>,
    grad_risk_bias: f64,
    grad_slope: Vec<f64>,
    grad_slope_bias: f64,
}

impl EnvTerms {
    fn compute(model: &LinearModel, env: &Environment, loss: LossKind, with_grad: bool) -> Result<Self> {
        non_empty(env)?;
        model.check_dims(env.n_features())?;
        let p = model.theta.len();
        let w0 = model.w0;
        let mut risk = 0.0;
        let mut slope = 0.0;
        let mut grad_risk = vec![0.0; if with_grad { p } else { 0 }];
        let mut grad_slope = vec![0.0; if with_grad { p } else { 0 }];
        let mut grad_risk_bias = 0.0;
        let mut grad_slope_bias = 0.0;

        for (row, &y) in env.features.rows().into_iter().zip(&env.labels) {
            let r = model.raw_logit(row);
            let z = w0 * r;
            risk += pointwise_loss(loss, z, y);
            // a: d loss / d r,  d: d loss / d w,  c: d d / d r
            let (a, d, c) = match loss {
                LossKind::Logistic => {
                    let s = sigmoid(z);
                    ((s - y) * w0, (s - y) * r, s * (1.0 - s) * w0 * r + (s - y))
                }
                LossKind::Squared => (2.0 * (z - y) * w0, 2.0 * (z - y) * r, 2.0 * (2.0 * z - y)),
            };
            slope += d;
            if with_grad {
                for ((gr, gs), x) in grad_risk.iter_mut().zip(grad_slope.iter_mut()).zip(row.iter()) {
                    *gr += a * x;
                    *gs += c * x;
                }
                grad_risk_bias += a;
                grad_slope_bias += c;
            }
        }

        let n = env.n_samples() as f64;
        grad_risk.iter_mut().for_each(|g| *g /= n);
        grad_slope.iter_mut().for_each(|g| *g /= n);
        Ok(Self {
            risk: risk / n,
            slope: slope / n,
            grad_risk,
            grad_risk_bias: grad_risk_bias / n,
            grad_slope,
            grad_slope_bias: grad_slope_bias / n,
        })
    }
}

struct Evaluation {
    objective: f64,
    penalty: f64,
    gradient: Option<Gradient>,
}

fn evaluate(
    model: &LinearModel,
    data: &MultiEnvDataset,
    lambda: f64,
    loss: LossKind,
    l2_weight: f64,
    with_grad: bool,
) -> Result<Evaluation> {
    check_lambda(lambda)?;
    let p = model.theta.len();
    let mut objective = 0.0;
    let mut penalty = 0.0;
    let mut grad = vec![0.0; if with_grad { p } else { 0 }];
    let mut grad_bias = 0.0;

    for env in &data.environments {
        let t = EnvTerms::compute(model, env, loss, with_grad)?;
        let pen = t.slope * t.slope;
        objective += t.risk + lambda * pen;
        penalty += pen;
        if with_grad {
            let k = 2.0 * lambda * t.slope;
            for ((g, gr), gs) in grad.iter_mut().zip(&t.grad_risk).zip(&t.grad_slope) {
                *g += gr + k * gs;
            }
            grad_bias += t.grad_risk_bias + k * t.grad_slope_bias;
        }
    }

    let scale = objective_scale(lambda);
    objective /= scale;
    let mut l2 = 0.0;
    for t in &model.theta {
        l2 += t * t;
    }
    objective += l2_weight * l2;

    let gradient = with_grad.then(|| Gradient {
        theta: grad
            .iter()
            .zip(&model.theta)
            .map(|(g, t)| g / scale + 2.0 * l2_weight * t)
            .collect(),
        bias: grad_bias / scale,
    });
    Ok(Evaluation {
        objective,
        penalty,
        gradient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    /// Penalty weight after the warm-up phase.
    pub lambda_final: f64,
    /// Warm-up iterations run at `min(1, lambda_final)`.
    pub anneal_iters: usize,
    pub total_iters: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub w0: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Logistic,
            lambda_final: 1e4,
            anneal_iters: 500,
            total_iters: 5000,
            learning_rate: 1e-3,
            l2_weight: 0.0,
            seed: 0,
            init_scale: 0.01,
            w0: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !(self.lambda_final >= 0.0 && self.lambda_final.is_finite()) {
            return bad(format!(
                "lambda_final must be finite and non-negative, got {}",
                self.lambda_final
            ));
        }
        if self.total_iters == 0 {
            return bad("total_iters must be positive".into());
        }
        if self.anneal_iters > self.total_iters {
            return bad(format!(
                "anneal_iters ({}) exceeds total_iters ({})",
                self.anneal_iters, self.total_iters
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return bad(format!("l2_weight must be non-negative, got {}", self.l2_weight));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init_scale must be non-negative, got {}", self.init_scale));
        }
        if self.w0 == 0.0 || !self.w0.is_finite() {
            return bad(format!("w0 must be finite and non-zero, got {}", self.w0));
        }
        Ok(())
    }

    /// The configuration with the penalty switched off.
    pub fn erm(&self) -> Self {
        Self {
            lambda_final: 0.0,
            ..self.clone()
        }
    }

    pub fn lambda_at(&self, iteration: usize) -> f64 {
        if iteration < self.anneal_iters {
            self.lambda_final.min(1.0)
        } else {
            self.lambda_final
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: LinearModel,
    /// One entry per iteration, evaluated before that iteration's step.
    pub trace: Vec<TraceEntry>,
    pub final_objective: f64,
    pub config: TrainConfig,
}

/// Seeded Gaussian initialization of θ (scaled by `init_scale`), zero bias.
pub fn initial_model(n_features: usize, config: &TrainConfig) -> LinearModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let theta = (0..n_features)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            config.init_scale * z
        })
        .collect();
    LinearModel {
        theta,
        bias: 0.0,
        w0: config.w0,
    }
}

pub fn train(data: &MultiEnvDataset, config: &TrainConfig) -> Result<TrainedModel> {
    train_from(data, config, initial_model(data.n_features(), config))
}

/// Plain empirical risk minimization: [`train`] with the penalty disabled.
pub fn train_erm(data: &MultiEnvDataset, config: &TrainConfig) -> Result<TrainedModel> {
    train(data, &config.erm())
}

/// Full-batch gradient descent from an explicit starting point.
pub fn train_from(data: &MultiEnvDataset, config: &TrainConfig, init: LinearModel) -> Result<TrainedModel> {
    config.validate()?;
    init.validate()?;
    init.check_dims(data.n_features())?;
    if data.environments.is_empty() {
        return Err(Error::Invalid("dataset has no environments".into()));
    }
    if config.lambda_final > 0.0 && data.environments.len() < 2 {
        return Err(Error::Invalid(format!(
            "invariant training needs at least 2 environments, got {}",
            data.environments.len()
        )));
    }

    // Descend in gene-id order so the floating-point reductions, and hence
    // the result, do not depend on how the columns happen to be arranged.
    let mut order: Vec<usize> = (0..data.n_features()).collect();
    order.sort_by(|&a, &b| data.gene_ids[a].cmp(&data.gene_ids[b]));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return descend(data, config, init);
    }
    let sorted = data.select_features(&order);
    let init = LinearModel {
        theta: order.iter().map(|&j| init.theta[j]).collect(),
        ..init
    };
    let mut trained = descend(&sorted, config, init)?;
    let mut theta = vec![0.0; order.len()];
    for (k, &j) in order.iter().enumerate() {
        theta[j] = trained.model.theta[k];
    }
    trained.model.theta = theta;
    Ok(trained)
}

fn descend(data: &MultiEnvDataset, config: &TrainConfig, init: LinearModel) -> Result<TrainedModel> {
    let mut model = init;
    let mut trace = Vec::with_capacity(config.total_iters);
    for iteration in 0..config.total_iters {
        let lambda = config.lambda_at(iteration);
        let eval = evaluate(&model, data, lambda, config.loss_kind, config.l2_weight, true)?;
        let grad = eval.gradient.expect("gradient requested");
        if !eval.objective.is_finite() || grad.theta.iter().any(|g| !g.is_finite()) || !grad.bias.is_finite() {
            return Err(Error::Diverged {
                iteration,
                objective: eval.objective,
            });
        }
        trace.push(TraceEntry {
            iteration,
            objective: eval.objective,
            penalty: eval.penalty,
        });
        for (t, g) in model.theta.iter_mut().zip(&grad.theta) {
            *t -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * grad.bias;
    }

    let last = config.total_iters;
    let final_objective = evaluate(
        &model,
        data,
        config.lambda_at(last),
        config.loss_kind,
        config.l2_weight,
        false,
    )
    .map(|e| e.objective)
    .unwrap_or(f64::NAN);
    if !final_objective.is_finite() || model.validate().is_err() {
        return Err(Error::Diverged {
            iteration: last,
            objective: final_objective,
        });
    }
    Ok(TrainedModel {
        model,
        trace,
        final_objective,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Organism;
    use ndarray::{array, Array2};

    fn env(id: &str, x: Array2<f64>, y: Vec<f64>) -> Environment {
        let ids = (0..x.nrows()).map(|i| format!("s{i}")).collect();
        Environment::new(id, Organism::Synthetic, ids, x, y).unwrap()
    }

    fn single(x: Array2<f64>, y: Vec<f64>) -> MultiEnvDataset {
        let genes = (0..x.ncols()).map(|j| format!("g{j}")).collect();
        MultiEnvDataset::new(genes, vec![env("e", x, y)]).unwrap()
    }

    fn model(theta: Vec<f64>, bias: f64, w0: f64) -> LinearModel {
        LinearModel::new(theta, bias, w0).unwrap()
    }

    #[test]
    fn predict_logits_examples() {
        let m = model(vec![1.0, -1.0], 0.0, 1.0);
        assert_eq!(predict_logits(&m, &array![[2.0, 1.0]]).unwrap(), vec![1.0]);
        let m = model(vec![0.0, 0.0], 0.0, 1.0);
        assert_eq!(
            predict_logits(&m, &array![[3.0, -7.0], [1.5, 2.0]]).unwrap(),
            vec![0.0, 0.0]
        );
        let m = model(vec![0.5], 1.0, 2.0);
        assert_eq!(predict_logits(&m, &array![[2.0]]).unwrap(), vec![4.0]);
        assert!(matches!(
            predict_logits(&m, &array![[2.0, 1.0]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rejects_zero_w0() {
        assert!(LinearModel::new(vec![1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn risk_at_zero_logit_is_ln2() {
        let e = env("e", array![[1.0], [2.0], [3.0]], vec![1.0, 0.0, 0.0]);
        let r = environment_risk(&LinearModel::zeros(1), &e, 1.0, LossKind::Logistic).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn risk_single_positive_sample() {
        // σ(ln 3) = 0.75, so the loss is −ln 0.75.
        let e = env("e", array![[1.0]], vec![1.0]);
        let m = model(vec![3f64.ln()], 0.0, 1.0);
        let r = environment_risk(&m, &e, 1.0, LossKind::Logistic).unwrap();
        assert!((r - 0.287_682_072_451_780_9).abs() < 1e-12);
    }

    #[test]
    fn squared_risk_of_exact_fit_is_zero() {
        let e = env("e", array![[1.0], [-2.0], [0.5]], vec![1.0, -2.0, 0.5]);
        let r = environment_risk(&model(vec![1.0], 0.0, 1.0), &e, 1.0, LossKind::Squared).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn penalty_two_sample_example() {
        // z = ±1 with θ = 1 on x = ±1.
        let e = env("e", array![[1.0], [-1.0]], vec![1.0, 0.0]);
        let m = model(vec![1.0], 0.0, 1.0);
        let t = EnvTerms::compute(&m, &e, LossKind::Logistic, false).unwrap();
        assert!((t.slope - (-0.268_941_421_369_995_1)).abs() < 1e-12);
        let p = irm_penalty(&m, &e, LossKind::Logistic).unwrap();
        assert!((p - 0.072_329_488_129_1).abs() < 1e-9);
        // Central difference of the risk in w at w0 = 1.
        let h = 1e-6;
        let fd = (environment_risk(&m, &e, 1.0 + h, LossKind::Logistic).unwrap()
            - environment_risk(&m, &e, 1.0 - h, LossKind::Logistic).unwrap())
            / (2.0 * h);
        assert!((fd * fd - p).abs() < 1e-6);
    }

    #[test]
    fn penalty_vanishes_at_zero_logits() {
        let e = env("e", array![[1.0, 2.0], [3.0, 4.0]], vec![1.0, 0.0]);
        for loss in [LossKind::Logistic, LossKind::Squared] {
            assert_eq!(irm_penalty(&LinearModel::zeros(2), &e, loss).unwrap(), 0.0);
        }
    }

    #[test]
    fn objective_examples() {
        let data = single(array![[1.0], [2.0]], vec![1.0, 0.0]);
        let zero = LinearModel::zeros(1);
        let obj = total_objective(&zero, &data, 1.0, LossKind::Logistic).unwrap();
        assert!((obj - std::f64::consts::LN_2).abs() < 1e-15);

        let m = model(vec![0.7], -0.2, 1.0);
        let e = &data.environments[0];
        let r = environment_risk(&m, e, 1.0, LossKind::Logistic).unwrap();
        assert_eq!(total_objective(&m, &data, 0.0, LossKind::Logistic).unwrap(), r);

        let mut twice = data.clone();
        twice.environments.push(e.clone());
        let one = total_objective(&m, &data, 3.0, LossKind::Logistic).unwrap();
        let two = total_objective(&m, &twice, 3.0, LossKind::Logistic).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-15);
    }

    #[test]
    fn large_lambda_rescales_objective() {
        let data = single(array![[1.0], [-1.0], [0.3]], vec![1.0, 0.0, 1.0]);
        let m = model(vec![1.3], 0.1, 1.0);
        let e = &data.environments[0];
        let r = environment_risk(&m, e, 1.0, LossKind::Logistic).unwrap();
        let p = irm_penalty(&m, e, LossKind::Logistic).unwrap();
        let obj = total_objective(&m, &data, 50.0, LossKind::Logistic).unwrap();
        assert!((obj - (r + 50.0 * p) / 50.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_labels_give_zero_bias_gradient_at_origin() {
        let data = single(
            array![[1.0, 0.2], [2.0, -1.0], [0.5, 3.0], [-4.0, 1.0]],
            vec![1.0, 0.0, 0.0, 1.0],
        );
        let g = objective_gradient(&LinearModel::zeros(2), &data, 0.0, LossKind::Logistic, 0.0).unwrap();
        assert_eq!(g.bias, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences_with_l2() {
        let a = env("a", array![[1.0, 0.5], [-0.3, 2.0], [0.7, -1.1]], vec![1.0, 0.0, 1.0]);
        let b = env("b", array![[0.2, 0.1], [1.5, -0.4]], vec![0.0, 1.0]);
        let data = MultiEnvDataset::new(vec!["x".into(), "y".into()], vec![a, b]).unwrap();
        let m = model(vec![0.4, -0.8], 0.3, 1.5);
        for loss in [LossKind::Logistic, LossKind::Squared] {
            for lambda in [0.0, 0.5, 7.0] {
                let g = objective_gradient(&m, &data, lambda, loss, 0.1).unwrap();
                let h = 1e-6;
                for j in 0..2 {
                    let mut up = m.clone();
                    up.theta[j] += h;
                    let mut dn = m.clone();
                    dn.theta[j] -= h;
                    let fd = (training_objective(&up, &data, lambda, loss, 0.1).unwrap()
                        - training_objective(&dn, &data, lambda, loss, 0.1).unwrap())
                        / (2.0 * h);
                    assert!((fd - g.theta[j]).abs() < 1e-6, "{loss:?} λ={lambda} j={j}");
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            anneal_iters: 10,
            total_iters: 5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn irm_requires_two_environments() {
        let data = single(array![[1.0], [2.0]], vec![1.0, 0.0]);
        let cfg = TrainConfig {
            total_iters: 3,
            anneal_iters: 1,
            ..TrainConfig::default()
        };
        assert!(train(&data, &cfg).is_err());
        assert!(train_erm(&data, &cfg).is_ok());
    }

    #[test]
    fn divergence_is_reported() {
        let data = single(array![[1e3], [-2e3]], vec![1e3, 5.0]);
        let cfg = TrainConfig {
            loss_kind: LossKind::Squared,
            lambda_final: 0.0,
            anneal_iters: 0,
            total_iters: 200,
            learning_rate: 10.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&data, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn warmup_uses_capped_lambda() {
        let cfg = TrainConfig {
            lambda_final: 100.0,
            anneal_iters: 2,
            total_iters: 4,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lambda_at(0), 1.0);
        assert_eq!(cfg.lambda_at(2), 100.0);
        assert_eq!(cfg.erm().lambda_at(0), 0.0);
    }
}
