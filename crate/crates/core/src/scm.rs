//! Multi-environment synthetic data from a linear structural causal model
//! with known causal and anti-causal (spurious) features.
//!
//! For an environment with scale `σ`:
//!
//! ```text
//! x_c ~ N(0, σ²·I)
//! t   = w_cᵀ x_c + N(0, σ²)
//! y   = t                  (regression)
//! y   = 1[t > 0]           (classification)
//! x_s = w_s · ỹ + N(0, I)  with ỹ = t (regression) or 2y − 1 (classification)
//! ```
//!
//! Features are `[x_c, x_s]`. Randomness comes from ChaCha8 seeded with the
//! user seed; training environment `i` draws from stream `i`, held-out
//! environment `j` from stream `2⁶³ + j`, so adding environments never
//! perturbs existing ones.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Environment, MultiEnvDataset, Organism, PipelineStep, Provenance};
use crate::error::{Error, Result};

const HELD_OUT_STREAM_BASE: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    #[default]
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmSpec {
    pub n_causal: usize,
    pub n_spurious: usize,
    pub env_scales: Vec<f64>,
    pub n_samples_per_env: usize,
    pub task: Task,
    /// Defaults to all ones.
    pub causal_weights: Option<Vec<f64>>,
    /// Defaults to all ones.
    pub spurious_weights: Option<Vec<f64>>,
    /// Scale of the held-out environment.
    pub test_scale: f64,
}

impl Default for ScmSpec {
    fn default() -> Self {
        Self {
            n_causal: 1,
            n_spurious: 1,
            env_scales: vec![0.1, 1.0],
            n_samples_per_env: 5000,
            task: Task::Classification,
            causal_weights: None,
            spurious_weights: None,
            test_scale: 2.0,
        }
    }
}

impl ScmSpec {
    pub fn regression() -> Self {
        Self {
            task: Task::Regression,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if self.n_causal == 0 || self.n_spurious == 0 {
            return bad("n_causal and n_spurious must be positive".into());
        }
        if self.env_scales.len() < 2 {
            return bad(format!(
                "env_scales needs at least 2 training environments, got {}",
                self.env_scales.len()
            ));
        }
        if let Some(s) = self.env_scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("environment scales must be positive, got {s}"));
        }
        if !(self.test_scale > 0.0 && self.test_scale.is_finite()) {
            return bad(format!("test_scale must be positive, got {}", self.test_scale));
        }
        if self.n_samples_per_env == 0 {
            return bad("n_samples_per_env must be positive".into());
        }
        for (name, weights, n) in [
            ("causal_weights", &self.causal_weights, self.n_causal),
            ("spurious_weights", &self.spurious_weights, self.n_spurious),
        ] {
            if let Some(w) = weights {
                if w.len() != n {
                    return bad(format!("{name} has length {}, expected {n}", w.len()));
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return bad(format!("{name} must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn causal_weights(&self) -> Vec<f64> {
        self.causal_weights.clone().unwrap_or_else(|| vec![1.0; self.n_causal])
    }

    pub fn spurious_weights(&self) -> Vec<f64> {
        self.spurious_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.n_spurious])
    }

    pub fn n_features(&self) -> usize {
        self.n_causal + self.n_spurious
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.n_causal)
            .map(|i| format!("causal_{i}"))
            .chain((0..self.n_spurious).map(|i| format!("spurious_{i}")))
            .collect()
    }
}

pub fn environment_id(scale: f64) -> String {
    format!("sigma={scale}")
}

fn generate_environment(spec: &ScmSpec, scale: f64, seed: u64, stream: u64) -> Result<Environment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let wc = spec.causal_weights();
    let ws = spec.spurious_weights();
    let n = spec.n_samples_per_env;
    let p = spec.n_features();
    let mut features = Array2::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    for i in 0..n {
        let mut t = 0.0;
        for (j, w) in wc.iter().enumerate() {
            let x = scale * normal();
            features[[i, j]] = x;
            t += w * x;
        }
        t += scale * normal();
        let (y, signal) = match spec.task {
            Task::Regression => (t, t),
            Task::Classification => {
                let y = if t > 0.0 { 1.0 } else { 0.0 };
                (y, 2.0 * y - 1.0)
            }
        };
        for (k, w) in ws.iter().enumerate() {
            features[[i, spec.n_causal + k]] = w * signal + normal();
        }
        labels.push(y);
    }

    let sample_ids = (0..n).map(|i| format!("s{i:06}")).collect();
    Environment::new(environment_id(scale), Organism::Synthetic, sample_ids, features, labels)
}

/// One environment per entry of `env_scales`, deterministic in `(spec, seed)`.
pub fn generate_scm_dataset(spec: &ScmSpec, seed: u64) -> Result<MultiEnvDataset> {
    spec.validate()?;
    let envs = spec
        .env_scales
        .iter()
        .enumerate()
        .map(|(i, &s)| generate_environment(spec, s, seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = Provenance::default();
    provenance.record(PipelineStep::Synthesized {
        spec: spec.clone(),
        seed,
    });
    Ok(MultiEnvDataset::new(spec.feature_names(), envs)?.with_provenance(provenance))
}

/// The held-out environment at `spec.test_scale`, drawn from a stream disjoint
/// from every training environment.
pub fn generate_test_environment(spec: &ScmSpec, seed: u64) -> Result<MultiEnvDataset> {
    generate_held_out(spec, &[spec.test_scale], seed)
}

pub fn generate_held_out(spec: &ScmSpec, scales: &[f64], seed: u64) -> Result<MultiEnvDataset> {
    spec.validate()?;
    let envs = scales
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Invalid(format!("held-out scale must be positive, got {s}")));
            }
            generate_environment(spec, s, seed, HELD_OUT_STREAM_BASE + j as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiEnvDataset::new(spec.feature_names(), envs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    PooledLeastSquares,
    InvariantIdeal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: OracleKind,
}

/// Ordinary least squares with intercept on all environments concatenated.
pub fn pooled_least_squares_oracle(data: &MultiEnvDataset) -> Result<OracleSolution> {
    let p = data.n_features();
    let dim = p + 1;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut row = vec![0.0; dim];
    for env in &data.environments {
        for (x, &y) in env.features.rows().into_iter().zip(&env.labels) {
            row[..p].iter_mut().zip(x.iter()).for_each(|(r, v)| *r = *v);
            row[p] = 1.0;
            for a in 0..dim {
                rhs[a] += row[a] * y;
                for b in 0..=a {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("pooled Gram matrix is not positive definite".into()))?;
    let solution = chol.solve(&rhs);
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("normal equations produced non-finite weights".into()));
    }
    Ok(OracleSolution {
        weights: solution.iter().take(p).copied().collect(),
        bias: solution[p],
        kind: OracleKind::PooledLeastSquares,
    })
}

/// Causal weights on causal coordinates, zero elsewhere.
pub fn invariant_ideal(spec: &ScmSpec) -> OracleSolution {
    let mut weights = spec.causal_weights();
    weights.resize(spec.n_features(), 0.0);
    OracleSolution {
        weights,
        bias: 0.0,
        kind: OracleKind::InvariantIdeal,
    }
}
