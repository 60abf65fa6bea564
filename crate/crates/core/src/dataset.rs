//! Multi-environment datasets: the shared container consumed by the trainer,
//! produced by the synthetic generator and by the preprocessing pipeline.

use std::collections::HashSet;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scm::ScmSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Organism {
    Human,
    Mouse,
    Synthetic,
}

impl std::fmt::Display for Organism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Organism::Human => "human",
            Organism::Mouse => "mouse",
            Organism::Synthetic => "synthetic",
        })
    }
}

impl std::str::FromStr for Organism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Organism::Human),
            "mouse" => Ok(Organism::Mouse),
            "synthetic" => Ok(Organism::Synthetic),
            other => Err(Error::Invalid(format!("unknown organism `{other}`"))),
        }
    }
}

/// One data-generating context: a samples × features block with its targets.
///
/// Targets are `{0, 1}` for classification data (irradiated = 1) and real
/// valued for synthetic regression data. Rows are kept in ascending
/// sample-id order, so every reduction over samples has a fixed summation
/// order regardless of how the input rows were arranged.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub id: String,
    pub organism: Organism,
    pub sample_ids: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Vec<f64>,
}

impl Environment {
    pub fn new(
        id: impl Into<String>,
        organism: Organism,
        sample_ids: Vec<String>,
        features: Array2<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyEnvironment(id));
        }
        if labels.len() != n || sample_ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "environment `{id}`: {n} feature rows, {} labels, {} sample ids",
                labels.len(),
                sample_ids.len()
            )));
        }
        if let Some(((row, col), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "environment `{id}`: non-finite feature value {v} at row {row}, column {col}"
            )));
        }
        if let Some((row, v)) = labels.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "environment `{id}`: non-finite label {v} at row {row}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sample_ids[a].cmp(&sample_ids[b]));
        if let Some(w) = order.windows(2).find(|w| sample_ids[w[0]] == sample_ids[w[1]]) {
            return Err(Error::Invalid(format!(
                "environment `{id}`: duplicate sample id `{}`",
                sample_ids[w[0]]
            )));
        }
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return Ok(Self {
                id,
                organism,
                sample_ids,
                features,
                labels,
            });
        }
        Ok(Self {
            id,
            organism,
            sample_ids: order.iter().map(|&i| sample_ids[i].clone()).collect(),
            features: features.select(Axis(0), &order),
            labels: order.iter().map(|&i| labels[i]).collect(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices` (re-sorted by sample id).
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let sample_ids = indices.iter().map(|&i| self.sample_ids[i].clone()).collect();
        Environment::new(self.id.clone(), self.organism, sample_ids, features, labels)
    }

    /// Columns at `indices`, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(1), indices),
            ..self.clone()
        }
    }
}

/// A record of one transformation applied while assembling a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineStep {
    Synthesized {
        spec: ScmSpec,
        seed: u64,
    },
    Loaded {
        experiment_id: String,
        organism: Organism,
        n_samples: usize,
        n_genes: usize,
    },
    HomologueMapped {
        experiment_id: String,
        kept_genes: usize,
        dropped_genes: usize,
    },
    HomologueMapLoaded {
        pairs: usize,
        collisions_removed: usize,
    },
    Merged {
        environments: usize,
        intersection_size: usize,
    },
    VarianceFiltered {
        from: usize,
        kept: usize,
    },
    ZNormalized,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub steps: Vec<PipelineStep>,
}

impl Provenance {
    pub fn record(&mut self, step: PipelineStep) {
        self.steps.push(step);
    }

    pub fn ran(&self, pred: impl Fn(&PipelineStep) -> bool) -> bool {
        self.steps.iter().any(pred)
    }
}

/// Gene-aligned environments sharing one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEnvDataset {
    pub gene_ids: Vec<String>,
    pub environments: Vec<Environment>,
    pub provenance: Provenance,
}

impl MultiEnvDataset {
    pub fn new(gene_ids: Vec<String>, environments: Vec<Environment>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(gene_ids.len());
        if let Some(dup) = gene_ids.iter().find(|g| !seen.insert(g.as_str())) {
            return Err(Error::Invalid(format!("duplicate gene id `{dup}`")));
        }
        if let Some(env) = environments.iter().find(|e| e.n_features() != gene_ids.len()) {
            return Err(Error::DimensionMismatch(format!(
                "environment `{}` has {} features, dataset has {} gene ids",
                env.id,
                env.n_features(),
                gene_ids.len()
            )));
        }
        Ok(Self {
            gene_ids,
            environments,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn n_features(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.environments.iter().map(Environment::n_samples).sum()
    }

    /// Keep the given feature columns (by index, in the given order).
    pub fn select_features(&self, indices: &[usize]) -> Self {
        Self {
            gene_ids: indices.iter().map(|&i| self.gene_ids[i].clone()).collect(),
            environments: self.environments.iter().map(|e| e.select_columns(indices)).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// SHA-256 over gene ids, environment ids, labels and feature bits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for g in &self.gene_ids {
            hasher.update(g.as_bytes());
            hasher.update([0u8]);
        }
        for env in &self.environments {
            hasher.update(env.id.as_bytes());
            hasher.update([0u8]);
            hasher.update((env.n_samples() as u64).to_le_bytes());
            for y in &env.labels {
                hasher.update(y.to_le_bytes());
            }
            for v in env.features.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}
