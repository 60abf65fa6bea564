//! On-disk processed datasets.
//!
//! A dataset directory holds `dataset.json` (gene ids, environment metadata
//! and provenance) plus `env_NNN/values.csv` per environment. Each values file
//! uses the expression-table layout: `sample_id`, `label`, then one column
//! per gene in `gene_ids` order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Environment, MultiEnvDataset, Organism, Provenance};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "dataset.json";
pub const FORMAT_TAG: &str = "irmkit-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub gene_ids: Vec<String>,
    pub environments: Vec<EnvironmentEntry>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentEntry {
    pub id: String,
    pub organism: Organism,
    pub n_samples: usize,
    /// Path of the values file relative to the dataset directory.
    pub values: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_dataset(dir: &Path, data: &MultiEnvDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(data.environments.len());
    for (i, env) in data.environments.iter().enumerate() {
        let rel = format!("env_{i:03}/values.csv");
        let env_dir = dir.join(format!("env_{i:03}"));
        fs::create_dir_all(&env_dir).map_err(|e| Error::io(&env_dir, e))?;
        write_values(&dir.join(&rel), &data.gene_ids, env)?;
        entries.push(EnvironmentEntry {
            id: env.id.clone(),
            organism: env.organism,
            n_samples: env.n_samples(),
            values: rel,
        });
    }
    let manifest = DatasetManifest {
        format: FORMAT_TAG.to_string(),
        gene_ids: data.gene_ids.clone(),
        environments: entries,
        provenance: data.provenance.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

fn write_values(path: &Path, gene_ids: &[String], env: &Environment) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    out.write_record(
        ["sample_id", "label"]
            .into_iter()
            .chain(gene_ids.iter().map(String::as_str)),
    )
    .map_err(io_err)?;
    for ((sample, label), row) in env.sample_ids.iter().zip(&env.labels).zip(env.features.rows()) {
        let mut record = Vec::with_capacity(row.len() + 2);
        record.push(sample.clone());
        record.push(label.to_string());
        record.extend(row.iter().map(f64::to_string));
        out.write_record(&record).map_err(io_err)?;
    }
    let bytes = out
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(dir: &Path) -> Result<MultiEnvDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported format `{}` (expected `{FORMAT_TAG}`)", manifest.format),
        ));
    }
    let envs = manifest
        .environments
        .iter()
        .map(|entry| read_values(&dir.join(&entry.values), &manifest.gene_ids, entry))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiEnvDataset::new(manifest.gene_ids, envs)?.with_provenance(manifest.provenance))
}

fn read_values(path: &Path, gene_ids: &[String], entry: &EnvironmentEntry) -> Result<Environment> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, format!("unreadable header: {e}")))?
        .clone();
    let expected: Vec<&str> = ["sample_id", "label"]
        .into_iter()
        .chain(gene_ids.iter().map(String::as_str))
        .collect();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(path, "header does not match the manifest gene ids"));
    }
    let p = gene_ids.len();
    let mut sample_ids = Vec::with_capacity(entry.n_samples);
    let mut labels = Vec::with_capacity(entry.n_samples);
    let mut values = Vec::with_capacity(entry.n_samples * p);
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        if record.len() != p + 2 {
            return Err(Error::format(
                path,
                format!("line {line}: expected {} fields, found {}", p + 2, record.len()),
            ));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {line}: {what} `{s}` is not a number")))
        };
        sample_ids.push(record[0].to_string());
        labels.push(parse(&record[1], "label")?);
        for cell in record.iter().skip(2) {
            values.push(parse(cell, "value")?);
        }
    }
    if sample_ids.len() != entry.n_samples {
        return Err(Error::format(
            path,
            format!(
                "manifest declares {} samples, file has {}",
                entry.n_samples,
                sample_ids.len()
            ),
        ));
    }
    let features = Array2::from_shape_vec((sample_ids.len(), p), values).expect("row lengths checked");
    Environment::new(entry.id.clone(), entry.organism, sample_ids, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{generate_scm_dataset, ScmSpec, Task};

    #[test]
    fn round_trip_is_exact_and_bytes_stable() {
        let spec = ScmSpec {
            task: Task::Regression,
            n_samples_per_env: 40,
            ..ScmSpec::default()
        };
        let data = generate_scm_dataset(&spec, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, data);

        let first = fs::read(dir.path().join("env_001/values.csv")).unwrap();
        let other = tempfile::tempdir().unwrap();
        write_dataset(other.path(), &back).unwrap();
        assert_eq!(first, fs::read(other.path().join("env_001/values.csv")).unwrap());
        assert_eq!(
            fs::read(dir.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(other.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn rejects_unknown_manifest_keys() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"format":"irmkit-dataset/1","gene_ids":[],"environments":[],"provenance":{"steps":[]},"extra":1}"#,
        )
        .unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { .. })));
    }
}
