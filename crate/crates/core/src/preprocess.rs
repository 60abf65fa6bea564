//! Cross-organism preprocessing: expression-table ingestion, mouse → human
//! homologue renaming, gene-space intersection, variance filtering and
//! per-experiment Z-normalization.
//!
//! The pipeline order is fixed: load → homologue-map → merge →
//! variance filter → Z-normalize. [`preprocess`] runs it end to end and
//! records every step in the dataset provenance.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Environment, MultiEnvDataset, Organism, PipelineStep, Provenance};
use crate::error::{Error, Result};

pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// One experiment's samples × genes matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTable {
    pub experiment_id: String,
    pub organism: Organism,
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    pub values: Array2<f64>,
    /// 1 = irradiated, 0 = control.
    pub labels: Vec<f64>,
    /// Whether gene ids are already in the human gene space.
    pub homologue_mapped: bool,
}

impl ExpressionTable {
    pub fn new(
        experiment_id: impl Into<String>,
        organism: Organism,
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: Array2<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        let table = Self {
            experiment_id: experiment_id.into(),
            organism,
            gene_ids,
            sample_ids,
            values,
            labels,
            homologue_mapped: organism != Organism::Mouse,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.experiment_id;
        if self.organism == Organism::Synthetic {
            return Err(Error::Invalid(format!(
                "table `{id}`: expression tables are human or mouse"
            )));
        }
        let (n, g) = self.values.dim();
        if n != self.sample_ids.len() || n != self.labels.len() || g != self.gene_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "table `{id}`: values are {n}×{g} with {} sample ids, {} labels, {} gene ids",
                self.sample_ids.len(),
                self.labels.len(),
                self.gene_ids.len()
            )));
        }
        if let Some(dup) = first_duplicate(&self.gene_ids) {
            return Err(Error::Invalid(format!("table `{id}`: duplicate gene id `{dup}`")));
        }
        if let Some(dup) = first_duplicate(&self.sample_ids) {
            return Err(Error::Invalid(format!("table `{id}`: duplicate sample id `{dup}`")));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("table `{id}`: non-finite expression value")));
        }
        if let Some(y) = self.labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::Invalid(format!("table `{id}`: label {y} is not 0 or 1")));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().map(String::as_str).find(|id| !seen.insert(*id))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSource {
    pub experiment_id: String,
    pub organism: Organism,
    /// Expected header of the second column.
    pub label_column: String,
}

impl TableSource {
    pub fn new(experiment_id: impl Into<String>, organism: Organism) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            organism,
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
        }
    }
}

/// Reads an expression CSV: `sample_id`, the label column (0/1), then one
/// column per gene.
pub fn load_expression_table(path: &Path, source: &TableSource) -> Result<ExpressionTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_expression_table(file, path, source)
}

pub fn read_expression_table<R: std::io::Read>(
    reader: R,
    path: &Path,
    source: &TableSource,
) -> Result<ExpressionTable> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| Error::format(path, format!("unreadable header: {e}")))?
        .clone();
    if header.len() < 3 {
        return Err(Error::format(
            path,
            "malformed header: expected sample_id, a label column and at least one gene column",
        ));
    }
    if header[0].trim() != "sample_id" {
        return Err(Error::format(
            path,
            format!(
                "malformed header: first column must be `sample_id`, found `{}`",
                &header[0]
            ),
        ));
    }
    if header[1].trim() != source.label_column {
        return Err(Error::format(
            path,
            format!(
                "malformed header: second column must be the label column `{}`, found `{}`",
                source.label_column, &header[1]
            ),
        ));
    }
    let gene_ids: Vec<String> = header.iter().skip(2).map(|g| g.trim().to_string()).collect();
    if let Some(pos) = gene_ids.iter().position(String::is_empty) {
        return Err(Error::format(
            path,
            format!("malformed header: empty gene id in column {}", pos + 3),
        ));
    }
    if let Some(dup) = first_duplicate(&gene_ids) {
        return Err(Error::format(path, format!("duplicate gene column `{dup}`")));
    }

    let n_genes = gene_ids.len();
    let mut sample_ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut seen_samples = HashSet::new();
    for (i, record) in csv.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        if record.len() != n_genes + 2 {
            return Err(Error::format(
                path,
                format!("line {line}: expected {} fields, found {}", n_genes + 2, record.len()),
            ));
        }
        let sample = record[0].trim();
        if sample.is_empty() {
            return Err(Error::format(path, format!("line {line}: missing sample id")));
        }
        if !seen_samples.insert(sample.to_string()) {
            return Err(Error::format(
                path,
                format!("line {line}: duplicate sample id `{sample}`"),
            ));
        }
        let label = match record[1].trim() {
            "0" => 0.0,
            "1" => 1.0,
            other => {
                return Err(Error::format(
                    path,
                    format!("line {line} (sample `{sample}`): unknown label value `{other}`, expected 0 or 1"),
                ))
            }
        };
        for (gene, cell) in gene_ids.iter().zip(record.iter().skip(2)) {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                let what = if cell.is_empty() {
                    "missing value".to_string()
                } else {
                    format!("non-numeric value `{cell}`")
                };
                Error::format(path, format!("line {line} (sample `{sample}`), gene `{gene}`: {what}"))
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    format!("line {line} (sample `{sample}`), gene `{gene}`: non-finite value `{cell}`"),
                ));
            }
            values.push(v);
        }
        sample_ids.push(sample.to_string());
        labels.push(label);
    }
    if sample_ids.is_empty() {
        return Err(Error::format(path, "table has no samples"));
    }
    let values = Array2::from_shape_vec((sample_ids.len(), n_genes), values).expect("row lengths checked");
    ExpressionTable::new(
        source.experiment_id.clone(),
        source.organism,
        gene_ids,
        sample_ids,
        values,
        labels,
    )
}

/// One-to-one mouse → human gene id association.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomologueMap {
    pub pairs: BTreeMap<String, String>,
    /// Rows dropped because a mouse or human id occurred in more than one
    /// distinct pair.
    pub collisions_removed: usize,
}

impl HomologueMap {
    /// Builds a strictly one-to-one map. Exact duplicate rows collapse to one;
    /// every row whose mouse or human id appears in another distinct pair is
    /// removed.
    pub fn from_pairs<I, A, B>(rows: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let unique: BTreeSet<(String, String)> = rows.into_iter().map(|(m, h)| (m.into(), h.into())).collect();
        let mut mouse_count: HashMap<&str, usize> = HashMap::new();
        let mut human_count: HashMap<&str, usize> = HashMap::new();
        for (m, h) in &unique {
            *mouse_count.entry(m).or_default() += 1;
            *human_count.entry(h).or_default() += 1;
        }
        let mut pairs = BTreeMap::new();
        let mut collisions_removed = 0;
        for (m, h) in &unique {
            if mouse_count[m.as_str()] == 1 && human_count[h.as_str()] == 1 {
                pairs.insert(m.clone(), h.clone());
            } else {
                collisions_removed += 1;
            }
        }
        Self {
            pairs,
            collisions_removed,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, mouse_gene: &str) -> Option<&str> {
        self.pairs.get(mouse_gene).map(String::as_str)
    }
}

/// Reads a two-column TSV with header `mouse_gene_id<TAB>human_gene_id`.
pub fn load_homologue_map(path: &Path) -> Result<HomologueMap> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_homologue_map(file, path)
}

pub fn read_homologue_map<R: std::io::Read>(reader: R, path: &Path) -> Result<HomologueMap> {
    let mut tsv = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(reader);
    let header = tsv
        .headers()
        .map_err(|e| Error::format(path, format!("unreadable header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != ["mouse_gene_id", "human_gene_id"] {
        return Err(Error::format(
            path,
            format!("malformed header: expected `mouse_gene_id<TAB>human_gene_id`, found {names:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in tsv.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        if record.len() != 2 {
            return Err(Error::format(
                path,
                format!("line {line}: expected 2 fields, found {}", record.len()),
            ));
        }
        let (m, h) = (record[0].trim(), record[1].trim());
        if m.is_empty() || h.is_empty() {
            return Err(Error::format(path, format!("line {line}: empty gene id")));
        }
        rows.push((m.to_string(), h.to_string()));
    }
    Ok(HomologueMap::from_pairs(rows))
}

/// Renames a mouse table's genes to their human homologues, dropping
/// unmapped genes. Returns the mapped table and the number of dropped genes.
pub fn apply_homologue_map(table: &ExpressionTable, map: &HomologueMap) -> Result<(ExpressionTable, usize)> {
    if table.organism != Organism::Mouse {
        return Err(Error::Invalid(format!(
            "table `{}` is {}; homologue mapping applies to mouse tables",
            table.experiment_id, table.organism
        )));
    }
    if table.homologue_mapped {
        return Err(Error::Invalid(format!(
            "table `{}` is already homologue-mapped",
            table.experiment_id
        )));
    }
    let (keep, renamed): (Vec<usize>, Vec<String>) = table
        .gene_ids
        .iter()
        .enumerate()
        .filter_map(|(j, g)| map.get(g).map(|h| (j, h.to_string())))
        .unzip();
    if keep.is_empty() {
        return Err(Error::Invalid(format!(
            "table `{}`: no gene has a homologue in the map",
            table.experiment_id
        )));
    }
    let dropped = table.n_genes() - keep.len();
    let mapped = ExpressionTable {
        gene_ids: renamed,
        values: table.values.select(Axis(1), &keep),
        homologue_mapped: true,
        ..table.clone()
    };
    mapped.validate()?;
    Ok((mapped, dropped))
}

/// Brings a table into the human gene space: human tables pass through,
/// mouse tables go through [`apply_homologue_map`].
pub fn harmonize(table: &ExpressionTable, map: Option<&HomologueMap>) -> Result<(ExpressionTable, usize)> {
    match table.organism {
        Organism::Human => Ok((table.clone(), 0)),
        Organism::Mouse if table.homologue_mapped => Ok((table.clone(), 0)),
        Organism::Mouse => match map {
            Some(map) => apply_homologue_map(table, map),
            None => Err(Error::Invalid(format!(
                "mouse table `{}` needs a homologue map",
                table.experiment_id
            ))),
        },
        Organism::Synthetic => Err(Error::Invalid(format!(
            "table `{}`: synthetic tables cannot be harmonized",
            table.experiment_id
        ))),
    }
}

/// One environment per table on the sorted intersection of gene ids.
pub fn merge_to_multienv(tables: &[ExpressionTable]) -> Result<MultiEnvDataset> {
    if tables.len() < 2 {
        return Err(Error::Invalid(format!(
            "merging needs at least 2 tables, got {}",
            tables.len()
        )));
    }
    if let Some(t) = tables.iter().find(|t| !t.homologue_mapped) {
        return Err(Error::Invalid(format!(
            "mouse table `{}` must be homologue-mapped before merging",
            t.experiment_id
        )));
    }
    let ids: Vec<String> = tables.iter().map(|t| t.experiment_id.clone()).collect();
    if let Some(dup) = first_duplicate(&ids) {
        return Err(Error::Invalid(format!("duplicate experiment id `{dup}`")));
    }

    let mut common: BTreeSet<&str> = tables[0].gene_ids.iter().map(String::as_str).collect();
    for t in &tables[1..] {
        let genes: HashSet<&str> = t.gene_ids.iter().map(String::as_str).collect();
        common.retain(|g| genes.contains(g));
    }
    if common.is_empty() {
        return Err(Error::Invalid("tables share no genes".into()));
    }
    let gene_ids: Vec<String> = common.iter().map(|g| g.to_string()).collect();

    let envs = tables
        .iter()
        .map(|t| {
            let index: HashMap<&str, usize> = t.gene_ids.iter().enumerate().map(|(j, g)| (g.as_str(), j)).collect();
            let cols: Vec<usize> = gene_ids.iter().map(|g| index[g.as_str()]).collect();
            Environment::new(
                t.experiment_id.clone(),
                t.organism,
                t.sample_ids.clone(),
                t.values.select(Axis(1), &cols),
                t.labels.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = MultiEnvDataset::new(gene_ids, envs)?;
    data.provenance.record(PipelineStep::Merged {
        environments: tables.len(),
        intersection_size: data.n_features(),
    });
    Ok(data)
}

/// Sample variance (n − 1) of every gene over all environments' rows.
pub fn combined_variances(data: &MultiEnvDataset) -> Vec<f64> {
    let p = data.n_features();
    let n = data.n_samples();
    if n < 2 {
        return vec![0.0; p];
    }
    let mut sums = vec![0.0; p];
    for env in &data.environments {
        for row in env.features.rows() {
            sums.iter_mut().zip(row.iter()).for_each(|(s, v)| *s += v);
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let mut sq = vec![0.0; p];
    for env in &data.environments {
        for row in env.features.rows() {
            for ((acc, v), m) in sq.iter_mut().zip(row.iter()).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    sq.into_iter().map(|s| s / (n - 1) as f64).collect()
}

/// Keeps the `k` genes with the largest combined variance (ties by ascending
/// gene id), preserving the original order of the survivors.
pub fn variance_filter(data: &MultiEnvDataset, k: usize) -> Result<MultiEnvDataset> {
    let p = data.n_features();
    if k == 0 || k > p {
        return Err(Error::Invalid(format!("cannot keep {k} of {p} genes")));
    }
    let variances = combined_variances(data);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        variances[b]
            .total_cmp(&variances[a])
            .then_with(|| data.gene_ids[a].cmp(&data.gene_ids[b]))
    });
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    let mut out = data.select_features(&keep);
    out.provenance
        .record(PipelineStep::VarianceFiltered { from: p, kept: k });
    Ok(out)
}

/// Per environment, per gene: `(x − mean) / sd` with the n − 1 standard
/// deviation. Constant columns (and single-sample environments) become zeros.
pub fn z_normalize(data: &MultiEnvDataset) -> MultiEnvDataset {
    let mut out = data.clone();
    for env in &mut out.environments {
        let n = env.n_samples();
        for mut col in env.features.columns_mut() {
            let first = col[0];
            if n < 2 || col.iter().all(|v| *v == first) {
                col.fill(0.0);
                continue;
            }
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
    out.provenance.record(PipelineStep::ZNormalized);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub dropped_genes: BTreeMap<String, usize>,
    pub intersection_size: usize,
    pub kept_genes: usize,
}

/// Runs homologue mapping, merge, variance filtering and Z-normalization in
/// that order.
pub fn preprocess(
    tables: &[ExpressionTable],
    map: Option<&HomologueMap>,
    top_genes: usize,
) -> Result<(MultiEnvDataset, PreprocessSummary)> {
    let mut provenance = Provenance::default();
    for t in tables {
        provenance.record(PipelineStep::Loaded {
            experiment_id: t.experiment_id.clone(),
            organism: t.organism,
            n_samples: t.n_samples(),
            n_genes: t.n_genes(),
        });
    }
    let needs_map = tables
        .iter()
        .any(|t| t.organism == Organism::Mouse && !t.homologue_mapped);
    if let (true, Some(map)) = (needs_map, map) {
        provenance.record(PipelineStep::HomologueMapLoaded {
            pairs: map.len(),
            collisions_removed: map.collisions_removed,
        });
    }

    let mut dropped_genes = BTreeMap::new();
    let mut harmonized = Vec::with_capacity(tables.len());
    for t in tables {
        let was_mapped = t.homologue_mapped;
        let (h, dropped) = harmonize(t, map)?;
        if t.organism == Organism::Mouse && !was_mapped {
            provenance.record(PipelineStep::HomologueMapped {
                experiment_id: t.experiment_id.clone(),
                kept_genes: h.n_genes(),
                dropped_genes: dropped,
            });
        }
        dropped_genes.insert(t.experiment_id.clone(), dropped);
        harmonized.push(h);
    }

    let merged = merge_to_multienv(&harmonized)?;
    let intersection_size = merged.n_features();
    if top_genes > intersection_size {
        return Err(Error::Invalid(format!(
            "requested the top {top_genes} genes but only {intersection_size} are shared by all tables"
        )));
    }
    provenance.steps.extend(merged.provenance.steps.iter().cloned());
    let filtered = variance_filter(&merged.with_provenance(provenance), top_genes)?;
    let data = z_normalize(&filtered);
    let summary = PreprocessSummary {
        dropped_genes,
        intersection_size,
        kept_genes: data.n_features(),
    };
    Ok((data, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::path::PathBuf;

    fn path() -> PathBuf {
        PathBuf::from("test.csv")
    }

    fn read(text: &str) -> Result<ExpressionTable> {
        read_expression_table(text.as_bytes(), &path(), &TableSource::new("exp", Organism::Human))
    }

    fn table(id: &str, organism: Organism, genes: &[&str], values: Array2<f64>, labels: Vec<f64>) -> ExpressionTable {
        let samples = (0..values.nrows()).map(|i| format!("{id}_s{i}")).collect();
        ExpressionTable::new(
            id,
            organism,
            genes.iter().map(|g| g.to_string()).collect(),
            samples,
            values,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn loads_well_formed_table() {
        let t = read("sample_id,label,A,B,C,D\ns1,0,1,2,3,4\ns2,1,1.5,2.5,3.5,4.5\ns3,1,0,0,0,1e-3\n").unwrap();
        assert_eq!(t.values.dim(), (3, 4));
        assert_eq!(t.labels, vec![0.0, 1.0, 1.0]);
        assert_eq!(t.gene_ids, ["A", "B", "C", "D"]);
    }

    #[test]
    fn rejects_duplicate_gene_column() {
        let err = read("sample_id,label,A,B,A\ns1,0,1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("`A`"), "{err}");
    }

    #[test]
    fn rejects_unknown_label_with_row_and_value() {
        let err = read("sample_id,label,A\ns1,0,1\ns2,2,1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("`2`"), "{msg}");
    }

    #[test]
    fn rejects_malformed_cells_and_headers() {
        assert!(read("id,label,A\ns1,0,1\n").is_err());
        assert!(read("sample_id,label\ns1,0\n").is_err());
        assert!(read("sample_id,label,A\ns1,0,\n")
            .unwrap_err()
            .to_string()
            .contains("missing"));
        assert!(read("sample_id,label,A\ns1,0,abc\n")
            .unwrap_err()
            .to_string()
            .contains("non-numeric"));
        assert!(read("sample_id,label,A\ns1,0,1\ns1,1,2\n")
            .unwrap_err()
            .to_string()
            .contains("duplicate sample"));
        assert!(read("sample_id,label,A\ns1,0,1,2\n").is_err());
        assert!(read("sample_id,label,A\n").is_err());
    }

    #[test]
    fn custom_label_column() {
        let src = TableSource {
            label_column: "irradiated".into(),
            ..TableSource::new("e", Organism::Mouse)
        };
        let t = read_expression_table("sample_id,irradiated,A\ns1,1,2\n".as_bytes(), &path(), &src).unwrap();
        assert_eq!(t.organism, Organism::Mouse);
        assert!(!t.homologue_mapped);
    }

    fn map(rows: &[(&str, &str)]) -> HomologueMap {
        HomologueMap::from_pairs(rows.iter().copied())
    }

    #[test]
    fn homologue_collisions_are_removed() {
        let m = map(&[("Trp53", "TP53"), ("Myc", "MYC")]);
        assert_eq!(m.len(), 2);
        let m = map(&[("A", "X"), ("A", "Y")]);
        assert_eq!((m.len(), m.collisions_removed), (0, 2));
        let m = map(&[("A", "X"), ("B", "X")]);
        assert_eq!((m.len(), m.collisions_removed), (0, 2));
        let m = map(&[("A", "X"), ("A", "X"), ("C", "Z")]);
        assert_eq!((m.len(), m.collisions_removed), (2, 0));
    }

    #[test]
    fn homologue_tsv_parsing() {
        let p = PathBuf::from("map.tsv");
        let m = read_homologue_map("mouse_gene_id\thuman_gene_id\nTrp53\tTP53\nMyc\tMYC\n".as_bytes(), &p).unwrap();
        assert_eq!(m.get("Trp53"), Some("TP53"));
        assert!(read_homologue_map("mouse\thuman\nA\tB\n".as_bytes(), &p).is_err());
        assert!(read_homologue_map("mouse_gene_id\thuman_gene_id\nA\tB\tC\n".as_bytes(), &p).is_err());
    }

    #[test]
    fn mapping_renames_and_drops() {
        let t = table(
            "m",
            Organism::Mouse,
            &["Trp53", "Fake1"],
            array![[1.0, 2.0], [3.0, 4.0]],
            vec![0.0, 1.0],
        );
        let (mapped, dropped) = apply_homologue_map(&t, &map(&[("Trp53", "TP53")])).unwrap();
        assert_eq!(mapped.gene_ids, ["TP53"]);
        assert_eq!(dropped, 1);
        assert_eq!(mapped.values, array![[1.0], [3.0]]);
        assert_eq!(mapped.labels, t.labels);
        assert_eq!(mapped.sample_ids, t.sample_ids);

        let (all, dropped) = apply_homologue_map(&t, &map(&[("Trp53", "TP53"), ("Fake1", "FAKE1")])).unwrap();
        assert_eq!((all.values.dim(), dropped), ((2, 2), 0));

        assert!(apply_homologue_map(&t, &HomologueMap::default()).is_err());
        let h = table("h", Organism::Human, &["TP53"], array![[1.0]], vec![0.0]);
        assert!(apply_homologue_map(&h, &map(&[("Trp53", "TP53")])).is_err());
        assert_eq!(harmonize(&h, None).unwrap(), (h.clone(), 0));
        assert!(harmonize(&t, None).is_err());
    }

    #[test]
    fn merge_intersects_sorted() {
        let a = table(
            "a",
            Organism::Human,
            &["C", "A", "B"],
            array![[3.0, 1.0, 2.0]],
            vec![1.0],
        );
        let b = table(
            "b",
            Organism::Human,
            &["D", "C", "B"],
            array![[4.0, 3.0, 2.0]],
            vec![0.0],
        );
        let d = merge_to_multienv(&[a.clone(), b]).unwrap();
        assert_eq!(d.gene_ids, ["B", "C"]);
        assert_eq!(d.environments[0].features, array![[2.0, 3.0]]);
        assert_eq!(d.environments[1].id, "b");

        let c = table("c", Organism::Human, &["X"], array![[1.0]], vec![0.0]);
        assert!(merge_to_multienv(&[a.clone(), c]).is_err());
        assert!(merge_to_multienv(std::slice::from_ref(&a)).is_err());
        let m = table("m", Organism::Mouse, &["A"], array![[1.0]], vec![0.0]);
        assert!(merge_to_multienv(&[a, m]).is_err());
    }

    #[test]
    fn merge_keeps_one_environment_per_table() {
        let tables: Vec<_> = (0..5)
            .map(|i| {
                table(
                    &format!("t{i}"),
                    Organism::Human,
                    &["A", "B"],
                    array![[1.0, 2.0]],
                    vec![1.0],
                )
            })
            .collect();
        assert_eq!(merge_to_multienv(&tables).unwrap().environments.len(), 5);
    }

    fn dataset(genes: &[&str], cols: Vec<Vec<f64>>) -> MultiEnvDataset {
        let n = cols[0].len();
        let x = Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i]);
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        let env = Environment::new("e", Organism::Human, ids, x, vec![0.0; n]).unwrap();
        MultiEnvDataset::new(genes.iter().map(|g| g.to_string()).collect(), vec![env]).unwrap()
    }

    #[test]
    fn variance_filter_breaks_ties_by_id() {
        // [-√v, 0, √v] has sample variance v.
        let col = |v: f64| {
            let h = v.sqrt();
            vec![-h, 0.0, h]
        };
        let d = dataset(&["g0", "g1", "g3", "g2"], vec![col(0.1), col(5.0), col(2.0), col(2.0)]);
        let v = combined_variances(&d);
        assert!((v[1] - 5.0).abs() < 1e-12 && (v[2] - v[3]).abs() == 0.0);
        let f = variance_filter(&d, 2).unwrap();
        assert_eq!(f.gene_ids, ["g1", "g2"]);
        assert_eq!(variance_filter(&d, 4).unwrap().gene_ids, d.gene_ids);
        assert!(variance_filter(&d, 5).is_err());
    }

    #[test]
    fn constant_gene_never_survives() {
        let d = dataset(
            &["a", "b", "c"],
            vec![vec![1.0, 2.0, 4.0], vec![7.0, 7.0, 7.0], vec![0.0, 1.0, 0.0]],
        );
        assert!(!variance_filter(&d, 2).unwrap().gene_ids.contains(&"b".to_string()));
    }

    #[test]
    fn z_normalize_examples() {
        let d = dataset(&["a", "b"], vec![vec![1.0, 2.0, 3.0], vec![7.0, 7.0, 7.0]]);
        let z = z_normalize(&d);
        assert_eq!(z.environments[0].features.column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(z.environments[0].features.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert!(z.provenance.ran(|s| matches!(s, PipelineStep::ZNormalized)));
    }
}
