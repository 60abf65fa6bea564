//! A small synthetic cross-organism fixture in the expression-table format:
//! two human and three mouse experiments (125 samples in total) over 500
//! genes, with a homologue map covering 80% of the mouse genes.
//!
//! Expression is log-normal. A handful of genes respond to irradiation the
//! same way in every experiment; another handful respond with opposite signs
//! in human and mouse experiments. Every experiment also carries its own
//! per-gene batch offset.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Organism;
use crate::error::{Error, Result};
use crate::preprocess::{ExpressionTable, HomologueMap};
use crate::store::write_json;

pub const FIXTURE_SEED: u64 = 20_210_611;
pub const N_GENES: usize = 500;
pub const N_MAPPED: usize = 400;
pub const TOP_GENES: usize = 100;
pub const N_CONSISTENT: usize = 12;
pub const N_FLIPPING: usize = 12;

/// (experiment id, organism, samples)
pub const EXPERIMENTS: [(&str, Organism, usize); 5] = [
    ("human_blood_a", Organism::Human, 30),
    ("human_blood_b", Organism::Human, 25),
    ("mouse_blood_a", Organism::Mouse, 25),
    ("mouse_blood_b", Organism::Mouse, 25),
    ("mouse_blood_c", Organism::Mouse, 20),
];

pub const HOMOLOGUE_FILE: &str = "homologues.tsv";
pub const MANIFEST_FILE: &str = "fixture.json";

pub fn human_gene(j: usize) -> String {
    format!("GENE{j:04}")
}

pub fn mouse_gene(j: usize) -> String {
    format!("Gene{j:04}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTable {
    pub file: String,
    pub experiment_id: String,
    pub organism: Organism,
    pub n_samples: usize,
}

/// Machine-readable description of the fixture and its expected
/// preprocessing outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub tables: Vec<FixtureTable>,
    pub homologues: String,
    pub raw_genes: usize,
    pub mapped_genes: usize,
    pub collision_rows: usize,
    pub intersection_size: usize,
    pub top_genes: usize,
    /// Human ids of genes with an organism-independent response.
    pub consistent_genes: Vec<String>,
    /// Human ids of genes whose response flips between organisms.
    pub flipping_genes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossOrganismFixture {
    pub tables: Vec<ExpressionTable>,
    /// Raw map rows, collisions included.
    pub homologue_rows: Vec<(String, String)>,
    pub manifest: FixtureManifest,
}

impl CrossOrganismFixture {
    pub fn homologue_map(&self) -> HomologueMap {
        HomologueMap::from_pairs(self.homologue_rows.iter().cloned())
    }

    /// Writes one CSV per table, the homologue TSV and `fixture.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (table, meta) in self.tables.iter().zip(&self.manifest.tables) {
            let path = dir.join(&meta.file);
            fs::write(&path, table_csv(table)).map_err(|e| Error::io(&path, e))?;
        }
        let mut tsv = String::from("mouse_gene_id\thuman_gene_id\n");
        for (m, h) in &self.homologue_rows {
            tsv.push_str(&format!("{m}\t{h}\n"));
        }
        let path = dir.join(HOMOLOGUE_FILE);
        fs::write(&path, tsv).map_err(|e| Error::io(&path, e))?;
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }
}

fn table_csv(table: &ExpressionTable) -> String {
    let mut out = String::from("sample_id,label");
    for g in &table.gene_ids {
        out.push(',');
        out.push_str(g);
    }
    out.push('\n');
    for ((sample, label), row) in table.sample_ids.iter().zip(&table.labels).zip(table.values.rows()) {
        out.push_str(sample);
        out.push_str(if *label == 1.0 { ",1" } else { ",0" });
        for v in row {
            out.push_str(&format!(",{v:.4}"));
        }
        out.push('\n');
    }
    out
}

fn round4(v: f64) -> f64 {
    format!("{v:.4}").parse().expect("formatted float")
}

pub fn cross_organism_fixture() -> CrossOrganismFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut order: Vec<usize> = (1..=N_GENES).collect();
    order.shuffle(&mut rng);
    let mut mapped: Vec<usize> = order[..N_MAPPED].to_vec();
    mapped.sort_unstable();
    let unmapped: Vec<usize> = order[N_MAPPED..].to_vec();

    // Response genes are drawn from the mapped set so they survive the merge.
    let mut responders = mapped.clone();
    responders.shuffle(&mut rng);
    let mut consistent = responders[..N_CONSISTENT].to_vec();
    let mut flipping = responders[N_CONSISTENT..N_CONSISTENT + N_FLIPPING].to_vec();
    consistent.sort_unstable();
    flipping.sort_unstable();

    let base: Vec<f64> = (0..N_GENES).map(|_| 4.0 + normal(&mut rng)).collect();
    let spread: Vec<f64> = (0..N_GENES).map(|_| rng.random_range(0.15..1.2)).collect();
    // Two genes have no variability at all.
    let constant = [unmapped[0], mapped[N_MAPPED / 2]];

    let mut tables = Vec::with_capacity(EXPERIMENTS.len());
    let mut table_meta = Vec::with_capacity(EXPERIMENTS.len());
    for (t, &(id, organism, n)) in EXPERIMENTS.iter().enumerate() {
        let mut trng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
        trng.set_stream(1 + t as u64);
        let batch: Vec<f64> = (0..N_GENES).map(|_| 0.5 * normal(&mut trng)).collect();
        let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let flip_sign = if organism == Organism::Human { 1.0 } else { -1.0 };
        let mut values = Array2::zeros((n, N_GENES));
        for i in 0..n {
            let y = labels[i];
            for j in 0..N_GENES {
                let gene = j + 1;
                if constant.contains(&gene) {
                    values[[i, j]] = round4(base[j].exp());
                    continue;
                }
                let mut effect = 0.0;
                if consistent.binary_search(&gene).is_ok() {
                    effect = 1.0 * spread[j] * y;
                } else if flipping.binary_search(&gene).is_ok() {
                    effect = 1.2 * flip_sign * spread[j] * y;
                }
                let log_value = base[j] + batch[j] + effect + spread[j] * normal(&mut trng);
                values[[i, j]] = round4(log_value.exp());
            }
        }
        let gene_ids: Vec<String> = (1..=N_GENES)
            .map(|g| {
                if organism == Organism::Human {
                    human_gene(g)
                } else {
                    mouse_gene(g)
                }
            })
            .collect();
        let prefix: String = id.split('_').map(|w| w[..1].to_uppercase()).collect();
        let sample_ids: Vec<String> = (0..n).map(|i| format!("{prefix}{:03}", i + 1)).collect();
        let table = ExpressionTable::new(id, organism, gene_ids, sample_ids, values, labels)
            .expect("fixture tables are well formed");
        table_meta.push(FixtureTable {
            file: format!("{id}.csv"),
            experiment_id: id.to_string(),
            organism,
            n_samples: n,
        });
        tables.push(table);
    }

    let mut homologue_rows: Vec<(String, String)> = mapped.iter().map(|&g| (mouse_gene(g), human_gene(g))).collect();
    // Collisions among unmapped genes: one-to-many, then many-to-one.
    homologue_rows.push((mouse_gene(unmapped[1]), "GENE9001".into()));
    homologue_rows.push((mouse_gene(unmapped[1]), "GENE9002".into()));
    homologue_rows.push((mouse_gene(unmapped[2]), "GENE9003".into()));
    homologue_rows.push((mouse_gene(unmapped[3]), "GENE9003".into()));

    let manifest = FixtureManifest {
        seed: FIXTURE_SEED,
        tables: table_meta,
        homologues: HOMOLOGUE_FILE.to_string(),
        raw_genes: N_GENES,
        mapped_genes: N_MAPPED,
        collision_rows: 4,
        intersection_size: N_MAPPED,
        top_genes: TOP_GENES,
        consistent_genes: consistent.iter().map(|&g| human_gene(g)).collect(),
        flipping_genes: flipping.iter().map(|&g| human_gene(g)).collect(),
    };
    CrossOrganismFixture {
        tables,
        homologue_rows,
        manifest,
    }
}
