//! Augmentation, substitution and fixed-total sweeps over human/mouse data
//! mixtures.
//!
//! A plan is a list of cells; a cell gives a sample count per environment
//! (in dataset order, 0 meaning the environment is left out). For every
//! (cell, seed) pair the harness subsamples each environment, trains a model,
//! and ranks its features. Rankings are then compared pairwise between cells
//! at each seed and the per-seed metric values are averaged, with a
//! normal-approximation confidence interval.
//!
//! Subsampling takes a prefix of a fixed shuffled order per (seed,
//! environment), so a cell's rows depend only on its counts and the seed,
//! never on its position in the plan.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Environment, MultiEnvDataset, Organism};
use crate::error::{Error, Result};
use crate::model::{train, TrainConfig};
use crate::ranking::{rank_features, Metric, RankedFeatureList};

/// Mixed into the sweep seed for subsampling so it never shares a stream with
/// model initialization.
const SUBSAMPLE_SALT: u64 = 0x5eed_5a3b_1e00_0001;

/// Minimum human samples per human environment in substitution sweeps.
pub const HUMAN_FLOOR: usize = 2;

pub const DEFAULT_RBO_P: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Augmentation,
    Substitution,
    FixedTotal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub label: String,
    /// Samples drawn from each environment, in dataset order.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub mode: SweepMode,
    pub step: usize,
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    pub train_config: TrainConfig,
    pub metrics: Vec<Metric>,
    pub rbo_p: f64,
    pub total_budget: Option<usize>,
}

struct OrganismSplit {
    human: Vec<usize>,
    mouse: Vec<usize>,
}

fn split_by_organism(data: &MultiEnvDataset) -> Result<OrganismSplit> {
    let mut split = OrganismSplit {
        human: Vec::new(),
        mouse: Vec::new(),
    };
    for (i, env) in data.environments.iter().enumerate() {
        match env.organism {
            Organism::Human => split.human.push(i),
            Organism::Mouse => split.mouse.push(i),
            Organism::Synthetic => {
                return Err(Error::Invalid(format!(
                    "environment `{}` is synthetic; sweeps mix human and mouse environments",
                    env.id
                )))
            }
        }
    }
    if split.human.is_empty() {
        return Err(Error::Invalid("sweeps need at least one human environment".into()));
    }
    if split.mouse.is_empty() {
        return Err(Error::Invalid("sweeps need at least one mouse environment".into()));
    }
    Ok(split)
}

fn cell_label(data: &MultiEnvDataset, counts: &[usize]) -> String {
    let total = |organism: Organism| -> usize {
        data.environments
            .iter()
            .zip(counts)
            .filter(|(e, _)| e.organism == organism)
            .map(|(_, c)| c)
            .sum()
    };
    format!("H{}+M{}", total(Organism::Human), total(Organism::Mouse))
}

fn plan(
    data: &MultiEnvDataset,
    mode: SweepMode,
    step: usize,
    counts: Vec<Vec<usize>>,
    seeds: &[u64],
    config: &TrainConfig,
) -> SweepPlan {
    SweepPlan {
        mode,
        step,
        cells: counts
            .into_iter()
            .map(|c| Cell {
                label: cell_label(data, &c),
                counts: c,
            })
            .collect(),
        seeds: seeds.to_vec(),
        train_config: config.clone(),
        metrics: Metric::ALL.to_vec(),
        rbo_p: DEFAULT_RBO_P,
        total_budget: None,
    }
}

fn check_step(step: usize) -> Result<()> {
    if step == 0 {
        return Err(Error::Invalid("step must be positive".into()));
    }
    Ok(())
}

/// All human samples in every cell; each cell adds `step` more samples per
/// mouse environment until every mouse sample is included.
pub fn build_augmentation_plan(
    data: &MultiEnvDataset,
    step: usize,
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<SweepPlan> {
    check_step(step)?;
    let split = split_by_organism(data)?;
    let sizes: Vec<usize> = data.environments.iter().map(Environment::n_samples).collect();
    let mut cells = Vec::new();
    for j in 0.. {
        let mut counts = sizes.clone();
        for &m in &split.mouse {
            counts[m] = (j * step).min(sizes[m]);
        }
        let done = split.mouse.iter().all(|&m| counts[m] == sizes[m]);
        cells.push(counts);
        if done {
            break;
        }
    }
    Ok(plan(data, SweepMode::Augmentation, step, cells, seeds, config))
}

/// Starts from all human data plus two samples per mouse environment; each
/// cell removes `step` samples per human environment (never below two) and
/// adds `step` per mouse environment (capped by availability), ending when
/// every human environment is down to two samples.
pub fn build_substitution_plan(
    data: &MultiEnvDataset,
    step: usize,
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<SweepPlan> {
    check_step(step)?;
    let split = split_by_organism(data)?;
    let sizes: Vec<usize> = data.environments.iter().map(Environment::n_samples).collect();
    for &h in &split.human {
        if sizes[h] <= HUMAN_FLOOR {
            return Err(Error::Invalid(format!(
                "substitution needs more than {HUMAN_FLOOR} samples in every human environment; `{}` has {}",
                data.environments[h].id, sizes[h]
            )));
        }
    }
    for &m in &split.mouse {
        if sizes[m] < 2 {
            return Err(Error::Invalid(format!(
                "substitution needs at least 2 samples in every mouse environment; `{}` has {}",
                data.environments[m].id, sizes[m]
            )));
        }
    }
    let mut counts = sizes.clone();
    for &m in &split.mouse {
        counts[m] = 2;
    }
    let mut cells = vec![counts.clone()];
    while split.human.iter().any(|&h| counts[h] > HUMAN_FLOOR) {
        for &h in &split.human {
            counts[h] = counts[h].saturating_sub(step).max(HUMAN_FLOOR);
        }
        for &m in &split.mouse {
            counts[m] = (counts[m] + step).min(sizes[m]);
        }
        cells.push(counts.clone());
    }
    Ok(plan(data, SweepMode::Substitution, step, cells, seeds, config))
}

/// Cells with exactly `budget` samples in total, moving `step` samples at a
/// time from the human to the mouse side. Human environments keep at least
/// two samples each; counts are split across environments of one organism
/// in proportion to their sizes.
pub fn build_fixed_total_plan(
    data: &MultiEnvDataset,
    budget: usize,
    step: usize,
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<SweepPlan> {
    check_step(step)?;
    let split = split_by_organism(data)?;
    let sizes: Vec<usize> = data.environments.iter().map(Environment::n_samples).collect();
    let human_caps: Vec<usize> = split.human.iter().map(|&h| sizes[h]).collect();
    let mouse_caps: Vec<usize> = split.mouse.iter().map(|&m| sizes[m]).collect();
    let human_total: usize = human_caps.iter().sum();
    let mouse_total: usize = mouse_caps.iter().sum();
    let human_min = HUMAN_FLOOR * split.human.len();

    if budget < human_min || budget > human_total + mouse_total {
        return Err(Error::Invalid(format!(
            "budget {budget} is outside the feasible range [{human_min}, {}]",
            human_total + mouse_total
        )));
    }
    let mouse_lo = budget.saturating_sub(human_total);
    let mouse_hi = mouse_total.min(budget - human_min);
    let mut mouse_levels: Vec<usize> = (mouse_lo..=mouse_hi).step_by(step).collect();
    if mouse_levels.last() != Some(&mouse_hi) {
        mouse_levels.push(mouse_hi);
    }

    let mut cells = Vec::with_capacity(mouse_levels.len());
    for m in mouse_levels {
        let (Some(h_alloc), Some(m_alloc)) = (allocate(budget - m, &human_caps), allocate(m, &mouse_caps)) else {
            continue;
        };
        let mut counts = vec![0; sizes.len()];
        for (&h, c) in split.human.iter().zip(h_alloc) {
            counts[h] = c;
        }
        for (&i, c) in split.mouse.iter().zip(m_alloc) {
            counts[i] = c;
        }
        cells.push(counts);
    }
    if cells.is_empty() {
        return Err(Error::Invalid(format!("no feasible cell for budget {budget}")));
    }
    let mut plan = plan(data, SweepMode::FixedTotal, step, cells, seeds, config);
    plan.total_budget = Some(budget);
    Ok(plan)
}

/// Splits `total` across environments with the given capacities. Every
/// environment that receives samples receives at least two; the rest is
/// shared in proportion to spare capacity (largest remainder, ties to the
/// lower index). `None` when no such split exists.
fn allocate(total: usize, caps: &[usize]) -> Option<Vec<usize>> {
    let mut out = vec![0usize; caps.len()];
    if total == 0 {
        return Some(out);
    }
    let mut active = 0;
    for (o, &c) in out.iter_mut().zip(caps) {
        if active * 2 + 2 > total {
            break;
        }
        if c >= 2 {
            *o = 2;
            active += 1;
        }
    }
    let remaining = total - 2 * active;
    let spare: Vec<usize> = out
        .iter()
        .zip(caps)
        .map(|(&o, &c)| if o > 0 { c - o } else { 0 })
        .collect();
    let spare_total: usize = spare.iter().sum();
    if remaining > spare_total || active == 0 {
        return None;
    }
    if remaining == 0 {
        return Some(out);
    }
    let mut remainders = Vec::with_capacity(caps.len());
    let mut given = 0;
    for (i, &s) in spare.iter().enumerate() {
        let num = remaining as u128 * s as u128;
        let base = (num / spare_total as u128) as usize;
        out[i] += base;
        given += base;
        remainders.push((num % spare_total as u128, i));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(remaining - given) {
        out[i] += 1;
    }
    Some(out)
}

impl SweepPlan {
    /// Structural checks of the plan against the dataset it will run on.
    pub fn validate(&self, data: &MultiEnvDataset) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        self.train_config.validate()?;
        if self.cells.is_empty() {
            return bad("plan has no cells".into());
        }
        if self.seeds.is_empty() {
            return bad("plan has no seeds".into());
        }
        if self.metrics.is_empty() {
            return bad("plan requests no metrics".into());
        }
        let mut metrics = self.metrics.clone();
        metrics.sort();
        metrics.dedup();
        if metrics.len() != self.metrics.len() {
            return bad("plan lists a metric twice".into());
        }
        if !(self.rbo_p > 0.0 && self.rbo_p < 1.0) {
            return bad(format!("rbo_p must lie in (0, 1), got {}", self.rbo_p));
        }
        for (metric, k) in [(Metric::Top10, 10), (Metric::Top50, 50)] {
            if self.metrics.contains(&metric) && data.n_features() < k {
                return bad(format!(
                    "{metric} needs at least {k} genes, dataset has {}",
                    data.n_features()
                ));
            }
        }
        if self.metrics.contains(&Metric::KendallTau) && data.n_features() < 2 {
            return bad("tau needs at least 2 genes".into());
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.counts.len() != data.environments.len() {
                return bad(format!(
                    "cell {c} has {} counts for {} environments",
                    cell.counts.len(),
                    data.environments.len()
                ));
            }
            let mut present = 0;
            for (env, &count) in data.environments.iter().zip(&cell.counts) {
                if count > env.n_samples() {
                    return bad(format!(
                        "cell {c} asks for {count} samples from `{}`, which has {}",
                        env.id,
                        env.n_samples()
                    ));
                }
                if count == 1 {
                    return bad(format!(
                        "cell {c} leaves environment `{}` with fewer than 2 samples",
                        env.id
                    ));
                }
                if self.mode == SweepMode::Substitution && env.organism == Organism::Human && count < HUMAN_FLOOR {
                    return bad(format!(
                        "cell {c} keeps {count} samples of human environment `{}`; the floor is {HUMAN_FLOOR}",
                        env.id
                    ));
                }
                present += usize::from(count > 0);
            }
            let needed = if self.train_config.lambda_final > 0.0 { 2 } else { 1 };
            if present < needed {
                return bad(format!(
                    "cell {c} keeps {present} environments, training needs {needed}"
                ));
            }
            if let (SweepMode::FixedTotal, Some(budget)) = (self.mode, self.total_budget) {
                let total: usize = cell.counts.iter().sum();
                if total != budget {
                    return bad(format!("cell {c} totals {total} samples, budget is {budget}"));
                }
            }
        }
        if self.mode == SweepMode::FixedTotal && self.total_budget.is_none() {
            return bad("fixed-total plans need a total_budget".into());
        }
        Ok(())
    }
}

/// Row indices drawn for one environment: the first `count` entries of the
/// (seed, environment) shuffle, returned in ascending order.
pub fn subsample_indices(n_samples: usize, count: usize, seed: u64, env_index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SUBSAMPLE_SALT);
    rng.set_stream(env_index as u64);
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng);
    let mut picked = order[..count.min(n_samples)].to_vec();
    picked.sort_unstable();
    picked
}

/// The training data for one cell at one seed. Environments with a zero
/// count are left out.
pub fn cell_dataset(data: &MultiEnvDataset, cell: &Cell, seed: u64) -> Result<MultiEnvDataset> {
    let envs = data
        .environments
        .iter()
        .zip(&cell.counts)
        .enumerate()
        .filter(|(_, (_, &count))| count > 0)
        .map(|(i, (env, &count))| {
            if count < 2 {
                return Err(Error::Invalid(format!(
                    "cell `{}` leaves environment `{}` with {count} sample",
                    cell.label, env.id
                )));
            }
            env.select_rows(&subsample_indices(env.n_samples(), count, seed, i))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiEnvDataset::new(data.gene_ids.clone(), envs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub label: String,
    pub counts: Vec<usize>,
    pub total_samples: usize,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub cell: usize,
    pub seed: u64,
    pub ranking: Option<RankedFeatureList>,
}

/// Pairwise similarity between cells for one metric: mean over seeds with a
/// 95% confidence interval. `None` where no seed produced both rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub metric: Metric,
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub ci_low: Vec<Vec<Option<f64>>>,
    pub ci_high: Vec<Vec<Option<f64>>>,
    /// Number of seeds contributing to each entry.
    pub support: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub dataset_hash: String,
    pub toolkit_version: String,
    pub confidence_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub plan: SweepPlan,
    pub cells: Vec<CellSummary>,
    pub rankings: Vec<RankingRecord>,
    pub matrices: Vec<SimilarityMatrix>,
    pub provenance: ReportProvenance,
}

impl SweepReport {
    pub fn matrix(&self, metric: Metric) -> Option<&SimilarityMatrix> {
        self.matrices.iter().find(|m| m.metric == metric)
    }

    pub fn ranking(&self, cell: usize, seed: u64) -> Option<&RankedFeatureList> {
        self.rankings
            .iter()
            .find(|r| r.cell == cell && r.seed == seed)
            .and_then(|r| r.ranking.as_ref())
    }
}

pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// `mean ± z · sd / √n` with the sample standard deviation and the two-sided
/// normal quantile for `level`. A single sample gives a degenerate interval.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Invalid("confidence interval of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok((mean, mean));
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * var.sqrt() / n.sqrt();
    Ok((mean - half, mean + half))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn run_cell(
    data: &MultiEnvDataset,
    plan: &SweepPlan,
    cell_index: usize,
    seed: u64,
) -> std::result::Result<RankedFeatureList, String> {
    let cell = &plan.cells[cell_index];
    let subset = cell_dataset(data, cell, seed).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        seed,
        ..plan.train_config.clone()
    };
    let trained = train(&subset, &config).map_err(|e| e.to_string())?;
    let source = format!("cell {cell_index} ({}) seed {seed}", cell.label);
    rank_features(&trained.model, &data.gene_ids, source).map_err(|e| e.to_string())
}

pub fn run_sweep(data: &MultiEnvDataset, plan: &SweepPlan) -> Result<SweepReport> {
    run_sweep_with_workers(data, plan, 1)
}

/// Runs every (cell, seed) task on up to `workers` threads. Output does not
/// depend on the worker count.
pub fn run_sweep_with_workers(data: &MultiEnvDataset, plan: &SweepPlan, workers: usize) -> Result<SweepReport> {
    plan.validate(data)?;
    let tasks: Vec<(usize, u64)> = (0..plan.cells.len())
        .flat_map(|c| plan.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<std::result::Result<RankedFeatureList, String>> =
        pool.install(|| tasks.par_iter().map(|&(c, s)| run_cell(data, plan, c, s)).collect());

    let n_cells = plan.cells.len();
    let n_seeds = plan.seeds.len();
    // outcomes[c * n_seeds + k] is cell c at seed index k.
    let at = |c: usize, k: usize| outcomes[c * n_seeds + k].as_ref().ok();

    let cells = plan
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| CellSummary {
            index: c,
            label: cell.label.clone(),
            counts: cell.counts.clone(),
            total_samples: cell.counts.iter().sum(),
            failures: plan
                .seeds
                .iter()
                .enumerate()
                .filter_map(|(k, &seed)| {
                    outcomes[c * n_seeds + k].as_ref().err().map(|message| CellFailure {
                        seed,
                        message: message.clone(),
                    })
                })
                .collect(),
        })
        .collect();

    let labels: Vec<String> = plan.cells.iter().map(|c| c.label.clone()).collect();
    let mut matrices = Vec::with_capacity(plan.metrics.len());
    for &metric in &plan.metrics {
        let mut values = vec![vec![None; n_cells]; n_cells];
        let mut ci_low = vec![vec![None; n_cells]; n_cells];
        let mut ci_high = vec![vec![None; n_cells]; n_cells];
        let mut support = vec![vec![0usize; n_cells]; n_cells];
        for i in 0..n_cells {
            let ok = (0..n_seeds).filter(|&k| at(i, k).is_some()).count();
            if ok > 0 {
                values[i][i] = Some(1.0);
                ci_low[i][i] = Some(1.0);
                ci_high[i][i] = Some(1.0);
                support[i][i] = ok;
            }
            for j in i + 1..n_cells {
                let mut samples = Vec::with_capacity(n_seeds);
                for k in 0..n_seeds {
                    if let (Some(a), Some(b)) = (at(i, k), at(j, k)) {
                        samples.push(metric.evaluate(a, b, plan.rbo_p)?);
                    }
                }
                if samples.is_empty() {
                    continue;
                }
                let (lo, hi) = confidence_interval(&samples, CONFIDENCE_LEVEL)?;
                let m = mean(&samples);
                for (r, c) in [(i, j), (j, i)] {
                    values[r][c] = Some(m);
                    ci_low[r][c] = Some(lo);
                    ci_high[r][c] = Some(hi);
                    support[r][c] = samples.len();
                }
            }
        }
        matrices.push(SimilarityMatrix {
            metric,
            labels: labels.clone(),
            values,
            ci_low,
            ci_high,
            support,
        });
    }

    let rankings = tasks
        .iter()
        .zip(outcomes)
        .map(|(&(cell, seed), outcome)| RankingRecord {
            cell,
            seed,
            ranking: outcome.ok(),
        })
        .collect();

    Ok(SweepReport {
        plan: plan.clone(),
        cells,
        rankings,
        matrices,
        provenance: ReportProvenance {
            dataset_hash: data.content_hash(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            confidence_level: CONFIDENCE_LEVEL,
        },
    })
}
