//! Honest MMD forests grown on design-bootstrap resamples.
//!
//! Each tree draws its own resample multipliers and PSU-level honesty
//! partition. Split-side units grow the structure with effective weights
//! `n*_i / (q pi_i)`; estimation-side units populate the leaves with weights
//! `n*_i / ((1 - q) pi_i)`. A prediction at `x` averages, over trees whose leaf
//! at `x` holds estimation mass, the leaf-normalized estimation weights.

mod config;
mod honesty;
pub mod split;
mod tree;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ForestConfig, ForestMode, TreeParams};
pub use honesty::{honesty_partition, HonestyPartition};
pub use split::{best_split, split_score, Embedding, NodeData, SplitCandidate, SplitRules};
pub use tree::TreeNode;

use crate::bootstrap::{self, ResampleDraw};
use crate::design::{PsuKey, SurveySample};
use crate::distribution::WeightedDistribution;
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::rng::{self, label};

/// Version of the serialized forest document.
pub const FORMAT_VERSION: u32 = 1;

/// Largest sample for which the fit caches the full outcome Gram matrix.
pub const GRAM_CACHE_LIMIT: usize = 3000;

/// Normalized estimation weights of one leaf.
#[derive(Debug, Clone, PartialEq, Default)]
struct LeafTable {
    units: Vec<usize>,
    weights: Vec<f64>,
    /// Weighted outcome mean of the leaf.
    mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedTree {
    pub root: TreeNode,
    pub partition: HonestyPartition,
    pub resample: ResampleDraw,
    pub seed: u64,
}

/// Per-tree facts for fit logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeSummary {
    pub depth: usize,
    pub leaves: usize,
    pub split_psus: usize,
    pub est_psus: usize,
    pub split_units: usize,
    pub est_units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    config: ForestConfig,
    params: TreeParams,
    kernel: KernelSpec,
    sample: SurveySample,
    trees: Vec<FittedTree>,
    leaves: Vec<Vec<LeafTable>>,
}

/// On-disk form of a [`Forest`]; leaf tables are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestDocument {
    format_version: u32,
    config: ForestConfig,
    params: TreeParams,
    kernel: KernelSpec,
    sample: SurveySample,
    trees: Vec<FittedTree>,
}

/// Honesty group of sample row `i`: its PSU, or the unit itself in naive mode.
fn group_key(sample: &SurveySample, mode: ForestMode, i: usize) -> PsuKey {
    match mode {
        ForestMode::Survey => sample.psu_key(i),
        ForestMode::Naive => PsuKey::new(0, i as u32),
    }
}

fn design_pi(sample: &SurveySample, mode: ForestMode, i: usize) -> f64 {
    match mode {
        ForestMode::Survey => sample.pi()[i],
        ForestMode::Naive => 1.0,
    }
}

/// Effective split-side and estimation-side weights of every sample row for
/// one tree; rows on the other side get zero.
fn side_weights(
    sample: &SurveySample,
    mode: ForestMode,
    q: f64,
    partition: &HonestyPartition,
    multipliers: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = sample.len();
    let (mut split, mut est) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let m = multipliers[i];
        if m <= 0.0 {
            continue;
        }
        let pi = design_pi(sample, mode, i);
        if partition.is_split(&group_key(sample, mode, i)) {
            split[i] = m / (q * pi);
        } else {
            est[i] = m / ((1.0 - q) * pi);
        }
    }
    (split, est)
}

/// Resolves the kernel for `sample`: configured or median-heuristic bandwidth,
/// with Fourier frequencies keyed by the master seed.
pub fn resolve_kernel(sample: &SurveySample, config: &ForestConfig) -> Result<KernelSpec> {
    let bandwidth = match config.bandwidth {
        Some(b) => b,
        None => kernel::median_heuristic(sample.y().view())?,
    };
    KernelSpec::new(
        bandwidth,
        sample.outcome_dim(),
        config.rff_dim,
        rng::derive(config.seed, label::FOREST),
    )
}

fn draw_tree_inputs(
    sample: &SurveySample,
    config: &ForestConfig,
    groups: &[PsuKey],
    seed: u64,
) -> Result<(ResampleDraw, HonestyPartition)> {
    let resample = match config.mode {
        ForestMode::Survey => bootstrap::resample(
            sample,
            &config.bootstrap,
            rng::derive(seed, label::RESAMPLE),
        )?,
        ForestMode::Naive => {
            let draws: Vec<ResampleDraw> = (0..config.bootstrap.average_m)
                .map(|m| {
                    bootstrap::iid_multipliers(
                        sample.len(),
                        rng::derive_path(seed, &[label::RESAMPLE, m as u64]),
                    )
                })
                .collect();
            bootstrap::average_multipliers(&draws)?
        }
    };
    let partition = honesty_partition(groups, config.q, rng::derive(seed, label::HONESTY))?;
    Ok((resample, partition))
}

/// Grows one tree on the split side of `partition`.
pub fn fit_tree(
    sample: &SurveySample,
    resample: &ResampleDraw,
    partition: &HonestyPartition,
    params: &TreeParams,
    kernel: &KernelSpec,
    mode: ForestMode,
    seed: u64,
) -> Result<TreeNode> {
    let features = (kernel.rff_dim() > 0).then(|| split::feature_matrix(sample.y(), kernel));
    let embedding = match &features {
        Some(f) => Embedding::Fourier { features: f },
        None => Embedding::Exact { kernel, gram: None },
    };
    grow_tree(sample, resample, partition, params, embedding, mode, seed)
}

fn grow_tree(
    sample: &SurveySample,
    resample: &ResampleDraw,
    partition: &HonestyPartition,
    params: &TreeParams,
    embedding: Embedding<'_>,
    mode: ForestMode,
    seed: u64,
) -> Result<TreeNode> {
    if resample.len() != sample.len() {
        return Err(Error::MismatchedDraws(format!(
            "{} multipliers for {} units",
            resample.len(),
            sample.len()
        )));
    }
    let (split_w, _) = side_weights(sample, mode, params.q, partition, &resample.multipliers);
    let units: Vec<usize> = (0..sample.len()).filter(|&i| split_w[i] > 0.0).collect();
    if units.is_empty() {
        return Err(Error::EmptySplitSide);
    }
    let data = NodeData {
        x: sample.x(),
        y: sample.y(),
        weights: &split_w,
    };
    let rng = rng::stream(rng::derive(seed, label::TREE));
    Ok(tree::Grower::new(data, embedding, params, rng).grow(units, 0))
}

fn build_leaves(
    sample: &SurveySample,
    mode: ForestMode,
    q: f64,
    tree: &FittedTree,
) -> Vec<LeafTable> {
    let (_, est_w) = side_weights(sample, mode, q, &tree.partition, &tree.resample.multipliers);
    let mut tables = vec![LeafTable::default(); tree.root.n_leaves()];
    for (i, &w) in est_w.iter().enumerate() {
        if w > 0.0 {
            let leaf = tree
                .root
                .leaf_of(sample.x().row(i).as_slice().expect("standard layout"));
            tables[leaf].units.push(i);
            tables[leaf].weights.push(w);
        }
    }
    for t in &mut tables {
        let total: f64 = t.weights.iter().sum();
        t.weights.iter_mut().for_each(|w| *w /= total);
        t.mean = vec![0.0; sample.outcome_dim()];
        for (&i, &w) in t.units.iter().zip(&t.weights) {
            for (m, y) in t.mean.iter_mut().zip(sample.outcome(i)) {
                *m += w * y;
            }
        }
    }
    tables
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Fits `config.n_trees` trees in parallel on the current rayon pool. Tree
/// `b` depends only on the master seed and `b`, so the result does not depend
/// on the number of workers.
pub fn fit_forest(sample: &SurveySample, config: &ForestConfig) -> Result<Forest> {
    let params = config.resolve(sample)?;
    let kernel = resolve_kernel(sample, config)?;
    let groups: Vec<PsuKey> = (0..sample.len())
        .map(|i| group_key(sample, config.mode, i))
        .collect();
    let features = (kernel.rff_dim() > 0).then(|| split::feature_matrix(sample.y(), &kernel));
    let gram = (features.is_none() && sample.len() <= GRAM_CACHE_LIMIT)
        .then(|| split::gram_matrix(sample.y(), &kernel));
    let embedding = match &features {
        Some(f) => Embedding::Fourier { features: f },
        None => Embedding::Exact {
            kernel: &kernel,
            gram: gram.as_ref(),
        },
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|b| {
            let seed = rng::derive_path(config.seed, &[label::TREE, b as u64]);
            let (resample, partition) = draw_tree_inputs(sample, config, &groups, seed)?;
            let root = grow_tree(
                sample,
                &resample,
                &partition,
                &params,
                embedding,
                config.mode,
                seed,
            )?;
            Ok(FittedTree {
                root,
                partition,
                resample,
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Forest::assemble(config.clone(), params, kernel, sample.clone(), trees)
}

impl Forest {
    fn assemble(
        config: ForestConfig,
        params: TreeParams,
        kernel: KernelSpec,
        sample: SurveySample,
        trees: Vec<FittedTree>,
    ) -> Result<Self> {
        let leaves = trees
            .iter()
            .map(|t| build_leaves(&sample, config.mode, params.q, t))
            .collect();
        Ok(Self {
            config,
            params,
            kernel,
            sample,
            trees,
            leaves,
        })
    }

    /// Builds a forest from already-grown trees, e.g. for hand-constructed
    /// ensembles.
    pub fn from_trees(
        sample: SurveySample,
        config: ForestConfig,
        kernel: KernelSpec,
        trees: Vec<FittedTree>,
    ) -> Result<Self> {
        let params = config.resolve(&sample)?;
        let doc = ForestDocument {
            format_version: FORMAT_VERSION,
            config,
            params,
            kernel,
            sample,
            trees,
        };
        Self::try_from(doc)
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn sample(&self) -> &SurveySample {
        &self.sample
    }

    pub fn trees(&self) -> &[FittedTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.sample.n_covariates() {
            return Err(Error::DimensionMismatch {
                expected: self.sample.n_covariates(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "non-finite query covariate".into(),
            ));
        }
        Ok(())
    }

    /// Leaf of `x` in every tree.
    pub fn leaf_signature(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_query(x)?;
        Ok(self.trees.iter().map(|t| t.root.leaf_of(x)).collect())
    }

    /// Aggregation weight of every sample row at `x`.
    pub fn forest_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forest_weights_prefix(x, self.trees.len())
    }

    /// Aggregation weights using only the first `n_trees` trees.
    pub fn forest_weights_prefix(&self, x: &[f64], n_trees: usize) -> Result<Vec<f64>> {
        self.check_query(x)?;
        let mut out = vec![0.0; self.sample.len()];
        let mut contributing = 0usize;
        for (tree, tables) in self.trees.iter().zip(&self.leaves).take(n_trees) {
            let leaf = &tables[tree.root.leaf_of(x)];
            if leaf.units.is_empty() {
                continue;
            }
            contributing += 1;
            for (&i, &w) in leaf.units.iter().zip(&leaf.weights) {
                out[i] += w;
            }
        }
        if contributing == 0 {
            return Err(Error::NoSupport);
        }
        let scale = 1.0 / contributing as f64;
        out.iter_mut().for_each(|w| *w *= scale);
        Ok(out)
    }

    /// Aggregation weights after the first `b` trees for every `b` in
    /// `checkpoints` (ascending); `None` where no tree so far has support.
    pub fn weights_at_prefixes(
        &self,
        x: &[f64],
        checkpoints: &[usize],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        self.check_query(x)?;
        let mut acc = vec![0.0; self.sample.len()];
        let mut contributing = 0usize;
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0usize;
        for &b in checkpoints {
            for (tree, tables) in self.trees.iter().zip(&self.leaves).take(b).skip(done) {
                let leaf = &tables[tree.root.leaf_of(x)];
                if !leaf.units.is_empty() {
                    contributing += 1;
                    for (&i, &w) in leaf.units.iter().zip(&leaf.weights) {
                        acc[i] += w;
                    }
                }
            }
            done = done.max(b);
            out.push((contributing > 0).then(|| {
                let scale = 1.0 / contributing as f64;
                acc.iter().map(|w| w * scale).collect()
            }));
        }
        Ok(out)
    }

    /// Predicted conditional mean after the first `b` trees for every `b` in
    /// `checkpoints` (ascending).
    pub fn mean_at_prefixes(
        &self,
        x: &[f64],
        checkpoints: &[usize],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        self.check_query(x)?;
        let mut acc = vec![0.0; self.sample.outcome_dim()];
        let mut contributing = 0usize;
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0usize;
        for &b in checkpoints {
            for (tree, tables) in self.trees.iter().zip(&self.leaves).take(b).skip(done) {
                let leaf = &tables[tree.root.leaf_of(x)];
                if !leaf.units.is_empty() {
                    contributing += 1;
                    for (a, m) in acc.iter_mut().zip(&leaf.mean) {
                        *a += m;
                    }
                }
            }
            done = done.max(b);
            out.push(
                (contributing > 0).then(|| acc.iter().map(|a| a / contributing as f64).collect()),
            );
        }
        Ok(out)
    }

    /// Estimated conditional law at `x`.
    pub fn predict_distribution(&self, x: &[f64]) -> Result<WeightedDistribution> {
        self.predict_distribution_prefix(x, self.trees.len())
    }

    pub fn predict_distribution_prefix(
        &self,
        x: &[f64],
        n_trees: usize,
    ) -> Result<WeightedDistribution> {
        let w = self.forest_weights_prefix(x, n_trees)?;
        let rows: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
        let points: Array2<f64> = self.sample.y().select(ndarray::Axis(0), &rows);
        let weights: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
        WeightedDistribution::from_unnormalized(points, weights)
    }

    pub fn tree_summaries(&self) -> Vec<TreeSummary> {
        self.trees
            .iter()
            .map(|t| {
                let (split, est) = side_weights(
                    &self.sample,
                    self.config.mode,
                    self.params.q,
                    &t.partition,
                    &t.resample.multipliers,
                );
                TreeSummary {
                    depth: t.root.depth(),
                    leaves: t.root.n_leaves(),
                    split_psus: t.partition.split_psus.len(),
                    est_psus: t.partition.est_psus.len(),
                    split_units: split.iter().filter(|&&w| w > 0.0).count(),
                    est_units: est.iter().filter(|&&w| w > 0.0).count(),
                }
            })
            .collect()
    }

    /// Re-derives honesty and weight-ratio facts from the stored trees.
    pub fn audit(&self) -> ForestAudit {
        let mut audit = ForestAudit::default();
        for t in &self.trees {
            audit.trees += 1;
            let mode = self.config.mode;
            let mut split_groups = std::collections::BTreeSet::new();
            let mut est_groups = std::collections::BTreeSet::new();
            let (split, est) = side_weights(
                &self.sample,
                mode,
                self.params.q,
                &t.partition,
                &t.resample.multipliers,
            );
            for i in 0..self.sample.len() {
                let key = group_key(&self.sample, mode, i);
                if split[i] > 0.0 {
                    split_groups.insert(key);
                }
                if est[i] > 0.0 {
                    est_groups.insert(key);
                }
            }
            if !t.partition.is_disjoint() || !split_groups.is_disjoint(&est_groups) {
                audit.honesty_violations += 1;
            }
            let units: Vec<usize> = (0..split.len()).filter(|&i| split[i] > 0.0).collect();
            self.audit_node(&t.root, units, &split, true, &mut audit);
        }
        audit
    }

    fn audit_node(
        &self,
        node: &TreeNode,
        units: Vec<usize>,
        w: &[f64],
        root: bool,
        audit: &mut ForestAudit,
    ) {
        if !root && !units.is_empty() {
            let hi = units.iter().map(|&i| w[i]).fold(0.0, f64::max);
            let lo = units.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
            let ratio = hi / lo;
            audit.max_node_ratio = audit.max_node_ratio.max(ratio);
            audit.nodes += 1;
            if ratio > self.params.max_weight_ratio {
                audit.weight_ratio_violations += 1;
            }
        }
        if let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            let (l, r): (Vec<usize>, Vec<usize>) = units
                .into_iter()
                .partition(|&i| self.sample.x()[[i, *feature]] <= *threshold);
            self.audit_node(left, l, w, false, audit);
            self.audit_node(right, r, w, false, audit);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ForestDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ForestDocument = serde_json::from_str(s)?;
        Self::try_from(doc)
    }
}

impl From<&Forest> for ForestDocument {
    fn from(f: &Forest) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: f.config.clone(),
            params: f.params,
            kernel: f.kernel.clone(),
            sample: f.sample.clone(),
            trees: f.trees.clone(),
        }
    }
}

impl TryFrom<ForestDocument> for Forest {
    type Error = Error;

    fn try_from(doc: ForestDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "forest format version {} is not supported (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let (n, p) = (doc.sample.len(), doc.sample.n_covariates());
        if doc.kernel.dim() != doc.sample.outcome_dim() {
            return Err(Error::Format(
                "kernel dimension does not match outcomes".into(),
            ));
        }
        for (b, t) in doc.trees.iter().enumerate() {
            if t.resample.len() != n {
                return Err(Error::Format(format!(
                    "tree {b}: multipliers do not cover the sample"
                )));
            }
            if !t.root.has_canonical_ids() {
                return Err(Error::Format(format!(
                    "tree {b}: leaf ids are not canonical"
                )));
            }
            if !features_in_range(&t.root, p) {
                return Err(Error::Format(format!(
                    "tree {b}: split feature out of range"
                )));
            }
        }
        Forest::assemble(doc.config, doc.params, doc.kernel, doc.sample, doc.trees)
    }
}

fn features_in_range(node: &TreeNode, p: usize) -> bool {
    match node {
        TreeNode::Leaf { .. } => true,
        TreeNode::Split {
            feature,
            left,
            right,
            ..
        } => *feature < p && features_in_range(left, p) && features_in_range(right, p),
    }
}

/// Post-fit invariant counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ForestAudit {
    pub trees: usize,
    pub honesty_violations: usize,
    /// Non-root nodes inspected by the weight-ratio check.
    pub nodes: usize,
    pub weight_ratio_violations: usize,
    pub max_node_ratio: f64,
}

impl ForestAudit {
    pub fn is_clean(&self) -> bool {
        self.honesty_violations == 0 && self.weight_ratio_violations == 0
    }
}
