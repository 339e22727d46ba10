//! The MMD split criterion and the per-node threshold search.
//!
//! For a node with effective weights `v_i`, a candidate split into children
//! `L` and `R` scores
//!
//! ```text
//! (V_L V_R / V^2) * MMD^2(P_L, P_R)
//! ```
//!
//! where `V_l` is the child's total weight and `P_l` its weight-normalized
//! outcome law. Multiplying out, the score equals
//! `(V_R/V_L * S_LL + V_L/V_R * S_RR - 2 S_LR) / V^2` with
//! `S_AB = sum_{i in A, j in B} v_i v_j k(y_i, y_j)`, which the exact sweep
//! maintains incrementally while units move from the right child to the left.

use ndarray::Array2;

use crate::distribution::WeightedDistribution;
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};

/// Outcomes, covariates and effective weights of the units a tree is grown on,
/// indexed by sample row.
#[derive(Debug, Clone, Copy)]
pub struct NodeData<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a Array2<f64>,
    pub weights: &'a [f64],
}

/// How kernel quantities are obtained during the sweep.
#[derive(Debug, Clone, Copy)]
pub enum Embedding<'a> {
    /// Exact double sums; `gram` optionally caches `k(y_i, y_j)` for every
    /// pair of sample rows.
    Exact {
        kernel: &'a KernelSpec,
        gram: Option<&'a Array2<f64>>,
    },
    /// Random Fourier feature rows, one per sample row.
    Fourier { features: &'a Array2<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub score: f64,
}

/// Constraints a candidate must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRules {
    pub min_node_size: usize,
    pub max_weight_ratio: f64,
    pub threshold_grid: usize,
}

/// Score of splitting `units` at `x[feature] <= threshold`, computed from the
/// two children's weighted outcome laws. Only units with positive weight take
/// part.
pub fn split_score(
    data: &NodeData<'_>,
    units: &[usize],
    feature: usize,
    threshold: f64,
    spec: &KernelSpec,
    min_node_size: usize,
) -> Result<f64> {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for &i in units {
        if data.weights[i] > 0.0 {
            if data.x[[i, feature]] <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
    }
    if left.len() < min_node_size.max(1) || right.len() < min_node_size.max(1) {
        return Err(Error::InvalidSplit("child below minimum node size"));
    }
    let law = |rows: &[usize]| -> Result<(WeightedDistribution, f64)> {
        let w: Vec<f64> = rows.iter().map(|&i| data.weights[i]).collect();
        let total: f64 = w.iter().sum();
        let points = data.y.select(ndarray::Axis(0), rows);
        Ok((WeightedDistribution::from_unnormalized(points, w)?, total))
    };
    let (pl, vl) = law(&left)?;
    let (pr, vr) = law(&right)?;
    let v = vl + vr;
    Ok(vl * vr / (v * v) * kernel::mmd2(&pl, &pr, spec)?)
}

/// Midpoint of `a < b` that still separates them.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Boundary positions `k` (between sorted positions `k` and `k + 1`) at
/// which a threshold is tried: every change of value when there are at most
/// `grid` of them, otherwise the boundaries at the `g / (grid + 1)` weighted
/// quantiles.
fn candidate_boundaries(values: &[f64], weights: &[f64], grid: usize) -> Vec<usize> {
    let n = values.len();
    let changes: Vec<usize> = (0..n.saturating_sub(1))
        .filter(|&k| values[k] < values[k + 1])
        .collect();
    if changes.len() <= grid {
        return changes;
    }
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    let total = acc;
    let mut out: Vec<usize> = Vec::with_capacity(grid);
    for g in 1..=grid {
        let level = g as f64 / (grid + 1) as f64 * total;
        let pos = changes.partition_point(|&k| cum[k] < level);
        if let Some(&k) = changes.get(pos) {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
    }
    out
}

/// Scores every candidate threshold of every feature in `features` and returns
/// them in evaluation order (features as given, thresholds ascending).
/// Candidates violating `rules` are skipped.
pub fn scan_candidates(
    data: &NodeData<'_>,
    units: &[usize],
    features: &[usize],
    embedding: &Embedding<'_>,
    rules: &SplitRules,
) -> Vec<SplitCandidate> {
    let units: Vec<usize> = units
        .iter()
        .copied()
        .filter(|&i| data.weights[i] > 0.0)
        .collect();
    let n = units.len();
    let min_size = rules.min_node_size.max(1);
    if n < 2 * min_size {
        return Vec::new();
    }
    let v: Vec<f64> = units.iter().map(|&i| data.weights[i]).collect();
    let total: f64 = v.iter().sum();
    let mut out = Vec::new();
    let mut sweeper = match embedding {
        Embedding::Exact { kernel, gram } => Sweeper::exact(data, &units, &v, kernel, *gram),
        Embedding::Fourier { features } => Sweeper::fourier(&units, &v, features),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut values = vec![0.0; n];
    let mut sorted_w = vec![0.0; n];
    let mut prefix_lo = vec![0.0; n];
    let mut prefix_hi = vec![0.0; n];
    let mut suffix_lo = vec![0.0; n];
    let mut suffix_hi = vec![0.0; n];
    for &feature in features {
        let col = |a: usize| data.x[[units[a], feature]];
        order.sort_unstable_by(|&a, &b| col(a).total_cmp(&col(b)).then(a.cmp(&b)));
        for (k, &a) in order.iter().enumerate() {
            values[k] = col(a);
            sorted_w[k] = v[a];
        }
        let boundaries: Vec<usize> = candidate_boundaries(&values, &sorted_w, rules.threshold_grid)
            .into_iter()
            .filter(|&k| k + 1 >= min_size && n - (k + 1) >= min_size)
            .collect();
        if boundaries.is_empty() {
            continue;
        }
        if rules.max_weight_ratio.is_finite() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for k in 0..n {
                lo = lo.min(sorted_w[k]);
                hi = hi.max(sorted_w[k]);
                prefix_lo[k] = lo;
                prefix_hi[k] = hi;
            }
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for k in (0..n).rev() {
                lo = lo.min(sorted_w[k]);
                hi = hi.max(sorted_w[k]);
                suffix_lo[k] = lo;
                suffix_hi[k] = hi;
            }
        }
        let ratio_ok = |k: usize| {
            !rules.max_weight_ratio.is_finite()
                || (prefix_hi[k] <= rules.max_weight_ratio * prefix_lo[k]
                    && suffix_hi[k + 1] <= rules.max_weight_ratio * suffix_lo[k + 1])
        };
        sweeper.reset();
        let mut next = 0;
        let last = *boundaries.last().expect("nonempty");
        for (k, &a) in order.iter().enumerate().take(last + 1) {
            sweeper.move_left(a);
            if boundaries[next] != k {
                continue;
            }
            next += 1;
            if ratio_ok(k) {
                out.push(SplitCandidate {
                    feature,
                    threshold: midpoint(values[k], values[k + 1]),
                    score: sweeper.score(total),
                });
            }
        }
    }
    out
}

/// Highest-scoring valid candidate over `features`, ties going to the lower
/// feature index and then the lower threshold.
pub fn best_split(
    data: &NodeData<'_>,
    units: &[usize],
    features: &[usize],
    embedding: &Embedding<'_>,
    rules: &SplitRules,
) -> Option<SplitCandidate> {
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();
    let mut best: Option<SplitCandidate> = None;
    for c in scan_candidates(data, units, &features, embedding, rules) {
        if best.is_none_or(|b| c.score > b.score) {
            best = Some(c);
        }
    }
    best
}

enum Sweeper {
    Exact {
        /// Node Gram matrix, row-major over node-local indices.
        gram: Vec<f64>,
        v: Vec<f64>,
        /// `G v`.
        row: Vec<f64>,
        total_pairs: f64,
        /// `sum_{j in L} v_j G_{aj}` for every node unit `a`.
        left_row: Vec<f64>,
        s_ll: f64,
        s_lr: f64,
        v_l: f64,
    },
    Fourier {
        feats: Vec<f64>,
        dim: usize,
        v: Vec<f64>,
        /// Weighted feature sum of the whole node.
        sum: Vec<f64>,
        left: Vec<f64>,
        v_l: f64,
    },
}

impl Sweeper {
    fn exact(
        data: &NodeData<'_>,
        units: &[usize],
        v: &[f64],
        spec: &KernelSpec,
        cache: Option<&Array2<f64>>,
    ) -> Self {
        let n = units.len();
        let mut gram = vec![0.0; n * n];
        match cache {
            Some(g) => {
                for (a, &i) in units.iter().enumerate() {
                    let src = g.row(i);
                    let dst = &mut gram[a * n..(a + 1) * n];
                    for (b, &j) in units.iter().enumerate() {
                        dst[b] = src[j];
                    }
                }
            }
            None => {
                let rows: Vec<&[f64]> = units
                    .iter()
                    .map(|&i| data.y.row(i).to_slice().expect("standard layout"))
                    .collect();
                for a in 0..n {
                    gram[a * n + a] = 1.0;
                    for b in 0..a {
                        let k = spec.eval(rows[a], rows[b]);
                        gram[a * n + b] = k;
                        gram[b * n + a] = k;
                    }
                }
            }
        }
        let row: Vec<f64> = (0..n)
            .map(|a| {
                gram[a * n..(a + 1) * n]
                    .iter()
                    .zip(v)
                    .map(|(g, w)| g * w)
                    .sum()
            })
            .collect();
        let total_pairs = row.iter().zip(v).map(|(r, w)| r * w).sum();
        Sweeper::Exact {
            gram,
            v: v.to_vec(),
            row,
            total_pairs,
            left_row: vec![0.0; n],
            s_ll: 0.0,
            s_lr: 0.0,
            v_l: 0.0,
        }
    }

    fn fourier(units: &[usize], v: &[f64], features: &Array2<f64>) -> Self {
        let dim = features.ncols();
        let mut feats = Vec::with_capacity(units.len() * dim);
        let mut sum = vec![0.0; dim];
        for (a, &i) in units.iter().enumerate() {
            let z = features.row(i);
            for (s, &zv) in sum.iter_mut().zip(z.iter()) {
                *s += v[a] * zv;
            }
            feats.extend(z.iter().copied());
        }
        Sweeper::Fourier {
            feats,
            dim,
            v: v.to_vec(),
            sum,
            left: vec![0.0; dim],
            v_l: 0.0,
        }
    }

    fn reset(&mut self) {
        match self {
            Sweeper::Exact {
                left_row,
                s_ll,
                s_lr,
                v_l,
                ..
            } => {
                left_row.iter_mut().for_each(|x| *x = 0.0);
                *s_ll = 0.0;
                *s_lr = 0.0;
                *v_l = 0.0;
            }
            Sweeper::Fourier { left, v_l, .. } => {
                left.iter_mut().for_each(|x| *x = 0.0);
                *v_l = 0.0;
            }
        }
    }

    /// Moves node unit `a` from the right child to the left one.
    #[inline]
    fn move_left(&mut self, a: usize) {
        match self {
            Sweeper::Exact {
                gram,
                v,
                row,
                left_row,
                s_ll,
                s_lr,
                v_l,
                ..
            } => {
                let n = v.len();
                let va = v[a];
                let ga = &gram[a * n..(a + 1) * n];
                let la = left_row[a];
                let kaa = ga[a];
                *s_ll += 2.0 * va * la + va * va * kaa;
                *s_lr += va * (row[a] - 2.0 * la - va * kaa);
                for (l, &g) in left_row.iter_mut().zip(ga) {
                    *l += va * g;
                }
                *v_l += va;
            }
            Sweeper::Fourier {
                feats,
                dim,
                v,
                left,
                v_l,
                ..
            } => {
                let z = &feats[a * *dim..(a + 1) * *dim];
                for (l, &zv) in left.iter_mut().zip(z) {
                    *l += v[a] * zv;
                }
                *v_l += v[a];
            }
        }
    }

    fn score(&self, total: f64) -> f64 {
        match self {
            Sweeper::Exact {
                total_pairs,
                s_ll,
                s_lr,
                v_l,
                ..
            } => {
                let v_r = total - v_l;
                let s_rr = total_pairs - s_ll - 2.0 * s_lr;
                let raw = (v_r / v_l) * s_ll + (v_l / v_r) * s_rr - 2.0 * s_lr;
                (raw / (total * total)).max(0.0)
            }
            Sweeper::Fourier { sum, left, v_l, .. } => {
                let v_r = total - v_l;
                let mmd2: f64 = sum
                    .iter()
                    .zip(left)
                    .map(|(s, l)| {
                        let d = l / v_l - (s - l) / v_r;
                        d * d
                    })
                    .sum();
                v_l * v_r / (total * total) * mmd2
            }
        }
    }
}

/// Random Fourier feature rows for every row of `y`.
pub fn feature_matrix(y: &Array2<f64>, spec: &KernelSpec) -> Array2<f64> {
    let d = spec.rff_dim();
    let mut out = Array2::zeros((y.nrows(), d));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let yi = y.row(i);
        spec.features_into(
            yi.as_slice().expect("standard layout"),
            row.as_slice_mut().expect("standard layout"),
        );
    }
    out
}

/// Kernel values between every pair of rows of `y`.
pub fn gram_matrix(y: &Array2<f64>, spec: &KernelSpec) -> Array2<f64> {
    use rayon::prelude::*;
    let n = y.nrows();
    let rows: Vec<&[f64]> = (0..n)
        .map(|i| y.row(i).to_slice().expect("standard layout"))
        .collect();
    let mut g = Array2::zeros((n, n));
    g.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, out)| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = if i == j {
                    1.0
                } else {
                    spec.eval(rows[i], rows[j])
                };
            }
        });
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rules(min: usize, grid: usize) -> SplitRules {
        SplitRules {
            min_node_size: min,
            max_weight_ratio: f64::INFINITY,
            threshold_grid: grid,
        }
    }

    #[test]
    fn two_point_score() {
        let x = array![[0.0], [1.0]];
        let y = array![[0.0], [2.0]];
        let w = [1.0, 1.0];
        let data = NodeData {
            x: &x,
            y: &y,
            weights: &w,
        };
        let spec = KernelSpec::gaussian(2f64.sqrt(), 1).unwrap();
        let s = split_score(&data, &[0, 1], 0, 0.5, &spec, 1).unwrap();
        let expected = 0.25 * 2.0 * (1.0 - (-1.0f64).exp());
        assert!((s - expected).abs() < 1e-15);
        assert!((s - 0.31606).abs() < 1e-5);
        let emb = Embedding::Exact {
            kernel: &spec,
            gram: None,
        };
        let best = best_split(&data, &[0, 1], &[0], &emb, &rules(1, 64)).unwrap();
        assert_eq!(best.threshold, 0.5);
        assert!((best.score - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_children_score_zero() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![[1.0], [5.0], [1.0], [5.0]];
        let w = [1.0; 4];
        let data = NodeData {
            x: &x,
            y: &y,
            weights: &w,
        };
        let spec = KernelSpec::gaussian(1.0, 1).unwrap();
        assert!(
            split_score(&data, &[0, 1, 2, 3], 0, 1.5, &spec, 1)
                .unwrap()
                .abs()
                < 1e-10
        );
    }

    #[test]
    fn undersized_children_are_invalid() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![[0.0], [1.0], [2.0]];
        let w = [1.0, 1.0, 0.0];
        let data = NodeData {
            x: &x,
            y: &y,
            weights: &w,
        };
        let spec = KernelSpec::gaussian(1.0, 1).unwrap();
        assert!(matches!(
            split_score(&data, &[0, 1, 2], 0, 1.5, &spec, 1),
            Err(Error::InvalidSplit(_))
        ));
    }

    #[test]
    fn separable_threshold_is_found() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 80;
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = Array2::from_shape_vec((n, 1), xs.clone()).unwrap();
        let y = Array2::from_shape_fn((n, 1), |(i, _)| if xs[i] < 0.5 { 0.0 } else { 1.0 });
        let w: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
        let data = NodeData {
            x: &x,
            y: &y,
            weights: &w,
        };
        let spec = KernelSpec::gaussian(0.5, 1).unwrap();
        let units: Vec<usize> = (0..n).collect();
        let emb = Embedding::Exact {
            kernel: &spec,
            gram: None,
        };
        let best = best_split(&data, &units, &[0], &emb, &rules(1, 1000)).unwrap();
        let below = xs
            .iter()
            .copied()
            .filter(|&v| v < 0.5)
            .fold(f64::MIN, f64::max);
        let above = xs
            .iter()
            .copied()
            .filter(|&v| v >= 0.5)
            .fold(f64::MAX, f64::min);
        assert!(best.threshold > below && best.threshold < above, "{best:?}");
    }

    #[test]
    fn grid_respects_weighted_quantiles() {
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let mut w = vec![1.0; 100];
        w[..10].iter_mut().for_each(|v| *v = 10.0);
        // Half the mass sits on the first ten values, so the median boundary
        // is at position 9.
        let b = candidate_boundaries(&values, &w, 1);
        assert_eq!(b, vec![9]);
        let all = candidate_boundaries(&[1.0, 1.0, 2.0, 3.0, 3.0], &[1.0; 5], 8);
        assert_eq!(all, vec![1, 2]);
    }

    #[test]
    fn midpoint_separates_neighbours() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }

    fn random_node(
        seed: u64,
        n: usize,
        p: usize,
        d: usize,
    ) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Coarse covariates produce ties.
        let x = Array2::from_shape_fn((n, p), |_| (rng.random::<f64>() * 12.0).floor());
        let y = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 3.0);
        let w = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.15 {
                    0.0
                } else {
                    0.5 + 4.0 * rng.random::<f64>()
                }
            })
            .collect();
        (x, y, w)
    }

    fn exhaustive(
        data: &NodeData<'_>,
        units: &[usize],
        p: usize,
        spec: &KernelSpec,
        min: usize,
    ) -> Option<SplitCandidate> {
        let mut best: Option<SplitCandidate> = None;
        for feature in 0..p {
            let mut vals: Vec<f64> = units
                .iter()
                .filter(|&&i| data.weights[i] > 0.0)
                .map(|&i| data.x[[i, feature]])
                .collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = midpoint(w[0], w[1]);
                if let Ok(score) = split_score(data, units, feature, t, spec, min) {
                    if best.is_none_or(|b| score > b.score) {
                        best = Some(SplitCandidate {
                            feature,
                            threshold: t,
                            score,
                        });
                    }
                }
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sweep_matches_direct_scores(seed in 0u64..10_000, n in 4usize..60, min in 1usize..6) {
            let (x, y, w) = random_node(seed, n, 2, 2);
            let data = NodeData { x: &x, y: &y, weights: &w };
            let spec = KernelSpec::gaussian(0.8, 2).unwrap();
            let units: Vec<usize> = (0..n).collect();
            let gram = gram_matrix(&y, &spec);
            for cache in [None, Some(&gram)] {
                let emb = Embedding::Exact { kernel: &spec, gram: cache };
                for c in scan_candidates(&data, &units, &[0, 1], &emb, &rules(min, 1000)) {
                    let direct = split_score(&data, &units, c.feature, c.threshold, &spec, min).unwrap();
                    prop_assert!((c.score - direct).abs() < 1e-10, "{} vs {}", c.score, direct);
                }
            }
        }

        #[test]
        fn full_grid_attains_exhaustive_maximum(seed in 0u64..10_000, n in 4usize..50) {
            let (x, y, w) = random_node(seed, n, 3, 1);
            let data = NodeData { x: &x, y: &y, weights: &w };
            let spec = KernelSpec::gaussian(1.3, 1).unwrap();
            let units: Vec<usize> = (0..n).collect();
            let emb = Embedding::Exact { kernel: &spec, gram: None };
            let fast = best_split(&data, &units, &[2, 0, 1], &emb, &rules(2, n));
            let slow = exhaustive(&data, &units, 3, &spec, 2);
            match (fast, slow) {
                (Some(a), Some(b)) => prop_assert!((a.score - b.score).abs() < 1e-10),
                (None, None) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }

        #[test]
        fn score_invariant_to_weight_scale(seed in 0u64..10_000, scale in 0.01f64..100.0) {
            let (x, y, w) = random_node(seed, 30, 1, 2);
            let spec = KernelSpec::gaussian(1.0, 2).unwrap();
            let units: Vec<usize> = (0..30).collect();
            let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
            let a = split_score(&NodeData { x: &x, y: &y, weights: &w }, &units, 0, 5.5, &spec, 1);
            let b = split_score(&NodeData { x: &x, y: &y, weights: &scaled }, &units, 0, 5.5, &spec, 1);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn weight_guard_bounds_children(seed in 0u64..10_000, ratio in 1.5f64..8.0) {
            let (x, y, w) = random_node(seed, 40, 1, 1);
            let data = NodeData { x: &x, y: &y, weights: &w };
            let spec = KernelSpec::gaussian(1.0, 1).unwrap();
            let units: Vec<usize> = (0..40).collect();
            let emb = Embedding::Exact { kernel: &spec, gram: None };
            let r = SplitRules { min_node_size: 1, max_weight_ratio: ratio, threshold_grid: 64 };
            for c in scan_candidates(&data, &units, &[0], &emb, &r) {
                for side in [true, false] {
                    let ws: Vec<f64> = units.iter().filter(|&&i| w[i] > 0.0 && (x[[i, 0]] <= c.threshold) == side).map(|&i| w[i]).collect();
                    let hi = ws.iter().copied().fold(0.0, f64::max);
                    let lo = ws.iter().copied().fold(f64::INFINITY, f64::min);
                    prop_assert!(hi <= ratio * lo);
                }
            }
        }
    }

    #[test]
    fn fourier_sweep_tracks_exact() {
        let (x, y, w) = random_node(17, 150, 1, 2);
        let data = NodeData {
            x: &x,
            y: &y,
            weights: &w,
        };
        let exact = KernelSpec::new(1.0, 2, 0, 5).unwrap();
        let rff = exact.with_rff_dim(4096).unwrap();
        let feats = feature_matrix(&y, &rff);
        let units: Vec<usize> = (0..150).collect();
        let a = scan_candidates(
            &data,
            &units,
            &[0],
            &Embedding::Exact {
                kernel: &exact,
                gram: None,
            },
            &rules(5, 64),
        );
        let b = scan_candidates(
            &data,
            &units,
            &[0],
            &Embedding::Fourier { features: &feats },
            &rules(5, 64),
        );
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.threshold, cb.threshold);
            assert!((ca.score - cb.score).abs() < 0.05);
            let direct = split_score(&data, &units, 0, cb.threshold, &rff, 5).unwrap();
            assert!((cb.score - direct).abs() < 1e-10);
        }
    }
}
