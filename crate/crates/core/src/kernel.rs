//! Gaussian kernels on the outcome space, kernel mean embeddings of weighted
//! samples, and the maximum mean discrepancy (MMD) between them.
//!
//! Two evaluation routes are provided: the exact double sum over kernel
//! evaluations, and a random Fourier feature map `z` with
//! `z(y) . z(y') ~ k(y, y')` for which the MMD reduces to the Euclidean
//! distance between weighted feature means.

use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distribution::{WeightedDistribution, NORMALIZATION_TOLERANCE};
use crate::error::{Error, Result};
use crate::rng;

/// Point count above which the median heuristic works on a subsample.
pub const MEDIAN_SUBSAMPLE: usize = 2_000;
const MEDIAN_SEED: u64 = 0x005E_ED0F_BA4D;

/// Kernel families. Only the Gaussian RBF is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[default]
    GaussianRbf,
}

/// Serializable parameters of a [`KernelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default)]
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub dim: usize,
    #[serde(default)]
    pub rff_dim: usize,
    #[serde(default)]
    pub rff_seed: u64,
}

/// A Gaussian kernel `k(y, y') = exp(-|y - y'|^2 / (2 sigma^2))` together
/// with its (optional) random Fourier feature map.
///
/// The frequencies of the feature map are drawn once at construction and are
/// shared by every clone, so split scores computed by different trees are on
/// the same scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "KernelParams", into = "KernelParams")]
pub struct KernelSpec {
    bandwidth: f64,
    dim: usize,
    rff_dim: usize,
    rff_seed: u64,
    /// `rff_dim / 2` frequency vectors of length `dim`, row-major.
    frequencies: Arc<[f64]>,
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.bandwidth == other.bandwidth
            && self.dim == other.dim
            && self.rff_dim == other.rff_dim
            && self.rff_seed == other.rff_seed
    }
}

impl KernelSpec {
    /// Exact-path Gaussian kernel on `R^dim`.
    pub fn gaussian(bandwidth: f64, dim: usize) -> Result<Self> {
        Self::new(bandwidth, dim, 0, 0)
    }

    /// Gaussian kernel with an `rff_dim`-dimensional feature map (`rff_dim`
    /// must be even; zero disables the feature map).
    pub fn new(bandwidth: f64, dim: usize, rff_dim: usize, rff_seed: u64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidKernel(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidKernel("outcome dimension is zero".into()));
        }
        if !rff_dim.is_multiple_of(2) {
            return Err(Error::InvalidKernel(format!(
                "rff_dim must be even, got {rff_dim}"
            )));
        }
        let n_freq = rff_dim / 2;
        let mut rng = rng::stream(rff_seed);
        let frequencies: Vec<f64> = (0..n_freq * dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g / bandwidth
            })
            .collect();
        Ok(Self {
            bandwidth,
            dim,
            rff_dim,
            rff_seed,
            frequencies: frequencies.into(),
        })
    }

    pub fn family(&self) -> KernelFamily {
        KernelFamily::GaussianRbf
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rff_dim(&self) -> usize {
        self.rff_dim
    }

    pub fn rff_seed(&self) -> u64 {
        self.rff_seed
    }

    /// Same bandwidth and frequencies seed, different feature dimension.
    pub fn with_rff_dim(&self, rff_dim: usize) -> Result<Self> {
        Self::new(self.bandwidth, self.dim, rff_dim, self.rff_seed)
    }

    /// Kernel value on raw slices; dimensions are not checked.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-sq / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }

    /// Writes the feature vector of `y` into `out` (length `rff_dim`):
    /// cosine features first, then sine features.
    #[inline]
    pub fn features_into(&self, y: &[f64], out: &mut [f64]) {
        let half = self.rff_dim / 2;
        let scale = (2.0 / self.rff_dim as f64).sqrt();
        for l in 0..half {
            let w = &self.frequencies[l * self.dim..(l + 1) * self.dim];
            let phase: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
            let (s, c) = phase.sin_cos();
            out[l] = scale * c;
            out[half + l] = scale * s;
        }
    }
}

impl TryFrom<KernelParams> for KernelSpec {
    type Error = Error;

    fn try_from(p: KernelParams) -> Result<Self> {
        Self::new(p.bandwidth, p.dim, p.rff_dim, p.rff_seed)
    }
}

impl From<KernelSpec> for KernelParams {
    fn from(k: KernelSpec) -> Self {
        KernelParams {
            family: KernelFamily::GaussianRbf,
            bandwidth: k.bandwidth,
            dim: k.dim,
            rff_dim: k.rff_dim,
            rff_seed: k.rff_seed,
        }
    }
}

fn row_slice<'a>(row: &'a ArrayView1<'_, f64>, buf: &'a mut Vec<f64>) -> &'a [f64] {
    match row.as_slice() {
        Some(s) => s,
        None => {
            buf.clear();
            buf.extend(row.iter().copied());
            buf
        }
    }
}

/// Median of all pairwise Euclidean distances between the rows of `points`.
///
/// Above [`MEDIAN_SUBSAMPLE`] rows, a uniformly random subset of that size
/// (fixed seed) is used. If more than half of the pairs coincide, the median
/// of the nonzero distances is returned so the bandwidth stays positive.
pub fn median_heuristic(points: ArrayView2<'_, f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "median heuristic needs at least 2 points, got {n}"
        )));
    }
    let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = rng::stream(rng::derive(MEDIAN_SEED, rng::label::MEDIAN_HEURISTIC));
        let mut idx = index::sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let m = rows.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        let ya = points.row(rows[a]);
        for &rb in &rows[a + 1..] {
            let yb = points.row(rb);
            let sq: f64 = ya
                .iter()
                .zip(yb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(sq.sqrt());
        }
    }
    let med = median_in_place(&mut dists);
    if med > 0.0 {
        return Ok(med);
    }
    let mut positive: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateSample(
            "all pairwise distances are zero".into(),
        ));
    }
    Ok(median_in_place(&mut positive))
}

/// Median with the midpoint convention for even counts.
fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *upper;
    if len % 2 == 1 {
        hi
    } else {
        let lo = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Gaussian kernel between two outcome vectors.
pub fn kernel_eval(
    y: ArrayView1<'_, f64>,
    y2: ArrayView1<'_, f64>,
    spec: &KernelSpec,
) -> Result<f64> {
    if y.len() != y2.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: y2.len(),
        });
    }
    let (mut b1, mut b2) = (Vec::new(), Vec::new());
    Ok(spec.eval(row_slice(&y, &mut b1), row_slice(&y2, &mut b2)))
}

fn check_pair(p: &WeightedDistribution, q: &WeightedDistribution, spec: &KernelSpec) -> Result<()> {
    for d in [p, q] {
        if d.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: d.dim(),
            });
        }
        let sum: f64 = d.weights().iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::UnnormalizedInput { sum });
        }
    }
    Ok(())
}

fn weighted_kernel_sum(
    p: &WeightedDistribution,
    q: &WeightedDistribution,
    spec: &KernelSpec,
) -> f64 {
    let (pp, qp) = (p.points(), q.points());
    let mut total = 0.0;
    for (i, &wi) in p.weights().iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let yi = pp.row(i);
        let yi = yi.as_slice().expect("standard layout");
        let mut row = 0.0;
        for (j, &wj) in q.weights().iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let yj = qp.row(j);
            row += wj * spec.eval(yi, yj.as_slice().expect("standard layout"));
        }
        total += wi * row;
    }
    total
}

/// Squared MMD between two weighted distributions via the exact double sum,
/// clamped at zero.
pub fn mmd2_exact(
    p: &WeightedDistribution,
    q: &WeightedDistribution,
    spec: &KernelSpec,
) -> Result<f64> {
    check_pair(p, q, spec)?;
    let pp = weighted_kernel_sum(p, p, spec);
    let qq = weighted_kernel_sum(q, q, spec);
    let pq = weighted_kernel_sum(p, q, spec);
    Ok((pp + qq - 2.0 * pq).max(0.0))
}

/// Random Fourier feature vector of `y`.
pub fn rff_features(y: ArrayView1<'_, f64>, spec: &KernelSpec) -> Result<Vec<f64>> {
    if spec.rff_dim() == 0 {
        return Err(Error::ZeroDim);
    }
    if y.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: y.len(),
        });
    }
    let mut buf = Vec::new();
    let mut out = vec![0.0; spec.rff_dim()];
    spec.features_into(row_slice(&y, &mut buf), &mut out);
    Ok(out)
}

/// Weighted mean of feature vectors: the finite-dimensional stand-in for the
/// kernel mean embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMean {
    pub vector: Vec<f64>,
    pub total_weight: f64,
}

impl FeatureMean {
    pub fn of(dist: &WeightedDistribution, spec: &KernelSpec) -> Result<Self> {
        if spec.rff_dim() == 0 {
            return Err(Error::ZeroDim);
        }
        if dist.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: dist.dim(),
            });
        }
        let mut vector = vec![0.0; spec.rff_dim()];
        let mut feat = vec![0.0; spec.rff_dim()];
        let mut total_weight = 0.0;
        for (row, w) in dist.points().axis_iter(Axis(0)).zip(dist.weights()) {
            if *w == 0.0 {
                continue;
            }
            spec.features_into(row.as_slice().expect("standard layout"), &mut feat);
            for (v, f) in vector.iter_mut().zip(&feat) {
                *v += w * f;
            }
            total_weight += w;
        }
        Ok(Self {
            vector,
            total_weight,
        })
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Squared MMD between two weighted distributions through the feature map.
pub fn mmd2_rff(
    p: &WeightedDistribution,
    q: &WeightedDistribution,
    spec: &KernelSpec,
) -> Result<f64> {
    if spec.rff_dim() == 0 {
        return Err(Error::ZeroDim);
    }
    check_pair(p, q, spec)?;
    let mp = FeatureMean::of(p, spec)?;
    let mq = FeatureMean::of(q, spec)?;
    Ok(mp
        .vector
        .iter()
        .zip(&mq.vector)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Squared MMD, choosing the feature-map route when the spec carries one.
pub fn mmd2(p: &WeightedDistribution, q: &WeightedDistribution, spec: &KernelSpec) -> Result<f64> {
    if spec.rff_dim() > 0 {
        mmd2_rff(p, q, spec)
    } else {
        mmd2_exact(p, q, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;

    fn dist(points: Vec<Vec<f64>>, weights: Vec<f64>) -> WeightedDistribution {
        let d = points[0].len();
        let flat: Vec<f64> = points.into_iter().flatten().collect();
        let arr = Array2::from_shape_vec((flat.len() / d, d), flat).unwrap();
        WeightedDistribution::from_unnormalized(arr, weights).unwrap()
    }

    /// Direct quadruple-loop evaluation, independent of the crate's helpers.
    fn naive_mmd2(p: &WeightedDistribution, q: &WeightedDistribution, sigma: f64) -> f64 {
        let k = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
            let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
            (-sq / (2.0 * sigma * sigma)).exp()
        };
        let mut s = 0.0;
        for (a, wa) in p.iter() {
            for (b, wb) in p.iter() {
                s += wa * wb * k(a, b);
            }
            for (b, wb) in q.iter() {
                s -= 2.0 * wa * wb * k(a, b);
            }
        }
        for (a, wa) in q.iter() {
            for (b, wb) in q.iter() {
                s += wa * wb * k(a, b);
            }
        }
        s.max(0.0)
    }

    #[test]
    fn median_heuristic_small_cases() {
        assert_eq!(median_heuristic(array![[0.0], [2.0]].view()).unwrap(), 2.0);
        assert_eq!(
            median_heuristic(array![[0.0], [1.0], [3.0]].view()).unwrap(),
            2.0
        );
    }

    #[test]
    fn median_heuristic_rejects_coincident_points() {
        assert!(matches!(
            median_heuristic(array![[1.0, 1.0], [1.0, 1.0]].view()),
            Err(Error::DegenerateSample(_))
        ));
        assert!(median_heuristic(array![[1.0]].view()).is_err());
    }

    #[test]
    fn median_heuristic_matches_brute_force() {
        let mut rng = rng::stream(11);
        let pts = Array2::from_shape_fn((500, 2), |_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g
        });
        let mut all = Vec::new();
        for i in 0..500 {
            for j in 0..i {
                let d = pts
                    .row(i)
                    .iter()
                    .zip(pts.row(j).iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                all.push(d);
            }
        }
        all.sort_by(f64::total_cmp);
        let m = all.len();
        let brute = if m % 2 == 1 {
            all[m / 2]
        } else {
            0.5 * (all[m / 2 - 1] + all[m / 2])
        };
        let got = median_heuristic(pts.view()).unwrap();
        assert!((got - brute).abs() < 1e-12, "{got} vs {brute}");
    }

    #[test]
    fn median_heuristic_subsamples_large_inputs_deterministically() {
        let mut rng = rng::stream(3);
        let pts = Array2::from_shape_fn((2_500, 1), |_| rng.random::<f64>());
        let a = median_heuristic(pts.view()).unwrap();
        let b = median_heuristic(pts.view()).unwrap();
        assert_eq!(a, b);
        // Uniform(0,1) pairwise distance has median 1 - 1/sqrt(2).
        assert!((a - (1.0 - 0.5f64.sqrt())).abs() < 0.02);
    }

    #[test]
    fn kernel_values() {
        let k = KernelSpec::gaussian(1.3, 2).unwrap();
        let y = array![0.4, -1.0];
        assert_eq!(kernel_eval(y.view(), y.view(), &k).unwrap(), 1.0);

        let sigma = 0.7;
        let k = KernelSpec::gaussian(sigma, 1).unwrap();
        let r = sigma * (2.0 * 2f64.ln()).sqrt();
        let v = kernel_eval(array![0.0].view(), array![r].view(), &k).unwrap();
        assert!((v - 0.5).abs() < 1e-14);

        let k = KernelSpec::gaussian(5.0, 2).unwrap();
        let v = kernel_eval(array![0.0, 0.0].view(), array![3.0, 4.0].view(), &k).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.60653).abs() < 1e-5);

        assert!(matches!(
            kernel_eval(array![0.0].view(), array![0.0, 1.0].view(), &k),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_kernel_specs() {
        assert!(KernelSpec::gaussian(0.0, 1).is_err());
        assert!(KernelSpec::gaussian(f64::NAN, 1).is_err());
        assert!(KernelSpec::new(1.0, 1, 3, 0).is_err());
    }

    #[test]
    fn mmd_exact_closed_forms() {
        let k = KernelSpec::gaussian(2f64.sqrt(), 1).unwrap();
        let p = dist(vec![vec![0.0], vec![1.5]], vec![1.0, 3.0]);
        assert!(mmd2_exact(&p, &p, &k).unwrap().abs() < 1e-12);

        let a = WeightedDistribution::dirac(&[0.0]);
        let b = WeightedDistribution::dirac(&[2.0]);
        let v = mmd2_exact(&a, &b, &k).unwrap();
        assert!((v - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!((v - 1.26424).abs() < 1e-5);
    }

    #[test]
    fn mmd_exact_matches_naive_on_random_sets() {
        let mut rng = rng::stream(5);
        for _ in 0..20 {
            let mk = |rng: &mut rng::StreamRng| {
                let pts: Vec<Vec<f64>> = (0..5)
                    .map(|_| vec![rng.random::<f64>() * 3.0, rng.random::<f64>()])
                    .collect();
                let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
                dist(pts, w)
            };
            let (p, q) = (mk(&mut rng), mk(&mut rng));
            let k = KernelSpec::gaussian(0.8, 2).unwrap();
            let got = mmd2_exact(&p, &q, &k).unwrap();
            assert!((got - naive_mmd2(&p, &q, 0.8)).abs() < 1e-12);
        }
    }

    #[test]
    fn mmd_limits_in_bandwidth() {
        // As sigma -> 0 the kernel becomes the indicator of equality, so
        // MMD^2 -> sum over the merged support of (p(y) - q(y))^2.
        let tiny = KernelSpec::gaussian(1e-6, 1).unwrap();
        let huge = KernelSpec::gaussian(1e6, 1).unwrap();

        let a = WeightedDistribution::dirac(&[0.0]);
        let b = WeightedDistribution::dirac(&[2.0]);
        assert!((mmd2_exact(&a, &b, &tiny).unwrap() - 2.0).abs() < 1e-12);
        assert!(mmd2_exact(&a, &b, &huge).unwrap() < 1e-10);

        // Shared atom at 1 carrying mass 0.5 on both sides.
        let p = dist(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]);
        let q = dist(vec![vec![1.0], vec![2.0]], vec![0.5, 0.5]);
        assert!((mmd2_exact(&p, &q, &tiny).unwrap() - 0.5).abs() < 1e-12);
        assert!(mmd2_exact(&p, &q, &huge).unwrap() < 1e-10);

        let r = dist(vec![vec![3.0], vec![4.0]], vec![0.5, 0.5]);
        assert!((mmd2_exact(&p, &r, &tiny).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mmd_rejects_bad_inputs() {
        let k = KernelSpec::gaussian(1.0, 2).unwrap();
        let p = WeightedDistribution::dirac(&[0.0]);
        let q = WeightedDistribution::dirac(&[0.0]);
        assert!(matches!(
            mmd2_exact(&p, &q, &k),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(mmd2_rff(&p, &q, &k), Err(Error::ZeroDim)));
    }

    #[test]
    fn rff_features_at_origin_and_determinism() {
        let k = KernelSpec::new(1.0, 2, 16, 9).unwrap();
        let f = rff_features(array![0.0, 0.0].view(), &k).unwrap();
        let c = (2.0f64 / 16.0).sqrt();
        assert!(f[..8].iter().all(|&v| (v - c).abs() < 1e-15));
        assert!(f[8..].iter().all(|&v| v == 0.0));

        let y = array![0.3, -2.0];
        let a = rff_features(y.view(), &k).unwrap();
        let b = rff_features(y.view(), &k).unwrap();
        assert_eq!(a, b);
        let k2 = KernelSpec::new(1.0, 2, 16, 9).unwrap();
        assert_eq!(a, rff_features(y.view(), &k2).unwrap());
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 2f64.sqrt() + 1e-12);
        assert!(matches!(
            rff_features(y.view(), &KernelSpec::gaussian(1.0, 2).unwrap()),
            Err(Error::ZeroDim)
        ));
    }

    #[test]
    fn rff_inner_product_approximates_kernel() {
        let k = KernelSpec::new(1.0, 2, 4096, 21).unwrap();
        let mut rng = rng::stream(8);
        let mut err = 0.0;
        for _ in 0..100 {
            let a = array![rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0];
            let b = array![rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0];
            let fa = rff_features(a.view(), &k).unwrap();
            let fb = rff_features(b.view(), &k).unwrap();
            let dot: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
            err += (dot - kernel_eval(a.view(), b.view(), &k).unwrap()).abs();
        }
        assert!(err / 100.0 < 0.02, "mean error {}", err / 100.0);
    }

    #[test]
    fn rff_mmd_identities() {
        let k = KernelSpec::new(1.0, 1, 64, 2).unwrap();
        let p = dist(vec![vec![0.0], vec![1.0]], vec![0.3, 0.7]);
        assert_eq!(mmd2_rff(&p, &p, &k).unwrap(), 0.0);
        let a = WeightedDistribution::dirac(&[1.25]);
        assert_eq!(mmd2_rff(&a, &a.clone(), &k).unwrap(), 0.0);
        let m = FeatureMean::of(&p, &k).unwrap();
        assert!(m.norm() <= 2f64.sqrt() + 1e-9);
        assert!((m.total_weight - 1.0).abs() < 1e-12);
    }

    fn random_cloud(rng: &mut rng::StreamRng, n: usize, shift: f64) -> WeightedDistribution {
        let pts = Array2::from_shape_fn((n, 2), |_| {
            let g: f64 = StandardNormal.sample(&mut *rng);
            g + shift
        });
        let w: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
        WeightedDistribution::from_unnormalized(pts, w).unwrap()
    }

    #[test]
    fn rff_mmd_tracks_exact_with_median_bandwidth() {
        let mut rng = rng::stream(17);
        let mut worst: f64 = 0.0;
        for t in 0..50 {
            let p = random_cloud(&mut rng, 100, 0.0);
            let q = random_cloud(&mut rng, 100, 0.5 * (t % 3) as f64);
            let stacked =
                ndarray::concatenate(Axis(0), &[p.points().view(), q.points().view()]).unwrap();
            let sigma = median_heuristic(stacked.view()).unwrap();
            let k = KernelSpec::new(sigma, 2, 4096, 100 + t).unwrap();
            let diff = (mmd2_rff(&p, &q, &k).unwrap() - mmd2_exact(&p, &q, &k).unwrap()).abs();
            worst = worst.max(diff);
        }
        assert!(worst <= 0.05, "worst {worst}");
    }

    #[test]
    fn rff_error_shrinks_with_dimension() {
        let mut rng = rng::stream(23);
        let (mut small, mut large) = (0.0, 0.0);
        for t in 0..20 {
            let p = random_cloud(&mut rng, 30, 0.0);
            let q = random_cloud(&mut rng, 30, 0.7);
            let exact = mmd2_exact(&p, &q, &KernelSpec::gaussian(1.2, 2).unwrap()).unwrap();
            let k512 = KernelSpec::new(1.2, 2, 512, 1000 + t).unwrap();
            let k8192 = KernelSpec::new(1.2, 2, 8192, 1000 + t).unwrap();
            small += (mmd2_rff(&p, &q, &k512).unwrap() - exact).abs();
            large += (mmd2_rff(&p, &q, &k8192).unwrap() - exact).abs();
        }
        assert!(large <= small, "8192: {large}, 512: {small}");
    }

    #[test]
    fn serde_rebuilds_identical_frequencies() {
        let k = KernelSpec::new(0.9, 2, 32, 44).unwrap();
        let json = serde_json::to_string(&k).unwrap();
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        let y = array![1.0, 2.0];
        assert_eq!(
            rff_features(y.view(), &k).unwrap(),
            rff_features(y.view(), &back).unwrap()
        );
    }

    proptest! {
        #[test]
        fn mmd_exact_is_symmetric_and_permutation_invariant(
            a in proptest::collection::vec((-3.0f64..3.0, 0.01f64..1.0), 1..6),
            b in proptest::collection::vec((-3.0f64..3.0, 0.01f64..1.0), 1..6),
            sigma in 0.1f64..5.0,
        ) {
            let k = KernelSpec::gaussian(sigma, 1).unwrap();
            let mk = |v: &[(f64, f64)]| dist(v.iter().map(|x| vec![x.0]).collect(), v.iter().map(|x| x.1).collect());
            let (p, q) = (mk(&a), mk(&b));
            let pq = mmd2_exact(&p, &q, &k).unwrap();
            let qp = mmd2_exact(&q, &p, &k).unwrap();
            prop_assert!(pq >= 0.0);
            prop_assert!((pq - qp).abs() < 1e-12);
            let mut rev = a.clone();
            rev.reverse();
            prop_assert!((mmd2_exact(&mk(&rev), &q, &k).unwrap() - pq).abs() < 1e-12);
        }

        #[test]
        fn merging_duplicate_atoms_preserves_mmd(
            a in proptest::collection::vec((-3.0f64..3.0, 0.01f64..1.0), 1..5),
            b in proptest::collection::vec((-3.0f64..3.0, 0.01f64..1.0), 1..5),
            split in 0.05f64..0.95,
        ) {
            let k = KernelSpec::gaussian(1.0, 1).unwrap();
            let mk = |v: &[(f64, f64)]| dist(v.iter().map(|x| vec![x.0]).collect(), v.iter().map(|x| x.1).collect());
            let q = mk(&b);
            let merged = mk(&a);
            let mut split_atoms = a.clone();
            let (y0, w0) = split_atoms[0];
            split_atoms[0] = (y0, w0 * split);
            split_atoms.push((y0, w0 * (1.0 - split)));
            let unmerged = mk(&split_atoms);
            let d = (mmd2_exact(&merged, &q, &k).unwrap() - mmd2_exact(&unmerged, &q, &k).unwrap()).abs();
            prop_assert!(d < 1e-12);
        }
    }
}
