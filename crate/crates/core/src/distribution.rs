use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated deviation of the weight total from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Outcome points in `R^d` with nonnegative weights summing to one.
///
/// Every estimated law in the crate (node distributions during tree growth,
/// forest predictions, reference samples) is carried in this form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDistribution {
    points: Array2<f64>,
    weights: Vec<f64>,
}

fn standard(points: Array2<f64>) -> Array2<f64> {
    if points.is_standard_layout() {
        points
    } else {
        points.as_standard_layout().into_owned()
    }
}

impl WeightedDistribution {
    /// Builds a distribution from already-normalized weights.
    pub fn new(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let points = standard(points);
        Self::check_shape(&points, &weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::UnnormalizedInput { sum });
        }
        Ok(Self { points, weights })
    }

    /// Builds a distribution by normalizing nonnegative raw weights.
    pub fn from_unnormalized(points: Array2<f64>, raw: Vec<f64>) -> Result<Self> {
        let points = standard(points);
        Self::check_shape(&points, &raw)?;
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::EmptyRegion);
        }
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    /// Equal weights on every row of `points`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::from_unnormalized(points, vec![1.0; n])
    }

    /// Point mass at `y`.
    pub fn dirac(y: &[f64]) -> Self {
        let points = Array2::from_shape_vec((1, y.len()), y.to_vec()).expect("row shape");
        Self {
            points,
            weights: vec![1.0],
        }
    }

    fn check_shape(points: &Array2<f64>, weights: &[f64]) -> Result<()> {
        if points.nrows() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: weights.len(),
            });
        }
        if points.nrows() == 0 {
            return Err(Error::InvalidDistribution("no support points".into()));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidDistribution(
                "zero-dimensional outcomes".into(),
            ));
        }
        if let Some((i, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} at index {i} is negative or not finite"
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "non-finite outcome value".into(),
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Number of points carrying strictly positive weight.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Iterator over `(point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (ArrayView1<'_, f64>, f64)> {
        self.points
            .axis_iter(Axis(0))
            .zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_unnormalized_and_negative_weights() {
        let pts = array![[0.0], [1.0]];
        assert!(matches!(
            WeightedDistribution::new(pts.clone(), vec![0.5, 0.6]),
            Err(Error::UnnormalizedInput { .. })
        ));
        assert!(WeightedDistribution::new(pts.clone(), vec![1.5, -0.5]).is_err());
        assert!(WeightedDistribution::new(pts, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn normalizes_raw_weights() {
        let d =
            WeightedDistribution::from_unnormalized(array![[0.0], [1.0]], vec![2.0, 4.0]).unwrap();
        assert!((d.weights()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_total_weight_is_an_empty_region() {
        assert!(matches!(
            WeightedDistribution::from_unnormalized(array![[0.0]], vec![0.0]),
            Err(Error::EmptyRegion)
        ));
    }
}
