use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Points with simplex weights. `points` holds one point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    pub points: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::Precondition("distribution has no points".into()));
        }
        if weights.len() != points.nrows() {
            return Err(Error::Shape(format!(
                "{} weights for {} points",
                weights.len(),
                points.nrows()
            )));
        }
        super::sinkhorn::check_simplex("weights", weights.as_slice())?;
        Ok(DiscreteDistribution { points, weights })
    }

    /// Uniform weights over the rows of `points`.
    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, DVector::from_element(n, 1.0 / n.max(1) as f64))
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// `C[i][j] = |x_i - y_j|^2` for row-point matrices `x` and `y`.
pub fn cost_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "point dimensions differ: {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let d = x.ncols();
    Ok(DMatrix::from_fn(x.nrows(), y.nrows(), |i, j| {
        (0..d).map(|k| (x[(i, k)] - y[(j, k)]).powi(2)).sum()
    }))
}
