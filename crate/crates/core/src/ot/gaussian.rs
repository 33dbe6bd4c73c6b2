use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataio::EmbeddedDataset;
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-4;
const SYMMETRY_TOL: f64 = 1e-10;

/// Gaussian approximation of one class-conditional feature distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGaussian {
    pub class_id: usize,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{name} covariance is not square")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::Precondition(format!(
            "{name} covariance is asymmetric by {asym:e}"
        )));
    }
    Ok(())
}

/// PSD square root through a symmetric eigendecomposition, eigenvalues
/// clamped at zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Squared 2-Wasserstein distance between two Gaussians:
/// `|m1 - m2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`.
pub fn gaussian_w2_squared(g1: &ClassGaussian, g2: &ClassGaussian) -> Result<f64> {
    let d = g1.mean.len();
    if g2.mean.len() != d || g1.covariance.nrows() != d || g2.covariance.nrows() != d {
        return Err(Error::Shape(format!(
            "Gaussian dimensions differ: {} vs {}",
            d,
            g2.mean.len()
        )));
    }
    check_symmetric("first", &g1.covariance)?;
    check_symmetric("second", &g2.covariance)?;
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    let s1 = psd_sqrt(&g1.covariance);
    let cross = &s1 * &g2.covariance * &s1;
    let cross = (&cross + cross.transpose()) * 0.5;
    let cross_trace: f64 = SymmetricEigen::new(cross)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let bures = g1.covariance.trace() + g2.covariance.trace() - 2.0 * cross_trace;
    Ok((mean_term + bures).max(0.0))
}

/// Per-class mean and unbiased covariance plus `ridge * I`, in ascending
/// class order. Only classes present in `e` are returned.
pub fn class_stats(e: &EmbeddedDataset, ridge: f64) -> Result<Vec<ClassGaussian>> {
    let d = e.dim;
    let mut classes: Vec<usize> = e.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|class| {
            let members: Vec<usize> = (0..e.len()).filter(|&i| e.labels[i] == class).collect();
            if members.len() < 2 {
                return Err(Error::Precondition(format!(
                    "class {class} of {} has {} point(s); covariance needs at least 2",
                    e.source_name,
                    members.len()
                )));
            }
            let n = members.len() as f64;
            let mut mean = DVector::zeros(d);
            for &i in &members {
                mean += DVector::from_column_slice(e.point(i));
            }
            mean /= n;
            let mut cov = DMatrix::zeros(d, d);
            for &i in &members {
                let centered = DVector::from_column_slice(e.point(i)) - &mean;
                cov.ger(1.0, &centered, &centered, 1.0);
            }
            cov /= n - 1.0;
            for k in 0..d {
                cov[(k, k)] += ridge;
            }
            Ok(ClassGaussian {
                class_id: class,
                mean,
                covariance: cov,
            })
        })
        .collect()
}
