//! Distribution-level comparisons on feature vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

pub const DEFAULT_DIVERSITY_SUBSET: usize = 200;

/// Eigenvalues below `-PSD_TOL * max(1, scale)` mean the matrix is not PSD.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl FeatureStats {
    /// Sample mean and unbiased covariance. A single sample gives a zero covariance.
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(invalid("feature statistics need at least one sample"));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(invalid("feature vectors must share a positive dimension"));
        }
        let mut mean = DVector::zeros(d);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut centered = DMatrix::zeros(d, n);
        for (c, f) in features.iter().enumerate() {
            for i in 0..d {
                centered[(i, c)] = f[i] - mean[i];
            }
        }
        let mut cov = if n > 1 { &centered * centered.transpose() / (n - 1) as f64 } else { DMatrix::zeros(d, d) };
        symmetrize(&mut cov);
        Ok(Self { mean, cov, count: n })
    }

    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(invalid(format!("covariance is {}x{}, mean has {d} entries", cov.nrows(), cov.ncols())));
        }
        let s = Self { mean, cov, count };
        s.check_psd()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn check_psd(&self) -> Result<()> {
        let asym = (&self.cov - self.cov.transpose()).amax();
        if asym > PSD_TOL * self.cov.amax().max(1.0) {
            return Err(invalid(format!("covariance is not symmetric (max deviation {asym:e})")));
        }
        psd_eigen(self.cov.clone()).map(|_| ())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Symmetric eigendecomposition with small negative eigenvalues clamped to zero.
fn psd_eigen(mut m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    symmetrize(&mut m);
    let mut eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.amax().max(1.0);
    for l in eig.eigenvalues.iter_mut() {
        if *l < -PSD_TOL * scale {
            return Err(invalid(format!("matrix is not positive semidefinite (eigenvalue {l:e})")));
        }
        *l = l.max(0.0);
    }
    Ok(eig)
}

fn psd_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m)?;
    let s = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose())
}

/// Fréchet distance between two Gaussians.
pub fn fid(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(invalid(format!("feature dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let sa = psd_sqrt(a.cov.clone())?;
    psd_eigen(b.cov.clone())?;
    let inner = &sa * &b.cov * &sa;
    let cross: f64 = psd_eigen(inner)?.eigenvalues.iter().map(|l| l.sqrt()).sum();
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

pub fn fid_features(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    fid(&FeatureStats::from_features(a)?, &FeatureStats::from_features(b)?)
}

/// Mean distance between matched members of two disjoint random subsets.
pub fn diversity(features: &[Vec<f64>], subset: usize, seed: u64) -> Result<f64> {
    let n = features.len();
    if n < 2 {
        return Err(invalid(format!("diversity needs at least 2 samples, got {n}")));
    }
    if subset == 0 {
        return Err(invalid("diversity subset size must be positive"));
    }
    let s = if 2 * subset > n {
        log::warn!("diversity subset {subset} shrunk to {} for {n} samples", n / 2);
        n / 2
    } else {
        subset
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let total: f64 = (0..s).map(|i| l2(&features[idx[i]], &features[idx[s + i]])).sum();
    Ok(total / s as f64)
}

/// Mean distance between paired motion and text features.
pub fn mmdist(motion: &[Vec<f64>], text: &[Vec<f64>]) -> Result<f64> {
    if motion.is_empty() || motion.len() != text.len() {
        return Err(invalid(format!("mmdist needs equal non-empty lists, got {} and {}", motion.len(), text.len())));
    }
    let mut total = 0.0;
    for (m, t) in motion.iter().zip(text) {
        if m.len() != t.len() {
            return Err(invalid(format!("feature dimensions differ: {} vs {}", m.len(), t.len())));
        }
        total += l2(m, t);
    }
    Ok(total / motion.len() as f64)
}

pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: &[f64], cov: DMatrix<f64>) -> FeatureStats {
        FeatureStats::new(DVector::from_column_slice(mean), cov, 10).unwrap()
    }

    #[test]
    fn fid_closed_forms() {
        let a = stats(&[0.0], DMatrix::from_element(1, 1, 1.0));
        let b = stats(&[1.0], DMatrix::from_element(1, 1, 4.0));
        assert!((fid(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let i = DMatrix::identity(3, 3);
        let a = stats(&[0.0, 0.0, 0.0], i.clone());
        let b = stats(&[1.0, -2.0, 0.5], i);
        assert!((fid(&a, &b).unwrap() - 5.25).abs() < 1e-12);
        assert!(fid(&a, &a).unwrap().abs() < 1e-10);
    }

    #[test]
    fn fid_rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(FeatureStats::new(DVector::zeros(2), cov, 2).is_err());
        let a = stats(&[0.0], DMatrix::identity(1, 1));
        let b = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        assert!(fid(&a, &b).is_err());
    }

    #[test]
    fn sample_stats() {
        let f = vec![vec![1.0, 0.0], vec![3.0, 2.0]];
        let s = FeatureStats::from_features(&f).unwrap();
        assert_eq!(s.mean.as_slice(), &[2.0, 1.0]);
        assert_eq!(s.cov, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn diversity_values() {
        let same = vec![vec![1.0, 2.0]; 10];
        assert_eq!(diversity(&same, 200, 3).unwrap(), 0.0);
        let pair = vec![vec![0.0], vec![1.0]];
        for seed in 0..20 {
            assert_eq!(diversity(&pair, 1, seed).unwrap(), 1.0);
        }
        assert!(diversity(&pair[..1], 1, 0).is_err());
        assert_eq!(DEFAULT_DIVERSITY_SUBSET, 200);
    }

    #[test]
    fn mmdist_values() {
        let m = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        let t = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![0.0, -3.0]];
        assert_eq!(mmdist(&m, &t).unwrap(), 2.0);
        assert_eq!(mmdist(&m, &m).unwrap(), 0.0);
        assert!(mmdist(&m, &t[..2]).is_err());
    }
}
