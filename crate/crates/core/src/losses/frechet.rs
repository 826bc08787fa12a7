use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::LossError;

/// Mean and unbiased covariance of row samples.
pub fn gaussian_fit(samples: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len();
    let d = samples[0].len();
    let mut mu = DVector::zeros(d);
    for s in samples {
        mu += DVector::from_column_slice(s);
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = DVector::from_column_slice(s) - &mu;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    (mu, cov)
}

/// Eigenvalues of a symmetrized matrix with small negative values clamped to zero.
fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, LossError> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-6 * max.max(1.0);
    if min < -tol {
        return Err(LossError::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(eig)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LossError> {
    let eig = psd_eigen(m)?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// The trace of the product root is taken as `Tr((√Σ₁ Σ₂ √Σ₁)^{1/2})`, which is
/// equal and keeps every matrix symmetric.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, LossError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(LossError::TooFewSamples(a.len().min(b.len())));
    }
    let d = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|s| s.len() != d) {
        return Err(LossError::Dimension {
            expected: d,
            actual: bad.len(),
        });
    }
    let (mu1, s1) = gaussian_fit(a);
    let (mu2, s2) = gaussian_fit(b);
    frechet_from_stats(&mu1, &s1, &mu2, &s2)
}

pub fn frechet_from_stats(
    mu1: &DVector<f64>,
    s1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64, LossError> {
    if mu1 == mu2 && s1 == s2 {
        return Ok(0.0);
    }
    let root1 = psd_sqrt(s1)?;
    let inner = &root1 * s2 * &root1;
    let tr_sqrt: f64 = psd_eigen(&inner)?
        .eigenvalues
        .iter()
        .map(|v| v.sqrt())
        .sum();
    let mean_term = (mu1 - mu2).norm_squared();
    let value = mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_shift() {
        let a: Vec<Vec<f64>> = vec![vec![-1.0], vec![1.0], vec![0.0]];
        let b: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] + 1.0]).collect();
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-6);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            frechet_distance(&[vec![1.0]], &[vec![1.0], vec![2.0]]),
            Err(LossError::TooFewSamples(1))
        ));
        let a = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        let b = vec![vec![1.0], vec![0.0]];
        assert!(matches!(
            frechet_distance(&a, &b),
            Err(LossError::Dimension { .. })
        ));
    }
}
