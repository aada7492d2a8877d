//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as rounding noise and clipped silently.
pub const PSD_CLIP: f64 = 1e-10;
/// Eigenvalues below this are a genuine constraint violation.
pub const PSD_HARD: f64 = -1e-6;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Symmetric square root with eigenvalues clamped at zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    map_spectrum(m, |x| x.max(0.0).sqrt())
}

/// Apply `f` to the spectrum of a symmetric matrix.
pub fn map_spectrum(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, f(m[(0, 0)]));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Sorted (ascending) eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = if m.nrows() == 1 {
        vec![m[(0, 0)]]
    } else {
        SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect()
    };
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Symmetrize and project onto the PSD cone. Negative eigenvalues down to
/// `PSD_HARD` are clipped to zero; anything lower is an error.
pub fn psd_clip(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = symmetrize(m);
    let min = *sym_eigenvalues(&s).first().unwrap_or(&0.0);
    if min < PSD_HARD {
        return Err(Error::NotPsd(min));
    }
    if min >= 0.0 {
        return Ok(s);
    }
    if min < -PSD_CLIP {
        log::debug!("clipping eigenvalue {min:.3e} to zero");
    }
    Ok(map_spectrum(&s, |x| x.max(0.0)))
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Frobenius inner product.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.7]);
        let r = sym_sqrt(&a);
        assert!((&r * &r - &a).norm() < 1e-12);
    }

    #[test]
    fn sqrt_of_singular_matrix() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.4, 0.0, 0.0]));
        let r = sym_sqrt(&a);
        assert!((r[(0, 0)] - 0.4f64.sqrt()).abs() < 1e-14);
        assert!(r[(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn clip_thresholds() {
        let small = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-8]));
        let c = psd_clip(&small).unwrap();
        assert!(sym_eigenvalues(&c)[0] >= 0.0);
        let bad = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-3]));
        assert!(matches!(psd_clip(&bad), Err(Error::NotPsd(_))));
    }
}
