//! Dense linear algebra helpers: thresholded null spaces, orthonormal
//! complements, Gram-Schmidt and spectral radius estimates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

/// Relative SVD threshold for kernels of restricted maps.
pub const KERNEL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Orthonormal basis, one column per null direction.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
}

fn ambiguity(sv: &[f64], thr: f64, context: &str) -> Result<()> {
    if let Some(&s) = sv.iter().find(|&&s| s > thr / 10.0 && s < thr * 10.0) {
        return Err(Error::ThresholdAmbiguous {
            sigma: s,
            threshold: thr,
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Null space of `a` with singular values below `rel * σ_max` treated as zero.
pub fn null_space(a: &DMatrix<f64>, rel: f64, context: &str) -> Result<NullSpace> {
    null_space_scaled(a, rel, 0.0, context)
}

/// As [`null_space`], with the threshold `rel * max(σ_max, scale)`.
pub fn null_space_scaled(a: &DMatrix<f64>, rel: f64, scale: f64, context: &str) -> Result<NullSpace> {
    let (r, c) = a.shape();
    if c == 0 {
        return Ok(NullSpace {
            basis: DMatrix::zeros(r, 0),
            singular_values: vec![],
            threshold: 0.0,
        });
    }
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().cloned().fold(scale, f64::max);
    let thr = rel * smax;
    if smax > 0.0 {
        ambiguity(&sv, thr, context)?;
    }
    let cols: Vec<DVector<f64>> = sv
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= thr || smax == 0.0)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    let basis = if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(NullSpace {
        basis,
        singular_values: sv,
        threshold: thr,
    })
}

/// Null space of a real symmetric matrix via its eigendecomposition.
pub fn symmetric_null_space(a: &DMatrix<f64>, rel: f64, context: &str) -> Result<NullSpace> {
    let n = a.nrows();
    if n == 0 {
        return Ok(NullSpace {
            basis: DMatrix::zeros(0, 0),
            singular_values: vec![],
            threshold: 0.0,
        });
    }
    let eig = SymmetricEigen::new(a.clone());
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|e| e.abs()).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let thr = rel * smax;
    if smax > 0.0 {
        ambiguity(&sv, thr, context)?;
    }
    let cols: Vec<DVector<f64>> = sv
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= thr || smax == 0.0)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    let basis = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let mut sorted = sv;
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(NullSpace {
        basis,
        singular_values: sorted,
        threshold: thr,
    })
}

/// Modified Gram-Schmidt; columns falling below `tol` (relative) are dropped.
pub fn gram_schmidt(vectors: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let norm0 = v.norm();
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let nw = w.norm();
        if nw > tol * norm0.max(f64::MIN_POSITIVE) {
            out.push(w / nw);
        }
    }
    out
}

pub fn columns_to_matrix(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// Entries this small drive the symmetric eigensolver into NaNs.
fn flush(x: f64) -> f64 {
    if x.abs() < 1e-150 {
        0.0
    } else {
        x
    }
}

/// Orthonormal basis of the complement of `span(sub)` inside `span(outer)`.
///
/// Both arguments have orthonormal columns and `span(sub) ⊂ span(outer)`.
pub fn complement_within(outer: &DMatrix<f64>, sub: &DMatrix<f64>) -> DMatrix<f64> {
    let n = outer.nrows();
    let d = outer.ncols();
    if sub.ncols() == 0 {
        return outer.clone();
    }
    if d == 0 {
        return DMatrix::zeros(n, 0);
    }
    // coefficients of sub in the outer basis, then the orthogonal complement
    let c = outer.transpose() * sub;
    let proj = (DMatrix::<f64>::identity(d, d) - &c * c.transpose()).map(flush);
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.5)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    outer * DMatrix::from_columns(&cols)
}

/// Orthonormal basis of the orthogonal complement of `span(sub)` in `R^n`.
pub fn complement(n: usize, sub: &DMatrix<f64>) -> DMatrix<f64> {
    complement_within(&DMatrix::identity(n, n), sub)
}

pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

/// Largest singular value by power iteration on `a^* a`.
pub fn operator_norm(a: &DMatrix<C64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.nrows().min(a.ncols()) <= 64 {
        return a.clone().svd(false, false).singular_values.max();
    }
    let mut v = DVector::<C64>::from_fn(a.ncols(), |i, _| C64::new(1.0 + (i as f64 * 0.7).sin(), 0.3));
    let mut est = 0.0;
    for _ in 0..500 {
        v /= C64::new(v.norm(), 0.0);
        let w = a.adjoint() * (a * &v);
        let e = w.norm().sqrt();
        let done = (e - est).abs() <= 1e-12 * e;
        est = e;
        v = w;
        if done {
            break;
        }
    }
    est
}

/// Spectral radius estimate `||X^{64}||^{1/64}` by repeated squaring.
pub fn spectral_radius(x: &DMatrix<C64>) -> f64 {
    let mut p = x.clone();
    let mut log_scale = 0.0;
    for _ in 0..6 {
        let nrm = p.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        // keep the powers normalized: (X^k / c)^2
        p /= C64::new(nrm, 0.0);
        log_scale = 2.0 * (log_scale + nrm.ln());
        p = cmul(&p, &p);
    }
    let nrm = operator_norm(&p);
    if nrm == 0.0 {
        return 0.0;
    }
    ((log_scale + nrm.ln()) / 64.0).exp()
}

/// Complex product through four real products, which take the blocked real kernel.
pub fn cmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|c| c.re), a.map(|c| c.im));
    let (br, bi) = (b.map(|c| c.re), b.map(|c| c.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// `a^T b` for real `a`, as used for projections onto real bases.
pub fn real_t_complex(a: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let re = a.transpose() * b.map(|c| c.re);
    let im = a.transpose() * b.map(|c| c.im);
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

pub fn complex_real(a: &DMatrix<C64>, b: &DMatrix<f64>) -> DMatrix<C64> {
    let re = a.map(|c| c.re) * b;
    let im = a.map(|c| c.im) * b;
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

pub fn inverse(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    a.clone().try_inverse()
}

/// Smallest singular value.
pub fn min_singular(a: &DMatrix<C64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    a.clone().svd(false, false).singular_values.min()
}

pub fn max_abs(a: &DMatrix<C64>) -> f64 {
    a.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let ns = null_space(&a, 1e-8, "test").unwrap();
        assert_eq!(ns.basis.ncols(), 2);
        assert!((&a * &ns.basis).norm() < 1e-12);
    }

    #[test]
    fn ambiguous_threshold_reported() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2e-8]));
        assert!(matches!(
            null_space(&a, 1e-8, "test"),
            Err(Error::ThresholdAmbiguous { .. })
        ));
    }

    #[test]
    fn complements() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]) / 2f64.sqrt();
        let c = complement(3, &v);
        assert_eq!(c.ncols(), 2);
        assert!((v.transpose() * &c).norm() < 1e-14);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn radius_of_nilpotent_and_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(0.3, 0.0),
            C64::new(0.0, -0.6),
        ]));
        assert!((spectral_radius(&d) - 0.6).abs() < 1e-10);
        let mut n = DMatrix::<C64>::zeros(3, 3);
        n[(0, 1)] = C64::new(5.0, 0.0);
        assert!(spectral_radius(&n) < 1e-10);
    }
}
