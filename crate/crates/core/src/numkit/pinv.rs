use nalgebra::{DMatrix, DVector, Dyn, SVD};

use crate::error::{Error, Result};

pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// SVD with a reconstruction check. nalgebra's bidiagonal iteration
/// occasionally stops early: a 5×4 block of norm 0.2 came back with
/// `‖UΣVᵀ − M‖ = 3e-7`. Such results are recomputed with a tighter
/// convergence threshold and the better factorization is kept.
pub fn svd(m: &DMatrix<f64>, compute_u: bool, compute_v: bool) -> SVD<f64, Dyn, Dyn> {
    let first = m.clone().svd(true, true);
    let err = reconstruction_error(&first, m);
    let norm = m.norm();
    let mut best = first;
    if err > 1e-13 * norm.max(f64::MIN_POSITIVE) {
        if let Some(retry) = m.clone().try_svd(true, true, 1e-18, 100_000) {
            if reconstruction_error(&retry, m) < err {
                best = retry;
            }
        }
    }
    if !compute_u {
        best.u = None;
    }
    if !compute_v {
        best.v_t = None;
    }
    best
}

fn reconstruction_error(s: &SVD<f64, Dyn, Dyn>, m: &DMatrix<f64>) -> f64 {
    match s.clone().recompose() {
        Ok(r) => (r - m).norm(),
        Err(_) => f64::INFINITY,
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    svd(m, false, false).singular_values
}

/// SVD pseudoinverse. Singular values at or below
/// `rel_tol * sigma_max * max(rows, cols)` are discarded; the count of the
/// kept ones is returned as the numerical rank.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> Result<(DMatrix<f64>, usize)> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::invalid(format!("pinv tolerance {rel_tol} outside (0, 1)")));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("pinv of a matrix with non-finite entries"));
    }
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok((DMatrix::zeros(c, r), 0));
    }
    let svd = svd(m, true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = rel_tol * smax * r.max(c) as f64;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let inv = 1.0 / s;
            // out += v_k * u_k^T / s
            for j in 0..r {
                let uk = u[(j, k)] * inv;
                if uk == 0.0 {
                    continue;
                }
                for i in 0..c {
                    out[(i, j)] += vt[(k, i)] * uk;
                }
            }
        }
    }
    Ok((out, rank))
}

/// Rank with the same cutoff rule as [`pinv`].
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let (r, c) = m.shape();
    if r == 0 || c == 0 || !m.iter().all(|v| v.is_finite()) {
        return 0;
    }
    let sv = singular_values(m);
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = rel_tol * smax * r.max(c) as f64;
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs_hard_case() {
        #[rustfmt::skip]
        let v = [
            -4.117707109463787e-5, -0.002555674148895754, 0.00637411305933237, 0.01911412317549117, -0.08330187863124186,
            -8.957955517943411e-5, 0.005893297317053769, -0.011907608632102237, -0.03995436068945238, 0.1710934713735474,
            0.0002682460904096902, -0.004003093939594291, 0.0035765234149490238, 0.01982944645010216, -0.0800129330123626,
            0.00018987988511826314, -0.000114845571551071, 0.0023202584267239903, 0.006254557405385978, -0.018068561718506876,
        ];
        let m = DMatrix::from_column_slice(5, 4, &v);
        let s = svd(&m, true, true);
        assert!((s.recompose().unwrap() - &m).norm() < 1e-14);
        let (p, r) = pinv(&m, DEFAULT_PINV_TOL).unwrap();
        assert_eq!(r, 4);
        assert!((p * &m - DMatrix::identity(4, 4)).norm() < 1e-9);
    }

    #[test]
    fn identity_and_zero() {
        let (p, r) = pinv(&DMatrix::identity(3, 3), DEFAULT_PINV_TOL).unwrap();
        assert_eq!(r, 3);
        assert!((p - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        let (p, r) = pinv(&DMatrix::zeros(2, 3), DEFAULT_PINV_TOL).unwrap();
        assert_eq!(r, 0);
        assert_eq!(p.shape(), (3, 2));
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn diagonal_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let (p, r) = pinv(&m, DEFAULT_PINV_TOL).unwrap();
        assert_eq!(r, 1);
        let want = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!((p - want).norm() < 1e-15);
    }

    #[test]
    fn rejects_nan() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(pinv(&m, 1e-10), Err(Error::InvalidInput(_))));
    }
}
