use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Controllable canonical pair `(F, G)` whose characteristic polynomial has
/// the given roots: `F` is the companion matrix with the negated
/// coefficients in its last row and `G = e_m`.
pub fn build_companion(eigenvalues: &[Complex64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = eigenvalues.len();
    if m == 0 {
        return Err(Error::invalid("empty eigenvalue list"));
    }
    if let Some(l) = eigenvalues.iter().find(|l| !(l.re < 0.0)) {
        return Err(Error::NotHurwitz(format!("eigenvalue {l} is not in the open left half plane")));
    }
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut used = vec![false; m];
    for i in 0..m {
        if used[i] {
            continue;
        }
        used[i] = true;
        if eigenvalues[i].im.abs() <= tol {
            continue;
        }
        let partner = (0..m).find(|&j| !used[j] && (eigenvalues[j] - eigenvalues[i].conj()).norm() <= tol);
        match partner {
            Some(j) => used[j] = true,
            None => {
                return Err(Error::invalid(format!(
                    "eigenvalue {} has no conjugate partner",
                    eigenvalues[i]
                )))
            }
        }
    }
    // Monic polynomial coefficients, lowest degree first.
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &l in eigenvalues {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * l;
        }
        poly = next;
    }
    let mut f = DMatrix::zeros(m, m);
    for i in 0..m - 1 {
        f[(i, i + 1)] = 1.0;
    }
    for k in 0..m {
        f[(m - 1, k)] = -poly[k].re;
    }
    let mut g = DMatrix::zeros(m, 1);
    g[(m - 1, 0)] = 1.0;
    Ok((f, g))
}

/// Parses `a+bi` style literals, one eigenvalue per entry.
pub fn parse_eigenvalues<S: AsRef<str>>(items: &[S]) -> Result<Vec<Complex64>> {
    items
        .iter()
        .map(|s| {
            let s = s.as_ref().trim().replace(' ', "");
            s.parse::<Complex64>()
                .map_err(|_| Error::invalid(format!("cannot parse eigenvalue '{s}'")))
        })
        .collect()
}
