use nalgebra::{DMatrix, DVector};

use super::realize::InternalModelPair;
use crate::error::{Error, Result};
use crate::exo::{ExplicitExosystem, TimeVaryingMatrix};
use crate::numkit::{unvec, vec_of};

/// Singular-value cutoff for the span of the sampled `vec U′`.
pub const BASIS_CUTOFF: f64 = 1e-8;
/// Largest admissible projection residual of a sample onto the basis.
pub const PROJECTION_TOL: f64 = 1e-6;

pub enum BasisSource {
    Samples(Vec<DMatrix<f64>>),
    Explicit(DMatrix<f64>),
}

/// Reduced augmentation: `U′(μ) = L̄(c_μ ⊗ I_ν)` with `vec U′ = L c_μ`.
#[derive(Debug, Clone)]
pub struct AugmentationIM {
    pub l: usize,
    pub nu: usize,
    pub l_prime: usize,
    /// `νl × l′`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// `l × νl′`, the blocks `[U_1 … U_l′]` with `vec U_i` the basis columns.
    pub l_bar: DMatrix<f64>,
}

impl AugmentationIM {
    /// Dimension `νl′` of the augmented generator.
    pub fn q_min(&self) -> usize {
        self.nu * self.l_prime
    }

    /// `c_μ = Lᵀ vec U′`.
    pub fn coefficients(&self, u: &DMatrix<f64>) -> Result<DVector<f64>> {
        if u.shape() != (self.l, self.nu) {
            return Err(Error::invalid(format!("U′ must be {}×{}", self.l, self.nu)));
        }
        let v = vec_of(u);
        let c = self.basis.transpose() * &v;
        let resid = (&v - &self.basis * &c).norm();
        if resid > PROJECTION_TOL * (1.0 + v.norm()) {
            return Err(Error::BasisIncomplete(resid));
        }
        Ok(c)
    }

    /// `U′ = L̄(c ⊗ I_ν)`.
    pub fn reconstruct(&self, c: &DVector<f64>) -> DMatrix<f64> {
        &self.l_bar * kron_col_identity(c, self.nu)
    }

    /// `ω̂0 = (c_μ ⊗ I_ν)ω0`.
    pub fn embed_initial(&self, u: &DMatrix<f64>, omega0: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.coefficients(u)?;
        Ok(kron_col_identity(&c, self.nu) * omega0)
    }
}

fn kron_col_identity(c: &DVector<f64>, nu: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(c.len() * nu, nu);
    for (i, ci) in c.iter().enumerate() {
        for k in 0..nu {
            out[(i * nu + k, k)] = *ci;
        }
    }
    out
}

/// Builds the reduced augmented internal model for outputs `Δ′(t)U′(μ)ω(t)`
/// and its explicit pair `(I_l′ ⊗ Λ, Δ′L̄)`.
pub fn build_augmented_im(
    delta_prime: &TimeVaryingMatrix,
    exo: &ExplicitExosystem,
    source: BasisSource,
) -> Result<(AugmentationIM, InternalModelPair)> {
    let (one, l) = delta_prime.shape();
    if one != 1 || l == 0 {
        return Err(Error::invalid("Δ′ must be a nonempty row"));
    }
    let nu = exo.nu;
    let basis = match source {
        BasisSource::Explicit(b) => {
            if b.nrows() != nu * l || b.ncols() == 0 {
                return Err(Error::invalid(format!("L must have {} rows", nu * l)));
            }
            b
        }
        BasisSource::Samples(samples) => {
            if samples.is_empty() {
                return Err(Error::invalid("no U′ samples"));
            }
            let mut stack = DMatrix::zeros(nu * l, samples.len());
            for (j, u) in samples.iter().enumerate() {
                if u.shape() != (l, nu) {
                    return Err(Error::invalid(format!("U′ sample {j} is not {l}×{nu}")));
                }
                stack.set_column(j, &vec_of(u));
            }
            let svd = crate::numkit::svd(&stack, true, false);
            let u = svd.u.expect("u requested");
            let smax = svd.singular_values.max();
            let mut keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&k| svd.singular_values[k] > BASIS_CUTOFF * smax.max(f64::MIN_POSITIVE))
                .collect();
            keep.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
            let mut basis = DMatrix::zeros(nu * l, keep.len());
            for (j, &k) in keep.iter().enumerate() {
                basis.set_column(j, &u.column(k));
            }
            for j in 0..stack.ncols() {
                let v = stack.column(j).into_owned();
                let resid = (&v - &basis * (basis.transpose() * &v)).norm();
                if resid > PROJECTION_TOL * (1.0 + v.norm()) {
                    return Err(Error::BasisIncomplete(resid));
                }
            }
            basis
        }
    };
    let l_prime = basis.ncols();
    let mut l_bar = DMatrix::zeros(l, nu * l_prime);
    for j in 0..l_prime {
        let block = unvec(basis.column(j).as_slice(), l, nu);
        l_bar.view_mut((0, j * nu), (l, nu)).copy_from(&block);
    }
    let aug = AugmentationIM {
        l,
        nu,
        l_prime,
        basis,
        l_bar: l_bar.clone(),
    };
    let phi = TimeVaryingMatrix::kron_identity(l_prime, exo.lambda().clone());
    let xi = TimeVaryingMatrix::product(delta_prime.clone(), TimeVaryingMatrix::constant(l_bar));
    let pair = InternalModelPair::explicit(phi, xi)?;
    Ok((aug, pair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Side;

    fn exo2() -> ExplicitExosystem {
        let lam = TimeVaryingMatrix::from_fn(2, 2, vec![], |t, _| {
            DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
        });
        ExplicitExosystem::new(lam, 0.0).unwrap()
    }

    #[test]
    fn single_identity_sample() {
        let exo = exo2();
        let dp = TimeVaryingMatrix::constant(DMatrix::from_row_slice(1, 2, &[1.0, -2.0]));
        let (aug, pair) =
            build_augmented_im(&dp, &exo, BasisSource::Samples(vec![DMatrix::identity(2, 2)])).unwrap();
        assert_eq!(aug.l_prime, 1);
        assert_eq!(pair.s, 2);
    }

    #[test]
    fn reproduces_outputs() {
        let exo = exo2();
        let dp = TimeVaryingMatrix::from_fn(1, 2, vec![], |t, _| DMatrix::from_row_slice(1, 2, &[1.0, t.sin()]));
        let pattern = |a: f64, b: f64| DMatrix::from_row_slice(2, 2, &[1.0, a, 0.0, b]);
        let samples = vec![pattern(0.3, -1.0), pattern(2.0, 0.5), pattern(-0.7, 0.1), pattern(1.1, 1.9)];
        let (aug, pair) = build_augmented_im(&dp, &exo, BasisSource::Samples(samples)).unwrap();
        assert_eq!(aug.l_prime, 3);
        let w0 = DVector::from_vec(vec![0.4, -1.3]);
        let u = pattern(-2.5, 3.0);
        let w_hat = aug.embed_initial(&u, &w0).unwrap();
        for &t in &[0.0, 0.7, 3.1, 9.0] {
            let want = dp.eval(t) * &u * exo.omega(t, Side::Right, &w0);
            let got = pair.xi.eval(t) * pair.phi.eval(t) * &w_hat;
            assert!((want - got).norm() < 1e-12);
        }
        assert!(matches!(
            aug.coefficients(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])),
            Err(Error::BasisIncomplete(_))
        ));
    }
}
