//! Self-concordant barriers for the supported domains and the local-norm
//! geometry they induce.
//!
//! Ball of radius `D`: `R(x) = -ln(1 - |x|^2 / D^2)`, a 1-self-concordant
//! barrier. Box with half-widths `h`: `R(x) = -Σ ln(h_i - x_i) - Σ ln(h_i + x_i)`,
//! one log term per facet, so `ν = 2d`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainKind, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    domain: Domain,
    nu: f64,
}

impl Barrier {
    pub fn new(domain: Domain) -> Self {
        let nu = match domain.kind() {
            DomainKind::Ball { .. } => 1.0,
            DomainKind::Box { .. } => 2.0 * domain.dim() as f64,
        };
        Self { domain, nu }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Self-concordance parameter.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn value(&self, x: &Point) -> Result<f64> {
        self.domain.require_interior(x)?;
        Ok(match self.domain.kind() {
            DomainKind::Ball { radius } => {
                let s = x.norm_squared() / (radius * radius);
                -libm::log1p(-s)
            }
            DomainKind::Box { halfwidths } => x
                .iter()
                .zip(halfwidths)
                .map(|(xi, h)| -libm::log(h - xi) - libm::log(h + xi))
                .sum(),
        })
    }

    pub fn gradient(&self, x: &Point) -> Result<DVector<f64>> {
        self.domain.require_interior(x)?;
        Ok(match self.domain.kind() {
            DomainKind::Ball { radius } => {
                let r2 = radius * radius;
                x * (2.0 / (r2 - x.norm_squared()))
            }
            DomainKind::Box { halfwidths } => DVector::from_iterator(
                x.len(),
                x.iter().zip(halfwidths).map(|(xi, h)| 1.0 / (h - xi) - 1.0 / (h + xi)),
            ),
        })
    }

    pub fn hessian(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.domain.require_interior(x)?;
        let d = x.len();
        Ok(match self.domain.kind() {
            DomainKind::Ball { radius } => {
                // 2/(D^2 - |x|^2) I + 4/(D^2 - |x|^2)^2 x x^T
                let slack = radius * radius - x.norm_squared();
                let mut h = x * x.transpose() * (4.0 / (slack * slack));
                for i in 0..d {
                    h[(i, i)] += 2.0 / slack;
                }
                h
            }
            DomainKind::Box { halfwidths } => DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                x.iter().zip(halfwidths).map(|(xi, h)| {
                    let (a, b) = (h - xi, h + xi);
                    1.0 / (a * a) + 1.0 / (b * b)
                }),
            )),
        })
    }

    /// `‖h‖_x = sqrt(hᵀ ∇²R(x) h)`.
    pub fn local_norm(&self, x: &Point, h: &DVector<f64>) -> Result<f64> {
        let hess = self.hessian(x)?;
        Ok(libm::sqrt(h.dot(&(&hess * h)).max(0.0)))
    }

    /// `‖h‖*_x = sqrt(hᵀ [∇²R(x)]⁻¹ h)`, via a Cholesky solve.
    pub fn dual_local_norm(&self, x: &Point, h: &DVector<f64>) -> Result<f64> {
        let hess = self.hessian(x)?;
        let Some(chol) = hess.clone().cholesky() else {
            return Err(Error::Factorization {
                min_eigenvalue: SymmetricEigen::new(hess).eigenvalues.min(),
            });
        };
        let solved = chol.solve(h);
        Ok(libm::sqrt(h.dot(&solved).max(0.0)))
    }
}

/// `H^{-1/2}` together with `H^{1/2}`, both taken from one eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianFactor {
    inv_sqrt: DMatrix<f64>,
    sqrt: DMatrix<f64>,
}

impl HessianFactor {
    /// `A = H^{-1/2}`.
    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    /// `A⁻¹ = H^{1/2}`.
    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn dim(&self) -> usize {
        self.sqrt.nrows()
    }
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn hessian_inverse_sqrt(h: &DMatrix<f64>) -> Result<HessianFactor> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(crate::error::config("Hessian must be a non-empty square matrix"));
    }
    let eig = SymmetricEigen::new(h.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization { min_eigenvalue: min });
    }
    let q = &eig.eigenvectors;
    let scale = |f: fn(f64) -> f64| {
        let mut scaled = q.clone();
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f(*lambda));
        }
        let m = &scaled * q.transpose();
        // Symmetrise away rounding so A stays exactly symmetric.
        (&m + m.transpose()) * 0.5
    };
    Ok(HessianFactor {
        inv_sqrt: scale(|l| 1.0 / libm::sqrt(l)),
        sqrt: scale(libm::sqrt),
    })
}
