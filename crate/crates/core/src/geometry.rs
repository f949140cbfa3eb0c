//! Centrally symmetric action sets and their shrunk copies.
//!
//! Both supported shapes contain the unit ball, which keeps the standard
//! normalisation of bandit linear optimization (`B_2 ⊆ K`).

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{config, Error, Result};

pub type Point = DVector<f64>;

/// Gauge margin below which a point counts as strictly interior.
pub const INTERIOR_MARGIN: f64 = 1e-9;

/// Slack allowed by membership tests that must accept points built by
/// scaling boundary points.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Largest shrink factor for which the shrunk-set norm bound holds.
pub const MAX_DELTA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Ball { radius: f64 },
    Box { halfwidths: Vec<f64> },
}

/// A convex body symmetric about the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
}

impl Domain {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(config("dimension must be at least 1"));
        }
        if !(radius >= 1.0) || !radius.is_finite() {
            return Err(config(
                "ball radius must be finite and >= 1 so that K contains the unit ball",
            ));
        }
        Ok(Self {
            kind: DomainKind::Ball { radius },
            dim,
        })
    }

    /// Box with explicit per-coordinate half-widths.
    pub fn boxed(halfwidths: Vec<f64>) -> Result<Self> {
        if halfwidths.is_empty() {
            return Err(config("dimension must be at least 1"));
        }
        if halfwidths.iter().any(|h| !(*h >= 1.0) || !h.is_finite()) {
            return Err(config(
                "box half-widths must be finite and >= 1 so that K contains the unit ball",
            ));
        }
        let dim = halfwidths.len();
        Ok(Self {
            kind: DomainKind::Box { halfwidths },
            dim,
        })
    }

    /// Box with the same half-width in every coordinate.
    pub fn cube(dim: usize, halfwidth: f64) -> Result<Self> {
        Self::boxed(alloc::vec![halfwidth; dim])
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> Point {
        Point::zeros(self.dim)
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => 2.0 * radius,
            DomainKind::Box { halfwidths } => 2.0 * libm::sqrt(halfwidths.iter().map(|h| h * h).sum::<f64>()),
        }
    }

    /// Gauge from the center: the smallest `s >= 0` with `x ∈ s·K`.
    pub fn gauge(&self, x: &Point) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if x.iter().any(|v| v.is_nan()) {
            return f64::NAN;
        }
        match &self.kind {
            DomainKind::Ball { radius } => x.norm() / radius,
            DomainKind::Box { halfwidths } => x
                .iter()
                .zip(halfwidths)
                .map(|(xi, h)| libm::fabs(*xi) / h)
                .fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        x.len() == self.dim && self.gauge(x) <= 1.0 + tol
    }

    pub fn is_interior(&self, x: &Point) -> bool {
        x.len() == self.dim && self.gauge(x) <= 1.0 - INTERIOR_MARGIN
    }

    pub(crate) fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim {
            return Err(config(alloc::format!(
                "point has dimension {}, domain has dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub(crate) fn require_interior(&self, x: &Point) -> Result<()> {
        self.check_dim(x)?;
        let gauge = self.gauge(x);
        // NaN compares false, so it is rejected here as well.
        if gauge <= 1.0 - INTERIOR_MARGIN {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                gauge,
                limit: 1.0 - INTERIOR_MARGIN,
            })
        }
    }

    /// Uniformly scaled copy `factor · K`.
    pub fn scaled(&self, factor: f64) -> Domain {
        let kind = match &self.kind {
            DomainKind::Ball { radius } => DomainKind::Ball {
                radius: radius * factor,
            },
            DomainKind::Box { halfwidths } => DomainKind::Box {
                halfwidths: halfwidths.iter().map(|h| h * factor).collect(),
            },
        };
        Domain { kind, dim: self.dim }
    }

    /// Largest `α` with `x + α p ∈ K` for interior `x` (infinite if the ray
    /// never exits).
    pub fn ray_exit(&self, x: &Point, p: &DVector<f64>) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => {
                let a = p.norm_squared();
                if a == 0.0 {
                    return f64::INFINITY;
                }
                let b = x.dot(p);
                let slack = radius * radius - x.norm_squared();
                slack / (b + libm::sqrt(b * b + a * slack))
            }
            DomainKind::Box { halfwidths } => p
                .iter()
                .zip(x.iter())
                .zip(halfwidths)
                .map(|((pi, xi), h)| {
                    if *pi > 0.0 {
                        (h - xi) / pi
                    } else if *pi < 0.0 {
                        (h + xi) / -pi
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Minkowski gauge of `z` with pole `x`: `inf { t >= 0 : x + (z - x)/t ∈ K }`.
    ///
    /// `x` must be interior and `z` in `K`; the result lies in `[0, 1]`, with 1
    /// attained only on the boundary.
    pub fn minkowski_gauge(&self, x: &Point, z: &Point) -> Result<f64> {
        self.require_interior(x)?;
        self.check_dim(z)?;
        let outer = self.gauge(z);
        if !(outer <= 1.0 + MEMBERSHIP_TOL) {
            return Err(Error::DomainViolation {
                gauge: outer,
                limit: 1.0,
            });
        }
        let w = z - x;
        let pi = match &self.kind {
            DomainKind::Ball { radius } => {
                // Larger root of |x + w/t| = r written to avoid cancellation:
                // 1/t = (x·w + sqrt((x·w)^2 + |w|^2 (r^2 - |x|^2))) / (r^2 - |x|^2).
                let slack = radius * radius - x.norm_squared();
                let b = x.dot(&w);
                let disc = b * b + w.norm_squared() * slack;
                (b + libm::sqrt(disc.max(0.0))) / slack
            }
            DomainKind::Box { halfwidths } => w
                .iter()
                .zip(x.iter())
                .zip(halfwidths)
                .map(|((wi, xi), h)| {
                    if *wi > 0.0 {
                        wi / (h - xi)
                    } else if *wi < 0.0 {
                        -wi / (h + xi)
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max),
        };
        Ok(pi.clamp(0.0, 1.0))
    }
}

/// `K_δ = (1 - δ) K` for `δ ∈ (0, 2/3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkDomain {
    base: Domain,
    delta: f64,
}

impl ShrunkDomain {
    pub fn base(&self) -> &Domain {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn scale(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.base.dim() && self.base.gauge(x) / self.scale() <= 1.0 + MEMBERSHIP_TOL
    }

    /// The shrunk set as a standalone domain.
    pub fn as_domain(&self) -> Domain {
        self.base.scaled(self.scale())
    }
}

pub fn shrink(domain: &Domain, delta: f64) -> Result<ShrunkDomain> {
    if !(delta > 0.0 && delta <= MAX_DELTA) {
        return Err(config(alloc::format!("shrink factor {delta} outside (0, 2/3]")));
    }
    Ok(ShrunkDomain {
        base: domain.clone(),
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    #[test]
    fn rejects_domains_smaller_than_unit_ball() {
        assert!(Domain::ball(3, 0.5).is_err());
        assert!(Domain::ball(0, 5.0).is_err());
        assert!(Domain::boxed(vec![1.0, 0.9]).is_err());
        assert!(Domain::boxed(vec![]).is_err());
    }

    #[test]
    fn diameters() {
        assert_eq!(Domain::ball(5, 5.0).unwrap().diameter(), 10.0);
        let b = Domain::boxed(vec![3.0, 4.0]).unwrap();
        assert!((b.diameter() - 10.0).abs() < 1e-15);
    }

    #[test]
    fn shrink_scales_ball_radius() {
        let k = Domain::ball(3, 5.0).unwrap();
        let s = shrink(&k, 0.2).unwrap();
        match s.as_domain().kind() {
            DomainKind::Ball { radius } => assert!((radius - 4.0).abs() < 1e-15),
            _ => unreachable!(),
        }
        assert!(shrink(&k, 0.7).is_err());
        assert!(shrink(&k, 0.0).is_err());
        assert!(shrink(&k, MAX_DELTA).is_ok());
    }

    #[test]
    fn shrunk_membership_at_scaled_boundary() {
        for k in [Domain::ball(2, 5.0).unwrap(), Domain::cube(2, 2.0).unwrap()] {
            let boundary = match k.kind() {
                DomainKind::Ball { radius } => p(&[radius * 0.6, radius * 0.8]),
                DomainKind::Box { halfwidths } => p(&[halfwidths[0], 0.3]),
            };
            assert!((k.gauge(&boundary) - 1.0).abs() < 1e-15);
            for delta in [0.1, 0.5, MAX_DELTA] {
                let s = shrink(&k, delta).unwrap();
                assert!(s.contains(&(&boundary * (1.0 - delta))));
                assert!(!s.contains(&boundary));
            }
        }
    }

    #[test]
    fn gauge_from_center_and_self() {
        let k = Domain::ball(2, 1.0).unwrap();
        let x = p(&[0.0, 0.0]);
        assert_eq!(k.minkowski_gauge(&x, &p(&[0.5, 0.0])).unwrap(), 0.5);
        let x = p(&[0.3, -0.2]);
        assert_eq!(k.minkowski_gauge(&x, &x).unwrap(), 0.0);
        assert!(k.minkowski_gauge(&x, &p(&[1.5, 0.0])).is_err());
        assert!(k.minkowski_gauge(&p(&[1.0, 0.0]), &x).is_err());
    }

    /// Ray exit point by bisection on membership, independent of the closed form.
    fn gauge_by_bisection(k: &Domain, x: &Point, z: &Point) -> f64 {
        let w = z - x;
        // Largest s with x + s w ∈ K; gauge is 1/s.
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while k.gauge(&(x + &w * hi)) <= 1.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if k.gauge(&(x + &w * mid)) <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        1.0 / lo
    }

    #[test]
    fn gauge_matches_bisection() {
        let k = Domain::ball(2, 1.0).unwrap();
        let (x, z) = (p(&[0.5, 0.0]), p(&[0.9, 0.0]));
        let got = k.minkowski_gauge(&x, &z).unwrap();
        assert!((got - 0.8).abs() < 1e-15);
        assert!((got - gauge_by_bisection(&k, &x, &z)).abs() < 1e-12);

        let cases = [
            (
                Domain::ball(3, 5.0).unwrap(),
                p(&[1.0, -2.0, 0.5]),
                p(&[-3.0, 2.5, 1.0]),
            ),
            (
                Domain::boxed(vec![1.0, 2.0, 3.0]).unwrap(),
                p(&[0.2, -1.0, 2.0]),
                p(&[-0.9, 1.5, -2.0]),
            ),
        ];
        for (k, x, z) in cases {
            let got = k.minkowski_gauge(&x, &z).unwrap();
            assert!((got - gauge_by_bisection(&k, &x, &z)).abs() < 1e-12, "{got}");
        }
    }
}
