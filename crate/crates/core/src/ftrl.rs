//! The regularized-leader program `argmin_{x ∈ (1-δ)K} ⟨L, x⟩ + R(x)` where
//! `L = η Σ g_τ` and `R` is the barrier of the full set `K`.
//!
//! For the ball the objective only depends on the radius along `-L`, and for
//! the box it separates per coordinate. In both cases the one-dimensional
//! stationarity condition `c + 2u/(h² - u²) = 0` is a quadratic whose root is
//! taken in cancellation-free form, then clamped onto the shrunk set.

use nalgebra::DVector;

use crate::barrier::Barrier;
use crate::error::{config, Error, Result};
use crate::geometry::{DomainKind, Point, INTERIOR_MARGIN};

#[derive(Debug, Clone, PartialEq)]
pub struct FtrlSolution {
    pub x: Point,
    /// Relative first-order optimality residual (projected for clamped
    /// coordinates).
    pub residual: f64,
    /// Whether the shrunk-set constraint is active at the solution.
    pub clamped: bool,
    pub iterations: usize,
}

/// Root in `[0, h)` of `c + 2u/(h² - u²) = 0` for `c >= 0`, reflected: returns
/// the minimiser `u <= 0` of `c u - ln(h² - u²)`.
fn radial_minimizer(c: f64, h: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let ch = c * h;
    // u = (1 - sqrt(1 + c²h²)) / c, rewritten to avoid cancellation.
    -(ch * h) / (1.0 + libm::sqrt(1.0 + ch * ch))
}

/// Derivative of `c u - ln(h - u) - ln(h + u)`.
fn radial_derivative(c: f64, u: f64, h: f64) -> f64 {
    c + 2.0 * u / (h * h - u * u)
}

/// Largest admissible gauge: the shrunk boundary for `δ > 0`, and the
/// interior margin of `K` otherwise.
fn gauge_cap(delta: f64) -> f64 {
    (1.0 - delta).min(1.0 - INTERIOR_MARGIN)
}

/// Solve the regularized-leader program on the shrunk set `(1 - δ)K`.
pub fn solve(barrier: &Barrier, scaled_sum: &DVector<f64>, delta: f64, tolerance: f64) -> Result<FtrlSolution> {
    let domain = barrier.domain();
    domain.check_dim(scaled_sum)?;
    if !(0.0..=crate::geometry::MAX_DELTA).contains(&delta) {
        return Err(config("delta must lie in [0, 2/3]"));
    }
    if scaled_sum.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant("non-finite cumulative loss estimate".into()));
    }
    let cap = gauge_cap(delta);
    let (x, residual, clamped) = match domain.kind() {
        DomainKind::Ball { radius } => {
            let c = scaled_sum.norm();
            if c == 0.0 {
                (domain.center(), 0.0, false)
            } else {
                let free = -radial_minimizer(c, *radius);
                let limit = cap * radius;
                let (r, clamped) = if free > limit { (limit, true) } else { (free, false) };
                let slope = radial_derivative(c, -r, *radius);
                // At the clamp the radial derivative must push outward
                // (non-negative multiplier), otherwise it must vanish.
                let residual = if clamped { (-slope).max(0.0) } else { slope.abs() };
                (scaled_sum * (-r / c), residual / (1.0 + c), clamped)
            }
        }
        DomainKind::Box { halfwidths } => {
            let mut any_clamped = false;
            let mut worst = 0.0_f64;
            let x = DVector::from_iterator(
                scaled_sum.len(),
                scaled_sum.iter().zip(halfwidths).map(|(c, h)| {
                    let free = if *c == 0.0 {
                        0.0
                    } else {
                        libm::copysign(radial_minimizer(c.abs(), *h), -c)
                    };
                    let limit = cap * h;
                    let (u, clamped) = if free.abs() > limit {
                        (libm::copysign(limit, free), true)
                    } else {
                        (free, false)
                    };
                    any_clamped |= clamped;
                    let slope = radial_derivative(*c, u, *h);
                    // Clamped at -limit needs slope >= 0, at +limit slope <= 0.
                    let r = if clamped {
                        (slope * u.signum()).max(0.0)
                    } else {
                        slope.abs()
                    };
                    worst = worst.max(r / (1.0 + c.abs()));
                    u
                }),
            );
            (x, worst, any_clamped)
        }
    };
    if !(residual <= tolerance) {
        return Err(Error::Solver {
            iterations: 1,
            residual,
        });
    }
    Ok(FtrlSolution {
        x,
        residual,
        clamped,
        iterations: 1,
    })
}

/// Domain-agnostic path: line-searched Newton on `⟨L, x⟩ + R(x)` started at
/// the center, with every step truncated so the iterate keeps gauge at most
/// `1 - 1e-9` relative to `(1 - δ)K`.
///
/// Converges to the program's solution whenever that solution is interior to
/// the shrunk set; when the shrink constraint binds it stalls at the boundary
/// and reports a solver error with the final Newton decrement.
pub fn solve_damped_newton(
    barrier: &Barrier,
    scaled_sum: &DVector<f64>,
    delta: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<FtrlSolution> {
    let domain = barrier.domain();
    domain.check_dim(scaled_sum)?;
    let shrunk = barrier.domain().scaled(1.0 - delta);
    let objective = |x: &Point| -> Result<f64> { Ok(scaled_sum.dot(x) + barrier.value(x)?) };

    let mut x = domain.center();
    let mut value = objective(&x)?;
    for iteration in 1..=max_iterations {
        let grad = scaled_sum + barrier.gradient(&x)?;
        let hess = barrier.hessian(&x)?;
        let chol = hess
            .cholesky()
            .ok_or(Error::Invariant("Hessian lost definiteness".into()))?;
        let step = -chol.solve(&grad);
        let decrement = libm::sqrt((-grad.dot(&step)).max(0.0));
        if decrement <= tolerance {
            return Ok(FtrlSolution {
                x,
                residual: decrement,
                clamped: false,
                iterations: iteration,
            });
        }
        let exit = shrunk.ray_exit(&x, &step);
        let mut alpha = (0.99 * exit).min(1.0);
        loop {
            let candidate = &x + &step * alpha;
            if shrunk.gauge(&candidate) <= 1.0 - INTERIOR_MARGIN {
                let next = objective(&candidate)?;
                // Inside the quadratic-convergence region the objective change
                // drops below rounding, so the pure Newton step is taken.
                let quadratic = alpha == 1.0 && decrement < 0.25;
                if quadratic || next <= value - 1e-4 * alpha * decrement * decrement {
                    x = candidate;
                    value = next;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-16 {
                return Err(Error::Solver {
                    iterations: iteration,
                    residual: decrement,
                });
            }
        }
    }
    let grad = scaled_sum + barrier.gradient(&x)?;
    Err(Error::Solver {
        iterations: max_iterations,
        residual: barrier.dual_local_norm(&x, &grad)?,
    })
}
