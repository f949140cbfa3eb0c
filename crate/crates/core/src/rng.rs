//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and positioned on
//! one of its 2^64 independent streams. Forking derives a child key from the
//! parent's identity only, so children never consume parent output and
//! repetitions can be dispatched in any order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{config, Result};
use crate::geometry::{Domain, DomainKind, Point};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream. Does not advance `self`.
    pub fn fork(&self, child_id: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id));
        RngStream::new(key, child_id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Uniform draw from the unit sphere `S^{d-1} ⊂ R^d` by normalising a
/// standard Gaussian vector.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Result<Point> {
    if d == 0 {
        return Err(config("sphere dimension must be at least 1"));
    }
    loop {
        let g = Point::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 && norm.is_finite() {
            return Ok(g / norm);
        }
    }
}

/// Uniform draw from the volume of `domain`.
pub fn sample_in_domain<R: Rng + ?Sized>(rng: &mut R, domain: &Domain) -> Point {
    let d = domain.dim();
    match domain.kind() {
        DomainKind::Ball { radius } => {
            let dir = sample_unit_sphere(rng, d).expect("domain dimension is positive");
            let u: f64 = rng.random();
            dir * (radius * libm::pow(u, 1.0 / d as f64))
        }
        DomainKind::Box { halfwidths } => {
            Point::from_iterator(d, halfwidths.iter().map(|h| rng.random_range(-*h..=*h)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn take(rng: &mut RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_identity_same_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        assert_eq!(take(&mut a, 64), take(&mut b, 64));
        let mut c = RngStream::new(7, 4);
        assert_ne!(take(&mut RngStream::new(7, 3), 16), take(&mut c, 16));
    }

    #[test]
    fn fork_is_deterministic_and_leaves_parent_alone() {
        let parent = RngStream::new(42, 0);
        let mut c1 = parent.fork(5);
        let mut c2 = parent.fork(5);
        assert_eq!(take(&mut c1, 32), take(&mut c2, 32));

        let mut other = parent.fork(6);
        let a = take(&mut parent.fork(5), 16);
        let b = take(&mut other, 16);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));

        let mut untouched = RngStream::new(42, 0);
        let mut forked = RngStream::new(42, 0);
        let _ = take(&mut forked.fork(1), 100);
        let _ = forked.fork(2);
        assert_eq!(take(&mut untouched, 32), take(&mut forked, 32));
    }

    #[test]
    fn sphere_samples_have_unit_norm() {
        let mut rng = RngStream::new(1, 1);
        assert!(sample_unit_sphere(&mut rng, 0).is_err());
        for _ in 0..100 {
            let mu = sample_unit_sphere(&mut rng, 1).unwrap();
            assert!(mu[0] == 1.0 || mu[0] == -1.0);
        }
        for d in [2, 5, 17, 50] {
            for _ in 0..200 {
                assert!((sample_unit_sphere(&mut rng, d).unwrap().norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn domain_samples_stay_inside() {
        let mut rng = RngStream::new(9, 0);
        let ball = Domain::ball(4, 3.0).unwrap();
        let cube = Domain::boxed(alloc::vec![1.0, 2.0]).unwrap();
        for _ in 0..1000 {
            assert!(ball.contains(&sample_in_domain(&mut rng, &ball), 0.0));
            assert!(cube.contains(&sample_in_domain(&mut rng, &cube), 0.0));
        }
    }
}
