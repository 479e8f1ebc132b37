//! Seeded random polynomial fields shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use foliation_poisson::exterior::{Field, Variance};
use foliation_poisson::{CoordinateSystem, SampleBox, Sampler, ScalarExpr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn coords(m: usize) -> Arc<CoordinateSystem> {
    Arc::new(CoordinateSystem::numbered(m))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sampler(m: usize) -> Sampler {
    Sampler::with_defaults(SampleBox::cube(m, -1.0, 1.0).unwrap())
}

/// Short decimal in [-1, 1].
fn coefficient(rng: &mut ChaCha8Rng) -> f64 {
    (rng.gen_range(-1.0f64..=1.0) * 100.0).round() / 100.0
}

/// Random polynomial of total degree at most `max_deg` with up to `terms` monomials.
pub fn poly(rng: &mut ChaCha8Rng, m: usize, max_deg: usize, terms: usize) -> ScalarExpr {
    let mut f = ScalarExpr::zero();
    for _ in 0..rng.gen_range(1..=terms) {
        let mut t = ScalarExpr::constant(coefficient(rng));
        for _ in 0..rng.gen_range(0..=max_deg) {
            t = t.mul(&ScalarExpr::var(rng.gen_range(0..m)));
        }
        f = f.add(&t);
    }
    f
}

/// Random increasing multi-index of length `q` in `0..m`.
pub fn multi_index(rng: &mut ChaCha8Rng, m: usize, q: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..m).collect();
    for i in 0..q {
        let j = rng.gen_range(i..m);
        all.swap(i, j);
    }
    let mut idx = all[..q].to_vec();
    idx.sort_unstable();
    idx
}

/// Random field of degree `q` with a few polynomial components.
pub fn field<V: Variance>(rng: &mut ChaCha8Rng, c: &Arc<CoordinateSystem>, q: usize) -> Field<V> {
    let m = c.dim();
    let mut out = Field::<V>::zero(c, q);
    for _ in 0..rng.gen_range(1..=3) {
        let idx = multi_index(rng, m, q);
        out = out.plus(&Field::monomial(c, &idx, poly(rng, m, 2, 3)));
    }
    out
}
