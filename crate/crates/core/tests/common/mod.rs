#![allow(dead_code)]

use intervalweib::dataset::{IntervalDataset, TestRecord};
use intervalweib::datagen::{generate_synthetic_2, make_moons, CensorWindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fourth-order central difference of `f` along coordinate `i`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut at = |d: f64| {
        let mut y = x.to_vec();
        y[i] += d;
        f(&y)
    };
    let d1 = (at(h) - at(-h)) / (2.0 * h);
    let d2 = (at(2.0 * h) - at(-2.0 * h)) / (4.0 * h);
    (4.0 * d1 - d2) / 3.0
}

/// `|a - b| / max(|a|, |b|, 1)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Records from the smooth-rate generator on moons, cut to exactly `n`.
pub fn moons_records(n: usize, seed: u64) -> IntervalDataset {
    let base = make_moons(n, 0.1, seed);
    let window = CensorWindowSpec::new(2.0, 100.0).unwrap();
    let ds = generate_synthetic_2(&base, [2.5, 3.0], &window, seed).unwrap();
    let records: Vec<TestRecord> = ds.records()[..n].to_vec();
    IntervalDataset::new(records, 2).unwrap()
}

pub fn uniform_point(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-half_width..half_width)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
