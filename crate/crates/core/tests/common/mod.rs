#![allow(dead_code)]

use kfwer::inequalities::EventSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random joint distribution over n ≤ 8 events, drawn from one of several
/// families so that both weakly and strongly dependent systems appear.
pub fn random_system(rng: &mut ChaCha8Rng) -> EventSystem {
    let n = rng.random_range(1..=8usize);
    let size = 1usize << n;
    let mut atoms: Vec<f64> = match rng.random_range(0..4) {
        // Flat Dirichlet over all atoms.
        0 => (0..size).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect(),
        // A handful of atoms carry all the mass.
        1 => {
            let mut a = vec![0.0; size];
            for _ in 0..rng.random_range(1..=4) {
                a[rng.random_range(0..size)] += rng.random::<f64>() + 1e-3;
            }
            a
        }
        // Mostly nothing happens, otherwise a random subset.
        2 => {
            let mut a: Vec<f64> = (0..size).map(|_| rng.random::<f64>().powi(6)).collect();
            a[0] += size as f64;
            a
        }
        // Independent events.
        _ => {
            let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            return EventSystem::independent(&probs).unwrap();
        }
    };
    let total: f64 = atoms.iter().sum();
    atoms.iter_mut().for_each(|a| *a /= total);
    EventSystem::new(n, atoms).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixture t statistics and z-scores from an independent scipy computation.
pub const FIXTURE_T: [f64; 10] = [
    16.890064704265818,
    13.662944643744563,
    0.0,
    -0.268866428968934,
    4.076197322920548,
    -1.2838814775327432,
    5.43492976389406,
    0.2000000000000011,
    -0.12278182636051048,
    -1.4000000000000004,
];
pub const FIXTURE_Z: [f64; 10] = [
    4.688448628036756,
    4.427141460941494,
    0.0,
    -0.2571816172064172,
    2.7199075390062646,
    -1.1588158295715565,
    3.1540863018718626,
    0.19155985451355056,
    -0.11772026135924592,
    -1.2507069678043323,
];

pub fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/expression_10x8.csv")
}
