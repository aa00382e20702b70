//! Shared inputs for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcfgan_core::freq::sample_fixed;
use rcfgan_core::Tensor;

/// Two sample sets `[n, m]` and a frequency draw `[k, m]`.
pub struct Workload {
    pub a: Tensor,
    pub b: Tensor,
    pub freqs: Tensor,
}

pub fn workload(n: usize, m: usize, k: usize, seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Workload {
        a: sample_fixed(n, m, 1.0, &mut rng).expect("positive sizes"),
        b: sample_fixed(n, m, 2.0, &mut rng).expect("positive sizes"),
        freqs: sample_fixed(k, m, 1.0, &mut rng).expect("positive sizes"),
    }
}
