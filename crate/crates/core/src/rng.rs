//! Seed derivation for independent, order-free random streams.
//!
//! Every stream is keyed by a master seed plus a path of integers (cell
//! coordinates, trial index, purpose tag). Two different paths never share
//! a stream, and a stream does not depend on which other streams were drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with each element of `path` into a single 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}

/// Purpose tags keep the streams for one trial apart.
pub mod tag {
    pub const INSTANCE: u64 = 1;
    pub const DATA: u64 = 2;
    pub const INIT: u64 = 3;
    pub const PROBE: u64 = 4;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn distinct_paths_give_distinct_seeds() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[2, 1]);
        let c = derive_seed(7, &[1, 2, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[1, 2]));
    }

    #[test]
    fn stream_is_reproducible() {
        let x: Vec<u64> = stream(3, &[9])
            .sample_iter(rand::distributions::Standard)
            .take(4)
            .collect();
        let y: Vec<u64> = stream(3, &[9])
            .sample_iter(rand::distributions::Standard)
            .take(4)
            .collect();
        assert_eq!(x, y);
    }
}
