//! Class pools, episodic sampling and class-label permutations.

mod io;
mod permutation;
mod pool;
mod sampler;

pub use io::{
    decode_pool, encode_pool, load_pool, save_pool, SplitEntry, SplitManifest, POOL_MAGIC,
    POOL_VERSION,
};
pub use permutation::{
    enumerate_permutations, expected_fixed_points, fixed_point_histogram, rotated_permutations,
    Permutation, MAX_ENUMERATION,
};
pub use pool::{generate_synthetic_pool, ClassPool, PoolClass, Split};
pub use sampler::{apply_permutation, sample_episode, Episode, EpisodeSpec, Sample};
