//! Bit-mixing hash behind the diversity constraints.

use super::{ModelError, Value};

/// Bucket count used when a policy does not override it.
pub const DEFAULT_BUCKETS: u32 = 64;

/// 32-bit finalizer: alternating xor-shift and odd multiplications.
///
/// Every step is invertible mod 2^32, so the whole map is a permutation.
#[inline]
pub fn mix32(mut x: u32) -> u32 {
    x ^= x >> 16;
    x = x.wrapping_mul(0x7feb_352d);
    x ^= x >> 15;
    x = x.wrapping_mul(0x846c_a68b);
    x ^= x >> 16;
    x
}

/// `mix32` of the low 32 bits of `v`, reduced mod `bucket_count`.
pub fn bucket(v: Value, bucket_count: u32) -> Result<u32, ModelError> {
    if bucket_count < 2 {
        return Err(ModelError::BucketCount(bucket_count));
    }
    Ok(mix32(v as u32) % bucket_count)
}
