//! Task-oriented dialog response ranking with natural-language rule features.

pub mod error;
pub mod data;
pub mod encoder;
pub mod model;
pub mod nlr;
pub mod numcore;
pub mod train;

pub use error::{Error, Result};
pub use numcore::Scalar;

pub type Tensor64 = numcore::Tensor<f64>;
pub type Tensor32 = numcore::Tensor<f32>;
pub type ParamStore64 = numcore::ParamStore<f64>;

/// 64-bit FNV-1a hash; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
