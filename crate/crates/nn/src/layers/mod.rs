//! Individual layer implementations.

pub mod activation;
pub mod blocks;
pub mod constrained;
pub mod conv;
pub mod linear;
pub mod norm;
pub mod pool;
