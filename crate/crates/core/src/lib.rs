#![no_std]

extern crate alloc;

mod hash;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod train;
pub mod selfies;
