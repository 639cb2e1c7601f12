//! Feedforward phase-noise compensation for intersymbol-interference
//! channels.
//!
//! The crate simulates Wiener phase noise on top of ISI-free, chromatic
//! dispersion and OFDM multipath links, compensates it either with a
//! von Mises sum-product tracker ([`spa`]) or an LMMSE phasor filter
//! ([`lmmse`]), and estimates achievable information rates by Monte Carlo
//! ([`rates`]). [`harness`] drives parameter sweeps and writes TSV curves.

pub mod channel;
pub mod error;
pub mod framing;
pub mod harness;
pub mod lmmse;
pub mod numerics;
pub mod rates;
pub mod rng;
pub mod scenario;
pub mod spa;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Multiply/add/nonlinear-function tallies for complexity accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub mul: u64,
    pub add: u64,
    pub lut: u64,
}

impl OpCounts {
    pub const fn new(mul: u64, add: u64, lut: u64) -> Self {
        Self { mul, add, lut }
    }

    pub fn total(&self) -> u64 {
        self.mul + self.add + self.lut
    }

    #[inline]
    pub(crate) fn charge(&mut self, per_iter: OpCounts, iters: u64) {
        self.mul += per_iter.mul * iters;
        self.add += per_iter.add * iters;
        self.lut += per_iter.lut * iters;
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts::new(self.mul + o.mul, self.add + o.add, self.lut + o.lut)
    }
}
