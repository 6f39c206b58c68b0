//! Sum-of-squares certificates for the region of synchronization of coupled
//! polynomial networks.
//!
//! The crate is `no_std` with `alloc`; the `std` feature (on by default) only
//! forwards to dependencies.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;
mod sample;

pub mod netmodel;
pub mod poly;
pub mod sdp;
pub mod sim;
pub mod sos;
pub mod synth;
