//! Key distillation for discrete-variable QKD.

#![allow(clippy::needless_range_loop)]

pub mod aesapp;
pub mod auth;
pub mod bits;
pub mod chansim;
pub mod config;
pub mod error;
pub mod estimation;
pub mod keystore;
pub mod ldpc;
pub mod pa;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sifting;
pub mod verify;

pub use bits::BitBlock;
pub use error::{Error, Result};
