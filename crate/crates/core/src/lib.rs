//! Nash-equilibrium seeking over networks under persistent disturbances.
//!
//! Games are given by their per-player partial gradients ([`game`]), agents
//! talk over an undirected graph ([`network`]), disturbances come from linear
//! exosystems ([`exosystem`]) and each agent runs one of the learning laws in
//! [`dynamics`]. [`sim`] integrates the closed loop, [`scenarios`] holds
//! the reference games and [`config`]/[`output`] back the `neflow` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod exosystem;
pub mod game;
pub mod linalg;
pub mod network;
pub mod output;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
