//! Emergent communication in two-image referential games.
//!
//! A sender sees a target and a distractor and emits one symbol from a fixed
//! vocabulary; a receiver sees both images in random order plus the symbol
//! and points at one. Both are small networks trained from the shared 0/1
//! payoff with Reinforce. The crate also ships the analyses used to inspect
//! the resulting protocols: communication success, symbol usage, cluster
//! purity against permutation chance, usage spectra, and the symbol-label
//! match rate of grounded senders.
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the CLI and server use.

pub mod agents;
pub mod analysis;
pub mod error;
pub mod game;
pub mod nn;
pub mod persist;
pub mod scalar;
pub mod trainer;
pub mod worldgen;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

pub type World = worldgen::World<f64>;
pub type Sender = agents::Sender<f64>;
pub type Receiver = agents::Receiver<f64>;
pub type RoundRecord = game::RoundRecord<f64>;
pub type TrainOutcome = trainer::TrainOutcome<f64>;
pub type Checkpoint = persist::Checkpoint;

pub type WorldF32 = worldgen::World<f32>;
pub type SenderF32 = agents::Sender<f32>;
pub type ReceiverF32 = agents::Receiver<f32>;
