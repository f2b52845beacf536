//! Deterministic simulation of a robot head and on-screen agent that mirror
//! a human interlocutor's head position and facial expression.
//!
//! Everything runs on a virtual clock over an in-process pub/sub [`bus`].
//! The [`harness`] wires the modules into a closed loop and replays the
//! scripted experiments.

pub mod actuation;
pub mod bus;
pub mod config;
pub mod harness;
pub mod interlocutor;
pub mod mimicry;
pub mod perception;

pub use bus::{Bus, BusError, Envelope, Message, MessageKind, SimClock};
pub use config::{Config, ConfigError};
