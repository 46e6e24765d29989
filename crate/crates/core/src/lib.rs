//! Agentic scene policies over a deterministic kinematic simulator.
//!
//! The crate is layered bottom-up: point-cloud geometry, an open-vocabulary
//! object map, affordance detection, scripted skills and affordance-guided
//! navigation, an agent-facing tool layer with symbolic state, and an
//! episode runner that drives the tools from scripted or remote policies.

pub mod affordance;
pub mod agent;
pub mod config;
pub mod error;
pub mod geom;
pub mod nav;
pub mod remote;
pub mod scene_map;
pub mod semantics;
pub mod sim;
pub mod skills;
pub mod tools;

pub use config::{AspConfig, Mode};
pub use error::{Error, Result};
