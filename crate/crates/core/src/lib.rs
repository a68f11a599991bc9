//! Formation flight of constant-speed fixed-wing drones along straight
//! paths, synchronised in path parameter by modulating an oscillation on top
//! of a guiding vector field.
//!
//! The building blocks are usable on their own: [`graph`] for communication
//! topologies, [`path`] and [`gvf`] for path following, [`oscillation`] for
//! the amplitude/velocity relation, [`consensus`] for the saturated protocol,
//! [`controller`] for the unicycle and its heading law. [`sim`] ties them into
//! a scenario-driven closed loop.

pub mod consensus;
pub mod controller;
pub mod graph;
pub mod gvf;
pub mod numeric;
pub mod oscillation;
pub mod path;
pub mod sim;
