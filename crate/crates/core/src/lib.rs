//! Strategic route planning for small unmanned aircraft.
//!
//! The pipeline plans a route through an airspace of no-fly zones and
//! previously reserved operational volumes, simulates a fleet of aircraft
//! along it, fits time-indexed confidence ellipses to the simulated
//! positions, and registers the result as a contract that later plans must
//! avoid.
//!
//! - [`geometry`]: projection and planar predicates.
//! - [`airspace`]: the airspace model and the time-binned contract store.
//! - [`router`]: arc-expansion A* search.
//! - [`flightsim`]: Monte-Carlo point-mass simulation.
//! - [`ovgen`]: ellipse fitting, validation and contract assembly.
//! - [`verify`]: conflict and accuracy checks, congested-airspace driver.
//! - [`io`]: file formats.

pub mod airspace;
pub mod config;
pub mod error;
pub mod flightsim;
pub mod geometry;
pub mod io;
pub mod ovgen;
pub mod registry;
pub mod router;
pub mod verify;

pub use error::{Error, Result};
