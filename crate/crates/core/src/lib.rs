//! Story synthesis by optimizing over a simulated Bayesian audience.
//!
//! Two characters, a robot and a cheese, share a small kitchen grid. The
//! [`planner`] computes their softmax-rational policies for every
//! hypothesis about their goals; [`inference`] inverts those policies to
//! track what an audience believes after each observed step; [`objectives`]
//! scores belief trajectories; and [`optimizer`] searches for scripts whose
//! trajectories score well.

pub mod inference;
pub mod objectives;
pub mod optimizer;
pub mod planner;
pub mod world;

/// The shipped two-room kitchen map.
pub const KITCHEN_MAP: &str = include_str!("../layouts/kitchen.map");
