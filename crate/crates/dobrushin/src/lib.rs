//! Low-temperature 3D Ising interfaces under Dobrushin boundary conditions.
//!
//! The crate samples Ising configurations on finite boxes with the `∓`
//! boundary rule, extracts the Dobrushin interface, decomposes it into walls
//! and ceilings, pillars and increments, runs the pillar-straightening map
//! Ψ with a complete audit, and estimates the extreme-value statistics of
//! the interface maximum.
//!
//! Module map:
//!
//! * [`lattice`] — exact doubled-integer geometry of cells, faces and boxes;
//! * [`rng`] — counter-based splittable random streams;
//! * [`ising`] — configurations, energy, heat-bath dynamics, exact enumeration;
//! * [`interface`] — interface extraction, reconstruction and excess energy;
//! * [`walls`] — walls, ceilings, standard wall collections, groups, nesting;
//! * [`pillars`] — pillars, cut-points, increments, tameness, events A/E/G;
//! * [`psimap`] — the map Ψ_{x,t} and its audit;
//! * [`stats`] — Monte Carlo estimators and empirical checks.

pub mod interface;
pub mod ising;
pub mod lattice;
pub mod pillars;
pub mod psimap;
pub mod rng;
pub mod stats;
pub mod walls;

pub use interface::Interface;
pub use ising::{ChainParams, SpinConfig};
pub use lattice::{Axis, BoxDims, Cell, Face, Proj, ProjKind, ORIGIN};
pub use rng::CounterRng;
