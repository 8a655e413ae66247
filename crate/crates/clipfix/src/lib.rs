//! Deterministic desk-scale testbed for force-based contact-state estimation
//! of a deformable linear object fixed into elastic clips.
//!
//! The crate is organized bottom-up:
//! - [`signal`]: streaming smoothing, cumulative statistics, guarded ratios
//! - [`contact`]: quasi-static 1 kHz clip/DLO physics and force sensing
//! - [`estimators`]: contact establishment and change indicators plus the
//!   two baselines they are compared against
//! - [`skill`]: the clip-fixing manipulation-primitive state machine
//! - [`shape`]: adaptive resampling of skill parameters over a fixture board
//! - [`scenario`]: flat key-value experiment descriptions
//! - [`harness`]: seeded experiment drivers and CSV/manifest output

pub mod contact;
pub mod estimators;
pub mod harness;
pub mod scenario;
pub mod shape;
pub mod signal;
pub mod skill;
