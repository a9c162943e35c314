//! Emergency-service capacity planning.
//!
//! Incident locations are turned into an adaptive kernel intensity estimate,
//! integrated over nearest-station catchments to give per-station risks, and
//! the risks drive minimax allocation of vehicles and crews.
//!
//! ```
//! use capplan_core::allocate::allocate_vehicles;
//! use capplan_core::risk::RiskTable;
//!
//! let risks = RiskTable::from_decimals([("north", "12"), ("south", "5")]).unwrap();
//! let alloc = allocate_vehicles(&risks, 4).unwrap();
//! assert_eq!(alloc.n("north"), Some(3));
//! assert_eq!(alloc.objective.value(), 5.0);
//! ```

pub mod allocate;
pub mod bandwidth;
pub mod error;
pub mod geometry;
pub mod intensity;
pub mod io;
pub mod risk;
pub mod simulate;

pub use error::{Error, Result};
