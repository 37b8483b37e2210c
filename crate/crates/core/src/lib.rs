//! Functional simulator and cost model for processing-in-memory on
//! domain-wall (racetrack) memory using transverse reads.

pub mod arithmetic;
pub mod command;
pub mod cost;
pub mod dbc;
pub mod device;
pub mod error;
pub mod hierarchy;
pub mod pim_logic;
pub mod workloads;

pub use command::{Command, OpKind};
pub use dbc::{AddLayout, BulkOpKind, Dbc, Row};
pub use device::{Direction, Nanowire, TrSpan};
pub use error::{Error, Result};
