//! A concurrent, resizable key-value hash table with three placement levels
//! and crash-consistent persistence over an emulated durable region.
//!
//! Keys and values are `u64`. The key `u64::MAX` is held in a dedicated side
//! slot; the value `u64::MAX` is reserved as the tombstone pattern and is
//! rejected at the API boundary.

pub mod hash;
pub mod metadata;
pub mod oracle;
mod recover;
pub mod region;
mod resize;
pub mod rwlock;
pub mod sim;
pub mod table;

pub use hash::HashTriple;
pub use region::{DurableStore, RegionError, Tearing, INVALID};
pub use table::{InsertOutcome, Level, Location, ProbeStats, Table, TableConfig, TableError};
