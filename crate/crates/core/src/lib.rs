//! Cycle-accurate simulator of an IEEE 1687 reconfigurable scan network used
//! for health monitoring of external (IMU) and internal (temperature,
//! voltage) sensors.
//!
//! The crate is organized bottom-up:
//!
//! - [`scan`]: SIB/TDR network, scan path, capture-shift-update, F/C/X flags
//! - [`instruments`]: ADC monitor, IMU with parity checker, fault injection
//! - [`netlist`]: network description parser, printer and elaboration
//! - [`retarget`]: CSU vector planning for instrument reads and writes
//! - [`fault_manager`]: Instrument Manager detection and localization
//! - [`scenario`], [`sim`], [`trace`]: scenario files, cycle loop, reports

pub mod fault_manager;
pub mod instruments;
pub mod netlist;
pub mod retarget;
pub mod scan;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use fault_manager::{InstrumentManager, LatencyReport, RomMap};
pub use netlist::{elaborate, parse_network, print_network, NetworkDesc};
pub use retarget::{execute_plan, plan_access, AccessPlan, AccessRequest};
pub use scan::{Flags, NodeId, ScanNetwork};
pub use scenario::{parse_scenario, Scenario};
pub use sim::{run, run_file, RunOptions, SimReport};
pub use trace::{emit_trace, TraceFormat};
