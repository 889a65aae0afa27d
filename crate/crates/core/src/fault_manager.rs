//! Instrument Manager: watches the network-level fault flag, raises the CPU
//! interrupt after a three-stage detection pipeline, then localizes every
//! unmasked faulty node by emitting its 16-bit ROM address.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scan::{Flags, Node, NodeId, ScanNetwork};

/// Clock frequency used to convert cycle counts to wall time.
pub const CLOCK_MHZ: u64 = 200;
/// Nanoseconds per clock cycle at [`CLOCK_MHZ`].
pub const NS_PER_CYCLE: u64 = 1000 / CLOCK_MHZ;
/// Cycles from the F rise to the interrupt.
pub const DETECTION_STAGES: u8 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultManagerError {
    #[error("node {0} has no ROM entry")]
    UnknownNode(NodeId),
    #[error("node {0} carries no fault flags")]
    NotFlagCapable(NodeId),
    #[error("F was latched but no unmasked fault flag is set")]
    NoFaultFound,
    #[error("instrument manager has not finished localization")]
    NotDone,
}

/// Node id to 16-bit ROM address. Addresses are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RomMap {
    entries: BTreeMap<NodeId, u16>,
}

impl RomMap {
    /// Adds an entry; returns false (and changes nothing) if the node or the
    /// address is already present.
    pub fn insert(&mut self, node: NodeId, address: u16) -> bool {
        if self.entries.contains_key(&node) || self.node_at(address).is_some() {
            return false;
        }
        self.entries.insert(node, address);
        true
    }

    pub fn address(&self, node: NodeId) -> Option<u16> {
        self.entries.get(&node).copied()
    }

    pub fn node_at(&self, address: u16) -> Option<NodeId> {
        self.entries.iter().find(|(_, &a)| a == address).map(|(&n, _)| n)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by ascending address.
    pub fn by_address(&self) -> Vec<(NodeId, u16)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&n, &a)| (n, a)).collect();
        v.sort_by_key(|&(_, a)| a);
        v
    }
}

/// Cycle cost of serially emitting localized addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub first_address: u64,
    /// Later addresses overlap their lookup with the previous emission.
    pub subsequent_address: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { first_address: 16, subsequent_address: 14 }
    }
}

impl CostModel {
    pub fn total(&self, count: usize) -> u64 {
        match count {
            0 => 0,
            k => self.first_address + self.subsequent_address * (k as u64 - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localization {
    pub addresses: Vec<u16>,
    pub cycles: u64,
}

/// Scans flag-capable nodes in ascending address order and returns the
/// addresses of those with F set and X clear, plus the emission cost.
pub fn localize(rom: &RomMap, net: &ScanNetwork, cost: &CostModel) -> Result<Localization, FaultManagerError> {
    let addresses: Vec<u16> = rom
        .by_address()
        .into_iter()
        .filter(|&(id, _)| net.sib(id).is_some_and(|s| s.flag_f && !s.flag_x))
        .map(|(_, a)| a)
        .collect();
    if addresses.is_empty() {
        return Err(FaultManagerError::NoFaultFound);
    }
    Ok(Localization { cycles: cost.total(addresses.len()), addresses })
}

fn flag_capable(rom: &RomMap, net: &ScanNetwork, node: NodeId) -> Result<(), FaultManagerError> {
    rom.address(node).ok_or(FaultManagerError::UnknownNode(node))?;
    match net.node(node) {
        Some(Node::Sib(_)) => Ok(()),
        Some(Node::Tdr(_)) => Err(FaultManagerError::NotFlagCapable(node)),
        None => Err(FaultManagerError::UnknownNode(node)),
    }
}

/// Sets the mask flag X on a SIB. Masked nodes neither trigger detection nor
/// appear in localization results.
pub fn mask_node(net: &mut ScanNetwork, rom: &RomMap, node: NodeId) -> Result<(), FaultManagerError> {
    set_mask(net, rom, node, true)
}

pub fn unmask_node(net: &mut ScanNetwork, rom: &RomMap, node: NodeId) -> Result<(), FaultManagerError> {
    set_mask(net, rom, node, false)
}

fn set_mask(net: &mut ScanNetwork, rom: &RomMap, node: NodeId, value: bool) -> Result<(), FaultManagerError> {
    flag_capable(rom, net, node)?;
    if let Some(sib) = net.sib_mut(node) {
        sib.flag_x = value;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum ImPhase {
    Idle,
    Detecting {
        stage: u8,
    },
    Localizing {
        pending: Vec<u16>,
        /// Cycle at which the address at the head of `pending` is fully emitted.
        next_done: u64,
    },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub detection_cycles: u64,
    pub localization_cycles: u64,
    pub detection_ns: u64,
    pub localization_ns: u64,
    pub detection_us: f64,
    pub localization_us: f64,
}

impl LatencyReport {
    pub fn from_cycles(detection_cycles: u64, localization_cycles: u64) -> Self {
        Self {
            detection_cycles,
            localization_cycles,
            detection_ns: detection_cycles * NS_PER_CYCLE,
            localization_ns: localization_cycles * NS_PER_CYCLE,
            detection_us: detection_cycles as f64 / CLOCK_MHZ as f64,
            localization_us: localization_cycles as f64 / CLOCK_MHZ as f64,
        }
    }
}

/// Clocked state of the Instrument Manager.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentManager {
    pub phase: ImPhase,
    pub interrupt: bool,
    pub localized: Vec<u16>,
    pub cycle_of_alarm: Option<u64>,
    pub cycle_of_interrupt: Option<u64>,
    pub cycle_localization_done: Option<u64>,
    /// Set when localization found no unmasked flag (a transient).
    pub no_fault_found: bool,
    /// Cycles at which C rose. Logged only.
    pub correction_events: Vec<u64>,
    /// Address being emitted this cycle, if any.
    pub emitting: Option<u16>,
    pub cost: CostModel,
    last_c: bool,
}

impl Default for InstrumentManager {
    fn default() -> Self {
        Self::new(CostModel::default())
    }
}

impl InstrumentManager {
    pub fn new(cost: CostModel) -> Self {
        Self {
            phase: ImPhase::Idle,
            interrupt: false,
            localized: Vec::new(),
            cycle_of_alarm: None,
            cycle_of_interrupt: None,
            cycle_localization_done: None,
            no_fault_found: false,
            correction_events: Vec::new(),
            emitting: None,
            cost,
            last_c: false,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.cost);
    }

    pub fn is_done(&self) -> bool {
        self.phase == ImPhase::Done
    }

    /// Advances one clock. Call once per cycle after flag propagation.
    pub fn tick(&mut self, flags: Flags, rom: &RomMap, net: &ScanNetwork, cycle: u64) {
        if flags.c && !self.last_c {
            self.correction_events.push(cycle);
        }
        self.last_c = flags.c;

        match &mut self.phase {
            ImPhase::Idle => {
                if flags.f {
                    // F is latched here; later F drops do not cancel detection
                    self.cycle_of_alarm = Some(cycle);
                    self.phase = ImPhase::Detecting { stage: 1 };
                }
            }
            ImPhase::Detecting { stage } if *stage < DETECTION_STAGES => *stage += 1,
            ImPhase::Detecting { .. } => {
                self.interrupt = true;
                self.cycle_of_interrupt = Some(cycle);
                match localize(rom, net, &self.cost) {
                    Ok(loc) => {
                        self.emitting = loc.addresses.first().copied();
                        self.phase =
                            ImPhase::Localizing { pending: loc.addresses, next_done: cycle + self.cost.first_address };
                    }
                    Err(_) => {
                        self.no_fault_found = true;
                        self.cycle_localization_done = Some(cycle);
                        self.phase = ImPhase::Done;
                    }
                }
            }
            ImPhase::Localizing { pending, next_done } => {
                if cycle >= *next_done {
                    let addr = pending.remove(0);
                    self.localized.push(addr);
                    if pending.is_empty() {
                        self.emitting = None;
                        self.cycle_localization_done = Some(cycle);
                        self.phase = ImPhase::Done;
                    } else {
                        *next_done = cycle + self.cost.subsequent_address;
                        self.emitting = pending.first().copied();
                    }
                }
            }
            ImPhase::Done => {}
        }
    }

    pub fn latency_report(&self) -> Result<LatencyReport, FaultManagerError> {
        match (self.cycle_of_alarm, self.cycle_of_interrupt, self.cycle_localization_done) {
            (Some(a), Some(i), Some(d)) if self.is_done() => Ok(LatencyReport::from_cycles(i - a, d - i)),
            _ => Err(FaultManagerError::NotDone),
        }
    }
}
