//! Reconfigurable scan network: SIB/TDR tree, active scan path, the
//! capture-shift-update protocol and fault-flag propagation.
//!
//! Bit-string convention: the character at index `i` of a CSU input lands
//! in path position `i` after shifting, where position 0 is nearest TDI.
//! The leftmost character is therefore the last bit clocked in. Bits leave
//! TDO starting with the cell nearest TDO.
//!
//! SIBs use pre-mux placement: an open SIB's child segment sits on the path
//! immediately before the SIB's own cell.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::InstrumentModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScanError {
    #[error("CSU input has {got} bits but the active scan path has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("parent {0} is not a SIB")]
    ParentNotSib(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("TDR `{0}` must have width >= 1")]
    ZeroWidth(String),
    #[error("invalid bit character `{0}`")]
    BadBit(char),
}

/// Segment insertion bit with F/C/X flag registers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SibNode {
    pub id: NodeId,
    pub name: String,
    pub shift_cell: bool,
    /// 1 = open (child segment spliced in), 0 = closed.
    pub update_cell: bool,
    pub flag_f: bool,
    pub flag_c: bool,
    pub flag_x: bool,
    pub children: Vec<NodeId>,
}

/// Test data register, optionally bound to an instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdrNode {
    pub id: NodeId,
    pub name: String,
    pub width: usize,
    /// Index 0 is the cell nearest TDI (the MSB of a captured word).
    pub shift_reg: Vec<bool>,
    pub shadow_reg: Vec<bool>,
    pub instrument: Option<InstrumentModel>,
}

impl TdrNode {
    /// Capture source: the instrument value fitted to `width` (LSB aligned),
    /// or the shadow register when no instrument is bound.
    fn capture_source(&self) -> Vec<bool> {
        match &self.instrument {
            Some(inst) => {
                let v = inst.capture_value();
                if v.len() >= self.width {
                    v[v.len() - self.width..].to_vec()
                } else {
                    let mut out = vec![false; self.width - v.len()];
                    out.extend(v);
                    out
                }
            }
            None => self.shadow_reg.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Sib(SibNode),
    Tdr(TdrNode),
}

impl Node {
    pub fn id(&self) -> NodeId {
        match self {
            Node::Sib(s) => s.id,
            Node::Tdr(t) => t.id,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Node::Sib(s) => &s.name,
            Node::Tdr(t) => &t.name,
        }
    }

    pub fn as_sib(&self) -> Option<&SibNode> {
        match self {
            Node::Sib(s) => Some(s),
            Node::Tdr(_) => None,
        }
    }

    pub fn as_tdr(&self) -> Option<&TdrNode> {
        match self {
            Node::Tdr(t) => Some(t),
            Node::Sib(_) => None,
        }
    }
}

/// One scan flip-flop on the serial path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanCell {
    Sib(NodeId),
    Tdr(NodeId, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CsuPhase {
    Capture,
    Shift,
    Update,
}

/// Network-level flag outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub f: bool,
    pub c: bool,
}

/// Incremental construction of a [`ScanNetwork`]. Nodes receive ids in the
/// order they are added, so adding in declaration order yields declaration
/// ordered ids.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    net: ScanNetwork,
    error: Option<ScanError>,
}

impl NetworkBuilder {
    fn attach(&mut self, node: Node, parent: Option<NodeId>) -> NodeId {
        let id = node.id();
        if self.error.is_none() {
            if self.net.find(node.name()).is_some() {
                self.error = Some(ScanError::DuplicateName(node.name().to_string()));
            } else {
                match parent {
                    None => self.net.top.push(id),
                    Some(p) => match self.net.nodes.get_mut(p.index()) {
                        Some(Node::Sib(sib)) => sib.children.push(id),
                        Some(Node::Tdr(_)) => self.error = Some(ScanError::ParentNotSib(p)),
                        None => self.error = Some(ScanError::UnknownNode(p)),
                    },
                }
            }
        }
        self.net.parent.push(parent);
        self.net.nodes.push(node);
        id
    }

    fn next_id(&self) -> NodeId {
        NodeId(self.net.nodes.len() as u32)
    }

    pub fn sib(&mut self, name: impl Into<String>, parent: Option<NodeId>) -> NodeId {
        let node = Node::Sib(SibNode {
            id: self.next_id(),
            name: name.into(),
            shift_cell: false,
            update_cell: false,
            flag_f: false,
            flag_c: false,
            flag_x: false,
            children: Vec::new(),
        });
        self.attach(node, parent)
    }

    pub fn tdr(
        &mut self,
        name: impl Into<String>,
        width: usize,
        parent: Option<NodeId>,
        instrument: Option<InstrumentModel>,
    ) -> NodeId {
        let name = name.into();
        if width == 0 && self.error.is_none() {
            self.error = Some(ScanError::ZeroWidth(name.clone()));
        }
        let node = Node::Tdr(TdrNode {
            id: self.next_id(),
            name,
            width,
            shift_reg: vec![false; width],
            shadow_reg: vec![false; width],
            instrument,
        });
        self.attach(node, parent)
    }

    pub fn build(self) -> Result<ScanNetwork, ScanError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.net),
        }
    }
}

/// A hierarchical SIB/TDR tree. Node ids index `nodes` directly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanNetwork {
    top: Vec<NodeId>,
    nodes: Vec<Node>,
    parent: Vec<Option<NodeId>>,
    pub tdi: bool,
    pub tdo: bool,
}

impl ScanNetwork {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn top(&self) -> &[NodeId] {
        &self.top
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(id.index())
    }

    pub fn sib(&self, id: NodeId) -> Option<&SibNode> {
        self.node(id).and_then(Node::as_sib)
    }

    pub fn sib_mut(&mut self, id: NodeId) -> Option<&mut SibNode> {
        match self.node_mut(id) {
            Some(Node::Sib(s)) => Some(s),
            _ => None,
        }
    }

    pub fn tdr(&self, id: NodeId) -> Option<&TdrNode> {
        self.node(id).and_then(Node::as_tdr)
    }

    pub fn tdr_mut(&mut self, id: NodeId) -> Option<&mut TdrNode> {
        match self.node_mut(id) {
            Some(Node::Tdr(t)) => Some(t),
            _ => None,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(id.index()).copied().flatten()
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name() == name).map(Node::id)
    }

    pub fn name(&self, id: NodeId) -> &str {
        self.node(id).map(Node::name).unwrap_or("?")
    }

    /// Number of SIBs between `id` and the top level (0 for top-level nodes).
    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).len()
    }

    /// Gating SIBs of `id`, innermost first.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(p);
        }
        out
    }

    pub fn is_open(&self, id: NodeId) -> bool {
        self.sib(id).is_some_and(|s| s.update_cell)
    }

    /// Ids of all SIBs whose update cell is 1.
    pub fn open_sibs(&self) -> Vec<NodeId> {
        self.nodes.iter().filter_map(Node::as_sib).filter(|s| s.update_cell).map(|s| s.id).collect()
    }

    /// Scan path (TDI side first) that results from a given set of open SIBs.
    pub fn scan_path_with(&self, is_open: impl Fn(NodeId) -> bool) -> Vec<ScanCell> {
        let mut path = Vec::new();
        self.collect_segment(&self.top, &is_open, &mut path);
        path
    }

    fn collect_segment(&self, segment: &[NodeId], is_open: &impl Fn(NodeId) -> bool, path: &mut Vec<ScanCell>) {
        for &id in segment {
            match &self.nodes[id.index()] {
                Node::Sib(sib) => {
                    if is_open(id) {
                        self.collect_segment(&sib.children, is_open, path);
                    }
                    path.push(ScanCell::Sib(id));
                }
                Node::Tdr(tdr) => path.extend((0..tdr.width).map(|i| ScanCell::Tdr(id, i))),
            }
        }
    }

    /// Every scan cell currently on the serial path, TDI side first.
    pub fn active_scan_path(&self) -> Vec<ScanCell> {
        self.scan_path_with(|id| self.is_open(id))
    }

    pub fn path_len(&self) -> usize {
        self.active_scan_path().len()
    }

    pub fn cell(&self, cell: ScanCell) -> bool {
        match cell {
            ScanCell::Sib(id) => self.sib(id).is_some_and(|s| s.shift_cell),
            ScanCell::Tdr(id, i) => self.tdr(id).is_some_and(|t| t.shift_reg[i]),
        }
    }

    fn set_cell(&mut self, cell: ScanCell, value: bool) {
        match cell {
            ScanCell::Sib(id) => {
                if let Some(s) = self.sib_mut(id) {
                    s.shift_cell = value;
                }
            }
            ScanCell::Tdr(id, i) => {
                if let Some(t) = self.tdr_mut(id) {
                    t.shift_reg[i] = value;
                }
            }
        }
    }

    fn on_path_nodes(path: &[ScanCell]) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = path
            .iter()
            .map(|c| match *c {
                ScanCell::Sib(id) | ScanCell::Tdr(id, _) => id,
            })
            .collect();
        ids.dedup();
        ids
    }

    /// Capture phase: SIB shift cells load their update cell, TDR shift
    /// registers load their capture source. Only cells on the path take part.
    pub fn capture(&mut self) {
        for id in Self::on_path_nodes(&self.active_scan_path()) {
            match &mut self.nodes[id.index()] {
                Node::Sib(sib) => sib.shift_cell = sib.update_cell,
                Node::Tdr(tdr) => tdr.shift_reg = tdr.capture_source(),
            }
        }
    }

    /// One shift clock: `tdi` enters position 0, the bit at the last
    /// position leaves at TDO and is returned.
    pub fn shift_bit(&mut self, tdi: bool) -> bool {
        let path = self.active_scan_path();
        self.tdi = tdi;
        let Some(&last) = path.last() else {
            self.tdo = tdi;
            return tdi;
        };
        let out = self.cell(last);
        for k in (1..path.len()).rev() {
            let prev = self.cell(path[k - 1]);
            self.set_cell(path[k], prev);
        }
        self.set_cell(path[0], tdi);
        self.tdo = out;
        out
    }

    /// Update phase: commit shift cells into update cells and shadow registers.
    /// The path is fixed from the pre-update configuration.
    pub fn update(&mut self) {
        for id in Self::on_path_nodes(&self.active_scan_path()) {
            match &mut self.nodes[id.index()] {
                Node::Sib(sib) => sib.update_cell = sib.shift_cell,
                Node::Tdr(tdr) => {
                    tdr.shadow_reg = tdr.shift_reg.clone();
                    if let Some(inst) = &mut tdr.instrument {
                        inst.on_update(&tdr.shadow_reg);
                    }
                }
            }
        }
    }

    /// Runs one full capture-shift-update transaction and returns the bits
    /// emitted at TDO in emission order. The state is untouched on error.
    pub fn csu(&mut self, shift_in: &[bool]) -> Result<Vec<bool>, ScanError> {
        let path = self.active_scan_path();
        if shift_in.len() != path.len() {
            return Err(ScanError::LengthMismatch { expected: path.len(), got: shift_in.len() });
        }
        self.capture();
        let captured: Vec<bool> = path.iter().map(|&c| self.cell(c)).collect();
        for (&cell, &bit) in path.iter().zip(shift_in) {
            self.set_cell(cell, bit);
        }
        if let Some(&first) = shift_in.first() {
            self.tdi = first;
            self.tdo = captured[0];
        }
        self.update();
        Ok(captured.into_iter().rev().collect())
    }

    /// Same as [`csu`](Self::csu) with a `0`/`1` string.
    pub fn csu_str(&mut self, shift_in: &str) -> Result<String, ScanError> {
        let bits = parse_bits(shift_in)?;
        Ok(format_bits(&self.csu(&bits)?))
    }

    /// Drives each instrument-gating SIB's F and C from the OR of the fault
    /// outputs of the instrumented TDRs directly beneath it.
    pub fn sync_instrument_flags(&mut self) {
        let mut raised: Vec<Option<bool>> = vec![None; self.nodes.len()];
        for node in &self.nodes {
            if let Node::Tdr(TdrNode { id, instrument: Some(inst), .. }) = node {
                if let Some(p) = self.parent(*id) {
                    let slot = raised[p.index()].get_or_insert(false);
                    *slot |= inst.fault_output();
                }
            }
        }
        for (i, r) in raised.into_iter().enumerate() {
            if let (Some(v), Node::Sib(sib)) = (r, &mut self.nodes[i]) {
                sib.flag_f = v;
                sib.flag_c = v;
            }
        }
    }

    /// Combinational OR-reduction: F over unmasked faulty flags, C over all
    /// correction flags.
    pub fn propagate_flags(&self) -> Flags {
        self.nodes
            .iter()
            .filter_map(Node::as_sib)
            .fold(Flags::default(), |acc, s| Flags { f: acc.f || (s.flag_f && !s.flag_x), c: acc.c || s.flag_c })
    }

    /// Closes every SIB and zeroes every flag and register. Instruments
    /// drop their queued and latched faults.
    pub fn reset(&mut self) {
        for node in &mut self.nodes {
            match node {
                Node::Sib(sib) => {
                    sib.shift_cell = false;
                    sib.update_cell = false;
                    sib.flag_f = false;
                    sib.flag_c = false;
                    sib.flag_x = false;
                }
                Node::Tdr(tdr) => {
                    tdr.shift_reg.fill(false);
                    tdr.shadow_reg.fill(false);
                    if let Some(inst) = &mut tdr.instrument {
                        inst.clear_faults();
                    }
                }
            }
        }
        self.tdi = false;
        self.tdo = false;
    }

    pub fn step_instruments(&mut self, cycle: u64) {
        for node in &mut self.nodes {
            if let Node::Tdr(TdrNode { instrument: Some(inst), .. }) = node {
                inst.step(cycle);
            }
        }
    }

    pub fn instrument(&self, id: NodeId) -> Option<&InstrumentModel> {
        self.tdr(id).and_then(|t| t.instrument.as_ref())
    }

    pub fn instrument_mut(&mut self, id: NodeId) -> Option<&mut InstrumentModel> {
        self.tdr_mut(id).and_then(|t| t.instrument.as_mut())
    }

    /// OR of every bound instrument's fault output, ignoring masks.
    pub fn any_instrument_fault(&self) -> bool {
        self.nodes
            .iter()
            .filter_map(Node::as_tdr)
            .filter_map(|t| t.instrument.as_ref())
            .any(InstrumentModel::fault_output)
    }
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>, ScanError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(ScanError::BadBit(other)),
        })
        .collect()
}

pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::FixedRegister;

    fn two_sib() -> (ScanNetwork, NodeId, NodeId, NodeId, NodeId) {
        let mut b = ScanNetwork::builder();
        let sib3 = b.sib("SIB-3", None);
        let tdr1 = b.tdr("TDR-1", 16, Some(sib3), None);
        let sib2 = b.sib("SIB-2", None);
        let tdr2 = b.tdr("TDR-2", 16, Some(sib2), None);
        (b.build().unwrap(), sib3, tdr1, sib2, tdr2)
    }

    #[test]
    fn all_closed_path() {
        let mut b = ScanNetwork::builder();
        let s1 = b.sib("SIB-1", None);
        let s3 = b.sib("SIB-3", None);
        b.tdr("TDR-1", 16, Some(s3), None);
        let s2 = b.sib("SIB-2", None);
        b.tdr("TDR-2", 16, Some(s2), None);
        let net = b.build().unwrap();
        assert_eq!(net.active_scan_path(), vec![ScanCell::Sib(s1), ScanCell::Sib(s3), ScanCell::Sib(s2)]);
    }

    #[test]
    fn open_sib_places_segment_before_its_cell() {
        let (mut net, sib3, _, sib2, tdr2) = two_sib();
        net.sib_mut(sib2).unwrap().update_cell = true;
        let path = net.active_scan_path();
        assert_eq!(path.len(), 18);
        assert_eq!(path[0], ScanCell::Sib(sib3));
        for (i, cell) in path[1..17].iter().enumerate() {
            assert_eq!(*cell, ScanCell::Tdr(tdr2, i));
        }
        assert_eq!(path[17], ScanCell::Sib(sib2));
    }

    #[test]
    fn nested_sibs() {
        let mut b = ScanNetwork::builder();
        let a = b.sib("A", None);
        let bb = b.sib("B", Some(a));
        let t = b.tdr("T", 4, Some(bb), None);
        let mut net = b.build().unwrap();
        net.sib_mut(a).unwrap().update_cell = true;
        net.sib_mut(bb).unwrap().update_cell = true;
        let expect: Vec<ScanCell> =
            (0..4).map(|i| ScanCell::Tdr(t, i)).chain([ScanCell::Sib(bb), ScanCell::Sib(a)]).collect();
        assert_eq!(net.active_scan_path(), expect);
    }

    #[test]
    fn configuration_vectors() {
        let (mut net, sib3, _, sib2, _) = two_sib();
        net.csu_str("01").unwrap();
        assert!(net.is_open(sib2));
        assert!(!net.is_open(sib3));
        assert_eq!(net.path_len(), 18);

        let (mut net, sib3, _, sib2, _) = two_sib();
        net.csu_str("10").unwrap();
        assert!(net.is_open(sib3));
        assert!(!net.is_open(sib2));
    }

    #[test]
    fn length_mismatch_leaves_state() {
        let (mut net, ..) = two_sib();
        let before = net.clone();
        assert_eq!(net.csu_str("011"), Err(ScanError::LengthMismatch { expected: 2, got: 3 }));
        assert_eq!(net, before);
    }

    #[test]
    fn capture_reads_back_configuration() {
        let (mut net, ..) = two_sib();
        net.csu_str("10").unwrap();
        // path now [TDR-1 x16, SIB-3, SIB-2]; SIB cells capture their update cells
        let out = net.csu(&[vec![false; 16], vec![true, false]].concat()).unwrap();
        assert!(!out[0]);
        assert!(out[1]);
    }

    #[test]
    fn tdr_captures_instrument_lsb_aligned() {
        let mut b = ScanNetwork::builder();
        let s = b.sib("S", None);
        let reg = FixedRegister { value: vec![true, false, true, true], fault: false };
        let t = b.tdr("T", 3, Some(s), Some(InstrumentModel::Fixed(reg)));
        let mut net = b.build().unwrap();
        net.csu_str("1").unwrap();
        let out = net.csu_str("0001").unwrap();
        // cells [0,1,1] then SIB=1; emitted TDO-first
        assert_eq!(out, "1110");
        assert_eq!(net.tdr(t).unwrap().shadow_reg, vec![false, false, false]);
    }

    #[test]
    fn builder_rejects_bad_structure() {
        let mut b = ScanNetwork::builder();
        let t = b.tdr("T", 4, None, None);
        b.sib("S", Some(t));
        assert_eq!(b.build(), Err(ScanError::ParentNotSib(t)));

        let mut b = ScanNetwork::builder();
        b.sib("S", None);
        b.sib("S", None);
        assert_eq!(b.build(), Err(ScanError::DuplicateName("S".into())));

        let mut b = ScanNetwork::builder();
        b.tdr("T", 0, None, None);
        assert_eq!(b.build(), Err(ScanError::ZeroWidth("T".into())));
    }

    #[test]
    fn flag_reduction() {
        let (mut net, sib3, _, sib2, _) = two_sib();
        assert_eq!(net.propagate_flags(), Flags { f: false, c: false });
        net.sib_mut(sib3).unwrap().flag_f = true;
        assert!(net.propagate_flags().f);
        net.sib_mut(sib3).unwrap().flag_x = true;
        assert_eq!(net.propagate_flags(), Flags { f: false, c: false });
        net.sib_mut(sib2).unwrap().flag_c = true;
        assert_eq!(net.propagate_flags(), Flags { f: false, c: true });
    }

    #[test]
    fn reset_restores_all_closed() {
        let (mut net, sib3, ..) = two_sib();
        net.csu_str("11").unwrap();
        net.sib_mut(sib3).unwrap().flag_f = true;
        net.reset();
        assert_eq!(net.path_len(), 2);
        assert_eq!(net.propagate_flags(), Flags::default());
        assert!(net.nodes().iter().filter_map(Node::as_tdr).all(|t| !t.shadow_reg.contains(&true)));
    }

    #[test]
    fn bit_strings() {
        assert_eq!(parse_bits("0110").unwrap(), vec![false, true, true, false]);
        assert_eq!(parse_bits("01x"), Err(ScanError::BadBit('x')));
        assert_eq!(format_bits(&[true, false]), "10");
    }
}
