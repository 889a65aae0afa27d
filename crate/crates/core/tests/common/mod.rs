//! Random networks and independent reference models shared by the
//! integration tests. Nothing here calls into scan-path or CSU code.
#![allow(dead_code)]

use ijtag_health::instruments::{word_to_bits, FixedRegister, InstrumentModel};
use ijtag_health::netlist::{DeclKind, NetworkDesc, NodeDecl};
use ijtag_health::scan::{Node, ScanNetwork};
use ijtag_health::NodeId;
use rand::{Rng, RngExt};

pub struct Limits {
    pub max_nodes: usize,
    pub max_depth: usize,
    pub max_width: usize,
    pub instruments: bool,
}

pub const SMALL: Limits = Limits { max_nodes: 8, max_depth: 3, max_width: 32, instruments: true };

/// Builds a random SIB/TDR tree with at least one TDR, then scrambles its
/// configuration and register contents.
pub fn random_network(rng: &mut impl Rng, limits: &Limits) -> ScanNetwork {
    let count = rng.random_range(1..=limits.max_nodes);
    let mut b = ScanNetwork::builder();
    // SIBs that may still take children, with the depth those children get
    let mut sibs: Vec<(NodeId, usize)> = Vec::new();
    let mut has_tdr = false;
    for i in 0..count {
        let parent =
            if sibs.is_empty() || rng.random_bool(0.3) { None } else { Some(sibs[rng.random_range(0..sibs.len())]) };
        let depth = parent.map_or(0, |(_, d)| d);
        let make_tdr = (i == count - 1 && !has_tdr) || rng.random_bool(0.45);
        if make_tdr {
            let width = rng.random_range(1..=limits.max_width);
            let inst = limits.instruments.then(|| {
                let bits = (0..rng.random_range(1..=40)).map(|_| rng.random_bool(0.5)).collect();
                InstrumentModel::Fixed(FixedRegister { value: bits, fault: false })
            });
            b.tdr(format!("T{i}"), width, parent.map(|p| p.0), inst);
            has_tdr = true;
        } else {
            let id = b.sib(format!("S{i}"), parent.map(|p| p.0));
            if depth < limits.max_depth {
                sibs.push((id, depth + 1));
            }
        }
    }
    let mut net = b.build().expect("generated network is well formed");
    scramble(&mut net, rng);
    net
}

pub fn scramble(net: &mut ScanNetwork, rng: &mut impl Rng) {
    let ids: Vec<NodeId> = net.nodes().iter().map(Node::id).collect();
    for id in ids {
        match net.node_mut(id).unwrap() {
            Node::Sib(s) => {
                s.update_cell = rng.random_bool(0.5);
                s.shift_cell = rng.random_bool(0.5);
            }
            Node::Tdr(t) => {
                for b in t.shift_reg.iter_mut().chain(t.shadow_reg.iter_mut()) {
                    *b = rng.random_bool(0.5);
                }
            }
        }
    }
}

/// Reference scan cell: node id plus bit index (0 for SIBs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefCell {
    pub node: NodeId,
    pub bit: usize,
    pub is_sib: bool,
}

/// Reference path: walk each segment, expanding open SIBs' children before
/// the SIB itself.
pub fn reference_path(net: &ScanNetwork) -> Vec<RefCell> {
    fn walk(net: &ScanNetwork, seg: &[NodeId], out: &mut Vec<RefCell>) {
        for &id in seg {
            match net.node(id).unwrap() {
                Node::Sib(s) => {
                    if s.update_cell {
                        walk(net, &s.children, out);
                    }
                    out.push(RefCell { node: id, bit: 0, is_sib: true });
                }
                Node::Tdr(t) => {
                    for bit in 0..t.width {
                        out.push(RefCell { node: id, bit, is_sib: false });
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(net, net.top(), &mut out);
    out
}

/// Capture value of a TDR computed directly from its instrument or shadow.
pub fn reference_capture(net: &ScanNetwork, id: NodeId) -> Vec<bool> {
    let t = net.tdr(id).unwrap();
    match &t.instrument {
        None => t.shadow_reg.clone(),
        Some(inst) => {
            let v = inst.capture_value();
            (0..t.width)
                .map(|i| {
                    // right-align v into width
                    let offset = t.width as isize - v.len() as isize;
                    let j = i as isize - offset;
                    j >= 0 && v[j as usize]
                })
                .collect()
        }
    }
}

/// Naive serial shift register: returns (bits at TDO, final register).
pub fn reference_csu(net: &ScanNetwork, input: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let path = reference_path(net);
    let mut reg: Vec<bool> = path
        .iter()
        .map(|c| if c.is_sib { net.sib(c.node).unwrap().update_cell } else { reference_capture(net, c.node)[c.bit] })
        .collect();
    let n = reg.len();
    let mut out = Vec::with_capacity(n);
    // the rightmost character is clocked in first
    for &b in input.iter().rev() {
        out.push(reg[n - 1]);
        for k in (1..n).rev() {
            reg[k] = reg[k - 1];
        }
        reg[0] = b;
    }
    (out, reg)
}

pub fn random_bits(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(0.5)).collect()
}

pub fn word(rng: &mut impl Rng, width: usize) -> Vec<bool> {
    word_to_bits(rng.random(), width)
}

/// Random valid network description with unique names and addresses.
pub fn random_desc(rng: &mut impl Rng) -> NetworkDesc {
    fn nodes(rng: &mut impl Rng, depth: usize, next: &mut u32, addrs: &mut Vec<u16>) -> Vec<NodeDecl> {
        let n = rng.random_range(if depth == 0 { 1 } else { 0 }..=3);
        (0..n)
            .map(|_| {
                *next += 1;
                let address = loop {
                    let a: u16 = rng.random();
                    if !addrs.contains(&a) {
                        addrs.push(a);
                        break a;
                    }
                };
                let name = format!("{}{}", ["SIB-", "n_", "Tap."][rng.random_range(0..3)], next);
                let kind = if depth < 3 && rng.random_bool(0.5) {
                    DeclKind::Sib { children: nodes(rng, depth + 1, next, addrs) }
                } else {
                    let instrument = match rng.random_range(0..3) {
                        0 => None,
                        1 => Some("xadc".to_string()),
                        _ => Some("imu".to_string()),
                    };
                    DeclKind::Tdr { width: rng.random_range(1..=64), instrument }
                };
                NodeDecl { name, address, kind }
            })
            .collect()
    }
    let mut next = 0;
    let mut addrs = Vec::new();
    NetworkDesc { name: format!("net{}", rng.random_range(0..1000)), nodes: nodes(rng, 0, &mut next, &mut addrs) }
}
