//! Access planning: which CSU vectors open the SIBs in front of the
//! requested TDRs, and where each read value shows up at TDO.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scan::{format_bits, NodeId, ScanCell, ScanError, ScanNetwork};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetargetError {
    #[error("unknown target {0}")]
    UnknownTarget(NodeId),
    #[error("target {0} is not a TDR")]
    NotATdr(NodeId),
    #[error("write value for {target} has {got} bits, TDR is {expected} wide")]
    WidthMismatch { target: NodeId, expected: usize, got: usize },
    #[error("target {0} requested more than once")]
    DuplicateTarget(NodeId),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessMode {
    Read,
    /// Value in TDR cell order (index 0 nearest TDI, i.e. MSB first).
    Write(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub target: NodeId,
    pub mode: AccessMode,
}

impl AccessRequest {
    pub fn read(target: NodeId) -> Self {
        Self { target, mode: AccessMode::Read }
    }

    pub fn write(target: NodeId, value: Vec<bool>) -> Self {
        Self { target, mode: AccessMode::Write(value) }
    }
}

/// One CSU input, in the scan-core bit-string convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsuVector(pub Vec<bool>);

impl CsuVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for CsuVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_bits(&self.0))
    }
}

/// Where a read value appears: `range` indexes the step's TDO output, whose
/// bits arrive LSB first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub step: usize,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPlan {
    pub steps: Vec<CsuVector>,
    pub extraction: BTreeMap<NodeId, Extraction>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanOptions {
    /// Append a CSU that closes every SIB the plan opened.
    pub restore: bool,
}

pub fn plan_access(net: &ScanNetwork, requests: &[AccessRequest]) -> Result<AccessPlan, RetargetError> {
    plan_access_with(net, requests, PlanOptions::default())
}

/// Plans the CSU sequence for `requests` against the network's current
/// configuration. Each configuration step opens one more hierarchy level of
/// every target's gating SIBs at once; the final step performs the access.
/// Unused positions are filled with 0.
pub fn plan_access_with(
    net: &ScanNetwork,
    requests: &[AccessRequest],
    options: PlanOptions,
) -> Result<AccessPlan, RetargetError> {
    let mut seen = BTreeSet::new();
    for req in requests {
        let tdr = match net.node(req.target) {
            None => return Err(RetargetError::UnknownTarget(req.target)),
            Some(n) => n.as_tdr().ok_or(RetargetError::NotATdr(req.target))?,
        };
        if let AccessMode::Write(v) = &req.mode {
            if v.len() != tdr.width {
                return Err(RetargetError::WidthMismatch { target: req.target, expected: tdr.width, got: v.len() });
            }
        }
        if !seen.insert(req.target) {
            return Err(RetargetError::DuplicateTarget(req.target));
        }
    }
    if requests.is_empty() {
        return Ok(AccessPlan::default());
    }

    let required: BTreeSet<NodeId> = requests.iter().flat_map(|r| net.ancestors(r.target)).collect();
    let initially_open: BTreeSet<NodeId> = net.open_sibs().into_iter().collect();
    let mut open = initially_open.clone();
    let mut plan = AccessPlan::default();

    loop {
        let path = net.scan_path_with(|id| open.contains(&id));
        let missing: Vec<NodeId> = required.iter().copied().filter(|id| !open.contains(id)).collect();
        if missing.is_empty() {
            plan.steps.push(access_vector(&path, &open, requests, &mut plan.extraction, plan.steps.len()));
            if options.restore {
                let restore: Vec<bool> =
                    path.iter().map(|c| matches!(c, ScanCell::Sib(id) if initially_open.contains(id))).collect();
                plan.steps.push(CsuVector(restore));
            }
            return Ok(plan);
        }
        let mut next = open.clone();
        let bits = path
            .iter()
            .map(|cell| match *cell {
                ScanCell::Sib(id) => {
                    let bit = open.contains(&id) || required.contains(&id);
                    if bit {
                        next.insert(id);
                    }
                    bit
                }
                ScanCell::Tdr(..) => false,
            })
            .collect();
        plan.steps.push(CsuVector(bits));
        open = next;
    }
}

fn access_vector(
    path: &[ScanCell],
    open: &BTreeSet<NodeId>,
    requests: &[AccessRequest],
    extraction: &mut BTreeMap<NodeId, Extraction>,
    step: usize,
) -> CsuVector {
    let by_target: BTreeMap<NodeId, &AccessMode> = requests.iter().map(|r| (r.target, &r.mode)).collect();
    let n = path.len();
    let mut bits = Vec::with_capacity(n);
    for (pos, cell) in path.iter().enumerate() {
        let bit = match *cell {
            ScanCell::Sib(id) => open.contains(&id),
            ScanCell::Tdr(id, i) => match by_target.get(&id) {
                Some(AccessMode::Write(v)) => v[i],
                Some(AccessMode::Read) => {
                    if i == 0 {
                        let width =
                            path[pos..].iter().take_while(|c| matches!(c, ScanCell::Tdr(t, _) if *t == id)).count();
                        // position p leaves TDO at index n - 1 - p
                        extraction.insert(id, Extraction { step, range: n - pos - width..n - pos });
                    }
                    false
                }
                None => false,
            },
        };
        bits.push(bit);
    }
    CsuVector(bits)
}

/// Runs every step of `plan` and returns the extracted read values in TDR
/// cell order (MSB first).
pub fn execute_plan(net: &mut ScanNetwork, plan: &AccessPlan) -> Result<BTreeMap<NodeId, Vec<bool>>, ScanError> {
    let mut outputs = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        outputs.push(net.csu(&step.0)?);
    }
    Ok(extract(plan, &outputs))
}

/// Pulls read values out of per-step TDO outputs.
pub fn extract(plan: &AccessPlan, outputs: &[Vec<bool>]) -> BTreeMap<NodeId, Vec<bool>> {
    plan.extraction
        .iter()
        .filter_map(|(&id, ex)| {
            let out = outputs.get(ex.step)?;
            Some((id, out[ex.range.clone()].iter().rev().copied().collect()))
        })
        .collect()
}
