//! Top-level cycle loop.
//!
//! Each cycle runs, in order: scenario events due this cycle, instrument
//! steps, one clock of the scan port, flag synchronization and propagation,
//! and one Instrument Manager tick. A trace record is appended at the end.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault_manager::{
    mask_node, unmask_node, FaultManagerError, ImPhase, InstrumentManager, LatencyReport, RomMap,
};
use crate::instruments::{
    bits_to_word, parse_playback, parse_stimulus, word_to_bits, FaultSpec, ImuSample, InstrumentError, InstrumentModel,
};
use crate::netlist::{elaborate, parse_network, ElaborateError, ParseError};
use crate::retarget::{extract, plan_access, AccessPlan, AccessRequest};
use crate::scan::{format_bits, CsuPhase, NodeId, ScanError, ScanNetwork};
use crate::scenario::{parse_scenario, Action, Expectation, Scenario, ScenarioError, WriteValue};

/// Horizon used when neither the scenario nor the caller sets one.
pub const DEFAULT_HORIZON: u64 = 1000;
/// IMU samples generated when no playback file is bound (capped).
const MAX_GENERATED_SAMPLES: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {}", join(.errors))]
    Network { path: PathBuf, errors: Vec<ParseError> },
    #[error("{path}: {}", join(.errors))]
    Scenario { path: PathBuf, errors: Vec<ScenarioError> },
    #[error("{path}: {source}")]
    InstrumentFile { path: PathBuf, source: InstrumentError },
    #[error(transparent)]
    Elaborate(#[from] ElaborateError),
    #[error("scenario line {line}: {message}")]
    Event { line: usize, message: String },
    #[error("horizon {horizon} ends before the last event at cycle {last}")]
    Horizon { horizon: u64, last: u64 },
}

fn join<E: std::fmt::Display>(errors: &[E]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub f: bool,
    pub c: bool,
    /// OR of raw instrument fault outputs, before masking.
    pub alarm: bool,
    pub interrupt: bool,
    pub phase: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tdi: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tdo: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitting: Option<u16>,
    pub localized: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadRecord {
    pub cycle: u64,
    pub node: String,
    pub bits: String,
    pub value: u64,
}

/// One detection/localization run of the Instrument Manager between resets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub cycle_of_alarm: u64,
    pub cycle_of_interrupt: Option<u64>,
    pub cycle_localization_done: Option<u64>,
    pub localized: Vec<u16>,
    pub no_fault_found: bool,
    pub latency: Option<LatencyReport>,
}

impl Episode {
    fn from_im(im: &InstrumentManager) -> Option<Self> {
        Some(Self {
            cycle_of_alarm: im.cycle_of_alarm?,
            cycle_of_interrupt: im.cycle_of_interrupt,
            cycle_localization_done: im.cycle_localization_done,
            localized: im.localized.clone(),
            no_fault_found: im.no_fault_found,
            latency: im.latency_report().ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub expectation: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RomEntry {
    pub node: String,
    pub address: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub network: String,
    pub rom: Vec<RomEntry>,
    pub cycles: u64,
    pub trace: Vec<TraceRecord>,
    pub reads: Vec<ReadRecord>,
    pub scan_errors: Vec<String>,
    pub episodes: Vec<Episode>,
    pub localized: Vec<u16>,
    pub latency: Option<LatencyReport>,
    pub verdicts: Vec<Verdict>,
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

#[derive(Debug, Clone)]
enum Resolved {
    Reset,
    Stimulus(NodeId, crate::instruments::AdcChannel, f64),
    Inject(NodeId, crate::instruments::FaultKind),
    Access(AccessRequest),
    Mask(NodeId),
    Unmask(NodeId),
}

#[derive(Debug)]
struct ActiveCsu {
    bits: Vec<bool>,
    phase: CsuPhase,
    shifted: usize,
    out: Vec<bool>,
}

#[derive(Debug)]
struct PortJob {
    plan: AccessPlan,
    step: usize,
    outputs: Vec<Vec<bool>>,
    active: Option<ActiveCsu>,
}

/// Serial scan port: runs queued access plans one clock at a time. One CSU
/// takes `path length + 2` cycles.
#[derive(Debug, Default)]
struct ScanPort {
    queued: Vec<AccessRequest>,
    job: Option<PortJob>,
}

struct PortTick {
    tdi: Option<bool>,
    tdo: Option<bool>,
    finished: Option<(AccessPlan, Vec<Vec<bool>>)>,
    error: Option<String>,
}

impl ScanPort {
    fn idle(&self) -> bool {
        self.queued.is_empty() && self.job.is_none()
    }

    fn clear(&mut self) {
        self.queued.clear();
        self.job = None;
    }

    fn tick(&mut self, net: &mut ScanNetwork) -> PortTick {
        let mut t = PortTick { tdi: None, tdo: None, finished: None, error: None };
        if self.job.is_none() && !self.queued.is_empty() {
            let requests = std::mem::take(&mut self.queued);
            match plan_access(net, &requests) {
                Ok(plan) if plan.steps.is_empty() => return t,
                Ok(plan) => self.job = Some(PortJob { plan, step: 0, outputs: Vec::new(), active: None }),
                Err(e) => {
                    t.error = Some(e.to_string());
                    return t;
                }
            }
        }
        let Some(job) = &mut self.job else { return t };

        match &mut job.active {
            None => {
                let bits = job.plan.steps[job.step].0.clone();
                let expected = net.path_len();
                if bits.len() != expected {
                    t.error = Some(ScanError::LengthMismatch { expected, got: bits.len() }.to_string());
                    self.job = None;
                    return t;
                }
                net.capture();
                let phase = if bits.is_empty() { CsuPhase::Update } else { CsuPhase::Shift };
                job.active = Some(ActiveCsu { bits, phase, shifted: 0, out: Vec::new() });
            }
            Some(csu) if csu.phase == CsuPhase::Shift => {
                // rightmost character goes in first
                let bit = csu.bits[csu.bits.len() - 1 - csu.shifted];
                let out = net.shift_bit(bit);
                csu.out.push(out);
                csu.shifted += 1;
                if csu.shifted == csu.bits.len() {
                    csu.phase = CsuPhase::Update;
                }
                t.tdi = Some(bit);
                t.tdo = Some(out);
            }
            Some(csu) => {
                net.update();
                job.outputs.push(std::mem::take(&mut csu.out));
                job.active = None;
                job.step += 1;
                if job.step == job.plan.steps.len() {
                    let job = self.job.take().expect("job present");
                    t.finished = Some((job.plan, job.outputs));
                }
            }
        }
        t
    }
}

fn read_file(path: &Path) -> Result<String, SimError> {
    fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })
}

/// Reads a network file and elaborates it.
pub fn load_network(path: &Path) -> Result<(ScanNetwork, RomMap), SimError> {
    let text = read_file(path)?;
    let desc = parse_network(&text).map_err(|errors| SimError::Network { path: path.to_path_buf(), errors })?;
    Ok(elaborate(&desc)?)
}

/// Reads and parses a scenario file. Returns the scenario and the directory
/// its relative paths are resolved against.
pub fn load_scenario(path: &Path) -> Result<(Scenario, PathBuf), SimError> {
    let text = read_file(path)?;
    let sc = parse_scenario(&text).map_err(|errors| SimError::Scenario { path: path.to_path_buf(), errors })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((sc, base))
}

pub fn run_file(path: &Path, options: &RunOptions) -> Result<SimReport, SimError> {
    let (sc, base) = load_scenario(path)?;
    run(&sc, &base, options)
}

fn generated_playback(seed: u64, count: u64) -> Vec<ImuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ImuSample {
            accel: [rng.random(), rng.random(), rng.random()],
            gyro: [rng.random(), rng.random(), rng.random()],
            temp_raw: rng.random(),
        })
        .collect()
}

struct Sim<'a> {
    sc: &'a Scenario,
    net: ScanNetwork,
    rom: RomMap,
    im: InstrumentManager,
    port: ScanPort,
    events: VecDeque<(u64, usize, Resolved)>,
    report: SimReport,
}

impl Sim<'_> {
    fn resolve_node(&self, name: &str, line: usize) -> Result<NodeId, SimError> {
        self.net
            .find(name)
            .ok_or_else(|| SimError::Event { line, message: format!("no node named `{name}` in the network") })
    }

    fn resolve(&self) -> Result<VecDeque<(u64, usize, Resolved)>, SimError> {
        let mut out = VecDeque::new();
        for ev in &self.sc.events {
            let line = ev.line;
            let bad = |message: String| SimError::Event { line, message };
            let r = match &ev.action {
                Action::Reset => Resolved::Reset,
                Action::Stimulus { node, kind, value } => {
                    let id = self.resolve_node(node, line)?;
                    match self.net.instrument(id) {
                        Some(InstrumentModel::Adc(_)) => {}
                        _ => return Err(bad(format!("`{node}` is not bound to an ADC instrument"))),
                    }
                    crate::instruments::adc_convert(*value, *kind).map_err(|e| bad(e.to_string()))?;
                    Resolved::Stimulus(id, *kind, *value)
                }
                Action::Inject { node, fault } => {
                    let id = self.resolve_node(node, line)?;
                    let mut probe =
                        self.net.instrument(id).cloned().ok_or_else(|| bad(format!("`{node}` has no instrument")))?;
                    probe.inject_fault(FaultSpec::new(*fault, ev.at_cycle)).map_err(|e| bad(e.to_string()))?;
                    Resolved::Inject(id, *fault)
                }
                Action::Read { node } => Resolved::Access(AccessRequest::read(self.tdr_id(node, line)?.0)),
                Action::Write { node, value } => {
                    let (id, width) = self.tdr_id(node, line)?;
                    let bits = match value {
                        WriteValue::Bits(b) if b.len() == width => b.clone(),
                        WriteValue::Bits(b) => {
                            return Err(bad(format!("`{node}` is {width} bits wide, value has {}", b.len())))
                        }
                        WriteValue::Hex(v) if width >= 64 || v >> width == 0 => word_to_bits(*v, width),
                        WriteValue::Hex(v) => return Err(bad(format!("{v:#x} does not fit in {width} bits"))),
                    };
                    Resolved::Access(AccessRequest::write(id, bits))
                }
                Action::Mask { node } | Action::Unmask { node } => {
                    let id = self.resolve_node(node, line)?;
                    if self.net.sib(id).is_none() {
                        return Err(bad(format!("`{node}` is not a SIB")));
                    }
                    if matches!(ev.action, Action::Mask { .. }) {
                        Resolved::Mask(id)
                    } else {
                        Resolved::Unmask(id)
                    }
                }
            };
            out.push_back((ev.at_cycle, line, r));
        }
        Ok(out)
    }

    fn tdr_id(&self, name: &str, line: usize) -> Result<(NodeId, usize), SimError> {
        let id = self.resolve_node(name, line)?;
        let width = self
            .net
            .tdr(id)
            .map(|t| t.width)
            .ok_or_else(|| SimError::Event { line, message: format!("`{name}` is not a TDR") })?;
        Ok((id, width))
    }

    fn close_episode(&mut self) {
        if let Some(ep) = Episode::from_im(&self.im) {
            self.report.episodes.push(ep);
        }
    }

    fn apply(&mut self, cycle: u64, line: usize, action: Resolved) -> Result<(), SimError> {
        let err = |e: FaultManagerError| SimError::Event { line, message: e.to_string() };
        match action {
            Resolved::Reset => {
                self.close_episode();
                self.im.reset();
                self.net.reset();
                self.port.clear();
            }
            Resolved::Stimulus(id, kind, value) => {
                if let Some(InstrumentModel::Adc(adc)) = self.net.instrument_mut(id) {
                    adc.set_stimulus(kind, value).map_err(|e| SimError::Event { line, message: e.to_string() })?;
                }
            }
            Resolved::Inject(id, fault) => {
                if let Some(inst) = self.net.instrument_mut(id) {
                    inst.inject_fault(FaultSpec::new(fault, cycle))
                        .map_err(|e| SimError::Event { line, message: e.to_string() })?;
                }
            }
            Resolved::Access(req) => self.port.queued.push(req),
            Resolved::Mask(id) => mask_node(&mut self.net, &self.rom, id).map_err(err)?,
            Resolved::Unmask(id) => unmask_node(&mut self.net, &self.rom, id).map_err(err)?,
        }
        Ok(())
    }

    fn resolved_expectations(&self) -> bool {
        self.sc.expectations.iter().all(|e| match e {
            Expectation::InterruptWithin { .. } => self.im.interrupt,
            _ => self.im.is_done(),
        })
    }

    fn quiescent(&self) -> bool {
        self.events.is_empty()
            && self.port.idle()
            && matches!(self.im.phase, ImPhase::Idle | ImPhase::Done)
            && self.resolved_expectations()
    }

    fn cycle(&mut self, cycle: u64) -> Result<(), SimError> {
        while self.events.front().is_some_and(|(c, ..)| *c == cycle) {
            let (_, line, action) = self.events.pop_front().expect("front checked");
            self.apply(cycle, line, action)?;
        }

        self.net.step_instruments(cycle);

        let port = self.port.tick(&mut self.net);
        if let Some(e) = port.error {
            self.report.scan_errors.push(format!("cycle {cycle}: {e}"));
        }
        if let Some((plan, outputs)) = port.finished {
            for (id, bits) in extract(&plan, &outputs) {
                self.report.reads.push(ReadRecord {
                    cycle,
                    node: self.net.name(id).to_string(),
                    value: bits_to_word(&bits),
                    bits: format_bits(&bits),
                });
            }
        }

        self.net.sync_instrument_flags();
        let flags = self.net.propagate_flags();
        self.im.tick(flags, &self.rom, &self.net, cycle);

        self.report.trace.push(TraceRecord {
            cycle,
            f: flags.f,
            c: flags.c,
            alarm: self.net.any_instrument_fault(),
            interrupt: self.im.interrupt,
            phase: phase_label(&self.im.phase),
            tdi: port.tdi,
            tdo: port.tdo,
            emitting: self.im.emitting,
            localized: self.im.localized.clone(),
        });
        Ok(())
    }
}

fn phase_label(phase: &ImPhase) -> String {
    match phase {
        ImPhase::Idle => "idle".into(),
        ImPhase::Detecting { stage } => format!("detect{stage}"),
        ImPhase::Localizing { .. } => "localize".into(),
        ImPhase::Done => "done".into(),
    }
}

fn evaluate(exp: &Expectation, im: &InstrumentManager) -> Verdict {
    let (passed, detail) = match exp {
        Expectation::InterruptWithin { cycles } => match (im.cycle_of_alarm, im.cycle_of_interrupt) {
            (Some(a), Some(i)) => (i - a <= *cycles, format!("interrupt {} cycles after F rose", i - a)),
            (Some(a), None) => (false, format!("F rose at cycle {a} but no interrupt before the horizon")),
            _ => (false, "F never rose".into()),
        },
        Expectation::LocalizedEquals { addresses } => {
            let got = im.localized.iter().map(|a| format!("{a:04X}")).collect::<Vec<_>>().join(" ");
            if !im.is_done() && !addresses.is_empty() {
                (false, "localization did not complete".into())
            } else {
                (&im.localized == addresses, format!("localized [{got}]"))
            }
        }
        Expectation::LatencyEquals { detection, localization } => match im.latency_report() {
            Ok(r) => (
                r.detection_cycles == *detection && r.localization_cycles == *localization,
                format!("detection {} cycles, localization {} cycles", r.detection_cycles, r.localization_cycles),
            ),
            Err(e) => (false, e.to_string()),
        },
    };
    Verdict { expectation: exp.to_string(), passed, detail }
}

/// Runs a parsed scenario. Relative file references resolve against `base`.
pub fn run(sc: &Scenario, base: &Path, options: &RunOptions) -> Result<SimReport, SimError> {
    let network_path = base.join(&sc.network_file);
    let (mut net, rom) = load_network(&network_path)?;

    let horizon = options.horizon.or(sc.horizon).unwrap_or(DEFAULT_HORIZON);
    if let Some(last) = sc.last_event_cycle() {
        if horizon < last {
            return Err(SimError::Horizon { horizon, last });
        }
    }
    let seed = options.seed.or(sc.seed).unwrap_or(0);

    let mut stimulus_events = Vec::new();
    for (node, file) in &sc.stimulus_files {
        let path = base.join(file);
        let id = net.find(node).filter(|&id| matches!(net.instrument(id), Some(InstrumentModel::Adc(_))));
        let id = id.ok_or_else(|| SimError::Event {
            line: 0,
            message: format!("`{node}` is not bound to an ADC instrument"),
        })?;
        let points = parse_stimulus(&read_file(&path)?).map_err(|source| SimError::InstrumentFile { path, source })?;
        stimulus_events.extend(points.into_iter().map(|p| (p.cycle, 0, Resolved::Stimulus(id, p.kind, p.value))));
    }

    let imu_ids: Vec<NodeId> = net
        .nodes()
        .iter()
        .filter_map(|n| n.as_tdr())
        .filter(|t| matches!(t.instrument, Some(InstrumentModel::Imu(_))))
        .map(|t| t.id)
        .collect();
    for (k, id) in imu_ids.iter().enumerate() {
        let samples = generated_playback(seed.wrapping_add(k as u64), (horizon + 1).min(MAX_GENERATED_SAMPLES));
        if let Some(InstrumentModel::Imu(imu)) = net.instrument_mut(*id) {
            imu.set_playback(samples);
        }
    }
    for (node, file) in &sc.playback_files {
        let path = base.join(file);
        let id = net.find(node).filter(|&id| matches!(net.instrument(id), Some(InstrumentModel::Imu(_))));
        let id = id.ok_or_else(|| SimError::Event {
            line: 0,
            message: format!("`{node}` is not bound to an IMU instrument"),
        })?;
        let samples = parse_playback(&read_file(&path)?).map_err(|source| SimError::InstrumentFile { path, source })?;
        if let Some(InstrumentModel::Imu(imu)) = net.instrument_mut(id) {
            imu.set_playback(samples);
        }
    }

    let mut report = SimReport { network: sc.network_file.display().to_string(), ..Default::default() };
    report.rom = rom
        .by_address()
        .into_iter()
        .map(|(id, a)| RomEntry { node: net.name(id).to_string(), address: format!("{a:04X}") })
        .collect();

    let mut sim = Sim {
        sc,
        net,
        rom,
        im: InstrumentManager::default(),
        port: ScanPort::default(),
        events: VecDeque::new(),
        report,
    };
    let mut events: Vec<_> = stimulus_events;
    events.extend(sim.resolve()?);
    // file stimuli come first at equal cycles; the sort is stable
    events.sort_by_key(|(c, ..)| *c);
    sim.events = events.into();

    for cycle in 0..=horizon {
        sim.cycle(cycle)?;
        sim.report.cycles = cycle + 1;
        if sim.quiescent() {
            break;
        }
    }

    sim.close_episode();
    sim.report.localized = sim.im.localized.clone();
    sim.report.latency = sim.im.latency_report().ok();
    sim.report.verdicts = sc.expectations.iter().map(|e| evaluate(e, &sim.im)).collect();
    Ok(sim.report)
}
