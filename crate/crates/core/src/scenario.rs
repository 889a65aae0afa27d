//! Scenario files: which network to load, what happens at which cycle, and
//! what the run is expected to show.
//!
//! ```text
//! network <path>
//! stimulus <tdr> <path>          # ADC stimulus file for an xadc TDR
//! playback <tdr> <path>          # IMU sample file for an imu TDR
//! horizon <cycles>
//! seed <n>
//! at <cycle> reset
//! at <cycle> stimulus <tdr> temp|vcc <value>
//! at <cycle> inject <tdr> bitflip <bit> | stuck <value> | external
//! at <cycle> access read <tdr>
//! at <cycle> access write <tdr> 0x<hex> | 0b<bits>
//! at <cycle> mask <sib>
//! at <cycle> unmask <sib>
//! expect interrupt within <cycles>
//! expect localized <hex4>... | none
//! expect latency <detection> <localization>
//! ```
//!
//! Paths are relative to the scenario file. Events at the same cycle run in
//! file order; `expect` lines may appear anywhere.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::{AdcChannel, FaultKind};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriteValue {
    Hex(u64),
    /// MSB first; must match the TDR width exactly.
    Bits(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Reset,
    Stimulus { node: String, kind: AdcChannel, value: f64 },
    Inject { node: String, fault: FaultKind },
    Read { node: String },
    Write { node: String, value: WriteValue },
    Mask { node: String },
    Unmask { node: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at_cycle: u64,
    pub action: Action,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "expect", rename_all = "snake_case")]
pub enum Expectation {
    InterruptWithin { cycles: u64 },
    LocalizedEquals { addresses: Vec<u16> },
    LatencyEquals { detection: u64, localization: u64 },
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::InterruptWithin { cycles } => write!(f, "interrupt within {cycles}"),
            Expectation::LocalizedEquals { addresses } if addresses.is_empty() => f.write_str("localized none"),
            Expectation::LocalizedEquals { addresses } => {
                f.write_str("localized")?;
                for a in addresses {
                    write!(f, " {a:04X}")?;
                }
                Ok(())
            }
            Expectation::LatencyEquals { detection, localization } => {
                write!(f, "latency {detection} {localization}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network_file: PathBuf,
    pub stimulus_files: Vec<(String, PathBuf)>,
    pub playback_files: Vec<(String, PathBuf)>,
    /// Sorted by cycle; ties keep file order.
    pub events: Vec<Event>,
    pub expectations: Vec<Expectation>,
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn last_event_cycle(&self) -> Option<u64> {
        self.events.iter().map(|e| e.at_cycle).max()
    }
}

fn parse_u64(tok: &str) -> Result<u64, String> {
    let parsed = match tok.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => tok.parse(),
    };
    parsed.map_err(|_| format!("`{tok}` is not a non-negative integer"))
}

fn parse_address(tok: &str) -> Result<u16, String> {
    let digits = tok.strip_prefix("0x").unwrap_or(tok);
    if digits.len() == 4 {
        if let Ok(a) = u16::from_str_radix(digits, 16) {
            return Ok(a);
        }
    }
    Err(format!("`{tok}` is not a 4-digit hex address"))
}

fn parse_action(words: &[&str]) -> Result<Action, String> {
    let node = |i: usize| -> Result<String, String> {
        words.get(i).map(|s| s.to_string()).ok_or_else(|| "missing node name".to_string())
    };
    let arity = |n: usize| -> Result<(), String> {
        if words.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {} argument(s), found {}", words[0], n - 1, words.len() - 1))
        }
    };
    match words.first().copied() {
        Some("reset") => {
            arity(1)?;
            Ok(Action::Reset)
        }
        Some("stimulus") => {
            arity(4)?;
            let kind = words[2].parse()?;
            let value = words[3].parse::<f64>().map_err(|_| format!("`{}` is not a number", words[3]))?;
            Ok(Action::Stimulus { node: node(1)?, kind, value })
        }
        Some("inject") => {
            let fault = match words.get(2).copied() {
                Some("bitflip") => {
                    arity(4)?;
                    let bit = parse_u64(words[3])?;
                    let bit = u8::try_from(bit).map_err(|_| format!("bit index {bit} out of range"))?;
                    FaultKind::BitFlip { bit }
                }
                Some("stuck") => {
                    arity(4)?;
                    let value = parse_u64(words[3])?;
                    let value = u16::try_from(value).map_err(|_| format!("stuck value {value} exceeds 16 bits"))?;
                    FaultKind::StuckValue { value }
                }
                Some("external") => {
                    arity(3)?;
                    FaultKind::ExternalTrigger
                }
                other => {
                    return Err(format!(
                        "expected bitflip, stuck or external, found {}",
                        other.map_or("nothing".into(), |o| format!("`{o}`"))
                    ))
                }
            };
            Ok(Action::Inject { node: node(1)?, fault })
        }
        Some("access") => match words.get(1).copied() {
            Some("read") => {
                arity(3)?;
                Ok(Action::Read { node: node(2)? })
            }
            Some("write") => {
                arity(4)?;
                let lit = words[3];
                let value = if let Some(bits) = lit.strip_prefix("0b") {
                    WriteValue::Bits(crate::scan::parse_bits(bits).map_err(|e| e.to_string())?)
                } else if lit.starts_with("0x") {
                    WriteValue::Hex(parse_u64(lit)?)
                } else {
                    return Err(format!("write value `{lit}` must start with 0x or 0b"));
                };
                Ok(Action::Write { node: node(2)?, value })
            }
            _ => Err("expected `access read <tdr>` or `access write <tdr> <value>`".into()),
        },
        Some("mask") => {
            arity(2)?;
            Ok(Action::Mask { node: node(1)? })
        }
        Some("unmask") => {
            arity(2)?;
            Ok(Action::Unmask { node: node(1)? })
        }
        Some(other) => Err(format!("unknown action `{other}`")),
        None => Err("missing action".into()),
    }
}

fn parse_expectation(words: &[&str]) -> Result<Expectation, String> {
    match words {
        ["interrupt", "within", n] => Ok(Expectation::InterruptWithin { cycles: parse_u64(n)? }),
        ["localized", "none"] => Ok(Expectation::LocalizedEquals { addresses: Vec::new() }),
        ["localized", rest @ ..] if !rest.is_empty() => Ok(Expectation::LocalizedEquals {
            addresses: rest.iter().map(|t| parse_address(t)).collect::<Result<_, _>>()?,
        }),
        ["latency", d, l] => Ok(Expectation::LatencyEquals { detection: parse_u64(d)?, localization: parse_u64(l)? }),
        _ => Err(format!("unknown expectation `{}`", words.join(" "))),
    }
}

/// Parses scenario text. File references are kept as written.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<ScenarioError>> {
    let mut sc = Scenario::default();
    let mut network = None;
    let mut errors = Vec::new();
    let mut horizon_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let result: Result<(), String> = (|| {
            match words[0] {
                "network" => match words[..] {
                    [_, path] if network.is_none() => network = Some(PathBuf::from(path)),
                    [_, _] => return Err("duplicate `network` directive".into()),
                    _ => return Err("expected `network <path>`".into()),
                },
                "stimulus" | "playback" => {
                    let [kw, node, path] = words[..] else {
                        return Err(format!("expected `{} <tdr> <path>`", words[0]));
                    };
                    let entry = (node.to_string(), PathBuf::from(path));
                    if kw == "stimulus" {
                        sc.stimulus_files.push(entry);
                    } else {
                        sc.playback_files.push(entry);
                    }
                }
                "horizon" => {
                    let [_, n] = words[..] else {
                        return Err("expected `horizon <cycles>`".into());
                    };
                    sc.horizon = Some(parse_u64(n)?);
                    horizon_line = line;
                }
                "seed" => {
                    let [_, n] = words[..] else {
                        return Err("expected `seed <n>`".into());
                    };
                    sc.seed = Some(parse_u64(n)?);
                }
                "at" => {
                    let at_cycle = parse_u64(words.get(1).ok_or("missing cycle after `at`")?)?;
                    let action = parse_action(&words[2..])?;
                    sc.events.push(Event { at_cycle, action, line });
                }
                "expect" => sc.expectations.push(parse_expectation(&words[1..])?),
                other => return Err(format!("unknown directive `{other}`")),
            }
            Ok(())
        })();
        if let Err(message) = result {
            errors.push(ScenarioError { line, message });
        }
    }

    match network {
        Some(path) => sc.network_file = path,
        None => errors
            .push(ScenarioError { line: text.lines().count().max(1), message: "missing `network` directive".into() }),
    }
    sc.events.sort_by_key(|e| e.at_cycle);
    if let (Some(h), Some(last)) = (sc.horizon, sc.last_event_cycle()) {
        if h < last {
            errors.push(ScenarioError {
                line: horizon_line,
                message: format!("horizon {h} ends before the last event at cycle {last}"),
            });
        }
    }
    if errors.is_empty() {
        Ok(sc)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(errors)
    }
}

/// The bundled single-fault scenario text.
pub const SINGLE_INTERNAL_FAULT: &str = include_str!("../data/single_internal_fault.scn");
/// The bundled double-fault scenario text (reset between the faults).
pub const DOUBLE_FAULT: &str = include_str!("../data/double_fault.scn");
