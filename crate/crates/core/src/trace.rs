//! Report rendering: text waveform table, value-change dump, JSON.

use std::fmt::Write as _;
use std::str::FromStr;

use vcd::{IdCode, TimescaleUnit, Value};

use crate::fault_manager::NS_PER_CYCLE;
use crate::sim::{SimReport, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Text,
    ValueChange,
    Json,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(TraceFormat::Text),
            "vcd" => Ok(TraceFormat::ValueChange),
            "json" => Ok(TraceFormat::Json),
            other => Err(format!("unknown trace format `{other}` (expected text, vcd or json)")),
        }
    }
}

pub fn emit_trace(report: &SimReport, format: TraceFormat) -> String {
    match format {
        TraceFormat::Text => text(report),
        TraceFormat::ValueChange => value_change(report),
        // a SimReport has only string keys and finite numbers
        TraceFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    }
}

fn bit(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

fn opt_bit(b: Option<bool>) -> char {
    b.map_or('-', bit)
}

fn text(report: &SimReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# network: {}", report.network);
    let _ = writeln!(out, "{:>7} F C INT ALM TDI TDO {:<9} LOCALIZED", "cycle", "PHASE");
    for r in &report.trace {
        let localized = r.localized.iter().map(|a| format!("{a:04X}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            out,
            "{:>7} {} {}  {}   {}   {}   {}  {:<9} {}",
            r.cycle,
            bit(r.f),
            bit(r.c),
            bit(r.interrupt),
            bit(r.alarm),
            opt_bit(r.tdi),
            opt_bit(r.tdo),
            r.phase,
            localized
        );
    }
    for read in &report.reads {
        let _ = writeln!(out, "# read {} at cycle {}: {} ({:#x})", read.node, read.cycle, read.bits, read.value);
    }
    for e in &report.scan_errors {
        let _ = writeln!(out, "# scan error: {e}");
    }
    if let Some(l) = &report.latency {
        let _ = writeln!(
            out,
            "# detection {} cycles ({} ns), localization {} cycles ({} ns)",
            l.detection_cycles, l.detection_ns, l.localization_cycles, l.localization_ns
        );
    }
    for v in &report.verdicts {
        let _ = writeln!(out, "# {} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.expectation, v.detail);
    }
    out
}

type Probe<'a> = (IdCode, &'a dyn Fn(&TraceRecord) -> Option<bool>);

struct Signals {
    f: IdCode,
    c: IdCode,
    interrupt: IdCode,
    alarm: IdCode,
    tdi: IdCode,
    tdo: IdCode,
    addr: IdCode,
}

fn scalar(b: Option<bool>) -> Value {
    match b {
        Some(true) => Value::V1,
        Some(false) => Value::V0,
        None => Value::X,
    }
}

fn addr_bits(a: Option<u16>) -> Vec<Value> {
    (0..16)
        .rev()
        .map(|i| match a {
            Some(a) => scalar(Some((a >> i) & 1 == 1)),
            None => Value::X,
        })
        .collect()
}

fn value_change(report: &SimReport) -> String {
    let mut w = vcd::Writer::new(Vec::new());
    let res: std::io::Result<()> = (|| {
        w.timescale(NS_PER_CYCLE as u32, TimescaleUnit::NS)?;
        w.add_module("ijtag")?;
        let sig = Signals {
            f: w.add_wire(1, "F")?,
            c: w.add_wire(1, "C")?,
            interrupt: w.add_wire(1, "interrupt")?,
            alarm: w.add_wire(1, "alarm")?,
            tdi: w.add_wire(1, "tdi")?,
            tdo: w.add_wire(1, "tdo")?,
            addr: w.add_wire(16, "localized_addr")?,
        };
        w.upscope()?;
        w.enddefinitions()?;

        let mut prev: Option<&TraceRecord> = None;
        for r in &report.trace {
            let last_addr = |r: &TraceRecord| r.localized.last().copied();
            let changed = |get: &dyn Fn(&TraceRecord) -> Option<bool>| prev.is_none_or(|p| get(p) != get(r));
            let mut stamped = false;
            let mut stamp = |w: &mut vcd::Writer<Vec<u8>>| -> std::io::Result<()> {
                if !stamped {
                    w.timestamp(r.cycle)?;
                    stamped = true;
                }
                Ok(())
            };
            let scalars: [Probe; 6] = [
                (sig.f, &|r| Some(r.f)),
                (sig.c, &|r| Some(r.c)),
                (sig.interrupt, &|r| Some(r.interrupt)),
                (sig.alarm, &|r| Some(r.alarm)),
                (sig.tdi, &|r| r.tdi),
                (sig.tdo, &|r| r.tdo),
            ];
            for (id, get) in scalars {
                if changed(get) {
                    stamp(&mut w)?;
                    w.change_scalar(id, scalar(get(r)))?;
                }
            }
            if prev.is_none_or(|p| last_addr(p) != last_addr(r)) {
                stamp(&mut w)?;
                w.change_vector(sig.addr, addr_bits(last_addr(r)))?;
            }
            prev = Some(r);
        }
        if let Some(last) = report.trace.last() {
            w.timestamp(last.cycle + 1)?;
        }
        Ok(())
    })();
    res.expect("writing to a Vec cannot fail");
    String::from_utf8(w.writer().clone()).expect("vcd output is ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_headers() {
        let r = SimReport::default();
        let t = emit_trace(&r, TraceFormat::Text);
        assert_eq!(t.lines().count(), 2);
        let v = emit_trace(&r, TraceFormat::ValueChange);
        assert!(v.contains("$enddefinitions"));
        assert!(!v.lines().any(|l| l.starts_with('#')));
        let j: serde_json::Value = serde_json::from_str(&emit_trace(&r, TraceFormat::Json)).unwrap();
        assert_eq!(j["trace"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn format_names() {
        assert_eq!("vcd".parse::<TraceFormat>(), Ok(TraceFormat::ValueChange));
        assert!("wlf".parse::<TraceFormat>().is_err());
    }
}
