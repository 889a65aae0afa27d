//! Behavioral models of the embedded instruments attached to TDRs.
//!
//! Two models cover the health-monitoring case study: an on-chip ADC
//! monitor for die temperature and supply voltage, and an external IMU
//! whose sampled data passes through a parity checker. A third model,
//! [`FixedRegister`], captures a constant value and is used for generic
//! networks and tests.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Full-scale span of the temperature transfer function, in kelvin.
pub const TEMP_FULL_SCALE_K: f64 = 503.975;
/// Offset between Celsius and kelvin.
pub const KELVIN_OFFSET: f64 = 273.15;
/// Full-scale span of the supply-voltage transfer function, in volts.
pub const VCC_FULL_SCALE_V: f64 = 3.0;
/// Default die-temperature alarm threshold.
pub const DEFAULT_TEMP_THRESHOLD_C: f64 = 120.0;
/// Default supply-voltage alarm threshold.
pub const DEFAULT_VCC_THRESHOLD_V: f64 = 2.9;

const ADC_CODE_MAX: u16 = 0x0FFF;
const ADC_WIDTH: u8 = 12;
const IMU_WIDTH: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstrumentError {
    #[error("{kind} stimulus {value} outside [{min}, {max}]")]
    OutOfRange { kind: AdcChannel, value: f64, min: f64, max: f64 },
    #[error("bad fault spec: {0}")]
    BadSpec(String),
    #[error("line {line}: {message}")]
    File { line: usize, message: String },
}

/// Input channel of the ADC monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdcChannel {
    Temperature,
    SupplyVoltage,
}

impl AdcChannel {
    fn range(self) -> (f64, f64) {
        match self {
            AdcChannel::Temperature => (-KELVIN_OFFSET, 230.0),
            AdcChannel::SupplyVoltage => (0.0, VCC_FULL_SCALE_V),
        }
    }
}

impl fmt::Display for AdcChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdcChannel::Temperature => "temp",
            AdcChannel::SupplyVoltage => "vcc",
        })
    }
}

impl FromStr for AdcChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temp" => Ok(AdcChannel::Temperature),
            "vcc" => Ok(AdcChannel::SupplyVoltage),
            other => Err(format!("unknown ADC channel `{other}` (expected temp or vcc)")),
        }
    }
}

/// Converts an analog stimulus into a 12-bit ADC code.
///
/// Temperature uses `(T + 273.15) * 4096 / 503.975`, supply voltage uses
/// `V * 4096 / 3`; both are rounded to nearest and clamped to `0..=4095`.
pub fn adc_convert(analog: f64, kind: AdcChannel) -> Result<u16, InstrumentError> {
    let (min, max) = kind.range();
    if !(min..=max).contains(&analog) {
        return Err(InstrumentError::OutOfRange { kind, value: analog, min, max });
    }
    let scaled = match kind {
        AdcChannel::Temperature => (analog + KELVIN_OFFSET) * 4096.0 / TEMP_FULL_SCALE_K,
        AdcChannel::SupplyVoltage => analog * 4096.0 / VCC_FULL_SCALE_V,
    };
    Ok(scaled.round().clamp(0.0, ADC_CODE_MAX as f64) as u16)
}

/// Even parity of a 16-bit word: 1 when an odd number of bits are set.
pub fn parity16(word: u16) -> bool {
    word.count_ones() % 2 == 1
}

/// Converts the low `width` bits of `value` into a bit vector, MSB first.
pub fn word_to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| i < 64 && (value >> i) & 1 == 1).collect()
}

/// Inverse of [`word_to_bits`]. Bits beyond 64 are dropped from the top.
pub fn bits_to_word(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Inverts one bit of the instrument's data word for a single step.
    BitFlip { bit: u8 },
    /// Pins the instrument's data word to `value` until reset.
    StuckValue { value: u16 },
    /// Raises the instrument's fault output directly and holds it until reset.
    ExternalTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub at_cycle: u64,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, at_cycle: u64) -> Self {
        Self { kind, at_cycle }
    }

    fn validate(&self, width: u8) -> Result<(), InstrumentError> {
        match self.kind {
            FaultKind::BitFlip { bit } if bit >= width => {
                Err(InstrumentError::BadSpec(format!("bit index {bit} out of range for {width}-bit register")))
            }
            FaultKind::StuckValue { value } if width < 16 && value >> width != 0 => {
                Err(InstrumentError::BadSpec(format!("stuck value {value:#x} does not fit in {width} bits")))
            }
            _ => Ok(()),
        }
    }
}

/// Result of draining the fault queue for one step.
#[derive(Debug, Default)]
struct AppliedFaults {
    flip_mask: u16,
    any: bool,
}

/// Pending fault queue shared by the instrument models.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct FaultQueue {
    pending: Vec<FaultSpec>,
    stuck: Option<u16>,
    triggered: bool,
}

impl FaultQueue {
    /// Applies every queued spec due at or before `cycle`, in queue order.
    fn drain_due(&mut self, cycle: u64) -> AppliedFaults {
        let mut applied = AppliedFaults::default();
        let mut keep = Vec::with_capacity(self.pending.len());
        for spec in self.pending.drain(..) {
            if spec.at_cycle > cycle {
                keep.push(spec);
                continue;
            }
            applied.any = true;
            match spec.kind {
                FaultKind::BitFlip { bit } => applied.flip_mask ^= 1 << bit,
                FaultKind::StuckValue { value } => self.stuck = Some(value),
                FaultKind::ExternalTrigger => self.triggered = true,
            }
        }
        self.pending = keep;
        applied
    }

    fn clear(&mut self) {
        *self = Self::default();
    }
}

/// On-chip temperature and supply-voltage monitor with alarm outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcInstrument {
    pub temp_c: f64,
    pub vcc: f64,
    pub status_temp: u16,
    pub status_vcc: u16,
    pub alarm_threshold_c: f64,
    pub vcc_threshold_v: f64,
    /// Temperature alarm: `temp_c > alarm_threshold_c` at the latest step.
    pub alarm: bool,
    pub vcc_alarm: bool,
    /// Which status register is exposed at capture. Bit 0 of a TDR update selects it.
    pub select: AdcChannel,
    faults: FaultQueue,
}

impl Default for AdcInstrument {
    fn default() -> Self {
        Self::new()
    }
}

impl AdcInstrument {
    pub fn new() -> Self {
        let mut adc = Self {
            temp_c: 25.0,
            vcc: 1.0,
            status_temp: 0,
            status_vcc: 0,
            alarm_threshold_c: DEFAULT_TEMP_THRESHOLD_C,
            vcc_threshold_v: DEFAULT_VCC_THRESHOLD_V,
            alarm: false,
            vcc_alarm: false,
            select: AdcChannel::Temperature,
            faults: FaultQueue::default(),
        };
        adc.convert();
        adc
    }

    /// Sets the analog input for one channel. Takes effect at the next step.
    pub fn set_stimulus(&mut self, kind: AdcChannel, value: f64) -> Result<(), InstrumentError> {
        adc_convert(value, kind)?;
        match kind {
            AdcChannel::Temperature => self.temp_c = value,
            AdcChannel::SupplyVoltage => self.vcc = value,
        }
        Ok(())
    }

    fn convert(&mut self) {
        // Stimuli are range-checked on entry, so conversion cannot fail here.
        self.status_temp = adc_convert(self.temp_c, AdcChannel::Temperature).unwrap_or(0);
        self.status_vcc = adc_convert(self.vcc, AdcChannel::SupplyVoltage).unwrap_or(0);
    }

    pub fn step(&mut self, cycle: u64) {
        self.convert();
        let applied = self.faults.drain_due(cycle);
        if let Some(value) = self.faults.stuck {
            self.status_temp = value;
        }
        self.status_temp ^= applied.flip_mask & ADC_CODE_MAX;
        // The alarm compares the analog stimulus, never the (possibly faulted) code.
        self.alarm = self.temp_c > self.alarm_threshold_c;
        self.vcc_alarm = self.vcc > self.vcc_threshold_v;
    }

    /// Selected status code left-aligned in 16 bits (`code << 4`).
    pub fn capture_word(&self) -> u16 {
        let code = match self.select {
            AdcChannel::Temperature => self.status_temp,
            AdcChannel::SupplyVoltage => self.status_vcc,
        };
        (code & ADC_CODE_MAX) << 4
    }

    pub fn fault_output(&self) -> bool {
        self.alarm || self.vcc_alarm || self.faults.triggered
    }

    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<(), InstrumentError> {
        spec.validate(ADC_WIDTH)?;
        self.faults.pending.push(spec);
        Ok(())
    }

    fn on_update(&mut self, shadow: &[bool]) {
        self.select =
            if shadow.last().copied().unwrap_or(false) { AdcChannel::SupplyVoltage } else { AdcChannel::Temperature };
    }
}

/// One raw IMU sample: accelerometer, gyroscope and temperature words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImuSample {
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
    pub temp_raw: i16,
}

impl ImuSample {
    pub const CHANNELS: usize = 7;

    pub fn channel(&self, index: usize) -> i16 {
        match index {
            0..=2 => self.accel[index],
            3..=5 => self.gyro[index - 3],
            _ => self.temp_raw,
        }
    }
}

impl FromStr for ImuSample {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<i16>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != Self::CHANNELS {
            return Err(format!("expected {} values per sample, found {}", Self::CHANNELS, values.len()));
        }
        Ok(ImuSample {
            accel: [values[0], values[1], values[2]],
            gyro: [values[3], values[4], values[5]],
            temp_raw: values[6],
        })
    }
}

/// Parses an IMU playback file: one sample per line, `#` comments allowed.
pub fn parse_playback(text: &str) -> Result<Vec<ImuSample>, InstrumentError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            (!line.is_empty())
                .then(|| line.parse::<ImuSample>().map_err(|message| InstrumentError::File { line: i + 1, message }))
        })
        .collect()
}

/// One line of an ADC stimulus file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusPoint {
    pub cycle: u64,
    pub kind: AdcChannel,
    pub value: f64,
}

/// Parses `<cycle> temp <°C>` / `<cycle> vcc <V>` lines.
pub fn parse_stimulus(text: &str) -> Result<Vec<StimulusPoint>, InstrumentError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| InstrumentError::File { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [cycle, kind, value] = fields[..] else {
            return Err(err(format!("expected `<cycle> temp|vcc <value>`, got `{line}`")));
        };
        let point = StimulusPoint {
            cycle: cycle.parse().map_err(|e| err(format!("cycle `{cycle}`: {e}")))?,
            kind: kind.parse().map_err(err)?,
            value: value.parse().map_err(|e| err(format!("value `{value}`: {e}")))?,
        };
        adc_convert(point.value, point.kind).map_err(|e| err(e.to_string()))?;
        points.push(point);
    }
    Ok(points)
}

/// External IMU with a playback source and a parity checker on one data channel.
///
/// The checker register layout is `[15:2]` low 14 bits of the received word,
/// `[1]` parity-mismatch flag, `[0]` even parity of the received word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuInstrument {
    pub current: ImuSample,
    pub playback: Vec<ImuSample>,
    cursor: usize,
    /// Channel fed to the checker (0..=6: ax ay az gx gy gz temp).
    pub channel: usize,
    pub checker: u16,
    /// Set while the latest parity check failed or an external trigger is latched.
    pub fault_flag: bool,
    faults: FaultQueue,
}

impl Default for ImuInstrument {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl ImuInstrument {
    pub fn new(playback: Vec<ImuSample>) -> Self {
        Self {
            current: ImuSample::default(),
            playback,
            cursor: 0,
            channel: 0,
            checker: 0,
            fault_flag: false,
            faults: FaultQueue::default(),
        }
    }

    pub fn set_playback(&mut self, playback: Vec<ImuSample>) {
        self.playback = playback;
        self.cursor = 0;
    }

    pub fn sampled_word(&self) -> u16 {
        self.current.channel(self.channel) as u16
    }

    pub fn step(&mut self, cycle: u64) {
        let fresh = self.cursor < self.playback.len();
        if fresh {
            self.current = self.playback[self.cursor];
            self.cursor += 1;
        }
        let applied = self.faults.drain_due(cycle);
        if !(fresh || applied.any) {
            // no new sample and nothing injected: checker holds
            return;
        }
        let sent = self.sampled_word();
        let received = self.faults.stuck.unwrap_or(sent) ^ applied.flip_mask;
        let mismatch = parity16(received) != parity16(sent);
        self.checker = ((received & 0x3FFF) << 2) | ((mismatch as u16) << 1) | parity16(received) as u16;
        self.fault_flag = mismatch || self.faults.triggered;
    }

    pub fn fault_output(&self) -> bool {
        self.fault_flag || self.faults.triggered
    }

    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<(), InstrumentError> {
        spec.validate(IMU_WIDTH)?;
        self.faults.pending.push(spec);
        Ok(())
    }

    fn on_update(&mut self, shadow: &[bool]) {
        let tail = &shadow[shadow.len().saturating_sub(3)..];
        let sel = bits_to_word(tail) as usize;
        if sel < ImuSample::CHANNELS {
            self.channel = sel;
        }
    }
}

/// Instrument that always captures the same bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedRegister {
    pub value: Vec<bool>,
    pub fault: bool,
}

/// Registered instrument kinds, by their tag in network files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstrumentKind {
    Adc,
    Imu,
}

impl InstrumentKind {
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "xadc" => Some(InstrumentKind::Adc),
            "imu" => Some(InstrumentKind::Imu),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            InstrumentKind::Adc => "xadc",
            InstrumentKind::Imu => "imu",
        }
    }

    pub fn instantiate(self) -> InstrumentModel {
        match self {
            InstrumentKind::Adc => InstrumentModel::Adc(AdcInstrument::new()),
            InstrumentKind::Imu => InstrumentModel::Imu(ImuInstrument::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InstrumentModel {
    Adc(AdcInstrument),
    Imu(ImuInstrument),
    Fixed(FixedRegister),
}

impl InstrumentModel {
    pub fn step(&mut self, cycle: u64) {
        match self {
            InstrumentModel::Adc(adc) => adc.step(cycle),
            InstrumentModel::Imu(imu) => imu.step(cycle),
            InstrumentModel::Fixed(_) => {}
        }
    }

    /// Value loaded into the bound TDR at Capture, MSB first.
    pub fn capture_value(&self) -> Vec<bool> {
        match self {
            InstrumentModel::Adc(adc) => word_to_bits(adc.capture_word() as u64, 16),
            InstrumentModel::Imu(imu) => word_to_bits(imu.checker as u64, 16),
            InstrumentModel::Fixed(reg) => reg.value.clone(),
        }
    }

    /// Called with the TDR's new shadow value after every Update.
    pub fn on_update(&mut self, shadow: &[bool]) {
        match self {
            InstrumentModel::Adc(adc) => adc.on_update(shadow),
            InstrumentModel::Imu(imu) => imu.on_update(shadow),
            InstrumentModel::Fixed(_) => {}
        }
    }

    pub fn fault_output(&self) -> bool {
        match self {
            InstrumentModel::Adc(adc) => adc.fault_output(),
            InstrumentModel::Imu(imu) => imu.fault_output(),
            InstrumentModel::Fixed(reg) => reg.fault,
        }
    }

    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<(), InstrumentError> {
        match self {
            InstrumentModel::Adc(adc) => adc.inject_fault(spec),
            InstrumentModel::Imu(imu) => imu.inject_fault(spec),
            InstrumentModel::Fixed(_) => Err(InstrumentError::BadSpec("fixed registers do not accept faults".into())),
        }
    }

    /// Drops queued and latched faults; stimuli and playback position are kept.
    pub fn clear_faults(&mut self) {
        match self {
            InstrumentModel::Adc(adc) => adc.faults.clear(),
            InstrumentModel::Imu(imu) => imu.faults.clear(),
            InstrumentModel::Fixed(reg) => reg.fault = false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent evaluation of the transfer functions in exact integer form:
    // round(x * 4096 / 503.975) with x in hundredths of a kelvin.
    fn temp_code_oracle(centi_c: i64) -> u16 {
        let kelvin_centi = centi_c + 27315;
        let num = kelvin_centi * 4096 * 1000; // scale 503.975 -> 503975
        let den = 503975 * 100;
        ((num + den / 2) / den).clamp(0, 4095) as u16
    }

    #[test]
    fn temperature_codes() {
        assert_eq!(temp_code_oracle(2500), 2423);
        assert_eq!(temp_code_oracle(12000), 3195);
        assert_eq!(adc_convert(25.0, AdcChannel::Temperature).unwrap(), 2423);
        assert_eq!(adc_convert(120.0, AdcChannel::Temperature).unwrap(), 3195);
        for centi in (-27315..=23000).step_by(137) {
            let code = adc_convert(centi as f64 / 100.0, AdcChannel::Temperature).unwrap();
            assert_eq!(code, temp_code_oracle(centi), "at {} C", centi as f64 / 100.0);
        }
    }

    #[test]
    fn voltage_codes() {
        assert_eq!(adc_convert(0.0, AdcChannel::SupplyVoltage).unwrap(), 0);
        assert_eq!(adc_convert(1.0, AdcChannel::SupplyVoltage).unwrap(), 1365);
        assert_eq!(adc_convert(3.0, AdcChannel::SupplyVoltage).unwrap(), 4095);
    }

    #[test]
    fn out_of_range_stimulus() {
        assert!(matches!(adc_convert(231.0, AdcChannel::Temperature), Err(InstrumentError::OutOfRange { .. })));
        assert!(adc_convert(-0.1, AdcChannel::SupplyVoltage).is_err());
        assert!(adc_convert(f64::NAN, AdcChannel::Temperature).is_err());
        let mut adc = AdcInstrument::new();
        assert!(adc.set_stimulus(AdcChannel::SupplyVoltage, 3.5).is_err());
        assert_eq!(adc.vcc, 1.0);
    }

    #[test]
    fn alarm_uses_strict_inequality() {
        let mut adc = AdcInstrument::new();
        adc.set_stimulus(AdcChannel::Temperature, 120.0).unwrap();
        adc.step(0);
        assert!(!adc.alarm);
        adc.set_stimulus(AdcChannel::Temperature, 120.1).unwrap();
        adc.step(1);
        assert!(adc.alarm);
        assert!(adc.fault_output());
    }

    #[test]
    fn adc_capture_left_aligned() {
        let mut adc = AdcInstrument::new();
        adc.step(0);
        assert_eq!(adc.capture_word(), 0x9770);
        adc.on_update(&word_to_bits(1, 16));
        assert_eq!(adc.capture_word(), 1365 << 4);
    }

    #[test]
    fn stuck_value_does_not_move_alarm() {
        let mut adc = AdcInstrument::new();
        adc.inject_fault(FaultSpec::new(FaultKind::StuckValue { value: 0xFFF }, 3)).unwrap();
        for c in 0..6 {
            adc.step(c);
            assert!(!adc.alarm);
        }
        assert_eq!(adc.status_temp, 0xFFF);
        assert!(adc.inject_fault(FaultSpec::new(FaultKind::StuckValue { value: 0x1000 }, 0)).is_err());
        assert!(adc.inject_fault(FaultSpec::new(FaultKind::BitFlip { bit: 12 }, 0)).is_err());
    }

    #[test]
    fn parity_basics() {
        assert!(!parity16(0x0000));
        assert!(parity16(0x0001));
        assert!(!parity16(0x8001));
        for w in [0x1234u16, 0xFFFF, 0xA5A5, 0x7FFF] {
            let mut acc = false;
            for i in 0..16 {
                acc ^= (w >> i) & 1 == 1;
            }
            assert_eq!(parity16(w), acc);
        }
    }

    fn samples(words: &[i16]) -> Vec<ImuSample> {
        words.iter().map(|&w| ImuSample { accel: [w, 0, 0], ..Default::default() }).collect()
    }

    #[test]
    fn imu_checker_without_fault() {
        let mut imu = ImuInstrument::new(samples(&[0, 7]));
        imu.step(0);
        assert_eq!(imu.checker & 1, 0);
        assert!(!imu.fault_flag);
        imu.step(1);
        assert_eq!(imu.checker, (7 << 2) | 1);
        assert!(!imu.fault_flag);
    }

    #[test]
    fn bit_flip_sets_fault_flag_at_its_cycle() {
        let mut imu = ImuInstrument::new(samples(&[0x55; 20]));
        imu.inject_fault(FaultSpec::new(FaultKind::BitFlip { bit: 3 }, 10)).unwrap();
        for c in 0..10 {
            imu.step(c);
            assert!(!imu.fault_flag, "cycle {c}");
        }
        imu.step(10);
        assert!(imu.fault_flag);
        assert_eq!(imu.checker & 0b10, 0b10);
        imu.step(11);
        assert!(!imu.fault_flag);
    }

    #[test]
    fn exhausted_playback_holds() {
        let mut imu = ImuInstrument::new(samples(&[3, 9]));
        imu.step(0);
        imu.step(1);
        let checker = imu.checker;
        for c in 2..8 {
            imu.step(c);
            assert_eq!(imu.current.accel[0], 9);
            assert_eq!(imu.checker, checker);
            assert!(!imu.fault_flag);
        }
    }

    #[test]
    fn external_trigger_latches() {
        let mut imu = ImuInstrument::new(samples(&[1; 100]));
        imu.inject_fault(FaultSpec::new(FaultKind::ExternalTrigger, 50)).unwrap();
        for c in 0..50 {
            imu.step(c);
            assert!(!imu.fault_output());
        }
        for c in 50..60 {
            imu.step(c);
            assert!(imu.fault_output());
        }
        let mut model = InstrumentModel::Imu(imu);
        model.clear_faults();
        model.step(60);
        assert!(!model.fault_output());
    }

    #[test]
    fn same_cycle_specs_apply_in_queue_order() {
        let mut imu = ImuInstrument::new(samples(&[0; 4]));
        imu.inject_fault(FaultSpec::new(FaultKind::StuckValue { value: 0x00F0 }, 2)).unwrap();
        imu.inject_fault(FaultSpec::new(FaultKind::BitFlip { bit: 0 }, 2)).unwrap();
        imu.step(0);
        imu.step(1);
        imu.step(2);
        // stuck replaces the word, then the flip corrupts it
        assert_eq!(imu.checker >> 2, 0x00F1);
        assert!(imu.fault_flag);
    }

    #[test]
    fn double_flip_escapes_parity() {
        let mut imu = ImuInstrument::new(samples(&[0x1234; 2]));
        imu.inject_fault(FaultSpec::new(FaultKind::BitFlip { bit: 2 }, 0)).unwrap();
        imu.inject_fault(FaultSpec::new(FaultKind::BitFlip { bit: 9 }, 0)).unwrap();
        imu.step(0);
        assert!(!imu.fault_flag);
    }

    #[test]
    fn file_formats() {
        let p = parse_playback("# ax ay az gx gy gz t\n1 2 3 4 5 6 7\n\n-1 -2 -3 -4 -5 -6 -32768\n").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].temp_raw, i16::MIN);
        assert!(matches!(parse_playback("1 2 3"), Err(InstrumentError::File { line: 1, .. })));
        let s = parse_stimulus("0 temp 25\n100 temp 120.1 # hot\n0 vcc 1.0\n").unwrap();
        assert_eq!(s[1], StimulusPoint { cycle: 100, kind: AdcChannel::Temperature, value: 120.1 });
        assert!(matches!(parse_stimulus("0 temp 500"), Err(InstrumentError::File { line: 1, .. })));
        assert!(parse_stimulus("0 humidity 5").is_err());
    }

    #[test]
    fn word_bit_conversion() {
        assert_eq!(word_to_bits(0b1011, 4), vec![true, false, true, true]);
        assert_eq!(bits_to_word(&word_to_bits(0x9770, 16)), 0x9770);
        assert_eq!(word_to_bits(1, 70).len(), 70);
    }
}
