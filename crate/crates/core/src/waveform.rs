//! Piecewise-constant rf waveforms: linear chirps, phase-advanced copies,
//! the four-period supercycle and composite-pulse sequences.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Default sampling interval (0.5 us).
pub const DEFAULT_DWELL: f64 = 0.5e-6;

/// Largest per-dwell phase increment accepted by [`chirp`].
pub const MAX_PHASE_STEP: f64 = 0.1;

/// Sweep-rate to rf-power ratio above which a chirp is flagged as
/// non-adiabatic.
pub const ADIABATIC_RATIO_LIMIT: f64 = 0.2;

pub fn hz_to_rad(hz: f64) -> f64 {
    TAU * hz
}

pub fn rad_to_hz(w: f64) -> f64 {
    w / TAU
}

/// Linear frequency sweep from `-A` to `+A` at rate `a` with constant
/// amplitude `omega1`. All quantities in rad/s (rad/s^2 for the rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpParams {
    pub sweep_half_width: f64,
    pub sweep_rate: f64,
    pub rf_amplitude: f64,
    /// Centre of the sweep window relative to the carrier; zero unless set
    /// with [`ChirpParams::with_center`].
    pub sweep_center: f64,
}

impl ChirpParams {
    pub fn new(sweep_half_width: f64, sweep_rate: f64, rf_amplitude: f64) -> Result<Self> {
        if !(sweep_half_width > 0.0 && sweep_half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sweep half-width must be positive, got {sweep_half_width}"
            )));
        }
        if !(sweep_rate > 0.0 && sweep_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sweep rate must be positive, got {sweep_rate}"
            )));
        }
        if !(rf_amplitude >= 0.0 && rf_amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rf amplitude must be non-negative, got {rf_amplitude}"
            )));
        }
        Ok(Self {
            sweep_half_width,
            sweep_rate,
            rf_amplitude,
            sweep_center: 0.0,
        })
    }

    /// The same sweep moved to `[c - A, c + A]`.
    pub fn with_center(self, center: f64) -> Self {
        Self {
            sweep_center: center,
            ..self
        }
    }

    /// Largest `|omega(t)|` over the sweep.
    pub fn max_frequency(&self) -> f64 {
        self.sweep_center.abs() + self.sweep_half_width
    }

    /// Sweep half-width and rf amplitude in kHz, sweep rate `omega1^2 / divisor`.
    pub fn from_khz(half_width_khz: f64, rf_amplitude_khz: f64, rate_divisor: f64) -> Result<Self> {
        if !(rate_divisor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sweep-rate divisor must be positive, got {rate_divisor}"
            )));
        }
        let w1 = hz_to_rad(rf_amplitude_khz * 1e3);
        Self::new(hz_to_rad(half_width_khz * 1e3), w1 * w1 / rate_divisor, w1)
    }

    /// Sweep duration `T = 2A / a`.
    pub fn duration(&self) -> f64 {
        2.0 * self.sweep_half_width / self.sweep_rate
    }

    /// Instantaneous frequency `c - A + a t`.
    pub fn frequency(&self, t: f64) -> f64 {
        self.sweep_center - self.sweep_half_width + self.sweep_rate * t
    }

    /// Phase `(c - A) t + a t^2 / 2`.
    pub fn phase(&self, t: f64) -> f64 {
        t * (self.sweep_center - self.sweep_half_width + 0.5 * self.sweep_rate * t)
    }

    /// `a / omega1^2`; infinite for zero amplitude.
    pub fn adiabaticity_ratio(&self) -> f64 {
        self.sweep_rate / (self.rf_amplitude * self.rf_amplitude)
    }

    pub fn is_adiabatic(&self) -> bool {
        self.adiabaticity_ratio() <= ADIABATIC_RATIO_LIMIT
    }

    /// Time at which the sweep frequency equals `omega`.
    pub fn crossing_time(&self, omega: f64) -> f64 {
        (omega - self.sweep_center + self.sweep_half_width) / self.sweep_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// rad/s, non-negative
    pub amplitude: f64,
    /// radians at the step midpoint, unwrapped
    pub phase: f64,
    /// rad/s; slope of the phase across the step. Zero for stepped-phase
    /// sequences; the sweep frequency at the midpoint for chirps.
    pub frequency: f64,
}

impl Sample {
    /// Constant amplitude and phase over the step.
    pub fn stepped(amplitude: f64, phase: f64) -> Self {
        Self {
            amplitude,
            phase,
            frequency: 0.0,
        }
    }
}

/// Phase offsets are kept as integer ticks of a full turn so that repeated
/// advances compose exactly and `d` followed by `-d` is a bit-exact no-op.
const TICKS_PER_TURN: i64 = 1 << 48;

fn ticks(delta: f64) -> i64 {
    ((delta / TAU) * TICKS_PER_TURN as f64).round() as i64
}

/// Contiguous run of samples that came from one building block, with the
/// phase offset applied to it since construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    offset_ticks: i64,
}

impl Segment {
    /// Offset in radians.
    pub fn phase_offset(&self) -> f64 {
        self.offset_ticks as f64 * (TAU / TICKS_PER_TURN as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseWaveform {
    pub dwell: f64,
    pub samples: Vec<Sample>,
    pub segments: Vec<Segment>,
}

impl PulseWaveform {
    pub fn new(dwell: f64, samples: Vec<Sample>) -> Result<Self> {
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dwell must be positive, got {dwell}"
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !(s.amplitude >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "negative sample amplitude {}",
                bad.amplitude
            )));
        }
        let len = samples.len();
        Ok(Self {
            dwell,
            samples,
            segments: vec![Segment {
                start: 0,
                len,
                offset_ticks: 0,
            }],
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dwell * self.samples.len() as f64
    }

    /// Midpoint time of sample `k`.
    pub fn sample_time(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dwell
    }

    /// Appends `other`; both must share the same dwell.
    pub fn concat(&self, other: &PulseWaveform) -> Result<PulseWaveform> {
        if self.dwell != other.dwell {
            return Err(Error::InvalidParameter(format!(
                "cannot concatenate waveforms with dwell {} and {}",
                self.dwell, other.dwell
            )));
        }
        let mut out = self.clone();
        let offset = out.samples.len();
        out.samples.extend_from_slice(&other.samples);
        out.segments.extend(other.segments.iter().map(|s| Segment {
            start: s.start + offset,
            ..s.clone()
        }));
        Ok(out)
    }

    pub fn repeat(&self, n: usize) -> PulseWaveform {
        let mut out = PulseWaveform {
            dwell: self.dwell,
            samples: Vec::with_capacity(self.samples.len() * n),
            segments: Vec::with_capacity(self.segments.len() * n),
        };
        for _ in 0..n {
            out = out.concat(self).expect("same dwell");
        }
        out
    }

    /// Segment phase offsets, in order.
    pub fn segment_phases(&self) -> Vec<f64> {
        self.segments.iter().map(Segment::phase_offset).collect()
    }

    /// Samples as played: stored phase plus the offset of their segment.
    pub fn played(&self) -> impl Iterator<Item = Sample> + '_ {
        self.segments.iter().flat_map(move |seg| {
            let offset = seg.phase_offset();
            self.samples[seg.start..seg.start + seg.len]
                .iter()
                .map(move |s| Sample {
                    phase: s.phase + offset,
                    ..*s
                })
        })
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "index,time_s,amplitude_hz,phase_deg")?;
        let mut line = String::new();
        for (k, s) in self.played().enumerate() {
            line.clear();
            let _ = write!(
                line,
                "{},{:.9e},{:.6},{:.6}",
                k,
                self.sample_time(k),
                rad_to_hz(s.amplitude),
                s.phase.to_degrees()
            );
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Samples a chirp at interval midpoints `t_k = (k + 1/2) dwell`.
///
/// `dwell` is an upper bound: the sweep is split into `ceil(T / dwell)`
/// equal steps so that the waveform lasts exactly `T`. A rounded sample
/// count would leave a sub-dwell timing error that does not shrink
/// smoothly with the dwell.
pub fn chirp(params: &ChirpParams, dwell: f64) -> Result<PulseWaveform> {
    if !(dwell > 0.0 && dwell.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dwell must be positive, got {dwell}"
        )));
    }
    // |omega(t)| peaks at the sweep edges.
    let increment = params.max_frequency() * dwell;
    if increment > MAX_PHASE_STEP {
        return Err(Error::DwellTooCoarse {
            dwell,
            increment,
            required: MAX_PHASE_STEP / params.max_frequency(),
        });
    }
    sample_chirp(params, dwell)
}

/// `chirp` without the phase-step guard; used to demonstrate what a coarse
/// dwell does.
pub(crate) fn sample_chirp(params: &ChirpParams, dwell: f64) -> Result<PulseWaveform> {
    let duration = params.duration();
    let n = ((duration / dwell) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let step = duration / n as f64;
    let samples = (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) * step;
            Sample {
                amplitude: params.rf_amplitude,
                phase: params.phase(t),
                frequency: params.frequency(t),
            }
        })
        .collect();
    PulseWaveform::new(step, samples)
}

/// Shifts every sample phase by `delta`, quantized to 2^-48 of a turn.
pub fn phase_advance(w: &PulseWaveform, delta: f64) -> PulseWaveform {
    let step = ticks(delta);
    let mut out = w.clone();
    for seg in &mut out.segments {
        seg.offset_ticks += step;
    }
    out
}

/// `[w, w + pi, w + pi, w]`.
pub fn supercycle(w: &PulseWaveform) -> PulseWaveform {
    let bar = phase_advance(w, PI);
    [w, &bar, &bar, w]
        .iter()
        .skip(1)
        .fold(w.clone(), |acc, part| acc.concat(part).expect("same dwell"))
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CompositeElement {
    #[serde(rename = "flip_deg")]
    pub flip_angle: f64,
    #[serde(rename = "phase_deg")]
    pub phase: f64,
}

/// Constant-amplitude composite sequence. Element boundaries are placed on
/// the dwell grid by rounding cumulative ideal times, so rounding errors
/// never accumulate beyond half a dwell.
pub fn composite_sequence(
    elements: &[CompositeElement],
    omega1: f64,
    dwell: f64,
) -> Result<PulseWaveform> {
    if !(omega1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "composite rf amplitude must be positive, got {omega1}"
        )));
    }
    if let Some(e) = elements.iter().find(|e| !(e.flip_angle > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "flip angle must be positive, got {}",
            e.flip_angle
        )));
    }
    let mut samples = Vec::new();
    let mut ideal = 0.0;
    let mut placed = 0usize;
    for e in elements {
        ideal += e.flip_angle.to_radians() / omega1;
        let end = (ideal / dwell).round() as usize;
        let sample = Sample::stepped(omega1, e.phase.to_radians());
        samples.extend(std::iter::repeat_n(sample, end.saturating_sub(placed)));
        placed = placed.max(end);
    }
    PulseWaveform::new(dwell, samples)
}

/// Largest dwell not exceeding `max_dwell` on which every element of
/// `elements` spans a whole number of samples (angles resolved to 1e-3 deg).
pub fn commensurate_dwell(elements: &[CompositeElement], omega1: f64, max_dwell: f64) -> f64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let g = elements
        .iter()
        .map(|e| (e.flip_angle * 1000.0).round() as u64)
        .fold(0, gcd);
    if g == 0 {
        return max_dwell;
    }
    let base = (g as f64 / 1000.0).to_radians() / omega1;
    let split = (base / max_dwell).ceil().max(1.0);
    base / split
}

/// A composite sequence table: one basic element list `R` plus the cycle
/// pattern in which `R` and its phase-inverted copy `Rbar` are repeated.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeTable {
    pub name: String,
    #[serde(rename = "element")]
    pub elements: Vec<CompositeElement>,
    pub cycle: Vec<String>,
}

pub const DIPSI2_TABLE: &str = include_str!("../data/dipsi2.toml");

impl CompositeTable {
    pub fn parse(text: &str) -> Result<Self> {
        let table: CompositeTable =
            toml::from_str(text).map_err(|e| Error::CompositeTable(e.to_string()))?;
        for part in &table.cycle {
            if part != "R" && part != "Rbar" {
                return Err(Error::CompositeTable(format!(
                    "cycle entries must be \"R\" or \"Rbar\", got {part:?}"
                )));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn dipsi2() -> Self {
        Self::parse(DIPSI2_TABLE).expect("bundled DIPSI-2 table parses")
    }

    /// The element list of one full cycle with `Rbar` phases shifted by 180 deg.
    pub fn expanded(&self) -> Vec<CompositeElement> {
        self.cycle
            .iter()
            .flat_map(|part| {
                let shift = if part == "Rbar" { 180.0 } else { 0.0 };
                self.elements.iter().map(move |e| CompositeElement {
                    flip_angle: e.flip_angle,
                    phase: e.phase + shift,
                })
            })
            .collect()
    }

    pub fn total_flip_deg(&self) -> f64 {
        self.elements.iter().map(|e| e.flip_angle).sum::<f64>() * self.cycle.len() as f64
    }

    /// One cycle at `omega1`, sampled on a commensurate dwell no larger than `max_dwell`.
    pub fn waveform(&self, omega1: f64, max_dwell: f64) -> Result<PulseWaveform> {
        let elements = self.expanded();
        let dwell = commensurate_dwell(&elements, omega1, max_dwell);
        composite_sequence(&elements, omega1, dwell)
    }
}
