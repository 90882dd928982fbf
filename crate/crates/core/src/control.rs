//! Pulse sequences, the standard decoupling families and toggling-frame control matrices.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pauli::PauliAxis;
use crate::scalar::{ratio_to_f64, sin_squared_pi_fraction};

/// Default fractional bits for irrational pulse times.
pub const DEFAULT_TIME_BITS: u32 = 192;

/// How faithfully stored times represent the intended protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimeRegime {
    /// Times and control entries are the intended values exactly.
    Exact,
    /// Values are the intended ones rounded to about `bits` binary digits.
    Rounded { bits: u32 },
}

impl TimeRegime {
    pub fn combine(self, other: TimeRegime) -> TimeRegime {
        match (self, other) {
            (TimeRegime::Exact, o) | (o, TimeRegime::Exact) => o,
            (TimeRegime::Rounded { bits: a }, TimeRegime::Rounded { bits: b }) => {
                TimeRegime::Rounded { bits: a.min(b) }
            }
        }
    }

    /// Relative threshold under which a computed moment counts as zero, `None` for exact tests.
    pub fn zero_tolerance(self) -> Option<f64> {
        match self {
            TimeRegime::Exact => None,
            TimeRegime::Rounded { bits } if bits >= 160 => Some(1e-30),
            TimeRegime::Rounded { bits } => Some(2f64.powi(-((bits * 3 / 4) as i32))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub t: BigRational,
    pub axis: PauliAxis,
    pub angle: f64,
}

impl Pulse {
    pub fn pi(t: BigRational, axis: PauliAxis) -> Self {
        Pulse { t, axis, angle: std::f64::consts::PI }
    }
}

/// Instantaneous pulses on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    duration: BigRational,
    pulses: Vec<Pulse>,
    pub label: String,
    regime: TimeRegime,
}

impl PulseSequence {
    pub fn new(
        duration: BigRational,
        pulses: Vec<Pulse>,
        label: impl Into<String>,
        regime: TimeRegime,
    ) -> Result<Self> {
        if !duration.is_positive() {
            return invalid("duration must be positive");
        }
        let mut prev = BigRational::zero();
        for (i, p) in pulses.iter().enumerate() {
            if !p.angle.is_finite() {
                return invalid(format!("pulse {i}: non-finite angle"));
            }
            if p.t <= prev {
                return invalid(format!("pulse {i}: times must be strictly increasing and positive"));
            }
            if p.t > duration {
                return invalid(format!("pulse {i}: time exceeds the duration"));
            }
            prev = p.t.clone();
        }
        Ok(PulseSequence { duration, pulses, label: label.into(), regime })
    }

    pub fn duration(&self) -> &BigRational {
        &self.duration
    }

    pub fn duration_f64(&self) -> f64 {
        ratio_to_f64(&self.duration)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn regime(&self) -> TimeRegime {
        self.regime
    }

    /// Same protocol stretched to a new duration.
    pub fn rescaled(&self, duration: &BigRational) -> Result<Self> {
        if !duration.is_positive() {
            return invalid("duration must be positive");
        }
        let f = duration / &self.duration;
        let pulses = self
            .pulses
            .iter()
            .map(|p| Pulse { t: &p.t * &f, axis: p.axis, angle: p.angle })
            .collect();
        PulseSequence::new(duration.clone(), pulses, self.label.clone(), self.regime)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = SequenceDoc {
            duration: ratio_to_f64(&self.duration),
            pulses: self
                .pulses
                .iter()
                .map(|p| PulseDoc { t: ratio_to_f64(&p.t), axis: p.axis, angle: p.angle })
                .collect(),
            label: self.label.clone(),
        };
        serde_json::to_value(doc).expect("sequence serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("sequence serializes")
    }

    /// Parses the sequence JSON format.
    ///
    /// Numbers written with at most 12 significant digits are taken as exact
    /// decimals; anything longer is treated as a rounded binary value.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SequenceDoc = serde_json::from_str(text)?;
        let mut regime = TimeRegime::Exact;
        let mut num = |x: f64, what: &str| -> Result<BigRational> {
            let (r, exact) = decimal_ratio(x)
                .ok_or_else(|| Error::InvalidArgument(format!("{what}: not a finite number")))?;
            if !exact {
                regime = regime.combine(TimeRegime::Rounded { bits: 53 });
            }
            Ok(r)
        };
        let duration = num(doc.duration, "duration")?;
        let mut pulses = Vec::with_capacity(doc.pulses.len());
        for p in &doc.pulses {
            pulses.push(Pulse { t: num(p.t, "pulse time")?, axis: p.axis, angle: p.angle });
        }
        PulseSequence::new(duration, pulses, doc.label, regime)
    }
}

#[derive(Serialize, Deserialize)]
struct SequenceDoc {
    duration: f64,
    pulses: Vec<PulseDoc>,
    #[serde(default)]
    label: String,
}

#[derive(Serialize, Deserialize)]
struct PulseDoc {
    t: f64,
    axis: PauliAxis,
    angle: f64,
}

/// Shortest decimal of `x` as a rational, and whether it is short enough to be taken literally.
fn decimal_ratio(x: f64) -> Option<(BigRational, bool)> {
    if !x.is_finite() {
        return None;
    }
    let s = format!("{}", x.abs());
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let digits = format!("{int}{frac}");
    let sig = digits.trim_start_matches('0').trim_end_matches('0').len();
    if sig > 12 {
        return BigRational::from_float(x).map(|r| (r, false));
    }
    let n: BigInt = digits.parse().ok()?;
    let d = num_traits::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(n, d);
    Some((if x < 0.0 { -r } else { r }, true))
}

fn positive_duration(t: f64) -> Result<BigRational> {
    if !(t.is_finite() && t > 0.0) {
        return invalid("duration must be a positive finite number");
    }
    Ok(decimal_ratio(t).expect("finite").0)
}

/// Uhrig decoupling with `n` x-axis π pulses at `T sin²(jπ/(2n+2))`.
pub fn udd_sequence(n: usize, duration: f64) -> Result<PulseSequence> {
    udd_sequence_exact(n, &positive_duration(duration)?, DEFAULT_TIME_BITS)
}

/// [`udd_sequence`] with pulse times rounded to `bits` fractional bits.
pub fn udd_sequence_bits(n: usize, duration: f64, bits: u32) -> Result<PulseSequence> {
    udd_sequence_exact(n, &positive_duration(duration)?, bits)
}

/// Uhrig decoupling with irrational times rounded to `bits` fractional bits (relative to `T`).
pub fn udd_sequence_exact(n: usize, duration: &BigRational, bits: u32) -> Result<PulseSequence> {
    if n == 0 {
        return invalid("UDD needs at least one pulse");
    }
    if !duration.is_positive() {
        return invalid("duration must be positive");
    }
    let d = 2 * n as u64 + 2;
    let mut regime = TimeRegime::Exact;
    let mut pulses = Vec::with_capacity(n);
    for j in 1..=n as u64 {
        let (s2, exact) = sin_squared_pi_fraction(j, d, bits)?;
        if !exact {
            regime = TimeRegime::Rounded { bits };
        }
        pulses.push(Pulse::pi(duration * s2, PauliAxis::X));
    }
    PulseSequence::new(duration.clone(), pulses, format!("UDD{n}"), regime)
}

/// Concatenated decoupling `CDD_k` with x-axis π pulses.
pub fn cdd_sequence(k: usize, duration: f64) -> Result<PulseSequence> {
    cdd_sequence_exact(k, &positive_duration(duration)?)
}

pub fn cdd_sequence_exact(k: usize, duration: &BigRational) -> Result<PulseSequence> {
    if !duration.is_positive() {
        return invalid("duration must be positive");
    }
    if k > 24 {
        return Err(Error::CostGuard(format!("CDD level {k} exceeds 24")));
    }
    let mut raw = Vec::new();
    cdd_times(k, &BigRational::zero(), duration, &mut raw);
    let mut counts: BTreeMap<BigRational, usize> = BTreeMap::new();
    for t in raw {
        *counts.entry(t).or_default() += 1;
    }
    let pulses = counts
        .into_iter()
        .filter(|(_, c)| c % 2 == 1)
        .map(|(t, _)| Pulse::pi(t, PauliAxis::X))
        .collect();
    let label = if k == 0 { "free".to_string() } else { format!("CDD{k}") };
    PulseSequence::new(duration.clone(), pulses, label, TimeRegime::Exact)
}

fn cdd_times(k: usize, start: &BigRational, len: &BigRational, out: &mut Vec<BigRational>) {
    if k == 0 {
        return;
    }
    let half = len / BigRational::from_integer(2.into());
    let mid = start + &half;
    cdd_times(k - 1, start, &half, out);
    out.push(mid.clone());
    cdd_times(k - 1, &mid, &half, out);
    out.push(start + len);
}

pub fn free_evolution(duration: f64) -> Result<PulseSequence> {
    cdd_sequence(0, duration)
}

type Frame = [[f64; 3]; 3];

const IDENTITY: Frame = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Heisenberg-picture rotation of a pulse: `P† σ_u P = Σ_w R[u][w] σ_w`.
fn pulse_rotation(axis: PauliAxis, angle: f64) -> (Frame, bool) {
    let quarters = angle / FRAC_PI_2;
    let q = quarters.round();
    let exact = (quarters - q).abs() < 1e-9;
    let (c, s) = if exact {
        match (q as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (angle.cos(), angle.sin())
    };
    let n = axis.unit();
    let mut r = [[0.0; 3]; 3];
    for (u, row) in r.iter_mut().enumerate() {
        let e = PauliAxis::from_index(u).unit();
        // n × e_u
        let cross = [n[1] * e[2] - n[2] * e[1], n[2] * e[0] - n[0] * e[2], n[0] * e[1] - n[1] * e[0]];
        for w in 0..3 {
            let delta = if u == w { 1.0 } else { 0.0 };
            row[w] = c * delta - s * cross[w] + (1.0 - c) * n[u] * n[w];
        }
    }
    (r, exact)
}

fn compose(r: &Frame, y: &Frame) -> Frame {
    let mut out = [[0.0; 3]; 3];
    for u in 0..3 {
        for v in 0..3 {
            out[u][v] = (0..3).map(|w| r[u][w] * y[w][v]).sum();
        }
    }
    out
}

/// Piecewise-constant toggling-frame control matrix `y_uv(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix {
    duration: BigRational,
    breakpoints: Vec<BigRational>,
    values: Vec<Frame>,
    error_axes: Vec<PauliAxis>,
    regime: TimeRegime,
    breakpoints_f64: Vec<f64>,
}

/// Control matrix of `seq` for the given error axes.
pub fn toggling_control_matrix(seq: &PulseSequence, error_axes: &[PauliAxis]) -> Result<ControlMatrix> {
    if error_axes.is_empty() {
        return invalid("at least one error axis is required");
    }
    let mut axes = error_axes.to_vec();
    axes.sort();
    axes.dedup();
    let mut regime = seq.regime();
    let mut breakpoints = vec![BigRational::zero()];
    let mut values = Vec::new();
    let mut frame = IDENTITY;
    // a pulse at T only closes the frame and leaves y unchanged
    for p in seq.pulses().iter().filter(|p| p.t < *seq.duration()) {
        breakpoints.push(p.t.clone());
        values.push(frame);
        let (r, exact) = pulse_rotation(p.axis, p.angle);
        if !exact {
            regime = regime.combine(TimeRegime::Rounded { bits: 53 });
        }
        frame = compose(&r, &frame);
    }
    values.push(frame);
    breakpoints.push(seq.duration().clone());
    ControlMatrix::from_parts(seq.duration().clone(), breakpoints, values, axes, regime)
}

impl ControlMatrix {
    /// Builds a control matrix from interval data, merging equal neighbours.
    pub fn from_parts(
        duration: BigRational,
        breakpoints: Vec<BigRational>,
        values: Vec<[[f64; 3]; 3]>,
        error_axes: Vec<PauliAxis>,
        regime: TimeRegime,
    ) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return invalid("need one more breakpoint than intervals");
        }
        if !breakpoints[0].is_zero() || breakpoints[breakpoints.len() - 1] != duration {
            return invalid("breakpoints must span [0, T]");
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if values.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return invalid("non-finite control entry");
        }
        let mut bp = vec![breakpoints[0].clone()];
        let mut vals: Vec<Frame> = Vec::new();
        for (i, v) in values.into_iter().enumerate() {
            if vals.last() == Some(&v) {
                *bp.last_mut().unwrap() = breakpoints[i + 1].clone();
            } else {
                vals.push(v);
                bp.push(breakpoints[i + 1].clone());
            }
        }
        let breakpoints_f64 = bp.iter().map(ratio_to_f64).collect();
        Ok(ControlMatrix { duration, breakpoints: bp, values: vals, error_axes, regime, breakpoints_f64 })
    }

    /// Single-axis switching function `y_zz = s_i` on the given breakpoints.
    pub fn switching(breakpoints: Vec<BigRational>, signs: &[f64]) -> Result<Self> {
        let duration = breakpoints.last().cloned().unwrap_or_else(BigRational::zero);
        let values = signs
            .iter()
            .map(|&s| {
                let mut f = [[0.0; 3]; 3];
                f[0][0] = 1.0;
                f[1][1] = 1.0;
                f[2][2] = s;
                f
            })
            .collect();
        ControlMatrix::from_parts(duration, breakpoints, values, vec![PauliAxis::Z], TimeRegime::Exact)
    }

    pub fn duration(&self) -> &BigRational {
        &self.duration
    }

    pub fn duration_f64(&self) -> f64 {
        self.breakpoints_f64[self.breakpoints_f64.len() - 1]
    }

    pub fn breakpoints(&self) -> &[BigRational] {
        &self.breakpoints
    }

    pub fn breakpoints_f64(&self) -> &[f64] {
        &self.breakpoints_f64
    }

    pub fn num_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn error_axes(&self) -> &[PauliAxis] {
        &self.error_axes
    }

    pub fn regime(&self) -> TimeRegime {
        self.regime
    }

    pub fn frame(&self, interval: usize) -> &[[f64; 3]; 3] {
        &self.values[interval]
    }

    pub fn entry(&self, interval: usize, u: PauliAxis, v: PauliAxis) -> f64 {
        self.values[interval][u.index()][v.index()]
    }

    /// `y_uv(t)`, right-continuous, with the last interval closed at `T`.
    pub fn eval(&self, u: PauliAxis, v: PauliAxis, t: f64) -> f64 {
        self.entry(self.interval_of(t), u, v)
    }

    pub fn interval_of(&self, t: f64) -> usize {
        let bp = &self.breakpoints_f64;
        let idx = bp.partition_point(|&b| b <= t);
        idx.saturating_sub(1).min(self.values.len() - 1)
    }

    /// True when `y_uv` vanishes on every interval.
    pub fn is_identically_zero(&self, u: PauliAxis, v: PauliAxis) -> bool {
        (0..self.num_intervals()).all(|i| self.entry(i, u, v) == 0.0)
    }

    /// Time-dilated copy with every breakpoint multiplied by `factor`.
    pub fn dilate(&self, factor: &BigRational) -> Result<Self> {
        if !factor.is_positive() {
            return invalid("dilation factor must be positive");
        }
        ControlMatrix::from_parts(
            &self.duration * factor,
            self.breakpoints.iter().map(|b| b * factor).collect(),
            self.values.clone(),
            self.error_axes.clone(),
            self.regime,
        )
    }

    pub fn with_duration(&self, duration: &BigRational) -> Result<Self> {
        self.dilate(&(duration / &self.duration))
    }

    pub fn with_error_axes(&self, axes: &[PauliAxis]) -> Result<Self> {
        if axes.is_empty() {
            return invalid("at least one error axis is required");
        }
        let mut a = axes.to_vec();
        a.sort();
        a.dedup();
        let mut out = self.clone();
        out.error_axes = a;
        Ok(out)
    }

    /// `∫₀ᵀ y_uv(t)² dt` in floating point.
    pub fn square_integral(&self, u: PauliAxis, v: PauliAxis) -> f64 {
        (0..self.num_intervals())
            .map(|i| {
                let y = self.entry(i, u, v);
                y * y * (self.breakpoints_f64[i + 1] - self.breakpoints_f64[i])
            })
            .sum()
    }

    /// Breakpoints divided by `T`.
    pub(crate) fn normalized_breakpoints(&self) -> Vec<BigRational> {
        self.breakpoints.iter().map(|b| b / &self.duration).collect()
    }

    pub(crate) fn check_axes(&self, u: &[PauliAxis]) -> Result<()> {
        match u.iter().find(|a| !self.error_axes.contains(a)) {
            Some(a) => Err(Error::Unsupported(format!("axis {a} is not an error axis of this control matrix"))),
            None => Ok(()),
        }
    }
}

/// Exact rational from a small fraction, for tests and generators.
pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

pub fn one() -> BigRational {
    BigRational::one()
}
