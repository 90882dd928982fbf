//! Magnus terms for toy system-bath Hamiltonians under a pulse sequence.
//!
//! The toggling-frame error Hamiltonian couples the system's `z` row of the
//! control matrix to a bath operator `B(t)`:
//!
//! ```text
//! H(t) = g Σ_v y_zv(t) σ_v ⊗ B(t)
//! quantum tone   B = cos(ωt) σ_z + sin(ωt) σ_y   (qubit bath)
//! classical      B = cos(ωt)  or  sin(ωt)
//! quasi-static   B = σ_z
//! ```
//!
//! For `ωT ≤ 0.5` the terms come from exact moment tables through the series
//! of `B`, which keeps the deep cancellations of high-order sequences intact.
//! Above that they come from Gauss–Legendre quadrature on breakpoint-aligned
//! panels, with the first time integral of `H` done in closed form.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{cdd_sequence, toggling_control_matrix, udd_sequence, ControlMatrix, PulseSequence};
use crate::error::{invalid, Error, Result};
use crate::fff::{factorial, fff_eval, IndexTuple, MomentEngine};
use crate::pauli::PauliAxis;
use crate::quadrature::{gauss_legendre, panels};

pub type CMatrix = DMatrix<Complex64>;

/// Largest `ωT` handled by the moment series.
pub const SERIES_LIMIT: f64 = 0.5;
const SERIES_DEGREE: u32 = 22;
const GL_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    QuantumTone,
    ClassicalCos,
    ClassicalSin,
    QuasiStatic,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::QuantumTone => "quantum",
            ModelKind::ClassicalCos => "classical_cos",
            ModelKind::ClassicalSin => "classical_sin",
            ModelKind::QuasiStatic => "quasi_static",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" | "quantum_tone" => Ok(ModelKind::QuantumTone),
            "classical_cos" | "cos" => Ok(ModelKind::ClassicalCos),
            "classical_sin" | "sin" => Ok(ModelKind::ClassicalSin),
            "quasi_static" => Ok(ModelKind::QuasiStatic),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyNoiseModel {
    pub kind: ModelKind,
    pub g: f64,
    pub omega: f64,
}

impl ToyNoiseModel {
    pub fn new(kind: ModelKind, g: f64, omega: f64) -> Result<Self> {
        if !(g.is_finite() && g >= 0.0) {
            return invalid("coupling must be finite and nonnegative");
        }
        if !omega.is_finite() {
            return invalid("tone frequency must be finite");
        }
        let omega = if kind == ModelKind::QuasiStatic { 0.0 } else { omega };
        Ok(ToyNoiseModel { kind, g, omega })
    }

    pub fn bath_dim(&self) -> usize {
        match self.kind {
            ModelKind::QuantumTone | ModelKind::QuasiStatic => 2,
            _ => 1,
        }
    }

    fn bath(&self, t: f64) -> CMatrix {
        let (c, s) = ((self.omega * t).cos(), (self.omega * t).sin());
        match self.kind {
            ModelKind::QuantumTone => re(pauli(PauliAxis::Z), c) + re(pauli(PauliAxis::Y), s),
            ModelKind::QuasiStatic => pauli(PauliAxis::Z),
            ModelKind::ClassicalCos => scalar(c),
            ModelKind::ClassicalSin => scalar(s),
        }
    }

    /// `∫_a^b B(t) dt`.
    fn bath_integral(&self, a: f64, b: f64) -> CMatrix {
        let w = self.omega;
        let (ci, si) = if w == 0.0 {
            (b - a, 0.0)
        } else {
            (((w * b).sin() - (w * a).sin()) / w, ((w * a).cos() - (w * b).cos()) / w)
        };
        match self.kind {
            ModelKind::QuantumTone => re(pauli(PauliAxis::Z), ci) + re(pauli(PauliAxis::Y), si),
            ModelKind::QuasiStatic => re(pauli(PauliAxis::Z), b - a),
            ModelKind::ClassicalCos => scalar(ci),
            ModelKind::ClassicalSin => scalar(si),
        }
    }

    /// `C_r` with `B(t) = Σ_n (ωt)^n/n! C_{n mod 4}`.
    fn series_basis(&self, r: usize) -> Option<CMatrix> {
        let sign = if r >= 2 { -1.0 } else { 1.0 };
        match (self.kind, r % 2) {
            (ModelKind::QuantumTone, 0) => Some(re(pauli(PauliAxis::Z), sign)),
            (ModelKind::QuantumTone, _) => Some(re(pauli(PauliAxis::Y), sign)),
            (ModelKind::QuasiStatic, _) => (r == 0).then(|| pauli(PauliAxis::Z)),
            (ModelKind::ClassicalCos, 0) | (ModelKind::ClassicalSin, 1) => Some(scalar(sign)),
            _ => None,
        }
    }
}

fn pauli(a: PauliAxis) -> CMatrix {
    let m = a.matrix();
    CMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

fn scalar(x: f64) -> CMatrix {
    CMatrix::from_element(1, 1, Complex64::new(x, 0.0))
}

fn comm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

fn re(m: CMatrix, x: f64) -> CMatrix {
    m * Complex64::new(x, 0.0)
}

fn i_times(m: CMatrix, x: f64) -> CMatrix {
    m * Complex64::new(0.0, x)
}

/// `Ω_1..Ω_order` on the system ⊗ bath space.
#[derive(Debug, Clone)]
pub struct MagnusTerms {
    pub order: usize,
    pub terms: Vec<CMatrix>,
    pub duration: f64,
    pub flags: Vec<String>,
}

impl MagnusTerms {
    pub fn sum(&self) -> CMatrix {
        let n = self.terms[0].nrows();
        self.terms.iter().fold(CMatrix::zeros(n, n), |acc, t| acc + t)
    }

    /// `exp(Ω_1 + … + Ω_order)`.
    pub fn propagator(&self) -> CMatrix {
        self.sum().exp()
    }
}

/// Part of `i ΣΩ` with a nonidentity system factor: `X − 𝕀 ⊗ Tr_S(X)/2`.
pub fn error_action(terms: &MagnusTerms) -> CMatrix {
    let x = i_times(terms.sum(), 1.0);
    let d = x.nrows() / 2;
    let mut bath = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            bath[(i, j)] = (x[(i, j)] + x[(i + d, j + d)]) * 0.5;
        }
    }
    let id = CMatrix::identity(2, 2);
    x - id.kronecker(&bath)
}

/// Spectral norm of the error action, `‖T H_SB^eff(T)‖`.
pub fn error_action_norm(terms: &MagnusTerms) -> f64 {
    spectral_norm(&error_action(terms))
}

/// Frobenius norm of the error action, for diagnostics.
pub fn error_action_frobenius(terms: &MagnusTerms) -> f64 {
    error_action(terms).norm()
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Row `z` of a control matrix, kept in normalized time `s = t/T`.
struct Shape {
    breakpoints: Vec<f64>,
    rows: Vec<(PauliAxis, Vec<f64>)>,
}

impl Shape {
    fn new(cm: &ControlMatrix) -> Result<Self> {
        cm.check_axes(&[PauliAxis::Z])?;
        let t = cm.duration_f64();
        let breakpoints = cm.breakpoints_f64().iter().map(|b| b / t).collect();
        let rows = PauliAxis::ALL
            .iter()
            .filter(|&&v| !cm.is_identically_zero(PauliAxis::Z, v))
            .map(|&v| (v, (0..cm.num_intervals()).map(|i| cm.entry(i, PauliAxis::Z, v)).collect()))
            .collect();
        Ok(Shape { breakpoints, rows })
    }

    fn interval_of(&self, s: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= s);
        idx.saturating_sub(1).min(self.breakpoints.len() - 2)
    }
}

/// Normalized moments keyed by the `v` tuple.
type MomentRows = Vec<(Vec<PauliAxis>, Vec<(Vec<u32>, f64)>)>;

/// Magnus terms for one control shape at any duration.
pub struct MagnusSimulator {
    cm: ControlMatrix,
    shape: Shape,
    tables: [OnceLock<Result<MomentRows>>; 3],
}

impl MagnusSimulator {
    pub fn new(cm: &ControlMatrix) -> Result<Self> {
        Ok(MagnusSimulator {
            shape: Shape::new(cm)?,
            cm: cm.clone(),
            tables: Default::default(),
        })
    }

    fn table(&self, alpha: usize) -> Result<&MomentRows> {
        let cell = &self.tables[alpha - 1];
        let built = cell.get_or_init(|| {
            let axes: Vec<PauliAxis> = self.shape.rows.iter().map(|r| r.0).collect();
            let mut tuples: Vec<Vec<PauliAxis>> = vec![vec![]];
            for _ in 0..alpha {
                tuples = tuples
                    .into_iter()
                    .flat_map(|t| {
                        axes.iter().map(move |&a| {
                            let mut n = t.clone();
                            n.push(a);
                            n
                        })
                    })
                    .collect();
            }
            tuples
                .into_par_iter()
                .map(|v| {
                    let idx = IndexTuple::new(vec![PauliAxis::Z; alpha], v.clone())?;
                    let mut engine = MomentEngine::new(&self.cm, &idx)?;
                    let mut entries = Vec::new();
                    for level in 0..=SERIES_DEGREE {
                        for (k, m) in engine.level(level)? {
                            if !m.zero {
                                entries.push((k, crate::scalar::ratio_to_f64(&m.normalized)));
                            }
                        }
                    }
                    Ok((v, entries))
                })
                .collect()
        });
        built.as_ref().map_err(|e| Error::Numeric(format!("moment table failed: {e}")))
    }

    pub fn terms(&self, model: &ToyNoiseModel, duration: f64, order: usize) -> Result<MagnusTerms> {
        if !(1..=3).contains(&order) {
            return Err(Error::Unsupported(format!("Magnus order must be 1, 2 or 3, got {order}")));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return invalid("duration must be positive");
        }
        if model.omega.abs() * duration <= SERIES_LIMIT {
            self.terms_series(model, duration, order)
        } else {
            Ok(self.terms_quadrature(model, duration, order, GL_NODES))
        }
    }

    fn flags(&self, model: &ToyNoiseModel, duration: f64) -> Vec<String> {
        let mut flags = Vec::new();
        if model.g * duration >= 1.0 {
            flags.push("convergence_guard".to_string());
        }
        flags
    }

    fn system_dim(&self, model: &ToyNoiseModel) -> usize {
        2 * model.bath_dim()
    }

    pub(crate) fn terms_series(&self, model: &ToyNoiseModel, duration: f64, order: usize) -> Result<MagnusTerms> {
        let n = self.system_dim(model);
        let wt = model.omega * duration;
        let basis: Vec<Option<CMatrix>> = (0..4).map(|r| model.series_basis(r)).collect();
        let mut x: HashMap<(PauliAxis, usize), CMatrix> = HashMap::new();
        for &(v, _) in &self.shape.rows {
            for (r, b) in basis.iter().enumerate() {
                if let Some(b) = b {
                    x.insert((v, r), pauli(v).kronecker(b));
                }
            }
        }
        let mut terms = Vec::new();
        for alpha in 1..=order {
            let scale = (model.g * duration).powi(alpha as i32);
            let mut buckets: HashMap<Vec<(PauliAxis, usize)>, f64> = HashMap::new();
            for (v, entries) in self.table(alpha)? {
                for (k, m) in entries {
                    let level: u32 = k.iter().sum();
                    let mut c = m * scale * wt.powi(level as i32);
                    for &kj in k {
                        c /= factorial(kj);
                    }
                    if c == 0.0 {
                        continue;
                    }
                    let key: Vec<(PauliAxis, usize)> = v.iter().zip(k).map(|(&a, &kj)| (a, kj as usize % 4)).collect();
                    if key.iter().any(|&(_, r)| basis[r].is_none()) {
                        continue;
                    }
                    *buckets.entry(key).or_insert(0.0) += c;
                }
            }
            let mut omega = CMatrix::zeros(n, n);
            for (key, c) in buckets {
                let m: Vec<&CMatrix> = key.iter().map(|kr| &x[kr]).collect();
                let term = match alpha {
                    1 => i_times(m[0].clone(), -c),
                    2 => comm(m[0], m[1]) * Complex64::new(-0.5 * c, 0.0),
                    _ => i_times(
                        comm(m[0], &comm(m[1], m[2])) + comm(m[2], &comm(m[1], m[0])),
                        c / 6.0,
                    ),
                };
                omega += term;
            }
            terms.push(omega);
        }
        Ok(MagnusTerms { order, terms, duration, flags: self.flags(model, duration) })
    }

    fn hamiltonian(&self, model: &ToyNoiseModel, t: f64, interval: usize) -> CMatrix {
        let b = model.bath(t);
        let n = self.system_dim(model);
        let mut h = CMatrix::zeros(n, n);
        for (v, ys) in &self.shape.rows {
            let y = ys[interval];
            if y != 0.0 {
                h += pauli(*v).kronecker(&b) * Complex64::new(model.g * y, 0.0);
            }
        }
        h
    }

    /// Prefix integrals of `H` at the breakpoints, then `K(t) = ∫₀ᵗ H`.
    fn first_integral(&self, model: &ToyNoiseModel, duration: f64) -> impl Fn(f64) -> CMatrix + '_ {
        let n = self.system_dim(model);
        let bps: Vec<f64> = self.shape.breakpoints.iter().map(|b| b * duration).collect();
        let model = *model;
        let piece = move |shape: &Shape, i: usize, a: f64, b: f64| {
            let ib = model.bath_integral(a, b);
            let mut m = CMatrix::zeros(n, n);
            for (v, ys) in &shape.rows {
                if ys[i] != 0.0 {
                    m += pauli(*v).kronecker(&ib) * Complex64::new(model.g * ys[i], 0.0);
                }
            }
            m
        };
        let mut prefix = vec![CMatrix::zeros(n, n)];
        for i in 0..bps.len() - 1 {
            let next = prefix[i].clone() + piece(&self.shape, i, bps[i], bps[i + 1]);
            prefix.push(next);
        }
        move |t: f64| {
            let i = self.shape.interval_of(t / duration);
            prefix[i].clone() + piece(&self.shape, i, bps[i], t)
        }
    }

    pub(crate) fn terms_quadrature(&self, model: &ToyNoiseModel, duration: f64, order: usize, nodes: usize) -> MagnusTerms {
        let n = self.system_dim(model);
        let bps: Vec<f64> = self.shape.breakpoints.iter().map(|b| b * duration).collect();
        let width = if model.omega != 0.0 { 1.0 / model.omega.abs() } else { f64::INFINITY };
        let (gx, gw) = gauss_legendre(nodes);
        let k1 = self.first_integral(model, duration);
        let h_at = |t: f64| self.hamiltonian(model, t, self.shape.interval_of(t / duration));
        let quad = |lo: f64, hi: f64, f: &dyn Fn(f64) -> CMatrix| -> CMatrix {
            let mut acc = CMatrix::zeros(n, n);
            for (a, b) in panels(lo, hi, &bps, width) {
                let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
                for (x, w) in gx.iter().zip(&gw) {
                    acc += f(mid + half * x) * Complex64::new(w * half, 0.0);
                }
            }
            acc
        };
        let mut terms = vec![i_times(k1(duration), -1.0)];
        if order >= 2 {
            let o2 = quad(0.0, duration, &|t| comm(&h_at(t), &k1(t)));
            terms.push(o2 * Complex64::new(-0.5, 0.0));
        }
        if order >= 3 {
            let o3 = quad(0.0, duration, &|t1| {
                let h1 = h_at(t1);
                quad(0.0, t1, &|t2| {
                    let h2 = h_at(t2);
                    let k = k1(t2);
                    comm(&h1, &comm(&h2, &k)) + comm(&k, &comm(&h2, &h1))
                })
            });
            terms.push(i_times(o3, 1.0 / 6.0));
        }
        MagnusTerms { order, terms, duration, flags: self.flags(model, duration) }
    }

    /// Reference propagator by adaptive Dormand–Prince integration, restarted at
    /// every breakpoint and projected back onto the unitaries.
    pub fn exact_propagator(&self, model: &ToyNoiseModel, duration: f64, tol: f64) -> Result<CMatrix> {
        if !(tol > 0.0) {
            return invalid("tolerance must be positive");
        }
        let n = self.system_dim(model);
        let bps: Vec<f64> = self.shape.breakpoints.iter().map(|b| b * duration).collect();
        let mut u = CMatrix::identity(n, n);
        for i in 0..bps.len() - 1 {
            let rhs = |t: f64, y: &CMatrix| i_times(self.hamiltonian(model, t, i) * y, -1.0);
            u = dormand_prince(&rhs, bps[i], bps[i + 1], u, tol)?;
        }
        Ok(polar_unitary(&u))
    }
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dormand_prince(f: &dyn Fn(f64, &CMatrix) -> CMatrix, a: f64, b: f64, y0: CMatrix, tol: f64) -> Result<CMatrix> {
    let mut t = a;
    let mut y = y0;
    let mut h = (b - a) / 16.0;
    let min_step = (b - a).abs() * 1e-14;
    while t < b {
        if t + h > b {
            h = b - t;
        }
        let mut k: Vec<CMatrix> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if DP_A[s][j] != 0.0 {
                    ys += kj * Complex64::new(h * DP_A[s][j], 0.0);
                }
            }
            k.push(f(t + DP_C[s] * h, &ys));
        }
        let mut y5 = y.clone();
        let mut err = CMatrix::zeros(y.nrows(), y.ncols());
        for s in 0..7 {
            if s < 6 {
                y5 += &k[s] * Complex64::new(h * DP_A[6][s], 0.0);
            }
            let b5 = if s < 6 { DP_A[6][s] } else { 0.0 };
            err += &k[s] * Complex64::new(h * (b5 - DP_B4[s]), 0.0);
        }
        let e = err.iter().map(|z| z.norm()).fold(0.0, f64::max) / tol;
        if e <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < min_step && t < b {
            return Err(Error::Numeric(format!("step size underflow at t = {t}")));
        }
    }
    Ok(y)
}

/// Nearest unitary `W V†` from `U = W Σ V†`.
fn polar_unitary(u: &CMatrix) -> CMatrix {
    let svd = u.clone().svd(true, true);
    svd.u.expect("left vectors") * svd.v_t.expect("right vectors")
}

/// One-shot Magnus terms, rescaling the control shape to `duration`.
pub fn magnus_terms(cm: &ControlMatrix, model: &ToyNoiseModel, duration: f64, order: usize) -> Result<MagnusTerms> {
    MagnusSimulator::new(cm)?.terms(model, duration, order)
}

/// One-shot reference propagator.
pub fn exact_propagator(cm: &ControlMatrix, model: &ToyNoiseModel, duration: f64, tol: f64) -> Result<CMatrix> {
    MagnusSimulator::new(cm)?.exact_propagator(model, duration, tol)
}

/// Model columns of the frequency scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanModel {
    Quantum,
    ClassicalCos,
    ClassicalSin,
    /// `g |F⁽¹⁾(ω, T)|`, the phase-averaged classical tone.
    ClassicalCombined,
}

impl ScanModel {
    pub const ALL: [ScanModel; 4] =
        [ScanModel::Quantum, ScanModel::ClassicalCos, ScanModel::ClassicalSin, ScanModel::ClassicalCombined];

    pub fn label(self) -> &'static str {
        match self {
            ScanModel::Quantum => "quantum",
            ScanModel::ClassicalCos => "classical_cos",
            ScanModel::ClassicalSin => "classical_sin",
            ScanModel::ClassicalCombined => "classical_combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub omega: f64,
    pub g: f64,
    pub model: ScanModel,
    pub norm_udd4: f64,
    pub norm_cdd3: f64,
    pub ratio: f64,
    pub flags: Vec<String>,
}

pub const DEFAULT_SCAN_G: [f64; 3] = [9.0 / 40.0, 9.0 / 400.0, 9.0 / 4000.0];

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return invalid("log grid needs 0 < lo < hi and at least two points");
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect())
}

pub fn default_scan_grid() -> Vec<f64> {
    log_grid(1e-5, 10.0, 60).expect("valid default grid")
}

fn scan_norm(sim: &MagnusSimulator, cm: &ControlMatrix, model: ScanModel, g: f64, omega: f64, t: f64) -> Result<(f64, Vec<String>)> {
    let kind = match model {
        ScanModel::Quantum => ModelKind::QuantumTone,
        ScanModel::ClassicalCos => ModelKind::ClassicalCos,
        ScanModel::ClassicalSin => ModelKind::ClassicalSin,
        ScanModel::ClassicalCombined => {
            let f = fff_eval(cm, &IndexTuple::repeated(1, PauliAxis::Z, PauliAxis::Z), &[omega], 53)?.value;
            return Ok((g * f.norm(), Vec::new()));
        }
    };
    let terms = sim.terms(&ToyNoiseModel::new(kind, g, omega)?, t, 3)?;
    Ok((error_action_norm(&terms), terms.flags))
}

/// CDD₃ against UDD₄: one row per `(g, ω, model)` in that nesting order.
pub fn figure1_scan(omega_grid: &[f64], g_list: &[f64], duration: f64) -> Result<Vec<ScanRow>> {
    if omega_grid.is_empty() || g_list.is_empty() {
        return invalid("frequency and coupling grids must be nonempty");
    }
    let build = |seq: PulseSequence| toggling_control_matrix(&seq, &[PauliAxis::Z]);
    let udd = build(udd_sequence(4, duration)?)?;
    let cdd = build(cdd_sequence(3, duration)?)?;
    let (su, sc) = (MagnusSimulator::new(&udd)?, MagnusSimulator::new(&cdd)?);
    let cells: Vec<(f64, f64, ScanModel)> = g_list
        .iter()
        .flat_map(|&g| omega_grid.iter().flat_map(move |&w| ScanModel::ALL.map(|m| (g, w, m))))
        .collect();
    cells
        .into_par_iter()
        .map(|(g, omega, model)| {
            let (nu, mut flags) = scan_norm(&su, &udd, model, g, omega, duration)?;
            let (nc, fc) = scan_norm(&sc, &cdd, model, g, omega, duration)?;
            for f in fc {
                if !flags.contains(&f) {
                    flags.push(f);
                }
            }
            let ratio = if nc.abs() < 1e-30 {
                flags.push("small_denominator".to_string());
                f64::NAN
            } else {
                nu / nc
            };
            Ok(ScanRow { omega, g, model, norm_udd4: nu, norm_cdd3: nc, ratio, flags })
        })
        .collect()
}

/// Largest grid frequency at which the ratio still exceeds one, scanning up from
/// the low end; `None` when the first point is already below one.
pub fn crossover(rows: &[ScanRow], g: f64, model: ScanModel) -> Option<f64> {
    let mut last = None;
    for r in rows.iter().filter(|r| r.g == g && r.model == model) {
        if r.ratio > 1.0 {
            last = Some(r.omega);
        } else {
            break;
        }
    }
    last
}
