//! Dephasing decay from noise spectra.
//!
//! For zero-mean stationary Gaussian noise along `z`,
//! `ρ₀₁(T) = ρ₀₁(0) e^{−χ}` with
//!
//! ```text
//! χ = 2 ∫ dω/2π |G(ω,T)|² S(ω),   G(ω,T) = ∫₀ᵀ y(t) e^{iωt} dt
//! ```
//!
//! Non-Gaussian classical noise adds the cumulant series of [`classical_decay`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::ControlMatrix;
use crate::error::{invalid, Error, Result};
use crate::fff::{fff_eval, factorial, IndexTuple};
use crate::gff::effective_first_order_ff;
use crate::orders::{fff_filtering_order, Order};
use crate::pauli::PauliAxis;
use crate::quadrature::{adaptive_integrate, gauss_legendre, panels};
use crate::scalar::ratio_to_f64;

const REL_TOL: f64 = 1e-11;

/// Stationary, even noise spectrum `S(ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpectrum {
    White {
        s0: f64,
    },
    /// `S = πA[δ(ω − ω₀) + δ(ω + ω₀)]`.
    #[serde(alias = "single_tone")]
    Tone {
        amplitude: f64,
        omega0: f64,
    },
    /// Pair of Lorentzians of half-width `width` at `±omega0`, peak `s0` when centered.
    Lorentzian {
        s0: f64,
        #[serde(default)]
        omega0: f64,
        width: f64,
    },
    /// Samples `(ω ≥ 0, S)`, linear in between and zero beyond the last.
    Tabulated {
        points: Vec<(f64, f64)>,
    },
    /// `S = s0 |ω|^{−exponent}`.
    PowerLaw {
        s0: f64,
        exponent: f64,
    },
}

impl NoiseSpectrum {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            NoiseSpectrum::White { s0 } if ok(*s0) => Ok(()),
            NoiseSpectrum::Tone { amplitude, omega0 } if ok(*amplitude) && omega0.is_finite() => Ok(()),
            NoiseSpectrum::Lorentzian { s0, omega0, width } if ok(*s0) && omega0.is_finite() && *width > 0.0 => {
                Ok(())
            }
            NoiseSpectrum::Tabulated { points } => {
                if points.len() < 2 {
                    return invalid("tabulated spectrum needs at least two samples");
                }
                if points.iter().any(|&(w, s)| !ok(w) || !ok(s)) {
                    return invalid("tabulated samples need ω ≥ 0 and S ≥ 0");
                }
                if points.windows(2).any(|p| p[1].0 <= p[0].0) {
                    return invalid("tabulated frequencies must increase");
                }
                Ok(())
            }
            NoiseSpectrum::PowerLaw { s0, exponent } if ok(*s0) && exponent.is_finite() => Ok(()),
            _ => invalid("spectrum parameters must be finite and nonnegative"),
        }
    }

    /// `S(ω)` for the continuous kinds; zero for a tone away from its lines.
    pub fn eval(&self, omega: f64) -> f64 {
        let w = omega.abs();
        match self {
            NoiseSpectrum::White { s0 } => *s0,
            NoiseSpectrum::Tone { .. } => 0.0,
            NoiseSpectrum::Lorentzian { s0, omega0, width } => {
                let l = |d: f64| width * width / (d * d + width * width);
                0.5 * s0 * (l(w - omega0) + l(w + omega0))
            }
            NoiseSpectrum::Tabulated { points } => {
                if w > points[points.len() - 1].0 {
                    return 0.0;
                }
                if w <= points[0].0 {
                    return points[0].1;
                }
                let i = points.partition_point(|p| p.0 <= w) - 1;
                let ((a, sa), (b, sb)) = (points[i], points[i + 1]);
                sa + (sb - sa) * (w - a) / (b - a)
            }
            NoiseSpectrum::PowerLaw { s0, exponent } => s0 * w.powf(-exponent),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseSpectrum::White { .. } => "white",
            NoiseSpectrum::Tone { .. } => "tone",
            NoiseSpectrum::Lorentzian { .. } => "lorentzian",
            NoiseSpectrum::Tabulated { .. } => "tabulated",
            NoiseSpectrum::PowerLaw { .. } => "power_law",
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: NoiseSpectrum = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for NoiseSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `Σ_v |G_zv(ω)|²`.
fn filter_power(cm: &ControlMatrix, omega: f64) -> Result<f64> {
    effective_first_order_ff(cm, omega)
}

/// Jump weights `J_j` at breakpoints `t_j` per row: `G_v = Σ_j J_j e^{iωt_j}/(iω)`.
fn jumps(cm: &ControlMatrix) -> Vec<Vec<(f64, f64)>> {
    let bp = cm.breakpoints_f64();
    let n = cm.num_intervals();
    PauliAxis::ALL
        .iter()
        .filter(|&&v| !cm.is_identically_zero(PauliAxis::Z, v))
        .map(|&v| {
            let y = |i: usize| cm.entry(i, PauliAxis::Z, v);
            let mut out = vec![(bp[0], -y(0))];
            out.extend((1..n).map(|i| (bp[i], y(i - 1) - y(i))));
            out.push((bp[n], y(n - 1)));
            out.retain(|j| j.1 != 0.0);
            out
        })
        .collect()
}

/// `π/2 − Si(x) = f(x) cos x + g(x) sin x`; returns `(f, g)` from the
/// asymptotic series, accurate for `x ≳ 30`.
fn si_auxiliary(x: f64) -> (f64, f64) {
    let (mut f, mut g) = (0.0, 0.0);
    let (mut tf, mut tg) = (1.0 / x, 1.0 / (x * x));
    for n in 0..40 {
        f += tf;
        g += tg;
        let (nf, ng) = (
            -tf * ((2 * n + 1) * (2 * n + 2)) as f64 / (x * x),
            -tg * ((2 * n + 2) * (2 * n + 3)) as f64 / (x * x),
        );
        if nf.abs() >= tf.abs() || ng.abs() >= tg.abs() {
            break;
        }
        tf = nf;
        tg = ng;
    }
    (f, g)
}

/// `∫_W^∞ cos(dω)/ω² dω` for `d > 0`.
fn cos_tail(d: f64, w: f64) -> f64 {
    let x = d * w;
    let (f, g) = si_auxiliary(x);
    d * (x.cos() / x - f * x.cos() - g * x.sin())
}

fn divergent(msg: String) -> Error {
    Error::Numeric(format!("spectrum tail diverges: {msg}"))
}

/// `χ` for Gaussian dephasing noise with spectrum `S`, sequence rescaled to `duration`.
pub fn chi_gaussian(cm: &ControlMatrix, spectrum: &NoiseSpectrum, duration: f64) -> Result<f64> {
    spectrum.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return invalid("duration must be positive");
    }
    if cm.error_axes() != [PauliAxis::Z] {
        return Err(Error::Unsupported("Gaussian decay needs the single error axis z".into()));
    }
    let cm = cm.with_duration(&crate::scalar::f64_to_ratio(duration)?)?;
    let t = duration;
    if let NoiseSpectrum::Tone { amplitude, omega0 } = spectrum {
        return Ok(2.0 * amplitude * filter_power(&cm, *omega0)?);
    }
    if let NoiseSpectrum::White { s0 } = spectrum {
        if *s0 == 0.0 {
            return Ok(0.0);
        }
    }
    let rows = jumps(&cm);
    let dmin = rows
        .iter()
        .flat_map(|r| r.windows(2).map(|p| p[1].0 - p[0].0))
        .fold(t, f64::min);
    let mut cutoff = (2000.0 / t).max(40.0 / dmin).min(2e5 / t);
    let mut lower = 0.0;
    let mut ir = 0.0;
    if let NoiseSpectrum::Tabulated { points } = spectrum {
        cutoff = cutoff.max(points[points.len() - 1].0);
    }
    if let NoiseSpectrum::PowerLaw { s0, exponent } = spectrum {
        let p = *exponent;
        if p <= -1.0 {
            return Err(divergent(format!("S ~ ω^{} grows too fast against |G|² ~ ω⁻²", -p)));
        }
        // leading low-frequency behaviour |G|² ≈ c ω^{2φ}
        let mut phi = u32::MAX;
        let mut c = 0.0;
        for v in PauliAxis::ALL {
            if cm.is_identically_zero(PauliAxis::Z, v) {
                continue;
            }
            let idx = IndexTuple::new(vec![PauliAxis::Z], vec![v])?;
            if let Order::Exact(f) = fff_filtering_order(&cm, &idx, 12)? {
                let m = ratio_to_f64(&crate::fff::moment(&cm, &idx, &[f])?.value) / factorial(f);
                if f < phi {
                    phi = f;
                    c = m * m;
                } else if f == phi {
                    c += m * m;
                }
            }
        }
        if phi != u32::MAX && 2.0 * phi as f64 - p <= -1.0 {
            return Err(divergent(format!(
                "S ~ ω^{} is not integrable against |G|² ~ ω^{} at ω → 0",
                -p,
                2 * phi
            )));
        }
        lower = 1e-4 / t;
        if phi != u32::MAX {
            let e = 2.0 * phi as f64 - p + 1.0;
            ir = s0 * c * lower.powf(e) / e;
        }
    }
    let f = |w: f64| filter_power(&cm, w).map(|g| g * spectrum.eval(w)).unwrap_or(f64::NAN);
    let body = adaptive_integrate(&f, &panels(lower, cutoff, &[], PI / t), REL_TOL, 0.0)?;
    let tail = tail_integral(spectrum, &rows, cutoff)?;
    let chi = 2.0 / PI * (ir + body + tail);
    if !chi.is_finite() {
        return Err(Error::Numeric("non-finite decay exponent".into()));
    }
    Ok(chi.max(0.0))
}

/// `∫_W^∞ Σ_v |G_v|² S dω` from the jump form of `G`.
fn tail_integral(spectrum: &NoiseSpectrum, rows: &[Vec<(f64, f64)>], w: f64) -> Result<f64> {
    let diag: f64 = rows.iter().flatten().map(|j| j.1 * j.1).sum();
    let cross = |kernel: &dyn Fn(f64) -> f64| -> f64 {
        let mut s = 0.0;
        for r in rows {
            for a in 0..r.len() {
                for b in a + 1..r.len() {
                    s += 2.0 * r[a].1 * r[b].1 * kernel((r[b].0 - r[a].0).abs());
                }
            }
        }
        s
    };
    match spectrum {
        NoiseSpectrum::White { s0 } => Ok(s0 * (diag / w + cross(&|d| cos_tail(d, w)))),
        NoiseSpectrum::Tone { .. } => Ok(0.0),
        NoiseSpectrum::Tabulated { points } if w >= points[points.len() - 1].0 => Ok(0.0),
        _ => {
            // ∫_W^∞ S/ω² = ∫_0^{1/W} S(1/u) du, plus the leading boundary term of the cross part
            let g = |u: f64| if u == 0.0 { 0.0 } else { spectrum.eval(1.0 / u) };
            let s_over = adaptive_integrate(&g, &panels(0.0, 1.0 / w, &[], f64::INFINITY), 1e-10, 0.0)?;
            let sw = spectrum.eval(w);
            Ok(diag * s_over + cross(&|d| -sw * (d * w).sin() / (d * w * w)))
        }
    }
}

/// User-supplied reduced polyspectrum `S_k(ω₁, …, ω_{k−1})`, with `ω_k = −Σω_j`.
pub type Polyspectrum = Box<dyn Fn(&[f64]) -> Result<Complex64> + Send + Sync>;

/// Classical noise cumulants up to order `k_max`.
pub struct CumulantSeries {
    pub k_max: usize,
    /// First cumulant; zero for zero-mean noise.
    pub mean: f64,
    /// Second-order spectrum, if any.
    pub spectrum: Option<NoiseSpectrum>,
    /// Orders `k ≥ 3`; a missing order is a vanishing cumulant.
    pub higher: BTreeMap<usize, Polyspectrum>,
    /// Half-width of the frequency box for `k ≥ 3`.
    pub cutoff: f64,
    /// Gauss–Legendre nodes per panel of width `π/T` for `k ≥ 3`.
    pub nodes: usize,
}

impl CumulantSeries {
    pub fn gaussian(spectrum: NoiseSpectrum) -> Self {
        CumulantSeries { k_max: 2, mean: 0.0, spectrum: Some(spectrum), higher: BTreeMap::new(), cutoff: 0.0, nodes: 8 }
    }
}

const CUMULANT_K_MAX: usize = 6;
const BOX_POINT_GUARD: f64 = 2e7;

/// `Σ_{k ≤ k_max} (ic)^k/k! I_k`, `c = (−1)^m − (−1)^ℓ`, the log of
/// `⟨ρ_ℓm(T)⟩/ρ_ℓm(0)`. `I_1 = G(0)μ`, `I_2 = χ/2`, and for `k ≥ 3`
/// `I_k = ∫ d^{k−1}ω/(2π)^{k−1} G(ω₁)…G(ω_{k−1}) G(−Σω) S_k`.
pub fn classical_decay(
    cm: &ControlMatrix,
    cumulants: &CumulantSeries,
    duration: f64,
    ell: u8,
    m: u8,
) -> Result<Complex64> {
    if ell > 1 || m > 1 {
        return invalid("state labels must be 0 or 1");
    }
    if cumulants.k_max > CUMULANT_K_MAX {
        return Err(Error::CostGuard(format!("cumulant order limited to {CUMULANT_K_MAX}")));
    }
    let c = (if m == 0 { 1.0 } else { -1.0 }) - (if ell == 0 { 1.0 } else { -1.0 });
    if c == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if cm.error_axes() != [PauliAxis::Z] || !cm.is_identically_zero(PauliAxis::Z, PauliAxis::X)
        || !cm.is_identically_zero(PauliAxis::Z, PauliAxis::Y)
    {
        return Err(Error::Unsupported("classical decay needs a single-axis switching function".into()));
    }
    let cm = cm.with_duration(&crate::scalar::f64_to_ratio(duration)?)?;
    let zz = IndexTuple::repeated(1, PauliAxis::Z, PauliAxis::Z);
    // G = iF
    let g = |w: f64| fff_eval(&cm, &zz, &[w], 53).map(|e| e.value * Complex64::new(0.0, 1.0));
    let mut total = Complex64::new(0.0, 0.0);
    for k in 1..=cumulants.k_max {
        let ik = match k {
            1 => g(0.0)? * cumulants.mean,
            2 => match &cumulants.spectrum {
                Some(s) => Complex64::new(chi_gaussian(&cm, s, duration)? / 2.0, 0.0),
                None => Complex64::new(0.0, 0.0),
            },
            _ => match cumulants.higher.get(&k) {
                Some(s) => polyspectrum_integral(&g, s, k, cumulants.cutoff, cumulants.nodes, duration)?,
                None => Complex64::new(0.0, 0.0),
            },
        };
        total += Complex64::new(0.0, c).powu(k as u32) / factorial(k as u32) * ik;
    }
    Ok(total)
}

fn polyspectrum_integral(
    g: &dyn Fn(f64) -> Result<Complex64>,
    s: &Polyspectrum,
    k: usize,
    cutoff: f64,
    nodes: usize,
    duration: f64,
) -> Result<Complex64> {
    if !(cutoff > 0.0) || nodes == 0 {
        return invalid("higher cumulants need a positive frequency cutoff and node count");
    }
    let (x, w) = gauss_legendre(nodes);
    let mut pts = Vec::new();
    for (a, b) in panels(-cutoff, cutoff, &[], PI / duration) {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        for (xi, wi) in x.iter().zip(&w) {
            pts.push((mid + half * xi, wi * half));
        }
    }
    let dims = k - 1;
    if (pts.len() as f64).powi(dims as i32) > BOX_POINT_GUARD {
        return Err(Error::CostGuard(format!("{} quadrature points for order {k}", pts.len().pow(dims as u32))));
    }
    let gs: Vec<Complex64> = pts.iter().map(|p| g(p.0)).collect::<Result<_>>()?;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut idx = vec![0usize; dims];
    let mut omega = vec![0.0; dims];
    loop {
        let mut weight = 1.0;
        let mut prod = Complex64::new(1.0, 0.0);
        for (d, &i) in idx.iter().enumerate() {
            omega[d] = pts[i].0;
            weight *= pts[i].1;
            prod *= gs[i];
        }
        let value = s(&omega)?;
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::Numeric(format!("cumulant spectrum undefined at {omega:?}")));
        }
        let last: f64 = -omega.iter().sum::<f64>();
        sum += prod * g(last)? * value * weight;
        let mut d = 0;
        loop {
            if d == dims {
                return Ok(sum / (2.0 * PI).powi(dims as i32));
            }
            idx[d] += 1;
            if idx[d] < pts.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
