//! Generalized filter functions assembled from fundamental ones.
//!
//! With `D_α` the Dyson and `Ω_α` the Magnus term, `Ω = log(1 + Σ D)` gives,
//! per index tuple,
//!
//! ```text
//! −i G(ω⃗) = Σ_{compositions (α₁,…,α_j) of α} c_j Π_r F(slice r)
//! c_1 = 1,  c_j = −(−1)^j / j
//! ```
//!
//! where slice `r` covers positions `s_{r−1}..s_r` of the tuple and frequency vector.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::control::ControlMatrix;
use crate::error::{invalid, Error, Result};
use crate::fff::{factorial, fff_eval, fff_taylor, weak_compositions, IndexTuple, ScalarKind, ALPHA_CAP};
use crate::pauli::PauliAxis;
use crate::scalar::ratio_to_f64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Composition {
    pub parts: Vec<usize>,
}

impl Composition {
    pub fn alpha(&self) -> usize {
        self.parts.iter().sum()
    }

    /// `s_0 = 0, s_1, …, s_j = α`.
    pub fn prefix_sums(&self) -> Vec<usize> {
        let mut out = vec![0];
        for p in &self.parts {
            out.push(out.last().unwrap() + p);
        }
        out
    }

    pub fn slices(&self) -> Vec<(usize, usize)> {
        self.prefix_sums().windows(2).map(|w| (w[0], w[1])).collect()
    }
}

fn coefficient(parts: usize) -> BigRational {
    if parts == 1 {
        return BigRational::one();
    }
    let sign = if parts % 2 == 0 { -1 } else { 1 };
    BigRational::new(BigInt::from(sign), BigInt::from(parts))
}

fn enumerate(alpha: usize) -> Vec<(Composition, BigRational)> {
    let mut out = Vec::with_capacity(1 << (alpha - 1));
    for mask in 0u32..(1 << (alpha - 1)) {
        let mut parts = Vec::new();
        let mut run = 1;
        for bit in 0..alpha - 1 {
            if mask & (1 << bit) != 0 {
                parts.push(run);
                run = 1;
            } else {
                run += 1;
            }
        }
        parts.push(run);
        let c = coefficient(parts.len());
        out.push((Composition { parts }, c));
    }
    out.sort_by(|a, b| (a.0.parts.len(), &a.0.parts).cmp(&(b.0.parts.len(), &b.0.parts)));
    out
}

/// Ordered compositions of `alpha` with their assembly coefficients.
pub fn compositions(alpha: usize) -> Result<&'static [(Composition, BigRational)]> {
    static CACHE: OnceLock<Vec<Vec<(Composition, BigRational)>>> = OnceLock::new();
    if alpha == 0 || alpha > ALPHA_CAP {
        return Err(Error::Unsupported(format!("order must lie in 1..={ALPHA_CAP}, got {alpha}")));
    }
    let all = CACHE.get_or_init(|| (1..=ALPHA_CAP).map(enumerate).collect());
    Ok(&all[alpha - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GffEvaluation {
    pub index: IndexTuple,
    pub omega: Vec<f64>,
    pub value: Complex64,
}

/// `G(ω⃗, T)` for one index tuple.
pub fn gff_eval(cm: &ControlMatrix, idx: &IndexTuple, omega: &[f64]) -> Result<GffEvaluation> {
    let alpha = idx.alpha();
    if omega.len() != alpha {
        return invalid("frequency tuple length differs from the order");
    }
    let mut cache: HashMap<(usize, usize), Complex64> = HashMap::new();
    let mut sum = Complex64::new(0.0, 0.0);
    for (comp, c) in compositions(alpha)? {
        let mut term = Complex64::new(ratio_to_f64(c), 0.0);
        for (a, b) in comp.slices() {
            let f = match cache.get(&(a, b)) {
                Some(f) => *f,
                None => {
                    let f = fff_eval(cm, &idx.slice(a, b), &omega[a..b], 53)?.value;
                    cache.insert((a, b), f);
                    f
                }
            };
            term *= f;
        }
        sum += term;
    }
    Ok(GffEvaluation { index: idx.clone(), omega: omega.to_vec(), value: sum * Complex64::new(0.0, 1.0) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GffEntry {
    /// `N_k⃗` at the control matrix's duration; the Taylor coefficient of `G` is `i N_k⃗`.
    pub value: BigRational,
    pub normalized: BigRational,
    pub zero: bool,
}

/// Moment-space table of `G`: `G = i (−i)^α Σ Π_j (iω_j)^{k_j}/k_j! N_k⃗`.
#[derive(Debug, Clone)]
pub struct GffTable {
    pub index: IndexTuple,
    pub duration: BigRational,
    pub degree_cap: u32,
    pub scalar_kind: ScalarKind,
    entries: BTreeMap<Vec<u32>, GffEntry>,
}

impl GffTable {
    pub fn get(&self, k: &[u32]) -> Option<&GffEntry> {
        self.entries.get(k)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u32>, &GffEntry)> {
        self.entries.iter()
    }

    pub fn leading_level(&self) -> Option<u32> {
        self.entries.iter().filter(|(_, e)| !e.zero).map(|(k, _)| k.iter().sum()).min()
    }

    pub fn eval(&self, omega: &[f64]) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (k, e) in &self.entries {
            if e.zero {
                continue;
            }
            let mut term = Complex64::new(ratio_to_f64(&e.value), 0.0);
            for (j, &kj) in k.iter().enumerate() {
                term *= Complex64::new(0.0, omega[j]).powu(kj) / factorial(kj);
            }
            sum += term;
        }
        sum * Complex64::new(0.0, -1.0).powu(self.index.alpha() as u32) * Complex64::new(0.0, 1.0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, e)| {
                let n = if e.zero { 0.0 } else { ratio_to_f64(&e.value) };
                serde_json::json!({ "k": k, "re": 0.0, "im": n })
            })
            .collect();
        serde_json::json!({
            "kind": "gff",
            "alpha": self.index.alpha(),
            "u": self.index.u,
            "v": self.index.v,
            "T": ratio_to_f64(&self.duration),
            "entries": entries,
        })
    }
}

/// Normalized (`T = 1`) moment tables for every contiguous slice of the tuple.
pub type SliceTables = BTreeMap<(usize, usize), BTreeMap<Vec<u32>, BigRational>>;

fn slice_moments(cm: &ControlMatrix, idx: &IndexTuple, cap: u32) -> Result<SliceTables> {
    let alpha = idx.alpha();
    let mut out = BTreeMap::new();
    for a in 0..alpha {
        for b in a + 1..=alpha {
            let table = fff_taylor(cm, &idx.slice(a, b), cap)?;
            let m = table
                .entries()
                .map(|(k, v)| (k.clone(), if v.zero { BigRational::zero() } else { v.normalized.clone() }))
                .collect();
            out.insert((a, b), m);
        }
    }
    Ok(out)
}

/// `Σ_comp weight(j) Π_r table[slice r](k⃗[slice r])` over all `|k⃗| ≤ cap`.
fn combine(
    tables: &SliceTables,
    alpha: usize,
    cap: u32,
    weight: impl Fn(usize) -> BigRational,
) -> Result<BTreeMap<Vec<u32>, BigRational>> {
    let comps = compositions(alpha)?;
    let mut out = BTreeMap::new();
    for level in 0..=cap {
        for k in weak_compositions(level, alpha) {
            let mut sum = BigRational::zero();
            for (comp, _) in comps {
                let w = weight(comp.parts.len());
                let mut term = w;
                for (a, b) in comp.slices() {
                    let v = &tables[&(a, b)][&k[a..b]];
                    if v.is_zero() {
                        term = BigRational::zero();
                        break;
                    }
                    term *= v;
                }
                sum += term;
            }
            out.insert(k, sum);
        }
    }
    Ok(out)
}

/// `N_k⃗` tables for every contiguous slice, normalized to `T = 1`.
pub fn magnus_slice_tables(cm: &ControlMatrix, idx: &IndexTuple, cap: u32) -> Result<SliceTables> {
    let moments = slice_moments(cm, idx, cap)?;
    let mut out = BTreeMap::new();
    for &(a, b) in moments.keys() {
        let sub: SliceTables = moments
            .iter()
            .filter(|((x, y), _)| *x >= a && *y <= b)
            .map(|(&(x, y), t)| ((x - a, y - a), t.clone()))
            .collect();
        out.insert((a, b), combine(&sub, b - a, cap, coefficient)?);
    }
    Ok(out)
}

/// Inverse assembly: Dyson moments `M_k⃗ = Σ_comp (1/j!) Π_r N(slice r)`.
pub fn dyson_from_magnus(tables: &SliceTables, alpha: usize, cap: u32) -> Result<BTreeMap<Vec<u32>, BigRational>> {
    combine(tables, alpha, cap, |j| {
        let f: BigInt = (1..=j as u64).map(BigInt::from).product();
        BigRational::new(BigInt::one(), f)
    })
}

/// Moment-space table of `G` up to total degree `degree_cap`.
pub fn gff_taylor(cm: &ControlMatrix, idx: &IndexTuple, degree_cap: u32) -> Result<GffTable> {
    let alpha = idx.alpha();
    let moments = slice_moments(cm, idx, degree_cap)?;
    let normalized = combine(&moments, alpha, degree_cap, coefficient)?;
    let tol = cm.regime().zero_tolerance();
    let entries = normalized
        .into_iter()
        .map(|(k, n)| {
            let zero = match tol {
                None => n.is_zero(),
                Some(t) => ratio_to_f64(&n.abs()) <= t,
            };
            let power = alpha + k.iter().map(|&x| x as usize).sum::<usize>();
            let value = &n * num_traits::pow(cm.duration().clone(), power);
            (k, GffEntry { value, normalized: n, zero })
        })
        .collect();
    Ok(GffTable {
        index: idx.clone(),
        duration: cm.duration().clone(),
        degree_cap,
        scalar_kind: cm.regime().into(),
        entries,
    })
}

/// First-order effective filter `Σ_v G_zv(ω) G_zv(−ω) = Σ_v |F_zv(ω)|²` for pure dephasing.
pub fn effective_first_order_ff(cm: &ControlMatrix, omega: f64) -> Result<f64> {
    if cm.error_axes() != [PauliAxis::Z] {
        return Err(Error::Unsupported("effective filter needs the single error axis z".into()));
    }
    let mut sum = 0.0;
    for v in PauliAxis::ALL {
        if cm.is_identically_zero(PauliAxis::Z, v) {
            continue;
        }
        let idx = IndexTuple::new(vec![PauliAxis::Z], vec![v])?;
        let g_plus = gff_eval(cm, &idx, &[omega])?.value;
        let g_minus = gff_eval(cm, &idx, &[-omega])?.value;
        sum += (g_plus * g_minus).re;
    }
    Ok(sum.max(0.0))
}
