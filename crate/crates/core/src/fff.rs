//! Fundamental filter functions: exact ordered-simplex moments, Taylor tables and
//! closed-form evaluation.
//!
//! For an index tuple `(u⃗, v⃗)` of order α,
//!
//! ```text
//! F(ω⃗, T) = (−i)^α ∫_{T ≥ t₁ ≥ … ≥ t_α ≥ 0} Π_j y_{u_j v_j}(t_j) e^{i ω_j t_j} dt⃗
//!         = (−i)^α Σ_k⃗ Π_j (iω_j)^{k_j} / k_j! · M_k⃗
//! M_k⃗    = ∫ Π_j y_{u_j v_j}(t_j) t_j^{k_j} dt⃗
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::control::{ControlMatrix, TimeRegime};
use crate::divdiff::exp_divided_difference;
use crate::error::{invalid, Error, Result};
use crate::pauli::PauliAxis;
use crate::scalar::{ratio_to_f64, ExactRing, FixedRing, Ring};

/// Largest order accepted anywhere in the library.
pub const ALPHA_CAP: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexTuple {
    pub u: Vec<PauliAxis>,
    pub v: Vec<PauliAxis>,
}

impl IndexTuple {
    pub fn new(u: Vec<PauliAxis>, v: Vec<PauliAxis>) -> Result<Self> {
        if u.is_empty() || u.len() != v.len() {
            return invalid("index tuple needs equal nonzero lengths");
        }
        Ok(IndexTuple { u, v })
    }

    /// `α` copies of the pair `(u, v)`.
    pub fn repeated(alpha: usize, u: PauliAxis, v: PauliAxis) -> Self {
        IndexTuple { u: vec![u; alpha], v: vec![v; alpha] }
    }

    pub fn alpha(&self) -> usize {
        self.u.len()
    }

    /// Sub-tuple over positions `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> IndexTuple {
        IndexTuple { u: self.u[start..end].to_vec(), v: self.v[start..end].to_vec() }
    }
}

impl fmt::Display for IndexTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.u.iter().zip(&self.v).map(|(u, v)| format!("{u}{v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// All `k⃗ ∈ ℕ^parts` with `|k⃗| = total`, in lexicographically decreasing order.
pub fn weak_compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut cur = vec![0u32; parts];
    cur[0] = total;
    loop {
        out.push(cur.clone());
        // find the rightmost nonzero among the first parts-1 entries
        let Some(p) = (0..parts - 1).rev().find(|&i| cur[i] > 0) else { break };
        cur[p] -= 1;
        let rest = cur[p + 1..].iter().sum::<u32>() + 1;
        for x in cur[p + 1..].iter_mut() {
            *x = 0;
        }
        cur[p + 1] = rest;
    }
    out
}

#[derive(Clone)]
enum Coef<E> {
    Zero,
    One,
    MinusOne,
    Other(E),
}

struct Piecewise<E> {
    /// Coefficients in the global monomial basis, one vector per interval.
    polys: Vec<Vec<E>>,
    end: E,
}

struct Engine<R: Ring> {
    ring: R,
    /// `powers[i][d] = b_i^d` for the normalized breakpoints.
    powers: Vec<Vec<R::E>>,
    breaks: Vec<R::E>,
    slots: Vec<Vec<Coef<R::E>>>,
    cache: HashMap<Vec<u32>, Arc<Piecewise<R::E>>>,
}

impl<R: Ring> Engine<R> {
    fn new(ring: R, cm: &ControlMatrix, idx: &IndexTuple) -> Self {
        let breaks: Vec<R::E> = cm.normalized_breakpoints().iter().map(|b| ring.from_ratio(b)).collect();
        let slots = idx
            .u
            .iter()
            .zip(&idx.v)
            .map(|(&u, &v)| {
                (0..cm.num_intervals())
                    .map(|i| {
                        let y = cm.entry(i, u, v);
                        if y == 0.0 {
                            Coef::Zero
                        } else if y == 1.0 {
                            Coef::One
                        } else if y == -1.0 {
                            Coef::MinusOne
                        } else {
                            Coef::Other(ring.from_ratio(&BigRational::from_float(y).expect("finite")))
                        }
                    })
                    .collect()
            })
            .collect();
        let powers = breaks.iter().map(|_| Vec::new()).collect();
        Engine { ring, powers, breaks, slots, cache: HashMap::new() }
    }

    fn ensure_powers(&mut self, degree: usize) {
        for (i, p) in self.powers.iter_mut().enumerate() {
            while p.len() <= degree {
                let next = match p.last() {
                    None => self.ring.from_ratio(&BigRational::one()),
                    Some(last) => self.ring.mul(last, &self.breaks[i]),
                };
                p.push(next);
            }
        }
    }

    fn eval_at(&self, poly: &[R::E], point: usize) -> R::E {
        let mut acc = self.ring.zero();
        for (d, c) in poly.iter().enumerate() {
            acc = self.ring.add(&acc, &self.ring.mul(c, &self.powers[point][d]));
        }
        acc
    }

    /// Antiderivative chain for the suffix `k⃗[j..]`, where `j = α − suffix.len()`.
    fn suffix(&mut self, suffix: &[u32]) -> Arc<Piecewise<R::E>> {
        if let Some(p) = self.cache.get(suffix) {
            return p.clone();
        }
        let m = self.breaks.len() - 1;
        let result = if suffix.is_empty() {
            let one = self.ring.from_ratio(&BigRational::one());
            Piecewise { polys: vec![vec![one.clone()]; m], end: one }
        } else {
            let inner = self.suffix(&suffix[1..]);
            let slot = self.slots.len() - suffix.len();
            let k = suffix[0] as usize;
            let max_deg = inner.polys.iter().map(|p| p.len()).max().unwrap_or(1) + k;
            self.ensure_powers(max_deg);
            let mut polys = Vec::with_capacity(m);
            let mut value = self.ring.zero();
            for i in 0..m {
                let coef = &self.slots[slot][i];
                if matches!(coef, Coef::Zero) {
                    polys.push(vec![value.clone()]);
                    continue;
                }
                let src = &inner.polys[i];
                let mut p = vec![self.ring.zero(); src.len() + k + 1];
                for (d, c) in src.iter().enumerate() {
                    let c = match coef {
                        Coef::One => c.clone(),
                        Coef::MinusOne => self.ring.neg(c),
                        Coef::Other(y) => self.ring.mul(c, y),
                        Coef::Zero => unreachable!(),
                    };
                    let deg = d + k + 1;
                    p[deg] = self.ring.div_int(&c, deg as u64);
                }
                let at_start = self.eval_at(&p, i);
                let at_end = self.eval_at(&p, i + 1);
                p[0] = self.ring.sub(&value, &at_start);
                value = self.ring.add(&p[0], &at_end);
                polys.push(p);
            }
            Piecewise { polys, end: value }
        };
        let arc = Arc::new(result);
        self.cache.insert(suffix.to_vec(), arc.clone());
        arc
    }

    fn normalized_moment(&mut self, k: &[u32]) -> BigRational {
        let p = self.suffix(k);
        self.ring.to_ratio(&p.end)
    }
}

enum Backend {
    Exact(Engine<ExactRing>),
    Fixed(Engine<FixedRing>),
}

/// A computed moment together with its zero-test verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentValue {
    /// `M_k⃗` at the control matrix's duration.
    pub value: BigRational,
    /// The same moment for the protocol stretched to `T = 1`.
    pub normalized: BigRational,
    pub zero: bool,
}

impl MomentValue {
    pub fn to_f64(&self) -> f64 {
        if self.zero {
            0.0
        } else {
            ratio_to_f64(&self.value)
        }
    }
}

/// Cached moment computations for one control matrix and index tuple.
pub struct MomentEngine {
    backend: Backend,
    index: IndexTuple,
    duration: BigRational,
    regime: TimeRegime,
    inv_alpha_factorial: f64,
}

impl MomentEngine {
    pub fn new(cm: &ControlMatrix, idx: &IndexTuple) -> Result<Self> {
        cm.check_axes(&idx.u)?;
        let regime = cm.regime();
        let backend = match regime {
            TimeRegime::Exact => Backend::Exact(Engine::new(ExactRing, cm, idx)),
            TimeRegime::Rounded { bits } => {
                Backend::Fixed(Engine::new(FixedRing::new((bits + 128).max(256)), cm, idx))
            }
        };
        let fact: f64 = (1..=idx.alpha()).map(|x| x as f64).product();
        Ok(MomentEngine {
            backend,
            index: idx.clone(),
            duration: cm.duration().clone(),
            regime,
            inv_alpha_factorial: 1.0 / fact,
        })
    }

    pub fn index(&self) -> &IndexTuple {
        &self.index
    }

    pub fn regime(&self) -> TimeRegime {
        self.regime
    }

    pub fn moment(&mut self, k: &[u32]) -> Result<MomentValue> {
        if k.len() != self.index.alpha() {
            return invalid("multi-index length differs from the order");
        }
        let normalized = match &mut self.backend {
            Backend::Exact(e) => e.normalized_moment(k),
            Backend::Fixed(e) => e.normalized_moment(k),
        };
        let zero = match self.regime.zero_tolerance() {
            None => normalized.is_zero(),
            Some(tol) => ratio_to_f64(&normalized.abs()) <= tol * self.inv_alpha_factorial,
        };
        let power = self.index.alpha() + k.iter().map(|&x| x as usize).sum::<usize>();
        let value = &normalized * num_traits::pow(self.duration.clone(), power);
        Ok(MomentValue { value, normalized, zero })
    }

    /// All moments of total degree `level`.
    pub fn level(&mut self, level: u32) -> Result<Vec<(Vec<u32>, MomentValue)>> {
        weak_compositions(level, self.index.alpha())
            .into_iter()
            .map(|k| self.moment(&k).map(|m| (k, m)))
            .collect()
    }

    /// Smallest total degree with a nonvanishing moment, searched up to `cap`.
    pub fn leading_level(&mut self, cap: u32) -> Result<Option<u32>> {
        for level in 0..=cap {
            for k in weak_compositions(level, self.index.alpha()) {
                if !self.moment(&k)?.zero {
                    return Ok(Some(level));
                }
            }
        }
        Ok(None)
    }
}

/// `M_k⃗` for one multi-index.
pub fn moment(cm: &ControlMatrix, idx: &IndexTuple, k: &[u32]) -> Result<MomentValue> {
    MomentEngine::new(cm, idx)?.moment(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScalarKind {
    ExactRational,
    HighPrecisionReal { bits: u32 },
}

impl From<TimeRegime> for ScalarKind {
    fn from(r: TimeRegime) -> Self {
        match r {
            TimeRegime::Exact => ScalarKind::ExactRational,
            TimeRegime::Rounded { bits } => ScalarKind::HighPrecisionReal { bits },
        }
    }
}

/// Moments `M_k⃗` for all `|k⃗| ≤ degree_cap`.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub index: IndexTuple,
    pub duration: BigRational,
    pub degree_cap: u32,
    pub scalar_kind: ScalarKind,
    entries: BTreeMap<Vec<u32>, MomentValue>,
}

impl MomentTable {
    pub fn get(&self, k: &[u32]) -> Option<&MomentValue> {
        self.entries.get(k)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u32>, &MomentValue)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest level holding a nonzero entry.
    pub fn leading_level(&self) -> Option<u32> {
        self.entries
            .iter()
            .filter(|(_, m)| !m.zero)
            .map(|(k, _)| k.iter().sum())
            .min()
    }

    /// Truncated Taylor series of `F` at `ω⃗`.
    pub fn eval(&self, omega: &[f64]) -> Complex64 {
        let alpha = self.index.alpha();
        let mut sum = Complex64::new(0.0, 0.0);
        for (k, m) in &self.entries {
            if m.zero {
                continue;
            }
            let mut term = Complex64::new(m.to_f64(), 0.0);
            for (j, &kj) in k.iter().enumerate() {
                term *= (Complex64::new(0.0, omega[j])).powu(kj) / factorial(kj);
            }
            sum += term;
        }
        sum * Complex64::new(0.0, -1.0).powu(alpha as u32)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, m)| serde_json::json!({ "k": k, "re": m.to_f64() }))
            .collect();
        serde_json::json!({
            "alpha": self.index.alpha(),
            "u": self.index.u,
            "v": self.index.v,
            "T": ratio_to_f64(&self.duration),
            "entries": entries,
        })
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Moment table of `F` up to total degree `degree_cap`.
pub fn fff_taylor(cm: &ControlMatrix, idx: &IndexTuple, degree_cap: u32) -> Result<MomentTable> {
    let mut engine = MomentEngine::new(cm, idx)?;
    fff_taylor_with(&mut engine, cm, degree_cap)
}

pub(crate) fn fff_taylor_with(engine: &mut MomentEngine, cm: &ControlMatrix, degree_cap: u32) -> Result<MomentTable> {
    let mut entries = BTreeMap::new();
    for level in 0..=degree_cap {
        for (k, m) in engine.level(level)? {
            entries.insert(k, m);
        }
    }
    Ok(MomentTable {
        index: engine.index().clone(),
        duration: cm.duration().clone(),
        degree_cap,
        scalar_kind: cm.regime().into(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterEvaluation {
    pub index: IndexTuple,
    pub omega: Vec<f64>,
    pub value: Complex64,
}

/// Closed-form `F(ω⃗, T)` in double precision.
///
/// For `α ≤ 3` and `Σ|ω_j|T ≤ 1` the Taylor series over exact moments is summed
/// instead, since the interval sum below cancels down to the filter's small
/// value there.
///
/// Intervals are swept in increasing time; `state[n]` holds the integral over
/// the `n` latest-indexed (earliest) variables confined to the intervals seen
/// so far. Variables sharing one interval contribute an exponential divided
/// difference.
pub fn fff_eval(cm: &ControlMatrix, idx: &IndexTuple, omega: &[f64], precision: u32) -> Result<FilterEvaluation> {
    cm.check_axes(&idx.u)?;
    let alpha = idx.alpha();
    if alpha > ALPHA_CAP {
        return Err(Error::Unsupported(format!("order {alpha} exceeds the cap {ALPHA_CAP}")));
    }
    if omega.len() != alpha {
        return invalid("frequency tuple length differs from the order");
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return invalid("frequencies must be finite");
    }
    let tol = 2f64.powi(-(precision.clamp(8, 52) as i32));
    let duration = cm.duration_f64();
    let spread: f64 = omega.iter().map(|w| w.abs()).sum::<f64>() * duration;
    if alpha <= SERIES_ALPHA && spread <= 1.0 {
        let value = fff_series(cm, idx, omega, tol)?;
        return Ok(FilterEvaluation { index: idx.clone(), omega: omega.to_vec(), value });
    }
    let bp = cm.breakpoints_f64();
    let mut state = vec![Complex64::new(0.0, 0.0); alpha + 1];
    state[0] = Complex64::new(1.0, 0.0);
    let mut nodes = Vec::with_capacity(alpha + 1);
    for i in 0..cm.num_intervals() {
        let (a, h) = (bp[i], bp[i + 1] - bp[i]);
        let ys: Vec<f64> = (0..alpha).map(|j| cm.entry(i, idx.u[j], idx.v[j])).collect();
        let mut next = state.clone();
        for n in 1..=alpha {
            let start = alpha - n;
            for r in 1..=n {
                let prev = state[n - r];
                if prev == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let block = start..start + r;
                let y: f64 = ys[block.clone()].iter().product();
                if y == 0.0 {
                    continue;
                }
                let wsum: f64 = omega[block.clone()].iter().sum();
                nodes.clear();
                nodes.push(Complex64::new(0.0, 0.0));
                let mut acc = 0.0;
                for w in &omega[block] {
                    acc += w * h;
                    nodes.push(Complex64::new(0.0, acc));
                }
                let b = Complex64::new(0.0, a * wsum).exp() * (y * h.powi(r as i32))
                    * exp_divided_difference(&nodes, tol);
                next[n] += prev * b;
            }
        }
        state = next;
    }
    let value = state[alpha] * Complex64::new(0.0, -1.0).powu(alpha as u32);
    Ok(FilterEvaluation { index: idx.clone(), omega: omega.to_vec(), value })
}

const SERIES_ALPHA: usize = 3;
const SERIES_MAX_LEVEL: u32 = 48;

/// `(−i)^α T^α Σ_k⃗ Π_j (iω_jT)^{k_j}/k_j! M̂_k⃗`, summed level by level until the
/// tail bound `s^{L+1} e^s / ((L+1)! α!)`, `s = Σ|ω_j|T`, drops below `tol`.
fn fff_series(cm: &ControlMatrix, idx: &IndexTuple, omega: &[f64], tol: f64) -> Result<Complex64> {
    let alpha = idx.alpha();
    let t = cm.duration_f64();
    let x: Vec<f64> = omega.iter().map(|w| w * t).collect();
    let s: f64 = x.iter().map(|v| v.abs()).sum();
    let inv_alpha_fact = 1.0 / factorial(alpha as u32);
    let mut engine = MomentEngine::new(cm, idx)?;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut tail = inv_alpha_fact * s.exp();
    for level in 0..=SERIES_MAX_LEVEL {
        for (k, m) in engine.level(level)? {
            if m.zero {
                continue;
            }
            let mut term = Complex64::new(ratio_to_f64(&m.normalized), 0.0);
            for (j, &kj) in k.iter().enumerate() {
                term *= Complex64::new(0.0, x[j]).powu(kj) / factorial(kj);
            }
            sum += term;
        }
        tail *= s / (level + 1) as f64;
        if s == 0.0 || (sum.norm() > 0.0 && tail <= tol * sum.norm()) {
            break;
        }
    }
    Ok(sum * t.powi(alpha as i32) * Complex64::new(0.0, -1.0).powu(alpha as u32))
}

/// Exact `T^{α+|k⃗|}/α!`, the elementwise moment bound.
pub fn moment_bound(duration: &BigRational, alpha: usize, k: &[u32]) -> BigRational {
    let power = alpha + k.iter().map(|&x| x as usize).sum::<usize>();
    let fact: BigInt = (1..=alpha as u64).map(BigInt::from).product();
    num_traits::pow(duration.clone(), power) / BigRational::from_integer(fact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{cdd_sequence, free_evolution, ratio, toggling_control_matrix, udd_sequence};
    use crate::quadrature::fff_eval_quadrature;
    use proptest::prelude::*;
    use PauliAxis::*;

    fn cm_of(seq: crate::control::PulseSequence) -> ControlMatrix {
        toggling_control_matrix(&seq, &[Z]).unwrap()
    }

    fn zz(alpha: usize) -> IndexTuple {
        IndexTuple::repeated(alpha, Z, Z)
    }

    #[test]
    fn compositions_enumerate_all() {
        assert_eq!(weak_compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(weak_compositions(0, 3), vec![vec![0, 0, 0]]);
        assert_eq!(weak_compositions(3, 1), vec![vec![3]]);
        assert_eq!(weak_compositions(5, 4).len(), 56);
    }

    #[test]
    fn basic_moments() {
        let free = cm_of(free_evolution(1.0).unwrap());
        assert_eq!(moment(&free, &zz(1), &[0]).unwrap().value, ratio(1, 1));
        let hahn = cm_of(udd_sequence(1, 1.0).unwrap());
        assert_eq!(moment(&hahn, &zz(1), &[1]).unwrap().value, ratio(-1, 4));
        let cdd1 = cm_of(cdd_sequence(1, 1.0).unwrap());
        let m = moment(&cdd1, &zz(2), &[0, 0]).unwrap();
        assert!(m.zero && m.value.is_zero());
    }

    #[test]
    fn taylor_tables() {
        let free = cm_of(free_evolution(1.0).unwrap());
        let t = fff_taylor(&free, &zz(1), 2).unwrap();
        let vals: Vec<BigRational> = (0..3).map(|k| t.get(&[k]).unwrap().value.clone()).collect();
        assert_eq!(vals, vec![ratio(1, 1), ratio(1, 2), ratio(1, 3)]);
        let hahn = cm_of(udd_sequence(1, 1.0).unwrap());
        let t = fff_taylor(&hahn, &zz(1), 1).unwrap();
        assert!(t.get(&[0]).unwrap().zero);
        assert_eq!(t.get(&[1]).unwrap().value, ratio(-1, 4));
        let u4 = cm_of(udd_sequence(4, 1.0).unwrap());
        let t = fff_taylor(&u4, &zz(1), 4).unwrap();
        assert_eq!(t.leading_level(), Some(4));
        assert_eq!(t.scalar_kind, ScalarKind::HighPrecisionReal { bits: 192 });
    }

    #[test]
    fn moments_scale_with_duration() {
        let a = cm_of(cdd_sequence(2, 1.0).unwrap());
        let b = cm_of(cdd_sequence(2, 3.0).unwrap());
        for k in weak_compositions(3, 2) {
            let ma = moment(&a, &zz(2), &k).unwrap().value;
            let mb = moment(&b, &zz(2), &k).unwrap().value;
            let p = 2 + k.iter().sum::<u32>() as usize;
            assert_eq!(mb, ma * num_traits::pow(ratio(3, 1), p));
        }
    }

    #[test]
    fn scalar_switching_ordered_integral_is_power() {
        // for one scalar function, the ordered integral of Π y(t_j) is (∫y)^α/α!
        let cm = ControlMatrix::switching(
            vec![ratio(0, 1), ratio(1, 5), ratio(1, 2), ratio(1, 1)],
            &[1.0, -1.0, 1.0],
        )
        .unwrap();
        let int_y = ratio(1, 5) - ratio(3, 10) + ratio(1, 2);
        for alpha in 1..=4 {
            let m = moment(&cm, &zz(alpha), &vec![0; alpha]).unwrap().value;
            let fact: i64 = (1..=alpha as i64).product();
            assert_eq!(m, num_traits::pow(int_y.clone(), alpha) / ratio(fact, 1));
        }
    }

    #[test]
    fn eval_special_values() {
        let free = cm_of(free_evolution(1.0).unwrap());
        let f = fff_eval(&free, &zz(1), &[0.0], 53).unwrap().value;
        assert!((f - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        let f = fff_eval(&free, &zz(1), &[2.0 * std::f64::consts::PI], 53).unwrap().value;
        assert!(f.norm() < 1e-14);
        let hahn = cm_of(udd_sequence(1, 1.0).unwrap());
        assert!(fff_eval(&hahn, &zz(1), &[0.0], 53).unwrap().value.norm() < 1e-15);
    }

    #[test]
    fn eval_matches_quadrature_oracle() {
        let free = cm_of(free_evolution(1.0).unwrap());
        let w = [2.0 * std::f64::consts::PI];
        let a = fff_eval(&free, &zz(1), &w, 53).unwrap().value;
        let b = fff_eval_quadrature(&free, &zz(1), &w, 200).unwrap().value;
        assert!((a - b).norm() < 1e-8);
        let c2 = cm_of(cdd_sequence(2, 1.0).unwrap());
        let w = [1.3, -0.7];
        let a = fff_eval(&c2, &zz(2), &w, 53).unwrap().value;
        let b = fff_eval_quadrature(&c2, &zz(2), &w, 24).unwrap().value;
        assert!((a - b).norm() < 1e-6);
        let u3 = cm_of(udd_sequence(3, 1.0).unwrap());
        let w = [4.0, 0.0, -9.5];
        let a = fff_eval(&u3, &zz(3), &w, 53).unwrap().value;
        let b = fff_eval_quadrature(&u3, &zz(3), &w, 16).unwrap().value;
        assert!((a - b).norm() < 1e-9, "{a} {b}");
    }

    #[test]
    fn eval_agrees_with_taylor_at_low_frequency() {
        let cm = cm_of(udd_sequence(3, 1.0).unwrap());
        let table = fff_taylor(&cm, &zz(3), 6).unwrap();
        let w = [0.1, -0.05, 0.08];
        let a = fff_eval(&cm, &zz(3), &w, 53).unwrap().value;
        let b = table.eval(&w);
        // first omitted level is 7: bound Σ|ω|^7/7!·T^{10}/3!
        let omitted = 0.23f64.powi(7) / 5040.0 / 6.0;
        assert!((a - b).norm() <= omitted + 1e-15, "{a} {b}");
    }

    #[test]
    fn eval_keeps_relative_accuracy_at_tiny_frequency() {
        // leading Taylor term (−i)(iω)⁴/4! M_4 dominates by ~ω
        let cm = cm_of(udd_sequence(4, 1.0).unwrap());
        let m4 = moment(&cm, &zz(1), &[4]).unwrap().to_f64();
        for w in [1e-5, 1e-3] {
            let f = fff_eval(&cm, &zz(1), &[w], 53).unwrap().value;
            let lead = Complex64::new(0.0, -1.0) * w.powi(4) / 24.0 * m4;
            assert!((f - lead).norm() < 10.0 * w * lead.norm(), "{w}: {f} {lead}");
        }
        // both branches agree near the switch on a non-cancelling filter
        let free = cm_of(free_evolution(1.0).unwrap());
        for w in [0.999, 1.001] {
            let f = fff_eval(&free, &zz(1), &[w], 53).unwrap().value;
            let exact = (Complex64::new(0.0, w).exp() - 1.0) / Complex64::new(0.0, w) * Complex64::new(0.0, -1.0);
            assert!((f - exact).norm() < 1e-14);
        }
    }

    fn random_cm() -> impl Strategy<Value = ControlMatrix> {
        (prop::collection::btree_set(1i64..32, 1..6), prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 7))
            .prop_map(|(set, signs)| {
                let mut bp = vec![ratio(0, 1)];
                bp.extend(set.into_iter().map(|k| ratio(k, 32)));
                bp.push(ratio(1, 1));
                let n = bp.len() - 1;
                ControlMatrix::switching(bp, &signs[..n]).unwrap()
            })
    }

    proptest! {
        #[test]
        fn conjugation_law(cm in random_cm(), w in prop::collection::vec(-20.0f64..20.0, 3)) {
            for alpha in 1..=3 {
                let idx = zz(alpha);
                let f = fff_eval(&cm, &idx, &w[..alpha], 53).unwrap().value;
                let neg: Vec<f64> = w[..alpha].iter().map(|x| -x).collect();
                let g = fff_eval(&cm, &idx, &neg, 53).unwrap().value;
                let sign = if alpha % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert!((f.conj() - g * sign).norm() < 1e-10);
            }
        }

        #[test]
        fn dilation_scaling(cm in random_cm(), w in prop::collection::vec(-6.0f64..6.0, 2), num in 1i64..9) {
            let lambda = ratio(num, 4);
            let l = num as f64 / 4.0;
            let big = cm.dilate(&lambda).unwrap();
            let idx = zz(2);
            let lhs = fff_eval(&big, &idx, &w, 53).unwrap().value;
            let scaled: Vec<f64> = w.iter().map(|x| x * l).collect();
            let rhs = fff_eval(&cm, &idx, &scaled, 53).unwrap().value * (l * l);
            prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
        }

        #[test]
        fn moment_bound_holds(cm in random_cm(), level in 0u32..5) {
            let mut e = MomentEngine::new(&cm, &zz(3)).unwrap();
            for (k, m) in e.level(level).unwrap() {
                prop_assert!(m.value.abs() <= moment_bound(cm.duration(), 3, &k));
            }
        }
    }

    #[test]
    fn parseval_alpha_one() {
        // (1/2π)∫|F|² dω = ∫ y² dt, using the tail |F|² ≈ Σ c_b²/ω² beyond the cutoff
        let cm = cm_of(udd_sequence(3, 1.0).unwrap());
        let idx = zz(1);
        let cutoff = 4000.0;
        let n = 400_000;
        let h = cutoff / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            // Simpson on [0, cutoff] using even symmetry
            let w = i as f64 * h;
            let f = |w: f64| fff_eval(&cm, &idx, &[w], 53).unwrap().value.norm_sqr();
            sum += (f(w) + 4.0 * f(w + h / 2.0) + f(w + h)) * h / 6.0;
        }
        let jumps: f64 = {
            let bp = cm.breakpoints_f64();
            let mut c = vec![0.0; bp.len()];
            for i in 0..cm.num_intervals() {
                let y = cm.entry(i, Z, Z);
                c[i] -= y;
                c[i + 1] += y;
            }
            c.iter().map(|x| x * x).sum()
        };
        let total = 2.0 * (sum + jumps / cutoff) / (2.0 * std::f64::consts::PI);
        assert!((total - cm.square_integral(Z, Z)).abs() < 1e-5, "{total}");
    }
}
