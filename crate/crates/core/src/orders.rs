//! Filtering and cancellation orders.
//!
//! The filtering order of one filter function is the lowest total degree with
//! a nonvanishing zero-frequency moment. A protocol's orders are minima over
//! the relevant tuples, those whose Pauli product `σ_{v₁}…σ_{v_α}` is not the
//! identity. The cancellation order follows from `δ⁽ᵅ⁾ = α + φ⁽ᵅ⁾ − 1`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::control::ControlMatrix;
use crate::error::{Error, Result};
use crate::fff::{IndexTuple, MomentEngine, ALPHA_CAP};
use crate::gff::gff_taylor;
use crate::pauli::{PauliAxis, PauliProduct};

/// Default bound on total moment degree in order searches.
pub const DEFAULT_DEGREE_CAP: u32 = 12;
/// Default bound on the expansion order.
pub const DEFAULT_ALPHA_MAX: usize = 7;

const TUPLE_GUARD: usize = 2_000_000;

/// A resolved order, or a lower bound when the search hit its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Exact(u32),
    AtLeast(u32),
}

impl Order {
    pub fn value(self) -> u32 {
        match self {
            Order::Exact(n) | Order::AtLeast(n) => n,
        }
    }

    pub fn is_resolved(self) -> bool {
        matches!(self, Order::Exact(_))
    }

    pub fn min(self, other: Order) -> Order {
        let (a, b) = (self.value(), other.value());
        if a < b {
            self
        } else if b < a {
            other
        } else if self.is_resolved() || other.is_resolved() {
            Order::Exact(a)
        } else {
            self
        }
    }

    fn shifted(self, by: u32) -> Order {
        match self {
            Order::Exact(n) => Order::Exact(n + by),
            Order::AtLeast(n) => Order::AtLeast(n + by),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Exact(n) => write!(f, "{n}"),
            Order::AtLeast(n) => write!(f, ">={n}"),
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Exact(n) => s.serialize_u32(*n),
            Order::AtLeast(n) => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("value", n)?;
                m.serialize_entry("lower_bound", &true)?;
                m.end()
            }
        }
    }
}

fn min_all(orders: impl IntoIterator<Item = Order>) -> Option<Order> {
    orders.into_iter().reduce(Order::min)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevantTuple {
    pub index: IndexTuple,
    pub product: PauliProduct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevantSet {
    pub alpha: usize,
    pub tuples: Vec<RelevantTuple>,
}

fn check_alpha(alpha: usize) -> Result<()> {
    if alpha == 0 || alpha > ALPHA_CAP {
        return Err(Error::Unsupported(format!("order must lie in 1..={ALPHA_CAP}, got {alpha}")));
    }
    Ok(())
}

fn tuples_over(pairs: &[(PauliAxis, PauliAxis)], alpha: usize) -> Result<Vec<RelevantTuple>> {
    let total = pairs.len().checked_pow(alpha as u32).unwrap_or(usize::MAX);
    if total > TUPLE_GUARD {
        return Err(Error::CostGuard(format!("{total} index tuples at order {alpha}")));
    }
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let (mut u, mut v) = (Vec::with_capacity(alpha), Vec::with_capacity(alpha));
        for _ in 0..alpha {
            let (a, b) = pairs[c % pairs.len()];
            c /= pairs.len();
            u.push(a);
            v.push(b);
        }
        // most significant position first
        u.reverse();
        v.reverse();
        let product = PauliProduct::product(&v);
        if !product.is_identity() {
            out.push(RelevantTuple { index: IndexTuple { u, v }, product });
        }
    }
    Ok(out)
}

/// All tuples `u⃗ ∈ error_axesᵅ, v⃗ ∈ {x,y,z}ᵅ` whose Pauli product is not the identity.
pub fn relevant_indices(alpha: usize, error_axes: &[PauliAxis]) -> Result<RelevantSet> {
    check_alpha(alpha)?;
    let pairs: Vec<_> = error_axes.iter().flat_map(|&u| PauliAxis::ALL.map(|v| (u, v))).collect();
    Ok(RelevantSet { alpha, tuples: tuples_over(&pairs, alpha)? })
}

/// Relevant tuples whose control-matrix rows are all nonvanishing somewhere.
fn contributing(cm: &ControlMatrix, alpha: usize) -> Result<Vec<RelevantTuple>> {
    check_alpha(alpha)?;
    let pairs: Vec<_> = cm
        .error_axes()
        .iter()
        .flat_map(|&u| PauliAxis::ALL.map(|v| (u, v)))
        .filter(|&(u, v)| !cm.is_identically_zero(u, v))
        .collect();
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    tuples_over(&pairs, alpha)
}

/// `φ⁽ᵅ⁾` of one fundamental filter function, or `≥ degree_cap + 1`.
pub fn fff_filtering_order(cm: &ControlMatrix, idx: &IndexTuple, degree_cap: u32) -> Result<Order> {
    let mut engine = MomentEngine::new(cm, idx)?;
    Ok(match engine.leading_level(degree_cap)? {
        Some(l) => Order::Exact(l),
        None => Order::AtLeast(degree_cap + 1),
    })
}

/// Leading degree of the generalized filter function's moment table.
pub fn gff_filtering_order(cm: &ControlMatrix, idx: &IndexTuple, degree_cap: u32) -> Result<Order> {
    Ok(match gff_taylor(cm, idx, degree_cap)?.leading_level() {
        Some(l) => Order::Exact(l),
        None => Order::AtLeast(degree_cap + 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Caps {
    pub alpha_max: usize,
    pub degree_cap: u32,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { alpha_max: DEFAULT_ALPHA_MAX, degree_cap: DEFAULT_DEGREE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexOrders {
    pub index: IndexTuple,
    pub product: PauliProduct,
    pub phi: Order,
    pub delta: Order,
}

/// Per-index and aggregated orders of one protocol.
#[derive(Debug, Clone)]
pub struct ProtocolOrders {
    pub protocol: String,
    pub caps: Caps,
    pub error_axes: Vec<PauliAxis>,
    pub per_index: Vec<IndexOrders>,
    /// `κ ↦ φ^[κ]` for `κ = 1..=alpha_max`.
    pub fo_by_level: BTreeMap<usize, Order>,
    pub co: Order,
}

impl ProtocolOrders {
    pub fn fo(&self, kappa: usize) -> Option<Order> {
        self.fo_by_level.get(&kappa).copied()
    }

    pub fn resolved(&self) -> bool {
        self.co.is_resolved() && self.fo_by_level.values().all(|o| o.is_resolved())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let word = |axes: &[PauliAxis]| axes.iter().map(|a| a.label()).collect::<String>();
        let per_index: Vec<_> = self
            .per_index
            .iter()
            .map(|e| {
                let phase = ["1", "i", "-1", "-i"][e.product.phase as usize];
                serde_json::json!({
                    "alpha": e.index.alpha(),
                    "u": word(&e.index.u),
                    "v": word(&e.index.v),
                    "product": e.product.axis.map(|a| a.label().to_string()),
                    "phase": phase,
                    "phi": e.phi,
                    "delta": e.delta,
                })
            })
            .collect();
        let fo: serde_json::Map<String, serde_json::Value> = self
            .fo_by_level
            .iter()
            .map(|(k, o)| (k.to_string(), serde_json::to_value(o).expect("order serializes")))
            .collect();
        serde_json::json!({
            "protocol": self.protocol,
            "caps": self.caps,
            "error_axes": word(&self.error_axes),
            "per_index": per_index,
            "fo_by_level": fo,
            "co": self.co,
            "resolved": self.resolved(),
        })
    }
}

fn per_index(cm: &ControlMatrix, alpha: usize, degree_cap: u32) -> Result<Vec<IndexOrders>> {
    contributing(cm, alpha)?
        .into_par_iter()
        .map(|t| {
            let phi = fff_filtering_order(cm, &t.index, degree_cap)?;
            Ok(IndexOrders { delta: phi.shifted(alpha as u32 - 1), index: t.index, product: t.product, phi })
        })
        .collect()
}

fn fold_levels(per: &[IndexOrders], alpha_max: usize, degree_cap: u32) -> BTreeMap<usize, Order> {
    let mut out = BTreeMap::new();
    let mut running = Order::AtLeast(degree_cap + 1);
    for kappa in 1..=alpha_max {
        if let Some(m) = min_all(per.iter().filter(|e| e.index.alpha() == kappa).map(|e| e.phi)) {
            running = running.min(m);
        }
        out.insert(kappa, running);
    }
    out
}

/// Minimum of `δ⁽ᵅ⁾` over the explored orders. Tuples beyond `alpha_max` have
/// `δ⁽ᵅ⁾ ≥ alpha_max`, so larger minima only bound the true value from below.
fn fold_co(per: &[IndexOrders], alpha_max: usize, degree_cap: u32) -> Order {
    let m = min_all(per.iter().map(|e| e.delta)).unwrap_or(Order::AtLeast(degree_cap + 1));
    match m {
        Order::Exact(d) if d as usize <= alpha_max => m,
        _ => Order::AtLeast(m.value().min(alpha_max as u32)),
    }
}

/// Full order report for the control matrix's own error axes.
pub fn analyze(cm: &ControlMatrix, protocol: &str, caps: Caps) -> Result<ProtocolOrders> {
    check_alpha(caps.alpha_max)?;
    let mut per = Vec::new();
    for alpha in 1..=caps.alpha_max {
        per.extend(per_index(cm, alpha, caps.degree_cap)?);
    }
    Ok(ProtocolOrders {
        protocol: protocol.to_string(),
        caps,
        error_axes: cm.error_axes().to_vec(),
        fo_by_level: fold_levels(&per, caps.alpha_max, caps.degree_cap),
        co: fold_co(&per, caps.alpha_max, caps.degree_cap),
        per_index: per,
    })
}

/// `φ^[κ]`: minimum fundamental filtering order over relevant tuples with `α ≤ κ`.
pub fn protocol_fo(cm: &ControlMatrix, kappa: usize, error_axes: &[PauliAxis], degree_cap: u32) -> Result<Order> {
    check_alpha(kappa)?;
    let cm = cm.with_error_axes(error_axes)?;
    let mut per = Vec::new();
    for alpha in 1..=kappa {
        per.extend(per_index(&cm, alpha, degree_cap)?);
    }
    Ok(fold_levels(&per, kappa, degree_cap)[&kappa])
}

/// `Φ^[κ]` from the generalized filter functions' moment tables.
pub fn protocol_fo_generalized(
    cm: &ControlMatrix,
    kappa: usize,
    error_axes: &[PauliAxis],
    degree_cap: u32,
) -> Result<Order> {
    check_alpha(kappa)?;
    let cm = cm.with_error_axes(error_axes)?;
    let mut orders = Vec::new();
    for alpha in 1..=kappa {
        let found: Result<Vec<Order>> = contributing(&cm, alpha)?
            .par_iter()
            .map(|t| gff_filtering_order(&cm, &t.index, degree_cap))
            .collect();
        orders.extend(found?);
    }
    Ok(min_all(orders).unwrap_or(Order::AtLeast(degree_cap + 1)))
}

/// `δ`: minimum of `α + φ⁽ᵅ⁾ − 1` over relevant tuples with `α ≤ alpha_max`.
pub fn protocol_co(cm: &ControlMatrix, error_axes: &[PauliAxis], alpha_max: usize, degree_cap: u32) -> Result<Order> {
    check_alpha(alpha_max)?;
    let cm = cm.with_error_axes(error_axes)?;
    let mut per = Vec::new();
    for alpha in 1..=alpha_max {
        per.extend(per_index(&cm, alpha, degree_cap)?);
    }
    Ok(fold_co(&per, alpha_max, degree_cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "result", content = "alpha")]
pub enum NoGo {
    Pass,
    Fail(usize),
}

/// Smallest order with a nonvanishing relevant zero-frequency moment.
pub fn quasistatic_no_go(cm: &ControlMatrix, error_axes: &[PauliAxis], alpha_max: usize) -> Result<NoGo> {
    check_alpha(alpha_max)?;
    let cm = cm.with_error_axes(error_axes)?;
    for alpha in 1..=alpha_max {
        let zero = vec![0; alpha];
        let hit = contributing(&cm, alpha)?
            .par_iter()
            .map(|t| MomentEngine::new(&cm, &t.index)?.moment(&zero).map(|m| !m.zero))
            .collect::<Result<Vec<bool>>>()?;
        if hit.into_iter().any(|h| h) {
            return Ok(NoGo::Fail(alpha));
        }
    }
    Ok(NoGo::Pass)
}
