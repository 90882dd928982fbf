//! Gauss–Legendre and Gauss–Kronrod rules, ordered-simplex quadrature and the
//! brute-force filter-function oracle.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::control::ControlMatrix;
use crate::error::{invalid, Error, Result};
use crate::fff::{FilterEvaluation, IndexTuple};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Splits `[lo, hi]` at the breakpoints inside it, then into pieces no wider than `max_width`.
pub fn panels(lo: f64, hi: f64, breakpoints: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo];
    cuts.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.push(hi);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let pieces = if max_width.is_finite() && max_width > 0.0 {
            ((b - a) / max_width).ceil().max(1.0) as usize
        } else {
            1
        };
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            out.push((a + p as f64 * h, if p + 1 == pieces { b } else { a + (p + 1) as f64 * h }));
        }
    }
    out
}

/// Nested Gauss–Legendre over `T ≥ t₁ ≥ … ≥ t_d ≥ 0` with panels aligned to `breakpoints`.
pub fn ordered_simplex_quadrature<F>(
    duration: f64,
    breakpoints: &[f64],
    dims: usize,
    nodes: usize,
    max_width: f64,
    f: F,
) -> Complex64
where
    F: Fn(&[f64]) -> Complex64,
{
    let rule = gauss_legendre(nodes);
    let mut point = vec![0.0; dims];
    nest(0, duration, breakpoints, &rule, max_width, &mut point, &f)
}

fn nest<F>(
    level: usize,
    upper: f64,
    breakpoints: &[f64],
    rule: &(Vec<f64>, Vec<f64>),
    max_width: f64,
    point: &mut Vec<f64>,
    f: &F,
) -> Complex64
where
    F: Fn(&[f64]) -> Complex64,
{
    if level == point.len() {
        return f(point);
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for (a, b) in panels(0.0, upper, breakpoints, max_width) {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            point[level] = mid + half * x;
            sum += nest(level + 1, point[level], breakpoints, rule, max_width, point, f) * (w * half);
        }
    }
    sum
}

/// Brute-force `F(ω⃗, T)` by ordered-simplex quadrature; an oracle for [`crate::fff::fff_eval`].
pub fn fff_eval_quadrature(
    cm: &ControlMatrix,
    idx: &IndexTuple,
    omega: &[f64],
    n_nodes: usize,
) -> Result<FilterEvaluation> {
    let alpha = idx.alpha();
    if alpha > 4 {
        return Err(Error::CostGuard(format!("quadrature oracle limited to order 4, got {alpha}")));
    }
    if n_nodes < 2 {
        return invalid("at least two nodes per panel");
    }
    if omega.len() != alpha {
        return invalid("frequency tuple length differs from the order");
    }
    cm.check_axes(&idx.u)?;
    let wmax = omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let max_width = if wmax > 0.0 { 2.0 / wmax } else { f64::INFINITY };
    let value = ordered_simplex_quadrature(
        cm.duration_f64(),
        cm.breakpoints_f64(),
        alpha,
        n_nodes,
        max_width,
        |t| {
            let mut acc = Complex64::new(1.0, 0.0);
            for j in 0..alpha {
                let y = cm.eval(idx.u[j], idx.v[j], t[j]);
                if y == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                acc *= Complex64::new(0.0, omega[j] * t[j]).exp() * y;
            }
            acc
        },
    ) * Complex64::new(0.0, -1.0).powu(alpha as u32);
    Ok(FilterEvaluation { index: idx.clone(), omega: omega.to_vec(), value })
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 7/15-point Gauss–Kronrod pass: (Kronrod estimate, error estimate).
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod over each of the given panels.
///
/// A piece is accepted when its error estimate is below `rel_tol` of its own
/// magnitude or below its width-proportional share of `abs_tol`.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: &F, panels: &[(f64, f64)], rel_tol: f64, abs_tol: f64) -> Result<f64> {
    let width: f64 = panels.iter().map(|p| p.1 - p.0).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut stack: Vec<(f64, f64, u32)> = panels.iter().map(|&(a, b)| (a, b, 0)).collect();
    let mut total = 0.0;
    while let Some((a, b, depth)) = stack.pop() {
        let (v, e) = gauss_kronrod_15(f, a, b);
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite integrand".into()));
        }
        if e <= rel_tol * v.abs() || e <= abs_tol * (b - a) / width || depth >= 48 {
            total += v;
            continue;
        }
        let m = (a + b) / 2.0;
        stack.push((a, m, depth + 1));
        stack.push((m, b, depth + 1));
    }
    Ok(total)
}
