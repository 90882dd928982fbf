//! Divided differences of the exponential at complex nodes.
//!
//! The entries of `exp(A)` for the bidiagonal matrix with the nodes on the
//! diagonal and ones above it are the divided differences of `exp` over
//! contiguous node ranges. Evaluating the matrix exponential by shift,
//! scaling and squaring stays accurate for coincident or clustered nodes,
//! where the recursive difference formula cancels catastrophically.

use num_complex::Complex64;

/// `exp[z_0, …, z_r]`, with Taylor terms dropped below `tol` relative.
pub fn exp_divided_difference(z: &[Complex64], tol: f64) -> Complex64 {
    let n = z.len();
    assert!(n > 0, "need at least one node");
    if n == 1 {
        return z[0].exp();
    }
    if n == 2 {
        let d = z[1] - z[0];
        return z[0].exp() * phi1(d, tol);
    }
    let mu = z.iter().sum::<Complex64>() / n as f64;
    let spread = z.iter().map(|w| (w - mu).norm()).fold(0.0, f64::max);
    let s = if spread > 0.5 { (spread / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 2f64.powi(-s);

    // upper-triangular n×n, row-major
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        a[i * n + i] = (z[i] - mu) * scale;
        if i + 1 < n {
            a[i * n + i + 1] = Complex64::new(scale, 0.0);
        }
    }
    let mut e = vec![Complex64::new(0.0, 0.0); n * n];
    let mut term = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        e[i * n + i] = Complex64::new(1.0, 0.0);
        term[i * n + i] = Complex64::new(1.0, 0.0);
    }
    for k in 1..400 {
        term = upper_mul(&term, &a, n);
        let inv = 1.0 / k as f64;
        term.iter_mut().for_each(|t| *t *= inv);
        let mut converged = k >= n - 1;
        for p in 0..n {
            for q in p..n {
                let t = term[p * n + q];
                e[p * n + q] += t;
                if converged && t.norm() > tol * e[p * n + q].norm() {
                    converged = false;
                }
            }
        }
        if converged {
            break;
        }
    }
    for _ in 0..s {
        e = upper_mul(&e, &e, n);
    }
    mu.exp() * e[n - 1]
}

/// `(e^d − 1)/d`, i.e. `exp[0, d]`.
fn phi1(d: Complex64, tol: f64) -> Complex64 {
    if d.norm() > 0.5 {
        return (d.exp() - 1.0) / d;
    }
    let mut sum = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 2..60 {
        term *= d / k as f64;
        sum += term;
        if term.norm() <= tol * sum.norm() {
            break;
        }
    }
    sum
}

fn upper_mul(x: &[Complex64], y: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for p in 0..n {
        for l in p..n {
            let xv = x[p * n + l];
            if xv == Complex64::new(0.0, 0.0) {
                continue;
            }
            for q in l..n {
                out[p * n + q] += xv * y[l * n + q];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Plain recursive divided differences, valid for well-separated nodes.
    fn naive(z: &[Complex64]) -> Complex64 {
        if z.len() == 1 {
            return z[0].exp();
        }
        (naive(&z[1..]) - naive(&z[..z.len() - 1])) / (z[z.len() - 1] - z[0])
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn coincident_nodes_give_taylor_coefficients() {
        for r in 0..7 {
            let z = vec![c(0.0, 0.0); r + 1];
            let v = exp_divided_difference(&z, 1e-16);
            assert!((v - c(1.0 / factorial(r), 0.0)).norm() < 1e-15 / factorial(r).max(1.0) * 10.0);
            let z = vec![c(0.0, 3.0); r + 1];
            let v = exp_divided_difference(&z, 1e-16);
            let expect = c(0.0, 3.0).exp() / factorial(r);
            assert!((v - expect).norm() < 1e-13 * expect.norm(), "r={r}");
        }
    }

    #[test]
    fn separated_nodes_match_recursion() {
        let z = [c(0.0, 0.0), c(0.0, 2.0), c(0.0, 5.0), c(0.0, -3.0)];
        let a = exp_divided_difference(&z, 1e-16);
        let b = naive(&z);
        assert!((a - b).norm() < 1e-12 * b.norm());
    }

    proptest! {
        #[test]
        fn simplex_integral_identity(z1 in -8.0f64..8.0, z2 in -8.0f64..8.0) {
            // ∫_{1≥s1≥s2≥0} e^{i(z1 s1 + z2 s2)} against a fine midpoint rule
            let nodes = [c(0.0, 0.0), c(0.0, z1), c(0.0, z1 + z2)];
            let dd = exp_divided_difference(&nodes, 1e-16);
            let m = 400;
            let h = 1.0 / m as f64;
            let mut sum = c(0.0, 0.0);
            for a in 0..m {
                let s1 = (a as f64 + 0.5) * h;
                // inner integral in closed form
                let inner = if z2.abs() < 1e-12 { c(s1, 0.0) } else { (c(0.0, z2 * s1).exp() - 1.0) / c(0.0, z2) };
                sum += c(0.0, z1 * s1).exp() * inner * h;
            }
            prop_assert!((dd - sum).norm() < 2e-4);
        }

        #[test]
        fn permutation_symmetric(a in -20.0f64..20.0, b in -20.0f64..20.0, d in -20.0f64..20.0) {
            let x = exp_divided_difference(&[c(0.0, a), c(0.0, b), c(0.0, d)], 1e-16);
            let y = exp_divided_difference(&[c(0.0, d), c(0.0, a), c(0.0, b)], 1e-16);
            prop_assert!((x - y).norm() < 1e-12);
        }
    }
}
