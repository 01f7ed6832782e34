//! Dense real polynomials in ascending-coefficient order, with sign-change
//! isolation and monotone root refinement.
//!
//! Roots are isolated recursively: the real roots of `p'` split the search
//! interval into pieces on which `p` is monotone, and each piece holds at
//! most one sign change, refined by Newton steps safeguarded by bisection.

/// Horner evaluation of `sum_k c[k] s^k`.
#[inline]
pub fn eval(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Coefficients of the antiderivative vanishing at 0.
pub fn antiderivative(coeffs: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64))
        .collect()
}

/// Coefficients of `r -> p(origin + r)` (Taylor shift).
pub fn shift(coeffs: &[f64], origin: f64) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    if origin == 0.0 {
        return out;
    }
    let n = out.len();
    // Repeated synthetic division by (r - origin).
    for i in 0..n {
        for k in (i..n.saturating_sub(1)).rev() {
            out[k] += origin * out[k + 1];
        }
    }
    out
}

/// Drops trailing zero coefficients; an all-zero polynomial becomes empty.
pub fn trim(coeffs: &[f64]) -> &[f64] {
    let len = coeffs.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    &coeffs[..len]
}

/// Bound on the modulus of every root (Cauchy).
fn cauchy_bound(coeffs: &[f64]) -> f64 {
    let lead = *coeffs.last().unwrap();
    1.0 + coeffs[..coeffs.len() - 1]
        .iter()
        .map(|c| (c / lead).abs())
        .fold(0.0, f64::max)
}

fn different_signs(a: f64, b: f64) -> bool {
    (a < 0.0) != (b < 0.0)
}

/// Finds the unique point in `[lo, hi]` where the monotone function `f`
/// changes sign. `flo` and `fhi` must have different signs.
pub fn refine_root<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, flo: f64, x_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = lo + 0.5 * (hi - lo);
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if different_signs(flo, fx) {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= x_tol * (1.0 + x.abs()) {
            return lo + 0.5 * (hi - lo);
        }
        let dfx = df(x);
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) {
            next = lo + 0.5 * (hi - lo);
            if next == lo || next == hi {
                return next;
            }
        }
        if (next - x).abs() <= x_tol * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Sorted points in the open interval `(lo, hi)` at which `p` changes sign.
/// `hi` may be `f64::INFINITY`. Roots of even multiplicity are skipped,
/// which is all that sign-based integration needs.
pub fn sign_changes(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let p = trim(coeffs);
    if p.len() <= 1 || !(hi > lo) {
        return Vec::new();
    }
    let hi = if hi.is_finite() {
        hi
    } else {
        hi.min(cauchy_bound(p).max(lo + 1.0))
    };
    let mut roots = Vec::new();
    match p.len() {
        2 => {
            let r = -p[0] / p[1];
            if r > lo && r < hi {
                roots.push(r);
            }
        }
        3 => {
            for r in quadratic_roots(p[0], p[1], p[2]) {
                if r > lo && r < hi {
                    roots.push(r);
                }
            }
        }
        _ => {
            let dp = derivative(p);
            let mut knots = vec![lo];
            knots.extend(sign_changes(&dp, lo, hi));
            knots.push(hi);
            let mut prev = eval(p, lo);
            for w in knots.windows(2) {
                let (a, b) = (w[0], w[1]);
                let fb = eval(p, b);
                if prev != 0.0 && fb != 0.0 && different_signs(prev, fb) {
                    let r = refine_root(|s| eval(p, s), |s| eval(&dp, s), a, b, prev, 1e-15);
                    roots.push(r);
                } else if fb == 0.0 && b < hi {
                    // exact zero at a knot: a sign change only if the
                    // neighbours disagree
                    let next = knots
                        .iter()
                        .find(|&&k| k > b)
                        .map(|&k| eval(p, 0.5 * (b + k)))
                        .unwrap_or(0.0);
                    let before = eval(p, 0.5 * (a + b));
                    if different_signs(before, next) && before != 0.0 && next != 0.0 {
                        roots.push(b);
                    }
                }
                if fb != 0.0 {
                    prev = fb;
                }
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

/// Real roots of `c0 + c1 s + c2 s^2` with odd multiplicity, using the
/// cancellation-free form.
fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if !(disc > 0.0) {
        return Vec::new();
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let mut r = vec![q / c2, c0 / q];
    r.sort_by(f64::total_cmp);
    r
}
