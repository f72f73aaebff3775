//! Double-exponential quadrature on the half line.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub error: f64,
    pub evals: usize,
    pub levels: usize,
}

const T_MAX: f64 = 5.0;
const MIN_LEVEL: usize = 3;
const MAX_LEVEL: usize = 10;

fn node(t: f64) -> (f64, f64) {
    let e = std::f64::consts::FRAC_PI_2 * t.sinh();
    let x = e.exp();
    (x, std::f64::consts::FRAC_PI_2 * t.cosh() * x)
}

/// `∫₀^∞ f(x) dx` by the exp-sinh rule `x = exp(π/2·sinh t)`, halving the step until
/// successive levels agree to `tol` relative.
pub fn exp_sinh<F: FnMut(f64) -> f64>(mut f: F, tol: f64) -> QuadResult {
    let mut eval = |t: f64, evals: &mut usize| -> f64 {
        let (x, w) = node(t);
        if x == 0.0 || !x.is_finite() || w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        *evals += 1;
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut evals = 0;
    let mut h = 1.0f64;
    let kmax = (T_MAX / h) as i64;
    let mut sum: f64 = (-kmax..=kmax).map(|k| eval(k as f64 * h, &mut evals)).sum();
    let mut prev = sum * h;
    let mut error = f64::INFINITY;
    let mut level = 0;
    while level < MAX_LEVEL {
        level += 1;
        h *= 0.5;
        let kmax = (T_MAX / h) as i64;
        let mut k = -kmax + if kmax % 2 == 0 { 1 } else { 0 };
        while k <= kmax {
            sum += eval(k as f64 * h, &mut evals);
            k += 2;
        }
        let cur = sum * h;
        error = (cur - prev).abs();
        prev = cur;
        if level >= MIN_LEVEL && error <= tol * cur.abs() {
            break;
        }
    }
    QuadResult { value: prev, error, evals, levels: level }
}

/// `∫_{R₊^d} f(x) dx` by nested exp-sinh rules; the inner tolerance is a tenth of the outer one.
pub fn exp_sinh_nd<F: Fn(&[f64]) -> f64>(f: &F, d: usize, tol: f64) -> QuadResult {
    fn rec<F: Fn(&[f64]) -> f64>(f: &F, x: &mut Vec<f64>, d: usize, tol: f64, evals: &mut usize) -> (f64, f64, usize) {
        if x.len() + 1 == d {
            let mut buf = x.clone();
            buf.push(0.0);
            let r = exp_sinh(
                |t| {
                    *buf.last_mut().unwrap() = t;
                    f(&buf)
                },
                tol,
            );
            *evals += r.evals;
            return (r.value, r.error, r.levels);
        }
        let mut inner_err = 0.0f64;
        let r = exp_sinh(
            |t| {
                x.push(t);
                let (v, e, _) = rec(f, x, d, tol * 0.1, evals);
                x.pop();
                inner_err = inner_err.max(if v != 0.0 { e / v.abs() } else { 0.0 });
                v
            },
            tol,
        );
        (r.value, r.error + inner_err * r.value.abs(), r.levels)
    }
    if d == 0 {
        return QuadResult { value: f(&[]), error: 0.0, evals: 1, levels: 0 };
    }
    let mut evals = 0;
    let (value, error, levels) = rec(f, &mut Vec::with_capacity(d), d, tol, &mut evals);
    QuadResult { value, error, evals, levels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_integrals() {
        let r = exp_sinh(|x| x.powi(3) * (-x).exp(), 1e-12);
        assert!((r.value - 6.0).abs() < 1e-10, "{r:?}");
        let r = exp_sinh(|x| (-x * x * x).exp(), 1e-12);
        assert!((r.value - 0.892_979_511_569_249_2).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn wide_scales() {
        let s = 1e-4;
        let r = exp_sinh(|x| (-x / s).exp(), 1e-10);
        assert!((r.value / s - 1.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn two_dimensional_gaussian() {
        let r = exp_sinh_nd(&|x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp(), 2, 1e-10);
        assert!((r.value - std::f64::consts::PI / 4.0).abs() < 1e-9, "{r:?}");
    }
}
