//! Domination of derivatives of nonnegative functions at `0` by iterated Laplacians.
//!
//! For a nonnegative polynomial `g` on the unit ball of `Cʲ` and a derivative `D^{α⁰β⁰}`, the
//! search runs over every `a ∈ Nʲ` with `2|a| ≤ |α⁰+β⁰|` and keeps the largest `(∏Δᵢ^{aᵢ})g(0)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpoly::CPoly;
use crate::error::{FtlError, Result};
use crate::C64;

fn factorial(k: u8) -> f64 {
    (1..=k as u32).map(f64::from).product()
}

/// `D^{αβ}g(0) = α!β!·coeff(z^α z̄^β)`.
pub fn derivative_at_zero(g: &CPoly, alpha: &[u8], beta: &[u8]) -> C64 {
    let mono: Vec<u8> = alpha.iter().chain(beta).copied().collect();
    let f: f64 = alpha.iter().chain(beta).map(|&k| factorial(k)).product();
    g.coeff(&mono) * f
}

/// `(∏Δᵢ^{aᵢ})g(0)` with `Δᵢ = ∂²/∂zᵢ∂z̄ᵢ`.
pub fn iterated_laplacian_at_zero(g: &CPoly, a: &[u8]) -> f64 {
    derivative_at_zero(g, a, a).re
}

/// Multi-indices of length `j` with total at most `max`.
pub fn multi_indices(j: usize, max: usize) -> Vec<Vec<u8>> {
    fn rec(j: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur.push(k as u8);
            rec(j, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(j, max, &mut Vec::with_capacity(j), &mut out);
    out
}

/// Upper bound of `sup_{|w|≤1} |D^{αβ}g(w)|` over `|α+β| ≤ m`, from the coefficients.
pub fn derivative_bound(g: &CPoly, m: usize) -> f64 {
    let j = g.dim();
    let mut best = 0.0f64;
    for ab in multi_indices(2 * j, m) {
        let mut total = 0.0;
        for (mono, c) in g.terms() {
            if mono.iter().zip(&ab).any(|(e, d)| e < d) {
                continue;
            }
            let falling: f64 = mono.iter().zip(&ab).map(|(&e, &d)| factorial(e) / factorial(e - d)).product();
            total += c.norm() * falling;
        }
        best = best.max(total);
    }
    best
}

fn sample_ball<R: Rng>(rng: &mut R, j: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..j).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        if v.iter().map(|x| x.norm_sqr()).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// Smallest sampled value of `Re g` on the unit ball.
pub fn sampled_minimum(g: &CPoly, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = g.dim();
    let mut zero = vec![C64::new(0.0, 0.0); j];
    let mut min = g.eval(&zero).re;
    for _ in 0..samples {
        zero = sample_ball(&mut rng, j);
        min = min.min(g.eval(&zero).re);
    }
    min
}

/// Largest sampled `|D^{αβ}g|` over `|α+β| ≤ m` on the unit ball.
pub fn sampled_derivative_sup(g: &CPoly, m: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = g.dim();
    let pts: Vec<Vec<C64>> = (0..samples).map(|_| sample_ball(&mut rng, j)).collect();
    let mut best = 0.0f64;
    for ab in multi_indices(2 * j, m) {
        let mut d = g.clone();
        for (v, &k) in ab.iter().enumerate() {
            for _ in 0..k {
                d = d.derive(v % j, v >= j);
            }
        }
        if d.is_zero() {
            continue;
        }
        for p in &pts {
            best = best.max(d.eval(p).norm());
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominationCase {
    /// `g(0)` itself dominates (`a = 0`).
    First,
    /// A proper iterated Laplacian dominates.
    Second,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationResult {
    pub alpha0: Vec<u8>,
    pub beta0: Vec<u8>,
    pub a: Vec<u8>,
    pub value: f64,
    pub target: f64,
    /// `target / value`; infinite when `value ≤ 0` with a positive target.
    pub constant: f64,
    pub case: DominationCase,
}

impl DominationResult {
    pub fn violated(&self) -> bool {
        self.target > 0.0 && !(self.value > 0.0)
    }
}

/// Exhaustive search without precondition checks.
pub fn domination_search(g: &CPoly, alpha0: &[u8], beta0: &[u8]) -> DominationResult {
    let j = g.dim();
    let order: usize = alpha0.iter().chain(beta0).map(|&k| k as usize).sum();
    let d = derivative_at_zero(g, alpha0, beta0).norm();
    let target = if d == 0.0 { 0.0 } else { d.powf(2f64.powi(order as i32)) };
    let mut best = (vec![0u8; j], f64::NEG_INFINITY);
    for a in multi_indices(j, order / 2) {
        let v = iterated_laplacian_at_zero(g, &a);
        if v > best.1 {
            best = (a, v);
        }
    }
    let (a, value) = best;
    let constant = if target == 0.0 {
        0.0
    } else if value > 0.0 {
        target / value
    } else {
        f64::INFINITY
    };
    let case = if a.iter().all(|&k| k == 0) { DominationCase::First } else { DominationCase::Second };
    DominationResult { alpha0: alpha0.to_vec(), beta0: beta0.to_vec(), a, value, target, constant, case }
}

/// Sample count for the precondition checks.
pub const PRECONDITION_SAMPLES: usize = 2000;

/// Checks `g ≥ 0` and the derivative bound `K₁` by sampling, then searches.
pub fn laplacian_domination(g: &CPoly, alpha0: &[u8], beta0: &[u8], k1: f64, m: usize) -> Result<DominationResult> {
    let j = g.dim();
    if alpha0.len() != j || beta0.len() != j {
        return Err(FtlError::Dimension { expected: j, found: alpha0.len().min(beta0.len()) });
    }
    let order: usize = alpha0.iter().chain(beta0).map(|&k| k as usize).sum();
    if order >= m {
        return Err(FtlError::Invalid(format!("|alpha0 + beta0| = {order} must be below M = {m}")));
    }
    let min = sampled_minimum(g, PRECONDITION_SAMPLES, 1);
    if min < -1e-12 {
        return Err(FtlError::Invalid(format!("g is negative on the unit ball (sampled minimum {min:e})")));
    }
    let sup = sampled_derivative_sup(g, m, PRECONDITION_SAMPLES / 10, 2);
    if sup > k1 * (1.0 + 1e-12) {
        return Err(FtlError::Invalid(format!("derivative bound K1 = {k1} violated (sampled {sup})")));
    }
    Ok(domination_search(g, alpha0, beta0))
}

/// `Σ|hₖ|²`.
pub fn sum_of_squares(hs: &[CPoly]) -> Result<CPoly> {
    let Some(first) = hs.first() else {
        return Err(FtlError::Invalid("empty sum of squares".into()));
    };
    let mut g = CPoly::zero(first.dim());
    for h in hs {
        g = g.add(&h.mul(&h.conj()));
    }
    Ok(g)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonnegPoly {
    pub g: CPoly,
    pub k1: f64,
    pub degree: usize,
}

/// `Σₖ|hₖ|²` for one to three random sparse mixed polynomials `hₖ` of degree at most `degree/2`.
///
/// Constant terms are rare so that low-order derivatives at `0` carry the information.
pub fn random_nonneg_poly(seed: u64, degree: usize, j: usize) -> Result<NonnegPoly> {
    if degree % 2 != 0 || degree == 0 {
        return Err(FtlError::Invalid(format!("degree must be even and positive, got {degree}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = degree / 2;
    let monos: Vec<Vec<u8>> = multi_indices(2 * j, half).into_iter().collect();
    let count = rng.gen_range(1..=3);
    let mut hs = Vec::with_capacity(count);
    for _ in 0..count {
        let mut h = CPoly::zero(j);
        let terms = rng.gen_range(1..=3);
        for _ in 0..terms {
            let m = &monos[rng.gen_range(0..monos.len())];
            if m.iter().all(|&k| k == 0) && rng.gen_bool(0.8) {
                continue;
            }
            let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            h = h.add(&CPoly::monomial(j, m.clone(), c));
        }
        if !h.is_zero() {
            hs.push(h);
        }
    }
    if hs.is_empty() {
        let mut m = vec![0u8; 2 * j];
        m[0] = 1;
        hs.push(CPoly::monomial(j, m, C64::new(1.0, 0.0)));
    }
    let g = sum_of_squares(&hs)?;
    let k1 = derivative_bound(&g, degree);
    Ok(NonnegPoly { g, k1, degree })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BucketStats {
    /// `⌊log₁₀ K₁⌋`.
    pub log10_k1: i32,
    pub cases: usize,
    pub max_constant: f64,
    pub median_constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusReport {
    pub polynomials: usize,
    pub cases: usize,
    pub first_case: usize,
    pub second_case: usize,
    pub violations: Vec<DominationResult>,
    pub max_constant: f64,
    pub buckets: Vec<BucketStats>,
}

/// Runs the search on `count` random polynomials (degree ≤ 8, `j ≤ 2`) for every nonzero
/// `D^{α⁰β⁰}g(0)` with `1 ≤ |α⁰+β⁰| ≤ max_order`.
pub fn corpus_sweep(count: usize, max_order: usize, seed: u64) -> Result<CorpusReport> {
    use rayon::prelude::*;
    let per_poly: Result<Vec<(f64, Vec<DominationResult>)>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_mul(6364136223846793005).wrapping_add(k as u64);
            let j = 1 + k % 2;
            let degree = 2 * (1 + (k / 2) % 4);
            let np = random_nonneg_poly(s, degree, j)?;
            let mut out = Vec::new();
            for ab in multi_indices(2 * j, max_order) {
                let order: usize = ab.iter().map(|&x| x as usize).sum();
                if order == 0 {
                    continue;
                }
                let (alpha, beta) = ab.split_at(j);
                if derivative_at_zero(&np.g, alpha, beta).norm() == 0.0 {
                    continue;
                }
                out.push(domination_search(&np.g, alpha, beta));
            }
            Ok((np.k1, out))
        })
        .collect();
    let per_poly = per_poly?;
    let mut buckets: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut report = CorpusReport {
        polynomials: count,
        cases: 0,
        first_case: 0,
        second_case: 0,
        violations: Vec::new(),
        max_constant: 0.0,
        buckets: Vec::new(),
    };
    for (k1, results) in per_poly {
        let b = k1.log10().floor() as i32;
        for r in results {
            report.cases += 1;
            match r.case {
                DominationCase::First => report.first_case += 1,
                DominationCase::Second => report.second_case += 1,
            }
            if r.violated() {
                report.violations.push(r);
                continue;
            }
            report.max_constant = report.max_constant.max(r.constant);
            buckets.entry(b).or_default().push(r.constant);
        }
    }
    report.buckets = buckets
        .into_iter()
        .map(|(b, mut v)| {
            v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            BucketStats { log10_k1: b, cases: v.len(), max_constant: *v.last().unwrap_or(&0.0), median_constant: v[v.len() / 2] }
        })
        .collect();
    Ok(report)
}

/// The three worked examples: `|z₁|²` at `((1),(1))`, `|z₁|⁴` at `((2),(2))`, `(Re z₁)²` at `((2),(0))`.
pub fn worked_examples() -> Vec<(String, DominationResult)> {
    let z = CPoly::var(1, 0, false);
    let zb = CPoly::var(1, 0, true);
    let abs2 = z.mul(&zb);
    let re = z.add(&zb).scale(C64::new(0.5, 0.0));
    vec![
        ("|z1|^2".to_string(), domination_search(&abs2, &[1], &[1])),
        ("|z1|^4".to_string(), domination_search(&abs2.mul(&abs2), &[2], &[2])),
        ("(Re z1)^2".to_string(), domination_search(&re.mul(&re), &[2], &[0])),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples_are_exact() {
        let ex = worked_examples();
        assert_eq!(ex[0].1.value, 1.0);
        assert_eq!(ex[0].1.target, 1.0);
        assert_eq!(ex[1].1.a, vec![2]);
        assert_eq!(ex[1].1.value, 4.0);
        assert_eq!(ex[1].1.constant, 4f64.powi(16) / 4.0);
        assert_eq!(ex[2].1.a, vec![1]);
        assert_eq!(ex[2].1.value, 0.5);
        assert_eq!(derivative_at_zero(&{
            let z = CPoly::var(1, 0, false);
            let r = z.add(&z.conj()).scale(C64::new(0.5, 0.0));
            r.mul(&r)
        }, &[2], &[0]), C64::new(0.5, 0.0));
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(4, 4).len(), 70);
    }
}
