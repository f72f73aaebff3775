//! Polynomials in `(z₁..zₙ, z̄₁..z̄ₙ)` with complex coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::jet::{Jet, JetSpace};

/// Exponent vector of length `2n`: the first `n` entries act on `z`, the last `n` on `z̄`.
pub type Mono = Vec<u8>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CPoly {
    n: usize,
    terms: BTreeMap<Mono, C64>,
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

impl CPoly {
    pub fn zero(n: usize) -> CPoly {
        CPoly { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: C64) -> CPoly {
        let mut p = CPoly::zero(n);
        p.add_term(vec![0; 2 * n], c);
        p
    }

    pub fn one(n: usize) -> CPoly {
        CPoly::constant(n, ONE)
    }

    /// The coordinate `z_j` (or `z̄_j` when `conj`).
    pub fn var(n: usize, j: usize, conj: bool) -> CPoly {
        let mut m = vec![0u8; 2 * n];
        m[if conj { n + j } else { j }] = 1;
        let mut p = CPoly::zero(n);
        p.add_term(m, ONE);
        p
    }

    pub fn monomial(n: usize, m: Mono, c: C64) -> CPoly {
        let mut p = CPoly::zero(n);
        p.add_term(m, c);
        p
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &C64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &[u8]) -> C64 {
        self.terms.get(m).copied().unwrap_or(ZERO)
    }

    pub fn add_term(&mut self, m: Mono, c: C64) {
        debug_assert_eq!(m.len(), 2 * self.n);
        if c == ZERO {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(e) => {
                *e += c;
                if *e == ZERO {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.iter().map(|&e| e as usize).sum()).max().unwrap_or(0)
    }

    pub fn add(&self, o: &CPoly) -> CPoly {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(m.clone(), *c);
        }
        r
    }

    pub fn sub(&self, o: &CPoly) -> CPoly {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(m.clone(), -c);
        }
        r
    }

    pub fn scale(&self, s: C64) -> CPoly {
        if s == ZERO {
            return CPoly::zero(self.n);
        }
        CPoly { n: self.n, terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() }
    }

    pub fn mul(&self, o: &CPoly) -> CPoly {
        let mut r = CPoly::zero(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &o.terms {
                let m: Mono = a.iter().zip(b).map(|(x, y)| x + y).collect();
                r.add_term(m, ca * cb);
            }
        }
        r
    }

    pub fn pow(&self, e: u32) -> CPoly {
        let mut acc = CPoly::one(self.n);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Exact partial derivative in `z_j` (or `z̄_j`).
    pub fn derive(&self, j: usize, conj: bool) -> CPoly {
        let v = if conj { self.n + j } else { j };
        let mut r = CPoly::zero(self.n);
        for (m, c) in &self.terms {
            if m[v] == 0 {
                continue;
            }
            let mut t = m.clone();
            t[v] -= 1;
            r.add_term(t, c * m[v] as f64);
        }
        r
    }

    /// The polynomial of the conjugate function.
    pub fn conj(&self) -> CPoly {
        let n = self.n;
        let mut r = CPoly::zero(n);
        for (m, c) in &self.terms {
            let mut t = m[n..].to_vec();
            t.extend_from_slice(&m[..n]);
            r.add_term(t, c.conj());
        }
        r
    }

    pub fn real_part(&self) -> CPoly {
        self.add(&self.conj()).scale(C64::new(0.5, 0.0))
    }

    pub fn imag_part(&self) -> CPoly {
        self.sub(&self.conj()).scale(C64::new(0.0, -0.5))
    }

    /// `coeff(α,β) = conj(coeff(β,α))` for every stored term, within `tol`.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        self.sub(&self.conj()).terms.values().all(|c| c.norm() <= tol)
    }

    /// Evaluation with `z̄` taken as the conjugate of `z`.
    pub fn eval(&self, z: &[C64]) -> C64 {
        let zb: Vec<C64> = z.iter().map(|v| v.conj()).collect();
        self.eval_indep(z, &zb)
    }

    /// Evaluation with `z` and `z̄` as independent arguments.
    pub fn eval_indep(&self, z: &[C64], zb: &[C64]) -> C64 {
        let n = self.n;
        let mut s = ZERO;
        for (m, c) in &self.terms {
            let mut t = *c;
            for j in 0..n {
                if m[j] > 0 {
                    t *= z[j].powu(m[j] as u32);
                }
                if m[n + j] > 0 {
                    t *= zb[j].powu(m[n + j] as u32);
                }
            }
            s += t;
        }
        s
    }

    /// Substitutes jets for the coordinates: `z_j ↦ z[j]`, `z̄_j ↦ zb[j]`.
    pub fn eval_jets(&self, z: &[Jet], zb: &[Jet]) -> Jet {
        let n = self.n;
        let space: &std::sync::Arc<JetSpace> = z[0].space();
        let mut max_e = vec![0u8; 2 * n];
        for m in self.terms.keys() {
            for (k, &e) in m.iter().enumerate() {
                max_e[k] = max_e[k].max(e);
            }
        }
        let mut powers: Vec<Vec<Jet>> = Vec::with_capacity(2 * n);
        for k in 0..2 * n {
            let base = if k < n { &z[k] } else { &zb[k - n] };
            let mut v = vec![Jet::constant(space, ONE).with_order(base.order())];
            for e in 1..=max_e[k] as usize {
                let next = v[e - 1].mul(base);
                v.push(next);
            }
            powers.push(v);
        }
        let ord = z.iter().chain(zb).map(|j| j.order()).min().unwrap_or(space.order);
        let mut acc = Jet::zero(space).with_order(ord);
        for (m, c) in &self.terms {
            let mut t: Option<Jet> = None;
            for (k, &e) in m.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let p = &powers[k][e as usize];
                t = Some(match t {
                    None => p.clone(),
                    Some(x) => x.mul(p),
                });
            }
            match t {
                None => acc = acc.add_const(*c),
                Some(x) => acc.add_assign(&x.scale(*c)),
            }
        }
        acc
    }

    /// Taylor jet at `p`.
    pub fn jet_at(&self, space: &std::sync::Arc<JetSpace>, p: &[C64]) -> Jet {
        let (z, zb) = Jet::coordinates(space, p);
        self.eval_jets(&z, &zb)
    }

    /// Substitutes polynomials for the coordinates (`z_j ↦ z[j]`, `z̄_j ↦ zb[j]`).
    pub fn compose(&self, z: &[CPoly], zb: &[CPoly]) -> CPoly {
        let m_dim = z.first().map(|p| p.n).unwrap_or(self.n);
        let mut acc = CPoly::zero(m_dim);
        for (m, c) in &self.terms {
            let mut t = CPoly::constant(m_dim, *c);
            for (k, &e) in m.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let base = if k < self.n { &z[k] } else { &zb[k - self.n] };
                t = t.mul(&base.pow(e as u32));
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Drops all terms of total degree above `d`.
    pub fn truncate(&self, d: usize) -> CPoly {
        CPoly {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.iter().map(|&e| e as usize).sum::<usize>() <= d)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    /// Drops terms whose coefficient modulus is at most `tol`.
    pub fn prune(&self, tol: f64) -> CPoly {
        CPoly {
            n: self.n,
            terms: self.terms.iter().filter(|(_, c)| c.norm() > tol).map(|(m, c)| (m.clone(), *c)).collect(),
        }
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Relabels coordinates: old slot `k` becomes slot `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> CPoly {
        let n = self.n;
        let mut r = CPoly::zero(n);
        for (m, c) in &self.terms {
            let mut t = vec![0u8; 2 * n];
            for k in 0..n {
                t[perm[k]] = m[k];
                t[n + perm[k]] = m[n + k];
            }
            r.add_term(t, *c);
        }
        r
    }

    /// True when every term has equal `z` and `z̄` exponents (a function of `|z_j|²` only).
    pub fn is_reinhardt(&self) -> bool {
        let n = self.n;
        self.terms.keys().all(|m| (0..n).all(|j| m[j] == m[n + j]))
    }
}

impl fmt::Display for CPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let n = self.n;
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)", c.re, c.im)?;
            for j in 0..n {
                if m[j] > 0 {
                    write!(f, "*z{}^{}", j + 1, m[j])?;
                }
                if m[n + j] > 0 {
                    write!(f, "*conj(z{})^{}", j + 1, m[n + j])?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_modulus_square() {
        let z1 = CPoly::var(2, 0, false);
        let zb1 = CPoly::var(2, 0, true);
        let p = z1.mul(&zb1);
        assert_eq!(p.derive(0, false), zb1);
        assert!(p.is_real_valued(0.0));
        assert!(p.is_reinhardt());
    }

    #[test]
    fn jet_matches_eval() {
        let z1 = CPoly::var(2, 0, false);
        let zb2 = CPoly::var(2, 1, true);
        let p = z1.pow(3).mul(&zb2).add(&CPoly::constant(2, C64::new(0.5, 1.0)));
        let pt = [C64::new(0.2, 0.1), C64::new(-0.4, 0.3)];
        let sp = JetSpace::get(4, 4);
        let j = p.jet_at(&sp, &pt);
        assert!((j.value() - p.eval(&pt)).norm() < 1e-14);
        let d = p.derive(0, false).eval(&pt);
        assert!((j.partial(&[1, 0, 0, 0]) - d).norm() < 1e-14);
    }
}
