//! Closed-form smooth expressions with exact derivative rules.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::cpoly::CPoly;
use crate::jet::Jet;

/// Node kinds of a [`SmoothExpr`].
#[derive(Debug)]
pub enum Node {
    Poly(CPoly),
    Exp(SmoothExpr),
    /// `order`-th derivative of `x ↦ K₀e^{−1/(x−μ²)}` (zero for `x ≤ μ²`) applied to a real argument.
    BumpPhi { mu: f64, k0: f64, order: u32, arg: SmoothExpr },
    /// `x^{−1/2}` of a positive real argument.
    RecipSqrt(SmoothExpr),
    Sum(Vec<SmoothExpr>),
    Product(Vec<SmoothExpr>),
    Scale(C64, SmoothExpr),
}

#[derive(Clone, Debug)]
pub struct SmoothExpr {
    n: usize,
    node: Arc<Node>,
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Polynomial `Q_m` with `φ^{(m)}(x) = K₀e^{−1/t}Q_m(1/t)`, `t = x − μ²`; coefficients in ascending powers.
pub fn bump_q(m: u32) -> Vec<f64> {
    let mut q = vec![1.0];
    for _ in 0..m {
        // Q_{m+1}(s) = s²(Q_m(s) − Q_m'(s))
        let mut d = vec![0.0; q.len()];
        for k in 1..q.len() {
            d[k - 1] = q[k] * k as f64;
        }
        let mut next = vec![0.0; q.len() + 2];
        for k in 0..q.len() {
            next[k + 2] = q[k] - d[k];
        }
        q = next;
    }
    q
}

/// `φ^{(m)}(x)` for `φ(x) = K₀e^{−1/(x−μ²)}` on `x > μ²`, zero otherwise.
pub fn bump_value(mu: f64, k0: f64, m: u32, x: f64) -> f64 {
    let t = x - mu * mu;
    if t <= 0.0 {
        return 0.0;
    }
    let s = 1.0 / t;
    let e = (-s).exp();
    if e == 0.0 {
        return 0.0;
    }
    let q = bump_q(m);
    let mut acc = 0.0;
    for c in q.iter().rev() {
        acc = acc * s + c;
    }
    k0 * e * acc
}

impl SmoothExpr {
    fn wrap(n: usize, node: Node) -> SmoothExpr {
        SmoothExpr { n, node: Arc::new(node) }
    }

    pub fn poly(p: CPoly) -> SmoothExpr {
        SmoothExpr::wrap(p.dim(), Node::Poly(p))
    }

    pub fn zero(n: usize) -> SmoothExpr {
        SmoothExpr::poly(CPoly::zero(n))
    }

    pub fn constant(n: usize, c: C64) -> SmoothExpr {
        SmoothExpr::poly(CPoly::constant(n, c))
    }

    pub fn exp(arg: SmoothExpr) -> SmoothExpr {
        SmoothExpr::wrap(arg.n, Node::Exp(arg))
    }

    pub fn bump(mu: f64, k0: f64, order: u32, arg: SmoothExpr) -> SmoothExpr {
        SmoothExpr::wrap(arg.n, Node::BumpPhi { mu, k0, order, arg })
    }

    pub fn recip_sqrt(arg: SmoothExpr) -> SmoothExpr {
        SmoothExpr::wrap(arg.n, Node::RecipSqrt(arg))
    }

    /// `1/g = ḡ·(gḡ)^{−1/2}·(gḡ)^{−1/2}` for a nonvanishing `g`.
    pub fn recip(g: &SmoothExpr) -> SmoothExpr {
        let gc = g.conj();
        let r = SmoothExpr::recip_sqrt(g.mul(&gc));
        SmoothExpr::product(vec![gc, r.clone(), r])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn as_poly(&self) -> Option<&CPoly> {
        match &*self.node {
            Node::Poly(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&*self.node, Node::Poly(p) if p.is_zero())
    }

    pub fn sum(children: Vec<SmoothExpr>) -> SmoothExpr {
        let n = children.first().map(|c| c.n).unwrap_or(0);
        let mut poly = CPoly::zero(n);
        let mut rest = Vec::new();
        let mut stack = children;
        while let Some(c) = stack.pop() {
            match &*c.node {
                Node::Poly(p) => poly = poly.add(p),
                Node::Sum(cs) => stack.extend(cs.iter().cloned()),
                _ => rest.push(c),
            }
        }
        rest.reverse();
        if !poly.is_zero() {
            rest.insert(0, SmoothExpr::poly(poly));
        }
        match rest.len() {
            0 => SmoothExpr::zero(n),
            1 => rest.pop().expect("one element"),
            _ => SmoothExpr::wrap(n, Node::Sum(rest)),
        }
    }

    pub fn product(children: Vec<SmoothExpr>) -> SmoothExpr {
        let n = children.first().map(|c| c.n).unwrap_or(0);
        let mut poly = CPoly::one(n);
        let mut scale = C64::new(1.0, 0.0);
        let mut rest = Vec::new();
        let mut stack = children;
        while let Some(c) = stack.pop() {
            match &*c.node {
                Node::Poly(p) => {
                    if p.is_zero() {
                        return SmoothExpr::zero(n);
                    }
                    poly = poly.mul(p)
                }
                Node::Product(cs) => stack.extend(cs.iter().cloned()),
                Node::Scale(s, inner) => {
                    scale *= s;
                    stack.push(inner.clone());
                }
                _ => rest.push(c),
            }
        }
        rest.reverse();
        let poly = poly.scale(scale);
        if poly.is_zero() {
            return SmoothExpr::zero(n);
        }
        if rest.is_empty() {
            return SmoothExpr::poly(poly);
        }
        let unit = CPoly::one(n);
        if poly == unit {
            if rest.len() == 1 {
                return rest.pop().expect("one element");
            }
            return SmoothExpr::wrap(n, Node::Product(rest));
        }
        if poly.num_terms() == 1 && poly.coeff(&vec![0; 2 * n]) != ZERO {
            let s = poly.coeff(&vec![0; 2 * n]);
            let inner = if rest.len() == 1 { rest.pop().expect("one") } else { SmoothExpr::wrap(n, Node::Product(rest)) };
            return SmoothExpr::wrap(n, Node::Scale(s, inner));
        }
        rest.insert(0, SmoothExpr::poly(poly));
        SmoothExpr::wrap(n, Node::Product(rest))
    }

    pub fn scale(&self, s: C64) -> SmoothExpr {
        if s == ZERO {
            return SmoothExpr::zero(self.n);
        }
        if s == C64::new(1.0, 0.0) {
            return self.clone();
        }
        match &*self.node {
            Node::Poly(p) => SmoothExpr::poly(p.scale(s)),
            Node::Scale(t, inner) => inner.scale(s * t),
            _ => SmoothExpr::wrap(self.n, Node::Scale(s, self.clone())),
        }
    }

    pub fn add(&self, o: &SmoothExpr) -> SmoothExpr {
        SmoothExpr::sum(vec![self.clone(), o.clone()])
    }

    pub fn sub(&self, o: &SmoothExpr) -> SmoothExpr {
        SmoothExpr::sum(vec![self.clone(), o.scale(C64::new(-1.0, 0.0))])
    }

    pub fn mul(&self, o: &SmoothExpr) -> SmoothExpr {
        SmoothExpr::product(vec![self.clone(), o.clone()])
    }

    /// Exact partial derivative in `z_j` (or `z̄_j` when `conj`).
    pub fn derive(&self, j: usize, conj: bool) -> SmoothExpr {
        match &*self.node {
            Node::Poly(p) => SmoothExpr::poly(p.derive(j, conj)),
            Node::Exp(a) => SmoothExpr::product(vec![self.clone(), a.derive(j, conj)]),
            Node::BumpPhi { mu, k0, order, arg } => SmoothExpr::product(vec![
                SmoothExpr::bump(*mu, *k0, order + 1, arg.clone()),
                arg.derive(j, conj),
            ]),
            Node::RecipSqrt(a) => SmoothExpr::product(vec![
                self.clone(),
                self.clone(),
                self.clone(),
                a.derive(j, conj),
            ])
            .scale(C64::new(-0.5, 0.0)),
            Node::Sum(cs) => SmoothExpr::sum(cs.iter().map(|c| c.derive(j, conj)).collect()),
            Node::Product(cs) => {
                let mut terms = Vec::with_capacity(cs.len());
                for i in 0..cs.len() {
                    let d = cs[i].derive(j, conj);
                    if d.is_zero() {
                        continue;
                    }
                    let mut f: Vec<SmoothExpr> = cs.clone();
                    f[i] = d;
                    terms.push(SmoothExpr::product(f));
                }
                SmoothExpr::sum(if terms.is_empty() { vec![SmoothExpr::zero(self.n)] } else { terms })
            }
            Node::Scale(s, a) => a.derive(j, conj).scale(*s),
        }
    }

    /// Expression of the complex-conjugate function (real arguments of bump and
    /// reciprocal-square-root nodes are conjugation-invariant).
    pub fn conj(&self) -> SmoothExpr {
        match &*self.node {
            Node::Poly(p) => SmoothExpr::poly(p.conj()),
            Node::Exp(a) => SmoothExpr::exp(a.conj()),
            Node::BumpPhi { mu, k0, order, arg } => SmoothExpr::bump(*mu, *k0, *order, arg.conj()),
            Node::RecipSqrt(a) => SmoothExpr::recip_sqrt(a.conj()),
            Node::Sum(cs) => SmoothExpr::sum(cs.iter().map(|c| c.conj()).collect()),
            Node::Product(cs) => SmoothExpr::product(cs.iter().map(|c| c.conj()).collect()),
            Node::Scale(s, a) => a.conj().scale(s.conj()),
        }
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        match &*self.node {
            Node::Poly(p) => p.eval(z),
            Node::Exp(a) => a.eval(z).exp(),
            Node::BumpPhi { mu, k0, order, arg } => {
                C64::new(bump_value(*mu, *k0, *order, arg.eval(z).re), 0.0)
            }
            Node::RecipSqrt(a) => C64::new(a.eval(z).re.powf(-0.5), 0.0),
            Node::Sum(cs) => cs.iter().map(|c| c.eval(z)).sum(),
            Node::Product(cs) => cs.iter().map(|c| c.eval(z)).product(),
            Node::Scale(s, a) => s * a.eval(z),
        }
    }

    /// Taylor jet with coordinates replaced by the given jets.
    pub fn eval_jets(&self, z: &[Jet], zb: &[Jet]) -> Jet {
        match &*self.node {
            Node::Poly(p) => p.eval_jets(z, zb),
            Node::Exp(a) => a.eval_jets(z, zb).exp(),
            Node::BumpPhi { mu, k0, order, arg } => {
                let x = a_re(arg.eval_jets(z, zb));
                let x0 = x.value().re;
                let d: Vec<C64> = (0..=x.order() as u32)
                    .map(|k| C64::new(bump_value(*mu, *k0, order + k, x0), 0.0))
                    .collect();
                x.compose(&d)
            }
            Node::RecipSqrt(a) => a_re(a.eval_jets(z, zb)).powf(-0.5),
            Node::Sum(cs) => {
                let mut acc = cs[0].eval_jets(z, zb);
                for c in &cs[1..] {
                    acc.add_assign(&c.eval_jets(z, zb));
                }
                acc
            }
            Node::Product(cs) => {
                let mut acc = cs[0].eval_jets(z, zb);
                for c in &cs[1..] {
                    acc = acc.mul(&c.eval_jets(z, zb));
                }
                acc
            }
            Node::Scale(s, a) => a.eval_jets(z, zb).scale(*s),
        }
    }

    /// Taylor jet at the point `p`.
    pub fn jet_at(&self, space: &std::sync::Arc<crate::jet::JetSpace>, p: &[C64]) -> Jet {
        let (z, zb) = Jet::coordinates(space, p);
        self.eval_jets(&z, &zb)
    }

    /// Number of nodes in the tree (shared subtrees counted once per occurrence).
    pub fn size(&self) -> usize {
        match &*self.node {
            Node::Poly(_) => 1,
            Node::Exp(a) | Node::RecipSqrt(a) | Node::Scale(_, a) => 1 + a.size(),
            Node::BumpPhi { arg, .. } => 1 + arg.size(),
            Node::Sum(cs) | Node::Product(cs) => 1 + cs.iter().map(|c| c.size()).sum::<usize>(),
        }
    }
}

/// Symmetrizes a jet of a real-valued function (removes round-off imaginary parts).
fn a_re(j: Jet) -> Jet {
    j.re()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modsq(n: usize, j: usize) -> CPoly {
        CPoly::var(n, j, false).mul(&CPoly::var(n, j, true))
    }

    #[test]
    fn product_rule() {
        let e = SmoothExpr::poly(modsq(1, 0));
        let d = e.derive(0, false);
        assert_eq!(d.as_poly().cloned(), Some(CPoly::var(1, 0, true)));
    }

    #[test]
    fn bump_is_flat_at_junction() {
        let x = SmoothExpr::poly(modsq(1, 0));
        let b = SmoothExpr::bump(0.5, 1.0, 0, x);
        let mut e = b.clone();
        for _ in 0..6 {
            e = e.derive(0, false);
            let v = e.eval(&[C64::new(0.5, 0.0)]);
            assert_eq!(v, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn bump_closed_form_first_derivative() {
        let (mu, k0, x): (f64, f64, f64) = (0.3, 2.0, 0.2);
        let t = x - mu * mu;
        let expect = k0 * (-1.0 / t).exp() / (t * t);
        assert!((bump_value(mu, k0, 1, x) - expect).abs() < 1e-14 * expect.abs());
    }

    #[test]
    fn recip_sqrt_chain_rule_matches_jet() {
        let g = SmoothExpr::poly(modsq(2, 0).add(&CPoly::constant(2, C64::new(0.25, 0.0))));
        let r = SmoothExpr::recip_sqrt(g);
        let p = [C64::new(0.3, -0.1), C64::new(0.2, 0.4)];
        let sp = crate::jet::JetSpace::get(4, 3);
        let j = r.jet_at(&sp, &p);
        let d = r.derive(0, true).eval(&p);
        assert!((j.partial(&[0, 0, 1, 0]) - d).norm() < 1e-13);
    }
}
