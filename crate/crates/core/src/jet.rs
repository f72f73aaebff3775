//! Dense truncated Taylor jets in `2n` independent variables `(w, w̄)`.
//!
//! A jet stores the Taylor coefficients of a function around a base point up to
//! a fixed total order. Products, derivatives and composition with univariate
//! functions are exact at the level of truncated series, which makes iterated
//! vector-field derivatives at a point cheap and free of finite-difference error.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;

/// Monomial bookkeeping shared by all jets of one `(nvars, order)` shape.
#[derive(Debug)]
pub struct JetSpace {
    pub nvars: usize,
    pub order: usize,
    monos: Vec<Vec<u8>>,
    degree: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// `deg_end[d]` is one past the last monomial of degree `d`.
    deg_end: Vec<usize>,
    mul: Vec<(u32, u32, u32)>,
    mul_end: Vec<usize>,
    deriv: Vec<Vec<(u32, u32, f64)>>,
    deriv_end: Vec<Vec<usize>>,
    conj_perm: Vec<u32>,
    fact: Vec<f64>,
}

fn enumerate_monos(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for d in 0..=order {
        let mut cur = vec![0u8; nvars];
        fill(&mut out, &mut cur, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, rem: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = rem as u8;
        out.push(cur.clone());
        return;
    }
    if cur.is_empty() {
        if rem == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=rem).rev() {
        cur[pos] = e as u8;
        fill(out, cur, pos + 1, rem - e);
    }
    cur[pos] = 0;
}

impl JetSpace {
    fn build(nvars: usize, order: usize) -> JetSpace {
        let monos = enumerate_monos(nvars, order);
        let degree: Vec<usize> = monos.iter().map(|m| m.iter().map(|&e| e as usize).sum()).collect();
        let index: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let mut deg_end = vec![0usize; order + 1];
        for (i, &d) in degree.iter().enumerate() {
            deg_end[d] = i + 1;
        }
        let mut mul = Vec::new();
        for (i, a) in monos.iter().enumerate() {
            for (j, b) in monos.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u32, j as u32, index[&s] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, k)| degree[k as usize]);
        let mut mul_end = vec![0usize; order + 1];
        for (t, &(_, _, k)) in mul.iter().enumerate() {
            mul_end[degree[k as usize]] = t + 1;
        }
        for d in 1..=order {
            mul_end[d] = mul_end[d].max(mul_end[d - 1]);
        }
        let mut deriv = Vec::with_capacity(nvars);
        let mut deriv_end = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut list = Vec::new();
            for (i, m) in monos.iter().enumerate() {
                if m[v] == 0 {
                    continue;
                }
                let mut t = m.clone();
                t[v] -= 1;
                list.push((i as u32, index[&t] as u32, m[v] as f64));
            }
            list.sort_by_key(|&(_, k, _)| degree[k as usize]);
            let mut ends = vec![0usize; order + 1];
            for (t, &(_, k, _)) in list.iter().enumerate() {
                ends[degree[k as usize]] = t + 1;
            }
            for d in 1..=order {
                ends[d] = ends[d].max(ends[d - 1]);
            }
            deriv.push(list);
            deriv_end.push(ends);
        }
        let half = nvars / 2;
        let conj_perm = monos
            .iter()
            .map(|m| {
                let mut t = m.clone();
                if nvars % 2 == 0 {
                    for j in 0..half {
                        t.swap(j, j + half);
                    }
                }
                index[&t] as u32
            })
            .collect();
        let fact = monos
            .iter()
            .map(|m| m.iter().map(|&e| (1..=e as u64).product::<u64>() as f64).product())
            .collect();
        JetSpace { nvars, order, monos, degree, index, deg_end, mul, mul_end, deriv, deriv_end, conj_perm, fact }
    }

    /// Shared space for the given shape; built once and cached.
    pub fn get(nvars: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, order)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monos[i]
    }

    pub fn index_of(&self, m: &[u8]) -> Option<usize> {
        self.index.get(m).copied()
    }

    fn end(&self, ord: usize) -> usize {
        self.deg_end[ord.min(self.order)]
    }
}

/// Truncated Taylor expansion; coefficients beyond `ord` are not meaningful.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    c: Vec<C64>,
    ord: usize,
}

impl Jet {
    pub fn zero(space: &Arc<JetSpace>) -> Jet {
        Jet { space: space.clone(), c: vec![C64::new(0.0, 0.0); space.len()], ord: space.order }
    }

    pub fn constant(space: &Arc<JetSpace>, v: C64) -> Jet {
        let mut j = Jet::zero(space);
        j.c[0] = v;
        j
    }

    /// `base + w_var`.
    pub fn variable(space: &Arc<JetSpace>, var: usize, base: C64) -> Jet {
        let mut j = Jet::constant(space, base);
        if space.order >= 1 {
            let mut m = vec![0u8; space.nvars];
            m[var] = 1;
            let k = space.index[&m];
            j.c[k] = C64::new(1.0, 0.0);
        }
        j
    }

    /// Jets of the coordinate functions `z_j` and `z̄_j` at `p`.
    pub fn coordinates(space: &Arc<JetSpace>, p: &[C64]) -> (Vec<Jet>, Vec<Jet>) {
        let n = p.len();
        let z = (0..n).map(|j| Jet::variable(space, j, p[j])).collect();
        let zb = (0..n).map(|j| Jet::variable(space, n + j, p[j].conj())).collect();
        (z, zb)
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.ord
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    /// Taylor coefficient of the monomial `w^m` (in jet variable order).
    pub fn coeff(&self, m: &[u8]) -> C64 {
        match self.space.index_of(m) {
            Some(i) if self.space.degree[i] <= self.ord => self.c[i],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Partial derivative `∂^m` at the base point.
    pub fn partial(&self, m: &[u8]) -> C64 {
        match self.space.index_of(m) {
            Some(i) => self.c[i] * self.space.fact[i],
            None => C64::new(0.0, 0.0),
        }
    }

    pub fn with_order(mut self, ord: usize) -> Jet {
        self.ord = self.ord.min(ord);
        let e = self.space.end(self.ord);
        for v in &mut self.c[e..] {
            *v = C64::new(0.0, 0.0);
        }
        self
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        let e = self.space.end(self.ord);
        self.c[..e].iter().all(|v| v.norm() <= tol)
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let e = self.space.end(ord);
        let mut c = vec![C64::new(0.0, 0.0); self.c.len()];
        for i in 0..e {
            c[i] = self.c[i] + o.c[i];
        }
        Jet { space: self.space.clone(), c, ord }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let e = self.space.end(ord);
        let mut c = vec![C64::new(0.0, 0.0); self.c.len()];
        for i in 0..e {
            c[i] = self.c[i] - o.c[i];
        }
        Jet { space: self.space.clone(), c, ord }
    }

    pub fn add_assign(&mut self, o: &Jet) {
        self.ord = self.ord.min(o.ord);
        let e = self.space.end(self.ord);
        for i in 0..e {
            self.c[i] += o.c[i];
        }
        for v in &mut self.c[e..] {
            *v = C64::new(0.0, 0.0);
        }
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet { space: self.space.clone(), c: self.c.iter().map(|v| v * s).collect(), ord: self.ord }
    }

    pub fn add_const(&self, s: C64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let sp = &self.space;
        let mut c = vec![C64::new(0.0, 0.0); self.c.len()];
        for &(i, j, k) in &sp.mul[..sp.mul_end[ord]] {
            let a = self.c[i as usize];
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            c[k as usize] += a * o.c[j as usize];
        }
        Jet { space: sp.clone(), c, ord }
    }

    /// Accumulates `self * o` into `acc`, truncated at `acc`'s order.
    pub fn mul_acc(&self, o: &Jet, acc: &mut Jet) {
        let ord = self.ord.min(o.ord).min(acc.ord);
        acc.ord = ord;
        let sp = &self.space;
        for &(i, j, k) in &sp.mul[..sp.mul_end[ord]] {
            let a = self.c[i as usize];
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            acc.c[k as usize] += a * o.c[j as usize];
        }
        let e = sp.end(ord);
        for v in &mut acc.c[e..] {
            *v = C64::new(0.0, 0.0);
        }
    }

    /// Derivative with respect to jet variable `var`; validity order drops by one.
    pub fn derive(&self, var: usize) -> Jet {
        let sp = &self.space;
        let ord = self.ord.saturating_sub(1);
        let mut c = vec![C64::new(0.0, 0.0); self.c.len()];
        if self.ord > 0 {
            for &(src, dst, f) in &sp.deriv[var][..sp.deriv_end[var][ord]] {
                c[dst as usize] = self.c[src as usize] * f;
            }
        }
        Jet { space: sp.clone(), c, ord }
    }

    /// Jet of the complex conjugate function (swaps `w` and `w̄`).
    pub fn conj(&self) -> Jet {
        let mut c = vec![C64::new(0.0, 0.0); self.c.len()];
        for (i, v) in self.c.iter().enumerate() {
            c[self.space.conj_perm[i] as usize] = v.conj();
        }
        Jet { space: self.space.clone(), c, ord: self.ord }
    }

    pub fn re(&self) -> Jet {
        self.add(&self.conj()).scale(C64::new(0.5, 0.0))
    }

    pub fn im(&self) -> Jet {
        self.sub(&self.conj()).scale(C64::new(0.0, -0.5))
    }

    /// `g(self)` given `derivs[k] = g^{(k)}(self(0))` for `k = 0..=order`.
    pub fn compose(&self, derivs: &[C64]) -> Jet {
        let mut u = self.clone();
        u.c[0] = C64::new(0.0, 0.0);
        let k_max = self.ord.min(derivs.len().saturating_sub(1));
        // Horner in u: Σ derivs[k]/k! u^k
        let mut fact = 1.0;
        let mut coef = Vec::with_capacity(k_max + 1);
        for (k, d) in derivs.iter().enumerate().take(k_max + 1) {
            if k > 0 {
                fact *= k as f64;
            }
            coef.push(d / fact);
        }
        let mut acc = Jet::constant(&self.space, coef[k_max]);
        acc.ord = self.ord;
        for k in (0..k_max).rev() {
            acc = acc.mul(&u);
            acc.c[0] += coef[k];
        }
        acc.ord = self.ord;
        acc
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.ord + 1])
    }

    pub fn recip(&self) -> Jet {
        let x = self.value();
        let mut d = Vec::with_capacity(self.ord + 1);
        let mut f = C64::new(1.0, 0.0);
        let inv = 1.0 / x;
        let mut p = inv;
        for k in 0..=self.ord {
            d.push(f * p);
            f *= -((k + 1) as f64);
            p *= inv;
        }
        self.compose(&d)
    }

    /// Real power `x^a` of a jet with positive real constant term.
    pub fn powf(&self, a: f64) -> Jet {
        let x = self.value().re;
        let mut d = Vec::with_capacity(self.ord + 1);
        let mut f = 1.0;
        for k in 0..=self.ord {
            d.push(C64::new(f * x.powf(a - k as f64), 0.0));
            f *= a - k as f64;
        }
        self.compose(&d)
    }

    pub fn powi(&self, e: u32) -> Jet {
        let mut acc = Jet::constant(&self.space, C64::new(1.0, 0.0));
        acc.ord = self.ord;
        let mut base = self.clone();
        let mut k = e;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Complex Hessian `∂²/∂z_j∂z̄_k` at the base point (`n = nvars/2`).
    pub fn complex_hessian(&self) -> Vec<Vec<C64>> {
        let n = self.space.nvars / 2;
        let mut h = vec![vec![C64::new(0.0, 0.0); n]; n];
        for j in 0..n {
            for k in 0..n {
                let mut m = vec![0u8; self.space.nvars];
                m[j] += 1;
                m[n + k] += 1;
                h[j][k] = self.partial(&m);
            }
        }
        h
    }

    /// First derivatives `(∂/∂z_j, ∂/∂z̄_j)` at the base point.
    pub fn gradient(&self) -> (Vec<C64>, Vec<C64>) {
        let n = self.space.nvars / 2;
        let mut dz = Vec::with_capacity(n);
        let mut dzb = Vec::with_capacity(n);
        for j in 0..n {
            let mut m = vec![0u8; self.space.nvars];
            m[j] = 1;
            dz.push(self.partial(&m));
            m[j] = 0;
            m[n + j] = 1;
            dzb.push(self.partial(&m));
        }
        (dz, dzb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn monomial_count_matches_binomial() {
        let sp = JetSpace::get(4, 3);
        assert_eq!(sp.len(), 35);
    }

    #[test]
    fn product_and_derivative() {
        let sp = JetSpace::get(2, 4);
        let (z, zb) = Jet::coordinates(&sp, &[C64::new(0.3, -0.2)]);
        let f = z[0].mul(&zb[0]).mul(&z[0]);
        // f = z² z̄, ∂f/∂z = 2 z z̄
        let d = f.derive(0);
        let p = C64::new(0.3, -0.2);
        assert!((d.value() - 2.0 * p * p.conj()).norm() < 1e-14);
        assert_eq!(d.order(), 3);
    }

    #[test]
    fn composition_matches_exp_series() {
        let sp = JetSpace::get(2, 6);
        let x = Jet::variable(&sp, 0, c(0.5));
        let e = x.exp();
        for k in 0..=6u8 {
            let expect = 0.5f64.exp() / (1..=k as u64).product::<u64>() as f64;
            assert!((e.coeff(&[k, 0]) - c(expect)).norm() < 1e-14);
        }
        let r = x.recip().mul(&x);
        assert!((r.value() - c(1.0)).norm() < 1e-14);
        assert!(r.coeffs()[1..].iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn conj_swaps_variables() {
        let sp = JetSpace::get(2, 3);
        let (z, _) = Jet::coordinates(&sp, &[C64::new(1.0, 2.0)]);
        let w = z[0].scale(C64::new(0.0, 1.0));
        let wc = w.conj();
        assert!((wc.value() - w.value().conj()).norm() < 1e-15);
        assert!((wc.coeff(&[0, 1]) - C64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn powf_inverse_square_root() {
        let sp = JetSpace::get(2, 5);
        let x = Jet::variable(&sp, 0, c(2.0));
        let r = x.powf(-0.5);
        let sq = r.mul(&r).mul(&x);
        assert!((sq.value() - c(1.0)).norm() < 1e-14);
        assert!(sq.coeffs()[1..].iter().all(|v| v.norm() < 1e-13));
    }
}
