//! Vector fields at the jet level: fast evaluation of lists at a point.

use num_complex::Complex64 as C64;

use crate::field::Field;
use crate::jet::Jet;

/// Coefficient jets of a vector field around a base point.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub holo: Option<Vec<Jet>>,
    pub anti: Option<Vec<Jet>>,
}

fn nonzero(v: &[Jet]) -> bool {
    v.iter().any(|j| !j.is_zero(0.0))
}

impl FieldJet {
    pub fn from_field(f: &Field, z: &[Jet], zb: &[Jet]) -> FieldJet {
        let conv = |cs: &[crate::expr::SmoothExpr]| -> Option<Vec<Jet>> {
            if cs.iter().all(|c| c.is_zero()) {
                return None;
            }
            Some(cs.iter().map(|c| c.eval_jets(z, zb)).collect())
        };
        FieldJet { holo: conv(&f.holo), anti: conv(&f.anti) }
    }

    pub fn from_parts(holo: Option<Vec<Jet>>, anti: Option<Vec<Jet>>) -> FieldJet {
        FieldJet { holo: holo.filter(|v| nonzero(v)), anti: anti.filter(|v| nonzero(v)) }
    }

    pub fn conj(&self) -> FieldJet {
        FieldJet {
            holo: self.anti.as_ref().map(|v| v.iter().map(|j| j.conj()).collect()),
            anti: self.holo.as_ref().map(|v| v.iter().map(|j| j.conj()).collect()),
        }
    }

    /// Constant-coefficient combination `Σ a_k X_k`.
    pub fn combination(fields: &[&FieldJet], a: &[C64]) -> FieldJet {
        let comb = |pick: &dyn Fn(&FieldJet) -> Option<&Vec<Jet>>| -> Option<Vec<Jet>> {
            let mut acc: Option<Vec<Jet>> = None;
            for (f, c) in fields.iter().zip(a) {
                if *c == C64::new(0.0, 0.0) {
                    continue;
                }
                if let Some(v) = pick(f) {
                    acc = Some(match acc {
                        None => v.iter().map(|j| j.scale(*c)).collect(),
                        Some(cur) => cur.iter().zip(v).map(|(x, y)| x.add(&y.scale(*c))).collect(),
                    });
                }
            }
            acc
        };
        FieldJet { holo: comb(&|f| f.holo.as_ref()), anti: comb(&|f| f.anti.as_ref()) }
    }

    /// `Xh`; the validity order drops by one.
    pub fn apply(&self, h: &Jet) -> Jet {
        let sp = h.space().clone();
        let n = sp.nvars / 2;
        let ord = h.order().saturating_sub(1);
        let mut acc = Jet::zero(&sp).with_order(ord);
        if let Some(v) = &self.holo {
            for j in 0..n {
                let d = h.derive(j);
                if d.is_zero(0.0) {
                    continue;
                }
                v[j].mul_acc(&d, &mut acc);
            }
        }
        if let Some(v) = &self.anti {
            for j in 0..n {
                let d = h.derive(n + j);
                if d.is_zero(0.0) {
                    continue;
                }
                v[j].mul_acc(&d, &mut acc);
            }
        }
        acc
    }

    /// Lie bracket at the jet level.
    pub fn bracket(&self, y: &FieldJet) -> FieldJet {
        let part = |xv: &Option<Vec<Jet>>, yv: &Option<Vec<Jet>>| -> Option<Vec<Jet>> {
            if xv.is_none() && yv.is_none() {
                return None;
            }
            let n = xv.as_ref().or(yv.as_ref()).map(|v| v.len()).unwrap_or(0);
            let sp = xv.as_ref().or(yv.as_ref()).expect("one side present")[0].space().clone();
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let mut t = Jet::zero(&sp);
                if let Some(yc) = yv {
                    t = self.apply(&yc[j]);
                } else {
                    let o = xv.as_ref().expect("x present")[j].order().saturating_sub(1);
                    t = t.with_order(o);
                }
                if let Some(xc) = xv {
                    t = t.sub(&y.apply(&xc[j]));
                }
                out.push(t);
            }
            Some(out)
        };
        FieldJet::from_parts(part(&self.holo, &y.holo), part(&self.anti, &y.anti))
    }

    /// `⟨∂ρ, X⟩` given the jets of `∂ρ/∂z_j`.
    pub fn pair(&self, drho: &[Jet]) -> Jet {
        let sp = drho[0].space().clone();
        match &self.holo {
            None => Jet::zero(&sp).with_order(drho[0].order()),
            Some(v) => {
                let mut acc = Jet::zero(&sp);
                for (a, d) in v.iter().zip(drho) {
                    a.mul_acc(d, &mut acc);
                }
                acc
            }
        }
    }

    /// Holomorphic coefficient values at the base point.
    pub fn holo_value(&self, n: usize) -> Vec<C64> {
        match &self.holo {
            None => vec![C64::new(0.0, 0.0); n],
            Some(v) => v.iter().map(|j| j.value()).collect(),
        }
    }

    pub fn anti_value(&self, n: usize) -> Vec<C64> {
        match &self.anti {
            None => vec![C64::new(0.0, 0.0); n],
            Some(v) => v.iter().map(|j| j.value()).collect(),
        }
    }
}

/// Applies every word of length `0..=depth` over `letters` to `root`.
///
/// The callback receives the word (outermost letter first) and the value at the base point.
pub fn apply_words<F: FnMut(&[usize], C64)>(letters: &[FieldJet], root: &Jet, depth: usize, mut f: F) {
    let mut word = Vec::with_capacity(depth);
    rec(letters, root, depth, &mut word, &mut f);
}

fn rec<F: FnMut(&[usize], C64)>(letters: &[FieldJet], h: &Jet, depth: usize, word: &mut Vec<usize>, f: &mut F) {
    // word is stored innermost-first while recursing; report outermost-first.
    let rev: Vec<usize> = word.iter().rev().copied().collect();
    f(&rev, h.value());
    if depth == 0 {
        return;
    }
    if h.is_zero(0.0) {
        // every further derivative vanishes as well
        report_zero(letters.len(), depth, word, f);
        return;
    }
    for (i, x) in letters.iter().enumerate() {
        let g = x.apply(h);
        word.push(i);
        rec(letters, &g, depth - 1, word, f);
        word.pop();
    }
}

fn report_zero<F: FnMut(&[usize], C64)>(nl: usize, depth: usize, word: &mut Vec<usize>, f: &mut F) {
    for i in 0..nl {
        word.push(i);
        let rev: Vec<usize> = word.iter().rev().copied().collect();
        f(&rev, C64::new(0.0, 0.0));
        if depth > 1 {
            report_zero(nl, depth - 1, word, f);
        }
        word.pop();
    }
}

/// Values of all lists `X^{w_1}…X^{w_{k−2}}⟨∂ρ,[X^{w_{k−1}},X^{w_k}]⟩` for `2 ≤ k ≤ m` at the base point.
pub fn list_values(letters: &[FieldJet], drho: &[Jet], m: usize) -> Vec<(Vec<usize>, C64)> {
    let mut out = Vec::new();
    if m < 2 {
        return out;
    }
    for a in 0..letters.len() {
        for b in 0..letters.len() {
            let g = letters[a].bracket(&letters[b]).pair(drho);
            apply_words(letters, &g, m - 2, |w, v| {
                let mut word = w.to_vec();
                word.push(a);
                word.push(b);
                out.push((word, v));
            });
        }
    }
    out
}

/// Inverse of a square matrix of jets by Gauss–Jordan elimination with partial pivoting on values.
pub fn jet_matrix_inverse(m: &[Vec<Jet>]) -> Option<Vec<Vec<Jet>>> {
    let n = m.len();
    let sp = m[0][0].space().clone();
    let ord = m.iter().flat_map(|r| r.iter().map(|j| j.order())).min().unwrap_or(0);
    let mut a: Vec<Vec<Jet>> = m.iter().map(|r| r.iter().map(|j| j.clone().with_order(ord)).collect()).collect();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(&sp, C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).with_order(ord))
                .collect()
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| {
            a[x][col].value().norm().partial_cmp(&a[y][col].value().norm()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[piv][col].value().norm() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let r = a[col][col].recip();
        for j in 0..n {
            a[col][j] = a[col][j].mul(&r);
            inv[col][j] = inv[col][j].mul(&r);
        }
        for row in 0..n {
            if row == col || a[row][col].is_zero(0.0) {
                continue;
            }
            let f = a[row][col].clone();
            for j in 0..n {
                let t = f.mul(&a[col][j]);
                a[row][j] = a[row][j].sub(&t);
                let t = f.mul(&inv[col][j]);
                inv[row][j] = inv[row][j].sub(&t);
            }
        }
    }
    Some(inv)
}
