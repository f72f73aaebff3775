//! Weights `F_M(L,p,δ)`, mixed weights, and extremality certificates.
//!
//! List values at a point do not depend on `δ`. [`FrameLists`] evaluates every list over the
//! tangent letters of a frame once; the weight of any constant combination `Σ aᵢLᵢ` is then a
//! multilinear contraction of those values.

use std::fmt;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domains::{Frame, FrameJets, ModelDomain, Point};
use crate::error::{FtlError, Result};
use crate::expr::SmoothExpr;
use crate::field::{list_apply_fields, Field};
use crate::fit::{loglog_fit, LineFit};
use crate::jet::{Jet, JetSpace};
use crate::jetfield::{apply_words, jet_matrix_inverse, list_values, FieldJet};
use crate::list::{Letter, ListSpec};

/// Largest supported list length.
pub const MAX_M: usize = 8;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(FtlError::ListTooShort(m));
    }
    if m > MAX_M {
        return Err(FtlError::TypeBound(m));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(FtlError::Invalid(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// A constant combination `Σ aᵢLᵢ + aₙN` of frame fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub tangent: Vec<C64>,
    pub normal: C64,
}

impl Combination {
    pub fn tangent(a: Vec<C64>) -> Combination {
        Combination { tangent: a, normal: zero() }
    }

    /// The `i`-th frame field.
    pub fn slot(s: usize, i: usize) -> Combination {
        let mut a = vec![zero(); s];
        a[i] = C64::new(1.0, 0.0);
        Combination::tangent(a)
    }

    /// The normal field `N`.
    pub fn normal(s: usize) -> Combination {
        Combination { tangent: vec![zero(); s], normal: C64::new(1.0, 0.0) }
    }

    pub fn scale(&self, c: C64) -> Combination {
        Combination { tangent: self.tangent.iter().map(|a| a * c).collect(), normal: self.normal * c }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightTerm {
    /// Word over the direction itself: slot 0 stands for `L`, `conj` for `L̄`.
    pub list: ListSpec,
    pub abs: f64,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub value: f64,
    pub terms: Vec<WeightTerm>,
    /// List with the largest contribution; `None` when every list vanishes.
    pub dominant: Option<ListSpec>,
    /// `|aₙ|²δ⁻²` from a normal component.
    pub normal_part: f64,
    pub p: Point,
    pub delta: f64,
    pub m: usize,
}

/// Values `𝓛(∂ρ)(p)` of all lists of one direction, independent of `δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionLists {
    pub values: Vec<(ListSpec, C64)>,
    pub normal: C64,
    pub p: Point,
    pub m: usize,
}

impl DirectionLists {
    pub fn report(&self, delta: f64) -> WeightReport {
        let mut value = 0.0;
        let mut best: Option<(f64, usize)> = None;
        let terms: Vec<WeightTerm> = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, (list, v))| {
                let abs = v.norm();
                let contribution = if abs == 0.0 { 0.0 } else { (abs / delta).powf(2.0 / list.len() as f64) };
                value += contribution;
                if contribution > 0.0 && best.map_or(true, |(b, _)| contribution > b) {
                    best = Some((contribution, idx));
                }
                WeightTerm { list: list.clone(), abs, contribution }
            })
            .collect();
        let normal_part = if self.normal == zero() { 0.0 } else { (self.normal.norm() / delta).powi(2) };
        WeightReport {
            value: value + normal_part,
            dominant: best.map(|(_, i)| terms[i].list.clone()),
            terms,
            normal_part,
            p: self.p.clone(),
            delta,
            m: self.m,
        }
    }

    pub fn weight(&self, delta: f64) -> f64 {
        let t: f64 = self
            .values
            .iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|(l, v)| (v.norm() / delta).powf(2.0 / l.len() as f64))
            .sum();
        if self.normal == zero() {
            t
        } else {
            t + (self.normal.norm() / delta).powi(2)
        }
    }
}

/// All list values over the tangent letters of a frame at a point.
///
/// Letter index `2i + c` stands for `Lᵢ` (`c = 0`) or `L̄ᵢ` (`c = 1`). For length `k` the values are
/// stored row-major with the outermost letter most significant.
#[derive(Clone, Debug)]
pub struct FrameLists {
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub p: Point,
    by_len: Vec<Vec<C64>>,
}

impl FrameLists {
    pub fn compute(frame: &Frame, p: &[C64], m: usize) -> Result<FrameLists> {
        check_m(m)?;
        let fj = frame.jets(p, m);
        Ok(FrameLists::from_jets(&fj, m))
    }

    pub fn from_jets(fj: &FrameJets, m: usize) -> FrameLists {
        let s = fj.tangents.len();
        let base = 2 * s;
        let letters = fj.tangent_letters();
        let mut by_len: Vec<Vec<C64>> = (0..=m).map(|k| if k < 2 { Vec::new() } else { vec![zero(); base.pow(k as u32)] }).collect();
        for (word, v) in list_values(&letters, &fj.drho, m) {
            let idx = word.iter().fold(0usize, |acc, &w| acc * base + w);
            by_len[word.len()][idx] = v;
        }
        FrameLists { n: fj.n, s, m, p: fj.point.clone(), by_len }
    }

    /// Value of a word of letter indices.
    pub fn value(&self, word: &[usize]) -> C64 {
        let base = 2 * self.s;
        let idx = word.iter().fold(0usize, |acc, &w| acc * base + w);
        self.by_len[word.len()][idx]
    }

    /// Value of a list over frame slots (tangent slots only).
    pub fn value_of(&self, list: &ListSpec) -> C64 {
        let w: Vec<usize> = list.word.iter().map(|l| 2 * l.slot + l.conj as usize).collect();
        self.value(&w)
    }

    /// Lists of the direction `Σ aᵢLᵢ (+ aₙN)`, by contraction of the stored tensors.
    pub fn direction(&self, c: &Combination) -> DirectionLists {
        let a = &c.tangent;
        let base = 2 * self.s;
        let mut values = Vec::new();
        for k in 2..=self.m {
            let mut cur: Vec<(Vec<Letter>, Vec<C64>)> = vec![(Vec::new(), self.by_len[k].clone())];
            for pos in 0..k {
                let stride = base.pow((k - pos - 1) as u32);
                let mut next = Vec::with_capacity(cur.len() * 2);
                for (pat, t) in &cur {
                    for conj in [false, true] {
                        let mut out = vec![zero(); stride];
                        for (i, ai) in a.iter().enumerate() {
                            let coef = if conj { ai.conj() } else { *ai };
                            if coef == zero() {
                                continue;
                            }
                            let off = (2 * i + conj as usize) * stride;
                            for (r, o) in out.iter_mut().enumerate() {
                                *o += coef * t[off + r];
                            }
                        }
                        let mut np = pat.clone();
                        np.push(Letter::new(0, conj));
                        next.push((np, out));
                    }
                }
                cur = next;
            }
            for (pat, t) in cur {
                values.push((ListSpec::new(pat), t[0]));
            }
        }
        DirectionLists { values, normal: c.normal, p: self.p.clone(), m: self.m }
    }

    pub fn weight(&self, c: &Combination, delta: f64) -> WeightReport {
        self.direction(c).report(delta)
    }

    /// `Fᵢ` for every tangent slot followed by `F(N) = δ⁻²`.
    pub fn slot_weights(&self, delta: f64) -> Vec<f64> {
        let mut w: Vec<f64> = (0..self.s).map(|i| self.direction(&Combination::slot(self.s, i)).weight(delta)).collect();
        w.push(delta.powi(-2));
        w
    }
}

/// `F_M(L,p,δ)` for a constant combination of frame fields.
pub fn weight(l: &Combination, frame: &Frame, p: &[C64], delta: f64, m: usize) -> Result<WeightReport> {
    check_delta(delta)?;
    if l.tangent.len() != frame.tangents.len() {
        return Err(FtlError::Dimension { expected: frame.tangents.len(), found: l.tangent.len() });
    }
    Ok(FrameLists::compute(frame, p, m)?.weight(l, delta))
}

/// Lists of an arbitrary `(1,0)` field, evaluated through its own jets (independent of any frame).
pub fn field_lists(l: &Field, rho: &SmoothExpr, p: &[C64], m: usize) -> Result<DirectionLists> {
    check_m(m)?;
    let n = rho.dim();
    let space = JetSpace::get(2 * n, m);
    let (z, zb) = Jet::coordinates(&space, p);
    let lj = FieldJet::from_field(l, &z, &zb);
    let r = rho.eval_jets(&z, &zb);
    let drho: Vec<Jet> = (0..n).map(|j| r.derive(j)).collect();
    let letters = [lj.clone(), lj.conj()];
    let mut values: Vec<(ListSpec, C64)> = list_values(&letters, &drho, m)
        .into_iter()
        .map(|(w, v)| (ListSpec::new(w.iter().map(|&c| Letter::new(0, c == 1)).collect()), v))
        .collect();
    values.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| conj_key(&a.0).cmp(&conj_key(&b.0))));
    Ok(DirectionLists { values, normal: zero(), p: p.to_vec(), m })
}

fn conj_key(l: &ListSpec) -> Vec<bool> {
    l.word.iter().map(|x| x.conj).collect()
}

/// Lists of a field through fully symbolic differentiation (slow, for cross-checks).
pub fn field_lists_symbolic(l: &Field, rho: &SmoothExpr, p: &[C64], m: usize) -> Result<DirectionLists> {
    check_m(m)?;
    let lb = l.conj();
    let mut values = Vec::new();
    for k in 2..=m {
        for spec in ListSpec::enumerate_len(&[0], k) {
            let word: Vec<Field> = spec.word.iter().map(|x| if x.conj { lb.clone() } else { l.clone() }).collect();
            values.push((spec, list_apply_fields(&word, rho)?.eval(p)));
        }
    }
    Ok(DirectionLists { values, normal: zero(), p: p.to_vec(), m })
}

/// `F^{𝓛/2} = ∏ F_{slot}^{1/2}` over the letters of a list; `weights` has one entry per slot.
pub fn mixed_weight(spec: &ListSpec, weights: &[f64]) -> Result<f64> {
    let mut v = 1.0;
    for l in &spec.word {
        let w = weights.get(l.slot).ok_or(FtlError::Dimension { expected: l.slot + 1, found: weights.len() })?;
        v *= w.sqrt();
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertKind {
    EB1,
    EB2,
    Balpha,
}

/// Empirical extremality constant. Sampling only gives a lower bound for the true constant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtremalityCertificate {
    pub kind: CertKind,
    pub estimate: f64,
    pub witness: String,
    pub direction: Option<Vec<C64>>,
    pub sample_size: usize,
    pub p: Point,
    pub delta: f64,
    /// Some slot had zero weight and was excluded.
    pub degenerate: bool,
}

/// Structured EB₁ directions: basis vectors and normalized pairwise mixes.
pub fn structured_directions(s: usize) -> Vec<Vec<C64>> {
    let mut out = Vec::new();
    let e = |i: usize| -> Vec<C64> {
        let mut v = vec![zero(); s];
        v[i] = C64::new(1.0, 0.0);
        v
    };
    for i in 0..s {
        out.push(e(i));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..s {
        for j in i + 1..s {
            for ph in [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                let mut v = vec![zero(); s];
                v[i] = C64::new(h, 0.0);
                v[j] = ph * h;
                out.push(v);
            }
        }
    }
    out
}

/// Seeded uniform samples on the unit sphere of `Cˢ`.
pub fn sphere_directions(s: usize, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v: Vec<C64> = (0..s)
                .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / nrm).collect()
        })
        .collect()
}

fn fmt_dir(a: &[C64]) -> String {
    let parts: Vec<String> = a.iter().map(|x| format!("{:.4}{:+.4}i", x.re, x.im)).collect();
    format!("[{}]", parts.join(", "))
}

/// EB₁ ratio sweep on precomputed lists.
pub fn eb1_from_lists(fl: &FrameLists, delta: f64, samples: usize, seed: u64) -> ExtremalityCertificate {
    let s = fl.s;
    let fi: Vec<f64> = fl.slot_weights(delta)[..s].to_vec();
    let zero_slots: Vec<bool> = fi.iter().map(|&f| f == 0.0).collect();
    let mut dirs = structured_directions(s);
    dirs.extend(sphere_directions(s, samples, seed));
    let mut best = (1.0f64, None::<Vec<C64>>);
    let mut degenerate = false;
    for a in &dirs {
        if a.iter().zip(&zero_slots).any(|(x, &z)| z && x.norm() > 0.0) {
            degenerate = true;
            continue;
        }
        let num = fl.direction(&Combination::tangent(a.clone())).weight(delta);
        let den: f64 = a.iter().zip(&fi).map(|(x, f)| x.norm_sqr() * f).sum();
        if den <= 0.0 {
            continue;
        }
        let r = num / den;
        let k = if r > 0.0 { r.max(1.0 / r) } else { f64::INFINITY };
        if k > best.0 || best.1.is_none() {
            best = (k.max(best.0), Some(a.clone()));
        }
    }
    let direction = best.1;
    ExtremalityCertificate {
        kind: CertKind::EB1,
        estimate: best.0,
        witness: direction.as_ref().map(|d| fmt_dir(d)).unwrap_or_default(),
        direction,
        sample_size: dirs.len(),
        p: fl.p.clone(),
        delta,
        degenerate,
    }
}

pub fn check_eb1(frame: &Frame, p: &[C64], delta: f64, m: usize, samples: usize, seed: u64) -> Result<ExtremalityCertificate> {
    check_delta(delta)?;
    let fl = FrameLists::compute(frame, p, m)?;
    Ok(eb1_from_lists(&fl, delta, samples, seed))
}

/// Jets of the bracket coefficients `a^{k̂}_{îĵ}` of a frame.
///
/// Hat indices `0..2s` are tangent letters (`2i + conj`); target indices `0..2n` are
/// `L₁..L_{n−1}, N, L̄₁..L̄_{n−1}, N̄`.
pub struct BracketCoefficients {
    pub s: usize,
    pub n: usize,
    /// `coef[(i, j)][k]` for `i < j`.
    pub coef: Vec<((usize, usize), Vec<Jet>)>,
    pub letters: Vec<FieldJet>,
}

pub fn bracket_coefficients(fj: &FrameJets) -> Result<BracketCoefficients> {
    let n = fj.n;
    let s = fj.tangents.len();
    let mut v: Vec<Vec<Jet>> = vec![Vec::with_capacity(n); n];
    let cols: Vec<&FieldJet> = fj.tangents.iter().chain(std::iter::once(&fj.normal)).collect();
    for (r, row) in v.iter_mut().enumerate() {
        for c in &cols {
            let h = c.holo.as_ref().ok_or_else(|| FtlError::SingularFrame(0.0))?;
            row.push(h[r].clone());
        }
    }
    let w = jet_matrix_inverse(&v).ok_or(FtlError::SingularFrame(0.0))?;
    let wb: Vec<Vec<Jet>> = w.iter().map(|r| r.iter().map(|j| j.conj()).collect()).collect();
    let tl = fj.tangent_letters();
    let mut coef = Vec::new();
    for i in 0..2 * s {
        for j in i + 1..2 * s {
            let b = tl[i].bracket(&tl[j]);
            let solve = |mat: &Vec<Vec<Jet>>, rhs: &Option<Vec<Jet>>| -> Vec<Jet> {
                let sp = mat[0][0].space().clone();
                match rhs {
                    None => (0..n).map(|_| Jet::zero(&sp)).collect(),
                    Some(x) => (0..n)
                        .map(|k| {
                            let mut acc = Jet::zero(&sp);
                            for (mk, xr) in mat[k].iter().zip(x) {
                                mk.mul_acc(xr, &mut acc);
                            }
                            acc
                        })
                        .collect(),
                }
            };
            let mut c = solve(&w, &b.holo);
            c.extend(solve(&wb, &b.anti));
            coef.push(((i, j), c));
        }
    }
    let mut letters = tl;
    letters.push(fj.normal.clone());
    letters.push(fj.normal.conj());
    Ok(BracketCoefficients { s, n, coef, letters })
}

/// EB₂ with derivative words over `L, L̄, N, N̄` of length `0..=max_len`.
pub fn check_eb2_len(frame: &Frame, p: &[C64], delta: f64, m: usize, max_len: usize) -> Result<ExtremalityCertificate> {
    check_delta(delta)?;
    check_m(m)?;
    let fl = FrameLists::compute(frame, p, m)?;
    let fw = fl.slot_weights(delta);
    let fj = frame.jets(p, max_len + 1);
    let bc = bracket_coefficients(&fj)?;
    let s = bc.s;
    let n = bc.n;
    // weight of letter index in `bc.letters` (tangent hats then N, N̄)
    let letter_w = |l: usize| if l < 2 * s { fw[l / 2] } else { fw[n - 1] };
    let target_w = |k: usize| fw[k % n];
    let mut best = 0.0f64;
    let mut witness = String::new();
    let mut degenerate = false;
    for ((i, j), cs) in &bc.coef {
        let (wi, wj) = (fw[i / 2], fw[j / 2]);
        if wi == 0.0 || wj == 0.0 {
            degenerate = true;
            continue;
        }
        for (k, cj) in cs.iter().enumerate() {
            let wk = target_w(k);
            apply_words(&bc.letters, cj, max_len, |word, v| {
                if v.norm() == 0.0 {
                    return;
                }
                let fl_w: f64 = word.iter().map(|&l| letter_w(l).sqrt()).product();
                let r = wk.sqrt() * v.norm() / (fl_w * wi.sqrt() * wj.sqrt());
                if r > best {
                    best = r;
                    witness = format!("i={i} j={j} k={k} word={word:?}");
                }
            });
        }
    }
    Ok(ExtremalityCertificate {
        kind: CertKind::EB2,
        estimate: best,
        witness,
        direction: None,
        sample_size: bc.coef.len() * 2 * n,
        p: p.to_vec(),
        delta,
        degenerate,
    })
}

/// EB₂ with derivative words up to length `M − 2`.
pub fn check_eb2(frame: &Frame, p: &[C64], delta: f64, m: usize) -> Result<ExtremalityCertificate> {
    check_eb2_len(frame, p, delta, m, m.saturating_sub(2))
}

/// `B(α)` estimate from precomputed lists.
pub fn balpha_from_lists(fl: &FrameLists, delta: f64) -> ExtremalityCertificate {
    let s = fl.s;
    let fw = fl.slot_weights(delta);
    let mut best = 0.0f64;
    let mut witness = String::new();
    let mut degenerate = false;
    for k in 2..=fl.m {
        let base = 2 * s;
        let total = base.pow(k as u32);
        for idx in 0..total {
            let v = fl.by_len[k][idx];
            if v.norm() == 0.0 {
                continue;
            }
            let mut word = vec![0usize; k];
            let mut x = idx;
            for w in word.iter_mut().rev() {
                *w = x % base;
                x /= base;
            }
            let (a, b) = (word[k - 2], word[k - 1]);
            // 𝓛c_ij = 𝓛⟨∂ρ,[Lᵢ,L̄ⱼ]⟩ with i ≠ j
            if a % 2 != 0 || b % 2 != 1 || a / 2 == b / 2 {
                continue;
            }
            let (wi, wj) = (fw[a / 2], fw[b / 2]);
            if wi == 0.0 || wj == 0.0 {
                degenerate = true;
                continue;
            }
            let fl_w: f64 = word[..k - 2].iter().map(|&l| fw[l / 2].sqrt()).product();
            let r = v.norm() / (delta * fl_w * wi.sqrt() * wj.sqrt());
            if r > best {
                best = r;
                witness = format!("word={word:?}");
            }
        }
    }
    ExtremalityCertificate {
        kind: CertKind::Balpha,
        estimate: best,
        witness,
        direction: None,
        sample_size: 0,
        p: fl.p.clone(),
        delta,
        degenerate,
    }
}

pub fn check_balpha(frame: &Frame, p: &[C64], delta: f64, m: usize) -> Result<ExtremalityCertificate> {
    check_delta(delta)?;
    Ok(balpha_from_lists(&FrameLists::compute(frame, p, m)?, delta))
}

/// Reorders by decreasing weight and orthonormalizes at `p` by decreasing induction.
pub fn orthonormalize(frame: &Frame, p: &[C64], delta: f64, m: usize) -> Result<Frame> {
    let fl = FrameLists::compute(frame, p, m)?;
    let fw = fl.slot_weights(delta);
    let s = fl.s;
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| fw[b].partial_cmp(&fw[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let vecs: Vec<Vec<C64>> = order.iter().map(|&i| frame.tangents[i].eval(p).0).collect();
    // coefficient rows over the original slots
    let mut rows: Vec<Vec<C64>> = vec![Vec::new(); s];
    let mut done: Vec<(Vec<C64>, Vec<C64>)> = Vec::new();
    for pos in (0..s).rev() {
        let mut v = vecs[pos].clone();
        let mut c = vec![zero(); s];
        c[order[pos]] = C64::new(1.0, 0.0);
        for (u, cu) in &done {
            let proj: C64 = v.iter().zip(u).map(|(x, y)| x * y.conj()).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
            for (x, y) in c.iter_mut().zip(cu) {
                *x -= proj * y;
            }
        }
        let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-14 {
            return Err(FtlError::SingularFrame(nrm));
        }
        let v: Vec<C64> = v.into_iter().map(|x| x / nrm).collect();
        let c: Vec<C64> = c.into_iter().map(|x| x / nrm).collect();
        rows[pos] = c.clone();
        done.push((v, c));
    }
    let mut out = frame.recombine(&rows, frame.provenance);
    out.eigenvalues = None;
    Ok(out)
}

/// `Σ_k [Re((LᵢL̄ᵢ)^k cᵢᵢ)(p)/δ]^{2/(2k+2)}` over positive terms with `2k + 2 ≤ M`, per slot.
pub fn weight_lower_bound_diag_lists(fl: &FrameLists, delta: f64) -> Vec<f64> {
    (0..fl.s)
        .map(|i| {
            let mut total = 0.0;
            let mut k = 0;
            while 2 * k + 2 <= fl.m {
                let word: Vec<usize> = (0..k + 1).flat_map(|_| [2 * i, 2 * i + 1]).collect();
                let v = fl.value(&word).re;
                if v > 0.0 {
                    total += (v / delta).powf(2.0 / (2 * k + 2) as f64);
                }
                k += 1;
            }
            total
        })
        .collect()
}

pub fn weight_lower_bound_diag(frame: &Frame, p: &[C64], delta: f64, m: usize) -> Result<Vec<f64>> {
    check_delta(delta)?;
    Ok(weight_lower_bound_diag_lists(&FrameLists::compute(frame, p, m)?, delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NotSeparable,
    NoObstructionFound,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::NotSeparable => write!(f, "not separable"),
            Verdict::NoObstructionFound => write!(f, "no obstruction found"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationRow {
    pub delta: f64,
    pub f_first: f64,
    pub f_second: f64,
    pub f_sum: f64,
    pub s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationReport {
    pub domain: String,
    pub k: f64,
    /// Constant `C` in the threshold `C·K³`.
    pub c: f64,
    pub threshold: f64,
    pub rows: Vec<SeparationRow>,
    /// Slope of `s` on the part of the grid inside `[1e−6, 1e−2]` (whole grid if too few points).
    pub slope: Option<LineFit>,
    /// Largest grid `δ` with `s(δ) > C·K³`.
    pub exceeded_at: Option<f64>,
    /// Depth where the fitted tail of `s` reaches the threshold.
    pub delta0_extrapolated: Option<f64>,
    pub verdict: Verdict,
}

/// Threshold constant from `F(L+L′) ≤ 2(F(L)+F(L′))` and EB₁ applied twice.
pub const SEPARATION_C: f64 = 2.0;

/// Two-direction obstruction statistic `s(δ) = F(L₁+L₂)/max(F(L₁),F(L₂))` on a grid.
pub fn separation_certificate(d: &ModelDomain, p: &[C64], delta_grid: &[f64], k: f64) -> Result<SeparationReport> {
    if d.n != 3 {
        return Err(FtlError::Dimension { expected: 3, found: d.n });
    }
    for &dl in delta_grid {
        check_delta(dl)?;
    }
    let frame = d.tangent_frame();
    let fl = FrameLists::compute(&frame, p, d.m)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let l1 = fl.direction(&Combination::slot(2, 0));
    let l2 = fl.direction(&Combination::slot(2, 1));
    let sum = fl.direction(&Combination::tangent(vec![C64::new(h, 0.0), C64::new(h, 0.0)]));
    let rows: Vec<SeparationRow> = delta_grid
        .iter()
        .map(|&dl| {
            let (a, b, c) = (l1.weight(dl), l2.weight(dl), sum.weight(dl));
            let mx = a.max(b);
            SeparationRow { delta: dl, f_first: a, f_second: b, f_sum: c, s: if mx > 0.0 { c / mx } else { f64::INFINITY } }
        })
        .collect();
    let threshold = SEPARATION_C * k.powi(3);
    let exceeded_at = rows.iter().filter(|r| r.s > threshold).map(|r| r.delta).fold(None, |acc: Option<f64>, x| {
        Some(acc.map_or(x, |a| a.max(x)))
    });
    let window: Vec<&SeparationRow> = rows.iter().filter(|r| r.delta >= 1e-6 * (1.0 - 1e-9) && r.delta <= 1e-2 * (1.0 + 1e-9)).collect();
    let pick: Vec<&SeparationRow> = if window.len() >= 3 { window } else { rows.iter().collect() };
    let xs: Vec<f64> = pick.iter().map(|r| r.delta).collect();
    let ys: Vec<f64> = pick.iter().map(|r| r.s).collect();
    let slope = loglog_fit(&xs, &ys);
    // extrapolate with the smallest-δ part of the grid
    let mut sorted: Vec<&SeparationRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap_or(std::cmp::Ordering::Equal));
    let tail: Vec<&SeparationRow> = sorted.iter().take(5.min(sorted.len())).copied().collect();
    let tail_fit = loglog_fit(&tail.iter().map(|r| r.delta).collect::<Vec<_>>(), &tail.iter().map(|r| r.s).collect::<Vec<_>>());
    let delta0_extrapolated = tail_fit.and_then(|f| {
        if f.slope < -1e-6 {
            Some(((threshold.ln() - f.intercept) / f.slope).exp())
        } else {
            None
        }
    });
    Ok(SeparationReport {
        domain: d.name.clone(),
        k,
        c: SEPARATION_C,
        threshold,
        rows,
        slope,
        exceeded_at,
        delta0_extrapolated,
        verdict: if exceeded_at.is_some() { Verdict::NotSeparable } else { Verdict::NoObstructionFound },
    })
}

/// Both sides of the bracket identity relating `Lⱼcᵢₖ` and `Lᵢcⱼₖ` at a point.
///
/// With `c(X,Y) = Σ ρ_{a b̄} Xᵃ Ȳᵇ` and bracket coefficients `a`:
/// `Lⱼcᵢₖ − Lᵢcⱼₖ = Σ_s a^s_{ji} c(L_s,L_k) + Σ_s a^{s̄}_{jk̄} c(Lᵢ,L_s) − Σ_s a^{s̄}_{ik̄} c(Lⱼ,L_s)`
/// where `s` runs over `L₁..L_{n−1}, N`.
pub fn lemma1_sides(frame: &Frame, p: &[C64], i: usize, j: usize, k: usize) -> Result<(C64, C64)> {
    let fj = frame.jets(p, 3);
    let n = fj.n;
    let s = fj.tangents.len();
    let hess: Vec<Vec<Jet>> = (0..n).map(|a| (0..n).map(|b| fj.drho[a].derive(n + b)).collect()).collect();
    let fields: Vec<&FieldJet> = fj.tangents.iter().chain(std::iter::once(&fj.normal)).collect();
    let cform = |x: &FieldJet, y: &FieldJet| -> Jet {
        let xh = x.holo.as_ref().expect("type (1,0)");
        let yh = y.holo.as_ref().expect("type (1,0)");
        let sp = hess[0][0].space().clone();
        let mut acc = Jet::zero(&sp);
        for a in 0..n {
            for b in 0..n {
                let t = hess[a][b].mul(&xh[a]);
                t.mul_acc(&yh[b].conj(), &mut acc);
            }
        }
        acc
    };
    let lhs = fields[j].apply(&cform(fields[i], fields[k])).value() - fields[i].apply(&cform(fields[j], fields[k])).value();
    let bc = bracket_coefficients(&fj)?;
    let coef = |a: usize, b: usize, target: usize| -> C64 {
        // a, b hat indices (2·slot + conj)
        if a == b {
            return zero();
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let c = &bc.coef.iter().find(|(ij, _)| *ij == (lo, hi)).expect("pair present").1;
        c[target].value() * sign
    };
    let cv = |x: &FieldJet, y: &FieldJet| cform(x, y).value();
    let mut rhs = zero();
    for t in 0..n {
        rhs += coef(2 * j, 2 * i, t) * cv(fields[t], fields[k]);
        rhs += coef(2 * j, 2 * k + 1, n + t) * cv(fields[i], fields[t]);
        rhs -= coef(2 * i, 2 * k + 1, n + t) * cv(fields[j], fields[t]);
    }
    let _ = s;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn normal_weight_is_inverse_square() {
        let d = ModelDomain::siegel();
        let r = weight(&Combination::normal(2), &d.tangent_frame(), &[c(0.0); 3], 0.1, 6).unwrap();
        assert!((r.value - 100.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_weight_examples() {
        assert_eq!(mixed_weight(&ListSpec::new(vec![]), &[4.0]).unwrap(), 1.0);
        let l = ListSpec::new(vec![Letter::new(0, false), Letter::new(0, true)]);
        assert_eq!(mixed_weight(&l, &[4.0]).unwrap(), 4.0);
        let l = ListSpec::new(vec![Letter::new(0, false), Letter::new(1, true)]);
        assert!((mixed_weight(&l, &[4.0, 100.0]).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn siegel_weights_count_both_bracket_orders() {
        // (L, L̄) and (L̄, L) each contribute 1/δ
        let d = ModelDomain::siegel();
        let fl = FrameLists::compute(&d.tangent_frame(), &[c(0.0); 3], 2).unwrap();
        let w = fl.slot_weights(0.01);
        assert!((w[0] - 200.0).abs() < 1e-9 && (w[1] - 200.0).abs() < 1e-9);
    }

    #[test]
    fn herbort_closed_forms() {
        let d = ModelDomain::herbort();
        let fl = FrameLists::compute(&d.tangent_frame(), &[c(0.0); 3], 6).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for &dl in &[1e-2, 1e-4, 1e-6] {
            let f2 = fl.direction(&Combination::slot(2, 0)).weight(dl);
            assert!((f2 / (12.0 * (36.0 / dl).cbrt()) - 1.0).abs() < 1e-12);
            let fs = fl.direction(&Combination::tangent(vec![c(h), c(h)])).weight(dl);
            let exact = 4.0 / dl.sqrt() + 12.0 * 9f64.cbrt() / dl.cbrt();
            assert!((fs / exact - 1.0).abs() < 1e-12, "{fs} {exact}");
        }
    }
}
