//! Adapted plurisubharmonic weights: components, local pieces `λ^{−3/2}e^{λψ}χ`,
//! the global assembly `ΣH_k + Ae^{ρ/δ} + B|z|²`, and numerical verification.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coords::{adapted_coords, sample_polydisc, PolyMap};
use crate::cpoly::CPoly;
use crate::domains::{Frame, ModelDomain, Point};
use crate::error::{FtlError, Result};
use crate::expr::SmoothExpr;
use crate::field::{list_apply_fields, Field};
use crate::homog::{BallFamily, FrameProvider};
use crate::jet::{Jet, JetSpace};
use crate::jetfield::FieldJet;
use crate::linalg::hermitian_eigen_sorted;
use crate::weights::{check_eb1, Combination, FrameLists, MAX_M};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `e^{−1/t}` for a jet with positive value (zero otherwise).
fn flat(t: &Jet) -> Jet {
    if t.value().re <= 0.0 {
        Jet::zero(t.space())
    } else {
        t.recip().scale(c(-1.0)).exp()
    }
}

/// `g(t)/(g(t) + g(1−t))` with `g = e^{−1/t}`: a `C^∞` step from 0 at `t = 0` to 1 at `t = 1`.
fn smooth_step(t: &Jet) -> Jet {
    let a = flat(t);
    let b = flat(&t.scale(c(-1.0)).add_const(c(1.0)));
    a.mul(&a.add(&b).recip())
}

/// `χ`: 0 on `[0,½]`, 1 on `[1,∞)`.
pub fn chi(x: &Jet) -> Jet {
    let v = x.value().re;
    if v <= 0.5 {
        Jet::zero(x.space())
    } else if v >= 1.0 {
        Jet::constant(x.space(), c(1.0))
    } else {
        smooth_step(&x.add_const(c(-0.5)).scale(c(2.0)))
    }
}

/// `χ₁`: 1 on `[0,¼]`, 0 on `[1,∞)`.
pub fn chi1(s: &Jet) -> Jet {
    let v = s.value().re;
    if v <= 0.25 {
        Jet::constant(s.space(), c(1.0))
    } else if v >= 1.0 {
        Jet::zero(s.space())
    } else {
        Jet::constant(s.space(), c(1.0)).sub(&smooth_step(&s.add_const(c(-0.25)).scale(c(4.0 / 3.0))))
    }
}

/// Which quantity a component measures.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    /// `|cᵢᵢ|/δ`.
    Levi,
    /// `|Lᵢ Re 𝓛_w/δ|^{2/l̃}`; the word holds letter indices `2·slot + conj`.
    Real(Vec<usize>),
    /// `|Lᵢ Im 𝓛_w/δ|^{2/l̃}`.
    Imag(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentKey {
    pub slot: usize,
    pub kind: ComponentKind,
}

impl ComponentKey {
    /// `l̃`: 2 for the Levi entry, `|w| + 1` otherwise.
    pub fn order(&self) -> usize {
        match &self.kind {
            ComponentKind::Levi => 2,
            ComponentKind::Real(w) | ComponentKind::Imag(w) => w.len() + 1,
        }
    }

    fn target_value(&self, fl: &FrameLists) -> C64 {
        let i = self.slot;
        match &self.kind {
            ComponentKind::Levi => fl.value(&[2 * i, 2 * i + 1]),
            ComponentKind::Real(w) | ComponentKind::Imag(w) => {
                let mut a = vec![2 * i];
                a.extend(w);
                let mut b = vec![2 * i + 1];
                b.extend(w);
                let (x, y) = (fl.value(&a), fl.value(&b).conj());
                match self.kind {
                    ComponentKind::Real(_) => (x + y) * 0.5,
                    _ => (x - y) / C64::new(0.0, 2.0),
                }
            }
        }
    }

    /// `fᵢ` from a target value.
    fn magnitude(&self, target: C64, delta: f64) -> f64 {
        match self.kind {
            ComponentKind::Levi => target.norm() / delta,
            _ => (target.norm() / delta).powf(2.0 / self.order() as f64),
        }
    }

    pub fn label(&self) -> String {
        let word = |w: &[usize]| -> String {
            w.iter().map(|&l| format!("{}{}", if l % 2 == 1 { "Lb" } else { "L" }, l / 2 + 1)).collect::<Vec<_>>().join("")
        };
        match &self.kind {
            ComponentKind::Levi => format!("c{0}{0}", self.slot + 1),
            ComponentKind::Real(w) => format!("L{}Re[{}]", self.slot + 1, word(w)),
            ComponentKind::Imag(w) => format!("L{}Im[{}]", self.slot + 1, word(w)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Component {
    pub key: ComponentKey,
    pub value: f64,
    /// `fᵢ(p)/Fᵢ(p,δ)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentTuple {
    /// Index into the per-slot component lists.
    pub choice: Vec<usize>,
    pub min_ratio: f64,
    /// Some chosen component vanishes at `p`.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentTable {
    pub per_slot: Vec<Vec<Component>>,
    pub slot_weights: Vec<f64>,
    pub tuples: Vec<ComponentTuple>,
    /// Slots whose components all vanish.
    pub degenerate: Vec<usize>,
}

impl ComponentTable {
    /// Tuple maximizing the smallest ratio (per-slot best components).
    pub fn dominant(&self) -> Vec<usize> {
        self.per_slot
            .iter()
            .map(|cs| cs.iter().enumerate().max_by(|a, b| a.1.ratio.total_cmp(&b.1.ratio)).map(|(k, _)| k).unwrap_or(0))
            .collect()
    }
}

/// Cap on the number of enumerated tuples.
pub const MAX_TUPLES: usize = 100_000;

fn slot_words(slot: usize, k: usize) -> Vec<Vec<usize>> {
    (0..1usize << k).map(|mask| (0..k).map(|b| 2 * slot + (mask >> (k - 1 - b) & 1)).collect()).collect()
}

fn all_keys(s: usize, m: usize) -> Vec<Vec<ComponentKey>> {
    (0..s)
        .map(|i| {
            let mut v = vec![ComponentKey { slot: i, kind: ComponentKind::Levi }];
            for k in 2..m {
                for w in slot_words(i, k) {
                    v.push(ComponentKey { slot: i, kind: ComponentKind::Real(w.clone()) });
                    v.push(ComponentKey { slot: i, kind: ComponentKind::Imag(w) });
                }
            }
            v
        })
        .collect()
}

fn table_from_lists(fl: &FrameLists, s: usize, m: usize, delta: f64) -> ComponentTable {
    let fw = fl.slot_weights(delta);
    let per_slot: Vec<Vec<Component>> = all_keys(s, m)
        .into_iter()
        .enumerate()
        .map(|(i, keys)| {
            keys.into_iter()
                .filter_map(|key| {
                    let value = key.magnitude(key.target_value(fl), delta);
                    let ratio = if fw[i] > 0.0 { value / fw[i] } else { 0.0 };
                    // the Levi entry is always listed; list components only when they do not vanish
                    if key.kind == ComponentKind::Levi || ratio > 1e-12 {
                        Some(Component { key, value, ratio })
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let degenerate: Vec<usize> = per_slot.iter().enumerate().filter(|(_, cs)| cs.iter().all(|c| c.value == 0.0)).map(|(i, _)| i).collect();
    let count: usize = per_slot.iter().map(|v| v.len()).product();
    let mut tuples = Vec::new();
    if count <= MAX_TUPLES {
        let mut idx = vec![0usize; s];
        'outer: loop {
            let ratios: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| per_slot[i][k].ratio).collect();
            tuples.push(ComponentTuple {
                choice: idx.clone(),
                min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                flagged: ratios.iter().any(|&r| r == 0.0),
            });
            for pos in (0..s).rev() {
                idx[pos] += 1;
                if idx[pos] < per_slot[pos].len() {
                    continue 'outer;
                }
                idx[pos] = 0;
            }
            break;
        }
    }
    ComponentTable { per_slot, slot_weights: fw[..s].to_vec(), tuples, degenerate }
}

/// All component tuples at `p` in lexicographic order, with dominance ratios `fᵢ(p)/Fᵢ(p,δ)`.
pub fn enumerate_components(frame: &Frame, p: &[C64], delta: f64, m: usize) -> Result<ComponentTable> {
    if m > MAX_M {
        return Err(FtlError::TypeBound(m));
    }
    let fl = FrameLists::compute(frame, p, m)?;
    Ok(table_from_lists(&fl, frame.tangents.len(), m, delta))
}

/// Symbolic data of one component: its target `cᵢᵢ` or `Lᵢφᵢ`, and the generator `φᵢ`.
#[derive(Clone, Debug)]
pub struct ComponentExpr {
    pub key: ComponentKey,
    pub target: SmoothExpr,
    pub generator: Option<SmoothExpr>,
}

impl ComponentExpr {
    pub fn build(frame: &Frame, key: &ComponentKey) -> Result<ComponentExpr> {
        let letter = |l: usize| -> Field {
            let f = &frame.tangents[l / 2];
            if l % 2 == 1 {
                f.conj()
            } else {
                f.clone()
            }
        };
        let li = frame.tangents[key.slot].clone();
        match &key.kind {
            ComponentKind::Levi => {
                let target = list_apply_fields(&[li.clone(), li.conj()], &frame.rho)?;
                Ok(ComponentExpr { key: key.clone(), target, generator: None })
            }
            ComponentKind::Real(w) | ComponentKind::Imag(w) => {
                let fields: Vec<Field> = w.iter().map(|&l| letter(l)).collect();
                let e = list_apply_fields(&fields, &frame.rho)?;
                let phi = match key.kind {
                    ComponentKind::Real(_) => e.add(&e.conj()).scale(c(0.5)),
                    _ => e.sub(&e.conj()).scale(C64::new(0.0, -0.5)),
                };
                let target = li.apply(&phi);
                Ok(ComponentExpr { key: key.clone(), target, generator: Some(phi) })
            }
        }
    }
}

/// Jets at one point shared by every local piece.
struct PointJets {
    pi: Vec<Jet>,
    pib: Vec<Jet>,
    targets: Vec<Option<Jet>>,
    generators: Vec<Option<Jet>>,
}

/// `π(q) = q − ρ(q)ρ_{z̄}(q)/(2|∂ρ(q)|²)` as jets.
fn projection_jets(rho: &SmoothExpr, z: &[Jet], zb: &[Jet]) -> (Vec<Jet>, Vec<Jet>) {
    let n = z.len();
    let r = rho.eval_jets(z, zb);
    let dz: Vec<Jet> = (0..n).map(|j| rho.derive(j, false).eval_jets(z, zb)).collect();
    let dzb: Vec<Jet> = (0..n).map(|j| rho.derive(j, true).eval_jets(z, zb)).collect();
    let mut norm2 = Jet::zero(r.space());
    for j in 0..n {
        norm2.add_assign(&dz[j].mul(&dzb[j]));
    }
    let t = r.mul(&norm2.recip()).scale(c(0.5));
    let pi: Vec<Jet> = (0..n).map(|j| z[j].sub(&t.mul(&dzb[j]))).collect();
    let pib: Vec<Jet> = (0..n).map(|j| zb[j].sub(&t.mul(&dz[j]))).collect();
    (pi, pib)
}

/// Projection to `∂Ω` by one Newton step along `ρ_{z̄}`.
pub fn project(rho: &SmoothExpr, q: &[C64]) -> Point {
    let space = JetSpace::get(2 * q.len(), 0);
    let (z, zb) = Jet::coordinates(&space, q);
    projection_jets(rho, &z, &zb).0.iter().map(|j| j.value()).collect()
}

/// One local function `H(f,λ,B) = Σ_{i∈I} λ^{−3/2}e^{λψᵢ}χ_{f,B}`.
#[derive(Clone, Debug)]
pub struct LocalPiece {
    pub center: Point,
    /// Component index (into the assembly registry) per slot.
    pub tuple: Vec<usize>,
    /// Slots whose component is not the Levi entry.
    pub active: Vec<usize>,
    pub lambda: f64,
    pub b: f64,
    /// Schedule weight `A_f`.
    pub weight: f64,
    pub slot_weights: Vec<f64>,
    /// Chart radii `cFᵢ^{−1/2}` and `cδ`.
    pub radii: Vec<f64>,
    pub map: PolyMap,
    pub delta: f64,
}

impl LocalPiece {
    /// `(n−1)λ^{−3/2}e^{2λ}`, valid while `|ψᵢ| ≤ 2`.
    pub fn bound(&self) -> f64 {
        self.active.len() as f64 * self.lambda.powf(-1.5) * (2.0 * self.lambda).exp() * self.weight
    }

    /// Value-level test `Σ|Zᵢ/rᵢ|² < 1` for a projected point.
    pub fn support_contains(&self, pi: &[C64]) -> bool {
        self.map.apply(pi).iter().zip(&self.radii).map(|(z, r)| z.norm_sqr() / (r * r)).sum::<f64>() < 1.0
    }

    /// Normalized chart radius `Σ|Zᵢ/rᵢ|²` of `π(q)`.
    fn chart_radius(&self, pj: &PointJets) -> Jet {
        let n = self.center.len();
        let mut s = Jet::zero(pj.pi[0].space());
        for i in 0..n {
            let zi = self.map.forward[i].eval_jets(&pj.pi, &pj.pib);
            s.add_assign(&zi.mul(&zi.conj()).scale(c(1.0 / (self.radii[i] * self.radii[i]))));
        }
        s
    }

    fn eval(&self, reg: &[ComponentExpr], pj: &PointJets) -> Jet {
        let space = pj.pi[0].space().clone();
        if self.active.is_empty() {
            return Jet::zero(&space);
        }
        let s = self.chart_radius(pj);
        if s.value().re >= 1.0 {
            return Jet::zero(&space);
        }
        let mut cut = chi1(&s);
        for (i, &k) in self.tuple.iter().enumerate() {
            let Some(t) = &pj.targets[k] else {
                return Jet::zero(&space);
            };
            let key = &reg[k].key;
            let mag2 = t.mul(&t.conj()).re();
            let v = mag2.value().re;
            let ratio = key.magnitude(C64::new(v.sqrt(), 0.0), self.delta) / self.slot_weights[i];
            if self.b * ratio <= 0.5 {
                return Jet::zero(&space);
            }
            let f = match key.kind {
                ComponentKind::Levi => mag2.powf(0.5).scale(c(1.0 / self.delta)),
                _ => mag2.scale(c(1.0 / (self.delta * self.delta))).powf(1.0 / key.order() as f64),
            };
            cut = cut.mul(&chi(&f.scale(c(self.b / self.slot_weights[i]))));
        }
        let mut sum = Jet::zero(&space);
        for &i in &self.active {
            let k = self.tuple[i];
            let g = pj.generators[k].as_ref().expect("active slot has a generator");
            let l = reg[k].key.order() as f64;
            let psi = g.re().scale(c(self.slot_weights[i].powf((1.0 - l) / 2.0) / self.delta));
            sum.add_assign(&psi.scale(c(self.lambda)).exp().scale(c(self.lambda.powf(-1.5))));
        }
        sum.mul(&cut).scale(c(self.weight))
    }
}

/// Anything that can be verified as an adapted plurisubharmonic function.
pub trait PshFunction: Sync {
    /// Order-2 jet at `q`.
    fn jet(&self, q: &[C64]) -> Jet;
    fn label(&self) -> String;
}

/// A closed-form candidate such as `|z|²` or `Ae^{ρ/δ}`.
#[derive(Clone, Debug)]
pub struct ExprPsh {
    pub expr: SmoothExpr,
    pub name: String,
}

impl ExprPsh {
    pub fn norm_squared(n: usize) -> ExprPsh {
        let mut p = CPoly::zero(n);
        for j in 0..n {
            p = p.add(&CPoly::var(n, j, false).mul(&CPoly::var(n, j, true)));
        }
        ExprPsh { expr: SmoothExpr::poly(p), name: "|z|^2".into() }
    }

    pub fn exp_rho(d: &ModelDomain, a: f64, delta: f64) -> ExprPsh {
        ExprPsh { expr: SmoothExpr::exp(d.rho.scale(c(1.0 / delta))).scale(c(a)), name: format!("{a}*exp(rho/delta)") }
    }
}

impl PshFunction for ExprPsh {
    fn jet(&self, q: &[C64]) -> Jet {
        let space = JetSpace::get(2 * q.len(), 2);
        let (z, zb) = Jet::coordinates(&space, q);
        self.expr.eval_jets(&z, &zb)
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub tuple: Vec<String>,
    pub a_f: f64,
    pub b_f: f64,
    pub eps_f: f64,
    pub pieces: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PshConfig {
    pub c: f64,
    pub lambda: f64,
    /// Coefficient of `e^{ρ/δ}`.
    pub a: f64,
    /// `W(p₀)` is the chart polydisc of radii `window_scale·cFᵢ^{−1/2}`.
    pub window_scale: f64,
    /// Lattice points per real chart direction for cover candidates.
    pub lattice: usize,
    pub cover_cap: usize,
    /// Calibration samples for `B_const`.
    pub calibration: usize,
    pub seed: u64,
}

impl Default for PshConfig {
    fn default() -> PshConfig {
        PshConfig { c: 0.5, lambda: 8.0, a: 5.0, window_scale: 1.0, lattice: 3, cover_cap: 1024, calibration: 200, seed: 7 }
    }
}

/// `H = Σ_k A_f H_{p_k} + Ae^{ρ/δ} + B|z − p₀|²`.
#[derive(Clone, Debug)]
pub struct PshAssembly {
    pub domain: String,
    pub delta: f64,
    pub center: Point,
    pub frame: Frame,
    pub registry: Vec<ComponentExpr>,
    pub pieces: Vec<LocalPiece>,
    pub schedule: Vec<ScheduleEntry>,
    pub a: f64,
    pub b_const: f64,
    /// Measured `D`: largest `Fᵢ/fᵢ` of the chosen components at the cover centers.
    pub d_const: f64,
    /// EB₁ constant used as `C` in the schedule recursion.
    pub eb_constant: f64,
    /// Largest negative Hessian eigenvalue of `ΣH_k + A∂∂̄e^{ρ/δ}` seen during calibration.
    pub gamma1: f64,
    pub cover: Vec<Point>,
    pub bound: f64,
    rho: SmoothExpr,
    norm2: SmoothExpr,
    window: Arc<BallFamily>,
    radii: Vec<f64>,
}

impl PshAssembly {
    fn point_jets(&self, q: &[C64]) -> PointJets {
        let space = JetSpace::get(2 * q.len(), 2);
        let (z, zb) = Jet::coordinates(&space, q);
        let (pi, pib) = projection_jets(&self.rho, &z, &zb);
        let targets = self.registry.iter().map(|e| Some(e.target.eval_jets(&pi, &pib))).collect();
        let generators = self.registry.iter().map(|e| e.generator.as_ref().map(|g| g.eval_jets(&pi, &pib))).collect();
        PointJets { pi, pib, targets, generators }
    }

    /// `Σ_k H_{p_k}` alone.
    pub fn local_jet(&self, q: &[C64]) -> Jet {
        let space = JetSpace::get(2 * q.len(), 2);
        if self.pieces.is_empty() {
            return Jet::zero(&space);
        }
        let pi = project(&self.rho, q);
        let live: Vec<&LocalPiece> = self.pieces.iter().filter(|p| p.support_contains(&pi)).collect();
        let mut acc = Jet::zero(&space);
        if live.is_empty() {
            return acc;
        }
        let pj = self.point_jets(q);
        for piece in live {
            acc.add_assign(&piece.eval(&self.registry, &pj));
        }
        acc
    }

    fn exp_rho_jet(&self, q: &[C64]) -> Jet {
        let space = JetSpace::get(2 * q.len(), 2);
        let (z, zb) = Jet::coordinates(&space, q);
        self.rho.eval_jets(&z, &zb).scale(c(1.0 / self.delta)).exp()
    }

    fn global_jet(&self, q: &[C64]) -> Jet {
        let space = JetSpace::get(2 * q.len(), 2);
        let (z, zb) = Jet::coordinates(&space, q);
        let e = self.exp_rho_jet(q).scale(c(self.a));
        e.add(&self.norm2.eval_jets(&z, &zb).scale(c(self.b_const)))
    }

    pub fn value(&self, q: &[C64]) -> f64 {
        self.jet(q).value().re
    }

    /// Points of `W(p₀) ∩ {−2δ ≤ ρ < 0}`.
    pub fn strip_grid(&self, d: &ModelDomain, count: usize, seed: u64) -> Vec<Point> {
        strip_points(d, &self.window, &self.radii, self.delta, count, seed)
    }
}

impl PshFunction for PshAssembly {
    fn jet(&self, q: &[C64]) -> Jet {
        self.local_jet(q).add(&self.global_jet(q))
    }

    fn label(&self) -> String {
        format!("assembly({}, delta={})", self.domain, self.delta)
    }
}

fn strip_points(d: &ModelDomain, fam: &BallFamily, radii: &[f64], delta: f64, count: usize, seed: u64) -> Vec<Point> {
    let n = d.n;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut guard = 0;
    while out.len() < count && guard < 20 * count + 100 {
        guard += 1;
        let zt = sample_polydisc(&mut rng, &radii[..n - 1]);
        let y = rng.gen_range(-1.0..1.0) * radii[n - 1];
        if let Some(mut b) = fam.boundary_point(d, &zt, y) {
            let depth = rng.gen_range(0.02..2.0) * delta;
            b[n - 1] -= c(depth);
            out.push(b);
        }
    }
    out
}

fn min_hessian_eigen(j: &Jet) -> f64 {
    let h = j.complex_hessian();
    let n = h.len();
    let m = DMatrix::from_fn(n, n, |a, b| h[a][b]);
    let m = (&m + m.adjoint()) * c(0.5);
    let (ev, _, _) = hermitian_eigen_sorted(&m);
    ev.last().copied().unwrap_or(0.0)
}

/// Builds the assembly around `p₀` at depth `δ`.
pub fn assemble_h(d: &ModelDomain, provider: FrameProvider, p0: &[C64], delta: f64, cfg: &PshConfig) -> Result<PshAssembly> {
    if !(cfg.lambda > 1.0) {
        return Err(FtlError::Invalid("lambda must exceed 1".into()));
    }
    if !(delta > 0.0) {
        return Err(FtlError::Invalid("delta must be positive".into()));
    }
    let n = d.n;
    let s = n - 1;
    let frame = provider.frame(d, p0, delta);
    let fam = Arc::new(BallFamily::new(d, provider, p0)?);
    let radii: Vec<f64> = fam.radii(delta, cfg.c).iter().map(|r| r * cfg.window_scale).collect();

    // greedy packing of W ∩ ∂Ω by half-size balls, candidates on a chart lattice
    let k = cfg.lattice.max(1);
    let axis: Vec<f64> = (0..k).map(|t| if k == 1 { 0.0 } else { -1.0 + 2.0 * t as f64 / (k - 1) as f64 }).collect();
    let dims = 2 * s + 1;
    let mut candidates: Vec<Point> = vec![p0.to_vec()];
    let total = k.pow(dims as u32);
    for idx in 0..total {
        let mut r = idx;
        let mut coords = Vec::with_capacity(dims);
        for _ in 0..dims {
            coords.push(axis[r % k]);
            r /= k;
        }
        let zt: Vec<C64> = (0..s).map(|i| C64::new(coords[2 * i], coords[2 * i + 1]) * radii[i] * 1.1).collect();
        if let Some(q) = fam.boundary_point(d, &zt, coords[2 * s] * radii[n - 1] * 1.1) {
            candidates.push(q);
        }
    }
    let mut cover: Vec<(Point, BallFamily)> = Vec::new();
    for q in candidates {
        if cover.iter().any(|(_, f)| f.contains(&q, delta, 0.5 * cfg.c)) {
            continue;
        }
        if cover.len() >= cfg.cover_cap {
            return Err(FtlError::Numerical(format!("cover exceeds {} balls", cfg.cover_cap)));
        }
        let f = BallFamily::new(d, provider, &q)?;
        cover.push((q, f));
    }

    // dominant tuple per center
    let tables: Vec<(ComponentTable, FrameLists)> = cover
        .par_iter()
        .map(|(q, f)| {
            let fl = FrameLists::compute(&f.frame, q, d.m)?;
            Ok((table_from_lists(&fl, s, d.m, delta), fl))
        })
        .collect::<Result<_>>()?;
    let mut d_const = 1.0f64;
    let mut chosen: Vec<Vec<ComponentKey>> = Vec::new();
    for (t, _) in &tables {
        let dom = t.dominant();
        let keys: Vec<ComponentKey> = dom.iter().enumerate().map(|(i, &k)| t.per_slot[i][k].key.clone()).collect();
        for (i, &k) in dom.iter().enumerate() {
            let r = t.per_slot[i][k].ratio;
            if r > 0.0 {
                d_const = d_const.max(1.0 / r);
            }
        }
        chosen.push(keys);
    }
    let b = d_const;

    // registry of used components
    let mut registry: Vec<ComponentExpr> = Vec::new();
    let mut index: BTreeMap<ComponentKey, usize> = BTreeMap::new();
    let mut tuple_ids: Vec<Vec<usize>> = Vec::new();
    for keys in &chosen {
        let mut ids = Vec::with_capacity(s);
        for key in keys {
            let id = match index.get(key) {
                Some(&id) => id,
                None => {
                    registry.push(ComponentExpr::build(&frame, key)?);
                    index.insert(key.clone(), registry.len() - 1);
                    registry.len() - 1
                }
            };
            ids.push(id);
        }
        tuple_ids.push(ids);
    }

    // lexicographic schedule over distinct non-trivial tuples: the largest gets 1, each smaller one
    // 3C times the sum of the larger weights
    let eb_constant = check_eb1(&frame, p0, delta, d.m, 64, cfg.seed)?.estimate.max(1.0);
    let mut distinct: Vec<Vec<ComponentKey>> = chosen.iter().filter(|k| k.iter().any(|x| x.kind != ComponentKind::Levi)).cloned().collect();
    distinct.sort();
    distinct.dedup();
    let mut weights: BTreeMap<Vec<ComponentKey>, f64> = BTreeMap::new();
    let mut acc = 0.0;
    for t in distinct.iter().rev() {
        let a_f = if acc == 0.0 { 1.0 } else { 3.0 * eb_constant * acc };
        weights.insert(t.clone(), a_f);
        acc += a_f;
    }

    let mut pieces = Vec::new();
    for (((q, f), keys), ids) in cover.iter().zip(&chosen).zip(&tuple_ids) {
        let Some(&w) = weights.get(keys) else { continue };
        let active: Vec<usize> = keys.iter().enumerate().filter(|(_, k)| k.kind != ComponentKind::Levi).map(|(i, _)| i).collect();
        let fw = f.radii(delta, cfg.c);
        let sw: Vec<f64> = fw[..s].iter().map(|r| (cfg.c / r).powi(2)).collect();
        pieces.push(LocalPiece {
            center: q.clone(),
            tuple: ids.clone(),
            active,
            lambda: cfg.lambda,
            b,
            weight: w,
            slot_weights: sw,
            radii: fw,
            map: f.map.clone(),
            delta,
        });
    }
    let schedule: Vec<ScheduleEntry> = distinct
        .iter()
        .map(|t| ScheduleEntry {
            tuple: t.iter().map(|k| k.label()).collect(),
            a_f: weights[t],
            b_f: b,
            eps_f: 1.0,
            pieces: chosen.iter().filter(|k| *k == t).count(),
        })
        .collect();

    let mut norm2 = CPoly::zero(n);
    for j in 0..n {
        let zj = CPoly::var(n, j, false).sub(&CPoly::constant(n, p0[j]));
        norm2 = norm2.add(&zj.mul(&zj.conj()));
    }
    let mut asm = PshAssembly {
        domain: d.name.clone(),
        delta,
        center: p0.to_vec(),
        frame,
        registry,
        pieces,
        schedule,
        a: cfg.a,
        b_const: 0.0,
        d_const,
        eb_constant,
        gamma1: 0.0,
        cover: cover.iter().map(|(q, _)| q.clone()).collect(),
        bound: 0.0,
        rho: d.rho.clone(),
        norm2: SmoothExpr::poly(norm2),
        window: fam.clone(),
        radii: radii.clone(),
    };

    // A and B_const = 2γ₁(A): γ₁ is the worst negative eigenvalue of ΣH_k + A∂∂̄e^{ρ/δ} on calibration
    // points; A is taken from a doubling grid to minimize the resulting bound A + B·max|q − p₀|²
    let pts = strip_points(d, &fam, &radii, delta, cfg.calibration, cfg.seed ^ 0xC0FFEE);
    let mats: Vec<(DMatrix<C64>, DMatrix<C64>, f64)> = pts
        .par_iter()
        .map(|q| {
            let hm = |j: &Jet| {
                let h = j.complex_hessian();
                DMatrix::from_fn(n, n, |a, b| h[a][b])
            };
            let r2 = q.iter().zip(p0).map(|(a, b)| (a - b).norm_sqr()).sum();
            (hm(&asm.local_jet(q)), hm(&asm.exp_rho_jet(q)), r2)
        })
        .collect();
    let r2 = mats.iter().map(|m| m.2).fold(0.0, f64::max);
    let gamma_at = |a: f64| -> f64 {
        mats.iter()
            .map(|(hl, e, _)| {
                let m = hl + e * c(a);
                let m = (&m + m.adjoint()) * c(0.5);
                (-hermitian_eigen_sorted(&m).0.last().copied().unwrap_or(0.0)).max(0.0)
            })
            .fold(0.0, f64::max)
    };
    let mut best = (f64::INFINITY, cfg.a, 0.0);
    for k in 0..=24 {
        let a = cfg.a * 2f64.powi(k);
        let g = gamma_at(a);
        let cost = a + 2.0 * g * r2;
        if cost < best.0 {
            best = (cost, a, g);
        }
    }
    asm.a = best.1;
    asm.gamma1 = best.2;
    asm.b_const = 2.0 * asm.gamma1;
    let w2 = d.window * d.window;
    asm.bound = asm.pieces.iter().map(|p| p.bound()).sum::<f64>() + asm.a + asm.b_const * w2;
    Ok(asm)
}

/// Worst case of one verification condition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub ratio: f64,
    pub point: Point,
    pub direction: Option<Vec<C64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaReport {
    pub label: String,
    pub delta: f64,
    pub beta: f64,
    /// `sup|H|`.
    pub condition1: Witness,
    /// `max F(L,q,δ)/⟨∂∂̄H;L,L̄⟩(q)`; infinite when the Hessian is not positive.
    pub condition2: Witness,
    /// `max |𝓛H|/∏F^{1/2}` over lists of length 1 and 2.
    pub condition3: Witness,
    pub min_hessian_eigenvalue: f64,
    pub min_hessian_point: Point,
    pub points: usize,
    pub directions: usize,
}

impl BetaReport {
    /// Condition (2) with a given `β`.
    pub fn condition2_holds(&self, beta: f64) -> bool {
        self.condition2.ratio <= beta
    }
}

fn worse(a: Witness, b: Witness) -> Witness {
    if b.ratio > a.ratio || b.ratio.is_nan() {
        b
    } else {
        a
    }
}

/// Measures `β` for `h` on the given strip points with directions from `frame ∪ {N}`.
pub fn verify_adapted(h: &dyn PshFunction, frame: &Frame, m: usize, delta: f64, points: &[Point], directions: usize, seed: u64) -> Result<BetaReport> {
    if points.is_empty() {
        return Err(FtlError::Invalid("empty verification grid".into()));
    }
    let s = frame.tangents.len();
    let n = s + 1;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|k| c(if k == i { 1.0 } else { 0.0 })).collect()).collect();
    for _ in 0..directions {
        let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let r = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        dirs.push(v.into_iter().map(|x| x / r).collect());
    }
    let per: Vec<Result<(Witness, Witness, Witness, f64, Point)>> = points
        .par_iter()
        .map(|q| {
            let j = h.jet(q);
            let hess = j.complex_hessian();
            let fl = FrameLists::compute(frame, q, m)?;
            let space = j.space().clone();
            let (z, zb) = Jet::coordinates(&space, q);
            let fields: Vec<FieldJet> = frame.tangents.iter().chain(std::iter::once(&frame.normal)).map(|f| FieldJet::from_field(f, &z, &zb)).collect();
            let holo: Vec<Vec<C64>> = fields.iter().map(|f| f.holo_value(n)).collect();
            let mut w2 = Witness { ratio: 0.0, point: q.clone(), direction: None };
            for b in &dirs {
                let a: Vec<C64> = (0..n).map(|k| (0..n).map(|i| b[i] * holo[i][k]).sum()).collect();
                let mut hv = C64::new(0.0, 0.0);
                for x in 0..n {
                    for y in 0..n {
                        hv += hess[x][y] * a[x] * a[y].conj();
                    }
                }
                let comb = Combination { tangent: b[..s].to_vec(), normal: b[s] };
                let f = fl.direction(&comb).weight(delta);
                let ratio = if hv.re > 0.0 { f / hv.re } else { f64::INFINITY };
                w2 = worse(w2, Witness { ratio, point: q.clone(), direction: Some(b.clone()) });
            }
            // lists of H of length 1 and 2 over L, L̄, N, N̄
            let sw = fl.slot_weights(delta);
            let letters: Vec<(FieldJet, f64)> = fields.iter().enumerate().flat_map(|(i, f)| [(f.clone(), sw[i]), (f.conj(), sw[i])]).collect();
            let mut w3 = Witness { ratio: 0.0, point: q.clone(), direction: None };
            for (x, fx) in &letters {
                let xh = x.apply(&j);
                let r1 = xh.value().norm() / fx.sqrt();
                w3 = worse(w3, Witness { ratio: r1, point: q.clone(), direction: None });
                for (y, fy) in &letters {
                    let r2 = y.apply(&xh).value().norm() / (fx * fy).sqrt();
                    w3 = worse(w3, Witness { ratio: r2, point: q.clone(), direction: None });
                }
            }
            let w1 = Witness { ratio: j.value().re.abs(), point: q.clone(), direction: None };
            Ok((w1, w2, w3, min_hessian_eigen(&j), q.clone()))
        })
        .collect();
    let mut c1 = Witness { ratio: 0.0, point: points[0].clone(), direction: None };
    let mut c2 = c1.clone();
    let mut c3 = c1.clone();
    let mut min_eig = f64::INFINITY;
    let mut min_pt = points[0].clone();
    for r in per {
        let (a, b, cc, e, q) = r?;
        c1 = worse(c1, a);
        c2 = worse(c2, b);
        c3 = worse(c3, cc);
        if e < min_eig {
            min_eig = e;
            min_pt = q;
        }
    }
    Ok(BetaReport {
        label: h.label(),
        delta,
        beta: c1.ratio.max(c2.ratio).max(c3.ratio),
        condition1: c1,
        condition2: c2,
        condition3: c3,
        min_hessian_eigenvalue: min_eig,
        min_hessian_point: min_pt,
        points: points.len(),
        directions: dirs.len(),
    })
}

/// Strip points around `p₀` without building an assembly.
pub fn strip_grid(d: &ModelDomain, provider: FrameProvider, p0: &[C64], delta: f64, c_scale: f64, count: usize, seed: u64) -> Result<Vec<Point>> {
    let fam = BallFamily::new(d, provider, p0)?;
    let radii = fam.radii(delta, c_scale);
    Ok(strip_points(d, &fam, &radii, delta, count, seed))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FdCheck {
    pub gradient_error: f64,
    pub hessian_error: f64,
}

/// Relative deviation of jet derivatives from central finite differences with base step `h`.
pub fn finite_difference_check(f: &dyn PshFunction, q: &[C64], h: f64) -> FdCheck {
    let n = q.len();
    let val = |x: &[f64]| -> f64 {
        let z: Vec<C64> = (0..n).map(|j| C64::new(x[2 * j], x[2 * j + 1])).collect();
        f.jet(&z).value().re
    };
    let x0: Vec<f64> = q.iter().flat_map(|z| [z.re, z.im]).collect();
    let dim = 2 * n;
    let shifted = |i: usize, a: f64, k: usize, b: f64| -> f64 {
        let mut x = x0.clone();
        x[i] += a;
        x[k] += b;
        val(&x)
    };
    let derivs = |h: f64| -> (Vec<f64>, Vec<Vec<f64>>) {
        let g: Vec<f64> = (0..dim).map(|i| (shifted(i, h, i, 0.0) - shifted(i, -h, i, 0.0)) / (2.0 * h)).collect();
        let f0 = val(&x0);
        let mut hr = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for k in i..dim {
                hr[i][k] = if i == k {
                    (shifted(i, h, i, 0.0) - 2.0 * f0 + shifted(i, -h, i, 0.0)) / (h * h)
                } else {
                    (shifted(i, h, k, h) - shifted(i, h, k, -h) - shifted(i, -h, k, h) + shifted(i, -h, k, -h)) / (4.0 * h * h)
                };
                hr[k][i] = hr[i][k];
            }
        }
        (g, hr)
    };
    // Richardson extrapolation of the steps h and h/2
    let (g1, h1) = derivs(h);
    let (g2, h2) = derivs(0.5 * h);
    let grad_r: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    let hr: Vec<Vec<f64>> = h1.iter().zip(&h2).map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| (4.0 * b - a) / 3.0).collect()).collect();
    let j = f.jet(q);
    let (dz, _) = j.gradient();
    let hess = j.complex_hessian();
    let mut gscale = 0.0f64;
    let mut gerr = 0.0f64;
    for a in 0..n {
        let fd = C64::new(grad_r[2 * a], -grad_r[2 * a + 1]) * 0.5;
        gscale = gscale.max(fd.norm());
        gerr = gerr.max((fd - dz[a]).norm());
    }
    let mut hscale = 0.0f64;
    let mut herr = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
            let fd = C64::new(hr[xa][xb] + hr[ya][yb], hr[xa][yb] - hr[ya][xb]) * 0.25;
            hscale = hscale.max(fd.norm());
            herr = herr.max((fd - hess[a][b]).norm());
        }
    }
    FdCheck { gradient_error: gerr / gscale.max(1e-300), hessian_error: herr / hscale.max(1e-300) }
}

/// Range of `F(L,q,δ)/F(L,p,δ)` over sampled `q ∈ B^c(p,δ)` and sampled directions.
pub fn f_comparison(d: &ModelDomain, provider: FrameProvider, p: &[C64], delta: f64, c_scale: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let fam = BallFamily::new(d, provider, p)?;
    let radii = fam.radii(delta, c_scale);
    let s = d.n - 1;
    let flp = FrameLists::compute(&fam.frame, p, d.m)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<C64>> = (0..s).map(|i| (0..s).map(|k| c(if k == i { 1.0 } else { 0.0 })).collect()).collect();
    for _ in 0..8 {
        dirs.push(sample_polydisc(&mut rng, &vec![1.0; s]));
    }
    let qs: Vec<Point> = (0..samples).map(|_| fam.map.apply_inverse(&sample_polydisc(&mut rng, &radii))).collect();
    let fp: Vec<f64> = dirs.iter().map(|a| flp.direction(&Combination::tangent(a.clone())).weight(delta)).collect();
    let ranges: Vec<(f64, f64)> = qs
        .par_iter()
        .map(|q| {
            let fl = FrameLists::compute(&fam.frame, q, d.m)?;
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for (a, f0) in dirs.iter().zip(&fp) {
                let r = fl.direction(&Combination::tangent(a.clone())).weight(delta) / f0;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            Ok((lo, hi))
        })
        .collect::<Result<_>>()?;
    Ok((ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min), ranges.iter().map(|r| r.1).fold(0.0, f64::max)))
}

/// Chart map for a local piece built directly (outside an assembly).
pub fn local_h(
    d: &ModelDomain,
    frame: &Frame,
    p: &[C64],
    delta: f64,
    tuple: &[ComponentKey],
    lambda: f64,
    b: f64,
    c_scale: f64,
    c0: Option<f64>,
) -> Result<LocalAssembly> {
    if !(lambda > 1.0) {
        return Err(FtlError::Invalid("lambda must exceed 1".into()));
    }
    if let Some(c0) = c0 {
        if c_scale > c0 {
            return Err(FtlError::Invalid(format!("c = {c_scale} exceeds c0 = {c0}")));
        }
    }
    let s = frame.tangents.len();
    if tuple.len() != s {
        return Err(FtlError::Dimension { expected: s, found: tuple.len() });
    }
    let map = adapted_coords(frame, d, p, d.m)?;
    let fl = FrameLists::compute(frame, p, d.m)?;
    let sw = fl.slot_weights(delta);
    let mut radii: Vec<f64> = sw[..s].iter().map(|f| c_scale / f.sqrt()).collect();
    radii.push(c_scale * delta);
    let registry: Vec<ComponentExpr> = tuple.iter().map(|k| ComponentExpr::build(frame, k)).collect::<Result<_>>()?;
    let active = tuple.iter().enumerate().filter(|(_, k)| k.kind != ComponentKind::Levi).map(|(i, _)| i).collect();
    let piece = LocalPiece { center: p.to_vec(), tuple: (0..s).collect(), active, lambda, b, weight: 1.0, slot_weights: sw[..s].to_vec(), radii, map, delta };
    Ok(LocalAssembly { piece, registry, rho: d.rho.clone() })
}

/// A single local piece as a [`PshFunction`].
#[derive(Clone, Debug)]
pub struct LocalAssembly {
    pub piece: LocalPiece,
    pub registry: Vec<ComponentExpr>,
    rho: SmoothExpr,
}

impl LocalAssembly {
    /// `Q^c(p,δ)` membership: `π(q)` inside the chart polydisc.
    pub fn in_support_region(&self, q: &[C64]) -> bool {
        let pi = project(&self.rho, q);
        let z = self.piece.map.apply(&pi);
        z.iter().zip(&self.piece.radii).map(|(a, r)| a.norm_sqr() / (r * r)).sum::<f64>() < 1.0
    }
}

impl PshFunction for LocalAssembly {
    fn jet(&self, q: &[C64]) -> Jet {
        let space = JetSpace::get(2 * q.len(), 2);
        let (z, zb) = Jet::coordinates(&space, q);
        let (pi, pib) = projection_jets(&self.rho, &z, &zb);
        let targets = self.registry.iter().map(|e| Some(e.target.eval_jets(&pi, &pib))).collect();
        let generators = self.registry.iter().map(|e| e.generator.as_ref().map(|g| g.eval_jets(&pi, &pib))).collect();
        let pj = PointJets { pi, pib, targets, generators };
        self.piece.eval(&self.registry, &pj)
    }

    fn label(&self) -> String {
        "local".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_joints_are_flat() {
        let sp = JetSpace::get(2, 2);
        let x = Jet::variable(&sp, 0, c(0.5 + 1e-9));
        let j = chi(&x);
        assert!(j.value().re < 1e-20);
        let x = Jet::variable(&sp, 0, c(0.75));
        assert!((chi(&x).value().re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn siegel_levi_component_only() {
        let d = ModelDomain::siegel();
        let p = vec![c(0.0); 3];
        let t = enumerate_components(&d.tangent_frame(), &p, 0.01, d.m).unwrap();
        assert!(t.per_slot.iter().all(|v| v.len() == 1));
        assert_eq!(t.tuples.len(), 1);
    }
}
