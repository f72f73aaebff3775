//! Localized domains `D = {r < 0}`, `r = ρ + φ(|z − O|²)` with the flat bump
//! `φ(x) = K₀e^{−1/(x−μ²)}` (zero for `x ≤ μ²`).
//!
//! Fields tangent to `r` are related to fields tangent to `ρ` through the projection `π` along the
//! integral curves of the real gradient of `ρ`. Pointwise this is [`project_field`] and
//! [`unproject_field`]. As smooth fields, a base field `L` is lifted to `L̃ = L − (Lr/Nr)N`, which is
//! tangent to `r` and coincides with `L` wherever the bump vanishes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cpoly::CPoly;
use crate::domains::{normal_field, Frame, LeviCheck, ModelDomain, Point, Provenance};
use crate::error::{FtlError, Result};
use crate::expr::{bump_value, SmoothExpr};
use crate::field::Field;
use crate::jet::JetSpace;
use crate::linalg;
use crate::weights::{eb1_from_lists, orthonormalize, Combination, ExtremalityCertificate, FrameLists};
use crate::C64;

/// RK4 steps used to follow the gradient flow between two level sets.
pub const FLOW_STEPS: usize = 16;
/// Largest `K₀` tried by the doubling search.
pub const MAX_K0: f64 = 1.0e12;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `φ^{(k)}(x)` for `k ≤ 4`.
pub fn bump_derivatives(mu: f64, k0: f64, x: f64, k: u32) -> Result<f64> {
    if k > 4 {
        return Err(FtlError::Invalid(format!("bump derivative order {k} above 4")));
    }
    Ok(bump_value(mu, k0, k, x))
}

#[derive(Clone, Debug)]
pub struct LocalizedDomain {
    pub base: ModelDomain,
    pub d: f64,
    pub mu: f64,
    pub k0: f64,
    /// The origin is `O = −origin·e_n`, on the inner real normal at `0`.
    pub origin: f64,
    pub r: SmoothExpr,
    /// Levi check of `r` on boundary points of `D` where the bump is active.
    pub levi: LeviCheck,
    /// Values of `K₀` tried by the doubling search, last one accepted.
    pub k0_trials: Vec<f64>,
    grad: Vec<CPoly>,
}

impl LocalizedDomain {
    /// `μ = 1.5d`; `K₀` doubles from 1 until the Levi form of `r` is positive at `samples` points of
    /// `∂D` with `|z − O| > μ`.
    pub fn new(base: ModelDomain, d: f64, origin: f64, samples: usize, seed: u64) -> Result<LocalizedDomain> {
        let mut k0 = 1.0;
        let mut trials = Vec::new();
        loop {
            trials.push(k0);
            let mut ld = LocalizedDomain::with_parameters(base.clone(), d, 1.5 * d, k0, origin)?;
            ld.levi = ld.bump_levi_check(samples, seed);
            if ld.levi.passed {
                ld.k0_trials = trials;
                return Ok(ld);
            }
            k0 *= 2.0;
            if k0 > MAX_K0 {
                return Err(FtlError::Numerical(format!(
                    "no K0 up to {MAX_K0:e} makes the bump region strictly pseudoconvex (min eigenvalue {:e})",
                    ld.levi.min_eigenvalue
                )));
            }
        }
    }

    /// Builds `r` for fixed parameters without any check.
    pub fn with_parameters(base: ModelDomain, d: f64, mu: f64, k0: f64, origin: f64) -> Result<LocalizedDomain> {
        if !(d > 0.0 && k0 > 0.0 && origin >= 0.0) {
            return Err(FtlError::Invalid(format!("bad bump parameters d = {d}, K0 = {k0}, origin = {origin}")));
        }
        if !(4.0 * d / 3.0 - 1e-15..=2.0 * d + 1e-15).contains(&mu) {
            return Err(FtlError::Invalid(format!("mu = {mu} outside [4d/3, 2d] for d = {d}")));
        }
        let n = base.n;
        let mut norm2 = CPoly::constant(n, c(origin * origin));
        for j in 0..n {
            norm2 = norm2.add(&CPoly::var(n, j, false).mul(&CPoly::var(n, j, true)));
        }
        let zn = CPoly::var(n, n - 1, false).add(&CPoly::var(n, n - 1, true));
        norm2 = norm2.add(&zn.scale(c(origin)));
        let r = base.rho.add(&SmoothExpr::bump(mu, k0, 0, SmoothExpr::poly(norm2)));
        let grad = (0..n).map(|j| base.rho_poly.derive(j, false)).collect();
        Ok(LocalizedDomain { base, d, mu, k0, origin, r, levi: LeviCheck::default(), k0_trials: vec![k0], grad })
    }

    pub fn n(&self) -> usize {
        self.base.n
    }

    /// `z − O`.
    pub fn centered(&self, z: &[C64]) -> Point {
        let mut w = z.to_vec();
        w[self.n() - 1] += c(self.origin);
        w
    }

    pub fn dist2(&self, z: &[C64]) -> f64 {
        self.centered(z).iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn phi(&self, z: &[C64], k: u32) -> f64 {
        bump_value(self.mu, self.k0, k, self.dist2(z))
    }

    pub fn eval_rho(&self, z: &[C64]) -> f64 {
        self.base.eval_rho(z)
    }

    pub fn eval_r(&self, z: &[C64]) -> f64 {
        self.base.eval_rho(z) + self.phi(z, 0)
    }

    /// `∂ρ/∂z_j` at `z`.
    pub fn drho(&self, z: &[C64]) -> Vec<C64> {
        self.grad.iter().map(|g| g.eval(z)).collect()
    }

    /// `∂r/∂z_j = ∂ρ/∂z_j + φ'(|z−O|²)·conj(z − O)_j`.
    pub fn dr(&self, z: &[C64]) -> Vec<C64> {
        let w = self.centered(z);
        let p1 = self.phi(z, 1);
        self.drho(z).into_iter().zip(&w).map(|(g, x)| g + x.conj() * p1).collect()
    }

    /// Unit complex normal `N = ρ_{z̄}/|∂ρ|` of `ρ` (holomorphic coefficients).
    pub fn normal_at(&self, z: &[C64]) -> Vec<C64> {
        let g = self.drho(z);
        let nrm = linalg::norm2(&g);
        g.iter().map(|x| x.conj() / nrm).collect()
    }

    /// Boundary point of `D` with tangential part `zt` and `Im z_n = t` (bisection on `Re z_n`).
    pub fn boundary_point(&self, zt: &[C64], t: f64) -> Result<Point> {
        let mut z = self.base.boundary_point(zt, t);
        let n = self.n();
        let top = z[n - 1].re;
        let eval = |x: f64, z: &mut Point| {
            z[n - 1] = C64::new(x, t);
            self.eval_r(z)
        };
        if eval(top, &mut z) <= 0.0 {
            return Ok(z);
        }
        let mut step = self.phi(&z, 0).max(1e-300);
        let mut lo = top - step;
        while eval(lo, &mut z) > 0.0 {
            step *= 2.0;
            lo = top - step;
            if step > 1e12 {
                return Err(FtlError::Numerical("no boundary point of D below the base boundary".into()));
            }
        }
        let mut hi = top;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if eval(mid, &mut z) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        z[n - 1] = C64::new(if eval(hi, &mut z).abs() < eval(lo, &mut z).abs() { hi } else { lo }, t);
        Ok(z)
    }

    /// Minimum Levi eigenvalue of `r` on the complex tangent space at `z`.
    pub fn levi_min_r(&self, z: &[C64]) -> f64 {
        let n = self.n();
        let jet = self.r.jet_at(&JetSpace::get(2 * n, 2), z);
        let h = jet.complex_hessian();
        let (g, _) = jet.gradient();
        let basis = tangent_basis(&g);
        let s = basis.len();
        let m = DMatrix::from_fn(s, s, |a, b| {
            let mut acc = c(0.0);
            for j in 0..n {
                for k in 0..n {
                    acc += h[j][k] * basis[a][j] * basis[b][k].conj();
                }
            }
            acc
        });
        let (vals, _, _) = linalg::hermitian_eigen_sorted(&m);
        vals.last().copied().unwrap_or(0.0)
    }

    /// Levi positivity of `r` at boundary points of `D` with `1.1μ ≤ |z − O| ≤ 2μ`.
    pub fn bump_levi_check(&self, samples: usize, seed: u64) -> LeviCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let mut min_eig = f64::INFINITY;
        let mut taken = 0;
        let mut attempts = 0;
        while taken < samples && attempts < 100 * samples.max(1) {
            attempts += 1;
            let radius = self.mu * rng.gen_range(1.1..2.0);
            let mut dir: Vec<f64> = (0..2 * n - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|x| *x *= radius / nrm);
            let zt: Vec<C64> = (0..n - 1).map(|j| C64::new(dir[2 * j], dir[2 * j + 1])).collect();
            let Ok(z) = self.boundary_point(&zt, dir[2 * n - 2]) else { continue };
            let d2 = self.dist2(&z);
            if d2 <= (1.1 * self.mu).powi(2) || d2 > (2.0 * self.mu).powi(2) {
                continue;
            }
            taken += 1;
            min_eig = min_eig.min(self.levi_min_r(&z));
        }
        LeviCheck { samples: taken, min_eigenvalue: min_eig, passed: taken == samples && min_eig > 0.0 }
    }

    fn rhs(&self, q: &[C64]) -> Result<Point> {
        let g: Vec<C64> = self.drho(q).into_iter().map(|x| x.conj() * 2.0).collect();
        let n2: f64 = g.iter().map(|x| x.norm_sqr()).sum();
        if !(n2 > 0.0) {
            return Err(FtlError::Numerical("gradient of rho vanishes".into()));
        }
        Ok(g.into_iter().map(|x| x / n2).collect())
    }

    /// Follows the normalized real-gradient flow of `ρ` (`dρ/ds = 1`) from `q` to the level `level`.
    pub fn flow_to_level(&self, q: &[C64], level: f64) -> Result<Point> {
        let mut x = q.to_vec();
        let h = (level - self.eval_rho(q)) / FLOW_STEPS as f64;
        if h != 0.0 {
            let axpy = |x: &[C64], k: &[C64], a: f64| -> Point { x.iter().zip(k).map(|(u, v)| u + v * a).collect() };
            for _ in 0..FLOW_STEPS {
                let k1 = self.rhs(&x)?;
                let k2 = self.rhs(&axpy(&x, &k1, 0.5 * h))?;
                let k3 = self.rhs(&axpy(&x, &k2, 0.5 * h))?;
                let k4 = self.rhs(&axpy(&x, &k3, h))?;
                for j in 0..x.len() {
                    x[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
                }
            }
        }
        let tol = 1e-14 * level.abs().max(1.0);
        for _ in 0..20 {
            let res = self.eval_rho(&x) - level;
            if res.abs() <= tol {
                break;
            }
            let k = self.rhs(&x)?;
            for j in 0..x.len() {
                x[j] -= k[j] * res;
            }
        }
        let res = (self.eval_rho(&x) - level).abs();
        if res > 1e-10 {
            return Err(FtlError::Numerical(format!("gradient flow residual {res:e}")));
        }
        Ok(x)
    }

    /// `π(q)`: the point of `∂Ω` on the flow line through `q`.
    pub fn project_to_boundary(&self, q: &[C64]) -> Result<Point> {
        self.flow_to_level(q, 0.0)
    }

    /// `π⁻¹(y)`: the point of `∂D` on the flow line through `y ∈ ∂Ω`.
    pub fn lift_to_domain(&self, y: &[C64]) -> Result<Point> {
        if self.phi(y, 0) == 0.0 {
            return Ok(y.to_vec());
        }
        let at = |s: f64| -> Result<(Point, f64)> {
            let x = self.flow_to_level(y, s)?;
            let v = self.eval_r(&x);
            Ok((x, v))
        };
        let mut lo = -2.0 * self.phi(y, 0);
        let mut flo = at(lo)?;
        while flo.1 > 0.0 {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(FtlError::Numerical("flow line does not reach the boundary of D".into()));
            }
            flo = at(lo)?;
        }
        let mut hi = 0.0;
        let mut best = flo;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = at(mid)?;
            if fm.1.abs() < best.1.abs() {
                best = fm.clone();
            }
            if fm.1 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(best.0)
    }

    /// `L̃ = L − (Lr/Nr)N`: the lift of a field of the base domain to a field tangent to `r`.
    pub fn lift_field(&self, l: &Field) -> Field {
        let nf = normal_field(&self.base.rho);
        let lr = l.apply(&self.r);
        let nr = nf.apply(&self.r);
        let beta = lr.mul(&SmoothExpr::recip(&nr)).scale(c(-1.0));
        l.add(&nf.times(&beta))
    }
}

/// Orthonormal basis of `{v : Σ vⱼgⱼ = 0}`.
fn tangent_basis(g: &[C64]) -> Vec<Vec<C64>> {
    let n = g.len();
    let k = (0..n).max_by(|&a, &b| g[a].norm().partial_cmp(&g[b].norm()).unwrap()).unwrap_or(0);
    let raw: Vec<Vec<C64>> = (0..n)
        .filter(|&i| i != k)
        .map(|i| {
            let mut v = vec![c(0.0); n];
            v[i] = c(1.0);
            v[k] = -g[i] / g[k];
            v
        })
        .collect();
    gram_schmidt(&[], &raw)
}

/// Orthonormalizes `vs` against `fixed` (assumed orthonormal) and each other, dropping dependent vectors.
fn gram_schmidt(fixed: &[Vec<C64>], vs: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        let scale = linalg::norm2(v);
        for _ in 0..2 {
            for u in fixed.iter().chain(out.iter()) {
                let p = linalg::dot(&w, u);
                for (x, y) in w.iter_mut().zip(u) {
                    *x -= p * y;
                }
            }
        }
        let nrm = linalg::norm2(&w);
        if nrm > 1e-10 * scale.max(1e-300) {
            out.push(w.into_iter().map(|x| x / nrm).collect());
        }
    }
    out
}

/// Orthonormal basis of the orthogonal complement of `span(cons)` in `Cˢ`.
fn complement(cons: &[Vec<C64>], s: usize) -> Vec<Vec<C64>> {
    let fixed = gram_schmidt(&[], cons);
    let e: Vec<Vec<C64>> = (0..s).map(|i| (0..s).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect()).collect();
    gram_schmidt(&fixed, &e)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldProjection {
    pub point: Point,
    pub field: Vec<C64>,
    pub beta: f64,
    /// `−⟨L^ρ, z − O⟩φ'(|z − O|²)/Nρ` at the `∂D` point.
    pub beta_formula: C64,
}

/// `L^ρ = L − βN` at `y = π(x)`, `β = (L ρ)(y)/(Nρ)(y)`; `a` are the holomorphic coefficients of `L` at `x`.
pub fn project_field(ld: &LocalizedDomain, x: &[C64], a: &[C64]) -> Result<FieldProjection> {
    let y = ld.project_to_boundary(x)?;
    let g = ld.drho(&y);
    let nv = ld.normal_at(&y);
    let nrho: C64 = nv.iter().zip(&g).map(|(u, v)| u * v).sum();
    let beta_c: C64 = a.iter().zip(&g).map(|(u, v)| u * v).sum::<C64>() / nrho;
    let field: Vec<C64> = a.iter().zip(&nv).map(|(u, v)| u - beta_c * v).collect();
    let w = ld.centered(x);
    let beta_formula = -linalg::dot(&field, &w) * ld.phi(x, 1) / nrho;
    Ok(FieldProjection { point: y, field, beta: beta_c.norm(), beta_formula })
}

/// Inverse of [`project_field`]: `L̃ = L^ρ + β̃N(y)` at `x = π⁻¹(y)`, tangent to `r`.
pub fn unproject_field(ld: &LocalizedDomain, y: &[C64], b: &[C64]) -> Result<FieldProjection> {
    let x = ld.lift_to_domain(y)?;
    let dr = ld.dr(&x);
    let nv = ld.normal_at(y);
    let nr: C64 = nv.iter().zip(&dr).map(|(u, v)| u * v).sum();
    let br: C64 = b.iter().zip(&dr).map(|(u, v)| u * v).sum();
    let beta = -br / nr;
    let field: Vec<C64> = b.iter().zip(&nv).map(|(u, v)| u + beta * v).collect();
    let g = ld.drho(y);
    let nrho: C64 = nv.iter().zip(&g).map(|(u, v)| u * v).sum();
    let beta_formula = -linalg::dot(b, &ld.centered(&x)) * ld.phi(&x, 1) / nrho;
    Ok(FieldProjection { point: x, field, beta: beta.norm(), beta_formula })
}

/// `F^φ = φ'(|z|²)/δ + |⟨L^ρ∘π, z⟩|²φ''(|z|²)/δ + δ^{−1/M}`; `lrho` holds the coefficients of `L^ρ` at `π(z)`.
pub fn fphi_weight(ld: &LocalizedDomain, lrho: &[C64], z: &[C64], delta: f64, m: usize) -> f64 {
    let pair = linalg::dot(lrho, &ld.centered(z)).norm_sqr();
    ld.phi(z, 1) / delta + pair * ld.phi(z, 2) / delta + delta.powf(-1.0 / m as f64)
}

/// The full sum `Σ_{k≤M/2}(φ^{(k)}/δ)^{1/k} + |⟨L^ρ∘π, z⟩|²Σ_{2≤k≤M}|φ^{(k)}/δ|^{2/k} + δ^{−1/M}`.
pub fn fphi_tilde(ld: &LocalizedDomain, lrho: &[C64], z: &[C64], delta: f64, m: usize) -> f64 {
    let x = ld.dist2(z);
    let d = |k: usize| bump_value(ld.mu, ld.k0, k as u32, x).abs() / delta;
    let first: f64 = (1..=m / 2).map(|k| d(k).powf(1.0 / k as f64)).sum();
    let second: f64 = (2..=m).map(|k| d(k).powf(2.0 / k as f64)).sum();
    let pair = linalg::dot(lrho, &ld.centered(z)).norm_sqr();
    first + pair * second + delta.powf(-1.0 / m as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepChoice {
    /// The orthogonal completion `T` of the base frame.
    Completion,
    /// The constrained minimizer `W`.
    Minimizer,
}

/// Summary of the descending construction at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalFrameReport {
    pub p: Point,
    pub q: Point,
    pub delta: f64,
    /// Coefficient rows of `L^ρᵢ` over the base frame (orthonormal at `q`).
    pub rows: Vec<Vec<C64>>,
    pub choices: Vec<StepChoice>,
    /// `F(Lᵢ^Ω, q, δ)`.
    pub base_weights: Vec<f64>,
    /// `F^{ρφ}(Lᵢ^ρ)`.
    pub fphi_rho: Vec<f64>,
    /// Measured constants for the three ordering properties of the constructed fields.
    pub k_orthogonal: f64,
    pub k_descending: f64,
    pub k_base: f64,
    /// Largest ratio of `F^{ρφ}` over random alternative completions `T` versus the chosen one.
    pub completion_spread: f64,
    /// `|L̃ᵢ(p)|` before normalization.
    pub lift_norms: Vec<f64>,
}

impl LocalFrameReport {
    pub fn k_prime(&self) -> f64 {
        self.k_orthogonal.max(self.k_descending).max(self.k_base)
    }
}

#[derive(Clone, Debug)]
pub struct LocalFrame {
    pub report: LocalFrameReport,
    /// `L^ρᵢ` as constant recombinations of the base frame.
    pub rho_frame: Frame,
    /// Normalized lifts `L̃ᵢ` tangent to `r`, with the normal of `r`.
    pub frame: Frame,
}

/// `F^{ρφ}(L) = F(L,q,δ) + φ'(|p|²)/δ + |⟨L(q),p⟩|²φ''(|p|²)/δ` for `L = Σ aᵢLᵢ^Ω`.
fn fphi_rho(fl: &FrameLists, g: &[C64], a: &[C64], phi1: f64, phi2: f64, delta: f64) -> f64 {
    let pair: C64 = a.iter().zip(g).map(|(x, y)| x * y).sum();
    fl.direction(&Combination::tangent(a.to_vec())).weight(delta) + phi1 / delta + pair.norm_sqr() * phi2 / delta
}

fn random_unit_in<R: Rng>(rng: &mut R, basis: &[Vec<C64>], s: usize) -> Vec<C64> {
    let mut v = vec![c(0.0); s];
    for b in basis {
        let w = C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        for (x, y) in v.iter_mut().zip(b) {
            *x += w * y;
        }
    }
    let nrm = linalg::norm2(&v);
    v.into_iter().map(|x| x / nrm).collect()
}

/// Descending construction of the localized frame at `p ∈ ∂D` from a base frame orthonormal at `π(p)`.
pub fn build_local_frame(ld: &LocalizedDomain, p: &[C64], delta: f64, omega: &Frame, seed: u64) -> Result<LocalFrame> {
    let m = ld.base.m;
    let q = ld.project_to_boundary(p)?;
    let s = omega.tangents.len();
    let hv: Vec<Vec<C64>> = omega.tangents.iter().map(|f| f.eval(&q).0).collect();
    for i in 0..s {
        for j in 0..s {
            let want = if i == j { 1.0 } else { 0.0 };
            let got = linalg::dot(&hv[i], &hv[j]);
            if (got - c(want)).norm() > 1e-8 {
                return Err(FtlError::Invalid("base frame is not orthonormal at the projected point".into()));
            }
        }
    }
    let fl = FrameLists::compute(omega, &q, m)?;
    let base_weights: Vec<f64> = (0..s).map(|i| fl.direction(&Combination::slot(s, i)).weight(delta)).collect();
    let pz = ld.centered(p);
    let g: Vec<C64> = hv.iter().map(|v| linalg::dot(v, &pz)).collect();
    let phi1 = ld.phi(p, 1);
    let phi2 = ld.phi(p, 2);
    let frf = |a: &[C64]| fphi_rho(&fl, &g, a, phi1, phi2, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let hyper = if linalg::norm2(&g) > 0.0 { vec![g.iter().map(|x| x.conj()).collect::<Vec<C64>>()] } else { Vec::new() };
    let mut rows: Vec<Vec<C64>> = vec![Vec::new(); s];
    let mut choices = vec![StepChoice::Completion; s];
    let mut chosen: Vec<Vec<C64>> = Vec::new();
    let mut spread = 1.0f64;
    for k in 1..=s {
        let t = s - k;
        let mut cons = hyper.clone();
        cons.extend(chosen.iter().cloned());
        let h = complement(&cons, s);
        let minimizer = if h.is_empty() {
            None
        } else {
            let dim = h.len();
            let q_form = DMatrix::from_fn(dim, dim, |a, b| {
                (0..t).map(|i| h[a][i].conj() * h[b][i] * base_weights[i]).sum::<C64>()
            });
            let (vals, vecs, _) = linalg::hermitian_eigen_sorted(&q_form);
            let col = dim - 1;
            let mut w = vec![c(0.0); s];
            for (a, ha) in h.iter().enumerate() {
                for (x, y) in w.iter_mut().zip(ha) {
                    *x += vecs[(a, col)] * y;
                }
            }
            Some((w, vals[col].max(0.0)))
        };
        let tail: Vec<Vec<C64>> =
            (t..s).map(|i| (0..s).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect()).collect();
        let fixed = gram_schmidt(&[], &chosen);
        let gspace = gram_schmidt(&fixed, &tail);
        let Some(tv) = gspace.first().cloned() else {
            return Err(FtlError::Invalid(format!("completion space for slot {t} is empty")));
        };
        if gspace.len() > 1 {
            let ft = frf(&tv);
            for _ in 0..8 {
                let alt = random_unit_in(&mut rng, &gspace, s);
                let fa = frf(&alt);
                spread = spread.max(fa / ft).max(ft / fa);
            }
        }
        let pair: C64 = tv.iter().zip(&g).map(|(x, y)| x * y).sum();
        let threshold = phi2 / delta * pair.norm_sqr();
        let (row, choice) = match minimizer {
            Some((w, mw)) if mw < threshold => (w, StepChoice::Minimizer),
            _ => (tv, StepChoice::Completion),
        };
        chosen.push(row.clone());
        rows[t] = row;
        choices[t] = choice;
    }

    let fphi_vals: Vec<f64> = rows.iter().map(|r| frf(r)).collect();
    let mut k_descending = 0.0f64;
    for i in 0..s.saturating_sub(1) {
        k_descending = k_descending.max(fphi_vals[i + 1] / fphi_vals[i]);
    }
    let k_base = (0..s).map(|i| base_weights[i] / fphi_vals[i]).fold(0.0, f64::max);
    let mut k_orthogonal = 0.0f64;
    for i in 0..s {
        let basis = complement(&rows[i + 1..], s);
        for _ in 0..16 {
            let l = random_unit_in(&mut rng, &basis, s);
            k_orthogonal = k_orthogonal.max(fphi_vals[i] / frf(&l));
        }
    }

    let rho_frame = omega.recombine(&rows, Provenance::Localized);
    let mut tangents = Vec::with_capacity(s);
    let mut lift_norms = Vec::with_capacity(s);
    for f in &rho_frame.tangents {
        let lifted = ld.lift_field(f);
        let nrm = linalg::norm2(&lifted.eval(p).0);
        if !(nrm > 0.0) {
            return Err(FtlError::SingularFrame(nrm));
        }
        lift_norms.push(nrm);
        tangents.push(lifted.scale(c(1.0 / nrm)));
    }
    let frame = Frame {
        rho: ld.r.clone(),
        tangents,
        normal: normal_field(&ld.r),
        provenance: Provenance::Localized,
        eigenvalues: None,
        degenerate: false,
        coefficients: None,
    };
    Ok(LocalFrame {
        report: LocalFrameReport {
            p: p.to_vec(),
            q,
            delta,
            rows,
            choices,
            base_weights,
            fphi_rho: fphi_vals,
            k_orthogonal,
            k_descending,
            k_base,
            completion_spread: spread,
            lift_norms,
        },
        rho_frame,
        frame,
    })
}

/// Base frame for the construction: the canonical frame orthonormalized at `π(p)`.
pub fn base_frame_at(ld: &LocalizedDomain, p: &[C64], delta: f64) -> Result<Frame> {
    let q = ld.project_to_boundary(p)?;
    orthonormalize(&ld.base.tangent_frame(), &q, delta, ld.base.m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightComparison {
    /// Coefficients over the normalized lifted fields.
    pub combination: Vec<C64>,
    /// `F(L̃, z, δ)` on `r`.
    pub left: f64,
    /// `F(L^ρ, π(z), δ) + F^φ(L̃, z, δ)`.
    pub right: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedWeightReport {
    pub p: Point,
    pub delta: f64,
    pub dist: f64,
    pub comparisons: Vec<WeightComparison>,
    pub max_ratio: f64,
}

/// Both sides of the localized weight comparison for each frame field and `combos` random combinations.
pub fn localized_weight_check(ld: &LocalizedDomain, lf: &LocalFrame, combos: usize, seed: u64) -> Result<LocalizedWeightReport> {
    let m = ld.base.m;
    let p = &lf.report.p;
    let q = &lf.report.q;
    let delta = lf.report.delta;
    let s = lf.frame.tangents.len();
    let left_lists = FrameLists::compute(&lf.frame, p, m)?;
    let right_lists = FrameLists::compute(&lf.rho_frame, q, m)?;
    let rho_vals: Vec<Vec<C64>> = lf.rho_frame.tangents.iter().map(|f| f.eval(q).0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<C64>> = (0..s).map(|i| (0..s).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect()).collect();
    let all: Vec<Vec<C64>> = dirs.clone();
    for _ in 0..combos {
        dirs.push(random_unit_in(&mut rng, &all, s));
    }
    let mut comparisons = Vec::with_capacity(dirs.len() + 1);
    for b in dirs {
        let left = left_lists.direction(&Combination::tangent(b.clone())).weight(delta);
        let scaled: Vec<C64> = b.iter().zip(&lf.report.lift_norms).map(|(x, w)| x / w).collect();
        let mut lrho = vec![c(0.0); ld.n()];
        for (a, v) in scaled.iter().zip(&rho_vals) {
            for (x, y) in lrho.iter_mut().zip(v) {
                *x += a * y;
            }
        }
        let right = right_lists.direction(&Combination::tangent(scaled)).weight(delta) + fphi_weight(ld, &lrho, p, delta, m);
        let ratio = (left / right).max(right / left);
        comparisons.push(WeightComparison { combination: b, left, right, ratio });
    }
    let normal = Combination::normal(s);
    let left = left_lists.direction(&normal).weight(delta);
    let right = right_lists.direction(&normal).weight(delta);
    comparisons.push(WeightComparison { combination: vec![c(0.0); s], left, right, ratio: (left / right).max(right / left) });
    let max_ratio = comparisons.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Ok(LocalizedWeightReport { p: p.clone(), delta, dist: ld.dist2(p).sqrt(), comparisons, max_ratio })
}

/// Boundary points of `D` along a fixed generic tangential direction with `|z − O| = f·μ`.
pub fn straddle_points(ld: &LocalizedDomain, factors: &[f64]) -> Result<Vec<Point>> {
    let n = ld.n();
    let raw: Vec<C64> = (0..n - 1).map(|j| C64::new(0.6 - 0.25 * j as f64, 0.3 + 0.35 * j as f64)).collect();
    let nrm = linalg::norm2(&raw);
    let u: Vec<C64> = raw.iter().map(|x| x / nrm).collect();
    factors
        .iter()
        .map(|&f| {
            let target = (f * ld.mu).powi(2);
            // |z − O| grows with the tangential radius; bisect on it.
            let (mut lo, mut hi) = (0.0, 4.0 * f * ld.mu + 1.0);
            let mut z = ld.boundary_point(&vec![c(0.0); n - 1], 0.0)?;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let zt: Vec<C64> = u.iter().map(|x| x * mid).collect();
                z = ld.boundary_point(&zt, 0.0)?;
                if ld.dist2(&z) > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(z)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub delta: f64,
    pub reports: Vec<LocalizedWeightReport>,
    pub max_ratio: f64,
    pub k_prime: f64,
}

/// The localized weight comparison over `straddle_points` for each `δ`.
pub fn localization_sweep(ld: &LocalizedDomain, deltas: &[f64], factors: &[f64], combos: usize, seed: u64) -> Result<Vec<LocalizationRow>> {
    use rayon::prelude::*;
    let pts = straddle_points(ld, factors)?;
    deltas
        .iter()
        .map(|&delta| {
            let out: Result<Vec<(LocalizedWeightReport, f64)>> = pts
                .par_iter()
                .enumerate()
                .map(|(k, p)| {
                    let omega = base_frame_at(ld, p, delta)?;
                    let lf = build_local_frame(ld, p, delta, &omega, seed.wrapping_add(k as u64))?;
                    let rep = localized_weight_check(ld, &lf, combos, seed.wrapping_add(1000 + k as u64))?;
                    Ok((rep, lf.report.k_prime()))
                })
                .collect();
            let out = out?;
            let max_ratio = out.iter().map(|(r, _)| r.max_ratio).fold(0.0, f64::max);
            let k_prime = out.iter().map(|(_, k)| *k).fold(0.0, f64::max);
            Ok(LocalizationRow { delta, reports: out.into_iter().map(|(r, _)| r).collect(), max_ratio, k_prime })
        })
        .collect()
}

/// `check_eb1` on localized frames built at `count` boundary points of `D` around `|z − O| = μ`.
pub fn localized_eb1(ld: &LocalizedDomain, delta: f64, count: usize, samples: usize, seed: u64) -> Result<Vec<ExtremalityCertificate>> {
    use rayon::prelude::*;
    let factors: Vec<f64> = (0..count).map(|k| 0.7 + 0.8 * k as f64 / (count.max(2) - 1) as f64).collect();
    let pts = straddle_points(ld, &factors)?;
    pts.par_iter()
        .enumerate()
        .map(|(k, p)| {
            let omega = base_frame_at(ld, p, delta)?;
            let lf = build_local_frame(ld, p, delta, &omega, seed.wrapping_add(k as u64))?;
            let fl = FrameLists::compute(&lf.frame, p, ld.base.m)?;
            Ok(eb1_from_lists(&fl, delta, samples, seed.wrapping_add(k as u64)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_flat_at_the_junction() {
        for k in 0..=4 {
            assert_eq!(bump_derivatives(0.3, 2.0, 0.09, k).unwrap(), 0.0);
        }
        assert!(bump_derivatives(0.3, 2.0, 0.5, 5).is_err());
    }

    #[test]
    fn r_equals_rho_inside_the_ball() {
        let ld = LocalizedDomain::with_parameters(ModelDomain::herbort(), 0.2, 0.3, 4.0, 0.0).unwrap();
        let z = vec![C64::new(0.1, 0.05), C64::new(-0.1, 0.1), C64::new(-0.01, 0.2)];
        assert_eq!(ld.r.eval(&z).re, ld.base.rho.eval(&z).re);
    }
}
