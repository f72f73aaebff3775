//! Adapted polynomial coordinates, polydisc pseudo-balls and exponential balls.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpoly::CPoly;
use crate::domains::{Frame, ModelDomain, Point};
use crate::error::{FtlError, Result};
use crate::jet::{Jet, JetSpace};
use crate::linalg;
use crate::weights::FrameLists;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Polynomial chart `Φ` centered at `p` together with its polynomial inverse.
///
/// `Φ⁻¹(Z) = p + Σ_{i<n} Zᵢ Lᵢ(p) + (Zₙ − s(Z′)) N(p)` with a holomorphic shear `s`, and
/// `Φ(z) = (Z′, Wₙ + s(Z′))` where `(Z′, Wₙ) = V⁻¹(z − p)`.
#[derive(Clone, Debug)]
pub struct PolyMap {
    pub n: usize,
    pub center: Point,
    /// Columns `L₁(p), …, L_{n−1}(p), N(p)`.
    pub linear: DMatrix<C64>,
    pub linear_inv: DMatrix<C64>,
    /// Shear in the first `n − 1` variables (as a polynomial in `n` variables).
    pub shear: CPoly,
    pub forward: Vec<CPoly>,
    pub inverse: Vec<CPoly>,
    pub degree: usize,
}

impl PolyMap {
    /// Affine chart without shear.
    pub fn affine(center: &[C64], linear: DMatrix<C64>) -> Result<PolyMap> {
        let n = center.len();
        PolyMap::build(center, linear, CPoly::zero(n))
    }

    fn build(center: &[C64], linear: DMatrix<C64>, shear: CPoly) -> Result<PolyMap> {
        let n = center.len();
        let linear_inv = linalg::inverse(&linear)?;
        // W = V⁻¹(z − p)
        let w: Vec<CPoly> = (0..n)
            .map(|i| {
                let mut acc = CPoly::zero(n);
                for k in 0..n {
                    let lin = CPoly::var(n, k, false).sub(&CPoly::constant(n, center[k]));
                    acc = acc.add(&lin.scale(linear_inv[(i, k)]));
                }
                acc
            })
            .collect();
        let mut forward = w.clone();
        if !shear.is_zero() {
            let zb = vec![CPoly::zero(n); n];
            forward[n - 1] = w[n - 1].add(&shear.compose(&w, &zb));
        }
        let zs: Vec<CPoly> = (0..n).map(|k| CPoly::var(n, k, false)).collect();
        let normal_arg = zs[n - 1].sub(&shear);
        let inverse: Vec<CPoly> = (0..n)
            .map(|k| {
                let mut acc = CPoly::constant(n, center[k]);
                for i in 0..n - 1 {
                    acc = acc.add(&zs[i].scale(linear[(k, i)]));
                }
                acc.add(&normal_arg.scale(linear[(k, n - 1)]))
            })
            .collect();
        let degree = forward.iter().chain(&inverse).map(|p| p.degree()).max().unwrap_or(1).max(1);
        Ok(PolyMap { n, center: center.to_vec(), linear, linear_inv, shear, forward, inverse, degree })
    }

    /// `Φ(z)`.
    pub fn apply(&self, z: &[C64]) -> Point {
        let n = self.n;
        let d: Vec<C64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut w: Point = (0..n).map(|i| (0..n).map(|k| self.linear_inv[(i, k)] * d[k]).sum()).collect();
        if !self.shear.is_zero() {
            let sv = self.shear.eval(&w);
            w[n - 1] += sv;
        }
        w
    }

    /// `Φ⁻¹(Z)`.
    pub fn apply_inverse(&self, zz: &[C64]) -> Point {
        let n = self.n;
        let mut v = zz.to_vec();
        if !self.shear.is_zero() {
            v[n - 1] -= self.shear.eval(zz);
        }
        (0..n).map(|k| self.center[k] + (0..n).map(|i| self.linear[(k, i)] * v[i]).sum::<C64>()).collect()
    }

    /// Jacobian determinant of `Φ⁻¹` (constant: the shear is unipotent).
    pub fn inverse_jacobian(&self) -> C64 {
        self.linear.determinant()
    }

    /// Largest coefficient modulus of `Φ` and `Φ⁻¹`.
    pub fn max_coefficient(&self) -> f64 {
        self.forward.iter().chain(&self.inverse).map(|p| p.max_coeff()).fold(0.0, f64::max)
    }

    /// Largest `|Φ(Φ⁻¹(Z)) − Z|` over the given points.
    pub fn round_trip_residual(&self, pts: &[Point]) -> f64 {
        pts.iter()
            .map(|zz| {
                let back = self.apply(&self.apply_inverse(zz));
                back.iter().zip(zz).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Jets of `Φ⁻¹` at `Z = 0` (holomorphic; the conjugate jets are returned second).
    pub fn inverse_jets(&self, order: usize) -> (Vec<Jet>, Vec<Jet>) {
        let n = self.n;
        let space = JetSpace::get(2 * n, order);
        let (z, zb) = Jet::coordinates(&space, &vec![zero(); n]);
        let zeros: Vec<Jet> = (0..n).map(|_| Jet::zero(&space)).collect();
        let w: Vec<Jet> = self.inverse.iter().map(|p| p.eval_jets(&z, &zeros)).collect();
        let wb: Vec<Jet> = self.inverse.iter().map(|p| p.conj().eval_jets(&zeros, &zb)).collect();
        (w, wb)
    }
}

/// Measured quantities of an adapted chart.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptedReport {
    /// Largest pure tangential derivative `|∂^α(ρ∘Φ⁻¹)(0)|`, `|α| ≤ 2M`.
    pub pure_residual: f64,
    /// Measured constant of the derivative bound `|D^{αβ}(ρ∘Φ⁻¹)(0)| ≤ K′ min{δF^{(α+β)/2}, 1}`.
    pub k_prime: f64,
    /// Largest coefficient of `Φ` and `Φ⁻¹`.
    pub max_coefficient: f64,
    /// Largest derivative forbidden by the triangular normalization of field coefficients.
    pub triangular_defect: f64,
    pub round_trip_residual: f64,
    pub weights: Vec<f64>,
}

/// Builds the adapted chart of a frame at a boundary point.
pub fn adapted_coords(frame: &Frame, d: &ModelDomain, p: &[C64], m: usize) -> Result<PolyMap> {
    let n = d.n;
    if p.len() != n {
        return Err(FtlError::Dimension { expected: n, found: p.len() });
    }
    if d.eval_rho(p).abs() > 1e-9 {
        return Err(FtlError::Invalid(format!("center is not a boundary point (rho = {:e})", d.eval_rho(p))));
    }
    let linear = frame.matrix_at(p);
    if linear.determinant().norm() < 1e-12 {
        return Err(FtlError::SingularFrame(linear.determinant().norm()));
    }
    let s = n - 1;
    let order = 2 * m;
    let space = JetSpace::get(2 * s, order);
    let (zp, _) = Jet::coordinates(&space, &vec![zero(); s]);
    let nvec: Vec<C64> = (0..n).map(|k| linear[(k, n - 1)]).collect();
    let nu: f64 = {
        let r = frame.rho.clone();
        let g: Vec<C64> = (0..n).map(|k| r.derive(k, false).eval(p)).collect();
        g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    };
    let tangential: Vec<Jet> = (0..n)
        .map(|k| {
            let mut acc = Jet::constant(&space, p[k]);
            for i in 0..s {
                acc = acc.add(&zp[i].scale(linear[(k, i)]));
            }
            acc
        })
        .collect();
    let zb: Vec<Jet> = p.iter().map(|x| Jet::constant(&space, x.conj())).collect();
    let mut shear = Jet::zero(&space);
    for _ in 0..=order + 1 {
        let z: Vec<Jet> = (0..n).map(|k| tangential[k].sub(&shear.scale(nvec[k]))).collect();
        let g = d.rho_poly.eval_jets(&z, &zb);
        if g.is_zero(1e-300) {
            break;
        }
        shear = shear.add(&g.scale(C64::new(1.0 / nu, 0.0)));
    }
    let mut sp = CPoly::zero(n);
    for i in 0..space.len() {
        let c = shear.coeffs()[i];
        if c == zero() {
            continue;
        }
        let mono = space.monomial(i);
        let mut e = vec![0u8; 2 * n];
        e[..s].copy_from_slice(&mono[..s]);
        sp.add_term(e, c);
    }
    PolyMap::build(p, linear, sp)
}

/// Derivatives `D^{αβ}(ρ∘Φ⁻¹)(0)` for `|α + β| ≤ order`, keyed by `(α, β)` concatenated.
pub fn composed_derivatives(map: &PolyMap, d: &ModelDomain, order: usize) -> Vec<(Vec<u8>, C64)> {
    let (w, wb) = map.inverse_jets(order);
    let j = d.rho_poly.eval_jets(&w, &wb);
    let space = j.space().clone();
    (0..space.len())
        .filter(|&i| j.coeffs()[i].norm() > 0.0)
        .map(|i| (space.monomial(i).to_vec(), j.partial(space.monomial(i))))
        .collect()
}

/// Measures the adapted-chart conditions.
pub fn adapted_report(frame: &Frame, d: &ModelDomain, p: &[C64], delta: f64, m: usize, map: &PolyMap) -> Result<AdaptedReport> {
    let n = d.n;
    let s = n - 1;
    let fl = FrameLists::compute(frame, p, m)?;
    let fw = fl.slot_weights(delta);
    // pure tangential derivatives: restrict to Zₙ = 0 and Z̄ = 0 (resp. Z = 0)
    let pure_order = 2 * m;
    let space = JetSpace::get(2 * s, pure_order);
    let (zp, _) = Jet::coordinates(&space, &vec![zero(); s]);
    let zeros: Vec<Jet> = (0..n).map(|_| Jet::zero(&space)).collect();
    let mut zfull: Vec<Jet> = zp.clone();
    zfull.push(Jet::zero(&space));
    let w: Vec<Jet> = map.inverse.iter().map(|q| q.eval_jets(&zfull, &zeros)).collect();
    let wb: Vec<Jet> = p.iter().map(|x| Jet::constant(&space, x.conj())).collect();
    let g = d.rho_poly.eval_jets(&w, &wb);
    let mut pure_residual = 0.0f64;
    for i in 0..space.len() {
        let mono = space.monomial(i);
        if mono.iter().all(|&e| e == 0) {
            continue;
        }
        pure_residual = pure_residual.max(g.partial(mono).norm());
    }
    // condition (4)
    let mut k_prime = 0.0f64;
    for (mono, v) in composed_derivatives(map, d, m) {
        let tot: usize = mono.iter().map(|&e| e as usize).sum();
        if tot == 0 {
            continue;
        }
        let mut fpow = 1.0;
        for k in 0..n {
            let e = (mono[k] + mono[n + k]) as f64;
            fpow *= fw[k].powf(e / 2.0);
        }
        let bound = (delta * fpow).min(1.0);
        if bound > 0.0 {
            k_prime = k_prime.max(v.norm() / bound);
        } else if v.norm() > 1e-12 {
            k_prime = f64::INFINITY;
        }
    }
    let triangular_defect = triangular_defect(frame, map, m);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let pts: Vec<Point> = (0..32)
        .map(|_| (0..n).map(|_| C64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1))).collect())
        .collect();
    Ok(AdaptedReport {
        pure_residual,
        k_prime,
        max_coefficient: map.max_coefficient(),
        triangular_defect,
        round_trip_residual: map.round_trip_residual(&pts),
        weights: fw,
    })
}

/// Largest `|∂^α aᵢʲ(0)|` with `j < i < n` and `α` supported on `j+1..=i`, where `Lᵢ = Σ aᵢʲ ∂/∂Zⱼ`.
fn triangular_defect(frame: &Frame, map: &PolyMap, m: usize) -> f64 {
    let n = map.n;
    let s = n - 1;
    let (w, wb) = map.inverse_jets(m);
    let space = w[0].space().clone();
    let mut worst = 0.0f64;
    for i in 0..s {
        let coeffs: Vec<Jet> = frame.tangents[i].holo.iter().map(|c| c.eval_jets(&w, &wb)).collect();
        for j in 0..i {
            let phi = &map.forward[j];
            let mut a = Jet::zero(&space);
            for (k, ck) in coeffs.iter().enumerate() {
                let dphi = phi.derive(k, false);
                if dphi.is_zero() {
                    continue;
                }
                let dj = dphi.eval_jets(&w, &wb);
                ck.mul_acc(&dj, &mut a);
            }
            for idx in 0..space.len() {
                let mono = space.monomial(idx);
                let tot: usize = mono.iter().map(|&e| e as usize).sum();
                if tot == 0 {
                    continue;
                }
                let allowed = mono.iter().enumerate().all(|(v, &e)| e == 0 || (v > j && v <= i));
                if allowed {
                    worst = worst.max(a.partial(mono).norm());
                }
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallKind {
    PolydiscPullback,
    Exp,
}

#[derive(Clone, Debug)]
pub struct PseudoBall {
    pub kind: BallKind,
    pub center: Point,
    pub delta: f64,
    pub c: f64,
    pub radii: Vec<f64>,
    pub map: PolyMap,
    pub frame: Frame,
    pub window: f64,
}

impl PseudoBall {
    /// Pullback of the polydisc `|Zᵢ| < cFᵢ^{−1/2}` by the adapted chart.
    pub fn polydisc(frame: &Frame, d: &ModelDomain, p: &[C64], delta: f64, c: f64) -> Result<PseudoBall> {
        let map = adapted_coords(frame, d, p, d.m)?;
        PseudoBall::with_map(frame, d, p, delta, c, map, BallKind::PolydiscPullback)
    }

    /// Exponential ball `|uᵢ|, |u_{i+n}| < cFᵢ^{−1/2}`; the chart is kept for sampling convenience.
    pub fn exp(frame: &Frame, d: &ModelDomain, p: &[C64], delta: f64, c: f64) -> Result<PseudoBall> {
        let map = adapted_coords(frame, d, p, d.m)?;
        PseudoBall::with_map(frame, d, p, delta, c, map, BallKind::Exp)
    }

    pub fn with_map(frame: &Frame, d: &ModelDomain, p: &[C64], delta: f64, c: f64, map: PolyMap, kind: BallKind) -> Result<PseudoBall> {
        if !(delta > 0.0) || !(c > 0.0) {
            return Err(FtlError::Invalid("delta and c must be positive".into()));
        }
        let fw = FrameLists::compute(frame, p, d.m)?.slot_weights(delta);
        if fw.iter().any(|&f| f <= 0.0) {
            return Err(FtlError::Numerical("zero weight: ball radius is unbounded".into()));
        }
        let radii = fw.iter().map(|f| c / f.sqrt()).collect();
        Ok(PseudoBall { kind, center: p.to_vec(), delta, c, radii, map, frame: frame.clone(), window: d.window })
    }

    /// Ball with the same chart and frame at another depth and scale.
    pub fn rescaled(&self, radii_scale: &[f64], delta: f64, c: f64) -> PseudoBall {
        let mut b = self.clone();
        b.delta = delta;
        b.c = c;
        b.radii = radii_scale.iter().map(|r| c * r).collect();
        b
    }
}

/// Membership `|Φ(q)ᵢ| < rᵢ` (boundary excluded); exp balls invert the exponential map.
pub fn ball_membership(q: &[C64], b: &PseudoBall) -> bool {
    match b.kind {
        BallKind::PolydiscPullback => {
            let w = b.map.apply(q);
            w.iter().zip(&b.radii).all(|(x, r)| x.norm() < *r)
        }
        BallKind::Exp => match exp_inverse(&b.frame, &b.center, q, &b.radii, 64) {
            Ok(u) => {
                let n = b.center.len();
                (0..n).all(|i| u[i].abs() < b.radii[i] && u[i + n].abs() < b.radii[i])
            }
            Err(_) => false,
        },
    }
}

fn flow_velocity(frame: &Frame, z: &[C64], w: &[C64]) -> Point {
    let n = z.len();
    let mut v = vec![zero(); n];
    let fields = frame.tangents.iter().chain(std::iter::once(&frame.normal));
    for (wi, f) in w.iter().zip(fields) {
        if *wi == zero() {
            continue;
        }
        for k in 0..n {
            v[k] += 0.5 * wi * f.holo[k].eval(z);
        }
    }
    v
}

/// Endpoint at time 1 of the flow of `Σ uᵢ Re Lᵢ + u_{i+n} Im Lᵢ` (slot `n` is `N`) from `p`, by RK4.
pub fn exp_ball_point(frame: &Frame, p: &[C64], u: &[f64], steps: usize) -> Result<Point> {
    let n = p.len();
    if u.len() != 2 * n {
        return Err(FtlError::Dimension { expected: 2 * n, found: u.len() });
    }
    let w: Vec<C64> = (0..n).map(|i| C64::new(u[i], -u[i + n])).collect();
    let h = 1.0 / steps.max(1) as f64;
    let mut z = p.to_vec();
    let add = |a: &[C64], b: &[C64], t: f64| -> Point { a.iter().zip(b).map(|(x, y)| x + y * t).collect() };
    for _ in 0..steps.max(1) {
        let k1 = flow_velocity(frame, &z, &w);
        let k2 = flow_velocity(frame, &add(&z, &k1, h / 2.0), &w);
        let k3 = flow_velocity(frame, &add(&z, &k2, h / 2.0), &w);
        let k4 = flow_velocity(frame, &add(&z, &k3, h), &w);
        for k in 0..n {
            z[k] += (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]) * (h / 6.0);
        }
        if z.iter().any(|x| !x.re.is_finite() || !x.im.is_finite() || x.norm() > 1e6) {
            return Err(FtlError::Numerical("flow left the working window".into()));
        }
    }
    Ok(z)
}

/// Solves `exp_p(u) = q` by Newton iteration with a finite-difference Jacobian.
///
/// `scales` gives the natural size of each slot and sets the difference steps.
pub fn exp_inverse(frame: &Frame, p: &[C64], q: &[C64], scales: &[f64], steps: usize) -> Result<Vec<f64>> {
    let n = p.len();
    let v = frame.matrix_at(p);
    let dq: Vec<C64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let w0 = linalg::solve(&v, &dq)?;
    let mut u: Vec<f64> = vec![0.0; 2 * n];
    for i in 0..n {
        u[i] = 2.0 * w0[i].re;
        u[i + n] = -2.0 * w0[i].im;
    }
    let resid = |u: &[f64]| -> Result<Vec<f64>> {
        let e = exp_ball_point(frame, p, u, steps)?;
        Ok((0..n).flat_map(|k| [e[k].re - q[k].re, e[k].im - q[k].im]).collect())
    };
    let qscale = q.iter().chain(p).map(|x| x.norm()).fold(1.0, f64::max);
    for _ in 0..30 {
        let r = resid(&u)?;
        let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rn <= 1e-13 * qscale {
            return Ok(u);
        }
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for c in 0..2 * n {
            let h = 1e-6 * scales[c % n].max(u[c].abs()).max(1e-300);
            let mut up = u.clone();
            up[c] += h;
            let mut um = u.clone();
            um[c] -= h;
            let (rp, rm) = (resid(&up)?, resid(&um)?);
            for r_ in 0..2 * n {
                jac[(r_, c)] = (rp[r_] - rm[r_]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&nalgebra::DVector::from_vec(r.clone()))
            .ok_or_else(|| FtlError::Numerical("singular exponential Jacobian".into()))?;
        for c in 0..2 * n {
            u[c] -= step[c];
        }
    }
    let r = resid(&u)?;
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if rn <= 1e-9 * qscale {
        Ok(u)
    } else {
        Err(FtlError::Numerical(format!("exponential shooting did not converge (residual {rn:e})")))
    }
}

/// Uniform sample of the polydisc with the given radii.
pub fn sample_polydisc<R: Rng>(rng: &mut R, radii: &[f64]) -> Point {
    radii
        .iter()
        .map(|r| {
            let rad = r * rng.gen::<f64>().sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            C64::from_polar(rad, th)
        })
        .collect()
}

/// Empirical constants `α, β` with `B_exp^{αc} ⊂ B^c ⊂ B_exp^{βc}` on samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallEquivalence {
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    pub failures: usize,
}

pub fn ball_equivalence_check(b: &PseudoBall, samples: usize, seed: u64) -> Result<BallEquivalence> {
    let n = b.center.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = b.radii.clone();
    // normalized exp directions: box corners and random box points
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if 2 * n <= 8 {
        for mask in 0..(1usize << (2 * n)) {
            dirs.push((0..2 * n).map(|k| if mask >> k & 1 == 1 { 1.0 } else { -1.0 }).collect());
        }
    }
    for _ in 0..samples {
        dirs.push((0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let poly = PseudoBall { kind: BallKind::PolydiscPullback, ..b.clone() };
    let inside = |a: f64| -> bool {
        dirs.par_iter().all(|v| {
            let u: Vec<f64> = (0..2 * n).map(|k| a * v[k] * scale[k % n]).collect();
            match exp_ball_point(&b.frame, &b.center, &u, 64) {
                Ok(q) => ball_membership(&q, &poly),
                Err(_) => false,
            }
        })
    };
    let (mut lo, mut hi) = (0.0f64, 16.0f64);
    if inside(hi) {
        lo = hi;
    } else {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let alpha = lo;
    let pts: Vec<Point> = (0..samples).map(|_| sample_polydisc(&mut rng, &b.radii)).collect();
    let results: Vec<Option<f64>> = pts
        .par_iter()
        .map(|zz| {
            let q = b.map.apply_inverse(zz);
            exp_inverse(&b.frame, &b.center, &q, &scale, 64).ok().map(|u| {
                (0..n).map(|i| u[i].abs().max(u[i + n].abs()) / b.radii[i]).fold(0.0, f64::max)
            })
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    let beta = results.iter().flatten().fold(0.0f64, |a, &x| a.max(x));
    Ok(BallEquivalence { alpha, beta, samples, failures })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo volume of `Φ⁻¹(Δ) ∩ {|z| ≤ window}` weighted by `|det DΦ⁻¹|²`.
pub fn ball_volume(b: &PseudoBall, mc_samples: usize, seed: u64) -> VolumeEstimate {
    let n = b.center.len();
    let poly_vol: f64 = b.radii.iter().map(|r| std::f64::consts::PI * r * r).product();
    let jac = b.map.inverse_jacobian().norm_sqr();
    let chunks = 16usize;
    let per = mc_samples.div_ceil(chunks);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..per {
                let zz = sample_polydisc(&mut rng, &b.radii);
                let q = b.map.apply_inverse(&zz);
                let norm = q.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                let v = if norm <= b.window.max(1e-300) * (1.0 + 1e-12) || b.window <= 0.0 { jac } else { 0.0 };
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let total = (per * chunks) as f64;
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s / total;
    let var = (s2 / total - mean * mean).max(0.0);
    let _ = n;
    VolumeEstimate { value: poly_vol * mean, std_error: poly_vol * (var / total).sqrt(), samples: per * chunks }
}

/// Largest `|ρ(q)|/δ` over sampled ball points.
pub fn rho_range(d: &ModelDomain, b: &PseudoBall, samples: usize, seed: u64) -> f64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let zz = sample_polydisc(&mut rng, &b.radii);
            d.eval_rho(&b.map.apply_inverse(&zz)).abs() / b.delta
        })
        .fold(0.0, f64::max)
}

/// Largest `c ≤ 0.5` with `|ρ| ≤ δ/2` on the sampled ball `B^c(p,δ)`.
pub fn discover_c0(frame: &Frame, d: &ModelDomain, p: &[C64], delta: f64, samples: usize, seed: u64) -> Result<f64> {
    let base = PseudoBall::polydisc(frame, d, p, delta, 1.0)?;
    let unit = base.radii.clone();
    let ok = |c: f64| rho_range(d, &base.rescaled(&unit, delta, c), samples, seed) <= 0.5;
    if ok(0.5) {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `min_i Fᵢ(p,δ)·δ^{2/M}` for each `δ` of a grid.
pub fn weight_floor(frame: &Frame, p: &[C64], grid: &[f64], m: usize) -> Result<Vec<f64>> {
    let fl = FrameLists::compute(frame, p, m)?;
    Ok(grid
        .iter()
        .map(|&dl| {
            let w = fl.slot_weights(dl);
            w[..fl.s].iter().fold(f64::INFINITY, |a, &f| a.min(f)) * dl.powf(2.0 / m as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn reinhardt_domains_need_no_shear_at_origin() {
        for d in [ModelDomain::siegel(), ModelDomain::decoupled(), ModelDomain::herbort()] {
            let map = adapted_coords(&d.tangent_frame(), &d, &[c(0.0); 3], d.m).unwrap();
            assert!(map.shear.is_zero(), "{}", d.name);
        }
    }

    #[test]
    fn pure_term_is_removed() {
        let d = ModelDomain::from_expr("pure", "Re(z3) + |z1|^2 + |z2|^2 + Re(z1^2)", 3, 3, 2).unwrap();
        let p = [c(0.0); 3];
        let f = d.tangent_frame();
        let map = adapted_coords(&f, &d, &p, d.m).unwrap();
        assert!(!map.shear.is_zero());
        let r = adapted_report(&f, &d, &p, 0.01, d.m, &map).unwrap();
        assert!(r.pure_residual < 1e-10, "{}", r.pure_residual);
    }

    #[test]
    fn center_is_inside_and_radius_point_is_not() {
        let d = ModelDomain::siegel();
        let p = [c(0.0); 3];
        let b = PseudoBall::polydisc(&d.tangent_frame(), &d, &p, 0.01, 0.1).unwrap();
        assert!(ball_membership(&p, &b));
        let mut zz = vec![c(0.0); 3];
        zz[0] = c(b.radii[0]);
        assert!(!ball_membership(&b.map.apply_inverse(&zz), &b));
    }
}
