//! Rigid polynomial model domains `{Re z_n + P(z', z̄') < 0}`, their frames and Levi forms.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cpoly::CPoly;
use crate::error::{FtlError, Result};
use crate::expr::SmoothExpr;
use crate::field::Field;
use crate::jet::{Jet, JetSpace};
use crate::jetfield::FieldJet;
use crate::linalg;
use crate::parse::{parse_domain, parse_expr, DomainSpec};

/// A point of `Cⁿ`.
pub type Point = Vec<C64>;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LeviCheck {
    pub samples: usize,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct ModelDomain {
    pub name: String,
    pub n: usize,
    /// `P` as a polynomial in all `n` variables (independent of `z_n`).
    pub p: CPoly,
    pub rho_poly: CPoly,
    pub rho: SmoothExpr,
    pub m: usize,
    pub window: f64,
    pub levi_check: LeviCheck,
    /// Internal slot of each input variable (the input normal variable maps to `n − 1`).
    pub input_slots: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Canonical,
    LeviEigen,
    User,
    Localized,
}

/// Tangent fields `L₁..L_{n−1}` and the normal `N` of a defining function.
#[derive(Clone, Debug)]
pub struct Frame {
    pub rho: SmoothExpr,
    pub tangents: Vec<Field>,
    pub normal: Field,
    pub provenance: Provenance,
    /// Levi eigenvalues (descending) for eigen frames.
    pub eigenvalues: Option<Vec<f64>>,
    /// True when the recombination was not unique (tied eigenvalues).
    pub degenerate: bool,
    /// Coefficients of each tangent field in the canonical frame, when known.
    pub coefficients: Option<Vec<Vec<C64>>>,
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `N = |∂ρ|^{-1} Σ ρ_{z̄_k} ∂/∂z_k` for an arbitrary smooth defining function.
pub fn normal_field(rho: &SmoothExpr) -> Field {
    let n = rho.dim();
    let drho_bar: Vec<SmoothExpr> = (0..n).map(|k| rho.derive(k, true)).collect();
    let norm2 = SmoothExpr::sum((0..n).map(|k| rho.derive(k, false).mul(&drho_bar[k])).collect());
    let inv = SmoothExpr::recip_sqrt(norm2);
    Field::type10(drho_bar.iter().map(|d| d.mul(&inv)).collect())
}

impl ModelDomain {
    /// Builds a domain from `P` already expressed with the normal in slot `n`.
    pub fn from_p(name: &str, p: CPoly, m: usize, window: f64) -> Result<ModelDomain> {
        let n = p.dim();
        if n < 2 {
            return Err(FtlError::Domain("dimension must be at least 2".into()));
        }
        if !(2..=8).contains(&m) {
            return Err(FtlError::TypeBound(m));
        }
        if !p.is_real_valued(1e-12) {
            return Err(FtlError::Domain("P is not real-valued".into()));
        }
        for (mono, _) in p.terms() {
            if mono[n - 1] > 0 || mono[2 * n - 1] > 0 {
                return Err(FtlError::Domain("P must not depend on the normal coordinate".into()));
            }
            let deg: usize = mono.iter().map(|&e| e as usize).sum();
            if deg == 0 {
                return Err(FtlError::Domain("P(0) must vanish".into()));
            }
            if deg == 1 {
                return Err(FtlError::Domain("the gradient of P must vanish at 0".into()));
            }
        }
        let re_zn = CPoly::var(n, n - 1, false).add(&CPoly::var(n, n - 1, true)).scale(c(0.5));
        let rho_poly = re_zn.add(&p);
        let mut d = ModelDomain {
            name: name.to_string(),
            n,
            p,
            rho: SmoothExpr::poly(rho_poly.clone()),
            rho_poly,
            m,
            window,
            levi_check: LeviCheck::default(),
            input_slots: (0..n).collect(),
        };
        d.levi_check = d.pseudoconvexity_check(200, 0x5eed);
        Ok(d)
    }

    /// Builds a domain from a parsed description, permuting the normal slot to `n`.
    pub fn from_spec(spec: &DomainSpec) -> Result<ModelDomain> {
        let n = spec.n;
        if spec.normal_slot == 0 || spec.normal_slot > n {
            return Err(FtlError::Domain(format!("normal_slot {} outside 1..={n}", spec.normal_slot)));
        }
        let ast = parse_expr(&spec.p)?;
        if ast.num_vars() > n {
            return Err(FtlError::Domain(format!("expression uses z{} but n = {n}", ast.num_vars())));
        }
        let e = ast.to_cpoly(n)?;
        let s = spec.normal_slot - 1;
        let mut perm = vec![0usize; n];
        let mut next = 0;
        for (k, slot) in perm.iter_mut().enumerate() {
            if k == s {
                *slot = n - 1;
            } else {
                *slot = next;
                next += 1;
            }
        }
        let e = e.permute(&perm);
        let re_zn = CPoly::var(n, n - 1, false).add(&CPoly::var(n, n - 1, true)).scale(c(0.5));
        let depends_on_normal =
            e.terms().any(|(mono, _)| mono[n - 1] > 0 || mono[2 * n - 1] > 0);
        let p = if depends_on_normal { e.sub(&re_zn) } else { e };
        let mut d = ModelDomain::from_p(&spec.name, p.prune(0.0), spec.m, spec.window)?;
        d.input_slots = perm;
        Ok(d)
    }

    /// Internal slot of the one-based input variable `k`.
    pub fn internal_slot(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.n {
            return Err(FtlError::Domain(format!("variable z{k} outside z1..z{}", self.n)));
        }
        Ok(self.input_slots[k - 1])
    }

    /// Parses a JSON description (see [`DomainSpec`]).
    pub fn from_json(text: &str) -> Result<ModelDomain> {
        let (spec, _) = parse_domain(text)?;
        ModelDomain::from_spec(&spec)
    }

    /// Builds a domain from a defining-function expression.
    pub fn from_expr(name: &str, expr: &str, n: usize, normal_slot: usize, m: usize) -> Result<ModelDomain> {
        ModelDomain::from_spec(&DomainSpec {
            name: name.into(),
            n,
            normal_slot,
            p: expr.into(),
            m,
            window: 1.0,
        })
    }

    /// `Re z₃ + |z₁|² + |z₂|²`.
    pub fn siegel() -> ModelDomain {
        ModelDomain::from_expr("siegel", "Re(z3) + |z1|^2 + |z2|^2", 3, 3, 2).expect("catalog")
    }

    /// `Re z₃ + |z₁|⁴ + |z₂|⁶`.
    pub fn decoupled() -> ModelDomain {
        ModelDomain::from_expr("decoupled", "Re(z3) + |z1|^4 + |z2|^6", 3, 3, 6).expect("catalog")
    }

    /// `Re z₁ + |z₂|⁶ + |z₃|⁶ + |z₂|²|z₃|²` (normal in the first slot of the input).
    pub fn herbort() -> ModelDomain {
        ModelDomain::from_expr("herbort", "Re(z1) + |z2|^6 + |z3|^6 + |z2|^2*|z3|^2", 3, 1, 6).expect("catalog")
    }

    /// `Re z₃ + |z₁+z₂|² + |z₁−z₂|⁴`: a Levi form diagonal only after rotation.
    pub fn mixed() -> ModelDomain {
        ModelDomain::from_expr("mixed", "Re(z3) + |z1 + z2|^2 + |z1 - z2|^4", 3, 3, 4).expect("catalog")
    }

    /// `Re z₃ + 2|z₁|² + |z₂|² + |z₁|²|z₂|²`: strictly pseudoconvex with varying Levi eigenvectors.
    pub fn diagonal() -> ModelDomain {
        ModelDomain::from_expr("diagonal", "Re(z3) + 2*|z1|^2 + |z2|^2 + |z1|^2*|z2|^2", 3, 3, 4).expect("catalog")
    }

    pub fn catalog() -> Vec<ModelDomain> {
        vec![
            ModelDomain::siegel(),
            ModelDomain::decoupled(),
            ModelDomain::herbort(),
            ModelDomain::mixed(),
            ModelDomain::diagonal(),
        ]
    }

    pub fn by_name(name: &str) -> Option<ModelDomain> {
        ModelDomain::catalog().into_iter().find(|d| d.name == name)
    }

    pub fn eval_rho(&self, z: &[C64]) -> f64 {
        self.rho_poly.eval(z).re
    }

    /// Boundary point with tangential part `zt` and `Im z_n = t`.
    pub fn boundary_point(&self, zt: &[C64], t: f64) -> Point {
        let mut z: Point = zt.to_vec();
        z.push(C64::new(0.0, 0.0));
        let pv = self.p.eval(&z).re;
        z[self.n - 1] = C64::new(-pv, t);
        z
    }

    /// Interior point at depth `delta` below a boundary point (`ρ = −δ`).
    pub fn interior_point(&self, zt: &[C64], t: f64, delta: f64) -> Point {
        let mut z = self.boundary_point(zt, t);
        z[self.n - 1] -= c(delta);
        z
    }

    /// Canonical frame `L_i = ∂/∂z_i − 2(∂P/∂z_i)∂/∂z_n` with the normalized normal.
    pub fn tangent_frame(&self) -> Frame {
        let n = self.n;
        let mut tangents = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let mut holo = vec![SmoothExpr::zero(n); n];
            holo[i] = SmoothExpr::constant(n, c(1.0));
            holo[n - 1] = SmoothExpr::poly(self.p.derive(i, false).scale(c(-2.0)));
            tangents.push(Field::type10(holo));
        }
        let identity = (0..n - 1)
            .map(|i| (0..n - 1).map(|j| if i == j { c(1.0) } else { c(0.0) }).collect())
            .collect();
        Frame {
            rho: self.rho.clone(),
            tangents,
            normal: normal_field(&self.rho),
            provenance: Provenance::Canonical,
            eigenvalues: None,
            degenerate: false,
            coefficients: Some(identity),
        }
    }

    /// Levi matrix `c_ij = ⟨∂ρ, [L_i, L̄_j]⟩` of a frame at `p`.
    pub fn levi_matrix(&self, frame: &Frame, p: &[C64]) -> Vec<Vec<C64>> {
        frame.levi_matrix(p)
    }

    /// Constant unitary recombination of the canonical frame diagonalizing the Levi form at `p`.
    pub fn levi_eigen_frame(&self, p: &[C64]) -> Frame {
        let base = self.tangent_frame();
        let cm = base.levi_matrix(p);
        let s = self.n - 1;
        let mat = DMatrix::from_fn(s, s, |i, j| cm[i][j]);
        let (vals, vecs, degenerate) = linalg::hermitian_eigen_sorted(&mat);
        let mut tangents = Vec::with_capacity(s);
        let mut coeffs = Vec::with_capacity(s);
        for a in 0..s {
            let co: Vec<C64> = (0..s).map(|i| vecs[(i, a)].conj()).collect();
            tangents.push(Field::combination(&base.tangents, &co));
            coeffs.push(co);
        }
        Frame {
            rho: self.rho.clone(),
            tangents,
            normal: base.normal,
            provenance: Provenance::LeviEigen,
            eigenvalues: Some(vals),
            degenerate,
            coefficients: Some(coeffs),
        }
    }

    /// Minimum Levi eigenvalue over seeded boundary samples in the window.
    pub fn pseudoconvexity_check(&self, samples: usize, seed: u64) -> LeviCheck {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frame = self.tangent_frame();
        let r = 0.5 * self.window;
        let mut min_eig = f64::INFINITY;
        for _ in 0..samples {
            let zt: Vec<C64> = (0..self.n - 1)
                .map(|_| C64::new(rng.gen_range(-r..r), rng.gen_range(-r..r)))
                .collect();
            let p = self.boundary_point(&zt, rng.gen_range(-r..r));
            let cm = frame.levi_matrix(&p);
            let s = self.n - 1;
            let mat = DMatrix::from_fn(s, s, |i, j| cm[i][j]);
            let (vals, _, _) = linalg::hermitian_eigen_sorted(&mat);
            min_eig = min_eig.min(*vals.last().unwrap_or(&0.0));
        }
        LeviCheck { samples, min_eigenvalue: min_eig, passed: min_eig >= -1e-10 }
    }
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// Fields `L₁..L_{n−1}, N`.
    pub fn all_fields(&self) -> Vec<Field> {
        let mut v = self.tangents.clone();
        v.push(self.normal.clone());
        v
    }

    /// Jets of the frame at `p` to the given order.
    pub fn jets(&self, p: &[C64], order: usize) -> FrameJets {
        let n = self.dim();
        let space = JetSpace::get(2 * n, order);
        let (z, zb) = Jet::coordinates(&space, p);
        let tangents = self.tangents.iter().map(|f| FieldJet::from_field(f, &z, &zb)).collect();
        let normal = FieldJet::from_field(&self.normal, &z, &zb);
        let rho = self.rho.eval_jets(&z, &zb);
        let drho = (0..n).map(|j| rho.derive(j)).collect();
        FrameJets { n, order, tangents, normal, rho, drho, point: p.to_vec() }
    }

    pub fn levi_matrix(&self, p: &[C64]) -> Vec<Vec<C64>> {
        let fj = self.jets(p, 2);
        let s = self.tangents.len();
        let mut m = vec![vec![c(0.0); s]; s];
        for i in 0..s {
            for j in 0..s {
                m[i][j] = fj.tangents[i].bracket(&fj.tangents[j].conj()).pair(&fj.drho).value();
            }
        }
        m
    }

    /// Holomorphic coefficient matrix (columns `L₁..L_{n−1}, N`) at `p`.
    pub fn matrix_at(&self, p: &[C64]) -> DMatrix<C64> {
        let n = self.dim();
        let fields = self.all_fields();
        DMatrix::from_fn(n, n, |r, col| fields[col].holo[r].eval(p))
    }

    /// Constant-coefficient copy of the frame frozen at `p`.
    pub fn frozen(&self, p: &[C64]) -> Frame {
        let n = self.dim();
        let freeze = |f: &Field| -> Field {
            let (h, _) = f.eval(p);
            Field::type10(h.into_iter().map(|v| SmoothExpr::constant(n, v)).collect())
        };
        Frame {
            rho: self.rho.clone(),
            tangents: self.tangents.iter().map(freeze).collect(),
            normal: freeze(&self.normal),
            provenance: Provenance::User,
            eigenvalues: None,
            degenerate: false,
            coefficients: None,
        }
    }

    /// Recombines the tangent fields with a constant matrix (`new_a = Σ_i m[a][i] L_i`).
    pub fn recombine(&self, m: &[Vec<C64>], provenance: Provenance) -> Frame {
        let tangents = m.iter().map(|row| Field::combination(&self.tangents, row)).collect();
        let coefficients = self.coefficients.as_ref().map(|base| {
            m.iter()
                .map(|row| {
                    (0..base[0].len())
                        .map(|k| row.iter().zip(base).map(|(a, b)| a * b[k]).sum())
                        .collect()
                })
                .collect()
        });
        Frame {
            rho: self.rho.clone(),
            tangents,
            normal: self.normal.clone(),
            provenance,
            eigenvalues: None,
            degenerate: false,
            coefficients,
        }
    }
}

/// Jets of a frame and of `ρ` at a point.
#[derive(Clone, Debug)]
pub struct FrameJets {
    pub n: usize,
    pub order: usize,
    pub tangents: Vec<FieldJet>,
    pub normal: FieldJet,
    pub rho: Jet,
    pub drho: Vec<Jet>,
    pub point: Point,
}

impl FrameJets {
    /// Letters `L₁, L̄₁, L₂, L̄₂, …` (index `2i + conj`).
    pub fn tangent_letters(&self) -> Vec<FieldJet> {
        self.tangents.iter().flat_map(|t| [t.clone(), t.conj()]).collect()
    }

    /// Letters including the normal as the last slot.
    pub fn all_letters(&self) -> Vec<FieldJet> {
        let mut v = self.tangent_letters();
        v.push(self.normal.clone());
        v.push(self.normal.conj());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn herbort_normal_is_remapped() {
        let d = ModelDomain::herbort();
        // P = |z1|^6 + |z2|^6 + |z1|^2|z2|^2 internally
        assert_eq!(d.p.coeff(&[3, 0, 0, 3, 0, 0]), c(1.0));
        assert_eq!(d.p.coeff(&[1, 1, 0, 1, 1, 0]), c(1.0));
        let f = d.tangent_frame();
        // β for the first tangential slot: −(6|z|⁴z̄ + 2|w|²z̄)
        let b = f.tangents[0].holo[2].as_poly().unwrap();
        assert_eq!(b.coeff(&[2, 0, 0, 3, 0, 0]), c(-6.0));
        assert_eq!(b.coeff(&[0, 1, 0, 1, 1, 0]), c(-2.0));
    }

    #[test]
    fn tangency_is_symbolic() {
        for d in ModelDomain::catalog() {
            for l in d.tangent_frame().tangents {
                assert!(l.apply(&d.rho).is_zero(), "{}", d.name);
            }
        }
    }

    #[test]
    fn interior_point_sits_at_requested_depth() {
        let d = ModelDomain::herbort();
        let p = d.interior_point(&[c(0.2), C64::new(0.1, -0.3)], 0.4, 0.025);
        assert!((d.eval_rho(&p) + 0.025).abs() < 1e-15);
    }

    #[test]
    fn siegel_levi_is_identity() {
        let d = ModelDomain::siegel();
        let m = d.levi_matrix(&d.tangent_frame(), &[c(0.0); 3]);
        assert_eq!(m, vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]]);
    }

    #[test]
    fn invalid_definitions_are_rejected() {
        assert!(ModelDomain::from_expr("x", "Re(z2) + z1", 2, 2, 2).is_err());
        assert!(ModelDomain::from_expr("x", "Re(z2) + Im(z1)*|z1|^2 + 1", 2, 2, 4).is_err());
        assert!(ModelDomain::from_expr("x", "Re(z2) + z1^2", 2, 2, 4).is_err());
    }
}
