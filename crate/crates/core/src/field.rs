//! Complex vector fields with smooth coefficients, brackets and the pairing with `∂ρ`.

use num_complex::Complex64 as C64;

use crate::error::{FtlError, Result};
use crate::expr::SmoothExpr;

/// `Σ holo_j ∂/∂z_j + Σ anti_j ∂/∂z̄_j`.
#[derive(Clone, Debug)]
pub struct Field {
    pub holo: Vec<SmoothExpr>,
    pub anti: Vec<SmoothExpr>,
}

impl Field {
    pub fn zero(n: usize) -> Field {
        Field { holo: vec![SmoothExpr::zero(n); n], anti: vec![SmoothExpr::zero(n); n] }
    }

    /// `∂/∂z_j` (or `∂/∂z̄_j`).
    pub fn coordinate(n: usize, j: usize, conj: bool) -> Field {
        let mut f = Field::zero(n);
        let one = SmoothExpr::constant(n, C64::new(1.0, 0.0));
        if conj {
            f.anti[j] = one;
        } else {
            f.holo[j] = one;
        }
        f
    }

    pub fn type10(holo: Vec<SmoothExpr>) -> Field {
        let n = holo.len();
        Field { holo, anti: vec![SmoothExpr::zero(n); n] }
    }

    pub fn dim(&self) -> usize {
        self.holo.len()
    }

    pub fn is_type10(&self) -> bool {
        self.anti.iter().all(|a| a.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.holo.iter().chain(&self.anti).all(|a| a.is_zero())
    }

    pub fn conj(&self) -> Field {
        Field {
            holo: self.anti.iter().map(|a| a.conj()).collect(),
            anti: self.holo.iter().map(|a| a.conj()).collect(),
        }
    }

    pub fn add(&self, o: &Field) -> Field {
        Field {
            holo: self.holo.iter().zip(&o.holo).map(|(a, b)| a.add(b)).collect(),
            anti: self.anti.iter().zip(&o.anti).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Field {
        Field {
            holo: self.holo.iter().map(|a| a.scale(s)).collect(),
            anti: self.anti.iter().map(|a| a.scale(s)).collect(),
        }
    }

    /// Multiplies every coefficient by a function.
    pub fn times(&self, g: &SmoothExpr) -> Field {
        Field {
            holo: self.holo.iter().map(|a| a.mul(g)).collect(),
            anti: self.anti.iter().map(|a| a.mul(g)).collect(),
        }
    }

    /// Constant-coefficient combination `Σ a_k X_k`.
    pub fn combination(fields: &[Field], a: &[C64]) -> Field {
        let n = fields[0].dim();
        let mut acc = Field::zero(n);
        for (f, c) in fields.iter().zip(a) {
            if *c != C64::new(0.0, 0.0) {
                acc = acc.add(&f.scale(*c));
            }
        }
        acc
    }

    /// `Xf = Σ holo_j ∂f/∂z_j + Σ anti_j ∂f/∂z̄_j`.
    pub fn apply(&self, f: &SmoothExpr) -> SmoothExpr {
        let mut terms = Vec::new();
        for j in 0..self.dim() {
            if !self.holo[j].is_zero() {
                terms.push(self.holo[j].mul(&f.derive(j, false)));
            }
            if !self.anti[j].is_zero() {
                terms.push(self.anti[j].mul(&f.derive(j, true)));
            }
        }
        if terms.is_empty() {
            return SmoothExpr::zero(f.dim());
        }
        SmoothExpr::sum(terms)
    }

    /// Checked variant of [`Field::apply`].
    pub fn try_apply(&self, f: &SmoothExpr) -> Result<SmoothExpr> {
        if f.dim() != self.dim() {
            return Err(FtlError::Dimension { expected: self.dim(), found: f.dim() });
        }
        Ok(self.apply(f))
    }

    /// Lie bracket `[X, Y] = XY − YX`.
    pub fn bracket(&self, y: &Field) -> Field {
        let n = self.dim();
        let mut holo = Vec::with_capacity(n);
        let mut anti = Vec::with_capacity(n);
        for j in 0..n {
            holo.push(self.apply(&y.holo[j]).sub(&y.apply(&self.holo[j])));
            anti.push(self.apply(&y.anti[j]).sub(&y.apply(&self.anti[j])));
        }
        Field { holo, anti }
    }

    pub fn try_bracket(&self, y: &Field) -> Result<Field> {
        if y.dim() != self.dim() {
            return Err(FtlError::Dimension { expected: self.dim(), found: y.dim() });
        }
        Ok(self.bracket(y))
    }

    /// `⟨∂ρ, X⟩ = Σ holo_j ∂ρ/∂z_j`.
    pub fn pair_drho(&self, rho: &SmoothExpr) -> SmoothExpr {
        let mut terms = Vec::new();
        for j in 0..self.dim() {
            if !self.holo[j].is_zero() {
                terms.push(self.holo[j].mul(&rho.derive(j, false)));
            }
        }
        if terms.is_empty() {
            return SmoothExpr::zero(rho.dim());
        }
        SmoothExpr::sum(terms)
    }

    /// Coefficient values at a point: `(holo, anti)`.
    pub fn eval(&self, z: &[C64]) -> (Vec<C64>, Vec<C64>) {
        (self.holo.iter().map(|c| c.eval(z)).collect(), self.anti.iter().map(|c| c.eval(z)).collect())
    }
}

/// Iterated derivative `X¹…X^{k−2}⟨∂ρ,[X^{k−1},X^k]⟩` as an expression.
pub fn list_apply_fields(word: &[Field], rho: &SmoothExpr) -> Result<SmoothExpr> {
    let k = word.len();
    if k < 2 {
        return Err(FtlError::ListTooShort(k));
    }
    let mut e = word[k - 2].bracket(&word[k - 1]).pair_drho(rho);
    for x in word[..k - 2].iter().rev() {
        e = x.apply(&e);
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpoly::CPoly;

    fn siegel_rho() -> SmoothExpr {
        let n = 3;
        let re_z3 = CPoly::var(n, 2, false).add(&CPoly::var(n, 2, true)).scale(C64::new(0.5, 0.0));
        let p = CPoly::var(n, 0, false)
            .mul(&CPoly::var(n, 0, true))
            .add(&CPoly::var(n, 1, false).mul(&CPoly::var(n, 1, true)));
        SmoothExpr::poly(re_z3.add(&p))
    }

    fn siegel_l1() -> Field {
        let n = 3;
        let mut holo = vec![SmoothExpr::zero(n); n];
        holo[0] = SmoothExpr::constant(n, C64::new(1.0, 0.0));
        holo[2] = SmoothExpr::poly(CPoly::var(n, 0, true).scale(C64::new(-2.0, 0.0)));
        Field::type10(holo)
    }

    #[test]
    fn siegel_tangency_is_exact() {
        assert!(siegel_l1().apply(&siegel_rho()).is_zero());
    }

    #[test]
    fn siegel_bracket_and_pairing() {
        let l = siegel_l1();
        let b = l.bracket(&l.conj());
        let two = C64::new(2.0, 0.0);
        assert_eq!(b.holo[2].as_poly().map(|p| p.coeff(&[0; 6])), Some(two));
        assert_eq!(b.anti[2].as_poly().map(|p| p.coeff(&[0; 6])), Some(-two));
        let c = b.pair_drho(&siegel_rho());
        assert_eq!(c.eval(&[C64::new(0.0, 0.0); 3]), C64::new(1.0, 0.0));
    }

    #[test]
    fn bracket_example_shear() {
        let n = 2;
        let x = Field::coordinate(n, 0, false).times(&SmoothExpr::poly(CPoly::var(n, 1, false)));
        let y = Field::coordinate(n, 1, false);
        let b = x.bracket(&y);
        assert_eq!(b.holo[0].as_poly().map(|p| p.coeff(&[0; 4])), Some(C64::new(-1.0, 0.0)));
        assert!(b.holo[1].is_zero());
    }

    #[test]
    fn short_list_is_rejected() {
        assert!(list_apply_fields(&[siegel_l1()], &siegel_rho()).is_err());
    }
}
