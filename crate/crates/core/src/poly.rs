//! Low-degree polynomials in four variables, evaluable on dual numbers.

use rand::Rng;

use crate::calculus::Real;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly {
    terms: Vec<(f64, [u8; 4])>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        Poly::zero().term(c, [0, 0, 0, 0])
    }

    /// The coordinate `x^k`.
    pub fn var(k: usize) -> Self {
        let mut p = [0u8; 4];
        p[k] = 1;
        Poly::zero().term(1.0, p)
    }

    /// Builder: add `coeff · Π x_i^{powers_i}`.
    pub fn term(mut self, coeff: f64, powers: [u8; 4]) -> Self {
        if coeff != 0.0 {
            self.terms.push((coeff, powers));
        }
        self
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.terms.iter().fold(Poly::zero(), |acc, (c, p)| acc.term(c * k, *p))
    }

    pub fn plus(&self, other: &Poly) -> Self {
        other.terms.iter().fold(self.clone(), |acc, (c, p)| acc.term(*c, *p))
    }

    pub fn times(&self, other: &Poly) -> Self {
        let mut out = Poly::zero();
        for (a, pa) in &self.terms {
            for (b, pb) in &other.terms {
                out = out.term(a * b, std::array::from_fn(|k| pa[k] + pb[k]));
            }
        }
        out
    }

    pub fn terms(&self) -> &[(f64, [u8; 4])] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, p)| p.iter().map(|&e| e as u32).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval<T: Real>(&self, x: &[T; 4]) -> T {
        let mut acc = T::zero();
        for (c, p) in &self.terms {
            let mut m = T::cst(*c);
            for k in 0..4 {
                if p[k] > 0 {
                    m *= x[k].powi(p[k] as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Every monomial of total degree ≤ `degree`, coefficients uniform in `[-scale, scale]`.
    pub fn random<R: Rng>(rng: &mut R, degree: u8, scale: f64) -> Self {
        let mut p = Poly::zero();
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    for d in 0..=degree - a - b - c {
                        p = p.term(rng.gen_range(-scale..=scale), [a, b, c, d]);
                    }
                }
            }
        }
        p
    }
}
