//! Electromagnetic potentials, field strength, the Maxwell stress tensor and
//! residuals of both Maxwell equations.
//!
//! Conventions (Gaussian units with `c = 1`, signature `+ − − −`):
//!
//! * `F_μν = FIELD_SIGN · (∂_μ A_ν − ∂_ν A_μ)` with `FIELD_SIGN = −1`.
//! * `4π E^{μν} = −F^μ_α F^{να} + ¼ g^{μν} F_αβ F^{αβ}`.
//! * Sources: `F^{μν}_{;ν} = 4π j^μ`.
//! * Law of motion: `ρ v_{μ;ν} v^ν + s σ F_μν v^ν = 0` with `s = +1`.
//!
//! The pair (`FIELD_SIGN`, `s`) is pinned by two checks: `s = +1` is the only
//! sign for which stress-energy conservation closes (see
//! [`conservation`](crate::conservation)), and with that `s` the uniform-E
//! preset must push a positive charge toward `+x`, which forces
//! `FIELD_SIGN = −1`. Potentials keep their textbook form (`A_0 = φ`).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::calculus::{
    ad_partials, divergence, divergence_at, CoordFn, DerivEngine, Real, TensorField, Variance,
};
use crate::chart::{jacobian_at, metric_at, Chart, MetricData};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4};
use crate::poly::Poly;

pub const FIELD_SIGN: f64 = -1.0;

/// Sweeps skip points this close to a Coulomb centre.
pub const COULOMB_EXCLUSION: f64 = 1e-3;

/// Relative sign of the Lorentz term in the law of motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+1" | "1" | "+" => Ok(Sign::Plus),
            "-1" | "-" => Ok(Sign::Minus),
            other => Err(Error::config(format!("unknown sign `{other}`"))),
        }
    }
}

/// One closed-form contribution to `A_a(x)` in Cartesian components.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialTerm {
    /// `A = (−E₀ x, 0, 0, 0)`: field `E₀` along `+x`.
    UniformE { e0: f64 },
    /// `A = (0, B₀ y/2, −B₀ x/2, 0)`: field `B₀` along `+z`.
    UniformB { b0: f64 },
    /// `A = (0, 0, a cos ω(t − x), 0)`: linearly polarised wave along `+x`.
    PlaneWave { amplitude: f64, omega: f64 },
    /// `A_0 = q/|x|`.
    Coulomb { q: f64 },
    /// `A_0 = −(2π/3) n |x|²`: static uniform charge density `n`.
    SpaceCharge { density: f64 },
    /// Arbitrary polynomial components.
    Polynomial(Box<[Poly; 4]>),
}

impl PotentialTerm {
    pub fn eval<T: Real>(&self, x: &[T; 4]) -> [T; 4] {
        let z = T::zero();
        match self {
            PotentialTerm::UniformE { e0 } => [x[1] * -*e0, z, z, z],
            PotentialTerm::UniformB { b0 } => [z, x[2] * (0.5 * b0), x[1] * (-0.5 * b0), z],
            PotentialTerm::PlaneWave { amplitude, omega } => {
                [z, z, ((x[0] - x[1]) * *omega).cos() * *amplitude, z]
            }
            PotentialTerm::Coulomb { q } => {
                let r = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
                [r.recip() * *q, z, z, z]
            }
            PotentialTerm::SpaceCharge { density } => {
                let r2 = x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
                [r2 * (-2.0 * PI / 3.0 * density), z, z, z]
            }
            PotentialTerm::Polynomial(p) => std::array::from_fn(|a| p[a].eval(x)),
        }
    }

    fn singular_at(&self, x: &[f64; 4]) -> bool {
        match self {
            PotentialTerm::Coulomb { .. } => {
                (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt() < COULOMB_EXCLUSION
            }
            _ => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            PotentialTerm::UniformE { e0 } => format!("uniform_e:{e0}"),
            PotentialTerm::UniformB { b0 } => format!("uniform_b:{b0}"),
            PotentialTerm::PlaneWave { amplitude, omega } => format!("plane_wave:{amplitude},{omega}"),
            PotentialTerm::Coulomb { q } => format!("coulomb:{q}"),
            PotentialTerm::SpaceCharge { density } => format!("space_charge:{density}"),
            PotentialTerm::Polynomial(_) => "polynomial".to_string(),
        }
    }
}

/// A superposition of potential terms, given in Cartesian components and
/// pulled back to whichever chart evaluates it.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    terms: Vec<PotentialTerm>,
    name: String,
}

impl Potential {
    pub fn zero() -> Self {
        Potential {
            terms: Vec::new(),
            name: "zero".to_string(),
        }
    }

    pub fn new(terms: Vec<PotentialTerm>) -> Self {
        let name = if terms.is_empty() {
            "zero".to_string()
        } else {
            terms.iter().map(|t| t.describe()).collect::<Vec<_>>().join("+")
        };
        Potential { terms, name }
    }

    pub fn single(term: PotentialTerm) -> Self {
        Potential::new(vec![term])
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn uniform_e(e0: f64) -> Self {
        Self::single(PotentialTerm::UniformE { e0 })
    }

    pub fn uniform_b(b0: f64) -> Self {
        Self::single(PotentialTerm::UniformB { b0 })
    }

    pub fn plane_wave(amplitude: f64, omega: f64) -> Self {
        Self::single(PotentialTerm::PlaneWave { amplitude, omega })
    }

    pub fn coulomb(q: f64) -> Self {
        Self::single(PotentialTerm::Coulomb { q })
    }

    pub fn space_charge(density: f64) -> Self {
        Self::single(PotentialTerm::SpaceCharge { density })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> &[PotentialTerm] {
        &self.terms
    }

    /// `A_a(x)` in Cartesian components.
    pub fn cartesian<T: Real>(&self, x: &[T; 4]) -> [T; 4] {
        let mut a = [T::zero(); 4];
        for t in &self.terms {
            let ta = t.eval(x);
            for k in 0..4 {
                a[k] += ta[k];
            }
        }
        a
    }

    /// True near a singular locus (Coulomb centre) of any term.
    pub fn is_singular_near(&self, x: &[f64; 4]) -> bool {
        self.terms.iter().any(|t| t.singular_at(x))
    }

    /// Parse `name[:p1,p2]` presets joined by `+`, e.g. `plane_wave:0.1,2.0+uniform_e:0.5`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let mut terms = Vec::new();
        for part in split_terms(spec) {
            let (name, params) = match part.split_once(':') {
                Some((n, p)) => (n.trim(), parse_params(p)?),
                None => (part.trim(), Vec::new()),
            };
            let want = |n: usize| -> Result<()> {
                if params.len() == n {
                    Ok(())
                } else {
                    Err(Error::config(format!("preset `{name}` takes {n} parameter(s), got {}", params.len())))
                }
            };
            match name {
                "zero" => want(0)?,
                "uniform_e" => {
                    want(1)?;
                    terms.push(PotentialTerm::UniformE { e0: params[0] });
                }
                "uniform_b" => {
                    want(1)?;
                    terms.push(PotentialTerm::UniformB { b0: params[0] });
                }
                "plane_wave" => {
                    want(2)?;
                    terms.push(PotentialTerm::PlaneWave {
                        amplitude: params[0],
                        omega: params[1],
                    });
                }
                "coulomb" => {
                    want(1)?;
                    terms.push(PotentialTerm::Coulomb { q: params[0] });
                }
                "space_charge" => {
                    want(1)?;
                    terms.push(PotentialTerm::SpaceCharge { density: params[0] });
                }
                other => return Err(Error::config(format!("unknown potential preset `{other}`"))),
            }
        }
        Ok(Potential::new(terms).with_name(spec))
    }
}

/// Split on `+` that starts a new preset name (so `1e+3` survives).
fn split_terms(spec: &str) -> Vec<&str> {
    let bytes = spec.as_bytes();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 0..bytes.len() {
        if bytes[i] == b'+' && bytes.get(i + 1).is_some_and(|c| c.is_ascii_alphabetic()) && i > 0 {
            let prev = bytes[i - 1];
            if prev != b'e' && prev != b'E' {
                parts.push(&spec[start..i]);
                start = i + 1;
            }
        }
    }
    parts.push(&spec[start..]);
    parts
}

fn parse_params(p: &str) -> Result<Vec<f64>> {
    p.split(',')
        .map(|x| {
            let v: f64 = x
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad numeric parameter `{x}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::config(format!("non-finite parameter `{x}`")))
            }
        })
        .collect()
}

/// `A_μ(u) = A_a(x(u)) J^a_μ(u)` as a covector field on a chart.
pub struct PotentialField<'a> {
    pub potential: &'a Potential,
    pub chart: &'a Chart,
}

impl CoordFn for PotentialField<'_> {
    fn len(&self) -> usize {
        4
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        let x = self.chart.to_cartesian(u);
        let a = self.potential.cartesian(&x);
        let j = jacobian_at(self.chart, u);
        (0..4)
            .map(|mu| {
                let mut s = T::zero();
                for k in 0..4 {
                    s += a[k] * j[k][mu];
                }
                s
            })
            .collect()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.chart.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.chart.name()
    }
}

impl TensorField for PotentialField<'_> {
    fn variance(&self) -> Variance {
        Variance::covector()
    }
}

/// Index pairs `(μ, ν)`, `μ < ν`, of the six independent components.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn pair_index(m: usize, n: usize) -> usize {
    match (m.min(n), m.max(n)) {
        (0, 1) => 0,
        (0, 2) => 1,
        (0, 3) => 2,
        (1, 2) => 3,
        (1, 3) => 4,
        (2, 3) => 5,
        _ => unreachable!("diagonal has no pair index"),
    }
}

/// `F_μν` stored as six independent components; antisymmetry is structural.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldStrength<T = f64> {
    c: [T; 6],
}

impl<T: Real> FieldStrength<T> {
    pub fn zero() -> Self {
        FieldStrength { c: [T::zero(); 6] }
    }

    pub fn from_pairs(c: [T; 6]) -> Self {
        FieldStrength { c }
    }

    /// Take the strict upper triangle of `m`.
    pub fn from_upper(m: &Mat4<T>) -> Self {
        FieldStrength {
            c: PAIRS.map(|(a, b)| m[a][b]),
        }
    }

    pub fn pairs(&self) -> &[T; 6] {
        &self.c
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> T {
        if m == n {
            T::zero()
        } else if m < n {
            self.c[pair_index(m, n)]
        } else {
            -self.c[pair_index(m, n)]
        }
    }

    pub fn matrix(&self) -> Mat4<T> {
        std::array::from_fn(|m| std::array::from_fn(|n| self.get(m, n)))
    }

    /// `F^μ_ν = g^{μα} F_αν`.
    pub fn mixed(&self, g_inv: &Mat4<T>) -> Mat4<T> {
        linalg::mat_mul(g_inv, &self.matrix())
    }

    /// `F^{μν} = g^{μα} F_αβ g^{βν}`.
    pub fn raised(&self, g_inv: &Mat4<T>) -> Mat4<T> {
        linalg::mat_mul(&self.mixed(g_inv), g_inv)
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> FieldStrength<U> {
        FieldStrength { c: self.c.map(f) }
    }
}

impl FieldStrength {
    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.c)
    }
}

/// A field specified directly by its components in chart coordinates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DirectField {
    comps: [Poly; 6],
}

impl DirectField {
    pub fn new() -> Self {
        DirectField::default()
    }

    /// Builder: set `F_mn = p` (and therefore `F_nm = −p`).
    pub fn with(mut self, m: usize, n: usize, p: Poly) -> Self {
        assert_ne!(m, n, "diagonal components of F vanish");
        let idx = pair_index(m, n);
        self.comps[idx] = if m < n { p } else { p.scaled(-1.0) };
        self
    }

    fn eval<T: Real>(&self, u: &[T; 4]) -> FieldStrength<T> {
        FieldStrength {
            c: std::array::from_fn(|k| self.comps[k].eval(u)),
        }
    }
}

/// Source of an electromagnetic field.
#[derive(Clone, Debug, PartialEq)]
pub enum EMField {
    /// `F` derived from a potential; the Bianchi identity holds exactly.
    FromPotential(Potential),
    /// Components given directly; nothing is guaranteed.
    Direct(DirectField),
}

impl EMField {
    pub fn zero() -> Self {
        EMField::FromPotential(Potential::zero())
    }

    pub fn potential(&self) -> Option<&Potential> {
        match self {
            EMField::FromPotential(p) => Some(p),
            EMField::Direct(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            EMField::FromPotential(p) => p.name(),
            EMField::Direct(_) => "direct",
        }
    }

    pub fn is_singular_near(&self, x: &[f64; 4]) -> bool {
        self.potential().is_some_and(|p| p.is_singular_near(x))
    }

    /// Exact `F_μν` at any scalar depth.
    pub fn strength_at<T: Real>(&self, chart: &Chart, u: &[T; 4]) -> FieldStrength<T> {
        match self {
            EMField::FromPotential(p) => {
                let d = ad_partials(&PotentialField { potential: p, chart }, u);
                strength_from_partials(&d)
            }
            EMField::Direct(f) => f.eval(u),
        }
    }

    /// `F_μν` at `u`; for potential fields the derivative is taken by `engine`.
    pub fn strength(&self, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<FieldStrength> {
        match self {
            EMField::FromPotential(p) => field_strength(p, chart, u, engine),
            EMField::Direct(f) => {
                chart.check_domain(u)?;
                Ok(f.eval(u))
            }
        }
    }
}

/// `d[ν * 4 + μ] = ∂_μ A_ν`.
fn strength_from_partials<T: Real>(d: &[T]) -> FieldStrength<T> {
    FieldStrength {
        c: PAIRS.map(|(m, n)| (d[n * 4 + m] - d[m * 4 + n]) * FIELD_SIGN),
    }
}

/// `F_μν = FIELD_SIGN · (∂_μ A_ν − ∂_ν A_μ)` at `u`.
pub fn field_strength(
    potential: &Potential,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
) -> Result<FieldStrength> {
    // the pulled-back potential already contains one derivative of the chart map
    engine.require_order(2)?;
    chart.check_domain(u)?;
    let d = engine.partials(&PotentialField { potential, chart }, u)?;
    Ok(strength_from_partials(&d))
}

/// `F_μν` as a rank-2 lower tensor field.
pub struct FieldTensor<'a> {
    pub field: &'a EMField,
    pub chart: &'a Chart,
}

impl CoordFn for FieldTensor<'_> {
    fn len(&self) -> usize {
        16
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        self.field.strength_at(self.chart, u).matrix().iter().flatten().copied().collect()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.chart.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.chart.name()
    }
}

impl TensorField for FieldTensor<'_> {
    fn variance(&self) -> Variance {
        Variance::lower2()
    }
}

/// `F^{μν}` as a rank-2 upper tensor field.
pub struct RaisedFieldTensor<'a> {
    pub field: &'a EMField,
    pub chart: &'a Chart,
}

impl CoordFn for RaisedFieldTensor<'_> {
    fn len(&self) -> usize {
        16
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        let m = metric_at(self.chart, u);
        self.field.strength_at(self.chart, u).raised(&m.g_inv).iter().flatten().copied().collect()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.chart.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.chart.name()
    }
}

impl TensorField for RaisedFieldTensor<'_> {
    fn variance(&self) -> Variance {
        Variance::upper2()
    }
}

/// `E^{μν}` as a rank-2 upper tensor field.
pub struct EmStressField<'a> {
    pub field: &'a EMField,
    pub chart: &'a Chart,
}

impl CoordFn for EmStressField<'_> {
    fn len(&self) -> usize {
        16
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        let m = metric_at(self.chart, u);
        em_stress(&self.field.strength_at(self.chart, u), &m).iter().flatten().copied().collect()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.chart.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.chart.name()
    }
}

impl TensorField for EmStressField<'_> {
    fn variance(&self) -> Variance {
        Variance::upper2()
    }
}

/// Maxwell stress tensor `E^{μν}`, symmetric by construction.
pub fn em_stress<T: Real>(f: &FieldStrength<T>, metric: &MetricData<T>) -> Mat4<T> {
    let mixed = f.mixed(&metric.g_inv);
    let upper = linalg::mat_mul(&mixed, &metric.g_inv);
    let invariant = contract_lower_upper(&f.matrix(), &upper);
    let mut e = linalg::zeros();
    for mu in 0..4 {
        for nu in mu..4 {
            let mut s = metric.g_inv[mu][nu] * invariant * 0.25;
            for al in 0..4 {
                s -= mixed[mu][al] * upper[nu][al];
            }
            e[mu][nu] = s / (4.0 * PI);
        }
    }
    linalg::symmetrize_upper(&mut e);
    e
}

fn contract_lower_upper<T: Real>(lower: &Mat4<T>, upper: &Mat4<T>) -> T {
    let mut s = T::zero();
    for a in 0..4 {
        for b in 0..4 {
            s += lower[a][b] * upper[a][b];
        }
    }
    s
}

/// The invariant `F_αβ F^{αβ}`.
pub fn field_invariant<T: Real>(f: &FieldStrength<T>, g_inv: &Mat4<T>) -> T {
    contract_lower_upper(&f.matrix(), &f.raised(g_inv))
}

/// `σ F^μ_ν v^ν`, the unsigned Lorentz term (upper index).
pub fn lorentz_term<T: Real>(f: &FieldStrength<T>, g_inv: &Mat4<T>, sigma: T, v: &Vec4<T>) -> Vec4<T> {
    linalg::mat_vec(&f.mixed(g_inv), v).map(|x| x * sigma)
}

/// Cyclic sums `F_μν,σ + F_νσ,μ + F_σμ,ν`.
#[derive(Clone, Debug, PartialEq)]
pub struct BianchiResidual {
    /// All 64 cyclic sums, indexed `(μ * 4 + ν) * 4 + σ`.
    pub cyclic: Vec<f64>,
    /// Largest magnitude over the four independent index triples.
    pub max_abs: f64,
}

impl BianchiResidual {
    pub fn get(&self, m: usize, n: usize, s: usize) -> f64 {
        self.cyclic[(m * 4 + n) * 4 + s]
    }
}

/// Residual of the homogeneous Maxwell equation. Plain partials suffice: the
/// connection terms cancel in the cyclic sum.
pub fn bianchi_residual(field: &EMField, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<BianchiResidual> {
    engine.require_order(2)?;
    chart.check_domain(u)?;
    let d = engine.partials(&FieldTensor { field, chart }, u)?;
    let dd = |m: usize, n: usize, s: usize| d[(m * 4 + n) * 4 + s];
    let mut cyclic = vec![0.0; 64];
    for m in 0..4 {
        for n in 0..4 {
            for s in 0..4 {
                cyclic[(m * 4 + n) * 4 + s] = dd(m, n, s) + dd(n, s, m) + dd(s, m, n);
            }
        }
    }
    let max_abs = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .map(|&(m, n, s)| cyclic[(m * 4 + n) * 4 + s].abs())
        .fold(0.0, f64::max);
    Ok(BianchiResidual { cyclic, max_abs })
}

/// `F^{μν}_{;ν}` at `u`.
pub fn field_divergence(field: &EMField, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<Vec4> {
    let d = divergence(&RaisedFieldTensor { field, chart }, chart, u, engine)?;
    Ok([d[0], d[1], d[2], d[3]])
}

/// Residual of the inhomogeneous Maxwell equation: `F^{μν}_{;ν} − 4π σ v^μ`.
pub fn source_residual(
    field: &EMField,
    sigma: f64,
    v: &Vec4,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
) -> Result<Vec4> {
    let d = field_divergence(field, chart, u, engine)?;
    Ok(std::array::from_fn(|mu| d[mu] - 4.0 * PI * sigma * v[mu]))
}

/// The current that makes the source equation hold exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InducedCurrent {
    pub j: Vec4,
    /// `g_μν j^μ j^ν`
    pub norm2: f64,
    /// False for null, spacelike or vanishing currents; such points cannot be
    /// written as `σ v` with a unit timelike `v`.
    pub timelike: bool,
}

impl InducedCurrent {
    /// `(σ, v)` with `v` future-pointing and `σ v = j`.
    pub fn decompose(&self) -> Option<(f64, Vec4)> {
        if !self.timelike {
            return None;
        }
        let orient = if self.j[0] >= 0.0 { 1.0 } else { -1.0 };
        let sigma = orient * self.norm2.sqrt();
        Some((sigma, self.j.map(|x| x / sigma)))
    }
}

/// `j^μ = F^{μν}_{;ν} / 4π` at `u`.
pub fn induced_current(field: &EMField, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<InducedCurrent> {
    let d = field_divergence(field, chart, u, engine)?;
    let j = d.map(|x| x / (4.0 * PI));
    let m = metric_at(chart, u);
    let norm2 = linalg::quad(&m.g, &j, &j);
    Ok(InducedCurrent {
        j,
        norm2,
        timelike: norm2 > 0.0,
    })
}

/// Exact induced current at any scalar depth.
pub fn induced_current_at<T: Real>(field: &EMField, chart: &Chart, u: &[T; 4]) -> Vec4<T> {
    let d = divergence_at(&RaisedFieldTensor { field, chart }, chart, u);
    std::array::from_fn(|mu| d[mu] / (4.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::pullback_metric;

    const AD: DerivEngine = DerivEngine::Ad2;

    #[test]
    fn zero_potential_zero_field() {
        let f = field_strength(&Potential::zero(), &Chart::Spherical, &[0.0, 1.0, 1.0, 1.0], &AD).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn uniform_e_components() {
        let f = field_strength(&Potential::uniform_e(1.0), &Chart::Cartesian, &[0.2, 0.5, -0.3, 1.0], &AD).unwrap();
        assert_eq!(f.get(1, 0), 1.0);
        assert_eq!(f.get(0, 1), -1.0);
        for (m, n) in PAIRS.iter().skip(1) {
            assert_eq!(f.get(*m, *n), 0.0);
        }
    }

    #[test]
    fn plane_wave_components() {
        let (a, w) = (0.1, 2.0);
        let u = [0.3, -0.4, 0.1, 0.2];
        let s = (w * (u[0] - u[1])).sin();
        for e in [AD, DerivEngine::fd4()] {
            let f = field_strength(&Potential::plane_wave(a, w), &Chart::Cartesian, &u, &e).unwrap();
            // ∂_0 A_2 = −aω sin, ∂_1 A_2 = +aω sin, scaled by FIELD_SIGN
            assert!((f.get(0, 2) - FIELD_SIGN * (-a * w * s)).abs() < 1e-11, "{e}");
            assert!((f.get(1, 2) - FIELD_SIGN * (a * w * s)).abs() < 1e-11, "{e}");
            assert!(f.get(0, 1).abs() < 1e-11);
        }
    }

    #[test]
    fn antisymmetry_is_exact() {
        let p = Potential::parse("plane_wave:0.3,1.5+uniform_b:0.7+coulomb:0.2").unwrap();
        let f = field_strength(&p, &Chart::Spherical, &[0.1, 1.3, 0.8, 2.0], &AD).unwrap();
        let m = f.matrix();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[i][j], -m[j][i]);
            }
        }
    }

    #[test]
    fn uniform_e_energy_density() {
        let u = [0.0, 0.1, 0.2, 0.3];
        let f = field_strength(&Potential::uniform_e(1.0), &Chart::Cartesian, &u, &AD).unwrap();
        let g = pullback_metric(&Chart::Cartesian, &u, &AD).unwrap();
        let e = em_stress(&f, &g);
        assert!((e[0][0] - 1.0 / (8.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn zero_field_zero_stress() {
        let g = pullback_metric(&Chart::Spherical, &[0.0, 1.0, 1.0, 0.0], &AD).unwrap();
        let e = em_stress(&FieldStrength::zero(), &g);
        assert_eq!(e, [[0.0; 4]; 4]);
    }

    #[test]
    fn bianchi_of_direct_field_f01_equals_u2() {
        let f = EMField::Direct(DirectField::new().with(0, 1, Poly::var(2)));
        let r = bianchi_residual(&f, &Chart::Cartesian, &[0.1, 0.2, 0.3, 0.4], &AD).unwrap();
        assert_eq!(r.get(0, 1, 2), 1.0);
        assert_eq!(r.max_abs, 1.0);
        assert_eq!(r.get(0, 1, 3), 0.0);
    }

    #[test]
    fn bianchi_of_uniform_field_is_exactly_zero() {
        let f = EMField::FromPotential(Potential::uniform_e(2.0));
        let r = bianchi_residual(&f, &Chart::Cartesian, &[0.1, 0.2, 0.3, 0.4], &AD).unwrap();
        assert_eq!(r.max_abs, 0.0);
    }

    #[test]
    fn bianchi_of_potential_field_in_curvilinear_chart() {
        let f = EMField::FromPotential(Potential::parse("plane_wave:0.2,1.3+uniform_b:0.4").unwrap());
        for chart in [Chart::Spherical, Chart::Cylindrical] {
            let r = bianchi_residual(&f, &chart, &[0.2, 1.4, 0.9, 0.6], &AD).unwrap();
            assert!(r.max_abs < 1e-10, "{chart}: {}", r.max_abs);
        }
    }

    #[test]
    fn uniform_field_has_no_source() {
        let f = EMField::FromPotential(Potential::uniform_e(1.0));
        let r = source_residual(&f, 0.0, &[1.0, 0.0, 0.0, 0.0], &Chart::Cartesian, &[0.0; 4], &AD).unwrap();
        assert_eq!(r, [0.0; 4]);
    }

    #[test]
    fn coulomb_is_source_free_off_origin() {
        let f = EMField::FromPotential(Potential::coulomb(1.0));
        let u = [0.0, 2.0, 1.0, 0.5];
        let r = source_residual(&f, 0.0, &[1.0, 0.0, 0.0, 0.0], &Chart::Spherical, &u, &AD).unwrap();
        assert!(linalg::max_abs(&r) < 1e-8);
        // A_0 = q/r in the spherical chart
        let a = PotentialField {
            potential: f.potential().unwrap(),
            chart: &Chart::Spherical,
        }
        .eval(&u);
        assert!((a[0] - 0.5).abs() < 1e-15);
        let j = induced_current(&f, &Chart::Spherical, &u, &AD).unwrap();
        assert!(linalg::max_abs(&j.j) < 1e-8);
        assert!(!j.timelike || j.norm2 < 1e-16);
    }

    #[test]
    fn induced_current_of_time_dependent_direct_field() {
        // F_10 = −F_01 = u0
        let f = EMField::Direct(DirectField::new().with(1, 0, Poly::var(0)));
        let j = induced_current(&f, &Chart::Cartesian, &[0.5, 0.1, 0.2, 0.3], &AD).unwrap();
        assert!((j.j[1] + 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(j.j[0], 0.0);
        assert!(!j.timelike);
        assert!(j.decompose().is_none());
    }

    #[test]
    fn space_charge_current_is_density() {
        let f = EMField::FromPotential(Potential::space_charge(0.8));
        for chart in [Chart::Cartesian, Chart::Spherical] {
            let j = induced_current(&f, &chart, &[0.0, 1.2, 0.7, 0.3], &AD).unwrap();
            assert!((j.j[0] - 0.8).abs() < 1e-12, "{chart}");
            let (sigma, v) = j.decompose().unwrap();
            assert!((sigma - 0.8).abs() < 1e-12);
            assert!((v[0] - 1.0).abs() < 1e-12);
        }
        let neg = EMField::FromPotential(Potential::space_charge(-0.5));
        let (sigma, v) = induced_current(&neg, &Chart::Cartesian, &[0.0, 0.3, 0.2, 0.1], &AD)
            .unwrap()
            .decompose()
            .unwrap();
        assert!(sigma < 0.0 && v[0] > 0.0);
    }

    #[test]
    fn trace_of_stress_vanishes() {
        let f = FieldStrength::from_pairs([0.3, -1.2, 0.5, 0.7, 0.1, -0.9]);
        let g = pullback_metric(&Chart::Spherical, &[0.0, 1.7, 1.1, 0.3], &AD).unwrap();
        let e = em_stress(&f, &g);
        let mut tr = 0.0;
        let mut scale = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                tr += g.g[i][j] * e[i][j];
                scale += (g.g[i][j] * e[i][j]).abs();
            }
        }
        assert!(tr.abs() < 1e-12 * scale);
    }

    #[test]
    fn work_orthogonality() {
        let f = FieldStrength::from_pairs([0.3, -1.2, 0.5, 0.7, 0.1, -0.9]);
        let g = pullback_metric(&Chart::Cartesian, &[0.0; 4], &AD).unwrap();
        let v = [1.25, 0.75, 0.0, 0.0];
        let l = lorentz_term(&f, &g.g_inv, 1.0, &v);
        assert!(linalg::quad(&g.g, &v, &l).abs() < 1e-15);
    }

    #[test]
    fn preset_parsing() {
        assert_eq!(Potential::parse("zero").unwrap().terms().len(), 0);
        let p = Potential::parse("plane_wave:0.1,2.0").unwrap();
        assert_eq!(p.terms(), &[PotentialTerm::PlaneWave { amplitude: 0.1, omega: 2.0 }]);
        assert_eq!(p.name(), "plane_wave:0.1,2.0");
        let s = Potential::parse("uniform_e:1e+0+coulomb:1.0").unwrap();
        assert_eq!(s.terms().len(), 2);
        assert!(Potential::parse("uniform_e").is_err());
        assert!(Potential::parse("laser:1.0").is_err());
        assert!(Potential::parse("coulomb:abc").is_err());
        assert!("-1".parse::<Sign>().unwrap() == Sign::Minus);
        assert!("auto".parse::<Sign>().is_err());
    }

    #[test]
    fn coulomb_origin_is_flagged_singular() {
        let p = Potential::coulomb(1.0);
        assert!(p.is_singular_near(&[0.0, 1e-4, 0.0, 0.0]));
        assert!(!p.is_singular_near(&[0.0, 0.5, 0.0, 0.0]));
    }
}
