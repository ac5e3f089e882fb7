//! Charged dust: densities `ρ`, `σ`, four-velocity `v^μ`, the matter stress
//! tensor, continuity residuals and the law-of-motion residual.

use crate::calculus::{divergence, CoordFn, DerivEngine, Real, TensorField, Variance};
use crate::chart::{christoffel, metric_at, pullback_metric, vector_from_cartesian, Chart, MetricData};
use crate::em::{induced_current, induced_current_at, EMField, Sign};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4};
use crate::poly::Poly;

/// Below this max-abs the induced current counts as absent.
pub const ZERO_CURRENT: f64 = 1e-10;

/// A scalar density profile.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarProfile {
    Constant(f64),
    /// Polynomial in chart coordinates.
    Chart(Poly),
    /// Polynomial in Cartesian coordinates `x(u)`.
    Cartesian(Poly),
    /// `c / r²`, `r` the Cartesian spatial radius.
    InverseSquareRadius(f64),
}

impl ScalarProfile {
    pub fn eval<T: Real>(&self, chart: &Chart, u: &[T; 4]) -> T {
        match self {
            ScalarProfile::Constant(c) => T::cst(*c),
            ScalarProfile::Chart(p) => p.eval(u),
            ScalarProfile::Cartesian(p) => p.eval(&chart.to_cartesian(u)),
            ScalarProfile::InverseSquareRadius(c) => {
                let x = chart.to_cartesian(u);
                (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).recip() * *c
            }
        }
    }
}

/// A prescribed (not yet normalized) velocity direction.
#[derive(Clone, Debug, PartialEq)]
pub enum VelocityProfile {
    /// At rest in the Cartesian frame.
    Comoving,
    /// Constant three-velocity `β` along `+x`.
    Boost(f64),
    /// Rigid rotation about the z axis, physical direction `(1, −ωy, ωx, 0)`.
    Rotation(f64),
    /// Radial outflow at constant speed `β`.
    Radial(f64),
    /// Raw Cartesian components as polynomials in `x(u)`.
    CartesianPoly(Box<[Poly; 4]>),
    /// Raw chart components as polynomials in `u`.
    ChartPoly(Box<[Poly; 4]>),
}

impl VelocityProfile {
    /// Unnormalized upper components in the chart.
    pub fn raw<T: Real>(&self, chart: &Chart, u: &[T; 4]) -> Vec4<T> {
        let one = T::one();
        let z = T::zero();
        let cart = match self {
            VelocityProfile::ChartPoly(p) => return std::array::from_fn(|k| p[k].eval(u)),
            VelocityProfile::Comoving => [one, z, z, z],
            VelocityProfile::Boost(b) => [one, T::cst(*b), z, z],
            VelocityProfile::Rotation(w) => {
                let x = chart.to_cartesian(u);
                [one, x[2] * -*w, x[1] * *w, z]
            }
            VelocityProfile::Radial(b) => {
                let x = chart.to_cartesian(u);
                let r = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
                let k = r.recip() * *b;
                [one, x[1] * k, x[2] * k, x[3] * k]
            }
            VelocityProfile::CartesianPoly(p) => {
                let x = chart.to_cartesian(u);
                std::array::from_fn(|k| p[k].eval(&x))
            }
        };
        vector_from_cartesian(chart, u, &cart)
    }
}

/// How charge and velocity are supplied.
#[derive(Clone, Debug, PartialEq)]
pub enum Flow {
    Prescribed { sigma: ScalarProfile, v: VelocityProfile },
    /// `σ v^μ` equals the current induced by the field: `v = j/|j|`
    /// future-pointing, `σ = sign(j⁰) |j|`. Where the current vanishes
    /// identically the dust is comoving and uncharged.
    Induced(EMField),
}

/// The dust continuum. Immutable; evaluation is pure.
#[derive(Clone, Debug, PartialEq)]
pub struct DustState {
    pub rho: ScalarProfile,
    pub flow: Flow,
}

/// Pointwise values of a dust state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DustSample {
    pub rho: f64,
    pub sigma: f64,
    pub v: Vec4,
}

impl DustState {
    pub fn new(rho: ScalarProfile, sigma: ScalarProfile, v: VelocityProfile) -> Self {
        DustState {
            rho,
            flow: Flow::Prescribed { sigma, v },
        }
    }

    pub fn induced(rho: ScalarProfile, field: EMField) -> Self {
        DustState {
            rho,
            flow: Flow::Induced(field),
        }
    }

    /// Empty space: `ρ = σ = 0`, comoving.
    pub fn vacuum() -> Self {
        Self::new(
            ScalarProfile::Constant(0.0),
            ScalarProfile::Constant(0.0),
            VelocityProfile::Comoving,
        )
    }

    /// Preset names: `comoving`, `boost:β`, `rotation:ω`, `radial[:β]`,
    /// `induced`. Uncharged presets carry `ρ = 1` (`radial` uses `ρ = 1/r²`
    /// so that mass is conserved).
    pub fn parse(spec: &str, field: &EMField) -> Result<Self> {
        let spec = spec.trim();
        let (name, param) = match spec.split_once(':') {
            Some((n, p)) => {
                let v: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad dust parameter `{p}`")))?;
                if !v.is_finite() {
                    return Err(Error::config(format!("non-finite dust parameter `{p}`")));
                }
                (n.trim(), Some(v))
            }
            None => (spec, None),
        };
        let unit = ScalarProfile::Constant(1.0);
        let neutral = ScalarProfile::Constant(0.0);
        let need = |p: Option<f64>| p.ok_or_else(|| Error::config(format!("dust preset `{name}` needs a parameter")));
        let speed = |b: f64| -> Result<f64> {
            if b.abs() < 1.0 {
                Ok(b)
            } else {
                Err(Error::config(format!("dust speed {b} must be below 1")))
            }
        };
        let state = match name {
            "comoving" | "induced" if param.is_some() => {
                return Err(Error::config(format!("dust preset `{name}` takes no parameter")))
            }
            "comoving" => Self::new(unit, neutral, VelocityProfile::Comoving),
            "induced" => Self::induced(unit, field.clone()),
            "boost" => Self::new(unit, neutral, VelocityProfile::Boost(speed(need(param)?)?)),
            "rotation" => Self::new(unit, neutral, VelocityProfile::Rotation(need(param)?)),
            "radial" => Self::new(
                ScalarProfile::InverseSquareRadius(1.0),
                neutral,
                VelocityProfile::Radial(speed(param.unwrap_or(0.5))?),
            ),
            other => return Err(Error::config(format!("unknown dust preset `{other}`"))),
        };
        Ok(state)
    }

    pub fn rho_at<T: Real>(&self, chart: &Chart, u: &[T; 4]) -> T {
        self.rho.eval(chart, u)
    }

    /// `(σ, v^μ)` at any scalar depth. Assumes the point passed
    /// [`sample`](Self::sample); otherwise components may be NaN.
    pub fn sigma_v_at<T: Real>(&self, chart: &Chart, u: &[T; 4]) -> (T, Vec4<T>) {
        let m = metric_at(chart, u);
        match &self.flow {
            Flow::Prescribed { sigma, v } => {
                let raw = v.raw(chart, u);
                (sigma.eval(chart, u), normalize_at(&raw, &m.g))
            }
            Flow::Induced(field) => {
                let j = induced_current_at(field, chart, u);
                if linalg::max_abs(&linalg::re_vec(&j)) < ZERO_CURRENT {
                    let raw = VelocityProfile::Comoving.raw(chart, u);
                    return (T::zero(), normalize_at(&raw, &m.g));
                }
                let n = linalg::quad(&m.g, &j, &j).sqrt();
                let sigma = if j[0].re() >= 0.0 { n } else { -n };
                (sigma, j.map(|x| x / sigma))
            }
        }
    }

    pub fn velocity_at<T: Real>(&self, chart: &Chart, u: &[T; 4]) -> Vec4<T> {
        self.sigma_v_at(chart, u).1
    }

    /// Validated pointwise values: domain, `ρ ≥ 0`, timelike velocity.
    pub fn sample(&self, chart: &Chart, u: &[f64; 4]) -> Result<DustSample> {
        chart.check_domain(u)?;
        let rho = self.rho_at(chart, u);
        if rho < 0.0 {
            return Err(Error::NegativeDensity { rho });
        }
        let g = pullback_metric(chart, u, &DerivEngine::Ad2)?;
        match &self.flow {
            Flow::Prescribed { sigma, v } => {
                let v = normalize_velocity(&v.raw(chart, u), &g)?;
                Ok(DustSample {
                    rho,
                    sigma: sigma.eval(chart, u),
                    v,
                })
            }
            Flow::Induced(field) => {
                let cur = induced_current(field, chart, u, &DerivEngine::Ad2)?;
                if linalg::max_abs(&cur.j) < ZERO_CURRENT {
                    let v = normalize_velocity(&VelocityProfile::Comoving.raw(chart, u), &g)?;
                    return Ok(DustSample { rho, sigma: 0.0, v });
                }
                let (sigma, v) = cur.decompose().ok_or(Error::NotTimelike { norm2: cur.norm2 })?;
                Ok(DustSample { rho, sigma, v })
            }
        }
    }

    /// Charge-to-mass ratio at `u` for worldline use.
    pub fn q_over_m(&self, chart: &Chart, u: &[f64; 4]) -> Result<f64> {
        let s = self.sample(chart, u)?;
        crate::worldline::ParticleParams::from_densities(s.rho, s.sigma).map(|p| p.q_over_m)
    }
}

/// `v / √g(v, v)`, generic and unchecked.
pub fn normalize_at<T: Real>(v: &Vec4<T>, g: &Mat4<T>) -> Vec4<T> {
    let n = linalg::quad(g, v, v).sqrt();
    v.map(|x| x / n)
}

/// Scale a timelike vector to unit norm, preserving its time orientation.
pub fn normalize_velocity(v_raw: &Vec4, g: &MetricData) -> Result<Vec4> {
    let n2 = linalg::quad(&g.g, v_raw, v_raw);
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::NotTimelike { norm2: n2 });
    }
    Ok(normalize_at(v_raw, &g.g))
}

/// `ρ v^μ v^ν`.
pub fn matter_stress_at<T: Real>(rho: T, v: &Vec4<T>) -> Mat4<T> {
    std::array::from_fn(|m| std::array::from_fn(|n| rho * (v[m] * v[n])))
}

pub fn matter_stress(rho: f64, v: &Vec4) -> Result<Mat4> {
    if rho < 0.0 {
        return Err(Error::NegativeDensity { rho });
    }
    Ok(matter_stress_at(rho, v))
}

/// `v^μ` as a vector field.
pub struct VelocityField<'a> {
    pub dust: &'a DustState,
    pub chart: &'a Chart,
}

/// `ρ v^μ`.
pub struct MassFlux<'a> {
    pub dust: &'a DustState,
    pub chart: &'a Chart,
}

/// `σ v^μ`.
pub struct ChargeFlux<'a> {
    pub dust: &'a DustState,
    pub chart: &'a Chart,
}

/// `ρ v^μ v^ν`.
pub struct MatterStressField<'a> {
    pub dust: &'a DustState,
    pub chart: &'a Chart,
}

macro_rules! dust_field {
    ($ty:ident, $len:expr, $var:expr, |$d:ident, $c:ident, $u:ident| $body:expr) => {
        impl CoordFn for $ty<'_> {
            fn len(&self) -> usize {
                $len
            }
            fn eval<T: Real>(&self, $u: &[T; 4]) -> Vec<T> {
                let ($d, $c) = (self.dust, self.chart);
                $body
            }
            fn in_domain(&self, u: &[f64; 4]) -> bool {
                self.chart.contains(u)
            }
            fn domain_name(&self) -> &'static str {
                self.chart.name()
            }
        }

        impl TensorField for $ty<'_> {
            fn variance(&self) -> Variance {
                $var
            }
        }
    };
}

dust_field!(VelocityField, 4, Variance::vector(), |d, c, u| d.velocity_at(c, u).to_vec());
dust_field!(MassFlux, 4, Variance::vector(), |d, c, u| {
    let rho = d.rho_at(c, u);
    d.velocity_at(c, u).iter().map(|&x| rho * x).collect()
});
dust_field!(ChargeFlux, 4, Variance::vector(), |d, c, u| {
    let (sigma, v) = d.sigma_v_at(c, u);
    v.iter().map(|&x| sigma * x).collect()
});
dust_field!(MatterStressField, 16, Variance::upper2(), |d, c, u| {
    matter_stress_at(d.rho_at(c, u), &d.velocity_at(c, u))
        .iter()
        .flatten()
        .copied()
        .collect()
});

/// `(ρ v^ν)_{;ν}`.
pub fn mass_continuity_residual(dust: &DustState, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<f64> {
    dust.sample(chart, u)?;
    Ok(divergence(&MassFlux { dust, chart }, chart, u, engine)?[0])
}

/// `(σ v^ν)_{;ν}`.
pub fn charge_continuity_residual(dust: &DustState, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<f64> {
    dust.sample(chart, u)?;
    Ok(divergence(&ChargeFlux { dust, chart }, chart, u, engine)?[0])
}

/// `a^μ = v^μ_{;ν} v^ν` of the velocity field.
pub fn velocity_acceleration(dust: &DustState, chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<Vec4> {
    engine.require_order(2)?;
    let s = dust.sample(chart, u)?;
    let dv = engine.partials(&VelocityField { dust, chart }, u)?;
    let gamma = christoffel(chart, u, engine)?;
    let geo = gamma.contract_pair(&s.v, &s.v);
    Ok(std::array::from_fn(|mu| {
        let mut a = geo[mu];
        for nu in 0..4 {
            a += dv[mu * 4 + nu] * s.v[nu];
        }
        a
    }))
}

/// Pieces of the law of motion at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EomTerms {
    pub sample: DustSample,
    /// `v^μ_{;ν} v^ν`
    pub acceleration: Vec4,
    /// `σ F^μ_ν v^ν` (unsigned)
    pub lorentz: Vec4,
    /// `ρ a^μ + s σ F^μ_ν v^ν`
    pub upper: Vec4,
    /// `ρ a_μ + s σ F_μν v^ν`
    pub lower: Vec4,
}

pub fn eom_terms(
    dust: &DustState,
    field: &EMField,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
    sign: Sign,
) -> Result<EomTerms> {
    let sample = dust.sample(chart, u)?;
    let acceleration = velocity_acceleration(dust, chart, u, engine)?;
    let f = field.strength(chart, u, engine)?;
    let m = pullback_metric(chart, u, &DerivEngine::Ad2)?;
    let lorentz = crate::em::lorentz_term(&f, &m.g_inv, sample.sigma, &sample.v);
    let s = sign.value();
    let upper = std::array::from_fn(|mu| sample.rho * acceleration[mu] + s * lorentz[mu]);
    let a_low = linalg::mat_vec(&m.g, &acceleration);
    let fv = linalg::mat_vec(&f.matrix(), &sample.v);
    let lower = std::array::from_fn(|mu| sample.rho * a_low[mu] + s * sample.sigma * fv[mu]);
    Ok(EomTerms {
        sample,
        acceleration,
        lorentz,
        upper,
        lower,
    })
}

/// `R_μ = ρ v_{μ;ν} v^ν + s σ F_μν v^ν`.
pub fn eom_residual(
    dust: &DustState,
    field: &EMField,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
    sign: Sign,
) -> Result<Vec4> {
    Ok(eom_terms(dust, field, chart, u, engine, sign)?.lower)
}
