//! Total stress-energy `W^{μν} = ρ v^μ v^ν + E^{μν}`, its divergence, and the
//! pointwise check that the divergence splits into the law of motion plus
//! `v^μ` times mass continuity once both Maxwell equations hold.
//!
//! Under the hypotheses, expanding `W^{μν}_{;ν}` gives
//!
//! ```text
//! W^{μν}_{;ν} = v^μ (ρ v^ν)_{;ν} + ρ a^μ + σ F^μ_ν v^ν
//! ```
//!
//! so `closure = W^{μν}_{;ν} − (ρ a^μ + s σ F^μ_ν v^ν) − v^μ (ρ v^ν)_{;ν}`
//! vanishes exactly for `s = +1` and equals `2 σ F^μ_ν v^ν` for `s = −1`.
//! Contracting with `v_μ` removes both the acceleration (`a ⟂ v`) and the
//! Lorentz term (antisymmetry), leaving mass continuity.

use crate::calculus::{divergence, CoordFn, DerivEngine, Real, TensorField, Variance};
use crate::chart::{metric_at, pullback_metric, Chart};
use crate::dust::{eom_terms, mass_continuity_residual, matter_stress_at, DustState};
use crate::em::{
    bianchi_residual, em_stress, induced_current, lorentz_term, source_residual, EMField, EmStressField, Sign,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4};

/// Closure tolerance with exact derivatives.
pub const AD_CLOSURE_TOLERANCE: f64 = 1e-6;

/// Allowed `max |σ v^μ − j^μ|` before the hypotheses count as violated.
pub const SOURCE_CONSISTENCY: f64 = 1e-6;

/// `W^{μν}` as a rank-2 upper tensor field.
pub struct TotalStressField<'a> {
    pub dust: &'a DustState,
    pub field: &'a EMField,
    pub chart: &'a Chart,
}

impl CoordFn for TotalStressField<'_> {
    fn len(&self) -> usize {
        16
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        let m = metric_at(self.chart, u);
        let f = self.field.strength_at(self.chart, u);
        let e = em_stress(&f, &m);
        let t = matter_stress_at(self.dust.rho_at(self.chart, u), &self.dust.velocity_at(self.chart, u));
        (0..16).map(|k| t[k / 4][k % 4] + e[k / 4][k % 4]).collect()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.chart.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.chart.name()
    }
}

impl TensorField for TotalStressField<'_> {
    fn variance(&self) -> Variance {
        Variance::upper2()
    }
}

/// `W^{μν}` at `u`.
pub fn total_stress(dust: &DustState, field: &EMField, chart: &Chart, u: &[f64; 4]) -> Result<Mat4> {
    let s = dust.sample(chart, u)?;
    let m = pullback_metric(chart, u, &DerivEngine::Ad2)?;
    let e = em_stress(&field.strength_at(chart, u), &m);
    let t = matter_stress_at(s.rho, &s.v);
    Ok(std::array::from_fn(|a| std::array::from_fn(|b| t[a][b] + e[a][b])))
}

/// `W^{μν}_{;ν}`, for any configuration.
pub fn total_divergence(
    dust: &DustState,
    field: &EMField,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
) -> Result<Vec4> {
    dust.sample(chart, u)?;
    let d = divergence(&TotalStressField { dust, field, chart }, chart, u, engine)?;
    Ok([d[0], d[1], d[2], d[3]])
}

/// `L^μ = E^{μν}_{;ν} − s σ F^μ_ν v^ν`, which vanishes when `σ v` is the
/// field's own current and `s = +1`.
pub fn em_divergence_lemma(
    field: &EMField,
    sigma: f64,
    v: &Vec4,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
    sign: Sign,
) -> Result<Vec4> {
    let d = divergence(&EmStressField { field, chart }, chart, u, engine)?;
    let f = field.strength(chart, u, engine)?;
    let m = pullback_metric(chart, u, &DerivEngine::Ad2)?;
    let l = lorentz_term(&f, &m.g_inv, sigma, v);
    Ok(std::array::from_fn(|mu| d[mu] - sign.value() * l[mu]))
}

/// Closure tolerance for `engine` given the size of the terms that cancel.
///
/// Finite differences get `10 h^p` truncation headroom plus a rounding floor
/// `100 ε / h`, both scaled by `max(magnitude, 1)`.
pub fn closure_tolerance(engine: &DerivEngine, magnitude: f64) -> f64 {
    match (engine.step(), engine.truncation_order()) {
        (Some(h), Some(p)) => {
            let scale = magnitude.max(1.0);
            10.0 * h.powi(p as i32) * scale + 100.0 * f64::EPSILON * scale / h
        }
        _ => AD_CLOSURE_TOLERANCE,
    }
}

/// Everything the identity check computes at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    pub point: Vec4,
    pub velocity: Vec4,
    pub rho: f64,
    pub sigma: f64,
    /// `W^{μν}_{;ν}`
    pub div_w: Vec4,
    /// `ρ a^μ + s σ F^μ_ν v^ν`
    pub eom_term: Vec4,
    /// `σ F^μ_ν v^ν`, unsigned
    pub lorentz_term: Vec4,
    /// `(ρ v^ν)_{;ν}`
    pub mass_continuity: f64,
    /// `v^μ (ρ v^ν)_{;ν}`
    pub continuity_term: Vec4,
    pub closure: Vec4,
    pub closure_norm: f64,
    /// `v_μ W^{μν}_{;ν} − (ρ v^ν)_{;ν}`
    pub projection_defect: f64,
    pub bianchi_max: f64,
    pub source_max: f64,
    pub sign: Sign,
}

impl IdentityReport {
    /// Largest of the cancelling terms, for tolerance scaling.
    pub fn magnitude(&self) -> f64 {
        linalg::norm(&self.div_w)
            .max(linalg::norm(&self.eom_term))
            .max(linalg::norm(&self.continuity_term))
    }
}

/// Evaluate every term of the identity at `u`.
///
/// Fails with `InconsistentSources` when `σ v^μ` is not the field's current:
/// the theorem's hypothesis is then false and the closure means nothing.
pub fn identity_check(
    dust: &DustState,
    field: &EMField,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
    sign: Sign,
) -> Result<IdentityReport> {
    engine.require_order(2)?;
    let terms = eom_terms(dust, field, chart, u, engine, sign)?;
    let s = terms.sample;

    let j = induced_current(field, chart, u, &DerivEngine::Ad2)?;
    let deviation = (0..4).map(|k| (s.sigma * s.v[k] - j.j[k]).abs()).fold(0.0, f64::max);
    if deviation > SOURCE_CONSISTENCY {
        return Err(Error::InconsistentSources { point: *u, deviation });
    }

    let div_w = total_divergence(dust, field, chart, u, engine)?;
    let mass = mass_continuity_residual(dust, chart, u, engine)?;
    let continuity_term = s.v.map(|x| x * mass);
    let closure: Vec4 = std::array::from_fn(|mu| div_w[mu] - terms.upper[mu] - continuity_term[mu]);
    let m = pullback_metric(chart, u, &DerivEngine::Ad2)?;
    let projection_defect = linalg::quad(&m.g, &s.v, &div_w) - mass;
    let bianchi_max = bianchi_residual(field, chart, u, engine)?.max_abs;
    let source_max = linalg::max_abs(&source_residual(field, s.sigma, &s.v, chart, u, engine)?);

    Ok(IdentityReport {
        point: *u,
        velocity: s.v,
        rho: s.rho,
        sigma: s.sigma,
        div_w,
        eom_term: terms.upper,
        lorentz_term: terms.lorentz,
        mass_continuity: mass,
        continuity_term,
        closure,
        closure_norm: linalg::norm(&closure),
        projection_defect,
        bianchi_max,
        source_max,
        sign,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dust::{ScalarProfile, VelocityProfile};
    use crate::em::{DirectField, Potential};
    use crate::poly::Poly;

    const AD: DerivEngine = DerivEngine::Ad2;

    fn comoving(rho: f64) -> DustState {
        DustState::new(
            ScalarProfile::Constant(rho),
            ScalarProfile::Constant(0.0),
            VelocityProfile::Comoving,
        )
    }

    #[test]
    fn vacuum_report_is_zero() {
        let r = identity_check(&DustState::vacuum(), &EMField::zero(), &Chart::Cartesian, &[0.0; 4], &AD, Sign::Plus)
            .unwrap();
        assert_eq!(r.closure_norm, 0.0);
        assert_eq!(r.div_w, [0.0; 4]);
        assert_eq!(r.eom_term, [0.0; 4]);
        assert_eq!(r.bianchi_max, 0.0);
        assert_eq!(r.source_max, 0.0);
    }

    #[test]
    fn source_free_uniform_field_closes_exactly() {
        let f = EMField::FromPotential(Potential::uniform_e(1.0));
        let r = identity_check(&comoving(1.0), &f, &Chart::Cartesian, &[0.1, 0.2, 0.3, 0.4], &AD, Sign::Plus).unwrap();
        assert_eq!(r.closure, [0.0; 4]);
    }

    #[test]
    fn total_stress_examples() {
        let u = [0.0, 0.3, 0.1, 0.2];
        let w = total_stress(&DustState::vacuum(), &EMField::zero(), &Chart::Cartesian, &u).unwrap();
        assert_eq!(w, [[0.0; 4]; 4]);
        let f = EMField::FromPotential(Potential::uniform_e(1.0));
        let w = total_stress(&comoving(1.0), &f, &Chart::Cartesian, &u).unwrap();
        assert!((w[0][0] - (1.0 + 1.0 / (8.0 * PI))).abs() < 1e-15);
    }

    #[test]
    fn mixed_trace_of_total_stress_is_density() {
        let f = EMField::FromPotential(Potential::parse("plane_wave:0.3,1.2+uniform_b:0.5").unwrap());
        let d = DustState::parse("boost:0.4", &f).unwrap();
        let u = [0.2, 1.5, 1.1, 0.7];
        let w = total_stress(&d, &f, &Chart::Spherical, &u).unwrap();
        let g = pullback_metric(&Chart::Spherical, &u, &AD).unwrap();
        let tr: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| g.g[a][b] * w[a][b]).sum();
        assert!((tr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inertial_dust_and_uniform_field_are_divergence_free() {
        let u = [0.1, 0.2, 0.3, 0.4];
        let d = DustState::parse("boost:0.6", &EMField::zero()).unwrap();
        assert_eq!(total_divergence(&d, &EMField::zero(), &Chart::Cartesian, &u, &AD).unwrap(), [0.0; 4]);
        let f = EMField::FromPotential(Potential::uniform_e(1.0));
        assert_eq!(
            total_divergence(&DustState::vacuum(), &f, &Chart::Cartesian, &u, &AD).unwrap(),
            [0.0; 4]
        );
    }

    #[test]
    fn lemma_for_free_wave() {
        let f = EMField::FromPotential(Potential::plane_wave(0.1, 2.0));
        let l = em_divergence_lemma(&f, 0.0, &[1.0, 0.0, 0.0, 0.0], &Chart::Spherical, &[0.3, 1.2, 0.9, 0.4], &AD, Sign::Plus)
            .unwrap();
        assert!(linalg::max_abs(&l) < 1e-8);
    }

    #[test]
    fn lemma_singles_out_one_sign_for_direct_field() {
        // F_10 = u0: j = (0, −1/4π, 0, 0) is spacelike, so feed σ v = j directly
        let f = EMField::Direct(DirectField::new().with(1, 0, Poly::var(0)));
        let u = [0.5, 0.2, 0.1, -0.3];
        let j = induced_current(&f, &Chart::Cartesian, &u, &AD).unwrap().j;
        let plus = em_divergence_lemma(&f, 1.0, &j, &Chart::Cartesian, &u, &AD, Sign::Plus).unwrap();
        let minus = em_divergence_lemma(&f, 1.0, &j, &Chart::Cartesian, &u, &AD, Sign::Minus).unwrap();
        assert!(linalg::max_abs(&plus) < 1e-8);
        assert!(linalg::max_abs(&minus) > 1e-3);
    }

    #[test]
    fn inconsistent_sources_are_flagged() {
        let d = DustState::new(
            ScalarProfile::Constant(1.0),
            ScalarProfile::Constant(1.0),
            VelocityProfile::Comoving,
        );
        let r = identity_check(&d, &EMField::zero(), &Chart::Cartesian, &[0.0; 4], &AD, Sign::Plus);
        assert!(matches!(r, Err(Error::InconsistentSources { .. })));
    }

    #[test]
    fn induced_space_charge_closes_for_plus_only() {
        let f = EMField::FromPotential(Potential::parse("space_charge:1.0+uniform_e:0.7+plane_wave:0.2,1.1").unwrap());
        let d = DustState::induced(ScalarProfile::Chart(Poly::constant(1.0).plus(&Poly::var(1).scaled(0.1))), f.clone());
        let u = [0.1, 1.4, 0.8, 2.2];
        let plus = identity_check(&d, &f, &Chart::Spherical, &u, &AD, Sign::Plus).unwrap();
        assert!(plus.closure_norm < 1e-8, "{}", plus.closure_norm);
        assert!(plus.projection_defect.abs() < 1e-8);
        let minus = identity_check(&d, &f, &Chart::Spherical, &u, &AD, Sign::Minus).unwrap();
        let lorentz = linalg::norm(&minus.lorentz_term);
        assert!((minus.closure_norm - 2.0 * lorentz).abs() < 1e-8 * lorentz.max(1.0));
    }

    #[test]
    fn tolerance_scales_with_engine() {
        assert_eq!(closure_tolerance(&AD, 50.0), AD_CLOSURE_TOLERANCE);
        let t2 = closure_tolerance(&DerivEngine::Fd2 { h: 1e-2 }, 1.0);
        assert!((t2 - (1e-3 + 100.0 * f64::EPSILON / 1e-2)).abs() < 1e-15);
        assert!(closure_tolerance(&DerivEngine::Fd4 { h: 1e-2 }, 1.0) < t2);
    }
}
