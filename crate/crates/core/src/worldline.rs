//! Single-particle worldlines under the law of motion, integrated in proper
//! time with classical RK4.

use std::io::{self, Write};

use crate::calculus::DerivEngine;
use crate::chart::{christoffel, christoffel_at, metric_at, Chart};
use crate::em::{EMField, Sign};
use crate::error::{Error, Result};
use crate::linalg::{self, Vec4};

/// Allowed `|g(v, v) − 1|` when calling [`acceleration`] directly.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct WorldlineState {
    pub u: Vec4,
    /// `dx^μ/ds`
    pub v: Vec4,
    /// Accumulated proper time.
    pub s: f64,
}

impl WorldlineState {
    pub fn new(u: Vec4, v: Vec4) -> Self {
        WorldlineState { u, v, s: 0.0 }
    }

    /// `g(v, v) − 1`.
    pub fn norm_drift(&self, chart: &Chart) -> f64 {
        let m = metric_at(chart, &self.u);
        linalg::quad(&m.g, &self.v, &self.v) - 1.0
    }

    /// State from a Cartesian position and three-velocity, mapped into `chart`.
    pub fn from_cartesian(chart: &Chart, x: Vec4, beta: [f64; 3]) -> Result<Self> {
        let b2 = beta.iter().map(|b| b * b).sum::<f64>();
        if b2 >= 1.0 {
            return Err(Error::NotTimelike { norm2: 1.0 - b2 });
        }
        let gamma = 1.0 / (1.0 - b2).sqrt();
        let v_cart = [gamma, gamma * beta[0], gamma * beta[1], gamma * beta[2]];
        let u = chart.from_cartesian(&x);
        chart.check_domain(&u)?;
        let v = crate::chart::vector_from_cartesian(chart, &u, &v_cart);
        Ok(WorldlineState::new(u, v))
    }

    /// Position and velocity mapped to Cartesian components.
    pub fn to_cartesian(&self, chart: &Chart) -> (Vec4, Vec4) {
        (
            chart.to_cartesian(&self.u),
            crate::chart::vector_to_cartesian(chart, &self.u, &self.v),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleParams {
    /// Per-particle `σ/ρ`.
    pub q_over_m: f64,
}

impl ParticleParams {
    pub fn new(q_over_m: f64) -> Result<Self> {
        if q_over_m.is_finite() {
            Ok(ParticleParams { q_over_m })
        } else {
            Err(Error::UnboundedChargeToMass)
        }
    }

    /// Charge-to-mass ratio of a dust element.
    pub fn from_densities(rho: f64, sigma: f64) -> Result<Self> {
        if rho < 0.0 {
            return Err(Error::NegativeDensity { rho });
        }
        if rho == 0.0 {
            return if sigma == 0.0 {
                Ok(ParticleParams { q_over_m: 0.0 })
            } else {
                Err(Error::UnboundedChargeToMass)
            };
        }
        Self::new(sigma / rho)
    }
}

/// `a^μ = −Γ^μ_αβ v^α v^β − s (q/m) F^μ_ν v^ν`.
pub fn acceleration(
    state: &WorldlineState,
    chart: &Chart,
    field: &EMField,
    params: &ParticleParams,
    sign: Sign,
    engine: &DerivEngine,
) -> Result<Vec4> {
    let drift = state.norm_drift(chart);
    if drift.abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotTimelike { norm2: drift + 1.0 });
    }
    raw_acceleration(&state.u, &state.v, chart, field, params, sign, engine)
}

fn raw_acceleration(
    u: &Vec4,
    v: &Vec4,
    chart: &Chart,
    field: &EMField,
    params: &ParticleParams,
    sign: Sign,
    engine: &DerivEngine,
) -> Result<Vec4> {
    chart.check_domain(u)?;
    let gamma = if engine.is_exact() {
        engine.require_order(2)?;
        christoffel_at(chart, u)
    } else {
        christoffel(chart, u, engine)?
    };
    let geo = gamma.contract_pair(v, v);
    let mut a = geo.map(|x| -x);
    if params.q_over_m != 0.0 {
        let f = field.strength(chart, u, engine)?;
        let m = metric_at(chart, u);
        let fv = linalg::mat_vec(&f.mixed(&m.g_inv), v);
        let k = sign.value() * params.q_over_m;
        for mu in 0..4 {
            a[mu] -= k * fv[mu];
        }
    }
    Ok(a)
}

/// Fixed-step RK4 integrator for `du/ds = v`, `dv/ds = a`.
#[derive(Clone, Debug)]
pub struct Integrator<'a> {
    pub chart: &'a Chart,
    pub field: &'a EMField,
    pub params: ParticleParams,
    pub sign: Sign,
    pub engine: DerivEngine,
    /// Rescale `v` to unit norm after each step. Off by default so drift
    /// stays observable.
    pub renormalize: bool,
}

impl<'a> Integrator<'a> {
    pub fn new(chart: &'a Chart, field: &'a EMField, params: ParticleParams) -> Self {
        Integrator {
            chart,
            field,
            params,
            sign: Sign::Plus,
            engine: DerivEngine::Ad2,
            renormalize: false,
        }
    }

    pub fn with_engine(mut self, engine: DerivEngine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    fn rhs(&self, u: &Vec4, v: &Vec4) -> Result<(Vec4, Vec4)> {
        let a = raw_acceleration(u, v, self.chart, self.field, &self.params, self.sign, &self.engine)?;
        Ok((*v, a))
    }

    /// One classical RK4 step. Any stage outside the chart domain is a
    /// `DomainExit` carrying the last valid state.
    pub fn rk4_step(&self, state: &WorldlineState, ds: f64) -> Result<WorldlineState> {
        if !(ds > 0.0 && ds.is_finite()) {
            return Err(Error::config(format!("step ds = {ds} must be positive")));
        }
        let exit = |e: Error| match e {
            Error::Domain { .. } | Error::SingularJacobian { .. } => Error::DomainExit {
                chart: self.chart.name(),
                s: state.s,
                last: Box::new(state.clone()),
            },
            other => other,
        };
        let add = |x: &Vec4, k: &Vec4, c: f64| -> Vec4 { std::array::from_fn(|i| x[i] + c * k[i]) };
        let (u, v) = (&state.u, &state.v);
        let (k1u, k1v) = self.rhs(u, v).map_err(exit)?;
        let (k2u, k2v) = self.rhs(&add(u, &k1u, ds / 2.0), &add(v, &k1v, ds / 2.0)).map_err(exit)?;
        let (k3u, k3v) = self.rhs(&add(u, &k2u, ds / 2.0), &add(v, &k2v, ds / 2.0)).map_err(exit)?;
        let (k4u, k4v) = self.rhs(&add(u, &k3u, ds), &add(v, &k3v, ds)).map_err(exit)?;
        let comb = |x: &Vec4, a: &Vec4, b: &Vec4, c: &Vec4, d: &Vec4| -> Vec4 {
            std::array::from_fn(|i| x[i] + ds / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
        };
        let u_new = comb(u, &k1u, &k2u, &k3u, &k4u);
        let mut v_new = comb(v, &k1v, &k2v, &k3v, &k4v);
        if !self.chart.contains(&u_new) {
            return Err(exit(Error::Domain {
                chart: self.chart.name(),
                point: u_new,
            }));
        }
        if self.renormalize {
            let m = metric_at(self.chart, &u_new);
            let n2 = linalg::quad(&m.g, &v_new, &v_new);
            if n2 <= 0.0 {
                return Err(Error::NotTimelike { norm2: n2 });
            }
            let n = n2.sqrt();
            v_new = v_new.map(|x| x / n);
        }
        Ok(WorldlineState {
            u: u_new,
            v: v_new,
            s: state.s + ds,
        })
    }

    /// `n_steps` steps of size `ds`, sampling the initial state and every
    /// `every`-th state after it (the final state is always included).
    pub fn integrate(&self, initial: &WorldlineState, ds: f64, n_steps: usize, every: usize) -> Result<Trajectory> {
        match self.integrate_partial(initial, ds, n_steps, every)? {
            (t, None) => Ok(t),
            (_, Some(e)) => Err(e),
        }
    }

    /// Like [`integrate`](Self::integrate), but a `DomainExit` or other
    /// step failure returns the samples gathered so far together with the
    /// error. Only an invalid initial state is an outright error.
    pub fn integrate_partial(
        &self,
        initial: &WorldlineState,
        ds: f64,
        n_steps: usize,
        every: usize,
    ) -> Result<(Trajectory, Option<Error>)> {
        if !(ds > 0.0 && ds.is_finite()) {
            return Err(Error::config(format!("step ds = {ds} must be positive")));
        }
        let every = every.max(1);
        self.chart.check_domain(&initial.u)?;
        let mut samples = vec![TrajectoryRow::new(initial.clone(), self.chart)];
        let mut state = initial.clone();
        let mut failure = None;
        for step in 1..=n_steps {
            match self.rk4_step(&state, ds) {
                Ok(next) => state = next,
                Err(e) => {
                    if samples.last().map(|r| r.state.s) != Some(state.s) {
                        samples.push(TrajectoryRow::new(state.clone(), self.chart));
                    }
                    failure = Some(e);
                    break;
                }
            }
            if step % every == 0 || step == n_steps {
                samples.push(TrajectoryRow::new(state.clone(), self.chart));
            }
        }
        let t = Trajectory {
            chart: *self.chart,
            samples,
        };
        Ok((t, failure))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub state: WorldlineState,
    pub norm_drift: f64,
}

impl TrajectoryRow {
    fn new(state: WorldlineState, chart: &Chart) -> Self {
        let norm_drift = state.norm_drift(chart);
        TrajectoryRow { state, norm_drift }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub chart: Chart,
    pub samples: Vec<TrajectoryRow>,
}

pub const TRAJECTORY_HEADER: &str = "s,u0,u1,u2,u3,v0,v1,v2,v3,norm_drift";

impl Trajectory {
    pub fn last(&self) -> &WorldlineState {
        &self.samples.last().expect("trajectory holds its initial state").state
    }

    pub fn max_drift(&self) -> f64 {
        self.samples.iter().map(|r| r.norm_drift.abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for r in &self.samples {
            let st = &r.state;
            write!(out, "{:.17e}", st.s)?;
            for x in st.u.iter().chain(st.v.iter()) {
                write!(out, ",{x:.17e}")?;
            }
            writeln!(out, ",{:.17e}", r.norm_drift)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::Potential;

    fn at_rest() -> WorldlineState {
        WorldlineState::new([0.0; 4], [1.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn free_particle_has_no_acceleration() {
        let f = EMField::zero();
        let p = ParticleParams::new(1.0).unwrap();
        let st = WorldlineState::new([0.0; 4], [1.25, 0.75, 0.0, 0.0]);
        let a = acceleration(&st, &Chart::Cartesian, &f, &p, Sign::Plus, &DerivEngine::Ad2).unwrap();
        assert_eq!(a, [0.0; 4]);
    }

    #[test]
    fn positive_charge_accelerates_along_field() {
        let f = EMField::FromPotential(Potential::uniform_e(1.0));
        let p = ParticleParams::new(1.0).unwrap();
        let a = acceleration(&at_rest(), &Chart::Cartesian, &f, &p, Sign::Plus, &DerivEngine::Ad2).unwrap();
        assert_eq!(a, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn radial_geodesic_term_in_spherical_chart() {
        // θ = π/2, purely radial: only Γ^r_rr (zero) enters, and v^θ, v^φ vanish
        let (r, th) = (2.0, 1.0);
        let st = WorldlineState::new([0.0, r, th, 0.3], [1.25, 0.75, 0.0, 0.0]);
        let f = EMField::zero();
        let p = ParticleParams::new(0.0).unwrap();
        let a = acceleration(&st, &Chart::Spherical, &f, &p, Sign::Plus, &DerivEngine::Ad2).unwrap();
        assert!(linalg::max_abs(&a) < 1e-14);
        // tangential motion: a^r = r (v^θ)² with analytic Γ^r_θθ = −r
        let vt = 0.2;
        let v0 = (1.0 + r * r * vt * vt).sqrt();
        let st = WorldlineState::new([0.0, r, th, 0.3], [v0, 0.0, vt, 0.0]);
        let a = acceleration(&st, &Chart::Spherical, &f, &p, Sign::Plus, &DerivEngine::Ad2).unwrap();
        assert!((a[1] - r * vt * vt).abs() < 1e-14);
    }

    #[test]
    fn unnormalized_velocity_rejected() {
        let st = WorldlineState::new([0.0; 4], [2.0, 0.0, 0.0, 0.0]);
        let p = ParticleParams::new(1.0).unwrap();
        let r = acceleration(&st, &Chart::Cartesian, &EMField::zero(), &p, Sign::Plus, &DerivEngine::Ad2);
        assert!(matches!(r, Err(Error::NotTimelike { .. })));
    }

    #[test]
    fn rk4_is_exact_on_inertial_motion() {
        let f = EMField::zero();
        let integ = Integrator::new(&Chart::Cartesian, &f, ParticleParams::new(1.0).unwrap());
        let st = WorldlineState::new([0.1, 0.2, 0.3, 0.4], [1.25, 0.75, 0.0, 0.0]);
        let t = integ.integrate(&st, 0.25, 8, 1).unwrap();
        let end = t.last();
        assert_eq!(end.u, [0.1 + 2.5, 0.2 + 1.5, 0.3, 0.4]);
        assert_eq!(end.s, 2.0);
        assert_eq!(t.samples.len(), 9);
    }

    #[test]
    fn sampling_keeps_final_state() {
        let f = EMField::zero();
        let integ = Integrator::new(&Chart::Cartesian, &f, ParticleParams::new(0.0).unwrap());
        let t = integ.integrate(&at_rest(), 0.1, 10, 4).unwrap();
        let s: Vec<f64> = t.samples.iter().map(|r| r.state.s).collect();
        assert_eq!(s.len(), 4);
        assert!((s[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leaving_the_chart_reports_last_state() {
        let f = EMField::zero();
        let integ = Integrator::new(&Chart::Spherical, &f, ParticleParams::new(0.0).unwrap());
        // heading straight at the origin
        let st = WorldlineState::new([0.0, 0.5, 1.0, 0.0], [1.25, -0.75, 0.0, 0.0]);
        match integ.integrate(&st, 0.05, 100, 1) {
            Err(Error::DomainExit { last, .. }) => assert!(last.u[1] > 0.0 && last.u[1] < 0.1),
            other => panic!("expected DomainExit, got {other:?}"),
        }
    }

    #[test]
    fn charge_to_mass_from_densities() {
        assert_eq!(ParticleParams::from_densities(2.0, 1.0).unwrap().q_over_m, 0.5);
        assert_eq!(ParticleParams::from_densities(0.0, 0.0).unwrap().q_over_m, 0.0);
        assert_eq!(ParticleParams::from_densities(0.0, 1.0), Err(Error::UnboundedChargeToMass));
        assert!(ParticleParams::new(f64::INFINITY).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = EMField::zero();
        let integ = Integrator::new(&Chart::Cartesian, &f, ParticleParams::new(0.0).unwrap());
        let t = integ.integrate(&at_rest(), 0.5, 2, 1).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 10);
    }
}
