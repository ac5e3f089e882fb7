//! Curvilinear charts on Minkowski spacetime and the geometry they induce.
//!
//! Every chart is a smooth map `u ↦ x(u)` onto Cartesian Minkowski
//! coordinates. The metric is the pullback `g_μν = η_ab J^a_μ J^b_ν` with
//! `η = diag(+1, −1, −1, −1)`, and Christoffel symbols come from the metric
//! derivatives, not from second derivatives of the map directly.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::calculus::{ad_partials, CoordFn, DerivEngine, Real, TensorField, Variance};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4, ETA_DIAG};

/// Validity predicates stay this far from coordinate singularities.
pub const DOMAIN_MARGIN: f64 = 1e-6;
/// Below this `|det J|` a chart point is treated as singular.
pub const SINGULAR_JACOBIAN: f64 = 1e-12;
/// Allowed `|g · g⁻¹ − I|` after inversion.
pub const INVERSION_RESIDUAL: f64 = 1e-8;

/// Constant non-orthogonal map `x = M u` used by the skewed chart.
/// Row 0 is `(1, 0, 0, 0)` so `u⁰` stays the time coordinate.
pub const SKEW: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.3, 1.0, 0.2, 0.0],
    [0.0, 0.4, 1.0, 0.0],
    [0.1, 0.0, 0.3, 1.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    Cartesian,
    /// `(t, r, θ, φ)`
    Spherical,
    /// `(t, ρ, φ, z)`
    Cylindrical,
    /// `x = M u` with a constant, non-orthogonal `M`.
    Skewed,
}

impl Chart {
    pub const ALL: [Chart; 4] = [Chart::Cartesian, Chart::Spherical, Chart::Cylindrical, Chart::Skewed];

    pub fn name(&self) -> &'static str {
        match self {
            Chart::Cartesian => "cartesian",
            Chart::Spherical => "spherical",
            Chart::Cylindrical => "cylindrical",
            Chart::Skewed => "skewed",
        }
    }

    pub fn to_cartesian<T: Real>(&self, u: &[T; 4]) -> [T; 4] {
        match self {
            Chart::Cartesian => *u,
            Chart::Spherical => {
                let [t, r, th, ph] = *u;
                let (st, ct) = (th.sin(), th.cos());
                [t, r * st * ph.cos(), r * st * ph.sin(), r * ct]
            }
            Chart::Cylindrical => {
                let [t, rho, ph, z] = *u;
                [t, rho * ph.cos(), rho * ph.sin(), z]
            }
            Chart::Skewed => linalg::mat_vec(&SKEW.map(|row| row.map(T::cst)), u),
        }
    }

    /// Inverse map. Angles are returned in `[0, 2π)`.
    pub fn from_cartesian(&self, x: &[f64; 4]) -> [f64; 4] {
        let wrap = |a: f64| if a < 0.0 { a + TAU } else { a };
        match self {
            Chart::Cartesian => *x,
            Chart::Spherical => {
                let r = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
                [x[0], r, (x[3] / r).clamp(-1.0, 1.0).acos(), wrap(x[2].atan2(x[1]))]
            }
            Chart::Cylindrical => {
                let rho = x[1].hypot(x[2]);
                [x[0], rho, wrap(x[2].atan2(x[1])), x[3]]
            }
            Chart::Skewed => {
                let (inv, _) = linalg::inverse(&SKEW).expect("skew matrix is invertible");
                linalg::mat_vec(&inv, x)
            }
        }
    }

    pub fn contains(&self, u: &[f64; 4]) -> bool {
        if !u.iter().all(|x| x.is_finite()) {
            return false;
        }
        match self {
            Chart::Cartesian | Chart::Skewed => true,
            Chart::Spherical => u[1] > DOMAIN_MARGIN && u[2] > DOMAIN_MARGIN && u[2] < PI - DOMAIN_MARGIN,
            Chart::Cylindrical => u[1] > DOMAIN_MARGIN,
        }
    }

    pub fn check_domain(&self, u: &[f64; 4]) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(Error::Domain {
                chart: self.name(),
                point: *u,
            })
        }
    }

    /// Per-coordinate box used for random sampling, away from singular loci.
    pub fn sampling_box(&self) -> [(f64, f64); 4] {
        match self {
            Chart::Cartesian | Chart::Skewed => [(-1.0, 1.0), (-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
            Chart::Spherical => [(-1.0, 1.0), (0.5, 3.0), (0.3, PI - 0.3), (0.0, TAU)],
            Chart::Cylindrical => [(-1.0, 1.0), (0.5, 3.0), (0.0, TAU), (-2.0, 2.0)],
        }
    }

    pub fn describe_box(&self) -> String {
        let b = self.sampling_box();
        let names = ["u0", "u1", "u2", "u3"];
        names
            .iter()
            .zip(b.iter())
            .map(|(n, (lo, hi))| format!("{n} in [{lo:.4}, {hi:.4})"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Chart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Chart::ALL
            .iter()
            .find(|c| c.name() == s.trim())
            .copied()
            .ok_or_else(|| Error::config(format!("unknown chart `{s}`")))
    }
}

/// Pointwise metric data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricData<T = f64> {
    pub g: Mat4<T>,
    pub g_inv: Mat4<T>,
    pub det_g: T,
}

/// Connection coefficients `Γ^λ_μν`, stored `gamma[λ][μ][ν]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChristoffelData<T = f64> {
    pub gamma: [[[T; 4]; 4]; 4],
}

impl<T: Real> ChristoffelData<T> {
    #[inline]
    pub fn get(&self, l: usize, m: usize, n: usize) -> T {
        self.gamma[l][m][n]
    }

    /// `Γ^μ_{αβ} a^α b^β`
    pub fn contract_pair(&self, a: &Vec4<T>, b: &Vec4<T>) -> Vec4<T> {
        std::array::from_fn(|mu| {
            let mut s = T::zero();
            for al in 0..4 {
                for be in 0..4 {
                    s += self.gamma[mu][al][be] * a[al] * b[be];
                }
            }
            s
        })
    }
}

impl ChristoffelData {
    pub fn max_abs(&self) -> f64 {
        self.gamma.iter().flatten().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// The chart map as a differentiable function.
pub struct ChartMap<'a>(pub &'a Chart);

impl CoordFn for ChartMap<'_> {
    fn len(&self) -> usize {
        4
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        self.0.to_cartesian(u).to_vec()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.0.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.0.name()
    }
}

/// `g_μν(u)` as a rank-2 lower tensor field.
pub struct MetricField<'a>(pub &'a Chart);

impl CoordFn for MetricField<'_> {
    fn len(&self) -> usize {
        16
    }
    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T> {
        metric_from_jacobian(&jacobian_at(self.0, u)).iter().flatten().copied().collect()
    }
    fn in_domain(&self, u: &[f64; 4]) -> bool {
        self.0.contains(u)
    }
    fn domain_name(&self) -> &'static str {
        self.0.name()
    }
}

impl TensorField for MetricField<'_> {
    fn variance(&self) -> Variance {
        Variance::lower2()
    }
}

/// Exact `J^a_μ = ∂x^a/∂u^μ`.
pub fn jacobian_at<T: Real>(chart: &Chart, u: &[T; 4]) -> Mat4<T> {
    let d = ad_partials(&ChartMap(chart), u);
    std::array::from_fn(|a| std::array::from_fn(|mu| d[a * 4 + mu]))
}

/// `g_μν = η_ab J^a_μ J^b_ν`, symmetric by construction.
pub fn metric_from_jacobian<T: Real>(j: &Mat4<T>) -> Mat4<T> {
    let mut g = linalg::zeros();
    for mu in 0..4 {
        for nu in mu..4 {
            let mut s = T::zero();
            for a in 0..4 {
                s += j[a][mu] * j[a][nu] * ETA_DIAG[a];
            }
            g[mu][nu] = s;
        }
    }
    linalg::symmetrize_upper(&mut g);
    g
}

fn metric_data_from<T: Real>(g: Mat4<T>) -> MetricData<T> {
    match linalg::inverse(&g) {
        Some((mut g_inv, det_g)) => {
            linalg::symmetrize_upper(&mut g_inv);
            MetricData { g, g_inv, det_g }
        }
        None => MetricData {
            g,
            g_inv: [[T::cst(f64::NAN); 4]; 4],
            det_g: T::zero(),
        },
    }
}

/// Exact metric, inverse and determinant at any scalar depth.
pub fn metric_at<T: Real>(chart: &Chart, u: &[T; 4]) -> MetricData<T> {
    metric_data_from(metric_from_jacobian(&jacobian_at(chart, u)))
}

/// Exact Christoffel symbols at any scalar depth.
pub fn christoffel_at<T: Real>(chart: &Chart, u: &[T; 4]) -> ChristoffelData<T> {
    let dg = ad_partials(&MetricField(chart), u);
    let m = metric_at(chart, u);
    christoffel_from(&m.g_inv, &dg)
}

/// `Γ^λ_μν = ½ g^{λσ}(∂_ν g_σμ + ∂_μ g_σν − ∂_σ g_μν)` from metric partials
/// laid out `dg[(μ * 4 + ν) * 4 + σ] = ∂_σ g_μν`.
fn christoffel_from<T: Real>(g_inv: &Mat4<T>, dg: &[T]) -> ChristoffelData<T> {
    let d = |m: usize, n: usize, s: usize| dg[(m * 4 + n) * 4 + s];
    let mut gamma = [[[T::zero(); 4]; 4]; 4];
    for mu in 0..4 {
        for nu in mu..4 {
            let lowered: [T; 4] = std::array::from_fn(|s| (d(s, mu, nu) + d(s, nu, mu) - d(mu, nu, s)) * 0.5);
            for (l, plane) in gamma.iter_mut().enumerate() {
                let mut acc = T::zero();
                for s in 0..4 {
                    acc += g_inv[l][s] * lowered[s];
                }
                plane[mu][nu] = acc;
                plane[nu][mu] = acc;
            }
        }
    }
    ChristoffelData { gamma }
}

/// `J^a_μ` at `u`, with the derivative taken by `engine`.
pub fn jacobian(chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<Mat4> {
    engine.require_order(1)?;
    chart.check_domain(u)?;
    let d = engine.partials(&ChartMap(chart), u)?;
    let j: Mat4 = std::array::from_fn(|a| std::array::from_fn(|mu| d[a * 4 + mu]));
    let det = linalg::inverse(&j).map(|(_, det)| det).unwrap_or(0.0);
    if det.abs() < SINGULAR_JACOBIAN {
        return Err(Error::SingularJacobian {
            chart: chart.name(),
            point: *u,
            det,
        });
    }
    Ok(j)
}

/// Pullback of `η` through the chart at `u`.
pub fn pullback_metric(chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<MetricData> {
    let j = jacobian(chart, u, engine)?;
    let m = metric_data_from(metric_from_jacobian(&j));
    let residual = linalg::identity_residual(&m.g, &m.g_inv);
    if !(residual <= INVERSION_RESIDUAL) {
        return Err(Error::NonInvertible { residual });
    }
    Ok(m)
}

/// Christoffel symbols at `u`; the metric derivative is taken by `engine`.
pub fn christoffel(chart: &Chart, u: &[f64; 4], engine: &DerivEngine) -> Result<ChristoffelData> {
    engine.require_order(2)?;
    chart.check_domain(u)?;
    let m = pullback_metric(chart, u, &DerivEngine::Ad2)?;
    let dg = engine.partials(&MetricField(chart), u)?;
    Ok(christoffel_from(&m.g_inv, &dg))
}

/// Chart components of a vector given in Cartesian components: `J⁻¹ v`.
pub fn vector_from_cartesian<T: Real>(chart: &Chart, u: &[T; 4], v_cart: &Vec4<T>) -> Vec4<T> {
    match linalg::inverse(&jacobian_at(chart, u)) {
        Some((inv, _)) => linalg::mat_vec(&inv, v_cart),
        None => [T::cst(f64::NAN); 4],
    }
}

/// Cartesian components of a chart vector: `J v`.
pub fn vector_to_cartesian<T: Real>(chart: &Chart, u: &[T; 4], v: &Vec4<T>) -> Vec4<T> {
    linalg::mat_vec(&jacobian_at(chart, u), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn engines() -> [DerivEngine; 3] {
        [DerivEngine::Ad2, DerivEngine::fd2(), DerivEngine::fd4()]
    }

    #[test]
    fn cartesian_jacobian_is_identity() {
        let u = [0.3, -1.0, 2.0, 0.5];
        for e in engines() {
            let j = jacobian(&Chart::Cartesian, &u, &e).unwrap();
            assert!(linalg::identity_residual(&j, &linalg::identity()) < 1e-10, "{e}");
        }
    }

    #[test]
    fn spherical_radial_derivative() {
        let u = [0.0, 2.0, FRAC_PI_2, 0.0];
        // x = r sinθ cosφ, ∂x/∂r = sinθ cosφ = 1
        let j = jacobian(&Chart::Spherical, &u, &DerivEngine::Ad2).unwrap();
        assert!((j[1][1] - 1.0).abs() < 1e-15);
        let fd = jacobian(&Chart::Spherical, &u, &DerivEngine::fd2()).unwrap();
        assert!((fd[1][1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cylindrical_azimuthal_derivative() {
        let u = [0.0, 3.0, 0.0, 0.0];
        // y = ρ sinφ, ∂y/∂φ = ρ cosφ = 3
        let j = jacobian(&Chart::Cylindrical, &u, &DerivEngine::Ad2).unwrap();
        assert!((j[2][2] - 3.0).abs() < 1e-15);
        let fd = jacobian(&Chart::Cylindrical, &u, &DerivEngine::fd4()).unwrap();
        assert!((fd[2][2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let err = jacobian(&Chart::Spherical, &[0.0, -1.0, 1.0, 0.0], &DerivEngine::Ad2).unwrap_err();
        assert!(matches!(err, Error::Domain { chart: "spherical", .. }));
        let err = jacobian(&Chart::Spherical, &[0.0, 1.0, 0.0, 0.0], &DerivEngine::Ad2).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        // FD stencil crosses r = margin
        let err = jacobian(&Chart::Spherical, &[0.0, 5e-5, 1.0, 0.0], &DerivEngine::fd2()).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn cartesian_metric_is_eta() {
        let m = pullback_metric(&Chart::Cartesian, &[1.0, 2.0, 3.0, 4.0], &DerivEngine::Ad2).unwrap();
        assert_eq!(m.g, linalg::eta());
        assert_eq!(m.det_g, -1.0);
    }

    #[test]
    fn spherical_metric_at_r2_equator() {
        let m = pullback_metric(&Chart::Spherical, &[0.0, 2.0, FRAC_PI_2, 0.7], &DerivEngine::Ad2).unwrap();
        let expected = [1.0, -1.0, -4.0, -4.0];
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { expected[i] } else { 0.0 };
                assert!((m.g[i][j] - e).abs() < 1e-14, "g[{i}][{j}] = {}", m.g[i][j]);
            }
        }
        assert!((m.det_g + 16.0).abs() < 1e-12);
    }

    #[test]
    fn cylindrical_metric_at_rho3() {
        let m = pullback_metric(&Chart::Cylindrical, &[0.0, 3.0, 1.1, -0.4], &DerivEngine::Ad2).unwrap();
        let expected = [1.0, -1.0, -9.0, -1.0];
        for i in 0..4 {
            assert!((m.g[i][i] - expected[i]).abs() < 1e-13);
        }
        assert!((m.det_g + 9.0).abs() < 1e-12);
    }

    #[test]
    fn cartesian_christoffels_vanish() {
        let g = christoffel(&Chart::Cartesian, &[0.1, 0.2, 0.3, 0.4], &DerivEngine::Ad2).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn skewed_christoffels_vanish_but_metric_is_not_diagonal() {
        let u = [0.1, 0.2, 0.3, 0.4];
        let g = christoffel(&Chart::Skewed, &u, &DerivEngine::Ad2).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let m = pullback_metric(&Chart::Skewed, &u, &DerivEngine::Ad2).unwrap();
        assert!(m.g[0][1].abs() > 0.1);
        assert!(m.det_g < 0.0);
    }

    #[test]
    fn spherical_christoffels_at_r2() {
        let u = [0.0, 2.0, FRAC_PI_2, 0.0];
        for e in [DerivEngine::Ad2, DerivEngine::fd4()] {
            let g = christoffel(&Chart::Spherical, &u, &e).unwrap();
            // Γ^r_θθ = −r, Γ^θ_rθ = 1/r
            assert!((g.get(1, 2, 2) + 2.0).abs() < 1e-9, "{e}");
            assert!((g.get(2, 1, 2) - 0.5).abs() < 1e-9, "{e}");
            assert_eq!(g.get(2, 1, 2), g.get(2, 2, 1));
        }
    }

    #[test]
    fn ad1_cannot_build_christoffels() {
        let err = christoffel(&Chart::Spherical, &[0.0, 2.0, 1.0, 0.0], &DerivEngine::Ad1).unwrap_err();
        assert!(matches!(err, Error::EngineOrder { .. }));
        assert!(pullback_metric(&Chart::Spherical, &[0.0, 2.0, 1.0, 0.0], &DerivEngine::Ad1).is_ok());
    }

    #[test]
    fn chart_names_round_trip() {
        for c in Chart::ALL {
            assert_eq!(c.name().parse::<Chart>().unwrap(), c);
        }
        assert!("polar".parse::<Chart>().is_err());
    }

    #[test]
    fn vector_maps_are_inverse() {
        let u = [0.0, 1.5, 0.9, 2.0];
        let v = [1.2, 0.1, -0.3, 0.05];
        let back = vector_from_cartesian(&Chart::Spherical, &u, &vector_to_cartesian(&Chart::Spherical, &u, &v));
        for k in 0..4 {
            assert!((back[k] - v[k]).abs() < 1e-14);
        }
    }
}
