use std::fmt;

use super::dual::{Dual, Real};
use crate::error::{Error, Result};

/// A smooth map from chart coordinates to a fixed number of components.
///
/// `eval` must be total and re-entrant on the owning chart's domain; it is
/// called concurrently from sweeps and on nested dual numbers.
#[allow(clippy::len_without_is_empty)]
pub trait CoordFn: Sync {
    /// Number of output components, never zero.
    fn len(&self) -> usize;

    fn eval<T: Real>(&self, u: &[T; 4]) -> Vec<T>;

    /// Domain predicate for stencil points. Unrestricted by default.
    fn in_domain(&self, _u: &[f64; 4]) -> bool {
        true
    }

    /// Name used in domain errors.
    fn domain_name(&self) -> &'static str {
        "unbounded"
    }
}

/// How partial derivatives are taken.
///
/// The engine governs the derivative an operation requests. Derivatives that
/// occur while *evaluating* the differentiated field (the chart Jacobian
/// inside a metric, `∂A` inside `F`, ...) always use exact nested
/// forward-mode, so finite-difference truncation error appears once and
/// scales cleanly with `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivEngine {
    /// Central difference, `O(h²)`.
    Fd2 { h: f64 },
    /// Five-point central stencil, `O(h⁴)`.
    Fd4 { h: f64 },
    /// Forward mode, first derivatives only.
    Ad1,
    /// Nested forward mode, any order.
    Ad2,
}

pub const DEFAULT_FD2_STEP: f64 = 1e-4;
pub const DEFAULT_FD4_STEP: f64 = 1e-3;

impl DerivEngine {
    pub fn fd2() -> Self {
        DerivEngine::Fd2 { h: DEFAULT_FD2_STEP }
    }

    pub fn fd4() -> Self {
        DerivEngine::Fd4 { h: DEFAULT_FD4_STEP }
    }

    pub fn ad() -> Self {
        DerivEngine::Ad2
    }

    /// Parse a selector (`fd2`, `fd4`, `ad`), optionally overriding the FD step.
    pub fn parse(name: &str, h: Option<f64>) -> Result<Self> {
        let engine = match name.trim() {
            "fd2" => DerivEngine::Fd2 {
                h: h.unwrap_or(DEFAULT_FD2_STEP),
            },
            "fd4" => DerivEngine::Fd4 {
                h: h.unwrap_or(DEFAULT_FD4_STEP),
            },
            "ad" | "ad2" => DerivEngine::Ad2,
            "ad1" => DerivEngine::Ad1,
            other => return Err(Error::config(format!("unknown engine `{other}`"))),
        };
        engine.validate()?;
        Ok(engine)
    }

    pub fn validate(&self) -> Result<()> {
        match self.step() {
            Some(h) if !(h.is_finite() && h > 0.0) => {
                Err(Error::config(format!("finite-difference step must be positive, got {h}")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DerivEngine::Fd2 { .. } => "fd2",
            DerivEngine::Fd4 { .. } => "fd4",
            DerivEngine::Ad1 => "ad1",
            DerivEngine::Ad2 => "ad",
        }
    }

    pub fn step(&self) -> Option<f64> {
        match *self {
            DerivEngine::Fd2 { h } | DerivEngine::Fd4 { h } => Some(h),
            _ => None,
        }
    }

    pub fn with_step(&self, h: f64) -> Self {
        match self {
            DerivEngine::Fd2 { .. } => DerivEngine::Fd2 { h },
            DerivEngine::Fd4 { .. } => DerivEngine::Fd4 { h },
            other => *other,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, DerivEngine::Ad1 | DerivEngine::Ad2)
    }

    /// Truncation order of a finite-difference engine.
    pub fn truncation_order(&self) -> Option<u32> {
        match self {
            DerivEngine::Fd2 { .. } => Some(2),
            DerivEngine::Fd4 { .. } => Some(4),
            _ => None,
        }
    }

    /// Fail unless the engine can supply derivatives of order `required`.
    pub fn require_order(&self, required: usize) -> Result<()> {
        match self {
            DerivEngine::Ad1 if required > 1 => Err(Error::EngineOrder {
                engine: self.to_string(),
                available: 1,
                required,
            }),
            _ => Ok(()),
        }
    }

    /// Largest coordinate offset of the stencil.
    pub fn reach(&self) -> f64 {
        match *self {
            DerivEngine::Fd2 { h } => h,
            DerivEngine::Fd4 { h } => 2.0 * h,
            _ => 0.0,
        }
    }

    fn check_stencil<F: CoordFn>(&self, f: &F, u: &[f64; 4]) -> Result<()> {
        let domain_err = || Error::Domain {
            chart: f.domain_name(),
            point: *u,
        };
        if !f.in_domain(u) {
            return Err(domain_err());
        }
        let r = self.reach();
        if r == 0.0 {
            return Ok(());
        }
        for k in 0..4 {
            for sgn in [-1.0, 1.0] {
                let mut p = *u;
                p[k] += sgn * r;
                if !f.in_domain(&p) {
                    return Err(domain_err());
                }
            }
        }
        Ok(())
    }

    /// All first partials at `u`, laid out as `out[c * 4 + k] = ∂_k f_c`.
    pub fn partials<F: CoordFn>(&self, f: &F, u: &[f64; 4]) -> Result<Vec<f64>> {
        self.check_stencil(f, u)?;
        let n = f.len();
        let out = match *self {
            DerivEngine::Ad1 | DerivEngine::Ad2 => ad_partials(f, u),
            DerivEngine::Fd2 { h } => {
                let mut out = vec![0.0; n * 4];
                for k in 0..4 {
                    let fp = f.eval(&shifted(u, k, h));
                    let fm = f.eval(&shifted(u, k, -h));
                    for c in 0..n {
                        out[c * 4 + k] = (fp[c] - fm[c]) / (2.0 * h);
                    }
                }
                out
            }
            DerivEngine::Fd4 { h } => {
                let mut out = vec![0.0; n * 4];
                for k in 0..4 {
                    let fp2 = f.eval(&shifted(u, k, 2.0 * h));
                    let fp1 = f.eval(&shifted(u, k, h));
                    let fm1 = f.eval(&shifted(u, k, -h));
                    let fm2 = f.eval(&shifted(u, k, -2.0 * h));
                    for c in 0..n {
                        out[c * 4 + k] =
                            (-fp2[c] + 8.0 * fp1[c] - 8.0 * fm1[c] + fm2[c]) / (12.0 * h);
                    }
                }
                out
            }
        };
        Ok(out)
    }

    /// Partials along a single direction.
    pub fn partial_dir<F: CoordFn>(&self, f: &F, u: &[f64; 4], dir: usize) -> Result<Vec<f64>> {
        assert!(dir < 4, "direction index out of range");
        let all = self.partials(f, u)?;
        Ok((0..f.len()).map(|c| all[c * 4 + dir]).collect())
    }
}

impl fmt::Display for DerivEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step() {
            Some(h) => write!(f, "{}(h={h:e})", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

fn shifted(u: &[f64; 4], k: usize, d: f64) -> [f64; 4] {
    let mut p = *u;
    p[k] += d;
    p
}

/// Exact first partials by one layer of forward mode, at any scalar depth.
///
/// Layout matches [`DerivEngine::partials`]: `out[c * 4 + k] = ∂_k f_c`.
pub fn ad_partials<T: Real, F: CoordFn + ?Sized>(f: &F, u: &[T; 4]) -> Vec<T> {
    let lifted = Dual::seed(u);
    let vals = f.eval(&lifted);
    let mut out = Vec::with_capacity(vals.len() * 4);
    for v in &vals {
        out.extend_from_slice(&v.eps);
    }
    out
}

/// Value and exact first partials in one pass.
pub fn ad_value_and_partials<T: Real, F: CoordFn + ?Sized>(f: &F, u: &[T; 4]) -> (Vec<T>, Vec<T>) {
    let lifted = Dual::seed(u);
    let vals = f.eval(&lifted);
    let mut parts = Vec::with_capacity(vals.len() * 4);
    let mut value = Vec::with_capacity(vals.len());
    for v in &vals {
        value.push(v.re);
        parts.extend_from_slice(&v.eps);
    }
    (value, parts)
}
