//! Verification runs, convergence studies and worldline integrations driven
//! from named presets, with deterministic CSV output.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::calculus::DerivEngine;
use crate::chart::Chart;
use crate::conservation::{closure_tolerance, identity_check, IdentityReport};
use crate::dust::{DustState, ScalarProfile};
use crate::em::{EMField, Potential, PotentialTerm, Sign};
use crate::error::{Error, Result};
use crate::linalg::{self, Vec4};
use crate::parallel::{map_ordered, Execution};
use crate::poly::Poly;
use crate::worldline::{Integrator, ParticleParams, Trajectory, WorldlineState};

pub const CSV_VERSION: u32 = 1;

pub const VERIFY_COLUMNS: &str = "scenario_id,chart,engine,sign,u0,u1,u2,u3,\
divW0,divW1,divW2,divW3,eom0,eom1,eom2,eom3,cont0,cont1,cont2,cont3,\
closure_norm,bianchi_max,source_max,skipped";

pub const CONVERGENCE_COLUMNS: &str = "scenario_id,chart,engine,h,mean_closure,max_closure,checked,skipped";

/// A run fails when more than this fraction of points is skipped.
pub const MAX_SKIP_RATIO: f64 = 0.5;

pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_SEED: u64 = 42;

/// Name of the per-point random configuration generator.
pub const RANDOM_POTENTIAL: &str = "random";

const MAX_REDRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignChoice {
    Fixed(Sign),
    /// Run both signs and report the one that closes.
    Auto,
}

impl FromStr for SignChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            Ok(SignChoice::Auto)
        } else {
            s.parse().map(SignChoice::Fixed)
        }
    }
}

impl fmt::Display for SignChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignChoice::Fixed(s) => s.fmt(f),
            SignChoice::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Preset(EMField),
    /// A fresh seeded configuration per sample point.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub chart: Chart,
    pub potential: String,
    pub field: FieldSpec,
    pub dust: String,
    pub engine: DerivEngine,
    pub sign: SignChoice,
    pub samples: usize,
    pub seed: u64,
    /// Fixed closure tolerance; engine-dependent default when `None`.
    pub tol: Option<f64>,
}

impl Scenario {
    pub fn new(chart: &str, potential: &str, dust: &str, engine: &str) -> Result<Self> {
        let field = if potential.trim() == RANDOM_POTENTIAL {
            FieldSpec::Random
        } else {
            FieldSpec::Preset(EMField::FromPotential(Potential::parse(potential)?))
        };
        let s = Scenario {
            chart: chart.parse()?,
            potential: potential.trim().to_string(),
            field,
            dust: dust.trim().to_string(),
            engine: DerivEngine::parse(engine, None)?,
            sign: SignChoice::Fixed(Sign::Plus),
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            tol: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sign(mut self, sign: SignChoice) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_engine(mut self, engine: DerivEngine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_tol(mut self, tol: Option<f64>) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples must be at least 1"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(format!("tolerance {t} must be positive")));
            }
        }
        self.engine.validate()?;
        DustState::parse(&self.dust, &EMField::zero())?;
        Ok(())
    }

    /// Stable short hash of everything that determines the output.
    pub fn id(&self) -> String {
        let key = format!(
            "v{CSV_VERSION}|{}|{}|{}|{}|{}|{}|{}|{:?}",
            self.chart, self.potential, self.dust, self.engine, self.sign, self.samples, self.seed, self.tol
        );
        Sha256::digest(key.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn header(&self, kind: &str) -> String {
        format!(
            "# chargelaw {kind} v{CSV_VERSION}; id={}; chart={}; box={}; potential={}; dust={}; engine={}; sign={}; samples={}; seed={}",
            self.id(),
            self.chart,
            self.chart.describe_box(),
            self.potential,
            self.dust,
            self.engine,
            self.sign,
            self.samples,
            self.seed
        )
    }

    /// Sample points with their field and dust, deterministic in the seed.
    pub fn cases(&self) -> Result<Vec<Case>> {
        let mut cfg_rng = ChaCha8Rng::seed_from_u64(self.seed);
        cfg_rng.set_stream(1);
        let mut pt_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.samples);
        for index in 0..self.samples {
            let (field, dust) = match &self.field {
                FieldSpec::Preset(f) => (f.clone(), DustState::parse(&self.dust, f)?),
                FieldSpec::Random => {
                    let (f, rho) = random_configuration(&mut cfg_rng);
                    let mut dust = DustState::parse(&self.dust, &f)?;
                    dust.rho = rho;
                    (f, dust)
                }
            };
            let u = draw_point(&self.chart, &field, &mut pt_rng)?;
            out.push(Case { index, u, field, dust });
        }
        Ok(out)
    }
}

/// One sampled point with the configuration evaluated there.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub index: usize,
    pub u: Vec4,
    pub field: EMField,
    pub dust: DustState,
}

fn draw_point<R: Rng>(chart: &Chart, field: &EMField, rng: &mut R) -> Result<Vec4> {
    let bx = chart.sampling_box();
    for _ in 0..MAX_REDRAWS {
        let u: Vec4 = std::array::from_fn(|k| rng.gen_range(bx[k].0..bx[k].1));
        if !field.is_singular_near(&chart.to_cartesian(&u)) {
            return Ok(u);
        }
    }
    Err(Error::config("could not draw a sample point away from the field's singularities"))
}

/// `n` points drawn uniformly from the chart's sampling box.
pub fn sample_points(chart: &Chart, n: usize, seed: u64) -> Vec<Vec4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = chart.sampling_box();
    (0..n)
        .map(|_| std::array::from_fn(|k| rng.gen_range(bx[k].0..bx[k].1)))
        .collect()
}

/// A random field satisfying both Maxwell equations by construction, and a
/// positive mass density.
///
/// The field is a plane wave plus uniform E and B plus a uniform space
/// charge and small polynomial potentials. The space charge dominates the
/// current, so the induced current is timelike over the sampling boxes.
/// The density is `0.5 + (c₀ + c·u)²`.
pub fn random_configuration<R: Rng>(rng: &mut R) -> (EMField, ScalarProfile) {
    let sym = |rng: &mut R, a: f64| rng.gen_range(-a..a);
    let density = rng.gen_range(0.8..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let quad: [Poly; 4] = std::array::from_fn(|_| Poly::random(rng, 2, 0.03));
    let cubic: [Poly; 4] = std::array::from_fn(|_| Poly::random(rng, 3, 0.01));
    let poly: [Poly; 4] = std::array::from_fn(|k| quad[k].plus(&cubic[k]));
    let terms = vec![
        PotentialTerm::PlaneWave {
            amplitude: rng.gen_range(0.05..0.3),
            omega: rng.gen_range(0.5..2.0),
        },
        PotentialTerm::UniformE { e0: sym(rng, 1.0) },
        PotentialTerm::UniformB { b0: sym(rng, 1.0) },
        PotentialTerm::SpaceCharge { density },
        PotentialTerm::Polynomial(Box::new(poly)),
    ];
    let field = EMField::FromPotential(Potential::new(terms).with_name(RANDOM_POTENTIAL));
    let mut lin = Poly::constant(sym(rng, 0.5));
    for k in 0..4 {
        let mut p = [0u8; 4];
        p[k] = 1;
        lin = lin.term(sym(rng, 0.3), p);
    }
    let rho = ScalarProfile::Chart(Poly::constant(0.5).plus(&lin.times(&lin)));
    (field, rho)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Checked { report: Box<IdentityReport>, tol: f64 },
    /// Point outside the hypotheses' reach (non-timelike current, domain).
    Skipped(String),
    /// `σ v` differs from the field's current: the hypothesis is violated.
    Inconsistent(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub index: usize,
    pub point: Vec4,
    pub outcome: Outcome,
}

impl Row {
    pub fn report(&self) -> Option<&IdentityReport> {
        match &self.outcome {
            Outcome::Checked { report, .. } => Some(report),
            _ => None,
        }
    }

    pub fn passes(&self) -> bool {
        match &self.outcome {
            Outcome::Checked { report, tol } => report.closure_norm < *tol,
            Outcome::Skipped(_) => true,
            Outcome::Inconsistent(_) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub total: usize,
    pub checked: usize,
    pub skipped: usize,
    pub inconsistent: usize,
    pub failures: usize,
    pub max_closure: f64,
    pub mean_closure: f64,
    pub mean_div_w: f64,
    pub mean_lorentz: f64,
    pub max_projection: f64,
    pub max_bianchi: f64,
    pub max_source: f64,
    pub pass: bool,
}

impl Summary {
    pub fn of(rows: &[Row]) -> Self {
        let reports: Vec<&IdentityReport> = rows.iter().filter_map(Row::report).collect();
        let checked = reports.len();
        let mean = |f: &dyn Fn(&IdentityReport) -> f64| {
            if checked == 0 {
                0.0
            } else {
                reports.iter().map(|r| f(r)).sum::<f64>() / checked as f64
            }
        };
        let max = |f: &dyn Fn(&IdentityReport) -> f64| reports.iter().map(|r| f(r)).fold(0.0, f64::max);
        let skipped = rows.iter().filter(|r| matches!(r.outcome, Outcome::Skipped(_))).count();
        let inconsistent = rows.iter().filter(|r| matches!(r.outcome, Outcome::Inconsistent(_))).count();
        let failures = rows.iter().filter(|r| r.report().is_some() && !r.passes()).count();
        let total = rows.len();
        let pass = checked > 0
            && failures == 0
            && inconsistent == 0
            && (skipped as f64) <= MAX_SKIP_RATIO * total as f64;
        Summary {
            total,
            checked,
            skipped,
            inconsistent,
            failures,
            max_closure: max(&|r| r.closure_norm),
            mean_closure: mean(&|r| r.closure_norm),
            mean_div_w: mean(&|r| linalg::norm(&r.div_w)),
            mean_lorentz: mean(&|r| linalg::norm(&r.lorentz_term)),
            max_projection: max(&|r| r.projection_defect.abs()),
            max_bianchi: max(&|r| r.bianchi_max),
            max_source: max(&|r| r.source_max),
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub scenario: Scenario,
    pub sign: Sign,
    pub rows: Vec<Row>,
    pub summary: Summary,
    /// Summary of the rejected sign when the sign was chosen automatically.
    pub rejected: Option<(Sign, Summary)>,
    pub note: Option<String>,
}

fn evaluate(case: &Case, scenario: &Scenario, engine: &DerivEngine, sign: Sign) -> Result<Row> {
    let outcome = match identity_check(&case.dust, &case.field, &scenario.chart, &case.u, engine, sign) {
        Ok(report) => {
            let tol = scenario.tol.unwrap_or_else(|| closure_tolerance(engine, report.magnitude()));
            Outcome::Checked {
                report: Box::new(report),
                tol,
            }
        }
        Err(Error::InconsistentSources { deviation, .. }) => Outcome::Inconsistent(deviation),
        Err(
            e @ (Error::NotTimelike { .. }
            | Error::Domain { .. }
            | Error::SingularJacobian { .. }
            | Error::NegativeDensity { .. }
            | Error::NonInvertible { .. }),
        ) => Outcome::Skipped(e.to_string()),
        Err(e) => return Err(e),
    };
    Ok(Row {
        index: case.index,
        point: case.u,
        outcome,
    })
}

fn evaluate_all(cases: &[Case], scenario: &Scenario, engine: &DerivEngine, sign: Sign, exec: Execution) -> Result<Vec<Row>> {
    map_ordered(cases, exec, |c| evaluate(c, scenario, engine, sign))
        .into_iter()
        .collect()
}

/// Check the identity at every sampled point.
pub fn run_verify(scenario: &Scenario, exec: Execution) -> Result<VerifyReport> {
    scenario.validate()?;
    let cases = scenario.cases()?;
    let run = |s: Sign| -> Result<(Sign, Vec<Row>, Summary)> {
        let rows = evaluate_all(&cases, scenario, &scenario.engine, s, exec)?;
        let summary = Summary::of(&rows);
        Ok((s, rows, summary))
    };
    match scenario.sign {
        SignChoice::Fixed(s) => {
            let (sign, rows, summary) = run(s)?;
            Ok(VerifyReport {
                scenario: scenario.clone(),
                sign,
                rows,
                summary,
                rejected: None,
                note: None,
            })
        }
        SignChoice::Auto => {
            let plus = run(Sign::Plus)?;
            let minus = run(Sign::Minus)?;
            let (chosen, other, note) = match (plus.2.pass, minus.2.pass) {
                (true, false) => (plus, minus, None),
                (false, true) => (minus, plus, None),
                (true, true) => (plus, minus, Some("both signs close: no Lorentz force at the sampled points".to_string())),
                (false, false) => {
                    let note = Some("neither sign closes".to_string());
                    if plus.2.max_closure <= minus.2.max_closure {
                        (plus, minus, note)
                    } else {
                        (minus, plus, note)
                    }
                }
            };
            Ok(VerifyReport {
                scenario: scenario.clone(),
                sign: chosen.0,
                rows: chosen.1,
                summary: chosen.2,
                rejected: Some((other.0, other.2)),
                note,
            })
        }
    }
}

fn fmt_vec(out: &mut String, v: &[f64]) {
    for x in v {
        out.push(',');
        out.push_str(&format!("{x:.17e}"));
    }
}

impl VerifyReport {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        let sc = &self.scenario;
        writeln!(out, "{}", sc.header("verify"))?;
        writeln!(out, "{VERIFY_COLUMNS}")?;
        let id = sc.id();
        for row in &self.rows {
            let mut line = format!("{id},{},{},{}", sc.chart, sc.engine.label(), self.sign);
            fmt_vec(&mut line, &row.point);
            match row.report() {
                Some(r) => {
                    fmt_vec(&mut line, &r.div_w);
                    fmt_vec(&mut line, &r.eom_term);
                    fmt_vec(&mut line, &r.continuity_term);
                    fmt_vec(&mut line, &[r.closure_norm, r.bianchi_max, r.source_max]);
                    line.push_str(",0");
                }
                None => {
                    line.push_str(&",nan".repeat(15));
                    line.push_str(",1");
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let sc = &self.scenario;
        let mut t = format!(
            "verify {} [{}] chart={} potential={} dust={} engine={} sign={}{}\n",
            if s.pass { "PASS" } else { "FAIL" },
            sc.id(),
            sc.chart,
            sc.potential,
            sc.dust,
            sc.engine,
            self.sign,
            if sc.sign == SignChoice::Auto { " (auto)" } else { "" },
        );
        t += &format!(
            "  points {} checked {} skipped {} inconsistent {} failing {}\n",
            s.total, s.checked, s.skipped, s.inconsistent, s.failures
        );
        t += &format!(
            "  closure max {:.3e} mean {:.3e}; mean |div W| {:.3e}; mean |Lorentz| {:.3e}\n",
            s.max_closure, s.mean_closure, s.mean_div_w, s.mean_lorentz
        );
        t += &format!(
            "  max projection defect {:.3e}; max Bianchi {:.3e}; max source {:.3e}\n",
            s.max_projection, s.max_bianchi, s.max_source
        );
        if let Some((sign, r)) = &self.rejected {
            t += &format!("  sign {sign}: closure max {:.3e}, {}\n", r.max_closure, if r.pass { "closes" } else { "fails" });
        }
        if let Some(n) = &self.note {
            t += &format!("  note: {n}\n");
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub h: f64,
    pub mean_closure: f64,
    pub max_closure: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub scenario: Scenario,
    pub sign: Sign,
    pub levels: Vec<Level>,
    pub slope: f64,
    pub expected: f64,
    pub band: f64,
    pub pass: bool,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Mean closure over the same points for each step in `hs`, and the fitted
/// order. Needs a finite-difference engine.
pub fn run_convergence(scenario: &Scenario, hs: &[f64], exec: Execution) -> Result<ConvergenceReport> {
    scenario.validate()?;
    let order = scenario
        .engine
        .truncation_order()
        .ok_or_else(|| Error::config("convergence study needs a finite-difference engine (fd2 or fd4)"))?;
    if hs.len() < 2 || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::config("convergence study needs at least two positive steps"));
    }
    let sign = match scenario.sign {
        SignChoice::Fixed(s) => s,
        SignChoice::Auto => run_verify(&scenario.clone().with_engine(DerivEngine::Ad2), exec)?.sign,
    };
    let cases = scenario.cases()?;
    let mut levels = Vec::with_capacity(hs.len());
    for &h in hs {
        let engine = scenario.engine.with_step(h);
        let rows = evaluate_all(&cases, scenario, &engine, sign, exec)?;
        let s = Summary::of(&rows);
        levels.push(Level {
            h,
            mean_closure: s.mean_closure,
            max_closure: s.max_closure,
            checked: s.checked,
            skipped: s.skipped + s.inconsistent,
        });
    }
    let usable = levels.iter().all(|l| l.checked > 0 && l.mean_closure > 0.0);
    let slope = if usable {
        loglog_slope(
            &levels.iter().map(|l| l.h).collect::<Vec<_>>(),
            &levels.iter().map(|l| l.mean_closure).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    let expected = order as f64;
    let band = 0.15 * expected;
    Ok(ConvergenceReport {
        scenario: scenario.clone(),
        sign,
        levels,
        slope,
        expected,
        band,
        pass: (slope - expected).abs() <= band,
    })
}

impl ConvergenceReport {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        let sc = &self.scenario;
        writeln!(out, "{}", sc.header("convergence"))?;
        writeln!(out, "{CONVERGENCE_COLUMNS}")?;
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{},{:.17e},{:.17e},{:.17e},{},{}",
                sc.id(),
                sc.chart,
                sc.engine.label(),
                l.h,
                l.mean_closure,
                l.max_closure,
                l.checked,
                l.skipped
            )?;
        }
        writeln!(out, "# fitted_order={:.17e}", self.slope)
    }

    pub fn summary_text(&self) -> String {
        let mut t = format!(
            "converge {} [{}] chart={} potential={} dust={} engine={} sign={}\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.scenario.id(),
            self.scenario.chart,
            self.scenario.potential,
            self.scenario.dust,
            self.scenario.engine.label(),
            self.sign
        );
        for l in &self.levels {
            t += &format!("  h {:.3e}: mean closure {:.3e} (checked {})\n", l.h, l.mean_closure, l.checked);
        }
        t += &format!("  fitted order {:.3} (expected {} ± {})\n", self.slope, self.expected, self.band);
        t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldlineConfig {
    pub chart: Chart,
    pub potential: String,
    pub field: EMField,
    pub params: ParticleParams,
    pub sign: Sign,
    pub engine: DerivEngine,
    pub ds: f64,
    pub steps: usize,
    pub every: usize,
    /// Cartesian `(t, x, y, z)` of the start event.
    pub position: Vec4,
    /// Cartesian three-velocity at the start.
    pub beta: [f64; 3],
    pub renormalize: bool,
    /// Allowed `max |g(v, v) − 1|` along the trajectory.
    pub tol: f64,
}

impl WorldlineConfig {
    pub fn new(chart: &str, potential: &str, q_over_m: f64) -> Result<Self> {
        Ok(WorldlineConfig {
            chart: chart.parse()?,
            potential: potential.trim().to_string(),
            field: EMField::FromPotential(Potential::parse(potential)?),
            params: ParticleParams::new(q_over_m)?,
            sign: Sign::Plus,
            engine: DerivEngine::Ad2,
            ds: 1e-3,
            steps: 1000,
            every: 10,
            position: [0.0; 4],
            beta: [0.0; 3],
            renormalize: false,
            tol: 1e-6,
        })
    }

    pub fn initial_state(&self) -> Result<WorldlineState> {
        WorldlineState::from_cartesian(&self.chart, self.position, self.beta)
    }

    fn header(&self) -> String {
        format!(
            "# chargelaw worldline v{CSV_VERSION}; chart={}; potential={}; q_over_m={}; sign={}; engine={}; ds={}; steps={}; every={}; position={:?}; beta={:?}; renormalize={}",
            self.chart,
            self.potential,
            self.params.q_over_m,
            self.sign,
            self.engine,
            self.ds,
            self.steps,
            self.every,
            self.position,
            self.beta,
            self.renormalize
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldlineReport {
    pub config: WorldlineConfig,
    pub trajectory: Trajectory,
    /// Why integration stopped early, if it did.
    pub stopped: Option<Error>,
    pub max_drift: f64,
    pub pass: bool,
}

pub fn run_worldline(config: &WorldlineConfig) -> Result<WorldlineReport> {
    config.engine.validate()?;
    if config.steps == 0 {
        return Err(Error::config("steps must be at least 1"));
    }
    let init = config.initial_state()?;
    let integ = Integrator::new(&config.chart, &config.field, config.params)
        .with_sign(config.sign)
        .with_engine(config.engine)
        .with_renormalize(config.renormalize);
    let (trajectory, stopped) = integ.integrate_partial(&init, config.ds, config.steps, config.every)?;
    if let Some(e @ (Error::EngineOrder { .. } | Error::Config(_))) = &stopped {
        return Err(e.clone());
    }
    let max_drift = trajectory.max_drift();
    let pass = stopped.is_none() && max_drift <= config.tol;
    Ok(WorldlineReport {
        config: config.clone(),
        trajectory,
        stopped,
        max_drift,
        pass,
    })
}

impl WorldlineReport {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", self.config.header())?;
        self.trajectory.write_csv(out)
    }

    pub fn summary_text(&self) -> String {
        let last = self.trajectory.last();
        let mut t = format!(
            "worldline {} chart={} potential={} q/m={} ds={} steps={}\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.config.chart,
            self.config.potential,
            self.config.params.q_over_m,
            self.config.ds,
            self.config.steps
        );
        t += &format!("  final s {:.6}, u {:?}\n", last.s, last.u);
        t += &format!("  max |g(v,v) - 1| {:.3e} (tolerance {:.1e})\n", self.max_drift, self.config.tol);
        if let Some(e) = &self.stopped {
            t += &format!("  stopped early: {e}\n");
        }
        t
    }
}

/// Flat settings shared by the command line and config files. Command-line
/// values win over file values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub chart: Option<String>,
    pub potential: Option<String>,
    pub dust: Option<String>,
    pub engine: Option<String>,
    pub h: Option<f64>,
    pub hs: Option<String>,
    pub sign: Option<String>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<String>,
    pub q_over_m: Option<f64>,
    pub ds: Option<f64>,
    pub steps: Option<usize>,
    pub every: Option<usize>,
    pub position: Option<String>,
    pub velocity: Option<String>,
    pub renormalize: Option<bool>,
}

fn typed<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("bad value `{v}` for `{key}`")))
}

fn number_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| typed::<f64>(key, x.trim())).collect()
}

impl Settings {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().replace('-', "_");
            let v = v.trim();
            let text = || Some(v.to_string());
            match key.as_str() {
                "chart" => s.chart = text(),
                "potential" => s.potential = text(),
                "dust" => s.dust = text(),
                "engine" => s.engine = text(),
                "h" => s.h = Some(typed(&key, v)?),
                "hs" => s.hs = text(),
                "sign" => s.sign = text(),
                "samples" => s.samples = Some(typed(&key, v)?),
                "seed" => s.seed = Some(typed(&key, v)?),
                "tol" => s.tol = Some(typed(&key, v)?),
                "out" => s.out = text(),
                "q_over_m" => s.q_over_m = Some(typed(&key, v)?),
                "ds" => s.ds = Some(typed(&key, v)?),
                "steps" => s.steps = Some(typed(&key, v)?),
                "every" => s.every = Some(typed(&key, v)?),
                "position" => s.position = text(),
                "velocity" => s.velocity = text(),
                "renormalize" => s.renormalize = Some(typed(&key, v)?),
                other => return Err(Error::config(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        Ok(s)
    }

    /// Fill unset fields from `fallback`.
    pub fn or(self, fallback: Settings) -> Settings {
        Settings {
            chart: self.chart.or(fallback.chart),
            potential: self.potential.or(fallback.potential),
            dust: self.dust.or(fallback.dust),
            engine: self.engine.or(fallback.engine),
            h: self.h.or(fallback.h),
            hs: self.hs.or(fallback.hs),
            sign: self.sign.or(fallback.sign),
            samples: self.samples.or(fallback.samples),
            seed: self.seed.or(fallback.seed),
            tol: self.tol.or(fallback.tol),
            out: self.out.or(fallback.out),
            q_over_m: self.q_over_m.or(fallback.q_over_m),
            ds: self.ds.or(fallback.ds),
            steps: self.steps.or(fallback.steps),
            every: self.every.or(fallback.every),
            position: self.position.or(fallback.position),
            velocity: self.velocity.or(fallback.velocity),
            renormalize: self.renormalize.or(fallback.renormalize),
        }
    }

    /// Scenario for `verify` (`default_engine = "ad"`) or `converge`.
    pub fn scenario(&self, default_engine: &str) -> Result<Scenario> {
        let engine_name = self.engine.as_deref().unwrap_or(default_engine);
        let mut sc = Scenario::new(
            self.chart.as_deref().unwrap_or("cartesian"),
            self.potential.as_deref().unwrap_or("zero"),
            self.dust.as_deref().unwrap_or("comoving"),
            engine_name,
        )?
        .with_engine(DerivEngine::parse(engine_name, self.h)?)
        .with_samples(self.samples.unwrap_or(DEFAULT_SAMPLES))
        .with_seed(self.seed.unwrap_or(DEFAULT_SEED))
        .with_tol(self.tol);
        if let Some(s) = &self.sign {
            sc = sc.with_sign(s.parse()?);
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn steps_list(&self) -> Result<Vec<f64>> {
        match &self.hs {
            Some(v) => number_list("hs", v),
            None => Ok(DEFAULT_STEPS.to_vec()),
        }
    }

    pub fn worldline(&self) -> Result<WorldlineConfig> {
        let mut c = WorldlineConfig::new(
            self.chart.as_deref().unwrap_or("cartesian"),
            self.potential.as_deref().unwrap_or("zero"),
            self.q_over_m.unwrap_or(1.0),
        )?;
        if let Some(e) = &self.engine {
            c.engine = DerivEngine::parse(e, self.h)?;
        }
        if let Some(s) = &self.sign {
            c.sign = match s.parse::<SignChoice>()? {
                SignChoice::Fixed(s) => s,
                SignChoice::Auto => Sign::Plus,
            };
        }
        if let Some(ds) = self.ds {
            c.ds = ds;
        }
        if let Some(n) = self.steps {
            c.steps = n;
        }
        if let Some(k) = self.every {
            c.every = k;
        }
        if let Some(p) = &self.position {
            let v = number_list("position", p)?;
            c.position = match v.len() {
                3 => [0.0, v[0], v[1], v[2]],
                4 => [v[0], v[1], v[2], v[3]],
                _ => return Err(Error::config("position takes 3 (x,y,z) or 4 (t,x,y,z) numbers")),
            };
        }
        if let Some(b) = &self.velocity {
            let v = number_list("velocity", b)?;
            if v.len() != 3 {
                return Err(Error::config("velocity takes 3 numbers (three-velocity)"));
            }
            c.beta = [v[0], v[1], v[2]];
        }
        if let Some(r) = self.renormalize {
            c.renormalize = r;
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if !(c.ds > 0.0 && c.ds.is_finite()) {
            return Err(Error::config(format!("ds = {} must be positive", c.ds)));
        }
        Ok(c)
    }
}
