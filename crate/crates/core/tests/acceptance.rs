//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chargelaw::calculus::{covariant_derivative, DerivEngine};
use chargelaw::chart::{pullback_metric, Chart, MetricField};
use chargelaw::em::{bianchi_residual, em_stress, field_invariant, EMField, Potential};
use chargelaw::scenario::{random_configuration, sample_points, Scenario, SignChoice, Summary, DEFAULT_SEED, DEFAULT_STEPS};
use chargelaw::worldline::{Integrator, ParticleParams, Trajectory, WorldlineState};
use chargelaw::{run_convergence, run_verify, Execution, Sign};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AD: DerivEngine = DerivEngine::Ad2;
const CHARTS: [&str; 3] = ["cartesian", "spherical", "cylindrical"];
const CONFIGS: usize = 50;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_scenario(chart: &str, sign: Sign) -> Scenario {
    Scenario::new(chart, "random", "induced", "ad")
        .unwrap()
        .with_samples(CONFIGS)
        .with_seed(DEFAULT_SEED)
        .with_sign(SignChoice::Fixed(sign))
}

/// Criterion-1 runs under both signs, shared by criteria 1, 2, 4 and 5.
struct Runs {
    plus: Vec<(&'static str, Summary)>,
    minus: Vec<(&'static str, Summary)>,
    elapsed: Duration,
}

fn runs() -> Runs {
    let start = Instant::now();
    let plus = CHARTS
        .iter()
        .map(|c| (*c, run_verify(&random_scenario(c, Sign::Plus), Execution::default()).unwrap().summary))
        .collect();
    let elapsed = start.elapsed();
    let minus = CHARTS
        .iter()
        .map(|c| (*c, run_verify(&random_scenario(c, Sign::Minus), Execution::default()).unwrap().summary))
        .collect();
    Runs { plus, minus, elapsed }
}

fn closure(r: &Runs) -> Verdict {
    let mut pass = r.elapsed < Duration::from_secs(30);
    let mut d = Vec::new();
    for (c, s) in &r.plus {
        pass &= s.checked == CONFIGS && s.max_closure < 1e-6 && s.mean_div_w > 1e-2;
        d.push(format!("{c}: checked {}/{}, max closure {:.2e}, mean |divW| {:.3}", s.checked, s.total, s.max_closure, s.mean_div_w));
    }
    d.push(format!("{:.2}s", r.elapsed.as_secs_f64()));
    verdict(pass, d.join("; "))
}

fn sign_uniqueness(r: &Runs) -> Verdict {
    let mut pass = r.plus.iter().all(|(_, s)| s.pass);
    let mut d = Vec::new();
    for (c, s) in &r.minus {
        let ratio = s.mean_closure / s.mean_lorentz;
        pass &= !s.pass && s.checked > 0 && ratio >= 0.5;
        d.push(format!("{c}: s=-1 mean closure {:.3} = {:.2} x mean Lorentz", s.mean_closure, ratio));
    }
    verdict(pass, d.join("; "))
}

fn convergence() -> Verdict {
    let mut pass = true;
    let mut d = Vec::new();
    for engine in ["fd2", "fd4"] {
        let sc = Scenario::new("spherical", "plane_wave:0.1,2.0", "induced", engine)
            .unwrap()
            .with_seed(DEFAULT_SEED)
            .with_sign(SignChoice::Fixed(Sign::Plus));
        let rep = run_convergence(&sc, &DEFAULT_STEPS, Execution::default()).unwrap();
        pass &= rep.pass;
        d.push(format!("{engine} slope {:.3} (want {} ± {})", rep.slope, rep.expected, rep.band));
    }
    verdict(pass, d.join("; "))
}

fn maxwell(r: &Runs) -> Verdict {
    let mut bianchi = r.plus.iter().map(|(_, s)| s.max_bianchi).fold(0.0, f64::max);
    let source = r.plus.iter().map(|(_, s)| s.max_source).fold(0.0, f64::max);
    let presets = ["uniform_e:0.7", "uniform_b:-1.2", "plane_wave:0.3,1.7", "coulomb:0.5", "space_charge:1.1"];
    for p in presets {
        let field = EMField::FromPotential(Potential::parse(p).unwrap());
        for chart in Chart::ALL {
            for u in sample_points(&chart, 20, 4) {
                if field.is_singular_near(&chart.to_cartesian(&u)) {
                    continue;
                }
                bianchi = bianchi.max(bianchi_residual(&field, &chart, &u, &AD).unwrap().max_abs);
            }
        }
    }
    verdict(
        bianchi < 1e-10 && source < 1e-8,
        format!("max Bianchi {bianchi:.2e}, max source residual {source:.2e}"),
    )
}

fn projection(r: &Runs) -> Verdict {
    let p = r.plus.iter().map(|(_, s)| s.max_projection).fold(0.0, f64::max);
    verdict(p < 1e-6, format!("max |v.divW - (rho v)_;v| {p:.2e}"))
}

fn trajectory(chart: Chart, f: &EMField, x: [f64; 4], beta: [f64; 3], ds: f64, steps: usize, every: usize) -> Trajectory {
    let init = WorldlineState::from_cartesian(&chart, x, beta).unwrap();
    Integrator::new(&chart, f, ParticleParams::new(1.0).unwrap())
        .integrate(&init, ds, steps, every)
        .unwrap()
}

fn worldlines() -> Verdict {
    let e = EMField::FromPotential(Potential::uniform_e(1.0));
    let (x, v) = trajectory(Chart::Cartesian, &e, [0.0; 4], [0.0; 3], 1e-3, 1000, 1000)
        .last()
        .to_cartesian(&Chart::Cartesian);
    let hyper = [
        x[0] - 1f64.sinh(),
        x[1] - (1f64.cosh() - 1.0),
        v[0] - 1f64.cosh(),
        v[1] - 1f64.sinh(),
    ]
    .iter()
    .fold(0.0f64, |a, d| a.max(d.abs()));

    let b = EMField::FromPotential(Potential::uniform_b(1.0));
    let (beta, gamma) = (0.5, 1.0 / 0.75f64.sqrt());
    let radius = gamma * beta;
    let n = 6000;
    let cyc = trajectory(Chart::Cartesian, &b, [0.0, radius, 0.0, 0.0], [0.0, -beta, 0.0], 2.0 * PI / n as f64, n, 10);
    let radius_err = cyc
        .samples
        .iter()
        .map(|r| (r.state.u[1].hypot(r.state.u[2]) - radius).abs())
        .fold(0.0, f64::max);
    let end = cyc.last();
    let period_err = (end.u[0] - 2.0 * PI * gamma)
        .abs()
        .max((end.u[1] - radius).abs())
        .max(end.u[2].abs());

    let f = EMField::FromPotential(Potential::parse("uniform_e:0.4+uniform_b:-0.8+plane_wave:0.2,1.5").unwrap());
    let (x0, b0) = ([0.0, 0.7, -0.4, 0.1], [0.2, 0.3, -0.1]);
    let ca = trajectory(Chart::Cartesian, &f, x0, b0, 2e-3, 1500, 25);
    let cb = trajectory(Chart::Cylindrical, &f, x0, b0, 2e-3, 1500, 25);
    let agree = ca
        .samples
        .iter()
        .zip(&cb.samples)
        .flat_map(|(a, b)| {
            let (xa, va) = a.state.to_cartesian(&Chart::Cartesian);
            let (xb, vb) = b.state.to_cartesian(&Chart::Cylindrical);
            (0..4).map(move |k| (xa[k] - xb[k]).abs().max((va[k] - vb[k]).abs()))
        })
        .fold(0.0, f64::max);

    let drift = |ds: f64| {
        trajectory(Chart::Spherical, &EMField::zero(), [0.0, 1.0, 0.0, 0.2], [0.0, 0.5, 0.1], ds, (10.0 / ds).round() as usize, 1)
            .max_drift()
    };
    let ratio = drift(0.1) / drift(0.05);

    verdict(
        hyper < 1e-8 && radius_err < 1e-6 && period_err < 1e-6 && agree < 1e-6 && (ratio - 16.0).abs() <= 4.0,
        format!(
            "hyperbolic {hyper:.2e}; cyclotron radius {radius_err:.2e}, period {period_err:.2e}; \
             cartesian vs cylindrical {agree:.2e}; drift ratio {ratio:.2}"
        ),
    )
}

fn tensors() -> Verdict {
    let mut compat: f64 = 0.0;
    for chart in Chart::ALL {
        for u in sample_points(&chart, 100, 7) {
            let d = covariant_derivative(&MetricField(&chart), &chart, &u, &AD).unwrap();
            compat = d.data().iter().fold(compat, |a, x| a.max(x.abs()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let (mut trace, mut invariant): (f64, f64) = (0.0, 0.0);
    for x in sample_points(&Chart::Cartesian, 100, 8) {
        let (field, _) = random_configuration(&mut rng);
        let mut reference = None;
        for chart in Chart::ALL {
            let u = chart.from_cartesian(&x);
            if chart.check_domain(&u).is_err() {
                continue;
            }
            let m = pullback_metric(&chart, &u, &AD).unwrap();
            let f = field.strength(&chart, &u, &AD).unwrap();
            let e = em_stress(&f, &m);
            let scale = e.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            let g_scale = m.g.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            let tr: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| m.g[i][j] * e[i][j]).sum();
            trace = trace.max(tr.abs() / (scale * g_scale));
            let inv = field_invariant(&f, &m.g_inv);
            let r = *reference.get_or_insert(inv);
            invariant = invariant.max((inv - r).abs());
        }
    }
    verdict(
        compat < 1e-8 && trace < 1e-12 && invariant < 1e-8,
        format!("metric compatibility {compat:.2e}; relative stress trace {trace:.2e}; FF spread across charts {invariant:.2e}"),
    )
}

fn determinism() -> Verdict {
    let args = [
        "verify",
        "--chart",
        "spherical",
        "--potential",
        "random",
        "--dust",
        "induced",
        "--samples",
        "50",
        "--seed",
        "42",
    ];
    let out = || Command::new(env!("CARGO_BIN_EXE_chargelaw")).args(args).output().unwrap().stdout;
    let (a, b, c) = (out(), out(), out());
    verdict(
        !a.is_empty() && a == b && b == c,
        format!("3 runs, {} bytes each, identical: {}", a.len(), a == b && b == c),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let r = runs();
    let results = [
        ("1 closure", closure(&r)),
        ("2 sign uniqueness", sign_uniqueness(&r)),
        ("3 FD convergence", convergence()),
        ("4 Maxwell hypotheses", maxwell(&r)),
        ("5 projection lemma", projection(&r)),
        ("6 worldline oracles", worldlines()),
        ("7 tensor infrastructure", tensors()),
        ("8 determinism", determinism()),
    ];
    let mut ok = true;
    for (name, v) in &results {
        ok &= v.pass;
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance finished in {:.2}s", start.elapsed().as_secs_f64());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
