use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chargelaw::scenario::Settings;
use chargelaw::{run_convergence, run_verify, run_worldline, Error, Execution};

/// Check the charged-dust law of motion against Maxwell's equations and
/// stress-energy conservation in curvilinear charts.
///
/// Exit status: 0 when every check passes, 1 when a tolerance check fails,
/// 2 on configuration or usage errors.
#[derive(Parser, Debug)]
#[command(name = "chargelaw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the conservation identity at seeded sample points.
    Verify(RunArgs),
    /// Fit the closure's order of convergence under finite differences.
    Converge(ConvergeArgs),
    /// Integrate a charged-particle worldline.
    Worldline(WorldlineArgs),
}

#[derive(Args, Debug)]
struct Shared {
    /// cartesian, spherical, cylindrical or skewed
    #[arg(long)]
    chart: Option<String>,
    /// Potential presets joined by `+`, e.g. `plane_wave:0.1,2.0+uniform_e:0.5`, or `random`
    #[arg(long)]
    potential: Option<String>,
    /// fd2, fd4 or ad
    #[arg(long)]
    engine: Option<String>,
    /// Finite-difference step
    #[arg(long)]
    h: Option<f64>,
    /// +1, -1 or auto
    #[arg(long, allow_hyphen_values = true)]
    sign: Option<String>,
    /// Tolerance override
    #[arg(long)]
    tol: Option<f64>,
    /// CSV destination (standard output when absent)
    #[arg(long)]
    out: Option<String>,
    /// Flat `key = value` file; command-line flags take precedence
    #[arg(long)]
    config: Option<String>,
    /// Evaluate points on the calling thread only
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    shared: Shared,
    /// comoving, boost:β, rotation:ω, radial[:β] or induced
    #[arg(long)]
    dust: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated steps, default 1e-2,5e-3,2.5e-3
    #[arg(long)]
    hs: Option<String>,
}

#[derive(Args, Debug)]
struct WorldlineArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    q_over_m: Option<f64>,
    /// Proper-time step
    #[arg(long)]
    ds: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Sample every k-th step
    #[arg(long)]
    every: Option<usize>,
    /// Cartesian start `x,y,z` or `t,x,y,z`
    #[arg(long, allow_hyphen_values = true)]
    position: Option<String>,
    /// Cartesian three-velocity `bx,by,bz`
    #[arg(long, allow_hyphen_values = true)]
    velocity: Option<String>,
    /// Rescale the four-velocity to unit norm after each step
    #[arg(long)]
    renormalize: bool,
}

impl Shared {
    fn settings(&self) -> Settings {
        Settings {
            chart: self.chart.clone(),
            potential: self.potential.clone(),
            engine: self.engine.clone(),
            h: self.h,
            sign: self.sign.clone(),
            tol: self.tol,
            out: self.out.clone(),
            ..Settings::default()
        }
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

impl RunArgs {
    fn settings(&self) -> Settings {
        Settings {
            dust: self.dust.clone(),
            samples: self.samples,
            seed: self.seed,
            ..self.shared.settings()
        }
    }
}

fn with_file(flags: Settings, config: &Option<String>) -> Result<Settings, Error> {
    match config {
        None => Ok(flags),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read `{path}`: {e}")))?;
            Ok(flags.or(Settings::parse_config(&text)?))
        }
    }
}

fn emit(out: &Option<String>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Error> {
    let io_err = |e: io::Error| Error::config(format!("cannot write output: {e}"));
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::config(format!("cannot create `{path}`: {e}")))?;
            let mut w = BufWriter::new(file);
            write(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Verify(args) => {
            let s = with_file(args.settings(), &args.shared.config)?;
            let report = run_verify(&s.scenario("ad")?, args.shared.execution())?;
            emit(&s.out, |w| report.write_csv(w))?;
            eprint!("{}", report.summary_text());
            Ok(report.summary.pass)
        }
        Command::Converge(args) => {
            let flags = Settings {
                hs: args.hs.clone(),
                ..args.run.settings()
            };
            let s = with_file(flags, &args.run.shared.config)?;
            let report = run_convergence(&s.scenario("fd2")?, &s.steps_list()?, args.run.shared.execution())?;
            emit(&s.out, |w| report.write_csv(w))?;
            eprint!("{}", report.summary_text());
            Ok(report.pass)
        }
        Command::Worldline(args) => {
            let flags = Settings {
                q_over_m: args.q_over_m,
                ds: args.ds,
                steps: args.steps,
                every: args.every,
                position: args.position.clone(),
                velocity: args.velocity.clone(),
                renormalize: args.renormalize.then_some(true),
                ..args.shared.settings()
            };
            let s = with_file(flags, &args.shared.config)?;
            let report = run_worldline(&s.worldline()?)?;
            emit(&s.out, |w| report.write_csv(w))?;
            eprint!("{}", report.summary_text());
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("chargelaw: {e}");
            ExitCode::from(2)
        }
    }
}
