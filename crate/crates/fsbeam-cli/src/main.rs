use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fsbeam::bench::{self, Options};
use fsbeam::constitutive::ConstitutiveModel;
use fsbeam::kinematics::UpdateMethod;
use fsbeam::model::ModelSpec;
use fsbeam::oracle::{helix_oracle, pure_bending_oracle};
use fsbeam::report::write_path;
use fsbeam::solver::SolverMethod;

#[derive(Parser)]
#[command(name = "fsbeam", version, about = "Isogeometric spatial Bernoulli-Euler beam solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model file and write the equilibrium path.
    Run {
        model: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a benchmark and write its report.
    Bench {
        /// Benchmark name, or `list`.
        case: String,
        #[arg(long, value_enum)]
        formulation: Option<Formulation>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        nel: Option<usize>,
        #[arg(long, value_enum)]
        model: Option<Model>,
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the model file of a benchmark.
    Model {
        case: String,
    },
    /// Evaluate an analytical reference solution.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Cantilever under an end moment: prints ε₁₁ and χ.
    PureBending {
        #[arg(long)]
        moment: f64,
        #[arg(long)]
        area: f64,
        #[arg(long)]
        inertia: f64,
        #[arg(long)]
        modulus: f64,
    },
    /// Helix under end moments: prints ε₁₁.
    Helix {
        #[arg(long)]
        moment: f64,
        #[arg(long)]
        area: f64,
        #[arg(long)]
        inertia: f64,
        #[arg(long)]
        modulus: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Formulation {
    Fsr,
    Fsrtf,
    Sr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Dc,
    D0,
    D1,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Newton,
    Arclength,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { model, out } => {
            let spec = ModelSpec::load(&model).with_context(|| format!("reading {}", model.display()))?;
            let run = bench::run_model(&spec, None, 0)?;
            write_path(&out, &run.path)?;
            println!(
                "increments {}, load factor {:.6}, output in {}",
                run.outcome.increments,
                run.outcome.lpf,
                out.display()
            );
            if let Some(f) = &run.outcome.failure {
                eprintln!("solver stopped: {f}");
                return Ok(false);
            }
            Ok(true)
        }
        Command::Bench { case, formulation, p, nel, model, solver, out } => {
            if case == "list" {
                for c in bench::CASES {
                    println!("{c}");
                }
                return Ok(true);
            }
            let o = Options {
                formulation: formulation.map(|f| match f {
                    Formulation::Fsr => UpdateMethod::Fsr,
                    Formulation::Fsrtf => UpdateMethod::FsrTf,
                    Formulation::Sr => UpdateMethod::Sr,
                }),
                p,
                nel,
                model: model.map(|m| match m {
                    Model::Dc => ConstitutiveModel::Dc,
                    Model::D0 => ConstitutiveModel::D0,
                    Model::D1 => ConstitutiveModel::D1,
                }),
                solver: solver.map(|s| match s {
                    Solver::Newton => SolverMethod::Newton,
                    Solver::Arclength => SolverMethod::ArcLength,
                }),
            };
            let report = bench::run_case(&case, &o)?;
            print!("{}", report.text());
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&case));
            report.write(&dir)?;
            Ok(report.passed())
        }
        Command::Model { case } => {
            let o = Options::default();
            let spec = match case.as_str() {
                "pure_bending" => bench::pure_bending_spec(1, 0.1, &o)?,
                "helix" => bench::helix_spec(&o)?,
                "pretwisted" => bench::pretwisted_spec(bench::LoadOrder::Sim, &o, 3, 8)?,
                "ring_twist" => bench::ring_spec(&o)?,
                _ => bail!("no model for `{case}`; known: pure_bending, helix, pretwisted, ring_twist"),
            };
            println!("{}", spec.to_json()?);
            Ok(true)
        }
        Command::Oracle { which } => {
            match which {
                Oracle::PureBending { moment, area, inertia, modulus } => {
                    let s = pure_bending_oracle(moment, area, inertia, modulus)?;
                    println!("eps11 {:.10e}\nchi {:.10e}", s.eps11, s.chi);
                }
                Oracle::Helix { moment, area, inertia, modulus } => {
                    println!("eps11 {:.10e}", helix_oracle(moment, area, inertia, modulus)?);
                }
            }
            Ok(true)
        }
    }
}
