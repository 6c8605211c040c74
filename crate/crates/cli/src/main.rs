use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tampc::checks::run_checks;
use tampc::estimator::{adapt_time_grid, estimate};
use tampc::grid::{SpatialMesh, TimeGrid};
use tampc::mpc::{run_mpc, MpcConfig, MpcVariant};
use tampc::openloop::solve_open_loop;
use tampc::problem::ProblemSpec;
use tampc::problems::ProblemDescriptor;
use tampc::report::{run_experiment, ExperimentConfig};
use tampc::spacetime::solve_mixed_from;
use tampc::Error;

#[derive(Parser)]
#[command(name = "tampc", version, about = "Time-adaptive MPC for 1D parabolic control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an estimator-driven time grid and write it as text.
    AdaptGrid {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        /// Defaults to the problem's final time.
        #[arg(long)]
        end: Option<f64>,
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 5)]
        mesh: usize,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Also write the per-interval indicators of the final grid.
        #[arg(long)]
        indicators: Option<PathBuf>,
    },
    /// Solve one open-loop subproblem and write (t, x, y, u, p).
    OpenLoop {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Time grid file; a uniform grid on [0, T] is used otherwise.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 11)]
        instances: usize,
        #[arg(long, default_value_t = 100)]
        mesh: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run one closed loop.
    Mpc {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_parser = parse_variant)]
        variant: MpcVariant,
        #[arg(long, short = 'm', default_value_t = 45)]
        m: usize,
        #[arg(long, short = 'n')]
        n: usize,
        /// Window length for the online variants.
        #[arg(long)]
        horizon_length: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 5)]
        coarse: usize,
        #[arg(long, default_value_t = 100)]
        fine: usize,
        #[arg(long)]
        warm_start: bool,
        /// Directory for trajectory.csv, iterations.csv and grid.txt.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run every combination of a TOML experiment file.
    Sweep { config: PathBuf },
    /// Run the invariant and oracle suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ProblemArgs {
    /// zero, test1 or test2.
    #[arg(long, default_value = "test1")]
    problem: String,
    /// Parameter override, e.g. `--param epsilon=0.01`.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
}

impl ProblemArgs {
    fn build(&self) -> tampc::Result<ProblemSpec> {
        let d = self
            .params
            .iter()
            .fold(ProblemDescriptor::new(&self.problem), |d, (k, v)| d.with(k, *v));
        d.build()
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    let v = v.trim().parse().map_err(|e| format!("{v}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_variant(s: &str) -> Result<MpcVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Lib(Error),
    /// Some sweep combinations failed; each is recorded in the comparison table.
    Runs,
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runs) => ExitCode::from(2),
        Err(Failure::Checks) => ExitCode::from(3),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::AdaptGrid {
            problem,
            start,
            end,
            target,
            mesh,
            theta,
            output,
            indicators,
        } => {
            let p = problem.build()?;
            let mesh = SpatialMesh::new(mesh)?;
            let grid = adapt_time_grid(&p, (start, end.unwrap_or(p.t_end())), target, &mesh, theta)?;
            match output {
                Some(path) => grid.write(path)?,
                None => print!("{}", grid.to_text()),
            }
            if let Some(path) = indicators {
                let y0 = initial_state(&p, start, &mesh);
                let sol = solve_mixed_from(&p, &grid, &mesh, Some(&y0), None)?;
                estimate(&sol).write_csv(path)?;
            }
        }
        Command::OpenLoop {
            problem,
            grid,
            instances,
            mesh,
            output,
        } => {
            let p = problem.build()?;
            let mesh = SpatialMesh::new(mesh)?;
            let grid = match grid {
                Some(path) => TimeGrid::read(path)?,
                None => TimeGrid::uniform(0.0, p.t_end(), instances)?,
            };
            let y0 = initial_state(&p, grid.start(), &mesh);
            let sol = solve_open_loop(&p, &grid, &y0, &mesh)?;
            sol.write_csv(output)?;
            println!("cost {}", sol.cost);
        }
        Command::Mpc {
            problem,
            variant,
            m,
            n,
            horizon_length,
            theta,
            coarse,
            fine,
            warm_start,
            output,
        } => {
            let p = problem.build()?;
            let mut config = match horizon_length {
                Some(h) if variant.is_online() => MpcConfig::online(variant, h, n),
                _ => MpcConfig::new(variant, m, n),
            };
            config.doerfler_theta = theta;
            config.coarse_mesh = SpatialMesh::new(coarse)?;
            config.fine_mesh = SpatialMesh::new(fine)?;
            config.warm_start = warm_start;
            let run = run_mpc(&p, &config)?;
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir).map_err(Error::from)?;
                run.write_trajectory_csv(dir.join("trajectory.csv"))?;
                run.write_iterations_csv(dir.join("iterations.csv"))?;
                run.grid().write(dir.join("grid.txt"))?;
            }
            let err = run.l2_error_y.map_or("n/a".to_string(), |e| e.to_string());
            println!(
                "{variant}: {} iterations, l2_error_y {err}, tracking {}, control {}, {:.3} s",
                run.iterations.len(),
                run.tracking_cost,
                run.control_cost,
                run.total_wall_time
            );
        }
        Command::Sweep { config } => {
            let config = ExperimentConfig::from_file(config)?;
            let outcome = run_experiment(&config)?;
            for row in &outcome.rows {
                let err = row.l2_error_y.map_or("n/a".to_string(), |e| format!("{e:.4e}"));
                println!("{:<28} {err:>12}  {}", row.combination.label(), row.status);
            }
            let failed = outcome.failures();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", outcome.rows.len());
                return Err(Failure::Runs);
            }
        }
        Command::Check { seed } => {
            let results = run_checks(seed)?;
            for r in &results {
                let tag = if r.passed { "ok  " } else { "FAIL" };
                println!("{tag} {}: {}", r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Failure::Checks);
            }
        }
    }
    Ok(())
}

fn initial_state(p: &ProblemSpec, t: f64, mesh: &SpatialMesh) -> Vec<f64> {
    if t == 0.0 {
        mesh.sample(|x| p.initial_state(x))
    } else {
        mesh.sample(|x| p.exact_state(t, x).unwrap_or_else(|| p.initial_state(x)))
    }
}
