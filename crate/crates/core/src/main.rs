use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mirror_descent::experiment::{run_experiment, ExperimentConfig};
use mirror_descent::network::{generate_graph, metropolis_weights};
use mirror_descent::textio::fmt_f64;
use mirror_descent::trace::{compare_runs, TraceTable};
use mirror_descent::{Graph, MixingMatrix, ProblemInstance};

#[derive(Parser)]
#[command(name = "mirror-descent", version, about = "Centralized and distributed mirror descent on the simplex")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a TOML config and write its trace.
    Run { config: PathBuf },
    /// Write a random l1 regression instance.
    GenProblem {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random connected graph as an edge list.
    GenGraph {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        edges: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write its Metropolis-Hastings matrix here.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Check a mixing matrix (or, with --graph, the Metropolis-Hastings matrix of an edge list).
    CheckMatrix {
        file: PathBuf,
        #[arg(long)]
        graph: bool,
    },
    /// First iteration at which each trace reaches f_gap <= GAP.
    Compare { trace_a: PathBuf, trace_b: PathBuf, gap: f64 },
}

fn emit(text: &str, out: Option<&PathBuf>) -> mirror_descent::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn first_hit(k: Option<u64>) -> String {
    k.map_or_else(|| "never".to_string(), |k| k.to_string())
}

fn run(cmd: Cmd) -> mirror_descent::Result<bool> {
    match cmd {
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::read_file(&config)?;
            let r = run_experiment(&cfg)?;
            println!("trace {}", r.trace_path.display());
            println!("iterations {}", r.iterations);
            println!("f_initial {}", fmt_f64(r.initial_f));
            println!("f_final {}", fmt_f64(r.final_f));
            println!("f_star {}", fmt_f64(r.f_star));
            println!("f_gap {}", fmt_f64(r.final_gap));
            if let Some(c) = r.consensus_error {
                println!("consensus_error {}", fmt_f64(c));
            }
            if let Some(s) = r.sigma2 {
                println!("sigma2 {}", fmt_f64(s));
            }
            println!("monitor_violations {}", r.violations);
            Ok(r.success())
        }
        Cmd::GenProblem { rows, dim, seed, out } => {
            let p = ProblemInstance::generate(rows, dim, seed)?;
            emit(&p.to_text(), out.as_ref())?;
            Ok(true)
        }
        Cmd::GenGraph { nodes, edges, seed, out, matrix_out } => {
            let g = generate_graph(nodes, edges, seed)?;
            emit(&g.to_text(), out.as_ref())?;
            if let Some(m) = matrix_out {
                metropolis_weights(&g)?.write_file(m)?;
            }
            Ok(true)
        }
        Cmd::CheckMatrix { file, graph } => {
            let a = if graph { metropolis_weights(&Graph::read_file(&file)?)? } else { MixingMatrix::read_file(&file)? };
            let r = a.verify_assumptions();
            println!("doubly_stochastic {}", r.doubly_stochastic);
            println!("symmetric {}", r.symmetric);
            println!("irreducible {}", r.irreducible);
            println!("aperiodic {}", r.aperiodic);
            println!("sigma2 {}", fmt_f64(r.sigma2));
            if !r.all_pass() {
                eprintln!("failed: {}", r.failures().join(", "));
            }
            Ok(r.all_pass())
        }
        Cmd::Compare { trace_a, trace_b, gap } => {
            let a = TraceTable::read_file(&trace_a)?;
            let b = TraceTable::read_file(&trace_b)?;
            let (ka, kb) = compare_runs(&a, &b, gap)?;
            println!("{} {}", trace_a.display(), first_hit(ka));
            println!("{} {}", trace_b.display(), first_hit(kb));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
