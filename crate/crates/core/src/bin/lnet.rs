use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lnet::lnet::{tessellate, verify, LNet, TessellationParams, TOL_OC};
use lnet::pipeline::{export_obj, report, run_pipeline, RunConfig};

#[derive(Parser)]
#[command(name = "lnet", version, about = "Fit L-nets of planes, cones and spheres to convex surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check contact and cone admissibility of a stored net.
    Verify {
        #[arg(long)]
        lnet: PathBuf,
        #[arg(long, default_value_t = TOL_OC)]
        tol: f64,
    },
    /// Triangulate a stored net into an OBJ file.
    Tessellate {
        #[arg(long)]
        lnet: PathBuf,
        /// Output path; defaults to the net path with an `.obj` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        arc_samples: usize,
        #[arg(long, default_value_t = 8)]
        ruling_samples: usize,
    },
    /// Summarize an iteration log, one row per run.
    Report {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> lnet::Result<ExitCode> {
    match command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let (artifacts, summary) = run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("wrote {}", artifacts.lnet.display());
            eprintln!("wrote {}", artifacts.mesh.display());
            eprintln!("wrote {}", artifacts.log.display());
            eprintln!("wrote {}", artifacts.summary.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { lnet, tol } => {
            let net = LNet::from_json(&std::fs::read_to_string(lnet)?)?;
            let r = verify(&net, tol);
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(if r.is_lnet { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Tessellate { lnet, out, arc_samples, ruling_samples } => {
            let net = LNet::from_json(&std::fs::read_to_string(&lnet)?)?;
            let mesh = tessellate(&net, &TessellationParams { arc_samples, ruling_samples })?;
            let out = out.unwrap_or_else(|| lnet.with_extension("obj"));
            export_obj(&mesh, &out)?;
            eprintln!("wrote {} ({} triangles)", out.display(), mesh.triangles.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { log } => {
            print!("{}", report(&log)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
