use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biot_hp::study::{run_study, Scheme, StudyConfig};
use biot_hp::validate::{run_properties, ValidateOptions};

#[derive(Parser)]
#[command(name = "biot-hp", version, about = "hp-adaptive FEM for Biot poroelasticity with Signorini contact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// refinement scheme (h-uniform, r-uniform, h-adaptive, hp-adaptive)
    #[arg(long)]
    scheme: Option<Scheme>,
    /// stop refining once a level would exceed this many unknowns
    #[arg(long)]
    max_dof: Option<usize>,
    /// polynomial degree
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once on the initial mesh and write the solution
    Solve(Common),
    /// Run a refinement study and write convergence.csv, VTK files and contact.csv
    Study(Common),
    /// Run the randomized property suite
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

fn load(c: &Common) -> biot_hp::Result<StudyConfig> {
    let mut config = match &c.config {
        Some(p) => StudyConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => StudyConfig::default(),
    };
    if let Some(s) = c.scheme {
        config.scheme = s;
    }
    if let Some(n) = c.max_dof {
        config.max_dof = n;
    }
    if let Some(r) = c.r {
        config.r = r;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> biot_hp::Result<bool> {
    match cli.command {
        Command::Solve(c) => {
            let mut config = load(&c)?;
            config.max_levels = 1;
            let res = run_study(&config, Some(&c.out))?;
            let r = &res.records[0];
            println!("N = {}  eta = {:.6e}  err = {:.6e}", r.n, r.eta_total, r.err);
            println!("wrote {}", c.out.display());
            Ok(true)
        }
        Command::Study(c) => {
            let config = load(&c)?;
            let res = run_study(&config, Some(&c.out))?;
            println!("{:>5} {:>9} {:>14} {:>14} {:>8}", "level", "N", "err", "eta", "eoc");
            for r in &res.records {
                println!(
                    "{:>5} {:>9} {:>14.6e} {:>14.6e} {:>8}",
                    r.level,
                    r.n,
                    r.err,
                    r.eta_total,
                    r.eoc.map_or("-".into(), |e| format!("{e:.3}"))
                );
            }
            println!("wrote {}", c.out.display());
            Ok(true)
        }
        Command::Validate { config, out, seed, instances } => {
            let mut opts = ValidateOptions { seed, instances, ..ValidateOptions::default() };
            if let Some(p) = config {
                let c = StudyConfig::from_json(&std::fs::read_to_string(p)?)?;
                opts.solver = c.tolerances;
            }
            let report = run_properties(&opts)?;
            print!("{}", report.table());
            std::fs::create_dir_all(&out)?;
            let path = out.join("validate.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            println!("wrote {}", path.display());
            Ok(report.all_passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
