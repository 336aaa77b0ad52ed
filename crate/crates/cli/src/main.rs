use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use csforge_core::harness::{
    self, matrix_to_csv, records_to_csv, ExperimentConfig, Scale, SweepState,
};

#[derive(Parser)]
#[command(name = "csforge", version, about = "Sensing-matrix design and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonOpts {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for emitted CSV/JSON files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the configured trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the sampled support-collection size.
    #[arg(long)]
    omega_prime: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured designs and emit one sensing-matrix CSV each.
    Design {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a single-point Monte-Carlo evaluation.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the configured sweep and emit result files.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a named preset experiment (fig2..fig9).
    Reproduce {
        /// Preset name: fig2..fig9.
        figure: String,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        omega_prime: Option<usize>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": { "kind": kind, "message": message } })
    );
    if kind == "usage" || kind == "validation" {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn load_config(common: &CommonOpts) -> Result<ExperimentConfig, (String, String)> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| ("usage".to_string(), format!("{}: {}", common.config.display(), e)))?;
    let mut cfg = ExperimentConfig::from_json(&text)
        .map_err(|e| ("validation".to_string(), e.to_string()))?;
    apply_overrides(&mut cfg, common.seed, common.trials, common.omega_prime)?;
    Ok(cfg)
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    trials: Option<usize>,
    omega_prime: Option<usize>,
) -> Result<(), (String, String)> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(o) = omega_prime {
        cfg.omega_prime_size = Some(o);
    }
    cfg.validate().map_err(|e| ("validation".to_string(), e.to_string()))
}

fn run_sweep_command(cfg: &ExperimentConfig, out_dir: Option<&PathBuf>) -> Result<(), (String, String)> {
    let out = harness::run_sweep(cfg, out_dir.map(|p| p.as_path()))
        .map_err(|e| ("runtime".to_string(), e.to_string()))?;
    print!("{}", records_to_csv(&out.records));
    if let Some(path) = &out.csv_path {
        eprintln!("wrote {}", path.display());
    }
    if let Some(path) = &out.json_path {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run_design_command(cfg: &ExperimentConfig, out_dir: Option<&PathBuf>) -> Result<(), (String, String)> {
    let data = harness::problem_data(cfg).map_err(|e| ("runtime".to_string(), e.to_string()))?;
    let axis = cfg.axis_points().map_err(|e| ("validation".to_string(), e.to_string()))?;
    let point = harness::resolve_point(cfg, axis[0])
        .map_err(|e| ("validation".to_string(), e.to_string()))?;
    let mut state = SweepState::new();
    for tag in &cfg.designs {
        let (_, design) = harness::build_design(cfg, &data, &point, tag, &mut state)
            .map_err(|e| ("runtime".to_string(), format!("design '{}': {}", tag, e)))?;
        for (t, a) in design.matrices.iter().enumerate() {
            let csv = matrix_to_csv(a, tag);
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)
                        .map_err(|e| ("runtime".to_string(), e.to_string()))?;
                    let name = if design.matrices.len() > 1 {
                        format!("{}_{}_t{}.csv", cfg.experiment, tag.replace(':', "-"), t + 1)
                    } else {
                        format!("{}_{}.csv", cfg.experiment, tag.replace(':', "-"))
                    };
                    let path = dir.join(name);
                    std::fs::write(&path, csv)
                        .map_err(|e| ("runtime".to_string(), e.to_string()))?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{}", csv),
            }
        }
    }
    Ok(())
}

fn run() -> Result<(), (String, String)> {
    let cli = Cli::parse();
    match cli.command {
        Command::Design { common } => {
            let cfg = load_config(&common)?;
            run_design_command(&cfg, common.out_dir.as_ref())
        }
        Command::Evaluate { common } => {
            let mut cfg = load_config(&common)?;
            // Single-point evaluation: pin the sweep to its first axis value.
            let axis = cfg.axis_points().map_err(|e| ("validation".to_string(), e.to_string()))?;
            if let csforge_core::harness::SweepAxis::M = cfg.sweep_axis {
                cfg.m = harness::MeasurementSpec::One(axis[0] as usize);
            } else {
                cfg.axis_values = Some(vec![axis[0]]);
            }
            run_sweep_command(&cfg, common.out_dir.as_ref())
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            run_sweep_command(&cfg, common.out_dir.as_ref())
        }
        Command::Reproduce { figure, scale, seed, out_dir, trials, omega_prime } => {
            let scale = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            };
            let mut cfg = harness::preset(&figure, scale)
                .map_err(|e| ("usage".to_string(), e.to_string()))?;
            apply_overrides(&mut cfg, seed, trials, omega_prime)?;
            run_sweep_command(&cfg, out_dir.as_ref())
        }
        Command::Selftest => {
            let mut failed = false;
            for (name, result) in harness::selftest() {
                match result {
                    Ok(()) => println!("selftest {}: pass", name),
                    Err(e) => {
                        failed = true;
                        println!("selftest {}: FAIL ({})", name, e);
                    }
                }
            }
            if failed {
                Err(("runtime".to_string(), "selftest failures".to_string()))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((kind, message)) => fail(&kind, &message),
    }
}
