use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfim::experiment::{
    emit_curves, load_dataset, prepare, run, run_grid, tau_sharp_ratio, verify, ExperimentConfig, ExperimentError,
    Method, Suite, VerifyOptions,
};
use rfim::whiten::whitening_residuals;

#[derive(Parser)]
#[command(
    name = "rfim",
    version,
    about = "Relative Fisher metrics and relative natural gradient training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single training run; writes the cost curve and a JSON record.
    Train(Common),
    /// Learning-rate/momentum grid with repeats; writes the table and best curve.
    Grid(Common),
    /// Oracle and property suites.
    Verify(VerifyArgs),
    /// Fit the whitener on the training split and report retained dimensions.
    Whiten(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run (repeatable); all when omitted.
    #[arg(long = "suite")]
    suites: Vec<Suite>,
    /// Scale applied to analytic metrics before comparison.
    #[arg(long, default_value_t = 1.0)]
    corrupt_nu: f64,
    #[arg(long, default_value_t = 200_000)]
    mc_samples: usize,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json(&fs::read_to_string(p)?, self.method)?,
            None => ExperimentConfig::preset(self.method.unwrap_or(Method::Gd)),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = Some(b);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), ExperimentError> {
    fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn train(args: &Common) -> Result<(), ExperimentError> {
    let cfg = args.config()?;
    let rec = run(&cfg)?;
    let stem = format!("{}_seed{}", cfg.method, cfg.seed);
    let csv = args.out_dir.join(format!("{stem}.csv"));
    emit_curves(&rec.costs, &csv, cfg.smooth_window)?;
    write_json(
        &args.out_dir.join(format!("{stem}.json")),
        &serde_json::json!({ "config": cfg, "record": rec }),
    )?;
    println!(
        "method={} seed={} iterations={}",
        cfg.method,
        cfg.seed,
        rec.iterations()
    );
    if let Some(c) = rec.final_cost() {
        println!("final_cost={c}");
    }
    for tau in [0.5, 0.1] {
        if let Ok((m, s)) = tau_sharp_ratio(&rec.costs, tau) {
            println!("tau={tau} mean={m} std={s}");
        }
    }
    if let Some(i) = rec.diverged_at {
        println!("diverged_at={i}");
    }
    println!("curve={}", csv.display());
    Ok(())
}

fn grid(args: &Common) -> Result<(), ExperimentError> {
    let cfg = args.config()?;
    let result = run_grid(&cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut table = String::from("gamma,momentum,final_cost,diverged,runs,clamped,final_clamped,seconds\n");
    for c in &result.cells {
        let fc = c.final_cost().map_or("nan".to_string(), |v| v.to_string());
        table += &format!(
            "{},{},{},{},{},{},{},{}\n",
            c.gamma, c.momentum, fc, c.diverged, c.runs, c.clamped, c.final_clamped, c.seconds
        );
    }
    let table_path = args.out_dir.join(format!("{}_grid.csv", cfg.method));
    fs::write(&table_path, table)?;
    print!("{}", fs::read_to_string(&table_path)?);
    match result.best_cell() {
        Some(best) => {
            let path = args.out_dir.join(format!("{}_best.csv", cfg.method));
            emit_curves(&best.mean_costs, &path, cfg.smooth_window)?;
            println!(
                "best gamma={} momentum={} final_cost={}",
                best.gamma,
                best.momentum,
                best.final_cost().unwrap_or(f64::NAN)
            );
        }
        None => println!("best none (every cell diverged)"),
    }
    Ok(())
}

fn whiten(args: &Common) -> Result<(), ExperimentError> {
    let mut cfg = args.config()?;
    if !cfg.method.whitens() {
        cfg.method = Method::WhiteGd;
    }
    let ds = load_dataset(&cfg)?;
    let data = prepare(&cfg, &ds, 0)?;
    let w = data
        .whitener
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("whitening not configured".into()))?;
    let (mean, cov) = whitening_residuals(&data.features);
    println!(
        "input_dim={} retained={} dropped={}",
        w.input_dim(),
        w.retained(),
        w.dropped()
    );
    println!("max_abs_mean={mean:e} max_abs_cov_minus_identity={cov:e}");
    write_json(&args.out_dir.join("whitener.json"), w)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Whiten(a) => whiten(a),
        Command::Verify(a) => {
            let suites = if a.suites.is_empty() {
                Suite::ALL.to_vec()
            } else {
                a.suites.clone()
            };
            let opts = VerifyOptions {
                nu_scale: a.corrupt_nu,
                mc_samples: a.mc_samples,
                data_dir: a.data_dir.clone(),
            };
            let report = verify(&suites, &opts);
            print!("{report}");
            return if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
