use clap::{Args, Parser, Subcommand};
use phaseless::config::ExperimentConfig;
use phaseless::pipeline;
use phaseless::report::RunReport;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "phaseless",
    version,
    about = "Phaseless inverse scattering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate modulus data (and sealed ground truth) for the configured problem.
    Simulate(Common),
    /// Recover complex fields on the fit window from the stored modulus data.
    RetrievePhase(Common),
    /// Extract line integrals from retrieved fields.
    ExtractLines(Common),
    /// Filtered back-projection per slice and volume assembly.
    Invert(Common),
    /// Compare modulus data of two phantoms with equal background.
    VerifyUniqueness {
        #[command(flatten)]
        common: Common,
        /// Compare the phantom with itself instead of with the perturbed one.
        #[arg(long)]
        identical: bool,
    },
    /// Distributed-source data study (problems 3 and 4).
    Ip34Study(Common),
    /// Simulate, reconstruct and evaluate in one run directory.
    FullPipeline(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    problem: Option<u8>,
    /// Neumann series terms.
    #[arg(long)]
    n_terms: Option<usize>,
    /// Time horizon of the forward solver.
    #[arg(long = "T")]
    t_max: Option<f64>,
    #[arg(long)]
    tol_series: Option<f64>,
    /// Upper end of the measured band.
    #[arg(long)]
    k_max: Option<f64>,
    /// Fit window as `lo,hi`.
    #[arg(long, value_parser = parse_window)]
    fit_window: Option<(f64, f64)>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok((num(lo)?, num(hi)?))
}

impl Common {
    fn load(&self) -> phaseless::Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.problem {
            cfg.problem = p;
        }
        if let Some(n) = self.n_terms {
            cfg.solver.n_terms = n;
        }
        if let Some(t) = self.t_max {
            cfg.solver.t_max = Some(t);
        }
        if let Some(t) = self.tol_series {
            cfg.solver.tol_series = t;
        }
        if let Some(k) = self.k_max {
            cfg.scene.k_max = k;
        }
        if let Some(w) = self.fit_window {
            cfg.spectral.fit_window = w;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        Ok((cfg, out))
    }
}

fn finish(report: RunReport, out: &Path, stem: &str) -> phaseless::Result<bool> {
    report.write(out, stem)?;
    for f in &report.flags {
        println!(
            "{} {} (criterion {}): {}",
            if f.passed { "PASS" } else { "FAIL" },
            f.name,
            f.criterion,
            f.detail
        );
    }
    for (k, v) in &report.errors {
        println!("{k} = {v:.6e}");
    }
    println!(
        "report written to {}",
        out.join(format!("{stem}.txt")).display()
    );
    Ok(report.all_passed())
}

fn run(cli: Cli) -> phaseless::Result<bool> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = c.load()?;
            finish(pipeline::run_forward(&cfg, &out)?, &out, "simulate")
        }
        Command::RetrievePhase(c) => {
            let (cfg, out) = c.load()?;
            finish(
                pipeline::retrieve_phase_stage(&cfg, &out)?,
                &out,
                "retrieve_phase",
            )
        }
        Command::ExtractLines(c) => {
            let (cfg, out) = c.load()?;
            finish(
                pipeline::extract_lines_stage(&cfg, &out)?,
                &out,
                "extract_lines",
            )
        }
        Command::Invert(c) => {
            let (cfg, out) = c.load()?;
            finish(pipeline::invert_stage(&cfg, &out)?, &out, "invert")
        }
        Command::VerifyUniqueness { common, identical } => {
            let (cfg, out) = common.load()?;
            let q1 = cfg.phantom();
            let q2 = if identical {
                q1.clone()
            } else {
                cfg.perturbed_phantom()
            };
            let (_, report) = pipeline::verify_uniqueness(&cfg, &q1, &q2)?;
            finish(report, &out, "uniqueness")
        }
        Command::Ip34Study(c) => {
            let (cfg, out) = c.load()?;
            let (report, _) = pipeline::run_ip3_ip4_data_study(&cfg, &out)?;
            finish(report, &out, "report")
        }
        Command::FullPipeline(c) => {
            let (cfg, out) = c.load()?;
            finish(pipeline::full_pipeline(&cfg, &out)?, &out, "report")
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
