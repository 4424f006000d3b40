use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use torusflow::verify::{run_suite, ExperimentConfig, Suite};

/// Runs a verification suite and writes `<out>/<suite>.report.json` and `<out>/<suite>.csv`.
#[derive(Debug, Parser)]
#[command(name = "torusflow", version)]
struct Cli {
    /// operators | gamma | interp | tvflow | acflow | tdf | cac | poincare | all
    suite: String,
    /// JSON configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Horizon of the flow suites.
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps_prox: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> torusflow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.suite = self.suite.parse::<Suite>()?;
        if let Some(k) = &self.k {
            cfg.grids = Some(k.clone());
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if self.t_end.is_some() {
            cfg.t_end = self.t_end;
        }
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        if let Some(v) = self.eps_prox {
            cfg.eps_prox = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_suite(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let (json, csv) = match report.write(&cfg.out) {
        Ok(paths) => paths,
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            return ExitCode::from(2);
        }
    };
    for r in report.failures() {
        eprintln!("FAIL {} (k = {:?}): measured {:e}, bound {:e}", r.name, r.k, r.measured, r.bound);
        if let Some(note) = &r.note {
            eprintln!("     {note}");
        }
    }
    let failed = report.failures().count();
    println!(
        "{}: {} of {} checks passed; wrote {} and {}",
        report.suite,
        report.records.len() - failed,
        report.records.len(),
        json.display(),
        csv.display()
    );
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
