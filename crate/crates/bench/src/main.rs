use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Parser, Subcommand};

use varsmooth_bench::config::RunConfig;
use varsmooth_bench::opnorm::{self, parse_dims, OpKind, OpSpec};
use varsmooth_bench::rate::fit_trace;
use varsmooth_bench::run::{execute, with_seed_suffix, write_outputs};
use varsmooth_bench::trace_csv::CsvTrace;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "varsmooth-bench", version, about = "Variable-smoothing solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment (or a seed sweep).
    Run {
        /// Flat key=value config file; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "trace.csv")]
        out_csv: PathBuf,
        #[arg(long, default_value = "final.pgm")]
        out_image: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run N consecutive seeds concurrently, suffixing output names with the seed.
        #[arg(long, value_name = "N")]
        sweep: Option<usize>,
        /// Write wall_ms as 0 so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Least-squares slope of ln(rel_objective) against ln(k).
    Rate {
        csv: PathBuf,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = usize::MAX)]
        k_max: usize,
    },
    /// Run the property suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
    /// Power-iteration norm estimate next to the analytic bound.
    Opnorm {
        /// One of d1, d2, grad-stack, blur.
        operator: String,
        /// Image size as MxN.
        #[arg(long, default_value = "256x256")]
        dims: String,
        #[arg(long, default_value_t = 9)]
        blur_size: usize,
        #[arg(long, default_value_t = 1.5)]
        blur_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out_csv,
            out_image,
            seed,
            sweep,
            no_timing,
        } => cmd_run(config.as_deref(), &out_csv, &out_image, seed, sweep, !no_timing),
        Command::Rate { csv, k_min, k_max } => cmd_rate(&csv, k_min, k_max),
        Command::Check { seed, trials } => cmd_check(seed, trials),
        Command::Opnorm {
            operator,
            dims,
            blur_size,
            blur_sigma,
            seed,
        } => cmd_opnorm(&operator, &dims, blur_size, blur_sigma, seed),
    }
}

fn cmd_run(
    config: Option<&Path>,
    out_csv: &Path,
    out_image: &Path,
    seed: Option<u64>,
    sweep: Option<usize>,
    timing: bool,
) -> ExitCode {
    let text = match config.map(fs::read_to_string).transpose() {
        Ok(t) => t.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: cannot read config: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let Some(count) = sweep else {
        return run_one(&cfg, out_csv, out_image, timing);
    };
    if count == 0 {
        eprintln!("error: --sweep needs N >= 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    let codes: Vec<ExitCode> = thread::scope(|s| {
        let handles: Vec<_> = (0..count as u64)
            .map(|i| {
                let mut c = cfg.clone();
                c.seed = cfg.seed + i;
                let (csv, img) = (with_seed_suffix(out_csv, c.seed), with_seed_suffix(out_image, c.seed));
                s.spawn(move || run_one(&c, &csv, &img, timing))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    codes
        .into_iter()
        .find(|c| *c != ExitCode::SUCCESS)
        .unwrap_or(ExitCode::SUCCESS)
}

fn run_one(cfg: &RunConfig, out_csv: &Path, out_image: &Path, timing: bool) -> ExitCode {
    let out = match execute(cfg, timing) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error (seed {}): {e}", cfg.seed);
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    if let Err(e) = write_outputs(&out, out_csv, out_image) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    if let Some(k) = out.diverged_at {
        eprintln!("seed {}: diverged at iteration {k}; partial trace in {}", cfg.seed, out_csv.display());
        return ExitCode::from(EXIT_DIVERGED);
    }
    let last = out.csv.rows.last().expect("trace has rows");
    println!(
        "seed {}: {} iterations, F = {}, F* = {}, rel = {:.3e} -> {}",
        cfg.seed,
        last.k,
        last.objective,
        out.reference.f_star,
        last.rel_objective.unwrap_or(f64::NAN),
        out_csv.display()
    );
    ExitCode::SUCCESS
}

fn cmd_rate(path: &Path, k_min: usize, k_max: usize) -> ExitCode {
    let trace = match fs::File::open(path).map_err(csv::Error::from).and_then(CsvTrace::read) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    match fit_trace(&trace, k_min, k_max) {
        Ok(fit) => {
            println!("slope={:.4} rows={} clipped={}", fit.slope, fit.used, fit.clipped);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn cmd_check(seed: u64, trials: usize) -> ExitCode {
    if trials == 0 {
        eprintln!("error: --trials must be >= 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    match varsmooth_bench::check_report(seed, trials, &mut std::io::stdout().lock()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn cmd_opnorm(operator: &str, dims: &str, blur_size: usize, blur_sigma: f64, seed: u64) -> ExitCode {
    let spec = match (OpKind::parse(operator, blur_size, blur_sigma), parse_dims(dims)) {
        (Ok(kind), Ok((m, n))) => OpSpec { kind, m, n },
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match opnorm::report(&spec, seed) {
        Ok(r) => {
            let bound = r.bound.map_or("none".to_string(), |b| format!("{b:.6}"));
            println!("{operator} {}x{}: estimate={:.6} bound={bound}", spec.m, spec.n, r.estimate);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
