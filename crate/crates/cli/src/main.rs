use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bce_core::dgf::DgfKind;
use bce_core::io::{read_dataset_file, read_params, write_csv, VERSION};
use bce_core::mle::{fit, FitSpec, LambdaConstraint, ParamPoint};
use bce_core::simstudy::{run_study, Scenario, StudyConfig};
use bce_core::truncated::GibbsConfig;
use bce_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "bce",
    version,
    about = "Box-Cox elliptical distributions: fitting, sampling and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaMode {
    /// Estimate every λ_k.
    Free,
    /// Hold every λ_k at zero (log-elliptical model).
    Zero,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to the positive columns of a CSV file and write the result as JSON.
    Fit {
        csv: PathBuf,
        /// normal, t, pexp or slash.
        #[arg(long, default_value = "normal")]
        family: DgfKind,
        #[arg(long, value_enum, default_value = "free")]
        lambda_mode: LambdaMode,
        /// Comma-separated column names; all columns when omitted.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
        /// Fit each column separately (independence model).
        #[arg(long)]
        independent: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gradient-norm tolerance on the mean log-likelihood.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a sample from the law in a parameter file.
    Sample {
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a bivariate density on a rectangular grid.
    PdfGrid {
        params: PathBuf,
        /// Range of the first coordinate, `lo,hi`.
        #[arg(long, value_parser = parse_range, default_value = "0.1,15")]
        x_range: (f64, f64),
        /// Range of the second coordinate, `lo,hi`.
        #[arg(long, value_parser = parse_range, default_value = "0.1,15")]
        y_range: (f64, f64),
        /// Points per axis.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Marginal quantiles of one coordinate.
    Quantile {
        params: PathBuf,
        /// Coordinate, counted from 1.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.25,0.5,0.75,0.95")]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated sampling and refitting of one of the bivariate scenarios.
    Simstudy {
        /// lognormal2, logt2, boxcoxnormal2 or boxcoxt2.
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        /// Run 5000 replicates.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic bivariate nutrient-intake data set.
    GenDemoData {
        /// B2-B3, B2-B12, B2-D, B3-B12, B3-D or B12-D.
        #[arg(long, default_value = "B2-B3")]
        pair: String,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected lo,hi, got '{s}'"))?;
    let lo: f64 = a
        .trim()
        .parse()
        .map_err(|_| format!("'{a}' is not a number"))?;
    let hi: f64 = b
        .trim()
        .parse()
        .map_err(|_| format!("'{b}' is not a number"))?;
    if lo > 0.0 && lo < hi {
        Ok((lo, hi))
    } else {
        Err(format!("range {lo},{hi} must satisfy 0 < lo < hi"))
    }
}

/// Failure of a command: exit status and message.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ToleranceNotMet { .. }
            | Error::IllConditioned { .. }
            | Error::Divergent(_)
            | Error::StudyFailed { .. } => 2,
            _ => 1,
        };
        Failure(code, e.to_string())
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure(1, msg.into())
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(path) => File::create(path)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|e| input_error(format!("{}: {e}", path.display()))),
        None => Ok(Box::new(io::stdout())),
    }
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = open_out(out)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| input_error(e.to_string()))?;
    writeln!(w, "{text}").map_err(|e| input_error(format!("write: {e}")))
}

fn fit_spec(
    family: DgfKind,
    lambda_mode: LambdaMode,
    independent: bool,
    seed: u64,
    tol: f64,
) -> FitSpec {
    let constraint = match lambda_mode {
        LambdaMode::Free => LambdaConstraint::Free,
        LambdaMode::Zero => LambdaConstraint::FixedAtZero,
    };
    let mut spec = FitSpec::new(family, constraint);
    spec.seed = seed;
    spec.tol = tol;
    if independent {
        spec = spec.independent();
    }
    spec
}

fn cmd_fit(
    csv: &Path,
    columns: Option<&[String]>,
    spec: &FitSpec,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let mut data = read_dataset_file(csv)?;
    if let Some(cols) = columns {
        data = data.select(cols)?;
    }
    let result = fit(&data.rows, spec)?;
    let converged = result.converged;
    write_json(
        out,
        &json!({
            "version": VERSION,
            "seed": spec.seed,
            "source": csv.display().to_string(),
            "columns": data.columns,
            "result": result,
        }),
    )?;
    if converged {
        Ok(0)
    } else {
        eprintln!("warning: the fit did not converge; the last iterate was written");
        Ok(2)
    }
}

fn coordinate_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("y{k}")).collect()
}

fn cmd_sample(
    params: &Path,
    n: usize,
    seed: u64,
    burn_in: usize,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let pt = read_params(params)?;
    let config = GibbsConfig {
        burn_in,
        ..GibbsConfig::with_seed(seed)
    };
    let rows = pt.distribution()?.sample(n, &config)?;
    let comment = format!(
        "bce {VERSION} sample seed={seed} burn_in={burn_in} params={}",
        params.display()
    );
    write_csv(open_out(out)?, &comment, &coordinate_names(pt.dim()), &rows)?;
    Ok(0)
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn cmd_pdf_grid(
    params: &Path,
    xr: (f64, f64),
    yr: (f64, f64),
    grid: usize,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let pt = read_params(params)?;
    if pt.dim() != 2 {
        return Err(input_error(format!(
            "pdf-grid needs bivariate parameters, got dimension {}",
            pt.dim()
        )));
    }
    if grid < 2 {
        return Err(input_error("the grid needs at least 2 points per axis"));
    }
    let dist = pt.distribution()?;
    let mut rows = Vec::with_capacity(grid * grid);
    for &y1 in &linspace(xr, grid) {
        for &y2 in &linspace(yr, grid) {
            rows.push(vec![y1, y2, dist.pdf(&[y1, y2])?]);
        }
    }
    let comment = format!("bce {VERSION} pdf-grid params={}", params.display());
    let header = ["y1", "y2", "pdf"].map(String::from);
    write_csv(open_out(out)?, &comment, &header, &rows)?;
    Ok(0)
}

fn cmd_quantile(
    params: &Path,
    k: usize,
    alphas: &[f64],
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let pt = read_params(params)?;
    if k == 0 || k > pt.dim() {
        return Err(input_error(format!(
            "coordinate {k} out of range 1..={}",
            pt.dim()
        )));
    }
    let dist = pt.distribution()?;
    let rows = alphas
        .iter()
        .map(|&a| Ok(vec![a, dist.quantile(k - 1, a)?]))
        .collect::<Result<Vec<_>, Error>>()?;
    let comment = format!("bce {VERSION} quantile k={k} params={}", params.display());
    let header = ["alpha", "quantile"].map(String::from);
    write_csv(open_out(out)?, &comment, &header, &rows)?;
    Ok(0)
}

fn cmd_simstudy(
    scenario: Scenario,
    n: usize,
    replicates: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let summary = run_study(&StudyConfig::new(scenario, n, replicates, seed))?;
    write_json(
        out,
        &json!({
            "version": VERSION,
            "seed": seed,
            "truth": scenario.truth(),
            "summary": summary,
        }),
    )?;
    Ok(0)
}

/// Bivariate fits to nutrient-intake pairs: model, μ, λ, σ11, σ12, σ22, τ.
type DemoPair = (&'static str, [f64; 2], [f64; 2], [f64; 3], f64);

const DEMO_PAIRS: [DemoPair; 6] = [
    ("B2-B3", [1.45, 19.91], [0.0, 0.0], [0.16, 0.10, 0.23], 6.22),
    ("B2-B12", [1.46, 3.10], [0.0, 0.0], [0.15, 0.16, 0.43], 4.57),
    ("B2-D", [1.45, 3.42], [0.19, 0.31], [0.16, 0.22, 0.48], 7.96),
    (
        "B3-B12",
        [20.10, 3.13],
        [0.0, 0.0],
        [0.20, 0.13, 0.42],
        3.96,
    ),
    (
        "B3-D",
        [19.86, 3.30],
        [0.15, 0.24],
        [0.24, 0.12, 0.51],
        7.42,
    ),
    (
        "B12-D",
        [3.10, 3.42],
        [-0.19, 0.15],
        [0.45, 0.31, 0.47],
        5.50,
    ),
];

fn cmd_gen_demo_data(pair: &str, n: usize, seed: u64, out: Option<&Path>) -> Result<u8, Failure> {
    let &(name, mu, lambda, s, tau) = DEMO_PAIRS
        .iter()
        .find(|d| d.0.eq_ignore_ascii_case(pair))
        .ok_or_else(|| {
            let names: Vec<&str> = DEMO_PAIRS.iter().map(|d| d.0).collect();
            input_error(format!(
                "unknown pair '{pair}' (one of {})",
                names.join(", ")
            ))
        })?;
    let pt = ParamPoint {
        family: DgfKind::StudentT,
        eta: vec![tau],
        mu: mu.to_vec(),
        lambda: lambda.to_vec(),
        sigma: vec![vec![s[0], s[1]], vec![s[1], s[2]]],
    };
    let rows = pt
        .distribution()?
        .sample(n, &GibbsConfig::with_seed(seed))?;
    let header: Vec<String> = name.split('-').map(String::from).collect();
    let comment = format!(
        "bce {VERSION} gen-demo-data pair={name} seed={seed} params={}",
        serde_json::to_string(&pt).map_err(|e| input_error(e.to_string()))?
    );
    write_csv(open_out(out)?, &comment, &header, &rows)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Fit {
            csv,
            family,
            lambda_mode,
            columns,
            independent,
            seed,
            tol,
            out,
        } => cmd_fit(
            &csv,
            columns.as_deref(),
            &fit_spec(family, lambda_mode, independent, seed, tol),
            out.as_deref(),
        ),
        Command::Sample {
            params,
            n,
            seed,
            burn_in,
            out,
        } => cmd_sample(&params, n, seed, burn_in, out.as_deref()),
        Command::PdfGrid {
            params,
            x_range,
            y_range,
            grid,
            out,
        } => cmd_pdf_grid(&params, x_range, y_range, grid, out.as_deref()),
        Command::Quantile {
            params,
            k,
            alphas,
            out,
        } => cmd_quantile(&params, k, &alphas, out.as_deref()),
        Command::Simstudy {
            scenario,
            n,
            replicates,
            full,
            seed,
            out,
        } => cmd_simstudy(
            scenario,
            n,
            if full { 5000 } else { replicates },
            seed,
            out.as_deref(),
        ),
        Command::GenDemoData { pair, n, seed, out } => {
            cmd_gen_demo_data(&pair, n, seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
