use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spectral_clt::blockmodel::{sizes_from_alpha, Model, SbmSpec};
use spectral_clt::contour::{LssAsymptotics, DEFAULT_NODES};
use spectral_clt::oracle::{exact_trace_moment, exact_var_tr_h2};
use spectral_clt::qve::{lsd_density, spectral_edge};
use spectral_clt::report::{
    comparison_csv, compare, grid_csv, kernel_dump_csv, parse_samples_csv, parse_theory_csv, qq_csv,
    run_grid, run_qq, run_qq_two_sample, samples_csv, theory_csv, theory_json, theory_row, GridConfig,
    CSV_HEADER,
};
use spectral_clt::simulate::{monte_carlo, Renormalization};
use spectral_clt::testfn::TestFunction;

const THREADS_VAR: &str = "SPECTRAL_CLT_THREADS";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] spectral_clt::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) | CliError::Usage(_) => 2,
            CliError::Io { .. } => 4,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "spectral-clt", version, about = "Limiting mean and covariance of linear spectral statistics, with SBM Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Which {
    True,
    Empirical,
}

impl From<Which> for Renormalization {
    fn from(w: Which) -> Self {
        match w {
            Which::True => Renormalization::TrueP,
            Which::Empirical => Renormalization::EmpiricalP,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CLT mean M(f), variance V(f,f) and centering ∫f dμ for each test function.
    Theory {
        #[arg(long)]
        model: PathBuf,
        /// `poly:c0,c1,...` or `exp`; repeatable.
        #[arg(long = "f", required = true)]
        f: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        #[arg(long, value_enum, default_value = "csv")]
        out: Format,
        /// Write the table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the mean and covariance kernels on the contour.
        #[arg(long, value_name = "FILE")]
        dump_kernels: Option<PathBuf>,
    },
    /// Limiting spectral distribution: density on a grid, or ∫f dμ with --f.
    Lsd {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "f")]
        f: Vec<String>,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, default_value_t = 1e-9)]
        eta: f64,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo replicates of Σ f(λ_i) for an SBM model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "f")]
        f: String,
        #[arg(long)]
        nr: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "true")]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Join a theory table and a samples file: mean/variance differences, KS,
    /// and qq points against the limiting normal law.
    Compare {
        #[arg(long)]
        theory: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        qq: Option<PathBuf>,
    },
    /// Theory vs Monte Carlo over planted-partition models with P = (p-q)I + q11ᵀ.
    Grid {
        /// Community sizes, e.g. `100,100,200`.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["alpha", "n"])]
        sizes: Vec<usize>,
        /// Community proportions, used with --n.
        #[arg(long, value_delimiter = ',', requires = "n")]
        alpha: Vec<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        #[arg(long = "f")]
        f: String,
        #[arg(long)]
        nr: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "true")]
        which: Which,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// qq points of one samples file against N(0,1), or of two files against
    /// each other.
    Qq {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact E Tr H^k and Var Tr H² at finite n.
    Oracle {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
    },
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => io::stdout().write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn load_model(path: &Path) -> CliResult<Model> {
    Ok(Model::from_json(&read(path)?)?)
}

fn load_sbm(path: &Path) -> CliResult<SbmSpec> {
    load_model(path)?
        .sbm()
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("{}: simulation needs an SBM model (k, sizes, ptilde)", path.display())))
}

/// Only real polynomials and `exp` are accepted on the command line.
fn parse_function(spec: &str) -> CliResult<TestFunction> {
    let f: TestFunction = spec.parse()?;
    match f {
        TestFunction::User(_) => Err(CliError::Usage(format!(
            "`{spec}`: the command line accepts `poly:c0,c1,...` and `exp`"
        ))),
        f => Ok(f),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Theory {
            model,
            f,
            nodes,
            out,
            output,
            dump_kernels,
        } => {
            let params = load_model(&model)?.params();
            let fs = f.iter().map(|s| parse_function(s)).collect::<CliResult<Vec<_>>>()?;
            let mut asym = LssAsymptotics::new(&params, nodes, 0.0)?;
            let rows = fs
                .iter()
                .map(|f| theory_row(&mut asym, f))
                .collect::<spectral_clt::Result<Vec<_>>>()?;
            if let Some(path) = dump_kernels {
                emit(Some(&path), &kernel_dump_csv(&asym)?)?;
            }
            let text = match out {
                Format::Csv => theory_csv(&rows),
                Format::Json => theory_json(&rows),
            };
            emit(output.as_deref(), &text)
        }
        Command::Lsd {
            model,
            f,
            points,
            eta,
            nodes,
            out,
        } => {
            let params = load_model(&model)?.params();
            if !f.is_empty() {
                let fs = f.iter().map(|s| parse_function(s)).collect::<CliResult<Vec<_>>>()?;
                let mut asym = LssAsymptotics::new(&params, nodes, 0.0)?;
                let mut text = format!("{CSV_HEADER}\nf,integral,nodes_used,radius\n");
                for f in &fs {
                    let i = asym.lsd_integral(f)?;
                    text += &format!("\"{f}\",{},{},{}\n", i.value, i.nodes_used, i.radius);
                }
                return emit(out.as_deref(), &text);
            }
            if points < 2 {
                return Err(CliError::Usage("--points must be at least 2".into()));
            }
            let edge = spectral_edge(&params, 0.0).edge;
            let mut text = format!("{CSV_HEADER}\n# edge={edge}\nx,density\n");
            for i in 0..points {
                let x = -edge + 2.0 * edge * i as f64 / (points - 1) as f64;
                text += &format!("{x},{}\n", lsd_density(&params, x, eta)?);
            }
            emit(out.as_deref(), &text)
        }
        Command::Simulate {
            model,
            f,
            nr,
            seed,
            which,
            out,
        } => {
            let spec = load_sbm(&model)?;
            let f = parse_function(&f)?;
            let set = monte_carlo(&spec, &f, nr, which.into(), seed)?;
            emit(out.as_deref(), &samples_csv(&set))
        }
        Command::Compare {
            theory,
            samples,
            out,
            qq,
        } => {
            let rows = parse_theory_csv(&read(&theory)?)?;
            let set = parse_samples_csv(&read(&samples)?)?;
            let f = set.f.to_string();
            let row = rows
                .iter()
                .find(|r| r.f == f)
                .ok_or_else(|| CliError::Usage(format!("{} has no row for {f}", theory.display())))?;
            let cmp = compare(row, &set)?;
            if let Some(path) = qq {
                emit(Some(&path), &qq_csv(&cmp.qq))?;
            }
            emit(out.as_deref(), &comparison_csv(&cmp))
        }
        Command::Grid {
            sizes,
            alpha,
            n,
            p,
            q,
            f,
            nr,
            seed,
            which,
            nodes,
            out,
        } => {
            let sizes = match (sizes.is_empty(), n) {
                (false, _) => sizes,
                (true, Some(n)) if !alpha.is_empty() => sizes_from_alpha(&alpha, n)?,
                _ => return Err(CliError::Usage("give --sizes, or --alpha with --n".into())),
            };
            let cfg = GridConfig {
                sizes,
                ps: p,
                qs: q,
                nr,
                seed,
                which: which.into(),
                nodes,
            };
            let report = run_grid(&cfg, &parse_function(&f)?)?;
            emit(out.as_deref(), &grid_csv(&report))
        }
        Command::Qq { samples, against, out } => {
            let a = parse_samples_csv(&read(&samples)?)?;
            let points = match against {
                Some(path) => run_qq_two_sample(&a.values, &parse_samples_csv(&read(&path)?)?.values)?,
                None => run_qq(&a.values)?,
            };
            emit(out.as_deref(), &qq_csv(&points))
        }
        Command::Oracle { model, n, k } => {
            let params = load_model(&model)?.params();
            let moment = exact_trace_moment(&params, n, k)?;
            let var = exact_var_tr_h2(&params, n)?;
            emit(
                None,
                &format!("{CSV_HEADER}\nn,k,trace_moment,var_tr_h2\n{n},{k},{moment},{var}\n"),
            )
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
