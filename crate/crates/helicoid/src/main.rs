use clap::{Parser, Subcommand, ValueEnum};
use helicoid::error::Error;
use helicoid::grid::GridSpec;
use helicoid::harness::{self, ExperimentConfig, Suite, TrialReport};
use helicoid::stopping::{verify_sparse, SparseFamily};
use helicoid::tiles::{gen_multi_family, gen_rank1_family, MultiTileConstants};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const OUT_DIR_ENV: &str = "HELICOID_OUT";
const THREADS_ENV: &str = "HELICOID_THREADS";
const DEFAULT_OUT_DIR: &str = "helicoid-out";
const REPORT_JSON: &str = "last_report.json";
const REPORT_CSV: &str = "last_report.csv";

#[derive(Parser)]
#[command(name = "helicoid", version, about = "Seeded time-frequency experiments on a dyadic grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a tile family as JSON.
    GenTiles {
        #[arg(long, default_value_t = 6)]
        j: u32,
        /// Multi-tiles of the variational Carleson model instead of rank-one tri-tiles.
        #[arg(long)]
        multi: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one suite and store the report in the output directory.
    Run {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run one suite at several grids and compare the recorded constants.
    Stability {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 6, 7])]
        js: Vec<u32>,
    },
    /// Print the sparse family of one SPARSE trial as JSON.
    Sparse {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Print the VVST generations of one VVST_PACKING trial as JSON.
    Vvst {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Check a sparse family JSON file.
    Verify {
        #[arg(long)]
        input: PathBuf,
    },
    /// Re-emit the last stored report.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Assertion failures exit with 1, configuration problems with 2.
enum Failure {
    Assertion(String),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::LengthMismatch { .. } => Failure::Config(e.to_string()),
            other => Failure::Assertion(other.to_string()),
        }
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_failure(format!("cannot read {}: {e}", p.display())))?;
            Ok(ExperimentConfig::from_json(&text)?)
        }
    }
}

fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| config_failure(format!("cannot write {}: {e}", path.display())))
}

fn summary(r: &TrialReport) -> String {
    let mut s = format!("suite {} (J = {}, trials = {}, seed = {})\n", r.suite, r.config.j, r.config.trials, r.config.seed);
    for x in &r.series {
        s += &format!("  series {:<24} n = {:<4} max = {:.6e} median = {:.6e}", x.name, x.count, x.max, x.median);
        if let Some(b) = x.bound {
            s += &format!(" bound = {b}");
        }
        s += "\n";
    }
    for c in &r.checks {
        s += &format!("  {} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    s
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::GenTiles { j, multi, out } => {
            let g = GridSpec::new(j)?;
            let text = if multi {
                let fam = gen_multi_family(&g, 0..=j.checked_sub(3).ok_or_else(|| config_failure("multi-tiles need J ≥ 3"))?, MultiTileConstants::default())?;
                serde_json::to_string(&fam.tiles).expect("multi-tiles serialize")
            } else {
                gen_rank1_family(&g, 0..=j.checked_sub(2).ok_or_else(|| config_failure("tri-tiles need J ≥ 2"))?)?.to_json()
            };
            match out {
                Some(p) => write_file(&p, &text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Run { suite, config, out_dir: dir } => {
            let suite: Suite = suite.parse()?;
            let cfg = load_config(config.as_deref())?;
            let report = harness::run(&cfg, suite)?;
            let dir = out_dir(dir);
            std::fs::create_dir_all(&dir).map_err(|e| config_failure(format!("cannot create {}: {e}", dir.display())))?;
            write_file(&dir.join(REPORT_JSON), &report.to_json())?;
            write_file(&dir.join(REPORT_CSV), &report.to_csv())?;
            print!("{}", summary(&report));
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Assertion(format!("{} check(s) failed", report.failed_checks().len())))
            }
        }
        Command::Stability { suite, config, js } => {
            let suite: Suite = suite.parse()?;
            let cfg = load_config(config.as_deref())?;
            let s = harness::run_stability(&cfg, suite, &js)?;
            println!("{}", s.to_json());
            if s.passed {
                Ok(())
            } else {
                Err(Failure::Assertion("recorded constants are not stable across grids".into()))
            }
        }
        Command::Sparse { config, trial } => {
            let cfg = load_config(config.as_deref())?;
            println!("{}", harness::sparse_instance(&cfg, trial)?.to_json());
            Ok(())
        }
        Command::Vvst { config, trial } => {
            let cfg = load_config(config.as_deref())?;
            println!("{}", harness::vvst_instance(&cfg, trial)?.to_json());
            Ok(())
        }
        Command::Verify { input } => {
            let text = std::fs::read_to_string(&input).map_err(|e| config_failure(format!("cannot read {}: {e}", input.display())))?;
            let family: SparseFamily = serde_json::from_str(&text).map_err(|e| config_failure(format!("sparse family JSON: {e}")))?;
            let cert = verify_sparse(&family)?;
            println!("{}", serde_json::to_string(&cert).expect("certificate serializes"));
            Ok(())
        }
        Command::Report { format, out_dir: dir } => {
            let path = out_dir(dir).join(REPORT_JSON);
            let text = std::fs::read_to_string(&path).map_err(|_| config_failure(format!("no stored report at {}; run a suite first", path.display())))?;
            let report = TrialReport::from_json(&text)?;
            match format {
                Format::Json => println!("{}", report.to_json()),
                Format::Csv => print!("{}", report.to_csv()),
            }
            Ok(())
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    if let Some(v) = std::env::var_os(THREADS_ENV) {
        let n: usize = v.to_string_lossy().parse().map_err(|_| config_failure(format!("{THREADS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(config_failure(format!("{THREADS_ENV} must be a positive integer")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| config_failure(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(m)) => {
            eprintln!("assertion failure: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
