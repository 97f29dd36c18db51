use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tbeam_bench::config::ExperimentConfig;
use tbeam_bench::experiment::{prepare, run_experiment, Parts};
use tbeam_bench::report::{pattern_db, write_report, BEAMPATTERN_HEADER, WAVEFORM_HEADER};
use tbeam_bench::{BenchError, BenchResult};
use tbeam_core::array::{
    beampattern_at, select_waveform_count, waveform_beampatterns, DesiredLevel, ReceiveArray, SectorSpec,
    TransmitArray,
};
use tbeam_core::design::format::{read_matrix, write_matrix};
use tbeam_core::sim::{simulate, TargetScene};
use tbeam_core::RngStream;

/// Transmit beamspace design and DOA estimation experiments.
#[derive(Parser)]
#[command(name = "tbeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the configuration (defaults or a preset) as TOML.
    ShowConfig {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Design a transmit beamspace matrix and write it to a file.
    Design {
        #[command(flatten)]
        source: Source,
        /// Override the sectors, e.g. `--sector=-10:10`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_sector)]
        sector: Vec<[f64; 2]>,
        #[arg(long)]
        waveforms: Option<usize>,
        #[arg(long, value_enum, default_value_t = DesignMethod::Joint)]
        method: DesignMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beampattern of a matrix file as CSV.
    Beampattern {
        #[arg(long)]
        matrix: PathBuf,
        /// Transmit spacing in wavelengths.
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// One row per waveform instead of the overall pattern.
        #[arg(long)]
        per_waveform: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Number of waveforms for a sector set.
    SelectK {
        #[arg(long, required = true, allow_hyphen_values = true, value_parser = parse_sector)]
        sector: Vec<[f64; 2]>,
        #[arg(long, default_value_t = 10)]
        elements: usize,
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
        #[arg(long, default_value_t = 0.9)]
        energy_fraction: f64,
    },
    /// Simulate snapshots for a matrix file and dump them as CSV.
    Simulate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, required = true, allow_hyphen_values = true, value_delimiter = ',')]
        targets: Vec<f64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 100)]
        pulses: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
        #[arg(long, default_value_t = 10)]
        receivers: usize,
        /// Receive aperture in half wavelengths.
        #[arg(long, default_value_t = 9.0)]
        aperture: f64,
        #[arg(long, default_value_t = 42)]
        geometry_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// RMSE-versus-SNR curves.
    Rmse(RunArgs),
    /// Resolution-probability curves.
    Resolution(RunArgs),
    /// RMSE and resolution curves, beampatterns and designs.
    Run(RunArgs),
}

#[derive(Args)]
struct Source {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: example1 .. example4.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignMethod {
    Joint,
    Sdd,
    Rotated,
}

fn parse_sector(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok([lo, hi])
}

impl Source {
    fn load(&self) -> BenchResult<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(p), _) => ExperimentConfig::load(p),
            (None, Some(name)) => ExperimentConfig::preset(name),
            (None, None) => Ok(ExperimentConfig::default()),
        }
    }
}

fn output(path: Option<&Path>) -> BenchResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| BenchError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> BenchError + '_ {
    move |e| BenchError::io(path.unwrap_or(Path::new("<stdout>")), e)
}

fn load_matrix(path: &Path) -> BenchResult<(tbeam_core::CMatrix, f64)> {
    let f = File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_matrix(BufReader::new(f)).map_err(|e| BenchError::core(format!("reading {}", path.display()), e))
}

fn run_parts(args: &RunArgs, parts: Parts) -> BenchResult<()> {
    let mut cfg = args.source.load()?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let exec = || run_experiment(&cfg, parts);
    let exp = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?
            .install(exec)?,
        None => exec()?,
    };
    for path in write_report(&exp, &args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> BenchResult<()> {
    match cli.command {
        Command::ShowConfig { preset } => {
            let cfg = match preset {
                Some(p) => ExperimentConfig::preset(&p)?,
                None => ExperimentConfig::default(),
            };
            print!("{}", cfg.to_toml());
        }
        Command::Design { source, sector, waveforms, method, out } => {
            let mut cfg = source.load()?;
            if !sector.is_empty() {
                cfg.sector.bounds = sector;
            }
            if let Some(k) = waveforms {
                cfg.design.waveforms = tbeam_bench::config::NumberOr::Value(k);
            }
            let name = match method {
                DesignMethod::Joint => "joint",
                DesignMethod::Sdd => {
                    cfg.design.sdd = true;
                    "sdd"
                }
                DesignMethod::Rotated => {
                    cfg.design.rotation = true;
                    "rotated"
                }
            };
            cfg.design.unbalancing_rotation.clear();
            let setup = prepare(&cfg)?;
            let m = setup
                .methods
                .iter()
                .find(|m| m.name() == name)
                .ok_or_else(|| BenchError::Config(format!("method '{name}' needs K >= 4 (K = {})", setup.waveforms)))?;
            let mut f = output(Some(&out))?;
            write_matrix(&mut f, &m.matrix, cfg.total_power).map_err(|e| BenchError::core("writing matrix", e))?;
            f.flush().map_err(|e| BenchError::io(&out, e))?;
            println!("{}", serde_json::to_string(&m.summary).expect("serializes"));
        }
        Command::Beampattern { matrix, spacing, step, per_waveform, out } => {
            let (w, _) = load_matrix(&matrix)?;
            let tx = TransmitArray::new(w.nrows(), spacing).map_err(|e| BenchError::core("array", e))?;
            if !(step > 0.0) {
                return Err(BenchError::Config("step must be positive".into()));
            }
            let angles = tbeam_bench::experiment::beampattern_angles(step);
            let mut f = output(out.as_deref())?;
            let err = io_err(out.as_deref());
            if per_waveform {
                let gk = waveform_beampatterns(&w, &tx, &angles).map_err(|e| BenchError::core("beampattern", e))?;
                writeln!(f, "{WAVEFORM_HEADER}").map_err(&err)?;
                for (k, g) in gk.iter().enumerate() {
                    for (t, v) in angles.iter().zip(g) {
                        writeln!(f, "file,{},{t},{v},{}", k + 1, pattern_db(*v)).map_err(&err)?;
                    }
                }
            } else {
                let g = beampattern_at(&w, &tx, &angles).map_err(|e| BenchError::core("beampattern", e))?;
                writeln!(f, "{BEAMPATTERN_HEADER}").map_err(&err)?;
                for (t, v) in angles.iter().zip(&g) {
                    writeln!(f, "file,{t},{v},{}", pattern_db(*v)).map_err(&err)?;
                }
            }
            f.flush().map_err(&err)?;
        }
        Command::SelectK { sector, elements, spacing, energy_fraction } => {
            let b: Vec<(f64, f64)> = sector.iter().map(|s| (s[0], s[1])).collect();
            let spec = SectorSpec::from_bounds(&b, DesiredLevel::PowerConsistent)
                .map_err(|e| BenchError::core("sector", e))?;
            let tx = TransmitArray::new(elements, spacing).map_err(|e| BenchError::core("array", e))?;
            let k = select_waveform_count(&spec, &tx, energy_fraction)
                .map_err(|e| BenchError::core("waveform selection", e))?;
            println!("{k}");
        }
        Command::Simulate {
            matrix,
            targets,
            snr,
            pulses,
            seed,
            spacing,
            receivers,
            aperture,
            geometry_seed,
            out,
        } => {
            let (w, _) = load_matrix(&matrix)?;
            let tx = TransmitArray::new(w.nrows(), spacing).map_err(|e| BenchError::core("array", e))?;
            let rx = ReceiveArray::random(receivers, aperture, &mut RngStream::new(geometry_seed, 0))
                .map_err(|e| BenchError::core("receive array", e))?;
            let scene = TargetScene::with_snr(targets, snr, pulses).map_err(|e| BenchError::core("scene", e))?;
            let snap = simulate(&scene, &w, &tx, &rx, &mut RngStream::new(seed, 0))
                .map_err(|e| BenchError::core("simulation", e))?;
            let mut f = output(out.as_deref())?;
            snap.write_csv(&mut f).map_err(|e| BenchError::core("writing snapshots", e))?;
            f.flush().map_err(io_err(out.as_deref()))?;
        }
        Command::Rmse(a) => run_parts(&a, Parts { rmse: true, resolution: false })?,
        Command::Resolution(a) => run_parts(&a, Parts { rmse: false, resolution: true })?,
        Command::Run(a) => run_parts(&a, Parts::ALL)?,
    }
    Ok(())
}

fn report_error(category: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": category, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(e.category(), &e.to_string(), e.exit_code() as u8),
    }
}
