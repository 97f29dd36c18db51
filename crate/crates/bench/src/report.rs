//! CSV and JSON outputs. Floats are written in shortest round-trip form, so
//! every file re-parses losslessly and identical runs are byte-identical.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbeam_core::design::format::write_matrix;

use crate::error::{BenchError, BenchResult};
use crate::experiment::{Beampatterns, CurvePoint, Experiment, MethodSummary};

pub const RMSE_HEADER: &str = "method,snr_db,rmse_deg,trials,failures";
pub const RESOLUTION_HEADER: &str = "method,snr_db,probability,trials,failures";
pub const BEAMPATTERN_HEADER: &str = "method,theta_deg,pattern,pattern_db";
pub const WAVEFORM_HEADER: &str = "method,waveform,theta_deg,pattern,pattern_db";

/// `10 log10(4 pi G)`: the pattern relative to a unit-power isotropic source.
pub fn pattern_db(g: f64) -> f64 {
    10.0 * (4.0 * std::f64::consts::PI * g).log10()
}

pub fn write_curves<W: Write>(out: &mut W, header: &str, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(out, "{header}")?;
    for p in points {
        writeln!(out, "{},{},{},{},{}", p.method, p.snr_db, p.value, p.trials, p.failures)?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> BenchError {
    BenchError::core("curve file", tbeam_core::Error::Parse(format!("line {line}: {msg}")))
}

/// Parse a curve file written by [`write_curves`]; returns the header too.
pub fn read_curves<R: BufRead>(input: R) -> BenchResult<(String, Vec<CurvePoint>)> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| BenchError::core("curve file", e.into()))?,
        None => return Err(parse_err(1, "missing header")),
    };
    let mut points = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| BenchError::core("curve file", e.into()))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(i + 1, format!("expected 5 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, e));
        let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(i + 1, e));
        points.push(CurvePoint {
            method: f[0].to_string(),
            snr_db: num(f[1])?,
            value: num(f[2])?,
            trials: int(f[3])?,
            failures: int(f[4])?,
        });
    }
    Ok((header, points))
}

pub fn write_beampatterns<W: Write>(out: &mut W, bp: &Beampatterns) -> std::io::Result<()> {
    writeln!(out, "{BEAMPATTERN_HEADER}")?;
    for (name, g) in &bp.overall {
        for (t, v) in bp.angles.iter().zip(g) {
            writeln!(out, "{name},{t},{v},{}", pattern_db(*v))?;
        }
    }
    Ok(())
}

pub fn write_waveform_beampatterns<W: Write>(out: &mut W, bp: &Beampatterns) -> std::io::Result<()> {
    writeln!(out, "{WAVEFORM_HEADER}")?;
    for (name, gk) in &bp.per_waveform {
        for (k, g) in gk.iter().enumerate() {
            for (t, v) in bp.angles.iter().zip(g) {
                writeln!(out, "{name},{},{t},{v},{}", k + 1, pattern_db(*v))?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub waveforms: usize,
    pub methods: Vec<MethodSummary>,
    pub rmse: Vec<CurvePoint>,
    pub resolution: Vec<CurvePoint>,
}

impl Summary {
    pub fn of(exp: &Experiment) -> Self {
        Self {
            name: exp.config.name.clone(),
            config_hash: exp.config_hash.clone(),
            seed: exp.config.seed,
            trials: exp.config.trials,
            waveforms: exp.setup.waveforms,
            methods: exp.setup.methods.iter().map(|m| m.summary.clone()).collect(),
            rmse: exp.rmse.clone(),
            resolution: exp.resolution.clone(),
        }
    }
}

fn create(path: &Path) -> BenchResult<std::io::BufWriter<fs::File>> {
    fs::File::create(path).map(std::io::BufWriter::new).map_err(|e| BenchError::io(path, e))
}

fn emit<F>(path: PathBuf, f: F) -> BenchResult<PathBuf>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
{
    let mut out = create(&path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

/// Write every artifact of `exp` into `dir` (created if missing); returns
/// the written paths in a fixed order.
pub fn write_report(exp: &Experiment, dir: &Path) -> BenchResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    written.push(emit(dir.join("config.toml"), |o| o.write_all(exp.config.to_toml().as_bytes()))?);
    written.push(emit(dir.join("rmse.csv"), |o| write_curves(o, RMSE_HEADER, &exp.rmse))?);
    written.push(emit(dir.join("resolution.csv"), |o| write_curves(o, RESOLUTION_HEADER, &exp.resolution))?);
    written.push(emit(dir.join("beampattern.csv"), |o| write_beampatterns(o, &exp.beampatterns))?);
    written.push(emit(dir.join("waveform_beampattern.csv"), |o| {
        write_waveform_beampatterns(o, &exp.beampatterns)
    })?);
    for m in &exp.setup.methods {
        let path = dir.join(format!("design_{}.txt", m.name()));
        let mut out = create(&path)?;
        write_matrix(&mut out, &m.matrix, exp.config.total_power)
            .map_err(|e| BenchError::core(format!("writing {}", path.display()), e))?;
        out.flush().map_err(|e| BenchError::io(&path, e))?;
        written.push(path);
    }
    let summary = serde_json::to_string_pretty(&Summary::of(exp)).expect("summary serializes");
    written.push(emit(dir.join("summary.json"), |o| writeln!(o, "{summary}"))?);
    Ok(written)
}

pub fn read_curve_file(path: &Path) -> BenchResult<(String, Vec<CurvePoint>)> {
    let f = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_curves(BufReader::new(f))
}
