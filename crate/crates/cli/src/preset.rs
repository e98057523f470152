//! Named experiment grids.
//!
//! A preset fixes a few parameters and sweeps the Cartesian product of its
//! axes. An axis entry may set several keys at once (pilot families that
//! need a particular pilot length, for instance). Presets that do not set
//! `N` use the default of 16 antennas.

use std::path::{Path, PathBuf};
use std::time::Instant;

use irsa_lab::harness::{log_thresholds, roc_from_scores, run_monte_carlo, score_runs, Detector, RocPoint, RunRecord};
use irsa_lab::SystemConfig;
use rayon::prelude::*;
use toml::Value;

use crate::config::parse_config;
use crate::output::{write_records, write_roc, write_summary, write_timings, Coords};
use crate::{CliError, Result};

/// One axis entry: the keys it sets and the label written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisValue {
    pub settings: Vec<(&'static str, Value)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    /// CSV column names, one per key the entries set.
    pub keys: Vec<&'static str>,
    pub values: Vec<AxisValue>,
}

impl Axis {
    fn single(key: &'static str, values: Vec<Value>) -> Self {
        Axis {
            keys: vec![key],
            values: values
                .into_iter()
                .map(|v| AxisValue {
                    settings: vec![(key, v)],
                })
                .collect(),
        }
    }

    fn ints(key: &'static str, values: impl IntoIterator<Item = i64>) -> Self {
        Axis::single(key, values.into_iter().map(Value::Integer).collect())
    }

    fn reals(key: &'static str, values: impl IntoIterator<Item = f64>) -> Self {
        Axis::single(key, values.into_iter().map(Value::Float).collect())
    }

    fn strings(key: &'static str, values: &[&str]) -> Self {
        Axis::single(key, values.iter().map(|s| Value::String(s.to_string())).collect())
    }
}

/// Detection-threshold sweep attached to a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct RocSweep {
    pub detectors: Vec<Detector>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub fixed: Vec<(&'static str, Value)>,
    pub axes: Vec<Axis>,
    pub roc: Option<RocSweep>,
}

/// A fully expanded grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub coords: Coords,
    pub config: SystemConfig,
}

fn int(v: i64) -> Value {
    Value::Integer(v)
}

fn real(v: f64) -> Value {
    Value::Float(v)
}

fn string(s: &str) -> Value {
    Value::String(s.to_string())
}

fn steps(lo: i64, hi: i64, step: usize) -> Vec<i64> {
    (lo..=hi).step_by(step).collect()
}

fn loads(values: &[f64]) -> Axis {
    Axis::reals("L", values.iter().copied())
}

fn roc_thresholds() -> Vec<f64> {
    let mut t = vec![0.0];
    t.extend(log_thresholds(1e-8, 1e2, 101));
    t.push(f64::INFINITY);
    t
}

fn all_pilots() -> Axis {
    // Zadoff-Chu needs a prime length and Hadamard a power of two.
    let entry = |kind: &str, tau: i64| AxisValue {
        settings: vec![("pilot_type", string(kind)), ("tau", int(tau))],
    };
    Axis {
        keys: vec!["pilot_type", "tau"],
        values: vec![
            entry("gaussian", 7),
            entry("bpsk", 7),
            entry("qpsk", 7),
            entry("zadoff_chu", 7),
            entry("hadamard_opr", 8),
            entry("dft_opr", 7),
        ],
    }
}

/// Every preset.
pub fn presets() -> Vec<Preset> {
    let detectors = vec![Detector::Proposed, Detector::Voting { kappa: 1 }, Detector::OneShot];
    let half_loads = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    vec![
        Preset {
            name: "roc",
            description: "ROC of the proposed detector against per-block voting and one-shot recovery",
            fixed: vec![("N", int(4)), ("L", real(3.0))],
            axes: vec![Axis::ints("tau", [10, 15])],
            roc: Some(RocSweep {
                detectors: detectors.clone(),
                thresholds: roc_thresholds(),
            }),
        },
        Preset {
            name: "err_vs_tau",
            description: "detection error rates versus pilot length",
            fixed: vec![("N", int(16))],
            axes: vec![Axis::ints("tau", steps(5, 40, 5)), loads(&[1.0, 2.0, 3.0])],
            roc: None,
        },
        Preset {
            name: "fnr_vs_N",
            description: "missed detection rate versus antenna count",
            fixed: vec![],
            axes: vec![
                Axis::ints("N", [4, 8, 16, 32, 64, 128]),
                Axis::ints("tau", [10, 15]),
                loads(&[1.0, 2.0, 3.0]),
            ],
            roc: None,
        },
        Preset {
            name: "err_vs_snr",
            description: "detection error rates versus cell-edge SNR",
            fixed: vec![("tau", int(10))],
            axes: vec![Axis::ints("cell_edge_snr_db", steps(-10, 20, 5)), loads(&[1.0, 2.0, 3.0])],
            roc: None,
        },
        Preset {
            name: "nmse_vs_tau",
            description: "channel estimation NMSE and its bound versus pilot length",
            fixed: vec![("L", real(1.0))],
            axes: vec![Axis::ints("tau", steps(5, 40, 5)), Axis::ints("cell_edge_snr_db", [0, 10])],
            roc: None,
        },
        Preset {
            name: "nmse_vs_snr",
            description: "channel estimation NMSE and its bound versus cell-edge SNR",
            fixed: vec![],
            axes: vec![
                Axis::ints("cell_edge_snr_db", steps(-10, 20, 5)),
                Axis::ints("tau", [10, 20]),
                loads(&[1.0, 3.0]),
            ],
            roc: None,
        },
        Preset {
            name: "thpt_vs_L",
            description: "throughput versus load with estimated and perfect detection",
            fixed: vec![("gamma_th", real(16.0)), ("lambda", real(1.0))],
            axes: vec![
                Axis::ints("tau", [5, 10, 20, 30]),
                loads(&half_loads),
                Axis::strings("uad_mode", &["estimated", "perfect"]),
            ],
            roc: None,
        },
        Preset {
            name: "thpt_vs_tau",
            description: "throughput versus pilot length",
            fixed: vec![("gamma_th", real(10.0)), ("lambda", real(1e-2))],
            axes: vec![
                Axis::ints("tau", steps(5, 40, 5)),
                Axis::ints("cell_edge_snr_db", [-5, 10]),
                loads(&[1.0, 2.0]),
            ],
            roc: None,
        },
        Preset {
            name: "thpt_vs_N",
            description: "throughput versus antenna count",
            fixed: vec![("L", real(1.0))],
            axes: vec![
                Axis::ints("N", [8, 16, 32, 64, 128]),
                Axis::ints("tau", [5, 20]),
                Axis::strings("uad_mode", &["estimated", "perfect"]),
            ],
            roc: None,
        },
        Preset {
            name: "thpt_vs_snr",
            description: "throughput versus cell-edge SNR",
            fixed: vec![("L", real(1.0))],
            axes: vec![Axis::ints("cell_edge_snr_db", steps(-10, 20, 5)), Axis::ints("tau", [10, 40])],
            roc: None,
        },
        Preset {
            name: "pilots_roc",
            description: "ROC of the proposed detector for each pilot family",
            fixed: vec![("N", int(4)), ("L", real(1.0))],
            axes: vec![all_pilots()],
            roc: Some(RocSweep {
                detectors: vec![Detector::Proposed],
                thresholds: roc_thresholds(),
            }),
        },
        Preset {
            name: "pilots_thpt",
            description: "throughput with perfect detection for each pilot family",
            fixed: vec![
                ("uad_mode", string("perfect")),
                ("gamma_th", real(6.0)),
                ("lambda", real(1.0)),
            ],
            axes: vec![all_pilots(), loads(&half_loads)],
            roc: None,
        },
        Preset {
            name: "impsic",
            description: "throughput with perfect and imperfect interference cancellation",
            fixed: vec![("pilot_type", string("bpsk")), ("uad_mode", string("perfect"))],
            axes: vec![
                Axis::strings("sic_mode", &["perfect", "imperfect"]),
                Axis::ints("tau", [5, 10, 20]),
                loads(&half_loads),
            ],
            roc: None,
        },
    ]
}

pub fn names() -> Vec<&'static str> {
    presets().iter().map(|p| p.name).collect()
}

pub fn find(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| CliError::UnknownPreset {
            name: name.to_string(),
            valid: names(),
        })
}

fn label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

impl Preset {
    /// Expand the grid. `runs` and `seed` override the defaults of every
    /// point; `extra` overrides apply last.
    pub fn expand(&self, runs: usize, seed: u64, extra: &[(String, Value)]) -> Result<Vec<GridPoint>> {
        let mut combos: Vec<Vec<&AxisValue>> = vec![vec![]];
        for axis in &self.axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |v| {
                        let mut next = c.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .map(|combo| {
                let mut overrides: Vec<(String, Value)> =
                    self.fixed.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
                let mut coords = Coords::new();
                for entry in &combo {
                    for (k, v) in &entry.settings {
                        overrides.push((k.to_string(), v.clone()));
                        coords.push((k.to_string(), label(v)));
                    }
                }
                overrides.push(("runs".into(), Value::Integer(runs as i64)));
                overrides.push(("seed".into(), Value::Integer(seed as i64)));
                overrides.extend(extra.iter().cloned());
                let config = parse_config("", &overrides, None).map_err(|e| {
                    CliError::Config(format!("preset {} point {coords:?}: {e}", self.name))
                })?;
                Ok(GridPoint { coords, config })
            })
            .collect()
    }
}

/// Execution options shared by `run` and `preset`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub progress: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn progress_line(enabled: bool, name: &str, coords: &Coords, clock: Instant) {
    if enabled {
        let label: Vec<String> = coords.iter().map(|(k, v)| format!("{k}={v}")).collect();
        eprintln!("[{name}] {} done in {:.1} s", label.join(" "), clock.elapsed().as_secs_f64());
    }
}

/// Simulate every grid point and write `<name>.csv`, `<name>_summary.csv`,
/// `<name>_timings.csv` and, for threshold sweeps, `<name>_roc.csv`.
/// Returns the written paths.
pub fn execute(name: &str, points: &[GridPoint], roc: Option<&RocSweep>, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    type PointResult = (Coords, Vec<RunRecord>, Vec<(String, Vec<RocPoint>)>);
    let results: Vec<PointResult> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let clock = Instant::now();
                let records = run_monte_carlo(&p.config)?;
                let curves = match roc {
                    Some(sweep) => score_runs(&p.config, &sweep.detectors)?
                        .iter()
                        .zip(&sweep.detectors)
                        .map(|(runs, d)| (d.name(), roc_from_scores(runs, &sweep.thresholds)))
                        .collect(),
                    None => Vec::new(),
                };
                progress_line(opts.progress, name, &p.coords, clock);
                Ok((p.coords.clone(), records, curves))
            })
            .collect::<Result<_>>()
    })?;
    let table: Vec<(Coords, Vec<RunRecord>)> = results.iter().map(|(c, r, _)| (c.clone(), r.clone())).collect();
    let mut written = Vec::new();
    let path = |suffix: &str| opts.out_dir.join(format!("{name}{suffix}.csv"));
    for (suffix, write) in [
        ("", write_records as fn(&Path, &[(Coords, Vec<RunRecord>)]) -> Result<()>),
        ("_summary", write_summary),
        ("_timings", write_timings),
    ] {
        let p = path(suffix);
        write(&p, &table)?;
        written.push(p);
    }
    if roc.is_some() {
        let curves: Vec<(Coords, String, Vec<RocPoint>)> = results
            .into_iter()
            .flat_map(|(c, _, curves)| curves.into_iter().map(move |(d, pts)| (c.clone(), d, pts)))
            .collect();
        let p = path("_roc");
        write_roc(&p, &curves)?;
        written.push(p);
    }
    Ok(written)
}

/// Run the named preset.
pub fn run_preset(name: &str, runs: usize, seed: u64, extra: &[(String, Value)], opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let preset = find(name)?;
    let points = preset.expand(runs, seed, extra)?;
    execute(preset.name, &points, preset.roc.as_ref(), opts)
}
