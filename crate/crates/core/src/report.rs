//! Sweep orchestration and CSV output.
//!
//! Points of a sweep are evaluated in a worker pool. All files are written
//! afterwards by a single writer in `(gamma, chi)` order, with a fixed float
//! format, so repeated runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{tidy, RunConfig};
use crate::dynamics::{
    decay_rate_fit, dissipation, lyapunov_constants, probe_trajectory, simulate, DEFAULT_PROBES,
};
use crate::error::Error;
use crate::modal::{block_for, ModalState, Model};
use crate::params::SystemParams;
use crate::spectral::{
    chi_is_zero, classify, default_lambda_grid, gamma_is_half, pruss_margin, semiuniform_decay,
    uniform_abscissa, witness_scan, StabilityReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Classify,
    Sweep,
    Witness,
    Simulate,
    Decay,
    ResolventScan,
}

impl Command {
    pub fn summary_file(self) -> &'static str {
        match self {
            Command::Classify | Command::Sweep => "report.csv",
            Command::Witness => "witness_summary.csv",
            Command::Simulate => "simulate_summary.csv",
            Command::Decay => "decay_summary.csv",
            Command::ResolventScan => "scan_summary.csv",
        }
    }

    fn summary_header(self) -> &'static [&'static str] {
        match self {
            Command::Classify | Command::Sweep => &[
                "gamma",
                "chi",
                "sup_abscissa",
                "pruss_margin",
                "inverse_growth_exponent",
                "witness_exponent",
                "classification",
                "analytic_prediction",
                "agree",
                "numerical_verdict",
                "margin_trend",
                "inverse_growth_slope",
                "decay_ratio",
                "status",
            ],
            Command::Witness => &[
                "gamma",
                "chi",
                "case",
                "fitted_exponent",
                "predicted_exponent",
                "window_min",
                "window_max",
                "status",
            ],
            Command::Simulate => &[
                "gamma",
                "chi",
                "alpha",
                "energy_initial",
                "energy_final",
                "identity_residual",
                "eps",
                "status",
            ],
            Command::Decay => &[
                "gamma", "chi", "h_ratio", "vanishing", "kappa", "k_const", "status",
            ],
            Command::ResolventScan => &[
                "gamma",
                "chi",
                "margin",
                "argmin_alpha",
                "argmin_lambda",
                "margin_trend",
                "sup_abscissa",
                "status",
            ],
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    /// The configuration cannot drive the command.
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub computed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub files: Vec<PathBuf>,
}

/// Locale-independent float cell.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.10e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Compact rendering of a sweep coordinate, used in keys and file names.
pub fn coord(x: f64) -> String {
    format!("{}", tidy(x))
}

fn point_key(p: &SystemParams) -> (String, String) {
    (coord(p.gamma), coord(p.chi()))
}

struct Table {
    name: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

/// Everything one sweep point produces.
struct PointResult {
    gamma: f64,
    chi: f64,
    cells: Vec<String>,
    status: String,
    tables: Vec<Table>,
}

pub fn stability_row(r: &StabilityReport) -> Vec<String> {
    vec![
        num(r.sup_abscissa),
        num(r.pruss_margin),
        opt(r.inverse_growth_exponent),
        opt(r.witness_exponent_fit),
        r.classification.to_string(),
        r.prediction.to_string(),
        r.agree.to_string(),
        r.numerical.to_string(),
        num(r.margin_trend),
        num(r.inverse_growth_slope),
        num(r.decay_ratio),
    ]
}

pub fn run_classify(cfg: &RunConfig, p: &SystemParams) -> crate::Result<StabilityReport> {
    classify(cfg.model, p, &cfg.spectrum, &cfg.classify)
}

fn suffix(p: &SystemParams) -> String {
    let (g, c) = point_key(p);
    format!("{g}_{c}")
}

fn eval_point(cmd: Command, cfg: &RunConfig, p: &SystemParams) -> crate::Result<(Vec<String>, Vec<Table>)> {
    match cmd {
        Command::Classify | Command::Sweep => Ok((stability_row(&run_classify(cfg, p)?), vec![])),
        Command::Witness => {
            let w = witness_scan(p, &cfg.spectrum, cfg.classify.fit_window)?;
            let rows = w
                .per_alpha
                .iter()
                .map(|x| vec![num(x.alpha), num(x.lambda), num(x.magnitude)])
                .collect();
            Ok((
                vec![
                    w.case.id.to_string(),
                    num(w.fitted_exponent),
                    num(w.case.predicted_exponent),
                    num(w.window.0),
                    num(w.window.1),
                ],
                vec![Table {
                    name: format!("witness_{}.csv", suffix(p)),
                    header: vec!["alpha", "lambda", "watched_magnitude"],
                    rows,
                }],
            ))
        }
        Command::ResolventScan => {
            let alphas = cfg.spectrum.values()?;
            let grid = default_lambda_grid(
                cfg.model,
                p,
                &alphas,
                cfg.classify.lambda_points,
                cfg.classify.lambda_min,
            );
            let scan = pruss_margin(cfg.model, p, &cfg.spectrum, &grid, cfg.classify.eigen_frequencies)?;
            let window = cfg
                .classify
                .fit_window
                .unwrap_or_else(|| crate::fit::top_decades(&alphas, cfg.classify.fit_decades));
            let trend = if alphas.len() >= 2 {
                scan.trend(window).map(|f| f.slope).unwrap_or(f64::NEG_INFINITY)
            } else {
                f64::NAN
            };
            let (sup, _) = uniform_abscissa(cfg.model, p, &cfg.spectrum)?;
            let rows = scan
                .per_alpha
                .iter()
                .map(|m| vec![num(m.alpha), num(m.sigma_min), num(m.lambda_star)])
                .collect();
            Ok((
                vec![
                    num(scan.margin),
                    num(scan.argmin_alpha),
                    num(scan.argmin_lambda),
                    num(trend),
                    num(sup),
                ],
                vec![Table {
                    name: format!("scan_{}.csv", suffix(p)),
                    header: vec!["alpha", "sigma_min", "lambda_star"],
                    rows,
                }],
            ))
        }
        Command::Decay => {
            let curve = semiuniform_decay(
                cfg.model,
                p,
                &cfg.spectrum,
                &cfg.decay.h_times,
                cfg.classify.decay_threshold,
            )?;
            let fit = decay_rate_fit(cfg.model, p, &cfg.spectrum, &cfg.decay.states, &cfg.decay.fit_times)?;
            let h_rows = (0..curve.times.len())
                .map(|k| vec![num(curve.times[k]), num(curve.h[k]), num(curve.argmax_alpha[k])])
                .collect();
            let k_rows = fit
                .per_mode
                .iter()
                .map(|m| vec![num(m.alpha), num(m.horizon), num(m.kappa)])
                .collect();
            Ok((
                vec![
                    num(curve.ratio),
                    curve.vanishing.to_string(),
                    num(fit.kappa),
                    num(fit.k_const),
                ],
                vec![
                    Table {
                        name: format!("decay_{}.csv", suffix(p)),
                        header: vec!["t", "h", "argmax_alpha"],
                        rows: h_rows,
                    },
                    Table {
                        name: format!("kappa_{}.csv", suffix(p)),
                        header: vec!["alpha", "horizon", "kappa"],
                        rows: k_rows,
                    },
                ],
            ))
        }
        Command::Simulate => simulate_point(cfg, p),
    }
}

fn simulate_point(cfg: &RunConfig, p: &SystemParams) -> crate::Result<(Vec<String>, Vec<Table>)> {
    let sim = &cfg.simulate;
    let block = block_for(cfg.model, p, sim.alpha)?;
    let state0 = ModalState::new(sim.alpha, sim.state.clone());
    let lyapunov = cfg.model == Model::Timoshenko && gamma_is_half(p.gamma) && chi_is_zero(p);
    let consts = if lyapunov {
        Some(lyapunov_constants(p, &cfg.spectrum, DEFAULT_PROBES, cfg.seed)?)
    } else {
        None
    };
    let tr = simulate(&block, &state0, &sim.times)?;
    let probe = match &consts {
        Some(k) => Some(probe_trajectory(p, &block, &state0, &sim.times, k)?),
        None => None,
    };
    let e0 = tr.energy[0];
    let mut worst_residual: f64 = 0.0;
    let mut rows = Vec::with_capacity(tr.times.len());
    for k in 0..tr.times.len() {
        let z = &tr.states[k];
        let diss = dissipation(p, &block, z);
        let residual = (tr.energy_rate[k] + diss).abs() / (1.0 + e0);
        worst_residual = worst_residual.max(residual);
        let mut row = vec![
            num(tr.times[k]),
            num(tr.energy[k]),
            num(tr.energy_rate[k]),
            num(diss),
            num(residual),
        ];
        row.extend(z.iter().map(|x| num(*x)));
        if z.len() < 5 {
            row.extend(std::iter::repeat_n(String::new(), 5 - z.len()));
        }
        match (&probe, &consts) {
            (Some(pr), Some(kc)) => {
                let s = pr.samples[k];
                let l0 = pr.samples[0].total.expect("eps known");
                row.extend([
                    num(s.lambda1),
                    num(s.lambda2),
                    num(s.lambda3),
                    opt(s.total),
                    num(crate::dynamics::gronwall_envelope(kc, l0, s.t)?),
                ]);
            }
            _ => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        rows.push(row);
    }
    Ok((
        vec![
            num(sim.alpha),
            num(e0),
            num(*tr.energy.last().expect("non-empty")),
            num(worst_residual),
            opt(consts.and_then(|k| k.eps)),
        ],
        vec![Table {
            name: format!("simulate_{}.csv", suffix(p)),
            header: vec![
                "t",
                "energy",
                "energy_rate",
                "dissipation",
                "identity_residual",
                "z1",
                "z2",
                "z3",
                "z4",
                "z5",
                "lambda1",
                "lambda2",
                "lambda3",
                "lambda",
                "envelope",
            ],
            rows,
        }],
    ))
}

fn write_table(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| io_err(&path, e))?;
    w.write_record(header).map_err(|e| io_err(&path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

type Key = (String, String);

/// Completed rows of an earlier run, keyed by `(gamma, chi)`.
fn read_completed(path: &Path, header: &[&str]) -> Result<BTreeMap<Key, Vec<String>>, RunError> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let found: Vec<String> = r
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(io_err(path, "existing file has a different header; cannot resume"));
    }
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row: Vec<String> = rec.iter().map(str::to_string).collect();
        if row.last().map(String::as_str) == Some("ok") {
            out.insert((row[0].clone(), row[1].clone()), row);
        }
    }
    Ok(out)
}

fn sort_key(k: &Key) -> (f64, f64) {
    (k.0.parse().unwrap_or(f64::NAN), k.1.parse().unwrap_or(f64::NAN))
}

/// Runs `cmd` over the points of `cfg` and writes its files to the output directory.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let mut points = cfg.points();
    if cmd == Command::Classify && points.len() != 1 {
        return Err(RunError::Config(format!(
            "classify takes a single parameter point, the configuration gives {}; use sweep",
            points.len()
        )));
    }
    if cmd == Command::Witness && cfg.model != Model::Timoshenko {
        return Err(RunError::Config(
            "witness sequences are defined for the Timoshenko model".into(),
        ));
    }
    for p in &points {
        p.validate().map_err(|e| RunError::Config(e.to_string()))?;
    }
    // Duplicate coordinates would collide in keys and file names.
    let mut seen = std::collections::BTreeSet::new();
    points.retain(|p| seen.insert(point_key(p)));

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let header = cmd.summary_header();
    let summary_path = dir.join(cmd.summary_file());
    let mut rows = if cfg.output.resume {
        read_completed(&summary_path, header)?
    } else {
        BTreeMap::new()
    };
    let todo: Vec<SystemParams> = points
        .into_iter()
        .filter(|p| !rows.contains_key(&point_key(p)))
        .collect();
    let skipped = rows.len();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.output.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Config(format!("worker pool: {e}")))?;
    let results: Vec<PointResult> = pool.install(|| {
        todo.par_iter()
            .map(|p| {
                let (cells, tables, status) = match eval_point(cmd, cfg, p) {
                    Ok((c, t)) => (c, t, "ok".to_string()),
                    Err(e) => (
                        vec![String::new(); header.len() - 3],
                        vec![],
                        format!("error: {}", describe(&e)),
                    ),
                };
                PointResult {
                    gamma: p.gamma,
                    chi: p.chi(),
                    cells,
                    status,
                    tables,
                }
            })
            .collect()
    });

    let mut files = Vec::new();
    let mut failed = 0;
    for r in &results {
        for t in &r.tables {
            files.push(write_table(dir, &t.name, &t.header, &t.rows)?);
        }
        if r.status != "ok" {
            failed += 1;
        }
        let mut row = vec![coord(r.gamma), coord(r.chi)];
        row.extend(r.cells.iter().cloned());
        row.push(r.status.clone());
        rows.insert((row[0].clone(), row[1].clone()), row);
    }
    let mut ordered: Vec<(Key, Vec<String>)> = rows.into_iter().collect();
    ordered.sort_by(|a, b| {
        let (x, y) = (sort_key(&a.0), sort_key(&b.0));
        x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1))
    });
    let body: Vec<Vec<String>> = ordered.into_iter().map(|(_, r)| r).collect();
    files.push(write_table(dir, cmd.summary_file(), header, &body)?);
    Ok(RunSummary {
        computed: results.len() - failed,
        skipped,
        failed,
        files,
    })
}

/// Single-line error text for CSV cells.
fn describe(e: &Error) -> String {
    e.to_string().replace(['\n', '\r'], " ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_formats() {
        assert_eq!(num(0.5), "5.0000000000e-1");
        assert_eq!(num(-1234.5), "-1.2345000000e3");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
        assert_eq!(opt(None), "");
        assert_eq!(coord(0.1 + 0.2), "0.3");
        assert_eq!(coord(2.0), "2");
        assert_eq!(coord(-0.25), "-0.25");
    }

    #[test]
    fn resume_ignores_failed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let header = Command::Decay.summary_header();
        let path = dir.path().join("s.csv");
        std::fs::write(
            &path,
            "gamma,chi,h_ratio,vanishing,kappa,k_const,status\n0.5,0,1,true,1,1,ok\n2,0,,,,,error: x\n",
        )
        .unwrap();
        let done = read_completed(&path, header).unwrap();
        assert_eq!(done.len(), 1);
        assert!(done.contains_key(&("0.5".to_string(), "0".to_string())));
        std::fs::write(&path, "gamma,chi\n").unwrap();
        assert!(read_completed(&path, header).is_err());
    }
}
