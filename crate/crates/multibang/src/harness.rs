//! Batch experiment driver: γ/h sweeps with warm starts, error tables,
//! numerical convergence orders, and CSV emission.
//!
//! Each mesh size runs as its own lane (γ values within a lane are
//! warm-start-sequential); lanes may run on worker threads and results are
//! merged in configured order, so the output is byte-identical for any
//! worker count.
//!
//! The order κ_{γ,h} printed at a row γ compares the squared L² control
//! error across the halving step that arrives at γ: κ = log₂(err²(2γ)/err²(γ)).
//! Every lane therefore also solves the 2γ companion of each requested
//! exponent; err² ~ γ^κ yields +κ.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::experiments::{build_example, ExampleId};
use crate::fem::{l1_error, l2_error_sq, Mesh1D};
use crate::solver::{gamma_continuation, ProblemInstance, SolverResult};
use crate::{Error, Piecewise64, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

/// Sweep plan: one benchmark problem over a γ exponent grid and mesh sizes.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub example: ExampleId,
    /// Requested exponents e (γ = 2^−e), positive.
    pub gamma_exponents: Vec<u32>,
    /// Mesh sizes, each of the form 1/n; canonicalized ascending.
    pub h_list: Vec<f64>,
    pub output_path: Option<PathBuf>,
    pub worker_count: usize,
    pub max_iter: usize,
}

impl SweepConfig {
    pub fn new(example: ExampleId, gamma_exponents: Vec<u32>, h_list: Vec<f64>) -> Result<Self> {
        if gamma_exponents.is_empty() {
            // an empty sweep is legal and yields an empty table
        }
        if gamma_exponents.contains(&0) {
            return Err(Error::InvalidArgument(
                "gamma exponents must be positive".into(),
            ));
        }
        let mut h_sorted = h_list;
        for &h in &h_sorted {
            mesh_for_h(h)?;
        }
        h_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        h_sorted.dedup();
        let mut exps = gamma_exponents;
        exps.sort_unstable();
        exps.dedup();
        Ok(Self {
            example,
            gamma_exponents: exps,
            h_list: h_sorted,
            output_path: None,
            worker_count: 1,
            max_iter: DEFAULT_MAX_ITER,
        })
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_count = workers.max(1);
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter.max(1);
        self
    }
}

/// Mesh size h must equal 1/n for an integer n >= 2.
pub fn mesh_for_h(h: f64) -> Result<Mesh1D> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid mesh size {}", h)));
    }
    let n = (1.0 / h).round();
    if n < 2.0 || ((1.0 / h) - n).abs() > 1e-6 * n {
        return Err(Error::InvalidArgument(format!(
            "mesh size {} is not 1/n for integer n >= 2",
            h
        )));
    }
    Mesh1D::new(n as usize)
}

/// One sweep row: errors of the solve at (γ, h) against the exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub gamma: f64,
    pub h: f64,
    pub err_l2_sq: f64,
    pub err_l1: f64,
    pub err_state_sq: f64,
    pub kappa: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

/// Numerical order: log₂ of the squared-error ratio under halving of γ.
/// err² ~ c γ^κ makes this exactly κ.
pub fn kappa_numeric(err_sq_at_gamma: f64, err_sq_at_half_gamma: f64) -> Result<f64> {
    if !(err_sq_at_gamma > 0.0) || !(err_sq_at_half_gamma > 0.0) {
        return Err(Error::InvalidArgument(
            "kappa_numeric needs positive squared errors".into(),
        ));
    }
    Ok((err_sq_at_gamma / err_sq_at_half_gamma).log2())
}

struct LaneOutcome {
    rows: Vec<RateRow>,
    results: Vec<(u32, SolverResult<f64>)>,
}

fn run_lane(
    example: &crate::experiments::ExampleProblem,
    h: f64,
    requested: &[u32],
    max_iter: usize,
) -> Result<LaneOutcome> {
    let mesh = mesh_for_h(h)?;
    let u_bar: Piecewise64 = example.u_bar.to_float();
    let w: Piecewise64 = example.w.to_float();
    let z: Piecewise64 = example.z.to_float();

    // requested exponents plus their doubled-γ companions, in descending γ order
    let mut lane_exps: BTreeSet<u32> = BTreeSet::new();
    for &e in requested {
        lane_exps.insert(e);
        lane_exps.insert(e.saturating_sub(1));
    }
    let lane_exps: Vec<u32> = lane_exps.into_iter().collect();
    let gammas: Vec<f64> = lane_exps.iter().map(|&e| 0.5f64.powi(e as i32)).collect();

    let problem = ProblemInstance::new(mesh, example.cfg.with_gamma(1.0)?, z);
    let results = gamma_continuation(&problem, &gammas, max_iter)?;

    let mut errs_sq = vec![f64::NAN; lane_exps.len()];
    let mut errs_l1 = vec![f64::NAN; lane_exps.len()];
    let mut errs_state = vec![f64::NAN; lane_exps.len()];
    for (k, res) in results.iter().enumerate() {
        errs_sq[k] = l2_error_sq(&res.state.u, &u_bar);
        errs_l1[k] = l1_error(&res.state.u, &u_bar);
        errs_state[k] = l2_error_sq(&res.state.y, &w);
    }

    let mut rows = Vec::with_capacity(requested.len());
    for &e in requested {
        let k = lane_exps.binary_search(&e).unwrap();
        let res = &results[k];
        // κ at row γ = 2^-e uses the halving 2γ → γ
        let companion = if e > 0 {
            lane_exps.binary_search(&(e - 1)).ok()
        } else {
            None
        };
        let kappa = match companion {
            Some(c)
                if res.converged
                    && results[c].converged
                    && errs_sq[k] > 0.0
                    && errs_sq[c] > 0.0 =>
            {
                Some(kappa_numeric(errs_sq[c], errs_sq[k])?)
            }
            _ => None,
        };
        rows.push(RateRow {
            gamma: 0.5f64.powi(e as i32),
            h,
            err_l2_sq: errs_sq[k],
            err_l1: errs_l1[k],
            err_state_sq: errs_state[k],
            kappa,
            iterations: res.iterations,
            converged: res.converged,
        });
    }
    let results = lane_exps.into_iter().zip(results).collect();
    Ok(LaneOutcome { rows, results })
}

/// Run the sweep; rows are ordered by (h ascending, γ descending).
pub fn run_sweep(cfg: &SweepConfig) -> Result<RateTable> {
    Ok(run_sweep_detailed(cfg)?.0)
}

/// Table plus every solver result keyed by (h, exponent).
pub type DetailedSweep = (RateTable, Vec<(f64, u32, SolverResult<f64>)>);

/// Sweep returning both the table and every solver result (including the
/// internal doubled-γ companions), keyed by (h, exponent).
pub fn run_sweep_detailed(cfg: &SweepConfig) -> Result<DetailedSweep> {
    if cfg.gamma_exponents.is_empty() || cfg.h_list.is_empty() {
        return Ok((RateTable::default(), Vec::new()));
    }
    let example = build_example(cfg.example)?;
    let lanes: Vec<f64> = cfg.h_list.clone();
    let workers = cfg.worker_count.max(1).min(lanes.len());

    let mut outcomes: Vec<Option<Result<LaneOutcome>>> = Vec::new();
    outcomes.resize_with(lanes.len(), || None);

    if workers <= 1 {
        for (idx, &h) in lanes.iter().enumerate() {
            outcomes[idx] = Some(run_lane(&example, h, &cfg.gamma_exponents, cfg.max_iter));
        }
    } else {
        // wave scheduling keeps at most `workers` lanes in flight and the
        // merge order fixed
        let example_ref = &example;
        for wave in lanes.chunks(workers).enumerate().collect::<Vec<_>>() {
            let (wave_idx, wave_hs) = wave;
            let wave_results: Vec<Result<LaneOutcome>> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave_hs
                    .iter()
                    .map(|&h| {
                        let exps = cfg.gamma_exponents.clone();
                        let max_iter = cfg.max_iter;
                        scope.spawn(move || run_lane(example_ref, h, &exps, max_iter))
                    })
                    .collect();
                handles.into_iter().map(|t| t.join().unwrap()).collect()
            });
            for (off, res) in wave_results.into_iter().enumerate() {
                outcomes[wave_idx * workers + off] = Some(res);
            }
        }
    }

    let mut table = RateTable::default();
    let mut all_results = Vec::new();
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        let lane = outcome.expect("lane scheduled")?;
        table.rows.extend(lane.rows);
        let h = lanes[idx];
        all_results.extend(lane.results.into_iter().map(|(e, r)| (h, e, r)));
    }
    Ok((table, all_results))
}

pub const CSV_HEADER: &str = "gamma,h,err_l2_sq,err_l1,err_state_sq,kappa,iterations,converged";

/// Write the table as CSV; floats in shortest round-trip decimal, κ empty
/// when absent, deterministic row order.
pub fn emit_csv(table: &RateTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        let kappa = row.kappa.map(|k| k.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.gamma,
            row.h,
            row.err_l2_sq,
            row.err_l1,
            row.err_state_sq,
            kappa,
            row.iterations,
            row.converged
        ));
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(contents.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a CSV produced by [`emit_csv`].
pub fn parse_csv(path: &Path) -> Result<RateTable> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != CSV_HEADER {
                return Err(Error::InvalidArgument(format!(
                    "unexpected CSV header: {}",
                    line
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected 8 fields",
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad float {:?}", s)))
        };
        rows.push(RateRow {
            gamma: parse(fields[0])?,
            h: parse(fields[1])?,
            err_l2_sq: parse(fields[2])?,
            err_l1: parse(fields[3])?,
            err_state_sq: parse(fields[4])?,
            kappa: if fields[5].is_empty() {
                None
            } else {
                Some(parse(fields[5])?)
            },
            iterations: fields[6]
                .parse()
                .map_err(|_| Error::InvalidArgument("bad iteration count".into()))?,
            converged: match fields[7] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "bad converged flag {:?}",
                        other
                    )))
                }
            },
        });
    }
    Ok(RateTable { rows })
}
