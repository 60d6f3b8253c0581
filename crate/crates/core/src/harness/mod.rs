//! Benchmark orchestration, recovery metrics, report I/O and time-series
//! ingestion.

mod ingest;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::StochasticFisherGame;
use crate::games::{sample_instance, Family, InnerMethod, ParamMode, UtilityClass};
use crate::planner::{
    gda_solve, gda_solve_benchmark, relative_error, EstimateRule, GdaConfig, SolveTrace,
};
use crate::spaces::{mix_seed, Rng};

pub use ingest::{
    ingest_timeseries, read_observations, write_observations, write_timeseries, ObservationSet,
    Split, TimeseriesSchema, Window,
};

/// Relative L2 distance under which a parameter counts as recovered.
pub const RECOVERY_TOL: f64 = 0.1;
pub const REPORT_VERSION: u32 = 1;
pub const FISHER_ETA_Y: f64 = 3e-4;
pub const CHECKPOINT_EVERY: usize = 50;

/// Repeated Fisher market with savings and linear utilities; types and
/// initial budgets are drawn from `rng`.
pub fn stochastic_fisher_game(
    n_buyers: usize,
    n_goods: usize,
    supplies: Vec<f64>,
    discount: f64,
    rng: &mut Rng,
) -> Result<StochasticFisherGame> {
    StochasticFisherGame::sample(n_buyers, n_goods, supplies, discount, rng)
}

/// `||(estimate - truth) / truth||_2 <= 0.1`
pub fn recovery_check(estimate: &[f64], truth: &[f64]) -> Result<bool> {
    Ok(relative_error(estimate, truth)? <= RECOVERY_TOL)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub family: Family,
    pub mode: ParamMode,
    pub n_instances: usize,
    pub gda: GdaConfig,
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Stop each run once it is within the recovery tolerance of the truth.
    pub early_stop: bool,
}

impl BenchSpec {
    /// Benchmark settings for each family.
    ///
    /// Fisher deviations use a smaller ascent step: near a buyer's demand
    /// the payoff curvature is about `p^2 / b`, so `eta_y` must stay below
    /// `2 b / p^2` for the smallest budgets.
    pub fn family_defaults(family: Family, mode: ParamMode) -> Self {
        let (eta_theta, eta_y, iters) = match family {
            Family::Cournot => (0.01, 0.01, 10_000),
            Family::Bertrand => (0.3, 0.3, 250),
            Family::QuadraticToy | Family::RandomMatrix => (0.01, 0.01, 5000),
            _ => (0.01, FISHER_ETA_Y, 5000),
        };
        BenchSpec {
            family,
            mode,
            n_instances: 100,
            gda: GdaConfig {
                eta_theta,
                eta_y,
                iters,
                estimate: EstimateRule::BestCertified {
                    every: CHECKPOINT_EVERY,
                },
                ..Default::default()
            },
            seed: 0,
            threads: None,
            early_stop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::Config("n_instances must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let ok = match self.mode {
            ParamMode::BudgetsOnly | ParamMode::TypesAndBudgets => {
                self.family.utility_class().is_some()
            }
            ParamMode::MarginalCost => matches!(self.family, Family::Cournot | Family::Bertrand),
            ParamMode::Full => matches!(self.family, Family::QuadraticToy | Family::RandomMatrix),
        };
        if !ok {
            return Err(Error::Config(format!(
                "mode {:?} does not apply to family {:?}",
                self.mode, self.family
            )));
        }
        if !(self.gda.eta_theta > 0.0 && self.gda.eta_y > 0.0) || self.gda.iters == 0 {
            return Err(Error::Config("learning rate and iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub index: usize,
    pub seed: u64,
    pub recovered: bool,
    /// Recovery after normalizing each buyer's types to sum to one; only
    /// set for the types-and-budgets mode.
    pub recovered_normalized: Option<bool>,
    pub rel_error: f64,
    pub rel_error_normalized: Option<f64>,
    pub certificate: f64,
    pub certificate_method: Option<InnerMethod>,
    pub initial_exploitability: f64,
    pub iters: usize,
    pub stopped_early: bool,
    pub wall_ms: f64,
    pub theta_star: Vec<f64>,
    pub estimate: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: u32,
    pub spec: BenchSpec,
    pub n_instances: usize,
    pub n_failed: usize,
    /// Headline rate; uses normalized types in the types-and-budgets mode.
    pub pct_recovered: f64,
    pub pct_recovered_raw: f64,
    pub pct_recovered_normalized: Option<f64>,
    /// Mean certificate over instances that ran.
    pub avg_exploitability: f64,
    pub wall_ms: f64,
    pub rows: Vec<BenchRow>,
}

/// Scales each buyer's type row to sum to one; budgets are untouched.
pub fn normalize_types(theta: &[f64], n_buyers: usize) -> Vec<f64> {
    let m = (theta.len() - n_buyers) / n_buyers;
    let mut out = theta.to_vec();
    for i in 0..n_buyers {
        let row = &mut out[i * m..(i + 1) * m];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}

fn run_instance(spec: &BenchSpec, index: usize) -> Result<(BenchRow, SolveTrace)> {
    let seed = mix_seed(spec.seed, index as u64);
    let mut rng = Rng::new(seed);
    let instance = sample_instance(spec.family, &mut rng)?;
    let (inv, truth) = instance.inverse_game(spec.mode)?;
    let trace = if spec.early_stop {
        gda_solve_benchmark(&inv, &spec.gda, &truth)?
    } else {
        gda_solve(&inv, &spec.gda)?
    };
    let theta0 = &trace.thetas[0];
    let initial = crate::planner::exploitability(
        inv.game.as_ref(),
        theta0,
        &inv.observed,
        &spec.gda.exploit,
    )?
    .value;
    let rel_error = relative_error(&trace.estimate, &truth)?;
    let (recovered_normalized, rel_error_normalized) = match spec.mode {
        ParamMode::TypesAndBudgets => {
            let n = match &instance.constants {
                crate::games::InstanceConstants::Fisher { budgets, .. } => budgets.len(),
                _ => unreachable!("validated mode"),
            };
            let e = relative_error(
                &normalize_types(&trace.estimate, n),
                &normalize_types(&truth, n),
            )?;
            (Some(e <= RECOVERY_TOL), Some(e))
        }
        _ => (None, None),
    };
    let row = BenchRow {
        index,
        seed,
        recovered: rel_error <= RECOVERY_TOL,
        recovered_normalized,
        rel_error,
        rel_error_normalized,
        certificate: trace.certificate.value,
        certificate_method: Some(trace.certificate.method()),
        initial_exploitability: initial,
        iters: trace.iters,
        stopped_early: trace.stopped_early,
        wall_ms: trace.wall_ms,
        theta_star: truth,
        estimate: trace.estimate.clone(),
        error: None,
    };
    Ok((row, trace))
}

fn failed_row(spec: &BenchSpec, index: usize, err: Error) -> BenchRow {
    log::warn!("instance {index} failed: {err}");
    BenchRow {
        index,
        seed: mix_seed(spec.seed, index as u64),
        recovered: false,
        recovered_normalized: None,
        rel_error: f64::NAN,
        rel_error_normalized: None,
        certificate: f64::NAN,
        certificate_method: None,
        initial_exploitability: f64::NAN,
        iters: 0,
        stopped_early: false,
        wall_ms: 0.0,
        theta_star: Vec::new(),
        estimate: Vec::new(),
        error: Some(err.to_string()),
    }
}

/// Runs every instance of `spec`, optionally keeping solve traces.
pub fn run_benchmark_with_traces(
    spec: &BenchSpec,
    keep_traces: bool,
) -> Result<(BenchReport, Vec<Option<SolveTrace>>)> {
    spec.validate()?;
    let start = Instant::now();
    let work = || {
        (0..spec.n_instances)
            .into_par_iter()
            .map(|index| match run_instance(spec, index) {
                Ok((row, trace)) => (row, keep_traces.then_some(trace)),
                Err(err) => (failed_row(spec, index, err), None),
            })
            .collect::<Vec<_>>()
    };
    let results = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let (rows, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut report = summarize(spec.clone(), rows);
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((report, traces))
}

pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchReport> {
    Ok(run_benchmark_with_traces(spec, false)?.0)
}

/// Aggregates per-instance rows into a report.
pub fn summarize(spec: BenchSpec, mut rows: Vec<BenchRow>) -> BenchReport {
    rows.sort_by_key(|r| r.index);
    let n = rows.len();
    let pct = |count: usize| 100.0 * count as f64 / n as f64;
    let raw = rows.iter().filter(|r| r.recovered).count();
    let normalized = (spec.mode == ParamMode::TypesAndBudgets).then(|| {
        pct(rows
            .iter()
            .filter(|r| r.recovered_normalized == Some(true))
            .count())
    });
    let ran: Vec<f64> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.certificate)
        .collect();
    let avg = if ran.is_empty() {
        f64::NAN
    } else {
        ran.iter().sum::<f64>() / ran.len() as f64
    };
    BenchReport {
        version: REPORT_VERSION,
        n_instances: n,
        n_failed: n - ran.len(),
        pct_recovered: normalized.unwrap_or(pct(raw)),
        pct_recovered_raw: pct(raw),
        pct_recovered_normalized: normalized,
        avg_exploitability: avg,
        wall_ms: 0.0,
        rows,
        spec,
    }
}

impl BenchReport {
    /// Same report with timings zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.wall_ms = 0.0;
        for r in &mut out.rows {
            r.wall_ms = 0.0;
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// One line per instance.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "index",
            "seed",
            "recovered",
            "recovered_normalized",
            "rel_error",
            "certificate",
            "certificate_method",
            "iters",
            "stopped_early",
            "wall_ms",
            "error",
        ])?;
        for r in &self.rows {
            let method = r
                .certificate_method
                .map(|m| serde_json::to_value(m).unwrap().as_str().unwrap().to_string())
                .unwrap_or_default();
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                r.recovered.to_string(),
                r.recovered_normalized.map(|b| b.to_string()).unwrap_or_default(),
                r.rel_error.to_string(),
                r.certificate.to_string(),
                method,
                r.iters.to_string(),
                r.stopped_early.to_string(),
                r.wall_ms.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fisher utility class name as used in file names.
pub fn class_slug(class: UtilityClass) -> &'static str {
    match class {
        UtilityClass::Linear => "linear",
        UtilityClass::CobbDouglas => "cobb_douglas",
        UtilityClass::Leontief => "leontief",
    }
}
