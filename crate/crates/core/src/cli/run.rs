//! Experiment pipelines over a resumable run directory.

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::RunDir;
use crate::error::Result;
use crate::rs::{residual, solve, Quadrature};
use crate::sampler::{aggregate, check_failure_fraction, disorder_moments, map_indices, sweep_disorder, Estimate, GibbsMoments};
use crate::verify::{
    concentration_report, gap_disorder, gap_report, li_disorder, li_report, projection_constants, projection_disorder,
    projection_report, CsvRow, LiContext, LiRecord, LiSweep, ProjectionRecord, SweepSettings,
};

/// Disorders evaluated between two flushes of the record log.
pub const CHUNK: usize = 256;

/// Runs `f` on every disorder of size `n` not yet in the log, appending
/// new records chunk by chunk. Returns all records in index order.
fn run_size<T, F>(dir: &mut RunDir, n: usize, n_disorders: usize, workers: usize, f: F) -> Result<Vec<(u64, T)>>
where
    T: Serialize + DeserializeOwned + Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let mut have: Vec<(u64, T)> = Vec::with_capacity(n_disorders);
    let mut missing = Vec::new();
    for d in 0..n_disorders as u64 {
        match dir.stored::<T>(n, d)? {
            Some(r) => have.push((d, r)),
            None => missing.push(d),
        }
    }
    let mut failures = Vec::new();
    for chunk in missing.chunks(CHUNK.max(workers)) {
        let (records, failed) = map_indices(chunk, workers, &f)?;
        dir.append(n, &records)?;
        have.extend(records);
        failures.extend(failed);
        check_failure_fraction(failures.len(), n_disorders)?;
    }
    dir.record_failures(n, &failures);
    have.sort_by_key(|(d, _)| *d);
    Ok(have)
}

fn failures_of(dir: &RunDir, n: usize) -> Vec<(u64, String)> {
    dir.manifest.failures.iter().filter(|f| f.n == n).map(|f| (f.d, f.error.clone())).collect()
}

/// Dispatches `cfg` into `dir`.
pub fn execute(cfg: &ExperimentConfig, dir: &mut RunDir, workers: usize) -> Result<()> {
    for &n in &cfg.ns {
        if let Some(w) = cfg.spec.kappa_warning(n) {
            log::warn!("N={n}: {w}");
        }
    }
    match cfg.experiment {
        ExperimentKind::RsSolve => rs_solve(cfg, dir),
        ExperimentKind::LiSweep => li_sweep(cfg, dir, workers),
        ExperimentKind::Concentration => concentration(cfg, dir, workers),
        ExperimentKind::DecomposeGap => decompose_gap(cfg, dir, workers),
        ExperimentKind::Projection => projection(cfg, dir, workers),
    }
}

fn rs_solve(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<()> {
    let quad = Quadrature::new(cfg.quad_order)?;
    let n = cfg.ns.first().copied().unwrap_or(0);
    let inputs = crate::verify::full_inputs(&cfg.spec, n.max(1));
    let sol = solve(&inputs, &quad, &cfg.solver)?;
    let refined = residual(&inputs, &sol.params, &quad)?;
    if !sol.converged {
        log::warn!("RS iteration stopped at residual {:e}", sol.residual_inf);
    }
    dir.write_json("rs_solution.json", &sol)?;
    let mut rows: Vec<CsvRow> = sol
        .params
        .iter()
        .map(|(name, v)| CsvRow {
            model: cfg.spec.kind,
            n,
            k: 0,
            p: 0,
            form: "-".into(),
            n_disorders: 0,
            statistic: name.clone(),
            value: *v,
            se: f64::NAN,
            seed: cfg.master_seed,
        })
        .collect();
    rows.push(CsvRow {
        statistic: "residual_refined".into(),
        value: refined,
        ..rows[0].clone()
    });
    dir.write_summary(&rows)
}

fn li_sweep(cfg: &ExperimentConfig, dir: &mut RunDir, workers: usize) -> Result<()> {
    let settings = SweepSettings {
        spec: cfg.spec,
        ns: cfg.ns.clone(),
        k: cfg.k,
        p: cfg.p,
        n_disorders: cfg.n_disorders,
        form: cfg.form,
        backend: cfg.sweep_backend(),
        master_seed: cfg.master_seed,
        workers,
        exploratory: cfg.exploratory,
    };
    settings.validate()?;
    let mut reports = Vec::new();
    let mut all = Vec::new();
    for &n in &cfg.ns {
        let ctx = LiContext::new(&settings, n)?;
        let records: Vec<LiRecord> =
            run_size(dir, n, cfg.n_disorders, workers, |d| li_disorder(&ctx, d))?.into_iter().map(|(_, r)| r).collect();
        let report = li_report(&settings, &ctx, &records, failures_of(dir, n))?;
        dir.write_json(&format!("li_report_N{n}.json"), &report)?;
        reports.push(report);
        all.push(records);
    }
    let sweep = LiSweep::assemble(&settings, reports, all);
    dir.write_json("li_sweep.json", &sweep)?;
    let mut rows: Vec<CsvRow> = sweep.reports.iter().flat_map(|r| r.csv_rows()).collect();
    if let Some(fit) = sweep.slope {
        let last = rows.last().cloned().expect("at least one report");
        rows.push(CsvRow { statistic: "tv_moment_2p_slope".into(), value: fit.slope, se: fit.se, n: 0, ..last });
    }
    dir.write_summary(&rows)
}

fn concentration(cfg: &ExperimentConfig, dir: &mut RunDir, workers: usize) -> Result<()> {
    let backend = cfg.sweep_backend();
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let estimator = backend.resolve(cfg.spec.kind, n)?;
        let records: Vec<(u64, GibbsMoments)> = run_size(dir, n, cfg.n_disorders, workers, |d| {
            let disorder = sweep_disorder(&cfg.spec, n, cfg.master_seed, d)?;
            disorder_moments(&cfg.spec, &disorder, 1, &estimator, cfg.master_seed, d)
        })?;
        let agg = aggregate(n, &records, failures_of(dir, n));
        let stats = concentration_report(cfg.spec.kind, cfg.n_disorders, cfg.master_seed, &agg);
        dir.write_json(&format!("concentration_N{n}.json"), &stats)?;
        rows.extend(stats.csv_rows());
    }
    dir.write_summary(&rows)
}

fn decompose_gap(cfg: &ExperimentConfig, dir: &mut RunDir, workers: usize) -> Result<()> {
    crate::verify::check_gap_inputs(&cfg.spec, &cfg.ns, cfg.k, cfg.p, cfg.n_disorders)?;
    let mut per_size = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.ns {
        let values: Vec<(u64, f64)> = run_size(dir, n, cfg.n_disorders, workers, |d| {
            gap_disorder(&cfg.spec, n, cfg.k, cfg.p, cfg.master_seed, d)
        })?;
        per_size.push((n, values.into_iter().map(|(_, v)| v).collect::<Vec<_>>()));
        failures.extend(failures_of(dir, n));
    }
    let report = gap_report(&cfg.spec, cfg.k, cfg.p, cfg.n_disorders, cfg.master_seed, &per_size, failures);
    dir.write_json("gap_report.json", &report)?;
    dir.write_summary(&report.csv_rows())
}

fn projection(cfg: &ExperimentConfig, dir: &mut RunDir, workers: usize) -> Result<()> {
    let mut rows = Vec::new();
    let mut decay = Vec::new();
    for &n in &cfg.ns {
        let consts = projection_constants(&cfg.spec, n)?;
        let records: Vec<ProjectionRecord> = run_size(dir, n, cfg.n_disorders, workers, |d| {
            projection_disorder(&cfg.spec, n, cfg.k, &cfg.test_functions, consts, cfg.master_seed, d)
        })?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
        let stats = projection_report(
            &cfg.spec,
            n,
            cfg.k,
            &cfg.test_functions,
            consts,
            &records,
            failures_of(dir, n),
            cfg.n_disorders,
            cfg.master_seed,
        );
        dir.write_json(&format!("projection_N{n}.json"), &stats)?;
        rows.extend(stats.csv_rows());
        decay.push(stats);
    }
    // step checks per test function on the partial form
    for (i, f) in cfg.test_functions.iter().enumerate() {
        let values: Vec<Estimate> = decay.iter().map(|s| s.rows[i].ms_partial).collect();
        for step in crate::verify::decay_steps(&cfg.ns, &values, 2.0) {
            log::info!(
                "{f}: N {} -> {}: drop {:.3e} (s.e. {:.3e}) {}",
                step.n_from,
                step.n_to,
                step.drop,
                step.se,
                if step.passes { "decreasing" } else { "not resolved" }
            );
        }
    }
    dir.write_summary(&rows)
}
