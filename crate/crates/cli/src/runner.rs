//! Executes one resolved run configuration and writes its artifacts:
//! result CSVs plus a manifest echoing every resolved parameter.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kaclab_core::{
    csv_row, dirichlet_semigroup, free_semigroup, kac_gap, kato_probe_table, monotone_form_limit_check,
    penalization_limit_check, penalized_semigroup, penetration_semigroup, regularity_battery,
    build_laplacian, EnsembleRequest, GridSpec, MonotoneCase, PotentialRef, Region, CSV_HEADER,
};

use crate::config::{
    BuiltPotential, Command, EstimatorName, FieldSpec, GridConfig, ResolvedConfig, RunConfig,
};
use crate::CliError;

pub struct RunOutput {
    pub files: Vec<PathBuf>,
    /// Lines for standard output (verdicts, summaries).
    pub summary: Vec<String>,
}

/// Runs a config on `workers` threads (or the rayon default); creates the
/// output directory, writes artifacts and the manifest, returns the summary.
pub fn run(config: &RunConfig, workers: Option<usize>, seed_flag: Option<u64>, h_flag: Option<f64>, paths_flag: Option<u64>, out_flag: Option<String>) -> Result<RunOutput, CliError> {
    let resolved = config.resolve(seed_flag, h_flag, paths_flag, out_flag);
    let started = Instant::now();
    let mut pool_builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool_builder = pool_builder.num_threads(w);
    }
    let pool = pool_builder.build().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let mut output = pool.install(|| dispatch(&resolved))?;

    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": &resolved,
        "workers": workers,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": output.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let manifest_path = Path::new(&resolved.resolved_out).join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())?;
    output.files.push(manifest_path);
    Ok(output)
}

fn dispatch(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    fs::create_dir_all(&cfg.resolved_out)?;
    match cfg.run.command {
        Command::Estimate => run_estimate(cfg),
        Command::Gap => run_gap(cfg),
        Command::Battery => run_battery(cfg),
        Command::Grid => run_grid(cfg),
        Command::Kato => run_kato(cfg),
        Command::Monotone => run_monotone(cfg),
    }
}

fn require_region(cfg: &ResolvedConfig) -> Result<Region, CliError> {
    cfg.run
        .region
        .as_ref()
        .ok_or_else(|| CliError::InvalidConfig("this command needs a region".into()))?
        .build()
        .map_err(CliError::from)
}

fn require_points(cfg: &ResolvedConfig) -> Result<&[Vec<f64>], CliError> {
    if cfg.run.points.is_empty() {
        return Err(CliError::InvalidConfig("this command needs at least one point".into()));
    }
    Ok(&cfg.run.points)
}

fn require_times(cfg: &ResolvedConfig) -> Result<&[f64], CliError> {
    if cfg.run.times.is_empty() {
        return Err(CliError::InvalidConfig("this command needs at least one time".into()));
    }
    Ok(&cfg.run.times)
}

fn run_estimate(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    let region = require_region(cfg)?;
    let points = require_points(cfg)?;
    let times = require_times(cfg)?;
    let potential = cfg
        .run
        .potential
        .as_ref()
        .map(|p| p.build(&region))
        .transpose()?;
    let gauge = cfg.run.gauge.as_ref().map(|g| g.build());
    let fspec = cfg.run.f.clone().unwrap_or(FieldSpec::One);
    let f = fspec.build();
    let estimator = cfg.run.estimator.clone().unwrap_or(EstimatorName::Dirichlet);

    let mut rows = vec![CSV_HEADER.to_string()];
    for x in points {
        for &t in times {
            let potential_ref = potential.as_ref().map(|p| match p {
                BuiltPotential::Scalar(s) => PotentialRef::Scalar(s),
                BuiltPotential::Matrix(m) => PotentialRef::Matrix(m),
            });
            let req = EnsembleRequest {
                region: &region,
                potential: potential_ref,
                gauge: gauge.as_ref(),
                f: &*f,
                x,
                t,
                h: cfg.resolved_h,
                n_paths: cfg.resolved_paths,
                seed: cfg.resolved_seed,
                antithetic: cfg.run.antithetic,
            };
            match estimator {
                EstimatorName::Dirichlet => rows.push(csv_row(&dirichlet_semigroup(&req)?)),
                EstimatorName::Penetration => rows.push(csv_row(&penetration_semigroup(&req)?)),
                EstimatorName::Free => rows.push(csv_row(&free_semigroup(&req)?)),
                EstimatorName::Penalized => {
                    let ns: &[f64] =
                        if cfg.run.n_penalty.is_empty() { &[0.0] } else { &cfg.run.n_penalty };
                    for &n in ns {
                        let req = EnsembleRequest { potential: potential.as_ref().map(|p| match p {
                            BuiltPotential::Scalar(s) => PotentialRef::Scalar(s),
                            BuiltPotential::Matrix(m) => PotentialRef::Matrix(m),
                        }), ..req };
                        rows.push(csv_row(&penalized_semigroup(&req, n)?));
                    }
                }
            }
        }
    }
    let path = Path::new(&cfg.resolved_out).join("estimates.csv");
    write_lines(&path, &rows)?;
    let summary = rows[1..].to_vec();
    Ok(RunOutput { files: vec![path], summary })
}

fn run_gap(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    let region = require_region(cfg)?;
    let points = require_points(cfg)?;
    let times = require_times(cfg)?;
    let mut rows = vec![CSV_HEADER.to_string()];
    let mut summary = Vec::new();
    for x in points {
        for &t in times {
            let g = kac_gap(&region, x, t, cfg.resolved_paths, cfg.resolved_h, cfg.resolved_seed)?;
            summary.push(format!(
                "gap at x={:?}, t={}: {} +- {}",
                x, t, g.gap, g.stderr
            ));
            let mut est_params = g.params.clone();
            est_params.estimator_kind = "kac_gap".into();
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                est_params.estimator_kind,
                est_params.region_id,
                est_params.potential_id,
                x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
                t,
                cfg.resolved_h,
                "",
                cfg.resolved_paths,
                g.gap,
                0.0,
                g.stderr,
                cfg.resolved_seed
            ));
        }
    }
    let path = Path::new(&cfg.resolved_out).join("gaps.csv");
    write_lines(&path, &rows)?;
    Ok(RunOutput { files: vec![path], summary })
}

fn run_battery(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    let region = require_region(cfg)?;
    let points = require_points(cfg)?;
    let times = require_times(cfg)?;
    let report = regularity_battery(
        &region,
        points,
        times,
        cfg.resolved_paths,
        cfg.resolved_h,
        cfg.resolved_seed,
    );
    let path = Path::new(&cfg.resolved_out).join("battery.csv");
    fs::write(&path, report.to_csv())?;
    Ok(RunOutput { files: vec![path], summary: vec![report.verdict_line()] })
}

fn default_grid(cfg: &ResolvedConfig) -> Result<GridConfig, CliError> {
    cfg.run
        .grid
        .clone()
        .ok_or_else(|| CliError::InvalidConfig("this command needs a grid section".into()))
}

fn bump_vector(grid: &GridSpec, width: f64) -> Vec<f64> {
    let total = grid.node_count();
    let center: Vec<f64> =
        grid.lo.iter().zip(&grid.hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let mut f: Vec<f64> = (0..total)
        .map(|i| {
            let x = grid.node_coord(i);
            let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / width).exp()
        })
        .collect();
    let n2 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n2 > 0.0 {
        f.iter_mut().for_each(|v| *v /= n2);
    }
    f
}

fn run_grid(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    let region = require_region(cfg)?;
    let gc = default_grid(cfg)?;
    let grid = GridSpec::from_region(&gc.lo, &gc.hi, &gc.nodes, &region)?;
    let f = bump_vector(&grid, gc.bump_width);
    let t = cfg.run.times.first().copied().unwrap_or(0.1);
    let ns: Vec<f64> = if cfg.run.n_penalty.is_empty() {
        (1..=6).map(|k| 10f64.powi(k)).collect()
    } else {
        cfg.run.n_penalty.clone()
    };
    let report = penalization_limit_check(&grid, t, &f, &ns, 1e-7)?;
    let mut files = Vec::new();
    let path = Path::new(&cfg.resolved_out).join("defects.csv");
    fs::write(&path, report.to_csv())?;
    files.push(path);
    if gc.export_operator {
        let l = build_laplacian(&grid)?;
        let path = Path::new(&cfg.resolved_out).join("operator.txt");
        fs::write(&path, l.export_coo())?;
        files.push(path);
    }
    let summary = vec![format!(
        "penalization defects: monotone={} final={:.3e}",
        report.monotone, report.final_defect_inside
    )];
    Ok(RunOutput { files, summary })
}

fn run_kato(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    let region = cfg
        .run
        .region
        .as_ref()
        .map(|r| r.build())
        .transpose()?
        .unwrap_or(Region::all(3)?);
    let potential = cfg
        .run
        .potential
        .as_ref()
        .ok_or_else(|| CliError::InvalidConfig("kato needs a potential".into()))?
        .build(&region)?;
    let scalar = match &potential {
        BuiltPotential::Scalar(s) => s,
        BuiltPotential::Matrix(_) => {
            return Err(CliError::InvalidConfig("kato probe takes a scalar potential".into()))
        }
    };
    let times = require_times(cfg)?;
    let probes: Vec<Vec<f64>> = if cfg.run.points.is_empty() {
        vec![vec![0.0, 0.0, 0.0]]
    } else {
        cfg.run.points.clone()
    };
    let qn = cfg.run.quadrature_n.unwrap_or(1 << 18);
    let rows = kato_probe_table(scalar, times, &probes, qn, cfg.resolved_seed)?;
    let mut lines = vec!["t,raw,scaled".to_string()];
    let mut summary = Vec::new();
    for r in &rows {
        lines.push(format!("{},{},{}", r.t, r.raw, r.scaled));
        summary.push(format!("kato t={:e}: raw={:.6} scaled={:.6}", r.t, r.raw, r.scaled));
    }
    let path = Path::new(&cfg.resolved_out).join("kato.csv");
    write_lines(&path, &lines)?;
    Ok(RunOutput { files: vec![path], summary })
}

fn run_monotone(cfg: &ResolvedConfig) -> Result<RunOutput, CliError> {
    let gc = default_grid(cfg)?;
    let grid = match &cfg.run.region {
        Some(spec) => GridSpec::from_region(&gc.lo, &gc.hi, &gc.nodes, &spec.build()?)?,
        None => GridSpec::new(&gc.lo, &gc.hi, &gc.nodes)?,
    };
    let f = bump_vector(&grid, gc.bump_width);
    let t = cfg.run.times.first().copied().unwrap_or(0.1);
    let report = if gc.shrink_levels.is_empty() {
        let ns: Vec<f64> = if cfg.run.n_penalty.is_empty() {
            (1..=6).map(|k| 10f64.powi(k)).collect()
        } else {
            cfg.run.n_penalty.clone()
        };
        monotone_form_limit_check(&grid, t, &f, MonotoneCase::Increasing { n_sequence: &ns }, 1e-7)?
    } else {
        // shrinking windows (1/n, 1-1/n) of the grid box, per axis
        let masks: Vec<Vec<bool>> = gc
            .shrink_levels
            .iter()
            .map(|&n| {
                (0..grid.node_count())
                    .map(|i| {
                        let x = grid.node_coord(i);
                        x.iter().zip(grid.lo.iter().zip(&grid.hi)).all(|(&xi, (&lo, &hi))| {
                            let w = hi - lo;
                            xi > lo + w / n as f64 && xi < hi - w / n as f64
                        })
                    })
                    .collect()
            })
            .collect();
        monotone_form_limit_check(&grid, t, &f, MonotoneCase::Decreasing { masks: &masks }, 1e-7)?
    };
    let path = Path::new(&cfg.resolved_out).join("defects.csv");
    fs::write(&path, report.to_csv())?;
    let summary = vec![format!(
        "monotone limit: monotone={} final={:.3e}",
        report.monotone, report.final_defect_inside
    )];
    Ok(RunOutput { files: vec![path], summary })
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut w = fs::File::create(path)?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    Ok(())
}
