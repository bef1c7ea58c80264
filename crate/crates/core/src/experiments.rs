//! Orchestration of the solve / sweep / game experiments and their
//! artifacts (tables, optional SVG plots and a run manifest).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::dp::{bellman_residual, delta_sweep, hjb_residual, value_iteration, SweepReport};
use crate::error::{Error, Result};
use crate::game::build_game_model;
use crate::model::build_discrete_model;
use crate::nash::{all_equilibria, continuation_game, game_hjb_residual, game_sweep, game_value_iteration, run_nash_qlearning, STAGE_TOL};
use crate::plot::{LinePlot, Series};
use crate::qlearn::{learn, log_complexity_bound, Reference, RunOptions as LearnOptions};
use crate::env::MarketEnv;
use crate::table::{Cell, Format, Table};

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Solve { dt: f64 },
    Sweep,
    GameSolve { dt: Option<f64> },
    GameSweep,
    GameNashQ,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Sweep => "sweep",
            Command::GameSolve { .. } => "game-solve",
            Command::GameSweep => "game-sweep",
            Command::GameNashQ => "game-nashq",
        }
    }
}

/// Command-line overrides of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub plot: bool,
    pub master_seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
}

/// Per-cell seed: the first eight bytes of
/// `sha256(master || dt_index || seed_label || experiment)`.
pub fn derive_seed(master: u64, dt_index: u64, seed_label: u64, experiment: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(dt_index.to_le_bytes());
    h.update(seed_label.to_le_bytes());
    h.update(experiment.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Median with `None` read as `+inf`; `None` if the median is infinite.
pub fn censored_median(values: &[Option<u64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |n| n as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    m.is_finite().then_some(m)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct CellRecord {
    pub experiment: String,
    pub dt_index: usize,
    pub dt: f64,
    pub seed_label: u64,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub cells: Vec<CellRecord>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<Artifact>,
    pub elapsed_seconds: f64,
}

/// What a command produced, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, LinePlot)>,
    pub cells: Vec<CellRecord>,
    pub warnings: Vec<String>,
}

impl Output {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status != "ok").count()
    }
}

#[derive(Debug)]
pub struct Report {
    pub dir: PathBuf,
    pub output: Output,
    pub manifest: RunManifest,
}

/// Apply overrides and run every check that does not need the solvers.
/// Everything returned as an error here is a configuration error.
pub fn prepare(mut cfg: ExperimentConfig, cmd: &Command, ov: &Overrides) -> Result<ExperimentConfig> {
    if let Some(dir) = &ov.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = ov.format {
        cfg.output.formats = vec![match f {
            Format::Csv => crate::config::OutputFormat::Csv,
            Format::Json => crate::config::OutputFormat::Json,
        }];
    }
    if ov.plot {
        cfg.output.plot = true;
    }
    if let Some(m) = ov.master_seed {
        cfg.seeds.master = m;
    }
    if let Some(s) = &ov.seeds {
        cfg.seeds.labels = s.clone();
    }
    if ov.jobs == Some(0) {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    cfg.validate()?;
    let check_dt = |dt: f64| -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(())
    };
    match cmd {
        Command::Solve { dt } => {
            check_dt(*dt)?;
            build_discrete_model(&cfg.model, *dt).map_err(|e| Error::Config(e.to_string()))?;
        }
        Command::GameSolve { dt: Some(dt) } => {
            check_dt(*dt)?;
            build_game_model(&cfg.game, *dt).map_err(|e| Error::Config(e.to_string()))?;
        }
        _ => {}
    }
    Ok(cfg)
}

/// Compute a command's artifacts without writing them.
pub fn execute(cfg: &ExperimentConfig, cmd: &Command, jobs: Option<usize>) -> Result<Output> {
    let run = || match cmd {
        Command::Solve { dt } => cmd_solve(cfg, *dt),
        Command::Sweep => cmd_sweep(cfg),
        Command::GameSolve { dt } => cmd_game_solve(cfg, *dt),
        Command::GameSweep => cmd_game_sweep(cfg),
        Command::GameNashQ => cmd_game_nashq(cfg),
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Solver(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// `prepare`, `execute`, then write tables, plots and the manifest.
pub fn run(cfg: ExperimentConfig, cmd: &Command, ov: &Overrides) -> Result<Report> {
    let start = Instant::now();
    let cfg = prepare(cfg, cmd, ov)?;
    let output = execute(&cfg, cmd, ov.jobs)?;
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)?;
    let mut artifacts = Vec::new();
    for (name, table) in &output.tables {
        for f in &cfg.output.formats {
            let format: Format = f.clone().into();
            let file = format!("{name}.{}", format.extension());
            artifacts.push(write_artifact(&dir, &file, &table.to_bytes(format)?)?);
        }
    }
    if cfg.output.plot {
        for (name, plot) in &output.plots {
            artifacts.push(write_artifact(&dir, &format!("{name}.svg"), plot.to_svg().as_bytes())?);
        }
    }
    let manifest = RunManifest {
        tool: "hfmm".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        config: cfg.clone(),
        master_seed: cfg.seeds.master,
        cells: output.cells.clone(),
        warnings: output.warnings.clone(),
        artifacts,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(Report { dir, output, manifest })
}

fn write_artifact(dir: &Path, file: &str, bytes: &[u8]) -> Result<Artifact> {
    std::fs::write(dir.join(file), bytes)?;
    Ok(Artifact {
        file: file.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len(),
    })
}

pub fn cmd_solve(cfg: &ExperimentConfig, dt: f64) -> Result<Output> {
    let p = &cfg.model;
    let model = build_discrete_model(p, dt)?;
    let sol = value_iteration(&model, cfg.solver.tol, cfg.solver.max_iter)?;
    let hjb = hjb_residual(p, &sol.values)?;
    let bellman = bellman_residual(&model, &sol.values);
    let mut t = Table::new(&[
        "dt",
        "state_id",
        "mid_price",
        "inventory",
        "v_star",
        "policy_ask",
        "policy_bid",
        "bellman_residual",
        "hjb_residual",
    ]);
    for (sid, s) in model.states.iter().enumerate() {
        let a = sol.policy.actions[sid];
        t.push(vec![
            Cell::Float(dt),
            Cell::Int(sid as i64),
            Cell::Float(p.mid_price(s.price_index)),
            Cell::Int(s.inventory as i64),
            Cell::Float(sol.values.values[sid]),
            a.ask.map_or(Cell::Empty, |l| Cell::Float(p.quote_price(l))),
            a.bid.map_or(Cell::Empty, |l| Cell::Float(p.quote_price(l))),
            Cell::Float(bellman),
            Cell::Float(hjb),
        ]);
    }
    Ok(Output {
        tables: vec![("solve".into(), t)],
        ..Default::default()
    })
}

struct LearnCell {
    record: CellRecord,
    n_delta: Option<u64>,
    curve: Option<Table>,
}

fn learning_cell(cfg: &ExperimentConfig, report: &SweepReport, dt_index: usize, label: u64) -> LearnCell {
    let start = Instant::now();
    let row = &report.rows[dt_index];
    let seed = derive_seed(cfg.seeds.master, dt_index as u64, label, "sweep");
    let result = (|| -> Result<(Option<u64>, Table)> {
        let preset = cfg.learner.preset(dt_index)?;
        let model = build_discrete_model(&cfg.model, row.dt)?;
        let policy: Vec<usize> = row
            .solution
            .policy
            .actions
            .iter()
            .enumerate()
            .map(|(s, &a)| model.action_index(s, a))
            .collect::<Result<_>>()?;
        let mut env = MarketEnv::reset(&model, seed, preset.start_state(&model.params))?;
        let out = learn(
            &mut env,
            model.discount,
            preset,
            seed,
            Some(Reference {
                values: &row.solution.values,
                policy: &policy,
            }),
            &LearnOptions {
                threshold: Some(cfg.learner.threshold),
                stop_at_threshold: true,
                record_curve: true,
            },
        )?;
        let mut t = Table::new(&["dt", "seed", "step", "sup_error", "policy_match"]);
        for p in &out.curve.points {
            t.push(vec![
                Cell::Float(row.dt),
                Cell::Int(label as i64),
                Cell::Int(p.step as i64),
                Cell::Float(p.sup_error),
                Cell::Bool(p.policy_match),
            ]);
        }
        Ok((out.first_hit, t))
    })();
    let seconds = start.elapsed().as_secs_f64();
    let mut record = CellRecord {
        experiment: "sweep".into(),
        dt_index,
        dt: row.dt,
        seed_label: label,
        seed,
        status: "ok".into(),
        error: None,
        seconds,
    };
    match result {
        Ok((n, t)) => LearnCell {
            record,
            n_delta: n,
            curve: Some(t),
        },
        Err(e) => {
            log::error!("sweep cell dt[{dt_index}] seed {label} failed: {e}");
            record.status = "failed".into();
            record.error = Some(e.to_string());
            LearnCell {
                record,
                n_delta: None,
                curve: None,
            }
        }
    }
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Output> {
    let grid = cfg.dt_grid.points();
    let report = delta_sweep(&cfg.model, &grid, cfg.solver.tol, cfg.solver.max_iter)?;
    let mut out = Output::default();
    out.tables.push(("convergence".into(), report.to_table()));

    let labels = &cfg.seeds.labels;
    let cells: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|i| labels.iter().map(move |&l| (i, l)))
        .collect();
    // heaviest cells (smallest dt) first keeps the pool busy
    let mut results: Vec<(usize, LearnCell)> = cells
        .iter()
        .enumerate()
        .rev()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, &(i, l))| (k, learning_cell(cfg, &report, i, l)))
        .collect();
    results.sort_by_key(|(k, _)| *k);

    let mut summary = Table::new(&["dt", "seed", "n_delta", "reached"]);
    let mut curves = Table::new(&["dt", "seed", "step", "sup_error", "policy_match"]);
    let mut medians = Table::new(&["dt_index", "dt", "median_n_delta", "reached_seeds", "seeds", "log10_bound"]);
    let mut median_points = Vec::new();
    let mut bound_points = Vec::new();
    for (i, &dt) in grid.iter().enumerate() {
        let row_cells: Vec<&LearnCell> = results
            .iter()
            .map(|(_, c)| c)
            .filter(|c| c.record.dt_index == i)
            .collect();
        let mut ns = Vec::new();
        for c in &row_cells {
            summary.push(vec![
                Cell::Float(dt),
                Cell::Int(c.record.seed_label as i64),
                c.n_delta.map_or(Cell::Empty, |n| Cell::Int(n as i64)),
                Cell::Bool(c.n_delta.is_some()),
            ]);
            if let Some(t) = &c.curve {
                curves.extend(t.clone());
            }
            if c.record.status == "ok" {
                ns.push(c.n_delta);
            }
        }
        let median = censored_median(&ns);
        let preset = cfg.learner.preset(i)?;
        let bound = log_complexity_bound(&cfg.model, dt, preset.omega, cfg.learner.threshold, preset.eps_floor)? / std::f64::consts::LN_10;
        medians.push(vec![
            Cell::Int(i as i64),
            Cell::Float(dt),
            median.map_or(Cell::Empty, Cell::Float),
            Cell::Int(ns.iter().filter(|n| n.is_some()).count() as i64),
            Cell::Int(row_cells.len() as i64),
            Cell::Float(bound),
        ]);
        if let Some(m) = median {
            median_points.push((dt, m));
        }
        bound_points.push((dt, bound));
    }
    out.tables.push(("sample_complexity".into(), summary));
    out.tables.push(("sample_complexity_median".into(), medians));
    out.tables.push(("learning_curves".into(), curves));
    out.cells = results.into_iter().map(|(_, c)| c.record).collect();

    out.plots.push((
        "convergence".into(),
        LinePlot {
            title: "Distance to the finest-step value function".into(),
            x_label: "dt".into(),
            y_label: "sup |V_dt - V_ref|".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                label: "sup-norm distance".into(),
                points: report.rows.iter().map(|r| (r.dt, r.sup_dist_to_ref)).collect(),
            }],
        },
    ));
    // shift the bound onto the median at the largest step so only the
    // slopes are compared
    let mut series = vec![Series {
        label: "median N".into(),
        points: median_points.clone(),
    }];
    if let (Some(&(dt0, m0)), Some(&(_, b0))) = (median_points.first(), bound_points.first()) {
        if dt0 == grid[0] {
            series.push(Series {
                label: "bound (shifted)".into(),
                points: bound_points.iter().map(|&(dt, b)| (dt, m0 * 10f64.powf(b - b0))).collect(),
            });
        }
    }
    out.plots.push((
        "sample_complexity".into(),
        LinePlot {
            title: "Steps to reach the value threshold".into(),
            x_label: "dt".into(),
            y_label: "N".into(),
            log_x: true,
            log_y: true,
            series,
        },
    ));
    Ok(out)
}

pub fn cmd_game_solve(cfg: &ExperimentConfig, dt: Option<f64>) -> Result<Output> {
    let grid = cfg.dt_grid.points();
    let dt = dt.unwrap_or_else(|| grid.iter().copied().fold(f64::INFINITY, f64::min));
    let model = build_game_model(&cfg.game, dt)?;
    let sol = game_value_iteration(&model, cfg.solver.game_tol, cfg.solver.game_max_iter)?;
    let res = game_hjb_residual(&cfg.game, &sol)?;
    let mut eq = Table::new(&["dt", "state_id", "equilibria"]);
    let v = [&sol.values[0].values[..], &sol.values[1].values[..]];
    for s in 0..model.n_states() {
        let n = all_equilibria(&continuation_game(&model, s, v), STAGE_TOL)?.len();
        eq.push(vec![Cell::Float(dt), Cell::Int(s as i64), Cell::Int(n as i64)]);
    }
    Ok(Output {
        tables: vec![("game_solution".into(), sol.to_table(dt, res)), ("game_equilibria".into(), eq)],
        warnings: model.warnings,
        ..Default::default()
    })
}

pub fn cmd_game_sweep(cfg: &ExperimentConfig) -> Result<Output> {
    let rows = game_sweep(&cfg.game, &cfg.dt_grid.points(), cfg.solver.game_tol, cfg.solver.game_max_iter)?;
    let reference = rows.last().and_then(|r| r.solution.pure_profile());
    let mut solution = Table::new(&["dt", "state_id", "player", "action_id", "probability", "v_star", "residual"]);
    let mut residuals = Table::new(&["dt", "residual_1", "residual_2", "pure", "same_profile_as_ref", "values_equal"]);
    for r in &rows {
        solution.extend(r.solution.to_table(r.dt, r.residuals));
        let pure = r.solution.pure_profile();
        let sym = r.solution.values[0]
            .values
            .iter()
            .zip(&r.solution.values[1].values)
            .all(|(a, b)| (a - b).abs() <= 1e-9);
        residuals.push(vec![
            Cell::Float(r.dt),
            Cell::Float(r.residuals[0]),
            Cell::Float(r.residuals[1]),
            Cell::Bool(pure.is_some()),
            Cell::Bool(pure.is_some() && pure == reference),
            Cell::Bool(sym),
        ]);
    }
    let warnings = rows.first().map(|r| r.warnings.clone()).unwrap_or_default();
    Ok(Output {
        tables: vec![("game_solution".into(), solution), ("game_residuals".into(), residuals)],
        warnings,
        ..Default::default()
    })
}

pub fn cmd_game_nashq(cfg: &ExperimentConfig) -> Result<Output> {
    let dt = cfg.nash_q.dt;
    let model = build_game_model(&cfg.game, dt)?;
    let reference = game_value_iteration(&model, cfg.solver.game_tol, cfg.solver.game_max_iter)?;
    let labels = &cfg.seeds.labels;
    let runs: Vec<_> = labels
        .par_iter()
        .map(|&label| {
            let start = Instant::now();
            let seed = derive_seed(cfg.seeds.master, 0, label, "nashq");
            let r = run_nash_qlearning(&model, &cfg.nash_q.config, seed, &reference);
            (label, seed, r, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut curves = Table::new(&["seed", "step", "player", "value_error", "policy_error"]);
    let mut finals = Table::new(&["seed", "player", "value_error", "policy_error"]);
    let mut out = Output {
        warnings: model.warnings.clone(),
        ..Default::default()
    };
    let mut plot_series = Vec::new();
    for (label, seed, r, seconds) in runs {
        let mut record = CellRecord {
            experiment: "nashq".into(),
            dt_index: 0,
            dt,
            seed_label: label,
            seed,
            status: "ok".into(),
            error: None,
            seconds,
        };
        match r {
            Ok(o) => {
                for p in &o.curve.points {
                    curves.push(vec![
                        Cell::Int(label as i64),
                        Cell::Int(p.step as i64),
                        Cell::Int(p.player as i64 + 1),
                        Cell::Float(p.value_error),
                        Cell::Float(p.policy_error),
                    ]);
                }
                if let Some(fe) = o.curve.final_errors() {
                    for (k, (v, p)) in fe.iter().enumerate() {
                        finals.push(vec![
                            Cell::Int(label as i64),
                            Cell::Int(k as i64 + 1),
                            Cell::Float(*v),
                            Cell::Float(*p),
                        ]);
                    }
                }
                if plot_series.is_empty() {
                    for k in 0..2 {
                        plot_series.push(Series {
                            label: format!("player {} (seed {label})", k + 1),
                            points: o
                                .curve
                                .points
                                .iter()
                                .filter(|p| p.player == k && p.step > 0)
                                .map(|p| (p.step as f64, p.value_error))
                                .collect(),
                        });
                    }
                }
            }
            Err(e) => {
                log::error!("nashq seed {label} failed: {e}");
                record.status = "failed".into();
                record.error = Some(e.to_string());
            }
        }
        out.cells.push(record);
    }
    out.tables.push(("nashq_curves".into(), curves));
    out.tables.push(("nashq_final".into(), finals));
    out.plots.push((
        "nashq".into(),
        LinePlot {
            title: "Nash-Q value error".into(),
            x_label: "step".into(),
            y_label: "max_s |V - V*|".into(),
            log_x: true,
            log_y: false,
            series: plot_series,
        },
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_component() {
        let base = derive_seed(1, 2, 3, "sweep");
        assert_eq!(base, derive_seed(1, 2, 3, "sweep"));
        assert_ne!(base, derive_seed(2, 2, 3, "sweep"));
        assert_ne!(base, derive_seed(1, 3, 3, "sweep"));
        assert_ne!(base, derive_seed(1, 2, 4, "sweep"));
        assert_ne!(base, derive_seed(1, 2, 3, "nashq"));
    }

    #[test]
    fn median_with_censoring() {
        assert_eq!(censored_median(&[Some(3), Some(1), Some(2)]), Some(2.0));
        assert_eq!(censored_median(&[Some(3), None, Some(2)]), Some(3.0));
        assert_eq!(censored_median(&[None, None, Some(2)]), None);
        assert_eq!(censored_median(&[Some(1), Some(3)]), Some(2.0));
        assert_eq!(censored_median(&[]), None);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn prepare_rejects_bad_overrides() {
        let cfg = ExperimentConfig::baseline();
        let bad_dt = prepare(cfg.clone(), &Command::Solve { dt: 0.5 }, &Overrides::default());
        assert!(matches!(bad_dt, Err(Error::Config(_))));
        let ov = Overrides {
            seeds: Some(vec![]),
            ..Default::default()
        };
        assert!(matches!(prepare(cfg.clone(), &Command::Sweep, &ov), Err(Error::Config(_))));
        let ov = Overrides {
            jobs: Some(0),
            ..Default::default()
        };
        assert!(matches!(prepare(cfg, &Command::Sweep, &ov), Err(Error::Config(_))));
    }
}
