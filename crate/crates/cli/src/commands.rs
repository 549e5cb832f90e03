use serde_json::{json, Value};

use seqfisher::estimate::{monte_carlo, EstimatorKind, McConfig};
use seqfisher::fisher::{ChainModel, FisherReport, Flag};
use seqfisher::models::{thermal_fi, RabiBasis, RabiModel, ThermometryModel};
use seqfisher::scan::{
    feedback_optimum, flag_near_zero, maximize_1d, scan_1d, Axis, ScanRecord, Spacing, NEAR_ZERO_FRACTION,
};

use crate::config::{Format, ModelKind, Params};
use crate::output::{Cell, Table};
use crate::{Failure, Outcome};

pub const DEFAULT_SEED: u64 = 20_240_611;

struct Grid {
    min: f64,
    max: f64,
    points: usize,
    log: bool,
}

const THERMO_GRID: Grid = Grid { min: 0.05, max: 20.0, points: 200, log: true };
const RABI_GRID: Grid = Grid { min: 0.025, max: 10.0, points: 400, log: false };
const NBAR_GRID: Grid = Grid { min: 0.1, max: 10.0, points: 21, log: true };
const DEFAULT_GRID_2D: usize = 25;

pub fn usage<T>(r: seqfisher::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

pub fn numeric<T>(r: seqfisher::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Numeric(e.to_string()))
}

fn axis(name: &str, min: f64, max: f64, points: usize, log: bool) -> Result<Axis, Failure> {
    let spacing = if log { Spacing::Log } else { Spacing::Linear };
    usage(Axis::new(name, min, max, points, spacing))
}

fn tau_axis(p: &Params, d: Grid) -> Result<Axis, Failure> {
    axis(
        "gtau",
        p.tau_min.unwrap_or(d.min),
        p.tau_max.unwrap_or(d.max),
        p.tau_points.unwrap_or(d.points),
        p.tau_log.unwrap_or(d.log),
    )
}

fn single_level(p: &Params, default: usize) -> Result<usize, Failure> {
    match p.levels.as_deref() {
        None => Ok(default),
        Some([d]) => Ok(*d),
        Some(_) => Err(Failure::Usage("this command takes a single --levels value".into())),
    }
}

fn table_format(p: &Params) -> Format {
    p.format.unwrap_or(Format::Csv)
}

pub fn json_only(p: &Params, command: &str) -> Result<(), Failure> {
    match p.format {
        Some(Format::Csv) => Err(Failure::Usage(format!("{command} writes JSON only"))),
        _ => Ok(()),
    }
}

fn flag_names(flags: &[Flag]) -> Vec<String> {
    flags.iter().map(Flag::to_string).collect()
}

fn failed_points<T>(records: &[ScanRecord<T>]) -> Option<String> {
    let n = records.iter().filter(|r| r.value.is_none()).count();
    (n > 0).then(|| format!("{n} of {} grid points failed", records.len()))
}

pub fn thermo_scan(p: &Params) -> Result<Outcome, Failure> {
    thermometry_scan(p, p.coarse.unwrap_or(false), false)
}

pub fn thermo_coarse(p: &Params) -> Result<Outcome, Failure> {
    thermometry_scan(p, true, true)
}

fn thermometry_scan(p: &Params, coarse: bool, compare: bool) -> Result<Outcome, Failure> {
    let levels = single_level(p, 4)?;
    let nbar = p.nbar.unwrap_or(1.0);
    let full = usage(ThermometryModel::new(levels, nbar))?;
    let model = if coarse { full.clone().coarse() } else { full.clone() };
    let fth = usage(thermal_fi(levels, nbar))?;
    let axis = tau_axis(p, THERMO_GRID)?;
    let scan = usage(scan_1d(|t| model.with_tau(t)?.fisher(), &axis))?;
    let reference = if compare {
        Some(usage(scan_1d(|t| Ok(full.with_tau(t)?.fisher()?.f21), &axis))?)
    } else {
        None
    };

    let mut columns = vec!["gtau", "f21_ratio", "f21_g_ratio", "f21_e_ratio"];
    if compare {
        columns.push("full_f21_ratio");
    }
    columns.push("flags");
    let mut table = Table::new(&columns)
        .meta("command", if compare { "thermo-coarse" } else { "thermo-scan" })
        .meta("levels", levels)
        .meta("nbar", nbar)
        .meta("coarse", coarse)
        .meta("f_th", fth);
    for (i, r) in scan.records.iter().enumerate() {
        let v = r.value.as_ref();
        let ratio = |f: fn(&FisherReport) -> f64| Cell::Num(v.map(|v| f(v) / fth));
        let mut row = vec![
            Cell::Num(Some(r.point[0])),
            ratio(|v| v.f21),
            ratio(|v| v.f21_by_prev[0]),
            ratio(|v| v.f21_by_prev[1]),
        ];
        let mut flags = flag_names(&r.flags);
        if let Some(reference) = &reference {
            let rec = &reference.records[i];
            row.push(Cell::Num(rec.value.map(|f| f / fth)));
            flags.extend(rec.flags.iter().map(|f| format!("full:{f}")));
        }
        row.push(Cell::Flags(flags));
        table.rows.push(row);
    }
    let failure = failed_points(&scan.records)
        .or_else(|| reference.as_ref().and_then(|r| failed_points(&r.records)));
    Ok(Outcome { payload: table.render(table_format(p)), failure })
}

pub fn thermo_feedback(p: &Params) -> Result<Outcome, Failure> {
    let levels = p.levels.clone().unwrap_or_else(|| vec![3, 4, 5, 6]);
    if levels.is_empty() {
        return Err(Failure::Usage("no levels given".into()));
    }
    let nbars = match p.nbar {
        Some(n) => vec![n],
        None => axis(
            "nbar",
            p.nbar_min.unwrap_or(NBAR_GRID.min),
            p.nbar_max.unwrap_or(NBAR_GRID.max),
            p.nbar_points.unwrap_or(NBAR_GRID.points),
            NBAR_GRID.log,
        )?
        .points(),
    };
    let coarse = p.coarse.unwrap_or(false);
    let tau = tau_axis(p, THERMO_GRID)?;
    let grid_2d = p.grid_2d.unwrap_or(DEFAULT_GRID_2D);
    if grid_2d < 2 {
        return Err(Failure::Usage("--grid-2d needs at least 2 points".into()));
    }
    let mut models = Vec::new();
    for &d in &levels {
        for &n in &nbars {
            let m = usage(ThermometryModel::new(d, n))?;
            models.push(if coarse { m.coarse() } else { m });
        }
    }

    let mut table = Table::new(&[
        "levels", "nbar", "f_th", "f_star", "f_sharp", "ratio", "tau_star", "tau_g", "tau_e", "tau_ratio", "flags",
    ])
    .meta("command", "thermo-feedback")
    .meta("coarse", coarse)
    .meta("grid_2d", grid_2d);
    let mut failed = 0;
    for m in &models {
        let fth = usage(thermal_fi(m.levels(), m.nbar()))?;
        let mut row = vec![Cell::Int(m.levels()), Cell::Num(Some(m.nbar())), Cell::Num(Some(fth))];
        match feedback_optimum(|a, b| Ok(m.with_schedule(a, b)?.fisher()?.f21), &tau, grid_2d) {
            Ok((star, sharp)) => {
                let (tg, te) = (sharp.point[0], sharp.point[1]);
                let mut flags: Vec<String> = star.flags.iter().map(|f| format!("star:{f}")).collect();
                flags.extend(sharp.flags.iter().map(|f| format!("sharp:{f}")));
                row.extend([
                    Cell::Num(Some(star.value)),
                    Cell::Num(Some(sharp.value)),
                    Cell::Num(Some(sharp.value / star.value)),
                    Cell::Num(Some(star.point[0])),
                    Cell::Num(Some(tg)),
                    Cell::Num(Some(te)),
                    Cell::Num(Some(tg / te)),
                    Cell::Flags(flags),
                ]);
            }
            Err(e) => {
                failed += 1;
                row.extend((0..7).map(|_| Cell::Num(None)));
                row.push(Cell::Flags(vec![Flag::EvaluationFailed { message: e.to_string() }.to_string()]));
            }
        }
        table.rows.push(row);
    }
    let failure = (failed > 0).then(|| format!("{failed} of {} optimizations failed", models.len()));
    Ok(Outcome { payload: table.render(table_format(p)), failure })
}

fn parse_basis(p: &Params) -> Result<RabiBasis, Failure> {
    match &p.basis {
        Some(s) => usage(s.parse()),
        None => Ok(RabiBasis::Computational),
    }
}

pub fn rabi_scan(p: &Params) -> Result<Outcome, Failure> {
    let omega = p.omega.unwrap_or(1.0);
    let basis = parse_basis(p)?;
    let model = usage(RabiModel::new(omega, basis, 1.0))?;
    let axis = tau_axis(p, RABI_GRID)?;
    let mut scan = usage(scan_1d(|t| model.with_tau(t)?.fisher(), &axis))?;
    flag_near_zero(&mut scan, NEAR_ZERO_FRACTION);

    let mut table = Table::new(&["gtau", "f21", "f21_0", "f21_1", "flags"])
        .meta("command", "rabi-scan")
        .meta("omega", omega)
        .meta("basis", basis.to_string());
    for r in &scan.records {
        let v = r.value.as_ref();
        table.rows.push(vec![
            Cell::Num(Some(r.point[0])),
            Cell::Num(v.map(|v| v.f21)),
            Cell::Num(v.map(|v| v.f21_by_prev[0])),
            Cell::Num(v.map(|v| v.f21_by_prev[1])),
            Cell::Flags(flag_names(&r.flags)),
        ]);
    }
    let failure = failed_points(&scan.records);
    Ok(Outcome { payload: table.render(table_format(p)), failure })
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, Failure> {
    let bad = || Failure::Usage(format!("unknown estimator {s:?}; use mle, inversion:NEXT,PREV or empirical:OUTCOME"));
    let index = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once(':') {
        None if s == "mle" => Ok(EstimatorKind::Mle),
        None if s == "inversion" => Ok(EstimatorKind::TransitionInversion { next: 0, prev: 0 }),
        None if s == "empirical" => Ok(EstimatorKind::EmpiricalInversion { outcome: 0 }),
        Some(("inversion", rest)) => {
            let (next, prev) = rest.split_once(',').ok_or_else(bad)?;
            Ok(EstimatorKind::TransitionInversion { next: index(next)?, prev: index(prev)? })
        }
        Some(("empirical", rest)) => Ok(EstimatorKind::EmpiricalInversion { outcome: index(rest)? }),
        _ => Err(bad()),
    }
}

/// Waiting time maximizing `F_{2|1}` on the grid unless fixed by `--tau`.
fn optimal_tau<F>(p: &Params, f: F) -> Result<f64, Failure>
where
    F: Fn(f64) -> seqfisher::Result<f64> + Sync,
{
    if let Some(t) = p.tau {
        return Ok(t);
    }
    Ok(numeric(maximize_1d(f, &tau_axis(p, THERMO_GRID)?))?.point[0])
}

fn run_mc<M: ChainModel + Sync>(model: &M, cfg: McConfig, setup: Value) -> Result<Outcome, Failure> {
    let report = numeric(monte_carlo(model, &cfg))?;
    let doc = json!({ "command": "montecarlo", "setup": setup, "report": report });
    Ok(Outcome { payload: crate::output::Payload::Json(doc), failure: None })
}

pub fn montecarlo(p: &Params) -> Result<Outcome, Failure> {
    json_only(p, "montecarlo")?;
    let n = p.n.unwrap_or(10_000);
    let trajectories = p.trajectories.unwrap_or(500);
    if trajectories < 2 {
        return Err(Failure::Usage("need at least 2 trajectories for a variance".into()));
    }
    if n < 2 {
        return Err(Failure::Usage("need at least 2 outcomes per trajectory".into()));
    }
    let estimator = parse_estimator(p.estimator.as_deref().unwrap_or("mle"))?;
    let seed = p.seed.unwrap_or(DEFAULT_SEED);
    let cfg = |theta0: f64| McConfig {
        theta0,
        estimator,
        n_per_trajectory: n,
        n_trajectories: trajectories,
        seed,
        bracket: (theta0 / 100.0, theta0 * 100.0),
    };
    match p.model.unwrap_or(ModelKind::Thermo) {
        ModelKind::Thermo => {
            let levels = single_level(p, 2)?;
            let nbar = p.nbar.unwrap_or(1.0);
            let base = usage(ThermometryModel::new(levels, nbar))?;
            let base = if p.coarse.unwrap_or(false) { base.coarse() } else { base };
            let tau = optimal_tau(p, |t| Ok(base.with_tau(t)?.fisher()?.f21))?;
            let model = usage(base.with_tau(tau))?;
            let setup = json!({
                "model": "thermo", "levels": levels, "nbar": nbar,
                "measurement": model.measurement(), "gtau": tau,
            });
            run_mc(&model, cfg(nbar), setup)
        }
        ModelKind::Rabi => {
            let omega = p.omega.unwrap_or(1.0);
            let basis = parse_basis(p)?;
            let base = usage(RabiModel::new(omega, basis, 1.0))?;
            let tau = optimal_tau(p, |t| Ok(base.with_tau(t)?.fisher()?.f21))?;
            let model = usage(base.with_tau(tau))?;
            let setup = json!({ "model": "rabi", "omega": omega, "basis": basis.to_string(), "gtau": tau });
            run_mc(&model, cfg(omega), setup)
        }
    }
}
