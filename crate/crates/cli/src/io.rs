//! Load-profile ingestion and CSV/JSON emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use composite_charging::sweep::SweepResult;
use composite_charging::verify::TraceRow;
use composite_charging::{EquilibriumReport, GameSpec};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Number of significant digits in CSV output.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` with 12 significant digits, dropping trailing zeros; plain
/// notation for moderate magnitudes, scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Reads a base-load profile from a CSV with a `t` column numbered `1..T` in
/// order and a `load` column (a `non_ev` column is accepted too, so emitted
/// loads files can be read back).
pub fn load_profile_csv(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let t_col = column("t").ok_or_else(|| CliError::profile(path, "missing `t` column"))?;
    let load_col = column("load")
        .or_else(|| column("non_ev"))
        .ok_or_else(|| CliError::profile(path, "missing `load` column"))?;

    let mut loads = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let field = |col: usize| record.get(col).unwrap_or("");
        let t: usize = field(t_col).parse().map_err(|_| {
            CliError::profile(path, format!("line {line}: `t` is not a positive integer: {:?}", field(t_col)))
        })?;
        let expected = loads.len() + 1;
        if t < expected {
            return Err(CliError::profile(
                path,
                format!("line {line}: t = {t} is out of order (expected {expected})"),
            ));
        }
        if t > expected {
            return Err(CliError::profile(
                path,
                format!("line {line}: missing rows, t jumps from {} to {t}", expected - 1),
            ));
        }
        let load: f64 = field(load_col).parse().map_err(|_| {
            CliError::profile(path, format!("line {line}: load is not numeric: {:?}", field(load_col)))
        })?;
        if !load.is_finite() {
            return Err(CliError::profile(path, format!("line {line}: load is not finite")));
        }
        loads.push(load);
    }
    if loads.is_empty() {
        return Err(CliError::profile(path, "no rows"));
    }
    Ok(loads)
}

/// Divides by the maximum so the peak load is 1; returns the divisor.
pub fn normalize_to_unit_max(loads: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = loads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(CliError::Config(format!(
            "cannot normalize a load profile whose maximum is {max}"
        )));
    }
    Ok((loads.iter().map(|l| l / max).collect(), max))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Per-slot loads: base load, EV load of the individuals and of the
/// coalitions (both scaled by `P`), and the total. The base load is written
/// at full precision so the file reads back to the same profile.
pub fn write_loads_csv(path: &Path, spec: &GameSpec, report: &EquilibriumReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let k = spec.num_coalitions();
    let mut header = vec!["t".to_string(), "non_ev".into(), "individuals".into(), "coalition".into()];
    if k > 1 {
        header.extend((1..=k).map(|i| format!("coalition_{i}")));
    }
    header.push("total".into());
    w.write_record(&header)?;
    let p = spec.power();
    let per_player = &report.loads.per_player;
    for (t, &base) in spec.base_load().iter().enumerate() {
        let coalitions: Vec<f64> = (1..=k).map(|i| p * per_player[i][t]).collect();
        let mut row = vec![
            (t + 1).to_string(),
            base.to_string(),
            fmt_num(p * per_player[0][t]),
            fmt_num(coalitions.iter().sum()),
        ];
        if k > 1 {
            row.extend(coalitions.iter().map(|c| fmt_num(*c)));
        }
        row.push(fmt_num(base + p * report.loads.aggregate[t]));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

const STATUS_COLUMN: usize = 10;

/// One row per grid point. Costs are the reduced ones when the game has the
/// three-slot shape, the full ones otherwise. Per-strategy weights are added
/// when there are more than two start slots.
pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let strategies = result
        .points()
        .next()
        .map_or(0, |p| p.coalition_flow.len());
    let mut header: Vec<String> = [
        "M",
        "x1",
        "x0",
        "cost_individuals",
        "cost_coalition",
        "cost_social",
        "normalized_individuals",
        "normalized_coalition",
        "normalized_social",
        "regime",
        "status",
        "vi_gap",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if strategies > 2 {
        header.extend((1..=strategies).map(|s| format!("x1_s{s}")));
        header.extend((1..=strategies).map(|s| format!("x0_s{s}")));
    }
    header.push("error".into());
    w.write_record(&header)?;
    for record in &result.records {
        let mut row = vec![fmt_num(record.m)];
        match &record.outcome {
            Ok(p) => {
                let c = p.headline_costs();
                let n = result.normalized(p).expect("a successful point implies a normalizer");
                row.extend([p.coalition_peak(), p.individuals_peak(), c.individuals, c.coalition, c.social]
                    .map(fmt_num));
                row.extend([n.individuals, n.coalition, n.social].map(fmt_num));
                row.push(p.regime.map_or(String::new(), |r| r.tag().to_string()));
                row.push(status_tag(p.status).into());
                row.push(fmt_num(p.vi_gap));
                if strategies > 2 {
                    row.extend(p.coalition_flow.iter().map(|x| fmt_num(*x)));
                    row.extend(p.individuals_flow.iter().map(|x| fmt_num(*x)));
                }
                row.push(String::new());
            }
            Err(e) => {
                row.resize(header.len(), String::new());
                row[STATUS_COLUMN] = "error".into();
                row[header.len() - 1] = e.clone();
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One row per recorded iteration: the VI gap and every player's flow,
/// `x{player}_s{start}` with player 0 the individuals.
pub fn write_trace_csv(path: &Path, spec: &GameSpec, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["iteration".to_string(), "gap".into()];
    for i in 0..spec.num_players() {
        header.extend((1..=spec.num_strategies()).map(|s| format!("x{i}_s{s}")));
    }
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.iteration.to_string(), fmt_num(row.gap)];
        for flow in &row.flows {
            record.extend(flow.iter().map(|x| fmt_num(*x)));
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn status_tag(status: composite_charging::SolverStatus) -> &'static str {
    use composite_charging::SolverStatus::*;
    match status {
        Converged => "converged",
        MaxIterReached => "max_iter_reached",
        Analytic => "analytic",
    }
}
