//! Reader and writer for the MATPOWER `.m` case format (version 2 column
//! layout for `bus`, `gen`, `branch` and `gencost`).

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Branch, Bus, BusRole, CostPoly, Generator, Grid, GridError, Load, Status};

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;

#[derive(Debug)]
enum Value {
    Scalar(String),
    Matrix(Vec<Vec<f64>>),
    Other,
}

fn malformed(msg: impl Into<String>) -> GridError {
    GridError::MalformedCase(msg.into())
}

/// Drops `%` comments while leaving quoted strings intact.
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_quote = false;
        for ch in line.chars() {
            match ch {
                '\'' => in_quote = !in_quote,
                '%' if !in_quote => break,
                _ => {}
            }
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

fn matching_close(bytes: &[u8], open_at: usize, open: u8, close: u8) -> Result<usize, GridError> {
    let mut depth = 0usize;
    for (i, &b) in bytes.iter().enumerate().skip(open_at) {
        if b == open {
            depth += 1;
        } else if b == close {
            depth -= 1;
            if depth == 0 {
                return Ok(i);
            }
        }
    }
    Err(malformed(format!("unbalanced '{}'", open as char)))
}

fn parse_matrix(body: &str, name: &str) -> Result<Vec<Vec<f64>>, GridError> {
    if body.contains('[') || body.contains(']') {
        return Err(malformed(format!("unbalanced brackets in matrix '{name}'")));
    }
    let mut rows = Vec::new();
    for row in body.split(|c| c == ';' || c == '\n') {
        let cells: Vec<&str> = row
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty() && *s != "...")
            .collect();
        if cells.is_empty() {
            continue;
        }
        let parsed = cells
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| malformed(format!("non-numeric cell '{c}' in matrix '{name}'")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(parsed);
    }
    Ok(rows)
}

fn parse_assignments(text: &str) -> Result<HashMap<String, Value>, GridError> {
    let clean = strip_comments(text);
    let bytes = clean.as_bytes();
    let mut fields = HashMap::new();
    let mut pos = 0;
    while let Some(found) = clean[pos..].find("mpc.") {
        let name_start = pos + found + 4;
        let name_end = clean[name_start..]
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .map_or(clean.len(), |e| name_start + e);
        let name = clean[name_start..name_end].to_string();
        let rest = clean[name_end..].trim_start();
        if !rest.starts_with('=') {
            pos = name_end;
            continue;
        }
        let mut value_start = clean.len() - rest.len() + 1;
        while value_start < bytes.len() && (bytes[value_start] as char).is_whitespace() {
            value_start += 1;
        }
        let (value, next) = match bytes.get(value_start) {
            Some(b'[') => {
                let close = matching_close(bytes, value_start, b'[', b']')?;
                let matrix = parse_matrix(&clean[value_start + 1..close], &name)?;
                (Value::Matrix(matrix), close + 1)
            }
            Some(b'{') => {
                let close = matching_close(bytes, value_start, b'{', b'}')?;
                (Value::Other, close + 1)
            }
            Some(_) => {
                let end = clean[value_start..]
                    .find(|c| c == ';' || c == '\n')
                    .map_or(clean.len(), |e| value_start + e);
                let raw = clean[value_start..end].trim().trim_matches('\'').to_string();
                (Value::Scalar(raw), end)
            }
            None => return Err(malformed(format!("assignment to '{name}' has no value"))),
        };
        fields.insert(name, value);
        pos = next;
    }
    Ok(fields)
}

fn take_matrix(
    fields: &mut HashMap<String, Value>,
    name: &str,
    min_cols: usize,
) -> Result<Vec<Vec<f64>>, GridError> {
    match fields.remove(name) {
        Some(Value::Matrix(rows)) => {
            if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() < min_cols) {
                return Err(malformed(format!(
                    "row {} of '{name}' has {} columns, need at least {min_cols}",
                    i + 1,
                    row.len()
                )));
            }
            Ok(rows)
        }
        Some(_) => Err(malformed(format!("'{name}' is not a matrix"))),
        None => Err(malformed(format!("missing required matrix '{name}'"))),
    }
}

fn bus_role(code: f64, id: i64) -> Result<BusRole, GridError> {
    match code as i64 {
        1 => Ok(BusRole::Pq),
        2 => Ok(BusRole::Pv),
        3 => Ok(BusRole::Slack),
        4 => Err(malformed(format!("bus {id} is isolated (type 4); isolated buses are not supported"))),
        other => Err(malformed(format!("bus {id} has unknown type {other}"))),
    }
}

fn as_id(v: f64, what: &str) -> Result<i64, GridError> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(malformed(format!("{what} '{v}' is not an integer")));
    }
    Ok(v as i64)
}

fn parse_cost(row: &[f64], gen: usize) -> Result<CostPoly, GridError> {
    if row.len() < 4 {
        return Err(malformed(format!("gencost row {} is too short", gen + 1)));
    }
    if row[0] as i64 != 2 {
        return Err(malformed(format!(
            "gencost row {}: only polynomial (model 2) costs are supported",
            gen + 1
        )));
    }
    let n = as_id(row[3], "gencost coefficient count")?;
    if n < 0 || row.len() < 4 + n as usize {
        return Err(malformed(format!("gencost row {}: declares {n} coefficients", gen + 1)));
    }
    let coeffs = &row[4..4 + n as usize];
    if n > 3 {
        log::warn!("gencost row {}: degree {} polynomial truncated to quadratic", gen + 1, n - 1);
    }
    // Coefficients are listed from the highest degree down to the constant.
    let from_end = |k: usize| if coeffs.len() > k { coeffs[coeffs.len() - 1 - k] } else { 0.0 };
    Ok(CostPoly::new(from_end(2), from_end(1), from_end(0)))
}

/// Parses MATPOWER case text into a validated [`Grid`].
pub fn parse_matpower(text: &str) -> Result<Grid, GridError> {
    let mut fields = parse_assignments(text)?;

    let base_mva = match fields.remove("baseMVA") {
        Some(Value::Scalar(s)) => s
            .parse::<f64>()
            .map_err(|_| malformed(format!("baseMVA '{s}' is not numeric")))?,
        Some(_) => return Err(malformed("baseMVA must be a scalar")),
        None => return Err(malformed("missing required field 'baseMVA'")),
    };
    let bus_rows = take_matrix(&mut fields, "bus", BUS_COLS)?;
    let gen_rows = take_matrix(&mut fields, "gen", GEN_COLS)?;
    let branch_rows = take_matrix(&mut fields, "branch", BRANCH_COLS)?;
    let cost_rows = match fields.contains_key("gencost") {
        true => Some(take_matrix(&mut fields, "gencost", 4)?),
        false => None,
    };
    fields.remove("version");
    let mut unknown: Vec<&String> = fields.keys().collect();
    unknown.sort();
    for name in unknown {
        log::warn!("ignoring unsupported case field 'mpc.{name}'");
    }

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut loads = Vec::new();
    for row in &bus_rows {
        let id = as_id(row[0], "bus id")?;
        let role = bus_role(row[1], id)?;
        let (pd, qd) = (row[2], row[3]);
        if pd != 0.0 || qd != 0.0 {
            loads.push(Load { id: loads.len(), bus: id, pd, qd });
        }
        buses.push(Bus {
            id,
            role,
            shunt_g: row[4] / base_mva,
            shunt_b: row[5] / base_mva,
            base_kv: row[9],
            vm_max: row[11],
            vm_min: row[12],
        });
    }

    if let Some(rows) = &cost_rows {
        if rows.len() < gen_rows.len() {
            return Err(malformed(format!(
                "gencost has {} rows for {} generators",
                rows.len(),
                gen_rows.len()
            )));
        }
        if rows.len() > gen_rows.len() {
            log::warn!("ignoring {} reactive-power gencost rows", rows.len() - gen_rows.len());
        }
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for (i, row) in gen_rows.iter().enumerate() {
        let cost = match &cost_rows {
            Some(rows) => parse_cost(&rows[i], i)?,
            None => CostPoly::default(),
        };
        generators.push(Generator {
            id: i,
            bus: as_id(row[0], "generator bus")?,
            pg: row[1],
            qg: row[2],
            q_max: row[3],
            q_min: row[4],
            vg: row[5],
            status: Status::from_flag(row[7] > 0.0),
            p_max: row[8],
            p_min: row[9],
            cost,
        });
    }

    let full_circle = 2.0 * std::f64::consts::PI;
    let mut branches = Vec::with_capacity(branch_rows.len());
    for (i, row) in branch_rows.iter().enumerate() {
        let (ang_min, ang_max) = if row.len() >= 13 {
            (row[11].to_radians(), row[12].to_radians())
        } else {
            (-full_circle, full_circle)
        };
        branches.push(Branch {
            id: i,
            from_bus: as_id(row[0], "branch from bus")?,
            to_bus: as_id(row[1], "branch to bus")?,
            r: row[2],
            x: row[3],
            b_charge: row[4],
            rate_a: row[5],
            tap: row[8],
            shift: row[9].to_radians(),
            status: Status::from_flag(row[10] > 0.0),
            ang_min,
            ang_max,
        });
    }

    let grid = Grid { base_mva, buses, branches, generators, loads };
    grid.validate().map_err(|e| match e {
        GridError::Invalid(msg) => malformed(msg),
        other => other,
    })?;
    Ok(grid)
}

fn row(out: &mut String, cells: &[f64]) {
    out.push('\t');
    for (i, c) in cells.iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        write!(out, "{c}").unwrap();
    }
    out.push_str(";\n");
}

/// Writes a grid back out as MATPOWER case text.
pub fn serialize_matpower(grid: &Grid) -> String {
    let demand = grid.bus_demand();
    let mut out = String::new();
    out.push_str("function mpc = case_export\n\nmpc.version = '2';\n\n");
    writeln!(out, "mpc.baseMVA = {};\n", grid.base_mva).unwrap();

    out.push_str("%% bus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for (bus, (pd, qd)) in grid.buses.iter().zip(&demand) {
        let kind = match bus.role {
            BusRole::Pq => 1.0,
            BusRole::Pv => 2.0,
            BusRole::Slack => 3.0,
        };
        row(
            &mut out,
            &[
                bus.id as f64,
                kind,
                *pd,
                *qd,
                bus.shunt_g * grid.base_mva,
                bus.shunt_b * grid.base_mva,
                1.0,
                1.0,
                0.0,
                bus.base_kv,
                1.0,
                bus.vm_max,
                bus.vm_min,
            ],
        );
    }
    out.push_str("];\n\n");

    out.push_str("%% bus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &grid.generators {
        row(
            &mut out,
            &[
                g.bus as f64,
                g.pg,
                g.qg,
                g.q_max,
                g.q_min,
                g.vg,
                grid.base_mva,
                if g.status.is_on() { 1.0 } else { 0.0 },
                g.p_max,
                g.p_min,
            ],
        );
    }
    out.push_str("];\n\n");

    out.push_str(
        "%% fbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n",
    );
    for br in &grid.branches {
        row(
            &mut out,
            &[
                br.from_bus as f64,
                br.to_bus as f64,
                br.r,
                br.x,
                br.b_charge,
                br.rate_a,
                br.rate_a,
                br.rate_a,
                br.tap,
                br.shift.to_degrees(),
                if br.status.is_on() { 1.0 } else { 0.0 },
                br.ang_min.to_degrees(),
                br.ang_max.to_degrees(),
            ],
        );
    }
    out.push_str("];\n\n");

    out.push_str("%% 2\tstartup\tshutdown\tn\tc2\tc1\tc0\nmpc.gencost = [\n");
    for g in &grid.generators {
        row(&mut out, &[2.0, 0.0, 0.0, 3.0, g.cost.c2, g.cost.c1, g.cost.c0]);
    }
    out.push_str("];\n");
    out
}
