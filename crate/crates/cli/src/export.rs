//! Plot-ready file formats: per-trajectory CSV, jump-event CSV, field-map
//! CSV and a JSON manifest. Floats are written in shortest round-trip
//! decimal form, so re-reading a file reproduces the in-memory values
//! exactly.

use std::fmt::Write as _;

#[cfg(test)]
use anyhow::{anyhow, bail, Context, Result};
use zigzag_core::analysis::FieldMap;
use zigzag_core::guidance::Chirality;
#[cfg(test)]
use zigzag_core::integrator::SampleRow;
use zigzag_core::integrator::{JumpEvent, TrajectoryRecord};

fn chi_to_i8(c: Chirality) -> i8 {
    match c {
        Chirality::Plus => 1,
        Chirality::Minus => -1,
    }
}

#[cfg(test)]
fn chi_from_i8(v: i8) -> Result<Chirality> {
    match v {
        1 => Ok(Chirality::Plus),
        -1 => Ok(Chirality::Minus),
        other => bail!("chirality must be ±1, got {other}"),
    }
}

pub fn trajectory_header(n_particles: usize) -> String {
    let mut h = String::from("t");
    for k in 1..=n_particles {
        let _ = write!(h, ",x{k},y{k},z{k},chi{k},s{k}x,s{k}y,s{k}z");
    }
    h.push_str(",rho");
    h
}

/// Render one trajectory as delimiter-separated text. `scale` divides
/// times and coordinates for display (1.0 = raw internal units).
pub fn trajectory_csv(record: &TrajectoryRecord, scale: f64) -> String {
    let n = record.final_row().positions.len();
    let mut out = trajectory_header(n);
    out.push('\n');
    for row in &record.samples {
        let _ = write!(out, "{}", row.t / scale);
        for k in 0..n {
            let p = row.positions[k];
            let s = row.spins[k];
            let _ = write!(
                out,
                ",{},{},{},{},{},{},{}",
                p[0] / scale,
                p[1] / scale,
                p[2] / scale,
                chi_to_i8(row.chiralities[k]),
                s[0],
                s[1],
                s[2]
            );
        }
        let _ = writeln!(out, ",{}", row.rho);
    }
    out
}

/// Parse a trajectory CSV produced by [`trajectory_csv`].
#[cfg(test)]
pub fn parse_trajectory_csv(text: &str, scale: f64) -> Result<Vec<SampleRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty trajectory file"))?;
    let cols = header.split(',').count();
    if cols < 9 || (cols - 2) % 7 != 0 {
        bail!("malformed trajectory header `{header}`");
    }
    let n = (cols - 2) / 7;
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            bail!("line {}: expected {} fields, got {}", lineno + 2, cols, fields.len());
        }
        let fval = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().with_context(|| format!("line {} field {}", lineno + 2, i))
        };
        let t = fval(0)? * scale;
        let mut positions = Vec::with_capacity(n);
        let mut chiralities = Vec::with_capacity(n);
        let mut spins = Vec::with_capacity(n);
        for k in 0..n {
            let base = 1 + 7 * k;
            positions.push([fval(base)? * scale, fval(base + 1)? * scale, fval(base + 2)? * scale]);
            chiralities.push(chi_from_i8(
                fields[base + 3]
                    .parse::<i8>()
                    .with_context(|| format!("line {} chirality", lineno + 2))?,
            )?);
            spins.push([fval(base + 4)?, fval(base + 5)?, fval(base + 6)?]);
        }
        let rho = fval(cols - 1)?;
        rows.push(SampleRow { t, positions, chiralities, spins, rho });
    }
    Ok(rows)
}

/// Jump events: `t,k,x,y,z,chi_before,s_z` with 1-based particle index.
pub fn jumps_csv(events: &[JumpEvent], scale: f64) -> String {
    let mut out = String::from("t,k,x,y,z,chi_before,s_z\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.time / scale,
            e.particle + 1,
            e.position[0] / scale,
            e.position[1] / scale,
            e.position[2] / scale,
            chi_to_i8(e.before),
            e.spin[2]
        );
    }
    out
}

#[cfg(test)]
pub fn parse_jumps_csv(text: &str, scale: f64) -> Result<Vec<(f64, usize, [f64; 3], Chirality, f64)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty jumps file"))?;
    if header != "t,k,x,y,z,chi_before,s_z" {
        bail!("malformed jumps header `{header}`");
    }
    let mut events = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("line {}: expected 7 fields", lineno + 2);
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>().with_context(|| format!("line {} field {i}", lineno + 2))
        };
        events.push((
            num(0)? * scale,
            f[1].parse::<usize>().context("particle index")? - 1,
            [num(2)? * scale, num(3)? * scale, num(4)? * scale],
            chi_from_i8(f[5].parse::<i8>().context("chi_before")?)?,
            num(6)?,
        ));
    }
    Ok(events)
}

/// Field map grid: one node per line.
pub fn field_map_csv(map: &FieldMap, scale: f64) -> String {
    let mut out = String::from("x,y,z,sx,sy,sz,r_plus,r_minus,rho,valid\n");
    for node in &map.nodes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            node.position[0] / scale,
            node.position[1] / scale,
            node.position[2] / scale,
            node.spin[0],
            node.spin[1],
            node.spin[2],
            node.rate_plus,
            node.rate_minus,
            node.density,
            node.valid as u8
        );
    }
    out
}
