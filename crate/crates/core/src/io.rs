//! Solution serialization: columnar CSV and a compact binary dump.
//!
//! CSV rows are `t, x_1..x_d[, w], u, q_1..q_{d0}`, one per node and time
//! level, in storage order. Floats use the shortest representation that
//! parses back to the same bits.

use crate::error::{Error, Result};
use crate::grid::{GridStack, NoiseAxis, SolutionField, SpaceAxis};
use crate::spec::CoefficientMode;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"QBSPDE01";

pub fn csv_header(sol: &SolutionField) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=sol.grid.dim()).map(|k| format!("x{k}")));
    if sol.grid.noise.is_some() {
        cols.push("w".into());
    }
    cols.push("u".into());
    cols.extend((1..=sol.d0).map(|k| format!("q{k}")));
    cols.join(",")
}

pub fn write_csv<W: Write>(sol: &SolutionField, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", csv_header(sol))?;
    let g = &sol.grid;
    let nw = g.n_w();
    let coords: Vec<Vec<f64>> = (0..g.n_space()).map(|s| g.coords(s)).collect();
    let mut line = String::new();
    for k in 0..g.n_levels() {
        let u = sol.level(k);
        let q = sol.q_level(k);
        for (s, x) in coords.iter().enumerate() {
            for iw in 0..nw {
                let node = s * nw + iw;
                line.clear();
                line.push_str(&format!("{:?}", g.t(k)));
                for xi in x {
                    line.push_str(&format!(",{xi:?}"));
                }
                if let Some(w) = g.w(iw) {
                    line.push_str(&format!(",{w:?}"));
                }
                line.push_str(&format!(",{:?}", u[node]));
                for j in 0..sol.d0 {
                    line.push_str(&format!(",{:?}", q[node * sol.d0 + j]));
                }
                writeln!(out, "{line}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<SolutionField> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty csv".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.iter().filter(|c| c.starts_with('x')).count();
    let has_w = cols.contains(&"w");
    let d0 = cols.iter().filter(|c| c.starts_with('q')).count();
    if d == 0 || d0 == 0 || cols.first() != Some(&"t") {
        return Err(Error::Format(format!("unexpected header `{header}`")));
    }
    let width = cols.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
        if vals.len() != width {
            return Err(Error::Format(format!("row {} has {} columns, expected {width}", i + 1, vals.len())));
        }
        rows.push(vals);
    }
    let uniq = |col: usize| {
        let mut v: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    };
    let ts = uniq(0);
    let space: Vec<SpaceAxis> = (0..d)
        .map(|k| {
            let xs = uniq(1 + k);
            SpaceAxis {
                lo: xs[0],
                hi: *xs.last().unwrap(),
                n: xs.len(),
            }
        })
        .collect();
    let noise = has_w.then(|| {
        let ws = uniq(1 + d);
        NoiseAxis {
            w_max: *ws.last().unwrap(),
            n: ws.len(),
        }
    });
    let grid = GridStack {
        space,
        noise,
        horizon: *ts.last().unwrap(),
        n_t: ts.len() - 1,
    };
    if grid.n_levels() * grid.n_nodes() != rows.len() {
        return Err(Error::Format("row count does not match the grid".into()));
    }
    let mode = if has_w {
        CoefficientMode::MarkovianLift
    } else {
        CoefficientMode::Deterministic
    };
    let mut sol = SolutionField::zeros(grid, mode, d0);
    let ucol = 1 + d + has_w as usize;
    for (i, r) in rows.iter().enumerate() {
        sol.u[i] = r[ucol];
        for j in 0..d0 {
            sol.q[i * d0 + j] = r[ucol + 1 + j];
        }
    }
    Ok(sol)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}
fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_bits().to_le_bytes())?;
    Ok(())
}
fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

pub fn write_binary<W: Write>(sol: &SolutionField, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    let g = &sol.grid;
    put_u64(&mut w, g.dim() as u64)?;
    put_u64(&mut w, sol.d0 as u64)?;
    put_u64(&mut w, (sol.mode == CoefficientMode::MarkovianLift) as u64)?;
    put_u64(&mut w, g.n_t as u64)?;
    put_f64(&mut w, g.horizon)?;
    for a in &g.space {
        put_f64(&mut w, a.lo)?;
        put_f64(&mut w, a.hi)?;
        put_u64(&mut w, a.n as u64)?;
    }
    match &g.noise {
        Some(a) => {
            put_u64(&mut w, a.n as u64)?;
            put_f64(&mut w, a.w_max)?;
        }
        None => {
            put_u64(&mut w, 0)?;
            put_f64(&mut w, 0.0)?;
        }
    }
    match sol.w_boundary_slope {
        Some(s) => {
            put_u64(&mut w, 1)?;
            put_f64(&mut w, s)?;
        }
        None => {
            put_u64(&mut w, 0)?;
            put_f64(&mut w, 0.0)?;
        }
    }
    for &v in &sol.u {
        put_f64(&mut w, v)?;
    }
    for &v in &sol.q {
        put_f64(&mut w, v)?;
    }
    for &it in &sol.picard_iters {
        put_u64(&mut w, it as u64)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(input: R) -> Result<SolutionField> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic header".into()));
    }
    let d = get_u64(&mut r)? as usize;
    let d0 = get_u64(&mut r)? as usize;
    let lift = get_u64(&mut r)? == 1;
    let n_t = get_u64(&mut r)? as usize;
    let horizon = get_f64(&mut r)?;
    if d == 0 || d > 8 || d0 == 0 || d0 > 64 {
        return Err(Error::Format("implausible dimensions".into()));
    }
    let mut space = Vec::with_capacity(d);
    for _ in 0..d {
        let lo = get_f64(&mut r)?;
        let hi = get_f64(&mut r)?;
        let n = get_u64(&mut r)? as usize;
        space.push(SpaceAxis { lo, hi, n });
    }
    let nw = get_u64(&mut r)? as usize;
    let w_max = get_f64(&mut r)?;
    let has_slope = get_u64(&mut r)? == 1;
    let slope = get_f64(&mut r)?;
    let grid = GridStack {
        space,
        noise: (nw > 0).then_some(NoiseAxis { w_max, n: nw }),
        horizon,
        n_t,
    };
    let mode = if lift {
        CoefficientMode::MarkovianLift
    } else {
        CoefficientMode::Deterministic
    };
    let mut sol = SolutionField::zeros(grid, mode, d0);
    sol.w_boundary_slope = has_slope.then_some(slope);
    for v in sol.u.iter_mut() {
        *v = get_f64(&mut r)?;
    }
    for v in sol.q.iter_mut() {
        *v = get_f64(&mut r)?;
    }
    for it in sol.picard_iters.iter_mut() {
        *it = get_u64(&mut r)? as usize;
    }
    Ok(sol)
}

/// Write by extension: `.csv` or `.bin`.
pub fn write_solution(sol: &SolutionField, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_csv(sol, file),
        Some("bin") => write_binary(sol, file),
        _ => Err(Error::Format(format!("unsupported output extension for {}", path.display()))),
    }
}

pub fn read_solution(path: &Path) -> Result<SolutionField> {
    let file = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(file),
        Some("bin") => read_binary(file),
        _ => Err(Error::Format(format!("unsupported input extension for {}", path.display()))),
    }
}
