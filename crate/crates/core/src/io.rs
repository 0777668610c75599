//! Plain-text formats for densities, time series and particle ensembles.

use std::fmt::Write as _;
use std::path::Path;

use crate::cauchy::Series;
use crate::error::{FpkError, Result};
use crate::measures::{DensityField, GridSpec};
use crate::particles::ParticleEnsemble;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

/// `# grid ...` line, `x[,y],rho` header, one row per cell.
pub fn density_csv(field: &DensityField) -> String {
    let g = field.grid();
    let cells: Vec<String> = g.cells.iter().map(|c| c.to_string()).collect();
    let mut out = format!(
        "# grid lower={} upper={} cells={}\n",
        join(&g.lower),
        join(&g.upper),
        cells.join(",")
    );
    out.push_str(if g.dim() == 1 { "x,rho\n" } else { "x,y,rho\n" });
    for (k, v) in field.values().iter().enumerate() {
        let p = g.point(k);
        for c in &p[..g.dim()] {
            let _ = write!(out, "{c:.16e},");
        }
        let _ = writeln!(out, "{v:.16e}");
    }
    out
}

pub fn parse_density_csv(text: &str) -> Result<DensityField> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .and_then(|l| l.strip_prefix("# grid "))
        .ok_or_else(|| FpkError::Parse("missing grid comment line".into()))?;
    let mut lower = None;
    let mut upper = None;
    let mut cells = None;
    for part in head.split_whitespace() {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| FpkError::Parse(format!("bad grid field `{part}`")))?;
        let nums = || -> Result<Vec<f64>> {
            val.split(',')
                .map(|s| s.parse::<f64>().map_err(|e| FpkError::Parse(format!("{s}: {e}"))))
                .collect()
        };
        match key {
            "lower" => lower = Some(nums()?),
            "upper" => upper = Some(nums()?),
            "cells" => {
                cells = Some(
                    val.split(',')
                        .map(|s| s.parse::<usize>().map_err(|e| FpkError::Parse(format!("{s}: {e}"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(FpkError::Parse(format!("unknown grid field `{key}`"))),
        }
    }
    let (Some(lower), Some(upper), Some(cells)) = (lower, upper, cells) else {
        return Err(FpkError::Parse("grid line needs lower, upper and cells".into()));
    };
    let grid = GridSpec::new(lower, upper, cells)?;
    lines.next();
    let mut values = Vec::with_capacity(grid.len());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let last = line.rsplit(',').next().unwrap_or_default();
        values.push(last.trim().parse::<f64>().map_err(|e| FpkError::Parse(format!("{last}: {e}")))?);
    }
    DensityField::new(grid, values)
}

pub fn series_csv(series: &Series) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in series.times.iter().zip(&series.values) {
        let _ = writeln!(out, "{t:.16e},{v:.16e}");
    }
    out
}

pub fn ensemble_csv(ensemble: &ParticleEnsemble) -> String {
    let mut out = String::from(if ensemble.dim == 1 { "id,x\n" } else { "id,x,y\n" });
    for (id, p) in ensemble.ids.iter().zip(&ensemble.positions) {
        let _ = writeln!(out, "{id},{}", join(&p[..ensemble.dim]));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| FpkError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| FpkError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| FpkError::io(path, e))
}

pub fn write_density(path: &Path, field: &DensityField) -> Result<()> {
    write_text(path, &density_csv(field))
}

pub fn read_density(path: &Path) -> Result<DensityField> {
    parse_density_csv(&read_text(path)?)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| FpkError::Parse(e.to_string()))?;
    write_text(path, &(text + "\n"))
}
