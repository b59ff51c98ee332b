//! Plain-text formats. Every float is written as `{:.16e}` (17 significant
//! digits), which parses back to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dlangevin_core::diagnostics::DiagnosticRow;
use dlangevin_core::particles::ParticleEnsemble;
use dlangevin_core::{Grid, GridDensity};

use crate::error::LabError;

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn join(v: impl IntoIterator<Item = String>) -> String {
    v.into_iter().collect::<Vec<_>>().join(",")
}

/// `# grid <lo> <hi> <n> <dim>` (per-axis entries comma-joined), then one value
/// per line in 1D or one comma-separated row per line in 2D.
pub fn density_to_csv(rho: &GridDensity) -> String {
    let g = rho.grid();
    let mut s = format!(
        "# grid {} {} {} {}\n",
        join(g.lo().iter().map(|&v| fmt_f(v))),
        join(g.hi().iter().map(|&v| fmt_f(v))),
        join(g.n().iter().map(|v| v.to_string())),
        g.dim()
    );
    let row = if g.dim() == 1 { 1 } else { g.n()[1] };
    for chunk in rho.values().chunks(row) {
        s.push_str(&join(chunk.iter().map(|&v| fmt_f(v))));
        s.push('\n');
    }
    s
}

pub fn density_from_csv(text: &str) -> Result<GridDensity, LabError> {
    let bad = |m: &str| LabError::Format(m.to_string());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty density file"))?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 6 || f[0] != "#" || f[1] != "grid" {
        return Err(bad("density header must be `# grid lo hi n dim`"));
    }
    let floats = |s: &str| s.split(',').map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>();
    let lo = floats(f[2]).map_err(|_| bad("bad lo"))?;
    let hi = floats(f[3]).map_err(|_| bad("bad hi"))?;
    let n = f[4].split(',').map(|v| v.parse::<usize>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad("bad n"))?;
    let dim: usize = f[5].parse().map_err(|_| bad("bad dim"))?;
    if dim != lo.len() {
        return Err(bad("dim does not match the grid entries"));
    }
    let grid = Grid::new(&lo, &hi, &n)?;
    let mut values = Vec::with_capacity(grid.len());
    for l in lines {
        for v in l.split(',') {
            values.push(v.trim().parse::<f64>().map_err(|_| bad("bad density value"))?);
        }
    }
    if values.len() != grid.len() {
        return Err(bad("value count does not match the grid"));
    }
    Ok(GridDensity::from_values(grid, values)?)
}

/// Column layout of a diagnostics file; unused columns are left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    Fpe,
    Jko,
    Particles,
}

impl Columns {
    fn header(self) -> &'static str {
        match self {
            Columns::Fpe => "t,J,lm_norm,kl,dissipation,mass,min_value",
            Columns::Jko => "t,J,lm_norm,kl,dissipation,mass,min_value,theta",
            Columns::Particles => "t,J,lm_norm,kl,w2_ref,mass,min_value,outside",
        }
    }
}

/// `# t,J,...` header then one row per sample. `outside` is used by the particle layout only.
pub fn diagnostics_to_csv(rows: &[DiagnosticRow], cols: Columns, outside: &[usize]) -> String {
    let mut s = format!("# {}\n", cols.header());
    for (i, r) in rows.iter().enumerate() {
        let mut f = vec![fmt_f(r.t), fmt_f(r.j), fmt_f(r.lm_norm), fmt_opt(r.kl)];
        match cols {
            Columns::Fpe | Columns::Jko => f.push(fmt_opt(r.dissipation)),
            Columns::Particles => f.push(fmt_opt(r.w2_ref)),
        }
        f.push(fmt_f(r.mass));
        f.push(fmt_f(r.min_value));
        match cols {
            Columns::Fpe => {}
            Columns::Jko => f.push(fmt_opt(r.theta)),
            Columns::Particles => f.push(outside.get(i).map(|v| v.to_string()).unwrap_or_default()),
        }
        let _ = writeln!(s, "{}", join(f));
    }
    s
}

/// One row per particle: `x` or `x,y`.
pub fn positions_to_csv(ens: &ParticleEnsemble) -> String {
    let mut s = String::from(if ens.dim() == 1 { "# x\n" } else { "# x,y\n" });
    for i in 0..ens.len() {
        let _ = writeln!(s, "{}", join(ens.particle(i).iter().map(|&v| fmt_f(v))));
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), LabError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

pub fn read_density(path: &Path) -> Result<GridDensity, LabError> {
    density_from_csv(&fs::read_to_string(path)?)
}
