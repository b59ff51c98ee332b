//! Dispatch of one configured run: checks, computation, artifacts, manifest.

use std::path::{Path, PathBuf};

use serde_json::json;

use dlangevin_core::diagnostics::DiagnosticRow;
use dlangevin_core::fpe::{FpeSolver, FpeState};
use dlangevin_core::invariant::{find_cstar, InvariantResult};
use dlangevin_core::jko::jko_run;
use dlangevin_core::particles::{em_step, histogram, run_particles, sample_from_density, w2_to_density, ParticleEnsemble, ParticleRunConfig};
use dlangevin_core::potential::{audit_assumptions, AssumptionReport};
use dlangevin_core::{Grid, GridDensity, ModelParams, Potential};

use crate::config::{InitialSpec, Method, RunConfig};
use crate::error::LabError;
use crate::io::{self, Columns};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Audit,
    Invariant,
    Fpe,
    Jko,
    Particles,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::Invariant => "invariant",
            Command::Fpe => "fpe",
            Command::Jko => "jko",
            Command::Particles => "particles",
            Command::Compare => "compare",
        }
    }
}

/// Resolved inputs shared by all commands.
struct Setup {
    grid: Grid,
    params: ModelParams,
    psi: Potential,
    audit: AssumptionReport,
}

fn prepare(cfg: &RunConfig) -> Result<Setup, LabError> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let psi = cfg.potential()?;
    if psi.dim() != grid.dim() {
        return Err(LabError::Config(format!("potential `{}` is {}D but the grid is {}D", psi.name(), psi.dim(), grid.dim())));
    }
    let audit = audit_assumptions(&psi, grid.lo(), grid.hi(), &cfg.audit_config())?;
    if cfg.theorem_mode {
        if !audit.all_ok() {
            return Err(LabError::Core(dlangevin_core::Error::Hypothesis(format!(
                "potential `{}` fails the assumption audit",
                psi.name()
            ))));
        }
        cfg.jko_config().check_theorem(audit.laplacian_plus_a, &params)?;
    }
    Ok(Setup { grid, params, psi, audit })
}

fn invariant(s: &Setup) -> Result<InvariantResult, LabError> {
    Ok(find_cstar(&s.psi, &s.params, &s.grid)?)
}

fn initial(cfg: &RunConfig, s: &Setup) -> Result<GridDensity, LabError> {
    Ok(match &cfg.initial {
        InitialSpec::Gaussian { mean, std } => {
            let mean = mean.clone().unwrap_or_else(|| vec![0.0; s.grid.dim()]);
            GridDensity::gaussian(s.grid, &mean, *std)?
        }
        InitialSpec::Uniform => GridDensity::uniform(s.grid),
        InitialSpec::Invariant => invariant(s)?.rho_inf,
        InitialSpec::File { path } => {
            let d = io::read_density(path)?;
            if d.grid() != &s.grid {
                return Err(LabError::Config(format!("{} is not on the configured grid", path.display())));
            }
            d.normalized()?
        }
    })
}

/// ρ_∞ for the KL column; runs whose invariant solve fails just leave KL empty.
fn reference(s: &Setup) -> Option<GridDensity> {
    find_cstar(&s.psi, &s.params, &s.grid).ok().map(|r| r.rho_inf)
}

fn audit_json(a: &AssumptionReport) -> serde_json::Value {
    json!({
        "lipschitz_K": a.lipschitz_k,
        "growth_K": a.growth_k,
        "gradient_lipschitz": a.gradient_lipschitz,
        "laplacian_plus_A": a.laplacian_plus_a,
        "log_growth_ok": a.log_growth_ok,
        "log_growth_R": a.log_growth_r,
        "log_growth_delta": a.log_growth_delta,
        "radial_monotone_ok": a.radial_monotone_ok,
        "radial_R": a.radial_r,
        "min_value": a.min_value,
        "n_probe": a.n_probe,
        "all_ok": a.all_ok(),
    })
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn put(&mut self, name: &str, contents: &str) -> Result<(), LabError> {
        io::write(&self.dir, name, contents)?;
        self.files.push(name.to_string());
        Ok(())
    }
    fn json(&mut self, name: &str, v: &serde_json::Value) -> Result<(), LabError> {
        self.put(name, &(serde_json::to_string_pretty(v).expect("json values serialize") + "\n"))
    }
}

/// Runs `cmd` and writes its artifacts plus `manifest.json` under `out_dir`.
/// Returns the names of the files written.
pub fn run(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Vec<String>, LabError> {
    let s = prepare(cfg)?;
    let mut out = Out { dir: out_dir.to_path_buf(), files: Vec::new() };
    let result = match cmd {
        Command::Audit => out.json("report.json", &audit_json(&s.audit)),
        Command::Invariant => run_invariant(&s, &mut out),
        Command::Fpe => run_fpe(cfg, &s, &mut out),
        Command::Jko => run_jko(cfg, &s, &mut out),
        Command::Particles => run_part(cfg, &s, &mut out),
        Command::Compare => run_compare(cfg, &s, &mut out),
    };
    // The manifest is written even when the comparison verdict fails.
    let manifest = json!({
        "command": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_json(),
        "audit": audit_json(&s.audit),
        "files": out.files.clone(),
        "status": match &result { Ok(()) => "ok".to_string(), Err(e) => e.to_string() },
    });
    out.json("manifest.json", &manifest)?;
    result.map(|()| out.files)
}

fn run_invariant(s: &Setup, out: &mut Out) -> Result<(), LabError> {
    let r = invariant(s)?;
    out.put("rho_inf.csv", &io::density_to_csv(&r.rho_inf))?;
    out.json(
        "report.json",
        &json!({
            "c_star": r.c_star,
            "mass_residual": r.mass_residual,
            "identity_residual": r.identity_residual,
            "c_star_positive": r.c_star_positive,
            "iterations": r.iterations,
            "truncation_bound": r.truncation_bound,
        }),
    )
}

fn run_fpe(cfg: &RunConfig, s: &Setup, out: &mut Out) -> Result<(), LabError> {
    let rho0 = initial(cfg, s)?;
    let solver = || -> Result<FpeSolver, LabError> {
        let mut f = FpeSolver::new(s.grid, s.psi.clone(), s.params, cfg.fpe_config())?;
        if let Some(r) = reference(s) {
            f = f.with_reference(r)?;
        }
        Ok(f)
    };
    let t_end = cfg.fpe.t_end;
    let (state, rows) = solver()?.run(rho0.clone(), t_end, cfg.fpe.sample_every)?;
    // Snapshots come from separate runs that stop exactly at each time.
    let mut snaps: Vec<f64> = cfg.fpe.snapshots.iter().copied().filter(|&t| (0.0..=t_end).contains(&t)).collect();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    for t in snaps {
        let mut st = FpeState::new(rho0.clone());
        FpeSolver::new(s.grid, s.psi.clone(), s.params, cfg.fpe_config())?.run_until(&mut st, t)?;
        out.put(&format!("rho_t{t}.csv"), &io::density_to_csv(&st.rho))?;
    }
    out.put("diagnostics.csv", &io::diagnostics_to_csv(&rows, Columns::Fpe, &[]))?;
    out.put("rho_final.csv", &io::density_to_csv(&state.rho))
}

fn run_jko(cfg: &RunConfig, s: &Setup, out: &mut Out) -> Result<(), LabError> {
    let rho0 = initial(cfg, s)?;
    let steps = cfg.jko_steps()?;
    let mut jc = cfg.jko_config();
    jc.laplacian_bound = Some(s.audit.laplacian_plus_a);
    let traj = jko_run(rho0, steps, &jc, &s.psi, &s.params)?;
    let reference = reference(s);
    let rows: Vec<DiagnosticRow> = traj
        .densities
        .iter()
        .enumerate()
        .map(|(n, d)| DiagnosticRow {
            t: n as f64 * traj.tau,
            j: traj.j_values[n],
            lm_norm: d.lp_norm(s.params.m).unwrap_or(f64::NAN),
            kl: reference.as_ref().and_then(|r| d.kl_divergence(r).ok()),
            w2_ref: None,
            dissipation: None,
            mass: d.mass(),
            min_value: d.min_value(),
            theta: Some(traj.thetas[n]),
        })
        .collect();
    out.put("diagnostics.csv", &io::diagnostics_to_csv(&rows, Columns::Jko, &[]))?;
    out.put("rho_final.csv", &io::density_to_csv(traj.densities.last().expect("at least one step")))?;
    out.json("jko_report.json", &json!({ "steps": steps, "unconverged_steps": traj.warnings, "iterations": traj.iterations }))
}

fn run_part(cfg: &RunConfig, s: &Setup, out: &mut Out) -> Result<(), LabError> {
    let rho0 = initial(cfg, s)?;
    let p = &cfg.particles;
    let rc = ParticleRunConfig {
        n: p.n,
        dt: p.dt,
        t_end: p.t_end,
        seed: cfg.seed,
        kde: cfg.kde_config(&s.grid)?,
        sample_every: p.sample_every,
    };
    let mut fpe = if p.with_fpe { Some(FpeSolver::new(s.grid, s.psi.clone(), s.params, cfg.fpe_config())?) } else { None };
    let reference = reference(s);
    let r = run_particles(&rho0, &s.psi, &s.params, &rc, fpe.as_mut(), reference.as_ref())?;
    out.put("diagnostics.csv", &io::diagnostics_to_csv(&r.diagnostics, Columns::Particles, &r.outside))?;
    out.put("positions.csv", &io::positions_to_csv(&r.ensemble))?;
    out.put("histogram_final.csv", &io::density_to_csv(&r.histogram))
}

/// Density (or ensemble) of one method at the comparison times.
enum Snapshots {
    Grid(Vec<GridDensity>),
    Particles(Vec<ParticleEnsemble>),
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Fpe => "fpe",
        Method::Jko => "jko",
        Method::Particles => "particles",
        Method::Invariant => "invariant",
    }
}

fn snapshots(m: Method, times: &[f64], cfg: &RunConfig, s: &Setup) -> Result<Snapshots, LabError> {
    let rho0 = initial(cfg, s)?;
    Ok(match m {
        Method::Invariant => {
            let r = invariant(s)?.rho_inf;
            Snapshots::Grid(times.iter().map(|_| r.clone()).collect())
        }
        Method::Fpe => {
            let mut solver = FpeSolver::new(s.grid, s.psi.clone(), s.params, cfg.fpe_config())?;
            let mut st = FpeState::new(rho0);
            let mut v = Vec::with_capacity(times.len());
            for &t in times {
                solver.run_until(&mut st, t)?;
                v.push(st.rho.clone());
            }
            Snapshots::Grid(v)
        }
        Method::Jko => {
            let tau = cfg.jko.tau;
            let last = times.iter().copied().fold(0.0, f64::max);
            let steps = ((last / tau).round() as usize).max(1);
            let mut jc = cfg.jko_config();
            jc.laplacian_bound = Some(s.audit.laplacian_plus_a);
            let traj = jko_run(rho0, steps, &jc, &s.psi, &s.params)?;
            Snapshots::Grid(times.iter().map(|&t| traj.at_time(t).clone()).collect())
        }
        Method::Particles => {
            let p = &cfg.particles;
            let kde = cfg.kde_config(&s.grid)?;
            let mut ens = sample_from_density(&rho0, p.n, cfg.seed)?;
            let mut v = Vec::with_capacity(times.len());
            let mut k = 0u64;
            for &t in times {
                let target = (t / p.dt).round() as u64;
                while k < target {
                    ens = em_step(&ens, &s.psi, &s.params, &kde, p.dt)?;
                    k += 1;
                    ens.time = k as f64 * p.dt;
                }
                v.push(ens.clone());
            }
            Snapshots::Particles(v)
        }
    })
}

fn run_compare(cfg: &RunConfig, s: &Setup, out: &mut Out) -> Result<(), LabError> {
    let c = &cfg.compare;
    if c.methods.len() < 2 {
        return Err(LabError::Config("compare.methods needs at least two methods".into()));
    }
    let times = if c.times.is_empty() {
        let t = c
            .methods
            .iter()
            .find_map(|m| match m {
                Method::Fpe => Some(cfg.fpe.t_end),
                Method::Jko => Some(cfg.jko.t_end),
                Method::Particles => Some(cfg.particles.t_end),
                Method::Invariant => None,
            })
            .unwrap_or(cfg.fpe.t_end);
        vec![t]
    } else {
        let mut t = c.times.clone();
        t.sort_by(f64::total_cmp);
        t
    };
    let snaps = c.methods.iter().map(|&m| snapshots(m, &times, cfg, s)).collect::<Result<Vec<_>, _>>()?;
    let reference = match &snaps[0] {
        Snapshots::Grid(v) => v,
        Snapshots::Particles(_) => return Err(LabError::Config("the first compare method must be grid-based".into())),
    };
    let mut csv = String::from("# t,method,reference,w2,kl,w2_tol,kl_tol,pass\n");
    let mut failures = Vec::new();
    for (mi, snap) in snaps.iter().enumerate().skip(1) {
        for (ti, &t) in times.iter().enumerate() {
            let r = &reference[ti];
            let (w2, kl) = match snap {
                Snapshots::Grid(v) => (v[ti].w2_distance(r)?, v[ti].kl_divergence(r)?),
                Snapshots::Particles(v) => {
                    let (h, _) = histogram(&v[ti], &s.grid)?;
                    let floored: Vec<f64> = h.values().iter().map(|x| x.max(1e-12)).collect();
                    let kl = GridDensity::from_values(s.grid, floored)?.normalized()?.kl_divergence(r)?;
                    (w2_to_density(&v[ti], r)?, kl)
                }
            };
            let pass = w2 <= c.w2_tol && c.kl_tol.is_none_or(|k| kl <= k);
            let row = format!(
                "{},{},{},{},{},{},{},{}",
                io::fmt_f(t),
                method_name(c.methods[mi]),
                method_name(c.methods[0]),
                io::fmt_f(w2),
                io::fmt_f(kl),
                io::fmt_f(c.w2_tol),
                c.kl_tol.map(io::fmt_f).unwrap_or_default(),
                pass
            );
            if !pass {
                failures.push(row.clone());
            }
            csv.push_str(&row);
            csv.push('\n');
        }
    }
    out.put("compare.csv", &csv)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(LabError::Tolerance(failures.join("; ")))
    }
}
