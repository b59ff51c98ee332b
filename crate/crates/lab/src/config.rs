//! Run configuration, read from TOML. Unknown keys are rejected by name.
//!
//! ```toml
//! seed = 7
//! theorem_mode = false
//!
//! [potential]
//! name = "double_well"
//! params = { well_sep = 1.0, depth_asymmetry = 0.0, taper_radius = 3.0 }
//!
//! [model]
//! lambda = 0.5
//! eta = 0.5
//! m = 2.0
//!
//! [grid]
//! lo = [-6.0]
//! hi = [6.0]
//! n = [1024]
//!
//! [initial]
//! kind = "gaussian"   # gaussian | uniform | invariant | file
//! mean = [0.5]
//! std = 0.5
//!
//! [fpe]
//! t_end = 1.0
//! ```
//!
//! Sections `audit`, `fpe`, `jko`, `particles` and `compare` are optional; the
//! manifest of every run echoes all of them with defaults filled in.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use dlangevin_core::fpe::{FluxScheme, FpeConfig};
use dlangevin_core::jko::JkoConfig;
use dlangevin_core::particles::{Bandwidth, KdeConfig, KdeMethod};
use dlangevin_core::potential::{from_catalog, AuditConfig};
use dlangevin_core::{Grid, ModelParams, Potential};

use crate::error::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub theorem_mode: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub potential: PotentialSpec,
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub fpe: FpeSpec,
    #[serde(default)]
    pub jko: JkoSpec,
    #[serde(default)]
    pub particles: ParticlesSpec,
    #[serde(default)]
    pub compare: CompareSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub lambda: f64,
    pub eta: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Gaussian {
        /// Defaults to the origin.
        #[serde(default)]
        mean: Option<Vec<f64>>,
        std: f64,
    },
    Uniform,
    Invariant,
    File {
        path: PathBuf,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Gaussian { mean: None, std: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    pub n_probe: usize,
    pub delta: f64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        let d = AuditConfig::default();
        AuditSpec { n_probe: d.n_probe, delta: d.delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    WellBalanced,
    UpwindCentral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpeSpec {
    pub t_end: f64,
    pub sample_every: usize,
    pub scheme: SchemeName,
    pub second_order: bool,
    pub safety: f64,
    /// Times at which `rho_t<time>.csv` snapshots are written.
    pub snapshots: Vec<f64>,
}

impl Default for FpeSpec {
    fn default() -> Self {
        let d = FpeConfig::default();
        FpeSpec { t_end: 1.0, sample_every: 100, scheme: SchemeName::WellBalanced, second_order: d.second_order, safety: d.safety, snapshots: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JkoSpec {
    pub tau: f64,
    /// Number of steps is `round(t_end / tau)`.
    pub t_end: f64,
    pub inner_iters: usize,
    pub entropic_eps: Option<f64>,
    pub descent_tol: f64,
}

impl Default for JkoSpec {
    fn default() -> Self {
        let d = JkoConfig::new(0.01);
        JkoSpec { tau: d.tau, t_end: 1.0, inner_iters: d.inner_iters, entropic_eps: d.entropic_eps, descent_tol: d.descent_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KdeRule {
    #[default]
    Silverman,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KdeMethodName {
    #[default]
    Auto,
    Direct,
    Binned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticlesSpec {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub kde: KdeRule,
    /// Required when `kde = "fixed"`.
    pub bandwidth: Option<f64>,
    pub kde_method: KdeMethodName,
    pub direct_limit: usize,
    pub sample_every: usize,
    /// Advance an FPE solution alongside and record W2 to it.
    pub with_fpe: bool,
}

impl Default for ParticlesSpec {
    fn default() -> Self {
        ParticlesSpec {
            n: 20_000,
            dt: 1e-3,
            t_end: 2.0,
            kde: KdeRule::Silverman,
            bandwidth: None,
            kde_method: KdeMethodName::Auto,
            direct_limit: KdeConfig::default().direct_limit,
            sample_every: 100,
            with_fpe: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fpe,
    Jko,
    Particles,
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    /// The first method is the reference for the others.
    pub methods: Vec<Method>,
    /// Comparison times; defaults to `[t_end]` of the first time-dependent method.
    pub times: Vec<f64>,
    pub w2_tol: f64,
    pub kl_tol: Option<f64>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec { methods: vec![Method::Fpe, Method::Particles], times: Vec::new(), w2_tol: 0.05, kl_tol: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.message().to_string() + &span_note(text, e.span())))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }

    pub fn grid(&self) -> Result<Grid, LabError> {
        Ok(Grid::new(&self.grid.lo, &self.grid.hi, &self.grid.n)?)
    }

    pub fn params(&self) -> Result<ModelParams, LabError> {
        let p = ModelParams::new(self.model.lambda, self.model.eta, self.model.m)?;
        Ok(if self.theorem_mode { p.with_theorem_mode()? } else { p })
    }

    pub fn potential(&self) -> Result<Potential, LabError> {
        let args: Vec<(String, f64)> = self.potential.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        from_catalog(&self.potential.name, &args).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig { lambda: self.model.lambda, delta: self.audit.delta, n_probe: self.audit.n_probe }
    }

    pub fn fpe_config(&self) -> FpeConfig {
        FpeConfig {
            scheme: match self.fpe.scheme {
                SchemeName::WellBalanced => FluxScheme::WellBalanced,
                SchemeName::UpwindCentral => FluxScheme::UpwindCentral,
            },
            second_order: self.fpe.second_order,
            safety: self.fpe.safety,
        }
    }

    pub fn jko_config(&self) -> JkoConfig {
        let mut c = JkoConfig::new(self.jko.tau);
        c.inner_iters = self.jko.inner_iters;
        c.entropic_eps = self.jko.entropic_eps;
        c.descent_tol = self.jko.descent_tol;
        c
    }

    pub fn jko_steps(&self) -> Result<usize, LabError> {
        let r = self.jko.t_end / self.jko.tau;
        if !(r.is_finite() && r >= 0.5) {
            return Err(LabError::Config("jko.t_end / jko.tau must be at least one step".into()));
        }
        Ok(r.round() as usize)
    }

    pub fn kde_config(&self, grid: &Grid) -> Result<KdeConfig, LabError> {
        let p = &self.particles;
        let bandwidth = match (p.kde, p.bandwidth) {
            (KdeRule::Silverman, _) => Bandwidth::Silverman,
            (KdeRule::Fixed, Some(h)) => Bandwidth::Fixed(h),
            (KdeRule::Fixed, None) => return Err(LabError::Config("particles.kde = \"fixed\" needs particles.bandwidth".into())),
        };
        let method = match p.kde_method {
            KdeMethodName::Auto => KdeMethod::Auto,
            KdeMethodName::Direct => KdeMethod::Direct,
            KdeMethodName::Binned => KdeMethod::Binned,
        };
        let c = KdeConfig { bandwidth, method, direct_limit: p.direct_limit, fallback_bandwidth: Some(grid.dx(0)) };
        c.validate()?;
        Ok(c)
    }
}

fn span_note(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) if r.start < text.len() => {
            let line = text[..r.start].matches('\n').count() + 1;
            format!(" (line {line}: `{}`)", text[r].lines().next().unwrap_or("").trim())
        }
        _ => String::new(),
    }
}
