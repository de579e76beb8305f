//! Configuration-driven pipelines behind the `euler-stability` command.
//!
//! A run parses and validates an [`ExperimentConfig`], computes everything in
//! memory and only then writes its artifacts, followed by `manifest.json`
//! listing the SHA-256 of every file. Each artifact carries the hash of the
//! canonical config serialization.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::calculus::{PiecewisePoly, ScalarFn};
use crate::energy::{full_report, supporting_gap, SupportReport, CLASS_TOL};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, GridSpec, ScalarField};
use crate::rearrangement::{check_collar, perturbation_time, project_to_class, random_perturbations, rearrangement_distance, BumpSpec, PerturbationSpec};
use crate::simulator::{run, stability_experiment, turnover_time, RunOptions, CFL_LIMIT};
use crate::spectral::{classify_stability, lambda1};
use crate::steady::{lane_emden_solve, linear_steady, solve_semilinear, Method, SteadyState};

/// JSON schema of [`ExperimentConfig`].
pub const CONFIG_SCHEMA: &str = include_str!("../schema/experiment-config.schema.json");

const SAMPLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub profile: ProfileSpec,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub perturbations: PerturbationConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepEntry>,
}

fn default_method() -> Method {
    Method::Newton
}

/// The vorticity profile `g` of the steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `g(s) = αs + β`, with `α` given directly or as a multiple of `λ₁ʰ`.
    Affine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_over_lambda1: Option<f64>,
        beta: f64,
    },
    /// `-Δψ = ψᵖ`, positive solution.
    LaneEmden { p: f64 },
    /// Linear interpolation through `(knots[i], values[i])`, continued
    /// linearly beyond the end knots.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    /// Random samples drawn in addition to the explicit ones.
    pub samples: usize,
    /// Range of `‖ω - ω̄‖₂ / ‖ω̄‖₂` for random samples.
    pub relative_distance: [f64; 2],
    pub explicit: Vec<PerturbationSpec>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { samples: 20, relative_distance: [1e-3, 5e-2], explicit: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Length of the `simulate` run, in turnover times.
    pub turnovers: f64,
    pub cfl: f64,
    /// Norms for deviations; the first drives `simulate`, each gets a ladder.
    pub p_norms: Vec<f64>,
    pub sample_every: usize,
    pub snapshot_every: usize,
    /// Relative perturbation sizes of the stability ladder.
    pub amplitudes: Vec<f64>,
    pub stability_turnovers: f64,
    /// Stream function of the perturbation flow; random from the seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<BumpSpec>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            turnovers: 5.0,
            cfl: CFL_LIMIT,
            p_norms: vec![2.0],
            sample_every: 10,
            snapshot_every: 0,
            amplitudes: vec![1e-3, 1e-2, 1e-1],
            stability_turnovers: 10.0,
            xi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Overrides applied to the base config for one sweep entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_over_lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be finite")))
    }
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Compact JSON with fields in declaration order and defaults filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Semantic checks beyond the schema; no numerical work is done.
    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.grid).map_err(|e| config_err(format!("grid: {e}")))?;
        match &self.profile {
            ProfileSpec::Affine { alpha, alpha_over_lambda1, beta } => {
                match (alpha, alpha_over_lambda1) {
                    (Some(a), None) | (None, Some(a)) => finite("alpha", *a)?,
                    _ => return Err(config_err("affine profile needs exactly one of alpha, alpha_over_lambda1")),
                }
                finite("beta", *beta)?;
            }
            ProfileSpec::LaneEmden { p } => {
                if !(*p > 1.0 && p.is_finite()) {
                    return Err(config_err(format!("Lane-Emden exponent {p} must exceed 1")));
                }
            }
            ProfileSpec::PiecewiseLinear { knots, values } => {
                PiecewisePoly::linear_interpolant(knots, values).map_err(|e| config_err(format!("profile: {e}")))?;
                for v in values {
                    finite("profile value", *v)?;
                }
            }
        }
        let [lo, hi] = self.perturbations.relative_distance;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(config_err("perturbations.relative_distance must satisfy 0 < lo <= hi"));
        }
        let grid = Arc::new(grid);
        for (i, p) in self.perturbations.explicit.iter().enumerate() {
            finite("perturbation time", p.t)?;
            check_bump(&p.xi, &grid).map_err(|e| config_err(format!("perturbations.explicit[{i}]: {e}")))?;
        }
        let s = &self.simulation;
        if !(s.cfl > 0.0 && s.cfl <= CFL_LIMIT) {
            return Err(config_err(format!("simulation.cfl must lie in (0, {CFL_LIMIT}]")));
        }
        for (name, v) in [("simulation.turnovers", s.turnovers), ("simulation.stability_turnovers", s.stability_turnovers)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} must be finite and nonnegative")));
            }
        }
        if s.p_norms.is_empty() || s.p_norms.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return Err(config_err("simulation.p_norms must be a nonempty list of finite p >= 1"));
        }
        if s.amplitudes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(config_err("simulation.amplitudes must be positive"));
        }
        if s.sample_every == 0 {
            return Err(config_err("simulation.sample_every must be at least 1"));
        }
        if let Some(xi) = &s.xi {
            check_bump(xi, &grid).map_err(|e| config_err(format!("simulation.xi: {e}")))?;
        }
        for (i, entry) in self.sweep.iter().enumerate() {
            self.apply(entry).map_err(|e| config_err(format!("sweep[{i}]: {e}")))?.validate()?;
        }
        Ok(())
    }

    /// The base config with one sweep entry's overrides applied.
    pub fn apply(&self, entry: &SweepEntry) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        c.sweep.clear();
        if let Some(n) = entry.resolution {
            c.grid.resolution = n;
        }
        if let Some(s) = entry.seed {
            c.seed = s;
        }
        match &mut c.profile {
            ProfileSpec::Affine { alpha, alpha_over_lambda1, beta } => {
                if entry.alpha.is_some() || entry.alpha_over_lambda1.is_some() {
                    *alpha = entry.alpha;
                    *alpha_over_lambda1 = entry.alpha_over_lambda1;
                }
                if let Some(b) = entry.beta {
                    *beta = b;
                }
                if entry.p.is_some() {
                    return Err(config_err("p only applies to Lane-Emden profiles"));
                }
            }
            ProfileSpec::LaneEmden { p } => {
                if let Some(q) = entry.p {
                    *p = q;
                }
                if entry.alpha.is_some() || entry.alpha_over_lambda1.is_some() || entry.beta.is_some() {
                    return Err(config_err("alpha and beta only apply to affine profiles"));
                }
            }
            ProfileSpec::PiecewiseLinear { .. } => {
                if entry.alpha.is_some() || entry.alpha_over_lambda1.is_some() || entry.beta.is_some() || entry.p.is_some() {
                    return Err(config_err("piecewise profiles only accept resolution and seed overrides"));
                }
            }
        }
        Ok(c)
    }
}

fn check_bump(xi: &BumpSpec, grid: &Arc<Grid>) -> Result<()> {
    if xi.width.iter().any(|&w| !(w > 0.0 && w.is_finite())) || !xi.amplitude.is_finite() {
        return Err(config_err("bump widths must be positive and the amplitude finite"));
    }
    check_collar(&xi.sample(grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Build the grid and report its geometry and principal eigenvalue.
    Grid,
    /// Construct the steady state and write its fields and profile.
    Steady,
    /// Classify the steady state.
    Certify,
    /// Compare energy, energy–Casimir and supporting functionals on perturbations.
    Energy,
    /// Draw area-preserving perturbations.
    Perturb,
    /// Evolve a perturbed steady state and record conservation diagnostics.
    Simulate,
    /// Everything above plus the stability ladder.
    Experiment,
    /// Certificates and functional checks over the sweep entries.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Grid => "grid",
            Command::Steady => "steady",
            Command::Certify => "certify",
            Command::Energy => "energy",
            Command::Perturb => "perturb",
            Command::Simulate => "simulate",
            Command::Experiment => "experiment",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "euler-stability", version, about = "Stability certificates and simulations for steady planar Euler flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` of the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
}

/// Files produced by a run, keyed by path relative to the output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    config_hash: String,
    files: BTreeMap<String, Vec<u8>>,
}

fn stamp(mut v: Value, hash: &str) -> Value {
    if let Value::Object(m) = &mut v {
        m.insert("config_hash".into(), Value::String(hash.into()));
    }
    v
}

impl Artifacts {
    pub fn new(config_hash: &str) -> Self {
        Artifacts { config_hash: config_hash.into(), files: BTreeMap::new() }
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let v = stamp(serde_json::to_value(value)?, &self.config_hash);
        let mut bytes = serde_json::to_vec_pretty(&v)?;
        bytes.push(b'\n');
        self.files.insert(name.into(), bytes);
        Ok(())
    }

    pub fn ndjson<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut bytes = Vec::new();
        for r in rows {
            let v = stamp(serde_json::to_value(r)?, &self.config_hash);
            serde_json::to_writer(&mut bytes, &v)?;
            bytes.push(b'\n');
        }
        self.files.insert(name.into(), bytes);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) {
        let mut s = format!("# config_hash={}\n{}\n", self.config_hash, header.join(","));
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.insert(name.into(), s.into_bytes());
    }

    pub fn snapshot(&mut self, stem: &str, field: &ScalarField, label: &str) -> Result<()> {
        let mut meta = field.snapshot_meta();
        meta.config_hash = Some(self.config_hash.clone());
        meta.label = Some(label.into());
        self.files.insert(format!("{stem}.bin"), field.to_bytes());
        let mut bytes = serde_json::to_vec_pretty(&meta)?;
        bytes.push(b'\n');
        self.files.insert(format!("{stem}.json"), bytes);
        Ok(())
    }

    fn absorb(&mut self, prefix: &str, other: Artifacts) {
        for (k, v) in other.files {
            self.files.insert(format!("{prefix}/{k}"), v);
        }
    }

    /// The manifest: config hash, package version and the hash of every file.
    pub fn manifest(&self, command: Command) -> Value {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(k, v)| json!({ "path": k, "bytes": v.len(), "sha256": hex::encode(Sha256::digest(v)) }))
            .collect();
        json!({
            "config_hash": self.config_hash,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "files": files,
        })
    }

    /// Write every file, then `manifest.json`.
    pub fn write(&self, dir: &Path, command: Command) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        let path = dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&self.manifest(command))?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(written)
    }
}

/// Build the steady state a config describes.
pub fn build_steady(config: &ExperimentConfig, grid: &Arc<Grid>) -> Result<SteadyState> {
    match &config.profile {
        ProfileSpec::Affine { alpha, alpha_over_lambda1, beta } => {
            let a = match (alpha, alpha_over_lambda1) {
                (Some(a), _) => *a,
                (None, Some(r)) => r * lambda1(grid)?,
                (None, None) => return Err(config_err("affine profile without alpha")),
            };
            linear_steady(a, *beta, grid)
        }
        ProfileSpec::LaneEmden { p } => lane_emden_solve(*p, grid),
        ProfileSpec::PiecewiseLinear { knots, values } => {
            let g = ScalarFn::poly(PiecewisePoly::linear_interpolant(knots, values)?);
            solve_semilinear(&g, grid, None, config.method)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct PerturbationRow {
    sample_id: usize,
    xi: BumpSpec,
    t: f64,
    target_relative_distance: Option<f64>,
    relative_distance: f64,
    class_distance: f64,
}

/// Explicit perturbations first, then random ones; each is projected onto
/// the exact rearrangement class of `ω̄`.
fn perturbation_samples(config: &ExperimentConfig, steady: &SteadyState) -> Result<(Vec<PerturbationRow>, Vec<ScalarField>)> {
    let omega_bar = &steady.omega_bar;
    let norm = omega_bar.lp_norm(2.0);
    let mut raw: Vec<(PerturbationSpec, Option<f64>, ScalarField)> = Vec::new();
    for p in &config.perturbations.explicit {
        raw.push((*p, None, p.apply(omega_bar)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SAMPLE_STREAM);
    let [lo, hi] = config.perturbations.relative_distance;
    for s in random_perturbations(omega_bar, config.perturbations.samples, (lo, hi), &mut rng)? {
        raw.push((s.spec, Some(s.relative_distance), s.field));
    }
    let mut rows = Vec::with_capacity(raw.len());
    let mut fields = Vec::with_capacity(raw.len());
    for (i, (spec, target, f)) in raw.into_iter().enumerate() {
        let class_distance = rearrangement_distance(&f, omega_bar)?;
        let projected = project_to_class(&f, omega_bar)?;
        rows.push(PerturbationRow {
            sample_id: i + 1,
            xi: spec.xi,
            t: spec.t,
            target_relative_distance: target,
            relative_distance: projected.sub(omega_bar)?.lp_norm(2.0) / norm,
            class_distance,
        });
        fields.push(projected);
    }
    Ok((rows, fields))
}

fn ladder_xi(config: &ExperimentConfig, grid: &Grid) -> BumpSpec {
    config.simulation.xi.unwrap_or_else(|| BumpSpec::broad(grid))
}

fn run_options(config: &ExperimentConfig, p: f64, casimir: bool) -> RunOptions {
    let s = &config.simulation;
    RunOptions { cfl: s.cfl, sample_every: s.sample_every, p, casimir, snapshot_every: s.snapshot_every }
}

/// Lazily computed pipeline stages shared by the subcommands.
struct Pipeline<'a> {
    config: &'a ExperimentConfig,
    grid: Arc<Grid>,
    steady: Option<SteadyState>,
}

impl<'a> Pipeline<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let grid = build_grid(config.grid).map_err(|e| config_err(format!("grid: {e}")))?;
        Ok(Pipeline { config, grid, steady: None })
    }

    fn steady(&mut self) -> Result<&SteadyState> {
        if self.steady.is_none() {
            log::info!("constructing steady state");
            self.steady = Some(build_steady(self.config, &self.grid)?);
        }
        Ok(self.steady.as_ref().unwrap())
    }

    fn grid_stage(&mut self, out: &mut Artifacts) -> Result<()> {
        let g = &self.grid;
        out.json(
            "grid.json",
            &json!({
                "spec": g.spec(),
                "nx": g.nx(),
                "ny": g.ny(),
                "h": g.h(),
                "active_nodes": g.active_count(),
                "area": g.area(),
                "lambda1": lambda1(g)?,
            }),
        )
    }

    fn steady_stage(&mut self, out: &mut Artifacts) -> Result<()> {
        let s = self.steady()?;
        let profile = match &s.profile {
            Some(p) => Some(p.to_document()?),
            None => None,
        };
        out.json("steady.json", &json!({ "meta": s.meta(), "profile": profile }))?;
        if let Some(doc) = &profile {
            out.json("profile.json", doc)?;
        }
        let (w, p) = (s.omega_bar.clone(), s.psi_bar.clone());
        out.snapshot("omega_bar", &w, "omega_bar")?;
        out.snapshot("psi_bar", &p, "psi_bar")
    }

    fn certify_stage(&mut self, out: &mut Artifacts) -> Result<()> {
        let cert = classify_stability(self.steady()?)?;
        log::info!("classification {:?}", cert.classification);
        out.json("certificate.json", &cert)
    }

    fn perturb_stage(&mut self, out: &mut Artifacts) -> Result<()> {
        let config = self.config;
        let (rows, _) = perturbation_samples(config, self.steady()?)?;
        out.ndjson("perturbations.ndjson", &rows)
    }

    fn energy_stage(&mut self, out: &mut Artifacts) -> Result<SupportReport> {
        let config = self.config;
        let steady = self.steady()?;
        let (_, samples) = perturbation_samples(config, steady)?;
        let report = supporting_gap(steady, &samples, CLASS_TOL)?;
        let mut rows = vec![report.reference.clone()];
        rows.extend(report.rows.iter().cloned());
        out.ndjson("energy.ndjson", &rows)?;
        let reference = match &steady.profile {
            Some(p) => Some(full_report(&steady.omega_bar, p, steady.omega_bar.integral())?),
            None => None,
        };
        out.json(
            "energy_summary.json",
            &json!({
                "samples": report.rows.len(),
                "reference": reference,
                "min_gap": report.min_gap,
                "max_gap": report.max_gap,
                "min_energy_drop": report.min_energy_drop,
                "max_energy_drop": report.max_energy_drop,
                "no_violation_radius": report.no_violation_radius,
                "min_form_quotient": report.min_form_quotient,
            }),
        )?;
        Ok(report)
    }

    fn simulate_stage(&mut self, out: &mut Artifacts) -> Result<()> {
        let config = self.config;
        let xi = ladder_xi(config, &self.grid).sample(&self.grid);
        let steady = self.steady()?;
        let s = &config.simulation;
        let p = s.p_norms[0];
        let omega0 = match s.amplitudes.first() {
            Some(&a) => {
                let eps = a * steady.omega_bar.lp_norm(p);
                perturbation_time(&steady.omega_bar, &xi, eps, p)?.1
            }
            None => steady.omega_bar.clone(),
        };
        let t_end = s.turnovers * turnover_time(&steady.omega_bar)?;
        let opts = run_options(config, p, steady.profile.is_some());
        let d = run(&omega0, t_end, Some(steady), &opts)?;
        out.ndjson("diagnostics.ndjson", &d.rows)?;
        out.json(
            "simulation.json",
            &json!({
                "final_time": t_end,
                "turnover": d.turnover,
                "steps": d.steps,
                "p": p,
                "mass_drift": d.mass_drift(),
                "energy_drift": d.energy_drift(),
                "l1_drift": d.l1_drift(),
                "l2_drift": d.l2_drift(),
                "l4_drift": d.l4_drift(),
                "max_deviation": d.max_deviation(),
            }),
        )?;
        for (step, f) in &d.snapshots {
            out.snapshot(&format!("snapshots/omega_{step:06}"), f, &format!("omega step {step}"))?;
        }
        Ok(())
    }

    fn stability_stage(&mut self, out: &mut Artifacts) -> Result<()> {
        let config = self.config;
        let xi = ladder_xi(config, &self.grid);
        let steady = self.steady()?;
        let s = &config.simulation;
        let mut reports = Vec::new();
        let mut rows = Vec::new();
        for &p in &s.p_norms {
            let r = stability_experiment(steady, &xi, &s.amplitudes, s.stability_turnovers, &run_options(config, p, false))?;
            for row in &r.rows {
                rows.push(vec![
                    fmt(p),
                    fmt(row.amplitude),
                    fmt(row.epsilon),
                    fmt(row.sup_deviation),
                    fmt(row.ratio),
                    fmt(row.energy_drift),
                    fmt(row.mass_drift),
                    fmt(row.l2_drift),
                    row.steps.to_string(),
                ]);
            }
            reports.push(r);
        }
        out.json("stability.json", &json!({ "reports": reports }))?;
        out.csv(
            "summary.csv",
            &["p", "amplitude", "epsilon", "sup_deviation", "ratio", "energy_drift", "mass_drift", "l2_drift", "steps"],
            &rows,
        );
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn sweep_entry(config: &ExperimentConfig) -> Result<(Artifacts, Vec<String>)> {
    let mut out = Artifacts::new(&config.hash());
    let mut pipe = Pipeline::new(config)?;
    let cert = classify_stability(pipe.steady()?)?;
    out.json("certificate.json", &cert)?;
    let report = pipe.energy_stage(&mut out)?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let row = vec![
        config.grid.resolution.to_string(),
        csv_field(&serde_json::to_string(&config.profile)?),
        format!("{:?}", cert.classification),
        fmt(cert.lambda1),
        fmt(cert.mu1),
        opt(cert.delta),
        opt(report.min_gap),
        fmt(report.min_energy_drop),
        fmt(report.max_energy_drop),
    ];
    Ok((out, row))
}

/// Execute one subcommand; nothing is written here.
pub fn run_config(config: &ExperimentConfig, command: Command) -> Result<Artifacts> {
    let mut out = Artifacts::new(&config.hash());
    let mut pipe = Pipeline::new(config)?;
    match command {
        Command::Grid => pipe.grid_stage(&mut out)?,
        Command::Steady => pipe.steady_stage(&mut out)?,
        Command::Certify => pipe.certify_stage(&mut out)?,
        Command::Energy => {
            pipe.energy_stage(&mut out)?;
        }
        Command::Perturb => pipe.perturb_stage(&mut out)?,
        Command::Simulate => pipe.simulate_stage(&mut out)?,
        Command::Experiment => {
            pipe.grid_stage(&mut out)?;
            pipe.steady_stage(&mut out)?;
            pipe.certify_stage(&mut out)?;
            pipe.perturb_stage(&mut out)?;
            pipe.energy_stage(&mut out)?;
            pipe.simulate_stage(&mut out)?;
            pipe.stability_stage(&mut out)?;
        }
        Command::Sweep => {
            let entries: Vec<ExperimentConfig> = if config.sweep.is_empty() {
                vec![config.clone()]
            } else {
                config.sweep.iter().map(|e| config.apply(e)).collect::<Result<_>>()?
            };
            let results = entries.par_iter().map(sweep_entry).collect::<Vec<_>>();
            let mut rows = Vec::new();
            for (i, r) in results.into_iter().enumerate() {
                let (files, mut row) = r?;
                out.absorb(&format!("entry_{i:03}"), files);
                row.insert(0, i.to_string());
                rows.push(row);
            }
            out.csv(
                "sweep.csv",
                &["entry", "resolution", "profile", "classification", "lambda1", "mu1", "delta", "min_gap", "min_energy_drop", "max_energy_drop"],
                &rows,
            );
        }
    }
    Ok(out)
}

/// Exit status for an error: 2 for configuration problems, 1 for I/O, 3 for
/// numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        2
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        3
    }
}

fn execute(cli: &Cli) -> Result<(PathBuf, Vec<PathBuf>)> {
    let path = cli.config.as_ref().ok_or_else(|| config_err("--config is required"))?;
    let config = ExperimentConfig::from_path(path)?;
    let dir = match (&cli.out, &config.output) {
        (Some(d), _) => d.clone(),
        (None, Some(o)) => o.dir.clone(),
        (None, None) => return Err(config_err("no output directory: pass --out or set output.dir")),
    };
    if cli.jobs == Some(0) {
        return Err(config_err("--jobs must be at least 1"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    log::info!("config hash {}", config.hash());
    let artifacts = pool.install(|| run_config(&config, cli.command))?;
    let written = artifacts.write(&dir, cli.command)?;
    Ok((dir, written))
}

/// Parse arguments, run, and return the process exit status.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level).try_init();
    match execute(&cli) {
        Ok((dir, written)) => {
            println!("{}: wrote {} files to {}", cli.command.name(), written.len(), dir.display());
            0
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.module());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"grid": {"shape": {"kind": "rectangle", "lx": 1.0, "ly": 1.0}, "resolution": 16},
        "profile": {"kind": "affine", "alpha_over_lambda1": 0.5, "beta": 1.0}}"#;

    #[test]
    fn defaults_do_not_change_the_hash() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let explicit = BASE.replacen('{', r#"{"seed": 0, "method": "newton", "#, 1);
        let b = ExperimentConfig::from_json(&explicit).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BASE.replacen('{', r#"{"sed": 1, "#, 1);
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().is_config());
        let bad = BASE.replace(r#""beta": 1.0"#, r#""beta": 1.0, "gamma": 2"#);
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().is_config());
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        for bad in [
            BASE.replace("\"resolution\": 16", "\"resolution\": 4"),
            BASE.replace("\"alpha_over_lambda1\": 0.5", "\"alpha_over_lambda1\": 0.5, \"alpha\": 3.0"),
            BASE.replace("\"lx\": 1.0", "\"lx\": -1.0"),
        ] {
            assert!(ExperimentConfig::from_json(&bad).unwrap_err().is_config(), "{bad}");
        }
    }

    #[test]
    fn schema_is_json() {
        let v: Value = serde_json::from_str(CONFIG_SCHEMA).unwrap();
        assert_eq!(v["additionalProperties"], Value::Bool(false));
    }
}
