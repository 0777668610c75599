//! Scenario files, the analysis runner and the artifact manifest behind the `fpklab` binary.
//!
//! Scenarios are TOML. Every emitted file is listed in `manifest.json` with its sha256;
//! the manifest also echoes the parsed scenario so a run can be reproduced from it alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fpklab::cauchy::{evolve_nonlinear, Series, Trajectory};
use fpklab::convergence::{contraction_constants, decay_rate_fit, w1_contraction_check};
use fpklab::drift::{check_h_conditions, sample_test_measures, DriftModel, HCheckOptions, HConstants};
use fpklab::functions::{Constraint, TestFunction};
use fpklab::invariants::{check_membership, track_functional, MembershipOptions};
use fpklab::io;
use fpklab::linear_solver::SolveConfig;
use fpklab::measures::{w1_1d, weighted_tv, DensityField, DiffusionSpec, GridSpec};
use fpklab::particles::{
    cross_validate, empirical_density, simulate, ParticleOptions, Sampler, SeModel, ValidationFunctional,
};
use fpklab::stationary::{branch_sweep, find_stationary, FixedPointOptions, StationaryResult};
use fpklab::FpkError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config {source_name}: {message}")]
    ConfigInvalid { source_name: String, message: String },
    #[error(transparent)]
    Core(#[from] FpkError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSection,
    /// Diagonal of `A`; identity when absent.
    #[serde(default)]
    pub diffusion: Option<Vec<f64>>,
    pub model: DriftModel,
    pub initial: Sampler,
    #[serde(default)]
    pub solver: SolveConfig,
    /// Output directory; `fpklab-out/<name>` when absent.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecayQuantity {
    /// `‖μ_t − μ*‖_W` against the stationary solution.
    #[default]
    WeightedTv,
    /// `|mean_t − reference|` along one axis.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Analysis {
    Evolve,
    Stationary {
        #[serde(default)]
        options: FixedPointOptions,
    },
    BranchSweep {
        q_values: Vec<f64>,
        #[serde(default)]
        options: FixedPointOptions,
    },
    Invariants {
        functions: Vec<TestFunction>,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        options: MembershipOptions,
    },
    Conditions {
        /// Closed-form constants for measures with this mean (or `⟨v, mean⟩`).
        #[serde(default)]
        closed_form: Option<f64>,
        #[serde(default)]
        constants: Option<HConstants>,
        #[serde(default = "default_measure_count")]
        measures: usize,
        #[serde(default)]
        options: HCheckOptions,
    },
    DecayFit {
        #[serde(default)]
        quantity: DecayQuantity,
        #[serde(default)]
        axis: usize,
        #[serde(default)]
        reference: Option<f64>,
        #[serde(default)]
        window: Option<(f64, f64)>,
    },
    W1Check {
        /// Allowed undershoot of `bound − W₁`.
        #[serde(default = "default_w1_tolerance")]
        tolerance: f64,
    },
    Particles {
        #[serde(default)]
        options: ParticleOptions,
        #[serde(default)]
        smooth: bool,
    },
    CrossValidate {
        #[serde(default)]
        options: ParticleOptions,
        #[serde(default)]
        functionals: Vec<ValidationFunctional>,
    },
}

fn default_measure_count() -> usize {
    10
}

fn default_w1_tolerance() -> f64 {
    1e-3
}

impl Analysis {
    pub fn kind(&self) -> &'static str {
        match self {
            Analysis::Evolve => "evolve",
            Analysis::Stationary { .. } => "stationary",
            Analysis::BranchSweep { .. } => "branch-sweep",
            Analysis::Invariants { .. } => "invariants",
            Analysis::Conditions { .. } => "conditions",
            Analysis::DecayFit { .. } => "decay-fit",
            Analysis::W1Check { .. } => "w1-check",
            Analysis::Particles { .. } => "particles",
            Analysis::CrossValidate { .. } => "cross-validate",
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self, CliError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| CliError::ConfigInvalid {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        sc.validate().map_err(|message| CliError::ConfigInvalid {
            source_name: source_name.to_string(),
            message,
        })?;
        Ok(sc)
    }

    pub fn grid(&self) -> fpklab::Result<GridSpec> {
        GridSpec::new(self.grid.lower.clone(), self.grid.upper.clone(), self.grid.cells.clone())
    }

    pub fn diffusion(&self) -> fpklab::Result<DiffusionSpec> {
        match &self.diffusion {
            Some(d) => DiffusionSpec::new(d.clone()),
            None => Ok(DiffusionSpec::identity(self.grid.cells.len())),
        }
    }

    /// Field-level checks; messages name the offending key.
    pub fn validate(&self) -> Result<(), String> {
        let grid = self.grid().map_err(|e| format!("grid: {e}"))?;
        let d = grid.dim();
        let diffusion = self.diffusion().map_err(|e| format!("diffusion: {e}"))?;
        if diffusion.dim() != d {
            return Err(format!("diffusion: expected {d} entries, got {}", diffusion.dim()));
        }
        self.model.validate(d).map_err(|e| format!("model: {e}"))?;
        self.solver.validate().map_err(|e| format!("solver: {e}"))?;
        self.initial.validate().map_err(|e| format!("initial: {e}"))?;
        if self.initial.dim() != d {
            return Err(format!("initial: dimension {} does not match the grid", self.initial.dim()));
        }
        let needs_density = self.analyses.iter().any(|a| {
            !matches!(
                a,
                Analysis::Particles { .. } | Analysis::Conditions { .. } | Analysis::BranchSweep { .. }
            )
        });
        if needs_density {
            self.initial.density(&grid).map_err(|e| format!("initial: {e}"))?;
        }
        for (i, a) in self.analyses.iter().enumerate() {
            let at = |m: String| format!("analyses[{i}] ({}): {m}", a.kind());
            match a {
                Analysis::BranchSweep { q_values, .. } => {
                    if !matches!(self.model, DriftModel::Rvh(_)) {
                        return Err(at("requires model variant \"rvh\"".into()));
                    }
                    if q_values.is_empty() {
                        return Err(at("q_values must not be empty".into()));
                    }
                }
                Analysis::Invariants { functions, .. } => {
                    if self.model.membership_kernel(d).is_none() {
                        return Err(at("model has no affine-base kernel form".into()));
                    }
                    if functions.is_empty() {
                        return Err(at("functions must not be empty".into()));
                    }
                }
                Analysis::Conditions {
                    closed_form,
                    constants,
                    options,
                    ..
                } => {
                    if closed_form.is_none() && constants.is_none() && !options.auto_fit {
                        return Err(at("give closed_form, constants or options.auto_fit".into()));
                    }
                    if closed_form.is_some()
                        && !matches!(self.model, DriftModel::MeanFieldLinear { .. } | DriftModel::Rvh(_))
                    {
                        return Err(at("closed_form needs a mean-field-linear or rvh model".into()));
                    }
                }
                Analysis::W1Check { .. } => {
                    if d != 1 {
                        return Err(at("only one-dimensional grids are supported".into()));
                    }
                    if contraction_constants(&self.model).is_none() {
                        return Err(at("no contraction constants for this model".into()));
                    }
                }
                Analysis::DecayFit { axis, window, .. } => {
                    if *axis >= d {
                        return Err(at(format!("axis {axis} out of range")));
                    }
                    if let Some((a, b)) = window {
                        if !(b > a) {
                            return Err(at("window must be increasing".into()));
                        }
                    }
                }
                Analysis::Particles { options, .. } | Analysis::CrossValidate { options, .. } => {
                    if options.particles < 100 {
                        return Err(at("options.particles must be at least 100".into()));
                    }
                }
                Analysis::Evolve | Analysis::Stationary { .. } => {}
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output {
            Some(p) => PathBuf::from(p),
            None => Path::new("fpklab-out").join(&self.name),
        }
    }
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("example_1_1_eps05", include_str!("../scenarios/example_1_1_eps05.toml")),
    ("example_1_1_critical", include_str!("../scenarios/example_1_1_critical.toml")),
    ("example_1_1_supercritical", include_str!("../scenarios/example_1_1_supercritical.toml")),
    ("example_2d_branch", include_str!("../scenarios/example_2d_branch.toml")),
    ("growing_functional", include_str!("../scenarios/growing_functional.toml")),
    ("particles_cross_check", include_str!("../scenarios/particles_cross_check.toml")),
];

/// Reads a scenario from a path, falling back to the bundled examples by name.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = io::read_text(path)?;
        return Scenario::from_toml(&text, arg);
    }
    match BUNDLED.iter().find(|(name, _)| *name == arg) {
        Some((name, text)) => Scenario::from_toml(text, name),
        None => Err(CliError::ConfigInvalid {
            source_name: arg.to_string(),
            message: "no such file or bundled scenario".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisStatus {
    pub kind: String,
    pub ok: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub analyses: Vec<AnalysisStatus>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    pub exit_code: i32,
}

struct Context<'a> {
    sc: &'a Scenario,
    grid: GridSpec,
    diffusion: DiffusionSpec,
    out: PathBuf,
    files: BTreeMap<String, FileEntry>,
    trajectory: Option<Trajectory>,
    stationary: Option<StationaryResult>,
}

impl Context<'_> {
    fn emit(&mut self, name: &str, text: &str) -> fpklab::Result<()> {
        io::write_text(&self.out.join(name), text)?;
        let entry = FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
            bytes: text.len(),
        };
        self.files.insert(name.to_string(), entry);
        Ok(())
    }

    fn emit_json(&mut self, name: &str, value: &serde_json::Value) -> fpklab::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| FpkError::Parse(e.to_string()))? + "\n";
        self.emit(name, &text)
    }

    fn initial(&self) -> fpklab::Result<DensityField> {
        self.sc.initial.density(&self.grid)
    }

    fn trajectory(&mut self) -> fpklab::Result<&Trajectory> {
        if self.trajectory.is_none() {
            self.run_evolution()?;
        }
        Ok(self.trajectory.as_ref().expect("set by run_evolution"))
    }

    /// Stores the trajectory (partial on blow-up) before reporting errors.
    fn run_evolution(&mut self) -> fpklab::Result<()> {
        let nu = self.initial()?;
        match evolve_nonlinear(&nu, &self.sc.model, &self.diffusion, &self.sc.solver) {
            Ok(t) => {
                self.trajectory = Some(t);
                Ok(())
            }
            Err(FpkError::BlowUp { time, ratio, partial }) => {
                self.trajectory = Some(*partial.clone());
                Err(FpkError::BlowUp { time, ratio, partial })
            }
            Err(e) => Err(e),
        }
    }

    fn stationary(&mut self, options: &FixedPointOptions) -> fpklab::Result<&StationaryResult> {
        if self.stationary.is_none() {
            let guess = self.initial()?;
            let r = find_stationary(&self.sc.model, &self.diffusion, &self.sc.solver, options, &guess)?;
            self.stationary = Some(r);
        }
        Ok(self.stationary.as_ref().expect("just computed"))
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn stationary_json(r: &StationaryResult) -> serde_json::Value {
    json!({
        "converged": r.converged,
        "iterations": r.iterations,
        "residual": r.residual,
        "residuals": r.residuals,
        "mean": r.mean,
        "moment_v": r.moment_v,
        "constraint_values": r.constraint_values,
        "damping": r.damping,
    })
}

fn run_analysis(ctx: &mut Context<'_>, analysis: &Analysis) -> fpklab::Result<String> {
    let sc = ctx.sc;
    match analysis {
        Analysis::Evolve => {
            let result = ctx.run_evolution();
            let traj = ctx.trajectory.clone();
            if let Some(traj) = traj {
                for s in &traj.channels {
                    let text = io::series_csv(s);
                    ctx.emit(&format!("{}.csv", file_stem(&s.name)), &text)?;
                }
                let last = traj.last().ok_or(FpkError::EmptyTrajectory)?;
                ctx.emit("density_final.csv", &io::density_csv(last))?;
                ctx.emit_json(
                    "evolve.json",
                    &json!({
                        "dt": traj.dt,
                        "horizon": traj.horizon(),
                        "snapshots": traj.times,
                        "warnings": traj.warnings,
                    }),
                )?;
            }
            result?;
            let traj = ctx.trajectory.as_ref().expect("evolution succeeded");
            Ok(format!("{} snapshots, dt {:e}", traj.times.len(), traj.dt))
        }
        Analysis::Stationary { options } => {
            ctx.stationary = None;
            let r = ctx.stationary(options)?.clone();
            ctx.emit("stationary.csv", &io::density_csv(&r.density))?;
            ctx.emit_json("stationary.json", &stationary_json(&r))?;
            Ok(format!("converged in {} iterations", r.iterations))
        }
        Analysis::BranchSweep { q_values, options } => {
            let DriftModel::Rvh(model) = &sc.model else {
                return Err(FpkError::InvalidParameter("branch sweep needs an rvh model".into()));
            };
            let results = branch_sweep(model, &ctx.diffusion, &sc.solver, options, &ctx.grid, q_values);
            let mut summary = Vec::new();
            let mut first_error = None;
            for (q, r) in q_values.iter().zip(results) {
                match r {
                    Ok(r) => {
                        ctx.emit(&format!("branch_q{q}.csv"), &io::density_csv(&r.density))?;
                        let mut j = stationary_json(&r);
                        j["q"] = json!(q);
                        j["moment_bound"] = json!(fpklab::stationary::rvh_moment_bound(model, *q));
                        summary.push(j);
                    }
                    Err(e) => {
                        summary.push(json!({ "q": q, "error": e.to_string() }));
                        first_error.get_or_insert(e);
                    }
                }
            }
            ctx.emit_json("branch_sweep.json", &json!(summary))?;
            match first_error {
                Some(e) => Err(e),
                None => Ok(format!("{} branches", q_values.len())),
            }
        }
        Analysis::Invariants {
            functions,
            lambda,
            options,
        } => {
            let d = ctx.grid.dim();
            let kernel = sc
                .model
                .membership_kernel(d)
                .ok_or_else(|| FpkError::InvalidParameter("model has no kernel form".into()))?;
            let mut rows = Vec::new();
            let mut classes = Vec::new();
            for psi in functions {
                let report = check_membership(psi, &kernel, &ctx.diffusion, &sc.solver.weight, *lambda, options)?;
                let track = track_functional(ctx.trajectory()?, psi)?;
                ctx.emit(&format!("psi_{}.csv", file_stem(&psi.name())), &io::series_csv(&track.series))?;
                classes.push(format!("{}: {:?}", psi.name(), report.class));
                rows.push(json!({
                    "function": psi.name(),
                    "report": report,
                    "law": track.law,
                    "relative_deviation": track.relative_deviation,
                }));
            }
            ctx.emit_json("invariants.json", &json!(rows))?;
            Ok(classes.join("; "))
        }
        Analysis::Conditions {
            closed_form,
            constants,
            measures,
            options,
        } => {
            let d = ctx.grid.dim();
            let (constraints, candidate) = match (closed_form, &sc.model) {
                (Some(q), DriftModel::Rvh(m)) => (
                    vec![Constraint::new(TestFunction::linear(m.v.clone()), *q)],
                    Some(HConstants::rvh(m, *q)),
                ),
                (Some(q), _) => (
                    vec![Constraint::new(TestFunction::linear(vec![1.0; d]), *q)],
                    Some(HConstants::mean_field(*q)),
                ),
                (None, _) => (Vec::new(), *constants),
            };
            let ms = sample_test_measures(&ctx.grid, &constraints, *measures, options.seed)?;
            let r = check_h_conditions(&sc.model, &sc.solver.weight, &ctx.diffusion, &ms, candidate, options)?;
            ctx.emit_json("conditions.json", &json!(r))?;
            if r.violated {
                return Err(FpkError::InvalidParameter(format!(
                    "constants violated: margins h1 {:e}, h2 {:e}, h3 {:e}",
                    r.margin_h1, r.margin_h2, r.margin_h3
                )));
            }
            Ok(format!("{} samples, no violation", r.sample_count))
        }
        Analysis::DecayFit {
            quantity,
            axis,
            reference,
            window,
        } => {
            let (times, values, file) = match quantity {
                DecayQuantity::WeightedTv => {
                    let target = ctx.stationary(&FixedPointOptions::default())?.density.clone();
                    let traj = ctx.trajectory()?;
                    let mut series = Series::new("weighted_tv");
                    for (t, s) in traj.times.iter().zip(&traj.snapshots) {
                        series.push(*t, weighted_tv(s, &target, &sc.solver.weight)?);
                    }
                    (series.times.clone(), series.values.clone(), ("tv_decay", series))
                }
                DecayQuantity::Mean => {
                    let r = match reference {
                        Some(r) => *r,
                        None => ctx.stationary(&FixedPointOptions::default())?.mean[*axis],
                    };
                    let mean = ctx
                        .trajectory()?
                        .channel(&format!("mean_{axis}"))
                        .ok_or(FpkError::EmptyTrajectory)?;
                    let mut series = Series::new("mean_offset");
                    for (t, m) in mean.times.iter().zip(&mean.values) {
                        series.push(*t, (m - r).abs());
                    }
                    (series.times.clone(), series.values.clone(), ("mean_decay", series))
                }
            };
            ctx.emit(&format!("{}.csv", file.0), &io::series_csv(&file.1))?;
            let fit = decay_rate_fit(&times, &values, *window)?;
            ctx.emit_json(
                &format!("{}_fit.json", file.0),
                &json!({
                    "quantity": quantity,
                    "alpha1": fit.alpha1,
                    "alpha2": fit.alpha2,
                    "r2": fit.r2,
                    "window": [fit.window.0, fit.window.1],
                }),
            )?;
            Ok(format!("alpha2 {:.6}, r2 {:.6}", fit.alpha2, fit.r2))
        }
        Analysis::W1Check { tolerance } => {
            let target = ctx.stationary(&FixedPointOptions::default())?.density.clone();
            let (kappa, c) = contraction_constants(&sc.model)
                .ok_or_else(|| FpkError::InvalidParameter("no contraction constants".into()))?;
            let traj = ctx.trajectory()?.clone();
            let mut series = Series::new("w1");
            for (t, s) in traj.times.iter().zip(&traj.snapshots) {
                series.push(*t, w1_1d(s, &target)?);
            }
            ctx.emit("w1.csv", &io::series_csv(&series))?;
            let r = w1_contraction_check(&traj, &target, kappa, c)?;
            ctx.emit_json("w1_check.json", &json!(r))?;
            if r.min_margin < -tolerance {
                return Err(FpkError::InvalidParameter(format!(
                    "contraction bound exceeded by {:e} (tolerance {tolerance:e})",
                    -r.min_margin
                )));
            }
            Ok(format!("min margin {:.3e}", r.min_margin))
        }
        Analysis::Particles { options, smooth } => {
            let run = simulate(&sc.initial, &sc.model, &ctx.diffusion, options)?;
            let last = run.last();
            ctx.emit("ensemble_final.csv", &io::ensemble_csv(last))?;
            let emp = empirical_density(last, &ctx.grid, *smooth)?;
            ctx.emit("particle_density.csv", &io::density_csv(&emp.density))?;
            ctx.emit_json(
                "particles.json",
                &json!({
                    "particles": last.len(),
                    "dt": run.dt,
                    "snapshots": run.times(),
                    "out_of_box": emp.out_of_box,
                    "warnings": run.warnings,
                }),
            )?;
            Ok(format!("{} particles, {} outside the grid", last.len(), emp.out_of_box))
        }
        Analysis::CrossValidate { options, functionals } => {
            let d = ctx.grid.dim();
            let functionals = if functionals.is_empty() {
                (0..d)
                    .flat_map(|axis| {
                        [ValidationFunctional::Mean { axis }, ValidationFunctional::Variance { axis }]
                    })
                    .collect()
            } else {
                functionals.clone()
            };
            let cfg = SolveConfig {
                horizon: options.horizon,
                snapshot_stride: options.snapshot_stride,
                ..sc.solver.clone()
            };
            let traj = evolve_nonlinear(&ctx.initial()?, &sc.model, &ctx.diffusion, &cfg)?;
            let run = simulate(&sc.initial, &sc.model, &ctx.diffusion, options)?;
            let cv = cross_validate(&run, &traj, &functionals, SeModel::for_model(&sc.model, &ctx.diffusion))?;
            let mut csv = String::from("functional,t,particle,pde,se,z,flagged\n");
            for r in &cv.rows {
                csv.push_str(&format!(
                    "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                    r.functional, r.t, r.particle, r.pde, r.se, r.z, r.flagged
                ));
            }
            ctx.emit("cross_validation.csv", &csv)?;
            ctx.emit_json(
                "cross_validation.json",
                &json!({ "flagged": cv.flagged, "max_z": cv.max_z, "rows": cv.rows.len() }),
            )?;
            if cv.flagged > 0 {
                return Err(FpkError::InvalidParameter(format!(
                    "{} rows beyond {} standard errors (max z {:.2})",
                    cv.flagged,
                    fpklab::particles::FLAG_Z,
                    cv.max_z
                )));
            }
            Ok(format!("{} rows within {} standard errors", cv.rows.len(), fpklab::particles::FLAG_Z))
        }
    }
}

/// Runs every analysis in order and writes the manifest. Analysis failures give exit code 2.
pub fn run_scenario(sc: &Scenario, out_override: Option<&Path>) -> Result<RunReport, CliError> {
    let out = out_override.map(Path::to_path_buf).unwrap_or_else(|| sc.output_dir());
    std::fs::create_dir_all(&out).map_err(|e| CliError::ConfigInvalid {
        source_name: sc.name.clone(),
        message: format!("output directory {} is not writable: {e}", out.display()),
    })?;
    let mut ctx = Context {
        sc,
        grid: sc.grid()?,
        diffusion: sc.diffusion()?,
        out: out.clone(),
        files: BTreeMap::new(),
        trajectory: None,
        stationary: None,
    };
    let mut statuses = Vec::new();
    for a in &sc.analyses {
        let status = match run_analysis(&mut ctx, a) {
            Ok(message) => AnalysisStatus {
                kind: a.kind().into(),
                ok: true,
                message,
            },
            Err(e) => AnalysisStatus {
                kind: a.kind().into(),
                ok: false,
                message: e.to_string(),
            },
        };
        statuses.push(status);
    }
    let manifest = Manifest {
        scenario: sc.clone(),
        analyses: statuses,
        files: ctx.files.into_values().collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| FpkError::Parse(e.to_string()))? + "\n";
    io::write_text(&out.join("manifest.json"), &text)?;
    let exit_code = if manifest.analyses.iter().all(|a| a.ok) { 0 } else { 2 };
    Ok(RunReport {
        manifest,
        out_dir: out,
        exit_code,
    })
}
