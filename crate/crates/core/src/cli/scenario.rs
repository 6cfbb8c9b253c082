//! Scenario files and the task runners behind them.
//!
//! A scenario names the mass system, one task and that task's options.
//! Options are decoded into the task's typed struct (unknown keys rejected)
//! before anything is computed. Runners produce their files in memory, so a
//! failing run leaves nothing half-written.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{lower_bound, minimize_fixed_time, minimize_free_time, ActionOptions};
use crate::catalog;
use crate::central::{find_central, CentralConfiguration};
use crate::ejection::{is_minimizing, make_ejection, psi_by_quadrature};
use crate::error::{Error, Result};
use crate::flow::{
    collision_map, gradient_flow, reconstruct_calibrating, write_reconstruction_csv,
    write_trajectory_csv, AnalyticField, CalibrateEvent, CalibrateOptions, CollisionMapOptions,
    SampledField, SphereField,
};
use crate::io::{csv_writer, fmt17, ConfigDocument};
use crate::space::{
    mass_distance, normalize_to_sphere, project_cm, Configuration, MassSystem,
};
use crate::spherehj::{solve_hjh, write_sphere_csv, HjhOptions, SphereChart, SphereFunction};
use crate::weakkam::{homogenize, iterate_weak_kam, Chart, GridFunction, WeakKamOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    CentralFind,
    MinimizingTest,
    Phi,
    WeakKam,
    SphereHj,
    Flow,
    Calibrate,
    Busemann,
    Ejection,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::CentralFind => "central-find",
            Task::MinimizingTest => "minimizing-test",
            Task::Phi => "phi",
            Task::WeakKam => "weak-kam",
            Task::SphereHj => "sphere-hj",
            Task::Flow => "flow",
            Task::Calibrate => "calibrate",
            Task::Busemann => "busemann",
            Task::Ejection => "ejection",
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for every output file; the working directory when absent.
    pub dir: Option<String>,
    /// File name stem; the task name when absent.
    pub stem: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Masses, dimension and kappa, optionally with a configuration that
    /// tasks refer to as `"system"`.
    pub system: ConfigDocument,
    pub task: Task,
    #[serde(default)]
    pub options: Value,
    #[serde(default)]
    pub output: OutputSpec,
    /// Seed for randomized sampling.
    #[serde(default)]
    pub seed: u64,
}

/// A configuration given by catalog id (`"lagrange"`, `"euler-2"`,
/// `"kepler"`), by `"system"` (the scenario's positions), by `"origin"`,
/// by explicit positions, or as a multiple of another reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigRef {
    Named(String),
    Positions(Vec<Vec<f64>>),
    Scaled { of: Box<ConfigRef>, scale: f64 },
}

impl ConfigRef {
    fn named(s: &str) -> Self {
        ConfigRef::Named(s.into())
    }

    pub fn resolve(&self, sys: &MassSystem, doc: &ConfigDocument) -> Result<Configuration> {
        match self {
            ConfigRef::Named(id) => match id.as_str() {
                "origin" => Ok(Configuration::zeros_like(sys)),
                "system" => doc.configuration(),
                _ => catalog::catalog(sys)?
                    .into_iter()
                    .find(|e| e.id == *id)
                    .map(|e| e.central.s)
                    .ok_or_else(|| Error::arg(format!("unknown configuration '{id}'"))),
            },
            ConfigRef::Positions(rows) => {
                let c = Configuration::from_positions(rows)?;
                if c.n_bodies() != sys.n_bodies() || c.dim() != sys.dim() {
                    return Err(Error::arg("positions do not match the system"));
                }
                Ok(c)
            }
            ConfigRef::Scaled { of, scale } => {
                if !scale.is_finite() {
                    return Err(Error::arg("scale must be finite"));
                }
                Ok(of.resolve(sys, doc)?.scaled(*scale))
            }
        }
    }

    fn label(&self) -> String {
        match self {
            ConfigRef::Named(id) => id.clone(),
            ConfigRef::Positions(_) => "positions".into(),
            ConfigRef::Scaled { of, scale } => format!("{}*{}", scale, of.label()),
        }
    }
}

/// One output file held in memory.
#[derive(Clone, Debug)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    /// Short JSON summary, also printed to standard output.
    pub summary: Value,
    pub files: Vec<OutputFile>,
    /// Set when the task ran but a solve did not converge.
    pub convergence_failure: Option<String>,
    /// Options with defaults filled in, as recorded in the manifest.
    pub resolved_options: Value,
}

fn decode<T: serde::de::DeserializeOwned + Default>(v: &Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Validation(format!("invalid options: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("options serialize")
}

fn json_file(name: String, v: &Value) -> OutputFile {
    let mut bytes = serde_json::to_vec_pretty(v).expect("json");
    bytes.push(b'\n');
    OutputFile { name, bytes }
}

fn csv_file(name: String, header: &[&str], rows: &[Vec<String>]) -> Result<OutputFile> {
    let mut wr = csv_writer(Vec::new());
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r)?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(OutputFile { name, bytes })
}

fn buffer<F: FnOnce(&mut Vec<u8>) -> Result<()>>(name: String, f: F) -> Result<OutputFile> {
    let mut bytes = Vec::new();
    f(&mut bytes)?;
    Ok(OutputFile { name, bytes })
}

/// Typed options of every task; decoding them is the validation step.
pub enum TaskOptions {
    CentralFind(CentralFindOptions),
    MinimizingTest(MinimizingOptions),
    Phi(PhiOptions),
    WeakKam(WeakKamTaskOptions),
    SphereHj(SphereHjTaskOptions),
    Flow(FlowTaskOptions),
    Calibrate(CalibrateTaskOptions),
    Busemann(BusemannOptions),
    Ejection(EjectionOptions),
}

impl TaskOptions {
    pub fn decode(task: Task, v: &Value) -> Result<Self> {
        Ok(match task {
            Task::CentralFind => TaskOptions::CentralFind(decode(v)?),
            Task::MinimizingTest => TaskOptions::MinimizingTest(decode(v)?),
            Task::Phi => TaskOptions::Phi(decode(v)?),
            Task::WeakKam => TaskOptions::WeakKam(decode(v)?),
            Task::SphereHj => TaskOptions::SphereHj(decode(v)?),
            Task::Flow => TaskOptions::Flow(decode(v)?),
            Task::Calibrate => TaskOptions::Calibrate(decode(v)?),
            Task::Busemann => TaskOptions::Busemann(decode(v)?),
            Task::Ejection => TaskOptions::Ejection(decode(v)?),
        })
    }

    /// Checks numeric settings that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        let checked = match self {
            TaskOptions::CentralFind(o) if !(o.tol > 0.0) || o.max_iter == 0 => {
                Err(Error::arg("central-find needs tol > 0 and max_iter > 0"))
            }
            TaskOptions::MinimizingTest(o) if !(o.factor > 0.0) => {
                Err(Error::arg("factor must be positive"))
            }
            TaskOptions::MinimizingTest(o) => o.action.validate(),
            TaskOptions::Phi(o) => o.action.validate(),
            TaskOptions::Busemann(o) => o.action.validate(),
            TaskOptions::WeakKam(o) => o.weak.validate(),
            TaskOptions::SphereHj(o) => o.hjh.weak.validate(),
            TaskOptions::Flow(FlowTaskOptions {
                field: FieldSpec::Solved { hjh, .. },
                ..
            })
            | TaskOptions::Calibrate(CalibrateTaskOptions {
                field: FieldSpec::Solved { hjh, .. },
                ..
            }) => hjh.weak.validate(),
            _ => Ok(()),
        };
        checked.map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn to_value(&self) -> Value {
        match self {
            TaskOptions::CentralFind(o) => to_value(o),
            TaskOptions::MinimizingTest(o) => to_value(o),
            TaskOptions::Phi(o) => to_value(o),
            TaskOptions::WeakKam(o) => to_value(o),
            TaskOptions::SphereHj(o) => to_value(o),
            TaskOptions::Flow(o) => to_value(o),
            TaskOptions::Calibrate(o) => to_value(o),
            TaskOptions::Busemann(o) => to_value(o),
            TaskOptions::Ejection(o) => to_value(o),
        }
    }
}

/// Everything checked before a task starts.
pub struct Prepared {
    pub scenario: Scenario,
    pub system: MassSystem,
    pub options: TaskOptions,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let system = scenario.system.system()?;
        if scenario.system.positions.is_some() {
            scenario.system.configuration()?;
        }
        let options = TaskOptions::decode(scenario.task, &scenario.options)?;
        options.validate()?;
        Ok(Self {
            scenario,
            system,
            options,
        })
    }

    pub fn stem(&self) -> String {
        self.scenario
            .output
            .stem
            .clone()
            .unwrap_or_else(|| self.scenario.task.name().to_string())
    }

    pub fn run(&self) -> Result<Outcome> {
        let stem = self.stem();
        let (sys, doc, seed) = (&self.system, &self.scenario.system, self.scenario.seed);
        let mut out = match &self.options {
            TaskOptions::CentralFind(o) => central_find(sys, doc, seed, o, &stem),
            TaskOptions::MinimizingTest(o) => minimizing_test(sys, doc, o, &stem),
            TaskOptions::Phi(o) => phi(sys, doc, o, &stem),
            TaskOptions::WeakKam(o) => weak_kam(sys, o, &stem),
            TaskOptions::SphereHj(o) => sphere_hj(sys, o, &stem),
            TaskOptions::Flow(o) => flow(sys, o, &stem),
            TaskOptions::Calibrate(o) => calibrate(sys, o, &stem),
            TaskOptions::Busemann(o) => busemann(sys, doc, o, &stem),
            TaskOptions::Ejection(o) => ejection(sys, doc, o, &stem),
        }?;
        out.resolved_options = self.options.to_value();
        Ok(out)
    }
}

fn outcome(summary: Value, files: Vec<OutputFile>, failure: Option<String>) -> Outcome {
    Outcome {
        summary,
        files,
        convergence_failure: failure,
        resolved_options: Value::Null,
    }
}

// ---------------------------------------------------------------- central-find

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralFindOptions {
    /// Explicit seeds, tried first.
    pub seeds: Vec<ConfigRef>,
    /// Additional seeds with coordinates uniform in [-1, 1].
    pub random_seeds: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CentralFindOptions {
    fn default() -> Self {
        Self {
            seeds: Vec::new(),
            random_seeds: 8,
            tol: 1e-12,
            max_iter: 500,
        }
    }
}

fn central_find(
    sys: &MassSystem,
    doc: &ConfigDocument,
    seed: u64,
    o: &CentralFindOptions,
    stem: &str,
) -> Result<Outcome> {
    let mut seeds: Vec<(String, Configuration)> = Vec::new();
    for r in &o.seeds {
        seeds.push((r.label(), r.resolve(sys, doc)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..o.random_seeds {
        let c: Vec<f64> = (0..sys.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        seeds.push((
            format!("random-{k}"),
            Configuration::new(sys.n_bodies(), sys.dim(), c)?,
        ));
    }
    if seeds.is_empty() {
        return Err(Error::Validation("no seeds requested".into()));
    }
    let found: Vec<Option<CentralConfiguration>> = crate::parallel::map(&seeds, |(_, s)| {
        find_central(sys, s, o.tol, o.max_iter).ok()
    });
    let umin = found
        .iter()
        .flatten()
        .map(|c| c.potential)
        .fold(f64::INFINITY, f64::min);
    let mut header = vec!["seed", "converged", "U", "multiplier", "residual", "is_minimal"];
    let names: Vec<String> = (0..sys.len()).map(|k| format!("x{k}")).collect();
    header.extend(names.iter().map(String::as_str));
    let mut rows = Vec::new();
    for ((label, _), c) in seeds.iter().zip(&found) {
        let mut r = vec![label.clone()];
        match c {
            Some(c) => {
                let minimal = c.potential <= umin + 1e-8 * umin.abs();
                r.extend([
                    "true".into(),
                    fmt17(c.potential),
                    fmt17(c.multiplier),
                    fmt17(c.residual),
                    minimal.to_string(),
                ]);
                r.extend(c.s.coords().iter().map(|v| fmt17(*v)));
            }
            None => {
                r.extend(["false", "nan", "nan", "nan", "false"].map(String::from));
                r.extend((0..sys.len()).map(|_| "nan".to_string()));
            }
        }
        rows.push(r);
    }
    let n_ok = found.iter().flatten().count();
    let failure = (n_ok == 0).then(|| "no seed converged to a central configuration".to_string());
    let summary = json!({"seeds": seeds.len(), "converged": n_ok, "minimal_U": umin});
    Ok(outcome(
        summary,
        vec![csv_file(format!("{stem}.csv"), &header, &rows)?],
        failure,
    ))
}

// ------------------------------------------------------------- minimizing-test

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizingOptions {
    /// Central configurations to test; the whole catalog when empty.
    pub configurations: Vec<ConfigRef>,
    /// Separation factor between the gap and its error estimate.
    pub factor: f64,
    pub action: ActionOptions,
}

impl Default for MinimizingOptions {
    fn default() -> Self {
        Self {
            configurations: Vec::new(),
            factor: 5.0,
            action: ActionOptions::default(),
        }
    }
}

fn minimizing_test(
    sys: &MassSystem,
    doc: &ConfigDocument,
    o: &MinimizingOptions,
    stem: &str,
) -> Result<Outcome> {
    let list: Vec<ConfigRef> = if o.configurations.is_empty() {
        catalog::catalog(sys)?
            .into_iter()
            .map(|e| ConfigRef::Named(e.id))
            .collect()
    } else {
        o.configurations.clone()
    };
    let mut targets = Vec::new();
    for r in &list {
        targets.push((r.label(), normalize_to_sphere(sys, &r.resolve(sys, doc)?)?));
    }
    let results = crate::parallel::map(&targets, |(_, s)| {
        is_minimizing(sys, s, &o.action, o.factor)
    });
    let header = [
        "id", "U", "psi", "phi_upper", "gap", "error_estimate", "verdict", "optimal_time",
    ];
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut verdicts = serde_json::Map::new();
    for ((id, s), r) in targets.iter().zip(results) {
        let u = crate::space::potential(sys, s);
        match r {
            Ok(v) => {
                verdicts.insert(id.clone(), json!(v.verdict.as_str()));
                rows.push(vec![
                    id.clone(),
                    fmt17(u),
                    fmt17(v.psi),
                    fmt17(v.phi_upper),
                    fmt17(v.gap),
                    fmt17(v.error_estimate),
                    v.verdict.as_str().into(),
                    fmt17(v.optimal_time.unwrap_or(f64::NAN)),
                ]);
            }
            Err(e @ (Error::Convergence { .. } | Error::Range(_))) => {
                failures.push(format!("{id}: {e}"));
                verdicts.insert(id.clone(), json!("failed"));
                let mut row = vec![id.clone(), fmt17(u)];
                row.extend(["nan", "nan", "nan", "nan", "failed", "nan"].map(String::from));
                rows.push(row);
            }
            Err(e) => return Err(e),
        }
    }
    let failure = (!failures.is_empty()).then(|| failures.join("; "));
    Ok(outcome(
        json!({ "verdicts": verdicts }),
        vec![csv_file(format!("{stem}.csv"), &header, &rows)?],
        failure,
    ))
}

// ------------------------------------------------------------------------ phi

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiOptions {
    pub x: ConfigRef,
    pub y: ConfigRef,
    /// Fixed time; the free-time value `phi(x, y)` when absent.
    pub t: Option<f64>,
    /// Cells of the fixed-time mesh (free-time solves use `action.nodes`).
    pub cells: usize,
    pub action: ActionOptions,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self {
            x: ConfigRef::named("origin"),
            y: ConfigRef::named("system"),
            t: None,
            cells: 128,
            action: ActionOptions::default(),
        }
    }
}

fn phi(sys: &MassSystem, doc: &ConfigDocument, o: &PhiOptions, stem: &str) -> Result<Outcome> {
    let x = o.x.resolve(sys, doc)?;
    let y = o.y.resolve(sys, doc)?;
    let res = match o.t {
        Some(t) => minimize_fixed_time(sys, &x, &y, t, o.cells, &o.action)?,
        None => minimize_free_time(sys, &x, &y, &o.action)?,
    };
    let bound = match o.t {
        Some(t) => lower_bound(sys, &x, &y, t)?,
        None => f64::NAN,
    };
    let summary = json!({
        "value": res.value,
        "optimal_time": res.optimal_time,
        "error_estimate": res.error_estimate,
        "coarse_value": res.coarse_value,
        "converged": res.converged,
        "iterations": res.iterations,
        "lower_bound": o.t.map(|_| bound),
        "distance": mass_distance(sys, &x, &y)?,
    });
    let path = buffer(format!("{stem}_path.csv"), |b| res.path.write_csv(b))?;
    let failure = (!res.converged).then(|| "action minimization did not converge".to_string());
    Ok(outcome(
        summary.clone(),
        vec![json_file(format!("{stem}.json"), &summary), path],
        failure,
    ))
}

// ------------------------------------------------------------------- weak-kam

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChartSpec {
    /// Radial line through the two-body configuration.
    KeplerRay { lo: f64, hi: f64, n: usize },
    /// Square in the plane of the first two reduced basis vectors.
    Plane { half: f64, n: usize },
    /// Cone over the circle of the first two reduced basis vectors.
    Cone {
        n_theta: usize,
        per_unit: usize,
        r_max: f64,
    },
}

impl ChartSpec {
    fn build(&self, sys: &MassSystem) -> Result<Chart> {
        match *self {
            ChartSpec::KeplerRay { lo, hi, n } => Chart::kepler_ray(sys, lo, hi, n),
            ChartSpec::Plane { half, n } => Chart::plane(sys, "plane", half, n),
            ChartSpec::Cone {
                n_theta,
                per_unit,
                r_max,
            } => {
                let b = crate::weakkam::reduced_basis(sys, 2)?;
                Chart::cone(sys, "cone", &b[0], &b[1], n_theta, per_unit, r_max)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakKamTaskOptions {
    pub chart: ChartSpec,
    /// Lax-Oleinik time step.
    pub t: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Scale factors for a final homogenization; skipped when empty.
    pub homogenize: Vec<f64>,
    pub weak: WeakKamOptions,
}

impl Default for WeakKamTaskOptions {
    fn default() -> Self {
        Self {
            chart: ChartSpec::KeplerRay {
                lo: 0.1,
                hi: 4.0,
                n: 40,
            },
            t: 0.3,
            tol: 1e-10,
            max_sweeps: 2000,
            homogenize: Vec::new(),
            weak: WeakKamOptions {
                inner_nodes: 32,
                ghost_layers: 64,
                ..WeakKamOptions::default()
            },
        }
    }
}

fn weak_kam(sys: &MassSystem, o: &WeakKamTaskOptions, stem: &str) -> Result<Outcome> {
    let chart = o.chart.build(sys)?;
    chart.validate(sys)?;
    let it = iterate_weak_kam(
        sys,
        &GridFunction::constant(&chart, 0.0),
        o.t,
        o.tol,
        o.max_sweeps,
        &o.weak,
    )?;
    let u = if o.homogenize.is_empty() {
        it.u.clone()
    } else {
        homogenize(sys, &it.u, &o.homogenize)?
    };
    let summary = json!({
        "iterations": it.iterations,
        "converged": it.converged,
        "residual": it.residual,
        "boundary_argmins": it.boundary_argmins,
        "inner_failures": it.failures,
        "phi_error": it.phi_error,
        "interpolation_error": u.interpolation_error(),
        "homogenized": !o.homogenize.is_empty(),
    });
    let mut report = summary.clone();
    report["residual_history"] = json!(it.residual_history);
    report["min_increment_history"] = json!(it.min_increment_history);
    let grid = buffer(format!("{stem}.csv"), |b| u.write_csv(b))?;
    let failure = (!it.converged).then(|| {
        format!(
            "weak KAM iteration stopped after {} sweeps with change {:.3e}",
            it.iterations, it.residual
        )
    });
    Ok(outcome(
        summary,
        vec![grid, json_file(format!("{stem}.json"), &report)],
        failure,
    ))
}

// ------------------------------------------------------------------ sphere-hj

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereHjTaskOptions {
    /// Nodes on the circle through the first two reduced basis vectors.
    pub nodes: usize,
    pub hjh: HjhOptions,
}

impl Default for SphereHjTaskOptions {
    fn default() -> Self {
        Self {
            nodes: 128,
            hjh: HjhOptions::default(),
        }
    }
}

fn solve_circle(sys: &MassSystem, nodes: usize, hjh: &HjhOptions) -> Result<crate::spherehj::HjhSolution> {
    let chart = SphereChart::reduced_circle(sys, "circle", nodes)?;
    solve_hjh(sys, &chart, hjh)
}

fn sphere_hj(sys: &MassSystem, o: &SphereHjTaskOptions, stem: &str) -> Result<Outcome> {
    let sol = solve_circle(sys, o.nodes, &o.hjh)?;
    let summary = json!({
        "nodes": o.nodes,
        "sweeps": sol.sweeps,
        "converged": sol.converged,
        "iterate_residual": sol.iterate_residual,
        "residual": sol.residual,
        "viscosity_tested": sol.viscosity_tested,
        "viscosity_sub_failures": sol.viscosity_sub_failures,
        "viscosity_super_failures": sol.viscosity_super_failures,
        "boundary_argmins": sol.boundary_argmins,
        "inner_failures": sol.inner_failures,
    });
    let grid = buffer(format!("{stem}.csv"), |b| write_sphere_csv(sys, &sol.v, b))?;
    let failure = (!sol.converged).then(|| "sphere solve did not converge".to_string());
    Ok(outcome(
        summary.clone(),
        vec![grid, json_file(format!("{stem}.json"), &summary)],
        failure,
    ))
}

// ---------------------------------------------------------------- flow fields

/// Function on the sphere driving `flow` and `calibrate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Solve the sphere equation on a circle and use `v = phi(0, .)`, the
    /// negative of the solver output, which is positive on minimizing
    /// configurations.
    Solved { nodes: usize, hjh: HjhOptions },
    /// Two bodies in the plane: `v = amplitude cos((1-k)(theta - phase))`,
    /// an exact solution when `amplitude` is `psi` (the default).
    KeplerWave {
        phase: f64,
        amplitude: Option<f64>,
    },
    /// Constant `v`, `psi` by default.
    Constant { value: Option<f64> },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Solved {
            nodes: 128,
            hjh: HjhOptions::default(),
        }
    }
}

fn kepler_psi(sys: &MassSystem) -> Result<f64> {
    Ok(make_ejection(sys, &catalog::kepler(sys)?)?.psi)
}

fn planar_kepler(sys: &MassSystem) -> Result<()> {
    if sys.n_bodies() != 2 || sys.dim() != 2 {
        return Err(Error::Validation(
            "analytic fields need two bodies in the plane".into(),
        ));
    }
    Ok(())
}

impl FieldSpec {
    fn build(&self, sys: &MassSystem) -> Result<Box<dyn SphereField>> {
        match self {
            FieldSpec::Solved { nodes, hjh } => {
                let sol = solve_circle(sys, *nodes, hjh)?;
                let v = SphereFunction::new(
                    sol.v.chart.clone(),
                    sol.v.values.iter().map(|x| -x).collect(),
                )?;
                Ok(Box::new(SampledField::new(v)))
            }
            FieldSpec::KeplerWave { phase, amplitude } => {
                planar_kepler(sys)?;
                let a = amplitude.unwrap_or(kepler_psi(sys)?);
                let (k, ph) = (1.0 - sys.kappa(), *phase);
                let chart = SphereChart::reduced_circle(sys, "kepler", 64)?;
                Ok(Box::new(AnalyticField::new(chart, move |p: &[f64]| {
                    let x = k * (p[0] - ph);
                    Some((a * x.cos(), vec![-a * k * x.sin()]))
                })))
            }
            FieldSpec::Constant { value } => {
                planar_kepler(sys)?;
                let c = value.unwrap_or(kepler_psi(sys)?);
                let chart = SphereChart::reduced_circle(sys, "kepler", 64)?;
                Ok(Box::new(AnalyticField::new(chart, move |_: &[f64]| {
                    Some((c, vec![0.0]))
                })))
            }
        }
    }
}

// ----------------------------------------------------------------------- flow

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowTaskOptions {
    pub field: FieldSpec,
    /// Evenly spaced starting angles, offset by half a step.
    pub samples: usize,
    /// Explicit starting parameters, used instead of `samples` when given.
    pub points: Vec<Vec<f64>>,
    pub map: CollisionMapOptions,
    /// Also write one trajectory file per sample.
    pub trajectories: bool,
}

impl Default for FlowTaskOptions {
    fn default() -> Self {
        Self {
            field: FieldSpec::default(),
            samples: 36,
            points: Vec::new(),
            map: CollisionMapOptions {
                cyclic: true,
                ..CollisionMapOptions::default()
            },
            trajectories: false,
        }
    }
}

fn flow(sys: &MassSystem, o: &FlowTaskOptions, stem: &str) -> Result<Outcome> {
    let points: Vec<Vec<f64>> = if o.points.is_empty() {
        if o.samples == 0 {
            return Err(Error::Validation("need samples or points".into()));
        }
        (0..o.samples)
            .map(|k| vec![(k as f64 + 0.5) * TAU / o.samples as f64])
            .collect()
    } else {
        o.points.clone()
    };
    let field = o.field.build(sys)?;
    let rep = collision_map(sys, field.as_ref(), &points, &o.map)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&rep.labels)
        .enumerate()
        .map(|(k, (p, l))| {
            let mut r = vec![k.to_string()];
            r.extend(p.iter().map(|x| fmt17(*x)));
            r.push(l.clone().unwrap_or_else(|| "excluded".into()));
            r
        })
        .collect();
    let dims = points.first().map_or(1, Vec::len);
    let names: Vec<String> = (0..dims).map(|d| format!("p{d}")).collect();
    let mut header = vec!["sample"];
    header.extend(names.iter().map(String::as_str));
    header.push("label");
    let mut files = vec![
        csv_file(format!("{stem}.csv"), &header, &rows)?,
        json_file(format!("{stem}.json"), &to_value(&rep)),
    ];
    if o.trajectories {
        let trajs = crate::parallel::map(&points, |p| gradient_flow(field.as_ref(), p, 1, &o.map.flow));
        for (k, t) in trajs.into_iter().enumerate() {
            if let Ok(t) = t {
                files.push(buffer(format!("{stem}_trajectory_{k}.csv"), |b| {
                    write_trajectory_csv(&t, b)
                })?);
            }
        }
    }
    let summary = json!({
        "hits": rep.hits,
        "all_hit": rep.all_hit,
        "excluded": rep.excluded.len(),
        "boundaries": rep.boundaries.len(),
        "hypotheses_hold": rep.hypotheses_hold,
    });
    Ok(outcome(summary, files, None))
}

// ------------------------------------------------------------------ calibrate

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateTaskOptions {
    pub field: FieldSpec,
    /// Starting parameters on the chart.
    pub start: Vec<f64>,
    pub rho0: f64,
    pub span: f64,
    pub calibrate: CalibrateOptions,
}

impl Default for CalibrateTaskOptions {
    fn default() -> Self {
        Self {
            field: FieldSpec::Constant { value: None },
            start: vec![0.3],
            rho0: 1.0,
            span: 1.0,
            calibrate: CalibrateOptions::default(),
        }
    }
}

fn calibrate(sys: &MassSystem, o: &CalibrateTaskOptions, stem: &str) -> Result<Outcome> {
    let field = o.field.build(sys)?;
    let r = reconstruct_calibrating(sys, field.as_ref(), &o.start, o.rho0, o.span, &o.calibrate)?;
    let summary = json!({
        "event": r.event,
        "samples": r.times.len(),
        "final_time": r.times.last(),
        "final_rho": r.rho.last(),
        "max_newton_residual": r.max_newton_residual,
        "max_energy_residual": r.max_energy_residual,
        "v_violations": r.v_violations,
        "max_angular_speed": r.max_angular_speed,
        "blowup_rate": r.blowup_rate,
        "hypotheses_hold": r.hypotheses_hold,
    });
    let csv = buffer(format!("{stem}.csv"), |b| write_reconstruction_csv(&r, b))?;
    let failure = (r.event == CalibrateEvent::Unstable)
        .then(|| "calibrating curve integration became unstable".to_string());
    Ok(outcome(
        summary.clone(),
        vec![csv, json_file(format!("{stem}.json"), &summary)],
        failure,
    ))
}

// ------------------------------------------------------------------- busemann

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusemannOptions {
    /// Minimizing configuration whose ray is followed.
    pub target: ConfigRef,
    pub x: ConfigRef,
    pub times: Vec<f64>,
    pub tol: f64,
    pub action: ActionOptions,
}

impl Default for BusemannOptions {
    fn default() -> Self {
        Self {
            target: ConfigRef::named("kepler"),
            x: ConfigRef::named("system"),
            times: vec![1.0, 10.0, 100.0, 1000.0],
            tol: 2e-2,
            action: ActionOptions {
                estimate_error: false,
                ..ActionOptions::default()
            },
        }
    }
}

fn busemann(
    sys: &MassSystem,
    doc: &ConfigDocument,
    o: &BusemannOptions,
    stem: &str,
) -> Result<Outcome> {
    let s = normalize_to_sphere(sys, &o.target.resolve(sys, doc)?)?;
    let x = project_cm(sys, &o.x.resolve(sys, doc)?)?;
    let b = crate::weakkam::busemann(sys, &s, &x, &o.times, o.tol, &o.action)?;
    let rows: Vec<Vec<String>> = b
        .history
        .iter()
        .enumerate()
        .map(|(k, (t, v))| {
            let d = if k == 0 { f64::NAN } else { b.differences[k - 1] };
            vec![fmt17(*t), fmt17(*v), fmt17(d)]
        })
        .collect();
    let summary = json!({
        "value": b.value,
        "converged": b.converged,
        "last_difference": b.differences.last(),
    });
    let failure = (!b.converged).then(|| "Busemann sequence has not settled".to_string());
    Ok(outcome(
        summary.clone(),
        vec![
            csv_file(format!("{stem}.csv"), &["t", "value", "difference"], &rows)?,
            json_file(format!("{stem}.json"), &summary),
        ],
        failure,
    ))
}

// ------------------------------------------------------------------- ejection

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EjectionOptions {
    pub configuration: ConfigRef,
    /// Sample times as multiples of `t(s)`.
    pub times: Vec<f64>,
    /// Nodes of the quadrature check of `psi`.
    pub quadrature_nodes: usize,
}

impl Default for EjectionOptions {
    fn default() -> Self {
        Self {
            configuration: ConfigRef::named("system"),
            times: (-3..=3).map(|k| 10f64.powi(k)).collect(),
            quadrature_nodes: 2000,
        }
    }
}

fn ejection(
    sys: &MassSystem,
    doc: &ConfigDocument,
    o: &EjectionOptions,
    stem: &str,
) -> Result<Outcome> {
    let s = normalize_to_sphere(sys, &o.configuration.resolve(sys, doc)?)?;
    let ej = make_ejection(sys, &s)?;
    let mut samples = Vec::new();
    for f in &o.times {
        let t = f * ej.t_unit;
        let (kin, pot) = ej.energy(sys, t)?;
        samples.push(json!({
            "t": t,
            "radius": ej.radius(t),
            "newton_residual": ej.newton_residual(sys, t)?,
            "kinetic": kin,
            "potential": pot,
            "energy_closed_form": ej.energy_closed_form(t),
        }));
    }
    let report = json!({
        "kappa": ej.kappa,
        "c": ej.c_kappa,
        "alpha": ej.alpha,
        "t_s": ej.t_unit,
        "psi": ej.psi,
        "psi_quadrature": psi_by_quadrature(sys, &s, o.quadrature_nodes)?,
        "U": ej.potential_s,
        "s": ej.s.positions(),
        "samples": samples,
    });
    Ok(outcome(
        report.clone(),
        vec![json_file(format!("{stem}.json"), &report)],
        None,
    ))
}
