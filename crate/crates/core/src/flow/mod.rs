//! Gradient flow of solutions of the sphere equation, their critical set,
//! the collision map, and calibrating curves rebuilt from `(rho, sigma)`.
//!
//! With `u(rho s) = rho^(1-k) v(s)` a calibrating curve `gamma = rho sigma`
//! of `u` solves
//!
//! `rho' = (1-k) rho^(-k) v(sigma)`, `sigma' = rho^(-(1+k)) grad_S v(sigma)`,
//!
//! so `sigma` follows the gradient flow of `v` in the parameter `tau` with
//! `tau' = rho^(-(1+k))`.

mod field;
mod ode;
#[cfg(test)]
mod tests;

pub use field::{AnalyticField, SampledField, SphereField};
pub use ode::{integrate, OdeEnd, OdeOptions, OdeStatus};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ejection::psi_closed_form;
use crate::error::{Error, Result};
use crate::parallel;
use crate::space::{
    is_collision, mass_inner, min_mutual_distance, potential, potential_gradient, Configuration,
    MassSystem,
};
use crate::spherehj::{SphereChart, SphereFunction};
use crate::weakkam::same_chamber;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowOptions {
    pub ode: OdeOptions,
    /// Stop once the minimal mutual distance drops below this fraction of
    /// its value at the start.
    pub collision_fraction: f64,
    /// Gradient norm at which a trajectory counts as converged.
    pub critical_tol: f64,
    pub tau_max: f64,
    /// Allowed decrease of `direction * v` per step.
    pub monotone_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            collision_fraction: 0.02,
            critical_tol: 1e-8,
            tau_max: 1e4,
            monotone_tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowEvent {
    ConvergedToCritical,
    ReachedCollisionMargin,
    LeftChart,
    StepLimit,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrajectory {
    pub direction: i32,
    pub tau: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub event: FlowEvent,
    /// Critical point reached, if any.
    pub terminal_point: Option<Vec<f64>>,
    /// Label of the nearest collision component at a margin stop.
    pub terminal_component: Option<String>,
    pub steps: usize,
    pub rejected: usize,
    /// Steps along which `direction * v` fell by more than the tolerance.
    pub monotone_violations: usize,
    pub worst_decrease: f64,
}

fn check_point(chart: &SphereChart, p: &[f64]) -> Result<Configuration> {
    if p.len() != chart.dimension() || p.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("point does not match the chart dimension"));
    }
    let c = chart.config(p);
    if is_collision(&c) {
        return Err(Error::domain("point lies on the collision set"));
    }
    Ok(c)
}

/// Reduce periodic parameters to their fundamental ranges.
fn canonical(p: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    match p.len() {
        1 => vec![p[0].rem_euclid(TAU)],
        _ => {
            let mut a = p[0].rem_euclid(TAU);
            let mut b = p[1];
            if a > PI {
                a = TAU - a;
                b += PI;
            }
            vec![a, b.rem_euclid(TAU)]
        }
    }
}

fn nearest_label(chart: &SphereChart, p: &[f64]) -> Option<String> {
    chart
        .nearest_collision(p)
        .map(|(k, _)| chart.collisions[k].label.clone())
}

fn max_spacing(chart: &SphereChart) -> f64 {
    (0..chart.dimension())
        .map(|d| chart.spacing(d))
        .fold(0.0, f64::max)
}

/// `theta' = direction * grad v(theta)` from `s0` until a terminal event.
pub fn gradient_flow(
    field: &dyn SphereField,
    s0: &[f64],
    direction: i32,
    opts: &FlowOptions,
) -> Result<FlowTrajectory> {
    if direction != 1 && direction != -1 {
        return Err(Error::arg("direction must be +1 or -1"));
    }
    if !(opts.collision_fraction > 0.0 && opts.collision_fraction < 1.0) || !(opts.tau_max > 0.0) {
        return Err(Error::arg("invalid flow options"));
    }
    let chart = field.chart();
    let c0 = check_point(chart, s0)?;
    let (v0, _, n0) = field
        .gradient(s0)
        .ok_or_else(|| Error::domain("field is undefined at the start point"))?;
    let floor = opts.collision_fraction * min_mutual_distance(&c0);
    let sign = direction as f64;

    let mut traj = FlowTrajectory {
        direction,
        tau: vec![0.0],
        points: vec![canonical(s0)],
        values: vec![v0],
        event: FlowEvent::StepLimit,
        terminal_point: None,
        terminal_component: None,
        steps: 0,
        rejected: 0,
        monotone_violations: 0,
        worst_decrease: 0.0,
    };
    if n0.sqrt() <= opts.critical_tol {
        traj.event = FlowEvent::ConvergedToCritical;
        traj.terminal_point = Some(traj.points[0].clone());
        return Ok(traj);
    }
    // leaving the starting chamber means a step jumped over a collision
    let rhs = |_: f64, p: &[f64]| {
        if !same_chamber(&c0, &chart.config(p)) {
            return None;
        }
        field
            .gradient(p)
            .map(|(_, g, _)| g.into_iter().map(|g| sign * g).collect())
    };
    let mut event = None;
    let end = integrate(rhs, 0.0, s0, opts.tau_max, &opts.ode, |tau, p| {
        let Some((v, _, n2)) = field.gradient(p) else {
            return true;
        };
        let prev = *traj.values.last().unwrap();
        let drop = sign * (prev - v);
        if drop > opts.monotone_tol {
            traj.monotone_violations += 1;
        }
        traj.worst_decrease = traj.worst_decrease.max(drop);
        traj.tau.push(tau);
        traj.points.push(canonical(p));
        traj.values.push(v);
        if min_mutual_distance(&chart.config(p)) < floor {
            event = Some(FlowEvent::ReachedCollisionMargin);
            return false;
        }
        if n2.sqrt() <= opts.critical_tol {
            event = Some(FlowEvent::ConvergedToCritical);
            return false;
        }
        true
    });
    traj.steps = end.steps;
    traj.rejected = end.rejected;
    let last = traj.points.last().unwrap().clone();
    traj.event = match (event, end.status) {
        (Some(e), _) => e,
        (None, OdeStatus::Undefined) => {
            // sampled fields stop one cell short of the collision set
            if chart.distance_to_collisions(&end.y) <= 2.0 * max_spacing(chart) {
                FlowEvent::ReachedCollisionMargin
            } else {
                FlowEvent::LeftChart
            }
        }
        _ => FlowEvent::StepLimit,
    };
    match traj.event {
        FlowEvent::ConvergedToCritical => traj.terminal_point = Some(last),
        FlowEvent::ReachedCollisionMargin => traj.terminal_component = nearest_label(chart, &last),
        _ => {}
    }
    Ok(traj)
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroPoint {
    pub node: usize,
    /// Node parameters shifted to the vertex of the local quadratic fit.
    pub params: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub psi: f64,
    /// `| |v| - psi |` at the refined point.
    pub discrepancy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroSetReport {
    pub points: Vec<ZeroPoint>,
    /// Every node with a defined stencil qualifies: the gradient vanishes identically.
    pub degenerate: bool,
    pub tested: usize,
}

/// Nodes where the discrete gradient norm is at most `tol`, each refined by
/// a quadratic fit per axis and compared with `psi`.
pub fn zero_set(sys: &MassSystem, v: &SphereFunction, tol: f64) -> ZeroSetReport {
    let ch = &v.chart;
    let k = sys.kappa();
    let mut points = Vec::new();
    let mut tested = 0;
    for i in 0..ch.n_nodes() {
        let Ok(g2) = v.gradient_norm2(i) else {
            continue;
        };
        if !g2.is_finite() || !v.values[i].is_finite() {
            continue;
        }
        tested += 1;
        if g2.sqrt() > tol {
            continue;
        }
        let mi = ch.multi_index(i);
        let mut p = ch.node_params(i);
        let mut value = v.values[i];
        for (d, pd) in p.iter_mut().enumerate() {
            let (lo, hi) = ch.neighbours(&mi, d).unwrap();
            let (a, b) = (v.values[lo], v.values[hi]);
            let h = ch.spacing(d);
            let slope = (b - a) / (2.0 * h);
            let curv = (a - 2.0 * v.values[i] + b) / (h * h);
            if curv != 0.0 {
                let delta = (-slope / curv).clamp(-0.5 * h, 0.5 * h);
                *pd += delta;
                value += slope * delta + 0.5 * curv * delta * delta;
            }
        }
        let psi = psi_closed_form(k, potential(sys, &ch.config(&p)));
        points.push(ZeroPoint {
            node: i,
            params: p,
            value,
            gradient_norm: g2.sqrt(),
            psi,
            discrepancy: (value.abs() - psi).abs(),
        });
    }
    ZeroSetReport {
        degenerate: tested > 0 && points.len() == tested,
        points,
        tested,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionMapOptions {
    pub flow: FlowOptions,
    /// Samples whose gradient norm is below this sit in the margin of the
    /// critical set and are excluded.
    pub zero_tol: f64,
    /// Treat the sample list as a closed loop when looking for boundaries.
    pub cyclic: bool,
    /// Bisection steps across each detected basin boundary.
    pub refine: usize,
}

impl Default for CollisionMapOptions {
    fn default() -> Self {
        Self {
            flow: FlowOptions::default(),
            zero_tol: 1e-6,
            cyclic: false,
            refine: 12,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Excluded {
    pub sample: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasinBoundary {
    /// Adjacent samples with different labels.
    pub samples: (usize, usize),
    pub labels: (String, String),
    /// Parameters of the straddling pair after refinement.
    pub straddle: (Vec<f64>, Vec<f64>),
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CollisionMapReport {
    /// Per sample: its label, or `None` when excluded.
    pub labels: Vec<Option<String>>,
    pub excluded: Vec<Excluded>,
    /// Every collision component of the chart with its hit count.
    pub hits: Vec<(String, usize)>,
    pub all_hit: bool,
    pub boundaries: Vec<BasinBoundary>,
    /// False outside the Newtonian case with dim E >= 2, where the
    /// foliation result is not claimed; outputs there are experimental.
    pub hypotheses_hold: bool,
}

fn flow_label(t: &FlowTrajectory) -> String {
    match t.event {
        FlowEvent::ReachedCollisionMargin => t
            .terminal_component
            .clone()
            .unwrap_or_else(|| "collision".into()),
        FlowEvent::ConvergedToCritical => "critical".into(),
        FlowEvent::LeftChart => "left-chart".into(),
        FlowEvent::StepLimit => "step-limit".into(),
    }
}

/// Parameters a fraction `s` of the way from `a` to `b`, along the shorter
/// arc on periodic axes.
fn between(chart: &SphereChart, a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(d, (x, y))| {
            let mut dy = y - x;
            if chart.periodic(d) {
                dy = (dy + PI).rem_euclid(TAU) - PI;
            }
            x + s * dy
        })
        .collect()
}

fn param_gap(chart: &SphereChart, a: &[f64], b: &[f64]) -> f64 {
    let m = between(chart, a, b, 1.0);
    m.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Flow each sample forward to the collision margin and label it by the
/// component it reaches. Observations only: continuity and surjectivity are
/// probed, not asserted.
pub fn collision_map(
    sys: &MassSystem,
    field: &dyn SphereField,
    samples: &[Vec<f64>],
    opts: &CollisionMapOptions,
) -> Result<CollisionMapReport> {
    let chart = field.chart();
    let mut excluded = Vec::new();
    let mut kept = Vec::new();
    for (i, p) in samples.iter().enumerate() {
        if check_point(chart, p).is_err() {
            excluded.push(Excluded {
                sample: i,
                reason: "on the collision set or malformed".into(),
            });
            continue;
        }
        match field.gradient(p) {
            None => excluded.push(Excluded {
                sample: i,
                reason: "field undefined".into(),
            }),
            Some((_, _, n2)) if n2.sqrt() < opts.zero_tol => excluded.push(Excluded {
                sample: i,
                reason: "inside the critical-set margin".into(),
            }),
            _ => kept.push(i),
        }
    }
    let flows: Vec<Result<FlowTrajectory>> =
        parallel::map(&kept, |&i| gradient_flow(field, &samples[i], 1, &opts.flow));
    let mut labels: Vec<Option<String>> = vec![None; samples.len()];
    for (&i, f) in kept.iter().zip(flows) {
        labels[i] = Some(flow_label(&f?));
    }
    let hits: Vec<(String, usize)> = chart
        .collisions
        .iter()
        .map(|c| {
            let n = labels.iter().filter(|l| l.as_deref() == Some(&c.label)).count();
            (c.label.clone(), n)
        })
        .collect();
    let all_hit = hits.iter().all(|h| h.1 > 0);

    let mut pairs: Vec<(usize, usize)> = kept.windows(2).map(|w| (w[0], w[1])).collect();
    if opts.cyclic && kept.len() > 2 {
        pairs.push((kept[kept.len() - 1], kept[0]));
    }
    let mut boundaries = Vec::new();
    for (i, j) in pairs {
        let (la, lb) = (labels[i].clone().unwrap(), labels[j].clone().unwrap());
        if la == lb {
            continue;
        }
        let (mut a, mut b) = (samples[i].clone(), samples[j].clone());
        for _ in 0..opts.refine {
            let m = between(chart, &a, &b, 0.5);
            let lm = match field.gradient(&m) {
                Some((_, _, n2)) if n2.sqrt() >= opts.zero_tol && check_point(chart, &m).is_ok() => {
                    gradient_flow(field, &m, 1, &opts.flow).map(|t| flow_label(&t)).ok()
                }
                _ => None,
            };
            match lm {
                Some(l) if l == la => a = m,
                Some(l) if l == lb => b = m,
                _ => break,
            }
        }
        boundaries.push(BasinBoundary {
            samples: (i, j),
            labels: (la, lb),
            gap: param_gap(chart, &a, &b),
            straddle: (a, b),
        });
    }
    Ok(CollisionMapReport {
        labels,
        excluded,
        hits,
        all_hit,
        boundaries,
        hypotheses_hold: newtonian_planar(sys),
    })
}

fn newtonian_planar(sys: &MassSystem) -> bool {
    sys.dim() >= 2 && sys.kappa() == 0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateOptions {
    pub ode: OdeOptions,
    /// Output times, evenly spaced over the span.
    pub samples: usize,
    /// Finite-difference step for the acceleration, relative to the local
    /// time scale `rho / |gamma'|`.
    pub fd_rel: f64,
    /// Truncate when `rho` falls below this fraction of `rho0`.
    pub rho_min_fraction: f64,
    pub collision_fraction: f64,
    pub monotone_tol: f64,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions {
                rtol: 1e-12,
                atol: 1e-14,
                ..OdeOptions::default()
            },
            samples: 101,
            fd_rel: 2e-4,
            rho_min_fraction: 1e-6,
            collision_fraction: 0.02,
            monotone_tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrateEvent {
    Completed,
    TotalCollision,
    CollisionMargin,
    /// The field became undefined or the integrator failed.
    Unstable,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibratingReconstruction {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    /// Gradient-flow parameter, `tau' = rho^(-(1+k))`.
    pub tau: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub path: Vec<Configuration>,
    pub v: Vec<f64>,
    pub newton_residual: Vec<f64>,
    pub energy_residual: Vec<f64>,
    pub max_newton_residual: f64,
    pub max_energy_residual: f64,
    /// Steps of `v(sigma)` falling by more than the tolerance.
    pub v_violations: usize,
    pub max_angular_speed: f64,
    /// Largest `|d/dt rho^(1+k)| = (1-k^2) |v|`, an empirical blow-up rate.
    pub blowup_rate: f64,
    pub event: CalibrateEvent,
    pub hypotheses_hold: bool,
}

struct Calibrator<'a> {
    sys: &'a MassSystem,
    field: &'a dyn SphereField,
    start: Configuration,
}

impl Calibrator<'_> {
    /// State `[rho, tau, p..]`.
    fn rhs(&self, y: &[f64]) -> Option<Vec<f64>> {
        let k = self.sys.kappa();
        let rho = y[0];
        if !(rho > 0.0) {
            return None;
        }
        if !same_chamber(&self.start, &self.field.chart().config(&y[2..])) {
            return None;
        }
        let (v, g, _) = self.field.gradient(&y[2..])?;
        let w = rho.powf(-(1.0 + k));
        let mut out = Vec::with_capacity(y.len());
        out.push((1.0 - k) * rho.powf(-k) * v);
        out.push(w);
        out.extend(g.iter().map(|g| w * g));
        Some(out)
    }

    /// Position and velocity of `gamma = rho sigma`.
    fn motion(&self, y: &[f64]) -> Option<(Configuration, Configuration, Configuration)> {
        let ch = self.field.chart();
        let d = self.rhs(y)?;
        let p = &y[2..];
        let sigma = ch.config(p);
        let t = ch.tangents(p);
        let mut sdot = Configuration::zeros(sigma.n_bodies(), sigma.dim());
        for (a, ta) in t.iter().enumerate() {
            sdot = sdot.axpy(d[2 + a], &ch.combine(ta));
        }
        let gamma = sigma.scaled(y[0]);
        let vel = sigma.scaled(d[0]).axpy(y[0], &sdot);
        Some((gamma, vel, sdot))
    }

    fn advance(&self, t0: f64, y: &[f64], t1: f64, o: &OdeOptions) -> OdeEnd {
        integrate(|_, y| self.rhs(y), t0, y, t1, o, |_, _| true)
    }
}

fn norm(sys: &MassSystem, x: &Configuration) -> f64 {
    mass_inner(sys, x, x).map(f64::sqrt).unwrap_or(f64::NAN)
}

/// Integrate the `(rho, sigma)` system from `(rho0, s0)` over `[0, span]`
/// and check the assembled curve against Newton's equation and zero energy.
pub fn reconstruct_calibrating(
    sys: &MassSystem,
    field: &dyn SphereField,
    s0: &[f64],
    rho0: f64,
    span: f64,
    opts: &CalibrateOptions,
) -> Result<CalibratingReconstruction> {
    if !(rho0 > 0.0 && rho0.is_finite()) || !(span > 0.0) || opts.samples < 2 {
        return Err(Error::arg("need rho0 > 0, span > 0 and at least two samples"));
    }
    if !(opts.fd_rel > 0.0 && opts.fd_rel < 0.1) {
        return Err(Error::arg("fd_rel must lie in (0, 0.1)"));
    }
    let ch = field.chart();
    let c0 = check_point(ch, s0)?;
    if field.gradient(s0).is_none() {
        return Err(Error::domain("field is undefined at the start point"));
    }
    let k = sys.kappa();
    let cal = Calibrator {
        sys,
        field,
        start: c0.clone(),
    };
    let floor = opts.collision_fraction * min_mutual_distance(&c0);
    let rho_min = opts.rho_min_fraction * rho0;

    let mut rec = CalibratingReconstruction {
        times: Vec::new(),
        rho: Vec::new(),
        tau: Vec::new(),
        sigma: Vec::new(),
        path: Vec::new(),
        v: Vec::new(),
        newton_residual: Vec::new(),
        energy_residual: Vec::new(),
        max_newton_residual: 0.0,
        max_energy_residual: 0.0,
        v_violations: 0,
        max_angular_speed: 0.0,
        blowup_rate: 0.0,
        event: CalibrateEvent::Completed,
        hypotheses_hold: newtonian_planar(sys),
    };
    let mut y: Vec<f64> = [rho0, 0.0].into_iter().chain(s0.iter().copied()).collect();
    let n = opts.samples;
    for i in 0..n {
        let t = span * i as f64 / (n - 1) as f64;
        if i > 0 {
            let t_prev = *rec.times.last().unwrap();
            let mut stop = None;
            let end = integrate(
                |_, y| cal.rhs(y),
                t_prev,
                &y,
                t,
                &opts.ode,
                |_, y| {
                    if y[0] < rho_min {
                        stop = Some(CalibrateEvent::TotalCollision);
                    } else if min_mutual_distance(&ch.config(&y[2..])) < floor {
                        stop = Some(CalibrateEvent::CollisionMargin);
                    }
                    stop.is_none()
                },
            );
            if let Some(e) = stop {
                rec.event = e;
                break;
            }
            if end.status != OdeStatus::Reached {
                rec.event = CalibrateEvent::Unstable;
                break;
            }
            y = end.y;
        }
        let Some((gamma, vel, sdot)) = cal.motion(&y) else {
            rec.event = CalibrateEvent::Unstable;
            break;
        };
        let v = field.gradient(&y[2..]).unwrap().0;
        let u = potential(sys, &gamma);
        let speed = norm(sys, &vel);
        rec.energy_residual.push((0.5 * speed * speed - u).abs() / u);
        // acceleration by central differences of the velocity
        let h = opts.fd_rel * y[0] / speed;
        let side = |dt: f64| {
            let e = cal.advance(t, &y, t + dt, &opts.ode);
            if e.status != OdeStatus::Reached {
                return None;
            }
            cal.motion(&e.y).map(|m| m.1)
        };
        let newton = match (side(h), side(-h), potential_gradient(sys, &gamma)) {
            (Some(vp), Some(vm), Ok(g)) => {
                let acc = vp.sub(&vm).scaled(0.5 / h);
                norm(sys, &acc.sub(&g)) / norm(sys, &g)
            }
            _ => f64::NAN,
        };
        rec.newton_residual.push(newton);
        if let Some(prev) = rec.v.last() {
            if prev - v > opts.monotone_tol {
                rec.v_violations += 1;
            }
        }
        rec.max_angular_speed = rec.max_angular_speed.max(norm(sys, &sdot));
        rec.blowup_rate = rec.blowup_rate.max((1.0 - k * k) * v.abs());
        rec.times.push(t);
        rec.rho.push(y[0]);
        rec.tau.push(y[1]);
        rec.sigma.push(canonical(&y[2..]));
        rec.path.push(gamma);
        rec.v.push(v);
    }
    let fold = |xs: &[f64]| xs.iter().filter(|x| x.is_finite()).fold(0.0, |a: f64, x| a.max(*x));
    rec.max_newton_residual = fold(&rec.newton_residual);
    rec.max_energy_residual = fold(&rec.energy_residual);
    if rec.newton_residual.iter().any(|x| x.is_nan()) {
        rec.max_newton_residual = f64::NAN;
    }
    Ok(rec)
}

pub fn write_trajectory_csv<W: Write>(t: &FlowTrajectory, w: W) -> Result<()> {
    let mut wr = crate::io::csv_writer(w);
    let dim = t.points.first().map_or(0, |p| p.len());
    let mut header = vec!["tau".to_string()];
    header.extend((0..dim).map(|d| format!("p{d}")));
    header.push("v".into());
    wr.write_record(&header)?;
    for ((tau, p), v) in t.tau.iter().zip(&t.points).zip(&t.values) {
        let mut rec = vec![crate::io::fmt17(*tau)];
        rec.extend(p.iter().map(|x| crate::io::fmt17(*x)));
        rec.push(crate::io::fmt17(*v));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_reconstruction_csv<W: Write>(r: &CalibratingReconstruction, w: W) -> Result<()> {
    let mut wr = crate::io::csv_writer(w);
    let dim = r.sigma.first().map_or(0, |p| p.len());
    let mut header = vec!["t".to_string(), "rho".into(), "tau".into()];
    header.extend((0..dim).map(|d| format!("p{d}")));
    header.extend(["v".into(), "newton_residual".into(), "energy_residual".into()]);
    wr.write_record(&header)?;
    for i in 0..r.times.len() {
        let mut rec = vec![
            crate::io::fmt17(r.times[i]),
            crate::io::fmt17(r.rho[i]),
            crate::io::fmt17(r.tau[i]),
        ];
        rec.extend(r.sigma[i].iter().map(|x| crate::io::fmt17(*x)));
        rec.push(crate::io::fmt17(r.v[i]));
        rec.push(crate::io::fmt17(r.newton_residual[i]));
        rec.push(crate::io::fmt17(r.energy_residual[i]));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
