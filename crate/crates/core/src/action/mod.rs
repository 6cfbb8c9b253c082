//! Discrete Lagrangian action and its fixed-time and free-time minima.
//!
//! The action of a path is the midpoint rule
//! `sum_j 1/2 |x_{j+1} - x_j|^2 / dt_j + dt_j U((x_j + x_{j+1})/2)`
//! in the mass metric. Minimization runs a damped Newton iteration on the
//! interior nodes, exploiting the block-tridiagonal Hessian.

mod blocktri;
mod newton;

use std::io::Write;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{action_grading, graded_steps, refine_steps, Grading};
use crate::space::{
    is_collision, is_reduced, mass_distance, mass_inner_raw, potential, project_cm, Configuration,
    MassSystem,
};
use newton::{DiscreteProblem, NewtonSettings};

/// Discrete trajectory. Cell lengths are stored directly so that meshes
/// graded toward the final time keep their resolution.
#[derive(Debug, Serialize, Deserialize)]
pub struct Path {
    t0: f64,
    dt: Vec<f64>,
    nodes: Vec<Configuration>,
    #[serde(skip)]
    cache: OnceLock<(u64, f64)>,
}

impl Clone for Path {
    fn clone(&self) -> Self {
        Self {
            t0: self.t0,
            dt: self.dt.clone(),
            nodes: self.nodes.clone(),
            cache: OnceLock::new(),
        }
    }
}

impl PartialEq for Path {
    fn eq(&self, other: &Self) -> bool {
        self.t0 == other.t0 && self.dt == other.dt && self.nodes == other.nodes
    }
}

impl Path {
    pub fn new(times: Vec<f64>, nodes: Vec<Configuration>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::arg("path needs at least one node"));
        }
        let dt = times.windows(2).map(|w| w[1] - w[0]).collect();
        Self::from_steps(times[0], dt, nodes)
    }

    pub fn from_steps(t0: f64, dt: Vec<f64>, nodes: Vec<Configuration>) -> Result<Self> {
        if dt.len() + 1 != nodes.len() {
            return Err(Error::arg("path needs one configuration per time node"));
        }
        if dt.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::arg("path times must be strictly increasing"));
        }
        if nodes.iter().any(|c| !c.same_shape(&nodes[0])) {
            return Err(Error::arg("path nodes differ in shape"));
        }
        Ok(Self {
            t0,
            dt,
            nodes,
            cache: OnceLock::new(),
        })
    }

    fn raw(t0: f64, dt: Vec<f64>, nodes: Vec<Configuration>) -> Self {
        Self {
            t0,
            dt,
            nodes,
            cache: OnceLock::new(),
        }
    }

    /// Absolute node times (cumulative; may round near the end of a graded mesh).
    pub fn times(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.nodes.len());
        let mut acc = self.t0;
        t.push(acc);
        for h in &self.dt {
            acc += h;
            t.push(acc);
        }
        t
    }

    pub fn steps(&self) -> &[f64] {
        &self.dt
    }

    pub fn nodes(&self) -> &[Configuration] {
        &self.nodes
    }

    pub fn cells(&self) -> usize {
        self.dt.len()
    }

    pub fn duration(&self) -> f64 {
        self.dt.iter().sum()
    }

    pub fn start(&self) -> &Configuration {
        &self.nodes[0]
    }

    pub fn end(&self) -> &Configuration {
        &self.nodes[self.nodes.len() - 1]
    }

    /// Same nodes and steps starting at another time.
    pub fn shifted(&self, t0: f64) -> Self {
        Self::raw(t0, self.dt.clone(), self.nodes.clone())
    }

    /// Discrete action, cached per system.
    pub fn action(&self, sys: &MassSystem) -> f64 {
        let key = system_key(sys);
        if let Some((k, v)) = self.cache.get() {
            if *k == key {
                return *v;
            }
        }
        let v = action(sys, self);
        let _ = self.cache.set((key, v));
        v
    }

    /// Rows of `t` followed by the flattened coordinates.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = crate::io::csv_writer(w);
        let len = self.nodes[0].coords().len();
        let mut header = vec!["t".to_string()];
        header.extend((0..len).map(|k| format!("x{k}")));
        wr.write_record(&header)?;
        let times = self.times();
        for (k, c) in self.nodes.iter().enumerate() {
            let mut rec = vec![crate::io::fmt17(times[k])];
            rec.extend(c.coords().iter().map(|v| crate::io::fmt17(*v)));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn system_key(sys: &MassSystem) -> u64 {
    let mut h: u64 = 1469598103934665603;
    let mut feed = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(1099511628211);
    };
    feed(sys.kappa().to_bits());
    feed(sys.dim() as u64);
    feed(sys.potential_enabled() as u64);
    for m in sys.masses() {
        feed(m.to_bits());
    }
    h
}

/// Midpoint-rule discrete action; `+inf` if a midpoint collides.
pub fn action(sys: &MassSystem, path: &Path) -> f64 {
    if path.dt.is_empty() {
        return 0.0;
    }
    let dt = path.dt.clone();
    let b = sys.len();
    let mut z = Vec::with_capacity((path.nodes.len() - 2) * b);
    for c in &path.nodes[1..path.nodes.len() - 1] {
        z.extend_from_slice(c.coords());
    }
    DiscreteProblem {
        sys,
        dt,
        start: path.start().coords(),
        end: path.end().coords(),
    }
    .value(&z)
}

/// Kinetic lower bound `|x - y|^2 / (2t)`.
pub fn lower_bound(sys: &MassSystem, x: &Configuration, y: &Configuration, t: f64) -> Result<f64> {
    let d = mass_distance(sys, x, y)?;
    Ok(0.5 * d * d / t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionOptions {
    /// Newton stops when the squared Newton decrement falls below this
    /// fraction of the action value.
    pub gtol: f64,
    pub max_iter: usize,
    /// Also solve on the midpoint-refined mesh and report the difference.
    pub estimate_error: bool,
    /// Relative amplitude of the transverse bend added to warm starts.
    pub perturbation: f64,
    /// Cells used by free-time searches.
    pub nodes: usize,
    /// Free-time bracket as factors of the natural time scale.
    pub t_min_factor: f64,
    pub t_max_factor: f64,
    pub scan_per_decade: usize,
    /// Relative tolerance on the optimal time.
    pub t_rel_tol: f64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-14,
            max_iter: 200,
            estimate_error: true,
            perturbation: 1e-3,
            nodes: 128,
            t_min_factor: 1e-3,
            t_max_factor: 1e3,
            scan_per_decade: 2,
            t_rel_tol: 1e-4,
        }
    }
}

impl ActionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gtol > 0.0) || self.max_iter == 0 || self.nodes < 2 {
            return Err(Error::arg("invalid action options"));
        }
        if !(self.t_min_factor > 0.0 && self.t_max_factor > self.t_min_factor) {
            return Err(Error::arg("invalid free-time bracket"));
        }
        if self.scan_per_decade == 0 || !(self.t_rel_tol > 0.0) {
            return Err(Error::arg("invalid free-time search settings"));
        }
        Ok(())
    }

    fn settings(&self) -> NewtonSettings {
        NewtonSettings {
            rel_tol: self.gtol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiResult {
    pub value: f64,
    pub optimal_time: Option<f64>,
    pub path: Path,
    pub converged: bool,
    pub error_estimate: f64,
    /// Value on the unrefined mesh (equal to `value` without error estimation).
    pub coarse_value: f64,
    pub iterations: usize,
}

fn check_endpoints(sys: &MassSystem, x: &Configuration, y: &Configuration) -> Result<()> {
    for c in [x, y] {
        if c.n_bodies() != sys.n_bodies() || c.dim() != sys.dim() {
            return Err(Error::arg("endpoint shape does not match the system"));
        }
        if c.coords().iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("endpoint has non-finite coordinates"));
        }
        if !is_reduced(sys, c)? {
            return Err(Error::arg(
                "endpoints must have their centre of mass at the origin",
            ));
        }
    }
    Ok(())
}

/// Fixed pseudo-random direction in V with unit mass norm.
fn bend_direction(sys: &MassSystem) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b65_706c_6572);
    let coords: Vec<f64> = (0..sys.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = Configuration::new(sys.n_bodies(), sys.dim(), coords).expect("shape");
    let c = project_cm(sys, &c).expect("shape");
    let n = mass_inner_raw(sys.masses(), sys.dim(), c.coords(), c.coords()).sqrt();
    c.scaled(1.0 / n)
}

/// Weights on the start and end configurations for the warm-start time law;
/// `s` and `r` are the elapsed and remaining fractions of time.
fn law_weights(s: f64, r: f64, g: Grading, c: f64) -> (f64, f64) {
    let (wx, wy) = match g {
        Grading::Uniform => (r, s),
        Grading::Start(_) => (1.0 - s.powf(c), s.powf(c)),
        Grading::End(_) => (r.powf(c), 1.0 - r.powf(c)),
        Grading::Both(_) => {
            if s <= 0.5 {
                let a = 0.5 * (2.0 * s).powf(c);
                (1.0 - a, a)
            } else {
                let a = 0.5 * (2.0 * r).powf(c);
                (a, 1.0 - a)
            }
        }
    };
    (wx, wy)
}

fn shape_ratio(c: &Configuration) -> f64 {
    let d = c.diameter();
    if d == 0.0 {
        0.0
    } else {
        crate::space::min_mutual_distance(c) / d
    }
}

/// Mesh grading for a path from `x` to `y`. Collision endpoints get the
/// ejection grading. Between collision-free endpoints of very different size
/// the motion near the small end behaves like an ejection from a virtual
/// collision a time `T * ratio^-(1+k)` earlier, so the mesh clusters there
/// about enough for its first cells to resolve that time.
fn mesh_grading(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    cells: usize,
    law: Grading,
) -> Result<Grading> {
    if law != Grading::Uniform {
        return Ok(law);
    }
    let rx = crate::space::mass_norm(sys, x)?;
    let ry = crate::space::mass_norm(sys, y)?;
    let ratio = rx.max(ry) / rx.min(ry);
    if !(ratio > 4.0) {
        return Ok(Grading::Uniform);
    }
    let q = (1.0 + (1.0 + sys.kappa()) * ratio.ln() / (cells as f64).ln())
        .clamp(1.0, action_grading(sys.kappa()));
    Ok(if rx < ry {
        Grading::Start(q)
    } else {
        Grading::End(q)
    })
}

/// Default warm start: the segment from `x` to `y` run with the ejection time
/// law near collision endpoints, bent slightly off the segment.
pub fn initial_path(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    cells: usize,
    perturbation: f64,
) -> Result<Path> {
    if !(t > 0.0) {
        return Err(Error::arg("time must be positive"));
    }
    if cells < 2 {
        return Err(Error::arg("at least two cells are required"));
    }
    let kappa = sys.kappa();
    let law = Grading::for_endpoints(is_collision(x), is_collision(y), action_grading(kappa));
    let g = mesh_grading(sys, x, y, cells, law)?;
    let dt = graded_steps(t, cells, g);
    let c = 1.0 / (1.0 + kappa);
    let dir = bend_direction(sys);
    let scale = mass_distance(sys, x, y)?
        .max(crate::space::mass_norm(sys, x)?)
        .max(crate::space::mass_norm(sys, y)?);
    // elapsed and remaining fractions, each accumulated from its own end
    let mut elapsed = vec![0.0; cells + 1];
    let mut remaining = vec![0.0; cells + 1];
    for j in 0..cells {
        elapsed[j + 1] = elapsed[j] + dt[j];
        remaining[cells - j - 1] = remaining[cells - j] + dt[cells - j - 1];
    }
    let mut nodes = Vec::with_capacity(cells + 1);
    nodes.push(x.clone());
    for j in 1..cells {
        let (s, r) = (elapsed[j] / t, remaining[j] / t);
        let (wx, wy) = law_weights(s, r, law, c);
        let base = x.scaled(wx).axpy(wy, y);
        let bump = perturbation * scale * (std::f64::consts::PI * s.min(r)).sin();
        nodes.push(base.axpy(bump, &dir));
    }
    nodes.push(y.clone());
    // a straight segment through a collision gets a larger bend
    let ends = shape_ratio(x).min(shape_ratio(y));
    let size = x.diameter().max(y.diameter());
    let crosses = nodes[1..cells]
        .iter()
        .any(|n| n.diameter() < 1e-2 * size || (ends > 0.0 && shape_ratio(n) < 1e-2 * ends));
    if crosses && perturbation < 0.2 {
        return initial_path(sys, x, y, t, cells, 0.2);
    }
    Path::from_steps(0.0, dt, nodes)
}

/// Path transport `gamma_l(s) = l * gamma(l^{-(1+k)} s)` with the mesh scaled too.
pub fn transport_path(path: &Path, lambda: f64, kappa: f64) -> Path {
    let tf = lambda.powf(1.0 + kappa);
    Path::raw(
        path.t0 * tf,
        path.dt.iter().map(|h| h * tf).collect(),
        path.nodes.iter().map(|c| c.scaled(lambda)).collect(),
    )
}

/// Same nodes on a time-rescaled mesh of total length `t`.
fn retime(path: &Path, t: f64) -> Path {
    let f = t / path.duration();
    Path::raw(
        0.0,
        path.dt.iter().map(|h| h * f).collect(),
        path.nodes.clone(),
    )
}

/// Midpoint refinement: node count doubles, new nodes interpolate linearly.
pub fn refine_path(path: &Path) -> Path {
    let dt = refine_steps(&path.dt);
    let mut nodes = Vec::with_capacity(dt.len() + 1);
    for w in path.nodes.windows(2) {
        nodes.push(w[0].clone());
        nodes.push(w[0].axpy(1.0, &w[1]).scaled(0.5));
    }
    nodes.push(path.end().clone());
    Path::raw(path.t0, dt, nodes)
}

fn solve_on(
    sys: &MassSystem,
    warm: &Path,
    opts: &ActionOptions,
) -> Result<(Path, f64, bool, usize)> {
    if warm.dt.len() < 2 {
        return Err(Error::arg("warm path needs at least one interior node"));
    }
    let dt = warm.dt.clone();
    let b = sys.len();
    let mut z = Vec::with_capacity((warm.nodes.len() - 2) * b);
    for c in &warm.nodes[1..warm.nodes.len() - 1] {
        z.extend_from_slice(c.coords());
    }
    let prob = DiscreteProblem {
        sys,
        dt,
        start: warm.start().coords(),
        end: warm.end().coords(),
    };
    let out = prob.minimize(z, opts.settings());
    let mut nodes = Vec::with_capacity(warm.nodes.len());
    nodes.push(warm.start().clone());
    for k in 0..warm.nodes.len() - 2 {
        nodes.push(Configuration::new(
            sys.n_bodies(),
            sys.dim(),
            out.interior[k * b..(k + 1) * b].to_vec(),
        )?);
    }
    nodes.push(warm.end().clone());
    let path = Path::raw(warm.t0, warm.dt.clone(), nodes);
    Ok((
        path,
        out.value,
        out.converged && out.value.is_finite(),
        out.iterations,
    ))
}

/// Minimizes from a supplied warm path (its endpoints and mesh are kept).
pub fn minimize_fixed_time_from(
    sys: &MassSystem,
    warm: &Path,
    opts: &ActionOptions,
) -> Result<PhiResult> {
    opts.validate()?;
    check_endpoints(sys, warm.start(), warm.end())?;
    let (path, value, converged, iterations) = solve_on(sys, warm, opts)?;
    finish_fixed(sys, path, value, converged, iterations, opts)
}

fn finish_fixed(
    sys: &MassSystem,
    path: Path,
    value: f64,
    converged: bool,
    iterations: usize,
    opts: &ActionOptions,
) -> Result<PhiResult> {
    if !opts.estimate_error {
        return Ok(PhiResult {
            value,
            optimal_time: None,
            path,
            converged,
            error_estimate: f64::NAN,
            coarse_value: value,
            iterations,
        });
    }
    let fine_warm = refine_path(&path);
    let (fine, fine_value, fine_conv, it2) = solve_on(sys, &fine_warm, opts)?;
    Ok(PhiResult {
        value: fine_value,
        optimal_time: None,
        path: fine,
        converged: converged && fine_conv,
        error_estimate: (fine_value - value).abs(),
        coarse_value: value,
        iterations: iterations + it2,
    })
}

/// Minimal discrete action from `x` to `y` in time `t` with `m` cells.
pub fn minimize_fixed_time(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    m: usize,
    opts: &ActionOptions,
) -> Result<PhiResult> {
    opts.validate()?;
    check_endpoints(sys, x, y)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::arg("time must be positive"));
    }
    if m < 2 {
        return Err(Error::arg("at least two cells are required"));
    }
    let warm = initial_path(sys, x, y, t, m, opts.perturbation)?;
    let (path, value, converged, iterations) = solve_on(sys, &warm, opts)?;
    finish_fixed(sys, path, value, converged, iterations, opts)
}

/// Natural time for travelling between `x` and `y`: distance over the
/// zero-energy speed `sqrt(2U)`, which scales like `lambda^(1+k)`.
pub fn time_scale(sys: &MassSystem, x: &Configuration, y: &Configuration) -> Result<f64> {
    let d = mass_distance(sys, x, y)?;
    let mid = x.axpy(1.0, y).scaled(0.5);
    let mut u = potential(sys, &mid);
    if !(u.is_finite() && u > 0.0) {
        let (ux, uy) = (potential(sys, x), potential(sys, y));
        u = [ux, uy]
            .into_iter()
            .filter(|v| v.is_finite() && *v > 0.0)
            .fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.min(b) });
    }
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::range("no finite potential to set a time scale"));
    }
    Ok(d / (2.0 * u).sqrt())
}

struct Scan {
    t: f64,
    value: f64,
    path: Path,
    converged: bool,
}

fn solve_at(sys: &MassSystem, from: &Path, t: f64, opts: &ActionOptions) -> Result<Scan> {
    let (path, value, converged, _) = solve_on(sys, &retime(from, t), opts)?;
    Ok(Scan {
        t,
        value: if converged { value } else { f64::INFINITY },
        path,
        converged,
    })
}

fn scan_profile(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    opts: &ActionOptions,
) -> Result<Vec<Scan>> {
    let tg = time_scale(sys, x, y)?;
    let lo = (tg * opts.t_min_factor).ln();
    let hi = (tg * opts.t_max_factor).ln();
    let decades = (hi - lo) / std::f64::consts::LN_10;
    let n = ((decades * opts.scan_per_decade as f64).ceil() as usize).max(2) + 1;
    // march outward from the natural scale so warm starts stay relevant
    let ts: Vec<f64> = (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect();
    let centre = ts
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.ln() - tg.ln())
                .abs()
                .total_cmp(&(b.1.ln() - tg.ln()).abs())
        })
        .map(|(k, _)| k)
        .unwrap();
    let mut out: Vec<Option<Scan>> = (0..n).map(|_| None).collect();
    let base = initial_path(sys, x, y, ts[centre], opts.nodes, opts.perturbation)?;
    out[centre] = Some(solve_at(sys, &base, ts[centre], opts)?);
    for k in (0..centre).rev() {
        let prev = out[k + 1].as_ref().unwrap();
        let warm = if prev.converged {
            prev.path.clone()
        } else {
            base.clone()
        };
        out[k] = Some(solve_at(sys, &warm, ts[k], opts)?);
    }
    for k in centre + 1..n {
        let prev = out[k - 1].as_ref().unwrap();
        let warm = if prev.converged {
            prev.path.clone()
        } else {
            base.clone()
        };
        out[k] = Some(solve_at(sys, &warm, ts[k], opts)?);
    }
    Ok(out.into_iter().map(|s| s.unwrap()).collect())
}

/// Scanned profile `t -> phi(x, y, t)` used to bracket the free-time minimum.
pub fn free_time_profile(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    opts: &ActionOptions,
) -> Result<Vec<(f64, f64)>> {
    opts.validate()?;
    check_endpoints(sys, x, y)?;
    Ok(scan_profile(sys, x, y, opts)?
        .into_iter()
        .map(|s| (s.t, s.value))
        .collect())
}

/// `phi(x, y)`: golden-section search over `log t` after a coarse scan.
pub fn minimize_free_time(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    opts: &ActionOptions,
) -> Result<PhiResult> {
    opts.validate()?;
    check_endpoints(sys, x, y)?;
    if x == y {
        return Ok(PhiResult {
            value: 0.0,
            optimal_time: None,
            path: Path::new(vec![0.0], vec![x.clone()])?,
            converged: true,
            error_estimate: 0.0,
            coarse_value: 0.0,
            iterations: 0,
        });
    }
    let scan = scan_profile(sys, x, y, opts)?;
    let (kbest, _) = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .unwrap();
    if !scan[kbest].value.is_finite() {
        return Err(Error::convergence(
            "no inner solve converged during the time scan",
        ));
    }
    if kbest == 0 || kbest == scan.len() - 1 {
        let profile: Vec<String> = scan
            .iter()
            .map(|s| format!("({:.3e}, {:.6e})", s.t, s.value))
            .collect();
        return Err(Error::range(format!(
            "free-time minimum not bracketed; profile {}",
            profile.join(" ")
        )));
    }
    // golden section on log t
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = scan[kbest - 1].t.ln();
    let mut b = scan[kbest + 1].t.ln();
    let mut best = scan.into_iter().nth(kbest).unwrap();
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = solve_at(sys, &best.path, c.exp(), opts)?;
    let mut fd = solve_at(sys, &best.path, d.exp(), opts)?;
    let tol = opts.t_rel_tol;
    while (b - a) > tol {
        if fc.value <= fd.value {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = solve_at(sys, &fd.path, c.exp(), opts)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = solve_at(sys, &fc.path, d.exp(), opts)?;
        }
    }
    for cand in [fc, fd] {
        if cand.value < best.value {
            best = cand;
        }
    }
    let t_opt = best.t;
    let result = finish_fixed(sys, best.path, best.value, best.converged, 0, opts)?;
    Ok(PhiResult {
        optimal_time: Some(t_opt),
        ..result
    })
}

/// Relative discrepancy of the scaling law
/// `phi(lx, ly, l^(1+k) t) = l^(1-k) phi(x, y, t)`.
pub fn phi_scaling_check(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    lambda: f64,
    m: usize,
    opts: &ActionOptions,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::arg("scale factor must be positive"));
    }
    let mut o = opts.clone();
    o.estimate_error = false;
    let base = minimize_fixed_time(sys, x, y, t, m, &o)?;
    let warm = transport_path(&base.path, lambda, sys.kappa());
    let scaled = minimize_fixed_time_from(sys, &warm, &o)?;
    if !(base.converged && scaled.converged) {
        return Err(Error::convergence("scaling check solves did not converge"));
    }
    let expect = lambda.powf(1.0 - sys.kappa()) * base.value;
    Ok((scaled.value - expect).abs() / expect)
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderFit {
    pub slope: f64,
    pub eta_hat: f64,
    pub points: Vec<(f64, f64)>,
    pub excluded: usize,
}

/// Log-log regression of `phi(base, base + r * direction)` against `r`.
pub fn holder_fit(
    sys: &MassSystem,
    base: &Configuration,
    radii: &[f64],
    direction: &Configuration,
    opts: &ActionOptions,
) -> Result<HolderFit> {
    if radii.len() < 2 {
        return Err(Error::arg("at least two radii are needed for a regression"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::arg("radii must be positive"));
    }
    let dn = crate::space::mass_norm(sys, direction)?;
    if dn == 0.0 {
        return Err(Error::arg("direction must be nonzero"));
    }
    let mut o = opts.clone();
    o.estimate_error = false;
    let mut pts = Vec::new();
    let mut excluded = 0;
    for &r in radii {
        let y = base.axpy(r, direction);
        match minimize_free_time(sys, base, &y, &o) {
            Ok(res) if res.converged && res.value > 0.0 => pts.push((r * dn, res.value)),
            _ => excluded += 1,
        }
    }
    if pts.len() < 2 {
        return Err(Error::convergence("fewer than two usable radii"));
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("radii must not all coincide"));
    }
    let slope = sxy / sxx;
    Ok(HolderFit {
        slope,
        eta_hat: (my - slope * mx).exp(),
        points: pts,
        excluded,
    })
}

#[cfg(test)]
mod tests;
