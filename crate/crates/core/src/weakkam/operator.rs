//! The Lax-Oleinik operator on a chart lattice.
//!
//! `T_t u(x) = min_y u(y) + phi(y, x, t)` over lattice sources within the
//! search radius. Source costs do not depend on `u`, so they are computed once
//! per `(chart, t)` and every sweep is a min-plus product.
//!
//! Near the outer edge part of the infimum lies off the chart. Ghost sources
//! `y = lambda e` on the ray through an edge node `e` stand in for it, with
//! value `u(e) + max(0, phi(y, x, t) - phi(y, e))`. Each candidate therefore
//! reads `u` at one node plus a nonnegative cost, which keeps the operator
//! exactly monotone and commuting with constants.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::chart::{same_chamber, Chart, ChartMap, GridFunction};
use crate::action::{minimize_fixed_time, minimize_free_time, ActionOptions, Path};
use crate::error::{Error, Result};
use crate::parallel;
use crate::space::{is_collision, Configuration, MassSystem};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakKamOptions {
    /// Search radius `R(t) = radius_factor * t^(1/(1+k))` in the mass metric.
    pub radius_factor: f64,
    /// Cells of each inner fixed-time solve.
    pub inner_nodes: usize,
    /// Ghost sources per edge node along its ray.
    pub ghost_layers: usize,
    /// Subtract the value at the node nearest the total collision after each sweep.
    pub pin: bool,
    /// How values beyond the outer edge are modelled.
    pub closure: GhostClosure,
    /// Fraction of each sweep's change that is kept, `u + theta (T u - u)`.
    /// Values below 1 damp the period-two cycles min-plus iterations can fall into.
    pub relaxation: f64,
    pub action: ActionOptions,
}

impl Default for WeakKamOptions {
    fn default() -> Self {
        Self {
            radius_factor: 3.0,
            inner_nodes: 16,
            ghost_layers: 4,
            pin: true,
            relaxation: 1.0,
            closure: GhostClosure::Calibrated,
            action: ActionOptions {
                estimate_error: false,
                ..ActionOptions::default()
            },
        }
    }
}

impl WeakKamOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_factor > 0.0)
            || self.inner_nodes < 2
            || !(self.relaxation > 0.0 && self.relaxation <= 1.0)
        {
            return Err(Error::arg("invalid weak KAM options"));
        }
        self.action.validate()
    }

    fn inner(&self) -> ActionOptions {
        ActionOptions {
            estimate_error: false,
            ..self.action.clone()
        }
    }
}

/// Value model for ghost sources `y = l e` beyond an edge node `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GhostClosure {
    /// `u(y) = u(e) - phi(y, e)`: exact when the backward characteristic
    /// through `e` is radial, and keeps `T` a min-plus operator.
    Calibrated,
    /// `u(y) = l^(1-k) u(e)`: exact for homogeneous functions normalized
    /// at the origin; `T` stays monotone but not shift-equivariant.
    Homogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Pair(usize, usize),
    RotPair(usize, usize, usize),
    Ghost(usize, usize, usize),
    RotGhost(usize, usize, usize),
    Free(usize, usize),
    RotFree(usize),
}

#[derive(Clone, Debug)]
enum Job {
    Fixed(Configuration, Configuration),
    Free(Configuration, Configuration),
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    /// Source node, or `(ring, offset)` for rotational rows.
    source: usize,
    offset: usize,
    job: usize,
    free_job: Option<usize>,
    scale: f64,
    ghost: bool,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    source: usize,
    offset: usize,
    cost: f64,
    scale: f64,
    ghost: bool,
}

/// Result of one application.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub values: Vec<f64>,
    /// Nodes whose search disk stays on the chart, every source is defined
    /// and no inner solve failed.
    pub complete: Vec<bool>,
    /// Nodes whose minimum came from a ghost or from a chart-boundary node.
    pub boundary_argmins: usize,
}

pub struct LaxOleinikOperator {
    chart: Chart,
    pub t: f64,
    pub radius: f64,
    rows: Vec<Vec<Candidate>>,
    rotational: bool,
    interior: Vec<bool>,
    failed_at: Vec<bool>,
    boundary: Vec<bool>,
    /// Inner solves that failed; their candidates are skipped.
    pub failures: usize,
    pub solves: usize,
    /// Largest change of a sampled cost when the inner mesh is doubled.
    pub phi_error: f64,
}

/// On a line, a discrete path whose bodies swap order between two nodes
/// jumps over a collision whose true action is infinite; such solves are dropped.
fn stays_in_chamber(path: &Path) -> bool {
    path.nodes().windows(2).all(|w| same_chamber(&w[0], &w[1]))
}

fn canonical_offset(d: usize, n: usize) -> usize {
    d.min(n - d) % n.max(1)
}

impl LaxOleinikOperator {
    pub fn build(sys: &MassSystem, chart: &Chart, t: f64, opts: &WeakKamOptions) -> Result<Self> {
        opts.validate()?;
        chart.validate(sys)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::arg("Lax-Oleinik time must be positive"));
        }
        let radius = opts.radius_factor * t.powf(1.0 / (1.0 + sys.kappa()));
        let rotational = chart.rotation_invariant;
        let n = chart.n_nodes();
        let params: Vec<Vec<f64>> = (0..n).map(|i| chart.node_params(i)).collect();
        let configs: Vec<Configuration> = (0..n).map(|i| chart.node_config(i)).collect();
        let polar = matches!(chart.map, ChartMap::Polar { .. });
        let n_r = chart.axes[0].n;
        let n_theta = if polar { chart.axes[1].n } else { 1 };
        let origin_ring = polar && chart.axes[0].lo == 0.0;
        // partial collisions off the origin carry no finite discrete value
        let excluded: Vec<bool> = (0..n)
            .map(|i| chart.radius(&params[i]) > 0.0 && is_collision(&configs[i]))
            .collect();
        let edges = chart.edge_nodes();
        let h_edge = chart.edge_spacing();

        let mut keys: HashMap<Key, usize> = HashMap::new();
        let mut jobs: Vec<Job> = Vec::new();
        let mut intern = |key: Key, job: &dyn Fn() -> Job, jobs: &mut Vec<Job>| -> usize {
            *keys.entry(key).or_insert_with(|| {
                jobs.push(job());
                jobs.len() - 1
            })
        };

        // rows to enumerate: one per ring when rotations act, else every node
        let reps: Vec<usize> = if rotational {
            (0..n_r).collect()
        } else {
            (0..n).collect()
        };
        let mut entries: Vec<Vec<Entry>> = Vec::with_capacity(reps.len());
        for &x in &reps {
            let px = &params[x];
            let cx = &configs[x];
            let rx = chart.radius(px);
            let mut row = Vec::new();
            if excluded[x] {
                entries.push(row);
                continue;
            }
            for y in 0..n {
                if excluded[y] {
                    continue;
                }
                let py = &params[y];
                if polar && origin_ring {
                    let k = chart.multi_index(y);
                    if k[0] == 0 && k[1] != 0 {
                        continue;
                    }
                }
                // the first parameter never moves farther than the image
                if (py[0] - px[0]).abs() > radius {
                    continue;
                }
                if chart.distance(px, py) > radius * (1.0 + 1e-12) {
                    continue;
                }
                let ry = chart.radius(py);
                if rx == 0.0 && ry == 0.0 {
                    // loitering at the total collision is never a finite candidate
                    continue;
                }
                if !same_chamber(cx, &configs[y]) {
                    continue;
                }
                let (key, offset, src) = if rotational {
                    let ky = chart.multi_index(y);
                    let (ir, jr) = (x, ky[0]);
                    let mut d = canonical_offset(ky[1], n_theta);
                    if origin_ring && ir.min(jr) == 0 {
                        d = 0;
                    }
                    (Key::RotPair(ir.min(jr), ir.max(jr), d), ky[1], jr)
                } else {
                    (Key::Pair(x.min(y), x.max(y)), 0, y)
                };
                let job = intern(
                    key,
                    &|| match key {
                        Key::RotPair(a, b, d) => {
                            let pa = chart.node_params(chart.index(&[a, 0]));
                            let pb = chart.node_params(chart.index(&[b, d]));
                            Job::Fixed(chart.config(&pa), chart.config(&pb))
                        }
                        _ => Job::Fixed(configs[x.min(y)].clone(), configs[x.max(y)].clone()),
                    },
                    &mut jobs,
                );
                row.push(Entry {
                    source: src,
                    offset,
                    job,
                    free_job: None,
                    scale: 1.0,
                    ghost: false,
                });
            }
            for &e in &edges {
                let pe = &params[e];
                let re = chart.radius(pe);
                if re == 0.0 || excluded[e] {
                    continue;
                }
                for layer in 1..=opts.ghost_layers {
                    let lam = 1.0 + layer as f64 * h_edge / re;
                    let py = chart.scale_params(pe, lam);
                    if chart.distance(px, &py) > radius {
                        continue;
                    }
                    let cy = chart.config(&py);
                    if !same_chamber(cx, &cy) || !same_chamber(&cy, &configs[e]) {
                        continue;
                    }
                    let (gkey, fkey, offset, src) = if rotational {
                        let ke = chart.multi_index(e);
                        let d = if origin_ring && x == 0 {
                            0
                        } else {
                            canonical_offset(ke[1], n_theta)
                        };
                        (
                            Key::RotGhost(layer, x, d),
                            Key::RotFree(layer),
                            ke[1],
                            ke[0],
                        )
                    } else {
                        (Key::Ghost(e, layer, x), Key::Free(e, layer), 0, e)
                    };
                    let job = intern(
                        gkey,
                        &|| match gkey {
                            Key::RotGhost(_, r, d) => {
                                let pe0 = chart.node_params(chart.index(&[n_r - 1, d]));
                                let py0 = chart.scale_params(&pe0, lam);
                                let px0 = chart.node_params(chart.index(&[r, 0]));
                                Job::Fixed(chart.config(&py0), chart.config(&px0))
                            }
                            _ => Job::Fixed(cy.clone(), cx.clone()),
                        },
                        &mut jobs,
                    );
                    let homogeneous = opts.closure == GhostClosure::Homogeneous;
                    let free_job = (!homogeneous).then(|| {
                        intern(
                            fkey,
                            &|| match fkey {
                                Key::RotFree(_) => {
                                    let pe0 = chart.node_params(chart.index(&[n_r - 1, 0]));
                                    let py0 = chart.scale_params(&pe0, lam);
                                    Job::Free(chart.config(&py0), chart.config(&pe0))
                                }
                                _ => Job::Free(cy.clone(), configs[e].clone()),
                            },
                            &mut jobs,
                        )
                    });
                    row.push(Entry {
                        source: src,
                        offset,
                        job,
                        free_job,
                        scale: if homogeneous {
                            lam.powf(1.0 - sys.kappa())
                        } else {
                            1.0
                        },
                        ghost: true,
                    });
                }
            }
            entries.push(row);
        }

        let inner = opts.inner();
        let m = opts.inner_nodes;
        let costs: Vec<Option<f64>> = parallel::map(&jobs, |job| match job {
            Job::Fixed(a, b) => minimize_fixed_time(sys, a, b, t, m, &inner)
                .ok()
                .filter(|r| r.converged && r.value.is_finite() && stays_in_chamber(&r.path))
                .map(|r| r.value),
            Job::Free(a, b) => minimize_free_time(sys, a, b, &inner)
                .ok()
                .filter(|r| r.converged && r.value.is_finite() && stays_in_chamber(&r.path))
                .map(|r| r.value),
        });
        let failures = costs.iter().filter(|c| c.is_none()).count();

        // inner discretization error on a deterministic sample of fixed jobs
        let fixed: Vec<usize> = (0..jobs.len())
            .filter(|&j| matches!(jobs[j], Job::Fixed(..)))
            .collect();
        let stride = (fixed.len() / 8).max(1);
        let sample: Vec<usize> = fixed.iter().step_by(stride).take(8).copied().collect();
        let fine: Vec<Option<f64>> = parallel::map(&sample, |&j| match &jobs[j] {
            Job::Fixed(a, b) => minimize_fixed_time(sys, a, b, t, 2 * m, &inner)
                .ok()
                .filter(|r| r.converged)
                .map(|r| r.value),
            Job::Free(..) => None,
        });
        let phi_error = sample
            .iter()
            .zip(&fine)
            .filter_map(|(&j, f)| Some((costs[j]? - (*f)?).abs()))
            .fold(0.0, f64::max);

        let mut rows = Vec::with_capacity(entries.len());
        let mut failed_rep = Vec::with_capacity(entries.len());
        for row in &entries {
            let mut out = Vec::with_capacity(row.len());
            let mut failed = false;
            for e in row {
                let c = match (costs[e.job], e.free_job.map(|f| costs[f])) {
                    (Some(c), None) => Some(c),
                    (Some(c), Some(Some(f))) => Some((c - f).max(0.0)),
                    _ => None,
                };
                match c {
                    Some(cost) => out.push(Candidate {
                        source: e.source,
                        offset: e.offset,
                        cost,
                        scale: e.scale,
                        ghost: e.ghost,
                    }),
                    None => failed = true,
                }
            }
            rows.push(out);
            failed_rep.push(failed);
        }
        let interior: Vec<bool> = params
            .iter()
            .map(|p| chart.boundary_distance(p) > radius)
            .collect();
        let failed_at: Vec<bool> = (0..n)
            .map(|i| {
                if rotational {
                    failed_rep[chart.multi_index(i)[0]]
                } else {
                    failed_rep[i]
                }
            })
            .collect();
        let spacing = chart.edge_spacing();
        let boundary: Vec<bool> = params
            .iter()
            .map(|p| chart.boundary_distance(p) < 0.5 * spacing)
            .collect();
        Ok(Self {
            chart: chart.clone(),
            t,
            radius,
            rows,
            rotational,
            interior,
            failed_at,
            boundary,
            failures,
            solves: jobs.len(),
            phi_error,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Number of candidate sources at node `i`.
    pub fn candidates(&self, i: usize) -> usize {
        if self.rotational {
            self.rows[self.chart.multi_index(i)[0]].len()
        } else {
            self.rows[i].len()
        }
    }

    fn source_index(&self, i: usize, c: &Candidate) -> usize {
        if self.rotational {
            let k = self.chart.multi_index(i);
            let n_theta = self.chart.axes[1].n;
            self.chart.index(&[c.source, (k[1] + c.offset) % n_theta])
        } else {
            c.source
        }
    }

    /// Source node, cost and ghost flag realizing `(T u)(i)`.
    pub fn best_source(&self, u: &[f64], i: usize) -> Option<(usize, f64, bool)> {
        let row = if self.rotational {
            &self.rows[self.chart.multi_index(i)[0]]
        } else {
            &self.rows[i]
        };
        let mut best: Option<(f64, usize, f64, bool)> = None;
        for c in row {
            let s = self.source_index(i, c);
            if !u[s].is_finite() {
                continue;
            }
            let val = c.scale * u[s] + c.cost;
            if best.map_or(true, |b| val < b.0) {
                best = Some((val, s, c.cost, c.ghost));
            }
        }
        best.map(|b| (b.1, b.2, b.3))
    }

    pub fn apply(&self, u: &[f64]) -> Result<StepOutput> {
        let n = self.chart.n_nodes();
        if u.len() != n {
            return Err(Error::arg("function does not live on this chart"));
        }
        let idx: Vec<usize> = (0..n).collect();
        let per: Vec<(f64, bool, bool)> = parallel::map(&idx, |&i| {
            let row = if self.rotational {
                &self.rows[self.chart.multi_index(i)[0]]
            } else {
                &self.rows[i]
            };
            let mut best = f64::INFINITY;
            let mut best_boundary = false;
            let mut all_defined = true;
            for c in row {
                let s = self.source_index(i, c);
                let v = u[s];
                if !v.is_finite() {
                    all_defined = false;
                    continue;
                }
                let val = c.scale * v + c.cost;
                if val < best {
                    best = val;
                    best_boundary = c.ghost || self.boundary[s];
                }
            }
            if !best.is_finite() {
                best = f64::NAN;
            }
            let complete =
                all_defined && self.interior[i] && !self.failed_at[i] && best.is_finite();
            (best, complete, best_boundary && best.is_finite())
        });
        Ok(StepOutput {
            values: per.iter().map(|p| p.0).collect(),
            complete: per.iter().map(|p| p.1).collect(),
            boundary_argmins: per.iter().filter(|p| p.2).count(),
        })
    }
}

/// One application of `T_t`; `t = 0` is the identity.
pub fn lax_oleinik_step(
    sys: &MassSystem,
    u: &GridFunction,
    t: f64,
    opts: &WeakKamOptions,
) -> Result<GridFunction> {
    if t == 0.0 {
        return Ok(u.clone());
    }
    let op = LaxOleinikOperator::build(sys, &u.chart, t, opts)?;
    let out = op.apply(&u.values)?;
    GridFunction::new(u.chart.clone(), out.values)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakKamIterate {
    pub u: GridFunction,
    /// Sup-norm change of the (pinned) iterate in the last sweep.
    pub residual: f64,
    pub t_step: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    /// `min (T u - u)` before pinning, per sweep.
    pub min_increment_history: Vec<f64>,
    pub boundary_argmins: usize,
    pub failures: usize,
    pub phi_error: f64,
}

fn pin(values: &mut [f64], at: usize) {
    let c = values[at];
    if c.is_finite() {
        values.iter_mut().for_each(|v| *v -= c);
    }
}

/// Repeats `T_t` until the sup-norm change drops below `tol`.
pub fn iterate_weak_kam(
    sys: &MassSystem,
    u0: &GridFunction,
    t: f64,
    tol: f64,
    max_sweeps: usize,
    opts: &WeakKamOptions,
) -> Result<WeakKamIterate> {
    if !(tol > 0.0) || max_sweeps == 0 {
        return Err(Error::arg("tolerance and sweep cap must be positive"));
    }
    let op = LaxOleinikOperator::build(sys, &u0.chart, t, opts)?;
    iterate_with(&op, u0, tol, max_sweeps, opts)
}

/// Iteration with a prebuilt operator.
pub fn iterate_with(
    op: &LaxOleinikOperator,
    u0: &GridFunction,
    tol: f64,
    max_sweeps: usize,
    opts: &WeakKamOptions,
) -> Result<WeakKamIterate> {
    opts.validate()?;
    let theta = opts.relaxation;
    let origin = u0.chart.origin_node();
    let mut u = u0.values.clone();
    let mut residual_history = Vec::new();
    let mut min_increment_history = Vec::new();
    let mut converged = false;
    let mut boundary_argmins = 0;
    let mut iterations = 0;
    while iterations < max_sweeps {
        iterations += 1;
        let out = op.apply(&u)?;
        let mut next = out.values;
        boundary_argmins = out.boundary_argmins;
        let inc = next
            .iter()
            .zip(&u)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| a - b)
            .fold(f64::INFINITY, f64::min);
        min_increment_history.push(inc);
        if theta < 1.0 {
            for (a, b) in next.iter_mut().zip(&u) {
                if a.is_finite() && b.is_finite() {
                    *a = b + theta * (*a - b);
                }
            }
        }
        if opts.pin {
            pin(&mut next, origin);
        }
        let res = next
            .iter()
            .zip(&u)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residual_history.push(res);
        u = next;
        if res <= tol {
            converged = true;
            break;
        }
    }
    Ok(WeakKamIterate {
        u: GridFunction::new(u0.chart.clone(), u)?,
        residual: *residual_history.last().unwrap_or(&f64::NAN),
        t_step: op.t,
        iterations,
        converged,
        residual_history,
        min_increment_history,
        boundary_argmins,
        failures: op.failures,
        phi_error: op.phi_error,
    })
}
