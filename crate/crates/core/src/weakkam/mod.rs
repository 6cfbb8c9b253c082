//! Weak KAM tools on low-dimensional charts: the Lax-Oleinik semigroup,
//! subsolution checks, the scaling action `S_l u(x) = l^(k-1) u(l x)`, its
//! homogenization, and Busemann functions along minimizing rays.

mod chart;
mod operator;

pub use chart::{inertia_on, reduced_basis, same_chamber, Axis, Chart, ChartMap, GridFunction};
pub use operator::{
    iterate_weak_kam, iterate_with, lax_oleinik_step, GhostClosure, LaxOleinikOperator, StepOutput,
    WeakKamIterate, WeakKamOptions,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::action::{minimize_free_time, ActionOptions};
use crate::ejection::make_ejection;
use crate::error::{Error, Result};
use crate::parallel;
use crate::space::{Configuration, MassSystem};

/// `(S_l u)(x) = l^(k-1) u(l x)`. Nodes whose image leaves the chart become
/// `NaN`; a range error is raised when none stays.
pub fn scaling_action(sys: &MassSystem, u: &GridFunction, lambda: f64) -> Result<GridFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::arg("scaling factor must be positive"));
    }
    if lambda == 1.0 {
        return Ok(u.clone());
    }
    let f = lambda.powf(sys.kappa() - 1.0);
    let ch = &u.chart;
    let values: Vec<f64> = (0..ch.n_nodes())
        .map(|i| {
            let p = ch.scale_params(&ch.node_params(i), lambda);
            u.interpolate(&p).map(|v| f * v).unwrap_or(f64::NAN)
        })
        .collect();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(Error::range("scaled chart leaves the lattice everywhere"));
    }
    GridFunction::new(ch.clone(), values)
}

fn check_normalized(u: &GridFunction) -> Result<()> {
    let o = u.values[u.chart.origin_node()];
    let scale = u
        .values
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if !(o.abs() <= 1e-12 * scale.max(1.0)) {
        return Err(Error::arg(
            "normalize u to zero at the node nearest the collision first",
        ));
    }
    Ok(())
}

/// Pointwise minimum of `S_l u` over the grid of scalings.
pub fn homogenize(sys: &MassSystem, u: &GridFunction, lambdas: &[f64]) -> Result<GridFunction> {
    if lambdas.is_empty() {
        return Err(Error::arg("empty scaling grid"));
    }
    check_normalized(u)?;
    let mut out = vec![f64::NAN; u.values.len()];
    for &l in lambdas {
        let s = scaling_action(sys, u, l).or_else(|e| match e {
            Error::Range(_) => Ok(GridFunction::constant(&u.chart, f64::NAN)),
            e => Err(e),
        })?;
        for (o, v) in out.iter_mut().zip(&s.values) {
            if v.is_finite() && !(*o <= *v) {
                *o = *v;
            }
        }
    }
    GridFunction::new(u.chart.clone(), out)
}

/// Homogenization on a radial chart with the scalings that map each node
/// onto the other nodes of its ray, so no interpolation enters:
/// `u0(r, a) = r^(1-k) min_j r_j^(k-1) u(r_j, a)` over radii in `band`.
pub fn homogenize_radial(
    sys: &MassSystem,
    u: &GridFunction,
    band: (f64, f64),
) -> Result<GridFunction> {
    let ch = &u.chart;
    if matches!(ch.map, ChartMap::Plane { .. }) {
        return Err(Error::arg(
            "radial homogenization needs a ray or polar chart",
        ));
    }
    check_normalized(u)?;
    let k = sys.kappa();
    let ax = &ch.axes[0];
    let n_theta = if ch.dimension() == 2 { ch.axes[1].n } else { 1 };
    let mut out = vec![f64::NAN; u.values.len()];
    for a in 0..n_theta {
        let idx = |j: usize| {
            if ch.dimension() == 2 {
                ch.index(&[j, a])
            } else {
                j
            }
        };
        let mut best = f64::NAN;
        for j in 0..ax.n {
            let r = ax.node(j);
            if r <= 0.0 || r < band.0 || r > band.1 {
                continue;
            }
            let v = r.powf(k - 1.0) * u.values[idx(j)];
            if v.is_finite() && !(best <= v) {
                best = v;
            }
        }
        for j in 0..ax.n {
            let r = ax.node(j);
            out[idx(j)] = if r == 0.0 {
                0.0
            } else {
                r.powf(1.0 - k) * best
            };
        }
    }
    GridFunction::new(ch.clone(), out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugationReport {
    /// Sup over compared nodes of `|T_t S_l u - S_l T_{l^(1+k) t} u|`.
    pub discrepancy: f64,
    pub tolerance: f64,
    pub phi_error: f64,
    pub interpolation_error: f64,
    pub source_error: f64,
    pub compared: usize,
}

/// Compares both sides of `T_t S_l u = S_l T_{l^(1+k) t} u` on the nodes
/// where neither side is affected by the chart edge.
pub fn conjugation_check(
    sys: &MassSystem,
    u: &GridFunction,
    t: f64,
    lambda: f64,
    opts: &WeakKamOptions,
) -> Result<ConjugationReport> {
    let k = sys.kappa();
    let ch = &u.chart;
    let su = scaling_action(sys, u, lambda)?;
    let op1 = LaxOleinikOperator::build(sys, ch, t, opts)?;
    let lhs = op1.apply(&su.values)?;
    let (rhs_grid, phi2) = if lambda == 1.0 {
        (
            GridFunction::new(ch.clone(), lhs.values.clone())?,
            op1.phi_error,
        )
    } else {
        let op2 = LaxOleinikOperator::build(sys, ch, lambda.powf(1.0 + k) * t, opts)?;
        let mid = op2.apply(&u.values)?;
        let vals = mid
            .values
            .iter()
            .zip(&mid.complete)
            .map(|(v, c)| if *c { *v } else { f64::NAN })
            .collect();
        let g = GridFunction::new(ch.clone(), vals)?;
        (scaling_action(sys, &g, lambda)?, op2.phi_error)
    };
    let mut discrepancy: f64 = 0.0;
    let mut compared = 0;
    for i in 0..ch.n_nodes() {
        let (a, b) = (lhs.values[i], rhs_grid.values[i]);
        if lhs.complete[i] && a.is_finite() && b.is_finite() {
            discrepancy = discrepancy.max((a - b).abs());
            compared += 1;
        }
    }
    let f = lambda.powf(k - 1.0);
    let h = ch.max_spacing();
    let interp = su
        .interpolation_error()
        .max(f * rhs_grid.interpolation_error());
    let source_error = h * h / (8.0 * t) * (1.0 + f / lambda.powf(1.0 + k));
    let phi_error = op1.phi_error + f * phi2;
    Ok(ConjugationReport {
        discrepancy,
        tolerance: 5.0 * (phi_error + interp + source_error),
        phi_error,
        interpolation_error: interp,
        source_error,
        compared,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    pub phi: f64,
    pub error_estimate: f64,
    /// `u(x_i) - u(x_j) - phi(x_i, x_j)`.
    pub excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsolutionReport {
    pub checked: usize,
    /// Pairs separated by a collision wall (infinite action) or undefined values.
    pub skipped: usize,
    pub failed: usize,
    pub worst_excess: f64,
    pub violations: Vec<PairCheck>,
}

/// Random node pairs with distinct endpoints.
pub fn sample_pairs(chart: &Chart, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let n = chart.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    if n < 2 {
        return out;
    }
    while out.len() < count {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j && chart.node_config(i) != chart.node_config(j) {
            out.push((i, j));
        }
    }
    out
}

/// Checks `u(x) - u(y) <= phi(x, y)` on node pairs. An excess counts as a
/// violation only beyond the free-time error estimate.
pub fn subsolution_check(
    sys: &MassSystem,
    u: &GridFunction,
    pairs: &[(usize, usize)],
    opts: &ActionOptions,
) -> Result<SubsolutionReport> {
    let n = u.chart.n_nodes();
    if pairs.iter().any(|(i, j)| *i >= n || *j >= n) {
        return Err(Error::arg("pair index outside the chart"));
    }
    let opts = ActionOptions {
        estimate_error: true,
        ..opts.clone()
    };
    enum Outcome {
        Skipped,
        Failed,
        Checked(PairCheck),
    }
    let outcomes: Vec<Outcome> = parallel::map(pairs, |&(i, j)| {
        let (ui, uj) = (u.values[i], u.values[j]);
        if !ui.is_finite() || !uj.is_finite() {
            return Outcome::Skipped;
        }
        let (x, y) = (u.chart.node_config(i), u.chart.node_config(j));
        if !same_chamber(&x, &y) {
            return Outcome::Skipped;
        }
        let (phi, err) = if x == y {
            (0.0, 0.0)
        } else {
            match minimize_free_time(sys, &x, &y, &opts) {
                Ok(r) if r.converged => (r.value, r.error_estimate),
                _ => return Outcome::Failed,
            }
        };
        Outcome::Checked(PairCheck {
            i,
            j,
            phi,
            error_estimate: err,
            excess: ui - uj - phi,
        })
    });
    let mut rep = SubsolutionReport {
        checked: 0,
        skipped: 0,
        failed: 0,
        worst_excess: f64::NEG_INFINITY,
        violations: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Skipped => rep.skipped += 1,
            Outcome::Failed => rep.failed += 1,
            Outcome::Checked(c) => {
                rep.checked += 1;
                rep.worst_excess = rep.worst_excess.max(c.excess);
                if c.excess > c.error_estimate + 1e-9 * (1.0 + c.phi) {
                    rep.violations.push(c);
                }
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct BusemannResult {
    pub value: f64,
    /// `(t, phi(x, t s) - t^(1-k) psi(s))` along the list.
    pub history: Vec<(f64, f64)>,
    pub differences: Vec<f64>,
    pub converged: bool,
}

/// `b_s(x) = lim phi(x, t s) - phi(t s, 0)`, with the second term in closed
/// form `t^(1-k) psi(s)` since the ray is minimizing.
pub fn busemann(
    sys: &MassSystem,
    s_min: &Configuration,
    x: &Configuration,
    t_list: &[f64],
    tol: f64,
    opts: &ActionOptions,
) -> Result<BusemannResult> {
    if t_list.len() < 2 {
        return Err(Error::arg("busemann needs at least two times"));
    }
    if t_list.iter().any(|t| !(*t > 0.0)) || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("times must be positive and increasing"));
    }
    if t_list[t_list.len() - 1] < 100.0 * t_list[0] {
        return Err(Error::arg("times must span at least two decades"));
    }
    let ej = make_ejection(sys, s_min)?;
    let k = sys.kappa();
    let opts = ActionOptions {
        estimate_error: false,
        ..opts.clone()
    };
    let values: Vec<Result<f64>> = parallel::map(t_list, |&t| {
        let r = minimize_free_time(sys, x, &s_min.scaled(t), &opts)?;
        Ok(r.value - t.powf(1.0 - k) * ej.psi)
    });
    let mut history = Vec::with_capacity(t_list.len());
    for (t, v) in t_list.iter().zip(values) {
        history.push((*t, v?));
    }
    let differences: Vec<f64> = history.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let last = *differences.last().unwrap();
    Ok(BusemannResult {
        value: history.last().unwrap().1,
        converged: last.abs() <= tol,
        history,
        differences,
    })
}
