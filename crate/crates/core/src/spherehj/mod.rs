//! The Hamilton-Jacobi equation induced on the inertia sphere,
//! `(1-k)^2 v^2 + |d_s v|^2 = 2 U(s)`, for functions sampled on circles and
//! two-spheres of the reduced configuration space.

mod chart;
#[cfg(test)]
mod tests;

pub use chart::{CollisionComponent, CollisionGeometry, SphereChart};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::space::{is_collision, potential, MassSystem};
use crate::weakkam::{
    homogenize_radial, iterate_with, Chart, ChartMap, GridFunction,
    LaxOleinikOperator, WeakKamOptions,
};

/// Values on the nodes of a sphere chart, differentiated by second-order
/// central differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereFunction {
    pub chart: SphereChart,
    pub values: Vec<f64>,
    pub order: usize,
}

impl SphereFunction {
    pub fn new(chart: SphereChart, values: Vec<f64>) -> Result<Self> {
        if values.len() != chart.n_nodes() {
            return Err(Error::arg("one value per sphere node is required"));
        }
        Ok(Self {
            chart,
            values,
            order: 2,
        })
    }

    pub fn from_fn(chart: &SphereChart, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..chart.n_nodes())
            .map(|i| f(&chart.node_params(i)))
            .collect();
        Self {
            chart: chart.clone(),
            values,
            order: 2,
        }
    }

    /// Chart-coordinate partial derivatives at an interior node.
    pub fn differential(&self, i: usize) -> Result<Vec<f64>> {
        let ch = &self.chart;
        let k = ch.multi_index(i);
        let mut out = Vec::with_capacity(k.len());
        for d in 0..k.len() {
            let (lo, hi) = ch
                .neighbours(&k, d)
                .ok_or_else(|| Error::domain("node is on the chart edge"))?;
            out.push((self.values[hi] - self.values[lo]) / (2.0 * ch.spacing(d)));
        }
        Ok(out)
    }

    /// One-sided differences `(backward, forward)` along axis `d`.
    pub fn one_sided(&self, i: usize, d: usize) -> Result<(f64, f64)> {
        let ch = &self.chart;
        let k = ch.multi_index(i);
        let (lo, hi) = ch
            .neighbours(&k, d)
            .ok_or_else(|| Error::domain("node is on the chart edge"))?;
        let h = ch.spacing(d);
        Ok((
            (self.values[i] - self.values[lo]) / h,
            (self.values[hi] - self.values[i]) / h,
        ))
    }

    /// Squared norm of the sphere gradient in the induced metric.
    pub fn gradient_norm2(&self, i: usize) -> Result<f64> {
        let g = self.differential(i)?;
        let w = self.chart.inverse_metric(&self.chart.node_params(i));
        Ok(g.iter().zip(&w).map(|(g, w)| g * g * w).sum())
    }
}

fn check_node(sys: &MassSystem, v: &SphereFunction, i: usize) -> Result<f64> {
    if i >= v.chart.n_nodes() {
        return Err(Error::arg("node index outside the chart"));
    }
    let c = v.chart.node_config(i);
    if is_collision(&c) {
        return Err(Error::domain("node lies on the collision set"));
    }
    let u = potential(sys, &c);
    if !u.is_finite() {
        return Err(Error::domain("node lies on the collision set"));
    }
    Ok(u)
}

/// `(1-k)^2 v^2 + |d_s v|^2 - 2 U(s)` at a node.
pub fn hjh_residual(sys: &MassSystem, v: &SphereFunction, i: usize) -> Result<f64> {
    let u = check_node(sys, v, i)?;
    let k = sys.kappa();
    let g2 = v.gradient_norm2(i)?;
    let vi = v.values[i];
    Ok((1.0 - k).powi(2) * vi * vi + g2 - 2.0 * u)
}

/// `v^2 + |d_s v|^2 / (1-k)^2 - psi^2`, the same equation divided by `(1-k)^2`.
pub fn hjh_residual_psi(sys: &MassSystem, v: &SphereFunction, i: usize) -> Result<f64> {
    let u = check_node(sys, v, i)?;
    let k = sys.kappa();
    let g2 = v.gradient_norm2(i)?;
    let vi = v.values[i];
    let psi = psi_of(k, u);
    Ok(vi * vi + g2 / (1.0 - k).powi(2) - psi * psi)
}

fn psi_of(kappa: f64, u: f64) -> f64 {
    (2.0 * u).sqrt() / (1.0 - kappa)
}

/// `psi(s)` at every node (infinite on the collision set).
pub fn psi_on(sys: &MassSystem, chart: &SphereChart) -> Vec<f64> {
    (0..chart.n_nodes())
        .map(|i| psi_of(sys.kappa(), potential(sys, &chart.node_config(i))))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSummary {
    /// Largest `|residual|` over interior nodes outside the collision margin.
    pub max_residual: f64,
    /// Same, relative to `2 U` at the node.
    pub max_relative: f64,
    pub counted: usize,
    pub masked: usize,
    /// Largest `|v| - psi` over collision-free nodes.
    pub bound_excess: f64,
}

pub fn residual_summary(sys: &MassSystem, v: &SphereFunction, margin: f64) -> ResidualSummary {
    let idx: Vec<usize> = (0..v.chart.n_nodes()).collect();
    let per: Vec<Option<(f64, f64)>> = parallel::map(&idx, |&i| {
        if v.chart.distance_to_collisions(&v.chart.node_params(i)) < margin {
            return None;
        }
        let r = hjh_residual(sys, v, i).ok()?;
        let u = potential(sys, &v.chart.node_config(i));
        Some((r.abs(), r.abs() / (2.0 * u)))
    });
    let psi = psi_on(sys, &v.chart);
    let bound_excess = v
        .values
        .iter()
        .zip(&psi)
        .filter(|(_, p)| p.is_finite())
        .map(|(v, p)| v.abs() - p)
        .fold(f64::NEG_INFINITY, f64::max);
    ResidualSummary {
        max_residual: per.iter().flatten().map(|p| p.0).fold(0.0, f64::max),
        max_relative: per.iter().flatten().map(|p| p.1).fold(0.0, f64::max),
        counted: per.iter().flatten().count(),
        masked: per.iter().filter(|p| p.is_none()).count(),
        bound_excess,
    }
}

/// Values of a homogeneous function on the unit slice of a cone chart.
pub fn restrict_homogeneous(u: &GridFunction) -> Result<SphereFunction> {
    let ch = &u.chart;
    let ChartMap::Polar { e1, e2 } = &ch.map else {
        return Err(Error::arg("restriction needs a cone chart over a circle"));
    };
    let ax = &ch.axes[0];
    let row = (0..ax.n)
        .find(|&j| (ax.node(j) - 1.0).abs() <= 1e-12)
        .ok_or_else(|| Error::range("the chart does not contain the unit slice"))?;
    let n = ch.axes[1].n;
    let sc = SphereChart::circle_from_basis(&ch.label, e1.clone(), e2.clone(), n)?;
    let values = (0..n).map(|a| u.values[ch.index(&[row, a])]).collect();
    SphereFunction::new(sc, values)
}

/// `u(r s) = r^(1-k) v(s)` on the cone over a circle chart, radii `j / per_unit`.
pub fn extend_homogeneous(
    sys: &MassSystem,
    v: &SphereFunction,
    per_unit: usize,
    r_max: f64,
) -> Result<GridFunction> {
    let ch = &v.chart;
    if ch.dimension() != 1 {
        return Err(Error::arg("extension is implemented for circle charts"));
    }
    let cone = Chart::cone(
        sys,
        &ch.label,
        &ch.basis[0],
        &ch.basis[1],
        ch.n[0],
        per_unit,
        r_max,
    )?;
    let k = sys.kappa();
    let ax = &cone.axes[0];
    let mut values = vec![0.0; cone.n_nodes()];
    for j in 0..ax.n {
        let f = ax.node(j).powf(1.0 - k);
        for a in 0..ch.n[0] {
            values[cone.index(&[j, a])] = f * v.values[a];
        }
    }
    GridFunction::new(cone, values)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HjhOptions {
    /// Lax-Oleinik time step.
    pub t: f64,
    /// Radial nodes per unit radius; by default matched to the angular spacing.
    pub per_unit: Option<usize>,
    pub r_max: f64,
    /// Radii whose scalings enter the homogenization.
    pub band: (f64, f64),
    pub tol: f64,
    pub max_sweeps: usize,
    /// Angular distance from the collision set excluded from statistics.
    pub margin: f64,
    /// Curvatures of the quadratic probes in viscosity tests.
    pub probes: Vec<f64>,
    pub weak: WeakKamOptions,
}

impl Default for HjhOptions {
    fn default() -> Self {
        Self {
            t: 0.1,
            per_unit: None,
            r_max: 1.5,
            band: (0.5, 1.0),
            tol: 1e-10,
            max_sweeps: 2000,
            margin: 0.15,
            probes: vec![0.0, 1.0, 4.0],
            weak: WeakKamOptions {
                radius_factor: 2.0,
                inner_nodes: 64,
                ghost_layers: 64,
                relaxation: 0.5,
                ..WeakKamOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HjhSolution {
    pub v: SphereFunction,
    pub residual: ResidualSummary,
    pub sweeps: usize,
    pub converged: bool,
    pub iterate_residual: f64,
    pub inner_failures: usize,
    pub boundary_argmins: usize,
    /// Interior nodes outside the margin failing the sub- or supersolution test.
    pub viscosity_sub_failures: usize,
    pub viscosity_super_failures: usize,
    pub viscosity_tested: usize,
}

/// Homogeneous weak KAM iteration on the cone over a circle chart, then
/// homogenization and restriction to the unit circle.
pub fn solve_hjh(sys: &MassSystem, chart: &SphereChart, opts: &HjhOptions) -> Result<HjhSolution> {
    if chart.dimension() != 1 {
        return Err(Error::arg("solve_hjh supports circle charts only"));
    }
    let n = chart.n[0];
    let per_unit = opts
        .per_unit
        .unwrap_or_else(|| (n as f64 / std::f64::consts::TAU).ceil() as usize);
    let cone = Chart::cone(
        sys,
        &chart.label,
        &chart.basis[0],
        &chart.basis[1],
        n,
        per_unit,
        opts.r_max,
    )?;
    let op = LaxOleinikOperator::build(sys, &cone, opts.t, &opts.weak)?;
    let it = iterate_with(
        &op,
        &GridFunction::constant(&cone, 0.0),
        opts.tol,
        opts.max_sweeps,
        &opts.weak,
    )?;
    let u0 = homogenize_radial(sys, &it.u, opts.band)?;
    let v = restrict_homogeneous(&u0)?;
    let v = SphereFunction::new(chart.clone(), v.values)?;
    let residual = residual_summary(sys, &v, opts.margin);
    let idx: Vec<usize> = (0..n)
        .filter(|&i| chart.distance_to_collisions(&chart.node_params(i)) >= opts.margin)
        .collect();
    let tol = 1e-6 + residual.max_residual;
    let reports: Vec<Option<ViscosityReport>> = parallel::map(&idx, |&i| {
        viscosity_test(sys, &v, i, &opts.probes, tol).ok()
    });
    let tested = reports.iter().flatten().count();
    Ok(HjhSolution {
        residual,
        sweeps: it.iterations,
        converged: it.converged,
        iterate_residual: it.residual,
        inner_failures: it.failures,
        boundary_argmins: it.boundary_argmins,
        viscosity_sub_failures: reports.iter().flatten().filter(|r| !r.sub_pass).count(),
        viscosity_super_failures: reports.iter().flatten().filter(|r| !r.super_pass).count(),
        viscosity_tested: tested,
        v,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ViscosityReport {
    /// Largest `H` over probes touching from above; `None` when no probe touches.
    pub sub_margin: Option<f64>,
    /// Smallest `H` over probes touching from below.
    pub super_margin: Option<f64>,
    pub sub_pass: bool,
    pub super_pass: bool,
}

/// Discrete viscosity tests at a node. A quadratic probe with curvature `c`
/// and slope `p` along an axis touches from above when it dominates both
/// neighbours, i.e. `p` lies in `[D+ - c h/2, D- + c h/2]`; from below the
/// interval is `[D- - c h/2, D+ + c h/2]`. `H` is convex in the slope, so
/// its extremes over a box of slopes sit at corners or at the clamped zero.
/// At resolution `h` a spread of the one-sided differences up to `c_max h`
/// cannot be told apart from smooth curvature, and a probe of curvature `c`
/// reaches `c h / 2` past them; the resulting excursion of `H` is added to `tol`.
pub fn viscosity_test(
    sys: &MassSystem,
    v: &SphereFunction,
    i: usize,
    probes: &[f64],
    tol: f64,
) -> Result<ViscosityReport> {
    let u = check_node(sys, v, i)?;
    let k = sys.kappa();
    let ch = &v.chart;
    let w = ch.inverse_metric(&ch.node_params(i));
    let dims = ch.dimension();
    let mut sides = Vec::with_capacity(dims);
    for d in 0..dims {
        sides.push(v.one_sided(i, d)?);
    }
    let vi = v.values[i];
    let h_of = |p: &[f64]| -> f64 {
        (1.0 - k).powi(2) * vi * vi + p.iter().zip(&w).map(|(p, w)| p * p * w).sum::<f64>()
            - 2.0 * u
    };
    let mut sub_ok = true;
    let mut super_ok = true;
    let mut sub_margin: Option<f64> = None;
    let mut super_margin: Option<f64> = None;
    let c_max = probes.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for &c in probes {
        let slack: f64 = (0..dims)
            .map(|d| {
                let h = ch.spacing(d);
                let (bm, fp) = sides[d];
                let delta = (fp - bm).abs().min(c_max * h) + 0.5 * c.abs() * h;
                let big = bm.abs().max(fp.abs());
                w[d] * delta * (delta + 2.0 * big)
            })
            .sum();
        // touching from above
        let above: Option<Vec<(f64, f64)>> = (0..dims)
            .map(|d| {
                let (bm, fp) = sides[d];
                let half = 0.5 * c * ch.spacing(d);
                let (lo, hi) = (fp - half, bm + half);
                (lo <= hi).then_some((lo, hi))
            })
            .collect();
        if let Some(b) = above {
            let mut worst = f64::NEG_INFINITY;
            for corner in 0..(1usize << dims) {
                let p: Vec<f64> = (0..dims)
                    .map(|d| if corner >> d & 1 == 1 { b[d].1 } else { b[d].0 })
                    .collect();
                worst = worst.max(h_of(&p));
            }
            sub_ok &= worst <= tol + slack;
            sub_margin = Some(sub_margin.map_or(worst, |m: f64| m.max(worst)));
        }
        let below: Option<Vec<(f64, f64)>> = (0..dims)
            .map(|d| {
                let (bm, fp) = sides[d];
                let half = 0.5 * c * ch.spacing(d);
                let (lo, hi) = (bm - half, fp + half);
                (lo <= hi).then_some((lo, hi))
            })
            .collect();
        if let Some(b) = below {
            let p: Vec<f64> = b.iter().map(|(lo, hi)| 0.0f64.clamp(*lo, *hi)).collect();
            let best = h_of(&p);
            super_ok &= best >= -tol - slack;
            super_margin = Some(super_margin.map_or(best, |m: f64| m.min(best)));
        }
    }
    Ok(ViscosityReport {
        sub_pass: sub_ok,
        super_pass: super_ok,
        sub_margin,
        super_margin,
    })
}

/// Angles, value, residual and `psi` per node.
pub fn write_sphere_csv<W: Write>(sys: &MassSystem, v: &SphereFunction, w: W) -> Result<()> {
    let mut wr = crate::io::csv_writer(w);
    let dims = v.chart.dimension();
    let mut header: Vec<String> = (0..dims).map(|d| format!("angle{d}")).collect();
    header.extend(["v".to_string(), "residual".to_string(), "psi".to_string()]);
    wr.write_record(&header)?;
    let psi = psi_on(sys, &v.chart);
    for i in 0..v.chart.n_nodes() {
        let mut rec: Vec<String> = v
            .chart
            .node_params(i)
            .iter()
            .map(|p| crate::io::fmt17(*p))
            .collect();
        rec.push(crate::io::fmt17(v.values[i]));
        rec.push(crate::io::fmt17(
            hjh_residual(sys, v, i).unwrap_or(f64::NAN),
        ));
        rec.push(crate::io::fmt17(psi[i]));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
