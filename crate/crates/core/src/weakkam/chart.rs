//! Low-dimensional charts of the reduced configuration space and functions
//! sampled on their lattices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::error::{Error, Result};
use crate::space::{
    is_reduced, mass_inner, moment_of_inertia, project_cm, Configuration, MassSystem,
};

/// One lattice axis. Periodic axes exclude `hi`, which is identified with `lo`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            lo,
            hi,
            n,
            periodic: false,
        }
    }

    pub fn periodic(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            lo,
            hi,
            n,
            periodic: true,
        }
    }

    fn cells(&self) -> usize {
        if self.periodic {
            self.n
        } else {
            self.n.saturating_sub(1).max(1)
        }
    }

    pub fn node(&self, k: usize) -> f64 {
        let c = self.cells();
        if self.n == 1 {
            return self.lo;
        }
        // weighted form keeps nodes like k/m exact when lo = 0
        (self.lo * (c - k) as f64 + self.hi * k as f64) / c as f64
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.cells() as f64
    }

    /// Bracketing nodes and the weight of the upper one; `None` outside a
    /// non-periodic axis.
    pub fn locate(&self, p: f64) -> Option<(usize, usize, f64)> {
        if !p.is_finite() {
            return None;
        }
        let span = self.hi - self.lo;
        if self.n == 1 {
            return if (p - self.lo).abs() <= 1e-12 * self.lo.abs().max(1.0) {
                Some((0, 0, 0.0))
            } else {
                None
            };
        }
        let c = self.cells() as f64;
        let mut t = (p - self.lo) / span * c;
        if self.periodic {
            t = t.rem_euclid(c);
        } else {
            let tol = 1e-12 * c;
            if t < -tol || t > c + tol {
                return None;
            }
            t = t.clamp(0.0, c);
        }
        let mut k0 = t.floor() as usize;
        if !self.periodic && k0 >= self.n - 1 {
            k0 = self.n - 2;
        }
        let mut w = t - k0 as f64;
        if w < 1e-12 {
            w = 0.0;
        } else if w > 1.0 - 1e-12 {
            w = 1.0;
        }
        let k1 = if self.periodic {
            (k0 + 1) % self.n
        } else {
            k0 + 1
        };
        Some((k0, k1, w))
    }
}

/// How chart parameters map into the reduced configuration space. Bases are
/// orthonormal in the mass metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartMap {
    /// `x = p0 s` with `I(s) = 1`.
    Ray { s: Configuration },
    /// `x = p0 e1 + p1 e2`.
    Plane {
        e1: Configuration,
        e2: Configuration,
    },
    /// `x = p0 (cos p1 e1 + sin p1 e2)`.
    Polar {
        e1: Configuration,
        e2: Configuration,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub label: String,
    pub map: ChartMap,
    pub axes: Vec<Axis>,
    /// Rotations of a polar chart act by isometries of the ambient space
    /// (true for two bodies), so values depend on the radius only through
    /// rotation-equivariant data.
    #[serde(default)]
    pub rotation_invariant: bool,
}

/// First `count` vectors of a mass-orthonormal basis of the reduced space.
pub fn reduced_basis(sys: &MassSystem, count: usize) -> Result<Vec<Configuration>> {
    let mut out: Vec<Configuration> = Vec::new();
    for k in 0..sys.len() {
        if out.len() == count {
            break;
        }
        let mut c = vec![0.0; sys.len()];
        c[k] = 1.0;
        let mut v = project_cm(sys, &Configuration::new(sys.n_bodies(), sys.dim(), c)?)?;
        for _ in 0..2 {
            for e in &out {
                let a = mass_inner(sys, &v, e)?;
                v = v.axpy(-a, e);
            }
        }
        let n = mass_inner(sys, &v, &v)?.sqrt();
        if n > 1e-8 {
            out.push(v.scaled(1.0 / n));
        }
    }
    if out.len() < count {
        return Err(Error::arg(format!(
            "reduced space has dimension below {count}"
        )));
    }
    Ok(out)
}

impl Chart {
    pub fn new(
        label: impl Into<String>,
        map: ChartMap,
        axes: Vec<Axis>,
        sys: &MassSystem,
    ) -> Result<Self> {
        let want = match map {
            ChartMap::Ray { .. } => 1,
            _ => 2,
        };
        if axes.len() != want {
            return Err(Error::arg("axis count does not match the chart map"));
        }
        for a in &axes {
            if a.n == 0 || !(a.hi > a.lo) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::arg("invalid chart axis"));
            }
        }
        let basis: Vec<&Configuration> = match &map {
            ChartMap::Ray { s } => vec![s],
            ChartMap::Plane { e1, e2 } | ChartMap::Polar { e1, e2 } => vec![e1, e2],
        };
        for (i, e) in basis.iter().enumerate() {
            if !is_reduced(sys, e)? {
                return Err(Error::arg("chart basis must be reduced"));
            }
            for (j, f) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (mass_inner(sys, e, f)? - want).abs() > 1e-10 {
                    return Err(Error::arg("chart basis must be mass-orthonormal"));
                }
            }
        }
        if let ChartMap::Polar { .. } = map {
            let th = &axes[1];
            if axes[0].lo < 0.0
                || !th.periodic
                || (th.hi - th.lo - std::f64::consts::TAU).abs() > 1e-12
            {
                return Err(Error::arg(
                    "polar charts need r >= 0 and a full periodic angle",
                ));
            }
        }
        if axes.iter().any(|a| a.periodic) && !matches!(map, ChartMap::Polar { .. }) {
            return Err(Error::arg("only polar angles may be periodic"));
        }
        let rotation_invariant = matches!(map, ChartMap::Polar { .. }) && sys.n_bodies() == 2;
        Ok(Self {
            label: label.into(),
            map,
            axes,
            rotation_invariant,
        })
    }

    /// Radial ray through the two-body configuration, `r` in `[lo, hi]`.
    pub fn kepler_ray(sys: &MassSystem, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let s = catalog::kepler(sys)?;
        Self::new(
            "kepler-ray",
            ChartMap::Ray { s },
            vec![Axis::new(lo, hi, n)],
            sys,
        )
    }

    /// Square `[-h, h]^2` in a plane of the reduced space (two bodies in the
    /// plane, or three bodies on a line).
    pub fn plane(sys: &MassSystem, label: &str, half: f64, n: usize) -> Result<Self> {
        let b = reduced_basis(sys, 2)?;
        Self::new(
            label,
            ChartMap::Plane {
                e1: b[0].clone(),
                e2: b[1].clone(),
            },
            vec![Axis::new(-half, half, n), Axis::new(-half, half, n)],
            sys,
        )
    }

    /// Cone over a circle of the sphere, radii `k / per_unit` up to `r_max`.
    pub fn cone(
        sys: &MassSystem,
        label: &str,
        e1: &Configuration,
        e2: &Configuration,
        n_theta: usize,
        per_unit: usize,
        r_max: f64,
    ) -> Result<Self> {
        if per_unit == 0 || !(r_max > 0.0) {
            return Err(Error::arg("cone needs a positive radial resolution"));
        }
        let cells = (r_max * per_unit as f64).round().max(1.0) as usize;
        let hi = cells as f64 / per_unit as f64;
        Self::new(
            label,
            ChartMap::Polar {
                e1: e1.clone(),
                e2: e2.clone(),
            },
            vec![
                Axis::new(0.0, hi, cells + 1),
                Axis::periodic(0.0, std::f64::consts::TAU, n_theta),
            ],
            sys,
        )
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn index(&self, k: &[usize]) -> usize {
        match k.len() {
            1 => k[0],
            _ => k[0] + self.axes[0].n * k[1],
        }
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        match self.axes.len() {
            1 => vec![i],
            _ => vec![i % self.axes[0].n, i / self.axes[0].n],
        }
    }

    pub fn node_params(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .zip(&self.axes)
            .map(|(k, a)| a.node(*k))
            .collect()
    }

    pub fn config(&self, p: &[f64]) -> Configuration {
        match &self.map {
            ChartMap::Ray { s } => s.scaled(p[0]),
            ChartMap::Plane { e1, e2 } => e1.scaled(p[0]).axpy(p[1], e2),
            ChartMap::Polar { e1, e2 } => e1.scaled(p[0] * p[1].cos()).axpy(p[0] * p[1].sin(), e2),
        }
    }

    pub fn node_config(&self, i: usize) -> Configuration {
        self.config(&self.node_params(i))
    }

    /// Mass norm of the image of `p`.
    pub fn radius(&self, p: &[f64]) -> f64 {
        match self.map {
            ChartMap::Ray { .. } => p[0].abs(),
            ChartMap::Plane { .. } => p[0].hypot(p[1]),
            ChartMap::Polar { .. } => p[0],
        }
    }

    /// Mass distance between the images of two parameter points.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        match self.map {
            ChartMap::Ray { .. } => (p[0] - q[0]).abs(),
            ChartMap::Plane { .. } => (p[0] - q[0]).hypot(p[1] - q[1]),
            ChartMap::Polar { .. } => {
                let c = (p[1] - q[1]).cos();
                (p[0] * p[0] + q[0] * q[0] - 2.0 * p[0] * q[0] * c)
                    .max(0.0)
                    .sqrt()
            }
        }
    }

    /// Parameters of `lambda x` for `x` with parameters `p`.
    pub fn scale_params(&self, p: &[f64], lambda: f64) -> Vec<f64> {
        match self.map {
            ChartMap::Ray { .. } => vec![lambda * p[0]],
            ChartMap::Plane { .. } => vec![lambda * p[0], lambda * p[1]],
            ChartMap::Polar { .. } => vec![lambda * p[0], p[1]],
        }
    }

    /// Distance from `p` to the part of the space the chart does not cover
    /// (infinite when nothing is missing in that direction).
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        match self.map {
            ChartMap::Ray { .. } => {
                let a = &self.axes[0];
                let below = if a.lo > 0.0 {
                    p[0] - a.lo
                } else {
                    f64::INFINITY
                };
                below.min(a.hi - p[0])
            }
            ChartMap::Polar { .. } => {
                let a = &self.axes[0];
                let below = if a.lo > 0.0 {
                    p[0] - a.lo
                } else {
                    f64::INFINITY
                };
                below.min(a.hi - p[0])
            }
            ChartMap::Plane { .. } => self
                .axes
                .iter()
                .zip(p)
                .map(|(a, v)| (v - a.lo).min(a.hi - v))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Nodes on the outer edge, from which rays leave the chart.
    pub fn edge_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| {
                let k = self.multi_index(i);
                match self.map {
                    ChartMap::Ray { .. } | ChartMap::Polar { .. } => {
                        k[0] + 1 == self.axes[0].n && self.axes[0].hi > 0.0
                    }
                    ChartMap::Plane { .. } => k
                        .iter()
                        .zip(&self.axes)
                        .any(|(k, a)| *k == 0 || *k + 1 == a.n),
                }
            })
            .collect()
    }

    /// Node whose image is closest to the total collision.
    pub fn origin_node(&self) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.n_nodes() {
            let r = self.radius(&self.node_params(i));
            if r < best.0 {
                best = (r, i);
            }
        }
        best.1
    }

    pub fn max_spacing(&self) -> f64 {
        match self.map {
            ChartMap::Polar { .. } => self.axes[0]
                .spacing()
                .max(self.axes[0].hi * self.axes[1].spacing()),
            _ => self.axes.iter().map(|a| a.spacing()).fold(0.0, f64::max),
        }
    }

    /// Radial spacing near the outer edge.
    pub fn edge_spacing(&self) -> f64 {
        match self.map {
            ChartMap::Plane { .. } => self
                .axes
                .iter()
                .map(|a| a.spacing())
                .fold(f64::INFINITY, f64::min),
            _ => self.axes[0].spacing(),
        }
    }

    /// Checks that node images are reduced.
    pub fn validate(&self, sys: &MassSystem) -> Result<()> {
        for i in [0, self.n_nodes() - 1] {
            let c = self.node_config(i);
            if c.n_bodies() != sys.n_bodies() || c.dim() != sys.dim() || !is_reduced(sys, &c)? {
                return Err(Error::arg("chart does not match the system"));
            }
        }
        Ok(())
    }
}

/// For collinear systems, two configurations lie in the same closed chamber
/// when no pair of bodies changes order between them. Straight segments
/// between them then avoid collisions except at the ends.
pub fn same_chamber(a: &Configuration, b: &Configuration) -> bool {
    if a.dim() != 1 {
        return true;
    }
    let (x, y) = (a.coords(), b.coords());
    let scale = a.diameter().max(b.diameter()).max(f64::MIN_POSITIVE);
    let sign = |v: f64| {
        if v.abs() <= 1e-12 * scale {
            0.0
        } else {
            v.signum()
        }
    };
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if sign(x[i] - x[j]) * sign(y[i] - y[j]) < 0.0 {
                return false;
            }
        }
    }
    true
}

/// Values on the nodes of a chart; `NaN` marks nodes where the function is
/// undefined (for instance after scaling pushed them off the chart).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub chart: Chart,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(chart: Chart, values: Vec<f64>) -> Result<Self> {
        if values.len() != chart.n_nodes() {
            return Err(Error::arg("one value per chart node is required"));
        }
        Ok(Self { chart, values })
    }

    pub fn constant(chart: &Chart, c: f64) -> Self {
        Self {
            values: vec![c; chart.n_nodes()],
            chart: chart.clone(),
        }
    }

    pub fn from_fn(chart: &Chart, f: impl Fn(&Configuration) -> f64) -> Self {
        let values = (0..chart.n_nodes())
            .map(|i| f(&chart.node_config(i)))
            .collect();
        Self {
            chart: chart.clone(),
            values,
        }
    }

    /// Multilinear interpolation; `None` off the chart or next to an
    /// undefined node.
    pub fn interpolate(&self, p: &[f64]) -> Option<f64> {
        let loc: Vec<(usize, usize, f64)> = self
            .chart
            .axes
            .iter()
            .zip(p)
            .map(|(a, v)| a.locate(*v))
            .collect::<Option<_>>()?;
        let mut acc = 0.0;
        let corners = 1usize << loc.len();
        for c in 0..corners {
            let mut w = 1.0;
            let mut k = Vec::with_capacity(loc.len());
            for (d, (k0, k1, t)) in loc.iter().enumerate() {
                if c >> d & 1 == 1 {
                    w *= t;
                    k.push(*k1);
                } else {
                    w *= 1.0 - t;
                    k.push(*k0);
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = self.values[self.chart.index(&k)];
            if !v.is_finite() {
                return None;
            }
            acc += w * v;
        }
        Some(acc)
    }

    /// Bound on the linear interpolation error: an eighth of the largest
    /// second difference along any axis.
    pub fn interpolation_error(&self) -> f64 {
        let ch = &self.chart;
        let mut worst: f64 = 0.0;
        for i in 0..ch.n_nodes() {
            let k = ch.multi_index(i);
            for (d, a) in ch.axes.iter().enumerate() {
                let (lo, hi) = if a.periodic {
                    ((k[d] + a.n - 1) % a.n, (k[d] + 1) % a.n)
                } else if k[d] == 0 || k[d] + 1 >= a.n {
                    continue;
                } else {
                    (k[d] - 1, k[d] + 1)
                };
                let mut kl = k.clone();
                let mut kh = k.clone();
                kl[d] = lo;
                kh[d] = hi;
                let v =
                    self.values[ch.index(&kl)] - 2.0 * self.values[i] + self.values[ch.index(&kh)];
                if v.is_finite() {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst / 8.0
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Parameter columns then `value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = crate::io::csv_writer(w);
        let mut header: Vec<String> = (0..self.chart.dimension())
            .map(|d| format!("p{d}"))
            .collect();
        header.push("value".into());
        wr.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = self
                .chart
                .node_params(i)
                .iter()
                .map(|p| crate::io::fmt17(*p))
                .collect();
            rec.push(crate::io::fmt17(*v));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Moment of inertia on the chart, handy for synthetic test functions.
pub fn inertia_on(sys: &MassSystem, chart: &Chart) -> GridFunction {
    GridFunction::from_fn(chart, |c| moment_of_inertia(sys, c).unwrap_or(f64::NAN))
}
