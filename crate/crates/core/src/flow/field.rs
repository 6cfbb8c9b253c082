//! Differentiable functions on sphere charts: sampled data under cubic
//! Hermite interpolation, or closed forms.

use std::f64::consts::{PI, TAU};

use crate::spherehj::{SphereChart, SphereFunction};

/// A function on a sphere chart with its chart-coordinate partials.
pub trait SphereField: Sync {
    fn chart(&self) -> &SphereChart;
    /// Value and partials at parameters `p`; `None` where undefined.
    fn eval(&self, p: &[f64]) -> Option<(f64, Vec<f64>)>;

    /// Value, gradient components in chart coordinates and squared norm.
    fn gradient(&self, p: &[f64]) -> Option<(f64, Vec<f64>, f64)> {
        let (v, d) = self.eval(p)?;
        let w = self.chart().inverse_metric(p);
        let g: Vec<f64> = d.iter().zip(&w).map(|(d, w)| d * w).collect();
        let n2: f64 = d.iter().zip(&g).map(|(d, g)| d * g).sum();
        n2.is_finite().then_some((v, g, n2))
    }
}

/// Closed-form field; `f` returns the value and the partials.
pub struct AnalyticField<F> {
    pub chart: SphereChart,
    pub f: F,
}

impl<F> AnalyticField<F>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync,
{
    pub fn new(chart: SphereChart, f: F) -> Self {
        Self { chart, f }
    }
}

impl<F> SphereField for AnalyticField<F>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync,
{
    fn chart(&self) -> &SphereChart {
        &self.chart
    }

    fn eval(&self, p: &[f64]) -> Option<(f64, Vec<f64>)> {
        (self.f)(p)
    }
}

/// Catmull-Rom interpolation of node values: C1 with slopes from central
/// differences, so its gradient is the exact derivative of the interpolant.
/// Undefined next to `NaN` nodes.
#[derive(Clone, Debug)]
pub struct SampledField {
    pub v: SphereFunction,
}

fn hermite(t: f64, p: [f64; 4]) -> (f64, f64) {
    let m1 = 0.5 * (p[2] - p[0]);
    let m2 = 0.5 * (p[3] - p[1]);
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * p[1]
        + (t3 - 2.0 * t2 + t) * m1
        + (-2.0 * t3 + 3.0 * t2) * p[2]
        + (t3 - t2) * m2;
    let d = (6.0 * t2 - 6.0 * t) * p[1]
        + (3.0 * t2 - 4.0 * t + 1.0) * m1
        + (-6.0 * t2 + 6.0 * t) * p[2]
        + (3.0 * t2 - 2.0 * t) * m2;
    (v, d)
}

impl SampledField {
    pub fn new(v: SphereFunction) -> Self {
        Self { v }
    }

    fn circle(&self, p: f64) -> Option<(f64, Vec<f64>)> {
        let n = self.v.chart.n[0];
        let h = TAU / n as f64;
        let x = p.rem_euclid(TAU) / h;
        let k = x.floor() as isize;
        let t = x - k as f64;
        let at = |o: isize| self.v.values[(k + o).rem_euclid(n as isize) as usize];
        let q = [at(-1), at(0), at(1), at(2)];
        if q.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let (v, d) = hermite(t, q);
        Some((v, vec![d / h]))
    }

    /// Node value with polar indices continued across the poles.
    fn node(&self, i: isize, j: isize) -> f64 {
        let (np, na) = (self.v.chart.n[0] as isize, self.v.chart.n[1] as isize);
        let (i, j) = if i < 0 {
            (-1 - i, j + na / 2)
        } else if i >= np {
            (2 * np - 1 - i, j + na / 2)
        } else {
            (i, j)
        };
        self.v.values[self.v.chart.index(&[i as usize, j.rem_euclid(na) as usize])]
    }

    fn sphere(&self, p: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (np, na) = (self.v.chart.n[0], self.v.chart.n[1]);
        if na % 2 != 0 {
            return None;
        }
        // bring the polar angle into [0, pi], remembering a reflection
        let mut a = p[0].rem_euclid(TAU);
        let mut b = p[1];
        let mut flip = 1.0;
        if a > PI {
            a = TAU - a;
            b += PI;
            flip = -1.0;
        }
        let (hp, ha) = (PI / np as f64, TAU / na as f64);
        let x = a / hp - 0.5;
        let ki = x.floor() as isize;
        let ti = x - ki as f64;
        let y = b.rem_euclid(TAU) / ha;
        let kj = y.floor() as isize;
        let tj = y - kj as f64;
        let mut rows = [(0.0, 0.0); 4];
        for (r, row) in rows.iter_mut().enumerate() {
            let i = ki + r as isize - 1;
            let q = [-1, 0, 1, 2].map(|o| self.node(i, kj + o));
            if q.iter().any(|v| !v.is_finite()) {
                return None;
            }
            *row = hermite(tj, q);
        }
        let (v, dv_i) = hermite(ti, rows.map(|r| r.0));
        let (_, dv_j) = hermite(ti, rows.map(|r| r.1));
        Some((v, vec![flip * dv_i / hp, dv_j / ha]))
    }
}

impl SphereField for SampledField {
    fn chart(&self) -> &SphereChart {
        &self.v.chart
    }

    fn eval(&self, p: &[f64]) -> Option<(f64, Vec<f64>)> {
        if p.len() != self.v.chart.dimension() || p.iter().any(|x| !x.is_finite()) {
            return None;
        }
        match p.len() {
            1 => self.circle(p[0]),
            _ => self.sphere(p),
        }
    }
}
