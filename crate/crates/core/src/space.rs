//! Configuration space geometry under the mass metric.
//!
//! Configurations are stored row-major: body `i` occupies
//! `coords[i*dim .. (i+1)*dim]`.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pair distance below which two bodies count as colliding.
pub const COLLISION_THRESHOLD: f64 = 1e-10;

/// Test hook: when set, `potential_gradient` returns the wrong sign. The
/// self test uses it to confirm that its checks catch such an error.
pub static FLIP_GRADIENT_SIGN: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSystem {
    masses: Vec<f64>,
    dim: usize,
    kappa: f64,
    /// Test mode with the potential switched off.
    #[serde(skip)]
    free: bool,
}

impl MassSystem {
    pub fn new(masses: Vec<f64>, dim: usize, kappa: f64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::arg("at least two bodies are required"));
        }
        if dim == 0 {
            return Err(Error::arg("ambient dimension must be positive"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::arg("masses must be finite and positive"));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::arg(format!("kappa must lie in (0,1), got {kappa}")));
        }
        Ok(Self {
            masses,
            dim,
            kappa,
            free: false,
        })
    }

    pub fn equal_masses(n: usize, dim: usize, kappa: f64) -> Result<Self> {
        Self::new(vec![1.0; n], dim, kappa)
    }

    /// Same bodies with the potential switched off (kinetic-only action).
    pub fn without_potential(mut self) -> Self {
        self.free = true;
        self
    }

    pub fn potential_enabled(&self) -> bool {
        !self.free
    }

    /// Re-validates a deserialized system.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.masses, self.dim, self.kappa)
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Number of scalar coordinates of a configuration.
    pub fn len(&self) -> usize {
        self.masses.len() * self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        let mut s = Self::new(self.masses.clone(), self.dim, kappa)?;
        s.free = self.free;
        Ok(s)
    }

    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        let mut s = Self::new(self.masses.clone(), dim, self.kappa)?;
        s.free = self.free;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Configuration {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(n: usize, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != n * dim {
            return Err(Error::arg(format!(
                "expected {} coordinates, got {}",
                n * dim,
                coords.len()
            )));
        }
        Ok(Self { n, dim, coords })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            coords: vec![0.0; n * dim],
        }
    }

    pub fn zeros_like(sys: &MassSystem) -> Self {
        Self::zeros(sys.n_bodies(), sys.dim())
    }

    pub fn from_positions(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::arg("empty position list"));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("ragged or empty position rows"));
        }
        Ok(Self {
            n,
            dim,
            coords: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.coords.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    pub fn n_bodies(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn body(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            n: self.n,
            dim: self.dim,
            coords: self.coords.iter().map(|c| a * c).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        debug_assert_eq!(self.coords.len(), other.coords.len());
        Self {
            n: self.n,
            dim: self.dim,
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| *c == 0.0)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.dim == other.dim
    }

    /// Largest Euclidean pair distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                d = d.max(pair_distance(self.body(i), self.body(j)));
            }
        }
        d
    }

    /// Applies the same linear map of E (row-major `dim x dim`) to every body.
    pub fn map_bodies(&self, mat: &[f64]) -> Self {
        let d = self.dim;
        let mut out = self.coords.clone();
        for i in 0..self.n {
            let r = self.body(i);
            for a in 0..d {
                out[i * d + a] = (0..d).map(|b| mat[a * d + b] * r[b]).sum();
            }
        }
        Self {
            n: self.n,
            dim: d,
            coords: out,
        }
    }

    /// Relabels bodies: body `k` of the result is body `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            coords.extend_from_slice(self.body(p));
        }
        Self {
            n: self.n,
            dim: self.dim,
            coords,
        }
    }
}

impl From<Configuration> for Vec<Vec<f64>> {
    fn from(c: Configuration) -> Self {
        c.positions()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Configuration {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Configuration::from_positions(&rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolarDecomposition {
    pub lambda: f64,
    pub s: Configuration,
}

impl PolarDecomposition {
    pub fn recompose(&self) -> Configuration {
        self.s.scaled(self.lambda)
    }
}

fn check_shape(sys: &MassSystem, x: &Configuration) -> Result<()> {
    if x.n != sys.n_bodies() || x.dim != sys.dim() {
        return Err(Error::arg(format!(
            "configuration shape {}x{} does not match system {}x{}",
            x.n,
            x.dim,
            sys.n_bodies(),
            sys.dim()
        )));
    }
    Ok(())
}

fn pair_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn mass_inner_raw(masses: &[f64], dim: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        let mut dot = 0.0;
        for a in 0..dim {
            dot += x[i * dim + a] * y[i * dim + a];
        }
        acc += m * dot;
    }
    acc
}

pub fn mass_inner(sys: &MassSystem, x: &Configuration, y: &Configuration) -> Result<f64> {
    check_shape(sys, x)?;
    check_shape(sys, y)?;
    Ok(mass_inner_raw(
        sys.masses(),
        sys.dim(),
        &x.coords,
        &y.coords,
    ))
}

pub fn moment_of_inertia(sys: &MassSystem, x: &Configuration) -> Result<f64> {
    mass_inner(sys, x, x)
}

pub fn mass_norm(sys: &MassSystem, x: &Configuration) -> Result<f64> {
    Ok(moment_of_inertia(sys, x)?.sqrt())
}

/// Mass-metric distance between two configurations.
pub fn mass_distance(sys: &MassSystem, x: &Configuration, y: &Configuration) -> Result<f64> {
    check_shape(sys, x)?;
    check_shape(sys, y)?;
    let d = x.sub(y);
    Ok(mass_inner_raw(sys.masses(), sys.dim(), &d.coords, &d.coords).sqrt())
}

pub fn center_of_mass(sys: &MassSystem, x: &Configuration) -> Result<Vec<f64>> {
    check_shape(sys, x)?;
    let d = sys.dim();
    let mut c = vec![0.0; d];
    for (i, m) in sys.masses().iter().enumerate() {
        for a in 0..d {
            c[a] += m * x.coords[i * d + a];
        }
    }
    let total = sys.total_mass();
    c.iter_mut().for_each(|v| *v /= total);
    Ok(c)
}

pub fn project_cm(sys: &MassSystem, x: &Configuration) -> Result<Configuration> {
    let c = center_of_mass(sys, x)?;
    let d = sys.dim();
    let mut out = x.clone();
    for i in 0..sys.n_bodies() {
        for a in 0..d {
            out.coords[i * d + a] -= c[a];
        }
    }
    Ok(out)
}

pub fn is_reduced(sys: &MassSystem, x: &Configuration) -> Result<bool> {
    check_shape(sys, x)?;
    let d = sys.dim();
    let mut p = vec![0.0; d];
    let mut rmax: f64 = 0.0;
    for (i, m) in sys.masses().iter().enumerate() {
        let r = x.body(i);
        for a in 0..d {
            p[a] += m * r[a];
        }
        rmax = rmax.max(r.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(norm <= 1e-12 * sys.total_mass() * rmax)
}

pub fn polar_decompose(sys: &MassSystem, x: &Configuration) -> Result<PolarDecomposition> {
    let i = moment_of_inertia(sys, x)?;
    if i == 0.0 {
        return Err(Error::domain("total collision has no polar decomposition"));
    }
    if !is_reduced(sys, x)? {
        return Err(Error::arg(
            "polar decomposition needs a reduced configuration",
        ));
    }
    let lambda = i.sqrt();
    Ok(PolarDecomposition {
        lambda,
        s: x.scaled(1.0 / lambda),
    })
}

/// Reduces and rescales onto the inertia sphere.
pub fn normalize_to_sphere(sys: &MassSystem, x: &Configuration) -> Result<Configuration> {
    let p = project_cm(sys, x)?;
    let i = moment_of_inertia(sys, &p)?;
    if i == 0.0 {
        return Err(Error::domain("cannot normalize a total collision"));
    }
    Ok(p.scaled(1.0 / i.sqrt()))
}

/// Potential on raw coordinates; `+inf` on exact coincidence.
pub(crate) fn potential_raw(sys: &MassSystem, x: &[f64]) -> f64 {
    if sys.free {
        return 0.0;
    }
    let (n, d) = (sys.n_bodies(), sys.dim());
    let m = sys.masses();
    let e = -sys.kappa();
    let mut u = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mut r2 = 0.0;
            for a in 0..d {
                let dv = x[i * d + a] - x[j * d + a];
                r2 += dv * dv;
            }
            if r2 == 0.0 {
                return f64::INFINITY;
            }
            // r^{-2k} = (r^2)^{-k}
            u += m[i] * m[j] * r2.powf(e);
        }
    }
    u
}

/// Potential plus Euclidean partials `dU/dr_i`; optional dense Hessian
/// (row-major `len x len`). Assumes no exact coincidence.
pub(crate) fn potential_derivs_raw(
    sys: &MassSystem,
    x: &[f64],
    grad: &mut [f64],
    mut hess: Option<&mut [f64]>,
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    if let Some(h) = hess.as_deref_mut() {
        h.iter_mut().for_each(|v| *v = 0.0);
    }
    if sys.free {
        return 0.0;
    }
    let (n, d) = (sys.n_bodies(), sys.dim());
    let len = n * d;
    let m = sys.masses();
    let a = 2.0 * sys.kappa();
    let mut u = 0.0;
    let mut dv = [0.0f64; 8];
    let mut dvec: Vec<f64>;
    let diff: &mut [f64] = if d <= 8 {
        &mut dv[..d]
    } else {
        dvec = vec![0.0; d];
        &mut dvec
    };
    for i in 0..n {
        for j in i + 1..n {
            let mut r2 = 0.0;
            for k in 0..d {
                diff[k] = x[i * d + k] - x[j * d + k];
                r2 += diff[k] * diff[k];
            }
            let mm = m[i] * m[j];
            let pw = r2.powf(-0.5 * a); // r^{-a}
            u += mm * pw;
            let c1 = -a * mm * pw / r2; // -a m m r^{-a-2}
            for k in 0..d {
                grad[i * d + k] += c1 * diff[k];
                grad[j * d + k] -= c1 * diff[k];
            }
            if let Some(h) = hess.as_deref_mut() {
                let c2 = -(a + 2.0) / r2;
                for p in 0..d {
                    for q in 0..d {
                        let delta = if p == q { 1.0 } else { 0.0 };
                        let b = c1 * (delta + c2 * diff[p] * diff[q]);
                        h[(i * d + p) * len + i * d + q] += b;
                        h[(j * d + p) * len + j * d + q] += b;
                        h[(i * d + p) * len + j * d + q] -= b;
                        h[(j * d + p) * len + i * d + q] -= b;
                    }
                }
            }
        }
    }
    u
}

pub fn potential(sys: &MassSystem, x: &Configuration) -> f64 {
    debug_assert_eq!(x.coords.len(), sys.len());
    potential_raw(sys, &x.coords)
}

pub fn min_mutual_distance(x: &Configuration) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..x.n {
        for j in i + 1..x.n {
            d = d.min(pair_distance(x.body(i), x.body(j)));
        }
    }
    d
}

/// Collision test relative to the configuration diameter.
pub fn is_collision(x: &Configuration) -> bool {
    let diam = x.diameter();
    if diam == 0.0 {
        return true;
    }
    min_mutual_distance(x) < COLLISION_THRESHOLD * diam
}

/// Gradient of U in the mass metric.
pub fn potential_gradient(sys: &MassSystem, x: &Configuration) -> Result<Configuration> {
    check_shape(sys, x)?;
    if is_collision(x) {
        return Err(Error::domain("gradient of U is undefined at a collision"));
    }
    let mut g = vec![0.0; sys.len()];
    potential_derivs_raw(sys, &x.coords, &mut g, None);
    let d = sys.dim();
    let sign = if FLIP_GRADIENT_SIGN.load(Ordering::Relaxed) { -1.0 } else { 1.0 };
    for (i, m) in sys.masses().iter().enumerate() {
        for a in 0..d {
            g[i * d + a] *= sign / m;
        }
    }
    Ok(Configuration {
        n: x.n,
        dim: d,
        coords: g,
    })
}

/// Euclidean Hessian of U (row-major, `len x len`).
pub fn potential_hessian(sys: &MassSystem, x: &Configuration) -> Result<Vec<f64>> {
    check_shape(sys, x)?;
    if is_collision(x) {
        return Err(Error::domain("Hessian of U is undefined at a collision"));
    }
    let len = sys.len();
    let mut g = vec![0.0; len];
    let mut h = vec![0.0; len * len];
    potential_derivs_raw(sys, &x.coords, &mut g, Some(&mut h));
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rows: &[&[f64]]) -> Configuration {
        Configuration::from_positions(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mass_inner_weighted_sum() {
        let sys = MassSystem::new(vec![1.0, 2.0], 2, 0.5).unwrap();
        let x = cfg(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(mass_inner(&sys, &x, &x).unwrap(), 3.0);
        let sys1 = MassSystem::equal_masses(2, 1, 0.5).unwrap();
        let y = cfg(&[&[1.0], &[-1.0]]);
        assert_eq!(mass_inner(&sys1, &y, &y).unwrap(), 2.0);
        assert_eq!(
            mass_inner(&sys1, &y, &Configuration::zeros(2, 1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let sys = MassSystem::equal_masses(3, 2, 0.5).unwrap();
        let x = Configuration::zeros(2, 2);
        assert!(matches!(mass_inner(&sys, &x, &x), Err(Error::Argument(_))));
    }

    #[test]
    fn centroid_projection() {
        let sys = MassSystem::equal_masses(2, 1, 0.5).unwrap();
        let p = project_cm(&sys, &cfg(&[&[0.0], &[2.0]])).unwrap();
        assert_eq!(p.coords(), &[-1.0, 1.0]);
        let sys = MassSystem::new(vec![1.0, 3.0], 1, 0.5).unwrap();
        let p = project_cm(&sys, &cfg(&[&[4.0], &[0.0]])).unwrap();
        assert_eq!(p.coords(), &[3.0, -1.0]);
    }

    #[test]
    fn polar_parts() {
        let sys = MassSystem::equal_masses(2, 2, 0.5).unwrap();
        let x = cfg(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let p = polar_decompose(&sys, &x).unwrap();
        assert!((p.lambda - 2f64.sqrt()).abs() < 1e-15);
        assert!((p.s.coords()[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            polar_decompose(&sys, &Configuration::zeros(2, 2)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn potential_values() {
        let sys = MassSystem::equal_masses(3, 2, 0.5).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let tri = cfg(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]]);
        assert!((potential(&sys, &tri) - 3.0).abs() < 1e-14);
        let sys2 = MassSystem::equal_masses(2, 2, 0.5).unwrap();
        let s = 0.5f64.sqrt();
        let x = cfg(&[&[s, 0.0], &[-s, 0.0]]);
        assert!((potential(&sys2, &x) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            potential(&sys2, &cfg(&[&[1.0, 1.0], &[1.0, 1.0]])),
            f64::INFINITY
        );
    }

    #[test]
    fn kepler_euler_identity_value() {
        let sys = MassSystem::equal_masses(2, 2, 0.5).unwrap();
        let s = 0.5f64.sqrt();
        let x = cfg(&[&[s, 0.0], &[-s, 0.0]]);
        let g = potential_gradient(&sys, &x).unwrap();
        let v = mass_inner(&sys, &g, &x).unwrap();
        assert!((v + 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mutual_distance() {
        assert_eq!(min_mutual_distance(&cfg(&[&[0.0], &[1.0], &[5.0]])), 1.0);
        assert_eq!(min_mutual_distance(&cfg(&[&[2.0], &[2.0], &[5.0]])), 0.0);
        assert!(is_collision(&cfg(&[&[2.0], &[2.0], &[5.0]])));
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let sys = MassSystem::new(vec![1.0, 2.0, 0.5], 2, 0.3).unwrap();
        let x = cfg(&[&[0.1, 0.3], &[1.2, -0.4], &[-0.7, 0.9]]);
        let h = potential_hessian(&sys, &x).unwrap();
        let len = sys.len();
        let eps = 1e-6;
        for k in 0..len {
            let mut gp = vec![0.0; len];
            let mut gm = vec![0.0; len];
            let mut xp = x.coords().to_vec();
            let mut xm = x.coords().to_vec();
            xp[k] += eps;
            xm[k] -= eps;
            potential_derivs_raw(&sys, &xp, &mut gp, None);
            potential_derivs_raw(&sys, &xm, &mut gm, None);
            for r in 0..len {
                let fd = (gp[r] - gm[r]) / (2.0 * eps);
                assert!((fd - h[r * len + k]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
