//! Circles and two-spheres on the inertia sphere, with the collision set.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{is_reduced, mass_inner, Configuration, MassSystem};
use crate::weakkam::reduced_basis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CollisionGeometry {
    /// Unit vector in basis coordinates.
    Point { at: Vec<f64> },
    /// Great circle orthogonal to `normal` (two-spheres only).
    GreatCircle { normal: Vec<f64> },
}

/// Connected piece of the collision set inside the chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionComponent {
    pub label: String,
    pub pair: (usize, usize),
    pub geometry: CollisionGeometry,
}

/// A circle (`n = [n_theta]`, `s = cos a e1 + sin a e2`) or a two-sphere
/// (`n = [n_polar, n_azimuth]`, standard spherical angles over `e1, e2, e3`)
/// spanned by a mass-orthonormal reduced basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereChart {
    pub label: String,
    pub basis: Vec<Configuration>,
    pub n: Vec<usize>,
    pub collisions: Vec<CollisionComponent>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cross(u: &[f64], w: &[f64]) -> Vec<f64> {
    vec![
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ]
}

impl SphereChart {
    fn build(label: &str, basis: Vec<Configuration>, n: Vec<usize>) -> Result<Self> {
        let q = basis.len();
        if !(q == 2 || q == 3) || n.len() != q - 1 || n.iter().any(|&k| k < 4) {
            return Err(Error::arg(
                "sphere charts are circles or two-spheres with at least 4 nodes per axis",
            ));
        }
        let nb = basis[0].n_bodies();
        let dim = basis[0].dim();
        let mut collisions = Vec::new();
        for i in 0..nb {
            for j in i + 1..nb {
                // relative vector of the pair is linear in basis coordinates
                let a: Vec<Vec<f64>> = basis
                    .iter()
                    .map(|e| (0..dim).map(|d| e.body(i)[d] - e.body(j)[d]).collect())
                    .collect();
                let g = DMatrix::from_fn(q, q, |r, c| dot(&a[r], &a[c]));
                let scale = g.trace().max(f64::MIN_POSITIVE);
                let eig = SymmetricEigen::new(g.clone());
                let nullity = (0..q).filter(|&k| eig.eigenvalues[k].abs() <= 1e-12 * scale).count();
                // null directions from the rows of the Gram matrix, which is
                // more accurate than the eigenvectors of a clustered spectrum
                let rows: Vec<Vec<f64>> = (0..q).map(|r| (0..q).map(|c| g[(r, c)]).collect()).collect();
                let longest = rows
                    .iter()
                    .max_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))
                    .cloned()
                    .unwrap_or_default();
                let tag = format!("{i}-{j}");
                match (q, nullity) {
                    (_, 0) => {}
                    (2, 1) | (3, 1) => {
                        let mut p = if q == 2 {
                            vec![-longest[1], longest[0]]
                        } else {
                            let mut best = vec![0.0; 3];
                            for r in 0..3 {
                                for c in r + 1..3 {
                                    let x = cross(&rows[r], &rows[c]);
                                    if dot(&x, &x) > dot(&best, &best) {
                                        best = x;
                                    }
                                }
                            }
                            best
                        };
                        let norm = dot(&p, &p).sqrt();
                        p.iter_mut().for_each(|v| *v /= norm);
                        // deterministic orientation: first nonzero coordinate positive
                        if let Some(f) = p.iter().find(|v| v.abs() > 1e-12) {
                            if *f < 0.0 {
                                p.iter_mut().for_each(|v| *v = -*v);
                            }
                        }
                        let m: Vec<f64> = p.iter().map(|v| -v).collect();
                        collisions.push(CollisionComponent {
                            label: format!("{tag}+"),
                            pair: (i, j),
                            geometry: CollisionGeometry::Point { at: p },
                        });
                        collisions.push(CollisionComponent {
                            label: format!("{tag}-"),
                            pair: (i, j),
                            geometry: CollisionGeometry::Point { at: m },
                        });
                    }
                    (3, 2) => {
                        let norm = dot(&longest, &longest).sqrt();
                        let normal: Vec<f64> = longest.iter().map(|v| v / norm).collect();
                        collisions.push(CollisionComponent {
                            label: tag,
                            pair: (i, j),
                            geometry: CollisionGeometry::GreatCircle { normal },
                        });
                    }
                    _ => return Err(Error::arg("the whole chart lies in the collision set")),
                }
            }
        }
        Ok(Self {
            label: label.to_string(),
            basis,
            n,
            collisions,
        })
    }

    fn check_basis(sys: &MassSystem, basis: &[Configuration]) -> Result<()> {
        for (i, e) in basis.iter().enumerate() {
            if e.n_bodies() != sys.n_bodies() || e.dim() != sys.dim() || !is_reduced(sys, e)? {
                return Err(Error::arg(
                    "sphere basis must be reduced configurations of the system",
                ));
            }
            for (j, f) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (mass_inner(sys, e, f)? - want).abs() > 1e-12 {
                    return Err(Error::arg("sphere basis must be mass-orthonormal"));
                }
            }
        }
        Ok(())
    }

    pub fn circle(
        sys: &MassSystem,
        label: &str,
        e1: Configuration,
        e2: Configuration,
        n: usize,
    ) -> Result<Self> {
        let basis = vec![e1, e2];
        Self::check_basis(sys, &basis)?;
        Self::build(label, basis, vec![n])
    }

    /// Circle chart without a system at hand (basis assumed checked).
    pub(crate) fn circle_from_basis(
        label: &str,
        e1: Configuration,
        e2: Configuration,
        n: usize,
    ) -> Result<Self> {
        Self::build(label, vec![e1, e2], vec![n])
    }

    pub fn two_sphere(
        sys: &MassSystem,
        label: &str,
        basis: [Configuration; 3],
        n_polar: usize,
        n_azimuth: usize,
    ) -> Result<Self> {
        let basis = basis.to_vec();
        Self::check_basis(sys, &basis)?;
        Self::build(label, basis, vec![n_polar, n_azimuth])
    }

    /// Circle through the first two reduced basis vectors: the whole sphere
    /// for two planar bodies or three bodies on a line.
    pub fn reduced_circle(sys: &MassSystem, label: &str, n: usize) -> Result<Self> {
        let b = reduced_basis(sys, 2)?;
        Self::circle(sys, label, b[0].clone(), b[1].clone(), n)
    }

    pub fn dimension(&self) -> usize {
        self.n.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n.iter().product()
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        match self.n.len() {
            1 => vec![i],
            _ => vec![i % self.n[0], i / self.n[0]],
        }
    }

    pub fn index(&self, k: &[usize]) -> usize {
        match k.len() {
            1 => k[0],
            _ => k[0] + self.n[0] * k[1],
        }
    }

    pub fn spacing(&self, d: usize) -> f64 {
        match (self.n.len(), d) {
            (1, _) => std::f64::consts::TAU / self.n[0] as f64,
            (_, 0) => std::f64::consts::PI / self.n[0] as f64,
            _ => std::f64::consts::TAU / self.n[1] as f64,
        }
    }

    /// Axis `d` is periodic except for the polar angle of a two-sphere.
    pub fn periodic(&self, d: usize) -> bool {
        !(self.n.len() == 2 && d == 0)
    }

    pub fn node_params(&self, i: usize) -> Vec<f64> {
        let k = self.multi_index(i);
        match self.n.len() {
            1 => vec![k[0] as f64 * self.spacing(0)],
            _ => vec![
                (k[0] as f64 + 0.5) * self.spacing(0),
                k[1] as f64 * self.spacing(1),
            ],
        }
    }

    /// Neighbour node indices along axis `d`, if both exist.
    pub fn neighbours(&self, k: &[usize], d: usize) -> Option<(usize, usize)> {
        let n = self.n[d];
        let (lo, hi) = if self.periodic(d) {
            ((k[d] + n - 1) % n, (k[d] + 1) % n)
        } else if k[d] == 0 || k[d] + 1 >= n {
            return None;
        } else {
            (k[d] - 1, k[d] + 1)
        };
        let mut a = k.to_vec();
        let mut b = k.to_vec();
        a[d] = lo;
        b[d] = hi;
        Some((self.index(&a), self.index(&b)))
    }

    /// Basis coordinates of the sphere point with parameters `p`.
    pub fn coords(&self, p: &[f64]) -> Vec<f64> {
        match self.n.len() {
            1 => vec![p[0].cos(), p[0].sin()],
            _ => vec![p[0].sin() * p[1].cos(), p[0].sin() * p[1].sin(), p[0].cos()],
        }
    }

    /// Derivatives of the basis coordinates along each parameter.
    pub fn tangents(&self, p: &[f64]) -> Vec<Vec<f64>> {
        match self.n.len() {
            1 => vec![vec![-p[0].sin(), p[0].cos()]],
            _ => vec![
                vec![
                    p[0].cos() * p[1].cos(),
                    p[0].cos() * p[1].sin(),
                    -p[0].sin(),
                ],
                vec![-p[0].sin() * p[1].sin(), p[0].sin() * p[1].cos(), 0.0],
            ],
        }
    }

    /// Diagonal of the inverse induced metric.
    pub fn inverse_metric(&self, p: &[f64]) -> Vec<f64> {
        match self.n.len() {
            1 => vec![1.0],
            _ => vec![1.0, 1.0 / p[0].sin().powi(2)],
        }
    }

    pub fn combine(&self, c: &[f64]) -> Configuration {
        let mut out = self.basis[0].scaled(c[0]);
        for (e, a) in self.basis.iter().zip(c).skip(1) {
            out = out.axpy(*a, e);
        }
        out
    }

    pub fn config(&self, p: &[f64]) -> Configuration {
        self.combine(&self.coords(p))
    }

    pub fn node_config(&self, i: usize) -> Configuration {
        self.config(&self.node_params(i))
    }

    /// Angular distance from `p` to one collision component.
    pub fn distance_to(&self, p: &[f64], comp: &CollisionComponent) -> f64 {
        let s = self.coords(p);
        match &comp.geometry {
            CollisionGeometry::Point { at } => {
                // chord form stays accurate next to the point
                let chord = s.iter().zip(at).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                2.0 * (0.5 * chord).min(1.0).asin()
            }
            CollisionGeometry::GreatCircle { normal } => {
                let n = dot(normal, normal).sqrt();
                (dot(&s, normal) / n).abs().clamp(0.0, 1.0).asin()
            }
        }
    }

    /// Nearest collision component and its angular distance.
    pub fn nearest_collision(&self, p: &[f64]) -> Option<(usize, f64)> {
        self.collisions
            .iter()
            .enumerate()
            .map(|(k, c)| (k, self.distance_to(p, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn distance_to_collisions(&self, p: &[f64]) -> f64 {
        self.nearest_collision(p).map_or(f64::INFINITY, |x| x.1)
    }

    /// Parameters of a collision point on a circle chart.
    pub fn collision_angle(&self, comp: &CollisionComponent) -> Option<f64> {
        match (&comp.geometry, self.n.len()) {
            (CollisionGeometry::Point { at }, 1) => {
                Some(at[1].atan2(at[0]).rem_euclid(std::f64::consts::TAU))
            }
            _ => None,
        }
    }
}
