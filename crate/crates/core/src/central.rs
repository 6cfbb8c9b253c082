//! Central configurations: critical points of U restricted to the inertia sphere.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{
    is_collision, mass_inner_raw, mass_norm, moment_of_inertia, normalize_to_sphere, potential,
    potential_gradient, potential_hessian, Configuration, MassSystem,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralConfiguration {
    pub s: Configuration,
    pub multiplier: f64,
    pub residual: f64,
    #[serde(rename = "U")]
    pub potential: f64,
    pub is_minimal: bool,
}

/// Tangential part of the gradient, `grad U + 2 kappa U s`.
pub fn tangential_gradient(sys: &MassSystem, s: &Configuration) -> Result<Configuration> {
    let g = potential_gradient(sys, s)?;
    let u = potential(sys, s);
    Ok(g.axpy(2.0 * sys.kappa() * u, s))
}

pub fn central_residual(sys: &MassSystem, s: &Configuration) -> Result<f64> {
    if is_collision(s) {
        return Err(Error::domain("central residual requested at a collision"));
    }
    mass_norm(sys, &tangential_gradient(sys, s)?)
}

/// Mass-orthonormal basis of the tangent space of S at `s` (inside V).
fn tangent_basis(sys: &MassSystem, s: &Configuration) -> Vec<Vec<f64>> {
    let (n, d) = (sys.n_bodies(), sys.dim());
    let m = sys.masses();
    let len = n * d;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    // constraint directions: centre-of-mass translations and the radial direction
    let mut cons: Vec<Vec<f64>> = Vec::new();
    for a in 0..d {
        let mut v = vec![0.0; len];
        for i in 0..n {
            v[i * d + a] = 1.0;
        }
        cons.push(v);
    }
    cons.push(s.coords().to_vec());
    let ip = |x: &[f64], y: &[f64]| mass_inner_raw(m, d, x, y);
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for v in cons {
        let mut w = v;
        for q in &ortho {
            let c = ip(&w, q);
            w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let nn = ip(&w, &w).sqrt();
        if nn > 1e-12 {
            w.iter_mut().for_each(|a| *a /= nn);
            ortho.push(w);
        }
    }
    let k0 = ortho.len();
    for e in 0..len {
        let mut w = vec![0.0; len];
        w[e] = 1.0;
        for _ in 0..2 {
            for q in &ortho {
                let c = ip(&w, q);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nn = ip(&w, &w).sqrt();
        if nn > 1e-8 {
            w.iter_mut().for_each(|a| *a /= nn);
            ortho.push(w);
        }
    }
    basis.extend(ortho.drain(k0..));
    basis
}

/// One Gauss-Newton step on the tangential gradient, solved in a tangent basis.
fn newton_direction(sys: &MassSystem, s: &Configuration) -> Result<Configuration> {
    let (d, len) = (sys.dim(), sys.len());
    let m = sys.masses();
    let kappa = sys.kappa();
    let u = potential(sys, s);
    let grad = potential_gradient(sys, s)?;
    let h = potential_hessian(sys, s)?;
    let f = grad.axpy(2.0 * kappa * u, s);
    // partials dU/dx = M grad
    let partial: Vec<f64> = (0..len).map(|k| m[k / d] * grad.coords()[k]).collect();
    let basis = tangent_basis(sys, s);
    let k = basis.len();
    if k == 0 {
        return Ok(Configuration::zeros_like(sys));
    }
    // J v = M^{-1} H v + 2k s (dU . v) + 2k U v
    let jv = |v: &[f64]| -> Vec<f64> {
        let du: f64 = partial.iter().zip(v).map(|(a, b)| a * b).sum();
        (0..len)
            .map(|r| {
                let hv: f64 = (0..len).map(|c| h[r * len + c] * v[c]).sum();
                hv / m[r / d] + 2.0 * kappa * (s.coords()[r] * du + u * v[r])
            })
            .collect()
    };
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (cj, bj) in basis.iter().enumerate() {
        let col = jv(bj);
        for (ri, bi) in basis.iter().enumerate() {
            a[(ri, cj)] = mass_inner_raw(m, d, bi, &col);
        }
    }
    for (ri, bi) in basis.iter().enumerate() {
        rhs[ri] = -mass_inner_raw(m, d, bi, f.coords());
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let c = svd
        .solve(&rhs, 1e-10 * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::convergence(format!("pseudo-inverse failed: {e}")))?;
    let mut delta = vec![0.0; len];
    for (ci, bi) in c.iter().zip(&basis) {
        delta.iter_mut().zip(bi).for_each(|(x, y)| *x += ci * y);
    }
    Configuration::new(sys.n_bodies(), d, delta)
}

fn retract(
    sys: &MassSystem,
    s: &Configuration,
    step: f64,
    dir: &Configuration,
) -> Option<Configuration> {
    let x = s.axpy(step, dir);
    if is_collision(&x) {
        return None;
    }
    normalize_to_sphere(sys, &x).ok()
}

/// Projected descent on U restricted to S followed by a Newton polish.
pub fn find_central(
    sys: &MassSystem,
    seed: &Configuration,
    tol: f64,
    max_iter: usize,
) -> Result<CentralConfiguration> {
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    if seed.n_bodies() != sys.n_bodies() || seed.dim() != sys.dim() {
        return Err(Error::arg("seed shape does not match the system"));
    }
    if is_collision(seed) {
        return Err(Error::domain("seed is a collision configuration"));
    }
    let on_sphere = (moment_of_inertia(sys, seed)? - 1.0).abs() <= 1e-14
        && crate::space::is_reduced(sys, seed)?;
    let mut s = if on_sphere {
        seed.clone()
    } else {
        normalize_to_sphere(sys, seed)?
    };
    let mut res = central_residual(sys, &s)?;
    let mut iter = 0;
    let polish_switch = 1e-4;

    // descent phase
    while iter < max_iter && res > tol {
        let gnorm = mass_norm(sys, &potential_gradient(sys, &s)?)?;
        if res <= polish_switch * gnorm {
            break;
        }
        iter += 1;
        let g = tangential_gradient(sys, &s)?;
        let u0 = potential(sys, &s);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            if let Some(t) = retract(sys, &s, -step, &g) {
                let u1 = potential(sys, &t);
                if u1 <= u0 - 1e-4 * step * res * res {
                    accepted = Some(t);
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some(t) => {
                s = t;
                res = central_residual(sys, &s)?;
            }
            None => break,
        }
    }

    // polish phase
    let mut stalls = 0;
    while iter < max_iter && res > tol {
        iter += 1;
        let dir = newton_direction(sys, &s)?;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-6 {
            if let Some(t) = retract(sys, &s, step, &dir) {
                let r = central_residual(sys, &t)?;
                if r < res {
                    s = t;
                    res = r;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            stalls += 1;
            if stalls > 2 {
                break;
            }
        }
    }

    if res > tol {
        return Err(Error::Convergence {
            message: format!("central search stopped at residual {res:.3e} (tol {tol:.1e})"),
            best: Some(Box::new(s)),
        });
    }
    let u = potential(sys, &s);
    Ok(CentralConfiguration {
        multiplier: -2.0 * sys.kappa() * u,
        residual: res,
        potential: u,
        is_minimal: false,
        s,
    })
}

/// Wraps an already central configuration without searching.
pub fn central_from(sys: &MassSystem, s: &Configuration, tol: f64) -> Result<CentralConfiguration> {
    let s = normalize_to_sphere(sys, s)?;
    let res = central_residual(sys, &s)?;
    let scale = mass_norm(sys, &potential_gradient(sys, &s)?)?;
    if res > tol * scale.max(1.0) {
        return Err(Error::arg(format!(
            "configuration is not central (residual {res:.3e})"
        )));
    }
    let u = potential(sys, &s);
    Ok(CentralConfiguration {
        multiplier: -2.0 * sys.kappa() * u,
        residual: res,
        potential: u,
        is_minimal: false,
        s,
    })
}

pub fn classify_minimal(
    sys: &MassSystem,
    s: &Configuration,
    candidates: &[CentralConfiguration],
) -> Result<bool> {
    if candidates.is_empty() {
        return Err(Error::arg("empty candidate catalog"));
    }
    let i = moment_of_inertia(sys, s)?;
    let u = potential(sys, s) * i.powf(sys.kappa());
    let umin = candidates
        .iter()
        .map(|c| c.potential)
        .fold(f64::INFINITY, f64::min);
    Ok(u <= umin + 1e-8 * umin.abs())
}
