//! Known central configurations for two and three bodies.

use serde::Serialize;

use crate::central::{central_from, find_central, CentralConfiguration};
use crate::error::{Error, Result};
use crate::space::{normalize_to_sphere, Configuration, MassSystem};

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub id: String,
    pub central: CentralConfiguration,
}

/// Two bodies on the first axis.
pub fn kepler(sys: &MassSystem) -> Result<Configuration> {
    if sys.n_bodies() != 2 {
        return Err(Error::arg("kepler configuration needs two bodies"));
    }
    let d = sys.dim();
    let mut c = vec![0.0; 2 * d];
    c[0] = 1.0;
    c[d] = -1.0;
    normalize_to_sphere(sys, &Configuration::new(2, d, c)?)
}

/// Equilateral triangle in the first two axes; central for every mass choice.
pub fn lagrange(sys: &MassSystem) -> Result<Configuration> {
    if sys.n_bodies() != 3 || sys.dim() < 2 {
        return Err(Error::arg(
            "lagrange configuration needs three bodies in dim >= 2",
        ));
    }
    let d = sys.dim();
    let mut c = vec![0.0; 3 * d];
    c[d] = 1.0;
    c[2 * d] = 0.5;
    c[2 * d + 1] = 3f64.sqrt() / 2.0;
    normalize_to_sphere(sys, &Configuration::new(3, d, c)?)
}

/// Collinear configuration on the first axis with body `middle` between the others.
pub fn euler(sys: &MassSystem, middle: usize) -> Result<Configuration> {
    if sys.n_bodies() != 3 || middle > 2 {
        return Err(Error::arg("euler configuration needs three bodies"));
    }
    let line = sys.with_dim(1)?;
    let mut x = vec![0.0; 3];
    let others: Vec<usize> = (0..3).filter(|&i| i != middle).collect();
    x[others[0]] = -1.0;
    x[others[1]] = 1.0;
    let seed = Configuration::new(3, 1, x)?;
    let m = sys.masses();
    let s1 = if m[others[0]] == m[others[1]] {
        // symmetric masses: the symmetric line configuration is exact
        normalize_to_sphere(&line, &seed)?
    } else {
        find_central(&line, &seed, 1e-13, 500)?.s
    };
    embed_line(sys, &s1)
}

/// Places a one-dimensional configuration on the first axis of `sys`.
pub fn embed_line(sys: &MassSystem, s: &Configuration) -> Result<Configuration> {
    if s.dim() != 1 || s.n_bodies() != sys.n_bodies() {
        return Err(Error::arg("expected a collinear configuration"));
    }
    let d = sys.dim();
    let mut c = vec![0.0; sys.n_bodies() * d];
    for (i, v) in s.coords().iter().enumerate() {
        c[i * d] = *v;
    }
    Configuration::new(sys.n_bodies(), d, c)
}

/// Catalog of central configurations with the minimal flag filled in.
pub fn catalog(sys: &MassSystem) -> Result<Vec<CatalogEntry>> {
    let tol = 1e-9;
    let mut out = Vec::new();
    match sys.n_bodies() {
        2 => out.push(CatalogEntry {
            id: "kepler".into(),
            central: central_from(sys, &kepler(sys)?, tol)?,
        }),
        3 => {
            if sys.dim() >= 2 {
                out.push(CatalogEntry {
                    id: "lagrange".into(),
                    central: central_from(sys, &lagrange(sys)?, tol)?,
                });
            }
            for mid in 0..3 {
                out.push(CatalogEntry {
                    id: format!("euler-{}", mid + 1),
                    central: central_from(sys, &euler(sys, mid)?, tol)?,
                });
            }
        }
        n => return Err(Error::arg(format!("no catalog shipped for {n} bodies"))),
    }
    let umin = out
        .iter()
        .map(|e| e.central.potential)
        .fold(f64::INFINITY, f64::min);
    for e in &mut out {
        e.central.is_minimal = e.central.potential <= umin + 1e-8 * umin.abs();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::potential;

    #[test]
    fn equal_mass_values() {
        let sys = MassSystem::equal_masses(3, 2, 0.5).unwrap();
        let cat = catalog(&sys).unwrap();
        assert_eq!(cat.len(), 4);
        assert!((cat[0].central.potential - 3.0).abs() < 1e-12);
        assert!(cat[0].central.is_minimal);
        for e in &cat[1..] {
            assert!((e.central.potential - 2.5 * 2f64.sqrt()).abs() < 1e-12);
            assert!(!e.central.is_minimal);
        }
    }

    #[test]
    fn unequal_euler_is_central() {
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2, 0.5).unwrap();
        for mid in 0..3 {
            let e = euler(&sys, mid).unwrap();
            assert!(crate::central::central_residual(&sys, &e).unwrap() < 1e-9);
            assert!(potential(&sys, &e).is_finite());
        }
    }
}
