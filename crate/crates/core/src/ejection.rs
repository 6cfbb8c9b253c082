//! Parabolic ejections from total collision and the minimizing test.
//!
//! For a central `s` with `I(s) = 1` the homothetic motion
//! `gamma(t) = alpha t^c s`, `c = 1/(1+k)`, has zero energy, reaches `s` at
//! `t(s) = alpha^{-(1+k)}` and its action up to that time is `psi(s)`.

use serde::Serialize;

use crate::action::{minimize_free_time, ActionOptions};
use crate::central::central_residual;
use crate::error::{Error, Result};
use crate::mesh::{graded_times, quadrature_grading, Grading, GAUSS3};
use crate::space::{
    mass_norm, moment_of_inertia, potential, potential_gradient, Configuration, MassSystem,
};

#[derive(Clone, Debug, Serialize)]
pub struct ParabolicEjection {
    pub s: Configuration,
    pub kappa: f64,
    pub c_kappa: f64,
    pub alpha: f64,
    pub t_unit: f64,
    pub psi: f64,
    /// U(s)
    pub potential_s: f64,
}

pub fn psi_closed_form(kappa: f64, u: f64) -> f64 {
    (2.0 * u).sqrt() / (1.0 - kappa)
}

pub fn alpha_closed_form(kappa: f64, u: f64) -> f64 {
    (2.0 * (1.0 + kappa).powi(2) * u).powf(1.0 / (2.0 * (1.0 + kappa)))
}

/// Central residual allowed for an ejection, relative to `|grad U|`.
pub const CENTRAL_TOL: f64 = 1e-8;

pub fn make_ejection(sys: &MassSystem, s: &Configuration) -> Result<ParabolicEjection> {
    let i = moment_of_inertia(sys, s)?;
    if (i - 1.0).abs() > 1e-10 {
        return Err(Error::arg(format!("ejection needs I(s) = 1, got {i}")));
    }
    let res = central_residual(sys, s)?;
    let scale = mass_norm(sys, &potential_gradient(sys, s)?)?;
    if res > CENTRAL_TOL * scale.max(1.0) {
        return Err(Error::arg(format!(
            "configuration is not central (residual {res:.3e}); its ejection is not a motion"
        )));
    }
    let kappa = sys.kappa();
    let u = potential(sys, s);
    let alpha = alpha_closed_form(kappa, u);
    Ok(ParabolicEjection {
        s: s.clone(),
        kappa,
        c_kappa: 1.0 / (1.0 + kappa),
        alpha,
        t_unit: alpha.powf(-(1.0 + kappa)),
        psi: psi_closed_form(kappa, u),
        potential_s: u,
    })
}

impl ParabolicEjection {
    fn check_time(t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::arg("ejection time must be positive"));
        }
        Ok(())
    }

    /// Scalar factor `alpha t^c` in front of `s`.
    pub fn radius(&self, t: f64) -> f64 {
        self.alpha * t.powf(self.c_kappa)
    }

    pub fn position(&self, t: f64) -> Result<Configuration> {
        Self::check_time(t)?;
        Ok(self.s.scaled(self.radius(t)))
    }

    pub fn velocity(&self, t: f64) -> Result<Configuration> {
        Self::check_time(t)?;
        let c = self.c_kappa;
        Ok(self.s.scaled(c * self.alpha * t.powf(c - 1.0)))
    }

    pub fn acceleration(&self, t: f64) -> Result<Configuration> {
        Self::check_time(t)?;
        let c = self.c_kappa;
        Ok(self.s.scaled(c * (c - 1.0) * self.alpha * t.powf(c - 2.0)))
    }

    /// Relative Newton residual `|gamma'' - grad U(gamma)| / |grad U(gamma)|`.
    pub fn newton_residual(&self, sys: &MassSystem, t: f64) -> Result<f64> {
        let g = potential_gradient(sys, &self.position(t)?)?;
        let a = self.acceleration(t)?;
        Ok(mass_norm(sys, &a.sub(&g))? / mass_norm(sys, &g)?)
    }

    /// Kinetic energy from the analytic velocity and U from the potential.
    pub fn energy(&self, sys: &MassSystem, t: f64) -> Result<(f64, f64)> {
        let v = self.velocity(t)?;
        let kin = 0.5 * moment_of_inertia(sys, &v)?;
        Ok((kin, potential(sys, &self.position(t)?)))
    }

    /// Closed form shared by kinetic and potential energy along the ray.
    pub fn energy_closed_form(&self, t: f64) -> f64 {
        let k = self.kappa;
        2f64.powf(-k / (1.0 + k))
            * (1.0 + k).powf(-2.0 * k / (1.0 + k))
            * self.potential_s.powf(1.0 / (1.0 + k))
            * t.powf(-2.0 * k / (1.0 + k))
    }
}

/// `psi(s)` as `int_0^{t(s)} 2U(gamma(t)) dt` with a three-point Gauss rule
/// on a mesh of `mesh_size` nodes graded toward the collision.
pub fn psi_by_quadrature(sys: &MassSystem, s: &Configuration, mesh_size: usize) -> Result<f64> {
    if mesh_size < 2 {
        return Err(Error::arg("quadrature needs at least two nodes"));
    }
    let ej = make_ejection(sys, s)?;
    let q = quadrature_grading(sys.kappa());
    let t = graded_times(0.0, ej.t_unit, mesh_size - 1, Grading::Start(q));
    let mut sum = 0.0;
    for w in t.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let mut cell = 0.0;
        for (xi, wt) in GAUSS3 {
            let tq = c + h * xi;
            cell += wt * 2.0 * potential(sys, &s.scaled(ej.radius(tq)));
        }
        sum += h * cell;
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentMinimizing,
    NonMinimizing,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConsistentMinimizing => "consistent-minimizing",
            Verdict::NonMinimizing => "non-minimizing",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizingVerdict {
    pub s: Configuration,
    pub psi: f64,
    pub phi_upper: f64,
    pub gap: f64,
    pub error_estimate: f64,
    pub verdict: Verdict,
    pub optimal_time: Option<f64>,
}

/// Verdict from the gap and its error bar with separation `factor`.
pub fn classify_gap(gap: f64, err: f64, factor: f64) -> Verdict {
    if gap > factor * err {
        Verdict::NonMinimizing
    } else if gap.abs() <= factor * err {
        Verdict::ConsistentMinimizing
    } else {
        Verdict::Inconclusive
    }
}

/// Compares `psi(s)` with a numerical `phi(s, 0)`.
pub fn is_minimizing(
    sys: &MassSystem,
    s: &Configuration,
    opts: &ActionOptions,
    factor: f64,
) -> Result<MinimizingVerdict> {
    let ej = make_ejection(sys, s)?;
    let mut o = opts.clone();
    o.estimate_error = true;
    let zero = Configuration::zeros_like(sys);
    let res = minimize_free_time(sys, s, &zero, &o)?;
    if !res.converged {
        return Err(Error::convergence(
            "free-time solve for phi(s, 0) did not converge",
        ));
    }
    let gap = ej.psi - res.value;
    Ok(MinimizingVerdict {
        s: s.clone(),
        psi: ej.psi,
        phi_upper: res.value,
        gap,
        error_estimate: res.error_estimate,
        verdict: classify_gap(gap, res.error_estimate, factor),
        optimal_time: res.optimal_time,
    })
}
