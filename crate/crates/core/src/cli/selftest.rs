//! Fast checks run by `nbody-hkam selftest`.
//!
//! Every number printed here is computed deterministically, so the report
//! is byte-identical for any worker count.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{lower_bound, minimize_fixed_time, phi_scaling_check, ActionOptions};
use crate::catalog;
use crate::central::find_central;
use crate::ejection::{is_minimizing, make_ejection, psi_by_quadrature, Verdict};
use crate::error::Result;
use crate::flow::{
    collision_map, gradient_flow, reconstruct_calibrating, AnalyticField, CalibrateOptions,
    CollisionMapOptions, FlowOptions, SampledField,
};
use crate::io::{csv_writer, fmt17};
use crate::space::{
    mass_inner, potential, potential_gradient, project_cm, Configuration, MassSystem,
};
use crate::spherehj::{solve_hjh, HjhOptions, SphereChart, SphereFunction};
use crate::weakkam::{iterate_with, Chart, GridFunction, LaxOleinikOperator, WeakKamOptions};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    /// Human-readable pass condition on `value`.
    pub bound: String,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            s.push_str(&format!("{tag} {}: {:.6e} ({})\n", c.name, c.value, c.bound));
        }
        let passed = self.checks.iter().filter(|c| c.pass).count();
        s.push_str(&format!("{passed}/{} checks passed\n", self.checks.len()));
        s
    }

    pub fn csv(&self) -> Vec<u8> {
        let mut wr = csv_writer(Vec::new());
        let mut rows = vec![["check", "pass", "value", "bound"].map(String::from)];
        for c in &self.checks {
            rows.push([c.name.into(), c.pass.to_string(), fmt17(c.value), c.bound.clone()]);
        }
        for r in &rows {
            wr.write_record(r).expect("in-memory write");
        }
        wr.into_inner().expect("in-memory write")
    }

    fn push(&mut self, name: &'static str, r: Result<(f64, bool)>, bound: &str) {
        let (value, pass) = r.unwrap_or((f64::NAN, false));
        self.checks.push(Check {
            name,
            pass: pass && !value.is_nan(),
            value,
            bound: bound.into(),
        });
    }

    /// `value <= tol`.
    fn at_most(&mut self, name: &'static str, r: Result<f64>, tol: f64) {
        self.push(name, r.map(|v| (v, v <= tol)), &format!("<= {tol:e}"));
    }
}

const KAPPAS: [f64; 3] = [0.25, 0.5, 0.75];

fn three(kappa: f64) -> Result<MassSystem> {
    MassSystem::equal_masses(3, 2, kappa)
}

fn two(kappa: f64) -> Result<MassSystem> {
    MassSystem::equal_masses(2, 2, kappa)
}

/// Lagrange, Euler and Kepler configurations at one kappa.
fn standard(kappa: f64) -> Result<Vec<(MassSystem, Configuration)>> {
    let s3 = three(kappa)?;
    let s2 = two(kappa)?;
    Ok(vec![
        (s3.clone(), catalog::lagrange(&s3)?),
        (s3.clone(), catalog::euler(&s3, 1)?),
        (s2.clone(), catalog::kepler(&s2)?),
    ])
}

fn euler_identity() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for k in KAPPAS {
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2, k)?;
        for _ in 0..20 {
            let c: Vec<f64> = (0..sys.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = project_cm(&sys, &Configuration::new(3, 2, c)?)?;
            let u = potential(&sys, &x);
            let lhs = mass_inner(&sys, &potential_gradient(&sys, &x)?, &x)?;
            worst = worst.max((lhs + 2.0 * k * u).abs() / (2.0 * k * u));
        }
    }
    Ok(worst)
}

fn central_search() -> Result<f64> {
    let sys = three(0.5)?;
    let h = 3f64.sqrt() / 2.0;
    let seed = Configuration::new(3, 2, vec![0.02, -0.01, 1.0, 0.03, 0.5, h - 0.04])?;
    let c = find_central(&sys, &seed, 1e-11, 500)?;
    let mult = (c.multiplier + c.potential).abs() / c.potential;
    Ok(((c.potential - 3.0).abs() / 3.0).max(c.residual).max(mult))
}

/// Largest Newton and energy residuals of the ejections over six decades.
fn ejection_residuals() -> Result<(f64, f64)> {
    let (mut newton, mut energy) = (0.0f64, 0.0f64);
    for k in KAPPAS {
        for (sys, s) in standard(k)? {
            let ej = make_ejection(&sys, &s)?;
            for e in -3..=3 {
                let t = ej.t_unit * 10f64.powi(e);
                newton = newton.max(ej.newton_residual(&sys, t)?);
                let (kin, pot) = ej.energy(&sys, t)?;
                energy = energy.max((kin - pot).abs() / pot);
            }
        }
    }
    Ok((newton, energy))
}

fn psi_quadrature() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in KAPPAS {
        for (sys, s) in standard(k)? {
            let ej = make_ejection(&sys, &s)?;
            let q = psi_by_quadrature(&sys, &s, 2000)?;
            worst = worst.max((q - ej.psi).abs() / ej.psi);
        }
    }
    Ok(worst)
}

fn fixed_time_bound() -> Result<f64> {
    let sys = three(0.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = ActionOptions {
        estimate_error: false,
        ..ActionOptions::default()
    };
    let mut violations = 0;
    for _ in 0..10 {
        let mut pick = || -> Result<Configuration> {
            let c: Vec<f64> = (0..sys.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            project_cm(&sys, &Configuration::new(3, 2, c)?)
        };
        let (x, y) = (pick()?, pick()?);
        let t = rng.gen_range(0.2..2.0);
        let r = minimize_fixed_time(&sys, &x, &y, t, 32, &opts)?;
        if r.value < lower_bound(&sys, &x, &y, t)? {
            violations += 1;
        }
    }
    Ok(violations as f64)
}

fn phi_homogeneity() -> Result<f64> {
    let sys = two(0.5)?;
    let x = Configuration::from_positions(&[vec![0.5, 0.0], vec![-0.5, 0.0]])?;
    let y = Configuration::from_positions(&[vec![0.0, 0.8], vec![0.0, -0.8]])?;
    let opts = ActionOptions::default();
    let mut worst: f64 = 0.0;
    for l in [0.5, 2.0] {
        worst = worst.max(phi_scaling_check(&sys, &x, &y, 1.0, l, 64, &opts)?);
    }
    Ok(worst)
}

fn minimizing(report: &mut Report) {
    let run = |euler: bool| -> Result<(f64, f64, Verdict)> {
        let sys = three(0.5)?;
        let s = if euler {
            catalog::euler(&sys, 1)?
        } else {
            catalog::lagrange(&sys)?
        };
        let v = is_minimizing(&sys, &s, &ActionOptions::default(), 5.0)?;
        Ok((v.gap / v.error_estimate, v.error_estimate / v.psi, v.verdict))
    };
    let lag = run(false);
    report.push(
        "minimizing-lagrange",
        lag.map(|(ratio, rel, verdict)| {
            let ok = verdict == Verdict::ConsistentMinimizing && ratio.abs() <= 5.0 && rel <= 1e-2;
            (ratio.abs(), ok)
        }),
        "|gap|/error <= 5, consistent-minimizing",
    );
    let eul = run(true);
    report.push(
        "minimizing-euler",
        eul.map(|(ratio, _, verdict)| (ratio, verdict == Verdict::NonMinimizing && ratio > 5.0)),
        "gap/error > 5, non-minimizing",
    );
}

/// Monotonicity and shift equivariance of one Lax-Oleinik step, then the
/// converged iterate against `-psi (sqrt r - sqrt r0)` on the Kepler ray.
fn lax_oleinik(report: &mut Report) {
    let sys = two(0.5).expect("valid system");
    let psi = catalog::kepler(&sys)
        .and_then(|s| make_ejection(&sys, &s))
        .map_or(f64::NAN, |e| e.psi);
    let opts = WeakKamOptions {
        inner_nodes: 32,
        ghost_layers: 64,
        ..WeakKamOptions::default()
    };
    let built = Chart::kepler_ray(&sys, 0.1, 4.0, 40)
        .and_then(|ch| Ok((LaxOleinikOperator::build(&sys, &ch, 0.3, &opts)?, ch)));
    let (op, chart) = match built {
        Ok(b) => b,
        Err(e) => {
            report.push("lax-oleinik-monotone", Err(e), "<= 1e-12");
            return;
        }
    };
    let n = chart.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = u.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
    let s: Vec<f64> = u.iter().map(|v| v + 7.0).collect();
    let step = |x: &[f64]| op.apply(x).map(|o| o.values);
    let mono = step(&u).and_then(|a| {
        let b = step(&w)?;
        Ok(a.iter().zip(&b).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max).max(0.0))
    });
    report.at_most("lax-oleinik-monotone", mono, 1e-12);
    let shift = step(&u).and_then(|a| {
        let b = step(&s)?;
        Ok(a.iter().zip(&b).map(|(a, b)| (a + 7.0 - b).abs()).fold(0.0, f64::max))
    });
    report.at_most("lax-oleinik-shift", shift, 1e-12);
    let it = iterate_with(&op, &GridFunction::constant(&chart, 0.0), 1e-10, 500, &opts);
    let fit = it.map(|it| {
        let r0 = chart.node_params(0)[0];
        let worst = (0..n)
            .map(|i| {
                let r = chart.node_params(i)[0];
                (it.u.values[i] + psi * (r.sqrt() - r0.sqrt())).abs()
            })
            .fold(0.0, f64::max);
        let rising = it.min_increment_history.iter().all(|m| *m >= -1e-12);
        (worst / (psi * 2.0), it.converged && rising)
    });
    report.push(
        "weak-kam-kepler-ray",
        fit.map(|(e, ok)| (e, ok && e <= 2e-2)),
        "relative error <= 2e-2, nondecreasing sweeps",
    );
}

fn kepler_circle() -> Result<f64> {
    let sys = two(0.5)?;
    let psi = make_ejection(&sys, &catalog::kepler(&sys)?)?.psi;
    let chart = SphereChart::reduced_circle(&sys, "kepler", 64)?;
    let sol = solve_hjh(&sys, &chart, &HjhOptions::default())?;
    Ok(sol
        .v
        .values
        .iter()
        .map(|v| (v.abs() / psi - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Collinear solve, then ascent flows of `v = -v_solver` from 24 samples.
fn collinear_flow(report: &mut Report) {
    let run = || -> Result<(f64, f64, bool)> {
        let sys = MassSystem::equal_masses(3, 1, 0.5)?;
        let chart = SphereChart::reduced_circle(&sys, "collinear", 48)?;
        let sol = solve_hjh(
            &sys,
            &chart,
            &HjhOptions {
                t: 0.05,
                ..HjhOptions::default()
            },
        )?;
        let v = SphereFunction::new(chart.clone(), sol.v.values.iter().map(|x| -x).collect())?;
        let field = SampledField::new(v);
        let samples: Vec<Vec<f64>> = (0..24).map(|k| vec![(k as f64 + 0.5) * TAU / 24.0]).collect();
        let flows = crate::parallel::map(&samples, |p| gradient_flow(&field, p, 1, &FlowOptions::default()));
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for f in flows.into_iter().flatten() {
            violations += f.monotone_violations;
            worst = worst.max(f.worst_decrease);
        }
        let map = collision_map(
            &sys,
            &field,
            &samples,
            &CollisionMapOptions {
                cyclic: true,
                ..CollisionMapOptions::default()
            },
        )?;
        let names: Vec<&String> = chart.collisions.iter().map(|c| &c.label).collect();
        let labelled = map
            .labels
            .iter()
            .flatten()
            .all(|l| l == "critical" || names.contains(&l));
        Ok((violations as f64, worst, labelled))
    };
    match run() {
        Ok((v, worst, labelled)) => {
            report.push("flow-monotone", Ok((v, v == 0.0)), "violations = 0");
            report.at_most("flow-worst-decrease", Ok(worst), 1e-10);
            report.push(
                "collision-map-labels",
                Ok((f64::from(u8::from(labelled)), labelled)),
                "every flow ends at a collision or a critical point",
            );
        }
        Err(e) => report.push("flow-monotone", Err(e), "violations = 0"),
    }
}

/// Calibrating curves of the constant and the wave solution on the Kepler circle.
fn kepler_reconstruction(report: &mut Report) {
    let run = |wave: bool| -> Result<(f64, usize)> {
        let sys = two(0.5)?;
        let psi = make_ejection(&sys, &catalog::kepler(&sys)?)?.psi;
        let chart = SphereChart::reduced_circle(&sys, "kepler", 64)?;
        let k = 1.0 - sys.kappa();
        let field = AnalyticField::new(chart, move |p: &[f64]| {
            if wave {
                Some((psi * (k * p[0]).cos(), vec![-psi * k * (k * p[0]).sin()]))
            } else {
                Some((psi, vec![0.0]))
            }
        });
        let r = reconstruct_calibrating(&sys, &field, &[1.0], 1.0, 1.0, &CalibrateOptions::default())?;
        Ok((r.max_newton_residual.max(r.max_energy_residual), r.v_violations))
    };
    for (name, wave) in [("calibrating-parabolic", false), ("calibrating-wave", true)] {
        report.push(
            name,
            run(wave).map(|(res, viol)| (res, res <= 1e-6 && viol == 0)),
            "Newton and energy residuals <= 1e-6, v nondecreasing",
        );
    }
}

/// Runs every check in a fixed order.
pub fn run() -> Report {
    let mut r = Report::default();
    r.at_most("euler-identity", euler_identity(), 1e-10);
    r.at_most("central-search", central_search(), 1e-8);
    let ej = ejection_residuals();
    r.at_most("ejection-newton", ej.as_ref().map(|e| e.0).map_err(clone_err), 1e-8);
    r.at_most("ejection-energy", ej.map(|e| e.1), 1e-10);
    r.at_most("psi-quadrature", psi_quadrature(), 1e-6);
    r.push(
        "fixed-time-lower-bound",
        fixed_time_bound().map(|v| (v, v == 0.0)),
        "violations = 0",
    );
    r.at_most("phi-homogeneity", phi_homogeneity(), 1e-3);
    minimizing(&mut r);
    lax_oleinik(&mut r);
    r.at_most("sphere-hj-kepler", kepler_circle(), 2.5e-2);
    collinear_flow(&mut r);
    kepler_reconstruction(&mut r);
    r
}

fn clone_err(e: &crate::Error) -> crate::Error {
    crate::Error::Validation(e.to_string())
}
