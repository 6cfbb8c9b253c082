use std::f64::consts::{PI, TAU};

use super::*;
use crate::ejection::make_ejection;
use crate::spherehj::{solve_hjh, HjhOptions};
use proptest::prelude::*;

const PSI_KEPLER: f64 = 2.3784142300054421;

fn kepler(kappa: f64) -> (MassSystem, SphereChart) {
    let sys = MassSystem::equal_masses(2, 2, kappa).unwrap();
    let ch = SphereChart::reduced_circle(&sys, "kepler", 64).unwrap();
    (sys, ch)
}

fn line(n: usize) -> (MassSystem, SphereChart) {
    let sys = MassSystem::equal_masses(3, 1, 0.5).unwrap();
    let ch = SphereChart::reduced_circle(&sys, "line", n).unwrap();
    (sys, ch)
}

fn cosine(ch: &SphereChart) -> AnalyticField<impl Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync> {
    AnalyticField::new(ch.clone(), |p: &[f64]| Some((p[0].cos(), vec![-p[0].sin()])))
}

/// Exact HJH solution on the Kepler circle: `psi cos((1-k)(theta - a))`.
fn kepler_wave(
    ch: &SphereChart,
    psi: f64,
    kappa: f64,
    a: f64,
) -> AnalyticField<impl Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync> {
    let w = 1.0 - kappa;
    AnalyticField::new(ch.clone(), move |p: &[f64]| {
        let x = w * (p[0] - a);
        Some((psi * x.cos(), vec![-psi * w * x.sin()]))
    })
}

fn ang(a: f64, b: f64) -> f64 {
    ((a - b + PI).rem_euclid(TAU) - PI).abs()
}

#[test]
fn ode_matches_exponential_both_ways() {
    let o = OdeOptions::default();
    let e = integrate(|_, y| Some(vec![-y[0]]), 0.0, &[1.0], 5.0, &o, |_, _| true);
    assert_eq!(e.status, OdeStatus::Reached);
    assert_eq!(e.t, 5.0);
    assert!((e.y[0] - (-5f64).exp()).abs() < 1e-10);
    let b = integrate(|_, y| Some(vec![-y[0]]), 5.0, &e.y, 0.0, &o, |_, _| true);
    assert!((b.y[0] - 1.0).abs() < 1e-9);
}

#[test]
fn ode_oscillator_keeps_phase() {
    let o = OdeOptions {
        rtol: 1e-12,
        atol: 1e-14,
        ..OdeOptions::default()
    };
    let e = integrate(|_, y| Some(vec![y[1], -y[0]]), 0.0, &[1.0, 0.0], 10.0, &o, |_, _| true);
    assert!((e.y[0] - 10f64.cos()).abs() < 1e-10);
    assert!((e.y[1] + 10f64.sin()).abs() < 1e-10);
}

#[test]
fn ode_reports_undefined_and_observer_stop() {
    let o = OdeOptions::default();
    let e = integrate(
        |_, y| (y[0] < 1.5).then(|| vec![1.0]),
        0.0,
        &[0.0],
        3.0,
        &o,
        |_, _| true,
    );
    assert_eq!(e.status, OdeStatus::Undefined);
    assert!(e.y[0] < 1.5 && e.y[0] > 1.5 - 1e-9);
    let mut seen = 0;
    let s = integrate(|_, _| Some(vec![1.0]), 0.0, &[0.0], 3.0, &o, |_, _| {
        seen += 1;
        false
    });
    assert_eq!(s.status, OdeStatus::Stopped);
    assert_eq!(seen, 1);
    let m = integrate(
        |_, y| Some(vec![y[0]]),
        0.0,
        &[1.0],
        50.0,
        &OdeOptions {
            max_steps: 3,
            ..o
        },
        |_, _| true,
    );
    assert_eq!(m.status, OdeStatus::MaxSteps);
}

#[test]
fn sampled_circle_interpolates_smoothly() {
    let ch = SphereChart::reduced_circle(&MassSystem::equal_masses(2, 2, 0.5).unwrap(), "k", 256).unwrap();
    let f = SampledField::new(SphereFunction::from_fn(&ch, |p| (2.0 * p[0]).sin()));
    for k in 0..97 {
        let x = 0.3 + 0.071 * k as f64;
        let (v, d) = f.eval(&[x]).unwrap();
        assert!((v - (2.0 * x).sin()).abs() < 1e-5);
        assert!((d[0] - 2.0 * (2.0 * x).cos()).abs() < 1e-3);
    }
    // slope is continuous across a node, and periodic
    let h = ch.spacing(0);
    let l = f.eval(&[5.0 * h - 1e-11]).unwrap().1[0];
    let r = f.eval(&[5.0 * h + 1e-11]).unwrap().1[0];
    assert!((l - r).abs() < 1e-6);
    assert!((f.eval(&[0.4]).unwrap().0 - f.eval(&[0.4 + TAU]).unwrap().0).abs() < 1e-13);
}

#[test]
fn sampled_field_is_undefined_next_to_nan() {
    let (_, ch) = line(48);
    let v = SphereFunction::from_fn(&ch, |p| {
        if ch.distance_to_collisions(p) < 1e-9 {
            f64::NAN
        } else {
            1.0
        }
    });
    let f = SampledField::new(v);
    let k = &ch.collisions[0];
    let at = ch.collision_angle(k).unwrap();
    assert!(f.eval(&[at + 0.5 * ch.spacing(0)]).is_none());
    assert!(f.eval(&[at + 3.5 * ch.spacing(0)]).is_some());
}

#[test]
fn sampled_two_sphere_crosses_the_pole() {
    let sys = MassSystem::equal_masses(4, 1, 0.5).unwrap();
    let b = crate::weakkam::reduced_basis(&sys, 3).unwrap();
    let ch = SphereChart::two_sphere(&sys, "s2", [b[0].clone(), b[1].clone(), b[2].clone()], 48, 96).unwrap();
    // a smooth function of the embedding: x + 2 z
    let exact = |p: &[f64]| p[0].sin() * p[1].cos() + 2.0 * p[0].cos();
    let f = SampledField::new(SphereFunction::from_fn(&ch, exact));
    for p in [[0.02, 1.0], [1.3, 4.0], [PI - 0.01, 0.3], [0.7, 6.1]] {
        let (v, _) = f.eval(&p).unwrap();
        assert!((v - exact(&p)).abs() < 2e-4, "{p:?}");
    }
    // the same point written past the pole
    let a = f.eval(&[0.05, 1.0]).unwrap();
    let b = f.eval(&[-0.05, 1.0 + PI]).unwrap();
    assert!((a.0 - b.0).abs() < 1e-12);
    assert!((a.1[0] + b.1[0]).abs() < 1e-9);
    assert!((a.1[1] - b.1[1]).abs() < 1e-9);
}

#[test]
fn cosine_flow_follows_the_exact_solution() {
    let (_, ch) = kepler(0.5);
    let f = cosine(&ch);
    let t = gradient_flow(&f, &[PI / 4.0], 1, &FlowOptions::default()).unwrap();
    assert_eq!(t.event, FlowEvent::ConvergedToCritical);
    assert!(ang(t.terminal_point.as_ref().unwrap()[0], 0.0) < 1e-7);
    assert_eq!(t.monotone_violations, 0);
    // theta' = -sin theta: tan(theta/2) = tan(theta0/2) e^(-tau)
    let c = (PI / 8.0).tan();
    for (tau, p) in t.tau.iter().zip(&t.points) {
        let exact = 2.0 * (c * (-tau).exp()).atan();
        assert!(ang(p[0], exact) < 1e-8, "{tau} {} {exact}", p[0]);
    }
    let back = gradient_flow(&f, &[PI / 4.0], -1, &FlowOptions::default()).unwrap();
    assert_eq!(back.event, FlowEvent::ConvergedToCritical);
    assert!(ang(back.terminal_point.unwrap()[0], PI) < 1e-7);
    assert!(back.values.windows(2).all(|w| w[1] <= w[0] + 1e-10));
}

#[test]
fn constant_field_is_stationary() {
    let (_, ch) = kepler(0.5);
    let f = AnalyticField::new(ch.clone(), |_: &[f64]| Some((PSI_KEPLER, vec![0.0])));
    let t = gradient_flow(&f, &[1.0], 1, &FlowOptions::default()).unwrap();
    assert_eq!(t.event, FlowEvent::ConvergedToCritical);
    assert_eq!(t.points, vec![vec![1.0]]);
    assert!(gradient_flow(&f, &[1.0], 0, &FlowOptions::default()).is_err());
}

#[test]
fn sampled_flow_is_monotone_over_many_steps() {
    let (_, ch) = kepler(0.5);
    let f = SampledField::new(SphereFunction::from_fn(&ch, |p| (3.0 * p[0]).cos() + 0.3 * p[0].sin()));
    let opts = FlowOptions {
        ode: OdeOptions {
            h_max: 1e-3,
            ..OdeOptions::default()
        },
        tau_max: 1.0,
        ..FlowOptions::default()
    };
    let t = gradient_flow(&f, &[0.4], 1, &opts).unwrap();
    assert!(t.steps >= 1000);
    assert_eq!(t.event, FlowEvent::StepLimit);
    assert_eq!(t.monotone_violations, 0);
    assert!(t.values.windows(2).all(|w| w[1] - w[0] >= -1e-10));
}

#[test]
fn ascent_reaches_the_collision_margin() {
    // -cos(3 (theta - e)) has its minimum on the Euler point and rises toward
    // the two neighbouring collisions
    let (_, ch) = line(48);
    let c = ch.collision_angle(&ch.collisions[0]).unwrap();
    let e = c + PI / 6.0;
    let f = AnalyticField::new(ch.clone(), move |p: &[f64]| {
        let x = 3.0 * (p[0] - e);
        Some((-x.cos(), vec![3.0 * x.sin()]))
    });
    let t = gradient_flow(&f, &[e + 0.2], 1, &FlowOptions::default()).unwrap();
    assert_eq!(t.event, FlowEvent::ReachedCollisionMargin);
    let label = t.terminal_component.unwrap();
    let comp = ch.collisions.iter().find(|k| k.label == label).unwrap();
    assert!(ang(ch.collision_angle(comp).unwrap(), e + PI / 6.0) < 1e-9);
    let m0 = crate::space::min_mutual_distance(&ch.config(&[e + 0.2]));
    let m1 = crate::space::min_mutual_distance(&ch.config(t.points.last().unwrap()));
    assert!(m1 < 0.02 * m0);
}

#[test]
fn zero_set_of_cosine() {
    let (sys, ch) = kepler(0.5);
    let v = SphereFunction::from_fn(&ch, |p| p[0].cos());
    let z = zero_set(&sys, &v, 0.05);
    assert!(!z.degenerate);
    let mut at: Vec<f64> = z.points.iter().map(|p| p.params[0]).collect();
    at.sort_by(f64::total_cmp);
    assert_eq!(at.len(), 2);
    assert!(at[0].abs() < 1e-12 && (at[1] - PI).abs() < 1e-12);
}

#[test]
fn zero_set_refines_off_node_extrema() {
    let (sys, ch) = kepler(0.5);
    let h = ch.spacing(0);
    let x0 = 10.3 * h;
    let v = SphereFunction::from_fn(&ch, |p| -(p[0] - x0).powi(2));
    let z = zero_set(&sys, &v, 0.7 * h);
    assert_eq!(z.points.len(), 1);
    assert!((z.points[0].params[0] - x0).abs() < 1e-12);
    assert!(z.points[0].value.abs() < 1e-12);
}

#[test]
fn zero_set_flags_constant_kepler() {
    let (sys, ch) = kepler(0.5);
    let v = SphereFunction::from_fn(&ch, |_| PSI_KEPLER);
    let z = zero_set(&sys, &v, 1e-12);
    assert!(z.degenerate);
    assert_eq!(z.points.len(), ch.n_nodes());
    assert!(z.points.iter().all(|p| p.discrepancy < 1e-12));
}

/// The collinear solver output and its Euler critical points.
fn collinear() -> &'static (MassSystem, SphereFunction) {
    static S: std::sync::OnceLock<(MassSystem, SphereFunction)> = std::sync::OnceLock::new();
    S.get_or_init(|| {
        let (sys, ch) = line(48);
        let opts = HjhOptions {
            t: 0.05,
            ..HjhOptions::default()
        };
        let v = solve_hjh(&sys, &ch, &opts).unwrap().v;
        (sys, v)
    })
}

#[test]
fn zero_set_of_collinear_solution_sits_on_euler() {
    let (sys, v) = collinear();
    let z = zero_set(sys, v, 1e-6);
    let ch = &v.chart;
    assert!(!z.points.is_empty());
    for p in &z.points {
        // symmetric nodes halfway between collisions
        assert!((ch.distance_to_collisions(&p.params) - PI / 6.0).abs() < 1e-9);
        // |v| = psi up to the discretization slack of this chart
        assert!(p.discrepancy <= 0.05 * p.psi, "{} {}", p.value, p.psi);
    }
}

#[test]
fn collision_map_on_a_synthetic_arc() {
    let (sys, ch) = line(48);
    let c = ch.collision_angle(&ch.collisions[0]).unwrap();
    let e = c + PI / 6.0;
    let f = AnalyticField::new(ch.clone(), move |p: &[f64]| {
        let x = 3.0 * (p[0] - e);
        Some((-x.cos(), vec![3.0 * x.sin()]))
    });
    // samples strictly inside one arc between neighbouring collisions
    let samples: Vec<Vec<f64>> = (1..20).map(|k| vec![c + PI / 3.0 * k as f64 / 20.0]).collect();
    let rep = collision_map(&sys, &f, &samples, &CollisionMapOptions::default()).unwrap();
    assert!(!rep.hypotheses_hold);
    let labels: Vec<&str> = rep.labels.iter().flatten().map(|s| s.as_str()).collect();
    // the Euler sample sits on the critical set and is excluded
    assert_eq!(rep.excluded.len(), 1);
    assert_eq!(rep.excluded[0].sample, 9);
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    assert_eq!(distinct.len(), 2);
    assert_eq!(rep.hits.iter().filter(|h| h.1 > 0).count(), 2);
    assert!(!rep.all_hit);
    // the excluded Euler sample separates the basins; nothing else does
    assert_eq!(rep.boundaries.len(), 1);
    // bisection stops at once: the midpoint is the critical point itself
    let b = &rep.boundaries[0];
    assert_eq!(b.samples, (8, 10));
    assert!((b.gap - PI / 30.0).abs() < 1e-12);
    assert!(ang(0.5 * (b.straddle.0[0] + b.straddle.1[0]), e) < 1e-12);
}

#[test]
fn collision_map_bisects_toward_the_separatrix() {
    let (sys, ch) = line(48);
    let c = ch.collision_angle(&ch.collisions[0]).unwrap();
    let e = c + PI / 6.0 + 0.01;
    let f = AnalyticField::new(ch.clone(), move |p: &[f64]| {
        let x = 3.0 * (p[0] - e);
        Some((-x.cos(), vec![3.0 * x.sin()]))
    });
    let samples: Vec<Vec<f64>> = (0..20).map(|k| vec![c + PI / 3.0 * (k as f64 + 0.5) / 20.0]).collect();
    let rep = collision_map(&sys, &f, &samples, &CollisionMapOptions::default()).unwrap();
    assert!(rep.excluded.is_empty());
    assert_eq!(rep.boundaries.len(), 1);
    let b = &rep.boundaries[0];
    assert!(b.gap <= PI / 60.0 / 2f64.powi(12) * 1.0001);
    assert!(ang(b.straddle.0[0], e) <= b.gap && ang(b.straddle.1[0], e) <= b.gap);
}

#[test]
fn collision_map_empty_and_collinear_solution() {
    let (sys, v) = collinear();
    let f = SampledField::new(SphereFunction::new(v.chart.clone(), v.values.iter().map(|x| -x).collect()).unwrap());
    let rep = collision_map(sys, &f, &[], &CollisionMapOptions::default()).unwrap();
    assert!(rep.labels.is_empty() && rep.boundaries.is_empty());
    let ch = &v.chart;
    let samples: Vec<Vec<f64>> = (0..60).map(|k| vec![TAU * (k as f64 + 0.25) / 60.0]).collect();
    let rep = collision_map(sys, &f, &samples, &CollisionMapOptions { cyclic: true, ..Default::default() }).unwrap();
    let names: Vec<&str> = ch.collisions.iter().map(|k| k.label.as_str()).collect();
    for l in rep.labels.iter().flatten() {
        assert!(l == "critical" || names.contains(&l.as_str()), "{l}");
    }
}

#[test]
fn kepler_constant_reconstruction_is_the_parabolic_ejection() {
    for kappa in [0.25, 0.5] {
        let (sys, ch) = kepler(kappa);
        let s = ch.config(&[0.7]);
        let ej = make_ejection(&sys, &s).unwrap();
        let psi = ej.psi;
        let f = AnalyticField::new(ch.clone(), move |_: &[f64]| Some((psi, vec![0.0])));
        let t0 = 0.5;
        let rho0 = ej.radius(t0);
        let rec = reconstruct_calibrating(&sys, &f, &[0.7], rho0, 3.0, &CalibrateOptions::default()).unwrap();
        assert_eq!(rec.event, CalibrateEvent::Completed);
        assert_eq!(rec.times.len(), 101);
        for (t, r) in rec.times.iter().zip(&rec.rho) {
            let exact = ej.radius(t0 + t);
            assert!((r - exact).abs() <= 1e-10 * exact, "{kappa} {t} {r} {exact}");
        }
        assert!(rec.max_newton_residual <= 1e-6, "{}", rec.max_newton_residual);
        assert!(rec.max_energy_residual <= 1e-6);
        assert!(rec.max_angular_speed <= 1e-10);
        assert!(rec.sigma.iter().all(|p| p[0] == 0.7));
        assert_eq!(rec.v_violations, 0);
    }
}

#[test]
fn kepler_wave_reconstruction_solves_newton() {
    let (sys, ch) = kepler(0.5);
    let f = kepler_wave(&ch, PSI_KEPLER, 0.5, 0.0);
    let rec = reconstruct_calibrating(&sys, &f, &[1.0], 1.0, 2.0, &CalibrateOptions::default()).unwrap();
    assert_eq!(rec.event, CalibrateEvent::Completed);
    assert!(rec.max_newton_residual <= 1e-6, "{}", rec.max_newton_residual);
    assert!(rec.max_energy_residual <= 1e-6, "{}", rec.max_energy_residual);
    // v grows strictly along a non-homothetic calibrating curve
    assert!(rec.v.windows(2).all(|w| w[1] > w[0]));
    assert!(rec.max_angular_speed > 1e-3);
    assert!(rec.rho.windows(2).all(|w| w[1] > w[0]));
    assert!(rec.tau.windows(2).all(|w| w[1] > w[0]));
    assert!(rec.hypotheses_hold);
}

#[test]
fn newton_residual_detects_a_wrong_field() {
    // psi cos(theta) has the wrong frequency and does not solve the equation
    let (sys, ch) = kepler(0.5);
    let f = AnalyticField::new(ch.clone(), |p: &[f64]| Some((PSI_KEPLER * p[0].cos(), vec![-PSI_KEPLER * p[0].sin()])));
    let rec = reconstruct_calibrating(&sys, &f, &[1.0], 1.0, 2.0, &CalibrateOptions::default()).unwrap();
    assert!(rec.max_newton_residual > 1e-2);
    assert!(rec.max_energy_residual > 1e-2);
}

#[test]
fn collapsing_reconstruction_stops_at_total_collision() {
    let (sys, ch) = kepler(0.5);
    let f = AnalyticField::new(ch.clone(), |_: &[f64]| Some((-PSI_KEPLER, vec![0.0])));
    // rho^(3/2) falls at rate (1 - k^2) psi, reaching 0 before t = 1
    let rec = reconstruct_calibrating(&sys, &f, &[0.3], 1.0, 2.0, &CalibrateOptions::default()).unwrap();
    assert_eq!(rec.event, CalibrateEvent::TotalCollision);
    assert!(rec.rho.windows(2).all(|w| w[1] < w[0]));
    let t_hit = 1.0 / (0.75 * PSI_KEPLER);
    assert!(*rec.times.last().unwrap() < t_hit);
    assert!(reconstruct_calibrating(&sys, &f, &[0.3], 0.0, 2.0, &CalibrateOptions::default()).is_err());
}

#[test]
fn reconstruction_csv_has_one_row_per_time() {
    let (sys, ch) = kepler(0.5);
    let f = kepler_wave(&ch, PSI_KEPLER, 0.5, 0.0);
    let opts = CalibrateOptions {
        samples: 11,
        ..CalibrateOptions::default()
    };
    let rec = reconstruct_calibrating(&sys, &f, &[1.0], 1.0, 1.0, &opts).unwrap();
    let mut buf = Vec::new();
    write_reconstruction_csv(&rec, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.starts_with("t,rho,tau,p0,v,newton_residual,energy_residual\n"));
    let t = gradient_flow(&f, &[1.0], 1, &FlowOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&t, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), t.tau.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_flow_increments_nonnegative(a in 0.0f64..TAU, b in 0.1f64..1.0, s0 in 0.0f64..TAU) {
        let (_, ch) = kepler(0.5);
        let f = AnalyticField::new(ch.clone(), move |p: &[f64]| {
            Some(((2.0 * (p[0] - a)).cos() + b * p[0].sin(), vec![-2.0 * (2.0 * (p[0] - a)).sin() + b * p[0].cos()]))
        });
        let t = gradient_flow(&f, &[s0], 1, &FlowOptions { tau_max: 20.0, ..FlowOptions::default() }).unwrap();
        prop_assert_eq!(t.monotone_violations, 0);
    }

    #[test]
    fn prop_rho_dot_has_the_sign_of_v(a in -PI..PI, s0 in 0.0f64..TAU) {
        let (sys, ch) = kepler(0.5);
        let f = kepler_wave(&ch, PSI_KEPLER, 0.5, a);
        let opts = CalibrateOptions { samples: 5, ..CalibrateOptions::default() };
        let rec = reconstruct_calibrating(&sys, &f, &[s0], 1.0, 0.2, &opts).unwrap();
        for w in 0..rec.rho.len().saturating_sub(1) {
            // v keeps its sign over this short span unless it crosses zero
            if rec.v[w] > 1e-3 && rec.v[w + 1] > 1e-3 {
                prop_assert!(rec.rho[w + 1] > rec.rho[w]);
            }
            if rec.v[w] < -1e-3 && rec.v[w + 1] < -1e-3 {
                prop_assert!(rec.rho[w + 1] < rec.rho[w]);
            }
        }
        prop_assert!(rec.v.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    }
}
