use super::*;
use crate::catalog;
use crate::ejection::make_ejection;
use crate::mesh::graded_times;

fn kepler(kappa: f64) -> (MassSystem, Configuration) {
    let sys = MassSystem::equal_masses(2, 2, kappa).unwrap();
    let s = catalog::kepler(&sys).unwrap();
    (sys, s)
}

fn planar_pair(sys: &MassSystem, a: [f64; 2], b: [f64; 2]) -> (Configuration, Configuration) {
    // relative vectors a and b for two equal masses
    let x =
        Configuration::new(2, 2, vec![a[0] / 2.0, a[1] / 2.0, -a[0] / 2.0, -a[1] / 2.0]).unwrap();
    let y =
        Configuration::new(2, 2, vec![b[0] / 2.0, b[1] / 2.0, -b[0] / 2.0, -b[1] / 2.0]).unwrap();
    let _ = sys;
    (x, y)
}

#[test]
fn constant_path_action() {
    let (sys, s) = kepler(0.5);
    let p = Path::new(vec![0.0, 0.3, 1.0], vec![s.clone(), s.clone(), s.clone()]).unwrap();
    let u = potential(&sys, &s);
    assert!((action(&sys, &p) - u).abs() < 1e-15);
    assert_eq!(p.action(&sys), action(&sys, &p));
}

#[test]
fn free_particle_segment() {
    let sys = MassSystem::equal_masses(2, 2, 0.5)
        .unwrap()
        .without_potential();
    let (x, y) = planar_pair(&sys, [1.0, 0.0], [0.0, 2.0]);
    let d = mass_distance(&sys, &x, &y).unwrap();
    let times = graded_times(0.0, 2.0, 10, Grading::Uniform);
    let nodes: Vec<_> = times.iter().map(|t| x.axpy(t / 2.0, &y.sub(&x))).collect();
    let p = Path::new(times, nodes).unwrap();
    assert!((action(&sys, &p) - 0.25 * d * d).abs() < 1e-14);
    let r = minimize_fixed_time(&sys, &x, &y, 2.0, 16, &ActionOptions::default()).unwrap();
    assert!((r.value - 0.25 * d * d).abs() < 1e-12);
}

#[test]
fn sampled_ejection_action_matches_psi() {
    for kappa in [0.25, 0.5, 0.75] {
        let (sys, s) = kepler(kappa);
        let ej = make_ejection(&sys, &s).unwrap();
        let times = graded_times(0.0, ej.t_unit, 1999, Grading::Start(action_grading(kappa)));
        let nodes: Vec<_> = times.iter().map(|t| s.scaled(ej.radius(*t))).collect();
        let p = Path::new(times, nodes).unwrap();
        let a = action(&sys, &p);
        assert!(
            (a - ej.psi).abs() < 1e-4 * ej.psi,
            "kappa {kappa}: {a} vs {}",
            ej.psi
        );
    }
}

#[test]
fn kepler_fixed_time_ejection() {
    let (sys, s) = kepler(0.5);
    let ej = make_ejection(&sys, &s).unwrap();
    let zero = Configuration::zeros_like(&sys);
    let mut o = ActionOptions::default();
    o.estimate_error = false;
    let r = minimize_fixed_time(&sys, &s, &zero, ej.t_unit, 512, &o).unwrap();
    assert!(r.converged);
    assert!(
        (r.value - ej.psi).abs() < 2e-3 * ej.psi,
        "{} vs {}",
        r.value,
        ej.psi
    );
    assert!(r.value >= lower_bound(&sys, &s, &zero, ej.t_unit).unwrap());
}

#[test]
fn equal_endpoints_bounded_by_constant_path() {
    let (sys, s) = kepler(0.5);
    let t = 0.05;
    let r = minimize_fixed_time(&sys, &s, &s, t, 16, &ActionOptions::default()).unwrap();
    assert!(r.value <= t * potential(&sys, &s) + 1e-12);
    assert!(r.value >= 0.0);
}

#[test]
fn free_time_zero_when_equal() {
    let (sys, s) = kepler(0.5);
    let r = minimize_free_time(&sys, &s, &s, &ActionOptions::default()).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn kepler_free_time_matches_psi() {
    let (sys, s) = kepler(0.5);
    let zero = Configuration::zeros_like(&sys);
    let r = minimize_free_time(&sys, &s, &zero, &ActionOptions::default()).unwrap();
    assert!(r.converged);
    assert!((r.value - 2.3784142).abs() < 1e-2, "{}", r.value);
    assert!(r.error_estimate < 1e-2);
    let t = r.optimal_time.unwrap();
    let tu = make_ejection(&sys, &s).unwrap().t_unit;
    assert!((t - tu).abs() < 2e-2 * tu, "t {t} vs {tu}");
}

#[test]
fn free_time_homogeneity() {
    let (sys, _) = kepler(0.5);
    let (x, y) = planar_pair(&sys, [1.0, 0.2], [0.4, 1.3]);
    let o = ActionOptions::default();
    let a = minimize_free_time(&sys, &x, &y, &o).unwrap();
    let b = minimize_free_time(&sys, &x.scaled(2.0), &y.scaled(2.0), &o).unwrap();
    let rel = (b.value - 2f64.sqrt() * a.value).abs() / b.value;
    assert!(rel < 1e-3, "rel {rel}");
}

#[test]
fn scaling_checks() {
    let (sys, _) = kepler(0.5);
    let (x, y) = planar_pair(&sys, [1.0, 0.0], [0.3, 0.9]);
    let o = ActionOptions::default();
    assert_eq!(
        phi_scaling_check(&sys, &x, &y, 0.7, 1.0, 32, &o).unwrap(),
        0.0
    );
    for lam in [0.5, 2.0] {
        let d = phi_scaling_check(&sys, &x, &y, 0.7, lam, 32, &o).unwrap();
        assert!(d < 1e-3, "lambda {lam}: {d}");
    }
}

#[test]
fn transported_path_identity() {
    let (sys, s) = kepler(0.5);
    let ej = make_ejection(&sys, &s).unwrap();
    let zero = Configuration::zeros_like(&sys);
    let p = initial_path(&sys, &s, &zero, ej.t_unit, 40, 1e-2).unwrap();
    for lam in [0.5, 3.0] {
        let q = transport_path(&p, lam, 0.5);
        let lhs = action(&sys, &q);
        let rhs = lam.powf(0.5) * action(&sys, &p);
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }
}

#[test]
fn holder_slopes() {
    for (kappa, expect) in [(0.5, 0.5), (0.25, 0.75)] {
        let (sys, s) = kepler(kappa);
        let zero = Configuration::zeros_like(&sys);
        let fit = holder_fit(
            &sys,
            &zero,
            &[0.5, 1.0, 2.0, 4.0],
            &s,
            &ActionOptions::default(),
        )
        .unwrap();
        assert!(
            (fit.slope - expect).abs() < 1e-3,
            "kappa {kappa}: {}",
            fit.slope
        );
    }
    let (sys, s) = kepler(0.5);
    let zero = Configuration::zeros_like(&sys);
    assert!(matches!(
        holder_fit(&sys, &zero, &[1.0], &s, &ActionOptions::default()),
        Err(Error::Argument(_))
    ));
}

#[test]
fn relabeling_and_rotation_invariance() {
    let sys = MassSystem::new(vec![1.0, 2.0, 0.5], 2, 0.5).unwrap();
    let raw_x = Configuration::new(3, 2, vec![0.0, 0.0, 1.0, 0.1, -0.3, 0.9]).unwrap();
    let raw_y = Configuration::new(3, 2, vec![0.2, -0.1, 0.8, 0.5, -0.6, 0.4]).unwrap();
    let x = project_cm(&sys, &raw_x).unwrap();
    let y = project_cm(&sys, &raw_y).unwrap();
    let mut o = ActionOptions::default();
    o.estimate_error = false;
    let base = minimize_fixed_time(&sys, &x, &y, 0.6, 24, &o).unwrap();
    let perm = [2, 0, 1];
    let psys = MassSystem::new(perm.iter().map(|&p| sys.masses()[p]).collect(), 2, 0.5).unwrap();
    let pr =
        minimize_fixed_time(&psys, &x.permuted(&perm), &y.permuted(&perm), 0.6, 24, &o).unwrap();
    assert!((pr.value - base.value).abs() < 1e-10 * base.value);
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let rot = [c, -s, s, c];
    let rr =
        minimize_fixed_time(&sys, &x.map_bodies(&rot), &y.map_bodies(&rot), 0.6, 24, &o).unwrap();
    assert!((rr.value - base.value).abs() < 1e-10 * base.value);
    // translation of the time axis leaves the mesh increments unchanged
    let shifted = base.path.shifted(5.0);
    assert!((action(&sys, &shifted) - base.value).abs() < 1e-12 * base.value);
}

#[test]
fn refinement_does_not_raise_value_much() {
    let (sys, _) = kepler(0.5);
    let (x, y) = planar_pair(&sys, [1.0, 0.0], [-0.2, 0.8]);
    let r = minimize_fixed_time(&sys, &x, &y, 0.8, 32, &ActionOptions::default()).unwrap();
    assert!(r.value <= r.coarse_value + r.error_estimate.max(1e-12));
}

#[test]
fn lower_bound_random_solves() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let sys = MassSystem::equal_masses(3, 2, 0.5).unwrap();
    let mut o = ActionOptions::default();
    o.estimate_error = false;
    for _ in 0..10 {
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            project_cm(&sys, &Configuration::new(3, 2, c).unwrap()).unwrap()
        };
        let x = mk(&mut rng);
        let y = mk(&mut rng);
        let t = rng.gen_range(0.1..2.0);
        let r = minimize_fixed_time(&sys, &x, &y, t, 16, &o).unwrap();
        assert!(r.value >= lower_bound(&sys, &x, &y, t).unwrap());
    }
}
