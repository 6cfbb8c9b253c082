use super::*;
use crate::space::{min_mutual_distance, moment_of_inertia};
use proptest::prelude::*;

const PSI_KEPLER: f64 = 2.3784142300054421;

fn kepler_sys() -> MassSystem {
    MassSystem::equal_masses(2, 2, 0.5).unwrap()
}

fn line_sys() -> MassSystem {
    MassSystem::equal_masses(3, 1, 0.5).unwrap()
}

fn kepler_circle(n: usize) -> SphereChart {
    SphereChart::reduced_circle(&kepler_sys(), "kepler", n).unwrap()
}

fn line_circle(n: usize) -> SphereChart {
    SphereChart::reduced_circle(&line_sys(), "line", n).unwrap()
}

fn psi_at(sys: &MassSystem, ch: &SphereChart, theta: f64) -> f64 {
    (2.0 * potential(sys, &ch.config(&[theta]))).sqrt() / (1.0 - sys.kappa())
}

#[test]
fn chart_images_are_normal_configurations() {
    let sys = line_sys();
    let ch = line_circle(50);
    for i in 0..ch.n_nodes() {
        let c = ch.node_config(i);
        assert!((moment_of_inertia(&sys, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(crate::space::is_reduced(&sys, &c).unwrap());
    }
}

#[test]
fn collinear_collision_points() {
    let sys = line_sys();
    let ch = line_circle(48);
    assert_eq!(ch.collisions.len(), 6);
    let mut angles: Vec<f64> = ch.collisions.iter().map(|c| ch.collision_angle(c).unwrap()).collect();
    angles.sort_by(f64::total_cmp);
    for (k, a) in angles.iter().enumerate() {
        // equal masses: consecutive collisions are a sixth of a turn apart
        assert!((a - angles[0] - k as f64 * std::f64::consts::PI / 3.0).abs() < 1e-9);
        assert!(min_mutual_distance(&ch.config(&[*a])) < 1e-12);
        assert!(potential(&sys, &ch.config(&[a + 0.1])).is_finite());
    }
    assert!(ch.distance_to_collisions(&[angles[0] + 0.2]) - 0.2 < 1e-12);
}

#[test]
fn kepler_circle_has_no_collisions() {
    let ch = kepler_circle(32);
    assert!(ch.collisions.is_empty());
    assert_eq!(ch.distance_to_collisions(&[1.0]), f64::INFINITY);
}

#[test]
fn four_bodies_on_a_line_collide_along_great_circles() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0, 4.0], 1, 0.5).unwrap();
    let b = crate::weakkam::reduced_basis(&sys, 3).unwrap();
    let ch = SphereChart::two_sphere(&sys, "line4", [b[0].clone(), b[1].clone(), b[2].clone()], 12, 24).unwrap();
    assert_eq!(ch.collisions.len(), 6);
    for c in &ch.collisions {
        let CollisionGeometry::GreatCircle { normal } = &c.geometry else {
            panic!("expected a great circle");
        };
        // a unit vector orthogonal to the normal is a collision of the labelled pair
        let mut w = vec![normal[1], -normal[0], 0.0];
        if w.iter().map(|x| x * x).sum::<f64>() < 1e-20 {
            w = vec![0.0, normal[2], -normal[1]];
        }
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let x = ch.combine(&w.iter().map(|x| x / nw).collect::<Vec<_>>());
        let (i, j) = c.pair;
        assert!((x.body(i)[0] - x.body(j)[0]).abs() < 1e-12);
    }
}

#[test]
fn two_sphere_metric_and_neighbours() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0, 4.0], 1, 0.5).unwrap();
    let b = crate::weakkam::reduced_basis(&sys, 3).unwrap();
    let ch = SphereChart::two_sphere(&sys, "line4", [b[0].clone(), b[1].clone(), b[2].clone()], 10, 20).unwrap();
    assert_eq!(ch.n_nodes(), 200);
    assert!(ch.neighbours(&[0, 3], 0).is_none());
    assert_eq!(ch.neighbours(&[4, 0], 1), Some((ch.index(&[4, 19]), ch.index(&[4, 1]))));
    let p = ch.node_params(ch.index(&[4, 7]));
    let w = ch.inverse_metric(&p);
    assert!((w[1] * p[0].sin().powi(2) - 1.0).abs() < 1e-14);
    let c = ch.config(&p);
    assert!((moment_of_inertia(&sys, &c).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn sphere_chart_rejects_bad_bases() {
    let sys = kepler_sys();
    let b = crate::weakkam::reduced_basis(&sys, 2).unwrap();
    assert!(SphereChart::circle(&sys, "x", b[0].clone(), b[0].clone(), 16).is_err());
    assert!(SphereChart::circle(&sys, "x", b[0].scaled(2.0), b[1].clone(), 16).is_err());
    assert!(SphereChart::circle(&sys, "x", b[0].clone(), b[1].clone(), 2).is_err());
}

#[test]
fn constant_psi_solves_kepler_exactly() {
    let sys = kepler_sys();
    let ch = kepler_circle(64);
    let v = SphereFunction::from_fn(&ch, |_| PSI_KEPLER);
    for i in 0..ch.n_nodes() {
        assert!(hjh_residual(&sys, &v, i).unwrap().abs() < 1e-10);
        assert!(hjh_residual_psi(&sys, &v, i).unwrap().abs() < 1e-10);
    }
}

#[test]
fn zero_function_residual_is_minus_two_u() {
    let sys = line_sys();
    let ch = line_circle(40);
    let v = SphereFunction::from_fn(&ch, |_| 0.0);
    for i in 0..ch.n_nodes() {
        let p = ch.node_params(i);
        if ch.distance_to_collisions(&p) < 1e-9 {
            continue;
        }
        let u = potential(&sys, &ch.config(&p));
        assert!((hjh_residual(&sys, &v, i).unwrap() + 2.0 * u).abs() < 1e-12 * u);
    }
}

#[test]
fn psi_profile_residual_is_its_squared_gradient() {
    let sys = line_sys();
    let ch = line_circle(60);
    let psi = psi_on(&sys, &ch);
    let v = SphereFunction::new(ch.clone(), psi).unwrap();
    let h = std::f64::consts::TAU / 60.0;
    let mut positive = 0;
    for i in 0..ch.n_nodes() {
        let th = ch.node_params(i)[0];
        if ch.distance_to_collisions(&[th]) < 2.0 * h {
            continue;
        }
        // central difference of psi evaluated directly at the neighbouring angles
        let d = (psi_at(&sys, &ch, th + h) - psi_at(&sys, &ch, th - h)) / (2.0 * h);
        let r = hjh_residual(&sys, &v, i).unwrap();
        assert!((r - d * d).abs() < 1e-9 * (1.0 + d * d), "{r} vs {}", d * d);
        if d.abs() > 1e-6 {
            positive += 1;
            assert!(r > 0.0);
        }
    }
    assert!(positive > 10);
}

#[test]
fn residual_forms_agree() {
    let sys = line_sys();
    let ch = line_circle(36);
    let v = SphereFunction::from_fn(&ch, |p| (3.0 * p[0]).sin() - 2.0);
    let k = sys.kappa();
    for i in 0..ch.n_nodes() {
        match (hjh_residual(&sys, &v, i), hjh_residual_psi(&sys, &v, i)) {
            (Ok(a), Ok(b)) => assert!((a / (1.0 - k).powi(2) - b).abs() < 1e-12 * (1.0 + b.abs())),
            (Err(_), Err(_)) => {}
            _ => panic!("forms disagree on the domain"),
        }
    }
}

#[test]
fn residual_at_collision_is_domain_error() {
    let sys = line_sys();
    let ch = line_circle(48);
    let v = SphereFunction::from_fn(&ch, |_| 0.0);
    let at = (0..48).find(|&i| ch.distance_to_collisions(&ch.node_params(i)) < 1e-12).unwrap();
    assert!(matches!(hjh_residual(&sys, &v, at), Err(Error::Domain(_))));
    assert!(matches!(hjh_residual(&sys, &v, 48), Err(Error::Argument(_))));
}

#[test]
fn extension_scales_by_homogeneity() {
    let sys = kepler_sys();
    let ch = kepler_circle(24);
    let v = SphereFunction::from_fn(&ch, |p| p[0].cos() + 0.3);
    let u = extend_homogeneous(&sys, &v, 4, 4.0).unwrap();
    let cone = &u.chart;
    let j = (0..cone.axes[0].n).find(|&j| (cone.axes[0].node(j) - 4.0).abs() < 1e-12).unwrap();
    for a in 0..24 {
        assert!((u.values[cone.index(&[j, a])] - 2.0 * v.values[a]).abs() < 1e-15);
    }
    let back = restrict_homogeneous(&u).unwrap();
    assert_eq!(back.values, v.values);
}

#[test]
fn restriction_needs_the_unit_slice() {
    let sys = kepler_sys();
    let ch = kepler_circle(16);
    let cone = Chart::cone(&sys, "c", &ch.basis[0], &ch.basis[1], 16, 3, 0.6).unwrap();
    let u = GridFunction::constant(&cone, 1.0);
    assert!(matches!(restrict_homogeneous(&u), Err(Error::Range(_))));
    let ray = Chart::kepler_ray(&sys, 0.5, 2.0, 4).unwrap();
    assert!(restrict_homogeneous(&GridFunction::constant(&ray, 1.0)).is_err());
}

#[test]
fn viscosity_smooth_constant_solution_passes() {
    let sys = kepler_sys();
    let ch = kepler_circle(64);
    let v = SphereFunction::from_fn(&ch, |_| -PSI_KEPLER);
    for i in [0, 17, 40] {
        let r = viscosity_test(&sys, &v, i, &[0.0, 1.0, 4.0], 1e-9).unwrap();
        assert!(r.sub_pass && r.super_pass);
        assert!(r.sub_margin.unwrap().abs() < 5e-2);
    }
}

#[test]
fn viscosity_zero_function_fails_supersolution() {
    let sys = kepler_sys();
    let ch = kepler_circle(64);
    let v = SphereFunction::from_fn(&ch, |_| 0.0);
    let r = viscosity_test(&sys, &v, 5, &[0.0, 1.0, 4.0], 1e-6).unwrap();
    assert!(!r.super_pass);
    assert!(r.super_margin.unwrap() < -1.0);
    assert!(r.sub_pass);
}

#[test]
fn viscosity_concave_kink() {
    // min of the two lifts of -psi cos((1-k)(theta - a)) has a concave kink at a + pi
    let sys = kepler_sys();
    let n = 64;
    let ch = kepler_circle(n);
    let a = 0.3;
    let f = |th: f64| -PSI_KEPLER * (0.5 * (th - a)).cos();
    let v = SphereFunction::from_fn(&ch, |p| f(p[0]).min(-f(p[0])));
    let kink = (0..n)
        .min_by(|&i, &j| {
            let d = |k: usize| (ch.node_params(k)[0] - a - std::f64::consts::PI).abs();
            d(i).total_cmp(&d(j))
        })
        .unwrap();
    let r = viscosity_test(&sys, &v, kink, &[0.0, 1.0, 4.0], 1e-9).unwrap();
    assert!(r.sub_pass);
    assert!(r.super_margin.is_none() || r.super_pass);
    // away from the kink both sides hold
    let r = viscosity_test(&sys, &v, (kink + n / 2) % n, &[0.0, 1.0, 4.0], 1e-9).unwrap();
    assert!(r.sub_pass && r.super_pass);
}

#[test]
fn convex_kink_fails_supersolution() {
    let sys = kepler_sys();
    let n = 64;
    let ch = kepler_circle(n);
    let v = SphereFunction::from_fn(&ch, |p| PSI_KEPLER * (0.5 * p[0]).cos().abs());
    let r = viscosity_test(&sys, &v, n / 2, &[0.0, 1.0, 4.0], 1e-9).unwrap();
    assert!(!r.super_pass);
}

#[test]
fn solve_hjh_rejects_two_spheres() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0, 4.0], 1, 0.5).unwrap();
    let b = crate::weakkam::reduced_basis(&sys, 3).unwrap();
    let ch = SphereChart::two_sphere(&sys, "s", [b[0].clone(), b[1].clone(), b[2].clone()], 6, 12).unwrap();
    assert!(matches!(solve_hjh(&sys, &ch, &HjhOptions::default()), Err(Error::Argument(_))));
}

#[test]
fn kepler_circle_solution_is_near_psi() {
    let sys = kepler_sys();
    let ch = kepler_circle(96);
    let sol = solve_hjh(&sys, &ch, &HjhOptions::default()).unwrap();
    assert!(sol.converged);
    for v in &sol.v.values {
        assert!((v.abs() - PSI_KEPLER).abs() < 0.01 * PSI_KEPLER, "{v}");
    }
    assert_eq!(sol.viscosity_sub_failures + sol.viscosity_super_failures, 0);
}

#[test]
fn sphere_csv_has_one_row_per_node() {
    let sys = kepler_sys();
    let ch = kepler_circle(8);
    let v = SphereFunction::from_fn(&ch, |_| PSI_KEPLER);
    let mut buf = Vec::new();
    write_sphere_csv(&sys, &v, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("angle0,v,residual,psi\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_restrict_extend_round_trip(vals in proptest::collection::vec(-5.0f64..5.0, 12), per in 1usize..6) {
        let sys = kepler_sys();
        let ch = kepler_circle(12);
        let v = SphereFunction::new(ch, vals).unwrap();
        let u = extend_homogeneous(&sys, &v, per, 2.0).unwrap();
        prop_assert_eq!(restrict_homogeneous(&u).unwrap().values, v.values);
    }

    #[test]
    fn prop_residual_forms_agree(vals in proptest::collection::vec(-8.0f64..8.0, 30), i in 0usize..30) {
        let sys = line_sys();
        let ch = line_circle(30);
        let v = SphereFunction::new(ch, vals).unwrap();
        if let (Ok(a), Ok(b)) = (hjh_residual(&sys, &v, i), hjh_residual_psi(&sys, &v, i)) {
            prop_assert!((a / 0.25 - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn prop_flat_exact_points_sit_on_psi(c in 0.5f64..1.5) {
        // a node where the discrete gradient and residual vanish has |v| = psi
        let sys = kepler_sys();
        let ch = kepler_circle(16);
        let v = SphereFunction::from_fn(&ch, |_| c * PSI_KEPLER);
        let g = v.gradient_norm2(3).unwrap();
        let r = hjh_residual(&sys, &v, 3).unwrap();
        prop_assert!(g == 0.0);
        prop_assert_eq!(r.abs() < 1e-10, (v.values[3].abs() - PSI_KEPLER).abs() < 1e-10);
    }
}

#[test]
fn collinear_solution_properties() {
    let sys = line_sys();
    let n = 48;
    let ch = line_circle(n);
    let opts = HjhOptions {
        t: 0.05,
        ..HjhOptions::default()
    };
    let sol = solve_hjh(&sys, &ch, &opts).unwrap();
    assert!(sol.converged);
    let psi = psi_on(&sys, &ch);
    let v = &sol.v.values;
    for i in 0..n {
        let on_k = ch.distance_to_collisions(&ch.node_params(i)) < 1e-9;
        assert_eq!(v[i].is_nan(), on_k, "node {i} {:?}", ch.distance_to_collisions(&ch.node_params(i)));
        // equal masses: the pattern repeats every sixth of a turn and is even
        let j = (i + n / 6) % n;
        let m = (n - i) % n;
        if !on_k {
            assert!((v[i] - v[j]).abs() < 1e-9);
            assert!((v[i] - v[m]).abs() < 1e-9);
            // |v| <= psi up to the slack of this coarse grid
            assert!(v[i].abs() <= 1.1 * psi[i], "{} {}", v[i], psi[i]);
        }
    }
    // v = -phi(0, .) on the circle: the Euler configuration minimizes U there,
    // so |v| >= psi(Euler) everywhere with the shallowest value at Euler
    let euler = (0..n).map(|i| psi[i]).fold(f64::INFINITY, f64::min);
    assert!(v.iter().filter(|x| x.is_finite()).all(|x| x.abs() >= euler));
    let top = (0..n).filter(|&i| v[i].is_finite()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert!((ch.distance_to_collisions(&ch.node_params(top)) - std::f64::consts::PI / 6.0).abs() < 1e-9);
    assert!(sol.residual.max_relative < 0.25);
}


