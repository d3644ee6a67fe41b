use std::f64::consts::PI;

use proptest::prelude::*;
use qcurv::asymptotics::measure_decay;
use qcurv::geometry::{kelvin, mean_curvature_christoffel, mean_curvature_geodesic_sphere, q_round, q_round_exact};
use qcurv::ode::{derivative_tower, hamiltonian, integrate, ode_rhs};
use qcurv::optimize::brent_root;
use qcurv::pohozaev::{necksize_from_pohozaev, pohozaev_of_necksize};
use qcurv::quadrature::SliceQuadrature;
use qcurv::series::Series2;
use qcurv::*;

fn dim() -> impl Strategy<Value = u32> {
    5u32..=12
}

fn state() -> impl Strategy<Value = CylState<f64>> {
    (0.05f64..2.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b, c, d)| CylState::new(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_constant_along_the_vector_field(n in dim(), s in state()) {
        let c = OdeCoefficients::<f64>::new(n).unwrap();
        let f = ode_rhs(s, &c).unwrap();
        let h = 1e-6;
        let d = (hamiltonian(s + f * h, &c).unwrap() - hamiltonian(s - f * h, &c).unwrap()) / (2.0 * h);
        let scale = 1.0 + f.max_abs() * s.max_abs() * (1.0 + s.v.powf(c.p));
        prop_assert!(d.abs() <= 1e-6 * scale, "dH/dt = {d}");
    }

    #[test]
    fn nonpositive_states_are_rejected(n in dim(), v in -2.0f64..=0.0) {
        let c = OdeCoefficients::<f64>::new(n).unwrap();
        let s = CylState::new(v, 0.1, 0.0, 0.0);
        prop_assert!(ode_rhs(s, &c).is_err());
        prop_assert!(hamiltonian(s, &c).is_err());
    }

    #[test]
    fn sphere_solution_is_even_and_has_zero_energy(n in dim(), t in -6.0f64..6.0) {
        let c = OdeCoefficients::<f64>::new(n).unwrap();
        let a = v_sph(t, n);
        let b = v_sph(-t, n);
        prop_assert!((a.reflected() - b).max_abs() <= 1e-15 * (1.0 + a.max_abs()));
        prop_assert!(hamiltonian(a, &c).unwrap().abs() <= 1e-13);
    }

    #[test]
    fn tower_starts_with_the_state(n in dim(), s in state()) {
        let c = OdeCoefficients::<f64>::new(n).unwrap();
        let w = derivative_tower(s, &c).unwrap();
        prop_assert_eq!(&w[..4], &s.to_array()[..]);
        prop_assert!((w[4] - ode_rhs(s, &c).unwrap().d3v).abs() <= 1e-12 * (1.0 + w[4].abs()));
    }

    #[test]
    fn dense_output_passes_through_nodes(s in state(), span in 0.2f64..1.5) {
        let c = OdeCoefficients::<f64>::new(5).unwrap();
        let s = CylState::new(0.3 + 0.2 * s.v, 0.1 * s.dv, 0.1 * s.d2v, 0.1 * s.d3v);
        if let Ok(tr) = integrate(s, 0.0, span, &[], &c, &IntegratorConfig::default()) {
            for (t, x) in &tr.nodes {
                prop_assert!((tr.eval(*t) - *x).max_abs() <= 1e-12 * (1.0 + x.max_abs()));
            }
        }
    }

    #[test]
    fn sphere_areas_satisfy_the_recurrence(n in 2u32..20) {
        let a: f64 = sphere_area(n);
        let b: f64 = sphere_area(n + 2);
        prop_assert!((b - 2.0 * PI / n as f64 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn quadrature_moments(n in dim(), k in 0usize..20) {
        let q = SliceQuadrature::<f64>::with_default_order(n).unwrap();
        let mean = q.integrate(|s| Ok(s.powi(2 * k as i32))).unwrap() / q.area;
        let mut exact = 1.0;
        for j in 0..k {
            exact *= (2 * j + 1) as f64 / (n as usize + 2 * j) as f64;
        }
        prop_assert!((mean - exact).abs() <= 1e-13);
        let odd = q.integrate(|s| Ok(s.powi(2 * k as i32 + 1))).unwrap();
        prop_assert!(odd.abs() <= 1e-13 * q.area);
    }

    #[test]
    fn series_functions_invert(x in 0.1f64..5.0, dt in -1.0f64..1.0, ds in -1.0f64..1.0) {
        let f = Series2::var_t(x) + Series2::var_s(0.3) * dt + Series2::constant(ds * 0.1);
        let g = f.ln().exp();
        for i in 0..5 {
            for j in 0..(5 - i) {
                prop_assert!((g.coeff(i, j) - f.coeff(i, j)).abs() <= 1e-12 * (1.0 + f.coeff(i, j).abs()));
            }
        }
        let h = f.sqrt() * f.sqrt();
        prop_assert!((h.value() - f.value()).abs() <= 1e-13 * f.value().abs());
    }

    #[test]
    fn mean_curvature_closed_form_matches_oracle(n in dim(), r in 0.05f64..20.0) {
        let a: f64 = mean_curvature_geodesic_sphere(r, n);
        let b: f64 = mean_curvature_christoffel(r, n);
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        if r > 3.0 {
            prop_assert!(b < 0.0);
        }
    }

    #[test]
    fn q_round_exact_and_float_agree(n in dim()) {
        let e = q_round_exact(n).unwrap();
        let f: f64 = q_round(n).unwrap();
        prop_assert!((f - *e.numer() as f64 / *e.denom() as f64).abs() <= 1e-12 * f.abs());
    }

    #[test]
    fn kelvin_is_an_involution(n in 5u32..=8, x in prop::collection::vec(-3.0f64..3.0, 8), c in -1.0f64..1.0) {
        let x = &x[..n as usize];
        prop_assume!(x.iter().map(|a| a * a).sum::<f64>() > 1e-2);
        let f = |y: &[f64]| Ok(2.0 + c * y[0] + y[1] * y[1]);
        let kk = kelvin(|y: &[f64]| kelvin(f, y, n), x, n).unwrap();
        let v = f(x).unwrap();
        prop_assert!((kk - v).abs() <= 1e-12 * v.abs());
    }

    #[test]
    fn decay_rate_of_pure_exponentials(beta in 0.2f64..4.0, c in 0.01f64..100.0, t0 in 1.0f64..5.0) {
        let t: Vec<f64> = (0..30).map(|i| t0 + 0.2 * i as f64).collect();
        let r: Vec<f64> = t.iter().map(|t| c * (-beta * t).exp()).collect();
        let d = measure_decay(&t, &r).unwrap();
        prop_assert!((d.beta - beta).abs() <= 1e-10);
        prop_assert!(!d.oscillatory);
    }

    #[test]
    fn brent_finds_bracketed_roots(root in -2.0f64..2.0, k in 0.1f64..5.0) {
        let r = brent_root(|x: f64| Ok::<_, ()>(k * (x - root) * (1.0 + x * x)), -3.0, 3.0, 1e-14, 200).unwrap().unwrap();
        prop_assert!((r.x - root).abs() <= 1e-12);
    }

    #[test]
    fn tail_samples_csv_round_trip(vals in prop::collection::vec(0.01f64..10.0, 8 * 8)) {
        let t: Vec<f64> = (0..8).map(|i| 2.0 + 0.5 * i as f64).collect();
        let s: Vec<f64> = (0..8).map(|j| -1.0 + 2.0 * j as f64 / 7.0).collect();
        let values: Vec<Vec<f64>> = vals.chunks(8).map(|c| c.to_vec()).collect();
        let samples = TailSamples::new(t, s, values).unwrap();
        let mut buf = Vec::new();
        samples.write_csv(&mut buf).unwrap();
        let back = TailSamples::from_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.values, samples.values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn shot_orbits_touch_their_necksize(n in prop::sample::select(vec![5u32, 6, 8]), rel in 0.15f64..0.95) {
        let c = OdeCoefficients::<f64>::new(n).unwrap();
        let o = shoot_delaunay(rel * c.eps_n, &c, &ShootingConfig::default()).unwrap();
        prop_assert!((o.min_v() - o.eps).abs() <= 1e-8);
        prop_assert!(o.half_period_residual <= 1e-9);
        prop_assert!(o.max_v() > c.eps_n);
        prop_assert!(o.ham_level < 0.0 && o.ham_level > c.cylinder_energy());
    }

    #[test]
    fn pohozaev_round_trip(n in prop::sample::select(vec![5u32, 6, 8]), rel in 0.15f64..0.95) {
        let c = OdeCoefficients::<f64>::new(n).unwrap();
        let cfg = ShootingConfig::default();
        let eps = rel * c.eps_n;
        let p = pohozaev_of_necksize(eps, &c, &cfg).unwrap();
        prop_assert!(p < 0.0);
        let back = necksize_from_pohozaev(p, &c, &cfg).unwrap();
        prop_assert!((back / eps - 1.0).abs() <= 1e-7);
    }
}
