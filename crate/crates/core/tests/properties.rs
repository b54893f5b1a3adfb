use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use regpack::exo::{square_wave, triangle_wave, TimeVaryingMatrix};
use regpack::imu::build_companion;
use regpack::numkit::{numerical_rank, pinv, repeated_integrals, Grid, Side};
use regpack::plant::LtiPlant;
use regpack::sim::place_poles;

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn sorted_spectrum(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut e: Vec<(f64, f64)> = m.complex_eigenvalues().iter().map(|z| (z.re, z.im.abs())).collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pinv_satisfies_penrose(a in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let (p, rank) = pinv(&a, 1e-12).unwrap();
        let scale = 1.0 + a.norm() * p.norm();
        prop_assert!((&a * &p * &a - &a).norm() <= 1e-9 * scale * (1.0 + a.norm()));
        prop_assert!((&p * &a * &p - &p).norm() <= 1e-9 * scale * (1.0 + p.norm()));
        prop_assert!((&a * &p - (&a * &p).transpose()).norm() <= 1e-9 * scale);
        prop_assert!((&p * &a - (&p * &a).transpose()).norm() <= 1e-9 * scale);
        prop_assert_eq!(rank, numerical_rank(&a, 1e-12));
    }

    #[test]
    fn rank_of_outer_products(u in matrix(5, 2), v in matrix(2, 4)) {
        let a = &u * &v;
        let expect = numerical_rank(&u, 1e-9).min(numerical_rank(&v, 1e-9));
        prop_assert!(numerical_rank(&a, 1e-9) <= expect);
    }

    #[test]
    fn transmission_zeros_survive_similarity(
        a in matrix(3, 3),
        b in matrix(3, 1),
        c in matrix(1, 3),
        t in matrix(3, 3),
    ) {
        let t = t + DMatrix::identity(3, 3) * 3.0;
        let ti = t.clone().try_inverse().unwrap();
        prop_assume!((&c * &b)[(0, 0)].abs() > 0.1);
        let p = DMatrix::zeros(3, 1);
        let q = DMatrix::zeros(1, 1);
        let plant = LtiPlant::new(a.clone(), b.clone(), c.clone(), 0.0, p.clone(), q.clone()).unwrap();
        let moved = LtiPlant::new(&t * &a * &ti, &t * &b, &c * &ti, 0.0, p, q).unwrap();
        let z1 = sorted_spectrum(&plant.zero_dynamics().unwrap());
        let z2 = sorted_spectrum(&moved.zero_dynamics().unwrap());
        prop_assert_eq!(z1.len(), 2);
        for (x, y) in z1.iter().zip(&z2) {
            prop_assert!((x.0 - y.0).abs() < 1e-6 * (1.0 + x.0.abs()), "{z1:?} vs {z2:?}");
            prop_assert!((x.1 - y.1).abs() < 1e-6 * (1.0 + x.1.abs()), "{z1:?} vs {z2:?}");
        }
    }

    #[test]
    fn companion_has_requested_spectrum(re in prop::collection::vec(-4.0..-0.2f64, 1..4), im in 0.1..3.0f64) {
        let mut eig: Vec<Complex64> = re.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        eig.push(Complex64::new(-1.0, im));
        eig.push(Complex64::new(-1.0, -im));
        let (f, g) = build_companion(&eig).unwrap();
        prop_assert_eq!(g.shape(), (eig.len(), 1));
        let got = sorted_spectrum(&f);
        let mut want: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im.abs())).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in got.iter().zip(&want) {
            prop_assert!((x.0 - y.0).abs() < 1e-6 && (x.1 - y.1).abs() < 1e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn pole_placement_places(a in matrix(3, 3), b in matrix(3, 1), p in prop::collection::vec(-5.0..-0.5f64, 3)) {
        let ctrb = DMatrix::from_columns(&[b.column(0).into_owned(), (&a * &b).column(0).into_owned(), (&a * &a * &b).column(0).into_owned()]);
        prop_assume!(ctrb.singular_values().min() > 1e-2);
        let poles: Vec<Complex64> = p.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        let k = place_poles(&a, &b, &poles).unwrap();
        let got = sorted_spectrum(&(&a + &b * &k));
        let mut want = p.clone();
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g.0 - w).abs() < 1e-4 * (1.0 + w.abs()) && g.1 < 1e-3, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn waves_are_bounded_and_linked(theta in -50.0..50.0f64) {
        let sq = square_wave(theta, Side::Right);
        prop_assert!(sq == 1.0 || sq == -1.0);
        let tri = triangle_wave(theta);
        prop_assert!((-1.0..=1.0).contains(&tri));
        // The triangle climbs where the square is positive.
        let h = 1e-6;
        let slope = (triangle_wave(theta + h) - triangle_wave(theta - h)) / (2.0 * h);
        let near_kink = (theta / std::f64::consts::PI - (theta / std::f64::consts::PI).round()).abs() < 1e-4;
        if !near_kink {
            prop_assert!((slope - 2.0 / std::f64::consts::PI * sq).abs() < 1e-4, "slope {slope} sq {sq}");
        }
    }

    #[test]
    fn repeated_integrals_of_constants(c in -3.0..3.0f64, t_end in 0.5..4.0f64) {
        let f = TimeVaryingMatrix::constant(DMatrix::from_element(1, 1, c));
        let g = Grid::uniform(0.0, t_end, 1e-2).unwrap();
        let lv = repeated_integrals(&f, 3, 0.0, &g).unwrap();
        let mut fact = 1.0;
        for (k, level) in lv.iter().enumerate() {
            fact *= (k + 1) as f64;
            let want = c * t_end.powi(k as i32 + 1) / fact;
            prop_assert!((level.last()[(0, 0)] - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn vec_roundtrip(a in matrix(3, 4)) {
        let v: DVector<f64> = regpack::numkit::vec_of(&a);
        prop_assert_eq!(regpack::numkit::unvec(v.as_slice(), 3, 4), a);
    }
}
