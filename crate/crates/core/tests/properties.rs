use std::f64::consts::PI;

use proptest::prelude::*;

use qbspde::estimates::{linf_bound, ProofTestFunction, PsiKind};
use qbspde::grid::GridStack;
use qbspde::io::{read_binary, read_csv, write_binary, write_csv};
use qbspde::solver::{solve, SolverConfig};
use qbspde::spec::{coercivity_gap, const_matrix, driver_fn, mu0, scalar_fn, ArgMask, ProblemSpec};
use qbspde::transforms::{exp_forward, exp_inverse, uniqueness_phi};

fn heat(amp: f64, c: f64) -> ProblemSpec {
    ProblemSpec::new(1, 1, 0.2)
        .with_terminal(scalar_fn(move |p| amp * (PI * p.x[0]).sin()))
        .with_driver(driver_fn(ArgMask::NONE, move |_, _, _, _| c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_roundtrip(u in -5.0f64..5.0, q in -5.0f64..5.0, lambda in 0.05f64..3.0) {
        let (v, r) = exp_forward(&[u], &[q], lambda).unwrap();
        let (u2, q2) = exp_inverse(&v, &r, lambda).unwrap();
        // recovering 1 + v from v costs a factor e^{-lambda u}
        let cond = (-lambda * u).exp().max(1.0);
        prop_assert!((u2[0] - u).abs() <= 1e-13 * cond * (1.0 + u.abs()) / lambda.min(1.0));
        prop_assert!((q2[0] - q).abs() <= 1e-13 * cond * (1.0 + q.abs()));
        prop_assert!(v[0] > -1.0);
    }

    #[test]
    fn coercivity_from_superparabolic_bounds(
        a in 0.2f64..2.0, s in -1.0f64..1.0, p in -10.0f64..10.0, r in -10.0f64..10.0,
    ) {
        // 1d: kappa + s^2 <= 2a <= K with the tightest constants
        prop_assume!(2.0 * a > s * s + 1e-6);
        let kappa = 2.0 * a - s * s;
        let m0 = mu0(kappa, 2.0 * a).unwrap();
        let am = nalgebra::DMatrix::from_element(1, 1, a);
        let sm = nalgebra::DMatrix::from_element(1, 1, s);
        let gap = coercivity_gap(&am, &sm, &[p], &[r], m0).unwrap();
        prop_assert!(gap >= -1e-12 * (p * p + r * r).max(1.0));
    }

    #[test]
    fn linf_bound_decreases_in_time(l0 in 0.0f64..2.0, l1 in 0.0f64..2.0, phi in 0.0f64..3.0, t in 0.0f64..1.0) {
        let b = linf_bound(t, l0, l1, phi, 1.0).unwrap();
        let b_end = linf_bound(1.0, l0, l1, phi, 1.0).unwrap();
        prop_assert!(b + 1e-12 >= b_end);
        prop_assert!((b_end - phi).abs() <= 1e-12);
    }

    #[test]
    fn uniqueness_transform_inverts(beta in 0.05f64..20.0, b in 1.01f64..50.0, m in 0.1f64..2.0, frac in 0.0f64..1.0) {
        let tr = uniqueness_phi(beta, b, m).unwrap();
        let u = -m + 2.0 * m * frac;
        let ut = tr.phi_inv(u);
        prop_assert!((tr.phi(ut) - u).abs() <= 1e-9 * (1.0 + u.abs()));
        prop_assert!(tr.w(u) > 0.0 && tr.w1(u) > 0.0 && tr.w2(u) < 0.0);
    }

    #[test]
    fn psi2_is_nonnegative(lambda in 0.1f64..2.0, m in 0.2f64..2.0, frac in -1.0f64..1.0) {
        let psi = ProofTestFunction::new(PsiKind::Psi2, lambda, m).unwrap();
        let v = frac * m;
        prop_assert!(psi.value(v) >= 0.0);
        prop_assert!(psi.d1(v) * v >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_data_give_ordered_solutions(a1 in 0.0f64..1.0, da in 0.0f64..1.0, c1 in -1.0f64..1.0, dc in 0.0f64..1.0) {
        let g = GridStack::new(&ProblemSpec::new(1, 1, 0.2).domain, &[21], None, 0.2, 10).unwrap();
        let cfg = SolverConfig::default();
        let lo = solve(&heat(a1, c1), &g, &cfg).unwrap();
        let hi = solve(&heat(a1 + da, c1 + dc), &g, &cfg).unwrap();
        for (x, y) in lo.u.iter().zip(&hi.u) {
            prop_assert!(*x <= y + 1e-10);
        }
    }

    #[test]
    fn linear_solves_are_linear(a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, s in -0.5f64..0.5) {
        let g = GridStack::new(&ProblemSpec::new(1, 1, 0.2).domain, &[21], None, 0.2, 10).unwrap();
        let cfg = SolverConfig::default();
        let with_sigma = |amp: f64| heat(amp, 0.0).with_sigma(const_matrix(vec![s]));
        let u1 = solve(&with_sigma(a1), &g, &cfg).unwrap();
        let u2 = solve(&with_sigma(a2), &g, &cfg).unwrap();
        let u12 = solve(&with_sigma(a1 + a2), &g, &cfg).unwrap();
        for i in 0..u1.u.len() {
            prop_assert!((u1.u[i] + u2.u[i] - u12.u[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn serialization_roundtrips(amp in -2.0f64..2.0, c in -1.0f64..1.0) {
        let g = GridStack::new(&ProblemSpec::new(1, 1, 0.2).domain, &[11], None, 0.2, 4).unwrap();
        let sol = solve(&heat(amp, c), &g, &SolverConfig::default()).unwrap();
        let mut csv = Vec::new();
        write_csv(&sol, &mut csv).unwrap();
        prop_assert_eq!(&read_csv(&csv[..]).unwrap().u, &sol.u);
        let mut bin = Vec::new();
        write_binary(&sol, &mut bin).unwrap();
        let back = read_binary(&bin[..]).unwrap();
        prop_assert_eq!(&back.u, &sol.u);
        prop_assert_eq!(&back.q, &sol.q);
    }
}
