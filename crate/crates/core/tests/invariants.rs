use gpe_core::flow::{evolve_bundle, lambda_flow, TimeGrid};
use gpe_core::grid::{read_snapshot, write_snapshot, Grid, GridState};
use gpe_core::moments::gaussian_moments;
use gpe_core::phase_space::{CoefficientProvider, PhasePoint, QuadraticModel};
use gpe_core::propagator::{
    normalization_constant, propagate_gaussian, HermiteGaussianState, SymmetrySymbol, WeylPolySymbol,
};
use gpe_core::solver::compare_l2;
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;

fn sym2(a: f64, b: f64, c: f64) -> CoefficientProvider<f64> {
    CoefficientProvider::Constant(DMatrix::from_row_slice(2, 2, &[a, b, b, c]))
}

fn packet(p: f64, x: f64, re: f64, im: f64) -> HermiteGaussianState<f64> {
    HermiteGaussianState::gaussian(
        PhasePoint::new(&[p], &[x]).unwrap(),
        DMatrix::from_element(1, 1, Complex::new(re, im)),
        1.0,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_stays_symplectic(
        a in 0.2f64..2.0, b in -0.5f64..0.5, c in 0.0f64..2.0,
        w in -1.0f64..1.0, kappa in 0.0f64..0.5,
    ) {
        let m = QuadraticModel::new(1, 1.0, sym2(a, b, c))
            .with_wzz(sym2(0.0, 0.0, w))
            .with_wzw(sym2(0.0, 0.0, w))
            .with_www(sym2(0.0, 0.0, 1.0))
            .with_kappa(kappa);
        let g = packet(0.3, -0.2, 0.1, 1.5);
        let mom = gaussian_moments(&g).unwrap();
        let times = TimeGrid::uniform(0.0, 3.0, 1e-3).unwrap();
        let b = evolve_bundle(&mom.z, &mom.delta2, &m, &times).unwrap();
        prop_assert!(b.symplectic_defect() < 1e-9);
        prop_assert!(b.determinant_drift() < 1e-8);
        prop_assert!(b.factorization_defect() < 1e-8);
    }

    #[test]
    fn shift_flow_is_linear(
        l in prop::array::uniform2(-2.0f64..2.0), mu in prop::array::uniform2(-2.0f64..2.0),
        s in -2.0f64..2.0, r in -2.0f64..2.0,
    ) {
        let m = QuadraticModel::harmonic(1, 1.0)
            .with_wzz(sym2(0.0, 0.0, 0.4))
            .with_kappa(0.3);
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let d0 = [DMatrix::identity(2, 2) * 0.5];
        let lp = PhasePoint::from_slice(&l).unwrap();
        let mp = PhasePoint::from_slice(&mu).unwrap();
        let combo = lp.scale(s).add(&mp.scale(r));
        let fa = lambda_flow(&lp, &m, &times, &d0).unwrap();
        let fb = lambda_flow(&mp, &m, &times, &d0).unwrap();
        let fc = lambda_flow(&combo, &m, &times, &d0).unwrap();
        for k in 0..times.len() {
            let want = fa.lambda[k].scale(s).add(&fb.lambda[k].scale(r));
            prop_assert!(fc.lambda[k].sub(&want).max_abs() < 1e-10);
        }
    }

    #[test]
    fn displacement_acts_as_shift_with_phase(
        cp in -2.0f64..2.0, cx in -2.0f64..2.0, x in -3.0f64..3.0,
        p0 in -1.0f64..1.0, x0 in -1.0f64..1.0,
    ) {
        let g = packet(p0, x0, 0.2, 1.3);
        let c = PhasePoint::new(&[cp], &[cx]).unwrap();
        let got = g.displaced(&c).value(&[x]);
        let want = Complex::new(0.0, cp * x - 0.5 * cp * cx).exp() * g.value(&[x - cx]);
        prop_assert!((got - want).norm() < 1e-12 * (1.0 + want.norm()));
    }

    #[test]
    fn position_and_momentum_act_pointwise(x in -3.0f64..3.0, p0 in -1.0f64..1.0, x0 in -1.0f64..1.0) {
        let g = packet(p0, x0, 0.4, 0.9);
        let xg = g.apply_weyl(&WeylPolySymbol::position(1, 0)).unwrap();
        prop_assert!((xg.value(&[x]) - g.value(&[x]) * x).norm() < 1e-12);
        let h = 1e-4;
        let deriv = (g.value(&[x + h]) - g.value(&[x - h])) / (2.0 * h);
        let pg = g.apply_weyl(&WeylPolySymbol::momentum(1, 0)).unwrap();
        prop_assert!((pg.value(&[x]) - deriv * Complex::new(0.0, -1.0)).norm() < 1e-6);
    }

    #[test]
    fn normalized_image_has_unit_norm(q in 0.3f64..3.0, d in -1.0f64..1.0) {
        let g = packet(0.5, 1.0, 0.0, q);
        let op = SymmetrySymbol::Polynomial(
            WeylPolySymbol::position(1, 0).add(&WeylPolySymbol::identity(1).scale(Complex::new(d, 0.0))),
        )
        .to_operator();
        let alpha = normalization_constant(&op, &g).unwrap();
        let out = op.apply(&g).unwrap().scaled(Complex::new(1.0 / alpha, 0.0));
        prop_assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_propagation_is_unitary(re in -1.0f64..1.0, im in 0.3f64..3.0, t1 in 0.5f64..6.0) {
        let g = packet(0.2, -0.4, re, im)
            .apply_weyl(&WeylPolySymbol::position(1, 0))
            .unwrap();
        let n0 = g.norm();
        let times = TimeGrid::with_steps(0.0, t1, 400).unwrap();
        for s in propagate_gaussian(&g, &QuadraticModel::harmonic(1, 1.0), &times).unwrap() {
            prop_assert!((s.norm() - n0).abs() < 1e-9 * n0);
        }
    }

    #[test]
    fn pure_phase_is_recovered(theta in -3.0f64..3.0) {
        let grid = Grid::uniform(1, -10.0, 10.0, 128).unwrap();
        let a = packet(0.3, 0.5, 0.0, 1.0).sample(&grid, 0.0).unwrap();
        let b = a.scaled(Complex::new(0.0, theta).exp());
        let cmp = compare_l2(&a, &b).unwrap();
        prop_assert!((cmp.raw - 2.0 * (theta / 2.0).sin().abs() * a.norm()).abs() < 1e-12);
        prop_assert!(cmp.phase_aligned < 1e-12);
        prop_assert!((cmp.best_phase - theta).abs() < 1e-12);
    }
}

#[test]
fn snapshot_round_trip_is_exact() {
    let grid = Grid::uniform(2, -4.0, 4.0, 64).unwrap();
    let state = GridState::from_fn(grid, 0.5, 1.25, |u| Complex::new(u[0], -u[1] * u[0]));
    let dir = std::env::temp_dir().join(format!("gpe-snapshot-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("psi.bin");
    write_snapshot(&state, &path).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(back.values, state.values);
    assert_eq!((back.t, back.hbar), (1.25, 0.5));
    assert!(back.grid.same_as(&state.grid));
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 64 * 64 * 16);
    std::fs::remove_dir_all(&dir).unwrap();
}
