//! Scheme-level behaviour over short trajectories.

use std::sync::Arc;

use graddiv::forcing::BuiltinForcing;
use graddiv::schemes::{run_simulation, FlowState, Scheme, SchemeParams, Stepper};
use graddiv::sparse::factorize;
use graddiv::{OperatorSet, SimplicialMesh, TaylorHoodSpace};

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Cell and barycentric coordinates of a 2d point, by brute force.
fn locate(mesh: &SimplicialMesh, x: [f64; 3]) -> (usize, [f64; 4]) {
    for (c, cell) in mesh.cells().enumerate() {
        let [a, b, d] = [cell[0], cell[1], cell[2]].map(|i| mesh.vertices()[i]);
        let det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((x[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (x[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
        let lam = [1.0 - l1 - l2, l1, l2, 0.0];
        if lam[..3].iter().all(|l| *l >= -1e-12) {
            return (c, lam);
        }
    }
    panic!("point {x:?} outside mesh");
}

#[test]
fn stokes_patch_reproduces_discrete_field() {
    let space = Arc::new(TaylorHoodSpace::new(SimplicialMesh::unit_square(4)));
    let ops = OperatorSet::assemble(&space).unwrap();
    let (nu, k) = (0.02, 0.5);

    // a discretely divergence-free field with zero boundary values
    let seed = SchemeParams::new(Scheme::ModularSgd, nu, k, 0.0, 0.0, 1.0, Arc::new(BuiltinForcing::BoxRotational));
    let rest = FlowState::at_rest(space.n_velocity(), space.n_pressure());
    let (u_h, _, _) = Stepper::new(&space, &ops, seed).unwrap().step1_momentum(&rest).unwrap();
    assert!(max_abs(&u_h) > 1e-3);

    // f = u_h/k + ν M⁻¹K u_h as a P2 field, so its load is (1/k)M u_h + νK u_h
    let ku = ops.stiffness.spmv(&u_h).unwrap();
    let g = factorize(&ops.mass).unwrap().solve(&ku).unwrap();
    let f_h: Vec<f64> = u_h.iter().zip(&g).map(|(u, g)| u / k + nu * g).collect();
    let sp = space.clone();
    let force = move |x: [f64; 3], _t: f64| {
        let (c, lam) = locate(sp.mesh(), x);
        sp.evaluate_velocity(&f_h, c, &lam)
    };
    let params = SchemeParams::new(Scheme::ModularSgd, nu, k, 1.0, 0.5, 1.0, Arc::new(force));
    let (ut, p, _) = Stepper::new(&space, &ops, params).unwrap().step1_momentum(&rest).unwrap();
    assert!(max_diff(&ut, &u_h) <= 1e-9 * max_abs(&u_h), "{}", max_diff(&ut, &u_h));
    assert!(max_abs(&p) <= 1e-9, "{}", max_abs(&p));
}

#[test]
fn step_one_ignores_graddiv_parameters() {
    let space = TaylorHoodSpace::new(SimplicialMesh::unit_cube(2));
    let ops = OperatorSet::assemble(&space).unwrap();
    let mut state = FlowState::at_rest(space.n_velocity(), space.n_pressure());
    let base = SchemeParams::new(Scheme::ModularSgd, 1e-3, 0.1, 0.0, 0.0, 1.0, Arc::new(BuiltinForcing::BoxRotational));
    let stepper = Stepper::new(&space, &ops, base.clone()).unwrap();
    for _ in 0..3 {
        stepper.advance(&mut state).unwrap();
    }
    let reference = stepper.step1_momentum(&state).unwrap();
    for (gamma, alpha) in [(1.0, 0.5), (10.0, 30.0), (0.0, 2.0)] {
        let mut p = base.clone();
        p.gamma = gamma;
        p.alpha = alpha;
        let out = Stepper::new(&space, &ops, p).unwrap().step1_momentum(&state).unwrap();
        assert_eq!(out.0, reference.0);
        assert_eq!(out.1, reference.1);
    }
}

#[test]
fn schemes_share_trajectory_without_graddiv() {
    let space = TaylorHoodSpace::new(SimplicialMesh::unit_cube(2));
    let ops = OperatorSet::assemble(&space).unwrap();
    let run = |scheme| {
        let p = SchemeParams::new(scheme, 1e-3, 0.1, 0.0, 0.0, 1.5, Arc::new(BuiltinForcing::BoxRotational));
        run_simulation(&space, &ops, &p, None, |_, _| {}).unwrap().records
    };
    let a = run(Scheme::ModularSgd);
    assert_eq!(a.len(), 15);
    for other in [Scheme::Sgd1, Scheme::CoupledGraddiv] {
        let b = run(other);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.kinetic_energy - y.kinetic_energy).abs() <= 1e-9 * x.kinetic_energy.max(1.0));
            assert!((x.div_norm - y.div_norm).abs() <= 1e-9 * x.div_norm.max(1.0));
        }
    }
}

#[test]
fn coupled_graddiv_reduces_divergence_after_ramp() {
    let space = TaylorHoodSpace::new(SimplicialMesh::unit_cube(2));
    let ops = OperatorSet::assemble(&space).unwrap();
    let run = |gamma| {
        let p = SchemeParams::new(Scheme::CoupledGraddiv, 1e-4, 0.05, gamma, 0.0, 3.0, Arc::new(BuiltinForcing::BoxRotational));
        run_simulation(&space, &ops, &p, None, |_, _| {}).unwrap()
    };
    let (plain, stabilized) = (run(0.0), run(1.0));
    assert!(plain.blowup_step.is_none() && stabilized.blowup_step.is_none());
    for (a, b) in plain.records.iter().zip(&stabilized.records).filter(|(a, _)| a.t >= 1.0) {
        assert!(b.div_norm <= a.div_norm, "t={}: {} vs {}", a.t, b.div_norm, a.div_norm);
    }
}

#[test]
fn zero_forcing_from_rest_stays_zero() {
    let space = TaylorHoodSpace::new(SimplicialMesh::unit_square(3));
    let ops = OperatorSet::assemble(&space).unwrap();
    for scheme in [Scheme::ModularSgd, Scheme::Sgd1, Scheme::CoupledGraddiv] {
        let p = SchemeParams::new(scheme, 1e-2, 0.1, 1.0, 0.5, 0.3, Arc::new(BuiltinForcing::Zero));
        let out = run_simulation(&space, &ops, &p, None, |_, _| {}).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.records.iter().all(|r| r.kinetic_energy == 0.0 && r.div_norm == 0.0));
    }
}

#[test]
fn step_one_is_discretely_solenoidal_along_trajectory() {
    let space = TaylorHoodSpace::new(SimplicialMesh::unit_cube(2));
    let ops = OperatorSet::assemble(&space).unwrap();
    let p = SchemeParams::new(Scheme::ModularSgd, 1e-4, 0.05, 1.0, 0.7, 1.0, Arc::new(BuiltinForcing::BoxRotational));
    let mut worst = 0.0f64;
    run_simulation(&space, &ops, &p, None, |_, state| {
        let ut = state.u_tilde.as_ref().unwrap();
        let d = ops.div.spmv(ut).unwrap();
        worst = worst.max(max_abs(&d) / max_abs(ut).max(1e-300));
    })
    .unwrap();
    assert!(worst <= 1e-9, "{worst:e}");
}
