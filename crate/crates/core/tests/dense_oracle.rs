//! Sparse assembly and one scheme step against dense brute force on
//! meshes with at most four cells.

mod common;

use std::sync::Arc;

use common::{dense, dense_step, force, force_poly, max_diff, meshes, random_field, vec_diff, DenseOps};
use graddiv::assembly::{assemble_convection, assemble_load};
use graddiv::par::Execution;
use graddiv::schemes::{FlowState, Scheme, SchemeParams, Stepper};
use graddiv::{OperatorSet, TaylorHoodSpace};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

#[test]
fn static_operators_match_dense() {
    for (name, mesh) in meshes() {
        let space = TaylorHoodSpace::new(mesh);
        let ops = OperatorSet::assemble(&space).unwrap();
        let d = DenseOps::build(&space);
        let checks: Vec<(&str, DMatrix<f64>, &DMatrix<f64>)> = vec![
            ("mass_scalar", dense(&ops.mass_scalar), &d.mass_scalar),
            ("stiffness_scalar", dense(&ops.stiffness_scalar), &d.stiffness_scalar),
            ("mass", dense(&ops.mass), &d.mass),
            ("stiffness", dense(&ops.stiffness), &d.stiffness),
            ("div", dense(&ops.div), &d.div),
            ("graddiv_full", dense(&ops.graddiv_full), &d.graddiv_full),
            ("graddiv_diag", dense(&ops.graddiv_diag), &d.graddiv_diag),
        ];
        for (op, sparse, reference) in checks {
            let err = max_diff(&sparse, reference);
            assert!(err <= TOL, "{name}/{op}: max diff {err:e}");
        }
        for (c, ax) in ops.axis_stiffness.iter().enumerate() {
            let err = max_diff(&dense(ax), &d.axis[c]);
            assert!(err <= TOL, "{name}/axis{c}: {err:e}");
        }
        let err = vec_diff(&ops.pressure_mean, &d.pressure_mean);
        assert!(err <= TOL, "{name}/pressure_mean: {err:e}");
    }
}

#[test]
fn convection_and_load_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, mesh) in meshes() {
        let space = TaylorHoodSpace::new(mesh);
        let d = DenseOps::build(&space);
        for _ in 0..3 {
            let w = random_field(&space, &mut rng, false);
            let err = max_diff(&dense(&assemble_convection(&space, &w).unwrap()), &d.convection(&w));
            assert!(err <= TOL, "{name}/convection: {err:e}");
        }
        for t in [0.0, 0.35, 1.0] {
            let load = assemble_load(&space, &force, t, Execution::Serial).unwrap();
            let err = vec_diff(&load, &d.load(|x| force_poly(x, t)));
            assert!(err <= TOL, "{name}/load t={t}: {err:e}");
        }
    }
}

#[test]
fn one_step_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (nu, k) = (0.03, 0.2);
    for mesh in [common::star_square(), common::star_tet()] {
        let dim = mesh.dim();
        let space = TaylorHoodSpace::new(mesh);
        let ops = OperatorSet::assemble(&space).unwrap();
        let d = DenseOps::build(&space);
        for (gamma, alpha) in [(0.0, 0.0), (1.0, 0.5), (1.0, 2.5), (10.0, 0.0)] {
            let u0 = random_field(&space, &mut rng, true);
            for scheme in [Scheme::ModularSgd, Scheme::Sgd1, Scheme::CoupledGraddiv] {
                let params = SchemeParams::new(scheme, nu, k, gamma, alpha, 1.0, Arc::new(force));
                let stepper = Stepper::new(&space, &ops, params).unwrap();
                let mut state = FlowState::from_velocity(u0.clone(), space.n_pressure());
                let reference = dense_step(&d, scheme, &u0, nu, k, gamma, alpha);
                let tag = format!("{dim}d {scheme} gamma={gamma} alpha={alpha}");
                if scheme == Scheme::ModularSgd {
                    let (ut, p, lambda) = stepper.step1_momentum(&state).unwrap();
                    assert!(vec_diff(&ut, &reference.u_tilde) <= TOL, "{tag}: u_tilde");
                    assert!(vec_diff(&p, &reference.p) <= TOL, "{tag}: p");
                    assert!((lambda - reference.lambda).abs() <= TOL, "{tag}: lambda");
                    let un = stepper.step2_sparse_graddiv(&ut, &u0).unwrap();
                    assert!(vec_diff(&un, &reference.u_next) <= TOL, "{tag}: step 2");
                }
                stepper.advance(&mut state).unwrap();
                let err = vec_diff(state.velocity(), &reference.u_next);
                assert!(err <= TOL, "{tag}: u_next {err:e}");
                assert!(vec_diff(&state.p, &reference.p) <= TOL, "{tag}: p");
            }
        }
    }
}
