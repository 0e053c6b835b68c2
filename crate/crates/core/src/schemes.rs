//! Time stepping: modular sparse grad-div, one-step sparse grad-div and
//! coupled grad-div.
//!
//! All three share the bordered velocity/pressure/multiplier system
//!
//! ```text
//! [ A    −Dᵀ   0 ] [u]   [r]
//! [ −D    0    m ] [p] = [0]
//! [ 0     mᵀ   0 ] [λ]   [0]
//! ```
//!
//! where m is the pressure mean functional and A varies by scheme. The
//! static part of A is assembled and Dirichlet-eliminated once; each step
//! adds the convection values through a precomputed position map and
//! refactors with a fixed column ordering.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{convection_scalar_cached, dirichlet_mask, eliminate, load_cached, tabulate_all, OperatorSet};
use crate::diagnostics::{self, LedgerRegime, LedgerStep, StepRecord};
use crate::fem::{CellTabulation, FemError, TaylorHoodSpace};
use crate::forcing::Forcing;
use crate::par::Execution;
use crate::sparse::{CsrMatrix, LuFactorization, SolveError, SymbolicLu};

/// Kinetic energy above which a run is classified as blown up.
pub const BLOWUP_KINETIC_ENERGY: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    ModularSgd,
    Sgd1,
    CoupledGraddiv,
}

impl Scheme {
    pub const NAMES: [&'static str; 3] = ["modular_sgd", "sgd1", "coupled_graddiv"];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ModularSgd => "modular_sgd",
            Scheme::Sgd1 => "sgd1",
            Scheme::CoupledGraddiv => "coupled_graddiv",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modular_sgd" => Ok(Scheme::ModularSgd),
            "sgd1" => Ok(Scheme::Sgd1),
            "coupled_graddiv" => Ok(Scheme::CoupledGraddiv),
            other => Err(SchemeError::InvalidParams(format!(
                "unknown scheme '{other}' (expected one of {})",
                Scheme::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("linear solve failed at step {step}: {source}")]
    Solve { step: usize, source: SolveError },
    #[error("Step-2 block for component {component} is singular: {source}")]
    Step2Singular { component: usize, source: SolveError },
    #[error("non-finite or unbounded state at step {step}")]
    BlowUp { step: usize },
    #[error("initial velocity has length {found}, expected {expected}")]
    InitialShape { expected: usize, found: usize },
}

#[derive(Clone)]
pub struct SchemeParams {
    pub nu: f64,
    pub k: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub forcing: Arc<dyn Forcing>,
    /// Caps the number of steps below ⌈t_end/k⌉.
    pub max_steps: Option<usize>,
    pub execution: Execution,
    /// Compute the energy ledger columns of each record.
    pub ledger: bool,
}

impl fmt::Debug for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeParams")
            .field("nu", &self.nu)
            .field("k", &self.k)
            .field("gamma", &self.gamma)
            .field("alpha", &self.alpha)
            .field("scheme", &self.scheme)
            .field("t_end", &self.t_end)
            .field("max_steps", &self.max_steps)
            .finish_non_exhaustive()
    }
}

impl SchemeParams {
    pub fn new(scheme: Scheme, nu: f64, k: f64, gamma: f64, alpha: f64, t_end: f64, forcing: Arc<dyn Forcing>) -> Self {
        Self {
            nu,
            k,
            gamma,
            alpha,
            scheme,
            t_end,
            forcing,
            max_steps: None,
            execution: Execution::default(),
            ledger: true,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: &str| Err(SchemeError::InvalidParams(m.to_string()));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu must be positive");
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("k must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be nonnegative");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be nonnegative");
        }
        if !(self.t_end >= self.k && self.t_end.is_finite()) {
            return bad("t_end must be at least k");
        }
        Ok(())
    }

    /// ⌈t_end/k⌉, capped by `max_steps`.
    pub fn num_steps(&self) -> usize {
        let r = self.t_end / self.k;
        // guard against 10/0.05 = 200.00000000000003
        let n = if (r - r.round()).abs() < 1e-9 * r.max(1.0) {
            r.round()
        } else {
            r.ceil()
        } as usize;
        self.max_steps.map_or(n, |m| n.min(m))
    }

    /// t^n = n·k.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.k
    }
}

/// Solver state across one step.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub u_prev: Vec<f64>,
    /// Intermediate velocity; modular scheme only.
    pub u_tilde: Option<Vec<f64>>,
    pub u_next: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: f64,
    pub n: usize,
    pub t: f64,
}

impl FlowState {
    pub fn at_rest(n_velocity: usize, n_pressure: usize) -> Self {
        Self::from_velocity(vec![0.0; n_velocity], n_pressure)
    }

    pub fn from_velocity(u: Vec<f64>, n_pressure: usize) -> Self {
        Self {
            u_next: u.clone(),
            u_prev: u,
            u_tilde: None,
            p: vec![0.0; n_pressure],
            lambda: 0.0,
            n: 0,
            t: 0.0,
        }
    }

    /// Current velocity uⁿ (the last completed step).
    pub fn velocity(&self) -> &[f64] {
        &self.u_next
    }

    pub fn is_finite(&self) -> bool {
        self.u_next.iter().chain(&self.p).all(|v| v.is_finite())
    }
}

/// Bordered system with a fixed pattern and reusable ordering.
struct BorderedSystem {
    base: CsrMatrix,
    /// `conv_pos[e]`: position in `base` of scalar convection entry e for
    /// each component, or `usize::MAX` when eliminated.
    conv_pos: Vec<Vec<usize>>,
    symbolic: SymbolicLu,
    mask: Vec<bool>,
}

/// Advances a [`FlowState`] with cached operators and factorizations.
pub struct Stepper<'a> {
    space: &'a TaylorHoodSpace,
    ops: &'a OperatorSet,
    params: SchemeParams,
    tabs: Vec<CellTabulation>,
    system: BorderedSystem,
    /// Step-2 component factorizations (modular scheme only).
    step2: Vec<LuFactorization>,
    /// (γ+α)G* − γG
    explicit_graddiv: CsrMatrix,
}

impl<'a> Stepper<'a> {
    pub fn new(space: &'a TaylorHoodSpace, ops: &'a OperatorSet, params: SchemeParams) -> Result<Self, SchemeError> {
        params.validate()?;
        let exec = params.execution;
        let tabs = tabulate_all(space, exec)?;
        let (k, nu, gamma, alpha) = (params.k, params.nu, params.gamma, params.alpha);
        let mut terms = vec![(1.0 / k, &ops.mass), (nu, &ops.stiffness)];
        match params.scheme {
            Scheme::ModularSgd => {}
            Scheme::Sgd1 => terms.push((gamma + alpha, &ops.graddiv_diag)),
            Scheme::CoupledGraddiv => terms.push((gamma, &ops.graddiv_full)),
        }
        let velocity_block = CsrMatrix::linear_combination(&terms);
        let pattern = convection_scalar_cached(space, &tabs, &vec![0.0; space.n_velocity()], Execution::Serial);
        let system = bordered_system(space, ops, &velocity_block, &pattern).map_err(|source| SchemeError::Solve { step: 0, source })?;

        let step2 = if params.scheme == Scheme::ModularSgd {
            let scalar_mask: Vec<bool> = (0..space.n_scalar()).map(|i| space.is_boundary_node(i)).collect();
            let s = k * (gamma + alpha);
            let blocks = exec.map(space.dim(), |c| -> Result<LuFactorization, SchemeError> {
                let a = CsrMatrix::linear_combination(&[(1.0, &ops.mass_scalar), (s, &ops.axis_stiffness[c])]);
                let a = eliminate(&a, &scalar_mask);
                LuFactorization::factor(&SymbolicLu::analyze(&a), &a)
                    .map_err(|source| SchemeError::Step2Singular { component: c, source })
            });
            blocks.into_iter().collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        let explicit_graddiv = CsrMatrix::linear_combination(&[
            (gamma + alpha, &ops.graddiv_diag),
            (-gamma, &ops.graddiv_full),
        ]);
        Ok(Self {
            space,
            ops,
            params,
            tabs,
            system,
            step2,
            explicit_graddiv,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    /// Load vector at time t.
    pub fn load(&self, t: f64) -> Result<Vec<f64>, SchemeError> {
        Ok(load_cached(self.space, &self.tabs, self.params.forcing.as_ref(), t, self.params.execution)?)
    }

    /// Solves the bordered system with velocity right side `rhs` and
    /// convection about `w`. Returns (u, p, λ).
    fn bordered_solve(&self, w: &[f64], rhs: &[f64], step: usize) -> Result<(Vec<f64>, Vec<f64>, f64), SchemeError> {
        let sys = &self.system;
        let conv = convection_scalar_cached(self.space, &self.tabs, w, self.params.execution);
        let mut a = sys.base.clone();
        {
            let vals = a.values_mut();
            for positions in &sys.conv_pos {
                for (e, &pos) in positions.iter().enumerate() {
                    if pos != usize::MAX {
                        vals[pos] += conv.values()[e];
                    }
                }
            }
        }
        let nu = self.space.n_velocity();
        let mut b = vec![0.0; a.nrows()];
        for (i, r) in rhs.iter().enumerate() {
            b[i] = if sys.mask[i] { 0.0 } else { *r };
        }
        if !a.values().iter().chain(&b).all(|v| v.is_finite()) {
            return Err(SchemeError::BlowUp { step });
        }
        let lu = LuFactorization::factor(&sys.symbolic, &a).map_err(|source| SchemeError::Solve { step, source })?;
        let x = lu.solve(&b).map_err(|source| SchemeError::Solve { step, source })?;
        let np = self.space.n_pressure();
        Ok((x[..nu].to_vec(), x[nu..nu + np].to_vec(), x[nu + np]))
    }

    /// Step 1 of the modular scheme: (ũ^{n+1}, p^{n+1}, λ).
    pub fn step1_momentum(&self, state: &FlowState) -> Result<(Vec<f64>, Vec<f64>, f64), SchemeError> {
        let step = state.n + 1;
        let rhs = self.inertia_rhs(state, step)?;
        self.bordered_solve(&state.u_next, &rhs, step)
    }

    /// (1/k)M uⁿ + load(t^{n+1})
    fn inertia_rhs(&self, state: &FlowState, step: usize) -> Result<Vec<f64>, SchemeError> {
        let mut rhs = self.ops.mass.spmv(&state.u_next).map_err(|source| SchemeError::Solve { step, source })?;
        let load = self.load(self.params.time(step))?;
        let inv_k = 1.0 / self.params.k;
        for (r, f) in rhs.iter_mut().zip(&load) {
            *r = inv_k * *r + f;
        }
        Ok(rhs)
    }

    /// Step 2: component-wise solves for u^{n+1} given ũ^{n+1} and uⁿ.
    pub fn step2_sparse_graddiv(&self, u_tilde: &[f64], u_prev: &[f64]) -> Result<Vec<f64>, SchemeError> {
        if self.step2.is_empty() {
            return Err(SchemeError::InvalidParams("Step 2 belongs to the modular scheme".into()));
        }
        let mut rhs = self.ops.mass.spmv(u_tilde).map_err(|source| SchemeError::Solve { step: 0, source })?;
        let explicit = self.explicit_graddiv.spmv(u_prev).map_err(|source| SchemeError::Solve { step: 0, source })?;
        let k = self.params.k;
        for (r, e) in rhs.iter_mut().zip(&explicit) {
            *r += k * e;
        }
        let ns = self.space.n_scalar();
        let space = self.space;
        let solved = self.params.execution.map(self.space.dim(), |c| {
            let mut b = rhs[c * ns..(c + 1) * ns].to_vec();
            for (i, v) in b.iter_mut().enumerate() {
                if space.is_boundary_node(i) {
                    *v = 0.0;
                }
            }
            self.step2[c].solve(&b)
        });
        let mut u = Vec::with_capacity(rhs.len());
        for (c, part) in solved.into_iter().enumerate() {
            u.extend(part.map_err(|source| SchemeError::Step2Singular { component: c, source })?);
        }
        Ok(u)
    }

    /// One-step sparse grad-div: (u^{n+1}, p^{n+1}, λ).
    pub fn step_sgd1(&self, state: &FlowState) -> Result<(Vec<f64>, Vec<f64>, f64), SchemeError> {
        let step = state.n + 1;
        let mut rhs = self.inertia_rhs(state, step)?;
        let explicit = self.explicit_graddiv.spmv(&state.u_next).map_err(|source| SchemeError::Solve { step, source })?;
        for (r, e) in rhs.iter_mut().zip(&explicit) {
            *r += e;
        }
        self.bordered_solve(&state.u_next, &rhs, step)
    }

    /// Coupled grad-div: (u^{n+1}, p^{n+1}, λ).
    pub fn step_coupled_graddiv(&self, state: &FlowState) -> Result<(Vec<f64>, Vec<f64>, f64), SchemeError> {
        let step = state.n + 1;
        let rhs = self.inertia_rhs(state, step)?;
        self.bordered_solve(&state.u_next, &rhs, step)
    }

    /// Advances `state` by one step of the configured scheme.
    pub fn advance(&self, state: &mut FlowState) -> Result<(), SchemeError> {
        let (u_tilde, u, p, lambda) = match self.params.scheme {
            Scheme::ModularSgd => {
                let (ut, p, l) = self.step1_momentum(state)?;
                let u = self.step2_sparse_graddiv(&ut, &state.u_next).map_err(|e| match e {
                    SchemeError::Solve { source, .. } => SchemeError::Solve { step: state.n + 1, source },
                    other => other,
                })?;
                (Some(ut), u, p, l)
            }
            Scheme::Sgd1 => {
                let (u, p, l) = self.step_sgd1(state)?;
                (None, u, p, l)
            }
            Scheme::CoupledGraddiv => {
                let (u, p, l) = self.step_coupled_graddiv(state)?;
                (None, u, p, l)
            }
        };
        state.u_prev = std::mem::replace(&mut state.u_next, u);
        state.u_tilde = u_tilde;
        state.p = p;
        state.lambda = lambda;
        state.n += 1;
        state.t = self.params.time(state.n);
        Ok(())
    }

    /// Diagnostics for the step that produced `state`.
    pub fn record(&self, state: &FlowState) -> Result<StepRecord, SchemeError> {
        let ops = self.ops;
        let u = &state.u_next;
        let pair: Vec<f64> = u.iter().zip(&state.u_prev).map(|(a, b)| a + b).collect();
        let mut rec = StepRecord {
            n: state.n,
            t: state.t,
            kinetic_energy: diagnostics::kinetic_energy(ops, u),
            div_norm: diagnostics::div_norm(ops, u),
            div_norm_sum: Some(diagnostics::div_norm(ops, &pair)),
            ..Default::default()
        };
        let p = &self.params;
        if let (Scheme::ModularSgd, Some(ut), true) = (p.scheme, &state.u_tilde, p.ledger) {
            let load = self.load(state.t)?;
            rec.load_pairing = Some(load.iter().zip(ut).map(|(f, v)| f * v).sum());
            if let Some(regime) = LedgerRegime::select(self.space.dim(), p.gamma, p.alpha) {
                let terms = diagnostics::energy_ledger(
                    ops,
                    regime,
                    &LedgerStep {
                        u_prev: &state.u_prev,
                        u_tilde: ut,
                        u_next: u,
                        load: &load,
                        k: p.k,
                        nu: p.nu,
                        gamma: p.gamma,
                        alpha: p.alpha,
                    },
                );
                rec.energy = Some(terms.energy_next);
                rec.dissipation = Some(terms.dissipation);
                rec.identity_residual = Some(terms.residual);
            }
        }
        Ok(rec)
    }
}

fn bordered_system(
    space: &TaylorHoodSpace,
    ops: &OperatorSet,
    velocity_block: &CsrMatrix,
    conv_pattern: &CsrMatrix,
) -> Result<BorderedSystem, SolveError> {
    let nu = space.n_velocity();
    let np = space.n_pressure();
    let n = nu + np + 1;
    let mut trip = Vec::with_capacity(velocity_block.nnz() + 2 * ops.div.nnz() + 2 * np);
    for i in 0..nu {
        let (cols, vals) = velocity_block.row(i);
        trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
    }
    // keep every convection position in the pattern
    let ns = space.n_scalar();
    for c in 0..space.dim() {
        for i in 0..ns {
            for &j in conv_pattern.row(i).0 {
                trip.push((c * ns + i, c * ns + j, 0.0));
            }
        }
    }
    for q in 0..np {
        let (cols, vals) = ops.div.row(q);
        for (&j, &v) in cols.iter().zip(vals) {
            trip.push((nu + q, j, -v));
            trip.push((j, nu + q, -v));
        }
        trip.push((nu + q, n - 1, ops.pressure_mean[q]));
        trip.push((n - 1, nu + q, ops.pressure_mean[q]));
    }
    let full = CsrMatrix::from_triplets(n, n, &trip);
    let mask = dirichlet_mask(n, space.dirichlet_velocity_dofs())?;
    let base = eliminate(&full, &mask);
    let conv_pos = (0..space.dim())
        .map(|c| {
            let mut pos = Vec::with_capacity(conv_pattern.nnz());
            for i in 0..ns {
                for &j in conv_pattern.row(i).0 {
                    let (gi, gj) = (c * ns + i, c * ns + j);
                    pos.push(if mask[gi] || mask[gj] {
                        usize::MAX
                    } else {
                        base.position(gi, gj).expect("convection entry outside pattern")
                    });
                }
            }
            pos
        })
        .collect();
    let symbolic = SymbolicLu::analyze(&base);
    Ok(BorderedSystem {
        base,
        conv_pos,
        symbolic,
        mask,
    })
}

/// Result of [`run_simulation`].
#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    pub records: Vec<StepRecord>,
    /// Step at which the state became non-finite or exceeded the
    /// kinetic-energy cap.
    pub blowup_step: Option<usize>,
    pub final_state: FlowState,
}

/// Runs a simulation from `initial` (rest when `None`), calling `observer`
/// after every step. The blow-up step is recorded and ends the run.
pub fn run_simulation<F>(
    space: &TaylorHoodSpace,
    ops: &OperatorSet,
    params: &SchemeParams,
    initial: Option<&[f64]>,
    mut observer: F,
) -> Result<SimulationOutcome, SchemeError>
where
    F: FnMut(&StepRecord, &FlowState),
{
    let stepper = Stepper::new(space, ops, params.clone())?;
    let mut state = match initial {
        Some(u) => {
            if u.len() != space.n_velocity() {
                return Err(SchemeError::InitialShape {
                    expected: space.n_velocity(),
                    found: u.len(),
                });
            }
            let mut u = u.to_vec();
            space.zero_boundary(&mut u);
            FlowState::from_velocity(u, space.n_pressure())
        }
        None => FlowState::at_rest(space.n_velocity(), space.n_pressure()),
    };
    let mut records = Vec::with_capacity(params.num_steps());
    let mut blowup_step = None;
    for _ in 0..params.num_steps() {
        match stepper.advance(&mut state) {
            Ok(()) => {}
            Err(SchemeError::BlowUp { step }) => {
                blowup_step = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
        let rec = stepper.record(&state)?;
        observer(&rec, &state);
        let blown = !state.is_finite() || !(rec.kinetic_energy <= BLOWUP_KINETIC_ENERGY);
        records.push(rec);
        if blown {
            blowup_step = Some(state.n);
            break;
        }
    }
    Ok(SimulationOutcome {
        records,
        blowup_step,
        final_state: state,
    })
}
