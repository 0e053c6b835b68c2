//! Per-step diagnostics, energy ledgers and sweep statistics.

use thiserror::Error;

use crate::assembly::OperatorSet;

/// Relative tolerance below which a negative ‖·‖²_{B*} is rounding noise.
pub const SEMINORM_CLAMP: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("B* quadratic form is negative ({value:e}, scale {scale:e}); operators are inconsistent")]
    NegativeSeminorm { value: f64, scale: f64 },
    #[error("rate undefined for nonpositive or non-finite input ({0:e})")]
    NonPositive(f64),
    #[error("rate undefined for equal gamma values")]
    EqualGamma,
    #[error("no records to average")]
    Empty,
}

/// One row of a time series. Ledger fields are `None` where no ledger
/// applies (wrong regime or scheme) and on the initial state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    pub t: f64,
    pub kinetic_energy: f64,
    pub div_norm: f64,
    /// ‖∇·(u^{n+1} + uⁿ)‖
    pub div_norm_sum: Option<f64>,
    pub energy: Option<f64>,
    pub dissipation: Option<f64>,
    pub identity_residual: Option<f64>,
    /// (f^{n+1}, ũ^{n+1})
    pub load_pairing: Option<f64>,
}

/// ½ uᵀMu.
pub fn kinetic_energy(ops: &OperatorSet, u: &[f64]) -> f64 {
    0.5 * ops.mass.quadratic_form(u).max(0.0)
}

/// ‖∇·u‖.
pub fn div_norm(ops: &OperatorSet, u: &[f64]) -> f64 {
    ops.graddiv_full.quadratic_form(u).max(0.0).sqrt()
}

/// ‖v‖²_B = (γ+α)(G*v, v) − γ‖∇·v‖². Not clamped: negative when α < 2γ
/// is possible.
pub fn seminorm_b(ops: &OperatorSet, v: &[f64], gamma: f64, alpha: f64) -> f64 {
    ops.form_b(v, v, gamma, alpha)
}

/// ‖v‖²_{B*}, with round-off negatives clamped to zero.
pub fn seminorm_bstar(ops: &OperatorSet, v: &[f64], gamma: f64, alpha: f64) -> Result<f64, DiagnosticsError> {
    let value = ops.form_bstar(v, v, gamma, alpha);
    let scale = form_scale(ops, v, gamma, alpha);
    if value >= 0.0 {
        Ok(value)
    } else if value >= -SEMINORM_CLAMP * scale {
        Ok(0.0)
    } else {
        Err(DiagnosticsError::NegativeSeminorm { value, scale })
    }
}

/// Magnitude of the terms entering the B and B* forms, used for relative
/// tolerances.
pub fn form_scale(ops: &OperatorSet, v: &[f64], gamma: f64, alpha: f64) -> f64 {
    let gd = ops.graddiv_diag.quadratic_form(v).abs();
    let gf = ops.graddiv_full.quadratic_form(v).abs();
    (gamma + alpha) * gd + (gamma + (alpha - 2.0 * gamma).abs()) * gf
}

/// Which discrete energy balance a modular run satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LedgerRegime {
    /// 3d, 0.5γ ≤ α < 2γ: B*-ledger with the (2γ−α)/6 pair-sum term.
    Intermediate,
    /// 3d, α ≥ 2γ: B-ledger.
    Strong,
    /// 2d, α = 0: inequality, residual ≤ 0.
    Planar,
}

impl LedgerRegime {
    /// The ledger guaranteed for a modular run, if any.
    pub fn select(dim: usize, gamma: f64, alpha: f64) -> Option<Self> {
        match dim {
            3 if alpha >= 2.0 * gamma => Some(LedgerRegime::Strong),
            3 if alpha >= 0.5 * gamma => Some(LedgerRegime::Intermediate),
            2 if alpha == 0.0 => Some(LedgerRegime::Planar),
            _ => None,
        }
    }

    /// True when the residual must vanish; false for a one-sided bound.
    pub fn is_identity(self) -> bool {
        !matches!(self, LedgerRegime::Planar)
    }
}

/// Inputs to one step of the ledger.
pub struct LedgerStep<'a> {
    pub u_prev: &'a [f64],
    pub u_tilde: &'a [f64],
    pub u_next: &'a [f64],
    /// Load vector at t^{n+1}.
    pub load: &'a [f64],
    pub k: f64,
    pub nu: f64,
    pub gamma: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerTerms {
    pub energy_prev: f64,
    pub energy_next: f64,
    pub dissipation: f64,
    pub load_pairing: f64,
    /// E^{n+1} − Eⁿ + 2kD^{n+1} − 2k(f, ũ^{n+1})
    pub residual: f64,
}

/// Ledger energy of a single state.
pub fn ledger_energy(ops: &OperatorSet, regime: LedgerRegime, u: &[f64], k: f64, gamma: f64, alpha: f64) -> f64 {
    let l2 = ops.mass.quadratic_form(u);
    match regime {
        LedgerRegime::Intermediate => {
            l2 + k * ops.form_bstar(u, u, gamma, alpha)
                + k * (2.0 * gamma - alpha) / 3.0 * ops.graddiv_full.quadratic_form(u)
        }
        LedgerRegime::Strong => l2 + k * ops.form_b(u, u, gamma, alpha),
        LedgerRegime::Planar => l2 + k * gamma * ops.graddiv_diag.quadratic_form(u),
    }
}

pub fn energy_ledger(ops: &OperatorSet, regime: LedgerRegime, s: &LedgerStep<'_>) -> LedgerTerms {
    let (k, gamma, alpha) = (s.k, s.gamma, s.alpha);
    let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let step1 = sub(s.u_tilde, s.u_prev);
    let step2 = sub(s.u_next, s.u_tilde);
    let jump = sub(s.u_next, s.u_prev);
    let mut d = s.nu * ops.stiffness.quadratic_form(s.u_tilde)
        + (ops.mass.quadratic_form(&step1) + ops.mass.quadratic_form(&step2)) / (2.0 * k);
    match regime {
        LedgerRegime::Intermediate => {
            let pair: Vec<f64> = s.u_next.iter().zip(s.u_prev).map(|(x, y)| x + y).collect();
            d += 0.5 * ops.form_bstar(&jump, &jump, gamma, alpha)
                + 2.0 / 3.0 * (alpha - 0.5 * gamma) * ops.graddiv_full.quadratic_form(s.u_next)
                + (2.0 * gamma - alpha) / 6.0 * ops.graddiv_full.quadratic_form(&pair);
        }
        LedgerRegime::Strong => {
            d += gamma * ops.graddiv_full.quadratic_form(s.u_next) + 0.5 * ops.form_b(&jump, &jump, gamma, alpha);
        }
        LedgerRegime::Planar => {}
    }
    let energy_prev = ledger_energy(ops, regime, s.u_prev, k, gamma, alpha);
    let energy_next = ledger_energy(ops, regime, s.u_next, k, gamma, alpha);
    let load_pairing: f64 = s.load.iter().zip(s.u_tilde).map(|(f, u)| f * u).sum();
    LedgerTerms {
        energy_prev,
        energy_next,
        dissipation: d,
        load_pairing,
        residual: energy_next - energy_prev + 2.0 * k * d - 2.0 * k * load_pairing,
    }
}

/// (1/N) Σ ‖∇·uⁿ‖² over the records.
pub fn time_average_div(records: &[StepRecord]) -> Result<f64, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    Ok(records.iter().map(|r| r.div_norm * r.div_norm).sum::<f64>() / records.len() as f64)
}

/// Convergence rate ln(q₂/q₁) / ln(γ₂/γ₁).
pub fn rate(q1: f64, q2: f64, gamma1: f64, gamma2: f64) -> Result<f64, DiagnosticsError> {
    for v in [q1, q2, gamma1, gamma2] {
        if !v.is_finite() || v <= 0.0 {
            return Err(DiagnosticsError::NonPositive(v));
        }
    }
    if gamma1 == gamma2 {
        return Err(DiagnosticsError::EqualGamma);
    }
    Ok((q2 / q1).ln() / (gamma2 / gamma1).ln())
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64, DiagnosticsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(DiagnosticsError::Empty);
    }
    for &v in x.iter().chain(y) {
        if v.is_nan() || v <= 0.0 {
            return Err(DiagnosticsError::NonPositive(v));
        }
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(DiagnosticsError::EqualGamma);
    }
    Ok(sxy / sxx)
}

/// One row of a γ-sweep summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub alpha: f64,
    pub avg_div_sq: f64,
    pub final_div: f64,
    /// Rate against the previous row; `None` on the first row.
    pub rate_avg: Option<f64>,
    pub rate_final: Option<f64>,
    pub blowup_step: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    /// Appends a run and computes rates against the previous row when both
    /// are defined.
    pub fn push(&mut self, gamma: f64, alpha: f64, records: &[StepRecord], blowup_step: Option<usize>) {
        let avg_div_sq = time_average_div(records).unwrap_or(f64::NAN);
        let final_div = records.last().map_or(f64::NAN, |r| r.div_norm);
        let (rate_avg, rate_final) = match self.rows.last() {
            Some(prev) => (
                rate(prev.avg_div_sq, avg_div_sq, prev.gamma, gamma).ok(),
                rate(prev.final_div, final_div, prev.gamma, gamma).ok(),
            ),
            None => (None, None),
        };
        self.rows.push(SweepRow {
            gamma,
            alpha,
            avg_div_sq,
            final_div,
            rate_avg,
            rate_final,
            blowup_step,
        });
    }
}
