//! Step-length estimation by power iteration on F′(p̃)*F′(p̃).
//!
//! One application of the normal operator is one sensitivity solve plus one
//! adjoint solve. The Rayleigh quotient converges to ‖F′(p̃)‖²_op; the step
//! length is the classical Landweber bound `ω ≤ 1/‖F′‖²` scaled by a safety
//! factor. Smoothing is deliberately absent: the Riesz maps have operator norm
//! at most one, so the smoothed-update spectral radius is bounded by the
//! unsmoothed one and the bound stays valid.

use super::ForwardMap;
use crate::error::Error;
use crate::linalg::Vec3;
use crate::model::{
    assemble_drift, gamma_adjoint_apply, gamma_derivative_apply, parameter_inner, Parameter,
    TimeIndexedField,
};
use crate::observation::observe;
use crate::pde::{drift_cofield, solve_adjoint, solve_sensitivity, StateField};
use crate::model::DriftField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Safety factor below the classical bound 1/‖F′‖².
pub const OMEGA_SAFETY: f64 = 0.9;
/// Extra halving applied when the power iteration did not settle.
const FALLBACK_SAFETY: f64 = 0.45;

#[derive(Debug, Clone, Copy)]
pub struct StepLengthEstimate {
    /// Recommended default step length.
    pub omega: f64,
    /// Estimated squared operator norm ‖F′(p̃)‖².
    pub norm_squared: f64,
    /// Whether the Rayleigh quotient settled within 1%.
    pub converged: bool,
    pub iterations: usize,
}

fn random_like(p: &Parameter, rng: &mut impl Rng) -> Parameter {
    let mut out = p.zeros_like();
    let mut fill = |v: &mut Vec3| {
        *v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
    };
    match &mut out {
        Parameter::FieldWaveform { h } => h.iter_mut().for_each(&mut fill),
        Parameter::EasyAxis { n } => n.iter_mut().for_each(&mut fill),
        Parameter::AnisotropyLandscape { phi } => match phi {
            TimeIndexedField::Static(f) => f.iter_mut().for_each(&mut fill),
            TimeIndexedField::PerStep(fs) => {
                fs.iter_mut().flat_map(|f| f.iter_mut()).for_each(&mut fill)
            }
        },
    }
    out
}

fn scale_parameter(p: &mut Parameter, s: f64) {
    let mut acc = p.zeros_like();
    acc.scaled_add(s, p).expect("same shape");
    *p = acc;
}

/// One application of the normal operator h ↦ Γ′* S′* G* G S′ Γ′ h.
fn apply_normal(
    h: &Parameter,
    p_tilde: &Parameter,
    b: &DriftField,
    u: &StateField,
    problem: &ForwardMap,
) -> crate::Result<Parameter> {
    let db = gamma_derivative_apply(p_tilde, h, &problem.ctx)?;
    let v = solve_sensitivity(b, &db, u, problem.ops, problem.ctx.time_grid, &problem.solver)?;
    let yv = observe(&v, problem.mode, problem.ctx.mesh);
    let source = crate::observation::observe_adjoint(&yv, problem.ctx.mesh)?;
    let psi = solve_adjoint(b, &source, problem.ops, problem.ctx.time_grid, &problem.solver)?;
    let w = drift_cofield(u, &psi, problem.ops);
    gamma_adjoint_apply(p_tilde, &w, &problem.ctx)
}

/// Estimates ω for the Landweber iteration at the reference parameter
/// `p_tilde`. `trials` bounds the power-iteration count; `seed` fixes the
/// random start so repeated runs are reproducible. On non-convergence the
/// estimate falls back to half the usual safety factor.
pub fn estimate_step_length(
    p_tilde: &Parameter,
    problem: &ForwardMap,
    trials: usize,
    seed: u64,
) -> crate::Result<StepLengthEstimate> {
    if trials == 0 {
        return Err(Error::Config("step-length estimation needs trials >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = assemble_drift(p_tilde, &problem.ctx)?;
    let u = crate::pde::solve_forward(
        &b,
        problem.u0,
        problem.ops,
        problem.ctx.time_grid,
        &problem.solver,
    )?;

    let mut h = random_like(p_tilde, &mut rng);
    let norm0 = parameter_inner(&h, &h, &problem.ctx)?.sqrt();
    if norm0 == 0.0 {
        return Err(Error::Numerical("degenerate random start in power iteration".into()));
    }
    scale_parameter(&mut h, 1.0 / norm0);

    let mut nu = 0.0_f64;
    let mut nu_prev;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=trials {
        iterations = it;
        let g = apply_normal(&h, p_tilde, &b, &u, problem)?;
        nu_prev = nu;
        nu = parameter_inner(&g, &h, &problem.ctx)?;
        let gnorm = parameter_inner(&g, &g, &problem.ctx)?.sqrt();
        if gnorm <= 0.0 || nu <= 0.0 {
            return Err(Error::Numerical(
                "power iteration collapsed: derivative acts as zero on the start vector".into(),
            ));
        }
        h = g;
        scale_parameter(&mut h, 1.0 / gnorm);
        if it > 1 && (nu - nu_prev).abs() <= 0.01 * nu {
            converged = true;
            break;
        }
    }

    let omega = if converged { OMEGA_SAFETY / nu } else { FALLBACK_SAFETY / nu };
    Ok(StepLengthEstimate { omega, norm_squared: nu, converged, iterations })
}
