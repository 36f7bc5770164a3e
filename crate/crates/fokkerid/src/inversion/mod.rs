//! Nonlinear Landweber iteration with Armijo backtracking, Riesz smoothing,
//! discrepancy-principle bookkeeping, and step-length estimation.
//!
//! One iteration: solve the adjoint equation for the current residual, pull
//! the drift cofield back through Γ′(p)*, smooth (unless bootstrapping an
//! initial value), then backtrack `p − α^{j−1} ω g` until the relative
//! discrepancy decrease exceeds TOL. Accepted discrepancies are strictly
//! decreasing by construction; the iteration stops at `k_max`, on Armijo
//! exhaustion (stalled), or when `‖F(p) − y^δ‖ ≤ τ δ` fires (recorded and,
//! when iterates are stored for best-iterate analysis, the run continues).

pub mod smoothing;
mod step_length;

pub use step_length::{estimate_step_length, StepLengthEstimate};

use crate::error::Error;
use crate::geometry::DiscreteOperators;
use crate::model::{
    assemble_drift, gamma_adjoint_apply, parameter_inner, CaseTag, DriftContext, Parameter,
    TimeIndexedField,
};
use crate::observation::{observe, observe_adjoint, y_norm, ObservationMode, ObservationSeries};
use crate::pde::{drift_cofield, solve_adjoint, solve_forward, SolverOptions, StateField};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// The discrete forward operator F = G ∘ S ∘ Γ on a fixed mesh/grid.
pub struct ForwardMap<'a> {
    pub ctx: DriftContext<'a>,
    pub ops: &'a DiscreteOperators<'a>,
    pub u0: &'a [f64],
    pub mode: ObservationMode,
    pub solver: SolverOptions,
}

impl ForwardMap<'_> {
    pub fn apply(&self, p: &Parameter) -> crate::Result<(StateField, ObservationSeries)> {
        let b = assemble_drift(p, &self.ctx)?;
        let u = solve_forward(&b, self.u0, self.ops, self.ctx.time_grid, &self.solver)?;
        let y = observe(&u, self.mode, self.ctx.mesh);
        Ok((u, y))
    }

    pub fn observe_only(&self, p: &Parameter) -> crate::Result<ObservationSeries> {
        Ok(self.apply(p)?.1)
    }
}

/// Landweber configuration (algorithm inputs plus smoothing strengths).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LandweberConfig {
    /// Default step length ω; `None` means estimate via power iteration.
    pub omega: Option<f64>,
    /// Armijo reduction factor α_A ∈ (0,1).
    pub armijo_factor: f64,
    /// Maximum Armijo trials per iteration.
    pub j_max: usize,
    /// Relative-decrease acceptance tolerance.
    pub tol: f64,
    /// Maximum outer iterations (iteration 1 is the initial guess).
    pub k_max: usize,
    /// Discrepancy-principle factor τ > 1.
    pub tau: f64,
    /// Time-smoothing strength; `None` = T/10.
    pub epsilon_time: Option<f64>,
    /// Space-smoothing strength; `None` = mean mesh diameter.
    pub epsilon_space: Option<f64>,
    /// Bootstrap mode: smoothing disabled (easy-axis initial-value search).
    pub find_initial_value: bool,
    /// Keep the full iterate history in the run record.
    pub store_iterates: bool,
    /// k_max of the bootstrap run.
    pub bootstrap_k_max: usize,
    /// Power-iteration budget for the ω estimate.
    pub power_iterations: usize,
}

impl Default for LandweberConfig {
    fn default() -> Self {
        LandweberConfig {
            omega: None,
            armijo_factor: 0.7,
            j_max: 15,
            tol: 1e-4,
            k_max: 400,
            tau: 1.1,
            epsilon_time: None,
            epsilon_space: None,
            find_initial_value: false,
            store_iterates: false,
            bootstrap_k_max: 8,
            power_iterations: 30,
        }
    }
}

impl LandweberConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(Error::Config(format!(
                "armijo_factor must be in (0,1), got {}",
                self.armijo_factor
            )));
        }
        if !(self.tau > 1.0) {
            return Err(Error::Config(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0) {
                return Err(Error::Config(format!("omega must be positive, got {w}")));
            }
        }
        if self.j_max == 0 || self.k_max == 0 {
            return Err(Error::Config("j_max and k_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolved_epsilon_time(&self, problem: &ForwardMap) -> f64 {
        self.epsilon_time.unwrap_or(problem.ctx.time_grid.t_end / 10.0)
    }

    pub fn resolved_epsilon_space(&self, problem: &ForwardMap) -> f64 {
        self.epsilon_space.unwrap_or_else(|| problem.ctx.mesh.mean_diameter())
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Discrepancy principle fired and the run was not asked to continue.
    DiscrepancyStop,
    /// No Armijo trial achieved the required relative decrease.
    Stalled,
    /// Iteration budget exhausted.
    MaxIterations,
}

/// One accepted iteration (k = 1 is the initial guess evaluation).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub discrepancy: f64,
    /// Accepted Armijo trial index j (0 for the initial record).
    pub armijo_steps: usize,
    /// Step scale α^{j−1}·ω actually applied (0 for the initial record).
    pub step_scale: f64,
    /// Wall-clock seconds spent on this iteration.
    pub wall_time: f64,
    /// Relative L² parameter error vs ground truth, when supplied.
    pub error_l2: Option<f64>,
}

/// Reconstruction outcome: discrepancy trace, stopping bookkeeping, iterates.
pub struct ReconstructionRun {
    pub config: LandweberConfig,
    pub status: RunStatus,
    pub trace: Vec<IterationRecord>,
    /// Final accepted iterate.
    pub final_parameter: Parameter,
    /// Noise level δ the discrepancy principle compared against.
    pub delta: f64,
    /// Step length actually used.
    pub omega_used: f64,
    /// First k with ‖F(p_k) − y^δ‖ ≤ τδ, if reached.
    pub discrepancy_stop_index: Option<usize>,
    pub discrepancy_parameter: Option<Parameter>,
    /// Index/iterate of minimal parameter error (needs ground truth).
    pub best_index: Option<usize>,
    pub best_parameter: Option<Parameter>,
    /// Full history when `store_iterates` (parallel to `trace`).
    pub iterates: Vec<Parameter>,
}

impl ReconstructionRun {
    pub fn final_discrepancy(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.discrepancy)
    }

    /// Discrepancy-principle iterate with the δ = 0 fallback: when the
    /// principle cannot fire, the final accepted iterate stands in.
    pub fn discrepancy_choice(&self) -> (&Parameter, usize) {
        match (&self.discrepancy_parameter, self.discrepancy_stop_index) {
            (Some(p), Some(k)) => (p, k),
            _ => (&self.final_parameter, self.trace.last().map_or(1, |r| r.k)),
        }
    }
}

/// Relative L²(0,T) distance between two same-case parameters, with case-3
/// samples normalized to unit length and sign-aligned to the reference first
/// (reporting convention: the drift is even in n, so ±n are the same axis and
/// only the direction line is identifiable).
pub fn relative_parameter_error(
    p: &Parameter,
    truth: &Parameter,
    ctx: &DriftContext,
) -> crate::Result<f64> {
    let (pn, tn) = comparison_pair(p, truth);
    let mut diff = pn.clone();
    diff.scaled_add(-1.0, &tn)?;
    let num = parameter_inner(&diff, &diff, ctx)?.max(0.0).sqrt();
    let den = parameter_inner(&tn, &tn, ctx)?.max(0.0).sqrt();
    Ok(num / den.max(1e-300))
}

fn normalize_samples(n: &[crate::linalg::Vec3]) -> Vec<crate::linalg::Vec3> {
    n.iter()
        .map(|v| {
            let norm = v.norm();
            if norm > 1e-300 {
                *v * (1.0 / norm)
            } else {
                *v
            }
        })
        .collect()
}

/// Prepares (candidate, reference) for error evaluation. Easy-axis samples are
/// normalized on both sides and the candidate's per-sample sign is chosen to
/// match the reference axis.
pub(crate) fn comparison_pair(p: &Parameter, truth: &Parameter) -> (Parameter, Parameter) {
    match (p, truth) {
        (Parameter::EasyAxis { n }, Parameter::EasyAxis { n: t }) => {
            let tn = normalize_samples(t);
            let mut pn = normalize_samples(n);
            for (v, r) in pn.iter_mut().zip(&tn) {
                if v.dot(*r) < 0.0 {
                    *v = -*v;
                }
            }
            (Parameter::EasyAxis { n: pn }, Parameter::EasyAxis { n: tn })
        }
        _ => (p.clone(), truth.clone()),
    }
}

/// Adjoint-based gradient of ½‖F(p) − y^δ‖² in its Riesz-smoothed
/// representation (raw L² representer when smoothing is disabled because the
/// run bootstraps an initial value).
///
/// `residual` must be `F(p) − y_delta` for the supplied `forward_state`.
pub fn compute_gradient(
    p: &Parameter,
    residual: &ObservationSeries,
    forward_state: &StateField,
    problem: &ForwardMap,
    config: &LandweberConfig,
) -> crate::Result<Parameter> {
    let raw = compute_gradient_unsmoothed(p, residual, forward_state, problem)?;
    if config.find_initial_value {
        return Ok(raw);
    }
    smooth_parameter(&raw, problem, config)
}

/// The exact adjoint chain Γ′(p)* applied to the drift cofield of ψ^residual,
/// before any smoothing: the L²-representer of the half-gradient.
pub fn compute_gradient_unsmoothed(
    p: &Parameter,
    residual: &ObservationSeries,
    forward_state: &StateField,
    problem: &ForwardMap,
) -> crate::Result<Parameter> {
    let b = assemble_drift(p, &problem.ctx)?;
    let source = observe_adjoint(residual, problem.ctx.mesh)?;
    let psi = solve_adjoint(&b, &source, problem.ops, problem.ctx.time_grid, &problem.solver)?;
    let w = drift_cofield(forward_state, &psi, problem.ops);
    gamma_adjoint_apply(p, &w, &problem.ctx)
}

/// Case-appropriate Riesz smoothing: time for the waveform cases, the
/// fourth-order spatial solve for the landscape (plus time when φ carries a
/// time axis).
pub fn smooth_parameter(
    g: &Parameter,
    problem: &ForwardMap,
    config: &LandweberConfig,
) -> crate::Result<Parameter> {
    let dt = problem.ctx.time_grid.dt();
    let eps_t = config.resolved_epsilon_time(problem);
    let eps_s = config.resolved_epsilon_space(problem);
    match g {
        Parameter::FieldWaveform { h } => Ok(Parameter::FieldWaveform {
            h: smoothing::riesz_smooth_time(h, dt, eps_t)?,
        }),
        Parameter::EasyAxis { n } => Ok(Parameter::EasyAxis {
            n: smoothing::riesz_smooth_time(n, dt, eps_t)?,
        }),
        Parameter::AnisotropyLandscape { phi } => match phi {
            TimeIndexedField::Static(f) => Ok(Parameter::AnisotropyLandscape {
                phi: TimeIndexedField::Static(smoothing::riesz_smooth_space(
                    f,
                    problem.ops,
                    eps_s,
                )?),
            }),
            TimeIndexedField::PerStep(fs) => {
                // tensor-product smoothing: spatial per slice, then time per cell
                let mut spatial: Vec<Vec<crate::linalg::Vec3>> = Vec::with_capacity(fs.len());
                for f in fs {
                    spatial.push(smoothing::riesz_smooth_space(f, problem.ops, eps_s)?);
                }
                let n_cells = spatial.first().map_or(0, |f| f.len());
                let mut out = spatial.clone();
                let mut series = vec![crate::linalg::Vec3::ZERO; fs.len()];
                for cell in 0..n_cells {
                    for (k, slice) in spatial.iter().enumerate() {
                        series[k] = slice[cell];
                    }
                    let smoothed = smoothing::riesz_smooth_time(&series, dt, eps_t)?;
                    for (k, v) in smoothed.into_iter().enumerate() {
                        out[k][cell] = v;
                    }
                }
                Ok(Parameter::AnisotropyLandscape { phi: TimeIndexedField::PerStep(out) })
            }
        },
    }
}

/// Runs the Landweber iteration from `p1` against measurement `y_delta` with
/// noise level `delta`. Ground truth, when given, enables best-iterate
/// tracking. See the module docs for the acceptance rule.
pub fn landweber_run(
    y_delta: &ObservationSeries,
    p1: &Parameter,
    config: &LandweberConfig,
    problem: &ForwardMap,
    delta: f64,
    ground_truth: Option<&Parameter>,
) -> crate::Result<ReconstructionRun> {
    config.validate()?;
    if !y_delta.time_grid.matches(&problem.ctx.time_grid) {
        return Err(Error::Shape("measurement grid does not match solver grid".into()));
    }

    let omega = match config.omega {
        Some(w) => w,
        None => estimate_step_length(p1, problem, config.power_iterations, 0x5eed_f0cc)?.omega,
    };

    let mesh = problem.ctx.mesh;
    let start = Instant::now();
    let (mut u, mut y) = problem.apply(p1)?;
    let mut p = p1.clone();
    let mut disc = y_norm(&y.difference(y_delta)?, mesh);

    let error_of = |param: &Parameter| -> crate::Result<Option<f64>> {
        match ground_truth {
            Some(t) => Ok(Some(relative_parameter_error(param, t, &problem.ctx)?)),
            None => Ok(None),
        }
    };

    let mut trace = vec![IterationRecord {
        k: 1,
        discrepancy: disc,
        armijo_steps: 0,
        step_scale: 0.0,
        wall_time: start.elapsed().as_secs_f64(),
        error_l2: error_of(&p)?,
    }];
    let mut iterates = Vec::new();
    if config.store_iterates {
        iterates.push(p.clone());
    }

    let mut best_index = trace[0].error_l2.map(|_| 1usize);
    let mut best_error = trace[0].error_l2.unwrap_or(f64::INFINITY);
    let mut best_parameter = ground_truth.map(|_| p.clone());
    let mut dp_index: Option<usize> = None;
    let mut dp_parameter: Option<Parameter> = None;

    let threshold = config.tau * delta;
    if disc <= threshold {
        dp_index = Some(1);
        dp_parameter = Some(p.clone());
        if !config.store_iterates {
            return Ok(ReconstructionRun {
                config: config.clone(),
                status: RunStatus::DiscrepancyStop,
                trace,
                final_parameter: p,
                delta,
                omega_used: omega,
                discrepancy_stop_index: dp_index,
                discrepancy_parameter: dp_parameter,
                best_index,
                best_parameter,
                iterates,
            });
        }
    }

    let mut status = RunStatus::MaxIterations;
    for k in 2..=config.k_max {
        let iter_start = Instant::now();
        let residual = y.difference(y_delta)?;
        let grad = compute_gradient(&p, &residual, &u, problem, config)?;

        let mut accepted = false;
        for j in 1..=config.j_max {
            let scale = config.armijo_factor.powi(j as i32 - 1) * omega;
            let mut p_tmp = p.clone();
            p_tmp.scaled_add(-scale, &grad)?;
            let (u_tmp, y_tmp) = problem.apply(&p_tmp)?;
            let disc_tmp = y_norm(&y_tmp.difference(y_delta)?, mesh);
            if disc > 0.0 && (disc - disc_tmp) / disc > config.tol {
                p = p_tmp;
                u = u_tmp;
                y = y_tmp;
                disc = disc_tmp;
                trace.push(IterationRecord {
                    k,
                    discrepancy: disc,
                    armijo_steps: j,
                    step_scale: scale,
                    wall_time: iter_start.elapsed().as_secs_f64(),
                    error_l2: error_of(&p)?,
                });
                if config.store_iterates {
                    iterates.push(p.clone());
                }
                accepted = true;
                break;
            }
        }
        if !accepted {
            status = RunStatus::Stalled;
            break;
        }

        if let Some(err) = trace.last().unwrap().error_l2 {
            if err < best_error {
                best_error = err;
                best_index = Some(k);
                best_parameter = Some(p.clone());
            }
        }

        if dp_index.is_none() && disc <= threshold {
            dp_index = Some(k);
            dp_parameter = Some(p.clone());
            if !config.store_iterates {
                status = RunStatus::DiscrepancyStop;
                break;
            }
        }
    }

    Ok(ReconstructionRun {
        config: config.clone(),
        status,
        trace,
        final_parameter: p,
        delta,
        omega_used: omega,
        discrepancy_stop_index: dp_index,
        discrepancy_parameter: dp_parameter,
        best_index,
        best_parameter,
        iterates,
    })
}

/// Easy-axis initial-value bootstrap: a short smoothing-free Landweber run.
/// Pass-through when `config.find_initial_value` is false.
pub fn bootstrap_initial_value(
    y_delta: &ObservationSeries,
    p1: &Parameter,
    config: &LandweberConfig,
    problem: &ForwardMap,
    delta: f64,
) -> crate::Result<Parameter> {
    if !config.find_initial_value {
        return Ok(p1.clone());
    }
    if p1.case() != CaseTag::EasyAxis {
        return Err(Error::Config(
            "initial-value bootstrap is defined for the easy-axis case only".into(),
        ));
    }
    let mut boot = config.clone();
    boot.k_max = config.bootstrap_k_max;
    boot.store_iterates = false;
    let run = landweber_run(y_delta, p1, &boot, problem, delta, None)?;
    Ok(run.final_parameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{assemble_operators, build_icosphere};
    use crate::linalg::Vec3;
    use crate::model::gamma_derivative_apply;
    use crate::model::PhysicalConstants;
    use crate::observation::y_inner;
    use crate::pde::solve_sensitivity;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn unit_constants() -> PhysicalConstants {
        PhysicalConstants {
            gamma: 2.0,
            alpha_hat: 1.0,
            mu0: 1.0,
            k_anis: 0.5,
            m_s: 1.0,
            lambda: 1.0,
        }
    }

    fn uniform_density(n_cells: usize) -> Vec<f64> {
        vec![1.0 / (4.0 * PI); n_cells]
    }

    fn random_series(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<Vec3> {
        (0..len)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                )
            })
            .collect()
    }

    #[test]
    fn gradient_matches_sensitivity_pairing() {
        // ⟨F'(p)h, z⟩_Y = ⟨h, unsmoothed gradient⟩_P on a level-2 mesh
        let mesh = build_icosphere(2).unwrap();
        let consts = unit_constants();
        let ops = assemble_operators(&mesh, consts.lambda).unwrap();
        let grid = crate::TimeGrid::new(1.0, 12).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(51);
        let u0 = uniform_density(mesh.n_cells());
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let problem = ForwardMap {
            ctx,
            ops: &ops,
            u0: &u0,
            mode: ObservationMode::Expectation,
            solver: SolverOptions::default(),
        };
        for trial in 0..5 {
            let p = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 1.0) };
            let h = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 1.0) };
            let (u, _y) = problem.apply(&p).unwrap();
            let z = ObservationSeries {
                values: crate::observation::ObservationValues::Expectation(random_series(
                    &mut rng,
                    grid.n_points(),
                    0.3,
                )),
                time_grid: grid,
            };
            let b = assemble_drift(&p, &problem.ctx).unwrap();
            let db = gamma_derivative_apply(&p, &h, &problem.ctx).unwrap();
            let v = solve_sensitivity(&b, &db, &u, &ops, grid, &problem.solver).unwrap();
            let gv = observe(&v, ObservationMode::Expectation, &mesh);
            let lhs = y_inner(&gv, &z, &mesh).unwrap();
            let grad = compute_gradient_unsmoothed(&p, &z, &u, &problem).unwrap();
            let rhs = parameter_inner(&h, &grad, &problem.ctx).unwrap();
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
            assert!(rel < 1e-5, "trial {trial}: {lhs} vs {rhs} (rel {rel:.3e})");
        }
    }

    #[test]
    fn zero_residual_gives_fixed_point_run() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let ops = assemble_operators(&mesh, consts.lambda).unwrap();
        let grid = crate::TimeGrid::new(1.0, 8).unwrap();
        let u0 = uniform_density(mesh.n_cells());
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let problem = ForwardMap {
            ctx,
            ops: &ops,
            u0: &u0,
            mode: ObservationMode::Expectation,
            solver: SolverOptions::default(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(52);
        let p1 = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 0.5) };
        let y = problem.observe_only(&p1).unwrap();

        let config = LandweberConfig { omega: Some(1.0), ..LandweberConfig::default() };
        let run = landweber_run(&y, &p1, &config, &problem, 0.0, None).unwrap();
        assert_eq!(run.status, RunStatus::DiscrepancyStop);
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.discrepancy_stop_index, Some(1));
        assert_eq!(run.final_parameter, p1);
    }

    #[test]
    fn accepted_discrepancies_strictly_decrease() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let ops = assemble_operators(&mesh, consts.lambda).unwrap();
        let grid = crate::TimeGrid::new(1.0, 16).unwrap();
        let u0 = uniform_density(mesh.n_cells());
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let problem = ForwardMap {
            ctx,
            ops: &ops,
            u0: &u0,
            mode: ObservationMode::Expectation,
            solver: SolverOptions::default(),
        };
        let truth = Parameter::FieldWaveform {
            h: (0..grid.n_points())
                .map(|k| {
                    let t = grid.time(k);
                    Vec3::new((4.0 * t).sin(), (2.0 * t).cos(), 0.3)
                })
                .collect(),
        };
        let y = problem.observe_only(&truth).unwrap();
        let p1 = Parameter::FieldWaveform { h: vec![Vec3::ZERO; grid.n_points()] };
        let config = LandweberConfig { k_max: 40, ..LandweberConfig::default() };
        let run = landweber_run(&y, &p1, &config, &problem, 0.0, Some(&truth)).unwrap();
        assert!(run.trace.len() > 2, "no progress: {:?}", run.status);
        for pair in run.trace.windows(2) {
            assert!(
                pair[1].discrepancy < pair[0].discrepancy,
                "discrepancy not strictly decreasing: {} -> {}",
                pair[0].discrepancy,
                pair[1].discrepancy
            );
        }
        // error should drop substantially on this noiseless same-mesh problem
        let first = run.trace[0].error_l2.unwrap();
        let best = run
            .trace
            .iter()
            .filter_map(|r| r.error_l2)
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.5 * first, "error {first} -> best {best}");
        assert!(run.best_index.is_some());
    }

    #[test]
    fn bootstrap_pass_through_and_case_guard() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let ops = assemble_operators(&mesh, consts.lambda).unwrap();
        let grid = crate::TimeGrid::new(1.0, 6).unwrap();
        let u0 = uniform_density(mesh.n_cells());
        let bg = vec![Vec3::new(0.4, 0.0, 0.2); grid.n_points()];
        let ctx = DriftContext::new(&consts, &mesh, grid, Some(&bg));
        let problem = ForwardMap {
            ctx,
            ops: &ops,
            u0: &u0,
            mode: ObservationMode::Expectation,
            solver: SolverOptions::default(),
        };
        let p1 = Parameter::EasyAxis { n: vec![Vec3::new(1.0, 0.0, 0.0); grid.n_points()] };
        let y = problem.observe_only(&p1).unwrap();

        let config = LandweberConfig::default(); // find_initial_value = false
        let out = bootstrap_initial_value(&y, &p1, &config, &problem, 0.0).unwrap();
        assert_eq!(out, p1);

        let config_on = LandweberConfig {
            find_initial_value: true,
            omega: Some(0.1),
            ..LandweberConfig::default()
        };
        let wrong_case = Parameter::FieldWaveform { h: vec![Vec3::ZERO; grid.n_points()] };
        assert!(bootstrap_initial_value(&y, &wrong_case, &config_on, &problem, 0.0).is_err());
    }

    #[test]
    fn bootstrap_improves_discrepancy_against_rotating_axis() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let ops = assemble_operators(&mesh, consts.lambda).unwrap();
        let grid = crate::TimeGrid::new(1.0, 20).unwrap();
        let u0 = uniform_density(mesh.n_cells());
        let bg = vec![Vec3::new(0.5, 0.5, 0.5); grid.n_points()];
        let ctx = DriftContext::new(&consts, &mesh, grid, Some(&bg));
        let problem = ForwardMap {
            ctx,
            ops: &ops,
            u0: &u0,
            mode: ObservationMode::Expectation,
            solver: SolverOptions::default(),
        };
        let truth = Parameter::EasyAxis {
            n: (0..grid.n_points())
                .map(|k| {
                    let a = 2.0 * PI * grid.time(k) / grid.t_end;
                    Vec3::new(a.cos(), a.sin(), 0.0)
                })
                .collect(),
        };
        let y = problem.observe_only(&truth).unwrap();
        let p1 = Parameter::EasyAxis { n: vec![Vec3::new(1.0, 0.0, 0.0); grid.n_points()] };
        let disc_before = y_norm(
            &problem.observe_only(&p1).unwrap().difference(&y).unwrap(),
            &mesh,
        );
        let config = LandweberConfig {
            find_initial_value: true,
            bootstrap_k_max: 15,
            ..LandweberConfig::default()
        };
        let p_boot = bootstrap_initial_value(&y, &p1, &config, &problem, 0.0).unwrap();
        let disc_after = y_norm(
            &problem.observe_only(&p_boot).unwrap().difference(&y).unwrap(),
            &mesh,
        );
        assert!(
            disc_after < disc_before,
            "bootstrap did not improve: {disc_before} -> {disc_after}"
        );
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let c = LandweberConfig { armijo_factor: 1.5, ..LandweberConfig::default() };
        assert!(c.validate().is_err());
        let c = LandweberConfig { tau: 0.9, ..LandweberConfig::default() };
        assert!(c.validate().is_err());
        let c = LandweberConfig { omega: Some(-1.0), ..LandweberConfig::default() };
        assert!(c.validate().is_err());
    }
}
