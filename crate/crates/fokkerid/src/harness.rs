//! Synthetic experiments: scenario presets, two-grid measurement generation
//! with relative Gaussian noise, and reconstruction error metrics.
//!
//! The two-grid protocol guards against inverse crime: ground-truth data is
//! produced on the fine mesh, interpolated to the coarse mesh on which the
//! inversion runs, and the residual mismatch between that data and the coarse
//! forward model is recorded (it is strictly positive by construction and
//! doubles as the effective δ for noiseless discrepancy stopping).

use crate::error::Error;
use crate::geometry::{assemble_operators, build_icosphere, InterpolationMap, SphereMesh};
use crate::inversion::{relative_parameter_error, ReconstructionRun};
use crate::linalg::Vec3;
use crate::model::{CaseTag, DriftContext, Parameter, PhysicalConstants, TimeIndexedField};
use crate::observation::{
    observe, sup_norm, y_norm, ObservationMode, ObservationSeries, ObservationValues,
};
use crate::pde::{solve_forward, SolverOptions, StateField};
use crate::TimeGrid;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SCENARIO_FORMAT: &str = "FOKKERID-SCENARIO-v1";

/// One sinusoidal component of a waveform axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SinusoidAxis {
    /// Peak amplitude in mT (tesla-equivalent μ₀H; converted to A/m).
    pub amplitude_mt: f64,
    /// Cycles over the full horizon T.
    pub cycles: f64,
    /// Phase offset in radians.
    pub phase: f64,
}

/// Synthesizable field waveform (applied field, in mT units on disk).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformSpec {
    Zero,
    Constant { amplitude_mt: f64, direction: [f64; 3] },
    /// Independent sinusoid per axis (x, y, z).
    SinusoidMix { axes: [SinusoidAxis; 3] },
}

impl WaveformSpec {
    /// Samples in A/m on the grid.
    pub fn samples(&self, grid: &TimeGrid, mu0: f64) -> Vec<Vec3> {
        let to_field = 1e-3 / mu0; // mT -> A/m
        match self {
            WaveformSpec::Zero => vec![Vec3::ZERO; grid.n_points()],
            WaveformSpec::Constant { amplitude_mt, direction } => {
                let d = Vec3::from_array(*direction).normalized();
                vec![d * (amplitude_mt * to_field); grid.n_points()]
            }
            WaveformSpec::SinusoidMix { axes } => (0..grid.n_points())
                .map(|k| {
                    let s = grid.time(k) / grid.t_end;
                    let comp = |a: &SinusoidAxis| {
                        a.amplitude_mt * to_field * (2.0 * PI * a.cycles * s + a.phase).sin()
                    };
                    Vec3::new(comp(&axes[0]), comp(&axes[1]), comp(&axes[2]))
                })
                .collect(),
        }
    }
}

/// Synthesizable easy-axis trajectory (dimensionless unit vectors).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisSpec {
    Constant { direction: [f64; 3] },
    /// Uniform rotation in the xy-plane, `turns` full revolutions over T.
    RotationXy { turns: f64 },
}

impl AxisSpec {
    pub fn samples(&self, grid: &TimeGrid) -> Vec<Vec3> {
        match self {
            AxisSpec::Constant { direction } => {
                vec![Vec3::from_array(*direction).normalized(); grid.n_points()]
            }
            AxisSpec::RotationXy { turns } => (0..grid.n_points())
                .map(|k| {
                    let a = 2.0 * PI * turns * grid.time(k) / grid.t_end;
                    Vec3::new(a.cos(), a.sin(), 0.0)
                })
                .collect(),
        }
    }
}

/// Synthesizable static anisotropy landscape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LandscapeSpec {
    /// Uniaxial landscape φ(m) = (mᵀn)n for a fixed axis n.
    Uniaxial { axis: [f64; 3] },
}

impl LandscapeSpec {
    pub fn samples(&self, mesh: &SphereMesh) -> Vec<Vec3> {
        match self {
            LandscapeSpec::Uniaxial { axis } => {
                let n = Vec3::from_array(*axis).normalized();
                mesh.circumcenters.iter().map(|&c| n * c.dot(n)).collect()
            }
        }
    }
}

/// Case-tagged synthesizable parameter description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "case", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterSpec {
    Field { waveform: WaveformSpec },
    Landscape { landscape: LandscapeSpec },
    Axis { axis: AxisSpec },
}

impl ParameterSpec {
    pub fn case(&self) -> CaseTag {
        match self {
            ParameterSpec::Field { .. } => CaseTag::FieldWaveform,
            ParameterSpec::Landscape { .. } => CaseTag::AnisotropyLandscape,
            ParameterSpec::Axis { .. } => CaseTag::EasyAxis,
        }
    }

    pub fn synthesize(
        &self,
        mesh: &SphereMesh,
        grid: &TimeGrid,
        constants: &PhysicalConstants,
    ) -> Parameter {
        match self {
            ParameterSpec::Field { waveform } => {
                Parameter::FieldWaveform { h: waveform.samples(grid, constants.mu0) }
            }
            ParameterSpec::Landscape { landscape } => Parameter::AnisotropyLandscape {
                phi: TimeIndexedField::Static(landscape.samples(mesh)),
            },
            ParameterSpec::Axis { axis } => Parameter::EasyAxis { n: axis.samples(grid) },
        }
    }
}

/// Fully specified synthetic experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Format tag, always [`SCENARIO_FORMAT`].
    pub format: String,
    pub name: String,
    pub seed: u64,
    pub fine_level: u32,
    pub coarse_level: u32,
    pub t_end: f64,
    pub n_steps: usize,
    pub constants: PhysicalConstants,
    pub observation: ObservationMode,
    /// Relative noise levels (fractions of ‖y‖_∞).
    pub noise_levels: Vec<f64>,
    pub ground_truth: ParameterSpec,
    pub initial_guess: ParameterSpec,
    /// Background applied field for cases 2 and 3.
    pub background: Option<WaveformSpec>,
}

impl Scenario {
    pub fn case(&self) -> CaseTag {
        self.ground_truth.case()
    }

    pub fn time_grid(&self) -> crate::Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.n_steps)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.format != SCENARIO_FORMAT {
            return Err(Error::Config(format!(
                "scenario format {:?} is not {SCENARIO_FORMAT:?}",
                self.format
            )));
        }
        self.constants.validate()?;
        self.time_grid()?;
        if self.fine_level <= self.coarse_level {
            return Err(Error::Config(format!(
                "fine level {} must exceed coarse level {}",
                self.fine_level, self.coarse_level
            )));
        }
        if self.fine_level > crate::geometry::MAX_LEVEL {
            return Err(Error::Config(format!("fine level {} out of range", self.fine_level)));
        }
        if self.noise_levels.iter().any(|&l| !(0.0..1.0).contains(&l)) {
            return Err(Error::Config("noise levels must lie in [0, 1)".into()));
        }
        if self.ground_truth.case() != self.initial_guess.case() {
            return Err(Error::Config("ground truth and initial guess cases differ".into()));
        }
        if self.case() != CaseTag::FieldWaveform && self.background.is_none() {
            return Err(Error::Config("cases 2 and 3 need a background waveform".into()));
        }
        Ok(())
    }

    /// Uniform probability density on the given mesh.
    pub fn initial_density(&self, mesh: &SphereMesh) -> Vec<f64> {
        vec![1.0 / (4.0 * PI); mesh.n_cells()]
    }

    pub fn background_samples(&self, grid: &TimeGrid) -> Option<Vec<Vec3>> {
        self.background.as_ref().map(|w| w.samples(grid, self.constants.mu0))
    }
}

/// Physical constants used by all presets (magnetite-like particle).
pub fn default_constants() -> PhysicalConstants {
    PhysicalConstants {
        gamma: 1.7608596e11,
        alpha_hat: 0.1,
        mu0: 4.0e-7 * PI,
        k_anis: 1000.0,
        m_s: 474.0e3,
        // diffusion comparable to the 10 mT drift rate γ̃α̂·(10 mT/μ₀)·μ₀ ≈ 1.7e8 s⁻¹
        lambda: 1.0e8,
    }
}

const PRESET_T_END: f64 = 2.0e-7;
const PRESET_STEPS: usize = 200;

/// Case 1: reconstruct a three-axis field waveform, no anisotropy.
pub fn preset_case1() -> Scenario {
    Scenario {
        format: SCENARIO_FORMAT.into(),
        name: "case1-field-waveform".into(),
        seed: 7,
        fine_level: 5,
        coarse_level: 4,
        t_end: PRESET_T_END,
        n_steps: PRESET_STEPS,
        constants: default_constants(),
        observation: ObservationMode::Expectation,
        noise_levels: vec![0.05],
        ground_truth: ParameterSpec::Field {
            waveform: WaveformSpec::SinusoidMix {
                axes: [
                    SinusoidAxis { amplitude_mt: 10.0, cycles: 1.0, phase: 0.0 },
                    SinusoidAxis { amplitude_mt: 8.0, cycles: 2.0, phase: 1.0 },
                    SinusoidAxis { amplitude_mt: 6.0, cycles: 1.0, phase: PI / 2.0 },
                ],
            },
        },
        initial_guess: ParameterSpec::Field { waveform: WaveformSpec::Zero },
        background: None,
    }
}

/// Case 2: reconstruct a static uniaxial anisotropy landscape (truth along y,
/// initial guess along x) under a rapidly direction-varying background field.
pub fn preset_case2() -> Scenario {
    Scenario {
        format: SCENARIO_FORMAT.into(),
        name: "case2-anisotropy-landscape".into(),
        seed: 7,
        fine_level: 5,
        coarse_level: 4,
        t_end: PRESET_T_END,
        n_steps: PRESET_STEPS,
        constants: default_constants(),
        observation: ObservationMode::Expectation,
        noise_levels: vec![],
        ground_truth: ParameterSpec::Landscape {
            landscape: LandscapeSpec::Uniaxial { axis: [0.0, 1.0, 0.0] },
        },
        initial_guess: ParameterSpec::Landscape {
            landscape: LandscapeSpec::Uniaxial { axis: [1.0, 0.0, 0.0] },
        },
        // Lissajous-type mix with mutually incommensurate per-axis frequencies
        background: Some(WaveformSpec::SinusoidMix {
            axes: [
                SinusoidAxis { amplitude_mt: 10.0, cycles: PI, phase: 0.0 },
                SinusoidAxis { amplitude_mt: 10.0, cycles: 1.37 * PI, phase: 0.7 },
                SinusoidAxis { amplitude_mt: 10.0, cycles: 1.83 * PI, phase: 1.9 },
            ],
        }),
    }
}

/// Case 3: reconstruct an easy axis rotating once in the xy-plane under a
/// constant 10 mT field along (1,1,1)/√3 with K = 1000 J/m³.
pub fn preset_case3() -> Scenario {
    Scenario {
        format: SCENARIO_FORMAT.into(),
        name: "case3-easy-axis".into(),
        seed: 7,
        fine_level: 5,
        coarse_level: 4,
        t_end: PRESET_T_END,
        n_steps: PRESET_STEPS,
        constants: default_constants(),
        observation: ObservationMode::Expectation,
        noise_levels: vec![0.0, 0.005, 0.01, 0.02, 0.05],
        ground_truth: ParameterSpec::Axis { axis: AxisSpec::RotationXy { turns: 1.0 } },
        initial_guess: ParameterSpec::Axis {
            axis: AxisSpec::Constant { direction: [1.0, 0.0, 0.0] },
        },
        background: Some(WaveformSpec::Constant {
            amplitude_mt: 10.0,
            direction: [1.0, 1.0, 1.0],
        }),
    }
}

/// One noise realization of the clean series.
#[derive(Debug, Clone)]
pub struct NoisyObservation {
    pub level: f64,
    /// Realized L²(0,T) norm of the injected noise.
    pub delta: f64,
    pub series: ObservationSeries,
}

/// Output of the two-grid measurement protocol.
pub struct Measurement {
    /// Interpolated fine-grid data on the coarse mesh (noise-free).
    pub clean: ObservationSeries,
    /// One entry per scenario noise level, same order.
    pub noisy: Vec<NoisyObservation>,
    /// ‖F_coarse(p_true) − clean‖_Y; strictly positive under the protocol.
    pub model_mismatch: f64,
    /// Fine-mesh state (diagnostics; mass-conservation checks run on it).
    pub fine_state: StateField,
}

/// Runs the inverse-crime-safe forward protocol for a scenario.
pub fn generate_measurement(scenario: &Scenario) -> crate::Result<Measurement> {
    scenario.validate()?;
    let grid = scenario.time_grid()?;
    let solver = SolverOptions::default();

    let fine_mesh = build_icosphere(scenario.fine_level)?;
    let coarse_mesh = build_icosphere(scenario.coarse_level)?;
    let fine_ops = assemble_operators(&fine_mesh, scenario.constants.lambda)?;
    let coarse_ops = assemble_operators(&coarse_mesh, scenario.constants.lambda)?;

    let background_fine = scenario.background_samples(&grid);
    let ctx_fine = DriftContext::new(
        &scenario.constants,
        &fine_mesh,
        grid,
        background_fine.as_deref(),
    );
    let p_true_fine = scenario.ground_truth.synthesize(&fine_mesh, &grid, &scenario.constants);
    let b_fine = crate::model::assemble_drift(&p_true_fine, &ctx_fine)?;
    let u0_fine = scenario.initial_density(&fine_mesh);
    let fine_state = solve_forward(&b_fine, &u0_fine, &fine_ops, grid, &solver)?;

    // interpolate the full state trajectory, then observe on the coarse mesh
    let imap = InterpolationMap::build(&fine_mesh, &coarse_mesh)?;
    let coarse_values: Vec<Vec<f64>> = fine_state
        .values
        .iter()
        .map(|slice| imap.apply(&fine_mesh, slice, &coarse_mesh))
        .collect();
    let interp_state = StateField { values: coarse_values, time_grid: grid };
    let clean = observe(&interp_state, scenario.observation, &coarse_mesh);

    // model mismatch: coarse forward solve of the same ground truth
    let background_coarse = scenario.background_samples(&grid);
    let ctx_coarse = DriftContext::new(
        &scenario.constants,
        &coarse_mesh,
        grid,
        background_coarse.as_deref(),
    );
    let p_true_coarse =
        scenario.ground_truth.synthesize(&coarse_mesh, &grid, &scenario.constants);
    let b_coarse = crate::model::assemble_drift(&p_true_coarse, &ctx_coarse)?;
    let u0_coarse = scenario.initial_density(&coarse_mesh);
    let coarse_state = solve_forward(&b_coarse, &u0_coarse, &coarse_ops, grid, &solver)?;
    let y_model = observe(&coarse_state, scenario.observation, &coarse_mesh);
    let model_mismatch = y_norm(&y_model.difference(&clean)?, &coarse_mesh);

    let sup = sup_norm(&clean);
    let mut noisy = Vec::with_capacity(scenario.noise_levels.len());
    for (idx, &level) in scenario.noise_levels.iter().enumerate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(idx as u64 + 1);
        let sigma = level * sup;
        let series = add_gaussian_noise(&clean, sigma, &mut rng);
        let delta = y_norm(&series.difference(&clean)?, &coarse_mesh);
        noisy.push(NoisyObservation { level, delta, series });
    }

    Ok(Measurement { clean, noisy, model_mismatch, fine_state })
}

fn add_gaussian_noise(
    clean: &ObservationSeries,
    sigma: f64,
    rng: &mut impl Rng,
) -> ObservationSeries {
    let values = match &clean.values {
        ObservationValues::Expectation(series) => ObservationValues::Expectation(
            series
                .iter()
                .map(|v| {
                    Vec3::new(
                        v.x + sigma * rng.sample::<f64, _>(StandardNormal),
                        v.y + sigma * rng.sample::<f64, _>(StandardNormal),
                        v.z + sigma * rng.sample::<f64, _>(StandardNormal),
                    )
                })
                .collect(),
        ),
        ObservationValues::Identity(series) => ObservationValues::Identity(
            series
                .iter()
                .map(|slice| {
                    slice
                        .iter()
                        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect(),
        ),
    };
    ObservationSeries { values, time_grid: clean.time_grid }
}

/// Per-rule reconstruction errors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RuleErrors {
    /// Iteration index the rule selected.
    pub index: usize,
    /// Relative L²(0,T) parameter error.
    pub l2: f64,
    /// Relative H¹(0,T) parameter error.
    pub h1: f64,
}

/// Error report for one reconstruction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub noise_level: f64,
    pub seed: u64,
    pub discrepancy: RuleErrors,
    /// Present when the run tracked a best iterate against ground truth.
    pub best: Option<RuleErrors>,
}

/// Relative H¹(0,T) distance (L² plus first-difference derivative term),
/// case-3 samples normalized and sign-aligned first. For the static landscape
/// the derivative term is void and the H¹ error equals the L² error.
pub fn relative_h1_error(
    p: &Parameter,
    truth: &Parameter,
    ctx: &DriftContext,
) -> crate::Result<f64> {
    let (pn, tn) = crate::inversion::comparison_pair(p, truth);
    match (&pn, &tn) {
        (Parameter::FieldWaveform { h: a }, Parameter::FieldWaveform { h: b })
        | (Parameter::EasyAxis { n: a }, Parameter::EasyAxis { n: b }) => {
            let dt = ctx.time_grid.dt();
            let h1 = |x: &[Vec3], y: &[Vec3]| -> f64 {
                let mut acc = 0.0;
                for k in 1..x.len() {
                    let d = x[k] - y[k];
                    acc += dt * d.dot(d);
                }
                for k in 2..x.len() {
                    let dx = (x[k] - x[k - 1]) * (1.0 / dt);
                    let dy = (y[k] - y[k - 1]) * (1.0 / dt);
                    let d = dx - dy;
                    acc += dt * d.dot(d);
                }
                acc.sqrt()
            };
            let zeros = vec![Vec3::ZERO; a.len()];
            Ok(h1(a, b) / h1(b, &zeros).max(1e-300))
        }
        _ => relative_parameter_error(p, truth, ctx),
    }
}

/// Evaluates a finished run against the scenario ground truth at both stopping
/// rules. The coarse-mesh context must match the run.
pub fn evaluate(
    run: &ReconstructionRun,
    truth: &Parameter,
    ctx: &DriftContext,
    noise_level: f64,
    seed: u64,
) -> crate::Result<ErrorReport> {
    let (dp_param, dp_index) = run.discrepancy_choice();
    let discrepancy = RuleErrors {
        index: dp_index,
        l2: relative_parameter_error(dp_param, truth, ctx)?,
        h1: relative_h1_error(dp_param, truth, ctx)?,
    };
    let best = match (&run.best_parameter, run.best_index) {
        (Some(p), Some(k)) => Some(RuleErrors {
            index: k,
            l2: relative_parameter_error(p, truth, ctx)?,
            h1: relative_h1_error(p, truth, ctx)?,
        }),
        _ => None,
    };
    Ok(ErrorReport { noise_level, seed, discrepancy, best })
}
