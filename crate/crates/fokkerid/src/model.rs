//! Physical constants, identification parameters, and the drift map Γ.
//!
//! The drift is `b(m,t) = α₁ (m × H(t))×m + α₂ (m × φ(m,t))×m` with
//! `α₁ = γ̃ α̂ μ₀` and `α₂ = 2 γ̃ α̂ K/M_S`, `γ̃ = γ/(1+α̂²)`. `H` is the applied
//! field in A/m (α₁·H is then a rate in s⁻¹; scenario files take mT amplitudes
//! and convert via μ₀). Three parameter cases are supported:
//!
//! 1. field waveform `H(t)` (φ-term zero),
//! 2. anisotropy landscape `φ(m)` (dimensionless, `α₂`-scaled; background `H`),
//! 3. uniaxial easy axis `n(t)` with `φ(m,t) = (mᵀn)n` (background `H`).
//!
//! `gamma_derivative_apply`/`gamma_adjoint_apply` realize Γ′(p) and its exact
//! adjoint with respect to the discrete area-and-time-weighted inner products.

use crate::error::Error;
use crate::geometry::SphereMesh;
use crate::linalg::Vec3;
use crate::TimeGrid;
use serde::{Deserialize, Serialize};

/// SI constants of the particle model plus the diffusion constant λ.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Gyromagnetic ratio γ, rad·s⁻¹·T⁻¹.
    pub gamma: f64,
    /// Damping factor α̂, dimensionless.
    pub alpha_hat: f64,
    /// Vacuum permeability μ₀, T·m·A⁻¹.
    pub mu0: f64,
    /// Uniaxial anisotropy constant K, J·m⁻³.
    pub k_anis: f64,
    /// Saturation magnetization M_S, A·m⁻¹.
    pub m_s: f64,
    /// Diffusion constant λ, s⁻¹.
    pub lambda: f64,
}

impl PhysicalConstants {
    /// Modified gyromagnetic ratio γ̃ = γ/(1+α̂²).
    #[inline]
    pub fn gamma_tilde(&self) -> f64 {
        self.gamma / (1.0 + self.alpha_hat * self.alpha_hat)
    }

    /// α₁ = γ̃ α̂ μ₀; multiplies the applied field in A/m.
    #[inline]
    pub fn alpha1(&self) -> f64 {
        self.gamma_tilde() * self.alpha_hat * self.mu0
    }

    /// α₂ = 2 γ̃ α̂ K / M_S; multiplies the dimensionless anisotropy landscape.
    #[inline]
    pub fn alpha2(&self) -> f64 {
        2.0 * self.gamma_tilde() * self.alpha_hat * self.k_anis / self.m_s
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.gamma > 0.0) || !(self.alpha_hat > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "constants need gamma, alpha_hat, lambda > 0 (gamma={}, alpha_hat={}, lambda={})",
                self.gamma, self.alpha_hat, self.lambda
            )));
        }
        if !(self.mu0 > 0.0) || !(self.m_s > 0.0) || self.k_anis < 0.0 {
            return Err(Error::Config("constants need mu0, m_s > 0 and k_anis >= 0".into()));
        }
        Ok(())
    }
}

/// Anisotropy landscape storage: static by default, optionally one field per
/// time grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeIndexedField {
    Static(Vec<Vec3>),
    PerStep(Vec<Vec<Vec3>>),
}

/// Identification parameter, tagged by case.
#[derive(Debug, Clone, PartialEq)]
pub enum Parameter {
    /// Case 1: applied field waveform, one A/m vector per time grid point.
    FieldWaveform { h: Vec<Vec3> },
    /// Case 2: anisotropy landscape, one dimensionless vector per cell.
    AnisotropyLandscape { phi: TimeIndexedField },
    /// Case 3: easy-axis trajectory, one vector per time grid point. Iterates
    /// are not constrained to unit norm; per-sample norms are retained and the
    /// harness normalizes before error evaluation.
    EasyAxis { n: Vec<Vec3> },
}

/// Case discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    FieldWaveform,
    AnisotropyLandscape,
    EasyAxis,
}

impl CaseTag {
    pub fn number(self) -> u8 {
        match self {
            CaseTag::FieldWaveform => 1,
            CaseTag::AnisotropyLandscape => 2,
            CaseTag::EasyAxis => 3,
        }
    }

    pub fn from_number(n: u8) -> crate::Result<Self> {
        match n {
            1 => Ok(CaseTag::FieldWaveform),
            2 => Ok(CaseTag::AnisotropyLandscape),
            3 => Ok(CaseTag::EasyAxis),
            _ => Err(Error::Config(format!("unknown case number {n}"))),
        }
    }
}

impl Parameter {
    pub fn case(&self) -> CaseTag {
        match self {
            Parameter::FieldWaveform { .. } => CaseTag::FieldWaveform,
            Parameter::AnisotropyLandscape { .. } => CaseTag::AnisotropyLandscape,
            Parameter::EasyAxis { .. } => CaseTag::EasyAxis,
        }
    }

    /// Zero parameter with the same case and shape.
    pub fn zeros_like(&self) -> Parameter {
        match self {
            Parameter::FieldWaveform { h } => {
                Parameter::FieldWaveform { h: vec![Vec3::ZERO; h.len()] }
            }
            Parameter::AnisotropyLandscape { phi } => Parameter::AnisotropyLandscape {
                phi: match phi {
                    TimeIndexedField::Static(f) => TimeIndexedField::Static(vec![Vec3::ZERO; f.len()]),
                    TimeIndexedField::PerStep(fs) => TimeIndexedField::PerStep(
                        fs.iter().map(|f| vec![Vec3::ZERO; f.len()]).collect(),
                    ),
                },
            },
            Parameter::EasyAxis { n } => Parameter::EasyAxis { n: vec![Vec3::ZERO; n.len()] },
        }
    }

    /// self ← self + s·other. Case tags and shapes must match.
    pub fn scaled_add(&mut self, s: f64, other: &Parameter) -> crate::Result<()> {
        match (self, other) {
            (Parameter::FieldWaveform { h }, Parameter::FieldWaveform { h: oh })
                if h.len() == oh.len() =>
            {
                for (a, b) in h.iter_mut().zip(oh) {
                    *a += *b * s;
                }
                Ok(())
            }
            (Parameter::EasyAxis { n }, Parameter::EasyAxis { n: on }) if n.len() == on.len() => {
                for (a, b) in n.iter_mut().zip(on) {
                    *a += *b * s;
                }
                Ok(())
            }
            (
                Parameter::AnisotropyLandscape { phi: TimeIndexedField::Static(f) },
                Parameter::AnisotropyLandscape { phi: TimeIndexedField::Static(of) },
            ) if f.len() == of.len() => {
                for (a, b) in f.iter_mut().zip(of) {
                    *a += *b * s;
                }
                Ok(())
            }
            (
                Parameter::AnisotropyLandscape { phi: TimeIndexedField::PerStep(fs) },
                Parameter::AnisotropyLandscape { phi: TimeIndexedField::PerStep(ofs) },
            ) if fs.len() == ofs.len() && fs.iter().zip(ofs).all(|(a, b)| a.len() == b.len()) => {
                for (f, of) in fs.iter_mut().zip(ofs) {
                    for (a, b) in f.iter_mut().zip(of) {
                        *a += *b * s;
                    }
                }
                Ok(())
            }
            _ => Err(Error::Shape("parameter case or shape mismatch in scaled_add".into())),
        }
    }

    /// Flattened view of all vector samples (used by norms and smoothing glue).
    pub fn samples(&self) -> Vec<Vec3> {
        match self {
            Parameter::FieldWaveform { h } => h.clone(),
            Parameter::EasyAxis { n } => n.clone(),
            Parameter::AnisotropyLandscape { phi } => match phi {
                TimeIndexedField::Static(f) => f.clone(),
                TimeIndexedField::PerStep(fs) => fs.iter().flatten().copied().collect(),
            },
        }
    }
}

/// Per-time-step, per-cell drift vectors in s⁻¹ (slice 0 is carried but the
/// implicit-Euler solvers only use slices 1..=n_steps).
#[derive(Debug, Clone)]
pub struct DriftField {
    /// values[k][i] = b at grid point k, cell i.
    pub values: Vec<Vec<Vec3>>,
}

impl DriftField {
    pub fn zeros(n_points: usize, n_cells: usize) -> DriftField {
        DriftField { values: vec![vec![Vec3::ZERO; n_cells]; n_points] }
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn n_cells(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Largest |⟨b, m⟩|/‖b‖ over all cells and steps; the drift is built from
    /// double cross products with m, so this is round-off-level by construction.
    pub fn max_normal_component(&self, mesh: &SphereMesh) -> f64 {
        let mut worst: f64 = 0.0;
        for slice in &self.values {
            for (b, c) in slice.iter().zip(&mesh.circumcenters) {
                let n = b.norm();
                if n > 0.0 {
                    worst = worst.max(b.dot(*c).abs() / n);
                }
            }
        }
        worst
    }
}

/// Immutable context shared by the Γ maps: mesh, constants, grid, and the
/// configured background field waveform (cases 2 and 3; A/m per grid point).
#[derive(Clone, Copy)]
pub struct DriftContext<'a> {
    pub constants: &'a PhysicalConstants,
    pub mesh: &'a SphereMesh,
    pub time_grid: TimeGrid,
    pub background: Option<&'a [Vec3]>,
}

impl<'a> DriftContext<'a> {
    pub fn new(
        constants: &'a PhysicalConstants,
        mesh: &'a SphereMesh,
        time_grid: TimeGrid,
        background: Option<&'a [Vec3]>,
    ) -> Self {
        DriftContext { constants, mesh, time_grid, background }
    }

    fn background_checked(&self) -> crate::Result<&'a [Vec3]> {
        let bg = self
            .background
            .ok_or_else(|| Error::Shape("background field waveform required for cases 2 and 3".into()))?;
        if bg.len() != self.time_grid.n_points() {
            return Err(Error::Shape(format!(
                "background waveform has {} samples, grid has {} points",
                bg.len(),
                self.time_grid.n_points()
            )));
        }
        Ok(bg)
    }

    fn check_series_len(&self, len: usize) -> crate::Result<()> {
        if len != self.time_grid.n_points() {
            return Err(Error::Shape(format!(
                "parameter has {len} samples, grid has {} points",
                self.time_grid.n_points()
            )));
        }
        Ok(())
    }

    fn check_cells(&self, len: usize) -> crate::Result<()> {
        if len != self.mesh.n_cells() {
            return Err(Error::Shape(format!(
                "cell field has {len} entries, mesh has {} cells",
                self.mesh.n_cells()
            )));
        }
        Ok(())
    }
}

fn phi_slice<'f>(phi: &'f TimeIndexedField, k: usize) -> &'f [Vec3] {
    match phi {
        TimeIndexedField::Static(f) => f,
        TimeIndexedField::PerStep(fs) => &fs[k],
    }
}

fn check_phi(ctx: &DriftContext, phi: &TimeIndexedField) -> crate::Result<()> {
    match phi {
        TimeIndexedField::Static(f) => ctx.check_cells(f.len()),
        TimeIndexedField::PerStep(fs) => {
            ctx.check_series_len(fs.len())?;
            for f in fs {
                ctx.check_cells(f.len())?;
            }
            Ok(())
        }
    }
}

/// Assembles b(m,t;p) on the mesh/grid of `ctx`.
pub fn assemble_drift(p: &Parameter, ctx: &DriftContext) -> crate::Result<DriftField> {
    let n_points = ctx.time_grid.n_points();
    let cells = &ctx.mesh.circumcenters;
    let a1 = ctx.constants.alpha1();
    let a2 = ctx.constants.alpha2();
    let mut drift = DriftField::zeros(n_points, cells.len());

    match p {
        Parameter::FieldWaveform { h } => {
            ctx.check_series_len(h.len())?;
            for k in 0..n_points {
                let hk = h[k] * a1;
                for (bi, &c) in drift.values[k].iter_mut().zip(cells) {
                    *bi = hk.tangential_at(c);
                }
            }
        }
        Parameter::AnisotropyLandscape { phi } => {
            check_phi(ctx, phi)?;
            let bg = ctx.background_checked()?;
            for k in 0..n_points {
                let hk = bg[k] * a1;
                let slice = phi_slice(phi, k);
                for ((bi, &c), &p) in drift.values[k].iter_mut().zip(cells).zip(slice) {
                    *bi = (hk + p * a2).tangential_at(c);
                }
            }
        }
        Parameter::EasyAxis { n } => {
            ctx.check_series_len(n.len())?;
            let bg = ctx.background_checked()?;
            for k in 0..n_points {
                let hk = bg[k] * a1;
                let nk = n[k];
                for (bi, &c) in drift.values[k].iter_mut().zip(cells) {
                    // uniaxial landscape φ(m,t) = (mᵀn) n
                    let phi = nk * c.dot(nk);
                    *bi = (hk + phi * a2).tangential_at(c);
                }
            }
        }
    }
    Ok(drift)
}

/// Γ′(p) applied to a same-case increment, returning a drift increment.
///
/// Cases 1–2 are affine in p, so this is the linear part of [`assemble_drift`];
/// case 3 is the product rule of φ(m,n) = (mᵀn)n:
/// `h ↦ (mᵀh)n + (mᵀn)h`, wrapped in the tangential projection.
pub fn gamma_derivative_apply(
    p: &Parameter,
    direction: &Parameter,
    ctx: &DriftContext,
) -> crate::Result<DriftField> {
    if p.case() != direction.case() {
        return Err(Error::Shape(format!(
            "case tag mismatch: parameter {:?} vs increment {:?}",
            p.case(),
            direction.case()
        )));
    }
    let n_points = ctx.time_grid.n_points();
    let cells = &ctx.mesh.circumcenters;
    let a1 = ctx.constants.alpha1();
    let a2 = ctx.constants.alpha2();
    let mut out = DriftField::zeros(n_points, cells.len());

    match (p, direction) {
        (Parameter::FieldWaveform { h }, Parameter::FieldWaveform { h: dh }) => {
            ctx.check_series_len(h.len())?;
            ctx.check_series_len(dh.len())?;
            for k in 0..n_points {
                let dk = dh[k] * a1;
                for (bi, &c) in out.values[k].iter_mut().zip(cells) {
                    *bi = dk.tangential_at(c);
                }
            }
        }
        (Parameter::AnisotropyLandscape { phi }, Parameter::AnisotropyLandscape { phi: dphi }) => {
            check_phi(ctx, phi)?;
            check_phi(ctx, dphi)?;
            for k in 0..n_points {
                let slice = phi_slice(dphi, k);
                for ((bi, &c), &dp) in out.values[k].iter_mut().zip(cells).zip(slice) {
                    *bi = (dp * a2).tangential_at(c);
                }
            }
        }
        (Parameter::EasyAxis { n }, Parameter::EasyAxis { n: dn }) => {
            ctx.check_series_len(n.len())?;
            ctx.check_series_len(dn.len())?;
            for k in 0..n_points {
                let nk = n[k];
                let hk = dn[k];
                for (bi, &c) in out.values[k].iter_mut().zip(cells) {
                    let dphi = nk * c.dot(hk) + hk * c.dot(nk);
                    *bi = (dphi * a2).tangential_at(c);
                }
            }
        }
        _ => unreachable!("case equality checked above"),
    }
    Ok(out)
}

/// Banach-space adjoint Γ′(p)* applied to a drift-like cofield, returning a
/// parameter increment. Defined by `⟨Γ′(p)h, w⟩_B = ⟨h, Γ′(p)*w⟩_P` where both
/// inner products are the discrete area- and time-weighted ones (rectangle
/// weights Δt on grid points 1..=n_steps; the t=0 slice carries no weight).
pub fn gamma_adjoint_apply(
    p: &Parameter,
    w: &DriftField,
    ctx: &DriftContext,
) -> crate::Result<Parameter> {
    let n_points = ctx.time_grid.n_points();
    if w.n_points() != n_points {
        return Err(Error::Shape(format!(
            "cofield has {} slices, grid has {n_points} points",
            w.n_points()
        )));
    }
    ctx.check_cells(w.n_cells())?;
    let cells = &ctx.mesh.circumcenters;
    let areas = &ctx.mesh.cell_areas;
    let a1 = ctx.constants.alpha1();
    let a2 = ctx.constants.alpha2();
    let dt = ctx.time_grid.dt();

    match p {
        Parameter::FieldWaveform { h } => {
            ctx.check_series_len(h.len())?;
            let mut out = vec![Vec3::ZERO; n_points];
            for k in 1..n_points {
                let mut acc = Vec3::ZERO;
                for ((&wi, &c), &a) in w.values[k].iter().zip(cells).zip(areas) {
                    acc += wi.tangential_at(c) * a;
                }
                out[k] = acc * a1;
            }
            Ok(Parameter::FieldWaveform { h: out })
        }
        Parameter::AnisotropyLandscape { phi } => {
            check_phi(ctx, phi)?;
            match phi {
                TimeIndexedField::Static(_) => {
                    let mut out = vec![Vec3::ZERO; cells.len()];
                    for k in 1..n_points {
                        for (o, (&wi, &c)) in out.iter_mut().zip(w.values[k].iter().zip(cells)) {
                            *o += wi.tangential_at(c) * dt;
                        }
                    }
                    for o in &mut out {
                        *o = *o * a2;
                    }
                    Ok(Parameter::AnisotropyLandscape { phi: TimeIndexedField::Static(out) })
                }
                TimeIndexedField::PerStep(_) => {
                    let mut out = vec![vec![Vec3::ZERO; cells.len()]; n_points];
                    for k in 1..n_points {
                        for (o, (&wi, &c)) in out[k].iter_mut().zip(w.values[k].iter().zip(cells)) {
                            *o = wi.tangential_at(c) * a2;
                        }
                    }
                    Ok(Parameter::AnisotropyLandscape { phi: TimeIndexedField::PerStep(out) })
                }
            }
        }
        Parameter::EasyAxis { n } => {
            ctx.check_series_len(n.len())?;
            let mut out = vec![Vec3::ZERO; n_points];
            for k in 1..n_points {
                let nk = n[k];
                let mut acc = Vec3::ZERO;
                for ((&wi, &c), &a) in w.values[k].iter().zip(cells).zip(areas) {
                    let q = wi.tangential_at(c);
                    acc += (c * nk.dot(q) + q * c.dot(nk)) * a;
                }
                out[k] = acc * a2;
            }
            Ok(Parameter::EasyAxis { n: out })
        }
    }
}

/// Discrete inner product on parameter space: L²(0,T) rectangle rule for the
/// time-series cases, area-weighted for the static landscape.
pub fn parameter_inner(a: &Parameter, b: &Parameter, ctx: &DriftContext) -> crate::Result<f64> {
    let dt = ctx.time_grid.dt();
    match (a, b) {
        (Parameter::FieldWaveform { h: x }, Parameter::FieldWaveform { h: y })
        | (Parameter::EasyAxis { n: x }, Parameter::EasyAxis { n: y }) => {
            if x.len() != y.len() {
                return Err(Error::Shape("parameter length mismatch in inner product".into()));
            }
            Ok(x.iter().zip(y).skip(1).map(|(p, q)| p.dot(*q)).sum::<f64>() * dt)
        }
        (
            Parameter::AnisotropyLandscape { phi: TimeIndexedField::Static(x) },
            Parameter::AnisotropyLandscape { phi: TimeIndexedField::Static(y) },
        ) => {
            ctx.check_cells(x.len())?;
            ctx.check_cells(y.len())?;
            Ok(x.iter()
                .zip(y)
                .zip(&ctx.mesh.cell_areas)
                .map(|((p, q), &w)| w * p.dot(*q))
                .sum())
        }
        (
            Parameter::AnisotropyLandscape { phi: TimeIndexedField::PerStep(xs) },
            Parameter::AnisotropyLandscape { phi: TimeIndexedField::PerStep(ys) },
        ) => {
            let mut acc = 0.0;
            for (x, y) in xs.iter().zip(ys).skip(1) {
                for ((p, q), &w) in x.iter().zip(y).zip(&ctx.mesh.cell_areas) {
                    acc += w * p.dot(*q);
                }
            }
            Ok(acc * dt)
        }
        _ => Err(Error::Shape("parameter case mismatch in inner product".into())),
    }
}

/// Area- and time-weighted inner product on drift space (grid points 1..=N).
pub fn drift_inner(a: &DriftField, b: &DriftField, ctx: &DriftContext) -> f64 {
    let dt = ctx.time_grid.dt();
    let mut acc = 0.0;
    for k in 1..a.n_points().min(b.n_points()) {
        for ((x, y), &w) in a.values[k].iter().zip(&b.values[k]).zip(&ctx.mesh.cell_areas) {
            acc += w * x.dot(*y);
        }
    }
    acc * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;
    use rand::{Rng, SeedableRng};

    fn test_constants() -> PhysicalConstants {
        PhysicalConstants {
            gamma: 1.7608596e11,
            alpha_hat: 0.1,
            mu0: 4.0e-7 * std::f64::consts::PI,
            k_anis: 1000.0,
            m_s: 474000.0,
            lambda: 1.0e8,
        }
    }

    /// Order-one constants so that random-field tests are scale-free.
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

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 {
                return v * (1.0 / n);
            }
        }
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

    fn random_cofield(rng: &mut impl Rng, n_points: usize, n_cells: usize) -> DriftField {
        DriftField {
            values: (0..n_points)
                .map(|_| random_series(rng, n_cells, 1.0))
                .collect(),
        }
    }

    #[test]
    fn derived_constants_match_formulas() {
        let c = test_constants();
        let gt = c.gamma / (1.0 + c.alpha_hat * c.alpha_hat);
        assert_eq!(c.gamma_tilde(), gt);
        assert_eq!(c.alpha1(), gt * c.alpha_hat * c.mu0);
        assert_eq!(c.alpha2(), 2.0 * gt * c.alpha_hat * c.k_anis / c.m_s);
    }

    #[test]
    fn field_drift_is_tangential_projection_of_h() {
        let mesh = build_icosphere(1).unwrap();
        let consts = test_constants();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let h_vec = Vec3::new(0.0, 0.0, 7957.75);
        let p = Parameter::FieldWaveform { h: vec![h_vec; grid.n_points()] };
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let drift = assemble_drift(&p, &ctx).unwrap();
        let a1 = consts.alpha1();
        for (b, &c) in drift.values[1].iter().zip(&mesh.circumcenters) {
            // (m×H)×m = H − (m·H)m
            let expected = (h_vec - c * c.dot(h_vec)) * a1;
            assert!((*b - expected).norm() <= 1e-12 * expected.norm().max(1.0));
            // aligned moment ⇒ zero drift is the degenerate case of the same identity
        }
        assert!(drift.max_normal_component(&mesh) < 1e-10);
    }

    #[test]
    fn aligned_moment_gives_zero_drift() {
        let mesh = build_icosphere(1).unwrap();
        let consts = test_constants();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        // pick H parallel to one circumcenter: drift vanishes at that cell
        let c0 = mesh.circumcenters[5];
        let p = Parameter::FieldWaveform { h: vec![c0 * 1000.0; grid.n_points()] };
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let drift = assemble_drift(&p, &ctx).unwrap();
        let scale = consts.alpha1() * 1000.0;
        assert!(drift.values[1][5].norm() < 1e-12 * scale);
    }

    #[test]
    fn easy_axis_term_vanishes_where_n_equals_m() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let cell = 12;
        let n_dir = mesh.circumcenters[cell];
        let bg = vec![Vec3::ZERO; grid.n_points()];
        let p = Parameter::EasyAxis { n: vec![n_dir; grid.n_points()] };
        let ctx = DriftContext::new(&consts, &mesh, grid, Some(&bg));
        let drift = assemble_drift(&p, &ctx).unwrap();
        assert!(drift.values[1][cell].norm() < 1e-14);
    }

    #[test]
    fn cases_1_and_2_are_affine() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let bg = random_series(&mut rng, grid.n_points(), 1.0);

        // case 1
        let p = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 1.0) };
        let h = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 1.0) };
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let mut p_plus = p.clone();
        p_plus.scaled_add(1.0, &h).unwrap();
        let lhs = assemble_drift(&p_plus, &ctx).unwrap();
        let base = assemble_drift(&p, &ctx).unwrap();
        let lin = gamma_derivative_apply(&p, &h, &ctx).unwrap();
        for k in 0..grid.n_points() {
            for i in 0..mesh.n_cells() {
                let diff = lhs.values[k][i] - base.values[k][i] - lin.values[k][i];
                assert!(diff.norm() < 1e-13);
            }
        }

        // case 2 (static)
        let ctx_bg = DriftContext::new(&consts, &mesh, grid, Some(&bg));
        let p2 = Parameter::AnisotropyLandscape {
            phi: TimeIndexedField::Static(random_series(&mut rng, mesh.n_cells(), 1.0)),
        };
        let h2 = Parameter::AnisotropyLandscape {
            phi: TimeIndexedField::Static(random_series(&mut rng, mesh.n_cells(), 1.0)),
        };
        let mut p2_plus = p2.clone();
        p2_plus.scaled_add(1.0, &h2).unwrap();
        let lhs2 = assemble_drift(&p2_plus, &ctx_bg).unwrap();
        let base2 = assemble_drift(&p2, &ctx_bg).unwrap();
        let lin2 = gamma_derivative_apply(&p2, &h2, &ctx_bg).unwrap();
        for k in 0..grid.n_points() {
            for i in 0..mesh.n_cells() {
                let diff = lhs2.values[k][i] - base2.values[k][i] - lin2.values[k][i];
                assert!(diff.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn case3_derivative_matches_finite_differences() {
        let mesh = build_icosphere(2).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let bg = random_series(&mut rng, grid.n_points(), 1.0);
        let ctx = DriftContext::new(&consts, &mesh, grid, Some(&bg));
        let n: Vec<Vec3> = (0..grid.n_points()).map(|_| random_unit(&mut rng)).collect();
        let h = random_series(&mut rng, grid.n_points(), 1.0);
        let p = Parameter::EasyAxis { n: n.clone() };
        let hp = Parameter::EasyAxis { n: h.clone() };

        let eps = 1e-5;
        let mut p_plus = p.clone();
        p_plus.scaled_add(eps, &hp).unwrap();
        let mut p_minus = p.clone();
        p_minus.scaled_add(-eps, &hp).unwrap();
        let d_plus = assemble_drift(&p_plus, &ctx).unwrap();
        let d_minus = assemble_drift(&p_minus, &ctx).unwrap();
        let lin = gamma_derivative_apply(&p, &hp, &ctx).unwrap();

        let mut num = 0.0;
        let mut den = 0.0;
        for k in 1..grid.n_points() {
            for i in 0..mesh.n_cells() {
                let fd = (d_plus.values[k][i] - d_minus.values[k][i]) * (0.5 / eps);
                num += (fd - lin.values[k][i]).dot(fd - lin.values[k][i]);
                den += lin.values[k][i].dot(lin.values[k][i]);
            }
        }
        let rel = (num / den.max(1e-300)).sqrt();
        assert!(rel < 1e-6, "relative FD mismatch {rel:.3e}");
    }

    #[test]
    fn case3_orthogonal_increment_example() {
        // n = e_z, h = e_z, m = e_x: (mᵀh)n + (mᵀn)h = 0
        let mesh = build_icosphere(0).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let bg = vec![Vec3::ZERO; grid.n_points()];
        let ctx = DriftContext::new(&consts, &mesh, grid, Some(&bg));
        let ez = Vec3::new(0.0, 0.0, 1.0);
        let p = Parameter::EasyAxis { n: vec![ez; grid.n_points()] };
        let hp = Parameter::EasyAxis { n: vec![ez; grid.n_points()] };
        let lin = gamma_derivative_apply(&p, &hp, &ctx).unwrap();
        // check the algebra at every cell: increment = α₂ P_m ((m·h)n + (m·n)h)
        for (k, slice) in lin.values.iter().enumerate() {
            for (v, &c) in slice.iter().zip(&mesh.circumcenters) {
                let expected =
                    ((ez * c.dot(ez) + ez * c.dot(ez)) * consts.alpha2()).tangential_at(c);
                assert!((*v - expected).norm() < 1e-13, "slice {k}");
            }
        }
    }

    #[test]
    fn adjoint_identity_all_cases() {
        let mesh = build_icosphere(2).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.3, 6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let bg = random_series(&mut rng, grid.n_points(), 1.0);

        for trial in 0..20 {
            // case 1
            let ctx = DriftContext::new(&consts, &mesh, grid, None);
            let p = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 1.0) };
            let h = Parameter::FieldWaveform { h: random_series(&mut rng, grid.n_points(), 1.0) };
            let w = random_cofield(&mut rng, grid.n_points(), mesh.n_cells());
            let lhs = drift_inner(&gamma_derivative_apply(&p, &h, &ctx).unwrap(), &w, &ctx);
            let adj = gamma_adjoint_apply(&p, &w, &ctx).unwrap();
            let rhs = parameter_inner(&h, &adj, &ctx).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()),
                "case 1 trial {trial}: {lhs} vs {rhs}"
            );

            // case 2 static
            let ctx_bg = DriftContext::new(&consts, &mesh, grid, Some(&bg));
            let p2 = Parameter::AnisotropyLandscape {
                phi: TimeIndexedField::Static(random_series(&mut rng, mesh.n_cells(), 1.0)),
            };
            let h2 = Parameter::AnisotropyLandscape {
                phi: TimeIndexedField::Static(random_series(&mut rng, mesh.n_cells(), 1.0)),
            };
            let w2 = random_cofield(&mut rng, grid.n_points(), mesh.n_cells());
            let lhs2 = drift_inner(&gamma_derivative_apply(&p2, &h2, &ctx_bg).unwrap(), &w2, &ctx_bg);
            let adj2 = gamma_adjoint_apply(&p2, &w2, &ctx_bg).unwrap();
            let rhs2 = parameter_inner(&h2, &adj2, &ctx_bg).unwrap();
            assert!(
                (lhs2 - rhs2).abs() <= 1e-10 * lhs2.abs().max(rhs2.abs()),
                "case 2 trial {trial}: {lhs2} vs {rhs2}"
            );

            // case 3
            let p3 = Parameter::EasyAxis {
                n: (0..grid.n_points()).map(|_| random_unit(&mut rng)).collect(),
            };
            let h3 = Parameter::EasyAxis { n: random_series(&mut rng, grid.n_points(), 1.0) };
            let w3 = random_cofield(&mut rng, grid.n_points(), mesh.n_cells());
            let lhs3 = drift_inner(&gamma_derivative_apply(&p3, &h3, &ctx_bg).unwrap(), &w3, &ctx_bg);
            let adj3 = gamma_adjoint_apply(&p3, &w3, &ctx_bg).unwrap();
            let rhs3 = parameter_inner(&h3, &adj3, &ctx_bg).unwrap();
            assert!(
                (lhs3 - rhs3).abs() <= 1e-10 * lhs3.abs().max(rhs3.abs()),
                "case 3 trial {trial}: {lhs3} vs {rhs3}"
            );
        }
    }

    #[test]
    fn zero_cofield_gives_zero_increment() {
        let mesh = build_icosphere(1).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let p = Parameter::FieldWaveform { h: vec![Vec3::new(1.0, 0.0, 0.0); grid.n_points()] };
        let w = DriftField::zeros(grid.n_points(), mesh.n_cells());
        let out = gamma_adjoint_apply(&p, &w, &ctx).unwrap();
        assert!(out.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn case_mismatch_is_shape_error() {
        let mesh = build_icosphere(0).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let p = Parameter::FieldWaveform { h: vec![Vec3::ZERO; grid.n_points()] };
        let h = Parameter::EasyAxis { n: vec![Vec3::ZERO; grid.n_points()] };
        assert!(matches!(
            gamma_derivative_apply(&p, &h, &ctx),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mismatched_grid_length_is_shape_error() {
        let mesh = build_icosphere(0).unwrap();
        let consts = unit_constants();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let ctx = DriftContext::new(&consts, &mesh, grid, None);
        let p = Parameter::FieldWaveform { h: vec![Vec3::ZERO; 2] };
        assert!(matches!(assemble_drift(&p, &ctx), Err(Error::Shape(_))));
    }
}
