//! Structured run configuration. Every command reads one TOML document
//! with nested sections; unknown fields are rejected so a typo never
//! silently changes an experiment.
//!
//! The `build` methods turn validated sections into domain objects, so
//! a config file is the single source of truth for an experiment and
//! the command front end stays thin.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::approximation::{apply_integral_operator, build_subspace, KernelField, Subspace};
use crate::control::{
    build_matched_reference, deadzone_floor, lyapunov_solve, probe_cloud, tracking_radius,
    AdaptiveState, CommandSignal, DeadzoneFloor, DeadzoneSpec, GainSpec, PlantSpec,
    ReferenceSpec, Regressor, SimulationParams,
};
use crate::error::{Error, Result};
use crate::geometry::{dense_candidates, farthest_point_sample, Manifold, Shape};
use crate::kernel::{OperatorKernel, Point, ScalarKernel};

fn default_quadrature_count() -> usize {
    256
}

fn default_candidate_count() -> usize {
    4096
}

fn default_probe_count() -> usize {
    256
}

fn default_probe_offset() -> f64 {
    0.1
}

fn matrix_from_rows(rows: &[Vec<f64>], context: &'static str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput(context));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::EmptyInput(context));
    }
    for r in rows {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch {
                context,
                expected: ncols,
                got: r.len(),
            });
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(context));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn vector_from(values: &[f64], context: &'static str) -> Result<DVector<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput(context));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(context));
    }
    Ok(DVector::from_column_slice(values))
}

// ===== Kernel =====

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// "matern" | "wendland" | "gaussian"
    pub family: String,
    /// Matern nu or Wendland index; absent for gaussian.
    pub nu_or_index: Option<f64>,
    pub lengthscale: f64,
    pub output_dim: usize,
    /// Row-major m x m admissible weight; identity when absent.
    pub weight_matrix: Option<Vec<f64>>,
}

impl KernelConfig {
    pub fn build(&self) -> Result<OperatorKernel> {
        let scalar = match self.family.as_str() {
            "matern" => {
                let nu = self.nu_or_index.ok_or(Error::Unsupported(
                    "matern kernel needs nu_or_index".into(),
                ))?;
                ScalarKernel::matern(nu, self.lengthscale)?
            }
            "wendland" => {
                let index = self.nu_or_index.ok_or(Error::Unsupported(
                    "wendland kernel needs nu_or_index".into(),
                ))?;
                ScalarKernel::wendland(index, self.lengthscale)?
            }
            "gaussian" => {
                if self.nu_or_index.is_some() {
                    return Err(Error::Unsupported(
                        "gaussian kernel takes no nu_or_index".into(),
                    ));
                }
                ScalarKernel::gaussian(self.lengthscale)?
            }
            other => {
                return Err(Error::Unsupported(format!("unknown kernel family '{other}'")))
            }
        };
        match &self.weight_matrix {
            None => OperatorKernel::diagonal(scalar, self.output_dim),
            Some(flat) => {
                let m = self.output_dim;
                if flat.len() != m * m {
                    return Err(Error::DimensionMismatch {
                        context: "kernel weight matrix",
                        expected: m * m,
                        got: flat.len(),
                    });
                }
                OperatorKernel::separable(scalar, DMatrix::from_row_slice(m, m, flat))
            }
        }
    }
}

// ===== Manifold =====

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    /// "circle" | "torus" | "sphere" | "lissajous"
    pub shape: String,
    /// Circle and sphere radius.
    pub radius: Option<f64>,
    /// Torus [major, minor]; Lissajous amplitudes.
    pub radii: Option<Vec<f64>>,
    /// Lissajous integer frequencies.
    pub frequencies: Option<Vec<u32>>,
    /// Lissajous phases; zeros when absent.
    pub phases: Option<Vec<f64>>,
    pub ambient_dim: usize,
    #[serde(default = "default_quadrature_count")]
    pub quadrature_count: usize,
}

impl ManifoldConfig {
    pub fn build(&self) -> Result<Manifold> {
        let shape = match self.shape.as_str() {
            "circle" => Shape::Circle {
                radius: self.radius.ok_or(Error::Unsupported(
                    "circle manifold needs radius".into(),
                ))?,
            },
            "sphere" => Shape::Sphere {
                radius: self.radius.ok_or(Error::Unsupported(
                    "sphere manifold needs radius".into(),
                ))?,
            },
            "torus" => {
                let radii = self.radii.as_ref().ok_or(Error::Unsupported(
                    "torus manifold needs radii = [major, minor]".into(),
                ))?;
                if radii.len() != 2 {
                    return Err(Error::DimensionMismatch {
                        context: "torus radii",
                        expected: 2,
                        got: radii.len(),
                    });
                }
                Shape::Torus {
                    major_radius: radii[0],
                    minor_radius: radii[1],
                }
            }
            "lissajous" => {
                let amplitudes = self.radii.clone().ok_or(Error::Unsupported(
                    "lissajous manifold needs radii (the amplitudes)".into(),
                ))?;
                let frequencies = self.frequencies.clone().ok_or(Error::Unsupported(
                    "lissajous manifold needs frequencies".into(),
                ))?;
                let phases = self
                    .phases
                    .clone()
                    .unwrap_or_else(|| vec![0.0; amplitudes.len()]);
                Shape::Lissajous {
                    amplitudes,
                    frequencies,
                    phases,
                }
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "unknown manifold shape '{other}'"
                )))
            }
        };
        Manifold::new(shape, self.ambient_dim, self.quadrature_count)
    }
}

// ===== Centers and clouds =====

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentersConfig {
    /// Farthest-point count drawn from the manifold candidate grid.
    pub count: Option<usize>,
    /// Explicit center coordinates; mutually exclusive with `count`.
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_candidate_count")]
    pub candidate_count: usize,
}

impl CentersConfig {
    pub fn build(&self, manifold: Option<&Manifold>) -> Result<Vec<Point>> {
        match (&self.count, &self.points) {
            (Some(_), Some(_)) | (None, None) => Err(Error::Unsupported(
                "centers section needs exactly one of count or points".into(),
            )),
            (Some(0), None) => Ok(Vec::new()),
            (Some(count), None) => {
                let manifold = manifold.ok_or(Error::Unsupported(
                    "farthest-point centers need a manifold section".into(),
                ))?;
                let candidates = dense_candidates(manifold, self.candidate_count)?;
                Ok(farthest_point_sample(manifold, *count, &candidates)?
                    .points()
                    .to_vec())
            }
            (None, Some(rows)) => rows
                .iter()
                .map(|row| vector_from(row, "explicit center"))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    /// "candidates" (manifold grid) | "centers" | "explicit"
    pub kind: String,
    pub count: Option<usize>,
    pub points: Option<Vec<Vec<f64>>>,
}

impl CloudConfig {
    pub fn build(&self, manifold: Option<&Manifold>, centers: &[Point]) -> Result<Vec<Point>> {
        match self.kind.as_str() {
            "candidates" => {
                let manifold = manifold.ok_or(Error::Unsupported(
                    "candidate cloud needs a manifold section".into(),
                ))?;
                let count = self.count.unwrap_or_else(default_candidate_count);
                dense_candidates(manifold, count)
            }
            "centers" => {
                if centers.is_empty() {
                    return Err(Error::EmptyInput("cloud over empty center set"));
                }
                Ok(centers.to_vec())
            }
            "explicit" => {
                let rows = self.points.as_ref().ok_or(Error::Unsupported(
                    "explicit cloud needs points".into(),
                ))?;
                rows.iter()
                    .map(|row| vector_from(row, "explicit cloud point"))
                    .collect()
            }
            other => Err(Error::Unsupported(format!("unknown cloud kind '{other}'"))),
        }
    }
}

// ===== Targets =====

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// "integral" | "span" | "values" | "zero"
    pub kind: String,
    /// Integral target: density amplitude.
    pub bump_scale: Option<f64>,
    /// Integral target: chart frequency of the density.
    pub mode: Option<u32>,
    /// Integral target, multiscale form: chart frequencies; replaces
    /// `mode` and requires matching `amplitudes`. Amplitudes growing
    /// like q^(2 nu + l) against the kernel's spectral decay produce a
    /// field of exactly borderline native smoothness, which is what a
    /// generic-rate study needs.
    pub modes: Option<Vec<u32>>,
    /// Per-mode amplitude factors, all multiplied by `bump_scale`.
    pub amplitudes: Option<Vec<f64>>,
    /// Per-mode phases; zeros when absent.
    pub phases: Option<Vec<f64>>,
    /// Span target: per-node coefficient blocks.
    pub coefficients: Option<Vec<Vec<f64>>>,
    /// Span target nodes; defaults to the command's center set.
    pub points: Option<Vec<Vec<f64>>>,
    /// Values target: per-center value blocks.
    pub values: Option<Vec<Vec<f64>>>,
}

impl TargetConfig {
    /// Identifier recorded in rate-table metadata.
    pub fn id(&self) -> String {
        match self.kind.as_str() {
            "integral" => match &self.modes {
                Some(modes) => format!(
                    "integral(scale={}, modes={modes:?})",
                    self.bump_scale.unwrap_or(1.0)
                ),
                None => format!(
                    "integral(scale={}, mode={})",
                    self.bump_scale.unwrap_or(1.0),
                    self.mode.unwrap_or(1)
                ),
            },
            other => other.to_string(),
        }
    }

    /// (frequency, amplitude, phase) triples of the integral density.
    fn density_terms(&self) -> Result<Vec<(f64, f64, f64)>> {
        match &self.modes {
            None => {
                if self.amplitudes.is_some() || self.phases.is_some() {
                    return Err(Error::Unsupported(
                        "integral target amplitudes/phases need modes".into(),
                    ));
                }
                Ok(vec![(self.mode.unwrap_or(1) as f64, 1.0, 0.0)])
            }
            Some(modes) => {
                if self.mode.is_some() {
                    return Err(Error::Unsupported(
                        "integral target takes mode or modes, not both".into(),
                    ));
                }
                let amplitudes = self.amplitudes.as_ref().ok_or(Error::Unsupported(
                    "integral target modes need amplitudes".into(),
                ))?;
                if amplitudes.len() != modes.len() {
                    return Err(Error::DimensionMismatch {
                        context: "integral target amplitudes",
                        expected: modes.len(),
                        got: amplitudes.len(),
                    });
                }
                let phases = match &self.phases {
                    None => vec![0.0; modes.len()],
                    Some(phases) => {
                        if phases.len() != modes.len() {
                            return Err(Error::DimensionMismatch {
                                context: "integral target phases",
                                expected: modes.len(),
                                got: phases.len(),
                            });
                        }
                        phases.clone()
                    }
                };
                Ok(modes
                    .iter()
                    .zip(amplitudes)
                    .zip(phases)
                    .map(|((&q, &a), p)| (q as f64, a, p))
                    .collect())
            }
        }
    }

    /// Build a native-space member for this target. Span targets use
    /// `points` or the supplied centers as nodes; integral targets push
    /// a smooth chart density through the kernel integral operator.
    pub fn build_field(
        &self,
        kernel: &OperatorKernel,
        manifold: Option<&Manifold>,
        centers: &[Point],
    ) -> Result<KernelField> {
        match self.kind.as_str() {
            "integral" => {
                let manifold = manifold.ok_or(Error::Unsupported(
                    "integral target needs a manifold section".into(),
                ))?;
                let scale = self.bump_scale.unwrap_or(1.0);
                let terms = self.density_terms()?;
                let m = kernel.output_dim();
                apply_integral_operator(kernel, manifold, |node| {
                    let u0 = node.chart[0];
                    DVector::from_fn(m, |j, _| {
                        terms
                            .iter()
                            .map(|&(q, a, p)| {
                                scale
                                    * a
                                    * (std::f64::consts::TAU * q * u0 + 0.5 * j as f64 + p).cos()
                            })
                            .sum()
                    })
                })
            }
            "span" => {
                let coeffs = self.coefficients.as_ref().ok_or(Error::Unsupported(
                    "span target needs coefficients".into(),
                ))?;
                let nodes: Vec<Point> = match &self.points {
                    Some(rows) => rows
                        .iter()
                        .map(|row| vector_from(row, "span target node"))
                        .collect::<Result<_>>()?,
                    None => centers.to_vec(),
                };
                let blocks: Vec<DVector<f64>> = coeffs
                    .iter()
                    .map(|row| vector_from(row, "span target coefficient"))
                    .collect::<Result<_>>()?;
                KernelField::new(kernel.clone(), nodes, blocks)
            }
            other => Err(Error::Unsupported(format!(
                "target kind '{other}' does not define a field"
            ))),
        }
    }

    /// Values of this target at the given centers, for interpolation.
    pub fn build_values(
        &self,
        kernel: &OperatorKernel,
        manifold: Option<&Manifold>,
        centers: &[Point],
    ) -> Result<Vec<DVector<f64>>> {
        let m = kernel.output_dim();
        match self.kind.as_str() {
            "zero" => Ok(centers.iter().map(|_| DVector::zeros(m)).collect()),
            "values" => {
                let rows = self.values.as_ref().ok_or(Error::Unsupported(
                    "values target needs values".into(),
                ))?;
                if rows.len() != centers.len() {
                    return Err(Error::DimensionMismatch {
                        context: "target values vs centers",
                        expected: centers.len(),
                        got: rows.len(),
                    });
                }
                rows.iter()
                    .map(|row| vector_from(row, "target value"))
                    .collect()
            }
            "integral" | "span" => {
                let field = self.build_field(kernel, manifold, centers)?;
                centers.iter().map(|c| field.eval(c)).collect()
            }
            other => Err(Error::Unsupported(format!("unknown target kind '{other}'"))),
        }
    }
}

// ===== Per-command documents =====

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    pub kernel: KernelConfig,
    pub manifold: Option<ManifoldConfig>,
    pub centers: CentersConfig,
    pub target: TargetConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub kernel: KernelConfig,
    pub manifold: Option<ManifoldConfig>,
    pub centers: CentersConfig,
    pub cloud: CloudConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub n_list: Vec<usize>,
    pub candidate_count: usize,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default = "default_probe_offset")]
    pub probe_offset_factor: f64,
    pub target: TargetConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    pub n: Vec<usize>,
    pub h: Vec<f64>,
    pub sup_err: Vec<f64>,
    pub sup_power: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// "fill" | "centers"
    #[serde(default = "FitSection::default_x")]
    pub x: String,
    /// "sup_err" | "sup_power"
    #[serde(default = "FitSection::default_y")]
    pub y: String,
}

impl FitSection {
    fn default_x() -> String {
        "fill".into()
    }
    fn default_y() -> String {
        "sup_err".into()
    }
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            x: Self::default_x(),
            y: Self::default_y(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub kernel: Option<KernelConfig>,
    pub manifold: Option<ManifoldConfig>,
    /// Run a full convergence study; mutually exclusive with `table`.
    pub study: Option<StudySection>,
    /// Fit a planted table instead of running a study.
    pub table: Option<TableSection>,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurseConfig {
    pub curse: CurseSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurseSection {
    pub epsilon: f64,
    pub s: f64,
    pub ell: usize,
    pub s_bar: f64,
    pub n_list: Vec<usize>,
    /// (eps0, N0) calibration pair; default (1, 1).
    #[serde(default = "CurseSection::default_calibration")]
    pub calibration: [f64; 2],
}

impl CurseSection {
    fn default_calibration() -> [f64; 2] {
        [1.0, 1.0]
    }
}

// ===== Simulation document =====

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub kernel: KernelConfig,
    pub manifold: ManifoldConfig,
    pub plant: PlantSection,
    pub reference: ReferenceSection,
    pub gains: GainsSection,
    pub deadzone: DeadzoneSection,
    pub subspace: SubspaceSection,
    pub integration: IntegrationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Diagonal entries of Lambda.
    pub lambda: Vec<f64>,
    pub theta_true: Vec<Vec<f64>>,
    pub regressor: Vec<String>,
    pub x0: Vec<f64>,
    pub uncertainty: TargetConfig,
    /// Tolerance for the uncertainty-nodes-on-manifold check.
    #[serde(default = "PlantSection::default_manifold_tolerance")]
    pub manifold_tolerance: f64,
}

impl PlantSection {
    fn default_manifold_tolerance() -> f64 {
        1e-8
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// "constant" | "sinusoid" | "piecewise"
    pub command: String,
    pub value: Option<Vec<f64>>,
    pub amplitude: Option<Vec<f64>>,
    pub omega: Option<f64>,
    pub phase: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub values: Option<Vec<Vec<f64>>>,
    pub x_ref0: Vec<f64>,
    pub x_r_bound: f64,
}

impl ReferenceSection {
    fn build_command(&self) -> Result<CommandSignal> {
        let signal = match self.command.as_str() {
            "constant" => CommandSignal::Constant {
                value: vector_from(
                    self.value.as_ref().ok_or(Error::Unsupported(
                        "constant command needs value".into(),
                    ))?,
                    "constant command",
                )?,
            },
            "sinusoid" => CommandSignal::Sinusoid {
                amplitude: vector_from(
                    self.amplitude.as_ref().ok_or(Error::Unsupported(
                        "sinusoid command needs amplitude".into(),
                    ))?,
                    "sinusoid amplitude",
                )?,
                omega: self.omega.ok_or(Error::Unsupported(
                    "sinusoid command needs omega".into(),
                ))?,
                phase: self.phase.unwrap_or(0.0),
            },
            "piecewise" => {
                let times = self.times.clone().ok_or(Error::Unsupported(
                    "piecewise command needs times".into(),
                ))?;
                let values = self
                    .values
                    .as_ref()
                    .ok_or(Error::Unsupported("piecewise command needs values".into()))?
                    .iter()
                    .map(|row| vector_from(row, "piecewise command value"))
                    .collect::<Result<Vec<_>>>()?;
                CommandSignal::Piecewise { times, values }
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "unknown command signal '{other}'"
                )))
            }
        };
        signal.validate()?;
        Ok(signal)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub k_x: Vec<Vec<f64>>,
    pub k_r: Vec<Vec<f64>>,
    /// Scalars scaling identity adaptation gains.
    pub gamma_x: f64,
    pub gamma_r: f64,
    pub gamma_theta: f64,
    pub gamma_f: f64,
    /// Q = q_scale * I; P is always derived by the Lyapunov solve.
    pub q_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadzoneSection {
    /// Explicit deadzone size; mutually exclusive with `multiplier`.
    pub delta: Option<f64>,
    /// Deadzone as multiplier x computed floor (needs >= 2 to honor the
    /// tracking contract).
    pub multiplier: Option<f64>,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSection {
    /// Farthest-point center count on the manifold.
    pub center_count: usize,
    #[serde(default = "default_candidate_count")]
    pub candidate_count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub dt: f64,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Everything `simulate` needs, assembled and cross-validated from one
/// config document.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub plant: PlantSpec,
    pub reference: ReferenceSpec,
    pub gains: GainSpec,
    pub deadzone: DeadzoneSpec,
    pub subspace: Subspace,
    pub initial: AdaptiveState,
    pub params: SimulationParams,
    pub seed: u64,
    pub floor: DeadzoneFloor,
    pub tracking_radius: f64,
}

/// Build the full closed-loop setup: kernel and manifold, subspace
/// centers by farthest-point selection, matched reference and Lyapunov
/// P, the deadzone floor over a seeded probe cloud, and the initial
/// state with zero estimates.
pub fn assemble_simulation(
    config: &SimulateConfig,
    seed_override: Option<u64>,
) -> Result<SimulationSetup> {
    let kernel = config.kernel.build()?;
    let manifold = config.manifold.build()?;
    let seed = seed_override.unwrap_or(config.integration.seed);

    let a = matrix_from_rows(&config.plant.a, "plant A")?;
    let b = matrix_from_rows(&config.plant.b, "plant B")?;
    let n = a.nrows();
    let m = b.ncols();
    let lambda = DMatrix::from_diagonal(&vector_from(&config.plant.lambda, "plant Lambda")?);
    let theta_true = matrix_from_rows(&config.plant.theta_true, "plant Theta")?;
    let regressor = Regressor::parse(&config.plant.regressor, n)?;
    let f_true = match config.plant.uncertainty.kind.as_str() {
        "zero" => {
            // A zero member keeps the plant exactly linear-parametric.
            let node = manifold.chart(&vec![0.0; manifold.intrinsic_dim()])?;
            KernelField::new(kernel.clone(), vec![node], vec![DVector::zeros(m)])?
        }
        _ => config
            .plant
            .uncertainty
            .build_field(&kernel, Some(&manifold), &[])?,
    };
    let plant = PlantSpec::new(
        a.clone(),
        b.clone(),
        lambda.clone(),
        theta_true,
        regressor,
        f_true,
        Some((&manifold, config.plant.manifold_tolerance)),
    )?;

    let k_x = matrix_from_rows(&config.gains.k_x, "gain Kx")?;
    let k_r = matrix_from_rows(&config.gains.k_r, "gain Kr")?;
    let (a_ref, b_ref) = build_matched_reference(&a, &b, &lambda, &k_x, &k_r)?;
    let command = config.reference.build_command()?;
    let x_ref0 = vector_from(&config.reference.x_ref0, "reference initial state")?;
    let reference = ReferenceSpec::new(a_ref.clone(), b_ref, command, config.reference.x_r_bound)?;

    if !(config.gains.q_scale.is_finite() && config.gains.q_scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "q_scale",
            value: config.gains.q_scale,
        });
    }
    let q = DMatrix::identity(n, n).scale(config.gains.q_scale);
    let p = lyapunov_solve(&a_ref, &q)?;
    let positive = |name: &'static str, v: f64| -> Result<f64> {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::InvalidParameter { name, value: v })
        }
    };
    let p_dim = plant.regressor.output_dim();
    let gains = GainSpec {
        k_x,
        k_r,
        gamma_x: DMatrix::identity(n, n).scale(positive("gamma_x", config.gains.gamma_x)?),
        gamma_r: DMatrix::identity(m, m).scale(positive("gamma_r", config.gains.gamma_r)?),
        gamma_theta: DMatrix::identity(p_dim, p_dim)
            .scale(positive("gamma_theta", config.gains.gamma_theta)?),
        gamma_f: positive("gamma_f", config.gains.gamma_f)?,
        q,
        p,
    };

    let candidates = dense_candidates(&manifold, config.subspace.candidate_count)?;
    let centers =
        farthest_point_sample(&manifold, config.subspace.center_count, &candidates)?;
    let subspace = build_subspace(&kernel, centers.points())?;

    let x0 = vector_from(&config.plant.x0, "plant initial state")?;
    let initial = AdaptiveState::with_zero_estimates(
        x0,
        x_ref0,
        m,
        plant.regressor.output_dim(),
        subspace.coeff_dim(),
    );

    let radius = tracking_radius(&plant, &gains, &subspace, &initial)?;
    let probe_radius = config.reference.x_r_bound + radius;
    let probes = probe_cloud(n, probe_radius, config.deadzone.probe_count, seed)?;
    let floor = deadzone_floor(&subspace, &plant.f_true, &gains, &plant.b, radius, &probes)?;

    let delta = match (config.deadzone.delta, config.deadzone.multiplier) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(Error::Unsupported(
                "deadzone section needs exactly one of delta or multiplier".into(),
            ))
        }
        (Some(delta), None) => delta,
        (None, Some(mult)) => {
            if !(mult.is_finite() && mult > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "deadzone multiplier",
                    value: mult,
                });
            }
            mult * floor.consistent
        }
    };
    let deadzone = DeadzoneSpec::new(delta)?;

    let params = SimulationParams {
        dt: config.integration.dt,
        t_final: config.integration.t_final,
        record_every: config.integration.record_every,
    };
    params.validate()?;

    Ok(SimulationSetup {
        plant,
        reference,
        gains,
        deadzone,
        subspace,
        initial,
        params,
        seed,
        floor,
        tracking_radius: radius,
    })
}

/// Parse one TOML document into a typed config.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Unsupported(format!("config parse error: {e}")))
}
