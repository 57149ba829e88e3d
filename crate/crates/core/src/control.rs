//! Model-reference adaptive control with a smoothed deadzone and a
//! kernel-subspace estimate of the nonparametric uncertainty.
//!
//! The closed loop couples the plant, the reference model, the matrix
//! gain estimates, and the stacked kernel coefficients into one RK4
//! state. Adaptation is driven through sigma'(e'Pe), so every estimate
//! derivative is exactly zero inside the deadzone.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approximation::{project_field, KernelField, Subspace};
use crate::error::{Error, Result};
use crate::geometry::Manifold;
use crate::kernel::Point;

// ===== Regressor =====

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feature {
    /// x[i]
    Coord(usize),
    /// x[i]·x[j]
    Product(usize, usize),
    /// sin(x[i])
    Sin(usize),
    /// cos(x[i])
    Cos(usize),
}

/// Fixed feature list Phi: R^n -> R^p. Parsed from compact strings:
/// `coord:i`, `prod:i:j`, `sin:i`, `cos:i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regressor {
    features: Vec<Feature>,
    state_dim: usize,
}

impl Regressor {
    pub fn parse(specs: &[String], state_dim: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::EmptyInput("regressor feature list"));
        }
        let index = |tok: &str| -> Result<usize> {
            let i: usize = tok
                .parse()
                .map_err(|_| Error::Unsupported(format!("bad feature index '{tok}'")))?;
            if i >= state_dim {
                return Err(Error::DimensionMismatch {
                    context: "regressor feature index",
                    expected: state_dim,
                    got: i,
                });
            }
            Ok(i)
        };
        let mut features = Vec::with_capacity(specs.len());
        for spec in specs {
            let parts: Vec<&str> = spec.split(':').collect();
            let feature = match parts.as_slice() {
                ["coord", i] => Feature::Coord(index(i)?),
                ["prod", i, j] => Feature::Product(index(i)?, index(j)?),
                ["sin", i] => Feature::Sin(index(i)?),
                ["cos", i] => Feature::Cos(index(i)?),
                _ => {
                    return Err(Error::Unsupported(format!(
                        "unknown regressor feature '{spec}'"
                    )))
                }
            };
            features.push(feature);
        }
        Ok(Self {
            features,
            state_dim,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.features.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "regressor input",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        Ok(DVector::from_iterator(
            self.features.len(),
            self.features.iter().map(|f| match *f {
                Feature::Coord(i) => x[i],
                Feature::Product(i, j) => x[i] * x[j],
                Feature::Sin(i) => x[i].sin(),
                Feature::Cos(i) => x[i].cos(),
            }),
        ))
    }
}

// ===== Specs =====

/// Plant: xdot = A x + B Lambda (mu + Theta' Phi(x) + f(x)).
#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Positive definite diagonal input-effectiveness matrix. Known to
    /// the Lyapunov monitor only, never to the controller.
    pub lambda: DMatrix<f64>,
    pub theta_true: DMatrix<f64>,
    pub regressor: Regressor,
    pub f_true: KernelField,
}

impl PlantSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        lambda: DMatrix<f64>,
        theta_true: DMatrix<f64>,
        regressor: Regressor,
        f_true: KernelField,
        manifold: Option<(&Manifold, f64)>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "plant A",
                expected: n,
                got: a.ncols(),
            });
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "plant B rows",
                expected: n,
                got: b.nrows(),
            });
        }
        let m = b.ncols();
        if lambda.nrows() != m || lambda.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "plant Lambda",
                expected: m,
                got: lambda.nrows(),
            });
        }
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    if !(lambda[(i, i)].is_finite() && lambda[(i, i)] > 0.0) {
                        return Err(Error::NotSpd("plant Lambda diagonal"));
                    }
                } else if lambda[(i, j)] != 0.0 {
                    return Err(Error::Unsupported(
                        "plant Lambda must be diagonal".into(),
                    ));
                }
            }
        }
        if regressor.state_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "regressor state dimension",
                expected: n,
                got: regressor.state_dim(),
            });
        }
        let p = regressor.output_dim();
        if theta_true.nrows() != p || theta_true.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "plant Theta rows",
                expected: p,
                got: theta_true.nrows(),
            });
        }
        if f_true.kernel().output_dim() != m {
            return Err(Error::DimensionMismatch {
                context: "uncertainty output dimension",
                expected: m,
                got: f_true.kernel().output_dim(),
            });
        }
        if let Some((manifold, tol)) = manifold {
            for node in f_true.nodes() {
                let d = manifold.distance_to(node)?;
                if d > tol {
                    return Err(Error::OffManifold {
                        distance: d,
                        tolerance: tol,
                    });
                }
            }
        }
        Ok(Self {
            a,
            b,
            lambda,
            theta_true,
            regressor,
            f_true,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Built-in command signals r(t).
#[derive(Debug, Clone)]
pub enum CommandSignal {
    Constant {
        value: DVector<f64>,
    },
    Sinusoid {
        amplitude: DVector<f64>,
        omega: f64,
        phase: f64,
    },
    /// Right-continuous step function; `times` strictly increasing and
    /// starting at 0.
    Piecewise {
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl CommandSignal {
    pub fn output_dim(&self) -> usize {
        match self {
            CommandSignal::Constant { value } => value.len(),
            CommandSignal::Sinusoid { amplitude, .. } => amplitude.len(),
            CommandSignal::Piecewise { values, .. } => values[0].len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CommandSignal::Constant { value } => {
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("constant command"));
                }
            }
            CommandSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if amplitude.iter().any(|v| !v.is_finite())
                    || !omega.is_finite()
                    || !phase.is_finite()
                {
                    return Err(Error::NonFinite("sinusoid command"));
                }
            }
            CommandSignal::Piecewise { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::DimensionMismatch {
                        context: "piecewise command times vs values",
                        expected: times.len(),
                        got: values.len(),
                    });
                }
                if times[0] != 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "piecewise command first breakpoint",
                        value: times[0],
                    });
                }
                for w in times.windows(2) {
                    if w[1] <= w[0] {
                        return Err(Error::Unsupported(
                            "piecewise command breakpoints must strictly increase".into(),
                        ));
                    }
                }
                let m = values[0].len();
                for v in values {
                    if v.len() != m {
                        return Err(Error::DimensionMismatch {
                            context: "piecewise command value",
                            expected: m,
                            got: v.len(),
                        });
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::NonFinite("piecewise command value"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            CommandSignal::Constant { value } => value.clone(),
            CommandSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            CommandSignal::Piecewise { times, values } => {
                let mut idx = 0;
                for (i, &bp) in times.iter().enumerate() {
                    if t >= bp {
                        idx = i;
                    } else {
                        break;
                    }
                }
                values[idx].clone()
            }
        }
    }

    /// Supremum of ||r(t)|| over t >= 0.
    pub fn sup_norm(&self) -> f64 {
        match self {
            CommandSignal::Constant { value } => value.norm(),
            CommandSignal::Sinusoid { amplitude, .. } => amplitude.norm(),
            CommandSignal::Piecewise { values, .. } => {
                values.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
        }
    }
}

/// Reference model: xref_dot = A_ref xref + B_ref r(t).
#[derive(Debug, Clone)]
pub struct ReferenceSpec {
    pub a_ref: DMatrix<f64>,
    pub b_ref: DMatrix<f64>,
    pub command: CommandSignal,
    /// Declared bound on ||x_ref(t)||; verified against the integrated
    /// reference trajectory before every simulation.
    pub x_r_bound: f64,
}

impl ReferenceSpec {
    pub fn new(
        a_ref: DMatrix<f64>,
        b_ref: DMatrix<f64>,
        command: CommandSignal,
        x_r_bound: f64,
    ) -> Result<Self> {
        let max_re = max_real_eigenvalue(&a_ref)?;
        if max_re >= 0.0 {
            return Err(Error::NotHurwitz {
                max_real_part: max_re,
            });
        }
        if b_ref.nrows() != a_ref.nrows() {
            return Err(Error::DimensionMismatch {
                context: "reference B rows",
                expected: a_ref.nrows(),
                got: b_ref.nrows(),
            });
        }
        command.validate()?;
        if command.output_dim() != b_ref.ncols() {
            return Err(Error::DimensionMismatch {
                context: "command dimension",
                expected: b_ref.ncols(),
                got: command.output_dim(),
            });
        }
        if !(x_r_bound.is_finite() && x_r_bound > 0.0) {
            return Err(Error::InvalidParameter {
                name: "reference trajectory bound",
                value: x_r_bound,
            });
        }
        Ok(Self {
            a_ref,
            b_ref,
            command,
            x_r_bound,
        })
    }
}

/// Ideal gains, adaptation gains, and the Lyapunov pair (Q, P).
#[derive(Debug, Clone)]
pub struct GainSpec {
    pub k_x: DMatrix<f64>,
    pub k_r: DMatrix<f64>,
    pub gamma_x: DMatrix<f64>,
    pub gamma_r: DMatrix<f64>,
    pub gamma_theta: DMatrix<f64>,
    pub gamma_f: f64,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

/// Smoothed deadzone sigma(z) = max(0, z - Delta)^2.
#[derive(Debug, Clone, Copy)]
pub struct DeadzoneSpec {
    pub delta: f64,
}

impl DeadzoneSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "deadzone size",
                value: delta,
            });
        }
        Ok(Self { delta })
    }
}

/// (sigma, sigma') at z >= 0: both vanish on [0, Delta]; sigma' is
/// globally Lipschitz with constant 2.
pub fn deadzone_eval(dz: &DeadzoneSpec, z: f64) -> Result<(f64, f64)> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "deadzone argument",
            value: z,
        });
    }
    let excess = (z - dz.delta).max(0.0);
    Ok((excess * excess, 2.0 * excess))
}

/// Full adaptive state. The tracking error e = x - x_ref is always
/// derived, never stored.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_ref: DVector<f64>,
    pub k_x_hat: DMatrix<f64>,
    pub k_r_hat: DMatrix<f64>,
    pub theta_hat: DMatrix<f64>,
    pub c_f_hat: DVector<f64>,
}

impl AdaptiveState {
    /// Start with zero estimates everywhere.
    pub fn with_zero_estimates(
        x0: DVector<f64>,
        x_ref0: DVector<f64>,
        input_dim: usize,
        regressor_dim: usize,
        coeff_dim: usize,
    ) -> Self {
        let n = x0.len();
        Self {
            t: 0.0,
            x: x0,
            x_ref: x_ref0,
            k_x_hat: DMatrix::zeros(n, input_dim),
            k_r_hat: DMatrix::zeros(input_dim, input_dim),
            theta_hat: DMatrix::zeros(regressor_dim, input_dim),
            c_f_hat: DVector::zeros(coeff_dim),
        }
    }

    pub fn error(&self) -> DVector<f64> {
        &self.x - &self.x_ref
    }
}

// ===== Matrix utilities =====

fn max_real_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "eigenvalue matrix",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalue matrix"));
    }
    Ok(a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn require_spd(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSpd(name));
    }
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSpd(name));
            }
        }
    }
    if nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(Error::NotSpd(name));
    }
    Ok(())
}

fn symmetric_extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

// ===== Matching and Lyapunov construction =====

/// A_ref = A + B Lambda Kx', B_ref = B Lambda Kr: exact matching by
/// construction. Fails if the assembled A_ref is not Hurwitz.
pub fn build_matched_reference(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    k_x: &DMatrix<f64>,
    k_r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if k_x.nrows() != n || k_x.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "matching gain Kx",
            expected: n,
            got: k_x.nrows(),
        });
    }
    if k_r.nrows() != m || k_r.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "matching gain Kr",
            expected: m,
            got: k_r.nrows(),
        });
    }
    let a_ref = a + b * lambda * k_x.transpose();
    let b_ref = b * lambda * k_r;
    let max_re = max_real_eigenvalue(&a_ref)?;
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz {
            max_real_part: max_re,
        });
    }
    Ok((a_ref, b_ref))
}

/// Solve A_ref' P + P A_ref = -Q by the Kronecker-vectorized dense
/// linear system; P is symmetrized and validated SPD with residual at
/// most 1e-10 ||Q||_F.
pub fn lyapunov_solve(a_ref: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_ref.nrows();
    let max_re = max_real_eigenvalue(a_ref)?;
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz {
            max_real_part: max_re,
        });
    }
    require_spd(q, "Lyapunov Q")?;
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a_ref.transpose();
    // vec(A'P) = (I (x) A') vec(P); vec(PA) = (A' (x) I) vec(P).
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let solved = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::Unsupported("singular Lyapunov system".into()))?;
    let p_raw = DMatrix::from_column_slice(n, n, solved.as_slice());
    let p = 0.5 * (&p_raw + p_raw.transpose());
    let residual = (a_ref.transpose() * &p + &p * a_ref + q).norm();
    let tol = 1e-10 * q.norm();
    if residual > tol {
        return Err(Error::ResidualTooLarge {
            quantity: "Lyapunov equation",
            residual,
            tolerance: tol,
        });
    }
    require_spd(&p, "Lyapunov P")?;
    Ok(p)
}

/// Hard preconditions checked before any simulation: matching residuals
/// and the Lyapunov residual at 1e-10, SPD adaptation gains.
pub fn validate_gains(
    plant: &PlantSpec,
    reference: &ReferenceSpec,
    gains: &GainSpec,
) -> Result<()> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    let p_dim = plant.regressor.output_dim();
    if gains.k_x.nrows() != n || gains.k_x.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "gain Kx",
            expected: n,
            got: gains.k_x.nrows(),
        });
    }
    if gains.k_r.nrows() != m || gains.k_r.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "gain Kr",
            expected: m,
            got: gains.k_r.nrows(),
        });
    }
    if gains.gamma_theta.nrows() != p_dim {
        return Err(Error::DimensionMismatch {
            context: "gain Gamma_Theta",
            expected: p_dim,
            got: gains.gamma_theta.nrows(),
        });
    }
    require_spd(&gains.gamma_x, "Gamma_x")?;
    require_spd(&gains.gamma_r, "Gamma_r")?;
    require_spd(&gains.gamma_theta, "Gamma_Theta")?;
    if !(gains.gamma_f.is_finite() && gains.gamma_f > 0.0) {
        return Err(Error::InvalidParameter {
            name: "Gamma_f",
            value: gains.gamma_f,
        });
    }
    require_spd(&gains.q, "Q")?;
    require_spd(&gains.p, "P")?;

    let matching_a =
        (&reference.a_ref - &plant.a - &plant.b * &plant.lambda * gains.k_x.transpose()).norm();
    if matching_a > 1e-10 {
        return Err(Error::ResidualTooLarge {
            quantity: "state matching condition",
            residual: matching_a,
            tolerance: 1e-10,
        });
    }
    let matching_b = (&reference.b_ref - &plant.b * &plant.lambda * &gains.k_r).norm();
    if matching_b > 1e-10 {
        return Err(Error::ResidualTooLarge {
            quantity: "command matching condition",
            residual: matching_b,
            tolerance: 1e-10,
        });
    }
    let lyap = (reference.a_ref.transpose() * &gains.p + &gains.p * &reference.a_ref + &gains.q)
        .norm();
    let tol = 1e-10 * gains.q.norm();
    if lyap > tol {
        return Err(Error::ResidualTooLarge {
            quantity: "Lyapunov residual",
            residual: lyap,
            tolerance: tol,
        });
    }
    Ok(())
}

// ===== Controller and learning laws =====

/// mu = Kx_hat' x + Kr_hat' r - Theta_hat' Phi(x) - f_hat(x).
pub fn controller(
    state: &AdaptiveState,
    regressor: &Regressor,
    subspace: &Subspace,
    r_t: &DVector<f64>,
) -> Result<DVector<f64>> {
    let phi = regressor.eval(&state.x)?;
    let f_hat = subspace.eval_with_coefficients(&state.c_f_hat, &state.x)?;
    Ok(state.k_x_hat.transpose() * &state.x + state.k_r_hat.transpose() * r_t
        - state.theta_hat.transpose() * phi
        - f_hat)
}

/// Estimate derivatives, all proportional to sigma'(e'Pe).
#[derive(Debug, Clone)]
pub struct LearningRhs {
    pub k_x_dot: DMatrix<f64>,
    pub k_r_dot: DMatrix<f64>,
    pub theta_dot: DMatrix<f64>,
    pub c_f_dot: DVector<f64>,
}

impl LearningRhs {
    fn zeros(n: usize, m: usize, p: usize, coeff: usize) -> Self {
        Self {
            k_x_dot: DMatrix::zeros(n, m),
            k_r_dot: DMatrix::zeros(m, m),
            theta_dot: DMatrix::zeros(p, m),
            c_f_dot: DVector::zeros(coeff),
        }
    }

    /// Largest absolute entry across all four blocks.
    pub fn max_abs(&self) -> f64 {
        let mut worst = 0.0_f64;
        for v in self
            .k_x_dot
            .iter()
            .chain(self.k_r_dot.iter())
            .chain(self.theta_dot.iter())
            .chain(self.c_f_dot.iter())
        {
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// Learning laws, with s' = sigma'(e'Pe):
///   Kx_hat_dot  = -s' Gamma_x x (e'PB)
///   Kr_hat_dot  = -s' Gamma_r r (e'PB)
///   Theta_hat_dot = +s' Gamma_Theta Phi(x) (e'PB)
///   c_f_hat_dot = s' Gamma_f K^{-1} [K(center_i, x) B'Pe]_i
/// The kernel law is the coefficient form of projecting the section
/// K(., x) B'Pe onto the subspace.
pub fn learning_rhs(
    state: &AdaptiveState,
    gains: &GainSpec,
    deadzone: &DeadzoneSpec,
    subspace: &Subspace,
    regressor: &Regressor,
    b: &DMatrix<f64>,
    r_t: &DVector<f64>,
) -> Result<LearningRhs> {
    let n = state.x.len();
    let m = b.ncols();
    let p = regressor.output_dim();
    let coeff = subspace.coeff_dim();
    let e = state.error();
    let z = e.dot(&(&gains.p * &e));
    let (_, s_prime) = deadzone_eval(deadzone, z.max(0.0))?;
    if s_prime == 0.0 {
        return Ok(LearningRhs::zeros(n, m, p, coeff));
    }
    // Row vector e'PB as a 1 x m matrix.
    let epb = (e.transpose() * &gains.p * b).transpose();
    let phi = regressor.eval(&state.x)?;
    let k_x_dot = -s_prime * (&gains.gamma_x * &state.x) * epb.transpose();
    let k_r_dot = -s_prime * (&gains.gamma_r * r_t) * epb.transpose();
    let theta_dot = s_prime * (&gains.gamma_theta * phi) * epb.transpose();
    let c_f_dot = if coeff == 0 {
        DVector::zeros(0)
    } else {
        let rhs = subspace.kernel_column(&state.x)? * &epb;
        s_prime * gains.gamma_f * subspace.solve(&rhs)?
    };
    Ok(LearningRhs {
        k_x_dot,
        k_r_dot,
        theta_dot,
        c_f_dot,
    })
}

/// Full closed-loop derivative at (t, state).
#[derive(Debug, Clone)]
pub struct ClosedLoopRhs {
    pub x_dot: DVector<f64>,
    pub x_ref_dot: DVector<f64>,
    pub learning: LearningRhs,
    pub mu: DVector<f64>,
}

pub fn closed_loop_rhs(
    state: &AdaptiveState,
    plant: &PlantSpec,
    reference: &ReferenceSpec,
    gains: &GainSpec,
    deadzone: &DeadzoneSpec,
    subspace: &Subspace,
    t: f64,
) -> Result<ClosedLoopRhs> {
    let r_t = reference.command.eval(t);
    let mu = controller(state, &plant.regressor, subspace, &r_t)?;
    let phi = plant.regressor.eval(&state.x)?;
    let f_val = plant.f_true.eval(&state.x)?;
    let input = &mu + plant.theta_true.transpose() * phi + f_val;
    let x_dot = &plant.a * &state.x + &plant.b * &plant.lambda * input;
    let x_ref_dot = &reference.a_ref * &state.x_ref + &reference.b_ref * &r_t;
    let learning = learning_rhs(
        state,
        gains,
        deadzone,
        subspace,
        &plant.regressor,
        &plant.b,
        &r_t,
    )?;
    Ok(ClosedLoopRhs {
        x_dot,
        x_ref_dot,
        learning,
        mu,
    })
}

// ===== Simulation =====

/// States beyond this magnitude are declared divergent before their
/// squares overflow inside e'Pe.
const DIVERGENCE_GUARD: f64 = 1e150;

#[derive(Debug, Clone, Copy)]
pub struct SimulationParams {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "integration step",
                value: self.dt,
            });
        }
        if !(self.t_final.is_finite() && self.t_final >= 10.0 * self.dt) {
            return Err(Error::InvalidParameter {
                name: "final time (needs T >= 10 dt)",
                value: self.t_final,
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record interval",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// One recorded sample. The diagnostics beyond the fixed CSV columns
/// (estimate derivative magnitude, RHS magnitude) support the deadzone
/// freeze and integrator-tolerance checks.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_ref: DVector<f64>,
    pub norm_e: f64,
    pub e_pe: f64,
    pub v: f64,
    pub mu: DVector<f64>,
    pub sigma_prime: f64,
    pub estimate_derivative_max: f64,
    pub rhs_magnitude: f64,
    /// Packed estimate snapshot (Kx_hat, Kr_hat, Theta_hat column-major,
    /// then the kernel coefficients), for the estimates CSV.
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    rows: Vec<TraceRow>,
    dt: f64,
    record_every: usize,
}

impl Trace {
    /// Reassemble a trace from recorded rows, e.g. to audit a stored run
    /// with [`check_descent`] or [`check_deadzone_freeze`]. Rows must be
    /// in strictly increasing time order.
    pub fn from_rows(rows: Vec<TraceRow>, dt: f64, record_every: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("trace rows"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "integration step",
                value: dt,
            });
        }
        if record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record stride",
                value: 0.0,
            });
        }
        for row in &rows {
            if !row.t.is_finite() {
                return Err(Error::NonFinite("trace row time"));
            }
        }
        for w in rows.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::Unsupported(
                    "trace rows must be in strictly increasing time order".into(),
                ));
            }
        }
        Ok(Self {
            rows,
            dt,
            record_every,
        })
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn record_every(&self) -> usize {
        self.record_every
    }
}

struct StateLayout {
    n: usize,
    m: usize,
    p: usize,
    coeff: usize,
}

impl StateLayout {
    fn total(&self) -> usize {
        2 * self.n + self.n * self.m + self.m * self.m + self.p * self.m + self.coeff
    }

    fn pack(&self, state: &AdaptiveState) -> DVector<f64> {
        let mut y = DVector::zeros(self.total());
        let mut at = 0;
        for v in state.x.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in state.x_ref.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in state.k_x_hat.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in state.k_r_hat.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in state.theta_hat.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in state.c_f_hat.iter() {
            y[at] = *v;
            at += 1;
        }
        y
    }

    fn unpack(&self, t: f64, y: &DVector<f64>) -> AdaptiveState {
        let mut at = 0;
        let take_vec = |at: &mut usize, len: usize| {
            let v = DVector::from_fn(len, |i, _| y[*at + i]);
            *at += len;
            v
        };
        let x = take_vec(&mut at, self.n);
        let x_ref = take_vec(&mut at, self.n);
        // Matrices iterate column-major, matching pack above.
        let take_mat = |at: &mut usize, r: usize, c: usize| {
            let m = DMatrix::from_fn(r, c, |i, j| y[*at + j * r + i]);
            *at += r * c;
            m
        };
        let k_x_hat = take_mat(&mut at, self.n, self.m);
        let k_r_hat = take_mat(&mut at, self.m, self.m);
        let theta_hat = take_mat(&mut at, self.p, self.m);
        let c_f_hat = take_vec(&mut at, self.coeff);
        AdaptiveState {
            t,
            x,
            x_ref,
            k_x_hat,
            k_r_hat,
            theta_hat,
            c_f_hat,
        }
    }

    fn pack_rhs(&self, rhs: &ClosedLoopRhs) -> DVector<f64> {
        let mut y = DVector::zeros(self.total());
        let mut at = 0;
        for v in rhs.x_dot.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in rhs.x_ref_dot.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in rhs.learning.k_x_dot.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in rhs.learning.k_r_dot.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in rhs.learning.theta_dot.iter() {
            y[at] = *v;
            at += 1;
        }
        for v in rhs.learning.c_f_dot.iter() {
            y[at] = *v;
            at += 1;
        }
        y
    }
}

/// Everything precomputed for the Lyapunov monitor.
struct MonitorCache {
    gamma_x_inv: DMatrix<f64>,
    gamma_r_inv: DMatrix<f64>,
    gamma_theta_inv: DMatrix<f64>,
    /// Coefficients of the subspace projection of the true uncertainty.
    c_star: DVector<f64>,
    /// Symmetrized K (I (x) Lambda) for the kernel-term quadratic form.
    weighted_gram: DMatrix<f64>,
}

impl MonitorCache {
    fn build(plant: &PlantSpec, gains: &GainSpec, subspace: &Subspace) -> Result<Self> {
        let invert = |m: &DMatrix<f64>, name: &'static str| -> Result<DMatrix<f64>> {
            m.clone().try_inverse().ok_or(Error::NotSpd(name))
        };
        let c_star = if subspace.is_empty() {
            DVector::zeros(0)
        } else {
            project_field(subspace, &plant.f_true)?.stacked_coefficients()
        };
        let n_centers = subspace.len();
        let weighted_gram = if n_centers == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let eye_n = DMatrix::<f64>::identity(n_centers, n_centers);
            let w = subspace.grammian() * eye_n.kronecker(&plant.lambda);
            0.5 * (&w + w.transpose())
        };
        Ok(Self {
            gamma_x_inv: invert(&gains.gamma_x, "Gamma_x inverse")?,
            gamma_r_inv: invert(&gains.gamma_r, "Gamma_r inverse")?,
            gamma_theta_inv: invert(&gains.gamma_theta, "Gamma_Theta inverse")?,
            c_star,
            weighted_gram,
        })
    }

    /// Lambda-weighted parameter-error terms: trace terms for the three
    /// matrix estimates plus the kernel-coefficient quadratic form.
    fn parameter_terms(
        &self,
        state: &AdaptiveState,
        plant: &PlantSpec,
        gains: &GainSpec,
    ) -> f64 {
        let trace_term = |tilde: &DMatrix<f64>, gamma_inv: &DMatrix<f64>| -> f64 {
            (tilde.transpose() * gamma_inv * tilde * &plant.lambda).trace()
        };
        let kx_tilde = &state.k_x_hat - &gains.k_x;
        let kr_tilde = &state.k_r_hat - &gains.k_r;
        let theta_tilde = &state.theta_hat - &plant.theta_true;
        let mut total = trace_term(&kx_tilde, &self.gamma_x_inv)
            + trace_term(&kr_tilde, &self.gamma_r_inv)
            + trace_term(&theta_tilde, &self.gamma_theta_inv);
        if !self.c_star.is_empty() {
            let c_tilde = &state.c_f_hat - &self.c_star;
            total += c_tilde.dot(&(&self.weighted_gram * &c_tilde)) / gains.gamma_f;
        }
        total
    }

    /// (V, e'Pe): the candidate function
    /// sigma(e'Pe) + sum of Lambda-weighted trace terms + kernel term.
    fn lyapunov_value(
        &self,
        state: &AdaptiveState,
        plant: &PlantSpec,
        gains: &GainSpec,
        deadzone: &DeadzoneSpec,
    ) -> Result<(f64, f64)> {
        let e = state.error();
        let z = e.dot(&(&gains.p * &e)).max(0.0);
        let (sigma, _) = deadzone_eval(deadzone, z)?;
        Ok((sigma + self.parameter_terms(state, plant, gains), z))
    }
}

/// Classical fixed-step RK4 integration of the closed loop. Records
/// every `record_every` steps (step 0 included). Aborts with the
/// offending time if the state leaves the finite range, and rejects
/// reference trajectories that break their declared bound.
pub fn simulate(
    plant: &PlantSpec,
    reference: &ReferenceSpec,
    gains: &GainSpec,
    deadzone: &DeadzoneSpec,
    subspace: &Subspace,
    initial: &AdaptiveState,
    params: &SimulationParams,
) -> Result<Trace> {
    params.validate()?;
    validate_gains(plant, reference, gains)?;
    let n = plant.state_dim();
    let m = plant.input_dim();
    if initial.x.len() != n || initial.x_ref.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: n,
            got: initial.x.len(),
        });
    }
    if initial.c_f_hat.len() != subspace.coeff_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial kernel coefficients",
            expected: subspace.coeff_dim(),
            got: initial.c_f_hat.len(),
        });
    }
    let steps = (params.t_final / params.dt).round() as usize;

    // Dry-run the (autonomous, linear) reference model to confirm the
    // declared trajectory bound before committing to the full loop.
    {
        let mut xr = initial.x_ref.clone();
        let mut worst = xr.norm();
        let ref_rhs = |t: f64, x: &DVector<f64>| -> DVector<f64> {
            &reference.a_ref * x + &reference.b_ref * reference.command.eval(t)
        };
        for step in 0..steps {
            let t = step as f64 * params.dt;
            let h = params.dt;
            let k1 = ref_rhs(t, &xr);
            let k2 = ref_rhs(t + 0.5 * h, &(&xr + 0.5 * h * &k1));
            let k3 = ref_rhs(t + 0.5 * h, &(&xr + 0.5 * h * &k2));
            let k4 = ref_rhs(t + h, &(&xr + h * &k3));
            xr += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            worst = worst.max(xr.norm());
        }
        if worst > reference.x_r_bound {
            return Err(Error::ResidualTooLarge {
                quantity: "reference trajectory norm",
                residual: worst,
                tolerance: reference.x_r_bound,
            });
        }
    }

    let layout = StateLayout {
        n,
        m,
        p: plant.regressor.output_dim(),
        coeff: subspace.coeff_dim(),
    };
    let cache = MonitorCache::build(plant, gains, subspace)?;

    let eval_rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        if y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
            return Err(Error::Diverged { t });
        }
        let state = layout.unpack(t, y);
        let rhs = closed_loop_rhs(&state, plant, reference, gains, deadzone, subspace, t)?;
        Ok(layout.pack_rhs(&rhs))
    };

    let mut y = layout.pack(initial);
    let mut rows = Vec::with_capacity(steps / params.record_every + 2);

    let mut record = |step: usize, y: &DVector<f64>| -> Result<()> {
        let t = step as f64 * params.dt;
        let state = layout.unpack(t, y);
        let rhs = closed_loop_rhs(&state, plant, reference, gains, deadzone, subspace, t)?;
        let (v, z) = cache.lyapunov_value(&state, plant, gains, deadzone)?;
        let (_, s_prime) = deadzone_eval(deadzone, z)?;
        let packed = layout.pack_rhs(&rhs);
        let rhs_magnitude = packed.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let estimates = y.as_slice()[2 * layout.n..].to_vec();
        rows.push(TraceRow {
            t,
            norm_e: state.error().norm(),
            e_pe: z,
            v,
            mu: rhs.mu.clone(),
            sigma_prime: s_prime,
            estimate_derivative_max: rhs.learning.max_abs(),
            rhs_magnitude,
            estimates,
            x: state.x,
            x_ref: state.x_ref,
        });
        Ok(())
    };

    record(0, &y)?;
    for step in 0..steps {
        let t = step as f64 * params.dt;
        let h = params.dt;
        let k1 = eval_rhs(t, &y)?;
        let k2 = eval_rhs(t + 0.5 * h, &(&y + 0.5 * h * &k1))?;
        let k3 = eval_rhs(t + 0.5 * h, &(&y + 0.5 * h * &k2))?;
        let k4 = eval_rhs(t + h, &(&y + h * &k3))?;
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: t + h });
        }
        let next = step + 1;
        if next % params.record_every == 0 || next == steps {
            record(next, &y)?;
        }
    }

    Ok(Trace {
        rows,
        dt: params.dt,
        record_every: params.record_every,
    })
}

// ===== Post-run checks and bounds =====

/// (max ||e||, max e'Pe) over the final `tail_fraction` of samples.
pub fn ultimate_error(trace: &Trace, tail_fraction: f64) -> Result<(f64, f64)> {
    if trace.rows.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "tail fraction",
            value: tail_fraction,
        });
    }
    let len = trace.rows.len();
    let count = ((len as f64 * tail_fraction).ceil() as usize).clamp(1, len);
    let tail = &trace.rows[len - count..];
    let max_e = tail.iter().map(|r| r.norm_e).fold(0.0, f64::max);
    let max_epe = tail.iter().map(|r| r.e_pe).fold(0.0, f64::max);
    Ok((max_e, max_epe))
}

/// Every recorded row inside the deadzone must carry exactly zero
/// estimate derivatives. Returns the number of frozen rows.
pub fn check_deadzone_freeze(trace: &Trace, delta: f64) -> Result<usize> {
    let mut frozen = 0;
    for row in trace.rows() {
        if row.e_pe <= delta {
            if row.estimate_derivative_max != 0.0 {
                return Err(Error::Unsupported(format!(
                    "estimates moved inside the deadzone at t = {}: max derivative {:e}",
                    row.t, row.estimate_derivative_max
                )));
            }
            frozen += 1;
        }
    }
    Ok(frozen)
}

/// All recorded estimate snapshots must stay within
/// 1e3 x (initial Frobenius norm) + 1e3. Returns the largest norm seen.
pub fn check_estimate_bound(trace: &Trace) -> Result<f64> {
    let rows = trace.rows();
    if rows.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    let norm = |row: &TraceRow| -> f64 {
        row.estimates.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let bound = 1e3 * norm(&rows[0]) + 1e3;
    let mut worst = 0.0_f64;
    for row in rows {
        let n = norm(row);
        if n > bound {
            return Err(Error::Unsupported(format!(
                "estimates escaped the boundedness envelope at t = {}: norm {:e} exceeds {:e}",
                row.t, n, bound
            )));
        }
        worst = worst.max(n);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct DescentReport {
    /// Intervals whose left endpoint was outside the deadzone.
    pub checked_intervals: usize,
    /// Largest (dV/dt - tol) over checked intervals; <= 0 when descent
    /// holds everywhere.
    pub worst_excess: f64,
}

/// Finite-difference Lyapunov descent over the recorded trace: at every
/// interval starting outside the deadzone, dV/dt must not exceed
/// tol = 10·dt·(local RHS magnitude). A violation is reported loudly
/// with a pointer at the learning-law sign asymmetry, which is the
/// designed-in suspect for persistent ascent.
pub fn check_descent(trace: &Trace, delta: f64) -> Result<DescentReport> {
    let rows = trace.rows();
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            context: "descent check rows",
            needed: 2,
            have: rows.len(),
        });
    }
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.e_pe <= delta {
            continue;
        }
        let dvdt = (b.v - a.v) / (b.t - a.t);
        let tol = 10.0 * trace.dt * a.rhs_magnitude;
        checked += 1;
        worst = worst.max(dvdt - tol);
        if dvdt > tol {
            return Err(Error::Unsupported(format!(
                "Lyapunov descent violated at t = {}: dV/dt = {:e} exceeds tol = {:e}. \
                 If this persists across step sizes, re-examine the learning-law sign \
                 asymmetry (minus on the gain laws, plus on the regressor and kernel \
                 laws) rather than silently flipping any sign.",
                a.t, dvdt, tol
            )));
        }
    }
    Ok(DescentReport {
        checked_intervals: checked,
        worst_excess: if checked == 0 { 0.0 } else { worst },
    })
}

/// Deterministic uniform cloud in the centered ball of the given
/// radius: isotropic Gaussian directions (Box-Muller) with the radial
/// inverse-CDF scaling.
pub fn probe_cloud(dim: usize, radius: f64, count: usize, seed: u64) -> Result<Vec<Point>> {
    if dim == 0 {
        return Err(Error::InvalidParameter {
            name: "probe cloud dimension",
            value: 0.0,
        });
    }
    if count == 0 {
        return Err(Error::EmptyInput("probe cloud"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "probe cloud radius",
            value: radius,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal_pair = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = std::f64::consts::TAU * u2;
        (r * a.cos(), r * a.sin())
    };
    let mut cloud = Vec::with_capacity(count);
    while cloud.len() < count {
        let mut g = Vec::with_capacity(dim);
        while g.len() < dim {
            let (z0, z1) = normal_pair(&mut rng);
            g.push(z0);
            if g.len() < dim {
                g.push(z1);
            }
        }
        let dir = DVector::from_vec(g);
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.gen();
        let scale = radius * u.powf(1.0 / dim as f64) / norm;
        cloud.push(dir * scale);
    }
    Ok(cloud)
}

/// Both deadzone-floor variants for a given subspace and uncertainty.
#[derive(Debug, Clone, Copy)]
pub struct DeadzoneFloor {
    /// (lambda_max(P)/lambda_min(Q))·R·||PB||·sup-residual; the
    /// dimensionally consistent form that drives all tests.
    pub consistent: f64,
    /// R·||PB||·lambda_min(Q)·lambda_min(P)·sup-residual; logged for
    /// comparison only.
    pub printed: f64,
    /// sup over the probe cloud of ||(f - proj f)(xi)||.
    pub sup_residual: f64,
}

/// Floor on admissible deadzone sizes induced by the projection
/// residual of the true uncertainty over the operating region; B is the
/// plant input matrix.
pub fn deadzone_floor(
    subspace: &Subspace,
    f_true: &KernelField,
    gains: &GainSpec,
    b: &DMatrix<f64>,
    tracking_radius: f64,
    probes: &[Point],
) -> Result<DeadzoneFloor> {
    if probes.is_empty() {
        return Err(Error::EmptyInput("deadzone floor probe cloud"));
    }
    if !(tracking_radius.is_finite() && tracking_radius >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "tracking radius",
            value: tracking_radius,
        });
    }
    let projection = project_field(subspace, f_true)?;
    let mut sup_residual = 0.0_f64;
    for xi in probes {
        let r = (f_true.eval(xi)? - projection.eval(xi)?).norm();
        if r > sup_residual {
            sup_residual = r;
        }
    }
    let (p_min, p_max) = symmetric_extreme_eigenvalues(&gains.p);
    let (q_min, _) = symmetric_extreme_eigenvalues(&gains.q);
    let pb_norm = spectral_norm(&(&gains.p * b));
    let consistent = (p_max / q_min) * tracking_radius * pb_norm * sup_residual;
    let printed = tracking_radius * pb_norm * q_min * p_min * sup_residual;
    Ok(DeadzoneFloor {
        consistent,
        printed,
        sup_residual,
    })
}

/// Excursion radius R from the initial Lyapunov budget:
/// sqrt(2·(e0'P e0 + parameter terms)/lambda_min(P)), the factor 2
/// being a safety margin over the invariant-set argument.
pub fn tracking_radius(
    plant: &PlantSpec,
    gains: &GainSpec,
    subspace: &Subspace,
    initial: &AdaptiveState,
) -> Result<f64> {
    let cache = MonitorCache::build(plant, gains, subspace)?;
    let e = initial.error();
    let e_pe = e.dot(&(&gains.p * &e)).max(0.0);
    let budget = e_pe + cache.parameter_terms(initial, plant, gains);
    let (p_min, _) = symmetric_extreme_eigenvalues(&gains.p);
    if p_min <= 0.0 {
        return Err(Error::NotSpd("P in tracking radius"));
    }
    Ok((2.0 * budget / p_min).sqrt())
}
