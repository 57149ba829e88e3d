//! Scalar and operator-valued kernel definitions, evaluation, and
//! admissibility checks.
//!
//! Scalar kernels are radial, normalized so that k(x,x) = 1; all amplitude
//! information lives in the weight matrix of an [`OperatorKernel`]. The
//! operator-valued kernels are separable, K(x1,x2) = B·k(x1,x2) with B
//! symmetric positive semidefinite (B = I_m recovers the diagonal case).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A point of the ambient state space.
pub type Point = DVector<f64>;

// ===== Scalar kernels =====

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Matern,
    Wendland,
    Gaussian,
}

/// Radial scalar kernel, normalized on the diagonal.
///
/// Supported catalog: Matérn with ν ∈ {1/2, 3/2, 5/2} (closed forms),
/// Wendland φ_{3,1}, Gaussian. The Fourier decay order of the Matérn family
/// in ambient dimension n is s = ν + n/2; Wendland φ_{3,1} has s = 3 (its
/// native Sobolev order in the design dimension d = 3, valid for n ≤ 3);
/// the Gaussian has no finite decay order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarKernel {
    family: KernelFamily,
    smoothness_param: f64,
    lengthscale: f64,
}

impl ScalarKernel {
    pub fn matern(nu: f64, lengthscale: f64) -> Result<Self> {
        if !(nu == 0.5 || nu == 1.5 || nu == 2.5) {
            return Err(Error::InvalidParameter {
                name: "matern nu (supported: 0.5, 1.5, 2.5)",
                value: nu,
            });
        }
        Self::validated(KernelFamily::Matern, nu, lengthscale)
    }

    /// Wendland φ_{3,1}(t) = (1−t)⁴₊ (4t+1); `index` must be 1.
    pub fn wendland(index: f64, lengthscale: f64) -> Result<Self> {
        if index != 1.0 {
            return Err(Error::InvalidParameter {
                name: "wendland index (supported: 1)",
                value: index,
            });
        }
        Self::validated(KernelFamily::Wendland, index, lengthscale)
    }

    pub fn gaussian(lengthscale: f64) -> Result<Self> {
        Self::validated(KernelFamily::Gaussian, 0.0, lengthscale)
    }

    fn validated(family: KernelFamily, smoothness_param: f64, lengthscale: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lengthscale",
                value: lengthscale,
            });
        }
        Ok(Self {
            family,
            smoothness_param,
            lengthscale,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn smoothness_param(&self) -> f64 {
        self.smoothness_param
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Fourier/Sobolev decay order s in ambient dimension n, when finite.
    /// Rate predictions require s > n/2; the Gaussian is excluded.
    pub fn decay_order_s(&self, ambient_dim: usize) -> Option<f64> {
        match self.family {
            KernelFamily::Matern => Some(self.smoothness_param + ambient_dim as f64 / 2.0),
            KernelFamily::Wendland => Some(3.0),
            KernelFamily::Gaussian => None,
        }
    }

    /// Radial profile k(r) with k(0) = 1.
    fn profile(&self, r: f64) -> f64 {
        let t = r / self.lengthscale;
        match self.family {
            KernelFamily::Matern => {
                if self.smoothness_param == 0.5 {
                    (-t).exp()
                } else if self.smoothness_param == 1.5 {
                    let a = 3.0_f64.sqrt() * t;
                    (1.0 + a) * (-a).exp()
                } else {
                    let a = 5.0_f64.sqrt() * t;
                    (1.0 + a + a * a / 3.0) * (-a).exp()
                }
            }
            KernelFamily::Wendland => {
                if t >= 1.0 {
                    0.0
                } else {
                    let u = 1.0 - t;
                    let u2 = u * u;
                    u2 * u2 * (4.0 * t + 1.0)
                }
            }
            KernelFamily::Gaussian => (-0.5 * t * t).exp(),
        }
    }

    /// Evaluate k(x1, x2). Symmetric; in (0,1] for Matérn/Gaussian and
    /// [0,1] for Wendland.
    pub fn eval(&self, x1: &Point, x2: &Point) -> Result<f64> {
        let r = distance(x1, x2, "ScalarKernel::eval")?;
        Ok(self.profile(r))
    }
}

impl std::fmt::Display for ScalarKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.family {
            KernelFamily::Matern => write!(
                f,
                "matern(nu={}, lengthscale={})",
                self.smoothness_param, self.lengthscale
            ),
            KernelFamily::Wendland => write!(
                f,
                "wendland(index={}, lengthscale={})",
                self.smoothness_param, self.lengthscale
            ),
            KernelFamily::Gaussian => write!(f, "gaussian(lengthscale={})", self.lengthscale),
        }
    }
}

/// Euclidean distance with dimension and finiteness checks.
pub(crate) fn distance(x1: &Point, x2: &Point, context: &'static str) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel point pair",
            expected: x1.len(),
            got: x2.len(),
        });
    }
    let mut sq = 0.0;
    for i in 0..x1.len() {
        let d = x1[i] - x2[i];
        sq += d * d;
    }
    if !sq.is_finite() {
        return Err(Error::NonFinite(context));
    }
    Ok(sq.sqrt())
}

// ===== Operator-valued kernels =====

/// Separable operator-valued kernel K(x1,x2) = B·k(x1,x2) ∈ L(R^m).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorKernel {
    scalar: ScalarKernel,
    output_dim: usize,
    weight: DMatrix<f64>,
}

impl OperatorKernel {
    /// Diagonal kernel k·I_m.
    pub fn diagonal(scalar: ScalarKernel, output_dim: usize) -> Result<Self> {
        if output_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "output_dim",
                value: 0.0,
            });
        }
        Ok(Self {
            scalar,
            output_dim,
            weight: DMatrix::identity(output_dim, output_dim),
        })
    }

    /// Separable kernel with a symmetric positive-semidefinite weight B.
    pub fn separable(scalar: ScalarKernel, weight: DMatrix<f64>) -> Result<Self> {
        let m = weight.nrows();
        if m == 0 || weight.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "operator kernel weight",
                expected: m,
                got: weight.ncols(),
            });
        }
        let scale = weight.norm().max(1.0);
        if (&weight - weight.transpose()).norm() > 1e-12 * scale {
            return Err(Error::NotSpd("weight matrix is not symmetric"));
        }
        let min_eig = weight
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * scale {
            return Err(Error::NotSpd("weight matrix has a negative eigenvalue"));
        }
        Ok(Self {
            scalar,
            output_dim: m,
            weight,
        })
    }

    pub fn scalar(&self) -> &ScalarKernel {
        &self.scalar
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    /// Evaluate K(x1,x2) = B·k(x1,x2); equals the transpose of K(x2,x1).
    pub fn eval(&self, x1: &Point, x2: &Point) -> Result<DMatrix<f64>> {
        let k = self.scalar.eval(x1, x2)?;
        Ok(&self.weight * k)
    }

    /// Scalar kernel value, shared by Grammian assembly fast paths.
    pub fn eval_scalar(&self, x1: &Point, x2: &Point) -> Result<f64> {
        self.scalar.eval(x1, x2)
    }

    /// Diagonal bound k̄ = sqrt(‖B‖₂,₂): ‖K(x,x)‖₂,₂ ≤ k̄² for all x.
    pub fn diagonal_bound(&self) -> f64 {
        spectral_norm_symmetric(&self.weight).sqrt()
    }
}

impl std::fmt::Display for OperatorKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let identity = self.weight == DMatrix::identity(self.output_dim, self.output_dim);
        if identity {
            write!(f, "{} x I_{}", self.scalar, self.output_dim)
        } else {
            write!(
                f,
                "{} x {}x{} weight",
                self.scalar, self.output_dim, self.output_dim
            )
        }
    }
}

/// Spectral norm of a symmetric matrix via its eigenvalues.
pub(crate) fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, &l| acc.max(l.abs()))
}

/// Non-negativity (admissibility) quadratic form:
/// Σ_{i,j} α_i α_j (K(ξ_i,ξ_j) y_i, y_j).
///
/// For any admissible kernel the returned value is ≥ −tol (roundoff only).
pub fn psd_check(
    kernel: &OperatorKernel,
    centers: &[Point],
    directions: &[DVector<f64>],
    coeffs: &[f64],
) -> Result<f64> {
    let n = centers.len();
    if n == 0 {
        return Err(Error::EmptyInput("psd_check centers"));
    }
    if directions.len() != n || coeffs.len() != n {
        return Err(Error::DimensionMismatch {
            context: "psd_check list lengths",
            expected: n,
            got: directions.len().min(coeffs.len()),
        });
    }
    let m = kernel.output_dim();
    for y in directions {
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                context: "psd_check direction",
                expected: m,
                got: y.len(),
            });
        }
    }
    // B-weighted direction inner products are precomputable: the form is
    // Σ α_i α_j k(ξ_i,ξ_j) · (B y_j, y_i).
    let mut total = 0.0;
    for i in 0..n {
        let by_i = &kernel.weight * &directions[i];
        for j in 0..n {
            let k = kernel.scalar.eval(&centers[i], &centers[j])?;
            total += coeffs[i] * coeffs[j] * k * by_i.dot(&directions[j]);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(coords: &[f64]) -> Point {
        DVector::from_column_slice(coords)
    }

    #[test]
    fn matern_is_normalized_on_diagonal() {
        for nu in [0.5, 1.5, 2.5] {
            let k = ScalarKernel::matern(nu, 0.7).unwrap();
            let x = pt(&[0.3, -1.2]);
            assert_eq!(k.eval(&x, &x).unwrap(), 1.0, "nu = {nu}");
        }
    }

    #[test]
    fn matern_half_closed_form_at_unit_distance() {
        let k = ScalarKernel::matern(0.5, 1.0).unwrap();
        let v = k.eval(&pt(&[0.0]), &pt(&[1.0])).unwrap();
        assert!((v - 0.36787944117144233).abs() < 1e-15, "exp(-1), got {v}");
    }

    #[test]
    fn wendland_support_boundary_and_center() {
        let k = ScalarKernel::wendland(1.0, 1.0).unwrap();
        assert_eq!(k.eval(&pt(&[0.0]), &pt(&[1.0])).unwrap(), 0.0);
        assert_eq!(k.eval(&pt(&[0.0]), &pt(&[2.5])).unwrap(), 0.0);
        assert_eq!(k.eval(&pt(&[0.4]), &pt(&[0.4])).unwrap(), 1.0);
    }

    #[test]
    fn scalar_kernels_are_symmetric_and_bounded() {
        let kernels = [
            ScalarKernel::matern(0.5, 0.8).unwrap(),
            ScalarKernel::matern(1.5, 1.3).unwrap(),
            ScalarKernel::matern(2.5, 0.5).unwrap(),
            ScalarKernel::wendland(1.0, 2.0).unwrap(),
            ScalarKernel::gaussian(1.1).unwrap(),
        ];
        let pairs = [
            (pt(&[0.0, 0.0]), pt(&[0.3, -0.4])),
            (pt(&[1.0, 2.0]), pt(&[1.0, 2.0])),
            (pt(&[-3.0, 0.1]), pt(&[2.0, 5.0])),
        ];
        for k in &kernels {
            for (a, b) in &pairs {
                let v1 = k.eval(a, b).unwrap();
                let v2 = k.eval(b, a).unwrap();
                assert_eq!(v1, v2);
                assert!((0.0..=1.0).contains(&v1));
                if k.family() != KernelFamily::Wendland {
                    assert!(v1 > 0.0, "Matern/Gaussian values are strictly positive");
                }
            }
        }
    }

    #[test]
    fn decay_orders() {
        let m52 = ScalarKernel::matern(2.5, 1.0).unwrap();
        assert_eq!(m52.decay_order_s(3), Some(4.0));
        let m12 = ScalarKernel::matern(0.5, 1.0).unwrap();
        assert_eq!(m12.decay_order_s(2), Some(1.5));
        let w = ScalarKernel::wendland(1.0, 1.0).unwrap();
        assert_eq!(w.decay_order_s(3), Some(3.0));
        let g = ScalarKernel::gaussian(1.0).unwrap();
        assert_eq!(g.decay_order_s(3), None);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScalarKernel::matern(2.0, 1.0).is_err());
        assert!(ScalarKernel::matern(0.5, 0.0).is_err());
        assert!(ScalarKernel::matern(0.5, -1.0).is_err());
        assert!(ScalarKernel::wendland(2.0, 1.0).is_err());
        assert!(ScalarKernel::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn eval_rejects_dimension_mismatch_and_non_finite() {
        let k = ScalarKernel::matern(1.5, 1.0).unwrap();
        assert!(k.eval(&pt(&[0.0, 0.0]), &pt(&[1.0])).is_err());
        assert!(k.eval(&pt(&[f64::NAN]), &pt(&[1.0])).is_err());
        assert!(k.eval(&pt(&[f64::INFINITY]), &pt(&[1.0])).is_err());
    }

    #[test]
    fn diagonal_operator_kernel_is_scaled_identity() {
        let k = ScalarKernel::matern(1.5, 1.0).unwrap();
        let op = OperatorKernel::diagonal(k, 2).unwrap();
        let x = pt(&[0.2, 0.9]);
        let at_diag = op.eval(&x, &x).unwrap();
        assert_eq!(at_diag, DMatrix::identity(2, 2));
        let y = pt(&[1.5, -0.3]);
        let v = op.eval(&x, &y).unwrap();
        assert_eq!(v[(0, 1)], 0.0);
        assert_eq!(v[(1, 0)], 0.0);
        assert_eq!(v[(0, 0)], v[(1, 1)]);
    }

    #[test]
    fn separable_kernel_reproduces_weight_on_diagonal() {
        let k = ScalarKernel::matern(0.5, 1.0).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let op = OperatorKernel::separable(k, b.clone()).unwrap();
        let x = pt(&[0.7, -0.1]);
        assert_eq!(op.eval(&x, &x).unwrap(), b);
    }

    #[test]
    fn operator_eval_is_transpose_symmetric_and_entrywise_separable() {
        let k = ScalarKernel::matern(2.5, 0.9).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 2.0]);
        let op = OperatorKernel::separable(k.clone(), b.clone()).unwrap();
        let x1 = pt(&[0.1, 0.2]);
        let x2 = pt(&[-0.4, 1.0]);
        let v12 = op.eval(&x1, &x2).unwrap();
        let v21 = op.eval(&x2, &x1).unwrap();
        assert_eq!(v12, v21.transpose());
        let scalar = k.eval(&x1, &x2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((v12[(i, j)] - b[(i, j)] * scalar).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_bound_identity_and_diagonal_weights() {
        let k = ScalarKernel::gaussian(1.0).unwrap();
        let op = OperatorKernel::diagonal(k.clone(), 3).unwrap();
        assert!((op.diagonal_bound() - 1.0).abs() < 1e-14);

        let b = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let op = OperatorKernel::separable(k, b).unwrap();
        assert!((op.diagonal_bound() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_bound_full_weight() {
        // Eigenvalues of [[2,1],[1,2]] are 1 and 3, so the bound is sqrt(3).
        let k = ScalarKernel::matern(1.5, 1.0).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let op = OperatorKernel::separable(k, b).unwrap();
        assert!((op.diagonal_bound() - 3.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn psd_check_single_center_and_zero_coeffs() {
        let k = ScalarKernel::matern(0.5, 1.0).unwrap();
        let op = OperatorKernel::diagonal(k, 2).unwrap();
        let centers = vec![pt(&[0.3, 0.3])];
        let dirs = vec![pt(&[1.0, 0.0])];
        let v = psd_check(&op, &centers, &dirs, &[1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);

        let centers = vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0])];
        let dirs = vec![pt(&[1.0, 0.0]), pt(&[0.0, 1.0])];
        let v = psd_check(&op, &centers, &dirs, &[0.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn psd_check_matches_grammian_quadratic_form() {
        // Independent oracle: assemble the N·m Grammian densely, check its
        // minimum eigenvalue is nonnegative and that the quadratic form in
        // the stacked variable alpha_i * y_i equals psd_check.
        let k = ScalarKernel::matern(1.5, 0.8).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let op = OperatorKernel::separable(k, b).unwrap();
        let n = 5;
        let centers: Vec<Point> = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                pt(&[th.cos(), th.sin()])
            })
            .collect();
        let dirs: Vec<DVector<f64>> = (0..n)
            .map(|i| pt(&[(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]))
            .collect();
        let coeffs: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.31).sin()).collect();

        let m = op.output_dim();
        let mut gram = DMatrix::zeros(n * m, n * m);
        for i in 0..n {
            for j in 0..n {
                let block = op.eval(&centers[i], &centers[j]).unwrap();
                gram.view_mut((i * m, j * m), (m, m)).copy_from(&block);
            }
        }
        let min_eig = gram
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-10, "Grammian min eigenvalue {min_eig}");

        let mut z = DVector::zeros(n * m);
        for i in 0..n {
            for a in 0..m {
                z[i * m + a] = coeffs[i] * dirs[i][a];
            }
        }
        let oracle = (&gram * &z).dot(&z);
        let got = psd_check(&op, &centers, &dirs, &coeffs).unwrap();
        assert!((got - oracle).abs() < 1e-12 * (1.0 + oracle.abs()));
        assert!(got >= -1e-10);
    }

    #[test]
    fn psd_check_error_paths() {
        let k = ScalarKernel::matern(0.5, 1.0).unwrap();
        let op = OperatorKernel::diagonal(k, 1).unwrap();
        assert!(matches!(
            psd_check(&op, &[], &[], &[]),
            Err(Error::EmptyInput(_))
        ));
        let centers = vec![pt(&[0.0])];
        assert!(psd_check(&op, &centers, &[], &[1.0]).is_err());
        let dirs = vec![pt(&[1.0, 0.0])];
        assert!(psd_check(&op, &centers, &dirs, &[1.0]).is_err());
    }

    #[test]
    fn separable_rejects_asymmetric_and_indefinite_weights() {
        let k = ScalarKernel::gaussian(1.0).unwrap();
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(OperatorKernel::separable(k.clone(), asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(OperatorKernel::separable(k, indef).is_err());
    }
}
