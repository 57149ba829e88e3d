//! Generalized Grammians, interpolation, orthogonal projection, power
//! functions, and restriction/extension between a manifold and its
//! ambient space.
//!
//! Coefficient layout is center-major: the stacked vector holds the m
//! output components of center 0, then center 1, and so on, matching the
//! Kronecker structure of the generalized Grammian K_scalar (x) B.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::{min_pairwise_distance, Manifold, QuadratureNode};
use crate::kernel::{OperatorKernel, Point};

/// Diagonal jitter ladder tried in order when the Grammian Cholesky
/// fails. Norm computations always use the un-jittered Grammian.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

// ===== Subspace =====

/// Finite-dimensional subspace spanned by kernel sections at N centers.
/// N = 0 is allowed and denotes the trivial subspace: projection is the
/// zero map and the power function equals the kernel's diagonal bound.
#[derive(Debug, Clone)]
pub struct Subspace {
    kernel: OperatorKernel,
    centers: Vec<Point>,
    grammian: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    jitter: f64,
}

/// Assemble the generalized Grammian over the centers and factor it,
/// walking the jitter ladder if necessary. Exact duplicate centers are
/// rejected up front; a factorization that fails at the maximum jitter
/// reports the minimum pairwise separation of the offending set.
pub fn build_subspace(kernel: &OperatorKernel, centers: &[Point]) -> Result<Subspace> {
    let m = kernel.output_dim();
    if centers.is_empty() {
        return Ok(Subspace {
            kernel: kernel.clone(),
            centers: Vec::new(),
            grammian: DMatrix::zeros(0, 0),
            chol: None,
            jitter: 0.0,
        });
    }
    let dim = centers[0].len();
    for c in centers {
        if c.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "subspace centers",
                expected: dim,
                got: c.len(),
            });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subspace center"));
        }
    }
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            if centers[i] == centers[j] {
                return Err(Error::IllConditioned {
                    min_separation: 0.0,
                });
            }
        }
    }
    let n = centers.len();
    let mut scalar = DMatrix::zeros(n, n);
    for i in 0..n {
        scalar[(i, i)] = kernel.eval_scalar(&centers[i], &centers[i])?;
        for j in (i + 1)..n {
            let v = kernel.eval_scalar(&centers[i], &centers[j])?;
            scalar[(i, j)] = v;
            scalar[(j, i)] = v;
        }
    }
    let grammian = scalar.kronecker(kernel.weight());
    for &jitter in &JITTER_LADDER {
        let mut jittered = grammian.clone();
        for d in 0..n * m {
            jittered[(d, d)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(Subspace {
                kernel: kernel.clone(),
                centers: centers.to_vec(),
                grammian,
                chol: Some(chol),
                jitter,
            });
        }
    }
    Err(Error::IllConditioned {
        min_separation: min_pairwise_distance(centers),
    })
}

impl Subspace {
    pub fn kernel(&self) -> &OperatorKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    /// Number of centers N.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Dimension m·N of the coefficient space.
    pub fn coeff_dim(&self) -> usize {
        self.centers.len() * self.kernel.output_dim()
    }

    /// The un-jittered generalized Grammian (mN x mN).
    pub fn grammian(&self) -> &DMatrix<f64> {
        &self.grammian
    }

    /// Diagonal jitter at which the Cholesky factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solve K c = rhs using the (jittered) Cholesky factor.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.coeff_dim() {
            return Err(Error::DimensionMismatch {
                context: "subspace solve right-hand side",
                expected: self.coeff_dim(),
                got: rhs.len(),
            });
        }
        match &self.chol {
            Some(chol) => Ok(chol.solve(rhs)),
            None => Ok(DVector::zeros(0)),
        }
    }

    /// Stacked kernel column at x: the mN x m matrix whose i-th m x m
    /// block is K(center_i, x).
    pub fn kernel_column(&self, x: &Point) -> Result<DMatrix<f64>> {
        let m = self.kernel.output_dim();
        let mut col = DMatrix::zeros(self.coeff_dim(), m);
        for (i, c) in self.centers.iter().enumerate() {
            let block = self.kernel.eval(c, x)?;
            col.view_mut((i * m, 0), (m, m)).copy_from(&block);
        }
        Ok(col)
    }

    /// Evaluate the subspace element with stacked coefficients c at x:
    /// sum_i K(x, center_i) c_i.
    pub fn eval_with_coefficients(&self, c: &DVector<f64>, x: &Point) -> Result<DVector<f64>> {
        let m = self.kernel.output_dim();
        if c.len() != self.coeff_dim() {
            return Err(Error::DimensionMismatch {
                context: "subspace coefficient vector",
                expected: self.coeff_dim(),
                got: c.len(),
            });
        }
        let mut acc = DVector::zeros(m);
        for (i, center) in self.centers.iter().enumerate() {
            let k = self.kernel.eval_scalar(x, center)?;
            for a in 0..m {
                acc[a] += k * c[i * m + a];
            }
        }
        Ok(self.kernel.weight() * acc)
    }

    /// Native-space norm of the element with stacked coefficients c:
    /// sqrt(c' K c) on the un-jittered Grammian.
    pub fn coefficient_norm(&self, c: &DVector<f64>) -> Result<f64> {
        if c.len() != self.coeff_dim() {
            return Err(Error::DimensionMismatch {
                context: "subspace coefficient vector",
                expected: self.coeff_dim(),
                got: c.len(),
            });
        }
        let q = c.dot(&(&self.grammian * c));
        Ok(q.max(0.0).sqrt())
    }
}

// ===== Kernel functions (finite expansions with solved coefficients) =====

/// Finite kernel expansion sum_i K(., center_i) theta_i.
#[derive(Debug, Clone)]
pub struct KernelFunction {
    kernel: OperatorKernel,
    centers: Vec<Point>,
    coeffs: Vec<DVector<f64>>,
}

impl KernelFunction {
    pub fn from_coefficients(
        kernel: OperatorKernel,
        centers: Vec<Point>,
        coeffs: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if centers.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel function centers vs coefficients",
                expected: centers.len(),
                got: coeffs.len(),
            });
        }
        let m = kernel.output_dim();
        for c in &coeffs {
            if c.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "kernel function coefficient block",
                    expected: m,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("kernel function coefficient"));
            }
        }
        Ok(Self {
            kernel,
            centers,
            coeffs,
        })
    }

    pub fn kernel(&self) -> &OperatorKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[DVector<f64>] {
        &self.coeffs
    }

    /// Stacked center-major coefficient vector.
    pub fn stacked_coefficients(&self) -> DVector<f64> {
        let m = self.kernel.output_dim();
        let mut c = DVector::zeros(self.centers.len() * m);
        for (i, block) in self.coeffs.iter().enumerate() {
            for a in 0..m {
                c[i * m + a] = block[a];
            }
        }
        c
    }

    pub fn eval(&self, x: &Point) -> Result<DVector<f64>> {
        eval_sections(&self.kernel, &self.centers, &self.coeffs, x)
    }
}

fn eval_sections(
    kernel: &OperatorKernel,
    centers: &[Point],
    coeffs: &[DVector<f64>],
    x: &Point,
) -> Result<DVector<f64>> {
    let m = kernel.output_dim();
    let mut acc = DVector::zeros(m);
    for (center, coeff) in centers.iter().zip(coeffs) {
        let k = kernel.eval_scalar(x, center)?;
        acc.axpy(k, coeff, 1.0);
    }
    Ok(kernel.weight() * acc)
}

/// Interpolate the given center values: solve K c = y for the stacked
/// coefficient vector. With N = 0 this is the zero function.
pub fn interpolate(subspace: &Subspace, values: &[DVector<f64>]) -> Result<KernelFunction> {
    let m = subspace.kernel().output_dim();
    if values.len() != subspace.len() {
        return Err(Error::DimensionMismatch {
            context: "interpolation values",
            expected: subspace.len(),
            got: values.len(),
        });
    }
    let mut y = DVector::zeros(subspace.coeff_dim());
    for (i, v) in values.iter().enumerate() {
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                context: "interpolation value block",
                expected: m,
                got: v.len(),
            });
        }
        for a in 0..m {
            y[i * m + a] = v[a];
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("interpolation values"));
    }
    let c = subspace.solve(&y)?;
    let coeffs: Vec<DVector<f64>> = (0..subspace.len())
        .map(|i| DVector::from_fn(m, |a, _| c[i * m + a]))
        .collect();
    KernelFunction::from_coefficients(
        subspace.kernel().clone(),
        subspace.centers().to_vec(),
        coeffs,
    )
}

/// Max-norm interpolation residual ||K c - y||_inf over the stacked
/// system, using the un-jittered Grammian.
pub fn interpolation_residual(
    subspace: &Subspace,
    function: &KernelFunction,
    values: &[DVector<f64>],
) -> Result<f64> {
    let m = subspace.kernel().output_dim();
    if values.len() != subspace.len() {
        return Err(Error::DimensionMismatch {
            context: "residual values",
            expected: subspace.len(),
            got: values.len(),
        });
    }
    let c = function.stacked_coefficients();
    if c.len() != subspace.coeff_dim() {
        return Err(Error::DimensionMismatch {
            context: "residual coefficients",
            expected: subspace.coeff_dim(),
            got: c.len(),
        });
    }
    let predicted = subspace.grammian() * c;
    let mut worst = 0.0_f64;
    for (i, v) in values.iter().enumerate() {
        for a in 0..m {
            worst = worst.max((predicted[i * m + a] - v[a]).abs());
        }
    }
    Ok(worst)
}

/// Orthogonal projection onto the subspace. For kernel subspaces this is
/// exactly interpolation of the target's values at the centers.
pub fn project_values(subspace: &Subspace, values: &[DVector<f64>]) -> Result<KernelFunction> {
    interpolate(subspace, values)
}

/// Projection of a kernel field (evaluates the field at the centers and
/// interpolates).
pub fn project_field(subspace: &Subspace, field: &KernelField) -> Result<KernelFunction> {
    let values: Result<Vec<DVector<f64>>> =
        subspace.centers().iter().map(|c| field.eval(c)).collect();
    interpolate(subspace, &values?)
}

// ===== Power functions =====

/// Subspace-projected kernel K_N(x1, x2) = row(x1) K^{-1} row(x2)'.
/// Zero for the trivial subspace.
pub fn subspace_kernel(subspace: &Subspace, x1: &Point, x2: &Point) -> Result<DMatrix<f64>> {
    let m = subspace.kernel().output_dim();
    if subspace.is_empty() {
        // Validate inputs even on the trivial path.
        subspace.kernel().eval_scalar(x1, x2)?;
        return Ok(DMatrix::zeros(m, m));
    }
    let col1 = subspace.kernel_column(x1)?;
    let col2 = subspace.kernel_column(x2)?;
    let solved = subspace
        .chol
        .as_ref()
        .expect("nonempty subspace has a factorization")
        .solve(&col2);
    Ok(col1.transpose() * solved)
}

/// Symmetrized power deficit D(x) = K(x,x) - K_N(x,x). Positive
/// semidefinite in exact arithmetic.
pub fn power_deficit(subspace: &Subspace, x: &Point) -> Result<DMatrix<f64>> {
    let full = subspace.kernel().eval(x, x)?;
    let projected = subspace_kernel(subspace, x, x)?;
    let d = full - projected;
    Ok(0.5 * (&d + d.transpose()))
}

/// Spectral power function: sqrt of the largest (clamped) eigenvalue of
/// the power deficit. Equals the kernel's diagonal bound for N = 0 and
/// vanishes at the centers.
pub fn power2(subspace: &Subspace, x: &Point) -> Result<f64> {
    let d = power_deficit(subspace, x)?;
    let lam = d.symmetric_eigen().eigenvalues;
    Ok(lam.iter().cloned().fold(0.0_f64, f64::max).sqrt())
}

/// Componentwise power function: max_i sqrt|D_ii(x)|.
pub fn power_inf(subspace: &Subspace, x: &Point) -> Result<f64> {
    let d = power_deficit(subspace, x)?;
    let mut worst = 0.0_f64;
    for i in 0..d.nrows() {
        worst = worst.max(d[(i, i)].abs());
    }
    Ok(worst.sqrt())
}

/// Per-point (power2, power_inf) pairs over a point cloud.
pub fn power_sweep(subspace: &Subspace, points: &[Point]) -> Result<Vec<(f64, f64)>> {
    points
        .iter()
        .map(|p| Ok((power2(subspace, p)?, power_inf(subspace, p)?)))
        .collect()
}

/// Supremum of power2 over a point cloud.
pub fn sup_power2(subspace: &Subspace, points: &[Point]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput("power supremum points"));
    }
    let mut sup = 0.0_f64;
    for p in points {
        sup = sup.max(power2(subspace, p)?);
    }
    Ok(sup)
}

/// Pointwise interpolation error bound P(x)·||f|| from the power
/// function and the target's native-space norm.
pub fn pointwise_error_bound(power_at_x: f64, f_norm: f64) -> f64 {
    power_at_x * f_norm
}

// ===== Restriction and extension =====

/// The ambient kernel restricted to a manifold: identical formula,
/// arguments validated to lie on the manifold.
#[derive(Debug, Clone)]
pub struct RestrictedKernel {
    kernel: OperatorKernel,
    manifold: Manifold,
    tol: f64,
}

impl RestrictedKernel {
    pub fn new(kernel: OperatorKernel, manifold: Manifold, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "on-manifold tolerance",
                value: tol,
            });
        }
        Ok(Self {
            kernel,
            manifold,
            tol,
        })
    }

    pub fn kernel(&self) -> &OperatorKernel {
        &self.kernel
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn check_on_manifold(&self, x: &Point) -> Result<()> {
        let d = self.manifold.distance_to(x)?;
        if d > self.tol {
            return Err(Error::OffManifold {
                distance: d,
                tolerance: self.tol,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x1: &Point, x2: &Point) -> Result<DMatrix<f64>> {
        self.check_on_manifold(x1)?;
        self.check_on_manifold(x2)?;
        self.kernel.eval(x1, x2)
    }
}

/// Outcome of the restriction/extension consistency check.
#[derive(Debug, Clone, Copy)]
pub struct ExtensionCheck {
    /// Max absolute entry difference between the restricted and ambient
    /// Grammians over the centers. Zero: the formulas coincide.
    pub grammian_max_abs_diff: f64,
    /// Sup over on-manifold test points of the extension-vs-original
    /// value deviation.
    pub value_max_deviation: f64,
    /// |norm(extension) - norm(original)|; the extension is an isometry.
    pub norm_deviation: f64,
}

/// Build an element of the restricted space from explicit coefficients,
/// extend it to the ambient space (same coefficients, ambient kernel),
/// and measure how far the pair is from agreeing on the manifold.
pub fn restrict_then_extend_check(
    kernel: &OperatorKernel,
    manifold: &Manifold,
    centers: &[Point],
    coeffs: &[DVector<f64>],
    test_points: &[Point],
    tol: f64,
) -> Result<ExtensionCheck> {
    if centers.is_empty() {
        return Err(Error::EmptyInput("extension check centers"));
    }
    if test_points.is_empty() {
        return Err(Error::EmptyInput("extension check test points"));
    }
    let restricted = RestrictedKernel::new(kernel.clone(), manifold.clone(), tol)?;
    for c in centers {
        restricted.check_on_manifold(c)?;
    }
    for p in test_points {
        restricted.check_on_manifold(p)?;
    }

    let n = centers.len();
    let m = kernel.output_dim();
    let ambient = build_subspace(kernel, centers)?;
    let mut restricted_gram = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            let block = restricted.eval(&centers[i], &centers[j])?;
            restricted_gram
                .view_mut((i * m, j * m), (m, m))
                .copy_from(&block);
        }
    }
    let mut gram_diff = 0.0_f64;
    for (a, b) in restricted_gram.iter().zip(ambient.grammian().iter()) {
        gram_diff = gram_diff.max((a - b).abs());
    }

    let extension =
        KernelFunction::from_coefficients(kernel.clone(), centers.to_vec(), coeffs.to_vec())?;
    let mut value_dev = 0.0_f64;
    for p in test_points {
        // Original: restricted-kernel expansion evaluated on the manifold.
        let mut acc = DVector::zeros(m);
        for (center, coeff) in centers.iter().zip(coeffs) {
            acc += restricted.eval(p, center)? * coeff;
        }
        let ext = extension.eval(p)?;
        value_dev = value_dev.max((acc - ext).norm());
    }

    let c = extension.stacked_coefficients();
    let norm_ambient = ambient.coefficient_norm(&c)?;
    let q = c.dot(&(&restricted_gram * &c));
    let norm_restricted = q.max(0.0).sqrt();

    Ok(ExtensionCheck {
        grammian_max_abs_diff: gram_diff,
        value_max_deviation: value_dev,
        norm_deviation: (norm_ambient - norm_restricted).abs(),
    })
}

// ===== Kernel fields (integral-operator images) =====

/// Kernel expansion over a quadrature-node cloud, as produced by the
/// kernel integral operator. Unlike [`KernelFunction`] the coefficients
/// come from quadrature weights rather than a Grammian solve, and the
/// native-space norm is evaluated as a direct quadratic form.
#[derive(Debug, Clone)]
pub struct KernelField {
    kernel: OperatorKernel,
    nodes: Vec<Point>,
    coeffs: Vec<DVector<f64>>,
}

impl KernelField {
    pub fn new(
        kernel: OperatorKernel,
        nodes: Vec<Point>,
        coeffs: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("kernel field nodes"));
        }
        if nodes.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel field nodes vs coefficients",
                expected: nodes.len(),
                got: coeffs.len(),
            });
        }
        let m = kernel.output_dim();
        for c in &coeffs {
            if c.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "kernel field coefficient block",
                    expected: m,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("kernel field coefficient"));
            }
        }
        Ok(Self {
            kernel,
            nodes,
            coeffs,
        })
    }

    /// View a solved kernel expansion as a field (same expansion, norm
    /// evaluated by the direct quadratic form).
    pub fn from_function(function: &KernelFunction) -> Result<Self> {
        Self::new(
            function.kernel().clone(),
            function.centers().to_vec(),
            function.coefficients().to_vec(),
        )
    }

    pub fn kernel(&self) -> &OperatorKernel {
        &self.kernel
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn coefficients(&self) -> &[DVector<f64>] {
        &self.coeffs
    }

    pub fn eval(&self, x: &Point) -> Result<DVector<f64>> {
        eval_sections(&self.kernel, &self.nodes, &self.coeffs, x)
    }

    /// Native-space norm via the direct quadratic form
    /// sqrt(sum_pq c_p' K(node_p, node_q) c_q).
    pub fn rkhs_norm(&self) -> Result<f64> {
        let weighted: Vec<DVector<f64>> = self
            .coeffs
            .iter()
            .map(|c| self.kernel.weight() * c)
            .collect();
        let mut q = 0.0;
        for p in 0..self.nodes.len() {
            q += self.kernel.eval_scalar(&self.nodes[p], &self.nodes[p])?
                * self.coeffs[p].dot(&weighted[p]);
            for (r, w) in weighted.iter().enumerate().skip(p + 1) {
                let k = self.kernel.eval_scalar(&self.nodes[p], &self.nodes[r])?;
                q += 2.0 * k * self.coeffs[p].dot(w);
            }
        }
        Ok(q.max(0.0).sqrt())
    }

    /// Scale all coefficients by a constant factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::NonFinite("kernel field scale factor"));
        }
        Ok(Self {
            kernel: self.kernel.clone(),
            nodes: self.nodes.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        })
    }
}

/// Apply the kernel integral operator to a density v over the manifold:
/// (Lv)(x) = sum_q w_q K(x, node_q) v(node_q), a member of the native
/// space whose norm and projections are then exactly computable.
pub fn apply_integral_operator<F>(
    kernel: &OperatorKernel,
    manifold: &Manifold,
    density: F,
) -> Result<KernelField>
where
    F: Fn(&QuadratureNode) -> DVector<f64>,
{
    let m = kernel.output_dim();
    let mut nodes = Vec::with_capacity(manifold.quadrature().len());
    let mut coeffs = Vec::with_capacity(manifold.quadrature().len());
    for q in manifold.quadrature() {
        let v = density(q);
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                context: "integral operator density output",
                expected: m,
                got: v.len(),
            });
        }
        nodes.push(q.point.clone());
        coeffs.push(v * q.weight);
    }
    KernelField::new(kernel.clone(), nodes, coeffs)
}
