//! Reduced-smoothness bookkeeping, convergence-rate studies, and
//! cube-vs-manifold center-count scalings.
//!
//! The rate predictors are calibrated power laws: the underlying theory
//! fixes exponents but not constants, so anchoring at a measured
//! (eps0, N0) pair turns each scaling into a testable function.

use nalgebra::DVector;

use crate::approximation::{build_subspace, power2, project_field, KernelField};
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_order, fill_distance, CenterSet, CenterSource, Manifold};
use crate::kernel::{OperatorKernel, Point};

// ===== Reduced smoothness =====

/// Smoothness order surviving restriction to an l-dimensional
/// submanifold of R^n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSmoothness {
    pub value: f64,
    /// Set when the reduced order fails the continuous-embedding
    /// threshold value > l/2; rate predictions are unreliable then.
    pub embedding_warning: bool,
}

/// s_bar = s - (n - l)/2. When the result fails the embedding threshold
/// s_bar > l/2 (which covers every s <= n/2) the warning flag is set
/// instead of erroring, so callers can surface degraded configurations.
pub fn reduced_smoothness(s: f64, n: usize, ell: usize) -> Result<ReducedSmoothness> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "decay order",
            value: s,
        });
    }
    if ell < 1 || ell > n {
        return Err(Error::InvalidParameter {
            name: "intrinsic dimension (needs 1 <= l <= n)",
            value: ell as f64,
        });
    }
    let value = s - (n - ell) as f64 / 2.0;
    Ok(ReducedSmoothness {
        value,
        embedding_warning: value <= ell as f64 / 2.0,
    })
}

// ===== Center-count predictors =====

fn validate_calibration(calibration: (f64, f64)) -> Result<()> {
    let (eps0, n0) = calibration;
    if !(eps0.is_finite() && eps0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "calibration accuracy",
            value: eps0,
        });
    }
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "calibration center count",
            value: n0,
        });
    }
    Ok(())
}

/// Manifold-restricted center count N0·(eps0/eps)^(l/s_bar).
pub fn predict_center_count(
    eps: f64,
    ell: usize,
    s_bar: f64,
    calibration: (f64, f64),
) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "target accuracy",
            value: eps,
        });
    }
    if !(s_bar.is_finite() && s_bar > 0.0) {
        return Err(Error::InvalidParameter {
            name: "reduced order",
            value: s_bar,
        });
    }
    if ell == 0 {
        return Err(Error::InvalidParameter {
            name: "intrinsic dimension",
            value: 0.0,
        });
    }
    validate_calibration(calibration)?;
    let (eps0, n0) = calibration;
    Ok(n0 * (eps0 / eps).powf(ell as f64 / s_bar))
}

/// Full-cube center count N0·(eps0/eps)^(n/s).
pub fn predict_cube_center_count(
    eps: f64,
    n: usize,
    s: f64,
    calibration: (f64, f64),
) -> Result<f64> {
    predict_center_count(eps, n, s, calibration)
}

// ===== Rate tables =====

#[derive(Debug, Clone)]
pub struct RateMeta {
    pub kernel_desc: String,
    pub manifold_desc: String,
    pub target_id: String,
    /// Ambient decay order s (absent for Gaussian kernels).
    pub decay_order: Option<f64>,
    /// Reduced order s_bar (absent when s is).
    pub reduced_order: Option<f64>,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub n_centers: usize,
    pub fill: f64,
    pub sup_err: f64,
    pub sup_power: f64,
}

/// (N, h, sup error, sup power) rows for log-log order fitting.
/// N strictly increases, h strictly decreases down the rows.
#[derive(Debug, Clone)]
pub struct RateTable {
    rows: Vec<RateRow>,
    pub meta: RateMeta,
}

impl RateTable {
    pub fn new(rows: Vec<RateRow>, meta: RateMeta) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("rate table rows"));
        }
        for row in &rows {
            if !(row.fill.is_finite() && row.fill > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "rate table fill distance",
                    value: row.fill,
                });
            }
            if !(row.sup_err.is_finite() && row.sup_err >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "rate table sup error",
                    value: row.sup_err,
                });
            }
            if !(row.sup_power.is_finite() && row.sup_power > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "rate table sup power",
                    value: row.sup_power,
                });
            }
        }
        for w in rows.windows(2) {
            if w[1].n_centers <= w[0].n_centers {
                return Err(Error::Unsupported(
                    "rate table center counts must strictly increase".into(),
                ));
            }
            if w[1].fill >= w[0].fill {
                return Err(Error::Unsupported(
                    "rate table fill distances must strictly decrease".into(),
                ));
            }
        }
        Ok(Self { rows, meta })
    }

    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }
}

// ===== Convergence study =====

/// Knobs for the evaluation cloud of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// On-manifold candidate cloud size; must be at least 50^l times
    /// the largest requested center count (50x denser per dimension).
    pub candidate_count: usize,
    /// Off-manifold probe displacement as a fraction of the manifold
    /// diameter; 0 disables probes.
    pub probe_offset_factor: f64,
    /// Approximate number of probe base points (strided off the
    /// candidate grid).
    pub probe_count: usize,
    /// Identifier recorded in the table metadata.
    pub target_id: String,
}

/// Farthest-point centers at each N (nested prefixes of one greedy
/// order), projection of the target, and sup error / sup power over a
/// dense on-manifold cloud plus normal-displaced probe points.
pub fn convergence_study(
    kernel: &OperatorKernel,
    manifold: &Manifold,
    target: &KernelField,
    n_list: &[usize],
    options: &StudyOptions,
) -> Result<RateTable> {
    if n_list.is_empty() {
        return Err(Error::EmptyInput("convergence study N list"));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Unsupported(
                "convergence study N list must be strictly increasing".into(),
            ));
        }
    }
    if target.kernel() != kernel {
        return Err(Error::Unsupported(
            "convergence study target lives in a different kernel space".into(),
        ));
    }
    let ell = manifold.intrinsic_dim();
    let n_max = *n_list.last().expect("nonempty");
    let density = 50usize.pow(ell as u32);
    let needed = density.saturating_mul(n_max);
    if options.candidate_count < needed {
        return Err(Error::InsufficientData {
            context: "convergence study candidate cloud (50x per-dimension density)",
            needed,
            have: options.candidate_count,
        });
    }

    let grid = manifold.chart_grid(options.candidate_count)?;
    let candidates: Vec<Point> = grid
        .iter()
        .map(|u| manifold.chart(u))
        .collect::<Result<_>>()?;

    // Evaluation cloud: the candidates plus probes pushed off the
    // manifold along ambient normals.
    let mut eval_cloud = candidates.clone();
    if options.probe_offset_factor > 0.0 && options.probe_count > 0 {
        let offset = options.probe_offset_factor * manifold.diameter();
        let stride = (grid.len() / options.probe_count).max(1);
        for u in grid.iter().step_by(stride) {
            let base = manifold.chart(u)?;
            for dir in manifold.normal_directions(u)? {
                eval_cloud.push(&base + &dir * offset);
                eval_cloud.push(&base - &dir * offset);
            }
        }
    }

    let target_values: Vec<DVector<f64>> = eval_cloud
        .iter()
        .map(|p| target.eval(p))
        .collect::<Result<_>>()?;

    let order = farthest_point_order(&candidates, n_max)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let points: Vec<Point> = order[..n].iter().map(|&i| candidates[i].clone()).collect();
        let centers = CenterSet::new(points, CenterSource::Manifold)?;
        let h = fill_distance(&centers, &candidates)?;
        let subspace = build_subspace(kernel, centers.points())?;
        let projection = project_field(&subspace, target)?;
        let mut sup_err = 0.0_f64;
        let mut sup_pow = 0.0_f64;
        for (p, tv) in eval_cloud.iter().zip(&target_values) {
            let err = (tv - projection.eval(p)?).norm();
            if err > sup_err {
                sup_err = err;
            }
            let pw = power2(&subspace, p)?;
            if pw > sup_pow {
                sup_pow = pw;
            }
        }
        rows.push(RateRow {
            n_centers: n,
            fill: h,
            sup_err,
            sup_power: sup_pow,
        });
    }

    // Errors must be monotone down the rows up to a 10% noise allowance
    // (ignoring rows at the machine floor).
    for w in rows.windows(2) {
        if w[0].sup_err > 1e-12 && w[1].sup_err > 1.1 * w[0].sup_err {
            return Err(Error::Unsupported(format!(
                "convergence study error grew beyond the noise allowance: {} -> {} at N = {}",
                w[0].sup_err, w[1].sup_err, w[1].n_centers
            )));
        }
    }

    let s = kernel.scalar().decay_order_s(manifold.ambient_dim());
    let s_bar = match s {
        Some(s) => Some(reduced_smoothness(s, manifold.ambient_dim(), ell)?.value),
        None => None,
    };
    RateTable::new(
        rows,
        RateMeta {
            kernel_desc: format!("{kernel}"),
            manifold_desc: format!("{manifold}"),
            target_id: options.target_id.clone(),
            decay_order: s,
            reduced_order: s_bar,
            intrinsic_dim: ell,
            ambient_dim: manifold.ambient_dim(),
        },
    )
}

// ===== Order fitting =====

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitX {
    Fill,
    Centers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitY {
    SupErr,
    SupPower,
}

/// Least-squares slope of log(y) against log(x) over the table rows,
/// with rows below the 1e-10 machine floor excluded. Returns
/// (slope, r^2); r^2 is 1 by convention when the y values are constant.
pub fn fit_order(table: &RateTable, x_col: FitX, y_col: FitY) -> Result<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in table.rows() {
        let y = match y_col {
            FitY::SupErr => row.sup_err,
            FitY::SupPower => row.sup_power,
        };
        if y < 1e-10 {
            continue;
        }
        let x = match x_col {
            FitX::Fill => row.fill,
            FitX::Centers => row.n_centers as f64,
        };
        xs.push(x.ln());
        ys.push(y.ln());
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            context: "order fit rows above the machine floor",
            needed: 3,
            have: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Unsupported(
            "order fit needs at least two distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let fit = intercept + slope * x;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - my) * (y - my);
    }
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((slope, r2))
}

// ===== Cube-vs-manifold comparison =====

#[derive(Debug, Clone, Copy)]
pub struct CurseRow {
    pub ambient_dim: usize,
    pub cube_centers: f64,
    pub manifold_centers: f64,
    pub ratio: f64,
}

/// Tabulate the cube predictor against the manifold predictor over a
/// list of ambient dimensions, both anchored at the same calibration
/// point. The manifold column does not depend on n; the ratio column is
/// nondecreasing in n whenever eps <= eps0.
pub fn curse_comparison(
    eps: f64,
    s: f64,
    ell: usize,
    s_bar: f64,
    n_list: &[usize],
    calibration: (f64, f64),
) -> Result<Vec<CurseRow>> {
    if n_list.is_empty() {
        return Err(Error::EmptyInput("curse comparison dimension list"));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Unsupported(
                "curse comparison dimension list must be strictly increasing".into(),
            ));
        }
    }
    if n_list[0] < ell {
        return Err(Error::InvalidParameter {
            name: "ambient dimension below intrinsic dimension",
            value: n_list[0] as f64,
        });
    }
    if eps > calibration.0 {
        return Err(Error::InvalidParameter {
            name: "target accuracy above calibration accuracy",
            value: eps,
        });
    }
    let manifold_centers = predict_center_count(eps, ell, s_bar, calibration)?;
    n_list
        .iter()
        .map(|&n| {
            let cube = predict_cube_center_count(eps, n, s, calibration)?;
            Ok(CurseRow {
                ambient_dim: n,
                cube_centers: cube,
                manifold_centers,
                ratio: cube / manifold_centers,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximation::interpolate;
    use crate::geometry::{dense_candidates, farthest_point_sample, Shape};
    use crate::kernel::ScalarKernel;
    use nalgebra::DVector;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_column_slice(&[v])
    }

    #[test]
    fn reduced_smoothness_formula() {
        let r = reduced_smoothness(3.0, 3, 1).unwrap();
        assert_eq!(r.value, 2.0);
        assert!(!r.embedding_warning);

        // Full-dimensional restriction changes nothing.
        let r = reduced_smoothness(4.0, 3, 3).unwrap();
        assert_eq!(r.value, 4.0);

        let r = reduced_smoothness(2.0, 3, 2).unwrap();
        assert_eq!(r.value, 1.5);
        assert!(!r.embedding_warning);
    }

    #[test]
    fn reduced_smoothness_warns_below_embedding_threshold() {
        // s = 2, n = 5, l = 1: s_bar = 0, well below the threshold 1/2.
        let r = reduced_smoothness(2.0, 5, 1).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.embedding_warning);
        // Exactly at the threshold still warns (strict inequality).
        let r = reduced_smoothness(2.5, 5, 1).unwrap();
        assert_eq!(r.value, 0.5);
        assert!(r.embedding_warning);
        // Slightly above the threshold does not.
        let r = reduced_smoothness(2.6, 5, 1).unwrap();
        assert!((r.value - 0.6).abs() < 1e-12);
        assert!(!r.embedding_warning);
    }

    #[test]
    fn reduced_smoothness_rejects_bad_inputs() {
        assert!(reduced_smoothness(0.0, 3, 1).is_err(), "s = 0");
        assert!(reduced_smoothness(-1.0, 3, 1).is_err(), "s < 0");
        assert!(reduced_smoothness(5.0, 3, 0).is_err(), "l = 0");
        assert!(reduced_smoothness(5.0, 3, 4).is_err(), "l > n");
    }

    #[test]
    fn predictors_match_hand_arithmetic() {
        // Calibration identity.
        assert_eq!(
            predict_center_count(0.1, 1, 2.0, (0.1, 32.0)).unwrap(),
            32.0
        );
        // l = 1, s_bar = 2: halving eps multiplies by sqrt(2).
        let a = predict_center_count(0.05, 1, 2.0, (0.1, 32.0)).unwrap();
        assert!((a - 32.0 * 2.0_f64.sqrt()).abs() < 1e-12);
        // l = 2, s_bar = 1: a tenth of eps costs 100x.
        let b = predict_center_count(0.01, 2, 1.0, (0.1, 5.0)).unwrap();
        assert!((b - 500.0).abs() < 1e-9);
        // Cube with n = s: 1/eps scaling.
        let c = predict_cube_center_count(0.05, 3, 3.0, (1.0, 1.0)).unwrap();
        assert!((c - 20.0).abs() < 1e-12);
        // n = 12, s = 3, halving eps: 2^4 = 16x.
        let d0 = predict_cube_center_count(0.1, 12, 3.0, (1.0, 1.0)).unwrap();
        let d1 = predict_cube_center_count(0.05, 12, 3.0, (1.0, 1.0)).unwrap();
        assert!((d1 / d0 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn predictors_reject_nonpositive_inputs() {
        assert!(predict_center_count(0.0, 1, 2.0, (1.0, 1.0)).is_err());
        assert!(predict_center_count(0.1, 1, 0.0, (1.0, 1.0)).is_err());
        assert!(predict_center_count(0.1, 0, 2.0, (1.0, 1.0)).is_err());
        assert!(predict_center_count(0.1, 1, 2.0, (0.0, 1.0)).is_err());
        assert!(predict_center_count(0.1, 1, 2.0, (1.0, -1.0)).is_err());
    }

    #[test]
    fn predictor_monotonicity_grid() {
        let cal = (1.0, 10.0);
        // Decreasing in eps.
        for ell in [1usize, 2, 3] {
            for s_bar in [0.5, 1.0, 2.0, 3.5] {
                let mut prev = f64::NEG_INFINITY;
                for eps in [0.5, 0.2, 0.1, 0.05, 0.01] {
                    let v = predict_center_count(eps, ell, s_bar, cal).unwrap();
                    assert!(v > prev, "not decreasing in eps");
                    prev = v;
                }
            }
        }
        // Decreasing in s_bar (eps < eps0 so the base exceeds 1).
        for ell in [1usize, 2, 3] {
            let mut prev = f64::INFINITY;
            for s_bar in [0.5, 1.0, 2.0, 4.0] {
                let v = predict_center_count(0.1, ell, s_bar, cal).unwrap();
                assert!(v < prev, "not decreasing in s_bar");
                prev = v;
            }
        }
        // Increasing in l.
        let mut prev = 0.0;
        for ell in [1usize, 2, 3, 4] {
            let v = predict_center_count(0.1, ell, 2.0, cal).unwrap();
            assert!(v > prev, "not increasing in l");
            prev = v;
        }
    }

    fn synthetic_table(rows: Vec<RateRow>) -> RateTable {
        RateTable::new(
            rows,
            RateMeta {
                kernel_desc: "synthetic".into(),
                manifold_desc: "synthetic".into(),
                target_id: "synthetic".into(),
                decay_order: None,
                reduced_order: None,
                intrinsic_dim: 1,
                ambient_dim: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn fit_order_recovers_planted_power_laws() {
        let rows: Vec<RateRow> = (0..5)
            .map(|i| {
                let h = 0.5_f64.powi(i);
                RateRow {
                    n_centers: 4 << i,
                    fill: h,
                    sup_err: h * h,
                    sup_power: h,
                }
            })
            .collect();
        let table = synthetic_table(rows);
        let (slope, r2) = fit_order(&table, FitX::Fill, FitY::SupErr).unwrap();
        assert!((slope - 2.0).abs() <= 1e-9, "slope {slope}");
        assert!((r2 - 1.0).abs() <= 1e-12);
        let (slope, r2) = fit_order(&table, FitX::Fill, FitY::SupPower).unwrap();
        assert!((slope - 1.0).abs() <= 1e-9);
        assert!((r2 - 1.0).abs() <= 1e-12);
        // Against N: h = 2^-(i) and N = 2^(i+2), so err ~ N^-2.
        let (slope, _) = fit_order(&table, FitX::Centers, FitY::SupErr).unwrap();
        assert!((slope + 2.0).abs() <= 1e-9, "slope {slope}");
    }

    #[test]
    fn fit_order_constant_column_gives_zero_slope_unit_r2() {
        let rows: Vec<RateRow> = (0..4)
            .map(|i| RateRow {
                n_centers: 8 << i,
                fill: 0.5_f64.powi(i),
                sup_err: 0.125,
                sup_power: 0.7,
            })
            .collect();
        let table = synthetic_table(rows);
        let (slope, r2) = fit_order(&table, FitX::Fill, FitY::SupErr).unwrap();
        assert_eq!(slope, 0.0);
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn fit_order_excludes_floor_rows() {
        let rows = vec![
            RateRow {
                n_centers: 4,
                fill: 0.5,
                sup_err: 1e-3,
                sup_power: 0.5,
            },
            RateRow {
                n_centers: 8,
                fill: 0.25,
                sup_err: 1e-12,
                sup_power: 0.25,
            },
            RateRow {
                n_centers: 16,
                fill: 0.125,
                sup_err: 1e-13,
                sup_power: 0.125,
            },
        ];
        let table = synthetic_table(rows);
        match fit_order(&table, FitX::Fill, FitY::SupErr) {
            Err(Error::InsufficientData { have, .. }) => assert_eq!(have, 1),
            other => panic!("expected floor exclusion to starve the fit, got {other:?}"),
        }
        // The power column is untouched by the floor.
        assert!(fit_order(&table, FitX::Fill, FitY::SupPower).is_ok());
    }

    #[test]
    fn rate_table_enforces_monotone_columns() {
        let meta = RateMeta {
            kernel_desc: String::new(),
            manifold_desc: String::new(),
            target_id: String::new(),
            decay_order: None,
            reduced_order: None,
            intrinsic_dim: 1,
            ambient_dim: 1,
        };
        let bad_n = vec![
            RateRow {
                n_centers: 8,
                fill: 0.5,
                sup_err: 0.1,
                sup_power: 0.5,
            },
            RateRow {
                n_centers: 8,
                fill: 0.25,
                sup_err: 0.05,
                sup_power: 0.25,
            },
        ];
        assert!(RateTable::new(bad_n, meta.clone()).is_err());
        let bad_h = vec![
            RateRow {
                n_centers: 8,
                fill: 0.25,
                sup_err: 0.1,
                sup_power: 0.5,
            },
            RateRow {
                n_centers: 16,
                fill: 0.25,
                sup_err: 0.05,
                sup_power: 0.25,
            },
        ];
        assert!(RateTable::new(bad_h, meta).is_err());
    }

    fn circle_kernel() -> OperatorKernel {
        OperatorKernel::diagonal(ScalarKernel::matern(2.5, 0.8).unwrap(), 1).unwrap()
    }

    #[test]
    fn study_of_target_in_span_has_zero_error_rows() {
        let kernel = circle_kernel();
        let manifold = Manifold::new(Shape::Circle { radius: 1.0 }, 2, 64).unwrap();
        let candidates = dense_candidates(&manifold, 400).unwrap();
        // Target lives exactly on the N = 4 farthest-point prefix, which
        // every later prefix contains.
        let base = farthest_point_sample(&manifold, 4, &candidates).unwrap();
        let sub = build_subspace(&kernel, base.points()).unwrap();
        let f = interpolate(&sub, &[vec1(1.0), vec1(-0.5), vec1(0.25), vec1(0.7)]).unwrap();
        let target = KernelField::from_function(&f).unwrap();
        let options = StudyOptions {
            candidate_count: 400,
            probe_offset_factor: 0.0,
            probe_count: 0,
            target_id: "in-span".into(),
        };
        let table = convergence_study(&kernel, &manifold, &target, &[4, 8], &options).unwrap();
        for row in table.rows() {
            assert!(row.sup_err < 1e-8, "in-span error {}", row.sup_err);
        }
    }

    #[test]
    fn study_of_zero_target_is_identically_zero() {
        let kernel = circle_kernel();
        let manifold = Manifold::new(Shape::Circle { radius: 1.0 }, 2, 64).unwrap();
        let target = KernelField::new(
            kernel.clone(),
            vec![DVector::from_column_slice(&[1.0, 0.0])],
            vec![vec1(0.0)],
        )
        .unwrap();
        let options = StudyOptions {
            candidate_count: 200,
            probe_offset_factor: 0.0,
            probe_count: 0,
            target_id: "zero".into(),
        };
        let table = convergence_study(&kernel, &manifold, &target, &[2, 4], &options).unwrap();
        for row in table.rows() {
            assert_eq!(row.sup_err, 0.0);
        }
    }

    #[test]
    fn small_circle_study_errors_decay_within_power_bound() {
        let kernel = circle_kernel();
        let manifold = Manifold::new(Shape::Circle { radius: 1.0 }, 2, 256).unwrap();
        let target = crate::approximation::apply_integral_operator(&kernel, &manifold, |q| {
            let u = q.chart[0];
            vec1((std::f64::consts::TAU * u).sin() + 0.4 * (2.0 * std::f64::consts::TAU * u).cos())
        })
        .unwrap();
        let norm = target.rkhs_norm().unwrap();
        let options = StudyOptions {
            candidate_count: 800,
            probe_offset_factor: 0.1,
            probe_count: 32,
            target_id: "lv-smooth".into(),
        };
        let table =
            convergence_study(&kernel, &manifold, &target, &[4, 8, 16], &options).unwrap();
        let rows = table.rows();
        assert!(rows[0].sup_err > rows[2].sup_err, "errors should decay");
        for row in rows {
            assert!(
                row.sup_err <= row.sup_power * norm + 1e-8,
                "bound chain broken: {} > {} * {}",
                row.sup_err,
                row.sup_power,
                norm
            );
        }
        // Quasiuniformity carried through: N·h within a factor 8.
        let products: Vec<f64> = rows
            .iter()
            .map(|r| r.n_centers as f64 * r.fill)
            .collect();
        let max = products.iter().cloned().fold(0.0, f64::max);
        let min = products.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min <= 8.0);
        assert_eq!(table.meta.decay_order, Some(3.5));
        assert_eq!(table.meta.reduced_order, Some(3.0));
    }

    #[test]
    fn study_rejects_sparse_candidate_clouds() {
        let kernel = circle_kernel();
        let manifold = Manifold::new(Shape::Circle { radius: 1.0 }, 2, 64).unwrap();
        let target = KernelField::new(
            kernel.clone(),
            vec![DVector::from_column_slice(&[1.0, 0.0])],
            vec![vec1(1.0)],
        )
        .unwrap();
        let options = StudyOptions {
            candidate_count: 100,
            probe_offset_factor: 0.0,
            probe_count: 0,
            target_id: "sparse".into(),
        };
        match convergence_study(&kernel, &manifold, &target, &[2, 4], &options) {
            Err(Error::InsufficientData { needed, .. }) => assert_eq!(needed, 200),
            other => panic!("expected density rejection, got {other:?}"),
        }
    }

    #[test]
    fn curse_rows_match_formula_and_monotonicity() {
        let rows = curse_comparison(0.05, 3.0, 1, 2.0, &[3, 6, 12], (1.0, 1.0)).unwrap();
        assert_eq!(rows.len(), 3);
        let manifold_expect = 20.0_f64.powf(0.5);
        for row in &rows {
            assert_eq!(row.manifold_centers, manifold_expect);
            let cube_expect = 20.0_f64.powf(row.ambient_dim as f64 / 3.0);
            assert_eq!(row.cube_centers, cube_expect);
            assert_eq!(row.ratio, cube_expect / manifold_expect);
        }
        assert!(rows[0].ratio < rows[1].ratio && rows[1].ratio < rows[2].ratio);
    }

    #[test]
    fn curse_degenerate_coincidence_gives_unit_ratio() {
        // n = l and s_bar = s: both predictors coincide.
        let rows = curse_comparison(0.1, 2.0, 2, 2.0, &[2], (1.0, 7.0)).unwrap();
        assert!((rows[0].ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curse_rejects_bad_dimension_lists() {
        assert!(curse_comparison(0.05, 3.0, 2, 2.0, &[1, 3], (1.0, 1.0)).is_err());
        assert!(curse_comparison(0.05, 3.0, 1, 2.0, &[3, 3], (1.0, 1.0)).is_err());
        assert!(curse_comparison(0.05, 3.0, 1, 2.0, &[], (1.0, 1.0)).is_err());
        // eps above the calibration accuracy breaks the guaranteed
        // monotone ratio column.
        assert!(curse_comparison(2.0, 3.0, 1, 2.0, &[3, 6], (1.0, 1.0)).is_err());
    }
}
