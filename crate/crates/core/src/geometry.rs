//! Embedded manifolds, center selection, and point-set metrics (fill
//! distance, separation radius, quasiuniformity).
//!
//! Built-in manifolds are chart-parameterized over [0,1]^l and carry a
//! quadrature rule (uniform chart grid with analytic Jacobian weights)
//! approximating the volume measure. All distances are ambient Euclidean
//! (chordal).

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernel::Point;

// ===== Shapes and charts =====

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Circle of the given radius in the first two ambient coordinates.
    Circle { radius: f64 },
    /// 2-torus in the first three ambient coordinates.
    Torus { major_radius: f64, minor_radius: f64 },
    /// 2-sphere in the first three ambient coordinates.
    Sphere { radius: f64 },
    /// Closed Lissajous curve: coordinate i is
    /// amplitudes[i]·sin(2π·frequencies[i]·u + phases[i]).
    Lissajous {
        amplitudes: Vec<f64>,
        frequencies: Vec<u32>,
        phases: Vec<f64>,
    },
}

/// One node of a manifold quadrature rule.
#[derive(Debug, Clone)]
pub struct QuadratureNode {
    pub chart: Vec<f64>,
    pub point: Point,
    pub weight: f64,
}

/// Compact l-dimensional submanifold of R^n with a chart [0,1]^l -> R^n
/// and a quadrature rule for the volume measure.
#[derive(Debug, Clone)]
pub struct Manifold {
    shape: Shape,
    intrinsic_dim: usize,
    ambient_dim: usize,
    quadrature: Vec<QuadratureNode>,
}

impl Manifold {
    /// Build a manifold with a quadrature rule of at least
    /// `quadrature_count` nodes.
    pub fn new(shape: Shape, ambient_dim: usize, quadrature_count: usize) -> Result<Self> {
        let intrinsic_dim = match &shape {
            Shape::Circle { radius } => {
                require_positive(*radius, "circle radius")?;
                if ambient_dim < 2 {
                    return Err(Error::DimensionMismatch {
                        context: "circle ambient dimension",
                        expected: 2,
                        got: ambient_dim,
                    });
                }
                1
            }
            Shape::Torus {
                major_radius,
                minor_radius,
            } => {
                require_positive(*major_radius, "torus major radius")?;
                require_positive(*minor_radius, "torus minor radius")?;
                if *minor_radius >= *major_radius {
                    return Err(Error::InvalidParameter {
                        name: "torus minor radius (must be < major)",
                        value: *minor_radius,
                    });
                }
                if ambient_dim < 3 {
                    return Err(Error::DimensionMismatch {
                        context: "torus ambient dimension",
                        expected: 3,
                        got: ambient_dim,
                    });
                }
                2
            }
            Shape::Sphere { radius } => {
                require_positive(*radius, "sphere radius")?;
                if ambient_dim < 3 {
                    return Err(Error::DimensionMismatch {
                        context: "sphere ambient dimension",
                        expected: 3,
                        got: ambient_dim,
                    });
                }
                2
            }
            Shape::Lissajous {
                amplitudes,
                frequencies,
                phases,
            } => {
                if amplitudes.len() != ambient_dim
                    || frequencies.len() != ambient_dim
                    || phases.len() != ambient_dim
                {
                    return Err(Error::DimensionMismatch {
                        context: "lissajous coefficient vectors",
                        expected: ambient_dim,
                        got: amplitudes.len(),
                    });
                }
                if ambient_dim < 2 {
                    return Err(Error::DimensionMismatch {
                        context: "lissajous ambient dimension",
                        expected: 2,
                        got: ambient_dim,
                    });
                }
                for &a in amplitudes {
                    require_positive(a, "lissajous amplitude")?;
                }
                if frequencies.contains(&0) {
                    return Err(Error::InvalidParameter {
                        name: "lissajous frequency",
                        value: 0.0,
                    });
                }
                1
            }
        };
        let mut manifold = Self {
            shape,
            intrinsic_dim,
            ambient_dim,
            quadrature: Vec::new(),
        };
        manifold.quadrature = manifold.build_quadrature(quadrature_count)?;
        Ok(manifold)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn quadrature(&self) -> &[QuadratureNode] {
        &self.quadrature
    }

    /// Chart map [0,1]^l -> R^n (periodic formulas; inputs outside the unit
    /// cube wrap naturally).
    pub fn chart(&self, u: &[f64]) -> Result<Point> {
        if u.len() != self.intrinsic_dim {
            return Err(Error::DimensionMismatch {
                context: "chart input",
                expected: self.intrinsic_dim,
                got: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chart input"));
        }
        let mut p = Point::zeros(self.ambient_dim);
        match &self.shape {
            Shape::Circle { radius } => {
                let a = TAU * u[0];
                p[0] = radius * a.cos();
                p[1] = radius * a.sin();
            }
            Shape::Torus {
                major_radius,
                minor_radius,
            } => {
                let a = TAU * u[0];
                let b = TAU * u[1];
                let w = major_radius + minor_radius * b.cos();
                p[0] = w * a.cos();
                p[1] = w * a.sin();
                p[2] = minor_radius * b.sin();
            }
            Shape::Sphere { radius } => {
                let phi = TAU * u[0];
                let theta = PI * u[1];
                p[0] = radius * theta.sin() * phi.cos();
                p[1] = radius * theta.sin() * phi.sin();
                p[2] = radius * theta.cos();
            }
            Shape::Lissajous {
                amplitudes,
                frequencies,
                phases,
            } => {
                for i in 0..self.ambient_dim {
                    p[i] = amplitudes[i] * (TAU * frequencies[i] as f64 * u[0] + phases[i]).sin();
                }
            }
        }
        Ok(p)
    }

    /// Volume element J(u) of the chart (arc-length or area density), so
    /// that integral over the manifold = integral of J over the unit cube.
    pub fn volume_element(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.intrinsic_dim {
            return Err(Error::DimensionMismatch {
                context: "volume element input",
                expected: self.intrinsic_dim,
                got: u.len(),
            });
        }
        Ok(match &self.shape {
            Shape::Circle { radius } => TAU * radius,
            Shape::Torus {
                major_radius,
                minor_radius,
            } => TAU * TAU * minor_radius * (major_radius + minor_radius * (TAU * u[1]).cos()),
            Shape::Sphere { radius } => TAU * PI * radius * radius * (PI * u[1]).sin(),
            Shape::Lissajous {
                amplitudes,
                frequencies,
                phases,
            } => {
                let mut sq = 0.0;
                for i in 0..self.ambient_dim {
                    let d = amplitudes[i]
                        * TAU
                        * frequencies[i] as f64
                        * (TAU * frequencies[i] as f64 * u[0] + phases[i]).cos();
                    sq += d * d;
                }
                sq.sqrt()
            }
        })
    }

    /// Total measure (arc length / surface area). Analytic for circle,
    /// torus, and sphere; the quadrature weight sum for Lissajous curves.
    pub fn measure(&self) -> f64 {
        match &self.shape {
            Shape::Circle { radius } => TAU * radius,
            Shape::Torus {
                major_radius,
                minor_radius,
            } => TAU * TAU * major_radius * minor_radius,
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Lissajous { .. } => self.quadrature.iter().map(|q| q.weight).sum(),
        }
    }

    /// Ambient diameter (exact for circle/torus/sphere, a dense chart-grid
    /// estimate for Lissajous curves).
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Circle { radius } => 2.0 * radius,
            Shape::Torus {
                major_radius,
                minor_radius,
            } => 2.0 * (major_radius + minor_radius),
            Shape::Sphere { radius } => 2.0 * radius,
            Shape::Lissajous { .. } => {
                let pts: Vec<Point> = (0..256)
                    .map(|i| self.chart(&[i as f64 / 256.0]).expect("chart on grid"))
                    .collect();
                let mut best = 0.0_f64;
                for i in 0..pts.len() {
                    for j in (i + 1)..pts.len() {
                        best = best.max((&pts[i] - &pts[j]).norm());
                    }
                }
                best
            }
        }
    }

    /// Ambient Euclidean distance from `p` to the manifold (exact for
    /// circle/torus/sphere, dense chart sampling for Lissajous curves).
    pub fn distance_to(&self, p: &Point) -> Result<f64> {
        if p.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                context: "distance_to point",
                expected: self.ambient_dim,
                got: p.len(),
            });
        }
        let tail_sq = |from: usize| -> f64 { (from..p.len()).map(|i| p[i] * p[i]).sum() };
        Ok(match &self.shape {
            Shape::Circle { radius } => {
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                ((rho - radius).powi(2) + tail_sq(2)).sqrt()
            }
            Shape::Sphere { radius } => {
                let rho = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                ((rho - radius).abs().powi(2) + tail_sq(3)).sqrt()
            }
            Shape::Torus {
                major_radius,
                minor_radius,
            } => {
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                let d_core = ((rho - major_radius).powi(2) + p[2] * p[2]).sqrt();
                ((d_core - minor_radius).powi(2) + tail_sq(3)).sqrt()
            }
            Shape::Lissajous { .. } => {
                let samples = 8192;
                let mut best = f64::INFINITY;
                for i in 0..samples {
                    let q = self.chart(&[i as f64 / samples as f64])?;
                    best = best.min((p - q).norm());
                }
                best
            }
        })
    }

    /// Unit normal directions of the embedding at chart point `u`:
    /// directions orthogonal to the tangent space, used for off-manifold
    /// probe points.
    pub fn normal_directions(&self, u: &[f64]) -> Result<Vec<Point>> {
        let n = self.ambient_dim;
        let mut dirs = Vec::new();
        match &self.shape {
            Shape::Circle { .. } => {
                let a = TAU * u[0];
                let mut radial = Point::zeros(n);
                radial[0] = a.cos();
                radial[1] = a.sin();
                dirs.push(radial);
                for k in 2..n {
                    let mut e = Point::zeros(n);
                    e[k] = 1.0;
                    dirs.push(e);
                }
            }
            Shape::Sphere { .. } => {
                let p = self.chart(u)?;
                let norm = p.norm();
                dirs.push(p / norm);
                for k in 3..n {
                    let mut e = Point::zeros(n);
                    e[k] = 1.0;
                    dirs.push(e);
                }
            }
            Shape::Torus { .. } => {
                let a = TAU * u[0];
                let b = TAU * u[1];
                let mut tube_normal = Point::zeros(n);
                tube_normal[0] = b.cos() * a.cos();
                tube_normal[1] = b.cos() * a.sin();
                tube_normal[2] = b.sin();
                dirs.push(tube_normal);
                for k in 3..n {
                    let mut e = Point::zeros(n);
                    e[k] = 1.0;
                    dirs.push(e);
                }
            }
            Shape::Lissajous {
                amplitudes,
                frequencies,
                phases,
            } => {
                let mut tangent = Point::zeros(n);
                for i in 0..n {
                    tangent[i] = amplitudes[i]
                        * TAU
                        * frequencies[i] as f64
                        * (TAU * frequencies[i] as f64 * u[0] + phases[i]).cos();
                }
                let t_norm = tangent.norm();
                let that = tangent / t_norm;
                for k in 0..n {
                    let mut e = Point::zeros(n);
                    e[k] = 1.0;
                    let w = &e - &that * that.dot(&e);
                    let w_norm = w.norm();
                    if w_norm > 0.5 {
                        dirs.push(w / w_norm);
                    }
                }
            }
        }
        Ok(dirs)
    }

    /// Uniform chart-grid nodes. Periodic directions use left endpoints
    /// i/M; the sphere's polar direction uses cell midpoints to avoid the
    /// degenerate poles.
    pub fn chart_grid(&self, count: usize) -> Result<Vec<Vec<f64>>> {
        let min = 1usize << self.intrinsic_dim;
        if count < min {
            return Err(Error::InsufficientData {
                context: "chart grid node count",
                needed: min,
                have: count,
            });
        }
        let mut nodes = Vec::new();
        match self.intrinsic_dim {
            1 => {
                for i in 0..count {
                    nodes.push(vec![i as f64 / count as f64]);
                }
            }
            2 => {
                let side = (count as f64).sqrt().ceil() as usize;
                let polar_midpoint = matches!(self.shape, Shape::Sphere { .. });
                for i in 0..side {
                    for j in 0..side {
                        let v = if polar_midpoint {
                            (j as f64 + 0.5) / side as f64
                        } else {
                            j as f64 / side as f64
                        };
                        nodes.push(vec![i as f64 / side as f64, v]);
                    }
                }
            }
            _ => unreachable!("built-in manifolds have intrinsic dimension 1 or 2"),
        }
        Ok(nodes)
    }

    fn build_quadrature(&self, count: usize) -> Result<Vec<QuadratureNode>> {
        let nodes = self.chart_grid(count)?;
        let cell = 1.0 / nodes.len() as f64;
        nodes
            .into_iter()
            .map(|u| {
                let point = self.chart(&u)?;
                let weight = self.volume_element(&u)? * cell;
                Ok(QuadratureNode {
                    chart: u,
                    point,
                    weight,
                })
            })
            .collect()
    }
}

impl std::fmt::Display for Manifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.shape {
            Shape::Circle { radius } => write!(f, "circle(radius={radius})")?,
            Shape::Torus {
                major_radius,
                minor_radius,
            } => write!(f, "torus(major={major_radius}, minor={minor_radius})")?,
            Shape::Sphere { radius } => write!(f, "sphere(radius={radius})")?,
            Shape::Lissajous {
                amplitudes,
                frequencies,
                phases,
            } => {
                let amp: Vec<String> = amplitudes.iter().map(|v| format!("{v}")).collect();
                let freq: Vec<String> = frequencies.iter().map(|v| format!("{v}")).collect();
                let ph: Vec<String> = phases.iter().map(|v| format!("{v}")).collect();
                write!(
                    f,
                    "lissajous(amplitudes=[{}], frequencies=[{}], phases=[{}])",
                    amp.join(" "),
                    freq.join(" "),
                    ph.join(" ")
                )?;
            }
        }
        write!(f, " in R^{}", self.ambient_dim)
    }
}

fn require_positive(value: f64, name: &'static str) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidParameter { name, value });
    }
    Ok(())
}

// ===== Center sets =====

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterSource {
    Manifold,
    Cube,
}

/// A set of N >= 1 pairwise-distinct points.
#[derive(Debug, Clone)]
pub struct CenterSet {
    points: Vec<Point>,
    source: CenterSource,
}

impl CenterSet {
    pub fn new(points: Vec<Point>, source: CenterSource) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("center set"));
        }
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "center set points",
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("center set point"));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(Error::Unsupported(format!(
                        "duplicate centers at indices {i} and {j}"
                    )));
                }
            }
        }
        Ok(Self { points, source })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn source(&self) -> CenterSource {
        self.source
    }

    pub fn ambient_dim(&self) -> usize {
        self.points[0].len()
    }

    /// CSV export: header x1..xn, one point per row.
    pub fn to_csv(&self) -> String {
        let n = self.ambient_dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

// ===== Point-set metrics and sampling =====

fn sq_dist(a: &Point, b: &Point) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

fn check_uniform_dims(points: &[Point], context: &'static str) -> Result<usize> {
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: dim,
                got: p.len(),
            });
        }
    }
    Ok(dim)
}

/// Greedy farthest-point order over the candidate cloud: index 0 first,
/// then repeatedly the candidate farthest from the selected set. Prefixes
/// of the order are themselves farthest-point samples, so families built
/// from prefixes are nested.
pub fn farthest_point_order(candidates: &[Point], max_n: usize) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("farthest point candidates"));
    }
    if max_n == 0 || max_n > candidates.len() {
        return Err(Error::InsufficientData {
            context: "farthest point sample size",
            needed: max_n.max(1),
            have: candidates.len(),
        });
    }
    check_uniform_dims(candidates, "farthest point candidates")?;
    let mut order = Vec::with_capacity(max_n);
    let mut min_d2 = vec![f64::INFINITY; candidates.len()];
    let mut current = 0usize;
    for step in 0..max_n {
        order.push(current);
        let picked = candidates[current].clone();
        let mut best = 0usize;
        let mut best_d2 = -1.0;
        for (i, c) in candidates.iter().enumerate() {
            let d2 = sq_dist(c, &picked);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        if step + 1 < max_n {
            if best_d2 <= 0.0 {
                return Err(Error::Unsupported(
                    "candidate cloud has fewer distinct points than requested".into(),
                ));
            }
            current = best;
        }
    }
    Ok(order)
}

/// Dense deterministic candidate cloud: a uniform chart grid of at least
/// `count` nodes mapped through the chart.
pub fn dense_candidates(manifold: &Manifold, count: usize) -> Result<Vec<Point>> {
    manifold
        .chart_grid(count)?
        .iter()
        .map(|u| manifold.chart(u))
        .collect()
}

/// Greedy farthest-point sample of `n` centers from the candidate cloud.
pub fn farthest_point_sample(
    manifold: &Manifold,
    n: usize,
    candidates: &[Point],
) -> Result<CenterSet> {
    if !candidates.is_empty() && candidates[0].len() != manifold.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "farthest point candidates vs manifold",
            expected: manifold.ambient_dim(),
            got: candidates[0].len(),
        });
    }
    let order = farthest_point_order(candidates, n)?;
    let points = order.iter().map(|&i| candidates[i].clone()).collect();
    CenterSet::new(points, CenterSource::Manifold)
}

/// Fill distance: max over candidates of the distance to the nearest
/// center (discrete surrogate of the sup over the domain).
pub fn fill_distance(centers: &CenterSet, candidates: &[Point]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("fill distance candidates"));
    }
    let dim = check_uniform_dims(candidates, "fill distance candidates")?;
    if dim != centers.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "fill distance centers vs candidates",
            expected: centers.ambient_dim(),
            got: dim,
        });
    }
    let mut h2 = 0.0_f64;
    for c in candidates {
        let mut nearest = f64::INFINITY;
        for x in centers.points() {
            let d2 = sq_dist(c, x);
            if d2 < nearest {
                nearest = d2;
            }
        }
        if nearest > h2 {
            h2 = nearest;
        }
    }
    Ok(h2.sqrt())
}

pub(crate) fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d2 = sq_dist(&points[i], &points[j]);
            if d2 < best {
                best = d2;
            }
        }
    }
    best.sqrt()
}

/// Separation radius: half the minimal pairwise distance between centers.
pub fn separation_radius(centers: &CenterSet) -> Result<f64> {
    if centers.len() < 2 {
        return Err(Error::InsufficientData {
            context: "separation radius",
            needed: 2,
            have: centers.len(),
        });
    }
    Ok(0.5 * min_pairwise_distance(centers.points()))
}

/// Quasiuniformity ratio h/r; >= 1 (up to grid discretization) whenever
/// the centers are drawn from the candidate cloud.
pub fn quasiuniformity_ratio(h: f64, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidParameter {
            name: "separation radius",
            value: r,
        });
    }
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "fill distance",
            value: h,
        });
    }
    Ok(h / r)
}

/// One row of the N ~ h^(-l) scaling table.
#[derive(Debug, Clone, Copy)]
pub struct ScalingRow {
    pub n_centers: usize,
    pub fill: f64,
    /// N·h^l; approximately constant for quasiuniform families.
    pub product: f64,
}

/// Tabulate N·h^l over farthest-point samples of the listed sizes drawn
/// from one shared candidate cloud; the product column varies by at most
/// a constant factor for the built-in manifolds.
pub fn count_scaling_check(
    manifold: &Manifold,
    n_list: &[usize],
    candidate_count: usize,
) -> Result<Vec<ScalingRow>> {
    if n_list.is_empty() {
        return Err(Error::EmptyInput("count scaling N list"));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Unsupported(
                "count scaling N list must be strictly increasing".into(),
            ));
        }
    }
    if n_list[0] < 2 {
        return Err(Error::InsufficientData {
            context: "count scaling minimum N",
            needed: 2,
            have: n_list[0],
        });
    }
    let candidates = dense_candidates(manifold, candidate_count)?;
    let max_n = *n_list.last().expect("nonempty");
    let order = farthest_point_order(&candidates, max_n)?;
    let ell = manifold.intrinsic_dim() as i32;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let points: Vec<Point> = order[..n].iter().map(|&i| candidates[i].clone()).collect();
        let centers = CenterSet::new(points, CenterSource::Manifold)?;
        let h = fill_distance(&centers, &candidates)?;
        rows.push(ScalingRow {
            n_centers: n,
            fill: h,
            product: n as f64 * h.powi(ell),
        });
    }
    Ok(rows)
}
