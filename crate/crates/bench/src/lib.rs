//! Shared fixtures for the criterion benches: the shipped kernel shape,
//! circle center families, and a shortened closed-loop setup.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use vrkhs::{
    assemble_simulation, dense_candidates, farthest_point_order, parse_toml, Manifold,
    OperatorKernel, Point, ScalarKernel, Shape, SimulateConfig, SimulationSetup,
};

pub fn circle_kernel() -> OperatorKernel {
    let weight = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    OperatorKernel::separable(ScalarKernel::matern(2.5, 0.75).unwrap(), weight).unwrap()
}

pub fn circle() -> Manifold {
    Manifold::new(Shape::Circle { radius: 1.0 }, 2, 256).unwrap()
}

/// Farthest-point prefix of a dense on-circle cloud.
pub fn circle_centers(n: usize) -> Vec<Point> {
    let candidates = dense_candidates(&circle(), 4096).unwrap();
    let order = farthest_point_order(&candidates, n).unwrap();
    order.iter().map(|&i| candidates[i].clone()).collect()
}

/// Smooth deterministic section values at the given points.
pub fn center_values(centers: &[Point]) -> Vec<DVector<f64>> {
    centers
        .iter()
        .map(|p| {
            DVector::from_column_slice(&[
                (3.0 * p[0] + p[1]).sin(),
                (p[0] - 2.0 * p[1]).cos(),
            ])
        })
        .collect()
}

/// Radially displaced copies of the candidate cloud, for power sweeps.
pub fn probe_points(count: usize) -> Vec<Point> {
    dense_candidates(&circle(), count)
        .unwrap()
        .into_iter()
        .map(|p| p * 1.15)
        .collect()
}

/// The shipped closed-loop benchmark cut down to a short horizon.
pub fn short_benchmark(t_final: f64) -> SimulationSetup {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/simulate.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let config: SimulateConfig = parse_toml(&text).unwrap();
    let mut setup = assemble_simulation(&config, None).unwrap();
    setup.params.t_final = t_final;
    setup
}
