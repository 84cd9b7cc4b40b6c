//! Synthetic 3-D manifold datasets: an S-shaped surface and a Swiss roll,
//! each with a binary class obtained by thresholding the manifold parameter
//! at its median.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, Target, Task};
use crate::error::{Error, Result};
use crate::schema::{Feature, FeatureSchema, Value};

fn xyz_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Feature::continuous("x"),
        Feature::continuous("y"),
        Feature::continuous("z"),
    ])
    .expect("static schema is valid")
}

/// Threshold at the median: classes are balanced up to rounding.
fn classes_from_parameter(t: &[f64]) -> Vec<usize> {
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    t.iter().map(|&v| usize::from(v > median)).collect()
}

fn assemble(points: Vec<[f64; 3]>, t: Vec<f64>) -> Dataset {
    let labels = classes_from_parameter(&t);
    let rows = points
        .into_iter()
        .map(|p| vec![Value::Num(p[0]), Value::Num(p[1]), Value::Num(p[2])])
        .collect();
    Dataset::new(xyz_schema(), rows, Target::Labels(labels), Task::Classification)
        .expect("generated rows conform to the static schema")
}

/// S-surface points: x = sin(t), z = sign(t)(cos(t) - 1) with t uniform in
/// [-3pi/2, 3pi/2] and y uniform in [0, 2]. Gaussian noise is added to all
/// three coordinates.
pub(crate) fn s_curve_points(n: usize, noise: f64, seed: u64) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let t = 1.5 * std::f64::consts::PI * (2.0 * rng.gen::<f64>() - 1.0);
        let y = 2.0 * rng.gen::<f64>();
        let mut p = [t.sin(), y, t.signum() * (t.cos() - 1.0)];
        for coord in &mut p {
            let eps: f64 = rng.sample(StandardNormal);
            *coord += noise * eps;
        }
        points.push(p);
        params.push(t);
    }
    (points, params)
}

/// Swiss-roll points: x = t cos(t), z = t sin(t) with t uniform in
/// [3pi/2, 9pi/2] and y uniform in [0, 21]. Gaussian noise is added to all
/// three coordinates.
pub(crate) fn swiss_roll_points(n: usize, noise: f64, seed: u64) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.gen::<f64>());
        let y = 21.0 * rng.gen::<f64>();
        let mut p = [t * t.cos(), y, t * t.sin()];
        for coord in &mut p {
            let eps: f64 = rng.sample(StandardNormal);
            *coord += noise * eps;
        }
        points.push(p);
        params.push(t);
    }
    (points, params)
}

pub fn make_s_curve(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config("synthetic datasets need n >= 2".into()));
    }
    if noise < 0.0 {
        return Err(Error::Config("noise must be non-negative".into()));
    }
    let (points, t) = s_curve_points(n, noise, seed);
    Ok(assemble(points, t))
}

pub fn make_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config("synthetic datasets need n >= 2".into()));
    }
    if noise < 0.0 {
        return Err(Error::Config("noise must be non-negative".into()));
    }
    let (points, t) = swiss_roll_points(n, noise, seed);
    Ok(assemble(points, t))
}
