//! Inspection-point geometry: the chief's surface is discretized into
//! weighted points on a sphere, and a point is earned when it is inside
//! the sensor cone, on the near side of the sphere, and sunlit.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorParams {
    /// Number of surface points.
    pub n_points: usize,
    /// Chief sphere radius, m.
    pub radius: f64,
    /// Full cone angle of the inspection sensor, rad.
    pub fov: f64,
    /// Sensor boresight in the deputy body frame.
    pub boresight_body: Vector3<f64>,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            n_points: 100,
            radius: 10.0,
            fov: 60f64.to_radians(),
            boresight_body: Vector3::new(1.0, 0.0, 0.0),
        }
    }
}

/// The discretized chief surface. Point positions are fixed for an
/// episode; `inspected` flips monotonically to true.
#[derive(Debug, Clone)]
pub struct PointSet {
    /// Point positions in Hill's frame (chief-centered), m.
    pub points: Vec<Vector3<f64>>,
    /// Priority weight per point; weights sum to 1.
    pub weights: Vec<f64>,
    pub inspected: Vec<bool>,
}

/// Quasi-uniform sphere points from a Fibonacci lattice. The lattice
/// pole is rotated onto `priority_hat` (with a random spin about it so
/// point placement decorrelates across seeds); priority weights
/// decrease linearly in angle from that pole
/// (w_i proportional to pi - theta_i).
pub fn generate_points(
    params: &SensorParams,
    priority_hat: &Vector3<f64>,
    rng: &mut ChaCha12Rng,
) -> PointSet {
    let n = params.n_points;
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let spin = Rotation3::from_axis_angle(
        &Unit::new_unchecked(Vector3::z()),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let tilt = Rotation3::rotation_between(&Vector3::z(), priority_hat)
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::x()), std::f64::consts::PI));
    let rot = tilt * spin;

    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Lattice in the unrotated frame; z runs (1, -1) exclusive.
        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let phi = std::f64::consts::TAU * (i as f64 / golden).fract();
        let r_xy = (1.0 - z * z).sqrt();
        let p = Vector3::new(r_xy * phi.cos(), r_xy * phi.sin(), z);
        // Weight from the pre-rotation polar angle: the lattice pole
        // (mapped onto the priority direction) is the priority region.
        let theta = z.clamp(-1.0, 1.0).acos();
        weights.push(std::f64::consts::PI - theta);
        points.push(params.radius * (rot * p));
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    PointSet {
        points,
        weights,
        inspected: vec![false; n],
    }
}

impl PointSet {
    /// Fraction of total weight inspected so far.
    pub fn inspected_weight(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .zip(&self.inspected)
            .filter(|(_, done)| **done)
            .map(|((_, w), _)| w)
            .sum()
    }

    pub fn inspected_count(&self) -> usize {
        self.inspected.iter().filter(|d| **d).count()
    }

    /// Indices of points not yet inspected.
    pub fn uninspected_indices(&self) -> Vec<usize> {
        self.inspected
            .iter()
            .enumerate()
            .filter(|(_, d)| !**d)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A point is visible when it lies strictly inside the sensor cone and
/// on the near side of the sphere (the outward surface normal at the
/// point faces the deputy).
pub fn visible(
    point: &Vector3<f64>,
    deputy_pos: &Vector3<f64>,
    boresight_hill: &Vector3<f64>,
    params: &SensorParams,
) -> bool {
    let to_point = point - deputy_pos;
    let dist = to_point.norm();
    if dist < 1e-9 {
        return false;
    }
    let cone = boresight_hill.dot(&to_point) / dist > (params.fov / 2.0).cos();
    // Surface normal at the point is point/|point|; near side means
    // the deputy is above the local horizon of the point.
    let near_side = (deputy_pos - point).dot(point) > 0.0;
    cone && near_side
}

/// A point is illuminated when it is strictly on the sunlit hemisphere.
pub fn illuminated(point: &Vector3<f64>, sun_dir: &Vector3<f64>) -> bool {
    point.dot(sun_dir) > 0.0
}

/// Marks every visible, illuminated point inspected. Returns the newly
/// earned weight (zero when nothing new comes into view). Idempotent.
pub fn update_inspected(
    set: &mut PointSet,
    deputy_pos: &Vector3<f64>,
    boresight_hill: &Vector3<f64>,
    sun_dir: &Vector3<f64>,
    params: &SensorParams,
) -> f64 {
    let mut earned = 0.0;
    for i in 0..set.points.len() {
        if set.inspected[i] {
            continue;
        }
        if visible(&set.points[i], deputy_pos, boresight_hill, params)
            && illuminated(&set.points[i], sun_dir)
        {
            set.inspected[i] = true;
            earned += set.weights[i];
        }
    }
    earned
}
