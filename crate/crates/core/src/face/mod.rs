//! Linear blendshape face model `v(x) = b0 + B x`, rigid head pose and the
//! pinhole camera used for depth maps and landmarks.
//!
//! Camera convention: the camera sits at the origin looking down +z, pixel
//! `(u, v)` addresses column `u` and row `v`, and depth is the camera-space z.

pub mod obj;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

/// Per-frame blendshape weights, each in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFrame(Vec<f64>);

impl CoefficientFrame {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("coefficient {v} outside [0, 1]")));
        }
        Ok(Self(x))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Neutral mesh plus one additive displacement column per blendshape.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendshapeBasis {
    pub neutral: Vec<Vector3<f64>>,
    /// `3V x n`, vertex-major (`x0 y0 z0 x1 ...`).
    pub deltas: DMatrix<f64>,
    pub names: Vec<String>,
    pub triangles: Vec<[usize; 3]>,
    /// Mesh vertices that carry 2D landmark constraints.
    pub landmark_vertices: Vec<usize>,
}

impl BlendshapeBasis {
    pub fn new(
        neutral: Vec<Vector3<f64>>,
        deltas: DMatrix<f64>,
        names: Vec<String>,
        triangles: Vec<[usize; 3]>,
        landmark_vertices: Vec<usize>,
    ) -> Result<Self> {
        let v = neutral.len();
        if deltas.nrows() != 3 * v {
            return Err(Error::DimensionMismatch {
                expected: 3 * v,
                actual: deltas.nrows(),
            });
        }
        if deltas.ncols() == 0 || deltas.ncols() != names.len() {
            return Err(Error::invalid(format!(
                "need at least one named blendshape ({} columns, {} names)",
                deltas.ncols(),
                names.len()
            )));
        }
        if neutral.iter().any(|p| !p.iter().all(|c| c.is_finite()))
            || deltas.iter().any(|d| !d.is_finite())
        {
            return Err(Error::invalid("non-finite basis values"));
        }
        if triangles.iter().flatten().any(|&i| i >= v) || landmark_vertices.iter().any(|&i| i >= v)
        {
            return Err(Error::invalid("vertex index out of range"));
        }
        Ok(Self {
            neutral,
            deltas,
            names,
            triangles,
            landmark_vertices,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.neutral.len()
    }

    pub fn n_shapes(&self) -> usize {
        self.deltas.ncols()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Displacement of vertex `i` under blendshape `k`.
    pub fn delta(&self, i: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.deltas[(3 * i, k)],
            self.deltas[(3 * i + 1, k)],
            self.deltas[(3 * i + 2, k)],
        )
    }

    /// Model-space vertex `i` for weights `x` (no pose).
    pub fn vertex(&self, i: usize, x: &[f64]) -> Vector3<f64> {
        let mut p = self.neutral[i];
        for (k, &w) in x.iter().enumerate() {
            if w != 0.0 {
                p += self.delta(i, k) * w;
            }
        }
        p
    }
}

/// Model-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "rotation is not a proper orthonormal matrix",
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Rotation of `axis_angle` (radians, axis scaled) followed by translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: other.rotation * self.rotation,
            translation: other.rotation * self.translation + other.translation,
        }
    }

    /// Angle (radians) of the relative rotation between two poses.
    pub fn rotation_distance(&self, other: &RigidPose) -> f64 {
        let rel = Rotation3::from_matrix_unchecked(self.rotation.transpose() * other.rotation);
        rel.angle()
    }

    pub fn translation_distance(&self, other: &RigidPose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// `pose.rotation * (b0 + B x) + pose.translation` for every vertex.
pub fn evaluate_mesh(
    basis: &BlendshapeBasis,
    x: &CoefficientFrame,
    pose: &RigidPose,
) -> Result<Vec<Vector3<f64>>> {
    if x.len() != basis.n_shapes() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_shapes(),
            actual: x.len(),
        });
    }
    Ok(evaluate_unchecked(basis, x.as_slice(), pose))
}

pub(crate) fn evaluate_unchecked(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
) -> Vec<Vector3<f64>> {
    let flat = &basis.deltas * DVector::from_column_slice(x);
    basis
        .neutral
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let p = b + Vector3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
            pose.apply(&p)
        })
        .collect()
}

/// Area-weighted vertex normals (unnormalized triangle cross products
/// summed, then renormalized). Isolated vertices get a zero normal.
pub fn vertex_normals(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); vertices.len()];
    for &[a, b, c] in triangles {
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        normals[a] += n;
        normals[b] += n;
        normals[c] += n;
    }
    for n in &mut normals {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }
    normals
}

/// Pinhole intrinsics plus image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }

    /// `(fx x / z + cx, fy y / z + cy)`.
    pub fn project(&self, v: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(v.z > 0.0) {
            return Err(Error::BehindCamera(v.z));
        }
        Ok(Vector2::new(
            self.fx * v.x / v.z + self.cx,
            self.fy * v.y / v.z + self.cy,
        ))
    }

    /// Camera-space point at depth `z` on the ray through pixel `p`.
    pub fn unproject(&self, p: &Vector2<f64>, z: f64) -> Vector3<f64> {
        Vector3::new(
            (p.x - self.cx) * z / self.fx,
            (p.y - self.cy) * z / self.fy,
            z,
        )
    }

    /// Jacobian of `project` at `v` (2x3, row-major).
    pub fn projection_jacobian(&self, v: &Vector3<f64>) -> [[f64; 3]; 2] {
        let iz = 1.0 / v.z;
        [
            [self.fx * iz, 0.0, -self.fx * v.x * iz * iz],
            [0.0, self.fy * iz, -self.fy * v.y * iz * iz],
        ]
    }
}

pub fn project(camera: &Camera, v: &Vector3<f64>) -> Result<Vector2<f64>> {
    camera.project(v)
}

/// Row-major z grid; 0 marks a pixel without data.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub depths: Vec<f64>,
    pub camera: Camera,
}

impl DepthMap {
    pub fn new(depths: Vec<f64>, camera: Camera) -> Result<Self> {
        if depths.len() != camera.width * camera.height {
            return Err(Error::DimensionMismatch {
                expected: camera.width * camera.height,
                actual: depths.len(),
            });
        }
        if depths.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("depths must be finite and non-negative"));
        }
        Ok(Self { depths, camera })
    }

    pub fn empty(camera: Camera) -> Self {
        Self {
            depths: vec![0.0; camera.width * camera.height],
            camera,
        }
    }

    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.depths[row * self.camera.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.depths.iter().filter(|&&d| d > 0.0).count()
    }

    /// Bilinear interpolation over the valid (non-zero) neighbors.
    pub fn sample(&self, p: &Vector2<f64>) -> Option<f64> {
        self.interpolate(p, false)
    }

    /// Like [`DepthMap::sample`], but `None` unless every neighbor carrying
    /// weight is valid, so surface edges are never extrapolated.
    pub fn sample_interior(&self, p: &Vector2<f64>) -> Option<f64> {
        self.interpolate(p, true)
    }

    fn interpolate(&self, p: &Vector2<f64>, strict: bool) -> Option<f64> {
        if !p.x.is_finite() || !p.y.is_finite() || !self.camera.contains(p) {
            return None;
        }
        let (w, h) = (self.camera.width, self.camera.height);
        let c0 = (p.x.floor() as usize).min(w - 1);
        let r0 = (p.y.floor() as usize).min(h - 1);
        let c1 = (c0 + 1).min(w - 1);
        let r1 = (r0 + 1).min(h - 1);
        let fu = p.x - c0 as f64;
        let fv = p.y - r0 as f64;
        let taps = [
            (c0, r0, (1.0 - fu) * (1.0 - fv)),
            (c1, r0, fu * (1.0 - fv)),
            (c0, r1, (1.0 - fu) * fv),
            (c1, r1, fu * fv),
        ];
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (c, r, wt) in taps {
            let d = self.at(c, r);
            if wt > 0.0 {
                if d > 0.0 {
                    acc += wt * d;
                    wsum += wt;
                } else if strict {
                    return None;
                }
            }
        }
        (wsum > 0.0).then(|| acc / wsum)
    }
}

pub fn sample_depth(depthmap: &DepthMap, pixel: &Vector2<f64>) -> Option<f64> {
    depthmap.sample(pixel)
}
