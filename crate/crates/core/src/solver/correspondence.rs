use nalgebra::Vector3;

use crate::face::{evaluate_unchecked, vertex_normals, BlendshapeBasis, DepthMap, RigidPose};

/// Depth target for one mesh vertex: the depth-map point on the vertex's
/// camera ray and the unit surface normal used for the point-to-plane term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub vertex: usize,
    pub target: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondenceParams {
    /// Maximum vertex-to-target distance (model units).
    pub max_distance: f64,
    /// Maximum angle between the normal and the viewing ray (degrees).
    pub max_angle_deg: f64,
}

impl Default for CorrespondenceParams {
    fn default() -> Self {
        Self {
            max_distance: 10.0,
            max_angle_deg: 75.0,
        }
    }
}

/// Projective association: each vertex is projected into the depth map and
/// paired with the back-projected depth sample at that pixel. Normals are
/// the posed mesh's area-weighted vertex normals.
pub fn find_correspondences(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    depthmap: &DepthMap,
    params: &CorrespondenceParams,
) -> Vec<Correspondence> {
    let camera = &depthmap.camera;
    let mesh = evaluate_unchecked(basis, x, pose);
    let normals = vertex_normals(&mesh, &basis.triangles);
    let min_cos = params.max_angle_deg.to_radians().cos();
    mesh.iter()
        .zip(&normals)
        .enumerate()
        .filter_map(|(i, (v, n))| {
            if n.norm_squared() == 0.0 {
                return None;
            }
            let p = camera.project(v).ok()?;
            let z = depthmap.sample_interior(&p)?;
            let target = camera.unproject(&p, z);
            if (v - target).norm() > params.max_distance {
                return None;
            }
            let view = -v.normalize();
            if n.dot(&view).abs() < min_cos {
                return None;
            }
            Some(Correspondence {
                vertex: i,
                target,
                normal: *n,
            })
        })
        .collect()
}
