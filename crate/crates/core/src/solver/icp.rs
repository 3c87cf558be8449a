use nalgebra::{Matrix6, Vector3, Vector6};

use super::correspondence::{find_correspondences, Correspondence, CorrespondenceParams};
use crate::error::{Error, Result};
use crate::face::{BlendshapeBasis, DepthMap, RigidPose};

const MIN_CORRESPONDENCES: usize = 6;
const MIN_RIGID_VERTICES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpOptions {
    pub max_iters: usize,
    /// Stop once the 6-vector update (radians, model units) is this small.
    pub min_update: f64,
    pub correspondence: CorrespondenceParams,
    /// Restrict the fit to [`rigid_vertices`].
    pub rigid_only: bool,
}

impl Default for IcpOptions {
    fn default() -> Self {
        Self {
            max_iters: 20,
            min_update: 1e-6,
            correspondence: CorrespondenceParams::default(),
            rigid_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: RigidPose,
    pub iterations: usize,
    pub converged: bool,
    /// Mean squared point-to-plane residual of the initial and of every
    /// accepted pose.
    pub errors: Vec<f64>,
    /// Norm of the first computed update.
    pub first_update: f64,
}

/// Vertices that no blendshape displaces. Pose is fitted on these so that
/// unexplained expression cannot be absorbed as head motion; if the basis
/// leaves too few of them, every vertex is used.
pub fn rigid_vertices(basis: &BlendshapeBasis) -> Vec<bool> {
    let norms: Vec<f64> = (0..basis.n_vertices())
        .map(|i| {
            (0..basis.n_shapes())
                .map(|k| basis.delta(i, k).norm_squared())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mask: Vec<bool> = norms.iter().map(|&n| n <= 1e-9 * max).collect();
    if mask.iter().filter(|&&m| m).count() < MIN_RIGID_VERTICES {
        return vec![true; basis.n_vertices()];
    }
    mask
}

fn rigid_correspondences(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    depthmap: &DepthMap,
    params: &CorrespondenceParams,
    mask: &[bool],
) -> Vec<Correspondence> {
    let mut corr = find_correspondences(basis, x, pose, depthmap, params);
    corr.retain(|c| mask[c.vertex]);
    corr
}

fn mean_error(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    corr: &[Correspondence],
) -> f64 {
    let sum: f64 = corr
        .iter()
        .map(|c| super::depth_residual(&pose.apply(&basis.vertex(c.vertex, x)), c))
        .sum();
    sum / corr.len() as f64
}

/// Mean squared point-to-plane residual and the number of valid
/// correspondences at `pose`.
pub fn point_to_plane_error(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    depthmap: &DepthMap,
    params: &CorrespondenceParams,
) -> Result<(f64, usize)> {
    let corr = find_correspondences(basis, x, pose, depthmap, params);
    if corr.is_empty() {
        return Err(Error::Underconstrained {
            found: 0,
            needed: 1,
        });
    }
    Ok((mean_error(basis, x, pose, &corr), corr.len()))
}

/// Least-squares small-motion update `(omega, t)` for the linearized
/// residuals `n.(v - vbar) + (v x n).omega + n.t`.
fn solve_update(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    corr: &[Correspondence],
) -> Vector6<f64> {
    let mut ata = Matrix6::zeros();
    let mut atb = Vector6::zeros();
    for c in corr {
        let v = pose.apply(&basis.vertex(c.vertex, x));
        let r = c.normal.dot(&(v - c.target));
        let vxn = v.cross(&c.normal);
        let row = Vector6::new(vxn.x, vxn.y, vxn.z, c.normal.x, c.normal.y, c.normal.z);
        ata += row * row.transpose();
        atb += row * r;
    }
    // Pseudo-inverse: in-plane motion of a planar target is a null direction.
    let svd = ata.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(&(-atb), eps).unwrap_or_else(|_| Vector6::zeros())
}

fn apply_update(pose: &RigidPose, delta: &Vector6<f64>) -> RigidPose {
    let step = RigidPose::from_axis_angle(
        Vector3::new(delta[0], delta[1], delta[2]),
        Vector3::new(delta[3], delta[4], delta[5]),
    );
    pose.then(&step)
}

/// Point-to-plane ICP of the mesh at coefficients `x` against a depth map.
/// Each accepted step has a point-to-plane error no larger than the last;
/// a step that would increase it is halved up to four times, then the
/// iteration stops.
pub fn rigid_icp(
    basis: &BlendshapeBasis,
    x: &[f64],
    depthmap: &DepthMap,
    pose_init: &RigidPose,
    opts: &IcpOptions,
) -> Result<IcpResult> {
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be >= 1"));
    }
    let params = &opts.correspondence;
    let mut pose = *pose_init;
    let mask = if opts.rigid_only {
        rigid_vertices(basis)
    } else {
        vec![true; basis.n_vertices()]
    };
    let mut corr = rigid_correspondences(basis, x, &pose, depthmap, params, &mask);
    if corr.len() < MIN_CORRESPONDENCES {
        return Err(Error::Underconstrained {
            found: corr.len(),
            needed: MIN_CORRESPONDENCES,
        });
    }
    let mut err = mean_error(basis, x, &pose, &corr);
    let mut errors = vec![err];
    let mut converged = false;
    let mut iterations = 0;
    let mut first_update = f64::NAN;

    while iterations < opts.max_iters {
        iterations += 1;
        let delta = solve_update(basis, x, &pose, &corr);
        if iterations == 1 {
            first_update = delta.norm();
        }
        if delta.norm() < opts.min_update {
            converged = true;
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..5 {
            let candidate = apply_update(&pose, &(delta * scale));
            let c = rigid_correspondences(basis, x, &candidate, depthmap, params, &mask);
            if c.len() >= MIN_CORRESPONDENCES {
                let e = mean_error(basis, x, &candidate, &c);
                if e <= err {
                    accepted = Some((candidate, c, e));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((p, c, e)) => {
                pose = p;
                corr = c;
                err = e;
                errors.push(e);
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(IcpResult {
        pose,
        iterations,
        converged,
        errors,
        first_update,
    })
}
