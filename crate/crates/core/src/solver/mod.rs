//! Blendshape coefficient and head-pose recovery from a depth map plus 2D
//! landmarks.
//!
//! The fitted objective is
//! `w_d * sum_i (n_i . (v_i(x) - vbar_i))^2 + w_l * sum_j |pi(v_j(x)) - u_j|^2 + w_r * |x|_1`
//! over `x` in `[0, 1]^n`. Correspondences (`vbar_i`, `n_i`) and the landmark
//! projection are linearized once per outer step, which makes the inner
//! problem a fixed box-constrained quadratic that is minimized by cyclic
//! exact coordinate updates (Gauss-Seidel).

mod correspondence;
mod gauss_seidel;
mod icp;
pub mod io;
mod tracking;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::face::{BlendshapeBasis, Camera, CoefficientFrame, RigidPose};

pub use correspondence::{find_correspondences, Correspondence, CorrespondenceParams};
pub use gauss_seidel::{coordinate_minimizer, GaussSeidelOutcome, QuadraticProblem};
pub use icp::{point_to_plane_error, rigid_icp, rigid_vertices, IcpOptions, IcpResult};
pub use tracking::{track_sequence, TrackOptions, TrackResult};

/// Weights of the depth, landmark and L1 terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverWeights {
    pub depth: f64,
    pub landmark: f64,
    pub l1: f64,
}

impl Default for SolverWeights {
    fn default() -> Self {
        Self {
            depth: 1.0,
            landmark: 0.1,
            l1: 0.01,
        }
    }
}

impl SolverWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.depth, self.landmark, self.l1];
        if w.iter().any(|v| !(*v >= 0.0)) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid(format!(
                "solver weights must be >= 0 and not all zero: {w:?}"
            )));
        }
        Ok(())
    }
}

/// Observed 2D landmarks: `(vertex index, pixel)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkSet {
    pub entries: Vec<(usize, Vector2<f64>)>,
}

impl LandmarkSet {
    pub fn validate(&self, basis: &BlendshapeBasis, camera: &Camera) -> Result<()> {
        for (j, u) in &self.entries {
            if *j >= basis.n_vertices() {
                return Err(Error::invalid(format!("landmark vertex {j} out of range")));
            }
            if !camera.contains(u) {
                return Err(Error::invalid(format!(
                    "landmark pixel ({}, {}) outside image",
                    u.x, u.y
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    /// Correspondence / landmark re-linearization steps.
    pub outer_iters: usize,
    pub correspondence: CorrespondenceParams,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            tol: 1e-6,
            outer_iters: 2,
            correspondence: CorrespondenceParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: CoefficientFrame,
    pub pose: RigidPose,
    pub objective: f64,
    /// Total Gauss-Seidel sweeps over all outer steps.
    pub iterations: usize,
    pub converged: bool,
    /// Surrogate objective after each sweep, one list per outer step
    /// (index 0 is the value before the first sweep).
    pub sweep_objectives: Vec<Vec<f64>>,
}

/// `(n^T (v - vbar))^2`.
pub fn depth_residual(v: &Vector3<f64>, corr: &Correspondence) -> f64 {
    let d = corr.normal.dot(&(v - corr.target));
    d * d
}

/// `|pi(v) - u|^2`.
pub fn landmark_residual(v: &Vector3<f64>, u: &Vector2<f64>, camera: &Camera) -> Result<f64> {
    Ok((camera.project(v)? - u).norm_squared())
}

/// Full (non-linearized) objective for fixed depth correspondences.
pub fn objective(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    corr: &[Correspondence],
    landmarks: &LandmarkSet,
    camera: &Camera,
    weights: &SolverWeights,
) -> Result<f64> {
    if x.len() != basis.n_shapes() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_shapes(),
            actual: x.len(),
        });
    }
    let depth: f64 = corr
        .iter()
        .map(|c| depth_residual(&pose.apply(&basis.vertex(c.vertex, x)), c))
        .sum();
    let mut lm = 0.0;
    for (j, u) in &landmarks.entries {
        lm += landmark_residual(&pose.apply(&basis.vertex(*j, x)), u, camera)?;
    }
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    Ok(weights.depth * depth + weights.landmark * lm + weights.l1 * l1)
}

/// Quadratic model of the objective around `x0` with fixed correspondences;
/// landmark projections are linearized at `x0`.
pub fn linearize(
    basis: &BlendshapeBasis,
    x0: &[f64],
    pose: &RigidPose,
    corr: &[Correspondence],
    landmarks: &LandmarkSet,
    camera: &Camera,
    weights: &SolverWeights,
) -> Result<QuadraticProblem> {
    let n = basis.n_shapes();
    let mut problem = QuadraticProblem::zeros(n, weights.l1);
    let rt = pose.rotation.transpose();
    let mut g = vec![0.0; n];
    if weights.depth > 0.0 {
        for c in corr {
            let nm = rt * c.normal;
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = nm.dot(&basis.delta(c.vertex, k));
            }
            let r0 = c
                .normal
                .dot(&(pose.apply(&basis.neutral[c.vertex]) - c.target));
            problem.add_residual(&g, r0, weights.depth);
        }
    }
    if weights.landmark > 0.0 {
        let mut g2 = vec![0.0; n];
        for (j, u) in &landmarks.entries {
            let v = pose.apply(&basis.vertex(*j, x0));
            let p = camera.project(&v)?;
            let jac = camera.projection_jacobian(&v);
            let rows = [
                Vector3::new(jac[0][0], jac[0][1], jac[0][2]),
                Vector3::new(jac[1][0], jac[1][1], jac[1][2]),
            ];
            for (axis, row) in rows.iter().enumerate() {
                let rm = rt * row;
                for k in 0..n {
                    g2[k] = rm.dot(&basis.delta(*j, k));
                }
                let lin: f64 = g2.iter().zip(x0).map(|(a, b)| a * b).sum();
                let e = p[axis] - u[axis] - lin;
                problem.add_residual(&g2, e, weights.landmark);
            }
        }
    }
    Ok(problem)
}

/// Coefficients for one frame at a fixed pose.
#[allow(clippy::too_many_arguments)]
pub fn solve_coefficients(
    basis: &BlendshapeBasis,
    depthmap: &crate::face::DepthMap,
    landmarks: &LandmarkSet,
    pose: &RigidPose,
    weights: &SolverWeights,
    x_init: &CoefficientFrame,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    weights.validate()?;
    if x_init.len() != basis.n_shapes() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_shapes(),
            actual: x_init.len(),
        });
    }
    if opts.max_sweeps == 0 || opts.outer_iters == 0 {
        return Err(Error::invalid("max_sweeps and outer_iters must be >= 1"));
    }
    let camera = &depthmap.camera;
    let mut x = x_init.as_slice().to_vec();
    let mut iterations = 0;
    let mut converged = false;
    let mut history = Vec::with_capacity(opts.outer_iters);
    let mut corr = Vec::new();

    for _ in 0..opts.outer_iters {
        corr = find_correspondences(basis, &x, pose, depthmap, &opts.correspondence);
        if corr.is_empty() && (landmarks.entries.is_empty() || weights.landmark == 0.0) {
            return Err(Error::Underconstrained {
                found: 0,
                needed: 1,
            });
        }
        let problem = linearize(basis, &x, pose, &corr, landmarks, camera, weights)?;
        let before = x.clone();
        let outcome = problem.gauss_seidel(&mut x, opts.max_sweeps, opts.tol)?;
        iterations += outcome.sweeps;
        converged = outcome.converged;
        history.push(outcome.objectives);
        let step = x
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if step < opts.tol {
            break;
        }
    }

    let value = objective(basis, &x, pose, &corr, landmarks, camera, weights)?;
    if !value.is_finite() {
        return Err(Error::Numerical("objective is not finite".into()));
    }
    Ok(SolveResult {
        x: CoefficientFrame::new(x)?,
        pose: *pose,
        objective: value,
        iterations,
        converged,
        sweep_objectives: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face::Camera;
    use nalgebra::DMatrix;

    #[test]
    fn depth_residual_examples() {
        let c = Correspondence {
            vertex: 0,
            target: Vector3::new(1.0, 2.0, 3.0),
            normal: Vector3::new(0.0, 0.0, 1.0),
        };
        assert_eq!(depth_residual(&Vector3::new(1.0, 2.0, 3.0), &c), 0.0);
        assert_eq!(depth_residual(&Vector3::new(4.0, -2.0, 3.0), &c), 0.0);
        assert_eq!(depth_residual(&Vector3::new(6.0, -1.0, 5.0), &c), 4.0);
    }

    #[test]
    fn landmark_residual_examples() {
        let cam = Camera::new(100.0, 100.0, 10.0, 10.0, 64, 64).unwrap();
        let v = Vector3::new(0.0, 0.0, 5.0);
        assert_eq!(
            landmark_residual(&v, &Vector2::new(10.0, 10.0), &cam).unwrap(),
            0.0
        );
        assert_eq!(
            landmark_residual(&v, &Vector2::new(13.0, 14.0), &cam).unwrap(),
            25.0
        );
        assert!(landmark_residual(&Vector3::new(0.0, 0.0, -1.0), &Vector2::zeros(), &cam).is_err());

        // shifting the principal point and the landmark together is a no-op
        let v = Vector3::new(0.3, -0.2, 4.0);
        let u = Vector2::new(17.0, 3.5);
        let shifted = Camera {
            cx: 15.0,
            cy: 2.0,
            ..cam
        };
        let a = landmark_residual(&v, &u, &cam).unwrap();
        let b = landmark_residual(&v, &(u + Vector2::new(5.0, -8.0)), &shifted).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    fn tiny_basis() -> BlendshapeBasis {
        let neutral = vec![
            Vector3::new(-1.0, -1.0, 10.0),
            Vector3::new(1.0, -1.0, 10.0),
            Vector3::new(0.0, 1.0, 10.5),
        ];
        let deltas = DMatrix::from_fn(9, 2, |r, c| 0.1 * ((r + 2 * c) % 4) as f64 - 0.15);
        BlendshapeBasis::new(
            neutral,
            deltas,
            vec!["lip_pucker".into(), "lip_funnel".into()],
            vec![[0, 1, 2]],
            vec![0, 2],
        )
        .unwrap()
    }

    #[test]
    fn objective_matches_term_by_term_sum() {
        let basis = tiny_basis();
        let cam = Camera::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = RigidPose::from_axis_angle(
            Vector3::new(0.01, -0.02, 0.03),
            Vector3::new(0.1, 0.0, 0.2),
        );
        let corr: Vec<_> = (0..3)
            .map(|i| Correspondence {
                vertex: i,
                target: Vector3::new(0.1 * i as f64, 0.2, 10.0 + 0.1 * i as f64),
                normal: Vector3::new(0.0, 0.6, -0.8),
            })
            .collect();
        let lms = LandmarkSet {
            entries: vec![(0, Vector2::new(30.0, 25.0)), (2, Vector2::new(33.0, 37.0))],
        };
        let w = SolverWeights {
            depth: 1.3,
            landmark: 0.2,
            l1: 0.05,
        };
        let x = [0.3, 0.7];
        let got = objective(&basis, &x, &pose, &corr, &lms, &cam, &w).unwrap();
        let mut want = 0.0;
        for c in &corr {
            let mut v = basis.neutral[c.vertex];
            for k in 0..2 {
                v += basis.delta(c.vertex, k) * x[k];
            }
            let v = pose.rotation * v + pose.translation;
            want += 1.3 * depth_residual(&v, c);
        }
        for (j, u) in &lms.entries {
            let mut v = basis.neutral[*j];
            for k in 0..2 {
                v += basis.delta(*j, k) * x[k];
            }
            let v = pose.rotation * v + pose.translation;
            want += 0.2 * landmark_residual(&v, u, &cam).unwrap();
        }
        want += 0.05 * (0.3 + 0.7);
        assert!((got - want).abs() < 1e-12);

        let l1_only = SolverWeights {
            depth: 0.0,
            landmark: 0.0,
            l1: 1.0,
        };
        let v = objective(&basis, &x, &pose, &corr, &lms, &cam, &l1_only).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linearization_is_exact_for_depth_terms() {
        let basis = tiny_basis();
        let cam = Camera::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = RigidPose::from_axis_angle(Vector3::new(0.02, 0.01, 0.0), Vector3::zeros());
        let corr = vec![Correspondence {
            vertex: 1,
            target: Vector3::new(1.0, -1.0, 10.2),
            normal: Vector3::new(0.0, 0.0, -1.0),
        }];
        let w = SolverWeights {
            depth: 1.0,
            landmark: 0.0,
            l1: 0.0,
        };
        let q = linearize(
            &basis,
            &[0.0, 0.0],
            &pose,
            &corr,
            &LandmarkSet::default(),
            &cam,
            &w,
        )
        .unwrap();
        for x in [[0.0, 0.0], [0.2, 0.9], [1.0, 0.5]] {
            let full =
                objective(&basis, &x, &pose, &corr, &LandmarkSet::default(), &cam, &w).unwrap();
            assert!((q.value(&x) - full).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(SolverWeights::default().validate().is_ok());
        assert!(SolverWeights {
            depth: 0.0,
            landmark: 0.0,
            l1: 0.0
        }
        .validate()
        .is_err());
        assert!(SolverWeights {
            depth: -1.0,
            landmark: 0.0,
            l1: 0.0
        }
        .validate()
        .is_err());
    }
}
