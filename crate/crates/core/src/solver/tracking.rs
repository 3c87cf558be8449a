use super::{
    rigid_icp, solve_coefficients, IcpOptions, LandmarkSet, SolveResult, SolverOptions,
    SolverWeights,
};
use crate::error::{Error, Result};
use crate::face::{BlendshapeBasis, CoefficientFrame, DepthMap, RigidPose};
use crate::track::CoefficientTrack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub solver: SolverOptions,
    pub icp: IcpOptions,
    /// Pose / coefficient alternations per frame.
    pub alternations: usize,
    pub initial_pose: RigidPose,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            icp: IcpOptions::default(),
            alternations: 2,
            initial_pose: RigidPose::identity(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub frames: Vec<SolveResult>,
    /// Frames that failed and repeat the previous result: `(index, message)`.
    pub failures: Vec<(usize, String)>,
}

impl TrackResult {
    pub fn coefficient_track(&self, names: &[String], fps: f64) -> CoefficientTrack {
        CoefficientTrack {
            names: names.to_vec(),
            fps,
            frames: self
                .frames
                .iter()
                .map(|r| r.x.as_slice().to_vec())
                .collect(),
        }
    }

    pub fn poses(&self) -> Vec<RigidPose> {
        self.frames.iter().map(|r| r.pose).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.frames.iter().all(|r| r.converged)
    }
}

fn fit_frame(
    basis: &BlendshapeBasis,
    depth: &DepthMap,
    landmarks: &LandmarkSet,
    weights: &SolverWeights,
    opts: &TrackOptions,
    pose: RigidPose,
    x: CoefficientFrame,
) -> Result<SolveResult> {
    landmarks.validate(basis, &depth.camera)?;
    let mut pose = pose;
    let mut x = x;
    let mut result = None;
    let mut sweeps = 0;
    for _ in 0..opts.alternations.max(1) {
        pose = rigid_icp(basis, x.as_slice(), depth, &pose, &opts.icp)?.pose;
        let r = solve_coefficients(basis, depth, landmarks, &pose, weights, &x, &opts.solver)?;
        sweeps += r.iterations;
        x = r.x.clone();
        result = Some(r);
    }
    let mut result = result.unwrap();
    result.iterations = sweeps;
    Ok(result)
}

/// Fits every frame in order, warm-starting pose and coefficients from the
/// previous frame. A failure on the first frame is returned as an error; a
/// later failing frame repeats the previous result marked non-converged.
pub fn track_sequence(
    basis: &BlendshapeBasis,
    frames: &[(DepthMap, LandmarkSet)],
    weights: &SolverWeights,
    opts: &TrackOptions,
) -> Result<TrackResult> {
    if frames.is_empty() {
        return Err(Error::invalid("empty frame sequence"));
    }
    weights.validate()?;
    let mut out: Vec<SolveResult> = Vec::with_capacity(frames.len());
    let mut failures = Vec::new();
    let mut pose = opts.initial_pose;
    let mut x = CoefficientFrame::zeros(basis.n_shapes());
    for (t, (depth, landmarks)) in frames.iter().enumerate() {
        match fit_frame(basis, depth, landmarks, weights, opts, pose, x.clone()) {
            Ok(r) => {
                pose = r.pose;
                x = r.x.clone();
                out.push(r);
            }
            Err(e) if t == 0 => return Err(e.at_frame(0)),
            Err(e) => {
                let mut prev = out[t - 1].clone();
                prev.converged = false;
                prev.iterations = 0;
                prev.sweep_objectives.clear();
                failures.push((t, e.to_string()));
                out.push(prev);
            }
        }
    }
    Ok(TrackResult {
        frames: out,
        failures,
    })
}
