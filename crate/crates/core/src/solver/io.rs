//! Pose track CSV: `time,qw,qx,qy,qz,tx,ty,tz`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::face::RigidPose;

pub fn poses_to_csv(poses: &[RigidPose], fps: f64, provenance: Option<&str>) -> String {
    let mut s = String::new();
    writeln!(s, "# fps={fps}").unwrap();
    if let Some(p) = provenance {
        writeln!(s, "# {p}").unwrap();
    }
    s.push_str("time,qw,qx,qy,qz,tx,ty,tz\n");
    for (t, pose) in poses.iter().enumerate() {
        let q = pose.quaternion();
        let tr = pose.translation;
        writeln!(
            s,
            "{:.6},{:.9},{:.9},{:.9},{:.9},{:.6},{:.6},{:.6}",
            t as f64 / fps,
            q.w,
            q.i,
            q.j,
            q.k,
            tr.x,
            tr.y,
            tr.z
        )
        .unwrap();
    }
    s
}

pub fn write_poses(
    path: &Path,
    poses: &[RigidPose],
    fps: f64,
    provenance: Option<&str>,
) -> Result<()> {
    fs::write(path, poses_to_csv(poses, fps, provenance)).map_err(|e| Error::io(path, e))
}

pub fn parse_poses(text: &str) -> Result<Vec<RigidPose>> {
    let bad = |m: String| Error::format("pose track", m);
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with("time"))
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse()
                        .map_err(|_| bad(format!("bad value {c:?}")))
                })
                .collect::<Result<_>>()?;
            if v.len() != 8 {
                return Err(bad(format!("expected 8 columns, got {}", v.len())));
            }
            let q = UnitQuaternion::from_quaternion(Quaternion::new(v[1], v[2], v[3], v[4]));
            Ok(RigidPose::from_quaternion(
                q,
                Vector3::new(v[5], v[6], v[7]),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_csv_round_trip() {
        let poses = vec![
            RigidPose::identity(),
            RigidPose::from_axis_angle(
                Vector3::new(0.1, -0.2, 0.05),
                Vector3::new(1.0, 2.0, 600.0),
            ),
        ];
        let csv = poses_to_csv(&poses, 60.0, None);
        let back = parse_poses(&csv).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert!(a.rotation_distance(b) < 1e-8);
            assert!(a.translation_distance(b) < 1e-6);
        }
    }
}
