//! Wavefront OBJ reading/writing and the on-disk blendshape basis layout:
//! `neutral.obj`, one `NN_<name>.obj` per target (sorted by file name) and
//! an optional `landmarks.txt` of landmark vertex indices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};

use super::BlendshapeBasis;
use crate::error::{Error, Result};

pub fn obj_string(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for v in vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for t in triangles {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

pub fn write_obj(path: &Path, vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Result<()> {
    fs::write(path, obj_string(vertices, triangles)).map_err(|e| Error::io(path, e))
}

pub fn parse_obj(text: &str) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
    let bad = |m: String| Error::format("obj", m);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts
                    .take(3)
                    .map(|p| p.parse().map_err(|_| bad(format!("bad vertex {line:?}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(format!("bad vertex {line:?}")));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                // `f a/b/c ...`: only the position index is used; polygons are fanned.
                let idx: Vec<usize> = parts
                    .map(|p| {
                        p.split('/')
                            .next()
                            .and_then(|i| i.parse::<usize>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| bad(format!("bad face {line:?}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad(format!("face with {} vertices", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if let Some(t) = triangles.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(bad(format!("face index {} out of range", t + 1)));
    }
    Ok((vertices, triangles))
}

pub fn read_obj(path: &Path) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn save_basis(dir: &Path, basis: &BlendshapeBasis) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_obj(&dir.join("neutral.obj"), &basis.neutral, &basis.triangles)?;
    for (k, name) in basis.names.iter().enumerate() {
        let target: Vec<Vector3<f64>> = (0..basis.n_vertices())
            .map(|i| basis.neutral[i] + basis.delta(i, k))
            .collect();
        write_obj(
            &dir.join(format!("{k:02}_{name}.obj")),
            &target,
            &basis.triangles,
        )?;
    }
    let lm: String = basis
        .landmark_vertices
        .iter()
        .map(|i| format!("{i}\n"))
        .collect();
    let p = dir.join("landmarks.txt");
    fs::write(&p, lm).map_err(|e| Error::io(&p, e))
}

fn target_name(stem: &str) -> String {
    match stem.split_once('_') {
        Some((prefix, rest))
            if !prefix.is_empty() && prefix.chars().all(|c| c.is_ascii_digit()) =>
        {
            rest.to_string()
        }
        _ => stem.to_string(),
    }
}

pub fn load_basis(dir: &Path) -> Result<BlendshapeBasis> {
    let (neutral, triangles) = read_obj(&dir.join("neutral.obj"))?;
    let mut targets: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "obj")
                && p.file_stem().is_some_and(|s| s != "neutral")
        })
        .collect();
    targets.sort();
    let mut names = Vec::with_capacity(targets.len());
    let mut deltas = DMatrix::zeros(3 * neutral.len(), targets.len());
    for (k, path) in targets.iter().enumerate() {
        let (verts, _) = read_obj(path)?;
        if verts.len() != neutral.len() {
            return Err(Error::format(
                path.display().to_string(),
                format!("{} vertices, neutral has {}", verts.len(), neutral.len()),
            ));
        }
        for (i, (t, n)) in verts.iter().zip(&neutral).enumerate() {
            let d = t - n;
            for a in 0..3 {
                deltas[(3 * i + a, k)] = d[a];
            }
        }
        names.push(target_name(&path.file_stem().unwrap().to_string_lossy()));
    }
    let lm_path = dir.join("landmarks.txt");
    let landmark_vertices = if lm_path.exists() {
        fs::read_to_string(&lm_path)
            .map_err(|e| Error::io(&lm_path, e))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse()
                    .map_err(|_| Error::format("landmarks.txt", format!("bad index {l:?}")))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    BlendshapeBasis::new(neutral, deltas, names, triangles, landmark_vertices)
}
