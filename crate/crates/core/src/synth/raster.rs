//! Z-buffer depth rasterization of a camera-space triangle mesh.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::face::{Camera, DepthMap};

const NEAR: f64 = 1e-6;

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Nearest-surface depth at every pixel center. Depth inside a triangle is
/// interpolated perspective-correctly (linear in 1/z), so a pixel whose ray
/// passes through a vertex receives exactly that vertex's z.
pub fn rasterize_depth(
    vertices: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    camera: &Camera,
) -> Result<DepthMap> {
    if !vertices.iter().any(|v| v.z > NEAR) {
        return Err(Error::BehindCamera(
            vertices
                .iter()
                .map(|v| v.z)
                .fold(f64::NEG_INFINITY, f64::max),
        ));
    }
    let (w, h) = (camera.width, camera.height);
    let mut depth = DepthMap::empty(*camera);
    let projected: Vec<Option<Vector2<f64>>> =
        vertices.iter().map(|v| camera.project(v).ok()).collect();

    for tri in triangles {
        let (Some(p0), Some(p1), Some(p2)) =
            (projected[tri[0]], projected[tri[1]], projected[tri[2]])
        else {
            continue;
        };
        if vertices[tri[0]].z <= NEAR || vertices[tri[1]].z <= NEAR || vertices[tri[2]].z <= NEAR {
            continue;
        }
        let area = edge(&p0, &p1, &p2);
        if area.abs() < 1e-12 {
            continue;
        }
        let inv_z = [
            1.0 / vertices[tri[0]].z,
            1.0 / vertices[tri[1]].z,
            1.0 / vertices[tri[2]].z,
        ];
        let min_x = p0.x.min(p1.x).min(p2.x).ceil().max(0.0);
        let max_x = p0.x.max(p1.x).max(p2.x).floor().min((w - 1) as f64);
        let min_y = p0.y.min(p1.y).min(p2.y).ceil().max(0.0);
        let max_y = p0.y.max(p1.y).max(p2.y).floor().min((h - 1) as f64);
        if min_x > max_x || min_y > max_y {
            continue;
        }
        let tol = -1e-9 * area.abs();
        for row in min_y as usize..=max_y as usize {
            for col in min_x as usize..=max_x as usize {
                let p = Vector2::new(col as f64, row as f64);
                let l0 = edge(&p1, &p2, &p) / area;
                let l1 = edge(&p2, &p0, &p) / area;
                let l2 = edge(&p0, &p1, &p) / area;
                if l0 * area.abs() < tol || l1 * area.abs() < tol || l2 * area.abs() < tol {
                    continue;
                }
                let z = 1.0 / (l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2]);
                let cell = &mut depth.depths[row * w + col];
                if *cell == 0.0 || z < *cell {
                    *cell = z;
                }
            }
        }
    }
    Ok(depth)
}

/// Phong tessellation blend between the flat triangle and its vertex
/// tangent planes.
const PHONG_ALPHA: f64 = 0.75;

/// Rasterizes the mesh as a smooth surface: every triangle is split into
/// `subdivisions^2` pieces whose corners are Phong-tessellated (pulled
/// toward the vertex tangent planes). The surface still passes through every
/// vertex and is tangent to the vertex normal there, so a coarse mesh does
/// not leave creases in the depth map.
pub fn rasterize_smooth(
    vertices: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    camera: &Camera,
    subdivisions: usize,
) -> Result<DepthMap> {
    let m = subdivisions.max(1);
    if m == 1 {
        return rasterize_depth(vertices, triangles, camera);
    }
    let mut points = Vec::with_capacity(triangles.len() * (m + 1) * (m + 2) / 2);
    let mut pieces = Vec::with_capacity(triangles.len() * m * m);
    for tri in triangles {
        let base = points.len();
        let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let n = [normals[tri[0]], normals[tri[1]], normals[tri[2]]];
        // grid point (i, j): barycentric (1 - (i + j)/m, i/m, j/m)
        let index = |i: usize, j: usize| base + i * (2 * m + 3 - i) / 2 + j;
        for i in 0..=m {
            for j in 0..=m - i {
                let w = [
                    (m - i - j) as f64 / m as f64,
                    i as f64 / m as f64,
                    j as f64 / m as f64,
                ];
                let flat = p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
                let mut curved = Vector3::zeros();
                for k in 0..3 {
                    curved += (flat - n[k] * (flat - p[k]).dot(&n[k])) * w[k];
                }
                points.push(flat * (1.0 - PHONG_ALPHA) + curved * PHONG_ALPHA);
            }
        }
        for i in 0..m {
            for j in 0..m - i {
                pieces.push([index(i, j), index(i + 1, j), index(i, j + 1)]);
                if i + j + 1 < m {
                    pieces.push([index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)]);
                }
            }
        }
    }
    rasterize_depth(&points, &pieces, camera)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fronto_parallel_square_fills_constant_depth() {
        let cam = Camera::new(10.0, 10.0, 15.5, 15.5, 32, 32).unwrap();
        let z = 20.0;
        let v = vec![
            Vector3::new(-10.0, -10.0, z),
            Vector3::new(10.0, -10.0, z),
            Vector3::new(10.0, 10.0, z),
            Vector3::new(-10.0, 10.0, z),
        ];
        let d = rasterize_depth(&v, &[[0, 1, 2], [0, 2, 3]], &cam).unwrap();
        // covers pixels 10.5..20.5 in both axes
        assert_eq!(d.valid_count(), 100);
        assert!(d.depths.iter().all(|&x| x == 0.0 || (x - z).abs() < 1e-12));
    }

    #[test]
    fn nearer_triangle_wins() {
        let cam = Camera::new(10.0, 10.0, 7.5, 7.5, 16, 16).unwrap();
        let quad = |z: f64| {
            vec![
                Vector3::new(-5.0, -5.0, z),
                Vector3::new(5.0, -5.0, z),
                Vector3::new(5.0, 5.0, z),
                Vector3::new(-5.0, 5.0, z),
            ]
        };
        let mut v = quad(30.0);
        v.extend(quad(20.0));
        let tris = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]];
        let d = rasterize_depth(&v, &tris, &cam).unwrap();
        assert_eq!(d.at(7, 7), 20.0);
    }

    #[test]
    fn smooth_raster_keeps_flat_faces_flat_and_hits_vertices() {
        let cam = Camera::new(10.0, 10.0, 15.5, 15.5, 32, 32).unwrap();
        let z = 20.0;
        let v = vec![
            Vector3::new(-10.0, -10.0, z),
            Vector3::new(10.0, -10.0, z),
            Vector3::new(10.0, 10.0, z),
            Vector3::new(-10.0, 10.0, z),
        ];
        let n = vec![Vector3::new(0.0, 0.0, -1.0); 4];
        let tris = [[0, 1, 2], [0, 2, 3]];
        let flat = rasterize_depth(&v, &tris, &cam).unwrap();
        let smooth = rasterize_smooth(&v, &n, &tris, &cam, 4).unwrap();
        assert_eq!(flat.valid_count(), smooth.valid_count());
        for (a, b) in flat.depths.iter().zip(&smooth.depths) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn smooth_raster_bulges_toward_vertex_normals() {
        // a single triangle whose vertex normals lean outward: the interior
        // rises toward the camera, corners stay put
        let cam = Camera::new(20.0, 20.0, 31.5, 31.5, 64, 64).unwrap();
        let v = vec![
            Vector3::new(-20.0, -20.0, 40.0),
            Vector3::new(25.0, -20.0, 40.0),
            Vector3::new(-20.0, 25.0, 40.0),
        ];
        let n: Vec<_> = v
            .iter()
            .map(|p| Vector3::new(p.x * 0.02, p.y * 0.02, -1.0).normalize())
            .collect();
        let flat = rasterize_depth(&v, &[[0, 1, 2]], &cam).unwrap();
        let smooth = rasterize_smooth(&v, &n, &[[0, 1, 2]], &cam, 6).unwrap();
        let (c, r) = (29, 29);
        assert!(smooth.at(c, r) > 0.0 && smooth.at(c, r) < flat.at(c, r) - 1e-3);
    }

    #[test]
    fn mesh_behind_camera_is_an_error() {
        let cam = Camera::new(10.0, 10.0, 7.5, 7.5, 16, 16).unwrap();
        let v = vec![Vector3::new(0.0, 0.0, -1.0); 3];
        assert!(matches!(
            rasterize_depth(&v, &[[0, 1, 2]], &cam),
            Err(Error::BehindCamera(_))
        ));
    }
}
