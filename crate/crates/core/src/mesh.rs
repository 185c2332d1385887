//! Planar triangulations with global edge orientation and boundary tags.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point2 = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {0} is not counterclockwise (signed area {1})")]
    Orientation(usize, f64),
    #[error("triangle {0} references vertex {1} which does not exist")]
    BadVertex(usize, usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("tag `{tag}` names ({a}, {b}) which is not a boundary edge")]
    BadTag { tag: String, a: usize, b: usize },
    #[error("mesh json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Axis-aligned rectangle `origin + [0, extent]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub origin: Point2,
    pub extent: Point2,
}

impl Rect {
    pub const UNIT: Rect = Rect { origin: [0.0, 0.0], extent: [1.0, 1.0] };

    pub fn new(origin: Point2, extent: Point2) -> Rect {
        Rect { origin, extent }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point2>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// `(lo, hi)` with `lo < hi`; the global orientation runs lo to hi.
    pub edges: Vec<[usize; 2]>,
    /// Edge `i` of a triangle is opposite local vertex `i` and runs from local
    /// vertex `i+1` to `i+2`; the sign is +1 when that agrees with the global
    /// orientation.
    pub tri_edges: Vec<[(usize, i8); 3]>,
    /// `[T_plus, T_minus]`; `T_plus` traverses the edge lo to hi.
    pub edge_tris: Vec<[Option<usize>; 2]>,
    /// Tag per edge, `None` for interior edges.
    pub boundary_tags: Vec<Option<String>>,
    pub h_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    tags: Vec<TagEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TagEntry {
    edge: [usize; 2],
    tag: String,
}

pub fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Smallest interior angle of a counterclockwise triangle, in radians.
pub fn min_angle(p: [Point2; 3]) -> f64 {
    (0..3)
        .map(|j| {
            let (a, b, c) = (p[j], p[(j + 1) % 3], p[(j + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Perturbed triangles keep every angle above this (10 degrees), so that
/// mesh families stay shape regular under refinement.
pub const MIN_PERTURBED_ANGLE: f64 = std::f64::consts::PI / 18.0;

impl TriMesh {
    /// Builds connectivity from vertices and counterclockwise triangles.
    /// Boundary edges without an explicit tag are tagged `boundary`.
    pub fn from_parts(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        tags: &[([usize; 2], String)],
    ) -> Result<TriMesh, MeshError> {
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::BadVertex(t, v));
                }
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(MeshError::Orientation(t, area));
            }
            let mut te = [(0usize, 0i8); 3];
            for (i, slot) in te.iter_mut().enumerate() {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                let sign: i8 = if a < b { 1 } else { -1 };
                let side = if sign > 0 { 0 } else { 1 };
                if edge_tris[e][side].is_some() {
                    return Err(MeshError::NonManifold(key[0], key[1]));
                }
                edge_tris[e][side] = Some(t);
                *slot = (e, sign);
            }
            tri_edges.push(te);
        }
        let mut boundary_tags: Vec<Option<String>> = edge_tris
            .iter()
            .map(|et| {
                if et[0].is_some() && et[1].is_some() {
                    None
                } else {
                    Some("boundary".to_string())
                }
            })
            .collect();
        for (edge, tag) in tags {
            let key = [edge[0].min(edge[1]), edge[0].max(edge[1])];
            match edge_index.get(&key) {
                Some(&e) if boundary_tags[e].is_some() => boundary_tags[e] = Some(tag.clone()),
                _ => {
                    return Err(MeshError::BadTag { tag: tag.clone(), a: key[0], b: key[1] });
                }
            }
        }
        let h_max = edges
            .iter()
            .map(|&[a, b]| dist(vertices[a], vertices[b]))
            .fold(0.0, f64::max);
        Ok(TriMesh { vertices, triangles, edges, tri_edges, edge_tris, boundary_tags, h_max })
    }

    /// `n x n` cells on `rect`, each split along its SW–NE diagonal; boundary
    /// edges tagged left/right/bottom/top.
    pub fn structured(n: usize, rect: Rect) -> TriMesh {
        assert!(n >= 1, "structured mesh needs n >= 1");
        let [x0, y0] = rect.origin;
        let [lx, ly] = rect.extent;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([x0 + lx * i as f64 / n as f64, y0 + ly * j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (sw, se, ne, nw) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            }
        }
        let mut tags = Vec::with_capacity(4 * n);
        for k in 0..n {
            tags.push(([idx(k, 0), idx(k + 1, 0)], "bottom".to_string()));
            tags.push(([idx(n, k), idx(n, k + 1)], "right".to_string()));
            tags.push(([idx(k, n), idx(k + 1, n)], "top".to_string()));
            tags.push(([idx(0, k), idx(0, k + 1)], "left".to_string()));
        }
        TriMesh::from_parts(vertices, triangles, &tags).expect("structured mesh is valid")
    }

    pub fn unit_square(n: usize) -> TriMesh {
        TriMesh::structured(n, Rect::UNIT)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_tags[e].is_some()
    }

    pub fn edge_tag(&self, e: usize) -> Option<&str> {
        self.boundary_tags[e].as_deref()
    }

    pub fn tag_set(&self) -> BTreeSet<String> {
        self.boundary_tags.iter().flatten().cloned().collect()
    }

    pub fn tri_points(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.tri_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Unit tangent in the global lo to hi direction.
    pub fn edge_tangent(&self, e: usize) -> Point2 {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let l = dist(p, q);
        [(q[0] - p[0]) / l, (q[1] - p[1]) / l]
    }

    /// Global edge normal `(-t_y, t_x)`, pointing into `T_plus`.
    pub fn edge_normal(&self, e: usize) -> Point2 {
        let t = self.edge_tangent(e);
        [-t[1], t[0]]
    }

    /// Point at parameter `s` in `[0, 1]` along the global orientation.
    pub fn edge_point(&self, e: usize, s: f64) -> Point2 {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
    }

    /// Physical point from reference coordinates `(xi, eta)`.
    pub fn map_point(&self, t: usize, r: Point2) -> Point2 {
        let [a, b, c] = self.tri_points(t);
        [
            a[0] + r[0] * (b[0] - a[0]) + r[1] * (c[0] - a[0]),
            a[1] + r[0] * (b[1] - a[1]) + r[1] * (c[1] - a[1]),
        ]
    }

    /// Counterclockwise unit tangent of local edge `i` of triangle `t`.
    pub fn local_edge_tangent(&self, t: usize, i: usize) -> Point2 {
        let (e, s) = self.tri_edges[t][i];
        let g = self.edge_tangent(e);
        let s = f64::from(s);
        [s * g[0], s * g[1]]
    }

    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vt[v].push(t);
            }
        }
        vt
    }

    /// For every vertex, the boundary edges incident to it.
    pub fn vertex_boundary_edges(&self) -> Vec<Vec<usize>> {
        let mut ve = vec![Vec::new(); self.vertices.len()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.is_boundary_edge(e) {
                ve[a].push(e);
                ve[b].push(e);
            }
        }
        ve
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.vertices.len()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.is_boundary_edge(e) {
                on[a] = true;
                on[b] = true;
            }
        }
        on
    }

    /// Moves every interior vertex by an independent uniform offset in
    /// `[-a h, a h]^2`, `h = h_max` of `self`. A move that would invert an
    /// incident triangle or give it an angle below [`MIN_PERTURBED_ANGLE`]
    /// is retried with half the offset, up to 8 times.
    pub fn perturb(&self, amplitude: f64, seed: u64) -> TriMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vertices = self.vertices.clone();
        let boundary = self.boundary_vertices();
        let vt = self.vertex_triangles();
        let h = self.h_max;
        for v in 0..vertices.len() {
            if boundary[v] {
                continue;
            }
            let dx: f64 = rng.gen_range(-1.0..=1.0) * amplitude * h;
            let dy: f64 = rng.gen_range(-1.0..=1.0) * amplitude * h;
            let orig = vertices[v];
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=8 {
                vertices[v] = [orig[0] + scale * dx, orig[1] + scale * dy];
                let ok = vt[v].iter().all(|&t| {
                    let [a, b, c] = self.triangles[t];
                    let p = [vertices[a], vertices[b], vertices[c]];
                    signed_area(p[0], p[1], p[2]) > 0.0 && min_angle(p) >= MIN_PERTURBED_ANGLE
                });
                if ok {
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                vertices[v] = orig;
            }
        }
        let mut m = self.clone();
        m.vertices = vertices;
        m.h_max = m.edges.iter().map(|&[a, b]| dist(m.vertices[a], m.vertices[b])).fold(0.0, f64::max);
        m
    }

    pub fn to_json(&self) -> String {
        let tags = self
            .edges
            .iter()
            .zip(&self.boundary_tags)
            .filter_map(|(e, t)| t.as_ref().map(|tag| TagEntry { edge: *e, tag: tag.clone() }))
            .collect();
        let f = MeshFile { vertices: self.vertices.clone(), triangles: self.triangles.clone(), tags };
        serde_json::to_string(&f).expect("mesh serialises")
    }

    pub fn from_json(s: &str) -> Result<TriMesh, MeshError> {
        let f: MeshFile = serde_json::from_str(s)?;
        let tags: Vec<_> = f.tags.into_iter().map(|t| (t.edge, t.tag)).collect();
        TriMesh::from_parts(f.vertices, f.triangles, &tags)
    }
}

pub fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Meshes with `n = n0 2^l`, level `l` perturbed with seed `seed + l`.
pub fn mesh_sequence(rect: Rect, n0: usize, levels: usize, amplitude: f64, seed: u64) -> Vec<TriMesh> {
    (0..levels)
        .map(|l| TriMesh::structured(n0 << l, rect).perturb(amplitude, seed + l as u64))
        .collect()
}
