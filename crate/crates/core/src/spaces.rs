//! Lagrange, Regge, BDM and Raviart–Thomas spaces on triangle meshes.
//!
//! Local bases are computed on each physical triangle as the dual basis of
//! the degrees of freedom, expressed in monomials of the centred and scaled
//! coordinates `((x, y) - centroid) / diameter`. Edge functionals are defined
//! from global edge data (global tangent, normal and parameter), so the two
//! triangles sharing an edge see the same functionals; this is what makes
//! the spaces tt- or normal-continuous.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, ExprJet};
use crate::geom::{inv, min_eigenvalue, Mat2, MetricJet, SymJet, Vec2};
use crate::mesh::{Point2, TriMesh};
use crate::quad::{edge_rule, legendre, triangle_rule, QuadError, TriangleRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Lagrange,
    Regge,
    Bdm,
    Rt,
}

impl SpaceKind {
    /// Number of stored field components: scalar, vector, or symmetric
    /// `(11, 12, 22)`.
    pub fn components(self) -> usize {
        match self {
            SpaceKind::Lagrange => 1,
            SpaceKind::Bdm | SpaceKind::Rt => 2,
            SpaceKind::Regge => 3,
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpaceKind::Lagrange => "lagrange",
            SpaceKind::Regge => "regge",
            SpaceKind::Bdm => "bdm",
            SpaceKind::Rt => "rt",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("unsupported space {kind} of degree {degree}")]
    Unsupported { kind: SpaceKind, degree: usize },
    #[error("singular local dof system on triangle {0}")]
    Singular(usize),
    #[error("unknown boundary tag {0:?}")]
    UnknownTag(String),
    #[error("expression evaluation failed at ({x}, {y}): {source}")]
    Eval { x: f64, y: f64, source: EvalError },
    #[error("metric not positive definite at ({x}, {y}): smallest eigenvalue {min_eig}")]
    NotSpd { x: f64, y: f64, min_eig: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    Length { got: usize, expected: usize },
    #[error("dof vector json: {0}")]
    Json(String),
    #[error("{0}")]
    Other(String),
}

// Jet slots: value, d/dx, d/dy, d2/dx2, d2/dxdy, d2/dy2.
pub type Jet = [f64; 6];
pub const VAL: usize = 0;
pub const DX: usize = 1;
pub const DY: usize = 2;
pub const DXX: usize = 3;
pub const DXY: usize = 4;
pub const DYY: usize = 5;

fn monomials(p: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for d in 0..=p {
        for b in 0..=d {
            v.push((d - b, b));
        }
    }
    v
}

fn mono_index(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

/// Jets of the monomials `ξ^a η^b` up to total degree `p`, differentiated
/// in physical coordinates through `ξ = A (x - c)`.
fn mono_jets(p: usize, xi: [f64; 2], a: &Mat2) -> Vec<Jet> {
    let mut px = vec![1.0; p + 1];
    let mut py = vec![1.0; p + 1];
    for i in 1..=p {
        px[i] = px[i - 1] * xi[0];
        py[i] = py[i - 1] * xi[1];
    }
    let pw = |v: &[f64], e: usize, d: usize| -> f64 {
        if e < d {
            0.0
        } else {
            let c: f64 = ((e - d + 1)..=e).map(|k| k as f64).product();
            c * v[e - d]
        }
    };
    monomials(p)
        .into_iter()
        .map(|(i, j)| {
            let d1 = [pw(&px, i, 1) * py[j], px[i] * pw(&py, j, 1)];
            let d2 = [
                [pw(&px, i, 2) * py[j], pw(&px, i, 1) * pw(&py, j, 1)],
                [pw(&px, i, 1) * pw(&py, j, 1), px[i] * pw(&py, j, 2)],
            ];
            let dx = |k: usize| a[0][k] * d1[0] + a[1][k] * d1[1];
            let dxx = |k: usize, l: usize| {
                let mut r = 0.0;
                for m in 0..2 {
                    for n in 0..2 {
                        r += a[m][k] * a[n][l] * d2[m][n];
                    }
                }
                r
            };
            [px[i] * py[j], dx(0), dx(1), dxx(0, 0), dxx(0, 1), dxx(1, 1)]
        })
        .collect()
}

/// Affine coordinates `ξ = A (x - c)` of a triangle, centred at the
/// centroid and mapping the edges from vertex 0 to the unit vectors. `j` is
/// `A^{-1}` divided by the diameter, used for the position vector `x - c`.
#[derive(Debug, Clone, Copy)]
struct Affine {
    c: Point2,
    a: Mat2,
    j: Mat2,
}

impl Affine {
    fn new(mesh: &TriMesh, t: usize) -> Affine {
        let p = mesh.tri_points(t);
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let h = mesh.diameter(t);
        Affine {
            c: mesh.centroid(t),
            a: inv(&jac),
            j: [[jac[0][0] / h, jac[0][1] / h], [jac[1][0] / h, jac[1][1] / h]],
        }
    }

    fn xi(&self, x: Point2) -> [f64; 2] {
        let d = [x[0] - self.c[0], x[1] - self.c[1]];
        [self.a[0][0] * d[0] + self.a[0][1] * d[1], self.a[1][0] * d[0] + self.a[1][1] * d[1]]
    }
}

/// A degree of freedom as a weighted point sum over field components.
type DofFunctional = Vec<(Point2, [f64; 3])>;

/// Primitive shape functions as sums of `(component, monomial, factor)`.
type Primitive = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone)]
struct LocalBasis {
    map: Affine,
    pmax: usize,
    nmono: usize,
    // coef[(i * ncomp + c) * nmono + m]
    coef: Vec<f64>,
}

/// Values and derivatives of every local basis function at one point.
#[derive(Debug, Clone)]
pub struct BasisJets {
    pub ncomp: usize,
    pub data: Vec<Jet>,
}

impl BasisJets {
    pub fn len(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, c: usize) -> &Jet {
        &self.data[i * self.ncomp + c]
    }

    /// Vector value of basis function `i`.
    pub fn vector(&self, i: usize) -> Vec2 {
        [self.get(i, 0)[VAL], self.get(i, 1)[VAL]]
    }

    pub fn sym(&self, i: usize) -> SymJet {
        sym_jet(&self.data[i * 3..i * 3 + 3])
    }
}

/// Assembles a [`SymJet`] from the `(11, 12, 22)` component jets.
pub fn sym_jet(c: &[Jet]) -> SymJet {
    let m = |s: usize| -> Mat2 { [[c[0][s], c[1][s]], [c[1][s], c[2][s]]] };
    SymJet { v: m(VAL), d: [m(DX), m(DY)], dd: [[m(DXX), m(DXY)], [m(DXY), m(DYY)]] }
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<TriMesh>,
    kind: SpaceKind,
    degree: usize,
    ndof: usize,
    dofs: Vec<Vec<usize>>,
    essential: Vec<bool>,
    essential_tags: Vec<String>,
    nodes: Vec<Point2>,
    local: Vec<LocalBasis>,
    stream: bool,
}

impl FeSpace {
    /// Builds a space. `essential_tags` selects boundary edges whose
    /// degrees of freedom are constrained: all dofs on those edges for
    /// Lagrange, normal-trace dofs for BDM and RT, none for Regge.
    ///
    /// `Bdm` of degree 0 is the divergence-free lowest-order
    /// Raviart–Thomas space, represented as `rot ψ` of a continuous
    /// piecewise linear stream function `ψ`, which carries the dofs.
    pub fn new(mesh: Arc<TriMesh>, kind: SpaceKind, degree: usize, essential_tags: &[String]) -> Result<FeSpace, SpaceError> {
        let supported = match kind {
            SpaceKind::Lagrange => (1..=8).contains(&degree),
            SpaceKind::Regge | SpaceKind::Bdm => degree <= 6,
            SpaceKind::Rt => degree <= 5,
        };
        if !supported {
            return Err(SpaceError::Unsupported { kind, degree });
        }
        let tags = mesh.tag_set();
        for t in essential_tags {
            if !tags.contains(t) {
                return Err(SpaceError::UnknownTag(t.clone()));
            }
        }
        let ess_tags: BTreeSet<&str> = essential_tags.iter().map(String::as_str).collect();
        let tagged_edge = |e: usize| mesh.edge_tag(e).is_some_and(|t| ess_tags.contains(t));
        let stream = kind == SpaceKind::Bdm && degree == 0;
        let (nv, ne, nt) = (mesh.n_vertices(), mesh.n_edges(), mesh.n_triangles());

        let (ndof, dofs, mut essential, nodes) = if kind == SpaceKind::Lagrange || stream {
            let k = if stream { 1 } else { degree };
            let nedge = k - 1;
            let nint = if k >= 3 { (k - 1) * (k - 2) / 2 } else { 0 };
            let ndof = nv + ne * nedge + nt * nint;
            let mut nodes = vec![[0.0; 2]; ndof];
            nodes[..nv].copy_from_slice(&mesh.vertices);
            let mut essential = vec![false; ndof];
            for e in 0..ne {
                for j in 1..k {
                    nodes[nv + e * nedge + j - 1] = mesh.edge_point(e, j as f64 / k as f64);
                }
                if tagged_edge(e) {
                    let [a, b] = mesh.edges[e];
                    essential[a] = true;
                    essential[b] = true;
                    for j in 0..nedge {
                        essential[nv + e * nedge + j] = true;
                    }
                }
            }
            let mut dofs = Vec::with_capacity(nt);
            for t in 0..nt {
                let mut d: Vec<usize> = mesh.triangles[t].to_vec();
                for &(e, _) in &mesh.tri_edges[t] {
                    d.extend((0..nedge).map(|j| nv + e * nedge + j));
                }
                let base = nv + ne * nedge + t * nint;
                for (r, p) in lagrange_interior_nodes(&mesh.tri_points(t), k).into_iter().enumerate() {
                    nodes[base + r] = p;
                    d.push(base + r);
                }
                dofs.push(d);
            }
            (ndof, dofs, essential, nodes)
        } else {
            let k = degree;
            let nedge = k + 1;
            let nint = interior_count(kind, k);
            let ndof = ne * nedge + nt * nint;
            let mut essential = vec![false; ndof];
            if kind != SpaceKind::Regge {
                for e in 0..ne {
                    if tagged_edge(e) {
                        for j in 0..nedge {
                            essential[e * nedge + j] = true;
                        }
                    }
                }
            }
            let dofs = (0..nt)
                .map(|t| {
                    let mut d = Vec::new();
                    for &(e, _) in &mesh.tri_edges[t] {
                        d.extend((0..nedge).map(|j| e * nedge + j));
                    }
                    d.extend((0..nint).map(|r| ne * nedge + t * nint + r));
                    d
                })
                .collect();
            (ndof, dofs, essential, Vec::new())
        };
        if stream && !essential.iter().any(|&b| b) && ndof > 0 {
            // The stream function is determined up to a constant.
            essential[0] = true;
        }

        let local: Result<Vec<LocalBasis>, SpaceError> = (0..nt)
            .into_par_iter()
            .map(|t| {
                if stream {
                    stream_basis(&mesh, t)
                } else {
                    local_basis(&mesh, t, kind, degree)
                }
            })
            .collect();

        Ok(FeSpace {
            mesh,
            kind,
            degree,
            ndof,
            dofs,
            essential,
            essential_tags: essential_tags.to_vec(),
            nodes,
            local: local?,
            stream,
        })
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    /// Number of unconstrained dofs.
    pub fn nfree(&self) -> usize {
        self.essential.iter().filter(|&&b| !b).count()
    }

    pub fn ncomp(&self) -> usize {
        self.kind.components()
    }

    pub fn local_dim(&self) -> usize {
        self.dofs.first().map_or(0, Vec::len)
    }

    /// Global dof indices of triangle `t` in local order.
    pub fn dofs(&self, t: usize) -> &[usize] {
        &self.dofs[t]
    }

    pub fn essential(&self) -> &[bool] {
        &self.essential
    }

    pub fn essential_tags(&self) -> &[String] {
        &self.essential_tags
    }

    /// True for the stream-function realization of divergence-free `Bdm(0)`.
    pub fn is_stream(&self) -> bool {
        self.stream
    }

    /// Nodal points of a Lagrange (or stream) space, indexed by global dof.
    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    /// Highest monomial degree in the local bases.
    pub fn poly_degree(&self) -> usize {
        self.local.first().map_or(0, |l| l.pmax)
    }

    /// Jets of all local basis functions of triangle `t` at the physical
    /// point `x`.
    pub fn basis_jets(&self, t: usize, x: Point2) -> BasisJets {
        let lb = &self.local[t];
        let mj = mono_jets(lb.pmax, lb.map.xi(x), &lb.map.a);
        let ncomp = self.ncomp();
        let nloc = self.dofs[t].len();
        let mut data = vec![[0.0; 6]; nloc * ncomp];
        for (slot, out) in data.iter_mut().enumerate() {
            let row = &lb.coef[slot * lb.nmono..(slot + 1) * lb.nmono];
            for (c, m) in row.iter().zip(&mj) {
                if *c != 0.0 {
                    for s in 0..6 {
                        out[s] += c * m[s];
                    }
                }
            }
        }
        BasisJets { ncomp, data }
    }

    /// Component jets of the field with global coefficients `coeffs`.
    pub fn field_jets(&self, coeffs: &[f64], t: usize, x: Point2) -> Vec<Jet> {
        let b = self.basis_jets(t, x);
        self.combine(&b, coeffs, t)
    }

    /// Component jets of `sum_i coeffs[dofs[i]] b_i`.
    pub fn combine(&self, b: &BasisJets, coeffs: &[f64], t: usize) -> Vec<Jet> {
        let mut out = vec![[0.0; 6]; b.ncomp];
        for (i, &g) in self.dofs[t].iter().enumerate() {
            let u = coeffs[g];
            if u == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                let j = b.get(i, c);
                for s in 0..6 {
                    o[s] += u * j[s];
                }
            }
        }
        out
    }

    /// Applies the local dof functionals of triangle `t` to a field given
    /// by its components, integrating with degree at least `quad_degree`.
    fn apply_local<F>(&self, t: usize, quad_degree: usize, f: &F) -> Result<Vec<f64>, SpaceError>
    where
        F: Fn(Point2) -> Result<[f64; 3], SpaceError>,
    {
        let fs = dof_functionals(&self.mesh, t, self.kind, self.degree, quad_degree)?;
        fs.iter()
            .map(|fun| {
                let mut s = 0.0;
                for (p, w) in fun {
                    let v = f(*p)?;
                    s += w[0] * v[0] + w[1] * v[1] + w[2] * v[2];
                }
                Ok(s)
            })
            .collect()
    }

    /// Canonical interpolant: every dof functional applied to `f`, whose
    /// components follow [`SpaceKind::components`] (unused slots ignored).
    pub fn interpolate<F>(&self, quad_degree: usize, f: F) -> Result<Vec<f64>, SpaceError>
    where
        F: Fn(Point2) -> Result<[f64; 3], SpaceError> + Sync,
    {
        if self.stream {
            return Err(SpaceError::Unsupported { kind: self.kind, degree: self.degree });
        }
        if self.kind == SpaceKind::Lagrange {
            return self.nodes.iter().map(|&p| f(p).map(|v| v[0])).collect();
        }
        let local: Result<Vec<Vec<f64>>, SpaceError> =
            (0..self.mesh.n_triangles()).into_par_iter().map(|t| self.apply_local(t, quad_degree, &f)).collect();
        let mut out = vec![0.0; self.ndof];
        for (t, vals) in local?.into_iter().enumerate() {
            for (&g, v) in self.dofs[t].iter().zip(vals) {
                out[g] = v;
            }
        }
        Ok(out)
    }

    /// Local dof functionals applied to the local basis; the identity up to
    /// rounding when the local basis is dual.
    pub fn duality_matrix(&self, t: usize) -> Result<Vec<Vec<f64>>, SpaceError> {
        if self.stream {
            return Err(SpaceError::Unsupported { kind: self.kind, degree: self.degree });
        }
        let qd = self.poly_degree() + self.degree + 2;
        let fs = dof_functionals(&self.mesh, t, self.kind, self.degree, qd)?;
        let n = fs.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, fun) in fs.iter().enumerate() {
            for (p, w) in fun {
                let b = self.basis_jets(t, *p);
                for (j, mj) in m[i].iter_mut().enumerate() {
                    for c in 0..self.ncomp() {
                        *mj += w[c] * b.get(j, c)[VAL];
                    }
                }
            }
        }
        Ok(m)
    }
}

fn interior_count(kind: SpaceKind, k: usize) -> usize {
    match kind {
        SpaceKind::Lagrange => if k >= 3 { (k - 1) * (k - 2) / 2 } else { 0 },
        SpaceKind::Regge => 3 * k * (k + 1) / 2,
        SpaceKind::Bdm => if k >= 1 { (k - 1) * (k + 1) } else { 0 },
        SpaceKind::Rt => k * (k + 1),
    }
}

fn lagrange_interior_nodes(p: &[Point2; 3], k: usize) -> Vec<Point2> {
    let mut out = Vec::new();
    for b in 1..k {
        for c in 1..k - b {
            let a = k - b - c;
            if a == 0 {
                continue;
            }
            let (a, b, c) = (a as f64, b as f64, c as f64);
            let kf = k as f64;
            out.push([
                (a * p[0][0] + b * p[1][0] + c * p[2][0]) / kf,
                (a * p[0][1] + b * p[1][1] + c * p[2][1]) / kf,
            ]);
        }
    }
    out
}

/// Physical quadrature points and weights of triangle `t`.
pub fn triangle_points(mesh: &TriMesh, t: usize, rule: &TriangleRule) -> Vec<(Point2, f64)> {
    let jac = 2.0 * mesh.area(t);
    rule.iter().map(|(r, w)| (mesh.map_point(t, r), w * jac)).collect()
}

/// `(x - c)^{⊥?} m(ξ)` for a homogeneous monomial `m = ξ^a η^b`, written in
/// monomials through `x - c = h J ξ`. With `perp`, returns `(x - c)^⊥ m`.
fn position_times(j: &Mat2, a: usize, b: usize, perp: bool) -> Primitive {
    let (m1, m2) = (mono_index(a + 1, b), mono_index(a, b + 1));
    let comp = |r: usize| [(m1, j[r][0]), (m2, j[r][1])];
    let (c0, c1, s0) = if perp { (comp(1), comp(0), -1.0) } else { (comp(0), comp(1), 1.0) };
    let mut out = Vec::new();
    for (m, f) in c0 {
        out.push((0, m, s0 * f));
    }
    for (m, f) in c1 {
        out.push((1, m, f));
    }
    out
}

fn primitives(kind: SpaceKind, k: usize, map: &Affine) -> (usize, Vec<Primitive>) {
    let nm = |p: usize| (p + 1) * (p + 2) / 2;
    match kind {
        SpaceKind::Lagrange => (k, (0..nm(k)).map(|m| vec![(0, m, 1.0)]).collect()),
        SpaceKind::Regge => (k, (0..3).flat_map(|c| (0..nm(k)).map(move |m| vec![(c, m, 1.0)])).collect()),
        SpaceKind::Bdm => (k, (0..2).flat_map(|c| (0..nm(k)).map(move |m| vec![(c, m, 1.0)])).collect()),
        SpaceKind::Rt => {
            let mut p: Vec<Primitive> =
                (0..2).flat_map(|c| (0..nm(k)).map(move |m| vec![(c, m, 1.0)])).collect();
            for b in 0..=k {
                let a = k - b;
                p.push(position_times(&map.j, a, b, false));
            }
            (k + 1, p)
        }
    }
}

fn dof_functionals(
    mesh: &TriMesh,
    t: usize,
    kind: SpaceKind,
    k: usize,
    quad_degree: usize,
) -> Result<Vec<DofFunctional>, SpaceError> {
    let mut out = Vec::new();
    if kind == SpaceKind::Lagrange {
        let p = mesh.tri_points(t);
        for v in p {
            out.push(vec![(v, [1.0, 0.0, 0.0])]);
        }
        for &(e, _) in &mesh.tri_edges[t] {
            for j in 1..k {
                out.push(vec![(mesh.edge_point(e, j as f64 / k as f64), [1.0, 0.0, 0.0])]);
            }
        }
        for q in lagrange_interior_nodes(&p, k) {
            out.push(vec![(q, [1.0, 0.0, 0.0])]);
        }
        return Ok(out);
    }
    let er = edge_rule(quad_degree)?;
    for &(e, _) in &mesh.tri_edges[t] {
        let w = match kind {
            SpaceKind::Regge => {
                let tau = mesh.edge_tangent(e);
                [tau[0] * tau[0], 2.0 * tau[0] * tau[1], tau[1] * tau[1]]
            }
            _ => {
                let nu = mesh.edge_normal(e);
                [nu[0], nu[1], 0.0]
            }
        };
        for j in 0..=k {
            out.push(
                er.iter()
                    .map(|(s, ws)| {
                        let q = legendre(j, 2.0 * s - 1.0).0 * ws;
                        (mesh.edge_point(e, s), [w[0] * q, w[1] * q, w[2] * q])
                    })
                    .collect(),
            );
        }
    }
    let tr = triangle_rule(quad_degree)?;
    let pts = triangle_points(mesh, t, &tr);
    let area = mesh.area(t);
    let map = Affine::new(mesh, t);
    // Interior test functions as (component weights) per monomial.
    let mut tests: Vec<Vec<(usize, [f64; 3])>> = Vec::new();
    match kind {
        SpaceKind::Regge if k >= 1 => {
            for c in 0..3 {
                let w = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]][c];
                for m in 0..monomials(k - 1).len() {
                    tests.push(vec![(m, w)]);
                }
            }
        }
        SpaceKind::Rt if k >= 1 => {
            for w in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
                for m in 0..monomials(k - 1).len() {
                    tests.push(vec![(m, w)]);
                }
            }
        }
        SpaceKind::Bdm if k >= 2 => {
            for w in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
                for m in 0..monomials(k - 2).len() {
                    tests.push(vec![(m, w)]);
                }
            }
            // (x - c)^⊥ times homogeneous monomials of degree k - 2.
            for b in 0..=k - 2 {
                let a = k - 2 - b;
                let prim = position_times(&map.j, a, b, true);
                tests.push(prim.into_iter().map(|(c, m, f)| (m, if c == 0 { [f, 0.0, 0.0] } else { [0.0, f, 0.0] })).collect());
            }
        }
        _ => {}
    }
    let pm = k.max(1);
    for test in tests {
        out.push(
            pts.iter()
                .map(|&(x, w)| {
                    let mj = mono_jets(pm, map.xi(x), &map.a);
                    let mut cw = [0.0; 3];
                    for (m, wc) in &test {
                        for c in 0..3 {
                            cw[c] += wc[c] * mj[*m][VAL];
                        }
                    }
                    let s = w / area;
                    (x, [cw[0] * s, cw[1] * s, cw[2] * s])
                })
                .collect(),
        );
    }
    Ok(out)
}

fn local_basis(mesh: &TriMesh, t: usize, kind: SpaceKind, k: usize) -> Result<LocalBasis, SpaceError> {
    let map = Affine::new(mesh, t);
    let (pmax, prims) = primitives(kind, k, &map);
    let nmono = monomials(pmax).len();
    let ncomp = kind.components();
    let funs = dof_functionals(mesh, t, kind, k, pmax + k + 2)?;
    let n = prims.len();
    debug_assert_eq!(funs.len(), n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    for (i, fun) in funs.iter().enumerate() {
        for (x, w) in fun {
            let mj = mono_jets(pmax, map.xi(*x), &map.a);
            for (p, prim) in prims.iter().enumerate() {
                let mut s = 0.0;
                for &(c, m, f) in prim {
                    s += w[c] * f * mj[m][VAL];
                }
                v[(i, p)] += s;
            }
        }
    }
    let mut vinv = v.clone().try_inverse().ok_or(SpaceError::Singular(t))?;
    // One Newton step X <- X + X (I - V X) tightens duality at higher degrees.
    let resid = DMatrix::<f64>::identity(n, n) - &v * &vinv;
    vinv += &vinv * resid;
    // basis_j = sum_p C[j][p] prim_p with C = V^{-T}.
    let mut coef = vec![0.0; n * ncomp * nmono];
    for j in 0..n {
        for (p, prim) in prims.iter().enumerate() {
            let cjp = vinv[(p, j)];
            for &(c, m, f) in prim {
                coef[(j * ncomp + c) * nmono + m] += cjp * f;
            }
        }
    }
    Ok(LocalBasis { map, pmax, nmono, coef })
}

fn stream_basis(mesh: &TriMesh, t: usize) -> Result<LocalBasis, SpaceError> {
    let lag = local_basis(mesh, t, SpaceKind::Lagrange, 1)?;
    let nmono = lag.nmono;
    let mut coef = vec![0.0; 3 * 2 * nmono];
    for j in 0..3 {
        let (c1, c2) = (lag.coef[j * nmono + 1], lag.coef[j * nmono + 2]);
        let a = &lag.map.a;
        let (dx, dy) = (c1 * a[0][0] + c2 * a[1][0], c1 * a[0][1] + c2 * a[1][1]);
        coef[(j * 2) * nmono] = dy;
        coef[(j * 2 + 1) * nmono] = -dx;
    }
    Ok(LocalBasis { coef, ..lag })
}

/// Coefficients of a field in a finite element space.
#[derive(Debug, Clone)]
pub struct DofVector {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DofFile {
    kind: SpaceKind,
    degree: usize,
    ndof: usize,
    coeffs: Vec<f64>,
}

impl DofVector {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<DofVector, SpaceError> {
        if coeffs.len() != space.ndof() {
            return Err(SpaceError::Length { got: coeffs.len(), expected: space.ndof() });
        }
        Ok(DofVector { space, coeffs })
    }

    pub fn zeros(space: Arc<FeSpace>) -> DofVector {
        let n = space.ndof();
        DofVector { space, coeffs: vec![0.0; n] }
    }

    pub fn jets(&self, t: usize, x: Point2) -> Vec<Jet> {
        self.space.field_jets(&self.coeffs, t, x)
    }

    /// Symmetric tensor jet of a Regge field on triangle `t`.
    pub fn sym_jet(&self, t: usize, x: Point2) -> SymJet {
        sym_jet(&self.jets(t, x))
    }

    /// Vector value of a BDM or RT field.
    pub fn vector(&self, t: usize, x: Point2) -> Vec2 {
        let j = self.jets(t, x);
        [j[0][VAL], j[1][VAL]]
    }

    pub fn scalar(&self, t: usize, x: Point2) -> f64 {
        self.jets(t, x)[0][VAL]
    }

    pub fn to_json(&self) -> String {
        let f = DofFile {
            kind: self.space.kind(),
            degree: self.space.degree(),
            ndof: self.space.ndof(),
            coeffs: self.coeffs.clone(),
        };
        serde_json::to_string(&f).expect("dof vectors serialize")
    }

    pub fn from_json(space: Arc<FeSpace>, s: &str) -> Result<DofVector, SpaceError> {
        let f: DofFile = serde_json::from_str(s).map_err(|e| SpaceError::Json(e.to_string()))?;
        if f.kind != space.kind() || f.degree != space.degree() || f.ndof != space.ndof() {
            return Err(SpaceError::Json(format!(
                "stored {} degree {} with {} dofs does not match the space",
                f.kind, f.degree, f.ndof
            )));
        }
        DofVector::new(space, f.coeffs)
    }
}

/// A smooth symmetric tensor field with exact derivatives.
pub trait TensorField: Sync {
    fn jet(&self, p: Point2) -> Result<SymJet, SpaceError>;

    fn value(&self, p: Point2) -> Result<Mat2, SpaceError> {
        Ok(self.jet(p)?.v)
    }
}

fn eval_err(p: Point2) -> impl Fn(EvalError) -> SpaceError {
    move |source| SpaceError::Eval { x: p[0], y: p[1], source }
}

/// Symmetric tensor field given by expressions for the `11`, `12` and `22`
/// entries.
#[derive(Debug, Clone)]
pub struct AnalyticTensor {
    entries: [ExprJet; 3],
}

impl AnalyticTensor {
    pub fn new(s11: &Expr, s12: &Expr, s22: &Expr) -> AnalyticTensor {
        AnalyticTensor { entries: [ExprJet::new(s11, 2), ExprJet::new(s12, 2), ExprJet::new(s22, 2)] }
    }

    pub fn parse(s11: &str, s12: &str, s22: &str) -> Result<AnalyticTensor, crate::expr::ParseError> {
        Ok(AnalyticTensor::new(&Expr::parse(s11)?, &Expr::parse(s12)?, &Expr::parse(s22)?))
    }
}

impl TensorField for AnalyticTensor {
    fn jet(&self, p: Point2) -> Result<SymJet, SpaceError> {
        let mut c = [[0.0; 6]; 3];
        for (ci, jet) in c.iter_mut().zip(&self.entries) {
            let v = jet.eval_all(p[0], p[1]).map_err(eval_err(p))?;
            // Graded order (0,0),(1,0),(0,1),(2,0),(1,1),(0,2) matches the jet slots.
            ci.copy_from_slice(&v[..6]);
        }
        Ok(sym_jet(&c))
    }
}

/// Analytic metric, either by entries or as the graph metric
/// `g = I + ∇f ∇f^T` of a height function `f`.
#[derive(Debug, Clone)]
pub enum AnalyticMetric {
    Entries(AnalyticTensor),
    Graph(ExprJet),
}

impl AnalyticMetric {
    pub fn entries(g11: &Expr, g12: &Expr, g22: &Expr) -> AnalyticMetric {
        AnalyticMetric::Entries(AnalyticTensor::new(g11, g12, g22))
    }

    pub fn graph(f: &Expr) -> AnalyticMetric {
        AnalyticMetric::Graph(ExprJet::new(f, 3))
    }

    /// Checks positive definiteness at the quadrature points of every
    /// triangle.
    pub fn check_spd(&self, mesh: &TriMesh, quad_degree: usize) -> Result<(), SpaceError> {
        let rule = triangle_rule(quad_degree)?;
        for t in 0..mesh.n_triangles() {
            for (p, _) in triangle_points(mesh, t, &rule) {
                let g = self.value(p)?;
                let min_eig = min_eigenvalue(&g);
                if !(min_eig > 1e-12) {
                    return Err(SpaceError::NotSpd { x: p[0], y: p[1], min_eig });
                }
            }
        }
        Ok(())
    }
}

impl TensorField for AnalyticMetric {
    fn jet(&self, p: Point2) -> Result<MetricJet, SpaceError> {
        match self {
            AnalyticMetric::Entries(t) => t.jet(p),
            AnalyticMetric::Graph(f) => {
                let v = f.eval_all(p[0], p[1]).map_err(eval_err(p))?;
                // v in graded order: f, fx, fy, fxx, fxy, fyy, fxxx, fxxy, fxyy, fyyy.
                let d1 = [v[1], v[2]];
                let d2 = [[v[3], v[4]], [v[4], v[5]]];
                let d3 = |a: usize, b: usize, c: usize| v[6 + a + b + c];
                let mut j = SymJet::default();
                for a in 0..2 {
                    for b in 0..2 {
                        j.v[a][b] = if a == b { 1.0 } else { 0.0 } + d1[a] * d1[b];
                        for k in 0..2 {
                            j.d[k][a][b] = d2[a][k] * d1[b] + d1[a] * d2[b][k];
                            for l in 0..2 {
                                j.dd[k][l][a][b] = d3(a, k, l) * d1[b]
                                    + d2[a][k] * d2[b][l]
                                    + d2[a][l] * d2[b][k]
                                    + d1[a] * d3(b, k, l);
                            }
                        }
                    }
                }
                Ok(j)
            }
        }
    }
}

/// Canonical Regge interpolant of a smooth tensor field.
pub fn regge_interpolate(field: &dyn TensorField, space: &Arc<FeSpace>, quad_degree: usize) -> Result<DofVector, SpaceError> {
    if space.kind() != SpaceKind::Regge {
        return Err(SpaceError::Other(format!("expected a regge space, got {}", space.kind())));
    }
    let coeffs = space.interpolate(quad_degree, |p| {
        let g = field.value(p)?;
        Ok([g[0][0], g[0][1], g[1][1]])
    })?;
    DofVector::new(space.clone(), coeffs)
}

/// Nodal Lagrange interpolant of a scalar expression.
pub fn lagrange_interpolate(e: &Expr, space: &Arc<FeSpace>) -> Result<DofVector, SpaceError> {
    if space.kind() != SpaceKind::Lagrange {
        return Err(SpaceError::Other(format!("expected a lagrange space, got {}", space.kind())));
    }
    let coeffs = space.interpolate(0, |p| Ok([e.eval(p[0], p[1]).map_err(eval_err(p))?, 0.0, 0.0]))?;
    DofVector::new(space.clone(), coeffs)
}
