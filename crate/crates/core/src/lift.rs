//! Distributional curvature, connection, covariant curl and incompatibility
//! functionals, and their liftings into finite element spaces.
//!
//! Sign conventions: every element-boundary integral runs over the
//! counterclockwise unit tangent `τ` of the triangle and the inward
//! Euclidean normal `ν = (-τ², τ¹)`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::geom::{
    self, bilinear, connection_coefficients, curl_g_sigma, det, frame, gauss_curvature, geodesic_curvature_weight,
    inc_g_sigma, interior_angle, matvec, min_eigenvalue, normal_tangent, normal_tangent_with_derivative,
    principal_value, signed_angle, EdgeFrame, MetricJet, SymJet, EPS, IDENTITY,
};
use crate::linalg::{constrain, Cholesky, Constrained, SolveError, SparseSym};
use crate::mesh::{Point2, TriMesh};
use crate::quad::{edge_rule, triangle_rule, QuadError};
use crate::spaces::{lagrange_interpolate, triangle_points, AnalyticMetric, DofVector, FeSpace, SpaceError, SpaceKind, TensorField, DX, DY, VAL};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("metric not positive definite on triangle {triangle} at ({x}, {y})")]
    NotSpd { triangle: usize, x: f64, y: f64 },
    #[error("metric path G(t) not positive definite at t = {t}")]
    PathNotSpd { t: f64 },
    #[error("boundary edge tagged {0:?} has neither Dirichlet nor Neumann data")]
    MissingNeumann(String),
    #[error("boundary tag {0:?} is both Dirichlet and Neumann")]
    OverlappingTags(String),
    #[error("{0}")]
    Mismatch(String),
}

/// A linear functional on a finite element space, stored by its action on
/// each global basis function.
#[derive(Debug, Clone)]
pub struct Functional {
    pub space: Arc<FeSpace>,
    pub values: Vec<f64>,
}

#[derive(Serialize)]
struct FunctionalFile<'a> {
    kind: SpaceKind,
    degree: usize,
    values: &'a [f64],
}

impl Functional {
    /// Largest absolute value over unconstrained dofs.
    pub fn max_free(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.essential())
            .filter(|(_, &e)| !e)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    /// Action on the field with coefficients `u`.
    pub fn apply(&self, u: &[f64]) -> f64 {
        self.values.iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn to_json(&self) -> String {
        let f = FunctionalFile { kind: self.space.kind(), degree: self.space.degree(), values: &self.values };
        serde_json::to_string(&f).expect("functionals serialize")
    }
}

/// Boundary data for the curvature problem.
#[derive(Debug, Clone, Default)]
pub struct BoundaryData {
    /// Tag to prescribed curvature `K^D`.
    pub dirichlet: BTreeMap<String, Expr>,
    /// Tag to geodesic curvature `κ(gex)` of the boundary.
    pub neumann: BTreeMap<String, Expr>,
    /// Interior angle of the exact metric at boundary kinks, by location.
    pub corner_angles: Vec<(Point2, f64)>,
    /// Exact metric near the Neumann boundary, used for its arc length and
    /// for kink angles without a configured value.
    pub exact_metric: Option<Arc<AnalyticMetric>>,
}

impl BoundaryData {
    /// Homogeneous Neumann data (`κ = 0`) on every tag of `mesh`.
    pub fn natural(mesh: &TriMesh) -> BoundaryData {
        BoundaryData {
            neumann: mesh.tag_set().into_iter().map(|t| (t, Expr::c(0.0))).collect(),
            ..Default::default()
        }
    }

    /// Homogeneous Dirichlet data on every tag of `mesh`.
    pub fn clamped(mesh: &TriMesh) -> BoundaryData {
        BoundaryData {
            dirichlet: mesh.tag_set().into_iter().map(|t| (t, Expr::c(0.0))).collect(),
            ..Default::default()
        }
    }

    pub fn dirichlet_tags(&self) -> Vec<String> {
        self.dirichlet.keys().cloned().collect()
    }

    fn validate(&self, mesh: &TriMesh) -> Result<(), LiftError> {
        for t in self.dirichlet.keys() {
            if self.neumann.contains_key(t) {
                return Err(LiftError::OverlappingTags(t.clone()));
            }
        }
        for tag in mesh.tag_set() {
            if !self.dirichlet.contains_key(&tag) && !self.neumann.contains_key(&tag) {
                return Err(LiftError::MissingNeumann(tag));
            }
        }
        Ok(())
    }
}

/// A symmetric tensor field that can be evaluated element by element,
/// such as a Regge field or a smooth field restricted to the mesh.
pub trait ElementField: Sync {
    fn sym_jet(&self, t: usize, x: Point2) -> Result<SymJet, LiftError>;

    /// The underlying finite element space, if any.
    fn fe_space(&self) -> Option<&Arc<FeSpace>> {
        None
    }
}

impl ElementField for DofVector {
    fn sym_jet(&self, t: usize, x: Point2) -> Result<SymJet, LiftError> {
        Ok(DofVector::sym_jet(self, t, x))
    }

    fn fe_space(&self) -> Option<&Arc<FeSpace>> {
        Some(&self.space)
    }
}

/// A smooth analytic tensor field seen element by element.
pub struct Smooth<'a>(pub &'a dyn TensorField);

impl ElementField for Smooth<'_> {
    fn sym_jet(&self, _t: usize, x: Point2) -> Result<SymJet, LiftError> {
        Ok(self.0.jet(x)?)
    }
}

/// `a - b` of two element fields.
pub struct Difference<'a>(pub &'a dyn ElementField, pub &'a dyn ElementField);

impl ElementField for Difference<'_> {
    fn sym_jet(&self, t: usize, x: Point2) -> Result<SymJet, LiftError> {
        let (a, b) = (self.0.sym_jet(t, x)?, self.1.sym_jet(t, x)?);
        Ok(a.axpy(-1.0, &b))
    }

    fn fe_space(&self) -> Option<&Arc<FeSpace>> {
        self.0.fe_space().or(self.1.fe_space())
    }
}

fn check_sigma(sigma: &dyn ElementField, space: &FeSpace) -> Result<(), LiftError> {
    match sigma.fe_space() {
        Some(s) => check_same_mesh(s, space),
        None => Ok(()),
    }
}

/// Default quadrature degree for metric-nonlinear integrands with a
/// Regge metric of degree `k`.
pub fn default_quad_degree(k: usize) -> usize {
    2 * k + 6
}

fn check_regge(v: &DofVector, what: &str) -> Result<(), LiftError> {
    if v.space.kind() != SpaceKind::Regge {
        return Err(LiftError::Mismatch(format!("{what} must be a regge field, got {}", v.space.kind())));
    }
    Ok(())
}

fn check_same_mesh(a: &FeSpace, b: &FeSpace) -> Result<(), LiftError> {
    if Arc::ptr_eq(a.mesh(), b.mesh()) || a.mesh() == b.mesh() {
        Ok(())
    } else {
        Err(LiftError::Mismatch("fields live on different meshes".into()))
    }
}

fn metric_jet(g: &DofVector, t: usize, x: Point2) -> Result<MetricJet, LiftError> {
    let j = g.sym_jet(t, x);
    if min_eigenvalue(&j.v) > 0.0 {
        Ok(j)
    } else {
        Err(LiftError::NotSpd { triangle: t, x: x[0], y: x[1] })
    }
}

/// Runs `local` on every triangle in parallel and scatters the local
/// vectors into a global one in triangle order.
fn assemble<F>(space: &FeSpace, local: F) -> Result<Vec<f64>, LiftError>
where
    F: Fn(usize) -> Result<Vec<f64>, LiftError> + Sync + Send,
{
    let nt = space.mesh().n_triangles();
    let parts: Result<Vec<Vec<f64>>, LiftError> = (0..nt).into_par_iter().map(local).collect();
    let mut out = vec![0.0; space.ndof()];
    for (t, loc) in parts?.into_iter().enumerate() {
        for (&g, v) in space.dofs(t).iter().zip(loc) {
            out[g] += v;
        }
    }
    Ok(out)
}

/// Physical points and weights `dl` along local edge `i` of triangle `t`.
fn edge_points(mesh: &TriMesh, t: usize, i: usize, degree: usize) -> Result<Vec<(Point2, f64)>, LiftError> {
    let (e, _) = mesh.tri_edges[t][i];
    let len = mesh.edge_length(e);
    Ok(edge_rule(degree)?.iter().map(|(s, w)| (mesh.edge_point(e, s), w * len)).collect())
}

/// Counterclockwise incoming and outgoing edge vectors at local vertex `j`.
fn corner_vectors(p: &[Point2; 3], j: usize) -> ([f64; 2], [f64; 2]) {
    let (a, v, b) = (p[(j + 2) % 3], p[j], p[(j + 1) % 3]);
    ([v[0] - a[0], v[1] - a[1]], [b[0] - v[0], b[1] - v[1]])
}

/// Mass matrix `∫ φ_a · φ_b w`, with `w = sqrt(det g)` when a metric is
/// given and `w = 1` otherwise.
pub fn mass_matrix(space: &FeSpace, metric: Option<&DofVector>, quad_degree: usize) -> Result<SparseSym, LiftError> {
    let mesh = space.mesh();
    let rule = triangle_rule(quad_degree)?;
    let ncomp = space.ncomp();
    let parts: Result<Vec<Vec<f64>>, LiftError> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let n = space.dofs(t).len();
            let mut m = vec![0.0; n * n];
            for (x, w) in triangle_points(mesh, t, &rule) {
                let wt = match metric {
                    Some(g) => w * det(&metric_jet(g, t, x)?.v).sqrt(),
                    None => w,
                };
                let b = space.basis_jets(t, x);
                for a in 0..n {
                    for c in 0..n {
                        let mut s = 0.0;
                        for k in 0..ncomp {
                            s += b.get(a, k)[VAL] * b.get(c, k)[VAL];
                        }
                        m[a * n + c] += wt * s;
                    }
                }
            }
            Ok(m)
        })
        .collect();
    let mut trip = Vec::new();
    for (t, m) in parts?.into_iter().enumerate() {
        let d = space.dofs(t);
        let n = d.len();
        for a in 0..n {
            for c in 0..n {
                trip.push((d[a], d[c], m[a * n + c]));
            }
        }
    }
    Ok(SparseSym::from_triplets(space.ndof(), trip))
}

/// A factorised mass matrix with the essential dofs of its space fixed,
/// reusable across right-hand sides.
pub struct MassSolver {
    space: Arc<FeSpace>,
    system: Constrained,
    chol: Cholesky,
}

impl MassSolver {
    /// `values[i]` is the prescribed value of essential dof `i` (ignored
    /// elsewhere); `None` means homogeneous.
    pub fn new(
        space: Arc<FeSpace>,
        metric: Option<&DofVector>,
        values: Option<&[f64]>,
        quad_degree: usize,
    ) -> Result<MassSolver, LiftError> {
        let m = mass_matrix(&space, metric, quad_degree)?;
        let ess: Vec<Option<f64>> = space
            .essential()
            .iter()
            .enumerate()
            .map(|(i, &e)| e.then(|| values.map_or(0.0, |v| v[i])))
            .collect();
        let system = constrain(&m, &ess);
        let chol = Cholesky::factor(&system.matrix)?;
        Ok(MassSolver { space, system, chol })
    }

    pub fn solve(&self, f: &Functional) -> DofVector {
        let x = self.system.expand(&self.chol.solve(&self.system.reduced_rhs(&f.values)));
        DofVector { space: self.space.clone(), coeffs: x }
    }
}

// Boundary vertex data for the Neumann corner correction.
fn neumann_vertex_weights(v: &FeSpace, bd: &BoundaryData) -> Result<Vec<(usize, f64)>, LiftError> {
    let mesh = v.mesh();
    let vt = mesh.vertex_triangles();
    // Incoming and outgoing boundary edge per vertex along the
    // counterclockwise boundary traversal.
    let mut inc: BTreeMap<usize, (usize, [f64; 2])> = BTreeMap::new();
    let mut out: BTreeMap<usize, (usize, [f64; 2])> = BTreeMap::new();
    for (e, tris) in mesh.edge_tris.iter().enumerate() {
        if !mesh.is_boundary_edge(e) {
            continue;
        }
        let t = tris[0].or(tris[1]).expect("boundary edge has a triangle");
        let i = mesh.tri_edges[t].iter().position(|&(ee, _)| ee == e).expect("edge in triangle");
        let tri = mesh.triangles[t];
        let (from, to) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
        let (p, q) = (mesh.vertices[from], mesh.vertices[to]);
        let d = [q[0] - p[0], q[1] - p[1]];
        out.insert(from, (e, d));
        inc.insert(to, (e, d));
    }
    let mut res = Vec::new();
    let mut seen = BTreeSet::new();
    for (e, tag) in mesh.boundary_tags.iter().enumerate() {
        let Some(tag) = tag else { continue };
        if !bd.neumann.contains_key(tag) {
            continue;
        }
        for vtx in mesh.edges[e] {
            if !seen.insert(vtx) {
                continue;
            }
            let flat_sum: f64 = vt[vtx]
                .iter()
                .map(|&t| {
                    let j = mesh.triangles[t].iter().position(|&w| w == vtx).unwrap();
                    let (a, b) = corner_vectors(&mesh.tri_points(t), j);
                    interior_angle(&IDENTITY, a, b).unwrap_or(0.0)
                })
                .sum();
            let (Some(&(_, tin)), Some(&(_, tout))) = (inc.get(&vtx), out.get(&vtx)) else { continue };
            let cross = tin[0] * tout[1] - tin[1] * tout[0];
            let dot = tin[0] * tout[0] + tin[1] * tout[1];
            let scale = (tin[0].hypot(tin[1])) * (tout[0].hypot(tout[1]));
            let p = mesh.vertices[vtx];
            let boundary_angle = if cross.abs() <= 1e-12 * scale && dot > 0.0 {
                PI
            } else if let Some(&(_, a)) =
                bd.corner_angles.iter().find(|(c, _)| (c[0] - p[0]).hypot(c[1] - p[1]) < 1e-9)
            {
                a
            } else if let Some(m) = &bd.exact_metric {
                interior_angle(&m.value(p)?, tin, tout).unwrap_or(flat_sum)
            } else {
                flat_sum
            };
            res.push((vtx, boundary_angle - flat_sum));
        }
    }
    Ok(res)
}

/// The curvature functional `<K_g, u> - <κ^N, u>` on a Lagrange space.
pub fn assemble_curvature_rhs(
    g: &DofVector,
    v: &Arc<FeSpace>,
    bd: &BoundaryData,
    quad_degree: usize,
) -> Result<Functional, LiftError> {
    check_regge(g, "metric")?;
    if v.kind() != SpaceKind::Lagrange {
        return Err(LiftError::Mismatch("curvature test space must be lagrange".into()));
    }
    check_same_mesh(&g.space, v)?;
    let mesh = v.mesh();
    bd.validate(mesh)?;
    let rule = triangle_rule(quad_degree)?;
    let mut values = assemble(v, |t| {
        let n = v.dofs(t).len();
        let mut loc = vec![0.0; n];
        for (x, w) in triangle_points(mesh, t, &rule) {
            let j = metric_jet(g, t, x)?;
            let f = w * gauss_curvature(&j) * det(&j.v).sqrt();
            let b = v.basis_jets(t, x);
            for (a, l) in loc.iter_mut().enumerate() {
                *l += f * b.get(a, 0)[VAL];
            }
        }
        for i in 0..3 {
            let (e, _) = mesh.tri_edges[t][i];
            let tag = mesh.edge_tag(e);
            if tag.is_some_and(|s| bd.dirichlet.contains_key(s)) {
                continue;
            }
            let neumann = tag.and_then(|s| bd.neumann.get(s));
            let tau = mesh.local_edge_tangent(t, i);
            for (x, dl) in edge_points(mesh, t, i, quad_degree)? {
                let j = metric_jet(g, t, x)?;
                let mut f = geodesic_curvature_weight(&j, tau);
                if let Some(kappa) = neumann {
                    let kv = kappa.eval(x[0], x[1]).map_err(|source| SpaceError::Eval { x: x[0], y: x[1], source })?;
                    let gm = match &bd.exact_metric {
                        Some(m) => m.value(x)?,
                        None => j.v,
                    };
                    f -= kv * bilinear(&gm, tau, tau).sqrt();
                }
                let b = v.basis_jets(t, x);
                for (a, l) in loc.iter_mut().enumerate() {
                    *l += f * dl * b.get(a, 0)[VAL];
                }
            }
        }
        let p = mesh.tri_points(t);
        for (jv, l) in loc.iter_mut().take(3).enumerate() {
            let (a, b) = corner_vectors(&p, jv);
            let gv = metric_jet(g, t, p[jv])?.v;
            let ad = interior_angle(&IDENTITY, a, b).map_err(|e| LiftError::Mismatch(e.to_string()))?;
            let ag = interior_angle(&gv, a, b).map_err(|e| LiftError::Mismatch(e.to_string()))?;
            *l += ad - ag;
        }
        Ok(loc)
    })?;
    for (vtx, w) in neumann_vertex_weights(v, bd)? {
        values[vtx] += w;
    }
    Ok(Functional { space: v.clone(), values })
}

/// Values of the Dirichlet data at the essential dofs of `v`.
fn dirichlet_values(v: &Arc<FeSpace>, bd: &BoundaryData) -> Result<Vec<f64>, LiftError> {
    let mesh = v.mesh();
    let mut vals = vec![0.0; v.ndof()];
    let mut done = vec![false; v.ndof()];
    let mut interps = BTreeMap::new();
    for (tag, expr) in &bd.dirichlet {
        interps.insert(tag.as_str(), lagrange_interpolate(expr, v)?);
    }
    for (e, tag) in mesh.boundary_tags.iter().enumerate() {
        let Some(interp) = tag.as_deref().and_then(|s| interps.get(s)) else { continue };
        let t = mesh.edge_tris[e][0].or(mesh.edge_tris[e][1]).expect("edge has a triangle");
        let i = mesh.tri_edges[t].iter().position(|&(ee, _)| ee == e).unwrap();
        let k = v.degree();
        let d = v.dofs(t);
        let mut on_edge = vec![d[(i + 1) % 3], d[(i + 2) % 3]];
        on_edge.extend_from_slice(&d[3 + i * (k - 1)..3 + (i + 1) * (k - 1)]);
        for g in on_edge {
            if !done[g] {
                vals[g] = interp.coeffs[g];
                done[g] = true;
            }
        }
    }
    Ok(vals)
}

/// `K_h(g)`: solves `∫ K_h u sqrt(det g) = <K_g, u> - <κ^N, u>` for all
/// test functions vanishing on the essential boundary of `v`, with the
/// Dirichlet data interpolated there.
pub fn lift_curvature(
    g: &DofVector,
    v: &Arc<FeSpace>,
    bd: &BoundaryData,
    quad_degree: usize,
) -> Result<DofVector, LiftError> {
    let f = assemble_curvature_rhs(g, v, bd, quad_degree)?;
    let vals = dirichlet_values(v, bd)?;
    Ok(MassSolver::new(v.clone(), Some(g), Some(&vals), quad_degree)?.solve(&f))
}

/// Edge term sign: the connection functional uses `-Θ^E v·ν_E`.
fn edge_angle_jump(gp: &MetricJet, gm: &MetricJet, tau: [f64; 2]) -> Result<f64, LiftError> {
    let ang = |j: &MetricJet| -> Result<f64, LiftError> {
        let e1 = frame(j).e[0];
        let n = EdgeFrame::new(&j.v, tau).gn;
        signed_angle(&j.v, e1, n).map_err(|e| LiftError::Mismatch(e.to_string()))
    };
    Ok(principal_value(ang(gp)? - ang(gm)?))
}

/// Angle jump `Θ^E` of the frames across interior edge `e` at parameter
/// `s`, from `T_minus` to `T_plus`.
pub fn frame_jump(g: &DofVector, e: usize, s: f64) -> Result<f64, LiftError> {
    let mesh = g.space.mesh();
    let [Some(tp), Some(tm)] = mesh.edge_tris[e] else {
        return Err(LiftError::Mismatch(format!("edge {e} is on the boundary")));
    };
    let x = mesh.edge_point(e, s);
    edge_angle_jump(&metric_jet(g, tp, x)?, &metric_jet(g, tm, x)?, mesh.edge_tangent(e))
}

/// The connection functional `∫_T ω_i v^i - Σ_E ∫_E Θ^E v·ν_E` on a BDM
/// or RT space. Interior edges always carry the jump term. With an
/// `exterior` metric, boundary edges carry it too, measured against the
/// frame of that metric outside the domain; this keeps the lifting
/// consistent for test fields with free normal trace.
pub fn assemble_connection_rhs(
    g: &DofVector,
    w: &Arc<FeSpace>,
    exterior: Option<&dyn TensorField>,
    quad_degree: usize,
) -> Result<Functional, LiftError> {
    check_regge(g, "metric")?;
    if !matches!(w.kind(), SpaceKind::Bdm | SpaceKind::Rt) {
        return Err(LiftError::Mismatch("connection test space must be bdm or rt".into()));
    }
    check_same_mesh(&g.space, w)?;
    let mesh = w.mesh();
    let rule = triangle_rule(quad_degree)?;
    let side = |tri: Option<usize>, x: Point2| -> Result<MetricJet, LiftError> {
        match (tri, exterior) {
            (Some(t), _) => metric_jet(g, t, x),
            (None, Some(m)) => Ok(m.jet(x)?),
            (None, None) => unreachable!("boundary edges are skipped without an exterior metric"),
        }
    };
    let values = assemble(w, |t| {
        let n = w.dofs(t).len();
        let mut loc = vec![0.0; n];
        for (x, wt) in triangle_points(mesh, t, &rule) {
            let om = connection_coefficients(&metric_jet(g, t, x)?);
            let b = w.basis_jets(t, x);
            for (a, l) in loc.iter_mut().enumerate() {
                let v = b.vector(a);
                *l += wt * (om[0] * v[0] + om[1] * v[1]);
            }
        }
        for i in 0..3 {
            let (e, _) = mesh.tri_edges[t][i];
            let [tp, tm] = mesh.edge_tris[e];
            let interior = tp.is_some() && tm.is_some();
            // Interior edges are handled once, from the plus side.
            if (interior && tp != Some(t)) || (!interior && exterior.is_none()) {
                continue;
            }
            let tau = mesh.edge_tangent(e);
            let nu = mesh.edge_normal(e);
            for (x, dl) in edge_points(mesh, t, i, quad_degree)? {
                let theta = edge_angle_jump(&side(tp, x)?, &side(tm, x)?, tau)?;
                let b = w.basis_jets(t, x);
                for (a, l) in loc.iter_mut().enumerate() {
                    let v = b.vector(a);
                    *l -= theta * dl * (v[0] * nu[0] + v[1] * nu[1]);
                }
            }
        }
        Ok(loc)
    })?;
    Ok(Functional { space: w.clone(), values })
}

/// `ω_h(g)`: Euclidean L² lifting of the connection functional.
pub fn lift_connection(
    g: &DofVector,
    w: &Arc<FeSpace>,
    exterior: Option<&dyn TensorField>,
    quad_degree: usize,
) -> Result<DofVector, LiftError> {
    let f = assemble_connection_rhs(g, w, exterior, quad_degree)?;
    Ok(MassSolver::new(w.clone(), None, None, quad_degree)?.solve(&f))
}

/// Which of the two equivalent element-wise formulas to use for the
/// covariant curl functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurlForm {
    /// Derivatives on `σ`; boundary term in the normal trace of `w`.
    Sigma,
    /// Derivatives on `w`; boundary term in `σ_ττ`.
    Test,
}

fn curl_boundary_density(g: &SymJet, s: &SymJet, tau: [f64; 2], form: CurlForm, w: [f64; 2]) -> f64 {
    let nu = [-tau[1], tau[0]];
    let gtt = bilinear(&g.v, tau, tau);
    let sd = det(&g.v).sqrt();
    match form {
        CurlForm::Sigma => {
            let q = (gtt * bilinear(&s.v, nu, tau) - bilinear(&g.v, nu, tau) * bilinear(&s.v, tau, tau)) / (gtt * sd);
            -q * (w[0] * nu[0] + w[1] * nu[1])
        }
        CurlForm::Test => {
            let gt = matvec(&g.v, tau);
            bilinear(&s.v, tau, tau) * (gt[0] * w[0] + gt[1] * w[1]) / (gtt * sd)
        }
    }
}

// Element density of the curl functional in form `Test` for a vector field
// `w` with gradient `dw[k][i] = ∂_k w^i`.
fn curl_test_density(g: &SymJet, s: &SymJet, w: [f64; 2], dw: [[f64; 2]; 2]) -> f64 {
    let c2 = geom::christoffel_second(g);
    let sd = det(&g.v).sqrt();
    let trace_gamma = |j: usize| c2[0][0][j] + c2[1][1][j];
    let mut acc = 0.0;
    for m in 0..2 {
        for k in 0..2 {
            let mut r = 0.0;
            for i in 0..2 {
                r += EPS[k][i] * dw[i][m];
            }
            for j in 0..2 {
                let mut gw = 0.0;
                for i in 0..2 {
                    gw += c2[m][j][i] * w[i];
                }
                r -= EPS[k][j] * (trace_gamma(j) * w[m] - gw);
            }
            acc += s.v[m][k] * r;
        }
    }
    acc / sd
}

/// Test function values on a vector space, or `rot u` on a Lagrange space.
fn test_vectors(space: &FeSpace, t: usize, x: Point2) -> Vec<([f64; 2], [[f64; 2]; 2])> {
    let b = space.basis_jets(t, x);
    (0..b.len())
        .map(|a| {
            if space.kind() == SpaceKind::Lagrange {
                let j = b.get(a, 0);
                // rot u = (∂_2 u, -∂_1 u)
                ([j[DY], -j[DX]], [[j[4], -j[3]], [j[5], -j[4]]])
            } else {
                let (j0, j1) = (b.get(a, 0), b.get(a, 1));
                ([j0[VAL], j1[VAL]], [[j0[DX], j1[DX]], [j0[DY], j1[DY]]])
            }
        })
        .collect()
}

fn curl_functional_values(
    g: &DofVector,
    sigma: &dyn ElementField,
    space: &Arc<FeSpace>,
    quad_degree: usize,
    form: CurlForm,
) -> Result<Vec<f64>, LiftError> {
    check_regge(g, "metric")?;
    check_same_mesh(&g.space, space)?;
    check_sigma(sigma, space)?;
    let mesh = space.mesh();
    let rule = triangle_rule(quad_degree)?;
    assemble(space, |t| {
        let n = space.dofs(t).len();
        let mut loc = vec![0.0; n];
        for (x, wt) in triangle_points(mesh, t, &rule) {
            let gj = metric_jet(g, t, x)?;
            let sj = sigma.sym_jet(t, x)?;
            let tv = test_vectors(space, t, x);
            match form {
                CurlForm::Sigma => {
                    let c = curl_g_sigma(&gj, &sj);
                    for (l, (w, _)) in loc.iter_mut().zip(&tv) {
                        *l += wt * (c[0] * w[0] + c[1] * w[1]);
                    }
                }
                CurlForm::Test => {
                    for (l, (w, dw)) in loc.iter_mut().zip(&tv) {
                        *l += wt * curl_test_density(&gj, &sj, *w, *dw);
                    }
                }
            }
        }
        for i in 0..3 {
            let tau = mesh.local_edge_tangent(t, i);
            for (x, dl) in edge_points(mesh, t, i, quad_degree)? {
                let gj = metric_jet(g, t, x)?;
                let sj = sigma.sym_jet(t, x)?;
                for (l, (w, _)) in loc.iter_mut().zip(test_vectors(space, t, x)) {
                    *l += dl * curl_boundary_density(&gj, &sj, tau, form, w);
                }
            }
        }
        Ok(loc)
    })
}

/// The covariant curl functional `<curl_g σ, Q_g w>` on a BDM or RT space.
pub fn assemble_curl_rhs(
    g: &DofVector,
    sigma: &dyn ElementField,
    w: &Arc<FeSpace>,
    quad_degree: usize,
    form: CurlForm,
) -> Result<Functional, LiftError> {
    if !matches!(w.kind(), SpaceKind::Bdm | SpaceKind::Rt) {
        return Err(LiftError::Mismatch("curl test space must be bdm or rt".into()));
    }
    let values = curl_functional_values(g, sigma, w, quad_degree, form)?;
    Ok(Functional { space: w.clone(), values })
}

/// `curl_{g,h} σ`: Euclidean L² lifting of the covariant curl functional.
pub fn lift_curl(g: &DofVector, sigma: &dyn ElementField, w: &Arc<FeSpace>, quad_degree: usize) -> Result<DofVector, LiftError> {
    let f = assemble_curl_rhs(g, sigma, w, quad_degree, CurlForm::Sigma)?;
    Ok(MassSolver::new(w.clone(), None, None, quad_degree)?.solve(&f))
}

/// How the incompatibility functional is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncPath {
    /// `<curl_g σ, rot_g u>` through the curl functional.
    Composed,
    /// Element, edge and vertex terms of the explicit formula.
    Direct,
}

/// The incompatibility functional `<inc_g σ, u>` on a Lagrange space.
pub fn assemble_inc_rhs(
    g: &DofVector,
    sigma: &dyn ElementField,
    v: &Arc<FeSpace>,
    quad_degree: usize,
    path: IncPath,
) -> Result<Functional, LiftError> {
    if v.kind() != SpaceKind::Lagrange {
        return Err(LiftError::Mismatch("inc test space must be lagrange".into()));
    }
    let values = match path {
        IncPath::Composed => curl_functional_values(g, sigma, v, quad_degree, CurlForm::Sigma)?,
        IncPath::Direct => inc_direct(g, sigma, v, quad_degree)?,
    };
    Ok(Functional { space: v.clone(), values })
}

fn inc_direct(g: &DofVector, sigma: &dyn ElementField, v: &Arc<FeSpace>, quad_degree: usize) -> Result<Vec<f64>, LiftError> {
    check_regge(g, "metric")?;
    check_same_mesh(&g.space, v)?;
    check_sigma(sigma, v)?;
    let mesh = v.mesh();
    let rule = triangle_rule(quad_degree)?;
    assemble(v, |t| {
        let n = v.dofs(t).len();
        let mut loc = vec![0.0; n];
        for (x, wt) in triangle_points(mesh, t, &rule) {
            let gj = metric_jet(g, t, x)?;
            let sj = sigma.sym_jet(t, x)?;
            let f = wt * inc_g_sigma(&gj, &sj) * det(&gj.v).sqrt();
            let b = v.basis_jets(t, x);
            for (a, l) in loc.iter_mut().enumerate() {
                *l += f * b.get(a, 0)[VAL];
            }
        }
        for i in 0..3 {
            let tau = mesh.local_edge_tangent(t, i);
            for (x, dl) in edge_points(mesh, t, i, quad_degree)? {
                let gj = metric_jet(g, t, x)?;
                let sj = sigma.sym_jet(t, x)?;
                let c = curl_g_sigma(&gj, &sj);
                let (_, ds) = normal_tangent_with_derivative(&gj, &sj, tau);
                let f = dl * (c[0] * tau[0] + c[1] * tau[1] + ds);
                let b = v.basis_jets(t, x);
                for (a, l) in loc.iter_mut().enumerate() {
                    *l -= f * b.get(a, 0)[VAL];
                }
            }
        }
        let p = mesh.tri_points(t);
        for (j, l) in loc.iter_mut().take(3).enumerate() {
            let gv = metric_jet(g, t, p[j])?.v;
            let sv = sigma.sym_jet(t, p[j])?.v;
            let tin = mesh.local_edge_tangent(t, (j + 1) % 3);
            let tout = mesh.local_edge_tangent(t, (j + 2) % 3);
            *l -= normal_tangent(&gv, &sv, tout) - normal_tangent(&gv, &sv, tin);
        }
        Ok(loc)
    })
}

/// `inc_{g,h} σ`: Euclidean L² lifting of the incompatibility functional.
pub fn lift_inc(
    g: &DofVector,
    sigma: &dyn ElementField,
    v: &Arc<FeSpace>,
    quad_degree: usize,
    path: IncPath,
) -> Result<DofVector, LiftError> {
    let f = assemble_inc_rhs(g, sigma, v, quad_degree, path)?;
    Ok(MassSolver::new(v.clone(), None, None, quad_degree)?.solve(&f))
}

/// Checks `<K_g, u> = ½ ∫_0^1 b_h(G(t), g - δ, u) dt` with
/// `G(t) = δ + t (g - δ)` and `b_h(G, σ, u) = -<inc_G σ, u>`, integrating
/// in `t` with `t_points` Gauss–Legendre nodes. Returns the largest
/// mismatch over the unconstrained dofs of `v`, whose essential tags
/// should cover the whole boundary.
pub fn verify_integral_representation(
    g: &DofVector,
    v: &Arc<FeSpace>,
    t_points: usize,
    quad_degree: usize,
) -> Result<f64, LiftError> {
    check_regge(g, "metric")?;
    let mesh = v.mesh();
    let lhs = assemble_curvature_rhs(g, v, &BoundaryData::clamped(mesh), quad_degree)?;
    let space = g.space.clone();
    let delta = space.interpolate(2, |_| Ok([1.0, 0.0, 1.0]))?;
    let sigma: Vec<f64> = g.coeffs.iter().zip(&delta).map(|(a, b)| a - b).collect();
    let sigma = DofVector::new(space.clone(), sigma)?;
    let rule = edge_rule(2 * t_points - 1)?;
    let mut rhs = vec![0.0; v.ndof()];
    for (t, wt) in rule.iter() {
        let gt: Vec<f64> = delta.iter().zip(&sigma.coeffs).map(|(d, s)| d + t * s).collect();
        let gt = DofVector::new(space.clone(), gt)?;
        let f = assemble_inc_rhs(&gt, &sigma, v, quad_degree, IncPath::Direct).map_err(|e| match e {
            LiftError::NotSpd { .. } => LiftError::PathNotSpd { t },
            other => other,
        })?;
        for (r, fv) in rhs.iter_mut().zip(&f.values) {
            *r -= 0.5 * wt * fv;
        }
    }
    Ok(lhs
        .values
        .iter()
        .zip(&rhs)
        .zip(v.essential())
        .filter(|(_, &e)| !e)
        .fold(0.0, |m, ((a, b), _)| m.max((a - b).abs())))
}

/// Legacy ASCII VTK of a field, sampled on a uniform `refine`-fold
/// subdivision of every triangle. Vector fields are written as vectors,
/// Regge fields as their three independent components.
pub fn to_vtk(field: &DofVector, name: &str, refine: usize) -> String {
    use std::fmt::Write;
    let space = &field.space;
    let mesh = space.mesh();
    let r = refine.max(1);
    let mut pts = Vec::new();
    let mut cells = Vec::new();
    let mut data = Vec::new();
    for t in 0..mesh.n_triangles() {
        let base = pts.len();
        let mut idx = BTreeMap::new();
        for j in 0..=r {
            for i in 0..=r - j {
                let rp = [i as f64 / r as f64, j as f64 / r as f64];
                let x = mesh.map_point(t, rp);
                idx.insert((i, j), base + idx.len());
                pts.push(x);
                data.push(field.jets(t, x).iter().map(|c| c[VAL]).collect::<Vec<f64>>());
            }
        }
        for j in 0..r {
            for i in 0..r - j {
                cells.push([idx[&(i, j)], idx[&(i + 1, j)], idx[&(i, j + 1)]]);
                if i + j + 1 < r {
                    cells.push([idx[&(i + 1, j)], idx[&(i + 1, j + 1)], idx[&(i, j + 1)]]);
                }
            }
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", pts.len());
    for p in &pts {
        let _ = writeln!(s, "{:.17e} {:.17e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", cells.len(), 4 * cells.len());
    for c in &cells {
        let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in &cells {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {}", pts.len());
    match space.ncomp() {
        1 => {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for d in &data {
                let _ = writeln!(s, "{:.17e}", d[0]);
            }
        }
        2 => {
            let _ = writeln!(s, "VECTORS {name} double");
            for d in &data {
                let _ = writeln!(s, "{:.17e} {:.17e} 0", d[0], d[1]);
            }
        }
        _ => {
            for (c, suffix) in ["11", "12", "22"].iter().enumerate() {
                let _ = writeln!(s, "SCALARS {name}_{suffix} double 1\nLOOKUP_TABLE default");
                for d in &data {
                    let _ = writeln!(s, "{:.17e}", d[c]);
                }
            }
        }
    }
    s
}

/// Regge interpolant of an analytic field on `space`, with SPD checking
/// for metrics.
pub fn interpolate_metric(
    gex: &AnalyticMetric,
    space: &Arc<FeSpace>,
    quad_degree: usize,
) -> Result<DofVector, LiftError> {
    gex.check_spd(space.mesh(), quad_degree)?;
    Ok(crate::spaces::regge_interpolate(gex as &dyn TensorField, space, quad_degree)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::AnalyticTensor;

    fn regge(mesh: &Arc<TriMesh>, k: usize) -> Arc<FeSpace> {
        Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Regge, k, &[]).unwrap())
    }

    #[test]
    fn flat_metric_gives_zero_functionals() {
        let mesh = Arc::new(TriMesh::unit_square(3).perturb(0.25, 5));
        let r = regge(&mesh, 1);
        let delta = AnalyticTensor::parse("1", "0", "1").unwrap();
        let g = crate::spaces::regge_interpolate(&delta, &r, 4).unwrap();
        let v = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Lagrange, 2, &[]).unwrap());
        let f = assemble_curvature_rhs(&g, &v, &BoundaryData::natural(&mesh), 8).unwrap();
        assert!(f.values.iter().all(|x| x.abs() < 1e-12), "{:?}", f.values);
        let w = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Bdm, 1, &[]).unwrap());
        let c = assemble_connection_rhs(&g, &w, None, 8).unwrap();
        assert!(c.values.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn curl_forms_agree() {
        let mesh = Arc::new(TriMesh::unit_square(2).perturb(0.2, 9));
        let r = regge(&mesh, 2);
        let gm = AnalyticTensor::parse("2 + x*y", "0.3*x - 0.1*y^2", "1.5 + y").unwrap();
        let sm = AnalyticTensor::parse("sin(x+2*y)", "x*y^2", "cos(x) - y").unwrap();
        let g = crate::spaces::regge_interpolate(&gm, &r, 8).unwrap();
        let s = crate::spaces::regge_interpolate(&sm, &r, 8).unwrap();
        let w = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Rt, 2, &[]).unwrap());
        let a = assemble_curl_rhs(&g, &s, &w, 10, CurlForm::Sigma).unwrap();
        let b = assemble_curl_rhs(&g, &s, &w, 10, CurlForm::Test).unwrap();
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn inc_paths_agree() {
        let mesh = Arc::new(TriMesh::unit_square(2).perturb(0.2, 4));
        let r = regge(&mesh, 1);
        let gm = AnalyticTensor::parse("2 + x*y", "0.3*x - 0.1*y^2", "1.5 + y").unwrap();
        let sm = AnalyticTensor::parse("sin(x+2*y)", "x*y^2", "cos(x) - y").unwrap();
        let g = crate::spaces::regge_interpolate(&gm, &r, 8).unwrap();
        let s = crate::spaces::regge_interpolate(&sm, &r, 8).unwrap();
        let v = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Lagrange, 2, &[]).unwrap());
        let a = assemble_inc_rhs(&g, &s, &v, 10, IncPath::Composed).unwrap();
        let b = assemble_inc_rhs(&g, &s, &v, 10, IncPath::Direct).unwrap();
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9 * scale, "{x} vs {y}");
        }
    }
}
