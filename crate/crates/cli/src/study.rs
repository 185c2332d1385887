//! Convergence studies over a sequence of perturbed meshes.

use std::sync::Arc;

use regge_core::geom::{connection_coefficients, gauss_curvature};
use regge_core::lift::{
    default_quad_degree, interpolate_metric, lift_connection, lift_curl, lift_curvature, lift_inc, to_vtk,
    BoundaryData, Difference, IncPath, LiftError, Smooth,
};
use regge_core::mesh::{mesh_sequence, TriMesh};
use regge_core::norms::{eoc, error_quad_degree, hminus1_error, l2_error, ConvergenceRecord};
use regge_core::spaces::{regge_interpolate, AnalyticMetric, DofVector, FeSpace, SpaceKind, TensorField};

use crate::config::StudyConfig;
use crate::CliError;

/// One CSV worth of results.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub records: Vec<ConvergenceRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct StudyOutput {
    pub tables: Vec<Table>,
    /// `(file stem, VTK text)` of the finest-level fields, when requested.
    pub vtk: Vec<(String, String)>,
}

struct Level {
    mesh: Arc<TriMesh>,
    n: usize,
    h: f64,
}

fn levels(cfg: &StudyConfig) -> Vec<Level> {
    let m = &cfg.mesh;
    let [lx, ly] = cfg.domain.extent;
    mesh_sequence(cfg.rect(), m.n0, m.levels, m.perturb_amplitude, m.seed)
        .into_iter()
        .enumerate()
        .map(|(l, mesh)| {
            let n = m.n0 << l;
            // Nominal size of the unperturbed mesh, so rates are not skewed
            // by the random perturbation.
            Level { mesh: Arc::new(mesh), n, h: lx.hypot(ly) / n as f64 }
        })
        .collect()
}

fn space(mesh: &Arc<TriMesh>, kind: SpaceKind, k: usize, tags: &[String]) -> Result<Arc<FeSpace>, LiftError> {
    Ok(Arc::new(FeSpace::new(mesh.clone(), kind, k, tags)?))
}

fn quad(cfg: &StudyConfig, k: usize) -> usize {
    cfg.quad_degree.unwrap_or_else(|| default_quad_degree(k))
}

fn metric(cfg: &StudyConfig, mesh: &Arc<TriMesh>, gex: &AnalyticMetric, k: usize) -> Result<DofVector, LiftError> {
    let regge = space(mesh, SpaceKind::Regge, k, &[])?;
    interpolate_metric(gex, &regge, quad(cfg, k).max(error_quad_degree(k)))
}

/// Runs `body` on every level and collects the records of one table.
fn table<F>(cfg: &StudyConfig, name: String, mut body: F) -> Result<(Table, Option<DofVector>), CliError>
where
    F: FnMut(&Level) -> Result<(usize, Vec<(String, f64)>, DofVector), LiftError>,
{
    let mut records = Vec::new();
    let mut last = None;
    for (l, level) in levels(cfg).iter().enumerate() {
        let (ndof, errors, field) = body(level)?;
        eprintln!(
            "{name}: level {l}, n = {}, ndof = {ndof}, {}",
            level.n,
            errors.iter().map(|(k, v)| format!("{k} = {v:.3e}")).collect::<Vec<_>>().join(", ")
        );
        records.push(ConvergenceRecord { level: l, n: level.n, h: level.h, ndof, errors, eoc: Vec::new() });
        last = Some(field);
    }
    eoc(&mut records);
    Ok((Table { name, records }, last))
}

fn finish(cfg: &StudyConfig, out: &mut StudyOutput, (t, field): (Table, Option<DofVector>), label: &str) {
    if cfg.output.vtk {
        if let Some(f) = field {
            let refine = f.space.degree() + 1;
            out.vtk.push((t.name.clone(), to_vtk(&f, label, refine)));
        }
    }
    out.tables.push(t);
}

fn prefix(cfg: &StudyConfig, default: &str) -> String {
    cfg.output.prefix.clone().unwrap_or_else(|| default.to_string())
}

/// Error of the canonical Regge interpolant of the exact metric.
pub fn interpolate(cfg: &StudyConfig) -> Result<StudyOutput, CliError> {
    let gex = cfg.analytic_metric()?;
    let mut out = StudyOutput::default();
    for &k in &cfg.degrees {
        let eqd = error_quad_degree(k);
        let t = table(cfg, format!("{}_k{k}", prefix(cfg, "interpolate")), |lv| {
            let g = metric(cfg, &lv.mesh, &gex, k)?;
            let l2 = l2_error(&g, eqd, |x| {
                let v = gex.value(x)?;
                Ok([v[0][0], v[0][1], v[1][1]])
            })?;
            Ok((g.space.ndof(), vec![("l2".into(), l2)], g))
        })?;
        finish(cfg, &mut out, t, "metric");
    }
    Ok(out)
}

/// Lifted Gauss curvature `K_h(Π_R gex)` against `K(gex)`.
pub fn curvature(cfg: &StudyConfig) -> Result<StudyOutput, CliError> {
    cfg.require_partition()?;
    let gex = Arc::new(cfg.analytic_metric()?);
    let (dirichlet, neumann) = cfg.boundary_exprs()?;
    let bd = BoundaryData {
        dirichlet,
        neumann,
        corner_angles: cfg.boundary.corner_angles.iter().map(|c| (c.point, c.angle)).collect(),
        exact_metric: Some(gex.clone()),
    };
    let exact = |x| -> Result<f64, LiftError> { Ok(gauss_curvature(&gex.jet(x)?)) };
    let mut out = StudyOutput::default();
    for &k in &cfg.degrees {
        let (qd, eqd) = (quad(cfg, k), error_quad_degree(k));
        let t = table(cfg, format!("{}_k{k}", prefix(cfg, "curvature")), |lv| {
            let g = metric(cfg, &lv.mesh, &gex, k)?;
            let v = space(&lv.mesh, SpaceKind::Lagrange, k + 1, &bd.dirichlet_tags())?;
            let kh = lift_curvature(&g, &v, &bd, qd)?;
            let l2 = l2_error(&kh, eqd, |x| Ok([gauss_curvature(&gex.jet(x)?), 0.0, 0.0]))?;
            let hm1 = hminus1_error(&lv.mesh, k, eqd, |t, x| Ok(kh.scalar(t, x) - exact(x)?))?;
            Ok((v.ndof(), vec![("l2".into(), l2), ("hminus1".into(), hm1)], kh))
        })?;
        finish(cfg, &mut out, t, "curvature");
    }
    Ok(out)
}

/// Lifted connection 1-form against the coefficients of the exact one.
pub fn connection(cfg: &StudyConfig) -> Result<StudyOutput, CliError> {
    let gex = cfg.analytic_metric()?;
    let kind = cfg.space.unwrap_or(SpaceKind::Bdm);
    let tags = cfg.essential();
    let mut out = StudyOutput::default();
    for &k in &cfg.degrees {
        let (qd, eqd) = (quad(cfg, k), error_quad_degree(k));
        let t = table(cfg, format!("{}_{kind}{k}", prefix(cfg, "connection")), |lv| {
            let g = metric(cfg, &lv.mesh, &gex, k)?;
            let w = space(&lv.mesh, kind, k, &tags)?;
            let om = lift_connection(&g, &w, Some(&gex), qd)?;
            let l2 = l2_error(&om, eqd, |x| {
                let c = connection_coefficients(&gex.jet(x)?);
                Ok([c[0], c[1], 0.0])
            })?;
            Ok((w.ndof(), vec![("l2".into(), l2)], om))
        })?;
        finish(cfg, &mut out, t, "connection");
    }
    Ok(out)
}

/// `‖curl_{g,h}(σ - Π_R σ)‖` for a smooth `σ` and `g = Π_R gex`.
pub fn curl(cfg: &StudyConfig) -> Result<StudyOutput, CliError> {
    let gex = cfg.analytic_metric()?;
    let sigma = cfg.sigma_field()?;
    let tags = cfg.essential();
    let mut out = StudyOutput::default();
    for &k in &cfg.degrees {
        let (qd, eqd) = (quad(cfg, k), error_quad_degree(k));
        let t = table(cfg, format!("{}_k{k}", prefix(cfg, "curl")), |lv| {
            let g = metric(cfg, &lv.mesh, &gex, k)?;
            let interp = regge_interpolate(&sigma, &g.space, eqd)?;
            let smooth = Smooth(&sigma);
            let w = space(&lv.mesh, SpaceKind::Bdm, k, &tags)?;
            let c = lift_curl(&g, &Difference(&smooth, &interp), &w, qd)?;
            let l2 = l2_error(&c, eqd, |_| Ok([0.0; 3]))?;
            Ok((w.ndof(), vec![("l2".into(), l2)], c))
        })?;
        finish(cfg, &mut out, t, "curl");
    }
    Ok(out)
}

/// `‖inc_{g,h}(σ - Π_R σ)‖` for a smooth `σ` and `g = Π_R gex`.
pub fn inc(cfg: &StudyConfig) -> Result<StudyOutput, CliError> {
    let gex = cfg.analytic_metric()?;
    let sigma = cfg.sigma_field()?;
    let tags = cfg.essential();
    let mut out = StudyOutput::default();
    for &k in &cfg.degrees {
        let (qd, eqd) = (quad(cfg, k), error_quad_degree(k));
        let t = table(cfg, format!("{}_k{k}", prefix(cfg, "inc")), |lv| {
            let g = metric(cfg, &lv.mesh, &gex, k)?;
            let interp = regge_interpolate(&sigma, &g.space, eqd)?;
            let smooth = Smooth(&sigma);
            let v = space(&lv.mesh, SpaceKind::Lagrange, k + 1, &tags)?;
            let u = lift_inc(&g, &Difference(&smooth, &interp), &v, qd, IncPath::Composed)?;
            let l2 = l2_error(&u, eqd, |_| Ok([0.0; 3]))?;
            Ok((v.ndof(), vec![("l2".into(), l2)], u))
        })?;
        finish(cfg, &mut out, t, "inc");
    }
    Ok(out)
}
