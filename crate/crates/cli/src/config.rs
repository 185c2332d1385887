//! JSON study configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use regge_core::expr::Expr;
use regge_core::mesh::{Point2, Rect};
use regge_core::spaces::{AnalyticMetric, AnalyticTensor, SpaceKind};

use crate::CliError;

/// Exact metric, as a graph height function or by entries.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum MetricSpec {
    Graph(String),
    Entries([String; 3]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub origin: Point2,
    pub extent: Point2,
}

impl Default for DomainSpec {
    fn default() -> DomainSpec {
        DomainSpec { origin: [0.0, 0.0], extent: [1.0, 1.0] }
    }
}

fn default_amplitude() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub n0: usize,
    pub levels: usize,
    #[serde(default = "default_amplitude")]
    pub perturb_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerSpec {
    pub point: Point2,
    /// Interior angle of the exact metric, in radians.
    pub angle: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// Tag to prescribed Gauss curvature.
    #[serde(default)]
    pub dirichlet: BTreeMap<String, String>,
    /// Tag to geodesic curvature of the boundary.
    #[serde(default)]
    pub neumann: BTreeMap<String, String>,
    #[serde(default)]
    pub corner_angles: Vec<CornerSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// File name prefix; defaults to the subcommand name.
    #[serde(default)]
    pub prefix: Option<String>,
    /// Also write the finest-level field as VTK.
    #[serde(default)]
    pub vtk: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub metric: MetricSpec,
    #[serde(default)]
    pub domain: DomainSpec,
    pub mesh: MeshSpec,
    pub degrees: Vec<usize>,
    #[serde(default)]
    pub boundary: BoundarySpec,
    /// Test space of the connection study.
    #[serde(default)]
    pub space: Option<SpaceKind>,
    /// Tags with essential boundary conditions on the connection and
    /// curl test spaces; all tags when absent.
    #[serde(default)]
    pub essential_tags: Option<Vec<String>>,
    /// Smooth tensor for the curl and inc studies.
    #[serde(default)]
    pub sigma: Option<[String; 3]>,
    #[serde(default)]
    pub quad_degree: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
}

const SIDES: [&str; 4] = ["bottom", "right", "top", "left"];

fn parse_expr(what: &str, s: &str) -> Result<Expr, CliError> {
    Expr::parse(s).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<StudyConfig, CliError> {
        let cfg: StudyConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<StudyConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        StudyConfig::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.mesh.n0 == 0 || self.mesh.levels == 0 {
            return Err(CliError::Config("mesh.n0 and mesh.levels must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.mesh.perturb_amplitude) {
            return Err(CliError::Config("mesh.perturb_amplitude must lie in [0, 0.5)".into()));
        }
        if self.domain.extent.iter().any(|&e| !(e > 0.0)) {
            return Err(CliError::Config("domain.extent must be positive".into()));
        }
        if self.degrees.is_empty() {
            return Err(CliError::Config("degrees must not be empty".into()));
        }
        let b = &self.boundary;
        for tag in b.dirichlet.keys().chain(b.neumann.keys()).chain(self.essential_tags.iter().flatten()) {
            if !SIDES.contains(&tag.as_str()) {
                return Err(CliError::Config(format!("unknown boundary tag {tag:?}; expected one of {SIDES:?}")));
            }
        }
        if let Some(t) = b.dirichlet.keys().find(|t| b.neumann.contains_key(*t)) {
            return Err(CliError::Config(format!("boundary tag {t:?} is both dirichlet and neumann")));
        }
        for (tag, e) in b.dirichlet.iter().chain(&b.neumann) {
            parse_expr(&format!("boundary expression for {tag:?}"), e)?;
        }
        if let Some(s) = &self.space {
            if !matches!(s, SpaceKind::Bdm | SpaceKind::Rt) {
                return Err(CliError::Config(format!("space must be bdm or rt, got {s}")));
            }
        }
        if let Some(s) = &self.sigma {
            for e in s {
                parse_expr("sigma", e)?;
            }
        }
        self.analytic_metric()?;
        Ok(())
    }

    /// Boundary data must cover every side when the study needs it.
    pub fn require_partition(&self) -> Result<(), CliError> {
        let b = &self.boundary;
        for side in SIDES {
            if !b.dirichlet.contains_key(side) && !b.neumann.contains_key(side) {
                return Err(CliError::Config(format!(
                    "boundary tag {side:?} has neither a dirichlet nor a neumann expression"
                )));
            }
        }
        Ok(())
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.domain.origin, self.domain.extent)
    }

    pub fn analytic_metric(&self) -> Result<AnalyticMetric, CliError> {
        Ok(match &self.metric {
            MetricSpec::Graph(f) => AnalyticMetric::graph(&parse_expr("metric.graph", f)?),
            MetricSpec::Entries([a, b, c]) => AnalyticMetric::entries(
                &parse_expr("metric.entries[0]", a)?,
                &parse_expr("metric.entries[1]", b)?,
                &parse_expr("metric.entries[2]", c)?,
            ),
        })
    }

    pub fn sigma_field(&self) -> Result<AnalyticTensor, CliError> {
        let [a, b, c] = self.sigma.as_ref().ok_or_else(|| CliError::Config("this study needs sigma".into()))?;
        Ok(AnalyticTensor::new(&parse_expr("sigma", a)?, &parse_expr("sigma", b)?, &parse_expr("sigma", c)?))
    }

    pub fn essential(&self) -> Vec<String> {
        match &self.essential_tags {
            Some(t) => t.clone(),
            None => SIDES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn boundary_exprs(&self) -> Result<(BTreeMap<String, Expr>, BTreeMap<String, Expr>), CliError> {
        let conv = |m: &BTreeMap<String, String>| -> Result<BTreeMap<String, Expr>, CliError> {
            m.iter().map(|(t, e)| Ok((t.clone(), parse_expr(t, e)?))).collect()
        };
        Ok((conv(&self.boundary.dirichlet)?, conv(&self.boundary.neumann)?))
    }
}
