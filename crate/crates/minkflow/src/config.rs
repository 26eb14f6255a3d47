//! File-backed run configuration: TOML parsing, validation, and
//! construction of the library objects a run needs. Every constraint is
//! checked here before any compute starts; errors carry the offending
//! line when one can be attributed.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::body::{eval_polynomial, make_shape, PolyTerm, ShapeKind, SupportField};
use crate::flow::FlowConfig;
use crate::functionals::FlowParams;
use crate::minkowski::LpProblem;
use crate::sphere::SphereGrid;
use crate::verify::VerifyTolerances;

/// A configuration problem, optionally anchored to a config line.
#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {}: {}", line, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            line: None,
        }
    }

    fn at_key(message: impl Into<String>, text: &str, key: &str) -> Self {
        Self {
            message: message.into(),
            line: key_line(text, key),
        }
    }
}

/// First line (1-based) whose content starts with `key` followed by '='.
fn key_line(text: &str, key: &str) -> Option<usize> {
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix(key) {
            let rest = rest.trim_start();
            if rest.starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Mode {
    #[serde(rename = "flow")]
    Flow,
    #[serde(rename = "lp-solve")]
    LpSolve,
    #[serde(rename = "verify")]
    Verify,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: GridSection,
    pub flow: Option<FlowSection>,
    pub lp: Option<LpSection>,
    #[serde(default)]
    pub speed: SpeedSection,
    #[serde(default)]
    pub initial: ShapeSection,
    #[serde(default)]
    pub stepping: SteppingSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub n_theta: usize,
    #[serde(default)]
    pub n_phi: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub alpha: f64,
    pub beta: f64,
    /// Run the unnormalized companion flow instead.
    #[serde(default)]
    pub unnormalized: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpSection {
    pub p: f64,
    /// Optional body file to compare the solution against.
    pub reference_body: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSection {
    /// "constant" (default), "polynomial", or "samples".
    pub kind: Option<String>,
    pub value: Option<f64>,
    pub terms: Option<Vec<PolyTerm>>,
    pub path: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    /// "sphere" (default), "ellipsoid", "perturbed-sphere",
    /// "translated-sphere", or "random-even".
    pub kind: Option<String>,
    pub radius: Option<f64>,
    pub semi_axes: Option<[f64; 3]>,
    pub amplitude: Option<f64>,
    pub terms: Option<Vec<PolyTerm>>,
    pub offset: Option<[f64; 3]>,
    /// Load the initial body from a body file instead.
    pub path: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteppingSection {
    pub dt_init: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub cfl_safety: Option<f64>,
    pub max_steps: Option<usize>,
    pub renormalize_every: Option<usize>,
    pub symmetrize: Option<bool>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub residual: Option<f64>,
    pub j_rate: Option<f64>,
    pub convexity: Option<f64>,
    pub extinction_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Option<Vec<String>>,
    pub samples: Option<usize>,
    /// Uniform tolerance override for every check.
    pub tolerance: Option<f64>,
    pub af: Option<f64>,
    pub af_gradient: Option<f64>,
    pub blaschke_santalo: Option<f64>,
    pub polar: Option<f64>,
    pub dzp: Option<f64>,
    pub holder: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub seed: Option<u64>,
    pub export_mesh: Option<bool>,
}

/// Everything a command needs, fully validated.
#[derive(Debug)]
pub struct BuiltRun {
    pub mode: Mode,
    pub grid: Arc<SphereGrid>,
    pub flow_config: Option<FlowConfig>,
    pub unnormalized: bool,
    pub lp_problem: Option<LpProblem>,
    pub lp_reference: Option<SupportField>,
    pub verify_checks: Vec<String>,
    pub verify_samples: usize,
    pub verify_tols: VerifyTolerances,
    pub out_dir: std::path::PathBuf,
    pub seed: u64,
    pub export_mesh: bool,
    pub alpha: f64,
    pub beta: f64,
}

pub fn load(path: &Path) -> Result<(RunConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count());
        ConfigError {
            message: e.message().to_string(),
            line,
        }
    })?;
    Ok((cfg, text))
}

fn build_speed(
    section: &SpeedSection,
    grid: &Arc<SphereGrid>,
    text: &str,
    base_dir: &Path,
) -> Result<Vec<f64>, ConfigError> {
    let kind = section.kind.as_deref().unwrap_or("constant");
    match kind {
        "constant" => {
            let v = section.value.unwrap_or(1.0);
            if !(v > 0.0) {
                return Err(ConfigError::at_key(
                    format!("speed value must be positive, got {v}"),
                    text,
                    "value",
                ));
            }
            Ok(vec![v; grid.node_count()])
        }
        "polynomial" => {
            let terms = section.terms.as_ref().ok_or_else(|| {
                ConfigError::at_key("speed kind \"polynomial\" needs terms", text, "kind")
            })?;
            for t in terms {
                if t.degree() > 4 {
                    return Err(ConfigError::at_key(
                        format!("speed terms are limited to degree 4, got {}", t.degree()),
                        text,
                        "terms",
                    ));
                }
            }
            Ok(eval_polynomial(grid, terms))
        }
        "samples" => {
            let rel = section.path.as_ref().ok_or_else(|| {
                ConfigError::at_key("speed kind \"samples\" needs path", text, "kind")
            })?;
            let full = base_dir.join(rel);
            let samples = crate::io::read_samples(&full, grid)
                .map_err(|e| ConfigError::new(format!("speed samples: {e}")))?;
            Ok(samples)
        }
        other => Err(ConfigError::at_key(
            format!("unknown speed kind {other:?}"),
            text,
            "kind",
        )),
    }
}

fn build_shape(
    section: &ShapeSection,
    grid: &Arc<SphereGrid>,
    eps_convex: f64,
    seed: u64,
    text: &str,
    base_dir: &Path,
) -> Result<SupportField, ConfigError> {
    if let Some(rel) = &section.path {
        let full = base_dir.join(rel);
        return crate::io::read_body(&full)
            .map_err(|e| ConfigError::new(format!("initial body: {e}")))
            .and_then(|b| {
                if b.grid().node_count() != grid.node_count() || b.grid().dim() != grid.dim() {
                    Err(ConfigError::new(
                        "initial body file does not match the configured grid",
                    ))
                } else {
                    SupportField::new(grid.clone(), b.values().to_vec(), b.is_symmetric())
                        .map_err(|e| ConfigError::new(format!("initial body: {e}")))
                }
            });
    }
    let kind = section.kind.as_deref().unwrap_or("sphere");
    let shape = match kind {
        "sphere" => ShapeKind::Sphere {
            radius: section.radius.unwrap_or(1.0),
        },
        "ellipsoid" => ShapeKind::Ellipsoid {
            semi_axes: section.semi_axes.ok_or_else(|| {
                ConfigError::at_key("ellipsoid needs semi_axes", text, "kind")
            })?,
        },
        "perturbed-sphere" => ShapeKind::Perturbed {
            base: Box::new(ShapeKind::Sphere {
                radius: section.radius.unwrap_or(1.0),
            }),
            eps: section.amplitude.unwrap_or(0.1),
            modes: section
                .terms
                .clone()
                .ok_or_else(|| ConfigError::at_key("perturbed-sphere needs terms", text, "kind"))?,
        },
        "translated-sphere" => ShapeKind::Translate {
            base: Box::new(ShapeKind::Sphere {
                radius: section.radius.unwrap_or(1.0),
            }),
            offset: section.offset.ok_or_else(|| {
                ConfigError::at_key("translated-sphere needs offset", text, "kind")
            })?,
        },
        "random-even" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            return crate::verify::random_even_body(
                grid,
                &mut rng,
                section.amplitude.unwrap_or(0.1),
            )
            .map_err(|e| ConfigError::new(format!("random-even initial shape: {e}")));
        }
        other => {
            return Err(ConfigError::at_key(
                format!("unknown initial shape kind {other:?}"),
                text,
                "kind",
            ))
        }
    };
    make_shape(&shape, grid, eps_convex)
        .map_err(|e| ConfigError::new(format!("initial shape: {e}")))
}

fn apply_stepping(config: &mut FlowConfig, s: &SteppingSection, t: &ToleranceSection) {
    if let Some(v) = s.dt_init {
        config.dt_init = v;
    }
    if let Some(v) = s.dt_min {
        config.dt_min = v;
    }
    if let Some(v) = s.dt_max {
        config.dt_max = v;
    }
    if let Some(v) = s.cfl_safety {
        config.cfl_safety = v;
    }
    if let Some(v) = s.max_steps {
        config.max_steps = v;
    }
    if let Some(v) = s.renormalize_every {
        config.renormalize_every = v;
    }
    if let Some(v) = s.symmetrize {
        config.symmetrize = v;
    }
    if let Some(v) = s.snapshot_every {
        config.snapshot_every = v;
    }
    if let Some(v) = t.residual {
        config.tol_residual = v;
    }
    if let Some(v) = t.j_rate {
        config.tol_j_rate = v;
    }
    if let Some(v) = t.convexity {
        config.convexity_eps = v;
    }
    if let Some(v) = t.extinction_floor {
        config.extinction_floor = v;
    }
}

/// Validate the parsed config and build the run objects.
pub fn build(
    cfg: &RunConfig,
    text: &str,
    base_dir: &Path,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<BuiltRun, ConfigError> {
    let g = &cfg.grid;
    let grid = SphereGrid::build(g.n, g.n_theta, g.n_phi)
        .map_err(|e| ConfigError::at_key(e.to_string(), text, "n_theta"))?;

    let seed = seed_override.or(cfg.output.seed).unwrap_or(0);
    let out_dir = out_override
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.output.dir.as_ref().map(std::path::PathBuf::from))
        .unwrap_or_else(|| base_dir.join("out"));
    let eps_convex = cfg.tolerances.convexity.unwrap_or(crate::body::DEFAULT_CONVEXITY_EPS);

    let mut built = BuiltRun {
        mode: cfg.mode,
        grid: grid.clone(),
        flow_config: None,
        unnormalized: false,
        lp_problem: None,
        lp_reference: None,
        verify_checks: cfg.verify.checks.clone().unwrap_or_default(),
        verify_samples: cfg.verify.samples.unwrap_or(20),
        verify_tols: VerifyTolerances::default(),
        out_dir,
        seed,
        export_mesh: cfg.output.export_mesh.unwrap_or(false),
        alpha: f64::NAN,
        beta: f64::NAN,
    };

    match cfg.mode {
        Mode::Flow => {
            let fs = cfg
                .flow
                .as_ref()
                .ok_or_else(|| ConfigError::new("mode \"flow\" needs a [flow] section"))?;
            if fs.alpha == 1.0 - fs.beta && !(fs.alpha == 0.0 && fs.beta == 1.0) {
                return Err(ConfigError::at_key(
                    format!(
                        "alpha = 1 - beta is excluded (alpha = {}, beta = {})",
                        fs.alpha, fs.beta
                    ),
                    text,
                    "alpha",
                ));
            }
            let f = build_speed(&cfg.speed, &grid, text, base_dir)?;
            let params = FlowParams::new(fs.alpha, fs.beta, f, &grid)
                .map_err(|e| ConfigError::at_key(e.to_string(), text, "alpha"))?;
            let initial = build_shape(&cfg.initial, &grid, eps_convex, seed, text, base_dir)?;
            let mut config = FlowConfig::new(params, initial);
            apply_stepping(&mut config, &cfg.stepping, &cfg.tolerances);
            config
                .validate()
                .map_err(|e| ConfigError::new(e.to_string()))?;
            built.alpha = fs.alpha;
            built.beta = fs.beta;
            built.unnormalized = fs.unnormalized;
            built.flow_config = Some(config);
        }
        Mode::LpSolve => {
            let ls = cfg
                .lp
                .as_ref()
                .ok_or_else(|| ConfigError::new("mode \"lp-solve\" needs an [lp] section"))?;
            let phi = build_speed(&cfg.speed, &grid, text, base_dir)?;
            let problem = LpProblem::new(ls.p, phi, grid.clone())
                .map_err(|e| ConfigError::at_key(e.to_string(), text, "p"))?;
            let initial = build_shape(&cfg.initial, &grid, eps_convex, seed, text, base_dir)?;
            let mut config = problem.flow_config(initial);
            apply_stepping(&mut config, &cfg.stepping, &cfg.tolerances);
            config
                .validate()
                .map_err(|e| ConfigError::new(e.to_string()))?;
            if let Some(rel) = &ls.reference_body {
                let body = crate::io::read_body(&base_dir.join(rel))
                    .map_err(|e| ConfigError::new(format!("reference body: {e}")))?;
                if body.grid().node_count() != grid.node_count() {
                    return Err(ConfigError::new(
                        "reference body does not match the configured grid",
                    ));
                }
                built.lp_reference = Some(body);
            }
            built.alpha = ls.p;
            built.beta = 1.0;
            built.flow_config = Some(config);
            built.lp_problem = Some(problem);
        }
        Mode::Verify => {
            let v = &cfg.verify;
            built.verify_tols = if let Some(tol) = v.tolerance {
                VerifyTolerances::uniform(tol)
            } else {
                let mut t = VerifyTolerances::default();
                if let Some(x) = v.af {
                    t.af = x;
                }
                if let Some(x) = v.af_gradient {
                    t.af_gradient = x;
                }
                if let Some(x) = v.blaschke_santalo {
                    t.blaschke_santalo = x;
                }
                if let Some(x) = v.polar {
                    t.polar = x;
                }
                if let Some(x) = v.dzp {
                    t.dzp = x;
                }
                if let Some(x) = v.holder {
                    t.holder = x;
                }
                t
            };
            for c in &built.verify_checks {
                if !crate::verify::CHECK_NAMES.contains(&c.as_str()) {
                    return Err(ConfigError::at_key(
                        format!(
                            "unknown check {c:?}; available: {}",
                            crate::verify::CHECK_NAMES.join(", ")
                        ),
                        text,
                        "checks",
                    ));
                }
            }
        }
    }
    Ok(built)
}
