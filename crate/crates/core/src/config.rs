//! Run configuration: a flat key = value file with section headers, with
//! every key overridable by a command-line flag and the seed overridable by
//! the FBMS_SEED environment variable.

use crate::fbms::SolverConfig;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, String),
    #[error("bad config line {0}: {1:?}")]
    BadLine(usize, String),
    #[error("unknown key {key:?} in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("bad value for {0}: {1:?}")]
    BadValue(&'static str, String),
    #[error("unknown flag {0:?}")]
    UnknownFlag(String),
    #[error("flag {0} needs a value")]
    MissingValue(String),
    #[error("resolution must be at least 50, got {0}")]
    ResolutionTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodySpec {
    Ball { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    PerturbedBall { epsilon: f64 },
}

impl BodySpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (kind, params) = text.split_once(':').unwrap_or((text, ""));
        let nums: Vec<f64> = params
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::BadValue("body", text.to_string()))?;
        match (kind, nums.as_slice()) {
            ("ball", []) => Ok(BodySpec::Ball { radius: 1.0 }),
            ("ball", [r]) => Ok(BodySpec::Ball { radius: *r }),
            ("ellipsoid", [a, b, c]) => Ok(BodySpec::Ellipsoid { a: *a, b: *b, c: *c }),
            ("perturbed-ball", []) => Ok(BodySpec::PerturbedBall { epsilon: 0.1 }),
            ("perturbed-ball", [e]) => Ok(BodySpec::PerturbedBall { epsilon: *e }),
            _ => Err(ConfigError::BadValue("body", text.to_string())),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            BodySpec::Ball { radius } => format!("ball:{radius}"),
            BodySpec::Ellipsoid { a, b, c } => format!("ellipsoid:{a},{b},{c}"),
            BodySpec::PerturbedBall { epsilon } => format!("perturbed-ball:{epsilon}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceSpec {
    EquatorialDisk,
    TiltedDisk { angle_deg: f64 },
    /// Orthogonal spherical cap; `height` is the boundary-circle plane
    /// height as a fraction of the ball radius, in (0, 1).
    SphericalCap { height: f64 },
    MeshFile { path: PathBuf },
}

impl SurfaceSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (kind, param) = text.split_once(':').unwrap_or((text, ""));
        match kind {
            "equatorial-disk" => Ok(SurfaceSpec::EquatorialDisk),
            "tilted-disk" => {
                let angle: f64 = param
                    .parse()
                    .map_err(|_| ConfigError::BadValue("surface", text.to_string()))?;
                Ok(SurfaceSpec::TiltedDisk { angle_deg: angle })
            }
            "spherical-cap" => {
                let height: f64 = param
                    .parse()
                    .map_err(|_| ConfigError::BadValue("surface", text.to_string()))?;
                if !(0.0..1.0).contains(&height) || height == 0.0 {
                    return Err(ConfigError::BadValue("surface", text.to_string()));
                }
                Ok(SurfaceSpec::SphericalCap { height })
            }
            "mesh" => Ok(SurfaceSpec::MeshFile {
                path: PathBuf::from(param),
            }),
            _ => Err(ConfigError::BadValue("surface", text.to_string())),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SurfaceSpec::EquatorialDisk => "equatorial-disk".into(),
            SurfaceSpec::TiltedDisk { angle_deg } => format!("tilted-disk:{angle_deg}"),
            SurfaceSpec::SphericalCap { height } => format!("spherical-cap:{height}"),
            SurfaceSpec::MeshFile { path } => format!("mesh:{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckKind {
    Theorem1,
    Theorem2,
    Corollary1,
    Corollary2,
    Corollary3,
}

impl CheckKind {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text.trim() {
            "theorem1" => Ok(CheckKind::Theorem1),
            "theorem2" => Ok(CheckKind::Theorem2),
            "corollary1" => Ok(CheckKind::Corollary1),
            "corollary2" => Ok(CheckKind::Corollary2),
            "corollary3" => Ok(CheckKind::Corollary3),
            other => Err(ConfigError::BadValue("check", other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Theorem1 => "theorem1",
            CheckKind::Theorem2 => "theorem2",
            CheckKind::Corollary1 => "corollary1",
            CheckKind::Corollary2 => "corollary2",
            CheckKind::Corollary3 => "corollary3",
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Self>, ConfigError> {
        let mut out: Vec<CheckKind> = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(CheckKind::parse)
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Everything one pipeline run needs; built from defaults, then the config
/// file, then FBMS_SEED, then command-line flags, in that order.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub body: BodySpec,
    pub surface: SurfaceSpec,
    /// Target vertex count of generated meshes.
    pub resolution: usize,
    /// Interior jiggle applied to generated meshes, absolute length.
    pub perturbation: f64,
    pub checks: Vec<CheckKind>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub solver: SolverConfig,
    /// When positive, run the refinement study over this many levels
    /// instead of a single pipeline pass.
    pub refine_levels: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            body: BodySpec::Ball { radius: 1.0 },
            surface: SurfaceSpec::EquatorialDisk,
            resolution: 10_000,
            perturbation: 1e-4,
            checks: vec![
                CheckKind::Theorem1,
                CheckKind::Corollary2,
                CheckKind::Corollary3,
            ],
            out_dir: PathBuf::from("out"),
            seed: 42,
            solver: SolverConfig {
                log_every: 100,
                ..SolverConfig::default()
            },
            refine_levels: 0,
        }
    }
}

impl RunConfig {
    pub fn instance_name(&self) -> String {
        format!(
            "{}-{}-n{}-seed{}",
            self.body.describe().replace(':', ""),
            self.surface.describe().replace(':', ""),
            self.resolution,
            self.seed
        )
    }

    pub fn load_file(&mut self, path: &PathBuf) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.clone(), e.to_string()))?;
        self.parse_text(&text)
    }

    pub fn parse_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::from("run");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine(lineno + 1, raw.to_string()));
            };
            let (key, value) = (key.trim(), value.trim());
            self.set(&section, key, value)?;
        }
        Ok(())
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &'static str| ConfigError::BadValue(what, value.to_string());
        match (section, key) {
            ("body", "kind") => {
                // keep parameters already set unless the kind changes shape
                self.body = match value {
                    "ball" => BodySpec::Ball { radius: 1.0 },
                    "ellipsoid" => BodySpec::Ellipsoid { a: 1.0, b: 1.0, c: 1.0 },
                    "perturbed-ball" => BodySpec::PerturbedBall { epsilon: 0.1 },
                    _ => return Err(bad("body.kind")),
                };
            }
            ("body", "radius") => {
                let r: f64 = value.parse().map_err(|_| bad("body.radius"))?;
                self.body = BodySpec::Ball { radius: r };
            }
            ("body", "semi_axes") => {
                let nums: Vec<f64> = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("body.semi_axes"))?;
                let [a, b, c] = nums.as_slice() else {
                    return Err(bad("body.semi_axes"));
                };
                self.body = BodySpec::Ellipsoid { a: *a, b: *b, c: *c };
            }
            ("body", "epsilon") => {
                let e: f64 = value.parse().map_err(|_| bad("body.epsilon"))?;
                self.body = BodySpec::PerturbedBall { epsilon: e };
            }
            ("surface", "kind") => {
                self.surface = SurfaceSpec::parse(value)?;
            }
            ("surface", "angle") => {
                let a: f64 = value.parse().map_err(|_| bad("surface.angle"))?;
                self.surface = SurfaceSpec::TiltedDisk { angle_deg: a };
            }
            ("surface", "height") => {
                let h: f64 = value.parse().map_err(|_| bad("surface.height"))?;
                self.surface = SurfaceSpec::SphericalCap { height: h };
            }
            ("surface", "file") => {
                self.surface = SurfaceSpec::MeshFile {
                    path: PathBuf::from(value),
                };
            }
            ("solver", "max_iterations") => {
                self.solver.max_iterations =
                    value.parse().map_err(|_| bad("solver.max_iterations"))?;
            }
            ("solver", "grad_tol") => {
                self.solver.grad_tol = value.parse().map_err(|_| bad("solver.grad_tol"))?;
            }
            ("solver", "volume_target") => {
                self.solver.volume_target =
                    Some(value.parse().map_err(|_| bad("solver.volume_target"))?);
            }
            ("solver", "log_every") => {
                self.solver.log_every = value.parse().map_err(|_| bad("solver.log_every"))?;
            }
            ("run", "resolution") => {
                self.resolution = value.parse().map_err(|_| bad("run.resolution"))?;
            }
            ("run", "perturbation") => {
                self.perturbation = value.parse().map_err(|_| bad("run.perturbation"))?;
            }
            ("run", "checks") => {
                self.checks = CheckKind::parse_list(value)?;
            }
            ("run", "out") => {
                self.out_dir = PathBuf::from(value);
            }
            ("run", "seed") => {
                self.seed = value.parse().map_err(|_| bad("run.seed"))?;
            }
            ("run", "refine_levels") => {
                self.refine_levels = value.parse().map_err(|_| bad("run.refine_levels"))?;
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    section: section.to_string(),
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// FBMS_SEED overrides the config-file seed; flags still win.
    pub fn apply_env(&mut self) {
        if let Ok(seed) = std::env::var("FBMS_SEED") {
            if let Ok(v) = seed.parse() {
                self.seed = v;
            }
        }
    }

    /// Flags in `--key value` or `--key=value` form.
    pub fn apply_flags(&mut self, args: &[String]) -> Result<(), ConfigError> {
        let mut it = args.iter().peekable();
        while let Some(arg) = it.next() {
            let (flag, inline) = match arg.split_once('=') {
                Some((f, v)) => (f.to_string(), Some(v.to_string())),
                None => (arg.clone(), None),
            };
            let mut value = || -> Result<String, ConfigError> {
                if let Some(v) = &inline {
                    return Ok(v.clone());
                }
                it.next()
                    .cloned()
                    .ok_or_else(|| ConfigError::MissingValue(flag.clone()))
            };
            match flag.as_str() {
                "--body" => self.body = BodySpec::parse(&value()?)?,
                "--surface" => self.surface = SurfaceSpec::parse(&value()?)?,
                "--resolution" => {
                    self.resolution = value()?
                        .parse()
                        .map_err(|_| ConfigError::BadValue("resolution", flag.clone()))?
                }
                "--perturbation" => {
                    self.perturbation = value()?
                        .parse()
                        .map_err(|_| ConfigError::BadValue("perturbation", flag.clone()))?
                }
                "--check" | "--checks" => self.checks = CheckKind::parse_list(&value()?)?,
                "--out" => self.out_dir = PathBuf::from(value()?),
                "--seed" => {
                    self.seed = value()?
                        .parse()
                        .map_err(|_| ConfigError::BadValue("seed", flag.clone()))?
                }
                "--grad-tol" => {
                    self.solver.grad_tol = value()?
                        .parse()
                        .map_err(|_| ConfigError::BadValue("grad-tol", flag.clone()))?
                }
                "--max-iterations" => {
                    self.solver.max_iterations = value()?
                        .parse()
                        .map_err(|_| ConfigError::BadValue("max-iterations", flag.clone()))?
                }
                "--volume-target" => {
                    self.solver.volume_target = Some(
                        value()?
                            .parse()
                            .map_err(|_| ConfigError::BadValue("volume-target", flag.clone()))?,
                    )
                }
                "--refine" => {
                    self.refine_levels = value()?
                        .parse()
                        .map_err(|_| ConfigError::BadValue("refine", flag.clone()))?
                }
                other => return Err(ConfigError::UnknownFlag(other.to_string())),
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.resolution < 50 {
            return Err(ConfigError::ResolutionTooSmall(self.resolution));
        }
        Ok(())
    }
}
