//! Scenario files: one coordinate patch, its data and an ordered task list.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::geometry::{parse_geometry, Geometry};
use crate::expr::{parse_scalar, CoordinateSystem, ScalarExpr};
use crate::exterior::{Form, Multivector};
use crate::verify::{SampleBox, SamplingConfig};

/// A problem with the manifest itself, located by a JSON pointer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("configuration error at {pointer}: {message}")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

/// Escape one JSON-pointer reference token.
pub fn pointer_token(name: &str) -> String {
    name.replace('~', "~0").replace('/', "~1")
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingSpec {
    points: Option<usize>,
    seed: Option<u64>,
    tol_abs: Option<f64>,
    tol_rel: Option<f64>,
}

/// One entry of the task list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    CheckFoliation {},
    Delta {
        #[serde(default)]
        expect: Option<String>,
    },
    ObstructionCertificate {
        certificate: String,
    },
    CheckCompatible {
        #[serde(default)]
        two_form: Option<String>,
    },
    BuildPoisson {
        #[serde(default)]
        two_form: Option<String>,
        #[serde(default)]
        normalize: bool,
        #[serde(default)]
        proportional_to: Option<String>,
    },
    Jacobi {
        #[serde(default)]
        bivector: Option<String>,
    },
    Modular {
        #[serde(default)]
        bivector: Option<String>,
        #[serde(default)]
        rescale: Option<String>,
        #[serde(default)]
        expect: Option<String>,
    },
    UnimodularCertificate {
        certificate: String,
    },
    TransversallyConstant {},
    Dirac {
        constraints: Vec<String>,
        #[serde(default)]
        two_form: Option<String>,
    },
    CustomZeroCheck {
        expr: String,
        #[serde(default)]
        name: Option<String>,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::CheckFoliation {} => "check-foliation",
            TaskSpec::Delta { .. } => "delta",
            TaskSpec::ObstructionCertificate { .. } => "obstruction-certificate",
            TaskSpec::CheckCompatible { .. } => "check-compatible",
            TaskSpec::BuildPoisson { .. } => "build-poisson",
            TaskSpec::Jacobi { .. } => "jacobi",
            TaskSpec::Modular { .. } => "modular",
            TaskSpec::UnimodularCertificate { .. } => "unimodular-certificate",
            TaskSpec::TransversallyConstant {} => "transversally-constant",
            TaskSpec::Dirac { .. } => "dirac",
            TaskSpec::CustomZeroCheck { .. } => "custom-zero-check",
        }
    }
}

/// A validated manifest.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub coords: Arc<CoordinateSystem>,
    pub region: SampleBox,
    pub definitions: BTreeMap<String, Geometry>,
    pub foliation: Option<Vec<Form>>,
    pub two_form: Option<Form>,
    pub volume: Option<Form>,
    pub functions: BTreeMap<String, ScalarExpr>,
    pub tasks: Vec<TaskSpec>,
    pub sampling: SamplingConfig,
    /// Hex SHA-256 of the manifest bytes.
    pub sha256: String,
}

const TOP_LEVEL: [&str; 9] = [
    "coordinates",
    "box",
    "definitions",
    "foliation",
    "two_form",
    "volume",
    "functions",
    "tasks",
    "sampling",
];

fn field<'a, T: Deserialize<'a>>(value: &'a Value, pointer: &str) -> Result<T, ConfigError> {
    T::deserialize(value).map_err(|e| ConfigError::new(pointer, e.to_string()))
}

impl Manifest {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, ConfigError> {
        let sha256 = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        let root: Value =
            serde_json::from_slice(bytes).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
        let obj = root
            .as_object()
            .ok_or_else(|| ConfigError::new("", "manifest must be a JSON object"))?;
        if let Some(k) = obj.keys().find(|k| !TOP_LEVEL.contains(&k.as_str())) {
            return Err(ConfigError::new(format!("/{}", pointer_token(k)), "unknown key"));
        }
        let get = |k: &str| obj.get(k).filter(|v| !v.is_null());

        let names: Vec<String> = field(
            get("coordinates").ok_or_else(|| ConfigError::new("", "missing `coordinates`"))?,
            "/coordinates",
        )?;
        let coords = Arc::new(
            CoordinateSystem::new(names.iter().map(String::as_str))
                .map_err(|e| ConfigError::new("/coordinates", e.to_string()))?,
        );

        let boxes: BTreeMap<String, (f64, f64)> =
            field(get("box").ok_or_else(|| ConfigError::new("", "missing `box`"))?, "/box")?;
        if let Some(extra) = boxes.keys().find(|k| coords.index_of(k).is_none()) {
            return Err(ConfigError::new(
                format!("/box/{}", pointer_token(extra)),
                "not a coordinate",
            ));
        }
        let mut intervals = Vec::with_capacity(coords.dim());
        for name in coords.names() {
            let iv = boxes
                .get(name)
                .ok_or_else(|| ConfigError::new("/box", format!("no interval for `{name}`")))?;
            intervals.push(*iv);
        }
        let region = SampleBox::new(intervals).map_err(|e| ConfigError::new("/box", e.to_string()))?;

        let raw_defs: BTreeMap<String, String> = match get("definitions") {
            Some(v) => field(v, "/definitions")?,
            None => BTreeMap::new(),
        };
        let mut definitions = BTreeMap::new();
        for (name, text) in &raw_defs {
            let g = parse_geometry(text, &coords)
                .map_err(|e| ConfigError::new(format!("/definitions/{}", pointer_token(name)), e.to_string()))?;
            definitions.insert(name.clone(), g);
        }

        let raw_funcs: BTreeMap<String, String> = match get("functions") {
            Some(v) => field(v, "/functions")?,
            None => BTreeMap::new(),
        };
        let mut functions = BTreeMap::new();
        for (name, text) in &raw_funcs {
            let f = parse_scalar(text, &coords)
                .map_err(|e| ConfigError::new(format!("/functions/{}", pointer_token(name)), e.to_string()))?;
            functions.insert(name.clone(), f);
        }

        let mut m = Manifest {
            coords,
            region,
            definitions,
            foliation: None,
            two_form: None,
            volume: None,
            functions,
            tasks: Vec::new(),
            sampling: SamplingConfig::default(),
            sha256,
        };

        if let Some(v) = get("foliation") {
            let names: Vec<String> = field(v, "/foliation")?;
            let mut gens = Vec::with_capacity(names.len());
            for (i, n) in names.iter().enumerate() {
                gens.push(m.form_named(n, Some(1), &format!("/foliation/{i}"))?);
            }
            m.foliation = Some(gens);
        }
        if let Some(v) = get("two_form") {
            let n: String = field(v, "/two_form")?;
            m.two_form = Some(m.form_named(&n, Some(2), "/two_form")?);
        }
        if let Some(v) = get("volume") {
            let n: String = field(v, "/volume")?;
            let dim = m.coords.dim();
            m.volume = Some(m.form_named(&n, Some(dim), "/volume")?);
        }
        if let Some(v) = get("sampling") {
            let s: SamplingSpec = field(v, "/sampling")?;
            let d = SamplingConfig::default();
            m.sampling = SamplingConfig {
                points: s.points.unwrap_or(d.points),
                seed: s.seed.unwrap_or(d.seed),
                tol_abs: s.tol_abs.unwrap_or(d.tol_abs),
                tol_rel: s.tol_rel.unwrap_or(d.tol_rel),
            };
            if m.sampling.points == 0 {
                return Err(ConfigError::new("/sampling/points", "must be at least 1"));
            }
        }

        let tasks = get("tasks").ok_or_else(|| ConfigError::new("", "missing `tasks`"))?;
        let list = tasks
            .as_array()
            .ok_or_else(|| ConfigError::new("/tasks", "expected an array"))?;
        let mut built_poisson = false;
        for (i, t) in list.iter().enumerate() {
            let pointer = format!("/tasks/{i}");
            let task: TaskSpec = field(t, &pointer)?;
            m.validate_task(&task, &pointer, built_poisson)?;
            built_poisson |= matches!(task, TaskSpec::BuildPoisson { .. });
            m.tasks.push(task);
        }
        Ok(m)
    }

    fn definition(&self, name: &str, pointer: &str) -> Result<&Geometry, ConfigError> {
        self.definitions
            .get(name)
            .ok_or_else(|| ConfigError::new(pointer, format!("undefined name `{name}`")))
    }

    /// A defined form, optionally of a required degree.
    pub fn form_named(&self, name: &str, degree: Option<usize>, pointer: &str) -> Result<Form, ConfigError> {
        let g = self.definition(name, pointer)?;
        let form = g
            .clone()
            .into_form(&self.coords)
            .ok_or_else(|| ConfigError::new(pointer, format!("`{name}` is a {}, not a form", g.kind())))?;
        match degree {
            Some(q) if form.degree() != q => Err(ConfigError::new(
                pointer,
                format!("`{name}` has degree {}, expected {q}", form.degree()),
            )),
            _ => Ok(form),
        }
    }

    /// A defined multivector of the required degree.
    pub fn multivector_named(&self, name: &str, degree: usize, pointer: &str) -> Result<Multivector, ConfigError> {
        let g = self.definition(name, pointer)?;
        let v = g
            .clone()
            .into_multivector(&self.coords)
            .ok_or_else(|| ConfigError::new(pointer, format!("`{name}` is a {}, not a multivector", g.kind())))?;
        if v.degree() != degree {
            return Err(ConfigError::new(
                pointer,
                format!("`{name}` has degree {}, expected {degree}", v.degree()),
            ));
        }
        Ok(v)
    }

    pub fn function_named(&self, name: &str, pointer: &str) -> Result<ScalarExpr, ConfigError> {
        self.functions
            .get(name)
            .cloned()
            .ok_or_else(|| ConfigError::new(pointer, format!("undefined function `{name}`")))
    }

    /// A definition name or inline geometry text.
    pub fn geometry(&self, text: &str, pointer: &str) -> Result<Geometry, ConfigError> {
        if let Some(g) = self.definitions.get(text) {
            return Ok(g.clone());
        }
        if let Some(f) = self.functions.get(text) {
            return Ok(Geometry::Scalar(f.clone()));
        }
        parse_geometry(text, &self.coords).map_err(|e| ConfigError::new(pointer, e.to_string()))
    }

    /// The two-form a task uses: its own override or the manifest's.
    pub fn task_two_form(&self, name: Option<&String>, pointer: &str) -> Result<Form, ConfigError> {
        match name {
            Some(n) => self.form_named(n, Some(2), &format!("{pointer}/two_form")),
            None => self
                .two_form
                .clone()
                .ok_or_else(|| ConfigError::new(pointer, "task needs `two_form`")),
        }
    }

    fn validate_task(&self, task: &TaskSpec, pointer: &str, built_poisson: bool) -> Result<(), ConfigError> {
        let needs_foliation = matches!(
            task,
            TaskSpec::CheckFoliation {}
                | TaskSpec::Delta { .. }
                | TaskSpec::ObstructionCertificate { .. }
                | TaskSpec::CheckCompatible { .. }
                | TaskSpec::BuildPoisson { .. }
                | TaskSpec::UnimodularCertificate { .. }
                | TaskSpec::TransversallyConstant {}
        );
        if needs_foliation && self.foliation.is_none() {
            return Err(ConfigError::new(
                pointer,
                format!("`{}` needs `foliation`", task.name()),
            ));
        }
        let needs_poisson = match task {
            TaskSpec::Jacobi { bivector } | TaskSpec::Modular { bivector, .. } => bivector.is_none(),
            TaskSpec::UnimodularCertificate { .. } | TaskSpec::TransversallyConstant {} => true,
            _ => false,
        };
        if needs_poisson && !built_poisson {
            return Err(ConfigError::new(
                pointer,
                format!("`{}` needs an earlier `build-poisson` task", task.name()),
            ));
        }
        match task {
            TaskSpec::Delta { expect: Some(e) } => {
                self.geometry(e, &format!("{pointer}/expect"))?;
            }
            TaskSpec::ObstructionCertificate { certificate } | TaskSpec::UnimodularCertificate { certificate } => {
                self.function_named(certificate, &format!("{pointer}/certificate"))?;
            }
            TaskSpec::CheckCompatible { two_form } => {
                self.task_two_form(two_form.as_ref(), pointer)?;
            }
            TaskSpec::BuildPoisson {
                two_form,
                proportional_to,
                ..
            } => {
                self.task_two_form(two_form.as_ref(), pointer)?;
                if let Some(p) = proportional_to {
                    self.multivector_named(p, 2, &format!("{pointer}/proportional_to"))?;
                }
            }
            TaskSpec::Jacobi { bivector: Some(b) } => {
                self.multivector_named(b, 2, &format!("{pointer}/bivector"))?;
            }
            TaskSpec::Modular {
                bivector,
                rescale,
                expect,
            } => {
                if let Some(b) = bivector {
                    self.multivector_named(b, 2, &format!("{pointer}/bivector"))?;
                }
                if let Some(h) = rescale {
                    self.function_named(h, &format!("{pointer}/rescale"))?;
                }
                if let Some(e) = expect {
                    let p = format!("{pointer}/expect");
                    let g = self.geometry(e, &p)?;
                    if g.clone().into_multivector(&self.coords).is_none_or(|v| v.degree() != 1) {
                        return Err(ConfigError::new(
                            p,
                            format!("expected a vector field, got a {}", g.kind()),
                        ));
                    }
                }
            }
            TaskSpec::Dirac { constraints, two_form } => {
                self.task_two_form(two_form.as_ref(), pointer)?;
                if constraints.is_empty() || constraints.len() % 2 == 1 {
                    return Err(ConfigError::new(
                        format!("{pointer}/constraints"),
                        "need a nonzero even number of constraints",
                    ));
                }
                for (i, c) in constraints.iter().enumerate() {
                    self.function_named(c, &format!("{pointer}/constraints/{i}"))?;
                }
            }
            TaskSpec::CustomZeroCheck { expr, .. } => {
                self.geometry(expr, &format!("{pointer}/expr"))?;
            }
            _ => {}
        }
        Ok(())
    }
}
