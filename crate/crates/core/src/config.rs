//! Experiment configuration documents.
//!
//! ```json
//! {
//!   "alphabet_size": 2,
//!   "matrix": [[1, 1], [1, 1]],
//!   "functions": [
//!     {"name": "phi", "depth": 1, "values": {"1": -0.6931471805599453, "2": -0.6931471805599453}},
//!     {"name": "f", "depth": 1, "theta": 0.5, "values": {"1": 2.0, "2": 2.0}}
//!   ],
//!   "potential": "phi",
//!   "roof": "f",
//!   "discretization": {"delta": 0.05, "m": 6},
//!   "target": {"cycle": "1"},
//!   "holes": {"n_min": 4, "n_max": 12},
//!   "monte_carlo": {"samples": 100000, "seed": 7, "t": 20.0}
//! }
//! ```
//!
//! Words are written with symbols `1..=a`. `"delta"` and `"m"` accept
//! `"auto"`. `"holes"` is either a range of cylinder depths around the target
//! or an explicit list `[{"depth": n, "words": ["..."]}]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{equilibrium_state, MarkovGibbsMeasure};
use crate::open_system::{make_nested_cylinders, Hole, NestedHoleSequence};
use crate::sft::{
    validate_transition_matrix, LocallyConstantFunction, Point, TransitionMatrix, Word, DEFAULT_ENUMERATION_CAP,
    DEFAULT_THETA,
};
use crate::suspension::{choose_discretization, DiscretizationParams, RoofFunction};

/// `delta` requested when the config says `"auto"`.
pub const AUTO_DELTA_REQUEST: f64 = 0.1;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alphabet_size: usize,
    pub matrix: Vec<Vec<u8>>,
    #[serde(default)]
    pub functions: Vec<FunctionSpec>,
    /// Name of the potential; `phi = 0` when absent.
    #[serde(default)]
    pub potential: Option<String>,
    #[serde(default)]
    pub roof: Option<String>,
    #[serde(default)]
    pub discretization: Option<DiscretizationSpec>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub holes: Option<HolesSpec>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default)]
    pub checks: ChecksSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub name: String,
    pub depth: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub values: BTreeMap<String, f64>,
    /// Declared seminorm bound, at least the one observed from `values`.
    #[serde(default)]
    pub lipschitz_seminorm: Option<f64>,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

/// A number or the string `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Setting<T> {
    Auto,
    Value(T),
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Setting<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Text(String),
            Value(T),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) if s == "auto" => Ok(Setting::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got {s:?}"
            ))),
            Raw::Value(v) => Ok(Setting::Value(v)),
        }
    }
}

impl<T> Default for Setting<T> {
    fn default() -> Self {
        Setting::Auto
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    #[serde(default)]
    pub delta: Setting<f64>,
    #[serde(default)]
    pub m: Setting<usize>,
}

/// `prefix` followed by `cycle` repeated forever; without a cycle the point
/// is taken to be aperiodic with the given prefix.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default)]
    pub prefix: String,
    #[serde(default)]
    pub cycle: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum HolesSpec {
    Range { n_min: usize, n_max: usize },
    List(Vec<HoleSpec>),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub depth: usize,
    pub words: Vec<String>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub samples: u64,
    pub seed: u64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    #[serde(default = "default_gibbs_n")]
    pub gibbs_n_max: usize,
    #[serde(default = "default_invariance_len")]
    pub invariance_len: usize,
}

fn default_gibbs_n() -> usize {
    8
}

fn default_invariance_len() -> usize {
    8
}

impl Default for ChecksSpec {
    fn default() -> Self {
        ChecksSpec {
            gibbs_n_max: default_gibbs_n(),
            invariance_len: default_invariance_len(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Holes of an experiment: a nested sequence around the target, or an
/// explicit list.
#[derive(Clone, Debug)]
pub enum Holes {
    Nested(NestedHoleSequence),
    List(Vec<Hole>),
}

impl Holes {
    pub fn holes(&self) -> Vec<&Hole> {
        match self {
            Holes::Nested(s) => s.holes.iter().collect(),
            Holes::List(l) => l.iter().collect(),
        }
    }
}

/// A configuration resolved into library objects.
#[derive(Clone, Debug)]
pub struct System {
    pub config: ExperimentConfig,
    pub matrix: TransitionMatrix,
    pub potential: LocallyConstantFunction,
    pub measure: MarkovGibbsMeasure,
}

fn missing(field: &str) -> Error {
    Error::Config(format!("missing field `{field}`"))
}

fn parse_word(a: &TransitionMatrix, s: &str, field: &str) -> Result<Word> {
    let w = Word::parse(s).map_err(|e| Error::Config(format!("{field}: {e}")))?;
    if w.symbols().iter().any(|&x| x as usize >= a.size()) {
        return Err(Error::Config(format!(
            "{field}: {s} uses a symbol outside 1..={}",
            a.size()
        )));
    }
    Ok(w)
}

impl System {
    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        if config.matrix.len() != config.alphabet_size {
            return Err(Error::Config(format!(
                "`alphabet_size` is {} but `matrix` has {} rows",
                config.alphabet_size,
                config.matrix.len()
            )));
        }
        let matrix = validate_transition_matrix(&config.matrix)?;
        let potential = match &config.potential {
            None => LocallyConstantFunction::constant(&matrix, 0.0)?,
            Some(name) => function(&config, &matrix, name, "potential")?,
        };
        let measure = equilibrium_state(&matrix, &potential)?;
        Ok(System {
            config,
            matrix,
            potential,
            measure,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(ExperimentConfig::load(path)?)
    }

    pub fn roof(&self) -> Result<RoofFunction> {
        let name = self.config.roof.as_ref().ok_or_else(|| missing("roof"))?;
        RoofFunction::new(function(&self.config, &self.matrix, name, "roof")?)
    }

    pub fn target(&self) -> Result<Point> {
        let t = self.config.target.as_ref().ok_or_else(|| missing("target"))?;
        let prefix = if t.prefix.is_empty() {
            Vec::new()
        } else {
            parse_word(&self.matrix, &t.prefix, "target.prefix")?.0
        };
        let point = match &t.cycle {
            Some(c) => Point::eventually_periodic(prefix, parse_word(&self.matrix, c, "target.cycle")?.0),
            None => Point::aperiodic(prefix),
        };
        if !point.is_admissible(&self.matrix) {
            return Err(Error::Config(format!("target {point} is not admissible")));
        }
        Ok(point)
    }

    pub fn holes(&self) -> Result<Holes> {
        match self.config.holes.as_ref().ok_or_else(|| missing("holes"))? {
            HolesSpec::Range { n_min, n_max } => {
                if *n_min == 0 || n_min > n_max {
                    return Err(Error::Config(format!("hole range {n_min}..={n_max} is empty")));
                }
                let count = self.matrix.count_words(*n_max);
                if count > DEFAULT_ENUMERATION_CAP {
                    return Err(Error::LengthOverflow {
                        count,
                        cap: DEFAULT_ENUMERATION_CAP,
                    });
                }
                Ok(Holes::Nested(make_nested_cylinders(
                    &self.target()?,
                    *n_min..=*n_max,
                    &self.measure,
                )?))
            }
            HolesSpec::List(list) => {
                if list.is_empty() {
                    return Err(Error::Config("`holes` list is empty".into()));
                }
                list.iter()
                    .map(|h| {
                        let words = h
                            .words
                            .iter()
                            .map(|w| parse_word(&self.matrix, w, "holes.words"))
                            .collect::<Result<Vec<_>>>()?;
                        let hole = Hole::new(&self.matrix, words)?;
                        if hole.depth() != h.depth {
                            return Err(Error::Config(format!(
                                "hole declared with depth {} has words of length {}",
                                h.depth,
                                hole.depth()
                            )));
                        }
                        Ok(hole)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Holes::List)
            }
        }
    }

    /// Discretization from the config; `"auto"` values are chosen by
    /// [`choose_discretization`] with the default request.
    pub fn discretization(&self) -> Result<DiscretizationParams> {
        let f = self.roof()?;
        let spec = self.config.discretization.unwrap_or_default();
        match (spec.delta, spec.m) {
            (Setting::Value(delta), Setting::Value(m)) => DiscretizationParams::new(&f, &self.measure, m, delta),
            (Setting::Auto, Setting::Auto) => choose_discretization(&f, &self.measure, AUTO_DELTA_REQUEST),
            (Setting::Auto, Setting::Value(m)) => {
                let p = choose_discretization(&f, &self.measure, AUTO_DELTA_REQUEST)?;
                DiscretizationParams::new(&f, &self.measure, m.max(p.m), p.delta)
            }
            (Setting::Value(delta), Setting::Auto) => {
                let p = choose_discretization(&f, &self.measure, delta)?;
                if p.delta != delta {
                    return Err(Error::Infeasible(format!(
                        "delta = {delta} needs to be lowered to {}",
                        p.delta
                    )));
                }
                Ok(p)
            }
        }
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloSpec> {
        let mc = self.config.monte_carlo.ok_or_else(|| missing("monte_carlo"))?;
        if mc.samples == 0 || !(mc.t >= 0.0) {
            return Err(Error::Config("`monte_carlo` needs samples > 0 and t >= 0".into()));
        }
        Ok(mc)
    }
}

fn function(
    config: &ExperimentConfig,
    a: &TransitionMatrix,
    name: &str,
    role: &str,
) -> Result<LocallyConstantFunction> {
    let spec = config
        .functions
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::Config(format!("{role} `{name}` is not among `functions`")))?;
    let values = spec
        .values
        .iter()
        .map(|(w, &v)| Ok((parse_word(a, w, &format!("functions.{name}.values"))?, v)))
        .collect::<Result<Vec<_>>>()?;
    let f = LocallyConstantFunction::new(a, spec.depth, spec.theta, values)?;
    match spec.lipschitz_seminorm {
        Some(b) => f.with_lipschitz_seminorm(b),
        None => Ok(f),
    }
}
