//! Problem files: JSON documents describing a model, an estimation space, a
//! target (system and/or weight matrix), a criterion and search settings.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::estimable::EstimableSystem;
use crate::linalg::SymMatrix;
use crate::model::{DesignSpec, EstimationSpace, Nuisance, SpaceKind};
use crate::weighting::WeightMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation_space: Option<SpaceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_matrix: Option<WeightSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub v: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// 1-based treatment labels, one per unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<Vec<usize>>,
    #[serde(default)]
    pub nuisance: NuisanceSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceSection {
    None,
    #[default]
    Intercept,
    /// Consecutive block sizes.
    Blocks(Vec<usize>),
    /// Row-major `n x m` nuisance design matrix.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKindName {
    Full,
    Contrasts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SpaceKindName>,
    /// Row-major `v x k` spanning set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// All normalized pairwise contrasts.
    Pairwise,
    /// 1-based control against every other treatment.
    VsControl(usize),
    Single(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Row-major `v x s` coefficient matrix.
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub normalize: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSection {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
}

fn default_restarts() -> usize {
    20
}

fn default_max_passes() -> usize {
    100
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: default_restarts(),
            max_passes: default_max_passes(),
        }
    }
}

/// A JSON syntax or schema error with its position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> std::result::Result<Self, ParseError> {
        serde_json::from_str(text).map_err(|e| ParseError {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    /// Validates every section against the model and builds domain objects.
    pub fn resolve(&self) -> Result<Problem> {
        let m = &self.model;
        let v = m.v;
        if v == 0 {
            return Err(Error::InvalidDesign("v must be positive".into()));
        }
        let assignment = match (&m.assignment, &m.replications) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidDesign("give either assignment or replications, not both".into()))
            }
            (Some(a), None) => Some(labels_to_zero_based(a, v)?),
            (None, Some(r)) => {
                if r.len() != v {
                    return Err(Error::Dimension(format!("replications has {} entries, expected v = {v}", r.len())));
                }
                Some(r.iter().enumerate().flat_map(|(t, &k)| std::iter::repeat(t).take(k)).collect())
            }
            (None, None) => None,
        };
        let n = match (m.n, &assignment) {
            (Some(n), Some(a)) if n != a.len() => {
                return Err(Error::Dimension(format!("n = {n} but the design has {} units", a.len())))
            }
            (Some(n), _) => n,
            (None, Some(a)) => a.len(),
            (None, None) => return Err(Error::InvalidDesign("model needs n, assignment or replications".into())),
        };
        let nuisance = match &m.nuisance {
            NuisanceSection::None => Nuisance::None,
            NuisanceSection::Intercept => Nuisance::Intercept,
            NuisanceSection::Blocks(b) => Nuisance::Blocks(b.clone()),
            NuisanceSection::Explicit(rows) => Nuisance::Explicit(row_major(rows, "nuisance matrix")?),
        };
        let spec = assignment
            .map(|a| DesignSpec::new(v, a, nuisance.clone()))
            .transpose()?;
        if spec.is_none() {
            crate::model::NuisanceModel::new(&nuisance, n)?;
        }
        let space = self.resolve_space(v, n, &nuisance)?;
        let system = self.system.as_ref().map(|s| resolve_system(s, v)).transpose()?;
        let weight = self
            .weight_matrix
            .as_ref()
            .map(|w| {
                let m = SymMatrix::new(row_major(&w.w, "W")?)?;
                if m.dim() != v {
                    return Err(Error::Dimension(format!("W is {0}x{0}, expected {v}x{v}", m.dim())));
                }
                Ok(m)
            })
            .transpose()?;
        let criterion = self.criterion.as_ref().map(|c| c.name.parse()).transpose()?;
        Ok(Problem {
            v,
            n,
            nuisance,
            spec,
            space,
            system,
            weight,
            criterion,
            search: self.search.clone(),
        })
    }

    fn resolve_space(&self, v: usize, n: usize, nuisance: &Nuisance) -> Result<EstimationSpace> {
        let kind = match &self.estimation_space {
            Some(SpaceSection { kind: Some(_), basis: Some(_) }) => {
                return Err(Error::InvalidSpace("give either kind or basis, not both".into()))
            }
            Some(SpaceSection { kind: Some(SpaceKindName::Full), .. }) => SpaceKind::Full,
            Some(SpaceSection { kind: Some(SpaceKindName::Contrasts), .. }) => SpaceKind::Contrasts,
            Some(SpaceSection { basis: Some(rows), .. }) => SpaceKind::Basis(row_major(rows, "estimation space basis")?),
            Some(SpaceSection { kind: None, basis: None }) => {
                return Err(Error::InvalidSpace("estimation_space needs kind or basis".into()))
            }
            None => default_space_kind(nuisance, n),
        };
        EstimationSpace::new(kind, v)
    }
}

/// Contrasts when the nuisance part absorbs a common mean, the full space otherwise.
fn default_space_kind(nuisance: &Nuisance, n: usize) -> SpaceKind {
    let l = crate::model::nuisance_matrix(nuisance, n);
    if l.ncols() == 0 || crate::linalg::max_abs(&l) == 0.0 {
        return SpaceKind::Full;
    }
    let ones = DMatrix::from_element(n, 1, 1.0);
    match crate::linalg::projector(&l) {
        Ok(p) if crate::linalg::residual_outside(&p, &ones) <= 1e-8 => SpaceKind::Contrasts,
        _ => SpaceKind::Full,
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn labels_to_zero_based(labels: &[usize], v: usize) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if t == 0 || t > v {
                Err(Error::InvalidDesign(format!("unit {} has label {t}, expected 1..={v}", i + 1)))
            } else {
                Ok(t - 1)
            }
        })
        .collect()
}

pub(crate) fn row_major(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Dimension(format!(
            "{what} is not rectangular: row {} has {} entries, row 1 has {c}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn resolve_system(s: &SystemSection, v: usize) -> Result<EstimableSystem> {
    let sys = match (&s.q, &s.generator) {
        (Some(_), Some(_)) => return Err(Error::InvalidSystem("give either Q or generator, not both".into())),
        (None, None) => return Err(Error::InvalidSystem("system needs Q or generator".into())),
        (Some(rows), None) => {
            let q = row_major(rows, "Q")?;
            if q.nrows() != v {
                return Err(Error::Dimension(format!("Q has {} rows, expected v = {v}", q.nrows())));
            }
            EstimableSystem::new(q, s.b.clone())?
        }
        (None, Some(g)) => {
            let base = match g {
                Generator::Pairwise => EstimableSystem::pairwise(v)?,
                Generator::VsControl(k) => {
                    if *k == 0 || *k > v {
                        return Err(Error::InvalidSystem(format!("control {k} is outside 1..={v}")));
                    }
                    EstimableSystem::vs_control(v, k - 1)?
                }
                Generator::Single(q) => {
                    if q.len() != v {
                        return Err(Error::Dimension(format!("single(q) has {} entries, expected {v}", q.len())));
                    }
                    EstimableSystem::single(q)?
                }
            };
            match &s.b {
                Some(b) => EstimableSystem::new(base.q().clone(), Some(b.clone()))?,
                None => base,
            }
        }
    };
    if s.normalize {
        sys.normalized()
    } else {
        Ok(sys)
    }
}

/// A validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub v: usize,
    pub n: usize,
    pub nuisance: Nuisance,
    /// Present when the model fixes an assignment.
    pub spec: Option<DesignSpec>,
    pub space: EstimationSpace,
    pub system: Option<EstimableSystem>,
    /// Raw symmetric `W`; see [`Problem::weight_matrix`].
    pub weight: Option<SymMatrix>,
    pub criterion: Option<Criterion>,
    pub search: Option<SearchSection>,
}

impl Problem {
    pub fn spec(&self) -> Result<&DesignSpec> {
        self.spec
            .as_ref()
            .ok_or_else(|| Error::InvalidDesign("model has no assignment or replications".into()))
    }

    /// `W` validated as a weight matrix for the estimation space.
    pub fn weight_matrix(&self) -> Result<Option<WeightMatrix>> {
        self.weight
            .as_ref()
            .map(|w| WeightMatrix::new(w.clone(), &self.space))
            .transpose()
    }

    pub fn criteria(&self) -> Vec<Criterion> {
        match self.criterion {
            Some(c) => vec![c],
            None => Criterion::ALL.to_vec(),
        }
    }
}
