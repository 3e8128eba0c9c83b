//! JSON scenario and protocol documents.
//!
//! Matrices are written inline as row-major nested arrays. When reading, a
//! matrix may also be `{"csv": "relative/path.csv"}`, resolved against the
//! directory of the JSON file. Graph convention: `adjacency[i][j] > 0`
//! means follower `i` receives from follower `j`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{read_csv_matrix, FollowerSpec, Scenario};
use crate::datamod::{TrajectoryData, TrueSystem};
use crate::error::{dim_err, Error};
use crate::leaderspec::LeaderSpec;
use crate::matcore::{Complex, Matrix};
use crate::netgraph::CommGraph;
use crate::synthesis::{FollowerGains, ProtocolGains, Synthesis};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: field `{field}`: {message}")]
    Parse { path: String, line: usize, column: usize, field: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Csv { path: String, line: usize, message: String },
    #[error("{path}: {context}: {source}")]
    Invalid { path: String, context: String, source: Error },
}

impl ScenarioError {
    pub(super) fn io(path: &str, e: impl std::fmt::Display) -> Self {
        ScenarioError::Io { path: path.to_string(), message: e.to_string() }
    }

    pub(super) fn csv(path: &str, line: usize, message: String) -> Self {
        ScenarioError::Csv { path: path.to_string(), line, message }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixDoc {
    Inline(Vec<Vec<f64>>),
    Csv { csv: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    leader: LeaderDoc,
    graph: GraphDoc,
    followers: Vec<FollowerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeaderDoc {
    s: MatrixDoc,
    r: MatrixDoc,
    x0: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    adjacency: MatrixDoc,
    leader_gains: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FollowerDoc {
    c: MatrixDoc,
    d: MatrixDoc,
    data: DataDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_model: Option<ModelDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataDoc {
    u_minus: MatrixDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_minus: Option<MatrixDoc>,
    x: MatrixDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    a: MatrixDoc,
    b: MatrixDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e: Option<MatrixDoc>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn inline(m: &Matrix) -> MatrixDoc {
    MatrixDoc::Inline(rows_of(m))
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix, Error> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(dim_err(format!("{what}: rows have different lengths")));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Resolves inline and CSV-backed matrices for one document.
struct Loader<'a> {
    origin: &'a str,
    base_dir: &'a Path,
}

impl Loader<'_> {
    fn invalid(&self, context: &str, source: Error) -> ScenarioError {
        ScenarioError::Invalid { path: self.origin.to_string(), context: context.to_string(), source }
    }

    fn matrix(&self, doc: &MatrixDoc, what: &str) -> Result<Matrix, ScenarioError> {
        match doc {
            MatrixDoc::Inline(rows) => from_rows(rows, what).map_err(|e| self.invalid(what, e)),
            MatrixDoc::Csv { csv } => read_csv_matrix(&self.base_dir.join(csv)),
        }
    }

    /// A matrix that may legitimately have zero columns (`E`, `W₋` with q = 0).
    fn matrix_or_empty(&self, doc: Option<&MatrixDoc>, rows: usize, cols: usize, what: &str) -> Result<Matrix, ScenarioError> {
        match doc {
            None => Ok(Matrix::zeros(rows, cols)),
            Some(d) => {
                let m = self.matrix(d, what)?;
                if m.nrows() == 0 {
                    Ok(Matrix::zeros(0, cols))
                } else {
                    Ok(m)
                }
            }
        }
    }

    fn scenario(&self, doc: &ScenarioDoc) -> Result<Scenario, ScenarioError> {
        let leader = LeaderSpec::new(
            self.matrix(&doc.leader.s, "leader.s")?,
            self.matrix(&doc.leader.r, "leader.r")?,
            doc.leader.x0.clone(),
        )
        .map_err(|e| self.invalid("leader", e))?;
        let graph = CommGraph::new(
            self.matrix(&doc.graph.adjacency, "graph.adjacency")?,
            doc.graph.leader_gains.clone(),
        )
        .map_err(|e| self.invalid("graph", e))?;
        let followers = doc
            .followers
            .iter()
            .enumerate()
            .map(|(i, f)| self.follower(i, f))
            .collect::<Result<Vec<_>, _>>()?;
        Scenario::new(leader, graph, followers).map_err(|e| self.invalid("scenario", e))
    }

    fn follower(&self, i: usize, doc: &FollowerDoc) -> Result<FollowerSpec, ScenarioError> {
        let tag = |field: &str| format!("followers[{i}].{field}");
        let c = self.matrix(&doc.c, &tag("c"))?;
        let d = self.matrix(&doc.d, &tag("d"))?;
        let u = self.matrix(&doc.data.u_minus, &tag("data.u_minus"))?;
        let x = self.matrix(&doc.data.x, &tag("data.x"))?;
        let tau = x.ncols().saturating_sub(1);
        let w = self.matrix_or_empty(doc.data.w_minus.as_ref(), 0, tau, &tag("data.w_minus"))?;
        let data = TrajectoryData::new(u, w, x).map_err(|e| self.invalid(&tag("data"), e))?;
        let true_model = match &doc.true_model {
            None => None,
            Some(m) => {
                let a = self.matrix(&m.a, &tag("true_model.a"))?;
                let b = self.matrix(&m.b, &tag("true_model.b"))?;
                let e = match &m.e {
                    None => Matrix::zeros(a.nrows(), 0),
                    Some(e) => self.matrix(e, &tag("true_model.e"))?,
                };
                Some(
                    TrueSystem::new(a, b, e, c.clone(), d.clone())
                        .map_err(|e| self.invalid(&tag("true_model"), e))?,
                )
            }
        };
        FollowerSpec::new(c, d, data, true_model).map_err(|e| self.invalid(&format!("followers[{i}]"), e))
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        ScenarioError::Parse {
            path: origin.to_string(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

fn read_text(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| ScenarioError::io(&path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, text).map_err(|e| ScenarioError::io(&path.display().to_string(), e))
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl Scenario {
    /// Parse a scenario document; CSV references resolve against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path, origin: &str) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc = parse_json(text, origin)?;
        Loader { origin, base_dir }.scenario(&doc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read_text(path)?;
        Self::from_json_str(&text, &parent_dir(path), &path.display().to_string())
    }

    /// Self-contained JSON with every matrix inline.
    pub fn to_json(&self) -> String {
        let doc = ScenarioDoc {
            leader: LeaderDoc {
                s: inline(&self.leader.s),
                r: inline(&self.leader.r_out),
                x0: self.leader.x0.clone(),
            },
            graph: GraphDoc {
                adjacency: inline(self.graph.weights()),
                leader_gains: self.graph.leader_gains().to_vec(),
            },
            followers: self
                .followers
                .iter()
                .map(|f| FollowerDoc {
                    c: inline(&f.c),
                    d: inline(&f.d),
                    data: DataDoc {
                        u_minus: inline(f.data.u_minus()),
                        w_minus: (f.data.disturbance_dim() > 0).then(|| inline(f.data.w_minus())),
                        x: inline(f.data.x_full()),
                    },
                    true_model: f.true_model.as_ref().map(|t| ModelDoc {
                        a: inline(&t.a),
                        b: inline(&t.b),
                        e: (t.e.ncols() > 0).then(|| inline(&t.e)),
                    }),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        write_text(path, &self.to_json())
    }
}

/// Per-follower certificate residuals stored next to the gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsDoc {
    pub x_minus: f64,
    pub w_minus: f64,
    pub rho: f64,
    pub sylvester: f64,
    pub disturbance: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFollowerDoc {
    pub k: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<ResidualsDoc>,
}

/// The deployable protocol as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    pub f: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_scale: Option<f64>,
    /// `[re, im]` pairs.
    pub coupling_eigenvalues: Vec<[f64; 2]>,
    pub followers: Vec<ProtocolFollowerDoc>,
}

impl ProtocolFile {
    pub fn from_synthesis(s: &Synthesis) -> Self {
        let followers = s
            .protocol
            .per_follower
            .iter()
            .zip(&s.certificates)
            .map(|(g, c)| ProtocolFollowerDoc {
                k: rows_of(&g.k_gain),
                pi: rows_of(&g.pi),
                gamma: rows_of(&g.gamma),
                m: Some(rows_of(&c.regulation.m_sol)),
                theta: Some(rows_of(&c.stabilization.theta)),
                residuals: Some(ResidualsDoc {
                    x_minus: c.stabilization.x_minus_residual,
                    w_minus: c.stabilization.w_minus_residual,
                    rho: c.stabilization.rho,
                    sylvester: c.regulation.residuals.sylvester,
                    disturbance: c.regulation.residuals.disturbance,
                    output: c.regulation.residuals.output,
                }),
            })
            .collect();
        Self {
            f: rows_of(&s.protocol.f),
            f_scale: s.f_scale,
            coupling_eigenvalues: s.protocol.coupling_eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            followers,
        }
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        parse_json(text, origin)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json_str(&read_text(path)?, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("protocol serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        write_text(path, &self.to_json())
    }

    /// Attach the gains to the scenario's leader and graph. Shapes are
    /// checked; stability of `S − λF` is not, so hand-edited gains can be
    /// simulated as they are.
    pub fn to_gains(&self, scenario: &Scenario) -> Result<ProtocolGains, Error> {
        if self.followers.len() != scenario.followers.len() {
            return Err(dim_err(format!(
                "protocol has {} followers, scenario has {}",
                self.followers.len(),
                scenario.followers.len()
            )));
        }
        let r = scenario.leader.state_dim();
        let f = from_rows(&self.f, "F")?;
        if f.shape() != (r, r) {
            return Err(dim_err(format!("F is {:?}, expected {r}x{r}", f.shape())));
        }
        let per_follower = self
            .followers
            .iter()
            .zip(&scenario.followers)
            .enumerate()
            .map(|(i, (doc, spec))| {
                let (n, m) = (spec.data.state_dim(), spec.data.input_dim());
                let gains = FollowerGains {
                    k_gain: from_rows(&doc.k, "K")?,
                    pi: from_rows(&doc.pi, "Π")?,
                    gamma: from_rows(&doc.gamma, "Γ")?,
                };
                if gains.k_gain.shape() != (m, n) || gains.pi.shape() != (n, r) || gains.gamma.shape() != (m, r) {
                    return Err(dim_err(format!("follower {}: gain shapes do not match the scenario", i + 1)));
                }
                Ok(gains)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(ProtocolGains {
            f,
            per_follower,
            coupling_eigenvalues: self.coupling_eigenvalues.iter().map(|&[re, im]| Complex::new(re, im)).collect(),
            graph: scenario.graph.clone(),
            leader: scenario.leader.clone(),
        })
    }
}
