//! JSON domain files.
//!
//! ```json
//! {"nodes": [{"id": "a", "mu": 0, "boundary": true, "perimeter": 1},
//!            {"id": "b", "mu": 1, "boundary": false}],
//!  "edges": [{"a": "a", "b": "b", "len": 1}]}
//! ```
//!
//! `coords` is optional. `exterior: true` marks ambient nodes outside the
//! closed domain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Domain, DomainBuilder, NodeSpec, Role, Violation};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
    pub boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perimeter: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exterior: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: String,
    pub b: String,
    pub len: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

/// 1-based line of the `nth` occurrence of `"key"` used as an object key.
fn line_of_key(text: &str, key: &str, nth: usize) -> usize {
    let pat = format!("\"{key}\"");
    let mut count = 0;
    let mut from = 0;
    while let Some(pos) = text[from..].find(&pat) {
        let at = from + pos;
        from = at + pat.len();
        if text[from..].trim_start().starts_with(':') {
            if count == nth {
                return text[..at].matches('\n').count() + 1;
            }
            count += 1;
        }
    }
    0
}

impl Domain {
    pub fn from_json_str(text: &str) -> Result<Domain> {
        let file: DomainFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidDomain { line: e.line(), message: e.to_string() })?;
        let mut builder = DomainBuilder::new();
        for (i, rec) in file.nodes.iter().enumerate() {
            let role = match (rec.boundary, rec.exterior) {
                (true, true) => {
                    return Err(Error::InvalidDomain {
                        line: line_of_key(text, "id", i),
                        message: format!("node `{}` is both boundary and exterior", rec.id),
                    })
                }
                (true, false) => Role::Boundary,
                (false, true) => Role::Exterior,
                (false, false) => Role::Interior,
            };
            builder.push(NodeSpec {
                id: rec.id.clone(),
                mu: rec.mu,
                coords: rec.coords.clone(),
                role,
                perimeter: rec.perimeter,
            });
        }
        for (k, rec) in file.edges.iter().enumerate() {
            let lookup = |id: &str| {
                builder.index_of(id).ok_or_else(|| Error::InvalidDomain {
                    line: line_of_key(text, "len", k),
                    message: format!("edge #{k} references unknown node `{id}`"),
                })
            };
            let (a, b) = (lookup(&rec.a)?, lookup(&rec.b)?);
            builder.edge(a, b, rec.len);
        }
        builder.build_located(|v| match v {
            Violation::Node(i, _) => line_of_key(text, "id", *i),
            Violation::Edge(k, _) => line_of_key(text, "len", *k),
            Violation::Whole(_) => 1,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Domain> {
        Domain::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> DomainFile {
        let g = self.graph();
        let nodes = (0..g.node_count())
            .map(|i| {
                let n = g.node(i);
                NodeRecord {
                    id: n.id.clone(),
                    mu: n.mu,
                    coords: n.coords.clone(),
                    boundary: self.is_boundary(i),
                    perimeter: self.is_boundary(i).then(|| self.perimeter(i)),
                    exterior: self.role(i) == Role::Exterior,
                }
            })
            .collect();
        let edges = g
            .edges()
            .iter()
            .map(|e| EdgeRecord { a: g.id(e.a).to_string(), b: g.id(e.b).to_string(), len: e.len })
            .collect();
        DomainFile { nodes, edges }
    }
}
