//! JSON network description.
//!
//! ```json
//! {
//!   "format": 1,
//!   "nodes": ["substation", "feeder-end"],
//!   "slack": "substation",
//!   "edges": [{ "from": "substation", "to": "feeder-end", "g": 10.0, "b": -0.5 }],
//!   "shunts": [{ "node": "feeder-end", "g": 0.0, "b": 1e-5 }]
//! }
//! ```
//!
//! `g`/`b` are the series conductance and susceptance in siemens (`b ≤ 0` for
//! inductive lines). Edges may carry an optional total line charging
//! `shunt_g`/`shunt_b`, split equally between both ends. `slack` defaults to
//! the first node.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};
use crate::grid::{Branch, LinePiModel, NetworkModel};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub g: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shunt_g: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shunt_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuntSpec {
    pub node: String,
    pub g: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format: u32,
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<String>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shunts: Vec<ShuntSpec>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl NetworkFile {
    /// Single line between two nodes.
    pub fn single_line(g: f64, b: f64) -> Self {
        Self {
            format: NETWORK_FORMAT_VERSION,
            nodes: vec!["h".into(), "k".into()],
            slack: Some("h".into()),
            edges: vec![EdgeSpec {
                from: "h".into(),
                to: "k".into(),
                g,
                b,
                shunt_g: 0.0,
                shunt_b: 0.0,
            }],
            shunts: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        if file.format != NETWORK_FORMAT_VERSION {
            return Err(GridError::Schema(format!(
                "unsupported network format {} (expected {NETWORK_FORMAT_VERSION})",
                file.format
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_model(&self) -> Result<NetworkModel> {
        let index = |name: &str| {
            self.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| GridError::Schema(format!("unknown node '{name}'")))
        };
        let mut seen = std::collections::BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.as_str()) {
                return Err(GridError::Schema(format!("duplicate node '{n}'")));
            }
        }
        let branches = self
            .edges
            .iter()
            .map(|e| {
                Ok(Branch {
                    from: index(&e.from)?,
                    to: index(&e.to)?,
                    line: LinePiModel {
                        g: e.g,
                        b: e.b,
                        shunt_y: Complex64::new(e.shunt_g, e.shunt_b),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let shunts = self
            .shunts
            .iter()
            .map(|s| Ok((index(&s.node)?, Complex64::new(s.g, s.b))))
            .collect::<Result<Vec<_>>>()?;
        let slack = match &self.slack {
            Some(s) => index(s)?,
            None => 0,
        };
        NetworkModel::from_branches(self.nodes.clone(), branches, &shunts, slack)
    }
}
