//! JSON structure descriptors. A descriptor declares exactly one of
//! `support`, `blocks`, `clusters` or `tree`; variable indices are 0-based.
//!
//! ```json
//! {"blocks": [[0, 1, 5, 6, 9], [2, 10, 14], [3, 8, 12], [4, 7, 11, 13]]}
//! {"tree": {"children": [{"variable": 0}, {"children": [{"variable": 1}, {"variable": 2}]}]}}
//! ```
//!
//! Tree nodes are either `{"variable": i}` or `{"children": [...], "height": h}`;
//! heights are optional but must then be omitted on every internal node, in
//! which case they follow the longest path to a leaf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::{
    flat_tree, validate, BlockPartition, Family, NodeWeights, PenaltySpec, SparsityTree, SupportSpec, TreeBuilder,
};

#[derive(Debug, Clone, PartialEq)]
pub enum StructureDescriptor {
    Support(SupportSpec),
    Blocks(BlockPartition),
    Clusters(BlockPartition),
    Tree(SparsityTree),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clusters: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree: Option<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Leaf {
        variable: usize,
    },
    Internal {
        children: Vec<NodeDoc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<f64>,
    },
}

fn add_node(doc: &NodeDoc, b: &mut TreeBuilder) -> usize {
    match doc {
        NodeDoc::Leaf { variable } => b.leaf(*variable),
        NodeDoc::Internal { children, height } => {
            let ids = children.iter().map(|c| add_node(c, b)).collect();
            b.internal(ids, *height)
        }
    }
}

fn node_doc(tree: &SparsityTree, v: usize) -> NodeDoc {
    let node = tree.node(v);
    if node.is_leaf() {
        NodeDoc::Leaf {
            variable: node.group[0],
        }
    } else {
        NodeDoc::Internal {
            children: node.children.iter().map(|&c| node_doc(tree, c)).collect(),
            height: Some(node.height),
        }
    }
}

impl StructureDescriptor {
    /// Parses and validates a descriptor for `m` variables.
    pub fn from_json(text: &str, m: usize) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::Format(format!("structure descriptor: {e}")))?;
        let declared = [
            doc.support.is_some(),
            doc.blocks.is_some(),
            doc.clusters.is_some(),
            doc.tree.is_some(),
        ]
        .iter()
        .filter(|x| **x)
        .count();
        if declared != 1 {
            return Err(Error::Format(format!(
                "structure descriptor must declare exactly one of support, blocks, clusters, tree (found {declared})"
            )));
        }
        let out = if let Some(t) = doc.support {
            StructureDescriptor::Support(SupportSpec::new(t))
        } else if let Some(b) = doc.blocks {
            StructureDescriptor::Blocks(BlockPartition::new(b, m))
        } else if let Some(c) = doc.clusters {
            StructureDescriptor::Clusters(BlockPartition::new(c, m))
        } else {
            // a bare leaf is the one-variable tree
            let root = doc.tree.expect("one key is present");
            let mut b = TreeBuilder::new();
            let r = add_node(&root, &mut b);
            StructureDescriptor::Tree(b.build(r, m)?)
        };
        out.check(m)?;
        Ok(out)
    }

    fn check(&self, m: usize) -> Result<()> {
        // validate through a representative spec so every invariant is reported
        let spec = match self {
            StructureDescriptor::Support(s) => PenaltySpec::PartialSupport {
                lambda: 0.0,
                support: s.clone(),
            },
            StructureDescriptor::Blocks(p) => PenaltySpec::GroupLasso {
                lambda: 0.0,
                partition: p.clone(),
            },
            StructureDescriptor::Clusters(p) => PenaltySpec::Clustered {
                lambda1: 0.0,
                lambda2: 0.0,
                clusters: p.clone(),
            },
            StructureDescriptor::Tree(t) => {
                let errs = t.errors();
                if !errs.is_empty() {
                    return Err(Error::InvalidStructure(errs));
                }
                PenaltySpec::tree(0.0, t.clone())?
            }
        };
        validate(&spec, m).map_err(Error::InvalidStructure)
    }

    pub fn to_json(&self) -> String {
        let mut doc = Document {
            description: None,
            support: None,
            blocks: None,
            clusters: None,
            tree: None,
        };
        match self {
            StructureDescriptor::Support(s) => doc.support = Some(s.known_zero().to_vec()),
            StructureDescriptor::Blocks(p) => doc.blocks = Some(p.blocks().to_vec()),
            StructureDescriptor::Clusters(p) => doc.clusters = Some(p.blocks().to_vec()),
            StructureDescriptor::Tree(t) => doc.tree = Some(node_doc(t, t.root())),
        }
        serde_json::to_string_pretty(&doc).expect("descriptor serializes")
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StructureDescriptor::Support(_) => "support",
            StructureDescriptor::Blocks(_) => "blocks",
            StructureDescriptor::Clusters(_) => "clusters",
            StructureDescriptor::Tree(_) => "tree",
        }
    }
}

/// Penalty parameters as given on a command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub lambda: f64,
    /// Sparse-group mixing weight.
    pub alpha: f64,
    /// Clustered complement weight; defaults to `lambda`.
    pub lambda2: Option<f64>,
}

/// Builds the penalty of `family` from an optional descriptor. A blocks
/// descriptor also serves the clustered and tree families (as clusters and
/// as a two-level tree).
pub fn build_spec(
    family: Family,
    structure: Option<&StructureDescriptor>,
    params: PenaltyParams,
    m: usize,
) -> Result<PenaltySpec> {
    let lambda = params.lambda;
    let need = |what: &str| {
        Error::InvalidParameter(format!(
            "family '{family}' needs a {what} structure descriptor"
        ))
    };
    let spec = match (family, structure) {
        (Family::Lasso, _) => PenaltySpec::Lasso { lambda },
        (Family::PartialSupport, Some(StructureDescriptor::Support(s))) => PenaltySpec::PartialSupport {
            lambda,
            support: s.clone(),
        },
        (Family::PartialSupport, _) => return Err(need("support")),
        (Family::GroupLasso, Some(StructureDescriptor::Blocks(p))) => PenaltySpec::GroupLasso {
            lambda,
            partition: p.clone(),
        },
        (Family::SparseGroupLasso, Some(StructureDescriptor::Blocks(p))) => PenaltySpec::SparseGroupLasso {
            lambda,
            alpha: params.alpha,
            partition: p.clone(),
        },
        (Family::GroupLasso | Family::SparseGroupLasso, _) => return Err(need("blocks")),
        (Family::Clustered, Some(StructureDescriptor::Clusters(p) | StructureDescriptor::Blocks(p))) => {
            PenaltySpec::Clustered {
                lambda1: lambda,
                lambda2: params.lambda2.unwrap_or(lambda),
                clusters: p.clone(),
            }
        }
        (Family::Clustered, _) => return Err(need("clusters")),
        (Family::Tree, Some(StructureDescriptor::Tree(t))) => PenaltySpec::tree(lambda, t.clone())?,
        (Family::Tree, Some(StructureDescriptor::Blocks(p))) => PenaltySpec::tree(lambda, flat_tree(p)?)?,
        (Family::Tree, _) => return Err(need("tree or blocks")),
    };
    validate(&spec, m).map_err(Error::InvalidStructure)?;
    Ok(spec)
}

/// Tree penalty with explicit per-node `s_v` instead of heights.
pub fn tree_spec_with_split(lambda: f64, tree: SparsityTree, s: Vec<f64>) -> Result<PenaltySpec> {
    let weights = NodeWeights::from_split(&tree, s)?;
    Ok(PenaltySpec::Tree {
        lambda,
        tree,
        weights,
    })
}
