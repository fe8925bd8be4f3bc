//! Penalty families and the variable structures they are built on: known
//! sparse support, block partitions, clusters and weighted trees.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// A single violated structural invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("index {index} out of range for {m} variables")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("block {block} is empty")]
    EmptyBlock { block: usize },
    #[error("variable {index} appears in blocks {first} and {second}")]
    OverlappingBlocks {
        index: usize,
        first: usize,
        second: usize,
    },
    #[error("variable {index} is listed twice in block {block}")]
    DuplicateInBlock { index: usize, block: usize },
    #[error("partition does not cover variable {index}")]
    NotCovering { index: usize },
    #[error("known-zero support must leave at least one free variable")]
    SupportCoversAll,
    #[error("variable {index} is listed twice in the support")]
    DuplicateInSupport { index: usize },
    #[error("structure is declared for {declared} variables, data has {m}")]
    VariableCount { declared: usize, m: usize },
    #[error("regularization weight {name} = {value} must be finite and non-negative")]
    BadLambda { name: &'static str, value: f64 },
    #[error("alpha = {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("tree has no nodes")]
    EmptyTree,
    #[error("node {node} referenced but tree has {count} nodes")]
    NodeOutOfRange { node: usize, count: usize },
    #[error("root node {0} has a parent")]
    RootHasParent(usize),
    #[error("node {node} has {parents} parents")]
    ParentCount { node: usize, parents: usize },
    #[error("node {0} is unreachable from the root or lies on a cycle")]
    Unreachable(usize),
    #[error("leaf node {0} must hold exactly one variable")]
    LeafNotSingleton(usize),
    #[error("variable {index} appears in {count} leaves")]
    LeafCoverage { index: usize, count: usize },
    #[error("group of node {0} differs from the union of its children")]
    GroupNotUnion(usize),
    #[error("node {node} has height {height} outside [0, 1]")]
    HeightRange { node: usize, height: f64 },
    #[error("leaf node {node} has height {height}, expected 0")]
    LeafHeight { node: usize, height: f64 },
    #[error("root has height {0}, expected 1")]
    RootHeight(f64),
    #[error("node {parent} is not strictly higher than its child {child}")]
    HeightOrder { parent: usize, child: usize },
    #[error("{expected} node weights expected, found {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weights of node {0} violate s + g = 1 or lie outside [0, 1]")]
    BadWeights(usize),
}

fn check_index(index: usize, m: usize, errs: &mut Vec<StructureError>) -> bool {
    if index >= m {
        errs.push(StructureError::IndexOutOfRange { index, m });
        false
    } else {
        true
    }
}

/// Disjoint blocks (or clusters) of variable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    m: usize,
}

impl BlockPartition {
    /// Stores the blocks as given; use [`BlockPartition::errors`] or
    /// [`validate`] before handing it to a solver.
    pub fn new(blocks: Vec<Vec<usize>>, m: usize) -> Self {
        Self { blocks, m }
    }

    /// Like [`BlockPartition::new`] but rejects invalid input.
    pub fn checked(blocks: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        let p = Self::new(blocks, m);
        let errs = p.errors();
        if errs.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidStructure(errs))
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn num_variables(&self) -> usize {
        self.m
    }

    /// True iff every variable belongs to some block.
    pub fn covers(&self) -> bool {
        self.uncovered().is_empty()
    }

    /// Variables outside every block, ascending.
    pub fn uncovered(&self) -> Vec<usize> {
        let mut seen = vec![false; self.m];
        for &i in self.blocks.iter().flatten() {
            if i < self.m {
                seen[i] = true;
            }
        }
        (0..self.m).filter(|&i| !seen[i]).collect()
    }

    /// Block weights `√p_l`.
    pub fn weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| (b.len() as f64).sqrt()).collect()
    }

    /// Block index of every variable, `None` when uncovered.
    pub fn assignment(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.m];
        for (l, b) in self.blocks.iter().enumerate() {
            for &i in b {
                if i < self.m {
                    out[i] = Some(l);
                }
            }
        }
        out
    }

    pub fn errors(&self) -> Vec<StructureError> {
        let mut errs = Vec::new();
        let mut owner: Vec<Option<usize>> = vec![None; self.m];
        for (l, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                errs.push(StructureError::EmptyBlock { block: l });
            }
            for &i in block {
                if !check_index(i, self.m, &mut errs) {
                    continue;
                }
                match owner[i] {
                    Some(first) if first == l => {
                        errs.push(StructureError::DuplicateInBlock { index: i, block: l })
                    }
                    Some(first) => errs.push(StructureError::OverlappingBlocks {
                        index: i,
                        first,
                        second: l,
                    }),
                    None => owner[i] = Some(l),
                }
            }
        }
        errs
    }
}

/// Variables known to carry no fault (`f_T = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSpec {
    known_zero: Vec<usize>,
}

impl SupportSpec {
    pub fn new(mut known_zero: Vec<usize>) -> Self {
        known_zero.sort_unstable();
        Self { known_zero }
    }

    pub fn known_zero(&self) -> &[usize] {
        &self.known_zero
    }

    /// Free variables (complement of the support) for `m` variables.
    pub fn free(&self, m: usize) -> Vec<usize> {
        (0..m).filter(|i| self.known_zero.binary_search(i).is_err()).collect()
    }

    pub fn errors(&self, m: usize) -> Vec<StructureError> {
        let mut errs = Vec::new();
        for (k, &i) in self.known_zero.iter().enumerate() {
            check_index(i, m, &mut errs);
            if k > 0 && self.known_zero[k - 1] == i {
                errs.push(StructureError::DuplicateInSupport { index: i });
            }
        }
        let distinct: BTreeSet<usize> = self.known_zero.iter().copied().filter(|&i| i < m).collect();
        if distinct.len() >= m {
            errs.push(StructureError::SupportCoversAll);
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Variables in this node, ascending.
    pub group: Vec<usize>,
    pub children: Vec<usize>,
    pub height: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Rooted tree of nested variable groups. Leaves are single variables and
/// each internal node groups the union of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityTree {
    nodes: Vec<TreeNode>,
    root: usize,
    m: usize,
}

impl SparsityTree {
    /// Validates and builds a tree.
    pub fn new(nodes: Vec<TreeNode>, root: usize, m: usize) -> Result<Self> {
        let t = Self::unchecked(nodes, root, m);
        let errs = t.errors();
        if errs.is_empty() {
            Ok(t)
        } else {
            Err(Error::InvalidStructure(errs))
        }
    }

    pub fn unchecked(mut nodes: Vec<TreeNode>, root: usize, m: usize) -> Self {
        for n in &mut nodes {
            n.group.sort_unstable();
        }
        Self { nodes, root, m }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &TreeNode {
        &self.nodes[v]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_variables(&self) -> usize {
        self.m
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.nodes[v].is_leaf()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.is_leaf(v)).collect()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.len()];
        for (v, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                if c < parent.len() {
                    parent[c] = Some(v);
                }
            }
        }
        parent
    }

    /// Strict ancestors of `v`, nearest first.
    pub fn ancestors(&self, v: usize) -> Vec<usize> {
        let parent = self.parents();
        let mut out = Vec::new();
        let mut cur = parent[v];
        while let Some(p) = cur {
            out.push(p);
            cur = parent[p];
        }
        out
    }

    /// Nodes ordered so every child precedes its parent.
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
            } else {
                stack.push((v, true));
                for &c in self.nodes[v].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Replaces node heights with the normalized longest-path-to-leaf height.
    pub fn with_depth_heights(mut self) -> Self {
        let depth = self.longest_paths();
        let root_depth = depth[self.root].max(1) as f64;
        for (v, n) in self.nodes.iter_mut().enumerate() {
            n.height = depth[v] as f64 / root_depth;
        }
        if self.nodes.len() == 1 {
            self.nodes[0].height = 1.0;
        }
        self
    }

    fn longest_paths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        for v in self.postorder() {
            depth[v] = self.nodes[v]
                .children
                .iter()
                .map(|&c| depth[c] + 1)
                .max()
                .unwrap_or(0);
        }
        depth
    }

    pub fn errors(&self) -> Vec<StructureError> {
        let mut errs = Vec::new();
        let count = self.nodes.len();
        if count == 0 {
            return vec![StructureError::EmptyTree];
        }
        if self.root >= count {
            return vec![StructureError::NodeOutOfRange {
                node: self.root,
                count,
            }];
        }
        let mut parents = vec![0usize; count];
        for n in &self.nodes {
            for &c in &n.children {
                if c >= count {
                    errs.push(StructureError::NodeOutOfRange { node: c, count });
                } else {
                    parents[c] += 1;
                }
            }
        }
        if !errs.is_empty() {
            return errs;
        }
        if parents[self.root] > 0 {
            errs.push(StructureError::RootHasParent(self.root));
        }
        for (v, &p) in parents.iter().enumerate() {
            if v != self.root && p != 1 {
                errs.push(StructureError::ParentCount { node: v, parents: p });
            }
        }
        // reachability; a cycle or a second parent leaves nodes unvisited or revisited
        let mut visited = vec![false; count];
        let mut stack = vec![self.root];
        let mut revisit = false;
        while let Some(v) = stack.pop() {
            if visited[v] {
                revisit = true;
                continue;
            }
            visited[v] = true;
            stack.extend(self.nodes[v].children.iter().copied());
        }
        for (v, seen) in visited.iter().enumerate() {
            if !seen {
                errs.push(StructureError::Unreachable(v));
            }
        }
        if revisit || !errs.is_empty() {
            return errs;
        }

        let mut leaf_hits = vec![0usize; self.m];
        for (v, n) in self.nodes.iter().enumerate() {
            for &i in &n.group {
                check_index(i, self.m, &mut errs);
            }
            if n.is_leaf() {
                if n.group.len() != 1 {
                    errs.push(StructureError::LeafNotSingleton(v));
                } else if n.group[0] < self.m {
                    leaf_hits[n.group[0]] += 1;
                }
            } else {
                let union: BTreeSet<usize> = n
                    .children
                    .iter()
                    .flat_map(|&c| self.nodes[c].group.iter().copied())
                    .collect();
                let own: BTreeSet<usize> = n.group.iter().copied().collect();
                if union != own || own.len() != n.group.len() {
                    errs.push(StructureError::GroupNotUnion(v));
                }
            }
        }
        for (i, &c) in leaf_hits.iter().enumerate() {
            if c != 1 {
                errs.push(StructureError::LeafCoverage { index: i, count: c });
            }
        }

        for (v, n) in self.nodes.iter().enumerate() {
            let h = n.height;
            if !(0.0..=1.0).contains(&h) {
                errs.push(StructureError::HeightRange { node: v, height: h });
                continue;
            }
            if v == self.root {
                if h != 1.0 {
                    errs.push(StructureError::RootHeight(h));
                }
            } else if n.is_leaf() && h != 0.0 {
                errs.push(StructureError::LeafHeight { node: v, height: h });
            }
            for &c in &n.children {
                if self.nodes[c].height >= h {
                    errs.push(StructureError::HeightOrder { parent: v, child: c });
                }
            }
        }
        errs
    }
}

/// Incremental construction of a [`SparsityTree`]; groups are derived from
/// children, and heights default to the normalized longest path to a leaf.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<TreeNode>,
    explicit: Vec<bool>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, variable: usize) -> usize {
        self.nodes.push(TreeNode {
            group: vec![variable],
            children: Vec::new(),
            height: 0.0,
        });
        self.explicit.push(true);
        self.nodes.len() - 1
    }

    pub fn internal(&mut self, children: Vec<usize>, height: Option<f64>) -> usize {
        let mut group: Vec<usize> = children
            .iter()
            .filter_map(|&c| self.nodes.get(c))
            .flat_map(|n| n.group.iter().copied())
            .collect();
        group.sort_unstable();
        self.nodes.push(TreeNode {
            group,
            children,
            height: height.unwrap_or(f64::NAN),
        });
        self.explicit.push(height.is_some());
        self.nodes.len() - 1
    }

    /// Finishes the tree. Internal heights must be given for all internal
    /// nodes or for none.
    pub fn build(self, root: usize, m: usize) -> Result<SparsityTree> {
        let internal: Vec<bool> = self
            .nodes
            .iter()
            .zip(&self.explicit)
            .filter(|(n, _)| !n.is_leaf())
            .map(|(_, e)| *e)
            .collect();
        let all = internal.iter().all(|e| *e);
        let none = internal.iter().all(|e| !*e);
        if !all && !none {
            return Err(Error::InvalidParameter(
                "tree heights must be given for every internal node or for none".into(),
            ));
        }
        let mut tree = SparsityTree::unchecked(self.nodes, root, m);
        if none {
            if root >= tree.len() {
                return Err(Error::InvalidStructure(vec![StructureError::NodeOutOfRange {
                    node: root,
                    count: tree.len(),
                }]));
            }
            let errs = tree.errors();
            let structural: Vec<StructureError> = errs
                .into_iter()
                .filter(|e| {
                    !matches!(
                        e,
                        StructureError::HeightRange { .. }
                            | StructureError::RootHeight(_)
                            | StructureError::HeightOrder { .. }
                    )
                })
                .collect();
            if !structural.is_empty() {
                return Err(Error::InvalidStructure(structural));
            }
            tree = tree.with_depth_heights();
        } else if tree.len() == 1 {
            tree.nodes[0].height = 1.0;
        }
        let errs = tree.errors();
        if errs.is_empty() {
            Ok(tree)
        } else {
            Err(Error::InvalidStructure(errs))
        }
    }
}

/// Two-level tree over a partition: leaves (nodes `0..m`, node `i` holding
/// variable `i`) under one node per block (height 0.5), under the root
/// (height 1). Variables outside every block hang directly off the root.
pub fn flat_tree(partition: &BlockPartition) -> Result<SparsityTree> {
    let errs = partition.errors();
    if !errs.is_empty() {
        return Err(Error::InvalidStructure(errs));
    }
    let m = partition.num_variables();
    let mut nodes: Vec<TreeNode> = (0..m)
        .map(|i| TreeNode {
            group: vec![i],
            children: Vec::new(),
            height: 0.0,
        })
        .collect();
    if m == 1 && partition.is_empty() {
        nodes[0].height = 1.0;
        return SparsityTree::new(nodes, 0, 1);
    }
    let mut root_children = Vec::new();
    for b in partition.blocks() {
        let mut group = b.clone();
        group.sort_unstable();
        root_children.push(nodes.len());
        nodes.push(TreeNode {
            group: group.clone(),
            children: group,
            height: 0.5,
        });
    }
    root_children.extend(partition.uncovered());
    nodes.push(TreeNode {
        group: (0..m).collect(),
        children: root_children,
        height: 1.0,
    });
    let root = nodes.len() - 1;
    SparsityTree::new(nodes, root, m)
}

/// Per-node weights: `s_v` favours selecting children separately, `g_v`
/// selecting the node jointly, and `ω_v` is the resulting group weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights {
    pub s: Vec<f64>,
    pub g: Vec<f64>,
    pub omega: Vec<f64>,
}

impl NodeWeights {
    /// Weights from an explicit `s_v` per node (`g_v = 1 − s_v`).
    pub fn from_split(tree: &SparsityTree, s: Vec<f64>) -> Result<Self> {
        if s.len() != tree.len() {
            return Err(Error::InvalidStructure(vec![StructureError::WeightCount {
                expected: tree.len(),
                got: s.len(),
            }]));
        }
        if let Some(v) = s.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidStructure(vec![StructureError::BadWeights(v)]));
        }
        let g: Vec<f64> = s.iter().map(|x| 1.0 - x).collect();
        let parent = tree.parents();
        let mut prod = vec![1.0; tree.len()];
        // parents are processed before children in reverse postorder
        for &v in tree.postorder().iter().rev() {
            if let Some(p) = parent[v] {
                prod[v] = prod[p] * s[p];
            }
        }
        let omega = (0..tree.len())
            .map(|v| {
                if tree.is_leaf(v) && v != tree.root() {
                    prod[v]
                } else {
                    g[v] * prod[v]
                }
            })
            .collect();
        Ok(Self { s, g, omega })
    }

    pub fn errors(&self, tree: &SparsityTree) -> Vec<StructureError> {
        let n = tree.len();
        if self.s.len() != n || self.g.len() != n || self.omega.len() != n {
            return vec![StructureError::WeightCount {
                expected: n,
                got: self.omega.len(),
            }];
        }
        (0..n)
            .filter(|&v| {
                let (s, g, w) = (self.s[v], self.g[v], self.omega[v]);
                !((s + g - 1.0).abs() < 1e-12
                    && (0.0..=1.0).contains(&s)
                    && (0.0..=1.0).contains(&g)
                    && w >= 0.0
                    && w.is_finite())
            })
            .map(StructureError::BadWeights)
            .collect()
    }
}

/// Height-derived weights: `s_v = h_v`, `g_v = 1 − h_v`.
pub fn tree_weights(tree: &SparsityTree) -> Result<NodeWeights> {
    let errs = tree.errors();
    if !errs.is_empty() {
        return Err(Error::InvalidStructure(errs));
    }
    NodeWeights::from_split(tree, tree.nodes().iter().map(|n| n.height).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Lasso,
    PartialSupport,
    GroupLasso,
    SparseGroupLasso,
    Clustered,
    Tree,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Lasso,
        Family::PartialSupport,
        Family::GroupLasso,
        Family::SparseGroupLasso,
        Family::Clustered,
        Family::Tree,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Family::Lasso => "lasso",
            Family::PartialSupport => "support",
            Family::GroupLasso => "group",
            Family::SparseGroupLasso => "sparse-group",
            Family::Clustered => "cluster",
            Family::Tree => "tree",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySpec {
    Lasso {
        lambda: f64,
    },
    PartialSupport {
        lambda: f64,
        support: SupportSpec,
    },
    GroupLasso {
        lambda: f64,
        partition: BlockPartition,
    },
    SparseGroupLasso {
        lambda: f64,
        alpha: f64,
        partition: BlockPartition,
    },
    /// `λ₁ Σ ‖f_{S_j}‖₂ + λ₂ ‖f_{S_c}‖₁`.
    Clustered {
        lambda1: f64,
        lambda2: f64,
        clusters: BlockPartition,
    },
    Tree {
        lambda: f64,
        tree: SparsityTree,
        weights: NodeWeights,
    },
}

impl PenaltySpec {
    /// Tree penalty with height-derived weights.
    pub fn tree(lambda: f64, tree: SparsityTree) -> Result<Self> {
        let weights = tree_weights(&tree)?;
        Ok(Self::Tree {
            lambda,
            tree,
            weights,
        })
    }

    pub fn family(&self) -> Family {
        match self {
            PenaltySpec::Lasso { .. } => Family::Lasso,
            PenaltySpec::PartialSupport { .. } => Family::PartialSupport,
            PenaltySpec::GroupLasso { .. } => Family::GroupLasso,
            PenaltySpec::SparseGroupLasso { .. } => Family::SparseGroupLasso,
            PenaltySpec::Clustered { .. } => Family::Clustered,
            PenaltySpec::Tree { .. } => Family::Tree,
        }
    }

    /// The overall regularization weight (`λ₁` for the clustered family).
    pub fn lambda(&self) -> f64 {
        match self {
            PenaltySpec::Lasso { lambda }
            | PenaltySpec::PartialSupport { lambda, .. }
            | PenaltySpec::GroupLasso { lambda, .. }
            | PenaltySpec::SparseGroupLasso { lambda, .. }
            | PenaltySpec::Tree { lambda, .. } => *lambda,
            PenaltySpec::Clustered { lambda1, .. } => *lambda1,
        }
    }

    /// Same structure with a new overall weight. The clustered family keeps
    /// its `λ₂ / λ₁` ratio; when `λ₁ = 0` both weights become `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            PenaltySpec::Lasso { lambda: l }
            | PenaltySpec::PartialSupport { lambda: l, .. }
            | PenaltySpec::GroupLasso { lambda: l, .. }
            | PenaltySpec::SparseGroupLasso { lambda: l, .. }
            | PenaltySpec::Tree { lambda: l, .. } => *l = lambda,
            PenaltySpec::Clustered {
                lambda1, lambda2, ..
            } => {
                *lambda2 = if *lambda1 > 0.0 {
                    *lambda2 * lambda / *lambda1
                } else {
                    lambda
                };
                *lambda1 = lambda;
            }
        }
        out
    }

    /// Exact penalty value at `f`.
    pub fn penalty_value(&self, f: &DVector<f64>) -> Result<f64> {
        let m = self.expected_dim().unwrap_or(f.len());
        if f.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: f.len(),
            });
        }
        let l1 = |idx: &mut dyn Iterator<Item = usize>| idx.map(|i| f[i].abs()).sum::<f64>();
        let l2 = |idx: &[usize]| idx.iter().map(|&i| f[i] * f[i]).sum::<f64>().sqrt();
        Ok(match self {
            PenaltySpec::Lasso { lambda } => lambda * l1(&mut (0..f.len())),
            PenaltySpec::PartialSupport { lambda, support } => {
                lambda * l1(&mut support.free(f.len()).into_iter())
            }
            PenaltySpec::GroupLasso { lambda, partition } => {
                lambda
                    * partition
                        .blocks()
                        .iter()
                        .zip(partition.weights())
                        .map(|(b, w)| w * l2(b))
                        .sum::<f64>()
            }
            PenaltySpec::SparseGroupLasso {
                lambda,
                alpha,
                partition,
            } => {
                let group: f64 = partition
                    .blocks()
                    .iter()
                    .zip(partition.weights())
                    .map(|(b, w)| w * l2(b))
                    .sum();
                (1.0 - alpha) * lambda * group + alpha * lambda * l1(&mut (0..f.len()))
            }
            PenaltySpec::Clustered {
                lambda1,
                lambda2,
                clusters,
            } => {
                let group: f64 = clusters.blocks().iter().map(|b| l2(b)).sum();
                lambda1 * group + lambda2 * l1(&mut clusters.uncovered().into_iter())
            }
            PenaltySpec::Tree {
                lambda,
                tree,
                weights,
            } => {
                lambda
                    * tree
                        .nodes()
                        .iter()
                        .zip(&weights.omega)
                        .map(|(n, w)| w * l2(&n.group))
                        .sum::<f64>()
            }
        })
    }

    fn expected_dim(&self) -> Option<usize> {
        match self {
            PenaltySpec::GroupLasso { partition, .. }
            | PenaltySpec::SparseGroupLasso { partition, .. } => Some(partition.num_variables()),
            PenaltySpec::Clustered { clusters, .. } => Some(clusters.num_variables()),
            PenaltySpec::Tree { tree, .. } => Some(tree.num_variables()),
            _ => None,
        }
    }
}

/// Every violated invariant of `spec` for `m` variables; empty when valid.
pub fn validate(spec: &PenaltySpec, m: usize) -> std::result::Result<(), Vec<StructureError>> {
    let mut errs = Vec::new();
    let mut lam = |name: &'static str, value: f64| {
        if !(value >= 0.0 && value.is_finite()) {
            errs.push(StructureError::BadLambda { name, value });
        }
    };
    match spec {
        PenaltySpec::Lasso { lambda }
        | PenaltySpec::PartialSupport { lambda, .. }
        | PenaltySpec::GroupLasso { lambda, .. }
        | PenaltySpec::SparseGroupLasso { lambda, .. }
        | PenaltySpec::Tree { lambda, .. } => lam("lambda", *lambda),
        PenaltySpec::Clustered {
            lambda1, lambda2, ..
        } => {
            lam("lambda1", *lambda1);
            lam("lambda2", *lambda2);
        }
    }
    let declared = |d: usize, errs: &mut Vec<StructureError>| {
        if d != m {
            errs.push(StructureError::VariableCount { declared: d, m });
            false
        } else {
            true
        }
    };
    match spec {
        PenaltySpec::Lasso { .. } => {}
        PenaltySpec::PartialSupport { support, .. } => errs.extend(support.errors(m)),
        PenaltySpec::GroupLasso { partition, .. } => {
            if declared(partition.num_variables(), &mut errs) {
                errs.extend(partition.errors());
                errs.extend(
                    partition
                        .uncovered()
                        .into_iter()
                        .map(|index| StructureError::NotCovering { index }),
                );
            }
        }
        PenaltySpec::SparseGroupLasso {
            alpha, partition, ..
        } => {
            if !(0.0..=1.0).contains(alpha) {
                errs.push(StructureError::BadAlpha(*alpha));
            }
            if declared(partition.num_variables(), &mut errs) {
                errs.extend(partition.errors());
                errs.extend(
                    partition
                        .uncovered()
                        .into_iter()
                        .map(|index| StructureError::NotCovering { index }),
                );
            }
        }
        PenaltySpec::Clustered { clusters, .. } => {
            if declared(clusters.num_variables(), &mut errs) {
                errs.extend(clusters.errors());
            }
        }
        PenaltySpec::Tree { tree, weights, .. } => {
            if declared(tree.num_variables(), &mut errs) {
                let tree_errs = tree.errors();
                if tree_errs.is_empty() {
                    errs.extend(weights.errors(tree));
                }
                errs.extend(tree_errs);
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Pearson correlation matrix of the columns.
fn correlation(train: &DataMatrix) -> Result<Vec<Vec<f64>>> {
    let x = train.values();
    let (n, m) = x.shape();
    let mut centered = Vec::with_capacity(m);
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let var = c.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
        if var < 1e-12 {
            return Err(Error::ConstantColumn { index: j });
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        centered.push(c.into_iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    let mut r = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    Ok(r)
}

/// Average-linkage agglomerative clustering of the variables under the
/// distance `1 − |r|`. With a partition, merges stay inside blocks and the
/// block subtrees (plus any uncovered variables) hang off a common root.
/// Node heights are merge ranks normalized so the root has height 1.
///
/// Leaves are nodes `0..m` with node `i` holding variable `i`.
pub fn build_tree_from_correlation(
    train: &DataMatrix,
    partition: Option<&BlockPartition>,
) -> Result<SparsityTree> {
    let m = train.ncols();
    if train.nrows() < 2 {
        return Err(Error::Empty("correlation needs at least two samples".into()));
    }
    if let Some(p) = partition {
        if p.num_variables() != m {
            return Err(Error::InvalidStructure(vec![StructureError::VariableCount {
                declared: p.num_variables(),
                m,
            }]));
        }
        let errs = p.errors();
        if !errs.is_empty() {
            return Err(Error::InvalidStructure(errs));
        }
    }
    let corr = correlation(train)?;
    let dist = |i: usize, j: usize| 1.0 - corr[i][j].abs();

    // block label per variable; uncovered variables get their own label
    let labels: Vec<usize> = match partition {
        None => vec![0; m],
        Some(p) => {
            let assign = p.assignment();
            let mut next = p.len();
            assign
                .into_iter()
                .map(|a| {
                    a.unwrap_or_else(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        }
    };

    let mut nodes: Vec<TreeNode> = (0..m)
        .map(|i| TreeNode {
            group: vec![i],
            children: Vec::new(),
            height: 0.0,
        })
        .collect();
    if m == 1 {
        nodes[0].height = 1.0;
        return SparsityTree::new(nodes, 0, 1);
    }

    // active clusters: (node id, label, members)
    let mut active: Vec<(usize, usize, Vec<usize>)> =
        (0..m).map(|i| (i, labels[i], vec![i])).collect();
    let mut ranks: Vec<usize> = vec![0; m];
    let mut rank = 0;
    loop {
        // ordering by smallest member makes the scan (and so tie-breaking) deterministic
        active.sort_by_key(|c| c.2[0]);
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                if active[a].1 != active[b].1 {
                    continue;
                }
                let (ma, mb) = (&active[a].2, &active[b].2);
                let d = ma
                    .iter()
                    .flat_map(|&i| mb.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| dist(i, j))
                    .sum::<f64>()
                    / (ma.len() * mb.len()) as f64;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let cb = active.remove(b);
        let ca = active.remove(a);
        let mut members = ca.2;
        members.extend(cb.2);
        members.sort_unstable();
        rank += 1;
        nodes.push(TreeNode {
            group: members.clone(),
            children: vec![ca.0, cb.0],
            height: 0.0,
        });
        ranks.push(rank);
        active.push((nodes.len() - 1, ca.1, members));
    }

    let root = if active.len() == 1 {
        active[0].0
    } else {
        active.sort_by_key(|c| c.2[0]);
        rank += 1;
        nodes.push(TreeNode {
            group: (0..m).collect(),
            children: active.iter().map(|c| c.0).collect(),
            height: 0.0,
        });
        ranks.push(rank);
        nodes.len() - 1
    };
    let top = ranks[root] as f64;
    for (v, n) in nodes.iter_mut().enumerate() {
        n.height = ranks[v] as f64 / top;
    }
    SparsityTree::new(nodes, root, m)
}
