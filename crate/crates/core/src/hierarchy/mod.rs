//! Modularity, Louvain, and the recursive community hierarchy.

mod digraph;
mod louvain;
mod tree;

use std::collections::BTreeMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LaborFlowNetwork;
use crate::seed::{derive_seed, rng};

pub use louvain::MIN_GAIN;
pub use tree::{CommunityTree, NestedNode, TreeNode, ROOT_ID};

use digraph::Digraph;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("firm `{0}` is missing from the assignment")]
    MissingFirm(String),
    #[error("not a partition: {0}")]
    NotAPartition(String),
    #[error("no tree node with index {0}")]
    UnknownNode(usize),
    #[error("level {0} does not exist in the tree")]
    NoSuchLevel(usize),
    #[error("malformed tree: {0}")]
    Format(String),
}

/// Which null model the modularity uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModularityKind {
    /// `Q = (1/m) sum_ij [A_ij - s_i^out s_j^in / m] delta(c_i, c_j)`.
    #[default]
    Directed,
    /// Undirected modularity of `A + A^T`.
    Symmetrized,
}

/// A flat community assignment with its modularity.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Firm -> community label, labels compact from 0 in order of the
    /// smallest member firm.
    pub assignment: BTreeMap<String, usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.values().max().map_or(0, |&m| m + 1)
    }

    /// Member firms of each community, indexed by label.
    pub fn communities(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (firm, &c) in &self.assignment {
            out[c].push(firm.clone());
        }
        out
    }
}

fn indexed_assignment<L: Eq + Hash + Clone>(
    net: &LaborFlowNetwork,
    assignment: &std::collections::HashMap<String, L>,
) -> Result<Vec<usize>, HierarchyError> {
    let mut labels = std::collections::HashMap::new();
    net.firms()
        .iter()
        .map(|f| {
            let l = assignment
                .get(f)
                .ok_or_else(|| HierarchyError::MissingFirm(f.clone()))?;
            let next = labels.len();
            Ok(*labels.entry(l.clone()).or_insert(next))
        })
        .collect()
}

/// Directed weighted modularity of `assignment` on `net`. A network without
/// edges has modularity 0.
pub fn modularity<L: Eq + Hash + Clone>(
    net: &LaborFlowNetwork,
    assignment: &std::collections::HashMap<String, L>,
) -> Result<f64, HierarchyError> {
    modularity_with(net, assignment, ModularityKind::Directed)
}

pub fn modularity_with<L: Eq + Hash + Clone>(
    net: &LaborFlowNetwork,
    assignment: &std::collections::HashMap<String, L>,
    kind: ModularityKind,
) -> Result<f64, HierarchyError> {
    let assign = indexed_assignment(net, assignment)?;
    Ok(Digraph::from_network(net, kind).modularity(&assign))
}

/// Louvain with directed modularity.
pub fn louvain(net: &LaborFlowNetwork, seed: u64) -> Partition {
    louvain_with(net, seed, ModularityKind::Directed)
}

pub fn louvain_with(net: &LaborFlowNetwork, seed: u64, kind: ModularityKind) -> Partition {
    let g = Digraph::from_network(net, kind);
    let mut rng = rng(seed);
    let assign = louvain::best_of_restarts(&g, &mut rng);
    let modularity = g.modularity(&assign);
    Partition {
        assignment: net
            .firms()
            .iter()
            .cloned()
            .zip(assign.iter().copied())
            .collect(),
        modularity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyOptions {
    /// Communities with at most this many firms are not split further.
    pub min_size: usize,
    pub seed: u64,
    pub kind: ModularityKind,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            min_size: 10,
            seed: 0,
            kind: ModularityKind::Directed,
        }
    }
}

struct Subtree {
    firms: Vec<String>,
    children: Vec<Subtree>,
    indivisible: bool,
}

fn split(net: &LaborFlowNetwork, firms: Vec<String>, opts: &HierarchyOptions, seed: u64) -> Subtree {
    if firms.len() <= opts.min_size {
        return Subtree {
            firms,
            children: Vec::new(),
            indivisible: false,
        };
    }
    let sub = net.induced_subgraph(&firms);
    let part = louvain_with(&sub, seed, opts.kind);
    let groups = part.communities();
    if groups.len() <= 1 {
        return Subtree {
            firms,
            children: Vec::new(),
            indivisible: true,
        };
    }
    let children = groups
        .into_par_iter()
        .enumerate()
        .map(|(i, g)| split(net, g, opts, derive_seed(seed, i as u64)))
        .collect();
    Subtree {
        firms,
        children,
        indivisible: false,
    }
}

/// Recursive Louvain: the root holds every firm, and each node with more
/// than `min_size` firms is split by Louvain on its induced subgraph until
/// the size floor is reached or Louvain returns a single community.
/// Sibling subtrees are processed in parallel with seeds derived from
/// `(parent seed, child index)`.
pub fn detect_hierarchy(net: &LaborFlowNetwork, opts: &HierarchyOptions) -> CommunityTree {
    let root = split(net, net.firms().to_vec(), opts, opts.seed);
    let mut tree = CommunityTree::new(root.firms.iter().cloned());
    let mut stack = vec![(0usize, root)];
    while let Some((idx, node)) = stack.pop() {
        if node.indivisible {
            tree.mark_indivisible(idx);
        }
        if node.children.is_empty() {
            continue;
        }
        let ids = tree
            .add_children(idx, node.children.iter().map(|c| c.firms.clone()))
            .expect("louvain communities partition their parent");
        stack.extend(ids.into_iter().zip(node.children));
    }
    tree
}
