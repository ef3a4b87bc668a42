//! Rooted hierarchy of disjoint firm clusters.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::HierarchyError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    /// Dot-joined path of child positions from the root, e.g. `0.2.1`.
    pub id: String,
    pub level: usize,
    /// Sorted member firms.
    pub firms: Vec<String>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Set when Louvain found no split for a node larger than the size floor.
    pub indivisible: bool,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn size(&self) -> usize {
        self.firms.len()
    }
}

/// Arena-backed tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityTree {
    nodes: Vec<TreeNode>,
}

/// Nested JSON form: `{id, level, firms, children}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedNode {
    pub id: String,
    pub level: usize,
    pub firms: Vec<String>,
    pub children: Vec<NestedNode>,
}

pub const ROOT_ID: &str = "0";

impl CommunityTree {
    pub fn new<S: Into<String>>(firms: impl IntoIterator<Item = S>) -> Self {
        let firms: BTreeSet<String> = firms.into_iter().map(Into::into).collect();
        Self {
            nodes: vec![TreeNode {
                id: ROOT_ID.to_string(),
                level: 0,
                firms: firms.into_iter().collect(),
                children: Vec::new(),
                parent: None,
                indivisible: false,
            }],
        }
    }

    /// Attaches `groups` as the children of `parent`. The groups must
    /// partition the parent's firms.
    pub fn add_children<S: Into<String>>(
        &mut self,
        parent: usize,
        groups: impl IntoIterator<Item = impl IntoIterator<Item = S>>,
    ) -> Result<Vec<usize>, HierarchyError> {
        let node = self
            .nodes
            .get(parent)
            .ok_or(HierarchyError::UnknownNode(parent))?;
        if !node.children.is_empty() {
            return Err(HierarchyError::NotAPartition(format!(
                "node {} already has children",
                node.id
            )));
        }
        let parent_firms: BTreeSet<&str> = node.firms.iter().map(String::as_str).collect();
        let groups: Vec<Vec<String>> = groups
            .into_iter()
            .map(|g| {
                let set: BTreeSet<String> = g.into_iter().map(Into::into).collect();
                set.into_iter().collect()
            })
            .collect();
        let mut seen = BTreeSet::new();
        for g in &groups {
            if g.is_empty() {
                return Err(HierarchyError::NotAPartition("empty child".into()));
            }
            for f in g {
                if !parent_firms.contains(f.as_str()) {
                    return Err(HierarchyError::NotAPartition(format!(
                        "firm `{f}` is not in node {}",
                        node.id
                    )));
                }
                if !seen.insert(f.as_str()) {
                    return Err(HierarchyError::NotAPartition(format!(
                        "firm `{f}` appears in two children"
                    )));
                }
            }
        }
        if seen.len() != parent_firms.len() {
            return Err(HierarchyError::NotAPartition(format!(
                "children cover {} of {} firms of node {}",
                seen.len(),
                parent_firms.len(),
                node.id
            )));
        }
        let (pid, plevel) = (node.id.clone(), node.level);
        let mut ids = Vec::with_capacity(groups.len());
        for (pos, firms) in groups.into_iter().enumerate() {
            let idx = self.nodes.len();
            self.nodes.push(TreeNode {
                id: format!("{pid}.{pos}"),
                level: plevel + 1,
                firms,
                children: Vec::new(),
                parent: Some(parent),
                indivisible: false,
            });
            ids.push(idx);
        }
        self.nodes[parent].children = ids.clone();
        Ok(ids)
    }

    pub(crate) fn mark_indivisible(&mut self, node: usize) {
        self.nodes[node].indivisible = true;
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, idx: usize) -> &TreeNode {
        &self.nodes[idx]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Deepest level present.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// The partition of the root's firms at level `k`: nodes at depth `k`
    /// together with leaves that stopped above `k`.
    pub fn level_partition(&self, k: usize) -> Result<Vec<usize>, HierarchyError> {
        if k > self.depth() {
            return Err(HierarchyError::NoSuchLevel(k));
        }
        Ok((0..self.nodes.len())
            .filter(|&i| {
                let n = &self.nodes[i];
                n.level == k || (n.level < k && n.is_leaf())
            })
            .collect())
    }

    /// Breadth-first node order starting at the root.
    pub fn breadth_first(&self) -> Vec<usize> {
        let mut order = vec![0];
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            order.extend(self.nodes[i].children.iter().copied());
            head += 1;
        }
        order
    }

    pub fn is_ancestor(&self, ancestor: usize, mut node: usize) -> bool {
        while let Some(p) = self.nodes[node].parent {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }

    /// Leaf node of every firm.
    pub fn leaf_of_firm(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_leaf() {
                for f in &n.firms {
                    out.insert(f.as_str(), i);
                }
            }
        }
        out
    }

    /// Community label of every firm in the level-`k` partition.
    pub fn level_labels(&self, k: usize) -> Result<BTreeMap<&str, usize>, HierarchyError> {
        let mut out = BTreeMap::new();
        for idx in self.level_partition(k)? {
            for f in &self.nodes[idx].firms {
                out.insert(f.as_str(), idx);
            }
        }
        Ok(out)
    }

    pub fn to_nested(&self) -> NestedNode {
        fn build(tree: &CommunityTree, idx: usize) -> NestedNode {
            let n = &tree.nodes[idx];
            NestedNode {
                id: n.id.clone(),
                level: n.level,
                firms: n.firms.clone(),
                children: n.children.iter().map(|&c| build(tree, c)).collect(),
            }
        }
        build(self, 0)
    }

    pub fn from_nested(root: &NestedNode) -> Result<Self, HierarchyError> {
        let mut tree = CommunityTree::new(root.firms.iter().cloned());
        let mut stack = vec![(0usize, root)];
        while let Some((idx, node)) = stack.pop() {
            if node.children.is_empty() {
                continue;
            }
            let ids = tree.add_children(idx, node.children.iter().map(|c| c.firms.clone()))?;
            for (&cid, child) in ids.iter().zip(&node.children) {
                stack.push((cid, child));
            }
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_nested()).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HierarchyError> {
        let nested: NestedNode =
            serde_json::from_str(s).map_err(|e| HierarchyError::Format(e.to_string()))?;
        Self::from_nested(&nested)
    }

    /// `firm,path` rows, one per firm, path = id of the firm's leaf.
    pub fn write_paths_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["firm", "path"])?;
        for (firm, leaf) in self.leaf_of_firm() {
            w.write_record([firm, self.nodes[leaf].id.as_str()])?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CommunityTree {
        let mut t = CommunityTree::new(["a", "b", "c", "d", "e"]);
        let kids = t.add_children(0, [vec!["a", "b", "c"], vec!["d", "e"]]).unwrap();
        t.add_children(kids[0], [vec!["a"], vec!["b", "c"]]).unwrap();
        t
    }

    #[test]
    fn levels_partition_the_root() {
        let t = sample();
        assert_eq!(t.depth(), 2);
        for k in 0..=2 {
            let labels = t.level_labels(k).unwrap();
            assert_eq!(labels.len(), 5);
        }
        let l2: Vec<&str> = t
            .level_partition(2)
            .unwrap()
            .iter()
            .map(|&i| t.node(i).id.as_str())
            .collect();
        assert_eq!(l2, ["0.1", "0.0.0", "0.0.1"]);
        assert!(t.level_partition(3).is_err());
    }

    #[test]
    fn rejects_non_partitions() {
        let mut t = CommunityTree::new(["a", "b", "c"]);
        assert!(t.add_children(0, [vec!["a"], vec!["b"]]).is_err());
        assert!(t.add_children(0, [vec!["a", "b"], vec!["b", "c"]]).is_err());
        assert!(t.add_children(0, [vec!["a", "b", "c", "z"]]).is_err());
        assert!(t.add_children(0, [vec!["a", "b"], vec!["c"]]).is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let t = sample();
        let back = CommunityTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back.to_nested(), t.to_nested());
    }

    #[test]
    fn paths_csv_lists_leaves() {
        let mut buf = Vec::new();
        sample().write_paths_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "firm,path\na,0.0.0\nb,0.0.1\nc,0.0.1\nd,0.1\ne,0.1\n"
        );
    }

    #[test]
    fn ancestry() {
        let t = sample();
        let leaf = t.find("0.0.1").unwrap();
        assert!(t.is_ancestor(0, leaf));
        assert!(t.is_ancestor(t.find("0.0").unwrap(), leaf));
        assert!(!t.is_ancestor(t.find("0.1").unwrap(), leaf));
    }
}
