//! Ordered labeled trees: Zhang–Shasha edit distance and the shallow parse
//! proxy used to compare sentence structure.

use serde::{Deserialize, Serialize};

use super::readability::split_sentences;

/// An ordered labeled tree node. A tree is never empty: the node itself is
/// its (at least one-node) tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self { label: label.into(), children: Vec::new() }
    }

    pub fn branch(label: impl Into<String>, children: Vec<TreeNode>) -> Self {
        Self { label: label.into(), children }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::node_count).sum::<usize>()
    }
}

/// Post-order view plus the per-node metadata Zhang–Shasha needs.
struct PostOrder<'a> {
    labels: Vec<&'a str>,
    /// Post-order index of the leftmost leaf of each node's subtree.
    lmld: Vec<usize>,
    /// Key roots, strictly increasing.
    key_roots: Vec<usize>,
}

impl<'a> PostOrder<'a> {
    fn build(root: &'a TreeNode) -> Self {
        let mut labels = Vec::new();
        let mut lmld = Vec::new();
        fn walk<'a>(node: &'a TreeNode, labels: &mut Vec<&'a str>, lmld: &mut Vec<usize>) -> usize {
            let mut leftmost = usize::MAX;
            for child in &node.children {
                let cl = walk(child, labels, lmld);
                if leftmost == usize::MAX {
                    leftmost = cl;
                }
            }
            if leftmost == usize::MAX {
                leftmost = labels.len();
            }
            labels.push(node.label.as_str());
            lmld.push(leftmost);
            leftmost
        }
        walk(root, &mut labels, &mut lmld);

        // A key root is the last node (in post-order) with a given leftmost
        // leaf: the root plus every node with a left sibling.
        let mut last_for_leaf = std::collections::BTreeMap::new();
        for (idx, &l) in lmld.iter().enumerate() {
            last_for_leaf.insert(l, idx);
        }
        let mut key_roots: Vec<usize> = last_for_leaf.into_values().collect();
        key_roots.sort_unstable();
        Self { labels, lmld, key_roots }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Zhang–Shasha ordered-tree edit distance with unit costs: insert 1,
/// delete 1, relabel 1 when labels differ (0 when equal).
pub fn tree_edit_distance(t1: &TreeNode, t2: &TreeNode) -> usize {
    let a = PostOrder::build(t1);
    let b = PostOrder::build(t2);
    let (n, m) = (a.len(), b.len());
    let mut treedist = vec![vec![0usize; m]; n];

    for &i in &a.key_roots {
        for &j in &b.key_roots {
            forest_dist(i, j, &a, &b, &mut treedist);
        }
    }
    treedist[n - 1][m - 1]
}

/// Fill `treedist` for the key-root pair `(i, j)` via the forest-distance DP.
fn forest_dist(i: usize, j: usize, a: &PostOrder, b: &PostOrder, treedist: &mut [Vec<usize>]) {
    let li = a.lmld[i];
    let lj = b.lmld[j];
    let rows = i - li + 2;
    let cols = j - lj + 2;
    // fd[p][q] is the distance between forests a[li .. li+p-1] and
    // b[lj .. lj+q-1]; index 0 is the empty forest.
    let mut fd = vec![vec![0usize; cols]; rows];
    for p in 1..rows {
        fd[p][0] = fd[p - 1][0] + 1;
    }
    for q in 1..cols {
        fd[0][q] = fd[0][q - 1] + 1;
    }
    for p in 1..rows {
        let node_a = li + p - 1;
        for q in 1..cols {
            let node_b = lj + q - 1;
            if a.lmld[node_a] == li && b.lmld[node_b] == lj {
                // Both prefixes are whole trees rooted at node_a / node_b.
                let relabel = usize::from(a.labels[node_a] != b.labels[node_b]);
                fd[p][q] = (fd[p - 1][q] + 1)
                    .min(fd[p][q - 1] + 1)
                    .min(fd[p - 1][q - 1] + relabel);
                treedist[node_a][node_b] = fd[p][q];
            } else {
                let pa = a.lmld[node_a] - li; // forest prefix before node_a's subtree
                let pb = b.lmld[node_b] - lj;
                fd[p][q] = (fd[p - 1][q] + 1)
                    .min(fd[p][q - 1] + 1)
                    .min(fd[pa][pb] + treedist[node_a][node_b]);
            }
        }
    }
}

/// Edit distance scaled by the larger node count; 0 iff the trees are equal,
/// at most 2 (delete everything, insert everything).
pub fn normalized_tree_edit_distance(t1: &TreeNode, t2: &TreeNode) -> f64 {
    let d = tree_edit_distance(t1, t2) as f64;
    d / t1.node_count().max(t2.node_count()) as f64
}

/// Tokens that open a new chunk inside a sentence.
const COORDINATORS: &[&str] = &["and", "or", "but", "nor", "so", "yet", "for"];

/// Deterministic shallow constituency proxy.
///
/// Shape: root `S`; one `SENT` child per sentence; inside a sentence,
/// maximal token runs split at punctuation boundaries and coordinating
/// tokens become either a bare leaf (single-token run) or a `C` node with
/// lowercased token leaves. Text with no words collapses to a root with one
/// (possibly empty) leaf.
///
/// A bound external parser may replace this proxy at the campaign level; the
/// proxy keeps structural comparisons reproducible offline.
pub fn build_parse_tree(text: &str) -> TreeNode {
    let sentences = split_sentences(text);
    let mut sent_nodes = Vec::new();
    for sentence in &sentences {
        let mut chunks: Vec<Vec<String>> = vec![Vec::new()];
        for raw in sentence {
            let core: String = raw
                .trim_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .flat_map(char::to_lowercase)
                .collect();
            let boundary_after = raw
                .trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}'])
                .ends_with([',', ';', ':', '-', '\u{2013}', '\u{2014}']);
            if core.is_empty() || COORDINATORS.contains(&core.as_str()) {
                // Pure punctuation or a coordinator: close the current chunk.
                if !chunks.last().unwrap().is_empty() {
                    chunks.push(Vec::new());
                }
                continue;
            }
            chunks.last_mut().unwrap().push(core);
            if boundary_after && !chunks.last().unwrap().is_empty() {
                chunks.push(Vec::new());
            }
        }
        chunks.retain(|c| !c.is_empty());
        if chunks.is_empty() {
            continue;
        }
        let children: Vec<TreeNode> = chunks
            .into_iter()
            .map(|tokens| {
                if tokens.len() == 1 {
                    TreeNode::leaf(tokens.into_iter().next().unwrap())
                } else {
                    TreeNode::branch("C", tokens.into_iter().map(TreeNode::leaf).collect())
                }
            })
            .collect();
        sent_nodes.push(TreeNode::branch("SENT", children));
    }
    if sent_nodes.is_empty() {
        let leaf: String = text.trim().chars().flat_map(char::to_lowercase).collect();
        return TreeNode::branch("S", vec![TreeNode::leaf(leaf)]);
    }
    TreeNode::branch("S", sent_nodes)
}
