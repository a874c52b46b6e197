//! Binary partition hierarchy over measurement components.
//!
//! Nodes are stored in heap order: level `i` holds `2^i` nodes and node `n`
//! (0-based) at level `i` has children `2n` and `2n + 1` at level `i + 1`.
//! Level 0 is the root holding every component.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// How the members of a node are divided between its two children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "seed")]
pub enum SplitStrategy {
    /// Even positions to the first child, odd positions to the second.
    Interleaved,
    /// First `⌈n/2⌉` members to the first child.
    Contiguous,
    /// Seeded shuffle, then a contiguous split; both children sorted.
    SeededRandom(u64),
}

impl Default for SplitStrategy {
    fn default() -> Self {
        SplitStrategy::SeededRandom(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub level: usize,
    /// 0-based position within the level.
    pub index: usize,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { level: 0, index: 0 };

    pub fn new(level: usize, index: usize) -> Self {
        Self { level, index }
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.level > 0).then(|| NodeId::new(self.level - 1, self.index / 2))
    }

    pub fn children(self) -> [NodeId; 2] {
        [
            NodeId::new(self.level + 1, 2 * self.index),
            NodeId::new(self.level + 1, 2 * self.index + 1),
        ]
    }

    pub fn sibling(self) -> Option<NodeId> {
        (self.level > 0).then(|| NodeId::new(self.level, self.index ^ 1))
    }

    fn heap(self) -> usize {
        (1usize << self.level) - 1 + self.index
    }

    pub fn is_ancestor_of(self, other: NodeId) -> bool {
        other.level > self.level && (other.index >> (other.level - self.level)) == self.index
    }
}

/// `s_n^(i){m,j}` with 1-based node numbers.
impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parent() {
            Some(p) => write!(
                f,
                "s_{}^({}){{{},{}}}",
                self.index + 1,
                self.level,
                p.index + 1,
                p.level
            ),
            None => write!(f, "s_1^(0)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    /// Sorted component indices.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionTree {
    nodes: Vec<PartitionNode>,
    depth: usize,
    strategy: SplitStrategy,
}

/// `⌈log₂ m⌉`, with 0 for `m ≤ 1`.
pub fn max_depth(m: usize) -> usize {
    if m <= 1 {
        0
    } else {
        (usize::BITS - (m - 1).leading_zeros()) as usize
    }
}

fn split(members: &[usize], strategy: SplitStrategy, id: NodeId) -> (Vec<usize>, Vec<usize>) {
    let first = members.len().div_ceil(2);
    match strategy {
        SplitStrategy::Contiguous => (members[..first].to_vec(), members[first..].to_vec()),
        SplitStrategy::Interleaved => {
            let a = members.iter().step_by(2).copied().collect();
            let b = members.iter().skip(1).step_by(2).copied().collect();
            (a, b)
        }
        SplitStrategy::SeededRandom(seed) => {
            let mix = seed ^ (id.heap() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(mix);
            let mut shuffled = members.to_vec();
            shuffled.shuffle(&mut rng);
            let mut a = shuffled[..first].to_vec();
            let mut b = shuffled[first..].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            (a, b)
        }
    }
}

impl PartitionTree {
    /// Full binary tree of the given depth over components `0..m`.
    pub fn build(m: usize, depth: usize, strategy: SplitStrategy) -> Result<Self> {
        let max = max_depth(m);
        if depth > max {
            return Err(Error::DepthTooLarge {
                depth,
                max,
                members: m,
            });
        }
        let total = (1usize << (depth + 1)) - 1;
        let mut nodes = Vec::with_capacity(total);
        nodes.push(PartitionNode {
            id: NodeId::ROOT,
            parent: None,
            members: (0..m).collect(),
        });
        let mut tree = Self {
            nodes,
            depth,
            strategy,
        };
        for level in 1..=depth {
            for index in 0..(1usize << level) {
                tree.nodes.push(PartitionNode {
                    id: NodeId::new(level, index),
                    parent: NodeId::new(level, index).parent(),
                    members: Vec::new(),
                });
            }
        }
        tree.rebuild_below(NodeId::ROOT);
        Ok(tree)
    }

    fn rebuild_below(&mut self, id: NodeId) {
        if id.level >= self.depth {
            return;
        }
        let (a, b) = split(&self.nodes[id.heap()].members, self.strategy, id);
        let [ca, cb] = id.children();
        self.nodes[ca.heap()].members = a;
        self.nodes[cb.heap()].members = b;
        self.rebuild_below(ca);
        self.rebuild_below(cb);
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn strategy(&self) -> SplitStrategy {
        self.strategy
    }

    pub fn root(&self) -> &PartitionNode {
        &self.nodes[0]
    }

    /// Number of components in the root.
    pub fn len(&self) -> usize {
        self.root().members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root().members.is_empty()
    }

    pub fn nodes(&self) -> &[PartitionNode] {
        &self.nodes
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.level <= self.depth && id.index < (1usize << id.level)
    }

    pub fn node(&self, id: NodeId) -> Result<&PartitionNode> {
        if self.contains(id) {
            Ok(&self.nodes[id.heap()])
        } else {
            Err(Error::UnknownNode {
                level: id.level,
                index: id.index,
            })
        }
    }

    pub fn members(&self, id: NodeId) -> Result<&[usize]> {
        Ok(&self.node(id)?.members)
    }

    pub fn level(&self, level: usize) -> impl Iterator<Item = &PartitionNode> {
        let start = (1usize << level) - 1;
        let end = if level <= self.depth {
            start + (1usize << level)
        } else {
            start
        };
        self.nodes[start.min(self.nodes.len())..end.min(self.nodes.len())].iter()
    }

    /// Moves `indices` from `from` into its sibling `to`, re-splitting both subtrees.
    pub fn move_members(&self, from: NodeId, to: NodeId, indices: &[usize]) -> Result<Self> {
        self.node(from)?;
        self.node(to)?;
        if from.level == 0 || from.sibling() != Some(to) {
            return Err(Error::NotSiblings);
        }
        let src = &self.nodes[from.heap()].members;
        for &i in indices {
            if src.binary_search(&i).is_err() {
                return Err(Error::NotMembers(i));
            }
        }
        let mut out = self.clone();
        out.nodes[from.heap()].members.retain(|i| !indices.contains(i));
        let dst = &mut out.nodes[to.heap()].members;
        dst.extend(indices.iter().copied());
        dst.sort_unstable();
        dst.dedup();
        out.rebuild_below(from);
        out.rebuild_below(to);
        Ok(out)
    }

    /// Validates a bound selection against this tree.
    pub fn selection(&self, kind: BoundKind, nodes: &[NodeId]) -> Result<Selection> {
        match kind {
            BoundKind::Upper => {
                if nodes.len() != 1 {
                    return Err(Error::MultipleNodes(nodes.len()));
                }
                Ok(Selection::Upper(self.upper(nodes[0])?))
            }
            BoundKind::Lower => Ok(Selection::Lower(self.lower(nodes)?)),
        }
    }

    pub fn upper(&self, node: NodeId) -> Result<UpperSelection> {
        Ok(UpperSelection {
            node,
            members: self.members(node)?.to_vec(),
        })
    }

    /// A cover of the root by pairwise-disjoint nodes; empty nodes are allowed as placeholders.
    pub fn lower(&self, nodes: &[NodeId]) -> Result<LowerSelection> {
        if nodes.is_empty() {
            return Err(Error::InvalidCover("no nodes selected".into()));
        }
        let m = self.len();
        let mut seen = vec![false; m];
        let mut count = 0;
        let mut sets = Vec::with_capacity(nodes.len());
        for (k, &id) in nodes.iter().enumerate() {
            if nodes[..k].contains(&id) {
                return Err(Error::InvalidCover(format!("node {id} selected twice")));
            }
            let members = self.members(id)?;
            for &c in members {
                if seen[c] {
                    return Err(Error::InvalidCover(format!("component {c} covered twice")));
                }
                seen[c] = true;
                count += 1;
            }
            sets.push(members.to_vec());
        }
        if count != m {
            let missing = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(Error::InvalidCover(format!("component {missing} not covered")));
        }
        Ok(LowerSelection {
            nodes: nodes.to_vec(),
            members: sets,
        })
    }

    /// Every node of one level; always a valid lower cover.
    pub fn level_cover(&self, level: usize) -> Result<LowerSelection> {
        if level > self.depth {
            return Err(Error::UnknownNode { level, index: 0 });
        }
        let ids: Vec<NodeId> = self.level(level).map(|n| n.id).collect();
        self.lower(&ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpperSelection {
    pub node: NodeId,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerSelection {
    pub nodes: Vec<NodeId>,
    pub members: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Upper(UpperSelection),
    Lower(LowerSelection),
}
