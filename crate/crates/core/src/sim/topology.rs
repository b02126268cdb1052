use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoNode {
    pub name: String,
    pub parent: Option<NodeId>,
    pub rank: u32,
    pub children: Vec<NodeId>,
}

/// Parent-linked tree rooted at the gateway (rank 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<TopoNode>,
    index: BTreeMap<String, NodeId>,
    root: NodeId,
}

/// One entry of an inline topology description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
}

impl Topology {
    /// Build from `(name, parent)` pairs in any order; exactly one entry has no parent.
    pub fn from_parents<S: AsRef<str>>(pairs: &[(S, Option<S>)]) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Topology(m);
        if pairs.is_empty() {
            return Err(bad("topology has no nodes".into()));
        }
        let mut index = BTreeMap::new();
        for (i, (name, _)) in pairs.iter().enumerate() {
            let name = name.as_ref();
            if name.is_empty() {
                return Err(bad("empty node id".into()));
            }
            if index.insert(name.to_string(), i).is_some() {
                return Err(bad(format!("duplicate node id {name:?}")));
            }
        }
        let mut parents = Vec::with_capacity(pairs.len());
        let mut root = None;
        for (name, parent) in pairs {
            match parent {
                None => {
                    if root.replace(index[name.as_ref()]).is_some() {
                        return Err(bad("more than one node without parent".into()));
                    }
                    parents.push(None);
                }
                Some(p) => {
                    let p = p.as_ref();
                    let pid = *index.get(p).ok_or_else(|| {
                        bad(format!("unknown parent {p:?} of {:?}", name.as_ref()))
                    })?;
                    parents.push(Some(pid));
                }
            }
        }
        let root = root.ok_or_else(|| bad("no root (gateway) node".into()))?;
        let n = pairs.len();
        let mut rank = vec![None::<u32>; n];
        rank[root] = Some(0);
        for (start, (start_name, _)) in pairs.iter().enumerate() {
            let mut chain = Vec::new();
            let mut cur = start;
            while rank[cur].is_none() {
                if chain.len() > n {
                    return Err(bad(format!("cycle through {:?}", start_name.as_ref())));
                }
                chain.push(cur);
                cur = parents[cur].expect("only the root lacks a parent");
            }
            let mut r = rank[cur].expect("loop exit");
            for &c in chain.iter().rev() {
                r += 1;
                rank[c] = Some(r);
            }
        }
        let mut nodes: Vec<TopoNode> = pairs
            .iter()
            .enumerate()
            .map(|(i, (name, _))| TopoNode {
                name: name.as_ref().to_string(),
                parent: parents[i],
                rank: rank[i].expect("all ranked"),
                children: Vec::new(),
            })
            .collect();
        for (i, parent) in parents.iter().enumerate() {
            if let Some(p) = *parent {
                nodes[p].children.push(i);
            }
        }
        Ok(Self { nodes, index, root })
    }

    pub fn from_specs(specs: &[NodeSpec]) -> Result<Self, SimError> {
        let pairs: Vec<(&str, Option<&str>)> = specs
            .iter()
            .map(|s| (s.id.as_str(), s.parent.as_deref()))
            .collect();
        Self::from_parents(&pairs)
    }

    pub fn to_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.name.clone(),
                parent: n.parent.map(|p| self.nodes[p].name.clone()),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn gateway(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &TopoNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TopoNode] {
        &self.nodes
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id].name
    }

    pub fn id_of(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn max_rank(&self) -> u32 {
        self.nodes.iter().map(|n| n.rank).max().unwrap_or(0)
    }

    /// Parent first, then children in insertion order.
    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        let n = &self.nodes[id];
        n.parent
            .into_iter()
            .chain(n.children.iter().copied())
            .collect()
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.nodes[a].parent == Some(b) || self.nodes[b].parent == Some(a)
    }

    /// The edge joining two adjacent nodes, identified by its child endpoint.
    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<NodeId> {
        if self.nodes[a].parent == Some(b) {
            Some(a)
        } else if self.nodes[b].parent == Some(a) {
            Some(b)
        } else {
            None
        }
    }

    /// Path from `id` up to the gateway, inclusive at both ends.
    pub fn path_to_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    /// `conflicts[e1][e2]`: an edge touches the closed neighborhood of the
    /// other's endpoints. Edges are indexed by child node; the root row is unused.
    pub fn interference_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.nodes.len();
        let mut near = vec![vec![false; n]; n];
        for (e, row) in near.iter_mut().enumerate() {
            let Some(p) = self.nodes[e].parent else {
                continue;
            };
            for end in [e, p] {
                row[end] = true;
                for nb in self.neighbors(end) {
                    row[nb] = true;
                }
            }
        }
        let mut m = vec![vec![false; n]; n];
        for e1 in 0..n {
            if self.nodes[e1].parent.is_none() {
                continue;
            }
            for e2 in 0..n {
                if let Some(p2) = self.nodes[e2].parent {
                    m[e1][e2] = near[e1][e2] || near[e1][p2];
                }
            }
        }
        m
    }
}

/// The 31-node testbed layout: a seven-hop path `n1..n7` plus 23 nodes on
/// shorter branches.
pub fn build_testbed_topology() -> Topology {
    let mut pairs: Vec<(String, Option<String>)> = vec![("gw".into(), None)];
    let chain = |parent: &str, names: &[&str], pairs: &mut Vec<(String, Option<String>)>| {
        let mut up = parent.to_string();
        for n in names {
            pairs.push((n.to_string(), Some(up.clone())));
            up = n.to_string();
        }
    };
    chain(
        "gw",
        &["n1", "n2", "n3", "n4", "n5", "n6", "n7"],
        &mut pairs,
    );
    chain("gw", &["a1", "a2", "a3", "a4"], &mut pairs);
    chain("gw", &["b1", "b2", "b3"], &mut pairs);
    chain("n1", &["c1", "c2", "c3"], &mut pairs);
    chain("n2", &["d1", "d2"], &mut pairs);
    chain("n3", &["e1", "e2", "e3"], &mut pairs);
    chain("n4", &["f1"], &mut pairs);
    chain("a2", &["g1", "g2"], &mut pairs);
    chain("b1", &["h1"], &mut pairs);
    chain("n5", &["i1"], &mut pairs);
    chain("gw", &["j1"], &mut pairs);
    chain("a1", &["k1"], &mut pairs);
    chain("c1", &["l1"], &mut pairs);
    Topology::from_parents(&pairs).expect("preset is a valid tree")
}

/// Names of the long path, ordered by rank.
pub const LONG_PATH: [&str; 7] = ["n1", "n2", "n3", "n4", "n5", "n6", "n7"];
