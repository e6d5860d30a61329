//! Dependency graphs for message passing, pivot selection and reorientation.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::corpus::{Sentence, Task};
use crate::error::{Error, Result};

/// Synthetic distance labels stop here; farther tokens share one label.
pub const MAX_HOP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Relation {
    SelfLoop,
    Dep(String),
    /// Tree distance to the pivot, `2..=MAX_HOP`.
    Hop(usize),
    Far,
}

impl Relation {
    fn for_distance(d: usize) -> Relation {
        if d > MAX_HOP {
            Relation::Far
        } else {
            Relation::Hop(d)
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::SelfLoop => f.write_str("self"),
            Relation::Dep(s) => f.write_str(s),
            Relation::Hop(d) => write!(f, "con:{d}"),
            Relation::Far => f.write_str("con:far"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub relation: Relation,
}

/// Labeled tree edge, oriented head → dependent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEdge {
    pub head: usize,
    pub dependent: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    n: usize,
    tree: Vec<TreeEdge>,
    /// `N_i` for each node, sorted by neighbor index, self-loop included.
    neighborhoods: Vec<Vec<Neighbor>>,
}

impl DepGraph {
    /// One symmetric edge per (head, dependent) pair plus a self-loop per node.
    pub fn build(sentence: &Sentence) -> Result<DepGraph> {
        let structural: Vec<String> = sentence
            .check()
            .into_iter()
            .filter(|p| !p.contains("tag sequence"))
            .collect();
        if !structural.is_empty() {
            return Err(Error::invalid(format!(
                "sentence {} is not a tree: {}",
                sentence.id,
                structural.join("; ")
            )));
        }
        let tree = sentence
            .tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                t.head.map(|h| TreeEdge { head: h, dependent: i, label: t.deprel.clone() })
            })
            .collect();
        Ok(Self::from_tree(sentence.len(), tree))
    }

    fn from_tree(n: usize, tree: Vec<TreeEdge>) -> DepGraph {
        let mut neighborhoods: Vec<Vec<Neighbor>> =
            (0..n).map(|i| vec![Neighbor { node: i, relation: Relation::SelfLoop }]).collect();
        for e in &tree {
            let rel = Relation::Dep(e.label.clone());
            neighborhoods[e.head].push(Neighbor { node: e.dependent, relation: rel.clone() });
            neighborhoods[e.dependent].push(Neighbor { node: e.head, relation: rel });
        }
        for nb in &mut neighborhoods {
            nb.sort_by_key(|x| x.node);
        }
        DepGraph { n, tree, neighborhoods }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn neighborhood(&self, i: usize) -> &[Neighbor] {
        &self.neighborhoods[i]
    }

    pub fn neighborhoods(&self) -> &[Vec<Neighbor>] {
        &self.neighborhoods
    }

    pub fn tree_edges(&self) -> &[TreeEdge] {
        &self.tree
    }

    /// Directed message-passing edges `(i, j, relation)` excluding self-loops.
    pub fn edges(&self) -> Vec<(usize, usize, &Relation)> {
        self.neighborhoods
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| {
                nb.iter().filter(move |x| x.node != i).map(move |x| (i, x.node, &x.relation))
            })
            .collect()
    }

    /// Governor of each node under the current orientation.
    pub fn heads(&self) -> Vec<Option<usize>> {
        let mut heads = vec![None; self.n];
        for e in &self.tree {
            heads[e.dependent] = Some(e.head);
        }
        heads
    }

    fn adjacency(&self) -> Vec<Vec<(usize, &str)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.tree {
            adj[e.head].push((e.dependent, e.label.as_str()));
            adj[e.dependent].push((e.head, e.label.as_str()));
        }
        for a in &mut adj {
            a.sort_by_key(|x| x.0);
        }
        adj
    }

    /// Shortest-path length from `from` to every node over tree edges.
    pub fn distances(&self, from: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::from([from]);
        dist[from] = Some(0);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes have a distance");
            for &(v, _) in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn reorient(&self, pivot: Pivot, mode: ReorientMode) -> Result<DepGraph> {
        if pivot.index >= self.n {
            return Err(Error::invalid(format!(
                "pivot {} outside a {}-node graph",
                pivot.index, self.n
            )));
        }
        match mode {
            ReorientMode::Reroot => Ok(self.reroot(pivot.index)),
            ReorientMode::Star => Ok(self.star(pivot.index)),
        }
    }

    fn reroot(&self, pivot: usize) -> DepGraph {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([pivot]);
        seen[pivot] = true;
        let mut tree = Vec::with_capacity(self.tree.len());
        while let Some(u) = queue.pop_front() {
            for &(v, label) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    tree.push(TreeEdge { head: u, dependent: v, label: label.to_string() });
                    queue.push_back(v);
                }
            }
        }
        tree.sort_by_key(|e| e.dependent);
        Self::from_tree(self.n, tree)
    }

    fn star(&self, pivot: usize) -> DepGraph {
        let adj = self.adjacency();
        let dist = self.distances(pivot);
        let mut neighborhoods: Vec<Vec<Neighbor>> =
            (0..self.n).map(|i| vec![Neighbor { node: i, relation: Relation::SelfLoop }]).collect();
        let mut tree = Vec::new();
        for j in (0..self.n).filter(|&j| j != pivot) {
            let relation = match adj[pivot].iter().find(|&&(v, _)| v == j) {
                Some(&(_, label)) => Relation::Dep(label.to_string()),
                None => Relation::for_distance(dist[j].unwrap_or(usize::MAX)),
            };
            tree.push(TreeEdge { head: pivot, dependent: j, label: relation.to_string() });
            neighborhoods[pivot].push(Neighbor { node: j, relation: relation.clone() });
            neighborhoods[j].push(Neighbor { node: pivot, relation });
        }
        for nb in &mut neighborhoods {
            nb.sort_by_key(|x| x.node);
        }
        DepGraph { n: self.n, tree, neighborhoods }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReorientMode {
    /// Same edges, directed away from the pivot.
    Reroot,
    /// Pivot joined to every token; all other edges dropped.
    Star,
}

impl FromStr for ReorientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reroot" => Ok(ReorientMode::Reroot),
            "star" => Ok(ReorientMode::Star),
            _ => Err(Error::invalid(format!("unknown reorientation mode {s:?}"))),
        }
    }
}

impl fmt::Display for ReorientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReorientMode::Reroot => "reroot",
            ReorientMode::Star => "star",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotKind {
    Noun,
    Adjective,
    Middle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pivot {
    pub index: usize,
    pub how: PivotKind,
}

pub fn is_noun(pos: &str) -> bool {
    pos.starts_with("NN") || pos == "NOUN" || pos == "PROPN"
}

pub fn is_adjective(pos: &str) -> bool {
    pos.starts_with("JJ") || pos == "ADJ"
}

/// Picks a random noun (aspect task) or adjective (opinion task); falls back
/// to the middle token when there is none.
pub fn choose_pivot(sentence: &Sentence, task: Task, rng: &mut impl Rng) -> Pivot {
    let (wanted, how): (fn(&str) -> bool, _) = match task {
        Task::Aspect => (is_noun, PivotKind::Noun),
        Task::Opinion => (is_adjective, PivotKind::Adjective),
    };
    let candidates: Vec<usize> = sentence
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| wanted(&t.pos))
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        Pivot { index: sentence.len() / 2, how: PivotKind::Middle }
    } else {
        Pivot { index: candidates[rng.gen_range(0..candidates.len())], how }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus_strict, Token};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sentence(heads: &[Option<usize>], pos: &[&str]) -> Sentence {
        Sentence {
            id: "t".into(),
            tokens: heads
                .iter()
                .zip(pos)
                .enumerate()
                .map(|(i, (&head, &p))| Token {
                    surface: format!("w{i}"),
                    pos: p.into(),
                    head,
                    deprel: format!("r{i}"),
                    aspect: None,
                    opinion: None,
                })
                .collect(),
        }
    }

    #[test]
    fn single_token_only_self_loop() {
        let g = DepGraph::build(&sentence(&[None], &["NN"])).unwrap();
        assert_eq!(g.neighborhood(0), &[Neighbor { node: 0, relation: Relation::SelfLoop }]);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn chain_is_symmetric() {
        // a(0) <- b(1) <- c(2): b heads a, c heads b
        let g = DepGraph::build(&sentence(&[Some(1), Some(2), None], &["NN"; 3])).unwrap();
        let e: Vec<(usize, usize)> = g.edges().iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(e, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        for (i, j, r) in g.edges() {
            assert!(g.neighborhood(j).iter().any(|x| x.node == i && &x.relation == r));
        }
        for i in 0..3 {
            assert!(g.neighborhood(i).iter().any(|x| x.node == i));
        }
    }

    #[test]
    fn non_tree_rejected() {
        let s = sentence(&[Some(1), Some(0)], &["NN"; 2]);
        assert!(DepGraph::build(&s).is_err());
    }

    #[test]
    fn star_on_chain() {
        let g = DepGraph::build(&sentence(&[Some(1), Some(2), None], &["NN"; 3])).unwrap();
        let s = g.reorient(Pivot { index: 0, how: PivotKind::Noun }, ReorientMode::Star).unwrap();
        assert_eq!(
            s.neighborhood(0),
            &[
                Neighbor { node: 0, relation: Relation::SelfLoop },
                Neighbor { node: 1, relation: Relation::Dep("r0".into()) },
                Neighbor { node: 2, relation: Relation::Hop(2) },
            ]
        );
        assert_eq!(s.neighborhood(2).len(), 2);
    }

    #[test]
    fn far_tokens_share_a_label() {
        let heads: Vec<Option<usize>> =
            (0..7).map(|i| if i == 0 { None } else { Some(i - 1) }).collect();
        let g = DepGraph::build(&sentence(&heads, &["NN"; 7])).unwrap();
        let s = g.reorient(Pivot { index: 0, how: PivotKind::Noun }, ReorientMode::Star).unwrap();
        let rels: Vec<String> = s.neighborhood(0).iter().map(|x| x.relation.to_string()).collect();
        assert_eq!(rels, ["self", "r1", "con:2", "con:3", "con:4", "con:far", "con:far"]);
    }

    #[test]
    fn reroot_redirects_edges() {
        let g = DepGraph::build(&sentence(&[Some(1), Some(2), None], &["NN"; 3])).unwrap();
        let root = Pivot { index: 2, how: PivotKind::Middle };
        assert_eq!(g.reorient(root, ReorientMode::Reroot).unwrap(), g);
        let r = g.reorient(Pivot { index: 0, how: PivotKind::Noun }, ReorientMode::Reroot).unwrap();
        assert_eq!(r.heads(), vec![None, Some(0), Some(1)]);
        assert_eq!(r.neighborhoods(), g.neighborhoods());
    }

    #[test]
    fn invalid_pivot_rejected() {
        let g = DepGraph::build(&sentence(&[None], &["NN"])).unwrap();
        let p = Pivot { index: 1, how: PivotKind::Middle };
        assert!(g.reorient(p, ReorientMode::Star).is_err());
    }

    #[test]
    fn pivot_selection() {
        let s = sentence(&[Some(3), Some(3), Some(3), None, Some(3)], &["DT", "JJ", "VB", "NN", "RB"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose_pivot(&s, Task::Aspect, &mut rng), Pivot { index: 3, how: PivotKind::Noun });
        assert_eq!(
            choose_pivot(&s, Task::Opinion, &mut rng),
            Pivot { index: 1, how: PivotKind::Adjective }
        );
        let s = sentence(&[Some(2), Some(2), None, Some(2), Some(2)], &["DT", "VB", "VB", "RB", "RB"]);
        assert_eq!(choose_pivot(&s, Task::Aspect, &mut rng), Pivot { index: 2, how: PivotKind::Middle });
    }

    #[test]
    fn pivot_is_seed_deterministic() {
        let text = "# id = x\na\tNN\t0\troot\tO\tO\nb\tNNS\t1\tdep\tO\tO\nc\tNOUN\t1\tdep\tO\tO\nd\tPROPN\t1\tdep\tO\tO\n";
        let s = &parse_corpus_strict(text, Task::Aspect).unwrap()[0];
        let first = choose_pivot(s, Task::Aspect, &mut ChaCha8Rng::seed_from_u64(77));
        for _ in 0..100 {
            assert_eq!(choose_pivot(s, Task::Aspect, &mut ChaCha8Rng::seed_from_u64(77)), first);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let picked: std::collections::HashSet<usize> =
            (0..200).map(|_| choose_pivot(s, Task::Aspect, &mut rng).index).collect();
        assert_eq!(picked.len(), 4);
    }
}
