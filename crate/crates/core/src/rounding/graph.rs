use serde::Serialize;

use super::FractionalAllocation;
use crate::valuations::{AgentId, GoodId};

/// Bipartite support of a fractional allocation: edge `(i, j)` iff
/// `x_ij > eta`. Adjacency lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportGraph {
    agent_goods: Vec<Vec<GoodId>>,
    good_agents: Vec<Vec<AgentId>>,
}

impl SupportGraph {
    pub fn agents(&self) -> usize {
        self.agent_goods.len()
    }

    pub fn goods(&self) -> usize {
        self.good_agents.len()
    }

    pub fn goods_of(&self, i: AgentId) -> &[GoodId] {
        &self.agent_goods[i]
    }

    pub fn agents_of(&self, j: GoodId) -> &[AgentId] {
        &self.good_agents[j]
    }

    pub fn has_edge(&self, i: AgentId, j: GoodId) -> bool {
        self.agent_goods[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.agent_goods.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (AgentId, GoodId)> + '_ {
        self.agent_goods
            .iter()
            .enumerate()
            .flat_map(|(i, gs)| gs.iter().map(move |&j| (i, j)))
    }
}

pub fn support_graph(x: &FractionalAllocation, eta: f64) -> SupportGraph {
    let mut agent_goods = vec![Vec::new(); x.rows()];
    let mut good_agents = vec![Vec::new(); x.cols()];
    for (i, goods) in agent_goods.iter_mut().enumerate() {
        for j in 0..x.cols() {
            if x.get(i, j) > eta {
                goods.push(j);
                good_agents[j].push(i);
            }
        }
    }
    SupportGraph {
        agent_goods,
        good_agents,
    }
}

/// Simple alternating cycle `a_0 − g_0 − a_1 − … − a_{ℓ−1} − g_{ℓ−1} − a_0`;
/// good `goods[k]` joins `agents[k]` and `agents[(k + 1) % ℓ]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cycle {
    pub agents: Vec<AgentId>,
    pub goods: Vec<GoodId>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Agent(AgentId),
    Good(GoodId),
}

/// Depth-first search from the lowest-indexed agent; returns the first
/// cycle closed by a back edge.
pub fn find_cycle(g: &SupportGraph) -> Option<Cycle> {
    let n = g.agents();
    let idx = |node: Node| match node {
        Node::Agent(i) => i,
        Node::Good(j) => n + j,
    };
    let total = n + g.goods();
    let mut visited = vec![false; total];
    // position on the current DFS path, if any
    let mut on_path: Vec<Option<usize>> = vec![None; total];

    for root in 0..n {
        if visited[root] {
            continue;
        }
        let mut path: Vec<Node> = vec![Node::Agent(root)];
        let mut cursor: Vec<usize> = vec![0];
        visited[root] = true;
        on_path[root] = Some(0);

        while let Some(&node) = path.last() {
            let depth = path.len() - 1;
            let parent = depth.checked_sub(1).map(|d| path[d]);
            let next = {
                let c = &mut cursor[depth];
                let neighbor = match node {
                    Node::Agent(i) => g.goods_of(i).get(*c).map(|&j| Node::Good(j)),
                    Node::Good(j) => g.agents_of(j).get(*c).map(|&i| Node::Agent(i)),
                };
                *c += 1;
                neighbor
            };
            match next {
                None => {
                    on_path[idx(node)] = None;
                    path.pop();
                    cursor.pop();
                }
                Some(w) if Some(w) == parent => {}
                Some(w) => {
                    if let Some(pos) = on_path[idx(w)] {
                        return Some(cycle_from_path(&path[pos..]));
                    }
                    if !visited[idx(w)] {
                        visited[idx(w)] = true;
                        on_path[idx(w)] = Some(path.len());
                        path.push(w);
                        cursor.push(0);
                    }
                }
            }
        }
    }
    None
}

fn cycle_from_path(segment: &[Node]) -> Cycle {
    // rotate so the walk starts at an agent
    let start = match segment[0] {
        Node::Agent(_) => 0,
        Node::Good(_) => 1,
    };
    let mut agents = Vec::new();
    let mut goods = Vec::new();
    for k in 0..segment.len() {
        match segment[(start + k) % segment.len()] {
            Node::Agent(i) => agents.push(i),
            Node::Good(j) => goods.push(j),
        }
    }
    Cycle { agents, goods }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(rows: usize, cols: usize, x: &[f64]) -> FractionalAllocation {
        FractionalAllocation::new(rows, cols, x.to_vec()).unwrap()
    }

    fn assert_valid_cycle(g: &SupportGraph, c: &Cycle) {
        let l = c.len();
        assert!(l >= 2);
        assert_eq!(c.goods.len(), l);
        let mut a = c.agents.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), l, "agents repeat");
        let mut gs = c.goods.clone();
        gs.sort_unstable();
        gs.dedup();
        assert_eq!(gs.len(), l, "goods repeat");
        for k in 0..l {
            assert!(g.has_edge(c.agents[k], c.goods[k]));
            assert!(g.has_edge(c.agents[(k + 1) % l], c.goods[k]));
        }
    }

    #[test]
    fn threshold_edges() {
        let x = alloc(2, 2, &[1.0, 0.25, 0.0, 0.75]);
        let g = support_graph(&x, 1e-9);
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 0), (0, 1), (1, 1)]);
        assert!(find_cycle(&g).is_none());
    }

    #[test]
    fn integral_is_forest() {
        let x = alloc(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = support_graph(&x, 1e-9);
        assert!((0..3).all(|j| g.agents_of(j).len() == 1));
        assert!(find_cycle(&g).is_none());
    }

    #[test]
    fn uniform_is_complete() {
        let x = FractionalAllocation::uniform(3, 4).unwrap();
        let g = support_graph(&x, 1e-9);
        assert_eq!(g.edge_count(), 12);
    }

    #[test]
    fn two_by_two_cycle() {
        let x = alloc(2, 2, &[0.5; 4]);
        let g = support_graph(&x, 1e-9);
        let c = find_cycle(&g).unwrap();
        assert_valid_cycle(&g, &c);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn three_by_three_cycle_is_simple() {
        let x = FractionalAllocation::uniform(3, 3).unwrap();
        let g = support_graph(&x, 1e-9);
        let c = find_cycle(&g).unwrap();
        assert_valid_cycle(&g, &c);
    }

    #[test]
    fn cycle_away_from_root() {
        // agent 0 hangs off a tree; the cycle is among agents 1, 2
        let x = alloc(
            3,
            4,
            &[
                1.0, 0.5, 0.0, 0.0, //
                0.0, 0.5, 0.5, 0.5, //
                0.0, 0.0, 0.5, 0.5,
            ],
        );
        let g = support_graph(&x, 1e-9);
        let c = find_cycle(&g).unwrap();
        assert_valid_cycle(&g, &c);
        assert_eq!(c.len(), 2);
    }
}
