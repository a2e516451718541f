//! Preference graphs, sink equilibria and walks.

use std::collections::HashMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::WalkError;
use crate::game::{Game, PureProfile};

/// A unilateral deviation from `from` to `to` that does not lower the
/// deviating player's utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arc {
    pub from: PureProfile,
    pub to: PureProfile,
    #[serde(skip)]
    pub from_index: usize,
    #[serde(skip)]
    pub to_index: usize,
    pub player: usize,
    pub from_strategy: usize,
    pub to_strategy: usize,
    /// `u_player(to) - u_player(from)`.
    pub weight: f64,
}

impl Arc {
    pub fn is_tie(&self) -> bool {
        self.weight == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct PreferenceGraph {
    nodes: Vec<PureProfile>,
    arcs: Vec<Arc>,
    outgoing: Vec<Vec<usize>>,
    lookup: HashMap<(usize, usize), usize>,
    sizes: Vec<usize>,
}

/// A sink strongly connected component, as sorted profile indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SinkComponent {
    pub profiles: Vec<PureProfile>,
    #[serde(skip)]
    pub indices: Vec<usize>,
    pub is_singleton: bool,
}

/// A periodic sequence of profiles together with its connecting arcs; the
/// last profile wraps around to the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Walk {
    pub profiles: Vec<PureProfile>,
    pub arcs: Vec<Arc>,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn is_simple(&self) -> bool {
        let mut seen: Vec<&PureProfile> = self.profiles.iter().collect();
        seen.sort();
        seen.dedup();
        seen.len() == self.profiles.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.weight).collect()
    }

    /// The walk started at position `start`.
    pub fn rotated(&self, start: usize) -> Walk {
        let k = self.len();
        let s = start % k;
        Walk {
            profiles: (0..k).map(|j| self.profiles[(s + j) % k].clone()).collect(),
            arcs: (0..k).map(|j| self.arcs[(s + j) % k].clone()).collect(),
        }
    }

    pub fn label(&self, game: &Game) -> String {
        self.profiles
            .iter()
            .map(|p| game.profile_label(p))
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

impl PreferenceGraph {
    pub fn build(game: &Game) -> Self {
        let nodes: Vec<PureProfile> = game.profiles().collect();
        let mut arcs = Vec::new();
        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut lookup = HashMap::new();
        for (k, p) in nodes.iter().enumerate() {
            for i in 0..game.num_players() {
                let here = game.utility(p, i);
                for s in 0..game.strategy_counts()[i] {
                    if s == p[i] {
                        continue;
                    }
                    let q = p.with(i, s);
                    let there = game.utility(&q, i);
                    if there >= here {
                        let to_index = game.profile_index(&q);
                        lookup.insert((k, to_index), arcs.len());
                        outgoing[k].push(arcs.len());
                        arcs.push(Arc {
                            from: p.clone(),
                            to: q,
                            from_index: k,
                            to_index,
                            player: i,
                            from_strategy: p[i],
                            to_strategy: s,
                            weight: there - here,
                        });
                    }
                }
            }
        }
        Self {
            nodes,
            arcs,
            outgoing,
            lookup,
            sizes: game.strategy_counts().to_vec(),
        }
    }

    pub fn nodes(&self) -> &[PureProfile] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, p: &PureProfile) -> Option<usize> {
        if p.len() != self.sizes.len() || p.0.iter().zip(&self.sizes).any(|(s, n)| s >= n) {
            return None;
        }
        let mut idx = 0;
        for (s, n) in p.0.iter().zip(&self.sizes) {
            idx = idx * n + s;
        }
        Some(idx)
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &Arc> {
        self.outgoing[node].iter().map(move |&a| &self.arcs[a])
    }

    pub fn arc_between(&self, from: usize, to: usize) -> Option<&Arc> {
        self.lookup.get(&(from, to)).map(|&a| &self.arcs[a])
    }

    /// Strongly connected components (tie arcs count in both directions),
    /// each sorted, ordered by smallest member.
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.nodes.len(), self.arcs.len());
        let ids: Vec<_> = (0..self.nodes.len()).map(|_| g.add_node(())).collect();
        for a in &self.arcs {
            g.add_edge(ids[a.from_index], ids[a.to_index], ());
        }
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        comps.sort();
        comps
    }

    /// Sink strongly connected components: no arc leaves the set.
    pub fn sink_equilibria(&self) -> Vec<SinkComponent> {
        let comps = self.strongly_connected_components();
        let mut member = vec![0usize; self.nodes.len()];
        for (c, comp) in comps.iter().enumerate() {
            for &n in comp {
                member[n] = c;
            }
        }
        comps
            .iter()
            .enumerate()
            .filter(|(c, comp)| {
                comp.iter()
                    .all(|&n| self.outgoing(n).all(|a| member[a.to_index] == *c))
            })
            .map(|(_, comp)| SinkComponent {
                profiles: comp.iter().map(|&n| self.nodes[n].clone()).collect(),
                indices: comp.clone(),
                is_singleton: comp.len() == 1,
            })
            .collect()
    }

    /// Resolves the arcs of a periodic sequence of profiles.
    pub fn validate_walk(&self, profiles: &[PureProfile]) -> Result<Walk, WalkError> {
        if profiles.len() < 2 {
            return Err(WalkError::TooShort(profiles.len()));
        }
        let mut idx = Vec::with_capacity(profiles.len());
        for p in profiles {
            match self.node_index(p) {
                Some(k) => idx.push(k),
                None => return Err(crate::error::GameError::InvalidProfile(p.clone()).into()),
            }
        }
        let k = profiles.len();
        let mut arcs = Vec::with_capacity(k);
        for i in 0..k {
            let (a, b) = (&profiles[i], &profiles[(i + 1) % k]);
            if a.differing_players(b).len() != 1 {
                return Err(WalkError::NonAdjacent(i));
            }
            match self.arc_between(idx[i], idx[(i + 1) % k]) {
                Some(arc) => arcs.push(arc.clone()),
                None if self.arc_between(idx[(i + 1) % k], idx[i]).is_some() => {
                    return Err(WalkError::WrongDirection(i))
                }
                None => return Err(WalkError::MissingArc(i)),
            }
        }
        Ok(Walk {
            profiles: profiles.to_vec(),
            arcs,
        })
    }

    /// True iff every node of the simple cycle has exactly one outgoing arc,
    /// and that arc is the cycle arc with positive weight.
    pub fn is_sink_cycle(&self, walk: &Walk) -> Result<bool, WalkError> {
        if !walk.is_simple() || walk.len() < 2 {
            return Err(WalkError::NotSimpleCycle);
        }
        Ok(walk.arcs.iter().all(|cycle_arc| {
            let mut out = self.outgoing(cycle_arc.from_index);
            match (out.next(), out.next()) {
                (Some(only), None) => only.to_index == cycle_arc.to_index && only.weight > 0.0,
                _ => false,
            }
        }))
    }

    /// Simple directed cycles of length at most `max_len` over positive-weight
    /// arcs, each once, starting at its smallest profile.
    pub fn simple_cycles(&self, max_len: usize) -> SimpleCycles<'_> {
        SimpleCycles {
            graph: self,
            max_len,
            start: 0,
            stack: Vec::new(),
            on_path: vec![false; self.nodes.len()],
        }
    }

    pub fn reaches_sink(&self) -> bool {
        let sinks = self.sink_equilibria();
        let mut good = vec![false; self.nodes.len()];
        let mut queue: Vec<usize> = Vec::new();
        for s in &sinks {
            for &n in &s.indices {
                good[n] = true;
                queue.push(n);
            }
        }
        // reverse BFS
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        for a in &self.arcs {
            incoming[a.to_index].push(a.from_index);
        }
        while let Some(n) = queue.pop() {
            for &m in &incoming[n] {
                if !good[m] {
                    good[m] = true;
                    queue.push(m);
                }
            }
        }
        good.into_iter().all(|g| g)
    }
}

/// Lazy bounded-length DFS over simple cycles.
pub struct SimpleCycles<'g> {
    graph: &'g PreferenceGraph,
    max_len: usize,
    start: usize,
    // (node, arcs tried so far, arc used to enter)
    stack: Vec<(usize, usize, Option<usize>)>,
    on_path: Vec<bool>,
}

impl SimpleCycles<'_> {
    fn make_walk(&self, closing_arc: usize) -> Walk {
        let g = self.graph;
        let mut arcs: Vec<Arc> = self
            .stack
            .iter()
            .filter_map(|&(_, _, a)| a.map(|a| g.arcs[a].clone()))
            .collect();
        arcs.push(g.arcs[closing_arc].clone());
        Walk {
            profiles: self.stack.iter().map(|&(n, _, _)| g.nodes[n].clone()).collect(),
            arcs,
        }
    }
}

impl Iterator for SimpleCycles<'_> {
    type Item = Walk;

    fn next(&mut self) -> Option<Walk> {
        let g = self.graph;
        loop {
            if self.stack.is_empty() {
                if self.start >= g.nodes.len() || self.max_len < 2 {
                    return None;
                }
                self.stack.push((self.start, 0, None));
                self.on_path[self.start] = true;
                self.start += 1;
            }
            let depth = self.stack.len();
            let top = self.stack.last_mut().expect("nonempty");
            let node = top.0;
            let out = &g.outgoing[node];
            if top.1 >= out.len() {
                self.on_path[node] = false;
                self.stack.pop();
                continue;
            }
            let arc_id = out[top.1];
            top.1 += 1;
            let arc = &g.arcs[arc_id];
            if arc.weight <= 0.0 {
                continue;
            }
            let root = self.stack[0].0;
            let next = arc.to_index;
            if next == root {
                return Some(self.make_walk(arc_id));
            }
            if next > root && !self.on_path[next] && depth < self.max_len {
                self.on_path[next] = true;
                self.stack.push((next, 0, Some(arc_id)));
            }
        }
    }
}

/// Rotation of a profile sequence that is lexicographically smallest.
pub fn canonical_rotation(profiles: &[PureProfile]) -> Vec<PureProfile> {
    let k = profiles.len();
    (0..k)
        .map(|s| (0..k).map(|j| profiles[(s + j) % k].clone()).collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}
