//! Small-capacity max-flow (Dinic) on a forward-star graph.

use std::collections::VecDeque;

const NIL: u32 = u32::MAX;
pub const INF_CAP: i32 = i32::MAX / 4;

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    first: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<i32>,
    orig: Vec<i32>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            first: vec![NIL; nodes],
            next: Vec::new(),
            to: Vec::new(),
            cap: Vec::new(),
            orig: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.first.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.to.len()
    }

    fn push_arc(&mut self, u: usize, v: usize, c: i32) -> usize {
        let id = self.to.len();
        self.to.push(v as u32);
        self.cap.push(c);
        self.orig.push(c);
        self.next.push(self.first[u]);
        self.first[u] = id as u32;
        id
    }

    /// Directed arc `u -> v`; returns the arc id (its reverse is `id ^ 1`).
    pub fn add_arc(&mut self, u: usize, v: usize, c: i32) -> usize {
        let id = self.push_arc(u, v, c);
        self.push_arc(v, u, 0);
        id
    }

    /// Undirected edge with capacity `c` in each direction.
    pub fn add_edge(&mut self, u: usize, v: usize, c: i32) -> usize {
        let id = self.push_arc(u, v, c);
        self.push_arc(v, u, c);
        id
    }

    pub fn arc_head(&self, arc: usize) -> usize {
        self.to[arc] as usize
    }

    /// Net flow along arc `arc` in its own direction.
    pub fn net_flow(&self, arc: usize) -> i32 {
        self.orig[arc] - self.cap[arc]
    }

    pub fn arcs_from(&self, u: usize) -> ArcIter<'_> {
        ArcIter {
            net: self,
            cur: self.first[u],
        }
    }

    fn levels(&self, s: usize, t: usize, level: &mut [i32], queue: &mut VecDeque<usize>) -> bool {
        level.fill(-1);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut a = self.first[u];
            while a != NIL {
                let v = self.to[a as usize] as usize;
                if self.cap[a as usize] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    if v == t {
                        return true;
                    }
                    queue.push_back(v);
                }
                a = self.next[a as usize];
            }
        }
        level[t] >= 0
    }

    /// Maximum `s`-`t` flow, stopping early once `limit` is reached.
    pub fn max_flow(&mut self, s: usize, t: usize, limit: i64) -> i64 {
        let n = self.num_nodes();
        let mut level = vec![-1i32; n];
        let mut it = vec![NIL; n];
        let mut queue = VecDeque::new();
        let mut path: Vec<u32> = Vec::new();
        let mut total = 0i64;
        while total < limit && self.levels(s, t, &mut level, &mut queue) {
            it.copy_from_slice(&self.first);
            // iterative DFS over the level graph with current-arc pointers
            loop {
                if total >= limit {
                    break;
                }
                path.clear();
                let mut u = s;
                let found = loop {
                    if u == t {
                        break true;
                    }
                    let mut advanced = false;
                    while it[u] != NIL {
                        let a = it[u] as usize;
                        let v = self.to[a] as usize;
                        if self.cap[a] > 0 && level[v] == level[u] + 1 {
                            path.push(a as u32);
                            u = v;
                            advanced = true;
                            break;
                        }
                        it[u] = self.next[a];
                    }
                    if !advanced {
                        if u == s {
                            break false;
                        }
                        // dead end: retreat and skip the arc that led here
                        level[u] = -1;
                        let a = path.pop().expect("non-source node has an incoming path arc") as usize;
                        u = self.to[a ^ 1] as usize;
                        it[u] = self.next[a];
                    }
                };
                if !found {
                    break;
                }
                let push = path
                    .iter()
                    .map(|&a| self.cap[a as usize] as i64)
                    .min()
                    .unwrap_or(0)
                    .min(limit - total);
                for &a in &path {
                    self.cap[a as usize] -= push as i32;
                    self.cap[(a ^ 1) as usize] += push as i32;
                }
                total += push;
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual graph.
    pub fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            let mut a = self.first[u];
            while a != NIL {
                let v = self.to[a as usize] as usize;
                if self.cap[a as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
                a = self.next[a as usize];
            }
        }
        seen
    }
}

pub struct ArcIter<'a> {
    net: &'a FlowNetwork,
    cur: u32,
}

impl Iterator for ArcIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.cur == NIL {
            return None;
        }
        let a = self.cur as usize;
        self.cur = self.net.next[a];
        Some(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_disjoint_routes() {
        // s=0, t=3, two parallel unit paths and a cross edge
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 1);
        net.add_edge(0, 2, 1);
        net.add_edge(1, 3, 1);
        net.add_edge(2, 3, 1);
        net.add_edge(1, 2, 1);
        assert_eq!(net.max_flow(0, 3, i64::MAX), 2);
        let reach = net.residual_reachable(0);
        assert!(reach[0] && !reach[3]);
    }

    #[test]
    fn undirected_edges_can_cancel() {
        // s-a-b-t plus s-b and a-t: the first path s-a-b-t blocks both
        // remaining routes unless the a-b edge is traversed backwards
        let (s, a, b, t) = (0, 1, 2, 3);
        let mut net = FlowNetwork::new(4);
        net.add_edge(a, b, 1);
        net.add_edge(s, a, 1);
        net.add_edge(b, t, 1);
        net.add_edge(s, b, 1);
        net.add_edge(a, t, 1);
        assert_eq!(net.max_flow(s, t, i64::MAX), 2);
    }

    #[test]
    fn limit_stops_early() {
        let mut net = FlowNetwork::new(2);
        for _ in 0..5 {
            net.add_edge(0, 1, 1);
        }
        assert_eq!(net.max_flow(0, 1, 3), 3);
    }
}
