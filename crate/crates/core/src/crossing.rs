//! Disjoint open crossings of an annulus and the dual circuits with defects
//! that bound them.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::flow::{FlowNetwork, INF_CAP};
use crate::lattice::{AnnulusSpec, BoxIndex, DualEdgeId, DualSite, EdgeId, EdgeSet, Site};
use crate::weights::{Configuration, EdgeStatus};

const NONE: u32 = u32::MAX;
pub(crate) const FAR: u32 = u32::MAX;

/// Maximal packing of edge-disjoint open paths from the inner to the outer
/// boundary of an annulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossingCount {
    pub value: u32,
    /// Edge-disjoint open paths, each listed from its inner-boundary end.
    pub witness: Vec<Vec<EdgeId>>,
    /// Annulus edges leaving the residual source side of a maximum flow.
    pub min_cut: EdgeSet,
}

/// A closed simple dual circuit around the centre of an annulus together
/// with the open primal edges it crosses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectCircuit {
    /// Cyclic vertex sequence; `edges[i]` joins `sites[i]` and `sites[i + 1]`.
    pub sites: Vec<DualSite>,
    pub edges: Vec<DualEdgeId>,
    /// Primal edges of defected dual edges, in circuit order.
    pub defects: Vec<EdgeId>,
}

impl DefectCircuit {
    pub fn defect_count(&self) -> u32 {
        self.defects.len() as u32
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains_dual_of(&self, e: EdgeId) -> bool {
        self.edges.iter().any(|d| d.primal() == e)
    }

    /// Signed number of turns around `center`.
    pub fn winding(&self, center: Site) -> i32 {
        let k = self.sites.len();
        (0..k)
            .map(|i| step_winding(self.sites[i], self.sites[(i + 1) % k], center))
            .sum()
    }

    /// Closed, simple, inside the dual annulus, and winding once.
    pub fn is_separating(&self, ann: &AnnulusSpec) -> bool {
        let k = self.sites.len();
        if k < 4 || self.edges.len() != k {
            return false;
        }
        let mut seen = std::collections::HashSet::new();
        for i in 0..k {
            let (a, b) = (self.sites[i], self.sites[(i + 1) % k]);
            if !ann.contains_dual(a) || !seen.insert(a) {
                return false;
            }
            if DualEdgeId::between(a, b) != Some(self.edges[i]) {
                return false;
            }
        }
        self.winding(ann.center).abs() == 1
    }
}

/// Contribution of one dual step to the winding number: signed crossings of
/// the primal ray from `center` in the positive x direction.
fn step_winding(a: DualSite, b: DualSite, center: Site) -> i32 {
    if a.x != b.x || a.x < center.x {
        return 0;
    }
    match (a.y - center.y, b.y - center.y) {
        (-1, 0) => 1,
        (0, -1) => -1,
        _ => 0,
    }
}

/// Edges with both ends on the same boundary ring play no part in crossings.
fn is_ring_edge(ann: &AnnulusSpec, e: EdgeId) -> bool {
    let (p, q) = e.endpoints();
    let (rp, rq) = (ann.radius_of(p), ann.radius_of(q));
    rp == rq && (rp == ann.inner || rp == ann.outer)
}

fn missing_edge(e: EdgeId) -> Error {
    Error::domain(format!("configuration does not cover annulus edge {e}"))
}

pub fn count_disjoint_crossings(config: &Configuration, ann: &AnnulusSpec) -> Result<CrossingCount> {
    ann.validate()?;
    let bx = BoxIndex::new(ann.center, ann.outer);
    let n = bx.num_sites();
    let (src, sink) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    let mut pair_edge: Vec<Option<EdgeId>> = Vec::new();
    let mut candidates = Vec::new();
    let mut missing = None;
    let idx = |s: Site| bx.site_index(s).expect("annulus site inside its box");

    ann.for_each_edge(|e| {
        let Some(status) = config.status(e) else {
            missing.get_or_insert(e);
            return;
        };
        if is_ring_edge(ann, e) {
            return;
        }
        candidates.push(e);
        if status == EdgeStatus::Open {
            let (p, q) = e.endpoints();
            let a = net.add_edge(idx(p), idx(q), 1);
            pair_edge.resize(a / 2 + 1, None);
            pair_edge[a / 2] = Some(e);
        }
    });
    if let Some(e) = missing {
        return Err(missing_edge(e));
    }
    for s in ann.sites() {
        if ann.on_inner_boundary(s) {
            net.add_arc(src, idx(s), INF_CAP);
        } else if ann.on_outer_boundary(s) {
            net.add_arc(idx(s), sink, INF_CAP);
        }
    }

    let value = net.max_flow(src, sink, i64::MAX) as u32;

    let mut rem: Vec<i32> = (0..net.num_arcs()).map(|a| net.net_flow(a).max(0)).collect();
    let mut witness = Vec::with_capacity(value as usize);
    for _ in 0..value {
        let mut nodes = vec![src];
        let mut arcs: Vec<usize> = Vec::new();
        let mut pos: HashMap<usize, usize> = HashMap::from([(src, 0)]);
        let mut u = src;
        while u != sink {
            let a = net
                .arcs_from(u)
                .find(|&a| rem[a] > 0)
                .expect("flow conservation");
            rem[a] -= 1;
            let v = net.arc_head(a);
            if let Some(&p) = pos.get(&v) {
                for w in nodes.drain(p + 1..) {
                    pos.remove(&w);
                }
                arcs.truncate(p);
            } else {
                pos.insert(v, nodes.len());
                nodes.push(v);
                arcs.push(a);
            }
            u = v;
        }
        // nodes = src, sites..., sink; keep the stretch after the last inner
        // visit up to the first outer visit
        let sites: Vec<Site> = nodes[1..nodes.len() - 1].iter().map(|&i| bx.site_at(i)).collect();
        let start = sites
            .iter()
            .rposition(|&s| ann.on_inner_boundary(s))
            .expect("path leaves the inner boundary");
        let end = start
            + sites[start..]
                .iter()
                .position(|&s| ann.on_outer_boundary(s))
                .expect("path reaches the outer boundary");
        let path: Vec<EdgeId> = arcs[start + 1..end + 1]
            .iter()
            .map(|&a| pair_edge[a / 2].expect("site-to-site arc"))
            .collect();
        witness.push(path);
    }

    let reach = net.residual_reachable(src);
    let min_cut = candidates
        .into_iter()
        .filter(|e| {
            let (p, q) = e.endpoints();
            reach[idx(p)] != reach[idx(q)]
        })
        .collect();

    Ok(CrossingCount {
        value,
        witness,
        min_cut,
    })
}

/// The dual annulus as a 0/1-weighted graph: weight 1 across open edges.
struct DualAnnulus {
    center: Site,
    inner_layer: i32,
    outer_layer: i32,
    index: BoxIndex,
    id: Vec<u32>,
    sites: Vec<DualSite>,
    adj: Vec<Vec<(u32, u8)>>,
}

impl DualAnnulus {
    fn new(config: &Configuration, ann: &AnnulusSpec) -> Result<Self> {
        let index = BoxIndex::new(ann.center, ann.outer);
        let mut id = vec![NONE; index.num_sites()];
        let mut sites = Vec::new();
        for slot in 0..index.num_sites() {
            let p = index.site_at(slot);
            let d = DualSite::new(p.x, p.y);
            if ann.contains_dual(d) {
                id[slot] = sites.len() as u32;
                sites.push(d);
            }
        }
        let mut g = DualAnnulus {
            center: ann.center,
            inner_layer: 2 * ann.inner + 1,
            outer_layer: 2 * ann.outer - 1,
            index,
            id,
            sites,
            adj: Vec::new(),
        };
        let mut adj = Vec::with_capacity(g.sites.len());
        for &d in &g.sites {
            let mut row = Vec::with_capacity(4);
            for nb in d.neighbors() {
                if let Some(v) = g.vertex(nb) {
                    let e = DualEdgeId::between(d, nb).expect("adjacent").primal();
                    let open = match config.status(e) {
                        Some(st) => st == EdgeStatus::Open,
                        None => return Err(missing_edge(e)),
                    };
                    row.push((v as u32, open as u8));
                }
            }
            adj.push(row);
        }
        g.adj = adj;
        Ok(g)
    }

    fn len(&self) -> usize {
        self.sites.len()
    }

    fn vertex(&self, d: DualSite) -> Option<usize> {
        let slot = self.index.site_index(Site::new(d.x, d.y))?;
        match self.id[slot] {
            NONE => None,
            v => Some(v as usize),
        }
    }

    fn layer(&self, v: usize) -> i32 {
        self.sites[v].doubled_sup_dist(self.center)
    }

    fn winding(&self, a: usize, b: usize) -> i32 {
        step_winding(self.sites[a], self.sites[b], self.center)
    }

    fn angle(&self, from: usize, to: usize) -> f64 {
        let (a, b) = (self.sites[from], self.sites[to]);
        ((b.y - a.y) as f64).atan2((b.x - a.x) as f64)
    }

    /// Direction from a dual vertex towards (`sign = -1`) or away from
    /// (`sign = 1`) the centre.
    fn radial_angle(&self, v: usize, sign: f64) -> f64 {
        let (x, y) = self.sites[v].center();
        let (cx, cy) = (self.center.x as f64, self.center.y as f64);
        (sign * (y - cy)).atan2(sign * (x - cx))
    }

    fn circuit(&self, cycle: &[usize]) -> DefectCircuit {
        let k = cycle.len();
        let mut sites: Vec<DualSite> = cycle.iter().map(|&v| self.sites[v]).collect();
        let wind: i32 = (0..k).map(|i| self.winding(cycle[i], cycle[(i + 1) % k])).sum();
        if wind < 0 {
            sites.reverse();
        }
        let edges: Vec<DualEdgeId> = (0..k)
            .map(|i| DualEdgeId::between(sites[i], sites[(i + 1) % k]).expect("adjacent"))
            .collect();
        let defects = edges
            .iter()
            .filter(|d| {
                let (a, b) = (self.vertex(d.endpoints().0), self.vertex(d.endpoints().1));
                let (a, b) = (a.expect("on circuit"), b.expect("on circuit"));
                self.adj[a].iter().any(|&(v, c)| v as usize == b && c == 1)
            })
            .map(|d| d.primal())
            .collect();
        DefectCircuit {
            sites,
            edges,
            defects,
        }
    }
}

pub(crate) struct Bfs01 {
    pub(crate) dist: Vec<u32>,
    pub(crate) parent: Vec<u32>,
}

impl Bfs01 {
    /// 0/1-weighted shortest paths from `sources`; stops once `target` is settled.
    pub(crate) fn run(
        n: usize,
        sources: &[usize],
        target: Option<usize>,
        mut nbrs: impl FnMut(usize, &mut Vec<(usize, u8)>),
    ) -> Self {
        let mut dist = vec![FAR; n];
        let mut parent = vec![NONE; n];
        let mut done = vec![false; n];
        let mut dq = VecDeque::new();
        for &s in sources {
            dist[s] = 0;
            dq.push_back(s);
        }
        let mut buf = Vec::with_capacity(8);
        while let Some(u) = dq.pop_front() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if Some(u) == target {
                break;
            }
            buf.clear();
            nbrs(u, &mut buf);
            for &(v, c) in &buf {
                let nd = dist[u] + c as u32;
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = u as u32;
                    if c == 0 {
                        dq.push_front(v);
                    } else {
                        dq.push_back(v);
                    }
                }
            }
        }
        Bfs01 { dist, parent }
    }

    fn path_to(&self, t: usize) -> Vec<usize> {
        let mut path = vec![t];
        let mut u = t;
        while self.parent[u] != NONE {
            u = self.parent[u] as usize;
            path.push(u);
        }
        path.reverse();
        path
    }
}

/// Splits a closed walk (`walk[0] == walk[last]`) into simple loops.
fn decompose_closed_walk(walk: &[usize]) -> Vec<Vec<usize>> {
    let mut loops = Vec::new();
    let mut stack = vec![walk[0]];
    let mut pos: HashMap<usize, usize> = HashMap::from([(walk[0], 0)]);
    for &x in &walk[1..] {
        if let Some(&p) = pos.get(&x) {
            loops.push(stack[p..].to_vec());
            for y in stack.drain(p + 1..) {
                pos.remove(&y);
            }
        } else {
            pos.insert(x, stack.len());
            stack.push(x);
        }
    }
    loops
}

fn loop_winding(g: &DualAnnulus, cycle: &[usize]) -> i32 {
    let k = cycle.len();
    (0..k).map(|i| g.winding(cycle[i], cycle[(i + 1) % k])).sum()
}

fn ccw(from: f64, to: f64) -> f64 {
    (to - from).rem_euclid(TAU)
}

/// Separating dual circuit with the fewest open crossings.
///
/// The dual annulus is cut along a cheapest path from its inner to its outer
/// layer; every vertex of that seam is split into a left and a right copy and
/// the answer is the cheapest left-to-right connection over all seam vertices.
pub fn min_defect_circuit(config: &Configuration, ann: &AnnulusSpec) -> Result<DefectCircuit> {
    ann.validate()?;
    let g = DualAnnulus::new(config, ann)?;
    let nd = g.len();
    let edges_of = |u: usize, buf: &mut Vec<(usize, u8)>| {
        buf.extend(g.adj[u].iter().map(|&(v, c)| (v as usize, c)));
    };

    let sources: Vec<usize> = (0..nd).filter(|&v| g.layer(v) == g.inner_layer).collect();
    let reach = Bfs01::run(nd, &sources, None, edges_of);
    let target = (0..nd)
        .filter(|&v| g.layer(v) == g.outer_layer)
        .min_by_key(|&v| (reach.dist[v], v))
        .expect("outer layer is nonempty");
    let mut seam = reach.path_to(target);
    let start = seam
        .iter()
        .rposition(|&v| g.layer(v) == g.inner_layer)
        .expect("seam starts on the inner layer");
    seam.drain(..start);
    let end = seam
        .iter()
        .position(|&v| g.layer(v) == g.outer_layer)
        .expect("seam ends on the outer layer");
    seam.truncate(end + 1);

    let k = seam.len();
    let mut seam_pos = vec![NONE; nd];
    for (i, &v) in seam.iter().enumerate() {
        seam_pos[v] = i as u32;
    }
    let pred: Vec<f64> = (0..k)
        .map(|i| {
            if i == 0 {
                g.radial_angle(seam[0], -1.0)
            } else {
                g.angle(seam[i], seam[i - 1])
            }
        })
        .collect();
    let succ: Vec<f64> = (0..k)
        .map(|i| {
            if i + 1 == k {
                g.radial_angle(seam[i], 1.0)
            } else {
                g.angle(seam[i], seam[i + 1])
            }
        })
        .collect();
    let is_left = |i: usize, theta: f64| ccw(succ[i], theta) < ccw(succ[i], pred[i]);
    // left copies keep the original index; right copies follow
    let copy = |v: usize, toward: usize| -> usize {
        let i = seam_pos[v] as usize;
        if is_left(i, g.angle(v, toward)) {
            v
        } else {
            nd + i
        }
    };

    let mut cut: Vec<Vec<(usize, u8)>> = vec![Vec::new(); nd + k];
    let mut link = |a: usize, b: usize, c: u8| {
        cut[a].push((b, c));
        cut[b].push((a, c));
    };
    for u in 0..nd {
        for &(w, c) in &g.adj[u] {
            let w = w as usize;
            if w < u {
                continue;
            }
            match (seam_pos[u], seam_pos[w]) {
                (NONE, NONE) => link(u, w, c),
                (_, NONE) => link(copy(u, w), w, c),
                (NONE, _) => link(u, copy(w, u), c),
                (i, j) if i.abs_diff(j) == 1 => {
                    link(u, w, c);
                    link(nd + i as usize, nd + j as usize, c);
                }
                _ => link(copy(u, w), copy(w, u), c),
            }
        }
    }

    let mut best: Option<(u32, Vec<usize>)> = None;
    for (i, &v) in seam.iter().enumerate() {
        let t = nd + i;
        let run = Bfs01::run(nd + k, &[v], Some(t), |u, buf| buf.extend_from_slice(&cut[u]));
        let d = run.dist[t];
        if d != FAR && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, run.path_to(t)));
        }
    }
    let (_, path) = best.expect("a separating circuit always exists");
    let walk: Vec<usize> = path
        .into_iter()
        .map(|x| if x < nd { x } else { seam[x - nd] })
        .collect();
    let cycle = decompose_closed_walk(&walk)
        .into_iter()
        .find(|l| loop_winding(&g, l) != 0)
        .expect("a closed walk of winding one contains a winding loop");
    Ok(g.circuit(&cycle))
}

fn through_edge_endpoints(
    config: &Configuration,
    ann: &AnnulusSpec,
    e: EdgeId,
) -> Result<(DualAnnulus, Option<(usize, usize)>)> {
    ann.validate()?;
    let (p, q) = e.endpoints();
    if !ann.contains(p) || !ann.contains(q) {
        return Err(Error::domain(format!("edge {e} is not inside the annulus")));
    }
    let g = DualAnnulus::new(config, ann)?;
    let (d1, d2) = DualEdgeId(e).endpoints();
    let ends = g.vertex(d1).zip(g.vertex(d2));
    Ok((g, ends))
}

/// Cheapest separating dual circuit through the dual of `e`, if one has at
/// most `budget` defects. The crossing of `e` itself counts when `e` is open.
pub fn circuit_through_edge(
    config: &Configuration,
    ann: &AnnulusSpec,
    e: EdgeId,
    budget: u32,
) -> Result<Option<DefectCircuit>> {
    let (g, ends) = through_edge_endpoints(config, ann, e)?;
    let Some((u, w)) = ends else {
        return Ok(None);
    };
    let cost_e = config.is_open(e) as u32;
    if cost_e > budget {
        return Ok(None);
    }
    // walks from w back to u avoiding e*, lifted by winding number
    let kmax = ann.outer - ann.inner + 1;
    let width = (2 * kmax + 1) as usize;
    let state = |v: usize, k: i32| v * width + (k + kmax) as usize;
    let delta = g.winding(u, w);
    let targets: Vec<usize> = [1 - delta, -1 - delta]
        .into_iter()
        .filter(|k| k.abs() <= kmax)
        .map(|k| state(u, k))
        .collect();
    let run = Bfs01::run(g.len() * width, &[state(w, 0)], None, |s, buf| {
        let (v, k) = (s / width, (s % width) as i32 - kmax);
        for &(x, c) in &g.adj[v] {
            let x = x as usize;
            if (v == u && x == w) || (v == w && x == u) {
                continue;
            }
            let k2 = k + g.winding(v, x);
            if k2.abs() <= kmax {
                buf.push((state(x, k2), c));
            }
        }
    });
    let Some(&t) = targets.iter().min_by_key(|&&t| (run.dist[t], t)) else {
        return Ok(None);
    };
    let d = run.dist[t];
    if d == FAR || d + cost_e > budget {
        return Ok(None);
    }
    let mut walk = vec![u];
    walk.extend(run.path_to(t).into_iter().map(|s| s / width));
    let containing = decompose_closed_walk(&walk)
        .into_iter()
        .find(|l| l.len() >= 2 && l[0] == u && l[1] == w);
    if let Some(l) = containing {
        if loop_winding(&g, &l) != 0 {
            return Ok(Some(g.circuit(&l)));
        }
    }
    let best = exhaustive_through(&g, u, w, cost_e, budget, 50_000_000)?;
    Ok(best.map(|l| g.circuit(&l)))
}

/// Branch-and-bound over simple circuits through the dual of `e`; refuses
/// once the search tree grows past a fixed size.
pub fn exhaustive_circuit_through_edge(
    config: &Configuration,
    ann: &AnnulusSpec,
    e: EdgeId,
    budget: u32,
) -> Result<Option<DefectCircuit>> {
    let (g, ends) = through_edge_endpoints(config, ann, e)?;
    let Some((u, w)) = ends else {
        return Ok(None);
    };
    let cost_e = config.is_open(e) as u32;
    if cost_e > budget {
        return Ok(None);
    }
    let best = exhaustive_through(&g, u, w, cost_e, budget, 50_000_000)?;
    Ok(best.map(|l| g.circuit(&l)))
}

fn exhaustive_through(
    g: &DualAnnulus,
    u: usize,
    w: usize,
    cost_e: u32,
    budget: u32,
    node_cap: u64,
) -> Result<Option<Vec<usize>>> {
    let skip = |v: usize, x: usize| (v == u && x == w) || (v == w && x == u);
    let lb = Bfs01::run(g.len(), &[u], None, |v, buf| {
        for &(x, c) in &g.adj[v] {
            if !skip(v, x as usize) {
                buf.push((x as usize, c));
            }
        }
    })
    .dist;
    let delta = g.winding(u, w);
    let mut bound = budget as i64;
    let mut best: Option<Vec<usize>> = None;
    let mut on_path = vec![false; g.len()];
    on_path[u] = true;
    on_path[w] = true;
    // frames: (vertex, next neighbour slot, cost so far, winding so far)
    let mut frames: Vec<(usize, usize, i64, i32)> = vec![(w, 0, cost_e as i64, delta)];
    let mut expanded = 0u64;
    while let Some(top) = frames.last_mut() {
        let (v, slot, cost, wind) = *top;
        if slot == g.adj[v].len() {
            on_path[v] = v == u;
            frames.pop();
            continue;
        }
        top.1 += 1;
        let (x, c) = g.adj[v][slot];
        let x = x as usize;
        if skip(v, x) {
            continue;
        }
        let cost2 = cost + c as i64;
        let wind2 = wind + g.winding(v, x);
        if x == u {
            if wind2.abs() == 1 && cost2 <= bound {
                let mut cycle = vec![u];
                cycle.extend(frames.iter().map(|f| f.0));
                bound = cost2 - 1;
                best = Some(cycle);
                if bound < 0 {
                    break;
                }
            }
            continue;
        }
        if on_path[x] || lb[x] == FAR || cost2 + lb[x] as i64 > bound {
            continue;
        }
        expanded += 1;
        if expanded > node_cap {
            return Err(Error::Refused(format!(
                "circuit search exceeded {node_cap} expansions"
            )));
        }
        on_path[x] = true;
        frames.push((x, 0, cost2, wind2));
    }
    Ok(best)
}

/// Exhaustive maximum packing of edge-disjoint open crossings; refuses when
/// more than 128 open edges can take part.
pub fn brute_force_crossings(config: &Configuration, ann: &AnnulusSpec) -> Result<u32> {
    ann.validate()?;
    let mut open = Vec::new();
    let mut missing = None;
    ann.for_each_edge(|e| match config.status(e) {
        None => {
            missing.get_or_insert(e);
        }
        Some(EdgeStatus::Open) if !is_ring_edge(ann, e) => open.push(e),
        Some(_) => {}
    });
    if let Some(e) = missing {
        return Err(missing_edge(e));
    }
    if open.len() > 128 {
        return Err(Error::Refused(format!(
            "{} open edges exceed the exhaustive limit of 128",
            open.len()
        )));
    }
    let mut adj: HashMap<Site, Vec<(Site, u128)>> = HashMap::new();
    for (i, e) in open.iter().enumerate() {
        let (p, q) = e.endpoints();
        adj.entry(p).or_default().push((q, 1 << i));
        adj.entry(q).or_default().push((p, 1 << i));
    }

    // every crossing uses exactly one edge at the inner boundary: its first
    let mut firsts: Vec<(f64, usize, Site)> = Vec::new();
    for (i, e) in open.iter().enumerate() {
        let (p, q) = e.endpoints();
        let start = match (ann.on_inner_boundary(p), ann.on_inner_boundary(q)) {
            (true, false) => q,
            (false, true) => p,
            _ => continue,
        };
        firsts.push(((start.y as f64).atan2(start.x as f64), i, start));
    }
    firsts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut by_first: Vec<Vec<u128>> = Vec::new();
    for &(_, i, start) in &firsts {
        let mut paths = Vec::new();
        let mut visited = vec![start];
        extend_paths(ann, &adj, start, 1 << i, &mut visited, &mut paths);
        by_first.push(minimal_masks(paths));
    }
    let mut future = vec![0u128; by_first.len() + 1];
    for i in (0..by_first.len()).rev() {
        future[i] = future[i + 1] | by_first[i].iter().fold(0, |a, &m| a | m);
    }

    let mut exits = 0u128;
    for (i, e) in open.iter().enumerate() {
        let (p, q) = e.endpoints();
        if ann.on_outer_boundary(p) || ann.on_outer_boundary(q) {
            exits |= 1 << i;
        }
    }

    let mut packer = Packer {
        by_first: &by_first,
        future: &future,
        exits,
        memo: HashMap::new(),
    };
    let best = packer.search(0, 0, 0);
    if packer.memo.len() > MEMO_LIMIT {
        return Err(Error::Refused(format!(
            "{} packing states exceed the exhaustive limit",
            packer.memo.len()
        )));
    }
    Ok(best)
}

const MEMO_LIMIT: usize = 1 << 22;

/// Drop duplicates and masks containing another mask.
fn minimal_masks(mut masks: Vec<u128>) -> Vec<u128> {
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks.dedup();
    let mut kept: Vec<u128> = Vec::new();
    for m in masks {
        if !kept.iter().any(|&k| k & m == k) {
            kept.push(m);
        }
    }
    kept
}

fn extend_paths(
    ann: &AnnulusSpec,
    adj: &HashMap<Site, Vec<(Site, u128)>>,
    at: Site,
    mask: u128,
    visited: &mut Vec<Site>,
    out: &mut Vec<u128>,
) {
    if ann.on_outer_boundary(at) {
        out.push(mask);
        return;
    }
    for &(next, bit) in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
        if mask & bit != 0 || ann.on_inner_boundary(next) || visited.contains(&next) {
            continue;
        }
        visited.push(next);
        extend_paths(ann, adj, next, mask | bit, visited, out);
        visited.pop();
    }
}

/// Branch and bound over the first edges in angular order. `search`
/// returns the exact optimum when it is at least `need`, otherwise an upper
/// bound below `need`.
struct Packer<'a> {
    by_first: &'a [Vec<u128>],
    future: &'a [u128],
    exits: u128,
    memo: HashMap<(usize, u128), (u32, bool)>,
}

impl Packer<'_> {
    fn bound(&self, i: usize, used: u128) -> u32 {
        let mut groups = 0;
        let mut free = 0u128;
        for paths in &self.by_first[i..] {
            let mut any = false;
            for &p in paths {
                if p & used == 0 {
                    any = true;
                    free |= p;
                }
            }
            groups += any as u32;
        }
        groups.min((free & self.exits).count_ones())
    }

    fn search(&mut self, i: usize, used: u128, need: u32) -> u32 {
        if i == self.by_first.len() || self.memo.len() > MEMO_LIMIT {
            return 0;
        }
        let used = used & self.future[i];
        match self.memo.get(&(i, used)) {
            Some(&(v, true)) => return v,
            Some(&(v, false)) if v < need => return v,
            _ => {}
        }
        let ub = self.bound(i, used);
        if ub < need {
            self.memo.insert((i, used), (ub, false));
            return ub;
        }
        let mut best = 0;
        for k in 0..self.by_first[i].len() {
            let p = self.by_first[i][k];
            if p & used == 0 {
                let target = need.max(best + 1).saturating_sub(1);
                best = best.max(1 + self.search(i + 1, used | p, target));
                if best >= ub {
                    break;
                }
            }
        }
        if best < ub {
            best = best.max(self.search(i + 1, used, need.max(best + 1)));
        }
        self.memo.insert((i, used), (best, best >= need));
        best
    }
}
