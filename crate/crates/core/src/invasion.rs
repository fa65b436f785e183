//! Invasion percolation: grow a cluster from the origin by repeatedly adding
//! the boundary edge of least weight.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{EdgeId, EdgeSet, Orientation, Site};
use crate::weights::{Configuration, WeightField};

/// When to truncate the (infinite) invasion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_steps: Option<u64>,
    /// Stop as soon as the cluster touches `∂S(exit_radius)`.
    pub exit_radius: Option<i32>,
}

impl StopRule {
    pub fn steps(k: u64) -> Self {
        StopRule {
            max_steps: Some(k),
            exit_radius: None,
        }
    }

    pub fn exit(r: i32) -> Self {
        StopRule {
            max_steps: None,
            exit_radius: Some(r),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_steps.is_none() && self.exit_radius.is_none() {
            return Err(Error::domain("stop rule needs max_steps or exit_radius"));
        }
        if self.exit_radius.is_some_and(|r| r < 0) {
            return Err(Error::domain("exit radius must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ReachedRadius(i32),
    StepBudget(u64),
    /// The boundary ran out of edges inside the weight field's region.
    ExhaustedRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvadedEdge {
    /// 1-based: the edge added to form `G_step`.
    pub step: u64,
    pub edge: EdgeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvasionResult {
    pub invaded: Vec<InvadedEdge>,
    /// Cluster sites in order of arrival, origin first.
    pub cluster: Vec<Site>,
    pub stop: StopReason,
}

impl InvasionResult {
    pub fn invaded_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.invaded.iter().map(|s| s.edge)
    }

    /// Largest sup-norm reached by the cluster.
    pub fn radius(&self) -> i32 {
        self.cluster.iter().map(|s| s.sup_norm()).max().unwrap_or(0)
    }

    /// Write `step,edge_x,edge_y,orientation,weight` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,edge_x,edge_y,orientation,weight")?;
        for s in &self.invaded {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.step,
                s.edge.site.x,
                s.edge.site.y,
                s.edge.orientation.label(),
                s.weight
            )?;
        }
        Ok(())
    }
}

/// Frontier entry ordered by weight, ties broken by canonical edge order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier(f64, EdgeId);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

const IN_CLUSTER: u8 = 1;
const H_SEEN: u8 = 2;
const V_SEEN: u8 = 4;

/// Per-site flags on a box around the origin that doubles as the cluster grows.
struct FlagGrid {
    radius: i32,
    side: usize,
    flags: Vec<u8>,
}

impl FlagGrid {
    fn new(radius: i32) -> Self {
        let side = (2 * radius + 1) as usize;
        FlagGrid {
            radius,
            side,
            flags: vec![0; side * side],
        }
    }

    #[inline]
    fn index(&self, s: Site) -> usize {
        (s.x + self.radius) as usize * self.side + (s.y + self.radius) as usize
    }

    fn ensure(&mut self, r: i32) {
        if r <= self.radius {
            return;
        }
        let mut grown = FlagGrid::new(r.max(2 * self.radius));
        for x in -self.radius..=self.radius {
            let src = self.index(Site::new(x, -self.radius));
            let dst = grown.index(Site::new(x, -self.radius));
            grown.flags[dst..dst + self.side].copy_from_slice(&self.flags[src..src + self.side]);
        }
        *self = grown;
    }

    #[inline]
    fn get(&self, s: Site) -> u8 {
        self.flags[self.index(s)]
    }

    #[inline]
    fn set(&mut self, s: Site, bit: u8) {
        let i = self.index(s);
        self.flags[i] |= bit;
    }
}

fn seen_bit(e: EdgeId) -> u8 {
    match e.orientation {
        Orientation::Horizontal => H_SEEN,
        Orientation::Vertical => V_SEEN,
    }
}

/// Run the invasion on `wf` until `stop` fires.
pub fn invade(wf: &WeightField, stop: StopRule) -> Result<InvasionResult> {
    stop.validate()?;
    if !EdgeId::incident(Site::ORIGIN)
        .iter()
        .any(|&e| wf.region().contains(e))
    {
        return Err(Error::domain("weight field has no edge at the origin"));
    }
    if let Some(r) = stop.exit_radius {
        if !wf.region().covers_box(r + 1) {
            return Err(Error::domain(format!(
                "weight field must cover S({}) for exit radius {r}",
                r + 1
            )));
        }
    }

    let initial = stop.exit_radius.map_or(32, |r| r + 2).min(64);
    let mut grid = FlagGrid::new(initial.max(2));
    let mut heap: BinaryHeap<Reverse<Frontier>> = BinaryHeap::new();
    let mut invaded = Vec::new();
    let mut cluster = vec![Site::ORIGIN];

    let add_site = |s: Site, grid: &mut FlagGrid, heap: &mut BinaryHeap<Reverse<Frontier>>| {
        grid.ensure(s.sup_norm() + 1);
        grid.set(s, IN_CLUSTER);
        for e in EdgeId::incident(s) {
            let bit = seen_bit(e);
            if grid.get(e.site) & bit != 0 {
                continue;
            }
            if let Some(w) = wf.weight(e) {
                grid.set(e.site, bit);
                heap.push(Reverse(Frontier(w, e)));
            }
        }
    };
    add_site(Site::ORIGIN, &mut grid, &mut heap);

    if stop.exit_radius == Some(0) {
        return Ok(InvasionResult {
            invaded,
            cluster,
            stop: StopReason::ReachedRadius(0),
        });
    }

    let mut step = 0u64;
    let reason = loop {
        if let Some(k) = stop.max_steps {
            if step >= k {
                break StopReason::StepBudget(k);
            }
        }
        let Some(Reverse(Frontier(w, e))) = heap.pop() else {
            break StopReason::ExhaustedRegion;
        };
        step += 1;
        invaded.push(InvadedEdge {
            step,
            edge: e,
            weight: w,
        });
        let (a, b) = e.endpoints();
        let fresh = if grid.get(a) & IN_CLUSTER == 0 {
            Some(a)
        } else if grid.get(b) & IN_CLUSTER == 0 {
            Some(b)
        } else {
            None
        };
        if let Some(s) = fresh {
            cluster.push(s);
            add_site(s, &mut grid, &mut heap);
            if let Some(r) = stop.exit_radius {
                if s.sup_norm() >= r {
                    break StopReason::ReachedRadius(r);
                }
            }
        }
    };

    Ok(InvasionResult {
        invaded,
        cluster,
        stop: reason,
    })
}

/// Invaded edges are open, everything else in `region` is closed.
pub fn invasion_configuration(res: &InvasionResult, region: Arc<EdgeSet>) -> Configuration {
    Configuration::from_open_edges(region, res.invaded_edges())
}

/// Largest weight among the last `tail_fraction` of invaded edges
/// (at least one edge).
pub fn invaded_weight_tail(res: &InvasionResult, tail_fraction: f64) -> Result<f64> {
    if res.invaded.is_empty() {
        return Err(Error::domain("invasion has no invaded edges"));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let len = res.invaded.len();
    let count = ((tail_fraction * len as f64).ceil() as usize).clamp(1, len);
    Ok(res.invaded[len - count..]
        .iter()
        .map(|s| s.weight)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{box_edges, graph_boundary, Subgraph};
    use crate::weights::{sample_weights, threshold_config, Region};
    use std::collections::HashSet;

    /// Field on S(3) with the hand-picked weights of the two-step example;
    /// every other edge gets 0.99.
    fn hand_field() -> WeightField {
        let region = box_edges(3);
        let mut table = Vec::new();
        let o = Site::ORIGIN;
        let d = Site::new(0, -1);
        let set = |a: Site, b: Site, w: f64, t: &mut Vec<(EdgeId, f64)>| {
            t.push((EdgeId::between(a, b).unwrap(), w));
        };
        set(o, o.offset(0, 1), 0.9, &mut table);
        set(o, d, 0.3, &mut table);
        set(o, o.offset(-1, 0), 0.7, &mut table);
        set(o, o.offset(1, 0), 0.5, &mut table);
        set(d, d.offset(0, -1), 0.8, &mut table);
        set(d, d.offset(-1, 0), 0.6, &mut table);
        set(d, d.offset(1, 0), 0.4, &mut table);
        let mut buf = Vec::new();
        // write an IPWF dump by hand so the field carries exactly these weights
        let wf = sample_weights(Region::boxed(3), 0);
        wf.dump(&mut buf).unwrap();
        let header = 4 + 2 + 1 + 16 + 8 + 4 + 8;
        for (i, e) in region.iter().enumerate() {
            let w = table.iter().find(|(f, _)| *f == e).map_or(0.99, |&(_, w)| w);
            buf[header + 8 * i..header + 8 * i + 8].copy_from_slice(&w.to_le_bytes());
        }
        WeightField::load(buf.as_slice()).unwrap()
    }

    #[test]
    fn first_step_takes_the_argmin() {
        let res = invade(&hand_field(), StopRule::steps(1)).unwrap();
        assert_eq!(res.invaded.len(), 1);
        assert_eq!(res.invaded[0].edge, EdgeId::vertical(0, -1));
        assert_eq!(res.invaded[0].weight, 0.3);
    }

    #[test]
    fn second_step_from_hand_trace() {
        let res = invade(&hand_field(), StopRule::steps(2)).unwrap();
        let d = Site::new(0, -1);
        assert_eq!(res.invaded[1].edge, EdgeId::between(d, d.offset(1, 0)).unwrap());
        assert_eq!(res.invaded[1].weight, 0.4);
        assert_eq!(res.stop, StopReason::StepBudget(2));
        let cfg = invasion_configuration(&res, Arc::new(box_edges(2)));
        assert_eq!(cfg.num_open(), 2);
    }

    #[test]
    fn zero_steps_is_the_origin() {
        let wf = sample_weights(Region::boxed(4), 1);
        let res = invade(&wf, StopRule::steps(0)).unwrap();
        assert!(res.invaded.is_empty());
        assert_eq!(res.cluster, vec![Site::ORIGIN]);
        let cfg = invasion_configuration(&res, Arc::new(box_edges(2)));
        assert_eq!(cfg.num_open(), 0);
        assert!(invaded_weight_tail(&res, 1.0).is_err());
    }

    #[test]
    fn region_disjoint_from_cluster_is_closed() {
        let wf = sample_weights(Region::boxed(20), 4);
        let res = invade(&wf, StopRule::steps(3)).unwrap();
        let far: EdgeSet = (15..18).map(|x| EdgeId::horizontal(x, 15)).collect();
        assert_eq!(invasion_configuration(&res, Arc::new(far)).num_open(), 0);
    }

    #[test]
    fn stop_rule_needs_a_bound() {
        let wf = sample_weights(Region::boxed(4), 1);
        let rule = StopRule {
            max_steps: None,
            exit_radius: None,
        };
        assert!(invade(&wf, rule).is_err());
    }

    #[test]
    fn small_region_is_rejected() {
        let wf = sample_weights(Region::boxed(5), 1);
        assert!(invade(&wf, StopRule::exit(5)).is_err());
        assert!(invade(&wf, StopRule::exit(4)).is_ok());
    }

    #[test]
    fn exhausts_a_tiny_region() {
        let wf = sample_weights(Region::boxed(1), 9);
        let res = invade(&wf, StopRule::steps(100)).unwrap();
        assert_eq!(res.stop, StopReason::ExhaustedRegion);
        assert_eq!(res.invaded.len(), 12);
        assert_eq!(res.cluster.len(), 9);
    }

    #[test]
    fn reaches_the_exit_radius() {
        let wf = sample_weights(Region::boxed(31), 5);
        let res = invade(&wf, StopRule::exit(30)).unwrap();
        assert_eq!(res.stop, StopReason::ReachedRadius(30));
        assert_eq!(res.radius(), 30);
        assert_eq!(res.cluster.last().unwrap().sup_norm(), 30);
    }

    #[test]
    fn greedy_rule_matches_naive_replay() {
        // Replay each step against a full scan of ΔG_i.
        for seed in 0..3 {
            let wf = sample_weights(Region::boxed(1_000), seed);
            let res = invade(&wf, StopRule::steps(2_000)).unwrap();
            let mut g = Subgraph::new([Site::ORIGIN], []);
            for step in &res.invaded {
                let boundary = graph_boundary(&g);
                let best = boundary
                    .iter()
                    .map(|e| (wf.weight(e).unwrap(), e))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .unwrap();
                assert_eq!((step.weight, step.edge), best);
                g.edges.insert(step.edge);
                let (a, b) = step.edge.endpoints();
                g.sites.insert(a);
                g.sites.insert(b);
            }
        }
    }

    #[test]
    fn cluster_is_connected_and_edges_unique() {
        let wf = sample_weights(Region::boxed(500), 77);
        let res = invade(&wf, StopRule::steps(10_000)).unwrap();
        let mut sites: HashSet<Site> = HashSet::from([Site::ORIGIN]);
        let mut edges = HashSet::new();
        for s in &res.invaded {
            let (a, b) = s.edge.endpoints();
            assert!(sites.contains(&a) || sites.contains(&b));
            sites.insert(a);
            sites.insert(b);
            assert!(edges.insert(s.edge));
        }
        assert_eq!(sites.len(), res.cluster.len());
    }

    #[test]
    fn coupling_containment() {
        let wf = sample_weights(Region::boxed(60), 3);
        let res = invade(&wf, StopRule::exit(50)).unwrap();
        let p = 0.5;
        let thr = threshold_config(&wf, p);
        for s in &res.invaded {
            if s.weight < p {
                assert!(thr.is_open(s.edge));
            }
        }
    }

    #[test]
    fn tail_is_monotone_in_fraction() {
        let wf = sample_weights(Region::boxed(1_000), 12);
        let res = invade(&wf, StopRule::steps(5_000)).unwrap();
        let t10 = invaded_weight_tail(&res, 0.1).unwrap();
        let t50 = invaded_weight_tail(&res, 0.5).unwrap();
        assert!(t10 <= t50);
        let single = invade(&wf, StopRule::steps(1)).unwrap();
        assert_eq!(invaded_weight_tail(&single, 1.0).unwrap(), single.invaded[0].weight);
    }

    #[test]
    fn grid_growth_matches_preallocated() {
        // an exit-radius run allocates up front; a step run grows the grid
        let wf = sample_weights(Region::boxed(300), 21);
        let a = invade(&wf, StopRule::exit(150)).unwrap();
        let b = invade(&wf, StopRule::steps(a.invaded.len() as u64)).unwrap();
        assert_eq!(a.invaded, b.invaded);
    }

    #[test]
    fn csv_export() {
        let res = invade(&hand_field(), StopRule::steps(2)).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,edge_x,edge_y,orientation,weight\n1,0,-1,V,0.3\n2,0,-1,H,0.4\n");
    }
}
