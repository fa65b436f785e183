//! Circuit events, alternating four-arm events with defect budgets,
//! left-right crossings, correlation length and `p_n`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::crossing::{Bfs01, FAR};
use crate::error::{Error, Result};
use crate::estimate::{sample_map, EstimateWithCI};
use crate::lattice::{AnnulusSpec, BoxIndex, DualEdgeId, DualSite, EdgeId, Orientation, Site};
use crate::rng::{derive_seed, edge_uniform};
use crate::unionfind::{UnionFind, WindingUnionFind};
use crate::weights::{sample_weights, Region, WeightField};

const STREAM_ARMS: u64 = 0x6172_6d73;
const STREAM_CROSSING: u64 = 0x6372_6f73;

/// Two-sided 95% normal quantile used for every lower confidence bound.
pub const CONFIDENCE_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefectBudget {
    None,
    PerArm(u32),
    Total(u32),
}

impl DefectBudget {
    fn allows_defects(self) -> bool {
        matches!(self, DefectBudget::PerArm(k) | DefectBudget::Total(k) if k > 0)
    }

    pub fn label(self) -> String {
        match self {
            DefectBudget::None => "none".into(),
            DefectBudget::PerArm(k) => format!("per_arm:{k}"),
            DefectBudget::Total(m) => format!("total:{m}"),
        }
    }
}

/// Four arms from `∂S(inner)` to `∂S(outer)` around `center`, alternately
/// `p`-open and `q`-closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmEventSpec {
    pub p: f64,
    pub q: f64,
    pub inner: i32,
    pub outer: i32,
    pub center: Site,
    pub budget: DefectBudget,
    /// Rotations of the sector partition tried by the defected detector.
    pub rotations: u32,
}

impl ArmEventSpec {
    pub fn new(p: f64, q: f64, inner: i32, outer: i32) -> Result<Self> {
        let spec = ArmEventSpec {
            p,
            q,
            inner,
            outer,
            center: Site::ORIGIN,
            budget: DefectBudget::None,
            rotations: 8,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_budget(mut self, budget: DefectBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_center(mut self, center: Site) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name}={v} is not in [0, 1]")));
            }
        }
        if self.rotations == 0 {
            return Err(Error::domain("at least one sector rotation is needed"));
        }
        self.annulus().map(|_| ())
    }

    pub fn annulus(&self) -> Result<AnnulusSpec> {
        AnnulusSpec::centered(self.inner, self.outer, self.center)
    }

    /// Whether detection may miss realisations (defected budgets).
    pub fn is_lower_bound(&self) -> bool {
        self.budget.allows_defects()
    }
}

/// Weights of the edges of a box, addressed by canonical slot; `NaN` marks
/// edges outside the field.
struct BoxWeights {
    index: BoxIndex,
    w: Vec<f64>,
}

impl BoxWeights {
    fn on_annulus(wf: &WeightField, ann: &AnnulusSpec) -> Result<Self> {
        let index = BoxIndex::new(ann.center, ann.outer);
        let mut w = vec![f64::NAN; 2 * index.num_sites()];
        let mut missing = None;
        ann.for_each_edge(|e| match wf.weight(e) {
            Some(x) => w[index.edge_slot(e).expect("annulus edge in box")] = x,
            None => {
                missing.get_or_insert(e);
            }
        });
        match missing {
            Some(e) => Err(Error::domain(format!("weight field does not cover edge {e}"))),
            None => Ok(BoxWeights { index, w }),
        }
    }

    #[inline]
    fn get(&self, e: EdgeId) -> f64 {
        self.index.edge_slot(e).map_or(f64::NAN, |i| self.w[i])
    }
}

/// A point of the inner boundary cycle: a site of `∂S(inner)` or an edge
/// joining two such sites. Open arms leave from sites, closed dual arms
/// through ring edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InnerItem {
    Site(Site),
    Ring(EdgeId),
}

/// Sites and ring edges of the inner boundary in counterclockwise order.
pub(crate) fn inner_items(ann: &AnnulusSpec) -> Vec<InnerItem> {
    let c = ann.center;
    let s = ann.inner;
    let mut items: Vec<(f64, InnerItem)> = Vec::with_capacity(16 * s as usize);
    for x in -s..=s {
        for y in -s..=s {
            if x.abs().max(y.abs()) != s {
                continue;
            }
            let site = Site::new(c.x + x, c.y + y);
            items.push(((y as f64).atan2(x as f64), InnerItem::Site(site)));
            for (e, mx, my) in [
                (EdgeId::horizontal(site.x, site.y), x as f64 + 0.5, y as f64),
                (EdgeId::vertical(site.x, site.y), x as f64, y as f64 + 0.5),
            ] {
                if ann.on_inner_boundary(e.endpoints().1) {
                    items.push((my.atan2(mx), InnerItem::Ring(e)));
                }
            }
        }
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    items.into_iter().map(|(_, it)| it).collect()
}

/// Dual sites whose centres lie between the rings just inside `∂S(inner)`
/// and just outside `∂S(outer)`.
struct DualBox {
    index: BoxIndex,
    lo: i32,
    hi: i32,
}

impl DualBox {
    fn new(ann: &AnnulusSpec) -> Self {
        DualBox {
            index: BoxIndex::new(ann.center, ann.outer + 1),
            lo: 2 * ann.inner - 1,
            hi: 2 * ann.outer + 1,
        }
    }

    fn slot(&self, d: DualSite) -> Option<usize> {
        let r = d.doubled_sup_dist(self.index.center);
        if r < self.lo || r > self.hi {
            return None;
        }
        self.index.site_index(Site::new(d.x, d.y))
    }

    fn site(&self, slot: usize) -> DualSite {
        let s = self.index.site_at(slot);
        DualSite::new(s.x, s.y)
    }

    fn layer(&self, slot: usize) -> i32 {
        self.site(slot).doubled_sup_dist(self.index.center)
    }
}

fn in_annulus(ann: &AnnulusSpec, e: EdgeId) -> bool {
    let (a, b) = e.endpoints();
    ann.contains(a) && ann.contains(b)
}

/// Zero-defect four-arm detection from `open` primal clusters and `closed`
/// dual clusters of the annulus.
pub fn four_arm_exact(
    ann: &AnnulusSpec,
    open: impl Fn(EdgeId) -> bool,
    closed: impl Fn(EdgeId) -> bool,
) -> bool {
    let bx = BoxIndex::new(ann.center, ann.outer);
    let db = DualBox::new(ann);
    let mut puf = UnionFind::new(bx.num_sites());
    let mut duf = UnionFind::new(db.index.num_sites());
    // dual vertices beyond the rings stand for the boundaries themselves and
    // never join two clusters
    let mut d_in_at = Vec::new();
    let mut d_out_at = Vec::new();
    ann.for_each_edge(|e| {
        let (a, b) = e.endpoints();
        if open(e) {
            puf.union(bx.site_index(a).unwrap(), bx.site_index(b).unwrap());
        }
        if closed(e) {
            let (d1, d2) = DualEdgeId(e).endpoints();
            let (s1, s2) = (db.slot(d1).unwrap(), db.slot(d2).unwrap());
            match (db.layer(s1), db.layer(s2)) {
                (l, _) if l == db.lo => d_in_at.push(s2),
                (_, l) if l == db.lo => d_in_at.push(s1),
                (l, _) if l == db.hi => d_out_at.push(s2),
                (_, l) if l == db.hi => d_out_at.push(s1),
                _ => {
                    duf.union(s1, s2);
                }
            }
        }
    });
    let mut p_in = vec![false; bx.num_sites()];
    let mut p_out = vec![false; bx.num_sites()];
    for s in ann.sites() {
        let i = bx.site_index(s).unwrap();
        if ann.on_inner_boundary(s) {
            p_in[puf.find(i)] = true;
        } else if ann.on_outer_boundary(s) {
            p_out[puf.find(i)] = true;
        }
    }
    let mut d_in = vec![false; db.index.num_sites()];
    let mut d_out = vec![false; db.index.num_sites()];
    for &slot in &d_in_at {
        d_in[duf.find(slot)] = true;
    }
    for &slot in &d_out_at {
        d_out[duf.find(slot)] = true;
    }
    let mut seq: Vec<(bool, usize)> = Vec::new();
    for item in inner_items(ann) {
        match item {
            InnerItem::Site(s) => {
                let r = puf.find(bx.site_index(s).unwrap());
                if p_in[r] && p_out[r] {
                    seq.push((true, r));
                }
            }
            InnerItem::Ring(e) => {
                if closed(e) {
                    let (d1, d2) = DualEdgeId(e).endpoints();
                    let (s1, s2) = (db.slot(d1).unwrap(), db.slot(d2).unwrap());
                    let inside = if db.layer(s1) == db.lo { s2 } else { s1 };
                    let r = duf.find(inside);
                    if d_in[r] && d_out[r] {
                        seq.push((false, r));
                    }
                }
            }
        }
    }
    has_alternating_pattern(&seq)
}

/// Whether a cyclic labelled sequence contains open `a`, closed `b`,
/// open `c`, closed `d` in cyclic order with `a != c` and `b != d`.
fn has_alternating_pattern(seq: &[(bool, usize)]) -> bool {
    let mut comp: Vec<(bool, usize)> = Vec::with_capacity(seq.len());
    for &x in seq {
        if comp.last() != Some(&x) {
            comp.push(x);
        }
    }
    while comp.len() > 1 && comp.first() == comp.last() {
        comp.pop();
    }
    let l = comp.len();
    if l < 4 {
        return false;
    }
    for i in 0..l {
        if !comp[i].0 {
            continue;
        }
        for dj in 1..l {
            let j = (i + dj) % l;
            if comp[j].0 {
                continue;
            }
            for dk in dj + 1..l {
                let k = (i + dk) % l;
                if !comp[k].0 || comp[k].1 == comp[i].1 {
                    continue;
                }
                for dl in dk + 1..l {
                    let m = (i + dl) % l;
                    if !comp[m].0 && comp[m].1 != comp[j].1 {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Cheapest open and closed arm inside each of the four sectors starting at
/// angle `theta0`; the cost of an arm is its number of defects.
fn sector_arm_costs(
    ann: &AnnulusSpec,
    bw: &BoxWeights,
    p: f64,
    q: f64,
    theta0: f64,
) -> ([u32; 4], [u32; 4]) {
    let c = ann.center;
    let sector = |x: f64, y: f64| -> usize {
        let a = y.atan2(x);
        (((a - theta0).rem_euclid(TAU) / FRAC_PI_2) as usize).min(3)
    };

    let bx = &bw.index;
    let site_sector = |s: Site| sector((s.x - c.x) as f64, (s.y - c.y) as f64);
    let sources: Vec<usize> = ann
        .sites()
        .into_iter()
        .filter(|&s| ann.on_inner_boundary(s))
        .map(|s| bx.site_index(s).unwrap())
        .collect();
    let primal = Bfs01::run(bx.num_sites(), &sources, None, |i, buf| {
        let s = bx.site_at(i);
        let k = site_sector(s);
        for e in EdgeId::incident(s) {
            let t = e.other_endpoint(s);
            if in_annulus(ann, e) && site_sector(t) == k {
                buf.push((bx.site_index(t).unwrap(), !(bw.get(e) < p) as u8));
            }
        }
    });
    let mut open = [FAR; 4];
    for s in ann.sites() {
        if ann.on_outer_boundary(s) {
            let k = site_sector(s);
            open[k] = open[k].min(primal.dist[bx.site_index(s).unwrap()]);
        }
    }

    let db = DualBox::new(ann);
    let dual_sector = |d: DualSite| {
        let (x, y) = d.center();
        sector(x - c.x as f64, y - c.y as f64)
    };
    let dual_sources: Vec<usize> = (0..db.index.num_sites())
        .filter(|&i| db.layer(i) == db.lo)
        .collect();
    let dual = Bfs01::run(db.index.num_sites(), &dual_sources, None, |i, buf| {
        let d = db.site(i);
        let k = dual_sector(d);
        for nb in d.neighbors() {
            let Some(j) = db.slot(nb) else { continue };
            let e = DualEdgeId::between(d, nb).unwrap().primal();
            if in_annulus(ann, e) && dual_sector(nb) == k {
                buf.push((j, !(bw.get(e) >= q) as u8));
            }
        }
    });
    let mut closed = [FAR; 4];
    for i in 0..db.index.num_sites() {
        if db.layer(i) == db.hi {
            let k = dual_sector(db.site(i));
            closed[k] = closed[k].min(dual.dist[i]);
        }
    }
    (open, closed)
}

fn sector_detect(ann: &AnnulusSpec, bw: &BoxWeights, spec: &ArmEventSpec) -> bool {
    for r in 0..spec.rotations {
        let theta0 = r as f64 * FRAC_PI_2 / spec.rotations as f64;
        let (open, closed) = sector_arm_costs(ann, bw, spec.p, spec.q, theta0);
        for parity in 0..2 {
            let costs: Vec<u32> = (0..4)
                .map(|k| if (k + parity) % 2 == 0 { open[k] } else { closed[k] })
                .collect();
            if costs.contains(&FAR) {
                continue;
            }
            let ok = match spec.budget {
                DefectBudget::None => costs.iter().all(|&c| c == 0),
                DefectBudget::PerArm(k) => costs.iter().all(|&c| c <= k),
                DefectBudget::Total(m) => costs.iter().sum::<u32>() <= m,
            };
            if ok {
                return true;
            }
        }
    }
    false
}

/// Alternating four-arm event of `spec` in the field `wf`. Zero-defect
/// budgets are detected exactly; positive budgets add the sector search,
/// which can miss realisations but never reports a false one.
pub fn detect_four_arm(wf: &WeightField, spec: &ArmEventSpec) -> Result<bool> {
    spec.validate()?;
    let ann = spec.annulus()?;
    let bw = BoxWeights::on_annulus(wf, &ann)?;
    let (p, q) = (spec.p, spec.q);
    let exact = four_arm_exact(&ann, |e| bw.get(e) < p, |e| bw.get(e) >= q);
    if exact || !spec.budget.allows_defects() {
        return Ok(exact);
    }
    Ok(sector_detect(&ann, &bw, spec))
}

/// Monte Carlo frequency of the four-arm event over independent fields.
pub fn estimate_arm_probability(spec: &ArmEventSpec, samples: u64, seed: u64) -> Result<EstimateWithCI> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::domain("samples must be at least 1"));
    }
    let region = Region::Box {
        center: spec.center,
        radius: spec.outer,
    };
    let hits = sample_map(samples, |i| {
        let wf = sample_weights(region.clone(), derive_seed(seed, STREAM_ARMS, i));
        detect_four_arm(&wf, spec).expect("field covers the annulus")
    });
    Ok(EstimateWithCI::from_indicators(&hits, seed))
}

/// The event `A(n, p)`: a `p`-open circuit in `Ann(n/4, n/2)` whose open
/// cluster reaches `∂S(Λn)`.
pub fn detect_circuit_event_a(wf: &WeightField, n: i32, p: f64, lambda: f64) -> Result<bool> {
    let reach = a_event_reach(wf, n, lambda)?;
    let bx = BoxIndex::new(Site::ORIGIN, reach);
    let open = |e: EdgeId| wf.weight(e).is_some_and(|w| w < p);
    let circuit_sites = winding_sites(n, &bx, open)?;
    if circuit_sites.is_empty() {
        return Ok(false);
    }
    let mut uf = box_clusters(&bx, open);
    let far = far_roots(&bx, &mut uf);
    Ok(circuit_sites.into_iter().any(|i| far[uf.find(i)]))
}

/// `round(Λn)`, after checking the scale, the factor and the field's coverage.
pub(crate) fn a_event_reach(wf: &WeightField, n: i32, lambda: f64) -> Result<i32> {
    if n < 4 {
        return Err(Error::domain(format!("scale n={n} is below 4")));
    }
    let reach = (lambda * n as f64).round() as i32;
    if !(lambda.is_finite() && reach > n / 2) {
        return Err(Error::domain(format!("proxy factor {lambda} is too small")));
    }
    if !wf.region().covers_box(reach) {
        return Err(Error::domain(format!("weight field does not cover S({reach})")));
    }
    Ok(reach)
}

/// Box indices of the sites of `Ann(n/4, n/2)` on an open cluster of the
/// annulus that winds around the origin.
pub fn winding_sites(n: i32, bx: &BoxIndex, open: impl Fn(EdgeId) -> bool) -> Result<Vec<usize>> {
    let ann = AnnulusSpec::new(n / 4, n / 2)?;
    // ray from the origin along y = 1/2, x > 0, crossed by vertical edges (x, 0)-(x, 1)
    let mut wuf = WindingUnionFind::new(bx.num_sites());
    ann.for_each_edge(|e| {
        if open(e) {
            let (a, b) = e.endpoints();
            let delta = (e.orientation == Orientation::Vertical && e.site.y == 0 && e.site.x >= 1) as i32;
            wuf.union(bx.site_index(a).unwrap(), bx.site_index(b).unwrap(), delta);
        }
    });
    Ok(ann
        .sites()
        .into_iter()
        .map(|s| bx.site_index(s).unwrap())
        .filter(|&i| wuf.component_winds(i))
        .collect())
}

/// Open clusters of the box.
pub(crate) fn box_clusters(bx: &BoxIndex, open: impl Fn(EdgeId) -> bool) -> UnionFind {
    let mut uf = UnionFind::new(bx.num_sites());
    for i in 0..bx.num_sites() {
        let s = bx.site_at(i);
        for e in [EdgeId::horizontal(s.x, s.y), EdgeId::vertical(s.x, s.y)] {
            if let Some(j) = bx.site_index(e.endpoints().1) {
                if open(e) {
                    uf.union(i, j);
                }
            }
        }
    }
    uf
}

/// Per root: whether the cluster touches the boundary of the box.
pub(crate) fn far_roots(bx: &BoxIndex, uf: &mut UnionFind) -> Vec<bool> {
    let mut far = vec![false; bx.num_sites()];
    for i in 0..bx.num_sites() {
        if bx.site_at(i).sup_dist(bx.center) == bx.radius {
            far[uf.find(i)] = true;
        }
    }
    far
}

/// Left-right crossing of the rectangle `[0, w] x [0, h]` by `open` edges
/// with both endpoints in the rectangle.
pub fn lr_crossing(w: i32, h: i32, mut open: impl FnMut(EdgeId) -> bool) -> bool {
    let (mut uf, left, right) = rectangle_uf(w, h);
    let idx = |x: i32, y: i32| (x * (h + 1) + y) as usize;
    for x in 0..=w {
        for y in 0..=h {
            if x < w && open(EdgeId::horizontal(x, y)) {
                uf.union(idx(x, y), idx(x + 1, y));
            }
            if y < h && open(EdgeId::vertical(x, y)) {
                uf.union(idx(x, y), idx(x, y + 1));
            }
        }
    }
    uf.same(left, right)
}

fn rectangle_uf(w: i32, h: i32) -> (UnionFind, usize, usize) {
    let n = ((w + 1) * (h + 1)) as usize;
    let mut uf = UnionFind::new(n + 2);
    for y in 0..=h {
        uf.union(n, y as usize);
        uf.union(n + 1, (w * (h + 1) + y) as usize);
    }
    (uf, n, n + 1)
}

/// Smallest weight level at which the rectangle is crossed left to right
/// in the hashed field `seed`: crossed at `p` iff the value is below `p`.
pub fn crossing_threshold(w: i32, h: i32, seed: u64) -> f64 {
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity((2 * (w + 1) * (h + 1)) as usize);
    let idx = |x: i32, y: i32| (x * (h + 1) + y) as usize;
    for x in 0..=w {
        for y in 0..=h {
            if x < w {
                edges.push((edge_uniform(seed, EdgeId::horizontal(x, y)), idx(x, y), idx(x + 1, y)));
            }
            if y < h {
                edges.push((edge_uniform(seed, EdgeId::vertical(x, y)), idx(x, y), idx(x, y + 1)));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut uf, left, right) = rectangle_uf(w, h);
    for (wt, a, b) in edges {
        uf.union(a, b);
        if uf.same(left, right) {
            return wt;
        }
    }
    1.0
}

/// Frequency of `p`-open left-right crossings of `[0, w] x [0, h]`.
pub fn estimate_crossing_probability(w: i32, h: i32, p: f64, samples: u64, seed: u64) -> Result<EstimateWithCI> {
    if w < 1 || h < 0 {
        return Err(Error::domain(format!("rectangle {w}x{h} is empty")));
    }
    if samples == 0 {
        return Err(Error::domain("samples must be at least 1"));
    }
    let hits = sample_map(samples, |i| {
        let s = derive_seed(seed, STREAM_CROSSING, i);
        lr_crossing(w, h, |e| edge_uniform(s, e) < p)
    });
    Ok(EstimateWithCI::from_indicators(&hits, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoint {
    pub n: i32,
    pub estimate: EstimateWithCI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLengthEstimate {
    pub p: f64,
    pub delta: f64,
    /// First grid scale whose lower confidence bound reaches `1 - delta`.
    pub length: Option<i32>,
    pub curve: Vec<CrossingPoint>,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("delta={delta} is not in (0, 1)")))
    }
}

pub fn estimate_correlation_length(
    p: f64,
    delta: f64,
    n_grid: &[i32],
    samples: u64,
    seed: u64,
) -> Result<CorrelationLengthEstimate> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::domain(format!("p={p} is not in (1/2, 1]")));
    }
    check_delta(delta)?;
    if n_grid.is_empty() || n_grid.iter().any(|&n| n < 1) {
        return Err(Error::domain("scale grid must be nonempty with entries >= 1"));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let mut curve = Vec::with_capacity(grid.len());
    let mut length = None;
    for &n in &grid {
        let est = estimate_crossing_probability(n, n, p, samples, seed)?;
        if length.is_none() && est.lower(CONFIDENCE_Z) >= 1.0 - delta {
            length = Some(n);
        }
        curve.push(CrossingPoint { n, estimate: est });
    }
    Ok(CorrelationLengthEstimate {
        p,
        delta,
        length,
        curve,
    })
}

/// Scales tested when bisecting for `p_n`: powers of two below `n`, then `n`.
pub fn p_n_grid(n: i32) -> Vec<i32> {
    let mut grid: Vec<i32> = std::iter::successors(Some(2), |m| Some(m * 2))
        .take_while(|&m| m < n)
        .collect();
    grid.push(n);
    grid
}

/// `sup { p : L(p, delta) > n }` by bisection on `(1/2, 1)`, using the same
/// fields for every `p`.
pub fn estimate_p_n(n: i32, delta: f64, samples: u64, seed: u64, tol: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("scale n={n} is below 2")));
    }
    check_delta(delta)?;
    if samples == 0 || !(tol > 0.0) {
        return Err(Error::domain("samples and tolerance must be positive"));
    }
    let grid = p_n_grid(n);
    let thresholds: Vec<Vec<f64>> = grid
        .iter()
        .map(|&m| sample_map(samples, |i| crossing_threshold(m, m, derive_seed(seed, STREAM_CROSSING, i))))
        .collect();
    let longer_than_n = |p: f64| {
        thresholds.iter().all(|th| {
            let k = th.iter().filter(|&&t| t < p).count() as u64;
            EstimateWithCI::wilson(k, samples, seed).lower(CONFIDENCE_Z) < 1.0 - delta
        })
    };
    let (mut lo, mut hi) = (0.5, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if longer_than_n(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row per estimated arm probability.
pub fn write_arm_csv<W: Write>(mut out: W, rows: &[(ArmEventSpec, EstimateWithCI)]) -> Result<()> {
    writeln!(out, "p,q,budget,center_x,center_y,n,s,estimate,stderr,samples,seed")?;
    for (spec, est) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            spec.p,
            spec.q,
            spec.budget.label(),
            spec.center.x,
            spec.center.y,
            spec.outer,
            spec.inner,
            est.estimate,
            est.stderr,
            est.samples,
            est.seed
        )?;
    }
    Ok(())
}

/// One row per crossing estimate of each curve.
pub fn write_crossing_csv<W: Write>(mut out: W, curves: &[CorrelationLengthEstimate]) -> Result<()> {
    writeln!(out, "p,delta,n,estimate,stderr,samples,seed")?;
    for est in curves {
        for pt in &est.curve {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                est.p, est.delta, pt.n, pt.estimate.estimate, pt.estimate.stderr, pt.estimate.samples, pt.estimate.seed
            )?;
        }
    }
    Ok(())
}
