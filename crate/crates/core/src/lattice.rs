//! Geometry of the square lattice `Z^2` and its dual `(1/2, 1/2) + Z^2`.
//!
//! Boxes are sup-norm boxes `S(n) = [-n, n]^2`. Every primal edge is stored
//! in canonical form: the lexicographically smaller endpoint plus an
//! orientation. A dual edge is identified with the primal edge it crosses.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vertex of `Z^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    /// Sup-norm distance to the origin.
    pub fn sup_norm(self) -> i32 {
        self.x.abs().max(self.y.abs())
    }

    /// Sup-norm distance to `other`.
    pub fn sup_dist(self, other: Site) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn offset(self, dx: i32, dy: i32) -> Site {
        Site::new(self.x + dx, self.y + dy)
    }

    /// East, north, west, south.
    pub fn neighbors(self) -> [Site; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl Orientation {
    pub fn index(self) -> usize {
        match self {
            Orientation::Horizontal => 0,
            Orientation::Vertical => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Orientation::Horizontal => "H",
            Orientation::Vertical => "V",
        }
    }
}

/// A primal edge. `site` is the endpoint with the smaller `(x, y)`; the
/// other endpoint is `site + (1, 0)` or `site + (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId {
    pub site: Site,
    pub orientation: Orientation,
}

impl EdgeId {
    pub const fn horizontal(x: i32, y: i32) -> Self {
        EdgeId {
            site: Site::new(x, y),
            orientation: Orientation::Horizontal,
        }
    }

    pub const fn vertical(x: i32, y: i32) -> Self {
        EdgeId {
            site: Site::new(x, y),
            orientation: Orientation::Vertical,
        }
    }

    /// The edge joining two lattice neighbours, in canonical form.
    pub fn between(a: Site, b: Site) -> Option<EdgeId> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (hi.x - lo.x, hi.y - lo.y) {
            (1, 0) => Some(EdgeId::horizontal(lo.x, lo.y)),
            (0, 1) => Some(EdgeId::vertical(lo.x, lo.y)),
            _ => None,
        }
    }

    pub fn endpoints(self) -> (Site, Site) {
        let far = match self.orientation {
            Orientation::Horizontal => self.site.offset(1, 0),
            Orientation::Vertical => self.site.offset(0, 1),
        };
        (self.site, far)
    }

    pub fn other_endpoint(self, s: Site) -> Site {
        let (a, b) = self.endpoints();
        if s == a {
            b
        } else {
            a
        }
    }

    /// The four edges incident to `s`, in neighbour order (E, N, W, S).
    pub fn incident(s: Site) -> [EdgeId; 4] {
        [
            EdgeId::horizontal(s.x, s.y),
            EdgeId::vertical(s.x, s.y),
            EdgeId::horizontal(s.x - 1, s.y),
            EdgeId::vertical(s.x, s.y - 1),
        ]
    }

    pub fn dual(self) -> DualEdgeId {
        dual_edge(self)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.endpoints();
        write!(f, "{{{a}, {b}}}")
    }
}

/// A vertex of the dual lattice; `DualSite { x, y }` sits at `(x + 1/2, y + 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualSite {
    pub x: i32,
    pub y: i32,
}

impl DualSite {
    pub const fn new(x: i32, y: i32) -> Self {
        DualSite { x, y }
    }

    pub fn center(self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }

    /// Twice the sup-norm of the centre (always odd).
    pub fn doubled_sup_norm(self) -> i32 {
        (2 * self.x + 1).abs().max((2 * self.y + 1).abs())
    }

    /// Twice the sup-norm distance of the centre from a primal site.
    pub fn doubled_sup_dist(self, c: Site) -> i32 {
        (2 * (self.x - c.x) + 1)
            .abs()
            .max((2 * (self.y - c.y) + 1).abs())
    }

    pub fn neighbors(self) -> [DualSite; 4] {
        [
            DualSite::new(self.x + 1, self.y),
            DualSite::new(self.x, self.y + 1),
            DualSite::new(self.x - 1, self.y),
            DualSite::new(self.x, self.y - 1),
        ]
    }
}

/// A dual edge, represented by the primal edge it crosses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualEdgeId(pub EdgeId);

impl DualEdgeId {
    /// The primal edge crossed by this dual edge.
    pub fn primal(self) -> EdgeId {
        self.0
    }

    /// Dual of a dual edge: the crossing bijection applied again.
    pub fn dual(self) -> EdgeId {
        self.0
    }

    pub fn endpoints(self) -> (DualSite, DualSite) {
        let s = self.0.site;
        match self.0.orientation {
            Orientation::Horizontal => (DualSite::new(s.x, s.y - 1), DualSite::new(s.x, s.y)),
            Orientation::Vertical => (DualSite::new(s.x - 1, s.y), DualSite::new(s.x, s.y)),
        }
    }

    /// The dual edge joining two adjacent dual sites.
    pub fn between(a: DualSite, b: DualSite) -> Option<DualEdgeId> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (hi.x - lo.x, hi.y - lo.y) {
            // vertical dual edge crosses a horizontal primal edge
            (0, 1) => Some(DualEdgeId(EdgeId::horizontal(hi.x, hi.y))),
            (1, 0) => Some(DualEdgeId(EdgeId::vertical(hi.x, hi.y))),
            _ => None,
        }
    }
}

/// The unique dual edge crossing `e`.
pub fn dual_edge(e: EdgeId) -> DualEdgeId {
    DualEdgeId(e)
}

/// `Ann(inner, outer)` around `center`: sites with
/// `inner <= |s - center|_inf <= outer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub inner: i32,
    pub outer: i32,
    pub center: Site,
}

impl AnnulusSpec {
    pub fn new(inner: i32, outer: i32) -> Result<Self> {
        Self::centered(inner, outer, Site::ORIGIN)
    }

    pub fn centered(inner: i32, outer: i32, center: Site) -> Result<Self> {
        let ann = AnnulusSpec {
            inner,
            outer,
            center,
        };
        ann.validate()?;
        Ok(ann)
    }

    /// `Ann(floor(n/2), n)`.
    pub fn half(n: i32) -> Result<Self> {
        Self::new(n / 2, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner <= 0 || self.inner >= self.outer {
            return Err(Error::domain(format!(
                "annulus needs 0 < inner < outer, got inner={} outer={}",
                self.inner, self.outer
            )));
        }
        Ok(())
    }

    pub fn radius_of(&self, s: Site) -> i32 {
        s.sup_dist(self.center)
    }

    pub fn contains(&self, s: Site) -> bool {
        let r = self.radius_of(s);
        self.inner <= r && r <= self.outer
    }

    pub fn on_inner_boundary(&self, s: Site) -> bool {
        self.radius_of(s) == self.inner
    }

    pub fn on_outer_boundary(&self, s: Site) -> bool {
        self.radius_of(s) == self.outer
    }

    pub fn sites(&self) -> Vec<Site> {
        box_sites_around(self.center, self.outer)
            .into_iter()
            .filter(|&s| self.contains(s))
            .collect()
    }

    /// Edges with both endpoints in the annulus.
    pub fn edges(&self) -> EdgeSet {
        let mut out = Vec::new();
        self.for_each_edge(|e| out.push(e));
        EdgeSet::from_sorted_unique(out)
    }

    /// Visits the annulus edges in canonical order.
    pub fn for_each_edge(&self, mut f: impl FnMut(EdgeId)) {
        let c = self.center;
        for x in c.x - self.outer..=c.x + self.outer {
            for y in c.y - self.outer..=c.y + self.outer {
                let s = Site::new(x, y);
                if !self.contains(s) {
                    continue;
                }
                for e in [EdgeId::horizontal(x, y), EdgeId::vertical(x, y)] {
                    if self.contains(e.endpoints().1) {
                        f(e);
                    }
                }
            }
        }
    }

    /// Whether a dual site belongs to the dual annulus used for separating
    /// circuits: centres strictly between the two boundary rings.
    pub fn contains_dual(&self, d: DualSite) -> bool {
        let r2 = d.doubled_sup_dist(self.center);
        2 * self.inner < r2 && r2 < 2 * self.outer
    }
}

/// `S(n)`: the `(2n+1)^2` sites with `|s|_inf <= n`.
pub fn box_sites(n: i32) -> Vec<Site> {
    box_sites_around(Site::ORIGIN, n)
}

pub fn box_sites_around(center: Site, n: i32) -> Vec<Site> {
    if n < 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(((2 * n + 1) * (2 * n + 1)) as usize);
    for x in center.x - n..=center.x + n {
        for y in center.y - n..=center.y + n {
            out.push(Site::new(x, y));
        }
    }
    out
}

/// All edges with both endpoints in `sites`, each once, in canonical order.
pub fn region_edges<'a, I>(sites: I) -> EdgeSet
where
    I: IntoIterator<Item = &'a Site>,
{
    let set: HashSet<Site> = sites.into_iter().copied().collect();
    let mut out = Vec::new();
    for &s in &set {
        for e in [EdgeId::horizontal(s.x, s.y), EdgeId::vertical(s.x, s.y)] {
            if set.contains(&e.endpoints().1) {
                out.push(e);
            }
        }
    }
    EdgeSet::from_edges(out)
}

/// Edges of `S(n)` (both endpoints inside the box).
pub fn box_edges(n: i32) -> EdgeSet {
    let mut out = Vec::new();
    for x in -n..=n {
        for y in -n..=n {
            if x < n {
                out.push(EdgeId::horizontal(x, y));
            }
            if y < n {
                out.push(EdgeId::vertical(x, y));
            }
        }
    }
    EdgeSet::from_sorted_unique(out)
}

/// A finite subgraph `G = (V, E)` of the lattice.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subgraph {
    pub sites: HashSet<Site>,
    pub edges: HashSet<EdgeId>,
}

impl Subgraph {
    pub fn new<S, E>(sites: S, edges: E) -> Self
    where
        S: IntoIterator<Item = Site>,
        E: IntoIterator<Item = EdgeId>,
    {
        Subgraph {
            sites: sites.into_iter().collect(),
            edges: edges.into_iter().collect(),
        }
    }
}

/// `ΔG`: edges not in `E(G)` with at least one endpoint in `V(G)`.
pub fn graph_boundary(g: &Subgraph) -> EdgeSet {
    let mut out = Vec::new();
    for &s in &g.sites {
        for e in EdgeId::incident(s) {
            if !g.edges.contains(&e) {
                out.push(e);
            }
        }
    }
    EdgeSet::from_edges(out)
}

/// Flat indexing of the sites of a sup-norm box around a centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxIndex {
    pub center: Site,
    pub radius: i32,
    side: usize,
}

impl BoxIndex {
    pub fn new(center: Site, radius: i32) -> Self {
        BoxIndex {
            center,
            radius,
            side: (2 * radius + 1).max(0) as usize,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_sites(&self) -> usize {
        self.side * self.side
    }

    #[inline]
    pub fn site_index(&self, s: Site) -> Option<usize> {
        let dx = s.x - self.center.x + self.radius;
        let dy = s.y - self.center.y + self.radius;
        if dx < 0 || dy < 0 || dx as usize >= self.side || dy as usize >= self.side {
            None
        } else {
            Some(dx as usize * self.side + dy as usize)
        }
    }

    #[inline]
    pub fn site_at(&self, idx: usize) -> Site {
        let dx = (idx / self.side) as i32;
        let dy = (idx % self.side) as i32;
        Site::new(
            dx + self.center.x - self.radius,
            dy + self.center.y - self.radius,
        )
    }

    /// Slot for an edge stored at its canonical site; the far endpoint may
    /// lie outside the box.
    #[inline]
    pub fn edge_slot(&self, e: EdgeId) -> Option<usize> {
        self.site_index(e.site)
            .map(|i| 2 * i + e.orientation.index())
    }
}

const NO_SLOT: u32 = u32::MAX;

/// A set of edges in canonical order with O(1) membership and position lookup.
#[derive(Clone, PartialEq, Eq)]
pub struct EdgeSet {
    edges: Vec<EdgeId>,
    min: Site,
    width: usize,
    height: usize,
    slots: Vec<u32>,
}

impl fmt::Debug for EdgeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.edges.iter()).finish()
    }
}

impl Default for EdgeSet {
    fn default() -> Self {
        EdgeSet::from_sorted_unique(Vec::new())
    }
}

impl EdgeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_edges<I: IntoIterator<Item = EdgeId>>(edges: I) -> Self {
        let mut v: Vec<EdgeId> = edges.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self::from_sorted_unique(v)
    }

    fn from_sorted_unique(edges: Vec<EdgeId>) -> Self {
        if edges.is_empty() {
            return EdgeSet {
                edges,
                min: Site::ORIGIN,
                width: 0,
                height: 0,
                slots: Vec::new(),
            };
        }
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for e in &edges {
            x0 = x0.min(e.site.x);
            y0 = y0.min(e.site.y);
            x1 = x1.max(e.site.x);
            y1 = y1.max(e.site.y);
        }
        let width = (x1 - x0 + 1) as usize;
        let height = (y1 - y0 + 1) as usize;
        let mut slots = vec![NO_SLOT; 2 * width * height];
        let min = Site::new(x0, y0);
        for (i, e) in edges.iter().enumerate() {
            let cell = (e.site.x - x0) as usize * height + (e.site.y - y0) as usize;
            slots[2 * cell + e.orientation.index()] = i as u32;
        }
        EdgeSet {
            edges,
            min,
            width,
            height,
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Position of `e` in canonical order.
    #[inline]
    pub fn position(&self, e: EdgeId) -> Option<usize> {
        let dx = e.site.x - self.min.x;
        let dy = e.site.y - self.min.y;
        if dx < 0 || dy < 0 || dx as usize >= self.width || dy as usize >= self.height {
            return None;
        }
        let cell = dx as usize * self.height + dy as usize;
        match self.slots[2 * cell + e.orientation.index()] {
            NO_SLOT => None,
            i => Some(i as usize),
        }
    }

    #[inline]
    pub fn contains(&self, e: EdgeId) -> bool {
        self.position(e).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges.iter().copied()
    }

    pub fn as_slice(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.iter().all(|&e| other.contains(e))
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet::from_edges(self.iter().chain(other.iter()))
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet::from_sorted_unique(self.iter().filter(|&e| other.contains(e)).collect())
    }

    pub fn difference(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet::from_sorted_unique(self.iter().filter(|&e| !other.contains(e)).collect())
    }

    /// Sites touched by at least one edge.
    pub fn sites(&self) -> HashSet<Site> {
        let mut out = HashSet::new();
        for e in &self.edges {
            let (a, b) = e.endpoints();
            out.insert(a);
            out.insert(b);
        }
        out
    }
}

impl FromIterator<EdgeId> for EdgeSet {
    fn from_iter<T: IntoIterator<Item = EdgeId>>(iter: T) -> Self {
        EdgeSet::from_edges(iter)
    }
}

impl<'a> IntoIterator for &'a EdgeSet {
    type Item = &'a EdgeId;
    type IntoIter = std::slice::Iter<'a, EdgeId>;

    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}
