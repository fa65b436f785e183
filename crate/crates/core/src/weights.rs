//! I.i.d. uniform edge weights, regional resampling, and the threshold
//! coupling to Bernoulli bond percolation.
//!
//! A [`WeightField`] never stores its weights: the weight of an edge is a
//! counter-based hash of `(seed, edge)`, optionally overridden by resampling
//! patches that each carry their own seed. This keeps fields cheap to clone,
//! makes regional resampling order independent, and lets the invasion engine
//! draw weights only where the cluster actually goes.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{box_edges, EdgeId, EdgeSet, Orientation, Site};
use crate::rng::edge_uniform;

/// The edge set a field is defined on.
#[derive(Debug, Clone)]
pub enum Region {
    /// Every edge with both endpoints in the sup-norm box of `radius` around `center`.
    Box { center: Site, radius: i32 },
    Edges(Arc<EdgeSet>),
}

impl Region {
    pub fn boxed(radius: i32) -> Self {
        Region::Box {
            center: Site::ORIGIN,
            radius,
        }
    }

    #[inline]
    pub fn contains(&self, e: EdgeId) -> bool {
        match self {
            Region::Box { center, radius } => {
                let (a, b) = e.endpoints();
                a.sup_dist(*center) <= *radius && b.sup_dist(*center) <= *radius
            }
            Region::Edges(set) => set.contains(e),
        }
    }

    /// Whether every edge of `S(r)` around the origin lies in the region.
    pub fn covers_box(&self, r: i32) -> bool {
        match self {
            Region::Box { center, radius } => center.sup_norm() + r <= *radius,
            Region::Edges(set) => box_edges(r).iter().all(|e| set.contains(e)),
        }
    }

    /// The region's edges in canonical order.
    pub fn edges(&self) -> EdgeSet {
        match self {
            Region::Box { center, radius } => {
                let mut out = Vec::new();
                for x in center.x - radius..=center.x + radius {
                    for y in center.y - radius..=center.y + radius {
                        if x < center.x + radius {
                            out.push(EdgeId::horizontal(x, y));
                        }
                        if y < center.y + radius {
                            out.push(EdgeId::vertical(x, y));
                        }
                    }
                }
                EdgeSet::from_edges(out)
            }
            Region::Edges(set) => (**set).clone(),
        }
    }
}

impl From<EdgeSet> for Region {
    fn from(set: EdgeSet) -> Self {
        Region::Edges(Arc::new(set))
    }
}

impl From<Arc<EdgeSet>> for Region {
    fn from(set: Arc<EdgeSet>) -> Self {
        Region::Edges(set)
    }
}

#[derive(Debug, Clone)]
enum Base {
    Hashed,
    Table {
        edges: Arc<EdgeSet>,
        weights: Arc<Vec<f64>>,
    },
}

/// Fresh weights from `seed` on `edges`. With `ranks`, only edges whose rank
/// is below `limit` are overridden.
#[derive(Debug, Clone)]
struct Patch {
    edges: Arc<EdgeSet>,
    seed: u64,
    ranks: Option<(Arc<Vec<u32>>, u32)>,
}

impl Patch {
    #[inline]
    fn applies(&self, e: EdgeId) -> bool {
        match self.edges.position(e) {
            None => false,
            Some(i) => match &self.ranks {
                None => true,
                Some((ranks, limit)) => ranks[i] < *limit,
            },
        }
    }
}

/// Weights `τ_e ∈ (0, 1)` on a region, deterministic in `(region, seed)`.
#[derive(Debug, Clone)]
pub struct WeightField {
    region: Region,
    seed: u64,
    base: Base,
    patches: Vec<Patch>,
    generation: u32,
}

/// Draw a fresh field on `region`.
pub fn sample_weights(region: impl Into<Region>, seed: u64) -> WeightField {
    WeightField {
        region: region.into(),
        seed,
        base: Base::Hashed,
        patches: Vec::new(),
        generation: 0,
    }
}

/// Redraw the weights on `sub` from `seed2`; everything else is kept bit for bit.
pub fn resample_region(wf: &WeightField, sub: &EdgeSet, seed2: u64) -> Result<WeightField> {
    wf.resampled(Arc::new(sub.clone()), seed2)
}

/// Open iff `τ_e < p`.
pub fn threshold_config(wf: &WeightField, p: f64) -> Configuration {
    wf.threshold_on(Arc::new(wf.region.edges()), p)
}

impl WeightField {
    /// A field with explicit weights, listed in the canonical order of `edges`.
    pub fn from_table(edges: Arc<EdgeSet>, weights: Vec<f64>) -> Result<WeightField> {
        if weights.len() != edges.len() {
            return Err(Error::domain(format!(
                "{} weights for {} edges",
                weights.len(),
                edges.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
            return Err(Error::domain(format!("weight {w} outside (0, 1)")));
        }
        Ok(WeightField {
            region: Region::Edges(edges.clone()),
            seed: 0,
            base: Base::Table {
                edges,
                weights: Arc::new(weights),
            },
            patches: Vec::new(),
            generation: 0,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of resampling steps applied since the field was drawn.
    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// `τ_e`, or `None` outside the region.
    #[inline]
    pub fn weight(&self, e: EdgeId) -> Option<f64> {
        if !self.region.contains(e) {
            return None;
        }
        Some(self.weight_in_region(e))
    }

    #[inline]
    fn weight_in_region(&self, e: EdgeId) -> f64 {
        for patch in self.patches.iter().rev() {
            if patch.applies(e) {
                return edge_uniform(patch.seed, e);
            }
        }
        match &self.base {
            Base::Hashed => edge_uniform(self.seed, e),
            Base::Table { edges, weights } => {
                weights[edges.position(e).expect("table covers its region")]
            }
        }
    }

    /// `τ_e < p`; edges outside the region are closed.
    #[inline]
    pub fn is_open(&self, e: EdgeId, p: f64) -> bool {
        self.weight(e).is_some_and(|w| w < p)
    }

    pub fn resampled(&self, sub: Arc<EdgeSet>, seed2: u64) -> Result<WeightField> {
        self.check_subset(&sub)?;
        Ok(self.with_patch(Patch {
            edges: sub,
            seed: seed2,
            ranks: None,
        }))
    }

    /// Resample only the edges of `sub` whose rank is below `limit`.
    pub fn resampled_ranked(
        &self,
        sub: Arc<EdgeSet>,
        ranks: Arc<Vec<u32>>,
        limit: u32,
        seed2: u64,
    ) -> Result<WeightField> {
        if ranks.len() != sub.len() {
            return Err(Error::domain("rank vector does not match the resampled set"));
        }
        self.check_subset(&sub)?;
        Ok(self.with_patch(Patch {
            edges: sub,
            seed: seed2,
            ranks: Some((ranks, limit)),
        }))
    }

    fn check_subset(&self, sub: &EdgeSet) -> Result<()> {
        if let Some(e) = sub.iter().find(|&e| !self.region.contains(e)) {
            return Err(Error::domain(format!(
                "resampled edge {e} lies outside the field's region"
            )));
        }
        Ok(())
    }

    fn with_patch(&self, patch: Patch) -> WeightField {
        let mut out = self.clone();
        if !patch.edges.is_empty() {
            out.patches.push(patch);
        }
        out.generation += 1;
        out
    }

    /// Threshold configuration restricted to `edges` (all assumed in the region).
    pub fn threshold_on(&self, edges: Arc<EdgeSet>, p: f64) -> Configuration {
        let open = edges
            .iter()
            .map(|e| self.weight(e).is_some_and(|w| w < p))
            .collect();
        Configuration { region: edges, open }
    }

    /// Write the field in the `IPWF` binary format.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        let edges = self.region.edges();
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        match &self.region {
            Region::Box { center, radius } => {
                out.write_all(&[0u8])?;
                for v in [
                    center.x - radius,
                    center.y - radius,
                    center.x + radius,
                    center.y + radius,
                ] {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            Region::Edges(_) => {
                out.write_all(&[1u8])?;
                let (mut x0, mut y0, mut x1, mut y1) = (0, 0, 0, 0);
                if let (Some(first), Some(_)) = (edges.iter().next(), edges.iter().last()) {
                    (x0, y0, x1, y1) = (first.site.x, first.site.y, first.site.x, first.site.y);
                    for e in edges.iter() {
                        let (_, b) = e.endpoints();
                        x0 = x0.min(e.site.x);
                        y0 = y0.min(e.site.y);
                        x1 = x1.max(b.x);
                        y1 = y1.max(b.y);
                    }
                }
                for v in [x0, y0, x1, y1] {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.generation.to_le_bytes())?;
        out.write_all(&(edges.len() as u64).to_le_bytes())?;
        if matches!(self.region, Region::Edges(_)) {
            for e in edges.iter() {
                out.write_all(&e.site.x.to_le_bytes())?;
                out.write_all(&e.site.y.to_le_bytes())?;
                out.write_all(&[e.orientation.index() as u8])?;
            }
        }
        for e in edges.iter() {
            out.write_all(&self.weight_in_region(e).to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a field written by [`WeightField::dump`]. The loaded field keeps
    /// the stored weights verbatim.
    pub fn load<R: Read>(mut input: R) -> Result<WeightField> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut input)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let [kind] = read_array::<1, _>(&mut input)?;
        let mut bounds = [0i32; 4];
        for b in &mut bounds {
            *b = i32::from_le_bytes(read_array(&mut input)?);
        }
        let seed = u64::from_le_bytes(read_array(&mut input)?);
        let generation = u32::from_le_bytes(read_array(&mut input)?);
        let count = u64::from_le_bytes(read_array(&mut input)?) as usize;
        let (region, edges) = match kind {
            0 => {
                let [x0, y0, x1, y1] = bounds;
                if x1 - x0 != y1 - y0 || (x1 - x0) % 2 != 0 {
                    return Err(Error::Format("box bounds are not a centred square".into()));
                }
                let radius = (x1 - x0) / 2;
                let region = Region::Box {
                    center: Site::new(x0 + radius, y0 + radius),
                    radius,
                };
                let edges = region.edges();
                (region, edges)
            }
            1 => {
                let mut list = Vec::with_capacity(count);
                for _ in 0..count {
                    let x = i32::from_le_bytes(read_array(&mut input)?);
                    let y = i32::from_le_bytes(read_array(&mut input)?);
                    let [o] = read_array::<1, _>(&mut input)?;
                    let orientation = match o {
                        0 => Orientation::Horizontal,
                        1 => Orientation::Vertical,
                        _ => return Err(Error::Format(format!("bad orientation byte {o}"))),
                    };
                    list.push(EdgeId {
                        site: Site::new(x, y),
                        orientation,
                    });
                }
                let set = EdgeSet::from_edges(list);
                (Region::Edges(Arc::new(set.clone())), set)
            }
            k => return Err(Error::Format(format!("unknown region kind {k}"))),
        };
        if edges.len() != count {
            return Err(Error::Format(format!(
                "header announces {count} edges, region has {}",
                edges.len()
            )));
        }
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let w = f64::from_le_bytes(read_array(&mut input)?);
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::Format(format!("weight {w} outside (0, 1)")));
            }
            weights.push(w);
        }
        Ok(WeightField {
            region,
            seed,
            base: Base::Table {
                edges: Arc::new(edges),
                weights: Arc::new(weights),
            },
            patches: Vec::new(),
            generation,
        })
    }
}

const MAGIC: &[u8; 4] = b"IPWF";
const FORMAT_VERSION: u16 = 1;

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeStatus {
    Open,
    Closed,
}

/// Open/closed status for every edge of a region. The dual configuration
/// is implicit: a dual edge has the status of the primal edge it crosses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    region: Arc<EdgeSet>,
    open: Vec<bool>,
}

impl Configuration {
    pub fn all_closed(region: Arc<EdgeSet>) -> Self {
        let open = vec![false; region.len()];
        Configuration { region, open }
    }

    pub fn all_open(region: Arc<EdgeSet>) -> Self {
        let open = vec![true; region.len()];
        Configuration { region, open }
    }

    pub fn from_fn(region: Arc<EdgeSet>, mut f: impl FnMut(EdgeId) -> bool) -> Self {
        let open = region.iter().map(&mut f).collect();
        Configuration { region, open }
    }

    pub fn from_open_edges<I: IntoIterator<Item = EdgeId>>(region: Arc<EdgeSet>, open_edges: I) -> Self {
        let mut cfg = Configuration::all_closed(region);
        for e in open_edges {
            if let Some(i) = cfg.region.position(e) {
                cfg.open[i] = true;
            }
        }
        cfg
    }

    pub fn region(&self) -> &Arc<EdgeSet> {
        &self.region
    }

    pub fn status(&self, e: EdgeId) -> Option<EdgeStatus> {
        self.region.position(e).map(|i| {
            if self.open[i] {
                EdgeStatus::Open
            } else {
                EdgeStatus::Closed
            }
        })
    }

    /// Edges outside the region count as closed.
    #[inline]
    pub fn is_open(&self, e: EdgeId) -> bool {
        self.region.position(e).is_some_and(|i| self.open[i])
    }

    pub fn set(&mut self, e: EdgeId, status: EdgeStatus) -> Result<()> {
        let i = self
            .region
            .position(e)
            .ok_or_else(|| Error::domain(format!("edge {e} outside the configuration's region")))?;
        self.open[i] = status == EdgeStatus::Open;
        Ok(())
    }

    pub fn with_status(&self, e: EdgeId, status: EdgeStatus) -> Result<Configuration> {
        let mut out = self.clone();
        out.set(e, status)?;
        Ok(out)
    }

    pub fn open_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.region
            .iter()
            .zip(&self.open)
            .filter_map(|(e, &o)| o.then_some(e))
    }

    pub fn num_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    /// Edges of the region whose status differs between the two configurations.
    pub fn differing_edges(&self, other: &Configuration) -> Vec<EdgeId> {
        self.region
            .iter()
            .filter(|&e| self.is_open(e) != other.is_open(e))
            .collect()
    }
}
