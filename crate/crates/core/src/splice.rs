//! Tranche resampling around `∂S(3n/4)`: the strip `T_ε`, its ball cover,
//! paired and ball-by-ball resampling, and the estimators built on them.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arms::{
    a_event_reach, box_clusters, detect_circuit_event_a, detect_four_arm, estimate_p_n, far_roots,
    winding_sites, ArmEventSpec,
};
use crate::crossing::count_disjoint_crossings;
use crate::error::{Error, Result};
use crate::estimate::{sample_map, EstimateWithCI};
use crate::invasion::{invade, invasion_configuration, StopRule};
use crate::lattice::{AnnulusSpec, BoxIndex, EdgeId, EdgeSet, Site};
use crate::rng::derive_seed;
use crate::unionfind::UnionFind;
use crate::weights::{sample_weights, Configuration, Region, WeightField};

const STREAM_FIELD: u64 = 0x6669_656c;
const STREAM_RESAMPLE: u64 = 0x7265_736d;
const STREAM_INNER: u64 = 0x696e_6e72;
const STREAM_PN: u64 = 0x706e_6573;

/// The strip of edges within `half_width` of `∂S(radius)`, clipped to
/// `Ann(n/2, n)`, with its cover by `K_ε` balls.
#[derive(Debug, Clone)]
pub struct TrancheSpec {
    pub n: i32,
    pub epsilon: f64,
    /// Centerline `⌊3n/4⌋`.
    pub radius: i32,
    pub half_width: i32,
    pub ball_radius: i32,
    /// Ball centres in resampling order, counterclockwise from `(radius, 0)`.
    pub centers: Vec<Site>,
    pub edges: Arc<EdgeSet>,
    /// Per edge of `edges`: index of the first ball containing it.
    pub ranks: Arc<Vec<u32>>,
    /// Set when `εn < 1`: the strip is the single ring `∂S(radius)`.
    pub flagged: bool,
}

impl TrancheSpec {
    /// A tranche with no edges and no balls.
    pub fn empty(n: i32) -> Self {
        TrancheSpec {
            n,
            epsilon: 0.0,
            radius: 3 * n / 4,
            half_width: 0,
            ball_radius: 0,
            centers: Vec::new(),
            edges: Arc::new(EdgeSet::empty()),
            ranks: Arc::new(Vec::new()),
            flagged: false,
        }
    }

    pub fn num_balls(&self) -> usize {
        self.centers.len()
    }

    /// Both endpoints within `ball_radius` of centre `j`.
    pub fn ball_contains(&self, j: usize, e: EdgeId) -> bool {
        let (a, b) = e.endpoints();
        let c = self.centers[j];
        a.sup_dist(c) <= self.ball_radius && b.sup_dist(c) <= self.ball_radius
    }

    /// Tranche edges inside ball `j`.
    pub fn ball_edges(&self, j: usize) -> EdgeSet {
        EdgeSet::from_edges(self.edges.iter().filter(|&e| self.ball_contains(j, e)))
    }

    /// Every tranche edge lies in some ball.
    pub fn is_covered(&self) -> bool {
        let k = self.num_balls() as u32;
        self.ranks.iter().all(|&r| r < k)
    }
}

/// Point at arc length `t` along `∂S(r)`, counterclockwise from `(r, 0)`.
fn perimeter_point(r: i32, t: i32) -> Site {
    let t = t.rem_euclid(8 * r);
    if t <= r {
        Site::new(r, t)
    } else if t <= 3 * r {
        Site::new(r - (t - r), r)
    } else if t <= 5 * r {
        Site::new(-r, r - (t - 3 * r))
    } else if t <= 7 * r {
        Site::new(-r + (t - 5 * r), -r)
    } else {
        Site::new(r, -r + (t - 7 * r))
    }
}

/// `K_ε = ⌈6/ε⌉`.
pub fn ball_count(epsilon: f64) -> usize {
    (6.0 / epsilon - 1e-9).ceil() as usize
}

pub fn build_tranche(n: i32, epsilon: f64) -> Result<TrancheSpec> {
    if n < 8 {
        return Err(Error::domain(format!("scale n={n} is below 8")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let en = epsilon * n as f64;
    let flagged = en < 1.0;
    let radius = 3 * n / 4;
    let half_width = if flagged { 0 } else { ((en / 2.0).round() as i32).max(1) };
    let ball_radius = (en.round() as i32).max(1);
    let k = ball_count(epsilon);
    let centers: Vec<Site> = (0..k)
        .map(|j| {
            let t = (j as f64 * 8.0 * radius as f64 / k as f64).round() as i32;
            perimeter_point(radius, t)
        })
        .collect();

    let lo = (radius - half_width).max(n / 2);
    let hi = (radius + half_width).min(n);
    let in_strip = |s: Site| (lo..=hi).contains(&s.sup_norm());
    let mut edges = Vec::new();
    AnnulusSpec::new(lo, hi.max(lo + 1))?.for_each_edge(|e| {
        let (a, b) = e.endpoints();
        if in_strip(a) && in_strip(b) {
            edges.push(e);
        }
    });
    let edges = EdgeSet::from_edges(edges);
    let mut tranche = TrancheSpec {
        n,
        epsilon,
        radius,
        half_width,
        ball_radius,
        centers,
        edges: Arc::new(edges),
        ranks: Arc::new(Vec::new()),
        flagged,
    };
    // rounded centres can leave gaps when εn is small; grow the balls until they cover
    let ranks = loop {
        let ranks: Vec<u32> = tranche
            .edges
            .iter()
            .map(|e| (0..k).find(|&j| tranche.ball_contains(j, e)).unwrap_or(k) as u32)
            .collect();
        if ranks.iter().all(|&r| (r as usize) < k) {
            break ranks;
        }
        tranche.ball_radius += 1;
    };
    tranche.ranks = Arc::new(ranks);
    Ok(tranche)
}

/// How the configuration whose crossings are counted is derived from weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DerivationMode {
    /// `τ_e < 1/2`.
    Threshold,
    /// Invaded edges of the invasion stopped at `∂S(round(λn))`.
    Invasion { lambda: f64 },
}

impl DerivationMode {
    pub fn label(&self) -> &'static str {
        match self {
            DerivationMode::Threshold => "threshold",
            DerivationMode::Invasion { .. } => "invasion",
        }
    }
}

/// A derived configuration on `Ann(n/2, n)`, with the invaded edges in
/// invasion mode.
#[derive(Debug, Clone)]
pub struct Derived {
    pub config: Configuration,
    pub invaded: Option<EdgeSet>,
}

/// Scale, derivation mode and field region shared by every run at one `n`.
#[derive(Debug, Clone)]
pub struct SpliceSetup {
    pub n: i32,
    pub mode: DerivationMode,
    pub field_radius: i32,
    annulus: AnnulusSpec,
    annulus_edges: Arc<EdgeSet>,
}

impl SpliceSetup {
    pub fn new(n: i32, mode: DerivationMode) -> Result<Self> {
        if n < 8 {
            return Err(Error::domain(format!("scale n={n} is below 8")));
        }
        let field_radius = match mode {
            DerivationMode::Threshold => n,
            DerivationMode::Invasion { lambda } => {
                if !(lambda.is_finite() && lambda >= 1.0) {
                    return Err(Error::domain(format!("exit factor must be at least 1, got {lambda}")));
                }
                (lambda * n as f64).round() as i32 + 1
            }
        };
        let annulus = AnnulusSpec::half(n)?;
        Ok(SpliceSetup {
            n,
            mode,
            field_radius,
            annulus_edges: Arc::new(annulus.edges()),
            annulus,
        })
    }

    /// Enlarge the field region to at least `S(radius)`.
    pub fn with_field_radius(mut self, radius: i32) -> Self {
        self.field_radius = self.field_radius.max(radius);
        self
    }

    pub fn annulus(&self) -> &AnnulusSpec {
        &self.annulus
    }

    pub fn field(&self, seed: u64) -> WeightField {
        sample_weights(Region::boxed(self.field_radius), seed)
    }

    pub fn derive(&self, wf: &WeightField) -> Result<Derived> {
        match self.mode {
            DerivationMode::Threshold => Ok(Derived {
                config: wf.threshold_on(self.annulus_edges.clone(), 0.5),
                invaded: None,
            }),
            DerivationMode::Invasion { lambda } => {
                let exit = (lambda * self.n as f64).round() as i32;
                let res = invade(wf, StopRule::exit(exit))?;
                Ok(Derived {
                    config: invasion_configuration(&res, self.annulus_edges.clone()),
                    invaded: Some(EdgeSet::from_edges(res.invaded_edges())),
                })
            }
        }
    }

    /// `N` of the derived configuration.
    pub fn crossings(&self, d: &Derived) -> Result<u32> {
        Ok(count_disjoint_crossings(&d.config, &self.annulus)?.value)
    }
}

/// Whether two invaded sets differ on some edge outside the tranche.
pub fn differs_outside(a: &Derived, b: &Derived, tranche: &TrancheSpec) -> Option<bool> {
    let (x, y) = (a.invaded.as_ref()?, b.invaded.as_ref()?);
    let outside = |d: EdgeSet| d.iter().any(|e| !tranche.edges.contains(e));
    Some(outside(x.difference(y)) || outside(y.difference(x)))
}

/// `(ω, ω_ε)`: the field and its tranche resample under `seed2`, both
/// passed through the same derivation.
pub fn resample_pair(
    setup: &SpliceSetup,
    wf: &WeightField,
    tranche: &TrancheSpec,
    seed2: u64,
) -> Result<(Derived, Derived)> {
    let resampled = wf.resampled(tranche.edges.clone(), seed2)?;
    Ok((setup.derive(wf)?, setup.derive(&resampled)?))
}

/// `ω⁰, ..., ω^K`: `ω^j` carries the `seed2` weights on the tranche edges of
/// balls `0..j` and the original weights elsewhere.
pub fn sequence_fields(wf: &WeightField, tranche: &TrancheSpec, seed2: u64) -> Result<Vec<WeightField>> {
    let mut out = vec![wf.clone()];
    for j in 1..=tranche.num_balls() {
        out.push(wf.resampled_ranked(tranche.edges.clone(), tranche.ranks.clone(), j as u32, seed2)?);
    }
    Ok(out)
}

pub fn resample_sequence(
    setup: &SpliceSetup,
    wf: &WeightField,
    tranche: &TrancheSpec,
    seed2: u64,
) -> Result<Vec<Derived>> {
    sequence_fields(wf, tranche, seed2)?
        .iter()
        .map(|f| setup.derive(f))
        .collect()
}

/// Parameters of the circuit event `A(n, p)` tracked along a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AEventParams {
    pub p: f64,
    pub lambda: f64,
}

/// One ball-by-ball resampling sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceRun {
    pub seed: u64,
    pub seed2: u64,
    pub n: i32,
    pub epsilon: f64,
    pub m: Option<u32>,
    /// `N(ω^j)` for `j = 0..=K`.
    pub counts: Vec<u32>,
    pub n_original: u32,
    pub n_resampled: u32,
    /// First `j` with `N(ω^{j-1}) ≠ N(ω^j)`, recorded when `N(ω) ≠ N(ω^K)`.
    pub first_change: Option<usize>,
    /// Number of `j` with `N(ω^{j-1}) ≠ N(ω^j)`.
    pub changes: usize,
    pub a_flags: Option<Vec<bool>>,
}

impl SpliceRun {
    /// Whether `ω ∈ ⊠_M` and `ω^K ∉ ⊠_M` for the stored `M`, reading `⊠_M` as `{N = M}`.
    pub fn leaves_box(&self) -> Option<bool> {
        self.m.map(|m| self.n_original == m && self.n_resampled != m)
    }
}

pub fn run_sequence(
    setup: &SpliceSetup,
    tranche: &TrancheSpec,
    seed: u64,
    seed2: u64,
    m: Option<u32>,
    a_event: Option<AEventParams>,
) -> Result<SpliceRun> {
    let wf = setup.field(seed);
    let fields = sequence_fields(&wf, tranche, seed2)?;
    let counts = fields
        .iter()
        .map(|f| setup.crossings(&setup.derive(f)?))
        .collect::<Result<Vec<u32>>>()?;
    let (n_original, n_resampled) = (counts[0], *counts.last().unwrap());
    let steps: Vec<usize> = (1..counts.len()).filter(|&j| counts[j] != counts[j - 1]).collect();
    if n_original != n_resampled && steps.is_empty() {
        return Err(Error::Invariant(format!(
            "N changed from {n_original} to {n_resampled} without a changing step"
        )));
    }
    let a_flags = match a_event {
        None => None,
        Some(a) => Some(a_event_flags(&fields, tranche, setup.n, a)?),
    };
    Ok(SpliceRun {
        seed,
        seed2,
        n: setup.n,
        epsilon: tranche.epsilon,
        m,
        counts,
        n_original,
        n_resampled,
        first_change: (n_original != n_resampled).then(|| steps[0]),
        changes: steps.len(),
        a_flags,
    })
}

/// `A(n, p)` on each field of a sequence. Outside the tranche the fields
/// agree, so their clusters are computed once and each step only unions the
/// tranche edges, unless the tranche meets the circuit annulus.
pub fn a_event_flags(fields: &[WeightField], tranche: &TrancheSpec, n: i32, a: AEventParams) -> Result<Vec<bool>> {
    let base = &fields[0];
    let reach = a_event_reach(base, n, a.lambda)?;
    let circuit_ann = AnnulusSpec::new(n / 4, n / 2)?;
    let touches_circuit = tranche.edges.iter().any(|e| {
        let (x, y) = e.endpoints();
        circuit_ann.contains(x) && circuit_ann.contains(y)
    });
    if touches_circuit || tranche.edges.is_empty() {
        return fields
            .iter()
            .map(|f| detect_circuit_event_a(f, n, a.p, a.lambda))
            .collect();
    }

    let bx = BoxIndex::new(Site::ORIGIN, reach);
    let open = |e: EdgeId| base.weight(e).is_some_and(|w| w < a.p);
    let circuit = winding_sites(n, &bx, open)?;
    if circuit.is_empty() {
        return Ok(vec![false; fields.len()]);
    }
    let mut uf = box_clusters(&bx, |e| !tranche.edges.contains(e) && open(e));
    let far = far_roots(&bx, &mut uf);
    let mut circuit_root = vec![false; bx.num_sites()];
    for &i in &circuit {
        circuit_root[uf.find(i)] = true;
    }
    if (0..bx.num_sites()).any(|i| circuit_root[i] && far[i]) {
        return Ok(vec![true; fields.len()]);
    }

    // local ids: 0 = circuit, 1 = far, then one per base cluster at a tranche endpoint
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut tranche_ends = Vec::with_capacity(tranche.edges.len());
    for e in tranche.edges.iter() {
        let (x, y) = e.endpoints();
        let mut id = |s: Site| {
            let r = uf.find(bx.site_index(s).expect("tranche inside the A-event box"));
            let next = local.len() + 2;
            *local.entry(r).or_insert(next)
        };
        tranche_ends.push((id(x), id(y)));
    }
    let mut seeded = UnionFind::new(local.len() + 2);
    for (&r, &l) in &local {
        if circuit_root[r] {
            seeded.union(0, l);
        }
        if far[r] {
            seeded.union(1, l);
        }
    }
    Ok(fields
        .iter()
        .map(|f| {
            let mut luf = seeded.clone();
            for (e, &(x, y)) in tranche.edges.iter().zip(&tranche_ends) {
                if f.weight(e).is_some_and(|w| w < a.p) {
                    luf.union(x, y);
                }
            }
            luf.same(0, 1)
        })
        .collect())
}

/// Per-cell result of the paired mismatch experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchCell {
    pub n: i32,
    pub epsilon: f64,
    pub mode: DerivationMode,
    pub flagged: bool,
    pub num_balls: usize,
    pub tranche_edges: usize,
    /// `P(N(ω) ≠ N(ω_ε))`.
    pub mismatch: EstimateWithCI,
    /// `P(N(ω) = M, N(ω_ε) ≠ M)` for `M = 0..=m_cap`.
    pub flip_equal: Vec<EstimateWithCI>,
    /// `P(N(ω) ≥ M, N(ω_ε) < M)` for `M = 0..=m_cap`.
    pub flip_at_least: Vec<EstimateWithCI>,
    /// Invasion mode: fraction of pairs whose invaded sets differ outside the tranche.
    pub outside_discrepancy: Option<EstimateWithCI>,
    /// Mismatch recomputed with the two tranche streams exchanged.
    pub swapped: Option<EstimateWithCI>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub n: i32,
    pub mode: DerivationMode,
    pub samples: u64,
    pub seed: u64,
    /// Counts of `N(ω) = k` for `k < m_cap`, then of `N(ω) ≥ m_cap`.
    pub histogram: Vec<u64>,
    pub cells: Vec<MismatchCell>,
}

/// Paired-run settings for [`estimate_mismatch_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchParams {
    pub m_cap: u32,
    pub samples: u64,
    pub seed: u64,
    pub swap_check: bool,
}

fn field_seed(seed: u64, i: u64) -> u64 {
    derive_seed(seed, STREAM_FIELD, i)
}

fn resample_seed(seed: u64, i: u64) -> u64 {
    derive_seed(seed, STREAM_RESAMPLE, i)
}

struct PairOutcome {
    resampled: u32,
    outside: Option<bool>,
    swapped: Option<bool>,
}

/// Mismatch for several tranches at one scale. Sample `i` uses the same
/// field and resample streams in every cell.
pub fn estimate_mismatch_grid(
    setup: &SpliceSetup,
    tranches: &[TrancheSpec],
    params: &MismatchParams,
) -> Result<MismatchReport> {
    if params.samples == 0 {
        return Err(Error::domain("samples must be positive"));
    }
    for t in tranches {
        if t.n != setup.n {
            return Err(Error::domain(format!("tranche built for n={} used at n={}", t.n, setup.n)));
        }
    }
    let outcomes = sample_map(params.samples, |i| -> Result<(u32, Vec<PairOutcome>)> {
        let fs = field_seed(params.seed, i);
        let seed2 = resample_seed(params.seed, i);
        let wf = setup.field(fs);
        let original = setup.derive(&wf)?;
        let n0 = setup.crossings(&original)?;
        let cells = tranches
            .iter()
            .map(|t| {
                let wf_eps = wf.resampled(t.edges.clone(), seed2)?;
                let derived = setup.derive(&wf_eps)?;
                let resampled = setup.crossings(&derived)?;
                let swapped = if params.swap_check {
                    let wf_sw = wf_eps.resampled(t.edges.clone(), fs)?;
                    Some(setup.crossings(&setup.derive(&wf_sw)?)? != resampled)
                } else {
                    None
                };
                Ok(PairOutcome {
                    resampled,
                    outside: differs_outside(&original, &derived, t),
                    swapped,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((n0, cells))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let seed = params.seed;
    let count = |f: &dyn Fn(&(u32, Vec<PairOutcome>)) -> bool| -> EstimateWithCI {
        EstimateWithCI::wilson(outcomes.iter().filter(|o| f(o)).count() as u64, params.samples, seed)
    };
    let cells = tranches
        .iter()
        .enumerate()
        .map(|(c, t)| MismatchCell {
            n: setup.n,
            epsilon: t.epsilon,
            mode: setup.mode,
            flagged: t.flagged,
            num_balls: t.num_balls(),
            tranche_edges: t.edges.len(),
            mismatch: count(&|o| o.0 != o.1[c].resampled),
            flip_equal: (0..=params.m_cap)
                .map(|m| count(&|o| o.0 == m && o.1[c].resampled != m))
                .collect(),
            flip_at_least: (0..=params.m_cap)
                .map(|m| count(&|o| o.0 >= m && o.1[c].resampled < m))
                .collect(),
            outside_discrepancy: matches!(setup.mode, DerivationMode::Invasion { .. })
                .then(|| count(&|o| o.1[c].outside == Some(true))),
            swapped: params.swap_check.then(|| count(&|o| o.1[c].swapped == Some(true))),
        })
        .collect();
    Ok(MismatchReport {
        n: setup.n,
        mode: setup.mode,
        samples: params.samples,
        seed,
        histogram: histogram(outcomes.iter().map(|o| o.0), params.m_cap),
        cells,
    })
}

/// `P(N(ω) ≠ N(ω_ε))` at one `(n, ε)` together with the `N`-histogram.
pub fn estimate_mismatch(
    n: i32,
    epsilon: f64,
    m_cap: u32,
    samples: u64,
    seed: u64,
    mode: DerivationMode,
) -> Result<MismatchReport> {
    let setup = SpliceSetup::new(n, mode)?;
    let tranche = build_tranche(n, epsilon)?;
    estimate_mismatch_grid(
        &setup,
        &[tranche],
        &MismatchParams {
            m_cap,
            samples,
            seed,
            swap_check: false,
        },
    )
}

/// Histogram of `N(ω)` over the same fields the mismatch estimator uses.
pub fn crossing_histogram(setup: &SpliceSetup, m_cap: u32, samples: u64, seed: u64) -> Result<Vec<u64>> {
    let counts = sample_map(samples, |i| setup.crossings(&setup.derive(&setup.field(field_seed(seed, i)))?))
        .into_iter()
        .collect::<Result<Vec<u32>>>()?;
    Ok(histogram(counts, m_cap))
}

fn histogram(values: impl IntoIterator<Item = u32>, m_cap: u32) -> Vec<u64> {
    let mut h = vec![0u64; m_cap as usize + 1];
    for v in values {
        h[v.min(m_cap) as usize] += 1;
    }
    h
}

/// `P(N > k)` for `k = 0 .. len - 2` from a capped histogram.
pub fn tail_probabilities(hist: &[u64], seed: u64) -> Vec<EstimateWithCI> {
    let total: u64 = hist.iter().sum();
    (0..hist.len().saturating_sub(1))
        .map(|k| EstimateWithCI::wilson(hist[k + 1..].iter().sum(), total, seed))
        .collect()
}

/// Most frequent value, smallest on ties.
pub fn histogram_mode(hist: &[u64]) -> u32 {
    let best = hist.iter().copied().max().unwrap_or(0);
    hist.iter().position(|&c| c == best).unwrap_or(0) as u32
}

/// The two readings of `⊠_M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxEvent {
    Equal,
    AtLeast,
}

impl BoxEvent {
    pub fn holds(self, n: u32, m: u32) -> bool {
        match self {
            BoxEvent::Equal => n == m,
            BoxEvent::AtLeast => n >= m,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BoxEvent::Equal => "eq",
            BoxEvent::AtLeast => "ge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceParams {
    pub m: u32,
    pub outer_samples: u64,
    pub inner_samples: u64,
    pub deltas: Vec<f64>,
    pub seed: u64,
}

/// `P(δ < q < 1 - δ)` against `E[q(1-q)] / δ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorCheck {
    pub delta: f64,
    pub interior: EstimateWithCI,
    pub markov_bound: f64,
    /// Combined one-sigma error of the two sides.
    pub sigma: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCell {
    pub event: BoxEvent,
    /// Inner-loop estimates of `P(⊠_M | F_ε)`, one per outer sample.
    pub q_hat: Vec<f64>,
    /// Mean of `q(1-q) m/(m-1)`.
    pub variance: f64,
    pub variance_stderr: f64,
    pub checks: Vec<InteriorCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub n: i32,
    pub epsilon: f64,
    pub m: u32,
    pub outer_samples: u64,
    pub inner_samples: u64,
    pub seed: u64,
    pub cells: Vec<VarianceCell>,
}

/// Nested estimate of `E[P(⊠_M | F_ε)(1 - P(⊠_M | F_ε))]`: the outer loop
/// draws a field, the inner loop redraws its tranche weights.
pub fn estimate_conditional_variance(
    setup: &SpliceSetup,
    tranche: &TrancheSpec,
    params: &VarianceParams,
) -> Result<VarianceReport> {
    if params.inner_samples < 2 {
        return Err(Error::domain("inner_samples must be at least 2"));
    }
    if params.outer_samples == 0 {
        return Err(Error::domain("outer_samples must be positive"));
    }
    if let Some(d) = params.deltas.iter().find(|d| !(**d > 0.0 && **d <= 0.5)) {
        return Err(Error::domain(format!("delta must lie in (0, 1/2], got {d}")));
    }
    let inner = params.inner_samples;
    let counts = sample_map(params.outer_samples, |i| -> Result<Vec<u32>> {
        let wf = setup.field(field_seed(params.seed, i));
        let stream = derive_seed(params.seed, STREAM_INNER, i);
        (0..inner)
            .map(|k| {
                let f = wf.resampled(tranche.edges.clone(), derive_seed(stream, STREAM_INNER, k))?;
                setup.crossings(&setup.derive(&f)?)
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let cells = [BoxEvent::Equal, BoxEvent::AtLeast]
        .into_iter()
        .map(|event| {
            let q_hat: Vec<f64> = counts
                .iter()
                .map(|c| c.iter().filter(|&&v| event.holds(v, params.m)).count() as f64 / inner as f64)
                .collect();
            let correction = inner as f64 / (inner as f64 - 1.0);
            let v: Vec<f64> = q_hat.iter().map(|q| q * (1.0 - q) * correction).collect();
            let (variance, variance_stderr) = mean_and_stderr(&v);
            let checks = params
                .deltas
                .iter()
                .map(|&delta| {
                    let hits = q_hat.iter().filter(|&&q| delta < q && q < 1.0 - delta).count() as u64;
                    let interior = EstimateWithCI::wilson(hits, q_hat.len() as u64, params.seed);
                    let d2 = delta * delta;
                    let markov_bound = variance / d2;
                    let sigma = interior.stderr.hypot(variance_stderr / d2);
                    InteriorCheck {
                        delta,
                        interior,
                        markov_bound,
                        sigma,
                        holds: interior.estimate <= markov_bound + 2.0 * sigma,
                    }
                })
                .collect();
            VarianceCell {
                event,
                q_hat,
                variance,
                variance_stderr,
                checks,
            }
        })
        .collect();
    Ok(VarianceReport {
        n: setup.n,
        epsilon: tranche.epsilon,
        m: params.m,
        outer_samples: params.outer_samples,
        inner_samples: inner,
        seed: params.seed,
        cells,
    })
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub n: i32,
    pub epsilon: f64,
    /// `p = p_{n/l}`.
    pub l: i32,
    pub lambda: f64,
    /// Supplied `p`; estimated with `estimate_p_n` when absent.
    pub p: Option<f64>,
    pub pn_delta: f64,
    pub pn_samples: u64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n: i32,
    pub epsilon: f64,
    pub p: f64,
    /// `P(A(ω) and not A(ω^j) for some j)`.
    pub destroyed: EstimateWithCI,
    /// `P(A(ω))`.
    pub a_frequency: EstimateWithCI,
    /// Among destroyed runs: four `p`-arms from the destroying ball out to
    /// distance `n/4` in the field just before it. Absent when the ball is not
    /// smaller than `n/4`.
    pub four_arms: Option<EstimateWithCI>,
}

/// Frequency with which some ball resample destroys `A(n, p_{n/l})`.
pub fn a_event_stability(params: &StabilityParams) -> Result<StabilityReport> {
    let StabilityParams { n, epsilon, l, lambda, .. } = *params;
    if l < 1 || n / l < 2 {
        return Err(Error::domain(format!("n/l must be at least 2, got n={n}, l={l}")));
    }
    if params.samples == 0 {
        return Err(Error::domain("samples must be positive"));
    }
    let p = match params.p {
        Some(p) if p > 0.0 && p <= 1.0 => p,
        Some(p) => return Err(Error::domain(format!("p must lie in (0, 1], got {p}"))),
        None => estimate_p_n(
            n / l,
            params.pn_delta,
            params.pn_samples,
            derive_seed(params.seed, STREAM_PN, 0),
            1e-3,
        )?,
    };
    let tranche = build_tranche(n, epsilon)?;
    let reach = (lambda * n as f64).round() as i32;
    let region = Region::boxed(reach.max(n));
    let a = AEventParams { p, lambda };
    let arm_outer = n / 4;
    let arms_checked = tranche.ball_radius < arm_outer;

    let runs = sample_map(params.samples, |i| -> Result<(bool, bool, bool)> {
        let wf = sample_weights(region.clone(), field_seed(params.seed, i));
        let fields = sequence_fields(&wf, &tranche, resample_seed(params.seed, i))?;
        let flags = a_event_flags(&fields, &tranche, n, a)?;
        let destroyed_at = if flags[0] { flags.iter().position(|f| !f) } else { None };
        let arms = match destroyed_at {
            Some(j) if arms_checked => {
                let spec = ArmEventSpec::new(p, p, tranche.ball_radius, arm_outer)?
                    .with_center(tranche.centers[j - 1]);
                detect_four_arm(&fields[j - 1], &spec)?
            }
            _ => false,
        };
        Ok((flags[0], destroyed_at.is_some(), arms))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let held = runs.iter().filter(|r| r.0).count() as u64;
    let destroyed = runs.iter().filter(|r| r.1).count() as u64;
    let with_arms = runs.iter().filter(|r| r.1 && r.2).count() as u64;
    Ok(StabilityReport {
        n,
        epsilon,
        p,
        destroyed: EstimateWithCI::wilson(destroyed, params.samples, params.seed),
        a_frequency: EstimateWithCI::wilson(held, params.samples, params.seed),
        four_arms: arms_checked.then(|| EstimateWithCI::wilson(with_arms, destroyed, params.seed)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::edge_uniform;

    #[test]
    fn ball_counts_and_radii() {
        let t = build_tranche(8, 1.0).unwrap();
        assert_eq!(t.num_balls(), 6);
        let t = build_tranche(64, 1.0 / 8.0).unwrap();
        assert_eq!((t.num_balls(), t.ball_radius, t.half_width, t.radius), (48, 8, 4, 48));
        assert!(!t.flagged);
        assert_eq!(ball_count(1.0 / 3.0), 18);
    }

    #[test]
    fn balls_cover_the_strip_on_the_grid() {
        for n in [8, 12, 16, 31, 32, 64, 100, 128] {
            for eps in [1.0, 0.5, 0.25, 1.0 / 3.0, 0.125, 0.1, 1.0 / 16.0, 1.0 / 32.0, 0.01] {
                let t = build_tranche(n, eps).unwrap();
                assert!(t.is_covered(), "n={n} eps={eps}");
                let union = (0..t.num_balls()).fold(EdgeSet::empty(), |acc, j| acc.union(&t.ball_edges(j)));
                assert!(t.edges.is_subset(&union));
                let ann = AnnulusSpec::half(n).unwrap();
                assert!(t.edges.iter().all(|e| {
                    let (a, b) = e.endpoints();
                    ann.contains(a) && ann.contains(b)
                }));
                assert!(!t.edges.is_empty());
            }
        }
    }

    #[test]
    fn strip_is_the_band_around_the_centerline() {
        let t = build_tranche(64, 1.0 / 8.0).unwrap();
        for e in t.edges.iter() {
            let (a, b) = e.endpoints();
            assert!((44..=52).contains(&a.sup_norm()) && (44..=52).contains(&b.sup_norm()));
        }
        // 8r sites per ring, two edges per site inside the band, radial edges between rings
        let rings: usize = (44..=52).map(|r| 8 * r as usize).sum();
        let radial: usize = (44..52).map(|r| 8 * r as usize + 4).sum();
        assert_eq!(t.edges.len(), rings + radial);
    }

    #[test]
    fn thin_strip_is_flagged_single_ring() {
        let t = build_tranche(16, 1.0 / 32.0).unwrap();
        assert!(t.flagged);
        assert_eq!(t.edges.len(), 8 * 12);
        assert!(t.edges.iter().all(|e| e.endpoints().0.sup_norm() == 12 && e.endpoints().1.sup_norm() == 12));
    }

    #[test]
    fn first_ball_is_on_the_positive_axis_and_order_is_counterclockwise() {
        let t = build_tranche(32, 0.25).unwrap();
        assert_eq!(t.centers[0], Site::new(24, 0));
        let angle = |s: Site| (s.y as f64).atan2(s.x as f64).rem_euclid(std::f64::consts::TAU);
        assert!(t.centers.windows(2).all(|w| angle(w[0]) < angle(w[1])));
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(build_tranche(4, 0.5).is_err());
        assert!(build_tranche(16, 0.0).is_err());
        assert!(build_tranche(16, 1.5).is_err());
    }

    #[test]
    fn identity_resample_keeps_crossings() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        for s in 0..20 {
            let wf = setup.field(s);
            let (a, b) = resample_pair(&setup, &wf, &t, s).unwrap();
            assert_eq!(a.config, b.config);
        }
    }

    #[test]
    fn empty_tranche_changes_nothing() {
        let setup = SpliceSetup::new(16, DerivationMode::Invasion { lambda: 2.0 }).unwrap();
        let t = TrancheSpec::empty(16);
        let wf = setup.field(9);
        let (a, b) = resample_pair(&setup, &wf, &t, 77).unwrap();
        assert_eq!(a.config, b.config);
        assert_eq!(differs_outside(&a, &b, &t), Some(false));
        assert_eq!(resample_sequence(&setup, &wf, &t, 77).unwrap().len(), 1);
        let rep = estimate_mismatch_grid(
            &setup,
            &[t],
            &MismatchParams { m_cap: 10, samples: 30, seed: 1, swap_check: false },
        )
        .unwrap();
        assert_eq!(rep.cells[0].mismatch.successes, 0);
    }

    #[test]
    fn last_sequence_field_equals_the_full_resample() {
        let t = build_tranche(32, 0.25).unwrap();
        let wf = sample_weights(Region::boxed(32), 5);
        let seq = sequence_fields(&wf, &t, 99).unwrap();
        assert_eq!(seq.len(), t.num_balls() + 1);
        let full = wf.resampled(t.edges.clone(), 99).unwrap();
        for e in Region::boxed(32).edges().iter() {
            assert_eq!(seq.last().unwrap().weight(e).unwrap().to_bits(), full.weight(e).unwrap().to_bits());
        }
        // intermediate fields: fresh exactly on balls before j
        for (k, e) in t.edges.iter().enumerate() {
            for j in [1, 3, t.num_balls() / 2] {
                let w = seq[j].weight(e).unwrap();
                if (t.ranks[k] as usize) < j {
                    assert_eq!(w, edge_uniform(99, e));
                } else {
                    assert_eq!(w, wf.weight(e).unwrap());
                }
            }
        }
    }

    #[test]
    fn sequences_telescope() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        let mut changed = 0;
        for s in 0..40 {
            let run = run_sequence(&setup, &t, s, s + 1000, Some(3), None).unwrap();
            assert_eq!(run.counts.len(), t.num_balls() + 1);
            assert_eq!(run.first_change.is_some(), run.n_original != run.n_resampled);
            if let Some(j) = run.first_change {
                assert!(j >= 1 && run.counts[j] != run.counts[j - 1]);
                assert!(run.counts[..j].iter().all(|&c| c == run.n_original));
                changed += 1;
            }
            assert!(run.changes >= run.first_change.is_some() as usize);
        }
        assert!(changed > 0);
    }

    #[test]
    fn invasion_sequences_telescope() {
        let setup = SpliceSetup::new(16, DerivationMode::Invasion { lambda: 2.0 }).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        for s in 0..10 {
            let run = run_sequence(&setup, &t, s, s + 1, None, None).unwrap();
            assert_eq!(run.first_change.is_some(), run.n_original != run.n_resampled);
        }
    }

    #[test]
    fn fast_a_event_flags_match_full_detection() {
        let n = 16;
        for (eps, p) in [(0.25, 0.65), (0.125, 0.6), (1.0 / 3.0, 0.7), (1.0, 0.65), (0.25, 0.5)] {
            let t = build_tranche(n, eps).unwrap();
            let a = AEventParams { p, lambda: 2.0 };
            let mut seen = [false; 2];
            for s in 0..25 {
                let wf = sample_weights(Region::boxed(32), s);
                let fields = sequence_fields(&wf, &t, s ^ 0xabc).unwrap();
                let fast = a_event_flags(&fields, &t, n, a).unwrap();
                let full: Vec<bool> = fields
                    .iter()
                    .map(|f| detect_circuit_event_a(f, n, p, 2.0).unwrap())
                    .collect();
                assert_eq!(fast, full, "eps={eps} p={p} seed={s}");
                seen[fast[0] as usize] = true;
            }
            if p == 0.65 {
                assert!(seen[0] && seen[1]);
            }
        }
    }

    #[test]
    fn swap_check_agrees_and_mismatch_is_sane() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let ts = [build_tranche(16, 0.5).unwrap(), build_tranche(16, 0.125).unwrap()];
        let params = MismatchParams { m_cap: 12, samples: 400, seed: 3, swap_check: true };
        let rep = estimate_mismatch_grid(&setup, &ts, &params).unwrap();
        assert_eq!(rep.histogram.iter().sum::<u64>(), 400);
        for c in &rep.cells {
            let m = c.mismatch.estimate;
            assert!(m > 0.0 && m < 1.0);
            assert_eq!(c.swapped.unwrap().successes, c.mismatch.successes);
            // each mismatch with N(ω) ≤ m_cap leaves exactly one {N = M}
            let eq: u64 = c.flip_equal.iter().map(|e| e.successes).sum();
            assert!(eq <= c.mismatch.successes);
            assert_eq!(c.flip_at_least[0].successes, 0);
        }
        assert!(rep.cells[0].mismatch.estimate >= rep.cells[1].mismatch.estimate);
        let again = estimate_mismatch_grid(&setup, &ts, &params).unwrap();
        assert_eq!(rep, again);
        let hist = crossing_histogram(&setup, 12, 400, 3).unwrap();
        assert_eq!(hist, rep.histogram);
    }

    #[test]
    fn flips_under_both_readings_count_one_sided_changes() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        let params = MismatchParams { m_cap: 30, samples: 200, seed: 8, swap_check: false };
        let rep = estimate_mismatch_grid(&setup, &[t.clone()], &params).unwrap();
        // direct recount
        let mut eq = vec![0u64; 31];
        let mut ge = vec![0u64; 31];
        for i in 0..200 {
            let wf = setup.field(field_seed(8, i));
            let (a, b) = resample_pair(&setup, &wf, &t, resample_seed(8, i)).unwrap();
            let (x, y) = (setup.crossings(&a).unwrap(), setup.crossings(&b).unwrap());
            for m in 0..=30u32 {
                eq[m as usize] += (x == m && y != m) as u64;
                ge[m as usize] += (x >= m && y < m) as u64;
            }
        }
        let c = &rep.cells[0];
        assert_eq!(c.flip_equal.iter().map(|e| e.successes).collect::<Vec<_>>(), eq);
        assert_eq!(c.flip_at_least.iter().map(|e| e.successes).collect::<Vec<_>>(), ge);
    }

    #[test]
    fn invasion_mode_reports_outside_discrepancy() {
        let rep = estimate_mismatch(16, 0.25, 10, 30, 2, DerivationMode::Invasion { lambda: 2.0 }).unwrap();
        let d = rep.cells[0].outside_discrepancy.unwrap();
        assert_eq!(d.samples, 30);
        let thr = estimate_mismatch(16, 0.25, 10, 30, 2, DerivationMode::Threshold).unwrap();
        assert!(thr.cells[0].outside_discrepancy.is_none());
    }

    #[test]
    fn tails_and_mode() {
        let h = [1, 5, 3, 1];
        assert_eq!(histogram_mode(&h), 1);
        let t = tail_probabilities(&h, 0);
        assert_eq!(t.iter().map(|e| e.successes).collect::<Vec<_>>(), vec![9, 4, 1]);
    }

    #[test]
    fn variance_needs_two_inner_samples() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        let params = VarianceParams { m: 2, outer_samples: 3, inner_samples: 1, deltas: vec![0.2], seed: 0 };
        assert!(matches!(estimate_conditional_variance(&setup, &t, &params), Err(Error::Domain(_))));
    }

    #[test]
    fn variance_of_an_impossible_box_is_zero() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        let params = VarianceParams { m: 10_000, outer_samples: 10, inner_samples: 4, deltas: vec![0.1, 0.5], seed: 0 };
        let rep = estimate_conditional_variance(&setup, &t, &params).unwrap();
        let eq = &rep.cells[0];
        assert!(eq.q_hat.iter().all(|&q| q == 0.0));
        assert_eq!(eq.variance, 0.0);
        assert!(eq.checks.iter().all(|c| c.interior.successes == 0 && c.holds));
    }

    #[test]
    fn markov_check_and_empty_interval() {
        let setup = SpliceSetup::new(16, DerivationMode::Threshold).unwrap();
        let t = build_tranche(16, 0.25).unwrap();
        let params = VarianceParams { m: 4, outer_samples: 40, inner_samples: 6, deltas: vec![0.1, 0.2, 0.5], seed: 4 };
        let rep = estimate_conditional_variance(&setup, &t, &params).unwrap();
        for cell in &rep.cells {
            assert_eq!(cell.q_hat.len(), 40);
            let half = cell.checks.iter().find(|c| c.delta == 0.5).unwrap();
            assert_eq!(half.interior.successes, 0);
            assert!(cell.checks.iter().all(|c| c.holds));
        }
        // the ">= M" reading of M = 0 always holds
        let ge0 = estimate_conditional_variance(&setup, &t, &VarianceParams { m: 0, ..params.clone() }).unwrap();
        assert!(ge0.cells[1].q_hat.iter().all(|&q| q == 1.0));
    }

    #[test]
    fn stability_extremes() {
        let base = StabilityParams {
            n: 16,
            epsilon: 0.25,
            l: 4,
            lambda: 2.0,
            p: Some(1.0),
            pn_delta: 0.1,
            pn_samples: 50,
            samples: 20,
            seed: 1,
        };
        let r = a_event_stability(&base).unwrap();
        assert_eq!(r.destroyed.successes, 0);
        assert_eq!(r.a_frequency.successes, 20);
        let r = a_event_stability(&StabilityParams { p: Some(0.05), ..base.clone() }).unwrap();
        assert_eq!((r.destroyed.successes, r.a_frequency.successes), (0, 0));
        assert!(a_event_stability(&StabilityParams { l: 16, ..base.clone() }).is_err());
        let r = a_event_stability(&StabilityParams { p: None, samples: 30, ..base }).unwrap();
        assert!(r.p > 0.5 && r.p < 1.0);
    }

    #[test]
    fn stability_detects_destruction_of_wide_tranches() {
        let params = StabilityParams {
            n: 32,
            epsilon: 0.5,
            l: 4,
            lambda: 2.0,
            p: Some(0.6),
            pn_delta: 0.1,
            pn_samples: 0,
            samples: 200,
            seed: 7,
        };
        let r = a_event_stability(&params).unwrap();
        assert!(r.destroyed.successes > 0);
        assert!(r.destroyed.estimate <= r.a_frequency.estimate);
        assert!(r.four_arms.is_none());
        let thin = a_event_stability(&StabilityParams { epsilon: 0.125, ..params }).unwrap();
        assert!(thin.four_arms.is_some());
        assert!(thin.destroyed.successes <= r.destroyed.successes);
    }
}
