//! Pass/fail checks shared by `verify` (small sizes) and the acceptance
//! suite (full sizes).

use std::sync::Arc;

use ipsplice_core::arms::{estimate_crossing_probability, CONFIDENCE_Z};
use ipsplice_core::crossing::{brute_force_crossings, circuit_through_edge, count_disjoint_crossings, min_defect_circuit};
use ipsplice_core::estimate::{combined_sigma, sample_map, weighted_line_fit, EstimateWithCI};
use ipsplice_core::invasion::{invade, invaded_weight_tail, StopReason, StopRule};
use ipsplice_core::rng::{derive_seed, CounterRng};
use ipsplice_core::splice::{
    build_tranche, crossing_histogram, estimate_conditional_variance, estimate_mismatch_grid, histogram_mode,
    run_sequence, sequence_fields, tail_probabilities, DerivationMode, MismatchParams, MismatchReport, SpliceSetup,
    VarianceParams,
};
use ipsplice_core::{
    estimate_arm_probability, sample_weights, AnnulusSpec, ArmEventSpec, Configuration, EdgeId, EdgeStatus, Region,
    Result,
};
use serde::Serialize;

const STREAM_DUALITY: u64 = 0x6475_616c;
const STREAM_FLIPS: u64 = 0x666c_6970;
const STREAM_INVADE: u64 = 0x696e_7661;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{}: {} ({})", self.name, if self.passed { "PASS" } else { "FAIL" }, self.detail)
    }
}

fn random_config(ann: &AnnulusSpec, p: f64, key: u64) -> Configuration {
    let edges = Arc::new(ann.edges());
    let mut rng = CounterRng::new(key);
    Configuration::from_fn(edges, |_| rng.bernoulli(p))
}

/// Max-flow, minimum defected circuit and brute-force packing agree on
/// random configurations of `Ann(1,2)` and `Ann(2,4)`.
pub fn duality(configs_per_annulus: u64, seed: u64) -> Result<CheckResult> {
    const LEVELS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
    let mut disagreements = 0u64;
    let mut refused = 0u64;
    for (a, b) in [(1, 2), (2, 4)] {
        let ann = AnnulusSpec::new(a, b)?;
        let outcomes = sample_map(configs_per_annulus, |i| -> Result<Option<bool>> {
            let p = LEVELS[(i % 5) as usize];
            let config = random_config(&ann, p, derive_seed(seed, STREAM_DUALITY + a as u64, i));
            let flow = count_disjoint_crossings(&config, &ann)?.value;
            let circuit = min_defect_circuit(&config, &ann)?.defect_count();
            match brute_force_crossings(&config, &ann) {
                Ok(brute) => Ok(Some(flow == circuit && circuit == brute)),
                Err(ipsplice_core::Error::Refused(_)) => Ok(None),
                Err(e) => Err(e),
            }
        });
        for o in outcomes {
            match o? {
                Some(true) => {}
                Some(false) => disagreements += 1,
                None => refused += 1,
            }
        }
    }
    Ok(CheckResult::new(
        "duality",
        disagreements == 0 && refused == 0,
        format!(
            "{} configurations, {disagreements} disagreements, {refused} refused",
            2 * configs_per_annulus
        ),
    ))
}

/// Count the flips of `config` that change `N` but have no dual circuit
/// through the flipped edge within budget `N(config)`. Returns
/// `(changing flips, counterexamples)`.
fn pivotal_flip_failures(config: &Configuration, ann: &AnnulusSpec) -> Result<(u64, u64)> {
    let n = count_disjoint_crossings(config, ann)?.value;
    let (mut flips, mut bad) = (0, 0);
    for e in config.region().iter() {
        let flipped = if config.is_open(e) {
            EdgeStatus::Closed
        } else {
            EdgeStatus::Open
        };
        let other = config.with_status(e, flipped)?;
        if count_disjoint_crossings(&other, ann)?.value != n {
            flips += 1;
            if circuit_through_edge(config, ann, e, n)?.is_none() {
                bad += 1;
            }
        }
    }
    Ok((flips, bad))
}

/// Every crossing-changing flip admits a dual circuit through the flipped
/// edge with at most `N` defects: all `2^12` settings of the radial edges of
/// `Ann(1,2)`, then `random_configs` uniform configurations of `Ann(1,2)`.
pub fn pivotal_circuits(random_configs: u64, seed: u64) -> Result<CheckResult> {
    let ann = AnnulusSpec::new(1, 2)?;
    let edges = Arc::new(ann.edges());
    let radial: Vec<EdgeId> = edges
        .iter()
        .filter(|e| {
            let (x, y) = e.endpoints();
            x.sup_norm() != y.sup_norm()
        })
        .collect();
    assert_eq!(radial.len(), 12);
    let exhaustive = sample_map(1 << radial.len(), |mask| {
        let open = radial.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e);
        pivotal_flip_failures(&Configuration::from_open_edges(edges.clone(), open), &ann)
    });
    let random = sample_map(random_configs, |i| {
        pivotal_flip_failures(&random_config(&ann, 0.5, derive_seed(seed, STREAM_FLIPS, i)), &ann)
    });
    let (mut flips, mut bad) = (0, 0);
    for r in exhaustive.into_iter().chain(random) {
        let (f, b) = r?;
        flips += f;
        bad += b;
    }
    Ok(CheckResult::new(
        "pivotal_circuits",
        bad == 0,
        format!(
            "{} configurations, {flips} crossing-changing flips, {bad} counterexamples",
            (1u64 << radial.len()) + random_configs
        ),
    ))
}

/// Left-right crossing of `(n+1) x n` rectangles at `p = 1/2` covers 1/2 within 3 sigma.
pub fn self_duality(ns: &[i32], samples: u64, seed: u64) -> Result<CheckResult> {
    let mut passed = true;
    let mut parts = Vec::new();
    for &n in ns {
        let est = estimate_crossing_probability(n + 1, n, 0.5, samples, derive_seed(seed, n as u64, 0))?;
        let ok = (est.estimate - 0.5).abs() <= 3.0 * est.stderr;
        passed &= ok;
        parts.push(format!("n={n}: {:.4} ± {:.4}", est.estimate, est.stderr));
    }
    Ok(CheckResult::new("self_duality", passed, parts.join(", ")))
}

/// Tail of the crossing-count histogram in threshold mode: `K0` is the
/// first `k` with `P(N > k) < 0.05` at the smallest scale, re-checked at
/// the others within 2 sigma.
pub fn crossing_tail(ns: &[i32], samples: u64, seed: u64) -> Result<(CheckResult, Vec<(i32, Vec<u64>)>)> {
    const CAP: u32 = 64;
    let mut hists = Vec::new();
    for &n in ns {
        let setup = SpliceSetup::new(n, DerivationMode::Threshold)?;
        hists.push((n, crossing_histogram(&setup, CAP, samples, seed)?));
    }
    let tails: Vec<Vec<EstimateWithCI>> = hists.iter().map(|(_, h)| tail_probabilities(h, seed)).collect();
    let monotone = tails
        .iter()
        .all(|t| t.windows(2).all(|w| w[1].estimate <= w[0].estimate));
    let k0 = tails[0].iter().position(|t| t.estimate < 0.05);
    let mut passed = monotone && k0.is_some();
    let mut parts = vec![format!("K0={}", k0.map_or("none".into(), |k| k.to_string()))];
    if let Some(k0) = k0 {
        for ((n, _), t) in hists.iter().zip(&tails) {
            let at = t[k0];
            let ok = at.estimate < 0.05 + 2.0 * at.stderr;
            passed &= ok;
            parts.push(format!("n={n}: P(N>K0)={:.4} ± {:.4}", at.estimate, at.stderr));
        }
    }
    for ((n, _), t) in hists.iter().zip(&tails) {
        if let Some(t20) = t.get(20) {
            parts.push(format!("n={n}: P(N>20)={:.4}", t20.estimate));
        }
    }
    Ok((CheckResult::new("crossing_tail", passed, parts.join(", ")), hists))
}

/// Mismatch columns for one `(n, mode)`; `epsilons` in decreasing order.
pub fn mismatch_column(
    n: i32,
    mode: DerivationMode,
    epsilons: &[f64],
    samples: u64,
    seed: u64,
) -> Result<MismatchReport> {
    let setup = SpliceSetup::new(n, mode)?;
    let tranches = epsilons
        .iter()
        .map(|&e| build_tranche(n, e))
        .collect::<Result<Vec<_>>>()?;
    estimate_mismatch_grid(
        &setup,
        &tranches,
        &MismatchParams {
            m_cap: 64,
            samples,
            seed,
            swap_check: false,
        },
    )
}

fn column_text(r: &MismatchReport) -> String {
    let cells: Vec<String> = r
        .cells
        .iter()
        .map(|c| format!("{}:{:.4}±{:.4}", c.epsilon, c.mismatch.estimate, c.mismatch.stderr))
        .collect();
    format!("n={} {} [{}]", r.n, r.mode.label(), cells.join(" "))
}

/// Each halving of `ε` lowers the mismatch by more than 2 sigma in every
/// column, and the columns of `uniform` agree cellwise within 2 sigma.
pub fn mismatch_trend(columns: &[MismatchReport], uniform: &[(usize, usize)]) -> CheckResult {
    let mut passed = true;
    let mut parts = Vec::new();
    for col in columns {
        for w in col.cells.windows(2) {
            let (big, small) = (&w[0].mismatch, &w[1].mismatch);
            let ok = big.estimate - small.estimate > 2.0 * combined_sigma(big.stderr, small.stderr);
            if !ok {
                parts.push(format!(
                    "n={} {} eps {}->{} not decreasing beyond 2σ",
                    col.n,
                    col.mode.label(),
                    w[0].epsilon,
                    w[1].epsilon
                ));
            }
            passed &= ok;
        }
        parts.push(column_text(col));
    }
    for &(i, j) in uniform {
        for (a, b) in columns[i].cells.iter().zip(&columns[j].cells) {
            let diff = (a.mismatch.estimate - b.mismatch.estimate).abs();
            let ok = diff <= 2.0 * combined_sigma(a.mismatch.stderr, b.mismatch.stderr);
            if !ok {
                parts.push(format!(
                    "eps {}: n={} vs n={} differ by {diff:.4}",
                    a.epsilon, columns[i].n, columns[j].n
                ));
            }
            passed &= ok;
        }
    }
    CheckResult::new("mismatch_trend", passed, parts.join("; "))
}

/// Nested conditional-variance estimate against the interior frequency.
pub fn markov_bound(
    n: i32,
    epsilon: f64,
    pilot_samples: u64,
    outer_samples: u64,
    inner_samples: u64,
    deltas: &[f64],
    seed: u64,
) -> Result<CheckResult> {
    let setup = SpliceSetup::new(n, DerivationMode::Threshold)?;
    let m = histogram_mode(&crossing_histogram(&setup, 64, pilot_samples, derive_seed(seed, 1, 0))?);
    let tranche = build_tranche(n, epsilon)?;
    let rep = estimate_conditional_variance(
        &setup,
        &tranche,
        &VarianceParams {
            m,
            outer_samples,
            inner_samples,
            deltas: deltas.to_vec(),
            seed,
        },
    )?;
    let mut passed = true;
    let mut parts = vec![format!("M={m}")];
    for cell in &rep.cells {
        for c in &cell.checks {
            passed &= c.holds;
            parts.push(format!(
                "{} δ={}: {:.4} ≤ {:.4} + 2·{:.4}",
                cell.event.label(),
                c.delta,
                c.interior.estimate,
                c.markov_bound,
                c.sigma
            ));
        }
    }
    Ok(CheckResult::new("markov_bound", passed, parts.join(", ")))
}

/// Weighted log-log slope of the critical four-arm probability in `s/n`.
pub fn four_arm_exponent(n: i32, scales: &[i32], samples: u64, seed: u64) -> Result<CheckResult> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut sigma = Vec::new();
    let mut parts = Vec::new();
    for &s in scales {
        let est = estimate_arm_probability(&ArmEventSpec::new(0.5, 0.5, s, n)?, samples, derive_seed(seed, s as u64, 0))?;
        parts.push(format!("s={s}: {:.5}", est.estimate));
        if est.estimate > 0.0 {
            x.push((s as f64 / n as f64).ln());
            y.push(est.estimate.ln());
            sigma.push(est.stderr / est.estimate);
        }
    }
    let fit = (x.len() == scales.len()).then(|| weighted_line_fit(&x, &y, &sigma)).flatten();
    let Some(fit) = fit else {
        return Ok(CheckResult::new("four_arm_exponent", false, format!("no fit; {}", parts.join(", "))));
    };
    let lower = fit.slope - CONFIDENCE_Z * fit.slope_stderr;
    let passed = lower > 0.9 && (1.0..=1.6).contains(&fit.slope);
    parts.insert(0, format!("slope {:.3} ± {:.3}, lower95 {:.3}", fit.slope, fit.slope_stderr, lower));
    Ok(CheckResult::new("four_arm_exponent", passed, parts.join(", ")))
}

/// Largest weight among the last 10% of a long invasion lies in `[0.5, 0.6]`
/// in at least 95% of runs.
pub fn invasion_limsup(runs: u64, steps: u64, seed: u64) -> Result<CheckResult> {
    let radius = steps.min(i32::MAX as u64 / 2) as i32 + 1;
    let tails = sample_map(runs, |i| -> Result<Option<f64>> {
        let wf = sample_weights(Region::boxed(radius), derive_seed(seed, STREAM_INVADE, i));
        let res = invade(&wf, StopRule::steps(steps))?;
        if res.stop != StopReason::StepBudget(steps) {
            return Ok(None);
        }
        invaded_weight_tail(&res, 0.1).map(Some)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let inside = tails.iter().filter(|t| t.is_some_and(|w| (0.5..=0.6).contains(&w))).count() as u64;
    let needed = (runs * 95).div_ceil(100);
    Ok(CheckResult::new(
        "invasion_limsup",
        inside >= needed,
        format!("{inside}/{runs} runs with tail weight in [0.5, 0.6]"),
    ))
}

/// Ball-by-ball sequences telescope, and the last field is the full resample.
pub fn sequence_consistency(n: i32, epsilon: f64, runs: u64, seed: u64) -> Result<CheckResult> {
    let setup = SpliceSetup::new(n, DerivationMode::Threshold)?;
    let tranche = build_tranche(n, epsilon)?;
    let mut bad = 0;
    for i in 0..runs {
        let (s, s2) = (derive_seed(seed, 7, i), derive_seed(seed, 8, i));
        let run = run_sequence(&setup, &tranche, s, s2, None, None)?;
        if run.first_change.is_some() != (run.n_original != run.n_resampled) {
            bad += 1;
        }
        let wf = setup.field(s);
        let last = sequence_fields(&wf, &tranche, s2)?.pop().expect("sequence is nonempty");
        let full = wf.resampled(tranche.edges.clone(), s2)?;
        if tranche
            .edges
            .iter()
            .any(|e| last.weight(e).map(f64::to_bits) != full.weight(e).map(f64::to_bits))
        {
            bad += 1;
        }
    }
    Ok(CheckResult::new(
        "sequence_consistency",
        bad == 0,
        format!("{runs} sequences at n={n}, eps={epsilon}, {bad} failures"),
    ))
}
