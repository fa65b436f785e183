//! One function per subcommand: run the experiment and fill the run directory.

use std::collections::BTreeMap;
use std::fs;

use ipsplice_core::arms::{
    estimate_correlation_length, estimate_p_n, write_arm_csv, write_crossing_csv, ArmEventSpec, CONFIDENCE_Z,
};
use ipsplice_core::estimate::{combined_sigma, sample_map, weighted_line_fit};
use ipsplice_core::invasion::{invade, invaded_weight_tail, StopRule};
use ipsplice_core::rng::derive_seed;
use ipsplice_core::splice::{
    a_event_stability, build_tranche, crossing_histogram, estimate_conditional_variance, estimate_mismatch_grid,
    histogram_mode, tail_probabilities, MismatchParams, SpliceSetup, StabilityParams, VarianceParams,
};
use ipsplice_core::{estimate_arm_probability, sample_weights, Region, Site};
use serde_json::{json, Value};

use crate::checks::{self, CheckResult};
use crate::config::{
    ArmsConfig, CorrlenConfig, CrossingsConfig, InvadeConfig, MPolicy, SpliceConfig, StabilityConfig, VerifyConfig,
};
use crate::error::CliError;
use crate::output::{row, RunWriter};

const STREAM_RUNS: u64 = 0x7275_6e73;
const STREAM_PILOT: u64 = 0x7069_6c6f;

pub fn invade_cmd(cfg: &InvadeConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let radius = match (cfg.exit_radius, cfg.steps) {
        (Some(r), _) => r + 1,
        (None, Some(s)) => s.min(i32::MAX as u64 / 2) as i32 + 1,
        (None, None) => unreachable!("validated"),
    };
    let stop = StopRule {
        max_steps: cfg.steps,
        exit_radius: cfg.exit_radius,
    };
    let runs = sample_map(cfg.runs, |i| -> ipsplice_core::Result<_> {
        let seed = derive_seed(cfg.seed, STREAM_RUNS, i);
        let res = invade(&sample_weights(Region::boxed(radius), seed), stop)?;
        let tail = invaded_weight_tail(&res, cfg.tail_fraction)?;
        Ok((seed, res.invaded.len(), res.radius(), format!("{:?}", res.stop), tail))
    })
    .into_iter()
    .collect::<ipsplice_core::Result<Vec<_>>>()?;
    w.csv("runs.csv", |b| {
        row(b, format_args!("run,seed,steps,radius,stop,tail_weight"))?;
        for (i, (seed, steps, radius, stop, tail)) in runs.iter().enumerate() {
            row(b, format_args!("{i},{seed},{steps},{radius},{stop},{tail}"))?;
        }
        Ok(())
    })?;
    let inside = runs.iter().filter(|r| (0.5..=0.6).contains(&r.4)).count();
    w.json(
        "summary.json",
        json!({
            "subcommand": "invade",
            "runs": cfg.runs,
            "tail_fraction": cfg.tail_fraction,
            "tail_in_band": inside,
            "mean_tail_weight": runs.iter().map(|r| r.4).sum::<f64>() / runs.len() as f64,
        }),
    )
}

pub fn crossings_cmd(cfg: &CrossingsConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let mut hists = Vec::new();
    for &mode in &cfg.modes {
        for &n in &cfg.n {
            let setup = SpliceSetup::new(n, mode.with_lambda(cfg.lambda))?;
            hists.push((n, setup.mode, crossing_histogram(&setup, cfg.m_cap, cfg.samples, cfg.seed)?));
        }
    }
    hists.sort_by(|a, b| (a.0, a.1.label()).cmp(&(b.0, b.1.label())));
    write_histogram(w, hists.iter().map(|(n, m, h)| (*n, m.label(), h.as_slice())))?;
    let mut summary = Vec::new();
    w.csv("tails.csv", |b| {
        row(b, format_args!("n,mode,k,tail,stderr,samples"))?;
        for (n, mode, h) in &hists {
            let tails = tail_probabilities(h, cfg.seed);
            for (k, t) in tails.iter().enumerate() {
                row(b, format_args!("{n},{},{k},{},{},{}", mode.label(), t.estimate, t.stderr, t.samples))?;
            }
            summary.push(json!({
                "n": n,
                "mode": mode.label(),
                "histogram_mode": histogram_mode(h),
                "k0": tails.iter().position(|t| t.estimate < 0.05),
            }));
        }
        Ok(())
    })?;
    w.json(
        "summary.json",
        json!({"subcommand": "crossings", "samples": cfg.samples, "m_cap": cfg.m_cap, "cells": summary}),
    )
}

fn write_histogram<'a>(
    w: &mut RunWriter,
    hists: impl Iterator<Item = (i32, &'a str, &'a [u64])>,
) -> Result<(), CliError> {
    w.csv("histogram.csv", |b| {
        row(b, format_args!("n,mode,k,count,capped"))?;
        for (n, mode, h) in hists {
            for (k, c) in h.iter().enumerate() {
                let capped = (k + 1 == h.len()) as u8;
                row(b, format_args!("{n},{mode},{k},{c},{capped}"))?;
            }
        }
        Ok(())
    })
}

pub fn arms_cmd(cfg: &ArmsConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let mut scales = cfg.s.clone();
    scales.sort_unstable();
    scales.dedup();
    let mut rows = Vec::new();
    for &s in &scales {
        let mut spec = ArmEventSpec::new(cfg.p, cfg.q, s, cfg.n)?
            .with_budget(cfg.budget.into())
            .with_center(Site::new(cfg.center[0], cfg.center[1]));
        spec.rotations = cfg.rotations;
        let est = estimate_arm_probability(&spec, cfg.samples, derive_seed(cfg.seed, s as u64, 0))?;
        rows.push((spec, est));
    }
    w.csv("arms.csv", |b| Ok(write_arm_csv(b, &rows)?))?;
    let positive: Vec<_> = rows.iter().filter(|(_, e)| e.estimate > 0.0).collect();
    let x: Vec<f64> = positive.iter().map(|(s, _)| (s.inner as f64 / s.outer as f64).ln()).collect();
    let y: Vec<f64> = positive.iter().map(|(_, e)| e.estimate.ln()).collect();
    let sig: Vec<f64> = positive.iter().map(|(_, e)| e.stderr / e.estimate).collect();
    let fit = weighted_line_fit(&x, &y, &sig).map(|f| {
        json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "slope_stderr": f.slope_stderr,
            "slope_lower95": f.slope - CONFIDENCE_Z * f.slope_stderr,
        })
    });
    w.json(
        "summary.json",
        json!({
            "subcommand": "arms",
            "budget": rows.first().map(|r| r.0.budget.label()),
            "lower_bound": rows.first().is_some_and(|r| r.0.is_lower_bound()),
            "estimates": rows.iter().map(|(s, e)| json!({"s": s.inner, "n": s.outer, "estimate": e.estimate, "stderr": e.stderr})).collect::<Vec<_>>(),
            "loglog_fit": fit,
        }),
    )
}

pub fn corrlen_cmd(cfg: &CorrlenConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let mut grid = cfg.n.clone();
    grid.sort_unstable();
    grid.dedup();
    let curves = cfg
        .p
        .iter()
        .map(|&p| estimate_correlation_length(p, cfg.delta, &grid, cfg.samples, cfg.seed))
        .collect::<ipsplice_core::Result<Vec<_>>>()?;
    w.csv("corrlen.csv", |b| Ok(write_crossing_csv(b, &curves)?))?;
    let mut pn = Vec::new();
    if let Some(pcfg) = &cfg.p_n {
        for &n in &pcfg.n {
            pn.push((n, estimate_p_n(n, cfg.delta, cfg.samples, cfg.seed, pcfg.tol)?));
        }
        w.csv("pn.csv", |b| {
            row(b, format_args!("n,delta,p_n,samples,seed"))?;
            for (n, p) in &pn {
                row(b, format_args!("{n},{},{p},{},{}", cfg.delta, cfg.samples, cfg.seed))?;
            }
            Ok(())
        })?;
    }
    w.json(
        "summary.json",
        json!({
            "subcommand": "corrlen",
            "delta": cfg.delta,
            "lengths": curves.iter().map(|c| json!({"p": c.p, "length": c.length})).collect::<Vec<_>>(),
            "p_n": pn.iter().map(|(n, p)| json!({"n": n, "p_n": p})).collect::<Vec<_>>(),
        }),
    )
}

/// `p_{n/l}` from the run directory's cache, computing and appending it when absent.
fn cached_p_n(w: &RunWriter, n: i32, l: i32, s: &StabilityConfig, seed: u64) -> Result<f64, CliError> {
    let path = w.dir().join("pn_cache.csv");
    let key = format!("{n},{l},{},{},{seed}", s.pn_delta, s.pn_samples);
    let text = fs::read_to_string(&path).unwrap_or_default();
    for line in text.lines() {
        if let Some(p) = line.strip_prefix(&key).and_then(|r| r.strip_prefix(',')) {
            return p
                .parse()
                .map_err(|_| CliError::RunDir(format!("bad p_n cache line: {line}")));
        }
    }
    let p = estimate_p_n(n / l, s.pn_delta, s.pn_samples, derive_seed(seed, n as u64, l as u64), 1e-3)?;
    let mut out = if text.is_empty() {
        w.stamp() + "n,l,delta,samples,seed,p\n"
    } else {
        text
    };
    out.push_str(&format!("{key},{p}\n"));
    fs::write(&path, out).map_err(|e| CliError::io(&path, e))?;
    Ok(p)
}

pub fn splice_cmd(cfg: &SpliceConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let mut eps = cfg.epsilon.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut modes = cfg.modes.clone();
    modes.sort_by_key(|m| m.with_lambda(cfg.lambda).label());
    modes.dedup();

    let params = MismatchParams {
        m_cap: cfg.m_cap,
        samples: cfg.samples,
        seed: cfg.seed,
        swap_check: cfg.swap_check,
    };
    let mut reports = Vec::new();
    for &n in &ns {
        let tranches = eps
            .iter()
            .map(|&e| build_tranche(n, e))
            .collect::<ipsplice_core::Result<Vec<_>>>()?;
        for &mode in &modes {
            let setup = SpliceSetup::new(n, mode.with_lambda(cfg.lambda))?;
            reports.push(estimate_mismatch_grid(&setup, &tranches, &params)?);
        }
    }

    w.csv("cells.csv", |b| {
        row(
            b,
            format_args!(
                "n,epsilon,mode,estimate,stderr,samples,seed,flagged,balls,tranche_edges,outside_estimate,outside_stderr,swapped_estimate"
            ),
        )?;
        for r in &reports {
            let mut cells: Vec<_> = r.cells.iter().collect();
            cells.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
            for c in cells {
                let opt = |e: Option<ipsplice_core::EstimateWithCI>, f: fn(&ipsplice_core::EstimateWithCI) -> f64| {
                    e.map(|e| f(&e).to_string()).unwrap_or_default()
                };
                row(
                    b,
                    format_args!(
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        c.n,
                        c.epsilon,
                        c.mode.label(),
                        c.mismatch.estimate,
                        c.mismatch.stderr,
                        c.mismatch.samples,
                        c.mismatch.seed,
                        c.flagged as u8,
                        c.num_balls,
                        c.tranche_edges,
                        opt(c.outside_discrepancy, |e| e.estimate),
                        opt(c.outside_discrepancy, |e| e.stderr),
                        opt(c.swapped, |e| e.estimate),
                    ),
                )?;
            }
        }
        Ok(())
    })?;
    w.csv("flips.csv", |b| {
        row(b, format_args!("n,epsilon,mode,event,m,estimate,stderr"))?;
        for r in &reports {
            for c in &r.cells {
                for (event, list) in [("eq", &c.flip_equal), ("ge", &c.flip_at_least)] {
                    for (m, e) in list.iter().enumerate() {
                        row(
                            b,
                            format_args!("{},{},{},{event},{m},{},{}", c.n, c.epsilon, c.mode.label(), e.estimate, e.stderr),
                        )?;
                    }
                }
            }
        }
        Ok(())
    })?;
    write_histogram(w, reports.iter().map(|r| (r.n, r.mode.label(), r.histogram.as_slice())))?;

    let mut trend = Vec::new();
    for r in &reports {
        let steps: Vec<Value> = r
            .cells
            .windows(2)
            .map(|c| {
                let (a, b) = (&c[0].mismatch, &c[1].mismatch);
                json!({
                    "from": c[0].epsilon,
                    "to": c[1].epsilon,
                    "decrease": a.estimate - b.estimate,
                    "sigma": combined_sigma(a.stderr, b.stderr),
                    "beyond_2sigma": a.estimate - b.estimate > 2.0 * combined_sigma(a.stderr, b.stderr),
                })
            })
            .collect();
        trend.push(json!({"n": r.n, "mode": r.mode.label(), "steps": steps}));
    }

    let variance = match &cfg.variance {
        None => Value::Null,
        Some(v) => {
            let mut rows = Vec::new();
            for r in &reports {
                let setup = SpliceSetup::new(r.n, r.mode)?;
                let m = match &v.m {
                    MPolicy::Fixed(m) => *m,
                    MPolicy::Keyword(_) => histogram_mode(&crossing_histogram(
                        &setup,
                        cfg.m_cap,
                        v.pilot_samples,
                        derive_seed(cfg.seed, STREAM_PILOT, r.n as u64),
                    )?),
                };
                for &e in &eps {
                    let rep = estimate_conditional_variance(
                        &setup,
                        &build_tranche(r.n, e)?,
                        &VarianceParams {
                            m,
                            outer_samples: v.outer_samples,
                            inner_samples: v.inner_samples,
                            deltas: v.deltas.clone(),
                            seed: cfg.seed,
                        },
                    )?;
                    rows.push((r.mode.label(), rep));
                }
            }
            rows.sort_by(|a, b| (a.1.n, a.0).cmp(&(b.1.n, b.0)).then(a.1.epsilon.total_cmp(&b.1.epsilon)));
            w.csv("variance.csv", |b| {
                row(
                    b,
                    format_args!("n,epsilon,mode,m,event,delta,interior,interior_stderr,variance,variance_stderr,markov_bound,sigma,holds"),
                )?;
                for (mode, rep) in &rows {
                    for cell in &rep.cells {
                        for c in &cell.checks {
                            row(
                                b,
                                format_args!(
                                    "{},{},{mode},{},{},{},{},{},{},{},{},{},{}",
                                    rep.n,
                                    rep.epsilon,
                                    rep.m,
                                    cell.event.label(),
                                    c.delta,
                                    c.interior.estimate,
                                    c.interior.stderr,
                                    cell.variance,
                                    cell.variance_stderr,
                                    c.markov_bound,
                                    c.sigma,
                                    c.holds as u8
                                ),
                            )?;
                        }
                    }
                }
                Ok(())
            })?;
            json!({
                "markov_holds": rows.iter().all(|(_, r)| r.cells.iter().all(|c| c.checks.iter().all(|k| k.holds))),
            })
        }
    };

    let stability = match &cfg.stability {
        None => Value::Null,
        Some(s) => {
            let mut rows = Vec::new();
            for &n in &ns {
                let p = match s.p {
                    Some(p) => p,
                    None => cached_p_n(w, n, s.l, s, cfg.seed)?,
                };
                for &e in &eps {
                    rows.push(a_event_stability(&StabilityParams {
                        n,
                        epsilon: e,
                        l: s.l,
                        lambda: s.lambda,
                        p: Some(p),
                        pn_delta: s.pn_delta,
                        pn_samples: s.pn_samples,
                        samples: s.samples,
                        seed: cfg.seed,
                    })?);
                }
            }
            rows.sort_by(|a, b| a.n.cmp(&b.n).then(a.epsilon.total_cmp(&b.epsilon)));
            w.csv("stability.csv", |b| {
                row(
                    b,
                    format_args!("n,epsilon,l,p,estimate,stderr,samples,a_frequency,four_arms,four_arms_samples"),
                )?;
                for r in &rows {
                    let (fa, fas) = r
                        .four_arms
                        .map(|e| (e.estimate.to_string(), e.samples.to_string()))
                        .unwrap_or_default();
                    row(
                        b,
                        format_args!(
                            "{},{},{},{},{},{},{},{},{fa},{fas}",
                            r.n, r.epsilon, s.l, r.p, r.destroyed.estimate, r.destroyed.stderr, r.destroyed.samples, r.a_frequency.estimate
                        ),
                    )?;
                }
                Ok(())
            })?;
            json!({"cells": rows.len()})
        }
    };

    let cells: Vec<Value> = reports
        .iter()
        .flat_map(|r| r.cells.iter())
        .map(|c| serde_json::to_value(c).expect("cells serialize"))
        .collect();
    w.json(
        "summary.json",
        json!({
            "subcommand": "splice",
            "samples": cfg.samples,
            "cells": cells,
            "trend": trend,
            "variance": variance,
            "stability": stability,
        }),
    )
}

pub fn verify_cmd(cfg: &VerifyConfig, w: &mut RunWriter) -> Result<Vec<CheckResult>, CliError> {
    let results = vec![
        checks::duality(cfg.duality_configs, cfg.seed)?,
        checks::pivotal_circuits(cfg.flip_configs, cfg.seed)?,
        checks::self_duality(&[2, 4, 8], cfg.rectangle_samples, cfg.seed)?,
        checks::sequence_consistency(16, 0.25, 20, cfg.seed)?,
    ];
    w.csv("checks.csv", |b| {
        row(b, format_args!("check,passed,detail"))?;
        for r in &results {
            row(b, format_args!("{},{},\"{}\"", r.name, r.passed as u8, r.detail.replace('"', "'")))?;
        }
        Ok(())
    })?;
    let map: BTreeMap<&str, bool> = results.iter().map(|r| (r.name.as_str(), r.passed)).collect();
    w.json(
        "summary.json",
        json!({
            "subcommand": "verify",
            "passed": results.iter().all(|r| r.passed),
            "checks": results,
            "flags": map,
        }),
    )?;
    Ok(results)
}
