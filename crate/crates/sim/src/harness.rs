//! Drop/interval loop: mobility, tracing, association, SE evaluation.
//!
//! Interval 0 of every drop places the UEs and runs initial access; each
//! later interval moves the UEs by one step and applies the configured
//! policy. All randomness comes from keyed streams, so the result does not
//! depend on the number of worker threads.

use cellfree_core::assoc::{self, AssocEvents, AssocParams, AssocState, Gains};
use cellfree_core::channel::{avg_gain, trace_paths, ChannelTemplate};
use cellfree_core::mobility::{init_mobility, step_mobility, UeMobilityState, WalkArea};
use cellfree_core::phy::{Precoder, SeAccumulator, SeEvaluator, SeSetup};
use cellfree_core::rng::{stream, tag, SimRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Policy, Scenario};
use crate::summary::{SeStats, SummaryError};

/// Coherence blocks per work item. Fixed so the floating-point summation
/// order never depends on the thread count.
const BLOCK_CHUNK: u64 = 10;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("association failed in drop {drop}, interval {interval}: {source}")]
    Assoc { drop: usize, interval: usize, source: assoc::AssocError },
    #[error("SE evaluation failed in drop {drop}, interval {interval}: {source}")]
    Phy { drop: usize, interval: usize, source: cellfree_core::phy::PhyError },
    #[error("mobility setup failed: {0}")]
    Mobility(#[from] cellfree_core::mobility::MobilityError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error("cannot build thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// One `(drop, interval, UE)` sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    pub drop: usize,
    pub interval: usize,
    pub ue: usize,
    pub x: i64,
    pub y: i64,
    pub connected: bool,
    pub master: Option<usize>,
    pub pilot: Option<usize>,
    pub cluster_size: usize,
    pub n_candidates: usize,
    pub se_mr: Option<f64>,
    pub se_rzf: Option<f64>,
    pub master_handovers: u32,
    pub pilot_changes: u32,
    pub denials: u32,
    pub reconnects: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRow {
    pub drop: usize,
    pub interval: usize,
    pub ue_id: usize,
    pub event: &'static str,
    pub old_value: Option<usize>,
    pub new_value: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub drop: usize,
    pub interval: usize,
    pub ue: usize,
    pub x: i64,
    pub y: i64,
    pub heading_deg: f64,
    pub target_x: i64,
    pub target_y: i64,
}

/// Anomalies and self-checks accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub scan_capped: u64,
    pub target_capped: u64,
    pub clamped_sinr: u64,
    pub degenerate_precoders: u64,
    pub invariant_violations: u64,
    /// First few violation messages.
    pub violation_samples: Vec<String>,
    /// Largest relative standard error of a coherent gain estimate.
    pub max_signal_rel_se: f64,
}

impl Diagnostics {
    pub fn anomalies(&self) -> u64 {
        self.scan_capped + self.target_capped + self.clamped_sinr + self.degenerate_precoders
    }

    fn merge(&mut self, o: &Diagnostics) {
        self.scan_capped += o.scan_capped;
        self.target_capped += o.target_capped;
        self.clamped_sinr += o.clamped_sinr;
        self.degenerate_precoders += o.degenerate_precoders;
        self.invariant_violations += o.invariant_violations;
        for m in &o.violation_samples {
            if self.violation_samples.len() < 10 {
                self.violation_samples.push(m.clone());
            }
        }
        self.max_signal_rel_se = self.max_signal_rel_se.max(o.max_signal_rel_se);
    }

    fn violation(&mut self, msg: String) {
        self.invariant_violations += 1;
        if self.violation_samples.len() < 10 {
            self.violation_samples.push(msg);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub policy: &'static str,
    pub n_drops: usize,
    pub n_intervals: usize,
    pub n_ues: usize,
    pub t_ho: f64,
    pub se_mr: Option<SeStats>,
    pub se_rzf: Option<SeStats>,
    pub pilot_changes_total: u64,
    /// Pilot changes per second of simulated time, averaged over drops.
    pub pilot_change_rate: f64,
    pub master_handovers_total: u64,
    /// Master handovers per UE per second.
    pub master_handover_rate_per_ue: f64,
    pub denials_total: u64,
    pub reconnects_total: u64,
    /// Mean cluster size over connected UE-intervals.
    pub avg_cluster_size: f64,
    /// Same, restricted to UE-intervals with at least `m_max` candidates.
    pub avg_cluster_size_covered: Option<f64>,
    /// Share of UE-intervals with at least `m_max` candidates.
    pub covered_fraction: f64,
    pub connected_fraction: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<SampleRow>,
    pub events: Vec<EventRow>,
    pub traces: Vec<TraceRow>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Record per-step UE positions.
    pub traces: bool,
}

struct DropOutput {
    rows: Vec<SampleRow>,
    events: Vec<EventRow>,
    traces: Vec<TraceRow>,
    diag: Diagnostics,
}

/// Runs every drop of `scenario` and summarizes.
pub fn run(scenario: &Scenario, opts: RunOptions) -> Result<RunOutput, RunError> {
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| run_inner(scenario, opts))
        }
        None => run_inner(scenario, opts),
    }
}

fn run_inner(scenario: &Scenario, opts: RunOptions) -> Result<RunOutput, RunError> {
    let cfg = &scenario.config;
    let drops: Vec<DropOutput> =
        (0..cfg.n_drops).into_par_iter().map(|d| run_drop(scenario, d, opts)).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut events = Vec::new();
    let mut traces = Vec::new();
    let mut diag = Diagnostics::default();
    for d in drops {
        rows.extend(d.rows);
        events.extend(d.events);
        traces.extend(d.traces);
        diag.merge(&d.diag);
    }
    let summary = summarize(scenario, &rows, diag)?;
    Ok(RunOutput { rows, events, traces, summary })
}

/// Mobility states of one drop over all intervals, without any channel work.
pub fn mobility_trace(scenario: &Scenario, drop: usize) -> Result<(Vec<TraceRow>, Diagnostics), RunError> {
    let cfg = &scenario.config;
    let area = WalkArea::new(&scenario.map, scenario.region);
    let (mut ues, mut rngs) = place_ues(scenario, drop)?;
    let mut rows = Vec::new();
    let mut diag = Diagnostics::default();
    for n in 0..cfg.n_intervals {
        if n > 0 {
            step_all(&mut ues, &mut rngs, &area, scenario, &mut diag);
        }
        push_traces(&mut rows, drop, n, &ues);
    }
    Ok((rows, diag))
}

fn place_ues(scenario: &Scenario, drop: usize) -> Result<(Vec<UeMobilityState>, Vec<SimRng>), RunError> {
    let cfg = &scenario.config;
    let area = WalkArea::new(&scenario.map, scenario.region);
    let mut init = stream(cfg.seed, &[drop as u64, tag::MOBILITY]);
    let ues = init_mobility(&mut init, cfg.n_ues, &area, &cfg.mobility)?;
    let rngs = (0..cfg.n_ues).map(|k| stream(cfg.seed, &[drop as u64, tag::MOBILITY, k as u64])).collect();
    Ok((ues, rngs))
}

fn step_all(
    ues: &mut [UeMobilityState],
    rngs: &mut [SimRng],
    area: &WalkArea<'_>,
    scenario: &Scenario,
    diag: &mut Diagnostics,
) {
    for (u, r) in ues.iter_mut().zip(rngs.iter_mut()) {
        let (next, anomaly) = step_mobility(u, area, &scenario.config.mobility, r);
        diag.scan_capped += u64::from(anomaly.scan_capped);
        diag.target_capped += u64::from(anomaly.target_capped);
        *u = next;
    }
}

fn push_traces(rows: &mut Vec<TraceRow>, drop: usize, interval: usize, ues: &[UeMobilityState]) {
    for (k, u) in ues.iter().enumerate() {
        rows.push(TraceRow {
            drop,
            interval,
            ue: k,
            x: u.pos.x,
            y: u.pos.y,
            heading_deg: u.heading.to_degrees(),
            target_x: u.target.x,
            target_y: u.target.y,
        });
    }
}

fn run_drop(scenario: &Scenario, drop: usize, opts: RunOptions) -> Result<DropOutput, RunError> {
    let cfg = &scenario.config;
    let area = WalkArea::new(&scenario.map, scenario.region);
    let tracer = cfg.tracer_config();
    let params = cfg.assoc_params();
    let sys = cfg.sys_params();
    let p_ul = vec![cfg.p_ul; cfg.n_ues];
    let (n_ues, n_aps) = (cfg.n_ues, scenario.aps.len());

    let (mut ues, mut rngs) = place_ues(scenario, drop)?;
    let mut out = DropOutput { rows: Vec::new(), events: Vec::new(), traces: Vec::new(), diag: Diagnostics::default() };
    let mut state: Option<AssocState> = None;

    for n in 0..cfg.n_intervals {
        if n > 0 {
            step_all(&mut ues, &mut rngs, &area, scenario, &mut out.diag);
        }
        if opts.traces {
            push_traces(&mut out.traces, drop, n, &ues);
        }

        let mut gains = Gains::zeros(n_ues, n_aps);
        let mut templates = Vec::with_capacity(n_ues * n_aps);
        for (k, u) in ues.iter().enumerate() {
            for (l, ap) in scenario.aps.iter().enumerate() {
                let paths = trace_paths(ap, u.pos.center(), &scenario.map, &tracer);
                gains.set(k, l, avg_gain(&paths));
                templates.push(ChannelTemplate::new(&paths, cfg.n_antennas));
            }
        }

        let mut arng = stream(cfg.seed, &[drop as u64, n as u64, tag::ASSOC]);
        let (next, events) = associate(cfg.policy, state.as_ref(), &gains, &params, &mut arng)
            .map_err(|source| RunError::Assoc { drop, interval: n, source })?;
        let check_params = if cfg.policy == Policy::Udn { params.udn() } else { params };
        if let Err(v) = next.check(&gains, &check_params) {
            out.diag.violation(format!("drop {drop} interval {n}: {v}"));
        }
        if let Err(v) = events.check() {
            out.diag.violation(format!("drop {drop} interval {n}: {v}"));
        }

        let mut se_mr = None;
        let mut se_rzf = None;
        for &precoder in &cfg.precoders {
            let setup = SeSetup { assoc: &next, gains: &gains, templates: &templates, p_ul: &p_ul, sys, precoder };
            let eval = SeEvaluator::new(setup).map_err(|source| RunError::Phy { drop, interval: n, source })?;
            let acc = accumulate_blocks(&eval, cfg.n_blocks, cfg.seed, &[drop as u64, n as u64]);
            out.diag.degenerate_precoders += acc.degenerate;
            let report = eval.finish(&acc);
            out.diag.clamped_sinr += report.clamped as u64;
            let worst = report.signal_rel_se.iter().copied().fold(0.0, f64::max);
            out.diag.max_signal_rel_se = out.diag.max_signal_rel_se.max(worst);
            match precoder {
                Precoder::Mr => se_mr = Some(report.se),
                Precoder::Rzf => se_rzf = Some(report.se),
            }
        }

        record(&mut out, drop, n, &ues, &next, &events, se_mr.as_deref(), se_rzf.as_deref());
        state = Some(next);
    }
    Ok(out)
}

fn associate(
    policy: Policy,
    prev: Option<&AssocState>,
    gains: &Gains,
    params: &AssocParams,
    rng: &mut SimRng,
) -> Result<(AssocState, AssocEvents), assoc::AssocError> {
    match (policy, prev) {
        (Policy::Udn, None) => assoc::udn_initial_access(gains, params, rng),
        (Policy::Udn, Some(p)) => assoc::udn_step(p, gains, params, rng),
        (Policy::Dynamic, Some(p)) => assoc::update(p, gains, params, rng),
        (Policy::IaEveryStep, _) | (Policy::Dynamic, None) => assoc::initial_access(gains, params, rng),
    }
}

/// Accumulates `0..n_blocks` in fixed chunks evaluated in parallel and merged
/// in chunk order.
pub fn accumulate_blocks(eval: &SeEvaluator<'_>, n_blocks: u64, seed: u64, prefix: &[u64]) -> SeAccumulator {
    let n_chunks = n_blocks.div_ceil(BLOCK_CHUNK);
    let parts: Vec<SeAccumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|c| eval.accumulate(c * BLOCK_CHUNK..((c + 1) * BLOCK_CHUNK).min(n_blocks), seed, prefix))
        .collect();
    let mut acc = eval.empty_accumulator();
    for p in &parts {
        acc.merge(p);
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn record(
    out: &mut DropOutput,
    drop: usize,
    interval: usize,
    ues: &[UeMobilityState],
    state: &AssocState,
    events: &AssocEvents,
    se_mr: Option<&[f64]>,
    se_rzf: Option<&[f64]>,
) {
    for (k, u) in state.ues.iter().enumerate() {
        let c = events.per_ue[k];
        out.rows.push(SampleRow {
            drop,
            interval,
            ue: k,
            x: ues[k].pos.x,
            y: ues[k].pos.y,
            connected: u.connected,
            master: u.master,
            pilot: u.pilot,
            cluster_size: u.cluster.len(),
            n_candidates: u.candidates.len(),
            se_mr: se_mr.map(|s| s[k]),
            se_rzf: se_rzf.map(|s| s[k]),
            master_handovers: c.master_handovers,
            pilot_changes: c.pilot_changes,
            denials: c.denials,
            reconnects: c.reconnects,
        });
    }
    for e in &events.log {
        out.events.push(EventRow {
            drop,
            interval,
            ue_id: e.ue,
            event: e.kind.as_str(),
            old_value: e.old,
            new_value: e.new,
        });
    }
}

/// Aggregates per-sample rows into the run summary.
pub fn summarize(scenario: &Scenario, rows: &[SampleRow], diagnostics: Diagnostics) -> Result<Summary, SummaryError> {
    let cfg = &scenario.config;
    let se_stats = |pick: fn(&SampleRow) -> Option<f64>| -> Result<Option<SeStats>, SummaryError> {
        if rows.iter().all(|r| pick(r).is_none()) {
            return Ok(None);
        }
        let mut groups = vec![Vec::new(); cfg.n_drops];
        for r in rows {
            if let Some(v) = pick(r) {
                groups[r.drop].push(v);
            }
        }
        SeStats::from_groups(&groups).map(Some)
    };
    let se_mr = se_stats(|r| r.se_mr)?;
    let se_rzf = se_stats(|r| r.se_rzf)?;
    if rows.is_empty() {
        return Err(SummaryError::Empty);
    }

    let sum = |f: fn(&SampleRow) -> u32| rows.iter().map(|r| u64::from(f(r))).sum::<u64>();
    let pilot_changes_total = sum(|r| r.pilot_changes);
    let master_handovers_total = sum(|r| r.master_handovers);
    let seconds = (cfg.n_drops * cfg.n_intervals) as f64 * cfg.mobility.t_ho;

    let connected: Vec<&SampleRow> = rows.iter().filter(|r| r.connected).collect();
    let mean_size = |it: &[&SampleRow]| -> Option<f64> {
        (!it.is_empty()).then(|| it.iter().map(|r| r.cluster_size as f64).sum::<f64>() / it.len() as f64)
    };
    let m_max = if cfg.policy == Policy::Udn { 1 } else { cfg.assoc.m_max };
    let covered: Vec<&SampleRow> = connected.iter().copied().filter(|r| r.n_candidates >= m_max).collect();
    let n_covered = rows.iter().filter(|r| r.n_candidates >= m_max).count();

    Ok(Summary {
        name: cfg.name.clone(),
        policy: cfg.policy.as_str(),
        n_drops: cfg.n_drops,
        n_intervals: cfg.n_intervals,
        n_ues: cfg.n_ues,
        t_ho: cfg.mobility.t_ho,
        se_mr,
        se_rzf,
        pilot_changes_total,
        pilot_change_rate: pilot_changes_total as f64 / seconds,
        master_handovers_total,
        master_handover_rate_per_ue: master_handovers_total as f64 / (seconds * cfg.n_ues as f64),
        denials_total: sum(|r| r.denials),
        reconnects_total: sum(|r| r.reconnects),
        avg_cluster_size: mean_size(&connected).unwrap_or(0.0),
        avg_cluster_size_covered: mean_size(&covered),
        covered_fraction: n_covered as f64 / rows.len() as f64,
        connected_fraction: connected.len() as f64 / rows.len() as f64,
        diagnostics,
    })
}
