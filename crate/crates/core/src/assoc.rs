//! Distributed pilot assignment and AP cluster formation.
//!
//! Two procedures share one state model:
//!
//! * [`initial_access`] forms clusters from scratch. Each AP first shortlists
//!   its `min(τ_p, N_l)` strongest UEs. UEs then walk their candidate APs in
//!   descending gain until one whose shortlist contains them accepts; that AP
//!   becomes the master, picks the pilot, and invites the remaining
//!   candidates. An AP accepts an invitation iff the chosen pilot is free on
//!   it, so every AP serves at most one UE per pilot.
//! * [`update`] refines the previous association after the UEs moved (the
//!   soft handover). Lost links are pruned, disconnected UEs re-enter through
//!   the access walk, and connected UEs move their master to the strongest AP
//!   with a free slot only when it beats the current master by the handover
//!   margin. A new pilot is chosen only when the new master neither already
//!   serves the UE nor has the UE's pilot free.
//!
//! The single-AP ultra-dense baseline ([`udn_initial_access`], [`udn_step`])
//! runs the same machinery with clusters capped at one AP and the basic
//! pilot metric.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math::db_to_linear;
use crate::{ApId, PilotId, UeId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssocError {
    #[error("AP {0} has no free pilot")]
    NoFreePilot(ApId),
    #[error("invalid association parameters: {0}")]
    BadParams(&'static str),
}

/// How the master AP chooses among its free pilots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PilotMetric {
    /// Least interference sensed at the master.
    #[default]
    Basic,
    /// Serving-set based: availability on the strongest nearby APs minus the
    /// interference sensed at the master.
    Ssb,
}

/// Order in which UEs are processed by the greedy procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UeOrder {
    #[default]
    Ascending,
    /// A fresh seeded permutation per call.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssocParams {
    pub tau_p: usize,
    pub m_max: usize,
    /// Handover margin (dB).
    pub m_ho_db: f64,
    /// Gains strictly above this (linear) make an AP a candidate.
    pub gain_threshold: f64,
    pub pilot_metric: PilotMetric,
    pub ue_order: UeOrder,
}

impl AssocParams {
    pub fn validate(&self) -> Result<(), AssocError> {
        if self.tau_p == 0 {
            return Err(AssocError::BadParams("tau_p must be at least 1"));
        }
        if self.m_max == 0 {
            return Err(AssocError::BadParams("m_max must be at least 1"));
        }
        if !(self.m_ho_db >= 0.0) {
            return Err(AssocError::BadParams("m_ho_db must be non-negative"));
        }
        if !(self.gain_threshold >= 0.0) {
            return Err(AssocError::BadParams("gain_threshold must be non-negative"));
        }
        Ok(())
    }

    /// Parameters of the single-AP baseline derived from these.
    pub fn udn(&self) -> Self {
        Self { m_max: 1, pilot_metric: PilotMetric::Basic, ..*self }
    }

    fn margin(&self) -> f64 {
        db_to_linear(self.m_ho_db)
    }
}

/// Average channel gains `β[k][l]`, row-major by UE.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    n_ues: usize,
    n_aps: usize,
    data: Vec<f64>,
}

impl Gains {
    pub fn zeros(n_ues: usize, n_aps: usize) -> Self {
        Self { n_ues, n_aps, data: alloc::vec![0.0; n_ues * n_aps] }
    }

    /// Panics if `data.len() != n_ues * n_aps`.
    pub fn from_rows(n_ues: usize, n_aps: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_ues * n_aps, "gain matrix shape");
        Self { n_ues, n_aps, data }
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    #[inline]
    pub fn get(&self, k: UeId, l: ApId) -> f64 {
        self.data[k * self.n_aps + l]
    }

    pub fn set(&mut self, k: UeId, l: ApId, beta: f64) {
        self.data[k * self.n_aps + l] = beta;
    }

    pub fn row(&self, k: UeId) -> &[f64] {
        &self.data[k * self.n_aps..(k + 1) * self.n_aps]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UeAssoc {
    pub master: Option<ApId>,
    pub pilot: Option<PilotId>,
    /// Serving APs, ascending id.
    pub cluster: Vec<ApId>,
    /// Candidate APs, descending gain.
    pub candidates: Vec<ApId>,
    pub connected: bool,
}

/// Pilot slot table of one AP. `slots[t]` is the UE served on pilot `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ApAssoc {
    pub slots: Vec<Option<UeId>>,
}

impl ApAssoc {
    pub fn new(tau_p: usize) -> Self {
        Self { slots: alloc::vec![None; tau_p] }
    }

    pub fn is_free(&self, t: PilotId) -> bool {
        self.slots[t].is_none()
    }

    pub fn free_pilots(&self) -> impl Iterator<Item = PilotId> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_none()).map(|(t, _)| t)
    }

    /// `|D_l|`.
    pub fn load(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_full(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    /// Served UEs (`D_l`) with their pilots, ascending pilot.
    pub fn served(&self) -> impl Iterator<Item = (PilotId, UeId)> + '_ {
        self.slots.iter().enumerate().filter_map(|(t, s)| s.map(|k| (t, k)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssocState {
    pub tau_p: usize,
    pub ues: Vec<UeAssoc>,
    pub aps: Vec<ApAssoc>,
}

impl AssocState {
    pub fn new(n_ues: usize, n_aps: usize, tau_p: usize) -> Self {
        Self {
            tau_p,
            ues: alloc::vec![UeAssoc::default(); n_ues],
            aps: alloc::vec![ApAssoc::new(tau_p); n_aps],
        }
    }

    /// Connected UEs holding pilot `t` (`P_t`).
    pub fn pilot_holders(&self, t: PilotId) -> impl Iterator<Item = UeId> + '_ {
        self.ues
            .iter()
            .enumerate()
            .filter(move |(_, u)| u.connected && u.pilot == Some(t))
            .map(|(k, _)| k)
    }

    pub fn connected_count(&self) -> usize {
        self.ues.iter().filter(|u| u.connected).count()
    }

    fn reserve(&mut self, k: UeId, l: ApId, t: PilotId) {
        debug_assert!(self.aps[l].slots[t].is_none(), "slot {t} at AP {l} taken");
        self.aps[l].slots[t] = Some(k);
    }

    /// Frees every slot held by `k` and clears its cluster.
    fn release_all(&mut self, k: UeId) {
        if let Some(t) = self.ues[k].pilot {
            for &l in &self.ues[k].cluster {
                if self.aps[l].slots[t] == Some(k) {
                    self.aps[l].slots[t] = None;
                }
            }
        }
        self.ues[k].cluster.clear();
    }

    /// Checks every structural invariant of the association against `gains`.
    pub fn check(&self, gains: &Gains, params: &AssocParams) -> Result<(), Violation> {
        let mut slot_entries = 0usize;
        for (l, ap) in self.aps.iter().enumerate() {
            if ap.slots.len() != self.tau_p {
                return Err(Violation::SlotTableSize { ap: l });
            }
            for (t, k) in ap.served() {
                slot_entries += 1;
                let u = &self.ues[k];
                if !u.connected || u.pilot != Some(t) || !u.cluster.contains(&l) {
                    return Err(Violation::DanglingSlot { ap: l, pilot: t, ue: k });
                }
            }
        }
        let mut cluster_entries = 0usize;
        for (k, u) in self.ues.iter().enumerate() {
            if !u.connected {
                if !u.cluster.is_empty() {
                    return Err(Violation::DisconnectedWithCluster { ue: k });
                }
                continue;
            }
            let (Some(master), Some(t)) = (u.master, u.pilot) else {
                return Err(Violation::MissingMasterOrPilot { ue: k });
            };
            if !u.cluster.contains(&master) {
                return Err(Violation::MasterOutsideCluster { ue: k });
            }
            if u.cluster.is_empty() || u.cluster.len() > params.m_max {
                return Err(Violation::ClusterSize { ue: k, size: u.cluster.len() });
            }
            if u.cluster.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Violation::ClusterNotSorted { ue: k });
            }
            for &l in &u.cluster {
                if !(gains.get(k, l) > 0.0) {
                    return Err(Violation::ZeroGainMember { ue: k, ap: l });
                }
                if self.aps[l].slots[t] != Some(k) {
                    return Err(Violation::MissingSlot { ue: k, ap: l });
                }
            }
            cluster_entries += u.cluster.len();
        }
        if slot_entries != cluster_entries {
            return Err(Violation::ServedSetMismatch);
        }
        // Implied by the slot check, asserted directly anyway.
        for (a, ua) in self.ues.iter().enumerate().filter(|(_, u)| u.connected) {
            for (b, ub) in self.ues.iter().enumerate().skip(a + 1).filter(|(_, u)| u.connected) {
                if ua.pilot == ub.pilot && ua.cluster.iter().any(|l| ub.cluster.contains(l)) {
                    return Err(Violation::SharedPilotOverlap { a, b });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("AP {ap} slot table has the wrong size")]
    SlotTableSize { ap: ApId },
    #[error("AP {ap} holds pilot {pilot} for UE {ue} which does not list it")]
    DanglingSlot { ap: ApId, pilot: PilotId, ue: UeId },
    #[error("disconnected UE {ue} still has serving APs")]
    DisconnectedWithCluster { ue: UeId },
    #[error("connected UE {ue} lacks a master or a pilot")]
    MissingMasterOrPilot { ue: UeId },
    #[error("master of UE {ue} is not in its cluster")]
    MasterOutsideCluster { ue: UeId },
    #[error("UE {ue} has cluster size {size}")]
    ClusterSize { ue: UeId, size: usize },
    #[error("cluster of UE {ue} is not sorted")]
    ClusterNotSorted { ue: UeId },
    #[error("UE {ue} is served by AP {ap} with zero gain")]
    ZeroGainMember { ue: UeId, ap: ApId },
    #[error("AP {ap} serves UE {ue} without holding its pilot")]
    MissingSlot { ue: UeId, ap: ApId },
    #[error("served sets are not the inverse image of the clusters")]
    ServedSetMismatch,
    #[error("UEs {a} and {b} share a pilot and a serving AP")]
    SharedPilotOverlap { a: UeId, b: UeId },
    #[error("UE {ue} changed pilot without a master handover")]
    PilotChangeWithoutHandover { ue: UeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EventKind {
    MasterHandover,
    PilotChange,
    Denial,
    Reconnect,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::MasterHandover => "master_handover",
            EventKind::PilotChange => "pilot_change",
            EventKind::Denial => "denial",
            EventKind::Reconnect => "reconnect",
        }
    }
}

/// One association event. `old`/`new` are AP ids for handovers and pilot
/// ids for pilot changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssocEvent {
    pub ue: UeId,
    pub kind: EventKind,
    pub old: Option<usize>,
    pub new: Option<usize>,
}

/// Per-UE event counts for one interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UeEventCounts {
    pub master_handovers: u32,
    pub pilot_changes: u32,
    pub denials: u32,
    pub reconnects: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssocEvents {
    pub per_ue: Vec<UeEventCounts>,
    pub log: Vec<AssocEvent>,
}

impl AssocEvents {
    pub fn new(n_ues: usize) -> Self {
        Self { per_ue: alloc::vec![UeEventCounts::default(); n_ues], log: Vec::new() }
    }

    fn push(&mut self, ue: UeId, kind: EventKind, old: Option<usize>, new: Option<usize>) {
        let c = &mut self.per_ue[ue];
        match kind {
            EventKind::MasterHandover => c.master_handovers += 1,
            EventKind::PilotChange => c.pilot_changes += 1,
            EventKind::Denial => c.denials += 1,
            EventKind::Reconnect => c.reconnects += 1,
        }
        self.log.push(AssocEvent { ue, kind, old, new });
    }

    pub fn master_handovers(&self) -> u64 {
        self.per_ue.iter().map(|c| u64::from(c.master_handovers)).sum()
    }

    pub fn pilot_changes(&self) -> u64 {
        self.per_ue.iter().map(|c| u64::from(c.pilot_changes)).sum()
    }

    pub fn denials(&self) -> u64 {
        self.per_ue.iter().map(|c| u64::from(c.denials)).sum()
    }

    pub fn reconnects(&self) -> u64 {
        self.per_ue.iter().map(|c| u64::from(c.reconnects)).sum()
    }

    /// A pilot change must come with a master handover of the same UE.
    pub fn check(&self) -> Result<(), Violation> {
        match self.per_ue.iter().position(|c| c.pilot_changes > 0 && c.master_handovers == 0) {
            Some(ue) => Err(Violation::PilotChangeWithoutHandover { ue }),
            None => Ok(()),
        }
    }
}

fn by_gain_desc(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// APs with gain strictly above the threshold, strongest first; equal gains
/// are ordered by ascending AP id.
pub fn candidate_set(beta_row: &[f64], gain_threshold: f64) -> Vec<ApId> {
    let mut c: Vec<(ApId, f64)> =
        beta_row.iter().copied().enumerate().filter(|&(_, b)| b > gain_threshold).collect();
    c.sort_by(|&a, &b| by_gain_desc(a, b));
    c.into_iter().map(|(l, _)| l).collect()
}

/// Basic metric: the free pilot with the least sensed interference.
///
/// `sensed[t]` is the interference on pilot `t` at the master. When free
/// pilots with exactly zero interference exist one of them is drawn
/// uniformly; otherwise the smallest wins, ties to the lower pilot id.
pub fn pick_pilot_basic<R: Rng + ?Sized>(
    master: &ApAssoc,
    sensed: &[f64],
    rng: &mut R,
) -> Option<PilotId> {
    let quiet: Vec<PilotId> = master.free_pilots().filter(|&t| sensed[t] == 0.0).collect();
    if !quiet.is_empty() {
        return Some(quiet[rng.random_range(0..quiet.len())]);
    }
    master
        .free_pilots()
        .min_by(|&a, &b| sensed[a].partial_cmp(&sensed[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)))
}

/// Serving-set-based metric: maximizes `serving_gain[t] - sensed[t]` over the
/// master's free pilots, ties to the lower pilot id.
///
/// `serving_gain[t]` is the summed gain of the UE's strongest candidate APs
/// on which pilot `t` is free (see [`ssb_serving_gain`]).
pub fn pick_pilot_ssb(master: &ApAssoc, sensed: &[f64], serving_gain: &[f64]) -> Option<PilotId> {
    let score = |t: PilotId| serving_gain[t] - sensed[t];
    master
        .free_pilots()
        .max_by(|&a, &b| score(a).partial_cmp(&score(b)).unwrap_or(Ordering::Equal).then(b.cmp(&a)))
}

/// `Σ_{l ∈ A'} β_l · [pilot t free on l]` for every pilot `t`, where `A'`
/// is the first `min(m_max, |candidates|)` candidates.
pub fn ssb_serving_gain(state: &AssocState, beta_row: &[f64], candidates: &[ApId], m_max: usize) -> Vec<f64> {
    let mut g = alloc::vec![0.0; state.tau_p];
    for &l in candidates.iter().take(m_max) {
        for t in state.aps[l].free_pilots() {
            g[t] += beta_row[l];
        }
    }
    g
}

/// Interference sensed by `ap` on every pilot: the summed gains to `ap` of
/// all connected UEs holding that pilot, excluding `exclude`.
pub fn sensed_interference(state: &AssocState, gains: &Gains, ap: ApId, exclude: UeId) -> Vec<f64> {
    let mut s = alloc::vec![0.0; state.tau_p];
    for (i, u) in state.ues.iter().enumerate() {
        if i == exclude || !u.connected {
            continue;
        }
        if let Some(t) = u.pilot {
            s[t] += gains.get(i, ap);
        }
    }
    s
}

fn processing_order<R: Rng + ?Sized>(n: usize, order: UeOrder, rng: &mut R) -> Vec<UeId> {
    let mut v: Vec<UeId> = (0..n).collect();
    if order == UeOrder::Shuffled {
        v.shuffle(rng);
    }
    v
}

fn choose_pilot<R: Rng + ?Sized>(
    st: &AssocState,
    gains: &Gains,
    k: UeId,
    master: ApId,
    params: &AssocParams,
    rng: &mut R,
) -> Result<PilotId, AssocError> {
    let sensed = sensed_interference(st, gains, master, k);
    let picked = match params.pilot_metric {
        PilotMetric::Basic => pick_pilot_basic(&st.aps[master], &sensed, rng),
        PilotMetric::Ssb => {
            let serving = ssb_serving_gain(st, gains.row(k), &st.ues[k].candidates, params.m_max);
            pick_pilot_ssb(&st.aps[master], &sensed, &serving)
        }
    };
    picked.ok_or(AssocError::NoFreePilot(master))
}

/// Appoints `master`, reserves `pilot` there and on the strongest invitees
/// that have it free, up to `m_max` APs in total.
fn form_cluster(
    st: &mut AssocState,
    k: UeId,
    master: ApId,
    pilot: PilotId,
    invitees: &[ApId],
    params: &AssocParams,
) {
    st.reserve(k, master, pilot);
    let mut cluster = alloc::vec![master];
    for &l in invitees {
        if cluster.len() >= params.m_max {
            break;
        }
        if l != master && st.aps[l].is_free(pilot) {
            st.reserve(k, l, pilot);
            cluster.push(l);
        }
    }
    cluster.sort_unstable();
    let u = &mut st.ues[k];
    u.master = Some(master);
    u.pilot = Some(pilot);
    u.cluster = cluster;
    u.connected = true;
}

fn disconnect(st: &mut AssocState, k: UeId) {
    st.release_all(k);
    let u = &mut st.ues[k];
    u.master = None;
    u.pilot = None;
    u.connected = false;
}

/// Initial pilot assignment and cluster formation for all UEs.
pub fn initial_access<R: Rng + ?Sized>(
    gains: &Gains,
    params: &AssocParams,
    rng: &mut R,
) -> Result<(AssocState, AssocEvents), AssocError> {
    params.validate()?;
    let (n_ues, n_aps) = (gains.n_ues(), gains.n_aps());
    let mut st = AssocState::new(n_ues, n_aps, params.tau_p);
    let mut events = AssocEvents::new(n_ues);

    // Provisional served sets: each AP's min(τ_p, N_l) strongest UEs.
    let shortlist: Vec<Vec<UeId>> = (0..n_aps)
        .map(|l| {
            let mut col: Vec<(UeId, f64)> =
                (0..n_ues).map(|k| (k, gains.get(k, l))).filter(|&(_, b)| b > params.gain_threshold).collect();
            col.sort_by(|&a, &b| by_gain_desc(a, b));
            col.truncate(params.tau_p);
            col.into_iter().map(|(k, _)| k).collect()
        })
        .collect();

    for k in processing_order(n_ues, params.ue_order, rng) {
        let cand = candidate_set(gains.row(k), params.gain_threshold);
        st.ues[k].candidates = cand.clone();
        // An AP accepts the request iff the UE is on its shortlist and it
        // still has a pilot slot left.
        let Some(i) = cand.iter().position(|&l| shortlist[l].contains(&k) && !st.aps[l].is_full()) else {
            events.push(k, EventKind::Denial, None, None);
            continue;
        };
        let master = cand[i];
        let pilot = choose_pilot(&st, gains, k, master, params, rng)?;
        form_cluster(&mut st, k, master, pilot, &cand[i + 1..], params);
    }
    Ok((st, events))
}

/// One interval of the pilot assignment and cluster update.
pub fn update<R: Rng + ?Sized>(
    prev: &AssocState,
    gains: &Gains,
    params: &AssocParams,
    rng: &mut R,
) -> Result<(AssocState, AssocEvents), AssocError> {
    params.validate()?;
    let n_ues = gains.n_ues();
    let mut st = prev.clone();
    let mut events = AssocEvents::new(n_ues);
    let order = processing_order(n_ues, params.ue_order, rng);

    // Prune lost links; collect UEs without any serving AP.
    let mut without: Vec<UeId> = Vec::new();
    let mut lost: Vec<Option<(ApId, PilotId)>> = alloc::vec![None; n_ues];
    for &k in &order {
        if st.ues[k].connected {
            let t = st.ues[k].pilot.expect("connected UE has a pilot");
            let cluster = core::mem::take(&mut st.ues[k].cluster);
            let (keep, drop): (Vec<ApId>, Vec<ApId>) = cluster.into_iter().partition(|&l| gains.get(k, l) > 0.0);
            for l in drop {
                st.aps[l].slots[t] = None;
            }
            st.ues[k].cluster = keep;
            let master = st.ues[k].master.expect("connected UE has a master");
            if st.ues[k].cluster.is_empty() {
                lost[k] = Some((master, t));
                disconnect(&mut st, k);
                without.push(k);
            } else if !st.ues[k].cluster.contains(&master) {
                let new_master = st.ues[k]
                    .cluster
                    .iter()
                    .map(|&l| (l, gains.get(k, l)))
                    .min_by(|&a, &b| by_gain_desc(a, b))
                    .map(|(l, _)| l)
                    .expect("non-empty cluster");
                st.ues[k].master = Some(new_master);
                events.push(k, EventKind::MasterHandover, Some(master), Some(new_master));
            }
        } else {
            without.push(k);
        }
        st.ues[k].candidates = candidate_set(gains.row(k), params.gain_threshold);
    }

    // Reconnection through the access walk; full APs reject.
    for &k in &without {
        let cand = st.ues[k].candidates.clone();
        let Some(i) = cand.iter().position(|&l| !st.aps[l].is_full()) else {
            events.push(k, EventKind::Denial, None, None);
            continue;
        };
        let master = cand[i];
        let pilot = choose_pilot(&st, gains, k, master, params, rng)?;
        form_cluster(&mut st, k, master, pilot, &cand[i + 1..], params);
        events.push(k, EventKind::Reconnect, None, Some(master));
        if let Some((old_master, old_pilot)) = lost[k] {
            events.push(k, EventKind::MasterHandover, Some(old_master), Some(master));
            if old_pilot != pilot {
                events.push(k, EventKind::PilotChange, Some(old_pilot), Some(pilot));
            }
        }
    }

    let margin = params.margin();
    for &k in &order {
        if lost[k].is_some() || !prev.ues[k].connected || !st.ues[k].connected {
            continue;
        }
        let cand = st.ues[k].candidates.clone();
        // Strongest candidate with a free slot; without one the cluster stays.
        let Some(i) = cand.iter().position(|&l| !st.aps[l].is_full()) else {
            continue;
        };
        let best = cand[i];
        let master = st.ues[k].master.expect("connected UE has a master");
        let t = st.ues[k].pilot.expect("connected UE has a pilot");
        if gains.get(k, best) > gains.get(k, master) * margin {
            st.ues[k].master = Some(best);
            events.push(k, EventKind::MasterHandover, Some(master), Some(best));
            if !st.ues[k].cluster.contains(&best) && !st.aps[best].is_free(t) {
                st.release_all(k);
                st.ues[k].pilot = None;
                let pilot = choose_pilot(&st, gains, k, best, params, rng)?;
                form_cluster(&mut st, k, best, pilot, &cand[i + 1..], params);
                events.push(k, EventKind::PilotChange, Some(t), Some(pilot));
                continue;
            }
        }
        refine_cluster(&mut st, gains, k, &cand, params);
    }

    Ok((st, events))
}

/// Invites candidates outside the cluster on the UE's current pilot and keeps
/// the master plus the strongest members of the enlarged set.
fn refine_cluster(st: &mut AssocState, gains: &Gains, k: UeId, cand: &[ApId], params: &AssocParams) {
    let t = st.ues[k].pilot.expect("connected UE has a pilot");
    let master = st.ues[k].master.expect("connected UE has a master");
    let current = st.ues[k].cluster.clone();
    let accepted = cand.iter().copied().filter(|l| !current.contains(l) && st.aps[*l].is_free(t));

    let mut pool: Vec<(ApId, f64)> =
        current.iter().copied().chain(accepted).filter(|&l| l != master).map(|l| (l, gains.get(k, l))).collect();
    pool.sort_by(|&a, &b| by_gain_desc(a, b));
    let mut next: Vec<ApId> = core::iter::once(master)
        .chain(pool.into_iter().map(|(l, _)| l))
        .take(params.m_max)
        .collect();
    next.sort_unstable();

    for &l in &current {
        if !next.contains(&l) {
            st.aps[l].slots[t] = None;
        }
    }
    for &l in &next {
        if !current.contains(&l) {
            st.reserve(k, l, t);
        }
    }
    st.ues[k].cluster = next;
}

/// Initial access of the single-AP baseline.
pub fn udn_initial_access<R: Rng + ?Sized>(
    gains: &Gains,
    params: &AssocParams,
    rng: &mut R,
) -> Result<(AssocState, AssocEvents), AssocError> {
    initial_access(gains, &params.udn(), rng)
}

/// One interval of the single-AP baseline: hand over to the strongest AP
/// with a free slot when it beats the server by the margin or the server is
/// lost; the pilot changes iff the old one is taken at the new server.
pub fn udn_step<R: Rng + ?Sized>(
    prev: &AssocState,
    gains: &Gains,
    params: &AssocParams,
    rng: &mut R,
) -> Result<(AssocState, AssocEvents), AssocError> {
    update(prev, gains, &params.udn(), rng)
}
