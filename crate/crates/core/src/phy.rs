//! Channel estimation, precoding, power allocation and the use-and-then-forget
//! downlink SE bound.
//!
//! Pilots are mutually orthogonal, so the received pilot signal after
//! despreading with pilot `t` at AP `l` is `Σ_{i∈P_t} √p_i h_il + n_lt/√τ_p`
//! and never needs to be formed as a `τ_p`-length sequence.
//!
//! [`SeEvaluator`] draws coherence blocks, builds estimates and precoders
//! exactly as the APs would, and accumulates the sample moments
//!
//! * `a_kl = Re E{h_klᴴ w_kl}` for `l ∈ M_k`,
//! * `b_ki^{lm} = Re E{(h_klᴴ w_il)(h_kmᴴ w_im)*}` for `l, m ∈ M_i`,
//!
//! from which `SINR_k = (aᵀμ_k)² / (Σ_i μ_iᵀ B_ki μ_i − (aᵀμ_k)² + σ²)`.
//! Block `b` of the `(k, l)` channel and of the `(l, t)` pilot noise come from
//! their own seeded streams, so any split of the blocks into chunks and any
//! set of evaluated UEs sees the same realizations.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assoc::{AssocState, Gains};
use crate::channel::ChannelTemplate;
use crate::linalg::{CMat, Cholesky};
use crate::math::{cdot, cnorm, log2, pow, sqrt};
use crate::rng::{self, SimRng};
use crate::{ApId, Complex64, PilotId, UeId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhyError {
    #[error("channel estimate is zero")]
    ZeroEstimate,
    #[error("invalid physical-layer parameters: {0}")]
    BadParams(&'static str),
    #[error("UE {ue} is connected but has no channel template to AP {ap}")]
    MissingTemplate { ue: UeId, ap: ApId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Precoder {
    Mr,
    Rzf,
}

impl Precoder {
    pub fn as_str(self) -> &'static str {
        match self {
            Precoder::Mr => "mr",
            Precoder::Rzf => "rzf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SysParams {
    pub n_antennas: usize,
    pub tau_c: usize,
    pub tau_p: usize,
    /// Per-AP downlink power budget (W).
    pub p_max: f64,
    /// Noise power (W), uplink and downlink.
    pub sigma2: f64,
    /// Power allocation exponent.
    pub v: f64,
}

impl SysParams {
    pub fn validate(&self) -> Result<(), PhyError> {
        if self.n_antennas == 0 {
            return Err(PhyError::BadParams("n_antennas must be positive"));
        }
        if self.tau_p == 0 || self.tau_p >= self.tau_c {
            return Err(PhyError::BadParams("need 0 < tau_p < tau_c"));
        }
        if !(self.p_max > 0.0) || !(self.sigma2 > 0.0) {
            return Err(PhyError::BadParams("p_max and sigma2 must be positive"));
        }
        if !self.v.is_finite() {
            return Err(PhyError::BadParams("v must be finite"));
        }
        Ok(())
    }

    /// `τ_d / τ_c` with all non-pilot samples used for downlink data.
    pub fn prefactor(&self) -> f64 {
        (self.tau_c - self.tau_p) as f64 / self.tau_c as f64
    }
}

/// Pilot assignment `t_k` and its inverse `P_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotBook {
    pub tau_p: usize,
    pub assignment: Vec<Option<PilotId>>,
    pub groups: Vec<Vec<UeId>>,
}

impl PilotBook {
    pub fn new(tau_p: usize, assignment: Vec<Option<PilotId>>) -> Self {
        let mut groups = alloc::vec![Vec::new(); tau_p];
        for (k, t) in assignment.iter().enumerate() {
            if let Some(t) = *t {
                groups[t].push(k);
            }
        }
        Self { tau_p, assignment, groups }
    }

    /// Pilots of connected UEs.
    pub fn from_assoc(state: &AssocState) -> Self {
        let assignment = state.ues.iter().map(|u| if u.connected { u.pilot } else { None }).collect();
        Self::new(state.tau_p, assignment)
    }
}

/// One `CN(0, σ² I_n)` draw.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma2: f64) -> Vec<Complex64> {
    let s = sqrt(sigma2 / 2.0);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// LS estimate of `channels[target]` from the despread pilot signal, given
/// the pilot noise realization `noise ~ CN(0, σ² I)`.
///
/// `channels` and `powers` list every UE sharing the target's pilot.
pub fn ls_estimate_with_noise(
    channels: &[&[Complex64]],
    powers: &[f64],
    target: usize,
    tau_p: usize,
    noise: &[Complex64],
) -> Vec<Complex64> {
    let p_k = powers[target];
    let mut est: Vec<Complex64> = noise.iter().map(|z| z / sqrt(tau_p as f64 * p_k)).collect();
    for (h, &p) in channels.iter().zip(powers) {
        let w = sqrt(p / p_k);
        for (e, z) in est.iter_mut().zip(h.iter()) {
            *e += z * w;
        }
    }
    est
}

/// [`ls_estimate_with_noise`] with the noise drawn from `rng`.
pub fn ls_estimate<R: Rng + ?Sized>(
    channels: &[&[Complex64]],
    powers: &[f64],
    target: usize,
    tau_p: usize,
    sigma2: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let n = channels[target].len();
    let noise = draw_noise(rng, n, sigma2);
    ls_estimate_with_noise(channels, powers, target, tau_p, &noise)
}

/// Scales `v` to unit norm and rotates it so that `ĥᴴ w` is real and
/// non-negative.
fn normalize(mut v: Vec<Complex64>, h_hat: &[Complex64]) -> Result<Vec<Complex64>, PhyError> {
    let norm = cnorm(&v);
    if !(norm > 0.0) {
        return Err(PhyError::ZeroEstimate);
    }
    let z = cdot(h_hat, &v);
    let mag = sqrt(z.norm_sqr());
    let rot = if mag > 0.0 { z.conj() / (mag * norm) } else { Complex64::new(1.0 / norm, 0.0) };
    v.iter_mut().for_each(|x| *x *= rot);
    Ok(v)
}

/// Precoders of all UEs served by one AP, in the order of `estimates`.
///
/// Zero estimates yield `Err(ZeroEstimate)` in their slot.
pub fn precode_all(
    estimates: &[Vec<Complex64>],
    powers: &[f64],
    sigma2: f64,
    scheme: Precoder,
) -> Vec<Result<Vec<Complex64>, PhyError>> {
    match scheme {
        Precoder::Mr => estimates.iter().map(|h| normalize(h.clone(), h)).collect(),
        Precoder::Rzf if estimates.len() <= estimates.first().map_or(0, Vec::len) => rzf_dual(estimates, powers, sigma2),
        Precoder::Rzf => {
            let n = estimates.first().map_or(0, Vec::len);
            let mut gram = CMat::scaled_identity(n, sigma2);
            for (h, &p) in estimates.iter().zip(powers) {
                gram.add_outer(p, h);
            }
            let chol = match Cholesky::factor(&gram) {
                Ok(c) => c,
                Err(_) => return estimates.iter().map(|_| Err(PhyError::ZeroEstimate)).collect(),
            };
            estimates
                .iter()
                .zip(powers)
                .map(|(h, &p)| {
                    let rhs: Vec<Complex64> = h.iter().map(|z| z * p).collect();
                    normalize(chol.solve(&rhs), h)
                })
                .collect()
        }
    }
}

/// RZF through the `D × D` system when no more UEs than antennas are served:
/// with `G = Ĥ P^{1/2}`, `(G Gᴴ + σ² I)⁻¹ G = G (Gᴴ G + σ² I)⁻¹`.
fn rzf_dual(estimates: &[Vec<Complex64>], powers: &[f64], sigma2: f64) -> Vec<Result<Vec<Complex64>, PhyError>> {
    let d = estimates.len();
    let q: Vec<f64> = powers.iter().map(|&p| sqrt(p)).collect();
    let mut gram = CMat::scaled_identity(d, sigma2);
    for i in 0..d {
        for j in 0..d {
            gram[(i, j)] += cdot(&estimates[i], &estimates[j]) * (q[i] * q[j]);
        }
    }
    let chol = match Cholesky::factor(&gram) {
        Ok(c) => c,
        Err(_) => return estimates.iter().map(|_| Err(PhyError::ZeroEstimate)).collect(),
    };
    let n = estimates.first().map_or(0, Vec::len);
    (0..d)
        .map(|k| {
            let mut e = alloc::vec![Complex64::new(0.0, 0.0); d];
            e[k] = Complex64::new(q[k], 0.0);
            let c = chol.solve(&e);
            let mut w = alloc::vec![Complex64::new(0.0, 0.0); n];
            for (i, ci) in c.iter().enumerate() {
                let s = ci * q[i];
                for (wm, hm) in w.iter_mut().zip(&estimates[i]) {
                    *wm += hm * s;
                }
            }
            normalize(w, &estimates[k])
        })
        .collect()
}

/// Unit-norm precoder of `estimates[target]`.
pub fn precode(
    estimates: &[Vec<Complex64>],
    powers: &[f64],
    sigma2: f64,
    scheme: Precoder,
    target: usize,
) -> Result<Vec<Complex64>, PhyError> {
    match scheme {
        Precoder::Mr => normalize(estimates[target].clone(), &estimates[target]),
        Precoder::Rzf => precode_all(estimates, powers, sigma2, scheme).swap_remove(target),
    }
}

/// `ρ_k = p_max β_k^v / Σ_i β_i^v` over the served UEs of one AP.
pub fn allocate_power(beta_served: &[f64], v: f64, p_max: f64) -> Vec<f64> {
    let w: Vec<f64> = beta_served.iter().map(|&b| pow(b, v)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| p_max * x / total).collect()
}

/// Stream of block `block` of the `(ue, ap)` channel.
pub fn channel_stream(seed: u64, prefix: &[u64], block: u64, ue: UeId, ap: ApId) -> SimRng {
    keyed(seed, prefix, &[block, rng::tag::CHANNEL, ue as u64, ap as u64])
}

/// Stream of block `block` of the pilot noise of `pilot` at `ap`.
pub fn noise_stream(seed: u64, prefix: &[u64], block: u64, ap: ApId, pilot: PilotId) -> SimRng {
    keyed(seed, prefix, &[block, rng::tag::NOISE, ap as u64, pilot as u64])
}

fn keyed(seed: u64, prefix: &[u64], tail: &[u64; 4]) -> SimRng {
    let mut keys = [0u64; 12];
    let n = prefix.len().min(8);
    keys[..n].copy_from_slice(&prefix[..n]);
    keys[n..n + 4].copy_from_slice(tail);
    rng::stream(seed, &keys[..n + 4])
}

/// Everything [`SeEvaluator`] reads. `templates` is `K × L`, row-major by UE.
#[derive(Debug, Clone, Copy)]
pub struct SeSetup<'a> {
    pub assoc: &'a AssocState,
    pub gains: &'a Gains,
    pub templates: &'a [ChannelTemplate],
    pub p_ul: &'a [f64],
    pub sys: SysParams,
    pub precoder: Precoder,
}

/// Downlink power of every served pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAlloc {
    /// `rho[k][j]` is the power of UE `k` at its `j`-th cluster AP.
    pub rho: Vec<Vec<f64>>,
    /// `√ρ`, same layout.
    pub mu: Vec<Vec<f64>>,
}

impl PowerAlloc {
    pub fn from_assoc(assoc: &AssocState, gains: &Gains, v: f64, p_max: f64) -> Self {
        let mut rho: Vec<Vec<f64>> =
            assoc.ues.iter().map(|u| alloc::vec![0.0; if u.connected { u.cluster.len() } else { 0 }]).collect();
        for (l, ap) in assoc.aps.iter().enumerate() {
            let served: Vec<UeId> = ap.served().map(|(_, k)| k).collect();
            if served.is_empty() {
                continue;
            }
            let betas: Vec<f64> = served.iter().map(|&k| gains.get(k, l)).collect();
            for (&k, r) in served.iter().zip(allocate_power(&betas, v, p_max)) {
                let j = assoc.ues[k].cluster.iter().position(|&m| m == l).expect("served AP in cluster");
                rho[k][j] = r;
            }
        }
        let mu = rho.iter().map(|r| r.iter().map(|&x| sqrt(x)).collect()).collect();
        Self { rho, mu }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub sinr: Vec<f64>,
    pub se: Vec<f64>,
    pub prefactor: f64,
    /// Relative standard error of the estimated coherent gain `aᵀμ` per UE
    /// (zero for unserved UEs).
    pub signal_rel_se: Vec<f64>,
    /// UEs whose interference term came out negative and was floored at 0.
    pub clamped: usize,
}

/// Per-block moment sums; combine chunks with [`SeAccumulator::merge`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeAccumulator {
    pub n_blocks: u64,
    a: Vec<f64>,
    b: Vec<f64>,
    sig2: Vec<f64>,
    /// Precoders left at zero because the estimate vanished.
    pub degenerate: u64,
}

impl SeAccumulator {
    /// Appends `other`; the result depends on merge order only through
    /// floating-point reassociation.
    pub fn merge(&mut self, other: &SeAccumulator) {
        self.n_blocks += other.n_blocks;
        self.degenerate += other.degenerate;
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += y;
        }
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += y;
        }
        for (x, y) in self.sig2.iter_mut().zip(&other.sig2) {
            *x += y;
        }
    }
}

/// Streaming UatF evaluator for one association snapshot.
#[derive(Debug, Clone)]
pub struct SeEvaluator<'a> {
    setup: SeSetup<'a>,
    power: PowerAlloc,
    pilots: PilotBook,
    /// Connected UEs, ascending.
    active: Vec<UeId>,
    /// APs serving at least one UE, ascending.
    serving_aps: Vec<ApId>,
    /// Offsets of UE `k`'s `a` entries.
    a_off: Vec<usize>,
    /// Offsets of UE `i`'s `m_i × m_i` block inside one `k` row of `b`.
    b_off: Vec<usize>,
    b_row: usize,
}

impl<'a> SeEvaluator<'a> {
    pub fn new(setup: SeSetup<'a>) -> Result<Self, PhyError> {
        setup.sys.validate()?;
        let assoc = setup.assoc;
        let n_ues = assoc.ues.len();
        let n_aps = assoc.aps.len();
        if setup.gains.n_ues() != n_ues || setup.gains.n_aps() != n_aps || setup.p_ul.len() != n_ues {
            return Err(PhyError::BadParams("shape mismatch between association, gains and powers"));
        }
        if setup.templates.len() != n_ues * n_aps {
            return Err(PhyError::BadParams("templates must be K x L"));
        }
        if setup.p_ul.iter().any(|&p| !(p > 0.0)) {
            return Err(PhyError::BadParams("uplink powers must be positive"));
        }
        let active: Vec<UeId> = (0..n_ues).filter(|&k| assoc.ues[k].connected).collect();
        let serving_aps: Vec<ApId> = (0..n_aps).filter(|&l| assoc.aps[l].load() > 0).collect();
        for &k in &active {
            for &l in &serving_aps {
                if setup.templates[k * n_aps + l].n_antennas() != setup.sys.n_antennas {
                    return Err(PhyError::MissingTemplate { ue: k, ap: l });
                }
            }
        }
        let sizes: Vec<usize> =
            assoc.ues.iter().map(|u| if u.connected { u.cluster.len() } else { 0 }).collect();
        let mut a_off = Vec::with_capacity(n_ues);
        let mut b_off = Vec::with_capacity(n_ues);
        let (mut acc_a, mut acc_b) = (0, 0);
        for &m in &sizes {
            a_off.push(acc_a);
            b_off.push(acc_b);
            acc_a += m;
            acc_b += m * m;
        }
        a_off.push(acc_a);
        let power = PowerAlloc::from_assoc(assoc, setup.gains, setup.sys.v, setup.sys.p_max);
        let pilots = PilotBook::from_assoc(assoc);
        Ok(Self { setup, power, pilots, active, serving_aps, a_off, b_off, b_row: acc_b })
    }

    pub fn power(&self) -> &PowerAlloc {
        &self.power
    }

    pub fn empty_accumulator(&self) -> SeAccumulator {
        let k = self.setup.assoc.ues.len();
        SeAccumulator {
            n_blocks: 0,
            a: alloc::vec![0.0; self.a_off[k]],
            b: alloc::vec![0.0; k * self.b_row],
            sig2: alloc::vec![0.0; k],
            degenerate: 0,
        }
    }

    /// Accumulates the given blocks in order.
    pub fn accumulate(&self, blocks: Range<u64>, seed: u64, prefix: &[u64]) -> SeAccumulator {
        let mut acc = self.empty_accumulator();
        let assoc = self.setup.assoc;
        let n_aps = assoc.aps.len();
        let n = self.setup.sys.n_antennas;
        let zero = Complex64::new(0.0, 0.0);
        // h[k][l] for active k and serving l; w[k][j] per cluster slot.
        let mut h: Vec<Vec<Complex64>> = alloc::vec![Vec::new(); assoc.ues.len() * n_aps];
        let mut w: Vec<Vec<Vec<Complex64>>> =
            assoc.ues.iter().map(|u| alloc::vec![alloc::vec![zero; n]; u.cluster.len()]).collect();
        let mut g: Vec<Complex64> = Vec::new();

        for block in blocks {
            for &k in &self.active {
                for &l in &self.serving_aps {
                    let buf = &mut h[k * n_aps + l];
                    buf.resize(n, zero);
                    let mut r = channel_stream(seed, prefix, block, k, l);
                    self.setup.templates[k * n_aps + l].realize_into(&mut r, buf);
                }
            }
            for &l in &self.serving_aps {
                let served: Vec<(PilotId, UeId)> = assoc.aps[l].served().collect();
                let mut estimates = Vec::with_capacity(served.len());
                let mut powers = Vec::with_capacity(served.len());
                for &(t, k) in &served {
                    let group = &self.pilots.groups[t];
                    let chans: Vec<&[Complex64]> = group.iter().map(|&i| h[i * n_aps + l].as_slice()).collect();
                    let pw: Vec<f64> = group.iter().map(|&i| self.setup.p_ul[i]).collect();
                    let target = group.iter().position(|&i| i == k).expect("UE in its pilot group");
                    let noise = draw_noise(&mut noise_stream(seed, prefix, block, l, t), n, self.setup.sys.sigma2);
                    estimates.push(ls_estimate_with_noise(&chans, &pw, target, self.setup.sys.tau_p, &noise));
                    powers.push(self.setup.p_ul[k]);
                }
                let precoders = precode_all(&estimates, &powers, self.setup.sys.sigma2, self.setup.precoder);
                for (&(_, k), p) in served.iter().zip(precoders) {
                    let j = assoc.ues[k].cluster.iter().position(|&m| m == l).expect("served AP in cluster");
                    match p {
                        Ok(v) => w[k][j] = v,
                        Err(_) => {
                            w[k][j].iter_mut().for_each(|z| *z = zero);
                            acc.degenerate += 1;
                        }
                    }
                }
            }
            for &k in &self.active {
                let row = k * self.b_row;
                for &i in &self.active {
                    let cl = &assoc.ues[i].cluster;
                    let m = cl.len();
                    g.clear();
                    g.extend(cl.iter().enumerate().map(|(j, &l)| cdot(&h[k * n_aps + l], &w[i][j])));
                    let off = row + self.b_off[i];
                    for j1 in 0..m {
                        for j2 in 0..m {
                            acc.b[off + j1 * m + j2] += (g[j1] * g[j2].conj()).re;
                        }
                    }
                    if i == k {
                        let mut s = 0.0;
                        for j in 0..m {
                            acc.a[self.a_off[k] + j] += g[j].re;
                            s += self.power.mu[k][j] * g[j].re;
                        }
                        acc.sig2[k] += s * s;
                    }
                }
            }
            acc.n_blocks += 1;
        }
        acc
    }

    /// SINR and SE from accumulated moments.
    pub fn finish(&self, acc: &SeAccumulator) -> SeReport {
        let n_ues = self.setup.assoc.ues.len();
        let nb = acc.n_blocks.max(1) as f64;
        let sigma2 = self.setup.sys.sigma2;
        let prefactor = self.setup.sys.prefactor();
        let mut sinr = alloc::vec![0.0; n_ues];
        let mut rel_se = alloc::vec![0.0; n_ues];
        let mut clamped = 0;
        for &k in &self.active {
            let mu_k = &self.power.mu[k];
            let signal: f64 =
                mu_k.iter().enumerate().map(|(j, &mu)| mu * acc.a[self.a_off[k] + j] / nb).sum();
            let num = signal * signal;
            let row = k * self.b_row;
            let mut total = 0.0;
            for &i in &self.active {
                let mu_i = &self.power.mu[i];
                let m = mu_i.len();
                let off = row + self.b_off[i];
                for j1 in 0..m {
                    for j2 in 0..m {
                        total += mu_i[j1] * mu_i[j2] * acc.b[off + j1 * m + j2] / nb;
                    }
                }
            }
            let mut interference = total - num;
            if interference < 0.0 {
                interference = 0.0;
                clamped += 1;
            }
            sinr[k] = num / (interference + sigma2);
            if acc.n_blocks > 1 && signal != 0.0 {
                let var = (acc.sig2[k] / nb - signal * signal).max(0.0) * nb / (nb - 1.0);
                rel_se[k] = sqrt(var / nb) / signal.abs();
            }
        }
        let se = sinr.iter().map(|&s| prefactor * log2(1.0 + s)).collect();
        SeReport { sinr, se, prefactor, signal_rel_se: rel_se, clamped }
    }

    /// Accumulates `0..n_blocks` and finishes.
    pub fn evaluate(&self, n_blocks: u64, seed: u64, prefix: &[u64]) -> SeReport {
        self.finish(&self.accumulate(0..n_blocks, seed, prefix))
    }
}
