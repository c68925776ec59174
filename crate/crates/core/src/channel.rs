//! Spatially consistent multipath channels.
//!
//! [`trace_paths`] is a 2D image-method tracer over the site map facades:
//! the direct path when it is unobstructed, plus specular reflections off
//! building walls up to `max_reflections` bounces. Path lengths are unfolded
//! in 3D using the AP/UE height difference. Each path carries a free-space
//! amplitude scaled by a per-bounce reflection loss.
//!
//! Per coherence block, [`realize_channel`] combines the paths with fresh
//! uniform phases into the `N`-antenna ULA channel
//! `h = Σ α_i e^{-jψ_i} a(φ_i)`.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng;

use crate::geom::{mirror_across, Point, Wall};
use crate::math::{angle_of, cis, pow, sin, sqrt, wrap_angle};
use crate::sitemap::SiteMap;
use crate::{Complex64, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("path length must be positive (got {0})")]
    NonPositiveLength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ApSite {
    pub pos: Point,
    /// Mounting height (m).
    pub height: f64,
    pub n_antennas: usize,
    /// Direction the ULA broadside faces, radians from the +x axis.
    pub boresight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerConfig {
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Amplitude factor applied per reflection (linear, in `(0, 1]`).
    pub refl_amplitude: f64,
    /// 0, 1 or 2.
    pub max_reflections: u8,
    pub ue_height: f64,
}

impl TracerConfig {
    /// Reflection loss given in dB (positive number = loss).
    pub fn with_loss_db(f_c: f64, refl_loss_db: f64, max_reflections: u8, ue_height: f64) -> Self {
        Self {
            f_c,
            refl_amplitude: pow(10.0, -refl_loss_db / 20.0),
            max_reflections: max_reflections.min(2),
            ue_height,
        }
    }
}

impl Default for TracerConfig {
    fn default() -> Self {
        Self::with_loss_db(28e9, 6.0, 1, 1.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropPath {
    /// Amplitude α (linear).
    pub gain: f64,
    /// Departure angle relative to the AP boresight, `[0, 2π)`.
    pub aod: f64,
    /// Unfolded 3D length (m).
    pub length: f64,
    pub bounces: u8,
    /// Facade indices hit, in order.
    pub via: [Option<u32>; 2],
}

/// All propagation paths between one AP and one UE location.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathSet {
    pub paths: Vec<PropPath>,
}

impl PathSet {
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    /// Sorted facade list of the set, used to detect path births and deaths.
    pub fn signature(&self) -> Vec<[Option<u32>; 2]> {
        let mut v: Vec<_> = self.paths.iter().map(|p| p.via).collect();
        v.sort_unstable();
        v
    }
}

/// Free-space amplitude at `length` meters times `refl_amplitude^bounces`.
pub fn path_gain(length: f64, bounces: u8, f_c: f64, refl_amplitude: f64) -> Result<f64, ChannelError> {
    if !(length > 0.0) {
        return Err(ChannelError::NonPositiveLength(length));
    }
    Ok(SPEED_OF_LIGHT / (4.0 * PI * f_c * length) * pow(refl_amplitude, f64::from(bounces)))
}

/// Half-wavelength ULA response: entry `m` is `e^{-j m π sin φ}`.
pub fn array_response(phi: f64, n: usize) -> Vec<Complex64> {
    let s = sin(phi);
    (0..n).map(|m| cis(-(m as f64) * PI * s)).collect()
}

/// Average channel gain per antenna, `β = Σ α²`.
pub fn avg_gain(paths: &PathSet) -> f64 {
    paths.paths.iter().map(|p| p.gain * p.gain).sum()
}

fn make_path(
    ap: &ApSite,
    first_hop: Point,
    horizontal: f64,
    bounces: u8,
    via: [Option<u32>; 2],
    cfg: &TracerConfig,
) -> Option<PropPath> {
    let dh = ap.height - cfg.ue_height;
    let length = sqrt(horizontal * horizontal + dh * dh);
    let gain = path_gain(length, bounces, cfg.f_c, cfg.refl_amplitude).ok()?;
    let d = first_hop - ap.pos;
    let aod = wrap_angle(angle_of(d.x, d.y) - ap.boresight);
    Some(PropPath { gain, aod, length, bounces, via })
}

/// Where the ray from `img` toward `to` meets `wall`, if it meets it on the
/// segment.
fn hit(wall: &Wall, img: Point, to: Point) -> Option<Point> {
    let (s, p) = wall.intersect_line(img, to)?;
    (0.0..=1.0).contains(&s).then_some(p)
}

/// Traces the direct path and specular reflections between `ap` and a UE at
/// `ue`. An empty result means the UE has lost this AP.
pub fn trace_paths(ap: &ApSite, ue: Point, map: &SiteMap, cfg: &TracerConfig) -> PathSet {
    let mut paths = Vec::new();
    if map.los_clear(ap.pos, ue) {
        paths.extend(make_path(ap, ue, ap.pos.dist(ue), 0, [None, None], cfg));
    }
    let walls = map.walls();
    if cfg.max_reflections >= 1 {
        for (wi, w) in walls.iter().enumerate() {
            if !(w.side(ap.pos) > 0.0 && w.side(ue) > 0.0) {
                continue;
            }
            let img = mirror_across(w, ap.pos);
            let Some(r) = hit(w, img, ue) else { continue };
            if map.los_clear(ap.pos, r) && map.los_clear(r, ue) {
                paths.extend(make_path(ap, r, img.dist(ue), 1, [Some(wi as u32), None], cfg));
            }
        }
    }
    if cfg.max_reflections >= 2 {
        for (i1, w1) in walls.iter().enumerate() {
            if !(w1.side(ap.pos) > 0.0) {
                continue;
            }
            let img1 = mirror_across(w1, ap.pos);
            for (i2, w2) in walls.iter().enumerate() {
                if i1 == i2 || !(w2.side(ue) > 0.0) {
                    continue;
                }
                let img2 = mirror_across(w2, img1);
                let Some(r2) = hit(w2, img2, ue) else { continue };
                if !(w1.side(r2) > 0.0) {
                    continue;
                }
                let Some(r1) = hit(w1, img1, r2) else { continue };
                if !(w2.side(r1) > 0.0) {
                    continue;
                }
                if map.los_clear(ap.pos, r1) && map.los_clear(r1, r2) && map.los_clear(r2, ue) {
                    let via = [Some(i1 as u32), Some(i2 as u32)];
                    paths.extend(make_path(ap, r1, img2.dist(ue), 2, via, cfg));
                }
            }
        }
    }
    PathSet { paths }
}

/// Per-path `α_i a(φ_i)` vectors, computed once per interval and reused for
/// every coherence block drawn from the same geometry.
#[derive(Debug, Clone, Default)]
pub struct ChannelTemplate {
    n: usize,
    comps: Vec<Complex64>,
}

impl ChannelTemplate {
    pub fn new(paths: &PathSet, n: usize) -> Self {
        let mut comps = Vec::with_capacity(paths.len() * n);
        for p in &paths.paths {
            comps.extend(array_response(p.aod, n).into_iter().map(|z| z * p.gain));
        }
        Self { n, comps }
    }

    pub fn n_antennas(&self) -> usize {
        self.n
    }

    pub fn n_paths(&self) -> usize {
        self.comps.len().checked_div(self.n).unwrap_or(0)
    }

    /// Draws one block realization into `out` (length `n`). One uniform phase
    /// is consumed per path, in path order.
    pub fn realize_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for comp in self.comps.chunks_exact(self.n.max(1)) {
            let psi = rng.random::<f64>() * TAU;
            let rot = cis(-psi);
            for (o, c) in out.iter_mut().zip(comp) {
                *o += rot * c;
            }
        }
    }
}

/// One block-fading draw of the `n`-antenna channel for `paths`.
pub fn realize_channel<R: Rng + ?Sized>(paths: &PathSet, n: usize, rng: &mut R) -> Vec<Complex64> {
    let mut out = alloc::vec![Complex64::new(0.0, 0.0); n];
    ChannelTemplate::new(paths, n).realize_into(rng, &mut out);
    out
}
