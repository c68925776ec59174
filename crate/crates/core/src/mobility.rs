//! Maneuvering smooth random-waypoint mobility on a pixel grid.
//!
//! Each UE walks `d_s = v_ue · t_ho` meters per handover interval toward a
//! random waypoint. Heading changes after a waypoint is reached are spread
//! over `h` intervals. When the next pixel is blocked (or leaves the walk
//! area) the UE re-aims at its waypoint and scans alternately left and right
//! in random multiples of `θ_scan = atan(1 / d_s)` until a free pixel is
//! found.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng;

use crate::geom::Pixel;
use crate::math::{angle_of, ceil, cos, hypot, nint, shortest_arc, sin, wrap_angle};
use crate::sitemap::SiteMap;

/// Rejection-loop bound when drawing a new waypoint.
pub const TARGET_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MobilityError {
    #[error("no free pixel inside the walk area")]
    NoFreePixel,
    #[error("invalid mobility parameters: {0}")]
    BadParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MobilityParams {
    /// Number of intervals over which a heading change is smoothed.
    pub h: u32,
    /// Waypoint distance range (m).
    pub d_min: f64,
    pub d_max: f64,
    /// UE speed (m/s).
    pub v_ue: f64,
    /// Handover interval (s).
    pub t_ho: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self { h: 3, d_min: 50.0, d_max: 100.0, v_ue: 1.5, t_ho: 2.0 }
    }
}

impl MobilityParams {
    /// Distance moved per interval.
    pub fn d_s(&self) -> f64 {
        self.v_ue * self.t_ho
    }

    /// Scan angle increment.
    pub fn theta_scan(&self) -> f64 {
        crate::math::atan(1.0 / self.d_s())
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        if self.h == 0 {
            return Err(MobilityError::BadParams("h must be positive"));
        }
        if !(self.d_min > 0.0 && self.d_min <= self.d_max) {
            return Err(MobilityError::BadParams("need 0 < d_min <= d_max"));
        }
        if !(self.d_s() > 0.0 && self.d_s().is_finite()) {
            return Err(MobilityError::BadParams("v_ue * t_ho must be positive"));
        }
        Ok(())
    }

    /// Largest scan index tried before a UE holds position: enough steps for
    /// the scan to sweep a full turn on each side at `r = 1`.
    pub fn scan_cap(&self) -> u32 {
        2 * ceil(TAU / self.theta_scan()) as u32
    }
}

/// Inclusive pixel bounds the UEs are confined to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Region {
    pub x_min: i64,
    pub x_max: i64,
    pub y_min: i64,
    pub y_max: i64,
}

impl Region {
    pub fn full(map: &SiteMap) -> Self {
        Self { x_min: 1, x_max: i64::from(map.width()), y_min: 1, y_max: i64::from(map.height()) }
    }

    /// The full map shrunk by `margin` meters on every side.
    pub fn inset(map: &SiteMap, margin: u32) -> Self {
        let m = i64::from(margin);
        Self {
            x_min: 1 + m,
            x_max: i64::from(map.width()) - m,
            y_min: 1 + m,
            y_max: i64::from(map.height()) - m,
        }
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// The map together with the region the UEs must stay in.
#[derive(Debug, Clone, Copy)]
pub struct WalkArea<'a> {
    pub map: &'a SiteMap,
    pub region: Region,
}

impl<'a> WalkArea<'a> {
    pub fn new(map: &'a SiteMap, region: Region) -> Self {
        Self { map, region }
    }

    pub fn whole(map: &'a SiteMap) -> Self {
        Self { map, region: Region::full(map) }
    }

    /// In the region and not obstructed.
    pub fn passable(&self, p: Pixel) -> bool {
        self.region.contains(p) && self.map.is_free(p)
    }

    fn free_pixels(&self) -> Vec<Pixel> {
        let mut out = Vec::new();
        for x in self.region.x_min.max(1)..=self.region.x_max.min(i64::from(self.map.width())) {
            for y in self.region.y_min.max(1)..=self.region.y_max.min(i64::from(self.map.height())) {
                let p = Pixel::new(x, y);
                if self.map.is_free(p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UeMobilityState {
    pub pos: Pixel,
    pub target: Pixel,
    /// Heading used for the last move, in `[0, 2π)`.
    pub heading: f64,
    /// Remaining smoothing intervals.
    pub h_remaining: u32,
    /// Heading toward the current waypoint.
    pub pending_heading: f64,
}

/// Things that went unusually during one step. Not errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepAnomaly {
    /// The obstacle scan exhausted its budget; the UE held position.
    pub scan_capped: bool,
    /// No passable waypoint was found; the UE keeps its old one.
    pub target_capped: bool,
}

impl StepAnomaly {
    pub fn any(&self) -> bool {
        self.scan_capped || self.target_capped
    }
}

fn advance(from: Pixel, heading: f64, dist: f64) -> Pixel {
    Pixel::new(
        nint(from.x as f64 + dist * cos(heading)),
        nint(from.y as f64 + dist * sin(heading)),
    )
}

fn bearing(from: Pixel, to: Pixel) -> f64 {
    angle_of((to.x - from.x) as f64, (to.y - from.y) as f64)
}

fn pixel_dist(a: Pixel, b: Pixel) -> f64 {
    hypot((a.x - b.x) as f64, (a.y - b.y) as f64)
}

/// Waypoint draw: rotate a working heading by `(r - 0.5)·π` and step a
/// random `d_seg` from `pos` until the result is passable.
fn draw_target<R: Rng + ?Sized>(
    area: &WalkArea<'_>,
    params: &MobilityParams,
    pos: Pixel,
    mut theta: f64,
    rng: &mut R,
) -> Option<Pixel> {
    for _ in 0..TARGET_ATTEMPTS {
        theta = wrap_angle(theta + (rng.random::<f64>() - 0.5) * PI);
        let d_seg = rng.random_range(params.d_min..=params.d_max);
        let t = advance(pos, theta, d_seg);
        if area.passable(t) {
            return Some(t);
        }
    }
    None
}

/// Drops `k_ues` UEs uniformly on passable pixels and gives each a first
/// waypoint.
pub fn init_mobility<R: Rng + ?Sized>(
    rng: &mut R,
    k_ues: usize,
    area: &WalkArea<'_>,
    params: &MobilityParams,
) -> Result<Vec<UeMobilityState>, MobilityError> {
    params.validate()?;
    let free = area.free_pixels();
    if free.is_empty() {
        return Err(MobilityError::NoFreePixel);
    }
    let mut out = Vec::with_capacity(k_ues);
    for _ in 0..k_ues {
        let pos = free[rng.random_range(0..free.len())];
        let start = rng.random::<f64>() * TAU;
        let target = draw_target(area, params, pos, start, rng).unwrap_or(pos);
        let heading = bearing(pos, target);
        out.push(UeMobilityState { pos, target, heading, h_remaining: 0, pending_heading: heading });
    }
    Ok(out)
}

/// Advances one UE by one handover interval.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &UeMobilityState,
    area: &WalkArea<'_>,
    params: &MobilityParams,
    rng: &mut R,
) -> (UeMobilityState, StepAnomaly) {
    let d_s = params.d_s();
    let mut s = *state;
    let mut anomaly = StepAnomaly::default();

    if s.h_remaining != 0 {
        let delta = shortest_arc(s.heading, s.pending_heading) / f64::from(s.h_remaining);
        s.heading = wrap_angle(s.heading + delta);
        s.h_remaining -= 1;
    } else {
        s.heading = s.pending_heading;
    }

    let prev = s.pos;
    let mut next = advance(prev, s.heading, d_s);
    if !area.passable(next) {
        s.h_remaining = 0;
        let aim = bearing(prev, s.target);
        let theta = params.theta_scan();
        let mut found = false;
        for i in 1..=params.scan_cap() {
            let r = rng.random::<f64>();
            let offset = if i % 2 != 0 {
                f64::from(i.div_ceil(2)) * r * theta
            } else {
                -(f64::from(i / 2) * r * theta)
            };
            let cand_heading = wrap_angle(aim + offset);
            next = advance(prev, cand_heading, d_s);
            if area.passable(next) {
                s.heading = cand_heading;
                found = true;
                break;
            }
        }
        if !found {
            next = prev;
            s.heading = aim;
            anomaly.scan_capped = true;
        }
    }
    s.pos = next;

    if pixel_dist(s.target, s.pos) < d_s {
        s.h_remaining = params.h;
        match draw_target(area, params, s.pos, s.heading, rng) {
            Some(t) => s.target = t,
            None => anomaly.target_capped = true,
        }
    }
    s.pending_heading = bearing(s.pos, s.target);
    (s, anomaly)
}
