//! Scenario configuration: the JSON document and its validated, resolved form.

use std::path::Path;

use cellfree_core::assoc::{AssocParams, PilotMetric, UeOrder};
use cellfree_core::channel::{ApSite, TracerConfig};
use cellfree_core::geom::{Point, Rect};
use cellfree_core::math::angle_of;
use cellfree_core::mobility::{MobilityParams, Region};
use cellfree_core::phy::{Precoder, SysParams};
use cellfree_core::sitemap::SiteMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Soft-handover update every interval.
    #[default]
    Dynamic,
    /// Fresh initial access every interval.
    IaEveryStep,
    /// Single-AP ultra-dense baseline.
    Udn,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Dynamic => "dynamic",
            Policy::IaEveryStep => "ia_every_step",
            Policy::Udn => "udn",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dynamic" => Ok(Policy::Dynamic),
            "ia_every_step" | "ia" => Ok(Policy::IaEveryStep),
            "udn" => Ok(Policy::Udn),
            other => Err(format!("unknown policy `{other}` (dynamic, ia_every_step, udn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub width: u32,
    pub height: u32,
    /// `[x0, y0, x1, y1]` footprints in meters.
    pub buildings: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    /// Array boresight in degrees; defaults to facing the map center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boresight_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracerSection {
    pub reflection_loss_db: f64,
    pub max_reflections: u8,
    pub ue_height: f64,
}

impl Default for TracerSection {
    fn default() -> Self {
        Self { reflection_loss_db: 6.0, max_reflections: 1, ue_height: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssocSection {
    pub m_max: usize,
    pub m_ho_db: f64,
    /// Linear gain threshold for candidate APs; defaults to `sigma2 / p_ul`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_threshold: Option<f64>,
    #[serde(default)]
    pub pilot_metric: PilotMetric,
    #[serde(default)]
    pub ue_order: UeOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub map: MapConfig,
    pub aps: Vec<ApConfig>,
    pub n_ues: usize,
    pub n_antennas: usize,
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Channel bandwidth (Hz).
    pub bandwidth: f64,
    /// Per-AP downlink power (W).
    pub p_max: f64,
    /// Uplink pilot power (W).
    pub p_ul: f64,
    /// Noise power (W).
    pub sigma2: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    /// Power allocation exponent.
    pub v: f64,
    #[serde(default)]
    pub tracer: TracerSection,
    pub mobility: MobilityParams,
    /// UEs are kept this many meters away from the map edge.
    #[serde(default)]
    pub inner_margin: u32,
    pub assoc: AssocSection,
    #[serde(default)]
    pub policy: Policy,
    pub precoders: Vec<Precoder>,
    pub n_drops: usize,
    pub n_intervals: usize,
    pub n_blocks: u64,
    pub seed: u64,
    /// Runtime anomalies tolerated before the run is flagged.
    #[serde(default = "default_anomaly_budget")]
    pub anomaly_budget: u64,
}

fn default_anomaly_budget() -> u64 {
    1000
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn gain_threshold(&self) -> f64 {
        self.assoc.gain_threshold.unwrap_or(self.sigma2 / self.p_ul)
    }

    pub fn assoc_params(&self) -> AssocParams {
        AssocParams {
            tau_p: self.tau_p,
            m_max: self.assoc.m_max,
            m_ho_db: self.assoc.m_ho_db,
            gain_threshold: self.gain_threshold(),
            pilot_metric: self.assoc.pilot_metric,
            ue_order: self.assoc.ue_order,
        }
    }

    pub fn sys_params(&self) -> SysParams {
        SysParams {
            n_antennas: self.n_antennas,
            tau_c: self.tau_c,
            tau_p: self.tau_p,
            p_max: self.p_max,
            sigma2: self.sigma2,
            v: self.v,
        }
    }

    pub fn tracer_config(&self) -> TracerConfig {
        TracerConfig::with_loss_db(
            self.f_c,
            self.tracer.reflection_loss_db,
            self.tracer.max_reflections,
            self.tracer.ue_height,
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("f_c", self.f_c),
            ("bandwidth", self.bandwidth),
            ("p_max", self.p_max),
            ("p_ul", self.p_ul),
            ("sigma2", self.sigma2),
            ("tracer.ue_height", self.tracer.ue_height),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite")));
            }
        }
        if self.aps.is_empty() {
            return Err(invalid("at least one AP is required"));
        }
        if self.n_ues == 0 || self.n_antennas == 0 {
            return Err(invalid("n_ues and n_antennas must be positive"));
        }
        if self.n_drops == 0 || self.n_intervals == 0 || self.n_blocks == 0 {
            return Err(invalid("n_drops, n_intervals and n_blocks must be positive"));
        }
        if self.precoders.is_empty() {
            return Err(invalid("at least one precoder is required"));
        }
        if self.tracer.reflection_loss_db < 0.0 || self.tracer.max_reflections > 2 {
            return Err(invalid("tracer: reflection_loss_db >= 0 and max_reflections <= 2"));
        }
        if !self.v.is_finite() {
            return Err(invalid("v must be finite"));
        }
        self.sys_params().validate().map_err(|e| invalid(e.to_string()))?;
        self.assoc_params().validate().map_err(|e| invalid(e.to_string()))?;
        self.mobility.validate().map_err(|e| invalid(e.to_string()))?;
        let (w, h) = (f64::from(self.map.width), f64::from(self.map.height));
        for (i, ap) in self.aps.iter().enumerate() {
            if !(ap.x >= 0.0 && ap.x <= w && ap.y >= 0.0 && ap.y <= h) {
                return Err(invalid(format!("AP {i} lies outside the map")));
            }
            if !(ap.height > 0.0) {
                return Err(invalid(format!("AP {i} height must be positive")));
            }
        }
        if 2 * self.inner_margin >= self.map.width.min(self.map.height) {
            return Err(invalid("inner_margin leaves no walkable region"));
        }
        Ok(())
    }
}

/// A validated configuration with its derived geometry.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub map: SiteMap,
    pub aps: Vec<ApSite>,
    pub region: Region,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let rects: Vec<Rect> = config.map.buildings.iter().map(|b| Rect::new(b[0], b[1], b[2], b[3])).collect();
        let map = SiteMap::build(&rects, config.map.width, config.map.height).map_err(|e| invalid(e.to_string()))?;
        let center = Point::new(f64::from(config.map.width) / 2.0, f64::from(config.map.height) / 2.0);
        let aps = config
            .aps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let pos = Point::new(a.x, a.y);
                if map.is_inside_building(pos) {
                    return Err(invalid(format!("AP {i} is inside a building")));
                }
                let boresight = match a.boresight_deg {
                    Some(deg) => deg.to_radians(),
                    None => angle_of(center.x - pos.x, center.y - pos.y),
                };
                Ok(ApSite { pos, height: a.height, n_antennas: config.n_antennas, boresight })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let region = if config.inner_margin == 0 { Region::full(&map) } else { Region::inset(&map, config.inner_margin) };
        Ok(Self { config, map, aps, region })
    }
}
