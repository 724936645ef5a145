//! Seeded scenario generation: the test suite that produces backend streams.
//!
//! A scenario is a closed waypoint loop inside a bounding box plus a set of
//! hazard zones placed across the route. The drone flies the loop at constant
//! speed and one message is emitted per simulation tick.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    warning_mode_at, DroneState, GeoPoint, HazardZone, ModelError, ModelMessage, METERS_PER_DEGREE,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("message log line {line}: {source}")]
    BadLogLine { line: usize, source: ModelError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

/// Parameters of the synthetic input distribution. Version 1 defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub bbox: GeoBox,
    pub n_waypoints: usize,
    pub n_zones: usize,
    pub speed_mps: f64,
    pub msg_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub altitude_m: f64,
    pub caution_factor: f64,
    /// Inclusive range the danger radius of each zone is drawn from.
    pub danger_radius_m: (f64, f64),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bbox: GeoBox {
                min: GeoPoint { lat: 40.7000, lon: -74.0150 },
                max: GeoPoint { lat: 40.7100, lon: -74.0020 },
            },
            n_waypoints: 8,
            n_zones: 5,
            speed_mps: 15.0,
            msg_rate_hz: 5.0,
            duration_s: 120.0,
            seed: 1,
            altitude_m: 120.0,
            caution_factor: 1.5,
            danger_radius_m: (60.0, 120.0),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), ScenarioError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::InvalidConfig(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.bbox.min.validate()?;
        self.bbox.max.validate()?;
        if !(self.bbox.min.lat < self.bbox.max.lat && self.bbox.min.lon < self.bbox.max.lon) {
            return Err(ScenarioError::InvalidConfig("bbox min must be below max componentwise".into()));
        }
        if self.n_waypoints == 0 {
            return Err(ScenarioError::InvalidConfig("n_waypoints must be positive".into()));
        }
        positive("speed_mps", self.speed_mps)?;
        positive("msg_rate_hz", self.msg_rate_hz)?;
        positive("duration_s", self.duration_s)?;
        if !(self.altitude_m.is_finite() && self.altitude_m >= 0.0) {
            return Err(ScenarioError::InvalidConfig(format!("altitude_m {}", self.altitude_m)));
        }
        if !(self.caution_factor.is_finite() && self.caution_factor > 1.0) {
            return Err(ScenarioError::InvalidConfig(format!("caution_factor {} must exceed 1", self.caution_factor)));
        }
        let (lo, hi) = self.danger_radius_m;
        positive("danger_radius_m.0", lo)?;
        if !(hi.is_finite() && hi >= lo) {
            return Err(ScenarioError::InvalidConfig(format!("danger_radius_m range ({lo}, {hi})")));
        }
        Ok(())
    }

    /// Number of messages in the stream.
    pub fn message_count(&self) -> usize {
        ((self.duration_s * self.msg_rate_hz).round() as usize).max(1)
    }

    /// Simulation timestamp of tick `k`.
    pub fn tick_ts_ms(&self, k: u64) -> u64 {
        tick_ts_ms(k, self.msg_rate_hz)
    }
}

/// `round(k × 1000 / rate)`, the single rounding rule for every tick clock.
pub fn tick_ts_ms(k: u64, rate_hz: f64) -> u64 {
    (k as f64 * 1000.0 / rate_hz).round() as u64
}

/// The static part of a scenario: route and hazards.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub waypoints: Vec<GeoPoint>,
    pub zones: Vec<HazardZone>,
}

pub fn build_world(cfg: &ScenarioConfig) -> Result<World, ScenarioError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (min, max) = (cfg.bbox.min, cfg.bbox.max);
    let waypoints: Vec<GeoPoint> = (0..cfg.n_waypoints)
        .map(|_| GeoPoint {
            lat: rng.random_range(min.lat..max.lat),
            lon: rng.random_range(min.lon..max.lon),
        })
        .collect();

    let n = waypoints.len();
    let mut zones = Vec::with_capacity(cfg.n_zones);
    for _ in 0..cfg.n_zones {
        let seg = rng.random_range(0..n);
        let along = rng.random_range(0.2..0.8);
        let base = waypoints[seg].lerp(&waypoints[(seg + 1) % n], along);
        let (lo, hi) = cfg.danger_radius_m;
        let radius = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        // offset the center by at most half the danger radius so the route
        // passes through the danger disc
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let off = rng.random_range(0.0..0.5) * radius;
        let center = GeoPoint {
            lat: base.lat + off * angle.cos() / METERS_PER_DEGREE,
            lon: base.lon + off * angle.sin() / (METERS_PER_DEGREE * base.lat.to_radians().cos()),
        };
        zones.push(HazardZone::new(center, radius, cfg.caution_factor)?);
    }
    Ok(World { waypoints, zones })
}

/// Generates the message stream for `cfg`. Pure function of the config.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<Vec<ModelMessage>, ScenarioError> {
    let world = build_world(cfg)?;
    Ok(fly(cfg, &world))
}

fn fly(cfg: &ScenarioConfig, world: &World) -> Vec<ModelMessage> {
    let wps = &world.waypoints;
    let n = wps.len();
    let seg_len: Vec<f64> = (0..n).map(|i| wps[i].haversine_m(&wps[(i + 1) % n])).collect();
    let route_len: f64 = seg_len.iter().sum();
    let step_m = cfg.speed_mps / cfg.msg_rate_hz;

    let mut seg = 0usize;
    let mut along_m = 0.0f64;
    let mut out = Vec::with_capacity(cfg.message_count());
    for k in 0..cfg.message_count() as u64 {
        let (pos, heading) = if route_len > 0.0 {
            while seg_len[seg] == 0.0 {
                seg = (seg + 1) % n;
            }
            let next = wps[(seg + 1) % n];
            let pos = wps[seg].lerp(&next, along_m / seg_len[seg]);
            let heading = if pos.haversine_m(&next) > 0.0 { pos.bearing_deg(&next) } else { wps[seg].bearing_deg(&next) };
            (pos, heading)
        } else {
            (wps[0], 0.0)
        };
        out.push(ModelMessage {
            seq: k,
            ts_ms: cfg.tick_ts_ms(k),
            drone: DroneState { pos, alt_m: cfg.altitude_m, heading_deg: heading },
            warning_mode: warning_mode_at(&pos, &world.zones),
            waypoints: wps.clone(),
        });
        if route_len > 0.0 {
            along_m += step_m;
            while along_m >= seg_len[seg] {
                along_m -= seg_len[seg];
                seg = (seg + 1) % n;
            }
        }
    }
    out
}

/// Writes one canonical message per line.
pub fn write_message_log(path: &Path, msgs: &[ModelMessage]) -> Result<(), ScenarioError> {
    let mut w = BufWriter::new(File::create(path)?);
    for m in msgs {
        writeln!(w, "{}", m.to_canonical()?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_message_log(path: &Path) -> Result<Vec<ModelMessage>, ScenarioError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(ModelMessage::from_json(&line).map_err(|source| ScenarioError::BadLogLine { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WarningMode;

    #[test]
    fn deterministic_streams() {
        let cfg = ScenarioConfig { duration_s: 30.0, ..Default::default() };
        let a: Vec<String> = gen_scenario(&cfg).unwrap().iter().map(|m| m.to_canonical().unwrap().into_string()).collect();
        let b: Vec<String> = gen_scenario(&cfg).unwrap().iter().map(|m| m.to_canonical().unwrap().into_string()).collect();
        assert_eq!(a, b);
        let c = gen_scenario(&ScenarioConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a[0], c[0].to_canonical().unwrap().into_string());
    }

    #[test]
    fn no_zones_means_nominal() {
        let cfg = ScenarioConfig { n_zones: 0, duration_s: 60.0, ..Default::default() };
        assert!(gen_scenario(&cfg).unwrap().iter().all(|m| m.warning_mode == WarningMode::Nominal));
    }

    #[test]
    fn seq_ts_and_self_consistency() {
        let cfg = ScenarioConfig { msg_rate_hz: 3.0, duration_s: 40.0, ..Default::default() };
        let world = build_world(&cfg).unwrap();
        let msgs = gen_scenario(&cfg).unwrap();
        assert_eq!(msgs.len(), 120);
        for (k, m) in msgs.iter().enumerate() {
            assert_eq!(m.seq, k as u64);
            assert_eq!(m.ts_ms, (k as f64 * 1000.0 / 3.0).round() as u64);
            assert_eq!(m.warning_mode, warning_mode_at(&m.drone.pos, &world.zones));
            m.validate().unwrap();
        }
    }

    #[test]
    fn drone_moves_at_configured_speed() {
        let cfg = ScenarioConfig { duration_s: 10.0, ..Default::default() };
        let msgs = gen_scenario(&cfg).unwrap();
        let step = cfg.speed_mps / cfg.msg_rate_hz;
        // away from waypoint corners each step covers the configured distance
        let near: usize = msgs
            .windows(2)
            .filter(|w| (w[0].drone.pos.haversine_m(&w[1].drone.pos) - step).abs() < 0.05)
            .count();
        assert!(near >= msgs.len() - 3, "{near} of {}", msgs.len());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ScenarioConfig { speed_mps: 0.0, ..Default::default() },
            ScenarioConfig { msg_rate_hz: -1.0, ..Default::default() },
            ScenarioConfig { n_waypoints: 0, ..Default::default() },
            ScenarioConfig { caution_factor: 1.0, ..Default::default() },
            ScenarioConfig {
                bbox: GeoBox { min: GeoPoint { lat: 1.0, lon: 0.0 }, max: GeoPoint { lat: 0.0, lon: 1.0 } },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(gen_scenario(&cfg), Err(ScenarioError::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"seed": 4, "colour": "red"}"#).is_err());
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"seed": 4}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.n_waypoints, 8);
    }

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("messages.ndjson");
        let msgs = gen_scenario(&ScenarioConfig { duration_s: 5.0, ..Default::default() }).unwrap();
        write_message_log(&path, &msgs).unwrap();
        assert_eq!(read_message_log(&path).unwrap(), msgs);
    }
}
