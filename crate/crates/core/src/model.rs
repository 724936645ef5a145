//! Backend data model: the JSON tree the GUI is asked to be aware of.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{canonicalize, check_finite, CanonicalError, CanonicalJson};

/// Mean Earth radius used by the haversine distance.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Meters per degree used by the flat world projection shared by the map
/// tiles and the render key. Not geodesy; only needs to be fixed.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid geo point lat={lat} lon={lon}")]
    InvalidGeoPoint { lat: f64, lon: f64 },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("invalid hazard zone: {0}")]
    InvalidZone(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon);
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidGeoPoint { lat: self.lat, lon: self.lon })
        }
    }

    /// Great-circle distance in meters.
    pub fn haversine_m(&self, other: &GeoPoint) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dphi = p2 - p1;
        let dlambda = (other.lon - self.lon).to_radians();
        let a = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }

    /// Initial bearing towards `other`, degrees clockwise from north in [0, 360).
    pub fn bearing_deg(&self, other: &GeoPoint) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dlambda = (other.lon - self.lon).to_radians();
        let y = dlambda.sin() * p2.cos();
        let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dlambda.cos();
        normalize_heading(y.atan2(x).to_degrees())
    }

    /// Linear interpolation in lat/lon.
    pub fn lerp(&self, other: &GeoPoint, t: f64) -> GeoPoint {
        GeoPoint {
            lat: self.lat + (other.lat - self.lat) * t,
            lon: self.lon + (other.lon - self.lon) * t,
        }
    }

    /// Position in the flat world frame, meters east and meters south of (0, 0).
    pub fn world_m(&self) -> (f64, f64) {
        (self.lon * METERS_PER_DEGREE, -self.lat * METERS_PER_DEGREE)
    }
}

pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Warning condition carried in `warningMode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum WarningMode {
    Nominal = 0,
    Caution = 1,
    Danger = 2,
}

impl WarningMode {
    pub const ALL: [WarningMode; 3] = [WarningMode::Nominal, WarningMode::Caution, WarningMode::Danger];

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for WarningMode {
    type Error = ModelError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Self::Nominal),
            1 => Ok(Self::Caution),
            2 => Ok(Self::Danger),
            other => Err(ModelError::InvalidMessage(format!("warningMode {other} not in {{0,1,2}}"))),
        }
    }
}

impl From<WarningMode> for u8 {
    fn from(m: WarningMode) -> u8 {
        m as u8
    }
}

impl std::fmt::Display for WarningMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneState {
    pub pos: GeoPoint,
    pub alt_m: f64,
    pub heading_deg: f64,
}

/// One timestamped backend message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMessage {
    pub seq: u64,
    pub ts_ms: u64,
    pub drone: DroneState,
    #[serde(rename = "warningMode")]
    pub warning_mode: WarningMode,
    pub waypoints: Vec<GeoPoint>,
}

impl ModelMessage {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_finite("drone.pos.lat", self.drone.pos.lat)?;
        check_finite("drone.pos.lon", self.drone.pos.lon)?;
        check_finite("drone.alt_m", self.drone.alt_m)?;
        check_finite("drone.heading_deg", self.drone.heading_deg)?;
        self.drone.pos.validate()?;
        if self.drone.alt_m < 0.0 {
            return Err(ModelError::InvalidMessage(format!("alt_m {} < 0", self.drone.alt_m)));
        }
        if !(0.0..360.0).contains(&self.drone.heading_deg) {
            return Err(ModelError::InvalidMessage(format!(
                "heading_deg {} outside [0,360)",
                self.drone.heading_deg
            )));
        }
        if self.waypoints.is_empty() {
            return Err(ModelError::InvalidMessage("no waypoints".into()));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            check_finite(&format!("waypoints.{i}.lat"), w.lat)?;
            check_finite(&format!("waypoints.{i}.lon"), w.lon)?;
            w.validate()?;
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("model message serializes")
    }

    pub fn to_canonical(&self) -> Result<CanonicalJson, ModelError> {
        self.validate()?;
        Ok(canonicalize(&self.to_value())?)
    }

    /// Parses one line of a message log or the backend wire.
    pub fn from_json(line: &str) -> Result<Self, ModelError> {
        let msg: Self = serde_json::from_str(line).map_err(|e| ModelError::Json(e.to_string()))?;
        msg.validate()?;
        Ok(msg)
    }
}

/// A circular hazard: danger inside `danger_radius_m`, caution inside
/// `caution_factor × danger_radius_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardZone {
    pub center: GeoPoint,
    pub danger_radius_m: f64,
    pub caution_factor: f64,
}

impl HazardZone {
    pub fn new(center: GeoPoint, danger_radius_m: f64, caution_factor: f64) -> Result<Self, ModelError> {
        center.validate()?;
        if !(danger_radius_m.is_finite() && danger_radius_m > 0.0) {
            return Err(ModelError::InvalidZone(format!("danger radius {danger_radius_m}")));
        }
        if !(caution_factor.is_finite() && caution_factor > 1.0) {
            return Err(ModelError::InvalidZone(format!("caution factor {caution_factor}")));
        }
        Ok(Self { center, danger_radius_m, caution_factor })
    }

    pub fn caution_radius_m(&self) -> f64 {
        self.danger_radius_m * self.caution_factor
    }
}

/// Danger if inside any danger radius, else caution if inside any caution
/// radius, else nominal.
pub fn warning_mode_at(p: &GeoPoint, zones: &[HazardZone]) -> WarningMode {
    let mut mode = WarningMode::Nominal;
    for z in zones {
        let d = p.haversine_m(&z.center);
        if d <= z.danger_radius_m {
            return WarningMode::Danger;
        }
        if d <= z.caution_radius_m() {
            mode = WarningMode::Caution;
        }
    }
    mode
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelMessage {
        ModelMessage {
            seq: 7,
            ts_ms: 1400,
            drone: DroneState { pos: GeoPoint { lat: 40.705, lon: -74.01 }, alt_m: 120.0, heading_deg: 90.5 },
            warning_mode: WarningMode::Danger,
            waypoints: vec![GeoPoint { lat: 40.7, lon: -74.0 }],
        }
    }

    #[test]
    fn message_wire_form() {
        let c = sample().to_canonical().unwrap();
        assert_eq!(
            c.as_str(),
            r#"{"drone":{"alt_m":120,"heading_deg":90.5,"pos":{"lat":40.705,"lon":-74.01}},"seq":7,"ts_ms":1400,"warningMode":2,"waypoints":[{"lat":40.7,"lon":-74}]}"#
        );
        assert_eq!(ModelMessage::from_json(c.as_str()).unwrap(), sample());
    }

    #[test]
    fn rejects_bad_mode_and_unknown_keys() {
        let text = sample().to_canonical().unwrap().into_string();
        assert!(ModelMessage::from_json(&text.replace("\"warningMode\":2", "\"warningMode\":3")).is_err());
        assert!(ModelMessage::from_json(&text.replace("\"seq\"", "\"extra\":1,\"seq\"")).is_err());
    }

    #[test]
    fn non_finite_message_fails_canonicalization() {
        let mut m = sample();
        m.drone.alt_m = f64::INFINITY;
        assert!(matches!(
            m.to_canonical(),
            Err(ModelError::Canonical(CanonicalError::NonFiniteNumber { .. }))
        ));
    }

    #[test]
    fn haversine_known_distance() {
        // one degree of latitude on the mean sphere
        let a = GeoPoint { lat: 0.0, lon: 0.0 };
        let b = GeoPoint { lat: 1.0, lon: 0.0 };
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((a.haversine_m(&b) - expected).abs() < 1e-6);
    }

    #[test]
    fn bearings() {
        let a = GeoPoint { lat: 40.0, lon: -74.0 };
        assert!((a.bearing_deg(&GeoPoint { lat: 41.0, lon: -74.0 }) - 0.0).abs() < 1e-9);
        assert!((a.bearing_deg(&GeoPoint { lat: 39.0, lon: -74.0 }) - 180.0).abs() < 1e-9);
        let east = a.bearing_deg(&GeoPoint { lat: 40.0, lon: -73.9 });
        assert!((east - 90.0).abs() < 0.1);
        assert_eq!(normalize_heading(-1e-18), 0.0);
    }

    #[test]
    fn mode_at_center_and_far() {
        let c = GeoPoint { lat: 40.7, lon: -74.0 };
        let z = HazardZone::new(c, 100.0, 1.5).unwrap();
        assert_eq!(warning_mode_at(&c, &[z]), WarningMode::Danger);
        let far = GeoPoint { lat: 40.71, lon: -74.0 };
        assert_eq!(warning_mode_at(&far, &[z]), WarningMode::Nominal);
        assert_eq!(warning_mode_at(&far, &[]), WarningMode::Nominal);
    }

    #[test]
    fn radial_sweep_crosses_each_boundary_once() {
        let c = GeoPoint { lat: 40.7, lon: -74.0 };
        let z = HazardZone::new(c, 120.0, 1.5).unwrap();
        // sweep from 400 m north straight through the center to 400 m south
        let deg_per_m = 1.0 / (EARTH_RADIUS_M.to_radians());
        let modes: Vec<WarningMode> = (-400..=400)
            .map(|m| GeoPoint { lat: c.lat + m as f64 * deg_per_m, lon: c.lon })
            .map(|p| warning_mode_at(&p, &[z]))
            .collect();
        let changes: Vec<(WarningMode, WarningMode)> =
            modes.windows(2).filter(|w| w[0] != w[1]).map(|w| (w[0], w[1])).collect();
        use WarningMode::*;
        assert_eq!(changes, vec![(Nominal, Caution), (Caution, Danger), (Danger, Caution), (Caution, Nominal)]);
        // boundaries land where the radii say, to the sweep resolution
        let first_caution = modes.iter().position(|m| *m != Nominal).unwrap() as f64 - 400.0;
        let first_danger = modes.iter().position(|m| *m == Danger).unwrap() as f64 - 400.0;
        assert!((first_caution + 180.0).abs() <= 1.0);
        assert!((first_danger + 120.0).abs() <= 1.0);
    }

    #[test]
    fn zone_invariants() {
        let c = GeoPoint { lat: 0.0, lon: 0.0 };
        assert!(HazardZone::new(c, 0.0, 1.5).is_err());
        assert!(HazardZone::new(c, 10.0, 1.0).is_err());
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, f64::NAN).is_err());
    }
}
