//! Scenario documents (TOML, `scenario_version = 1`).
//!
//! ```toml
//! scenario_version = 1
//! seed = 7
//!
//! [sim]          # duration (s), dt (s), ground_z (m), mode, classifier_accuracy
//! [field]        # width, height (m); the field spans [0, width] x [0, height]
//! [basestation]  # id, position [x, y, z]
//! [link]         # range_0db (m), threshold, sync_period (s), [[link.outages]]
//! [detection]    # p_det, sigma_px, frame_period (s)
//! [ground]       # gps_sigma (m), lidar_sigma (m), bearing_sigma_px
//!
//! [[casualties]] # position [x, y], hr_bpm, rr_bpm, manikin, injuries, ...
//! [[robots]]     # id, kind = "uav" | "ugv", start [x, y], speed, altitude, camera
//! ```
//!
//! Every table rejects unknown keys. Dotted overrides (`sim.dt=0.05`,
//! `casualties.0.hr_bpm=90`) are applied to the parsed document before
//! validation, so a mistyped override fails the same way a mistyped file
//! key does.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geoloc::CameraModel;
use crate::orchestrator::{FusionMode, InjuryProfile, Subject};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub sim: SimParams,
    pub field: FieldSpec,
    #[serde(default)]
    pub basestation: BasestationSpec,
    #[serde(default)]
    pub link: LinkParams,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default)]
    pub ground: GroundParams,
    #[serde(default)]
    pub casualties: Vec<CasualtySpec>,
    #[serde(default)]
    pub robots: Vec<RobotSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub duration: f64,
    pub dt: f64,
    pub ground_z: f64,
    pub mode: FusionMode,
    pub classifier_accuracy: f64,
    /// Plugins to disable at start, by name.
    pub disabled_plugins: Vec<String>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            duration: 600.0,
            dt: 0.1,
            ground_z: 0.0,
            mode: FusionMode::Year2,
            classifier_accuracy: 0.8,
            disabled_plugins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasestationSpec {
    pub id: String,
    pub position: [f64; 3],
}

impl Default for BasestationSpec {
    fn default() -> Self {
        BasestationSpec {
            id: "base".into(),
            position: [0.0, 0.0, 2.0],
        }
    }
}

/// A window during which every link touching `node` reads quality 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub node: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    pub range_0db: f64,
    pub threshold: f64,
    /// While a link stays usable, the pair re-syncs this often.
    pub sync_period: f64,
    pub outages: Vec<Outage>,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            range_0db: 80.0,
            threshold: crate::meshsync::DEFAULT_LINK_THRESHOLD,
            sync_period: 5.0,
            outages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionParams {
    pub p_det: f64,
    pub sigma_px: f64,
    pub frame_period: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            p_det: 0.9,
            sigma_px: 2.0,
            frame_period: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundParams {
    pub gps_sigma: f64,
    pub lidar_sigma: f64,
    pub bearing_sigma_px: f64,
}

impl Default for GroundParams {
    fn default() -> Self {
        GroundParams {
            gps_sigma: 0.2,
            lidar_sigma: 0.02,
            bearing_sigma_px: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasualtySpec {
    pub position: [f64; 2],
    #[serde(default = "default_hr")]
    pub hr_bpm: f64,
    #[serde(default = "default_rr")]
    pub rr_bpm: f64,
    #[serde(default)]
    pub manikin: bool,
    #[serde(default)]
    pub injuries: InjuryProfile,
    #[serde(default = "default_contrast")]
    pub thermal_contrast_f: f64,
    #[serde(default)]
    pub thermal_drift_f_per_s: f64,
    #[serde(default)]
    pub motion_fraction: f64,
    #[serde(default = "one")]
    pub chest_visibility: f64,
    #[serde(default = "one")]
    pub face_visibility: f64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
}

fn default_hr() -> f64 {
    72.0
}
fn default_rr() -> f64 {
    14.0
}
fn default_contrast() -> f64 {
    10.0
}
fn one() -> f64 {
    1.0
}
fn default_snr() -> f64 {
    15.0
}

impl CasualtySpec {
    pub fn subject(&self) -> Subject {
        Subject {
            hr_bpm: self.hr_bpm,
            rr_bpm: self.rr_bpm,
            manikin: self.manikin,
            injuries: self.injuries,
            thermal_contrast_f: self.thermal_contrast_f,
            thermal_drift_f_per_s: self.thermal_drift_f_per_s,
            motion_fraction: self.motion_fraction,
            chest_visibility: self.chest_visibility,
            face_visibility: self.face_visibility,
            snr_db: self.snr_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Uav,
    Ugv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    #[serde(default)]
    pub fy: Option<f64>,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub cx: Option<f64>,
    #[serde(default)]
    pub cy: Option<f64>,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            fx: 800.0,
            fy: None,
            width: 1280.0,
            height: 720.0,
            cx: None,
            cy: None,
        }
    }
}

impl CameraSpec {
    pub fn model(&self) -> Result<CameraModel, crate::geoloc::GeolocError> {
        CameraModel::new(
            self.fx,
            self.fy.unwrap_or(self.fx),
            self.cx.unwrap_or(self.width / 2.0),
            self.cy.unwrap_or(self.height / 2.0),
            self.width,
            self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: String,
    pub kind: RobotKind,
    pub start: [f64; 2],
    pub speed: f64,
    /// UAV flight altitude above ground, m. Ignored for UGVs.
    #[serde(default = "default_altitude")]
    pub altitude: f64,
    /// UAV lane spacing; defaults to 80% of the footprint's short side.
    #[serde(default)]
    pub lane_spacing: Option<f64>,
    #[serde(default)]
    pub camera: CameraSpec,
}

fn default_altitude() -> f64 {
    40.0
}

/// Parses, overrides and validates a scenario document.
pub fn load_scenario(text: &str, overrides: &[(String, String)]) -> Result<Scenario, SimError> {
    let mut doc: toml::Value = toml::from_str(text).map_err(|e| SimError::Schema {
        path: String::new(),
        message: e.message().to_string(),
    })?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    let scenario: Scenario = serde_path_to_error::deserialize(doc).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().to_string();
        if let Some(field) = message
            .split_once("missing field `")
            .and_then(|(_, r)| r.split_once('`'))
            .map(|(f, _)| f)
        {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        SimError::Schema { path, message }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Parses a `key=value` override argument.
pub fn parse_override(arg: &str) -> Result<(String, String), SimError> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(SimError::Schema {
            path: arg.to_string(),
            message: "override must look like key=value".into(),
        }),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(doc: &mut toml::Value, key: &str, raw: &str) -> Result<(), SimError> {
    let bad = |message: &str| SimError::Schema {
        path: key.to_string(),
        message: message.to_string(),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty path segment"));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_value(raw));
                    return Ok(());
                }
                t.entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| bad("array segment must be an index"))?;
                let slot = a.get_mut(idx).ok_or_else(|| bad("array index out of range"))?;
                if last {
                    *slot = parse_value(raw);
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad("path descends into a scalar")),
        };
    }
    Ok(())
}

fn positive(path: &str, v: f64) -> Result<(), SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Schema {
            path: path.into(),
            message: format!("must be positive, got {v}"),
        })
    }
}

fn unit(path: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Schema {
            path: path.into(),
            message: format!("must lie in [0, 1], got {v}"),
        })
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.scenario_version != SCENARIO_VERSION {
            return Err(SimError::Schema {
                path: "scenario_version".into(),
                message: format!("unsupported version {}", self.scenario_version),
            });
        }
        positive("sim.duration", self.sim.duration)?;
        positive("sim.dt", self.sim.dt)?;
        unit("sim.classifier_accuracy", self.sim.classifier_accuracy)?;
        positive("field.width", self.field.width)?;
        positive("field.height", self.field.height)?;
        positive("link.range_0db", self.link.range_0db)?;
        unit("link.threshold", self.link.threshold)?;
        positive("link.sync_period", self.link.sync_period)?;
        unit("detection.p_det", self.detection.p_det)?;
        if !(self.detection.sigma_px >= 0.0) {
            return Err(SimError::Schema {
                path: "detection.sigma_px".into(),
                message: "must be non-negative".into(),
            });
        }
        positive("detection.frame_period", self.detection.frame_period)?;
        for (name, v) in [
            ("ground.gps_sigma", self.ground.gps_sigma),
            ("ground.lidar_sigma", self.ground.lidar_sigma),
            ("ground.bearing_sigma_px", self.ground.bearing_sigma_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Schema {
                    path: name.into(),
                    message: "must be non-negative".into(),
                });
            }
        }
        for (i, c) in self.casualties.iter().enumerate() {
            let [x, y] = c.position;
            if !(0.0..=self.field.width).contains(&x) || !(0.0..=self.field.height).contains(&y) {
                return Err(SimError::Bounds { index: i, position: c.position });
            }
            if !(30.0..=200.0).contains(&c.hr_bpm) {
                return Err(SimError::Schema {
                    path: format!("casualties.{i}.hr_bpm"),
                    message: "must lie in [30, 200]".into(),
                });
            }
            if !(4.0..=40.0).contains(&c.rr_bpm) {
                return Err(SimError::Schema {
                    path: format!("casualties.{i}.rr_bpm"),
                    message: "must lie in [4, 40]".into(),
                });
            }
            unit(&format!("casualties.{i}.motion_fraction"), c.motion_fraction)?;
            unit(&format!("casualties.{i}.chest_visibility"), c.chest_visibility)?;
            unit(&format!("casualties.{i}.face_visibility"), c.face_visibility)?;
        }
        let mut ids = std::collections::BTreeSet::new();
        ids.insert(self.basestation.id.as_str());
        for (i, r) in self.robots.iter().enumerate() {
            crate::meshsync::check_name(&r.id).map_err(|e| SimError::Schema {
                path: format!("robots.{i}.id"),
                message: e.to_string(),
            })?;
            if !ids.insert(r.id.as_str()) {
                return Err(SimError::Schema {
                    path: format!("robots.{i}.id"),
                    message: format!("duplicate node id {:?}", r.id),
                });
            }
            positive(&format!("robots.{i}.speed"), r.speed)?;
            if r.kind == RobotKind::Uav {
                positive(&format!("robots.{i}.altitude"), r.altitude)?;
                if let Some(s) = r.lane_spacing {
                    positive(&format!("robots.{i}.lane_spacing"), s)?;
                }
            }
            r.camera.model().map_err(|e| SimError::Schema {
                path: format!("robots.{i}.camera"),
                message: e.to_string(),
            })?;
        }
        for (i, o) in self.link.outages.iter().enumerate() {
            if !ids.contains(o.node.as_str()) {
                return Err(SimError::Schema {
                    path: format!("link.outages.{i}.node"),
                    message: format!("unknown node {:?}", o.node),
                });
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.sim.duration / self.sim.dt + 1e-9).floor() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario_version = 1
seed = 3
[field]
width = 40.0
height = 30.0
[[casualties]]
position = [20.0, 15.0]
[[robots]]
id = "uav1"
kind = "uav"
start = [0.0, 0.0]
speed = 5.0
[[robots]]
id = "ugv1"
kind = "ugv"
start = [0.0, 0.0]
speed = 1.0
"#;

    #[test]
    fn minimal_document_loads_with_defaults() {
        let s = load_scenario(MINIMAL, &[]).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.sim.dt, 0.1);
        assert_eq!(s.robots.len(), 2);
        assert_eq!(s.casualties[0].hr_bpm, 72.0);
        assert_eq!(s.basestation.id, "base");
    }

    #[test]
    fn casualty_outside_field_is_bounds_error() {
        let e = load_scenario(&MINIMAL.replace("[20.0, 15.0]", "[50.0, 15.0]"), &[]).unwrap_err();
        assert!(matches!(e, SimError::Bounds { index: 0, .. }));
    }

    #[test]
    fn missing_seed_names_the_field() {
        let e = load_scenario(&MINIMAL.replace("seed = 3", ""), &[]).unwrap_err();
        match e {
            SimError::Schema { path, message } => assert_eq!(path, "seed", "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_path() {
        let e = load_scenario(&MINIMAL.replace("height = 30.0", "height = 30.0\nhieght = 2"), &[]).unwrap_err();
        match e {
            SimError::Schema { path, .. } => assert_eq!(path, "field.hieght"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_apply_and_typos_fail() {
        let ov = |k: &str, v: &str| vec![(k.to_string(), v.to_string())];
        let s = load_scenario(MINIMAL, &ov("sim.dt", "0.05")).unwrap();
        assert_eq!(s.sim.dt, 0.05);
        let s = load_scenario(MINIMAL, &ov("casualties.0.hr_bpm", "90")).unwrap();
        assert_eq!(s.casualties[0].hr_bpm, 90.0);
        let s = load_scenario(MINIMAL, &ov("sim.mode", "year1")).unwrap();
        assert_eq!(s.sim.mode, FusionMode::Year1);
        assert!(matches!(load_scenario(MINIMAL, &ov("sim.dtt", "0.05")), Err(SimError::Schema { .. })));
        assert!(matches!(
            load_scenario(MINIMAL, &ov("casualties.4.hr_bpm", "90")),
            Err(SimError::Schema { .. })
        ));
        assert!(parse_override("novalue").is_err());
        assert_eq!(parse_override("a.b = 2").unwrap(), ("a.b".into(), "2".into()));
    }

    #[test]
    fn validation_catches_bad_numbers() {
        assert!(load_scenario(MINIMAL, &[("sim.dt".into(), "0".into())]).is_err());
        assert!(load_scenario(MINIMAL, &[("detection.p_det".into(), "1.5".into())]).is_err());
        assert!(load_scenario(&MINIMAL.replace("\"ugv1\"", "\"uav1\""), &[]).is_err());
    }
}
