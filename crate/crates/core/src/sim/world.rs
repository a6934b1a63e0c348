use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::scenario::{RobotKind, Scenario};
use super::sensors::{camera_column, footprint_half_extents, lawnmower, lidar_scan, uav_detect, LIDAR_HEIGHT_M};
use super::{stream_seed, SimError};
use crate::geoloc::{
    bearing_from_pixel, detection_weight, local_to_world, localize_from_lidar, pixel_to_world, CameraModel,
    CasualtyId, CasualtyMap, Point3, SensorPose, DEFAULT_CLUSTER_GAP_M, DEFAULT_HALF_WIDTH_RAD,
};
use crate::meshsync::{sync_session, LinkMonitor, LinkState, RecordKey, Store};
use crate::orchestrator::{
    assessment_duration, build_scorecard, builtin_plugin, configure, default_plugin_configs, latest_scorecards,
    run_assessment, AssessmentContext, PluginDescriptor, PluginResult, Registry, Scorecard, SCORECARD_STREAM,
};

/// UGVs stop this far short of the casualty estimate.
pub const STANDOFF_M: f64 = 1.5;
/// A trigger is accepted only within this distance of the target.
pub const TRIGGER_RADIUS_M: f64 = 2.0;
const CASUALTY_MAP_STREAM: &str = "casualty_map";
const ROBOT_POSE_STREAM: &str = "robot_pose";
/// Robots publish their pose this often, s.
const POSE_PERIOD_S: f64 = 10.0;
/// Lidar returns farther than this are not simulated for bodies.
const LIDAR_BODY_RANGE_M: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Nearest idle UGV goes to each unassessed casualty, triggers on
    /// arrival and drives home when nothing is left.
    Auto,
    /// Only operator commands move UGVs.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Dispatch { robot: String, casualty: CasualtyId },
    Trigger { robot: String },
    TogglePlugin { plugin: String, enabled: bool },
}

/// Who issued a command. Recorded with every command event so a log can be
/// replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Operator,
    Script,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    UnknownRobot,
    UnknownCasualty,
    UnknownPlugin,
    NotAUgv,
    NotInPosition,
    NoTarget,
    Busy,
}

impl Rejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::UnknownRobot => "unknown_robot",
            Rejection::UnknownCasualty => "unknown_casualty",
            Rejection::UnknownPlugin => "unknown_plugin",
            Rejection::NotAUgv => "not_a_ugv",
            Rejection::NotInPosition => "not_in_position",
            Rejection::NoTarget => "no_target",
            Rejection::Busy => "busy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Sweeping,
    Idle,
    Moving,
    Arrived,
    Assessing,
    Returning,
}

#[derive(Debug)]
struct Assessment {
    target: CasualtyId,
    casualty: CasualtyId,
    done_step: u64,
    results: Vec<PluginResult>,
    manikin: bool,
    truth: usize,
}

#[derive(Debug)]
enum State {
    Sweeping { next_wp: usize },
    Idle,
    Moving { target: CasualtyId },
    Arrived { target: CasualtyId },
    Assessing(Box<Assessment>),
    Returning,
}

#[derive(Debug)]
struct Robot {
    id: String,
    kind: RobotKind,
    index: u32,
    pos: Point3,
    heading: f64,
    speed: f64,
    home: Point3,
    camera: CameraModel,
    waypoints: Vec<[f64; 2]>,
    state: State,
}

impl Robot {
    fn status(&self) -> RobotStatus {
        match self.state {
            State::Sweeping { .. } => RobotStatus::Sweeping,
            State::Idle => RobotStatus::Idle,
            State::Moving { .. } => RobotStatus::Moving,
            State::Arrived { .. } => RobotStatus::Arrived,
            State::Assessing(_) => RobotStatus::Assessing,
            State::Returning => RobotStatus::Returning,
        }
    }

    fn target(&self) -> Option<CasualtyId> {
        match &self.state {
            State::Moving { target } | State::Arrived { target } => Some(*target),
            State::Assessing(a) => Some(a.target),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: String,
    pub kind: RobotKind,
    pub position: [f64; 3],
    pub heading: f64,
    pub status: RobotStatus,
    pub target: Option<CasualtyId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasualtyView {
    pub casualty_id: CasualtyId,
    pub position: [f64; 3],
    pub detection_count: u64,
    pub total_weight: f64,
    pub from_ground: bool,
    /// Latest scorecard held by the basestation.
    pub scorecard: Option<Scorecard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkView {
    pub a: String,
    pub b: String,
    pub quality: f64,
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginView {
    pub name: String,
    pub enabled: bool,
}

/// Coherent view of the world at one step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    pub finished: bool,
    pub basestation: String,
    pub robots: Vec<RobotView>,
    pub casualties: Vec<CasualtyView>,
    pub links: Vec<LinkView>,
    pub plugins: Vec<PluginView>,
}

pub struct World {
    scenario: Scenario,
    policy: Policy,
    step: u64,
    total_steps: u64,
    robots: Vec<Robot>,
    truth: Vec<Point3>,
    truth_yaw: Vec<f64>,
    map: CasualtyMap,
    stores: BTreeMap<String, Store>,
    monitor: LinkMonitor,
    links: BTreeMap<(String, String), f64>,
    plugin_configs: Vec<PluginDescriptor>,
    registries: BTreeMap<String, Registry>,
    assessed: BTreeSet<CasualtyId>,
    assessments_started: u64,
    delivered: BTreeMap<RecordKey, f64>,
    pending: Vec<(Command, Origin)>,
    detect_rng: ChaCha8Rng,
    ground_rng: ChaCha8Rng,
    events: Vec<String>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World").field("step", &self.step).finish_non_exhaustive()
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn pt(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn horizontal(a: &Point3, b: &Point3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

impl World {
    pub fn new(scenario: Scenario, policy: Policy) -> Result<World, SimError> {
        scenario.validate()?;
        let gz = scenario.sim.ground_z;
        let mut plugin_configs = default_plugin_configs(scenario.sim.mode);
        for name in &scenario.sim.disabled_plugins {
            let d = plugin_configs
                .iter_mut()
                .find(|d| &d.name == name)
                .ok_or_else(|| SimError::Schema {
                    path: "sim.disabled_plugins".into(),
                    message: format!("unknown plugin {name:?}"),
                })?;
            d.enabled = false;
        }
        let mut robots = Vec::new();
        for (i, r) in scenario.robots.iter().enumerate() {
            let camera = r.camera.model().expect("validated");
            let (z, waypoints, state) = match r.kind {
                RobotKind::Uav => {
                    let (_, hy) = footprint_half_extents(&camera, r.altitude);
                    let spacing = r.lane_spacing.unwrap_or(1.6 * hy);
                    (
                        gz + r.altitude,
                        lawnmower(scenario.field.width, scenario.field.height, spacing),
                        State::Sweeping { next_wp: 0 },
                    )
                }
                RobotKind::Ugv => (gz + LIDAR_HEIGHT_M, Vec::new(), State::Idle),
            };
            let pos = Point3::new(r.start[0], r.start[1], z);
            robots.push(Robot {
                id: r.id.clone(),
                kind: r.kind,
                index: i as u32,
                pos,
                heading: 0.0,
                speed: r.speed,
                home: pos,
                camera,
                waypoints,
                state,
            });
        }
        let mut layout = ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, "layout"));
        let truth: Vec<Point3> = scenario
            .casualties
            .iter()
            .map(|c| Point3::new(c.position[0], c.position[1], gz))
            .collect();
        let truth_yaw = truth.iter().map(|_| layout.random::<f64>() * std::f64::consts::PI).collect();
        let mut stores = BTreeMap::new();
        stores.insert(scenario.basestation.id.clone(), Store::new(scenario.basestation.id.clone()));
        for r in &robots {
            stores.insert(r.id.clone(), Store::new(r.id.clone()));
        }
        let mut world = World {
            total_steps: scenario.steps(),
            detect_rng: ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, "uav_detect")),
            ground_rng: ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, "ground")),
            scenario,
            policy,
            step: 0,
            robots,
            truth,
            truth_yaw,
            map: CasualtyMap::new(),
            stores,
            monitor: LinkMonitor::new(),
            links: BTreeMap::new(),
            plugin_configs,
            registries: BTreeMap::new(),
            assessed: BTreeSet::new(),
            assessments_started: 0,
            delivered: BTreeMap::new(),
            pending: Vec::new(),
            events: Vec::new(),
        };
        world.rebuild_registries()?;
        let truth_json: Vec<Value> = world
            .scenario
            .casualties
            .iter()
            .enumerate()
            .map(|(i, c)| json!({"index": i, "position": pt(&world.truth[i]), "hr_bpm": c.hr_bpm, "rr_bpm": c.rr_bpm, "manikin": c.manikin}))
            .collect();
        let ev = json!({
            "seed": world.scenario.seed,
            "dt": world.scenario.sim.dt,
            "duration": world.scenario.sim.duration,
            "mode": world.scenario.sim.mode,
            "policy": policy,
            "casualties": truth_json,
            "robots": world.robots.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
            "basestation": world.scenario.basestation.id,
        });
        world.log("start", ev);
        world.update_links();
        Ok(world)
    }

    fn rebuild_registries(&mut self) -> Result<(), SimError> {
        self.registries.clear();
        for r in self.robots.iter().filter(|r| r.kind == RobotKind::Ugv) {
            let mut entries = Vec::new();
            for d in &self.plugin_configs {
                let (_, _, plugin) =
                    builtin_plugin(&d.name, self.scenario.sim.classifier_accuracy).expect("builtin name");
                entries.push((d.clone(), plugin));
            }
            let reg = configure(entries).map_err(|e| SimError::Plugins(e.to_string()))?;
            self.registries.insert(r.id.clone(), reg);
        }
        Ok(())
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        round9(self.step as f64 * self.scenario.sim.dt)
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.total_steps
    }

    pub fn events(&self) -> &[String] {
        &self.events
    }

    pub fn casualty_map(&self) -> &CasualtyMap {
        &self.map
    }

    pub fn store(&self, node: &str) -> Option<&Store> {
        self.stores.get(node)
    }

    pub fn truth_positions(&self) -> &[Point3] {
        &self.truth
    }

    pub fn delivered(&self) -> &BTreeMap<RecordKey, f64> {
        &self.delivered
    }

    fn log(&mut self, kind: &str, fields: Value) {
        let mut obj = match fields {
            Value::Object(m) => m,
            _ => serde_json::Map::new(),
        };
        obj.insert("kind".into(), json!(kind));
        obj.insert("step".into(), json!(self.step));
        obj.insert("t".into(), json!(self.time()));
        self.events.push(Value::Object(obj).to_string());
    }

    fn robot_idx(&self, id: &str) -> Option<usize> {
        self.robots.iter().position(|r| r.id == id)
    }

    /// Validates a command against the current state.
    pub fn check(&self, cmd: &Command) -> Result<(), Rejection> {
        let ugv = |id: &str| -> Result<&Robot, Rejection> {
            let r = self.robot_idx(id).map(|i| &self.robots[i]).ok_or(Rejection::UnknownRobot)?;
            if r.kind != RobotKind::Ugv {
                return Err(Rejection::NotAUgv);
            }
            Ok(r)
        };
        match cmd {
            Command::Dispatch { robot, casualty } => {
                let r = ugv(robot)?;
                if !self.map.contains(*casualty) {
                    return Err(Rejection::UnknownCasualty);
                }
                if matches!(r.state, State::Assessing(_)) {
                    return Err(Rejection::Busy);
                }
                Ok(())
            }
            Command::Trigger { robot } => {
                let r = ugv(robot)?;
                let target = match &r.state {
                    State::Assessing(_) => return Err(Rejection::Busy),
                    State::Moving { target } | State::Arrived { target } => *target,
                    _ => return Err(Rejection::NoTarget),
                };
                let goal = self.map.get(target).ok_or(Rejection::UnknownCasualty)?.point();
                if horizontal(&r.pos, &goal) > TRIGGER_RADIUS_M {
                    return Err(Rejection::NotInPosition);
                }
                Ok(())
            }
            Command::TogglePlugin { plugin, .. } => {
                if self.plugin_configs.iter().any(|d| &d.name == plugin) {
                    Ok(())
                } else {
                    Err(Rejection::UnknownPlugin)
                }
            }
        }
    }

    /// Checks a command now and queues it for the next step boundary.
    pub fn submit(&mut self, cmd: Command) -> Result<(), Rejection> {
        self.check(&cmd)?;
        self.pending.push((cmd, Origin::Operator));
        Ok(())
    }

    /// Queues a command without an up-front check; the verdict is logged at
    /// the boundary.
    pub fn enqueue(&mut self, cmd: Command, origin: Origin) {
        self.pending.push((cmd, origin));
    }

    fn apply(&mut self, cmd: Command, origin: Origin) {
        let cmd_json = serde_json::to_value(&cmd).expect("command serializes");
        if let Err(r) = self.check(&cmd) {
            self.log("command_rejected", json!({"command": cmd_json, "origin": origin, "reason": r.as_str()}));
            return;
        }
        self.log("command", json!({"command": cmd_json, "origin": origin}));
        match cmd {
            Command::Dispatch { robot, casualty } => {
                let i = self.robot_idx(&robot).expect("checked");
                self.robots[i].state = State::Moving { target: casualty };
            }
            Command::Trigger { robot } => {
                let i = self.robot_idx(&robot).expect("checked");
                self.start_assessment(i);
            }
            Command::TogglePlugin { plugin, enabled } => {
                for d in &mut self.plugin_configs {
                    if d.name == plugin {
                        d.enabled = enabled;
                    }
                }
                self.rebuild_registries().expect("builtin plugins configure");
            }
        }
    }

    fn publish(&mut self, node: &str, stream: &str, payload: Value) {
        let t = self.time();
        let bytes = payload.to_string().into_bytes();
        self.stores
            .get_mut(node)
            .expect("node store")
            .put_local(stream, bytes, t)
            .expect("valid names");
    }

    fn nearest_truth(&self, p: &Point3) -> usize {
        (0..self.truth.len())
            .min_by(|&a, &b| horizontal(&self.truth[a], p).total_cmp(&horizontal(&self.truth[b], p)))
            .expect("at least one casualty")
    }

    fn start_assessment(&mut self, i: usize) {
        let target = self.robots[i].target().expect("checked trigger has target");
        let goal = self.map.get(target).expect("checked").point();
        let robot_pos = self.robots[i].pos;
        let heading = (goal.y - robot_pos.y).atan2(goal.x - robot_pos.x);
        self.robots[i].heading = heading;
        let robot_id = self.robots[i].id.clone();

        // Ground refinement: lidar slice along the camera bearing to the
        // person in view, placed in the world with a noisy GPS fix.
        let gp = self.scenario.ground.clone();
        let seen = self.nearest_truth(&goal);
        let bodies: Vec<(Point3, f64)> = (0..self.truth.len())
            .filter(|&k| horizontal(&self.truth[k], &robot_pos) <= LIDAR_BODY_RANGE_M)
            .map(|k| (self.truth[k], self.truth_yaw[k]))
            .collect();
        let rng = &mut self.ground_rng;
        let scan = lidar_scan(&robot_pos, heading, &bodies, gp.lidar_sigma, rng);
        let column = camera_column(&robot_pos, heading, &self.truth[seen], &self.robots[i].camera, gp.bearing_sigma_px, rng);
        let gps_noise = rand_distr::Normal::new(0.0, gp.gps_sigma).expect("finite");
        let gps = Point3::new(
            robot_pos.x + rand_distr::Distribution::sample(&gps_noise, rng),
            robot_pos.y + rand_distr::Distribution::sample(&gps_noise, rng),
            robot_pos.z,
        );
        let fix = column.and_then(|u| {
            let bearing = bearing_from_pixel(u, &self.robots[i].camera);
            localize_from_lidar(&scan, bearing, DEFAULT_HALF_WIDTH_RAD, DEFAULT_CLUSTER_GAP_M)
                .ok()
                .map(|local| local_to_world(&local, heading, &gps))
        });
        let (casualty, fix_json) = match fix {
            Some(p) => {
                let before = self.map.len();
                let id = self.map.associate(&p);
                let spawned = self.map.len() > before;
                (id, json!({"position": pt(&p), "casualty_id": id, "spawned": spawned}))
            }
            None => (target, Value::Null),
        };
        self.log("ground_fix", json!({"robot": robot_id, "target": target, "fix": fix_json}));
        if let Some(c) = self.map.get(casualty).cloned() {
            self.publish(
                &robot_id,
                CASUALTY_MAP_STREAM,
                json!({"casualty_id": c.casualty_id, "position": c.position, "detection_count": c.detection_count,
                       "total_weight": c.total_weight, "from_ground": c.from_ground, "source": robot_id}),
            );
        }

        let truth = seen;
        let spec = &self.scenario.casualties[truth];
        let ctx = AssessmentContext {
            casualty_id: casualty,
            trigger_time: self.time(),
            seed: stream_seed(self.scenario.seed, &format!("assess/{}", self.assessments_started)),
            subject: spec.subject(),
        };
        let manikin = spec.manikin;
        self.assessments_started += 1;
        let reg = self.registries.get_mut(&robot_id).expect("ugv registry");
        let results = run_assessment(&self.map, reg, &ctx).expect("casualty is in the map");
        let dur = assessment_duration(&results);
        let steps = (dur / self.scenario.sim.dt - 1e-9).ceil().max(0.0) as u64;
        self.log(
            "assessment_started",
            json!({"robot": robot_id, "casualty_id": casualty, "target": target,
                   "plugins": results.iter().map(|r| r.plugin.clone()).collect::<Vec<_>>(), "duration": dur}),
        );
        self.robots[i].state = State::Assessing(Box::new(Assessment {
            target,
            casualty,
            done_step: self.step + steps,
            results,
            manikin,
            truth,
        }));
    }

    fn finish_assessments(&mut self) {
        for i in 0..self.robots.len() {
            let done = matches!(&self.robots[i].state, State::Assessing(a) if a.done_step <= self.step);
            if !done {
                continue;
            }
            let State::Assessing(a) = std::mem::replace(&mut self.robots[i].state, State::Idle) else {
                unreachable!()
            };
            let id = self.robots[i].id.clone();
            let t = self.time();
            let store = self.stores.get_mut(&id).expect("store");
            let (sc, key) = build_scorecard(&self.map, store, a.casualty, &a.results, self.scenario.sim.mode, a.manikin, t)
                .expect("casualty is in the map");
            self.assessed.insert(a.target);
            self.assessed.insert(a.casualty);
            let completed: Vec<&str> = a.results.iter().filter(|r| r.completed).map(|r| r.plugin.as_str()).collect();
            let timed_out: Vec<&str> = a.results.iter().filter(|r| !r.completed).map(|r| r.plugin.as_str()).collect();
            let ev = json!({"robot": id, "casualty_id": a.casualty, "truth": a.truth, "seq": key.seq,
                "completed": completed, "timed_out": timed_out,
                "scorecard": serde_json::to_value(&sc).expect("scorecard serializes")});
            self.log("scorecard", ev);
        }
    }

    fn auto_policy(&mut self) {
        if self.policy != Policy::Auto {
            return;
        }
        for i in 0..self.robots.len() {
            if let State::Arrived { .. } = self.robots[i].state {
                let cmd = Command::Trigger { robot: self.robots[i].id.clone() };
                self.apply(cmd, Origin::Auto);
            }
        }
        let targeted: BTreeSet<CasualtyId> = self.robots.iter().filter_map(|r| r.target()).collect();
        let open: Vec<(CasualtyId, Point3)> = self
            .map
            .clusters()
            .iter()
            .filter(|c| !self.assessed.contains(&c.casualty_id) && !targeted.contains(&c.casualty_id))
            .map(|c| (c.casualty_id, c.point()))
            .collect();
        for (cid, p) in open {
            let best = self
                .robots
                .iter()
                .filter(|r| r.kind == RobotKind::Ugv && matches!(r.state, State::Idle | State::Returning))
                .min_by(|a, b| horizontal(&a.pos, &p).total_cmp(&horizontal(&b.pos, &p)))
                .map(|r| r.id.clone());
            if let Some(robot) = best {
                self.apply(Command::Dispatch { robot, casualty: cid }, Origin::Auto);
            }
        }
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            if r.kind == RobotKind::Ugv && matches!(r.state, State::Idle) && horizontal(&r.pos, &r.home) > 0.5 {
                let id = r.id.clone();
                self.robots[i].state = State::Returning;
                self.log("return_home", json!({"robot": id}));
            }
        }
    }

    fn move_robots(&mut self) {
        let dt = self.scenario.sim.dt;
        for i in 0..self.robots.len() {
            let reach = self.robots[i].speed * dt;
            let pos = self.robots[i].pos;
            let (goal, standoff) = match &self.robots[i].state {
                State::Sweeping { next_wp } => {
                    let w = self.robots[i].waypoints[*next_wp];
                    (Point3::new(w[0], w[1], pos.z), 0.0)
                }
                State::Moving { target } => match self.map.get(*target) {
                    Some(c) => (c.point(), STANDOFF_M),
                    None => continue,
                },
                State::Returning => (self.robots[i].home, 0.0),
                _ => continue,
            };
            let d = horizontal(&pos, &goal);
            let r = &mut self.robots[i];
            if d > standoff + 1e-9 {
                let stepd = reach.min(d - standoff);
                let (dx, dy) = ((goal.x - pos.x) / d, (goal.y - pos.y) / d);
                r.pos.x += dx * stepd;
                r.pos.y += dy * stepd;
                r.heading = dy.atan2(dx);
            }
            let left = horizontal(&r.pos, &goal) - standoff;
            if left <= 1e-9 {
                match r.state {
                    State::Sweeping { next_wp } => {
                        r.state = State::Sweeping {
                            next_wp: (next_wp + 1) % r.waypoints.len(),
                        };
                    }
                    State::Moving { target } => {
                        r.state = State::Arrived { target };
                        let id = r.id.clone();
                        let p = pt(&r.pos);
                        self.log("arrived", json!({"robot": id, "casualty_id": target, "position": p}));
                    }
                    State::Returning => {
                        r.state = State::Idle;
                        let id = r.id.clone();
                        self.log("home", json!({"robot": id}));
                    }
                    _ => {}
                }
            }
        }
    }

    fn detect(&mut self) {
        let frame_steps = ((self.scenario.detection.frame_period / self.scenario.sim.dt).round() as u64).max(1);
        if !self.step.is_multiple_of(frame_steps) {
            return;
        }
        let det = self.scenario.detection.clone();
        let gz = self.scenario.sim.ground_z;
        let t = self.time();
        for i in 0..self.robots.len() {
            if self.robots[i].kind != RobotKind::Uav {
                continue;
            }
            let pose = SensorPose::nadir(self.robots[i].pos);
            let cam = self.robots[i].camera;
            let index = self.robots[i].index;
            let hits = uav_detect(&self.truth, &cam, &pose, det.p_det, det.sigma_px, t, index, &mut self.detect_rng);
            for (truth, d) in hits {
                let Ok(p) = pixel_to_world(&d, &cam, &pose, gz) else { continue };
                let w = detection_weight(&d, &cam);
                let before = self.map.len();
                let id = self.map.cluster_update(&p, w).expect("finite detection");
                let c = self.map.get(id).expect("just updated").clone();
                let rid = self.robots[i].id.clone();
                self.log(
                    if self.map.len() > before { "cluster_spawn" } else { "cluster_update" },
                    json!({"robot": rid, "casualty_id": id, "detection": pt(&p), "weight": w, "truth": truth,
                           "position": c.position}),
                );
                self.publish(
                    &rid,
                    CASUALTY_MAP_STREAM,
                    json!({"casualty_id": id, "position": c.position, "detection_count": c.detection_count,
                           "total_weight": c.total_weight, "from_ground": c.from_ground, "source": rid}),
                );
            }
        }
    }

    fn node_positions(&self) -> Vec<(String, Point3)> {
        let b = &self.scenario.basestation;
        let mut v = vec![(b.id.clone(), Point3::new(b.position[0], b.position[1], b.position[2]))];
        v.extend(self.robots.iter().map(|r| (r.id.clone(), r.pos)));
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    fn in_outage(&self, node: &str, t: f64) -> bool {
        self.scenario
            .link
            .outages
            .iter()
            .any(|o| o.node == node && t >= o.start && t < o.end)
    }

    /// Recomputes link qualities and returns the pairs whose sessions are
    /// due: upward crossings plus periodic re-syncs of usable links.
    fn update_links(&mut self) -> Vec<(String, String)> {
        let lp = self.scenario.link.clone();
        let t = self.time();
        let nodes = self.node_positions();
        let mut changes = Vec::new();
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                let (a, pa) = &nodes[i];
                let (b, pb) = &nodes[j];
                let q = if self.in_outage(a, t) || self.in_outage(b, t) {
                    0.0
                } else {
                    (1.0 - (pa - pb).norm() / lp.range_0db).clamp(0.0, 1.0)
                };
                self.links.insert((a.clone(), b.clone()), q);
                changes.push(LinkState::new(a.clone(), b.clone(), q).with_threshold(lp.threshold));
            }
        }
        let was: Vec<bool> = changes.iter().map(|l| self.monitor.is_up(&l.a, &l.b)).collect();
        let mut due = self.monitor.on_link_event(&changes);
        for (l, was_up) in changes.iter().zip(was) {
            let up = l.permits_sync();
            if up != was_up {
                self.log(
                    if up { "link_up" } else { "link_down" },
                    json!({"a": l.a, "b": l.b, "quality": l.quality}),
                );
            }
        }
        let period = ((lp.sync_period / self.scenario.sim.dt).round() as u64).max(1);
        if self.step.is_multiple_of(period) {
            due.extend(changes.iter().filter(|l| l.permits_sync()).map(|l| l.pair()));
        }
        due.sort();
        due.dedup();
        due
    }

    fn run_sessions(&mut self, due: Vec<(String, String)>) {
        let base = self.scenario.basestation.id.clone();
        let mut touched_base = false;
        for (a, b) in due {
            let q = self.links[&(a.clone(), b.clone())];
            let link = LinkState::new(a.clone(), b.clone(), q).with_threshold(self.scenario.link.threshold);
            let mut sa = self.stores.remove(&a).expect("store");
            let mut sb = self.stores.remove(&b).expect("store");
            let res = sync_session(&mut sa, &mut sb, &link);
            self.stores.insert(a.clone(), sa);
            self.stores.insert(b.clone(), sb);
            if let Ok(s) = res {
                if s.transferred() > 0 {
                    self.log(
                        "sync",
                        json!({"a": a, "b": b, "a_to_b": s.a_to_b, "b_to_a": s.b_to_a, "quality": q}),
                    );
                    touched_base |= a == base || b == base;
                }
            }
        }
        if touched_base {
            let t = self.time();
            let fresh: Vec<(RecordKey, Scorecard)> = self.stores[&base]
                .stream(SCORECARD_STREAM)
                .filter(|r| !self.delivered.contains_key(&r.key))
                .filter_map(|r| Scorecard::from_json(&r.payload).ok().map(|s| (r.key.clone(), s)))
                .collect();
            for (key, sc) in fresh {
                self.delivered.insert(key.clone(), t);
                self.log(
                    "scorecard_delivered",
                    json!({"casualty_id": sc.casualty_id, "origin": key.origin, "seq": key.seq,
                           "assessed_at": sc.assessed_at, "latency": round9(t - sc.assessed_at)}),
                );
            }
        }
    }

    fn publish_poses(&mut self) {
        let period = ((POSE_PERIOD_S / self.scenario.sim.dt).round() as u64).max(1);
        if !self.step.is_multiple_of(period) {
            return;
        }
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            let (id, v) = (
                r.id.clone(),
                json!({"robot": r.id, "position": pt(&r.pos), "heading": r.heading, "status": r.status()}),
            );
            self.publish(&id, ROBOT_POSE_STREAM, v);
        }
    }

    /// Advances one step: queued commands, policy, motion, sensing,
    /// assessments, then radio.
    pub fn step(&mut self) {
        if self.is_finished() {
            return;
        }
        for (cmd, origin) in std::mem::take(&mut self.pending) {
            self.apply(cmd, origin);
        }
        self.auto_policy();
        self.move_robots();
        self.detect();
        self.finish_assessments();
        self.publish_poses();
        self.step += 1;
        let due = self.update_links();
        self.run_sessions(due);
        if self.is_finished() {
            let clusters: Vec<Value> = self
                .map
                .clusters()
                .iter()
                .map(|c| json!({"casualty_id": c.casualty_id, "position": c.position, "detection_count": c.detection_count}))
                .collect();
            let held: Vec<CasualtyId> = latest_scorecards(&self.stores[&self.scenario.basestation.id]).into_keys().collect();
            self.log("end", json!({"clusters": clusters, "basestation_scorecards": held}));
        }
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            self.step();
        }
    }

    /// Latest scorecard per casualty held at the basestation.
    pub fn basestation_scorecards(&self) -> BTreeMap<CasualtyId, Scorecard> {
        latest_scorecards(&self.stores[&self.scenario.basestation.id])
    }

    pub fn plugin_configs(&self) -> &[PluginDescriptor] {
        &self.plugin_configs
    }

    pub fn snapshot(&self) -> Snapshot {
        let cards = self.basestation_scorecards();
        Snapshot {
            t: self.time(),
            step: self.step,
            finished: self.is_finished(),
            basestation: self.scenario.basestation.id.clone(),
            robots: self
                .robots
                .iter()
                .map(|r| RobotView {
                    id: r.id.clone(),
                    kind: r.kind,
                    position: pt(&r.pos),
                    heading: r.heading,
                    status: r.status(),
                    target: r.target(),
                })
                .collect(),
            casualties: self
                .map
                .clusters()
                .iter()
                .map(|c| CasualtyView {
                    casualty_id: c.casualty_id,
                    position: c.position,
                    detection_count: c.detection_count,
                    total_weight: c.total_weight,
                    from_ground: c.from_ground,
                    scorecard: cards.get(&c.casualty_id).cloned(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|((a, b), q)| LinkView {
                    a: a.clone(),
                    b: b.clone(),
                    quality: *q,
                    up: *q >= self.scenario.link.threshold,
                })
                .collect(),
            plugins: self
                .plugin_configs
                .iter()
                .map(|d| PluginView {
                    name: d.name.clone(),
                    enabled: d.enabled,
                })
                .collect(),
        }
    }

    pub(crate) fn truth_for(&self, casualty: CasualtyId) -> Option<usize> {
        self.map.get(casualty).map(|c| self.nearest_truth(&c.point()))
    }
}
