//! Deterministic multi-lane highway on a looped road.
//!
//! The host takes one of five high-level decisions per step; traffic keeps
//! to its lane at a per-vehicle desired speed and only slows down to follow
//! whatever is directly ahead of it. Randomness is consumed only at reset.

mod config;
mod eval;
mod expert;
mod lidar;

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use config::HighwayConfig;
pub use eval::{
    evaluate_policy, evaluation_episode_seed, run_episode, ConstantPolicy, DrivingPolicy,
    DrivingStats, EpisodeStats,
};
pub use expert::{perceive_gaps, ExpertRules, ScriptedExpert, SensedGaps};
pub use lidar::{cast_ray, lidar_scan, LidarScan};

/// The five high-level driving decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum DrivingAction {
    Maintain = 0,
    Accelerate = 1,
    Decelerate = 2,
    LaneLeft = 3,
    LaneRight = 4,
}

impl DrivingAction {
    pub const COUNT: usize = 5;
    pub const ALL: [DrivingAction; 5] = [
        DrivingAction::Maintain,
        DrivingAction::Accelerate,
        DrivingAction::Decelerate,
        DrivingAction::LaneLeft,
        DrivingAction::LaneRight,
    ];

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::domain(format!("action id {id} is outside [0, 4]")))
    }

    pub fn id(self) -> usize {
        self as usize
    }

    /// Lane index delta for lane-change actions.
    fn lane_delta(self) -> Option<isize> {
        match self {
            DrivingAction::LaneLeft => Some(-1),
            DrivingAction::LaneRight => Some(1),
            _ => None,
        }
    }
}

impl From<DrivingAction> for u8 {
    fn from(a: DrivingAction) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for DrivingAction {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        DrivingAction::from_id(v as usize)
    }
}

impl fmt::Display for DrivingAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DrivingAction::Maintain => "maintain",
            DrivingAction::Accelerate => "accelerate",
            DrivingAction::Decelerate => "decelerate",
            DrivingAction::LaneLeft => "left",
            DrivingAction::LaneRight => "right",
        };
        f.write_str(name)
    }
}

/// An in-flight lateral maneuver from `from_lane` towards `to_lane`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub from_lane: usize,
    pub to_lane: usize,
    /// Steps already spent moving towards `to_lane`.
    pub elapsed: usize,
    /// Set while the maneuver is heading back to the lane it started from.
    pub aborted: bool,
}

impl LaneChange {
    pub fn progress(&self, total_steps: usize) -> f64 {
        self.elapsed as f64 / total_steps as f64
    }

    fn direction(&self) -> isize {
        if self.to_lane < self.from_lane {
            -1
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostVehicle {
    /// Lane the host is committed to; the origin lane while a maneuver runs.
    pub lane_index: usize,
    /// Lateral displacement from the centre of `lane_index`, +y is left.
    pub lateral_offset: f64,
    pub longitudinal_pos: f64,
    /// km/h
    pub speed: f64,
    pub lane_change: Option<LaneChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficVehicle {
    pub lane_index: usize,
    pub longitudinal_pos: f64,
    pub speed: f64,
    pub desired_speed: f64,
}

/// Full ground truth of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayState {
    pub host: HostVehicle,
    pub traffic: Vec<TrafficVehicle>,
    pub step_index: usize,
    pub terminated: bool,
    /// Most recent frame first.
    frames: VecDeque<Vec<f32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub collision: bool,
    pub overtakes_delta: u32,
    pub lane_change_completed: bool,
    /// A lane change was requested towards a lane that does not exist.
    pub lane_change_refused: bool,
    /// The host spent this step in (or attempting) a lateral maneuver.
    pub maneuver_active: bool,
    /// The episode reached its horizon without a collision.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub longitudinal_reward: f64,
    pub lateral_reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

impl HighwayState {
    /// Builds a state from explicit vehicles, filling the frame stack with
    /// the current scan.
    pub fn from_parts(
        cfg: &HighwayConfig,
        host: HostVehicle,
        traffic: Vec<TrafficVehicle>,
    ) -> Self {
        let mut state = HighwayState {
            host,
            traffic,
            step_index: 0,
            terminated: false,
            frames: VecDeque::with_capacity(cfg.frame_stack),
        };
        let frame = build_frame(&state, cfg);
        for _ in 0..cfg.frame_stack {
            state.frames.push_back(frame.clone());
        }
        state
    }

    /// Host lateral coordinate, +y left.
    pub fn host_y(&self, cfg: &HighwayConfig) -> f64 {
        cfg.lane_center(self.host.lane_index) + self.host.lateral_offset
    }

    pub fn traffic_y(&self, cfg: &HighwayConfig, v: &TrafficVehicle) -> f64 {
        cfg.lane_center(v.lane_index)
    }

    /// Whether the host body overlaps `lane` laterally.
    pub fn host_occupies(&self, cfg: &HighwayConfig, lane: usize) -> bool {
        (self.host_y(cfg) - cfg.lane_center(lane)).abs()
            < (cfg.lane_width + cfg.vehicle_width) / 2.0
    }

    /// Lane the host is heading to: the maneuver target, else its own lane.
    pub fn host_target_lane(&self) -> usize {
        self.host
            .lane_change
            .map_or(self.host.lane_index, |lc| lc.to_lane)
    }

    /// Flattened stacked observation, newest frame first.
    pub fn observation(&self) -> Vec<f64> {
        self.frames.iter().flatten().map(|&v| v as f64).collect()
    }

    /// Writes the observation into `out`, which must have the right length.
    pub fn observation_into(&self, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(self.frames.iter().flatten()) {
            *o = v as f64;
        }
    }

    fn push_frame(&mut self, cfg: &HighwayConfig) {
        let frame = build_frame(self, cfg);
        if self.frames.len() == cfg.frame_stack {
            self.frames.pop_back();
        }
        self.frames.push_front(frame);
    }

    /// Advances the state in place by one decision.
    pub fn step_mut(&mut self, cfg: &HighwayConfig, action: DrivingAction) -> Result<StepOutcome> {
        if self.terminated {
            return Err(Error::State("episode already terminated".into()));
        }
        let dt = cfg.dt();
        let mut info = StepInfo::default();

        match action {
            DrivingAction::Accelerate => {
                self.host.speed = (self.host.speed + cfg.vel_acc).min(cfg.v_max());
            }
            DrivingAction::Decelerate => {
                self.host.speed = (self.host.speed - cfg.vel_dec).max(cfg.v_min());
            }
            _ => {}
        }

        if let Some(delta) = action.lane_delta() {
            match self.host.lane_change.as_mut() {
                Some(lc) if lc.direction() == delta => {}
                Some(lc) => {
                    // Reverse mid-maneuver: head back where we came from.
                    std::mem::swap(&mut lc.from_lane, &mut lc.to_lane);
                    lc.elapsed = cfg.lane_change_steps - lc.elapsed;
                    lc.aborted = !lc.aborted;
                    self.host.lane_index = lc.from_lane;
                    let d = cfg.lane_center(lc.to_lane) - cfg.lane_center(lc.from_lane);
                    self.host.lateral_offset = d * lc.progress(cfg.lane_change_steps);
                }
                None => {
                    let target = self.host.lane_index as isize + delta;
                    if target < 0 || target >= cfg.lane_count as isize {
                        info.lane_change_refused = true;
                    } else {
                        self.host.lane_change = Some(LaneChange {
                            from_lane: self.host.lane_index,
                            to_lane: target as usize,
                            elapsed: 0,
                            aborted: false,
                        });
                    }
                }
            }
        }

        let following = self.traffic_speeds(cfg);
        let before: Vec<f64> = self
            .traffic
            .iter()
            .map(|v| cfg.wrap_offset(self.host.longitudinal_pos, v.longitudinal_pos))
            .collect();

        for (v, speed) in self.traffic.iter_mut().zip(following) {
            v.speed = speed;
            v.longitudinal_pos = cfg.wrap_position(v.longitudinal_pos + speed / 3.6 * dt);
        }
        self.host.longitudinal_pos =
            cfg.wrap_position(self.host.longitudinal_pos + self.host.speed / 3.6 * dt);

        if let Some(mut lc) = self.host.lane_change.take() {
            info.maneuver_active = true;
            lc.elapsed += 1;
            if lc.elapsed >= cfg.lane_change_steps {
                self.host.lane_index = lc.to_lane;
                self.host.lateral_offset = 0.0;
                info.lane_change_completed = !lc.aborted;
            } else {
                let d = cfg.lane_center(lc.to_lane) - cfg.lane_center(lc.from_lane);
                self.host.lateral_offset = d * lc.progress(cfg.lane_change_steps);
                self.host.lane_change = Some(lc);
            }
        }
        if info.lane_change_refused {
            info.maneuver_active = true;
        }

        let quarter = cfg.road_length / 4.0;
        let host_y = self.host_y(cfg);
        for (v, &prev) in self.traffic.iter().zip(&before) {
            let now = cfg.wrap_offset(self.host.longitudinal_pos, v.longitudinal_pos);
            if prev > 0.0 && now <= 0.0 && prev < quarter {
                info.overtakes_delta += 1;
            }
            let dy = cfg.lane_center(v.lane_index) - host_y;
            if now.abs() < cfg.vehicle_length && dy.abs() < cfg.vehicle_width {
                info.collision = true;
            }
        }

        self.step_index += 1;
        self.push_frame(cfg);
        info.truncated = !info.collision && self.step_index >= cfg.episode_horizon;
        self.terminated = info.collision || info.truncated;

        let (longitudinal_reward, lateral_reward) = if info.collision {
            (0.0, 0.0)
        } else {
            (
                self.host.speed / cfg.v_max(),
                if info.maneuver_active { -1.0 } else { 0.0 },
            )
        };

        Ok(StepOutcome {
            observation: self.observation(),
            longitudinal_reward,
            lateral_reward,
            terminated: self.terminated,
            info,
        })
    }

    /// Speeds traffic will drive at this step: desired speed, capped by the
    /// speed of whatever is within following distance ahead in the lane.
    fn traffic_speeds(&self, cfg: &HighwayConfig) -> Vec<f64> {
        let len = cfg.vehicle_length;
        let mut by_lane: Vec<Vec<(f64, f64, Option<usize>)>> = vec![Vec::new(); cfg.lane_count];
        for (i, v) in self.traffic.iter().enumerate() {
            by_lane[v.lane_index].push((v.longitudinal_pos, v.speed, Some(i)));
        }
        for (lane, occupants) in by_lane.iter_mut().enumerate() {
            if self.host_occupies(cfg, lane) {
                occupants.push((self.host.longitudinal_pos, self.host.speed, None));
            }
            occupants.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        }
        let mut speeds: Vec<f64> = self.traffic.iter().map(|v| v.desired_speed).collect();
        for occupants in &by_lane {
            let count = occupants.len();
            for (pos, &(x, _, id)) in occupants.iter().enumerate() {
                let Some(i) = id else { continue };
                if count < 2 {
                    continue;
                }
                let (lx, lspeed, _) = occupants[(pos + 1) % count];
                let mut gap = cfg.wrap_offset(x, lx);
                if gap <= 0.0 {
                    gap += cfg.road_length;
                }
                gap -= len;
                let desired = self.traffic[i].desired_speed;
                if gap < cfg.min_headway / 2.0 + desired / 3.6 {
                    speeds[i] = desired.min(lspeed);
                }
            }
        }
        speeds
    }
}

fn build_frame(state: &HighwayState, cfg: &HighwayConfig) -> Vec<f32> {
    let scan = lidar_scan(state, cfg);
    let mut frame = Vec::with_capacity(cfg.frame_len());
    frame.extend(scan.distances.iter().map(|&d| d as f32));
    frame.extend(scan.rel_speeds.iter().map(|&s| s as f32));
    frame.push((state.host.speed / cfg.v_max()) as f32);
    frame
}

/// Starts an episode. Traffic is placed by seeded rejection sampling so no
/// two vehicles of a lane start closer than `min_headway`; the host starts
/// in the median lane at the midpoint of its speed range.
pub fn env_reset(cfg: &HighwayConfig, seed: u64) -> Result<(HighwayState, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = seed::rng(&[seed]);
    let host = HostVehicle {
        lane_index: cfg.lane_count / 2,
        lateral_offset: 0.0,
        longitudinal_pos: 0.0,
        speed: 0.5 * (cfg.v_min() + cfg.v_max()),
        lane_change: None,
    };
    let spacing = cfg.vehicle_length + cfg.min_headway;
    let host_clearance = cfg.vehicle_length + cfg.min_headway.max(cfg.vehicle_length);
    let mut traffic: Vec<TrafficVehicle> = Vec::with_capacity(cfg.traffic_count());
    let [t_min, t_max] = cfg.traffic_speed_bounds;
    for _ in 0..cfg.traffic_count() {
        let mut placed = false;
        for _ in 0..1000 {
            let lane = rng.random_range(0..cfg.lane_count);
            let x = rng.random::<f64>() * cfg.road_length;
            if cfg.wrap_offset(host.longitudinal_pos, x).abs() < host_clearance {
                continue;
            }
            let clear = traffic.iter().all(|v| {
                v.lane_index != lane || cfg.wrap_offset(v.longitudinal_pos, x).abs() >= spacing
            });
            if clear {
                let desired = t_min + rng.random::<f64>() * (t_max - t_min);
                traffic.push(TrafficVehicle {
                    lane_index: lane,
                    longitudinal_pos: x,
                    speed: desired,
                    desired_speed: desired,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::config(
                "traffic_density",
                "too dense to place traffic with the required headway",
            ));
        }
    }
    let state = HighwayState::from_parts(cfg, host, traffic);
    let obs = state.observation();
    Ok((state, obs))
}

/// Pure single step: returns the successor state without touching `state`.
pub fn env_step(
    cfg: &HighwayConfig,
    state: &HighwayState,
    action: DrivingAction,
) -> Result<(HighwayState, StepOutcome)> {
    let mut next = state.clone();
    let outcome = next.step_mut(cfg, action)?;
    Ok((next, outcome))
}
