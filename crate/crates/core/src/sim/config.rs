use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highway scenario parameters. Speeds are km/h, lengths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighwayConfig {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Length of the looped road.
    pub road_length: f64,
    /// Rays spread evenly over 360 degrees.
    pub ray_count: usize,
    pub max_range: f64,
    /// Number of stacked frames in one observation.
    pub frame_stack: usize,
    /// Decisions per simulated second.
    pub decision_hz: f64,
    /// Speed gained by one accelerate decision.
    pub vel_acc: f64,
    /// Speed lost by one decelerate decision.
    pub vel_dec: f64,
    pub host_speed_bounds: [f64; 2],
    /// Traffic vehicles per kilometre of road, summed over all lanes.
    pub traffic_density: f64,
    pub traffic_speed_bounds: [f64; 2],
    /// Episode horizon in decision steps.
    pub episode_horizon: usize,
    /// Duration of one lane change in decision steps.
    pub lane_change_steps: usize,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// Minimum bumper-to-bumper spacing between vehicles of one lane at spawn.
    pub min_headway: f64,
    pub seed: u64,
}

impl Default for HighwayConfig {
    fn default() -> Self {
        HighwayConfig {
            lane_count: 5,
            lane_width: 3.5,
            road_length: 1000.0,
            ray_count: 24,
            max_range: 50.0,
            frame_stack: 3,
            decision_hz: 5.0,
            vel_acc: 2.0,
            vel_dec: 4.0,
            host_speed_bounds: [40.0, 100.0],
            traffic_density: 30.0,
            traffic_speed_bounds: [50.0, 80.0],
            episode_horizon: 200,
            lane_change_steps: 5,
            vehicle_length: 4.5,
            vehicle_width: 1.8,
            min_headway: 20.0,
            seed: 0,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl HighwayConfig {
    /// Content digest identifying this configuration in artifact headers.
    pub fn digest(&self) -> Result<String> {
        crate::io::json_digest(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lane_count < 2 {
            return Err(Error::config("lane_count", "must be at least 2"));
        }
        if self.ray_count == 0 || 360 % self.ray_count != 0 {
            return Err(Error::config(
                "ray_count",
                format!("must divide 360 into whole degrees, got {}", self.ray_count),
            ));
        }
        if self.frame_stack == 0 {
            return Err(Error::config("frame_stack", "must be at least 1"));
        }
        if self.episode_horizon == 0 {
            return Err(Error::config("episode_horizon", "must be at least 1"));
        }
        if self.lane_change_steps == 0 {
            return Err(Error::config("lane_change_steps", "must be at least 1"));
        }
        positive("lane_width", self.lane_width)?;
        positive("max_range", self.max_range)?;
        positive("decision_hz", self.decision_hz)?;
        positive("vel_acc", self.vel_acc)?;
        positive("vel_dec", self.vel_dec)?;
        positive("vehicle_length", self.vehicle_length)?;
        positive("vehicle_width", self.vehicle_width)?;
        if !(self.min_headway.is_finite() && self.min_headway >= 0.0) {
            return Err(Error::config("min_headway", "must be non-negative"));
        }
        if self.vehicle_width >= self.lane_width {
            return Err(Error::config(
                "vehicle_width",
                "must be narrower than lane_width",
            ));
        }
        let [v_min, v_max] = self.host_speed_bounds;
        if !(v_min.is_finite() && v_max.is_finite() && v_min >= 0.0 && v_min < v_max) {
            return Err(Error::config(
                "host_speed_bounds",
                format!("needs 0 <= v_min < v_max, got [{v_min}, {v_max}]"),
            ));
        }
        let [t_min, t_max] = self.traffic_speed_bounds;
        if !(t_min.is_finite() && t_max.is_finite() && t_min >= 0.0 && t_min <= t_max) {
            return Err(Error::config(
                "traffic_speed_bounds",
                format!("needs 0 <= min <= max, got [{t_min}, {t_max}]"),
            ));
        }
        if !(self.traffic_density.is_finite() && self.traffic_density >= 0.0) {
            return Err(Error::config("traffic_density", "must be non-negative"));
        }
        if !(self.road_length.is_finite()
            && self.road_length > 2.0 * (self.max_range + self.vehicle_length))
        {
            return Err(Error::config(
                "road_length",
                "must exceed twice the sensing range plus one vehicle length",
            ));
        }
        Ok(())
    }

    /// Length of one frame: distances, relative speeds, host speed.
    pub fn frame_len(&self) -> usize {
        2 * self.ray_count + 1
    }

    /// Flattened observation length.
    pub fn observation_len(&self) -> usize {
        self.frame_stack * self.frame_len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.decision_hz
    }

    pub fn v_min(&self) -> f64 {
        self.host_speed_bounds[0]
    }

    pub fn v_max(&self) -> f64 {
        self.host_speed_bounds[1]
    }

    pub fn traffic_count(&self) -> usize {
        (self.traffic_density * self.road_length / 1000.0).round() as usize
    }

    /// Lateral coordinate of a lane centre; lane 0 is leftmost, left is +y.
    pub fn lane_center(&self, lane: usize) -> f64 {
        ((self.lane_count as f64 - 1.0) / 2.0 - lane as f64) * self.lane_width
    }

    /// Signed longitudinal offset `to - from` wrapped into `[-L/2, L/2)`.
    pub fn wrap_offset(&self, from: f64, to: f64) -> f64 {
        let l = self.road_length;
        let raw = to - from;
        // Positions live in [0, L), so one correction is enough.
        let d = if (0.0..l).contains(&raw) {
            raw
        } else if raw < 0.0 && raw >= -l {
            raw + l
        } else {
            raw.rem_euclid(l)
        };
        if d >= l / 2.0 {
            d - l
        } else {
            d
        }
    }

    pub fn wrap_position(&self, x: f64) -> f64 {
        let l = self.road_length;
        if (0.0..l).contains(&x) {
            x
        } else if (l..2.0 * l).contains(&x) {
            x - l
        } else {
            x.rem_euclid(l)
        }
    }
}
