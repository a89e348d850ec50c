use std::cell::RefCell;
use std::f64::consts::PI;

use super::{HighwayConfig, HighwayState};

/// One sweep of the range sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    /// Distance to the first hit divided by `max_range`, 1.0 on a miss.
    pub distances: Vec<f64>,
    /// Speed of the hit vehicle relative to the host divided by `v_max`, 0 on a miss.
    pub rel_speeds: Vec<f64>,
}

/// Distance along a unit ray from the origin to an axis-aligned box
/// `[x0, x1] x [y0, y1]`, or `None` when the ray misses. An origin inside
/// the box is a hit at distance zero.
pub fn cast_ray(dir: (f64, f64), x0: f64, x1: f64, y0: f64, y1: f64) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (d, lo, hi) in [(dir.0, x0, x1), (dir.1, y0, y1)] {
        if d.abs() < 1e-12 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
        } else {
            let a = lo / d;
            let b = hi / d;
            t_near = t_near.max(a.min(b));
            t_far = t_far.min(a.max(b));
        }
    }
    if t_near <= t_far && t_far >= 0.0 {
        Some(t_near.max(0.0))
    } else {
        None
    }
}

/// Unit ray directions, evenly spaced counterclockwise from the heading axis.
pub fn ray_directions(ray_count: usize) -> Vec<(f64, f64)> {
    (0..ray_count)
        .map(|j| {
            let angle = 2.0 * PI * j as f64 / ray_count as f64;
            (angle.cos(), angle.sin())
        })
        .collect()
}

thread_local! {
    static DIRECTIONS: RefCell<Vec<(f64, f64)>> = const { RefCell::new(Vec::new()) };
}

pub fn lidar_scan(state: &HighwayState, cfg: &HighwayConfig) -> LidarScan {
    let r_max = cfg.max_range;
    let half_len = cfg.vehicle_length / 2.0;
    let half_w = cfg.vehicle_width / 2.0;
    let host_y = state.host_y(cfg);

    // Only vehicles that can be within range matter.
    let nearby: Vec<(f64, f64, f64)> = state
        .traffic
        .iter()
        .filter_map(|v| {
            let dx = cfg.wrap_offset(state.host.longitudinal_pos, v.longitudinal_pos);
            let dy = cfg.lane_center(v.lane_index) - host_y;
            (dx.abs() <= r_max + cfg.vehicle_length && dy.abs() <= r_max + cfg.vehicle_width)
                .then_some((dx, dy, v.speed))
        })
        .collect();

    let mut distances = vec![1.0; cfg.ray_count];
    let mut rel_speeds = vec![0.0; cfg.ray_count];
    DIRECTIONS.with_borrow_mut(|dirs| {
        if dirs.len() != cfg.ray_count {
            *dirs = ray_directions(cfg.ray_count);
        }
        for (j, &dir) in dirs.iter().enumerate() {
            let mut best = r_max;
            let mut best_speed = None;
            for &(dx, dy, speed) in &nearby {
                if let Some(t) =
                    cast_ray(dir, dx - half_len, dx + half_len, dy - half_w, dy + half_w)
                {
                    if t < best {
                        best = t;
                        best_speed = Some(speed);
                    }
                }
            }
            if let Some(speed) = best_speed {
                distances[j] = best / r_max;
                rel_speeds[j] = (speed - state.host.speed) / cfg.v_max();
            }
        }
    });
    LidarScan {
        distances,
        rel_speeds,
    }
}
