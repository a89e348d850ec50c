use serde::{Deserialize, Serialize};

use super::{DrivingAction, DrivingPolicy, HighwayConfig, HighwayState};

/// Gap thresholds of the rule-based demonstrator, meters bumper to bumper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertRules {
    /// Speed up when the lane ahead is at least this clear.
    pub gap_open: f64,
    /// Below this the host must leave the lane or brake.
    pub gap_close: f64,
    /// Minimum forward gap in a lane the host changes into.
    pub gap_safe: f64,
    /// Minimum gap to a vehicle behind in the lane the host changes into.
    pub rear_margin: f64,
}

impl Default for ExpertRules {
    fn default() -> Self {
        ExpertRules {
            gap_open: 30.0,
            gap_close: 22.0,
            gap_safe: 30.0,
            rear_margin: 5.0,
        }
    }
}

/// Deterministic rule policy used to produce demonstrations.
///
/// Accelerates on an open lane, otherwise below `gap_close` moves into the
/// adjacent lane with the larger forward gap (left on ties) when that gap
/// exceeds `gap_safe`, otherwise brakes. A maneuver is never reversed: while
/// one runs the expert keeps issuing its lateral action unless the gap ahead
/// calls for a speed change.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScriptedExpert {
    pub rules: ExpertRules,
}

impl ScriptedExpert {
    pub fn new(rules: ExpertRules) -> Self {
        ScriptedExpert { rules }
    }

    /// Decision given the three gaps the rule table looks at. `None` marks
    /// an adjacent lane that does not exist or is blocked alongside.
    /// `maneuver` is the lateral action of a lane change in progress.
    pub fn decide(
        &self,
        forward_gap: f64,
        left_gap: Option<f64>,
        right_gap: Option<f64>,
        at_max_speed: bool,
        maneuver: Option<DrivingAction>,
    ) -> DrivingAction {
        let r = &self.rules;
        let cruise = maneuver.unwrap_or(DrivingAction::Maintain);
        if forward_gap > r.gap_open {
            return if at_max_speed { cruise } else { DrivingAction::Accelerate };
        }
        if forward_gap >= r.gap_close {
            return cruise;
        }
        if maneuver.is_none() {
            let left = left_gap.filter(|&g| g > r.gap_safe);
            let right = right_gap.filter(|&g| g > r.gap_safe);
            match (left, right) {
                (Some(l), Some(rg)) if rg > l => return DrivingAction::LaneRight,
                (Some(_), _) => return DrivingAction::LaneLeft,
                (None, Some(_)) => return DrivingAction::LaneRight,
                (None, None) => {}
            }
        }
        DrivingAction::Decelerate
    }

    /// Decision from the newest frame of an observation. Gaps are read off
    /// the range sensor, so the rule sees exactly what a learner sees; the
    /// state only says which lanes exist and whether a maneuver is running.
    pub fn act_on_observation(
        &self,
        cfg: &HighwayConfig,
        observation: &[f64],
        state: &HighwayState,
    ) -> DrivingAction {
        let lane = state.host_target_lane() as isize;
        // Lane bands are centred on the lane the host is heading for.
        let offset = cfg.lane_center(lane as usize) - state.host_y(cfg);
        let gaps = perceive_gaps(cfg, &observation[..cfg.ray_count], self.rules.rear_margin, offset);
        let maneuver = state.host.lane_change.map(|c| {
            if c.to_lane < c.from_lane {
                DrivingAction::LaneLeft
            } else {
                DrivingAction::LaneRight
            }
        });
        let changing = maneuver.is_some();
        let exists = |delta: isize| (0..cfg.lane_count as isize).contains(&(lane + delta));
        let left = gaps.left.filter(|_| !changing && exists(-1));
        let right = gaps.right.filter(|_| !changing && exists(1));
        let at_max = state.host.speed >= cfg.v_max();
        self.decide(gaps.forward, left, right, at_max, maneuver)
    }

    pub fn act_on_state(&self, cfg: &HighwayConfig, state: &HighwayState) -> DrivingAction {
        self.act_on_observation(cfg, &state.observation(), state)
    }
}

impl DrivingPolicy for ScriptedExpert {
    fn act(
        &mut self,
        cfg: &HighwayConfig,
        observation: &[f64],
        state: &HighwayState,
    ) -> DrivingAction {
        self.act_on_observation(cfg, observation, state)
    }
}

/// Bumper-to-bumper gaps as seen by the range sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedGaps {
    /// Forward gap in the host's own lane band, `max_range` when clear.
    pub forward: f64,
    /// Forward gap in the left lane band, `None` when a vehicle sits alongside
    /// or closer behind than the rear margin.
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// Reads lane gaps from normalized ray distances. Each hit is placed in the
/// lane band its lateral coordinate falls into, with bands centred
/// `lateral_offset` meters to the left of the host; rays that miss say nothing.
pub fn perceive_gaps(cfg: &HighwayConfig, distances: &[f64], rear_margin: f64, lateral_offset: f64) -> SensedGaps {
    let half_len = cfg.vehicle_length / 2.0;
    let w = cfg.lane_width;
    let mut forward = cfg.max_range;
    let mut side = [(cfg.max_range, true); 2];
    for (j, &d) in distances.iter().enumerate() {
        if d >= 1.0 {
            continue;
        }
        let angle = 2.0 * std::f64::consts::PI * j as f64 / distances.len() as f64;
        let r = d * cfg.max_range;
        let (x, y) = (r * angle.cos(), r * angle.sin() - lateral_offset);
        if y.abs() < w / 2.0 {
            if x > 0.0 {
                forward = forward.min(x - half_len);
            }
        } else if y.abs() < 1.5 * w {
            let slot = &mut side[usize::from(y < 0.0)];
            if x >= 0.0 {
                slot.0 = slot.0.min(x - half_len);
            } else if -x - half_len < rear_margin {
                slot.1 = false;
            }
        }
    }
    let usable = |(gap, clear): (f64, bool)| clear.then_some(gap);
    SensedGaps { forward, left: usable(side[0]), right: usable(side[1]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn expert() -> ScriptedExpert {
        ScriptedExpert::default()
    }

    #[test]
    fn open_road_accelerates_until_top_speed() {
        assert_eq!(
            expert().decide(50.0, Some(50.0), Some(50.0), false, None),
            DrivingAction::Accelerate
        );
        assert_eq!(
            expert().decide(50.0, Some(50.0), Some(50.0), true, None),
            DrivingAction::Maintain
        );
    }

    #[test]
    fn ties_prefer_left() {
        assert_eq!(
            expert().decide(10.0, Some(50.0), Some(50.0), false, None),
            DrivingAction::LaneLeft
        );
        assert_eq!(
            expert().decide(10.0, Some(40.0), Some(50.0), false, None),
            DrivingAction::LaneRight
        );
        assert_eq!(
            expert().decide(10.0, Some(50.0), Some(40.0), false, None),
            DrivingAction::LaneLeft
        );
    }

    #[test]
    fn running_maneuver_is_kept_up() {
        let right = Some(DrivingAction::LaneRight);
        assert_eq!(expert().decide(50.0, None, None, true, right), DrivingAction::LaneRight);
        assert_eq!(expert().decide(25.0, None, None, false, right), DrivingAction::LaneRight);
        assert_eq!(expert().decide(50.0, None, None, false, right), DrivingAction::Accelerate);
    }

    #[test]
    fn sensed_gaps_place_hits_in_lane_bands() {
        let cfg = HighwayConfig::default();
        let n = cfg.ray_count;
        let mut d = vec![1.0; n];
        // forward ray hits a rear bumper 20 m ahead of the host centre
        d[0] = 20.0 / cfg.max_range;
        // 15° ray hits a left-lane car; 195° ray hits a right-lane car behind
        d[1] = 12.0 / cfg.max_range;
        d[n / 2 + 1] = 12.0 / cfg.max_range;
        let g = perceive_gaps(&cfg, &d, 5.0, 0.0);
        let hl = cfg.vehicle_length / 2.0;
        assert!((g.forward - (20.0 - hl)).abs() < 1e-12);
        let x = 12.0 * 15f64.to_radians().cos();
        assert!((g.left.unwrap() - (x - hl)).abs() < 1e-12);
        // right-lane car rear gap is x - hl ≈ 9.3 m, beyond the margin
        assert_eq!(g.right, Some(cfg.max_range));
        let tight = perceive_gaps(&cfg, &d, 10.0, 0.0);
        assert_eq!(tight.right, None);
        let empty = perceive_gaps(&cfg, &vec![1.0; n], 5.0, 0.0);
        // shifting the bands one lane left puts the forward hit in the right band
        let shifted = perceive_gaps(&cfg, &d, 5.0, cfg.lane_width);
        assert_eq!(shifted.right, Some(20.0 - hl));
        assert_eq!(empty, SensedGaps { forward: cfg.max_range, left: Some(cfg.max_range), right: Some(cfg.max_range) });
    }

    #[test]
    fn boxed_in_brakes() {
        assert_eq!(
            expert().decide(10.0, Some(5.0), Some(5.0), false, None),
            DrivingAction::Decelerate
        );
        assert_eq!(
            expert().decide(10.0, None, None, false, None),
            DrivingAction::Decelerate
        );
        assert_eq!(
            expert().decide(10.0, Some(50.0), Some(50.0), false, Some(DrivingAction::LaneLeft)),
            DrivingAction::Decelerate
        );
    }

    // Brute-force restatement of the rule table over the whole input grid.
    fn table(
        r: &ExpertRules,
        f: f64,
        l: Option<f64>,
        rt: Option<f64>,
        top: bool,
        ch: Option<DrivingAction>,
    ) -> DrivingAction {
        if f > r.gap_open && !top {
            DrivingAction::Accelerate
        } else if f >= r.gap_close {
            ch.unwrap_or(DrivingAction::Maintain)
        } else if ch.is_some() {
            DrivingAction::Decelerate
        } else {
            let lok = l.is_some_and(|g| g > r.gap_safe);
            let rok = rt.is_some_and(|g| g > r.gap_safe);
            if lok && (!rok || l.unwrap() >= rt.unwrap()) {
                DrivingAction::LaneLeft
            } else if rok {
                DrivingAction::LaneRight
            } else {
                DrivingAction::Decelerate
            }
        }
    }

    fn maneuver() -> impl Strategy<Value = Option<DrivingAction>> {
        prop_oneof![Just(None), Just(Some(DrivingAction::LaneLeft)), Just(Some(DrivingAction::LaneRight))]
    }

    fn gap() -> impl Strategy<Value = Option<f64>> {
        prop_oneof![Just(None), (-5.0f64..60.0).prop_map(Some)]
    }

    proptest! {
        #[test]
        fn rule_table_is_exhaustive(f in -5.0f64..60.0, l in gap(), r in gap(), top: bool, ch in maneuver()) {
            let e = expert();
            prop_assert_eq!(e.decide(f, l, r, top, ch), table(&e.rules, f, l, r, top, ch));
            // Blocked ahead with no usable side lane always brakes.
            if f < e.rules.gap_close
                && l.is_none_or(|g| g <= e.rules.gap_safe)
                && r.is_none_or(|g| g <= e.rules.gap_safe)
            {
                prop_assert_eq!(e.decide(f, l, r, top, ch), DrivingAction::Decelerate);
            }
        }
    }
}
