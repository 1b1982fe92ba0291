//! The five intersection scenarios and their road geometry.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::GridFrame;
use crate::geometry::{Point, Polyline};
use crate::sim::SimError;

/// Built-in geometry constants, shipped with the crate.
pub const BUILTIN_SCENARIOS: &str = include_str!("../../data/scenarios.toml");

/// Number of points used to approximate a quarter turn.
const ARC_SEGMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Right,
    Left,
    Left2,
    Forward,
    Challenge,
}

impl ScenarioId {
    /// All scenarios, in the row/column order used by reports.
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::Right,
        ScenarioId::Left,
        ScenarioId::Left2,
        ScenarioId::Forward,
        ScenarioId::Challenge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Right => "right",
            ScenarioId::Left => "left",
            ScenarioId::Left2 => "left2",
            ScenarioId::Forward => "forward",
            ScenarioId::Challenge => "challenge",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::UnknownScenario(s.to_string()))
    }
}

/// One straight traffic lane.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneGeometry {
    pub centerline: Polyline,
    pub width: f64,
    pub speed_limit: f64,
    /// Unit vector pointing in the direction of travel.
    pub travel_direction: Point,
    /// Lateral extent of the lane strip along the world x axis.
    pub x_range: (f64, f64),
}

impl LaneGeometry {
    pub fn length(&self) -> f64 {
        self.centerline.length()
    }

    /// Projects a world point onto the lane's longitudinal coordinate.
    pub fn longitudinal(&self, p: Point) -> f64 {
        (p - self.centerline.points()[0]).dot(self.travel_direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Maneuver {
    Straight,
    Right,
    Left,
}

/// Fixed geometry of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub scenario: ScenarioId,
    pub lanes: Vec<LaneGeometry>,
    pub ego_path: Polyline,
    pub goal_position: Point,
    pub maneuver: Maneuver,
    /// Lane the ego ends up driving in, for turning maneuvers.
    pub merge_lane: Option<usize>,
    /// Lanes the ego path passes fully across.
    pub crossed_lanes: Vec<usize>,
    pub grid_frame: GridFrame,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl RoadNetwork {
    pub fn lane_speed_limit(&self) -> f64 {
        self.lanes[0].speed_limit
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    lane_width: f64,
    speed_limit: f64,
    road_half_length: f64,
    stop_gap: f64,
    cell_size: f64,
    vehicle_length: f64,
    vehicle_width: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSpec {
    lanes_positive: usize,
    lanes_negative: usize,
    maneuver: Maneuver,
    #[serde(default)]
    target_lane: Option<usize>,
    #[serde(default)]
    turn_radius: Option<f64>,
    exit_length: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogFile {
    defaults: Defaults,
    #[serde(flatten)]
    scenarios: BTreeMap<String, ScenarioSpec>,
}

/// Geometry for all five scenarios, parsed from the structured text file.
#[derive(Debug, Clone)]
pub struct ScenarioCatalog {
    networks: Vec<RoadNetwork>,
}

impl ScenarioCatalog {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_SCENARIOS).expect("built-in scenario file is valid")
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| SimError::Geometry(e.to_string()))?;
        for key in file.scenarios.keys() {
            key.parse::<ScenarioId>()?;
        }
        let networks = ScenarioId::ALL
            .into_iter()
            .map(|id| {
                let spec = file
                    .scenarios
                    .get(id.name())
                    .ok_or_else(|| SimError::Geometry(format!("missing scenario [{id}]")))?;
                build_network(id, &file.defaults, spec)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { networks })
    }

    pub fn network(&self, id: ScenarioId) -> &RoadNetwork {
        &self.networks[id.index()]
    }
}

/// Returns the fixed geometry of a scenario from the built-in catalog.
pub fn build_scenario(id: ScenarioId) -> RoadNetwork {
    ScenarioCatalog::builtin().network(id).clone()
}

fn geometry_error(id: ScenarioId, msg: &str) -> SimError {
    SimError::Geometry(format!("[{id}] {msg}"))
}

fn build_network(id: ScenarioId, d: &Defaults, spec: &ScenarioSpec) -> Result<RoadNetwork, SimError> {
    let positive = [d.lane_width, d.road_half_length, d.cell_size, d.vehicle_length, d.vehicle_width];
    if positive.iter().any(|v| !(*v > 0.0)) || d.stop_gap < 0.0 || !(d.speed_limit > 0.0) {
        return Err(geometry_error(id, "dimensions must be positive"));
    }
    let n_lanes = spec.lanes_positive + spec.lanes_negative;
    if n_lanes == 0 {
        return Err(geometry_error(id, "scenario needs at least one lane"));
    }
    let w = d.lane_width;
    let h = d.road_half_length;
    let lanes: Vec<LaneGeometry> = (0..n_lanes)
        .map(|i| {
            let x = (i as f64 + 0.5) * w;
            let (start, end, dir) = if i < spec.lanes_positive {
                (Point::new(x, -h), Point::new(x, h), Point::new(0.0, 1.0))
            } else {
                (Point::new(x, h), Point::new(x, -h), Point::new(0.0, -1.0))
            };
            LaneGeometry {
                centerline: Polyline::new(vec![start, end]),
                width: w,
                speed_limit: d.speed_limit,
                travel_direction: dir,
                x_range: (i as f64 * w, (i + 1) as f64 * w),
            }
        })
        .collect();

    let start = Point::new(-d.stop_gap - d.vehicle_length / 2.0, 0.0);
    let road_width = n_lanes as f64 * w;
    let (points, merge_lane, crossed_lanes) = match spec.maneuver {
        Maneuver::Straight => {
            let end = Point::new(road_width + d.vehicle_length / 2.0 + spec.exit_length, 0.0);
            (vec![start, end], None, (0..n_lanes).collect::<Vec<_>>())
        }
        Maneuver::Right | Maneuver::Left => {
            let target = spec
                .target_lane
                .ok_or_else(|| geometry_error(id, "turning maneuver needs target_lane"))?;
            let radius = spec
                .turn_radius
                .ok_or_else(|| geometry_error(id, "turning maneuver needs turn_radius"))?;
            if target >= n_lanes || !(radius > 0.0) {
                return Err(geometry_error(id, "invalid target lane or radius"));
            }
            let lane = &lanes[target];
            let sign = lane.travel_direction.y;
            let wants = if spec.maneuver == Maneuver::Right { 1.0 } else { -1.0 };
            if sign != wants {
                return Err(geometry_error(id, "target lane travels the wrong way for this turn"));
            }
            let xc = lane.centerline.points()[0].x;
            let arc_start_x = xc - radius;
            if arc_start_x < start.x {
                return Err(geometry_error(id, "turn radius too large for the stop position"));
            }
            let mut pts = vec![start, Point::new(arc_start_x, 0.0)];
            let center = Point::new(xc - radius, sign * radius);
            for k in 1..=ARC_SEGMENTS {
                let theta = std::f64::consts::FRAC_PI_2 * k as f64 / ARC_SEGMENTS as f64;
                pts.push(Point::new(
                    center.x + radius * theta.sin(),
                    center.y - sign * radius * theta.cos(),
                ));
            }
            pts.push(Point::new(xc, sign * (radius + spec.exit_length)));
            (pts, Some(target), (0..target).collect())
        }
    };
    let ego_path = Polyline::new(points);
    let goal_position = *ego_path.points().last().unwrap();

    // Row boundary 9 sits on the direction divider; columns centered on y = 0.
    let divider = spec.lanes_positive as f64 * w;
    let grid_frame = GridFrame::new(
        Point::new(divider - 9.0 * d.cell_size, -13.0 * d.cell_size),
        d.cell_size,
    );

    Ok(RoadNetwork {
        scenario: id,
        lanes,
        ego_path,
        goal_position,
        maneuver: spec.maneuver,
        merge_lane,
        crossed_lanes,
        grid_frame,
        vehicle_length: d.vehicle_length,
        vehicle_width: d.vehicle_width,
    })
}
