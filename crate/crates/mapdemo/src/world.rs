//! Map world: viewport state, the location database and CSV loading.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use aaosa_core::RequestId;

pub const MIN_ZOOM: f64 = 0.125;
pub const MAX_ZOOM: f64 = 8.0;
pub const ZOOM_FACTOR: f64 = 2.0;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("duplicate location id {0}")]
    DuplicateId(String),
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("locations file line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldBounds {
    pub width: f64,
    pub height: f64,
}

impl Default for WorldBounds {
    fn default() -> Self {
        WorldBounds { width: 1000.0, height: 1000.0 }
    }
}

impl WorldBounds {
    fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        (x.clamp(-hw, hw), y.clamp(-hh, hh))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapState {
    pub center_x: f64,
    pub center_y: f64,
    pub zoom: f64,
    pub step: f64,
}

impl Default for MapState {
    fn default() -> Self {
        MapState { center_x: 0.0, center_y: 0.0, zoom: 1.0, step: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    East,
    West,
    North,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::West, Direction::North, Direction::South];

    pub fn name(self) -> &'static str {
        match self {
            Direction::East => "east",
            Direction::West => "west",
            Direction::North => "north",
            Direction::South => "south",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.name() == s)
    }

    fn unit(self) -> (f64, f64) {
        match self {
            Direction::East => (1.0, 0.0),
            Direction::West => (-1.0, 0.0),
            Direction::North => (0.0, 1.0),
            Direction::South => (0.0, -1.0),
        }
    }

    /// Dominant compass direction of a displacement; `None` for no movement.
    pub fn of_vector(dx: f64, dy: f64) -> Option<Direction> {
        if dx == 0.0 && dy == 0.0 {
            None
        } else if dx.abs() >= dy.abs() {
            Some(if dx > 0.0 { Direction::East } else { Direction::West })
        } else {
            Some(if dy > 0.0 { Direction::North } else { Direction::South })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoomOp {
    Bigger,
    Smaller,
}

/// Moves the center by `step / zoom`, clamped to the world bounds.
pub fn apply_shift(map: &MapState, direction: Direction, bounds: &WorldBounds) -> MapState {
    let (ux, uy) = direction.unit();
    let d = map.step / map.zoom;
    let (x, y) = bounds.clamp(map.center_x + ux * d, map.center_y + uy * d);
    MapState { center_x: x, center_y: y, ..*map }
}

pub fn apply_zoom(map: &MapState, op: ZoomOp) -> MapState {
    let zoom = match op {
        ZoomOp::Bigger => map.zoom * ZOOM_FACTOR,
        ZoomOp::Smaller => map.zoom / ZOOM_FACTOR,
    };
    MapState { zoom: zoom.clamp(MIN_ZOOM, MAX_ZOOM), ..*map }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationKind {
    Hotel,
    Restaurant,
    Poi,
}

impl fmt::Display for LocationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocationKind::Hotel => "hotel",
            LocationKind::Restaurant => "restaurant",
            LocationKind::Poi => "poi",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub id: String,
    pub kind: LocationKind,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub info: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Near {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

fn distance(r: &LocationRecord, x: f64, y: f64) -> f64 {
    ((r.x - x).powi(2) + (r.y - y).powi(2)).sqrt()
}

/// Filters by kind, then target id, then distance; sorted by distance then id
/// (by id alone without a `near` point).
pub fn query_locations(
    db: &[LocationRecord],
    kind: Option<LocationKind>,
    near: Option<Near>,
    target: Option<&str>,
) -> Result<Vec<LocationRecord>, WorldError> {
    if let Some(n) = near {
        if n.radius < 0.0 || n.radius.is_nan() {
            return Err(WorldError::NegativeRadius(n.radius));
        }
    }
    if let Some(t) = target {
        if !db.iter().any(|r| r.id == t) {
            return Err(WorldError::UnknownLocation(t.to_string()));
        }
    }
    let mut hits: Vec<(f64, LocationRecord)> = db
        .iter()
        .filter(|r| kind.is_none_or(|k| r.kind == k))
        .filter(|r| target.is_none_or(|t| r.id == t))
        .filter_map(|r| match near {
            Some(n) => {
                let d = distance(r, n.x, n.y);
                (d <= n.radius).then(|| (d, r.clone()))
            }
            None => Some((0.0, r.clone())),
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(hits.into_iter().map(|(_, r)| r).collect())
}

/// Reads `id,kind,name,x,y,info` records; the header row is required.
pub fn read_locations_csv<R: Read>(reader: R) -> Result<Vec<LocationRecord>, WorldError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let expected = ["id", "kind", "name", "x", "y", "info"];
    let headers = rdr.headers().map_err(|e| WorldError::Csv { line: 1, message: e.to_string() })?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(WorldError::Csv { line: 1, message: format!("header must be {}", expected.join(",")) });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in rdr.deserialize::<LocationRecord>() {
        let record =
            row.map_err(|e| WorldError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        if !seen.insert(record.id.clone()) {
            return Err(WorldError::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_locations(path: &Path) -> Result<Vec<LocationRecord>, WorldError> {
    read_locations_csv(std::fs::File::open(path)?)
}

/// Result of the latest information request shown to the user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoPanel {
    pub request_id: RequestId,
    pub message: String,
    pub records: Vec<LocationRecord>,
}

/// Everything process units may read or change.
#[derive(Clone, Debug, PartialEq)]
pub struct MapWorld {
    pub map: MapState,
    pub bounds: WorldBounds,
    pub locations: Vec<LocationRecord>,
    pub info: Option<InfoPanel>,
}

impl MapWorld {
    pub fn new(locations: Vec<LocationRecord>) -> Self {
        MapWorld { map: MapState::default(), bounds: WorldBounds::default(), locations, info: None }
    }

    pub fn location(&self, id: &str) -> Option<&LocationRecord> {
        self.locations.iter().find(|r| r.id == id)
    }
}
