//! Planar point/region geometry on raw longitude/latitude.
//!
//! Containment uses the even-odd rule across all rings of a polygon, so inner
//! rings act as holes. Points on any edge or vertex count as inside.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::model::RegionId;

/// Tolerance (degrees) for treating a point as lying on an edge.
pub const BOUNDARY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("malformed WKT point '{0}'")]
    MalformedWkt(String),
    #[error("unsupported WKT geometry '{0}'; only POINT is accepted")]
    UnsupportedGeometry(String),
    #[error("coordinate out of range: longitude {lon}, latitude {lat}")]
    OutOfRange { lon: f64, lat: f64 },
    #[error("region '{region}': {reason}")]
    InvalidRegion { region: RegionId, reason: String },
    #[error("duplicate region id '{0}'")]
    DuplicateId(RegionId),
    #[error("region name '{name}' already used by '{existing}'")]
    DuplicateName { name: String, existing: RegionId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !(lon.is_finite() && lat.is_finite())
            || !(-180.0..=180.0).contains(&lon)
            || !(-90.0..=90.0).contains(&lat)
        {
            return Err(GeoError::OutOfRange { lon, lat });
        }
        Ok(Self { lon, lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "POINT({} {})", self.lon, self.lat)
    }
}

/// Parses `POINT(lon lat)`; keyword is case-insensitive and whitespace is tolerated.
pub fn parse_wkt_point(text: &str) -> Result<GeoPoint, GeoError> {
    let malformed = || GeoError::MalformedWkt(text.to_string());
    let t = text.trim();
    let open = t.find('(').ok_or_else(malformed)?;
    let tag = t[..open].trim();
    if !tag.eq_ignore_ascii_case("point") {
        if tag.is_empty() || !tag.bytes().all(|b| b.is_ascii_alphabetic() || b == b' ') {
            return Err(malformed());
        }
        return Err(GeoError::UnsupportedGeometry(tag.to_string()));
    }
    let body = t[open + 1..].strip_suffix(')').ok_or_else(malformed)?;
    let mut parts = body.split_whitespace();
    let lon = parts.next().ok_or_else(malformed)?;
    let lat = parts.next().ok_or_else(malformed)?;
    if parts.next().is_some() {
        return Err(malformed());
    }
    let lon: f64 = lon.parse().map_err(|_| malformed())?;
    let lat: f64 = lat.parse().map_err(|_| malformed())?;
    GeoPoint::new(lon, lat)
}

/// A closed ring: first vertex repeated as last.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring(Vec<GeoPoint>);

impl Ring {
    pub fn vertices(&self) -> &[GeoPoint] {
        &self.0
    }

    /// Consecutive vertex pairs; the closing vertex makes this cover every edge.
    pub fn edges(&self) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    fn check(&self) -> Result<(), String> {
        let v = &self.0;
        if v.len() < 4 {
            return Err(alloc::format!("ring has {} vertices; at least 4 required", v.len()));
        }
        if v.first() != v.last() {
            return Err("ring is not closed".to_string());
        }
        let edges: Vec<(GeoPoint, GeoPoint)> = self.edges().collect();
        for (a, b) in &edges {
            if a == b {
                return Err("ring has a zero-length edge".to_string());
            }
            if (a.lon - b.lon).abs() > 180.0 {
                return Err("ring crosses the antimeridian".to_string());
            }
        }
        let n = edges.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (p1, p2) = edges[i];
                let (q1, q2) = edges[j];
                if adjacent {
                    // Shared vertex is fine; collinear overlap is not.
                    if orient(p1, p2, q1) == 0.0 && orient(p1, p2, q2) == 0.0 {
                        let shared = if j == i + 1 { p2 } else { p1 };
                        let other_q = if q1 == shared { q2 } else { q1 };
                        let other_p = if p1 == shared { p2 } else { p1 };
                        let d1 = (other_p.lon - shared.lon, other_p.lat - shared.lat);
                        let d2 = (other_q.lon - shared.lon, other_q.lat - shared.lat);
                        if d1.0 * d2.0 + d1.1 * d2.1 > 0.0 {
                            return Err("ring folds back on itself".to_string());
                        }
                    }
                } else if segments_intersect(p1, p2, q1, q2) {
                    return Err(alloc::format!(
                        "ring self-intersects between edges {} and {}",
                        i, j
                    ));
                }
            }
        }
        Ok(())
    }
}

fn orient(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn within_box(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> bool {
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(p1: GeoPoint, p2: GeoPoint, q1: GeoPoint, q2: GeoPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(q1, q2, p1))
        || (d2 == 0.0 && within_box(q1, q2, p2))
        || (d3 == 0.0 && within_box(p1, p2, q1))
        || (d4 == 0.0 && within_box(p1, p2, q2))
}

fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let dx = b.lon - a.lon;
    let dy = b.lat - a.lat;
    let len2 = dx * dx + dy * dy;
    let t = ((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2;
    if !(0.0..=1.0).contains(&t) {
        let da = (p.lon - a.lon) * (p.lon - a.lon) + (p.lat - a.lat) * (p.lat - a.lat);
        let db = (p.lon - b.lon) * (p.lon - b.lon) + (p.lat - b.lat) * (p.lat - b.lat);
        return da.min(db) <= BOUNDARY_EPSILON * BOUNDARY_EPSILON;
    }
    let cx = a.lon + t * dx - p.lon;
    let cy = a.lat + t * dy - p.lat;
    cx * cx + cy * cy <= BOUNDARY_EPSILON * BOUNDARY_EPSILON
}

/// An outer ring optionally followed by hole rings.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    rings: Vec<Ring>,
}

impl Polygon {
    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for (a, b) in ring.edges() {
                if on_segment(p, a, b) {
                    return true;
                }
                if (a.lat > p.lat) != (b.lat > p.lat) {
                    let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                    if p.lon < x {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BoundingBox {
    min_lon: f64,
    min_lat: f64,
    max_lon: f64,
    max_lat: f64,
}

impl BoundingBox {
    fn contains(&self, p: GeoPoint) -> bool {
        let e = BOUNDARY_EPSILON;
        p.lon >= self.min_lon - e
            && p.lon <= self.max_lon + e
            && p.lat >= self.min_lat - e
            && p.lat <= self.max_lat + e
    }
}

/// A named geographic area made of one or more polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    id: RegionId,
    name: String,
    polygons: Vec<Polygon>,
    bbox: BoundingBox,
}

impl Region {
    /// Builds a validated region. Each polygon is a list of rings; each ring a closed coordinate list.
    pub fn new(
        id: impl Into<RegionId>,
        name: impl Into<String>,
        polygons: Vec<Vec<Vec<GeoPoint>>>,
    ) -> Result<Self, GeoError> {
        let id = id.into();
        let invalid = |reason: String| GeoError::InvalidRegion {
            region: id.clone(),
            reason,
        };
        if polygons.is_empty() {
            return Err(invalid("region has no polygons".to_string()));
        }
        let mut built = Vec::with_capacity(polygons.len());
        let mut bbox = BoundingBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for rings in polygons {
            if rings.is_empty() {
                return Err(invalid("polygon has no rings".to_string()));
            }
            let mut out = Vec::with_capacity(rings.len());
            for verts in rings {
                let ring = Ring(verts);
                ring.check().map_err(invalid)?;
                for v in ring.vertices() {
                    bbox.min_lon = bbox.min_lon.min(v.lon);
                    bbox.min_lat = bbox.min_lat.min(v.lat);
                    bbox.max_lon = bbox.max_lon.max(v.lon);
                    bbox.max_lat = bbox.max_lat.max(v.lat);
                }
                out.push(ring);
            }
            built.push(Polygon { rings: out });
        }
        Ok(Self {
            id,
            name: name.into(),
            polygons: built,
            bbox,
        })
    }

    /// Axis-aligned rectangle, mostly for fixtures.
    pub fn rectangle(
        id: impl Into<RegionId>,
        name: impl Into<String>,
        (min_lon, min_lat): (f64, f64),
        (max_lon, max_lat): (f64, f64),
    ) -> Result<Self, GeoError> {
        let pts = [
            (min_lon, min_lat),
            (max_lon, min_lat),
            (max_lon, max_lat),
            (min_lon, max_lat),
            (min_lon, min_lat),
        ]
        .iter()
        .map(|&(x, y)| GeoPoint::new(x, y))
        .collect::<Result<Vec<_>, _>>()?;
        Self::new(id, name, alloc::vec![alloc::vec![pts]])
    }

    pub fn id(&self) -> &RegionId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }
}

/// True iff `p` lies inside or on the boundary of any polygon of `r`.
pub fn point_in_region(p: GeoPoint, r: &Region) -> bool {
    r.bbox.contains(p) && r.polygons.iter().any(|poly| poly.contains(p))
}

/// Immutable-after-load collection of named regions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionStore {
    regions: BTreeMap<RegionId, Region>,
    name_index: BTreeMap<String, RegionId>,
}

impl RegionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_regions(regions: impl IntoIterator<Item = Region>) -> Result<Self, GeoError> {
        let mut store = Self::new();
        for r in regions {
            store.insert(r)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, region: Region) -> Result<(), GeoError> {
        if self.regions.contains_key(&region.id) {
            return Err(GeoError::DuplicateId(region.id));
        }
        if let Some(existing) = self.name_index.get(&region.name) {
            return Err(GeoError::DuplicateName {
                name: region.name,
                existing: existing.clone(),
            });
        }
        self.name_index.insert(region.name.clone(), region.id.clone());
        self.regions.insert(region.id.clone(), region);
        Ok(())
    }

    pub fn get(&self, id: &RegionId) -> Option<&Region> {
        self.regions.get(id)
    }

    pub fn contains(&self, id: &RegionId) -> bool {
        self.regions.contains_key(id)
    }

    /// Looks a token up as a region id first, then as a display name.
    pub fn resolve(&self, token: &str) -> Option<&RegionId> {
        self.regions
            .get_key_value(token)
            .map(|(k, _)| k)
            .or_else(|| self.name_index.get(token))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Ids of every region in `store` that contains `p`.
pub fn infer_within(p: GeoPoint, store: &RegionStore) -> BTreeSet<RegionId> {
    store
        .iter()
        .filter(|r| point_in_region(p, r))
        .map(|r| r.id.clone())
        .collect()
}
