//! Region files: a GeoJSON `FeatureCollection` of named polygons and circles.
//!
//! Each feature needs `properties.id`; `properties.name` defaults to the id.
//! Geometry is a `Polygon` or `MultiPolygon`, or the feature carries
//! `properties.circle = {"center": [lon, lat], "radius_m": r}` instead.

use std::f64::consts::TAU;

use dsa_policy_core::geo::{GeoError, GeoPoint, Region, RegionStore};
use serde_json::{json, Value};

/// Vertices used when approximating a circle.
pub const CIRCLE_SEGMENTS: usize = 64;
/// Mean earth radius (IUGG), metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, thiserror::Error)]
pub enum RegionFileError {
    #[error("region file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feature {index}: {message}")]
    Format { index: usize, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn format_err(index: usize, message: impl Into<String>) -> RegionFileError {
    RegionFileError::Format {
        index,
        message: message.into(),
    }
}

pub fn parse_regions(text: &str) -> Result<RegionStore, RegionFileError> {
    let doc: Value = serde_json::from_str(text)?;
    let features = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| format_err(0, "FeatureCollection without a features array"))?,
        _ => return Err(format_err(0, "expected a GeoJSON FeatureCollection")),
    };
    let mut store = RegionStore::new();
    for (index, feature) in features.iter().enumerate() {
        store.insert(parse_feature(index, feature)?)?;
    }
    Ok(store)
}

fn parse_feature(index: usize, feature: &Value) -> Result<Region, RegionFileError> {
    let props = feature
        .get("properties")
        .ok_or_else(|| format_err(index, "missing properties"))?;
    let id = props
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| format_err(index, "missing properties.id"))?;
    let name = props.get("name").and_then(Value::as_str).unwrap_or(id);

    if let Some(circle) = props.get("circle") {
        let center = circle
            .get("center")
            .and_then(Value::as_array)
            .ok_or_else(|| format_err(index, "circle.center must be [lon, lat]"))?;
        let center = position(index, center)?;
        let radius = circle
            .get("radius_m")
            .and_then(Value::as_f64)
            .filter(|r| *r > 0.0 && r.is_finite())
            .ok_or_else(|| format_err(index, "circle.radius_m must be a positive number"))?;
        let ring = circle_ring(center, radius, CIRCLE_SEGMENTS)?;
        return Ok(Region::new(id, name, vec![vec![ring]])?);
    }

    let geometry = feature
        .get("geometry")
        .filter(|g| !g.is_null())
        .ok_or_else(|| format_err(index, "missing geometry"))?;
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| format_err(index, "geometry without coordinates"))?;
    let polygons = match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![polygon(index, coords)?],
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| format_err(index, "MultiPolygon coordinates must be an array"))?
            .iter()
            .map(|p| polygon(index, p))
            .collect::<Result<_, _>>()?,
        other => {
            return Err(format_err(
                index,
                format!("unsupported geometry type {}", other.unwrap_or("<missing>")),
            ))
        }
    };
    Ok(Region::new(id, name, polygons)?)
}

fn polygon(index: usize, rings: &Value) -> Result<Vec<Vec<GeoPoint>>, RegionFileError> {
    rings
        .as_array()
        .ok_or_else(|| format_err(index, "polygon must be an array of rings"))?
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or_else(|| format_err(index, "ring must be an array of positions"))?
                .iter()
                .map(|pos| {
                    let arr = pos
                        .as_array()
                        .ok_or_else(|| format_err(index, "position must be [lon, lat]"))?;
                    position(index, arr)
                })
                .collect()
        })
        .collect()
}

fn position(index: usize, arr: &[Value]) -> Result<GeoPoint, RegionFileError> {
    match arr {
        [lon, lat, ..] => match (lon.as_f64(), lat.as_f64()) {
            (Some(lon), Some(lat)) => Ok(GeoPoint::new(lon, lat)?),
            _ => Err(format_err(index, "position coordinates must be numbers")),
        },
        _ => Err(format_err(index, "position must be [lon, lat]")),
    }
}

/// Closed ring approximating a circle on a local equirectangular projection.
pub fn circle_ring(center: GeoPoint, radius_m: f64, segments: usize) -> Result<Vec<GeoPoint>, GeoError> {
    let dlat = (radius_m / EARTH_RADIUS_M).to_degrees();
    let dlon = dlat / center.lat().to_radians().cos();
    let mut ring = Vec::with_capacity(segments + 1);
    for i in 0..segments {
        let a = TAU * i as f64 / segments as f64;
        ring.push(GeoPoint::new(center.lon() + dlon * a.cos(), center.lat() + dlat * a.sin())?);
    }
    ring.push(ring[0]);
    Ok(ring)
}

pub fn region_feature(region: &Region) -> Value {
    let polygons: Vec<Value> = region
        .polygons()
        .iter()
        .map(|p| {
            Value::Array(
                p.rings()
                    .iter()
                    .map(|r| Value::Array(r.vertices().iter().map(|v| json!([v.lon(), v.lat()])).collect()))
                    .collect(),
            )
        })
        .collect();
    let geometry = if polygons.len() == 1 {
        json!({"type": "Polygon", "coordinates": polygons[0]})
    } else {
        json!({"type": "MultiPolygon", "coordinates": polygons})
    };
    json!({
        "type": "Feature",
        "properties": {"id": region.id().as_str(), "name": region.name()},
        "geometry": geometry,
    })
}

pub fn regions_to_geojson<'a>(regions: impl IntoIterator<Item = &'a Region>) -> Value {
    json!({
        "type": "FeatureCollection",
        "features": regions.into_iter().map(region_feature).collect::<Vec<_>>(),
    })
}
