use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{BlockRecord, BlockTable, N_SHARES};

use super::share_columns;

fn parse_err(locus: String, message: impl Into<String>) -> Error {
    Error::Parse { locus, message: message.into() }
}

fn coord(v: &Value, locus: &str) -> Result<[f64; 2]> {
    let a = v.as_array().filter(|a| a.len() >= 2).ok_or_else(|| parse_err(locus.into(), "expected a coordinate pair"))?;
    match (a[0].as_f64(), a[1].as_f64()) {
        (Some(x), Some(y)) => Ok([x, y]),
        _ => Err(parse_err(locus.into(), "non-numeric coordinate")),
    }
}

/// Mean of the exterior ring's vertices, closing vertex excluded.
fn ring_centroid(ring: &Value, locus: &str) -> Result<[f64; 2]> {
    let pts: Vec<[f64; 2]> = ring
        .as_array()
        .ok_or_else(|| parse_err(locus.into(), "polygon ring is not an array"))?
        .iter()
        .map(|c| coord(c, locus))
        .collect::<Result<_>>()?;
    let n = if pts.len() > 1 && pts.first() == pts.last() { pts.len() - 1 } else { pts.len() };
    if n == 0 {
        return Err(parse_err(locus.into(), "empty polygon ring"));
    }
    let (sx, sy) = pts[..n].iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    Ok([sx / n as f64, sy / n as f64])
}

fn centroid(geometry: &Value, locus: &str) -> Result<[f64; 2]> {
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry.get("coordinates").ok_or_else(|| parse_err(locus.into(), "geometry without coordinates"))?;
    match kind {
        "Point" => coord(coords, locus),
        "Polygon" => ring_centroid(&coords[0], locus),
        "MultiPolygon" => ring_centroid(&coords[0][0], locus),
        other => Err(parse_err(locus.into(), format!("unsupported geometry type `{other}`"))),
    }
}

/// FeatureCollection of points or polygons carrying the CSV property names.
pub fn read_geojson(text: &str) -> Result<BlockTable> {
    let doc: Value = serde_json::from_str(text).map_err(|e| parse_err(format!("line {}", e.line()), e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("root".into(), "expected a FeatureCollection"))?;
    let mut records = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let locus = format!("feature {i}");
        let props = f.get("properties").and_then(Value::as_object).ok_or_else(|| parse_err(locus.clone(), "no properties"))?;
        let mut missing = Vec::new();
        for c in ["block_id", "site_area"].iter().chain(share_columns()) {
            if !props.contains_key(*c) {
                missing.push(c.to_string());
            }
        }
        if !missing.is_empty() {
            return Err(Error::Schema(missing));
        }
        let num = |key: &str| -> Result<f64> {
            props[key].as_f64().ok_or_else(|| parse_err(format!("{locus}, property {key}"), "expected a number"))
        };
        let opt = |key: &str| -> Result<Option<f64>> {
            match props.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(_) => num(key).map(Some),
            }
        };
        let id = match &props["block_id"] {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(parse_err(format!("{locus}, property block_id"), "expected a string or number")),
        };
        let geometry = f.get("geometry").ok_or_else(|| parse_err(locus.clone(), "no geometry"))?;
        let c = centroid(geometry, &locus)?;
        let mut shares = [0.0; N_SHARES];
        for (slot, key) in shares.iter_mut().zip(share_columns()) {
            *slot = num(key)?;
        }
        records.push(BlockRecord {
            id,
            centroid: (c[0], c[1]),
            shares,
            site_area: num("site_area")?,
            fsi: opt("fsi")?,
            gsi: opt("gsi")?,
        });
    }
    Ok(BlockTable::new(records))
}
