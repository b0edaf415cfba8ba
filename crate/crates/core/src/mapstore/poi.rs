//! Outdoor anchors annotated away from the site, from a `name,lat,lon,alt,yaw`
//! table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Anchor, MapGraph};
use crate::geom::{FrameId, GeoPose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoiError {
    #[error("missing required column {0:?} in header")]
    MissingColumn(&'static str),
    #[error("row {row}, field {field}: {reason}")]
    Row {
        row: usize,
        field: &'static str,
        reason: String,
    },
    #[error("unreadable table: {0}")]
    Csv(String),
}

/// Defaults applied to annotated points of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiConfig {
    pub quality: f64,
    pub ci_horizontal: f64,
    pub ci_yaw: f64,
    pub ci_vertical: f64,
    pub created_at: u64,
}

impl Default for PoiConfig {
    fn default() -> Self {
        PoiConfig {
            quality: 0.5,
            ci_horizontal: 2.0,
            ci_yaw: 15.0,
            ci_vertical: 3.0,
            created_at: 0,
        }
    }
}

fn parse_field(raw: &str, row: usize, field: &'static str) -> Result<f64, PoiError> {
    let v: f64 = raw.trim().parse().map_err(|_| PoiError::Row {
        row,
        field,
        reason: format!("{raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(PoiError::Row {
            row,
            field,
            reason: "not finite".into(),
        });
    }
    Ok(v)
}

fn range_check(v: f64, ok: bool, row: usize, field: &'static str, range: &str) -> Result<f64, PoiError> {
    if ok {
        Ok(v)
    } else {
        Err(PoiError::Row {
            row,
            field,
            reason: format!("{v} outside {range}"),
        })
    }
}

/// One outdoor anchor per data row (rows numbered from 1), with ids that
/// do not collide with `map`. `alt` and `yaw` columns are optional.
pub fn import_poi(table: &str, cfg: &PoiConfig, map: &MapGraph) -> Result<Vec<Anchor>, PoiError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(table.as_bytes());
    let headers = reader.headers().map_err(|e| PoiError::Csv(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let name_col = col("name").ok_or(PoiError::MissingColumn("name"))?;
    let lat_col = col("lat").ok_or(PoiError::MissingColumn("lat"))?;
    let lon_col = col("lon").ok_or(PoiError::MissingColumn("lon"))?;
    let (alt_col, yaw_col) = (col("alt"), col("yaw"));

    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| PoiError::Csv(e.to_string()))?;
    let ids = map.next_anchor_ids(rows.len());

    let mut out = Vec::with_capacity(rows.len());
    for (i, (rec, id)) in rows.iter().zip(ids).enumerate() {
        let row = i + 1;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let name = get(name_col);
        if name.is_empty() {
            return Err(PoiError::Row {
                row,
                field: "name",
                reason: "empty".into(),
            });
        }
        let lat = parse_field(get(lat_col), row, "lat")?;
        let lat = range_check(lat, (-90.0..=90.0).contains(&lat), row, "lat", "[-90, 90]")?;
        let lon = parse_field(get(lon_col), row, "lon")?;
        let lon = range_check(lon, (-180.0..180.0).contains(&lon), row, "lon", "[-180, 180)")?;
        let optional = |c: Option<usize>, field| match c.map(get) {
            None | Some("") => Ok(0.0),
            Some(raw) => parse_field(raw, row, field),
        };
        let alt = optional(alt_col, "alt")?;
        let yaw = optional(yaw_col, "yaw")?;
        let yaw = range_check(yaw, (0.0..360.0).contains(&yaw), row, "yaw", "[0, 360)")?;

        let geo = GeoPose::new(lat, lon, alt, yaw)
            .and_then(|g| g.with_confidence(cfg.ci_horizontal, cfg.ci_yaw, cfg.ci_vertical))
            .map_err(|e| PoiError::Row {
                row,
                field: "geo",
                reason: e.to_string(),
            })?;
        let frame = FrameId::new(format!("poi#{id}"));
        out.push(Anchor::outdoor(id, frame, geo, cfg.quality, name).with_created_at(cfg.created_at));
    }
    Ok(out)
}
