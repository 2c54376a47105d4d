//! GeoJSON overlay of trajectories, landmarks and match displacements.
//!
//! Coordinates are the planar metric frame of the inputs; no geodetic
//! conversion takes place. Every feature carries a `layer` property:
//! `initial`, `aligned`, `landmarks` or `displacement`.

use std::path::Path;

use serde_json::{json, Value};

use crate::model::{Dataset, Match, Trajectory};
use crate::pipeline::{io, PipelineError};
use crate::{Point2, Shape};

fn xy(p: Point2) -> Value {
    json!([p.x, p.y])
}

fn trajectory_layer<'a>(layer: &str, trajs: &'a [Trajectory]) -> impl Iterator<Item = Value> + 'a {
    let layer = layer.to_owned();
    trajs.iter().map(move |t| {
        let coords: Vec<Value> = t.poses().iter().map(|p| xy(p.transform.position_xy())).collect();
        json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"layer": layer, "session": t.session_id()},
        })
    })
}

fn shape_geometry(s: &Shape) -> Value {
    match s {
        Shape::Pole(p) => json!({"type": "Point", "coordinates": xy(*p)}),
        Shape::Segment(c) => {
            let coords: Vec<Value> = c.vertices().iter().map(|&p| xy(p)).collect();
            json!({"type": "LineString", "coordinates": coords})
        }
    }
}

/// Overlay document. `initial` supplies the features, landmarks and initial
/// trajectories; displacement segments run from each matched feature's
/// reference point under the initial poses to the nearest landmark point.
pub fn overlay_geojson(initial: &Dataset, aligned: &[Trajectory], matches: &[Match]) -> Value {
    let mut features: Vec<Value> = Vec::new();
    features.extend(trajectory_layer("initial", &initial.trajectories));
    features.extend(trajectory_layer("aligned", aligned));
    for l in &initial.landmarks {
        features.push(json!({
            "type": "Feature",
            "geometry": shape_geometry(&l.shape),
            "properties": {"layer": "landmarks", "id": l.id.0, "class": l.class()},
        }));
    }
    for m in matches {
        let (Some(f), Some(l)) = (initial.feature(m.feature), initial.landmark(m.landmark)) else {
            continue;
        };
        let from = initial.feature_world(f).reference_point();
        let to = match &l.shape {
            Shape::Pole(p) => *p,
            Shape::Segment(c) => c.closest_point(from).0,
        };
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [xy(from), xy(to)]},
            "properties": {
                "layer": "displacement",
                "feature": m.feature.0,
                "landmark": m.landmark.0,
                "class": f.class(),
                "distance": m.distance,
            },
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

pub fn export_overlay(
    initial: &Dataset,
    aligned: &[Trajectory],
    matches: &[Match],
    path: &Path,
) -> Result<(), PipelineError> {
    io::write_json(path, &overlay_geojson(initial, aligned, matches))
}
