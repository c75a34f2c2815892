//! Road-network graphs read from and written to GeoJSON.
//!
//! Nodes are `Point` features with an `id` property; edges are `LineString`
//! features with `id`, `u` and `v` properties. Every other property is kept
//! verbatim and written back out unchanged.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geo::{BBox, GeoPoint};

/// Maximum distance, in degrees, between an edge's end vertex and its node.
pub const ENDPOINT_TOLERANCE_DEG: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("{}", match .line { Some(l) => format!("line {l}: {reason}"), None => reason.clone() })]
    Parse { line: Option<usize>, reason: String },
    #[error("unknown edge id {0}")]
    UnknownEdge(ElementId),
    #[error("attribute value must be finite, got {0}")]
    NonFiniteValue(f64),
    #[error("i/o error: {0}")]
    Io(String),
}

fn parse_err(reason: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line: None,
        reason: reason.into(),
    }
}

/// Node or edge identifier: OSM-style integer or free text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementId {
    Int(i64),
    Text(String),
}

impl ElementId {
    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::String(s) => Some(ElementId::Text(s.clone())),
            Value::Number(n) => n.as_i64().map(ElementId::Int),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            ElementId::Int(i) => json!(i),
            ElementId::Text(s) => json!(s),
        }
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementId::Int(i) => write!(f, "{i}"),
            ElementId::Text(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<i64> for ElementId {
    fn from(i: i64) -> Self {
        ElementId::Int(i)
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        ElementId::Text(s.to_string())
    }
}

impl From<String> for ElementId {
    fn from(s: String) -> Self {
        ElementId::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: ElementId,
    pub position: GeoPoint,
    pub attrs: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: ElementId,
    pub u: ElementId,
    pub v: ElementId,
    pub geometry: Vec<GeoPoint>,
    pub attrs: Map<String, Value>,
}

impl Edge {
    /// Point halfway along the polyline by arc length. Segment lengths use a
    /// local planar metric with longitude scaled by `cos` of the first vertex's
    /// latitude.
    pub fn midpoint(&self) -> GeoPoint {
        let scale = self.geometry[0].lat.to_radians().cos();
        let seg_len = |a: &GeoPoint, b: &GeoPoint| ((b.lon - a.lon) * scale).hypot(b.lat - a.lat);
        let total: f64 = self
            .geometry
            .windows(2)
            .map(|w| seg_len(&w[0], &w[1]))
            .sum();
        if total == 0.0 {
            return self.geometry[0];
        }
        let mut remaining = 0.5 * total;
        for w in self.geometry.windows(2) {
            let len = seg_len(&w[0], &w[1]);
            if remaining <= len && len > 0.0 {
                let t = remaining / len;
                return GeoPoint {
                    lat: w[0].lat + t * (w[1].lat - w[0].lat),
                    lon: w[0].lon + t * (w[1].lon - w[0].lon),
                };
            }
            remaining -= len;
        }
        *self
            .geometry
            .last()
            .expect("edge geometry has at least two points")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoadGraph {
    nodes: IndexMap<ElementId, Node>,
    edges: Vec<Edge>,
    edge_index: HashMap<ElementId, usize>,
}

impl PartialEq for RoadGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &ElementId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: &ElementId) -> Option<&Edge> {
        self.edge_index.get(id).map(|&i| &self.edges[i])
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), GraphError> {
        if !node.position.is_valid() {
            return Err(parse_err(format!(
                "node {} has invalid coordinates",
                node.id
            )));
        }
        if self.nodes.contains_key(&node.id) {
            return Err(parse_err(format!("duplicate node id {}", node.id)));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds an edge after checking its endpoints exist and match its geometry.
    pub fn add_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        if self.edge_index.contains_key(&edge.id) {
            return Err(parse_err(format!("duplicate edge id {}", edge.id)));
        }
        if edge.geometry.len() < 2 {
            return Err(parse_err(format!(
                "edge {} needs at least two vertices",
                edge.id
            )));
        }
        if let Some(p) = edge.geometry.iter().find(|p| !p.is_valid()) {
            return Err(parse_err(format!(
                "edge {} has invalid vertex ({}, {})",
                edge.id, p.lat, p.lon
            )));
        }
        let ends = [
            (&edge.u, edge.geometry[0]),
            (&edge.v, edge.geometry[edge.geometry.len() - 1]),
        ];
        for (node_id, vertex) in ends {
            let node = self.nodes.get(node_id).ok_or_else(|| {
                parse_err(format!(
                    "edge {} has dangling reference to node {node_id}",
                    edge.id
                ))
            })?;
            let d = (node.position.lat - vertex.lat)
                .abs()
                .max((node.position.lon - vertex.lon).abs());
            if d > ENDPOINT_TOLERANCE_DEG {
                return Err(parse_err(format!(
                    "edge {} end vertex is {d} degrees away from node {node_id}",
                    edge.id
                )));
            }
        }
        self.edge_index.insert(edge.id.clone(), self.edges.len());
        self.edges.push(edge);
        Ok(())
    }

    /// Ids of edges whose arc-length midpoint lies in `bbox`.
    pub fn edges_in_bbox(&self, bbox: &BBox) -> Vec<ElementId> {
        self.edges
            .iter()
            .filter(|e| bbox.contains(e.midpoint()))
            .map(|e| e.id.clone())
            .collect()
    }

    /// Sets attribute `name` to `value` on every listed edge. Nothing is changed
    /// if any id is unknown.
    pub fn set_edge_attr(
        &mut self,
        ids: &[ElementId],
        name: &str,
        value: f64,
    ) -> Result<(), GraphError> {
        let number =
            serde_json::Number::from_f64(value).ok_or(GraphError::NonFiniteValue(value))?;
        let idx = ids
            .iter()
            .map(|id| {
                self.edge_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| GraphError::UnknownEdge(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for i in idx {
            self.edges[i]
                .attrs
                .insert(name.to_string(), Value::Number(number.clone()));
        }
        Ok(())
    }

    pub(crate) fn set_edge_attr_at(&mut self, index: usize, name: &str, value: &Value) {
        self.edges[index]
            .attrs
            .insert(name.to_string(), value.clone());
    }

    /// GeoJSON FeatureCollection: node features first, then edges, each in
    /// insertion order.
    pub fn to_geojson(&self) -> Value {
        let mut features = Vec::with_capacity(self.nodes.len() + self.edges.len());
        for n in self.nodes.values() {
            let mut props = Map::new();
            props.insert("id".into(), n.id.to_json());
            props.extend(n.attrs.iter().map(|(k, v)| (k.clone(), v.clone())));
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [n.position.lon, n.position.lat] },
                "properties": props,
            }));
        }
        for e in &self.edges {
            let mut props = Map::new();
            props.insert("id".into(), e.id.to_json());
            props.insert("u".into(), e.u.to_json());
            props.insert("v".into(), e.v.to_json());
            props.extend(e.attrs.iter().map(|(k, v)| (k.clone(), v.clone())));
            let coords: Vec<Value> = e.geometry.iter().map(|p| json!([p.lon, p.lat])).collect();
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": props,
            }));
        }
        json!({ "type": "FeatureCollection", "features": features })
    }

    pub fn write_geojson<W: Write>(&self, out: W) -> Result<(), GraphError> {
        let mut w = std::io::BufWriter::new(out);
        serde_json::to_writer(&mut w, &self.to_geojson())
            .map_err(|e| GraphError::Io(e.to_string()))?;
        w.write_all(b"\n")
            .map_err(|e| GraphError::Io(e.to_string()))?;
        w.flush().map_err(|e| GraphError::Io(e.to_string()))
    }

    pub fn to_geojson_string(&self) -> String {
        let mut s = serde_json::to_string(&self.to_geojson()).expect("graph serialises");
        s.push('\n');
        s
    }
}

fn parse_position(v: &Value, ctx: &str) -> Result<GeoPoint, GraphError> {
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err(format!("{ctx}: position must be an array")))?;
    match arr.as_slice() {
        [lon, lat, ..] => {
            let (Some(lon), Some(lat)) = (lon.as_f64(), lat.as_f64()) else {
                return Err(parse_err(format!("{ctx}: position must be numeric")));
            };
            Ok(GeoPoint { lat, lon })
        }
        _ => Err(parse_err(format!("{ctx}: position needs two coordinates"))),
    }
}

fn take_id(props: &mut Map<String, Value>, key: &str, ctx: &str) -> Result<ElementId, GraphError> {
    let raw = props
        .remove(key)
        .ok_or_else(|| parse_err(format!("{ctx}: missing property `{key}`")))?;
    ElementId::from_json(&raw).ok_or_else(|| {
        parse_err(format!(
            "{ctx}: property `{key}` must be a string or integer, got {raw}"
        ))
    })
}

/// Reads a road graph from a GeoJSON FeatureCollection.
pub fn parse_geojson<R: Read>(source: R) -> Result<RoadGraph, GraphError> {
    let doc: Value = serde_json::from_reader(source).map_err(|e| GraphError::Parse {
        line: (e.line() > 0).then_some(e.line()),
        reason: format!("malformed JSON: {e}"),
    })?;
    graph_from_value(doc)
}

pub fn parse_geojson_str(text: &str) -> Result<RoadGraph, GraphError> {
    parse_geojson(text.as_bytes())
}

fn graph_from_value(doc: Value) -> Result<RoadGraph, GraphError> {
    let Value::Object(mut root) = doc else {
        return Err(parse_err("top level must be a JSON object"));
    };
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(parse_err("top level must be a FeatureCollection"));
    }
    let Some(Value::Array(features)) = root.remove("features") else {
        return Err(parse_err("FeatureCollection has no `features` array"));
    };

    // nodes first so that edges may precede their nodes in the file
    let mut pending_edges = Vec::new();
    let mut graph = RoadGraph::new();
    for (i, feature) in features.into_iter().enumerate() {
        let ctx = format!("feature {i}");
        let Value::Object(mut feature) = feature else {
            return Err(parse_err(format!("{ctx}: not an object")));
        };
        let mut props = match feature.remove("properties") {
            Some(Value::Object(m)) => m,
            _ => return Err(parse_err(format!("{ctx}: missing `properties` object"))),
        };
        let geometry = feature.remove("geometry").unwrap_or(Value::Null);
        let gtype = geometry
            .get("type")
            .and_then(Value::as_str)
            .unwrap_or_default();
        let coords = geometry.get("coordinates").unwrap_or(&Value::Null);
        match gtype {
            "Point" => {
                let id = take_id(&mut props, "id", &ctx)?;
                let position = parse_position(coords, &ctx)?;
                graph.add_node(Node {
                    id,
                    position,
                    attrs: props,
                })?;
            }
            "LineString" => {
                let id = take_id(&mut props, "id", &ctx)?;
                let u = take_id(&mut props, "u", &ctx)?;
                let v = take_id(&mut props, "v", &ctx)?;
                let geometry = coords
                    .as_array()
                    .ok_or_else(|| {
                        parse_err(format!("{ctx}: LineString coordinates must be an array"))
                    })?
                    .iter()
                    .map(|c| parse_position(c, &ctx))
                    .collect::<Result<Vec<_>, _>>()?;
                pending_edges.push(Edge {
                    id,
                    u,
                    v,
                    geometry,
                    attrs: props,
                });
            }
            "" => return Err(parse_err(format!("{ctx}: missing geometry type"))),
            other => {
                return Err(parse_err(format!(
                    "{ctx}: unsupported geometry type `{other}`"
                )))
            }
        }
    }
    for e in pending_edges {
        graph.add_edge(e)?;
    }
    Ok(graph)
}
