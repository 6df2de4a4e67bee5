//! Transmission network, DC power flow and zone partitions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("missing angle for node `{node}` in hour {hour}")]
    MissingAngle { node: String, hour: usize },
    #[error("invalid zone map: {0}")]
    InvalidZones(String),
    #[error("invalid network: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

impl Node {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            lat: None,
            lon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Per-unit susceptance.
    pub susceptance: f64,
    /// Thermal limit in MW before the security margin.
    pub limit_mw: f64,
}

impl Line {
    pub fn new(from: impl Into<String>, to: impl Into<String>, susceptance: f64, limit_mw: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            susceptance,
            limit_mw,
        }
    }
}

pub const DEFAULT_MARGIN: f64 = 0.20;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    lines: Vec<Line>,
    margin: f64,
    /// Optional box |θ| ≤ bound on voltage angles (radians).
    angle_bound: Option<f64>,
    index: HashMap<String, usize>,
}

impl Network {
    /// Builds a network, merging parallel lines between the same unordered
    /// pair of nodes by summing susceptances and limits.
    ///
    /// No validation happens here beyond the margin range; see
    /// [`validate_network`].
    pub fn new(nodes: Vec<Node>, lines: Vec<Line>, margin: f64) -> Result<Self, GridError> {
        if !(0.0..1.0).contains(&margin) {
            return Err(GridError::Invalid(format!("security margin {margin} outside [0, 1)")));
        }
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        let mut merged: Vec<Line> = Vec::with_capacity(lines.len());
        let mut pair_pos: HashMap<(String, String), usize> = HashMap::new();
        for l in lines {
            let key = if l.from <= l.to {
                (l.from.clone(), l.to.clone())
            } else {
                (l.to.clone(), l.from.clone())
            };
            if l.from != l.to {
                if let Some(&p) = pair_pos.get(&key) {
                    merged[p].susceptance += l.susceptance;
                    merged[p].limit_mw += l.limit_mw;
                    continue;
                }
                pair_pos.insert(key, merged.len());
            }
            merged.push(l);
        }
        Ok(Self {
            nodes,
            lines: merged,
            margin,
            angle_bound: None,
            index,
        })
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self, GridError> {
        if !(0.0..1.0).contains(&margin) {
            return Err(GridError::Invalid(format!("security margin {margin} outside [0, 1)")));
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn with_angle_bound(mut self, bound: Option<f64>) -> Self {
        self.angle_bound = bound;
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn angle_bound(&self) -> Option<f64> {
        self.angle_bound
    }

    pub fn node_index(&self, id: &str) -> Result<usize, GridError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GridError::UnknownNode(id.to_string()))
    }

    /// Endpoint indices of line `l`.
    pub fn endpoints(&self, l: usize) -> (usize, usize) {
        let line = &self.lines[l];
        (self.index[&line.from], self.index[&line.to])
    }

    /// (1 - margin) · limit.
    pub fn effective_limit(&self, l: usize) -> f64 {
        (1.0 - self.margin) * self.lines[l].limit_mw
    }

    /// Same network with every limit scaled by `factor`.
    pub fn scale_limits(&self, factor: f64) -> Self {
        let mut n = self.clone();
        for l in &mut n.lines {
            l.limit_mw *= factor;
        }
        n
    }

    pub fn scale_susceptances(&self, factor: f64) -> Self {
        let mut n = self.clone();
        for l in &mut n.lines {
            l.susceptance *= factor;
        }
        n
    }
}

/// Flow on every line for every hour given per-node angles `angles[node][hour]`.
///
/// Flows are oriented from `line.from` to `line.to`.
pub fn dc_flows(network: &Network, angles: &[Vec<f64>], hours: usize) -> Result<Vec<Vec<f64>>, GridError> {
    let angle = |n: usize, t: usize| -> Result<f64, GridError> {
        match angles.get(n).and_then(|a| a.get(t)) {
            Some(v) if !v.is_nan() => Ok(*v),
            _ => Err(GridError::MissingAngle {
                node: network.nodes[n].id.clone(),
                hour: t,
            }),
        }
    };
    let mut flows = Vec::with_capacity(network.lines.len());
    for (l, line) in network.lines.iter().enumerate() {
        let (a, b) = network.endpoints(l);
        let mut series = Vec::with_capacity(hours);
        for t in 0..hours {
            series.push(line.susceptance * (angle(a, t)? - angle(b, t)?));
        }
        flows.push(series);
    }
    Ok(flows)
}

/// Signed flow from `n` to `m` in `hour`, or `None` if no line joins them.
pub fn flow_between(network: &Network, flows: &[Vec<f64>], n: &str, m: &str, hour: usize) -> Option<f64> {
    network.lines.iter().enumerate().find_map(|(l, line)| {
        if line.from == n && line.to == m {
            Some(flows[l][hour])
        } else if line.from == m && line.to == n {
            Some(-flows[l][hour])
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneMap {
    zone_ids: Vec<String>,
    node_zone: Vec<usize>,
}

impl ZoneMap {
    /// Builds a zone map from `(node id, zone id)` pairs. Zones are numbered in
    /// sorted order of their ids.
    pub fn new<S: AsRef<str>>(network: &Network, assignments: &[(S, S)]) -> Result<Self, GridError> {
        let mut by_node: HashMap<&str, &str> = HashMap::new();
        for (n, z) in assignments {
            let (n, z) = (n.as_ref(), z.as_ref());
            network.node_index(n).map_err(|_| {
                GridError::InvalidZones(format!("zone assignment for unknown node `{n}`"))
            })?;
            if let Some(prev) = by_node.insert(n, z) {
                if prev != z {
                    return Err(GridError::InvalidZones(format!(
                        "node `{n}` assigned to both `{prev}` and `{z}`"
                    )));
                }
            }
        }
        let zone_ids: Vec<String> = by_node
            .values()
            .map(|z| z.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut node_zone = Vec::with_capacity(network.nodes().len());
        for node in network.nodes() {
            let z = by_node
                .get(node.id.as_str())
                .ok_or_else(|| GridError::InvalidZones(format!("node `{}` has no zone", node.id)))?;
            node_zone.push(zone_ids.binary_search_by(|s| s.as_str().cmp(z)).unwrap());
        }
        Ok(Self { zone_ids, node_zone })
    }

    /// Everything in one zone.
    pub fn single(network: &Network, zone: &str) -> Self {
        Self {
            zone_ids: vec![zone.to_string()],
            node_zone: vec![0; network.nodes().len()],
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_zone.len()
    }

    pub fn zone_count(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn zone_ids(&self) -> &[String] {
        &self.zone_ids
    }

    pub fn zone_of(&self, node: usize) -> usize {
        self.node_zone[node]
    }

    pub fn members(&self, zone: usize) -> Vec<usize> {
        (0..self.node_zone.len()).filter(|&n| self.node_zone[n] == zone).collect()
    }

    pub fn is_valid_for(&self, network: &Network) -> bool {
        self.node_zone.len() == network.nodes().len()
    }

    pub fn assignments(&self, network: &Network) -> Vec<(String, String)> {
        network
            .nodes()
            .iter()
            .zip(&self.node_zone)
            .map(|(n, &z)| (n.id.clone(), self.zone_ids[z].clone()))
            .collect()
    }
}

/// Lines whose endpoints lie in different zones, ordered by (from, to).
pub fn cross_zonal_lines(network: &Network, zones: &ZoneMap) -> Result<Vec<usize>, GridError> {
    if !zones.is_valid_for(network) {
        return Err(GridError::InvalidZones("zone map does not match the network".into()));
    }
    let mut out: Vec<usize> = (0..network.lines().len())
        .filter(|&l| {
            let (a, b) = network.endpoints(l);
            zones.zone_of(a) != zones.zone_of(b)
        })
        .collect();
    out.sort_by(|&x, &y| {
        let (lx, ly) = (&network.lines()[x], &network.lines()[y]);
        (&lx.from, &lx.to).cmp(&(&ly.from, &ly.to))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationIssue {
    DuplicateNode(String),
    DanglingEndpoint { line: usize, node: String },
    SelfLoop { line: usize, node: String },
    NonPositiveSusceptance { line: usize, value: f64 },
    NonPositiveLimit { line: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    /// Connected components as sorted node-id lists, ordered by first member.
    pub components: Vec<Vec<String>>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn validate_network(network: &Network) -> ValidationReport {
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for n in network.nodes() {
        if !seen.insert(n.id.as_str()) {
            errors.push(ValidationIssue::DuplicateNode(n.id.clone()));
        }
    }
    let mut adj: BTreeMap<&str, Vec<&str>> = seen.iter().map(|&id| (id, Vec::new())).collect();
    for (l, line) in network.lines().iter().enumerate() {
        let mut ok = true;
        for end in [&line.from, &line.to] {
            if !seen.contains(end.as_str()) {
                errors.push(ValidationIssue::DanglingEndpoint {
                    line: l,
                    node: end.clone(),
                });
                ok = false;
            }
        }
        if line.from == line.to {
            errors.push(ValidationIssue::SelfLoop {
                line: l,
                node: line.from.clone(),
            });
            ok = false;
        }
        if !(line.susceptance > 0.0) {
            errors.push(ValidationIssue::NonPositiveSusceptance {
                line: l,
                value: line.susceptance,
            });
        }
        if !(line.limit_mw > 0.0) {
            errors.push(ValidationIssue::NonPositiveLimit {
                line: l,
                value: line.limit_mw,
            });
        }
        if ok {
            adj.get_mut(line.from.as_str()).unwrap().push(line.to.as_str());
            adj.get_mut(line.to.as_str()).unwrap().push(line.from.as_str());
        }
    }
    let mut visited = BTreeSet::new();
    let mut components = Vec::new();
    let order: Vec<&str> = {
        let mut firsts = BTreeSet::new();
        network
            .nodes()
            .iter()
            .map(|n| n.id.as_str())
            .filter(|id| firsts.insert(*id))
            .collect()
    };
    for start in order {
        if visited.contains(start) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        visited.insert(start);
        while let Some(v) = stack.pop() {
            comp.push(v.to_string());
            for &w in &adj[v] {
                if visited.insert(w) {
                    stack.push(w);
                }
            }
        }
        comp.sort();
        components.push(comp);
    }
    ValidationReport { errors, components }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex_b_network() -> Network {
        let nodes = (1..=6).map(|i| Node::new(format!("v{i}"))).collect();
        let lines = vec![Line::new("v3", "v5", 1.0, 50.0), Line::new("v4", "v5", 1.0, 100.0)];
        Network::new(nodes, lines, 0.0).unwrap()
    }

    #[test]
    fn flows_are_products_of_angle_differences() {
        let net = Network::new(
            vec![Node::new("a"), Node::new("b")],
            vec![Line::new("a", "b", 10.0, 100.0)],
            0.0,
        )
        .unwrap();
        let f = dc_flows(&net, &[vec![0.3, 0.7], vec![0.3, 0.2]], 2).unwrap();
        assert_eq!(f[0][0], 0.0);
        assert!((f[0][1] - 5.0).abs() < 1e-12);
        assert_eq!(flow_between(&net, &f, "b", "a", 1), Some(-f[0][1]));
        assert_eq!(
            dc_flows(&net, &[vec![0.0, 0.0], vec![0.0]], 2),
            Err(GridError::MissingAngle {
                node: "b".into(),
                hour: 1
            })
        );
    }

    #[test]
    fn parallel_lines_are_merged() {
        let net = Network::new(
            vec![Node::new("a"), Node::new("b")],
            vec![Line::new("a", "b", 2.0, 30.0), Line::new("b", "a", 3.0, 20.0)],
            0.2,
        )
        .unwrap();
        assert_eq!(net.lines().len(), 1);
        assert_eq!(net.lines()[0].susceptance, 5.0);
        assert_eq!(net.lines()[0].limit_mw, 50.0);
        assert!((net.effective_limit(0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn cross_zonal_lines_follow_zone_map() {
        let net = ex_b_network();
        let single = ZoneMap::single(&net, "DE");
        assert!(cross_zonal_lines(&net, &single).unwrap().is_empty());

        let two = ZoneMap::new(
            &net,
            &[("v1", "1"), ("v2", "1"), ("v3", "1"), ("v4", "1"), ("v5", "2"), ("v6", "2")],
        )
        .unwrap();
        assert_eq!(cross_zonal_lines(&net, &two).unwrap(), vec![0, 1]);

        let three = ZoneMap::new(
            &net,
            &[("v2", "1"), ("v4", "1"), ("v5", "1"), ("v1", "2"), ("v3", "2"), ("v6", "3")],
        )
        .unwrap();
        assert_eq!(three.zone_count(), 3);
        assert_eq!(cross_zonal_lines(&net, &three).unwrap(), vec![0]);
    }

    #[test]
    fn zone_map_rejects_unmapped_nodes() {
        let net = ex_b_network();
        let err = ZoneMap::new(&net, &[("v1", "1")]).unwrap_err();
        assert!(matches!(err, GridError::InvalidZones(m) if m.contains("v2")));
        assert!(ZoneMap::new(&net, &[("zz", "1")]).is_err());
    }

    #[test]
    fn validation_reports_components_and_errors() {
        let report = validate_network(&ex_b_network());
        assert!(report.is_ok());
        assert_eq!(
            report.components,
            vec![
                vec!["v1".to_string()],
                vec!["v2".to_string()],
                vec!["v3".to_string(), "v4".to_string(), "v5".to_string()],
                vec!["v6".to_string()],
            ]
        );

        let bad = Network::new(
            vec![Node::new("a"), Node::new("a"), Node::new("b")],
            vec![Line::new("a", "x", 1.0, 1.0), Line::new("a", "b", 0.0, -1.0)],
            0.0,
        )
        .unwrap();
        let report = validate_network(&bad);
        assert!(report.errors.contains(&ValidationIssue::DuplicateNode("a".into())));
        assert!(report.errors.contains(&ValidationIssue::DanglingEndpoint {
            line: 0,
            node: "x".into()
        }));
        assert!(report
            .errors
            .iter()
            .any(|e| matches!(e, ValidationIssue::NonPositiveSusceptance { line: 1, .. })));
        assert!(report
            .errors
            .iter()
            .any(|e| matches!(e, ValidationIssue::NonPositiveLimit { line: 1, .. })));
    }
}
