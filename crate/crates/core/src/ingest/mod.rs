//! Instance files, run configuration, demand and renewable preprocessing,
//! generator-to-category mapping and synthetic instances.
//!
//! An instance directory holds:
//!
//! | file | header |
//! |------|--------|
//! | `nodes.csv` | `node_id,lat,lon` |
//! | `lines.csv` | `from,to,susceptance_pu,limit_mw` |
//! | `generators.csv` | `gen_id,node_id,type,p_min_mw,p_max_mw,min_uptime_h,var_cost_eur_mwh,fixed_cost_eur_h` |
//! | `demand.csv` | `buyer_id,node_id,hour,load_mwh` |
//! | `zones.csv` (optional) | `node_id,zone_id` |
//! | `availability.csv` (optional) | `gen_id,hour,p_max_mw` |
//! | `config.json` (optional) | see [`RunConfig`] |

mod mapping;
mod profiles;
mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{validate_network, GridError, Line, Network, Node, ValidationReport, ZoneMap, DEFAULT_MARGIN};
use crate::market::{DemandSeries, GeneratorOffer, MarketError, MarketInstance, DEFAULT_VOLL};
use crate::redispatch::FlowCap;

pub use mapping::{
    map_units, Category, CategoryDeviation, GridUnit, MappingError, MappingInfeasibility, PlantType,
    UnitAssignment, UnitMappingProblem, DEFAULT_CAPACITY_BOUND, DEFAULT_COUNT_BOUND,
};
pub use profiles::{disaggregate_demand, scale_renewables};
pub use synthetic::{gen_synthetic, write_synthetic, SyntheticSpec};

pub const NODES_HEADER: &[&str] = &["node_id", "lat", "lon"];
pub const LINES_HEADER: &[&str] = &["from", "to", "susceptance_pu", "limit_mw"];
pub const GENERATORS_HEADER: &[&str] = &[
    "gen_id",
    "node_id",
    "type",
    "p_min_mw",
    "p_max_mw",
    "min_uptime_h",
    "var_cost_eur_mwh",
    "fixed_cost_eur_h",
];
pub const DEMAND_HEADER: &[&str] = &["buyer_id", "node_id", "hour", "load_mwh"];
pub const ZONES_HEADER: &[&str] = &["node_id", "zone_id"];
pub const AVAILABILITY_HEADER: &[&str] = &["gen_id", "hour", "p_max_mw"];

/// Zone id used when no zones file is given.
pub const DEFAULT_ZONE: &str = "all";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: line {line}: unknown node `{node}`")]
    UnknownNode { path: PathBuf, line: u64, node: String },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings read from `config.json`; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub margin: f64,
    pub interconnector_fraction: f64,
    pub mip_gap: f64,
    pub voll_eur_mwh: f64,
    pub price_cap_eur_mwh: f64,
    pub redispatch_flow_cap: FlowCap,
    /// Horizon length; inferred from the demand and availability files when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hours: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            interconnector_fraction: crate::clearing::DEFAULT_INTERCONNECTOR_FRACTION,
            mip_gap: crate::clearing::DEFAULT_MIP_GAP,
            voll_eur_mwh: DEFAULT_VOLL,
            price_cap_eur_mwh: crate::report::DEFAULT_PRICE_CAP,
            redispatch_flow_cap: FlowCap::ZonalFlows,
            hours: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| IngestError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |what: &str, v: f64| IngestError::Invalid(format!("config: {what} = {v} is out of range"));
        if !(0.0..1.0).contains(&self.margin) {
            return Err(bad("margin", self.margin));
        }
        if !(self.interconnector_fraction > 0.0 && self.interconnector_fraction <= 1.0) {
            return Err(bad("interconnector_fraction", self.interconnector_fraction));
        }
        if !(self.mip_gap >= 0.0 && self.mip_gap.is_finite()) {
            return Err(bad("mip_gap", self.mip_gap));
        }
        if !(self.voll_eur_mwh > 0.0 && self.voll_eur_mwh.is_finite()) {
            return Err(bad("voll_eur_mwh", self.voll_eur_mwh));
        }
        if !self.price_cap_eur_mwh.is_finite() {
            return Err(bad("price_cap_eur_mwh", self.price_cap_eur_mwh));
        }
        if self.hours == Some(0) {
            return Err(IngestError::Invalid("config: hours must be positive".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text + "\n").map_err(io_err(path))
    }
}

/// Locations of the files making up one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePaths {
    pub nodes: PathBuf,
    pub lines: PathBuf,
    pub generators: PathBuf,
    pub demand: PathBuf,
    pub zones: Option<PathBuf>,
    pub availability: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

impl InstancePaths {
    /// Standard file names inside `dir`; optional files are kept only if present.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            nodes: dir.join("nodes.csv"),
            lines: dir.join("lines.csv"),
            generators: dir.join("generators.csv"),
            demand: dir.join("demand.csv"),
            zones: optional("zones.csv"),
            availability: optional("availability.csv"),
            config: optional("config.json"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub instance: MarketInstance,
    pub config: RunConfig,
    pub validation: ValidationReport,
}

#[derive(Debug, Deserialize, Serialize)]
struct NodeRow {
    node_id: String,
    lat: Option<f64>,
    lon: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct LineRow {
    from: String,
    to: String,
    susceptance_pu: f64,
    limit_mw: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct GeneratorRow {
    gen_id: String,
    node_id: String,
    #[serde(rename = "type")]
    kind: String,
    p_min_mw: f64,
    p_max_mw: f64,
    min_uptime_h: usize,
    var_cost_eur_mwh: f64,
    fixed_cost_eur_h: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct DemandRow {
    buyer_id: String,
    node_id: String,
    hour: usize,
    load_mwh: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct ZoneRow {
    node_id: String,
    zone_id: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct AvailabilityRow {
    gen_id: String,
    hour: usize,
    p_max_mw: f64,
}

/// Reads `path`, checks its header against `header` exactly and returns the
/// rows with their 1-based line numbers.
fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = rdr.headers().map_err(|e| IngestError::Row {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = found.iter().collect();
    if found != header {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: T = rec.map_err(|e| IngestError::Row {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        rows.push((rows.len() as u64 + 2, row));
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), IngestError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| IngestError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e.to_string()),
    };
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err(path))
}

/// Loads and validates an instance. The security margin and VOLL come from
/// the config file (defaults when absent).
pub fn load_instance(paths: &InstancePaths) -> Result<LoadedInstance, IngestError> {
    let config = match &paths.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };

    let nodes: Vec<Node> = read_rows::<NodeRow>(&paths.nodes, NODES_HEADER)?
        .into_iter()
        .map(|(_, r)| Node {
            id: r.node_id,
            lat: r.lat,
            lon: r.lon,
        })
        .collect();
    let known: HashSet<String> = nodes.iter().map(|n| n.id.clone()).collect();
    let check_node = |path: &Path, line: u64, id: &str| -> Result<(), IngestError> {
        if known.contains(id) {
            Ok(())
        } else {
            Err(IngestError::UnknownNode {
                path: path.to_path_buf(),
                line,
                node: id.to_string(),
            })
        }
    };

    let mut lines = Vec::new();
    for (line, r) in read_rows::<LineRow>(&paths.lines, LINES_HEADER)? {
        check_node(&paths.lines, line, &r.from)?;
        check_node(&paths.lines, line, &r.to)?;
        lines.push(Line::new(r.from, r.to, r.susceptance_pu, r.limit_mw));
    }

    let gen_rows = read_rows::<GeneratorRow>(&paths.generators, GENERATORS_HEADER)?;
    for (line, r) in &gen_rows {
        check_node(&paths.generators, *line, &r.node_id)?;
    }
    let demand_rows = read_rows::<DemandRow>(&paths.demand, DEMAND_HEADER)?;
    for (line, r) in &demand_rows {
        check_node(&paths.demand, *line, &r.node_id)?;
    }
    let avail_rows = match &paths.availability {
        Some(p) => read_rows::<AvailabilityRow>(p, AVAILABILITY_HEADER)?,
        None => Vec::new(),
    };

    let inferred = demand_rows
        .iter()
        .map(|(_, r)| r.hour + 1)
        .chain(avail_rows.iter().map(|(_, r)| r.hour + 1))
        .max();
    let hours = config.hours.or(inferred).unwrap_or(1);

    let mut buyers: Vec<DemandSeries> = Vec::new();
    let mut buyer_index: HashMap<String, usize> = HashMap::new();
    for (line, r) in demand_rows {
        if r.hour >= hours {
            return Err(IngestError::Row {
                path: paths.demand.clone(),
                line,
                message: format!("hour {} outside the {hours}-hour horizon", r.hour),
            });
        }
        let b = *buyer_index.entry(r.buyer_id.clone()).or_insert_with(|| {
            buyers.push(DemandSeries {
                buyer_id: r.buyer_id.clone(),
                node_id: r.node_id.clone(),
                profile: vec![0.0; hours],
            });
            buyers.len() - 1
        });
        if buyers[b].node_id != r.node_id {
            return Err(IngestError::Row {
                path: paths.demand.clone(),
                line,
                message: format!(
                    "buyer `{}` appears at nodes `{}` and `{}`",
                    r.buyer_id, buyers[b].node_id, r.node_id
                ),
            });
        }
        buyers[b].profile[r.hour] += r.load_mwh;
    }

    let mut sellers: Vec<GeneratorOffer> = gen_rows
        .into_iter()
        .map(|(_, r)| GeneratorOffer {
            seller_id: r.gen_id,
            node_id: r.node_id,
            kind: r.kind,
            p_min: r.p_min_mw,
            p_max: vec![r.p_max_mw; hours],
            min_uptime: r.min_uptime_h,
            var_cost: r.var_cost_eur_mwh,
            fixed_cost: r.fixed_cost_eur_h,
        })
        .collect();
    if let Some(path) = &paths.availability {
        let index: HashMap<String, usize> = sellers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.seller_id.clone(), i))
            .collect();
        for (line, r) in avail_rows {
            let Some(&s) = index.get(&r.gen_id) else {
                return Err(IngestError::Row {
                    path: path.clone(),
                    line,
                    message: format!("unknown generator `{}`", r.gen_id),
                });
            };
            if r.hour >= hours {
                return Err(IngestError::Row {
                    path: path.clone(),
                    line,
                    message: format!("hour {} outside the {hours}-hour horizon", r.hour),
                });
            }
            sellers[s].p_max[r.hour] = r.p_max_mw;
        }
    }

    let network = Network::new(nodes, lines, config.margin)?;
    let validation = validate_network(&network);
    let zones = match &paths.zones {
        Some(p) => {
            let rows = read_rows::<ZoneRow>(p, ZONES_HEADER)?;
            for (line, r) in &rows {
                check_node(p, *line, &r.node_id)?;
            }
            let pairs: Vec<(String, String)> = rows.into_iter().map(|(_, r)| (r.node_id, r.zone_id)).collect();
            ZoneMap::new(&network, &pairs)?
        }
        None => ZoneMap::single(&network, DEFAULT_ZONE),
    };
    let instance = MarketInstance::new(network, zones, buyers, sellers, hours, config.voll_eur_mwh)?;
    Ok(LoadedInstance {
        instance,
        config,
        validation,
    })
}

/// Loads a zone map for an already loaded instance.
pub fn load_zones(path: &Path, network: &Network) -> Result<ZoneMap, IngestError> {
    let rows = read_rows::<ZoneRow>(path, ZONES_HEADER)?;
    let pairs: Vec<(String, String)> = rows.into_iter().map(|(_, r)| (r.node_id, r.zone_id)).collect();
    Ok(ZoneMap::new(network, &pairs)?)
}

/// Writes `inst` to `dir` so that [`load_instance`] reproduces it. The
/// config's margin and VOLL are taken from the instance; `availability.csv`
/// is written only when some unit's maximum output varies over the horizon.
pub fn write_instance(inst: &MarketInstance, config: &RunConfig, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let net = &inst.network;
    let nodes: Vec<NodeRow> = net
        .nodes()
        .iter()
        .map(|n| NodeRow {
            node_id: n.id.clone(),
            lat: n.lat,
            lon: n.lon,
        })
        .collect();
    write_rows(&dir.join("nodes.csv"), NODES_HEADER, &nodes)?;
    let lines: Vec<LineRow> = net
        .lines()
        .iter()
        .map(|l| LineRow {
            from: l.from.clone(),
            to: l.to.clone(),
            susceptance_pu: l.susceptance,
            limit_mw: l.limit_mw,
        })
        .collect();
    write_rows(&dir.join("lines.csv"), LINES_HEADER, &lines)?;

    let mut avail = Vec::new();
    let gens: Vec<GeneratorRow> = inst
        .sellers
        .iter()
        .map(|s| {
            let first = s.p_max.first().copied().unwrap_or(0.0);
            if s.p_max.iter().any(|&p| p != first) {
                avail.extend(s.p_max.iter().enumerate().map(|(hour, &p)| AvailabilityRow {
                    gen_id: s.seller_id.clone(),
                    hour,
                    p_max_mw: p,
                }));
            }
            GeneratorRow {
                gen_id: s.seller_id.clone(),
                node_id: s.node_id.clone(),
                kind: s.kind.clone(),
                p_min_mw: s.p_min,
                p_max_mw: first,
                min_uptime_h: s.min_uptime,
                var_cost_eur_mwh: s.var_cost,
                fixed_cost_eur_h: s.fixed_cost,
            }
        })
        .collect();
    write_rows(&dir.join("generators.csv"), GENERATORS_HEADER, &gens)?;
    let avail_path = dir.join("availability.csv");
    if avail.is_empty() {
        if avail_path.exists() {
            fs::remove_file(&avail_path).map_err(io_err(&avail_path))?;
        }
    } else {
        write_rows(&avail_path, AVAILABILITY_HEADER, &avail)?;
    }

    let demand: Vec<DemandRow> = inst
        .buyers
        .iter()
        .flat_map(|b| {
            b.profile.iter().enumerate().map(|(hour, &load)| DemandRow {
                buyer_id: b.buyer_id.clone(),
                node_id: b.node_id.clone(),
                hour,
                load_mwh: load,
            })
        })
        .collect();
    write_rows(&dir.join("demand.csv"), DEMAND_HEADER, &demand)?;
    let zones: Vec<ZoneRow> = inst
        .zones
        .assignments(net)
        .into_iter()
        .map(|(node_id, zone_id)| ZoneRow { node_id, zone_id })
        .collect();
    write_rows(&dir.join("zones.csv"), ZONES_HEADER, &zones)?;

    let cfg = RunConfig {
        margin: net.margin(),
        voll_eur_mwh: inst.voll,
        hours: Some(inst.hours),
        ..config.clone()
    };
    cfg.write(&dir.join("config.json"))
}
