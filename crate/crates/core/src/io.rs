//! Topology (JSON) and demand (CSV) file formats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub nodes: Vec<String>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub capacity: f64,
}

impl TopologyFile {
    pub fn build(self) -> Result<Topology> {
        Topology::new(
            self.nodes,
            self.links
                .into_iter()
                .map(|l| (l.id, l.src, l.dst, l.capacity)),
        )
    }

    pub fn from_topology(topo: &Topology) -> Self {
        TopologyFile {
            nodes: topo.node_names().to_vec(),
            links: topo
                .links()
                .iter()
                .map(|l| LinkRecord {
                    id: l.id.clone(),
                    src: topo.node_name(l.src).to_string(),
                    dst: topo.node_name(l.dst).to_string(),
                    capacity: l.capacity,
                })
                .collect(),
        }
    }
}

/// Parses and validates a topology document.
pub fn parse_topology(text: &str) -> Result<Topology> {
    let file: TopologyFile = serde_json::from_str(text)?;
    file.build()
}

pub fn topology_to_json(topo: &Topology) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TopologyFile::from_topology(topo))?)
}

/// One row of a demand file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRecord {
    pub src: String,
    pub dst: String,
    pub demand: f64,
}

/// Parses `src,dst,demand` rows. Rejects NaN, infinite and negative demands.
pub fn parse_demand_csv(text: &str) -> Result<Vec<DemandRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = ["src", "dst", "demand"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Demand(format!(
            "expected header `src,dst,demand`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.deserialize::<DemandRecord>().enumerate() {
        let rec = rec?;
        if !(rec.demand.is_finite() && rec.demand >= 0.0) {
            return Err(Error::Demand(format!(
                "row {}: demand must be finite and non-negative, got {}",
                line + 1,
                rec.demand
            )));
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Parses a demand file and resolves it against `topo`.
pub fn read_demands(topo: &Topology, text: &str) -> Result<DemandMatrix> {
    let rows = parse_demand_csv(text)?;
    DemandMatrix::from_named(
        topo,
        rows.iter().map(|r| (r.src.as_str(), r.dst.as_str(), r.demand)),
    )
}

pub fn demands_to_csv(topo: &Topology, dm: &DemandMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for ((s, t), d) in dm.entries() {
        w.serialize(DemandRecord {
            src: topo.node_name(s).to_string(),
            dst: topo.node_name(t).to_string(),
            demand: d,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIG1: &str = r#"{
        "nodes": ["1", "2", "3", "4"],
        "links": [
            {"id": "1-3", "src": "1", "dst": "3", "capacity": 1},
            {"id": "3-4", "src": "3", "dst": "4", "capacity": 1},
            {"id": "1-2", "src": "1", "dst": "2", "capacity": 1},
            {"id": "2-3", "src": "2", "dst": "3", "capacity": 1}
        ]
    }"#;

    #[test]
    fn parses_topology() {
        let topo = parse_topology(FIG1).unwrap();
        assert_eq!(topo.num_nodes(), 4);
        assert_eq!(topo.num_links(), 4);
        assert_eq!(topo.link(topo.link_by_id("2-3").unwrap()).capacity, 1.0);
    }

    #[test]
    fn rejects_bad_topologies() {
        assert!(parse_topology(r#"{"nodes": ["a"], "links": [{"id": "x", "src": "a", "dst": "b", "capacity": 1}]}"#).is_err());
        assert!(parse_topology(r#"{"nodes": ["a","b"], "links": [{"id": "x", "src": "a", "dst": "b", "capacity": -1}]}"#).is_err());
        assert!(parse_topology(r#"{"nodes": ["a","b"], "links": [{"id": "x", "src": "a", "dst": "b", "capacity": "NaN"}]}"#).is_err());
        assert!(parse_topology(r#"{"nodes": ["a","b"]}"#).is_err());
        assert!(parse_topology("").is_err());
    }

    #[test]
    fn parses_demands() {
        let topo = parse_topology(FIG1).unwrap();
        let dm = read_demands(&topo, "src,dst,demand\n1,3,1\n3,4,0.9\n").unwrap();
        assert_eq!(dm.len(), 2);
        assert!((dm.total() - 1.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_demands() {
        assert!(parse_demand_csv("src,dst,demand\n1,3,NaN\n").is_err());
        assert!(parse_demand_csv("src,dst,demand\n1,3,-0.5\n").is_err());
        assert!(parse_demand_csv("src,dst,demand\n1,3,inf\n").is_err());
        assert!(parse_demand_csv("a,b,c\n1,3,1\n").is_err());
        assert!(parse_demand_csv("src,dst,demand\n1,3\n").is_err());
        let topo = parse_topology(FIG1).unwrap();
        assert!(read_demands(&topo, "src,dst,demand\n1,9,1\n").is_err());
        assert!(read_demands(&topo, "src,dst,demand\n1,1,1\n").is_err());
        assert!(read_demands(&topo, "src,dst,demand\n1,3,1\n1,3,2\n").is_err());
    }

    proptest! {
        #[test]
        fn demand_csv_roundtrip(ds in proptest::collection::vec(0.0f64..1e6, 12)) {
            let topo = parse_topology(FIG1).unwrap();
            let names = ["1", "2", "3", "4"];
            let mut entries = Vec::new();
            let mut k = 0;
            for s in names {
                for t in names {
                    if s != t {
                        entries.push((s, t, ds[k]));
                        k += 1;
                    }
                }
            }
            let dm = DemandMatrix::from_named(&topo, entries).unwrap();
            let text = demands_to_csv(&topo, &dm).unwrap();
            prop_assert_eq!(read_demands(&topo, &text).unwrap(), dm);
        }
    }
}
