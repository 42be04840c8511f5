//! Network, demand and flow data model.
//!
//! Nodes and links are addressed by dense indices ([`NodeId`], [`LinkId`]) into a
//! [`Topology`]. Node names are opaque strings; wherever a deterministic tie-break is
//! needed the lexicographic order of the names is used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl LinkId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity: f64,
}

/// Directed graph with per-link capacities. Parallel links are allowed.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<String>,
    links: Vec<Link>,
    node_index: BTreeMap<String, NodeId>,
    link_index: BTreeMap<String, LinkId>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
    lex_rank: Vec<usize>,
}

impl Topology {
    /// Builds a topology from node names and `(id, src, dst, capacity)` tuples.
    pub fn new<N, L>(nodes: N, links: L) -> Result<Self>
    where
        N: IntoIterator,
        N::Item: Into<String>,
        L: IntoIterator<Item = (String, String, String, f64)>,
    {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut node_index = BTreeMap::new();
        for (i, name) in nodes.iter().enumerate() {
            if node_index.insert(name.clone(), NodeId(i)).is_some() {
                return Err(Error::Topology(format!("duplicate node `{name}`")));
            }
        }

        let mut out_links = vec![Vec::new(); nodes.len()];
        let mut in_links = vec![Vec::new(); nodes.len()];
        let mut link_index = BTreeMap::new();
        let mut built = Vec::new();
        for (id, src, dst, capacity) in links {
            let s = *node_index
                .get(&src)
                .ok_or_else(|| Error::UnknownNode(src.clone()))?;
            let d = *node_index
                .get(&dst)
                .ok_or_else(|| Error::UnknownNode(dst.clone()))?;
            if s == d {
                return Err(Error::Topology(format!("link `{id}` is a self loop")));
            }
            if !(capacity.is_finite() && capacity > 0.0) {
                return Err(Error::Topology(format!(
                    "link `{id}` has invalid capacity {capacity}"
                )));
            }
            let lid = LinkId(built.len());
            if link_index.insert(id.clone(), lid).is_some() {
                return Err(Error::Topology(format!("duplicate link id `{id}`")));
            }
            out_links[s.index()].push(lid);
            in_links[d.index()].push(lid);
            built.push(Link {
                id,
                src: s,
                dst: d,
                capacity,
            });
        }

        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        let mut lex_rank = vec![0; nodes.len()];
        for (rank, &n) in order.iter().enumerate() {
            lex_rank[n] = rank;
        }

        Ok(Topology {
            nodes,
            links: built,
            node_index,
            link_index,
            out_links,
            in_links,
            lex_rank,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn node_name(&self, n: NodeId) -> &str {
        &self.nodes[n.index()]
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.node_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn link(&self, l: LinkId) -> &Link {
        &self.links[l.index()]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_by_id(&self, id: &str) -> Result<LinkId> {
        self.link_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownLink(id.to_string()))
    }

    /// First link from `src` to `dst` in declaration order.
    pub fn find_link(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.out_links[src.index()]
            .iter()
            .copied()
            .find(|&l| self.links[l.index()].dst == dst)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> {
        (0..self.links.len()).map(LinkId)
    }

    pub fn out_links(&self, n: NodeId) -> &[LinkId] {
        &self.out_links[n.index()]
    }

    pub fn in_links(&self, n: NodeId) -> &[LinkId] {
        &self.in_links[n.index()]
    }

    pub fn capacity(&self, l: LinkId) -> f64 {
        self.links[l.index()].capacity
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    pub fn max_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    pub fn total_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).sum()
    }

    /// Position of the node in the lexicographic order of node names.
    pub fn lex_rank(&self, n: NodeId) -> usize {
        self.lex_rank[n.index()]
    }

    /// Compares two nodes by name.
    pub fn cmp_nodes(&self, a: NodeId, b: NodeId) -> std::cmp::Ordering {
        self.lex_rank[a.index()].cmp(&self.lex_rank[b.index()])
    }
}

/// Demand `d_s^t` per ordered node pair; absent pairs are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandMatrix {
    entries: BTreeMap<(NodeId, NodeId), f64>,
}

impl DemandMatrix {
    pub fn new(entries: impl IntoIterator<Item = ((NodeId, NodeId), f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((s, t), d) in entries {
            if s == t {
                return Err(Error::Demand(format!("self pair for node #{}", s.0)));
            }
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::Demand(format!("invalid demand {d}")));
            }
            if map.insert((s, t), d).is_some() {
                return Err(Error::Demand(format!("duplicate pair (#{}, #{})", s.0, t.0)));
            }
        }
        Ok(DemandMatrix { entries: map })
    }

    /// Resolves node names against `topo`.
    pub fn from_named<'a>(
        topo: &Topology,
        entries: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
    ) -> Result<Self> {
        let mut resolved = Vec::new();
        for (s, t, d) in entries {
            let (si, ti) = (topo.node(s)?, topo.node(t)?);
            if si == ti {
                return Err(Error::Demand(format!("self pair for node `{s}`")));
            }
            resolved.push(((si, ti), d));
        }
        Self::new(resolved)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, s: NodeId, t: NodeId) -> f64 {
        self.entries.get(&(s, t)).copied().unwrap_or(0.0)
    }

    /// All stored entries, including explicit zeros, in `(src, dst)` order.
    pub fn entries(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Pairs with strictly positive demand.
    pub fn positive_pairs(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.entries
            .iter()
            .filter(|(_, &d)| d > 0.0)
            .map(|(&(s, t), &d)| (s, t, d))
    }

    /// Destinations with at least one positive demand, ascending by index.
    pub fn destinations(&self) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.positive_pairs().map(|(_, t, _)| t).collect();
        set.into_iter().collect()
    }

    /// Positive demands toward `t` as `(source, demand)`.
    pub fn demands_to(&self, t: NodeId) -> Vec<(NodeId, f64)> {
        self.positive_pairs()
            .filter(|&(_, dst, _)| dst == t)
            .map(|(s, _, d)| (s, d))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn max_demand(&self) -> f64 {
        self.entries.values().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|&d| d == 0.0)
    }

    /// Every entry multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Domain(format!("scale factor must be positive, got {k}")));
        }
        Ok(DemandMatrix {
            entries: self.entries.iter().map(|(&p, &d)| (p, d * k)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-destination link flows `f^t`. Only destinations that carry traffic are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowAssignment {
    num_links: usize,
    per_dest: BTreeMap<NodeId, Vec<f64>>,
}

impl FlowAssignment {
    pub fn new(num_links: usize) -> Self {
        FlowAssignment {
            num_links,
            per_dest: BTreeMap::new(),
        }
    }

    pub fn zero(topo: &Topology) -> Self {
        Self::new(topo.num_links())
    }

    /// Builds an assignment from `dest name -> link id -> flow` maps.
    pub fn from_named<'a>(
        topo: &Topology,
        flows: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
    ) -> Result<Self> {
        let mut fa = Self::zero(topo);
        for (dest, link, f) in flows {
            let t = topo.node(dest)?;
            let l = topo.link_by_id(link)?;
            fa.dest_mut(t)[l.index()] += f;
        }
        Ok(fa)
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn dest_mut(&mut self, t: NodeId) -> &mut Vec<f64> {
        let n = self.num_links;
        self.per_dest.entry(t).or_insert_with(|| vec![0.0; n])
    }

    pub fn set_dest(&mut self, t: NodeId, flows: Vec<f64>) {
        self.per_dest.insert(t, flows);
    }

    pub fn dest(&self, t: NodeId) -> Option<&[f64]> {
        self.per_dest.get(&t).map(Vec::as_slice)
    }

    pub fn destinations(&self) -> impl Iterator<Item = (NodeId, &[f64])> {
        self.per_dest.iter().map(|(&t, v)| (t, v.as_slice()))
    }

    /// Aggregate load `f_ij = sum_t f^t_ij` per link.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut agg = vec![0.0; self.num_links];
        for flows in self.per_dest.values() {
            for (a, f) in agg.iter_mut().zip(flows) {
                *a += f;
            }
        }
        agg
    }
}

/// Load, utilization and spare capacity of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLoad {
    pub load: f64,
    pub utilization: f64,
    pub spare: f64,
}

pub fn aggregate_loads(topo: &Topology, fa: &FlowAssignment) -> Result<Vec<LinkLoad>> {
    check_structure(topo, fa)?;
    Ok(loads_from_aggregate(topo, &fa.aggregate()))
}

pub fn loads_from_aggregate(topo: &Topology, agg: &[f64]) -> Vec<LinkLoad> {
    topo.links()
        .iter()
        .zip(agg)
        .map(|(link, &load)| LinkLoad {
            load,
            utilization: load / link.capacity,
            spare: link.capacity - load,
        })
        .collect()
}

/// Outcome of checking a flow against the multi-commodity flow constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowReport {
    pub feasible: bool,
    /// Largest `f_ij - c_ij` (negative when every link has headroom).
    pub max_capacity_violation: f64,
    /// Largest `|outflow - inflow - d_s^t|` over destinations and non-destination nodes.
    pub max_conservation_residual: f64,
    /// Smallest per-destination link flow (0 for an empty assignment).
    pub min_flow: f64,
}

fn check_structure(topo: &Topology, fa: &FlowAssignment) -> Result<()> {
    if fa.num_links() != topo.num_links() {
        return Err(Error::Structural(format!(
            "flow assignment covers {} links, topology has {}",
            fa.num_links(),
            topo.num_links()
        )));
    }
    for (t, flows) in fa.destinations() {
        if t.index() >= topo.num_nodes() {
            return Err(Error::Structural(format!("destination #{} not in topology", t.0)));
        }
        if flows.len() != topo.num_links() {
            return Err(Error::Structural(format!(
                "destination `{}` has {} link entries",
                topo.node_name(t),
                flows.len()
            )));
        }
    }
    Ok(())
}

/// Checks capacity, conservation and non-negativity within `tol`.
pub fn validate_flow(
    topo: &Topology,
    dm: &DemandMatrix,
    fa: &FlowAssignment,
    tol: f64,
) -> Result<FlowReport> {
    check_structure(topo, fa)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    for ((s, t), _) in dm.entries() {
        if s.index() >= topo.num_nodes() || t.index() >= topo.num_nodes() {
            return Err(Error::Structural("demand references unknown node".into()));
        }
    }

    let agg = fa.aggregate();
    let max_capacity_violation = topo
        .links()
        .iter()
        .zip(&agg)
        .map(|(l, f)| f - l.capacity)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_capacity_violation = if topo.num_links() == 0 {
        0.0
    } else {
        max_capacity_violation
    };

    let mut min_flow: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    let zeros = vec![0.0; topo.num_links()];
    let mut dests: BTreeSet<NodeId> = dm.destinations().into_iter().collect();
    dests.extend(fa.destinations().map(|(t, _)| t));
    for t in dests {
        let flows = fa.dest(t).unwrap_or(&zeros);
        min_flow = flows.iter().copied().fold(min_flow, f64::min);
        for s in topo.node_ids().filter(|&s| s != t) {
            let out: f64 = topo.out_links(s).iter().map(|l| flows[l.index()]).sum();
            let inn: f64 = topo.in_links(s).iter().map(|l| flows[l.index()]).sum();
            max_residual = max_residual.max((out - inn - dm.get(s, t)).abs());
        }
    }

    Ok(FlowReport {
        feasible: max_capacity_violation <= tol && max_residual <= tol && min_flow >= -tol,
        max_capacity_violation,
        max_conservation_residual: max_residual,
        min_flow,
    })
}

impl fmt::Display for FlowReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "feasible={} capacity_violation={:.3e} conservation_residual={:.3e} min_flow={:.3e}",
            self.feasible, self.max_capacity_violation, self.max_conservation_residual, self.min_flow
        )
    }
}
