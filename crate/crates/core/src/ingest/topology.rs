use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use super::parse::{read_table, INVENTORY_HEADER};
use super::{DimmId, DimmRecord, IngestError, Manufacturer, NodeId, RackId, SocketId, Technology};
use crate::timegrid::Scope;

/// DIMM inventory with rack → node → socket → DIMM containment indexes.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    dimms: Vec<DimmRecord>,
    by_id: HashMap<DimmId, usize>,
    node_rack: BTreeMap<NodeId, RackId>,
    rack_nodes: BTreeMap<RackId, BTreeSet<NodeId>>,
    node_sockets: BTreeMap<NodeId, BTreeSet<SocketId>>,
}

impl Topology {
    /// Index a DIMM list. Error line numbers assume one header line before
    /// the records.
    pub fn new(dimms: Vec<DimmRecord>) -> Result<Self, IngestError> {
        let lines: Vec<u64> = (0..dimms.len() as u64).map(|i| i + 2).collect();
        Self::build(dimms, &lines)
    }

    fn build(dimms: Vec<DimmRecord>, lines: &[u64]) -> Result<Self, IngestError> {
        let mut topo = Topology::default();
        for (i, d) in dimms.iter().enumerate() {
            let line = lines[i];
            if topo.by_id.insert(d.dimm.clone(), i).is_some() {
                return Err(IngestError::DuplicateDimm { line, dimm: d.dimm.to_string() });
            }
            if let Some(rack) = topo.node_rack.get(&d.node) {
                if *rack != d.rack {
                    return Err(IngestError::InconsistentContainment {
                        line,
                        reason: format!("node `{}` declared under racks `{}` and `{}`", d.node, rack, d.rack),
                    });
                }
            }
            topo.node_rack.insert(d.node.clone(), d.rack.clone());
            topo.rack_nodes.entry(d.rack.clone()).or_default().insert(d.node.clone());
            topo.node_sockets.entry(d.node.clone()).or_default().insert(d.socket.clone());
        }
        topo.dimms = dimms;
        Ok(topo)
    }

    pub fn dimms(&self) -> &[DimmRecord] {
        &self.dimms
    }

    pub fn is_empty(&self) -> bool {
        self.dimms.is_empty()
    }

    pub fn dimm(&self, id: &DimmId) -> Option<&DimmRecord> {
        self.by_id.get(id).map(|&i| &self.dimms[i])
    }

    pub fn rack_of(&self, node: &NodeId) -> Option<&RackId> {
        self.node_rack.get(node)
    }

    pub fn contains_node(&self, node: &NodeId) -> bool {
        self.node_rack.contains_key(node)
    }

    pub fn racks(&self) -> impl Iterator<Item = &RackId> {
        self.rack_nodes.keys()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.node_rack.keys()
    }

    pub fn nodes_in_rack<'a>(&'a self, rack: &RackId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.rack_nodes.get(rack).into_iter().flatten()
    }

    /// `(node, socket)` pairs in node order.
    pub fn sockets(&self) -> impl Iterator<Item = (&NodeId, &SocketId)> {
        self.node_sockets.iter().flat_map(|(n, socks)| socks.iter().map(move |s| (n, s)))
    }

    pub fn rack_count(&self) -> usize {
        self.rack_nodes.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_rack.len()
    }

    pub fn socket_count(&self) -> usize {
        self.node_sockets.values().map(BTreeSet::len).sum()
    }

    /// Number of test scopes: the whole system plus every rack, node and
    /// socket, and every DIMM when `include_dimms` is set.
    pub fn scope_count(&self, include_dimms: bool) -> usize {
        1 + self.rack_count()
            + self.node_count()
            + self.socket_count()
            + if include_dimms { self.dimms.len() } else { 0 }
    }

    /// All scopes in enumeration order: system, racks, nodes, sockets, DIMMs.
    pub fn scopes(&self, include_dimms: bool) -> Vec<Scope> {
        let mut out = Vec::with_capacity(self.scope_count(include_dimms));
        out.push(Scope::System);
        out.extend(self.racks().cloned().map(Scope::Rack));
        out.extend(self.nodes().cloned().map(Scope::Node));
        out.extend(self.sockets().map(|(n, s)| Scope::Socket(n.clone(), s.clone())));
        if include_dimms {
            let mut ids: Vec<&DimmId> = self.by_id.keys().collect();
            ids.sort();
            out.extend(ids.into_iter().cloned().map(Scope::Dimm));
        }
        out
    }

    /// Whether `dimm` lies inside `scope`.
    pub fn scope_contains(&self, scope: &Scope, dimm: &DimmRecord) -> bool {
        match scope {
            Scope::System => true,
            Scope::Rack(r) => dimm.rack == *r,
            Scope::Node(n) => dimm.node == *n,
            Scope::Socket(n, s) => dimm.node == *n && dimm.socket == *s,
            Scope::Dimm(d) => dimm.dimm == *d,
        }
    }

    /// DIMMs inside `scope`.
    pub fn dimms_in<'a>(&'a self, scope: &'a Scope) -> impl Iterator<Item = &'a DimmRecord> + 'a {
        self.dimms.iter().filter(move |d| self.scope_contains(scope, d))
    }
}

/// Parse a `dimm,node,socket,rack,manufacturer,technology,capacity_mb`
/// inventory.
pub fn load_inventory<R: Read>(source: R) -> Result<Topology, IngestError> {
    let rows = read_table(source, INVENTORY_HEADER)?;
    let mut dimms = Vec::with_capacity(rows.len());
    let mut lines = Vec::with_capacity(rows.len());
    for row in &rows {
        let manufacturer = Manufacturer::from_token(row.get(4))
            .ok_or_else(|| row.err(format!("unknown manufacturer `{}`", row.get(4))))?;
        let technology = Technology::from_token(row.get(5))
            .ok_or_else(|| row.err(format!("unknown technology `{}`", row.get(5))))?;
        let capacity_mb = match row.get(6).parse::<u64>() {
            Ok(v) if v > 0 => v,
            _ => return Err(row.err(format!("capacity_mb must be a positive integer, got `{}`", row.get(6)))),
        };
        dimms.push(DimmRecord {
            dimm: DimmId::new(row.id(0, "dimm")?),
            node: NodeId::new(row.id(1, "node")?),
            socket: SocketId::new(row.id(2, "socket")?),
            rack: RackId::new(row.id(3, "rack")?),
            manufacturer,
            technology,
            capacity_mb,
        });
        lines.push(row.line);
    }
    Topology::build(dimms, &lines)
}
