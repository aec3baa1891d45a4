//! Static routing tree rooted at the Coordinator, plus the parent-side
//! buffers that hold frames for sleeping End Device children.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::frame::MessageFrame;
use crate::model::{NodeId, NodeRole, ScenarioConfig};
use crate::propagation::{is_connected, link_budget};

/// Frames a parent holds per sleeping child before dropping the oldest.
pub const BUFFER_CAPACITY: usize = 16;

/// A frame waiting at a parent, tagged with the simulator's delivery ticket.
#[derive(Debug, Clone, PartialEq)]
pub struct ParkedFrame {
    pub ticket: u64,
    pub frame: MessageFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParentEntry {
    pub parent: NodeId,
    /// Hops from this node to the Coordinator.
    pub hops: u32,
    /// Power this node receives from its parent, dBm.
    pub rx_power_dbm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParentTable {
    root: Option<NodeId>,
    entries: BTreeMap<NodeId, ParentEntry>,
    unreachable: BTreeSet<NodeId>,
    buffers: BTreeMap<NodeId, VecDeque<ParkedFrame>>,
}

/// Received power from `from` at `to` if the link closes in both
/// directions, otherwise `None`.
fn usable_link(cfg: &ScenarioConfig, from: NodeId, to: NodeId) -> Option<f64> {
    let down = link_budget(cfg, from, to).ok()?;
    let up = link_budget(cfg, to, from).ok()?;
    let sens_to = cfg.node(to)?.radio.sensitivity_dbm;
    let sens_from = cfg.node(from)?.radio.sensitivity_dbm;
    (is_connected(&down, sens_to) && is_connected(&up, sens_from)).then_some(down.received_power)
}

/// Highest received power first, then the lowest id.
fn better(candidate: (NodeId, f64), best: Option<(NodeId, f64)>) -> bool {
    match best {
        None => true,
        Some((id, p)) => candidate.1 > p || (candidate.1 == p && candidate.0 < id),
    }
}

/// Builds the routing tree over enabled nodes. Routers attach breadth-first
/// (fewest hops to the Coordinator, then strongest link, then lowest id);
/// End Devices attach to the strongest connected Coordinator or Router.
pub fn build_parent_table(cfg: &ScenarioConfig) -> ParentTable {
    let mut table = ParentTable::default();
    let enabled: Vec<_> = cfg.nodes.iter().filter(|n| n.enabled).collect();
    let Some(root) = enabled.iter().find(|n| n.role == NodeRole::Coordinator) else {
        table.unreachable = enabled.iter().map(|n| n.id).collect();
        return table;
    };
    table.root = Some(root.id);

    let mut attached: BTreeMap<NodeId, u32> = BTreeMap::from([(root.id, 0)]);
    let mut pending: BTreeSet<NodeId> = enabled
        .iter()
        .filter(|n| n.role == NodeRole::Router)
        .map(|n| n.id)
        .collect();
    let mut frontier = vec![root.id];
    let mut level = 0;
    while !frontier.is_empty() && !pending.is_empty() {
        let mut next = Vec::new();
        for &r in &pending {
            let mut best = None;
            for &p in &frontier {
                if let Some(power) = usable_link(cfg, p, r) {
                    if better((p, power), best) {
                        best = Some((p, power));
                    }
                }
            }
            if let Some((parent, rx_power_dbm)) = best {
                table.entries.insert(
                    r,
                    ParentEntry {
                        parent,
                        hops: level + 1,
                        rx_power_dbm,
                    },
                );
                next.push(r);
            }
        }
        for r in &next {
            pending.remove(r);
            attached.insert(*r, level + 1);
        }
        frontier = next;
        level += 1;
    }
    table.unreachable.extend(pending);

    for ed in enabled.iter().filter(|n| n.role == NodeRole::EndDevice) {
        let mut best = None;
        for &p in attached.keys() {
            if let Some(power) = usable_link(cfg, p, ed.id) {
                if better((p, power), best) {
                    best = Some((p, power));
                }
            }
        }
        match best {
            Some((parent, rx_power_dbm)) => {
                table.entries.insert(
                    ed.id,
                    ParentEntry {
                        parent,
                        hops: attached[&parent] + 1,
                        rx_power_dbm,
                    },
                );
            }
            None => {
                table.unreachable.insert(ed.id);
            }
        }
    }
    table
}

impl ParentTable {
    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.entries.get(&node).map(|e| e.parent)
    }

    pub fn entry(&self, node: NodeId) -> Option<&ParentEntry> {
        self.entries.get(&node)
    }

    pub fn entries(&self) -> &BTreeMap<NodeId, ParentEntry> {
        &self.entries
    }

    pub fn unreachable(&self) -> &BTreeSet<NodeId> {
        &self.unreachable
    }

    pub fn is_reachable(&self, node: NodeId) -> bool {
        Some(node) == self.root || self.entries.contains_key(&node)
    }

    /// Nodes from `node` up to and including the root.
    fn ancestry(&self, node: NodeId) -> Option<Vec<NodeId>> {
        if !self.is_reachable(node) {
            return None;
        }
        let mut chain = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            if chain.contains(&p) {
                return None;
            }
            chain.push(p);
            cur = p;
        }
        (Some(cur) == self.root).then_some(chain)
    }

    /// Tree path from `src` to `dst`, both ends included.
    pub fn route(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        let up = self.ancestry(src)?;
        let down = self.ancestry(dst)?;
        let (i, j) = up
            .iter()
            .enumerate()
            .find_map(|(i, a)| down.iter().position(|b| b == a).map(|j| (i, j)))?;
        let mut path: Vec<NodeId> = up[..=i].to_vec();
        path.extend(down[..j].iter().rev());
        Some(path)
    }

    /// Parks a frame for a sleeping child. Returns the frame evicted to
    /// make room, if the buffer was full.
    pub fn park(&mut self, child: NodeId, parked: ParkedFrame) -> Option<ParkedFrame> {
        let buf = self.buffers.entry(child).or_default();
        let evicted = if buf.len() >= BUFFER_CAPACITY {
            buf.pop_front()
        } else {
            None
        };
        buf.push_back(parked);
        evicted
    }

    pub fn drain(&mut self, child: NodeId) -> Vec<ParkedFrame> {
        self.buffers
            .get_mut(&child)
            .map(|b| b.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn buffered(&self, child: NodeId) -> usize {
        self.buffers.get(&child).map_or(0, VecDeque::len)
    }
}
