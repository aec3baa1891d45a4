//! Run outputs: the JSON/text report and the sample log.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{SimTime, TRACE_HEADER};
use crate::model::{NodeId, NodeRole};
use crate::power::{estimate_lifetime, PowerState};
use crate::protocol::SampleRecord;
use crate::world::{RunStats, Simulation};

pub const SAMPLES_HEADER: &str = "ticks,node,sensor,value,sampled_ticks,rssi_dbm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub sleeping_s: f64,
    pub awake_idle_s: f64,
    pub transmitting_s: f64,
    pub consumed_mah: f64,
    pub average_ma: f64,
    pub capacity_mah: Option<f64>,
    pub remaining_mah: Option<f64>,
    /// Capacity divided by the run's average current.
    pub projected_lifetime_h: Option<f64>,
    pub died_at_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationNote {
    pub requested_s: f64,
    pub poll_period_s: f64,
    pub n: u32,
    pub effective_s: f64,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: NodeId,
    pub role: NodeRole,
    pub enabled: bool,
    pub reachable: bool,
    pub parent: Option<NodeId>,
    pub hops: Option<u32>,
    pub power: Option<PowerSummary>,
    pub samples: u64,
    pub rounds_completed: u64,
    pub rounds_aborted: u64,
    pub frames_sent: u64,
    pub external_wakes: u64,
    pub poll_wakes: u64,
    pub quantization: Option<QuantizationNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub events_processed: u64,
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub frames_parked: u64,
    pub hop_transmissions: u64,
    pub rounds_completed: u64,
    pub rounds_aborted: u64,
    pub samples: u64,
}

impl From<&RunStats> for Totals {
    fn from(s: &RunStats) -> Self {
        Self {
            events_processed: s.events_processed,
            frames_sent: s.frames_sent,
            frames_delivered: s.frames_delivered,
            frames_dropped: s.frames_dropped,
            frames_parked: s.frames_parked,
            hop_transmissions: s.hop_transmissions,
            rounds_completed: s.rounds_completed,
            rounds_aborted: s.rounds_aborted,
            samples: s.samples_persisted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub until_s: f64,
    pub nodes: Vec<NodeReport>,
    pub totals: Totals,
}

impl RunReport {
    pub fn from_simulation(sim: &Simulation) -> Self {
        let cfg = sim.config();
        let table = sim.parent_table();
        let profile = cfg.consumption;
        let nodes = cfg
            .nodes
            .iter()
            .map(|spec| {
                let id = spec.id;
                let counters = sim.counters(id).cloned().unwrap_or_default();
                let power = sim.ledger(id).map(|l| {
                    let battery = sim.battery(id);
                    let avg = l.average_current_ma();
                    PowerSummary {
                        sleeping_s: l.duration(PowerState::Sleeping).as_secs_f64(),
                        awake_idle_s: l.duration(PowerState::AwakeIdle).as_secs_f64(),
                        transmitting_s: l.duration(PowerState::Transmitting).as_secs_f64(),
                        consumed_mah: l.consumed_mah,
                        average_ma: avg,
                        capacity_mah: battery.map(|b| b.capacity_mah),
                        remaining_mah: battery.map(|b| b.remaining_mah),
                        projected_lifetime_h: battery
                            .and_then(|b| estimate_lifetime(b.capacity_mah, avg).ok()),
                        died_at_s: l.died_at.map(SimTime::as_secs_f64),
                    }
                });
                debug_assert!(sim.ledger(id).is_none_or(|l| l.is_balanced(&profile)));
                let quantization = sim.cyclic(id).map(|c| QuantizationNote {
                    requested_s: c.t_external_s,
                    poll_period_s: c.t_poll_s,
                    n: c.n,
                    effective_s: c.effective_period_s(),
                    error_pct: c.quantization_error() * 100.0,
                });
                NodeReport {
                    id,
                    role: spec.role,
                    enabled: spec.enabled,
                    reachable: spec.enabled && table.is_reachable(id),
                    parent: table.parent(id),
                    hops: table.entry(id).map(|e| e.hops),
                    power,
                    samples: counters.samples,
                    rounds_completed: counters.rounds_completed,
                    rounds_aborted: counters.rounds_aborted,
                    frames_sent: counters.frames_sent,
                    external_wakes: counters.external_wakes,
                    poll_wakes: counters.poll_wakes,
                    quantization,
                }
            })
            .collect();
        Self {
            seed: cfg.seed,
            until_s: sim.now().as_secs_f64(),
            nodes,
            totals: sim.stats().into(),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.totals;
        let _ = writeln!(s, "run: seed {} horizon {:.0} s", self.seed, self.until_s);
        let _ = writeln!(
            s,
            "frames: sent {} delivered {} dropped {} parked {} hops {}",
            t.frames_sent, t.frames_delivered, t.frames_dropped, t.frames_parked, t.hop_transmissions
        );
        let _ = writeln!(
            s,
            "rounds: completed {} aborted {}; samples {}",
            t.rounds_completed, t.rounds_aborted, t.samples
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>4}  {:<12} {:<8} {:>6} {:>8} {:>7} {:>7} {:>10} {:>9} {:>10}",
            "node", "role", "parent", "hops", "samples", "rounds", "aborts", "avg mA", "mAh", "life h"
        );
        for n in &self.nodes {
            let parent = match (n.enabled, n.reachable, n.parent) {
                (false, _, _) => "disabled".to_string(),
                (true, false, _) => "UNREACH".to_string(),
                (true, true, Some(p)) => p.to_string(),
                (true, true, None) => "-".to_string(),
            };
            let hops = n.hops.map_or("-".to_string(), |h| h.to_string());
            let (avg, mah, life) = match &n.power {
                Some(p) => (
                    format!("{:.3}", p.average_ma),
                    format!("{:.3}", p.consumed_mah),
                    p.projected_lifetime_h
                        .map_or("-".to_string(), |h| format!("{h:.2}")),
                ),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let _ = writeln!(
                s,
                "{:>4}  {:<12} {:<8} {:>6} {:>8} {:>7} {:>7} {:>10} {:>9} {:>10}",
                n.id.to_string(),
                n.role.to_string(),
                parent,
                hops,
                n.samples,
                n.rounds_completed,
                n.rounds_aborted,
                avg,
                mah,
                life
            );
        }
        let quantized: Vec<_> = self
            .nodes
            .iter()
            .filter_map(|n| n.quantization.as_ref().map(|q| (n.id, q)))
            .collect();
        if !quantized.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "sampling period quantization (poll grid):");
            for (id, q) in quantized {
                let _ = writeln!(
                    s,
                    "  node {id}: requested {} s, poll {} s, n = {}, effective {} s ({:+.2}%)",
                    q.requested_s, q.poll_period_s, q.n, q.effective_s, q.error_pct
                );
            }
        }
        for n in self
            .nodes
            .iter()
            .filter_map(|n| n.power.as_ref().and_then(|p| p.died_at_s).map(|d| (n.id, d)))
        {
            let _ = writeln!(s, "node {} battery exhausted at {:.3} s", n.0, n.1);
        }
        s
    }
}

/// One CSV row per record, in persistence order.
pub fn write_samples_csv<W: Write>(w: &mut W, samples: &[SampleRecord]) -> io::Result<()> {
    writeln!(w, "{SAMPLES_HEADER}")?;
    for r in samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.received_at.ticks(),
            r.node,
            r.sensor,
            r.value,
            r.sampled_at.ticks(),
            r.rssi_dbm
        )?;
    }
    Ok(())
}

pub fn write_trace_tsv<W: Write>(w: &mut W, sim: &Simulation) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for line in sim.trace() {
        writeln!(w, "{line}")?;
    }
    Ok(())
}
