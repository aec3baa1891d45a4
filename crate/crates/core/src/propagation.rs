//! Radio attenuation and received power.
//!
//! Free-space loss is interpolated from measured anchors, linearly in
//! `log10(distance)`. Obstacle and floor losses add on top. Shadowing only
//! perturbs individual RSSI samples; the connectivity decision uses the
//! deterministic mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RngStream;
use crate::model::{obstacles_on_path, ModelError, NodeId, PathObstruction, ScenarioConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("channel map is empty")]
    EmptyChannelMap,
    #[error("path-loss table needs at least two anchors with increasing distance and non-decreasing loss")]
    InvalidTable,
}

/// Measured free-space attenuation anchors `(meters, dB)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossTable {
    anchors: Vec<(f64, f64)>,
}

impl Default for PathLossTable {
    fn default() -> Self {
        Self {
            anchors: vec![
                (0.5, 0.00),
                (1.0, 8.16),
                (2.0, 11.65),
                (4.0, 19.91),
                (8.0, 23.93),
                (11.0, 29.61),
            ],
        }
    }
}

impl PathLossTable {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self, PropagationError> {
        let ok = anchors.len() >= 2
            && anchors
                .iter()
                .all(|&(d, l)| d > 0.0 && d.is_finite() && l.is_finite())
            && anchors.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1);
        if ok {
            Ok(Self { anchors })
        } else {
            Err(PropagationError::InvalidTable)
        }
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    fn segment_value(&self, i: usize, d: f64) -> f64 {
        let (d0, l0) = self.anchors[i];
        let (d1, l1) = self.anchors[i + 1];
        let f = (d / d0).log10() / (d1 / d0).log10();
        l0 + f * (l1 - l0)
    }
}

/// Free-space loss at `d` meters. Clamps to the first anchor's loss below
/// the first anchor distance, hits anchors exactly, interpolates in
/// `log10(d)` between them and extrapolates the last segment's slope.
pub fn free_space_loss(table: &PathLossTable, d: f64) -> Result<f64, PropagationError> {
    if !(d > 0.0) {
        return Err(PropagationError::NonPositiveDistance(d));
    }
    let a = &table.anchors;
    if d <= a[0].0 {
        return Ok(a[0].1);
    }
    if let Some(&(_, l)) = a.iter().find(|(ad, _)| *ad == d) {
        return Ok(l);
    }
    let i = match a.iter().position(|(ad, _)| *ad > d) {
        Some(j) => j - 1,
        None => a.len() - 2,
    };
    Ok(table.segment_value(i, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleLoss {
    pub kind: String,
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub distance: f64,
    pub free_space_loss: f64,
    pub obstacle_losses: Vec<ObstacleLoss>,
    pub total_attenuation: f64,
    pub tx_power: f64,
    pub received_power: f64,
}

impl LinkBudget {
    pub fn obstacle_total(&self) -> f64 {
        self.obstacle_losses.iter().map(|o| o.loss_db).sum()
    }
}

/// Budget for a transmission from `a` to `b` using the default table.
pub fn link_budget(cfg: &ScenarioConfig, a: NodeId, b: NodeId) -> Result<LinkBudget, ModelError> {
    link_budget_with(cfg, &PathLossTable::default(), a, b)
}

pub fn link_budget_with(
    cfg: &ScenarioConfig,
    table: &PathLossTable,
    a: NodeId,
    b: NodeId,
) -> Result<LinkBudget, ModelError> {
    let path = obstacles_on_path(cfg, a, b)?;
    let na = cfg.require_node(a)?;
    let nb = cfg.require_node(b)?;
    let distance = na.position.distance_2d(&nb.position);
    // Nodes stacked on different floors have zero planar distance.
    let free_space_loss = if distance > 0.0 {
        free_space_loss(table, distance).expect("positive distance")
    } else {
        table.anchors[0].1
    };
    let obstacle_losses: Vec<ObstacleLoss> = path
        .iter()
        .map(|p| match *p {
            PathObstruction::Obstacle { kind, attenuation_db } => ObstacleLoss {
                kind: kind.name().to_string(),
                loss_db: attenuation_db,
            },
            PathObstruction::FloorCrossing => ObstacleLoss {
                kind: "floor_crossing".to_string(),
                loss_db: cfg.floor_loss_db,
            },
        })
        .collect();
    let total_attenuation = free_space_loss + obstacle_losses.iter().map(|o| o.loss_db).sum::<f64>();
    let tx_power = na.radio.tx_power_dbm;
    Ok(LinkBudget {
        distance,
        free_space_loss,
        obstacle_losses,
        total_attenuation,
        tx_power,
        received_power: tx_power - total_attenuation,
    })
}

/// Inclusive threshold on the deterministic received power.
pub fn is_connected(budget: &LinkBudget, sensitivity_dbm: f64) -> bool {
    budget.received_power >= sensitivity_dbm
}

/// Grand mean of `repetitions * n_messages` shadowed RSSI samples.
pub fn measure_rssi(
    budget: &LinkBudget,
    sigma_db: f64,
    n_messages: usize,
    repetitions: usize,
    rng: &mut RngStream,
) -> f64 {
    if sigma_db == 0.0 {
        return budget.received_power;
    }
    let n_messages = n_messages.max(1);
    let repetitions = repetitions.max(1);
    let mut sum = 0.0;
    for _ in 0..repetitions {
        let mut rep = 0.0;
        for _ in 0..n_messages {
            rep += rng.normal(budget.received_power, sigma_db);
        }
        sum += rep / n_messages as f64;
    }
    sum / repetitions as f64
}

/// Channel id (11..=26) to an abstract, non-negative interference level.
pub type ChannelMap = BTreeMap<u8, f64>;

/// Least-interference channel; ties go to the lowest channel id.
pub fn select_channel(channels: &ChannelMap) -> Result<u8, PropagationError> {
    let mut best: Option<(u8, f64)> = None;
    for (&id, &level) in channels {
        match best {
            Some((_, b)) if level >= b => {}
            _ => best = Some((id, level)),
        }
    }
    best.map(|(id, _)| id).ok_or(PropagationError::EmptyChannelMap)
}
