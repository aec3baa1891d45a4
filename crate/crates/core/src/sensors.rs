//! Behavioral sensor models: a deterministic ground-truth signal, additive
//! Gaussian noise, and the strain gauge's heat-before-sample restriction.
//!
//! Units are engineering units throughout: microstrain for strain gauges,
//! millimeters for displacement sensors, degrees Celsius for temperature
//! catheters.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RngStream, SimTime};

/// Default time a strain gauge needs to heat before it can be read.
pub const DEFAULT_HEAT_DURATION_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    StrainGauge,
    Displacement,
    TemperatureCatheter,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [
        SensorKind::StrainGauge,
        SensorKind::Displacement,
        SensorKind::TemperatureCatheter,
    ];

    /// Wire code used in SAMPLE_RESP payloads.
    pub fn code(self) -> u8 {
        match self {
            SensorKind::StrainGauge => 0x01,
            SensorKind::Displacement => 0x02,
            SensorKind::TemperatureCatheter => 0x03,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn requires_heating(self) -> bool {
        matches!(self, SensorKind::StrainGauge)
    }

    pub fn unit(self) -> &'static str {
        match self {
            SensorKind::StrainGauge => "microstrain",
            SensorKind::Displacement => "mm",
            SensorKind::TemperatureCatheter => "degC",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::StrainGauge => "strain_gauge",
            SensorKind::Displacement => "displacement",
            SensorKind::TemperatureCatheter => "temperature_catheter",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Synthetic ground-truth signal shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Signal {
    Constant {
        level: f64,
    },
    Ramp {
        start: f64,
        slope_per_hour: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period_hours: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    pub kind: SensorKind,
    pub signal: Signal,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Strain gauges only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat_duration_s: Option<f64>,
}

impl SensorModel {
    pub fn new(kind: SensorKind, signal: Signal) -> Self {
        Self {
            kind,
            signal,
            noise_sigma: 0.0,
            heat_duration_s: kind.requires_heating().then_some(DEFAULT_HEAT_DURATION_S),
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn heat_duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.heat_duration_s.unwrap_or(DEFAULT_HEAT_DURATION_S))
    }
}

/// Heating window of a strain gauge. Heating started at `h` with duration
/// `d` makes the gauge readable over `[h + d, h + 2d]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GaugeState {
    pub ready_at: Option<SimTime>,
    pub heated_until: Option<SimTime>,
}

impl GaugeState {
    pub fn start_heating(&mut self, now: SimTime, heat_duration: SimTime) {
        let ready = now + heat_duration;
        self.ready_at = Some(ready);
        self.heated_until = Some(ready + heat_duration);
    }

    pub fn is_ready(&self, now: SimTime) -> bool {
        match (self.ready_at, self.heated_until) {
            (Some(ready), Some(until)) => ready <= now && now <= until,
            _ => false,
        }
    }

    pub fn clear(&mut self) {
        *self = GaugeState::default();
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SensorError {
    #[error("strain gauge sampled before it was heated")]
    GaugeNotHeated,
}

pub fn ground_truth(model: &SensorModel, t: SimTime) -> f64 {
    let hours = t.as_secs_f64() / 3600.0;
    match model.signal {
        Signal::Constant { level } => level,
        Signal::Ramp {
            start,
            slope_per_hour,
        } => start + slope_per_hour * hours,
        Signal::Sinusoid {
            mean,
            amplitude,
            period_hours,
        } => {
            if period_hours <= 0.0 {
                mean
            } else {
                mean + amplitude * (2.0 * PI * hours / period_hours).sin()
            }
        }
    }
}

/// Reads the sensor at `t`. Strain gauges fail unless `gauge` covers `t`.
pub fn sample(
    model: &SensorModel,
    gauge: &GaugeState,
    t: SimTime,
    rng: &mut RngStream,
) -> Result<f64, SensorError> {
    if model.kind.requires_heating() && !gauge.is_ready(t) {
        return Err(SensorError::GaugeNotHeated);
    }
    Ok(rng.normal(ground_truth(model, t), model.noise_sigma))
}
