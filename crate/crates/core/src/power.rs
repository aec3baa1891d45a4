//! Cyclic sleep scheduling, piecewise-constant current accounting, coulomb
//! counting and lifetime estimation.
//!
//! An End Device's radio wakes every poll period to fetch frames buffered at
//! its parent; the sampling circuitry wakes only every `n`-th poll, with
//! `n = max(1, round_half_up(t_external / t_poll))`. Both quantities are
//! periods in seconds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SimTime, TICKS_PER_SECOND};

/// Microsecond ticks per hour, for mA x ticks -> mAh.
const TICKS_PER_HOUR: f64 = 3600.0 * TICKS_PER_SECOND as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("periods must be positive (t_external = {t_external}, t_poll = {t_poll})")]
    NonPositivePeriod { t_external: f64, t_poll: f64 },
    #[error("active time {active} s exceeds cycle {cycle} s")]
    ActiveExceedsCycle { cycle: f64, active: f64 },
    #[error("average current must be positive, got {0} mA")]
    NonPositiveCurrent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerState {
    Sleeping,
    AwakeIdle,
    Transmitting,
}

impl PowerState {
    pub const ALL: [PowerState; 3] = [
        PowerState::Sleeping,
        PowerState::AwakeIdle,
        PowerState::Transmitting,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PowerState::Sleeping => "sleeping",
            PowerState::AwakeIdle => "awake_idle",
            PowerState::Transmitting => "transmitting",
        }
    }
}

/// Supply current per power state, in mA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumptionProfile {
    pub sleeping_ma: f64,
    pub awake_idle_ma: f64,
    pub transmitting_ma: f64,
}

impl Default for ConsumptionProfile {
    /// Bench measurements of the prototype End Device.
    fn default() -> Self {
        Self {
            sleeping_ma: 21.10,
            awake_idle_ma: 69.80,
            transmitting_ma: 109.80,
        }
    }
}

impl ConsumptionProfile {
    pub fn current(&self, state: PowerState) -> f64 {
        match state {
            PowerState::Sleeping => self.sleeping_ma,
            PowerState::AwakeIdle => self.awake_idle_ma,
            PowerState::Transmitting => self.transmitting_ma,
        }
    }

    pub fn max_current(&self) -> f64 {
        self.sleeping_ma.max(self.awake_idle_ma).max(self.transmitting_ma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryState {
    pub capacity_mah: f64,
    pub remaining_mah: f64,
}

impl BatteryState {
    pub const DEFAULT_CAPACITY_MAH: f64 = 1100.0;

    pub fn full(capacity_mah: f64) -> Self {
        Self {
            capacity_mah,
            remaining_mah: capacity_mah,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.remaining_mah <= 0.0
    }
}

impl Default for BatteryState {
    fn default() -> Self {
        Self::full(Self::DEFAULT_CAPACITY_MAH)
    }
}

// ============================================================================
// Cyclic sleep
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicSleepConfig {
    pub t_external_s: f64,
    pub t_poll_s: f64,
    pub n: u32,
}

impl CyclicSleepConfig {
    pub fn new(t_external_s: f64, t_poll_s: f64) -> Result<Self, PowerError> {
        let (n, _) = cyclic_sleep_n(t_external_s, t_poll_s)?;
        Ok(Self {
            t_external_s,
            t_poll_s,
            n,
        })
    }

    pub fn effective_period_s(&self) -> f64 {
        self.n as f64 * self.t_poll_s
    }

    /// Relative error of the effective period against the requested one.
    pub fn quantization_error(&self) -> f64 {
        (self.effective_period_s() - self.t_external_s) / self.t_external_s
    }
}

/// Returns the poll multiplier and the resulting effective period.
pub fn cyclic_sleep_n(t_external_s: f64, t_poll_s: f64) -> Result<(u32, f64), PowerError> {
    if !(t_external_s > 0.0 && t_poll_s > 0.0) || !t_external_s.is_finite() || !t_poll_s.is_finite() {
        return Err(PowerError::NonPositivePeriod {
            t_external: t_external_s,
            t_poll: t_poll_s,
        });
    }
    let ratio = t_external_s / t_poll_s;
    let n = (ratio + 0.5).floor().clamp(1.0, u32::MAX as f64) as u32;
    Ok((n, n as f64 * t_poll_s))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WakeTimeline {
    pub polls: Vec<SimTime>,
    pub externals: Vec<SimTime>,
}

/// Poll wakes at `k * t_poll` and external wakes at `k * n * t_poll`, for
/// `k >= 1`, up to and including `horizon_s`.
pub fn wake_timeline(cfg: &CyclicSleepConfig, horizon_s: f64) -> WakeTimeline {
    let step = SimTime::from_secs_f64(cfg.t_poll_s);
    let horizon = SimTime::from_secs_f64(horizon_s);
    let mut out = WakeTimeline::default();
    if step == SimTime::ZERO {
        return out;
    }
    let n = cfg.n.max(1) as u64;
    let mut k = 1u64;
    loop {
        let t = SimTime::from_ticks(step.ticks() * k);
        if t > horizon {
            break;
        }
        out.polls.push(t);
        if k.is_multiple_of(n) {
            out.externals.push(t);
        }
        k += 1;
    }
    out
}

// ============================================================================
// Coulomb counting
// ============================================================================

/// Per-node power bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLedger {
    pub state: PowerState,
    pub entered_at: SimTime,
    pub consumed_mah: f64,
    /// Time spent in each state, indexed like [`PowerState::ALL`], in ticks.
    pub durations: [u64; 3],
    pub died_at: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accrual {
    Alive,
    Died(SimTime),
}

impl PowerLedger {
    pub fn new(state: PowerState, at: SimTime) -> Self {
        Self {
            state,
            entered_at: at,
            consumed_mah: 0.0,
            durations: [0; 3],
            died_at: None,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.died_at.is_some()
    }

    pub fn duration(&self, state: PowerState) -> SimTime {
        SimTime::from_ticks(self.durations[state.index()])
    }

    /// Charge implied by the per-state durations.
    pub fn integrated_mah(&self, profile: &ConsumptionProfile) -> f64 {
        PowerState::ALL
            .iter()
            .map(|&s| self.durations[s.index()] as f64 * profile.current(s) / TICKS_PER_HOUR)
            .sum()
    }

    /// Consumed charge agrees with the duration integral to within one tick
    /// at the highest current (plus float rounding).
    pub fn is_balanced(&self, profile: &ConsumptionProfile) -> bool {
        let tick_charge = profile.max_current() / TICKS_PER_HOUR;
        let diff = (self.consumed_mah - self.integrated_mah(profile)).abs();
        diff <= tick_charge + 1e-9 * self.consumed_mah.abs().max(1.0)
    }

    pub fn elapsed(&self) -> SimTime {
        SimTime::from_ticks(self.durations.iter().sum())
    }

    pub fn average_current_ma(&self) -> f64 {
        let secs = self.elapsed().as_secs_f64();
        if secs > 0.0 {
            self.consumed_mah * 3600.0 / secs
        } else {
            0.0
        }
    }
}

/// Charges the interval since the last transition at the old state's
/// current, then switches to `new_state`. With a battery, the node dies at
/// the exact tick its charge runs out and later calls are no-ops.
pub fn accrue(
    ledger: &mut PowerLedger,
    battery: Option<&mut BatteryState>,
    profile: &ConsumptionProfile,
    new_state: PowerState,
    now: SimTime,
) -> Accrual {
    if let Some(at) = ledger.died_at {
        return Accrual::Died(at);
    }
    let now = now.max(ledger.entered_at);
    let elapsed = (now - ledger.entered_at).ticks();
    let current = profile.current(ledger.state);
    let charge = elapsed as f64 * current / TICKS_PER_HOUR;

    if let Some(battery) = battery {
        if charge >= battery.remaining_mah && (current > 0.0 || battery.remaining_mah <= 0.0) {
            let ticks_left = if current > 0.0 {
                ((battery.remaining_mah.max(0.0) * TICKS_PER_HOUR / current).floor() as u64).min(elapsed)
            } else {
                0
            };
            let died = ledger.entered_at + SimTime::from_ticks(ticks_left);
            ledger.durations[ledger.state.index()] += ticks_left;
            ledger.consumed_mah += battery.remaining_mah.max(0.0);
            battery.remaining_mah = 0.0;
            ledger.entered_at = died;
            ledger.died_at = Some(died);
            return Accrual::Died(died);
        }
        battery.remaining_mah -= charge;
    }

    ledger.durations[ledger.state.index()] += elapsed;
    ledger.consumed_mah += charge;
    ledger.state = new_state;
    ledger.entered_at = now;
    Accrual::Alive
}

// ============================================================================
// Closed forms
// ============================================================================

/// Duty-cycled average current over one cycle with `active` seconds spent in
/// `active_state` and the remainder asleep.
pub fn average_current(
    profile: &ConsumptionProfile,
    cycle_s: f64,
    active_s: f64,
    active_state: PowerState,
) -> Result<f64, PowerError> {
    if !(cycle_s > 0.0) {
        return Err(PowerError::NonPositivePeriod {
            t_external: cycle_s,
            t_poll: cycle_s,
        });
    }
    if active_s < 0.0 || active_s > cycle_s {
        return Err(PowerError::ActiveExceedsCycle {
            cycle: cycle_s,
            active: active_s,
        });
    }
    Ok((profile.current(active_state) * active_s + profile.sleeping_ma * (cycle_s - active_s)) / cycle_s)
}

/// Hours until a battery of `capacity_mah` is drained at `avg_ma`.
pub fn estimate_lifetime(capacity_mah: f64, avg_ma: f64) -> Result<f64, PowerError> {
    if !(avg_ma > 0.0) {
        return Err(PowerError::NonPositiveCurrent(avg_ma));
    }
    Ok(capacity_mah / avg_ma)
}
