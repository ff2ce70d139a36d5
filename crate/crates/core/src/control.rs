//! Uncertainty rendering and valve control.
//!
//! Uncertainty maps linearly onto a pressure setpoint (1 psi when certain,
//! 3 psi when fully uncertain). A deadband bang-bang law opens the fill or
//! vent valve to hold the measured pressure near that setpoint. The supply
//! regulator sits at the safety clamp, so the plant can never be driven
//! past it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{Plant, ValveState, MAX_STEP_S};
use crate::types::{Pressure, UncertaintyLevel, RUPTURE_PSI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderingLaw {
    pub p_min: Pressure,
    pub p_max: Pressure,
}

impl Default for RenderingLaw {
    fn default() -> Self {
        RenderingLaw {
            p_min: Pressure::psi(1.0),
            p_max: Pressure::psi(3.0),
        }
    }
}

impl RenderingLaw {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.p_min.as_psi(), self.p_max.as_psi());
        if 0.0 < lo && lo < hi && hi <= RUPTURE_PSI {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "rendering law needs 0 < p_min < p_max <= {RUPTURE_PSI}, got [{lo}, {hi}]"
            )))
        }
    }

    /// Unclamped linear map from `[0, 1]` to `[p_min, p_max]`.
    pub fn render(&self, u: UncertaintyLevel) -> f64 {
        let (lo, hi) = (self.p_min.as_psi(), self.p_max.as_psi());
        lo + (hi - lo) * u.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Half-width of the no-actuation band around the setpoint, psi.
    pub deadband: f64,
    pub safety_clamp: Pressure,
    /// Control period, s.
    pub tick: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            deadband: 0.05,
            safety_clamp: Pressure::psi(3.0),
            tick: 0.01,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.deadband > 0.0) {
            return Err(Error::invalid("deadband must be positive"));
        }
        let clamp = self.safety_clamp.as_psi();
        if !(clamp > 0.0 && clamp <= RUPTURE_PSI) {
            return Err(Error::OutOfRange {
                what: "safety clamp",
                value: clamp,
                min: 0.0,
                max: RUPTURE_PSI,
            });
        }
        if !(self.tick > 0.0 && self.tick <= MAX_STEP_S) {
            return Err(Error::OutOfRange {
                what: "tick",
                value: self.tick,
                min: 0.0,
                max: MAX_STEP_S,
            });
        }
        Ok(())
    }
}

/// Controller config file: `{p_min_psi, p_max_psi, deadband_psi, safety_clamp_psi, tick_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlFile {
    pub p_min_psi: f64,
    pub p_max_psi: f64,
    pub deadband_psi: f64,
    pub safety_clamp_psi: f64,
    pub tick_s: f64,
}

impl Default for ControlFile {
    fn default() -> Self {
        Self::from_parts(&RenderingLaw::default(), &ControllerConfig::default())
    }
}

impl ControlFile {
    pub fn from_parts(law: &RenderingLaw, cfg: &ControllerConfig) -> Self {
        ControlFile {
            p_min_psi: law.p_min.as_psi(),
            p_max_psi: law.p_max.as_psi(),
            deadband_psi: cfg.deadband,
            safety_clamp_psi: cfg.safety_clamp.as_psi(),
            tick_s: cfg.tick,
        }
    }

    pub fn into_parts(self) -> Result<(RenderingLaw, ControllerConfig)> {
        let law = RenderingLaw {
            p_min: Pressure::try_psi(self.p_min_psi)?,
            p_max: Pressure::try_psi(self.p_max_psi)?,
        };
        let cfg = ControllerConfig {
            deadband: self.deadband_psi,
            safety_clamp: Pressure::try_psi(self.safety_clamp_psi)?,
            tick: self.tick_s,
        };
        law.validate()?;
        cfg.validate()?;
        Ok((law, cfg))
    }
}

/// Pressure setpoint for uncertainty `u`, never above the safety clamp.
pub fn uncertainty_to_setpoint(u: UncertaintyLevel, law: &RenderingLaw, cfg: &ControllerConfig) -> Pressure {
    Pressure::psi(law.render(u).min(cfg.safety_clamp.as_psi()))
}

/// Fill below the band, vent above it, hold inside.
pub fn valve_command(measured: Pressure, setpoint: Pressure, cfg: &ControllerConfig) -> ValveState {
    let (m, sp) = (measured.as_psi(), setpoint.as_psi());
    if m < sp - cfg.deadband {
        ValveState::FILL
    } else if m > sp + cfg.deadband {
        ValveState::VENT
    } else {
        ValveState::CLOSED
    }
}

/// One control tick: what was measured and commanded at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub time: f64,
    pub setpoint: Pressure,
    pub true_pressure: Pressure,
    pub measured: Pressure,
    pub valves: ValveState,
    pub ruptured: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackTrace {
    pub samples: Vec<TrackSample>,
    /// Time the rupture fault latched, if it did.
    pub fault: Option<f64>,
}

impl TrackTrace {
    /// First time the measured pressure is within `half_width` of the setpoint.
    pub fn band_entry(&self, half_width: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| in_band(s, half_width))
            .map(|s| s.time)
    }

    /// Whether the measured pressure leaves the band after first entering it.
    pub fn exits_after_entry(&self, half_width: f64) -> bool {
        match self.samples.iter().position(|s| in_band(s, half_width)) {
            Some(i) => self.samples[i..].iter().any(|s| !in_band(s, half_width)),
            None => false,
        }
    }
}

fn in_band(s: &TrackSample, half_width: f64) -> bool {
    // tolerate rounding at the band edge
    (s.measured.as_psi() - s.setpoint.as_psi()).abs() <= half_width + 1e-12
}

/// Runs one control tick against `plant` with the regulator at the safety clamp.
pub fn control_tick(plant: &mut Plant, setpoint: Pressure, cfg: &ControllerConfig) -> Result<TrackSample> {
    let setpoint = Pressure::psi(setpoint.as_psi().min(cfg.safety_clamp.as_psi()));
    plant.set_regulator(cfg.safety_clamp);
    let before = plant.state();
    let measured = plant.read().pressure;
    let valves = valve_command(measured, setpoint, cfg);
    plant.advance(valves, cfg.tick)?;
    Ok(TrackSample {
        time: before.time,
        setpoint,
        true_pressure: before.pressure(),
        measured,
        valves,
        ruptured: before.ruptured,
    })
}

/// Holds `setpoint` for `duration` seconds, one sample per tick.
pub fn track(plant: &mut Plant, setpoint: Pressure, duration: f64, cfg: &ControllerConfig) -> Result<TrackTrace> {
    if !(duration > 0.0) {
        return Err(Error::invalid("tracking duration must be positive"));
    }
    cfg.validate()?;
    let ticks = (duration / cfg.tick).round() as usize;
    let mut trace = TrackTrace {
        samples: Vec::with_capacity(ticks),
        fault: plant.state().ruptured.then(|| plant.state().time),
    };
    for _ in 0..ticks {
        let sample = control_tick(plant, setpoint, cfg)?;
        if trace.fault.is_none() && plant.state().ruptured {
            trace.fault = Some(plant.state().time);
        }
        trace.samples.push(sample);
    }
    Ok(trace)
}
