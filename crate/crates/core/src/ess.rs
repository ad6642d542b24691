//! Wind farm output, power imbalance, and the energy storage unit that
//! smooths it with the greedy charge/discharge policy.
//!
//! All storage quantities are power per dispatch interval: the stored level
//! `S` is updated as `S + eta_c * C - D / eta_d` with no explicit time step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Betz limit on the performance coefficient.
pub const BETZ_LIMIT: f64 = 16.0 / 27.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindFarm {
    /// Generator bus (0-based) the farm is attached to.
    pub bus: usize,
    pub turbines: u32,
    /// Air density, kg/m^3.
    pub air_density: f64,
    pub power_coefficient: f64,
    /// Swept rotor area per turbine, m^2.
    pub rotor_area: f64,
    /// Wind speed that corresponds to 1.0 per-unit speed, m/s.
    pub speed_base: f64,
    /// System power base, W.
    pub power_base: f64,
    /// Reference (rated) output, per-unit.
    pub p_ref: f64,
}

impl WindFarm {
    /// A 500 MW farm (5 p.u. on a 100 MW base) rated at 12 m/s, attached to `bus`.
    ///
    /// The reference output is the farm power at 1.0 p.u. speed.
    pub fn rated_500mw(bus: usize) -> Self {
        let mut farm = Self {
            bus,
            turbines: 100,
            air_density: 1.225,
            power_coefficient: 0.45,
            rotor_area: 0.0,
            speed_base: 12.0,
            power_base: 100e6,
            p_ref: 5.0,
        };
        // 5 MW per turbine at rated speed.
        farm.rotor_area = 5e6 / (0.5 * farm.air_density * farm.power_coefficient * farm.speed_base.powi(3));
        farm
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.air_density, self.power_coefficient, self.rotor_area, self.speed_base, self.power_base];
        if self.turbines == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(format!("wind farm physical parameters must be > 0: {self:?}")));
        }
        if self.power_coefficient >= BETZ_LIMIT {
            return Err(Error::Config(format!(
                "performance coefficient {} exceeds the Betz limit",
                self.power_coefficient
            )));
        }
        if !(self.p_ref > 0.0) {
            return Err(Error::Config("wind farm reference output must be > 0".into()));
        }
        Ok(())
    }

    /// `(n_g rho / 2) c_p A_r` expressed per-unit power per (per-unit speed)^3.
    pub fn cubic_coefficient(&self) -> f64 {
        0.5 * self.turbines as f64 * self.air_density * self.power_coefficient * self.rotor_area
            * self.speed_base.powi(3)
            / self.power_base
    }
}

/// Farm output in per-unit power for a per-unit wind speed.
pub fn wind_power(farm: &WindFarm, speed: f64) -> Result<f64> {
    if !(speed >= 0.0) {
        return Err(Error::Domain(format!("wind speed must be non-negative, got {speed}")));
    }
    Ok(farm.cubic_coefficient() * speed.powi(3))
}

pub fn power_imbalance(p_w: f64, p_ref: f64) -> f64 {
    p_w - p_ref
}

/// Sample standard deviation (divisor N-1) of an imbalance series.
pub fn imbalance_std(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("standard deviation needs >= 2 samples, got {n}")));
    }
    // Shift by the first sample so a constant series gives exactly zero.
    let shift = series[0];
    let mean = series.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let ss: f64 = series.iter().map(|x| (x - shift - mean).powi(2)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingPolicy {
    /// Imbalance standard deviation above which the unit is switched on.
    pub gamma_p: f64,
    /// Capacity multiplier: `S_max = alpha * std`.
    pub alpha: f64,
}

impl Default for SizingPolicy {
    fn default() -> Self {
        Self { gamma_p: 0.1, alpha: 7.0 }
    }
}

impl SizingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_p > 0.0) || !(self.alpha > 0.0) {
            return Err(Error::Config(format!("sizing policy needs gamma_p > 0 and alpha > 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssUnit {
    pub stored: f64,
    pub s_max: f64,
    pub c_max: f64,
    pub d_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub enabled: bool,
}

impl EssUnit {
    pub fn new(stored: f64, s_max: f64, c_max: f64, d_max: f64, eta_c: f64, eta_d: f64) -> Result<Self> {
        let unit = Self { stored, s_max, c_max, d_max, eta_c, eta_d, enabled: true };
        unit.check()?;
        Ok(unit)
    }

    pub fn disabled() -> Self {
        Self { stored: 0.0, s_max: 0.0, c_max: 0.0, d_max: 0.0, eta_c: 1.0, eta_d: 1.0, enabled: false }
    }

    fn check(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let eff_ok = |e: f64| e > 0.0 && e <= 1.0;
        if !eff_ok(self.eta_c) || !eff_ok(self.eta_d) {
            return Err(Error::Config(format!("efficiencies must lie in (0, 1]: {self:?}")));
        }
        if !(self.c_max > 0.0) || !(self.d_max > 0.0) || !(self.s_max >= 0.0) {
            return Err(Error::Config(format!("enabled storage needs positive limits: {self:?}")));
        }
        if !(0.0..=self.s_max).contains(&self.stored) {
            return Err(Error::InvariantViolation(format!(
                "stored level {} outside [0, {}]",
                self.stored, self.s_max
            )));
        }
        Ok(())
    }

    /// Applies the greedy policy for one interval and updates the stored level.
    pub fn dispatch(&mut self, p_im: f64) -> Result<Dispatch> {
        self.check()?;
        if !self.enabled {
            return Ok(Dispatch { charge: 0.0, discharge: 0.0, residual: p_im, case: DispatchCase::Disabled });
        }
        let (charge, discharge, case) = if p_im >= 0.0 {
            let headroom = (self.s_max - self.stored) / self.eta_c;
            if self.c_max <= p_im.min(headroom) {
                (self.c_max, 0.0, DispatchCase::ChargeAtLimit)
            } else if p_im < headroom.min(self.c_max) {
                (p_im, 0.0, DispatchCase::AbsorbAll)
            } else {
                (headroom, 0.0, DispatchCase::ChargeToFull)
            }
        } else {
            let available = self.eta_d * self.stored;
            if p_im.max(-available) < -self.d_max {
                (0.0, self.d_max, DispatchCase::DischargeAtLimit)
            } else if (-available).max(-self.d_max) <= p_im {
                (0.0, -p_im, DispatchCase::CoverAll)
            } else {
                (0.0, available, DispatchCase::DischargeToEmpty)
            }
        };
        let mut next = self.stored + self.eta_c * charge - discharge / self.eta_d;
        // Absorb round-off from the to-full and to-empty cases.
        let slack = 1e-12 * self.s_max.max(1.0);
        if next < 0.0 && next > -slack {
            next = 0.0;
        } else if next > self.s_max && next < self.s_max + slack {
            next = self.s_max;
        }
        if !(0.0..=self.s_max).contains(&next) {
            return Err(Error::InvariantViolation(format!("dispatch would leave stored level at {next}")));
        }
        self.stored = next;
        Ok(Dispatch { charge, discharge, residual: p_im - charge + discharge, case })
    }
}

/// Which branch of the greedy policy produced a dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchCase {
    ChargeAtLimit,
    AbsorbAll,
    ChargeToFull,
    DischargeAtLimit,
    CoverAll,
    DischargeToEmpty,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispatch {
    pub charge: f64,
    pub discharge: f64,
    /// `P_im - C + D`.
    pub residual: f64,
    pub case: DispatchCase,
}

/// Functional form of [`EssUnit::dispatch`].
pub fn greedy_dispatch(ess: &EssUnit, p_im: f64) -> Result<(Dispatch, EssUnit)> {
    let mut next = *ess;
    let d = next.dispatch(p_im)?;
    Ok((d, next))
}

/// Sizes a unit from the imbalance standard deviation: off when the
/// deviation is within `gamma_p`, otherwise `S_max = alpha * std`,
/// `C_max = S_max / eta_c`, `D_max = eta_d * S_max`, starting half full.
pub fn size_ess(imbalance_std: f64, policy: &SizingPolicy, eta_c: f64, eta_d: f64) -> EssUnit {
    if !(imbalance_std > policy.gamma_p) {
        return EssUnit::disabled();
    }
    let s_max = policy.alpha * imbalance_std;
    EssUnit {
        stored: 0.5 * s_max,
        s_max,
        c_max: s_max / eta_c,
        d_max: eta_d * s_max,
        eta_c,
        eta_d,
        enabled: true,
    }
}
