//! Log-distance path loss with a constant decay exponent.
//!
//! Ranges produced here are uncalibrated: each device's unknown transmit
//! power is absorbed later by a per-device multiplicative gain, so a range is
//! only proportional to distance.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Reference transmit power in dB.
    pub tx_dbm: f64,
    /// Decay exponent; received power falls as `distance^gamma`.
    pub gamma: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            tx_dbm: -50.0,
            gamma: 2.5,
        }
    }
}

impl PathLossParams {
    pub fn new(tx_dbm: f64, gamma: f64) -> Result<Self> {
        let params = Self { tx_dbm, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tx_dbm.is_finite() {
            return Err(Error::InvalidParams(format!(
                "tx_dbm must be finite, got {}",
                self.tx_dbm
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Received power in dBm. Always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Rssi(f64);

impl Rssi {
    pub fn new(value_dbm: f64) -> Result<Self> {
        if value_dbm.is_finite() {
            Ok(Self(value_dbm))
        } else {
            Err(Error::InvalidMeasurement(format!(
                "rssi must be finite, got {value_dbm}"
            )))
        }
    }

    pub fn dbm(self) -> f64 {
        self.0
    }
}

/// `10^((tx - rssi) / (10 gamma))`.
pub fn rssi_to_range(rssi: Rssi, params: &PathLossParams) -> Result<f64> {
    params.validate()?;
    let range = 10f64.powf((params.tx_dbm - rssi.0) / (10.0 * params.gamma));
    if range.is_finite() && range > 0.0 {
        Ok(range)
    } else {
        Err(Error::InvalidMeasurement(format!(
            "rssi {} dBm maps outside the representable range",
            rssi.0
        )))
    }
}

pub fn range_to_rssi(range: f64, params: &PathLossParams) -> Result<Rssi> {
    params.validate()?;
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::NonPositiveRange(range));
    }
    Rssi::new(params.tx_dbm - 10.0 * params.gamma * range.log10())
}
