//! Deep-space free-space optical link budgets.
//!
//! Received power for an aperture-limited link,
//! P_r = P_w·(πD_t/λ)²·(πD_r/λ)²·(λ/4πR)²·η, and the mean photon number per
//! pulse n̄ = P·λ·τ/(hc). The photon-number conversion takes the *received*
//! power explicitly; exact SI values are used for h and c.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// Planck constant, J·s (exact SI).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light, m/s (exact SI).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space link parameters. All lengths in meters, power in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetParams {
    /// Transmitted power, W.
    pub power_w: f64,
    /// Transmitter aperture diameter, m.
    pub tx_diameter_m: f64,
    /// Receiver aperture diameter, m.
    pub rx_diameter_m: f64,
    /// Range, m.
    pub range_m: f64,
    /// Carrier wavelength, m.
    pub wavelength_m: f64,
    /// System efficiency in (0, 1].
    pub efficiency: f64,
    /// Pulse duration, s.
    pub pulse_duration_s: f64,
}

impl LinkBudgetParams {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("power_w", self.power_w),
            ("tx_diameter_m", self.tx_diameter_m),
            ("rx_diameter_m", self.rx_diameter_m),
            ("range_m", self.range_m),
            ("wavelength_m", self.wavelength_m),
            ("pulse_duration_s", self.pulse_duration_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid_argument(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid_argument(format!(
                "efficiency must be in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }
}

/// Received power of the aperture-limited free-space link, W.
pub fn received_power(p: &LinkBudgetParams) -> Result<f64> {
    p.validate()?;
    let tx_gain = (PI * p.tx_diameter_m / p.wavelength_m).powi(2);
    let rx_gain = (PI * p.rx_diameter_m / p.wavelength_m).powi(2);
    let path = (p.wavelength_m / (4.0 * PI * p.range_m)).powi(2);
    Ok(p.power_w * tx_gain * rx_gain * path * p.efficiency)
}

/// Mean photon number per pulse for received power P_r: n̄ = P_r·λ·τ/(hc).
pub fn photons_per_pulse(p_r_w: f64, wavelength_m: f64, pulse_duration_s: f64) -> f64 {
    p_r_w * wavelength_m * pulse_duration_s / (PLANCK * SPEED_OF_LIGHT)
}

/// One step of a range sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdvantagePoint {
    pub range_m: f64,
    pub p_r_w: f64,
    pub nbar: f64,
    pub in_region: bool,
}

/// Default mean-photon band where the demonstrated four-stage receiver is
/// superadditive.
pub const DEFAULT_ADVANTAGE_REGION: (f64, f64) = (1e-4, 1e-2);

/// Sweep the link over ranges and flag where the received mean photon number
/// per pulse falls inside the advantage region (lo, hi).
pub fn advantage_region(
    p: &LinkBudgetParams,
    ranges_m: &[f64],
    region: (f64, f64),
) -> Result<Vec<AdvantagePoint>> {
    p.validate()?;
    let (lo, hi) = region;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::invalid_argument(format!(
            "region bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    ranges_m
        .iter()
        .map(|&range_m| {
            let params = LinkBudgetParams { range_m, ..*p };
            let p_r_w = received_power(&params)?;
            let nbar = photons_per_pulse(p_r_w, p.wavelength_m, p.pulse_duration_s);
            Ok(AdvantagePoint {
                range_m,
                p_r_w,
                nbar,
                in_region: nbar >= lo && nbar <= hi,
            })
        })
        .collect()
}

/// Named parameter sets of the deployed demonstration platforms. Pulse
/// duration defaults to 2 ns for all entries.
pub mod presets {
    use super::LinkBudgetParams;

    pub const PULSE_S: f64 = 2e-9;
    const LUNAR_M: f64 = 388.1e6;
    const MARS_M: f64 = 225e9;
    const PSYCHE_M: f64 = 250e9;

    fn link(
        power_w: f64,
        tx_diameter_m: f64,
        rx_diameter_m: f64,
        range_m: f64,
        wavelength_m: f64,
    ) -> LinkBudgetParams {
        LinkBudgetParams {
            power_w,
            tx_diameter_m,
            rx_diameter_m,
            range_m,
            wavelength_m,
            efficiency: 0.1,
            pulse_duration_s: PULSE_S,
        }
    }

    pub fn llcd_uplink() -> LinkBudgetParams {
        link(10.0, 0.15, 0.1, LUNAR_M, 1.55e-6)
    }

    pub fn llcd_downlink() -> LinkBudgetParams {
        link(0.5, 0.1, 0.4, LUNAR_M, 1.55e-6)
    }

    pub fn dsoc_uplink(range_m: f64) -> LinkBudgetParams {
        link(5000.0, 1.0, 0.22, range_m, 1.064e-6)
    }

    pub fn dsoc_downlink(range_m: f64) -> LinkBudgetParams {
        link(4.0, 0.22, 5.0, range_m, 1.55e-6)
    }

    pub fn dsoc_uplink_lunar() -> LinkBudgetParams {
        dsoc_uplink(LUNAR_M)
    }

    pub fn dsoc_uplink_mars() -> LinkBudgetParams {
        dsoc_uplink(MARS_M)
    }

    pub fn dsoc_uplink_psyche() -> LinkBudgetParams {
        dsoc_uplink(PSYCHE_M)
    }

    pub fn dsoc_downlink_lunar() -> LinkBudgetParams {
        dsoc_downlink(LUNAR_M)
    }

    pub fn dsoc_downlink_mars() -> LinkBudgetParams {
        dsoc_downlink(MARS_M)
    }

    pub fn dsoc_downlink_psyche() -> LinkBudgetParams {
        dsoc_downlink(PSYCHE_M)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn llcd_downlink_received_power() {
        let p = presets::llcd_downlink();
        let p_r = received_power(&p).unwrap();
        assert_relative_eq!(p_r, 1.364e-10, max_relative = 0.01);
    }

    #[test]
    fn dsoc_mars_downlink_received_power() {
        let p = presets::dsoc_downlink_mars();
        let p_r = received_power(&p).unwrap();
        assert_relative_eq!(p_r, 2.45e-12, max_relative = 0.01);
    }

    #[test]
    fn inverse_square_in_range() {
        let p = presets::llcd_downlink();
        let near = received_power(&p).unwrap();
        let far = received_power(&LinkBudgetParams {
            range_m: 2.0 * p.range_m,
            ..p
        })
        .unwrap();
        assert_relative_eq!(near / far, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn aperture_scaling_is_quartic() {
        let p = presets::llcd_uplink();
        let base = received_power(&p).unwrap();
        let scaled = received_power(&LinkBudgetParams {
            tx_diameter_m: 3.0 * p.tx_diameter_m,
            rx_diameter_m: 3.0 * p.rx_diameter_m,
            ..p
        })
        .unwrap();
        assert_relative_eq!(scaled / base, 81.0, max_relative = 1e-12);
    }

    #[test]
    fn photons_per_pulse_reference_value() {
        // 1.364e-10 W at 1.55 µm over 2 ns carries about 2.13 photons.
        let nbar = photons_per_pulse(1.364e-10, 1.55e-6, 2e-9);
        assert_relative_eq!(nbar, 2.13, max_relative = 0.005);
        assert_eq!(photons_per_pulse(0.0, 1.55e-6, 2e-9), 0.0);
        assert_relative_eq!(
            photons_per_pulse(1.364e-10, 1.55e-6, 1e-9),
            nbar / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        let mut p = presets::llcd_uplink();
        p.power_w = 0.0;
        assert!(received_power(&p).is_err());
        let mut p = presets::llcd_uplink();
        p.efficiency = 1.5;
        assert!(received_power(&p).is_err());
    }

    #[test]
    fn advantage_sweep_monotone_and_contiguous() {
        let p = presets::dsoc_downlink_mars();
        let ranges: Vec<f64> = (0..60)
            .map(|i| 1e9 * 10f64.powf(4.0 * i as f64 / 59.0)) // 1e9..1e13 m
            .collect();
        let points = advantage_region(&p, &ranges, DEFAULT_ADVANTAGE_REGION).unwrap();
        for pair in points.windows(2) {
            assert!(pair[1].nbar < pair[0].nbar, "n̄ must decrease with range");
        }
        // Membership flips false → true → false exactly once each way.
        let flags: Vec<bool> = points.iter().map(|pt| pt.in_region).collect();
        let transitions = flags.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(transitions, 2, "flags {flags:?}");
        assert!(flags.iter().any(|&f| f));
        // The advantage band sits beyond the Mars distance for this link.
        let first_in = points.iter().position(|pt| pt.in_region).unwrap();
        assert!(points[first_in].range_m > 225e9);
    }

    #[test]
    fn degenerate_region_rejected() {
        let p = presets::llcd_uplink();
        assert!(advantage_region(&p, &[1e9], (1e-3, 1e-3)).is_err());
    }
}
