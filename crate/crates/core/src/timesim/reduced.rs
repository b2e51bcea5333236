use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::freq::{filter_response, plant_response, EscConfig, FilterKind};
use crate::plant::{equilibrium_at, linearize, PlantModel};
use crate::stationarity::{u_step, Stability, StabilitySource, StationaryPoint};

/// Relative threshold below which `k·dL/dû` has no trustworthy sign.
pub const SIGN_TOL: f64 = 1e-12;

/// The averaged demodulator output at a frozen `û`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub u_hat: f64,
    pub l_value: f64,
    pub dl_du: f64,
    /// `φ_û = ∠G_û(iω) + ∠F_H(iω)`.
    pub phase_lag: f64,
}

/// `L(û) = (a/2)·|F_H(iω)|·|G_û(iω)|·|F_L(0)|·cos φ_û`.
pub fn reduced_l(plant: &dyn PlantModel, cfg: &EscConfig, u_hat: f64) -> Result<f64> {
    Ok(pieces(plant, cfg, u_hat)?.0)
}

fn pieces(plant: &dyn PlantModel, cfg: &EscConfig, u: f64) -> Result<(f64, f64)> {
    let g = plant_response(&linearize(plant, &equilibrium_at(plant, u)?), cfg.omega)?;
    let fh = filter_response(cfg, FilterKind::HighPass, cfg.omega);
    let fl0 = filter_response(cfg, FilterKind::LowPass, 0.0);
    let phase = g.phase + fh.phase;
    Ok((0.5 * cfg.amplitude * fh.magnitude * g.magnitude * fl0.magnitude * phase.cos(), phase))
}

/// `dL/dû` by central differences.
pub fn reduced_slope(plant: &dyn PlantModel, cfg: &EscConfig, u_hat: f64) -> Result<f64> {
    let h = u_step(u_hat);
    Ok((reduced_l(plant, cfg, u_hat + h)? - reduced_l(plant, cfg, u_hat - h)?) / (2.0 * h))
}

pub fn reduced_model(plant: &dyn PlantModel, cfg: &EscConfig, u_hat: f64) -> Result<ReducedModel> {
    let (l_value, phase_lag) = pieces(plant, cfg, u_hat)?;
    Ok(ReducedModel { u_hat, l_value, dl_du: reduced_slope(plant, cfg, u_hat)?, phase_lag })
}

/// Stable iff `k·dL/dû < 0`.
pub fn reduced_stability(plant: &dyn PlantModel, cfg: &EscConfig, point: &StationaryPoint) -> Result<Stability> {
    let u = point.u_bar;
    let h = u_step(u);
    let (lp, lm) = (reduced_l(plant, cfg, u + h)?, reduced_l(plant, cfg, u - h)?);
    let value = cfg.gain * (lp - lm) / (2.0 * h);
    // Scale of the one-sided values: a slope far below it is cancellation noise.
    let scale = cfg.gain.abs() * (lp.abs() + lm.abs()) / (2.0 * h);
    if !(value.abs() > SIGN_TOL * scale) {
        return Err(EscError::InconclusiveSign { value });
    }
    Ok(if value < 0.0 { Stability::Stable } else { Stability::Unstable })
}

/// Labels every point from the reduced model; points whose sign is
/// inconclusive or whose evaluation fails keep `Unknown`.
pub fn label_stationary_points(plant: &dyn PlantModel, cfg: &EscConfig, points: &mut [StationaryPoint]) -> Vec<Option<EscError>> {
    points
        .iter_mut()
        .map(|p| {
            let at = cfg.at_omega(p.omega);
            match reduced_stability(plant, &at, p) {
                Ok(s) => {
                    p.stability = s;
                    p.stability_source = StabilitySource::ReducedModel;
                    None
                }
                Err(e) => Some(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::build_hammerstein;

    #[test]
    fn hammerstein_l_follows_local_gradient() {
        let plant = build_hammerstein(1.0, 1.0).unwrap();
        let cfg = EscConfig::with_ratio(0.05, 0.1, 1.0, 0.01);
        assert_eq!(reduced_l(&plant, &cfg, 1.0).unwrap(), 0.0);
        let l = reduced_l(&plant, &cfg, 0.5).unwrap();
        assert!(l > 0.0);
        // Static-map averaging: (a/2)·J'(û)·|F_H|·cos(∠F_H) up to the plant lag.
        let fh = filter_response(&cfg, FilterKind::HighPass, cfg.omega);
        let oracle = 0.5 * cfg.amplitude * 1.0 * fh.magnitude * fh.phase.cos();
        assert!((l - oracle).abs() < 0.01 * oracle);
    }

    #[test]
    fn hammerstein_maximum_is_stable_for_positive_gain() {
        let plant = build_hammerstein(1.0, 1.0).unwrap();
        let cfg = EscConfig::with_ratio(0.3, 0.1, 1.0, 0.01);
        let point = StationaryPoint {
            u_bar: 1.0,
            omega: cfg.omega,
            condition_value: 0.0,
            dc_du: 0.0,
            stability: Stability::Unknown,
            stability_source: StabilitySource::None,
            response_magnitude: 0.0,
            degenerate: true,
        };
        assert_eq!(reduced_stability(&plant, &cfg, &point).unwrap(), Stability::Stable);
        let flipped = cfg.with_gain(-1.0);
        assert_eq!(reduced_stability(&plant, &flipped, &point).unwrap(), Stability::Unstable);
    }
}
