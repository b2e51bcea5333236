use nalgebra::{DMatrix, DVector};

use crate::error::{EscError, Result};
use crate::freq::EscConfig;
use crate::plant::{equilibrium_at, input_jacobian, output_gradient, state_jacobian, JacobianSource, PlantModel};

/// The plant under perturbation-based extremum seeking:
///
/// ```text
/// ẋ = f(x, û + a·sin ωt),  y = h(x)
/// η̇ = ω_h (y − η)
/// ξ̇ = ω_l ((y − η)·sin ωt − ξ)
/// û̇ = k ξ
/// ```
///
/// The extended state is `z = [x; û; ξ; η]`.
pub struct ClosedLoopSystem<'a> {
    pub plant: &'a dyn PlantModel,
    pub cfg: EscConfig,
}

impl<'a> ClosedLoopSystem<'a> {
    pub fn new(plant: &'a dyn PlantModel, cfg: EscConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ClosedLoopSystem { plant, cfg })
    }

    /// Allows `k = 0` and `a = 0`, which `EscConfig::validate` rejects.
    pub fn open_loop(plant: &'a dyn PlantModel, cfg: EscConfig) -> Self {
        ClosedLoopSystem { plant, cfg }
    }

    pub fn dim(&self) -> usize {
        self.plant.dim() + 3
    }

    pub fn u_hat_index(&self) -> usize {
        self.plant.dim()
    }

    pub fn xi_index(&self) -> usize {
        self.plant.dim() + 1
    }

    pub fn eta_index(&self) -> usize {
        self.plant.dim() + 2
    }

    pub fn period(&self) -> f64 {
        self.cfg.period()
    }

    /// Plant input `û + a·sin ωt`.
    pub fn input(&self, t: f64, z: &[f64]) -> f64 {
        z[self.u_hat_index()] + self.cfg.amplitude * (self.cfg.omega * t).sin()
    }

    pub fn output(&self, z: &[f64]) -> f64 {
        self.plant.output(&z[..self.plant.dim()])
    }

    pub fn rhs(&self, t: f64, z: &[f64], dz: &mut [f64]) {
        let n = self.plant.dim();
        let s = (self.cfg.omega * t).sin();
        let u = z[n] + self.cfg.amplitude * s;
        self.plant.rhs(&z[..n], u, &mut dz[..n]);
        let y = self.plant.output(&z[..n]);
        let (xi, eta) = (z[n + 1], z[n + 2]);
        dz[n] = self.cfg.gain * xi;
        dz[n + 1] = self.cfg.omega_l() * ((y - eta) * s - xi);
        dz[n + 2] = self.cfg.omega_h() * (y - eta);
    }

    /// `∂F/∂z` of the right-hand side at `(t, z)`.
    pub fn jacobian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let n = self.plant.dim();
        let s = (self.cfg.omega * t).sin();
        let u = self.input(t, z);
        let x = &z[..n];
        let (wl, wh) = (self.cfg.omega_l(), self.cfg.omega_h());
        let mut j = DMatrix::zeros(n + 3, n + 3);
        j.view_mut((0, 0), (n, n)).copy_from(&state_jacobian(self.plant, x, u, JacobianSource::Preferred));
        j.view_mut((0, n), (n, 1)).copy_from(&input_jacobian(self.plant, x, u, JacobianSource::Preferred));
        let c = output_gradient(self.plant, x, JacobianSource::Preferred);
        for i in 0..n {
            j[(n + 1, i)] = wl * s * c[i];
            j[(n + 2, i)] = wh * c[i];
        }
        j[(n, n + 1)] = self.cfg.gain;
        j[(n + 1, n + 1)] = -wl;
        j[(n + 1, n + 2)] = -wl * s;
        j[(n + 2, n + 2)] = -wh;
        j
    }

    /// `[l(û); û; 0; J(û)]`: the loop at rest at input `û`.
    pub fn rest_state(&self, u_hat: f64) -> Result<DVector<f64>> {
        let eq = equilibrium_at(self.plant, u_hat)?;
        let n = self.plant.dim();
        let mut z = DVector::zeros(n + 3);
        z.rows_mut(0, n).copy_from(&eq.x_bar);
        z[n] = u_hat;
        z[n + 2] = self.plant.output(eq.x_bar.as_slice());
        Ok(z)
    }

    pub(crate) fn check_state(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(EscError::InvalidInput(format!("state has dimension {}, loop has {}", z.len(), self.dim())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(EscError::InvalidInput("non-finite state".into()));
        }
        Ok(())
    }
}
