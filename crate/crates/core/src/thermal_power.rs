//! Single-node thermal model and battery energy model.
//!
//! One face of the spacecraft is modeled as an isolated thermal node
//! exposed to four heat fluxes: direct solar, Earth albedo, Earth IR,
//! and radiative rejection to space. The battery charges from a
//! body-fixed solar panel and discharges at a constant bus load.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const CELSIUS_TO_KELVIN: f64 = 273.15;

/// Earth direction in Hill's frame (the chief is in a circular orbit,
/// so the Earth is always along -x).
pub const EARTH_DIR: Vector3<f64> = Vector3::new(-1.0, 0.0, 0.0);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalNodeParams {
    /// Node mass, kg.
    pub m_n: f64,
    /// Surface area, m^2.
    pub area: f64,
    /// Specific heat, J/(kg K).
    pub c_p: f64,
    /// Surface absorptivity.
    pub alpha_abs: f64,
    /// Surface emissivity.
    pub eps: f64,
    /// Earth albedo factor.
    pub albedo_factor: f64,
    /// Solar constant, W/m^2.
    pub solar_const: f64,
    /// Stefan-Boltzmann constant, W/(m^2 K^4).
    pub sigma: f64,
    /// Earth blackbody temperature, K.
    pub t_earth: f64,
    /// Node surface normal, body frame (the tracked face points -y).
    pub normal_body: Vector3<f64>,
}

impl Default for ThermalNodeParams {
    fn default() -> Self {
        Self {
            m_n: 2.0,
            area: 0.03,
            c_p: 900.0,
            alpha_abs: 0.13,
            eps: 0.06,
            albedo_factor: 0.27,
            solar_const: 1367.0,
            sigma: 5.67051e-8,
            t_earth: 255.0,
            normal_body: Vector3::new(0.0, -1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerParams {
    /// Ideal panel performance, W/m^2 (vendor value; units assumed so
    /// that p_ideal * degradation * area is watts).
    pub p_ideal: f64,
    /// Inherent degradation factor.
    pub degradation: f64,
    /// Panel area, m^2. Shares the thermal node's value by default.
    pub area: f64,
    /// Constant bus load, W.
    pub p_out: f64,
    /// Panel normal, body frame (+x, same side as the sensor).
    pub panel_normal_body: Vector3<f64>,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            p_ideal: 983.3,
            degradation: 0.77,
            area: 0.03,
            p_out: 15.0,
            panel_normal_body: Vector3::new(1.0, 0.0, 0.0),
        }
    }
}

/// Unit vector from the spacecraft to the Sun in Hill's frame.
pub fn sun_vector(theta_s: f64) -> Vector3<f64> {
    Vector3::new(theta_s.cos(), theta_s.sin(), 0.0)
}

/// Incidence angle between a surface normal and a source direction,
/// arccos of the clamped dot product, in [0, pi].
pub fn incidence_angle(n_hat: &Vector3<f64>, r_hat: &Vector3<f64>) -> f64 {
    n_hat.dot(r_hat).clamp(-1.0, 1.0).acos()
}

impl ThermalNodeParams {
    /// Direct solar flux, clamped to zero when the face points away.
    pub fn q_solar(&self, cos_sun: f64) -> f64 {
        self.alpha_abs * self.area * self.solar_const * cos_sun.max(0.0)
    }

    /// Earth view factor, 0.8 cos(theta_EI) clamped at zero.
    pub fn view_factor(&self, cos_earth: f64) -> f64 {
        0.8 * cos_earth.max(0.0)
    }

    pub fn q_albedo(&self, cos_earth: f64) -> f64 {
        self.alpha_abs * self.area * self.solar_const * self.albedo_factor
            * self.view_factor(cos_earth)
    }

    pub fn q_ir(&self, cos_earth: f64) -> f64 {
        self.sigma * self.eps * self.area * self.view_factor(cos_earth) * self.t_earth.powi(4)
    }

    pub fn q_rejected(&self, temp_k: f64) -> f64 {
        self.sigma * self.eps * self.area * temp_k.powi(4)
    }

    /// Net heat into the node, W. `temp_k` in kelvin, `n_hat_hill` is
    /// the node normal expressed in Hill's frame.
    pub fn heat_total(&self, temp_k: f64, n_hat_hill: &Vector3<f64>, r_sun: &Vector3<f64>) -> f64 {
        let cos_sun = n_hat_hill.dot(r_sun);
        let cos_earth = n_hat_hill.dot(&EARTH_DIR);
        self.q_solar(cos_sun) + self.q_albedo(cos_earth) + self.q_ir(cos_earth)
            - self.q_rejected(temp_k)
    }

    /// dT/dt in K/s.
    pub fn temperature_deriv(
        &self,
        temp_k: f64,
        n_hat_hill: &Vector3<f64>,
        r_sun: &Vector3<f64>,
    ) -> f64 {
        self.heat_total(temp_k, n_hat_hill, r_sun) / (self.m_n * self.c_p)
    }

    /// Radiative equilibrium temperature for full-sun normal incidence
    /// with no Earth terms, K.
    pub fn equilibrium_temp_full_sun(&self) -> f64 {
        (self.alpha_abs * self.solar_const / (self.sigma * self.eps)).powf(0.25)
    }
}

impl PowerParams {
    /// Generated power, W, clamped to zero past 90 degrees incidence.
    pub fn p_in(&self, theta_si: f64) -> f64 {
        self.p_ideal * self.degradation * self.area * theta_si.cos().max(0.0)
    }

    /// dE/dt in kJ/s.
    pub fn energy_deriv(&self, theta_si: f64) -> f64 {
        (self.p_in(theta_si) - self.p_out) / 1000.0
    }

    /// Incidence angle at which generation exactly balances the bus
    /// load, rad. None when the panel can never break even.
    pub fn break_even_angle(&self) -> Option<f64> {
        let c = self.p_out / (self.p_ideal * self.degradation * self.area);
        (c <= 1.0).then(|| c.acos())
    }
}
