//! Domain types, template and anchor vector fields, leg kinematics and the
//! dimensionless scaling.
//!
//! Angle convention: a leg angle `theta` is the direction of the hip-to-toe
//! vector measured from the downward vertical, positive toward +y (the
//! direction of travel). A leg touching down ahead of the body therefore has
//! `theta > 0`, and the touchdown height of a leg of length `r` is
//! `r * cos(theta)`. Pitch `alpha` is counter-clockwise in the (y, z) plane,
//! so a positive pitch raises the front (+d) hip.

use crate::error::{Error, Result};
use crate::math::{atan2, cos, hypot, sin, sqrt};

/// Number of virtual legs (contralateral pairs) on the hexapod.
pub const LEGS: usize = 3;

/// Stance-leg overshoot past rest length tolerated before a fault, as a
/// fraction of the rest length.
pub const OVERSHOOT_MARGIN: f64 = 0.05;

/// Single-leg spring-mass template parameters in any consistent unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
    pub gravity: f64,
}

impl SlipParams {
    /// Template in dimensionless units (unit mass, rest length and gravity).
    pub fn dimensionless(stiffness: f64, damping: f64) -> Self {
        SlipParams {
            mass: 1.0,
            stiffness,
            damping,
            rest_length: 1.0,
            gravity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter("mass must be positive"));
        }
        if !(self.stiffness > 0.0) {
            return Err(Error::InvalidParameter("stiffness must be positive"));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::InvalidParameter("damping must be non-negative"));
        }
        if !(self.rest_length > 0.0) {
            return Err(Error::InvalidParameter("rest length must be positive"));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::InvalidParameter("gravity must be positive"));
        }
        Ok(())
    }

    /// Total mechanical energy of a stance state `[r, theta, rdot, thetadot]`.
    pub fn stance_energy(&self, s: &[f64; 4]) -> f64 {
        let [r, th, rd, thd] = *s;
        let spring = self.rest_length - r;
        0.5 * self.mass * (rd * rd + r * r * thd * thd)
            + self.mass * self.gravity * r * cos(th)
            + 0.5 * self.stiffness * spring * spring
    }

    /// Total mechanical energy of a flight state `[y, z, ydot, zdot]`.
    pub fn flight_energy(&self, s: &[f64; 4]) -> f64 {
        0.5 * self.mass * (s[2] * s[2] + s[3] * s[3]) + self.mass * self.gravity * s[1]
    }
}

/// Length, time and velocity units of the dimensionless formulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessScale {
    pub length: f64,
    pub time: f64,
    pub velocity: f64,
    pub mass: f64,
    pub gravity: f64,
}

impl DimensionlessScale {
    pub fn new(rest_length: f64, mass: f64, gravity: f64) -> Self {
        DimensionlessScale {
            length: rest_length,
            time: sqrt(rest_length / gravity),
            velocity: sqrt(gravity * rest_length),
            mass,
            gravity,
        }
    }

    /// `k * l0 / (m * g)`.
    pub fn stiffness_ratio(&self, stiffness: f64) -> f64 {
        stiffness * self.length / (self.mass * self.gravity)
    }

    pub fn stiffness_from_ratio(&self, ratio: f64) -> f64 {
        ratio * self.mass * self.gravity / self.length
    }

    /// `b * sqrt(l0 / g) / m`.
    pub fn damping_ratio(&self, damping: f64) -> f64 {
        damping * self.time / self.mass
    }

    pub fn damping_from_ratio(&self, ratio: f64) -> f64 {
        ratio * self.mass / self.time
    }

    pub fn inertia_ratio(&self, inertia: f64) -> f64 {
        inertia / (self.mass * self.length * self.length)
    }

    pub fn inertia_from_ratio(&self, ratio: f64) -> f64 {
        ratio * self.mass * self.length * self.length
    }

    pub fn torque_ratio(&self, torque: f64) -> f64 {
        torque / (self.mass * self.gravity * self.length)
    }

    /// SI apex state to dimensionless.
    pub fn apex_to_dimless(&self, x: &ApexState) -> ApexState {
        ApexState {
            z: x.z / self.length,
            ydot: x.ydot / self.velocity,
            alpha: x.alpha,
            alphadot: x.alphadot * self.time,
        }
    }

    /// Dimensionless apex state to SI.
    pub fn apex_to_si(&self, x: &ApexState) -> ApexState {
        ApexState {
            z: x.z * self.length,
            ydot: x.ydot * self.velocity,
            alpha: x.alpha,
            alphadot: x.alphadot / self.time,
        }
    }
}

/// True physical parameters of the hexapod plant. Per-leg arrays are ordered
/// back, middle, front.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub mass: f64,
    pub inertia: f64,
    pub stiffness: [f64; LEGS],
    pub damping: [f64; LEGS],
    pub rest_length: f64,
    pub hip_offsets: [f64; LEGS],
    pub gravity: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams::reference()
    }
}

impl PlantParams {
    /// Default hexapod-scale robot: 9 kg body, 2000 N/m and 12 N·s/m per virtual
    /// leg, 0.175 m legs. Inertia and hip geometry are assumed values.
    pub fn reference() -> Self {
        PlantParams {
            mass: 9.0,
            inertia: 0.08,
            stiffness: [2000.0; LEGS],
            damping: [12.0; LEGS],
            rest_length: 0.175,
            hip_offsets: [-0.2, 0.0, 0.2],
            gravity: 9.81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter("mass must be positive"));
        }
        if !(self.inertia > 0.0) {
            return Err(Error::InvalidParameter("inertia must be positive"));
        }
        if !self.stiffness.iter().all(|k| *k > 0.0) {
            return Err(Error::InvalidParameter("leg stiffness must be positive"));
        }
        if !self.damping.iter().all(|b| *b >= 0.0) {
            return Err(Error::InvalidParameter("leg damping must be non-negative"));
        }
        if !(self.rest_length > 0.0) {
            return Err(Error::InvalidParameter("rest length must be positive"));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::InvalidParameter("gravity must be positive"));
        }
        let d = &self.hip_offsets;
        if !(d[0] < d[1] && d[1] < d[2]) {
            return Err(Error::InvalidParameter("hip offsets must be strictly increasing back to front"));
        }
        Ok(())
    }

    /// Equivalent single-leg template: all legs in parallel at the COM.
    pub fn template(&self) -> SlipParams {
        SlipParams {
            mass: self.mass,
            stiffness: self.stiffness.iter().sum(),
            damping: self.damping.iter().sum(),
            rest_length: self.rest_length,
            gravity: self.gravity,
        }
    }

    pub fn scale(&self) -> DimensionlessScale {
        DimensionlessScale::new(self.rest_length, self.mass, self.gravity)
    }

    /// Dimensionless image: unit mass, rest length and gravity.
    pub fn nondimensionalize(&self) -> PlantParams {
        let s = self.scale();
        PlantParams {
            mass: 1.0,
            inertia: s.inertia_ratio(self.inertia),
            stiffness: self.stiffness.map(|k| s.stiffness_ratio(k)),
            damping: self.damping.map(|b| s.damping_ratio(b)),
            rest_length: 1.0,
            hip_offsets: self.hip_offsets.map(|d| d / s.length),
            gravity: 1.0,
        }
    }

    /// Inverse of [`PlantParams::nondimensionalize`] given the physical scale.
    pub fn redimensionalize(&self, s: &DimensionlessScale) -> PlantParams {
        PlantParams {
            mass: self.mass * s.mass,
            inertia: s.inertia_from_ratio(self.inertia),
            stiffness: self.stiffness.map(|k| s.stiffness_from_ratio(k)),
            damping: self.damping.map(|b| s.damping_from_ratio(b)),
            rest_length: self.rest_length * s.length,
            hip_offsets: self.hip_offsets.map(|d| d * s.length),
            gravity: self.gravity * s.gravity,
        }
    }
}

/// The controller's (adaptable) estimate of the template parameters, SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamEstimate {
    pub stiffness: f64,
    pub damping: f64,
    pub mass: f64,
    pub rest_length: f64,
}

impl ParamEstimate {
    /// Estimate equal to the plant's equivalent template.
    pub fn matching(p: &PlantParams) -> Self {
        let t = p.template();
        ParamEstimate {
            stiffness: t.stiffness,
            damping: t.damping,
            mass: t.mass,
            rest_length: t.rest_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) {
            return Err(Error::InvalidParameter("estimated stiffness must be positive"));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::InvalidParameter("estimated damping must be non-negative"));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter("estimated mass must be positive"));
        }
        if !(self.rest_length > 0.0) {
            return Err(Error::InvalidParameter("estimated rest length must be positive"));
        }
        Ok(())
    }

    /// Dimensionless template implied by this estimate. States are measured in
    /// the plant's units (`scale`), so only the estimated mass enters the
    /// stiffness and damping ratios and the rest length becomes `l0_hat / l0`.
    pub fn template(&self, scale: &DimensionlessScale) -> SlipParams {
        SlipParams {
            mass: 1.0,
            stiffness: self.stiffness * scale.length / (self.mass * scale.gravity),
            damping: self.damping * scale.time / self.mass,
            rest_length: self.rest_length / scale.length,
            gravity: 1.0,
        }
    }
}

/// State on the apex Poincaré section. Pitch components stay zero for the
/// point-mass template.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApexState {
    pub z: f64,
    pub ydot: f64,
    pub alpha: f64,
    pub alphadot: f64,
}

impl ApexState {
    pub fn new(z: f64, ydot: f64) -> Self {
        ApexState {
            z,
            ydot,
            alpha: 0.0,
            alphadot: 0.0,
        }
    }

    pub fn with_pitch(z: f64, ydot: f64, alpha: f64, alphadot: f64) -> Self {
        ApexState { z, ydot, alpha, alphadot }
    }

    /// The `(z, ydot)` pair that the template map predicts.
    pub fn gait(&self) -> [f64; 2] {
        [self.z, self.ydot]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.z, self.ydot, self.alpha, self.alphadot]
    }

    pub fn from_array(a: &[f64; 4]) -> Self {
        ApexState::with_pitch(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Stride decision: touchdown angle, leg length at touchdown and at liftoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub theta_td: f64,
    pub r_td: f64,
    pub r_lo: f64,
}

impl ControlInput {
    pub fn new(theta_td: f64, r_td: f64, r_lo: f64) -> Self {
        ControlInput { theta_td, r_td, r_lo }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.theta_td, self.r_td, self.r_lo]
    }

    pub fn from_array(a: &[f64; 3]) -> Self {
        ControlInput::new(a[0], a[1], a[2])
    }

    pub fn touchdown_height(&self) -> f64 {
        self.r_td * cos(self.theta_td)
    }

    pub fn validate(&self, rest_length: f64) -> Result<()> {
        if !(self.r_td > 0.0 && self.r_td <= rest_length) {
            return Err(Error::InfeasibleControl("touchdown length outside (0, l0]"));
        }
        if !(self.r_lo > 0.0 && self.r_lo <= rest_length) {
            return Err(Error::InfeasibleControl("liftoff length outside (0, l0]"));
        }
        if !(self.theta_td.abs() < core::f64::consts::FRAC_PI_2) {
            return Err(Error::InfeasibleControl("touchdown angle outside (-pi/2, pi/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Flight,
    Stance,
}

/// Point-mass template state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlipState {
    Flight { y: f64, z: f64, ydot: f64, zdot: f64 },
    Stance { r: f64, theta: f64, rdot: f64, thetadot: f64, toe: f64 },
}

impl SlipState {
    pub fn phase(&self) -> Phase {
        match self {
            SlipState::Flight { .. } => Phase::Flight,
            SlipState::Stance { .. } => Phase::Stance,
        }
    }

    /// Position and velocity of the point mass, `[y, z, ydot, zdot]`.
    pub fn cartesian(&self) -> [f64; 4] {
        match *self {
            SlipState::Flight { y, z, ydot, zdot } => [y, z, ydot, zdot],
            SlipState::Stance { r, theta, rdot, thetadot, toe } => polar_to_cartesian(toe, &[r, theta, rdot, thetadot]),
        }
    }
}

/// Ballistic field on `[y, z, ydot, zdot]`.
pub(crate) fn flight_field(gravity: f64, s: &[f64; 4]) -> [f64; 4] {
    [s[2], s[3], 0.0, -gravity]
}

/// Stance field on `[r, theta, rdot, thetadot]` with hip torque `tau`
/// (generalized force conjugate to `theta`).
pub(crate) fn stance_field(p: &SlipParams, tau: f64, s: &[f64; 4]) -> Result<[f64; 4]> {
    let [r, th, rd, thd] = *s;
    if !(r > 0.0) {
        return Err(Error::Singular(r));
    }
    let m = p.mass;
    let rdd = r * thd * thd + (p.stiffness * (p.rest_length - r) - p.damping * rd) / m - p.gravity * cos(th);
    let thdd = (p.gravity * sin(th) - 2.0 * rd * thd) / r + tau / (m * r * r);
    Ok([rd, thd, rdd, thdd])
}

/// Time derivative of a flight state: `(ydot, zdot, 0, -g)`.
pub fn slip_flight_deriv(s: &SlipState, gravity: f64) -> Result<[f64; 4]> {
    match *s {
        SlipState::Flight { y, z, ydot, zdot } => Ok(flight_field(gravity, &[y, z, ydot, zdot])),
        SlipState::Stance { .. } => Err(Error::PhaseMismatch),
    }
}

/// Time derivative `(rdot, thetadot, rddot, thetaddot)` of a stance state:
///
/// `m r'' = m r theta'^2 + k (l0 - r) - m g cos(theta) - b r'`
/// `m r^2 theta'' + 2 m r r' theta' - m g r sin(theta) = tau`
pub fn slip_stance_deriv(s: &SlipState, p: &SlipParams, tau: f64) -> Result<[f64; 4]> {
    match *s {
        SlipState::Stance { r, theta, rdot, thetadot, .. } => stance_field(p, tau, &[r, theta, rdot, thetadot]),
        SlipState::Flight { .. } => Err(Error::PhaseMismatch),
    }
}

/// `[r, theta, rdot, thetadot]` about a ground toe at `toe` to `[y, z, ydot, zdot]`.
pub fn polar_to_cartesian(toe: f64, s: &[f64; 4]) -> [f64; 4] {
    let [r, th, rd, thd] = *s;
    let (st, ct) = (sin(th), cos(th));
    [
        toe - r * st,
        r * ct,
        -rd * st - r * thd * ct,
        rd * ct - r * thd * st,
    ]
}

/// Inverse of [`polar_to_cartesian`].
pub fn cartesian_to_polar(toe: f64, s: &[f64; 4]) -> [f64; 4] {
    let [y, z, yd, zd] = *s;
    // hip-to-toe vector
    let dy = toe - y;
    let dz = -z;
    let r = hypot(dy, dz);
    let th = atan2(dy, -dz);
    let rd = -(dy * yd + dz * zd) / r;
    let thd = (dz * yd - dy * zd) / (r * r);
    [r, th, rd, thd]
}

/// Rigid-body pose and rates of the hexapod body.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyState {
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub ydot: f64,
    pub zdot: f64,
    pub alphadot: f64,
}

impl BodyState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.y, self.z, self.alpha, self.ydot, self.zdot, self.alphadot]
    }

    pub fn from_array(a: &[f64; 6]) -> Self {
        BodyState {
            y: a[0],
            z: a[1],
            alpha: a[2],
            ydot: a[3],
            zdot: a[4],
            alphadot: a[5],
        }
    }

    /// Position and velocity of the hip at body-axis offset `d`.
    pub fn hip(&self, d: f64) -> ([f64; 2], [f64; 2]) {
        let (sa, ca) = (sin(self.alpha), cos(self.alpha));
        (
            [self.y + d * ca, self.z + d * sa],
            [self.ydot - d * sa * self.alphadot, self.zdot + d * ca * self.alphadot],
        )
    }
}

/// Leg length and angle with their rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegPolar {
    pub r: f64,
    pub theta: f64,
    pub rdot: f64,
    pub thetadot: f64,
}

/// Leg polar coordinates for a hip at body offset `d` and a stationary toe.
pub fn leg_kinematics(body: &BodyState, d: f64, toe: [f64; 2]) -> Result<LegPolar> {
    let (hip, v) = body.hip(d);
    let dy = toe[0] - hip[0];
    let dz = toe[1] - hip[1];
    let r = hypot(dy, dz);
    if !(r > 0.0) {
        return Err(Error::Singular(r));
    }
    if dz >= 0.0 {
        return Err(Error::OutOfWorkspace);
    }
    // toe is fixed, so d/dt (toe - hip) = -v
    Ok(LegPolar {
        r,
        theta: atan2(dy, -dz),
        rdot: -(dy * v[0] + dz * v[1]) / r,
        thetadot: (dz * v[0] - dy * v[1]) / (r * r),
    })
}

/// Toe position reached by a leg of length `r` at angle `theta` from the hip at offset `d`.
pub fn toe_position(body: &BodyState, d: f64, r: f64, theta: f64) -> Result<[f64; 2]> {
    if !(r > 0.0) {
        return Err(Error::Singular(r));
    }
    let (hip, _) = body.hip(d);
    Ok([hip[0] + r * sin(theta), hip[1] - r * cos(theta)])
}

/// Contact status of one virtual leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LegStatus {
    /// Toe pinned on the ground at this horizontal position.
    Stance { toe: f64 },
    /// Leg swinging with the commanded angle and length.
    Flight { angle: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlimpodState {
    pub body: BodyState,
    pub legs: [LegStatus; LEGS],
}

/// Force on the body from one stance leg and its moment about the COM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegLoad {
    pub force: [f64; 2],
    pub moment: f64,
    pub polar: LegPolar,
}

/// Unit vector along which a positive hip torque pushes the body.
pub(crate) fn transverse_dir(theta: f64) -> [f64; 2] {
    [-cos(theta), -sin(theta)]
}

/// Unit vector from toe to hip.
pub(crate) fn axial_dir(theta: f64) -> [f64; 2] {
    [-sin(theta), cos(theta)]
}

#[inline]
pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Load of stance leg `i` with toe at `(toe, 0)` carrying hip torque `tau`.
///
/// The leg is massless, so the ground reaction equals the hip force and acts
/// through the toe: the moment on the body is `(toe - com) x F`, which
/// includes the motor reaction torque.
pub fn stance_leg_load(p: &PlantParams, i: usize, body: &BodyState, toe: f64, tau: f64) -> Result<LegLoad> {
    let polar = leg_kinematics(body, p.hip_offsets[i], [toe, 0.0])?;
    let axial = p.stiffness[i] * (p.rest_length - polar.r) - p.damping[i] * polar.rdot;
    let transverse = tau / polar.r;
    let a = axial_dir(polar.theta);
    let t = transverse_dir(polar.theta);
    let force = [axial * a[0] + transverse * t[0], axial * a[1] + transverse * t[1]];
    let moment = cross([toe - body.y, -body.z], force);
    Ok(LegLoad { force, moment, polar })
}

/// Body accelerations `(yddot, zddot, alphaddot)` under the given hip torques.
/// Flight legs are massless and exert nothing.
pub fn slimpod_deriv(s: &SlimpodState, torques: &[f64; LEGS], p: &PlantParams) -> Result<[f64; 3]> {
    let mut f = [0.0, 0.0];
    let mut m = 0.0;
    for (i, leg) in s.legs.iter().enumerate() {
        if let LegStatus::Stance { toe } = *leg {
            let load = stance_leg_load(p, i, &s.body, toe, torques[i])?;
            f[0] += load.force[0];
            f[1] += load.force[1];
            m += load.moment;
        }
    }
    Ok([f[0] / p.mass, f[1] / p.mass - p.gravity, m / p.inertia])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_slip(k: f64, b: f64) -> SlipParams {
        SlipParams::dimensionless(k, b)
    }

    #[test]
    fn flight_derivative_is_ballistic() {
        let s = SlipState::Flight { y: 0.0, z: 1.2, ydot: 0.5, zdot: 0.0 };
        assert_eq!(slip_flight_deriv(&s, 1.0).unwrap(), [0.5, 0.0, 0.0, -1.0]);
        let s = SlipState::Flight { y: 3.0, z: 0.7, ydot: 0.0, zdot: -2.0 };
        assert_eq!(slip_flight_deriv(&s, 1.0).unwrap()[2], 0.0);
    }

    #[test]
    fn wrong_phase_is_rejected() {
        let st = SlipState::Stance { r: 1.0, theta: 0.0, rdot: 0.0, thetadot: 0.0, toe: 0.0 };
        assert_eq!(slip_flight_deriv(&st, 1.0), Err(Error::PhaseMismatch));
        let fl = SlipState::Flight { y: 0.0, z: 1.0, ydot: 0.0, zdot: 0.0 };
        assert_eq!(slip_stance_deriv(&fl, &unit_slip(10.0, 0.0), 0.0), Err(Error::PhaseMismatch));
    }

    #[test]
    fn spring_at_rest_feels_only_gravity() {
        let p = SlipParams { mass: 9.0, stiffness: 6000.0, damping: 0.0, rest_length: 0.175, gravity: 9.81 };
        let s = SlipState::Stance { r: 0.175, theta: 0.0, rdot: 0.0, thetadot: 0.0, toe: 0.0 };
        let d = slip_stance_deriv(&s, &p, 0.0).unwrap();
        assert_abs_diff_eq!(d[2], -9.81, epsilon = 1e-12);
        assert_abs_diff_eq!(d[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn collapsed_leg_is_singular() {
        let s = SlipState::Stance { r: 0.0, theta: 0.1, rdot: 0.0, thetadot: 0.0, toe: 0.0 };
        assert!(matches!(slip_stance_deriv(&s, &unit_slip(10.0, 0.0), 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn nondimensional_stiffness_of_a_single_leg() {
        let s = DimensionlessScale::new(0.175, 9.0, 9.81);
        // 2000 * 0.175 / (9 * 9.81) = 350 / 88.29
        assert_abs_diff_eq!(s.stiffness_ratio(2000.0), 350.0 / 88.29, epsilon = 1e-12);
        assert_abs_diff_eq!(s.stiffness_ratio(2000.0), 3.9642, epsilon = 1e-4);
        assert_abs_diff_eq!(s.stiffness_ratio(9.0 * 9.81 / 0.175), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nondimensionalize_round_trip() {
        let p = PlantParams::reference();
        let d = p.nondimensionalize();
        assert_eq!(d.mass, 1.0);
        assert_eq!(d.gravity, 1.0);
        assert_eq!(d.rest_length, 1.0);
        let back = d.redimensionalize(&p.scale());
        assert_abs_diff_eq!(back.mass, p.mass, epsilon = 1e-12);
        assert_abs_diff_eq!(back.inertia, p.inertia, epsilon = 1e-12);
        for i in 0..LEGS {
            assert_abs_diff_eq!(back.stiffness[i], p.stiffness[i], epsilon = 1e-12 * p.stiffness[i]);
            assert_abs_diff_eq!(back.damping[i], p.damping[i], epsilon = 1e-12);
            assert_abs_diff_eq!(back.hip_offsets[i], p.hip_offsets[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(back.rest_length, p.rest_length, epsilon = 1e-15);
        assert_abs_diff_eq!(back.gravity, p.gravity, epsilon = 1e-12);
    }

    #[test]
    fn matched_estimate_maps_to_plant_template() {
        let p = PlantParams::reference();
        let est = ParamEstimate::matching(&p);
        let t = est.template(&p.scale());
        let dp = p.nondimensionalize().template();
        assert_abs_diff_eq!(t.stiffness, dp.stiffness, epsilon = 1e-12);
        assert_abs_diff_eq!(t.damping, dp.damping, epsilon = 1e-12);
        assert_abs_diff_eq!(t.rest_length, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = PlantParams::reference();
        p.hip_offsets = [0.0, 0.0, 0.2];
        assert!(p.validate().is_err());
        let mut p = PlantParams::reference();
        p.stiffness[1] = 0.0;
        assert!(p.validate().is_err());
        assert!(PlantParams::reference().validate().is_ok());
        assert!(ControlInput::new(0.3, 1.1, 0.9).validate(1.0).is_err());
        assert!(ControlInput::new(1.7, 0.9, 0.9).validate(1.0).is_err());
    }

    #[test]
    fn vertical_leg_kinematics() {
        let body = BodyState { z: 0.175, ..Default::default() };
        let leg = leg_kinematics(&body, 0.0, [0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(leg.r, 0.175, epsilon = 1e-15);
        assert_abs_diff_eq!(leg.theta, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn angled_leg_kinematics() {
        let h = 0.8;
        let body = BodyState { z: h, ..Default::default() };
        let toe = [h * libm::tan(0.3), 0.0];
        let leg = leg_kinematics(&body, 0.0, toe).unwrap();
        assert_abs_diff_eq!(leg.theta, 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(leg.r, h / cos(0.3), epsilon = 1e-14);
    }

    #[test]
    fn toe_above_hip_is_out_of_workspace() {
        let body = BodyState { z: 0.1, ..Default::default() };
        assert_eq!(leg_kinematics(&body, 0.0, [0.05, 0.2]), Err(Error::OutOfWorkspace));
        assert!(matches!(leg_kinematics(&body, 0.0, [0.0, 0.1]), Err(Error::Singular(_))));
    }

    #[test]
    fn airborne_body_is_ballistic() {
        let s = SlimpodState {
            body: BodyState { z: 1.2, ydot: 1.0, alphadot: 0.3, ..Default::default() },
            legs: [LegStatus::Flight { angle: 0.3, length: 0.9 }; LEGS],
        };
        let p = PlantParams::reference().nondimensionalize();
        assert_eq!(slimpod_deriv(&s, &[0.0; LEGS], &p).unwrap(), [0.0, -1.0, 0.0]);
    }

    #[test]
    fn symmetric_triple_stance_has_no_pitch_or_surge() {
        let p = PlantParams::reference().nondimensionalize();
        let body = BodyState { z: 0.85, zdot: -0.2, ..Default::default() };
        let legs = [0, 1, 2].map(|i| LegStatus::Stance { toe: p.hip_offsets[i] });
        let s = SlimpodState { body, legs };
        let acc = slimpod_deriv(&s, &[0.0; LEGS], &p).unwrap();
        let axial: f64 = (0..LEGS).map(|i| p.stiffness[i] * (1.0 - 0.85) - p.damping[i] * -0.2).sum();
        assert_abs_diff_eq!(acc[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(acc[2], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(acc[1], axial - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn middle_leg_alone_reproduces_torqued_template() {
        // SLIP-T equivalence: compare Cartesian accelerations of the body with
        // those implied by the polar template equations.
        let p = PlantParams::reference().nondimensionalize();
        let t = SlipParams { stiffness: p.stiffness[1], damping: p.damping[1], ..SlipParams::dimensionless(1.0, 0.0) };
        for &(r, th, rd, thd, tau) in &[(0.9, 0.3, -0.4, -1.2, 0.05), (0.75, -0.2, 0.3, -0.8, -0.1), (0.95, 0.0, 0.0, 0.0, 0.0)] {
            let toe = 0.4;
            let c = polar_to_cartesian(toe, &[r, th, rd, thd]);
            let body = BodyState { y: c[0], z: c[1], alpha: 0.0, ydot: c[2], zdot: c[3], alphadot: 0.0 };
            let legs = [LegStatus::Flight { angle: 0.0, length: 1.0 }, LegStatus::Stance { toe }, LegStatus::Flight { angle: 0.0, length: 1.0 }];
            let acc = slimpod_deriv(&SlimpodState { body, legs }, &[0.0, tau, 0.0], &p).unwrap();
            let d = stance_field(&t, tau, &[r, th, rd, thd]).unwrap();
            // Differentiate polar_to_cartesian velocity once more.
            let (st, ct) = (sin(th), cos(th));
            let ydd = -d[2] * st - 2.0 * rd * thd * ct - r * d[3] * ct + r * thd * thd * st;
            let zdd = d[2] * ct - 2.0 * rd * thd * st - r * d[3] * st - r * thd * thd * ct;
            assert_abs_diff_eq!(acc[0], ydd, epsilon = 1e-9);
            assert_abs_diff_eq!(acc[1], zdd, epsilon = 1e-9);
            // Motor reaction: the body pitches opposite to the leg torque.
            assert_abs_diff_eq!(acc[2], -tau / p.inertia, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn leg_placement_round_trip(
            y in -2.0..2.0f64, z in 0.5..1.5f64, alpha in -0.5..0.5f64,
            d in -1.2..1.2f64, r in 0.2..1.0f64, theta in -1.2..1.2f64,
        ) {
            let body = BodyState { y, z, alpha, ..Default::default() };
            let toe = toe_position(&body, d, r, theta).unwrap();
            let leg = leg_kinematics(&body, d, toe).unwrap();
            prop_assert!((leg.r - r).abs() < 1e-12);
            prop_assert!((leg.theta - theta).abs() < 1e-12);
        }

        #[test]
        fn polar_cartesian_round_trip(r in 0.3..1.0f64, th in -1.2..1.2f64, rd in -2.0..2.0f64, thd in -3.0..3.0f64, toe in -1.0..1.0f64) {
            let c = polar_to_cartesian(toe, &[r, th, rd, thd]);
            let back = cartesian_to_polar(toe, &c);
            for (a, b) in back.iter().zip([r, th, rd, thd].iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
