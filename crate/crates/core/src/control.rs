//! Flight leg placement, stance embedding torques, the dead-beat stride
//! solver and the adaptive stiffness law, tied together by
//! [`PronkController`].

use crate::error::{Error, Result};
use crate::hybrid::{Plan, StanceController, StrideController};
use crate::linalg::{damped_min_norm, pinv_solve, Matrix, Vector};
use crate::math::{atan2, clamp, cos, hypot, norm, sin, sqrt};
use crate::model::{
    axial_dir, cross, leg_kinematics, transverse_dir, ApexState, BodyState, ControlInput, LegStatus, ParamEstimate,
    PlantParams, SlimpodState, SlipParams, LEGS,
};
use crate::predict::{error_signs, PredictiveMap, Sensitivity};

/// Where the legs go for the coming touchdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegPlacement {
    /// Time from the given flight state until touchdown.
    pub time_to_touchdown: f64,
    /// Body state at touchdown.
    pub body: BodyState,
    /// Ground point of the virtual leg.
    pub virtual_toe: f64,
    /// Ground point of each leg.
    pub toes: [f64; LEGS],
    /// Commanded `(angle, length)` per leg, held through flight.
    pub commands: [(f64, f64); LEGS],
}

/// Plan leg positions so that at touchdown the virtual leg from the COM has
/// angle `theta_td` and length `r_td`.
///
/// Touchdown is when the COM falls to `r_td cos(theta_td)`. Toes are placed
/// parallel to the virtual leg: toe `i` sits at the virtual toe shifted by
/// the horizontal projection of its hip offset, so at zero pitch every leg
/// matches the virtual leg.
pub fn flight_leg_placement(body: &BodyState, u: &ControlInput, p: &PlantParams) -> Result<LegPlacement> {
    let g = p.gravity;
    let z_td = u.touchdown_height();
    let disc = body.zdot * body.zdot + 2.0 * g * (body.z - z_td);
    if disc < 0.0 {
        return Err(Error::InfeasibleControl("touchdown height above the flight arc"));
    }
    let t = (body.zdot + sqrt(disc)) / g;
    if !(t > 0.0) {
        return Err(Error::InfeasibleControl("touchdown height at or above the body"));
    }
    let mut td = crate::hybrid::ballistic(body, t, g);
    td.z = z_td;
    let virtual_toe = td.y + u.r_td * sin(u.theta_td);
    let ca = cos(td.alpha);
    let mut toes = [0.0; LEGS];
    let mut commands = [(0.0, 0.0); LEGS];
    for i in 0..LEGS {
        let d = p.hip_offsets[i];
        let (hip, _) = td.hip(d);
        if !(hip[1] > 0.0) {
            return Err(Error::InfeasiblePlacement(i));
        }
        toes[i] = virtual_toe + d * ca;
        let (dy, dz) = (toes[i] - hip[0], -hip[1]);
        let r = hypot(dy, dz);
        if !(r > 0.0 && r <= p.rest_length) {
            return Err(Error::InfeasiblePlacement(i));
        }
        commands[i] = (atan2(dy, -dz), r);
    }
    Ok(LegPlacement {
        time_to_touchdown: t,
        body: td,
        virtual_toe,
        toes,
        commands,
    })
}

/// Gains of the stance embedding controller, dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingGains {
    pub kp: f64,
    pub kd: f64,
    /// Tikhonov damping of the torque distribution.
    pub damping: f64,
}

/// Pitch loop natural frequency, per dimensionless time unit. Slower loops
/// leave a stride-to-stride pitch eigenvalue above one at the faster, higher
/// gaits of the default target region.
pub const DEFAULT_PITCH_OMEGA: f64 = 8.0;

impl EmbeddingGains {
    /// PD gains that critically damp `inertia * alpha'' = -kp alpha - kd alpha'`
    /// at natural frequency `omega`.
    pub fn critical(inertia: f64, omega: f64) -> Self {
        EmbeddingGains {
            kp: inertia * omega * omega,
            kd: 2.0 * inertia * omega,
            damping: 0.05,
        }
    }
}

impl Default for EmbeddingGains {
    /// Critical damping at [`DEFAULT_PITCH_OMEGA`] for the default hexapod
    /// inertia.
    fn default() -> Self {
        let p = PlantParams::reference();
        EmbeddingGains::critical(p.scale().inertia_ratio(p.inertia), DEFAULT_PITCH_OMEGA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embedding {
    pub torques: [f64; LEGS],
    /// Net force the template would apply, `(y, z)`.
    pub template_force: [f64; 2],
    /// Pitch moment demanded by the PD law.
    pub pitch_moment: f64,
    /// The stance legs cannot realize an arbitrary wrench.
    pub rank_deficient: bool,
}

/// Hip torques that make the stance legs act like the template's single leg
/// from the COM to the virtual toe, plus a pitch-regulating moment.
///
/// The passive axial spring-damper forces are taken as given; the transverse
/// leg forces (torque over leg length) make up the remaining force and moment
/// in the damped minimum-norm sense.
pub fn embedding_torques(
    s: &SlimpodState,
    p: &PlantParams,
    template: &SlipParams,
    gains: &EmbeddingGains,
    virtual_toe: f64,
) -> Result<Embedding> {
    let b = &s.body;
    let v = leg_kinematics(b, 0.0, [virtual_toe, 0.0])?;
    let f_t = template.stiffness * (template.rest_length - v.r) - template.damping * v.rdot;
    let a = axial_dir(v.theta);
    let template_force = [f_t * a[0], f_t * a[1]];
    let pitch_moment = -gains.kp * b.alpha - gains.kd * b.alphadot;

    let mut legs = [(0usize, 0.0, [0.0; 2], 0.0); LEGS];
    let mut n = 0;
    let mut passive = [0.0; 3];
    for i in 0..LEGS {
        if let LegStatus::Stance { toe } = s.legs[i] {
            let l = leg_kinematics(b, p.hip_offsets[i], [toe, 0.0])?;
            let fa = p.stiffness[i] * (p.rest_length - l.r) - p.damping[i] * l.rdot;
            let ai = axial_dir(l.theta);
            let arm = [toe - b.y, -b.z];
            passive[0] += fa * ai[0];
            passive[1] += fa * ai[1];
            passive[2] += cross(arm, [fa * ai[0], fa * ai[1]]);
            let e = transverse_dir(l.theta);
            legs[n] = (i, l.r, e, cross(arm, e));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter("embedding needs a stance leg"));
    }
    let a_mat = Matrix::from_fn(3, n, |row, col| {
        let (_, _, e, m) = legs[col];
        match row {
            0 => e[0],
            1 => e[1],
            _ => m,
        }
    });
    let rhs = Vector::from_vec(alloc::vec![
        template_force[0] - passive[0],
        template_force[1] - passive[1],
        pitch_moment - passive[2],
    ]);
    let sol = damped_min_norm(&a_mat, &rhs, gains.damping);
    let mut torques = [0.0; LEGS];
    for (col, (i, r, _, _)) in legs[..n].iter().enumerate() {
        torques[*i] = sol.x[col] * r;
    }
    Ok(Embedding {
        torques,
        template_force,
        pitch_moment,
        rank_deficient: sol.rank_deficient,
    })
}

/// Stance controller embedding a fixed dimensionless template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingController {
    pub template: SlipParams,
    pub gains: EmbeddingGains,
}

impl StanceController for EmbeddingController {
    fn torques(&self, s: &SlimpodState, p: &PlantParams, virtual_toe: f64) -> Result<[f64; LEGS]> {
        Ok(embedding_torques(s, p, &self.template, &self.gains, virtual_toe)?.torques)
    }
}

/// Box bounds on `(theta_td, r_td, r_lo)`, dimensionless lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Default for InputBounds {
    fn default() -> Self {
        InputBounds {
            lo: [-1.2, 0.5, 0.5],
            hi: [1.2, 1.0, 1.0],
        }
    }
}

impl InputBounds {
    pub fn validate(&self, rest_length: f64) -> Result<()> {
        for j in 0..3 {
            if !(self.lo[j] < self.hi[j]) {
                return Err(Error::InvalidParameter("input bounds must satisfy lo < hi"));
            }
        }
        let half_pi = core::f64::consts::FRAC_PI_2;
        if !(self.lo[0] > -half_pi && self.hi[0] < half_pi) {
            return Err(Error::InvalidParameter("touchdown angle bounds must lie inside (-pi/2, pi/2)"));
        }
        for j in 1..3 {
            if !(self.lo[j] > 0.0 && self.hi[j] <= rest_length) {
                return Err(Error::InvalidParameter("leg length bounds must lie inside (0, l0]"));
            }
        }
        Ok(())
    }

    fn clamp(&self, u: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|j| clamp(u[j], self.lo[j], self.hi[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadbeatConfig {
    /// Desired apex `(z, ydot)`, dimensionless.
    pub target: ApexState,
    /// Convergence threshold on the weighted residual norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub bounds: InputBounds,
    /// Forward-difference step for the input Jacobian.
    pub fd_step: f64,
    /// Residual weights on `(z, ydot)`.
    pub weights: [f64; 2],
    /// Reference input: among the inputs that reach the target the solver
    /// returns the one closest to this, which makes the solution a smooth
    /// function of the current apex.
    pub nominal: ControlInput,
}

pub const DEADBEAT_TOLERANCE: f64 = 1e-6;
const MAX_BACKTRACKS: usize = 8;

impl DeadbeatConfig {
    pub fn new(target: ApexState) -> Self {
        DeadbeatConfig {
            target,
            tolerance: DEADBEAT_TOLERANCE,
            max_iterations: 30,
            bounds: InputBounds::default(),
            fd_step: 1e-6,
            weights: [1.0, 1.0],
            nominal: ControlInput::new(0.35, 0.8, 0.95),
        }
    }

    pub fn validate(&self, rest_length: f64) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("dead-beat tolerance must be positive"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidParameter("finite-difference step must be positive"));
        }
        if !(self.weights.iter().all(|w| *w > 0.0)) {
            return Err(Error::InvalidParameter("residual weights must be positive"));
        }
        if !(self.target.z > 0.0) {
            return Err(Error::InvalidParameter("target apex height must be positive"));
        }
        self.bounds.validate(rest_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadbeatSolution {
    pub u: ControlInput,
    /// Prediction for `u`.
    pub predicted: ApexState,
    /// Weighted residual norm at `u`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Input driving the predicted next apex to the target.
///
/// Gauss–Newton on the underdetermined system `f(x, u) = target` with a
/// forward-difference Jacobian. Each step solves the linearization for the
/// input closest to the nominal one, active bounds are pinned and the reduced
/// problem re-solved, and the step is halved until the residual decreases.
pub fn deadbeat_solve(
    x: &ApexState,
    cfg: &DeadbeatConfig,
    map: &PredictiveMap,
    est: &ParamEstimate,
) -> Result<DeadbeatSolution> {
    let b = &cfg.bounds;
    let template = est.template(&map.scale);
    // Lowest reachable touchdown height must be below the apex.
    if b.lo[1] * cos(b.hi[0].abs().max(b.lo[0].abs())) >= x.z {
        return Err(Error::InfeasibleTarget);
    }
    let eval = |u: &[f64; 3]| -> Option<([f64; 2], ApexState)> {
        let next = map.predict_template(x, &ControlInput::from_array(u), &template).ok()?;
        let r = [
            cfg.weights[0] * (next.z - cfg.target.z),
            cfg.weights[1] * (next.ydot - cfg.target.ydot),
        ];
        Some((r, next))
    };

    let u0 = b.clamp(cfg.nominal.to_array());
    let mut u = u0;
    let mut cur = eval(&u);
    if cur.is_none() {
        // Shorten the touchdown leg until the toe clears the ground.
        let c = cos(u[0]);
        u[1] = clamp(0.9 * x.z / c, b.lo[1], b.hi[1]);
        cur = eval(&u);
    }
    let Some((mut r, mut pred)) = cur else {
        return Err(Error::InfeasibleTarget);
    };
    let mut res = norm(&r);
    let mut it = 0;
    while res >= cfg.tolerance && it < cfg.max_iterations {
        it += 1;
        // Forward-difference Jacobian, stepping inward at an upper bound.
        let mut jac = Matrix::zeros(2, 3);
        let mut ok = true;
        for j in 0..3 {
            let h = if u[j] + cfg.fd_step > b.hi[j] { -cfg.fd_step } else { cfg.fd_step };
            let mut up = u;
            up[j] += h;
            match eval(&up) {
                Some((rp, _)) => {
                    jac[(0, j)] = (rp[0] - r[0]) / h;
                    jac[(1, j)] = (rp[1] - r[1]) / h;
                }
                None => ok = false,
            }
        }
        if !ok {
            break;
        }
        let target_lin = Vector::from_vec(alloc::vec![
            (0..3).map(|j| jac[(0, j)] * u[j]).sum::<f64>() - r[0],
            (0..3).map(|j| jac[(1, j)] * u[j]).sum::<f64>() - r[1],
        ]);
        let cand = constrained_min_norm_step(&jac, &target_lin, &u0, b);
        let step: [f64; 3] = core::array::from_fn(|j| cand[j] - u[j]);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let trial = b.clamp(core::array::from_fn(|j| u[j] + alpha * step[j]));
            if let Some((rt, pt)) = eval(&trial) {
                let nt = norm(&rt);
                if nt < res {
                    accepted = Some((trial, rt, pt, nt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, rt, pt, nt)) => {
                u = trial;
                r = rt;
                pred = pt;
                res = nt;
            }
            None => break,
        }
    }
    Ok(DeadbeatSolution {
        u: ControlInput::from_array(&u),
        predicted: pred,
        residual: res,
        iterations: it,
        converged: res < cfg.tolerance,
    })
}

/// Solve `J u = c` for the `u` closest to `u0` within the bounds: coordinates
/// the unconstrained solution pushes out of bounds are pinned there and the
/// rest re-solved.
fn constrained_min_norm_step(jac: &Matrix, c: &Vector, u0: &[f64; 3], b: &InputBounds) -> [f64; 3] {
    let mut pinned: [Option<f64>; 3] = [None; 3];
    let mut u = *u0;
    for _ in 0..3 {
        let free: alloc::vec::Vec<usize> = (0..3).filter(|j| pinned[*j].is_none()).collect();
        let mut rhs = c.clone();
        for j in 0..3 {
            let v = pinned[j].unwrap_or(u0[j]);
            rhs[0] -= jac[(0, j)] * v;
            rhs[1] -= jac[(1, j)] * v;
        }
        let jf = Matrix::from_fn(2, free.len(), |row, col| jac[(row, free[col])]);
        let dx = pinv_solve(&jf, &rhs).x;
        for j in 0..3 {
            u[j] = pinned[j].unwrap_or(u0[j]);
        }
        for (col, j) in free.iter().enumerate() {
            u[*j] += dx[col];
        }
        let mut changed = false;
        for j in free {
            if u[j] < b.lo[j] {
                pinned[j] = Some(b.lo[j]);
                changed = true;
            } else if u[j] > b.hi[j] {
                pinned[j] = Some(b.hi[j]);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    b.clamp(u)
}

/// `e = next - predicted` on `(z, ydot)`.
pub fn prediction_error(next: &ApexState, predicted: &ApexState) -> [f64; 2] {
    [next.z - predicted.z, next.ydot - predicted.ydot]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub enabled: bool,
    /// Gain per error component, N/m per unit of (state x error).
    pub gains: [f64; 2],
    /// Sign of `de_j/dk_hat`.
    pub signs: [f64; 2],
    /// Projection bounds on the estimate, N/m.
    pub k_min: f64,
    pub k_max: f64,
}

impl AdaptiveConfig {
    pub fn disabled(k_ref: f64) -> Self {
        AdaptiveConfig {
            enabled: false,
            gains: [0.0; 2],
            signs: [1.0; 2],
            k_min: 0.3 * k_ref,
            k_max: 3.0 * k_ref,
        }
    }

    /// Normalized-gradient gains from a prediction sensitivity `s` (per N/m)
    /// at the target: `K_j = gamma |s_j| / (x_j |s|^2)`. For a pure stiffness
    /// mismatch `dk` this moves the estimate by about `-gamma dk` per stride.
    pub fn from_sensitivity(s: &Sensitivity, target: &ApexState, gamma: f64, k_ref: f64) -> Self {
        let s2 = s.d_dk[0] * s.d_dk[0] + s.d_dk[1] * s.d_dk[1];
        let x = target.gait();
        let gains = if s2 > 0.0 {
            core::array::from_fn(|j| gamma * s.d_dk[j].abs() / (x[j] * s2))
        } else {
            [0.0; 2]
        };
        AdaptiveConfig {
            enabled: true,
            gains,
            signs: error_signs(s),
            ..AdaptiveConfig::disabled(k_ref)
        }
    }

    /// Adaptation is on and has a nonzero gain.
    pub fn active(&self) -> bool {
        self.enabled && self.gains.iter().any(|g| *g != 0.0)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.gains = self.gains.map(|g| g * factor);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gains.iter().all(|g| *g >= 0.0) {
            return Err(Error::InvalidParameter("adaptive gains must be non-negative"));
        }
        if !self.signs.iter().all(|s| *s == 1.0 || *s == -1.0) {
            return Err(Error::InvalidParameter("adaptive signs must be +1 or -1"));
        }
        if !(self.k_min > 0.0 && self.k_min < self.k_max) {
            return Err(Error::InvalidParameter("stiffness bounds must satisfy 0 < k_min < k_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveStep {
    pub k_hat: f64,
    /// The error was not finite; the estimate was held.
    pub held: bool,
}

/// `k_hat - sum_j s_j K_j x_j e_j`, projected onto `[k_min, k_max]`.
pub fn adaptive_update(k_hat: f64, x: &[f64; 2], e: &[f64; 2], cfg: &AdaptiveConfig) -> AdaptiveStep {
    if !cfg.enabled {
        return AdaptiveStep { k_hat, held: false };
    }
    if !e.iter().chain(x.iter()).all(|v| v.is_finite()) {
        return AdaptiveStep { k_hat, held: true };
    }
    let delta: f64 = (0..2).map(|j| cfg.signs[j] * cfg.gains[j] * x[j] * e[j]).sum();
    AdaptiveStep {
        k_hat: clamp(k_hat - delta, cfg.k_min, cfg.k_max),
        held: false,
    }
}

/// Everything the stride controller needs besides its evolving estimate.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub deadbeat: DeadbeatConfig,
    pub adaptive: AdaptiveConfig,
    pub embedding: EmbeddingGains,
    pub map: PredictiveMap,
}

/// Adaptive-law defaults: normalized gain, sensitivity step and estimate
/// bounds relative to the initial estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveDesign {
    pub enabled: bool,
    pub gamma: f64,
    pub sensitivity_step: f64,
    pub k_min_factor: f64,
    pub k_max_factor: f64,
}

impl Default for AdaptiveDesign {
    fn default() -> Self {
        AdaptiveDesign {
            enabled: true,
            gamma: DEFAULT_GAMMA,
            sensitivity_step: 1e-3,
            k_min_factor: 0.3,
            k_max_factor: 3.0,
        }
    }
}

/// Normalized adaptive gain used unless configured otherwise. With gains
/// designed at the operating target the estimate's stride-to-stride
/// eigenvalue is about `1 - gamma`, so one is the dead-beat choice; a grid
/// search over the stability scan confirms it.
pub const DEFAULT_GAMMA: f64 = 1.0;

/// Result of [`ControllerConfig::design`] besides the configuration itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design {
    /// Input reaching the target from the target under the initial estimate.
    pub nominal: DeadbeatSolution,
    pub sensitivity: Sensitivity,
}

impl ControllerConfig {
    /// Controller for `deadbeat.target` under the initial estimate `est`.
    ///
    /// The dead-beat nominal input is replaced by the solution at the target
    /// itself, and the adaptive signs and gains come from the prediction
    /// sensitivity there.
    pub fn design(
        mut deadbeat: DeadbeatConfig,
        adaptive: &AdaptiveDesign,
        embedding: EmbeddingGains,
        map: PredictiveMap,
        est: &ParamEstimate,
    ) -> Result<(Self, Design)> {
        let target = deadbeat.target;
        let nominal = deadbeat_solve(&target, &deadbeat, &map, est)?;
        if !nominal.converged {
            return Err(Error::InfeasibleTarget);
        }
        deadbeat.nominal = nominal.u;
        let sensitivity = map.sensitivity(&target, &nominal.u, est, adaptive.sensitivity_step)?;
        let k = est.stiffness;
        let mut cfg = AdaptiveConfig::from_sensitivity(&sensitivity, &target, adaptive.gamma, k);
        cfg.enabled = adaptive.enabled;
        cfg.k_min = adaptive.k_min_factor * k;
        cfg.k_max = adaptive.k_max_factor * k;
        Ok((
            ControllerConfig {
                deadbeat,
                adaptive: cfg,
                embedding,
                map,
            },
            Design { nominal, sensitivity },
        ))
    }
}

/// Dead-beat stride controller over the predictive map with optional
/// stiffness adaptation and a stance embedding controller.
#[derive(Debug, Clone)]
pub struct PronkController {
    cfg: ControllerConfig,
    estimate: ParamEstimate,
    stance: EmbeddingController,
    last: Option<DeadbeatSolution>,
    held_updates: usize,
}

impl PronkController {
    pub fn new(cfg: ControllerConfig, estimate: ParamEstimate) -> Self {
        let stance = EmbeddingController {
            template: estimate.template(&cfg.map.scale),
            gains: cfg.embedding,
        };
        PronkController {
            cfg,
            estimate,
            stance,
            last: None,
            held_updates: 0,
        }
    }

    pub fn estimate(&self) -> &ParamEstimate {
        &self.estimate
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Solver result of the most recent plan.
    pub fn last_solution(&self) -> Option<&DeadbeatSolution> {
        self.last.as_ref()
    }

    /// Number of updates skipped because the error was not finite.
    pub fn held_updates(&self) -> usize {
        self.held_updates
    }

    fn set_stiffness(&mut self, k: f64) {
        self.estimate.stiffness = k;
        self.stance.template = self.estimate.template(&self.cfg.map.scale);
    }
}

impl StrideController for PronkController {
    fn plan(&mut self, x: &ApexState) -> Result<Plan> {
        let sol = deadbeat_solve(x, &self.cfg.deadbeat, &self.cfg.map, &self.estimate)?;
        self.last = Some(sol);
        Ok(Plan {
            u: sol.u,
            predicted: sol.predicted,
        })
    }

    fn stance(&self) -> &dyn StanceController {
        &self.stance
    }

    fn observe(&mut self, x: &ApexState, plan: &Plan, next: &ApexState) {
        let e = prediction_error(next, &plan.predicted);
        let step = adaptive_update(self.estimate.stiffness, &x.gait(), &e, &self.cfg.adaptive);
        if step.held {
            self.held_updates += 1;
        }
        if step.k_hat != self.estimate.stiffness {
            self.set_stiffness(step.k_hat);
        }
    }

    fn stiffness_estimate(&self) -> f64 {
        self.estimate.stiffness
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dimless() -> PlantParams {
        PlantParams::reference().nondimensionalize()
    }

    #[test]
    fn middle_leg_follows_virtual_leg_at_zero_pitch() {
        let p = dimless();
        let body = BodyState { z: 1.2, ydot: 1.1, ..Default::default() };
        let u = ControlInput::new(0.35, 0.8, 0.95);
        let pl = flight_leg_placement(&body, &u, &p).unwrap();
        assert_abs_diff_eq!(pl.commands[1].0, 0.35, epsilon = 1e-14);
        assert_abs_diff_eq!(pl.commands[1].1, 0.8, epsilon = 1e-14);
        // Front and back legs mirror the virtual leg's angle at zero pitch.
        assert_abs_diff_eq!(pl.commands[0].0, pl.commands[2].0, epsilon = 1e-14);
        assert_abs_diff_eq!(pl.commands[0].0, 0.35, epsilon = 1e-14);
    }

    #[test]
    fn placement_realizes_virtual_leg() {
        let p = dimless();
        let body = BodyState { z: 1.15, ydot: 1.3, zdot: 0.2, alpha: 0.08, alphadot: -0.05, y: 0.4 };
        let u = ControlInput::new(0.3, 0.78, 0.95);
        let pl = flight_leg_placement(&body, &u, &p).unwrap();
        let v = leg_kinematics(&pl.body, 0.0, [pl.virtual_toe, 0.0]).unwrap();
        assert_abs_diff_eq!(v.theta, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(v.r, 0.78, epsilon = 1e-9);
        for i in 0..LEGS {
            let l = leg_kinematics(&pl.body, p.hip_offsets[i], [pl.toes[i], 0.0]).unwrap();
            assert_abs_diff_eq!(l.theta, pl.commands[i].0, epsilon = 1e-12);
            assert_abs_diff_eq!(l.r, pl.commands[i].1, epsilon = 1e-12);
        }
    }

    #[test]
    fn unreachable_placement_is_rejected() {
        let p = dimless();
        // Steep pitch lifts the front hip beyond leg reach.
        let body = BodyState { z: 1.2, ydot: 1.0, alpha: 0.5, ..Default::default() };
        let u = ControlInput::new(0.3, 0.95, 0.95);
        assert_eq!(flight_leg_placement(&body, &u, &p), Err(Error::InfeasiblePlacement(2)));
    }

    fn stance_state(p: &PlantParams, body: BodyState, vtoe: f64) -> SlimpodState {
        SlimpodState {
            body,
            legs: core::array::from_fn(|i| LegStatus::Stance { toe: vtoe + p.hip_offsets[i] }),
        }
    }

    #[test]
    fn axial_template_force_needs_no_torque() {
        let p = dimless();
        let body = BodyState { y: -0.3, z: 0.85, ydot: 1.1, zdot: -0.4, ..Default::default() };
        let s = stance_state(&p, body, 0.0);
        let emb = embedding_torques(&s, &p, &p.template(), &EmbeddingGains::default(), 0.0).unwrap();
        for t in emb.torques {
            assert_abs_diff_eq!(t, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_leg_at_com_passive_template_torque_is_zero() {
        let p = dimless();
        let body = BodyState { y: -0.2, z: 0.9, ydot: 1.0, zdot: -0.3, ..Default::default() };
        let mut s = stance_state(&p, body, 0.0);
        s.legs[0] = LegStatus::Flight { angle: 0.0, length: 1.0 };
        s.legs[2] = LegStatus::Flight { angle: 0.0, length: 1.0 };
        let t = SlipParams { stiffness: p.stiffness[1], damping: p.damping[1], ..SlipParams::dimensionless(1.0, 0.0) };
        let emb = embedding_torques(&s, &p, &t, &EmbeddingGains::default(), 0.0).unwrap();
        assert_abs_diff_eq!(emb.torques[1], 0.0, epsilon = 1e-12);
        assert_eq!(emb.torques[0], 0.0);
    }

    #[test]
    fn pitch_torques_scale_linearly_with_gain() {
        let p = dimless();
        let body = BodyState { y: -0.3, z: 0.85, alpha: 0.05, alphadot: 0.2, ydot: 1.1, zdot: -0.4 };
        let s = stance_state(&p, body, 0.0);
        let g1 = EmbeddingGains { kp: 2.0, kd: 0.0, damping: 0.05 };
        let g2 = EmbeddingGains { kp: 4.0, ..g1 };
        let g0 = EmbeddingGains { kp: 0.0, ..g1 };
        let t0 = embedding_torques(&s, &p, &p.template(), &g0, 0.0).unwrap();
        let t1 = embedding_torques(&s, &p, &p.template(), &g1, 0.0).unwrap();
        let t2 = embedding_torques(&s, &p, &p.template(), &g2, 0.0).unwrap();
        assert_abs_diff_eq!(t2.pitch_moment, 2.0 * t1.pitch_moment, epsilon = 1e-15);
        for i in 0..LEGS {
            assert_abs_diff_eq!(t2.torques[i] - t0.torques[i], 2.0 * (t1.torques[i] - t0.torques[i]), epsilon = 1e-12);
        }
    }

    #[test]
    fn prediction_error_arithmetic() {
        let e = prediction_error(&ApexState::new(0.21, 1.55), &ApexState::new(0.195, 1.6));
        assert_abs_diff_eq!(e[0], 0.015, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], -0.05, epsilon = 1e-15);
        let a = ApexState::new(1.1, 1.3);
        assert_eq!(prediction_error(&a, &a), [0.0, 0.0]);
    }

    #[test]
    fn adaptive_update_fixed_points() {
        let cfg = AdaptiveConfig {
            enabled: true,
            gains: [500.0, 300.0],
            signs: [1.0, -1.0],
            ..AdaptiveConfig::disabled(6000.0)
        };
        let x = [1.1, 1.2];
        assert_eq!(adaptive_update(5000.0, &x, &[0.0, 0.0], &cfg).k_hat, 5000.0);
        let zero = AdaptiveConfig { gains: [0.0; 2], ..cfg };
        assert_eq!(adaptive_update(5000.0, &x, &[0.3, -0.2], &zero).k_hat, 5000.0);
        let step = adaptive_update(5000.0, &x, &[0.01, 0.02], &cfg);
        assert_abs_diff_eq!(step.k_hat, 5000.0 - (500.0 * 1.1 * 0.01 - 300.0 * 1.2 * 0.02), epsilon = 1e-9);
        let held = adaptive_update(5000.0, &x, &[f64::NAN, 0.0], &cfg);
        assert!(held.held);
        assert_eq!(held.k_hat, 5000.0);
    }
}
