//! Fixed points, numerical linearization and stability of the closed-loop
//! stride map, and miscalibration sweeps.
//!
//! The closed-loop Poincaré state is `(z, ydot)`, extended by `(alpha,
//! alphadot)` for the hexapod and by `kappa = k_hat / k_ref` while adaptation
//! is active.

use alloc::vec::Vec;

use crate::control::{ControllerConfig, PronkController};
use crate::error::{Error, Result};
use crate::hybrid::{apex_return_map, simulate_strides, Plant, SimSettings, StrideController, StrideRecord};
use crate::linalg::{eigen_magnitudes, Matrix};
use crate::math::{abs, norm};
use crate::model::{ApexState, ParamEstimate, PlantParams};

/// One closed-loop configuration whose stride map is analyzed.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub plant: Plant,
    pub controller: ControllerConfig,
    /// Estimate at the start; its stiffness is replaced by the state's when
    /// adaptation is active.
    pub estimate: ParamEstimate,
    /// Stiffness used to normalize the estimate in the state vector, N/m.
    pub k_ref: f64,
    pub settings: SimSettings,
}

impl ClosedLoop {
    pub fn adaptive(&self) -> bool {
        self.controller.adaptive.active()
    }

    pub fn dim(&self) -> usize {
        2 + if self.plant.has_pitch() { 2 } else { 0 } + usize::from(self.adaptive())
    }

    pub fn pack(&self, x: &ApexState, k_hat: f64) -> Vec<f64> {
        let mut s = alloc::vec![x.z, x.ydot];
        if self.plant.has_pitch() {
            s.extend_from_slice(&[x.alpha, x.alphadot]);
        }
        if self.adaptive() {
            s.push(k_hat / self.k_ref);
        }
        s
    }

    pub fn unpack(&self, s: &[f64]) -> Result<(ApexState, f64)> {
        if s.len() != self.dim() {
            return Err(Error::InvalidParameter("closed-loop state has the wrong dimension"));
        }
        let mut x = ApexState::new(s[0], s[1]);
        let mut i = 2;
        if self.plant.has_pitch() {
            x.alpha = s[2];
            x.alphadot = s[3];
            i = 4;
        }
        let k = if self.adaptive() { s[i] * self.k_ref } else { self.estimate.stiffness };
        Ok((x, k))
    }

    /// The dead-beat target with the initial estimate.
    pub fn start(&self) -> Vec<f64> {
        let t = self.controller.deadbeat.target;
        self.pack(&ApexState::new(t.z, t.ydot), self.estimate.stiffness)
    }

    /// One closed-loop stride: plan, simulate the plant, adapt.
    pub fn step(&self, s: &[f64]) -> Result<Vec<f64>> {
        let (x, k) = self.unpack(s)?;
        let est = ParamEstimate {
            stiffness: k,
            ..self.estimate
        };
        let mut c = PronkController::new(self.controller.clone(), est);
        let plan = c.plan(&x)?;
        let next = apex_return_map(&x, &plan.u, &self.plant, c.stance(), &self.settings)?;
        c.observe(&x, &plan, &next);
        Ok(self.pack(&next, c.stiffness_estimate()))
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub state: Vec<f64>,
    /// `|map(state) - state|`.
    pub residual: f64,
    pub strides: usize,
}

/// Iterate `map` from `start` until successive iterates are closer than `tol`.
pub fn find_fixed_point(
    map: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    start: &[f64],
    tol: f64,
    max_strides: usize,
) -> Result<FixedPoint> {
    let mut x = start.to_vec();
    let mut last_step = f64::INFINITY;
    for n in 0..max_strides {
        let next = map(&x)?;
        let step = distance(&next, &x);
        if !step.is_finite() {
            return Err(Error::NonFinite(n as f64));
        }
        if step < tol {
            return Ok(FixedPoint {
                state: x,
                residual: step,
                strides: n,
            });
        }
        last_step = step;
        x = next;
    }
    Err(Error::Diverged {
        strides: max_strides,
        last_step,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: Matrix,
    /// Some column used a one-sided difference because the map failed on
    /// the other side.
    pub one_sided: bool,
}

/// Central-difference Jacobian of `map` at `x` with step `h`.
pub fn numerical_jacobian(map: &dyn Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], h: f64) -> Result<Jacobian> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("jacobian step must be positive"));
    }
    let n = x.len();
    let mut m: Option<Matrix> = None;
    let mut one_sided = false;
    let mut centre: Option<Vec<f64>> = None;
    for j in 0..n {
        let shifted = |s: f64| {
            let mut p = x.to_vec();
            p[j] += s;
            map(&p)
        };
        let (col, span) = match (shifted(h), shifted(-h)) {
            (Ok(a), Ok(b)) => (diff(&a, &b), 2.0 * h),
            (a, b) => {
                one_sided = true;
                if centre.is_none() {
                    centre = Some(map(x)?);
                }
                let c = centre.as_ref().unwrap();
                match (a, b) {
                    (Ok(a), _) => (diff(&a, c), h),
                    (_, Ok(b)) => (diff(c, &b), h),
                    (Err(e), _) => return Err(e),
                }
            }
        };
        let mat = m.get_or_insert_with(|| Matrix::zeros(col.len(), n));
        for (i, v) in col.iter().enumerate() {
            mat[(i, j)] = v / span;
        }
    }
    Ok(Jacobian {
        matrix: m.unwrap_or_else(|| Matrix::zeros(0, 0)),
        one_sided,
    })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConfig {
    pub fixed_point_tol: f64,
    pub max_strides: usize,
    pub jacobian_step: f64,
    /// Dead-beat tolerance used while analyzing; tighter than for simulation
    /// so the solver's stopping rule does not show up in the derivatives.
    pub deadbeat_tolerance: Option<f64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            fixed_point_tol: 1e-8,
            max_strides: 200,
            jacobian_step: 1e-5,
            deadbeat_tolerance: Some(1e-10),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub fixed_point: Vec<f64>,
    pub strides: usize,
    pub jacobian: Matrix,
    /// Eigenvalue magnitudes, descending.
    pub magnitudes: Vec<f64>,
    pub max_magnitude: f64,
    pub stable: bool,
    pub one_sided: bool,
}

/// Fixed point, linearization and eigenvalue verdict of one closed loop.
pub fn stability_point(cl: &ClosedLoop, cfg: &StabilityConfig) -> Result<StabilityReport> {
    let mut cl = cl.clone();
    if let Some(tol) = cfg.deadbeat_tolerance {
        cl.controller.deadbeat.tolerance = tol;
    }
    let map = |s: &[f64]| cl.step(s);
    let fp = find_fixed_point(&map, &cl.start(), cfg.fixed_point_tol, cfg.max_strides)?;
    let jac = numerical_jacobian(&map, &fp.state, cfg.jacobian_step)?;
    let magnitudes = eigen_magnitudes(&jac.matrix)?;
    let max_magnitude = magnitudes.first().copied().unwrap_or(0.0);
    Ok(StabilityReport {
        fixed_point: fp.state,
        strides: fp.strides,
        jacobian: jac.matrix,
        magnitudes,
        max_magnitude,
        stable: max_magnitude < 1.0,
        one_sided: jac.one_sided,
    })
}

/// Stability of every configuration, in order. Failures are kept per point.
pub fn stability_scan(points: &[ClosedLoop], cfg: &StabilityConfig) -> Vec<Result<StabilityReport>> {
    points.iter().map(|cl| stability_point(cl, cfg)).collect()
}

/// Outcome of [`gain_grid_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct GainSearch {
    /// Factor with the smallest worst-case spectral radius.
    pub best: f64,
    /// Largest eigenvalue magnitude over all points, per candidate factor;
    /// infinite when a point has no fixed point.
    pub worst: Vec<f64>,
}

/// Scales the adaptive gains of every closed loop in `points` by each
/// candidate factor and keeps the one minimizing the largest eigenvalue
/// magnitude over the points.
pub fn gain_grid_search(points: &[ClosedLoop], factors: &[f64], cfg: &StabilityConfig) -> Result<GainSearch> {
    if points.is_empty() || factors.is_empty() || !factors.iter().all(|f| f.is_finite() && *f > 0.0) {
        return Err(Error::InvalidParameter("gain search needs points and positive factors"));
    }
    let worst: Vec<f64> = factors
        .iter()
        .map(|&f| {
            points
                .iter()
                .map(|cl| {
                    let mut cl = cl.clone();
                    cl.controller.adaptive = cl.controller.adaptive.scaled(f);
                    stability_point(&cl, cfg).map_or(f64::INFINITY, |r| r.max_magnitude)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let (i, _) = worst
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &w)| if w < acc.1 { (i, w) } else { acc });
    Ok(GainSearch { best: factors[i], worst })
}

/// Parameter perturbed in a miscalibration sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Stiffness,
    Mass,
    Damping,
    /// Constant offset of the prediction by a fraction of the target.
    MapOffset,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Stiffness => "stiffness",
            SweepParam::Mass => "mass",
            SweepParam::Damping => "damping",
            SweepParam::MapOffset => "map_offset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stiffness" => Some(SweepParam::Stiffness),
            "mass" => Some(SweepParam::Mass),
            "damping" => Some(SweepParam::Damping),
            "map_offset" => Some(SweepParam::MapOffset),
            _ => None,
        }
    }
}

/// When a closed-loop run counts as settled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleConfig {
    /// Consecutive strides whose state change must stay below `threshold`.
    pub window: usize,
    pub threshold: f64,
    pub max_strides: usize,
}

impl Default for SettleConfig {
    fn default() -> Self {
        SettleConfig {
            window: 10,
            threshold: 1e-6,
            max_strides: 200,
        }
    }
}

/// Closed-loop run stopped once settled.
#[derive(Debug, Clone, PartialEq)]
pub struct SettledRun {
    pub records: Vec<StrideRecord>,
    /// Stride index at which the settling window closed.
    pub settled_at: Option<usize>,
}

impl SettledRun {
    pub fn faulted(&self) -> bool {
        self.records.iter().any(|r| r.fault.is_some())
    }

    /// Prediction error of the last completed stride.
    pub fn final_error(&self) -> Option<[f64; 2]> {
        self.records.last().and_then(|r| r.error)
    }
}

/// Run strides until the state (and the normalized estimate, when `k_ref`
/// is given) stops changing, a fault occurs, or the stride budget runs out.
pub fn run_until_settled(
    x0: &ApexState,
    ctrl: &mut dyn StrideController,
    plant: &Plant,
    settings: &SimSettings,
    settle: &SettleConfig,
    k_ref: Option<f64>,
) -> SettledRun {
    let mut records = Vec::new();
    let mut x = *x0;
    let mut quiet = 0usize;
    for n in 0..settle.max_strides {
        let mut run = simulate_strides(&x, ctrl, 1, plant, settings);
        let mut rec = run.records.remove(0);
        rec.n = n;
        records.push(rec);
        let Some(next) = rec.next else {
            return SettledRun { records, settled_at: None };
        };
        let mut change = [
            next.z - x.z,
            next.ydot - x.ydot,
            next.alpha - x.alpha,
            next.alphadot - x.alphadot,
            0.0,
        ];
        if let Some(k) = k_ref {
            change[4] = (ctrl.stiffness_estimate() - rec.k_hat) / k;
        }
        quiet = if norm(&change) < settle.threshold { quiet + 1 } else { 0 };
        x = next;
        if quiet >= settle.window {
            return SettledRun {
                records,
                settled_at: Some(n),
            };
        }
    }
    SettledRun { records, settled_at: None }
}

/// Everything fixed across a sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub plant: Plant,
    /// True plant parameters, SI.
    pub true_params: PlantParams,
    pub controller: ControllerConfig,
    pub settings: SimSettings,
    pub settle: SettleConfig,
    pub start: ApexState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Fractional deviation (0.1 is +10 %).
    pub deviation: f64,
    /// Steady-state prediction error `(e_z, e_ydot)`; NaN after a fault.
    pub error: [f64; 2],
    pub reached_fixed_point: bool,
    pub faulted: bool,
    pub strides: usize,
    pub final_state: Option<ApexState>,
    /// Final stiffness estimate, N/m.
    pub k_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub adaptive: bool,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn converged(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.reached_fixed_point)
    }
}

/// Controller estimate for a deviation of one parameter.
pub fn perturbed_estimate(true_params: &PlantParams, param: SweepParam, deviation: f64) -> ParamEstimate {
    let mut est = ParamEstimate::matching(true_params);
    let f = 1.0 + deviation;
    match param {
        SweepParam::Stiffness => est.stiffness *= f,
        SweepParam::Mass => est.mass *= f,
        SweepParam::Damping => est.damping *= f,
        SweepParam::MapOffset => {}
    }
    est
}

/// Settled closed-loop outcome for one deviation.
pub fn miscalibration_point(setup: &SweepSetup, param: SweepParam, deviation: f64) -> SweepPoint {
    let est = perturbed_estimate(&setup.true_params, param, deviation);
    let mut cfg = setup.controller.clone();
    if param == SweepParam::MapOffset {
        let t = cfg.deadbeat.target;
        cfg.map.offset = [deviation * t.z, deviation * t.ydot];
    }
    let adaptive = cfg.adaptive.active();
    let k_ref = setup.true_params.template().stiffness;
    let mut ctrl = PronkController::new(cfg, est);
    let run = run_until_settled(
        &setup.start,
        &mut ctrl,
        &setup.plant,
        &setup.settings,
        &setup.settle,
        adaptive.then_some(k_ref),
    );
    let faulted = run.faulted();
    SweepPoint {
        deviation,
        error: if faulted {
            [f64::NAN; 2]
        } else {
            run.final_error().unwrap_or([f64::NAN; 2])
        },
        reached_fixed_point: run.settled_at.is_some(),
        faulted,
        strides: run.records.len(),
        final_state: run.records.last().and_then(|r| r.next),
        k_hat: ctrl.stiffness_estimate(),
    }
}

/// Check a deviation grid: strictly increasing, within +-50 %.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("deviation grid is empty"));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter("deviation grid must be strictly increasing"));
    }
    if !grid.iter().all(|d| abs(*d) <= 0.5) {
        return Err(Error::InvalidParameter("deviations must lie within +-50%"));
    }
    Ok(())
}

/// Sequential sweep over `grid`.
pub fn miscalibration_sweep(setup: &SweepSetup, param: SweepParam, grid: &[f64]) -> Result<SweepResult> {
    validate_grid(grid)?;
    Ok(SweepResult {
        param,
        adaptive: setup.controller.adaptive.active(),
        points: grid.iter().map(|d| miscalibration_point(setup, param, *d)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}
