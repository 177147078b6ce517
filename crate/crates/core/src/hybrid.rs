//! Event-driven stride simulation: apex → touchdown → bottom → liftoff → apex.
//!
//! Flight is ballistic for both plants (legs are massless and the body pitch
//! rate is constant), so flight segments are evaluated in closed form and only
//! stance is integrated. A stride always starts at an apex with `y = 0` and
//! `t = 0`; [`simulate_strides`] stitches strides into one time line.

use alloc::vec::Vec;

use crate::control::flight_leg_placement;
use crate::error::{Error, FaultKind, Result};
use crate::integrate::{integrate_phase, Crossing, Guard, PhaseEnd, PhaseSettings, Stepping};
use crate::math::{abs, cos, sqrt};
use crate::model::{
    cartesian_to_polar, leg_kinematics, polar_to_cartesian, slimpod_deriv, stance_field, ApexState, BodyState,
    ControlInput, LegStatus, Phase, PlantParams, SlimpodState, SlipParams, LEGS, OVERSHOOT_MARGIN,
};

/// Lowest admissible COM height during stance, in rest lengths.
pub const MIN_COM_HEIGHT: f64 = 0.2;
/// Largest admissible body pitch magnitude.
pub const MAX_PITCH: f64 = core::f64::consts::FRAC_PI_3;
/// Longest admissible stance, dimensionless time.
pub const MAX_STANCE: f64 = 5.0;
/// Legs this close to liftoff length when another leg lifts off detach with it.
const SIMULTANEOUS_LIFTOFF: f64 = 1e-8;

/// Plant used for the realized return map. Parameters are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plant {
    Slip(SlipParams),
    Slimpod(PlantParams),
}

impl Plant {
    pub fn has_pitch(&self) -> bool {
        matches!(self, Plant::Slimpod(_))
    }

    pub fn rest_length(&self) -> f64 {
        match self {
            Plant::Slip(p) => p.rest_length,
            Plant::Slimpod(p) => p.rest_length,
        }
    }

    pub fn gravity(&self) -> f64 {
        match self {
            Plant::Slip(p) => p.gravity,
            Plant::Slimpod(p) => p.gravity,
        }
    }
}

/// When a multi-leg stance ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LiftoffPolicy {
    /// Each leg detaches on its own; stance ends when the last one leaves.
    #[default]
    LastLeg,
    /// All legs detach when the first one reaches liftoff length.
    FirstLeg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub stepping: Stepping,
    pub max_stance: f64,
    pub event_tol: f64,
    pub liftoff: LiftoffPolicy,
    /// Keep trajectory samples.
    pub record: bool,
    /// Sampling interval for recorded flight segments.
    pub flight_sample: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            stepping: Stepping::Adaptive { rtol: 1e-9, atol: 1e-11 },
            max_stance: MAX_STANCE,
            event_tol: 1e-10,
            liftoff: LiftoffPolicy::LastLeg,
            record: false,
            flight_sample: 0.02,
        }
    }
}

impl SimSettings {
    /// Fixed-step settings giving a map that is smooth in its inputs, with
    /// accuracy near `tol`.
    pub fn fixed(tol: f64) -> Self {
        SimSettings {
            stepping: Stepping::fixed_for_tolerance(tol),
            ..SimSettings::default()
        }
    }

    pub fn recording(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    fn phase(&self, max_duration: f64) -> PhaseSettings {
        let mut s = PhaseSettings::adaptive(1e-9, 1e-11, max_duration)
            .with_stepping(self.stepping)
            .with_timeout_fault(FaultKind::StanceTimeout)
            .recording(self.record);
        s.event_tol = self.event_tol;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Touchdown,
    Bottom,
    Liftoff,
    Apex,
    Fault(FaultKind),
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Touchdown => "touchdown",
            EventKind::Bottom => "bottom",
            EventKind::Liftoff => "liftoff",
            EventKind::Apex => "apex",
            EventKind::Fault(k) => k.as_str(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridEvent {
    pub kind: EventKind,
    pub time: f64,
    pub body: BodyState,
}

/// One trajectory row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub phase: Phase,
    pub body: BodyState,
    pub event: Option<EventKind>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrideEnd {
    Apex(ApexState),
    Fault(FaultKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stride {
    pub end: StrideEnd,
    pub events: Vec<HybridEvent>,
    /// Empty unless recording was requested. The first sample is the
    /// starting apex.
    pub samples: Vec<Sample>,
}

impl Stride {
    pub fn apex(&self) -> Result<ApexState> {
        match self.end {
            StrideEnd::Apex(x) => Ok(x),
            StrideEnd::Fault(k) => Err(Error::Fault(k)),
        }
    }

    pub fn event(&self, kind: EventKind) -> Option<&HybridEvent> {
        self.events.iter().find(|e| e.kind == kind)
    }
}

struct Recorder {
    on: bool,
    events: Vec<HybridEvent>,
    samples: Vec<Sample>,
}

impl Recorder {
    fn new(on: bool, start: BodyState) -> Self {
        let mut r = Recorder {
            on,
            events: Vec::new(),
            samples: Vec::new(),
        };
        r.sample(0.0, Phase::Flight, start);
        r
    }

    fn sample(&mut self, t: f64, phase: Phase, body: BodyState) {
        if self.on {
            self.samples.push(Sample { t, phase, body, event: None });
        }
    }

    fn event(&mut self, kind: EventKind, t: f64, phase: Phase, body: BodyState) {
        self.events.push(HybridEvent { kind, time: t, body });
        if self.on {
            self.samples.push(Sample {
                t,
                phase,
                body,
                event: Some(kind),
            });
        }
    }

    /// Sample a ballistic arc strictly inside `(t0, t0 + duration)`.
    fn flight(&mut self, t0: f64, body: &BodyState, duration: f64, g: f64, dt: f64) {
        if !self.on || !(dt > 0.0) {
            return;
        }
        let mut k = 1.0;
        while k * dt < duration {
            self.sample(t0 + k * dt, Phase::Flight, ballistic(body, k * dt, g));
            k += 1.0;
        }
    }

    fn finish(self, end: StrideEnd) -> Stride {
        Stride {
            end,
            events: self.events,
            samples: self.samples,
        }
    }
}

/// Body state after `t` of ballistic flight.
pub fn ballistic(b: &BodyState, t: f64, g: f64) -> BodyState {
    BodyState {
        y: b.y + b.ydot * t,
        z: b.z + b.zdot * t - 0.5 * g * t * t,
        alpha: b.alpha + b.alphadot * t,
        ydot: b.ydot,
        zdot: b.zdot - g * t,
        alphadot: b.alphadot,
    }
}

fn apex_body(x: &ApexState) -> BodyState {
    BodyState {
        y: 0.0,
        z: x.z,
        alpha: x.alpha,
        ydot: x.ydot,
        zdot: 0.0,
        alphadot: x.alphadot,
    }
}

/// Ascend from liftoff to the next apex, or fault if the body is not rising.
fn ascend(rec: &mut Recorder, t_lo: f64, lo: &BodyState, g: f64, dt: f64) -> StrideEnd {
    if !(lo.zdot > 0.0) {
        rec.event(EventKind::Fault(FaultKind::NoApex), t_lo, Phase::Flight, *lo);
        return StrideEnd::Fault(FaultKind::NoApex);
    }
    let t_up = lo.zdot / g;
    rec.flight(t_lo, lo, t_up, g, dt);
    let mut top = ballistic(lo, t_up, g);
    top.zdot = 0.0;
    top.z = lo.z + 0.5 * lo.zdot * lo.zdot / g;
    rec.event(EventKind::Apex, t_lo + t_up, Phase::Flight, top);
    StrideEnd::Apex(ApexState::with_pitch(top.z, top.ydot, top.alpha, top.alphadot))
}

fn check_start(x: &ApexState, u: &ControlInput, rest_length: f64) -> Result<f64> {
    u.validate(rest_length)?;
    if !(x.z > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter("apex height must be positive and finite"));
    }
    let z_td = u.touchdown_height();
    if z_td >= x.z {
        return Err(Error::InfeasibleControl("touchdown height at or above apex"));
    }
    Ok(z_td)
}

/// One stride of the point-mass template with a passive leg.
///
/// Errors are returned for inputs that cannot produce a stance (toe stubbing,
/// a leg that is not compressing at touchdown, or a bottom above the liftoff
/// length); physical failures during the stride end it with a fault.
pub fn slip_stride(x: &ApexState, u: &ControlInput, p: &SlipParams, settings: &SimSettings) -> Result<Stride> {
    let z_td = check_start(x, u, p.rest_length)?;
    let g = p.gravity;
    let start = apex_body(&ApexState::new(x.z, x.ydot));
    let mut rec = Recorder::new(settings.record, start);

    let t_td = sqrt(2.0 * (x.z - z_td) / g);
    rec.flight(0.0, &start, t_td, g, settings.flight_sample);
    let mut td = ballistic(&start, t_td, g);
    td.z = z_td;
    rec.event(EventKind::Touchdown, t_td, Phase::Stance, td);

    let toe = td.y + u.r_td * libm::sin(u.theta_td);
    let mut s0 = cartesian_to_polar(toe, &[td.y, td.z, td.ydot, td.zdot]);
    s0[0] = u.r_td;
    s0[1] = u.theta_td;
    if !(s0[2] < 0.0) {
        return Err(Error::InfeasibleControl("leg not compressing at touchdown"));
    }

    let field = |_t: f64, s: &[f64; 4]| stance_field(p, 0.0, s);
    let r_max = (1.0 + OVERSHOOT_MARGIN) * p.rest_length;
    let check = move |_t: f64, s: &[f64; 4]| -> Option<FaultKind> {
        if s[0] <= 0.0 {
            Some(FaultKind::LegCollapse)
        } else if s[0] * cos(s[1]) < MIN_COM_HEIGHT * p.rest_length {
            Some(FaultKind::GroundPenetration)
        } else if s[0] > r_max {
            Some(FaultKind::LegOvershoot)
        } else {
            None
        }
    };
    let to_body = |s: &[f64; 4]| {
        let c = polar_to_cartesian(toe, s);
        BodyState {
            y: c[0],
            z: c[1],
            alpha: 0.0,
            ydot: c[2],
            zdot: c[3],
            alphadot: 0.0,
        }
    };

    // Compression until the radial velocity turns positive.
    let bottom_guard = |_t: f64, s: &[f64; 4]| s[2];
    let guards = [Guard::new(&bottom_guard, Crossing::Rising)];
    let out = integrate_phase(field, t_td, s0, &guards, Some(&check), &settings.phase(settings.max_stance))?;
    record_stance(&mut rec, &out.samples, &to_body);
    let (t_b, s_b) = match out.end {
        PhaseEnd::Event { t, y, .. } => (t, y),
        PhaseEnd::Fault { kind, t, y } => {
            rec.event(EventKind::Fault(kind), t, Phase::Stance, to_body(&y));
            return Ok(rec.finish(StrideEnd::Fault(kind)));
        }
    };
    rec.event(EventKind::Bottom, t_b, Phase::Stance, to_body(&s_b));
    if s_b[0] >= u.r_lo {
        return Err(Error::InfeasibleControl("leg bottoms out above liftoff length"));
    }

    // Extension until the leg reaches liftoff length.
    let r_lo = u.r_lo;
    let lo_guard = move |_t: f64, s: &[f64; 4]| s[0] - r_lo;
    let guards = [Guard::new(&lo_guard, Crossing::Rising)];
    let remaining = settings.max_stance - (t_b - t_td);
    let out = integrate_phase(field, t_b, s_b, &guards, Some(&check), &settings.phase(remaining))?;
    record_stance(&mut rec, &out.samples, &to_body);
    let (t_lo, s_lo) = match out.end {
        PhaseEnd::Event { t, y, .. } => (t, y),
        PhaseEnd::Fault { kind, t, y } => {
            rec.event(EventKind::Fault(kind), t, Phase::Stance, to_body(&y));
            return Ok(rec.finish(StrideEnd::Fault(kind)));
        }
    };
    let lo = to_body(&s_lo);
    rec.event(EventKind::Liftoff, t_lo, Phase::Flight, lo);
    let end = ascend(&mut rec, t_lo, &lo, g, settings.flight_sample);
    Ok(rec.finish(end))
}

/// Push interior integration samples; the segment's endpoints are logged as events.
fn record_stance<const N: usize>(rec: &mut Recorder, samples: &[(f64, [f64; N])], to_body: &dyn Fn(&[f64; N]) -> BodyState) {
    if !rec.on || samples.len() < 3 {
        return;
    }
    for (t, s) in &samples[1..samples.len() - 1] {
        rec.sample(*t, Phase::Stance, to_body(s));
    }
}

/// Hip torque law applied during Slimpod stance.
pub trait StanceController {
    /// Per-leg hip torques for the current state; `virtual_toe` is the ground
    /// point of the virtual leg.
    fn torques(&self, s: &SlimpodState, p: &PlantParams, virtual_toe: f64) -> Result<[f64; LEGS]>;
}

/// Zero hip torques.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassiveStance;

impl StanceController for PassiveStance {
    fn torques(&self, _s: &SlimpodState, _p: &PlantParams, _virtual_toe: f64) -> Result<[f64; LEGS]> {
        Ok([0.0; LEGS])
    }
}

/// One stride of the hexapod plant.
///
/// At touchdown the virtual leg from the COM has the commanded angle and
/// length, and every leg plants its toe at the virtual toe shifted by its
/// hip offset. Legs detach individually when they extend to the liftoff
/// length after the virtual leg's bottom.
pub fn slimpod_stride(
    x: &ApexState,
    u: &ControlInput,
    p: &PlantParams,
    stance: &dyn StanceController,
    settings: &SimSettings,
) -> Result<Stride> {
    check_start(x, u, p.rest_length)?;
    let g = p.gravity;
    let start = apex_body(x);
    let mut rec = Recorder::new(settings.record, start);

    let place = flight_leg_placement(&start, u, p)?;
    let t_td = place.time_to_touchdown;
    rec.flight(0.0, &start, t_td, g, settings.flight_sample);
    let td = place.body;
    rec.event(EventKind::Touchdown, t_td, Phase::Stance, td);
    let vtoe = place.virtual_toe;
    let toes = place.toes;

    let virtual_leg = |b: &BodyState| leg_kinematics(b, 0.0, [vtoe, 0.0]);
    if !(virtual_leg(&td)?.rdot < 0.0) {
        return Err(Error::InfeasibleControl("leg not compressing at touchdown"));
    }

    let r_max = (1.0 + OVERSHOOT_MARGIN) * p.rest_length;
    let make_state = |b: BodyState, attached: &[bool; LEGS]| SlimpodState {
        body: b,
        legs: core::array::from_fn(|i| {
            if attached[i] {
                LegStatus::Stance { toe: toes[i] }
            } else {
                LegStatus::Flight {
                    angle: place.commands[i].0,
                    length: place.commands[i].1,
                }
            }
        }),
    };
    let to_body = |s: &[f64; 6]| BodyState::from_array(s);

    let mut attached = [true; LEGS];
    let mut t = t_td;
    let mut y = td.to_array();

    // Compression, then extension with per-leg detachment.
    let mut compressing = true;
    loop {
        let att = attached;
        let field = |_t: f64, s: &[f64; 6]| -> Result<[f64; 6]> {
            let st = make_state(BodyState::from_array(s), &att);
            let tau = stance.torques(&st, p, vtoe)?;
            let a = slimpod_deriv(&st, &tau, p)?;
            Ok([s[3], s[4], s[5], a[0], a[1], a[2]])
        };
        let check = |_t: f64, s: &[f64; 6]| -> Option<FaultKind> {
            let b = BodyState::from_array(s);
            if b.z < MIN_COM_HEIGHT * p.rest_length {
                return Some(FaultKind::GroundPenetration);
            }
            if abs(b.alpha) > MAX_PITCH {
                return Some(FaultKind::BodyInversion);
            }
            for i in 0..LEGS {
                if att[i] {
                    match leg_kinematics(&b, p.hip_offsets[i], [toes[i], 0.0]) {
                        Ok(l) if l.r > r_max => return Some(FaultKind::LegOvershoot),
                        Ok(_) => {}
                        Err(_) => return Some(FaultKind::LegCollapse),
                    }
                }
            }
            None
        };
        let bottom_guard = |_t: f64, s: &[f64; 6]| virtual_leg(&BodyState::from_array(s)).map_or(0.0, |l| l.rdot);
        let leg_guards: [_; LEGS] = core::array::from_fn(|i| {
            let d = p.hip_offsets[i];
            let toe = toes[i];
            let r_lo = u.r_lo;
            move |_t: f64, s: &[f64; 6]| {
                leg_kinematics(&BodyState::from_array(s), d, [toe, 0.0]).map_or(f64::INFINITY, |l| l.r - r_lo)
            }
        });
        let mut guards: Vec<Guard<'_, 6>> = Vec::new();
        let mut guard_leg: Vec<usize> = Vec::new();
        if compressing {
            guards.push(Guard::new(&bottom_guard, Crossing::Rising));
        } else {
            for i in 0..LEGS {
                if attached[i] {
                    guards.push(Guard::new(&leg_guards[i], Crossing::Rising));
                    guard_leg.push(i);
                }
            }
        }
        let remaining = settings.max_stance - (t - t_td);
        let out = integrate_phase(field, t, y, &guards, Some(&check), &settings.phase(remaining))?;
        record_stance(&mut rec, &out.samples, &to_body);
        let (guard, t_e, y_e) = match out.end {
            PhaseEnd::Event { guard, t, y } => (guard, t, y),
            PhaseEnd::Fault { kind, t, y } => {
                rec.event(EventKind::Fault(kind), t, Phase::Stance, to_body(&y));
                return Ok(rec.finish(StrideEnd::Fault(kind)));
            }
        };
        t = t_e;
        y = y_e;
        let b = to_body(&y);
        if compressing {
            compressing = false;
            rec.event(EventKind::Bottom, t, Phase::Stance, b);
            if virtual_leg(&b)?.r >= u.r_lo {
                return Err(Error::InfeasibleControl("leg bottoms out above liftoff length"));
            }
            // Legs already past liftoff length leave immediately.
            for i in 0..LEGS {
                let l = leg_kinematics(&b, p.hip_offsets[i], [toes[i], 0.0])?;
                if l.r >= u.r_lo {
                    attached[i] = false;
                }
            }
        } else {
            attached[guard_leg[guard]] = false;
            if settings.liftoff == LiftoffPolicy::FirstLeg {
                attached = [false; LEGS];
            }
            // Legs reaching liftoff length within the event tolerance of this
            // one (symmetric stances) leave together; their guards would not
            // be armed for the next segment.
            for i in 0..LEGS {
                if attached[i] {
                    let l = leg_kinematics(&b, p.hip_offsets[i], [toes[i], 0.0])?;
                    if l.r - u.r_lo > -SIMULTANEOUS_LIFTOFF {
                        attached[i] = false;
                    }
                }
            }
        }
        if !compressing && attached.iter().all(|a| !a) {
            break;
        }
        rec.sample(t, Phase::Stance, b);
    }

    let lo = to_body(&y);
    rec.event(EventKind::Liftoff, t, Phase::Flight, lo);
    let end = ascend(&mut rec, t, &lo, g, settings.flight_sample);
    Ok(rec.finish(end))
}

/// One stride of either plant.
pub fn stride(
    x: &ApexState,
    u: &ControlInput,
    plant: &Plant,
    stance: &dyn StanceController,
    settings: &SimSettings,
) -> Result<Stride> {
    match plant {
        Plant::Slip(p) => slip_stride(x, u, p, settings),
        Plant::Slimpod(p) => slimpod_stride(x, u, p, stance, settings),
    }
}

/// Exact apex-to-apex return map of the plant. Faults become errors.
pub fn apex_return_map(
    x: &ApexState,
    u: &ControlInput,
    plant: &Plant,
    stance: &dyn StanceController,
    settings: &SimSettings,
) -> Result<ApexState> {
    stride(x, u, plant, stance, settings)?.apex()
}

/// Input chosen for a stride together with the controller's prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub u: ControlInput,
    pub predicted: ApexState,
}

/// A stride-level controller driven once per apex.
pub trait StrideController {
    fn plan(&mut self, x: &ApexState) -> Result<Plan>;
    fn stance(&self) -> &dyn StanceController;
    /// Feed back the realized apex of a stride that completed.
    fn observe(&mut self, x: &ApexState, plan: &Plan, next: &ApexState);
    /// Current stiffness estimate, N/m.
    fn stiffness_estimate(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrideRecord {
    pub n: usize,
    pub x: ApexState,
    pub u: Option<ControlInput>,
    pub predicted: Option<ApexState>,
    pub next: Option<ApexState>,
    /// `next - predicted` on `(z, ydot)`.
    pub error: Option<[f64; 2]>,
    /// Stiffness estimate used for this stride, N/m.
    pub k_hat: f64,
    pub fault: Option<FaultKind>,
}

impl StrideRecord {
    fn failed(n: usize, x: ApexState, k_hat: f64, kind: FaultKind) -> Self {
        StrideRecord {
            n,
            x,
            u: None,
            predicted: None,
            next: None,
            error: None,
            k_hat,
            fault: Some(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub records: Vec<StrideRecord>,
    pub trajectory: Vec<Sample>,
}

impl Run {
    pub fn faulted(&self) -> bool {
        self.records.iter().any(|r| r.fault.is_some())
    }

    /// Last realized apex, if the final stride completed.
    pub fn last_apex(&self) -> Option<ApexState> {
        self.records.last().and_then(|r| r.next)
    }
}

/// Closed-loop strides from `x0`. A fault ends the simulation; the remaining
/// strides are logged as truncated.
pub fn simulate_strides(
    x0: &ApexState,
    ctrl: &mut dyn StrideController,
    n: usize,
    plant: &Plant,
    settings: &SimSettings,
) -> Run {
    let mut records = Vec::with_capacity(n);
    let mut trajectory = Vec::new();
    let mut x = *x0;
    let (mut t0, mut y0) = (0.0, 0.0);
    let mut faulted = false;
    for i in 0..n {
        let k_hat = ctrl.stiffness_estimate();
        if faulted {
            records.push(StrideRecord::failed(i, x, k_hat, FaultKind::Truncated));
            continue;
        }
        let plan = match ctrl.plan(&x) {
            Ok(plan) => plan,
            Err(e) => {
                records.push(StrideRecord::failed(i, x, k_hat, e.fault_kind()));
                faulted = true;
                continue;
            }
        };
        let mut rec = StrideRecord {
            u: Some(plan.u),
            predicted: Some(plan.predicted),
            ..StrideRecord::failed(i, x, k_hat, FaultKind::Integrator)
        };
        match stride(&x, &plan.u, plant, ctrl.stance(), settings) {
            Ok(s) => {
                let skip = usize::from(i > 0);
                trajectory.extend(s.samples.iter().skip(skip).map(|smp| Sample {
                    t: smp.t + t0,
                    body: BodyState {
                        y: smp.body.y + y0,
                        ..smp.body
                    },
                    ..*smp
                }));
                if let Some(last) = s.events.last() {
                    t0 += last.time;
                    y0 += last.body.y;
                }
                match s.end {
                    StrideEnd::Apex(next) => {
                        rec.next = Some(next);
                        rec.error = Some(prediction_gap(&next, &plan.predicted));
                        rec.fault = None;
                        ctrl.observe(&x, &plan, &next);
                        x = next;
                    }
                    StrideEnd::Fault(kind) => {
                        rec.fault = Some(kind);
                        faulted = true;
                    }
                }
            }
            Err(e) => {
                rec.fault = Some(e.fault_kind());
                faulted = true;
            }
        }
        records.push(rec);
    }
    Run { records, trajectory }
}

fn prediction_gap(next: &ApexState, predicted: &ApexState) -> [f64; 2] {
    [next.z - predicted.z, next.ydot - predicted.ydot]
}
