//! Dormand–Prince 4(5) integration of one continuous phase up to the first
//! guard crossing.
//!
//! Event times are bracketed on accepted steps, bisected (each trial point is
//! a fresh sub-step from the bracketing step's start, so no interpolation
//! error enters) until the guard magnitude drops below the event tolerance,
//! and finally refined once on the cubic Hermite interpolant of the last
//! bracket.

use alloc::vec::Vec;

use crate::error::{Error, FaultKind, Result};
use crate::math::{abs, sqrt};

/// Direction in which a guard function must cross zero to fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// Negative to non-negative.
    Rising,
    /// Positive to non-positive.
    Falling,
}

impl Crossing {
    fn armed(self, g: f64) -> bool {
        match self {
            Crossing::Rising => g < 0.0,
            Crossing::Falling => g > 0.0,
        }
    }
}

/// Scalar guard; an event fires when it crosses zero in the given direction.
pub struct Guard<'a, const N: usize> {
    pub func: &'a dyn Fn(f64, &[f64; N]) -> f64,
    pub crossing: Crossing,
}

impl<'a, const N: usize> Guard<'a, N> {
    pub fn new(func: &'a dyn Fn(f64, &[f64; N]) -> f64, crossing: Crossing) -> Self {
        Guard { func, crossing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    /// Error-controlled steps.
    Adaptive { rtol: f64, atol: f64 },
    /// Constant step length. The output is then a smooth function of the
    /// initial data, which finite-difference consumers rely on.
    Fixed { step: f64 },
}

impl Stepping {
    /// Fixed step whose local truncation error is roughly `tol` for an O(1)
    /// dimensionless problem.
    pub fn fixed_for_tolerance(tol: f64) -> Self {
        Stepping::Fixed {
            step: 0.5 * libm::pow(tol, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSettings {
    pub stepping: Stepping,
    /// Longest phase duration before giving up.
    pub max_duration: f64,
    /// Report a timeout as this fault instead of [`Error::NoEvent`].
    pub timeout_fault: Option<FaultKind>,
    /// Guard magnitude at which bisection stops.
    pub event_tol: f64,
    /// Keep every accepted step in [`PhaseOutcome::samples`].
    pub record: bool,
}

impl PhaseSettings {
    pub fn adaptive(rtol: f64, atol: f64, max_duration: f64) -> Self {
        PhaseSettings {
            stepping: Stepping::Adaptive { rtol, atol },
            max_duration,
            timeout_fault: None,
            event_tol: 1e-10,
            record: false,
        }
    }

    pub fn with_stepping(mut self, stepping: Stepping) -> Self {
        self.stepping = stepping;
        self
    }

    pub fn with_timeout_fault(mut self, kind: FaultKind) -> Self {
        self.timeout_fault = Some(kind);
        self
    }

    pub fn recording(mut self, record: bool) -> Self {
        self.record = record;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseEnd<const N: usize> {
    Event { guard: usize, t: f64, y: [f64; N] },
    Fault { kind: FaultKind, t: f64, y: [f64; N] },
}

impl<const N: usize> PhaseEnd<N> {
    pub fn time(&self) -> f64 {
        match self {
            PhaseEnd::Event { t, .. } | PhaseEnd::Fault { t, .. } => *t,
        }
    }

    pub fn state(&self) -> &[f64; N] {
        match self {
            PhaseEnd::Event { y, .. } | PhaseEnd::Fault { y, .. } => y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome<const N: usize> {
    pub end: PhaseEnd<N>,
    /// Accepted step endpoints, starting with the initial state. Empty unless
    /// recording was requested.
    pub samples: Vec<(f64, [f64; N])>,
    pub accepted_steps: usize,
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) struct Step<const N: usize> {
    pub y: [f64; N],
    pub dy: [f64; N],
    pub err: [f64; N],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// One Dormand–Prince step of length `h` from `(t, y)` with `k1 = f(t, y)`.
pub(crate) fn dopri_step<const N: usize, F>(
    field: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<Step<N>>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k2 = field(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = field(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = field(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = field(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = field(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y5 = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = field(t + h, &y5)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(Step { y: y5, dy: k7, err })
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let scale = atol + rtol * abs(y0[i]).max(abs(y1[i]));
        let r = err[i] / scale;
        acc += r * r;
    }
    sqrt(acc / N as f64)
}

fn all_finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn initial_step<const N: usize>(y0: &[f64; N], f0: &[f64; N], rtol: f64, atol: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = atol + rtol * abs(y0[i]);
        d0 += (y0[i] / sc) * (y0[i] / sc);
        d1 += (f0[i] / sc) * (f0[i] / sc);
    }
    let (d0, d1) = (sqrt(d0 / N as f64), sqrt(d1 / N as f64));
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

/// Cubic Hermite interpolation on `[0, h]`.
fn hermite<const N: usize>(
    h: f64,
    ya: &[f64; N],
    fa: &[f64; N],
    yb: &[f64; N],
    fb: &[f64; N],
    s: f64,
) -> [f64; N] {
    let u = s / h;
    let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
    let h10 = u * (1.0 - u) * (1.0 - u);
    let h01 = u * u * (3.0 - 2.0 * u);
    let h11 = u * u * (u - 1.0);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i];
    }
    out
}

/// Locate the crossing of guard `g` inside the step `[t, t + h]`.
#[allow(clippy::too_many_arguments)]
fn localize<const N: usize, F>(
    field: &F,
    guard: &Guard<'_, N>,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    y_end: &[f64; N],
    f_end: &[f64; N],
    event_tol: f64,
) -> Result<(f64, [f64; N])>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let g = guard.func;
    let armed = guard.crossing;
    // Bracket [lo, hi] in step-local time with lo armed, hi fired.
    let (mut lo, mut y_lo, mut f_lo) = (0.0, *y, *k1);
    let (mut hi, mut y_hi, mut f_hi) = (h, *y_end, *f_end);
    let g_hi = g(t + hi, &y_hi);
    if abs(g_hi) < event_tol {
        return Ok((t + hi, y_hi));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let step = dopri_step(field, t, y, k1, mid)?;
        let gm = g(t + mid, &step.y);
        if armed.armed(gm) {
            lo = mid;
            y_lo = step.y;
            f_lo = step.dy;
        } else {
            hi = mid;
            y_hi = step.y;
            f_hi = step.dy;
        }
        if abs(gm) < event_tol {
            break;
        }
    }
    // Secant (regula falsi) on the Hermite interpolant of the final bracket.
    let width = hi - lo;
    let ga = g(t + lo, &y_lo);
    let gb = g(t + hi, &y_hi);
    let (mut a, mut b, mut fa, mut fb) = (0.0, width, ga, gb);
    let mut s = if fb != fa { a - fa * (b - a) / (fb - fa) } else { 0.5 * width };
    for _ in 0..4 {
        s = s.clamp(0.0, width);
        let gs = g(t + lo + s, &hermite(width, &y_lo, &f_lo, &y_hi, &f_hi, s));
        if gs == 0.0 {
            break;
        }
        if armed.armed(gs) {
            a = s;
            fa = gs;
        } else {
            b = s;
            fb = gs;
        }
        if fb == fa {
            break;
        }
        s = a - fa * (b - a) / (fb - fa);
    }
    let s = s.clamp(0.0, width);
    let t_event = lo + s;
    let y_event = if t_event == h {
        *y_end
    } else {
        dopri_step(field, t, y, k1, t_event)?.y
    };
    Ok((t + t_event, y_event))
}

/// Integrate `field` from `(t0, y0)` until the first guard fires, the `check`
/// callback reports a fault, or the phase times out.
///
/// Every guard must be armed at the start (rising guards negative, falling
/// guards positive); otherwise [`Error::GuardActive`] is returned without
/// integrating.
pub fn integrate_phase<const N: usize, F>(
    field: F,
    t0: f64,
    y0: [f64; N],
    guards: &[Guard<'_, N>],
    check: Option<&dyn Fn(f64, &[f64; N]) -> Option<FaultKind>>,
    settings: &PhaseSettings,
) -> Result<PhaseOutcome<N>>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut g_prev: Vec<f64> = Vec::with_capacity(guards.len());
    for (i, guard) in guards.iter().enumerate() {
        let g = (guard.func)(t0, &y0);
        if !guard.crossing.armed(g) {
            return Err(Error::GuardActive(i));
        }
        g_prev.push(g);
    }
    let mut samples = Vec::new();
    if settings.record {
        samples.push((t0, y0));
    }

    let t_end = t0 + settings.max_duration;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = field(t, &y)?;
    let mut h = match settings.stepping {
        Stepping::Adaptive { rtol, atol } => initial_step(&y, &k1, rtol, atol),
        Stepping::Fixed { step } => step,
    };
    let mut accepted = 0usize;
    let h_min = 1e-14 * (1.0 + abs(t0));

    loop {
        if t >= t_end {
            let end = match settings.timeout_fault {
                Some(kind) => PhaseEnd::Fault { kind, t, y },
                None => return Err(Error::NoEvent(t_end)),
            };
            return Ok(PhaseOutcome { end, samples, accepted_steps: accepted });
        }
        let h_try = h.min(t_end - t);
        let step = dopri_step(&field, t, &y, &k1, h_try)?;
        let (accept, h_next) = match settings.stepping {
            Stepping::Adaptive { rtol, atol } => {
                let en = error_norm(&step.err, &y, &step.y, rtol, atol);
                if !en.is_finite() {
                    (false, 0.2 * h_try)
                } else {
                    let factor = if en == 0.0 { 5.0 } else { (0.9 * libm::pow(en, -0.2)).clamp(0.2, 5.0) };
                    (en <= 1.0, h_try * factor)
                }
            }
            Stepping::Fixed { step } => (true, step),
        };
        if !accept {
            if h_next < h_min {
                return Err(Error::StepUnderflow(t));
            }
            h = h_next;
            continue;
        }
        if !all_finite(&step.y) {
            return Err(Error::NonFinite(t + h_try));
        }
        accepted += 1;

        // Earliest fired guard within this step.
        let mut fired: Option<(usize, f64, [f64; N])> = None;
        for (i, guard) in guards.iter().enumerate() {
            let g_new = (guard.func)(t + h_try, &step.y);
            if !guard.crossing.armed(g_new) {
                let (te, ye) = localize(
                    &field,
                    guard,
                    t,
                    &y,
                    &k1,
                    h_try,
                    &step.y,
                    &step.dy,
                    settings.event_tol,
                )?;
                if fired.as_ref().map_or(true, |(_, tf, _)| te < *tf) {
                    fired = Some((i, te, ye));
                }
            } else {
                g_prev[i] = g_new;
            }
        }
        if let Some((guard, te, ye)) = fired {
            if settings.record {
                samples.push((te, ye));
            }
            return Ok(PhaseOutcome {
                end: PhaseEnd::Event { guard, t: te, y: ye },
                samples,
                accepted_steps: accepted,
            });
        }

        t += h_try;
        y = step.y;
        k1 = step.dy;
        if settings.record {
            samples.push((t, y));
        }
        if let Some(check) = check {
            if let Some(kind) = check(t, &y) {
                return Ok(PhaseOutcome {
                    end: PhaseEnd::Fault { kind, t, y },
                    samples,
                    accepted_steps: accepted,
                });
            }
        }
        h = h_next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ballistic(_t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        Ok([y[2], y[3], 0.0, -1.0])
    }

    #[test]
    fn ballistic_matches_closed_form() {
        let settings = PhaseSettings::adaptive(1e-9, 1e-11, 10.0);
        let ground = |_t: f64, y: &[f64; 4]| y[1];
        let guards = [Guard::new(&ground, Crossing::Falling)];
        let out = integrate_phase(ballistic, 0.0, [0.0, 2.0, 0.3, 0.5], &guards, None, &settings).unwrap();
        // z(t) = 2 + 0.5 t - t^2/2 = 0  =>  t = 0.5 + sqrt(0.25 + 4)
        let t_hit = 0.5 + libm::sqrt(4.25);
        assert!((out.end.time() - t_hit).abs() < 1e-9);
        assert!((out.end.state()[0] - 0.3 * t_hit).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let osc = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let settings = PhaseSettings::adaptive(1e-10, 1e-12, 100.0);
        // Falling through x = 0 first happens at t = pi/2 from (1, 0).
        let g = |_t: f64, y: &[f64; 2]| y[0];
        let guards = [Guard::new(&g, Crossing::Falling)];
        let out = integrate_phase(osc, 0.0, [1.0, 0.0], &guards, None, &settings).unwrap();
        assert!((out.end.time() - core::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((out.end.state()[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_stepping_converges_at_fifth_order() {
        let osc = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let g = |_t: f64, y: &[f64; 2]| y[0];
        let err = |h: f64| {
            let s = PhaseSettings::adaptive(0.0, 0.0, 100.0).with_stepping(Stepping::Fixed { step: h });
            let guards = [Guard::new(&g, Crossing::Falling)];
            let out = integrate_phase(osc, 0.0, [1.0, 0.0], &guards, None, &s).unwrap();
            (out.end.state()[1] + 1.0).abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 20.0, "ratio {ratio}");
    }

    #[test]
    fn guard_already_active_is_rejected() {
        let settings = PhaseSettings::adaptive(1e-9, 1e-11, 10.0);
        let ground = |_t: f64, y: &[f64; 4]| y[1];
        let guards = [Guard::new(&ground, Crossing::Falling)];
        let err = integrate_phase(ballistic, 0.0, [0.0, -0.1, 0.0, 0.0], &guards, None, &settings).unwrap_err();
        assert_eq!(err, Error::GuardActive(0));
    }

    #[test]
    fn timeout_without_event_is_an_error_or_fault() {
        let settings = PhaseSettings::adaptive(1e-9, 1e-11, 1.0);
        let never = |_t: f64, _y: &[f64; 4]| 1.0;
        let guards = [Guard::new(&never, Crossing::Falling)];
        let err = integrate_phase(ballistic, 0.0, [0.0, 1.0, 0.0, 0.0], &guards, None, &settings).unwrap_err();
        assert_eq!(err, Error::NoEvent(1.0));
        let s = settings.with_timeout_fault(FaultKind::StanceTimeout);
        let out = integrate_phase(ballistic, 0.0, [0.0, 1.0, 0.0, 0.0], &guards, None, &s).unwrap();
        assert!(matches!(out.end, PhaseEnd::Fault { kind: FaultKind::StanceTimeout, .. }));
    }

    #[test]
    fn earliest_of_several_guards_wins() {
        let settings = PhaseSettings::adaptive(1e-9, 1e-11, 10.0);
        let low = |_t: f64, y: &[f64; 4]| y[1] - 0.5;
        let high = |_t: f64, y: &[f64; 4]| y[1] - 0.8;
        let guards = [Guard::new(&low, Crossing::Falling), Guard::new(&high, Crossing::Falling)];
        let out = integrate_phase(ballistic, 0.0, [0.0, 1.0, 0.0, 0.0], &guards, None, &settings).unwrap();
        match out.end {
            PhaseEnd::Event { guard, y, .. } => {
                assert_eq!(guard, 1);
                assert!((y[1] - 0.8).abs() < 1e-10);
            }
            _ => panic!("expected event"),
        }
    }
}
