//! The controller's internal apex-to-apex model.
//!
//! The default predictor simulates the ideal point-mass template with the
//! estimated parameters on a fixed step grid. Fixed steps make the prediction
//! a smooth function of state, input and estimate, which the dead-beat solver
//! and the sensitivity both differentiate numerically. An analytical map can be
//! plugged in through [`AnalyticalMap`].

use alloc::sync::Arc;
use core::fmt;

use crate::error::{Error, Result};
use crate::hybrid::{slip_stride, SimSettings};
use crate::model::{ApexState, ControlInput, DimensionlessScale, ParamEstimate, SlipParams};

/// Closed-form (or otherwise external) apex return map of the template.
pub trait AnalyticalMap: Send + Sync {
    /// Next apex `(z, ydot)` of the dimensionless template `p`.
    fn predict(&self, x: &ApexState, u: &ControlInput, p: &SlipParams) -> Result<ApexState>;
}

#[derive(Clone)]
pub enum MapKind {
    InternalNumericalSlip,
    PluggableAnalytical(Arc<dyn AnalyticalMap>),
}

impl fmt::Debug for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::InternalNumericalSlip => f.write_str("InternalNumericalSlip"),
            MapKind::PluggableAnalytical(_) => f.write_str("PluggableAnalytical"),
        }
    }
}

/// Default predictor accuracy, dimensionless.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PredictiveMap {
    pub kind: MapKind,
    /// Accuracy target of the internal simulation.
    pub tolerance: f64,
    /// Constant added to every prediction, `(z, ydot)` dimensionless.
    pub offset: [f64; 2],
    /// Plant units in which states are expressed.
    pub scale: DimensionlessScale,
    settings: SimSettings,
}

/// Derivative of the predicted `(z, ydot)` with respect to the stiffness
/// estimate, per N/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub d_dk: [f64; 2],
    /// One of the perturbed predictions was infeasible; a one-sided
    /// difference was used.
    pub one_sided: bool,
}

impl Sensitivity {
    /// Sensitivity to a relative stiffness change, `k * dX/dk`.
    pub fn relative(&self, k: f64) -> [f64; 2] {
        [self.d_dk[0] * k, self.d_dk[1] * k]
    }
}

impl PredictiveMap {
    pub fn internal(scale: DimensionlessScale) -> Self {
        PredictiveMap::with_kind(MapKind::InternalNumericalSlip, scale)
    }

    pub fn analytical(map: Arc<dyn AnalyticalMap>, scale: DimensionlessScale) -> Self {
        PredictiveMap::with_kind(MapKind::PluggableAnalytical(map), scale)
    }

    fn with_kind(kind: MapKind, scale: DimensionlessScale) -> Self {
        PredictiveMap {
            kind,
            tolerance: DEFAULT_TOLERANCE,
            offset: [0.0; 2],
            scale,
            settings: SimSettings::fixed(DEFAULT_TOLERANCE),
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self.settings = SimSettings::fixed(tol);
        self
    }

    pub fn with_offset(mut self, offset: [f64; 2]) -> Self {
        self.offset = offset;
        self
    }

    /// Predicted next apex for the estimate `est` (SI). Pitch is not
    /// predicted and comes back as zero.
    pub fn predict(&self, x: &ApexState, u: &ControlInput, est: &ParamEstimate) -> Result<ApexState> {
        self.predict_template(x, u, &est.template(&self.scale))
    }

    /// Predicted next apex for a dimensionless template.
    pub fn predict_template(&self, x: &ApexState, u: &ControlInput, p: &SlipParams) -> Result<ApexState> {
        let gait = ApexState::new(x.z, x.ydot);
        let next = match &self.kind {
            MapKind::InternalNumericalSlip => slip_stride(&gait, u, p, &self.settings)?.apex()?,
            MapKind::PluggableAnalytical(m) => m.predict(&gait, u, p)?,
        };
        if !next.is_finite() {
            return Err(Error::NonFinite(0.0));
        }
        Ok(ApexState::new(next.z + self.offset[0], next.ydot + self.offset[1]))
    }

    /// Central-difference sensitivity of the prediction to the stiffness
    /// estimate with relative step `delta`, falling back to a one-sided
    /// difference when a perturbed prediction is infeasible.
    pub fn sensitivity(&self, x: &ApexState, u: &ControlInput, est: &ParamEstimate, delta: f64) -> Result<Sensitivity> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter("sensitivity step must lie in (0, 1)"));
        }
        let k = est.stiffness;
        let at = |factor: f64| {
            let e = ParamEstimate {
                stiffness: k * factor,
                ..*est
            };
            self.predict(x, u, &e)
        };
        let (plus, minus) = (at(1.0 + delta), at(1.0 - delta));
        let diff = |a: &ApexState, b: &ApexState, span: f64| [(a.z - b.z) / span, (a.ydot - b.ydot) / span];
        match (plus, minus) {
            (Ok(p), Ok(m)) => Ok(Sensitivity {
                d_dk: diff(&p, &m, 2.0 * delta * k),
                one_sided: false,
            }),
            (Ok(p), Err(_)) => Ok(Sensitivity {
                d_dk: diff(&p, &self.predict(x, u, est)?, delta * k),
                one_sided: true,
            }),
            (Err(_), Ok(m)) => Ok(Sensitivity {
                d_dk: diff(&self.predict(x, u, est)?, &m, delta * k),
                one_sided: true,
            }),
            (Err(e), Err(_)) => Err(e),
        }
    }
}

/// Sign of `de/dk_hat` for each error component, `e = X - X_hat`. A zero
/// sensitivity maps to `+1` (its gain should then be zero).
pub fn error_signs(s: &Sensitivity) -> [f64; 2] {
    s.d_dk.map(|d| if d > 0.0 { -1.0 } else { 1.0 })
}

/// `|a - b|` over the `(z, ydot)` components.
pub fn gait_distance(a: &ApexState, b: &ApexState) -> f64 {
    libm::hypot(a.z - b.z, a.ydot - b.ydot)
}
