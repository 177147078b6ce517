use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Physical or numerical failure of a simulated stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    /// Body center of mass dropped below the minimum height.
    GroundPenetration,
    /// Body pitch exceeded the inversion limit.
    BodyInversion,
    /// Stance lasted longer than the allowed time.
    StanceTimeout,
    /// Liftoff happened with non-positive vertical velocity, so no apex follows.
    NoApex,
    /// Leg compressed to zero length.
    LegCollapse,
    /// A stance leg got longer than its rest length plus the overshoot margin.
    LegOvershoot,
    /// Leg placement unreachable at touchdown.
    Placement,
    /// The integrator failed (step underflow or non-finite state).
    Integrator,
    /// The controller could not produce a feasible stride input.
    Controller,
    /// Not simulated because an earlier stride of the run faulted.
    Truncated,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::GroundPenetration => "ground_penetration",
            FaultKind::BodyInversion => "body_inversion",
            FaultKind::StanceTimeout => "stance_timeout",
            FaultKind::NoApex => "no_apex",
            FaultKind::LegCollapse => "leg_collapse",
            FaultKind::LegOvershoot => "leg_overshoot",
            FaultKind::Placement => "placement",
            FaultKind::Integrator => "integrator",
            FaultKind::Controller => "controller",
            FaultKind::Truncated => "truncated",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("state is in the wrong phase for this vector field")]
    PhaseMismatch,
    #[error("singular leg configuration (length {0})")]
    Singular(f64),
    #[error("toe is not below the hip")]
    OutOfWorkspace,
    #[error("guard {0} is already active at the start of the phase")]
    GuardActive(usize),
    #[error("no event before t = {0}")]
    NoEvent(f64),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("infeasible control: {0}")]
    InfeasibleControl(&'static str),
    #[error("leg {0} cannot reach its commanded placement")]
    InfeasiblePlacement(usize),
    #[error("no feasible control reaches the target")]
    InfeasibleTarget,
    #[error("fault: {0}")]
    Fault(FaultKind),
    #[error("fixed-point iteration did not converge in {strides} strides (last step {last_step:e})")]
    Diverged { strides: usize, last_step: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

impl Error {
    /// Collapse any simulation error into the fault it represents for stride logging.
    pub fn fault_kind(&self) -> FaultKind {
        match self {
            Error::Fault(kind) => *kind,
            Error::InfeasiblePlacement(_) => FaultKind::Placement,
            Error::InfeasibleControl(_) | Error::InfeasibleTarget => FaultKind::Controller,
            Error::Singular(_) => FaultKind::LegCollapse,
            _ => FaultKind::Integrator,
        }
    }
}
