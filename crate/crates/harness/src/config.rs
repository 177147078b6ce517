//! Experiment configuration: one TOML section per module, flat keys.
//!
//! Physical quantities are SI unless a key says otherwise. Every key has a
//! documented default; keys absent from a file are filled in and listed as
//! defaulted so the archive records exactly what ran.

use serde::{Deserialize, Serialize};

use pronk_core::analysis::{SettleConfig, StabilityConfig, SweepParam};
use pronk_core::control::{
    AdaptiveDesign, DeadbeatConfig, EmbeddingGains, InputBounds, DEADBEAT_TOLERANCE, DEFAULT_GAMMA, DEFAULT_PITCH_OMEGA,
};
use pronk_core::hybrid::{LiftoffPolicy, SimSettings};
use pronk_core::integrate::Stepping;
use pronk_core::model::{ApexState, ParamEstimate, PlantParams};
use pronk_core::predict::{PredictiveMap, DEFAULT_TOLERANCE};

use crate::error::{FieldError, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Simulate,
    Sweep,
    Stability,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Stability => "stability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlantModel {
    #[default]
    Slip,
    Slimpod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Liftoff {
    #[default]
    LastLeg,
    FirstLeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Matched-target grid over `(z*, ydot*)`.
    #[default]
    Targets,
    /// True-stiffness factor against adaptive gain.
    GainStiffness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    /// Strides of a single run.
    pub strides: usize,
    /// Recorded for provenance; no experiment draws random numbers.
    pub seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            kind: ExperimentKind::Simulate,
            strides: 30,
            seed: 0,
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub model: PlantModel,
    pub mass: f64,
    pub inertia: f64,
    /// Per virtual leg, N/m.
    pub stiffness: [f64; 3],
    /// Per virtual leg, N s/m.
    pub damping: [f64; 3],
    pub rest_length: f64,
    /// Hip positions along the body axis, back to front.
    pub hip_offsets: [f64; 3],
    pub gravity: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = PlantParams::reference();
        PlantSection {
            model: PlantModel::Slip,
            mass: p.mass,
            inertia: p.inertia,
            stiffness: p.stiffness,
            damping: p.damping,
            rest_length: p.rest_length,
            hip_offsets: p.hip_offsets,
            gravity: p.gravity,
        }
    }
}

/// Controller's initial estimate as factors of the true template values.
/// Sweeps override the swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub stiffness_factor: f64,
    pub damping_factor: f64,
    pub mass_factor: f64,
    pub rest_length_factor: f64,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            stiffness_factor: 1.0,
            damping_factor: 1.0,
            mass_factor: 1.0,
            rest_length_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Desired apex height, m.
    pub z: f64,
    /// Desired apex forward speed, m/s.
    pub ydot: f64,
    /// Initial apex relative to the target, m and m/s.
    pub start_dz: f64,
    pub start_dydot: f64,
    /// Initial pitch (rad) and pitch rate (rad/s), Slimpod only.
    pub start_alpha: f64,
    pub start_alphadot: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            z: 0.195,
            ydot: 1.6,
            start_dz: 0.0,
            start_dydot: 0.0,
            start_alpha: 0.0,
            start_alphadot: 0.0,
        }
    }
}

/// Dead-beat solver settings. Leg lengths are fractions of the rest length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadbeatSection {
    /// Residual norm in dimensionless apex units.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub weights: [f64; 2],
    pub theta_min: f64,
    pub theta_max: f64,
    pub r_td_min: f64,
    pub r_td_max: f64,
    pub r_lo_min: f64,
    pub r_lo_max: f64,
}

impl Default for DeadbeatSection {
    fn default() -> Self {
        let d = DeadbeatConfig::new(ApexState::new(1.0, 1.0));
        let b = InputBounds::default();
        DeadbeatSection {
            tolerance: DEADBEAT_TOLERANCE,
            max_iterations: d.max_iterations,
            fd_step: d.fd_step,
            weights: d.weights,
            theta_min: b.lo[0],
            theta_max: b.hi[0],
            r_td_min: b.lo[1],
            r_td_max: b.hi[1],
            r_lo_min: b.lo[2],
            r_lo_max: b.hi[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveSection {
    pub enabled: bool,
    /// Normalized gain; the estimate moves by about `-gamma` times its
    /// error per stride near the target.
    pub gamma: f64,
    /// Relative stiffness step of the sensitivity difference.
    pub sensitivity_step: f64,
    /// Estimate bounds as factors of the initial estimate.
    pub k_min_factor: f64,
    pub k_max_factor: f64,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        let d = AdaptiveDesign::default();
        AdaptiveSection {
            enabled: false,
            gamma: DEFAULT_GAMMA,
            sensitivity_step: d.sensitivity_step,
            k_min_factor: d.k_min_factor,
            k_max_factor: d.k_max_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// Pitch loop natural frequency, per dimensionless time unit.
    pub omega: f64,
    /// Tikhonov damping of the torque distribution.
    pub distribution_damping: f64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            omega: DEFAULT_PITCH_OMEGA,
            distribution_damping: EmbeddingGains::default().damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    /// Accuracy of the internal template simulation, dimensionless.
    pub tolerance: f64,
    /// Constant added to every prediction, as fractions of the target.
    pub offset_fraction: [f64; 2],
}

impl Default for PredictorSection {
    fn default() -> Self {
        PredictorSection {
            tolerance: DEFAULT_TOLERANCE,
            offset_fraction: [0.0; 2],
        }
    }
}

/// Plant integration, dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub rtol: f64,
    pub atol: f64,
    pub event_tol: f64,
    pub max_stance: f64,
    pub liftoff: Liftoff,
    /// Spacing of recorded flight samples.
    pub flight_sample: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimSettings::default();
        let Stepping::Adaptive { rtol, atol } = s.stepping else {
            unreachable!("plant integration defaults to adaptive steps")
        };
        SimulationSection {
            rtol,
            atol,
            event_tol: s.event_tol,
            max_stance: s.max_stance,
            liftoff: Liftoff::LastLeg,
            flight_sample: s.flight_sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Any of `stiffness`, `mass`, `damping`, `map_offset`.
    pub params: Vec<String>,
    /// Deviations in percent, strictly increasing.
    pub grid_percent: Vec<f64>,
    /// Adaptation variants to run.
    pub adaptive: Vec<bool>,
    pub settle_window: usize,
    pub settle_threshold: f64,
    pub max_strides: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SettleConfig::default();
        SweepSection {
            params: vec!["stiffness".into(), "damping".into()],
            grid_percent: (-4..=4).map(|i| 5.0 * f64::from(i)).collect(),
            adaptive: vec![false],
            settle_window: s.window,
            settle_threshold: s.threshold,
            max_strides: s.max_strides,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub mode: StabilityMode,
    /// Target grid for `targets` mode, m and m/s.
    pub z_grid: Vec<f64>,
    pub ydot_grid: Vec<f64>,
    /// True-stiffness factors for `gain_stiffness` mode.
    pub stiffness_factors: Vec<f64>,
    /// Number of gains from zero to the largest stable gain found.
    pub gain_points: usize,
    /// Upward search for the largest stable gain at nominal stiffness.
    pub gamma_search_step: f64,
    pub gamma_search_max: f64,
    pub fixed_point_tol: f64,
    pub max_strides: usize,
    pub jacobian_step: f64,
    /// Dead-beat tolerance used inside the analysis, tighter than in runs
    /// so the map is smooth at the Jacobian step.
    pub deadbeat_tolerance: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        let s = StabilityConfig::default();
        StabilitySection {
            mode: StabilityMode::Targets,
            z_grid: vec![0.185, 0.23, 0.275],
            ydot_grid: vec![1.3096, 1.637, 1.9644],
            stiffness_factors: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            gain_points: 5,
            gamma_search_step: 0.1,
            gamma_search_max: 4.0,
            fixed_point_tol: s.fixed_point_tol,
            max_strides: s.max_strides,
            jacobian_step: s.jacobian_step,
            deadbeat_tolerance: s.deadbeat_tolerance.unwrap_or(1e-10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub plant: PlantSection,
    pub estimate: EstimateSection,
    pub target: TargetSection,
    pub deadbeat: DeadbeatSection,
    pub adaptive: AdaptiveSection,
    pub embedding: EmbeddingSection,
    pub predictor: PredictorSection,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub stability: StabilitySection,
}

/// A parsed configuration and the `section.key` names filled from defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub defaulted: Vec<String>,
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<LoadedConfig, HarnessError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::parse(e.message()))?;
        let config: ExperimentConfig = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::parse(e.message()))?;
        config.validate()?;
        Ok(LoadedConfig {
            defaulted: defaulted_keys(&table),
            config,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn plant_params(&self) -> PlantParams {
        let p = &self.plant;
        PlantParams {
            mass: p.mass,
            inertia: p.inertia,
            stiffness: p.stiffness,
            damping: p.damping,
            rest_length: p.rest_length,
            hip_offsets: p.hip_offsets,
            gravity: p.gravity,
        }
    }

    pub fn initial_estimate(&self) -> ParamEstimate {
        let m = ParamEstimate::matching(&self.plant_params());
        let e = &self.estimate;
        ParamEstimate {
            stiffness: m.stiffness * e.stiffness_factor,
            damping: m.damping * e.damping_factor,
            mass: m.mass * e.mass_factor,
            rest_length: m.rest_length * e.rest_length_factor,
        }
    }

    /// Target apex in SI units.
    pub fn target_si(&self) -> ApexState {
        ApexState::new(self.target.z, self.target.ydot)
    }

    /// Initial apex in SI units.
    pub fn start_si(&self) -> ApexState {
        let t = &self.target;
        ApexState::with_pitch(t.z + t.start_dz, t.ydot + t.start_dydot, t.start_alpha, t.start_alphadot)
    }

    /// Dead-beat settings for a dimensionless target; the nominal input is
    /// left for the controller design to fill in.
    pub fn deadbeat_config(&self, target: ApexState) -> DeadbeatConfig {
        let d = &self.deadbeat;
        DeadbeatConfig {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            fd_step: d.fd_step,
            weights: d.weights,
            bounds: InputBounds {
                lo: [d.theta_min, d.r_td_min, d.r_lo_min],
                hi: [d.theta_max, d.r_td_max, d.r_lo_max],
            },
            ..DeadbeatConfig::new(target)
        }
    }

    pub fn adaptive_design(&self) -> AdaptiveDesign {
        let a = &self.adaptive;
        AdaptiveDesign {
            enabled: a.enabled,
            gamma: a.gamma,
            sensitivity_step: a.sensitivity_step,
            k_min_factor: a.k_min_factor,
            k_max_factor: a.k_max_factor,
        }
    }

    pub fn embedding_gains(&self) -> EmbeddingGains {
        let p = self.plant_params();
        EmbeddingGains {
            damping: self.embedding.distribution_damping,
            ..EmbeddingGains::critical(p.scale().inertia_ratio(p.inertia), self.embedding.omega)
        }
    }

    /// Predictor for a dimensionless target (the offset is relative to it).
    pub fn predictive_map(&self, target: &ApexState) -> PredictiveMap {
        let o = self.predictor.offset_fraction;
        PredictiveMap::internal(self.plant_params().scale())
            .with_tolerance(self.predictor.tolerance)
            .with_offset([o[0] * target.z, o[1] * target.ydot])
    }

    pub fn sim_settings(&self) -> SimSettings {
        let s = &self.simulation;
        SimSettings {
            stepping: Stepping::Adaptive {
                rtol: s.rtol,
                atol: s.atol,
            },
            max_stance: s.max_stance,
            event_tol: s.event_tol,
            liftoff: match s.liftoff {
                Liftoff::LastLeg => LiftoffPolicy::LastLeg,
                Liftoff::FirstLeg => LiftoffPolicy::FirstLeg,
            },
            record: false,
            flight_sample: s.flight_sample,
        }
    }

    pub fn settle_config(&self) -> SettleConfig {
        SettleConfig {
            window: self.sweep.settle_window,
            threshold: self.sweep.settle_threshold,
            max_strides: self.sweep.max_strides,
        }
    }

    pub fn stability_config(&self) -> StabilityConfig {
        let s = &self.stability;
        StabilityConfig {
            fixed_point_tol: s.fixed_point_tol,
            max_strides: s.max_strides,
            jacobian_step: s.jacobian_step,
            deadbeat_tolerance: Some(s.deadbeat_tolerance),
        }
    }

    pub fn sweep_params(&self) -> Vec<SweepParam> {
        self.sweep.params.iter().filter_map(|s| SweepParam::parse(s)).collect()
    }

    /// Checks every field, collecting all problems.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                errs.push(FieldError::new(field, msg));
            }
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let fin = |x: f64| x.is_finite();

        check(self.experiment.strides > 0, "experiment.strides", "must be at least 1");
        check(!self.experiment.output_dir.is_empty(), "experiment.output_dir", "must not be empty");

        let p = &self.plant;
        check(pos(p.mass), "plant.mass", "must be positive");
        check(pos(p.inertia), "plant.inertia", "must be positive");
        check(p.stiffness.iter().all(|k| pos(*k)), "plant.stiffness", "must be positive");
        check(p.damping.iter().all(|b| fin(*b) && *b >= 0.0), "plant.damping", "must be non-negative");
        check(pos(p.rest_length), "plant.rest_length", "must be positive");
        check(pos(p.gravity), "plant.gravity", "must be positive");
        check(
            p.hip_offsets.iter().all(|d| fin(*d)) && p.hip_offsets.windows(2).all(|w| w[0] < w[1]),
            "plant.hip_offsets",
            "must be finite and strictly increasing",
        );

        let e = &self.estimate;
        for (v, f) in [
            (e.stiffness_factor, "estimate.stiffness_factor"),
            (e.mass_factor, "estimate.mass_factor"),
            (e.rest_length_factor, "estimate.rest_length_factor"),
        ] {
            check(pos(v), f, "must be positive");
        }
        check(fin(e.damping_factor) && e.damping_factor >= 0.0, "estimate.damping_factor", "must be non-negative");

        let t = &self.target;
        check(pos(t.z), "target.z", "must be positive");
        check(fin(t.ydot), "target.ydot", "must be finite");
        check(pos(t.z + t.start_dz), "target.start_dz", "start height must be positive");
        for (v, f) in [
            (t.start_dydot, "target.start_dydot"),
            (t.start_alpha, "target.start_alpha"),
            (t.start_alphadot, "target.start_alphadot"),
        ] {
            check(fin(v), f, "must be finite");
        }

        let d = &self.deadbeat;
        check(pos(d.tolerance), "deadbeat.tolerance", "must be positive");
        check(d.max_iterations > 0, "deadbeat.max_iterations", "must be at least 1");
        check(pos(d.fd_step) && d.fd_step < 0.1, "deadbeat.fd_step", "must lie in (0, 0.1)");
        check(d.weights.iter().all(|w| pos(*w)), "deadbeat.weights", "must be positive");
        check(fin(d.theta_min) && fin(d.theta_max) && d.theta_min < d.theta_max, "deadbeat.theta_min", "must be below theta_max");
        check(pos(d.r_td_min) && d.r_td_min < d.r_td_max, "deadbeat.r_td_min", "must be positive and below r_td_max");
        check(d.r_td_max <= 1.0, "deadbeat.r_td_max", "must not exceed the rest length");
        check(pos(d.r_lo_min) && d.r_lo_min < d.r_lo_max, "deadbeat.r_lo_min", "must be positive and below r_lo_max");
        check(d.r_lo_max <= 1.0, "deadbeat.r_lo_max", "must not exceed the rest length");

        let a = &self.adaptive;
        check(fin(a.gamma) && a.gamma >= 0.0, "adaptive.gamma", "must be non-negative");
        check(pos(a.sensitivity_step) && a.sensitivity_step < 1.0, "adaptive.sensitivity_step", "must lie in (0, 1)");
        check(pos(a.k_min_factor) && a.k_min_factor <= 1.0, "adaptive.k_min_factor", "must lie in (0, 1]");
        check(fin(a.k_max_factor) && a.k_max_factor >= 1.0, "adaptive.k_max_factor", "must be at least 1");

        check(pos(self.embedding.omega), "embedding.omega", "must be positive");
        let lam = self.embedding.distribution_damping;
        check(fin(lam) && lam >= 0.0, "embedding.distribution_damping", "must be non-negative");

        check(pos(self.predictor.tolerance), "predictor.tolerance", "must be positive");
        check(
            self.predictor.offset_fraction.iter().all(|o| fin(*o) && o.abs() <= 0.5),
            "predictor.offset_fraction",
            "must lie within +-0.5",
        );

        let s = &self.simulation;
        check(pos(s.rtol), "simulation.rtol", "must be positive");
        check(pos(s.atol), "simulation.atol", "must be positive");
        check(pos(s.event_tol), "simulation.event_tol", "must be positive");
        check(pos(s.max_stance), "simulation.max_stance", "must be positive");
        check(pos(s.flight_sample), "simulation.flight_sample", "must be positive");

        let w = &self.sweep;
        for name in &w.params {
            check(SweepParam::parse(name).is_some(), "sweep.params", "unknown parameter (stiffness, mass, damping, map_offset)");
        }
        check(!w.params.is_empty(), "sweep.params", "must not be empty");
        check(
            !w.grid_percent.is_empty()
                && w.grid_percent.iter().all(|g| g.is_finite() && g.abs() <= 50.0)
                && w.grid_percent.windows(2).all(|p| p[0] < p[1]),
            "sweep.grid_percent",
            "must be strictly increasing within +-50",
        );
        check(!w.adaptive.is_empty(), "sweep.adaptive", "must list at least one variant");
        check(w.settle_window > 0, "sweep.settle_window", "must be at least 1");
        check(pos(w.settle_threshold), "sweep.settle_threshold", "must be positive");
        check(w.max_strides >= w.settle_window, "sweep.max_strides", "must be at least settle_window");

        let st = &self.stability;
        let increasing = |g: &[f64]| !g.is_empty() && g.iter().all(|x| pos(*x)) && g.windows(2).all(|p| p[0] < p[1]);
        check(increasing(&st.z_grid), "stability.z_grid", "must be positive and strictly increasing");
        check(
            !st.ydot_grid.is_empty() && st.ydot_grid.iter().all(|x| fin(*x)) && st.ydot_grid.windows(2).all(|p| p[0] < p[1]),
            "stability.ydot_grid",
            "must be finite and strictly increasing",
        );
        check(increasing(&st.stiffness_factors), "stability.stiffness_factors", "must be positive and strictly increasing");
        check(st.gain_points >= 2, "stability.gain_points", "must be at least 2");
        check(pos(st.gamma_search_step), "stability.gamma_search_step", "must be positive");
        check(st.gamma_search_max >= st.gamma_search_step, "stability.gamma_search_max", "must be at least one step");
        check(pos(st.fixed_point_tol), "stability.fixed_point_tol", "must be positive");
        check(st.max_strides > 0, "stability.max_strides", "must be at least 1");
        check(pos(st.jacobian_step) && st.jacobian_step < 0.1, "stability.jacobian_step", "must lie in (0, 0.1)");
        check(pos(st.deadbeat_tolerance), "stability.deadbeat_tolerance", "must be positive");

        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errs))
        }
    }
}

/// `section.key` names present in the defaults but absent from `given`.
fn defaulted_keys(given: &toml::Table) -> Vec<String> {
    let defaults = toml::Table::try_from(ExperimentConfig::default()).expect("defaults serialize to a table");
    let mut out = Vec::new();
    for (section, value) in &defaults {
        let Some(keys) = value.as_table() else { continue };
        let user = given.get(section).and_then(|v| v.as_table());
        for key in keys.keys() {
            if !user.is_some_and(|u| u.contains_key(key)) {
                out.push(format!("{section}.{key}"));
            }
        }
    }
    out
}
