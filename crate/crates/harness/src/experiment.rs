//! Builds core objects from a configuration and runs the three experiment
//! kinds. Grid points are evaluated in parallel and assembled in grid order.

use rayon::prelude::*;

use pronk_core::analysis::{
    miscalibration_point, stability_point, ClosedLoop, StabilityReport, SweepParam, SweepPoint, SweepSetup,
};
use pronk_core::control::{AdaptiveConfig, AdaptiveDesign, ControllerConfig, PronkController};
use pronk_core::hybrid::{simulate_strides, Plant, Run, SimSettings};
use pronk_core::model::{ApexState, DimensionlessScale, ParamEstimate, PlantParams};
use pronk_core::Error;

use crate::config::{ExperimentConfig, PlantModel, StabilityMode};
use crate::error::{FieldError, HarnessError, Result};

/// Run-time switches that change artifacts but are not part of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Options {
    /// Write CSVs in SI units instead of dimensionless ones.
    pub si: bool,
    /// Record and write the continuous trajectory of a single run.
    pub trajectory: bool,
    /// Worker threads for grids; zero uses the available parallelism.
    pub workers: usize,
}

/// Core objects derived from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    /// True plant, SI.
    pub params: PlantParams,
    pub scale: DimensionlessScale,
    pub plant: Plant,
    pub estimate: ParamEstimate,
    /// Dimensionless target and initial apex.
    pub target: ApexState,
    pub start: ApexState,
    pub settings: SimSettings,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let params = cfg.plant_params();
        params.validate()?;
        let scale = params.scale();
        Ok(Setup {
            plant: plant_for(cfg.plant.model, &params),
            params,
            scale,
            estimate: cfg.initial_estimate(),
            target: scale.apex_to_dimless(&cfg.target_si()),
            start: scale.apex_to_dimless(&cfg.start_si()),
            settings: cfg.sim_settings(),
        })
    }

    /// True stiffness of the template, N/m.
    pub fn k_true(&self) -> f64 {
        self.params.template().stiffness
    }
}

/// Dimensionless plant for SI parameters.
pub fn plant_for(model: PlantModel, params: &PlantParams) -> Plant {
    let d = params.nondimensionalize();
    match model {
        PlantModel::Slip => Plant::Slip(d.template()),
        PlantModel::Slimpod => Plant::Slimpod(d),
    }
}

/// Controller for a dimensionless target under estimate `est`.
pub fn design_controller(
    cfg: &ExperimentConfig,
    target: ApexState,
    adaptive: &AdaptiveDesign,
    est: &ParamEstimate,
) -> Result<ControllerConfig> {
    let map = cfg.predictive_map(&target);
    match ControllerConfig::design(cfg.deadbeat_config(target), adaptive, cfg.embedding_gains(), map, est) {
        Ok((c, _)) => Ok(c),
        Err(Error::InfeasibleTarget | Error::InfeasibleControl(_) | Error::Fault(_)) => Err(HarnessError::Invalid(vec![
            FieldError::new("target", "the target apex cannot be held with the configured estimate and input bounds"),
        ])),
        Err(e) => Err(e.into()),
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub setup: Setup,
    pub controller: ControllerConfig,
    pub run: Run,
}

pub fn simulate(cfg: &ExperimentConfig, opts: &Options) -> Result<SimulationResult> {
    let setup = Setup::new(cfg)?;
    let controller = design_controller(cfg, setup.target, &cfg.adaptive_design(), &setup.estimate)?;
    let mut ctrl = PronkController::new(controller.clone(), setup.estimate);
    let settings = setup.settings.recording(opts.trajectory);
    let run = simulate_strides(&setup.start, &mut ctrl, cfg.experiment.strides, &setup.plant, &settings);
    Ok(SimulationResult { setup, controller, run })
}

/// One swept parameter under one adaptation variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub param: SweepParam,
    pub adaptive: bool,
    /// Grid deviations in percent, as configured.
    pub percent: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub setup: Setup,
    pub series: Vec<SweepSeries>,
}

pub fn sweep(cfg: &ExperimentConfig, opts: &Options) -> Result<SweepOutcome> {
    let setup = Setup::new(cfg)?;
    let params = cfg.sweep_params();
    let matched = ParamEstimate::matching(&setup.params);
    let mut setups = Vec::new();
    for &adaptive in &cfg.sweep.adaptive {
        let design = AdaptiveDesign {
            enabled: adaptive,
            ..cfg.adaptive_design()
        };
        let controller = design_controller(cfg, setup.target, &design, &matched)?;
        setups.push(SweepSetup {
            plant: setup.plant,
            true_params: setup.params,
            controller,
            settings: setup.settings,
            settle: cfg.settle_config(),
            start: setup.start,
        });
    }
    let grid = &cfg.sweep.grid_percent;
    let jobs: Vec<(usize, SweepParam, f64)> = params
        .iter()
        .flat_map(|p| (0..setups.len()).flat_map(move |v| grid.iter().map(move |d| (v, *p, *d))))
        .collect();
    let points: Vec<SweepPoint> = with_pool(opts.workers, || {
        jobs.par_iter()
            .map(|(v, p, d)| miscalibration_point(&setups[*v], *p, d / 100.0))
            .collect()
    })?;
    let mut chunks = points.chunks(grid.len());
    let mut series = Vec::new();
    for p in &params {
        for &adaptive in &cfg.sweep.adaptive {
            series.push(SweepSeries {
                param: *p,
                adaptive,
                percent: grid.clone(),
                points: chunks.next().expect("one chunk per series").to_vec(),
            });
        }
    }
    Ok(SweepOutcome { setup, series })
}

/// One stability grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    /// Dimensionless target.
    pub target: ApexState,
    /// True stiffness over the configured plant stiffness.
    pub stiffness_factor: f64,
    /// Normalized adaptive gain, zero when adaptation is off.
    pub gamma: f64,
    pub adaptive: AdaptiveConfig,
    pub k_ref: f64,
    pub report: std::result::Result<StabilityReport, String>,
}

impl StabilityRow {
    pub fn stable(&self) -> bool {
        self.report.as_ref().is_ok_and(|r| r.stable)
    }
}

#[derive(Debug, Clone)]
pub struct StabilityOutcome {
    pub setup: Setup,
    pub mode: StabilityMode,
    /// Largest stable gain of the upward search, gain-stiffness mode only.
    pub gamma_max: Option<f64>,
    pub rows: Vec<StabilityRow>,
}

struct Job {
    loop_: Option<ClosedLoop>,
    target: ApexState,
    stiffness_factor: f64,
    gamma: f64,
    design_error: Option<String>,
}

fn evaluate(jobs: Vec<Job>, cfg: &ExperimentConfig, workers: usize) -> Result<Vec<StabilityRow>> {
    let sc = cfg.stability_config();
    with_pool(workers, || {
        jobs.into_par_iter()
            .map(|j| {
                let (adaptive, k_ref, report) = match (&j.loop_, j.design_error) {
                    (Some(cl), _) => (
                        cl.controller.adaptive,
                        cl.k_ref,
                        stability_point(cl, &sc).map_err(|e| e.to_string()),
                    ),
                    (None, e) => (
                        AdaptiveConfig::disabled(1.0),
                        f64::NAN,
                        Err(e.unwrap_or_else(|| "no controller".into())),
                    ),
                };
                StabilityRow {
                    target: j.target,
                    stiffness_factor: j.stiffness_factor,
                    gamma: j.gamma,
                    adaptive,
                    k_ref,
                    report,
                }
            })
            .collect()
    })
}

/// Closed loops of the gain-stiffness grid for one gain factor.
pub fn gain_stiffness_loop(cfg: &ExperimentConfig, setup: &Setup, unit: &ControllerConfig, factor: f64, gamma: f64) -> ClosedLoop {
    let truth = PlantParams {
        stiffness: setup.params.stiffness.map(|k| k * factor),
        ..setup.params
    };
    let mut controller = unit.clone();
    controller.adaptive = controller.adaptive.scaled(gamma);
    ClosedLoop {
        plant: plant_for(cfg.plant.model, &truth),
        controller,
        estimate: setup.estimate,
        k_ref: setup.k_true(),
        settings: setup.settings,
    }
}

/// Controller with adaptation on and unit normalized gain.
pub fn unit_gain_controller(cfg: &ExperimentConfig, setup: &Setup) -> Result<ControllerConfig> {
    let design = AdaptiveDesign {
        enabled: true,
        gamma: 1.0,
        ..cfg.adaptive_design()
    };
    design_controller(cfg, setup.target, &design, &setup.estimate)
}

pub fn stability(cfg: &ExperimentConfig, opts: &Options) -> Result<StabilityOutcome> {
    let setup = Setup::new(cfg)?;
    let st = &cfg.stability;
    match st.mode {
        StabilityMode::Targets => {
            let design = cfg.adaptive_design();
            let mut jobs = Vec::new();
            for &z in &st.z_grid {
                for &yd in &st.ydot_grid {
                    let target = setup.scale.apex_to_dimless(&ApexState::new(z, yd));
                    let built = design_controller(cfg, target, &design, &setup.estimate);
                    let gamma = if design.enabled { design.gamma } else { 0.0 };
                    jobs.push(match built {
                        Ok(controller) => Job {
                            loop_: Some(ClosedLoop {
                                plant: setup.plant,
                                controller,
                                estimate: setup.estimate,
                                k_ref: setup.k_true(),
                                settings: setup.settings,
                            }),
                            target,
                            stiffness_factor: 1.0,
                            gamma,
                            design_error: None,
                        },
                        Err(e) => Job {
                            loop_: None,
                            target,
                            stiffness_factor: 1.0,
                            gamma,
                            design_error: Some(e.to_string()),
                        },
                    });
                }
            }
            Ok(StabilityOutcome {
                rows: evaluate(jobs, cfg, opts.workers)?,
                setup,
                mode: st.mode,
                gamma_max: None,
            })
        }
        StabilityMode::GainStiffness => {
            let unit = unit_gain_controller(cfg, &setup)?;
            let n = (st.gamma_search_max / st.gamma_search_step + 1e-9).floor() as usize;
            let search: Vec<f64> = (1..=n).map(|i| i as f64 * st.gamma_search_step).collect();
            let probes: Vec<Job> = search
                .iter()
                .map(|&g| Job {
                    loop_: Some(gain_stiffness_loop(cfg, &setup, &unit, 1.0, g)),
                    target: setup.target,
                    stiffness_factor: 1.0,
                    gamma: g,
                    design_error: None,
                })
                .collect();
            let verdicts = evaluate(probes, cfg, opts.workers)?;
            let gamma_max = verdicts
                .iter()
                .take_while(|r| r.stable())
                .last()
                .map_or(st.gamma_search_step, |r| r.gamma);
            let gains: Vec<f64> = (0..st.gain_points)
                .map(|j| gamma_max * j as f64 / (st.gain_points - 1) as f64)
                .collect();
            let mut jobs = Vec::new();
            for &f in &st.stiffness_factors {
                for &g in &gains {
                    jobs.push(Job {
                        loop_: Some(gain_stiffness_loop(cfg, &setup, &unit, f, g)),
                        target: setup.target,
                        stiffness_factor: f,
                        gamma: g,
                        design_error: None,
                    });
                }
            }
            Ok(StabilityOutcome {
                rows: evaluate(jobs, cfg, opts.workers)?,
                setup,
                mode: st.mode,
                gamma_max: Some(gamma_max),
            })
        }
    }
}
