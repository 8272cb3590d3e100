//! TOML configuration files: the robot description and the run
//! configuration (gait script, noise scales, injected offsets, initial
//! parameters, solver and Frank-Wolfe knobs, bounds), plus the
//! deterministic metrics report.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calibrator::{FeasibleSet, FwConfig};
use crate::datagen::{GaitScript, GaitType, NoiseScales};
use crate::error::{Error, Result};
use crate::estimator::SolverSettings;
use crate::robot::{CovBlock, CovarianceSpec, KinematicOffsets, LegGeometry, PriorCov, RobotKinematics};
use crate::theta::{fnv1a, ThetaLayout};

use super::fmt_f64;

/// On-disk robot description; versioned schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_offset_bound")]
    pub offset_bound: f64,
    pub legs: Vec<LegFile>,
}

fn default_offset_bound() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LegFile {
    pub mount: [f64; 3],
    pub side: f64,
    pub l_hip: f64,
    pub l_thigh: f64,
    pub l_calf: f64,
    pub axes: [[f64; 3]; 3],
}

pub fn load_robot(path: &Path) -> Result<RobotKinematics> {
    let text = std::fs::read_to_string(path)?;
    let file: RobotFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("robot file: {e}")))?;
    if file.schema_version != 1 {
        return Err(Error::SchemaVersionMismatch {
            found: format!("robot schema {}", file.schema_version),
            expected: "robot schema 1".to_string(),
        });
    }
    Ok(RobotKinematics {
        name: file.name,
        offset_bound: file.offset_bound,
        legs: file
            .legs
            .into_iter()
            .map(|l| LegGeometry {
                mount: Vector3::from(l.mount),
                side: l.side,
                l_hip: l.l_hip,
                l_thigh: l.l_thigh,
                l_calf: l.l_calf,
                axes: [
                    Vector3::from(l.axes[0]),
                    Vector3::from(l.axes[1]),
                    Vector3::from(l.axes[2]),
                ],
            })
            .collect(),
    })
}

pub fn save_robot(path: &Path, robot: &RobotKinematics) -> Result<()> {
    let file = RobotFile {
        schema_version: 1,
        name: robot.name.clone(),
        offset_bound: robot.offset_bound,
        legs: robot
            .legs
            .iter()
            .map(|l| LegFile {
                mount: l.mount.into(),
                side: l.side,
                l_hip: l.l_hip,
                l_thigh: l.l_thigh,
                l_calf: l.l_calf,
                axes: [l.axes[0].into(), l.axes[1].into(), l.axes[2].into()],
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Canonical FNV-1a hash of the robot parameters; stored in log headers to
/// guard against mixing files across robots.
pub fn robot_hash(robot: &RobotKinematics) -> u64 {
    let mut canon = format!("robot v1;{};{};", robot.name, robot.legs.len());
    for l in &robot.legs {
        canon.push_str(&format!(
            "mount={},{},{};side={};links={},{},{};",
            fmt_f64(l.mount.x),
            fmt_f64(l.mount.y),
            fmt_f64(l.mount.z),
            fmt_f64(l.side),
            fmt_f64(l.l_hip),
            fmt_f64(l.l_thigh),
            fmt_f64(l.l_calf),
        ));
        for a in &l.axes {
            canon.push_str(&format!("axis={},{},{};", fmt_f64(a.x), fmt_f64(a.y), fmt_f64(a.z)));
        }
    }
    fnv1a(canon.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptSection {
    #[serde(default = "default_gait")]
    pub gait: String,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_speed")]
    pub body_speed: f64,
    #[serde(default = "default_period")]
    pub gait_period: f64,
    #[serde(default = "default_step_height")]
    pub step_height: f64,
    #[serde(default = "default_base_height")]
    pub base_height: f64,
    #[serde(default = "default_yaw_amp")]
    pub yaw_rate_amplitude: f64,
    #[serde(default = "default_yaw_period")]
    pub yaw_rate_period: f64,
}

impl Default for ScriptSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn default_gait() -> String {
    "trot".to_string()
}
fn default_duration() -> f64 {
    4.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_speed() -> f64 {
    0.3
}
fn default_period() -> f64 {
    0.5
}
fn default_step_height() -> f64 {
    0.05
}
fn default_base_height() -> f64 {
    0.33
}
fn default_yaw_amp() -> f64 {
    0.25
}
fn default_yaw_period() -> f64 {
    2.0
}

impl ScriptSection {
    pub fn to_script(&self) -> Result<GaitScript> {
        let gait = match self.gait.as_str() {
            "stand" => GaitType::Stand,
            "trot" => GaitType::Trot,
            other => return Err(Error::Config(format!("unknown gait '{other}'"))),
        };
        let script = GaitScript {
            gait,
            duration: self.duration,
            dt: self.dt,
            body_speed: self.body_speed,
            gait_period: self.gait_period,
            step_height: self.step_height,
            base_height: self.base_height,
            yaw_rate_amplitude: self.yaw_rate_amplitude,
            yaw_rate_period: self.yaw_rate_period,
        };
        script.validate()?;
        Ok(script)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct NoiseSection {
    #[serde(default)]
    pub accel_std: f64,
    #[serde(default)]
    pub gyro_std: f64,
    #[serde(default)]
    pub joint_std: f64,
    #[serde(default)]
    pub joint_rate_std: f64,
    #[serde(default)]
    pub accel_bias_walk: f64,
    #[serde(default)]
    pub gyro_bias_walk: f64,
    #[serde(default)]
    pub accel_bias_init: [f64; 3],
    #[serde(default)]
    pub gyro_bias_init: [f64; 3],
}

impl NoiseSection {
    pub fn to_scales(&self) -> NoiseScales {
        NoiseScales {
            accel_std: self.accel_std,
            gyro_std: self.gyro_std,
            joint_std: self.joint_std,
            joint_rate_std: self.joint_rate_std,
            accel_bias_walk: self.accel_bias_walk,
            gyro_bias_walk: self.gyro_bias_walk,
            accel_bias_init: Vector3::from(self.accel_bias_init),
            gyro_bias_init: Vector3::from(self.gyro_bias_init),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct InjectSection {
    /// Per-leg contact-point offsets injected by the generator, meters.
    #[serde(default)]
    pub foot: Vec<[f64; 3]>,
    #[serde(default)]
    pub base: [f64; 3],
}

impl InjectSection {
    pub fn to_offsets(&self, n_f: usize) -> Result<KinematicOffsets> {
        let mut offsets = KinematicOffsets::zero(n_f);
        if !self.foot.is_empty() {
            if self.foot.len() != n_f {
                return Err(Error::Config(format!(
                    "inject.foot needs {n_f} rows, found {}",
                    self.foot.len()
                )));
            }
            for (j, f) in self.foot.iter().enumerate() {
                offsets.foot[j] = Vector3::from(*f);
            }
        }
        offsets.base = Vector3::from(self.base);
        Ok(offsets)
    }
}

/// Initial parameter values: isotropic variances per covariance block plus
/// starting offsets (all optional; defaults are datasheet-style).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitSection {
    #[serde(default = "d_q_pos")]
    pub q_pos: f64,
    #[serde(default = "d_q_vel")]
    pub q_vel: f64,
    #[serde(default = "d_q_rot")]
    pub q_rot: f64,
    #[serde(default = "d_q_foot")]
    pub q_foot: f64,
    #[serde(default = "d_q_bias")]
    pub q_accel_bias: f64,
    #[serde(default = "d_q_bias")]
    pub q_gyro_bias: f64,
    #[serde(default = "d_r_joint")]
    pub r_joint: f64,
    #[serde(default = "d_r_rate")]
    pub r_joint_rate: f64,
    #[serde(default)]
    pub foot_offsets: Vec<[f64; 3]>,
    #[serde(default)]
    pub base_offset: [f64; 3],
}

impl Default for InitSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn d_q_pos() -> f64 {
    1e-6
}
fn d_q_vel() -> f64 {
    1e-5
}
fn d_q_rot() -> f64 {
    1e-6
}
fn d_q_foot() -> f64 {
    1e-6
}
fn d_q_bias() -> f64 {
    1e-8
}
fn d_r_joint() -> f64 {
    1e-6
}
fn d_r_rate() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSection {
    #[serde(default = "p_rot")]
    pub rot: f64,
    #[serde(default = "p_pos")]
    pub pos: f64,
    #[serde(default = "p_vel")]
    pub vel: f64,
    #[serde(default = "p_foot")]
    pub foot: f64,
    #[serde(default = "p_bias")]
    pub accel_bias: f64,
    #[serde(default = "p_bias")]
    pub gyro_bias: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn p_rot() -> f64 {
    1e-4
}
fn p_pos() -> f64 {
    1e-4
}
fn p_vel() -> f64 {
    1e-2
}
fn p_foot() -> f64 {
    1e-2
}
fn p_bias() -> f64 {
    1e-4
}

impl InitSection {
    pub fn to_cov(&self, prior: &PriorSection) -> CovarianceSpec {
        CovarianceSpec {
            q_pos: CovBlock::iso(self.q_pos),
            q_vel: CovBlock::iso(self.q_vel),
            q_rot: CovBlock::iso(self.q_rot),
            q_foot: CovBlock::iso(self.q_foot),
            q_accel_bias: CovBlock::iso(self.q_accel_bias),
            q_gyro_bias: CovBlock::iso(self.q_gyro_bias),
            r_joint: CovBlock::iso(self.r_joint),
            r_joint_rate: CovBlock::iso(self.r_joint_rate),
            prior: PriorCov::iso(prior.rot, prior.pos, prior.vel, prior.foot, prior.accel_bias, prior.gyro_bias),
        }
    }

    pub fn to_offsets(&self, n_f: usize) -> Result<KinematicOffsets> {
        let section = InjectSection { foot: self.foot_offsets.clone(), base: self.base_offset };
        section.to_offsets(n_f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(default = "s_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "s_rel_cost_tol")]
    pub rel_cost_tol: f64,
    #[serde(default = "s_max_iterations")]
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn s_grad_tol() -> f64 {
    1e-8
}
fn s_rel_cost_tol() -> f64 {
    1e-12
}
fn s_max_iterations() -> usize {
    60
}

impl SolverSection {
    pub fn to_settings(&self) -> SolverSettings {
        SolverSettings {
            grad_tol: self.grad_tol,
            rel_cost_tol: self.rel_cost_tol,
            max_iterations: self.max_iterations,
            ..SolverSettings::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FwSection {
    #[serde(default = "f_rho")]
    pub rho: f64,
    #[serde(default = "f_beta")]
    pub beta: f64,
    #[serde(default = "f_k_max")]
    pub k_max: usize,
    #[serde(default = "f_delta0")]
    pub delta0: f64,
    #[serde(default = "f_t_max")]
    pub t_max: usize,
    #[serde(default = "f_gap_tol")]
    pub gap_tol: f64,
    #[serde(default = "f_grad_tol")]
    pub grad_tol: f64,
}

impl Default for FwSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn f_rho() -> f64 {
    1e-4
}
fn f_beta() -> f64 {
    0.5
}
fn f_k_max() -> usize {
    30
}
fn f_delta0() -> f64 {
    0.25
}
fn f_t_max() -> usize {
    200
}
fn f_gap_tol() -> f64 {
    1e-8
}
fn f_grad_tol() -> f64 {
    1e-10
}

impl FwSection {
    pub fn to_config(&self) -> FwConfig {
        FwConfig {
            rho: self.rho,
            beta: self.beta,
            k_max: self.k_max,
            delta0: self.delta0,
            t_max: self.t_max,
            gap_tol: self.gap_tol,
            grad_tol: self.grad_tol,
            ..FwConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsConfig {
    /// Covariance entries may travel this factor up/down from their start.
    #[serde(default = "b_cov_ratio")]
    pub cov_ratio: f64,
    /// Overrides the robot's offset box half-width when positive.
    #[serde(default)]
    pub offset_bound: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn b_cov_ratio() -> f64 {
    1e4
}

impl BoundsConfig {
    pub fn to_feasible(
        &self,
        layout: &ThetaLayout,
        cov: &CovarianceSpec,
        robot: &RobotKinematics,
    ) -> FeasibleSet {
        let bound = if self.offset_bound > 0.0 { self.offset_bound } else { robot.offset_bound };
        let mut fs = FeasibleSet::default_for(layout, cov, bound);
        if self.cov_ratio != b_cov_ratio() {
            for (i, e) in layout.entries().iter().enumerate() {
                if let crate::theta::ThetaKind::Cov { block, param } = &e.kind {
                    let v = cov.block(block).params()[*param];
                    if v > 0.0 {
                        fs.lower[i] = (v / self.cov_ratio).max(1e-12);
                        fs.upper[i] = (v * self.cov_ratio).min(10.0);
                    }
                }
            }
        }
        fs
    }
}

/// The one run-configuration file; sections are optional and default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigFile {
    #[serde(default = "rc_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub script: ScriptSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub inject: InjectSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub frank_wolfe: FwSection,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

fn rc_version() -> u32 {
    1
}

impl Default for RunConfigFile {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfigFile> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfigFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("run config: {e}")))?;
    if cfg.schema_version != 1 {
        return Err(Error::SchemaVersionMismatch {
            found: format!("run config schema {}", cfg.schema_version),
            expected: "run config schema 1".to_string(),
        });
    }
    Ok(cfg)
}

/// Evaluation metrics; the deterministic fields serialize in fixed order,
/// wall clock goes into a trailing comment.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rmse_v: f64,
    pub rmse_euler: f64,
    pub solver_iterations: usize,
    pub solver_converged: bool,
    pub final_cost: f64,
    /// Per-parameter error vs truth, when truth is available.
    pub theta_error: Option<Vec<(String, f64)>>,
    pub wall_clock_s: f64,
}

pub fn write_metrics(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut out = String::new();
    out.push_str("legcal-metrics v1\n");
    out.push_str(&format!("rmse_v {}\n", fmt_f64(report.rmse_v)));
    out.push_str(&format!("rmse_euler {}\n", fmt_f64(report.rmse_euler)));
    out.push_str(&format!("solver_iterations {}\n", report.solver_iterations));
    out.push_str(&format!("solver_converged {}\n", report.solver_converged));
    out.push_str(&format!("final_cost {}\n", fmt_f64(report.final_cost)));
    if let Some(errors) = &report.theta_error {
        for (name, err) in errors {
            out.push_str(&format!("theta_error {name} {}\n", fmt_f64(*err)));
        }
    }
    out.push_str(&format!("# wall_clock_s {:.3}\n", report.wall_clock_s));
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}
