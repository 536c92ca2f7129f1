//! The private solvers: noisy mirror descent (plain and strongly convex),
//! objective perturbation, and the two Frank-Wolfe variants.
//!
//! [`resolve_defaults`] turns a [`SolverConfig`] and a dataset into concrete
//! step counts, step sizes and noise scales, recording each substitution in
//! the [`NoisePlan`] trace. [`solve`] runs the configured algorithm.

mod fw;
mod md;
mod objpert;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BodyKind, ConvexBody};
use crate::losses::{Dataset, Loss, LossSpec};
use crate::potentials::{Potential, PotentialKind, PotentialSpec, ReferenceNorm};
use crate::privacy::{
    fw_gaussian_sigma, fw_laplace_scale, md_sigma, objpert_plan, Covariance, Mechanism,
    NoisePlan, PrivacyBudget,
};

pub use fw::{private_fw_general, private_fw_polytope};
pub use md::{noisy_mirror_descent, strongly_convex_md};
pub use objpert::objective_perturbation;

pub const DEFAULT_MAX_STEPS: usize = 1_000_000;
pub const DEFAULT_WIDTH_SAMPLES: usize = 20_000;
/// Seed of the Gaussian-width estimate, fixed so that every trial of an
/// experiment resolves to the same step count.
pub const WIDTH_SEED: u64 = 0;
/// Largest vertex set polytope Frank-Wolfe will score.
pub const MAX_SCORED_VERTICES: usize = 1_000_000;
pub const OBJPERT_TOL: f64 = 1e-8;
pub const OBJPERT_MAX_ITER: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NoisyMd,
    StronglyConvexMd,
    ObjPert,
    FwPolytope,
    FwGeneral,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::NoisyMd => "noisy_md",
            Algorithm::StronglyConvexMd => "strongly_convex_md",
            Algorithm::ObjPert => "obj_pert",
            Algorithm::FwPolytope => "fw_polytope",
            Algorithm::FwGeneral => "fw_general",
        }
    }
}

/// Step-size rules. Mirror-descent rules give `eta_t`, Frank-Wolfe rules
/// give the mixing weight `mu_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `eta = sqrt(max Psi) / (L ||Q||_2 sqrt(T))`
    MdProof,
    /// `eta = 1 / (L ||Q||_2 sqrt(T))`
    MdTheorem,
    /// `eta = 1 / ((L ||Q||_2 + sqrt(lambda_max(Sigma))) sqrt(T))`, for
    /// non-private runs with sub-Gaussian gradient noise of covariance `Sigma`
    MdSubGaussian,
    /// `eta_t = 2 / (Delta t)`
    StronglyConvex,
    /// A fixed `eta` or `mu`.
    Constant { value: f64 },
    /// `mu_t = 2 / (t + 2)`
    FwOpenLoop,
    /// `mu = 1 / (T + 2)` at every step
    FwFixedHorizon,
}

impl StepSchedule {
    fn is_md(&self) -> bool {
        matches!(
            self,
            StepSchedule::MdProof
                | StepSchedule::MdTheorem
                | StepSchedule::MdSubGaussian
                | StepSchedule::StronglyConvex
                | StepSchedule::Constant { .. }
        )
    }

    fn is_fw(&self) -> bool {
        matches!(
            self,
            StepSchedule::FwOpenLoop | StepSchedule::FwFixedHorizon | StepSchedule::Constant { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub body: ConvexBody,
    /// The symmetric body `Q` of the mirror-descent analysis; defaults to the
    /// symmetric hull of `body`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_body: Option<ConvexBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    pub loss: LossSpec,
    pub budget: PrivacyBudget,
    /// Number of iterates `T`; 0 selects the default formula.
    #[serde(default)]
    pub steps: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    #[serde(default)]
    pub seed: u64,
    /// Replaces the Monte-Carlo Gaussian-width estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian_width: Option<f64>,
    #[serde(default = "default_width_samples")]
    pub width_samples: usize,
    /// Objective-perturbation anchor `theta_0`; defaults to the body center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    /// Non-private noisy mirror descent with this gradient-noise covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_noise: Option<Covariance>,
    /// Keep per-step iterates, selections, gaps and step sizes in the report.
    #[serde(default)]
    pub record_trace: bool,
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

fn default_width_samples() -> usize {
    DEFAULT_WIDTH_SAMPLES
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, body: ConvexBody, loss: LossSpec, budget: PrivacyBudget) -> Self {
        SolverConfig {
            algorithm,
            body,
            aux_body: None,
            potential: None,
            loss,
            budget,
            steps: 0,
            max_steps: DEFAULT_MAX_STEPS,
            schedule: None,
            seed: 0,
            gaussian_width: None,
            width_samples: DEFAULT_WIDTH_SAMPLES,
            anchor: None,
            gradient_noise: None,
            record_trace: false,
        }
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = Some(potential);
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SolverConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
        }
        if let Some(q) = &self.aux_body {
            if q.dim() != self.body.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.body.dim(),
                    actual: q.dim(),
                });
            }
            if !q.is_symmetric() {
                return Err(Error::InvalidParameter("auxiliary body Q must be symmetric".into()));
            }
        }
        if let Some(w) = self.gaussian_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter("gaussian_width must be positive".into()));
            }
        }
        if let Some(StepSchedule::Constant { value }) = self.schedule {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter("constant step must be positive".into()));
            }
        }
        let schedule_ok = match (self.algorithm, self.schedule) {
            (_, None) => true,
            (Algorithm::NoisyMd, Some(s)) => s.is_md() && s != StepSchedule::StronglyConvex,
            (Algorithm::StronglyConvexMd, Some(s)) => {
                matches!(s, StepSchedule::StronglyConvex | StepSchedule::Constant { .. })
            }
            (Algorithm::FwPolytope | Algorithm::FwGeneral, Some(s)) => {
                s.is_fw() && !matches!(s, StepSchedule::Constant { value } if value > 1.0)
            }
            (Algorithm::ObjPert, Some(_)) => false,
        };
        if !schedule_ok {
            return Err(Error::InvalidParameter(format!(
                "schedule {:?} does not apply to {}",
                self.schedule,
                self.algorithm.name()
            )));
        }
        match self.algorithm {
            Algorithm::NoisyMd if self.potential.is_none() => {
                return Err(Error::InvalidParameter("noisy mirror descent needs a potential".into()))
            }
            Algorithm::FwPolytope => match self.body.vertex_count() {
                None => {
                    return Err(Error::Unsupported(
                        "polytope Frank-Wolfe needs a vertex-enumerable body".into(),
                    ))
                }
                Some(k) if k > MAX_SCORED_VERTICES => {
                    return Err(Error::Unsupported(format!(
                        "{k} vertices exceed the scoring limit of {MAX_SCORED_VERTICES}"
                    )))
                }
                _ => {}
            },
            _ => {}
        }
        if self.gradient_noise.is_some() {
            if self.algorithm != Algorithm::NoisyMd {
                return Err(Error::InvalidParameter(
                    "gradient_noise applies to noisy mirror descent only".into(),
                ));
            }
            if self.budget.is_private() {
                return Err(Error::InvalidParameter(
                    "gradient_noise replaces the privacy noise; use a non-private budget".into(),
                ));
            }
        }
        if let Some(a) = &self.anchor {
            if a.len() != self.body.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.body.dim(),
                    actual: a.len(),
                });
            }
        }
        Ok(())
    }
}

/// Every constant a run was calibrated with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    pub lipschitz_l1: Option<f64>,
    pub lipschitz_l2: Option<f64>,
    pub curvature: Option<f64>,
    pub gaussian_width: Option<f64>,
    /// `max_{q in Q} ||q||_2` (mirror descent) or `max_{c in C} ||c||_2`
    pub l2_radius: Option<f64>,
    pub l1_radius: Option<f64>,
    pub potential_max: Option<f64>,
    /// Factor making the potential 1-strongly convex w.r.t. `||.||_Q`.
    pub potential_scale: Option<f64>,
    pub strong_convexity: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub algorithm: Algorithm,
    pub steps: usize,
    pub schedule: Option<StepSchedule>,
    /// Base mirror-descent step size, in the rescaled potential's units.
    pub eta: Option<f64>,
    pub constants: ResolvedConstants,
    pub plan: NoisePlan,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `theta_1, ..., theta_T`
    pub iterates: Vec<Vec<f64>>,
    /// Vertex index chosen at each Frank-Wolfe step.
    pub selected: Vec<usize>,
    /// Duality gap `<grad L(theta_t), theta_t - s_t>` at each Frank-Wolfe step.
    pub gaps: Vec<f64>,
    pub step_sizes: Vec<f64>,
    /// Final vertex weights of polytope Frank-Wolfe, summing to 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub algorithm: Algorithm,
    pub theta_priv: Vec<f64>,
    /// Filled in against an oracle optimum; see `oracle::attach_excess_risk`.
    pub excess_risk: Option<f64>,
    pub iterations: usize,
    pub noise_plan: NoisePlan,
    pub constants: ResolvedConstants,
    pub wall_ms: f64,
    pub seed: u64,
    /// False when an inner solve stopped at its iteration cap.
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<IterationTrace>,
}

/// `T = ||Q||_2^2 eps^2 n^2 / (L^2 ln^2(n/delta) G_Q^2)`, before flooring.
pub fn md_default_steps(q_radius: f64, l2: f64, width: f64, epsilon: f64, delta: f64, n: usize) -> f64 {
    let n = n as f64;
    let ln = (n / delta).ln();
    (q_radius * epsilon * n).powi(2) / (l2 * ln * width).powi(2)
}

/// `T = (||C||_2 n eps)^2 / G_C^2`, before flooring.
pub fn strongly_convex_default_steps(c_radius: f64, width: f64, epsilon: f64, n: usize) -> f64 {
    (c_radius * n as f64 * epsilon).powi(2) / (width * width)
}

/// `T = Gamma^(2/3) (n eps)^(2/3) / (L1 ||C||_1)^(2/3)`, before flooring.
pub fn fw_polytope_default_steps(curvature: f64, l1: f64, l1_radius: f64, epsilon: f64, n: usize) -> f64 {
    (curvature * n as f64 * epsilon / (l1 * l1_radius)).powf(2.0 / 3.0)
}

/// `T = Gamma^(2/3) (n eps)^(2/3) / (L2 G_C)^(2/3)`, before flooring.
pub fn fw_general_default_steps(curvature: f64, l2: f64, width: f64, epsilon: f64, n: usize) -> f64 {
    (curvature * n as f64 * epsilon / (l2 * width)).powf(2.0 / 3.0)
}

/// Floors a formula value and clamps it to `[1, cap]`.
pub fn clamp_steps(raw: f64, cap: usize) -> usize {
    if raw.is_nan() || raw >= cap as f64 {
        cap
    } else if raw < 1.0 {
        1
    } else {
        raw.floor() as usize
    }
}

fn width_of(cfg: &SolverConfig, body: &ConvexBody, what: &str, plan: &mut NoisePlan) -> Result<f64> {
    if let Some(w) = cfg.gaussian_width {
        plan.note(format!("G_{what} = {w} (supplied)"));
        return Ok(w);
    }
    let est = body.gaussian_width_mc(cfg.width_samples, WIDTH_SEED)?;
    plan.note(format!(
        "G_{what} = {:.6} +- {:.2e} (Monte-Carlo, {} samples)",
        est.mean, est.std_error, est.samples
    ));
    Ok(est.mean)
}

fn resolve_steps(cfg: &SolverConfig, raw: f64, formula: &str, plan: &mut NoisePlan) -> usize {
    if cfg.steps > 0 {
        plan.note(format!("T = {} (supplied)", cfg.steps));
        return cfg.steps;
    }
    let t = clamp_steps(raw, cfg.max_steps);
    plan.note(format!("T = {t} from {formula} = {raw:.6e}, floored and clamped to [1, {}]", cfg.max_steps));
    if raw < 1.0 {
        log::warn!("{formula} = {raw:.3e} < 1: the run returns its starting point; increase n or epsilon");
        plan.note("warning: the step formula is below 1, so the output is the starting point");
    }
    t
}

/// `c` with `||v||_ref >= c ||v||_Q` for all `v`, so that a potential that is
/// `m`-strongly convex w.r.t. the reference norm is `m c^2`-strongly convex
/// w.r.t. `||.||_Q`.
fn norm_comparison(pot: &Potential, q: &ConvexBody) -> Result<f64> {
    let p = q.dim() as f64;
    let l2_rule = |q: &ConvexBody| -> Result<f64> {
        Ok(match q.kind() {
            BodyKind::L2Ball { radius } => *radius,
            BodyKind::L1Ball { radius } => radius / p.sqrt(),
            BodyKind::Box { hi, .. } => *hi,
            BodyKind::GroupedL1Ball { radius, group } => {
                radius / (q.dim().div_ceil(*group) as f64).sqrt()
            }
            _ => {
                return Err(Error::Unsupported(
                    "cannot compare the l2 norm with a polytope gauge; set aux_body to a ball or box"
                        .into(),
                ))
            }
        })
    };
    match pot.reference_norm() {
        ReferenceNorm::L2 => l2_rule(q),
        ReferenceNorm::L1 => Ok(match q.kind() {
            BodyKind::L2Ball { radius }
            | BodyKind::L1Ball { radius }
            | BodyKind::GroupedL1Ball { radius, .. } => *radius,
            BodyKind::Box { hi, .. } => *hi,
            _ => {
                let mut worst = 0.0f64;
                for i in 0..q.dim() {
                    let mut e = vec![0.0; q.dim()];
                    e[i] = 1.0;
                    worst = worst.max(q.minkowski_norm(&e)?);
                }
                1.0 / worst
            }
        }),
        ReferenceNorm::GroupedL1 => match (pot.domain().kind(), q.kind()) {
            (
                BodyKind::GroupedL1Ball { group: g1, .. },
                BodyKind::GroupedL1Ball { radius, group: g2 },
            ) if g1 == g2 => Ok(*radius),
            _ => {
                // ||v||_Q <= sum_j ||v_j||_Q <= sum_j ||v_j||_2 / c_2
                l2_rule(q)
            }
        },
        ReferenceNorm::CoefficientL1 => {
            let PotentialKind::PolytopeQNorm { vertices, .. } = pot.kind() else {
                unreachable!("coefficient norm belongs to the polytope potential")
            };
            let mut worst = 0.0f64;
            for v in vertices {
                worst = worst.max(q.minkowski_norm(v)?);
            }
            Ok(if worst > 0.0 { 1.0 / worst } else { 1.0 })
        }
    }
}

pub(crate) fn md_potential(cfg: &SolverConfig) -> Result<Potential> {
    let spec = match (&cfg.potential, cfg.algorithm) {
        (Some(s), _) => s.clone(),
        (None, Algorithm::StronglyConvexMd) => PotentialSpec::SquaredL2 { center: None },
        (None, _) => return Err(Error::InvalidParameter("mirror descent needs a potential".into())),
    };
    Potential::new(&spec, &cfg.body)
}

/// Fills in `T`, step sizes and noise scales for `cfg` on `data`.
pub fn resolve_defaults(cfg: &SolverConfig, data: &Dataset) -> Result<Resolved> {
    cfg.validate()?;
    if data.dim() != cfg.body.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.body.dim(),
            actual: data.dim(),
        });
    }
    let loss = Loss::new(cfg.loss.clone())?;
    let budget = cfg.budget;
    let n = data.n();
    let eps = budget.epsilon;
    let mut c = ResolvedConstants::default();
    let mut plan = NoisePlan::new(Mechanism::GaussianPerStep { sigma: 0.0 }, 0);
    plan.note(format!(
        "budget: epsilon = {eps}, delta = {}, n = {n}{}",
        budget.delta,
        if budget.is_private() { "" } else { ", noise disabled" }
    ));
    let (l1, l2) = loss.lipschitz_constants(&cfg.body, data)?;
    c.lipschitz_l1 = Some(l1);
    c.lipschitz_l2 = Some(l2);
    plan.note(format!("L1 = {l1}, L2 = {l2} ({:?} records)", data.profile()));

    let mut eta = None;
    let mut schedule = cfg.schedule;
    let steps;
    match cfg.algorithm {
        Algorithm::NoisyMd => {
            let pot = md_potential(cfg)?;
            let q = match &cfg.aux_body {
                Some(q) => q.clone(),
                None => cfg.body.symmetric_hull()?,
            };
            let comparison = norm_comparison(&pot, &q)?;
            let kappa = pot.strong_convexity_modulus() * comparison * comparison;
            let psi_max = pot.max_over_domain()? / kappa;
            c.potential_scale = Some(kappa);
            c.potential_max = Some(psi_max);
            plan.note(format!(
                "potential scaled by 1/kappa, kappa = modulus {} x comparison^2 {}; max Psi = {psi_max}",
                pot.strong_convexity_modulus(),
                comparison * comparison
            ));
            let q_radius = q.l2_radius();
            c.l2_radius = Some(q_radius);
            let width = width_of(cfg, &q, "Q", &mut plan)?;
            c.gaussian_width = Some(width);
            let raw = md_default_steps(q_radius, l2, width, eps, budget.delta, n);
            steps = resolve_steps(
                cfg,
                raw,
                "||Q||_2^2 eps^2 n^2 / (L^2 ln^2(n/delta) G_Q^2)",
                &mut plan,
            );
            let sigma = if cfg.gradient_noise.is_some() {
                0.0
            } else {
                md_sigma(l2, steps, &budget, n)?
            };
            plan.note(format!(
                "sigma = sqrt(32 L^2 T ln^2(T/delta)) / (eps n) = {sigma:e}; the step formula uses ln(n/delta)"
            ));
            plan.mechanism = Mechanism::GaussianPerStep { sigma };
            let lq = (l2 * q_radius).max(f64::MIN_POSITIVE);
            let sqrt_t = (steps as f64).sqrt();
            let chosen = match (schedule, &cfg.gradient_noise) {
                (Some(s), _) => s,
                (None, Some(_)) => StepSchedule::MdSubGaussian,
                (None, None) => StepSchedule::MdProof,
            };
            let value = match chosen {
                StepSchedule::MdProof => psi_max.sqrt() / (lq * sqrt_t),
                StepSchedule::MdTheorem => 1.0 / (lq * sqrt_t),
                StepSchedule::MdSubGaussian => {
                    let cov = cfg.gradient_noise.as_ref().ok_or_else(|| {
                        Error::InvalidParameter("sub-Gaussian schedule needs gradient_noise".into())
                    })?;
                    let top = covariance_top_eigenvalue(cov, cfg.body.dim())?;
                    1.0 / ((l2 * q_radius + top.sqrt()) * sqrt_t)
                }
                StepSchedule::Constant { value } => value,
                _ => unreachable!("validated"),
            };
            plan.note(format!("eta = {value:e} ({chosen:?})"));
            schedule = Some(chosen);
            eta = Some(value);
        }
        Algorithm::StronglyConvexMd => {
            let pot = md_potential(cfg)?;
            let delta_sc = match cfg.loss.constants.strong_convexity {
                Some(d) => d,
                None => match pot.kind() {
                    PotentialKind::SquaredL2 { .. } => loss.strong_convexity().unwrap_or(0.0),
                    _ => {
                        return Err(Error::MissingConstant(
                            "strong convexity w.r.t. a non-Euclidean potential must be declared".into(),
                        ))
                    }
                },
            };
            if !(delta_sc > 0.0) {
                return Err(Error::InvalidParameter(
                    "strongly convex mirror descent needs strong convexity Delta > 0".into(),
                ));
            }
            c.strong_convexity = Some(delta_sc);
            c.potential_max = Some(pot.max_over_domain()?);
            let c_radius = cfg.body.l2_radius();
            c.l2_radius = Some(c_radius);
            let width = width_of(cfg, &cfg.body, "C", &mut plan)?;
            c.gaussian_width = Some(width);
            let raw = strongly_convex_default_steps(c_radius, width, eps, n);
            steps = resolve_steps(cfg, raw, "(||C||_2 n eps)^2 / G_C^2", &mut plan);
            let sigma = md_sigma(l2, steps, &budget, n)?;
            plan.note(format!("sigma = sqrt(32 L^2 T ln^2(T/delta)) / (eps n) = {sigma:e}"));
            plan.mechanism = Mechanism::GaussianPerStep { sigma };
            let chosen = schedule.unwrap_or(StepSchedule::StronglyConvex);
            plan.note(format!("step schedule {chosen:?} with Delta = {delta_sc}"));
            schedule = Some(chosen);
        }
        Algorithm::ObjPert => {
            let (lo, hi) = loss.hessian_eig_bounds(data)?;
            c.lambda_min = Some(lo);
            c.lambda_max = Some(hi);
            let (sigma, zeta) = objpert_plan(l2, hi, lo, &budget, n)?;
            plan.note(format!("lambda_min = {lo}, lambda_max = {hi}"));
            plan.note(format!(
                "sigma = L sqrt(2 ln(1/delta)) / (n eps) = {sigma:e}; zeta = max(2 lambda_max/(n eps) - lambda_min, 0) = {zeta:e}"
            ));
            plan.mechanism = Mechanism::ObjPert { sigma, zeta };
            steps = 1;
        }
        Algorithm::FwPolytope => {
            let gamma = loss.curvature_bound(&cfg.body, data)?;
            let r1 = cfg.body.l1_radius();
            c.curvature = Some(gamma);
            c.l1_radius = Some(r1);
            plan.note(format!("Gamma = {gamma}, ||C||_1 = {r1}"));
            let raw = fw_polytope_default_steps(gamma, l1, r1, eps, n);
            steps = resolve_steps(
                cfg,
                raw,
                "Gamma^(2/3) (n eps)^(2/3) / (L1 ||C||_1)^(2/3)",
                &mut plan,
            );
            let scale = fw_laplace_scale(l1, r1, steps, &budget, n)?;
            plan.note(format!(
                "Laplace scale = L1 ||C||_1 sqrt(8 T ln(1/delta)) / (n eps) = {scale:e}, on scores against the 1/n-normalized gradient"
            ));
            plan.mechanism = Mechanism::LaplacePerScore { scale };
            let chosen = schedule.unwrap_or(StepSchedule::FwOpenLoop);
            plan.note(format!("mixing weights {chosen:?}"));
            schedule = Some(chosen);
        }
        Algorithm::FwGeneral => {
            let gamma = loss.curvature_bound(&cfg.body, data)?;
            c.curvature = Some(gamma);
            c.l2_radius = Some(cfg.body.l2_radius());
            let width = width_of(cfg, &cfg.body, "C", &mut plan)?;
            c.gaussian_width = Some(width);
            plan.note(format!("Gamma = {gamma}"));
            let raw = fw_general_default_steps(gamma, l2, width, eps, n);
            steps = resolve_steps(cfg, raw, "Gamma^(2/3) (n eps)^(2/3) / (L2 G_C)^(2/3)", &mut plan);
            let sigma = fw_gaussian_sigma(l2, steps, &budget, n)?;
            plan.note(format!(
                "sigma = sqrt(32 L2^2 T ln^2(n/delta)) / (n eps) = {sigma:e}"
            ));
            plan.mechanism = Mechanism::GaussianPerStep { sigma };
            let chosen = schedule.unwrap_or(StepSchedule::FwOpenLoop);
            plan.note(format!("mixing weights {chosen:?}"));
            schedule = Some(chosen);
        }
    }
    plan.steps = steps;
    Ok(Resolved {
        algorithm: cfg.algorithm,
        steps,
        schedule,
        eta,
        constants: c,
        plan,
    })
}

fn covariance_top_eigenvalue(cov: &Covariance, p: usize) -> Result<f64> {
    match cov {
        Covariance::Diagonal(d) => {
            crate::error::check_dim(p, d.len())?;
            Ok(d.iter().cloned().fold(0.0, f64::max))
        }
        Covariance::Full(m) => {
            crate::error::check_dim(p * p, m.len())?;
            Ok(crate::losses::max_eigenvalue(m, p))
        }
    }
}

/// Runs `cfg.algorithm` on `data`.
pub fn solve(cfg: &SolverConfig, data: &Dataset) -> Result<SolverReport> {
    match cfg.algorithm {
        Algorithm::NoisyMd => noisy_mirror_descent(cfg, data),
        Algorithm::StronglyConvexMd => strongly_convex_md(cfg, data),
        Algorithm::ObjPert => objective_perturbation(cfg, data),
        Algorithm::FwPolytope => private_fw_polytope(cfg, data),
        Algorithm::FwGeneral => private_fw_general(cfg, data),
    }
}

fn expect_algorithm(cfg: &SolverConfig, algorithm: Algorithm) -> Result<()> {
    if cfg.algorithm == algorithm {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "config is for {}, not {}",
            cfg.algorithm.name(),
            algorithm.name()
        )))
    }
}

fn finish(
    cfg: &SolverConfig,
    resolved: Resolved,
    theta: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Option<IterationTrace>,
    started: Instant,
) -> SolverReport {
    SolverReport {
        algorithm: cfg.algorithm,
        theta_priv: theta,
        excess_risk: None,
        iterations,
        noise_plan: resolved.plan,
        constants: resolved.constants,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        seed: cfg.seed,
        converged,
        trace,
    }
}
