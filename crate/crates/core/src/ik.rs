//! Levenberg–Marquardt IK over a stacked residual of EE pose error, an
//! optional elbow pose error and a joint-change penalty.
//!
//! Pose residuals are `W^1/2 log(T_target^-1 T_fk(q))`. Their Jacobian is the
//! frame's body Jacobian premultiplied by the inverse SE(3) right Jacobian at
//! the residual twist, so it is exact rather than a small-error approximation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6xX, Vector3, Vector6};
use thiserror::Error;

use crate::chain::{ChainError, Frame, JointConfig, KinematicChain};
use crate::liegroup::{se3_right_jacobian_inv, LieError, Pose, UnitQuaternion};

#[derive(Debug, Error)]
pub enum IkError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("elbow term is enabled but no elbow target was given")]
    MissingElbowTarget,
    #[error("previous configuration has {got} entries, chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("normal equations stayed singular after damping escalation")]
    SingularUpdate { best: Box<SolveReport> },
}

/// Diagonal cost weights. Residuals are scaled by their square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWeights {
    /// Translational block then rotational block.
    pub w_ee: [f64; 6],
    pub w_elbow: [f64; 6],
    pub w_smooth: f64,
}

impl Default for ResidualWeights {
    /// `W_ee = diag(50 I3, 40 I3)`, `W_elbow = diag(20 I3, 5 I3)`, `W_smooth = 0.35 I`.
    fn default() -> Self {
        Self {
            w_ee: [50.0, 50.0, 50.0, 40.0, 40.0, 40.0],
            w_elbow: [20.0, 20.0, 20.0, 5.0, 5.0, 5.0],
            w_smooth: 0.35,
        }
    }
}

impl ResidualWeights {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w_ee: self.w_ee.map(|w| w * c),
            w_elbow: self.w_elbow.map(|w| w * c),
            w_smooth: self.w_smooth * c,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.w_ee
            .iter()
            .chain(&self.w_elbow)
            .chain(std::iter::once(&self.w_smooth))
            .all(|w| w.is_finite() && *w >= 0.0)
    }
}

fn sqrt_diag(w: &[f64; 6]) -> Vector6<f64> {
    Vector6::from_iterator(w.iter().map(|v| v.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// Constant damping; every step is accepted.
    Fixed(f64),
    /// Multiply by `up` and reject on a cost increase, by `down` on acceptance.
    Multiplicative {
        init: f64,
        up: f64,
        down: f64,
        floor: f64,
        cap: f64,
    },
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::Multiplicative {
            init: 1e-3,
            up: 10.0,
            down: 0.5,
            floor: 1e-9,
            cap: 1e6,
        }
    }
}

impl LambdaPolicy {
    fn initial(&self) -> f64 {
        match *self {
            LambdaPolicy::Fixed(l) => l,
            LambdaPolicy::Multiplicative { init, .. } => init,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub lambda: LambdaPolicy,
    /// Converged once the infinity norm of the joint step drops below this.
    pub step_tol: f64,
    /// Converged once the relative cost decrease of an accepted step drops below this.
    pub cost_tol: f64,
    pub elbow_enabled: bool,
    /// Damping escalations tried when the Cholesky factorization fails.
    pub max_escalations: usize,
    /// Extra runs from spread-out seeds when a run stalls against a joint
    /// limit. All runs share `max_iters`.
    pub restarts: usize,
    /// A run ending at or below this cost is never restarted.
    pub restart_cost: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::cold_start()
    }
}

impl SolverConfig {
    pub fn cold_start() -> Self {
        Self {
            max_iters: 100,
            lambda: LambdaPolicy::default(),
            step_tol: 1e-8,
            cost_tol: 1e-10,
            elbow_enabled: false,
            max_escalations: 5,
            restarts: 16,
            restart_cost: 1e-8,
        }
    }

    /// Iteration budget for warm-started trajectory streaming.
    pub fn warm_start() -> Self {
        Self {
            max_iters: 10,
            restarts: 0,
            ..Self::cold_start()
        }
    }

    pub fn with_elbow(mut self, enabled: bool) -> Self {
        self.elbow_enabled = enabled;
        self
    }

    pub fn with_lambda(mut self, lambda: LambdaPolicy) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Targets and the previous configuration for one solve.
#[derive(Debug, Clone)]
pub struct IkProblem<'a> {
    pub target_ee: &'a Pose,
    pub target_elbow: Option<&'a Pose>,
    pub q_prev: &'a JointConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub q_star: JointConfig,
    pub iters: usize,
    pub final_cost: f64,
    pub cost_ee: f64,
    pub cost_elbow: f64,
    pub cost_smooth: f64,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    pub limit_active: Vec<bool>,
    /// Cost after each accepted step, starting with the initial cost.
    pub accepted_costs: Vec<f64>,
}

/// Weighted EE pose residual.
pub fn cost_ee(
    chain: &KinematicChain,
    q: &JointConfig,
    target_ee: &Pose,
    w: &ResidualWeights,
) -> Result<Vector6<f64>, IkError> {
    let fk = chain.fk(q, Frame::Ee)?;
    pose_residual(&fk, target_ee, &w.w_ee).map(|(r, _)| r)
}

/// Weighted elbow pose residual.
pub fn cost_elbow(
    chain: &KinematicChain,
    q: &JointConfig,
    target_elbow: &Pose,
    w: &ResidualWeights,
) -> Result<Vector6<f64>, IkError> {
    let fk = chain.fk(q, Frame::Elbow)?;
    pose_residual(&fk, target_elbow, &w.w_elbow).map(|(r, _)| r)
}

/// Weighted joint-change residual `sqrt(w_smooth) (q_t - q_prev)`.
pub fn cost_smooth(
    q_t: &JointConfig,
    q_prev: &JointConfig,
    w: &ResidualWeights,
) -> Result<DVector<f64>, IkError> {
    if q_t.len() != q_prev.len() {
        return Err(IkError::DimensionMismatch {
            expected: q_t.len(),
            got: q_prev.len(),
        });
    }
    Ok((q_t - q_prev) * w.w_smooth.sqrt())
}

/// Axis used to nudge a target whose relative rotation sits on the pi boundary.
fn perturbation_axis() -> Vector3<f64> {
    Vector3::new(1.0, 2.0, 3.0).normalize()
}

/// Weighted residual and the inverse right Jacobian at the unweighted twist.
fn pose_residual(
    fk: &Pose,
    target: &Pose,
    weights: &[f64; 6],
) -> Result<(Vector6<f64>, Matrix6<f64>), IkError> {
    let xi = match target.inverse().compose(fk).log() {
        Ok(xi) => xi,
        Err(LieError::AngleNearPi { .. }) => {
            let nudge = UnitQuaternion::from_axis_angle(&perturbation_axis(), 1e-5);
            let nudged = Pose::new(target.rotation.mul(&nudge), target.translation);
            nudged.inverse().compose(fk).log()?
        }
        Err(e) => return Err(e.into()),
    };
    let s = sqrt_diag(weights);
    Ok((
        xi.to_vector().component_mul(&s),
        se3_right_jacobian_inv(&xi),
    ))
}

/// Rows of `d residual / d q` for one pose term.
fn pose_residual_jacobian(
    fk: &Pose,
    geometric: &Matrix6xX<f64>,
    jr_inv: &Matrix6<f64>,
    weights: &[f64; 6],
) -> Matrix6xX<f64> {
    // geometric columns are base-frame velocities; the residual is perturbed
    // on the right, i.e. in the frame's own coordinates
    let rt = fk.rotation.inverse().to_matrix();
    let mut body = Matrix6xX::zeros(geometric.ncols());
    let top = rt * geometric.fixed_rows::<3>(0);
    let bottom = rt * geometric.fixed_rows::<3>(3);
    body.fixed_rows_mut::<3>(0).copy_from(&top);
    body.fixed_rows_mut::<3>(3).copy_from(&bottom);
    let mut j = jr_inv * body;
    for (r, w) in weights.iter().enumerate() {
        j.row_mut(r).scale_mut(w.sqrt());
    }
    j
}

/// Per-term breakdown of a stacked evaluation.
#[derive(Debug, Clone)]
pub struct Stacked {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub cost_ee: f64,
    pub cost_elbow: f64,
    pub cost_smooth: f64,
}

impl Stacked {
    pub fn cost(&self) -> f64 {
        self.residual.norm_squared()
    }
}

/// Stacks `[c_ee; c_elbow; c_smooth]` and its Jacobian. The elbow block is
/// present only when `elbow_enabled`; its target is otherwise never read.
pub fn stack_residuals(
    chain: &KinematicChain,
    q: &JointConfig,
    problem: &IkProblem<'_>,
    weights: &ResidualWeights,
    elbow_enabled: bool,
) -> Result<Stacked, IkError> {
    let d = chain.dof();
    if problem.q_prev.len() != d {
        return Err(IkError::DimensionMismatch {
            expected: d,
            got: problem.q_prev.len(),
        });
    }
    let elbow_target = if elbow_enabled {
        Some(problem.target_elbow.ok_or(IkError::MissingElbowTarget)?)
    } else {
        None
    };
    let rows = 6 + if elbow_enabled { 6 } else { 0 } + d;
    let mut residual = DVector::zeros(rows);
    let mut jacobian = DMatrix::zeros(rows, d);

    let (fk, geo) = chain.fk_jacobian(q, Frame::Ee)?;
    let (r, jr) = pose_residual(&fk, problem.target_ee, &weights.w_ee)?;
    residual.fixed_rows_mut::<6>(0).copy_from(&r);
    jacobian
        .rows_mut(0, 6)
        .copy_from(&pose_residual_jacobian(&fk, &geo, &jr, &weights.w_ee));
    let cost_ee = r.norm_squared();

    let mut row = 6;
    let mut cost_elbow = 0.0;
    if let Some(target) = elbow_target {
        let (fk, geo) = chain.fk_jacobian(q, Frame::Elbow)?;
        let (r, jr) = pose_residual(&fk, target, &weights.w_elbow)?;
        residual.fixed_rows_mut::<6>(row).copy_from(&r);
        jacobian
            .rows_mut(row, 6)
            .copy_from(&pose_residual_jacobian(&fk, &geo, &jr, &weights.w_elbow));
        cost_elbow = r.norm_squared();
        row += 6;
    }

    let s = cost_smooth(q, problem.q_prev, weights)?;
    residual.rows_mut(row, d).copy_from(&s);
    jacobian
        .view_mut((row, 0), (d, d))
        .fill_diagonal(weights.w_smooth.sqrt());
    let cost_smooth = s.norm_squared();

    Ok(Stacked {
        residual,
        jacobian,
        cost_ee,
        cost_elbow,
        cost_smooth,
    })
}

/// Damped Gauss–Newton step `-(J^T J + lambda I)^-1 J^T c` over the joints
/// not in `frozen`, escalating `lambda` when the factorization fails.
/// Returns the step and the damping used.
fn damped_step(
    jtj: &DMatrix<f64>,
    g: &DVector<f64>,
    frozen: &[bool],
    lambda: f64,
    escalations: usize,
    up: f64,
) -> Option<(DVector<f64>, f64)> {
    let mut lam = lambda;
    for _ in 0..=escalations {
        let mut h = jtj.clone();
        let mut rhs = g.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += lam;
            if frozen[i] {
                h.row_mut(i).fill(0.0);
                h.column_mut(i).fill(0.0);
                h[(i, i)] = 1.0;
                rhs[i] = 0.0;
            }
        }
        if let Some(chol) = h.cholesky() {
            let step = -chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return Some((step, lam));
            }
        }
        lam *= up.max(10.0);
    }
    None
}

/// Step with joints that sit on a limit and would be pushed further out
/// removed from the update; the result is then clamped into the limits.
fn limited_step(
    chain: &KinematicChain,
    q: &JointConfig,
    stacked: &Stacked,
    lambda: f64,
    escalations: usize,
    up: f64,
) -> Option<(JointConfig, f64)> {
    let jt = stacked.jacobian.transpose();
    let jtj = &jt * &stacked.jacobian;
    let g = &jt * &stacked.residual;
    let mut frozen = vec![false; q.len()];
    loop {
        let (step, used) = damped_step(&jtj, &g, &frozen, lambda, escalations, up)?;
        let mut changed = false;
        for (i, j) in chain.joints().iter().enumerate() {
            let pushing_out = (q[i] <= j.limits[0] && step[i] < 0.0)
                || (q[i] >= j.limits[1] && step[i] > 0.0);
            if pushing_out && !frozen[i] {
                frozen[i] = true;
                changed = true;
            }
        }
        if !changed {
            let mut q_new = q + step;
            chain.clamp(&mut q_new);
            return Some((q_new, used));
        }
    }
}

/// Minimizes the stacked residual from `q_init`.
///
/// When a run stalls above `restart_cost` with a joint held at a limit, the
/// remaining iteration budget is spent on further runs seeded from a Halton
/// sequence over the limit box. The lowest-cost run is returned; `iters`
/// counts all runs and `accepted_costs` belongs to the returned run.
pub fn solve(
    chain: &KinematicChain,
    q_init: &JointConfig,
    problem: &IkProblem<'_>,
    config: &SolverConfig,
    weights: &ResidualWeights,
) -> Result<SolveReport, IkError> {
    let start = Instant::now();
    let mut best: Option<SolveReport> = None;
    let mut used = 0;
    let mut singular = false;
    for run in 0..=config.restarts {
        let seed = if run == 0 {
            q_init.clone()
        } else {
            halton_seed(chain, run)
        };
        let (report, was_singular) =
            match solve_run(
                chain,
                &seed,
                problem,
                config,
                weights,
                config.max_iters - used,
                run < config.restarts,
            ) {
                Ok(r) => (r, false),
                Err(IkError::SingularUpdate { best }) => (*best, true),
                Err(e) => return Err(e),
            };
        used += report.iters;
        let stalled_at_limit =
            report.final_cost > config.restart_cost && report.limit_active.iter().any(|&a| a);
        let better = best
            .as_ref()
            .is_none_or(|b| report.final_cost < b.final_cost);
        if better {
            singular = was_singular;
            best = Some(report);
        }
        if !stalled_at_limit || used >= config.max_iters {
            break;
        }
    }
    let mut best = best.expect("at least one run");
    best.iters = used;
    best.wall_time = start.elapsed().as_secs_f64();
    if singular {
        return Err(IkError::SingularUpdate {
            best: Box::new(best),
        });
    }
    Ok(best)
}

/// A run pressed against a limit whose cost fell by less than 30% over the
/// last three accepted steps is not worth finishing when restarts remain.
fn stalled_at_limit(
    chain: &KinematicChain,
    q: &JointConfig,
    costs: &[f64],
    config: &SolverConfig,
) -> bool {
    let n = costs.len();
    n > 3
        && costs[n - 1] > config.restart_cost
        && costs[n - 1] > 0.7 * costs[n - 4]
        && chain
            .joints()
            .iter()
            .zip(q.iter())
            .any(|(j, v)| *v <= j.limits[0] || *v >= j.limits[1])
}

fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn halton_seed(chain: &KinematicChain, index: usize) -> JointConfig {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    JointConfig::from_iterator(
        chain.dof(),
        chain.joints().iter().enumerate().map(|(i, j)| {
            let h = halton(index, PRIMES[i % PRIMES.len()]);
            j.limits[0] + h * (j.limits[1] - j.limits[0])
        }),
    )
}

/// One LM run from `q_init` with at most `max_iters` iterations.
fn solve_run(
    chain: &KinematicChain,
    q_init: &JointConfig,
    problem: &IkProblem<'_>,
    config: &SolverConfig,
    weights: &ResidualWeights,
    max_iters: usize,
    may_abandon: bool,
) -> Result<SolveReport, IkError> {
    let start = Instant::now();
    let mut q = q_init.clone();
    chain.clamp(&mut q);
    let mut current = stack_residuals(chain, &q, problem, weights, config.elbow_enabled)?;
    let mut cost = current.cost();
    let mut lambda = config.lambda.initial();
    let mut accepted_costs = vec![cost];
    let mut iters = 0;
    let mut converged = false;

    let report = |q: &JointConfig, s: &Stacked, iters, converged, costs: Vec<f64>| {
        let limit_active = chain
            .joints()
            .iter()
            .zip(q.iter())
            .map(|(j, v)| *v <= j.limits[0] || *v >= j.limits[1])
            .collect();
        SolveReport {
            q_star: q.clone(),
            iters,
            final_cost: s.cost(),
            cost_ee: s.cost_ee,
            cost_elbow: s.cost_elbow,
            cost_smooth: s.cost_smooth,
            converged,
            wall_time: start.elapsed().as_secs_f64(),
            limit_active,
            accepted_costs: costs,
        }
    };

    while iters < max_iters {
        if cost <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let up = match config.lambda {
            LambdaPolicy::Multiplicative { up, .. } => up,
            LambdaPolicy::Fixed(_) => 10.0,
        };
        let Some((q_new, used)) =
            limited_step(
                chain,
                &q,
                &current,
                lambda,
                config.max_escalations,
                up,
            )
        else {
            return Err(IkError::SingularUpdate {
                best: Box::new(report(&q, &current, iters, false, accepted_costs)),
            });
        };
        iters += 1;
        if (&q_new - &q).amax() < config.step_tol {
            converged = true;
            break;
        }
        let candidate = stack_residuals(chain, &q_new, problem, weights, config.elbow_enabled)?;
        let new_cost = candidate.cost();
        match config.lambda {
            LambdaPolicy::Fixed(_) => {
                let rel = (cost - new_cost).abs() / cost.max(f64::MIN_POSITIVE);
                q = q_new;
                current = candidate;
                cost = new_cost;
                accepted_costs.push(cost);
                if rel < config.cost_tol {
                    converged = true;
                    break;
                }
            }
            LambdaPolicy::Multiplicative {
                up,
                down,
                floor,
                cap,
                ..
            } => {
                if new_cost < cost {
                    let rel = (cost - new_cost) / cost;
                    q = q_new;
                    current = candidate;
                    cost = new_cost;
                    accepted_costs.push(cost);
                    lambda = (used * down).max(floor);
                    if rel < config.cost_tol {
                        converged = true;
                        break;
                    }
                    if may_abandon && stalled_at_limit(chain, &q, &accepted_costs, config) {
                        break;
                    }
                } else {
                    lambda = (used * up).min(cap);
                }
            }
        }
    }
    Ok(report(&q, &current, iters, converged, accepted_costs))
}

/// Streams targets through warm-started solves.
///
/// The first step starts from the zero configuration with the cold-start
/// budget and no smoothness reference; later steps start from, and are
/// smoothed toward, the previous solution.
#[derive(Debug, Clone)]
pub struct TrajectorySolver<'c> {
    chain: &'c KinematicChain,
    cold: SolverConfig,
    warm: SolverConfig,
    weights: ResidualWeights,
    q_prev: Option<JointConfig>,
}

impl<'c> TrajectorySolver<'c> {
    pub fn new(
        chain: &'c KinematicChain,
        cold: SolverConfig,
        warm: SolverConfig,
        weights: ResidualWeights,
    ) -> Self {
        Self {
            chain,
            cold,
            warm,
            weights,
            q_prev: None,
        }
    }

    pub fn reset(&mut self) {
        self.q_prev = None;
    }

    pub fn previous(&self) -> Option<&JointConfig> {
        self.q_prev.as_ref()
    }

    pub fn step(
        &mut self,
        target_ee: &Pose,
        target_elbow: Option<&Pose>,
    ) -> Result<SolveReport, IkError> {
        let report = match &self.q_prev {
            None => {
                let zero = self.chain.zero_config();
                let weights = ResidualWeights {
                    w_smooth: 0.0,
                    ..self.weights.clone()
                };
                let problem = IkProblem {
                    target_ee,
                    target_elbow,
                    q_prev: &zero,
                };
                solve(self.chain, &zero, &problem, &self.cold, &weights)
            }
            Some(prev) => {
                let problem = IkProblem {
                    target_ee,
                    target_elbow,
                    q_prev: prev,
                };
                solve(self.chain, prev, &problem, &self.warm, &self.weights)
            }
        };
        let report = match report {
            Ok(r) => r,
            Err(IkError::SingularUpdate { best }) => *best,
            Err(e) => return Err(e),
        };
        self.q_prev = Some(report.q_star.clone());
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{exp_se3, geodesic_angle, Twist};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(chain: &KinematicChain, rng: &mut impl Rng) -> JointConfig {
        JointConfig::from_iterator(
            chain.dof(),
            chain.joints().iter().map(|j| rng.gen_range(j.limits[0]..=j.limits[1])),
        )
    }

    fn no_smooth() -> ResidualWeights {
        ResidualWeights {
            w_smooth: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn default_weight_values() {
        let w = ResidualWeights::default();
        assert_eq!(w.w_ee, [50.0, 50.0, 50.0, 40.0, 40.0, 40.0]);
        assert_eq!(w.w_elbow, [20.0, 20.0, 20.0, 5.0, 5.0, 5.0]);
        assert_eq!(w.w_smooth, 0.35);
        assert!(w.is_valid());
    }

    #[test]
    fn ee_residual_zero_at_target() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_q(&chain, &mut rng);
        let target = chain.fk(&q, Frame::Ee).unwrap();
        let r = cost_ee(&chain, &q, &target, &ResidualWeights::default()).unwrap();
        assert!(r.amax() < 1e-12);
        let r = cost_elbow(&chain, &q, &chain.fk(&q, Frame::Elbow).unwrap(), &ResidualWeights::default()).unwrap();
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn ee_residual_for_translated_target() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_q(&chain, &mut rng);
        let fk = chain.fk(&q, Frame::Ee).unwrap();
        let target = Pose::new(fk.rotation, fk.translation + Vector3::new(0.1, 0.0, 0.0));
        let r = cost_ee(&chain, &q, &target, &ResidualWeights::default()).unwrap();
        // pure translation offset: log is the offset expressed in the target frame
        let expected = target.rotation.inverse().rotate(&Vector3::new(-0.1, 0.0, 0.0)) * 50f64.sqrt();
        assert!((r.fixed_rows::<3>(0) - expected).amax() < 1e-12);
        assert!(r.fixed_rows::<3>(3).amax() < 1e-12);
        // direct log oracle on the explicit relative transform
        let direct = target.inverse().compose(&fk).log().unwrap();
        assert!((direct.v * 50f64.sqrt() - expected).amax() < 1e-12);
    }

    #[test]
    fn zero_weights_annihilate() {
        let chain = KinematicChain::reference_arm();
        let q = chain.zero_config();
        let target = Pose::from_translation(Vector3::new(0.3, 0.1, -0.2));
        let w = ResidualWeights {
            w_ee: [0.0; 6],
            w_elbow: [0.0; 6],
            w_smooth: 0.0,
        };
        assert_eq!(cost_ee(&chain, &q, &target, &w).unwrap(), Vector6::zeros());
        let other = JointConfig::from_element(7, 0.4);
        assert_eq!(cost_smooth(&q, &other, &w).unwrap().amax(), 0.0);
    }

    #[test]
    fn elbow_weights_scale_blocks() {
        let chain = KinematicChain::reference_arm();
        let q = chain.zero_config();
        let fk = chain.fk(&q, Frame::Elbow).unwrap();
        let twist = Twist::new(Vector3::new(0.01, -0.02, 0.03), Vector3::new(0.05, 0.0, -0.04));
        let target = fk.compose(&exp_se3(&twist)).compose(&Pose::identity());
        let raw = target.inverse().compose(&fk).log().unwrap().to_vector();
        let r = cost_elbow(&chain, &q, &target, &ResidualWeights::default()).unwrap();
        for i in 0..3 {
            assert!((r[i] - raw[i] * 20f64.sqrt()).abs() < 1e-14);
            assert!((r[i + 3] - raw[i + 3] * 5f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn smooth_residual_values() {
        let w = ResidualWeights::default();
        let q = JointConfig::from_element(7, 0.2);
        assert_eq!(cost_smooth(&q, &q, &w).unwrap().amax(), 0.0);
        let mut q2 = q.clone();
        q2[3] += 1.0;
        let r = cost_smooth(&q2, &q, &w).unwrap();
        assert!((r[3] - 0.35f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.iter().filter(|v| **v != 0.0).count(), 1);
    }

    fn fd_residual_jacobian(
        chain: &KinematicChain,
        q: &JointConfig,
        problem: &IkProblem<'_>,
        elbow: bool,
    ) -> DMatrix<f64> {
        let w = ResidualWeights::default();
        let base = stack_residuals(chain, q, problem, &w, elbow).unwrap();
        let mut fd = DMatrix::zeros(base.residual.len(), q.len());
        let h = 1e-6;
        for k in 0..q.len() {
            let mut qp = q.clone();
            qp[k] += h;
            let mut qm = q.clone();
            qm[k] -= h;
            let rp = stack_residuals(chain, &qp, problem, &w, elbow).unwrap().residual;
            let rm = stack_residuals(chain, &qm, problem, &w, elbow).unwrap().residual;
            fd.set_column(k, &((rp - rm) / (2.0 * h)));
        }
        fd
    }

    #[test]
    fn stacked_dimensions_and_jacobian() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let q = random_q(&chain, &mut rng);
            let q_ref = random_q(&chain, &mut rng);
            let q_prev = random_q(&chain, &mut rng);
            let t_ee = chain.fk(&q_ref, Frame::Ee).unwrap();
            let t_el = chain.fk(&q_ref, Frame::Elbow).unwrap();
            let problem = IkProblem {
                target_ee: &t_ee,
                target_elbow: Some(&t_el),
                q_prev: &q_prev,
            };
            for elbow in [false, true] {
                let s = stack_residuals(&chain, &q, &problem, &ResidualWeights::default(), elbow).unwrap();
                assert_eq!(s.residual.len(), if elbow { 19 } else { 13 });
                assert_eq!(s.jacobian.nrows(), s.residual.len());
                let fd = fd_residual_jacobian(&chain, &q, &problem, elbow);
                let rel = (&s.jacobian - &fd).norm() / fd.norm();
                assert!(rel < 1e-4, "rel {rel}");
                assert!((s.cost() - (s.cost_ee + s.cost_elbow + s.cost_smooth)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn already_optimal_target() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_q(&chain, &mut rng);
        let target = chain.fk(&q, Frame::Ee).unwrap();
        let problem = IkProblem {
            target_ee: &target,
            target_elbow: None,
            q_prev: &q,
        };
        let rep = solve(&chain, &q, &problem, &SolverConfig::cold_start(), &ResidualWeights::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iters <= 1);
        assert!((&rep.q_star - &q).amax() < 1e-12);
    }

    #[test]
    fn zero_iterations_returns_initial_guess() {
        let chain = KinematicChain::reference_arm();
        let q = JointConfig::from_element(7, 0.3);
        let target = Pose::from_translation(Vector3::new(0.2, 0.0, -0.3));
        let problem = IkProblem {
            target_ee: &target,
            target_elbow: None,
            q_prev: &q,
        };
        let cfg = SolverConfig {
            max_iters: 0,
            ..SolverConfig::cold_start()
        };
        let rep = solve(&chain, &q, &problem, &cfg, &ResidualWeights::default()).unwrap();
        assert_eq!(rep.q_star, q);
        assert!(!rep.converged);
        assert_eq!(rep.iters, 0);
    }

    #[test]
    fn reaches_random_targets_with_monotone_cost() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let zero = chain.zero_config();
        let mut ok = 0;
        for _ in 0..50 {
            let q_gen = random_q(&chain, &mut rng);
            let target = chain.fk(&q_gen, Frame::Ee).unwrap();
            let problem = IkProblem {
                target_ee: &target,
                target_elbow: None,
                q_prev: &zero,
            };
            let rep = solve(&chain, &zero, &problem, &SolverConfig::cold_start(), &no_smooth()).unwrap();
            assert!(rep.accepted_costs.windows(2).all(|w| w[1] <= w[0]));
            let fk = chain.fk(&rep.q_star, Frame::Ee).unwrap();
            if (fk.translation - target.translation).norm() < 1e-3
                && geodesic_angle(&fk.rotation, &target.rotation) < 1e-2
            {
                ok += 1;
            }
            // final_cost is the squared stacked residual at q_star
            let s = stack_residuals(&chain, &rep.q_star, &problem, &no_smooth(), false).unwrap();
            assert!((s.cost() - rep.final_cost).abs() < 1e-10);
        }
        assert!(ok >= 49, "only {ok}/50 converged");
    }

    #[test]
    fn elbow_term_recovers_generating_elbow() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let zero = chain.zero_config();
        for _ in 0..20 {
            let q_gen = random_q(&chain, &mut rng);
            let t_ee = chain.fk(&q_gen, Frame::Ee).unwrap();
            let t_el = chain.fk(&q_gen, Frame::Elbow).unwrap();
            let problem = IkProblem {
                target_ee: &t_ee,
                target_elbow: Some(&t_el),
                q_prev: &zero,
            };
            let cfg = SolverConfig::cold_start().with_elbow(true);
            let rep = solve(&chain, &zero, &problem, &cfg, &no_smooth()).unwrap();
            let el = chain.fk(&rep.q_star, Frame::Elbow).unwrap();
            assert!((el.translation - t_el.translation).norm() < 5e-3);
        }
    }

    #[test]
    fn baseline_ignores_elbow_target() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q0 = random_q(&chain, &mut rng);
        let q_gen = random_q(&chain, &mut rng);
        let t_ee = chain.fk(&q_gen, Frame::Ee).unwrap();
        let a = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let cfg = SolverConfig::cold_start();
        let w = ResidualWeights::default();
        let r1 = solve(&chain, &q0, &IkProblem { target_ee: &t_ee, target_elbow: None, q_prev: &q0 }, &cfg, &w).unwrap();
        let r2 = solve(&chain, &q0, &IkProblem { target_ee: &t_ee, target_elbow: Some(&a), q_prev: &q0 }, &cfg, &w).unwrap();
        assert_eq!(r1.q_star, r2.q_star);
        assert_eq!(r1.accepted_costs, r2.accepted_costs);
    }

    #[test]
    fn missing_elbow_target_is_an_error() {
        let chain = KinematicChain::reference_arm();
        let q = chain.zero_config();
        let t = chain.fk(&q, Frame::Ee).unwrap();
        let problem = IkProblem { target_ee: &t, target_elbow: None, q_prev: &q };
        let cfg = SolverConfig::cold_start().with_elbow(true);
        assert!(matches!(
            solve(&chain, &q, &problem, &cfg, &ResidualWeights::default()),
            Err(IkError::MissingElbowTarget)
        ));
    }

    #[test]
    fn weight_scaling_keeps_argmin() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let q_gen = random_q(&chain, &mut rng);
        let mut q0 = q_gen.clone();
        for v in q0.iter_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
        chain.clamp(&mut q0);
        let t_ee = chain.fk(&q_gen, Frame::Ee).unwrap();
        let mut q_el = q_gen.clone();
        q_el[2] += 0.3;
        let t_el = chain.fk(&q_el, Frame::Elbow).unwrap();
        let problem = IkProblem { target_ee: &t_ee, target_elbow: Some(&t_el), q_prev: &q0 };
        let cfg = SolverConfig::cold_start().with_elbow(true);
        let w = ResidualWeights::default();
        let a = solve(&chain, &q0, &problem, &cfg, &w).unwrap();
        let b = solve(&chain, &q0, &problem, &cfg, &w.scaled(3.0)).unwrap();
        assert!(a.converged && b.converged);
        assert!((&a.q_star - &b.q_star).amax() < 1e-6);
    }

    #[test]
    fn fixed_lambda_mode_runs() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let q_gen = random_q(&chain, &mut rng);
        let mut q0 = q_gen.clone();
        q0.add_scalar_mut(0.05);
        chain.clamp(&mut q0);
        let t = chain.fk(&q_gen, Frame::Ee).unwrap();
        let problem = IkProblem { target_ee: &t, target_elbow: None, q_prev: &q0 };
        let cfg = SolverConfig::cold_start().with_lambda(LambdaPolicy::Fixed(1e-3));
        let rep = solve(&chain, &q0, &problem, &cfg, &no_smooth()).unwrap();
        let fk = chain.fk(&rep.q_star, Frame::Ee).unwrap();
        assert!((fk.translation - t.translation).norm() < 1e-3);
    }

    #[test]
    fn warm_started_stream_has_no_jumps() {
        let chain = KinematicChain::reference_arm();
        let mut solver = TrajectorySolver::new(
            &chain,
            SolverConfig::cold_start(),
            SolverConfig::warm_start(),
            ResidualWeights::default(),
        );
        let mut q_path = JointConfig::from_vec(vec![-0.6, 0.2, 0.3, 1.2, 0.1, 0.2, -0.1]);
        let mut prev: Option<JointConfig> = None;
        for step in 0..200 {
            let t = step as f64 * 0.02;
            q_path[0] = -0.6 + 0.4 * (0.8 * t).sin();
            q_path[3] = 1.2 + 0.3 * (1.1 * t).cos();
            let target = chain.fk(&q_path, Frame::Ee).unwrap();
            let rep = solver.step(&target, None).unwrap();
            if let Some(p) = &prev {
                assert!((&rep.q_star - p).amax() < 0.2, "jump at step {step}");
            }
            prev = Some(rep.q_star);
        }
    }

    #[test]
    fn near_pi_target_is_perturbed() {
        let chain = KinematicChain::reference_arm();
        let q = chain.zero_config();
        let fk = chain.fk(&q, Frame::Ee).unwrap();
        let flip = UnitQuaternion::from_axis_angle(&Vector3::z(), std::f64::consts::PI);
        let target = Pose::new(fk.rotation.mul(&flip), fk.translation);
        let r = cost_ee(&chain, &q, &target, &ResidualWeights::default()).unwrap();
        assert!(r.iter().all(|v| v.is_finite()));
        assert!((r.fixed_rows::<3>(3).norm() / 40f64.sqrt() - std::f64::consts::PI).abs() < 1e-4);
    }
}
