//! Finite-dimensional constrained eigensolver.
//!
//! Eigenpairs of the discrete problem are critical points of the potential
//! `G` on the unit level set of the energy modular. The first level is the
//! constrained maximum of `G`, computed by projected gradient ascent with
//! deterministic multistart. Higher levels are lower-bound minimax values
//! over spheres of `i`-dimensional subspaces: an inner minimization of `G`
//! on the subspace sphere (sampling plus local descent) alternates with an
//! outer ascent over the subspace frame, and every inner minimizer is
//! polished by a damped Newton iteration on the stationarity system.
//!
//! All randomness flows from a single seeded generator, restarts are
//! reduced in a fixed order, and ties are broken by value, then multiplier,
//! then lexicographic coefficient order, so a given configuration always
//! produces bit-identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::CoefficientVector;
use crate::operator::{dot, residual_from_grads, AssembledProblem};
use crate::{Error, Result};

/// Knobs of the eigensolver; every field maps one-to-one onto a config-file
/// key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stationarity tolerance on the relative weak residual.
    pub kkt_tol: f64,
    /// Iteration budget for each ascent or refinement loop.
    pub max_iter: usize,
    /// Number of seeded starts per level.
    pub restarts: usize,
    /// Seed for every random draw made by the solver.
    pub rng_seed: u64,
    /// Direction samples for the inner sphere minimization; zero means
    /// `64 * level`.
    pub sphere_samples: usize,
    /// Outer frame-ascent rounds per restart for levels above one.
    pub outer_rounds: usize,
    /// Initial step of the projected ascent.
    pub step_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kkt_tol: 1e-8,
            max_iter: 500,
            restarts: 8,
            rng_seed: 42,
            sphere_samples: 0,
            outer_rounds: 8,
            step_init: 0.5,
        }
    }
}

impl SolverConfig {
    fn samples_for(&self, level: usize) -> usize {
        if self.sphere_samples == 0 {
            64 * level.max(1)
        } else {
            self.sphere_samples
        }
    }
}

/// A converged eigenpair of the discrete problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub level: usize,
    pub dim: usize,
    /// Attained potential value, the minimax level estimate.
    pub c_value: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl Eigenpair {
    pub fn coefficient_vector(&self) -> CoefficientVector {
        CoefficientVector(self.coefficients.clone())
    }
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_coeffs(rng: &mut ChaCha8Rng, k: usize) -> CoefficientVector {
    CoefficientVector((0..k).map(|_| gaussian(rng)).collect())
}

fn scaled(c: &CoefficientVector, sigma: f64) -> CoefficientVector {
    CoefficientVector(c.0.iter().map(|&v| sigma * v).collect())
}

fn axpy(c: &CoefficientVector, eta: f64, d: &[f64]) -> CoefficientVector {
    CoefficientVector(c.0.iter().zip(d).map(|(&v, &g)| v + eta * g).collect())
}

/// Monotone bisection for the scaling that puts `sigma * u` on the unit
/// energy manifold; works on precomputed Holder quotients.
fn bisect_sigma(prob: &AssembledProblem, ts: &[f64]) -> Result<f64> {
    let phi = |sigma: f64| prob.modular_of_scaled(ts, sigma);
    if ts.iter().all(|&t| t == 0.0) {
        return Err(Error::input("cannot normalize the zero function"));
    }
    let mut hi = 1.0f64;
    let mut lo = 1.0f64;
    if phi(1.0) < 1.0 {
        while phi(hi) < 1.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::input("normalization bracket overflow"));
            }
        }
        lo = hi / 2.0;
    } else {
        while phi(lo) >= 1.0 {
            lo /= 2.0;
            if lo < 1e-300 {
                return Err(Error::input("normalization bracket underflow"));
            }
        }
        hi = lo * 2.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..300 {
        mid = 0.5 * (lo + hi);
        let v = phi(mid);
        if (v - 1.0).abs() <= 1e-11 {
            return Ok(mid);
        }
        if v < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(mid)
}

/// Newton on the normalization scale with a bisection fallback; cheap path
/// used inside iteration loops.
fn fast_sigma(prob: &AssembledProblem, ts: &[f64], guess: f64) -> Result<f64> {
    let mut sigma = if guess.is_finite() && guess > 0.0 {
        guess
    } else {
        1.0
    };
    for _ in 0..40 {
        let (value, slope) = prob.modular_and_slope(ts, sigma);
        if (value - 1.0).abs() <= 1e-11 {
            return Ok(sigma);
        }
        if !value.is_finite() || !(slope > 0.0) {
            break;
        }
        let next = sigma - (value - 1.0) / slope;
        if !(next > 0.125 * sigma && next < 8.0 * sigma) {
            break;
        }
        sigma = next;
    }
    bisect_sigma(prob, ts)
}

/// Scales a nonzero state onto the unit energy manifold by monotone
/// bisection.
pub fn normalize_to_manifold(
    prob: &AssembledProblem,
    u: &CoefficientVector,
) -> Result<CoefficientVector> {
    if u.0.iter().all(|&c| c == 0.0) {
        return Err(Error::input("cannot normalize the zero function"));
    }
    let ts = prob.ds_values(u);
    let sigma = bisect_sigma(prob, &ts)?;
    Ok(scaled(u, sigma))
}

/// Fixes the eigenfunction sign: nonnegative domain mean, with the first
/// nonzero coefficient deciding exact ties.
fn sign_normalize(prob: &AssembledProblem, c: &mut CoefficientVector) {
    let scale = c.0.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mean = prob.mean(c);
    let flip = if mean < -1e-12 * scale.max(1.0) {
        true
    } else if mean > 1e-12 * scale.max(1.0) {
        false
    } else {
        matches!(c.0.iter().find(|&&v| v != 0.0), Some(&v) if v < 0.0)
    };
    if flip {
        for v in c.0.iter_mut() {
            *v = -*v;
        }
    }
}

struct RunState {
    coeffs: CoefficientVector,
    lambda: f64,
    residual: f64,
    c_value: f64,
    iterations: usize,
    converged: bool,
}

/// Projected gradient ascent of `G` on the unit energy manifold.
fn ascend(
    prob: &AssembledProblem,
    start: &CoefficientVector,
    cfg: &SolverConfig,
) -> Result<RunState> {
    let ts = prob.ds_values(start);
    let sigma = fast_sigma(prob, &ts, 1.0)?;
    let mut c = scaled(start, sigma);
    let mut g_cur = prob.potential_g(&c);
    let mut eta = cfg.step_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for iter in 0..cfg.max_iter {
        iterations = iter;
        let gm = prob.grad_ms(&c);
        let gg = prob.grad_g(&c);
        lambda = dot(&gm, &c.0) / dot(&gg, &c.0);
        residual = residual_from_grads(&gm, &gg, lambda);
        if residual <= cfg.kkt_tol {
            converged = true;
            break;
        }
        let beta = dot(&gg, &gm) / dot(&gm, &gm);
        let d: Vec<f64> = gg.iter().zip(&gm).map(|(&g, &m)| g - beta * m).collect();
        let dnorm = dot(&d, &d).sqrt();
        let cnorm = dot(&c.0, &c.0).sqrt().max(1e-300);
        if dnorm <= 1e-15 * cnorm {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial = axpy(&c, eta / dnorm * cnorm, &d);
            let trial_ts = prob.ds_values(&trial);
            if let Ok(s) = fast_sigma(prob, &trial_ts, 1.0) {
                let candidate = scaled(&trial, s);
                let g_new = prob.potential_g(&candidate);
                if g_new > g_cur {
                    c = candidate;
                    g_cur = g_new;
                    eta = (eta * 1.4).min(64.0);
                    accepted = true;
                    break;
                }
            }
            eta *= 0.5;
            if eta < 1e-13 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(RunState {
        coeffs: c,
        lambda,
        residual,
        c_value: g_cur,
        iterations,
        converged,
    })
}

/// Damped Newton iteration on the stationarity system
/// `(gMs(u) - lambda gG(u), M_s(u) - 1) = 0`, with a projected-gradient
/// fallback when the Newton step stalls.
fn refine(
    prob: &AssembledProblem,
    start: &CoefficientVector,
    cfg: &SolverConfig,
    max_newton: usize,
) -> Result<RunState> {
    let k = prob.dim();
    let ts = prob.ds_values(start);
    let sigma = bisect_sigma(prob, &ts)?;
    let mut c = scaled(start, sigma);
    let mut gm = prob.grad_ms(&c);
    let mut gg = prob.grad_g(&c);
    let mut lambda = dot(&gm, &c.0) / dot(&gg, &c.0);

    let f_norm = |gm: &[f64], gg: &[f64], lambda: f64, modular: f64| -> f64 {
        let mut worst = (modular - 1.0).abs();
        for (&m, &g) in gm.iter().zip(gg) {
            worst = worst.max((m - lambda * g).abs());
        }
        worst
    };

    let mut modular = prob.modular_ms(&c);
    let mut iterations = 0usize;
    for iter in 0..max_newton {
        iterations = iter;
        let residual = residual_from_grads(&gm, &gg, lambda);
        if residual <= cfg.kkt_tol && (modular - 1.0).abs() <= 1e-8 {
            let mut coeffs = c;
            sign_normalize(prob, &mut coeffs);
            let c_value = prob.potential_g(&coeffs);
            return Ok(RunState {
                coeffs,
                lambda,
                residual,
                c_value,
                iterations,
                converged: true,
            });
        }

        // Assemble the (k+1) x (k+1) Jacobian: forward differences for the
        // coefficient block, exact entries for the constraint row and the
        // multiplier column.
        let n = k + 1;
        let mut jac = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for j in 0..k {
            rhs[j] = -(gm[j] - lambda * gg[j]);
        }
        rhs[k] = -(modular - 1.0);
        for col in 0..k {
            let delta = 1e-6 * (1.0 + c.0[col].abs());
            let mut pert = c.clone();
            pert.0[col] += delta;
            let gm_p = prob.grad_ms(&pert);
            let gg_p = prob.grad_g(&pert);
            for row in 0..k {
                jac[row * n + col] =
                    ((gm_p[row] - lambda * gg_p[row]) - (gm[row] - lambda * gg[row])) / delta;
            }
        }
        for row in 0..k {
            jac[row * n + k] = -gg[row];
        }
        // The constraint gradient is the energy gradient itself.
        for col in 0..k {
            jac[k * n + col] = gm[col];
        }
        jac[k * n + k] = 0.0;

        let current_f = f_norm(&gm, &gg, lambda, modular);
        let mut step = rhs.clone();
        let newton_ok = crate::linalg::solve_dense(n, &mut jac, &mut step).is_ok();
        let mut advanced = false;
        if newton_ok {
            let mut t = 1.0;
            for _ in 0..12 {
                let trial = axpy(&c, t, &step[..k]);
                let lambda_trial = lambda + t * step[k];
                let gm_t = prob.grad_ms(&trial);
                let gg_t = prob.grad_g(&trial);
                let modular_t = prob.modular_ms(&trial);
                if f_norm(&gm_t, &gg_t, lambda_trial, modular_t) < (1.0 - 1e-4 * t) * current_f {
                    c = trial;
                    lambda = lambda_trial;
                    gm = gm_t;
                    gg = gg_t;
                    modular = modular_t;
                    advanced = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !advanced {
            // Fallback: multiplier update plus a short projected step on
            // the renormalized state.
            lambda = dot(&gm, &c.0) / dot(&gg, &c.0);
            let dir: Vec<f64> = gm
                .iter()
                .zip(&gg)
                .map(|(&m, &g)| -(m - lambda * g))
                .collect();
            let mut improved = false;
            let mut eta = 0.5;
            for _ in 0..20 {
                let trial_raw = axpy(&c, eta, &dir);
                let trial_ts = prob.ds_values(&trial_raw);
                if let Ok(s) = fast_sigma(prob, &trial_ts, 1.0) {
                    let trial = scaled(&trial_raw, s);
                    let gm_t = prob.grad_ms(&trial);
                    let gg_t = prob.grad_g(&trial);
                    let lam_t = dot(&gm_t, &trial.0) / dot(&gg_t, &trial.0);
                    let modular_t = prob.modular_ms(&trial);
                    if f_norm(&gm_t, &gg_t, lam_t, modular_t) < current_f {
                        c = trial;
                        lambda = lam_t;
                        gm = gm_t;
                        gg = gg_t;
                        modular = modular_t;
                        improved = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    let residual = residual_from_grads(&gm, &gg, lambda);
    let converged = residual <= cfg.kkt_tol && (modular - 1.0).abs() <= 1e-8;
    let mut coeffs = c;
    sign_normalize(prob, &mut coeffs);
    let c_value = prob.potential_g(&coeffs);
    Ok(RunState {
        coeffs,
        lambda,
        residual,
        c_value,
        iterations,
        converged,
    })
}

/// Newton polish of a candidate stationary state; errors when the
/// iteration cannot reach the configured tolerance.
pub fn kkt_refine(
    prob: &AssembledProblem,
    start: &CoefficientVector,
    cfg: &SolverConfig,
) -> Result<Eigenpair> {
    if start.0.iter().all(|&c| c == 0.0) {
        return Err(Error::input("cannot refine the zero function"));
    }
    let state = refine(prob, start, cfg, cfg.max_iter.max(8))?;
    if !state.converged || !(state.lambda > 0.0) {
        return Err(Error::Convergence {
            message: format!(
                "stationarity refinement stalled at residual {:.3e}",
                state.residual
            ),
            best: Some(Box::new(state_to_pair(prob, state, 0))),
        });
    }
    Ok(state_to_pair(prob, state, 0))
}

fn state_to_pair(prob: &AssembledProblem, state: RunState, level: usize) -> Eigenpair {
    Eigenpair {
        lambda: state.lambda,
        coefficients: state.coeffs.0,
        level,
        dim: prob.dim(),
        c_value: state.c_value,
        residual: state.residual,
        iterations: state.iterations,
    }
}

/// Deterministic preference among converged candidates: larger attained
/// value, then smaller multiplier, then lexicographically smaller
/// coefficients.
fn better(a: &Eigenpair, b: &Eigenpair) -> bool {
    if (a.c_value - b.c_value).abs() > 1e-10 {
        return a.c_value > b.c_value;
    }
    if (a.lambda - b.lambda).abs() > 1e-10 {
        return a.lambda < b.lambda;
    }
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// First eigenpair: constrained maximization of the potential over the
/// unit energy manifold with deterministic multistart.
pub fn solve_first(prob: &AssembledProblem, cfg: &SolverConfig) -> Result<Eigenpair> {
    solve_level_with_priors(prob, 1, &[], None, cfg)
}

/// Level-`i` eigenpair via subspace-sphere minimax, solving the lower
/// levels on the way. Levels above the basis dimension have an empty
/// candidate family and are refused.
pub fn solve_level(prob: &AssembledProblem, level: usize, cfg: &SolverConfig) -> Result<Eigenpair> {
    let chain = solve_chain(prob, level, cfg, None)?;
    Ok(chain.into_iter().last().expect("chain is nonempty"))
}

/// Solves levels `1..=max_level` in order, reusing lower levels to seed the
/// subspace frames. `warm` optionally provides one starting state per
/// level, e.g. from continuation.
pub fn solve_chain(
    prob: &AssembledProblem,
    max_level: usize,
    cfg: &SolverConfig,
    warm: Option<&[Eigenpair]>,
) -> Result<Vec<Eigenpair>> {
    if max_level == 0 {
        return Err(Error::input("levels are 1-based"));
    }
    if max_level > prob.dim() {
        return Err(Error::LevelExceedsDimension {
            level: max_level,
            dim: prob.dim(),
        });
    }
    let mut chain: Vec<Eigenpair> = Vec::with_capacity(max_level);
    for i in 1..=max_level {
        let warm_i = warm.and_then(|w| w.get(i - 1));
        let pair = solve_level_with_priors(prob, i, &chain, warm_i, cfg)?;
        chain.push(pair);
    }
    Ok(chain)
}

fn solve_level_with_priors(
    prob: &AssembledProblem,
    level: usize,
    priors: &[Eigenpair],
    warm: Option<&Eigenpair>,
    cfg: &SolverConfig,
) -> Result<Eigenpair> {
    if level == 0 {
        return Err(Error::input("levels are 1-based"));
    }
    if level > prob.dim() {
        return Err(Error::LevelExceedsDimension {
            level,
            dim: prob.dim(),
        });
    }
    if level == 1 {
        solve_first_inner(prob, warm, cfg)
    } else {
        solve_minimax(prob, level, priors, warm, cfg)
    }
}

fn solve_first_inner(
    prob: &AssembledProblem,
    warm: Option<&Eigenpair>,
    cfg: &SolverConfig,
) -> Result<Eigenpair> {
    let k = prob.dim();
    let mut best: Option<Eigenpair> = None;
    let mut best_failed: Option<Eigenpair> = None;

    let mut starts: Vec<CoefficientVector> = Vec::new();
    if let Some(w) = warm {
        starts.push(w.coefficient_vector());
    } else {
        let mut rng = rng_for(cfg.rng_seed, 1);
        for _ in 0..cfg.restarts.max(1) {
            starts.push(random_coeffs(&mut rng, k));
        }
    }

    for start in &starts {
        let run = ascend(prob, start, cfg)?;
        let run_iters = run.iterations;
        let mut state = refine(prob, &run.coeffs, cfg, cfg.max_iter.max(8))?;
        state.iterations += run_iters;
        let converged = state.converged && state.lambda > 0.0;
        let pair = state_to_pair(prob, state, 1);
        if converged {
            if best.as_ref().map_or(true, |b| better(&pair, b)) {
                best = Some(pair);
            }
        } else if best_failed
            .as_ref()
            .map_or(true, |b| pair.residual < b.residual)
        {
            best_failed = Some(pair);
        }
    }

    best.ok_or_else(|| Error::Convergence {
        message: "no restart of the first-level ascent reached the tolerance".into(),
        best: best_failed.map(Box::new),
    })
}

/// Frame of independent directions spanning the candidate subspace, stored
/// column-wise as coefficient vectors.
struct Frame {
    cols: Vec<CoefficientVector>,
}

impl Frame {
    /// Euclidean Gram-Schmidt; degenerate columns are replaced by seeded
    /// draws.
    fn orthonormalize(mut cols: Vec<CoefficientVector>, rng: &mut ChaCha8Rng) -> Frame {
        let k = cols[0].len();
        for idx in 0..cols.len() {
            for _attempt in 0..64 {
                let mut v = cols[idx].0.clone();
                for prev in cols.iter().take(idx) {
                    let coeff = dot(&v, &prev.0);
                    for (x, &p) in v.iter_mut().zip(&prev.0) {
                        *x -= coeff * p;
                    }
                }
                let norm = dot(&v, &v).sqrt();
                if norm > 1e-10 {
                    for x in v.iter_mut() {
                        *x /= norm;
                    }
                    cols[idx] = CoefficientVector(v);
                    break;
                }
                cols[idx] = random_coeffs(rng, k);
            }
        }
        Frame { cols }
    }

    fn combine(&self, z: &[f64]) -> CoefficientVector {
        let k = self.cols[0].len();
        let mut out = vec![0.0; k];
        for (zi, col) in z.iter().zip(&self.cols) {
            for (o, &c) in out.iter_mut().zip(&col.0) {
                *o += zi * c;
            }
        }
        CoefficientVector(out)
    }

    fn dim(&self) -> usize {
        self.cols.len()
    }
}

struct InnerMin {
    value: f64,
    direction: Vec<f64>,
    state: CoefficientVector,
    evals: usize,
}

/// Minimum of `G` over the unit-energy sphere of the frame span: sampled
/// directions (axes plus seeded Gaussians, antipodally reduced since `G`
/// is even) followed by projected descent inside the span.
fn inner_minimum(
    prob: &AssembledProblem,
    frame: &Frame,
    samples: usize,
    descent_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<InnerMin> {
    let i = frame.dim();
    // Per-column Holder quotients let every sample reuse one linear pass.
    let cols_ts: Vec<Vec<f64>> = frame.cols.iter().map(|c| prob.ds_values(c)).collect();
    let nq = cols_ts[0].len();
    let mut evals = 0usize;

    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(samples + i);
    for axis in 0..i {
        let mut e = vec![0.0; i];
        e[axis] = 1.0;
        directions.push(e);
    }
    while directions.len() < samples + i {
        let mut z: Vec<f64> = (0..i).map(|_| gaussian(rng)).collect();
        let n = dot(&z, &z).sqrt();
        if n < 1e-12 {
            continue;
        }
        for v in z.iter_mut() {
            *v /= n;
        }
        // Canonical sign: G is even, so z and -z are the same sample.
        if let Some(&first) = z.iter().find(|&&v| v != 0.0) {
            if first < 0.0 {
                for v in z.iter_mut() {
                    *v = -*v;
                }
            }
        }
        directions.push(z);
    }

    let mut ts = vec![0.0; nq];
    let mut best: Option<(f64, Vec<f64>, f64)> = None; // (G, z, sigma)
    let mut sigma_guess = 1.0;
    for z in &directions {
        for (idx, t) in ts.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (zl, col) in z.iter().zip(&cols_ts) {
                acc += zl * col[idx];
            }
            *t = acc;
        }
        let sigma = fast_sigma(prob, &ts, sigma_guess)?;
        sigma_guess = sigma;
        let state = scaled(&frame.combine(z), sigma);
        let value = prob.potential_g(&state);
        evals += 1;
        if best.as_ref().map_or(true, |(v, _, _)| value < *v) {
            best = Some((value, z.clone(), sigma));
        }
    }
    let (mut value, mut z, mut sigma) = best.expect("at least one direction");

    // Local descent of G on the projective sphere of the span.
    let mut eta = 0.25;
    for _ in 0..descent_iters {
        let state = scaled(&frame.combine(&z), sigma);
        let gm = prob.grad_ms(&state);
        let gg = prob.grad_g(&state);
        let ratio = dot(&gg, &state.0) / dot(&gm, &state.0);
        let w: Vec<f64> = gg.iter().zip(&gm).map(|(&g, &m)| g - ratio * m).collect();
        // Chain rule through the normalization: the in-span gradient.
        let grad_z: Vec<f64> = frame
            .cols
            .iter()
            .map(|col| sigma * dot(&w, &col.0))
            .collect();
        let gnorm = dot(&grad_z, &grad_z).sqrt();
        if gnorm <= 1e-12 * (1.0 + value.abs()) {
            break;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut z_try: Vec<f64> = z
                .iter()
                .zip(&grad_z)
                .map(|(&zz, &g)| zz - eta * g / gnorm)
                .collect();
            let n = dot(&z_try, &z_try).sqrt();
            if n < 1e-12 {
                eta *= 0.5;
                continue;
            }
            for v in z_try.iter_mut() {
                *v /= n;
            }
            for (idx, t) in ts.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (zl, col) in z_try.iter().zip(&cols_ts) {
                    acc += zl * col[idx];
                }
                *t = acc;
            }
            let sig_try = fast_sigma(prob, &ts, sigma)?;
            let state_try = scaled(&frame.combine(&z_try), sig_try);
            let val_try = prob.potential_g(&state_try);
            evals += 1;
            if val_try < value - 1e-15 {
                z = z_try;
                sigma = sig_try;
                value = val_try;
                eta = (eta * 1.3).min(2.0);
                improved = true;
                break;
            }
            eta *= 0.5;
            if eta < 1e-12 {
                break;
            }
        }
        if !improved {
            break;
        }
    }

    let state = scaled(&frame.combine(&z), sigma);
    Ok(InnerMin {
        value,
        direction: z,
        state,
        evals,
    })
}

/// Pool of refined stationary states discovered along the way; frames
/// assembled from the pool accelerate the quadratic case, where the
/// optimal subspace is spanned by the lowest eigenvectors.
struct Pool {
    entries: Vec<Eigenpair>,
}

impl Pool {
    fn add(&mut self, pair: Eigenpair) {
        let duplicate = self.entries.iter().any(|e| {
            let na = dot(&e.coefficients, &e.coefficients).sqrt();
            let nb = dot(&pair.coefficients, &pair.coefficients).sqrt();
            let cos = dot(&e.coefficients, &pair.coefficients) / (na * nb);
            cos.abs() > 1.0 - 1e-8 || (e.lambda - pair.lambda).abs() <= 1e-9 * (1.0 + e.lambda)
        });
        if !duplicate {
            self.entries.push(pair);
            self.entries.sort_by(|a, b| {
                a.lambda
                    .partial_cmp(&b.lambda)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
    }

    fn bottom_frame(&self, i: usize) -> Option<Vec<CoefficientVector>> {
        if self.entries.len() < i {
            return None;
        }
        Some(
            self.entries[..i]
                .iter()
                .map(|e| e.coefficient_vector())
                .collect(),
        )
    }
}

fn solve_minimax(
    prob: &AssembledProblem,
    level: usize,
    priors: &[Eigenpair],
    warm: Option<&Eigenpair>,
    cfg: &SolverConfig,
) -> Result<Eigenpair> {
    let k = prob.dim();
    let samples = cfg.samples_for(level);
    let cheap_samples = (samples / 4).max(8);
    let descent_iters = 60.min(cfg.max_iter.max(1));
    let cheap_descent = 15;
    let mut total_evals = 0usize;
    let mut pool = Pool {
        entries: priors.to_vec(),
    };

    // Initial frames: one informed by the lower levels (and the warm
    // start, when given), the rest seeded.
    let mut frames: Vec<Vec<CoefficientVector>> = Vec::new();
    {
        let mut rng = rng_for(cfg.rng_seed, 1000 + level as u64);
        let mut informed: Vec<CoefficientVector> = priors
            .iter()
            .take(level - 1)
            .map(|p| p.coefficient_vector())
            .collect();
        if let Some(w) = warm {
            informed.push(w.coefficient_vector());
        }
        while informed.len() < level {
            informed.push(random_coeffs(&mut rng, k));
        }
        informed.truncate(level);
        frames.push(informed);
        let restarts = if warm.is_some() {
            1
        } else {
            cfg.restarts.clamp(1, 8)
        };
        for _ in 1..restarts {
            frames.push((0..level).map(|_| random_coeffs(&mut rng, k)).collect());
        }
    }

    let mut best_inner: Option<(f64, CoefficientVector)> = None;

    for (fi, cols) in frames.into_iter().enumerate() {
        let mut rng = rng_for(cfg.rng_seed, 2000 + (level * 100 + fi) as u64);
        let mut frame = Frame::orthonormalize(cols, &mut rng);
        let mut value = f64::NEG_INFINITY;
        let mut stall = 0usize;
        for _round in 0..cfg.outer_rounds.max(1) {
            let inner = inner_minimum(prob, &frame, samples, descent_iters, &mut rng)?;
            total_evals += inner.evals;
            if inner.value > value + 1e-13 {
                stall = 0;
            } else {
                stall += 1;
            }
            value = inner.value;
            if best_inner.as_ref().map_or(true, |(v, _)| inner.value > *v) {
                best_inner = Some((inner.value, inner.state.clone()));
            }
            // Polish the inner minimizer toward a stationary state and
            // feed the pool.
            if let Ok(state) = refine(prob, &inner.state, cfg, 25) {
                if state.converged && state.lambda > 0.0 {
                    pool.add(state_to_pair(prob, state, level));
                }
            }
            if stall >= 2 {
                break;
            }

            // Outer ascent: push the worst point uphill (rank-one frame
            // update) and compare with the pool frame under a cheap inner
            // evaluation.
            let state = &inner.state;
            let gm = prob.grad_ms(state);
            let gg = prob.grad_g(state);
            let ratio = dot(&gg, &state.0) / dot(&gm, &state.0);
            let w: Vec<f64> = gg.iter().zip(&gm).map(|(&g, &m)| g - ratio * m).collect();

            let mut candidates: Vec<Frame> = Vec::new();
            for &eta in &[0.5, 0.125] {
                let cols: Vec<CoefficientVector> = frame
                    .cols
                    .iter()
                    .enumerate()
                    .map(|(ci, col)| {
                        CoefficientVector(
                            col.0
                                .iter()
                                .zip(&w)
                                .map(|(&cv, &wv)| cv + eta * inner.direction[ci] * wv)
                                .collect(),
                        )
                    })
                    .collect();
                candidates.push(Frame::orthonormalize(cols, &mut rng));
            }
            if let Some(cols) = pool.bottom_frame(level) {
                candidates.push(Frame::orthonormalize(cols, &mut rng));
            }

            let mut best_cand: Option<(f64, Frame)> = None;
            for cand in candidates {
                let probe = inner_minimum(prob, &cand, cheap_samples, cheap_descent, &mut rng)?;
                total_evals += probe.evals;
                if best_cand.as_ref().map_or(true, |(v, _)| probe.value > *v) {
                    best_cand = Some((probe.value, cand));
                }
            }
            if let Some((cand_value, cand)) = best_cand {
                let here = inner_minimum(prob, &frame, cheap_samples, cheap_descent, &mut rng)?;
                total_evals += here.evals;
                if cand_value > here.value {
                    frame = cand;
                }
            }
        }
    }

    let (value, state) = best_inner.ok_or_else(|| Error::Convergence {
        message: format!("minimax search produced no candidate at level {level}"),
        best: None,
    })?;
    let mut final_state = refine(prob, &state, cfg, cfg.max_iter.max(8))?;
    final_state.iterations = final_state.iterations.saturating_add(total_evals);
    if !final_state.converged || !(final_state.lambda > 0.0) {
        return Err(Error::Convergence {
            message: format!(
                "level-{level} refinement stalled at residual {:.3e} (inner value {value:.6e})",
                final_state.residual
            ),
            best: Some(Box::new(state_to_pair(prob, final_state, level))),
        });
    }
    Ok(state_to_pair(prob, final_state, level))
}

/// Continuation of level `i` across a family of nested discretizations.
/// Each solve is warm-started from the prolongation of the previous chain;
/// per-dimension failures are recorded and the sweep continues cold.
pub fn continuation(
    problems: &[AssembledProblem],
    level: usize,
    cfg: &SolverConfig,
) -> Result<Vec<Result<Eigenpair>>> {
    if problems.is_empty() {
        return Err(Error::input("continuation needs at least one problem"));
    }
    for pair in problems.windows(2) {
        let same = pair[0].basis().k() == pair[1].basis().k()
            && pair[0].basis().mesh().a() == pair[1].basis().mesh().a()
            && pair[0].basis().mesh().b() == pair[1].basis().mesh().b();
        if !same && !pair[0].basis().is_refined_by(pair[1].basis()) {
            return Err(Error::input(
                "continuation requires dyadically nested discretizations",
            ));
        }
    }
    let mut results: Vec<Result<Eigenpair>> = Vec::with_capacity(problems.len());
    let mut chains: Vec<Option<Vec<Eigenpair>>> = Vec::with_capacity(problems.len());
    for (pi, prob) in problems.iter().enumerate() {
        let warm: Option<Vec<Eigenpair>> = chains
            .iter()
            .enumerate()
            .rev()
            .find_map(|(idx, c)| c.as_ref().map(|chain| (idx, chain)))
            .and_then(|(idx, chain)| {
                let prev_basis = problems[idx].basis();
                let mut lifted = Vec::with_capacity(chain.len());
                for pair in chain {
                    let coeffs = if prev_basis.k() == prob.basis().k() {
                        pair.coefficient_vector()
                    } else {
                        match prev_basis.prolong(&pair.coefficient_vector(), prob.basis()) {
                            Ok(c) => c,
                            Err(_) => return None,
                        }
                    };
                    let mut warm_pair = pair.clone();
                    warm_pair.coefficients = coeffs.0;
                    warm_pair.dim = prob.dim();
                    lifted.push(warm_pair);
                }
                Some(lifted)
            });
        let _ = pi;
        match solve_chain(prob, level, cfg, warm.as_deref()) {
            Ok(chain) => {
                results.push(Ok(chain.last().expect("nonempty chain").clone()));
                chains.push(Some(chain));
            }
            Err(e) => {
                results.push(Err(e));
                chains.push(None);
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, build_pair_quadrature};
    use crate::young::{GrowthFunction, YoungFunction};

    fn problem(k: usize, s: f64, p: f64) -> AssembledProblem {
        let basis = build_mesh(-1.0, 1.0, k, s).unwrap();
        let quad = build_pair_quadrature(&basis, 2.0, 40.0, 4).unwrap();
        let young = YoungFunction::power(p).unwrap();
        let growth = GrowthFunction::matched(young.clone());
        AssembledProblem::new(basis, quad, young, growth).unwrap()
    }

    fn exp_problem(k: usize, s: f64) -> AssembledProblem {
        let basis = build_mesh(-1.0, 1.0, k, s).unwrap();
        let quad = build_pair_quadrature(&basis, 2.0, 40.0, 4).unwrap();
        let young = YoungFunction::exp_minus_linear();
        let growth = GrowthFunction::matched(young.clone());
        AssembledProblem::new(basis, quad, young, growth).unwrap()
    }

    fn light_cfg() -> SolverConfig {
        SolverConfig {
            restarts: 3,
            outer_rounds: 5,
            sphere_samples: 32,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn normalize_reaches_unit_modular() {
        let prob = problem(7, 0.5, 2.0);
        let u = CoefficientVector(vec![0.4, -0.2, 0.9, 0.1, -0.7, 0.3, 0.5]);
        let n = normalize_to_manifold(&prob, &u).unwrap();
        assert!((prob.modular_ms(&n) - 1.0).abs() <= 1e-10);
        // Quadratic case: the closed-form scale matches the bisection.
        let sigma_closed = prob.modular_ms(&u).powf(-0.5);
        let sigma = n.0[0] / u.0[0];
        assert!((sigma - sigma_closed).abs() <= 1e-9 * sigma_closed);
        // Fixed point.
        let again = normalize_to_manifold(&prob, &n).unwrap();
        for (a, b) in again.0.iter().zip(&n.0) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
        assert!(normalize_to_manifold(&prob, &CoefficientVector::zeros(7)).is_err());
    }

    #[test]
    fn normalize_exp_case() {
        let prob = exp_problem(7, 0.5);
        let u = CoefficientVector(vec![1.3, -0.2, 0.9, 2.1, -0.7, 0.3, 0.5]);
        let n = normalize_to_manifold(&prob, &u).unwrap();
        assert!((prob.modular_ms(&n) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn first_level_on_one_dimension() {
        let prob = problem(1, 0.5, 2.0);
        let cfg = SolverConfig::default();
        let pair = solve_first(&prob, &cfg).unwrap();
        assert!(pair.lambda > 0.0);
        assert!(pair.residual <= cfg.kkt_tol);
        let u = pair.coefficient_vector();
        assert!((prob.modular_ms(&u) - 1.0).abs() <= 1e-8);
        // The multiplier is the Rayleigh ratio of the single hat.
        let gm = prob.grad_ms(&u);
        let gg = prob.grad_g(&u);
        let ratio = dot(&gm, &u.0) / dot(&gg, &u.0);
        assert!((pair.lambda - ratio).abs() <= 1e-10 * ratio);
    }

    #[test]
    fn first_level_deterministic() {
        let prob = problem(9, 0.5, 2.0);
        let cfg = light_cfg();
        let a = solve_first(&prob, &cfg).unwrap();
        let b = solve_first(&prob, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.c_value > 0.0);
        assert!(prob.mean(&a.coefficient_vector()) >= 0.0);
    }

    #[test]
    fn level_error_beyond_dimension() {
        let prob = problem(3, 0.5, 2.0);
        let cfg = light_cfg();
        match solve_level(&prob, 5, &cfg) {
            Err(Error::LevelExceedsDimension { level, dim }) => {
                assert_eq!(level, 5);
                assert_eq!(dim, 3);
            }
            other => panic!("expected a level error, got {other:?}"),
        }
        assert!(solve_level(&prob, 0, &cfg).is_err());
    }

    #[test]
    fn lemma_conclusions_hold_for_exp_young() {
        let prob = exp_problem(9, 0.5);
        let cfg = light_cfg();
        let chain = solve_chain(&prob, 2, &cfg, None).unwrap();
        for (i, pair) in chain.iter().enumerate() {
            let u = pair.coefficient_vector();
            assert!((prob.modular_ms(&u) - 1.0).abs() <= 1e-8, "level {}", i + 1);
            assert!(prob.weak_residual(pair.lambda, &u) <= cfg.kkt_tol);
            assert_eq!(pair.c_value, prob.potential_g(&u));
            assert!(pair.lambda > 0.0);
        }
        assert!(chain[1].c_value <= chain[0].c_value + 1e-6);
    }

    #[test]
    fn continuation_warm_start_is_cheap() {
        let cfg = light_cfg();
        let p7 = problem(7, 0.5, 2.0);
        let chain = solve_chain(&p7, 1, &cfg, None).unwrap();
        // Re-solving at the same dimension from the converged state
        // returns almost immediately.
        let warm = solve_chain(&p7, 1, &cfg, Some(&chain)).unwrap();
        assert!(warm[0].iterations <= 1, "took {}", warm[0].iterations);
        assert!((warm[0].lambda - chain[0].lambda).abs() <= 1e-9 * chain[0].lambda);
    }

    #[test]
    fn continuation_rejects_unrelated_meshes() {
        let cfg = light_cfg();
        let p7 = problem(7, 0.5, 2.0);
        let p12 = problem(12, 0.5, 2.0);
        assert!(continuation(&[p7, p12], 1, &cfg).is_err());
    }
}
