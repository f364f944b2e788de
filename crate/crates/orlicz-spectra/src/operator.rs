//! Assembly of the energy modular, the potential, their Galerkin gradients
//! and the weak-form residual of the eigenvalue equation.
//!
//! The weak pairing of the nonlocal operator is
//! `<A(u), v> = sum over pair nodes of w * m_signed(D^s u) * D^s v`,
//! which is simultaneously the gradient of the energy modular
//! `M_s(u) = sum w * M(D^s u)`. Holder quotients of the basis functions are
//! cached per quadrature node in sparse form (at most four hats touch a
//! node pair), so every evaluation is a single pass over the nodes in a
//! fixed order.

use crate::mesh::{gauss_legendre, Basis, CoefficientVector, PairQuadrature};
use crate::young::{GrowthFunction, YoungFunction};
use crate::{Error, Result};

/// Static data of a discretized eigenvalue problem.
#[derive(Debug, Clone)]
pub struct AssembledProblem {
    basis: Basis,
    quad: PairQuadrature,
    young: YoungFunction,
    growth: GrowthFunction,
    /// CSR over pair nodes: for node `n`, entries in
    /// `pair_entries[pair_offsets[n]..pair_offsets[n+1]]` hold
    /// `(j, D^s phi_j)` for the hats with a nonzero quotient there.
    pair_offsets: Vec<u32>,
    pair_entries: Vec<(u32, f64)>,
    /// Reference Gauss rule on `[0, 1]` for the element-wise potential
    /// integrals; weights sum to one.
    dom_rule: Vec<(f64, f64)>,
}

/// Hat indices whose support contains `x`, pushed into `out`.
fn hats_at(basis: &Basis, x: f64, out: &mut Vec<u32>) {
    let mesh = basis.mesh();
    let (a, b) = (mesh.a(), mesh.b());
    if x <= a || x >= b {
        return;
    }
    let h = basis.h();
    let pos = (x - a) / h;
    let base = pos.floor() as i64;
    for cand in [base - 1, base] {
        if cand >= 0 && (cand as usize) < basis.k() {
            let j = cand as u32;
            if !out.contains(&j) {
                out.push(j);
            }
        }
    }
}

impl AssembledProblem {
    pub fn new(
        basis: Basis,
        quad: PairQuadrature,
        young: YoungFunction,
        growth: GrowthFunction,
    ) -> Result<Self> {
        Self::with_domain_order(basis, quad, young, growth, 6)
    }

    /// Variant exposing the Gauss order of the 1D potential rule.
    pub fn with_domain_order(
        basis: Basis,
        quad: PairQuadrature,
        young: YoungFunction,
        growth: GrowthFunction,
        domain_order: usize,
    ) -> Result<Self> {
        let s = basis.mesh().s();
        let n = quad.len();
        let mut pair_offsets = Vec::with_capacity(n + 1);
        let mut pair_entries = Vec::new();
        pair_offsets.push(0u32);
        let mut scratch: Vec<u32> = Vec::with_capacity(4);
        for i in 0..n {
            let (x, y) = (quad.xs()[i], quad.ys()[i]);
            let kernel_scale = (x - y).abs().powf(-s);
            scratch.clear();
            hats_at(&basis, x, &mut scratch);
            hats_at(&basis, y, &mut scratch);
            scratch.sort_unstable();
            for &j in scratch.iter() {
                let d = (basis.hat(j as usize, x) - basis.hat(j as usize, y)) * kernel_scale;
                if !d.is_finite() {
                    return Err(Error::input(
                        "holder quotient cache produced a non-finite value",
                    ));
                }
                if d != 0.0 {
                    pair_entries.push((j, d));
                }
            }
            pair_offsets.push(pair_entries.len() as u32);
        }

        let rule = gauss_legendre(domain_order.clamp(1, 32));
        let dom_rule = rule
            .0
            .iter()
            .zip(&rule.1)
            .map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();

        Ok(AssembledProblem {
            basis,
            quad,
            young,
            growth,
            pair_offsets,
            pair_entries,
            dom_rule,
        })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn quadrature(&self) -> &PairQuadrature {
        &self.quad
    }

    pub fn young(&self) -> &YoungFunction {
        &self.young
    }

    pub fn growth(&self) -> &GrowthFunction {
        &self.growth
    }

    pub fn dim(&self) -> usize {
        self.basis.k()
    }

    fn assert_sized(&self, u: &CoefficientVector) {
        assert_eq!(
            u.len(),
            self.dim(),
            "coefficient vector does not match the basis dimension"
        );
    }

    /// Holder quotients `D^s u` at every pair node.
    pub(crate) fn ds_values(&self, u: &CoefficientVector) -> Vec<f64> {
        self.assert_sized(u);
        let n = self.quad.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let lo = self.pair_offsets[i] as usize;
            let hi = self.pair_offsets[i + 1] as usize;
            let mut t = 0.0;
            for &(j, d) in &self.pair_entries[lo..hi] {
                t += u.0[j as usize] * d;
            }
            out[i] = t;
        }
        out
    }

    /// `sum w M(sigma * t)` over precomputed quotients.
    pub(crate) fn modular_of_scaled(&self, ts: &[f64], sigma: f64) -> f64 {
        let mut acc = 0.0;
        for (&w, &t) in self.quad.weights().iter().zip(ts) {
            acc += w * self.young.primitive(sigma * t);
            if !acc.is_finite() {
                return f64::INFINITY;
            }
        }
        acc
    }

    /// Returns `(sum w M(sigma t), d/dsigma of the same)`.
    pub(crate) fn modular_and_slope(&self, ts: &[f64], sigma: f64) -> (f64, f64) {
        let mut acc = 0.0;
        let mut slope = 0.0;
        for (&w, &t) in self.quad.weights().iter().zip(ts) {
            let st = sigma * t;
            acc += w * self.young.primitive(st);
            slope += w * self.young.density_signed(st) * t;
            if !acc.is_finite() || !slope.is_finite() {
                return (f64::INFINITY, f64::INFINITY);
            }
        }
        (acc, slope)
    }

    /// Energy modular `M_s(u) = sum w M(D^s u)`.
    pub fn modular_ms(&self, u: &CoefficientVector) -> f64 {
        let ts = self.ds_values(u);
        self.modular_of_scaled(&ts, 1.0)
    }

    /// Galerkin gradient of the energy modular; component `j` is the weak
    /// pairing of the operator with `phi_j`.
    pub fn grad_ms(&self, u: &CoefficientVector) -> Vec<f64> {
        let ts = self.ds_values(u);
        self.grad_ms_from_ds(&ts)
    }

    pub(crate) fn grad_ms_from_ds(&self, ts: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for i in 0..self.quad.len() {
            let z = self.quad.weights()[i] * self.young.density_signed(ts[i]);
            if z == 0.0 {
                continue;
            }
            let lo = self.pair_offsets[i] as usize;
            let hi = self.pair_offsets[i + 1] as usize;
            for &(j, d) in &self.pair_entries[lo..hi] {
                out[j as usize] += z * d;
            }
        }
        out
    }

    /// Walks the mesh elements; `u` is affine on each with the endpoint
    /// values handed to `body(element length, v0, v1, left index, right
    /// index)`. Boundary endpoints carry value zero and no index.
    fn for_each_element(
        &self,
        u: &CoefficientVector,
        mut body: impl FnMut(f64, f64, f64, Option<usize>, Option<usize>),
    ) {
        self.assert_sized(u);
        let k = self.dim();
        let h = self.basis.h();
        for e in 0..=k {
            let left = if e == 0 { None } else { Some(e - 1) };
            let right = if e == k { None } else { Some(e) };
            let v0 = left.map_or(0.0, |j| u.0[j]);
            let v1 = right.map_or(0.0, |j| u.0[j]);
            body(h, v0, v1, left, right);
        }
    }

    /// Panels of `[0, 1]` on which the affine value `v0 + (v1 - v0) t`
    /// keeps one sign. Around a zero crossing the panels shrink
    /// geometrically toward the root, so fractional-power growth densities
    /// stay resolvable by a fixed Gauss rule.
    fn sign_panels(v0: f64, v1: f64, out: &mut Vec<(f64, f64)>) {
        out.clear();
        if v0 * v1 >= 0.0 {
            out.push((0.0, 1.0));
            return;
        }
        let t = v0 / (v0 - v1);
        let grade_toward = |root: f64, far: f64, out: &mut Vec<(f64, f64)>| {
            let mut d = (far - root).abs();
            let mut edges = vec![far];
            for _ in 0..14 {
                d /= 8.0;
                edges.push(root + d.copysign(far - root));
            }
            edges.push(root);
            for pair in edges.windows(2) {
                let (lo, hi) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                if hi > lo {
                    out.push((lo, hi));
                }
            }
        };
        grade_toward(t, 0.0, out);
        grade_toward(t, 1.0, out);
    }

    /// Potential `G(u) = integral over the domain of G(u(x))`, evaluated
    /// element by element with a Gauss rule per sign panel.
    pub fn potential_g(&self, u: &CoefficientVector) -> f64 {
        let mut acc = 0.0;
        let mut panels = Vec::new();
        self.for_each_element(u, |h, v0, v1, _, _| {
            Self::sign_panels(v0, v1, &mut panels);
            for &(lo, hi) in &panels {
                for &(t, w) in &self.dom_rule {
                    let tt = lo + (hi - lo) * t;
                    let val = v0 + (v1 - v0) * tt;
                    acc += w * (hi - lo) * h * self.growth.primitive(val);
                }
            }
        });
        acc
    }

    /// Galerkin gradient of the potential.
    pub fn grad_g(&self, u: &CoefficientVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut panels = Vec::new();
        self.for_each_element(u, |h, v0, v1, left, right| {
            Self::sign_panels(v0, v1, &mut panels);
            for &(lo, hi) in &panels {
                for &(t, w) in &self.dom_rule {
                    let tt = lo + (hi - lo) * t;
                    let val = v0 + (v1 - v0) * tt;
                    let z = w * (hi - lo) * h * self.growth.g(val);
                    if let Some(j) = left {
                        out[j] += z * (1.0 - tt);
                    }
                    if let Some(j) = right {
                        out[j] += z * tt;
                    }
                }
            }
        });
        out
    }

    /// Relative stationarity defect
    /// `max_j |gMs_j - lambda gG_j| / (1 + |gMs_j|)`.
    pub fn weak_residual(&self, lambda: f64, u: &CoefficientVector) -> f64 {
        let gm = self.grad_ms(u);
        let gg = self.grad_g(u);
        residual_from_grads(&gm, &gg, lambda)
    }

    /// Monotonicity pairing `(A(u) - A(v)) . (u - v) >= 0`.
    pub fn monotonicity_gap(&self, u: &CoefficientVector, v: &CoefficientVector) -> f64 {
        self.assert_sized(u);
        self.assert_sized(v);
        let gu = self.grad_ms(u);
        let gv = self.grad_ms(v);
        let mut acc = 0.0;
        for j in 0..self.dim() {
            acc += (gu[j] - gv[j]) * (u.0[j] - v.0[j]);
        }
        acc
    }

    /// Mean of `u` over the domain (exact trapezoid, `u` is piecewise
    /// linear); fixes the sign convention of eigenfunctions.
    pub(crate) fn mean(&self, u: &CoefficientVector) -> f64 {
        let mut acc = 0.0;
        self.for_each_element(u, |h, v0, v1, _, _| {
            acc += 0.5 * h * (v0 + v1);
        });
        acc
    }
}

/// Shared residual formula so refinement loops can reuse computed
/// gradients.
pub(crate) fn residual_from_grads(gm: &[f64], gg: &[f64], lambda: f64) -> f64 {
    let mut worst = 0.0f64;
    for (&m, &g) in gm.iter().zip(gg) {
        let r = (m - lambda * g).abs() / (1.0 + m.abs());
        worst = worst.max(r);
    }
    worst
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, build_pair_quadrature};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

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

    fn random_coeffs(k: usize, rng: &mut ChaCha8Rng, scale: f64) -> CoefficientVector {
        CoefficientVector((0..k).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    /// Adaptive Simpson with interior split points, used by the oracle for
    /// the single-hat energy.
    fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth > 44 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, tol / 2.0, depth + 1)
                    + rec(f, m, b, right, tol / 2.0, depth + 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 0)
    }

    fn adaptive_split(f: &dyn Fn(f64) -> f64, points: &[f64], tol: f64) -> f64 {
        let mut acc = 0.0;
        for w in points.windows(2) {
            if w[1] > w[0] + 1e-14 {
                acc += adaptive(f, w[0], w[1], tol);
            }
        }
        acc
    }

    #[test]
    fn modular_vanishes_only_at_zero() {
        let prob = problem(5, 0.5, 2.0);
        assert_eq!(prob.modular_ms(&CoefficientVector::zeros(5)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u = random_coeffs(5, &mut rng, 1.0);
            if u.0.iter().any(|&c| c != 0.0) {
                assert!(prob.modular_ms(&u) > 0.0);
            }
        }
    }

    #[test]
    fn single_hat_energy_matches_adaptive_oracle() {
        // k = 1, p = 2, s = 1/2: the energy of the single hat, truncated at
        // the quadrature's exterior radius, via iterated adaptive Simpson.
        let prob = problem(1, 0.5, 2.0);
        let u = CoefficientVector(vec![1.0]);
        let computed = prob.modular_ms(&u);

        let basis = prob.basis().clone();
        let uu = u.clone();
        let hat = move |x: f64| basis.eval(&uu, x);
        let s = 0.5f64;
        let m_of = |t: f64| 0.5 * t * t;
        let radius = prob.quadrature().exterior_radius();

        // Interior part over (-1,1)^2.
        let hat_in = hat.clone();
        let inner = move |x: f64| {
            let hx = hat_in(x);
            let hat_y = hat_in.clone();
            let f = move |y: f64| {
                let r = (x - y).abs();
                if r < 1e-13 {
                    return 0.0;
                }
                m_of((hx - hat_y(y)) / r.powf(s)) / r
            };
            let mut pts = vec![-1.0, 0.0, x, 1.0];
            pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
            adaptive_split(&f, &pts, 1e-10)
        };
        let interior = adaptive_split(&|x| inner(x), &[-1.0, 0.0, 1.0], 1e-9);

        // One exterior strip {x in domain, y in (1, 1 + R)}; the four
        // strips are equal by symmetry of the hat.
        let hat_st = hat.clone();
        let strip_inner = move |x: f64| {
            let hx = hat_st(x);
            if hx == 0.0 {
                return 0.0;
            }
            let f = move |y: f64| {
                let r = y - x;
                m_of(hx / r.powf(s)) / r
            };
            adaptive(&f, 1.0, 1.0 + radius, 1e-11)
        };
        let strip = adaptive_split(&|x| strip_inner(x), &[-1.0, 0.0, 1.0], 1e-9);

        let oracle = interior + 4.0 * strip;
        assert!(
            (computed - oracle).abs() <= 1e-5 * oracle,
            "energy {computed} vs oracle {oracle}"
        );
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let eps = 1e-5;
        for prob in [
            problem(7, 0.5, 2.0),
            problem(7, 0.3, 1.5),
            problem(7, 0.7, 3.0),
            exp_problem(7, 0.5),
        ] {
            for _ in 0..5 {
                let u = random_coeffs(7, &mut rng, 0.6);
                let v = random_coeffs(7, &mut rng, 0.6);
                let push = |t: f64| {
                    CoefficientVector(
                        u.0.iter().zip(&v.0).map(|(&a, &b)| a + t * b).collect(),
                    )
                };
                let fd_ms =
                    (prob.modular_ms(&push(eps)) - prob.modular_ms(&push(-eps))) / (2.0 * eps);
                let an_ms = dot(&prob.grad_ms(&u), &v.0);
                assert!(
                    (fd_ms - an_ms).abs() <= 1e-5 * (1.0 + an_ms.abs()),
                    "grad_ms FD mismatch: {fd_ms} vs {an_ms}"
                );
                let fd_g =
                    (prob.potential_g(&push(eps)) - prob.potential_g(&push(-eps))) / (2.0 * eps);
                let an_g = dot(&prob.grad_g(&u), &v.0);
                assert!(
                    (fd_g - an_g).abs() <= 1e-5 * (1.0 + an_g.abs()),
                    "grad_g FD mismatch: {fd_g} vs {an_g}"
                );
            }
        }
    }

    #[test]
    fn zero_state_has_zero_gradients() {
        let prob = problem(5, 0.5, 2.0);
        let zero = CoefficientVector::zeros(5);
        assert!(prob.grad_ms(&zero).iter().all(|&g| g == 0.0));
        assert!(prob.grad_g(&zero).iter().all(|&g| g == 0.0));
        assert_eq!(prob.weak_residual(3.0, &zero), 0.0);
    }

    #[test]
    fn convexity_and_positivity_pairings() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let prob = problem(7, 0.5, 2.0);
        let prob_exp = exp_problem(7, 0.5);
        for _ in 0..100 {
            let u = random_coeffs(7, &mut rng, 1.0);
            for p in [&prob, &prob_exp] {
                let pair = dot(&p.grad_ms(&u), &u.0);
                assert!(pair >= p.modular_ms(&u) - 1e-12);
                if u.0.iter().any(|&c| c != 0.0) {
                    assert!(dot(&p.grad_g(&u), &u.0) > 0.0);
                }
            }
        }
    }

    #[test]
    fn potential_of_single_hat() {
        // g(t) = t so G = t^2/2; the hat over (-1, 1) integrates to 2/3.
        let prob = problem(1, 0.5, 2.0);
        let u = CoefficientVector(vec![1.0]);
        let val = prob.potential_g(&u);
        assert!((val - 1.0 / 3.0).abs() <= 1e-12, "got {val}");
    }

    #[test]
    fn potential_stable_under_order_refinement() {
        let basis = build_mesh(-1.0, 1.0, 7, 0.5).unwrap();
        let quad = build_pair_quadrature(&basis, 2.0, 40.0, 3).unwrap();
        let young = YoungFunction::exp_minus_linear();
        let growth = GrowthFunction::matched(young.clone());
        let coarse = AssembledProblem::with_domain_order(
            basis.clone(),
            quad.clone(),
            young.clone(),
            growth.clone(),
            6,
        )
        .unwrap();
        let fine =
            AssembledProblem::with_domain_order(basis, quad, young, growth, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_coeffs(7, &mut rng, 1.5);
            let a = coarse.potential_g(&u);
            let b = fine.potential_g(&u);
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn functionals_are_even_and_gradients_odd() {
        let prob = exp_problem(5, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let u = random_coeffs(5, &mut rng, 0.8);
            let neg = CoefficientVector(u.0.iter().map(|&c| -c).collect());
            assert_eq!(prob.modular_ms(&u), prob.modular_ms(&neg));
            assert_eq!(prob.potential_g(&u), prob.potential_g(&neg));
            let gm = prob.grad_ms(&u);
            let gm_neg = prob.grad_ms(&neg);
            let gg = prob.grad_g(&u);
            let gg_neg = prob.grad_g(&neg);
            for j in 0..5 {
                assert_eq!(gm[j], -gm_neg[j]);
                assert_eq!(gg[j], -gg_neg[j]);
            }
        }
    }

    #[test]
    fn linear_case_scaling() {
        let prob = problem(7, 0.5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_coeffs(7, &mut rng, 1.0);
        let alpha = 2.7;
        let scaled = CoefficientVector(u.0.iter().map(|&c| alpha * c).collect());
        let g1 = prob.grad_ms(&u);
        let g2 = prob.grad_ms(&scaled);
        for j in 0..7 {
            assert!((g2[j] - alpha * g1[j]).abs() <= 1e-10 * (1.0 + g1[j].abs()));
        }
    }

    #[test]
    fn monotonicity_gap_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for prob in [
            problem(6, 0.5, 1.5),
            problem(6, 0.5, 2.0),
            problem(6, 0.5, 3.0),
            exp_problem(6, 0.5),
        ] {
            for _ in 0..250 {
                let u = random_coeffs(6, &mut rng, 1.0);
                let v = random_coeffs(6, &mut rng, 1.0);
                assert!(prob.monotonicity_gap(&u, &v) >= -1e-10);
            }
            let u = random_coeffs(6, &mut rng, 1.0);
            assert_eq!(prob.monotonicity_gap(&u, &u), 0.0);
        }
        // Bilinear identity in the quadratic case: u = 2v gives
        // gap = a(v, v) = grad(v) . v.
        let prob = problem(6, 0.5, 2.0);
        let v = random_coeffs(6, &mut rng, 1.0);
        let u = CoefficientVector(v.0.iter().map(|&c| 2.0 * c).collect());
        let gap = prob.monotonicity_gap(&u, &v);
        let reference = dot(&prob.grad_ms(&v), &v.0);
        assert!((gap - reference).abs() <= 1e-9 * (1.0 + reference.abs()));
    }
}
