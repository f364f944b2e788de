//! Pointwise Young-function algebra.
//!
//! A Young function is an even convex `M` with `M(0) = 0`, sublinear at the
//! origin and superlinear at infinity, written as `M(t) = integral of m over
//! [0, |t|]` for a nondecreasing right-continuous density `m` vanishing only
//! at zero. This module evaluates the pair `(m, M)`, forms the conjugate
//! function, classifies the doubling behavior and exposes the Young
//! inequality gap used throughout the validation batteries.

use crate::{Error, Result};

/// Relative tolerance for the bisection inverse of a density.
const INVERSE_REL_TOL: f64 = 1e-12;

/// Closed-form family of a Young function, when one is known.
#[derive(Debug, Clone)]
pub enum YoungKind {
    /// `m(t) = t^(p-1)`, `M(t) = |t|^p / p`, `p > 1`.
    Power { p: f64 },
    /// `m(t) = e^t - 1`, `M(t) = e^|t| - |t| - 1`. The canonical example
    /// violating the doubling condition.
    ExpMinusLinear,
    /// `m(t) = ln(1 + t)`, `M(t) = (1+|t|) ln(1+|t|) - |t|`. Conjugate
    /// partner of [`YoungKind::ExpMinusLinear`].
    LogPlusOne,
    /// Tabulated density with piecewise-linear monotone interpolation and
    /// linear extrapolation of the last segment.
    Custom(CustomTable),
    /// Numerically conjugated function: the density is the right-continuous
    /// inverse of the base density, computed by bisection.
    NumericConjugate(Box<YoungFunction>),
}

/// Tabulated density `t -> m(t)` on `[0, t_n]`.
#[derive(Debug, Clone)]
pub struct CustomTable {
    ts: Vec<f64>,
    ms: Vec<f64>,
    /// Cumulative exact integral of the interpolant at each breakpoint.
    cum: Vec<f64>,
    /// Slope used beyond the last breakpoint.
    tail_slope: f64,
}

impl CustomTable {
    fn build(table: &[(f64, f64)]) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::input("custom table needs at least two nodes"));
        }
        for &(t, m) in table {
            if !t.is_finite() || !m.is_finite() {
                return Err(Error::input("custom table entries must be finite"));
            }
        }
        if table[0].0 != 0.0 {
            return Err(Error::input("custom table must start at t = 0"));
        }
        let ts: Vec<f64> = table.iter().map(|&(t, _)| t).collect();
        let ms: Vec<f64> = table.iter().map(|&(_, m)| m).collect();
        if ts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("custom table abscissae must be nondecreasing"));
        }
        // Exact integral of the piecewise-linear interpolant.
        let mut cum = Vec::with_capacity(ts.len());
        cum.push(0.0);
        for i in 1..ts.len() {
            let seg = (ts[i] - ts[i - 1]) * 0.5 * (ms[i] + ms[i - 1]);
            cum.push(cum[i - 1] + seg);
        }
        let n = ts.len();
        let dt = ts[n - 1] - ts[n - 2];
        let tail_slope = if dt > 0.0 {
            (ms[n - 1] - ms[n - 2]) / dt
        } else {
            0.0
        };
        Ok(CustomTable {
            ts,
            ms,
            cum,
            tail_slope,
        })
    }

    /// Interpolated density. At a duplicated abscissa (a jump) this returns
    /// the left limit.
    fn density(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t <= 0.0 {
            return self.ms[0].max(0.0);
        }
        if t >= self.ts[n - 1] {
            return self.ms[n - 1] + self.tail_slope * (t - self.ts[n - 1]);
        }
        // First segment index with ts[i] >= t keeps jump evaluation on the
        // left branch.
        let i = self.ts.partition_point(|&x| x < t);
        let (t0, t1) = (self.ts[i - 1], self.ts[i]);
        let (m0, m1) = (self.ms[i - 1], self.ms[i]);
        if t1 == t0 {
            m0
        } else {
            m0 + (m1 - m0) * (t - t0) / (t1 - t0)
        }
    }

    fn primitive(&self, t: f64) -> f64 {
        let n = self.ts.len();
        let t = t.abs();
        if t >= self.ts[n - 1] {
            let dt = t - self.ts[n - 1];
            let m_end = self.ms[n - 1];
            return self.cum[n - 1] + dt * m_end + 0.5 * self.tail_slope * dt * dt;
        }
        let i = self.ts.partition_point(|&x| x < t).max(1);
        let dt = t - self.ts[i - 1];
        self.cum[i - 1] + dt * 0.5 * (self.ms[i - 1] + self.density(t))
    }
}

/// The pair `(m, M)` of a Young function.
#[derive(Debug, Clone)]
pub struct YoungFunction {
    kind: YoungKind,
}

/// Outcome of the sampled doubling-condition probe.
#[derive(Debug, Clone)]
pub struct Delta2Report {
    pub satisfied: bool,
    /// Largest sampled ratio `M(2t)/M(t)` when the probe is satisfied.
    pub witness_c: Option<f64>,
    /// The sampled grid `(t, M(2t)/M(t))`.
    pub grid: Vec<(f64, f64)>,
}

/// `|t|^e` with fast paths for the exponents that dominate the built-in
/// catalogue. The choice is fixed per exponent, so results stay
/// deterministic for a given configuration.
pub(crate) fn pow_abs(t: f64, e: f64) -> f64 {
    let a = t.abs();
    if e == 1.0 {
        a
    } else if e == 2.0 {
        a * a
    } else if e == 3.0 {
        a * a * a
    } else if e == 0.5 {
        a.sqrt()
    } else if e == 1.5 {
        a * a.sqrt()
    } else {
        a.powf(e)
    }
}

impl YoungFunction {
    /// Power-type function `M(t) = |t|^p / p` with `p` in `(1, inf)`.
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::input(format!(
                "power exponent must be finite and > 1, got {p}"
            )));
        }
        Ok(YoungFunction {
            kind: YoungKind::Power { p },
        })
    }

    /// `M(t) = e^|t| - |t| - 1`, the canonical non-doubling example.
    pub fn exp_minus_linear() -> Self {
        YoungFunction {
            kind: YoungKind::ExpMinusLinear,
        }
    }

    /// `M(t) = (1+|t|) ln(1+|t|) - |t|`.
    pub fn log_plus_one() -> Self {
        YoungFunction {
            kind: YoungKind::LogPlusOne,
        }
    }

    /// Tabulated density with full admissibility checks: the interpolant
    /// must be nondecreasing, vanish only at zero and grow at the tail.
    pub fn custom(table: &[(f64, f64)]) -> Result<Self> {
        let f = Self::custom_unchecked(table)?;
        f.check_invariants()?;
        Ok(f)
    }

    /// Tabulated density with structural checks only. Diagnostic batteries
    /// use this to plant deliberately broken densities; solve paths must go
    /// through [`YoungFunction::custom`].
    pub fn custom_unchecked(table: &[(f64, f64)]) -> Result<Self> {
        Ok(YoungFunction {
            kind: YoungKind::Custom(CustomTable::build(table)?),
        })
    }

    pub fn kind(&self) -> &YoungKind {
        &self.kind
    }

    /// True when the function is exactly the quadratic `M(t) = t^2 / 2`.
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, YoungKind::Power { p } if p == 2.0)
    }

    /// Density `m(t)` on `[0, inf)`; negative arguments are clamped to 0.
    pub fn density(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match &self.kind {
            YoungKind::Power { p } => pow_abs(t, p - 1.0),
            YoungKind::ExpMinusLinear => t.exp() - 1.0,
            YoungKind::LogPlusOne => t.ln_1p(),
            YoungKind::Custom(tab) => tab.density(t),
            YoungKind::NumericConjugate(base) => inverse_density(base, t),
        }
    }

    /// Odd extension of the density: `m(|t|) sign t`, zero at zero.
    pub fn density_signed(&self, t: f64) -> f64 {
        if t == 0.0 {
            0.0
        } else {
            self.density(t.abs()).copysign(t)
        }
    }

    /// `M(t) = integral of m over [0, |t|]`, by closed form when the kind
    /// provides one.
    pub fn primitive(&self, t: f64) -> f64 {
        let a = t.abs();
        match &self.kind {
            YoungKind::Power { p } => pow_abs(a, *p) / p,
            YoungKind::ExpMinusLinear => a.exp() - a - 1.0,
            YoungKind::LogPlusOne => (1.0 + a) * a.ln_1p() - a,
            YoungKind::Custom(tab) => tab.primitive(a),
            // Legendre identity: conj(M)(tau) = tau t* - M(t*) at t* where
            // the sup is attained, i.e. t* = inverse density of tau.
            YoungKind::NumericConjugate(base) => {
                let t_star = inverse_density(base, a);
                a * t_star - base.primitive(t_star)
            }
        }
    }

    /// Checked evaluation of `M`.
    pub fn eval_m(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::input(format!("eval_M expects finite t, got {t}")));
        }
        Ok(self.primitive(t))
    }

    /// Checked evaluation of the odd extension of the density.
    pub fn eval_m_signed(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::input(format!(
                "eval_m_signed expects finite t, got {t}"
            )));
        }
        Ok(self.density_signed(t))
    }

    /// Conjugate function `conj(M)(t) = sup { tau |t| - M(tau) : tau >= 0 }`.
    ///
    /// Closed forms are used for the built-in catalogue; tabulated and
    /// already-conjugated functions fall back to the bisection inverse of
    /// the density, so conjugating twice exercises the numeric path rather
    /// than returning the base verbatim.
    pub fn conjugate(&self) -> YoungFunction {
        let kind = match &self.kind {
            YoungKind::Power { p } => YoungKind::Power { p: p / (p - 1.0) },
            YoungKind::ExpMinusLinear => YoungKind::LogPlusOne,
            YoungKind::LogPlusOne => YoungKind::ExpMinusLinear,
            other => YoungKind::NumericConjugate(Box::new(YoungFunction {
                kind: other.clone(),
            })),
        };
        YoungFunction { kind }
    }

    /// Young inequality gap `M(t) + conj(M)(tau) - tau t >= 0` for
    /// `t, tau >= 0`.
    pub fn young_gap(&self, t: f64, tau: f64) -> Result<f64> {
        if !(t.is_finite() && tau.is_finite()) || t < 0.0 || tau < 0.0 {
            return Err(Error::input(format!(
                "young_gap expects finite nonnegative inputs, got t={t}, tau={tau}"
            )));
        }
        Ok(self.primitive(t) + self.conjugate().primitive(tau) - tau * t)
    }

    /// Samples `M(2t)/M(t)` on a log grid over `[1, t_max]`. The verdict is
    /// a heuristic: the ratio blowing up past `1e3` times its value at
    /// `t = 1` (or overflowing) counts as a violation of the doubling
    /// condition.
    pub fn check_delta2(&self, t_max: f64, samples: usize) -> Result<Delta2Report> {
        if !(t_max > 1.0) {
            return Err(Error::input(format!("t_max must exceed 1, got {t_max}")));
        }
        let n = samples.max(2);
        let mut grid = Vec::with_capacity(n);
        for i in 0..n {
            let frac = i as f64 / (n - 1) as f64;
            let t = (frac * t_max.ln()).exp();
            let num = self.primitive(2.0 * t);
            let den = self.primitive(t);
            let ratio = if den > 0.0 { num / den } else { f64::INFINITY };
            grid.push((t, ratio));
        }
        let first = grid.first().map(|&(_, r)| r).unwrap_or(f64::INFINITY);
        let last = grid.last().map(|&(_, r)| r).unwrap_or(f64::INFINITY);
        let blown = !last.is_finite() || !first.is_finite() || last > 1e3 * first;
        let witness_c = if blown {
            None
        } else {
            Some(grid.iter().map(|&(_, r)| r).fold(f64::MIN, f64::max))
        };
        Ok(Delta2Report {
            satisfied: !blown,
            witness_c,
            grid,
        })
    }

    /// Samples the structural requirements on `(m, M)` and returns the
    /// violations. Empty means admissible.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let grid = log_grid(1e-4, 1e4, 64);
        // m nondecreasing, m(0)=0, m>0 for t>0.
        if self.density(0.0) != 0.0 {
            bad.push(format!("m(0) = {} is not 0", self.density(0.0)));
        }
        let mut prev = 0.0f64;
        for &t in &grid {
            let m = self.density(t);
            if !(m > 0.0) {
                bad.push(format!("m({t}) = {m} is not positive"));
                break;
            }
            if m < prev - 1e-12 * prev.abs().max(1.0) {
                bad.push(format!("m decreases at t = {t}"));
                break;
            }
            prev = m;
        }
        // M(t)/t sublinear at 0 and superlinear at infinity: the sampled
        // ratios must be strictly ordered.
        let ratio = |t: f64| self.primitive(t) / t;
        if !(ratio(1e-4) < ratio(1e-2)) {
            bad.push("M(t)/t not increasing near 0".into());
        }
        if !(ratio(1e4) > ratio(1e2)) {
            bad.push("M(t)/t not increasing at infinity".into());
        }
        if self.primitive(0.0) != 0.0 {
            bad.push("M(0) != 0".into());
        }
        // Primitive consistency: M must integrate m. Composite midpoint
        // refinement on a few segments.
        for &t in &[0.5, 1.0, 3.0] {
            let quad = integrate_density(self, t);
            let m_val = self.primitive(t);
            if (quad - m_val).abs() > 1e-8 * (1.0 + m_val.abs()) {
                bad.push(format!(
                    "M({t}) = {m_val} deviates from the integral of m ({quad})"
                ));
            }
        }
        bad
    }

    /// Errors with the first violation when the function fails its sampled
    /// invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = self.invariant_violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::input(format!("inadmissible Young function: {}", bad[0])))
        }
    }
}

/// Right-continuous generalized inverse of the density of `base`, evaluated
/// by bracket-doubling plus bisection. At a plateau the left endpoint is
/// returned, matching the left-limit convention of the density itself.
fn inverse_density(base: &YoungFunction, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0f64;
    let mut guard = 0;
    while base.density(hi) < tau {
        hi *= 2.0;
        guard += 1;
        if guard > 1100 {
            return hi; // density failed to reach tau; table tail is flat
        }
    }
    let mut lo = 0.0f64;
    while hi - lo > INVERSE_REL_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if base.density(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Composite-midpoint integral of the density over `[0, t]`, refined until
/// stable. Only used by the invariant probe, which needs an integration
/// route independent of `primitive`.
fn integrate_density(f: &YoungFunction, t: f64) -> f64 {
    let mut n = 64;
    let mut prev = f64::NAN;
    loop {
        let h = t / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            acc += f.density((i as f64 + 0.5) * h);
        }
        let val = acc * h;
        if (val - prev).abs() <= 1e-10 * (1.0 + val.abs()) || n >= 1 << 20 {
            return val;
        }
        prev = val;
        n *= 2;
    }
}

pub(crate) fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            (lo.ln() + frac * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

/// Right-hand-side data `(g, G)` with its growth constants.
#[derive(Debug, Clone)]
pub struct GrowthFunction {
    kind: GrowthKind,
    a1: f64,
    a2: f64,
    a3: f64,
}

#[derive(Debug, Clone)]
pub enum GrowthKind {
    /// `g = m_signed` of the paired Young function, so `G = M`.
    Matched(YoungFunction),
    /// `g(t) = |t|^{q-2} t`, `G(t) = |t|^q / q`.
    PowerLaw { q: f64 },
}

/// Outcome of sampling the growth bound `|g(t)| <= a1 + a2 m(a3 t)`.
#[derive(Debug, Clone)]
pub struct GrowthReport {
    pub ok: bool,
    pub violations: Vec<String>,
    /// Worst value of `|g(t)| - (a1 + a2 m(a3 t))` over the grid.
    pub worst_margin: f64,
}

impl GrowthFunction {
    /// Matched growth `g = m_signed`; the bound holds with `(0, 1, 1)`.
    pub fn matched(young: YoungFunction) -> Self {
        GrowthFunction {
            kind: GrowthKind::Matched(young),
            a1: 0.0,
            a2: 1.0,
            a3: 1.0,
        }
    }

    /// Power-law growth `g(t) = |t|^{q-2} t` with default constants
    /// `(1, 1, 1)`.
    pub fn power_law(q: f64) -> Result<Self> {
        if !q.is_finite() || q <= 1.0 {
            return Err(Error::input(format!(
                "growth exponent must be finite and > 1, got {q}"
            )));
        }
        Ok(GrowthFunction {
            kind: GrowthKind::PowerLaw { q },
            a1: 1.0,
            a2: 1.0,
            a3: 1.0,
        })
    }

    pub fn with_constants(mut self, a1: f64, a2: f64, a3: f64) -> Result<Self> {
        if !(a1 >= 0.0 && a2 > 0.0 && a3 > 0.0) || !(a1 + a2 + a3).is_finite() {
            return Err(Error::input(
                "growth constants must satisfy a1 >= 0, a2 > 0, a3 > 0",
            ));
        }
        self.a1 = a1;
        self.a2 = a2;
        self.a3 = a3;
        Ok(self)
    }

    pub fn constants(&self) -> (f64, f64, f64) {
        (self.a1, self.a2, self.a3)
    }

    pub fn kind(&self) -> &GrowthKind {
        &self.kind
    }

    /// True when `g(t) = t` exactly (the case covered by the dense oracle).
    pub fn is_linear(&self) -> bool {
        match &self.kind {
            GrowthKind::Matched(f) => f.is_quadratic(),
            GrowthKind::PowerLaw { q } => *q == 2.0,
        }
    }

    pub fn g(&self, t: f64) -> f64 {
        match &self.kind {
            GrowthKind::Matched(f) => f.density_signed(t),
            GrowthKind::PowerLaw { q } => {
                if t == 0.0 {
                    0.0
                } else {
                    pow_abs(t, q - 1.0).copysign(t)
                }
            }
        }
    }

    /// `G(t) = integral of g over [0, |t|]`.
    pub fn primitive(&self, t: f64) -> f64 {
        match &self.kind {
            GrowthKind::Matched(f) => f.primitive(t),
            GrowthKind::PowerLaw { q } => pow_abs(t, *q) / q,
        }
    }

    /// Samples oddness, sign and the growth bound against the paired Young
    /// function on `t` in `[0, 1e3]`.
    pub fn check_growth(&self, young: &YoungFunction, samples: usize) -> GrowthReport {
        let mut violations = Vec::new();
        let mut worst = f64::NEG_INFINITY;
        for &t in log_grid(1e-3, 1e3, samples.max(2)).iter() {
            let g = self.g(t);
            if (self.g(-t) + g).abs() > 1e-12 * (1.0 + g.abs()) {
                violations.push(format!("g not odd at t = {t}"));
            }
            if g * t <= 0.0 {
                violations.push(format!("g(t) t <= 0 at t = {t}"));
            }
            let bound = self.a1 + self.a2 * young.density(self.a3 * t);
            let margin = g.abs() - bound;
            if margin.is_nan() {
                violations.push(format!("growth bound not evaluable at t = {t}"));
            }
            worst = worst.max(margin);
            if margin > 1e-12 * (1.0 + bound.abs()) {
                violations.push(format!(
                    "|g({t})| = {} exceeds a1 + a2 m(a3 t) = {bound}",
                    g.abs()
                ));
            }
        }
        violations.truncate(8);
        GrowthReport {
            ok: violations.is_empty(),
            violations,
            worst_margin: worst,
        }
    }
}
