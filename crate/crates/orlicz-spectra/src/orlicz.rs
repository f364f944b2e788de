//! Modulars and Luxemburg norms over discrete measures.
//!
//! On a finite node set every modular is finite for finite scaling, so the
//! Orlicz class, its linear hull and the closure of bounded functions all
//! coincide; the norms computed here are the finite-dimensional surrogates
//! of that collapsed triple.

use crate::young::YoungFunction;
use crate::{Error, Result};

/// Positive weights of a discrete measure, tagged with its provenance.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    tag: MeasureTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureTag {
    /// Image of the Lebesgue measure on a 1D grid.
    Lebesgue1D,
    /// Image of the pair measure `dx dy / |x-y|` on off-diagonal nodes.
    PairNu,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>, tag: MeasureTag) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("measure needs at least one node"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::input(
                "measure weights must be strictly positive and finite",
            ));
        }
        Ok(DiscreteMeasure { weights, tag })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tag(&self) -> MeasureTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Nodal values aligned index-for-index with a [`DiscreteMeasure`].
#[derive(Debug, Clone)]
pub struct SampledField {
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("field values must be finite"));
        }
        Ok(SampledField { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_aligned(u: &SampledField, mu: &DiscreteMeasure) -> Result<()> {
    if u.len() != mu.len() {
        return Err(Error::input(format!(
            "field has {} values but the measure carries {} weights",
            u.len(),
            mu.len()
        )));
    }
    Ok(())
}

/// `sum_i w_i M(u_i)`. Always nonnegative; may overflow to infinity for
/// extreme scalings of exponential-type functions, which the norm bisection
/// treats as "greater than one".
pub fn modular(f: &YoungFunction, u: &SampledField, mu: &DiscreteMeasure) -> Result<f64> {
    check_aligned(u, mu)?;
    let mut acc = 0.0;
    for (&w, &v) in mu.weights().iter().zip(u.values()) {
        acc += w * f.primitive(v);
    }
    Ok(acc)
}

/// Luxemburg norm `inf { k > 0 : modular(u / k) <= 1 }` by bracketing and
/// bisection. The map `k -> modular(u/k)` is strictly decreasing where
/// positive on a discrete measure, so the root is unique.
pub fn luxemburg_norm(f: &YoungFunction, u: &SampledField, mu: &DiscreteMeasure) -> Result<f64> {
    check_aligned(u, mu)?;
    if u.values().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let phi = |k: f64| -> f64 {
        let mut acc = 0.0;
        for (&w, &v) in mu.weights().iter().zip(u.values()) {
            acc += w * f.primitive(v / k);
            if !acc.is_finite() {
                return f64::INFINITY;
            }
        }
        acc
    };
    // Bracket the unit level starting from k = 1.
    let mut hi = 1.0f64;
    let mut lo = 1.0f64;
    if phi(1.0) > 1.0 {
        while phi(hi) > 1.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::input("luxemburg norm bracket overflow"));
            }
        }
        lo = hi / 2.0;
    } else {
        while phi(lo) <= 1.0 {
            lo /= 2.0;
            if lo < 1e-300 {
                // Modular stays below one for every positive scale; only
                // possible when u is numerically zero.
                return Ok(0.0);
            }
        }
        hi = lo * 2.0;
    }
    // phi(lo) > 1 >= phi(hi).
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-norm bound for the pairing: `int |uv| dmu <= 2 ||u||_M ||v||_conj(M)`.
#[derive(Debug, Clone)]
pub struct HolderReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

pub fn holder_pairing_check(
    f: &YoungFunction,
    u: &SampledField,
    v: &SampledField,
    mu: &DiscreteMeasure,
) -> Result<HolderReport> {
    check_aligned(u, mu)?;
    check_aligned(v, mu)?;
    let mut lhs = 0.0;
    for ((&w, &a), &b) in mu.weights().iter().zip(u.values()).zip(v.values()) {
        lhs += w * (a * b).abs();
    }
    let rhs = 2.0
        * luxemburg_norm(f, u, mu)?
        * luxemburg_norm(&f.conjugate(), v, mu)?;
    Ok(HolderReport {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::young::YoungFunction;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn mass_measure(weights: Vec<f64>) -> DiscreteMeasure {
        DiscreteMeasure::new(weights, MeasureTag::Lebesgue1D).unwrap()
    }

    /// Compensated (Kahan) summation, the independent route for the
    /// modular accumulation check.
    fn kahan_modular(f: &YoungFunction, u: &[f64], w: &[f64]) -> f64 {
        let mut sum = 0.0f64;
        let mut c = 0.0f64;
        for (&wi, &vi) in w.iter().zip(u) {
            let term = wi * f.primitive(vi) - c;
            let t = sum + term;
            c = (t - sum) - term;
            sum = t;
        }
        sum
    }

    #[test]
    fn measure_rejects_bad_weights() {
        assert!(DiscreteMeasure::new(vec![], MeasureTag::Lebesgue1D).is_err());
        assert!(DiscreteMeasure::new(vec![1.0, 0.0], MeasureTag::Lebesgue1D).is_err());
        assert!(DiscreteMeasure::new(vec![1.0, -2.0], MeasureTag::PairNu).is_err());
    }

    #[test]
    fn modular_basics() {
        let p2 = YoungFunction::power(2.0).unwrap();
        let mu = mass_measure(vec![0.5, 1.5]);
        let zero = SampledField::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(modular(&p2, &zero, &mu).unwrap(), 0.0);
        // Constant one over total mass two: M(1) = 1/2 each.
        let ones = SampledField::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(modular(&p2, &ones, &mu).unwrap(), 1.0);
        // Length mismatch is an input error.
        let short = SampledField::new(vec![1.0]).unwrap();
        assert!(modular(&p2, &short, &mu).is_err());
    }

    #[test]
    fn modular_matches_compensated_sum() {
        let p15 = YoungFunction::power(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1000;
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mu = mass_measure(w.clone());
        let field = SampledField::new(u.clone()).unwrap();
        let fast = modular(&p15, &field, &mu).unwrap();
        let exact = kahan_modular(&p15, &u, &w);
        assert!((fast - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn luxemburg_closed_form() {
        let p2 = YoungFunction::power(2.0).unwrap();
        let mu = mass_measure(vec![0.25, 0.75]);
        let zero = SampledField::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(luxemburg_norm(&p2, &zero, &mu).unwrap(), 0.0);
        // Constant c over mass one: k = c / sqrt(2).
        for &c in &[0.1, 1.0, 42.0] {
            let field = SampledField::new(vec![c, c]).unwrap();
            let k = luxemburg_norm(&p2, &field, &mu).unwrap();
            assert!((k - c / 2f64.sqrt()).abs() <= 1e-10 * c);
        }
    }

    #[test]
    fn luxemburg_satisfies_defining_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in [
            YoungFunction::power(1.5).unwrap(),
            YoungFunction::power(3.0).unwrap(),
            YoungFunction::exp_minus_linear(),
        ] {
            let n = 64;
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-2..0.5)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let mu = mass_measure(w);
            let field = SampledField::new(u.clone()).unwrap();
            let k = luxemburg_norm(&f, &field, &mu).unwrap();
            let scaled =
                SampledField::new(u.iter().map(|v| v / k).collect()).unwrap();
            let m = modular(&f, &scaled, &mu).unwrap();
            assert!(
                (m - 1.0).abs() <= 1e-8,
                "modular at the norm is {m} for {:?}",
                f.kind()
            );
        }
    }

    #[test]
    fn holder_pairing_saturates_for_quadratic() {
        let p2 = YoungFunction::power(2.0).unwrap();
        let mu = mass_measure(vec![1.0]);
        let ones = SampledField::new(vec![1.0]).unwrap();
        let rep = holder_pairing_check(&p2, &ones, &ones, &mu).unwrap();
        assert!(rep.ok);
        assert!((rep.lhs - 1.0).abs() <= 1e-12);
        assert!((rep.rhs - 1.0).abs() <= 1e-9);

        let zero = SampledField::new(vec![0.0]).unwrap();
        let rep = holder_pairing_check(&p2, &zero, &zero, &mu).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.lhs, 0.0);
    }

    #[test]
    fn holder_pairing_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = YoungFunction::power(1.5).unwrap();
        for _ in 0..200 {
            let n = rng.gen_range(2..20);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-2..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mu = mass_measure(w);
            let rep = holder_pairing_check(
                &f,
                &SampledField::new(u).unwrap(),
                &SampledField::new(v).unwrap(),
                &mu,
            )
            .unwrap();
            assert!(rep.ok, "lhs {} > rhs {}", rep.lhs, rep.rhs);
        }
    }

    #[test]
    fn norm_monotone_in_young_function() {
        // Doubling the density doubles M pointwise, which can only grow the
        // norm.
        let base: Vec<(f64, f64)> = (0..80).map(|i| (i as f64 * 0.25, i as f64 * 0.25)).collect();
        let doubled: Vec<(f64, f64)> =
            base.iter().map(|&(t, m)| (t, 2.0 * m)).collect();
        let f1 = YoungFunction::custom(&base).unwrap();
        let f2 = YoungFunction::custom(&doubled).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..16);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mu = mass_measure(w);
            let field = SampledField::new(u).unwrap();
            let n1 = luxemburg_norm(&f1, &field, &mu).unwrap();
            let n2 = luxemburg_norm(&f2, &field, &mu).unwrap();
            assert!(n1 <= n2 + 1e-8, "{n1} > {n2}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn luxemburg_homogeneity(
            alpha in -5.0..5.0f64,
            seed in 0u64..1000,
        ) {
            prop_assume!(alpha.abs() > 1e-6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 16;
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mu = mass_measure(w);
            let f = YoungFunction::power(2.5).unwrap();
            let base = luxemburg_norm(&f, &SampledField::new(u.clone()).unwrap(), &mu).unwrap();
            let scaled = luxemburg_norm(
                &f,
                &SampledField::new(u.iter().map(|v| alpha * v).collect()).unwrap(),
                &mu,
            ).unwrap();
            prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }

        #[test]
        fn luxemburg_triangle(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 16;
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mu = mass_measure(w);
            let f = YoungFunction::exp_minus_linear();
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let nu = luxemburg_norm(&f, &SampledField::new(u).unwrap(), &mu).unwrap();
            let nv = luxemburg_norm(&f, &SampledField::new(v).unwrap(), &mu).unwrap();
            let ns = luxemburg_norm(&f, &SampledField::new(sum).unwrap(), &mu).unwrap();
            prop_assert!(ns <= nu + nv + 1e-8);
        }

        #[test]
        fn unit_ball_modular(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mu = mass_measure(w);
            let f = YoungFunction::power(1.5).unwrap();
            let field = SampledField::new(u.clone()).unwrap();
            let k = luxemburg_norm(&f, &field, &mu).unwrap();
            prop_assume!(k > 0.0);
            let scaled = SampledField::new(u.iter().map(|v| v / k).collect()).unwrap();
            prop_assert!(modular(&f, &scaled, &mu).unwrap() <= 1.0 + 1e-8);
        }
    }
}
