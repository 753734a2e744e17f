//! Adaptive Gauss-Kronrod quadrature and a geometric-panel integrator for
//! integrands with an integrable singularity at the lower endpoint.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and subdivision budget for all quadrature in the crate.
///
/// `support_truncation`, when set, overrides the model-provided integration
/// window for operations on continuous densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub support_truncation: Option<(f64, f64)>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_subdivisions: 200,
            support_truncation: None,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidParameter(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        if let Some((a, b)) = self.support_truncation {
            if !(a < b) {
                return Err(Error::InvalidParameter(
                    "truncation interval must be non-degenerate".into(),
                ));
            }
        }
        Ok(())
    }

    /// Resolve the integration window: explicit truncation wins over the default.
    pub fn window(&self, default: (f64, f64)) -> (f64, f64) {
        self.support_truncation.unwrap_or(default)
    }
}

// 15-point Kronrod nodes (positive half), 7-point Gauss weights embedded.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss-Kronrod 7-15 pass over `[a, b]`; returns (value, error estimate).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = kronrod.abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        resasc += WGK[j] * ((f(center - dx) - mean).abs() + (f(center + dx) - mean).abs());
    }
    let value = kronrod * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * 1.0_f64.min((200.0 * err / resasc).powf(1.5));
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

#[derive(PartialEq)]
struct Segment {
    err: f64,
    a: f64,
    b: f64,
    value: f64,
}

impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err
            .partial_cmp(&other.err)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| self.a.partial_cmp(&other.a).unwrap_or(std::cmp::Ordering::Equal))
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, q: &QuadratureSpec) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { err: e, a, b, value: v });
    let mut total = v;
    let mut total_err = e;
    let mut used = 1usize;
    loop {
        let tol = q.abs_tol.max(q.rel_tol * total.abs());
        if total_err <= tol {
            return Ok(total);
        }
        if used >= q.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                achieved: total_err,
                requested: tol,
                subdivisions: used,
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at machine resolution; keep its estimate and stop splitting
            total_err = total_err.max(tol * 0.5);
            if heap.is_empty() {
                return Ok(total);
            }
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { err: e1, a: worst.a, b: mid, value: v1 });
        heap.push(Segment { err: e2, a: mid, b: worst.b, value: v2 });
        used += 1;
    }
}

/// Adaptive integration of a vector-valued integrand (components share nodes).
/// The subdivision is driven by the worst component error.
pub fn integrate_vec<F: Fn(f64) -> DVector<f64>>(
    f: F,
    a: f64,
    b: f64,
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    let dim = f(0.5 * (a + b)).len();
    if a == b {
        return Ok(DVector::zeros(dim));
    }
    struct VSeg {
        err: f64,
        a: f64,
        b: f64,
        value: DVector<f64>,
    }
    let pass = |lo: f64, hi: f64| -> (DVector<f64>, f64) {
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let fc = f(center);
        let mut kron = fc.clone() * WGK[7];
        let mut gauss = fc * WG[3];
        for j in 0..7 {
            let dx = half * XGK[j];
            let s = f(center - dx) + f(center + dx);
            kron += &s * WGK[j];
            if j % 2 == 1 {
                gauss += s * WG[j / 2];
            }
        }
        let value = kron * half;
        let err = (&value - gauss * half).amax();
        (value, err)
    };
    let (v, e) = pass(a, b);
    let mut segs = vec![VSeg { err: e, a, b, value: v }];
    let mut used = 1usize;
    loop {
        let total = segs
            .iter()
            .fold(DVector::zeros(dim), |acc: DVector<f64>, s| acc + &s.value);
        let total_err: f64 = segs.iter().map(|s| s.err).sum();
        let tol = q.abs_tol.max(q.rel_tol * total.amax());
        if total_err <= tol {
            return Ok(total);
        }
        if used >= q.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                achieved: total_err,
                requested: tol,
                subdivisions: used,
            });
        }
        let (wi, _) = segs
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.err.partial_cmp(&y.err).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        let worst = segs.swap_remove(wi);
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // machine-resolution interval: accept its value as-is
            segs.push(VSeg { err: 0.0, a: worst.a, b: worst.b, value: worst.value });
            let total = segs
                .iter()
                .fold(DVector::zeros(dim), |acc: DVector<f64>, s| acc + &s.value);
            return Ok(total);
        }
        let (v1, e1) = pass(worst.a, mid);
        let (v2, e2) = pass(mid, worst.b);
        segs.push(VSeg { err: e1, a: worst.a, b: mid, value: v1 });
        segs.push(VSeg { err: e2, a: mid, b: worst.b, value: v2 });
        used += 1;
    }
}

/// Integrate `f` over `(0, b]` where `f` may have an integrable singularity at 0
/// (algebraic-log type). Panels are refined geometrically toward the endpoint:
/// [b/2, b], [b/4, b/2], ... each panel is smooth and handled by one GK15 pass.
/// The geometric tail is cut once two consecutive panels fall below the noise
/// floor; the last panel bounds the remainder because panel masses decay
/// geometrically for x^c-type integrands.
pub fn integrate_singular_lower<F: Fn(f64) -> f64>(f: F, b: f64, q: &QuadratureSpec) -> Result<f64> {
    if b == 0.0 {
        return Ok(0.0);
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("upper limit must be nonnegative, got {b}")));
    }
    let mut acc = 0.0;
    let mut err = 0.0;
    let mut hi = b;
    let mut small_count = 0u32;
    let mut prev_v = f64::INFINITY;
    for _ in 0..1100 {
        let lo = 0.5 * hi;
        let (v, e) = gk15(&f, lo, hi);
        acc += v;
        err += e;
        let floor = 0.01 * q.abs_tol.max(q.rel_tol * acc.abs());
        if v.abs() < floor {
            small_count += 1;
            if small_count >= 2 {
                // geometric tail extrapolation from the observed decay ratio
                let r = (v.abs() / prev_v.abs()).clamp(0.0, 0.95);
                let tail = v * r / (1.0 - r);
                acc += tail;
                err += tail.abs() + v.abs() * 0.01;
                break;
            }
        } else {
            small_count = 0;
        }
        prev_v = v;
        hi = lo;
    }
    let tol = q.abs_tol.max(q.rel_tol * acc.abs());
    if err > tol * 8.0 {
        return Err(Error::QuadratureNonConvergence {
            achieved: err,
            requested: tol,
            subdivisions: 0,
        });
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gk_integrates_polynomials_exactly() {
        let q = QuadratureSpec::default();
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, &q).unwrap();
        assert_relative_eq!(v, 8.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let q = QuadratureSpec::default();
        // standard normal over [-10, 10] integrates to ~1
        let c = (2.0 * std::f64::consts::PI).sqrt().recip();
        let v = integrate(|x| c * (-0.5 * x * x).exp(), -10.0, 10.0, &q).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn singular_lower_matches_analytic_power() {
        // ∫_0^1 s^{-1/2} ds = 2
        let q = QuadratureSpec::default();
        let v = integrate_singular_lower(|s| s.powf(-0.5), 1.0, &q).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_lower_with_log_factor() {
        // ∫_0^1 ln(1/s) ds = 1
        let q = QuadratureSpec::default();
        let v = integrate_singular_lower(|s| -(s.ln()), 1.0, &q).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn vector_integrand_matches_scalar_components() {
        let q = QuadratureSpec::default();
        let v = integrate_vec(
            |x| DVector::from_vec(vec![x, x * x, (-x * x).exp()]),
            0.0,
            1.0,
            &q,
        )
        .unwrap();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(v[1], 1.0 / 3.0, epsilon = 1e-12);
        let erf1 = integrate(|x| (-x * x).exp(), 0.0, 1.0, &q).unwrap();
        assert_relative_eq!(v[2], erf1, epsilon = 1e-12);
    }

    #[test]
    fn nonconvergence_is_reported_with_budget_exhausted() {
        let q = QuadratureSpec {
            max_subdivisions: 2,
            abs_tol: 1e-300,
            rel_tol: 1e-300,
            ..Default::default()
        };
        let r = integrate(|x| (1e6 * x).sin() / (x.abs() + 1e-12), -1.0, 1.0, &q);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
