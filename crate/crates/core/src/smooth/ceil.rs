use serde::Serialize;

use super::{DiffScalar, SmoothError};

/// Shape constants of the generalized logistic step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothShape {
    pub c: f64,
    pub b: f64,
    pub v: f64,
}

impl Default for SmoothShape {
    fn default() -> Self {
        SmoothShape {
            c: 0.2,
            b: 20.0,
            v: 0.5,
        }
    }
}

/// Parameters of the smooth ceiling: step shape plus the largest argument it
/// covers. Steps sit at the integers `1..x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothParams {
    pub shape: SmoothShape,
    pub x_max: f64,
}

impl Default for SmoothParams {
    /// Covers 5x5 kernels over 280 channels on a 128-row array:
    /// `ceil(25 * 280 / 128) + 1 = 56`.
    fn default() -> Self {
        SmoothParams {
            shape: SmoothShape::default(),
            x_max: 56.0,
        }
    }
}

impl SmoothParams {
    pub fn new(shape: SmoothShape, x_max: f64) -> Self {
        SmoothParams { shape, x_max }
    }

    /// Number of logistic steps; the smooth ceiling lies in `[1, steps + 1]`.
    pub fn steps(&self) -> usize {
        (self.x_max.ceil() as usize).saturating_sub(1)
    }

    /// Step centres `w_i`, strictly increasing.
    pub fn step_centers(&self) -> impl Iterator<Item = f64> {
        (1..=self.steps()).map(|i| i as f64)
    }
}

/// `ln(1 + e^a)` without overflow.
fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// One generalized logistic step `[1 + exp(-B u) / C]^(-1/v)` and its
/// derivative in `u`, evaluated in log space so that far-away steps neither
/// overflow nor produce `0 * inf`.
fn step(u: f64, s: &SmoothShape) -> (f64, f64) {
    let a = -s.b * u - s.c.ln();
    let g = (-softplus(a) / s.v).exp();
    (g, s.b / s.v * g * sigmoid(a))
}

/// Value and derivative of the smooth ceiling at a plain `x`.
pub fn smooth_ceil_f64(x: f64, p: &SmoothParams) -> Result<(f64, f64), SmoothError> {
    if !(x > 0.0 && x <= p.x_max) {
        return Err(SmoothError::Domain { x, x_max: p.x_max });
    }
    // The jump at zero lies outside the positive domain, so it is a constant 1.
    let mut value = 1.0;
    let mut slope = 0.0;
    for w in p.step_centers() {
        let (g, dg) = step(x - w, &p.shape);
        value += g;
        slope += dg;
    }
    Ok((value, slope))
}

/// Smooth, strictly increasing approximation of `ceil(x)` for
/// `0 < x <= x_max`.
pub fn smooth_ceil(x: &DiffScalar, p: &SmoothParams) -> Result<DiffScalar, SmoothError> {
    let (value, slope) = smooth_ceil_f64(x.value(), p)?;
    Ok(x.map(value, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::VarId;

    #[test]
    fn mid_plateau_matches_ceil() {
        let p = SmoothParams::default();
        for i in 1..=55 {
            let x = i as f64 - 0.5;
            let (v, _) = smooth_ceil_f64(x, &p).unwrap();
            assert!((v - i as f64).abs() < 0.01, "x = {x}: {v}");
        }
    }

    #[test]
    fn derivative_positive_at_random_points() {
        let p = SmoothParams::default();
        // Fixed pseudo-random points across the domain.
        let mut s = 0x2545_f491_4f6c_dd1du64;
        for _ in 0..10 {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            let x = (s % 10_000) as f64 / 10_000.0 * 40.0 + 0.01;
            let (_, d) = smooth_ceil_f64(x, &p).unwrap();
            assert!(d > 0.0, "x = {x}");
        }
    }

    #[test]
    fn domain_is_enforced() {
        let p = SmoothParams::default();
        assert!(smooth_ceil_f64(0.0, &p).is_err());
        assert!(smooth_ceil_f64(-1.0, &p).is_err());
        assert!(smooth_ceil_f64(56.5, &p).is_err());
        assert!(smooth_ceil_f64(f64::NAN, &p).is_err());
        assert!(smooth_ceil_f64(56.0, &p).is_ok());
    }

    #[test]
    fn bounded_and_non_decreasing() {
        let p = SmoothParams::default();
        let mut prev = 0.0;
        for i in 1..=5600 {
            let (v, _) = smooth_ceil_f64(i as f64 / 100.0, &p).unwrap();
            assert!(v >= prev);
            assert!(v >= 0.0 && v <= (p.steps() + 1) as f64);
            prev = v;
        }
    }

    #[test]
    fn far_steps_stay_finite() {
        let p = SmoothParams::new(SmoothShape::default(), 2000.0);
        let (v, d) = smooth_ceil_f64(1e-3, &p).unwrap();
        assert!(v.is_finite() && d.is_finite());
        let (v, d) = smooth_ceil_f64(1999.5, &p).unwrap();
        assert!((v - 2000.0).abs() < 0.01);
        assert!(d.is_finite());
    }

    #[test]
    fn chain_rule_applies_to_partials() {
        let p = SmoothParams::default();
        let c = DiffScalar::variable(150.0, VarId(0));
        let x = &c / 128.0;
        let y = smooth_ceil(&x, &p).unwrap();
        let (_, slope) = smooth_ceil_f64(150.0 / 128.0, &p).unwrap();
        assert!((y.partial(VarId(0)) - slope / 128.0).abs() < 1e-15);
    }
}
