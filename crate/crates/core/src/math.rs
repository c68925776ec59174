//! Scalar math routed through `libm` so results are identical on every
//! target, with or without `std`.

use core::f64::consts::{PI, TAU};

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// Round half away from zero (`nint`).
#[inline]
pub fn nint(x: f64) -> i64 {
    libm::round(x) as i64
}

/// `10^(db/10)`.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    pow(10.0, db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * log10(x)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % TAU;
    if t < 0.0 {
        t += TAU;
    }
    // `-tiny % TAU + TAU` can round up to exactly TAU.
    if t >= TAU {
        t = 0.0;
    }
    t
}

/// Signed shortest rotation taking `from` to `to`, in `(-π, π]`.
pub fn shortest_arc(from: f64, to: f64) -> f64 {
    let d = wrap_angle(to - from);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Angle of the vector `(dx, dy)` in `[0, 2π)`.
#[inline]
pub fn angle_of(dx: f64, dy: f64) -> f64 {
    wrap_angle(atan2(dy, dx))
}

/// Unit-modulus complex number `e^{jθ}`.
#[inline]
pub fn cis(theta: f64) -> crate::Complex64 {
    crate::Complex64::new(cos(theta), sin(theta))
}

/// Euclidean norm of a complex vector.
pub fn cnorm(v: &[crate::Complex64]) -> f64 {
    sqrt(v.iter().map(|z| z.norm_sqr()).sum())
}

/// `a^H b`.
pub fn cdot(a: &[crate::Complex64], b: &[crate::Complex64]) -> crate::Complex64 {
    a.iter()
        .zip(b)
        .fold(crate::Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_range() {
        for &t in &[-7.0, -TAU, -1e-18, 0.0, 1.0, TAU, 13.0] {
            let w = wrap_angle(t);
            assert!((0.0..TAU).contains(&w), "{t} -> {w}");
        }
    }

    #[test]
    fn shortest_arc_crosses_zero() {
        let d = shortest_arc(TAU - 0.1, 0.1);
        assert!((d - 0.2).abs() < 1e-12);
        let d = shortest_arc(0.1, TAU - 0.1);
        assert!((d + 0.2).abs() < 1e-12);
    }

    #[test]
    fn nint_rounds_half_away() {
        assert_eq!(nint(2.5), 3);
        assert_eq!(nint(-2.5), -3);
        assert_eq!(nint(2.49), 2);
    }
}
