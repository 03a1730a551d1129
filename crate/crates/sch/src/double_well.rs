//! The double-well potential `F(u) = ¼(u²-1)²` and its derivatives.

use crate::field::Field;

/// `f(u) = F'(u) = u³ - u`.
#[inline]
pub fn f(u: f64) -> f64 {
    u * u * u - u
}

/// `f'(u) = 3u² - 1`.
#[inline]
pub fn f_prime(u: f64) -> f64 {
    3.0 * u * u - 1.0
}

/// `F(u) = ¼(u² - 1)²`.
#[inline]
pub fn potential(u: f64) -> f64 {
    let t = u * u - 1.0;
    0.25 * t * t
}

/// `𝔣(u) = u² - 1`, so that `f(u) = 𝔣(u)·u` and `F(u) = ¼ 𝔣(u)²`.
#[inline]
pub fn frak(u: f64) -> f64 {
    u * u - 1.0
}

pub fn f_field(u: &Field) -> Field {
    u.map(f)
}

pub fn potential_field(u: &Field) -> Field {
    u.map(potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::grid::make_grid;
    use crate::rng::{stream_rng, StreamKey};
    use rand::Rng;

    #[test]
    fn roots_and_values() {
        for u in [-1.0, 0.0, 1.0] {
            assert_eq!(f(u), 0.0);
        }
        assert_eq!(potential(1.0), 0.0);
        assert_eq!(potential(-1.0), 0.0);
        assert_eq!(potential(0.0), 0.25);
        assert_eq!(f(2.0), 6.0);
        assert_eq!(potential(2.0), 9.0 / 4.0);
    }

    #[test]
    fn difference_identity_pointwise() {
        // f(a) - f(b) = 3(a-b)a² - (a-b) + (a-b)³ - 3(a-b)²a
        let grid = make_grid(2, 16).unwrap();
        let mut rng = stream_rng(StreamKey { seed: 99, path: 0, step: 0 });
        let a = Field::from_values(
            grid.clone(),
            (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        );
        let b = Field::from_values(
            grid.clone(),
            (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        );
        for (&x, &y) in a.values().iter().zip(b.values()) {
            let d = x - y;
            let rhs = 3.0 * d * x * x - d + d * d * d - 3.0 * d * d * x;
            assert!((f(x) - f(y) - rhs).abs() < 1e-12);
        }
    }
}
