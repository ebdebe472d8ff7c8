use super::tensor::Real;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

pub fn sigmoid<T: Real>(z: T) -> T {
    // Split by sign so exp never overflows.
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy `-[y ln p + (1 - y) ln(1 - p)]` and its derivative
/// with respect to `p`, `(p - y) / (p (1 - p))`, both at the clamped `p`.
pub fn bce_loss<T: Real>(p: T, y: T) -> (T, T) {
    let eps = T::of(BCE_EPS);
    let p = p.max(eps).min(T::one() - eps);
    let loss = -(y * p.ln() + (T::one() - y) * (T::one() - p).ln());
    let grad = (p - y) / (p * (T::one() - p));
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_costs_ln2() {
        for y in [0.0, 1.0] {
            let (l, _) = bce_loss(0.5f64, y);
            assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_and_right_is_nearly_free() {
        let (l1, _) = bce_loss(1.0f64, 1.0);
        let (l0, _) = bce_loss(0.0f64, 0.0);
        assert!(l1 < 1e-6 && l0 < 1e-6);
        let (bad, _) = bce_loss(0.0f64, 1.0);
        assert!(bad.is_finite() && bad > 16.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, y, h) = (0.3f64, 1.0, 1e-6);
        let (_, g) = bce_loss(p, y);
        let fd = (bce_loss(p + h, y).0 - bce_loss(p - h, y).0) / (2.0 * h);
        assert!(((g - fd) / fd).abs() < 1e-6, "{g} vs {fd}");
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }
}
