//! Symmetric quadrature rules on the reference triangle.

use alloc::vec::Vec;

/// Quadrature rule in barycentric coordinates. Weights sum to the
/// reference-triangle area `1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Vertex-free 3-point rule, exact to degree 2.
    pub fn degree2() -> Self {
        let a = 1.0 / 6.0;
        let b = 2.0 / 3.0;
        QuadratureRule {
            degree: 2,
            points: alloc::vec![[b, a, a], [a, b, a], [a, a, b]],
            weights: alloc::vec![1.0 / 6.0; 3],
        }
    }

    /// 7-point rule exact to degree 5 (Radon).
    pub fn degree5() -> Self {
        let sqrt15 = libm::sqrt(15.0);
        let a1 = (6.0 - sqrt15) / 21.0;
        let b1 = (9.0 + 2.0 * sqrt15) / 21.0;
        let w1 = (155.0 - sqrt15) / 2400.0;
        let a2 = (6.0 + sqrt15) / 21.0;
        let b2 = (9.0 - 2.0 * sqrt15) / 21.0;
        let w2 = (155.0 + sqrt15) / 2400.0;
        let c = 1.0 / 3.0;
        QuadratureRule {
            degree: 5,
            points: alloc::vec![
                [c, c, c],
                [b1, a1, a1],
                [a1, b1, a1],
                [a1, a1, b1],
                [b2, a2, a2],
                [a2, b2, a2],
                [a2, a2, b2],
            ],
            weights: alloc::vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
        }
    }

    /// Highest total polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral over the reference triangle `{x, y ≥ 0, x + y ≤ 1}` with
    /// `x = λ1`, `y = λ2`.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[1], p[2]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // ∫_T x^a y^b = a! b! / (a + b + 2)!
    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn check_rule(rule: &QuadratureRule) {
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 0.5).abs() < 1e-15);
        assert!(rule.weights().iter().all(|&w| w > 0.0));
        for p in rule.points() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let d = rule.degree() as u32;
        for a in 0..=d {
            for b in 0..=(d - a) {
                let q = rule.integrate_reference(|x, y| libm::pow(x, a as f64) * libm::pow(y, b as f64));
                let e = monomial_exact(a, b);
                assert!((q - e).abs() < 1e-14, "x^{a} y^{b}: {q} vs {e}");
            }
        }
    }

    #[test]
    fn degree2_exact() {
        check_rule(&QuadratureRule::degree2());
    }

    #[test]
    fn degree5_exact() {
        check_rule(&QuadratureRule::degree5());
    }

    #[test]
    fn degree5_not_exact_at_six() {
        let rule = QuadratureRule::degree5();
        let q = rule.integrate_reference(|x, _| libm::pow(x, 6.0));
        assert!((q - monomial_exact(6, 0)).abs() > 1e-8);
    }
}
