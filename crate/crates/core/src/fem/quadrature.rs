/// Quadrature on a reference cell. Triangle points are barycentric `(L1, L2)` on
/// the unit triangle (area 1/2); interval points lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
}

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Six-point symmetric rule, exact for degree 4 on triangles.
pub fn triangle_degree4() -> QuadratureRule<2> {
    const A: f64 = 0.445_948_490_915_964_886_318_329_253_883_05;
    const B: f64 = 0.091_576_213_509_770_743_459_571_463_402_202;
    const WA: f64 = 0.223_381_589_678_011_465_695_007_008_433_12;
    const WB: f64 = 0.109_951_743_655_321_867_638_326_324_900_21;
    let points = vec![
        [A, A],
        [1.0 - 2.0 * A, A],
        [A, 1.0 - 2.0 * A],
        [B, B],
        [1.0 - 2.0 * B, B],
        [B, 1.0 - 2.0 * B],
    ];
    let weights = [WA, WA, WA, WB, WB, WB].iter().map(|w| 0.5 * w).collect();
    QuadratureRule { points, weights }
}

/// Three-point Gauss-Legendre on `[0, 1]`, exact for degree 5.
pub fn gauss3_unit() -> QuadratureRule<1> {
    let r = 0.5 * (0.6f64).sqrt();
    QuadratureRule {
        points: vec![[0.5 - r], [0.5], [0.5 + r]],
        weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    }
}

/// Five-point Gauss-Legendre on `[0, 1]`, exact for degree 9.
pub fn gauss5_unit() -> QuadratureRule<1> {
    let s = (10.0f64 / 7.0).sqrt();
    let x1 = (5.0 - 2.0 * s).sqrt() / 3.0;
    let x2 = (5.0 + 2.0 * s).sqrt() / 3.0;
    let w1 = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let w2 = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    QuadratureRule {
        points: vec![[0.5 - 0.5 * x2], [0.5 - 0.5 * x1], [0.5], [0.5 + 0.5 * x1], [0.5 + 0.5 * x2]],
        weights: vec![0.5 * w2, 0.5 * w1, 0.5 * 128.0 / 225.0, 0.5 * w1, 0.5 * w2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_rule_exact_for_degree_four_monomials() {
        // ∫ x^i y^j over the unit triangle = i! j! / (i + j + 2)!
        let q = triangle_degree4();
        assert!((q.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!(q.weights.iter().all(|&w| w > 0.0));
        for i in 0..=4u32 {
            for j in 0..=(4 - i) {
                let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                let approx: f64 = q
                    .points
                    .iter()
                    .zip(&q.weights)
                    .map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32))
                    .sum();
                assert!((approx - exact).abs() < 1e-15, "x^{i} y^{j}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn triangle_rule_not_exact_for_degree_six() {
        let q = triangle_degree4();
        let exact = factorial(6) / factorial(8);
        let approx: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0].powi(6)).sum();
        assert!((approx - exact).abs() > 1e-8);
    }

    #[test]
    fn line_rules_exact() {
        for (q, deg) in [(gauss3_unit(), 5), (gauss5_unit(), 9)] {
            for k in 0..=deg {
                let approx: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0].powi(k)).sum();
                assert!((approx - 1.0 / f64::from(k + 1)).abs() < 1e-15);
            }
        }
    }
}
