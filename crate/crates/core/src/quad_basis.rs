//! One-dimensional Gauss–Lobatto and Gauss–Legendre rules and the nodal
//! Lagrange basis on Gauss–Lobatto points of the reference interval `[-1, 1]`.
//!
//! Quadrilateral shape functions are tensor products of this basis: local
//! node `(i, j)` carries `L_i(xi) * L_j(eta)`.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Highest polynomial degree supported by the element spaces.
pub const MAX_DEGREE: usize = 12;

const MAX_NEWTON_STEPS: usize = 100;

/// A one-dimensional quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integrates over `[-1, 1]^2` with the tensor product of `self` with itself.
    pub fn integrate_2d(&self, f: impl Fn(T, T) -> T) -> T {
        let mut acc = T::zero();
        for (&y, &wy) in self.points.iter().zip(&self.weights) {
            for (&x, &wx) in self.points.iter().zip(&self.weights) {
                acc = acc + wx * wy * f(x, y);
            }
        }
        acc
    }
}

/// Legendre polynomial `P_n(x)` and its derivative, by the three-term recurrence.
pub fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    if n == 0 {
        return (T::one(), T::zero());
    }
    let mut p_prev = T::one();
    let mut p = x;
    for k in 1..n {
        let kf = T::from_count(k);
        let next = ((T::lit(2.0) * kf + T::one()) * x * p - kf * p_prev) / (kf + T::one());
        p_prev = p;
        p = next;
    }
    let nf = T::from_count(n);
    let one = T::one();
    let dp = if (x * x - one).abs() < T::epsilon() {
        // P_n'(±1) = (±1)^{n-1} n(n+1)/2
        let s = if x > T::zero() || n % 2 == 1 { one } else { -one };
        s * nf * (nf + one) / T::lit(2.0)
    } else {
        nf * (x * p - p_prev) / (x * x - one)
    };
    (p, dp)
}

/// Gauss–Lobatto rule with `n` points (both endpoints included), exact up to degree `2n - 3`.
///
/// Interior nodes are the roots of `P'_{n-1}`, found by Newton iteration from
/// Chebyshev–Gauss–Lobatto initial guesses. Nodes are computed on one half and
/// mirrored so the rule is exactly symmetric.
pub fn gauss_lobatto<T: Real>(n: usize) -> Result<QuadratureRule<T>> {
    if n < 2 {
        return Err(invalid(format!("Gauss-Lobatto rule needs n >= 2, got {n}")));
    }
    let deg = n - 1;
    let degf = T::from_count(deg);
    let two = T::lit(2.0);
    let mut points = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    points[0] = -T::one();
    points[n - 1] = T::one();
    let end_weight = two / (degf * (degf + T::one()));
    weights[0] = end_weight;
    weights[n - 1] = end_weight;

    for k in 1..n.div_ceil(2) {
        // -cos(pi k / deg) lies in the left half for k < n/2
        let mut x = -(T::PI() * T::from_count(k) / degf).cos();
        for _ in 0..MAX_NEWTON_STEPS {
            let (p, dp) = legendre(deg, x);
            // Legendre ODE gives P''
            let d2p = (two * x * dp - degf * (degf + T::one()) * p) / (T::one() - x * x);
            let dx = dp / d2p;
            x = x - dx;
            if dx.abs() <= T::root_tolerance() {
                break;
            }
        }
        let (p, _) = legendre(deg, x);
        let w = end_weight / (p * p);
        points[k] = x;
        weights[k] = w;
        points[n - 1 - k] = -x;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        let mid = n / 2;
        let (p, _) = legendre(deg, T::zero());
        points[mid] = T::zero();
        weights[mid] = end_weight / (p * p);
    }
    Ok(QuadratureRule { points, weights })
}

/// Gauss–Legendre rule with `n` points, exact up to degree `2n - 1`.
pub fn gauss_legendre<T: Real>(n: usize) -> Result<QuadratureRule<T>> {
    if n < 1 {
        return Err(invalid("Gauss-Legendre rule needs n >= 1"));
    }
    let nf = T::from_count(n);
    let mut points = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    for k in 0..n / 2 {
        // k-th root from the left
        let mut x = -(T::PI() * (T::from_count(k) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        for _ in 0..MAX_NEWTON_STEPS {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x = x - dx;
            if dx.abs() <= T::root_tolerance() {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        points[k] = x;
        weights[k] = w;
        points[n - 1 - k] = -x;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre(n, T::zero());
        points[n / 2] = T::zero();
        weights[n / 2] = T::lit(2.0) / (dp * dp);
    }
    Ok(QuadratureRule { points, weights })
}

/// Nodal Lagrange basis of degree `degree` on the Gauss–Lobatto points.
#[derive(Debug, Clone)]
pub struct LagrangeBasis<T> {
    degree: usize,
    nodes: Vec<T>,
    /// `1 / prod_{j != i} (x_i - x_j)`
    inv_denominators: Vec<T>,
}

impl<T: Real> LagrangeBasis<T> {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("shape basis degree must be >= 1"));
        }
        if degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree {
                degree,
                max: MAX_DEGREE,
            });
        }
        let nodes = gauss_lobatto::<T>(degree + 1)?.points;
        let inv_denominators = (0..=degree)
            .map(|i| {
                let d = (0..=degree)
                    .filter(|&j| j != i)
                    .fold(T::one(), |acc, j| acc * (nodes[i] - nodes[j]));
                T::one() / d
            })
            .collect();
        Ok(Self {
            degree,
            nodes,
            inv_denominators,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Value and first derivative of basis function `i` at `x`.
    pub fn eval(&self, i: usize, x: T) -> Result<(T, T)> {
        if i > self.degree {
            return Err(invalid(format!(
                "basis index {i} out of range for degree {}",
                self.degree
            )));
        }
        let (v, d, _) = self.eval_one(i, x);
        Ok((v, d))
    }

    /// Value, first and second derivative of basis function `i` at `x`.
    fn eval_one(&self, i: usize, x: T) -> (T, T, T) {
        let n = self.nodes.len();
        let diffs: Vec<T> = self.nodes.iter().map(|&xj| x - xj).collect();
        let mut value = T::one();
        for (j, &dj) in diffs.iter().enumerate() {
            if j != i {
                value = value * dj;
            }
        }
        let mut first = T::zero();
        let mut second = T::zero();
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut prod_k = T::one();
            for (j, &dj) in diffs.iter().enumerate() {
                if j != i && j != k {
                    prod_k = prod_k * dj;
                }
            }
            first = first + prod_k;
            for l in 0..n {
                if l == i || l == k {
                    continue;
                }
                let mut prod_kl = T::one();
                for (j, &dj) in diffs.iter().enumerate() {
                    if j != i && j != k && j != l {
                        prod_kl = prod_kl * dj;
                    }
                }
                second = second + prod_kl;
            }
        }
        let s = self.inv_denominators[i];
        // exact Kronecker property at the own node
        let value = if diffs[i] == T::zero() { T::one() } else { value * s };
        (value, first * s, second * s)
    }

    /// Fills `values[i]` and `derivs[i]` for every basis function at `x`.
    pub fn eval_all(&self, x: T, values: &mut [T], derivs: &mut [T]) {
        for i in 0..self.len() {
            let (v, d, _) = self.eval_one(i, x);
            values[i] = v;
            derivs[i] = d;
        }
    }

    /// Values, first and second derivatives of every basis function at `x`.
    pub fn tabulate(&self, x: T) -> [Vec<T>; 3] {
        let mut out = [
            Vec::with_capacity(self.len()),
            Vec::with_capacity(self.len()),
            Vec::with_capacity(self.len()),
        ];
        for i in 0..self.len() {
            let (v, d, dd) = self.eval_one(i, x);
            out[0].push(v);
            out[1].push(d);
            out[2].push(dd);
        }
        out
    }

    /// Evaluates the interpolant with nodal values `coeffs` at `x`.
    pub fn interpolate(&self, coeffs: &[T], x: T) -> T {
        (0..self.len())
            .map(|i| coeffs[i] * self.eval_one(i, x).0)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lobatto_two_and_three_points() {
        let r = gauss_lobatto::<f64>(2).unwrap();
        assert_eq!(r.points, vec![-1.0, 1.0]);
        assert_eq!(r.weights, vec![1.0, 1.0]);
        let r = gauss_lobatto::<f64>(3).unwrap();
        assert_abs_diff_eq!(r.points[1], 0.0);
        assert_abs_diff_eq!(r.weights[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[1], 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn lobatto_rejects_small_n() {
        assert!(matches!(gauss_lobatto::<f64>(1), Err(Error::InvalidArgument(_))));
        assert!(matches!(gauss_legendre::<f64>(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lobatto_is_exactly_symmetric() {
        for n in 2..=13 {
            let r = gauss_lobatto::<f64>(n).unwrap();
            for k in 0..n {
                assert_eq!(r.points[k], -r.points[n - 1 - k]);
            }
        }
    }

    #[test]
    fn single_point_legendre_is_midpoint() {
        let r = gauss_legendre::<f64>(1).unwrap();
        assert_eq!(r.points, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);
    }

    #[test]
    fn f32_rules_work() {
        let r = gauss_lobatto::<f32>(4).unwrap();
        assert!((r.points[1] + 1.0 / 5f32.sqrt()).abs() < 1e-6);
        let s: f32 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-6);
    }

    #[test]
    fn basis_rejects_bad_degree_and_index() {
        assert!(LagrangeBasis::<f64>::new(0).is_err());
        assert!(matches!(
            LagrangeBasis::<f64>::new(13),
            Err(Error::UnsupportedDegree { .. })
        ));
        let b = LagrangeBasis::<f64>::new(2).unwrap();
        assert!(b.eval(3, 0.0).is_err());
    }

    #[test]
    fn second_derivative_of_quadratic_basis() {
        // nodes -1, 0, 1: L_1(x) = 1 - x^2
        let b = LagrangeBasis::<f64>::new(2).unwrap();
        let [v, d, dd] = b.tabulate(0.3);
        assert_abs_diff_eq!(v[1], 1.0 - 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], -0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(dd[1], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_endpoint_derivative() {
        for n in 1..8 {
            let (_, d) = legendre::<f64>(n, 1.0);
            assert_abs_diff_eq!(d, (n * (n + 1)) as f64 / 2.0, epsilon = 1e-12);
            let (_, d) = legendre::<f64>(n, -1.0);
            let s = if n % 2 == 1 { 1.0 } else { -1.0 };
            assert_abs_diff_eq!(d, s * (n * (n + 1)) as f64 / 2.0, epsilon = 1e-12);
        }
    }
}
