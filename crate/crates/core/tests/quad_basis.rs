use approx::assert_abs_diff_eq;
use biot_hp::quad_basis::{gauss_legendre, gauss_lobatto, LagrangeBasis};

/// Root of `f` on `[a, b]` by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn monomial_integral(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        2.0 / (k as f64 + 1.0)
    }
}

#[test]
fn lobatto_moments_are_exact_up_to_2n_minus_3() {
    for n in 2..=12 {
        let rule = gauss_lobatto::<f64>(n).unwrap();
        assert_eq!(rule.len(), n);
        assert_eq!(rule.points[0], -1.0);
        assert_eq!(rule.points[n - 1], 1.0);
        for k in 0..=(2 * n - 3) {
            let q = rule.integrate(|x| x.powi(k as i32));
            assert_abs_diff_eq!(q, monomial_integral(k), epsilon = 1e-13);
        }
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        assert!(rule.points.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn legendre_moments_are_exact_up_to_2n_minus_1() {
    for n in 1..=12 {
        let rule = gauss_legendre::<f64>(n).unwrap();
        for k in 0..=(2 * n - 1) {
            assert_abs_diff_eq!(rule.integrate(|x| x.powi(k as i32)), monomial_integral(k), epsilon = 1e-13);
        }
    }
}

#[test]
fn four_point_lobatto_rule() {
    // interior points are roots of P3'(x) = (15 x^2 - 3) / 2
    let root = bisect(|x| 7.5 * x * x - 1.5, 0.0, 1.0);
    let rule = gauss_lobatto::<f64>(4).unwrap();
    assert_abs_diff_eq!(rule.points[2], root, epsilon = 1e-14);
    assert_abs_diff_eq!(rule.points[1], -root, epsilon = 1e-14);
    assert_abs_diff_eq!(root, 1.0 / 5f64.sqrt(), epsilon = 1e-14);
    for (w, e) in rule.weights.iter().zip([1.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0, 1.0 / 6.0]) {
        assert_abs_diff_eq!(*w, e, epsilon = 1e-14);
    }
}

#[test]
fn three_point_lobatto_and_two_point_gauss() {
    let l = gauss_lobatto::<f64>(3).unwrap();
    assert_abs_diff_eq!(l.points[1], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(l.weights[0], 1.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(l.weights[1], 4.0 / 3.0, epsilon = 1e-15);
    let g = gauss_legendre::<f64>(2).unwrap();
    assert_abs_diff_eq!(g.points[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(g.weights[0], 1.0, epsilon = 1e-15);
    let g3 = gauss_legendre::<f64>(3).unwrap();
    assert_abs_diff_eq!(g3.integrate(|x| x.powi(4)), 0.4, epsilon = 1e-15);
}

/// Barycentric evaluation of the Lagrange polynomials on `nodes`.
fn barycentric(nodes: &[f64], x: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..nodes.len())
        .map(|j| 1.0 / (0..nodes.len()).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product::<f64>())
        .collect();
    if let Some(i) = nodes.iter().position(|&n| n == x) {
        return (0..nodes.len()).map(|j| if j == i { 1.0 } else { 0.0 }).collect();
    }
    let terms: Vec<f64> = (0..nodes.len()).map(|j| w[j] / (x - nodes[j])).collect();
    let s: f64 = terms.iter().sum();
    terms.iter().map(|t| t / s).collect()
}

#[test]
fn basis_matches_barycentric_formula() {
    for p in 1..=12 {
        let basis = LagrangeBasis::<f64>::new(p).unwrap();
        let nodes = basis.nodes().to_vec();
        for k in 0..50 {
            let x = -1.0 + 2.0 * (k as f64 + 0.37) / 50.0;
            let want = barycentric(&nodes, x);
            let [v, d, _] = basis.tabulate(x);
            for i in 0..=p {
                assert_abs_diff_eq!(v[i], want[i], epsilon = 1e-11);
            }
            assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d.iter().sum::<f64>(), 0.0, epsilon = 1e-9);
        }
        for (j, &xj) in nodes.iter().enumerate() {
            for i in 0..=p {
                let (v, _) = basis.eval(i, xj).unwrap();
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn basis_derivative_matches_finite_differences() {
    let basis = LagrangeBasis::<f64>::new(5).unwrap();
    let h = 1e-6;
    for i in 0..=5 {
        let x = 0.3;
        let (_, d) = basis.eval(i, x).unwrap();
        let fd = (basis.eval(i, x + h).unwrap().0 - basis.eval(i, x - h).unwrap().0) / (2.0 * h);
        assert_abs_diff_eq!(d, fd, epsilon = 1e-7);
    }
}

#[test]
fn rules_reject_unsupported_sizes() {
    assert!(gauss_lobatto::<f64>(1).is_err());
    assert!(gauss_legendre::<f64>(0).is_err());
    assert!(LagrangeBasis::<f64>::new(0).is_err());
}
