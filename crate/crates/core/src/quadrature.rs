//! Gauss-Legendre quadrature: 1-d nodes via Newton iteration on the Legendre
//! recurrence, extended to axis-aligned boxes by tensor product. Used for
//! kernel moment certification (p <= 3) and the smoothing-bias oracle
//! (p <= 2); the integrands there are smooth and effectively compactly
//! supported, where these rules converge geometrically in the node count.

use crate::summation::CompensatedSum;

/// Legendre polynomial value and derivative at `x` for degree `n`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    // P'_n(x) = n (x P_n - P_{n-1}) / (x^2 - 1), valid away from the endpoints.
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights on [-1, 1], exactly symmetric about 0.
///
/// Nodes are returned in ascending order. Panics if `n == 0`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "node count must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n / 2;
    for i in 0..half {
        // Chebyshev-based initial guess for the i-th positive-side root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre_pair(n, 0.0);
        nodes[half] = 0.0;
        weights[half] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}

/// Visits every node of the tensor Gauss-Legendre grid over the box
/// `[lo, hi]`, calling `visit(point, weight)` with the product weight.
/// Node order is row-major over the per-axis node lists, so the traversal is
/// deterministic.
pub fn for_each_tensor_node<F: FnMut(&[f64], f64)>(
    lo: &[f64],
    hi: &[f64],
    nodes_per_axis: usize,
    mut visit: F,
) {
    let p = lo.len();
    assert_eq!(p, hi.len(), "box bounds must share a dimension");
    assert!(p >= 1, "dimension must be positive");
    let (t, w) = gauss_legendre(nodes_per_axis);
    // Per-axis affine maps t in [-1,1] -> x in [lo_j, hi_j].
    let centers: Vec<f64> = (0..p).map(|j| 0.5 * (lo[j] + hi[j])).collect();
    let scales: Vec<f64> = (0..p).map(|j| 0.5 * (hi[j] - lo[j])).collect();
    let mut index = vec![0usize; p];
    let mut point = vec![0.0; p];
    loop {
        let mut weight = 1.0;
        for j in 0..p {
            point[j] = centers[j] + scales[j] * t[index[j]];
            weight *= scales[j] * w[index[j]];
        }
        visit(&point, weight);
        // Odometer increment over the multi-index.
        let mut axis = p;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < nodes_per_axis {
                break;
            }
            index[axis] = 0;
        }
    }
}

/// Integrates `f` over the box `[lo, hi]` with a tensor Gauss-Legendre rule,
/// accumulating with compensated summation.
pub fn tensor_integrate<F: FnMut(&[f64]) -> f64>(
    lo: &[f64],
    hi: &[f64],
    nodes_per_axis: usize,
    mut f: F,
) -> f64 {
    let mut acc = CompensatedSum::new();
    for_each_tensor_node(lo, hi, nodes_per_axis, |x, w| acc.add(w * f(x)));
    acc.total()
}
