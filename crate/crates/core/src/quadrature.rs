//! Gauss–Legendre rules on [0,1] and d-linear shape functions on the unit cell.

/// Points and weights of the `order`-point Gauss–Legendre rule on [0,1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pts[i] = 0.5 * (1.0 - x);
        pts[n - 1 - i] = 0.5 * (1.0 + x);
        wts[i] = 0.5 * w;
        wts[n - 1 - i] = 0.5 * w;
    }
    (pts, wts)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Tensor-product rule on [0,1]^dim.
#[derive(Debug, Clone)]
pub struct CellRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl CellRule {
    pub fn new(dim: usize, order: usize) -> Self {
        let (p, w) = gauss_legendre(order);
        let count = order.pow(dim as u32);
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for flat in 0..count {
            let mut xi = [0.0; 3];
            let mut wt = 1.0;
            let mut rem = flat;
            for slot in xi.iter_mut().take(dim) {
                let k = rem % order;
                rem /= order;
                *slot = p[k];
                wt *= w[k];
            }
            points.push(xi);
            weights.push(wt);
        }
        CellRule { points, weights }
    }
}

/// Values and reference-cell gradients of the 2^dim corner functions at `xi`.
/// Corner bit `a` selects the upper node along axis `a`.
pub fn shape(dim: usize, xi: &[f64; 3]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let corners = 1usize << dim;
    let mut vals = Vec::with_capacity(corners);
    let mut grads = Vec::with_capacity(corners);
    for c in 0..corners {
        let f = |a: usize| if (c >> a) & 1 == 1 { xi[a] } else { 1.0 - xi[a] };
        let df = |a: usize| if (c >> a) & 1 == 1 { 1.0 } else { -1.0 };
        let mut v = 1.0;
        for a in 0..dim {
            v *= f(a);
        }
        let mut g = [0.0; 3];
        for (a, slot) in g.iter_mut().enumerate().take(dim) {
            let mut t = df(a);
            for b in 0..dim {
                if b != a {
                    t *= f(b);
                }
            }
            *slot = t;
        }
        vals.push(v);
        grads.push(g);
    }
    (vals, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_monomials_exactly() {
        for order in 1..=8 {
            let (p, w) = gauss_legendre(order);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 0..2 * order {
                let q: f64 = p.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "order {order} degree {k}");
            }
            for x in &p {
                assert!(*x > 0.0 && *x < 1.0);
            }
        }
    }

    #[test]
    fn shape_functions_partition_unity() {
        for dim in 1..=3 {
            let xi = [0.3, 0.7, 0.1];
            let (v, g) = shape(dim, &xi);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for a in 0..dim {
                assert!(g.iter().map(|g| g[a]).sum::<f64>().abs() < 1e-15);
            }
            // nodal property at the corners
            for c in 0..1usize << dim {
                let mut corner = [0.0; 3];
                for (a, slot) in corner.iter_mut().enumerate().take(dim) {
                    *slot = ((c >> a) & 1) as f64;
                }
                let (v, _) = shape(dim, &corner);
                for (k, val) in v.iter().enumerate() {
                    assert_eq!(*val, if k == c { 1.0 } else { 0.0 });
                }
            }
        }
    }
}
