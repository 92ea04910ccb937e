//! Gauss–Legendre rules and a small adaptive integrator.

use num_complex::Complex64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Adaptive bisection quadrature for vector-valued integrands.
pub struct Adaptive {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub tol: f64,
    pub max_depth: usize,
}

impl Adaptive {
    pub fn new(order: usize, tol: f64) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self {
            nodes,
            weights,
            tol,
            max_depth: 30,
        }
    }

    fn panel<const D: usize>(
        &self,
        f: &mut impl FnMut(f64) -> [Complex64; D],
        a: f64,
        b: f64,
    ) -> [Complex64; D] {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [Complex64::new(0.0, 0.0); D];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            for (s, vi) in acc.iter_mut().zip(v) {
                *s += vi * (w * half);
            }
        }
        acc
    }

    /// Integral of `f` over `[a, b]`, refined until each panel agrees with
    /// its two halves to `tol · (scale + |panel value|)` in every component.
    pub fn integrate<const D: usize>(
        &self,
        mut f: impl FnMut(f64) -> [Complex64; D],
        a: f64,
        b: f64,
        scale: f64,
    ) -> [Complex64; D] {
        let whole = self.panel(&mut f, a, b);
        self.recurse(&mut f, a, b, whole, scale, 0)
    }

    fn recurse<const D: usize>(
        &self,
        f: &mut impl FnMut(f64) -> [Complex64; D],
        a: f64,
        b: f64,
        whole: [Complex64; D],
        scale: f64,
        depth: usize,
    ) -> [Complex64; D] {
        let m = 0.5 * (a + b);
        let left = self.panel(f, a, m);
        let right = self.panel(f, m, b);
        let mut converged = true;
        let mut sum = [Complex64::new(0.0, 0.0); D];
        for i in 0..D {
            sum[i] = left[i] + right[i];
            converged &= (sum[i] - whole[i]).norm() <= self.tol * (scale + sum[i].norm());
        }
        if converged || depth >= self.max_depth {
            return sum;
        }
        let l = self.recurse(f, a, m, left, scale, depth + 1);
        let r = self.recurse(f, m, b, right, scale, depth + 1);
        let mut out = [Complex64::new(0.0, 0.0); D];
        for i in 0..D {
            out[i] = l[i] + r[i];
        }
        out
    }
}
