//! Reference computations that share no code with [`crate::analytic`]:
//! the factorial-sum Erlang-B formula, a numerically solved birth-death
//! generator, and bisection for the forwarding fixed point.

use nalgebra::{DMatrix, DVector};

use crate::analytic::SystemParams;

/// `(rho^c / c!) / sum_{k<=c} rho^k / k!` with explicit powers and factorials.
pub fn erlang_b_factorial(rho: f64, c: u32) -> f64 {
    let mut factorial = 1.0f64;
    let mut sum = 0.0f64;
    let mut last = 1.0f64;
    for k in 0..=c {
        if k > 0 {
            factorial *= f64::from(k);
        }
        last = rho.powi(k as i32) / factorial;
        sum += last;
    }
    last / sum
}

/// Stationary distribution of the number of busy threads in a `C`-thread
/// loss system with offered load `rho`, obtained by solving `pi Q = 0`,
/// `sum pi = 1` for the generator `Q`.
pub fn loss_system_stationary(rho: f64, c: u32) -> Vec<f64> {
    let n = c as usize + 1;
    let mu = 1.0;
    let lambda = rho * mu;
    let mut q = DMatrix::<f64>::zeros(n, n);
    for busy in 0..n {
        if busy + 1 < n {
            q[(busy, busy + 1)] = lambda;
        }
        if busy > 0 {
            q[(busy, busy - 1)] = busy as f64 * mu;
        }
        let out: f64 = q.row(busy).iter().sum();
        q[(busy, busy)] = -out;
    }
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).expect("birth-death generator is irreducible");
    pi.iter().copied().collect()
}

/// Root of `lambda - lambda_in (1 - B(lambda/mu, C))` on `[0, lambda_in]`.
pub fn bisect_forwarding_rate(params: &SystemParams) -> f64 {
    let f = |l: f64| l - params.lambda_in * (1.0 - erlang_b_factorial(l / params.mu, params.c_threads));
    let (mut lo, mut hi) = (0.0, params.lambda_in);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * params.lambda_in {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_formula_by_hand() {
        let rho: f64 = 4.0 / 3.0;
        let expected = (rho * rho / 2.0) / (1.0 + rho + rho * rho / 2.0);
        assert!((erlang_b_factorial(rho, 2) - expected).abs() < 1e-15);
        assert_eq!(erlang_b_factorial(3.0, 0), 1.0);
    }

    #[test]
    fn stationary_distribution_is_truncated_poisson() {
        let rho: f64 = 2.5;
        let pi = loss_system_stationary(rho, 4);
        let weights: Vec<f64> = [1.0, 2.5, 3.125, 2.604166666666667, 1.627604166666667].to_vec();
        let total: f64 = weights.iter().sum();
        for (p, w) in pi.iter().zip(&weights) {
            assert!((p - w / total).abs() < 1e-13);
        }
    }

    #[test]
    fn bisection_brackets_root() {
        let p = SystemParams::default();
        let l = bisect_forwarding_rate(&p);
        let g = p.lambda_in * (1.0 - erlang_b_factorial(l / p.mu, p.c_threads));
        assert!((l - g).abs() < 1e-10);
    }
}
