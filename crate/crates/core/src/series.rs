//! Bose-type series `sum_{n>=1} exp(-lambda n) n^(-s)` with controlled tails.
//!
//! Terms below `EM_START` are summed directly. The remainder is either
//! negligible (`lambda * EM_START` large) or replaced by its Euler-Maclaurin
//! expansion, whose tail integral is done by double-exponential quadrature.

/// First index handled by the Euler-Maclaurin tail.
const EM_START: usize = 200;

/// `B_{2j} / (2j)!` for j = 1..=4.
const BERNOULLI_OVER_FACTORIAL: [f64; 4] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
];

/// `sum_{n>=1} exp(-lambda n) n^(-s)` for `lambda >= 0`.
///
/// Returns `+inf` when the series diverges (`lambda == 0`, `s <= 1`).
pub fn bose_series(s: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0 && s.is_finite());
    if lambda == 0.0 && s <= 1.0 {
        return f64::INFINITY;
    }
    let term = |n: f64| (-lambda * n - s * n.ln()).exp();

    let mut head = 0.0;
    for n in 1..EM_START {
        head += term(n as f64);
    }
    let k = EM_START as f64;
    if lambda * k > 45.0 {
        // Remaining terms are below exp(-45) k^-s / (1 - exp(-lambda)).
        let mut n = k;
        loop {
            let t = term(n);
            head += t;
            if t < 1e-18 * head {
                break;
            }
            n += 1.0;
        }
        return head;
    }
    head + euler_maclaurin_tail(s, lambda, k)
}

/// `sum_{n>=k} f(n)` for `f(x) = exp(-lambda x) x^-s`.
fn euler_maclaurin_tail(s: f64, lambda: f64, k: f64) -> f64 {
    let f_k = (-lambda * k - s * k.ln()).exp();
    let mut tail = tail_integral(s, lambda, k) + 0.5 * f_k;
    for (j, coeff) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        tail -= coeff * derivative(s, lambda, k, 2 * j + 1);
    }
    tail
}

/// k-th derivative of `exp(-lambda x) x^-s` at `x`.
fn derivative(s: f64, lambda: f64, x: f64, order: usize) -> f64 {
    // Leibniz rule: d^j x^-s = (-1)^j (s)_j x^(-s-j), d^m exp(-lambda x) = (-lambda)^m exp(-lambda x).
    let base = (-lambda * x).exp();
    let mut total = 0.0;
    let mut binom = 1.0;
    let mut rising = 1.0;
    for j in 0..=order {
        if j > 0 {
            binom *= (order - j + 1) as f64 / j as f64;
            rising *= s + (j - 1) as f64;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let power_term = sign * rising * x.powf(-s - j as f64);
        total += binom * (-lambda).powi((order - j) as i32) * power_term;
    }
    total * base
}

/// `int_k^inf exp(-lambda x) x^-s dx`.
fn tail_integral(s: f64, lambda: f64, k: f64) -> f64 {
    if lambda == 0.0 {
        return k.powf(1.0 - s) / (s - 1.0);
    }
    // x = k e^t maps the half line to [0, inf) with a super-exponentially
    // decaying integrand once z e^t >> 1.
    let z = lambda * k;
    let upper = (50.0 / z).max(1.0).ln() + 5.0;
    let integrand = |t: f64| (-z * t.exp() + (1.0 - s) * t).exp();
    let scale = integrand(0.0).max(1e-300);
    let out = quadrature::double_exponential::integrate(integrand, 0.0, upper, 1e-15 * scale);
    k.powf(1.0 - s) * out.integral
}

/// Riemann zeta for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    bose_series(s, 0.0)
}
