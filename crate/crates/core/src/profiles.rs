//! One-dimensional C^2 profiles built from the quintic smoothstep.
//!
//! Every function returns `[value, first derivative, second derivative]`.

/// `S(u) = 6u^5 - 15u^4 + 10u^3`, clamped to 0 below 0 and 1 above 1.
pub fn smoothstep(u: f64) -> [f64; 3] {
    if u <= 0.0 {
        [0.0, 0.0, 0.0]
    } else if u >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let u2 = u * u;
        [
            u2 * u * (10.0 + u * (-15.0 + 6.0 * u)),
            30.0 * u2 * (1.0 - u) * (1.0 - u),
            60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
        ]
    }
}

/// Decreasing profile equal to 1 on `[0, a]` and 0 on `[b, inf)`.
pub fn falloff(s: f64, a: f64, b: f64) -> [f64; 3] {
    let w = b - a;
    let [v, d1, d2] = smoothstep((s - a) / w);
    [1.0 - v, -d1 / w, -d2 / (w * w)]
}

/// Increasing ramp equal to 0 on `(-inf, a]` and 1 on `[b, inf)`.
pub fn ramp(s: f64, a: f64, b: f64) -> [f64; 3] {
    let w = b - a;
    let [v, d1, d2] = smoothstep((s - a) / w);
    [v, d1 / w, d2 / (w * w)]
}

/// Chain rule for `f(g(x))` given the jets of both.
pub fn compose(outer: [f64; 3], inner: [f64; 3]) -> [f64; 3] {
    [
        outer[0],
        outer[1] * inner[1],
        outer[2] * inner[1] * inner[1] + outer[1] * inner[2],
    ]
}

/// Jet of `s -> s^(1/k)` for `s > 0`.
pub fn root(s: f64, k: f64) -> [f64; 3] {
    let e = 1.0 / k;
    let v = s.powf(e);
    [v, e * v / s, e * (e - 1.0) * v / (s * s)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(f64) -> [f64; 3], s: f64) {
        let h = 1e-5;
        let [_, d1, d2] = f(s);
        let num1 = (f(s + h)[0] - f(s - h)[0]) / (2.0 * h);
        let num2 = (f(s + h)[1] - f(s - h)[1]) / (2.0 * h);
        assert!((d1 - num1).abs() < 1e-6, "d1 at {s}");
        assert!((d2 - num2).abs() < 1e-5, "d2 at {s}");
    }

    #[test]
    fn derivatives_are_consistent() {
        for &s in &[0.1, 0.37, 0.5, 0.81] {
            fd_check(smoothstep, s);
        }
        for &s in &[1.2, 1.5, 1.9] {
            fd_check(|s| falloff(s, 1.0, 2.0), s);
        }
        for &s in &[0.3, 0.5, 0.7] {
            fd_check(|s| ramp(s, 0.25, 0.75), s);
        }
        fd_check(|s| root(s, 4.0), 0.7);
        fd_check(|s| compose(falloff(root(s, 4.0)[0], 1.0, 2.0), root(s, 4.0)), 3.0);
    }

    #[test]
    fn end_values() {
        assert_eq!(falloff(0.5, 1.0, 2.0), [1.0, 0.0, 0.0]);
        assert_eq!(falloff(2.5, 1.0, 2.0), [0.0, 0.0, 0.0]);
        assert_eq!(ramp(0.2, 0.25, 0.75)[0], 0.0);
        assert_eq!(ramp(0.8, 0.25, 0.75)[0], 1.0);
    }
}
