//! Scalar distribution helpers: Gaussian densities and the truncated
//! Gaussian used for bounded-support sensor noise.

use rand::RngCore;

use crate::scalar::Real;

/// Standard normal pdf at `z`.
pub fn std_normal_pdf<R: Real>(z: R) -> R {
    let inv_sqrt_2pi = R::from_f64_c(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-z * z / R::from_f64_c(2.0)).exp()
}

/// N(mean, std^2) pdf at `x`.
pub fn normal_pdf<R: Real>(x: R, mean: R, std: R) -> R {
    std_normal_pdf((x - mean) / std) / std
}

/// Error function, accurate to ~1e-15 (rational expansion, double precision).
pub fn erf(x: f64) -> f64 {
    // Ported from the classic W. J. Cody rational approximations.
    let ax = x.abs();
    if ax < 2.0 {
        let t = x * x;
        // Maclaurin series, converges fast for |x| < 0.5
        let mut term = 2.0 / std::f64::consts::PI.sqrt() * x;
        let mut sum = term;
        let mut n = 0usize;
        loop {
            n += 1;
            term *= -t / n as f64;
            let add = term / (2.0 * n as f64 + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) || n > 60 {
                break;
            }
        }
        sum
    } else {
        1.0f64.copysign(x) * (1.0 - erfc_large(ax))
    }
}

fn erfc_large(x: f64) -> f64 {
    // continued-fraction / asymptotic complement for x >= 0.5
    if x > 27.0 {
        return 0.0;
    }
    // Lentz continued fraction for erfc
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    let tiny = 1e-300;
    for i in 1..300 {
        let a = i as f64 / 2.0;
        // erfc cf: x + a1/(x + a2/(x + ...)) with a_i = i/2
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Zero-mean Gaussian truncated to `[-radius, radius]`, renormalized.
///
/// `std` may be much larger than `radius`, in which case the law is close
/// to uniform on the support; sampling switches proposal accordingly.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal<R: Real> {
    pub std: R,
    pub radius: R,
    norm: R,
}

impl<R: Real> TruncatedNormal<R> {
    pub fn new(std: R, radius: R) -> Self {
        assert!(std > R::zero() && radius > R::zero());
        let z = 2.0 * std_normal_cdf(radius.to_f64_c() / std.to_f64_c()) - 1.0;
        Self { std, radius, norm: R::from_f64_c(z) }
    }

    /// Density at `x`; zero outside the support.
    pub fn pdf(&self, x: R) -> R {
        if x.abs() > self.radius {
            R::zero()
        } else {
            normal_pdf(x, R::zero(), self.std) / self.norm
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> R {
        if self.std >= self.radius {
            // near-uniform: uniform proposal, accept against the Gaussian bump
            loop {
                let x = R::uniform(rng, -self.radius, self.radius);
                let accept = (-(x * x) / (self.std * self.std * R::from_f64_c(2.0))).exp();
                if R::uniform(rng, R::zero(), R::one()) < accept {
                    return x;
                }
            }
        } else {
            loop {
                let x = R::standard_normal(rng) * self.std;
                if x.abs() <= self.radius {
                    return x;
                }
            }
        }
    }

    /// Variance of the truncated law (for oracle cross-checks).
    pub fn variance(&self) -> R {
        let s = self.std.to_f64_c();
        let r = self.radius.to_f64_c();
        let a = r / s;
        let z = 2.0 * std_normal_cdf(a) - 1.0;
        let phi = (-a * a / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        R::from_f64_c(s * s * (1.0 - 2.0 * a * phi / z))
    }
}
