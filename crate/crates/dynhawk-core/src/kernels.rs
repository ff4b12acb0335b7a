//! Triggering kernel families for excitation between events.
//!
//! Each family provides the kernel value g and the closed-form definite
//! integral of g over an interval of its (possibly time-rescaled) argument:
//!
//! ```text
//! exponential   g(x) = a exp(-b x)            G(x) = -(a/b) exp(-b x)
//! power law     g(x) = a b / (a + b x)^(p+1)  G(x) = -a / (p (a + b x)^p)
//! Rayleigh      g(x) = a x exp(-b x^2)        G(x) = -(a/2b) exp(-b x^2)
//! ```
//!
//! with a = excitation weight (>= 0), b = decay (> 0), and p > 1 for the
//! power law. `integral(x0, x1) = G(x1) - G(x0)` is evaluated directly from
//! the difference form, never by materializing an antiderivative constant.
//!
//! The power law is kept in exactly this parameterization (note that the
//! weight also appears inside the denominator, so at x = 0 the value is
//! b / a^p and the total mass is a^(1-p) / p). It requires a > 0 when
//! evaluated at x = 0.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Kernel family selector. Serialized as `{"family": "exp" | "pwl" | "ray"}`
/// with the power-law exponent stored alongside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum KernelSpec {
    #[serde(rename = "exp")]
    Exponential,
    #[serde(rename = "pwl")]
    PowerLaw {
        #[serde(rename = "p", default = "default_power_exponent")]
        exponent: f64,
    },
    #[serde(rename = "ray")]
    Rayleigh,
}

fn default_power_exponent() -> f64 {
    2.0
}

impl KernelSpec {
    /// Power law with the default exponent p = 2.
    pub fn power_law() -> Self {
        KernelSpec::PowerLaw { exponent: 2.0 }
    }

    /// Short lowercase name used by the CLI and in sweep tables.
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Exponential => "exp",
            KernelSpec::PowerLaw { .. } => "pwl",
            KernelSpec::Rayleigh => "ray",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::PowerLaw { exponent } = self {
            if !(*exponent > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "power-law exponent must be > 1, got {exponent}"
                )));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(KernelSpec::Exponential),
            "pwl" => Ok(KernelSpec::power_law()),
            "ray" => Ok(KernelSpec::Rayleigh),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel family '{other}' (expected exp, pwl, or ray)"
            ))),
        }
    }
}

/// Constrained kernel parameters for one (target, source) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Excitation weight, >= 0.
    pub alpha: f64,
    /// Decay rate, > 0.
    pub beta: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel weight must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel decay must be > 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Kernel value g(delta), generic over plain values and tape variables.
pub fn value_generic<S: Scalar>(spec: KernelSpec, alpha: S, beta: S, delta: S) -> S {
    match spec {
        KernelSpec::Exponential => alpha * (-(beta * delta)).exp(),
        KernelSpec::PowerLaw { exponent } => {
            alpha * beta * (alpha + beta * delta).powf_const(-(exponent + 1.0))
        }
        KernelSpec::Rayleigh => alpha * delta * (-(beta * delta * delta)).exp(),
    }
}

/// Definite integral of g over `[x0, x1]` of the kernel argument, generic
/// over plain values and tape variables. Requires `0 <= x0 <= x1`; the
/// result is then non-negative. `x1` may be infinite in the `f64`
/// instantiation (total mass).
pub fn integral_generic<S: Scalar>(spec: KernelSpec, alpha: S, beta: S, x0: S, x1: S) -> S {
    match spec {
        KernelSpec::Exponential => {
            alpha / beta * ((-(beta * x0)).exp() - (-(beta * x1)).exp())
        }
        KernelSpec::PowerLaw { exponent } => {
            alpha.mul_const(1.0 / exponent)
                * ((alpha + beta * x0).powf_const(-exponent)
                    - (alpha + beta * x1).powf_const(-exponent))
        }
        KernelSpec::Rayleigh => {
            alpha / beta.mul_const(2.0)
                * ((-(beta * x0 * x0)).exp() - (-(beta * x1 * x1)).exp())
        }
    }
}

/// Kernel value g(delta) with argument and parameter validation.
pub fn kernel_value(spec: KernelSpec, params: KernelParams, delta: f64) -> Result<f64> {
    spec.validate()?;
    params.validate()?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel argument must be >= 0, got {delta}"
        )));
    }
    Ok(value_generic(spec, params.alpha, params.beta, delta))
}

/// Definite integral of g over `[a, b]` with validation. `b` may be
/// `f64::INFINITY` to obtain the tail mass.
pub fn kernel_integral(spec: KernelSpec, params: KernelParams, a: f64, b: f64) -> Result<f64> {
    spec.validate()?;
    params.validate()?;
    if !(a >= 0.0 && b >= a) {
        return Err(Error::InvalidParameter(format!(
            "kernel integral bounds must satisfy 0 <= a <= b, got [{a}, {b}]"
        )));
    }
    Ok(integral_generic(spec, params.alpha, params.beta, a, b))
}

/// Total kernel mass, the integral of g over `[0, inf)`. Used for branching
/// diagnostics before simulation.
pub fn kernel_mass(spec: KernelSpec, params: KernelParams) -> Result<f64> {
    kernel_integral(spec, params, 0.0, f64::INFINITY)
}

/// Supremum of g over arguments `>= delta_min`. Exact per family: the
/// exponential and power-law kernels are non-increasing, the Rayleigh kernel
/// peaks at 1/sqrt(2b). Used to build thinning upper bounds.
pub fn kernel_sup_after(spec: KernelSpec, params: KernelParams, delta_min: f64) -> f64 {
    let at = |d: f64| value_generic(spec, params.alpha, params.beta, d);
    match spec {
        KernelSpec::Exponential | KernelSpec::PowerLaw { .. } => at(delta_min),
        KernelSpec::Rayleigh => {
            let peak = 1.0 / (2.0 * params.beta).sqrt();
            if delta_min >= peak {
                at(delta_min)
            } else {
                at(peak)
            }
        }
    }
}
