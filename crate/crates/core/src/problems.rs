//! Registry of analytical test problems.
//!
//! Every problem supplies the source `f`, its derivatives `f_t` and `f_xx`
//! (needed by the elliptic reformulation), the desired state, the initial
//! state and, where known, the exact optimal pair `(y, u)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

/// Closed-form data of a registered problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemData {
    /// All data identically zero.
    Zero,
    /// Exact state `sin(πx) atan((t - 1/2)/ε)` with a steep layer at `t = 1/2`
    /// (valid for `ν = α = 1`, `μ = 0`).
    AtanLayer { epsilon: f64 },
    /// Exact state `10 sin(πx) exp(-((t - 1/2)/ε)²)`, control `x(x-1)(t-1)`,
    /// with a depletion term (valid for `α = 1`).
    GaussianPulse { epsilon: f64 },
}

impl ProblemData {
    pub fn source(&self, nu: f64, mu: f64, t: f64, x: f64) -> f64 {
        match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { epsilon } => {
                let s = (PI * x).sin();
                let d = t * t - t + epsilon * epsilon + 0.25;
                s * (epsilon / d + PI * PI * ((t - 0.5) / epsilon).atan() + (PI * t).sin())
            }
            ProblemData::GaussianPulse { epsilon } => {
                let p = Pulse::new(epsilon, t, x);
                p.y * p.growth(nu, mu) - p.q * (t - 1.0)
            }
        }
    }

    pub fn source_dt(&self, nu: f64, mu: f64, t: f64, x: f64) -> f64 {
        match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { epsilon } => {
                let s = (PI * x).sin();
                let d = t * t - t + epsilon * epsilon + 0.25;
                s * (-epsilon * (2.0 * t - 1.0) / (d * d)
                    + PI * PI * epsilon / d
                    + PI * (PI * t).cos())
            }
            ProblemData::GaussianPulse { epsilon } => {
                let p = Pulse::new(epsilon, t, x);
                p.y * (p.h * p.growth(nu, mu) - 2.0 / (epsilon * epsilon)) - p.q
            }
        }
    }

    pub fn source_dxx(&self, nu: f64, mu: f64, t: f64, x: f64) -> f64 {
        match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { .. } => -PI * PI * self.source(nu, mu, t, x),
            ProblemData::GaussianPulse { epsilon } => {
                let p = Pulse::new(epsilon, t, x);
                -PI * PI * p.y * p.growth(nu, mu) - 2.0 * (t - 1.0)
            }
        }
    }

    pub fn desired_state(&self, nu: f64, mu: f64, t: f64, x: f64) -> f64 {
        match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { epsilon } => {
                (PI * x).sin()
                    * (((t - 0.5) / epsilon).atan() + PI * (PI * t).cos()
                        - PI * PI * (PI * t).sin())
            }
            ProblemData::GaussianPulse { epsilon } => {
                let p = Pulse::new(epsilon, t, x);
                p.y - p.q - 2.0 * nu * (t - 1.0) - mu * p.q * (t - 1.0)
            }
        }
    }

    pub fn initial_state(&self, x: f64) -> f64 {
        match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { epsilon } => (PI * x).sin() * (-1.0 / (2.0 * epsilon)).atan(),
            ProblemData::GaussianPulse { epsilon } => {
                10.0 * (PI * x).sin() * (-1.0 / (4.0 * epsilon * epsilon)).exp()
            }
        }
    }

    pub fn has_reference(&self) -> bool {
        true
    }

    pub fn exact_state(&self, t: f64, x: f64) -> Option<f64> {
        Some(match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { epsilon } => (PI * x).sin() * ((t - 0.5) / epsilon).atan(),
            ProblemData::GaussianPulse { epsilon } => Pulse::new(epsilon, t, x).y,
        })
    }

    pub fn exact_control(&self, t: f64, x: f64) -> Option<f64> {
        Some(match *self {
            ProblemData::Zero => 0.0,
            ProblemData::AtanLayer { .. } => -(PI * x).sin() * (PI * t).sin(),
            ProblemData::GaussianPulse { .. } => x * (x - 1.0) * (t - 1.0),
        })
    }
}

/// Shared subexpressions of the Gaussian-pulse problem.
struct Pulse {
    /// exact state
    y: f64,
    /// `y_t / y`
    h: f64,
    /// `x(x-1)`
    q: f64,
}

impl Pulse {
    fn new(epsilon: f64, t: f64, x: f64) -> Self {
        let z = (t - 0.5) / epsilon;
        Self {
            y: 10.0 * (PI * x).sin() * (-z * z).exp(),
            h: -2.0 * (t - 0.5) / (epsilon * epsilon),
            q: x * (x - 1.0),
        }
    }

    /// `(y_t - ν y_xx - μ y) / y`
    fn growth(&self, nu: f64, mu: f64) -> f64 {
        self.h + nu * PI * PI - mu
    }
}

/// Layer problem (`ν = α = 1`, `μ = 0`, `T = 1`).
pub fn make_test1(epsilon: f64) -> Result<ProblemSpec> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    ProblemSpec::new("test1", 1.0, 0.0, 1.0, 1.0, ProblemData::AtanLayer { epsilon })
}

/// Depletion problem (`α = 1`, `T = 1`); the source is built so that the
/// stated pulse and control are the exact optimal pair.
pub fn make_test2(nu: f64, mu: f64, epsilon: f64) -> Result<ProblemSpec> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    ProblemSpec::new("test2", nu, mu, 1.0, 1.0, ProblemData::GaussianPulse { epsilon })
}

pub fn make_zero_problem() -> ProblemSpec {
    ProblemSpec::new("zero", 1.0, 0.0, 1.0, 1.0, ProblemData::Zero)
        .expect("zero problem parameters are valid")
}

pub const TEST1_EPSILON: f64 = 1e-3;
pub const TEST2_NU: f64 = 0.1;
pub const TEST2_MU: f64 = 3.0;
pub const TEST2_EPSILON: f64 = 1e-2;

/// A registered problem selected by name plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProblemDescriptor {
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
}

impl ProblemDescriptor {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let allowed: &[&str] = match self.name.as_str() {
            "zero" => &[],
            "test1" => &["epsilon"],
            "test2" => &["nu", "mu", "epsilon"],
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown problem {other:?} (expected zero, test1 or test2)"
                )))
            }
        };
        if let Some(key) = self.parameters.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!(
                "problem {:?} has no parameter {key:?}",
                self.name
            )));
        }
        let get = |key: &str, default: f64| self.parameters.get(key).copied().unwrap_or(default);
        match self.name.as_str() {
            "zero" => Ok(make_zero_problem()),
            "test1" => make_test1(get("epsilon", TEST1_EPSILON)),
            _ => make_test2(
                get("nu", TEST2_NU),
                get("mu", TEST2_MU),
                get("epsilon", TEST2_EPSILON),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice() -> impl Iterator<Item = (f64, f64)> {
        (0..20).flat_map(|a| (0..20).map(move |b| (a as f64 / 19.0, b as f64 / 19.0)))
    }

    #[test]
    fn test1_point_values() {
        let p = make_test1(1e-3).unwrap();
        assert!((p.exact_control(0.5, 0.5).unwrap() + 1.0).abs() < 1e-15);
        // atan(-500) = -(π/2 - atan(1/500)), with the small arctangent from its series
        let z: f64 = 1.0 / 500.0;
        let series = z - z.powi(3) / 3.0 + z.powi(5) / 5.0 - z.powi(7) / 7.0;
        let expected = -(PI / 2.0 - series);
        assert!((p.initial_state(0.5) - expected).abs() < 1e-14);
        assert!((p.initial_state(0.5) + 1.56880).abs() < 1e-5);
    }

    #[test]
    fn test1_state_equation_is_satisfied_by_exact_pair() {
        let eps = 1e-3;
        let p = make_test1(eps).unwrap();
        for (t, x) in lattice() {
            let s = (PI * x).sin();
            let y_t = s * (1.0 / eps) / (1.0 + ((t - 0.5) / eps).powi(2));
            let y_xx = -PI * PI * p.exact_state(t, x).unwrap();
            let r = y_t - p.nu() * y_xx - p.source(t, x) - p.exact_control(t, x).unwrap();
            assert!(r.abs() <= 1e-10 * (1.0 + y_t.abs()), "residual {r} at ({t},{x})");
        }
    }

    #[test]
    fn test1_adjoint_consistency() {
        // p = -α u must solve -p_t - ν p_xx = y - y_d with p(T) = 0.
        let p = make_test1(1e-3).unwrap();
        for (t, x) in lattice() {
            let adj = -p.exact_control(t, x).unwrap();
            let adj_t = (PI * x).sin() * PI * (PI * t).cos();
            let adj_xx = -PI * PI * adj;
            let r = -adj_t - adj_xx - (p.exact_state(t, x).unwrap() - p.desired_state(t, x));
            assert!(r.abs() < 1e-10);
        }
        assert!(p.exact_control(1.0, 0.3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn test2_point_values_and_stability_flag() {
        let p = make_test2(0.1, 3.0, 1e-2).unwrap();
        assert_eq!(p.exact_control(1.0, 0.5).unwrap(), 0.0);
        assert!(!p.estimator_condition_ok());
        assert!(make_test2(0.1, 0.9, 1e-2).unwrap().estimator_condition_ok());
        assert!(make_test2(0.1, 3.0, 0.0).is_err());
        assert!(make_test2(-0.1, 3.0, 0.01).is_err());
        assert!(make_test1(0.0).is_err());
    }

    #[test]
    fn test2_exact_pair_satisfies_state_and_adjoint() {
        let (nu, mu, eps) = (0.1, 3.0, 1e-2);
        let p = make_test2(nu, mu, eps).unwrap();
        for (t, x) in lattice() {
            let y = p.exact_state(t, x).unwrap();
            let y_t = y * (-2.0 * (t - 0.5) / (eps * eps));
            let y_xx = -PI * PI * y;
            let u = p.exact_control(t, x).unwrap();
            let r = y_t - nu * y_xx - mu * y - p.source(t, x) - u;
            assert!(r.abs() <= 1e-10 * (1.0 + y_t.abs()));

            let adj = -u;
            let adj_t = -x * (x - 1.0);
            let adj_xx = -2.0 * (t - 1.0);
            let r = -adj_t - nu * adj_xx - mu * adj - (y - p.desired_state(t, x));
            assert!(r.abs() < 1e-10);
        }
        assert!((p.initial_state(0.3) - p.exact_state(0.0, 0.3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let problems = [make_test1(1e-3).unwrap(), make_test2(0.1, 3.0, 1e-2).unwrap()];
        for p in &problems {
            for (t, x) in lattice() {
                let x = 0.05 + 0.9 * x;
                let ht = 1e-6 * match p.data() {
                    ProblemData::AtanLayer { .. } => 1e-2,
                    _ => 1.0,
                };
                let fd_t = (p.source(t + ht, x) - p.source(t - ht, x)) / (2.0 * ht);
                let an_t = p.source_dt(t, x);
                assert!(
                    (fd_t - an_t).abs() <= 1e-6 * (1.0 + an_t.abs()),
                    "{}: f_t {an_t} vs {fd_t} at ({t},{x})",
                    p.name()
                );
                let hx = 1e-4;
                let fd_xx =
                    (p.source(t, x + hx) - 2.0 * p.source(t, x) + p.source(t, x - hx)) / (hx * hx);
                let an_xx = p.source_dxx(t, x);
                assert!(
                    (fd_xx - an_xx).abs() <= 1e-5 * (1.0 + an_xx.abs()),
                    "{}: f_xx {an_xx} vs {fd_xx} at ({t},{x})",
                    p.name()
                );
            }
        }
    }

    #[test]
    fn registry_builds_by_name() {
        let p = ProblemDescriptor::new("test2").with("mu", 0.5).build().unwrap();
        assert_eq!(p.mu(), 0.5);
        assert_eq!(p.nu(), TEST2_NU);
        assert!(ProblemDescriptor::new("test1").with("mu", 1.0).build().is_err());
        assert!(ProblemDescriptor::new("nope").build().is_err());
        let z = ProblemDescriptor::new("zero").build().unwrap();
        assert_eq!(z.exact_control(0.3, 0.4), Some(0.0));
    }
}
