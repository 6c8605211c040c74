//! The linear-quadratic control problem: coefficients, horizon and data.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::problems::ProblemData;

/// First Dirichlet eigenvalue of `-d²/dx²` on (0,1); equals `1 / c_p²`.
pub const LAMBDA_1: f64 = PI * PI;

/// Distributed tracking problem on the unit interval:
///
/// ```text
/// min ½‖y - y_d‖² + α/2 ‖u‖²   s.t.   y_t - ν y_xx - μ y = f + u,
///                                    y(·,0) = y(·,1) = 0,  y(0) = y0.
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    name: String,
    nu: f64,
    mu: f64,
    alpha: f64,
    t_end: f64,
    data: ProblemData,
    scale: f64,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        nu: f64,
        mu: f64,
        alpha: f64,
        t_end: f64,
        data: ProblemData,
    ) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidProblem(format!("nu must be > 0, got {nu}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidProblem(format!("mu must be >= 0, got {mu}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidProblem(format!("alpha must be > 0, got {alpha}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidProblem(format!("t_end must be > 0, got {t_end}")));
        }
        Ok(Self {
            name: name.into(),
            nu,
            mu,
            alpha,
            t_end,
            data,
            scale: 1.0,
        })
    }

    /// Same problem with every datum (f, y_d, y0 and the reference pair)
    /// multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            scale: self.scale * factor,
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    /// Whether `μ ≤ ν λ₁`, the condition under which the temporal estimator
    /// is a guaranteed upper bound.
    pub fn estimator_condition_ok(&self) -> bool {
        self.mu <= self.nu * LAMBDA_1
    }

    pub fn source(&self, t: f64, x: f64) -> f64 {
        self.scale * self.data.source(self.nu, self.mu, t, x)
    }

    pub fn source_dt(&self, t: f64, x: f64) -> f64 {
        self.scale * self.data.source_dt(self.nu, self.mu, t, x)
    }

    pub fn source_dxx(&self, t: f64, x: f64) -> f64 {
        self.scale * self.data.source_dxx(self.nu, self.mu, t, x)
    }

    pub fn desired_state(&self, t: f64, x: f64) -> f64 {
        self.scale * self.data.desired_state(self.nu, self.mu, t, x)
    }

    pub fn initial_state(&self, x: f64) -> f64 {
        self.scale * self.data.initial_state(x)
    }

    pub fn has_reference(&self) -> bool {
        self.data.has_reference()
    }

    pub fn exact_state(&self, t: f64, x: f64) -> Option<f64> {
        self.data.exact_state(t, x).map(|v| self.scale * v)
    }

    pub fn exact_control(&self, t: f64, x: f64) -> Option<f64> {
        self.data.exact_control(t, x).map(|v| self.scale * v)
    }

    /// Right-hand side of the space-time elliptic reformulation,
    /// `y_d/α - f_t - ν f_xx - μ f`.
    pub fn elliptic_load(&self, t: f64, x: f64) -> f64 {
        self.desired_state(t, x) / self.alpha
            - self.source_dt(t, x)
            - self.nu * self.source_dxx(t, x)
            - self.mu * self.source(t, x)
    }
}
