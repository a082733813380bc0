//! Per-unit charging cost functions.
//!
//! A [`CostFamily`] maps the total load of a slot to the cost borne by each
//! unit charging during that slot. Every family is C¹, convex, strictly
//! increasing and nonnegative on `[0, W]`. The named families satisfy this by
//! construction; custom functions are checked on a sampling grid.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Number of grid points used to validate custom cost functions.
pub const CUSTOM_VALIDATION_POINTS: usize = 256;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Host-supplied cost function with its derivatives.
#[derive(Clone)]
pub struct CustomCost {
    name: String,
    value: ScalarFn,
    derivative: Option<ScalarFn>,
    second_derivative: Option<ScalarFn>,
}

#[derive(Clone)]
pub enum CostKind {
    /// `slope * load + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `load²`
    Quadratic,
    /// `exp(beta * load)`
    Exponential { beta: f64 },
    Custom(CustomCost),
}

/// A cost function `f` together with its validity interval `[0, W]`.
///
/// The affine wrapper (`scale * f + offset`) lets tests build the transformed
/// games under which equilibria must be unchanged.
#[derive(Clone)]
pub struct CostFamily {
    kind: CostKind,
    scale: f64,
    offset: f64,
    domain_bound: Option<f64>,
}

impl CostFamily {
    fn from_kind(kind: CostKind) -> Self {
        CostFamily {
            kind,
            scale: 1.0,
            offset: 0.0,
            domain_bound: None,
        }
    }

    pub fn linear(slope: f64, intercept: f64) -> Result<Self> {
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::invalid("slope", format!("must be > 0, got {slope}")));
        }
        if !(intercept.is_finite() && intercept >= 0.0) {
            return Err(Error::invalid(
                "intercept",
                format!("must be >= 0, got {intercept}"),
            ));
        }
        Ok(Self::from_kind(CostKind::Linear { slope, intercept }))
    }

    /// The identity cost `f(x) = x`.
    pub fn identity() -> Self {
        Self::from_kind(CostKind::Linear {
            slope: 1.0,
            intercept: 0.0,
        })
    }

    pub fn quadratic() -> Self {
        Self::from_kind(CostKind::Quadratic)
    }

    pub fn exponential(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
        }
        Ok(Self::from_kind(CostKind::Exponential { beta }))
    }

    /// Builds a cost from host-supplied closures and validates it on
    /// [`CUSTOM_VALIDATION_POINTS`] points of `[0, domain_bound]`.
    pub fn custom(
        name: impl Into<String>,
        value: ScalarFn,
        derivative: Option<ScalarFn>,
        domain_bound: f64,
    ) -> Result<Self> {
        Self::custom_with_second_derivative(name, value, derivative, None, domain_bound)
    }

    pub fn custom_with_second_derivative(
        name: impl Into<String>,
        value: ScalarFn,
        derivative: Option<ScalarFn>,
        second_derivative: Option<ScalarFn>,
        domain_bound: f64,
    ) -> Result<Self> {
        let family = Self::from_kind(CostKind::Custom(CustomCost {
            name: name.into(),
            value,
            derivative,
            second_derivative,
        }))
        .with_domain_bound(domain_bound)?;
        family.validate_on_grid(CUSTOM_VALIDATION_POINTS)?;
        Ok(family)
    }

    pub fn with_domain_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid(
                "domain_bound",
                format!("must be a positive finite real, got {bound}"),
            ));
        }
        self.domain_bound = Some(bound);
        Ok(self)
    }

    /// Sets the domain bound only if none was chosen explicitly.
    pub(crate) fn with_default_domain_bound(self, bound: f64) -> Result<Self> {
        match self.domain_bound {
            Some(_) => Ok(self),
            None => self.with_domain_bound(bound),
        }
    }

    pub fn domain_bound(&self) -> Option<f64> {
        self.domain_bound
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    /// Returns the family computing `a * f + b`.
    pub fn affine_transform(&self, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::invalid("a", format!("must be > 0, got {a}")));
        }
        if !b.is_finite() {
            return Err(Error::invalid("b", "must be finite"));
        }
        let mut out = self.clone();
        out.scale = a * self.scale;
        out.offset = a * self.offset + b;
        Ok(out)
    }

    pub fn has_derivative(&self) -> bool {
        match &self.kind {
            CostKind::Custom(c) => c.derivative.is_some(),
            _ => true,
        }
    }

    pub fn has_second_derivative(&self) -> bool {
        match &self.kind {
            CostKind::Custom(c) => c.second_derivative.is_some(),
            _ => true,
        }
    }

    fn check_domain(&self, load: f64) -> Result<()> {
        let bound = self.domain_bound.unwrap_or(f64::INFINITY);
        // Slack absorbs rounding in L + P·z at the domain edges.
        let slack = 1e-12 * bound.clamp(1.0, 1e12);
        if !load.is_finite() || load < -1e-12 || load > bound + slack {
            return Err(Error::OutOfDomain { load, bound });
        }
        Ok(())
    }

    fn base_value(&self, load: f64) -> f64 {
        match &self.kind {
            CostKind::Linear { slope, intercept } => slope * load + intercept,
            CostKind::Quadratic => load * load,
            CostKind::Exponential { beta } => (beta * load).exp(),
            CostKind::Custom(c) => (c.value)(load),
        }
    }

    pub fn eval(&self, load: f64) -> Result<f64> {
        self.check_domain(load)?;
        Ok(self.scale * self.base_value(load) + self.offset)
    }

    pub fn deriv(&self, load: f64) -> Result<f64> {
        self.check_domain(load)?;
        let d = match &self.kind {
            CostKind::Linear { slope, .. } => *slope,
            CostKind::Quadratic => 2.0 * load,
            CostKind::Exponential { beta } => beta * (beta * load).exp(),
            CostKind::Custom(c) => match &c.derivative {
                Some(d) => d(load),
                None => return Err(Error::MissingDerivative(c.name.clone())),
            },
        };
        Ok(self.scale * d)
    }

    pub fn second_deriv(&self, load: f64) -> Result<f64> {
        self.check_domain(load)?;
        let d2 = match &self.kind {
            CostKind::Linear { .. } => 0.0,
            CostKind::Quadratic => 2.0,
            CostKind::Exponential { beta } => beta * beta * (beta * load).exp(),
            CostKind::Custom(c) => match &c.second_derivative {
                Some(d) => d(load),
                None => return Err(Error::MissingDerivative(c.name.clone())),
            },
        };
        Ok(self.scale * d2)
    }

    /// Spot-checks nonnegativity, strict monotonicity and convexity on a
    /// uniform grid of `[0, W]`.
    pub fn validate_on_grid(&self, points: usize) -> Result<()> {
        let bound = self.domain_bound.ok_or_else(|| {
            Error::InvalidCostFunction("a domain bound is required for grid validation".into())
        })?;
        let n = points.max(3);
        let h = bound / (n - 1) as f64;
        let values: Vec<f64> = (0..n)
            .map(|i| self.eval(i as f64 * h))
            .collect::<Result<_>>()?;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidCostFunction(format!(
                    "non-finite value at load {}",
                    i as f64 * h
                )));
            }
            if *v < 0.0 {
                return Err(Error::InvalidCostFunction(format!(
                    "negative value {v} at load {}",
                    i as f64 * h
                )));
            }
        }
        for (i, w) in values.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::InvalidCostFunction(format!(
                    "not strictly increasing between loads {} and {}",
                    i as f64 * h,
                    (i + 1) as f64 * h
                )));
            }
        }
        for (i, w) in values.windows(3).enumerate() {
            let second = w[0] - 2.0 * w[1] + w[2];
            let tol = 1e-9 * w[1].abs().max(1.0);
            if second < -tol {
                return Err(Error::InvalidCostFunction(format!(
                    "not convex around load {} (second difference {second})",
                    (i + 1) as f64 * h
                )));
            }
        }
        if self.has_derivative() {
            for i in 0..n {
                let d = self.deriv(i as f64 * h)?;
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidCostFunction(format!(
                        "derivative {d} at load {} is negative or non-finite",
                        i as f64 * h
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            CostKind::Linear { slope, intercept } => format!("linear(a={slope}, b={intercept})"),
            CostKind::Quadratic => "quadratic".to_string(),
            CostKind::Exponential { beta } => format!("exponential(beta={beta})"),
            CostKind::Custom(c) => format!("custom({})", c.name),
        };
        if self.scale == 1.0 && self.offset == 0.0 {
            base
        } else {
            format!("{} * {base} + {}", self.scale, self.offset)
        }
    }
}

impl fmt::Debug for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFamily")
            .field("kind", &self.label())
            .field("domain_bound", &self.domain_bound)
            .finish()
    }
}
