use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    ExactDiscrete,
    MonteCarlo,
    Quadrature,
}

/// A value in nats with its standard error.
///
/// `std_error` is zero for closed-form and exact discrete evaluations. For
/// quadrature it holds the discretisation-plus-truncation error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    pub budget: usize,
}

impl Estimate {
    pub fn closed(value: f64) -> Self {
        Self { value, std_error: 0.0, method: Method::ClosedForm, budget: 0 }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, method: Method::ExactDiscrete, budget: 0 }
    }

    pub fn monte_carlo(value: f64, std_error: f64, budget: usize) -> Self {
        Self { value, std_error, method: Method::MonteCarlo, budget }
    }

    pub fn scale(self, k: f64) -> Self {
        Self { value: k * self.value, std_error: k.abs() * self.std_error, ..self }
    }

    /// Adds a constant.
    pub fn shift(self, c: f64) -> Self {
        Self { value: self.value + c, ..self }
    }

    /// Sum of independent estimates; the method of the noisier term wins.
    pub fn add(self, other: Estimate) -> Self {
        let method = if other.std_error > self.std_error || self.method == Method::ExactDiscrete {
            other.method
        } else {
            self.method
        };
        Self {
            value: self.value + other.value,
            std_error: self.std_error.hypot(other.std_error),
            method,
            budget: self.budget.max(other.budget),
        }
    }
}
