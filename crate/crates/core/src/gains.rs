//! Step-size schedules for the innovation, consensus and regularization
//! terms, and the exponent checks that decide the convergence conditions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `c·(k+1)^(-τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub const ZERO: PowerLaw = PowerLaw {
        coeff: 0.0,
        exponent: 0.0,
    };

    pub fn new(coeff: f64, exponent: f64) -> Self {
        Self { coeff, exponent }
    }

    pub fn at(&self, k: usize) -> f64 {
        if self.coeff == 0.0 {
            return 0.0;
        }
        self.coeff * ((k + 1) as f64).powf(-self.exponent)
    }

    pub fn is_zero(&self) -> bool {
        self.coeff == 0.0
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.coeff.is_finite() && self.exponent.is_finite()) || self.coeff < 0.0 || self.exponent < 0.0 {
            return Err(invalid(format!(
                "gain {name} needs finite coefficient and exponent >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Gains in force at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gains {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

/// Gain schedule `(a(k), b(k), λ(k))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GainSchedule {
    PowerLaw { a: PowerLaw, b: PowerLaw, lambda: PowerLaw },
    /// Explicit values per step; the last entry is held beyond the table.
    Tabulated { a: Vec<f64>, b: Vec<f64>, lambda: Vec<f64> },
}

fn table_at(t: &[f64], k: usize) -> f64 {
    t.get(k).or(t.last()).copied().unwrap_or(0.0)
}

impl GainSchedule {
    pub fn power_law(a: PowerLaw, b: PowerLaw, lambda: PowerLaw) -> Self {
        GainSchedule::PowerLaw { a, b, lambda }
    }

    pub fn at(&self, k: usize) -> Gains {
        match self {
            GainSchedule::PowerLaw { a, b, lambda } => Gains {
                a: a.at(k),
                b: b.at(k),
                lambda: lambda.at(k),
            },
            GainSchedule::Tabulated { a, b, lambda } => Gains {
                a: table_at(a, k),
                b: table_at(b, k),
                lambda: table_at(lambda, k),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GainSchedule::PowerLaw { a, b, lambda } => {
                a.validate("a")?;
                b.validate("b")?;
                lambda.validate("lambda")
            }
            GainSchedule::Tabulated { a, b, lambda } => {
                for (name, t) in [("a", a), ("b", b), ("lambda", lambda)] {
                    if t.is_empty() {
                        return Err(invalid(format!("gain table {name} is empty")));
                    }
                    if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(invalid(format!("gain table {name} has a negative or non-finite entry")));
                    }
                    if t.windows(2).any(|w| w[1] > w[0]) {
                        return Err(invalid(format!("gain table {name} is not nonincreasing")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// The almost-sure and mean-square gain conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainCondition {
    C1,
    C2,
}

impl std::str::FromStr for GainCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(GainCondition::C1),
            "C2" => Ok(GainCondition::C2),
            other => Err(invalid(format!("unknown gain condition {other:?}; expected C1 or C2"))),
        }
    }
}

/// One named clause of a gain condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainClause {
    pub clause: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub condition: GainCondition,
    pub passed: bool,
    pub clauses: Vec<GainClause>,
}

/// Decides a gain condition for power-law schedules from exponent
/// inequalities.
pub fn validate_gains(g: &GainSchedule, condition: GainCondition) -> Result<GainReport> {
    let GainSchedule::PowerLaw { a, b, lambda } = g else {
        return Err(Error::Unsupported(
            "gain conditions are decided only for power-law schedules".into(),
        ));
    };
    g.validate()?;
    let (ta, tb, tl) = (a.exponent, b.exponent, lambda.exponent);
    let tmax = ta.max(tb);
    let lambda_off = lambda.is_zero();
    let mut clauses = vec![GainClause {
        clause: format!("sum of min(a,b) diverges: a, b nonzero and max(tau_a, tau_b) = {tmax} <= 1"),
        holds: !a.is_zero() && !b.is_zero() && tmax <= 1.0,
    }];
    match condition {
        GainCondition::C1 => {
            clauses.push(GainClause {
                clause: format!("a^2 summable: 2 tau_a = {} > 1", 2.0 * ta),
                holds: 2.0 * ta > 1.0,
            });
            clauses.push(GainClause {
                clause: format!("b^2 summable: 2 tau_b = {} > 1", 2.0 * tb),
                holds: 2.0 * tb > 1.0,
            });
            clauses.push(GainClause {
                clause: format!("lambda summable: tau_lambda = {tl} > 1 or lambda = 0"),
                holds: lambda_off || tl > 1.0,
            });
            clauses.push(GainClause {
                clause: format!("lambda = o(min(a,b)): tau_lambda = {tl} > {tmax} or lambda = 0"),
                holds: lambda_off || tl > tmax,
            });
        }
        GainCondition::C2 => {
            clauses.push(GainClause {
                clause: format!("gains vanish: tau_a = {ta} > 0, tau_b = {tb} > 0, tau_lambda = {tl} > 0 or lambda = 0"),
                holds: ta > 0.0 && tb > 0.0 && (lambda_off || tl > 0.0),
            });
            clauses.push(GainClause {
                clause: format!("a^2 = o(min(a,b)): 2 tau_a = {} > {tmax}", 2.0 * ta),
                holds: 2.0 * ta > tmax,
            });
            clauses.push(GainClause {
                clause: format!("b^2 = o(min(a,b)): 2 tau_b = {} > {tmax}", 2.0 * tb),
                holds: 2.0 * tb > tmax,
            });
            clauses.push(GainClause {
                clause: format!("lambda = o(min(a,b)): tau_lambda = {tl} > {tmax} or lambda = 0"),
                holds: lambda_off || tl > tmax,
            });
        }
    }
    Ok(GainReport {
        condition,
        passed: clauses.iter().all(|c| c.holds),
        clauses,
    })
}
