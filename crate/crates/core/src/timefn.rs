//! Smooth scalar functions of time: polynomials plus sinusoids.
//!
//! The family is closed under differentiation and integration, so noise
//! levels and rate drifts can be evaluated exactly at any time.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// `c[0] + c[1] t + c[2] t^2 + ...`
    Poly(Vec<f64>),
    /// `amplitude * sin(frequency * t + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Term {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Term::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci),
            Term::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
        }
    }

    fn derivative(&self) -> Term {
        match self {
            Term::Poly(c) => Term::Poly(
                c.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, ci)| k as f64 * ci)
                    .collect(),
            ),
            Term::Sine {
                amplitude,
                frequency,
                phase,
            } => Term::Sine {
                amplitude: amplitude * frequency,
                frequency: *frequency,
                phase: phase + FRAC_PI_2,
            },
        }
    }

    fn antiderivative(&self) -> Term {
        match self {
            Term::Poly(c) => {
                let mut out = Vec::with_capacity(c.len() + 1);
                out.push(0.0);
                out.extend(c.iter().enumerate().map(|(k, ci)| ci / (k as f64 + 1.0)));
                Term::Poly(out)
            }
            Term::Sine {
                amplitude,
                frequency,
                phase,
            } if *frequency == 0.0 => Term::Poly(vec![0.0, amplitude * phase.sin()]),
            Term::Sine {
                amplitude,
                frequency,
                phase,
            } => Term::Sine {
                amplitude: amplitude / frequency,
                frequency: *frequency,
                phase: phase - FRAC_PI_2,
            },
        }
    }
}

/// A sum of terms; serialized as the bare list of terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeFn {
    pub terms: Vec<Term>,
}

impl TimeFn {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::poly(vec![c])
    }

    pub fn poly(coeffs: Vec<f64>) -> Self {
        Self {
            terms: vec![Term::Poly(coeffs)],
        }
    }

    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            terms: vec![Term::Sine {
                amplitude,
                frequency,
                phase,
            }],
        }
    }

    pub fn plus(mut self, other: TimeFn) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    pub fn derivative(&self) -> Self {
        Self {
            terms: self.terms.iter().map(Term::derivative).collect(),
        }
    }

    /// An antiderivative (integration constant chosen by the term family).
    pub fn antiderivative(&self) -> Self {
        Self {
            terms: self.terms.iter().map(Term::antiderivative).collect(),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.terms.iter().all(|term| match term {
            Term::Poly(c) => c.iter().all(|&ci| ci == 0.0),
            Term::Sine { amplitude, .. } => *amplitude == 0.0,
        })
    }
}
