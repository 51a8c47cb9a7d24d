//! Self-verification suites. Every property reports what it measured next to
//! the bound it was held to.

mod analytic;
mod numeric;
pub mod oracle;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub use oracle::Oracle;

/// Default relative tolerance for finite-difference comparisons.
pub const FD_REL_TOL: f64 = 1e-5;
/// Absolute floor for finite-difference comparisons.
pub const FD_ABS_FLOOR: f64 = 1e-8;
/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Conv,
    Shuffle,
    Sppf,
    Blocks,
    Losses,
    Activations,
    Cost,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Conv,
        Suite::Shuffle,
        Suite::Sppf,
        Suite::Blocks,
        Suite::Losses,
        Suite::Activations,
        Suite::Cost,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Conv => "conv",
            Suite::Shuffle => "shuffle",
            Suite::Sppf => "sppf",
            Suite::Blocks => "blocks",
            Suite::Losses => "losses",
            Suite::Activations => "activations",
            Suite::Cost => "cost",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A suite name, or `all`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    One(Suite),
    All,
}

impl Selection {
    pub fn suites(&self) -> Vec<Suite> {
        match self {
            Selection::One(s) => vec![*s],
            Selection::All => Suite::ALL.to_vec(),
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Selection::All);
        }
        Suite::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .map(Selection::One)
            .ok_or_else(|| Error::Invalid(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    /// Relative tolerance for finite-difference comparisons; exact
    /// properties ignore it.
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: FD_REL_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Property {
    pub suite: Suite,
    /// Stable identifier, `suite.name`.
    pub key: String,
    pub measured: String,
    pub bound: String,
    pub passed: bool,
    pub elapsed: Duration,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<36} measured: {} | bound: {} ({:.1} ms)",
            if self.passed { "PASS" } else { "FAIL" },
            self.key,
            self.measured,
            self.bound,
            self.elapsed.as_secs_f64() * 1e3
        )
    }
}

/// Collects properties for one suite, timing each.
pub(crate) struct Recorder {
    suite: Suite,
    props: Vec<Property>,
}

impl Recorder {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            props: Vec::new(),
        }
    }

    /// Runs `f`, which returns `(measured, bound, passed)`.
    pub(crate) fn prop(&mut self, name: &str, f: impl FnOnce() -> Result<(String, String, bool)>) {
        let t = Instant::now();
        let (measured, bound, passed) = f().unwrap_or_else(|e| (format!("error: {e}"), "no error".into(), false));
        self.props.push(Property {
            suite: self.suite,
            key: format!("{}.{name}", self.suite),
            measured,
            bound,
            passed,
            elapsed: t.elapsed(),
        });
    }
}

pub fn run_suite(suite: Suite, opts: &CheckOptions) -> Vec<Property> {
    let mut r = Recorder::new(suite);
    match suite {
        Suite::Conv => numeric::conv(&mut r, opts),
        Suite::Shuffle => numeric::shuffle(&mut r, opts),
        Suite::Sppf => numeric::sppf(&mut r, opts),
        Suite::Blocks => numeric::blocks(&mut r, opts),
        Suite::Losses => analytic::losses(&mut r, opts),
        Suite::Activations => analytic::activations(&mut r, opts),
        Suite::Cost => analytic::cost(&mut r, opts),
    }
    r.props
}

pub fn run(selection: Selection, opts: &CheckOptions) -> Vec<Property> {
    selection
        .suites()
        .into_iter()
        .flat_map(|s| run_suite(s, opts))
        .collect()
}

/// Relative error with an absolute floor: 0 when within the floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= floor {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_parsing() {
        assert_eq!("all".parse::<Selection>().unwrap(), Selection::All);
        assert_eq!("sppf".parse::<Selection>().unwrap(), Selection::One(Suite::Sppf));
        assert!("nope".parse::<Selection>().is_err());
        assert_eq!(Selection::All.suites().len(), 7);
    }

    #[test]
    fn rel_err_floor() {
        assert_eq!(rel_err(1e-9, 0.0, 1e-8), 0.0);
        assert!((rel_err(1.0, 1.1, 1e-8) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn fast_suites_pass() {
        let opts = CheckOptions::default();
        for suite in [
            Suite::Shuffle,
            Suite::Sppf,
            Suite::Losses,
            Suite::Activations,
            Suite::Blocks,
        ] {
            for p in run_suite(suite, &opts) {
                assert!(p.passed, "{p}");
            }
        }
    }
}
