//! Link functions mapping a base-model index `v` and a branch flag `xi` to a
//! representer value.
//!
//! With `k = 1 + 1/δ`:
//!
//! | kind | `xi = 1` | `xi = 0` |
//! |------|----------|----------|
//! | Raw | `v` | `v` |
//! | LinearSQ | `v/2 + C` | `v/2 + C` |
//! | LogBranch | `C + e^v` | `-(C + e^-v)` |
//! | PowerBranch | `C + (1 + v/k)^(1/δ)` | `-(C + (1 - v/k)^(1/δ))` |
//! | Exponential | `e^v` | `e^v` |
//! | AtePropensityLogit | `1 + e^-v` | `-(1 + e^v)` |
//!
//! The canonical pairs (SQ, LinearSQ), (UKL, LogBranch) and (BP, PowerBranch)
//! satisfy `g'(link(xi, v)) = v` on both branches.
//!
//! An optional saturation bound `b` replaces `v` by `b tanh(v / b)` before
//! the link is applied, which keeps the representer bounded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Raw,
    #[serde(rename = "LinearSQ")]
    LinearSq,
    LogBranch,
    PowerBranch,
    Exponential,
    AtePropensityLogit,
}

/// How the branch flag `xi` is read off an input point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BranchRule {
    /// `xi = 1` everywhere.
    #[default]
    AlwaysPositive,
    /// `xi` is the treatment indicator stored in the first coordinate.
    TreatmentSign,
}

impl BranchRule {
    pub fn xi(self, x: &[f64]) -> bool {
        match self {
            BranchRule::AlwaysPositive => true,
            BranchRule::TreatmentSign => x[0] > 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub branch_rule: BranchRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl LinkSpec {
    pub fn new(kind: LinkKind) -> Self {
        LinkSpec {
            kind,
            c: 0.0,
            delta: 1.0,
            branch_rule: BranchRule::AlwaysPositive,
            saturation: None,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_branch(mut self, rule: BranchRule) -> Self {
        self.branch_rule = rule;
        self
    }

    pub fn with_saturation(mut self, bound: f64) -> Self {
        self.saturation = Some(bound);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.saturation {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "link.saturation",
                    value: b,
                    reason: "must be > 0 and finite",
                });
            }
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidParameter {
                name: "link.c",
                value: self.c,
                reason: "must be finite",
            });
        }
        if self.kind == LinkKind::PowerBranch && !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "link.delta",
                value: self.delta,
                reason: "must be > 0",
            });
        }
        Ok(())
    }

    /// Value, first and second derivative in `v`.
    pub fn eval3(&self, xi: bool, v: f64) -> Result<(f64, f64, f64)> {
        let Some(b) = self.saturation else {
            return self.eval3_raw(xi, v);
        };
        let t = libm::tanh(v / b);
        let (s1, s2) = (1.0 - t * t, -2.0 * t * (1.0 - t * t) / b);
        let (f, d1, d2) = self.eval3_raw(xi, b * t)?;
        Ok((f, d1 * s1, d2 * s1 * s1 + d1 * s2))
    }

    fn eval3_raw(&self, xi: bool, v: f64) -> Result<(f64, f64, f64)> {
        let out = match self.kind {
            LinkKind::Raw => (v, 1.0, 0.0),
            LinkKind::LinearSq => (0.5 * v + self.c, 0.5, 0.0),
            LinkKind::Exponential => {
                let e = libm::exp(v);
                (e, e, e)
            }
            LinkKind::LogBranch => {
                if xi {
                    let e = libm::exp(v);
                    (self.c + e, e, e)
                } else {
                    let e = libm::exp(-v);
                    (-(self.c + e), e, -e)
                }
            }
            LinkKind::PowerBranch => {
                let p = 1.0 / self.delta;
                let k = 1.0 + p;
                let (t, s) = if xi { (1.0 + v / k, 1.0) } else { (1.0 - v / k, -1.0) };
                if !(t > 0.0) {
                    return Err(Error::LinkDomain { value: v });
                }
                let tp = libm::pow(t, p);
                let d1 = p / k * tp / t;
                let d2 = s * p * (p - 1.0) / (k * k) * tp / (t * t);
                (s * (self.c + tp), d1, d2)
            }
            LinkKind::AtePropensityLogit => {
                if xi {
                    let e = libm::exp(-v);
                    (1.0 + e, -e, e)
                } else {
                    let e = libm::exp(v);
                    (-(1.0 + e), -e, -e)
                }
            }
        };
        if out.0.is_finite() && out.1.is_finite() && out.2.is_finite() {
            Ok(out)
        } else {
            Err(Error::LinkDomain { value: v })
        }
    }

    pub fn apply(&self, xi: bool, v: f64) -> Result<f64> {
        self.eval3(xi, v).map(|t| t.0)
    }

    pub fn deriv(&self, xi: bool, v: f64) -> Result<f64> {
        self.eval3(xi, v).map(|t| t.1)
    }

    /// Whether `g'(link(xi, v)) = v` holds for `loss`.
    pub fn is_canonical_for(&self, loss: &LossSpec) -> bool {
        match canonical_pair(loss) {
            Ok(l) => self.saturation.is_none() && l.kind == self.kind && l.c == self.c && (l.kind != LinkKind::PowerBranch || l.delta == self.delta),
            Err(_) => false,
        }
    }
}

/// `link(xi, v)`.
pub fn apply_link(link: &LinkSpec, xi: bool, v: f64) -> Result<f64> {
    link.apply(xi, v)
}

/// `d link(xi, v) / dv`.
pub fn link_deriv(link: &LinkSpec, xi: bool, v: f64) -> Result<f64> {
    link.deriv(xi, v)
}

/// The link that makes `g' o link` the identity. The branch rule defaults to
/// [`BranchRule::AlwaysPositive`].
pub fn canonical_pair(loss: &LossSpec) -> Result<LinkSpec> {
    match loss.kind {
        LossKind::Sq => Ok(LinkSpec::new(LinkKind::LinearSq).with_c(loss.c)),
        LossKind::Ukl => Ok(LinkSpec::new(LinkKind::LogBranch).with_c(loss.c)),
        LossKind::Bp => Ok(LinkSpec::new(LinkKind::PowerBranch).with_c(loss.c).with_delta(loss.delta)),
        k => Err(Error::NoCanonicalPair(k)),
    }
}
