//! Bregman generators `g`, their derivatives and the pointwise divergence.
//!
//! With `s = sign(a)` and `u = |a|`:
//!
//! | kind | `g(a)` | `g'(a)` |
//! |------|--------|---------|
//! | SQ   | `(a - C)^2` | `2(a - C)` |
//! | UKL  | `(u - C) ln(u - C) - u` | `s ln(u - C)` |
//! | BKL  | `(u - C) ln(u - C) - (u + C) ln(u + C)` | `s ln((u - C)/(u + C))` |
//! | BP   | `((u - C)^(1+δ) - (u - C))/δ - u` | `s (1 + 1/δ)((u - C)^δ - 1)` |
//! | PU   | `C~ ln(1 - u) + C~ u (ln u - ln(1 - u))` | `s C~ (ln u - ln(1 - u))` |
//!
//! SQ is defined on the whole line, UKL/BKL/BP on `|a| > C` and PU on
//! `0 < |a| < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance to a domain boundary below which evaluations are refused.
pub const DOMAIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    Sq,
    Ukl,
    Bkl,
    Bp,
    Pu,
}

/// A Bregman generator with its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "one")]
    pub c_tilde: f64,
}

fn one() -> f64 {
    1.0
}

/// The set of admissible representer values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossDomain {
    /// The whole real line.
    Real,
    /// `|a| > bound`.
    AbsAbove(f64),
    /// `0 < |a| < 1`.
    UnitPunctured,
}

impl LossDomain {
    pub fn contains(&self, a: f64) -> bool {
        match *self {
            LossDomain::Real => a.is_finite(),
            LossDomain::AbsAbove(c) => a.is_finite() && a.abs() > c,
            LossDomain::UnitPunctured => a != 0.0 && a.abs() < 1.0,
        }
    }
}

impl LossSpec {
    pub fn sq(c: f64) -> Self {
        Self::with(LossKind::Sq, c)
    }

    pub fn ukl(c: f64) -> Self {
        Self::with(LossKind::Ukl, c)
    }

    pub fn bkl(c: f64) -> Self {
        Self::with(LossKind::Bkl, c)
    }

    pub fn bp(c: f64, delta: f64) -> Self {
        LossSpec {
            delta,
            ..Self::with(LossKind::Bp, c)
        }
    }

    pub fn pu(c_tilde: f64) -> Self {
        LossSpec {
            c_tilde,
            ..Self::with(LossKind::Pu, 0.0)
        }
    }

    fn with(kind: LossKind, c: f64) -> Self {
        LossSpec {
            kind,
            c,
            delta: 1.0,
            c_tilde: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(Error::InvalidParameter { name, value, reason });
        if !self.c.is_finite() {
            return bad("c", self.c, "must be finite");
        }
        match self.kind {
            LossKind::Sq | LossKind::Pu => {}
            LossKind::Ukl | LossKind::Bp if self.c < 0.0 => return bad("c", self.c, "must be >= 0"),
            LossKind::Bkl if self.c <= 0.0 => return bad("c", self.c, "BKL needs c > 0"),
            _ => {}
        }
        if self.kind == LossKind::Bp && !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", self.delta, "must be > 0");
        }
        if self.kind == LossKind::Pu && !(self.c_tilde > 0.0 && self.c_tilde.is_finite()) {
            return bad("c_tilde", self.c_tilde, "must be > 0");
        }
        Ok(())
    }

    pub fn domain(&self) -> LossDomain {
        match self.kind {
            LossKind::Sq => LossDomain::Real,
            LossKind::Ukl | LossKind::Bkl | LossKind::Bp => LossDomain::AbsAbove(self.c),
            LossKind::Pu => LossDomain::UnitPunctured,
        }
    }

    /// Distance from `a` to the nearest domain boundary (infinite for SQ).
    pub fn margin(&self, a: f64) -> f64 {
        if !a.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.domain() {
            LossDomain::Real => f64::INFINITY,
            LossDomain::AbsAbove(c) => a.abs() - c,
            LossDomain::UnitPunctured => a.abs().min(1.0 - a.abs()),
        }
    }

    /// Fails unless `a` lies at least `eps` inside the domain.
    pub fn check(&self, a: f64, eps: f64) -> Result<()> {
        if self.margin(a) > eps {
            return Ok(());
        }
        let u = a.abs();
        let boundary = match self.domain() {
            LossDomain::Real => f64::NAN,
            LossDomain::AbsAbove(c) => libm::copysign(c, a),
            LossDomain::UnitPunctured if u < 0.5 => 0.0,
            LossDomain::UnitPunctured => libm::copysign(1.0, a),
        };
        Err(Error::Domain {
            kind: self.kind,
            value: a,
            boundary,
        })
    }

    pub fn g(&self, a: f64) -> Result<f64> {
        self.check(a, DOMAIN_EPS)?;
        Ok(self.g_unchecked(a))
    }

    pub fn dg(&self, a: f64) -> Result<f64> {
        self.check(a, DOMAIN_EPS)?;
        Ok(self.dg_unchecked(a))
    }

    /// `g(a0) - g(a) - g'(a)(a0 - a)`; non-negative when both points share a branch.
    pub fn bregman(&self, a0: f64, a: f64) -> Result<f64> {
        self.check(a0, DOMAIN_EPS)?;
        self.check(a, DOMAIN_EPS)?;
        Ok(self.g_unchecked(a0) - self.g_unchecked(a) - self.dg_unchecked(a) * (a0 - a))
    }

    pub(crate) fn g_unchecked(&self, a: f64) -> f64 {
        let (c, u) = (self.c, a.abs());
        match self.kind {
            LossKind::Sq => (a - c) * (a - c),
            LossKind::Ukl => xlogx(u - c) - u,
            LossKind::Bkl => xlogx(u - c) - xlogx(u + c),
            LossKind::Bp => (libm::pow(u - c, 1.0 + self.delta) - (u - c)) / self.delta - u,
            LossKind::Pu => {
                let ct = self.c_tilde;
                ct * libm::log1p(-u) + ct * u * (libm::log(u) - libm::log1p(-u))
            }
        }
    }

    pub(crate) fn dg_unchecked(&self, a: f64) -> f64 {
        let (c, s, u) = (self.c, sign(a), a.abs());
        match self.kind {
            LossKind::Sq => 2.0 * (a - c),
            LossKind::Ukl => s * libm::log(u - c),
            LossKind::Bkl => s * (libm::log(u - c) - libm::log(u + c)),
            LossKind::Bp => s * (1.0 + 1.0 / self.delta) * libm::expm1(self.delta * libm::log(u - c)),
            LossKind::Pu => s * self.c_tilde * (libm::log(u) - libm::log1p(-u)),
        }
    }

    /// Second derivative `g''(a)`.
    pub(crate) fn d2g_unchecked(&self, a: f64) -> f64 {
        let (c, u) = (self.c, a.abs());
        match self.kind {
            LossKind::Sq => 2.0,
            LossKind::Ukl => 1.0 / (u - c),
            LossKind::Bkl => 1.0 / (u - c) - 1.0 / (u + c),
            LossKind::Bp => (1.0 + self.delta) * libm::pow(u - c, self.delta - 1.0),
            LossKind::Pu => self.c_tilde * (1.0 / u + 1.0 / (1.0 - u)),
        }
    }

    /// Third derivative `g'''(a)`.
    pub(crate) fn d3g_unchecked(&self, a: f64) -> f64 {
        let (c, s, u) = (self.c, sign(a), a.abs());
        match self.kind {
            LossKind::Sq => 0.0,
            LossKind::Ukl => -s / ((u - c) * (u - c)),
            LossKind::Bkl => s * (1.0 / ((u + c) * (u + c)) - 1.0 / ((u - c) * (u - c))),
            LossKind::Bp => {
                let d = self.delta;
                s * (1.0 + d) * (d - 1.0) * libm::pow(u - c, d - 2.0)
            }
            LossKind::Pu => s * self.c_tilde * (1.0 / ((1.0 - u) * (1.0 - u)) - 1.0 / (u * u)),
        }
    }

    /// `psi(a) = a g'(a) - g(a)`, the representer-side term of the objective.
    pub(crate) fn psi_unchecked(&self, a: f64) -> f64 {
        a * self.dg_unchecked(a) - self.g_unchecked(a)
    }
}

fn sign(a: f64) -> f64 {
    if a < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log(x)
    }
}

/// Checked `g(a)`.
pub fn eval_g(spec: &LossSpec, a: f64) -> Result<f64> {
    spec.g(a)
}

/// Checked `g'(a)`.
pub fn eval_dg(spec: &LossSpec, a: f64) -> Result<f64> {
    spec.dg(a)
}

/// Checked pointwise Bregman divergence.
pub fn bregman_pointwise(spec: &LossSpec, a0: f64, a: f64) -> Result<f64> {
    spec.bregman(a0, a)
}

/// Admissible representer values of `spec`.
pub fn loss_domain(spec: &LossSpec) -> LossDomain {
    spec.domain()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_specs() -> [LossSpec; 5] {
        [
            LossSpec::sq(0.3),
            LossSpec::ukl(1.0),
            LossSpec::bkl(1.0),
            LossSpec::bp(1.0, 0.5),
            LossSpec::pu(0.5),
        ]
    }

    #[test]
    fn hand_values() {
        assert_eq!(eval_g(&LossSpec::sq(1.0), 3.0).unwrap(), 4.0);
        assert_eq!(eval_g(&LossSpec::ukl(1.0), 2.0).unwrap(), -2.0);
        assert_eq!(eval_g(&LossSpec::bp(0.0, 1.0), 2.0).unwrap(), 0.0);
        assert_eq!(eval_dg(&LossSpec::sq(0.0), -2.0).unwrap(), -4.0);
        assert_eq!(eval_dg(&LossSpec::ukl(1.0), 2.0).unwrap(), 0.0);
        assert_eq!(bregman_pointwise(&LossSpec::sq(0.0), 3.0, 1.0).unwrap(), 4.0);
        let b = bregman_pointwise(&LossSpec::ukl(0.0), 2.0, 1.0).unwrap();
        assert!((b - (2.0 * core::f64::consts::LN_2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn domains() {
        assert_eq!(loss_domain(&LossSpec::sq(1.0)), LossDomain::Real);
        assert_eq!(loss_domain(&LossSpec::ukl(1.0)), LossDomain::AbsAbove(1.0));
        assert_eq!(loss_domain(&LossSpec::pu(0.5)), LossDomain::UnitPunctured);
        assert!(eval_g(&LossSpec::ukl(1.0), 1.0).is_err());
        assert!(eval_g(&LossSpec::ukl(1.0), -1.0 - 1e-10).is_err());
        assert!(eval_g(&LossSpec::ukl(1.0), -1.0 - 1e-8).is_ok());
        assert!(eval_g(&LossSpec::pu(0.5), 1.0).is_err());
        assert!(matches!(
            eval_dg(&LossSpec::bkl(2.0), 0.5),
            Err(Error::Domain { kind: LossKind::Bkl, boundary, .. }) if boundary == 2.0
        ));
    }

    #[test]
    fn validation() {
        assert!(LossSpec::bp(0.0, 0.0).validate().is_err());
        assert!(LossSpec::pu(0.0).validate().is_err());
        assert!(LossSpec::ukl(-1.0).validate().is_err());
        assert!(LossSpec::bkl(0.0).validate().is_err());
        for s in all_specs() {
            s.validate().unwrap();
        }
    }

    fn central(f: impl Fn(f64) -> f64, a: f64) -> f64 {
        let h = 1e-5 * (1.0 + a.abs());
        (f(a + h) - f(a - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for s in all_specs() {
            let pts: &[f64] = if s.kind == LossKind::Pu { &[0.3, -0.7] } else { &[2.5, -2.5, 3.7] };
            for &a in pts {
                let d1 = central(|t| s.g_unchecked(t), a);
                let d2 = central(|t| s.dg_unchecked(t), a);
                let d3 = central(|t| s.d2g_unchecked(t), a);
                let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + y.abs());
                assert!(rel(d1, s.dg_unchecked(a)) < 1e-6, "{s:?} g' at {a}");
                assert!(rel(d2, s.d2g_unchecked(a)) < 1e-6, "{s:?} g'' at {a}");
                assert!(rel(d3, s.d3g_unchecked(a)) < 1e-6, "{s:?} g''' at {a}");
            }
        }
    }

    #[test]
    fn bp_with_unit_delta_differs_from_sq_by_affine_term() {
        let bp = LossSpec::bp(0.0, 1.0);
        let sq = LossSpec::sq(0.0);
        let diff = |a: f64| bp.g(a).unwrap() - sq.g(a).unwrap();
        let h = 0.25;
        let mut a = 0.5;
        while a < 10.0 {
            let second = diff(a + h) - 2.0 * diff(a) + diff(a - h);
            assert!(second.abs() < 1e-10);
            assert!((diff(a) + 2.0 * a).abs() < 1e-10);
            a += 0.1;
        }
    }

    #[test]
    fn bp_small_delta_approaches_log() {
        let delta = 1e-3;
        let mut a: f64 = 0.1;
        while a <= 10.0 {
            let approx = (libm::pow(a, delta) - 1.0) / delta;
            assert!((approx - libm::log(a)).abs() <= 1e-2, "{a}");
            a += 0.05;
        }
    }
}
