//! Deficit reports shared by the semigroup and inequality verifiers.

use serde::Serialize;

/// Pass threshold: deficit ≥ −(abs + rel·max(|lhs|, |c·rhs|)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-7, rel: 1e-6 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    pub fn bound(&self, lhs: f64, scaled_rhs: f64) -> f64 {
        self.abs + self.rel * lhs.abs().max(scaled_rhs.abs())
    }
}

/// LHS ≤ constant·RHS, evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeficitReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    /// constant·rhs − lhs
    pub deficit: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub f_description: String,
    pub plan: String,
    pub std_error: Option<f64>,
    pub clamped: bool,
    pub details: Vec<(String, f64)>,
    pub notes: Vec<String>,
    pub parts: Vec<DeficitReport>,
}

impl DeficitReport {
    pub fn new(
        name: impl Into<String>,
        lhs: f64,
        rhs: f64,
        constant: f64,
        f_description: impl Into<String>,
        plan: impl Into<String>,
    ) -> Self {
        let mut r = DeficitReport {
            name: name.into(),
            lhs,
            rhs,
            constant,
            deficit: constant * rhs - lhs,
            tolerance: 0.0,
            pass: false,
            f_description: f_description.into(),
            plan: plan.into(),
            std_error: None,
            clamped: false,
            details: Vec::new(),
            notes: Vec::new(),
            parts: Vec::new(),
        };
        r.judge(&Tolerance::default());
        r
    }

    /// Recompute the tolerance and verdict; Monte Carlo reports keep at
    /// least three standard errors of slack.
    pub fn judge(&mut self, tol: &Tolerance) {
        let base = tol.bound(self.lhs, self.constant * self.rhs);
        self.tolerance = match self.std_error {
            Some(se) => base.max(3.0 * se),
            None => base,
        };
        self.pass = self.deficit.is_finite() && self.deficit >= -self.tolerance;
        for p in &mut self.parts {
            p.judge(tol);
        }
    }

    /// Re-judge this report and every part; the verdict requires all parts to pass.
    pub fn rejudge(&mut self, tol: &Tolerance) {
        self.judge(tol);
        self.pass = self.pass && self.parts.iter().all(|p| p.all_pass());
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self.judge(&Tolerance::default());
        self
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.push((key.into(), value));
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_part(mut self, part: DeficitReport) -> Self {
        self.parts.push(part);
        self
    }

    pub fn clamped(mut self, clamped: bool) -> Self {
        self.clamped |= clamped;
        self
    }

    pub fn detail(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn part(&self, name: &str) -> Option<&DeficitReport> {
        self.parts.iter().find(|p| p.name == name)
    }

    /// This report and all of its parts pass.
    pub fn all_pass(&self) -> bool {
        self.pass && self.parts.iter().all(DeficitReport::all_pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_uses_mixed_tolerance() {
        let r = DeficitReport::new("t", 1.0 + 5e-7, 1.0, 1.0, "f", "p");
        assert!(r.pass);
        let r = DeficitReport::new("t", 1.0 + 5e-6, 1.0, 1.0, "f", "p");
        assert!(!r.pass);
        let r = r.with_std_error(1e-5);
        assert!(r.pass);
        assert!((r.tolerance - 3e-5).abs() < 1e-18);
    }

    #[test]
    fn failing_part_fails_the_whole() {
        let bad = DeficitReport::new("sub", 2.0, 1.0, 1.0, "f", "p");
        let r = DeficitReport::new("top", 0.0, 1.0, 1.0, "f", "p").with_part(bad);
        assert!(r.pass && !r.all_pass());
    }
}
