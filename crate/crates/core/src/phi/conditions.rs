use std::fmt;

use serde::{Deserialize, Serialize};

use super::PhiFunction;
use crate::error::{invalid, Error, Result};
use crate::interval::Interval;
use crate::numeric::{linspace, sym2_min_eigenvalue};

/// Absolute tolerance on (scaled) convexity margins.
pub const TOL_CONVEXITY: f64 = 1e-9;

/// Minimum distance between grid points and a finite interval endpoint.
const ENDPOINT_OFFSET: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H1,
    H2,
    #[serde(rename = "H2prime")]
    H2Prime,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H2Prime => "H2prime",
        };
        f.write_str(s)
    }
}

/// A one-dimensional probe grid, linear or log-spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub log_scaled: bool,
}

impl IntervalGrid {
    pub fn new(lo: f64, hi: f64, n: usize, log_scaled: bool) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("grid needs finite lo < hi, got [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(invalid(format!("grid needs at least 3 points, got {n}")));
        }
        if log_scaled && lo <= 0.0 {
            return Err(invalid("log-scaled grid needs lo > 0"));
        }
        Ok(IntervalGrid {
            lo,
            hi,
            n,
            log_scaled,
        })
    }

    pub fn linear(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, n, false)
    }

    pub fn log(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, n, true)
    }

    /// 201 points: log-spaced over [1e-3, 1e3] above a finite lower endpoint,
    /// linear over [-100, 100] on the whole line.
    pub fn default_for(interval: Interval) -> Self {
        const N: usize = 201;
        if interval.is_real_line() {
            return IntervalGrid {
                lo: -100.0,
                hi: 100.0,
                n: N,
                log_scaled: false,
            };
        }
        if interval.lo == 0.0 && interval.hi == f64::INFINITY {
            return IntervalGrid {
                lo: 1e-3,
                hi: 1e3,
                n: N,
                log_scaled: true,
            };
        }
        let (lo, hi) = if interval.is_bounded() {
            let pad = interval.width() * 1e-3;
            (interval.lo + pad, interval.hi - pad)
        } else if interval.lo.is_finite() {
            (interval.lo + 1e-3, interval.lo + 1e3)
        } else {
            (interval.hi - 1e3, interval.hi - 1e-3)
        };
        IntervalGrid {
            lo,
            hi,
            n: N,
            log_scaled: false,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.log_scaled {
            linspace(self.lo.ln(), self.hi.ln(), self.n)
                .into_iter()
                .map(f64::exp)
                .collect()
        } else {
            linspace(self.lo, self.hi, self.n)
        }
    }

    fn points_inside(&self, interval: Interval) -> Result<Vec<f64>> {
        let pts = self.points();
        for &x in &pts {
            if !(x >= interval.lo + ENDPOINT_OFFSET && x <= interval.hi - ENDPOINT_OFFSET) {
                return Err(Error::Domain {
                    what: "grid point".into(),
                    value: x,
                    interval: interval.to_string(),
                });
            }
        }
        Ok(pts)
    }
}

/// Outcome of a grid-based hypothesis check.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub hypothesis: Hypothesis,
    pub phi: String,
    pub holds: bool,
    /// Smallest scaled value of the tested quantities over the grid.
    pub margin: f64,
    /// Grid point where the margin is attained: `[x]` or `[u, v]`.
    pub witness: Vec<f64>,
    pub grid: Vec<IntervalGrid>,
    pub tolerance: f64,
    /// Set when two routes to the same verdict disagree.
    pub inconsistency: Option<String>,
}

/// `value / max(1, magnitude)`: keeps the sign, bounds roundoff of large
/// cancelling terms.
fn scaled(value: f64, magnitude: f64) -> f64 {
    value / magnitude.abs().max(1.0)
}

struct Tracker {
    margin: f64,
    witness: Vec<f64>,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            margin: f64::INFINITY,
            witness: Vec::new(),
        }
    }

    fn offer(&mut self, value: f64, at: &[f64]) -> Result<()> {
        if value.is_nan() {
            return Err(Error::NonFinite {
                context: format!("hypothesis quantity at {at:?}"),
                value,
            });
        }
        if value < self.margin {
            self.margin = value;
            self.witness = at.to_vec();
        }
        Ok(())
    }
}

/// (H1): (u, v) ↦ Φ''(u)v² is convex, tested as Φ'' ≥ 0, Φ'''' ≥ 0 and
/// Φ''''Φ'' − 2Φ'''² ≥ 0 on the grid. The verdict is cross-checked against
/// the smallest eigenvalue of the Hessian of Φ''(u)v² at sampled (u, v).
pub fn check_h1(phi: &PhiFunction, grid: &IntervalGrid) -> Result<ConditionReport> {
    let pts = grid.points_inside(phi.interval())?;
    let mut tracker = Tracker::new();
    let mut psd_margin = f64::INFINITY;
    for &x in &pts {
        let (d2, d3, d4) = (phi.d2(x), phi.d3(x), phi.d4(x));
        let det_part = scaled(d4 * d2 - 2.0 * d3 * d3, (d4 * d2).abs() + 2.0 * d3 * d3);
        for q in [d2, d4, det_part] {
            tracker.offer(q, &[x])?;
        }
        let span = x.abs().max(1.0);
        for v in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
            let v = v * span;
            let (a, b, c) = (d4 * v * v, 2.0 * d3 * v, 2.0 * d2);
            let lam = sym2_min_eigenvalue(a, b, c);
            psd_margin = psd_margin.min(scaled(lam, a.abs() + c.abs() + 2.0 * b.abs()));
        }
    }
    let holds = tracker.margin >= -TOL_CONVEXITY;
    let psd_holds = psd_margin >= -TOL_CONVEXITY;
    let inconsistency = (holds != psd_holds).then(|| {
        format!(
            "derivative inequality says {holds} but Hessian sampling says {psd_holds} (min scaled eigenvalue {psd_margin:e})"
        )
    });
    Ok(ConditionReport {
        hypothesis: Hypothesis::H1,
        phi: phi.name().to_string(),
        holds,
        margin: tracker.margin,
        witness: tracker.witness,
        grid: vec![grid.clone()],
        tolerance: TOL_CONVEXITY,
        inconsistency,
    })
}

/// (H2): Ψ is non-negative and convex on I⁽²⁾. The grid runs over u and
/// w = u + v, so every sampled pair satisfies (u, u + v) ∈ I × I. Convexity
/// is tested through the trace and determinant of ∇²Ψ.
pub fn check_h2(
    phi: &PhiFunction,
    u_grid: &IntervalGrid,
    w_grid: &IntervalGrid,
) -> Result<ConditionReport> {
    let us = u_grid.points_inside(phi.interval())?;
    let ws = w_grid.points_inside(phi.interval())?;
    let mut tracker = Tracker::new();
    for &u in &us {
        let (fu, d1u, d2u, d3u) = (phi.eval(u), phi.d1(u), phi.d2(u), phi.d3(u));
        for &w in &ws {
            let v = w - u;
            let fw = phi.eval(w);
            let d2w = phi.d2(w);
            let psi = if v == 0.0 { 0.0 } else { fw - fu - d1u * v };
            let psi_s = scaled(psi, fw.abs() + fu.abs() + (d1u * v).abs());
            let h11 = d2w - d2u - d3u * v;
            let trace = scaled(h11 + d2w, 2.0 * d2w.abs() + d2u.abs() + (d3u * v).abs());
            let det = d2u * (d2w - d2u) - d2w * d3u * v;
            let det_s = scaled(det, (d2u * (d2w - d2u)).abs() + (d2w * d3u * v).abs());
            for q in [psi_s, trace, det_s] {
                tracker.offer(q, &[u, v])?;
            }
        }
    }
    Ok(ConditionReport {
        hypothesis: Hypothesis::H2,
        phi: phi.name().to_string(),
        holds: tracker.margin >= -TOL_CONVEXITY,
        margin: tracker.margin,
        witness: tracker.witness,
        grid: vec![u_grid.clone(), w_grid.clone()],
        tolerance: TOL_CONVEXITY,
        inconsistency: None,
    })
}

/// (H2'): Φ'' is convex, non-negative and non-increasing. Also runs
/// [`check_h2`] on the square grid, since (H2') implies (H2).
pub fn check_h2prime(phi: &PhiFunction, grid: &IntervalGrid) -> Result<ConditionReport> {
    let pts = grid.points_inside(phi.interval())?;
    let mut tracker = Tracker::new();
    for &x in &pts {
        for q in [phi.d2(x), -phi.d3(x), phi.d4(x)] {
            tracker.offer(q, &[x])?;
        }
    }
    let holds = tracker.margin >= -TOL_CONVEXITY;
    let h2 = check_h2(phi, grid, grid)?;
    let inconsistency = (holds && !h2.holds).then(|| {
        format!(
            "H2prime holds but H2 fails (margin {:e} at {:?})",
            h2.margin, h2.witness
        )
    });
    Ok(ConditionReport {
        hypothesis: Hypothesis::H2Prime,
        phi: phi.name().to_string(),
        holds,
        margin: tracker.margin,
        witness: tracker.witness,
        grid: vec![grid.clone()],
        tolerance: TOL_CONVEXITY,
        inconsistency,
    })
}

/// Run one checker on the default grid of Φ's interval.
pub fn check_default(phi: &PhiFunction, hypothesis: Hypothesis) -> Result<ConditionReport> {
    let grid = IntervalGrid::default_for(phi.interval());
    match hypothesis {
        Hypothesis::H1 => check_h1(phi, &grid),
        Hypothesis::H2 => check_h2(phi, &grid, &grid),
        Hypothesis::H2Prime => check_h2prime(phi, &grid),
    }
}

/// Check on the default grid and refuse when the hypothesis fails.
pub fn certify(phi: &PhiFunction, hypothesis: Hypothesis) -> Result<ConditionReport> {
    let report = check_default(phi, hypothesis)?;
    if report.holds {
        Ok(report)
    } else {
        Err(Error::HypothesisRefused {
            hypothesis: hypothesis.to_string(),
            phi: phi.name().to_string(),
            margin: report.margin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::cone_combine;

    fn log_grid() -> IntervalGrid {
        IntervalGrid::log(1e-3, 1e3, 201).unwrap()
    }

    fn small_log_grid() -> IntervalGrid {
        IntervalGrid::log(0.01, 100.0, 61).unwrap()
    }

    #[test]
    fn h1_examples() {
        let g = IntervalGrid::log(0.01, 100.0, 201).unwrap();
        let r = check_h1(&PhiFunction::xlogx(), &g).unwrap();
        assert!(r.holds && r.inconsistency.is_none(), "{r:?}");
        assert!(check_h1(&PhiFunction::power(1.5).unwrap(), &g).unwrap().holds);
        let r = check_h1(&PhiFunction::power(4.0).unwrap(), &g).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witness.len(), 1);
        assert!(r.inconsistency.is_none());
        // oracle: Φ''''Φ'' − 2Φ'''² = 288x² − 1152x² < 0 at the witness
        let x = r.witness[0];
        assert!(288.0 * x * x - 1152.0 * x * x < 0.0);
    }

    #[test]
    fn h1_on_quadratics() {
        let g = IntervalGrid::default_for(Interval::REAL);
        assert!(check_h1(&PhiFunction::square(), &g).unwrap().holds);
        let q = PhiFunction::quadratic(0.5, -2.0, 3.0).unwrap();
        assert!(check_h1(&q, &g).unwrap().holds);
    }

    #[test]
    fn h2_examples() {
        let g = small_log_grid();
        assert!(check_h2(&PhiFunction::xlogx(), &g, &g).unwrap().holds);
        let r = IntervalGrid::linear(-50.0, 50.0, 41).unwrap();
        let sq = check_h2(&PhiFunction::square(), &r, &r).unwrap();
        assert!(sq.holds);
        // Hessian of Ψ for x² is [[0,0],[0,2]]: the determinant part is zero
        assert!(sq.margin.abs() < 1e-12);
    }

    #[test]
    fn h2_for_quartic_matches_determinant_oracle() {
        let g = small_log_grid();
        let r = check_h2(&PhiFunction::power(4.0).unwrap(), &g, &g).unwrap();
        // independent route: det ∇²Ψ = Φ''(u)(Φ''(w) − Φ''(u)) − Φ''(w)Φ'''(u)(w − u)
        // with Φ'' = 12x², Φ''' = 24x
        let pts = g.points();
        let mut min_det: f64 = f64::INFINITY;
        for &u in &pts {
            for &w in &pts {
                let det = 12.0 * u * u * (12.0 * w * w - 12.0 * u * u)
                    - 12.0 * w * w * 24.0 * u * (w - u);
                min_det = min_det.min(det);
            }
        }
        assert!(min_det < 0.0);
        assert!(!r.holds);
        assert!(r.margin < -TOL_CONVEXITY);
    }

    #[test]
    fn h2prime_examples() {
        let g = small_log_grid();
        let r = check_h2prime(&PhiFunction::xlogx(), &g).unwrap();
        assert!(r.holds && r.inconsistency.is_none());
        let line = IntervalGrid::linear(-10.0, 10.0, 21).unwrap();
        assert!(check_h2prime(&PhiFunction::square(), &line).unwrap().holds);
        let cubic =
            cone_combine(&[(PhiFunction::power(3.0).unwrap(), 1.0 / 6.0)], (0.0, 0.0)).unwrap();
        let r = check_h2prime(&cubic, &g).unwrap();
        assert!(!r.holds);
        // Φ''' = 1 > 0 so the -Φ''' term is the binding one
        assert!((r.margin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_three_hold_on_full_default_grid() {
        for phi in [
            PhiFunction::xlogx(),
            PhiFunction::power(1.5).unwrap(),
            PhiFunction::square(),
        ] {
            let g = if phi.interval().is_real_line() {
                IntervalGrid::default_for(phi.interval())
            } else {
                log_grid()
            };
            assert!(check_h1(&phi, &g).unwrap().holds, "{}", phi.name());
            assert!(check_h2(&phi, &g, &g).unwrap().holds, "{}", phi.name());
            assert!(check_h2prime(&phi, &g).unwrap().holds, "{}", phi.name());
        }
    }

    #[test]
    fn grid_must_avoid_endpoints() {
        let g = IntervalGrid::linear(-1.0, 1.0, 5).unwrap();
        assert!(check_h1(&PhiFunction::xlogx(), &g).is_err());
        assert!(IntervalGrid::linear(1.0, 1.0, 5).is_err());
        assert!(IntervalGrid::linear(0.0, 1.0, 2).is_err());
        assert!(IntervalGrid::log(0.0, 1.0, 5).is_err());
    }

    #[test]
    fn certify_refuses_quartic() {
        assert!(certify(&PhiFunction::xlogx(), Hypothesis::H1).is_ok());
        let err = certify(&PhiFunction::power(4.0).unwrap(), Hypothesis::H1).unwrap_err();
        assert!(matches!(err, Error::HypothesisRefused { .. }));
    }
}
