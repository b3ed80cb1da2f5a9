//! Falsification-style numerical checks of the depth-versus-breadth results.
//! Premises are validated on a grid first; conclusions are only asserted
//! when the premises hold.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{geometric_grid, omega_star, Curve, OmegaStarSet, PolicyProfile};

/// Relative tolerance for comparing maximizer locations.
pub const GRID_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A premise does not hold; nothing was asserted.
    PremiseUnmet,
    /// Premises hold but the sweep was too short to exhibit the property.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::PremiseUnmet => "PREMISE UNMET",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub verdict: Verdict,
    pub premises: Vec<(String, bool)>,
    pub conclusions: Vec<(String, bool)>,
    pub notes: Vec<String>,
    /// Smallest swept budget from which every maximizer is interior.
    pub b_bar: Option<f64>,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            verdict: Verdict::Pass,
            premises: Vec::new(),
            conclusions: Vec::new(),
            notes: Vec::new(),
            b_bar: None,
        }
    }

    fn premise(&mut self, what: impl Into<String>, holds: bool) -> bool {
        self.premises.push((what.into(), holds));
        holds
    }

    fn conclude(&mut self, what: impl Into<String>, holds: bool) {
        self.conclusions.push((what.into(), holds));
    }

    fn premises_hold(&self) -> bool {
        self.premises.iter().all(|p| p.1)
    }

    fn settle(mut self) -> Self {
        self.verdict = if !self.premises_hold() {
            Verdict::PremiseUnmet
        } else if self.conclusions.iter().all(|c| c.1) {
            self.verdict
        } else {
            Verdict::Fail
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", self.name, self.verdict)?;
        for (what, ok) in &self.premises {
            writeln!(f, "  premise    {} {what}", if *ok { "ok  " } else { "FAIL" })?;
        }
        for (what, ok) in &self.conclusions {
            writeln!(f, "  conclusion {} {what}", if *ok { "ok  " } else { "FAIL" })?;
        }
        if let Some(b) = self.b_bar {
            writeln!(f, "  B̄ = {b}")?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

fn scale_tol(values: &[f64]) -> f64 {
    1e-12 * (1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Non-negative first differences on the grid.
pub fn is_increasing(f: impl Fn(f64) -> f64, grid: &[f64]) -> bool {
    let v: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let tol = scale_tol(&v);
    v.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Non-increasing slopes between consecutive grid cells (the grid may be
/// uneven).
pub fn is_concave(f: impl Fn(f64) -> f64, grid: &[f64]) -> bool {
    let v: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let slopes: Vec<f64> = (1..grid.len()).map(|i| (v[i] - v[i - 1]) / (grid[i] - grid[i - 1])).collect();
    let tol = 1e-9 * (1.0 + slopes.iter().fold(0.0f64, |m, s| m.max(s.abs())));
    slopes.windows(2).all(|w| w[1] <= w[0] + tol)
}

fn is_non_increasing(v: &[f64]) -> bool {
    let tol = scale_tol(v);
    v.windows(2).all(|w| w[1] <= w[0] + tol)
}

fn is_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

const PREMISE_POINTS: usize = 2000;

fn shape_premises(report: &mut CheckReport, profile: &PolicyProfile, max_budget: f64) {
    let omegas = geometric_grid(profile.c0, max_budget.max(profile.c0 * 2.0), PREMISE_POINTS);
    let ns = geometric_grid(1.0, (max_budget / profile.c0).max(2.0), PREMISE_POINTS);
    report.premise("μ increasing on [c0, B]", is_increasing(|w| profile.mu(w), &omegas));
    report.premise("μ concave on [c0, B]", is_concave(|w| profile.mu(w), &omegas));
    report.premise("Q increasing on [1, B/c0]", is_increasing(|n| profile.q(n), &ns));
    report.premise("Q concave on [1, B/c0]", is_concave(|n| profile.q(n), &ns));
}

fn n_grid(profile: &PolicyProfile, max_budget: f64) -> Vec<f64> {
    geometric_grid(1.0, (max_budget / profile.c0).max(2.0), PREMISE_POINTS)
}

/// Maximizer locations are non-decreasing in B when N·Q′(N) is
/// non-increasing, and unique when N²·Q′(N) is decreasing.
pub fn check_budget_monotonicity(profile: &PolicyProfile, budgets: &[f64], points: usize) -> CheckReport {
    let mut r = CheckReport::new("monotonicity in B");
    let max_b = budgets.iter().copied().fold(profile.c0, f64::max);
    shape_premises(&mut r, profile, max_b);
    let ns = n_grid(profile, max_b);
    let nq: Vec<f64> = ns.iter().map(|&n| n * profile.q.d1(n)).collect();
    let n2q: Vec<f64> = ns.iter().map(|&n| n * n * profile.q.d1(n)).collect();
    r.premise("N·Q′(N) non-increasing", is_non_increasing(&nq));
    let unique = is_decreasing(&n2q);
    r.notes.push(format!(
        "N²·Q′(N) {} decreasing: uniqueness {}",
        if unique { "is" } else { "is not" },
        if unique { "asserted" } else { "not asserted" }
    ));
    if !r.premises_hold() {
        return r.settle();
    }
    let sets: Vec<OmegaStarSet> = budgets.iter().map(|&b| omega_star(profile, b, points)).collect();
    for w in sets.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        r.conclude(
            format!("lower ω* {:.6} (B={}) ≤ {:.6} (B={})", a.lower(), a.budget, b.lower(), b.budget),
            a.lower() <= b.lower() * (1.0 + GRID_TOLERANCE),
        );
        r.conclude(
            format!("upper ω* {:.6} (B={}) ≤ {:.6} (B={})", a.upper(), a.budget, b.upper(), b.budget),
            a.upper() <= b.upper() * (1.0 + GRID_TOLERANCE),
        );
    }
    if unique {
        for s in &sets {
            r.conclude(format!("single maximizer at B={} ({} found)", s.budget, s.omegas.len()), s.is_singleton());
        }
    }
    r.settle()
}

/// With μ and Q bounded, every maximizer is interior for all large enough
/// budgets. Reports the smallest budget of the sweep from which that holds.
pub fn check_interior_optimum(profile: &PolicyProfile, budgets: &[f64], points: usize) -> CheckReport {
    let mut r = CheckReport::new("interior optimum");
    let max_b = budgets.iter().copied().fold(profile.c0, f64::max);
    shape_premises(&mut r, profile, max_b);
    r.premise("μ bounded above", profile.mu.upper_bound().is_some());
    r.premise("Q bounded above", profile.q.upper_bound().is_some());
    let q1 = profile.q.d1(1.0);
    if !r.premise("Q′(1) > 0 (Q strictly increasing)", q1 > 0.0) {
        r.notes.push(format!("Q′(1) = {q1}: without gain from a second run, one long run stays optimal"));
    }
    r.premise("μ′(c0) > 0", profile.mu.d1(profile.c0) > 0.0);

    let mut sorted = budgets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let interior: Vec<(f64, bool, f64, f64)> = sorted
        .iter()
        .map(|&b| {
            let s = omega_star(profile, b, points);
            (b, s.is_interior(), s.lower(), s.upper())
        })
        .collect();
    let from = interior.iter().rposition(|x| !x.1).map_or(0, |i| i + 1);
    r.b_bar = interior.get(from).map(|x| x.0);
    for (b, inside, lo, hi) in &interior {
        r.notes.push(format!("B={b}: Ω* ⊂ [{lo:.6}, {hi:.6}], interior: {inside}"));
    }
    if !r.premises_hold() {
        return r.settle();
    }
    match r.b_bar {
        Some(b) => r.conclude(format!("every maximizer interior for all swept B ≥ {b}"), true),
        None => {
            r.notes.push("B̄ not found in sweep".into());
            r.verdict = Verdict::Inconclusive;
        }
    }
    r.settle()
}

/// `x·h′(x)` decays to zero for a bounded, increasing, concave `h`. The
/// derivative is estimated by central differences.
pub fn check_bounded_decay(h: &Curve, x_min: f64, x_max: f64, points: usize) -> CheckReport {
    let mut r = CheckReport::new("bounded concave decay");
    let grid = geometric_grid(x_min, x_max, points);
    r.premise("h bounded above", h.upper_bound().is_some());
    r.premise("h increasing", is_increasing(|x| h.value(x), &grid));
    r.premise("h concave", is_concave(|x| h.value(x), &grid));
    if !r.premises_hold() {
        return r.settle();
    }
    let g: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let d = 1e-4 * x;
            x * (h.value(x + d) - h.value(x - d)) / (2.0 * d)
        })
        .collect();
    let peak = g
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > g[best] { i } else { best });
    // finite differences of a nearly flat curve carry rounding noise
    let noise = 1e-9;
    let monotone = g[peak..].windows(2).all(|w| w[1] <= w[0] + noise);
    let last = *g.last().unwrap();
    r.conclude(format!("x·h′(x) non-increasing beyond x = {:.4}", grid[peak]), monotone);
    r.conclude(format!("x·h′(x) = {last:.3e} < 1e-3 at x = {x_max}"), last < 1e-3);
    r.settle()
}

/// A policy with uniformly larger μ′ (same Q, same μ(c0)) has a larger Z
/// everywhere and maximizers that are no smaller.
pub fn check_derivative_dominance(p1: &PolicyProfile, p2: &PolicyProfile, budgets: &[f64], points: usize) -> CheckReport {
    let mut r = CheckReport::new("monotonicity in μ′");
    let max_b = budgets.iter().copied().fold(p1.c0, f64::max);
    shape_premises(&mut r, p1, max_b);
    shape_premises(&mut r, p2, max_b);
    r.premise("same Q and c0", p1.q == p2.q && p1.c0 == p2.c0);
    let at_c0 = (p1.mu(p1.c0) - p2.mu(p2.c0)).abs();
    r.premise("μ₁(c0) = μ₂(c0)", at_c0 <= 1e-12 * (1.0 + p1.mu(p1.c0).abs()));
    let omegas = geometric_grid(p1.c0, max_b, PREMISE_POINTS);
    r.premise(
        "μ₂′ ≥ μ₁′ on [c0, B]",
        omegas.iter().all(|&w| p2.mu.d1(w) >= p1.mu.d1(w) - 1e-15),
    );
    if !r.premises_hold() {
        return r.settle();
    }
    for &b in budgets {
        let grid = geometric_grid(p1.c0, b, points);
        let dominated = grid.iter().all(|&w| {
            let (z1, z2) = (p1.z(b, w).unwrap(), p2.z(b, w).unwrap());
            z2 >= z1 - 1e-12 * (1.0 + z1.abs())
        });
        r.conclude(format!("Z₂ ≥ Z₁ on the grid at B={b}"), dominated);
        let (s1, s2) = (omega_star(p1, b, points), omega_star(p2, b, points));
        r.conclude(
            format!("lower ω*: {:.6} ≥ {:.6} at B={b}", s2.lower(), s1.lower()),
            s2.lower() >= s1.lower() * (1.0 - GRID_TOLERANCE),
        );
        r.conclude(
            format!("upper ω*: {:.6} ≥ {:.6} at B={b}", s2.upper(), s1.upper()),
            s2.upper() >= s1.upper() * (1.0 - GRID_TOLERANCE),
        );
    }
    r.settle()
}

#[cfg(test)]
mod tests {
    use super::super::shipped;
    use super::*;

    const BUDGETS: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

    #[test]
    fn light_tailed_gain_passes_with_uniqueness() {
        let r = check_budget_monotonicity(&shipped::light_tailed(), &BUDGETS, 1000);
        assert!(r.passed(), "{r}");
        assert!(r.conclusions.iter().any(|c| c.0.starts_with("single maximizer")));
    }

    #[test]
    fn logarithmic_gain_is_the_boundary_case() {
        let r = check_budget_monotonicity(&shipped::log_gain(), &BUDGETS, 1000);
        assert!(r.passed(), "{r}");
        assert!(!r.conclusions.iter().any(|c| c.0.starts_with("single maximizer")));
    }

    #[test]
    fn heavy_tailed_gain_is_flagged() {
        // N·Q′ = 0.01·N·e^(−0.01 N) grows for N < 100
        let p = PolicyProfile {
            q: Curve::ExpSaturating {
                scale: 1.0,
                rate: 0.01,
                offset: 0.0,
            },
            ..shipped::bounded()
        };
        let r = check_budget_monotonicity(&p, &BUDGETS, 500);
        assert_eq!(r.verdict, Verdict::PremiseUnmet);
        assert!(r.conclusions.is_empty());
    }

    #[test]
    fn bounded_profile_has_an_interior_regime() {
        let sweep: Vec<f64> = (1..=8).map(|k| 10f64.powi(k) / 2.0).collect();
        let r = check_interior_optimum(&shipped::bounded(), &sweep, 1000);
        assert!(r.passed(), "{r}");
        assert!(r.b_bar.is_some());
    }

    #[test]
    fn no_gain_keeps_the_boundary_maximizer() {
        let p = PolicyProfile {
            q: Curve::Constant { value: 0.0 },
            ..shipped::bounded()
        };
        // μ = 1 − e^(−ω) is indistinguishable from 1 in double precision past ω ≈ 37
        let r = check_interior_optimum(&p, &[10.0, 20.0, 30.0], 500);
        assert_eq!(r.verdict, Verdict::PremiseUnmet);
        assert!(r.b_bar.is_none());
        assert!(r.notes.iter().any(|n| n.contains("Q′(1) = 0")));
    }

    #[test]
    fn decay_holds_for_bounded_curves() {
        for h in [
            shipped::exp_mu(),
            Curve::PowerLaw {
                scale: 1.0,
                exponent: 1.0,
                offset: 0.0,
            },
            Curve::PowerLaw {
                scale: 2.0,
                exponent: 0.75,
                offset: 0.0,
            },
        ] {
            let r = check_bounded_decay(&h, 1.0, 1e6, 2000);
            assert!(r.passed(), "{r}");
        }
        let unbounded = check_bounded_decay(&Curve::Log { scale: 1.0, offset: 0.0 }, 1.0, 1e6, 200);
        assert_eq!(unbounded.verdict, Verdict::PremiseUnmet);
    }

    #[test]
    fn dominating_mean_shifts_maximizers_right() {
        let budgets: Vec<f64> = (0..20).map(|k| 10f64 * 1.5f64.powi(k)).collect();
        let r = check_derivative_dominance(&shipped::bounded(), &shipped::dominating(), &budgets, 800);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn identical_means_are_degenerate_dominance() {
        let p = shipped::bounded();
        let r = check_derivative_dominance(&p, &p, &[10.0, 1000.0], 500);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn faster_saturation_does_not_dominate() {
        let p2 = PolicyProfile {
            mu: Curve::ExpSaturating {
                scale: 1.0,
                rate: 2.0,
                offset: shipped::bounded().mu(1.0) - (1.0 - (-2f64).exp()),
            },
            ..shipped::bounded()
        };
        let r = check_derivative_dominance(&shipped::bounded(), &p2, &[100.0], 500);
        assert_eq!(r.verdict, Verdict::PremiseUnmet);
    }

    #[test]
    fn grid_validators_agree_with_closed_form_derivatives() {
        let curves = [
            shipped::exp_mu(),
            Curve::PowerLaw {
                scale: 0.5,
                exponent: 2.0,
                offset: 0.0,
            },
            Curve::Log { scale: 0.1, offset: 0.0 },
            Curve::Constant { value: 1.0 },
            Curve::ExpSaturating {
                scale: 1.0,
                rate: 0.01,
                offset: 0.0,
            },
        ];
        let grid = geometric_grid(1.0, 1e4, 2000);
        for c in curves {
            assert_eq!(is_increasing(|x| c.value(x), &grid), grid.iter().all(|&x| c.d1(x) >= 0.0));
            assert_eq!(is_concave(|x| c.value(x), &grid), grid.iter().all(|&x| c.d2(x) <= 0.0));
            let nq: Vec<f64> = grid.iter().map(|&n| n * c.d1(n)).collect();
            let closed = grid.iter().all(|&n| c.d1(n) + n * c.d2(n) <= 1e-15);
            assert_eq!(is_non_increasing(&nq), closed, "{c:?}");
        }
    }
}
