//! Depth versus breadth: how to split a total budget B into runs of budget
//! ω. The expected best fitness decomposes as Z_B(ω) = μ(ω) + Q(B/ω), where
//! μ is the mean fitness of one run and Q the order-statistic gain of the
//! best of N = B/ω runs (treated as a real number here).

pub mod bootstrap;
pub mod checks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bootstrap_restarts, budget_table, BootstrapEstimate, BootstrapError, TableRow};
pub use checks::{
    check_bounded_decay, check_budget_monotonicity, check_interior_optimum, check_derivative_dominance, CheckReport, Verdict,
};

/// Closed-form increasing concave curves with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Curve {
    /// `offset + scale·(1 − e^(−rate·x))`; bounded by `offset + scale`.
    ExpSaturating {
        scale: f64,
        rate: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + scale·(1 − x^(−exponent))`; bounded by `offset + scale`.
    PowerLaw {
        scale: f64,
        exponent: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + scale·ln x`; unbounded.
    Log {
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `value` everywhere.
    Constant { value: f64 },
}

impl Curve {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Curve::ExpSaturating { scale, rate, offset } => offset + scale * (-(-rate * x).exp_m1()),
            Curve::PowerLaw { scale, exponent, offset } => offset + scale * (1.0 - x.powf(-exponent)),
            Curve::Log { scale, offset } => offset + scale * x.ln(),
            Curve::Constant { value } => value,
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            Curve::ExpSaturating { scale, rate, .. } => scale * rate * (-rate * x).exp(),
            Curve::PowerLaw { scale, exponent, .. } => scale * exponent * x.powf(-exponent - 1.0),
            Curve::Log { scale, .. } => scale / x,
            Curve::Constant { .. } => 0.0,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            Curve::ExpSaturating { scale, rate, .. } => -scale * rate * rate * (-rate * x).exp(),
            Curve::PowerLaw { scale, exponent, .. } => {
                -scale * exponent * (exponent + 1.0) * x.powf(-exponent - 2.0)
            }
            Curve::Log { scale, .. } => -scale / (x * x),
            Curve::Constant { .. } => 0.0,
        }
    }

    /// Supremum, when the curve is bounded above.
    pub fn upper_bound(&self) -> Option<f64> {
        match *self {
            Curve::ExpSaturating { scale, offset, .. } | Curve::PowerLaw { scale, offset, .. } => {
                Some(offset + scale)
            }
            Curve::Log { .. } => None,
            Curve::Constant { value } => Some(value),
        }
    }

    /// Checks parameters; `at` names the curve in messages.
    pub fn validate(&self, at: &str) -> Result<(), ProfileError> {
        let bad = |field: &str, why: &str| ProfileError::Parameter {
            at: format!("{at}.{field}"),
            why: why.to_owned(),
        };
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(bad(field, "must be finite"))
            }
        };
        match *self {
            Curve::ExpSaturating { scale, rate, offset } => {
                finite("offset", offset)?;
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(bad("scale", "must be finite and non-negative"));
                }
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(bad("rate", "must be finite and positive"));
                }
            }
            Curve::PowerLaw { scale, exponent, offset } => {
                finite("offset", offset)?;
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(bad("scale", "must be finite and non-negative"));
                }
                if !(exponent.is_finite() && exponent > 0.0) {
                    return Err(bad("exponent", "must be finite and positive"));
                }
            }
            Curve::Log { scale, offset } => {
                finite("offset", offset)?;
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(bad("scale", "must be finite and non-negative"));
                }
            }
            Curve::Constant { value } => finite("value", value)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("{at}: {why}")]
    Parameter { at: String, why: String },
    #[error("ω = {omega} lies outside [{c0}, {budget}]")]
    Domain { omega: f64, c0: f64, budget: f64 },
}

/// A policy's (μ, Q) pair. `q` is shifted so that Q(1) = 0: a single run
/// gains nothing from order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyProfile {
    /// Smallest per-run budget (the cost of one query).
    pub c0: f64,
    pub mu: Curve,
    pub q: Curve,
}

impl PolicyProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(ProfileError::Parameter {
                at: "c0".into(),
                why: "must be finite and positive".into(),
            });
        }
        self.mu.validate("mu")?;
        self.q.validate("q")
    }

    pub fn mu(&self, omega: f64) -> f64 {
        self.mu.value(omega)
    }

    pub fn q(&self, n: f64) -> f64 {
        self.q.value(n) - self.q.value(1.0)
    }

    /// Z_B(ω) = μ(ω) + Q(B/ω), defined for c0 ≤ ω ≤ B.
    pub fn z(&self, budget: f64, omega: f64) -> Result<f64, ProfileError> {
        if !(omega >= self.c0 && omega <= budget) {
            return Err(ProfileError::Domain {
                omega,
                c0: self.c0,
                budget,
            });
        }
        Ok(self.z_unchecked(budget, omega))
    }

    fn z_unchecked(&self, budget: f64, omega: f64) -> f64 {
        self.mu(omega) + self.q(budget / omega)
    }

    /// ∂Z/∂ω = μ′(ω) − (B/ω²)·Q′(B/ω).
    pub fn dz_domega(&self, budget: f64, omega: f64) -> f64 {
        self.mu.d1(omega) - budget / (omega * omega) * self.q.d1(budget / omega)
    }
}

/// `z_of` in function form.
pub fn z_of(profile: &PolicyProfile, budget: f64, omega: f64) -> Result<f64, ProfileError> {
    profile.z(budget, omega)
}

/// Maximizers of Z_B over [c0, B].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaStarSet {
    pub budget: f64,
    /// Local maximizers with their values, sorted by ω.
    pub local: Vec<(f64, f64)>,
    /// The global maximizers among `local` (values within tolerance of the
    /// best), sorted by ω.
    pub omegas: Vec<f64>,
    /// The evaluation grid.
    pub grid: Vec<f64>,
}

impl OmegaStarSet {
    pub fn lower(&self) -> f64 {
        self.omegas[0]
    }

    pub fn upper(&self) -> f64 {
        *self.omegas.last().unwrap()
    }

    pub fn is_singleton(&self) -> bool {
        self.omegas.len() == 1
    }

    /// Whether every global maximizer is at least one grid cell away from
    /// both ends of [c0, B].
    pub fn is_interior(&self) -> bool {
        let n = self.grid.len();
        n >= 3 && self.lower() >= self.grid[1] && self.upper() <= self.grid[n - 2]
    }
}

/// Geometric grid of `points` values spanning [lo, hi].
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 || hi <= lo {
        return vec![lo];
    }
    let ratio = (hi / lo).ln();
    let mut g: Vec<f64> = (0..points)
        .map(|i| lo * (ratio * i as f64 / (points - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[points - 1] = hi;
    g
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Locates the maximizers of Z_B on a geometric grid of `points` values,
/// refining each grid-local maximum by golden-section search inside its
/// neighbouring cells.
pub fn omega_star(profile: &PolicyProfile, budget: f64, points: usize) -> OmegaStarSet {
    let c0 = profile.c0;
    let z = |w: f64| profile.z_unchecked(budget, w);
    if budget <= c0 {
        return OmegaStarSet {
            budget,
            local: vec![(c0, z(c0))],
            omegas: vec![c0],
            grid: vec![c0],
        };
    }
    let grid = geometric_grid(c0, budget, points.max(3));
    let values: Vec<f64> = grid.iter().map(|&w| z(w)).collect();
    let n = grid.len();
    let mut local: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        let left_ok = i == 0 || values[i] >= values[i - 1];
        let right_ok = i == n - 1 || values[i] >= values[i + 1];
        // a flat run counts once, at its left end
        let continues_plateau = i > 0 && values[i] == values[i - 1];
        if !(left_ok && right_ok) || continues_plateau {
            continue;
        }
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(n - 1)];
        let refined = golden_max(z, lo, hi);
        let mut best = (grid[i], values[i]);
        if z(refined) > best.1 {
            best = (refined, z(refined));
        }
        if local.last().is_none_or(|last| (last.0 - best.0).abs() > 1e-12 * best.0) {
            local.push(best);
        }
    }
    let top = local.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-10 * (1.0 + top.abs());
    let omegas = local.iter().filter(|l| l.1 >= top - tol).map(|l| l.0).collect();
    OmegaStarSet {
        budget,
        local,
        omegas,
        grid,
    }
}

/// Rows (ω, B, Z) over a geometric ω grid per budget, for contour plots.
pub fn z_grid(profile: &PolicyProfile, budgets: &[f64], points: usize) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::new();
    for &b in budgets {
        for w in geometric_grid(profile.c0, b, points) {
            rows.push((w, b, profile.z_unchecked(b, w)));
        }
    }
    rows
}

/// The profiles shipped with the crate: each satisfies the premises of the
/// check it is named after.
pub mod shipped {
    use super::{Curve, PolicyProfile};

    pub fn exp_mu() -> Curve {
        Curve::ExpSaturating {
            scale: 1.0,
            rate: 1.0,
            offset: 0.0,
        }
    }

    /// μ = 1 − e^(−ω), Q = 0.5·(1 − N^(−2)): N²Q′ = N^(−1) decreases, so the
    /// maximizer is unique and moves right with B.
    pub fn light_tailed() -> PolicyProfile {
        PolicyProfile {
            c0: 1.0,
            mu: exp_mu(),
            q: Curve::PowerLaw {
                scale: 0.5,
                exponent: 2.0,
                offset: 0.0,
            },
        }
    }

    /// μ = 1 − e^(−ω), Q = 0.1·ln N: N·Q′ is constant, the boundary case.
    pub fn log_gain() -> PolicyProfile {
        PolicyProfile {
            c0: 1.0,
            mu: exp_mu(),
            q: Curve::Log {
                scale: 0.1,
                offset: 0.0,
            },
        }
    }

    /// μ = 1 − e^(−ω), Q = 0.5·(1 − 1/N): both bounded, Q′(1) > 0.
    pub fn bounded() -> PolicyProfile {
        PolicyProfile {
            c0: 1.0,
            mu: exp_mu(),
            q: Curve::PowerLaw {
                scale: 0.5,
                exponent: 1.0,
                offset: 0.0,
            },
        }
    }

    /// A profile sharing Q with [`bounded`] whose μ′ dominates it on
    /// [1, ∞) and which agrees with it at c0 = 1: slower saturation at a
    /// larger scale, μ₂ = o + s·(1 − e^(−ω/2)) with s = 2.
    pub fn dominating() -> PolicyProfile {
        let base = bounded();
        let scale = 2.0;
        let rate = 0.5;
        let offset = base.mu(base.c0) - scale * (1.0 - (-rate * base.c0).exp());
        PolicyProfile {
            mu: Curve::ExpSaturating { scale, rate, offset },
            ..base
        }
    }
}
