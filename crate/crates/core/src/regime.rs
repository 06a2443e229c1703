//! Closed-form classification of a parameter set: corner attainability,
//! existence and uniqueness, edge hitting, and the product-form stationary law.
//!
//! Every verdict is a sufficient-condition check. `Unknown` means none of the
//! known conditions applies, not that the property fails.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::O2bpParams;

/// Absolute tolerance on the skew-symmetry residual `2 rho - beta/delta - gamma/alpha`.
pub const SKEW_TOLERANCE: f64 = 1e-12;

/// Relative slack on the quadratic C3 inequality, absorbing rounding from the square roots.
const C3_SLACK: f64 = 1e-12;

const C3_GRID_POINTS: usize = 200;
const C3_GRID_LOG10_MIN: f64 = -4.0;
const C3_GRID_LOG10_MAX: f64 = 4.0;
const C3_REFINE_ITERATIONS: usize = 40;

/// Condition that witnesses a corner verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConditionTag {
    C1,
    C2a,
    C2b,
    Cor4_3,
    C3 { lambda: f64, mu: f64 },
    Prop5_4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CornerStatus {
    AvoidedGuaranteed,
    HitsAlmostSurely,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerVerdict {
    pub status: CornerStatus,
    /// Present iff `status != Unknown`.
    pub witness: Option<ConditionTag>,
}

impl CornerVerdict {
    fn avoided(witness: ConditionTag) -> Self {
        Self { status: CornerStatus::AvoidedGuaranteed, witness: Some(witness) }
    }

    pub fn is_avoided(&self) -> bool {
        self.status == CornerStatus::AvoidedGuaranteed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExistenceKind {
    UniqueInPuncturedQuadrant,
    UniqueInFullQuadrant,
    /// Unique away from the corner; a solution started at the corner exists but
    /// its uniqueness is not settled.
    ExistsFromCornerUniquenessOpen,
    /// `1 + rho = alpha + gamma = beta + delta = 0`: the system lives on the line
    /// `x + y = x0 + y0`; unique off the corner, no solution from it.
    DegenerateLineSystem,
    NoSolution,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremTag {
    #[serde(rename = "Thm5_1(1)")]
    Thm5_1_1,
    #[serde(rename = "Thm5_1(2)")]
    Thm5_1_2,
    #[serde(rename = "Thm5_1(3)")]
    Thm5_1_3,
    #[serde(rename = "Thm5_2")]
    Thm5_2,
    #[serde(rename = "Thm5_3(1)")]
    Thm5_3_1,
    #[serde(rename = "Thm5_3(2)")]
    Thm5_3_2,
    #[serde(rename = "Thm5_3(3)")]
    Thm5_3_3,
    #[serde(rename = "Thm5_3(4)")]
    Thm5_3_4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceClass {
    pub kind: ExistenceKind,
    /// Present iff `kind != Unknown`.
    pub basis: Option<TheoremTag>,
    /// Corner-avoidance condition the basis relies on, when it needs one.
    pub witness: Option<ConditionTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeStatus {
    Avoided,
    HitAS,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeBasis {
    /// Pathwise comparison with the decoupled Bessel coordinate.
    BesselComparison,
    Prop6_1,
    Prop6_2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeVerdict {
    pub status: EdgeStatus,
    pub basis: Option<EdgeBasis>,
}

impl EdgeVerdict {
    const UNKNOWN: Self = Self { status: EdgeStatus::Unknown, basis: None };

    fn new(status: EdgeStatus, basis: EdgeBasis) -> Self {
        Self { status, basis: Some(basis) }
    }
}

/// Product of gamma laws `Gamma(a, c) x Gamma(b, d)` (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl StationaryLaw {
    pub fn x_law(&self) -> crate::stats::GammaLaw {
        crate::stats::GammaLaw { shape: self.a, rate: self.c }
    }

    pub fn y_law(&self) -> crate::stats::GammaLaw {
        crate::stats::GammaLaw { shape: self.b, rate: self.d }
    }

    pub fn mean(&self) -> (f64, f64) {
        (self.a / self.c, self.b / self.d)
    }
}

/// Why a parameter set has no product-form gamma invariant law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StationaryObstruction {
    NoDrift,
    SingularInteraction,
    /// `alpha eta - gamma theta <= 0`.
    NonPositiveYExponent,
    /// `delta theta - beta eta <= 0`.
    NonPositiveXExponent,
    SkewSymmetryViolated {
        residual: f64,
    },
}

impl std::fmt::Display for StationaryObstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NoDrift => write!(f, "theta = eta = 0: no constant drift"),
            Self::SingularInteraction => write!(f, "alpha*delta - beta*gamma = 0"),
            Self::NonPositiveYExponent => write!(f, "alpha*eta - gamma*theta must be > 0"),
            Self::NonPositiveXExponent => write!(f, "delta*theta - beta*eta must be > 0"),
            Self::SkewSymmetryViolated { residual } => {
                write!(f, "skew-symmetry 2*rho = beta/delta + gamma/alpha fails (residual {residual:e})")
            }
        }
    }
}

/// Everything the classifier can say about one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub params: O2bpParams,
    pub corner: CornerVerdict,
    pub existence: ExistenceClass,
    pub x_edge: EdgeVerdict,
    pub y_edge: EdgeVerdict,
    pub stationary_law: Option<StationaryLaw>,
    pub stationary_absence: Option<String>,
    pub supermartingale_coefficient: f64,
    /// Whether the supermartingale conditions on `(alpha, delta, rho, beta, gamma)` hold.
    pub supermartingale_conditions: bool,
}

/// `a x^2 + b x y + c y^2 >= 0` on the whole closed quadrant.
pub fn quadratic_nonneg(a: f64, b: f64, c: f64) -> bool {
    a >= 0.0 && c >= 0.0 && b >= -2.0 * (a * c).sqrt()
}

pub fn check_c1(p: &O2bpParams) -> bool {
    p.beta >= 0.0 && p.gamma >= 0.0 && -1.0 <= p.rho && p.rho <= p.alpha + p.delta
}

pub fn check_c2a(p: &O2bpParams) -> bool {
    p.alpha >= 0.5 && p.beta >= 0.0
}

pub fn check_c2b(p: &O2bpParams) -> bool {
    p.delta >= 0.5 && p.gamma >= 0.0
}

/// `max(alpha, delta) >= 1/2` and `2 rho <= beta/delta + gamma/alpha`.
pub fn check_cor4_3(p: &O2bpParams) -> bool {
    p.alpha.max(p.delta) >= 0.5 && 2.0 * p.rho <= p.beta / p.delta + p.gamma / p.alpha
}

/// `rho = 0`, `alpha = delta`, `|beta| = |gamma|` and the matching inequality:
/// `beta^2 <= alpha - 1/4` when `beta = -gamma`, `-beta <= alpha - 1/4` when `beta = gamma < 0`.
pub fn check_cor4_2(p: &O2bpParams) -> bool {
    if p.rho != 0.0 || p.alpha != p.delta {
        return false;
    }
    if p.beta == -p.gamma {
        p.beta * p.beta <= p.alpha - 0.25
    } else if p.beta == p.gamma && p.beta < 0.0 {
        -p.beta <= p.alpha - 0.25
    } else {
        false
    }
}

struct C3Terms {
    x_coeff: f64,
    y_coeff: f64,
    gap: f64,
}

fn c3_terms(p: &O2bpParams, lambda: f64, mu: f64) -> C3Terms {
    let x_coeff = lambda * p.alpha + mu * p.gamma;
    let y_coeff = lambda * p.beta + mu * p.delta;
    let lhs = ((lambda * x_coeff.max(0.0)).sqrt() + (mu * y_coeff.max(0.0)).sqrt()).powi(2);
    let rhs = 0.5 * (lambda * lambda + mu * mu + 2.0 * p.rho * lambda * mu);
    C3Terms { x_coeff, y_coeff, gap: lhs - rhs }
}

/// Condition C3 at a given `(lambda, mu)`, both positive.
pub fn check_c3_at(p: &O2bpParams, lambda: f64, mu: f64) -> bool {
    if !(lambda > 0.0 && mu > 0.0) {
        return false;
    }
    let t = c3_terms(p, lambda, mu);
    let scale = lambda * lambda + mu * mu;
    t.x_coeff >= 0.0 && t.y_coeff >= 0.0 && t.gap >= -C3_SLACK * scale
}

// Scale-free feasibility margin at (1, t); nonnegative iff C3 holds there.
fn c3_margin(p: &O2bpParams, t: f64) -> f64 {
    let terms = c3_terms(p, 1.0, t);
    let norm = 1.0 + t;
    let gap = terms.gap + C3_SLACK * (1.0 + t * t);
    (terms.x_coeff / norm).min(terms.y_coeff / norm).min(gap / (norm * norm))
}

/// Look for `(lambda, mu)` witnessing C3.
///
/// Closed-form candidates come first: `(delta, -beta)` when `beta < 0` and
/// `alpha >= 1/2`, the mirrored `(-gamma, alpha)` when `gamma < 0` and
/// `delta >= 1/2`, and `(1, 1)`. Then a logarithmic grid over `t = mu / lambda`
/// in `[1e-4, 1e4]` with `lambda = 1`, followed by a ternary refinement of the
/// best grid cell. `None` means no witness was found, not that C3 fails.
pub fn search_c3(p: &O2bpParams) -> Option<(f64, f64)> {
    let mut closed_forms = Vec::with_capacity(3);
    if p.beta < 0.0 && p.alpha >= 0.5 {
        closed_forms.push((p.delta, -p.beta));
    }
    if p.gamma < 0.0 && p.delta >= 0.5 {
        closed_forms.push((-p.gamma, p.alpha));
    }
    closed_forms.push((1.0, 1.0));
    if let Some(&hit) = closed_forms.iter().find(|(l, m)| check_c3_at(p, *l, *m)) {
        return Some(hit);
    }

    let step = (C3_GRID_LOG10_MAX - C3_GRID_LOG10_MIN) / (C3_GRID_POINTS - 1) as f64;
    let log_t = |i: usize| C3_GRID_LOG10_MIN + step * i as f64;
    let (best, best_margin) = (0..C3_GRID_POINTS)
        .map(|i| (i, c3_margin(p, 10f64.powf(log_t(i)))))
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });

    let mut lo = log_t(best.saturating_sub(1));
    let mut hi = log_t((best + 1).min(C3_GRID_POINTS - 1));
    for _ in 0..C3_REFINE_ITERATIONS {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if c3_margin(p, 10f64.powf(m1)) < c3_margin(p, 10f64.powf(m2)) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let refined = 10f64.powf(0.5 * (lo + hi));
    if check_c3_at(p, 1.0, refined) && c3_margin(p, refined) >= best_margin {
        return Some((1.0, refined));
    }
    let grid_t = 10f64.powf(log_t(best));
    if check_c3_at(p, 1.0, grid_t) {
        return Some((1.0, grid_t));
    }
    if check_c3_at(p, 1.0, refined) {
        return Some((1.0, refined));
    }
    None
}

/// `rho = 1`, `alpha delta > beta gamma`, `max(alpha, delta) < 1/2`, `max(beta, gamma) <= 0`.
pub fn check_prop5_4(p: &O2bpParams) -> bool {
    p.rho == 1.0 && p.determinant() > 0.0 && p.alpha.max(p.delta) < 0.5 && p.beta.max(p.gamma) <= 0.0
}

/// Re-evaluate a witness against `p`.
pub fn witness_holds(p: &O2bpParams, tag: ConditionTag) -> bool {
    match tag {
        ConditionTag::C1 => check_c1(p),
        ConditionTag::C2a => check_c2a(p),
        ConditionTag::C2b => check_c2b(p),
        ConditionTag::Cor4_3 => check_cor4_3(p),
        ConditionTag::C3 { lambda, mu } => check_c3_at(p, lambda, mu),
        ConditionTag::Prop5_4 => check_prop5_4(p),
    }
}

fn c3_witness(p: &O2bpParams) -> Option<ConditionTag> {
    search_c3(p).map(|(lambda, mu)| ConditionTag::C3 { lambda, mu })
}

/// Corner verdict. Avoidance conditions are tried in the order C1, C2a, C2b,
/// Cor4_3, C3; the first one that holds is the witness.
pub fn corner_verdict(p: &O2bpParams) -> CornerVerdict {
    let simple = [
        (ConditionTag::C1, check_c1(p)),
        (ConditionTag::C2a, check_c2a(p)),
        (ConditionTag::C2b, check_c2b(p)),
        (ConditionTag::Cor4_3, check_cor4_3(p)),
    ];
    if let Some((tag, _)) = simple.iter().find(|(_, ok)| *ok) {
        return CornerVerdict::avoided(*tag);
    }
    if let Some(tag) = c3_witness(p) {
        return CornerVerdict::avoided(tag);
    }
    if check_prop5_4(p) {
        return CornerVerdict { status: CornerStatus::HitsAlmostSurely, witness: Some(ConditionTag::Prop5_4) };
    }
    CornerVerdict { status: CornerStatus::Unknown, witness: None }
}

/// Existence and uniqueness class. Drift terms are ignored.
pub fn existence_class(p: &O2bpParams) -> Result<ExistenceClass> {
    p.validate()?;
    let known = |kind, basis, witness| ExistenceClass { kind, basis: Some(basis), witness };
    let unknown = ExistenceClass { kind: ExistenceKind::Unknown, basis: None, witness: None };

    if p.beta >= 0.0 && p.gamma >= 0.0 {
        let witness = if check_c1(p) {
            Some(ConditionTag::C1)
        } else if check_c2a(p) {
            Some(ConditionTag::C2a)
        } else if check_c2b(p) {
            Some(ConditionTag::C2b)
        } else {
            c3_witness(p)
        };
        return Ok(match witness {
            None => unknown,
            Some(w) if p.determinant() >= 0.0 => {
                known(ExistenceKind::UniqueInFullQuadrant, TheoremTag::Thm5_1_3, Some(w))
            }
            Some(w) => known(ExistenceKind::ExistsFromCornerUniquenessOpen, TheoremTag::Thm5_1_2, Some(w)),
        });
    }

    if p.beta * p.gamma < 0.0 {
        // The theorem lists C2a and C3; C2b and Cor4_3 are accepted after them
        // and recorded as the witness.
        let witness = if check_c2a(p) {
            Some(ConditionTag::C2a)
        } else if let Some(w) = c3_witness(p) {
            Some(w)
        } else if check_c2b(p) {
            Some(ConditionTag::C2b)
        } else if check_cor4_3(p) {
            Some(ConditionTag::Cor4_3)
        } else {
            None
        };
        return Ok(match witness {
            Some(w) => known(ExistenceKind::UniqueInPuncturedQuadrant, TheoremTag::Thm5_2, Some(w)),
            None => unknown,
        });
    }

    // beta <= 0 and gamma <= 0, not both zero.
    if p.determinant() > 0.0 {
        return Ok(known(ExistenceKind::UniqueInFullQuadrant, TheoremTag::Thm5_3_1, None));
    }
    if 1.0 + p.rho == 0.0 && p.alpha + p.gamma == 0.0 && p.beta + p.delta == 0.0 {
        return Ok(known(ExistenceKind::DegenerateLineSystem, TheoremTag::Thm5_3_3, None));
    }
    Ok(known(ExistenceKind::NoSolution, TheoremTag::Thm5_3_2, None))
}

fn x_edge_verdict(p: &O2bpParams, corner: &CornerVerdict) -> EdgeVerdict {
    use EdgeStatus::*;
    if p.alpha >= 0.5 && p.beta >= 0.0 {
        return EdgeVerdict::new(Avoided, EdgeBasis::BesselComparison);
    }
    if p.alpha >= 0.5 && corner.is_avoided() {
        return EdgeVerdict::new(Avoided, EdgeBasis::Prop6_1);
    }
    if p.alpha >= 0.5 && p.delta >= 0.5 {
        let bg = p.beta * p.gamma;
        if p.beta >= 0.0 || p.gamma >= 0.0 || (bg > 0.0 && bg <= (p.alpha - 0.5) * (p.delta - 0.5)) {
            return EdgeVerdict::new(Avoided, EdgeBasis::Prop6_2);
        }
    }
    if p.alpha < 0.5 && p.beta <= 0.0 {
        return EdgeVerdict::new(HitAS, EdgeBasis::BesselComparison);
    }
    EdgeVerdict::UNKNOWN
}

/// Verdicts for the edges `{x = 0}` and `{y = 0}`.
pub fn edge_verdicts(p: &O2bpParams) -> (EdgeVerdict, EdgeVerdict) {
    let corner = corner_verdict(p);
    let swapped = p.swapped();
    // The corner verdict is symmetric in the sense needed here: only avoidance matters.
    let swapped_corner = if corner.is_avoided() { corner } else { corner_verdict(&swapped) };
    (x_edge_verdict(p, &corner), x_edge_verdict(&swapped, &swapped_corner))
}

/// `2 rho - beta / delta - gamma / alpha`.
pub fn skew_residual(p: &O2bpParams) -> f64 {
    2.0 * p.rho - p.beta / p.delta - p.gamma / p.alpha
}

/// Product-form gamma invariant law of the drifted system, or the first
/// condition that rules it out.
pub fn stationary_law(p: &O2bpParams) -> std::result::Result<StationaryLaw, StationaryObstruction> {
    if !p.has_drift() {
        return Err(StationaryObstruction::NoDrift);
    }
    let det = p.determinant();
    if det == 0.0 {
        return Err(StationaryObstruction::SingularInteraction);
    }
    let y_exp = p.alpha * p.eta - p.gamma * p.theta;
    let x_exp = p.delta * p.theta - p.beta * p.eta;
    if y_exp <= 0.0 {
        return Err(StationaryObstruction::NonPositiveYExponent);
    }
    if x_exp <= 0.0 {
        return Err(StationaryObstruction::NonPositiveXExponent);
    }
    let residual = skew_residual(p);
    if residual.abs() > SKEW_TOLERANCE {
        return Err(StationaryObstruction::SkewSymmetryViolated { residual });
    }
    let c = 2.0 * p.alpha * x_exp / det;
    let d = 2.0 * p.delta * y_exp / det;
    if !(c > 0.0 && d > 0.0) {
        // Unreachable for valid parameters: skew-symmetry forces det > 0 here.
        return Err(StationaryObstruction::SingularInteraction);
    }
    Ok(StationaryLaw { a: 1.0 + 2.0 * p.alpha, b: 1.0 + 2.0 * p.delta, c, d })
}

/// Drift coefficient `(1-2a) b + (1-2d) g + rho (2a-1)(2d-1)` of `X^(1-2a) Y^(1-2d)`.
pub fn supermartingale_coefficient(p: &O2bpParams) -> f64 {
    (1.0 - 2.0 * p.alpha) * p.beta
        + (1.0 - 2.0 * p.delta) * p.gamma
        + p.rho * (2.0 * p.alpha - 1.0) * (2.0 * p.delta - 1.0)
}

/// Checks `alpha > 1/2`, `delta > 1/2`, `beta/(2 delta - 1) + gamma/(2 alpha - 1) >= rho > -1`,
/// naming the first inequality that fails.
pub fn supermartingale_conditions(p: &O2bpParams) -> std::result::Result<(), String> {
    if p.alpha <= 0.5 {
        return Err(format!("alpha > 1/2 fails (alpha = {})", p.alpha));
    }
    if p.delta <= 0.5 {
        return Err(format!("delta > 1/2 fails (delta = {})", p.delta));
    }
    // Multiplied through by (2 alpha - 1)(2 delta - 1) > 0, which is the negated coefficient.
    if supermartingale_coefficient(p) > 0.0 {
        let bound = p.beta / (2.0 * p.delta - 1.0) + p.gamma / (2.0 * p.alpha - 1.0);
        return Err(format!("beta/(2 delta - 1) + gamma/(2 alpha - 1) >= rho fails ({bound} < {})", p.rho));
    }
    if p.rho <= -1.0 {
        return Err("rho > -1 fails".to_string());
    }
    Ok(())
}

/// Full report for one parameter set.
pub fn classify(p: &O2bpParams) -> Result<RegimeReport> {
    p.validate()?;
    let (x_edge, y_edge) = edge_verdicts(p);
    let stationary = stationary_law(p);
    Ok(RegimeReport {
        params: *p,
        corner: corner_verdict(p),
        existence: existence_class(p)?,
        x_edge,
        y_edge,
        stationary_law: stationary.ok(),
        stationary_absence: stationary.err().map(|e| e.to_string()),
        supermartingale_coefficient: supermartingale_coefficient(p),
        supermartingale_conditions: supermartingale_conditions(p).is_ok(),
    })
}
