//! De Giorgi-type measurements on a computed solution: level-set statistics,
//! Caccioppoli ratios, the boundedness and oscillation iterations, and two
//! boundary probes (subminimizers near f ≥ 0, constancy near the natural
//! boundary).
//!
//! Gradients on this side are node upper gradients (largest incident
//! quotient). Constants are empirical: every inequality is measured with a
//! unit constant and the resulting ratio is compared against a budget.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::calculus::{edge_energy, upper_gradient, BoundaryField, NodeField, TraceExponents};
use crate::error::{Error, Result};
use crate::sampling;
use crate::space::{ball_from_distances, Domain, NodeIdx};

pub const DEFAULT_C_BUDGET: f64 = 1e3;
/// Relative slack for inequalities that hold exactly in real arithmetic.
const EXACT_TOL: f64 = 1e-12;

fn positive_part(v: f64, k: f64) -> f64 {
    (v - k).max(0.0)
}

fn distances(domain: &Domain, x: NodeIdx) -> Result<Vec<f64>> {
    domain.graph().check_index(x)?;
    Ok(domain.graph().distances_from(x))
}

fn boundary_value(domain: &Domain, f: &BoundaryField, z: NodeIdx) -> f64 {
    f.at(domain, z).unwrap_or(0.0)
}

/// u(k,r) from a distance vector; `None` when B(x,r) ∩ Ω has no mass.
fn u_level(domain: &Domain, u: &NodeField, dist: &[f64], k: f64, r: f64, p: f64) -> Option<f64> {
    let (mut mass, mut sum) = (0.0, 0.0);
    for &i in domain.interior() {
        if dist[i] < r {
            mass += domain.mu(i);
            sum += positive_part(u.get(i), k).powf(p) * domain.mu(i);
        }
    }
    (mass > 0.0).then(|| (sum / mass).powf(1.0 / p))
}

/// ψ(k,R); `None` when B(x,R) ∩ ∂Ω has no perimeter.
fn psi_level(domain: &Domain, u: &NodeField, dist: &[f64], k: f64, r: f64) -> Option<f64> {
    let (mut per, mut sum) = (0.0, 0.0);
    for &z in domain.boundary() {
        if dist[z] < r {
            per += domain.perimeter(z);
            sum += positive_part(u.get(z), k) * domain.perimeter(z);
        }
    }
    (per > 0.0).then_some(sum / per)
}

/// μ(A(k,r) ∩ Ω) and P(A(k,r) ∩ ∂Ω).
fn level_set_size(domain: &Domain, u: &NodeField, dist: &[f64], k: f64, r: f64) -> (f64, f64) {
    let mass = domain.interior().iter().filter(|&&i| dist[i] < r && u.get(i) > k).map(|&i| domain.mu(i)).sum();
    let per = domain.boundary().iter().filter(|&&z| dist[z] < r && u.get(z) > k).map(|&z| domain.perimeter(z)).sum();
    (mass, per)
}

fn interior_range(domain: &Domain, u: &NodeField, dist: &[f64], r: f64) -> Option<(f64, f64)> {
    domain
        .interior()
        .iter()
        .filter(|&&i| dist[i] < r)
        .map(|&i| u.get(i))
        .fold(None, |acc, v| Some(acc.map_or((v, v), |(hi, lo): (f64, f64)| (hi.max(v), lo.min(v)))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetStats {
    pub k: f64,
    pub x: String,
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub a_measure: f64,
    pub a_perimeter: f64,
    pub u_kr: f64,
    #[serde(rename = "psi_kR")]
    pub psi_k_big_r: f64,
    #[serde(rename = "M_R")]
    pub sup_big_r: f64,
    #[serde(rename = "m_R")]
    pub inf_big_r: f64,
}

pub fn level_set_stats(
    domain: &Domain,
    u: &NodeField,
    x: NodeIdx,
    k: f64,
    r: f64,
    big_r: f64,
    p: f64,
) -> Result<LevelSetStats> {
    let dist = distances(domain, x)?;
    if !domain.is_boundary(x) {
        return Err(Error::arg(format!("`{}` is not a boundary node", domain.id(x))));
    }
    if !(r > 0.0 && r <= big_r) {
        return Err(Error::arg(format!("need 0 < r ≤ R, got r = {r}, R = {big_r}")));
    }
    let u_kr = u_level(domain, u, &dist, k, r, p).ok_or(Error::BelowResolution(r))?;
    let psi = psi_level(domain, u, &dist, k, big_r).ok_or(Error::BelowResolution(big_r))?;
    let (hi, lo) = interior_range(domain, u, &dist, big_r).ok_or(Error::BelowResolution(big_r))?;
    let (a_measure, a_perimeter) = level_set_size(domain, u, &dist, k, r);
    Ok(LevelSetStats {
        k,
        x: domain.id(x).to_string(),
        r,
        big_r,
        a_measure,
        a_perimeter,
        u_kr,
        psi_k_big_r: psi,
        sup_big_r: hi,
        inf_big_r: lo,
    })
}

/// Both sides of the two Markov-type bounds for levels h < k:
/// (k−h)^p μ(A(k,r)) ≤ μ(B(x,r)∩Ω) u(h,r)^p and
/// (k−h) P(A(k,r)∩∂Ω) ≤ P(B(x,r)∩∂Ω) ψ(h,r).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSides {
    pub volume_lhs: f64,
    pub volume_rhs: f64,
    pub perimeter_lhs: f64,
    pub perimeter_rhs: f64,
}

impl MarkovSides {
    pub fn holds(&self) -> bool {
        let ok = |l: f64, r: f64| l <= r + EXACT_TOL * r.abs().max(l.abs()).max(1.0);
        ok(self.volume_lhs, self.volume_rhs) && ok(self.perimeter_lhs, self.perimeter_rhs)
    }
}

pub fn markov_sides(domain: &Domain, u: &NodeField, x: NodeIdx, h: f64, k: f64, r: f64, p: f64) -> Result<MarkovSides> {
    if !(h < k) {
        return Err(Error::arg(format!("need h < k, got h = {h}, k = {k}")));
    }
    let dist = distances(domain, x)?;
    let ball = ball_from_distances(&dist, r);
    let mass = domain.interior_measure(&ball);
    let per = domain.perimeter_measure(&ball);
    let uh = u_level(domain, u, &dist, h, r, p).unwrap_or(0.0);
    let psih = psi_level(domain, u, &dist, h, r).unwrap_or(0.0);
    let (am, ap) = level_set_size(domain, u, &dist, k, r);
    Ok(MarkovSides {
        volume_lhs: (k - h).powf(p) * am,
        volume_rhs: mass * uh.powf(p),
        perimeter_lhs: (k - h) * ap,
        perimeter_rhs: per * psih,
    })
}

/// η(y) = (1 − (d(x,y) − r)_+ / (R − r))_+ with graph distance d.
pub fn cutoff(domain: &Domain, x: NodeIdx, r: f64, big_r: f64) -> Result<NodeField> {
    if !(r > 0.0 && r < big_r) {
        return Err(Error::arg(format!("cut-off needs 0 < r < R, got r = {r}, R = {big_r}")));
    }
    let dist = distances(domain, x)?;
    Ok(NodeField::new(dist.iter().map(|&d| if d < r { 1.0 } else { (1.0 - (d - r) / (big_r - r)).max(0.0) }).collect()))
}

/// Amount by which the largest edge quotient of η exceeds 1/(R − r).
pub fn cutoff_slack(domain: &Domain, eta: &NodeField, r: f64, big_r: f64) -> f64 {
    let lip = upper_gradient(domain, eta).edge_quotients.into_iter().fold(0.0, f64::max);
    (lip - 1.0 / (big_r - r)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiTuple {
    pub x: NodeIdx,
    pub r: f64,
    pub big_r: f64,
    pub k: f64,
    /// Index of the level within its ball (for uniformity over levels).
    pub level: usize,
}

/// Level fractions t with k = m(R) + t (M(R) − m(R)); the last one is vacuous.
pub const LEVEL_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Boundary centres × radius pairs (R/2, R) with R − r ≥ 2ℓ_max × levels.
pub fn sample_degiorgi_tuples(domain: &Domain, u: &NodeField, centers: usize, seed: u64) -> Vec<DeGiorgiTuple> {
    let h = domain.graph().max_edge_len();
    let top = domain.closure_diameter() / 2.0;
    let mut radii = Vec::new();
    let mut j = 4.0;
    while (j + 0.5) * h <= top {
        radii.push((j + 0.5) * h);
        j *= 2.0;
    }
    if radii.is_empty() {
        radii.push(top.max(4.0 * h));
    }
    let mut out = Vec::new();
    for &x in &sampling::choose(domain.boundary(), centers, seed) {
        let dist = domain.graph().distances_from(x);
        for &big_r in &radii {
            let Some((hi, lo)) = interior_range(domain, u, &dist, big_r) else { continue };
            for (level, t) in LEVEL_FRACTIONS.iter().enumerate() {
                out.push(DeGiorgiTuple { x, r: big_r / 2.0, big_r, k: lo + t * (hi - lo), level });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiRow {
    pub x: String,
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub k: f64,
    pub level: usize,
    pub lhs: f64,
    pub rhs_volume: f64,
    pub rhs_boundary: f64,
    /// LHS / RHS, absent when RHS = 0.
    pub ratio: Option<f64>,
}

impl DeGiorgiRow {
    pub fn rhs(&self) -> f64 {
        self.rhs_volume + self.rhs_boundary
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeGiorgiReport {
    pub rows: Vec<DeGiorgiRow>,
    pub max_ratio: f64,
    pub level_max_ratio: Vec<f64>,
    pub c_budget: f64,
    /// Rows with RHS = 0 but LHS > 0.
    pub hard_failures: Vec<DeGiorgiRow>,
    pub passed: bool,
}

/// Both sides of the Caccioppoli inequality for (u − k)_+ on B(x,r) ⊂ B(x,R):
/// Σ_{B(x,r)∩Ω} g^p μ against (R−r)^{−p} Σ_{B(x,R)∩Ω} (u−k)_+^p μ + Σ_{B(x,R)∩∂Ω} |f| (u−k)_+ P.
pub fn degiorgi_row(
    domain: &Domain,
    u: &NodeField,
    f: &BoundaryField,
    p: f64,
    t: &DeGiorgiTuple,
) -> Result<DeGiorgiRow> {
    if !(t.r > 0.0 && t.r < t.big_r) {
        return Err(Error::arg(format!("need 0 < r < R, got r = {}, R = {}", t.r, t.big_r)));
    }
    let dist = distances(domain, t.x)?;
    let w = u.map(|v| positive_part(v, t.k));
    let g = upper_gradient(domain, &w).node_upper;
    let lhs: f64 = domain.interior().iter().filter(|&&i| dist[i] < t.r).map(|&i| g[i].powf(p) * domain.mu(i)).sum();
    let vol: f64 =
        domain.interior().iter().filter(|&&i| dist[i] < t.big_r).map(|&i| w.get(i).powf(p) * domain.mu(i)).sum();
    let rhs_volume = vol / (t.big_r - t.r).powf(p);
    let rhs_boundary: f64 = domain
        .boundary()
        .iter()
        .filter(|&&z| dist[z] < t.big_r)
        .map(|&z| boundary_value(domain, f, z).abs() * w.get(z) * domain.perimeter(z))
        .sum();
    let rhs = rhs_volume + rhs_boundary;
    Ok(DeGiorgiRow {
        x: domain.id(t.x).to_string(),
        r: t.r,
        big_r: t.big_r,
        k: t.k,
        level: t.level,
        lhs,
        rhs_volume,
        rhs_boundary,
        ratio: (rhs > 0.0).then(|| lhs / rhs),
    })
}

/// LHS below this with RHS = 0 counts as zero.
const VACUOUS_FLOOR: f64 = 1e-20;

pub fn check_degiorgi(
    domain: &Domain,
    u: &NodeField,
    f: &BoundaryField,
    p: f64,
    tuples: &[DeGiorgiTuple],
    c_budget: f64,
) -> Result<DeGiorgiReport> {
    let rows = tuples.iter().map(|t| degiorgi_row(domain, u, f, p, t)).collect::<Result<Vec<_>>>()?;
    let mut level_max_ratio = vec![0.0f64; tuples.iter().map(|t| t.level + 1).max().unwrap_or(0)];
    let mut max_ratio = 0.0f64;
    let mut hard_failures = Vec::new();
    for row in &rows {
        match row.ratio {
            Some(q) => {
                max_ratio = max_ratio.max(q);
                level_max_ratio[row.level] = level_max_ratio[row.level].max(q);
            }
            None if row.lhs > VACUOUS_FLOOR => hard_failures.push(row.clone()),
            None => {}
        }
    }
    let passed = hard_failures.is_empty() && max_ratio.is_finite() && max_ratio <= c_budget;
    Ok(DeGiorgiReport { rows, max_ratio, level_max_ratio, c_budget, hard_failures, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    /// Overrides for κ and κ̃; interval midpoints when `None`.
    pub kappa: Option<f64>,
    pub kappa_tilde: Option<f64>,
    /// Use the Ahlfors-regular trace exponent (ε = 0).
    pub ahlfors: bool,
    pub nu: u32,
    /// The constant C of the decay estimates.
    pub c: f64,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig { kappa: None, kappa_tilde: None, ahlfors: false, nu: 3, c: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiParams {
    pub s: f64,
    pub p: f64,
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub alpha: f64,
    pub beta: f64,
    pub aleph: f64,
    #[serde(rename = "C_f")]
    pub c_f: f64,
    /// Continuity exponents; `None` when not eligible.
    pub sigma: Option<f64>,
    pub tau: Option<f64>,
    pub tau_window: Option<[f64; 2]>,
    /// Exponents of the boundedness iteration.
    pub bounded_sigma: f64,
    pub bounded_tau: f64,
    pub d: Option<f64>,
    pub nu: u32,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub theta0: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub c: f64,
    pub eligible: bool,
}

fn within(lower: f64, upper: f64) -> bool {
    lower <= upper + EXACT_TOL * upper.abs().max(1.0)
}

pub fn compute_exponents(s: f64, p: f64, config: &ExponentConfig) -> Result<DeGiorgiParams> {
    if !(p > 1.0 && s > 1.0) {
        return Err(Error::arg(format!("need p > 1 and s > 1, got p = {p}, s = {s}")));
    }
    if p >= s {
        return Err(Error::TheoryInapplicable(format!("p = {p} ≥ s = {s}")));
    }
    let eligible = p * p - s * p + s > 0.0;
    let kappa_top = s / (s - p);
    let kappa = config.kappa.unwrap_or(if eligible { 0.5 * (p + kappa_top) } else { 0.5 * (1.0 + kappa_top) });
    let kappa_tilde = config.kappa_tilde.unwrap_or(0.5 * (1.0 + (s - 1.0) / (s - p)));
    if !(kappa > 1.0 && kappa < kappa_top) {
        return Err(Error::EmptyWindow { lower: 1.0, upper: kappa_top.min(kappa) });
    }
    let alpha = 1.0 - 1.0 / kappa;
    let beta = 1.0 - 1.0 / (kappa_tilde * p);
    let aleph = TraceExponents::new(s, p, kappa_tilde * p, config.ahlfors)?.aleph;

    let bounded_tau = [
        (2.0 * kappa_tilde * p - 1.0) / (kappa_tilde - 1.0),
        p * (kappa - 1.0),
        (2.0 * p + 2.0 * kappa - 1.0 - 1.0 / kappa_tilde) / (kappa - 1.0 / kappa_tilde),
    ]
    .into_iter()
    .fold(f64::MIN, f64::max);
    let bounded_sigma = (1.0 + 1.0 / alpha).max(bounded_tau * (1.0 - beta) + 1.0 + beta);
    let sigma_top = (bounded_tau / p - (1.0 + alpha)) / (1.0 - alpha);
    if !within(bounded_sigma, sigma_top) {
        return Err(Error::EmptyWindow { lower: bounded_sigma, upper: sigma_top });
    }

    let (mut sigma, mut tau, mut tau_window) = (None, None, None);
    if eligible {
        let a1 = alpha + 1.0 / p - 1.0;
        let b1 = beta + 1.0 / p - 1.0;
        let sg = ((alpha + 1.0) / alpha)
            .max(1.0 + beta + beta * (1.0 - beta) / b1)
            .max((1.0 + beta + p * alpha * (1.0 - beta)) / (1.0 - p * (1.0 - alpha) * (1.0 - beta)));
        let lo = (beta / b1).max(p * (sg - (sg - 1.0) * alpha));
        let hi = (sg - (1.0 + beta)) / (1.0 - beta);
        if a1 <= 0.0 || !within(lo, hi) {
            return Err(Error::EmptyWindow { lower: lo, upper: hi });
        }
        sigma = Some(sg);
        tau = Some((0.5 * (lo + hi)).clamp(lo.min(hi), hi.max(lo)));
        tau_window = Some([lo, hi]);
    }
    let c = config.c;
    let big_d = 2.0f64.max(c.powf(1.0 / alpha)).max(c.powf(1.0 / beta));
    Ok(DeGiorgiParams {
        s,
        p,
        kappa,
        kappa_tilde,
        alpha,
        beta,
        aleph,
        c_f: 0.0,
        sigma,
        tau,
        tau_window,
        bounded_sigma,
        bounded_tau,
        d: None,
        nu: config.nu.max(3),
        big_d,
        theta0: None,
        lambda1: None,
        lambda2: None,
        c,
        eligible,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Every exponent inequality of the continuity iteration and of the
/// boundedness iteration, by direct substitution (lhs ≤ rhs).
pub fn check_conditions(params: &DeGiorgiParams) -> Vec<ConditionCheck> {
    let (p, a, b) = (params.p, params.alpha, params.beta);
    let mut out = Vec::new();
    let mut push = |name: &str, lhs: f64, rhs: f64| {
        out.push(ConditionCheck { name: name.into(), lhs, rhs, holds: within(lhs, rhs) });
    };
    push("0 < alpha < 1", a.max(-a), 1.0 - f64::EPSILON);
    push("0 < beta < 1", b.max(-b), 1.0 - f64::EPSILON);
    let (bs, bt) = (params.bounded_sigma, params.bounded_tau);
    push("tau+beta+1-tau*beta-sigma <= 0", bt + b + 1.0 - bt * b - bs, 0.0);
    push("tau+beta+1-tau*beta-tau/p <= 0", bt + b + 1.0 - bt * b - bt / p, 0.0);
    push("alpha+1-sigma*alpha <= 0", a + 1.0 - bs * a, 0.0);
    push("sigma+alpha+1-sigma*alpha-tau/p <= 0", bs + a + 1.0 - bs * a - bt / p, 0.0);
    if let (Some(s), Some(t)) = (params.sigma, params.tau) {
        push("alpha+1/p-1 > 0", -(a + 1.0 / p - 1.0), -f64::MIN_POSITIVE);
        push("beta+1/p-1 > 0", -(b + 1.0 / p - 1.0), -f64::MIN_POSITIVE);
        push("sigma >= (alpha+1)/alpha", (a + 1.0) / a, s);
        push("tau >= p[sigma(1-alpha)+alpha]", p * (s * (1.0 - a) + a), t);
        push("tau >= beta/(beta+1/p-1)", b / (b + 1.0 / p - 1.0), t);
        push("tau <= (sigma-(1+beta))/(1-beta)", t, (s - (1.0 + b)) / (1.0 - b));
    }
    out
}

/// Right-hand sides of the two decay estimates, unit constant. The ψ bound is
/// returned in the general form (R^{1−ℵ}, R^{1−1/p−ℵ}) and in the
/// Ahlfors-regular form (R, R^{1−1/p}).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBounds {
    pub u_kr: f64,
    pub psi_kr: f64,
    pub u_bound: f64,
    pub psi_bound: f64,
    pub psi_bound_ahlfors: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn decay_bounds(
    domain: &Domain,
    u: &NodeField,
    f: &BoundaryField,
    x: NodeIdx,
    h: f64,
    k: f64,
    r: f64,
    big_r: f64,
    params: &DeGiorgiParams,
) -> Result<DecayBounds> {
    if !(h < k && r < big_r) {
        return Err(Error::arg("need h < k and r < R"));
    }
    let p = params.p;
    let dist = distances(domain, x)?;
    let u_h = u_level(domain, u, &dist, h, big_r, p).ok_or(Error::BelowResolution(big_r))?;
    let psi_h = psi_level(domain, u, &dist, h, big_r).ok_or(Error::BelowResolution(big_r))?;
    let c_f = local_sup(domain, f, &dist, big_r).powf(1.0 / p);
    let (a, b, al) = (params.alpha, params.beta, params.aleph);
    let lead = big_r / (big_r - r) * u_h;
    let tail = c_f * big_r.powf(1.0 - 1.0 / p) * psi_h.powf(1.0 / p);
    let u_bound = params.c * (u_h / (k - h)).powf(a) * (lead + tail);
    let pb = params.c * (psi_h / (k - h)).powf(b);
    let psi_bound =
        pb * (big_r.powf(1.0 - al) / (big_r - r) * u_h + c_f * big_r.powf(1.0 - 1.0 / p - al) * psi_h.powf(1.0 / p));
    let psi_bound_ahlfors = pb * (lead + tail);
    Ok(DecayBounds {
        u_kr: u_level(domain, u, &dist, k, r, p).unwrap_or(0.0),
        psi_kr: psi_level(domain, u, &dist, k, r).unwrap_or(0.0),
        u_bound,
        psi_bound,
        psi_bound_ahlfors,
    })
}

/// sup |f| over ∂Ω ∩ B(x,r).
fn local_sup(domain: &Domain, f: &BoundaryField, dist: &[f64], r: f64) -> f64 {
    domain.boundary().iter().zip(f.values()).filter(|(&z, _)| dist[z] < r).fold(0.0, |m, (_, v)| m.max(v.abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessStep {
    pub n: usize,
    pub r_n: f64,
    pub k_n: f64,
    pub u_kn_rn: f64,
    pub psi_kn_rn: f64,
    pub u_claim: f64,
    pub psi_claim: f64,
    pub holds: bool,
    /// B(x, r_n) and B(x, r_{n+1}) coincide as node sets.
    pub collapsed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub x: String,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub k0: f64,
    pub c: f64,
    #[serde(rename = "C_f")]
    pub c_f: f64,
    #[serde(rename = "C_fR")]
    pub c_f_r: f64,
    pub u0: f64,
    pub psi0: f64,
    pub d_est1: Option<f64>,
    pub d_est2: Option<f64>,
    pub d: f64,
    /// d / max(d_est1, d_est2).
    pub enlargement: f64,
    pub steps: Vec<BoundednessStep>,
    /// First n from which every later ball equals B(x, r_n).
    pub truncated_at: Option<usize>,
    pub half_ball_sup: Option<f64>,
    pub half_ball_trace_sup: Option<f64>,
    pub final_holds: bool,
    pub passed: bool,
    pub notes: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn run_boundedness(
    domain: &Domain,
    u: &NodeField,
    dist: &[f64],
    big_r: f64,
    k0: f64,
    d: f64,
    n_max: usize,
    sigma: f64,
    tau: f64,
    p: f64,
) -> Vec<BoundednessStep> {
    let u0 = u_level(domain, u, dist, k0, big_r, p).unwrap_or(0.0);
    let psi0 = psi_level(domain, u, dist, k0, big_r).unwrap_or(0.0);
    let radius = |n: usize| (1.0 + 0.5f64.powi(n as i32)) * big_r / 2.0;
    (0..=n_max)
        .map(|n| {
            let r_n = radius(n);
            let k_n = k0 + d * (1.0 - 0.5f64.powi(n as i32));
            let un = u_level(domain, u, dist, k_n, r_n, p).unwrap_or(0.0);
            let psin = psi_level(domain, u, dist, k_n, r_n).unwrap_or(0.0);
            let u_claim = 2.0f64.powf(-sigma * n as f64) * u0;
            let psi_claim = 2.0f64.powf(-tau * n as f64) * psi0;
            let ok = |v: f64, c: f64| v <= c + EXACT_TOL * c.max(v).max(f64::MIN_POSITIVE);
            let next = radius(n + 1);
            let collapsed = dist.iter().all(|&y| (y < r_n) == (y < next));
            BoundednessStep {
                n,
                r_n,
                k_n,
                u_kn_rn: un,
                psi_kn_rn: psin,
                u_claim,
                psi_claim,
                holds: ok(un, u_claim) && ok(psin, psi_claim),
                collapsed,
            }
        })
        .collect()
}

/// De Giorgi iteration r_n = (1 + 2^{−n}) R/2, k_n = k_0 + d(1 − 2^{−n}) with d
/// from the two d-estimates, using `c` as the constant of the decay estimates.
#[allow(clippy::too_many_arguments)]
pub fn boundedness_iteration(
    domain: &Domain,
    u: &NodeField,
    f: &BoundaryField,
    x: NodeIdx,
    big_r: f64,
    params: &DeGiorgiParams,
    k0: f64,
    n_max: usize,
    c: f64,
) -> Result<BoundednessReport> {
    if !(big_r > 0.0 && c > 0.0) {
        return Err(Error::arg("R and C must be positive"));
    }
    let dist = distances(domain, x)?;
    let p = params.p;
    let mut notes = Vec::new();
    if big_r >= domain.closure_diameter() / 4.0 {
        notes.push(format!("R = {big_r} is not below diam/4"));
    }
    let u0 = u_level(domain, u, &dist, k0, big_r, p).ok_or(Error::BelowResolution(big_r))?;
    let psi0 = psi_level(domain, u, &dist, k0, big_r).unwrap_or(0.0);
    let c_f = local_sup(domain, f, &dist, big_r).powf(1.0 / p);
    let al = params.aleph;
    let c_f_r = c * (1.0 + c_f * big_r.powf(1.0 - 1.0 / p) + big_r.powf(-al) + c_f * big_r.powf(1.0 - 1.0 / p - al));
    let (sigma, tau) = (params.bounded_sigma, params.bounded_tau);
    let mass = u0 + psi0.powf(1.0 / p);
    let d_est1 =
        (psi0 > 0.0).then(|| (c_f_r * 2.0f64.powf(tau) * mass / psi0.powf(1.0 - params.beta)).powf(1.0 / params.beta));
    let d_est2 =
        (u0 > 0.0).then(|| (c_f_r * 2.0f64.powf(sigma) * mass / u0.powf(1.0 - params.alpha)).powf(1.0 / params.alpha));
    let base = d_est1.unwrap_or(0.0).max(d_est2.unwrap_or(0.0));
    if base == 0.0 {
        notes.push("u(k0,R) = ψ(k0,R) = 0: u ≤ k0 on the ball, d = 0".into());
    }
    let mut d = base;
    let mut enlargement = 1.0;
    let mut steps = run_boundedness(domain, u, &dist, big_r, k0, d, n_max, sigma, tau, p);
    while base > 0.0 && steps.iter().any(|s| !s.holds) && enlargement < 2f64.powi(60) {
        enlargement *= 2.0;
        d = base * enlargement;
        steps = run_boundedness(domain, u, &dist, big_r, k0, d, n_max, sigma, tau, p);
    }
    if enlargement > 1.0 {
        notes.push(format!("d enlarged by {enlargement} for the decay claims to hold"));
    }
    let truncated_at = (0..steps.len()).find(|&n| steps[n..].iter().all(|s| s.collapsed));
    if let Some(n) = truncated_at {
        if n < n_max {
            notes.push(format!("balls coincide from n = {n}; later steps repeat the same node set"));
        }
    }
    let half = big_r / 2.0;
    let half_ball_sup = interior_range(domain, u, &dist, half).map(|(hi, _)| hi);
    let half_ball_trace_sup = domain
        .boundary()
        .iter()
        .filter(|&&z| dist[z] < half)
        .map(|&z| u.get(z))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let final_holds = half_ball_sup.is_none_or(|s| s <= k0 + d);
    if half_ball_sup.is_none() {
        notes.push("B(x,R/2) ∩ Ω is empty".into());
    }
    let passed = final_holds && steps.iter().all(|s| s.holds);
    Ok(BoundednessReport {
        x: domain.id(x).to_string(),
        big_r,
        k0,
        c,
        c_f,
        c_f_r,
        u0,
        psi0,
        d_est1,
        d_est2,
        d,
        enlargement,
        steps,
        truncated_at,
        half_ball_sup,
        half_ball_trace_sup,
        final_holds,
        passed,
        notes,
    })
}

/// R_max, R_max/2, … down to (but not below) the longest edge.
pub fn dyadic_grid(r_max: f64, resolution: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= resolution && out.len() < 64 {
        out.push(r);
        r /= 2.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignStatus {
    NonNegative,
    NonPositive,
    Zero,
    Changes,
}

/// Sign of f on the closed ball ∂Ω ∩ {d(x,·) ≤ r}.
pub fn sign_near(domain: &Domain, f: &BoundaryField, x: NodeIdx, r: f64) -> Result<SignStatus> {
    let dist = distances(domain, x)?;
    Ok(sign_from(domain, f, &dist, r))
}

fn sign_from(domain: &Domain, f: &BoundaryField, dist: &[f64], r: f64) -> SignStatus {
    let (mut pos, mut neg) = (false, false);
    for (&z, &v) in domain.boundary().iter().zip(f.values()) {
        if dist[z] <= r {
            pos |= v > 0.0;
            neg |= v < 0.0;
        }
    }
    match (pos, neg) {
        (true, true) => SignStatus::Changes,
        (true, false) => SignStatus::NonNegative,
        (false, true) => SignStatus::NonPositive,
        (false, false) => SignStatus::Zero,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub radius: f64,
    #[serde(rename = "M")]
    pub sup: f64,
    pub m: f64,
    pub osc: f64,
    /// osc(R) / osc(previous, larger R).
    pub contraction: Option<f64>,
    /// Smallest ν ≥ 3 whose density trigger holds at this and all smaller radii.
    pub nu_trigger: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub x: String,
    /// "applicable", "inapplicable" (f changes sign) or "ineligible" (exponent gate).
    pub status: String,
    pub sign: SignStatus,
    pub rows: Vec<OscillationRow>,
    pub theta_fit: Option<f64>,
    /// osc reaches 0 on the grid.
    pub collapsed: bool,
    pub non_increasing: bool,
    pub lambda_measured: Option<f64>,
    pub lambda_params: Option<f64>,
    pub params: Option<DeGiorgiParams>,
    pub passed: Option<bool>,
}

/// Least-squares slope of log osc against log R over positive oscillations.
fn log_slope(rows: &[OscillationRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.osc > 0.0).map(|r| (r.radius.ln(), r.osc.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

const NU_MAX: u32 = 52;
/// Oscillations at or below this count as zero.
pub const OSC_FLOOR: f64 = 1e-8;

/// Oscillation of u on B(x,R) ∩ Ω down a radius grid, with the contraction
/// factor λ of the continuity iteration for comparison.
pub fn oscillation_decay(
    domain: &Domain,
    u: &NodeField,
    f: &BoundaryField,
    x: NodeIdx,
    radii: &[f64],
    params: &DeGiorgiParams,
) -> Result<OscillationReport> {
    if radii.is_empty() {
        return Err(Error::arg("radius grid is empty"));
    }
    let dist = distances(domain, x)?;
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    let sign = sign_from(domain, f, &dist, radii[0]);
    let mut report = OscillationReport {
        x: domain.id(x).to_string(),
        status: "applicable".into(),
        sign,
        rows: Vec::new(),
        theta_fit: None,
        collapsed: false,
        non_increasing: true,
        lambda_measured: None,
        lambda_params: None,
        params: None,
        passed: None,
    };
    if sign == SignStatus::Changes {
        report.status = "inapplicable".into();
        return Ok(report);
    }
    if !params.eligible {
        report.status = "ineligible".into();
        return Ok(report);
    }
    // The iteration runs on u for f ≤ 0 and on −u for f ≥ 0.
    let orient = if sign == SignStatus::NonNegative { -1.0 } else { 1.0 };
    let v = u.map(|t| orient * t);
    let p = params.p;
    let big_d = params.big_d;
    let trigger = (4.0 * big_d).powf(-p);
    let ranges: Vec<Option<(f64, f64)>> = radii.iter().map(|&r| interior_range(domain, &v, &dist, r)).collect();
    let density = |k: f64, r: f64| -> f64 {
        let mass = domain.interior().iter().filter(|&&i| dist[i] < r).map(|&i| domain.mu(i)).sum::<f64>();
        let above =
            domain.interior().iter().filter(|&&i| dist[i] < r && v.get(i) > k).map(|&i| domain.mu(i)).sum::<f64>();
        if mass > 0.0 {
            above / mass
        } else {
            0.0
        }
    };
    let mut prev: Option<f64> = None;
    for (j, &r) in radii.iter().enumerate() {
        let Some((hi, lo)) = ranges[j] else { continue };
        let osc = hi - lo;
        let nu_trigger = (3..=NU_MAX).find(|&nu| {
            let level = hi - 0.5f64.powi(nu as i32 + 1) * osc;
            radii[j..].iter().all(|&s| density(level, s) <= trigger)
        });
        let contraction = prev.and_then(|q| (q > 0.0).then(|| osc / q));
        if let Some(q) = prev {
            if osc > q + EXACT_TOL * q.abs().max(1.0) {
                report.non_increasing = false;
            }
        }
        prev = Some(osc);
        report.rows.push(OscillationRow {
            radius: r,
            sup: if orient > 0.0 { hi } else { -lo },
            m: if orient > 0.0 { lo } else { -hi },
            osc,
            contraction,
            nu_trigger,
        });
    }
    let rows = &report.rows;
    if rows.is_empty() {
        return Err(Error::BelowResolution(radii[0]));
    }
    report.theta_fit = log_slope(rows);
    report.collapsed = rows.last().is_some_and(|r| r.osc <= OSC_FLOOR) && rows[0].osc > OSC_FLOOR;
    report.lambda_measured =
        rows.iter().filter_map(|r| r.contraction).fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))));

    // λ of the continuity iteration at the largest radius, with M − m taken as
    // the smallest positive oscillation on the grid.
    let mut q = params.clone();
    q.c_f = local_sup(domain, f, &dist, radii[0]).powf(1.0 / p);
    let top = &rows[0];
    let limit_osc = rows.iter().map(|r| r.osc).filter(|&o| o > OSC_FLOOR).fold(f64::INFINITY, f64::min);
    if top.osc > OSC_FLOOR {
        let nu = top.nu_trigger.unwrap_or(q.nu).max(q.nu);
        q.nu = nu;
        let (a, b) = (q.alpha, q.beta);
        let a_hat = (a + 1.0 / p - 1.0) / a;
        let b_hat = (b + 1.0 / p - 1.0) / b;
        let big_r = top.radius;
        let step = 0.5f64.powi(nu as i32 + 1);
        let l1 = 1.0 - step + q.c * big_r.powf((1.0 - 1.0 / p) / a) * step.powf(a_hat) / limit_osc.powf(1.0 - a_hat);
        let l2 = 1.0 - step + q.c * big_r.powf((1.0 - 1.0 / p) / b) * step.powf(b_hat) / limit_osc.powf(1.0 - b_hat);
        let lambda = (1.0 - 0.5 * step).max(l1).max(l2);
        let m_top = top.osc;
        let gap = step * m_top;
        q.d = Some(
            (gap / 4.0)
                .max(q.c * (big_r.powf(1.0 - 1.0 / p) * gap.powf(a + 1.0 / p - 1.0)).powf(1.0 / a))
                .max(q.c * (big_r.powf(1.0 - 1.0 / p) * gap.powf(b + 1.0 / p - 1.0)).powf(1.0 / b)),
        );
        q.lambda1 = Some(l1);
        q.lambda2 = Some(l2);
        q.theta0 = (lambda < 1.0).then(|| (1.0 / lambda).log2());
        report.lambda_params = Some(lambda);
    }
    report.params = Some(q);
    let decays = report.theta_fit.is_some_and(|t| t > 0.0) || report.collapsed;
    report.passed = Some(report.non_increasing && (rows[0].osc <= OSC_FLOOR || decays));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubminimizerTrial {
    pub trial: usize,
    pub amplitude: f64,
    pub energy_u: f64,
    pub energy_perturbed: f64,
    pub increase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubminimizerReport {
    pub x: String,
    pub r: f64,
    pub trials: usize,
    pub min_increase: f64,
    pub witness: Option<SubminimizerTrial>,
    pub tolerance: f64,
    pub passed: bool,
}

pub const SUBMINIMIZER_TOL: f64 = 1e-10;

/// Dirichlet energy of u on the edges meeting B(x,r) against that of u + φ for
/// random non-positive φ = −a ξ η with ξ ∈ [0,1) per node and η the cut-off
/// between r/2 and r. Trial 0 is φ ≡ 0.
#[allow(clippy::too_many_arguments)]
pub fn subminimizer_check(
    domain: &Domain,
    u: &NodeField,
    x: NodeIdx,
    r: f64,
    f: &BoundaryField,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<SubminimizerReport> {
    let dist = distances(domain, x)?;
    if let Some(&z) = domain.boundary().iter().find(|&&z| dist[z] < r && boundary_value(domain, f, z) < 0.0) {
        return Err(Error::Refused(format!(
            "f({}) = {} < 0 inside B({}, {r})",
            domain.id(z),
            boundary_value(domain, f, z),
            domain.id(x)
        )));
    }
    let eta = cutoff(domain, x, r / 2.0, r)?;
    let local = |w: &[f64]| local_energy(domain, w, p, &dist, r);
    let base = local(u.values());
    let scale = {
        let vals: Vec<f64> = domain.closure().iter().filter(|&&i| dist[i] < r).map(|&i| u.get(i)).collect();
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        (hi - lo).max(1.0)
    };
    let mut report = SubminimizerReport {
        x: domain.id(x).to_string(),
        r,
        trials,
        min_increase: f64::INFINITY,
        witness: None,
        tolerance: SUBMINIMIZER_TOL,
        passed: true,
    };
    for t in 0..trials {
        let mut rng = sampling::rng_for(seed, t as u64);
        let amplitude = if t == 0 { 0.0 } else { scale * 10f64.powf(rng.random_range(-6.0..0.0)) };
        let w: Vec<f64> = (0..domain.node_count())
            .map(|i| {
                let xi: f64 = rng.random_range(0.0..1.0);
                let phi = if domain.in_closure(i) { -amplitude * xi * eta.get(i) } else { 0.0 };
                u.get(i) + phi
            })
            .collect();
        let energy = local(&w);
        let increase = energy - base;
        let trial = SubminimizerTrial { trial: t, amplitude, energy_u: base, energy_perturbed: energy, increase };
        if increase < report.min_increase {
            report.min_increase = increase;
        }
        if increase < -SUBMINIMIZER_TOL && report.witness.as_ref().is_none_or(|w| increase < w.increase) {
            report.witness = Some(trial);
            report.passed = false;
        }
    }
    Ok(report)
}

/// Σ ω (|Δw|/ℓ)^p over energy edges with an endpoint in B(x,r).
fn local_energy(domain: &Domain, w: &[f64], p: f64, dist: &[f64], r: f64) -> f64 {
    let g = domain.graph();
    let within = |k: usize| {
        let e = g.edge(k);
        dist[e.a] < r || dist[e.b] < r
    };
    domain
        .energy_edges()
        .iter()
        .filter(|&&k| within(k))
        .map(|&k| {
            let e = g.edge(k);
            domain.edge_weight(k) * ((w[e.a] - w[e.b]).abs() / e.len).powf(p)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstancyBall {
    pub x: String,
    pub r: f64,
    pub osc: f64,
    /// Σ_{∂Ω ∩ B(x, r/2)} |f| P.
    pub data_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalBoundaryReport {
    pub tol: f64,
    pub tol_f: f64,
    /// Smallest radius considered.
    pub min_radius: f64,
    pub constancy_balls: Vec<ConstancyBall>,
    pub breaches: Vec<ConstancyBall>,
    pub passed: bool,
}

/// For every boundary node x, the largest radius r with osc(u on B(x,r) ∩ Ω̄) ≤ tol
/// (trace values included); the data must then vanish on B(x, r/2). Radii below
/// 2ℓ_max are skipped: a boundary node of the half-ball then has all its
/// neighbours inside the ball, which is what makes the statement hold discretely.
pub fn natural_boundary_check(
    domain: &Domain,
    u: &NodeField,
    f: &BoundaryField,
    tol: f64,
    tol_f: Option<f64>,
) -> Result<NaturalBoundaryReport> {
    let tol_f = tol_f.unwrap_or(1e-8 * f.l1_norm(domain));
    let min_radius = 2.0 * domain.graph().max_edge_len();
    let mut report = NaturalBoundaryReport {
        tol,
        tol_f,
        min_radius,
        constancy_balls: Vec::new(),
        breaches: Vec::new(),
        passed: true,
    };
    for &x in domain.boundary() {
        let dist = domain.graph().distances_from(x);
        let mut order: Vec<NodeIdx> = domain.closure().iter().copied().filter(|&i| dist[i].is_finite()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        // Grow the ball one distance shell at a time; the open ball of radius
        // d_next is the largest one holding exactly the nodes seen so far.
        let mut best: Option<(f64, f64)> = None;
        let (mut hi, mut lo) = (f64::MIN, f64::MAX);
        let mut meets_interior = false;
        let mut j = 0;
        while j < order.len() {
            let d = dist[order[j]];
            while j < order.len() && dist[order[j]] == d {
                let v = u.get(order[j]);
                hi = hi.max(v);
                lo = lo.min(v);
                meets_interior |= domain.is_interior(order[j]);
                j += 1;
            }
            if hi - lo > tol {
                break;
            }
            let r = order.get(j).map_or(f64::INFINITY, |&i| dist[i]);
            if meets_interior && r >= min_radius {
                best = Some((r, hi - lo));
            }
        }
        let Some((r, osc)) = best else { continue };
        let data_mass: f64 = domain
            .boundary()
            .iter()
            .filter(|&&z| dist[z] < r / 2.0)
            .map(|&z| boundary_value(domain, f, z).abs() * domain.perimeter(z))
            .sum();
        let ball = ConstancyBall { x: domain.id(x).to_string(), r, osc, data_mass };
        if data_mass > tol_f {
            report.breaches.push(ball.clone());
            report.passed = false;
        }
        report.constancy_balls.push(ball);
    }
    Ok(report)
}

/// Edge energy of `u` restricted to edges with both ends in `nodes`.
pub fn local_dirichlet_energy(domain: &Domain, u: &NodeField, p: f64, nodes: &[NodeIdx]) -> f64 {
    let mut mask = vec![false; domain.node_count()];
    nodes.iter().for_each(|&i| mask[i] = true);
    edge_energy(domain, u.values(), p, Some(&mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{generate, make_boundary_data, DataKind, DomainKind, DomainSpec, Side};
    use crate::solver::{assemble, SolverOptions};
    use crate::space::fixtures::*;

    fn model() -> (Domain, NodeField, BoundaryField) {
        let d = three_node();
        (d, NodeField::new(vec![1.0, 0.0, -1.0]), BoundaryField::new(vec![-1.0, 1.0]))
    }

    fn solved_grid(n: usize, kind: DataKind, p: f64) -> (Domain, NodeField, BoundaryField) {
        let d = generate(&DomainSpec::new(DomainKind::Grid { n })).unwrap();
        let f = make_boundary_data(&d, kind, 0).unwrap();
        let sol = assemble(&d, p, f.clone(), SolverOptions::default()).unwrap().solve().unwrap();
        (d, sol.u, f)
    }

    #[test]
    fn model_level_stats() {
        let (d, u, _) = model();
        let s = level_set_stats(&d, &u, 0, -0.5, 1.5, 1.5, 2.0).unwrap();
        assert!((s.u_kr - 0.5).abs() < 1e-15);
        assert!((s.psi_k_big_r - 1.5).abs() < 1e-15);
        assert_eq!((s.sup_big_r, s.inf_big_r), (0.0, 0.0));
        let top = level_set_stats(&d, &u, 0, 1.0, 1.5, 2.5, 2.0).unwrap();
        assert_eq!((top.u_kr, top.psi_k_big_r, top.a_measure, top.a_perimeter), (0.0, 0.0, 0.0, 0.0));
        let c = NodeField::constant(3, 2.0);
        let s = level_set_stats(&d, &c, 0, 0.5, 1.5, 2.5, 3.0).unwrap();
        assert!((s.u_kr - 1.5).abs() < 1e-15 && (s.psi_k_big_r - 1.5).abs() < 1e-15);
        assert!(level_set_stats(&d, &u, 0, 0.0, 0.5, 1.5, 2.0).is_err());
        assert!(level_set_stats(&d, &u, 1, 0.0, 1.5, 1.5, 2.0).is_err());
    }

    #[test]
    fn translation_and_monotonicity() {
        let (d, u, _) = solved_grid(8, DataKind::Dipole, 2.0);
        let x = d.boundary()[3];
        let shifted = u.map(|v| v + 3.7);
        let ks: Vec<f64> = (0..=40).map(|j| -1.0 + 0.05 * j as f64).collect();
        let mut prev: Option<LevelSetStats> = None;
        for &k in &ks {
            let a = level_set_stats(&d, &u, x, k, 2.5, 4.5, 2.0).unwrap();
            let b = level_set_stats(&d, &shifted, x, k + 3.7, 2.5, 4.5, 2.0).unwrap();
            assert!((a.u_kr - b.u_kr).abs() < 1e-12 && (a.psi_k_big_r - b.psi_k_big_r).abs() < 1e-12);
            if let Some(q) = prev {
                assert!(a.u_kr <= q.u_kr && a.psi_k_big_r <= q.psi_k_big_r);
            }
            prev = Some(a);
        }
    }

    #[test]
    fn markov_bounds_hold_on_grid() {
        let (d, u, _) = solved_grid(8, DataKind::RandomCompatible, 3.0);
        for &x in d.boundary().iter().step_by(3) {
            for r in [1.5, 2.5, 4.5] {
                for h in [-0.4, -0.1, 0.0, 0.05] {
                    for k in [0.0, 0.1, 0.3] {
                        if h < k {
                            let m = markov_sides(&d, &u, x, h, k, r, 3.0).unwrap();
                            assert!(m.holds(), "{m:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cutoff_values_and_lipschitz() {
        let d = bare_path(6);
        let eta = cutoff(&d, 0, 1.0, 3.0).unwrap();
        assert_eq!(eta.values(), &[1.0, 1.0, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(cutoff_slack(&d, &eta, 1.0, 3.0), 0.0);
        assert!(cutoff(&d, 0, 3.0, 3.0).is_err());
        let g = bare_grid(9);
        let x = g.index_of("4_4").unwrap();
        let eta = cutoff(&g, x, 1.5, 3.7).unwrap();
        assert!(cutoff_slack(&g, &eta, 1.5, 3.7) < 1e-15);
        let dist = g.graph().distances_from(x);
        for (i, &di) in dist.iter().enumerate() {
            if di < 1.5 {
                assert_eq!(eta.get(i), 1.0);
            }
            if di >= 3.7 {
                assert_eq!(eta.get(i), 0.0);
            }
        }
    }

    #[test]
    fn degiorgi_vacuous_and_translation() {
        let (d, u, f) = solved_grid(8, DataKind::Dipole, 2.0);
        let tuples = sample_degiorgi_tuples(&d, &u, 8, 1);
        assert!(tuples.len() >= 32, "{}", tuples.len());
        let rep = check_degiorgi(&d, &u, &f, 2.0, &tuples, DEFAULT_C_BUDGET).unwrap();
        assert!(rep.passed, "max ratio {}", rep.max_ratio);
        let shifted = u.map(|v| v + 3.7);
        let moved: Vec<DeGiorgiTuple> = tuples.iter().map(|t| DeGiorgiTuple { k: t.k + 3.7, ..*t }).collect();
        let rep2 = check_degiorgi(&d, &shifted, &f, 2.0, &moved, DEFAULT_C_BUDGET).unwrap();
        for (a, b) in rep.rows.iter().zip(&rep2.rows) {
            assert!((a.lhs - b.lhs).abs() <= 1e-12 * a.lhs.max(1.0));
            assert!((a.rhs() - b.rhs()).abs() <= 1e-12 * a.rhs().max(1.0));
        }
        let above = u.values().iter().cloned().fold(f64::MIN, f64::max);
        let t = DeGiorgiTuple { x: d.boundary()[0], r: 2.25, big_r: 4.5, k: above, level: 0 };
        let row = degiorgi_row(&d, &u, &f, 2.0, &t).unwrap();
        assert_eq!((row.lhs, row.rhs(), row.ratio), (0.0, 0.0, None));
        let flat = NodeField::constant(d.node_count(), 0.3);
        let row = degiorgi_row(&d, &flat, &f, 2.0, &DeGiorgiTuple { k: 0.0, ..t }).unwrap();
        assert_eq!(row.lhs, 0.0);
        assert!(row.rhs() > 0.0);
    }

    #[test]
    fn exponent_gate() {
        let cfg = ExponentConfig::default();
        let a = compute_exponents(3.0, 2.0, &cfg).unwrap();
        assert!(a.eligible);
        assert!((a.kappa - 2.5).abs() < 1e-15 && (a.kappa_tilde - 1.5).abs() < 1e-15);
        assert!((a.alpha - 0.6).abs() < 1e-15 && (a.beta - 2.0 / 3.0).abs() < 1e-15);
        assert!((a.sigma.unwrap() - 3.0).abs() < 1e-12 && (a.tau.unwrap() - 4.0).abs() < 1e-12);
        assert!(check_conditions(&a).iter().all(|c| c.holds), "{:?}", check_conditions(&a));
        let b = compute_exponents(5.0, 2.0, &cfg).unwrap();
        assert!(!b.eligible && b.sigma.is_none());
        assert!(check_conditions(&b).iter().all(|c| c.holds));
        for p in [1.1, 2.0, 3.0] {
            let e = compute_exponents(3.9, p, &cfg).unwrap();
            assert!(e.eligible);
            assert!(check_conditions(&e).iter().all(|c| c.holds), "p={p}: {:?}", check_conditions(&e));
        }
        assert!(matches!(compute_exponents(2.0, 2.0, &cfg), Err(Error::TheoryInapplicable(_))));
        assert!(matches!(compute_exponents(2.0, 3.0, &cfg), Err(Error::TheoryInapplicable(_))));
    }

    #[test]
    fn boundedness_examples() {
        let (d, u, f) = model();
        let params = compute_exponents(3.0, 2.0, &ExponentConfig::default()).unwrap();
        let rep = boundedness_iteration(&d, &u, &f, 0, 1.4, &params, 0.0, 12, 1.0).unwrap();
        assert!(rep.passed && rep.final_holds, "{rep:?}");
        assert!(rep.half_ball_sup.is_none());
        assert_eq!(rep.u0, 0.0);
        assert!(rep.d_est2.is_none() && rep.d_est1.is_some());

        let c = NodeField::constant(3, 0.25);
        let rep = boundedness_iteration(&d, &c, &f, 0, 1.4, &params, 0.25, 8, 1.0).unwrap();
        assert!(rep.passed && rep.d == 0.0);
    }

    #[test]
    fn boundedness_on_grid() {
        let (d, u, f) = solved_grid(16, DataKind::Dipole, 2.0);
        let params = compute_exponents(3.0, 2.0, &ExponentConfig::default()).unwrap();
        for &x in d.boundary().iter().step_by(7) {
            let rep = boundedness_iteration(&d, &u, &f, x, 7.0, &params, 0.0, 16, 5.0).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.enlargement <= 10.0);
            if let Some(s) = rep.half_ball_sup {
                assert!(s <= rep.k0 + rep.d);
            }
        }
    }

    #[test]
    fn ahlfors_variant_tighter_below_unit_scale() {
        let mut spec = DomainSpec::new(DomainKind::Grid { n: 16 });
        spec.h = 1.0 / 16.0;
        let d = generate(&spec).unwrap();
        let f = make_boundary_data(&d, DataKind::Dipole, 0).unwrap();
        let u = assemble(&d, 2.0, f.clone(), SolverOptions::default()).unwrap().solve().unwrap().u;
        let cfg = ExponentConfig { ahlfors: true, ..Default::default() };
        let params = compute_exponents(3.0, 2.0, &cfg).unwrap();
        let x = d.boundary()[0];
        for (r, big_r) in [(0.15, 0.3), (0.2, 0.5)] {
            let b = decay_bounds(&d, &u, &f, x, -0.2, 0.0, r, big_r, &params).unwrap();
            assert!(b.psi_bound_ahlfors <= b.psi_bound, "{b:?}");
        }
    }

    #[test]
    fn oscillation_cases() {
        let (d, u, f) = solved_grid(16, DataKind::ConstantSignPatch { side: Side::Left }, 2.0);
        let params = compute_exponents(3.0, 2.0, &ExponentConfig::default()).unwrap();
        let radii = dyadic_grid(12.5, 1.0);
        let mut applicable = 0;
        let mut inapplicable = 0;
        for &x in d.boundary() {
            let rep = oscillation_decay(&d, &u, &f, x, &radii, &params).unwrap();
            match rep.status.as_str() {
                "applicable" => {
                    applicable += 1;
                    assert_eq!(rep.passed, Some(true), "{rep:?}");
                }
                "inapplicable" => {
                    inapplicable += 1;
                    assert!(rep.passed.is_none());
                }
                s => panic!("{s}"),
            }
        }
        assert!(applicable > 0 && inapplicable > 0, "{applicable} {inapplicable}");
        let flat = NodeField::zeros(d.node_count());
        let rep =
            oscillation_decay(&d, &flat, &BoundaryField::new(vec![0.0; f.len()]), d.boundary()[0], &radii, &params)
                .unwrap();
        assert!(rep.rows.iter().all(|r| r.osc == 0.0) && rep.passed == Some(true));
    }

    #[test]
    fn subminimizer_examples() {
        let (d, u, f) = model();
        let rep = subminimizer_check(&d, &u, 2, 1.5, &f, 2.0, 50, 3).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.min_increase.abs() <= 1e-15);
        assert!(matches!(subminimizer_check(&d, &u, 0, 1.5, &f, 2.0, 5, 3), Err(Error::Refused(_))));
    }

    #[test]
    fn natural_boundary_examples() {
        let (d, u, f) = model();
        assert!(natural_boundary_check(&d, &u, &f, 1e-10, None).unwrap().passed);
        let (g, u, f) = solved_grid(12, DataKind::Dipole, 2.0);
        let rep = natural_boundary_check(&g, &u, &f, 1e-10, None).unwrap();
        assert!(rep.passed, "{:?}", rep.breaches);
        let flat = NodeField::zeros(g.node_count());
        let rep = natural_boundary_check(&g, &flat, &f, 1e-10, None).unwrap();
        assert!(!rep.passed && !rep.breaches.is_empty());
        let zero = BoundaryField::new(vec![0.0; f.len()]);
        let rep = natural_boundary_check(&g, &flat, &zero, 1e-10, None).unwrap();
        assert!(rep.passed && !rep.constancy_balls.is_empty());
    }
}
