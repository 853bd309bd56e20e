//! The Neumann problem for the p-Laplacian as a minimization problem:
//! find a μ-mean-zero u minimizing
//!
//!   I(u) = Σ_e ω_e (|Δu|/ℓ_e)^p + Σ_{z∈∂Ω} u(z) f(z) P(z).

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::calculus::{certified_trace_constant, upper_gradient, BoundaryField, GradientField, NodeField};
use crate::error::{Error, Result};
use crate::minimize::{self, signed_power, Method, Objective, Settings, Term};
use crate::sampling;
use crate::space::{Domain, NodeIdx};

/// Node limit of [`oracle_minimize`].
pub const ORACLE_LIMIT: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol_grad: f64,
    pub tol_energy: f64,
    pub max_iter: usize,
    pub tol_compat: f64,
    pub project_compat: bool,
    pub irls_epsilon: f64,
    pub seed: u64,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_grad: 1e-10,
            tol_energy: 1e-12,
            max_iter: 100_000,
            tol_compat: 1e-10,
            project_compat: false,
            irls_epsilon: 1e-12,
            seed: 0,
            method: Method::Irls,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let tols = [self.tol_grad, self.tol_energy, self.tol_compat, self.irls_epsilon];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::arg("tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be positive"));
        }
        Ok(())
    }

    fn settings(&self, keep_iterates: bool) -> Settings {
        Settings {
            tol_grad: self.tol_grad,
            tol_energy: self.tol_energy,
            max_iter: self.max_iter,
            irls_epsilon: self.irls_epsilon,
            method: self.method,
            keep_iterates,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NeumannProblem<'a> {
    pub domain: &'a Domain,
    pub p: f64,
    pub f: BoundaryField,
    pub options: SolverOptions,
}

/// Checks p and the data, projecting f onto compatible data when requested.
pub fn assemble<'a>(
    domain: &'a Domain,
    p: f64,
    f: BoundaryField,
    options: SolverOptions,
) -> Result<NeumannProblem<'a>> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::arg(format!("p must be a finite number above 1, got {p}")));
    }
    options.validate()?;
    let boundary = domain.boundary();
    if f.len() != boundary.len() {
        return Err(Error::arg(format!("data has {} values for {} boundary nodes", f.len(), boundary.len())));
    }
    if let Some(k) = f.values().iter().position(|x| !x.is_finite()) {
        return Err(Error::arg(format!("non-finite data at `{}`", domain.id(boundary[k]))));
    }
    let mut f = f;
    if options.project_compat && !boundary.is_empty() {
        let shift = f.values().iter().zip(boundary).map(|(v, &z)| v * domain.perimeter(z)).sum::<f64>()
            / domain.total_perimeter();
        f.values_mut().iter_mut().for_each(|v| *v -= shift);
    }
    let defect: f64 = f.values().iter().zip(boundary).map(|(v, &z)| v * domain.perimeter(z)).sum();
    if defect.abs() > options.tol_compat * f.l1_norm(domain) {
        return Err(Error::Compatibility { defect });
    }
    Ok(NeumannProblem { domain, p, f, options })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub dirichlet: f64,
    pub boundary: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: NodeField,
    pub gradient: GradientField,
    pub energy: f64,
    pub dirichlet_part: f64,
    pub boundary_part: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: Method,
    pub fell_back: bool,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl Solution {
    pub fn breakdown(&self) -> EnergyBreakdown {
        EnergyBreakdown { total: self.energy, dirichlet: self.dirichlet_part, boundary: self.boundary_part }
    }
}

impl<'a> NeumannProblem<'a> {
    pub fn energy(&self, u: &NodeField) -> EnergyBreakdown {
        let d = self.domain;
        let dirichlet = crate::calculus::edge_energy(d, u.values(), self.p, None);
        let boundary: f64 =
            d.boundary().iter().zip(self.f.values()).map(|(&z, fz)| u.get(z) * fz * d.perimeter(z)).sum();
        EnergyBreakdown { total: dirichlet + boundary, dirichlet, boundary }
    }

    /// Objective over the closed domain in [`Domain::closure`] order.
    fn objective(&self) -> Result<Objective> {
        let d = self.domain;
        let closure = d.closure();
        let mut local = vec![usize::MAX; d.node_count()];
        for (k, &i) in closure.iter().enumerate() {
            local[i] = k;
        }
        let g = d.graph();
        let terms = d
            .energy_edges()
            .iter()
            .map(|&k| {
                let e = g.edge(k);
                Term { a: local[e.a], b: local[e.b], coef: d.edge_weight(k) / e.len.powf(self.p) }
            })
            .filter(|t| t.coef > 0.0)
            .collect();
        let mut linear = vec![0.0; closure.len()];
        for (&z, fz) in d.boundary().iter().zip(self.f.values()) {
            linear[local[z]] = fz * d.perimeter(z);
        }
        let mut obj = Objective {
            n: closure.len(),
            p: self.p,
            terms,
            linear,
            fixed: vec![None; closure.len()],
            mean_weights: Some(closure.iter().map(|&i| d.mu(i)).collect()),
        };
        obj.pin_floating()?;
        Ok(obj)
    }

    fn restrict(&self, u: &NodeField) -> Vec<f64> {
        self.domain.closure().iter().map(|&i| u.get(i)).collect()
    }

    fn extend(&self, local: &[f64]) -> NodeField {
        let mut v = vec![0.0; self.domain.node_count()];
        for (&i, x) in self.domain.closure().iter().zip(local) {
            v[i] = *x;
        }
        NodeField::new(v)
    }

    /// Packages a field as a solution record (the field is used as given).
    pub fn solution_of(&self, u: NodeField, iterations: usize, residual: f64, converged: bool) -> Solution {
        let e = self.energy(&u);
        Solution {
            gradient: upper_gradient(self.domain, &u),
            u,
            energy: e.total,
            dirichlet_part: e.dirichlet,
            boundary_part: e.boundary,
            iterations,
            residual,
            method: self.options.method,
            fell_back: false,
            converged,
            history: vec![e.total],
        }
    }

    /// Minimizes from u₀ = 0.
    pub fn solve(&self) -> Result<Solution> {
        self.solve_from(&NodeField::zeros(self.domain.node_count()))
    }

    pub fn solve_from(&self, initial: &NodeField) -> Result<Solution> {
        self.run(initial, false).map(|(s, _)| s)
    }

    /// Like [`NeumannProblem::solve`] but also returns every accepted iterate.
    pub fn solve_traced(&self) -> Result<(Solution, Vec<NodeField>)> {
        self.run(&NodeField::zeros(self.domain.node_count()), true)
    }

    fn run(&self, initial: &NodeField, keep: bool) -> Result<(Solution, Vec<NodeField>)> {
        if initial.len() != self.domain.node_count() {
            return Err(Error::arg("initial field has the wrong length"));
        }
        let obj = self.objective()?;
        let out = minimize::minimize(&obj, &self.restrict(initial), &self.options.settings(keep));
        let u = self.extend(&out.u);
        let mut sol = self.solution_of(u, out.iterations, out.residual, out.converged);
        sol.fell_back = out.fell_back;
        sol.history = out.history;
        let iterates = out.iterates.iter().map(|v| self.extend(v)).collect();
        if !out.converged {
            return Err(Error::NotConverged {
                iterations: out.iterations,
                residual: out.residual,
                last: Box::new(sol),
            });
        }
        Ok((sol, iterates))
    }

    /// Largest unbalanced flux at interior and at boundary nodes.
    pub fn euler_lagrange_residual(&self, u: &NodeField) -> (f64, f64) {
        let d = self.domain;
        let g = d.graph();
        let mut flux = vec![0.0; d.node_count()];
        for &k in d.energy_edges() {
            let e = g.edge(k);
            let c = d.edge_weight(k) * self.p / e.len.powf(self.p);
            let t = c * signed_power(u.get(e.b) - u.get(e.a), self.p);
            flux[e.a] += t;
            flux[e.b] -= t;
        }
        for (&z, fz) in d.boundary().iter().zip(self.f.values()) {
            flux[z] -= fz * d.perimeter(z);
        }
        let max = |nodes: &[NodeIdx]| nodes.iter().fold(0.0f64, |m, &i| m.max(flux[i].abs()));
        (max(d.interior()), max(d.boundary()))
    }

    /// Certified constant C with ‖Tu‖_{L¹(∂Ω)} ≤ C ‖g_u‖_p on mean-zero fields.
    pub fn trace_constant(&self) -> f64 {
        certified_trace_constant(self.domain, self.p)
    }

    /// ‖g_u‖^p − C ‖g_u‖ ‖f‖_∞, a lower bound for I(u) at mean-zero u.
    pub fn iterate_lower_bound(&self, u: &NodeField) -> f64 {
        let dirichlet = self.energy(u).dirichlet;
        dirichlet - self.trace_constant() * dirichlet.powf(1.0 / self.p) * self.f.sup_norm()
    }

    /// −(1 − 1/p)(CF)(CF/p)^{1/(p−1)} with F = ‖f‖_∞: the minimum over t ≥ 0
    /// of t^p − C F t, hence a lower bound for inf I.
    pub fn energy_lower_bound(&self) -> f64 {
        let cf = self.trace_constant() * self.f.sup_norm();
        -(1.0 - 1.0 / self.p) * cf * (cf / self.p).powf(1.0 / (self.p - 1.0))
    }
}

/// Brute-force minimizer for tiny instances: cyclic golden-section line
/// minimization along coordinate directions of the mean-zero slice.
pub fn oracle_minimize(problem: &NeumannProblem) -> Result<Solution> {
    let d = problem.domain;
    if d.node_count() > ORACLE_LIMIT {
        return Err(Error::TooLarge { nodes: d.node_count(), limit: ORACLE_LIMIT });
    }
    let closure = d.closure().to_vec();
    let pivot = *d
        .interior()
        .iter()
        .max_by(|&&a, &&b| d.mu(a).total_cmp(&d.mu(b)).then(b.cmp(&a)))
        .ok_or_else(|| Error::arg("no interior node"))?;
    let free: Vec<NodeIdx> = closure.iter().copied().filter(|&i| i != pivot).collect();
    let mut u = NodeField::zeros(d.node_count());
    let value = |u: &NodeField| problem.energy(u).total;
    // moving node i by t moves the pivot by −t μ(i)/μ(pivot)
    let shift = |u: &NodeField, i: NodeIdx, t: f64| {
        let mut v = u.clone();
        v.values_mut()[i] += t;
        v.values_mut()[pivot] -= t * d.mu(i) / d.mu(pivot);
        v
    };
    let mut energy = value(&u);
    let mut step = 1.0f64;
    for _ in 0..100_000 {
        let before = energy;
        let mut moved = 0.0f64;
        for &i in &free {
            let line = |t: f64| value(&shift(&u, i, t));
            let t = golden_section(&line, step);
            let cand = shift(&u, i, t);
            let e = value(&cand);
            if e < energy {
                u = cand;
                energy = e;
                moved = moved.max(t.abs());
            }
        }
        step = (2.0 * moved).max(1e-6);
        if before - energy < 1e-16 * energy.abs().max(1.0) && moved < 1e-11 {
            break;
        }
    }
    Ok(problem.solution_of(u, 0, 0.0, true))
}

/// Minimizer of a convex function of one variable, bracketed by expansion from ±h.
fn golden_section(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let f0 = f(0.0);
    let (mut lo, mut hi) = (-h, h);
    while f(hi) < f0 && hi < 1e12 {
        hi *= 2.0;
    }
    while f(lo) < f0 && lo > -1e12 {
        lo *= 2.0;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    let t = 0.5 * (lo + hi);
    if f(t) <= f0 {
        t
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub method: Method,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizerSetReport {
    pub passed: bool,
    pub minimum: f64,
    pub runs: Vec<RunSummary>,
    pub max_gradient_difference: f64,
    pub max_boundary_difference: f64,
    pub max_lattice_gap: f64,
    pub max_convex_gap: f64,
    /// Pair of runs and the law that failed, if any.
    pub witness: Option<(usize, usize, String)>,
    pub discrete_uniqueness_note: String,
}

pub const GRADIENT_TOL: f64 = 1e-6;
pub const BOUNDARY_TOL: f64 = 1e-8;
pub const ENERGY_TOL: f64 = 1e-8;

/// Independent minimizers from random starts (alternating IRLS and descent)
/// and the laws every pair of minimizers must obey.
pub fn verify_minimizer_set(problem: &NeumannProblem, runs: usize, seed: u64) -> Result<MinimizerSetReport> {
    if runs < 2 {
        return Err(Error::arg("need at least two runs"));
    }
    let d = problem.domain;
    let mut sols = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = sampling::rng_for(seed, run as u64);
        let init = NodeField::new(
            (0..d.node_count()).map(|i| if d.in_closure(i) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect(),
        );
        let sol = if run % 2 == 0 {
            problem.solve_from(&init)?
        } else {
            // descent path, polished by IRLS: plain descent is sublinear for degenerate p > 2 data
            let mut pr = problem.clone();
            pr.options.method = Method::Descent;
            let rough = match pr.solve_from(&init) {
                Ok(s) => s,
                Err(Error::NotConverged { last, .. }) => *last,
                Err(e) => return Err(e),
            };
            pr.options.method = Method::Irls;
            pr.options.tol_grad *= 1e-6;
            pr.options.max_iter = 50;
            let polished = match pr.solve_from(&rough.u) {
                Ok(s) => s,
                Err(Error::NotConverged { last, .. }) => *last,
                Err(e) => return Err(e),
            };
            let mut sol = if polished.residual <= rough.residual { polished } else { rough.clone() };
            sol.method = Method::Descent;
            sol.iterations = rough.iterations;
            sol
        };
        sols.push(sol);
    }
    let minimum = sols.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
    let mut report = MinimizerSetReport {
        passed: true,
        minimum,
        runs: sols
            .iter()
            .enumerate()
            .map(|(run, s)| RunSummary {
                run,
                method: s.method,
                energy: s.energy,
                iterations: s.iterations,
                residual: s.residual,
            })
            .collect(),
        max_gradient_difference: 0.0,
        max_boundary_difference: 0.0,
        max_lattice_gap: 0.0,
        max_convex_gap: 0.0,
        witness: None,
        discrete_uniqueness_note:
            "the discrete edge energy is strictly convex modulo constants, so discrete minimizers \
                                   coincide; this is a property of the discretization"
                .into(),
    };
    let mean_zero = |v: Vec<f64>| {
        let mass = d.total_interior_measure();
        let m = d.interior().iter().map(|&i| v[i] * d.mu(i)).sum::<f64>() / mass;
        NodeField::new(v.iter().enumerate().map(|(i, x)| if d.in_closure(i) { x - m } else { 0.0 }).collect())
    };
    let edges = d.energy_edges();
    for i in 0..runs {
        for j in i + 1..runs {
            let (u, v) = (&sols[i], &sols[j]);
            let gdiff = edges
                .iter()
                .map(|&k| (u.gradient.edge_quotients[k] - v.gradient.edge_quotients[k]).abs())
                .fold(0.0, f64::max);
            let bdiff = (u.boundary_part - v.boundary_part).abs();
            let wmax = mean_zero(u.u.values().iter().zip(v.u.values()).map(|(a, b)| a.max(*b)).collect());
            let wmin = mean_zero(u.u.values().iter().zip(v.u.values()).map(|(a, b)| a.min(*b)).collect());
            let lattice =
                (problem.energy(&wmax).total - minimum).abs().max((problem.energy(&wmin).total - minimum).abs());
            let convex = [0.25, 0.5, 0.75]
                .iter()
                .map(|&t| (problem.energy(&u.u.combine(t, &v.u, 1.0 - t)).total - minimum).abs())
                .fold(0.0, f64::max);
            report.max_gradient_difference = report.max_gradient_difference.max(gdiff);
            report.max_boundary_difference = report.max_boundary_difference.max(bdiff);
            report.max_lattice_gap = report.max_lattice_gap.max(lattice);
            report.max_convex_gap = report.max_convex_gap.max(convex);
            let failed = [
                (gdiff > GRADIENT_TOL, "gradient"),
                (bdiff > BOUNDARY_TOL, "boundary part"),
                (lattice > ENERGY_TOL, "lattice combination"),
                (convex > ENERGY_TOL, "convex combination"),
            ]
            .into_iter()
            .find(|(bad, _)| *bad);
            if let Some((_, law)) = failed {
                report.passed = false;
                if report.witness.is_none() {
                    report.witness = Some((i, j, law.to_string()));
                }
            }
        }
    }
    Ok(report)
}
