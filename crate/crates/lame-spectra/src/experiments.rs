//! Scripted numerical studies with quantitative pass criteria.
//!
//! Each experiment pins one structural claim about the factorized forms to
//! numbers: loss of coercivity on harmonic gradients, boundary-data
//! instability on the half-disc, the fractional embedding threshold of a
//! lacunary series, Korn-type constants under refinement, sector confinement
//! of perturbed spectra, interior equality of the three factorizations, and
//! eigenvalue convergence against the classical square spectrum.
//!
//! Every experiment validates its discretization against a closed-form
//! quantity first and aborts with [`ExperimentError::OracleMismatch`] rather
//! than report under-resolved results. Reports are deterministic: identical
//! parameters and seed give byte-identical CSV and JSON artifacts.

use std::f64::consts::PI;
use std::io::Write as IoWrite;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{
    assemble_core_form, assemble_h1_gram, assemble_pencil, boundary_l2_energy, factor_energy,
    h1_energy, h_energy, harmonic_extension, interpolate_scalar, interpolate_vector, l2_energy,
    quad_form, scalar_as_component, scalar_hs_gram, tau0_energy, vector_laplace_csr,
    AssembleError, DofMap, GagliardoPreset,
};
use crate::linalg::{C64, CMat, CVec, RMat};
use crate::mesh::{build_disc_mesh, build_half_disc_mesh, BoundaryPartition, MeshError};
use crate::problem::{
    builtin_problem, problem_from_config, FactorKind, LameCoefficients, ProblemError, ProblemSpec,
    Weight,
};
use crate::spectral::{
    lowest_pencil_eigenvalues_sparse, relative_form_norm, sector_check_parts,
    smallest_pencil_eigenvalue, SolveOptions, SpectralError,
};

// ---------------------------------------------------------------------------
// Report plumbing
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    /// A discretization failed its closed-form gate; the run aborts instead
    /// of reporting numbers the mesh cannot support.
    #[error("ORACLE_MISMATCH: {what} (relative deviation {rel:.3e})")]
    OracleMismatch { what: String, rel: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unknown experiment `{0}`")]
    UnknownName(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub label: String,
    pub value: f64,
}

/// Outcome of one experiment: named parameters, a numeric table, a verdict
/// determined solely by the table and the experiment's stated criterion, and
/// free-text provenance notes on conventions and known deviations.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: Vec<(String, String)>,
    pub table: Vec<TableRow>,
    pub verdict: String,
    pub provenance: Vec<String>,
}

impl ExperimentReport {
    fn new(name: &str) -> Self {
        ExperimentReport {
            name: name.to_string(),
            parameters: Vec::new(),
            table: Vec::new(),
            verdict: String::new(),
            provenance: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl std::fmt::Display) {
        self.parameters.push((key.to_string(), value.to_string()));
    }

    fn row(&mut self, label: impl Into<String>, value: f64) {
        self.table.push(TableRow { label: label.into(), value });
    }

    fn note(&mut self, text: impl Into<String>) {
        self.provenance.push(text.into());
    }

    fn set_verdict(&mut self, pass: bool) {
        self.verdict = if pass { "PASS" } else { "FAIL" }.to_string();
    }

    pub fn passed(&self) -> bool {
        self.verdict == "PASS"
    }

    /// First table value whose label matches exactly.
    pub fn value(&self, label: &str) -> Option<f64> {
        self.table.iter().find(|r| r.label == label).map(|r| r.value)
    }
}

/// Table-only CSV: a `label,value` header and one row per table entry, values
/// in fixed scientific notation so reruns are byte-identical.
pub fn write_report_csv<W: IoWrite>(w: &mut W, report: &ExperimentReport) -> std::io::Result<()> {
    writeln!(w, "label,value")?;
    for row in &report.table {
        writeln!(w, "{},{:.16e}", row.label, row.value)?;
    }
    Ok(())
}

/// Full report as pretty JSON. Field and row order are fixed, so the output
/// is deterministic.
pub fn report_json(report: &ExperimentReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

// ---------------------------------------------------------------------------
// Fractional seminorms of disc monomials
// ---------------------------------------------------------------------------
//
// The double integral over the disc pair (z, w) of
//   |z^k - w^k|^2 / |z - w|^{2 + 2s}
// reduces, in polar coordinates with w = t z e^{i phi} and the radial power
// integrated out, to
//   G_s(k) = 4 pi Phi_k(s) / (2k + 2 - 2s),
//   Phi_k(s) = int_0^1 t dt int_0^{2pi} dphi
//              [(1 - t^k)^2 + 4 t^k sin^2(k phi / 2)]
//              / [(1 - t)^2 + 4 t sin^2(phi / 2)]^{1 + s}.
// The integrand is nonnegative term by term, so there is no cancellation to
// lose; the only numerical work is resolving the (t, phi) -> (1, 0) corner
// and the oscillation of the numerator.
//
// Quadrature: geometric panels in u = 1 - t down to U_MIN with Gauss points
// per panel, and per u a graded phi ladder that starts at width u (the scale
// of the kernel peak) and is capped so that no panel spans more than half an
// oscillation period. Truncating below U_MIN discards mass of order
// k^2 U_MIN^{2-2s}, negligible against Phi for s <= 0.92, which is why the
// evaluators refuse larger s.

const GL8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.1012285362903763),
    (-0.7966664774136267, 0.2223810344533745),
    (-0.5255324099163290, 0.3137066458778873),
    (-0.1834346424956498, 0.3626837833783620),
    (0.1834346424956498, 0.3626837833783620),
    (0.5255324099163290, 0.3137066458778873),
    (0.7966664774136267, 0.2223810344533745),
    (0.9602898564975363, 0.1012285362903763),
];

const GL6: [(f64, f64); 6] = [
    (-0.9324695142031521, 0.1713244923791704),
    (-0.6612093864662645, 0.3607615730481386),
    (-0.2386191860831969, 0.4679139345726910),
    (0.2386191860831969, 0.4679139345726910),
    (0.6612093864662645, 0.3607615730481386),
    (0.9324695142031521, 0.1713244923791704),
];

const U_MIN: f64 = 1e-40;

/// Panel boundaries growing geometrically from `first` up to a width `cap`,
/// covering `[lo, hi]`.
fn graded_panels(lo: f64, hi: f64, first: f64, ratio: f64, cap: f64) -> Vec<(f64, f64)> {
    let mut panels = Vec::new();
    let mut a = lo;
    let mut width = first.min(cap).max(1e-300);
    while a < hi {
        let b = (a + width).min(hi);
        panels.push((a, b));
        a = b;
        width = (width * ratio).min(cap);
    }
    panels
}

/// Visits every quadrature node of the (u, phi) grid tuned for oscillation
/// frequency `k_osc`. The callback receives `(u, phi, w)` with the full
/// weight: both panel jacobians, the factor t = 1 - u of the radial measure,
/// and the factor 2 from folding phi in [0, 2 pi] onto [0, pi].
fn for_each_kernel_node(k_osc: usize, density: usize, mut f: impl FnMut(f64, f64, f64)) {
    let d = density.max(1) as f64;
    // Half an oscillation period of cos(k phi) per panel keeps the 6-point
    // rule far below the target accuracy.
    let phi_cap = (3.0 / k_osc.max(1) as f64).min(0.3) / d;
    let u_cap = 0.125 / d;
    for &(ua, ub) in &graded_panels(U_MIN, 1.0, U_MIN, 1.8, u_cap) {
        let (mid_u, half_u) = (0.5 * (ua + ub), 0.5 * (ub - ua));
        for &(xu, wu) in &GL8 {
            let u = mid_u + half_u * xu;
            let t = 1.0 - u;
            let wt = wu * half_u * t * 2.0;
            for &(pa, pb) in &graded_panels(0.0, PI, u / d, 1.6, phi_cap) {
                let (mid_p, half_p) = (0.5 * (pa + pb), 0.5 * (pb - pa));
                for &(xp, wp) in &GL6 {
                    f(u, mid_p + half_p * xp, wt * wp * half_p);
                }
            }
        }
    }
}

fn check_seminorm_order(s: f64) {
    assert!(
        (0.0..=0.92).contains(&s),
        "fractional order {s} outside the supported range [0, 0.92]"
    );
}

fn monomial_gagliardo_density(k: usize, s: f64, density: usize) -> f64 {
    check_seminorm_order(s);
    let kf = k as f64;
    let mut phi_acc = 0.0;
    for_each_kernel_node(k, density, |u, phi, w| {
        // 1 - (1-u)^k without cancellation
        let om = -f64::exp_m1(kf * f64::ln_1p(-u));
        let sp = (0.5 * phi).sin();
        let den = u * u + 4.0 * (1.0 - u) * sp * sp;
        let sk = (0.5 * kf * phi).sin();
        let num = om * om + 4.0 * (1.0 - om) * sk * sk;
        phi_acc += w * num * den.powf(-(1.0 + s));
    });
    4.0 * PI * phi_acc / (2.0 * (kf + 1.0) - 2.0 * s)
}

/// Gagliardo seminorm squared of `z^k` (equivalently `conj(z)^k`) on the unit
/// disc with fractional order `s`.
pub fn monomial_gagliardo(k: usize, s: f64) -> f64 {
    monomial_gagliardo_density(k, s, 1)
}

fn monomial_gagliardo_ladder_density(n_terms: usize, s: f64, density: usize) -> Vec<f64> {
    check_seminorm_order(s);
    let mut acc = vec![0.0; n_terms];
    for_each_kernel_node(4 * n_terms, density, |u, phi, w| {
        let sp = (0.5 * phi).sin();
        let den = u * u + 4.0 * (1.0 - u) * sp * sp;
        let wq = w * den.powf(-(1.0 + s));
        // Exponent ladder: om_nu = 1 - (1-u)^{4 nu} grows by
        // om -> om + om4 - om om4 (all additions of positives). The cosine
        // recurrence is run on the versine v_nu = 1 - cos(4 nu phi), which
        // stays relative-accurate near phi = 0 where 1 - cos rounds away
        // exactly the corner mass the graded panels are there to resolve.
        let om4 = -f64::exp_m1(4.0 * f64::ln_1p(-u));
        let v4 = {
            let s2 = (2.0 * phi).sin();
            2.0 * s2 * s2
        };
        let mut om = om4;
        let mut v_prev = 0.0;
        let mut v = v4;
        for slot in acc.iter_mut() {
            let tk = 1.0 - om;
            *slot += wq * (om * om + 2.0 * tk * v);
            om = om + om4 - om * om4;
            let v_next = 2.0 * v4 + 2.0 * v - 2.0 * v4 * v - v_prev;
            v_prev = v;
            v = v_next;
        }
    });
    acc.iter()
        .enumerate()
        .map(|(i, &a)| {
            let k = 4 * (i + 1);
            4.0 * PI * a / (2.0 * (k as f64 + 1.0) - 2.0 * s)
        })
        .collect()
}

/// Gagliardo seminorms squared of the whole family `z^{4 nu}`,
/// `nu = 1..=n_terms`, sharing one quadrature grid.
pub fn monomial_gagliardo_ladder(n_terms: usize, s: f64) -> Vec<f64> {
    monomial_gagliardo_ladder_density(n_terms, s, 1)
}

/// At s = 0 the difference quotient telescopes: dividing `|z^k - w^k|^2` by
/// `|z - w|^2` leaves `|sum_j z^j w^{k-1-j}|^2`, whose monomial terms are
/// L^2-orthogonal. The seminorm is then an explicit finite sum.
fn monomial_gagliardo_closed_s0(k: usize) -> f64 {
    (0..k).map(|j| PI * PI / (((j + 1) * (k - j)) as f64)).sum()
}

/// `int_disc |z^k|^2 = pi / (k + 1)`.
fn monomial_l2_sq(k: usize) -> f64 {
    PI / (k as f64 + 1.0)
}

// ---------------------------------------------------------------------------
// Embedding threshold of the lacunary series
// ---------------------------------------------------------------------------

/// Partial sums of `sum_nu conj(z)^{4 nu} / (4 nu + 1)^{(1+eps)/2}` in the
/// fractional norms `||u||^2 = ||u||^2_{L^2} + Gagliardo_s(u)`. Terms of
/// distinct angular frequency are orthogonal in both parts (rotating the
/// integration variables multiplies a cross term by a nontrivial phase), so
/// every partial-sum norm is an exact prefix sum of per-term increments and
/// no mesh enters at all.
///
/// Verdict: for s clear of the split exponent (1+eps)/2 the prefix sums must
/// be Cauchy below it (largest tail increment under 1e-3 of the total norm)
/// and the squared tail mass must keep growing above it. Each classified s
/// must also track the model increment `(4 nu)^{2s - 2 - eps}` within a
/// factor 4 over the second half of the ladder.
pub fn exp_embedding_exponent(
    epsilon: f64,
    s_list: &[f64],
    n_terms: usize,
) -> Result<ExperimentReport, ExperimentError> {
    if !(epsilon > 0.0) {
        return Err(ExperimentError::Parameter("epsilon must be positive".into()));
    }
    if n_terms < 16 {
        return Err(ExperimentError::Parameter("need at least 16 series terms".into()));
    }
    for &s in s_list {
        if !(0.0 < s && s <= 0.92) {
            return Err(ExperimentError::Parameter(format!(
                "fractional order {s} outside (0, 0.92]"
            )));
        }
    }

    let mut report = ExperimentReport::new("exp_embedding_exponent");
    report.param("epsilon", epsilon);
    report.param("n_terms", n_terms);
    report.param(
        "s_list",
        s_list.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(" "),
    );

    // Gate 1: the full ladder at s = 0 against the telescoped closed form.
    let ladder0 = monomial_gagliardo_ladder_density(n_terms, 0.0, 1);
    let mut worst0 = 0.0f64;
    for (i, &g) in ladder0.iter().enumerate() {
        let exact = monomial_gagliardo_closed_s0(4 * (i + 1));
        worst0 = worst0.max((g - exact).abs() / exact);
    }
    report.row("quadrature vs closed form s=0 max_rel", worst0);
    if worst0 > 1e-7 {
        return Err(ExperimentError::OracleMismatch {
            what: "monomial kernel quadrature vs closed form at s=0".into(),
            rel: worst0,
        });
    }

    // Gate 2: doubled panel density at the most oscillatory family member.
    for &s in s_list {
        let g1 = monomial_gagliardo_density(4 * n_terms, s, 1);
        let g2 = monomial_gagliardo_density(4 * n_terms, s, 2);
        let rel = (g1 - g2).abs() / g2;
        report.row(format!("s={s:.2} refinement self-check"), rel);
        if rel > 1e-7 {
            return Err(ExperimentError::OracleMismatch {
                what: format!("kernel quadrature self-consistency at s={s:.2}"),
                rel,
            });
        }
    }

    let threshold = 0.5 * (1.0 + epsilon);
    let mut all_pass = true;
    for &s in s_list {
        let gag = monomial_gagliardo_ladder(n_terms, s);
        // squared increment of the nu-th partial sum
        let d2: Vec<f64> = (1..=n_terms)
            .map(|nu| {
                let k = 4 * nu;
                let c2 = ((k + 1) as f64).powf(-(1.0 + epsilon));
                c2 * (monomial_l2_sq(k) + gag[nu - 1])
            })
            .collect();
        let mut norms = Vec::with_capacity(n_terms);
        let mut acc = 0.0;
        for &d in &d2 {
            acc += d;
            norms.push(acc.sqrt());
        }
        let total = *norms.last().unwrap();
        for &nu in &[n_terms / 4, n_terms / 2, 3 * n_terms / 4, n_terms] {
            report.row(format!("s={s:.2} norm nu={nu}"), norms[nu - 1]);
        }
        // largest norm increment over the last quarter, relative to the total
        let tail_start = 3 * n_terms / 4;
        let max_tail = (tail_start..n_terms)
            .map(|i| (norms[i] - norms[i - 1]) / total)
            .fold(0.0f64, f64::max);
        report.row(format!("s={s:.2} tail_increment_max"), max_tail);
        // squared tail mass of the full ladder vs the half ladder
        let q_full: f64 = d2[(3 * n_terms / 4)..n_terms].iter().sum();
        let half = n_terms / 2;
        let q_half: f64 = d2[(3 * half / 4)..half].iter().sum();
        let growth = q_full / q_half;
        report.row(format!("s={s:.2} tail_energy_growth"), growth);
        // model-increment tracking over the second half
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for nu in (n_terms / 2)..n_terms {
            let model = ((4 * (nu + 1)) as f64).powf(2.0 * s - 2.0 - epsilon);
            let r = d2[nu] / model;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let flatness = hi / lo;
        report.row(format!("s={s:.2} model_flatness"), flatness);

        if s <= threshold - 0.02 {
            let ok = max_tail < 1e-3 && flatness <= 4.0;
            report.row(format!("s={s:.2} class"), -1.0);
            all_pass &= ok;
        } else if s >= threshold + 0.02 {
            let ok = growth > 1.2 && flatness <= 4.0;
            report.row(format!("s={s:.2} class"), 1.0);
            all_pass &= ok;
        } else {
            // too close to the split exponent to classify either way
            report.row(format!("s={s:.2} class"), 0.0);
        }
    }
    report.set_verdict(all_pass);
    report.note(
        "increments are exact: terms of distinct angular frequency are orthogonal in both the \
         L^2 and the difference-kernel pairing, so partial-sum norms are prefix sums",
    );
    report.note(
        "norm convention matches the assembled fractional Gram: L^2 part plus Gagliardo part; \
         the series index starts at nu=1",
    );
    report.note(
        "class column: -1 expects Cauchy prefix sums, +1 expects growing squared tail mass, 0 \
         is within 0.02 of the split exponent (1+eps)/2 and is reported without a criterion",
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Coercivity decay on harmonic gradients
// ---------------------------------------------------------------------------

/// Interpolates the harmonic-gradient family `u_p = grad Re z^p` on the disc
/// (no Dirichlet part, identity volume and boundary coefficients, vorticity
/// factorization) and tabulates the ratio of the operator energy norm to the
/// full H^1 norm. The vorticity and divergence of a harmonic gradient vanish
/// identically, so the closed-form ratio
/// `r_p^2 = (pi p + 2 pi p^2) / (pi p + 2 pi p^2 (p - 1))`
/// decays like 1/p; a coercive form could not do that.
pub fn exp_harmonic_gradient_decay(
    n_boundary: usize,
    p_max: usize,
) -> Result<ExperimentReport, ExperimentError> {
    if p_max < 2 {
        return Err(ExperimentError::Parameter("need p_max >= 2".into()));
    }
    let mesh = build_disc_mesh(n_boundary, 1.0)?;
    let mut report = ExperimentReport::new("exp_harmonic_gradient_decay");
    report.param("n_boundary", n_boundary);
    report.param("p_max", p_max);

    // mesh integrity gate: the inscribed polygon area is exact
    let nb = n_boundary as f64;
    let area_exact = 0.5 * nb * (2.0 * PI / nb).sin();
    let area_rel = (mesh.total_area() - area_exact).abs() / area_exact;
    if area_rel > 1e-12 {
        return Err(ExperimentError::OracleMismatch {
            what: "polygon area of the disc mesh".into(),
            rel: area_rel,
        });
    }

    let co = LameCoefficients::constant(1.0, 0.0, 0.5);
    let w0 = Weight::constant(0.0);
    let all_edges: Vec<usize> = (0..mesh.boundary_edges().len()).collect();
    let mut ratios = Vec::new();
    let mut oracle_ok = true;
    for p in 1..=p_max {
        let pf = p as f64;
        let u = interpolate_vector(&mesh, |x| {
            let z = C64::new(x[0], x[1]);
            let w = z.powu(p as u32 - 1);
            [C64::new(pf * w.re, 0.0), C64::new(-pf * w.im, 0.0)]
        });
        let den = h1_energy(&mesh, &w0, &u, &u).re;
        let den_exact = PI * pf + 2.0 * PI * pf * pf * (pf - 1.0);
        let den_rel = (den - den_exact).abs() / den_exact;
        // resolution gate: interpolation error of degree-p data shows up
        // first in the H^1 energy
        if den_rel > 0.10 {
            return Err(ExperimentError::OracleMismatch {
                what: format!("H^1 energy of the degree-{p} harmonic gradient"),
                rel: den_rel,
            });
        }
        let num = factor_energy(&mesh, &co, FactorKind::D3, &u, &u).re
            + l2_energy(&mesh, &w0, &u, &u).re
            + boundary_l2_energy(&mesh, &all_edges, &u, &u).re;
        let num_exact = PI * pf + 2.0 * PI * pf * pf;
        let r = (num / den).sqrt();
        let r_exact = (num_exact / den_exact).sqrt();
        report.row(format!("p={p} ratio"), r);
        report.row(format!("p={p} ratio_exact"), r_exact);
        oracle_ok &= (r - r_exact).abs() <= 0.05 * r_exact;
        ratios.push(r);
    }
    let tail = &ratios[1..];
    let pass = strictly_decreasing(tail) && *tail.last().unwrap() < tail[0] / 1.5 && oracle_ok;
    report.set_verdict(pass);
    report.note(
        "the vorticity-divergence rows annihilate gradients of harmonic functions, so the \
         energy norm keeps only the mass terms while the H^1 norm grows like the Hessian",
    );
    report.note("p=1 is the rigid translation pair and is excluded from the decay criterion");
    Ok(report)
}

// ---------------------------------------------------------------------------
// Boundary-data instability on the half-disc
// ---------------------------------------------------------------------------

/// Oscillatory Dirichlet data `(1/p) sin(pi p x)` on the diameter of the
/// upper half-disc, zero on the arc. The discrete harmonic extension `w_p`
/// shrinks in the control norm while the matched oscillatory field
/// `F_p = ((1/p) sin(pi p x) cosh(pi p y), -(1/p) cos(pi p x) sinh(pi p y))`
/// explodes in L^2; their difference `u_p` vanishes on the diameter, and its
/// energy seminorm equals that of `w_p` because `F_p` is divergence and
/// vorticity free. The ratio `||u_p||_{L^2} / ||u_p||_+` therefore grows
/// without bound: no fractional norm of positive order is controlled by the
/// operator norm on this geometry.
pub fn exp_hadamard(
    n_boundary: usize,
    p_max: usize,
    s_list: &[f64],
) -> Result<ExperimentReport, ExperimentError> {
    if p_max < 2 {
        return Err(ExperimentError::Parameter("need p_max >= 2".into()));
    }
    let mesh = build_half_disc_mesh(n_boundary, 1.0)?;
    let partition = BoundaryPartition::from_tags(&mesh);
    let co = LameCoefficients::constant(1.0, 0.0, 0.5);
    let w0 = Weight::constant(0.0);

    // resolution precondition: at least 10 diameter vertices per period
    let h_s = partition
        .s_edges
        .iter()
        .map(|&e| mesh.edge_length(e))
        .fold(0.0f64, f64::max);
    let vertices_per_period = (2.0 / p_max as f64) / h_s;
    if vertices_per_period < 10.0 - 1e-9 {
        return Err(ExperimentError::Parameter(format!(
            "diameter spacing {h_s:.4} resolves only {vertices_per_period:.1} vertices per \
             period at p={p_max}; need 10"
        )));
    }

    let mut report = ExperimentReport::new("exp_hadamard");
    report.param("n_boundary", n_boundary);
    report.param("p_max", p_max);
    report.param(
        "s_list",
        s_list.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(" "),
    );

    // fractional Grams are mesh-global; assemble once per order
    let preset = GagliardoPreset::standard();
    let grams: Vec<(f64, RMat)> = s_list
        .iter()
        .filter(|&&s| s < 0.999)
        .map(|&s| (s, scalar_hs_gram(&mesh, s, &preset)))
        .collect();

    let mut h_norms = Vec::new();
    let mut l2_w_norms = Vec::new();
    let mut blowup = Vec::new();
    for p in 1..=p_max {
        let pf = p as f64;
        let freq = PI * pf;
        // diameter vertices carry y = 0 exactly; the data is continuous at
        // the junctions because sin(pi p) = 0
        let data = move |x: [f64; 2]| {
            if x[1] == 0.0 {
                C64::new((freq * x[0]).sin() / pf, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        };
        // boundary mass gate: int_S (1/p^2) sin^2(pi p x) dx = 1/p^2 exactly
        let v_vec = scalar_as_component(&interpolate_scalar(&mesh, data), 0);
        let s_mass = boundary_l2_energy(&mesh, &partition.s_edges, &v_vec, &v_vec).re;
        let mass_rel = (s_mass - 1.0 / (pf * pf)).abs() * pf * pf;
        if mass_rel > 0.10 {
            return Err(ExperimentError::OracleMismatch {
                what: format!("boundary mass of the p={p} oscillation"),
                rel: mass_rel,
            });
        }

        let w_scalar = harmonic_extension(&mesh, data);
        let w_vec = scalar_as_component(&w_scalar, 0);
        let h_w = h_energy(&mesh, &partition, &co, &w_vec, &w_vec).re.sqrt();
        let l2_w = l2_energy(&mesh, &w0, &w_vec, &w_vec).re.sqrt();
        let h1_w = h1_energy(&mesh, &w0, &w_vec, &w_vec).re.sqrt();
        report.row(format!("p={p} h_w"), h_w);
        report.row(format!("p={p} l2_w"), l2_w);
        for (s, gram) in &grams {
            let hs = quad_form(gram, &w_scalar, &w_scalar).re.sqrt();
            report.row(format!("p={p} hs_w s={s:.2}"), hs);
        }
        if s_list.iter().any(|&s| s >= 0.999) {
            report.row(format!("p={p} h1_w"), h1_w);
        }
        report.row(format!("p={p} h1_over_h_w"), h1_w / h_w);

        let f_vec = interpolate_vector(&mesh, |x| {
            let (sx, cx) = (freq * x[0]).sin_cos();
            [
                C64::new(sx * (freq * x[1]).cosh() / pf, 0.0),
                C64::new(-cx * (freq * x[1]).sinh() / pf, 0.0),
            ]
        });
        let u_vec = &f_vec - &w_vec;
        let l2_u = l2_energy(&mesh, &w0, &u_vec, &u_vec).re.sqrt();
        // the oscillatory field is annihilated by the vorticity-divergence
        // pair, so the energy seminorm of u_p is evaluated through w_p;
        // interpolating F_p first would bury the value in h^2 noise of size
        // cosh(pi p)
        let plus_u = factor_energy(&mesh, &co, FactorKind::D3, &w_vec, &w_vec).re.sqrt();
        report.row(format!("p={p} l2_u"), l2_u);
        report.row(format!("p={p} plus_u"), plus_u);
        report.row(format!("p={p} blowup_ratio"), l2_u / plus_u);
        h_norms.push(h_w);
        l2_w_norms.push(l2_w);
        blowup.push(l2_u / plus_u);
    }
    let pass = strictly_decreasing(&h_norms)
        && strictly_decreasing(&l2_w_norms)
        && strictly_increasing(&blowup);
    report.set_verdict(pass);
    report.note(
        "the extension norms shrink with p while the difference field explodes in L^2; the \
         h1_over_h_w column stays bounded on this family and is reported without a criterion, \
         the gated instability column is blowup_ratio",
    );
    report.note(
        "u_p vanishes on the diameter by construction: the oscillatory field restricted to \
         y = 0 reproduces the boundary data exactly",
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Korn constants under refinement
// ---------------------------------------------------------------------------

/// Smallest eigenvalue of (operator core form, full H^1 Gram) on the free
/// degrees of freedom, per refinement level. Fully clamped square for the
/// strain and gradient factorizations, where the constant must stabilize;
/// free disc with identity volume mass for the vorticity factorization,
/// where the harmonic-gradient family drives it to zero.
pub fn exp_korn_scan(kind: FactorKind, refinements: usize) -> Result<ExperimentReport, ExperimentError> {
    if refinements < 2 {
        return Err(ExperimentError::Parameter("need at least 2 refinement levels".into()));
    }
    let mut report = ExperimentReport::new("exp_korn_scan");
    report.param("kind", kind.as_str());
    report.param("refinements", refinements);
    let mut kappas = Vec::new();
    for level in 0..refinements {
        let cfg = match kind {
            FactorKind::D1 => format!(
                "[domain]\ngeometry = unit_square\nn = 4\ns_rule = all\nrefine = {level}\n\
                 [coefficients]\nmu = 1.0\nlambda = 1.0\nkappa = 0.5\n\
                 [factorization]\nkind = D1\n"
            ),
            FactorKind::D2 => format!(
                "[domain]\ngeometry = unit_square\nn = 4\ns_rule = all\nrefine = {level}\n\
                 [coefficients]\nmu = 1.0\nlambda = 0.0\nkappa = 0.5\n\
                 [factorization]\nkind = D2\n"
            ),
            FactorKind::D3 => format!(
                "[domain]\ngeometry = disc\nn = 16\ns_rule = none\nrefine = {level}\n\
                 [coefficients]\nmu = 1.0\nlambda = 0.0\nkappa = 0.5\n\
                 [factorization]\nkind = D3\n\
                 [perturbation]\na00 = 1.0\n"
            ),
        };
        let p = problem_from_config(&cfg)?;
        let dm = DofMap::with_dirichlet(&p.mesh, &p.partition);
        let n = dm.n_dofs();
        if n == 0 {
            return Err(ExperimentError::Parameter("no free degrees of freedom".into()));
        }
        let mut a = CMat::zeros(n, n);
        assemble_core_form(&p, &dm, &mut a)?;
        let mut b = CMat::zeros(n, n);
        assemble_h1_gram(&p.mesh, &p.weight, &dm, &mut b);
        let kappa = smallest_pencil_eigenvalue(&a, &b, 1e-8, 2000)?;
        report.row(format!("{} level={level} dofs", kind.as_str()), n as f64);
        report.row(format!("{} level={level} kappa", kind.as_str()), kappa);
        kappas.push(kappa);
    }
    let pass = match kind {
        FactorKind::D1 | FactorKind::D2 => {
            let lo = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi / lo - 1.0 < 0.20 && *kappas.last().unwrap() > 0.01
        }
        FactorKind::D3 => strictly_decreasing(&kappas),
    };
    report.set_verdict(pass);
    report.note(match kind {
        FactorKind::D1 | FactorKind::D2 => {
            "clamped boundary: the constant must stay within 20% across levels and above 0.01"
        }
        FactorKind::D3 => {
            "free disc: finer meshes resolve higher harmonic gradients, the constant must \
             strictly decrease"
        }
    });
    Ok(report)
}

/// All three factorizations in one report; verdicts are conjoined.
pub fn exp_korn_scan_all(refinements: usize) -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::new("exp_korn_scan");
    report.param("refinements", refinements);
    let mut pass = true;
    for kind in [FactorKind::D1, FactorKind::D2, FactorKind::D3] {
        let sub = exp_korn_scan(kind, refinements)?;
        pass &= sub.passed();
        report.table.extend(sub.table);
        report.provenance.extend(sub.provenance);
    }
    report.set_verdict(pass);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Sector confinement of perturbed pencils
// ---------------------------------------------------------------------------

/// Perturbs the assembled core Gram `B` of a problem by random matrices
/// rescaled to prescribed relative form norm `M` and verifies the whole
/// spectrum of `(B + P, B)` inside the disc `|lambda - 1| <= M` and the
/// sector `|arg lambda| <= arcsin M`. Even trials are Hermitian, odd trials
/// fully non-normal.
pub fn exp_sector_sweep(
    problem: &ProblemSpec,
    m_list: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::Parameter("need at least one trial".into()));
    }
    for &m in m_list {
        if !(0.0 < m && m < 1.0) {
            return Err(ExperimentError::Parameter(format!("target norm {m} outside (0, 1)")));
        }
    }
    let (_dm, pencil) = assemble_pencil(problem)?;
    let n = pencil.n;
    if n == 0 {
        return Err(ExperimentError::Parameter("problem has no free degrees of freedom".into()));
    }
    let mut report = ExperimentReport::new("exp_sector_sweep");
    report.param("n_dofs", n);
    report.param("trials", trials);
    report.param("seed", seed);
    report.param(
        "m_list",
        m_list.iter().map(|m| format!("{m:.5}")).collect::<Vec<_>>().join(" "),
    );
    report.param("completeness_threshold", crate::spectral::COMPLETENESS_THRESHOLD);

    let opts = SolveOptions::default();
    let b = &pencil.b;
    let mut total_violations = 0usize;
    let mut worst_norm_dev = 0.0f64;
    for (mi, &target) in m_list.iter().enumerate() {
        let mut disc_excess = f64::NEG_INFINITY;
        let mut angle_excess = f64::NEG_INFINITY;
        let mut violations = 0usize;
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((mi * trials + trial) as u64 + 1);
            let mut p = CMat::from_fn(n, n, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            if trial % 2 == 0 {
                p = (&p + p.adjoint()) * C64::new(0.5, 0.0);
            }
            let nu = relative_form_norm(&p, b)?;
            p *= C64::new(target / nu, 0.0);
            let a = b + &p;
            let rep = sector_check_parts(&a, b, None, 1e-8, &opts)?;
            violations += rep.violations.len();
            disc_excess = disc_excess.max(rep.max_disc_excess);
            angle_excess = angle_excess.max(rep.max_angle - rep.angle_bound);
            worst_norm_dev = worst_norm_dev.max((rep.m - target).abs() / target);
        }
        report.row(format!("M={target:.5} max_disc_excess"), disc_excess);
        report.row(format!("M={target:.5} max_angle_excess"), angle_excess);
        report.row(format!("M={target:.5} violations"), violations as f64);
        report.row(format!("M={target:.5} fredholm_margin"), 1.0 - target);
        total_violations += violations;
    }
    report.row("measured_norm max_rel_dev", worst_norm_dev);
    let pass = total_violations == 0 && worst_norm_dev <= 1e-8;
    report.set_verdict(pass);
    report.note(
        "every pencil eigenvalue is a Rayleigh quotient of the perturbation against the core \
         form, so disc containment holds for any bounded perturbation; a violation would \
         indicate a solver defect",
    );
    report.note(
        "the parameter completeness_threshold marks the norm below which root-vector \
         completeness arguments apply; spectra are confined for every M < 1 regardless",
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Interior equality of the factorizations
// ---------------------------------------------------------------------------

/// All three factorizations induce the same energy on fields vanishing at the
/// boundary; with boundary-supported test fields the mismatch is exactly the
/// tangential edge form, with the strain variant carrying twice the gradient
/// variant's term. Both statements hold at quadrature precision on piecewise
/// linear fields, and the edge form is exactly linear in `mu`.
pub fn exp_identity_greens(
    problem: &ProblemSpec,
    n_pairs: usize,
    seed: u64,
) -> Result<ExperimentReport, ExperimentError> {
    if !(problem.weight.is_constant() && problem.weight.gamma == 0.0) {
        return Err(ExperimentError::Parameter("needs the unweighted setting".into()));
    }
    let mesh = &problem.mesh;
    let co = &problem.coefficients;
    let x0 = mesh.centroid(0);
    let (mu0, lambda0) = (co.mu.eval(x0), co.lambda.eval(x0));
    if lambda0 < 0.0 {
        return Err(ExperimentError::Parameter(
            "the strain factorization needs a nonnegative second coefficient".into(),
        ));
    }
    let co2 = LameCoefficients::constant(2.0 * mu0, lambda0, co.kappa);

    let nv = mesh.n_vertices();
    let mut on_boundary = vec![false; nv];
    for be in mesh.boundary_edges() {
        on_boundary[be.vertices[0]] = true;
        on_boundary[be.vertices[1]] = true;
    }
    let all_edges: Vec<usize> = (0..mesh.boundary_edges().len()).collect();
    let kinds = [FactorKind::D1, FactorKind::D2, FactorKind::D3];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand_field = |interior_only: bool| {
        CVec::from_fn(2 * nv, |i, _| {
            let val = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            if interior_only && on_boundary[i / 2] {
                C64::new(0.0, 0.0)
            } else {
                val
            }
        })
    };

    let mut report = ExperimentReport::new("exp_identity_greens");
    report.param("n_vertices", nv);
    report.param("n_pairs", n_pairs);
    report.param("seed", seed);

    let mut max_interior = 0.0f64;
    for _ in 0..n_pairs {
        let u = rand_field(true);
        let v = rand_field(true);
        let e: Vec<C64> = kinds.iter().map(|&k| factor_energy(mesh, co, k, &u, &v)).collect();
        let scale = e.iter().map(|c| c.norm()).fold(1e-300, f64::max);
        for i in 0..3 {
            for j in (i + 1)..3 {
                max_interior = max_interior.max((e[i] - e[j]).norm() / scale);
            }
        }
    }
    report.row("interior max_rel_mismatch", max_interior);

    let mut max_d1 = 0.0f64;
    let mut max_d2 = 0.0f64;
    let mut max_half = 0.0f64;
    let mut max_tau_mu = 0.0f64;
    let mut max_form_mu = 0.0f64;
    for _ in 0..10 {
        let u = rand_field(false);
        let v = rand_field(false);
        let tau = tau0_energy(mesh, co, &all_edges, &u, &v);
        let e: Vec<C64> = kinds.iter().map(|&k| factor_energy(mesh, co, k, &u, &v)).collect();
        let scale = e.iter().map(|c| c.norm()).fold(1e-300, f64::max);
        let m1 = e[0] - e[2];
        let m2 = e[1] - e[2];
        max_d1 = max_d1.max((m1 - tau * C64::new(2.0, 0.0)).norm() / scale);
        max_d2 = max_d2.max((m2 - tau).norm() / scale);
        max_half = max_half.max((m1 - m2 * C64::new(2.0, 0.0)).norm() / scale);
        // doubling mu doubles the edge form entry by entry
        let tau2 = tau0_energy(mesh, &co2, &all_edges, &u, &v);
        max_tau_mu = max_tau_mu.max((tau2 - tau * C64::new(2.0, 0.0)).norm() / tau.norm().max(1e-300));
        let e2: Vec<C64> = kinds.iter().map(|&k| factor_energy(mesh, &co2, k, &u, &v)).collect();
        let m2b = e2[1] - e2[2];
        let scale2 = e2.iter().map(|c| c.norm()).fold(1e-300, f64::max);
        max_form_mu = max_form_mu.max((m2b - m2 * C64::new(2.0, 0.0)).norm() / scale2);
    }
    report.row("boundary strain_vs_2tau max_rel", max_d1);
    report.row("boundary gradient_vs_tau max_rel", max_d2);
    report.row("boundary strain_vs_2gradient max_rel", max_half);
    report.row("mu_doubling edge_form max_rel", max_tau_mu);
    report.row("mu_doubling form_mismatch max_rel", max_form_mu);

    let pass = max_interior <= 1e-10
        && max_d1 <= 1e-8
        && max_d2 <= 1e-8
        && max_half <= 1e-8
        && max_tau_mu <= 1e-12
        && max_form_mu <= 1e-8;
    report.set_verdict(pass);
    report.note(
        "interior equality and the tangential mismatch identities are exact for piecewise \
         linear fields, tolerances only absorb roundoff of the edge quadrature",
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Eigenvalue convergence against the square spectrum
// ---------------------------------------------------------------------------

/// With unit first coefficient, second coefficient -1, the gradient
/// factorization, and a fully clamped unit square, the operator form is the
/// componentwise Dirichlet Laplacian, whose spectrum is
/// `pi^2 (p^2 + q^2)` with every multiplicity doubled across the two
/// components. The lowest sixteen discrete eigenvalues must approach the
/// five distinct targets from above, monotonically across nested meshes,
/// with the exact multiplicity pattern 2, 4, 2, 4, 4.
pub fn exp_convergence_vector_laplace(sizes: &[usize]) -> Result<ExperimentReport, ExperimentError> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::Parameter("need strictly increasing mesh sizes".into()));
    }
    let targets: [(f64, usize); 5] = [
        (2.0 * PI * PI, 2),
        (5.0 * PI * PI, 4),
        (8.0 * PI * PI, 2),
        (10.0 * PI * PI, 4),
        (13.0 * PI * PI, 4),
    ];
    let n_want = 16;
    let mut report = ExperimentReport::new("exp_convergence_vector_laplace");
    report.param("sizes", sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "));

    let mut levels: Vec<Vec<f64>> = Vec::new();
    for &n in sizes {
        let cfg = format!(
            "[domain]\ngeometry = unit_square\nn = {n}\ns_rule = all\n\
             [coefficients]\nmu = 1.0\nlambda = -1.0\nkappa = 0.5\n\
             [factorization]\nkind = D2\n"
        );
        let p = problem_from_config(&cfg)?;
        let dm = DofMap::with_dirichlet(&p.mesh, &p.partition);
        let (k, m) = vector_laplace_csr(&p.mesh, &dm);

        // identity gate: the factorized form with these coefficients must
        // agree with the assembled gradient Gram on a random free field
        let mut gate_rng = ChaCha8Rng::seed_from_u64(0x1007);
        let xr: Vec<f64> = (0..dm.n_dofs()).map(|_| gate_rng.gen::<f64>() - 0.5).collect();
        let mut kx = vec![0.0; dm.n_dofs()];
        k.matvec_into(&xr, &mut kx);
        let quad: f64 = xr.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let xc = CVec::from_fn(dm.n_dofs(), |i, _| C64::new(xr[i], 0.0));
        let xf = dm.prolong(&xc);
        let form = factor_energy(&p.mesh, &p.coefficients, FactorKind::D2, &xf, &xf).re;
        let gate_rel = (quad - form).abs() / form;
        if gate_rel > 1e-12 {
            return Err(ExperimentError::OracleMismatch {
                what: format!("gradient form identity on the n={n} square"),
                rel: gate_rel,
            });
        }

        let eigs = lowest_pencil_eigenvalues_sparse(&k, &m, n_want, 1e-10, 400)?;
        for (i, &ev) in eigs.iter().enumerate() {
            report.row(format!("n={n} eig={:02}", i + 1), ev);
        }
        levels.push(eigs);
    }

    // monotone from above under nested refinement
    let mut monotone = true;
    for w in levels.windows(2) {
        for i in 0..n_want {
            monotone &= w[0][i] >= w[1][i] - 1e-8 * w[1][i];
        }
    }
    let flat_targets: Vec<f64> = targets
        .iter()
        .flat_map(|&(t, m)| std::iter::repeat(t).take(m))
        .collect();
    let finest = levels.last().unwrap();
    let mut above = true;
    for i in 0..n_want {
        above &= finest[i] >= flat_targets[i] * (1.0 - 1e-8);
    }

    // Cluster the finest level by relative gaps. Continuum-degenerate pairs
    // with swapped mode numbers split by an O(h^2) amount on this mesh (the
    // swap symmetry separates their symmetric and antisymmetric parts
    // without tying the eigenvalues), so the gap threshold scales like h^2
    // as well; distinct targets stay >= 20% apart and are never merged.
    let n_fin = *sizes.last().unwrap();
    let h_factor = ((64.0 / n_fin as f64) * (64.0 / n_fin as f64)).max(1.0);
    let cluster_tol = 0.005 * h_factor;
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &ev in finest {
        match clusters.last_mut() {
            Some((mean, count)) if (ev - *mean).abs() <= cluster_tol * *mean => {
                *mean = (*mean * *count as f64 + ev) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => clusters.push((ev, 1)),
        }
    }
    // first-order elements converge like h^2; the 1% target is calibrated at
    // n = 64 and scales back for coarser runs
    let tol_rel = 0.01 * h_factor;
    let mut pattern_ok = clusters.len() == targets.len();
    if pattern_ok {
        for (c, &(t, m)) in clusters.iter().zip(targets.iter()) {
            report.row(format!("n={n_fin} cluster near {t:.4}"), c.0);
            report.row(format!("n={n_fin} multiplicity near {t:.4}"), c.1 as f64);
            pattern_ok &= c.1 == m && (c.0 - t).abs() <= tol_rel * t;
        }
    }
    let pass = monotone && above && pattern_ok;
    report.set_verdict(pass);
    report.note(
        "conforming elements on nested meshes give eigenvalues decreasing toward the targets \
         from above; swapped-index mode pairs split at order h^2, so the clustering window \
         and the target tolerance both scale with h^2 below the reference mesh",
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

pub const EXPERIMENT_NAMES: [&str; 7] = [
    "exp_harmonic_gradient_decay",
    "exp_hadamard",
    "exp_embedding_exponent",
    "exp_korn_scan",
    "exp_sector_sweep",
    "exp_identity_greens",
    "exp_convergence_vector_laplace",
];

/// Tunable knobs of the registered experiments, with defaults calibrated so
/// every verdict is attainable on the shipped meshes.
#[derive(Clone, Debug)]
pub struct ExperimentParams {
    pub seed: u64,
    pub decay_boundary: usize,
    pub decay_p_max: usize,
    pub hadamard_boundary: usize,
    pub hadamard_p_max: usize,
    pub hadamard_s_list: Vec<f64>,
    pub epsilon: f64,
    pub s_list: Vec<f64>,
    pub n_terms: usize,
    pub m_list: Vec<f64>,
    pub trials: usize,
    pub refinements: usize,
    pub laplace_sizes: Vec<usize>,
    pub n_pairs: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            seed: 0,
            decay_boundary: 256,
            decay_p_max: 6,
            hadamard_boundary: 64,
            hadamard_p_max: 4,
            hadamard_s_list: vec![0.4, 0.6, 0.8, 1.0],
            epsilon: 0.1,
            s_list: vec![0.5, 0.9],
            n_terms: 192,
            m_list: vec![0.1, 0.3, std::f64::consts::FRAC_1_SQRT_2, 0.9, 0.999],
            trials: 20,
            refinements: 3,
            laplace_sizes: vec![16, 32, 64],
            n_pairs: 100,
        }
    }
}

/// Runs a registered experiment by name.
pub fn run_experiment(
    name: &str,
    params: &ExperimentParams,
) -> Result<ExperimentReport, ExperimentError> {
    match name {
        "exp_harmonic_gradient_decay" => {
            exp_harmonic_gradient_decay(params.decay_boundary, params.decay_p_max)
        }
        "exp_hadamard" => {
            exp_hadamard(params.hadamard_boundary, params.hadamard_p_max, &params.hadamard_s_list)
        }
        "exp_embedding_exponent" => {
            exp_embedding_exponent(params.epsilon, &params.s_list, params.n_terms)
        }
        "exp_korn_scan" => exp_korn_scan_all(params.refinements),
        "exp_sector_sweep" => {
            let p = builtin_problem("ex_d1")?;
            exp_sector_sweep(&p, &params.m_list, params.trials, params.seed)
        }
        "exp_identity_greens" => {
            let p = problem_from_config(
                "[domain]\ngeometry = unit_square\nn = 6\ns_rule = none\n\
                 [coefficients]\nmu = 1.0\nlambda = 0.5\nkappa = 0.5\n\
                 [factorization]\nkind = D2\n",
            )?;
            exp_identity_greens(&p, params.n_pairs, params.seed)
        }
        "exp_convergence_vector_laplace" => exp_convergence_vector_laplace(&params.laplace_sizes),
        other => Err(ExperimentError::UnknownName(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::scalar_gagliardo_gram;

    #[test]
    fn gauss_tables_integrate_polynomials_exactly() {
        // 8 points are exact through degree 15, 6 points through degree 11
        let int8: f64 = GL8.iter().map(|&(x, w)| w * 0.5 * (0.5 * (x + 1.0)).powi(15)).sum();
        assert!((int8 - 1.0 / 16.0).abs() < 1e-15);
        let int6: f64 = GL6.iter().map(|&(x, w)| w * 0.5 * (0.5 * (x + 1.0)).powi(11)).sum();
        assert!((int6 - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn monomial_kernel_quadrature_matches_closed_form_at_s_zero() {
        for k in [1usize, 2, 3, 4, 8, 16, 32] {
            let q = monomial_gagliardo(k, 0.0);
            let exact = monomial_gagliardo_closed_s0(k);
            assert!(
                (q - exact).abs() / exact < 1e-8,
                "k={k}: quadrature {q} vs closed {exact}"
            );
        }
    }

    #[test]
    fn ladder_matches_single_kernel_evaluations() {
        let ladder = monomial_gagliardo_ladder(3, 0.5);
        // the top rung shares its quadrature grid with the one-off
        // evaluator, so only the exponent and cosine recurrences differ
        let top = monomial_gagliardo(12, 0.5);
        assert!(
            (ladder[2] - top).abs() / top < 1e-12,
            "top rung: ladder {} vs single {top}",
            ladder[2]
        );
        // lower rungs ride a grid tuned for the top frequency; agreement is
        // limited by the quadrature error of the coarser one-off grids
        for (i, &g) in ladder.iter().enumerate() {
            let single = monomial_gagliardo(4 * (i + 1), 0.5);
            assert!(
                (g - single).abs() / single < 1e-8,
                "nu={}: ladder {g} vs single {single}",
                i + 1
            );
        }
    }

    #[test]
    fn monomial_kernel_quadrature_matches_mesh_gagliardo() {
        // independent route: assembled Gagliardo Gram of the interpolated
        // monomial on the polygonal disc; z and z^2 interpolate exactly or
        // to h^2, so a few percent covers domain and quadrature error
        let mesh = build_disc_mesh(64, 1.0).unwrap();
        let gram = scalar_gagliardo_gram(&mesh, 0.5, &GagliardoPreset::standard());
        for k in [1usize, 2] {
            let f = interpolate_scalar(&mesh, |x| C64::new(x[0], -x[1]).powu(k as u32));
            let mesh_val = quad_form(&gram, &f, &f).re;
            let exact = monomial_gagliardo(k, 0.5);
            let rel = (mesh_val - exact).abs() / exact;
            assert!(rel < 0.05, "k={k}: mesh {mesh_val} vs kernel {exact} (rel {rel:.3})");
        }
    }

    #[test]
    fn embedding_increments_track_the_model_exponent() {
        let eps = 0.1;
        let s = 0.5;
        let n = 24;
        let gag = monomial_gagliardo_ladder(n, s);
        let mut ratios = Vec::new();
        for nu in (n / 2)..n {
            let k = 4 * (nu + 1);
            let c2 = ((k + 1) as f64).powf(-(1.0 + eps));
            let d2 = c2 * (monomial_l2_sq(k) + gag[nu]);
            assert!(d2 > 0.0);
            ratios.push(d2 / (k as f64).powf(2.0 * s - 2.0 - eps));
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi / lo < 2.0, "model ratio drifts: {lo} .. {hi}");
    }

    #[test]
    fn embedding_experiment_classifies_the_divergent_side() {
        let report = exp_embedding_exponent(0.1, &[0.9], 48).unwrap();
        assert!(report.passed(), "verdict: {:?}", report.table);
        assert!(report.value("s=0.90 tail_energy_growth").unwrap() > 1.2);
        assert_eq!(report.value("s=0.90 class"), Some(1.0));
    }

    #[test]
    fn harmonic_gradient_decay_follows_the_circle_integrals() {
        let report = exp_harmonic_gradient_decay(128, 4).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        // closed form at p=4: r^2 = 36 pi / 100 pi
        assert!((report.value("p=4 ratio_exact").unwrap() - 0.6).abs() < 1e-12);
        let r2 = report.value("p=2 ratio").unwrap();
        let r4 = report.value("p=4 ratio").unwrap();
        assert!(r4 < r2);
    }

    #[test]
    fn hadamard_extensions_shrink_while_the_difference_field_explodes() {
        let report = exp_hadamard(64, 3, &[0.6, 1.0]).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        let b1 = report.value("p=1 blowup_ratio").unwrap();
        let b3 = report.value("p=3 blowup_ratio").unwrap();
        // two extra oscillations buy roughly e^{2 pi}
        assert!(b3 / b1 > 50.0, "blowup {b1} -> {b3}");
        assert!(report.value("p=1 hs_w s=0.60").unwrap() > 0.0);
    }

    #[test]
    fn korn_constant_is_stable_when_clamped() {
        let report = exp_korn_scan(FactorKind::D2, 2).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        assert!(report.value("D2 level=1 kappa").unwrap() > 0.01);
    }

    #[test]
    fn korn_constant_decays_on_the_free_disc() {
        let report = exp_korn_scan(FactorKind::D3, 2).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        let k0 = report.value("D3 level=0 kappa").unwrap();
        let k1 = report.value("D3 level=1 kappa").unwrap();
        assert!(k1 < k0);
    }

    #[test]
    fn sector_sweep_confines_the_spectrum() {
        let p = builtin_problem("ex_d1").unwrap();
        let report = exp_sector_sweep(&p, &[0.5], 2, 7).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        assert_eq!(report.value("M=0.50000 violations"), Some(0.0));
        assert!(report.value("M=0.50000 max_disc_excess").unwrap() <= 1e-8);
    }

    #[test]
    fn factorizations_agree_in_the_interior() {
        let p = problem_from_config(
            "[domain]\ngeometry = unit_square\nn = 4\ns_rule = none\n\
             [coefficients]\nmu = 1.0\nlambda = 0.5\nkappa = 0.5\n\
             [factorization]\nkind = D2\n",
        )
        .unwrap();
        let report = exp_identity_greens(&p, 20, 3).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        assert!(report.value("interior max_rel_mismatch").unwrap() <= 1e-10);
    }

    #[test]
    fn vector_laplace_eigenvalues_approach_the_square_spectrum() {
        let report = exp_convergence_vector_laplace(&[8, 16]).unwrap();
        assert!(report.passed(), "table: {:?}", report.table);
        // coarsest level sits above the finer one
        let a = report.value("n=8 eig=01").unwrap();
        let b = report.value("n=16 eig=01").unwrap();
        assert!(a >= b && b >= 2.0 * PI * PI);
    }

    #[test]
    fn reports_are_byte_identical_across_reruns() {
        let p = problem_from_config(
            "[domain]\ngeometry = unit_square\nn = 4\ns_rule = none\n\
             [coefficients]\nmu = 1.0\nlambda = 0.5\nkappa = 0.5\n\
             [factorization]\nkind = D2\n",
        )
        .unwrap();
        let r1 = exp_identity_greens(&p, 5, 11).unwrap();
        let r2 = exp_identity_greens(&p, 5, 11).unwrap();
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        write_report_csv(&mut c1, &r1).unwrap();
        write_report_csv(&mut c2, &r2).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(report_json(&r1), report_json(&r2));
        let text = String::from_utf8(c1).unwrap();
        assert!(text.starts_with("label,value\n"));
        assert!(text.contains("interior max_rel_mismatch,"));
    }

    #[test]
    fn dispatcher_rejects_unknown_names() {
        let err = run_experiment("exp_unknown", &ExperimentParams::default());
        assert!(matches!(err, Err(ExperimentError::UnknownName(_))));
    }
}
