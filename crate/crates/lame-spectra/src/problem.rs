//! Problem data: Lame coefficients, weight functions, factorization choice,
//! perturbation fields, admissibility checks, and config parsing.
//!
//! A [`ProblemSpec`] bundles everything the assembly stage needs. Coefficient
//! fields are pointwise evaluators; the discrete forms only ever sample them
//! at quadrature points, so weights that vanish at junction vertices stay
//! finite in every assembled integral.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix2x4, Vector2};
use thiserror::Error;

use crate::linalg::C64;
use crate::mesh::{
    build_disc_mesh, build_half_disc_mesh, build_unit_square_mesh, refine, tag_boundary,
    BoundaryPartition, Mesh, MeshError,
};

pub type Mat2 = Matrix2<C64>;
pub type Mat2x4 = Matrix2x4<C64>;
pub type CVec2 = Vector2<C64>;

/// Scalar coefficient as a pointwise evaluator on the plane.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Fn(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Fn(f) => f(x),
        }
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Fn(_) => write!(f, "Fn(..)"),
        }
    }
}

/// 2x2 complex matrix coefficient as a pointwise evaluator.
#[derive(Clone)]
pub enum MatrixField {
    Zero,
    Constant(Mat2),
    Fn(Arc<dyn Fn([f64; 2]) -> Mat2 + Send + Sync>),
}

impl MatrixField {
    pub fn scaled_identity(c: f64) -> MatrixField {
        if c == 0.0 {
            MatrixField::Zero
        } else {
            MatrixField::Constant(Mat2::identity() * C64::new(c, 0.0))
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> Mat2 {
        match self {
            MatrixField::Zero => Mat2::zeros(),
            MatrixField::Constant(m) => *m,
            MatrixField::Fn(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MatrixField::Zero)
    }
}

impl std::fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatrixField::Zero => write!(f, "Zero"),
            MatrixField::Constant(m) => write!(f, "Constant({m:?})"),
            MatrixField::Fn(_) => write!(f, "Fn(..)"),
        }
    }
}

/// First-order perturbation of the operator.
///
/// `Gradient` multiplies the full gradient stack `(d1 u1, d1 u2, d2 u1, d2 u2)`
/// and is admissible for the `D1`/`D2` factorizations; for `D3` only terms of
/// the form `a ~ D3 u` are admissible, which `Factor` provides (a 2x2 field
/// against the two `D3` rows). `WeightCanonical` is the pairing
/// `2 gamma rho^{-1} (D rho)^* D u` that exactly cancels the weight commutator
/// of the Q form, recovering the unperturbed operator of the weighted theory.
#[derive(Clone, Debug)]
pub enum FirstOrder {
    None,
    WeightCanonical,
    Gradient(Mat2x4Field),
    Factor(MatrixField),
}

/// 2x4 complex matrix coefficient (gradient perturbations).
#[derive(Clone)]
pub enum Mat2x4Field {
    Constant(Mat2x4),
    Fn(Arc<dyn Fn([f64; 2]) -> Mat2x4 + Send + Sync>),
}

impl Mat2x4Field {
    pub fn eval(&self, x: [f64; 2]) -> Mat2x4 {
        match self {
            Mat2x4Field::Constant(m) => *m,
            Mat2x4Field::Fn(f) => f(x),
        }
    }
}

impl std::fmt::Debug for Mat2x4Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mat2x4Field::Constant(m) => write!(f, "Constant({m:?})"),
            Mat2x4Field::Fn(_) => write!(f, "Fn(..)"),
        }
    }
}

/// Lame coefficients with the uniform ellipticity bound `kappa`:
/// `mu >= kappa` and `2 mu + lambda >= kappa > 0` must hold throughout the
/// closed domain.
#[derive(Clone, Debug)]
pub struct LameCoefficients {
    pub mu: ScalarField,
    pub lambda: ScalarField,
    pub kappa: f64,
}

impl LameCoefficients {
    pub fn constant(mu: f64, lambda: f64, kappa: f64) -> Self {
        LameCoefficients { mu: ScalarField::Constant(mu), lambda: ScalarField::Constant(lambda), kappa }
    }
}

/// Choice of the first-order factorization of the Lame operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    /// Deformation (strain) factorization, needs `lambda >= 0`. `k = 4` rows.
    D1,
    /// Gradient factorization, needs `mu + lambda >= 0`. `k = 5` rows.
    D2,
    /// Vorticity/divergence factorization, needs `2 mu + lambda >= kappa`.
    /// `k = 2` rows.
    D3,
}

impl FactorKind {
    /// Number of rows of the factor for spatial dimension `m`.
    pub fn rows_for_dim(self, m: usize) -> usize {
        match self {
            FactorKind::D1 => m * (m + 1) / 2 + 1,
            FactorKind::D2 => m * m + 1,
            FactorKind::D3 => m * (m - 1) / 2 + 1,
        }
    }

    /// Rows in the plane (`m = 2`).
    pub fn rows(self) -> usize {
        self.rows_for_dim(2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FactorKind::D1 => "D1",
            FactorKind::D2 => "D2",
            FactorKind::D3 => "D3",
        }
    }

    pub fn parse(s: &str) -> Option<FactorKind> {
        match s {
            "D1" => Some(FactorKind::D1),
            "D2" => Some(FactorKind::D2),
            "D3" => Some(FactorKind::D3),
            _ => None,
        }
    }
}

/// Weight function `rho` with its gradient and the weight exponent `gamma`.
/// `rho` takes values in `[0, 1]` and vanishes exactly on the junction set of
/// the distance construction; the constant weight is `rho == 1`.
#[derive(Clone, Debug)]
pub struct Weight {
    rho: ScalarField,
    grad: GradField,
    pub gamma: f64,
}

#[derive(Clone)]
enum GradField {
    Zero,
    Fn(Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>),
}

impl std::fmt::Debug for GradField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradField::Zero => write!(f, "Zero"),
            GradField::Fn(_) => write!(f, "Fn(..)"),
        }
    }
}

impl Weight {
    /// `rho == 1`; all weight factors drop out of the forms.
    pub fn constant(gamma: f64) -> Weight {
        Weight { rho: ScalarField::Constant(1.0), grad: GradField::Zero, gamma }
    }

    /// Distance to the junction set `Y` of the partition, scaled by the domain
    /// diameter and clamped at 1: `rho(x) = min(1, dist(x, Y)/diam)`. With an
    /// empty `Y` this degenerates to the constant weight.
    pub fn distance_to_junctions(mesh: &Mesh, partition: &BoundaryPartition, gamma: f64) -> Weight {
        let ys: Vec<[f64; 2]> = partition.y_vertices.iter().map(|&v| mesh.vertex(v)).collect();
        if ys.is_empty() {
            return Weight::constant(gamma);
        }
        let diam = domain_diameter(mesh);
        let ys2 = ys.clone();
        let rho = move |x: [f64; 2]| -> f64 {
            let d = ys.iter().map(|y| dist(x, *y)).fold(f64::INFINITY, f64::min);
            (d / diam).min(1.0)
        };
        let grad = move |x: [f64; 2]| -> [f64; 2] {
            let (mut best, mut arg) = (f64::INFINITY, [0.0, 0.0]);
            for y in &ys2 {
                let d = dist(x, *y);
                if d < best {
                    best = d;
                    arg = *y;
                }
            }
            if best / diam >= 1.0 || best == 0.0 {
                [0.0, 0.0]
            } else {
                [(x[0] - arg[0]) / (best * diam), (x[1] - arg[1]) / (best * diam)]
            }
        };
        Weight { rho: ScalarField::Fn(Arc::new(rho)), grad: GradField::Fn(Arc::new(grad)), gamma }
    }

    pub fn rho(&self, x: [f64; 2]) -> f64 {
        self.rho.eval(x)
    }

    pub fn grad_rho(&self, x: [f64; 2]) -> [f64; 2] {
        match &self.grad {
            GradField::Zero => [0.0, 0.0],
            GradField::Fn(f) => f(x),
        }
    }

    /// `rho(x)^e`; callers sample only at quadrature points, which never hit
    /// the zero set of `rho`.
    pub fn rho_pow(&self, x: [f64; 2], e: f64) -> f64 {
        if e == 0.0 {
            return 1.0;
        }
        self.rho(x).powf(e)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.rho, ScalarField::Constant(_))
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Largest pairwise distance between boundary vertices.
fn domain_diameter(mesh: &Mesh) -> f64 {
    let mut bverts: Vec<usize> = Vec::new();
    for be in mesh.boundary_edges() {
        bverts.push(be.vertices[0]);
    }
    let mut d: f64 = 0.0;
    for i in 0..bverts.len() {
        for j in (i + 1)..bverts.len() {
            d = d.max(dist(mesh.vertex(bverts[i]), mesh.vertex(bverts[j])));
        }
    }
    d
}

/// Weight for cylindrical domains in any dimension `m >= 2`:
/// `rho(x) = min(1, sqrt(phi(x_1..x_{m-1})^2 + x_m^2))` for a defining
/// function `phi` of the base. Pure point evaluator; no mesh attached.
pub fn weight_cylinder(
    phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
) -> impl Fn(&[f64]) -> f64 + Send + Sync {
    move |x: &[f64]| {
        let m = x.len();
        let p = phi(&x[..m - 1]);
        (p * p + x[m - 1] * x[m - 1]).sqrt().min(1.0)
    }
}

/// Weight for the model cube `(-1,1)^{m-1} x (0,1)`: the product of corner
/// distances, normalised by its supremum `5^{(m-1)/2}` over the closed cube so
/// that `0 <= rho <= 1` with maximum 1 attained at the top corners.
pub fn weight_cube(x: &[f64]) -> f64 {
    let m = x.len();
    let xm = x[m - 1];
    let mut prod = 1.0;
    for &xj in &x[..m - 1] {
        prod *= ((xj - 1.0).powi(2) + xm * xm) * ((xj + 1.0).powi(2) + xm * xm);
    }
    prod.sqrt() / 5f64.powf((m - 1) as f64 / 2.0)
}

/// Perturbation data of the operator and boundary condition relative to the
/// core pair `(a00, b00)`. The `_s` parts are the small perturbations entering
/// the form-norm bound; the `_c` parts the compact ones.
#[derive(Clone, Debug)]
pub struct PerturbationSpec {
    /// Core zero-order coefficient; Hermitian nonnegative.
    pub a00: MatrixField,
    pub da0_s: MatrixField,
    pub da0_c: MatrixField,
    pub a1: FirstOrder,
    /// Boundary weight in front of the conormal derivative; must be
    /// invertible on Robin edges.
    pub b1: MatrixField,
    /// Core boundary coefficient; `b1^{-1} b00` Hermitian nonnegative.
    pub b00: MatrixField,
    pub db0_s: MatrixField,
    pub db0_c: MatrixField,
    /// Coefficient of the tangential derivative on Robin edges. Dirichlet
    /// edges never see it: trial and test spaces vanish there.
    pub d_tau: MatrixField,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            a00: MatrixField::Zero,
            da0_s: MatrixField::Zero,
            da0_c: MatrixField::Zero,
            a1: FirstOrder::None,
            b1: MatrixField::Constant(Mat2::identity()),
            b00: MatrixField::Zero,
            db0_s: MatrixField::Zero,
            db0_c: MatrixField::Zero,
            d_tau: MatrixField::Zero,
        }
    }
}

impl PerturbationSpec {
    /// True when the perturbation part of the Q form vanishes identically for
    /// constant weights, i.e. `A = B`.
    pub fn is_empty(&self) -> bool {
        self.da0_s.is_zero()
            && self.da0_c.is_zero()
            && self.db0_s.is_zero()
            && self.db0_c.is_zero()
            && self.d_tau.is_zero()
            && matches!(self.a1, FirstOrder::None | FirstOrder::WeightCanonical)
    }
}

/// Complete problem description consumed by assembly.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub mesh: Mesh,
    pub partition: BoundaryPartition,
    pub coefficients: LameCoefficients,
    pub weight: Weight,
    pub kind: FactorKind,
    pub perturbation: PerturbationSpec,
}

/// How the core form achieves positivity.
#[derive(Clone, Debug, PartialEq)]
pub enum PositivityRoute {
    /// The Dirichlet part `S` is nonempty.
    DirichletPart,
    /// `a00 >= c0 I` on an open subset; carries the witness `c0`.
    VolumeCoefficient(f64),
    /// `b1^{-1} b00 >= c1 I` on part of the Robin boundary; witness `c1`.
    BoundaryCoefficient(f64),
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub route: PositivityRoute,
    /// max over sample points of `rho^2 ||a00 + da0||`.
    pub max_weighted_a0: f64,
    /// max over sample points of `rho ||a1||` (zero for None/WeightCanonical).
    pub max_weighted_a1: f64,
    /// max over volume sample points of `||da0_s|| + ||da0_c||`.
    pub volume_perturbation: f64,
    /// max over Robin edge midpoints of `||db0_s|| + ||db0_c|| + ||d_tau||`.
    pub boundary_perturbation: f64,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("ellipticity violated at ({0}, {1}): {2}")]
    Ellipticity(f64, f64, String),
    #[error("factorization {kind:?} inadmissible at ({x}, {y}): {detail}")]
    Inadmissible { kind: FactorKind, x: f64, y: f64, detail: String },
    #[error("a00 must be Hermitian nonnegative at ({0}, {1})")]
    CoreVolumeCoefficient(f64, f64),
    #[error("b1 singular at Robin edge midpoint ({0}, {1})")]
    BoundaryWeightSingular(f64, f64),
    #[error("b1^-1 b00 must be Hermitian nonnegative at ({0}, {1})")]
    CoreBoundaryCoefficient(f64, f64),
    #[error("degenerate problem: S empty, a00 nowhere positive, b00 nowhere positive")]
    Degenerate,
    #[error("first-order perturbation Gradient(..) requires kind D1 or D2; use Factor(..) for D3")]
    FirstOrderKindMismatch,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn hermitian_part_deviation(m: &Mat2) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues of the Hermitian part are real; returns the smaller one.
fn hermitian2_min_eig(m: &Mat2) -> f64 {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mid = (a + d) / 2.0;
    let rad = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
    mid - rad
}

fn mat_norm(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Checks ellipticity, factorization admissibility, coefficient structure and
/// the positivity route of the core form. Sample points are the triangle
/// centroids and boundary edge midpoints of the attached mesh.
pub fn validate(problem: &ProblemSpec) -> Result<ValidationReport, ProblemError> {
    let mesh = &problem.mesh;
    let co = &problem.coefficients;
    let pe = &problem.perturbation;
    let kappa = co.kappa;
    if !(kappa > 0.0) {
        return Err(ProblemError::Ellipticity(f64::NAN, f64::NAN, format!("kappa = {kappa} must be positive")));
    }

    let mut volume_points: Vec<[f64; 2]> = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        volume_points.push(mesh.centroid(t));
    }
    let robin_midpoints: Vec<[f64; 2]> =
        problem.partition.robin_edges.iter().map(|&e| mesh.edge_midpoint(e)).collect();

    for &x in volume_points.iter().chain(robin_midpoints.iter()) {
        let mu = co.mu.eval(x);
        let lam = co.lambda.eval(x);
        if mu < kappa {
            return Err(ProblemError::Ellipticity(x[0], x[1], format!("mu = {mu} < kappa = {kappa}")));
        }
        if 2.0 * mu + lam < kappa {
            return Err(ProblemError::Ellipticity(x[0], x[1], format!("2mu+lambda = {} < kappa", 2.0 * mu + lam)));
        }
        let bad = match problem.kind {
            FactorKind::D1 if lam < 0.0 => Some(format!("lambda = {lam} < 0")),
            FactorKind::D2 if mu + lam < 0.0 => Some(format!("mu+lambda = {} < 0", mu + lam)),
            _ => None,
        };
        if let Some(detail) = bad {
            return Err(ProblemError::Inadmissible { kind: problem.kind, x: x[0], y: x[1], detail });
        }
    }

    if matches!(pe.a1, FirstOrder::Gradient(_)) && problem.kind == FactorKind::D3 {
        return Err(ProblemError::FirstOrderKindMismatch);
    }
    if matches!(pe.a1, FirstOrder::Factor(_)) && problem.kind != FactorKind::D3 {
        return Err(ProblemError::FirstOrderKindMismatch);
    }

    // a00 Hermitian nonnegative at volume sample points; track the witness c0.
    let mut best_c0: f64 = f64::NEG_INFINITY;
    let mut max_weighted_a0: f64 = 0.0;
    let mut volume_perturbation: f64 = 0.0;
    for &x in &volume_points {
        let a00 = pe.a00.eval(x);
        let scale = mat_norm(&a00).max(1.0);
        if hermitian_part_deviation(&a00) > 1e-12 * scale {
            return Err(ProblemError::CoreVolumeCoefficient(x[0], x[1]));
        }
        let min_eig = hermitian2_min_eig(&a00);
        if min_eig < -1e-12 * scale {
            return Err(ProblemError::CoreVolumeCoefficient(x[0], x[1]));
        }
        best_c0 = best_c0.max(min_eig);
        let rho = problem.weight.rho(x);
        let da = pe.da0_s.eval(x) + pe.da0_c.eval(x);
        max_weighted_a0 = max_weighted_a0.max(rho * rho * mat_norm(&(a00 + da)));
        volume_perturbation = volume_perturbation.max(mat_norm(&pe.da0_s.eval(x)) + mat_norm(&pe.da0_c.eval(x)));
    }

    let mut max_weighted_a1: f64 = 0.0;
    match &pe.a1 {
        FirstOrder::Gradient(g) => {
            for &x in &volume_points {
                let m = g.eval(x);
                let n = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                max_weighted_a1 = max_weighted_a1.max(problem.weight.rho(x) * n);
            }
        }
        FirstOrder::Factor(f) => {
            for &x in &volume_points {
                let n = mat_norm(&f.eval(x));
                max_weighted_a1 = max_weighted_a1.max(problem.weight.rho(x) * n);
            }
        }
        FirstOrder::None | FirstOrder::WeightCanonical => {}
    }

    // Boundary structure on Robin edges; track the witness c1.
    let mut best_c1: f64 = f64::NEG_INFINITY;
    let mut boundary_perturbation: f64 = 0.0;
    for &x in &robin_midpoints {
        let b1 = pe.b1.eval(x);
        let inv = b1.try_inverse().ok_or(ProblemError::BoundaryWeightSingular(x[0], x[1]))?;
        let core = inv * pe.b00.eval(x);
        let scale = mat_norm(&core).max(1.0);
        if hermitian_part_deviation(&core) > 1e-10 * scale {
            return Err(ProblemError::CoreBoundaryCoefficient(x[0], x[1]));
        }
        let min_eig = hermitian2_min_eig(&core);
        if min_eig < -1e-10 * scale {
            return Err(ProblemError::CoreBoundaryCoefficient(x[0], x[1]));
        }
        best_c1 = best_c1.max(min_eig);
        boundary_perturbation = boundary_perturbation
            .max(mat_norm(&pe.db0_s.eval(x)) + mat_norm(&pe.db0_c.eval(x)) + mat_norm(&pe.d_tau.eval(x)));
    }

    let route = if !problem.partition.s_edges.is_empty() {
        PositivityRoute::DirichletPart
    } else if best_c0 > 1e-14 {
        PositivityRoute::VolumeCoefficient(best_c0)
    } else if best_c1 > 1e-14 {
        PositivityRoute::BoundaryCoefficient(best_c1)
    } else {
        return Err(ProblemError::Degenerate);
    };

    Ok(ValidationReport { route, max_weighted_a0, max_weighted_a1, volume_perturbation, boundary_perturbation })
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

/// Parsed key-value config with `[section]` headers. Unknown sections or keys
/// are rejected at interpretation time, not during the raw parse.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ProblemError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ProblemError::Config(format!("line {}: malformed section header", ln + 1)));
                }
                let name = line[1..line.len() - 1].trim().to_string();
                sections.entry(name.clone()).or_default();
                current = Some(name);
            } else if let Some(eq) = line.find('=') {
                let key = line[..eq].trim().to_string();
                let value = line[eq + 1..].trim().to_string();
                let section = current
                    .clone()
                    .ok_or_else(|| ProblemError::Config(format!("line {}: key before any [section]", ln + 1)))?;
                if sections.get_mut(&section).unwrap().insert(key.clone(), value).is_some() {
                    return Err(ProblemError::Config(format!("line {}: duplicate key `{key}`", ln + 1)));
                }
            } else {
                return Err(ProblemError::Config(format!("line {}: expected `key = value`", ln + 1)));
            }
        }
        Ok(RawConfig { sections })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section).and_then(|s| s.remove(key))
    }

    fn finish(self, known_sections: &[&str]) -> Result<(), ProblemError> {
        for (name, keys) in &self.sections {
            if !known_sections.contains(&name.as_str()) {
                return Err(ProblemError::Config(format!("unknown section [{name}]")));
            }
            if let Some(k) = keys.keys().next() {
                return Err(ProblemError::Config(format!("unknown key `{k}` in [{name}]")));
            }
        }
        Ok(())
    }
}

fn parse_f64(what: &str, v: &str) -> Result<f64, ProblemError> {
    v.parse().map_err(|_| ProblemError::Config(format!("{what}: expected a number, got `{v}`")))
}

fn parse_usize(what: &str, v: &str) -> Result<usize, ProblemError> {
    v.parse().map_err(|_| ProblemError::Config(format!("{what}: expected an integer, got `{v}`")))
}

/// Builds a [`ProblemSpec`] from config text. See the crate README for the
/// key reference; scalar perturbation entries `c` denote `c I`.
pub fn problem_from_config(text: &str) -> Result<ProblemSpec, ProblemError> {
    let mut cfg = RawConfig::parse(text)?;

    let geometry = cfg
        .take("domain", "geometry")
        .ok_or_else(|| ProblemError::Config("missing required key domain.geometry".into()))?;
    let n = parse_usize("domain.n", &cfg.take("domain", "n").ok_or_else(|| ProblemError::Config("missing required key domain.n".into()))?)?;
    let radius = cfg.take("domain", "radius").map(|v| parse_f64("domain.radius", &v)).transpose()?.unwrap_or(1.0);
    let refine_k = cfg.take("domain", "refine").map(|v| parse_usize("domain.refine", &v)).transpose()?.unwrap_or(0);
    let s_rule = cfg.take("domain", "s_rule").unwrap_or_else(|| "none".into());

    let mut mesh = match geometry.as_str() {
        "unit_square" => build_unit_square_mesh(n)?,
        "disc" => build_disc_mesh(n, radius)?,
        "half_disc" => build_half_disc_mesh(n, radius)?,
        other => return Err(ProblemError::Config(format!("unknown geometry `{other}`"))),
    };
    for _ in 0..refine_k {
        mesh = refine(&mesh)?;
    }

    let partition = match s_rule.as_str() {
        "none" => tag_boundary(&mesh, |_| false),
        "all" => tag_boundary(&mesh, |_| true),
        "left" => tag_boundary(&mesh, |m| m[0] < 1e-12),
        "bottom" => tag_boundary(&mesh, |m| m[1] < 1e-12),
        "left_arc" => tag_boundary(&mesh, |m| m[0] < 0.0),
        "diameter" => tag_boundary(&mesh, |m| m[1].abs() < 1e-12),
        other => return Err(ProblemError::Config(format!("unknown s_rule `{other}`"))),
    };
    let mesh = mesh.with_tags_from(&partition);

    let mu = cfg.take("coefficients", "mu").map(|v| parse_f64("coefficients.mu", &v)).transpose()?.unwrap_or(1.0);
    let lambda = cfg.take("coefficients", "lambda").map(|v| parse_f64("coefficients.lambda", &v)).transpose()?.unwrap_or(0.0);
    let kappa = cfg.take("coefficients", "kappa").map(|v| parse_f64("coefficients.kappa", &v)).transpose()?.unwrap_or(0.5);

    let weight_kind = cfg.take("weight", "kind").unwrap_or_else(|| "constant".into());
    let gamma = cfg.take("weight", "gamma").map(|v| parse_f64("weight.gamma", &v)).transpose()?.unwrap_or(0.0);
    let weight = match weight_kind.as_str() {
        "constant" => Weight::constant(gamma),
        "distance" => Weight::distance_to_junctions(&mesh, &partition, gamma),
        other => return Err(ProblemError::Config(format!("unknown weight kind `{other}`"))),
    };

    let kind_s = cfg
        .take("factorization", "kind")
        .ok_or_else(|| ProblemError::Config("missing required key factorization.kind".into()))?;
    let kind = FactorKind::parse(&kind_s)
        .ok_or_else(|| ProblemError::Config(format!("unknown factorization kind `{kind_s}`")))?;

    let scalar_matrix = |cfg: &mut RawConfig, key: &str| -> Result<MatrixField, ProblemError> {
        match cfg.take("perturbation", key) {
            Some(v) => Ok(MatrixField::scaled_identity(parse_f64(&format!("perturbation.{key}"), &v)?)),
            None => Ok(MatrixField::Zero),
        }
    };
    let a00 = scalar_matrix(&mut cfg, "a00")?;
    let da0_s = scalar_matrix(&mut cfg, "da0_s")?;
    let da0_c = scalar_matrix(&mut cfg, "da0_c")?;
    let b00 = scalar_matrix(&mut cfg, "b00")?;
    let db0_s = scalar_matrix(&mut cfg, "db0_s")?;
    let db0_c = scalar_matrix(&mut cfg, "db0_c")?;
    let d_tau = scalar_matrix(&mut cfg, "d_tau")?;
    let b1 = match cfg.take("perturbation", "b1") {
        Some(v) => {
            let c = parse_f64("perturbation.b1", &v)?;
            if c == 0.0 {
                return Err(ProblemError::Config("perturbation.b1 must be nonzero".into()));
            }
            MatrixField::Constant(Mat2::identity() * C64::new(c, 0.0))
        }
        None => MatrixField::Constant(Mat2::identity()),
    };
    let a1_mode = cfg.take("perturbation", "a1_mode").unwrap_or_else(|| "none".into());
    let a1_scale = cfg.take("perturbation", "a1").map(|v| parse_f64("perturbation.a1", &v)).transpose()?.unwrap_or(0.0);
    let a1 = match a1_mode.as_str() {
        "none" => {
            if a1_scale != 0.0 {
                return Err(ProblemError::Config("perturbation.a1 set but a1_mode = none".into()));
            }
            FirstOrder::None
        }
        "canonical" => FirstOrder::WeightCanonical,
        "gradient" => {
            let mut m = Mat2x4::zeros();
            // c * [I | I]: acts as c (d1 u + d2 u)
            for i in 0..2 {
                m[(i, i)] = C64::new(a1_scale, 0.0);
                m[(i, 2 + i)] = C64::new(a1_scale, 0.0);
            }
            FirstOrder::Gradient(Mat2x4Field::Constant(m))
        }
        "factor" => FirstOrder::Factor(MatrixField::scaled_identity(a1_scale)),
        other => return Err(ProblemError::Config(format!("unknown a1_mode `{other}`"))),
    };

    cfg.finish(&["domain", "coefficients", "weight", "factorization", "perturbation"])?;

    Ok(ProblemSpec {
        mesh,
        partition,
        coefficients: LameCoefficients::constant(mu, lambda, kappa),
        weight,
        kind,
        perturbation: PerturbationSpec { a00, da0_s, da0_c, a1, b1, b00, db0_s, db0_c, d_tau },
    })
}

// ---------------------------------------------------------------------------
// Built-in problems
// ---------------------------------------------------------------------------

pub const BUILTIN_NAMES: [&str; 5] = ["ex_d1", "ex_d2", "ex_d3", "example1", "example2"];

/// Config text of a named built-in problem.
pub fn builtin_config(name: &str) -> Option<&'static str> {
    match name {
        // Mixed elasticity problem: Dirichlet on S, stress traction on the
        // rest, deformation factorization.
        "ex_d1" => Some(
            "[domain]\ngeometry = unit_square\nn = 8\ns_rule = left\n\
             [coefficients]\nmu = 1.0\nlambda = 1.0\nkappa = 0.5\n\
             [factorization]\nkind = D1\n",
        ),
        // Gradient factorization with a tangential boundary perturbation
        // h mu d_tau0 on the Robin part.
        "ex_d2" => Some(
            "[domain]\ngeometry = unit_square\nn = 8\ns_rule = left\n\
             [coefficients]\nmu = 1.0\nlambda = 0.0\nkappa = 0.5\n\
             [factorization]\nkind = D2\n\
             [perturbation]\nd_tau = 0.1\n",
        ),
        // Vorticity factorization on the disc, Dirichlet on the left arc,
        // positive constant boundary coefficient on the right arc.
        "ex_d3" => Some(
            "[domain]\ngeometry = disc\nn = 64\ns_rule = left_arc\n\
             [coefficients]\nmu = 1.0\nlambda = 0.0\nkappa = 0.5\n\
             [factorization]\nkind = D3\n\
             [perturbation]\nb00 = 1.0\n",
        ),
        // Non-coercive model on the disc: no Dirichlet part, identity volume
        // and boundary coefficients; harmonic gradients defeat the D3 term.
        "example1" => Some(
            "[domain]\ngeometry = disc\nn = 64\ns_rule = none\n\
             [coefficients]\nmu = 1.0\nlambda = 0.0\nkappa = 0.5\n\
             [factorization]\nkind = D3\n\
             [perturbation]\na00 = 1.0\nb00 = 1.0\n",
        ),
        // Half-disc with Dirichlet diameter: the geometry of the classical
        // ill-posedness construction for oscillatory boundary data.
        "example2" => Some(
            "[domain]\ngeometry = half_disc\nn = 64\ns_rule = diameter\n\
             [coefficients]\nmu = 1.0\nlambda = 0.0\nkappa = 0.5\n\
             [factorization]\nkind = D3\n",
        ),
        _ => None,
    }
}

/// One-line description of a built-in, for listings.
pub fn builtin_description(name: &str) -> Option<&'static str> {
    match name {
        "ex_d1" => Some("unit square, S = left edge, D1 strain factorization, stress traction boundary"),
        "ex_d2" => Some("unit square, S = left edge, D2 gradient factorization, tangential boundary perturbation"),
        "ex_d3" => Some("disc, S = left arc, D3 vorticity factorization, positive boundary coefficient"),
        "example1" => Some("disc, S empty, D3 with identity coefficients; non-coercive harmonic-gradient model"),
        "example2" => Some("upper half-disc, S = diameter, D3; oscillatory Dirichlet data model"),
        _ => None,
    }
}

pub fn builtin_problem(name: &str) -> Result<ProblemSpec, ProblemError> {
    let cfg = builtin_config(name)
        .ok_or_else(|| ProblemError::Config(format!("unknown built-in problem `{name}`")))?;
    problem_from_config(cfg)
}
