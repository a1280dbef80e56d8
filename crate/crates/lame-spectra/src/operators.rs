//! Pointwise differential-operator algebra: the three first-order
//! factorizations of the Lame operator, boundary tractions, conormal
//! derivatives, and the tangential correction that relates them.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * gradients are stored as `G[(i, j)] = d_j u_i`;
//! * a factor is a pair of direction matrices `(M1, M2)` of shape `k x 2`
//!   with `D u = M1 (d_1 u) + M2 (d_2 u)`, each `d_j u` a column 2-vector;
//! * the conormal derivative attached to a factor is
//!   `nu_D u = sum_j nu_j M_j^T (D u)`;
//! * the boundary tangent is `t1 = (nu_2, -nu_1)`.

use nalgebra::{DVector, Vector2, Vector4};

use crate::linalg::{C64, RMat};
use crate::problem::{FactorKind, Mat2};

pub type CVecK = DVector<C64>;
pub type CVec2 = Vector2<C64>;

/// Direction matrices of a factorization at fixed coefficient values.
#[derive(Clone, Debug)]
pub struct FactorMatrices {
    pub m1: RMat,
    pub m2: RMat,
}

impl FactorMatrices {
    pub fn rows(&self) -> usize {
        self.m1.nrows()
    }
}

/// Builds the `k x 2` direction matrices of the chosen factorization.
///
/// Row layouts:
/// * `D1` (k = 4): `sqrt(2 mu) d1 u1`, `sqrt(2 mu) d2 u2`,
///   `sqrt(mu) (d2 u1 + d1 u2)`, `sqrt(lambda) div u`;
/// * `D2` (k = 5): `sqrt(mu) d1 u1`, `sqrt(mu) d1 u2`, `sqrt(mu) d2 u1`,
///   `sqrt(mu) d2 u2`, `sqrt(mu + lambda) div u`;
/// * `D3` (k = 2): `sqrt(mu) (d2 u1 - d1 u2)`, `sqrt(2 mu + lambda) div u`.
///
/// The square roots require the kind's admissibility range, checked by
/// problem validation, not here.
pub fn factor_matrices(kind: FactorKind, mu: f64, lambda: f64) -> FactorMatrices {
    let k = kind.rows();
    let mut m1 = RMat::zeros(k, 2);
    let mut m2 = RMat::zeros(k, 2);
    match kind {
        FactorKind::D1 => {
            let s2mu = (2.0 * mu).sqrt();
            let smu = mu.sqrt();
            let slam = lambda.sqrt();
            m1[(0, 0)] = s2mu;
            m2[(1, 1)] = s2mu;
            m2[(2, 0)] = smu;
            m1[(2, 1)] = smu;
            m1[(3, 0)] = slam;
            m2[(3, 1)] = slam;
        }
        FactorKind::D2 => {
            let smu = mu.sqrt();
            let sml = (mu + lambda).sqrt();
            m1[(0, 0)] = smu;
            m1[(1, 1)] = smu;
            m2[(2, 0)] = smu;
            m2[(3, 1)] = smu;
            m1[(4, 0)] = sml;
            m2[(4, 1)] = sml;
        }
        FactorKind::D3 => {
            let smu = mu.sqrt();
            let s2ml = (2.0 * mu + lambda).sqrt();
            m2[(0, 0)] = smu;
            m1[(0, 1)] = -smu;
            m1[(1, 0)] = s2ml;
            m2[(1, 1)] = s2ml;
        }
    }
    FactorMatrices { m1, m2 }
}

/// `D u` from the gradient `G[(i, j)] = d_j u_i`.
pub fn apply_factor(fm: &FactorMatrices, g: &Mat2) -> CVecK {
    let k = fm.rows();
    let mut out = CVecK::zeros(k);
    for r in 0..k {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..2 {
            acc += fm.m1[(r, i)] * g[(i, 0)] + fm.m2[(r, i)] * g[(i, 1)];
        }
        out[r] = acc;
    }
    out
}

/// `D` applied to a real scalar gradient, e.g. the weight gradient:
/// `D rho = M1 d1 rho + M2 d2 rho` read column-wise gives the `k x 2` matrix
/// whose action on a vector value is the factor of `rho x`. Returned as
/// `k x 2` for direct contraction against `D u`.
pub fn factor_of_scalar_gradient(fm: &FactorMatrices, grad: [f64; 2]) -> RMat {
    let k = fm.rows();
    let mut out = RMat::zeros(k, 2);
    for r in 0..k {
        for i in 0..2 {
            out[(r, i)] = fm.m1[(r, i)] * grad[0] + fm.m2[(r, i)] * grad[1];
        }
    }
    out
}

/// Conormal derivative `nu_D u = sum_j nu_j M_j^T (D u)`.
pub fn conormal(fm: &FactorMatrices, g: &Mat2, nu: [f64; 2]) -> CVec2 {
    let d = apply_factor(fm, g);
    let mut out = CVec2::zeros();
    for i in 0..2 {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..fm.rows() {
            acc += (nu[0] * fm.m1[(r, i)] + nu[1] * fm.m2[(r, i)]) * d[r];
        }
        out[i] = acc;
    }
    out
}

/// Stress traction `sigma(u) nu = mu G nu + mu G^T nu + lambda (tr G) nu`.
pub fn stress_traction(mu: f64, lambda: f64, g: &Mat2, nu: [f64; 2]) -> CVec2 {
    let nuc = CVec2::new(C64::new(nu[0], 0.0), C64::new(nu[1], 0.0));
    let div = g[(0, 0)] + g[(1, 1)];
    g * nuc * C64::new(mu, 0.0) + g.transpose() * nuc * C64::new(mu, 0.0) + nuc * (div * lambda)
}

/// Tangential boundary operator `d_tau0 u = G^T nu - (tr G) nu`, the exact
/// discrepancy between the conormal derivatives of different factorizations:
/// `sigma = nu_D1 = nu_D2 + mu d_tau0 = nu_D3 + 2 mu d_tau0`.
pub fn tangential_tau0(g: &Mat2, nu: [f64; 2]) -> CVec2 {
    let nuc = CVec2::new(C64::new(nu[0], 0.0), C64::new(nu[1], 0.0));
    let div = g[(0, 0)] + g[(1, 1)];
    g.transpose() * nuc - nuc * div
}

/// Derivative along the boundary tangent `t1 = (nu_2, -nu_1)`.
pub fn tangential_t1(g: &Mat2, nu: [f64; 2]) -> CVec2 {
    let t = CVec2::new(C64::new(nu[1], 0.0), C64::new(-nu[0], 0.0));
    g * t
}

/// Boundary tangent for an outward normal.
pub fn edge_tangent(nu: [f64; 2]) -> [f64; 2] {
    [nu[1], -nu[0]]
}

/// Gradient entries stacked in the order `(d1 u1, d1 u2, d2 u1, d2 u2)`,
/// the convention of the 2x4 first-order perturbation coefficients.
pub fn gradient_stack(g: &Mat2) -> Vector4<C64> {
    Vector4::new(g[(0, 0)], g[(1, 0)], g[(0, 1)], g[(1, 1)])
}

/// Smallest singular value of the factor symbol `S(xi) = xi_1 M1 + xi_2 M2`
/// minimised over `n_dirs` unit directions. Positivity is the pointwise
/// ellipticity of the factorization.
pub fn symbol_injectivity(fm: &FactorMatrices, n_dirs: usize) -> f64 {
    let mut min_sv = f64::INFINITY;
    for d in 0..n_dirs {
        let th = std::f64::consts::PI * d as f64 / n_dirs as f64;
        let (xi1, xi2) = (th.cos(), th.sin());
        // 2x2 Gram of the symbol; closed-form smallest eigenvalue.
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for r in 0..fm.rows() {
            let s0 = xi1 * fm.m1[(r, 0)] + xi2 * fm.m2[(r, 0)];
            let s1 = xi1 * fm.m1[(r, 1)] + xi2 * fm.m2[(r, 1)];
            a += s0 * s0;
            b += s0 * s1;
            c += s1 * s1;
        }
        let mid = (a + c) / 2.0;
        let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
        min_sv = min_sv.min((mid - rad).max(0.0).sqrt());
    }
    min_sv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::FactorKind::{D1, D2, D3};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cg(rng: &mut StdRng) -> Mat2 {
        Mat2::from_fn(|_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn real_g(entries: [[f64; 2]; 2]) -> Mat2 {
        Mat2::from_fn(|i, j| C64::new(entries[i][j], 0.0))
    }

    #[test]
    fn traction_values_on_linear_fields() {
        // u = (x1, 0): G = [[1,0],[0,0]]
        let g = real_g([[1.0, 0.0], [0.0, 0.0]]);
        let s = stress_traction(1.0, 0.0, &g, [1.0, 0.0]);
        assert!((s[0] - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!(s[1].norm() < 1e-15);
        let s = stress_traction(1.0, 1.0, &g, [1.0, 0.0]);
        assert!((s[0] - C64::new(3.0, 0.0)).norm() < 1e-15);
        // u = (x2, 0): G = [[0,1],[0,0]], simple shear against the top face
        let g = real_g([[0.0, 1.0], [0.0, 0.0]]);
        let s = stress_traction(1.0, 1.0, &g, [0.0, 1.0]);
        assert!((s[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(s[1].norm() < 1e-15);
    }

    #[test]
    fn factor_values_on_linear_fields() {
        // u = (x1, 0), mu = 1, lambda = 0
        let g = real_g([[1.0, 0.0], [0.0, 0.0]]);
        let d1 = apply_factor(&factor_matrices(D1, 1.0, 0.0), &g);
        let expect = [2f64.sqrt(), 0.0, 0.0, 0.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((d1[i] - C64::new(*e, 0.0)).norm() < 1e-15);
        }
        let d2 = apply_factor(&factor_matrices(D2, 1.0, 0.0), &g);
        let expect = [1.0, 0.0, 0.0, 0.0, 1.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((d2[i] - C64::new(*e, 0.0)).norm() < 1e-15);
        }
        let d3 = apply_factor(&factor_matrices(D3, 1.0, 0.0), &g);
        assert!(d3[0].norm() < 1e-15);
        assert!((d3[1] - C64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
        // rigid rotation u = (-x2, x1): D1 annihilates it, D3 sees -2 sqrt(mu)
        let g = real_g([[0.0, -1.0], [1.0, 0.0]]);
        let d1 = apply_factor(&factor_matrices(D1, 1.5, 2.0), &g);
        assert!(d1.iter().all(|z| z.norm() < 1e-15));
        let d3 = apply_factor(&factor_matrices(D3, 1.5, 2.0), &g);
        assert!((d3[0] - C64::new(-2.0 * 1.5f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!(d3[1].norm() < 1e-15);
    }

    #[test]
    fn factor_energies_match_quadratic_forms() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let mu = rng.gen_range(0.5..2.0);
            let lambda = rng.gen_range(0.0..2.0);
            let g = cg(&mut rng);
            let div = g[(0, 0)] + g[(1, 1)];
            let rot = g[(0, 1)] - g[(1, 0)];
            let grad_sq: f64 = g.iter().map(|z| z.norm_sqr()).sum();
            let e2: f64 = apply_factor(&factor_matrices(D2, mu, lambda), &g).iter().map(|z| z.norm_sqr()).sum();
            assert!((e2 - (mu * grad_sq + (mu + lambda) * div.norm_sqr())).abs() < 1e-12);
            let e3: f64 = apply_factor(&factor_matrices(D3, mu, lambda), &g).iter().map(|z| z.norm_sqr()).sum();
            assert!((e3 - (mu * rot.norm_sqr() + (2.0 * mu + lambda) * div.norm_sqr())).abs() < 1e-12);
            let e1: f64 = apply_factor(&factor_matrices(D1, mu, lambda), &g).iter().map(|z| z.norm_sqr()).sum();
            let sym = 2.0 * mu * (g[(0, 0)].norm_sqr() + g[(1, 1)].norm_sqr())
                + mu * (g[(0, 1)] + g[(1, 0)]).norm_sqr()
                + lambda * div.norm_sqr();
            assert!((e1 - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn conormal_identities_random() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..200 {
            let mu = rng.gen_range(0.5..3.0);
            let lambda = rng.gen_range(0.0..3.0);
            let g = cg(&mut rng);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let nu = [th.cos(), th.sin()];
            let sigma = stress_traction(mu, lambda, &g, nu);
            let tau = tangential_tau0(&g, nu);
            let n1 = conormal(&factor_matrices(D1, mu, lambda), &g, nu);
            let n2 = conormal(&factor_matrices(D2, mu, lambda), &g, nu);
            let n3 = conormal(&factor_matrices(D3, mu, lambda), &g, nu);
            let muc = C64::new(mu, 0.0);
            for i in 0..2 {
                assert!((n1[i] - sigma[i]).norm() < 1e-12, "D1 conormal != traction");
                assert!((n2[i] + muc * tau[i] - sigma[i]).norm() < 1e-12, "D2 identity");
                assert!((n3[i] + 2.0 * muc * tau[i] - sigma[i]).norm() < 1e-12, "D3 identity");
            }
        }
    }

    #[test]
    fn tau0_is_tangential_in_the_divergence_sense() {
        // For gradients of scalar harmonics tau0 reduces to a pure tangential
        // derivative; generically it kills normal rigid motion: tau0 of
        // u = c nu (constant) vanishes since G = 0.
        let g = Mat2::zeros();
        let t = tangential_tau0(&g, [0.6, 0.8]);
        assert!(t[0].norm() < 1e-15 && t[1].norm() < 1e-15);
        // u = x (identity map): G = I, tau0 = nu - 2 nu = -nu
        let g = real_g([[1.0, 0.0], [0.0, 1.0]]);
        let t = tangential_tau0(&g, [0.6, 0.8]);
        assert!((t[0] - C64::new(-0.6, 0.0)).norm() < 1e-15);
        assert!((t[1] - C64::new(-0.8, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn tangent_convention() {
        assert_eq!(edge_tangent([0.0, 1.0]), [1.0, 0.0]);
        assert_eq!(edge_tangent([1.0, 0.0]), [0.0, -1.0]);
        // t1 derivative of u = (x2, -x1) at nu = (1,0): t1 = (0,-1), so
        // d_{t1} u = -d2 u = (-1, 0)
        let g = real_g([[0.0, 1.0], [-1.0, 0.0]]);
        let t = tangential_t1(&g, [1.0, 0.0]);
        assert!((t[0] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(t[1].norm() < 1e-15);
    }

    #[test]
    fn symbol_injectivity_bounded_below_by_kappa() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..40 {
            let kappa: f64 = rng.gen_range(0.1..0.6);
            let mu: f64 = rng.gen_range(kappa..3.0);
            let lambda: f64 = rng.gen_range((kappa - 2.0 * mu).max(0.0)..3.0);
            for kind in [D1, D2, D3] {
                let s = symbol_injectivity(&factor_matrices(kind, mu, lambda), 64);
                assert!(
                    s * s >= kappa - 1e-10,
                    "{kind:?}: sigma_min^2 = {} < kappa = {kappa}",
                    s * s
                );
            }
        }
    }

    #[test]
    fn scalar_gradient_factor_matches_columns() {
        let fm = factor_matrices(D1, 1.3, 0.7);
        let grad = [0.25, -1.5];
        let m = factor_of_scalar_gradient(&fm, grad);
        // column i equals D applied to the field rho e_i with grad rho given
        for i in 0..2 {
            let mut g = Mat2::zeros();
            g[(i, 0)] = C64::new(grad[0], 0.0);
            g[(i, 1)] = C64::new(grad[1], 0.0);
            let d = apply_factor(&fm, &g);
            for r in 0..fm.rows() {
                assert!((m[(r, i)] - d[r].re).abs() < 1e-15);
                assert!(d[r].im.abs() < 1e-15);
            }
        }
    }
}
