//! Acceptance gate: ten numbered criteria, one printed pass/fail line each.
//! Every expected value is either a closed form or an independently computed
//! oracle; tolerances are pinned in the criterion bodies.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::Instant;

use lame_spectra::assembly::{
    assemble_core_form, assemble_l2_gram, assemble_pencil, DofMap,
};
use lame_spectra::experiments::{
    exp_convergence_vector_laplace, exp_embedding_exponent, exp_harmonic_gradient_decay,
    exp_identity_greens, exp_korn_scan_all, run_experiment, write_report_csv, ExperimentParams,
};
use lame_spectra::linalg::{frob, C64, CMat, CVec};
use lame_spectra::problem::problem_from_config;
use lame_spectra::spectral::{
    b_norm, char_poly, dual_norm, eigensolve, isometry_check, poly_roots, relative_form_norm,
    root_chains, sector_check_parts, solve_pencil, write_spectrum_csv, SolveOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<(bool, String), String>;

fn crand(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
}

fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(n, n, |_, _| crand(rng))
}

fn random_hpd(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = random_matrix(n, rng);
    let mut a = &g * g.adjoint();
    for i in 0..n {
        a[(i, i)] += C64::new(n as f64 * 0.5, 0.0);
    }
    a
}

/// Greedy multiset match; returns the largest pairing distance.
fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for &x in a {
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for (j, &y) in b.iter().enumerate() {
            if !used[j] && (x - y).norm() < best {
                best = (x - y).norm();
                best_j = j;
            }
        }
        used[best_j] = true;
        worst = worst.max(best);
    }
    worst
}

/// Random pencils with an exactly scaled perturbation stay inside the
/// disc |z - 1| <= M and the sector |arg z| <= arcsin M.
fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let targets = [0.1, 0.3, FRAC_1_SQRT_2, 0.9];
    let mut worst_disc = f64::NEG_INFINITY;
    let mut worst_angle_excess = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut runs = 0usize;
    for n in [10usize, 30, 50] {
        for &m in &targets {
            for trial in 0..20 {
                let b = random_hpd(n, &mut rng);
                let mut p = random_matrix(n, &mut rng);
                if trial % 2 == 0 {
                    p = (&p + p.adjoint()) * C64::new(0.5, 0.0);
                }
                let nrm = relative_form_norm(&p, &b).map_err(|e| e.to_string())?;
                p *= C64::new(m / nrm, 0.0);
                let a = &b + &p;
                let rep = sector_check_parts(&a, &b, None, 1e-8, &opts)
                    .map_err(|e| e.to_string())?;
                violations += rep.violations.len() + rep.compact_attributed.len();
                worst_disc = worst_disc.max(rep.max_disc_excess);
                worst_angle_excess = worst_angle_excess.max(rep.max_angle - m.asin());
                runs += 1;
            }
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    let pass = violations == 0 && worst_disc <= 1e-8 && worst_angle_excess <= 1e-8 && dt < 30.0;
    Ok((
        pass,
        format!(
            "{runs} pencils, worst disc excess {worst_disc:.2e}, \
             worst angle excess {worst_angle_excess:.2e}, {dt:.1} s"
        ),
    ))
}

/// Unperturbed core forms are positive against the mass matrix for every
/// factorization on every geometry.
fn criterion_2() -> Verdict {
    let opts = SolveOptions::default();
    let geoms = [
        "geometry = unit_square\nn = 6\ns_rule = left\n",
        "geometry = disc\nn = 24\ns_rule = left_arc\n",
        "geometry = half_disc\nn = 24\ns_rule = diameter\n",
    ];
    let mut min_re = f64::INFINITY;
    let mut worst_im = 0.0f64;
    for kind in ["D1", "D2", "D3"] {
        for dom in geoms {
            let cfg = format!(
                "[domain]\n{dom}[coefficients]\nmu = 1.0\nlambda = 1.0\nkappa = 0.5\n\
                 [factorization]\nkind = {kind}\n"
            );
            let p = problem_from_config(&cfg).map_err(|e| e.to_string())?;
            let dm = DofMap::with_dirichlet(&p.mesh, &p.partition);
            let n = dm.n_dofs();
            if n == 0 {
                return Err(format!("{kind}: no free degrees of freedom"));
            }
            let mut b = CMat::zeros(n, n);
            assemble_core_form(&p, &dm, &mut b).map_err(|e| e.to_string())?;
            let mut mass = CMat::zeros(n, n);
            assemble_l2_gram(&p.mesh, &p.weight, &dm, &mut mass);
            let sol = solve_pencil(&b, &mass, &opts).map_err(|e| e.to_string())?;
            let radius =
                sol.spectrum.eigenvalues.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
            for z in &sol.spectrum.eigenvalues {
                min_re = min_re.min(z.re);
                worst_im = worst_im.max(z.im.abs() / radius);
            }
        }
    }
    let pass = min_re > 0.0 && worst_im < 1e-10;
    Ok((
        pass,
        format!("9 problems, min eigenvalue {min_re:.3e}, worst |im|/radius {worst_im:.2e}"),
    ))
}

/// Clamped gradient pencil on the square reproduces the Dirichlet Laplacian
/// spectrum with its multiplicities.
fn criterion_3() -> Verdict {
    let t0 = Instant::now();
    let report = exp_convergence_vector_laplace(&[16, 32, 64]).map_err(|e| e.to_string())?;
    let dt = t0.elapsed().as_secs_f64();
    let mut worst_rel = 0.0f64;
    for t in [2.0, 5.0, 8.0, 10.0, 13.0].map(|k| k * PI * PI) {
        let mean = report
            .value(&format!("n=64 cluster near {t:.4}"))
            .ok_or("missing cluster row")?;
        worst_rel = worst_rel.max((mean / t - 1.0).abs());
    }
    let pass = report.passed() && dt < 120.0;
    Ok((pass, format!("worst cluster deviation {worst_rel:.2e}, {dt:.1} s")))
}

/// The three factorizations agree in the interior and differ on the boundary
/// by the predicted tangential term, with the factor 2 between variants.
fn criterion_4() -> Verdict {
    let params = ExperimentParams::default();
    let report = run_experiment("exp_identity_greens", &params).map_err(|e| e.to_string())?;
    let interior = report.value("interior max_rel_mismatch").ok_or("missing row")?;
    let factor2 = report.value("boundary strain_vs_2gradient max_rel").ok_or("missing row")?;
    Ok((
        report.passed(),
        format!("interior mismatch {interior:.2e}, boundary factor-2 defect {factor2:.2e}"),
    ))
}

/// Korn constants: stable and bounded below when clamped, strictly decaying
/// for the free vorticity form on the disc.
fn criterion_5() -> Verdict {
    let report = exp_korn_scan_all(3).map_err(|e| e.to_string())?;
    let get = |label: &str| report.value(label).ok_or_else(|| format!("missing row {label}"));
    let mut spread = 0.0f64;
    for kind in ["D1", "D2"] {
        let ks: Vec<f64> = (0..3)
            .map(|l| get(&format!("{kind} level={l} kappa")))
            .collect::<Result<_, _>>()?;
        let lo = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi / lo - 1.0);
    }
    let d3: Vec<f64> = (0..3)
        .map(|l| get(&format!("D3 level={l} kappa")))
        .collect::<Result<_, _>>()?;
    Ok((
        report.passed(),
        format!(
            "clamped spread {:.1}%, free disc kappas {:.2e} > {:.2e} > {:.2e}",
            100.0 * spread,
            d3[0],
            d3[1],
            d3[2]
        ),
    ))
}

/// Rayleigh ratios of harmonic gradients on the disc match the closed-form
/// circle integrals and decay past the non-coercivity threshold.
fn criterion_6() -> Verdict {
    let report = exp_harmonic_gradient_decay(256, 6).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for p in 1..=6 {
        let r = report.value(&format!("p={p} ratio")).ok_or("missing row")?;
        let exact = report.value(&format!("p={p} ratio_exact")).ok_or("missing row")?;
        worst = worst.max((r / exact - 1.0).abs());
    }
    Ok((report.passed(), format!("worst oracle deviation {:.2}%", 100.0 * worst)))
}

/// Fractional-norm partial sums: Cauchy below the embedding threshold,
/// divergent above it.
fn criterion_7() -> Verdict {
    let report = exp_embedding_exponent(0.1, &[0.5, 0.9], 192).map_err(|e| e.to_string())?;
    let tail = report.value("s=0.50 tail_increment_max").ok_or("missing row")?;
    let growth = report.value("s=0.90 tail_energy_growth").ok_or("missing row")?;
    Ok((
        report.passed(),
        format!("s=0.5 tail increment {tail:.2e} of total, s=0.9 tail growth {growth:.3}"),
    ))
}

/// Eigensolver against the characteristic-polynomial oracle, and Jordan
/// structure recovery on constructed block forms.
fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0008);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let n = 2 + (i % 11);
        let a = random_matrix(n, &mut rng);
        let s = eigensolve(&a, 1e-12, None).map_err(|e| e.to_string())?;
        let roots = poly_roots(&char_poly(&a));
        worst = worst.max(multiset_distance(&s.eigenvalues, &roots));
    }
    if worst > 1e-7 {
        return Ok((false, format!("characteristic-polynomial mismatch {worst:.2e}")));
    }

    let mut jordan_exact = 0usize;
    for _ in 0..50 {
        // distinct, well separated eigenvalues with random Jordan blocks
        let n_dist = 1 + rng.gen_range(0..3);
        let mut eigs = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for j in 0..n_dist {
            eigs.push(C64::new(
                1.5 + 3.0 * j as f64 + 0.3 * (rng.gen::<f64>() - 0.5),
                0.8 * (rng.gen::<f64>() - 0.5),
            ));
            let nb = 1 + rng.gen_range(0..2);
            blocks.push((0..nb).map(|_| 1 + rng.gen_range(0..3)).collect());
        }
        let n: usize = blocks.iter().flatten().sum();
        let mut jm = CMat::zeros(n, n);
        let mut at = 0;
        for (j, sizes) in blocks.iter().enumerate() {
            for &sz in sizes {
                for k in 0..sz {
                    jm[(at + k, at + k)] = eigs[j];
                    if k + 1 < sz {
                        jm[(at + k, at + k + 1)] = C64::new(1.0, 0.0);
                    }
                }
                at += sz;
            }
        }
        let q = nalgebra::QR::new(random_matrix(n, &mut rng)).q();
        let a = &q * &jm * q.adjoint();
        let s = eigensolve(&a, 1e-12, None).map_err(|e| e.to_string())?;
        let scale = frob(&a);
        let rep = root_chains(&a, &s, 1e-5 * scale, 1e-8 * scale).map_err(|e| e.to_string())?;
        let mut all_match = rep.clusters.len() == n_dist;
        for (j, sizes) in blocks.iter().enumerate() {
            let c = rep
                .clusters
                .iter()
                .min_by(|x, y| {
                    let dx = (x.center - eigs[j]).norm();
                    let dy = (y.center - eigs[j]).norm();
                    dx.partial_cmp(&dy).unwrap()
                })
                .ok_or("empty cluster report")?;
            let alg: usize = sizes.iter().sum();
            let chain = *sizes.iter().max().unwrap();
            all_match &= (c.center - eigs[j]).norm() < 0.5
                && c.geometric == sizes.len()
                && c.algebraic == alg
                && c.max_chain == chain;
        }
        if all_match {
            jordan_exact += 1;
        }
    }
    let pass = jordan_exact == 50;
    Ok((
        pass,
        format!("500 characteristic-polynomial checks worst {worst:.2e}, {jordan_exact}/50 Jordan reports exact"),
    ))
}

/// The Riesz map is an isometry: dual norms of images match primal norms.
fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0009);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = 2 + 2 * (i % 20);
        let b = random_hpd(n, &mut rng);
        let u = CVec::from_fn(n, |_, _| crand(&mut rng));
        let f = &b * &u;
        let dual = dual_norm(&b, &f).map_err(|e| e.to_string())?;
        let primal = b_norm(&b, &u);
        worst = worst.max((dual / primal - 1.0).abs());
    }
    let mut worst_iso = 0.0f64;
    for i in 0..5 {
        let n = 3 + 7 * i;
        let b = random_hpd(n, &mut rng);
        let rep = isometry_check(&b, 20, 1000 + i as u64).map_err(|e| e.to_string())?;
        worst_iso = worst_iso.max((rep.min_ratio - 1.0).abs().max((rep.max_ratio - 1.0).abs()));
    }
    let pass = worst <= 1e-10 && worst_iso <= 1e-10;
    Ok((
        pass,
        format!("dual vs primal deviation {worst:.2e}, isometry ratio deviation {worst_iso:.2e}"),
    ))
}

/// Fixed seeds reproduce artifacts byte for byte.
fn criterion_10() -> Verdict {
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let cfg = "[domain]\ngeometry = unit_square\nn = 6\ns_rule = none\n\
                   [coefficients]\nmu = 1.0\nlambda = 0.5\nkappa = 0.5\n\
                   [factorization]\nkind = D2\n";
        let p = problem_from_config(cfg).map_err(|e| e.to_string())?;
        let report = exp_identity_greens(&p, 10, 123).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        write_report_csv(&mut bytes, &report).map_err(|e| e.to_string())?;
        csvs.push(bytes);
    }
    let experiment_ok = csvs[0] == csvs[1];

    let mut spectra = Vec::new();
    for _ in 0..2 {
        let cfg = "[domain]\ngeometry = unit_square\nn = 4\ns_rule = left\n\
                   [coefficients]\nmu = 1.0\nlambda = 0.5\nkappa = 0.5\n\
                   [factorization]\nkind = D2\n\
                   [perturbation]\nd_tau = 0.1\n";
        let p = problem_from_config(cfg).map_err(|e| e.to_string())?;
        let (_, pencil) = assemble_pencil(&p).map_err(|e| e.to_string())?;
        let opts = SolveOptions::default();
        let sol = solve_pencil(&pencil.a, &pencil.b, &opts).map_err(|e| e.to_string())?;
        let scale = frob(&sol.reduction.c);
        let chains = root_chains(&sol.reduction.c, &sol.spectrum, 1e-6 * scale, 1e-8 * scale)
            .map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        write_spectrum_csv(&mut bytes, &sol.spectrum, &chains).map_err(|e| e.to_string())?;
        spectra.push(bytes);
    }
    let spectrum_ok = spectra[0] == spectra[1];
    let pass = experiment_ok && spectrum_ok;
    Ok((
        pass,
        format!("experiment csv identical: {experiment_ok}, spectrum csv identical: {spectrum_ok}"),
    ))
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("sector confinement of perturbed pencils", criterion_1),
        ("unperturbed positivity on all kinds and geometries", criterion_2),
        ("vector Laplacian spectrum on the square", criterion_3),
        ("factorization equivalence and boundary mismatch", criterion_4),
        ("Korn constant dichotomy", criterion_5),
        ("harmonic gradient decay oracle", criterion_6),
        ("fractional embedding sharpness", criterion_7),
        ("eigensolver and Jordan structure oracle", criterion_8),
        ("dual norm isometry", criterion_9),
        ("byte-identical reruns", criterion_10),
    ];
    let mut failures = Vec::new();
    for (i, (label, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2}: {tag}  {label} ({detail})", i + 1);
        if !pass {
            failures.push(format!("criterion {}: {label} ({detail})", i + 1));
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
