//! Acceptance criteria 1-10. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use diffmap::datasets::{
    make_curve_1d, make_swiss_roll, standardize, swiss_roll_arc_length, CurveKind, DataMatrix, SwissRollParams,
};
use diffmap::graph::{pairwise_sq_dists, KernelParams, Neighbors};
use diffmap::nre::{decoder_init, greedy_search, nre, nre_curve_consecutive, DecoderConfig};
use diffmap::pca::{pca_fit, pca_inverse, pca_reconstruction_error, pca_transform};
use diffmap::seed;
use diffmap::spectral::{diffusion_distance, diffusion_map, embed, embed_all, Solver, SolverOptions};
use diffmap::stats::{linear_r2, mean, spearman};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

type Outcome = Result<(bool, String), String>;

fn dense() -> SolverOptions {
    SolverOptions {
        solver: Solver::Dense,
        ..SolverOptions::default()
    }
}

fn col(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian_data(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = seed::rng(seed);
    DataMatrix::from_matrix(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let n = 200;
    let x = gaussian_data(n, 3, 11);
    let d2 = pairwise_sq_dists(&x);
    let off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d2[(i, j)]).collect();
    let eps = median(off);
    let params = KernelParams::new(eps, Neighbors::All, 0.5);
    let (graph, model) = diffusion_map(&x, &params, n - 1, &dense()).map_err(err)?;
    let phi0 = graph.stationary();

    let mut rng = seed::rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n);
        while j == i {
            j = rng.random_range(0..n);
        }
        for t in 1..=3 {
            let dt2 = diffusion_distance(&graph.m, t, i, j, &phi0).map_err(err)?;
            let emb = embed_all(&model, t).map_err(err)?;
            let diff = (emb.coords.row(i) - emb.coords.row(j)).norm_squared();
            worst = worst.max((dt2 - diff).abs() / dt2);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-6 && secs < 30.0,
        format!("diffusion distance identity, max rel err {worst:.2e} (< 1e-6), {secs:.1} s (< 30 s)"),
    ))
}

fn criterion_2() -> Outcome {
    let n = 40;
    let x = gaussian_data(n, 3, 21);
    let params = KernelParams::new(2.0, Neighbors::All, 0.5);
    let (graph, model) = diffusion_map(&x, &params, n - 1, &dense()).map_err(err)?;

    let row_err = graph.m.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let lambda0_err = (model.eigenvalues[0] - 1.0).abs();
    let psi0 = col(&model.psi, 0);
    let m0 = mean(&psi0);
    let psi0_err = psi0.iter().map(|v| (v - m0).abs()).fold(0.0, f64::max) / m0.abs();
    let residual = model.right_residuals(&graph.m).into_iter().fold(0.0, f64::max);

    let mut oracle: Vec<f64> = graph.m.to_dense().complex_eigenvalues().iter().map(|c| c.re).collect();
    oracle.sort_by(|a, b| b.total_cmp(a));
    let mut ours = model.eigenvalues.clone();
    ours.sort_by(|a, b| b.total_cmp(a));
    let eig_err = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let ok = row_err < 1e-12 && lambda0_err < 1e-8 && psi0_err < 1e-8 && residual < 1e-8 && eig_err < 1e-9;
    Ok((
        ok,
        format!(
            "Markov invariants, row sums {row_err:.1e}, lambda_0 {lambda0_err:.1e}, psi_0 {psi0_err:.1e}, \
             residual {residual:.1e}, oracle eigenvalues {eig_err:.1e}"
        ),
    ))
}

fn criterion_3() -> Outcome {
    let x = gaussian_data(150, 3, 31);
    let params = KernelParams::new(3.0, Neighbors::All, 0.5);
    let (_, model) = diffusion_map(&x, &params, 10, &dense()).map_err(err)?;
    let comps: Vec<usize> = (1..=10).collect();
    let base = embed(&model, 1, &comps).map_err(err)?;
    let mut worst: f64 = 0.0;
    for t in [0u32, 1, 2, 10] {
        let e = embed(&model, t, &comps).map_err(err)?;
        for (c, &k) in comps.iter().enumerate() {
            let lam = model.eigenvalues[k];
            for i in 0..e.n() {
                let expected = if t == 0 {
                    model.psi[(i, k)]
                } else {
                    base.coords[(i, c)] * lam.powi(t as i32 - 1)
                };
                let scale = model.psi[(i, k)].abs().max(1e-300);
                worst = worst.max((e.coords[(i, c)] - expected).abs() / scale);
            }
        }
    }
    Ok((worst < 1e-12, format!("t-scaling law for t in {{0,1,2,10}}, max rel err {worst:.1e}")))
}

fn whitened_radius_spread(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let n = a.len() as f64;
    let mut cov = DMatrix::zeros(2, 2);
    for (u, v) in a.iter().zip(b) {
        let d = nalgebra::Vector2::new(u - ma, v - mb);
        cov += d * d.transpose() / n;
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * eig.eigenvectors.transpose();
    let radii: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(u, v)| (&w * nalgebra::DVector::from_vec(vec![u - ma, v - mb])).norm())
        .collect();
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max);
    (hi - lo) / mean(&radii)
}

fn criterion_4() -> Outcome {
    let mut worst_r2: f64 = 1.0;
    for (kind, eps) in [(CurveKind::Line, 0.01), (CurveKind::Arc, 0.02)] {
        let x = make_curve_1d(kind, 300, 0.0, 0).map_err(err)?;
        let (_, model) = diffusion_map(&x, &KernelParams::new(eps, Neighbors::All, 1.0), 3, &dense()).map_err(err)?;
        let p1 = col(&model.psi, 1);
        let p2 = col(&model.psi, 2);
        let p3 = col(&model.psi, 3);
        let sq: Vec<f64> = p1.iter().map(|v| v * v).collect();
        let cube: Vec<f64> = p1.iter().map(|v| v * v * v).collect();
        let ones = vec![1.0; p1.len()];
        let r2_2 = linear_r2(&p2, &[ones, sq]);
        let r2_3 = linear_r2(&p3, &[p1.clone(), cube]);
        worst_r2 = worst_r2.min(r2_2).min(r2_3);
    }
    let x = make_curve_1d(CurveKind::Circle, 300, 0.0, 0).map_err(err)?;
    let (_, model) = diffusion_map(&x, &KernelParams::new(0.01, Neighbors::All, 1.0), 2, &dense()).map_err(err)?;
    let spread = whitened_radius_spread(&col(&model.psi, 1), &col(&model.psi, 2));
    Ok((
        worst_r2 > 0.99 && spread < 0.02,
        format!("1-D harmonics, min R^2 {worst_r2:.5} (> 0.99), circle radius spread {spread:.2e} (< 2%)"),
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let roll = make_swiss_roll(SwissRollParams {
        n: 3000,
        noise_sigma: 0.2,
        width: 21.0,
        seed: 42,
    })
    .map_err(err)?;
    let arc: Vec<f64> = roll
        .intrinsic_column("s")
        .ok_or("missing intrinsic s")?
        .into_iter()
        .map(swiss_roll_arc_length)
        .collect();

    let (_, raw) = diffusion_map(&roll, &KernelParams::new(5.0, Neighbors::All, 0.5), 2, &SolverOptions::default())
        .map_err(err)?;
    let rho = spearman(&col(&raw.psi, 1), &arc).abs();

    let z = standardize(&roll).map_err(err)?;
    let (_, wide) = diffusion_map(&z, &KernelParams::new(1000.0, Neighbors::All, 0.5), 2, &SolverOptions::default())
        .map_err(err)?;
    let pca = diffmap::cli::pca_similarity(&z, &col(&wide.psi, 1)).map_err(err)?;

    let (_, knn) = diffusion_map(&z, &KernelParams::new(1000.0, Neighbors::Count(10), 0.5), 2, &SolverOptions::default())
        .map_err(err)?;
    let rho_knn = spearman(&col(&knn.psi, 1), &arc).abs();
    let secs = start.elapsed().as_secs_f64();
    Ok((
        rho > 0.99 && pca > 0.99 && rho_knn > 0.99 && secs < 300.0,
        format!(
            "Swiss roll, |rho| eps=5 {rho:.4}, PCA similarity eps=1000 {pca:.4}, |rho| eps=1000 N=10 {rho_knn:.4}, {secs:.0} s"
        ),
    ))
}

fn criterion_6() -> Outcome {
    let mut rng = seed::rng(61);
    let scales = [3.0, 2.0, 1.5, 1.0, 0.5, 0.1];
    let raw = DMatrix::from_fn(300, scales.len(), |_, j| scales[j] * rng.sample::<f64, _>(StandardNormal));
    let mix = DMatrix::from_fn(scales.len(), scales.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DataMatrix::from_matrix(raw * mix).map_err(err)?;
    let p = x.ncols();

    let mut centered = x.values().clone();
    for j in 0..p {
        let m = centered.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let total = centered.norm_squared();
    let mut sv: Vec<f64> = centered.clone().svd(false, false).singular_values.iter().map(|s| s * s).collect();
    sv.sort_by(|a, b| b.total_cmp(a));

    let mut worst: f64 = 0.0;
    for k in 0..=p {
        let model = pca_fit(&x, k).map_err(err)?;
        let scores = pca_transform(&model, &x).map_err(err)?;
        let back = pca_inverse(&model, &scores.coords).map_err(err)?;
        let recon = (x.values() - back.values()).norm_squared() / total;
        let residual: f64 = sv[k..].iter().sum::<f64>() / total;
        let reported = pca_reconstruction_error(&model, k).map_err(err)?;
        worst = worst.max((recon - residual).abs()).max((reported - residual).abs());
    }
    Ok((worst < 1e-8, format!("PCA reconstruction equals residual variance, max diff {worst:.1e}")))
}

fn narrow_roll(seed: u64, k_max: usize) -> Result<(DataMatrix, diffmap::spectral::Embedding), String> {
    let roll = make_swiss_roll(SwissRollParams {
        n: 3000,
        noise_sigma: 0.2,
        width: 21.0,
        seed,
    })
    .map_err(err)?;
    let params = KernelParams::new(5.0, Neighbors::All, 0.5);
    let (_, model) = diffusion_map(&roll, &params, k_max, &SolverOptions::default()).map_err(err)?;
    let emb = embed_all(&model, 1).map_err(err)?;
    Ok((roll, emb))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let (roll, emb) = narrow_roll(42, 5)?;
    let cfg = DecoderConfig {
        seed: 42,
        ..DecoderConfig::default()
    };
    let e0 = nre(&emb, &roll, &[], &cfg).map_err(err)?.epsilon_k_normalized;
    let curve = nre_curve_consecutive(&emb, &roll, 5, &cfg).map_err(err)?;
    let c: Vec<f64> = curve.entries.iter().map(|e| e.nre).collect();
    let pair = nre(&emb, &roll, &[1, 5], &cfg).map_err(err)?.epsilon_k_normalized;

    let plateau = &c[1..4];
    let hi = plateau.iter().copied().fold(f64::MIN, f64::max);
    let lo = plateau.iter().copied().fold(f64::MAX, f64::min);
    let variation = hi - lo;
    let drop = c[3] - c[4];
    let secs = start.elapsed().as_secs_f64();
    let ok = (e0 - 1.0).abs() <= 0.02 && variation < 0.05 && drop >= 3.0 * variation && pair < 0.05 && secs < 1200.0;
    let curve_text: Vec<String> = c.iter().map(|v| format!("{v:.3}")).collect();
    Ok((
        ok,
        format!(
            "NRE on narrow roll, eps_0 {e0:.3}, curve [{}], plateau k=2..4 spread {variation:.3} (< 0.05), \
             drop at k=5 {drop:.3} (>= {:.3}), {{1,5}} {pair:.4} (< 0.05), {secs:.0} s",
            curve_text.join(", "),
            3.0 * variation
        ),
    ))
}

fn criterion_8() -> Outcome {
    let mut hits = 0;
    let mut picks = Vec::new();
    for s in [42u64, 1, 2, 3, 4] {
        let (roll, emb) = narrow_roll(s, 7)?;
        let cfg = DecoderConfig {
            seed: s,
            ..DecoderConfig::default()
        };
        let result = greedy_search(&emb, &roll, 7, 2, &cfg).map_err(err)?;
        if result.order == [1, 5] {
            hits += 1;
        }
        picks.push(format!("{:?}", result.order));
    }

    // Isotropic 2-D Gaussian pushed into 5-D by a random orthonormal frame.
    let mut rng = seed::rng(81);
    let frame = DMatrix::from_fn(5, 2, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
    let plane = DMatrix::from_fn(1000, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DataMatrix::from_matrix(plane * frame.transpose()).map_err(err)?;
    let k_max = 5;
    let (_, model) = diffusion_map(&x, &KernelParams::new(1.0, Neighbors::All, 0.5), k_max, &dense()).map_err(err)?;
    let emb = embed_all(&model, 1).map_err(err)?;
    let cfg = DecoderConfig {
        seed: 8,
        ..DecoderConfig::default()
    };
    let greedy = greedy_search(&emb, &x, k_max, 2, &cfg).map_err(err)?;
    let greedy_nre = greedy.curve.entries[1].nre;
    let mut best = f64::INFINITY;
    for a in 1..=k_max {
        for b in a + 1..=k_max {
            best = best.min(nre(&emb, &x, &[a, b], &cfg).map_err(err)?.epsilon_k_normalized);
        }
    }
    let gap = greedy_nre - best;
    Ok((
        hits >= 4 && gap <= 0.02,
        format!(
            "greedy search, (1,5) first in {hits}/5 seeds {}, Gaussian control greedy {greedy_nre:.4} vs best pair {best:.4}",
            picks.join(" ")
        ),
    ))
}

fn criterion_9() -> Outcome {
    let cfg = DecoderConfig {
        hidden_layers: vec![4],
        ..DecoderConfig::default()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut draw = 0u64;
    while checked < 20 {
        draw += 1;
        let mut rng = seed::rng(seed::derive(9, &[draw]));
        let mut decoder = decoder_init(3, 2, &DecoderConfig { seed: draw, ..cfg.clone() });
        for p in decoder.params_mut() {
            *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let inputs = DMatrix::from_fn(10, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let targets = DMatrix::from_fn(10, 2, |_, _| rng.sample::<f64, _>(StandardNormal));

        // Skip draws with a hidden pre-activation close enough to zero for
        // the finite difference to straddle the ReLU kink.
        let params = decoder.params();
        let near_kink = (0..10).any(|r| {
            (0..4).any(|u| {
                let z = params[12 + u] + (0..3).map(|c| params[u * 3 + c] * inputs[(r, c)]).sum::<f64>();
                z.abs() < 1e-3
            })
        });
        if near_kink {
            continue;
        }
        let beta = 1e-3;
        let (_, grad) = decoder.cost_and_gradient(&inputs, &targets, beta);
        for k in 0..grad.len() {
            let orig = decoder.params()[k];
            decoder.params_mut()[k] = orig + h;
            let (up, _) = decoder.cost_and_gradient(&inputs, &targets, beta);
            decoder.params_mut()[k] = orig - h;
            let (down, _) = decoder.cost_and_gradient(&inputs, &targets, beta);
            decoder.params_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = grad[k].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((grad[k] - numeric).abs() / denom);
        }
        checked += 1;
    }
    Ok((worst < 1e-4, format!("gradient check on 20 random 3-4-2 networks, max rel err {worst:.1e}")))
}

fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        let bytes = std::fs::read(&path).map_err(err)?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), hex);
    }
    Ok(out)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_diffmap")).args(args).status().map_err(err)?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("diffmap {args:?} exited with {status}"))
    }
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (cmd, extra) in [
        ("embed", vec!["--set", "dataset.generator.n=600", "--dump-matrices", "binary"]),
        (
            "search",
            vec![
                "--set",
                "dataset.generator.n=400",
                "--set",
                "nre.k_max=3",
                "--set",
                "nre.t_max=2",
                "--set",
                "nre.decoder.epochs=5",
            ],
        ),
    ] {
        let first = tmp.path().join(format!("{cmd}_first"));
        let second = tmp.path().join(format!("{cmd}_second"));
        let mut args = vec![cmd, "--out", first.to_str().unwrap(), "--seed", "5"];
        args.extend(extra);
        run_cli(&args)?;
        let echo = first.join("config.echo.json");
        run_cli(&[cmd, "--out", second.to_str().unwrap(), "--config", echo.to_str().unwrap(), "--threads", "1"])?;
        let (a, b) = (hash_dir(&first)?, hash_dir(&second)?);
        files += a.len();
        if a != b {
            mismatches.push(cmd);
        }
    }
    Ok((
        mismatches.is_empty(),
        format!("saved configs rerun with --threads 1, {files} files compared, mismatching commands {mismatches:?}"),
    ))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
