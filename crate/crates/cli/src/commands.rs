//! Subcommand implementations. Each returns `Ok(false)` when some solve
//! stopped at the iteration budget.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hklin::analysis::io::{
    embedding_csv_string, manifest_csv_string, parse_embedding_csv, parse_manifest,
    pca_eigen_csv_string, pca_modes_csv_string, ManifestEntry,
};
use hklin::analysis::{
    embed_dataset, exp_along_mode, knn_classify, lda, linear_mean, pca as run_pca, roc_auc,
    EmbeddingMatrix, KnnProtocol, Metric,
};
use hklin::geodesic::{interpolate_hk, interpolate_w2};
use hklin::measure::io::{grid_csv_string, points_csv_string};
use hklin::measure::{ellipse_masses, ellipses_image, rasterize_dense};
use hklin::solver::marginal_violation;
use hklin::tangent::barycentric_project;
use hklin::{normalize, rescale_domain, solve_hk, solve_w2, DiscreteMeasure, GridSpec};

use crate::support::*;
use crate::{Algo, GridOpts, Protocol, SolveOpts};

pub fn distance(a: &Path, b: &Path, opts: &SolveOpts, out: Option<&Path>) -> CliResult<bool> {
    let (mu0, mu1) = (load(a)?.measure, load(b)?.measure);
    let metric = metric(opts.metric);
    let cfg = solver_config(opts)?;
    let unit = length_unit(metric, opts.kappa, &joint_box(&[&mu0, &mu1]))?;
    let (m0, m1) = (rescale_domain(&mu0, unit)?, rescale_domain(&mu1, unit)?);
    let plan = match metric {
        Metric::Hk => solve_hk(&m0, &m1, &cfg)?,
        Metric::W2 => solve_w2(&m0, &m1, &cfg)?,
    };
    let d = plan.distance() * unit;
    let (tv0, tv1) = marginal_violation(&plan, &m0, &m1);
    let mut fields = vec![
        kv("metric", metric),
        kv("kappa", unit),
        kv("a", a.display()),
        kv("b", b.display()),
    ];
    fields.extend(config_fields(&cfg));
    let mut text = comment_block(&meta("distance", &fields));
    text.push_str("metric,kappa,distance,distance_sq,plan_mass,mass_a,mass_b,marginal_tv_a,marginal_tv_b,converged,iterations\n");
    let _ = writeln!(
        text,
        "{metric},{unit},{d},{},{},{},{},{tv0},{tv1},{},{}",
        d * d,
        plan.total_mass(),
        mu0.total_mass(),
        mu1.total_mass(),
        plan.converged,
        plan.iterations
    );
    print!("{text}");
    if let Some(path) = out {
        write(path, text.as_bytes())?;
    }
    Ok(plan.converged)
}

pub fn gen_ellipses(out: &Path, resolution: usize, levels: usize) -> CliResult<bool> {
    if levels < 2 {
        return Err(Failure::usage("--levels must be at least 2"));
    }
    create_dir(out)?;
    let values: Vec<f64> = (0..levels)
        .map(|i| -1.0 + 2.0 * i as f64 / (levels - 1) as f64)
        .collect();
    let mut entries = Vec::new();
    for (i, &p1) in values.iter().enumerate() {
        for (j, &p2) in values.iter().enumerate() {
            let img =
                ellipses_image(p1, p2, resolution).map_err(|e| Failure::usage(e.to_string()))?;
            let file = format!("ellipse_{i:02}_{j:02}.csv");
            let comments = meta(
                "gen-ellipses",
                &[kv("p1", p1), kv("p2", p2), kv("resolution", resolution)],
            );
            write(
                &out.join(&file),
                grid_csv_string(&img, &comments).as_bytes(),
            )?;
            entries.push(ManifestEntry {
                file,
                p1,
                p2,
                label: Some(i64::from(p2 > 0.0)),
            });
        }
    }
    let comments = meta(
        "gen-ellipses",
        &[kv("resolution", resolution), kv("levels", levels)],
    );
    write(
        &out.join("manifest.csv"),
        manifest_csv_string(&entries, &comments).as_bytes(),
    )?;
    Ok(true)
}

struct Dataset {
    samples: Vec<DiscreteMeasure>,
    labels: Option<Vec<i64>>,
    grid: GridSpec,
}

/// Loads and normalizes every sample of a manifest.
fn load_dataset(manifest: &Path, grid: &GridOpts) -> CliResult<Dataset> {
    let entries = parse_manifest(&read(manifest)?).map_err(|e| Failure::at(manifest, e))?;
    let mut samples = Vec::with_capacity(entries.len());
    let mut first_grid = None;
    for e in &entries {
        let path = relative_to(manifest, &e.file);
        let loaded = load(&path)?;
        if first_grid.is_none() {
            first_grid = loaded.grid;
        }
        samples.push(normalize(&loaded.measure).map_err(|err| Failure::at(&path, err))?);
    }
    let labels = entries.iter().map(|e| e.label).collect::<Option<Vec<_>>>();
    Ok(Dataset {
        samples,
        labels,
        grid: resolve_grid(grid, &[first_grid.as_ref()])?,
    })
}

fn reference_measure(choice: &str, data: &Dataset) -> CliResult<DiscreteMeasure> {
    let mu = match choice {
        "linear_mean" => linear_mean(&data.samples, &data.grid)?,
        "uniform" => data.grid.uniform_measure(),
        path => load(Path::new(path))?.measure,
    };
    Ok(normalize(&mu)?)
}

fn dataset_unit(
    metric: Metric,
    kappa: Option<f64>,
    data: &Dataset,
    reference: &DiscreteMeasure,
) -> CliResult<f64> {
    let mut all: Vec<&DiscreteMeasure> = data.samples.iter().collect();
    all.push(reference);
    length_unit(metric, kappa, &joint_box(&all))
}

fn reference_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embedding".into());
    out.with_file_name(format!("{stem}.reference.csv"))
}

pub fn embed(
    manifest: &Path,
    opts: &SolveOpts,
    grid: &GridOpts,
    reference: &str,
    out: &Path,
) -> CliResult<bool> {
    let data = load_dataset(manifest, grid)?;
    let metric = metric(opts.metric);
    let cfg = solver_config(opts)?;
    let mu0 = reference_measure(reference, &data)?;
    let unit = dataset_unit(metric, opts.kappa, &data, &mu0)?;
    let emb = embed_dataset(&mu0, &data.samples, metric, unit, &cfg)?;
    let mut matrix = emb.matrix;
    if let Some(labels) = data.labels {
        matrix = matrix.with_labels(labels)?;
    }
    let mut fields = vec![
        kv("manifest", manifest.display()),
        kv("metric", metric),
        kv("kappa", unit),
        kv("reference", reference),
        kv("grid", format!("{}x{}", data.grid.rows, data.grid.cols)),
        kv("seed", opts.seed),
    ];
    fields.extend(config_fields(&cfg));
    let comments = meta("embed", &fields);
    let ref_path = reference_path(out);
    write(&ref_path, points_csv_string(&mu0, &comments)?.as_bytes())?;
    let ref_name = ref_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned());
    write(
        out,
        embedding_csv_string(&matrix, ref_name.as_deref(), &comments).as_bytes(),
    )?;
    for &i in &emb.unconverged {
        log::warn!("sample {i} did not converge");
    }
    Ok(emb.unconverged.is_empty())
}

fn load_embedding(path: &Path) -> CliResult<EmbeddingMatrix> {
    let table = parse_embedding_csv(&read(path)?).map_err(|e| Failure::at(path, e))?;
    let reference = match &table.header.reference {
        Some(r) => load(&relative_to(path, r))?.measure,
        None => DiscreteMeasure::empty(2),
    };
    Ok(EmbeddingMatrix {
        rows: table.rows,
        labels: table.labels,
        reference,
        metric: table.header.metric,
        kappa: table.header.kappa,
    })
}

pub fn pca(
    embedding: &Path,
    grid: &GridOpts,
    modes: usize,
    sweep: &[f64],
    pgm_out: bool,
    out: &Path,
) -> CliResult<bool> {
    let emb = load_embedding(embedding)?;
    let result = run_pca(&emb)?;
    create_dir(out)?;
    let comments = meta(
        "pca",
        &[kv("embedding", embedding.display()), kv("modes", modes)],
    );
    write(
        &out.join("eigen.csv"),
        pca_eigen_csv_string(&result, &comments).as_bytes(),
    )?;
    write(
        &out.join("modes.csv"),
        pca_modes_csv_string(&result, &comments).as_bytes(),
    )?;
    let n_sweep = modes.min(result.n_modes());
    if n_sweep == 0 {
        return Ok(true);
    }
    if emb.reference.is_empty() {
        return Err(Failure::usage(
            "embedding names no reference measure; cannot sweep modes",
        ));
    }
    let grid = resolve_grid(grid, &[])?;
    let split_x = grid.origin[0] + 0.5 * (grid.cols - 1) as f64 * grid.spacing[0];
    let mut masses = comment_block(&comments);
    masses.push_str("mode,s,left,right,total,left_share\n");
    for k in 0..n_sweep {
        for (idx, &s) in sweep.iter().enumerate() {
            let mu = exp_along_mode(&emb, &result, k, s, &grid)?;
            let img = rasterize_dense(&mu, &grid)?;
            let name = format!("mode{}_{idx:02}", k + 1);
            let frame_meta = meta("pca", &[kv("mode", k + 1), kv("s", s)]);
            write(
                &out.join(format!("{name}.csv")),
                grid_csv_string(&img, &frame_meta).as_bytes(),
            )?;
            if pgm_out {
                write(
                    &out.join(format!("{name}.pgm")),
                    &pgm(grid.rows, grid.cols, &img.values),
                )?;
            }
            let (left, right) = ellipse_masses(&mu, split_x);
            let total = left + right;
            let _ = writeln!(
                masses,
                "{},{s},{left},{right},{total},{}",
                k + 1,
                left / total
            );
        }
    }
    write(&out.join("sweep_masses.csv"), masses.as_bytes())?;
    Ok(true)
}

struct Scores {
    evaluated: usize,
    accuracy: f64,
    tpr: f64,
    fpr: f64,
    auc: f64,
}

fn score(emb: &EmbeddingMatrix, algo: Algo, k: usize, protocol: KnnProtocol) -> CliResult<Scores> {
    let labels = emb
        .labels
        .clone()
        .ok_or_else(|| Failure::usage("embedding has no labels"))?;
    let positive = labels.iter().copied().max().unwrap_or(0);
    match algo {
        Algo::Knn => {
            let m = knn_classify(emb, k, protocol)?;
            let truth: Vec<bool> = m.evaluated.iter().map(|&i| labels[i] == positive).collect();
            let auc = roc_auc(&m.positive_scores, &truth)?;
            Ok(Scores {
                evaluated: m.evaluated.len(),
                accuracy: m.accuracy,
                tpr: m.tpr,
                fpr: m.fpr,
                auc,
            })
        }
        Algo::Lda => {
            let r = lda(emb)?;
            let truth: Vec<bool> = labels.iter().map(|&l| l == positive).collect();
            let rate = |want: bool| {
                let idx: Vec<usize> = (0..labels.len()).filter(|&i| truth[i] == want).collect();
                idx.iter()
                    .filter(|&&i| r.predictions[i] == positive)
                    .count() as f64
                    / idx.len() as f64
            };
            let auc = roc_auc(&r.projections, &truth)?;
            Ok(Scores {
                evaluated: labels.len(),
                accuracy: r.accuracy,
                tpr: rate(true),
                fpr: rate(false),
                auc,
            })
        }
    }
}

fn knn_protocol(protocol: Protocol, test_fraction: f64, seed: u64) -> KnnProtocol {
    match protocol {
        Protocol::Loo => KnnProtocol::LeaveOneOut,
        Protocol::Split => KnnProtocol::TrainTest {
            test_fraction,
            seed,
        },
    }
}

fn algo_name(algo: Algo) -> &'static str {
    match algo {
        Algo::Knn => "knn",
        Algo::Lda => "lda",
    }
}

pub fn classify(
    embedding: &Path,
    algo: Algo,
    k: usize,
    protocol: Protocol,
    test_fraction: f64,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<bool> {
    let emb = load_embedding(embedding)?;
    let s = score(&emb, algo, k, knn_protocol(protocol, test_fraction, seed))?;
    let protocol_name = match (algo, protocol) {
        (Algo::Lda, _) => "in_sample",
        (Algo::Knn, Protocol::Loo) => "loo",
        (Algo::Knn, Protocol::Split) => "split",
    };
    let comments = meta(
        "classify",
        &[
            kv("embedding", embedding.display()),
            kv("algo", algo_name(algo)),
            kv("k", k),
            kv("protocol", protocol_name),
            kv("test_fraction", test_fraction),
            kv("seed", seed),
        ],
    );
    let mut text = comment_block(&comments);
    text.push_str("algo,k,protocol,evaluated,accuracy,tpr,fpr,auc\n");
    let _ = writeln!(
        text,
        "{},{k},{protocol_name},{},{},{},{},{}",
        algo_name(algo),
        s.evaluated,
        s.accuracy,
        s.tpr,
        s.fpr,
        s.auc
    );
    print!("{text}");
    if let Some(path) = out {
        write(path, text.as_bytes())?;
    }
    Ok(true)
}

pub fn geodesic(
    a: &Path,
    b: &Path,
    opts: &SolveOpts,
    grid: &GridOpts,
    frames: usize,
    pgm_out: bool,
    out: &Path,
) -> CliResult<bool> {
    if frames < 2 {
        return Err(Failure::usage("--frames must be at least 2"));
    }
    let (la, lb) = (load(a)?, load(b)?);
    let grid = resolve_grid(grid, &[la.grid.as_ref(), lb.grid.as_ref()])?;
    let metric = metric(opts.metric);
    let cfg = solver_config(opts)?;
    let unit = length_unit(metric, opts.kappa, &joint_box(&[&la.measure, &lb.measure]))?;
    let (m0, m1) = (
        rescale_domain(&la.measure, unit)?,
        rescale_domain(&lb.measure, unit)?,
    );
    let mut fields = vec![
        kv("metric", metric),
        kv("kappa", unit),
        kv("a", a.display()),
        kv("b", b.display()),
    ];
    fields.extend(config_fields(&cfg));
    let comments = meta("geodesic", &fields);
    create_dir(out)?;
    let mut summary = comment_block(&comments);
    summary.push_str("frame,t,mass\n");
    let (plan, decomp) = match metric {
        Metric::Hk => {
            let plan = solve_hk(&m0, &m1, &cfg)?;
            let decomp = barycentric_project(&plan, &m0, &m1)?;
            (plan, Some(decomp))
        }
        Metric::W2 => (solve_w2(&m0, &m1, &cfg)?, None),
    };
    for f in 0..frames {
        let t = f as f64 / (frames - 1) as f64;
        let mu_t = match &decomp {
            Some(d) => interpolate_hk(&plan, d, t)?,
            None => interpolate_w2(&plan, &m0, &m1, t)?,
        };
        let mu_t = rescale_domain(&mu_t, 1.0 / unit)?;
        let img = rasterize_dense(&mu_t, &grid)?;
        let name = format!("frame_{f:03}");
        let frame_meta = meta("geodesic", &[kv("frame", f), kv("t", t)]);
        write(
            &out.join(format!("{name}.csv")),
            grid_csv_string(&img, &frame_meta).as_bytes(),
        )?;
        if pgm_out {
            write(
                &out.join(format!("{name}.pgm")),
                &pgm(grid.rows, grid.cols, &img.values),
            )?;
        }
        let _ = writeln!(summary, "{f},{t},{}", mu_t.total_mass());
    }
    write(&out.join("frames.csv"), summary.as_bytes())?;
    Ok(plan.converged)
}

#[allow(clippy::too_many_arguments)]
pub fn kappa_sweep(
    manifest: &Path,
    kappas: &[f64],
    algo: Algo,
    k: usize,
    reference: &str,
    grid: &GridOpts,
    opts: &SolveOpts,
    out: &Path,
) -> CliResult<bool> {
    let data = load_dataset(manifest, grid)?;
    if data.samples.len() < 2 {
        return Err(Failure::usage("kappa-sweep needs at least two samples"));
    }
    let labels = data
        .labels
        .clone()
        .ok_or_else(|| Failure::usage("manifest has unlabelled samples"))?;
    let cfg = solver_config(opts)?;
    let mu0 = reference_measure(reference, &data)?;
    let mut fields = vec![
        kv("manifest", manifest.display()),
        kv(
            "kappas",
            kappas
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        ),
        kv("algo", algo_name(algo)),
        kv("k", k),
        kv("reference", reference),
    ];
    fields.extend(config_fields(&cfg));
    let mut text = comment_block(&meta("kappa-sweep", &fields));
    text.push_str("kappa,accuracy,tpr,fpr,auc,hk_sq_first_pair\n");
    let mut converged = true;
    for &kappa in kappas {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Failure::usage(format!(
                "kappas must be positive, got {kappa}"
            )));
        }
        let emb = embed_dataset(&mu0, &data.samples, Metric::Hk, kappa, &cfg)?;
        converged &= emb.unconverged.is_empty();
        let matrix = emb.matrix.with_labels(labels.clone())?;
        let s = score(&matrix, algo, k, KnnProtocol::LeaveOneOut)?;
        let pair = solve_hk(
            &rescale_domain(&data.samples[0], kappa)?,
            &rescale_domain(&data.samples[1], kappa)?,
            &cfg,
        )?;
        converged &= pair.converged;
        let hk_sq = kappa * kappa * pair.objective_value.max(0.0);
        let _ = writeln!(
            text,
            "{kappa},{},{},{},{},{hk_sq}",
            s.accuracy, s.tpr, s.fpr, s.auc
        );
        log::info!("kappa {kappa}: accuracy {}", s.accuracy);
    }
    write(out, text.as_bytes())?;
    Ok(converged)
}
