//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (run with `--nocapture` to see them).

use std::time::Instant;

use parcelforge_core::config::PipelineConfig;
use parcelforge_core::dataset::{center_rows, unit_normalize_rows, DesignMatrix};
use parcelforge_core::evaluate::{glm_tvalues, pls_tmap, Eq6Mode};
use parcelforge_core::grid::VolumeGrid;
use parcelforge_core::ica::ICDecomposition;
use parcelforge_core::icmatch::{
    select_task_clusters, similarity_matrix, ward_cluster, CorrelationMode,
};
use parcelforge_core::linalg::{dot, norm2, sym_eigen, Mat};
use parcelforge_core::parcellate::{spectral_embed, GeodesicMatrix};
use parcelforge_core::pipeline::run_pipeline;
use parcelforge_core::pls::{pca_decompose, pls_fit};
use parcelforge_core::rng;
use parcelforge_core::seeds::select_seeds;
use parcelforge_core::synth::TaskResponse;
use rand::RngExt;

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut r = rng::seeded(seed);
    Mat::from_fn(rows, cols, |_, _| r.random::<f64>() * 2.0 - 1.0)
}

fn center_cols(m: &Mat<f64>) -> Mat<f64> {
    let mut out = m.clone();
    for j in 0..out.cols() {
        let col = out.col(j);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        for i in 0..out.rows() {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// Orthonormal basis of the column span via the Gram eigendecomposition:
/// an independent route from the modified Gram-Schmidt the implementation
/// uses.
fn eigen_basis(e: &Mat<f64>) -> Mat<f64> {
    let g = e.transpose().matmul(e);
    let eig = sym_eigen(&g).unwrap();
    let lam_max = eig.values[0].max(1e-300);
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > lam_max * 1e-12)
        .collect();
    let mut q = Mat::zeros(e.rows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let w = eig.vectors.col(i);
        let ew = e.matvec(&w);
        let inv = 1.0 / eig.values[i].sqrt();
        for r in 0..e.rows() {
            q[(r, col)] = ew[r] * inv;
        }
    }
    q
}

#[test]
fn criterion_1_pls_correctness_oracle() {
    let start = Instant::now();
    for trial in 0..20u64 {
        let scores = random_mat(20, 200, 100 + trial);
        let d_raw = random_mat(200, 3, 200 + trial);

        let pls = pls_fit(&scores, &d_raw, 1).unwrap();
        let t1 = pls.latents.col(0);

        // independent oracle: eigen-basis of the span, cross-covariance,
        // dominant pair via the symmetric eigensolver
        let e = scores.transpose();
        let q = eigen_basis(&e);
        let d = center_cols(&d_raw);
        let m = q.transpose().matmul(&d);
        let eig = sym_eigen(&m.matmul(&m.transpose())).unwrap();
        let w_oracle = eig.vectors.col(0);
        let t_oracle = q.matvec(&w_oracle);
        let cos_t = dot(&t1, &t_oracle).abs() / norm2(&t_oracle);
        assert!(cos_t >= 1.0 - 1e-8, "trial {trial}: t cosine {cos_t}");

        let mut c_oracle = d.tr_matvec(&t_oracle);
        let nc = norm2(&c_oracle);
        for x in &mut c_oracle {
            *x /= nc;
        }
        let cos_c = dot(&pls.y_weights.col(0), &c_oracle).abs();
        assert!(cos_c >= 1.0 - 1e-8, "trial {trial}: c cosine {cos_c}");

        // orthonormality for K up to 5
        let pls5 = pls_fit(&scores, &d_raw, 5).unwrap();
        assert!(!pls5.partial);
        let tt = pls5.latents.transpose().matmul(&pls5.latents);
        let dev = tt.sub(&Mat::identity(5)).max_abs();
        assert!(dev <= 1e-8, "trial {trial}: orthonormality {dev}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s exceeds 10s");
    println!("acceptance 1 (PLS correctness oracle): PASS ({elapsed:.2}s, 20 trials)");
}

#[test]
fn criterion_2_correlation_t_equivalence() {
    let start = Instant::now();
    let t = 100;
    let v = 500;
    let mut r = rng::seeded(17);
    let reg: Vec<f64> = (0..t).map(|_| rng::normal(&mut r)).collect();
    let mut y = Mat::zeros(t, 1);
    y.set_col(0, &reg);
    let design = DesignMatrix::new(y, vec!["reg".into()]).unwrap();
    let x = Mat::from_fn(v, t, |_, _| rng::normal::<f64>(&mut r));

    let xc = center_rows(&x);
    let (x0, _) = unit_normalize_rows(&xc);
    let pca = pca_decompose(&xc).unwrap();

    let glm = glm_tvalues(&x, &design).unwrap();
    let pls = pls_tmap(&x0, &design, &pca.scores, Eq6Mode::Sqrt).unwrap();
    let mut max_dev = 0.0f64;
    for row in 0..v {
        max_dev = max_dev.max((glm.t[(row, 0)] - pls.t[(row, 0)]).abs());
    }
    assert!(max_dev <= 1e-8, "max |glm_t - pls_t| = {max_dev}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s exceeds 10s");
    println!(
        "acceptance 2 (correlation-t / OLS-t equivalence): PASS ({elapsed:.2}s, max dev {max_dev:.2e} over {v} voxels)"
    );
}

#[test]
fn criterion_3_geodesic_mds_oracle() {
    let start = Instant::now();
    let n = 50;
    let mut r = rng::seeded(23);
    let points: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng::normal(&mut r),
                rng::normal(&mut r),
                rng::normal(&mut r),
            ]
        })
        .collect();
    let mut delta = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = (0..3)
                .map(|a| (points[i][a] - points[j][a]).powi(2))
                .sum::<f64>()
                .sqrt();
            delta[(i, j)] = d;
        }
    }
    let geo = GeodesicMatrix {
        delta: delta.clone(),
        connected: true,
        components: vec![0; n],
    };
    let coords = spectral_embed(&geo, 3).unwrap();
    let mut worst_rel = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d_emb = (0..3)
                .map(|a| (coords[(i, a)] - coords[(j, a)]).powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = (d_emb - delta[(i, j)]).abs() / delta[(i, j)];
            worst_rel = worst_rel.max(rel);
        }
    }
    assert!(worst_rel <= 1e-6, "worst relative error {worst_rel}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s exceeds 10s");
    println!(
        "acceptance 3 (geodesic/MDS oracle): PASS ({elapsed:.2}s, worst rel err {worst_rel:.2e})"
    );
}

#[test]
fn criterion_4_ic_matching_recovery() {
    let start = Instant::now();
    let t = 100;
    let tr = 3.0;
    let n_subjects = 5;
    let n_ics = 10;
    let response = TaskResponse::new(t, tr, 28.8, 2.0 * tr);
    let shared: Vec<f64> = (0..t).map(|i| response.sample(i, tr, 0.0)).collect();
    let mut y = Mat::zeros(t, 1);
    y.set_col(0, &shared);
    let design = DesignMatrix::new(y, vec!["task".into()]).unwrap();

    let mut r = rng::seeded(31);
    let mut cohort: Vec<ICDecomposition<f64>> = Vec::new();
    let mut task_pooled = Vec::new();
    let mut pooled_base = 0usize;
    for s in 0..n_subjects {
        // jitter within one TR, noise sd 0.2
        let jitter = rng::uniform_in(&mut r, -tr, tr);
        let task_slot = rng::below(&mut r, n_ics);
        let mut tc = Mat::zeros(t, n_ics);
        for ic in 0..n_ics {
            let col: Vec<f64> = if ic == task_slot {
                (0..t)
                    .map(|i| response.sample(i, tr, jitter) + 0.2 * rng::normal::<f64>(&mut r))
                    .collect()
            } else {
                (0..t).map(|_| rng::normal(&mut r)).collect()
            };
            tc.set_col(ic, &col);
        }
        let maps = Mat::from_fn(n_ics, n_ics, |i, j| ((i * 7 + j * 3 + s) % 13) as f64 + 1.0);
        task_pooled.push(pooled_base + task_slot);
        pooled_base += n_ics;
        cohort.push(ICDecomposition::new(s, tc, maps).unwrap());
    }

    let sim = similarity_matrix(&cohort, CorrelationMode::Absolute).unwrap();
    let clustering = ward_cluster(&sim, 3).unwrap();
    // majority cluster among the 5 task ICs
    let mut counts = std::collections::BTreeMap::new();
    for &p in &task_pooled {
        *counts.entry(clustering.labels[p]).or_insert(0usize) += 1;
    }
    let (&majority_cluster, &majority) = counts.iter().max_by_key(|(_, &c)| c).unwrap();
    assert!(
        majority >= 4,
        "only {majority} of 5 task ICs share a cluster (labels {:?})",
        task_pooled
            .iter()
            .map(|&p| clustering.labels[p])
            .collect::<Vec<_>>()
    );
    let selection = select_task_clusters(&clustering, &cohort, &design, 1).unwrap();
    assert_eq!(
        selection.selected[0], majority_cluster,
        "task cluster not selected"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.2}s exceeds 30s");
    println!(
        "acceptance 4 (IC matching recovery): PASS ({elapsed:.2}s, {majority}/5 task ICs clustered together)"
    );
}

fn acceptance_config(cohort_seed: u64, parcels: usize) -> PipelineConfig {
    PipelineConfig {
        synth_subjects: 1,
        synth_dims: [16, 16, 4],
        synth_parcels: 8,
        synth_frames: 120,
        synth_tr_seconds: 3.0,
        synth_task_period_seconds: 28.8,
        synth_latency_jitter_seconds: 0.0,
        synth_noise_sigma: 0.5,
        synth_seed: cohort_seed,
        ica_n_components: 12,
        ica_seed: 11,
        ica_max_iter: 1000,
        ica_tol: 1e-4,
        pca_drop_leading: 0,
        pca_variance_floor: 1e-6,
        parcel_count: parcels,
        embed_dims: 20,
        parcel_seed: 13,
        parcel_restarts: 10,
        ..PipelineConfig::default()
    }
}

fn manifest_value(manifest: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    manifest
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("manifest missing '{key}'"))
        .parse()
        .unwrap_or_else(|_| panic!("manifest value for '{key}' is not numeric"))
}

fn test_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir()
        .join("parcelforge-acceptance")
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn criterion_5_end_to_end_parcellation_quality() {
    let start = Instant::now();
    let config = acceptance_config(5, 0); // parcel_count 0 -> truth count (8)
    let out = test_dir("criterion5");
    let outcome = run_pipeline(&config, &out).unwrap();
    let ari_pls = manifest_value(&outcome.manifest_text, "ari.sub000.pls1");
    let ari_sc = manifest_value(&outcome.manifest_text, "ari.sub000.sc");
    assert!(ari_pls >= 0.6, "PLS1 ARI {ari_pls} below 0.6");
    assert!(
        ari_pls > ari_sc,
        "PLS1 ARI {ari_pls} does not beat SC baseline {ari_sc}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "runtime {elapsed:.2}s exceeds 5 min");
    println!(
        "acceptance 5 (end-to-end parcellation quality): PASS ({elapsed:.2}s, ARI pls1 {ari_pls:.3} vs sc {ari_sc:.3})"
    );
}

#[test]
fn criterion_6_directional_homogeneity() {
    let start = Instant::now();
    let mut wins = 0usize;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let config = acceptance_config(seed, 40);
        let out = test_dir(&format!("criterion6_{seed}"));
        let outcome = run_pipeline(&config, &out).unwrap();
        let v_pls = manifest_value(&outcome.manifest_text, "eval.sub000.pls1.glm_t.mean_v");
        let v_glm = manifest_value(&outcome.manifest_text, "eval.sub000.glm.glm_t.mean_v");
        if v_pls <= v_glm {
            wins += 1;
        }
        pairs.push((v_pls, v_glm));
        let _ = std::fs::remove_dir_all(&out);
    }
    assert!(
        wins >= 8,
        "PLS1 parcellation was at least as homogeneous in only {wins}/10 seeds: {pairs:?}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1200.0, "runtime {elapsed:.2}s exceeds 20 min");
    println!(
        "acceptance 6 (directional homogeneity, K_p=40): PASS ({elapsed:.2}s, {wins}/10 seeds)"
    );
}

/// Brute-force greedy oracle: full scan for the best admissible voxel at
/// every step.
fn greedy_oracle(map: &[f64], grid: &VolumeGrid, radius: f64, n: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let dist = |a: usize, b: usize| -> f64 {
        let ca = grid.coord_of_row(a);
        let cb = grid.coord_of_row(b);
        (0..3)
            .map(|i| (ca[i] as f64 - cb[i] as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    while chosen.len() < n {
        let mut best: Option<usize> = None;
        for row in 0..map.len() {
            if chosen.iter().any(|&c| dist(c, row) < radius) {
                continue;
            }
            match best {
                None => best = Some(row),
                Some(b) => {
                    if map[row].abs() > map[b].abs() {
                        best = Some(row);
                    }
                }
            }
        }
        match best {
            Some(b) => chosen.push(b),
            None => break,
        }
    }
    chosen
}

#[test]
fn criterion_7_seed_selection_properties() {
    let start = Instant::now();
    let mut r = rng::seeded(77);
    for trial in 0..200 {
        let dims = [
            2 + rng::below(&mut r, 7),
            1 + rng::below(&mut r, 6),
            1 + rng::below(&mut r, 4),
        ];
        let grid = VolumeGrid::full(dims).unwrap();
        let v = grid.n_voxels();
        assert!(v <= 200);
        let map: Vec<f64> = (0..v).map(|_| rng::normal(&mut r)).collect();
        let radius = rng::uniform_in(&mut r, 1.0, 6.0);
        let n = 1 + rng::below(&mut r, 10);

        let set = select_seeds(&map, &grid, radius, n, "t").unwrap();
        // pairwise distances respect the radius
        for i in 0..set.voxel_rows.len() {
            for j in (i + 1)..set.voxel_rows.len() {
                let ca = grid.coord_of_row(set.voxel_rows[i]);
                let cb = grid.coord_of_row(set.voxel_rows[j]);
                let d = (0..3)
                    .map(|a| (ca[a] as f64 - cb[a] as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= radius, "trial {trial}: pair below radius");
            }
        }
        // positive scaling invariance
        let scaled: Vec<f64> = map.iter().map(|x| x * 3.7).collect();
        let set_scaled = select_seeds(&scaled, &grid, radius, n, "t").unwrap();
        assert_eq!(
            set.voxel_rows, set_scaled.voxel_rows,
            "trial {trial}: scaling"
        );
        // brute-force oracle agreement
        let oracle = greedy_oracle(&map, &grid, radius, n);
        assert_eq!(set.voxel_rows, oracle, "trial {trial}: oracle mismatch");
        assert_eq!(
            set.exhausted,
            oracle.len() < n,
            "trial {trial}: exhausted flag"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.2}s exceeds 30s");
    println!("acceptance 7 (seed selection property suite): PASS ({elapsed:.2}s, 200 maps)");
}

fn collect_file_bytes(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_8_run_determinism() {
    let start = Instant::now();
    let config = PipelineConfig {
        synth_dims: [8, 8, 2],
        synth_parcels: 4,
        synth_frames: 80,
        synth_noise_sigma: 0.4,
        ica_n_components: 8,
        ica_max_iter: 1000,
        ica_tol: 1e-4,
        pca_drop_leading: 0,
        pca_variance_floor: 1e-6,
        embed_dims: 10,
        ..PipelineConfig::default()
    };
    let out_a = test_dir("criterion8_a");
    let out_b = test_dir("criterion8_b");
    let a = run_pipeline(&config, &out_a).unwrap();
    let b = run_pipeline(&config, &out_b).unwrap();
    assert_eq!(a.manifest_text, b.manifest_text, "manifests differ");
    let files_a = collect_file_bytes(&out_a);
    let files_b = collect_file_bytes(&out_b);
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>(),
        "artifact listings differ"
    );
    let mut n_files = 0usize;
    for (path, bytes) in &files_a {
        assert_eq!(bytes, &files_b[path], "artifact {path} differs");
        n_files += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "acceptance 8 (run determinism): PASS ({elapsed:.2}s, {n_files} artifacts byte-identical)"
    );
}
