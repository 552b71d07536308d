//! End-to-end pipeline driver: input (synthetic or on-disk datasets),
//! per-subject ICA, cross-subject component selection, seed picking, PLS
//! features, the three parcellation arms (PLS, GLM-feature baseline,
//! coordinate baseline), and evaluation. Every artifact lands under one
//! output directory and a manifest records all parameters, seeds,
//! warnings and artifact checksums. Runs with the same config are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{InputMode, PipelineConfig};
use crate::dataset::{center_rows, unit_normalize_rows, BoldDataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::evaluate::{
    adjusted_rand, compare_methods, glm_tvalues, intra_parcel_variance, pls_tmap, StatMap,
};
use crate::ica::{default_n_components, export_ics, fastica_with, ICDecomposition};
use crate::icmatch::{
    ic_correlation, ics_for_subject, select_task_clusters, similarity_matrix, ward_cluster,
};
use crate::io;
use crate::parcellate::{
    cmeans, coordinate_features, parcellate_pipeline, FeatureProvenance, ParcellateParams,
    Parcellation,
};
use crate::pls::{
    build_seed_matrix, covariance_features, pca_decompose, pls_fit, truncate, TruncationPolicy,
};
use crate::seeds::{select_seeds, SeedSet};
use crate::synth::{generate_synthetic_cohort, SyntheticCohortSpec};

const DEFAULT_PARCELS_REAL_DATA: usize = 600;
const SEEDS_PER_MAP_MULTI: usize = 15;
const SEEDS_PER_MAP_SINGLE: usize = 30;

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest_text: String,
    pub out_dir: PathBuf,
}

struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    fn new() -> Self {
        Manifest { lines: Vec::new() }
    }

    fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    fn warn(&mut self, message: impl std::fmt::Display) {
        self.lines.push(format!("warning = {message}"));
    }

    fn stage_done(&mut self, name: &str) {
        self.lines.push(format!("stage {name} = ok"));
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage {
        stage: name.into(),
        source: Box::new(e),
    })
}

fn subject_tag(s: usize) -> String {
    format!("sub{s:03}")
}

fn labels_csv(path: &Path, grid: &crate::grid::VolumeGrid, labels: &[usize]) -> Result<()> {
    let rows: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(row, &label)| {
            let [x, y, z] = grid.coord_of_row(row);
            vec![
                x.to_string(),
                y.to_string(),
                z.to_string(),
                row.to_string(),
                label.to_string(),
            ]
        })
        .collect();
    io::write_csv(path, &["x", "y", "z", "row", "label"], &rows)
}

fn seeds_csv(path: &Path, grid: &crate::grid::VolumeGrid, sets: &[SeedSet<f64>]) -> Result<()> {
    let mut rows = Vec::new();
    for set in sets {
        for (rank, (&row, &value)) in set.voxel_rows.iter().zip(&set.map_values).enumerate() {
            let [x, y, z] = grid.coord_of_row(row);
            rows.push(vec![
                set.source_map.clone(),
                rank.to_string(),
                x.to_string(),
                y.to_string(),
                z.to_string(),
                row.to_string(),
                format!("{value}"),
            ]);
        }
    }
    io::write_csv(
        path,
        &["map_id", "rank", "x", "y", "z", "row", "map_value"],
        &rows,
    )
}

fn write_stat_map(dir: &Path, tag: &str, map: &StatMap<f64>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_f64_matrix(&dir.join(format!("{tag}.f64")), &map.t)?;
    let meta = format!(
        "{{\n  \"kind\": \"{}\",\n  \"rows\": {},\n  \"cols\": {},\n  \"dof\": {},\n  \"n_saturated\": {}\n}}\n",
        map.kind,
        map.t.rows(),
        map.t.cols(),
        map.dof,
        map.n_saturated
    );
    io::write_text(&dir.join(format!("{tag}.json")), &meta)
}

/// One parcellation arm and everything derived from it.
struct Arm {
    name: String,
    parcellation: Parcellation,
}

/// Runs the full pipeline into `out_dir`. Returns the manifest text, which
/// is also written to `out_dir/manifest.txt`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Manifest::new();
    manifest.record(
        "config_checksum",
        format!("{:016x}", io::fnv1a64(config.to_text().as_bytes())),
    );

    // ------------------------------------------------------------------ input
    let (datasets, design, truth): (
        Vec<BoldDataset<f64>>,
        Option<DesignMatrix<f64>>,
        Option<Vec<usize>>,
    ) = stage("input", || match config.mode {
        InputMode::Synth => {
            let spec = SyntheticCohortSpec {
                n_subjects: config.synth_subjects,
                dims: config.synth_dims,
                n_true_parcels: config.synth_parcels,
                n_frames: config.synth_frames,
                tr_seconds: config.synth_tr_seconds,
                task_period_seconds: config.synth_task_period_seconds,
                hrf_latency_jitter_seconds: config.synth_latency_jitter_seconds,
                noise_sigma: config.synth_noise_sigma,
                rng_seed: config.synth_seed,
            };
            let cohort = generate_synthetic_cohort(&spec)?;
            let data_dir = out_dir.join("data");
            for (s, ds) in cohort.datasets.iter().enumerate() {
                io::write_dataset(&data_dir.join(subject_tag(s)), ds, Some(&cohort.design))?;
            }
            labels_csv(
                &data_dir.join("truth_labels.csv"),
                &cohort.datasets[0].grid,
                &cohort.truth_labels,
            )?;
            let latency_rows: Vec<Vec<String>> = cohort
                .per_subject_latency
                .iter()
                .enumerate()
                .map(|(s, l)| vec![s.to_string(), format!("{l}")])
                .collect();
            io::write_csv(
                &data_dir.join("latencies.csv"),
                &["subject", "latency_seconds"],
                &latency_rows,
            )?;
            Ok((
                cohort.datasets,
                Some(cohort.design),
                Some(cohort.truth_labels),
            ))
        }
        InputMode::Dataset => {
            let mut datasets = Vec::new();
            let mut design: Option<DesignMatrix<f64>> = None;
            for dir in &config.data_dirs {
                let (ds, d) = io::read_dataset(dir)?;
                if design.is_none() {
                    design = d;
                }
                datasets.push(ds);
            }
            if let Some(path) = &config.design_path {
                design = Some(io::read_design(path)?);
            }
            Ok((datasets, design, None))
        }
    })?;
    let n_subjects = datasets.len();
    manifest.record("n_subjects", n_subjects);
    manifest.record("n_voxels", datasets[0].n_voxels());
    manifest.record("n_frames", datasets[0].n_frames());
    manifest.stage_done("input");

    let k_p = if config.parcel_count > 0 {
        config.parcel_count
    } else if config.mode == InputMode::Synth {
        config.synth_parcels
    } else {
        DEFAULT_PARCELS_REAL_DATA
    };
    manifest.record("parcel_count", k_p);
    for (s, ds) in datasets.iter().enumerate() {
        if k_p > ds.n_voxels() / 2 {
            manifest.warn(format!(
                "{}: parcel count {} exceeds half the voxel count {}",
                subject_tag(s),
                k_p,
                ds.n_voxels()
            ));
        }
    }

    // ------------------------------------------------------------------- ica
    let decs: Vec<ICDecomposition<f64>> = stage("ica", || {
        let mut decs = Vec::with_capacity(n_subjects);
        for (s, ds) in datasets.iter().enumerate() {
            let n = if config.ica_n_components > 0 {
                config.ica_n_components
            } else {
                default_n_components(ds)?
            };
            manifest.record(&format!("ica.{}.n_components", subject_tag(s)), n);
            let dec = fastica_with(
                ds,
                s,
                n,
                config.ica_seed.wrapping_add(s as u64),
                config.ica_max_iter,
                config.ica_tol,
            )?;
            export_ics(&out_dir.join("ica").join(subject_tag(s)), &dec)?;
            decs.push(dec);
        }
        Ok(decs)
    })?;
    manifest.stage_done("ica");

    // ---------------------------------------------------------------- select
    let selected_ics: Vec<Vec<(String, usize)>> = stage("select", || {
        if n_subjects >= 2 {
            let design = design.as_ref().ok_or_else(|| {
                Error::Config("a design matrix is required for multi-subject IC selection".into())
            })?;
            let sim = similarity_matrix(&decs, config.ica_mode)?;
            io::write_numeric_csv(&out_dir.join("similarity.csv"), None, &sim.s)?;
            let mut clustering = ward_cluster(&sim, config.ica_n_clusters)?;
            let cluster_rows: Vec<Vec<String>> = sim
                .pooled
                .iter()
                .enumerate()
                .map(|(p, &(s, i))| {
                    vec![
                        p.to_string(),
                        s.to_string(),
                        i.to_string(),
                        clustering.labels[p].to_string(),
                    ]
                })
                .collect();
            io::write_csv(
                &out_dir.join("clusters.csv"),
                &["pooled", "subject", "ic", "cluster"],
                &cluster_rows,
            )?;
            let selection = select_task_clusters(&clustering, &decs, design, config.ica_n_select)?;
            clustering.cluster_task_scores = selection.scores.clone();
            for (c, scores) in selection.scores.iter().enumerate() {
                let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                manifest.record(&format!("select.cluster{c}.score"), format!("{best}"));
            }
            manifest.record(
                "select.clusters",
                selection
                    .selected
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            let mut per_subject = Vec::with_capacity(n_subjects);
            let mut rows = Vec::new();
            for s in 0..n_subjects {
                let picks = ics_for_subject(s, &clustering, &sim, &selection.selected)?;
                let mut list = Vec::new();
                for (cluster, pooled_idx) in picks {
                    let (owner, local) = sim.pooled[pooled_idx];
                    debug_assert_eq!(owner, s);
                    rows.push(vec![
                        s.to_string(),
                        cluster.to_string(),
                        pooled_idx.to_string(),
                        local.to_string(),
                    ]);
                    list.push((format!("c{cluster}"), local));
                }
                per_subject.push(list);
            }
            io::write_csv(
                &out_dir.join("selection.csv"),
                &["subject", "cluster", "pooled", "ic"],
                &rows,
            )?;
            Ok(per_subject)
        } else {
            // single subject: manual indices, otherwise best match per regressor
            let dec = &decs[0];
            let indices: Vec<usize> = if !config.ica_manual_indices.is_empty() {
                for &i in &config.ica_manual_indices {
                    if i >= dec.n_components() {
                        return Err(Error::Param(format!(
                            "ica.ic_indices entry {i} out of range ({} components)",
                            dec.n_components()
                        )));
                    }
                }
                config.ica_manual_indices.clone()
            } else if let Some(design) = design.as_ref() {
                let mut picked = Vec::new();
                let n_wanted = config.ica_n_select.min(design.n_regressors());
                for k in 0..n_wanted {
                    let reg = design.y.col(k);
                    let mut best = 0usize;
                    let mut best_rho = f64::NEG_INFINITY;
                    for i in 0..dec.n_components() {
                        let rho = ic_correlation(&dec.timecourse(i), &reg)?.abs();
                        if rho > best_rho {
                            best_rho = rho;
                            best = i;
                        }
                    }
                    if !picked.contains(&best) {
                        picked.push(best);
                    }
                }
                picked
            } else {
                return Err(Error::Config(
                    "ica.ic_indices is required for single-subject input without a design".into(),
                ));
            };
            manifest.record(
                "select.ics",
                indices
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            let rows: Vec<Vec<String>> = indices
                .iter()
                .map(|&i| vec!["0".into(), "-".into(), i.to_string(), i.to_string()])
                .collect();
            io::write_csv(
                &out_dir.join("selection.csv"),
                &["subject", "cluster", "pooled", "ic"],
                &rows,
            )?;
            Ok(vec![indices
                .iter()
                .map(|&i| (format!("ic{i}"), i))
                .collect()])
        }
    })?;
    manifest.stage_done("select");

    // ----------------------------------------------------------------- seeds
    let n_seeds_per_map = if config.seed_count > 0 {
        config.seed_count
    } else if n_subjects >= 2 {
        SEEDS_PER_MAP_MULTI
    } else {
        SEEDS_PER_MAP_SINGLE
    };
    manifest.record("seeds.per_map", n_seeds_per_map);
    let seed_sets: Vec<Vec<SeedSet<f64>>> = stage("seeds", || {
        let dir = out_dir.join("seeds");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut all = Vec::with_capacity(n_subjects);
        for (s, picks) in selected_ics.iter().enumerate() {
            let mut sets = Vec::new();
            for (tag, ic) in picks {
                let map = decs[s].maps.row(*ic);
                let set = select_seeds(
                    map,
                    &datasets[s].grid,
                    config.seed_radius,
                    n_seeds_per_map,
                    format!("{tag}i{ic}"),
                )?;
                if set.exhausted {
                    manifest.warn(format!(
                        "{}: map {} exhausted after {} of {} seeds",
                        subject_tag(s),
                        set.source_map,
                        set.len(),
                        n_seeds_per_map
                    ));
                }
                sets.push(set);
            }
            seeds_csv(
                &dir.join(format!("{}.csv", subject_tag(s))),
                &datasets[s].grid,
                &sets,
            )?;
            all.push(sets);
        }
        Ok(all)
    })?;
    manifest.stage_done("seeds");

    // ------------------------------------------------- per-subject processing
    let policy = TruncationPolicy {
        drop_leading: config.pca_drop_leading,
        drop_trailing: config.pca_drop_trailing,
        variance_floor_fraction: config.pca_variance_floor,
    };
    let mut all_ari_rows: Vec<Vec<String>> = Vec::new();
    let mut comparison_rows: Vec<Vec<String>> = Vec::new();
    let mut activation_rows: Vec<Vec<String>> = Vec::new();

    for (s, ds) in datasets.iter().enumerate() {
        let tag = subject_tag(s);
        let grid = &ds.grid;

        let (x0, truncated, features_per_k) = stage("pls", || {
            let xc = center_rows(&ds.x);
            let (x0, zero_rows) = unit_normalize_rows(&xc);
            if !zero_rows.is_empty() {
                manifest.warn(format!("{tag}: {} zero-variance rows", zero_rows.len()));
            }
            let pca = pca_decompose(&xc)?;
            let truncated = truncate(&pca, &policy)?;
            manifest.record(
                &format!("pca.{tag}.kept"),
                format!("{}/{}", truncated.kept.len(), pca.n_components()),
            );
            let sm = build_seed_matrix(ds, &seed_sets[s])?;
            if sm.n_duplicates > 0 {
                manifest.warn(format!(
                    "{tag}: {} duplicate seeds dropped",
                    sm.n_duplicates
                ));
            }
            manifest.record(&format!("seeds.{tag}.n_dep"), sm.d.cols());
            let mut features_per_k = Vec::new();
            for &k in &config.pls_k_values {
                let model = pls_fit(&truncated.scores, &sm.d, k)?;
                if model.partial {
                    manifest.warn(format!(
                        "{tag}: PLS rank exhausted at {} of {k} latents",
                        model.k()
                    ));
                }
                let feats = covariance_features(&x0, &model)?;
                let fdir = out_dir.join("features");
                fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
                io::write_f64_matrix(&fdir.join(format!("{tag}_pls{k}.f64")), &feats.values)?;
                let meta = format!(
                    "{{\n  \"k\": {},\n  \"rows\": {},\n  \"seed_columns\": {},\n  \"drop_leading\": {},\n  \"drop_trailing\": {},\n  \"variance_floor\": {}\n}}\n",
                    feats.k(),
                    feats.n_voxels(),
                    sm.d.cols(),
                    policy.drop_leading,
                    policy.drop_trailing,
                    policy.variance_floor_fraction
                );
                io::write_text(&fdir.join(format!("{tag}_pls{k}.json")), &meta)?;
                let names: Vec<String> = (0..model.k()).map(|i| format!("t{}", i + 1)).collect();
                io::write_numeric_csv(
                    &out_dir
                        .join("features")
                        .join(format!("{tag}_pls{k}_latents.csv")),
                    Some(&names),
                    &model.latents,
                )?;
                features_per_k.push((k, feats));
            }
            Ok((x0, truncated, features_per_k))
        })?;

        // stat maps
        let stat_maps: Option<(StatMap<f64>, StatMap<f64>)> = if let Some(design) = design.as_ref()
        {
            let maps = stage("stats", || {
                let glm = glm_tvalues(&ds.x, design)?;
                let pls = pls_tmap(&x0, design, &truncated.scores, config.eq6_mode)?;
                let dir = out_dir.join("stats");
                write_stat_map(&dir, &format!("{tag}_glm_t"), &glm)?;
                write_stat_map(&dir, &format!("{tag}_pls_t"), &pls)?;
                if glm.n_saturated > 0 {
                    manifest.warn(format!("{tag}: {} saturated GLM t-values", glm.n_saturated));
                }
                if pls.n_saturated > 0 {
                    manifest.warn(format!(
                        "{tag}: {} clipped PLS correlations",
                        pls.n_saturated
                    ));
                }
                Ok((glm, pls))
            })?;
            Some(maps)
        } else {
            manifest.warn(format!(
                "{tag}: no design matrix, skipping t-maps and reports"
            ));
            None
        };

        // parcellation arms
        let arms: Vec<Arm> = stage("parcellate", || {
            let params = ParcellateParams {
                k_p,
                dims: config.embed_dims,
                rng_seed: config.parcel_seed.wrapping_add(s as u64),
                n_restarts: config.parcel_restarts,
            };
            let pdir = out_dir.join("parcels");
            fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
            let mut arms = Vec::new();
            for (k, feats) in &features_per_k {
                let out = parcellate_pipeline(
                    &feats.values,
                    grid,
                    &params,
                    FeatureProvenance::Pls { k: *k },
                )?;
                if !out.geodesic_connected {
                    manifest.warn(format!("{tag}: pls{k} voxel graph is disconnected"));
                }
                io::write_f64_matrix(
                    &pdir.join(format!("{tag}_pls{k}_embedding.f64")),
                    &out.embedding,
                )?;
                arms.push(Arm {
                    name: format!("pls{k}"),
                    parcellation: out.parcellation,
                });
            }
            if let Some((glm, _)) = &stat_maps {
                let out = parcellate_pipeline(&glm.t, grid, &params, FeatureProvenance::Glm)?;
                if !out.geodesic_connected {
                    manifest.warn(format!("{tag}: glm voxel graph is disconnected"));
                }
                arms.push(Arm {
                    name: "glm".into(),
                    parcellation: out.parcellation,
                });
            }
            // the spatial-clustering baseline is read as plain k-means on
            // voxel coordinates
            let coords = coordinate_features::<f64>(grid);
            let mut sc = cmeans(&coords, k_p, params.rng_seed, params.n_restarts)?;
            sc.provenance = FeatureProvenance::Coordinates;
            arms.push(Arm {
                name: "sc".into(),
                parcellation: sc,
            });
            for arm in &arms {
                labels_csv(
                    &pdir.join(format!("{tag}_{}.csv", arm.name)),
                    grid,
                    &arm.parcellation.labels,
                )?;
                io::write_label_volume(
                    &pdir.join(format!("{tag}_{}_volume", arm.name)),
                    grid,
                    &arm.parcellation.labels,
                    ds.tr_seconds,
                )?;
            }
            Ok(arms)
        })?;

        // evaluation
        stage("evaluate", || {
            if let Some(truth) = truth.as_ref() {
                for arm in &arms {
                    let ari = adjusted_rand(&arm.parcellation.labels, truth)?;
                    manifest.record(&format!("ari.{tag}.{}", arm.name), format!("{ari}"));
                    all_ari_rows.push(vec![tag.clone(), arm.name.clone(), format!("{ari}")]);
                }
            }
            if let Some((glm, pls)) = &stat_maps {
                let edir = out_dir.join("eval");
                fs::create_dir_all(&edir).map_err(|e| Error::io(&edir, e))?;
                let mut reports = Vec::new();
                for arm in &arms {
                    for stat in [glm, pls] {
                        let report = intra_parcel_variance(stat, &arm.parcellation)?;
                        let rows: Vec<Vec<String>> = report
                            .v
                            .iter()
                            .enumerate()
                            .map(|(p, v)| {
                                vec![report.method_tag.clone(), p.to_string(), format!("{v}")]
                            })
                            .collect();
                        io::write_csv(
                            &edir.join(format!("{tag}_{}_{}.csv", arm.name, stat.kind)),
                            &["method", "parcel", "v"],
                            &rows,
                        )?;
                        manifest.record(
                            &format!("eval.{tag}.{}.{}.mean_v", arm.name, stat.kind),
                            format!("{}", report.mean()),
                        );
                        reports.push(report);

                        // activation listing: parcels whose mean t passes
                        // the kind's threshold for some regressor
                        let threshold = match stat.kind {
                            crate::evaluate::StatKind::Glm => config.glm_threshold,
                            crate::evaluate::StatKind::Pls => config.pls_threshold,
                        };
                        let k_parcels = arm.parcellation.k;
                        let n_r = stat.t.cols();
                        let mut sums = vec![vec![0.0f64; n_r]; k_parcels];
                        let mut counts = vec![0usize; k_parcels];
                        for (row, &label) in arm.parcellation.labels.iter().enumerate() {
                            counts[label] += 1;
                            for j in 0..n_r {
                                sums[label][j] += stat.t[(row, j)];
                            }
                        }
                        for p in 0..k_parcels {
                            for j in 0..n_r {
                                let mean_t = sums[p][j] / counts[p] as f64;
                                if mean_t > threshold {
                                    activation_rows.push(vec![
                                        tag.clone(),
                                        arm.name.clone(),
                                        stat.kind.to_string(),
                                        p.to_string(),
                                        j.to_string(),
                                        format!("{mean_t}"),
                                    ]);
                                }
                            }
                        }
                    }
                }
                let table = compare_methods(&reports)?;
                for row in table {
                    comparison_rows.push(vec![
                        tag.clone(),
                        row.method,
                        format!("{}", row.mean),
                        format!("{}", row.q1),
                        format!("{}", row.q3),
                    ]);
                }
            }
            Ok(())
        })?;
    }

    stage("report", || {
        if !all_ari_rows.is_empty() {
            io::write_csv(
                &out_dir.join("ari.csv"),
                &["subject", "method", "ari"],
                &all_ari_rows,
            )?;
        }
        if !comparison_rows.is_empty() {
            io::write_csv(
                &out_dir.join("comparison.csv"),
                &["subject", "method", "mean", "q1", "q3"],
                &comparison_rows,
            )?;
        }
        if !activation_rows.is_empty() {
            io::write_csv(
                &out_dir.join("activated_parcels.csv"),
                &["subject", "method", "kind", "parcel", "regressor", "mean_t"],
                &activation_rows,
            )?;
        }
        Ok(())
    })?;
    manifest.stage_done("evaluate");

    // --------------------------------------------------------------- manifest
    let mut artifacts = BTreeMap::new();
    collect_files(out_dir, out_dir, &mut artifacts)?;
    let mut text = String::new();
    text.push_str("# parcelforge run manifest\n");
    text.push_str("[config]\n");
    text.push_str(&config.to_text());
    text.push_str("[run]\n");
    for line in &manifest.lines {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str("[artifacts]\n");
    for (path, checksum) in &artifacts {
        text.push_str(&format!("{path} = {checksum:016x}\n"));
    }
    io::write_text(&out_dir.join("manifest.txt"), &text)?;
    Ok(RunOutcome {
        manifest_text: text,
        out_dir: out_dir.to_path_buf(),
    })
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, u64>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            if rel == "manifest.txt" {
                continue;
            }
            out.insert(rel, io::file_checksum(&path)?);
        }
    }
    Ok(())
}
