#![allow(clippy::needless_range_loop)]

//! `parcelforge`: ICA/PLS fMRI parcellation from the command line.
//!
//! Exit codes: 0 success, 2 usage, 3 data/format, 4 numerical, 5 internal.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use parcelforge_core::config::{InputMode, PipelineConfig};
use parcelforge_core::dataset::{mask_and_flatten, MaskRule};
use parcelforge_core::error::{Error, ErrorCategory};
use parcelforge_core::evaluate::{
    adjusted_rand, compare_methods, glm_tvalues, intra_parcel_variance, pls_tmap, quantile_sorted,
    Eq6Mode,
};
use parcelforge_core::ica::{default_n_components, export_ics, fastica_with, import_ics};
use parcelforge_core::icmatch::{
    ics_for_subject, select_task_clusters, similarity_matrix, ward_cluster, CorrelationMode,
};
use parcelforge_core::io as pio;
use parcelforge_core::parcellate::{
    parcellate_pipeline, FeatureProvenance, ParcellateParams, Parcellation,
};
use parcelforge_core::pipeline::run_pipeline;
use parcelforge_core::pls::{
    build_seed_matrix, covariance_features, pca_decompose, pls_fit, truncate, TruncationPolicy,
};
use parcelforge_core::seeds::{select_seeds, SeedSet};
use parcelforge_core::synth::{generate_synthetic_cohort, SyntheticCohortSpec};

#[derive(Parser)]
#[command(name = "parcelforge", version, about = "Data-driven fMRI parcellation")]
struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort, or emit a run config for piping.
    Synth(SynthArgs),
    /// Convert a NIfTI-1 volume into the internal dataset format.
    Ingest(IngestArgs),
    /// Compute (or import) independent components for one dataset.
    Ica(IcaArgs),
    /// Match ICs across subjects and select task clusters.
    Match(MatchArgs),
    /// Pick seed voxels from an IC spatial map.
    Seeds(SeedsArgs),
    /// PCA + PLS latent extraction and the covariance feature field.
    Pls(PlsArgs),
    /// Geodesic spectral parcellation of a feature field.
    Parcellate(ParcellateArgs),
    /// GLM/PLS t-maps, intra-parcel variance and ground-truth agreement.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline from a config file (or stdin).
    Run(RunArgs),
    /// Summarize per-parcel variance reports into a comparison table.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    subjects: usize,
    /// Grid dimensions, e.g. 16x16x4.
    #[arg(long, default_value = "16x16x4")]
    dims: String,
    #[arg(long, default_value_t = 8)]
    parcels: usize,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    #[arg(long, default_value_t = 3.0)]
    tr: f64,
    #[arg(long, default_value_t = 28.8)]
    period: f64,
    /// Per-subject latency jitter half-width in seconds.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write the cohort (datasets, truth labels, design) to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a full run config to stdout (default when --out is absent).
    #[arg(long)]
    emit_config: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    nifti: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Design matrix CSV copied into the dataset directory.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Repetition time override (otherwise read from the header).
    #[arg(long)]
    tr: Option<f64>,
    #[arg(long, value_enum, default_value_t = MaskRuleArg::NonzeroVariance)]
    mask_rule: MaskRuleArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskRuleArg {
    NonzeroVariance,
    All,
}

#[derive(Args)]
struct IcaArgs {
    /// Dataset directory (grid.json + X.f64).
    #[arg(long, required_unless_present = "import_timecourses")]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// 0 = automatic (95% variance, capped at 60).
    #[arg(long, default_value_t = 0)]
    n_components: usize,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    subject: usize,
    /// Import an externally computed decomposition instead of fitting.
    #[arg(long, requires = "import_maps")]
    import_timecourses: Option<PathBuf>,
    #[arg(long, requires = "import_timecourses")]
    import_maps: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    /// IC directories (timecourses.csv + maps.f64), one per subject.
    #[arg(long, required = true, num_args = 2..)]
    ica: Vec<PathBuf>,
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Absolute)]
    mode: ModeArg,
    #[arg(long, default_value_t = 3)]
    n_clusters: usize,
    #[arg(long, default_value_t = 2)]
    n_select: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Absolute,
    Signed,
}

#[derive(Args)]
struct SeedsArgs {
    /// IC directory holding maps.f64 (+ timecourses.csv for shape).
    #[arg(long)]
    ica: PathBuf,
    /// Index of the IC map to use.
    #[arg(long)]
    ic: usize,
    /// Dataset directory providing the grid.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 6.0)]
    radius: f64,
    #[arg(long, default_value_t = 15)]
    n_seeds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Seed CSVs (as written by `seeds`), concatenated in order.
    #[arg(long, required = true, num_args = 1..)]
    seeds: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    drop_leading: usize,
    #[arg(long, default_value_t = 0)]
    drop_trailing: usize,
    #[arg(long, default_value_t = 1e-4)]
    variance_floor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParcellateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Feature blob (.f64) with a .json sidecar carrying its column count.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 600)]
    parcels: usize,
    #[arg(long, default_value_t = 20)]
    dims: usize,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Parcel labels CSV (x,y,z,row,label).
    #[arg(long)]
    labels: PathBuf,
    /// Ground-truth labels CSV for the adjusted Rand index.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    glm_threshold: f64,
    #[arg(long, default_value_t = 3.0)]
    pls_threshold: f64,
    #[arg(long, value_enum, default_value_t = Eq6Arg::Sqrt)]
    eq6: Eq6Arg,
    /// Use the t transform with the un-rooted denominator (compatibility
    /// with sources that print it that way).
    #[arg(long, conflicts_with = "eq6")]
    eq6_literal: bool,
    #[arg(long, default_value_t = 2)]
    drop_leading: usize,
    #[arg(long, default_value_t = 0)]
    drop_trailing: usize,
    #[arg(long, default_value_t = 1e-4)]
    variance_floor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Eq6Arg {
    Sqrt,
    Literal,
}

#[derive(Args)]
struct RunArgs {
    /// Config file path, or '-' for stdin (the default).
    #[arg(long, default_value = "-")]
    config: String,
    #[arg(long, default_value = "parcelforge-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Per-parcel variance CSVs (method,parcel,v).
    #[arg(long, required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            eprintln!(
                "parcelforge: could not configure {} workers: {e}",
                cli.workers
            );
            return ExitCode::from(5);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parcelforge: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            let code = match e.category() {
                ErrorCategory::Usage => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
                ErrorCategory::Internal => 5,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Ica(args) => cmd_ica(args),
        Command::Match(args) => cmd_match(args),
        Command::Seeds(args) => cmd_seeds(args),
        Command::Pls(args) => cmd_pls(args),
        Command::Parcellate(args) => cmd_parcellate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn parse_dims(text: &str) -> Result<[usize; 3], Error> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::Param(format!(
            "dims must look like 16x16x4, got '{text}'"
        )));
    }
    let mut dims = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        dims[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::Param(format!("bad dims component '{p}'")))?;
    }
    Ok(dims)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let dims = parse_dims(&args.dims)?;
    let mut config = PipelineConfig {
        mode: InputMode::Synth,
        synth_subjects: args.subjects,
        synth_dims: dims,
        synth_parcels: args.parcels,
        synth_frames: args.frames,
        synth_tr_seconds: args.tr,
        synth_task_period_seconds: args.period,
        synth_latency_jitter_seconds: args.jitter,
        synth_noise_sigma: args.noise,
        synth_seed: args.seed,
        ..PipelineConfig::default()
    };
    // small cohorts behave better with an explicit component count
    config.ica_n_components = 12.min(args.frames.saturating_sub(1)).max(2);
    config.ica_tol = 1e-4;
    config.ica_max_iter = 1000;
    config.pca_drop_leading = 0;
    config.pca_variance_floor = 1e-6;

    if let Some(out) = &args.out {
        let spec = SyntheticCohortSpec {
            n_subjects: args.subjects,
            dims,
            n_true_parcels: args.parcels,
            n_frames: args.frames,
            tr_seconds: args.tr,
            task_period_seconds: args.period,
            hrf_latency_jitter_seconds: args.jitter,
            noise_sigma: args.noise,
            rng_seed: args.seed,
        };
        let cohort = generate_synthetic_cohort(&spec)?;
        for (s, ds) in cohort.datasets.iter().enumerate() {
            pio::write_dataset(&out.join(format!("sub{s:03}")), ds, Some(&cohort.design))?;
        }
        let grid = &cohort.datasets[0].grid;
        let rows: Vec<Vec<String>> = cohort
            .truth_labels
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
        pio::write_csv(
            &out.join("truth_labels.csv"),
            &["x", "y", "z", "row", "label"],
            &rows,
        )?;
        eprintln!(
            "synth: wrote {} subject dataset(s) to {}",
            cohort.datasets.len(),
            out.display()
        );
        if args.emit_config {
            print!("{}", config.to_text());
        }
    } else {
        print!("{}", config.to_text());
    }
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Error> {
    let (volume, header) = parcelforge_core::nifti::load_nifti(&args.nifti)?;
    let tr = match args.tr.or_else(|| header.tr_seconds()) {
        Some(tr) => tr,
        None => {
            return Err(Error::Param(
                "header has no repetition time; pass --tr".into(),
            ))
        }
    };
    let ds = match args.mask_rule {
        MaskRuleArg::NonzeroVariance => mask_and_flatten(&volume, MaskRule::NonzeroVariance, tr)?,
        MaskRuleArg::All => {
            let mask = vec![true; volume.dims[0] * volume.dims[1] * volume.dims[2]];
            mask_and_flatten(&volume, MaskRule::Explicit(&mask), tr)?
        }
    };
    let design = match &args.design {
        Some(path) => Some(pio::read_design(path)?),
        None => None,
    };
    pio::write_dataset(&args.out, &ds, design.as_ref())?;
    eprintln!(
        "ingest: {} voxels x {} frames -> {}",
        ds.n_voxels(),
        ds.n_frames(),
        args.out.display()
    );
    Ok(())
}

fn cmd_ica(args: IcaArgs) -> Result<(), Error> {
    let dec = if let (Some(tc), Some(maps)) = (&args.import_timecourses, &args.import_maps) {
        import_ics(tc, maps, args.subject)?
    } else {
        let data = args.data.as_ref().expect("clap enforces --data");
        let (ds, _) = pio::read_dataset(data)?;
        let n = if args.n_components > 0 {
            args.n_components
        } else {
            default_n_components(&ds)?
        };
        eprintln!("ica: fitting {n} components");
        fastica_with(&ds, args.subject, n, args.seed, args.max_iter, args.tol)?
    };
    export_ics(&args.out, &dec)?;
    eprintln!(
        "ica: {} components ({} frames) -> {}",
        dec.n_components(),
        dec.n_frames(),
        args.out.display()
    );
    Ok(())
}

fn cmd_match(args: MatchArgs) -> Result<(), Error> {
    let mut decs = Vec::new();
    for (s, dir) in args.ica.iter().enumerate() {
        decs.push(import_ics(
            &dir.join("timecourses.csv"),
            &dir.join("maps.f64"),
            s,
        )?);
    }
    let design = pio::read_design(&args.design)?;
    let mode = match args.mode {
        ModeArg::Absolute => CorrelationMode::Absolute,
        ModeArg::Signed => CorrelationMode::Signed,
    };
    let sim = similarity_matrix(&decs, mode)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    pio::write_numeric_csv(&args.out.join("similarity.csv"), None, &sim.s)?;
    let mut clustering = ward_cluster(&sim, args.n_clusters)?;
    let selection = select_task_clusters(&clustering, &decs, &design, args.n_select)?;
    clustering.cluster_task_scores = selection.scores.clone();
    let rows: Vec<Vec<String>> = sim
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
    pio::write_csv(
        &args.out.join("clusters.csv"),
        &["pooled", "subject", "ic", "cluster"],
        &rows,
    )?;
    let mut selection_rows = Vec::new();
    for s in 0..decs.len() {
        for (cluster, pooled_idx) in ics_for_subject(s, &clustering, &sim, &selection.selected)? {
            let (_, local) = sim.pooled[pooled_idx];
            selection_rows.push(vec![
                s.to_string(),
                cluster.to_string(),
                pooled_idx.to_string(),
                local.to_string(),
            ]);
        }
    }
    pio::write_csv(
        &args.out.join("selection.csv"),
        &["subject", "cluster", "pooled", "ic"],
        &selection_rows,
    )?;
    eprintln!(
        "match: selected clusters {:?} of {}",
        selection.selected, args.n_clusters
    );
    Ok(())
}

fn cmd_seeds(args: SeedsArgs) -> Result<(), Error> {
    let dec = import_ics(
        &args.ica.join("timecourses.csv"),
        &args.ica.join("maps.f64"),
        0,
    )?;
    if args.ic >= dec.n_components() {
        return Err(Error::Param(format!(
            "--ic {} out of range ({} components)",
            args.ic,
            dec.n_components()
        )));
    }
    let (ds, _) = pio::read_dataset(&args.data)?;
    let set = select_seeds(
        dec.maps.row(args.ic),
        &ds.grid,
        args.radius,
        args.n_seeds,
        format!("ic{}", args.ic),
    )?;
    if set.exhausted {
        eprintln!(
            "seeds: exhausted after {} of {} seeds",
            set.len(),
            args.n_seeds
        );
    }
    write_seed_csv(&args.out, &ds.grid, &[set])?;
    eprintln!("seeds: wrote {}", args.out.display());
    Ok(())
}

fn write_seed_csv(
    path: &Path,
    grid: &parcelforge_core::grid::VolumeGrid,
    sets: &[SeedSet<f64>],
) -> Result<(), Error> {
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
    pio::write_csv(
        path,
        &["map_id", "rank", "x", "y", "z", "row", "map_value"],
        &rows,
    )
}

/// Reads seed voxel rows back from a seeds CSV (column 5 = row).
fn read_seed_rows(path: &Path) -> Result<SeedSet<f64>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Format {
                file: path.display().to_string(),
                message: format!("line {}: expected 7 columns", i + 1),
            });
        }
        rows.push(cols[5].trim().parse().map_err(|_| Error::Format {
            file: path.display().to_string(),
            message: format!("line {}: bad row index", i + 1),
        })?);
        values.push(cols[6].trim().parse().unwrap_or(0.0));
    }
    Ok(SeedSet {
        voxel_rows: rows,
        map_values: values,
        source_map: path.display().to_string(),
        radius: 0.0,
        exhausted: false,
    })
}

fn cmd_pls(args: PlsArgs) -> Result<(), Error> {
    let (ds, _) = pio::read_dataset(&args.data)?;
    let xc = parcelforge_core::dataset::center_rows(&ds.x);
    let (x0, _) = parcelforge_core::dataset::unit_normalize_rows(&xc);
    let pca = pca_decompose(&xc)?;
    let policy = TruncationPolicy {
        drop_leading: args.drop_leading,
        drop_trailing: args.drop_trailing,
        variance_floor_fraction: args.variance_floor,
    };
    let truncated = truncate(&pca, &policy)?;
    let seed_sets: Vec<SeedSet<f64>> = args
        .seeds
        .iter()
        .map(|p| read_seed_rows(p))
        .collect::<Result<_, _>>()?;
    let sm = build_seed_matrix(&ds, &seed_sets)?;
    let model = pls_fit(&truncated.scores, &sm.d, args.k)?;
    if model.partial {
        eprintln!("pls: rank exhausted at {} of {} latents", model.k(), args.k);
    }
    let feats = covariance_features(&x0, &model)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    pio::write_f64_matrix(&args.out.join("features.f64"), &feats.values)?;
    let meta = format!(
        "{{\n  \"k\": {},\n  \"rows\": {},\n  \"seed_columns\": {},\n  \"drop_leading\": {},\n  \"drop_trailing\": {},\n  \"variance_floor\": {}\n}}\n",
        feats.k(),
        feats.n_voxels(),
        sm.d.cols(),
        policy.drop_leading,
        policy.drop_trailing,
        policy.variance_floor_fraction
    );
    pio::write_text(&args.out.join("features.json"), &meta)?;
    let names: Vec<String> = (0..model.k()).map(|i| format!("t{}", i + 1)).collect();
    pio::write_numeric_csv(&args.out.join("latents.csv"), Some(&names), &model.latents)?;
    eprintln!(
        "pls: {} latents over {} seed columns -> {}",
        model.k(),
        sm.d.cols(),
        args.out.display()
    );
    Ok(())
}

fn feature_cols_from_sidecar(features: &Path) -> Result<usize, Error> {
    let sidecar = features.with_extension("json");
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        file: sidecar.display().to_string(),
        message: e.to_string(),
    })?;
    value
        .get("k")
        .and_then(|v| v.as_u64())
        .map(|k| k as usize)
        .ok_or_else(|| Error::Format {
            file: sidecar.display().to_string(),
            message: "missing integer field 'k'".into(),
        })
}

fn cmd_parcellate(args: ParcellateArgs) -> Result<(), Error> {
    let (ds, _) = pio::read_dataset(&args.data)?;
    let cols = feature_cols_from_sidecar(&args.features)?;
    let feats = pio::read_f64_matrix_with_cols(&args.features, cols)?;
    let params = ParcellateParams {
        k_p: args.parcels,
        dims: args.dims,
        rng_seed: args.seed,
        n_restarts: args.restarts,
    };
    if args.parcels > ds.n_voxels() / 2 {
        eprintln!(
            "parcellate: warning: {} parcels on {} voxels",
            args.parcels,
            ds.n_voxels()
        );
    }
    let out = parcellate_pipeline(&feats, &ds.grid, &params, FeatureProvenance::Direct)?;
    if !out.geodesic_connected {
        eprintln!("parcellate: warning: voxel graph is disconnected, using finite surrogate");
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_labels_csv(
        &args.out.join("labels.csv"),
        &ds.grid,
        &out.parcellation.labels,
    )?;
    pio::write_label_volume(
        &args.out.join("label_volume"),
        &ds.grid,
        &out.parcellation.labels,
        ds.tr_seconds,
    )?;
    pio::write_f64_matrix(&args.out.join("embedding.f64"), &out.embedding)?;
    eprintln!(
        "parcellate: {} parcels over {} voxels -> {}",
        out.parcellation.k,
        ds.n_voxels(),
        args.out.display()
    );
    Ok(())
}

fn write_labels_csv(
    path: &Path,
    grid: &parcelforge_core::grid::VolumeGrid,
    labels: &[usize],
) -> Result<(), Error> {
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
    pio::write_csv(path, &["x", "y", "z", "row", "label"], &rows)
}

fn read_labels_csv(path: &Path, n_voxels: usize) -> Result<Vec<usize>, Error> {
    let (header, m) = pio::read_numeric_csv(path)?;
    let label_col = match header {
        Some(h) => h
            .iter()
            .position(|c| c == "label")
            .ok_or_else(|| Error::Format {
                file: path.display().to_string(),
                message: "no 'label' column".into(),
            })?,
        None => m.cols() - 1,
    };
    let row_col = 3.min(m.cols().saturating_sub(2));
    if m.rows() != n_voxels {
        return Err(Error::Shape(format!(
            "labels file has {} rows for {} voxels",
            m.rows(),
            n_voxels
        )));
    }
    let mut labels = vec![0usize; n_voxels];
    for i in 0..m.rows() {
        let row = m[(i, row_col)] as usize;
        if row >= n_voxels {
            return Err(Error::Index(format!("label row {row} out of range")));
        }
        labels[row] = m[(i, label_col)] as usize;
    }
    Ok(labels)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let (ds, design) = pio::read_dataset(&args.data)?;
    let design = design.ok_or_else(|| {
        Error::Param("dataset directory has no design.csv; evaluation needs a design".into())
    })?;
    let labels = read_labels_csv(&args.labels, ds.n_voxels())?;
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let parc = Parcellation {
        labels,
        k,
        provenance: FeatureProvenance::Direct,
        rng_seed: 0,
    };
    let eq6 = if args.eq6_literal {
        Eq6Mode::Literal
    } else {
        match args.eq6 {
            Eq6Arg::Sqrt => Eq6Mode::Sqrt,
            Eq6Arg::Literal => Eq6Mode::Literal,
        }
    };

    let xc = parcelforge_core::dataset::center_rows(&ds.x);
    let (x0, _) = parcelforge_core::dataset::unit_normalize_rows(&xc);
    let pca = pca_decompose(&xc)?;
    let policy = TruncationPolicy {
        drop_leading: args.drop_leading,
        drop_trailing: args.drop_trailing,
        variance_floor_fraction: args.variance_floor,
    };
    let truncated = truncate(&pca, &policy)?;

    let glm = glm_tvalues(&ds.x, &design)?;
    let pls = pls_tmap(&x0, &design, &truncated.scores, eq6)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    pio::write_f64_matrix(&args.out.join("tmap_glm.f64"), &glm.t)?;
    pio::write_f64_matrix(&args.out.join("tmap_pls.f64"), &pls.t)?;

    let mut rows = Vec::new();
    for stat in [&glm, &pls] {
        let report = intra_parcel_variance(stat, &parc)?;
        for (p, v) in report.v.iter().enumerate() {
            rows.push(vec![
                report.method_tag.clone(),
                p.to_string(),
                format!("{v}"),
            ]);
        }
        eprintln!(
            "evaluate: {} mean v = {} (q1 {}, q3 {})",
            report.method_tag,
            report.mean(),
            report.quartiles.q1,
            report.quartiles.q3
        );
        let threshold = match stat.kind {
            parcelforge_core::evaluate::StatKind::Glm => args.glm_threshold,
            parcelforge_core::evaluate::StatKind::Pls => args.pls_threshold,
        };
        let mut activated = 0usize;
        for p in 0..parc.k {
            let members: Vec<usize> = (0..parc.labels.len())
                .filter(|&i| parc.labels[i] == p)
                .collect();
            for j in 0..stat.t.cols() {
                let mean_t: f64 =
                    members.iter().map(|&i| stat.t[(i, j)]).sum::<f64>() / members.len() as f64;
                if mean_t > threshold {
                    activated += 1;
                }
            }
        }
        eprintln!(
            "evaluate: {} parcel-regressor pairs above the {} threshold",
            activated, stat.kind
        );
    }
    pio::write_csv(
        &args.out.join("report.csv"),
        &["method", "parcel", "v"],
        &rows,
    )?;

    if let Some(truth_path) = &args.truth {
        let truth = read_labels_csv(truth_path, ds.n_voxels())?;
        let ari = adjusted_rand(&parc.labels, &truth)?;
        pio::write_csv(
            &args.out.join("ari.csv"),
            &["method", "ari"],
            &[vec!["labels".into(), format!("{ari}")]],
        )?;
        eprintln!("evaluate: adjusted Rand index vs truth = {ari}");
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let text = if args.config == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| Error::io("stdin", e))?;
        buf
    } else {
        std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?
    };
    let config = PipelineConfig::parse(&text)?;
    let outcome = run_pipeline(&config, &args.out)?;
    println!(
        "{:016x}  {}",
        pio::fnv1a64(outcome.manifest_text.as_bytes()),
        outcome.out_dir.join("manifest.txt").display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut method = String::new();
        let mut values: Vec<f64> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Format {
                    file: path.display().to_string(),
                    message: format!("line {}: expected method,parcel,v", i + 1),
                });
            }
            method = cols[0].to_string();
            values.push(cols[2].trim().parse().map_err(|_| Error::Format {
                file: path.display().to_string(),
                message: format!("line {}: bad v", i + 1),
            })?);
        }
        if values.is_empty() {
            return Err(Error::Format {
                file: path.display().to_string(),
                message: "no parcel rows".into(),
            });
        }
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        reports.push(parcelforge_core::evaluate::ParcelVarianceReport {
            v: values,
            quartiles: parcelforge_core::evaluate::Quartiles {
                q1: quantile_sorted(&sorted, 0.25),
                median: quantile_sorted(&sorted, 0.5),
                q3: quantile_sorted(&sorted, 0.75),
            },
            method_tag: method,
            n_singletons: 0,
        });
    }
    let table = compare_methods(&reports)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                format!("{}", r.mean),
                format!("{}", r.q1),
                format!("{}", r.q3),
            ]
        })
        .collect();
    pio::write_csv(&args.out, &["method", "mean", "q1", "q3"], &rows)?;
    eprintln!("compare: wrote {}", args.out.display());
    Ok(())
}
