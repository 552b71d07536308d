//! Synthetic multi-subject cohort generator.
//!
//! Ground-truth parcels are connected axis-aligned boxes (with seeded
//! uneven cuts) laid out so task and nuisance parcels interleave in a
//! checkerboard. Task parcels carry a boxcar task design convolved with a
//! canonical double-gamma HRF, phase-staggered per parcel and shifted by a
//! per-subject latency jitter. Nuisance parcels carry a parcel-specific
//! linear drift plus one cohort-shared physiological sinusoid. White noise
//! is added everywhere. Everything is a pure function of the cohort
//! parameters, including the RNG seed.

use crate::dataset::{BoldDataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::grid::VolumeGrid;
use crate::linalg::Mat;
use crate::rng::{self, SeededRng};
use crate::scalar::{fl, Scalar};

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone)]
pub struct SyntheticCohortSpec<F> {
    pub n_subjects: usize,
    pub dims: [usize; 3],
    pub n_true_parcels: usize,
    pub n_frames: usize,
    pub tr_seconds: F,
    pub task_period_seconds: F,
    /// Half-width of the per-subject uniform latency jitter, in seconds.
    pub hrf_latency_jitter_seconds: F,
    pub noise_sigma: F,
    pub rng_seed: u64,
}

impl<F: Scalar> SyntheticCohortSpec<F> {
    fn validate(&self) -> Result<()> {
        let v = self.dims.iter().product::<usize>();
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Spec(format!(
                "dims must be positive: {:?}",
                self.dims
            )));
        }
        if self.n_subjects == 0 {
            return Err(Error::Spec("n_subjects must be positive".into()));
        }
        if self.n_true_parcels == 0 {
            return Err(Error::Spec("n_true_parcels must be positive".into()));
        }
        if self.n_true_parcels > v {
            return Err(Error::Spec(format!(
                "n_true_parcels {} exceeds voxel count {}",
                self.n_true_parcels, v
            )));
        }
        if self.n_frames < 3 {
            return Err(Error::Spec("need at least 3 frames".into()));
        }
        if !(self.tr_seconds > F::zero()) || !(self.task_period_seconds > F::zero()) {
            return Err(Error::Spec("tr and task period must be positive".into()));
        }
        if self.hrf_latency_jitter_seconds < F::zero() || self.noise_sigma < F::zero() {
            return Err(Error::Spec("jitter and noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Role of a ground-truth parcel in the generating model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParcelRole {
    /// Responds to the task with the given design-matrix regressor.
    Task { regressor: usize },
    /// Carries drift and the shared physiological sinusoid.
    Nuisance { index: usize },
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort<F> {
    pub datasets: Vec<BoldDataset<F>>,
    /// Ground-truth parcel id per voxel row (shared grid).
    pub truth_labels: Vec<usize>,
    /// Un-jittered HRF-convolved task regressors, one per task parcel.
    pub design: DesignMatrix<F>,
    /// Latency jitter drawn for each subject, seconds.
    pub per_subject_latency: Vec<F>,
    pub parcel_roles: Vec<ParcelRole>,
}

// ---------------------------------------------------------------------------
// canonical HRF

/// ln Gamma(x) by the Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn gamma_pdf(t: f64, shape: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * t.ln() - t - ln_gamma(shape)).exp()
}

/// Canonical double-gamma HRF: response peak at 6 s, undershoot at 16 s,
/// undershoot ratio 1/6.
pub fn canonical_hrf(t_seconds: f64) -> f64 {
    gamma_pdf(t_seconds, 6.0) - gamma_pdf(t_seconds, 16.0) / 6.0
}

const HRF_SPAN_SECONDS: f64 = 32.0;

/// Boxcar task design (on for the first half of each period) convolved
/// with the canonical HRF on a fine grid, peak-normalized to 1. Sampling
/// handles arbitrary latency shifts by indexing the fine grid.
pub struct TaskResponse {
    fine: Vec<f64>,
    dt: f64,
}

impl TaskResponse {
    pub fn new(
        n_frames: usize,
        tr_seconds: f64,
        period_seconds: f64,
        max_shift_seconds: f64,
    ) -> Self {
        let dt = (tr_seconds / 60.0).min(0.05);
        let span = n_frames as f64 * tr_seconds + max_shift_seconds.abs() + HRF_SPAN_SECONDS;
        let n_fine = (span / dt).ceil() as usize + 1;
        let n_hrf = (HRF_SPAN_SECONDS / dt).ceil() as usize;
        let hrf: Vec<f64> = (0..n_hrf).map(|j| canonical_hrf(j as f64 * dt)).collect();
        let mut fine = vec![0.0; n_fine];
        for (k, f) in fine.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &h) in hrf.iter().enumerate() {
                if j > k {
                    break;
                }
                let tau = (k - j) as f64 * dt;
                if tau.rem_euclid(period_seconds) < period_seconds / 2.0 {
                    acc += h;
                }
            }
            *f = acc * dt;
        }
        let peak = fine.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if peak > 0.0 {
            for v in &mut fine {
                *v /= peak;
            }
        }
        TaskResponse { fine, dt }
    }

    /// Response value at frame `i` for a response delayed by `latency` s.
    pub fn sample(&self, frame: usize, tr_seconds: f64, latency_seconds: f64) -> f64 {
        let t = frame as f64 * tr_seconds - latency_seconds;
        if t < 0.0 {
            return 0.0;
        }
        let idx = (t / self.dt).round() as usize;
        self.fine.get(idx).copied().unwrap_or(0.0)
    }
}

// ---------------------------------------------------------------------------
// ground-truth partition

pub(crate) struct Partition {
    /// Parcel label per cell (linear, x fastest).
    pub labels: Vec<usize>,
    pub roles: Vec<ParcelRole>,
}

fn prime_factors_desc(mut n: usize) -> Vec<usize> {
    let mut f = Vec::new();
    let mut d = 2;
    while d * d <= n {
        while n % d == 0 {
            f.push(d);
            n /= d;
        }
        d += 1;
    }
    if n > 1 {
        f.push(n);
    }
    f.sort_unstable_by(|a, b| b.cmp(a));
    f
}

/// Uneven cut positions splitting an axis of length `len` into `parts`
/// segments of at least one cell each.
fn jittered_cuts(len: usize, parts: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut cuts = Vec::with_capacity(parts + 1);
    cuts.push(0);
    for i in 1..parts {
        let ideal = (len * i) as f64 / parts as f64;
        let jr = ((len as f64 / (3.0 * parts as f64)).round() as usize).max(1);
        let sign = if rng::below(rng, 2) == 0 { -1f64 } else { 1f64 };
        let mag = (1 + rng::below(rng, jr)) as f64;
        let lo = cuts[i - 1] + 1;
        let hi = len - (parts - i); // leave room for the remaining segments
        let c = (ideal + sign * mag).round() as isize;
        cuts.push((c.max(lo as isize) as usize).min(hi));
    }
    cuts.push(len);
    cuts
}

fn assign_roles(parity_of: impl Fn(usize) -> usize, n: usize) -> Vec<ParcelRole> {
    let mut roles = Vec::with_capacity(n);
    let mut task_idx = 0;
    let mut nuis_idx = 0;
    for p in 0..n {
        if parity_of(p) == 0 {
            roles.push(ParcelRole::Task {
                regressor: task_idx,
            });
            task_idx += 1;
        } else {
            roles.push(ParcelRole::Nuisance { index: nuis_idx });
            nuis_idx += 1;
        }
    }
    roles
}

pub(crate) fn partition_grid(dims: [usize; 3], p: usize, rng: &mut SeededRng) -> Partition {
    // try to factor p onto the axes
    let mut b = [1usize; 3];
    let mut feasible = true;
    for f in prime_factors_desc(p) {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..3 {
            if b[a] * f <= dims[a] {
                let ratio = dims[a] as f64 / b[a] as f64;
                if best.map_or(true, |(_, r)| ratio > r) {
                    best = Some((a, ratio));
                }
            }
        }
        match best {
            Some((a, _)) => b[a] *= f,
            None => {
                feasible = false;
                break;
            }
        }
    }

    if feasible {
        let cuts: Vec<Vec<usize>> = (0..3).map(|a| jittered_cuts(dims[a], b[a], rng)).collect();
        let box_of = |coord: usize, axis: usize| -> usize {
            let c = &cuts[axis];
            (1..c.len()).position(|i| coord < c[i]).unwrap()
        };
        let mut labels = vec![0usize; dims[0] * dims[1] * dims[2]];
        for z in 0..dims[2] {
            let bz = box_of(z, 2);
            for y in 0..dims[1] {
                let by = box_of(y, 1);
                for x in 0..dims[0] {
                    let bx = box_of(x, 0);
                    labels[x + dims[0] * (y + dims[1] * z)] = bx + b[0] * (by + b[1] * bz);
                }
            }
        }
        let bgrid = b;
        let roles = assign_roles(
            |label| {
                let bx = label % bgrid[0];
                let rest = label / bgrid[0];
                (bx + rest % bgrid[1] + rest / bgrid[1]) % 2
            },
            p,
        );
        return Partition { labels, roles };
    }

    // fallback: balanced multi-source growth on the grid graph
    let n_cells = dims[0] * dims[1] * dims[2];
    let grid = VolumeGrid::full(dims).expect("full grid");
    let mut labels = vec![usize::MAX; n_cells];
    let mut seeds = Vec::with_capacity(p);
    while seeds.len() < p {
        let c = rng::below(rng, n_cells);
        if !seeds.contains(&c) {
            seeds.push(c);
        }
    }
    let mut frontiers: Vec<std::collections::VecDeque<usize>> = seeds
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            labels[c] = i;
            std::collections::VecDeque::from(vec![c])
        })
        .collect();
    let mut remaining = n_cells - p;
    while remaining > 0 {
        for (region, frontier) in frontiers.iter_mut().enumerate() {
            while let Some(&cell) = frontier.front() {
                let mut claimed = false;
                for nb in grid.neighbors6(grid.row_of_cell(cell).unwrap()) {
                    let nb_cell = grid.cell_of_row(nb);
                    if labels[nb_cell] == usize::MAX {
                        labels[nb_cell] = region;
                        frontier.push_back(nb_cell);
                        remaining -= 1;
                        claimed = true;
                        break;
                    }
                }
                if claimed {
                    break;
                }
                frontier.pop_front();
            }
        }
    }
    let roles = assign_roles(|label| label % 2, p);
    Partition { labels, roles }
}

// ---------------------------------------------------------------------------
// generator

const PHYS_PERIOD_SECONDS: f64 = 11.0;
const PHYS_PHASE: f64 = 0.7;

fn nuisance_drift_coef(index: usize) -> f64 {
    let magnitude = 0.9 * (1.0 + 0.5 * (index / 2) as f64);
    if index % 2 == 0 {
        magnitude
    } else {
        -magnitude
    }
}

fn nuisance_sin_amp(index: usize) -> f64 {
    0.6 + 0.35 * index as f64
}

pub fn generate_synthetic_cohort<F: Scalar>(
    spec: &SyntheticCohortSpec<F>,
) -> Result<SyntheticCohort<F>> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.rng_seed);
    let partition = partition_grid(spec.dims, spec.n_true_parcels, &mut rng);
    let grid = VolumeGrid::full(spec.dims)?;
    let v = grid.n_voxels();
    let t = spec.n_frames;
    let tr = spec.tr_seconds.to_f64().unwrap();
    let period = spec.task_period_seconds.to_f64().unwrap();
    let jitter = spec.hrf_latency_jitter_seconds.to_f64().unwrap();

    let n_task = partition
        .roles
        .iter()
        .filter(|r| matches!(r, ParcelRole::Task { .. }))
        .count();
    let response = TaskResponse::new(t, tr, period, n_task as f64 * period + jitter);
    let parcel_latency = |regressor: usize| regressor as f64 * period / (n_task as f64 + 1.0);

    // design matrix: un-jittered regressors
    let mut design = Mat::zeros(t, n_task);
    for k in 0..n_task {
        for i in 0..t {
            design[(i, k)] = fl::<F>(response.sample(i, tr, parcel_latency(k)));
        }
    }
    let design = DesignMatrix::new(
        design,
        (0..n_task).map(|k| format!("task{}", k + 1)).collect(),
    )?;

    // truth labels in row order (full mask: row order == cell order)
    let truth_labels: Vec<usize> = (0..v)
        .map(|row| partition.labels[grid.cell_of_row(row)])
        .collect();

    let times: Vec<f64> = (0..t).map(|i| i as f64 * tr).collect();
    let ramp: Vec<f64> = (0..t)
        .map(|i| {
            if t > 1 {
                2.0 * i as f64 / (t - 1) as f64 - 1.0
            } else {
                0.0
            }
        })
        .collect();
    let phys: Vec<f64> = times
        .iter()
        .map(|&ti| (std::f64::consts::TAU * ti / PHYS_PERIOD_SECONDS + PHYS_PHASE).sin())
        .collect();

    let mut datasets = Vec::with_capacity(spec.n_subjects);
    let mut per_subject_latency = Vec::with_capacity(spec.n_subjects);
    for _subject in 0..spec.n_subjects {
        let delta = rng::uniform_in(&mut rng, -jitter, jitter);
        per_subject_latency.push(fl::<F>(delta));

        // clean per-parcel time courses for this subject
        let mut parcel_signal: Vec<Vec<f64>> = Vec::with_capacity(spec.n_true_parcels);
        for role in &partition.roles {
            let sig = match *role {
                ParcelRole::Task { regressor } => (0..t)
                    .map(|i| response.sample(i, tr, parcel_latency(regressor) + delta))
                    .collect::<Vec<f64>>(),
                ParcelRole::Nuisance { index } => {
                    let c = nuisance_drift_coef(index);
                    let a = nuisance_sin_amp(index);
                    (0..t).map(|i| c * ramp[i] + a * phys[i]).collect()
                }
            };
            parcel_signal.push(sig);
        }

        let mut x = Mat::zeros(v, t);
        for row in 0..v {
            let sig = &parcel_signal[truth_labels[row]];
            let out = x.row_mut(row);
            for (i, o) in out.iter_mut().enumerate() {
                let noise: F = rng::normal(&mut rng);
                *o = fl::<F>(sig[i]) + noise * spec.noise_sigma;
            }
        }
        datasets.push(BoldDataset::new(grid.clone(), x, spec.tr_seconds)?);
    }

    Ok(SyntheticCohort {
        datasets,
        truth_labels,
        design,
        per_subject_latency,
        parcel_roles: partition.roles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pearson;

    fn base_spec() -> SyntheticCohortSpec<f64> {
        SyntheticCohortSpec {
            n_subjects: 1,
            dims: [6, 6, 2],
            n_true_parcels: 4,
            n_frames: 60,
            tr_seconds: 3.0,
            task_period_seconds: 28.8,
            hrf_latency_jitter_seconds: 0.0,
            noise_sigma: 0.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn hrf_shape() {
        // positive main lobe around 5-7 s, undershoot after ~10 s
        assert!(canonical_hrf(6.0) > canonical_hrf(2.0));
        assert!(canonical_hrf(6.0) > canonical_hrf(12.0));
        assert!(canonical_hrf(15.0) < 0.0);
        assert_eq!(canonical_hrf(0.0), 0.0);
        assert_eq!(canonical_hrf(-1.0), 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticCohortSpec {
            noise_sigma: 0.4,
            hrf_latency_jitter_seconds: 1.5,
            n_subjects: 2,
            ..base_spec()
        };
        let a = generate_synthetic_cohort(&spec).unwrap();
        let b = generate_synthetic_cohort(&spec).unwrap();
        assert_eq!(a.truth_labels, b.truth_labels);
        assert_eq!(a.per_subject_latency, b.per_subject_latency);
        for (da, db) in a.datasets.iter().zip(&b.datasets) {
            assert_eq!(da.x.data(), db.x.data());
        }
        assert_eq!(a.design.y.data(), b.design.y.data());
    }

    #[test]
    fn noiseless_task_voxel_matches_design_column() {
        let cohort = generate_synthetic_cohort(&base_spec()).unwrap();
        let ds = &cohort.datasets[0];
        for (parcel, role) in cohort.parcel_roles.iter().enumerate() {
            if let ParcelRole::Task { regressor } = *role {
                let row = cohort
                    .truth_labels
                    .iter()
                    .position(|&l| l == parcel)
                    .unwrap();
                let rho = pearson(ds.x.row(row), &cohort.design.y.col(regressor)).unwrap();
                assert!(rho >= 0.999, "parcel {parcel}: rho {rho}");
            }
        }
    }

    #[test]
    fn labels_cover_range_and_are_connected() {
        let spec = SyntheticCohortSpec {
            dims: [4, 4, 1],
            n_true_parcels: 2,
            ..base_spec()
        };
        let cohort = generate_synthetic_cohort(&spec).unwrap();
        let grid = &cohort.datasets[0].grid;
        let mut seen = std::collections::BTreeSet::new();
        for &l in &cohort.truth_labels {
            seen.insert(l);
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        // BFS connectivity per label under 6-connectivity
        for label in 0..2 {
            let members: Vec<usize> = (0..grid.n_voxels())
                .filter(|&r| cohort.truth_labels[r] == label)
                .collect();
            let mut visited = std::collections::BTreeSet::new();
            let mut queue = std::collections::VecDeque::from(vec![members[0]]);
            visited.insert(members[0]);
            while let Some(r) = queue.pop_front() {
                for nb in grid.neighbors6(r) {
                    if cohort.truth_labels[nb] == label && visited.insert(nb) {
                        queue.push_back(nb);
                    }
                }
            }
            assert_eq!(visited.len(), members.len(), "label {label} disconnected");
        }
    }

    #[test]
    fn task_and_nuisance_interleave_in_box_layout() {
        let spec = SyntheticCohortSpec {
            dims: [16, 16, 4],
            n_true_parcels: 8,
            ..base_spec()
        };
        let cohort = generate_synthetic_cohort(&spec).unwrap();
        let grid = &cohort.datasets[0].grid;
        let is_nuis = |p: usize| matches!(cohort.parcel_roles[p], ParcelRole::Nuisance { .. });
        for row in 0..grid.n_voxels() {
            let a = cohort.truth_labels[row];
            for nb in grid.neighbors6(row) {
                let b = cohort.truth_labels[nb];
                if a != b && is_nuis(a) && is_nuis(b) {
                    panic!("nuisance parcels {a} and {b} are adjacent");
                }
            }
        }
        let n_task = cohort
            .parcel_roles
            .iter()
            .filter(|r| matches!(r, ParcelRole::Task { .. }))
            .count();
        assert_eq!(n_task, 4);
        assert_eq!(cohort.design.n_regressors(), 4);
    }

    #[test]
    fn oversized_parcel_count_is_spec_error() {
        let spec = SyntheticCohortSpec {
            dims: [2, 2, 1],
            n_true_parcels: 5,
            ..base_spec()
        };
        assert!(matches!(
            generate_synthetic_cohort(&spec),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn fallback_partition_is_connected_and_complete() {
        // 7 does not factor onto [5,5,1] axes (7 > 5), forcing growth
        let mut r = rng::seeded(3);
        let part = partition_grid([5, 5, 1], 7, &mut r);
        let grid = VolumeGrid::full([5, 5, 1]).unwrap();
        let mut counts = vec![0usize; 7];
        for &l in &part.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
        for label in 0..7 {
            let members: Vec<usize> = (0..25).filter(|&c| part.labels[c] == label).collect();
            let mut visited = std::collections::BTreeSet::new();
            let mut queue = std::collections::VecDeque::from(vec![members[0]]);
            visited.insert(members[0]);
            while let Some(cell) = queue.pop_front() {
                let row = grid.row_of_cell(cell).unwrap();
                for nb in grid.neighbors6(row) {
                    let nb_cell = grid.cell_of_row(nb);
                    if part.labels[nb_cell] == label && visited.insert(nb_cell) {
                        queue.push_back(nb_cell);
                    }
                }
            }
            assert_eq!(visited.len(), members.len(), "label {label} disconnected");
        }
    }
}
