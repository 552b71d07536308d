//! Cross-subject matching of independent components: pairwise time-course
//! correlations, per-subject z-normalization, the min-symmetrized
//! similarity matrix, Ward-linkage clustering of the pooled ICs, and
//! selection of task-related clusters.

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::ica::ICDecomposition;
use crate::linalg::{mean, pearson, sample_std, Mat};
use crate::scalar::{fl, Scalar};

/// Whether correlations enter the normalization signed or as
/// absolute values. ICA has a sign indeterminacy, so `Absolute` is the
/// default in the pipeline; `Signed` follows the formula literally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMode {
    Signed,
    Absolute,
}

/// Pearson correlation of two IC time courses.
pub fn ic_correlation<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    pearson(a, b)
}

/// Z-scores with the sample standard deviation (divisor n-1).
pub fn zscores<F: Scalar>(values: &[F]) -> Result<Vec<F>> {
    if values.len() < 2 {
        return Err(Error::Param(
            "z-normalization needs at least 2 values".into(),
        ));
    }
    let m = mean(values);
    let sd = sample_std(values);
    if sd <= F::zero() {
        return Err(Error::Degenerate(
            "all correlations equal: zero standard deviation".into(),
        ));
    }
    Ok(values.iter().map(|&v| (v - m) / sd).collect())
}

/// Correlations of one IC against every IC of another subject, z-scored
/// over that subject's components.
pub fn normalized_correlation<F: Scalar>(
    ic: &[F],
    against: &ICDecomposition<F>,
    mode: CorrelationMode,
) -> Result<Vec<F>> {
    if against.n_components() < 2 {
        return Err(Error::Param(
            "normalization target needs at least 2 ICs".into(),
        ));
    }
    let mut rhos = Vec::with_capacity(against.n_components());
    for j in 0..against.n_components() {
        let rho = ic_correlation(ic, &against.timecourse(j))?;
        rhos.push(match mode {
            CorrelationMode::Signed => rho,
            CorrelationMode::Absolute => rho.abs(),
        });
    }
    zscores(&rhos)
}

/// Min-symmetrized similarity over the pooled ICs of a cohort. Same-subject
/// pairs are zero by construction.
#[derive(Debug, Clone)]
pub struct ICSimilarity<F> {
    /// M x M symmetric similarity matrix.
    pub s: Mat<F>,
    /// Subject index (position in the input slice) per pooled IC.
    pub owner: Vec<usize>,
    /// (subject index, local IC index) per pooled IC.
    pub pooled: Vec<(usize, usize)>,
}

impl<F: Scalar> ICSimilarity<F> {
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }
}

pub fn similarity_matrix<F: Scalar>(
    cohort_ics: &[ICDecomposition<F>],
    mode: CorrelationMode,
) -> Result<ICSimilarity<F>> {
    if cohort_ics.len() < 2 {
        return Err(Error::Param("similarity needs at least 2 subjects".into()));
    }
    let t = cohort_ics[0].n_frames();
    for (s, dec) in cohort_ics.iter().enumerate() {
        if dec.n_components() < 2 {
            return Err(Error::Param(format!("subject {s} has fewer than 2 ICs")));
        }
        if dec.n_frames() != t {
            return Err(Error::Shape(format!(
                "subject {s} has {} frames, expected {t}",
                dec.n_frames()
            )));
        }
    }

    let mut pooled = Vec::new();
    for (s, dec) in cohort_ics.iter().enumerate() {
        for i in 0..dec.n_components() {
            pooled.push((s, i));
        }
    }
    let m = pooled.len();
    let owner: Vec<usize> = pooled.iter().map(|&(s, _)| s).collect();

    // znorm[i][j]: z-score of rho(i, j) within rho(i, all ICs of owner(j))
    let mut znorm = Mat::zeros(m, m);
    for (i, &(si, ii)) in pooled.iter().enumerate() {
        let ic = cohort_ics[si].timecourse(ii);
        let mut offset = 0usize;
        for (sj, dec) in cohort_ics.iter().enumerate() {
            let nb = dec.n_components();
            if sj != si {
                let z = normalized_correlation(&ic, dec, mode).map_err(|e| match e {
                    Error::Degenerate(msg) => {
                        Error::Degenerate(format!("pooled IC {i} vs subject {sj}: {msg}"))
                    }
                    other => other,
                })?;
                for (jj, &val) in z.iter().enumerate() {
                    znorm[(i, offset + jj)] = val;
                }
            }
            offset += nb;
        }
    }

    let mut s = Mat::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            if owner[i] != owner[j] {
                let v = znorm[(i, j)].min(znorm[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
    }
    Ok(ICSimilarity { s, owner, pooled })
}

/// Flat clustering of the pooled ICs.
#[derive(Debug, Clone)]
pub struct ICClustering<F> {
    /// Cluster id per pooled IC; ids are ordered by each cluster's
    /// smallest pooled index.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    /// Per-cluster, per-regressor mean |correlation|; filled by
    /// `select_task_clusters`.
    pub cluster_task_scores: Vec<Vec<F>>,
}

/// Agglomerative clustering with Ward linkage on the distance
/// `d = S_max - S` (same-subject pairs sit at `S_max`, so they repel).
/// The Lance-Williams recurrence runs on squared distances; merge-cost
/// ties break toward the smallest pooled index pair.
pub fn ward_cluster<F: Scalar>(
    sim: &ICSimilarity<F>,
    n_clusters: usize,
) -> Result<ICClustering<F>> {
    let m = sim.len();
    if n_clusters == 0 || n_clusters > m {
        return Err(Error::Param(format!(
            "n_clusters must be in 1..={m}, got {n_clusters}"
        )));
    }
    let s_max = sim
        .s
        .data()
        .iter()
        .fold(F::neg_infinity(), |acc, &v| acc.max(v));

    // squared distances between active clusters
    let mut d2 = Mat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let d = s_max - sim.s[(i, j)];
                d2[(i, j)] = d * d;
            }
        }
    }

    let mut active: Vec<bool> = vec![true; m];
    let mut size: Vec<usize> = vec![1; m];
    let mut rep: Vec<usize> = (0..m).collect(); // smallest member index
    let mut members: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();

    let mut n_active = m;
    while n_active > n_clusters {
        // find the cheapest merge; ties by smallest (rep_a, rep_b)
        let mut best: Option<(usize, usize)> = None;
        let mut best_cost = F::infinity();
        for a in 0..m {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..m {
                if !active[b] {
                    continue;
                }
                let cost = d2[(a, b)];
                let better = match cost.partial_cmp(&best_cost) {
                    Some(std::cmp::Ordering::Less) => true,
                    Some(std::cmp::Ordering::Equal) => match best {
                        Some((pa, pb)) => {
                            let (ra, rb) = (rep[a].min(rep[b]), rep[a].max(rep[b]));
                            let (qa, qb) = (rep[pa].min(rep[pb]), rep[pa].max(rep[pb]));
                            (ra, rb) < (qa, qb)
                        }
                        None => true,
                    },
                    _ => false,
                };
                if better {
                    best_cost = cost;
                    best = Some((a, b));
                }
            }
        }
        let (a, b) = best.expect("at least two active clusters");

        // Lance-Williams (Ward) update of every other active cluster
        let (na, nb) = (fl::<F>(size[a] as f64), fl::<F>(size[b] as f64));
        let dab = d2[(a, b)];
        for x in 0..m {
            if !active[x] || x == a || x == b {
                continue;
            }
            let nx = fl::<F>(size[x] as f64);
            let updated =
                ((nx + na) * d2[(x, a)] + (nx + nb) * d2[(x, b)] - nx * dab) / (nx + na + nb);
            d2[(x, a)] = updated;
            d2[(a, x)] = updated;
        }
        active[b] = false;
        size[a] += size[b];
        rep[a] = rep[a].min(rep[b]);
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        n_active -= 1;
    }

    // label clusters by ascending representative
    let mut clusters: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
    clusters.sort_by_key(|&i| rep[i]);
    let mut labels = vec![0usize; m];
    for (label, &c) in clusters.iter().enumerate() {
        for &mem in &members[c] {
            labels[mem] = label;
        }
    }
    Ok(ICClustering {
        labels,
        n_clusters,
        cluster_task_scores: Vec::new(),
    })
}

/// Task-cluster selection result.
#[derive(Debug, Clone)]
pub struct TaskSelection<F> {
    /// Cluster x regressor mean |correlation| scores.
    pub scores: Vec<Vec<F>>,
    /// The `n_select` highest-scoring cluster ids, best first.
    pub selected: Vec<usize>,
}

/// Scores every cluster by its best regressor (mean |Pearson| over member
/// IC time courses) and returns the top `n_select` clusters, ties toward
/// the lower cluster id.
pub fn select_task_clusters<F: Scalar>(
    clustering: &ICClustering<F>,
    cohort_ics: &[ICDecomposition<F>],
    design: &DesignMatrix<F>,
    n_select: usize,
) -> Result<TaskSelection<F>> {
    let pooled: Vec<(usize, usize)> = cohort_ics
        .iter()
        .enumerate()
        .flat_map(|(s, dec)| (0..dec.n_components()).map(move |i| (s, i)))
        .collect();
    if pooled.len() != clustering.labels.len() {
        return Err(Error::Shape(format!(
            "{} pooled ICs but {} labels",
            pooled.len(),
            clustering.labels.len()
        )));
    }
    let t = design.n_frames();
    if cohort_ics.iter().any(|d| d.n_frames() != t) {
        return Err(Error::Shape(
            "design and IC time courses must share the sampling rate".into(),
        ));
    }

    let n_r = design.n_regressors();
    let regressors: Vec<Vec<F>> = (0..n_r).map(|k| design.y.col(k)).collect();
    let mut scores = vec![vec![F::zero(); n_r]; clustering.n_clusters];
    let mut counts = vec![0usize; clustering.n_clusters];
    for (pooled_idx, &(s, i)) in pooled.iter().enumerate() {
        let cluster = clustering.labels[pooled_idx];
        let tc = cohort_ics[s].timecourse(i);
        counts[cluster] += 1;
        for (k, reg) in regressors.iter().enumerate() {
            scores[cluster][k] += ic_correlation(&tc, reg)?.abs();
        }
    }
    for (c, row) in scores.iter_mut().enumerate() {
        if counts[c] > 0 {
            for v in row.iter_mut() {
                *v /= fl::<F>(counts[c] as f64);
            }
        }
    }

    let best_of = |c: usize| -> F {
        scores[c]
            .iter()
            .fold(F::neg_infinity(), |acc, &v| acc.max(v))
    };
    let mut order: Vec<usize> = (0..clustering.n_clusters).collect();
    order.sort_by(|&a, &b| {
        best_of(b)
            .partial_cmp(&best_of(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let selected = order
        .into_iter()
        .take(n_select.min(clustering.n_clusters))
        .collect();
    Ok(TaskSelection { scores, selected })
}

/// For each selected cluster, the subject's representative IC: its member
/// with the highest mean similarity to the other members, or, if the
/// subject has no member in the cluster, the subject's IC closest to the
/// cluster. Returns one `(cluster id, pooled IC index)` per cluster.
pub fn ics_for_subject<F: Scalar>(
    subject: usize,
    clustering: &ICClustering<F>,
    sim: &ICSimilarity<F>,
    selected_clusters: &[usize],
) -> Result<Vec<(usize, usize)>> {
    if selected_clusters.is_empty() {
        return Err(Error::Param("no clusters selected".into()));
    }
    if !sim.owner.contains(&subject) {
        return Err(Error::Index(format!("subject {subject} has no ICs")));
    }
    let m = sim.len();
    let mut out = Vec::with_capacity(selected_clusters.len());
    for &cluster in selected_clusters {
        let members: Vec<usize> = (0..m)
            .filter(|&i| clustering.labels[i] == cluster)
            .collect();
        if members.is_empty() {
            return Err(Error::Param(format!("cluster {cluster} is empty")));
        }
        let mine: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| sim.owner[i] == subject)
            .collect();
        let mean_sim_to = |idx: usize, pool: &[usize]| -> F {
            let others: Vec<usize> = pool.iter().copied().filter(|&p| p != idx).collect();
            if others.is_empty() {
                return F::zero();
            }
            let sum = others
                .iter()
                .fold(F::zero(), |acc, &p| acc + sim.s[(idx, p)]);
            sum / fl::<F>(others.len() as f64)
        };
        let candidates: Vec<usize> = if mine.is_empty() {
            (0..m).filter(|&i| sim.owner[i] == subject).collect()
        } else {
            mine
        };
        let mut best = candidates[0];
        let mut best_score = mean_sim_to(best, &members);
        for &cand in &candidates[1..] {
            let score = mean_sim_to(cand, &members);
            if score > best_score {
                best = cand;
                best_score = score;
            }
        }
        out.push((cluster, best));
    }
    Ok(out)
}
