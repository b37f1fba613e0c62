//! Choosing the number of clusters by bootstrap loss rank, with the
//! Calinski-Harabasz index as the classical baseline.
//!
//! The loss of a clustering is the within-cluster sum of pairwise squared
//! Euclidean dissimilarities; the loss rank of `K` is the fraction of
//! bootstrap resamples whose refitted loss is at most the actual one.

use rand::distributions::Distribution;
use rand::Rng;
use statrs::distribution::Normal;

use crate::error::{Error, Result};
use crate::resample::{bootstrap_rows, SeedSpec};
use crate::LossRankEstimate;

/// `n` points in `d` dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("points must share one dimension"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        Ok(PointSet { data, dim })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The multiset of rows selected by `indices` (bootstrap semantics:
    /// duplicates stay duplicates).
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        PointSet {
            data,
            dim: self.dim,
        }
    }
}

/// Squared Euclidean distance, the default dissimilarity.
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// An assignment of points to `1..=k` clusters (stored 0-based) together
/// with the fitted K-means objective (within-cluster sum of squared
/// distances to centroids).
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    assignment: Vec<usize>,
    k: usize,
    objective: f64,
}

impl Clustering {
    pub fn new(assignment: Vec<usize>, k: usize, objective: f64) -> Result<Self> {
        if k == 0 || k > assignment.len() {
            return Err(Error::invalid("cluster count must be in 1..=n"));
        }
        if assignment.iter().any(|&c| c >= k) {
            return Err(Error::invalid("cluster id out of range"));
        }
        if !(objective >= 0.0) {
            return Err(Error::invalid("objective must be >= 0"));
        }
        Ok(Clustering {
            assignment,
            k,
            objective,
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }
}

fn centroids(points: &PointSet, assignment: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let d = points.dim();
    let mut sums = vec![0.0; k * d];
    let mut sizes = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        sizes[c] += 1;
        for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(points.point(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if sizes[c] > 0 {
            for s in sums[c * d..(c + 1) * d].iter_mut() {
                *s /= sizes[c] as f64;
            }
        }
    }
    (sums, sizes)
}

fn assign(points: &PointSet, centers: &[f64], k: usize, assignment: &mut [usize]) -> f64 {
    let d = points.dim();
    let mut objective = 0.0;
    for i in 0..points.len() {
        let p = points.point(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = squared_euclidean(p, &centers[c * d..(c + 1) * d]);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        assignment[i] = best;
        objective += best_d;
    }
    objective
}

/// K-means++ seeding: first center uniform, later centers proportional to
/// squared distance from the nearest chosen one.
fn seed_centers<R: Rng>(points: &PointSet, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len();
    let d = points.dim();
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centers.extend_from_slice(points.point(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(points.point(i), points.point(first)))
        .collect();
    while centers.len() < k * d {
        let total: f64 = nearest.iter().sum();
        let chosen = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.extend_from_slice(points.point(chosen));
        let c = &centers[centers.len() - d..];
        for i in 0..n {
            let dist = squared_euclidean(points.point(i), c);
            if dist < nearest[i] {
                nearest[i] = dist;
            }
        }
    }
    centers
}

const LLOYD_MAX_ITER: usize = 200;

fn lloyd<R: Rng>(points: &PointSet, k: usize, rng: &mut R) -> (Vec<usize>, f64) {
    let n = points.len();
    let d = points.dim();
    let mut centers = seed_centers(points, k, rng);
    let mut assignment = vec![0usize; n];
    let mut objective = assign(points, &centers, k, &mut assignment);
    for _ in 0..LLOYD_MAX_ITER {
        let (mut new_centers, sizes) = centroids(points, &assignment, k);
        // repair empty clusters: park each on the currently worst-fit point
        let mut repaired = false;
        if sizes.iter().any(|&s| s == 0) {
            let mut taken = vec![false; n];
            for c in 0..k {
                if sizes[c] > 0 {
                    continue;
                }
                let mut worst = usize::MAX;
                let mut worst_d = -1.0;
                for i in 0..n {
                    if taken[i] {
                        continue;
                    }
                    let dist = squared_euclidean(
                        points.point(i),
                        &centers[assignment[i] * d..(assignment[i] + 1) * d],
                    );
                    if dist > worst_d {
                        worst_d = dist;
                        worst = i;
                    }
                }
                if worst != usize::MAX {
                    taken[worst] = true;
                    new_centers[c * d..(c + 1) * d].copy_from_slice(points.point(worst));
                    repaired = true;
                }
            }
        }
        centers = new_centers;
        let previous = assignment.clone();
        let new_objective = assign(points, &centers, k, &mut assignment);
        debug_assert!(
            new_objective <= objective * (1.0 + 1e-12) + 1e-12,
            "objective rose: {objective} -> {new_objective}"
        );
        objective = new_objective;
        if assignment == previous && !repaired {
            break;
        }
    }
    (assignment, objective)
}

/// Lloyd's algorithm with K-means++ seeding, best of `restarts` runs by
/// objective; empty clusters are repaired by reseeding them on the point
/// farthest from its current centroid.
pub fn kmeans(points: &PointSet, k: usize, restarts: usize, seed: SeedSpec) -> Result<Clustering> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("cannot cluster an empty point set"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cluster count {k} must be in 1..={n}")));
    }
    if restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts {
        let mut rng = seed.substream(r as u64).rng();
        let (assignment, objective) = lloyd(points, k, &mut rng);
        if best.as_ref().map_or(true, |(_, o)| objective < *o) {
            best = Some((assignment, objective));
        }
    }
    let (assignment, objective) = best.expect("at least one restart ran");
    Clustering::new(assignment, k, objective)
}

/// Within-cluster sum of dissimilarities: half the sum of `d(x_i, x_j)`
/// over ordered pairs inside each cluster, with a caller-chosen `d`.
pub fn within_dissimilarity_with<D>(
    points: &PointSet,
    clustering: &Clustering,
    dissimilarity: D,
) -> Result<f64>
where
    D: Fn(&[f64], &[f64]) -> f64,
{
    if clustering.assignment().len() != points.len() {
        return Err(Error::invalid("clustering does not match the point set"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clustering.k()];
    for (i, &c) in clustering.assignment().iter().enumerate() {
        members[c].push(i);
    }
    let mut total = 0.0;
    for cluster in &members {
        for &i in cluster {
            for &j in cluster {
                if i != j {
                    total += dissimilarity(points.point(i), points.point(j));
                }
            }
        }
    }
    Ok(total / 2.0)
}

/// [`within_dissimilarity_with`] under squared Euclidean distance, the
/// loss used by the bootstrap loss rank.
pub fn within_dissimilarity(points: &PointSet, clustering: &Clustering) -> Result<f64> {
    within_dissimilarity_with(points, clustering, squared_euclidean)
}

/// The Calinski-Harabasz index `(B/(K-1)) / (W/(n-K))` built from the
/// classical sum-of-squares decomposition (`W` = within-cluster SS around
/// centroids, `B` = total SS minus `W`). Undefined at `K = 1` and `K = n`.
pub fn ch_criterion(points: &PointSet, clustering: &Clustering) -> Result<f64> {
    let n = points.len();
    if clustering.assignment().len() != n {
        return Err(Error::invalid("clustering does not match the point set"));
    }
    let k = clustering.k();
    if k == 1 {
        return Err(Error::UndefinedCriterion(
            "Calinski-Harabasz is not defined for K = 1".into(),
        ));
    }
    if k >= n {
        return Err(Error::UndefinedCriterion(
            "Calinski-Harabasz is not defined for K = n".into(),
        ));
    }
    let d = points.dim();
    let (centers, _) = centroids(points, clustering.assignment(), k);
    let mut within = 0.0;
    for (i, &c) in clustering.assignment().iter().enumerate() {
        within += squared_euclidean(points.point(i), &centers[c * d..(c + 1) * d]);
    }
    let grand = centroids(points, &vec![0usize; n], 1).0;
    let total: f64 = (0..n)
        .map(|i| squared_euclidean(points.point(i), &grand))
        .sum();
    let between = (total - within).max(0.0);
    if within == 0.0 {
        return Ok(if between > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok((between / (k as f64 - 1.0)) / (within / (n - k) as f64))
}

// Substream lanes inside a single loss-rank evaluation.
const LANE_ACTUAL_FIT: u64 = 0;
const LANE_BOOT_ROWS: u64 = 1;
const LANE_BOOT_FIT: u64 = 2;

/// Bootstrap loss rank of using `k` clusters: each resample draws rows with
/// replacement, refits K-means with the same restart budget, and counts a
/// hit when its within-cluster dissimilarity is at most the actual one.
pub fn loss_rank_clusters(
    points: &PointSet,
    k: usize,
    resamples: u32,
    restarts: usize,
    seed: SeedSpec,
) -> Result<LossRankEstimate> {
    if resamples == 0 {
        return Err(Error::invalid("need at least one bootstrap resample"));
    }
    let fit = kmeans(points, k, restarts, seed.substream(LANE_ACTUAL_FIT))?;
    let actual = within_dissimilarity(points, &fit)?;
    let rows_lane = seed.substream(LANE_BOOT_ROWS);
    let fit_lane = seed.substream(LANE_BOOT_FIT);
    let mut hits = 0u32;
    for b in 0..resamples {
        let indices = bootstrap_rows(points.len(), rows_lane.substream(b as u64))?;
        let resampled = points.select(&indices);
        let refit = kmeans(&resampled, k, restarts, fit_lane.substream(b as u64))?;
        let loss = within_dissimilarity(&resampled, &refit)?;
        if loss <= actual {
            hits += 1;
        }
    }
    Ok(LossRankEstimate::new(hits, resamples))
}

/// Which criterion drives [`select_num_clusters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterCriterion {
    LossRank,
    CalinskiHarabasz,
}

/// Picks the number of clusters: the loss rank is minimized over
/// `1..=k_max`, Calinski-Harabasz is maximized over `2..=min(k_max, n-1)`.
/// Ties go to the smaller K.
pub fn select_num_clusters(
    points: &PointSet,
    k_max: usize,
    resamples: u32,
    restarts: usize,
    seed: SeedSpec,
    criterion: ClusterCriterion,
) -> Result<usize> {
    let n = points.len();
    if k_max == 0 || k_max > n {
        return Err(Error::invalid(format!("k_max must be in 1..={n}")));
    }
    match criterion {
        ClusterCriterion::LossRank => {
            let mut best_k = 1usize;
            let mut best_hits = u32::MAX;
            for k in 1..=k_max {
                let estimate =
                    loss_rank_clusters(points, k, resamples, restarts, seed.substream(k as u64))?;
                if estimate.hits() < best_hits {
                    best_hits = estimate.hits();
                    best_k = k;
                }
            }
            Ok(best_k)
        }
        ClusterCriterion::CalinskiHarabasz => {
            let upper = k_max.min(n.saturating_sub(1));
            if upper < 2 {
                return Err(Error::invalid(
                    "Calinski-Harabasz needs candidates with 2 <= K <= n-1",
                ));
            }
            let mut best_k = 0usize;
            let mut best_value = f64::NEG_INFINITY;
            for k in 2..=upper {
                let fit = kmeans(points, k, restarts, seed.substream(k as u64))?;
                let value = ch_criterion(points, &fit)?;
                if value > best_value {
                    best_value = value;
                    best_k = k;
                }
            }
            Ok(best_k)
        }
    }
}

/// Concatenated blocks of `per_cluster` draws from `N(mean, sigma^2 I)` for
/// each mean; `sigma` is the per-coordinate standard deviation.
pub fn generate_gaussian_clusters(
    means: &[Vec<f64>],
    sigma: f64,
    per_cluster: usize,
    seed: SeedSpec,
) -> Result<PointSet> {
    if means.is_empty() {
        return Err(Error::invalid("need at least one cluster mean"));
    }
    let dim = means[0].len();
    if dim == 0 || means.iter().any(|m| m.len() != dim) {
        return Err(Error::invalid("means must share one nonzero dimension"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed.rng();
    let mut data = Vec::with_capacity(means.len() * per_cluster * dim);
    for mean in means {
        for _ in 0..per_cluster {
            for &mu in mean {
                data.push(mu + sigma * standard.sample(&mut rng));
            }
        }
    }
    Ok(PointSet { data, dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[[f64; 2]]) -> PointSet {
        PointSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn kmeans_one_cluster_is_the_mean() {
        let p = points(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]);
        let c = kmeans(&p, 1, 3, SeedSpec::root(1)).unwrap();
        assert_eq!(c.assignment(), &[0, 0, 0]);
        // total sum of squares around the mean (1, 1)
        let expected = (1.0 + 1.0) + (1.0 + 1.0) + (0.0 + 4.0);
        assert!((c.objective() - expected).abs() < 1e-12);
    }

    #[test]
    fn kmeans_n_clusters_is_free() {
        let p = points(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]);
        let c = kmeans(&p, 3, 5, SeedSpec::root(2)).unwrap();
        assert_eq!(c.objective(), 0.0);
        let mut ids = c.assignment().to_vec();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn kmeans_recovers_two_far_groups() {
        let p = points(&[
            [0.0, 0.1],
            [0.1, -0.1],
            [-0.1, 0.0],
            [100.0, 100.1],
            [100.1, 99.9],
            [99.9, 100.0],
        ]);
        let c = kmeans(&p, 2, 5, SeedSpec::root(3)).unwrap();
        let a = c.assignment();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[1], a[2]);
        assert_eq!(a[3], a[4]);
        assert_eq!(a[4], a[5]);
        assert_ne!(a[0], a[3]);
    }

    #[test]
    fn kmeans_validates_arguments() {
        let p = points(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(kmeans(&p, 0, 1, SeedSpec::root(0)).is_err());
        assert!(kmeans(&p, 3, 1, SeedSpec::root(0)).is_err());
        assert!(kmeans(&p, 1, 0, SeedSpec::root(0)).is_err());
    }

    #[test]
    fn within_dissimilarity_singletons_are_zero() {
        let p = points(&[[1.0, 2.0], [3.0, 4.0]]);
        let c = Clustering::new(vec![0, 1], 2, 0.0).unwrap();
        assert_eq!(within_dissimilarity(&p, &c).unwrap(), 0.0);
    }

    #[test]
    fn within_dissimilarity_hand_value() {
        // one cluster holding (0,0) and (0,2): half of (4 + 4)
        let p = points(&[[0.0, 0.0], [0.0, 2.0]]);
        let c = Clustering::new(vec![0, 0], 1, 2.0).unwrap();
        assert_eq!(within_dissimilarity(&p, &c).unwrap(), 4.0);
    }

    #[test]
    fn pairwise_equals_size_weighted_scatter() {
        // W (pairwise, squared Euclidean) = sum_k n_k * SS_k
        let p = generate_gaussian_clusters(
            &[vec![0.0, 0.0], vec![4.0, 1.0]],
            1.5,
            9,
            SeedSpec::root(11),
        )
        .unwrap();
        let c = kmeans(&p, 3, 4, SeedSpec::root(12)).unwrap();
        let w = within_dissimilarity(&p, &c).unwrap();
        let (centers, sizes) = centroids(&p, c.assignment(), c.k());
        let mut expected = 0.0;
        for (i, &cl) in c.assignment().iter().enumerate() {
            expected += sizes[cl] as f64
                * squared_euclidean(p.point(i), &centers[cl * 2..cl * 2 + 2]);
        }
        assert!((w - expected).abs() <= 1e-9 * expected.max(1.0), "{w} vs {expected}");
    }

    #[test]
    fn ch_hand_value() {
        let p = points(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]);
        let c = Clustering::new(vec![0, 0, 1, 1], 2, 1.0).unwrap();
        let ch = ch_criterion(&p, &c).unwrap();
        assert!((ch - 200.0).abs() < 1e-9, "ch = {ch}");
    }

    #[test]
    fn ch_rejects_k1_and_kn() {
        let p = points(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let k1 = Clustering::new(vec![0, 0, 0], 1, 1.0).unwrap();
        assert!(matches!(
            ch_criterion(&p, &k1),
            Err(Error::UndefinedCriterion(_))
        ));
        let kn = Clustering::new(vec![0, 1, 2], 3, 0.0).unwrap();
        assert!(matches!(
            ch_criterion(&p, &kn),
            Err(Error::UndefinedCriterion(_))
        ));
    }

    #[test]
    fn loss_rank_values_stay_in_range() {
        let p = generate_gaussian_clusters(&[vec![0.0, 0.0]], 1.0, 12, SeedSpec::root(21)).unwrap();
        for k in [1usize, 3] {
            let lr = loss_rank_clusters(&p, k, 40, 4, SeedSpec::root(22)).unwrap();
            assert!(lr.value() >= 0.0 && lr.value() <= 1.0);
        }
    }

    #[test]
    fn loss_rank_saturated_ties_to_one() {
        let p = points(&[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]]);
        // K = n: every fit has loss 0, every resample ties
        let lr = loss_rank_clusters(&p, 4, 30, 3, SeedSpec::root(23)).unwrap();
        assert_eq!(lr.value(), 1.0);
    }

    #[test]
    fn select_k_max_one_returns_one() {
        let p = points(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let k = select_num_clusters(&p, 1, 10, 2, SeedSpec::root(4), ClusterCriterion::LossRank)
            .unwrap();
        assert_eq!(k, 1);
    }

    #[test]
    fn select_finds_two_tight_clusters() {
        // separation 5 sigma
        let p = generate_gaussian_clusters(
            &[vec![0.0, 0.0], vec![0.0, 25.0]],
            5.0,
            30,
            SeedSpec::root(31),
        )
        .unwrap();
        let by_lr =
            select_num_clusters(&p, 5, 60, 8, SeedSpec::root(32), ClusterCriterion::LossRank)
                .unwrap();
        let by_ch = select_num_clusters(
            &p,
            5,
            60,
            8,
            SeedSpec::root(32),
            ClusterCriterion::CalinskiHarabasz,
        )
        .unwrap();
        assert_eq!(by_lr, 2);
        assert_eq!(by_ch, 2);
    }

    #[test]
    fn selection_is_deterministic() {
        let p = generate_gaussian_clusters(
            &[vec![0.0, 0.0], vec![4.0, 4.0]],
            2.0,
            20,
            SeedSpec::root(41),
        )
        .unwrap();
        for criterion in [ClusterCriterion::LossRank, ClusterCriterion::CalinskiHarabasz] {
            let a = select_num_clusters(&p, 4, 30, 5, SeedSpec::root(42), criterion).unwrap();
            let b = select_num_clusters(&p, 4, 30, 5, SeedSpec::root(42), criterion).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gaussian_blocks_center_on_their_means() {
        let means = vec![vec![0.0, 0.0], vec![0.0, 5.0]];
        let per = 4000usize;
        let p = generate_gaussian_clusters(&means, 1.0, per, SeedSpec::root(51)).unwrap();
        assert_eq!(p.len(), 2 * per);
        for (block, mean) in means.iter().enumerate() {
            for coord in 0..2 {
                let avg: f64 = (0..per)
                    .map(|i| p.point(block * per + i)[coord])
                    .sum::<f64>()
                    / per as f64;
                let band = 4.0 / (per as f64).sqrt();
                assert!((avg - mean[coord]).abs() < band, "block {block} coord {coord}: {avg}");
            }
        }
    }

    #[test]
    fn gaussian_generator_accepts_empty_blocks() {
        let p = generate_gaussian_clusters(&[vec![1.0]], 1.0, 0, SeedSpec::root(6)).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn gaussian_generator_validates() {
        assert!(generate_gaussian_clusters(&[], 1.0, 5, SeedSpec::root(0)).is_err());
        assert!(generate_gaussian_clusters(&[vec![0.0]], 0.0, 5, SeedSpec::root(0)).is_err());
        assert!(
            generate_gaussian_clusters(&[vec![0.0], vec![0.0, 1.0]], 1.0, 5, SeedSpec::root(0))
                .is_err()
        );
    }

    #[test]
    fn lloyd_objective_never_rises() {
        // debug_assert inside lloyd() guards each iteration; drive it hard
        let p = generate_gaussian_clusters(
            &[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]],
            2.0,
            25,
            SeedSpec::root(61),
        )
        .unwrap();
        for k in 1..=6 {
            let _ = kmeans(&p, k, 8, SeedSpec::root(62)).unwrap();
        }
    }
}
