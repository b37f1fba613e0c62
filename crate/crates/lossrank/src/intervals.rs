//! The classification loss rank on the intervals model family.
//!
//! Inputs live on `{0, ..., 2^N - 1}` and model `m` consists of the binary
//! classifiers that are constant on each of `2^m` equal dyadic segments.
//! Because the segments decouple under 0-1 loss, the empirical risk
//! minimizer and the Rademacher supremum both reduce to independent
//! per-segment counts, which makes the Monte Carlo loss rank cheap.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::resample::{draw_rademacher, RademacherSequence, SeedSpec};
use crate::LossRankEstimate;

/// The synthetic problem of §-style intervals experiments: input space size
/// `2^n_levels`, a true model index, a label margin, and a sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalsProblem {
    n_levels: u32,
    true_model: u32,
    margin: f64,
    sample_size: usize,
}

impl IntervalsProblem {
    /// Requires `1 <= true_model <= n_levels <= 31`, margin in (0, 1/2) and
    /// at least one observation.
    pub fn new(n_levels: u32, true_model: u32, margin: f64, sample_size: usize) -> Result<Self> {
        if n_levels == 0 || n_levels > 31 {
            return Err(Error::invalid("n_levels must be in 1..=31"));
        }
        if true_model == 0 || true_model > n_levels {
            return Err(Error::invalid("true model index must be in 1..=n_levels"));
        }
        if !(margin > 0.0 && margin < 0.5) {
            return Err(Error::invalid("margin must lie strictly inside (0, 1/2)"));
        }
        if sample_size == 0 {
            return Err(Error::invalid("sample size must be >= 1"));
        }
        Ok(IntervalsProblem {
            n_levels,
            true_model,
            margin,
            sample_size,
        })
    }

    pub fn n_levels(&self) -> u32 {
        self.n_levels
    }

    pub fn true_model(&self) -> u32 {
        self.true_model
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }
}

/// Paired inputs (0-based, `< 2^n_levels`) and binary labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    x: Vec<u32>,
    y: Vec<bool>,
}

impl LabeledDataset {
    pub fn new(x: Vec<u32>, y: Vec<bool>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!(
                "input/label length mismatch: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Ok(LabeledDataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[u32] {
        &self.x
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }
}

/// True when `x` falls in an odd-numbered segment of model `m` (counting
/// segments from one), i.e. in the region where the synthetic generator
/// pushes labels toward 1.
pub fn in_odd_segment(x: u32, m: u32, n_levels: u32) -> bool {
    (x >> (n_levels - m)) % 2 == 0
}

/// Draws inputs uniformly on `{0, ..., 2^n_levels - 1}` and labels from
/// `P(Y=1 | odd segment of the true model) = 1/2 + margin`,
/// `P(Y=1 | otherwise) = 1/2 - margin`.
pub fn generate_intervals_data(problem: &IntervalsProblem, seed: SeedSpec) -> LabeledDataset {
    let mut rng = seed.rng();
    let space = 1u32 << problem.n_levels;
    let mut x = Vec::with_capacity(problem.sample_size);
    let mut y = Vec::with_capacity(problem.sample_size);
    for _ in 0..problem.sample_size {
        let xi = rng.gen_range(0..space);
        let p1 = if in_odd_segment(xi, problem.true_model, problem.n_levels) {
            0.5 + problem.margin
        } else {
            0.5 - problem.margin
        };
        x.push(xi);
        y.push(rng.gen::<f64>() < p1);
    }
    LabeledDataset { x, y }
}

/// Dense renumbering of the segments that actually contain points; empty
/// segments contribute nothing to any of the per-segment sums.
struct SegmentIndex {
    point_segment: Vec<u32>,
    segments: usize,
}

impl SegmentIndex {
    fn build(data: &LabeledDataset, m: u32, n_levels: u32) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if m == 0 || m > n_levels || n_levels > 31 {
            return Err(Error::invalid(format!(
                "model index {m} out of range for n_levels {n_levels}"
            )));
        }
        let space = 1u64 << n_levels;
        if data.x.iter().any(|&x| (x as u64) >= space) {
            return Err(Error::invalid("input outside {0..2^n_levels - 1}"));
        }
        let shift = n_levels - m;
        let raw: Vec<u32> = data.x.iter().map(|&x| x >> shift).collect();
        let mut ids: HashMap<u32, u32> = HashMap::new();
        let mut point_segment = Vec::with_capacity(raw.len());
        for r in raw {
            let next = ids.len() as u32;
            point_segment.push(*ids.entry(r).or_insert(next));
        }
        Ok(SegmentIndex {
            segments: ids.len(),
            point_segment,
        })
    }
}

/// Smallest number of misclassified points over the model, in units of one
/// point: per segment, the minority label count.
fn min_risk_units(index: &SegmentIndex, labels: &[bool]) -> u64 {
    let mut ones = vec![0u32; index.segments];
    let mut totals = vec![0u32; index.segments];
    for (&seg, &y) in index.point_segment.iter().zip(labels) {
        totals[seg as usize] += 1;
        ones[seg as usize] += y as u32;
    }
    ones.iter()
        .zip(&totals)
        .map(|(&o, &t)| o.min(t - o) as u64)
        .sum()
}

/// The minimal empirical 0-1 risk over model `m`: the exact infimum, since
/// per-segment minority counts decouple.
pub fn min_empirical_risk(data: &LabeledDataset, m: u32, n_levels: u32) -> Result<f64> {
    let index = SegmentIndex::build(data, m, n_levels)?;
    Ok(min_risk_units(&index, &data.y) as f64 / data.len() as f64)
}

/// `sup_t (1/n) sum_i r_i I{y_i != t(x_i)}` over model `m`: per segment the
/// larger of the two label classes' sign sums, again decoupled.
pub fn sup_rademacher_term(
    data: &LabeledDataset,
    r: &RademacherSequence,
    m: u32,
    n_levels: u32,
) -> Result<f64> {
    if r.len() != data.len() {
        return Err(Error::invalid(format!(
            "sign/label length mismatch: {} vs {}",
            r.len(),
            data.len()
        )));
    }
    let index = SegmentIndex::build(data, m, n_levels)?;
    let mut sum_ones = vec![0i64; index.segments];
    let mut sum_zeros = vec![0i64; index.segments];
    for ((&seg, &y), &ri) in index.point_segment.iter().zip(&data.y).zip(r.values()) {
        if y {
            sum_ones[seg as usize] += ri as i64;
        } else {
            sum_zeros[seg as usize] += ri as i64;
        }
    }
    let units: i64 = sum_ones
        .iter()
        .zip(&sum_zeros)
        .map(|(&s1, &s0)| s1.max(s0))
        .sum();
    Ok(units as f64 / data.len() as f64)
}

/// Monte Carlo loss rank of model `m`: the fraction of Rademacher
/// relabelings whose minimal empirical risk is at most the actual one
/// (ties inclusive, compared in exact point units).
pub fn loss_rank_classification(
    data: &LabeledDataset,
    m: u32,
    n_levels: u32,
    resamples: u32,
    seed: SeedSpec,
) -> Result<LossRankEstimate> {
    if resamples == 0 {
        return Err(Error::invalid("need at least one relabeling"));
    }
    let index = SegmentIndex::build(data, m, n_levels)?;
    let actual = min_risk_units(&index, &data.y);
    let mut relabeled = data.y.clone();
    let mut hits = 0u32;
    for b in 0..resamples {
        let r = draw_rademacher(data.len(), seed.substream(b as u64))?;
        for ((flip, &y), &ri) in relabeled.iter_mut().zip(&data.y).zip(r.values()) {
            *flip = if ri == 1 { !y } else { y };
        }
        if min_risk_units(&index, &relabeled) <= actual {
            hits += 1;
        }
    }
    Ok(LossRankEstimate::new(hits, resamples))
}

/// The Rademacher-complexity criterion: minimal empirical risk plus the
/// Monte Carlo estimate of the expected Rademacher supremum.
pub fn rc_criterion(
    data: &LabeledDataset,
    m: u32,
    n_levels: u32,
    resamples: u32,
    seed: SeedSpec,
) -> Result<f64> {
    if resamples == 0 {
        return Err(Error::invalid("need at least one Rademacher draw"));
    }
    let risk = min_empirical_risk(data, m, n_levels)?;
    let mut penalty = 0.0;
    for b in 0..resamples {
        let r = draw_rademacher(data.len(), seed.substream(b as u64))?;
        penalty += sup_rademacher_term(data, &r, m, n_levels)?;
    }
    Ok(risk + penalty / resamples as f64)
}

/// Which criterion drives [`select_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalsCriterion {
    LossRank,
    RademacherComplexity,
}

// Substream lanes so that the two criteria never share Rademacher draws.
const LANE_LOSS_RANK: u64 = 1;
const LANE_RC: u64 = 2;

/// Minimizes the chosen criterion over models `1..=n_levels`; ties go to
/// the smallest model.
pub fn select_model(
    data: &LabeledDataset,
    n_levels: u32,
    resamples: u32,
    seed: SeedSpec,
    criterion: IntervalsCriterion,
) -> Result<u32> {
    let mut best_m = 1u32;
    match criterion {
        IntervalsCriterion::LossRank => {
            let lane = seed.substream(LANE_LOSS_RANK);
            let mut best_hits = u32::MAX;
            for m in 1..=n_levels {
                let estimate =
                    loss_rank_classification(data, m, n_levels, resamples, lane.substream(m as u64))?;
                if estimate.hits() < best_hits {
                    best_hits = estimate.hits();
                    best_m = m;
                }
            }
        }
        IntervalsCriterion::RademacherComplexity => {
            let lane = seed.substream(LANE_RC);
            let mut best_value = f64::INFINITY;
            for m in 1..=n_levels {
                let value = rc_criterion(data, m, n_levels, resamples, lane.substream(m as u64))?;
                if value < best_value {
                    best_value = value;
                    best_m = m;
                }
            }
        }
    }
    Ok(best_m)
}

/// Evaluates the relabeling identity
/// `I{y' != t} = I{r = 1} - r * I{y != t}` with `y' = (1 + r)/2 - r y`,
/// entirely in integer arithmetic. `r` must be -1 or +1.
pub fn rademacher_identity_check(y: bool, r: i8, t: bool) -> bool {
    assert!(r == 1 || r == -1, "r must be a sign");
    let (y, r, t) = (y as i32, r as i32, t as i32);
    let y_flipped = (1 + r) / 2 - r * y;
    debug_assert!(y_flipped == 0 || y_flipped == 1);
    let lhs = (y_flipped != t) as i32;
    let rhs = (r == 1) as i32 - r * ((y != t) as i32);
    lhs == rhs
}
