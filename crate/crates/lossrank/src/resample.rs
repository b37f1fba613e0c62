//! Seeded randomness and the resampling schemes shared by every criterion:
//! Rademacher label flips, row bootstrap, and multinomial contingency-table
//! bootstrap.
//!
//! All randomness flows through [`SeedSpec`], a (master seed, stream id)
//! pair mapped onto a counter-based generator. Identical specs reproduce
//! bit-identical sequences regardless of thread scheduling; distinct stream
//! ids select independent streams of the same master seed.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loglinear::ContingencyTable;

/// Identifies one reproducible random stream.
///
/// `master_seed` names the experiment; `stream_id` names a substream within
/// it (a replicate, a bootstrap resample, a restart). Substreams of a ChaCha
/// key are independent by construction, so replicate-level parallelism just
/// assigns one stream id per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    /// Stream 0 of a master seed.
    pub fn root(master_seed: u64) -> Self {
        SeedSpec::new(master_seed, 0)
    }

    /// Derives a child stream. Children with distinct tags, and children of
    /// distinct parents, land on distinct streams with overwhelming
    /// probability; the derivation is a fixed integer mix, so it is stable
    /// across runs and platforms.
    pub fn substream(&self, tag: u64) -> Self {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A sequence of independent random signs, each exactly -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RademacherSequence {
    values: Vec<i8>,
}

impl RademacherSequence {
    /// Builds a sequence from raw signs, rejecting anything but -1 and +1.
    pub fn from_signs(values: Vec<i8>) -> Result<Self> {
        if values.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::invalid("Rademacher entries must be -1 or +1"));
        }
        Ok(RademacherSequence { values })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `n` independent signs, each -1 or +1 with probability 1/2.
pub fn draw_rademacher(n: usize, seed: SeedSpec) -> Result<RademacherSequence> {
    if n == 0 {
        return Err(Error::invalid("Rademacher sequence length must be >= 1"));
    }
    let mut rng = seed.rng();
    let values = (0..n)
        .map(|_| if rng.gen::<bool>() { 1i8 } else { -1i8 })
        .collect();
    Ok(RademacherSequence { values })
}

/// Flips label `i` exactly when `r_i` = +1 and keeps it when `r_i` = -1.
///
/// The +1-means-flip orientation is fixed here once; every caller relies on
/// it rather than re-deciding the sign convention.
pub fn relabel(labels: &[bool], r: &RademacherSequence) -> Result<Vec<bool>> {
    if labels.len() != r.len() {
        return Err(Error::invalid(format!(
            "label/sign length mismatch: {} vs {}",
            labels.len(),
            r.len()
        )));
    }
    Ok(labels
        .iter()
        .zip(r.values())
        .map(|(&y, &ri)| if ri == 1 { !y } else { y })
        .collect())
}

/// Draws a bootstrap sample of row indices: `n` i.i.d. uniform draws from
/// `0..n`, with replacement.
pub fn bootstrap_rows(n: usize, seed: SeedSpec) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("cannot bootstrap an empty sample"));
    }
    let mut rng = seed.rng();
    Ok((0..n).map(|_| rng.gen_range(0..n)).collect())
}

/// Resamples a contingency table: `n` observations drawn from the observed
/// category frequencies, i.e. one multinomial(n, {n_i/n}) draw. The total
/// count is conserved exactly.
pub fn bootstrap_table(table: &ContingencyTable, seed: SeedSpec) -> Result<ContingencyTable> {
    let total = table.total();
    if total == 0 {
        return Err(Error::invalid("cannot bootstrap an empty table"));
    }
    let mut rng = seed.rng();
    let index = WeightedIndex::new(table.counts().iter().copied())
        .map_err(|e| Error::invalid(format!("bad table weights: {e}")))?;
    let mut counts = vec![0u64; table.counts().len()];
    for _ in 0..total {
        counts[index.sample(&mut rng)] += 1;
    }
    ContingencyTable::new(table.spec().clone(), counts)
}

/// Draws one multinomial(n, probs) vector of cell counts.
pub(crate) fn multinomial_counts<R: Rng>(probs: &[f64], n: u64, rng: &mut R) -> Result<Vec<u64>> {
    let index = WeightedIndex::new(probs.iter().copied())
        .map_err(|e| Error::invalid(format!("bad cell probabilities: {e}")))?;
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..n {
        counts[index.sample(rng)] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loglinear::VariableSpec;

    #[test]
    fn rademacher_entries_are_signs() {
        let r = draw_rademacher(1, SeedSpec::root(7)).unwrap();
        assert!(r.values()[0] == 1 || r.values()[0] == -1);
        let big = draw_rademacher(1000, SeedSpec::root(7)).unwrap();
        assert!(big.values().iter().all(|&v| v == 1 || v == -1));
    }

    #[test]
    fn rademacher_mean_concentrates() {
        let n = 100_000;
        let r = draw_rademacher(n, SeedSpec::root(11)).unwrap();
        let mean = r.values().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn rademacher_rejects_empty() {
        assert!(draw_rademacher(0, SeedSpec::root(0)).is_err());
    }

    #[test]
    fn identical_seeds_reproduce() {
        let seed = SeedSpec::new(42, 3);
        assert_eq!(
            draw_rademacher(64, seed).unwrap(),
            draw_rademacher(64, seed).unwrap()
        );
        assert_eq!(
            bootstrap_rows(64, seed).unwrap(),
            bootstrap_rows(64, seed).unwrap()
        );
    }

    #[test]
    fn distinct_streams_decorrelate() {
        let n = 10_000;
        let a = draw_rademacher(n, SeedSpec::new(5, 1)).unwrap();
        let b = draw_rademacher(n, SeedSpec::new(5, 2)).unwrap();
        let dot: i64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| (x as i64) * (y as i64))
            .sum();
        // correlation of +-1 pairs: sd of the dot product is sqrt(n)
        assert!((dot as f64).abs() < 4.0 * (n as f64).sqrt(), "dot = {dot}");
    }

    #[test]
    fn relabel_follows_sign_convention() {
        let r = RademacherSequence::from_signs(vec![1, -1, 1]).unwrap();
        // +1 flips, -1 keeps
        let out = relabel(&[false, true, true], &r).unwrap();
        assert_eq!(out, vec![true, true, false]);
    }

    #[test]
    fn relabel_is_an_involution() {
        let seed = SeedSpec::root(9);
        let r = draw_rademacher(200, seed).unwrap();
        let y: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        let once = relabel(&y, &r).unwrap();
        let twice = relabel(&once, &r).unwrap();
        assert_eq!(twice, y);
    }

    #[test]
    fn relabel_rejects_length_mismatch() {
        let r = RademacherSequence::from_signs(vec![1, -1]).unwrap();
        assert!(relabel(&[true], &r).is_err());
    }

    #[test]
    fn bootstrap_rows_shape_and_range() {
        assert_eq!(bootstrap_rows(1, SeedSpec::root(0)).unwrap(), vec![0]);
        let idx = bootstrap_rows(57, SeedSpec::root(1)).unwrap();
        assert_eq!(idx.len(), 57);
        assert!(idx.iter().all(|&i| i < 57));
    }

    #[test]
    fn bootstrap_rows_pairs_are_uniform() {
        // n = 2: four ordered outcomes, each with probability 1/4.
        let draws = 10_000;
        let mut freq = [0u32; 4];
        for rep in 0..draws {
            let idx = bootstrap_rows(2, SeedSpec::new(13, rep)).unwrap();
            freq[idx[0] * 2 + idx[1]] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = freq
            .iter()
            .map(|&f| {
                let d = f as f64 - expected;
                d * d / expected
            })
            .sum();
        // 99.9% quantile of chi-square with 3 degrees of freedom
        assert!(chi2 < 16.27, "chi2 = {chi2}, freq = {freq:?}");
    }

    fn table(counts: Vec<u64>, levels: Vec<usize>) -> ContingencyTable {
        ContingencyTable::new(VariableSpec::new(levels).unwrap(), counts).unwrap()
    }

    #[test]
    fn bootstrap_table_degenerate_support() {
        let t = table(vec![8, 0, 0, 0], vec![2, 2]);
        let resampled = bootstrap_table(&t, SeedSpec::root(3)).unwrap();
        assert_eq!(resampled.counts(), &[8, 0, 0, 0]);
    }

    #[test]
    fn bootstrap_table_matches_multinomial_law() {
        // counts (1,1): outcomes (2,0), (1,1), (0,2) with probs 1/4, 1/2, 1/4
        let t = table(vec![1, 1], vec![2]);
        let draws = 10_000u32;
        let mut freq = [0u32; 3];
        for rep in 0..draws {
            let r = bootstrap_table(&t, SeedSpec::new(29, rep as u64)).unwrap();
            match (r.counts()[0], r.counts()[1]) {
                (2, 0) => freq[0] += 1,
                (1, 1) => freq[1] += 1,
                (0, 2) => freq[2] += 1,
                other => panic!("total not conserved: {other:?}"),
            }
        }
        let n = draws as f64;
        let expected = [n / 4.0, n / 2.0, n / 4.0];
        let chi2: f64 = freq
            .iter()
            .zip(expected)
            .map(|(&f, e)| {
                let d = f as f64 - e;
                d * d / e
            })
            .sum();
        // 99.9% quantile of chi-square with 2 degrees of freedom
        assert!(chi2 < 13.82, "chi2 = {chi2}, freq = {freq:?}");
    }

    #[test]
    fn bootstrap_table_conserves_total() {
        let t = table(vec![3, 1, 4, 1, 5, 9], vec![2, 3]);
        for rep in 0..50 {
            let r = bootstrap_table(&t, SeedSpec::new(31, rep)).unwrap();
            assert_eq!(r.total(), t.total());
        }
    }

    #[test]
    fn bootstrap_table_rejects_empty() {
        let spec = VariableSpec::new(vec![2]).unwrap();
        assert!(ContingencyTable::new(spec, vec![0, 0]).is_err());
    }
}
