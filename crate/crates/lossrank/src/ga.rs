//! Genetic search over graph structures when the model space is too large
//! to enumerate: linear ranking selection, elitism, induced-subgraph
//! crossover, single-bit mutation, and a restart loop that accumulates the
//! per-restart fittest graphs into a bounded set.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::loglinear::{
    beats, ContingencyTable, CriterionEvaluator, Graph, GraphCriterion,
};
use crate::resample::SeedSpec;

/// Tuning knobs of [`ga_search`]. The defaults follow the usual choices for
/// this operator set: population 100, beta 1.5, 5% elitism, crossover 0.9,
/// mutation 0.01, and stall windows of 5 for both loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    /// Individuals per generation.
    pub pop_size: usize,
    /// Linear-ranking selection pressure, in [1, 2].
    pub beta: f64,
    /// Fraction of the fittest copied unchanged into the next generation.
    pub elite_frac: f64,
    /// Probability that a consecutive parent pair is crossed.
    pub crossover_prob: f64,
    /// Probability that an offspring gets one random bit flipped.
    pub mutation_prob: f64,
    /// Generations the fittest may stay unchanged before a restart ends.
    pub stall_generations: usize,
    /// Restarts the accumulated set may stay unchanged before the search ends.
    pub stall_restarts: usize,
    /// Cap on the number of models collected across restarts.
    pub max_models: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            pop_size: 100,
            beta: 1.5,
            elite_frac: 0.05,
            crossover_prob: 0.9,
            mutation_prob: 0.01,
            stall_generations: 5,
            stall_restarts: 5,
            max_models: 10,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::invalid("population size must be >= 2"));
        }
        if !(1.0..=2.0).contains(&self.beta) {
            return Err(Error::invalid("beta must lie in [1, 2]"));
        }
        for (name, p) in [
            ("elite_frac", self.elite_frac),
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.stall_generations == 0 || self.stall_restarts == 0 {
            return Err(Error::invalid("stall windows must be >= 1"));
        }
        if self.max_models == 0 {
            return Err(Error::invalid("max_models must be >= 1"));
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        ((self.elite_frac * self.pop_size as f64).ceil() as usize).min(self.pop_size)
    }
}

/// A population sorted fittest-first: ascending criterion value, with ties
/// broken toward fewer edges, then the lexicographically smaller bitstring.
#[derive(Debug, Clone)]
pub struct RankedPopulation {
    members: Vec<(Graph, f64)>,
}

impl RankedPopulation {
    pub fn rank(mut members: Vec<(Graph, f64)>) -> Self {
        members.sort_by(|(ga, va), (gb, vb)| {
            if beats(ga, *va, gb, *vb) {
                std::cmp::Ordering::Less
            } else if beats(gb, *vb, ga, *va) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        RankedPopulation { members }
    }

    pub fn members(&self) -> &[(Graph, f64)] {
        &self.members
    }

    pub fn fittest(&self) -> &(Graph, f64) {
        &self.members[0]
    }
}

/// The chromosome of a graph: its edge bitstring.
pub fn encode(graph: &Graph) -> Vec<bool> {
    graph.edge_bits().to_vec()
}

/// Rebuilds a graph from a chromosome of length `k(k-1)/2`.
pub fn decode(bits: &[bool], k: usize) -> Result<Graph> {
    Graph::from_edge_bits(k, bits.to_vec())
}

/// Linear ranking selection probabilities over ranks `1..=pop_size`:
/// `p_i = (beta - 2(beta - 1)(i - 1)/(pop_size - 1)) / pop_size`.
/// Nonincreasing, nonnegative, and summing to one exactly.
pub fn linear_ranking_probs(pop_size: usize, beta: f64) -> Result<Vec<f64>> {
    if pop_size < 2 {
        return Err(Error::invalid("ranking needs a population of >= 2"));
    }
    if !(1.0..=2.0).contains(&beta) {
        return Err(Error::invalid("beta must lie in [1, 2]"));
    }
    let n = pop_size as f64;
    Ok((0..pop_size)
        .map(|rank| (beta - 2.0 * (beta - 1.0) * rank as f64 / (n - 1.0)) / n)
        .collect())
}

/// Exchanges the subgraphs induced by vertex subset `subset_mask`: for every
/// pair with both endpoints in the subset the offspring take the other
/// parent's bit; all remaining bits follow the host parent.
fn crossover_given(g1: &Graph, g2: &Graph, subset_mask: u64) -> (Graph, Graph) {
    let k = g1.vertex_count();
    let mut o1 = g1.clone();
    let mut o2 = g2.clone();
    for a in 0..k {
        if subset_mask >> a & 1 == 0 {
            continue;
        }
        for b in (a + 1)..k {
            if subset_mask >> b & 1 == 1 {
                o1.set_edge(a, b, g2.has_edge(a, b));
                o2.set_edge(a, b, g1.has_edge(a, b));
            }
        }
    }
    (o1, o2)
}

fn draw_subset<R: Rng>(k: usize, rng: &mut R) -> u64 {
    let mut mask = 0u64;
    for v in 0..k {
        if rng.gen::<bool>() {
            mask |= 1 << v;
        }
    }
    mask
}

fn crossover_with<R: Rng>(g1: &Graph, g2: &Graph, rng: &mut R) -> (Graph, Graph) {
    let subset = draw_subset(g1.vertex_count(), rng);
    crossover_given(g1, g2, subset)
}

/// Subgraph-exchange crossover with the subset drawn uniformly over all
/// vertex subsets.
pub fn crossover(g1: &Graph, g2: &Graph, seed: SeedSpec) -> Result<(Graph, Graph)> {
    if g1.vertex_count() != g2.vertex_count() {
        return Err(Error::invalid("parents must have the same vertex count"));
    }
    let mut rng = seed.rng();
    Ok(crossover_with(g1, g2, &mut rng))
}

fn mutate_with<R: Rng>(graph: &Graph, mutation_prob: f64, rng: &mut R) -> Graph {
    let bits = graph.edge_bits().len();
    let mut out = graph.clone();
    if bits > 0 && rng.gen::<f64>() < mutation_prob {
        let pos = rng.gen_range(0..bits);
        let mut edges = out.edge_bits().to_vec();
        edges[pos] = !edges[pos];
        out = Graph::from_edge_bits(graph.vertex_count(), edges).expect("same length");
    }
    out
}

/// With probability `mutation_prob`, flips exactly one uniformly chosen
/// edge bit; otherwise returns the graph unchanged.
pub fn mutate(graph: &Graph, mutation_prob: f64, seed: SeedSpec) -> Result<Graph> {
    if !(0.0..=1.0).contains(&mutation_prob) {
        return Err(Error::invalid("mutation probability must lie in [0, 1]"));
    }
    let mut rng = seed.rng();
    Ok(mutate_with(graph, mutation_prob, &mut rng))
}

/// One row of the per-generation search log.
#[derive(Debug, Clone)]
pub struct GenerationRecord {
    pub restart: usize,
    pub generation: usize,
    pub best_value: f64,
    pub best_graph: Graph,
}

/// The result of a [`ga_search`] run.
#[derive(Debug, Clone)]
pub struct GaOutcome {
    /// The accumulated set of per-restart fittest graphs with their
    /// criterion values, fittest first; never larger than
    /// [`GaConfig::max_models`] and free of duplicates.
    pub models: Vec<(Graph, f64)>,
    /// One record per generation, across all restarts.
    pub log: Vec<GenerationRecord>,
    /// Number of restarts performed.
    pub restarts: usize,
}

fn score(
    cache: &mut HashMap<Vec<bool>, f64>,
    evaluator: &CriterionEvaluator,
    table: &ContingencyTable,
    graph: &Graph,
) -> Result<f64> {
    if let Some(&v) = cache.get(graph.edge_bits()) {
        return Ok(v);
    }
    let v = evaluator.evaluate(table, graph)?;
    cache.insert(graph.edge_bits().to_vec(), v);
    Ok(v)
}

/// Searches the graph space for a set of well-fitting models.
///
/// Each restart evolves a fresh random population until the fittest graph
/// is unchanged for `stall_generations` consecutive generations; the final
/// fittest is added to the result set if new. Restarts continue until the
/// set reaches `max_models` or has not changed for `stall_restarts`
/// consecutive restarts.
///
/// A generation keeps the top `elite_frac` unchanged, fills the rest by
/// linear-ranking selection, crosses consecutive parent pairs with
/// probability `crossover_prob` and mutates offspring with probability
/// `mutation_prob`. With a loss-rank fitness the bootstrap resamples are
/// drawn once from the criterion's seed and shared by every evaluation, so
/// the whole search is deterministic given `(fitness, seed)`.
pub fn ga_search(
    table: &ContingencyTable,
    config: &GaConfig,
    fitness: GraphCriterion,
    seed: SeedSpec,
) -> Result<GaOutcome> {
    config.validate()?;
    let k = table.spec().num_vars();
    let nbits = k * (k - 1) / 2;
    let evaluator = CriterionEvaluator::prepare(table, fitness)?;
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let probs = linear_ranking_probs(config.pop_size, config.beta)?;
    let ranking = WeightedIndex::new(&probs)
        .map_err(|e| Error::invalid(format!("bad ranking probabilities: {e}")))?;
    let elite_count = config.elite_count();

    let mut rng = seed.rng();
    let mut models: Vec<(Graph, f64)> = Vec::new();
    let mut log: Vec<GenerationRecord> = Vec::new();
    let mut unchanged_restarts = 0usize;
    let mut restarts = 0usize;

    loop {
        let restart = restarts;
        restarts += 1;

        // fresh uniform population
        let mut population: Vec<(Graph, f64)> = Vec::with_capacity(config.pop_size);
        for _ in 0..config.pop_size {
            let bits: Vec<bool> = (0..nbits).map(|_| rng.gen::<bool>()).collect();
            let graph = Graph::from_edge_bits(k, bits)?;
            let value = score(&mut cache, &evaluator, table, &graph)?;
            population.push((graph, value));
        }
        let mut ranked = RankedPopulation::rank(population);
        let mut best = ranked.fittest().clone();
        log.push(GenerationRecord {
            restart,
            generation: 0,
            best_value: best.1,
            best_graph: best.0.clone(),
        });

        let mut stall = 0usize;
        let mut generation = 0usize;
        while stall < config.stall_generations {
            generation += 1;
            let mut next: Vec<(Graph, f64)> =
                ranked.members()[..elite_count].to_vec();
            let n_parents = config.pop_size - elite_count;
            let parents: Vec<Graph> = (0..n_parents)
                .map(|_| ranked.members()[ranking.sample(&mut rng)].0.clone())
                .collect();
            let mut offspring: Vec<Graph> = Vec::with_capacity(n_parents);
            for pair in parents.chunks(2) {
                if pair.len() == 2 && rng.gen::<f64>() < config.crossover_prob {
                    let (a, b) = crossover_with(&pair[0], &pair[1], &mut rng);
                    offspring.push(a);
                    offspring.push(b);
                } else {
                    offspring.extend_from_slice(pair);
                }
            }
            for child in offspring {
                let mutated = mutate_with(&child, config.mutation_prob, &mut rng);
                let value = score(&mut cache, &evaluator, table, &mutated)?;
                next.push((mutated, value));
            }
            ranked = RankedPopulation::rank(next);
            let current = ranked.fittest().clone();
            log.push(GenerationRecord {
                restart,
                generation,
                best_value: current.1,
                best_graph: current.0.clone(),
            });
            if current.0 == best.0 {
                stall += 1;
            } else {
                best = current;
                stall = 0;
            }
        }

        if models.iter().any(|(g, _)| *g == best.0) {
            unchanged_restarts += 1;
        } else {
            models.push(best);
            unchanged_restarts = 0;
        }
        if models.len() >= config.max_models || unchanged_restarts >= config.stall_restarts {
            break;
        }
    }

    models.sort_by(|(ga, va), (gb, vb)| {
        if beats(ga, *va, gb, *vb) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    Ok(GaOutcome {
        models,
        log,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loglinear::{generate_from_graph, VariableSpec};
    use proptest::prelude::*;

    #[test]
    fn ranking_probs_match_the_formula() {
        let p = linear_ranking_probs(100, 1.5).unwrap();
        assert!((p[0] - 0.015).abs() < 1e-15);
        assert!((p[99] - 0.005).abs() < 1e-15);
        let uniform = linear_ranking_probs(10, 1.0).unwrap();
        assert!(uniform.iter().all(|&x| (x - 0.1).abs() < 1e-15));
        assert!(linear_ranking_probs(1, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn ranking_probs_sum_to_one(pop in 2usize..400, beta in 1.0f64..=2.0) {
            let p = linear_ranking_probs(pop, beta).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1] - 1e-15));
            prop_assert!(p.iter().all(|&x| x >= -1e-15));
        }

        #[test]
        fn encode_decode_round_trip(k in 2usize..=8, seed in any::<u64>()) {
            let nbits = k * (k - 1) / 2;
            let mut state = seed;
            let bits: Vec<bool> = (0..nbits).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state >> 63 == 1
            }).collect();
            let g = decode(&bits, k).unwrap();
            prop_assert_eq!(encode(&g), bits);
        }

        #[test]
        fn crossover_conserves_parent_bits(k in 2usize..=6, code1 in any::<u64>(), code2 in any::<u64>(), mask in any::<u64>()) {
            let nbits = k * (k - 1) / 2;
            let g1 = Graph::from_code(k, code1 & ((1u64 << nbits) - 1)).unwrap();
            let g2 = Graph::from_code(k, code2 & ((1u64 << nbits) - 1)).unwrap();
            let (o1, o2) = crossover_given(&g1, &g2, mask & ((1u64 << k) - 1));
            for a in 0..k {
                for b in (a + 1)..k {
                    let from_parents = [g1.has_edge(a, b), g2.has_edge(a, b)];
                    prop_assert!(from_parents.contains(&o1.has_edge(a, b)));
                    prop_assert!(from_parents.contains(&o2.has_edge(a, b)));
                }
            }
        }
    }

    #[test]
    fn decode_rejects_wrong_length() {
        assert!(decode(&[true, false], 3).is_err());
    }

    #[test]
    fn crossover_empty_subset_copies_parents() {
        let g1: Graph = "3:101".parse().unwrap();
        let g2: Graph = "3:010".parse().unwrap();
        let (o1, o2) = crossover_given(&g1, &g2, 0);
        assert_eq!(o1, g1);
        assert_eq!(o2, g2);
    }

    #[test]
    fn crossover_full_subset_swaps_parents() {
        let g1: Graph = "3:101".parse().unwrap();
        let g2: Graph = "3:010".parse().unwrap();
        let (o1, o2) = crossover_given(&g1, &g2, 0b111);
        assert_eq!(o1, g2);
        assert_eq!(o2, g1);
    }

    #[test]
    fn crossover_hand_trace() {
        // subset {0, 1}: only the (0,1) bit is exchanged
        let g1: Graph = "3:101".parse().unwrap();
        let g2: Graph = "3:010".parse().unwrap();
        let (o1, o2) = crossover_given(&g1, &g2, 0b011);
        assert_eq!(o1.to_string(), "3:001");
        assert_eq!(o2.to_string(), "3:110");
    }

    #[test]
    fn crossover_rejects_mismatched_parents() {
        let g1 = Graph::empty(3).unwrap();
        let g2 = Graph::empty(4).unwrap();
        assert!(crossover(&g1, &g2, SeedSpec::root(0)).is_err());
    }

    #[test]
    fn mutation_probability_zero_is_identity() {
        let g: Graph = "4:101010".parse().unwrap();
        assert_eq!(mutate(&g, 0.0, SeedSpec::root(1)).unwrap(), g);
    }

    #[test]
    fn mutation_probability_one_flips_exactly_one_bit() {
        let g: Graph = "4:101010".parse().unwrap();
        for tag in 0..50u64 {
            let mutated = mutate(&g, 1.0, SeedSpec::root(0).substream(tag)).unwrap();
            let distance: usize = g
                .edge_bits()
                .iter()
                .zip(mutated.edge_bits())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(distance, 1);
        }
    }

    #[test]
    fn mutation_frequency_matches_probability() {
        let g: Graph = "4:000000".parse().unwrap();
        let p = 0.3;
        let trials = 10_000;
        let flips = (0..trials)
            .filter(|&t| mutate(&g, p, SeedSpec::new(77, t)).unwrap() != g)
            .count();
        let freq = flips as f64 / trials as f64;
        let band = 4.0 * (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < band, "freq = {freq}");
    }

    fn small_table() -> ContingencyTable {
        let spec = VariableSpec::binary(3).unwrap();
        let truth: Graph = "3:101".parse().unwrap();
        generate_from_graph(&truth, &spec, None, 400, SeedSpec::root(99)).unwrap()
    }

    #[test]
    fn ga_with_max_models_one_returns_singleton() {
        let table = small_table();
        let config = GaConfig {
            pop_size: 20,
            max_models: 1,
            ..GaConfig::default()
        };
        let out = ga_search(&table, &config, GraphCriterion::Bic, SeedSpec::root(5)).unwrap();
        assert_eq!(out.models.len(), 1);
        assert_eq!(out.restarts, 1);
    }

    #[test]
    fn ga_respects_model_cap_and_uniqueness() {
        let table = small_table();
        let config = GaConfig {
            pop_size: 16,
            mutation_prob: 0.5,
            max_models: 3,
            ..GaConfig::default()
        };
        let out = ga_search(
            &table,
            &config,
            GraphCriterion::LossRank {
                resamples: 24,
                seed: SeedSpec::root(1),
            },
            SeedSpec::root(6),
        )
        .unwrap();
        assert!(out.models.len() <= 3);
        for (i, (g, _)) in out.models.iter().enumerate() {
            for (other, _) in &out.models[i + 1..] {
                assert_ne!(g, other);
            }
        }
    }

    #[test]
    fn ga_is_deterministic_given_seed() {
        let table = small_table();
        let config = GaConfig {
            pop_size: 16,
            max_models: 2,
            ..GaConfig::default()
        };
        let criterion = GraphCriterion::LossRank {
            resamples: 24,
            seed: SeedSpec::root(2),
        };
        let a = ga_search(&table, &config, criterion, SeedSpec::root(7)).unwrap();
        let b = ga_search(&table, &config, criterion, SeedSpec::root(7)).unwrap();
        assert_eq!(a.models, b.models);
        assert_eq!(a.restarts, b.restarts);
    }

    #[test]
    fn elitism_keeps_best_value_monotone() {
        let table = small_table();
        let config = GaConfig {
            pop_size: 20,
            mutation_prob: 0.2,
            max_models: 2,
            ..GaConfig::default()
        };
        for run in 0..20u64 {
            let out = ga_search(
                &table,
                &config,
                GraphCriterion::Bic,
                SeedSpec::new(1000, run),
            )
            .unwrap();
            let mut last: Option<(usize, f64)> = None;
            for record in &out.log {
                if let Some((restart, value)) = last {
                    if restart == record.restart {
                        assert!(
                            record.best_value <= value + 1e-12,
                            "best value rose within restart {restart}"
                        );
                    }
                }
                last = Some((record.restart, record.best_value));
            }
        }
    }
}
