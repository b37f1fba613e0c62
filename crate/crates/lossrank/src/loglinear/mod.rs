//! Graphical log-linear models on contingency tables: maximum likelihood by
//! iterative proportional fitting, the multinomial loss, its bootstrap loss
//! rank, BIC, and exhaustive model selection for small vertex counts.

mod graph;
mod ipf;
mod table;

use std::collections::HashSet;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::resample::{bootstrap_table, multinomial_counts, SeedSpec};
use crate::LossRankEstimate;

pub use graph::{maximal_cliques, pair_position, Graph};
pub use ipf::{ipf_fit, FittedTable, DEFAULT_IPF_MAX_ITER, DEFAULT_IPF_TOL};
pub use table::{ContingencyTable, VariableSpec};

/// Interaction magnitude of the built-in synthetic parameterization.
pub const DEFAULT_INTERACTION: f64 = 0.5;

/// Largest number of graphs [`exhaustive_select`] will enumerate.
pub const EXHAUSTIVE_GUARD_BITS: usize = 20;

/// Negative maximum log-likelihood of a fitted model, dropping the constant
/// `log n!` term: `-sum_i [n_i log m_i - log(n_i!)]`.
///
/// Uses the `0 log 0 = 0` convention. A positive count over a zero fitted
/// cell means the model cannot produce the data; the loss is then positive
/// infinity rather than an error.
pub fn loss_loglinear(table: &ContingencyTable, fitted: &FittedTable) -> f64 {
    let mut loss = 0.0;
    for (&n_i, &m_i) in table.counts().iter().zip(fitted.values()) {
        if n_i == 0 {
            continue;
        }
        if m_i <= 0.0 {
            return f64::INFINITY;
        }
        let n = n_i as f64;
        loss -= n * m_i.ln() - ln_gamma(n + 1.0);
    }
    loss
}

/// Number of free parameters of the hierarchical model generated by the
/// graph's maximal cliques: over every nonempty vertex subset `a` contained
/// in some clique, the product of `(levels(v) - 1)`. The grand total is
/// absorbed by the multinomial constraint and not counted.
pub fn model_dimension(graph: &Graph, spec: &VariableSpec) -> usize {
    let mut subsets: HashSet<u64> = HashSet::new();
    for clique in maximal_cliques(graph) {
        let m = clique.len();
        assert!(m < 64, "clique too large to enumerate subsets");
        for pattern in 1u64..(1 << m) {
            let mut mask = 0u64;
            for (bit, &v) in clique.iter().enumerate() {
                if pattern >> bit & 1 == 1 {
                    mask |= 1 << v;
                }
            }
            subsets.insert(mask);
        }
    }
    let levels = spec.levels();
    subsets
        .into_iter()
        .map(|mask| {
            (0..levels.len())
                .filter(|&v| mask >> v & 1 == 1)
                .map(|v| levels[v] - 1)
                .product::<usize>()
        })
        .sum()
}

/// `BIC(G) = Loss_G(n) + (dim(G)/2) log n`, with the same loss convention as
/// [`loss_loglinear`]; the dropped constants are shared by every graph on a
/// fixed table, so comparisons are unaffected.
pub fn bic_graph(
    table: &ContingencyTable,
    graph: &Graph,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let fitted = ipf_fit(table, graph, tol, max_iter)?;
    let loss = loss_loglinear(table, &fitted);
    let dim = model_dimension(graph, table.spec()) as f64;
    Ok(loss + 0.5 * dim * (table.total() as f64).ln())
}

/// Draws the `b` bootstrap resamples behind a loss-rank evaluation.
///
/// Resample `i` uses substream `i` of `seed`, so any two callers handed the
/// same `(table, b, seed)` see the identical resample set; the GA search and
/// the exhaustive search rely on this to rank graphs against common
/// resamples.
pub fn draw_bootstrap_tables(
    table: &ContingencyTable,
    b: u32,
    seed: SeedSpec,
) -> Result<Vec<ContingencyTable>> {
    if b == 0 {
        return Err(Error::invalid("need at least one bootstrap resample"));
    }
    (0..b)
        .map(|i| bootstrap_table(table, seed.substream(i as u64)))
        .collect()
}

/// Bootstrap loss rank of `graph` against an explicit resample set: the
/// fraction of resamples whose fitted loss is at most the actual fitted
/// loss (ties inclusive). Resamples with infinite loss only count as hits
/// when the actual loss is infinite too.
pub fn loss_rank_graph_over(
    table: &ContingencyTable,
    graph: &Graph,
    resamples: &[ContingencyTable],
) -> Result<LossRankEstimate> {
    if resamples.is_empty() {
        return Err(Error::invalid("need at least one bootstrap resample"));
    }
    let actual = graph_loss(table, graph)?;
    let mut hits = 0u32;
    for resample in resamples {
        if graph_loss(resample, graph)? <= actual {
            hits += 1;
        }
    }
    Ok(LossRankEstimate::new(hits, resamples.len() as u32))
}

/// Bootstrap loss rank of `graph`, drawing `b` fresh resamples from `seed`.
pub fn loss_rank_graph(
    table: &ContingencyTable,
    graph: &Graph,
    b: u32,
    seed: SeedSpec,
) -> Result<LossRankEstimate> {
    let resamples = draw_bootstrap_tables(table, b, seed)?;
    loss_rank_graph_over(table, graph, &resamples)
}

fn graph_loss(table: &ContingencyTable, graph: &Graph) -> Result<f64> {
    let fitted = ipf_fit(table, graph, DEFAULT_IPF_TOL, DEFAULT_IPF_MAX_ITER)?;
    Ok(loss_loglinear(table, &fitted))
}

/// Model-selection criterion for graphs on a fixed table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphCriterion {
    /// Bootstrap loss rank with `resamples` tables drawn once from `seed`
    /// and shared across every graph being compared.
    LossRank { resamples: u32, seed: SeedSpec },
    /// Bayesian information criterion (deterministic).
    Bic,
}

/// A criterion bound to its resample set, ready to score graphs.
pub(crate) struct CriterionEvaluator {
    resamples: Option<Vec<ContingencyTable>>,
}

impl CriterionEvaluator {
    pub(crate) fn prepare(table: &ContingencyTable, criterion: GraphCriterion) -> Result<Self> {
        let resamples = match criterion {
            GraphCriterion::LossRank { resamples, seed } => {
                Some(draw_bootstrap_tables(table, resamples, seed)?)
            }
            GraphCriterion::Bic => None,
        };
        Ok(CriterionEvaluator { resamples })
    }

    pub(crate) fn evaluate(&self, table: &ContingencyTable, graph: &Graph) -> Result<f64> {
        match &self.resamples {
            Some(resamples) => Ok(loss_rank_graph_over(table, graph, resamples)?.value()),
            None => bic_graph(table, graph, DEFAULT_IPF_TOL, DEFAULT_IPF_MAX_ITER),
        }
    }
}

/// True when `(value_a, a)` beats `(value_b, b)` under the selection order:
/// smaller criterion value, then fewer edges, then lexicographically smaller
/// edge bitstring.
pub(crate) fn beats(a: &Graph, value_a: f64, b: &Graph, value_b: f64) -> bool {
    match value_a.total_cmp(&value_b) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => match a.edge_count().cmp(&b.edge_count()) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => a.edge_bits() < b.edge_bits(),
        },
    }
}

/// Scores every graph on the table's variables and returns the criterion
/// minimizer with its value. Ties go to fewer edges, then to the
/// lexicographically smaller bitstring. Refuses vertex counts whose model
/// space exceeds 2^20 graphs.
pub fn exhaustive_select(
    table: &ContingencyTable,
    criterion: GraphCriterion,
) -> Result<(Graph, f64)> {
    let k = table.spec().num_vars();
    let bits = k * (k - 1) / 2;
    if bits > EXHAUSTIVE_GUARD_BITS {
        return Err(Error::SearchSpaceTooLarge(format!(
            "k={k} means 2^{bits} graphs; exhaustive search is capped at 2^{EXHAUSTIVE_GUARD_BITS}"
        )));
    }
    let evaluator = CriterionEvaluator::prepare(table, criterion)?;
    let mut best: Option<(Graph, f64)> = None;
    for code in 0..(1u64 << bits) {
        let graph = Graph::from_code(k, code)?;
        let value = evaluator.evaluate(table, &graph)?;
        let replace = match &best {
            None => true,
            Some((incumbent, incumbent_value)) => beats(&graph, value, incumbent, *incumbent_value),
        };
        if replace {
            best = Some((graph, value));
        }
    }
    Ok(best.expect("at least the empty graph was scored"))
}

/// The built-in cell-probability parameterization of a "true" graph: zero
/// main effects plus one full-interaction term of the given magnitude on
/// each maximal clique of size two or more (level scores +1 for even
/// levels, -1 for odd), exponentiated and normalized. Isolated vertices are
/// uniform and independent of the rest.
pub fn default_cell_probs_with(graph: &Graph, spec: &VariableSpec, magnitude: f64) -> Vec<f64> {
    let cliques: Vec<Vec<usize>> = maximal_cliques(graph)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .collect();
    let cells = spec.num_cells();
    let mut probs: Vec<f64> = (0..cells)
        .map(|idx| {
            let coords = spec.cell_coords(idx);
            let lp: f64 = cliques
                .iter()
                .map(|clique| {
                    let sign: f64 = clique
                        .iter()
                        .map(|&v| if coords[v] % 2 == 0 { 1.0 } else { -1.0 })
                        .product();
                    magnitude * sign
                })
                .sum();
            lp.exp()
        })
        .collect();
    let z: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= z;
    }
    probs
}

/// [`default_cell_probs_with`] at the default magnitude.
pub fn default_cell_probs(graph: &Graph, spec: &VariableSpec) -> Vec<f64> {
    default_cell_probs_with(graph, spec, DEFAULT_INTERACTION)
}

/// Samples a contingency table of `n` observations from a "true" graph.
///
/// With explicit `cell_probs` the vector must be a probability distribution
/// that factorizes according to the graph (checked by projecting it onto
/// the model with IPF; discrepancies beyond 1e-10 are rejected). Without
/// one, the built-in parameterization of [`default_cell_probs`] is used.
pub fn generate_from_graph(
    graph: &Graph,
    spec: &VariableSpec,
    cell_probs: Option<&[f64]>,
    n: u64,
    seed: SeedSpec,
) -> Result<ContingencyTable> {
    if graph.vertex_count() != spec.num_vars() {
        return Err(Error::invalid(
            "graph vertex count does not match the variable spec",
        ));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one observation"));
    }
    let probs: Vec<f64> = match cell_probs {
        Some(p) => {
            if p.len() != spec.num_cells() {
                return Err(Error::invalid(format!(
                    "expected {} cell probabilities, got {}",
                    spec.num_cells(),
                    p.len()
                )));
            }
            if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::invalid("cell probabilities must be finite and >= 0"));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "cell probabilities sum to {total}, not 1"
                )));
            }
            let projected = ipf::ipf_core(p, spec, graph, 1e-13, 200_000)?;
            let worst = p
                .iter()
                .zip(projected.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if worst > 1e-10 {
                return Err(Error::invalid(format!(
                    "cell probabilities do not factorize over the graph (discrepancy {worst:.3e})"
                )));
            }
            p.to_vec()
        }
        None => default_cell_probs(graph, spec),
    };
    let mut rng = seed.rng();
    let counts = multinomial_counts(&probs, n, &mut rng)?;
    ContingencyTable::new(spec.clone(), counts)
}
