//! Iterative proportional fitting: the maximum-likelihood expected cell
//! counts of a graphical log-linear model, obtained by cyclically rescaling
//! a fitted table until every maximal-clique marginal matches the observed
//! one.

use crate::error::{Error, Result};
use crate::loglinear::graph::{maximal_cliques, Graph};
use crate::loglinear::table::{ContingencyTable, VariableSpec};

/// Marginal-discrepancy tolerance used when a caller does not pick one.
pub const DEFAULT_IPF_TOL: f64 = 1e-8;
/// Full-cycle cap used when a caller does not pick one.
pub const DEFAULT_IPF_MAX_ITER: usize = 10_000;

/// Fitted expected cell counts under a graphical model.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTable {
    values: Vec<f64>,
    converged: bool,
    iterations: usize,
}

impl FittedTable {
    /// Expected counts, row-major over the same cells as the source table.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// False when the cycle cap was exhausted before the marginals matched.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Number of full clique cycles performed.
    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Maps every full-table cell onto its cell inside a clique's marginal table.
struct CliqueIndex {
    cell_map: Vec<usize>,
    marginal_len: usize,
}

impl CliqueIndex {
    fn build(spec: &VariableSpec, clique: &[usize]) -> Self {
        let levels = spec.levels();
        let marginal_len = clique.iter().map(|&v| levels[v]).product();
        let cells = spec.num_cells();
        let mut cell_map = vec![0usize; cells];
        for (idx, slot) in cell_map.iter_mut().enumerate() {
            let coords = spec.cell_coords(idx);
            let mut m = 0usize;
            for &v in clique {
                m = m * levels[v] + coords[v];
            }
            *slot = m;
        }
        CliqueIndex {
            cell_map,
            marginal_len,
        }
    }

    fn marginal(&self, table: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.marginal_len];
        for (cell, &value) in self.cell_map.iter().zip(table) {
            out[*cell] += value;
        }
        out
    }
}

/// Fits the expected counts of `graph`'s log-linear model to `table`.
///
/// Starts from the uniform table with the observed total and cycles over the
/// maximal cliques, scaling the fitted cells so each clique marginal matches
/// the observed one; stops when the largest absolute marginal discrepancy
/// falls below `tol` or after `max_iter` full cycles (in which case the
/// result is returned with `converged() == false`). Cells under an observed
/// zero clique marginal are zeroed.
pub fn ipf_fit(
    table: &ContingencyTable,
    graph: &Graph,
    tol: f64,
    max_iter: usize,
) -> Result<FittedTable> {
    if graph.vertex_count() != table.spec().num_vars() {
        return Err(Error::invalid(format!(
            "graph has {} vertices but the table has {} variables",
            graph.vertex_count(),
            table.spec().num_vars()
        )));
    }
    let target: Vec<f64> = table.counts().iter().map(|&c| c as f64).collect();
    ipf_core(&target, table.spec(), graph, tol, max_iter)
}

/// Real-valued IPF shared by count fitting and the factorization check in
/// synthetic data generation.
pub(crate) fn ipf_core(
    target: &[f64],
    spec: &VariableSpec,
    graph: &Graph,
    tol: f64,
    max_iter: usize,
) -> Result<FittedTable> {
    if !(tol > 0.0) {
        return Err(Error::invalid("IPF tolerance must be positive"));
    }
    let cliques = maximal_cliques(graph);
    let indexes: Vec<CliqueIndex> = cliques
        .iter()
        .map(|c| CliqueIndex::build(spec, c))
        .collect();
    let observed: Vec<Vec<f64>> = indexes.iter().map(|ix| ix.marginal(target)).collect();

    let total: f64 = target.iter().sum();
    let cells = spec.num_cells();
    let mut fitted = vec![total / cells as f64; cells];

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (ix, obs) in indexes.iter().zip(&observed) {
            let current = ix.marginal(&fitted);
            let scale: Vec<f64> = obs
                .iter()
                .zip(&current)
                .map(|(&o, &c)| if c > 0.0 { o / c } else { 0.0 })
                .collect();
            for (value, &cell) in fitted.iter_mut().zip(&ix.cell_map) {
                *value *= scale[cell];
            }
        }
        let discrepancy = indexes
            .iter()
            .zip(&observed)
            .map(|(ix, obs)| {
                ix.marginal(&fitted)
                    .iter()
                    .zip(obs)
                    .map(|(c, o)| (c - o).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if discrepancy < tol {
            converged = true;
            break;
        }
    }

    Ok(FittedTable {
        values: fitted,
        converged,
        iterations,
    })
}
