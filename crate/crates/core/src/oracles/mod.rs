//! Exact linear optimization over the feasible regions: bipartite matchings,
//! general matchings, capacitated assignments, and the SPLC shift operator.
//!
//! All oracles maximize and accept non-negative weights. Matchings need not be
//! perfect; zero-weight edges are never reported.

mod blossom;
mod flow;
mod hungarian;
mod shift;

pub use blossom::max_weight_general_matching;
pub use flow::{max_weight_capacitated_assignment, CapacitatedSolution};
pub use hungarian::max_weight_bipartite_matching;
pub use shift::{shift, shift_chain, shift_in_place};

pub(crate) use flow::assign_flat;

#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// `mate[v]` is the partner of `v`: a good index for bipartite matchings,
    /// a vertex index for general ones.
    pub mate: Vec<Option<usize>>,
    pub value: f64,
}

impl Matching {
    /// Matched pairs `(a, b)`; for general matchings each edge is listed once with `a < b`.
    pub fn pairs(&self, bipartite: bool) -> Vec<(usize, usize)> {
        self.mate
            .iter()
            .enumerate()
            .filter_map(|(a, m)| m.map(|b| (a, b)))
            .filter(|&(a, b)| bipartite || a < b)
            .collect()
    }
}
