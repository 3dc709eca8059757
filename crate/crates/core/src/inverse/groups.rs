use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::StarGraph;

/// Edges split into runs of equal order.
///
/// Groups are 1-based: group `i` has order `omega(i)` and consists of edges
/// `p(i-1)+1 ..= p(i)`. By convention `omega(m+1) = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupTable {
    /// `omega_1 > .. > omega_m`.
    pub omegas: Vec<usize>,
    /// `p_0 = 0 < p_1 < .. < p_m = p`.
    pub bounds: Vec<usize>,
    /// `N` with `p_N = w`.
    pub target: usize,
}

impl GroupTable {
    pub fn m(&self) -> usize {
        self.omegas.len()
    }

    /// `omega_i` for `i = 1..=m+1`.
    pub fn omega(&self, i: usize) -> usize {
        if i == self.m() + 1 {
            1
        } else {
            self.omegas[i - 1]
        }
    }

    /// `p_i` for `i = 0..=m`.
    pub fn p(&self, i: usize) -> usize {
        self.bounds[i]
    }

    /// The reconstructed edge `p_N`.
    pub fn target_edge(&self) -> usize {
        self.bounds[self.target]
    }

    /// Group index of edge `j`.
    pub fn group_of(&self, j: usize) -> usize {
        (1..=self.m()).find(|&i| j <= self.bounds[i]).expect("edge index in range")
    }

    /// The fixed-`s` choices admitted by the reduction: `1..=p_1` when
    /// `N > 1`, `1..=p_1-1` when `N = 1`.
    pub fn admissible_s(&self) -> Vec<usize> {
        let top = if self.target > 1 { self.bounds[1] } else { self.bounds[1] - 1 };
        (1..=top).collect()
    }
}

/// Groups edges by order and locates `w` among the group boundaries.
pub fn group_edges(g: &StarGraph) -> Result<GroupTable> {
    let mut omegas = Vec::new();
    let mut bounds = vec![0];
    for (i, e) in g.edges.iter().enumerate() {
        if omegas.last() != Some(&e.order) {
            if i > 0 {
                bounds.push(i);
            }
            omegas.push(e.order);
        }
    }
    bounds.push(g.edges.len());
    let target = bounds
        .iter()
        .position(|&b| b == g.w && b > 0)
        .ok_or_else(|| Error::InvalidW { w: g.w, boundaries: bounds[1..].to_vec() })?;
    if g.w < 2 {
        return Err(Error::InvalidW { w: g.w, boundaries: bounds[1..].to_vec() });
    }
    Ok(GroupTable { omegas, bounds, target })
}
