//! Finite hypercubic lattices `[1, n]^d` with free boundaries.
//!
//! Sites are stored in lexicographic order of their coordinates (the last
//! coordinate varies fastest), so the site with coordinates `(c_1, ..., c_d)`
//! has index `sum_k (c_k - 1) * n^(d - 1 - k)`. Every array indexed by site in
//! this crate uses that order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default hard cap on the number of sites a lattice may have.
pub const DEFAULT_MAX_SITES: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice dimension must be at least 1 (got {0})")]
    ZeroDimension(usize),
    #[error("lattice side length must be at least 1 (got {0})")]
    ZeroSide(usize),
    #[error("lattice with d={d}, n={n} has {volume} sites, above the cap of {cap}")]
    CapacityExceeded {
        d: usize,
        n: usize,
        volume: String,
        cap: usize,
    },
    #[error("dimension mismatch: site has {site} coordinates, origin has {origin}")]
    DimensionMismatch { site: usize, origin: usize },
    #[error("site index {index} out of range for a lattice of {volume} sites")]
    UnknownSite { index: usize, volume: usize },
    #[error("coordinates {0:?} do not lie in the lattice")]
    OutsideLattice(Vec<u32>),
}

/// Geometry of `V_n = Z^d ∩ [1, n]^d` with its nearest-neighbour edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSpec {
    dim: usize,
    side: usize,
    coords: Vec<u32>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl LatticeSpec {
    /// Builds the lattice with the default site cap.
    pub fn build(dim: usize, side: usize) -> Result<Self, LatticeError> {
        Self::build_with_cap(dim, side, DEFAULT_MAX_SITES)
    }

    pub fn build_with_cap(dim: usize, side: usize, cap: usize) -> Result<Self, LatticeError> {
        if dim < 1 {
            return Err(LatticeError::ZeroDimension(dim));
        }
        if side < 1 {
            return Err(LatticeError::ZeroSide(side));
        }
        let volume = checked_volume(dim, side)
            .filter(|&v| v <= cap)
            .ok_or_else(|| LatticeError::CapacityExceeded {
                d: dim,
                n: side,
                volume: volume_string(dim, side),
                cap,
            })?;

        let mut coords = Vec::with_capacity(volume * dim);
        let mut current = vec![1u32; dim];
        for _ in 0..volume {
            coords.extend_from_slice(&current);
            // odometer increment, last coordinate fastest
            for k in (0..dim).rev() {
                if (current[k] as usize) < side {
                    current[k] += 1;
                    break;
                }
                current[k] = 1;
            }
        }

        let mut edges = Vec::with_capacity(dim * volume);
        let mut neighbors = vec![Vec::with_capacity(2 * dim); volume];
        for i in 0..volume {
            let site = &coords[i * dim..(i + 1) * dim];
            let mut stride = 1usize;
            for k in (0..dim).rev() {
                if (site[k] as usize) < side {
                    let j = i + stride;
                    edges.push((i, j));
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
                stride *= side;
            }
        }
        edges.sort_unstable();
        for list in &mut neighbors {
            list.sort_unstable();
        }

        Ok(Self {
            dim,
            side,
            coords,
            edges,
            neighbors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `|V_n| = n^d`.
    pub fn volume(&self) -> usize {
        self.neighbors.len()
    }

    /// Coordinates of site `index` (1-based in every axis).
    pub fn site(&self, index: usize) -> &[u32] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn sites(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Unordered nearest-neighbour pairs `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.neighbors[index]
    }

    pub fn index_of(&self, site: &[u32]) -> Result<usize, LatticeError> {
        if site.len() != self.dim {
            return Err(LatticeError::DimensionMismatch {
                site: site.len(),
                origin: self.dim,
            });
        }
        let mut index = 0usize;
        for &c in site {
            if c < 1 || c as usize > self.side {
                return Err(LatticeError::OutsideLattice(site.to_vec()));
            }
            index = index * self.side + (c as usize - 1);
        }
        Ok(index)
    }

    pub fn check_site(&self, index: usize) -> Result<(), LatticeError> {
        if index < self.volume() {
            Ok(())
        } else {
            Err(LatticeError::UnknownSite {
                index,
                volume: self.volume(),
            })
        }
    }

    /// Lexicographically first site `(1, ..., 1)`.
    pub fn corner(&self) -> Vec<u32> {
        vec![1; self.dim]
    }

    pub fn shape(&self) -> LatticeShape {
        LatticeShape {
            d: self.dim,
            n: self.side,
        }
    }
}

/// The `(d, n)` pair identifying a lattice, as it appears in records and plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeShape {
    pub d: usize,
    pub n: usize,
}

impl LatticeShape {
    pub fn volume(&self) -> Option<usize> {
        checked_volume(self.d, self.n)
    }

    pub fn build(&self) -> Result<LatticeSpec, LatticeError> {
        LatticeSpec::build(self.d, self.n)
    }
}

fn checked_volume(dim: usize, side: usize) -> Option<usize> {
    u32::try_from(dim).ok().and_then(|d| side.checked_pow(d))
}

fn volume_string(dim: usize, side: usize) -> String {
    match checked_volume(dim, side) {
        Some(v) => v.to_string(),
        None => format!("{side}^{dim}"),
    }
}

/// L1 (graph) distance between two sites.
pub fn site_norm(site: &[u32], origin: &[u32]) -> Result<f64, LatticeError> {
    if site.len() != origin.len() {
        return Err(LatticeError::DimensionMismatch {
            site: site.len(),
            origin: origin.len(),
        });
    }
    Ok(site
        .iter()
        .zip(origin)
        .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
        .sum::<u64>() as f64)
}
