//! Network geometry: F-AP positions, F-AP connectivity, and per-slot user
//! placement inside each serving cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the F-AP connectivity matrix is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConnectivitySpec {
    Pattern(ConnectivityPattern),
    /// Explicit 0/1 matrix, must be square, symmetric, zero-diagonal.
    Matrix(Vec<Vec<u8>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityPattern {
    /// Complete graph over the F-APs.
    Full,
    /// Each F-AP connects to its two ring neighbors.
    Ring,
    /// No inter-F-AP links at all.
    None,
}

impl Default for ConnectivitySpec {
    fn default() -> Self {
        ConnectivitySpec::Pattern(ConnectivityPattern::Full)
    }
}

/// Static network layout: one entry per F-AP.
#[derive(Clone, Debug)]
pub struct Topology {
    pub n_faps: usize,
    pub cell_radius: f64,
    /// Symmetric 0/1 matrix with zero diagonal.
    pub connectivity: Vec<Vec<u8>>,
    /// F-AP cell centers, meters.
    pub fap_positions: Vec<(f64, f64)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Neighbor set of F-AP `n` (indices of connected F-APs, ascending).
    pub fn neighbors(&self, n: usize) -> &[usize] {
        &self.neighbors[n]
    }
}

/// Builds the F-AP layout. Cell centers sit on a square grid with spacing
/// `2 * cell_radius` so cells do not overlap.
pub fn build_topology(
    n_faps: usize,
    cell_radius: f64,
    spec: &ConnectivitySpec,
) -> Result<Topology> {
    if n_faps == 0 {
        return Err(Error::Config("n_faps must be at least 1".into()));
    }
    if !(cell_radius > 0.0) {
        return Err(Error::Config("cell_radius must be positive".into()));
    }

    let connectivity = match spec {
        ConnectivitySpec::Pattern(p) => pattern_matrix(n_faps, *p),
        ConnectivitySpec::Matrix(m) => validated_matrix(n_faps, m)?,
    };

    let cols = (n_faps as f64).sqrt().ceil() as usize;
    let spacing = 2.0 * cell_radius;
    let fap_positions = (0..n_faps)
        .map(|i| (((i % cols) as f64) * spacing, ((i / cols) as f64) * spacing))
        .collect();

    let neighbors = (0..n_faps)
        .map(|n| {
            (0..n_faps)
                .filter(|&m| m != n && connectivity[n][m] == 1)
                .collect()
        })
        .collect();

    Ok(Topology {
        n_faps,
        cell_radius,
        connectivity,
        fap_positions,
        neighbors,
    })
}

fn pattern_matrix(n: usize, pattern: ConnectivityPattern) -> Vec<Vec<u8>> {
    let mut m = vec![vec![0u8; n]; n];
    match pattern {
        ConnectivityPattern::Full => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        m[i][j] = 1;
                    }
                }
            }
        }
        ConnectivityPattern::Ring => {
            if n >= 2 {
                for i in 0..n {
                    let next = (i + 1) % n;
                    m[i][next] = 1;
                    m[next][i] = 1;
                }
            }
        }
        ConnectivityPattern::None => {}
    }
    m
}

fn validated_matrix(n: usize, m: &[Vec<u8>]) -> Result<Vec<Vec<u8>>> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::Config(format!(
            "connectivity override must be a {n}x{n} matrix"
        )));
    }
    for i in 0..n {
        if m[i][i] != 0 {
            return Err(Error::Config(format!(
                "connectivity diagonal must be zero (row {i})"
            )));
        }
        for j in 0..n {
            if m[i][j] > 1 {
                return Err(Error::Config(format!(
                    "connectivity entries must be 0 or 1 (got {} at [{i}][{j}])",
                    m[i][j]
                )));
            }
            if m[i][j] != m[j][i] {
                return Err(Error::Config(format!(
                    "connectivity must be symmetric (mismatch at [{i}][{j}])"
                )));
            }
        }
    }
    Ok(m.to_vec())
}

/// Per-slot user placement. Users are statically assigned to F-APs
/// (`users_per_fap` each); positions are redrawn uniformly over the serving
/// disk every slot, so only the distance to the serving F-AP is kept.
#[derive(Clone, Debug)]
pub struct UserLayout {
    pub users_per_fap: usize,
    /// `distances[n][k]`: distance from F-AP `n` to its `k`-th user, meters.
    pub distances: Vec<Vec<f64>>,
}

impl UserLayout {
    /// Serving F-AP of a global user id.
    pub fn serving_fap(&self, user: usize) -> usize {
        user / self.users_per_fap.max(1)
    }

    pub fn total_users(&self) -> usize {
        self.distances.iter().map(Vec::len).sum()
    }
}

/// Draws every user position uniformly over its serving cell's disk.
/// Distances land in `(0, cell_radius]`.
pub fn place_users(topology: &Topology, users_per_fap: usize, rng: &mut impl Rng) -> UserLayout {
    let distances = (0..topology.n_faps)
        .map(|_| {
            (0..users_per_fap)
                // uniform over the disk: CDF r^2/R^2, so r = R*sqrt(u), u in (0,1]
                .map(|_| topology.cell_radius * (1.0 - rng.random::<f64>()).sqrt())
                .collect()
        })
        .collect();
    UserLayout {
        users_per_fap,
        distances,
    }
}
