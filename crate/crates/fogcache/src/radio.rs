//! Wireless rates, the three transmission-mode delays, and the exact
//! popularity-weighted average-delay objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::popularity::{FileId, PopularityVector};
use crate::topology::Topology;
use crate::{Error, Result};

/// How the user-to-F-AP distance enters the SNR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathlossMode {
    /// Distance contributes a path-loss gain `d^-eta`.
    Exponent,
    /// Distance multiplies the SNR as a raw factor.
    Literal,
}

/// Inter-F-AP delay when several neighbors hold the file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoopDelayMode {
    /// Sum one backhaul term per helper.
    Literal,
    /// Helpers split the transfer: delay shrinks with helper count.
    Harmonic,
}

/// Physical-layer and link constants shared by all F-APs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadioParams {
    /// Channel bandwidth, Hz.
    pub bandwidth: f64,
    /// Transmit power, watts.
    pub tx_power: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    /// Fixed interference power, watts.
    pub interference_power: f64,
    /// Path-loss exponent for `PathlossMode::Exponent`.
    pub pathloss_exponent: f64,
    /// File size, bits.
    pub file_size: f64,
    /// Cloud-to-F-AP rate, bits/s.
    pub backhaul_rate: f64,
    /// F-AP-to-F-AP rate, bits/s.
    pub inter_fap_rate: f64,
    /// Wireless rates are clamped up to this floor during simulation, bits/s.
    pub rate_floor: f64,
    pub pathloss_mode: PathlossMode,
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("tx_power", self.tx_power),
            ("noise_psd", self.noise_psd),
            ("interference_power", self.interference_power),
            ("pathloss_exponent", self.pathloss_exponent),
            ("file_size", self.file_size),
            ("backhaul_rate", self.backhaul_rate),
            ("inter_fap_rate", self.inter_fap_rate),
            ("rate_floor", self.rate_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Small-scale channel gains `|h|^2` for one slot, per (F-AP, user).
#[derive(Clone, Debug)]
pub struct ChannelDraw {
    pub gains: Vec<Vec<f64>>,
}

/// Draws standard-exponential channel gains for every (F-AP, user) pair.
pub fn draw_channel(n_faps: usize, users_per_fap: usize, rng: &mut impl Rng) -> ChannelDraw {
    let gains = (0..n_faps)
        .map(|_| {
            (0..users_per_fap)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect()
        })
        .collect();
    ChannelDraw { gains }
}

/// Shannon-style downlink rate for one (F-AP, user) pair, bits/s.
pub fn wireless_rate(params: &RadioParams, gain: f64, distance: f64) -> f64 {
    let distance_factor = match params.pathloss_mode {
        PathlossMode::Exponent => distance.powf(-params.pathloss_exponent),
        PathlossMode::Literal => distance,
    };
    let snr = gain * distance_factor * params.tx_power
        / (params.noise_psd * params.bandwidth + params.interference_power);
    params.bandwidth * (1.0 + snr).log2()
}

/// Wireless delivery delay `Z1 = Q / rate`.
pub fn delay_fap_to_user(params: &RadioParams, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::NonpositiveRate(format!(
            "wireless rate {rate} bits/s"
        )));
    }
    Ok(params.file_size / rate)
}

/// Inter-F-AP delay `Z2` given how many neighbors hold the file.
pub fn delay_fap_to_fap(params: &RadioParams, helpers: usize, mode: CoopDelayMode) -> f64 {
    if helpers == 0 {
        return 0.0;
    }
    match mode {
        CoopDelayMode::Literal => params.file_size * helpers as f64 / params.inter_fap_rate,
        CoopDelayMode::Harmonic => params.file_size / (helpers as f64 * params.inter_fap_rate),
    }
}

/// Backhaul delay `Z3 = Q / backhaul_rate`.
pub fn delay_cloud_to_fap(params: &RadioParams) -> f64 {
    params.file_size / params.backhaul_rate
}

/// Joint caching state: per-F-AP ordered slot lists plus a binary membership
/// view, kept consistent at all times.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheMatrix {
    n_faps: usize,
    capacity: usize,
    library_size: usize,
    /// `slots[n][s-1]` holds the file in slot `s` of F-AP `n`, 0 if empty.
    slots: Vec<Vec<FileId>>,
    /// `cached[n][f-1]` mirrors "file f present in F-AP n".
    cached: Vec<Vec<bool>>,
}

impl CacheMatrix {
    pub fn new(n_faps: usize, capacity: usize, library_size: usize) -> Self {
        Self {
            n_faps,
            capacity,
            library_size,
            slots: vec![vec![0; capacity]; n_faps],
            cached: vec![vec![false; library_size]; n_faps],
        }
    }

    pub fn n_faps(&self) -> usize {
        self.n_faps
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, fap: usize, file: FileId) -> bool {
        file != 0 && self.cached[fap][file as usize - 1]
    }

    pub fn row(&self, fap: usize) -> &[FileId] {
        &self.slots[fap]
    }

    pub fn occupancy(&self, fap: usize) -> usize {
        self.slots[fap].iter().filter(|&&f| f != 0).count()
    }

    /// Number of neighbors of `fap` that hold `file`.
    pub fn helper_count(&self, topology: &Topology, fap: usize, file: FileId) -> usize {
        topology
            .neighbors(fap)
            .iter()
            .filter(|&&m| self.contains(m, file))
            .count()
    }

    /// Puts `file` into 1-based `slot` of `fap`, returning the evicted file id
    /// (0 if the slot was empty). Rejects placements that would duplicate a
    /// file already stored in another slot of the same F-AP.
    pub fn replace(&mut self, fap: usize, slot: usize, file: FileId) -> Result<FileId> {
        if slot == 0 || slot > self.capacity {
            return Err(Error::Domain(format!(
                "slot {slot} outside 1..={}",
                self.capacity
            )));
        }
        if file == 0 || file as usize > self.library_size {
            return Err(Error::Domain(format!("file {file} outside library")));
        }
        let evicted = self.slots[fap][slot - 1];
        if evicted != file && self.contains(fap, file) {
            return Err(Error::DuplicateCache(format!(
                "file {file} already cached at F-AP {fap}"
            )));
        }
        if evicted != 0 {
            self.cached[fap][evicted as usize - 1] = false;
        }
        self.slots[fap][slot - 1] = file;
        self.cached[fap][file as usize - 1] = true;
        Ok(evicted)
    }

    /// Overwrites a whole row from a recency list (LRU view). The list must
    /// be duplicate-free and no longer than the capacity.
    pub fn set_row(&mut self, fap: usize, files: &[FileId]) -> Result<()> {
        if files.len() > self.capacity {
            return Err(Error::Domain(format!(
                "row of {} files exceeds capacity {}",
                files.len(),
                self.capacity
            )));
        }
        for flag in &mut self.cached[fap] {
            *flag = false;
        }
        for slot in &mut self.slots[fap] {
            *slot = 0;
        }
        for (i, &f) in files.iter().enumerate() {
            if f == 0 || f as usize > self.library_size {
                return Err(Error::Domain(format!("file {f} outside library")));
            }
            if self.cached[fap][f as usize - 1] {
                return Err(Error::DuplicateCache(format!("file {f} repeated in row")));
            }
            self.slots[fap][i] = f;
            self.cached[fap][f as usize - 1] = true;
        }
        Ok(())
    }
}

/// Which transmission mode serves a request for `file` at `fap`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tier {
    Local,
    Neighbor,
    Cloud,
}

pub fn tier(cache: &CacheMatrix, topology: &Topology, fap: usize, file: FileId) -> Tier {
    if cache.contains(fap, file) {
        Tier::Local
    } else if cache.helper_count(topology, fap, file) > 0 {
        Tier::Neighbor
    } else {
        Tier::Cloud
    }
}

/// Composite delay for one (F-AP, file): `Z1`, `Z1+Z2`, or `Z1+Z3` depending
/// on where the file sits.
pub fn file_delay(
    cache: &CacheMatrix,
    topology: &Topology,
    fap: usize,
    file: FileId,
    z1: f64,
    z2: f64,
    z3: f64,
) -> f64 {
    match tier(cache, topology, fap, file) {
        Tier::Local => z1,
        Tier::Neighbor => z1 + z2,
        Tier::Cloud => z1 + z3,
    }
}

/// The delay a request for `file` at `fap` pays on top of the wireless hop.
pub fn miss_part(
    params: &RadioParams,
    cache: &CacheMatrix,
    topology: &Topology,
    fap: usize,
    file: FileId,
    mode: CoopDelayMode,
) -> f64 {
    match tier(cache, topology, fap, file) {
        Tier::Local => 0.0,
        Tier::Neighbor => {
            delay_fap_to_fap(params, cache.helper_count(topology, fap, file), mode)
        }
        Tier::Cloud => delay_cloud_to_fap(params),
    }
}

/// Popularity-weighted instantaneous objective: `sum_f sum_n P[n][f] * d[n][f]`.
pub fn average_delay(popularity: &[PopularityVector], delays: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (pop, row) in popularity.iter().zip(delays) {
        for (f, &d) in row.iter().enumerate() {
            acc += pop.probs()[f] * d;
        }
    }
    acc
}

/// Outcome of the `Z1 < Z2 << Z3` sanity check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DelayOrdering {
    Ok,
    Warning(String),
}

/// Flags parameterizations that break the assumed tier ordering. "Much
/// smaller" is taken as a factor of ten.
pub fn validate_delay_ordering(z1: f64, z2: f64, z3: f64) -> DelayOrdering {
    if !(z1 < z2) {
        return DelayOrdering::Warning(format!("Z1 {z1} >= Z2 {z2}"));
    }
    if !(z2 * 10.0 <= z3) {
        return DelayOrdering::Warning(format!("Z2 {z2} not well below Z3 {z3}"));
    }
    DelayOrdering::Ok
}
