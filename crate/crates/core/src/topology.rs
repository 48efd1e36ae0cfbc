//! System description, node associations and random channel draws.
//!
//! A system is written `(N_T^K_T x N_X^K_X x N_R^K_R, d1xd2)`: `K_T`
//! transmitters with `N_T` antennas each, `K_X` relays, `K_R` receivers, `d1`
//! streams per first-hop link and `d2` streams per receiver. All indices are
//! 0-based.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMatrix};

/// Static description of a symmetric relay interference broadcast channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub transmitters: usize,
    pub relays: usize,
    pub receivers: usize,
    pub tx_antennas: usize,
    pub relay_antennas: usize,
    pub rx_antennas: usize,
    /// Streams from a transmitter to each of its relays.
    pub first_hop_streams: usize,
    /// Streams from a relay to each of its receivers.
    pub second_hop_streams: usize,
    /// Fraction of the frame spent on the first hop, in (0, 1).
    pub timesharing: f64,
    /// Linear sum-power budget of every transmitter.
    pub tx_power: f64,
    /// Linear sum-power budget of every relay.
    pub relay_power: f64,
    pub relay_noise: f64,
    pub receiver_noise: f64,
}

/// `10^(dB/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemSpec {
    /// Builds and validates a system with default timesharing 0.5, unit noise and unit powers.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        (tx_antennas, transmitters): (usize, usize),
        (relay_antennas, relays): (usize, usize),
        (rx_antennas, receivers): (usize, usize),
        first_hop_streams: usize,
        second_hop_streams: usize,
    ) -> Result<Self> {
        let spec = SystemSpec {
            transmitters,
            relays,
            receivers,
            tx_antennas,
            relay_antennas,
            rx_antennas,
            first_hop_streams,
            second_hop_streams,
            timesharing: 0.5,
            tx_power: 1.0,
            relay_power: 1.0,
            relay_noise: 1.0,
            receiver_noise: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.transmitters,
            self.relays,
            self.receivers,
            self.tx_antennas,
            self.relay_antennas,
            self.rx_antennas,
            self.first_hop_streams,
            self.second_hop_streams,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidSystem("all counts must be positive".into()));
        }
        if !self.relays.is_multiple_of(self.transmitters) {
            return Err(Error::InvalidSystem(format!(
                "K_X={} is not a multiple of K_T={}",
                self.relays, self.transmitters
            )));
        }
        if !self.receivers.is_multiple_of(self.relays) {
            return Err(Error::InvalidSystem(format!(
                "K_R={} is not a multiple of K_X={}",
                self.receivers, self.relays
            )));
        }
        if self.first_hop_streams > self.tx_antennas.min(self.relay_antennas) {
            return Err(Error::InvalidSystem(format!(
                "d1={} exceeds min(N_T, N_X)",
                self.first_hop_streams
            )));
        }
        if self.second_hop_streams > self.relay_antennas.min(self.rx_antennas) {
            return Err(Error::InvalidSystem(format!(
                "d2={} exceeds min(N_X, N_R)",
                self.second_hop_streams
            )));
        }
        if !(self.timesharing > 0.0 && self.timesharing < 1.0) {
            return Err(Error::InvalidSystem(format!(
                "timesharing {} outside (0, 1)",
                self.timesharing
            )));
        }
        let positive = [
            self.tx_power,
            self.relay_power,
            self.relay_noise,
            self.receiver_noise,
        ];
        if positive.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidSystem("powers must be finite and nonnegative".into()));
        }
        if self.relay_noise <= 0.0 || self.receiver_noise <= 0.0 {
            return Err(Error::InvalidSystem("noise variances must be positive".into()));
        }
        Ok(())
    }

    pub fn with_timesharing(mut self, t: f64) -> Self {
        self.timesharing = t;
        self
    }

    /// Sets both power budgets from dB values.
    pub fn with_power_db(mut self, tx_db: f64, relay_db: f64) -> Self {
        self.tx_power = db_to_linear(tx_db);
        self.relay_power = db_to_linear(relay_db);
        self
    }

    pub fn with_powers(mut self, tx_power: f64, relay_power: f64) -> Self {
        self.tx_power = tx_power;
        self.relay_power = relay_power;
        self
    }
}

impl FromStr for SystemSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        parse_system_spec(text)
    }
}

impl fmt::Display for SystemSpec {
    /// Canonical system string, e.g. `(2^3 x 2^6 x 2^12, 1x1)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}^{} x {}^{} x {}^{}, {}x{})",
            self.tx_antennas,
            self.transmitters,
            self.relay_antennas,
            self.relays,
            self.rx_antennas,
            self.receivers,
            self.first_hop_streams,
            self.second_hop_streams
        )
    }
}

/// Parses `(A^a x B^b x C^c, d1xd2)`. Whitespace is free; `×` is accepted for `x`.
pub fn parse_system_spec(text: &str) -> Result<SystemSpec> {
    let syntax = |reason: &str| Error::Syntax {
        input: text.to_string(),
        reason: reason.to_string(),
    };
    let compact: String = text
        .chars()
        .filter(|ch| !ch.is_whitespace())
        .map(|ch| if ch == '×' || ch == 'X' { 'x' } else { ch })
        .collect();
    let inner = compact
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| syntax("expected surrounding parentheses"))?;
    let (nodes, streams) = inner
        .split_once(',')
        .ok_or_else(|| syntax("expected ',' between node list and streams"))?;

    let number = |s: &str| -> Result<usize> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(syntax(&format!("expected a positive integer, found {s:?}")));
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(syntax(&format!("expected a positive integer, found {s:?}"))),
            Ok(v) => Ok(v),
        }
    };

    let groups: Vec<&str> = nodes.split('x').collect();
    if groups.len() != 3 {
        return Err(syntax("expected three node groups A^a x B^b x C^c"));
    }
    let mut parsed = [(0, 0); 3];
    for (slot, group) in parsed.iter_mut().zip(&groups) {
        let (antennas, count) = group
            .split_once('^')
            .ok_or_else(|| syntax("node group must look like N^K"))?;
        *slot = (number(antennas)?, number(count)?);
    }
    let (d1, d2) = streams
        .split_once('x')
        .ok_or_else(|| syntax("streams must look like d1xd2"))?;
    SystemSpec::new(parsed[0], parsed[1], parsed[2], number(d1)?, number(d2)?)
}

/// Receiver-to-relay (`chi`) and relay-to-transmitter (`mu`) associations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub chi: Vec<usize>,
    pub mu: Vec<usize>,
    /// Receivers served by each relay.
    pub relay_receivers: Vec<Vec<usize>>,
    /// Relays owned by each transmitter.
    pub transmitter_relays: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from explicit maps; relays or transmitters may serve nobody.
    pub fn from_maps(chi: Vec<usize>, mu: Vec<usize>, transmitters: usize) -> Result<Self> {
        let relays = mu.len();
        if let Some(&bad) = chi.iter().find(|&&m| m >= relays) {
            return Err(Error::InvalidArgument(format!("chi refers to relay {bad}")));
        }
        if let Some(&bad) = mu.iter().find(|&&j| j >= transmitters) {
            return Err(Error::InvalidArgument(format!("mu refers to transmitter {bad}")));
        }
        let mut relay_receivers = vec![Vec::new(); relays];
        for (q, &m) in chi.iter().enumerate() {
            relay_receivers[m].push(q);
        }
        let mut transmitter_relays = vec![Vec::new(); transmitters];
        for (k, &j) in mu.iter().enumerate() {
            transmitter_relays[j].push(k);
        }
        Ok(Topology {
            chi,
            mu,
            relay_receivers,
            transmitter_relays,
        })
    }

    pub fn transmitters(&self) -> usize {
        self.transmitter_relays.len()
    }

    pub fn relays(&self) -> usize {
        self.mu.len()
    }

    pub fn receivers(&self) -> usize {
        self.chi.len()
    }
}

/// Symmetric block association: relay `k` serves receivers
/// `k*(K_R/K_X) .. (k+1)*(K_R/K_X)`, transmitter `j` owns relays
/// `j*(K_X/K_T) .. (j+1)*(K_X/K_T)`.
pub fn build_topology(spec: &SystemSpec) -> Topology {
    let per_tx = spec.relays / spec.transmitters;
    let per_relay = spec.receivers / spec.relays;
    let mu = (0..spec.relays).map(|k| k / per_tx).collect();
    let chi = (0..spec.receivers).map(|q| q / per_relay).collect();
    Topology::from_maps(chi, mu, spec.transmitters).expect("block maps are in range")
}

/// Channel matrices of both hops.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `first_hop[m][j]`: transmitter `j` to relay `m`, `N_X x N_T`.
    pub first_hop: Vec<Vec<CMatrix>>,
    /// `second_hop[q][m]`: relay `m` to receiver `q`, `N_R x N_X`.
    pub second_hop: Vec<Vec<CMatrix>>,
}

impl ChannelSet {
    /// Checks that matrix shapes are consistent with the topology and every entry is finite.
    pub fn check(&self, topology: &Topology) -> Result<()> {
        let relays = topology.relays();
        let transmitters = topology.transmitters();
        if self.first_hop.len() != relays || self.first_hop.iter().any(|r| r.len() != transmitters) {
            return Err(Error::DimensionMismatch("first-hop channel grid".into()));
        }
        if self.second_hop.len() != topology.receivers()
            || self.second_hop.iter().any(|r| r.len() != relays)
        {
            return Err(Error::DimensionMismatch("second-hop channel grid".into()));
        }
        let all = self.first_hop.iter().chain(&self.second_hop).flatten();
        for h in all {
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument("non-finite channel entry".into()));
            }
        }
        Ok(())
    }

    /// Order-sensitive 64-bit fingerprint of every entry's bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0x243f_6a88_85a3_08d3_u64;
        for m in self.first_hop.iter().chain(&self.second_hop).flatten() {
            for z in m.iter() {
                h = derive_seed(h, z.re.to_bits());
                h = derive_seed(h, z.im.to_bits());
            }
        }
        h
    }
}

/// SplitMix64 finalizer applied to `parent ^ (index * golden)`; used for every
/// seed derivation so that realization `r` of master seed `s` always sees the
/// same stream regardless of scheduling.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 generator for a derived seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws every channel entry i.i.d. CN(0, 1). Identical seeds give bit-identical sets.
pub fn sample_channels(topology: &Topology, spec: &SystemSpec, seed: u64) -> ChannelSet {
    let mut rng = rng_from_seed(seed);
    let first_hop = (0..topology.relays())
        .map(|_| {
            (0..topology.transmitters())
                .map(|_| complex_gaussian(&mut rng, spec.relay_antennas, spec.tx_antennas))
                .collect()
        })
        .collect();
    let second_hop = (0..topology.receivers())
        .map(|_| {
            (0..topology.relays())
                .map(|_| complex_gaussian(&mut rng, spec.rx_antennas, spec.relay_antennas))
                .collect()
        })
        .collect();
    ChannelSet {
        first_hop,
        second_hop,
    }
}
