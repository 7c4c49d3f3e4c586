//! Channel scenarios and the real-valued lifting of complex channel vectors.
//!
//! A complex gain `a + ib` seen by one receive antenna becomes the 2x2 block
//! `[[a, -b], [b, a]]`; stacking the blocks of all `M` antennas gives the
//! `2M x 2` real channel of a single-antenna user. Symbol extension over `N`
//! channel uses replicates it block-diagonally.

use std::collections::BTreeMap;
use std::collections::btree_map::Entry;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron_identity, Mat};

/// A complex channel gain stored as magnitude and phase (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    pub mag: f64,
    pub phase: f64,
}

impl Polar {
    pub const fn new(mag: f64, phase: f64) -> Self {
        Self { mag, phase }
    }

    pub fn re(&self) -> f64 {
        self.mag * self.phase.cos()
    }

    pub fn im(&self) -> f64 {
        self.mag * self.phase.sin()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.mag * self.mag
    }
}

/// Identifies the channel from user `user` of cell `tx_cell` to the base
/// station of cell `rx_cell`. All indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelKey {
    pub rx_cell: usize,
    pub user: usize,
    pub tx_cell: usize,
}

/// A user `index` (zero-based, also its decoding stage) inside `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId {
    pub cell: usize,
    pub index: usize,
}

/// A validated multi-cell uplink scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    users_per_cell: Vec<usize>,
    antennas: usize,
    noise_variance: f64,
    channels: BTreeMap<ChannelKey, Vec<Polar>>,
}

impl Scenario {
    pub fn new(
        users_per_cell: Vec<usize>,
        antennas: usize,
        noise_variance: f64,
        channels: BTreeMap<ChannelKey, Vec<Polar>>,
    ) -> Result<Self> {
        let scenario = Self { users_per_cell, antennas, noise_variance, channels };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        if self.users_per_cell.is_empty() {
            return Err(Error::Input("K: scenario needs at least one cell".into()));
        }
        if let Some(k) = self.users_per_cell.iter().position(|&n| n == 0) {
            return Err(Error::Input(format!("users_per_cell[{}]: cell has no users", k + 1)));
        }
        if self.antennas == 0 {
            return Err(Error::Input("M: need at least one receive antenna".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(Error::Input(format!(
                "noise_variance: must be finite and > 0, got {}",
                self.noise_variance
            )));
        }
        for key in self.channels.keys() {
            if key.rx_cell >= self.num_cells()
                || key.tx_cell >= self.num_cells()
                || key.user >= self.users_per_cell[key.tx_cell]
            {
                return Err(Error::Input(format!(
                    "channels: unexpected entry {}",
                    describe_key(key)
                )));
            }
        }
        for rx in 0..self.num_cells() {
            for (tx, &count) in self.users_per_cell.iter().enumerate() {
                for user in 0..count {
                    let key = ChannelKey { rx_cell: rx, user, tx_cell: tx };
                    let entries = self.channels.get(&key).ok_or_else(|| {
                        Error::Input(format!("channels: missing entry {}", describe_key(&key)))
                    })?;
                    if entries.len() != self.antennas {
                        return Err(Error::Input(format!(
                            "channels: entry {} has {} antennas, expected M = {}",
                            describe_key(&key),
                            entries.len(),
                            self.antennas
                        )));
                    }
                    for e in entries {
                        if !(e.mag.is_finite() && e.phase.is_finite() && e.mag >= 0.0) {
                            return Err(Error::Input(format!(
                                "channels: entry {} has invalid gain {:?}",
                                describe_key(&key),
                                e
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.users_per_cell.len()
    }

    pub fn users_per_cell(&self) -> &[usize] {
        &self.users_per_cell
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn channel(&self, key: ChannelKey) -> &[Polar] {
        &self.channels[&key]
    }

    pub fn channels(&self) -> &BTreeMap<ChannelKey, Vec<Polar>> {
        &self.channels
    }

    /// All users, cell-major then by decoding stage. The position in this
    /// list is the flat user index used by the rest of the crate.
    pub fn users(&self) -> Vec<UserId> {
        self.users_per_cell
            .iter()
            .enumerate()
            .flat_map(|(cell, &n)| (0..n).map(move |index| UserId { cell, index }))
            .collect()
    }

    pub fn num_users(&self) -> usize {
        self.users_per_cell.iter().sum()
    }

    /// Keeps only the first `m` antennas of every channel vector.
    pub fn truncate_antennas(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.antennas {
            return Err(Error::Input(format!(
                "antennas: requested M = {m}, scenario provides 1..={}",
                self.antennas
            )));
        }
        let channels = self
            .channels
            .iter()
            .map(|(k, v)| (*k, v[..m].to_vec()))
            .collect();
        Scenario::new(self.users_per_cell.clone(), m, self.noise_variance, channels)
    }

    /// The same network with noise variance `sigma2` per receive antenna.
    pub fn with_noise_variance(&self, sigma2: f64) -> Result<Self> {
        Scenario::new(self.users_per_cell.clone(), self.antennas, sigma2, self.channels.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioFile::from(self))?)
    }
}

fn describe_key(key: &ChannelKey) -> String {
    format!(
        "(rx_cell={}, user={}, tx_cell={})",
        key.rx_cell + 1,
        key.user + 1,
        key.tx_cell + 1
    )
}

/// On-disk scenario layout. Cell and user indices are one-based.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "K")]
    k: usize,
    users_per_cell: Vec<usize>,
    #[serde(rename = "M")]
    m: usize,
    noise_variance: f64,
    channels: Vec<ChannelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelRecord {
    rx_cell: usize,
    user: usize,
    tx_cell: usize,
    entries: Vec<Polar>,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        Self {
            k: s.num_cells(),
            users_per_cell: s.users_per_cell.clone(),
            m: s.antennas,
            noise_variance: s.noise_variance,
            channels: s
                .channels
                .iter()
                .map(|(key, entries)| ChannelRecord {
                    rx_cell: key.rx_cell + 1,
                    user: key.user + 1,
                    tx_cell: key.tx_cell + 1,
                    entries: entries.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        if f.k != f.users_per_cell.len() {
            return Err(Error::Input(format!(
                "K: declared {} cells but users_per_cell has {} entries",
                f.k,
                f.users_per_cell.len()
            )));
        }
        let mut channels = BTreeMap::new();
        for (n, rec) in f.channels.into_iter().enumerate() {
            if rec.rx_cell == 0 || rec.user == 0 || rec.tx_cell == 0 {
                return Err(Error::Input(format!(
                    "channels[{n}]: indices are one-based, got (rx_cell={}, user={}, tx_cell={})",
                    rec.rx_cell, rec.user, rec.tx_cell
                )));
            }
            let key = ChannelKey { rx_cell: rec.rx_cell - 1, user: rec.user - 1, tx_cell: rec.tx_cell - 1 };
            match channels.entry(key) {
                Entry::Occupied(_) => {
                    return Err(Error::Input(format!(
                        "channels[{n}]: duplicate entry {}",
                        describe_key(&key)
                    )))
                }
                Entry::Vacant(v) => {
                    v.insert(rec.entries);
                }
            }
        }
        Scenario::new(f.users_per_cell, f.m, f.noise_variance, channels)
    }
}

/// Parses and validates a JSON scenario document.
pub fn load_scenario<R: Read>(source: R) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_reader(source)?;
    Scenario::try_from(file)
}

/// Resolves `builtin:<name>` or a filesystem path to a scenario, optionally
/// truncated to `antennas` receive antennas.
pub fn resolve_scenario(source: &str, antennas: Option<usize>) -> Result<Scenario> {
    let scenario = if let Some(name) = source.strip_prefix("builtin:") {
        builtin_scenarios()
            .remove(name)
            .ok_or_else(|| Error::Input(format!("scenario: unknown builtin id `{name}` (expected mi or si)")))?
    } else {
        let file = std::fs::File::open(source)
            .map_err(|e| Error::Input(format!("scenario: cannot open `{source}`: {e}")))?;
        load_scenario(std::io::BufReader::new(file))?
    };
    match antennas {
        Some(m) if m != scenario.antennas() => scenario.truncate_antennas(m),
        _ => Ok(scenario),
    }
}

const fn p(mag: f64, phase: f64) -> Polar {
    Polar::new(mag, phase)
}

// (rx_cell, user, tx_cell) one-based -> two-antenna vector.
const MI_DIRECT: [((usize, usize, usize), [Polar; 2]); 4] = [
    ((1, 1, 1), [p(3.2, -0.72), p(2.9, 0.12)]),
    ((1, 2, 1), [p(2.3, 2.52), p(3.0, -1.32)]),
    ((2, 1, 2), [p(3.4, 2.23), p(3.1, 0.32)]),
    ((2, 2, 2), [p(3.0, -1.13), p(2.9, 0.45)]),
];

const MI_CROSS: [((usize, usize, usize), [Polar; 2]); 4] = [
    ((1, 1, 2), [p(1.6, 1.35), p(1.45, 1.23)]),
    ((1, 2, 2), [p(1.15, 0.37), p(1.5, 2.11)]),
    ((2, 1, 1), [p(1.7, 1.68), p(1.55, 0.91)]),
    ((2, 2, 1), [p(1.5, -0.76), p(1.45, -2.13)]),
];

const SI_CROSS: [((usize, usize, usize), [Polar; 2]); 4] = [
    ((1, 1, 2), [p(2.9, 1.35), p(2.7, 1.23)]),
    ((1, 2, 2), [p(2.5, 0.37), p(3.1, 2.11)]),
    ((2, 1, 1), [p(3.2, 1.68), p(2.7, 0.91)]),
    ((2, 2, 1), [p(3.1, -0.76), p(2.4, -2.13)]),
];

fn table_scenario(cross: &[((usize, usize, usize), [Polar; 2])]) -> Scenario {
    let channels = MI_DIRECT
        .iter()
        .chain(cross.iter())
        .map(|&((rx, user, tx), v)| {
            (ChannelKey { rx_cell: rx - 1, user: user - 1, tx_cell: tx - 1 }, v.to_vec())
        })
        .collect();
    Scenario::new(vec![2, 2], 2, 1.0, channels).expect("builtin table is complete")
}

/// The two reference two-cell scenarios with two users per cell and two
/// receive antennas: moderate interference (`mi`) and strong interference
/// (`si`). Both share the same direct channels. Use
/// [`Scenario::truncate_antennas`] for the single-antenna case.
pub fn builtin_scenarios() -> BTreeMap<String, Scenario> {
    BTreeMap::from([
        ("mi".to_string(), table_scenario(&MI_CROSS)),
        ("si".to_string(), table_scenario(&SI_CROSS)),
    ])
}

/// Real lifting of a complex channel vector: a `2M x 2` matrix whose row
/// pair `m` is `[[Re h_m, -Im h_m], [Im h_m, Re h_m]]`.
pub fn lift_complex_to_real(h: &[Polar]) -> Result<Mat> {
    let mut g = Mat::zeros(2 * h.len(), 2);
    for (m, e) in h.iter().enumerate() {
        let (re, im) = (e.re(), e.im());
        if !(re.is_finite() && im.is_finite()) {
            return Err(Error::Input(format!("channel entry {m} is not finite: {e:?}")));
        }
        g[(2 * m, 0)] = re;
        g[(2 * m, 1)] = -im;
        g[(2 * m + 1, 0)] = im;
        g[(2 * m + 1, 1)] = re;
    }
    Ok(g)
}

/// Symbol extension `I_N ⊗ G`.
pub fn extend(g: &Mat, n: usize) -> Result<Mat> {
    if n == 0 {
        return Err(Error::Input("extension length N must be at least 1".into()));
    }
    Ok(kron_identity(n, g))
}

/// A scenario with every channel lifted and extended to length `N`.
#[derive(Debug, Clone)]
pub struct LiftedNetwork {
    scenario: Scenario,
    extension: usize,
    users: Vec<UserId>,
    /// `g_bar[rx_cell][u]` is the `2MN x 2N` channel from flat user `u`.
    g_bar: Vec<Vec<Mat>>,
}

impl LiftedNetwork {
    pub fn new(scenario: &Scenario, extension: usize) -> Result<Self> {
        let users = scenario.users();
        let mut g_bar = Vec::with_capacity(scenario.num_cells());
        for rx in 0..scenario.num_cells() {
            let row = users
                .iter()
                .map(|u| {
                    let key = ChannelKey { rx_cell: rx, user: u.index, tx_cell: u.cell };
                    extend(&lift_complex_to_real(scenario.channel(key))?, extension)
                })
                .collect::<Result<Vec<_>>>()?;
            g_bar.push(row);
        }
        Ok(Self { scenario: scenario.clone(), extension, users, g_bar })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn extension(&self) -> usize {
        self.extension
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn user(&self, u: usize) -> UserId {
        self.users[u]
    }

    /// Flat index of `(cell, index)`.
    pub fn flat_index(&self, id: UserId) -> Option<usize> {
        self.users.iter().position(|&x| x == id)
    }

    /// Side length of the transmit covariances, `2N`.
    pub fn tx_dim(&self) -> usize {
        2 * self.extension
    }

    /// Side length of the receive covariances, `2MN`.
    pub fn rx_dim(&self) -> usize {
        2 * self.scenario.antennas() * self.extension
    }

    pub fn noise_variance(&self) -> f64 {
        self.scenario.noise_variance()
    }

    /// Extended real channel from flat user `u` to the base station of `rx_cell`.
    pub fn g_bar(&self, rx_cell: usize, u: usize) -> &Mat {
        &self.g_bar[rx_cell][u]
    }

    /// Users whose signals are present when user `u` is decoded: its own
    /// cell's users from stage `u` onwards, plus every out-of-cell user.
    pub fn signal_set(&self, u: usize) -> Vec<usize> {
        let me = self.users[u];
        (0..self.users.len())
            .filter(|&v| {
                let o = self.users[v];
                o.cell != me.cell || o.index >= me.index
            })
            .collect()
    }

    /// [`Self::signal_set`] without user `u` itself.
    pub fn interference_set(&self, u: usize) -> Vec<usize> {
        self.signal_set(u).into_iter().filter(|&v| v != u).collect()
    }
}
