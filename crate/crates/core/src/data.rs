//! Sample ingestion, fingerprints, and seeded synthetic distributions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used by every sampler, recorded in reports so runs can be reproduced.
pub const RNG_VERSION: &str = "rand_chacha-0.3/ChaCha8Rng";

/// Lowercases and splits on every character that is neither alphanumeric nor an apostrophe.
pub fn tokenize_text(bytes: &[u8]) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Encoding {
        offset: e.valid_up_to(),
    })?;
    Ok(text
        .to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Symbol counts, with symbols interned to dense ids in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    labels: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut h = Self::new();
        for t in tokens {
            h.add(t.as_ref(), 1);
        }
        h
    }

    /// Histogram over symbols `0..counts.len()`, keeping only positive counts.
    pub fn from_dense(counts: &[u64]) -> Self {
        let mut h = Self::new();
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                h.add(&i.to_string(), c);
            }
        }
        h
    }

    /// Adds `count` occurrences of `symbol`; returns its id.
    pub fn add(&mut self, symbol: &str, count: u64) -> usize {
        match self.index.get(symbol) {
            Some(&id) => {
                self.counts[id] += count;
                id
            }
            None => {
                let id = self.labels.len();
                self.labels.push(symbol.to_owned());
                self.counts.push(count);
                self.index.insert(symbol.to_owned(), id);
                id
            }
        }
    }

    pub fn get(&self, symbol: &str) -> Option<u64> {
        self.index.get(symbol).map(|&id| self.counts[id])
    }

    /// Sample size `n`.
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of distinct observed symbols.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.counts.iter().copied())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::from_counts(self.counts.iter().copied())
    }
}

/// Reads `symbol<TAB>count` or bare-count lines; bare counts are named `line<N>`.
pub fn histogram_from_counts<R: BufRead>(reader: R) -> Result<Histogram> {
    let mut h = Histogram::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (symbol, raw) = match fields.as_slice() {
            [count] => (format!("line{lineno}"), *count),
            [symbol, count] => (symbol.to_string(), *count),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "expected `symbol<TAB>count` or a count, got {} fields",
                        fields.len()
                    ),
                })
            }
        };
        let count: i128 = raw.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("count {raw:?} is not an integer"),
        })?;
        if count <= 0 {
            return Err(Error::Validation {
                line: lineno,
                msg: format!("count must be positive, got {count}"),
            });
        }
        let count = u64::try_from(count).map_err(|_| Error::Validation {
            line: lineno,
            msg: format!("count {count} is too large"),
        })?;
        h.add(&symbol, count);
    }
    Ok(h)
}

pub fn histogram_from_counts_file(path: impl AsRef<Path>) -> Result<Histogram> {
    let f = std::fs::File::open(path)?;
    histogram_from_counts(std::io::BufReader::new(f))
}

/// Counts of counts: `h_j` symbols were seen exactly `j` times.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    h: BTreeMap<u64, u64>,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Self {
        let mut fp = Self::new();
        for c in counts.into_iter().filter(|&c| c > 0) {
            *fp.h.entry(c).or_insert(0) += 1;
        }
        fp
    }

    /// Builds from `(j, h_j)` pairs; zero entries are dropped, repeated `j` accumulate.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut fp = Self::new();
        for (j, hj) in pairs {
            if j == 0 {
                return Err(Error::Domain(
                    "fingerprint index j must be at least 1".into(),
                ));
            }
            if hj > 0 {
                *fp.h.entry(j).or_insert(0) += hj;
            }
        }
        Ok(fp)
    }

    pub fn get(&self, j: u64) -> u64 {
        self.h.get(&j).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.h.iter().map(|(&j, &hj)| (j, hj))
    }

    /// `n = Σ j h_j`.
    pub fn n(&self) -> u64 {
        self.h.iter().map(|(j, hj)| j * hj).sum()
    }

    /// Counting estimate `Ŝ_c = Σ h_j`.
    pub fn distinct(&self) -> u64 {
        self.h.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Fingerprint of the union of two disjoint samples' symbol sets.
    pub fn merge(&self, other: &Fingerprint) -> Fingerprint {
        let mut out = self.clone();
        for (j, hj) in other.iter() {
            *out.h.entry(j).or_insert(0) += hj;
        }
        out
    }

    /// `j<TAB>h_j` lines in increasing `j`.
    pub fn to_tsv(&self) -> String {
        self.iter().map(|(j, hj)| format!("{j}\t{hj}\n")).collect()
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.trim().parse::<u64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("expected `j<TAB>h_j`, got {line:?}"),
                })
            };
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [j, hj] => pairs.push((parse(j)?, parse(hj)?)),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected `j<TAB>h_j`, got {line:?}"),
                    })
                }
            }
        }
        Self::from_pairs(pairs)
    }
}

/// Shape of a synthetic distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistKind {
    Uniform,
    Zipf(f64),
    Benford,
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistKind::Uniform => write!(f, "uniform"),
            DistKind::Zipf(a) => write!(f, "zipf-{a}"),
            DistKind::Benford => write!(f, "benford"),
        }
    }
}

impl FromStr for DistKind {
    type Err = Error;

    /// `uniform`, `benford`, or `zipf-<alpha>` / `zipf:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "uniform" => return Ok(DistKind::Uniform),
            "benford" => return Ok(DistKind::Benford),
            _ => {}
        }
        let alpha = lower
            .strip_prefix("zipf-")
            .or_else(|| lower.strip_prefix("zipf:"))
            .and_then(|a| a.parse::<f64>().ok())
            .ok_or_else(|| Error::Domain(format!("unknown distribution {s:?}")))?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!(
                "zipf exponent must be positive, got {alpha}"
            )));
        }
        Ok(DistKind::Zipf(alpha))
    }
}

impl DistKind {
    /// The six shapes of the standard benchmark suite.
    pub fn standard_suite() -> Vec<DistKind> {
        vec![
            DistKind::Uniform,
            DistKind::Zipf(1.5),
            DistKind::Zipf(1.0),
            DistKind::Zipf(0.5),
            DistKind::Zipf(0.25),
            DistKind::Benford,
        ]
    }

    fn weight(&self, i: usize) -> f64 {
        let x = i as f64;
        match *self {
            DistKind::Uniform => 1.0,
            DistKind::Zipf(a) => x.powf(-a),
            DistKind::Benford => (1.0 / x).ln_1p(),
        }
    }
}

/// A distribution over symbols `1..=support` with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub support: usize,
    probs: Vec<f64>,
}

impl DistributionSpec {
    pub fn new(kind: DistKind, support: usize) -> Result<Self> {
        if support == 0 {
            return Err(Error::Domain("support must be at least 1".into()));
        }
        let weights: Vec<f64> = (1..=support).map(|i| kind.weight(i)).collect();
        let total = neumaier_sum(weights.iter().copied());
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            kind,
            support,
            probs,
        })
    }

    pub fn label(&self) -> String {
        self.kind.to_string()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Smallest nonzero probability; the last symbol's for every supported shape.
    pub fn min_mass(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `k = ⌈1/min mass⌉`, the class parameter this distribution belongs to.
    pub fn k(&self) -> f64 {
        (1.0 / self.min_mass()).ceil()
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(&self.probs).expect("probabilities are positive and finite")
    }
}

/// `Σ` with Neumaier compensation, so normalized weights sum to one within a few ulps.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

const MAX_SUPPORT: usize = 1 << 31;

/// Picks the support so that the smallest mass is the largest value not exceeding
/// `target_min_mass`; uniform uses `S = round(1/target)`.
pub fn make_distribution(kind: DistKind, target_min_mass: f64) -> Result<DistributionSpec> {
    if !(target_min_mass > 0.0 && target_min_mass < 1.0) {
        return Err(Error::InfeasibleTarget(format!(
            "min mass must lie in (0, 1), got {target_min_mass}"
        )));
    }
    let support = match kind {
        DistKind::Uniform => {
            let s = (1.0 / target_min_mass).round();
            if s < 1.0 || s > MAX_SUPPORT as f64 {
                return Err(Error::InfeasibleTarget(format!(
                    "uniform support {s} out of range"
                )));
            }
            s as usize
        }
        DistKind::Zipf(a) => {
            // p_S = S^{-a} / H_{S,a} falls monotonically in S
            let mut h = 0.0;
            let mut s = 0usize;
            loop {
                s += 1;
                let w = (s as f64).powf(-a);
                h += w;
                if w / h <= target_min_mass {
                    break s;
                }
                if s >= MAX_SUPPORT {
                    return Err(Error::InfeasibleTarget(format!(
                        "zipf-{a} needs support beyond {MAX_SUPPORT} for min mass {target_min_mass}"
                    )));
                }
            }
        }
        DistKind::Benford => {
            // p_S = ln(1 + 1/S) / ln(S + 1)
            let p = |s: usize| (1.0 / s as f64).ln_1p() / (s as f64).ln_1p();
            let mut hi = 1usize;
            while p(hi) > target_min_mass {
                if hi >= MAX_SUPPORT {
                    return Err(Error::InfeasibleTarget(format!(
                        "benford needs support beyond {MAX_SUPPORT} for min mass {target_min_mass}"
                    )));
                }
                hi *= 2;
            }
            let mut lo = hi / 2;
            // invariant: p(lo) > target (or lo = 0), p(hi) <= target
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if p(mid) > target_min_mass {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        }
    };
    DistributionSpec::new(kind, support)
}

/// Inverse-CDF sampler over fixed weights.
#[derive(Debug, Clone)]
pub struct Sampler {
    index: WeightedIndex<f64>,
    len: usize,
}

impl Sampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let index = WeightedIndex::new(weights)
            .map_err(|e| Error::Domain(format!("invalid sampling weights: {e}")))?;
        Ok(Self {
            index,
            len: weights.len(),
        })
    }

    /// Sampler for resampling with replacement from an observed histogram.
    pub fn from_histogram(hist: &Histogram) -> Result<Self> {
        let w: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
        Self::new(&w)
    }

    /// Counts per symbol index after `n` i.i.d. draws.
    pub fn draw_counts(&self, n: u64, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; self.len];
        for _ in 0..n {
            counts[self.index.sample(&mut rng)] += 1;
        }
        counts
    }

    pub fn fingerprint(&self, n: u64, seed: u64) -> Fingerprint {
        Fingerprint::from_counts(self.draw_counts(n, seed))
    }
}

/// `n` i.i.d. draws from `dist`; identical `(dist, n, seed)` give identical histograms.
pub fn sample(dist: &DistributionSpec, n: u64, seed: u64) -> Histogram {
    Histogram::from_dense(&dist.sampler().draw_counts(n, seed))
}

/// Independent seed for child stream `index` of `master` (SplitMix64 finalizer).
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Platform-stable 64-bit hash of a label (FNV-1a).
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
