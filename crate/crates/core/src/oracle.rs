//! Synthetic ground-truth win rates and match data drawn from them.
//!
//! The oracle scores a pair of lineups as
//!
//! ```text
//! score = Σ_A b_i − Σ_B b_j + Σ_{i<i'∈A} S[i][i'] − Σ_{j<j'∈B} S[j][j'] + Σ_{i∈A, j∈B} K[i][j]
//! φ     = 1 / (1 + exp(−score / temperature))
//! ```
//!
//! with `S` symmetric (teammate synergy) and `K` antisymmetric (counters).
//!
//! Sampling is reproducible across platforms: a ChaCha8 stream seeded with
//! `seed_from_u64(seed)` feeds a Box–Muller transform (uniforms built from the
//! top 53 bits of each `u64`, both outputs of a pair used in order). Entries
//! are filled as: base strengths `0..n`, then the synergy upper triangle in
//! row-major order (`i < j`), then the counter upper triangle in the same order.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{HeroId, HeroSet, WinRate};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle needs at least two heroes, got {0}")]
    TooFewHeroes(usize),
    #[error("scales must be non-negative and finite")]
    BadScale,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("lineups overlap or are malformed")]
    BadLineups,
    #[error("two lineups of {lineup_size} need {needed} heroes, pool has {n_heroes}")]
    PoolTooSmall {
        lineup_size: usize,
        needed: usize,
        n_heroes: usize,
    },
    #[error("oracle matrices have inconsistent shapes")]
    Shape,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Temperature keeping typical win rates inside (0.1, 0.9) for unit scales.
pub fn default_temperature(lineup_size: usize) -> f64 {
    2.0 * (lineup_size as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub strength_scale: f64,
    pub synergy_scale: f64,
    pub counter_scale: f64,
    pub temperature: f64,
}

impl OracleParams {
    pub fn new(strength: f64, synergy: f64, counter: f64, lineup_size: usize) -> Self {
        OracleParams {
            strength_scale: strength,
            synergy_scale: synergy,
            counter_scale: counter,
            temperature: default_temperature(lineup_size),
        }
    }
}

struct Normals {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Normals {
    fn new(seed: u64) -> Self {
        Normals {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OracleFile")]
pub struct SyntheticOracle {
    pub seed: u64,
    pub params: OracleParams,
    pub base_strength: Vec<f64>,
    pub synergy: Vec<Vec<f64>>,
    pub counter: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct OracleFile {
    seed: u64,
    params: OracleParams,
    base_strength: Vec<f64>,
    synergy: Vec<Vec<f64>>,
    counter: Vec<Vec<f64>>,
}

impl TryFrom<OracleFile> for SyntheticOracle {
    type Error = OracleError;
    fn try_from(f: OracleFile) -> Result<Self, OracleError> {
        let o = SyntheticOracle {
            seed: f.seed,
            params: f.params,
            base_strength: f.base_strength,
            synergy: f.synergy,
            counter: f.counter,
        };
        o.validate()?;
        Ok(o)
    }
}

impl SyntheticOracle {
    pub fn sample(seed: u64, n_heroes: usize, params: OracleParams) -> Result<Self, OracleError> {
        if n_heroes < 2 {
            return Err(OracleError::TooFewHeroes(n_heroes));
        }
        let scales = [params.strength_scale, params.synergy_scale, params.counter_scale];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(OracleError::BadScale);
        }
        if !(params.temperature.is_finite() && params.temperature > 0.0) {
            return Err(OracleError::BadTemperature(params.temperature));
        }
        let mut normals = Normals::new(seed);
        let base_strength = (0..n_heroes)
            .map(|_| params.strength_scale * normals.next())
            .collect();
        let mut synergy = vec![vec![0.0; n_heroes]; n_heroes];
        for i in 0..n_heroes {
            for j in i + 1..n_heroes {
                let v = params.synergy_scale * normals.next();
                synergy[i][j] = v;
                synergy[j][i] = v;
            }
        }
        let mut counter = vec![vec![0.0; n_heroes]; n_heroes];
        for i in 0..n_heroes {
            for j in i + 1..n_heroes {
                let v = params.counter_scale * normals.next();
                counter[i][j] = v;
                counter[j][i] = -v;
            }
        }
        Ok(SyntheticOracle {
            seed,
            params,
            base_strength,
            synergy,
            counter,
        })
    }

    /// An oracle built from explicit strengths only (no synergy, no counters).
    pub fn from_strengths(base_strength: Vec<f64>, temperature: f64) -> Result<Self, OracleError> {
        let n = base_strength.len();
        let o = SyntheticOracle {
            seed: 0,
            params: OracleParams {
                strength_scale: 1.0,
                synergy_scale: 0.0,
                counter_scale: 0.0,
                temperature,
            },
            base_strength,
            synergy: vec![vec![0.0; n]; n],
            counter: vec![vec![0.0; n]; n],
        };
        o.validate()?;
        Ok(o)
    }

    pub fn n_heroes(&self) -> usize {
        self.base_strength.len()
    }

    fn validate(&self) -> Result<(), OracleError> {
        let n = self.base_strength.len();
        if n < 2 {
            return Err(OracleError::TooFewHeroes(n));
        }
        if !(self.params.temperature.is_finite() && self.params.temperature > 0.0) {
            return Err(OracleError::BadTemperature(self.params.temperature));
        }
        if self.synergy.len() != n
            || self.counter.len() != n
            || self.synergy.iter().chain(&self.counter).any(|r| r.len() != n)
        {
            return Err(OracleError::Shape);
        }
        for i in 0..n {
            if self.synergy[i][i] != 0.0 {
                return Err(OracleError::Shape);
            }
            for j in 0..n {
                if self.synergy[i][j] != self.synergy[j][i] || self.counter[i][j] != -self.counter[j][i] {
                    return Err(OracleError::Shape);
                }
            }
        }
        Ok(())
    }

    fn raw_score(&self, a: &[HeroId], b: &[HeroId]) -> f64 {
        let team = |l: &[HeroId]| {
            let mut s: f64 = l.iter().map(|&h| self.base_strength[h as usize]).sum();
            for (x, &i) in l.iter().enumerate() {
                for &j in &l[x + 1..] {
                    s += self.synergy[i as usize][j as usize];
                }
            }
            s
        };
        let mut cross = 0.0;
        for &i in a {
            for &j in b {
                cross += self.counter[i as usize][j as usize];
            }
        }
        (team(a) - team(b)) + cross
    }

    /// Score of `a` against `b`; computed on a canonical ordering so that
    /// `score(b, a) == -score(a, b)` holds bit-for-bit.
    pub fn score(&self, a: &[HeroId], b: &[HeroId]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        if a <= b {
            self.raw_score(&a, &b)
        } else {
            -self.raw_score(&b, &a)
        }
    }

    /// Win rate of `a` against `b`. Checks lineups; see [`WinRate`] for the unchecked path.
    pub fn oracle_winrate(&self, a: &[HeroId], b: &[HeroId]) -> Result<f64, OracleError> {
        let n = self.n_heroes();
        let sa: HeroSet = a.iter().copied().collect();
        let sb: HeroSet = b.iter().copied().collect();
        let ok = a.len() == b.len()
            && sa.len() == a.len()
            && sb.len() == b.len()
            && sa.bits() & sb.bits() == 0
            && a.iter().chain(b).all(|&h| (h as usize) < n);
        if !ok {
            return Err(OracleError::BadLineups);
        }
        Ok(self.winrate(a, b))
    }

    pub fn save_json(&self, path: &Path) -> Result<(), OracleError> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, OracleError> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Logistic with exact complement: `sigmoid_exact(-x) == 1 - sigmoid_exact(x)`
/// and the two always sum to exactly 1.
pub(crate) fn sigmoid_exact(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        1.0 - 1.0 / (1.0 + x.exp())
    }
}

impl WinRate for SyntheticOracle {
    fn winrate(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64 {
        sigmoid_exact(self.score(camp1, camp2) / self.params.temperature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRecord {
    /// Ascending hero ids.
    pub camp1: Vec<HeroId>,
    pub camp2: Vec<HeroId>,
    /// True when camp one won.
    pub win: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchDataset {
    pub n_heroes: usize,
    pub lineup_size: usize,
    pub records: Vec<MatchRecord>,
}

impl MatchDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> MatchDataset {
        MatchDataset {
            n_heroes: self.n_heroes,
            lineup_size: self.lineup_size,
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), OracleError> {
        let mut out = csv::Writer::from_writer(w);
        let k = self.lineup_size;
        let mut header: Vec<String> = (1..=k).map(|i| format!("c1h{i}")).collect();
        header.extend((1..=k).map(|i| format!("c2h{i}")));
        header.push("win".into());
        out.write_record(&header)?;
        let mut row = Vec::with_capacity(2 * k + 1);
        for r in &self.records {
            row.clear();
            row.extend(r.camp1.iter().chain(&r.camp2).map(|h| h.to_string()));
            row.push(if r.win { "1".into() } else { "0".into() });
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV form. `n_heroes` defaults to one past the largest id seen.
    pub fn read_csv<R: Read>(r: R, n_heroes: Option<usize>) -> Result<Self, OracleError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || header.len() % 2 == 0 || &header[header.len() - 1] != "win" {
            return Err(OracleError::Dataset("unexpected header".into()));
        }
        let k = (header.len() - 1) / 2;
        let mut records = Vec::new();
        let mut max_id = 0usize;
        for row in rdr.records() {
            let row = row?;
            let ids: Result<Vec<HeroId>, _> = (0..2 * k).map(|i| row[i].trim().parse::<HeroId>()).collect();
            let ids = ids.map_err(|e| OracleError::Dataset(e.to_string()))?;
            let win = match row[2 * k].trim() {
                "1" => true,
                "0" => false,
                other => return Err(OracleError::Dataset(format!("bad label {other:?}"))),
            };
            max_id = max_id.max(ids.iter().copied().max().unwrap_or(0) as usize);
            let mut camp1 = ids[..k].to_vec();
            let mut camp2 = ids[k..].to_vec();
            camp1.sort_unstable();
            camp2.sort_unstable();
            records.push(MatchRecord { camp1, camp2, win });
        }
        let n_heroes = n_heroes.unwrap_or(if records.is_empty() { 0 } else { max_id + 1 });
        if max_id >= n_heroes && !records.is_empty() {
            return Err(OracleError::Dataset(format!("hero id {max_id} >= pool size {n_heroes}")));
        }
        Ok(MatchDataset {
            n_heroes,
            lineup_size: k,
            records,
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), OracleError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path, n_heroes: Option<usize>) -> Result<Self, OracleError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), n_heroes)
    }
}

/// Uniformly sampled disjoint lineups with Bernoulli(φ) outcomes.
pub fn generate_matches(
    oracle: &SyntheticOracle,
    n_matches: usize,
    lineup_size: usize,
    seed: u64,
) -> Result<MatchDataset, OracleError> {
    let n = oracle.n_heroes();
    if lineup_size == 0 || 2 * lineup_size > n {
        return Err(OracleError::PoolTooSmall {
            lineup_size,
            needed: 2 * lineup_size,
            n_heroes: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_matches);
    for _ in 0..n_matches {
        let picked = index::sample(&mut rng, n, 2 * lineup_size).into_vec();
        let mut camp1: Vec<HeroId> = picked[..lineup_size].iter().map(|&h| h as HeroId).collect();
        let mut camp2: Vec<HeroId> = picked[lineup_size..].iter().map(|&h| h as HeroId).collect();
        camp1.sort_unstable();
        camp2.sort_unstable();
        let phi = oracle.winrate(&camp1, &camp2);
        let win = rng.random::<f64>() < phi;
        records.push(MatchRecord { camp1, camp2, win });
    }
    Ok(MatchDataset {
        n_heroes: n,
        lineup_size,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::calibration_chi_squared;

    fn zero_oracle(n: usize) -> SyntheticOracle {
        SyntheticOracle::sample(3, n, OracleParams::new(0.0, 0.0, 0.0, 2)).unwrap()
    }

    #[test]
    fn strengths_only_oracle() {
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.0, 0.0, 2)).unwrap();
        assert!(o.base_strength.iter().any(|&b| b != 0.0));
        assert!(o.synergy.iter().flatten().all(|&v| v == 0.0));
        assert!(o.counter.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = OracleParams::new(1.0, 0.5, 0.5, 4);
        let a = SyntheticOracle::sample(1, 12, p).unwrap();
        let b = SyntheticOracle::sample(1, 12, p).unwrap();
        let c = SyntheticOracle::sample(2, 12, p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.base_strength, c.base_strength);
        for i in 0..12 {
            assert_eq!(a.synergy[i][i], 0.0);
            for j in 0..12 {
                assert_eq!(a.synergy[i][j], a.synergy[j][i]);
                assert_eq!(a.counter[i][j], -a.counter[j][i]);
            }
        }
    }

    #[test]
    fn zero_oracle_is_even() {
        let o = zero_oracle(8);
        assert_eq!(o.oracle_winrate(&[0, 1], &[2, 3]).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_arithmetic() {
        let o = SyntheticOracle::from_strengths(vec![1.0, 0.0, 0.0, -1.0], 1.0).unwrap();
        let phi = o.oracle_winrate(&[0], &[3]).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((phi - expected).abs() < 1e-15);
        assert!((phi - 0.8808).abs() < 1e-4);
        assert_eq!(o.oracle_winrate(&[3], &[0]).unwrap(), 1.0 - phi);
    }

    #[test]
    fn overlapping_lineups_rejected() {
        let o = zero_oracle(8);
        assert!(o.oracle_winrate(&[0, 1], &[1, 2]).is_err());
        assert!(o.oracle_winrate(&[0, 1], &[2]).is_err());
        assert!(o.oracle_winrate(&[0, 9], &[2, 3]).is_err());
    }

    #[test]
    fn complement_is_exact_for_random_lineups() {
        let o = SyntheticOracle::sample(9, 20, OracleParams::new(1.0, 1.0, 1.0, 5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let idx = index::sample(&mut rng, 20, 10).into_vec();
            let a: Vec<HeroId> = idx[..5].iter().map(|&h| h as HeroId).collect();
            let b: Vec<HeroId> = idx[5..].iter().map(|&h| h as HeroId).collect();
            let p = o.winrate(&a, &b);
            assert!(p > 0.0 && p < 1.0);
            assert_eq!(p + o.winrate(&b, &a), 1.0);
        }
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let o = SyntheticOracle::sample(5, 6, OracleParams::new(1.0, 0.3, 0.3, 2)).unwrap();
        let text = serde_json::to_string(&o).unwrap();
        let back: SyntheticOracle = serde_json::from_str(&text).unwrap();
        assert_eq!(o, back);
        let mut broken = o.clone();
        broken.counter[0][1] += 1.0;
        let text = serde_json::to_string(&broken).unwrap();
        assert!(serde_json::from_str::<SyntheticOracle>(&text).is_err());
    }

    #[test]
    fn empty_and_deterministic_datasets() {
        let o = SyntheticOracle::sample(2, 10, OracleParams::new(1.0, 0.0, 0.0, 2)).unwrap();
        assert!(generate_matches(&o, 0, 2, 1).unwrap().is_empty());
        let a = generate_matches(&o, 300, 2, 7).unwrap();
        let b = generate_matches(&o, 300, 2, 7).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let text = String::from_utf8(ba.clone()).unwrap();
        assert!(text.starts_with("c1h1,c1h2,c2h1,c2h2,win\n"));
        let back = MatchDataset::read_csv(&ba[..], Some(10)).unwrap();
        assert_eq!(back, a);
        assert!(generate_matches(&o, 1, 6, 1).is_err());
    }

    #[test]
    fn uninformative_oracle_labels_are_balanced() {
        let ds = generate_matches(&zero_oracle(10), 100_000, 5, 11).unwrap();
        let mean = ds.records.iter().filter(|r| r.win).count() as f64 / ds.len() as f64;
        // binomial sd at n=1e5 is 0.0016, so ±0.01 is over six sigma
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn labels_calibrated_against_oracle() {
        let o = SyntheticOracle::sample(21, 20, OracleParams::new(1.0, 0.5, 0.5, 5)).unwrap();
        let ds = generate_matches(&o, 100_000, 5, 3).unwrap();
        let probs: Vec<f64> = ds.records.iter().map(|r| o.winrate(&r.camp1, &r.camp2)).collect();
        let labels: Vec<bool> = ds.records.iter().map(|r| r.win).collect();
        let cal = calibration_chi_squared(&probs, &labels, 10);
        assert!(cal.p_value > 0.01, "{cal:?}");
    }
}
