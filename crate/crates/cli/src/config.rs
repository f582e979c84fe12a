//! Run configuration files. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use herodraft_core::oracle::{MatchDataset, OracleParams, SyntheticOracle};
use herodraft_core::selfplay::Schedule;
use herodraft_core::strategy::{Strategy, StrategySpec};
use herodraft_core::winrate::{hero_stats, HeroStats, WinratePredictor};
use herodraft_core::GameConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    /// Saved synthetic oracle JSON.
    Oracle { path: PathBuf },
    /// Freshly sampled synthetic oracle sized to the game config.
    Sampled {
        seed: u64,
        #[serde(default)]
        params: Option<OracleParams>,
    },
    /// Trained win-rate checkpoint.
    Learned {
        path: PathBuf,
        #[serde(default = "yes")]
        symmetrize: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub game: Option<GameConfig>,
    pub predictor: Option<PredictorSpec>,
    /// Match CSV for hero statistics (HWR and the roster badges).
    pub stats: Option<PathBuf>,
    /// Arena line-up, weakest first.
    pub strategies: Vec<StrategySpec>,
    /// Engine for `draft` and `serve`.
    pub engine: Option<StrategySpec>,
    pub selfplay: Option<Schedule>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut c: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if c.base_dir.as_os_str().is_empty() {
            c.base_dir = PathBuf::from(".");
        }
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn game(&self) -> Result<GameConfig> {
        self.game.clone().context("the config has no \"game\" section")
    }

    /// The predictor, with `oracle_override` taking precedence.
    pub fn predictor(&self, oracle_override: Option<&Path>) -> Result<WinratePredictor> {
        let p = match oracle_override {
            Some(path) => {
                return Ok(WinratePredictor::oracle(
                    SyntheticOracle::load_json(path).with_context(|| format!("loading oracle {}", path.display()))?,
                ))
            }
            None => self.predictor.as_ref().context("the config has no \"predictor\" section and no --oracle was given")?,
        };
        let pred = match p {
            PredictorSpec::Oracle { path } => {
                let path = self.resolve(path);
                WinratePredictor::oracle(SyntheticOracle::load_json(&path).with_context(|| format!("loading oracle {}", path.display()))?)
            }
            PredictorSpec::Sampled { seed, params } => {
                let game = self.game()?;
                let lineup = game.picks_per_round() / 2;
                let params = params.unwrap_or_else(|| OracleParams::new(1.0, 0.5, 0.5, lineup));
                WinratePredictor::oracle(SyntheticOracle::sample(*seed, game.n_heroes(), params)?)
            }
            PredictorSpec::Learned { path, symmetrize } => WinratePredictor::load_learned(&self.resolve(path), *symmetrize)?,
        };
        if let (Some(n), Some(game)) = (pred.n_heroes(), &self.game) {
            if n != game.n_heroes() {
                bail!("predictor covers {n} heroes but the game has {}", game.n_heroes());
            }
        }
        Ok(pred)
    }

    pub fn hero_stats(&self) -> Result<Option<HeroStats>> {
        match &self.stats {
            None => Ok(None),
            Some(p) => {
                let path = self.resolve(p);
                let ds = MatchDataset::load_csv(&path, self.game.as_ref().map(|g| g.n_heroes()))
                    .with_context(|| format!("loading {}", path.display()))?;
                Ok(Some(hero_stats(&ds)))
            }
        }
    }

    pub fn strategies(&self, game: &GameConfig, stats: Option<&HeroStats>) -> Result<Vec<Strategy>> {
        self.strategies
            .iter()
            .map(|s| s.build(game, stats, &self.base_dir).with_context(|| format!("building strategy {:?}", s.kind)))
            .collect()
    }
}
