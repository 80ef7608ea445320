//! JSON experiment configuration.
//!
//! A config fully determines an experiment: the game (either drawn from a
//! stored seed or given explicitly), the step-size schedule, the learner
//! horizon and seed, and the oracle budget. Hashing the canonical JSON form
//! gives the replay key stored in every run record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::cournot::{self, CournotParams};
use crate::game::GameSpec;
use crate::geometry::ConvexSet;
use crate::quadratic::QuadraticGame;
use crate::schedule::{Schedule, DEFAULT_EXPONENT_A, DEFAULT_EXPONENT_B};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub game: GameConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(rename = "type")]
    pub kind: GameKind,
    #[serde(default)]
    pub params: GameParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    Cournot,
    Quadratic,
    /// The hand-solvable two-player fixture; takes only the `coupled` flag.
    BuiltinMicro,
}

/// Union of the per-game parameters; which fields apply depends on
/// `game.type`. Unknown keys are rejected, irrelevant-but-set keys are too.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameParams {
    // cournot
    #[serde(skip_serializing_if = "Option::is_none")]
    pub players: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Seed for drawing the market data; stored draws override it field by
    /// field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub player_caps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market_caps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupled: Option<bool>,
    // quadratic (decoupled tracking game)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub a: f64,
    pub b: f64,
    /// Per-player offsets R_i; a single entry broadcasts, `None` means 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<u64>>,
    pub dual_offset: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            a: DEFAULT_EXPONENT_A,
            b: DEFAULT_EXPONENT_B,
            offsets: None,
            dual_offset: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub iters: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    /// Log a trajectory row every k iterations; 0 keeps only the summary.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_log_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub tol: f64,
    pub max_iters: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            tol: 1e-10,
            max_iters: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory for trajectory CSVs and summary JSONs; `None` keeps
    /// everything in memory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// A game materialized from a config, keeping whatever exact structure the
/// config implied for the oracle and the diagnostics.
pub struct BuiltGame {
    pub game: GameSpec<Real>,
    pub quadratic: Option<QuadraticGame<Real>>,
    pub cournot: Option<CournotParams>,
}

impl std::fmt::Debug for BuiltGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltGame")
            .field("players", &self.game.players())
            .field("block_dim", &self.game.block_dim())
            .field("constraints", &self.game.num_constraints())
            .finish_non_exhaustive()
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Config::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Parse errors keep serde_json's line/column context.
    pub fn from_json(text: &str) -> Result<Config> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical form used for hashing: serde's field order is fixed by the
    /// struct definitions, so equal configs serialize identically.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical form; the replay key in run records.
    pub fn hash(&self) -> Result<String> {
        let canon = self.canonical_json()?;
        let digest = Sha256::digest(canon.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        Ok(out)
    }

    pub fn schedule(&self, players: usize) -> Result<Schedule> {
        let offsets = self.schedule.offsets.clone().unwrap_or_else(|| vec![1]);
        let sched = Schedule::new(self.schedule.a, self.schedule.b, offsets, self.schedule.dual_offset)?;
        sched.check_players(players)?;
        Ok(sched)
    }

    /// Builds the configured game, erroring with key-level messages on any
    /// inconsistent or missing parameter.
    pub fn build_game(&self) -> Result<BuiltGame> {
        match self.game.kind {
            GameKind::BuiltinMicro => self.build_micro(),
            GameKind::Cournot => self.build_cournot(),
            GameKind::Quadratic => self.build_quadratic(),
        }
    }

    /// Full validation: game buildable, schedule consistent, horizon sane.
    /// Returns the built game so callers don't build twice.
    pub fn validate(&self) -> Result<BuiltGame> {
        let built = self.build_game()?;
        self.schedule(built.game.players())?;
        if self.learner.iters == 0 {
            return Err(Error::Config("learner.iters must be positive".into()));
        }
        if !(self.oracle.tol > 0.0 && self.oracle.tol.is_finite()) {
            return Err(Error::Config("oracle.tol must be positive".into()));
        }
        if self.oracle.max_iters == 0 {
            return Err(Error::Config("oracle.max_iters must be positive".into()));
        }
        if let Some(mu0) = &self.learner.mu0 {
            if mu0.len() != built.game.joint_dim() {
                return Err(Error::Config(format!(
                    "learner.mu0 has {} entries, the game needs {}",
                    mu0.len(),
                    built.game.joint_dim()
                )));
            }
        }
        if let Some(l0) = &self.learner.lambda0 {
            if l0.len() != built.game.num_constraints() {
                return Err(Error::Config(format!(
                    "learner.lambda0 has {} entries, the game has {} coupling rows",
                    l0.len(),
                    built.game.num_constraints()
                )));
            }
        }
        Ok(built)
    }

    fn build_micro(&self) -> Result<BuiltGame> {
        let p = &self.game.params;
        let extras = [
            p.players.is_some(),
            p.horizon.is_some(),
            p.market_seed.is_some(),
            p.c.is_some(),
            p.player_caps.is_some(),
            p.market_caps.is_some(),
            p.targets.is_some(),
            p.block_dim.is_some(),
            p.lower.is_some(),
            p.upper.is_some(),
        ];
        if extras.iter().any(|set| *set) {
            return Err(Error::Config(
                "builtin-micro takes no parameters besides game.params.coupled".into(),
            ));
        }
        let (game, params) = if p.coupled.unwrap_or(true) {
            cournot::micro_game::<Real>()
        } else {
            cournot::micro_game_uncoupled::<Real>()
        };
        let quadratic = Some(params.quadratic()?);
        Ok(BuiltGame {
            game,
            quadratic,
            cournot: Some(params),
        })
    }

    fn build_cournot(&self) -> Result<BuiltGame> {
        let p = &self.game.params;
        if p.targets.is_some() || p.block_dim.is_some() || p.lower.is_some() || p.upper.is_some() {
            return Err(Error::Config(
                "game.params.targets/block_dim/lower/upper only apply to quadratic games".into(),
            ));
        }
        let players = p
            .players
            .ok_or_else(|| Error::Config("game.params.players is required for cournot".into()))?;
        let horizon = p.horizon.unwrap_or(1);
        let mut params = match p.market_seed {
            Some(seed) => CournotParams::draw(players, horizon, seed)
                .map_err(|e| Error::Config(e.to_string()))?,
            None => CournotParams {
                players,
                horizon,
                c: Vec::new(),
                player_caps: vec![cournot::DEFAULT_PLAYER_CAP; players],
                market_caps: Vec::new(),
                coupled: true,
            },
        };
        if let Some(c) = &p.c {
            params.c = c.clone();
        }
        if let Some(caps) = &p.player_caps {
            params.player_caps = caps.clone();
        }
        if let Some(caps) = &p.market_caps {
            params.market_caps = caps.clone();
        }
        if let Some(coupled) = p.coupled {
            params.coupled = coupled;
        }
        if params.c.is_empty() {
            return Err(Error::Config(
                "cournot needs game.params.c or game.params.market_seed".into(),
            ));
        }
        params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let game = params.build()?;
        let quadratic = Some(params.quadratic()?);
        Ok(BuiltGame {
            game,
            quadratic,
            cournot: Some(params),
        })
    }

    fn build_quadratic(&self) -> Result<BuiltGame> {
        let p = &self.game.params;
        if p.players.is_some()
            || p.horizon.is_some()
            || p.market_seed.is_some()
            || p.c.is_some()
            || p.player_caps.is_some()
            || p.market_caps.is_some()
            || p.coupled.is_some()
        {
            return Err(Error::Config(
                "cournot parameters do not apply to quadratic games".into(),
            ));
        }
        let targets = p
            .targets
            .as_ref()
            .ok_or_else(|| Error::Config("game.params.targets is required for quadratic".into()))?;
        let d = p.block_dim.unwrap_or(1);
        if d == 0 || targets.is_empty() || targets.len() % d != 0 {
            return Err(Error::Config(format!(
                "game.params.targets length {} must be a positive multiple of block_dim {}",
                targets.len(),
                d
            )));
        }
        let players = targets.len() / d;
        let joint = targets.len();
        let lower = match &p.lower {
            Some(v) if v.len() == joint => v.clone(),
            Some(v) => {
                return Err(Error::Config(format!(
                    "game.params.lower has {} entries, expected {joint}",
                    v.len()
                )))
            }
            None => vec![-10.0; joint],
        };
        let upper = match &p.upper {
            Some(v) if v.len() == joint => v.clone(),
            Some(v) => {
                return Err(Error::Config(format!(
                    "game.params.upper has {} entries, expected {joint}",
                    v.len()
                )))
            }
            None => vec![10.0; joint],
        };
        let mut target_blocks = Vec::with_capacity(players);
        let mut sets = Vec::with_capacity(players);
        for i in 0..players {
            target_blocks.push(targets[i * d..(i + 1) * d].to_vec());
            sets.push(
                ConvexSet::boxed(
                    lower[i * d..(i + 1) * d].to_vec(),
                    upper[i * d..(i + 1) * d].to_vec(),
                )
                .map_err(|e| Error::Config(e.to_string()))?,
            );
        }
        let quad = QuadraticGame::decoupled(target_blocks, sets)
            .map_err(|e| Error::Config(e.to_string()))?;
        let game = quad.clone().into_game_spec()?;
        Ok(BuiltGame {
            game,
            quadratic: Some(quad),
            cournot: None,
        })
    }
}

/// The config that `cournot --emit-config` writes: a drawn instance with the
/// default schedule and a short fully-logged run.
pub fn cournot_recipe(players: usize, horizon: usize, master_seed: u64) -> Result<Config> {
    let params = CournotParams::draw(players, horizon, master_seed)?;
    Ok(Config {
        game: GameConfig {
            kind: GameKind::Cournot,
            params: GameParams {
                players: Some(params.players),
                horizon: Some(params.horizon),
                c: Some(params.c),
                player_caps: Some(params.player_caps),
                market_caps: Some(params.market_caps),
                coupled: Some(params.coupled),
                ..GameParams::default()
            },
        },
        schedule: ScheduleConfig::default(),
        learner: LearnerConfig {
            iters: 300,
            seed: master_seed,
            lambda0: None,
            mu0: None,
            log_every: 1,
        },
        oracle: OracleConfig::default(),
        output: OutputConfig::default(),
    })
}
