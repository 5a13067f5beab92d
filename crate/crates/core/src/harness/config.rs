//! Flat `key = value` experiment configuration.
//!
//! Two built-in profiles: `default` (full training budget) and `desk`
//! (reduced budget for a single workstation). A config file starts from a
//! profile (`profile = desk`, default `default`) and overrides keys. The
//! resolved dump lists every key and parses back to the same config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::EnvConstants;
use crate::env::frame::Scenario;
use crate::env::{AvgPowerRule, EnvConfig, FreezeRule};
use crate::error::{Error, Result};
use crate::learn::{BaselineBandwidth, CriticMode, Method, TrainSchedule};
use crate::mobility::{GridPos, GridWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Default,
    Desk,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "default" => Some(Profile::Default),
            "desk" => Some(Profile::Desk),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Default => "default",
            Profile::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub scenario: Scenario,
    pub schedule: TrainSchedule,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub frames: u64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let scenario = Scenario {
            grid: GridWorld {
                width: 100,
                height: 100,
                cell_size_m: 300.0,
                attraction_points: Vec::new(),
                attraction_prob: 0.4,
                frames: 10,
            },
            attraction_count: 3,
            env: EnvConfig::default(),
            constants: EnvConstants::default(),
            kmeans_restarts: 5,
        };
        let mut schedule = TrainSchedule::default();
        if profile == Profile::Desk {
            schedule.episodes = 20;
            schedule.steps = 200;
            schedule.batch_size = 64;
            schedule.warmup = 400;
            schedule.update_interval = 5;
            schedule.lr_actor = 1e-4;
            schedule.lr_critic = 1e-3;
            schedule.lr_dqn = 1e-3;
        }
        Self {
            profile,
            scenario,
            schedule,
            method: Method::Flare,
            seeds: vec![1],
            frames: 10,
            out_dir: PathBuf::from("runs"),
        }
    }

    /// `default`, `desk`, or a path to a config file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match Profile::parse(spec) {
            Some(p) => Ok(Self::profile(p)),
            None => Self::load(Path::new(spec)),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", n + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        let profile = match entries.iter().rev().find(|(k, _)| k == "profile") {
            Some((_, v)) => {
                Profile::parse(v).ok_or_else(|| Error::config("profile", format!("unknown profile `{v}`")))?
            }
            None => Profile::Default,
        };
        let mut cfg = Self::profile(profile);
        for (key, value) in &entries {
            if key != "profile" {
                cfg.set(key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check cross-field invariants; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let keyed = |e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::config(name, reason),
            other => other,
        };
        self.scenario.validate().map_err(keyed)?;
        if !self.scenario.grid.attraction_points.is_empty() {
            self.scenario.grid.validate().map_err(keyed)?;
        }
        self.schedule.validate().map_err(keyed)?;
        if self.scenario.grid.cells() < self.scenario.env.n_ues {
            return Err(Error::config("n_ues", "more UEs than grid cells"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be positive"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.scenario;
        let t = &mut self.schedule;
        match key {
            "method" => {
                self.method =
                    Method::parse(value).ok_or_else(|| Error::config(key, format!("unknown method `{value}`")))?
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "frames" => {
                self.frames = num(key, value)?;
                s.grid.frames = self.frames as usize;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "grid_width" => s.grid.width = num(key, value)?,
            "grid_height" => s.grid.height = num(key, value)?,
            "cell_size_m" => s.grid.cell_size_m = num(key, value)?,
            "attraction_prob" => s.grid.attraction_prob = num(key, value)?,
            "attraction_count" => s.attraction_count = num(key, value)?,
            "attraction_points" => s.grid.attraction_points = parse_points(key, value)?,
            "kmeans_restarts" => s.kmeans_restarts = num(key, value)?,
            "n_ues" => s.env.n_ues = num(key, value)?,
            "k_max" => s.env.k_max = num(key, value)?,
            "p_max" => s.env.p_max = num(key, value)?,
            "b_max" => s.env.b_max = num(key, value)?,
            "block_size" => s.env.block_size = num(key, value)?,
            "block_limit" => s.env.block_limit = num(key, value)?,
            "h_min" => s.env.h_min = num(key, value)?,
            "h_max" => s.env.h_max = num(key, value)?,
            "r_th" => s.env.r_th = num(key, value)?,
            "max_cluster_size" => s.env.max_cluster_size = num(key, value)?,
            "avg_power" => {
                s.env.avg_power = match value {
                    "budget_per_member" => AvgPowerRule::BudgetPerMember,
                    "mean_allocated" => AvgPowerRule::MeanAllocated,
                    _ => return Err(Error::config(key, format!("unknown rule `{value}`"))),
                }
            }
            "freeze" => {
                s.env.freeze = match value {
                    "while_served" => FreezeRule::WhileServed,
                    "sticky" => FreezeRule::Sticky,
                    _ => return Err(Error::config(key, format!("unknown rule `{value}`"))),
                }
            }
            "los_b" => s.constants.b = num(key, value)?,
            "los_c" => s.constants.c = num(key, value)?,
            "alpha_los" => s.constants.alpha_los = num(key, value)?,
            "alpha_nlos" => s.constants.alpha_nlos = num(key, value)?,
            "noise_power" => s.constants.noise_power = num(key, value)?,
            "rician_k_db" => s.constants.rician_k_db = num(key, value)?,
            "episodes" => t.episodes = num(key, value)?,
            "steps" => t.steps = num(key, value)?,
            "hidden" => t.hidden = parse_list(key, value)?,
            "lr_actor" => t.lr_actor = num(key, value)?,
            "lr_critic" => t.lr_critic = num(key, value)?,
            "lr_dqn" => t.lr_dqn = num(key, value)?,
            "actor_reg" => t.actor_reg = num(key, value)?,
            "grad_clip" => t.grad_clip = num(key, value)?,
            "gamma" => t.gamma = num(key, value)?,
            "tau" => t.tau = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "replay_capacity" => t.replay_capacity = num(key, value)?,
            "warmup" => t.warmup = num(key, value)?,
            "update_interval" => t.update_interval = num(key, value)?,
            "sigma_start" => t.sigma.start = num(key, value)?,
            "sigma_end" => t.sigma.end = num(key, value)?,
            "sigma_fraction" => t.sigma.fraction = num(key, value)?,
            "epsilon_start" => t.epsilon.start = num(key, value)?,
            "epsilon_end" => t.epsilon.end = num(key, value)?,
            "epsilon_fraction" => t.epsilon.fraction = num(key, value)?,
            "critic" => {
                t.critic = match value {
                    "centralized" => CriticMode::Centralized,
                    "local" => CriticMode::Local,
                    _ => return Err(Error::config(key, format!("unknown critic mode `{value}`"))),
                }
            }
            "baseline_bandwidth" => {
                t.baseline_bandwidth = match value {
                    "equal_split" => BaselineBandwidth::EqualSplit,
                    "learned" => BaselineBandwidth::Learned,
                    _ => return Err(Error::config(key, format!("unknown mode `{value}`"))),
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn dump(&self) -> String {
        let s = &self.scenario;
        let t = &self.schedule;
        let join = |v: &[String]| v.join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("profile", self.profile.name().into());
        put("method", self.method.name().into());
        put(
            "seeds",
            join(&self.seeds.iter().map(u64::to_string).collect::<Vec<_>>()),
        );
        put("frames", self.frames.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("grid_width", s.grid.width.to_string());
        put("grid_height", s.grid.height.to_string());
        put("cell_size_m", s.grid.cell_size_m.to_string());
        put("attraction_prob", s.grid.attraction_prob.to_string());
        put("attraction_count", s.attraction_count.to_string());
        put(
            "attraction_points",
            s.grid
                .attraction_points
                .iter()
                .map(|p| format!("{}:{}", p.x, p.y))
                .collect::<Vec<_>>()
                .join(";"),
        );
        put("kmeans_restarts", s.kmeans_restarts.to_string());
        put("n_ues", s.env.n_ues.to_string());
        put("k_max", s.env.k_max.to_string());
        put("p_max", s.env.p_max.to_string());
        put("b_max", s.env.b_max.to_string());
        put("block_size", s.env.block_size.to_string());
        put("block_limit", s.env.block_limit.to_string());
        put("h_min", s.env.h_min.to_string());
        put("h_max", s.env.h_max.to_string());
        put("r_th", s.env.r_th.to_string());
        put("max_cluster_size", s.env.max_cluster_size.to_string());
        put(
            "avg_power",
            match s.env.avg_power {
                AvgPowerRule::BudgetPerMember => "budget_per_member",
                AvgPowerRule::MeanAllocated => "mean_allocated",
            }
            .into(),
        );
        put(
            "freeze",
            match s.env.freeze {
                FreezeRule::WhileServed => "while_served",
                FreezeRule::Sticky => "sticky",
            }
            .into(),
        );
        put("los_b", s.constants.b.to_string());
        put("los_c", s.constants.c.to_string());
        put("alpha_los", s.constants.alpha_los.to_string());
        put("alpha_nlos", s.constants.alpha_nlos.to_string());
        put("noise_power", s.constants.noise_power.to_string());
        put("rician_k_db", s.constants.rician_k_db.to_string());
        put("episodes", t.episodes.to_string());
        put("steps", t.steps.to_string());
        put(
            "hidden",
            join(&t.hidden.iter().map(usize::to_string).collect::<Vec<_>>()),
        );
        put("lr_actor", t.lr_actor.to_string());
        put("lr_critic", t.lr_critic.to_string());
        put("lr_dqn", t.lr_dqn.to_string());
        put("actor_reg", t.actor_reg.to_string());
        put("grad_clip", t.grad_clip.to_string());
        put("gamma", t.gamma.to_string());
        put("tau", t.tau.to_string());
        put("batch_size", t.batch_size.to_string());
        put("replay_capacity", t.replay_capacity.to_string());
        put("warmup", t.warmup.to_string());
        put("update_interval", t.update_interval.to_string());
        put("sigma_start", t.sigma.start.to_string());
        put("sigma_end", t.sigma.end.to_string());
        put("sigma_fraction", t.sigma.fraction.to_string());
        put("epsilon_start", t.epsilon.start.to_string());
        put("epsilon_end", t.epsilon.end.to_string());
        put("epsilon_fraction", t.epsilon.fraction.to_string());
        put(
            "critic",
            match t.critic {
                CriticMode::Centralized => "centralized",
                CriticMode::Local => "local",
            }
            .into(),
        );
        put(
            "baseline_bandwidth",
            match t.baseline_bandwidth {
                BaselineBandwidth::EqualSplit => "equal_split",
                BaselineBandwidth::Learned => "learned",
            }
            .into(),
        );
        out
    }

    /// The same config restricted to the environment and training keys that
    /// define results (output directory, method and seeds excluded).
    pub fn result_key(&self) -> String {
        self.dump()
            .lines()
            .filter(|l| !(l.starts_with("out_dir ") || l.starts_with("method ") || l.starts_with("seeds ")))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| num(key, v))
        .collect()
}

fn parse_points(key: &str, value: &str) -> Result<Vec<GridPos>> {
    value
        .split(';')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|p| {
            let (x, y) = p
                .split_once(':')
                .ok_or_else(|| Error::config(key, format!("expected `x:y`, got `{p}`")))?;
            Ok(GridPos::new(num(key, x.trim())?, num(key, y.trim())?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_parameter_tables() {
        let c = ExperimentConfig::profile(Profile::Default);
        let e = &c.scenario.env;
        assert_eq!((e.h_min, e.h_max), (300.0, 1000.0));
        assert_eq!((e.n_ues, e.k_max, e.p_max), (30, 5, 1.0));
        assert_eq!((e.b_max, e.block_size, e.block_limit), (3.6e6, 1.8e4, 200));
        assert_eq!(c.scenario.grid.cell_size_m, 300.0);
        assert_eq!((c.scenario.grid.attraction_prob, c.scenario.attraction_count), (0.4, 3));
        let k = &c.scenario.constants;
        assert_eq!(
            (k.noise_power, k.alpha_los, k.alpha_nlos, k.c, k.b),
            (4e-15, 3.0, 4.0, 11.95, 0.136)
        );
        let t = &c.schedule;
        assert_eq!((t.replay_capacity, t.batch_size, t.warmup), (100_000, 512, 2500));
        assert_eq!((t.episodes, t.steps), (100, 500));
        assert_eq!((t.lr_actor, t.lr_critic, t.gamma, t.tau), (1e-4, 1e-4, 0.99, 0.01));
        assert_eq!(t.hidden, vec![64, 64]);
    }

    #[test]
    fn dump_parses_back() {
        for p in [Profile::Default, Profile::Desk] {
            let mut c = ExperimentConfig::profile(p);
            c.seeds = vec![3, 1, 4];
            c.scenario.grid.attraction_points = vec![GridPos::new(1, 2), GridPos::new(50, 0)];
            c.scenario.constants.noise_power = 4.000000000000001e-15;
            let back = ExperimentConfig::parse(&c.dump()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn errors_name_the_key() {
        let e = ExperimentConfig::parse("gamma = often").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "gamma"), "{e}");
        let e = ExperimentConfig::parse("colour = blue").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "colour"));
        let e = ExperimentConfig::parse("block_limit = 100").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "b_max"), "{e}");
        let e = ExperimentConfig::parse("tau = 0").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "tau"), "{e}");
    }

    #[test]
    fn comments_and_profile_selection() {
        let c = ExperimentConfig::parse("# desk run\nepisodes = 3 # short\nprofile = desk\n").unwrap();
        assert_eq!(c.profile, Profile::Desk);
        assert_eq!(c.schedule.episodes, 3);
        assert_eq!(c.schedule.steps, 200);
    }
}
