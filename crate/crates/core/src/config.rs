//! Experiment configuration and its flat `key = value` file format.
//!
//! One setting per line, `#` starts a comment, lists are comma separated:
//!
//! ```text
//! n_sus = 40
//! sigma2_attacker = 4, 8, 12
//! placements = inside, outside
//! ```
//!
//! Unknown keys are errors. See [`RunConfig::KEYS`] for the full list.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::oneclass::{DetectorKind, DetectorParams, Gamma};
use crate::scenario::{ChannelParams, Placement, Position, Region, TopologyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_sus: usize,
    pub n_slots: usize,
    pub region: f64,
    pub alpha: f64,
    pub min_distance: f64,
    pub pt_pu: f64,
    pub pt_attacker: f64,
    pub sigma2_pu: f64,
    pub sigma2_attacker: Vec<f64>,
    pub d_list: Vec<f64>,
    pub placements: Vec<Placement>,
    pub outside_pu: Position,
    /// Attack examples in a test set, as a percentage of the training-set size.
    pub puea_pct: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    pub params: DetectorParams,
    pub k_list: Vec<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_sus: 40,
            n_slots: 10_000,
            region: 100.0,
            alpha: 4.0,
            min_distance: 0.5,
            pt_pu: 10.0,
            pt_attacker: 10.0,
            sigma2_pu: 8.0,
            sigma2_attacker: vec![4.0, 8.0, 12.0],
            d_list: vec![5.0, 10.0, 20.0],
            placements: Placement::ALL.to_vec(),
            outside_pu: Position::new(150.0, 150.0),
            puea_pct: vec![10.0, 20.0],
            detectors: DetectorKind::ALL.to_vec(),
            params: DetectorParams::default(),
            k_list: vec![2, 5, 10, 20],
            seed: 2021,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_one<T: FromStr>(key: &'static str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::param(key, format!("cannot parse `{}`", value.trim())))
}

fn parse_list<T: FromStr>(key: &'static str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::param(key, format!("cannot parse list item `{s}`"))))
        .collect()
}

fn parse_placements(value: &str) -> Result<Vec<Placement>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Placement::from_str).collect()
}

fn parse_detectors(value: &str) -> Result<Vec<DetectorKind>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(DetectorKind::from_str).collect()
}

impl RunConfig {
    /// Recognised configuration keys.
    pub const KEYS: &'static [&'static str] = &[
        "n_sus",
        "n_slots",
        "region",
        "alpha",
        "min_distance",
        "pt_pu",
        "pt_attacker",
        "sigma2_pu",
        "sigma2_attacker",
        "d_list",
        "placements",
        "outside_pu_x",
        "outside_pu_y",
        "puea_pct",
        "detectors",
        "contamination",
        "if_trees",
        "if_subsample",
        "ocsvm_nu",
        "ocsvm_gamma",
        "ocsvm_tolerance",
        "ocsvm_max_iterations",
        "mcd_support_fraction",
        "mcd_subsets",
        "lof_k",
        "k_list",
        "seed",
        "out",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "n_sus" => self.n_sus = parse_one("n_sus", v)?,
            "n_slots" => self.n_slots = parse_one("n_slots", v)?,
            "region" => self.region = parse_one("region", v)?,
            "alpha" => self.alpha = parse_one("alpha", v)?,
            "min_distance" => self.min_distance = parse_one("min_distance", v)?,
            "pt_pu" => self.pt_pu = parse_one("pt_pu", v)?,
            "pt_attacker" => self.pt_attacker = parse_one("pt_attacker", v)?,
            "sigma2_pu" => self.sigma2_pu = parse_one("sigma2_pu", v)?,
            "sigma2_attacker" => self.sigma2_attacker = parse_list("sigma2_attacker", v)?,
            "d_list" => self.d_list = parse_list("d_list", v)?,
            "placements" => self.placements = parse_placements(v)?,
            "outside_pu_x" => self.outside_pu.x = parse_one("outside_pu_x", v)?,
            "outside_pu_y" => self.outside_pu.y = parse_one("outside_pu_y", v)?,
            "puea_pct" => self.puea_pct = parse_list("puea_pct", v)?,
            "detectors" => self.detectors = parse_detectors(v)?,
            "contamination" => self.params.contamination = parse_one("contamination", v)?,
            "if_trees" => self.params.iforest.num_trees = parse_one("if_trees", v)?,
            "if_subsample" => self.params.iforest.subsample_size = parse_one("if_subsample", v)?,
            "ocsvm_nu" => self.params.ocsvm.nu = parse_one("ocsvm_nu", v)?,
            "ocsvm_gamma" => self.params.ocsvm.gamma = v.parse::<Gamma>()?,
            "ocsvm_tolerance" => self.params.ocsvm.tolerance = parse_one("ocsvm_tolerance", v)?,
            "ocsvm_max_iterations" => self.params.ocsvm.max_iterations = parse_one("ocsvm_max_iterations", v)?,
            "mcd_support_fraction" => {
                self.params.mcd.support_fraction =
                    if v.eq_ignore_ascii_case("auto") { None } else { Some(parse_one("mcd_support_fraction", v)?) }
            }
            "mcd_subsets" => self.params.mcd.num_initial_subsets = parse_one("mcd_subsets", v)?,
            "lof_k" => self.params.lof.k_neighbors = parse_one("lof_k", v)?,
            "k_list" => self.k_list = parse_list("k_list", v)?,
            "seed" => self.seed = parse_one("seed", v)?,
            "out" => self.out_dir = PathBuf::from(v),
            other => {
                return Err(Error::InvalidParameter { name: "config", reason: format!("unknown key `{other}`") });
            }
        }
        Ok(())
    }

    /// Parses a config text on top of the defaults.
    pub fn from_kv_str(text: &str, source: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_kv_str(text, source)?;
        Ok(cfg)
    }

    pub fn apply_kv_str(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { path: source.to_string(), line: i as u64 + 1, message };
            let (key, value) =
                line.split_once('=').ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            self.set(key, value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text, &path.display().to_string())
    }

    /// Serialises every setting in the file format.
    pub fn to_kv_string(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let p = &self.params;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("n_sus", self.n_sus.to_string());
        put("n_slots", self.n_slots.to_string());
        put("region", self.region.to_string());
        put("alpha", self.alpha.to_string());
        put("min_distance", self.min_distance.to_string());
        put("pt_pu", self.pt_pu.to_string());
        put("pt_attacker", self.pt_attacker.to_string());
        put("sigma2_pu", self.sigma2_pu.to_string());
        put("sigma2_attacker", list(&self.sigma2_attacker));
        put("d_list", list(&self.d_list));
        put("placements", self.placements.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", "));
        put("outside_pu_x", self.outside_pu.x.to_string());
        put("outside_pu_y", self.outside_pu.y.to_string());
        put("puea_pct", list(&self.puea_pct));
        put("detectors", self.detectors.iter().map(|d| d.tag()).collect::<Vec<_>>().join(", "));
        put("contamination", p.contamination.to_string());
        put("if_trees", p.iforest.num_trees.to_string());
        put("if_subsample", p.iforest.subsample_size.to_string());
        put("ocsvm_nu", p.ocsvm.nu.to_string());
        put("ocsvm_gamma", p.ocsvm.gamma.to_string());
        put("ocsvm_tolerance", p.ocsvm.tolerance.to_string());
        put("ocsvm_max_iterations", p.ocsvm.max_iterations.to_string());
        put("mcd_support_fraction", p.mcd.support_fraction.map_or("auto".to_string(), |f| f.to_string()));
        put("mcd_subsets", p.mcd.num_initial_subsets.to_string());
        put("lof_k", p.lof.k_neighbors.to_string());
        put("k_list", self.k_list.iter().map(usize::to_string).collect::<Vec<_>>().join(", "));
        put("seed", self.seed.to_string());
        put("out", self.out_dir.display().to_string());
        s
    }

    /// Checks every field; called before any work starts.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        }
        if self.n_sus < 2 {
            return Err(Error::param("n_sus", format!("need at least 2 SUs, got {}", self.n_sus)));
        }
        if self.n_slots == 0 {
            return Err(Error::param("n_slots", "must be positive"));
        }
        positive("region", self.region)?;
        positive("alpha", self.alpha)?;
        positive("min_distance", self.min_distance)?;
        positive("pt_pu", self.pt_pu)?;
        positive("pt_attacker", self.pt_attacker)?;
        if !(self.sigma2_pu >= 0.0 && self.sigma2_pu.is_finite()) {
            return Err(Error::param("sigma2_pu", "must be non-negative"));
        }
        if self.sigma2_attacker.is_empty() || self.sigma2_attacker.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::param("sigma2_attacker", "need at least one non-negative value"));
        }
        if self.d_list.is_empty() {
            return Err(Error::param("d_list", "need at least one distance"));
        }
        for &d in &self.d_list {
            positive("d_list", d)?;
        }
        if self.placements.is_empty() {
            return Err(Error::param("placements", "need at least one placement"));
        }
        if self.puea_pct.is_empty() || self.puea_pct.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
            return Err(Error::param("puea_pct", "percentages must lie in (0, 100)"));
        }
        if self.puea_pct.iter().any(|p| self.attack_slots(*p) == 0) {
            return Err(Error::param("puea_pct", "percentage yields no attack slots for this n_slots"));
        }
        if self.detectors.is_empty() {
            return Err(Error::param("detectors", "need at least one detector"));
        }
        if self.k_list.iter().any(|&k| k < 2) {
            return Err(Error::param("k_list", "fold counts must be at least 2"));
        }
        if Region::square(self.region).contains(&self.outside_pu) && self.placements.contains(&Placement::OutsideRegion)
        {
            return Err(Error::param("outside_pu", "outside placement needs a PU position outside the region"));
        }
        self.params.validate()
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams { alpha: self.alpha, min_distance: self.min_distance }
    }

    pub fn topology(&self, placement: Placement, distance: f64, sigma2_attacker: f64) -> TopologyConfig {
        TopologyConfig {
            n_sus: self.n_sus,
            region: Region::square(self.region),
            placement,
            distance,
            pu_tx_power: self.pt_pu,
            pu_sigma2: self.sigma2_pu,
            attacker_tx_power: self.pt_attacker,
            attacker_sigma2: sigma2_attacker,
            outside_pu: self.outside_pu,
            min_distance: self.min_distance,
        }
    }

    /// Attack examples for a `pct` test mix.
    pub fn attack_slots(&self, pct: f64) -> usize {
        (self.n_slots as f64 * pct / 100.0).round() as usize
    }
}
