//! Experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::ThresholdMode;
use crate::environment::{Family, FamilySpec};
use crate::error::{Error, Result};
use crate::kernels::field::{r_l, s_l, PAPER_SCALE};
use crate::kernels::{HProfile, SmoothingField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Dstar,
    C1scan,
    C2scan,
    Sojourn,
    Cltscan,
    Greenasym,
    Gammacheck,
    Hitprob,
    Smoothcmp,
    Transience,
    Isotropy,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Dstar,
        Experiment::C1scan,
        Experiment::C2scan,
        Experiment::Sojourn,
        Experiment::Cltscan,
        Experiment::Greenasym,
        Experiment::Gammacheck,
        Experiment::Hitprob,
        Experiment::Smoothcmp,
        Experiment::Transience,
        Experiment::Isotropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Dstar => "dstar",
            Experiment::C1scan => "c1scan",
            Experiment::C2scan => "c2scan",
            Experiment::Sojourn => "sojourn",
            Experiment::Cltscan => "cltscan",
            Experiment::Greenasym => "greenasym",
            Experiment::Gammacheck => "gammacheck",
            Experiment::Hitprob => "hitprob",
            Experiment::Smoothcmp => "smoothcmp",
            Experiment::Transience => "transience",
            Experiment::Isotropy => "isotropy",
        }
    }

    pub fn parse(s: &str) -> Option<Experiment> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// How `s` and `r` are chosen at each `L`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum RMode {
    /// `s = s_L`, `r = r_L`
    #[default]
    #[serde(rename = "paper_rL")]
    PaperRl,
    /// `s = s_L` and a fixed `r`
    #[serde(rename = "constant")]
    Constant(f64),
    /// explicit `s` and `r`; with `relative` both are fractions of `L`
    #[serde(rename = "override")]
    Override {
        s: f64,
        r: f64,
        #[serde(default)]
        relative: bool,
    },
}

/// One smoothing field: a constant radius or the scheme `h_{L,r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiSpec {
    Constant(f64),
    Profile,
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_d() -> usize {
    3
}
fn default_l() -> Vec<f64> {
    vec![12.0]
}
fn default_eps() -> Vec<f64> {
    vec![0.0]
}
fn default_family() -> Family {
    Family::IsotropicTilt
}
fn default_delta() -> f64 {
    0.1
}
fn default_eta() -> f64 {
    0.5
}
fn default_scale() -> f64 {
    PAPER_SCALE
}
fn default_psi() -> Vec<PsiSpec> {
    vec![PsiSpec::Profile]
}
fn default_n_envs() -> u64 {
    10
}
fn default_n_walks() -> u64 {
    10_000
}
fn default_sup_fraction() -> f64 {
    0.2
}
fn default_m() -> f64 {
    3.0
}
fn default_n_steps() -> Vec<usize> {
    (4..=16).collect()
}
fn default_shells() -> Vec<u32> {
    (30..=60).step_by(5).collect()
}
fn default_horizon() -> usize {
    400
}
fn default_a() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_l_out() -> f64 {
    40.0
}
fn default_annulus() -> [f64; 3] {
    [4.0, 10.0, 20.0]
}
fn default_pairs() -> Vec<(f64, f64)> {
    vec![(3.0, 12.0)]
}
fn default_rho() -> f64 {
    1.5
}
fn default_k_max() -> u32 {
    3
}
fn default_step_cap() -> u64 {
    100_000_000
}
fn default_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(rename = "L", default = "default_l", deserialize_with = "one_or_many")]
    pub l: Vec<f64>,
    #[serde(default = "default_eps", deserialize_with = "one_or_many")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_family")]
    pub family: Family,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub r_mode: RMode,
    /// prefactor of `h_{L,r}`
    #[serde(default = "default_scale")]
    pub h_scale: f64,
    #[serde(default = "default_psi", deserialize_with = "one_or_many")]
    pub psi: Vec<PsiSpec>,
    #[serde(default = "default_n_envs")]
    pub n_envs: u64,
    #[serde(default = "default_n_walks")]
    pub n_walks: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// interior-point limit per domain
    #[serde(default)]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    /// also run the point and environment classification
    #[serde(default)]
    pub classify: bool,
    /// `D*` is the supremum over `V_{sup_fraction * t}`
    #[serde(default = "default_sup_fraction")]
    pub sup_fraction: f64,
    /// coarse step radius
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_n_steps")]
    pub n_steps: Vec<usize>,
    #[serde(default = "default_shells")]
    pub shells: Vec<u32>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_a", deserialize_with = "one_or_many")]
    pub a: Vec<f64>,
    #[serde(default = "default_l_out")]
    pub l_out: f64,
    /// `(l, |x|, L)` for the annulus exit comparison
    #[serde(default = "default_annulus")]
    pub annulus: [f64; 3],
    /// `(l_in, l_out)` radius pairs for the transience probe
    #[serde(default = "default_pairs")]
    pub pairs: Vec<(f64, f64)>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
    /// sampled pairs for the Γ triangle and comparability checks
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// A minimal valid config for `experiment`.
    pub fn new(experiment: Experiment, seed: u64) -> ExperimentConfig {
        let mut c: ExperimentConfig =
            serde_json::from_value(serde_json::json!({ "experiment": experiment })).expect("defaults deserialize");
        c.seed = Some(seed);
        c
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("seed is mandatory".into()))
    }

    pub fn family_spec(&self, eps: f64) -> Result<FamilySpec> {
        let family = if eps == 0.0 { Family::Srw } else { self.family };
        FamilySpec::new(self.d, family, eps).map_err(|e| Error::Config(e.to_string()))
    }

    /// The scheme `h_{L,r}` at `L` under `r_mode`.
    pub fn profile(&self, l: f64) -> Result<HProfile> {
        let (s, r) = match self.r_mode {
            RMode::PaperRl => (s_l(l), r_l(l)),
            RMode::Constant(r) => (s_l(l), r),
            RMode::Override { s, r, relative: false } => (s, r),
            RMode::Override { s, r, relative: true } => (s * l, r * l),
        };
        HProfile::overridden(l, s, r, self.h_scale)
    }

    pub fn smoothing_fields(&self, l: f64) -> Result<Vec<SmoothingField>> {
        self.psi
            .iter()
            .map(|p| {
                let f = match *p {
                    PsiSpec::Constant(m) => SmoothingField::Constant(m),
                    PsiSpec::Profile => SmoothingField::Profile(self.profile(l)?),
                };
                f.check().map_err(|e| Error::Config(e.to_string()))?;
                Ok(f)
            })
            .collect()
    }

    /// Checks everything that does not need a solve.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.seed()?;
        if !(1..=4).contains(&self.d) {
            return bad(format!("d = {} not in 1..=4", self.d));
        }
        if self.l.is_empty() || self.l.iter().any(|&l| !(l >= 1.0 && l.is_finite())) {
            return bad(format!("L must be a nonempty list of radii >= 1, got {:?}", self.l));
        }
        if self.epsilon.is_empty() {
            return bad("epsilon list is empty".into());
        }
        for &e in &self.epsilon {
            self.family_spec(e)?;
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta = {} must lie in (0, 1)", self.eta));
        }
        if !(self.h_scale > 0.0) {
            return bad("h_scale must be positive".into());
        }
        if !(self.sup_fraction > 0.0 && self.sup_fraction <= 1.0) {
            return bad("sup_fraction must lie in (0, 1]".into());
        }
        if !(self.m > 0.0) {
            return bad("m must be positive".into());
        }
        if self.psi.is_empty() {
            return bad("psi list is empty".into());
        }
        for &l in &self.l {
            self.profile(l)?;
            self.smoothing_fields(l)?;
        }
        if self.step_cap == 0 {
            return bad("step_cap must be positive".into());
        }
        match self.experiment {
            Experiment::Transience => {
                for &(li, lo) in &self.pairs {
                    if !(li > 0.0 && li < lo) {
                        return bad(format!("transience pair (l_in={li}, l_out={lo}) needs 0 < l_in < l_out"));
                    }
                }
                if !(self.rho > 1.0) {
                    return bad("rho must exceed 1".into());
                }
            }
            Experiment::Smoothcmp if self.d != 3 => return bad("smoothcmp needs d = 3".into()),
            Experiment::Cltscan if self.n_steps.len() < 2 => return bad("cltscan needs at least two n values".into()),
            Experiment::Hitprob => {
                let [l, x, big] = self.annulus;
                if !(0.0 < l && l < x && x < big) {
                    return bad(format!("annulus needs 0 < l < |x| < L, got {:?}", self.annulus));
                }
                if self.a.iter().any(|&a| !(a > 0.0 && 4.0 * a < self.l_out)) {
                    return bad("hitprob radii need 0 < a and 4a < l_out".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Warnings for schedules that are vacuous at this scale.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if matches!(self.r_mode, RMode::PaperRl | RMode::Constant(_)) {
            for &l in &self.l {
                if l.ln().powi(3) > l {
                    out.push(format!(
                        "WARNING: (log L)^3 = {:.1} exceeds L = {l}; s_L = {:.3} and r_L = {:.2e} are below one lattice step, \
                         use r_mode = override(s, r) for a meaningful scheme",
                        l.ln().powi(3),
                        s_l(l),
                        r_l(l)
                    ));
                }
            }
        }
        out
    }

    /// SHA-256 of the canonical JSON form, in hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON schema of [`ExperimentConfig`].
pub fn config_schema() -> serde_json::Value {
    use serde_json::json;
    let num = json!({ "type": "number" });
    let num_list = json!({ "oneOf": [{ "type": "number" }, { "type": "array", "items": { "type": "number" } }] });
    let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "rwre experiment config",
        "type": "object",
        "additionalProperties": false,
        "required": ["experiment"],
        "properties": {
            "experiment": { "enum": names },
            "d": { "type": "integer", "minimum": 1, "maximum": 4, "default": 3 },
            "L": num_list,
            "epsilon": num_list,
            "family": { "oneOf": [
                { "enum": ["srw", "isotropic_tilt", "symmetric_balanced"] },
                { "type": "object", "properties": { "balanced_axis": {
                    "type": "object", "properties": { "axis": { "type": "integer" } }, "required": ["axis"] } } }
            ] },
            "delta": num,
            "eta": num,
            "r_mode": { "oneOf": [
                { "const": "paper_rL" },
                { "type": "object", "properties": { "constant": num }, "required": ["constant"], "additionalProperties": false },
                { "type": "object", "required": ["override"], "additionalProperties": false, "properties": { "override": {
                    "type": "object", "required": ["s", "r"], "additionalProperties": false,
                    "properties": { "s": num, "r": num, "relative": { "type": "boolean" } } } } }
            ] },
            "h_scale": num,
            "psi": { "oneOf": [
                { "const": "profile" },
                { "type": "object", "properties": { "constant": num }, "required": ["constant"] },
                { "type": "array" }
            ] },
            "n_envs": { "type": "integer", "minimum": 0 },
            "n_walks": { "type": "integer", "minimum": 0 },
            "seed": { "type": "integer", "minimum": 0 },
            "output_path": { "type": "string" },
            "capacity": { "type": "integer", "minimum": 1 },
            "threshold_mode": { "enum": ["disabled", "delta"] },
            "classify": { "type": "boolean" },
            "sup_fraction": num,
            "m": num,
            "n_steps": { "type": "array", "items": { "type": "integer" } },
            "shells": { "type": "array", "items": { "type": "integer" } },
            "horizon": { "type": "integer" },
            "a": num_list,
            "l_out": num,
            "annulus": { "type": "array", "items": num, "minItems": 3, "maxItems": 3 },
            "pairs": { "type": "array", "items": { "type": "array", "items": num, "minItems": 2, "maxItems": 2 } },
            "rho": num,
            "k_max": { "type": "integer" },
            "step_cap": { "type": "integer", "minimum": 1 },
            "samples": { "type": "integer" }
        }
    })
}
