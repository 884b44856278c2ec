use crate::error::{CliError, Result};
use pamlab::make_box;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Tails,
    Growth,
    EvolveCompare,
    FkCompare,
    FractalDim,
    Constants,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Spectrum,
        Experiment::Tails,
        Experiment::Growth,
        Experiment::EvolveCompare,
        Experiment::FkCompare,
        Experiment::FractalDim,
        Experiment::Constants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Tails => "tails",
            Experiment::Growth => "growth",
            Experiment::EvolveCompare => "evolve-compare",
            Experiment::FkCompare => "fk-compare",
            Experiment::FractalDim => "fractal-dim",
            Experiment::Constants => "constants",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<f64>,
    /// Box sides for the growth study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Inclusive shell range `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shells: Option<[usize; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    /// Number of eigenpairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Refinement factor of the drift grid in fk-compare.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Vec<f64>>>,
    /// Cells of the radial grid for the κ solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_grid: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    Full,
    Axis,
    Skeleton,
    Block,
    /// Peak sets of tiled PAM solutions, one per α.
    Peaks,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fractal {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Half-width of the tiled region, in lattice units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write binary containers for fields and eigenvectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<bool>,
    /// Write the JSON summary next to the tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub fractal: Fractal,
    #[serde(default)]
    pub output: Output,
}

macro_rules! fill {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )+
    };
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Desk-scale defaults for one experiment.
    pub fn defaults(exp: Experiment) -> Self {
        let mut c = RunConfig {
            experiment: Some(exp),
            seed: Some(1),
            d: Some(2),
            output: Output {
                dir: None,
                binary: Some(true),
                json: Some(true),
            },
            ..Default::default()
        };
        let (g, p, f) = (&mut c.geometry, &mut c.physics, &mut c.fractal);
        match exp {
            Experiment::Spectrum => {
                g.side = Some(4.0);
                g.h = Some(0.125);
                p.k = Some(5);
            }
            Experiment::Tails => {
                g.side = Some(8.0);
                g.h = Some(0.25);
                p.n_samples = Some(400);
            }
            Experiment::Growth => {
                g.sides = Some(vec![4.0, 8.0, 16.0, 32.0]);
                g.h = Some(0.5);
                p.n_samples = Some(20);
            }
            Experiment::EvolveCompare => {
                g.side = Some(4.0);
                g.h = Some(0.125);
                p.t = Some(1.0);
                p.dt = Some(1e-3);
                p.k = Some(160);
            }
            Experiment::FkCompare => {
                g.side = Some(4.0);
                g.h = Some(0.125);
                p.t = Some(0.5);
                p.dt = Some(2.5e-4);
                p.n_paths = Some(10_000);
                p.refine = Some(4);
                p.probes = Some(vec![
                    vec![0.0, 0.0],
                    vec![0.6, 0.3],
                    vec![-0.5, 0.4],
                    vec![0.3, -0.6],
                    vec![-0.4, -0.5],
                ]);
            }
            Experiment::FractalDim => {
                g.shells = Some([3, 10]);
                f.set = Some(SetKind::Skeleton);
                f.theta = Some(0.5);
            }
            Experiment::Constants => {
                p.alpha = Some(vec![0.05, 0.1, 0.15, 0.2]);
                p.kappa_grid = Some(1024);
            }
        }
        c
    }

    /// Fill every unset key from the experiment defaults.
    pub fn resolve(mut self, exp: Experiment) -> Result<Self> {
        if let Some(e) = self.experiment {
            if e != exp {
                return Err(CliError::Config(format!("config is for `{e}` but the subcommand is `{exp}`")));
            }
        }
        let mut d = Self::defaults(exp);
        // Fractal fixtures need no box; peak sets need a tiled one.
        if exp == Experiment::FractalDim && self.fractal.set == Some(SetKind::Peaks) {
            d.geometry.side = Some(4.0);
            d.geometry.h = Some(0.5);
            d.geometry.shells = Some([1, 5]);
            d.physics.t = Some(1.0);
            d.physics.alpha = Some(vec![0.01, 0.02, 0.04, 0.08]);
            d.fractal.extent = Some(150);
            d.fractal.theta = None;
        }
        if exp == Experiment::FractalDim && self.fractal.set == Some(SetKind::Block) {
            d.fractal.theta = None;
            d.fractal.q = Some(2.0);
            d.fractal.k = Some(1);
        }
        fill!(self, d, experiment, seed, d);
        fill!(self.geometry, d.geometry, side, sides, h, epsilon, shells);
        fill!(self.physics, d.physics, t, alpha, beta, v, k, dt, n_paths, n_samples, refine, probes, kappa_grid);
        fill!(self.fractal, d.fractal, set, theta, q, k, extent);
        fill!(self.output, d.output, binary, json);
        if self.geometry.h.is_some() && self.geometry.epsilon.is_none() {
            self.geometry.epsilon = self.geometry.h;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("resolved config has an experiment")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.d.unwrap_or(2)
    }

    /// Reject inconsistent values before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let exp = self.experiment();
        let d = self.dim();
        let bad = |m: String| Err(CliError::Config(m));
        let allowed: &[usize] = match exp {
            Experiment::Spectrum | Experiment::EvolveCompare => &[2, 3],
            Experiment::Constants => &[1, 2, 3],
            _ => &[2],
        };
        if !allowed.contains(&d) {
            return bad(format!("{exp} supports d in {allowed:?}, got {d}"));
        }
        let g = &self.geometry;
        let p = &self.physics;
        for (name, v) in [("geometry.h", g.h), ("geometry.epsilon", g.epsilon), ("geometry.side", g.side), ("physics.t", p.t), ("physics.dt", p.dt)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{name} must be positive and finite, got {v}"));
                }
            }
        }
        for (name, v) in [("physics.k", p.k), ("physics.n_paths", p.n_paths), ("physics.n_samples", p.n_samples), ("physics.refine", p.refine)] {
            if v == Some(0) {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if let (Some(h), Some(side)) = (g.h, g.side) {
            make_box(&vec![0.0; d], side, h, d).map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        }
        if let (Some(h), Some(sides)) = (g.h, &g.sides) {
            for &s in sides {
                make_box(&vec![0.0; d], s, h, d).map_err(|e| CliError::Config(format!("geometry.sides: {e}")))?;
            }
        }
        if let Some([lo, hi]) = g.shells {
            if lo > hi || hi > 14 {
                return bad(format!("geometry.shells must satisfy lo <= hi <= 14, got [{lo}, {hi}]"));
            }
        }
        if let (Some(t), Some(dt)) = (p.t, p.dt) {
            if dt > t {
                return bad(format!("physics.dt = {dt} exceeds physics.t = {t}"));
            }
        }
        if let Some(probes) = &p.probes {
            let half = g.side.unwrap_or(0.0) / 2.0;
            for x in probes {
                if x.len() != d || x.iter().any(|c| c.abs() >= half) {
                    return bad(format!("probe {x:?} must have {d} coordinates inside the box"));
                }
            }
        }
        for (name, list) in [("physics.alpha", &p.alpha), ("physics.beta", &p.beta), ("physics.v", &p.v)] {
            if let Some(list) = list {
                if list.is_empty() || list.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return bad(format!("{name} must be a nonempty list of nonnegative numbers"));
                }
            }
        }
        if p.beta.as_ref().map(Vec::len) != p.v.as_ref().map(Vec::len) && p.beta.is_some() && p.v.is_some() {
            return bad("physics.beta and physics.v must have equal length".into());
        }
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { bad(format!("{exp} needs {what}")) };
        match exp {
            Experiment::Spectrum => need(g.side.is_some() && g.h.is_some() && p.k.is_some(), "geometry.side, geometry.h and physics.k"),
            Experiment::Tails => need(p.n_samples.is_some_and(|n| n >= 100), "physics.n_samples >= 100"),
            Experiment::Growth => need(
                g.sides.as_ref().is_some_and(|s| s.len() >= 4 && s.windows(2).all(|w| w[1] > w[0])),
                "at least 4 increasing geometry.sides",
            ),
            Experiment::EvolveCompare => need(p.t.is_some() && p.dt.is_some(), "physics.t and physics.dt"),
            Experiment::FkCompare => need(p.probes.as_ref().is_some_and(|v| !v.is_empty()), "at least one probe"),
            Experiment::FractalDim => {
                let f = &self.fractal;
                match f.set {
                    Some(SetKind::Skeleton) => need(f.theta.is_some_and(|t| t > 0.0 && t < 1.0), "fractal.theta in (0, 1)"),
                    Some(SetKind::Block) => need(f.q.is_some_and(|q| q > 1.0) && f.k.is_some(), "fractal.q > 1 and fractal.k"),
                    Some(SetKind::Peaks) => need(
                        g.side.is_some_and(|s| s.fract() == 0.0) && f.extent.is_some_and(|e| e > 0) && p.alpha.is_some(),
                        "an integer geometry.side, fractal.extent > 0 and physics.alpha",
                    ),
                    _ => Ok(()),
                }
            }
            Experiment::Constants => need(p.kappa_grid.is_some_and(|n| n >= 16) && p.alpha.is_some(), "physics.kappa_grid >= 16 and physics.alpha"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
