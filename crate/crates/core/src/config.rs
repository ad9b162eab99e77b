//! Run configuration files.
//!
//! A config is a TOML document. The only required key is `problem`, naming a
//! built-in family or `"custom"` (which then needs a `[custom]` table holding a
//! full problem specification). Top-level keys override individual parameters
//! of the chosen problem; `[optimizer]` and `[wing]` tune the optimizer and the
//! wing's fixed support.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::OptimizerConfig;
use crate::problems::{make_problem_with, Family, ProblemSpec, WingLayout};

pub const GENERATE_MESH: &str = "generate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Family name, or `custom`.
    pub problem: String,
    /// Overrides the family default (variable) or the custom block's setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_bcs: Option<bool>,
    /// `generate`, or the path of a mesh file.
    #[serde(default = "default_mesh")]
    pub mesh: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write the per-substep solver trace of the final design.
    #[serde(default)]
    pub trace_solver: bool,
    /// Write a density field every k iterations; 0 writes only the first and last.
    #[serde(default)]
    pub dump_every: usize,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_exp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_simp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_corrector_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bisections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_rho: Option<f64>,
    /// m
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_support: Option<f64>,
    /// m
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_load: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_theta_deg: Option<f64>,

    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wing: Option<WingLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<ProblemSpec>,
}

fn default_mesh() -> String {
    GENERATE_MESH.to_string()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    /// A config for a built-in family with every default left in place.
    pub fn for_family(family: Family) -> Self {
        let mut c = parse_config_str(&format!("problem = \"{}\"", family.name())).expect("valid family");
        c.problem = family.name().to_string();
        c
    }

    /// The problem with every override applied.
    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let mut spec = if self.problem == "custom" {
            self.custom.clone().ok_or_else(|| Error::ConfigValidation {
                key: "custom".into(),
                reason: "problem = \"custom\" needs a [custom] table".into(),
            })?
        } else {
            let family: Family = self.problem.parse().map_err(|_| Error::ConfigValidation {
                key: "problem".into(),
                reason: format!(
                    "unknown problem `{}`{}",
                    self.problem,
                    suggestion(&self.problem, Family::ALL.iter().map(|f| f.name()).chain(["custom"]))
                ),
            })?;
            if self.custom.is_some() {
                return Err(Error::ConfigValidation {
                    key: "custom".into(),
                    reason: "a [custom] table requires problem = \"custom\"".into(),
                });
            }
            make_problem_with(family, false, self.wing.unwrap_or_default())
        };
        if self.wing.is_some() && self.problem != Family::MorphingWing.name() {
            return Err(Error::ConfigValidation {
                key: "wing".into(),
                reason: "only applies to the morphing_wing problem".into(),
            });
        }
        self.apply_overrides(&mut spec);
        spec.validate().map_err(|e| Error::ConfigValidation {
            key: "problem".into(),
            reason: e.to_string(),
        })?;
        Ok(spec)
    }

    fn apply_overrides(&self, spec: &mut ProblemSpec) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut spec.fixed_bcs, self.fixed_bcs);
        set(&mut spec.geometry.h, self.element_size);
        set(&mut spec.thickness, self.thickness);
        set(&mut spec.nu, self.nu);
        set(&mut spec.initial_density, self.initial_density);
        set(&mut spec.k_out, self.k_out);
        set(&mut spec.u_in, self.u_in);
        set(&mut spec.solver.steps, self.steps);
        set(&mut spec.solver.tol_residual, self.tol_residual);
        set(&mut spec.solver.max_corrector_iters, self.max_corrector_iters);
        set(&mut spec.solver.max_bisections, self.max_bisections);
        let p = &mut spec.params;
        set(&mut p.beta, self.beta);
        set(&mut p.r, self.r);
        set(&mut p.r_min, self.r_min);
        set(&mut p.b, self.b);
        set(&mut p.p_exp, self.p_exp);
        set(&mut p.q, self.q);
        set(&mut p.p_simp, self.p_simp);
        set(&mut p.e0, self.e0);
        set(&mut p.e_min, self.e_min);
        set(&mut p.g_s, self.g_s);
        set(&mut p.t_s, self.t_s);
        set(&mut p.rho0, self.rho0);
        let m = &mut spec.move_limits;
        set(&mut m.rho, self.move_rho);
        set(&mut m.support, self.move_support);
        set(&mut m.load, self.move_load);
        set(&mut m.theta, self.move_theta_deg.map(f64::to_radians));
    }

    /// Equivalent config with the problem written out in full as a custom block.
    pub fn resolved(&self) -> Result<RunConfig> {
        let spec = self.problem_spec()?;
        Ok(RunConfig {
            problem: "custom".into(),
            fixed_bcs: None,
            mesh: self.mesh.clone(),
            output_dir: self.output_dir.clone(),
            trace_solver: self.trace_solver,
            dump_every: self.dump_every,
            optimizer: self.optimizer.clone(),
            custom: Some(spec),
            ..parse_config_str("problem = \"custom\"").expect("minimal config")
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize config: {e}")))
    }

    /// The mesh file to import, if any.
    pub fn mesh_path(&self) -> Option<&Path> {
        (self.mesh != GENERATE_MESH).then(|| Path::new(&self.mesh))
    }

    /// Makes relative paths relative to `base` instead of the working directory.
    pub fn rebase(&mut self, base: &Path) {
        if self.mesh != GENERATE_MESH && Path::new(&self.mesh).is_relative() {
            self.mesh = base.join(&self.mesh).to_string_lossy().into_owned();
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }
}

/// Reads a config file; relative paths inside it are taken from its directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse_config_str(&text)?;
    config.rebase(path.parent().unwrap_or(Path::new("")));
    config.problem_spec()?;
    Ok(config)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| config_error(text, &e))
}

fn config_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
    let message = e.message().trim().to_string();
    if let Some(rest) = message.strip_prefix("unknown field ") {
        let names = backticked(rest);
        if let Some((key, valid)) = names.split_first() {
            return Error::ConfigValidation {
                key: key.clone(),
                reason: format!(
                    "unknown key at line {line}, column {column}{}",
                    suggestion(key, valid.iter().map(String::as_str))
                ),
            };
        }
    }
    Error::ConfigParse { line, column, message }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn backticked(s: &str) -> Vec<String> {
    s.split('`').skip(1).step_by(2).map(str::to_string).collect()
}

fn suggestion<'a>(key: &str, valid: impl Iterator<Item = &'a str>) -> String {
    valid
        .map(|v| (strsim::jaro_winkler(key, v), v))
        .filter(|(s, _)| *s > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| format!("; did you mean `{v}`?"))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_family_defaults() {
        let c = parse_config_str("problem = \"gripper\"").unwrap();
        assert_eq!(c.problem_spec().unwrap(), make_problem_with(Family::Gripper, false, WingLayout::default()));
        assert_eq!(c.output_dir, PathBuf::from("results"));
        assert!(c.mesh_path().is_none());
    }

    #[test]
    fn override_changes_only_that_parameter() {
        let c = parse_config_str("problem = \"gripper\"\nbeta = 2000").unwrap();
        let spec = c.problem_spec().unwrap();
        let mut expected = make_problem_with(Family::Gripper, false, WingLayout::default());
        expected.params.beta = 2000.0;
        assert_eq!(spec, expected);
    }

    #[test]
    fn misspelled_key_names_nearest_key() {
        let err = parse_config_str("problem = \"gripper\"\nbetta = 2000").unwrap_err();
        match err {
            Error::ConfigValidation { key, reason } => {
                assert_eq!(key, "betta");
                assert!(reason.contains("line 2"), "{reason}");
                assert!(reason.contains("`beta`"), "{reason}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn misspelled_key_in_section() {
        let err = parse_config_str("problem = \"gripper\"\n[optimizer]\nmax_iteration = 3").unwrap_err();
        match err {
            Error::ConfigValidation { key, reason } => {
                assert_eq!(key, "max_iteration");
                assert!(reason.contains("line 3"), "{reason}");
                assert!(reason.contains("`max_iterations`"), "{reason}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_config_str("problem = \"gripper\"\nbeta = = 3").unwrap_err() {
            Error::ConfigParse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 1);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn wrong_type_is_a_parse_error() {
        let err = parse_config_str("problem = \"gripper\"\nsteps = \"four\"").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn unknown_problem_is_rejected() {
        let c = parse_config_str("problem = \"griper\"").unwrap();
        match c.problem_spec().unwrap_err() {
            Error::ConfigValidation { key, reason } => {
                assert_eq!(key, "problem");
                assert!(reason.contains("`gripper`"), "{reason}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invalid_override_is_rejected() {
        let c = parse_config_str("problem = \"gripper\"\nnu = 0.7").unwrap();
        assert!(matches!(c.problem_spec(), Err(Error::ConfigValidation { .. })));
    }

    #[test]
    fn resolved_config_round_trips() {
        for family in Family::ALL {
            let mut c = RunConfig::for_family(family);
            c.fixed_bcs = Some(true);
            c.move_theta_deg = Some(2.0);
            let resolved = c.resolved().unwrap();
            let text = resolved.to_toml().unwrap();
            let back = parse_config_str(&text).unwrap();
            assert_eq!(back, resolved, "{}", family.name());
            assert_eq!(back.problem_spec().unwrap(), c.problem_spec().unwrap());
        }
    }

    #[test]
    fn wing_layout_is_configurable() {
        let c = parse_config_str("problem = \"morphing_wing\"\n[wing]\nfixed_support = [0.061, 0.009]").unwrap();
        let spec = c.problem_spec().unwrap();
        assert!(spec.supports.contains(&[0.061, 0.009]));
        let c = parse_config_str("problem = \"gripper\"\n[wing]\nfixed_support = [0.061, 0.009]").unwrap();
        assert!(c.problem_spec().is_err());
    }

    #[test]
    fn rebase_keeps_absolute_paths() {
        let mut c = parse_config_str("problem = \"gripper\"\nmesh = \"m.mesh\"\noutput_dir = \"/tmp/x\"").unwrap();
        c.rebase(Path::new("/data"));
        assert_eq!(c.mesh_path(), Some(Path::new("/data/m.mesh")));
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x"));
    }
}
