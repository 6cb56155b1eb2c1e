//! Command-line options and the optional TOML config file they override.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cervprep::inpaint::{SolverConfig, SolverMethod};
use cervprep::kmeans::{KmeansConfig, KmeansInit};
use cervprep::pipeline::PipelineConfig;
use cervprep::roi::Connectivity;
use cervprep::specular::{SeShape, SpecularConfig, StructuringElement};
use cervprep::Execution;
use clap::{Args, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeArg {
    Square,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Jacobi,
    Gs,
    Sor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Random,
    Kmeanspp,
}

/// Pipeline options shared by `run` and `batch`. Every field is optional so
/// that unset flags fall through to the config file, then to defaults.
#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PipelineArgs {
    /// TOML file with any of these options; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// White cutoff applied to each of R, G and B.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..))]
    pub threshold: Option<u8>,
    #[arg(long)]
    pub dilate_radius: Option<usize>,
    #[arg(long, value_enum)]
    pub se: Option<SeArg>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Number of K-means clusters.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kmeans_max_iters: Option<usize>,
    #[arg(long, value_parser = ["4", "8"])]
    #[serde(default, deserialize_with = "de_connectivity")]
    pub connectivity: Option<String>,
    /// Crop margin around the ROI, pixels.
    #[arg(long)]
    pub margin: Option<usize>,
    /// Cluster on (L, a, b) rather than (a, b).
    #[arg(long)]
    #[serde(default)]
    pub use_l: bool,
    #[arg(long)]
    #[serde(default)]
    pub grayscale_inpaint: bool,
    #[arg(long)]
    #[serde(default)]
    pub no_subsample: bool,
    #[arg(long)]
    #[serde(default)]
    pub emit_intermediates: bool,
    /// Run every stage on the calling thread.
    #[arg(long)]
    #[serde(default)]
    pub sequential: bool,
}

fn de_connectivity<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u8),
        Str(String),
    }
    Ok(Some(match Raw::deserialize(d)? {
        Raw::Int(n) => n.to_string(),
        Raw::Str(s) => s,
    }))
}

impl PipelineArgs {
    /// Flags win over `file`.
    fn overlay(self, file: PipelineArgs) -> PipelineArgs {
        PipelineArgs {
            config: self.config,
            out: self.out.or(file.out),
            threshold: self.threshold.or(file.threshold),
            dilate_radius: self.dilate_radius.or(file.dilate_radius),
            se: self.se.or(file.se),
            solver: self.solver.or(file.solver),
            omega: self.omega.or(file.omega),
            tol: self.tol.or(file.tol),
            max_iters: self.max_iters.or(file.max_iters),
            k: self.k.or(file.k),
            init: self.init.or(file.init),
            seed: self.seed.or(file.seed),
            kmeans_max_iters: self.kmeans_max_iters.or(file.kmeans_max_iters),
            connectivity: self.connectivity.or(file.connectivity),
            margin: self.margin.or(file.margin),
            use_l: self.use_l || file.use_l,
            grayscale_inpaint: self.grayscale_inpaint || file.grayscale_inpaint,
            no_subsample: self.no_subsample || file.no_subsample,
            emit_intermediates: self.emit_intermediates || file.emit_intermediates,
            sequential: self.sequential || file.sequential,
        }
    }

    /// Merges the config file (if any) and builds a validated pipeline config.
    pub fn resolve(self) -> Result<PipelineConfig> {
        let merged = match &self.config {
            Some(path) => self.clone().overlay(read_config(path)?),
            None => self,
        };
        merged.into_pipeline_config()
    }

    fn into_pipeline_config(self) -> Result<PipelineConfig> {
        let d = PipelineConfig::default();
        let exec = if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        };
        let se = StructuringElement::new(
            match self.se {
                Some(SeArg::Disk) => SeShape::Disk,
                Some(SeArg::Square) => SeShape::Square,
                None => d.specular.se.shape,
            },
            self.dilate_radius.unwrap_or(d.specular.se.radius),
        )?;
        let solver = SolverConfig {
            method: match self.solver {
                Some(SolverArg::Jacobi) => SolverMethod::Jacobi,
                Some(SolverArg::Gs) => SolverMethod::GaussSeidel,
                Some(SolverArg::Sor) => SolverMethod::Sor,
                None => d.solver.method,
            },
            omega: self.omega.unwrap_or(d.solver.omega),
            tol: self.tol.unwrap_or(d.solver.tol),
            max_iters: self.max_iters.unwrap_or(d.solver.max_iters),
            exec,
        };
        let kmeans = KmeansConfig {
            k: self.k.unwrap_or(d.kmeans.k),
            init: match self.init {
                Some(InitArg::Random) => KmeansInit::RandomPoints,
                Some(InitArg::Kmeanspp) => KmeansInit::KmeansPlusPlus,
                None => d.kmeans.init,
            },
            seed: self.seed.unwrap_or(d.kmeans.seed),
            max_iters: self.kmeans_max_iters.unwrap_or(d.kmeans.max_iters),
            exec,
        };
        let connectivity = match self.connectivity.as_deref() {
            None => d.connectivity,
            Some("4") => Connectivity::Four,
            Some("8") => Connectivity::Eight,
            Some(other) => bail!("connectivity must be 4 or 8, got {other}"),
        };
        let cfg = PipelineConfig {
            specular: SpecularConfig {
                threshold: self.threshold.unwrap_or(d.specular.threshold),
                se,
            },
            solver,
            kmeans,
            connectivity,
            crop_margin: self.margin.unwrap_or(d.crop_margin),
            use_lightness: self.use_l,
            grayscale_inpaint: self.grayscale_inpaint,
            subsample: !self.no_subsample,
            emit_intermediates: self.emit_intermediates,
            output_dir: self.out.unwrap_or(d.output_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> Result<PipelineArgs> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library() {
        let cfg = PipelineArgs::default().resolve().unwrap();
        assert_eq!(cfg.with_execution(Execution::default()), PipelineConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prep.toml");
        fs::write(&path, "threshold = 200\nsolver = \"gs\"\nconnectivity = 4\nmargin = 3\nuse-l = true\n").unwrap();
        let args = PipelineArgs {
            config: Some(path),
            threshold: Some(230),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.specular.threshold, 230);
        assert_eq!(cfg.solver.method, SolverMethod::GaussSeidel);
        assert_eq!(cfg.connectivity, Connectivity::Four);
        assert_eq!(cfg.crop_margin, 3);
        assert!(cfg.use_lightness);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "thresh = 3\n").unwrap();
        assert!(PipelineArgs { config: Some(path), ..Default::default() }.resolve().is_err());
        assert!(PipelineArgs { omega: Some(2.5), ..Default::default() }.resolve().is_err());
        assert!(PipelineArgs { k: Some(1), ..Default::default() }.resolve().is_err());
    }
}
