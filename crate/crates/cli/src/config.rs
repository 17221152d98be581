//! Experiment configuration files.
//!
//! A config is a TOML document with a top-level `experiment` name and optional
//! `[field]`, `[grid]`, `[solver]`, `[sweep]` and `[ergodic]` tables. Every key is
//! optional; missing keys take the defaults of the chosen experiment (see
//! [`Experiment::defaults`]). Unknown keys are rejected.
//!
//! ```toml
//! experiment = "channel2d"
//! output_dir = "out/channel"
//! workers = 2
//!
//! [field]
//! kind = "channel"
//! delta = 0.15
//!
//! [grid]
//! n_psi = 128
//! n_theta = 128
//!
//! [solver]
//! tol = 1e-10
//! preconditioner = "jacobi"
//!
//! [sweep]
//! eps_list = [0.1, 0.05, 0.02]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use fiberheat::field::{AnnulusLabel, Envelope, FieldSpec, IotaProfile, Perturbation};
use fiberheat::solver::{Preconditioner, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "FIBERHEAT_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Annulus2d,
    Channel2d,
    TorusIntegrable,
    TorusPerturbed,
    DiophantineScan,
    MdeDemo,
    NonintegVolume,
    GeometrySelftest,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Annulus2d,
        Experiment::Channel2d,
        Experiment::TorusIntegrable,
        Experiment::TorusPerturbed,
        Experiment::DiophantineScan,
        Experiment::MdeDemo,
        Experiment::NonintegVolume,
        Experiment::GeometrySelftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Annulus2d => "annulus2d",
            Experiment::Channel2d => "channel2d",
            Experiment::TorusIntegrable => "torus-integrable",
            Experiment::TorusPerturbed => "torus-perturbed",
            Experiment::DiophantineScan => "diophantine-scan",
            Experiment::MdeDemo => "mde-demo",
            Experiment::NonintegVolume => "noninteg-volume",
            Experiment::GeometrySelftest => "geometry-selftest",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Annulus2d => "exactness against the logarithmic profile on the annulus",
            Experiment::Channel2d => "H1 error rate in eps on the wavy channel",
            Experiment::TorusIntegrable => "H1 error rate in eps on the integrable torus",
            Experiment::TorusPerturbed => "error norms on the perturbed torus over amplitudes and exponents",
            Experiment::DiophantineScan => "excluded measures and ergodicity constants for a rotational transform",
            Experiment::MdeDemo => "spectral solution of the surface equation and resonance detection",
            Experiment::NonintegVolume => "non-integrability volume on integrable and perturbed tori",
            Experiment::GeometrySelftest => "co-area identities, operator symmetry, and flux constancy",
        }
    }

    /// The fully populated configuration used when a key is absent.
    pub fn defaults(self) -> Resolved {
        let mut r = Resolved {
            experiment: self,
            output_dir: PathBuf::new(),
            workers: 1,
            field: FieldSection::default(),
            grid: GridSection::default(),
            solver: SolverSection::default(),
            sweep: SweepSection::default(),
            ergodic: ErgodicSection::default(),
        };
        let torus = |r: &mut Resolved, n: [usize; 3]| {
            r.field.kind = Some("torus-integrable".into());
            r.grid.n_psi = Some(n[0]);
            r.grid.n_theta = Some(n[1]);
            r.grid.n_phi = Some(n[2]);
        };
        match self {
            Experiment::Annulus2d => {
                r.field.kind = Some("annulus".into());
                r.sweep.eps_list = Some(vec![1.0, 0.1, 0.01]);
                r.sweep.resolutions = Some(vec![128, 256]);
            }
            Experiment::Channel2d => {
                r.field.kind = Some("channel".into());
                r.grid.n_psi = Some(256);
                r.grid.n_theta = Some(256);
                r.sweep.eps_list = Some(vec![1e-1, 5e-2, 2e-2, 1e-2, 5e-3]);
            }
            Experiment::TorusIntegrable => {
                torus(&mut r, [48, 64, 64]);
                r.sweep.eps_list = Some(vec![1e-1, 3e-2, 1e-2, 3e-3]);
            }
            Experiment::TorusPerturbed => {
                torus(&mut r, [32, 48, 48]);
                r.field.kind = Some("torus-perturbed".into());
                r.sweep.eps_list = Some(vec![1e-1, 3e-2, 1e-2, 3e-3]);
                r.sweep.amplitudes = Some(vec![0.05, 0.1, 0.2]);
                r.sweep.a_exponents = Some(vec![0.5, 1.0]);
            }
            Experiment::DiophantineScan => {
                r.field.kind = Some("torus-integrable".into());
            }
            Experiment::MdeDemo => {
                r.field.kind = Some("torus-integrable".into());
                r.field.iota = Some(vec![GOLDEN]);
                r.grid.n_theta = Some(32);
                r.grid.n_phi = Some(32);
            }
            Experiment::NonintegVolume => {
                torus(&mut r, [48, 64, 64]);
                r.sweep.eps_list = Some(vec![1e-2, 1e-3, 1e-4]);
                r.sweep.amplitudes = Some(vec![0.05, 0.1, 0.2]);
            }
            Experiment::GeometrySelftest => {
                r.sweep.eps_list = Some(vec![1.0, 1e-2, 1e-5]);
                r.solver.tol = Some(1e-9);
                r.sweep.resolutions = Some(vec![65, 129]);
            }
        }
        r
    }
}

pub const GOLDEN: f64 = 1.618_033_988_749_895;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: String,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub ergodic: ErgodicSection,
}

/// `kind` is one of `annulus`, `channel`, `torus-integrable`, `torus-perturbed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub kind: Option<String>,
    pub psi_min: Option<f64>,
    pub psi_max: Option<f64>,
    /// Annulus label: `radius` (`psi = r`) or `half-square` (`psi = r^2 / 2`).
    pub label: Option<String>,
    pub delta: Option<f64>,
    pub major_radius: Option<f64>,
    /// Polynomial coefficients of `iota(psi)`, constant term first.
    pub iota: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub a_exponent: Option<f64>,
    pub poloidal: Option<i32>,
    pub toroidal: Option<i32>,
    /// `boundary` or `origin`.
    pub envelope: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_psi: Option<usize>,
    pub n_theta: Option<usize>,
    pub n_phi: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    /// `jacobi` or `sgs`.
    pub preconditioner: Option<String>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eps_list: Option<Vec<f64>>,
    pub t_minus: Option<f64>,
    pub t_plus: Option<f64>,
    /// Square grid sizes for refinement studies.
    pub resolutions: Option<Vec<usize>>,
    pub amplitudes: Option<Vec<f64>>,
    pub a_exponents: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicSection {
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    /// Mode cutoff `K`.
    pub cutoff: Option<usize>,
    pub m_list: Option<Vec<f64>>,
    /// Surface used by the surface-equation demo.
    pub psi: Option<f64>,
    /// Number of deterministic sources in the surface-equation demo.
    pub sources: Option<usize>,
}

/// A validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub field: FieldSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub ergodic: ErgodicSection,
}

/// Parsed config together with the hash of its source text.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub resolved: Resolved,
    pub source_sha256: String,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )+
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let experiment = Experiment::from_name(&raw.experiment).ok_or_else(|| {
            CliError::Config(format!(
                "experiment: unknown name '{}' (see list-experiments)",
                raw.experiment
            ))
        })?;
        let mut r = experiment.defaults();
        overlay!(r.field, raw.field, kind, psi_min, psi_max, label, delta, major_radius, iota, amplitude, a_exponent, poloidal, toroidal, envelope);
        overlay!(r.grid, raw.grid, n_psi, n_theta, n_phi);
        overlay!(r.solver, raw.solver, tol, preconditioner, max_iterations);
        overlay!(r.sweep, raw.sweep, eps_list, t_minus, t_plus, resolutions, amplitudes, a_exponents);
        overlay!(r.ergodic, raw.ergodic, gamma, c, cutoff, m_list, psi, sources);
        r.workers = raw.workers.unwrap_or(1);
        r.output_dir = match raw.output_dir {
            Some(p) => p,
            None => default_output_root().join(experiment.name()),
        };
        let cfg = ExperimentConfig {
            resolved: r,
            source_sha256: hex_digest(text.as_bytes()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let r = &self.resolved;
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if r.workers == 0 {
            return bad("workers", "must be at least 1".into());
        }
        if let Some(eps) = &r.sweep.eps_list {
            if eps.is_empty() {
                return bad("sweep.eps_list", "must not be empty".into());
            }
            if let Some(v) = eps.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return bad("sweep.eps_list", format!("entry {v} outside (0, 1]"));
            }
            if let Some(w) = eps.windows(2).find(|w| w[1] >= w[0]) {
                return bad(
                    "sweep.eps_list",
                    format!("must be sorted strictly descending ({} then {})", w[0], w[1]),
                );
            }
        }
        if let Some(tol) = r.solver.tol {
            if !(tol > 0.0 && tol < 1.0) {
                return bad("solver.tol", format!("{tol} outside (0, 1)"));
            }
        }
        if let Some(p) = &r.solver.preconditioner {
            if Preconditioner::from_name(p).is_none() {
                return bad("solver.preconditioner", format!("unknown '{p}' (jacobi, sgs)"));
            }
        }
        for (name, v) in [("grid.n_psi", r.grid.n_psi), ("grid.n_theta", r.grid.n_theta), ("grid.n_phi", r.grid.n_phi)] {
            if v == Some(0) {
                return bad(name, "must be positive".into());
            }
        }
        if let Some(res) = &r.sweep.resolutions {
            if res.is_empty() || res.iter().any(|&n| n < 3) {
                return bad("sweep.resolutions", "needs entries of at least 3".into());
            }
        }
        if let Some(a) = &r.sweep.amplitudes {
            if a.is_empty() || a.iter().any(|v| !(*v > 0.0)) {
                return bad("sweep.amplitudes", "needs positive entries".into());
            }
        }
        if let Some(a) = &r.sweep.a_exponents {
            if a.is_empty() || a.iter().any(|v| !(*v >= 0.5)) {
                return bad("sweep.a_exponents", "entries must be >= 1/2".into());
            }
        }
        if let Some(m) = &r.ergodic.m_list {
            if m.is_empty() || m.iter().any(|v| !(*v > 0.0)) {
                return bad("ergodic.m_list", "needs positive entries".into());
            }
        }
        if r.ergodic.cutoff == Some(0) {
            return bad("ergodic.cutoff", "must be at least 1".into());
        }
        if let Some(g) = r.ergodic.gamma {
            if !(g > 0.0) {
                return bad("ergodic.gamma", format!("{g} must be positive"));
            }
        }
        fiberheat::field::make_field(&self.field_spec()?)
            .map_err(|e| CliError::Config(format!("field: {e}")))?;
        check_writable(&r.output_dir)
    }

    pub fn t_bounds(&self) -> (f64, f64) {
        let s = &self.resolved.sweep;
        (s.t_minus.unwrap_or(0.0), s.t_plus.unwrap_or(1.0))
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.resolved.solver;
        SolverOptions {
            tol: s.tol.unwrap_or(SolverOptions::default().tol),
            max_iterations: s.max_iterations,
            preconditioner: s
                .preconditioner
                .as_deref()
                .and_then(Preconditioner::from_name)
                .unwrap_or(Preconditioner::Jacobi),
        }
    }

    /// Field specification from `[field]`, with the amplitude overridable by sweeps.
    pub fn field_spec(&self) -> Result<FieldSpec, CliError> {
        build_spec(&self.resolved.field, None)
    }

    pub fn field_spec_with(&self, amplitude: f64, a_exponent: f64) -> Result<FieldSpec, CliError> {
        build_spec(&self.resolved.field, Some((amplitude, a_exponent)))
    }

    /// Canonical text of the resolved configuration, recorded in the manifest.
    pub fn canonical(&self) -> String {
        let r = &self.resolved;
        let raw = RawConfig {
            experiment: r.experiment.name().into(),
            output_dir: None,
            workers: None,
            field: r.field.clone(),
            grid: r.grid.clone(),
            solver: r.solver.clone(),
            sweep: r.sweep.clone(),
            ergodic: r.ergodic.clone(),
        };
        toml::to_string(&raw).expect("config serializes")
    }
}

fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fiberheat-out"))
}

fn check_writable(dir: &Path) -> Result<(), CliError> {
    let mut probe = dir;
    while !probe.as_os_str().is_empty() && !probe.exists() {
        probe = probe.parent().unwrap_or(Path::new(""));
    }
    let probe = if probe.as_os_str().is_empty() { Path::new(".") } else { probe };
    match std::fs::metadata(probe) {
        Ok(m) if m.is_dir() && !m.permissions().readonly() => Ok(()),
        Ok(_) => Err(CliError::Config(format!(
            "output_dir: {} is not a writable directory",
            dir.display()
        ))),
        Err(e) => Err(CliError::Config(format!("output_dir: {}: {e}", dir.display()))),
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn build_spec(f: &FieldSection, sweep: Option<(f64, f64)>) -> Result<FieldSpec, CliError> {
    let kind = f.kind.as_deref().unwrap_or("torus-integrable");
    let bad = |field: &str, msg: String| CliError::Config(format!("field.{field}: {msg}"));
    match kind {
        "annulus" => {
            let label = match f.label.as_deref().unwrap_or("radius") {
                "radius" => AnnulusLabel::Radius,
                "half-square" => AnnulusLabel::HalfSquare,
                other => return Err(bad("label", format!("unknown '{other}' (radius, half-square)"))),
            };
            Ok(FieldSpec::Annulus {
                psi_min: f.psi_min.unwrap_or(1.0),
                psi_max: f.psi_max.unwrap_or(2.0),
                label,
            })
        }
        "channel" => Ok(FieldSpec::Channel {
            delta: f.delta.unwrap_or(0.15),
        }),
        "torus-integrable" | "torus-perturbed" => {
            let iota = IotaProfile::polynomial(f.iota.clone().unwrap_or_else(|| vec![0.0, 1.0]))
                .map_err(|e| bad("iota", e.to_string()))?;
            let perturbed = kind == "torus-perturbed" || sweep.is_some();
            let perturbation = perturbed.then(|| {
                let (amplitude, a_exponent) =
                    sweep.unwrap_or((f.amplitude.unwrap_or(0.1), f.a_exponent.unwrap_or(0.5)));
                Ok::<_, CliError>(Perturbation {
                    amplitude,
                    a_exponent,
                    poloidal: f.poloidal.unwrap_or(2),
                    toroidal: f.toroidal.unwrap_or(1),
                    envelope: match f.envelope.as_deref().unwrap_or("boundary") {
                        "boundary" => Envelope::Boundary,
                        "origin" => Envelope::Origin,
                        other => return Err(bad("envelope", format!("unknown '{other}' (boundary, origin)"))),
                    },
                })
            });
            Ok(FieldSpec::Torus {
                major_radius: f.major_radius.unwrap_or(3.0),
                psi_min: f.psi_min.unwrap_or(0.5),
                psi_max: f.psi_max.unwrap_or(1.5),
                iota,
                perturbation: perturbation.transpose()?,
            })
        }
        other => Err(bad(
            "kind",
            format!("unknown '{other}' (annulus, channel, torus-integrable, torus-perturbed)"),
        )),
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::parse(&format!("output_dir = \"/tmp/fiberheat-config-test\"\n{text}"))
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let c = parse("experiment = \"channel2d\"").unwrap();
        assert_eq!(c.resolved.grid.n_psi, Some(256));
        assert_eq!(c.resolved.sweep.eps_list.as_ref().unwrap().len(), 5);
        assert!(matches!(c.field_spec().unwrap(), FieldSpec::Channel { delta } if delta == 0.15));
    }

    #[test]
    fn unsorted_eps_names_the_field() {
        let err = parse("experiment = \"channel2d\"\n[sweep]\neps_list = [0.01, 0.1]").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("sweep.eps_list"));
    }

    #[test]
    fn nonpositive_eps_is_rejected() {
        let err = parse("experiment = \"channel2d\"\n[sweep]\neps_list = [0.1, 0.0]").unwrap_err();
        assert!(err.to_string().contains("sweep.eps_list"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("experiment = \"channel2d\"\n[grid]\nn_rho = 3").unwrap_err();
        assert!(err.to_string().contains("n_rho"));
        let err = parse("experiment = \"channel2d\"\ncolour = 1").unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let err = parse("experiment = \"nope\"").unwrap_err();
        assert!(err.to_string().starts_with("experiment"));
    }

    #[test]
    fn field_kinds_round_trip() {
        let c = parse("experiment = \"torus-perturbed\"\n[field]\namplitude = 0.2").unwrap();
        match c.field_spec().unwrap() {
            FieldSpec::Torus { perturbation: Some(p), .. } => assert_eq!(p.amplitude, 0.2),
            other => panic!("{other:?}"),
        }
        let err = parse("experiment = \"annulus2d\"\n[field]\nlabel = \"square\"").unwrap_err();
        assert!(err.to_string().contains("field.label"));
    }

    #[test]
    fn canonical_text_is_stable() {
        let a = parse("experiment = \"annulus2d\"").unwrap();
        let b = parse("experiment = \"annulus2d\"\nworkers = 3").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn every_experiment_has_a_name() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
    }
}
