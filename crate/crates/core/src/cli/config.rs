//! Experiment configuration in the `key = value` form.
//!
//! ```text
//! kind        = SK_ISING
//! beta        = 0.25
//! h           = 0.3
//! n           = 8, 12, 16, 20
//! k           = 2
//! n_disorders = 2000
//! backend     = exact
//! seed        = 1
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::MAX_MARGINAL_SITES;
use crate::models::config::{model_spec_from_kv, MODEL_KEYS};
use crate::models::{GardnerSize, KeyValues, ModelSpec};
use crate::rs::SolverOptions;
use crate::sampler::ChainConfig;
use crate::verify::{Backend, PredictionForm, TestFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RsSolve,
    LiSweep,
    Concentration,
    DecomposeGap,
    Projection,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RsSolve => "rs-solve",
            ExperimentKind::LiSweep => "li-sweep",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::DecomposeGap => "decompose-gap",
            ExperimentKind::Projection => "projection",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "rs-solve" => ExperimentKind::RsSolve,
            "li-sweep" => ExperimentKind::LiSweep,
            "concentration" => ExperimentKind::Concentration,
            "decompose-gap" => ExperimentKind::DecomposeGap,
            "projection" => ExperimentKind::Projection,
            other => return Err(Error::param("experiment", format!("unknown experiment `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Exact,
    Mcmc,
    Auto,
}

impl std::str::FromStr for BackendChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "exact" => BackendChoice::Exact,
            "mcmc" => BackendChoice::Mcmc,
            "auto" => BackendChoice::Auto,
            other => return Err(Error::param("backend", format!("expected exact, mcmc or auto, got `{other}`"))),
        })
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub spec: ModelSpec,
    pub ns: Vec<usize>,
    pub k: usize,
    pub p: u32,
    pub n_disorders: usize,
    pub form: PredictionForm,
    pub backend: BackendChoice,
    pub chain: ChainConfig,
    pub quad_order: usize,
    pub solver: SolverOptions,
    pub master_seed: u64,
    pub test_functions: Vec<TestFunction>,
    /// Parameters outside the declared validated zone.
    pub exploratory: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub workers: Option<usize>,
}

const EXPERIMENT_KEYS: &[&str] = &[
    "experiment",
    "n",
    "k",
    "p",
    "n_disorders",
    "form",
    "backend",
    "n_sweeps",
    "burn_in",
    "thin",
    "proposal_std",
    "quad_order",
    "tol",
    "max_iter",
    "damping",
    "q0",
    "rho0",
    "seed",
    "test_functions",
    "zone",
    "out",
    "workers",
];

pub const MAX_DISORDERS: usize = 10_000_000;
pub const MAX_QUAD_ORDER: usize = 400;
pub const MAX_P: u32 = 16;

fn at(kv: &KeyValues, key: &str, message: impl Into<String>) -> Error {
    let line = kv.line_of(key);
    let message = message.into();
    if line > 0 {
        Error::Config { line, message: format!("`{key}`: {message}") }
    } else {
        Error::ConfigField { field: key.to_string(), message }
    }
}

impl ExperimentConfig {
    /// Parses and range-checks a document for the `expected` experiment.
    pub fn parse(text: &str, expected: ExperimentKind) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let allowed: Vec<&str> = MODEL_KEYS.iter().chain(EXPERIMENT_KEYS).copied().collect();
        kv.reject_unknown(&allowed)?;
        if let Some(named) = kv.get::<ExperimentKind>("experiment")? {
            if named != expected {
                return Err(at(&kv, "experiment", format!("file is for {}, not {}", named.name(), expected.name())));
            }
        }
        let spec = model_spec_from_kv(&kv)?;

        let ns: Vec<usize> = kv.get_list("n")?.unwrap_or_default();
        let needs_sizes = expected != ExperimentKind::RsSolve || matches!(spec.size, Some(GardnerSize::Fixed(_)));
        if needs_sizes && ns.is_empty() {
            return Err(at(&kv, "n", "missing system sizes"));
        }
        if ns.iter().any(|&n| n < 2) {
            return Err(at(&kv, "n", "every N must be at least 2"));
        }
        let k: usize = kv.get_or("k", 1)?;
        if k == 0 || k > MAX_MARGINAL_SITES {
            return Err(at(&kv, "k", format!("must lie in 1..={MAX_MARGINAL_SITES}")));
        }
        if expected != ExperimentKind::RsSolve && ns.iter().any(|&n| n <= k) {
            return Err(at(&kv, "n", format!("every N must exceed k = {k}")));
        }
        let p: u32 = kv.get_or("p", 1)?;
        if p == 0 || p > MAX_P {
            return Err(at(&kv, "p", format!("must lie in 1..={MAX_P}")));
        }
        let n_disorders: usize = kv.get_or("n_disorders", 100)?;
        if !(2..=MAX_DISORDERS).contains(&n_disorders) {
            return Err(at(&kv, "n_disorders", format!("must lie in 2..={MAX_DISORDERS}")));
        }
        let form: PredictionForm = kv.get_or("form", PredictionForm::Partial)?;
        let backend: BackendChoice = kv.get_or("backend", BackendChoice::Auto)?;

        let defaults = ChainConfig::default();
        let chain = ChainConfig {
            n_sweeps: kv.get_or("n_sweeps", defaults.n_sweeps)?,
            burn_in: kv.get_or("burn_in", defaults.burn_in)?,
            thin: kv.get_or("thin", defaults.thin)?,
            proposal_std: kv.get_or("proposal_std", defaults.proposal_std)?,
            seed: 0,
        };
        chain.validate().map_err(|e| match &e {
            Error::InvalidParameter { name, .. } => at(&kv, name, e.to_string()),
            _ => e,
        })?;

        let quad_order: usize = kv.get_or("quad_order", crate::rs::DEFAULT_ORDER)?;
        if !(2..=MAX_QUAD_ORDER).contains(&quad_order) {
            return Err(at(&kv, "quad_order", format!("must lie in 2..={MAX_QUAD_ORDER}")));
        }
        let sd = SolverOptions::default();
        let solver = SolverOptions {
            tol: kv.get_or("tol", sd.tol)?,
            max_iter: kv.get_or("max_iter", sd.max_iter)?,
            damping: kv.get_or("damping", sd.damping)?,
            q0: kv.get_or("q0", sd.q0)?,
            rho0: kv.get_or("rho0", sd.rho0)?,
        };
        if !(solver.tol > 0.0 && solver.tol < 1.0) {
            return Err(at(&kv, "tol", "must lie in (0, 1)"));
        }
        if solver.max_iter == 0 {
            return Err(at(&kv, "max_iter", "must be positive"));
        }
        if !(solver.damping > 0.0 && solver.damping <= 1.0) {
            return Err(at(&kv, "damping", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&solver.q0) {
            return Err(at(&kv, "q0", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&solver.rho0) {
            return Err(at(&kv, "rho0", "must lie in [0, 1]"));
        }

        let master_seed: u64 = kv.get_or("seed", 0)?;
        let test_functions: Vec<TestFunction> = kv.get_list("test_functions")?.unwrap_or_else(TestFunction::battery);
        if test_functions.is_empty() {
            return Err(at(&kv, "test_functions", "need at least one test function"));
        }
        let exploratory = match kv.raw("zone").map(str::trim) {
            None | Some("validated") => false,
            Some("exploratory") => true,
            Some(other) => return Err(at(&kv, "zone", format!("expected validated or exploratory, got `{other}`"))),
        };
        let workers: Option<usize> = kv.get("workers")?;
        if workers == Some(0) {
            return Err(at(&kv, "workers", "must be positive"));
        }
        let out = kv.raw("out").map(PathBuf::from);

        let cfg = Self {
            experiment: expected,
            spec,
            ns,
            k,
            p,
            n_disorders,
            form,
            backend,
            chain,
            quad_order,
            solver,
            master_seed,
            test_functions,
            exploratory,
            out,
            workers,
        };
        cfg.check_feasible().map_err(|e| at(&kv, "backend", e.to_string()))?;
        Ok(cfg)
    }

    pub fn sweep_backend(&self) -> Backend {
        match self.backend {
            BackendChoice::Exact => Backend::Exact,
            BackendChoice::Mcmc => Backend::Mcmc(self.chain),
            BackendChoice::Auto => Backend::Auto(self.chain),
        }
    }

    /// Backend feasibility for every size, before anything runs.
    pub fn check_feasible(&self) -> Result<()> {
        let kind = self.spec.kind;
        match self.experiment {
            ExperimentKind::RsSolve => Ok(()),
            ExperimentKind::DecomposeGap | ExperimentKind::Projection => {
                for &n in &self.ns {
                    Backend::Exact.resolve(kind, n)?;
                }
                if self.backend == BackendChoice::Mcmc {
                    return Err(Error::Unsupported(format!("{} runs on the exact backend only", self.experiment.name())));
                }
                Ok(())
            }
            ExperimentKind::LiSweep | ExperimentKind::Concentration => {
                for &n in &self.ns {
                    self.sweep_backend().resolve(kind, n)?;
                }
                Ok(())
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON of everything that affects results.
    pub fn hash(&self) -> String {
        let doc = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(doc.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LI: &str = "kind = SK_ISING\nbeta = 0.25\nh = 0.3\nn = 8, 12\nk = 2\nn_disorders = 20\nbackend = exact\n";

    #[test]
    fn parses_sweep() {
        let c = ExperimentConfig::parse(LI, ExperimentKind::LiSweep).unwrap();
        assert_eq!(c.ns, vec![8, 12]);
        assert_eq!(c.k, 2);
        assert_eq!(c.test_functions.len(), 5);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn errors_carry_lines() {
        let bad = LI.replace("beta = 0.25", "beta = -1");
        let e = ExperimentConfig::parse(&bad, ExperimentKind::LiSweep).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let bad = format!("{LI}k = 9\n").replace("k = 2\n", "");
        let e = ExperimentConfig::parse(&bad, ExperimentKind::LiSweep).unwrap_err().to_string();
        assert!(e.contains("line 7"), "{e}");
        let bad = format!("{LI}colour = red\n");
        assert!(ExperimentConfig::parse(&bad, ExperimentKind::LiSweep).is_err());
    }

    #[test]
    fn infeasible_backend_rejected() {
        let bad = LI.replace("n = 8, 12", "n = 8, 30");
        let e = ExperimentConfig::parse(&bad, ExperimentKind::LiSweep).unwrap_err().to_string();
        assert!(e.contains("line 7"), "{e}");
        let st = "kind = ST\nkappa = 2\nM = 4\nn = 8\nbackend = exact\n";
        assert!(ExperimentConfig::parse(st, ExperimentKind::LiSweep).is_err());
        assert!(ExperimentConfig::parse(&st.replace("exact", "auto"), ExperimentKind::LiSweep).is_ok());
    }

    #[test]
    fn experiment_key_must_match() {
        let doc = format!("experiment = projection\n{LI}");
        assert!(ExperimentConfig::parse(&doc, ExperimentKind::LiSweep).is_err());
        assert!(ExperimentConfig::parse(&doc, ExperimentKind::Projection).is_ok());
    }

    #[test]
    fn rs_solve_needs_no_sizes() {
        assert!(ExperimentConfig::parse("kind = SK\nbeta = 0.3\nh = 0.5\n", ExperimentKind::RsSolve).is_ok());
    }
}
