//! Imputation methods as interchangeable strategies.
//!
//! Each method implements [`Imputer`] and is built by name through an
//! [`ImputerRegistry`]. Composite names of the form `a+b` resolve to a
//! [`HybridImputer`] over the two named components.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hybrid::hybrid_impute;
use crate::model::{BlockTable, Imputation};
use crate::sm::sm_impute;
use crate::smvnmf::smvnmf_impute;
use crate::spatial::{idw_impute, sknn_impute};

/// One table to fill, a seed, and a memo of component results so composite
/// methods reuse the predictions of their parts.
pub struct ImputeContext<'a> {
    table: &'a BlockTable,
    seed: u64,
    memo: Mutex<HashMap<String, Arc<Result<Imputation>>>>,
}

impl<'a> ImputeContext<'a> {
    pub fn new(table: &'a BlockTable, seed: u64) -> Self {
        Self { table, seed, memo: Mutex::new(HashMap::new()) }
    }

    pub fn table(&self) -> &'a BlockTable {
        self.table
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Runs `imputer` once per context; later calls return the stored result.
    pub fn run(&self, imputer: &dyn Imputer) -> Result<Imputation> {
        if let Some(hit) = self.memo.lock().unwrap().get(imputer.name()) {
            return (**hit).clone();
        }
        let out = imputer.impute(self);
        self.memo.lock().unwrap().insert(imputer.name().to_string(), Arc::new(out.clone()));
        out
    }
}

pub trait Imputer: Send + Sync {
    /// Registry name; also the memo key, so it must identify the configuration.
    fn name(&self) -> &str;
    fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation>;
}

pub struct SmImputer {
    config: RunConfig,
}

impl Imputer for SmImputer {
    fn name(&self) -> &str {
        "sm"
    }

    fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation> {
        sm_impute(ctx.table(), &self.config.clustering, &self.config.classifier, ctx.seed())
    }
}

pub struct IdwImputer {
    config: crate::spatial::IdwConfig,
}

impl Imputer for IdwImputer {
    fn name(&self) -> &str {
        "idw"
    }

    fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation> {
        idw_impute(ctx.table(), &self.config)
    }
}

pub struct SknnImputer {
    config: crate::spatial::SknnConfig,
}

impl Imputer for SknnImputer {
    fn name(&self) -> &str {
        "sknn"
    }

    fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation> {
        sknn_impute(ctx.table(), &self.config)
    }
}

pub struct SmvNmfImputer {
    config: crate::smvnmf::NmfConfig,
}

impl Imputer for SmvNmfImputer {
    fn name(&self) -> &str {
        "smvnmf"
    }

    fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation> {
        smvnmf_impute(ctx.table(), &self.config, ctx.seed())
    }
}

/// `alpha · first + (1 − alpha) · second`.
pub struct HybridImputer {
    name: String,
    first: Arc<dyn Imputer>,
    second: Arc<dyn Imputer>,
    alpha: f64,
}

impl HybridImputer {
    pub fn new(first: Arc<dyn Imputer>, second: Arc<dyn Imputer>, alpha: f64) -> Self {
        Self { name: format!("{}+{}", first.name(), second.name()), first, second, alpha }
    }
}

impl Imputer for HybridImputer {
    fn name(&self) -> &str {
        &self.name
    }

    fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation> {
        let a = ctx.run(self.first.as_ref())?;
        let b = ctx.run(self.second.as_ref())?;
        hybrid_impute(&a, &b, self.alpha)
    }
}

type Builder = Box<dyn Fn(&RunConfig) -> Arc<dyn Imputer> + Send + Sync>;

/// Named imputation methods.
pub struct ImputerRegistry {
    builders: BTreeMap<String, Builder>,
}

/// The methods compared in the benchmark, in report order.
pub const STANDARD_METHODS: [&str; 7] = ["idw", "sknn", "sm", "sm+idw", "sm+sknn", "sm+smvnmf", "smvnmf"];

impl Default for ImputerRegistry {
    fn default() -> Self {
        let mut r = Self { builders: BTreeMap::new() };
        r.register("sm", |c| Arc::new(SmImputer { config: c.clone() }));
        r.register("idw", |c| Arc::new(IdwImputer { config: c.idw.clone() }));
        r.register("sknn", |c| Arc::new(SknnImputer { config: c.sknn.clone() }));
        r.register("smvnmf", |c| Arc::new(SmvNmfImputer { config: c.smvnmf.clone() }));
        r
    }
}

impl ImputerRegistry {
    pub fn register<F>(&mut self, name: &str, build: F)
    where
        F: Fn(&RunConfig) -> Arc<dyn Imputer> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Box::new(build));
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }

    /// Builds a registered method, or a hybrid for `a+b`.
    pub fn build(&self, name: &str, config: &RunConfig) -> Result<Arc<dyn Imputer>> {
        let name = name.trim().to_ascii_lowercase();
        if let Some(b) = self.builders.get(&name) {
            return Ok(b(config));
        }
        if let Some((a, b)) = name.split_once('+') {
            let first = self.build(a, config)?;
            let second = self.build(b, config)?;
            return Ok(Arc::new(HybridImputer::new(first, second, config.hybrid.alpha)));
        }
        Err(Error::UnknownStrategy { kind: "method", name })
    }
}
